//! Periodic 2D sampling grid emulating the plane, complex fields on it,
//! discrete Fourier transforms, multiplier application and Lebesgue norms.
//!
//! Conventions: physical samples sit at `x_j = (j - N/2) h` with `h = L/N`,
//! the frequency lattice is `xi_m = (2 pi / L) m` with `m` in `[-N/2, N/2)`,
//! and the transform pair is the unitary continuum normalization
//! `F f (xi) = (2 pi)^{-d/2} \int f(x) e^{-i x xi} dx` discretized by the
//! grid quadrature, so Plancherel holds between the two quadrature norms
//! without extra factors.

use crate::error::{Error, Result};
use crate::fft::{fft2_inplace, kahan_sum, Direction, KahanSum};
use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};

/// Lebesgue exponent in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Lp {
    Finite(f64),
    Infinity,
}

impl Lp {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::Config(format!("Lebesgue exponent must be >= 1, got {p}")));
        }
        Ok(Lp::Finite(p))
    }

    pub const INF: Lp = Lp::Infinity;

    pub fn value(self) -> f64 {
        match self {
            Lp::Finite(p) => p,
            Lp::Infinity => f64::INFINITY,
        }
    }

    /// Conjugate exponent: 1/p + 1/p' = 1.
    pub fn conjugate(self) -> Lp {
        match self {
            Lp::Infinity => Lp::Finite(1.0),
            Lp::Finite(p) if p == 1.0 => Lp::Infinity,
            Lp::Finite(p) => Lp::Finite(p / (p - 1.0)),
        }
    }
}

impl std::fmt::Display for Lp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lp::Finite(p) => write!(f, "{p}"),
            Lp::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Lp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(Lp::Infinity);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("cannot parse exponent '{s}'")))?;
        Lp::new(p)
    }
}

/// Periodic 2D grid: `n` samples per axis over a box of side `l`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    n: usize,
    l: f64,
}

/// Builds a grid spec; `n` must be a power of two >= 32 and `l > 0`.
pub fn create_grid(n: usize, l: f64) -> Result<GridSpec> {
    if !n.is_power_of_two() || n < 32 {
        return Err(Error::Config(format!(
            "grid size must be a power of two >= 32, got {n}"
        )));
    }
    if !(l > 0.0) || !l.is_finite() {
        return Err(Error::Config(format!("period length must be positive, got {l}")));
    }
    Ok(GridSpec { d: 2, n, l })
}

impl GridSpec {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Sample spacing h = L/N.
    pub fn spacing(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Frequency lattice spacing 2 pi / L.
    pub fn freq_spacing(&self) -> f64 {
        2.0 * PI / self.l
    }

    /// Nyquist frequency pi / h = pi N / L.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.l
    }

    /// Signed lattice integer for spectral index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Spectral index for a signed lattice integer.
    pub fn index_of_mode(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    /// Frequency coordinate along one axis for spectral index `i`.
    pub fn freq(&self, i: usize) -> f64 {
        self.freq_spacing() * self.mode(i) as f64
    }

    /// Frequency vector at spectral indices (i, j).
    pub fn xi(&self, i: usize, j: usize) -> [f64; 2] {
        [self.freq(i), self.freq(j)]
    }

    /// Physical coordinate for sample index `i` (box centered at the origin).
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.n as f64 / 2.0) * self.spacing()
    }

    /// Checks the Nyquist margin for dyadic scales up to `k_max`:
    /// pi N / L must exceed 2^{k_max + 1}.
    pub fn validate_scale(&self, k_max: u32) -> Result<()> {
        let needed = (2.0f64).powi(k_max as i32 + 1);
        if self.nyquist() <= needed {
            return Err(Error::Config(format!(
                "Nyquist frequency {:.6} does not exceed 2^{} = {:.1}; use a larger N or smaller L",
                self.nyquist(),
                k_max + 1,
                needed
            )));
        }
        Ok(())
    }

    /// Checks the wraparound bound L >= 2 (|t| + r_data) for propagation of
    /// data concentrated in a ball of radius `r_data`.
    pub fn validate_wraparound(&self, t: f64, r_data: f64) -> Result<()> {
        if self.l < 2.0 * (t.abs() + r_data) {
            return Err(Error::Validation(format!(
                "wraparound: L = {} < 2 (|t| + R) = {}",
                self.l,
                2.0 * (t.abs() + r_data)
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Physical,
    Spectral,
}

/// Complex function sampled on a [`GridSpec`], in physical or spectral form.
#[derive(Clone, Debug)]
pub struct Field {
    spec: GridSpec,
    repr: Representation,
    values: Array2<Complex64>,
}

impl Field {
    pub fn zeros(spec: GridSpec, repr: Representation) -> Field {
        Field {
            spec,
            repr,
            values: Array2::zeros((spec.n, spec.n)),
        }
    }

    /// Samples a physical-space function on the grid.
    pub fn from_physical_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> Complex64) -> Field {
        let values = Array2::from_shape_fn((spec.n, spec.n), |(i, j)| f([spec.x(i), spec.x(j)]));
        Field {
            spec,
            repr: Representation::Physical,
            values,
        }
    }

    /// Samples a spectral-space function on the frequency lattice.
    pub fn from_spectral_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> Complex64) -> Field {
        let values = Array2::from_shape_fn((spec.n, spec.n), |(i, j)| f(spec.xi(i, j)));
        Field {
            spec,
            repr: Representation::Spectral,
            values,
        }
    }

    pub fn from_values(spec: GridSpec, repr: Representation, values: Array2<Complex64>) -> Result<Field> {
        if values.dim() != (spec.n, spec.n) {
            return Err(Error::Usage(format!(
                "value array {:?} does not match grid {}",
                values.dim(),
                spec.n
            )));
        }
        Ok(Field { spec, repr, values })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    /// Forward or inverse transform; the representation must match the direction.
    pub fn transform(&self, dir: Direction) -> Result<Field> {
        match (self.repr, dir) {
            (Representation::Physical, Direction::Forward) => Ok(self.transform_unchecked(dir)),
            (Representation::Spectral, Direction::Inverse) => Ok(self.transform_unchecked(dir)),
            _ => Err(Error::Usage(format!(
                "cannot apply {:?} transform to a {:?} field",
                dir, self.repr
            ))),
        }
    }

    fn transform_unchecked(&self, dir: Direction) -> Field {
        let n = self.spec.n;
        let mut values = self.values.clone();
        match dir {
            Direction::Forward => {
                fft2_inplace(&mut values, Direction::Forward);
                let scale = self.spec.spacing().powi(2) / (2.0 * PI);
                for ((i, j), v) in values.indexed_iter_mut() {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    *v *= sign * scale;
                }
                Field {
                    spec: self.spec,
                    repr: Representation::Spectral,
                    values,
                }
            }
            Direction::Inverse => {
                let scale = self.spec.freq_spacing().powi(2) / (2.0 * PI);
                for ((i, j), v) in values.indexed_iter_mut() {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    *v *= sign * scale;
                }
                fft2_inplace(&mut values, Direction::Inverse);
                let _ = n;
                Field {
                    spec: self.spec,
                    repr: Representation::Physical,
                    values,
                }
            }
        }
    }

    /// Returns a physical-representation copy (identity if already physical).
    pub fn to_physical(&self) -> Field {
        match self.repr {
            Representation::Physical => self.clone(),
            Representation::Spectral => self.transform_unchecked(Direction::Inverse),
        }
    }

    /// Returns a spectral-representation copy (identity if already spectral).
    pub fn to_spectral(&self) -> Field {
        match self.repr {
            Representation::Spectral => self.clone(),
            Representation::Physical => self.transform_unchecked(Direction::Forward),
        }
    }

    /// Applies a Fourier multiplier `m(xi)`. The symbol must be finite at every
    /// lattice point; singular symbols must be supplied with their limit value.
    pub fn apply_multiplier(&self, m: impl Fn([f64; 2]) -> Complex64) -> Result<Field> {
        let mut out = self.to_spectral();
        let spec = self.spec;
        for ((i, j), v) in out.values.indexed_iter_mut() {
            let xi = spec.xi(i, j);
            let mv = m(xi);
            if !mv.re.is_finite() || !mv.im.is_finite() {
                return Err(Error::Numeric(format!(
                    "multiplier is not finite at xi = ({:.6}, {:.6})",
                    xi[0], xi[1]
                )));
            }
            *v *= mv;
        }
        Ok(out)
    }

    /// Grid Lebesgue norm `(h^d sum |f|^p)^{1/p}`; `p = inf` is the max norm.
    pub fn lebesgue_norm(&self, p: Lp) -> f64 {
        let phys = self.to_physical();
        match p {
            Lp::Infinity => phys.values.iter().map(|v| v.norm()).fold(0.0, f64::max),
            Lp::Finite(p) => {
                let h2 = self.spec.spacing().powi(2);
                if p == 2.0 {
                    let s = kahan_sum(phys.values.iter().map(|v| v.norm_sqr()));
                    (h2 * s).sqrt()
                } else {
                    let s = kahan_sum(phys.values.iter().map(|v| v.norm().powf(p)));
                    (h2 * s).powf(1.0 / p)
                }
            }
        }
    }

    /// L2 norm computed in whichever representation the field is already in
    /// (Plancherel makes the two quadratures agree).
    pub fn l2_norm(&self) -> f64 {
        let w = match self.repr {
            Representation::Physical => self.spec.spacing().powi(2),
            Representation::Spectral => self.spec.freq_spacing().powi(2),
        };
        (w * kahan_sum(self.values.iter().map(|v| v.norm_sqr()))).sqrt()
    }

    /// Pointwise linear combination `a*self + b*other` (same representation).
    pub fn axpby(&self, a: Complex64, other: &Field, b: Complex64) -> Result<Field> {
        if self.repr != other.repr || self.spec != other.spec {
            return Err(Error::Usage(
                "axpby requires matching grids and representations".into(),
            ));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(other.values.iter()) {
            *v = a * *v + b * *w;
        }
        Ok(out)
    }

    pub fn scale(&self, a: Complex64) -> Field {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= a;
        }
        out
    }

    /// Relative L2 distance between two fields in the same representation.
    pub fn rel_l2_distance(&self, other: &Field) -> f64 {
        let diff = self
            .axpby(Complex64::new(1.0, 0.0), other, Complex64::new(-1.0, 0.0))
            .expect("matching fields");
        let denom = other.l2_norm().max(1e-300);
        diff.l2_norm() / denom
    }

    /// Maximum pointwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Radius of the centered ball containing all but `eps` of the L2 mass.
    pub fn mass_radius(&self, eps: f64) -> f64 {
        let phys = self.to_physical();
        let n = self.spec.n;
        let mut by_radius: Vec<(f64, f64)> = Vec::with_capacity(n * n);
        for ((i, j), v) in phys.values.indexed_iter() {
            let r = (self.spec.x(i).powi(2) + self.spec.x(j).powi(2)).sqrt();
            by_radius.push((r, v.norm_sqr()));
        }
        by_radius.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = kahan_sum(by_radius.iter().map(|x| x.1));
        if total == 0.0 {
            return 0.0;
        }
        let mut acc = KahanSum::default();
        let target = total * (1.0 - eps);
        for (r, m) in &by_radius {
            acc.add(*m);
            if acc.value() >= target {
                return *r;
            }
        }
        by_radius.last().unwrap().0
    }

    /// Fraction of L2 mass outside the centered ball of radius `r`.
    pub fn mass_outside(&self, r: f64) -> f64 {
        let phys = self.to_physical();
        let mut outside = KahanSum::default();
        let mut total = KahanSum::default();
        for ((i, j), v) in phys.values.indexed_iter() {
            let m = v.norm_sqr();
            total.add(m);
            let rad = (self.spec.x(i).powi(2) + self.spec.x(j).powi(2)).sqrt();
            if rad > r {
                outside.add(m);
            }
        }
        if total.value() == 0.0 {
            0.0
        } else {
            outside.value() / total.value()
        }
    }
}

const FIELD_MAGIC: &[u8; 8] = b"HWFIELD1";

/// Writes the flat binary container: header (d, N, L, representation) followed
/// by row-major (re, im) f64 pairs, little endian.
pub fn write_field(field: &Field, w: &mut impl Write) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(field.spec.d as u32).to_le_bytes())?;
    w.write_all(&(field.spec.n as u64).to_le_bytes())?;
    w.write_all(&field.spec.l.to_le_bytes())?;
    let repr: u8 = match field.repr {
        Representation::Physical => 0,
        Representation::Spectral => 1,
    };
    w.write_all(&[repr])?;
    for v in field.values.iter() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<Field> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Usage("not a field container".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let d = u32::from_le_bytes(b4) as usize;
    if d != 2 {
        return Err(Error::Config(format!("unsupported dimension {d}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    let mut b1 = [0u8; 1];
    r.read_exact(&mut b1)?;
    let repr = match b1[0] {
        0 => Representation::Physical,
        1 => Representation::Spectral,
        x => return Err(Error::Usage(format!("unknown representation tag {x}"))),
    };
    let spec = create_grid(n, l)?;
    let mut values = Array2::zeros((n, n));
    for v in values.iter_mut() {
        r.read_exact(&mut b8)?;
        let re = f64::from_le_bytes(b8);
        r.read_exact(&mut b8)?;
        let im = f64::from_le_bytes(b8);
        *v = Complex64::new(re, im);
    }
    Ok(Field { spec, repr, values })
}

/// CSV dump (i, j, coordinate pair, re, im) for small grids.
pub fn field_to_csv(field: &Field, w: &mut impl Write) -> Result<()> {
    match field.repr {
        Representation::Physical => writeln!(w, "i,j,x1,x2,re,im")?,
        Representation::Spectral => writeln!(w, "i,j,xi1,xi2,re,im")?,
    }
    for ((i, j), v) in field.values.indexed_iter() {
        let (c1, c2) = match field.repr {
            Representation::Physical => (field.spec.x(i), field.spec.x(j)),
            Representation::Spectral => (field.spec.freq(i), field.spec.freq(j)),
        };
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            i, j, c1, c2, v.re, v.im
        )?;
    }
    Ok(())
}
