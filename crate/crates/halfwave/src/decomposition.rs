//! Frequency decompositions: Littlewood-Paley dyadic cutoffs psi_k with the
//! low-frequency cutoff rho, and for each scale k a family of equispaced
//! angular sectors chi_nu of aperture ~ 2^{-k/2} (the parabolic second
//! decomposition). Sector symbols are stored sparsely on their frequency
//! bounding box, which is what makes the per-sector norm sweeps affordable.

use crate::cutoffs::{mollifier, transition, wrap_angle};
use crate::error::{Error, Result};
use crate::fft::{fft2_inplace, kahan_sum, next_fast_size, Direction};
use crate::grid::{Field, GridSpec, Lp, Representation};
use ndarray::Array2;
use rustfft::num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Dyadic Littlewood-Paley family psi_0..psi_{k_max} plus rho.
///
/// psi_k(xi) = eta(|xi|/2^k) - eta(|xi|/2^{k-1}) telescopes exactly, so the
/// partition of unity holds to round-off on every lattice point.
#[derive(Clone, Copy, Debug)]
pub struct DyadicFamily {
    k_max: u32,
}

/// Builds the dyadic family, checking the grid's Nyquist margin.
pub fn build_dyadic(spec: &GridSpec, k_max: u32) -> Result<DyadicFamily> {
    spec.validate_scale(k_max)?;
    Ok(DyadicFamily { k_max })
}

impl DyadicFamily {
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// Radial profile of psi_k at radius r.
    pub fn psi_radial(&self, k: u32, r: f64) -> f64 {
        if k == 0 {
            transition(r)
        } else {
            let pk = (2.0f64).powi(k as i32);
            transition(r / pk) - transition(2.0 * r / pk)
        }
    }

    pub fn psi(&self, k: u32, xi: [f64; 2]) -> f64 {
        self.psi_radial(k, xi[0].hypot(xi[1]))
    }

    /// Low-frequency cutoff rho = eta(|xi|/2): 1 for |xi| <= 2, 0 for |xi| >= 4.
    pub fn rho(&self, xi: [f64; 2]) -> f64 {
        transition(0.5 * xi[0].hypot(xi[1]))
    }

    /// Sum of psi_0..psi_{k_max}; equals eta(|xi|/2^{k_max}) by telescoping.
    pub fn partition_sum(&self, xi: [f64; 2]) -> f64 {
        transition(xi[0].hypot(xi[1]) / (2.0f64).powi(self.k_max as i32))
    }

    /// Applies psi_k(D).
    pub fn project_shell(&self, f: &Field, k: u32) -> Result<Field> {
        f.apply_multiplier(|xi| Complex64::new(self.psi(k, xi), 0.0))
    }

    /// Applies rho(D).
    pub fn project_low(&self, f: &Field) -> Result<Field> {
        f.apply_multiplier(|xi| Complex64::new(self.rho(xi), 0.0))
    }
}

/// Inclusive bounding box in signed lattice-mode coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ModeBox {
    pub i_lo: i64,
    pub i_hi: i64,
    pub j_lo: i64,
    pub j_hi: i64,
}

impl ModeBox {
    pub fn width_i(&self) -> usize {
        (self.i_hi - self.i_lo) as usize + 1
    }

    pub fn width_j(&self) -> usize {
        (self.j_hi - self.j_lo) as usize + 1
    }
}

/// One angular sector symbol at scale k, tabulated on its bounding box.
#[derive(Clone, Debug)]
pub struct SectorSymbol {
    pub k: u32,
    pub nu_index: usize,
    pub bbox: ModeBox,
    /// Symbol values, indexed by (i - i_lo, j - j_lo).
    pub values: Array2<f64>,
}

/// Equispaced family of zero-homogeneous angular cutoffs at scale k.
///
/// Directions are theta_j = 2 pi j / M with M = ceil(2 pi 2^{k/2});
/// each chi_nu is a periodic mollifier bump of support radius 2 pi / M
/// divided by the sum over all translates, so the angular partition of
/// unity is exact up to floating point.
#[derive(Clone, Debug)]
pub struct SectorFamily {
    k: u32,
    count: usize,
    /// chi_nu psi_k on bounding boxes, one per direction.
    symbols: Vec<SectorSymbol>,
    /// chi_nu alone (no dyadic factor), restricted to the closed annulus
    /// 2^{k-1} <= |xi| <= 2^{k+1}; used where the input is already
    /// shell-localized and the raw angular cutoff is wanted.
    plain_symbols: Vec<SectorSymbol>,
}

/// Number of sector directions at scale k.
pub fn sector_count(k: u32) -> usize {
    (2.0 * PI * (2.0f64).powf(k as f64 / 2.0)).ceil() as usize
}

fn sector_width(k: u32) -> f64 {
    2.0 * PI / sector_count(k) as f64
}

/// Raw (unnormalized) angular bump for direction index `j` at scale `k`.
fn raw_bump(k: u32, j: usize, theta: f64) -> f64 {
    let m = sector_count(k) as f64;
    let w = 2.0 * PI / m;
    let center = 2.0 * PI * j as f64 / m;
    mollifier(wrap_angle(theta - center) / w)
}

/// Normalized angular cutoff chi_nu evaluated at angle theta.
/// Only the three nearest translates can be nonzero.
pub fn chi_angular(k: u32, nu_index: usize, theta: f64) -> f64 {
    let m = sector_count(k);
    let w = sector_width(k);
    let nearest = (wrap_angle(theta) / w).round() as i64;
    let mut total = 0.0;
    let mut mine = 0.0;
    for off in -1..=1 {
        let j = (nearest + off).rem_euclid(m as i64) as usize;
        let v = raw_bump(k, j, theta);
        total += v;
        if j == nu_index {
            mine = v;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        mine / total
    }
}

/// Builds the sector family at scale k on the given grid.
///
/// Validates that the grid resolves the sectors: the annulus-2^k arc of
/// angle 2^{-k/2} must contain at least 16 frequency lattice points.
pub fn build_sectors(spec: &GridSpec, k: u32, dyadic: &DyadicFamily) -> Result<SectorFamily> {
    if k == 0 || k > dyadic.k_max() {
        return Err(Error::Config(format!(
            "sector scale k = {k} outside 1..={}",
            dyadic.k_max()
        )));
    }
    spec.validate_scale(k)?;
    let dxi = spec.freq_spacing();
    let r_lo = (2.0f64).powi(k as i32 - 1);
    let r_hi = (2.0f64).powi(k as i32 + 1);
    let arc = (2.0f64).powf(-(k as f64) / 2.0);
    let mut in_arc = 0usize;
    let max_mode = (r_hi / dxi).ceil() as i64;
    for m1 in -max_mode..=max_mode {
        for m2 in -max_mode..=max_mode {
            let x = m1 as f64 * dxi;
            let y = m2 as f64 * dxi;
            let r = x.hypot(y);
            if r < r_lo || r > r_hi {
                continue;
            }
            let theta = y.atan2(x);
            if theta >= 0.0 && theta < arc {
                in_arc += 1;
            }
        }
    }
    if in_arc < 16 {
        let needed = spec.n() as f64 * (16.0 / in_arc.max(1) as f64).sqrt();
        return Err(Error::Config(format!(
            "scale k = {k}: only {in_arc} lattice points per sector arc (16 required); \
             increase N to about {:.0} or enlarge L",
            (needed / 2.0).ceil() * 2.0
        )));
    }

    let count = sector_count(k);
    let mut symbols = Vec::with_capacity(count);
    let mut plain_symbols = Vec::with_capacity(count);
    for nu in 0..count {
        symbols.push(tabulate_sector(spec, dyadic, k, nu, false));
        plain_symbols.push(tabulate_sector(spec, dyadic, k, nu, true));
    }
    Ok(SectorFamily {
        k,
        count,
        symbols,
        plain_symbols,
    })
}

fn tabulate_sector(
    spec: &GridSpec,
    dyadic: &DyadicFamily,
    k: u32,
    nu: usize,
    plain: bool,
) -> SectorSymbol {
    let dxi = spec.freq_spacing();
    let r_hi = (2.0f64).powi(k as i32 + 1);
    let r_lo = (2.0f64).powi(k as i32 - 1);
    let max_mode = (r_hi / dxi).floor() as i64;
    let w = sector_width(k);
    let center = 2.0 * PI * nu as f64 / sector_count(k) as f64;

    let mut entries: Vec<(i64, i64, f64)> = Vec::new();
    let (mut i_lo, mut i_hi, mut j_lo, mut j_hi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for m1 in -max_mode..=max_mode {
        for m2 in -max_mode..=max_mode {
            let x = m1 as f64 * dxi;
            let y = m2 as f64 * dxi;
            let r = x.hypot(y);
            if r == 0.0 || r > r_hi {
                continue;
            }
            let theta = y.atan2(x);
            if wrap_angle(theta - center).abs() >= w {
                continue;
            }
            let radial = if plain {
                if r < r_lo {
                    continue;
                }
                1.0
            } else {
                let v = dyadic.psi_radial(k, r);
                if v == 0.0 {
                    continue;
                }
                v
            };
            let ang = chi_angular(k, nu, theta);
            if ang == 0.0 {
                continue;
            }
            entries.push((m1, m2, ang * radial));
            i_lo = i_lo.min(m1);
            i_hi = i_hi.max(m1);
            j_lo = j_lo.min(m2);
            j_hi = j_hi.max(m2);
        }
    }
    if entries.is_empty() {
        let bbox = ModeBox {
            i_lo: 0,
            i_hi: 0,
            j_lo: 0,
            j_hi: 0,
        };
        return SectorSymbol {
            k,
            nu_index: nu,
            bbox,
            values: Array2::zeros((1, 1)),
        };
    }
    let bbox = ModeBox { i_lo, i_hi, j_lo, j_hi };
    let mut values = Array2::zeros((bbox.width_i(), bbox.width_j()));
    for (m1, m2, v) in entries {
        values[((m1 - i_lo) as usize, (m2 - j_lo) as usize)] = v;
    }
    SectorSymbol {
        k,
        nu_index: nu,
        bbox,
        values,
    }
}

impl SectorFamily {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn direction(&self, nu: usize) -> [f64; 2] {
        let theta = 2.0 * PI * nu as f64 / self.count as f64;
        [theta.cos(), theta.sin()]
    }

    pub fn angle(&self, nu: usize) -> f64 {
        2.0 * PI * nu as f64 / self.count as f64
    }

    /// Angular spacing between adjacent directions.
    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.count as f64
    }

    /// chi_nu evaluated at a frequency point (zero-homogeneous; at xi = 0 the
    /// symbol is defined as 1/M so partitions stay exact at the origin).
    pub fn chi(&self, nu: usize, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        if r == 0.0 {
            return 1.0 / self.count as f64;
        }
        chi_angular(self.k, nu, xi[1].atan2(xi[0]))
    }

    pub fn symbol(&self, nu: usize) -> &SectorSymbol {
        &self.symbols[nu]
    }

    pub fn plain_symbol(&self, nu: usize) -> &SectorSymbol {
        &self.plain_symbols[nu]
    }
}

/// Sector-localized spectral data on its bounding box.
#[derive(Clone, Debug)]
pub struct SparseSpectral {
    pub spec: GridSpec,
    pub bbox: ModeBox,
    pub values: Array2<Complex64>,
}

impl SparseSpectral {
    /// Projects a spectral field through a sparse symbol.
    pub fn project(f: &Field, symbol: &SectorSymbol) -> SparseSpectral {
        let hat = f.to_spectral();
        let spec = f.spec();
        let bbox = symbol.bbox;
        let mut values = Array2::zeros((bbox.width_i(), bbox.width_j()));
        for ((a, b), s) in symbol.values.indexed_iter() {
            if *s == 0.0 {
                continue;
            }
            let m1 = bbox.i_lo + a as i64;
            let m2 = bbox.j_lo + b as i64;
            let idx = (spec.index_of_mode(m1), spec.index_of_mode(m2));
            values[(a, b)] = hat.values()[idx] * *s;
        }
        SparseSpectral {
            spec,
            bbox,
            values,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    /// Scatters back onto the full grid as a spectral field.
    pub fn to_field(&self) -> Field {
        let mut out = Field::zeros(self.spec, Representation::Spectral);
        for ((a, b), v) in self.values.indexed_iter() {
            let m1 = self.bbox.i_lo + a as i64;
            let m2 = self.bbox.j_lo + b as i64;
            let idx = (self.spec.index_of_mode(m1), self.spec.index_of_mode(m2));
            out.values_mut()[idx] = *v;
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        let w = self.spec.freq_spacing().powi(2);
        (w * kahan_sum(self.values.iter().map(|v| v.norm_sqr()))).sqrt()
    }

    /// Grid sizes on which |inverse transform|^p sums without aliasing.
    ///
    /// For even p the integrand (v vbar)^{p/2} is band-limited with per-axis
    /// width (p/2) * box width, so any grid strictly wider than that gives
    /// the exact torus integral; for all other p the full grid is used.
    fn reduced_sizes(&self, p: Lp) -> Option<(usize, usize)> {
        let n = self.spec.n();
        let p_val = match p {
            Lp::Finite(p) => p,
            Lp::Infinity => return None,
        };
        if p_val.fract() != 0.0 || (p_val as u64) % 2 != 0 {
            return None;
        }
        let m = p_val as usize / 2;
        let wi = self.bbox.width_i() - 1;
        let wj = self.bbox.width_j() - 1;
        // Require alias-freedom on the reduced grid *and* on the full grid so
        // the two quadratures agree exactly.
        if m * wi + 1 >= n || m * wj + 1 >= n {
            return None;
        }
        let ni = next_fast_size(m * wi + 2).min(n);
        let nj = next_fast_size(m * wj + 2).min(n);
        Some((ni, nj))
    }

    /// L^p norm of the inverse transform, using a reduced grid when exact.
    ///
    /// `phase`, when given, multiplies each mode by exp(i phase(m)) first;
    /// phases do not change bounding boxes, so the reduction stays valid.
    pub fn lp_norm_with_phase(&self, p: Lp, phase: Option<&Array2<f64>>) -> f64 {
        if let Some((ni, nj)) = self.reduced_sizes(p) {
            self.lp_norm_on_grid(p, phase, ni, nj)
        } else {
            let n = self.spec.n();
            self.lp_norm_on_grid(p, phase, n, n)
        }
    }

    pub fn lp_norm(&self, p: Lp) -> f64 {
        self.lp_norm_with_phase(p, None)
    }

    fn lp_norm_on_grid(&self, p: Lp, phase: Option<&Array2<f64>>, ni: usize, nj: usize) -> f64 {
        // Center the modes so they fit the reduced Brillouin zone; the
        // modulation is unimodular in physical space and norms ignore it.
        let ci = (self.bbox.i_lo + self.bbox.i_hi).div_euclid(2);
        let cj = (self.bbox.j_lo + self.bbox.j_hi).div_euclid(2);
        let mut grid = Array2::<Complex64>::zeros((ni, nj));
        for ((a, b), v) in self.values.indexed_iter() {
            if v.re == 0.0 && v.im == 0.0 {
                continue;
            }
            let mut val = *v;
            if let Some(ph) = phase {
                val *= Complex64::new(0.0, ph[(a, b)]).exp();
            }
            let m1 = self.bbox.i_lo + a as i64 - ci;
            let m2 = self.bbox.j_lo + b as i64 - cj;
            let idx = (
                m1.rem_euclid(ni as i64) as usize,
                m2.rem_euclid(nj as i64) as usize,
            );
            grid[idx] += val;
        }
        fft2_inplace(&mut grid, Direction::Inverse);
        // Match the full-grid inverse-transform scaling (2 pi/L)^2/(2 pi).
        let scale = self.spec.freq_spacing().powi(2) / (2.0 * PI);
        let l = self.spec.l();
        let cell = (l / ni as f64) * (l / nj as f64);
        match p {
            Lp::Infinity => grid.iter().map(|v| v.norm() * scale).fold(0.0, f64::max),
            Lp::Finite(pv) => {
                let s = kahan_sum(grid.iter().map(|v| (v.norm() * scale).powf(pv)));
                (cell * s).powf(1.0 / pv)
            }
        }
    }
}

/// Everything the norm and experiment layers need: the dyadic family plus
/// sector families for each resolvable scale.
#[derive(Clone, Debug)]
pub struct DecompositionPlan {
    spec: GridSpec,
    dyadic: DyadicFamily,
    sectors: BTreeMap<u32, SectorFamily>,
    k_sector_lo: u32,
}

impl DecompositionPlan {
    /// Builds the dyadic family to `k_max` and sector families for every
    /// scale in `[k_lo, k_max]`.
    pub fn build_range(spec: &GridSpec, k_lo: u32, k_max: u32) -> Result<DecompositionPlan> {
        let dyadic = build_dyadic(spec, k_max)?;
        if k_lo == 0 || k_lo > k_max {
            return Err(Error::Config(format!("invalid sector range {k_lo}..={k_max}")));
        }
        let mut sectors = BTreeMap::new();
        for k in k_lo..=k_max {
            sectors.insert(k, build_sectors(spec, k, &dyadic)?);
        }
        Ok(DecompositionPlan {
            spec: *spec,
            dyadic,
            sectors,
            k_sector_lo: k_lo,
        })
    }

    /// Builds sector families for every scale the grid can resolve.
    pub fn build(spec: &GridSpec, k_max: u32) -> Result<DecompositionPlan> {
        let dyadic = build_dyadic(spec, k_max)?;
        let mut k_lo = None;
        for k in 1..=k_max {
            if build_sectors(spec, k, &dyadic).is_ok() {
                k_lo = Some(k);
                break;
            }
        }
        let k_lo = k_lo.ok_or_else(|| {
            Error::Config(format!(
                "grid N = {}, L = {} cannot resolve any sector scale up to {k_max}",
                spec.n(),
                spec.l()
            ))
        })?;
        Self::build_range(spec, k_lo, k_max)
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dyadic(&self) -> &DyadicFamily {
        &self.dyadic
    }

    pub fn k_max(&self) -> u32 {
        self.dyadic.k_max()
    }

    pub fn k_sector_lo(&self) -> u32 {
        self.k_sector_lo
    }

    pub fn sectors(&self, k: u32) -> Result<&SectorFamily> {
        self.sectors.get(&k).ok_or_else(|| {
            Error::Usage(format!(
                "no sector family at scale {k} (plan covers {}..={})",
                self.k_sector_lo,
                self.k_max()
            ))
        })
    }

    /// chi_nu^k(D) f as a full-grid spectral field.
    pub fn sector_project(&self, f: &Field, k: u32, nu: usize) -> Result<Field> {
        let fam = self.sectors(k)?;
        if nu >= fam.count() {
            return Err(Error::Usage(format!(
                "direction index {nu} out of range for scale {k} ({} sectors)",
                fam.count()
            )));
        }
        Ok(SparseSpectral::project(f, fam.symbol(nu)).to_field())
    }

    /// Relative spectral L2 mass of `f` in shells below the sector range
    /// and above rho's plateau; must be negligible for adapted norms.
    pub fn uncovered_low_mass(&self, f: &Field) -> f64 {
        if self.k_sector_lo == 1 {
            return 0.0;
        }
        let hat = f.to_spectral();
        let spec = self.spec;
        let mut uncovered = 0.0;
        let mut total = 0.0;
        for ((i, j), v) in hat.values().indexed_iter() {
            let m = v.norm_sqr();
            total += m;
            let r = {
                let xi = spec.xi(i, j);
                xi[0].hypot(xi[1])
            };
            // rho == 1 holds for |xi| <= 2; sectors start at 2^{k_lo - 1}.
            if r > 2.0 && r < (2.0f64).powi(self.k_sector_lo as i32 - 1) {
                uncovered += m;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            uncovered / total
        }
    }
}
