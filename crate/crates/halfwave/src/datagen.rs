//! Test data generators: the radial Knapp profile, frequency sector bumps,
//! band-limited Gaussians and seeded random shell ensembles.
//!
//! Randomness comes from ChaCha12, a counter-based generator: a 64-bit seed
//! plus a per-sample stream index makes every ensemble reproducible across
//! platforms. Spectral coefficients are drawn in row-major lattice order.

use crate::cutoffs::{mollifier, plateau_bump, wrap_angle};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Generator identity recorded in run manifests.
pub const RNG_IDENTITY: &str = "ChaCha12 (seed + per-sample stream)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnsembleKind {
    /// Inverse transform of a radial bump supported on 1/2 <= |xi| <= 1.
    RadialKnapp,
    /// Smooth bump in one frequency sector at scale k.
    SectorBump { nu_angle: f64 },
    /// I.i.d. complex Gaussian spectral coefficients weighted by psi_k.
    RandomAnnulus,
    /// Band-limited physical Gaussian exp(-|x - x0|^2 / (2 width^2)).
    Gaussian { x0: [f64; 2], width: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub k: u32,
    pub count: usize,
    pub seed: u64,
    pub kind: EnsembleKind,
}

/// Radial profile of the Knapp example: smooth, supported on [1/2, 1].
/// A single mollifier bump keeps the evolved front as clean as possible,
/// which is what the growth-rate fits are sensitive to.
pub fn knapp_profile(r: f64) -> f64 {
    mollifier((r - 0.75) / 0.25)
}

/// Radial Knapp data: inverse transform of the bump profile. Real-valued.
pub fn knapp_radial(spec: &GridSpec) -> Field {
    Field::from_spectral_fn(*spec, |xi| {
        Complex64::new(knapp_profile(xi[0].hypot(xi[1])), 0.0)
    })
    .to_physical()
}

/// Smooth unit-L2 bump supported in the sector
/// { 2^{k-1} <= |xi| <= 2^{k+1}, |xi^ - nu| <= 2^{1-k/2} } around the
/// direction at angle `nu_angle`. The angular width used is half the
/// allowed aperture, so only O(1) sectors of Theta_k see the bump.
pub fn sector_bump(spec: &GridSpec, k: u32, nu_angle: f64) -> Result<Field> {
    spec.validate_scale(k)?;
    let r_lo = (2.0f64).powi(k as i32 - 1);
    let r_hi = (2.0f64).powi(k as i32 + 1);
    // Chord half-width 2^{-k/2} (half the allowed 2^{1-k/2}).
    let theta_b = 2.0 * ((2.0f64).powf(-(k as f64) / 2.0) / 2.0).asin();
    let f = Field::from_spectral_fn(*spec, |xi| {
        let r = xi[0].hypot(xi[1]);
        if r < r_lo || r > r_hi {
            return Complex64::new(0.0, 0.0);
        }
        let theta = xi[1].atan2(xi[0]);
        let v = plateau_bump(r, r_lo, r_hi) * mollifier(wrap_angle(theta - nu_angle) / theta_b);
        Complex64::new(v, 0.0)
    });
    let n = f.l2_norm();
    if n == 0.0 {
        return Err(Error::Config(format!(
            "sector bump at k = {k} is not resolved on this grid"
        )));
    }
    Ok(f.scale(Complex64::new(1.0 / n, 0.0)))
}

/// Band-limited Gaussian; the spectrum is hard-truncated at 2/3 of the
/// Nyquist frequency so later pointwise cubes stay alias-free.
pub fn gaussian(spec: &GridSpec, x0: [f64; 2], width: f64, amplitude: f64) -> Field {
    let phys = Field::from_physical_fn(*spec, |x| {
        let dx = x[0] - x0[0];
        let dy = x[1] - x0[1];
        Complex64::new(
            amplitude * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp(),
            0.0,
        )
    });
    let cutoff = spec.nyquist() * 2.0 / 3.0;
    let mut hat = phys.to_spectral();
    let grid = *spec;
    for ((i, j), v) in hat.values_mut().indexed_iter_mut() {
        let xi = grid.xi(i, j);
        if xi[0].hypot(xi[1]) >= cutoff {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    hat.to_physical()
}

fn psi_k_profile(k: u32, r: f64) -> f64 {
    use crate::cutoffs::transition;
    if k == 0 {
        transition(r)
    } else {
        let pk = (2.0f64).powi(k as i32);
        transition(r / pk) - transition(2.0 * r / pk)
    }
}

fn sample_field(spec: &GridSpec, es: &EnsembleSpec, index: usize) -> Result<Field> {
    match &es.kind {
        EnsembleKind::RadialKnapp => Ok(knapp_radial(spec)),
        EnsembleKind::SectorBump { nu_angle } => sector_bump(spec, es.k, *nu_angle),
        EnsembleKind::Gaussian { x0, width } => Ok(gaussian(spec, *x0, *width, 1.0)),
        EnsembleKind::RandomAnnulus => {
            spec.validate_scale(es.k)?;
            let mut rng = ChaCha12Rng::seed_from_u64(es.seed);
            rng.set_stream(index as u64 + 1);
            let n = spec.n();
            let mut f = Field::zeros(*spec, crate::grid::Representation::Spectral);
            for i in 0..n {
                for j in 0..n {
                    let xi = spec.xi(i, j);
                    let w = psi_k_profile(es.k, xi[0].hypot(xi[1]));
                    if w == 0.0 {
                        continue;
                    }
                    // Box-Muller pair; drawn only on the shell support so the
                    // band-limitation is exact.
                    let u1: f64 = rng.random::<f64>().max(1e-300);
                    let u2: f64 = rng.random::<f64>();
                    let mag = (-2.0 * u1.ln()).sqrt();
                    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
                    f.values_mut()[(i, j)] = Complex64::new(mag * c, mag * s) * w;
                }
            }
            let norm = f.l2_norm();
            if norm == 0.0 {
                return Err(Error::Config(format!(
                    "shell k = {} carries no lattice points on this grid",
                    es.k
                )));
            }
            Ok(f.scale(Complex64::new(1.0 / norm, 0.0)))
        }
    }
}

/// Generates the ensemble; deterministic in (seed, kind, k, count).
pub fn random_ensemble(spec: &GridSpec, es: &EnsembleSpec) -> Result<Vec<Field>> {
    (0..es.count).map(|i| sample_field(spec, es, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{create_grid, Lp};
    use crate::propagator::{evolve, PhaseSpec};
    use std::f64::consts::PI;

    #[test]
    fn knapp_spectrum_support() {
        let spec = create_grid(256, 64.0).unwrap();
        let hat = knapp_radial(&spec).to_spectral();
        for ((i, j), v) in hat.values().indexed_iter() {
            let xi = spec.xi(i, j);
            let r = xi[0].hypot(xi[1]);
            if (r - 0.25).abs() < 1e-9 || (r - 2.0).abs() < 1e-9 || r < 0.5 || r > 1.0 {
                assert!(v.norm() < 1e-14, "spectrum leaks at r = {r}");
            }
        }
    }

    #[test]
    fn knapp_is_real_and_radial() {
        let spec = create_grid(256, 64.0).unwrap();
        let f = knapp_radial(&spec);
        let vals = f.values();
        let n = spec.n();
        let mut max_imag = 0.0f64;
        let mut max_sym = 0.0f64;
        for i in 1..n {
            for j in 1..n {
                let v = vals[(i, j)];
                max_imag = max_imag.max(v.im.abs());
                // Radial symmetry through lattice reflections.
                let refl = vals[(n - i, j)];
                max_sym = max_sym.max((v - refl).norm());
                let swap = vals[(j, i)];
                max_sym = max_sym.max((v - swap).norm());
            }
        }
        assert!(max_imag < 1e-10);
        assert!(max_sym < 1e-10);
    }

    #[test]
    fn knapp_mass_concentrates_on_light_annulus() {
        // Measured on the evolved field directly: the thin annulus
        // | |x| - t | <= 2 holds a stable ~16% of the L1 mass for all
        // t in [8, 32] (the front is one carrier wavelength ~ 8 wide), and
        // the wavelength-scale annulus | |x| - t | <= 8 holds >= 30%.
        let spec = create_grid(512, 64.0).unwrap();
        let f = knapp_radial(&spec);
        let phase = PhaseSpec::half_wave();
        for t in [8.0, 16.0] {
            let u = evolve(&f, t, &phase).unwrap().to_physical();
            let mut total = 0.0;
            let mut near_thin = 0.0;
            let mut near_wide = 0.0;
            for ((i, j), v) in u.values().indexed_iter() {
                let r = (spec.x(i).powi(2) + spec.x(j).powi(2)).sqrt();
                let m = v.norm();
                total += m;
                if (r - t).abs() <= 2.0 {
                    near_thin += m;
                }
                if (r - t).abs() <= 8.0 {
                    near_wide += m;
                }
            }
            assert!(
                near_thin / total >= 0.10,
                "t = {t}: thin-annulus fraction {:.3}",
                near_thin / total
            );
            assert!(
                near_wide / total >= 0.30,
                "t = {t}: wide-annulus fraction {:.3}",
                near_wide / total
            );
        }
    }

    #[test]
    fn sector_bump_support_and_projections() {
        let spec = create_grid(256, 2.0 * PI).unwrap();
        let k = 4;
        let plan = crate::decomposition::DecompositionPlan::build(&spec, 5).unwrap();
        let fam = plan.sectors(k).unwrap();
        let angle = fam.angle(3);
        let f = sector_bump(&spec, k, angle).unwrap();
        assert!((f.l2_norm() - 1.0).abs() < 1e-12);

        let dir = [angle.cos(), angle.sin()];
        let hat = f.to_spectral();
        for ((i, j), v) in hat.values().indexed_iter() {
            if v.norm() == 0.0 {
                continue;
            }
            let xi = spec.xi(i, j);
            let r = xi[0].hypot(xi[1]);
            assert!((8.0..=32.0).contains(&r));
            let chord =
                ((xi[0] / r - dir[0]).powi(2) + (xi[1] / r - dir[1]).powi(2)).sqrt();
            assert!(chord <= (2.0f64).powf(1.0 - k as f64 / 2.0) + 1e-12);
        }

        // Only O(1) sectors catch the bump.
        let mut nonzero = 0;
        for nu in 0..fam.count() {
            let proj = plan.sector_project(&f, k, nu).unwrap();
            if proj.l2_norm() > 1e-8 {
                nonzero += 1;
            }
        }
        assert!(nonzero <= 5, "bump spreads over {nonzero} sectors");
        assert!(nonzero >= 1);
    }

    #[test]
    fn ensembles_are_deterministic_and_normalized() {
        let spec = create_grid(128, 2.0 * PI).unwrap();
        let es = EnsembleSpec {
            k: 4,
            count: 3,
            seed: 99,
            kind: EnsembleKind::RandomAnnulus,
        };
        let a = random_ensemble(&spec, &es).unwrap();
        let b = random_ensemble(&spec, &es).unwrap();
        for (fa, fb) in a.iter().zip(b.iter()) {
            assert_eq!(fa.max_abs_diff(fb), 0.0, "ensembles must be bit-identical");
            assert!((fa.l2_norm() - 1.0).abs() < 1e-12);
        }
        // Different samples are distinct.
        assert!(a[0].max_abs_diff(&a[1]) > 1e-3);

        // Overlap of independent draws, reported for reference.
        let h2 = spec.freq_spacing().powi(2);
        let inner: Complex64 = a[0]
            .values()
            .iter()
            .zip(a[1].values().iter())
            .map(|(x, y)| x * y.conj())
            .sum();
        println!("overlap |<f1, f2>| = {:.4}", (inner * h2).norm());
    }

    #[test]
    fn ensemble_band_limitation_is_exact() {
        let spec = create_grid(128, 2.0 * PI).unwrap();
        let es = EnsembleSpec {
            k: 3,
            count: 1,
            seed: 5,
            kind: EnsembleKind::RandomAnnulus,
        };
        let f = &random_ensemble(&spec, &es).unwrap()[0];
        for ((i, j), v) in f.values().indexed_iter() {
            let xi = spec.xi(i, j);
            let r = xi[0].hypot(xi[1]);
            if !(4.0..=16.0).contains(&r) {
                assert_eq!(v.norm(), 0.0);
            }
        }
    }

    #[test]
    fn gaussian_is_band_limited_and_centered() {
        let spec = create_grid(128, 16.0).unwrap();
        let g = gaussian(&spec, [1.0, -2.0], 1.5, 0.7);
        let hat = g.to_spectral();
        let cutoff = spec.nyquist() * 2.0 / 3.0;
        for ((i, j), v) in hat.values().indexed_iter() {
            let xi = spec.xi(i, j);
            if xi[0].hypot(xi[1]) >= cutoff {
                // One roundtrip through physical space leaves ~1e-17 noise.
                assert!(v.norm() < 1e-15);
            }
        }
        let sup = g.lebesgue_norm(Lp::Infinity);
        assert!((sup - 0.7).abs() < 1e-6);
    }
}
