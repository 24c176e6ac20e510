//! Half-wave group e^{it sqrt(-Delta)}, general order-1 homogeneous phase
//! multipliers, the cosine/sinc pair solving the linear wave equation, and
//! Duhamel integrals of sampled forcing trajectories.

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use rustfft::num_complex::Complex64;
use std::sync::Arc;

type PhaseFn = dyn Fn([f64; 2]) -> f64 + Send + Sync;

/// Order-1 homogeneous phase function.
#[derive(Clone)]
pub struct PhaseSpec {
    kind: PhaseKind,
    zero_value: f64,
}

#[derive(Clone)]
enum PhaseKind {
    HalfWave,
    Custom(Arc<PhaseFn>),
}

impl PhaseSpec {
    /// phi(xi) = |xi|.
    pub fn half_wave() -> PhaseSpec {
        PhaseSpec {
            kind: PhaseKind::HalfWave,
            zero_value: 0.0,
        }
    }

    /// Custom phase; homogeneity phi(2 xi) = 2 phi(xi) is spot-checked on
    /// lattice pairs of the supplied grid to 1e-10.
    pub fn custom(
        spec: &GridSpec,
        phase: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        zero_value: f64,
    ) -> Result<PhaseSpec> {
        let dxi = spec.freq_spacing();
        let quarter = (spec.n() / 4) as i64;
        for m1 in [1i64, 2, 3, 5, quarter / 3, quarter / 2].iter().copied() {
            for m2 in [0i64, 1, -2, quarter / 4].iter().copied() {
                if m1 == 0 && m2 == 0 {
                    continue;
                }
                if 2 * m1.abs().max(m2.abs()) >= (spec.n() / 2) as i64 {
                    continue;
                }
                let xi = [m1 as f64 * dxi, m2 as f64 * dxi];
                let xi2 = [2.0 * xi[0], 2.0 * xi[1]];
                let a = phase(xi);
                let b = phase(xi2);
                if (b - 2.0 * a).abs() > 1e-10 * (1.0 + a.abs()) {
                    return Err(Error::Config(format!(
                        "phase is not homogeneous of order 1 at xi = ({}, {}): \
                         phi(2 xi) = {b}, 2 phi(xi) = {}",
                        xi[0],
                        xi[1],
                        2.0 * a
                    )));
                }
            }
        }
        Ok(PhaseSpec {
            kind: PhaseKind::Custom(Arc::new(phase)),
            zero_value,
        })
    }

    pub fn value(&self, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        if r == 0.0 {
            return self.zero_value;
        }
        match &self.kind {
            PhaseKind::HalfWave => r,
            PhaseKind::Custom(f) => f(xi),
        }
    }
}

/// Spectral phase multiplication e^{i t phi(xi)}.
///
/// The multiplier itself is exact on the torus; when the data is spatially
/// concentrated the caller is responsible for the wraparound bound, e.g. via
/// [`evolve_checked`] or [`GridSpec::validate_wraparound`].
pub fn evolve(f: &Field, t: f64, phase: &PhaseSpec) -> Result<Field> {
    f.apply_multiplier(|xi| Complex64::new(0.0, t * phase.value(xi)).exp())
}

/// Like [`evolve`] but first validates L >= 2 (|t| + r_data).
pub fn evolve_checked(f: &Field, t: f64, phase: &PhaseSpec, r_data: f64) -> Result<Field> {
    f.spec().validate_wraparound(t, r_data)?;
    evolve(f, t, phase)
}

/// sin(t |xi|)/|xi| with the limit value t at xi = 0.
fn sinc_phase(t: f64, xi: [f64; 2]) -> f64 {
    let r = xi[0].hypot(xi[1]);
    if r == 0.0 {
        t
    } else {
        (t * r).sin() / r
    }
}

/// Solution of the linear wave equation at time t:
/// cos(t sqrt(-Delta)) f + sin(t sqrt(-Delta))/sqrt(-Delta) g.
pub fn wave_pair(f: &Field, g: &Field, t: f64) -> Result<Field> {
    let uf = f.apply_multiplier(|xi| Complex64::new((t * xi[0].hypot(xi[1])).cos(), 0.0))?;
    let ug = g.apply_multiplier(|xi| Complex64::new(sinc_phase(t, xi), 0.0))?;
    uf.axpby(Complex64::new(1.0, 0.0), &ug, Complex64::new(1.0, 0.0))
}

/// (u, du/dt) of the linear wave flow at time t, both spectral.
pub fn wave_pair_full(f: &Field, g: &Field, t: f64) -> Result<(Field, Field)> {
    let fh = f.to_spectral();
    let gh = g.to_spectral();
    let u = wave_pair(&fh, &gh, t)?;
    let du_f = fh.apply_multiplier(|xi| {
        let r = xi[0].hypot(xi[1]);
        Complex64::new(-r * (t * r).sin(), 0.0)
    })?;
    let du_g = gh.apply_multiplier(|xi| Complex64::new((t * xi[0].hypot(xi[1])).cos(), 0.0))?;
    let ut = du_f.axpby(Complex64::new(1.0, 0.0), &du_g, Complex64::new(1.0, 0.0))?;
    Ok((u, ut))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureRule {
    Trapezoid,
    Simpson,
}

fn quadrature_weights(rule: QuadratureRule, n: usize, dt: f64) -> Vec<f64> {
    match rule {
        QuadratureRule::Trapezoid => {
            let mut w = vec![dt; n];
            w[0] = 0.5 * dt;
            w[n - 1] = 0.5 * dt;
            w
        }
        QuadratureRule::Simpson => {
            // Composite Simpson; with an even interval count this is the
            // classical rule, otherwise the final interval is handled by a
            // trapezoid correction.
            let mut w = vec![0.0; n];
            let intervals = n - 1;
            let simpson_end = if intervals % 2 == 0 { n - 1 } else { n - 2 };
            let mut i = 0;
            while i + 2 <= simpson_end {
                w[i] += dt / 3.0;
                w[i + 1] += 4.0 * dt / 3.0;
                w[i + 2] += dt / 3.0;
                i += 2;
            }
            if intervals % 2 != 0 {
                w[n - 2] += 0.5 * dt;
                w[n - 1] += 0.5 * dt;
            }
            w
        }
    }
}

/// Duhamel integral int_0^t sin((t-s) sqrt(-Delta))/sqrt(-Delta) F(s) ds
/// from a forcing trajectory sampled uniformly on [0, t].
pub fn duhamel(forcing: &[Field], t: f64, rule: QuadratureRule) -> Result<Field> {
    if forcing.len() < 3 {
        return Err(Error::Usage(format!(
            "Duhamel quadrature needs at least 3 samples, got {}",
            forcing.len()
        )));
    }
    let n = forcing.len();
    let dt = t / (n - 1) as f64;
    let weights = quadrature_weights(rule, n, dt);
    duhamel_weighted(forcing, t, &weights)
}

/// Duhamel integral together with a halving-step error estimate
/// (difference against the quadrature on every other sample).
pub fn duhamel_with_error(forcing: &[Field], t: f64, rule: QuadratureRule) -> Result<(Field, f64)> {
    let full = duhamel(forcing, t, rule)?;
    if forcing.len() < 5 || (forcing.len() - 1) % 2 != 0 {
        return Ok((full, f64::NAN));
    }
    let coarse_fields: Vec<Field> = forcing.iter().step_by(2).cloned().collect();
    let coarse = duhamel(&coarse_fields, t, rule)?;
    let err = coarse.rel_l2_distance(&full);
    Ok((full, err))
}

fn duhamel_weighted(forcing: &[Field], t: f64, weights: &[f64]) -> Result<Field> {
    let n = forcing.len();
    let dt = t / (n - 1) as f64;
    let spec = forcing[0].spec();
    let mut acc = Field::zeros(spec, crate::grid::Representation::Spectral);
    for (i, (sample, w)) in forcing.iter().zip(weights.iter()).enumerate() {
        if *w == 0.0 {
            continue;
        }
        let s = i as f64 * dt;
        let propagated = sample
            .to_spectral()
            .apply_multiplier(|xi| Complex64::new(sinc_phase(t - s, xi), 0.0))?;
        acc = acc.axpby(
            Complex64::new(1.0, 0.0),
            &propagated,
            Complex64::new(*w, 0.0),
        )?;
    }
    Ok(acc)
}
