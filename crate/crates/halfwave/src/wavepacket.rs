//! The wave-packet symbol family phi_omega and its reproducing multiplier.
//!
//! phi_{omega,sigma}(xi) = c_sigma phi((xi^ - omega)/sigma^{1/2}) with the
//! circle normalization c_sigma, and
//! phi_omega(xi) = int_0^4 psi(sigma xi) phi_{omega,sigma}(xi) dsigma/sigma.
//!
//! phi_omega depends only on (|xi|, |xi^ - omega|), and the angular feature
//! width scales like |xi|^{-1/2}, so the symbol is tabulated once on a
//! (log |xi|, u) grid with u = |xi^ - omega| |xi|^{1/2} and evaluated by
//! bilinear interpolation. The reproducing multiplier is the radial inverse
//! m = (int_{S^1} phi_omega dmega)^{-1}.

use crate::cutoffs::{plateau_bump, transition, wrap_angle};
use crate::error::{Error, Result};
use crate::fft::kahan_sum;
use crate::grid::{Field, GridSpec};
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// The fixed radial profile phi: 1 on |v| <= 1/2, 0 on |v| >= 1.
fn phi_profile(rho: f64) -> f64 {
    transition(2.0 * rho)
}

/// Unnormalized sigma-profile w, supported on [1/2, 2].
fn w_profile(r: f64) -> f64 {
    plateau_bump(r, 0.5, 2.0)
}

/// Quadrature and table resolutions for the symbol construction.
#[derive(Clone, Copy, Debug)]
pub struct PacketQuadrature {
    /// Log-spaced sigma nodes per evaluation window.
    pub sigma_nodes: usize,
    /// Radial table resolution.
    pub n_r: usize,
    /// Angular (u) table resolution.
    pub n_u: usize,
}

impl Default for PacketQuadrature {
    fn default() -> Self {
        PacketQuadrature {
            sigma_nodes: 64,
            n_r: 4096,
            n_u: 384,
        }
    }
}

/// Tabulated phi_omega family on a grid, with c_sigma and the reproducing
/// multiplier m.
#[derive(Clone, Debug)]
pub struct WavePacketSymbols {
    k_max: u32,
    quad: PacketQuadrature,
    ln_r_lo: f64,
    ln_r_step: f64,
    u_hi: f64,
    u_step: f64,
    /// G[(ir, iu)] = phi_omega at radius r, scaled angle u.
    table: Array2<f64>,
    /// 1 / int phi_omega dmega on the radial grid (0 where undefined).
    m_values: Vec<f64>,
    /// c_sigma on a dense log-sigma grid.
    c_ln_lo: f64,
    c_ln_step: f64,
    c_values: Vec<f64>,
    /// Normalization sqrt(int w^2 dsigma/sigma).
    psi_norm: f64,
}

const U_MAX: f64 = 1.45;

fn c_sigma_integral(sigma: f64) -> f64 {
    // int_0^{2pi} phi(2 |sin(theta/2)| / sqrt(sigma))^2 dtheta; the integrand
    // is supported on |theta| < theta_star.
    let half_chord = (sigma.sqrt() / 2.0).min(1.0);
    let theta_star = 2.0 * half_chord.asin();
    let n = 1024;
    let dt = 2.0 * theta_star / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let theta = -theta_star + i as f64 * dt;
        let v = phi_profile(2.0 * (theta / 2.0).sin().abs() / sigma.sqrt());
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * v * v;
    }
    acc * dt
}

impl WavePacketSymbols {
    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    /// c_sigma = (int_{S^1} phi((e1 - nu)/sqrt(sigma))^2 dnu)^{-1/2}.
    pub fn c_sigma(&self, sigma: f64) -> f64 {
        let ln = sigma.ln();
        let pos = (ln - self.c_ln_lo) / self.c_ln_step;
        let i = pos.floor();
        let frac = pos - i;
        let i = i as isize;
        if i < 0 || (i as usize) + 1 >= self.c_values.len() {
            return c_sigma_integral(sigma).powf(-0.5);
        }
        let a = self.c_values[i as usize];
        let b = self.c_values[i as usize + 1];
        a + frac * (b - a)
    }

    /// Normalized sigma-profile psi (radial), int psi(sigma)^2 dsigma/sigma = 1.
    pub fn psi_sigma(&self, r: f64) -> f64 {
        w_profile(r) / self.psi_norm
    }

    fn g_at(&self, r: f64, u: f64) -> f64 {
        if r <= 0.0 || u >= self.u_hi {
            return 0.0;
        }
        let lr = r.ln();
        let pr = (lr - self.ln_r_lo) / self.ln_r_step;
        if pr < 0.0 {
            return 0.0;
        }
        let (nr, nu) = self.table.dim();
        let ir = pr.floor() as usize;
        if ir + 1 >= nr {
            return 0.0;
        }
        let fr = pr - ir as f64;
        let pu = u / self.u_step;
        let iu = pu.floor() as usize;
        if iu + 1 >= nu {
            return 0.0;
        }
        let fu = pu - iu as f64;
        let g00 = self.table[(ir, iu)];
        let g01 = self.table[(ir, iu + 1)];
        let g10 = self.table[(ir + 1, iu)];
        let g11 = self.table[(ir + 1, iu + 1)];
        (1.0 - fr) * ((1.0 - fu) * g00 + fu * g01) + fr * ((1.0 - fu) * g10 + fu * g11)
    }

    /// phi_omega(xi) for the direction at angle `omega`.
    pub fn phi_omega(&self, omega: f64, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        if r < 0.125 {
            return 0.0;
        }
        let theta = xi[1].atan2(xi[0]);
        let chord = 2.0 * ((wrap_angle(theta - omega)) / 2.0).sin().abs();
        self.g_at(r, chord * r.sqrt())
    }

    /// Reproducing multiplier m(xi); radial, valid on |xi| >= 1/2.
    pub fn m(&self, xi: [f64; 2]) -> f64 {
        let r = xi[0].hypot(xi[1]);
        if r <= 0.0 {
            return 0.0;
        }
        let pr = (r.ln() - self.ln_r_lo) / self.ln_r_step;
        if pr < 0.0 {
            return 0.0;
        }
        let ir = pr.floor() as usize;
        if ir + 1 >= self.m_values.len() {
            return 0.0;
        }
        let fr = pr - ir as f64;
        let a = self.m_values[ir];
        let b = self.m_values[ir + 1];
        if a == 0.0 || b == 0.0 {
            return 0.0;
        }
        a + fr * (b - a)
    }

    /// Applies phi_omega(D).
    pub fn apply_phi_omega(&self, f: &Field, omega: f64) -> Result<Field> {
        f.apply_multiplier(|xi| Complex64::new(self.phi_omega(omega, xi), 0.0))
    }

    /// Quadrature of the reproducing integral: sum_j (2 pi / n) m(D)
    /// phi_{omega_j}(D) f. Recovers f when supp f^ lies in |xi| >= 1/2.
    pub fn reproduce(&self, f: &Field, n_omega: usize) -> Result<Field> {
        if n_omega < 8 {
            return Err(Error::Usage("reproduction needs at least 8 nodes".into()));
        }
        let dw = 2.0 * PI / n_omega as f64;
        f.apply_multiplier(|xi| {
            let mut total = 0.0;
            for j in 0..n_omega {
                total += self.phi_omega(dw * j as f64, xi);
            }
            Complex64::new(self.m(xi) * total * dw, 0.0)
        })
    }
}

/// Builds the symbol family for scales up to `k_max` of the given grid.
///
/// The sigma integral runs over [2^{-(k_max+2)}, 4] as a global window,
/// restricted per radius to the support of psi(sigma r); `quad.sigma_nodes`
/// log-spaced nodes resolve each window.
pub fn build_phi_omega(
    spec: &GridSpec,
    k_max: u32,
    quad: PacketQuadrature,
) -> Result<WavePacketSymbols> {
    spec.validate_scale(k_max)?;
    if quad.sigma_nodes < 16 || quad.n_r < 64 || quad.n_u < 32 {
        return Err(Error::Config("packet quadrature resolution too coarse".into()));
    }
    let psi_norm = {
        // int w(sigma)^2 dsigma/sigma over [1/2, 2], dense log-spaced Simpson.
        let n = 4096;
        let lo = (0.5f64).ln();
        let hi = (2.0f64).ln();
        let dl = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let s = (lo + i as f64 * dl).exp();
            acc += w * w_profile(s).powi(2);
        }
        (acc * dl / 3.0).sqrt()
    };

    let sigma_min_global = (2.0f64).powi(-(k_max as i32) - 2);
    // c_sigma table spans every window the radial range can request.
    let c_ln_lo = (0.5 * sigma_min_global).ln();
    let c_ln_hi = (8.0f64).ln();
    let n_c = 2048;
    let c_ln_step = (c_ln_hi - c_ln_lo) / (n_c - 1) as f64;
    let c_values: Vec<f64> = (0..n_c)
        .into_par_iter()
        .map(|i| c_sigma_integral((c_ln_lo + i as f64 * c_ln_step).exp()).powf(-0.5))
        .collect();

    let r_max = spec.nyquist() * (2.0f64).sqrt() * 1.01;
    let ln_r_lo = (0.120f64).ln();
    let ln_r_hi = r_max.ln();
    let ln_r_step = (ln_r_hi - ln_r_lo) / (quad.n_r - 1) as f64;
    let u_step = U_MAX / (quad.n_u - 1) as f64;

    let c_of = |sigma: f64| -> f64 {
        let pos = (sigma.ln() - c_ln_lo) / c_ln_step;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        c_values[i] + frac * (c_values[i + 1] - c_values[i])
    };

    let rows: Vec<Vec<f64>> = (0..quad.n_r)
        .into_par_iter()
        .map(|ir| {
            let r = (ln_r_lo + ir as f64 * ln_r_step).exp();
            let sig_lo = (0.5 / r).max(sigma_min_global);
            let sig_hi = (2.0 / r).min(4.0);
            let mut row = vec![0.0; quad.n_u];
            if sig_hi <= sig_lo {
                return row;
            }
            let n_s = quad.sigma_nodes;
            let dls = (sig_hi.ln() - sig_lo.ln()) / (n_s - 1) as f64;
            // Per-node weights w(sigma r) c_sigma and scale 1/sqrt(sigma r)
            // are shared across the whole row.
            let mut amp = Vec::with_capacity(n_s);
            let mut inv_sqrt = Vec::with_capacity(n_s);
            for is in 0..n_s {
                let sigma = (sig_lo.ln() + is as f64 * dls).exp();
                let trap = if is == 0 || is == n_s - 1 { 0.5 } else { 1.0 };
                amp.push(trap * dls * w_profile(sigma * r) / psi_norm * c_of(sigma));
                inv_sqrt.push(1.0 / (sigma * r).sqrt());
            }
            for iu in 0..quad.n_u {
                let u = iu as f64 * u_step;
                let mut acc = 0.0;
                for is in 0..n_s {
                    if amp[is] == 0.0 {
                        continue;
                    }
                    // phi argument |xi^-omega|/sqrt(sigma) = u / sqrt(sigma r).
                    let v = phi_profile(u * inv_sqrt[is]);
                    if v > 0.0 {
                        acc += amp[is] * v;
                    }
                }
                row[iu] = acc;
            }
            row
        })
        .collect();

    let mut table = Array2::zeros((quad.n_r, quad.n_u));
    for (ir, row) in rows.iter().enumerate() {
        for (iu, v) in row.iter().enumerate() {
            table[(ir, iu)] = *v;
        }
    }

    // Reproducing multiplier: I(r) = int_{-pi}^{pi} G(r, chord(Delta) sqrt(r)) dDelta.
    let m_values: Vec<f64> = (0..quad.n_r)
        .into_par_iter()
        .map(|ir| {
            let r = (ln_r_lo + ir as f64 * ln_r_step).exp();
            let half_chord = (U_MAX / (2.0 * r.sqrt())).min(1.0);
            let delta_star = 2.0 * half_chord.asin();
            let n = 2048;
            let dd = delta_star / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let delta = i as f64 * dd;
                let u = 2.0 * (delta / 2.0).sin().abs() * r.sqrt();
                // interpolate within this row only (exact radius)
                let pu = u / u_step;
                let iu = pu.floor() as usize;
                if iu + 1 >= quad.n_u {
                    continue;
                }
                let fu = pu - iu as f64;
                let g = table[(ir, iu)] + fu * (table[(ir, iu + 1)] - table[(ir, iu)]);
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * g;
            }
            let integral = 2.0 * acc * dd;
            if integral > 1e-12 {
                1.0 / integral
            } else {
                0.0
            }
        })
        .collect();

    Ok(WavePacketSymbols {
        k_max,
        quad,
        ln_r_lo,
        ln_r_step,
        u_hi: U_MAX - 2.0 * u_step,
        u_step,
        table,
        m_values,
        c_ln_lo,
        c_ln_step,
        c_values,
        psi_norm,
    })
}

#[allow(dead_code)]
fn quadrature_summary(sym: &WavePacketSymbols) -> String {
    format!(
        "sigma_nodes={} n_r={} n_u={}",
        sym.quad.sigma_nodes, sym.quad.n_r, sym.quad.n_u
    )
}
