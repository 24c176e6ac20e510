//! The Schwartz-type time window g used by the space-time norms:
//! g(t) = 1.2 (sin(t/2)/(t/2))^2. Its Fourier transform is a triangle
//! supported exactly on [-1, 1], and |g| >= 1 on [0, 1].

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct TimeWindow {
    /// Truncation half-width T_w.
    pub half_width: f64,
    /// Sample step.
    pub dt: f64,
    /// Window samples on -T_w..T_w (uniform, inclusive).
    pub samples: Vec<f64>,
    /// L2 mass of the neglected tails |t| > T_w, from the 4.8/t^2 envelope.
    pub certified_tail: f64,
}

/// g(t) = 1.2 sinc^2(t/2).
pub fn window_value(t: f64) -> f64 {
    if t == 0.0 {
        return 1.2;
    }
    let u = 0.5 * t;
    let s = u.sin() / u;
    1.2 * s * s
}

/// Exact Fourier transform of g (unnormalized convention
/// int g(t) e^{-i tau t} dt): a triangle supported on [-1, 1].
pub fn window_fourier(tau: f64) -> f64 {
    let a = 1.0 - tau.abs();
    if a <= 0.0 {
        0.0
    } else {
        1.2 * 2.0 * std::f64::consts::PI * a
    }
}

impl TimeWindow {
    /// Builds the sampled window; defaults are (64, 1/4).
    pub fn new(half_width: f64, dt: f64) -> Result<TimeWindow> {
        if !(half_width > 1.0) || !(dt > 0.0) || dt > half_width {
            return Err(Error::Config(format!(
                "invalid window: half_width = {half_width}, dt = {dt}"
            )));
        }
        let n = (2.0 * half_width / dt).round() as usize;
        // Simpson quadrature wants an even interval count.
        let n = if n % 2 == 0 { n } else { n + 1 };
        let dt = 2.0 * half_width / n as f64;
        let samples: Vec<f64> = (0..=n)
            .map(|i| window_value(-half_width + i as f64 * dt))
            .collect();
        // |g(t)| <= 4.8/t^2, so the L2 tail is bounded by 2 * 4.8^2/(3 T^3).
        let certified_tail = 2.0 * 4.8f64.powi(2) / (3.0 * half_width.powi(3));
        let w = TimeWindow {
            half_width,
            dt,
            samples,
            certified_tail,
        };
        w.check_floor()?;
        Ok(w)
    }

    pub fn default_window() -> TimeWindow {
        TimeWindow::new(64.0, 0.25).expect("default window")
    }

    /// Verifies |g| >= 1 on [0, 1] on a fine grid.
    fn check_floor(&self) -> Result<()> {
        for i in 0..=1000 {
            let t = i as f64 / 1000.0;
            if window_value(t) < 1.0 {
                return Err(Error::Numeric(format!(
                    "window floor violated at t = {t}: {}",
                    window_value(t)
                )));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let t0 = -self.half_width;
        let dt = self.dt;
        (0..self.samples.len()).map(move |i| t0 + i as f64 * dt)
    }

    /// Composite Simpson weights matching `samples`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let n = self.samples.len();
        let mut w = vec![0.0; n];
        let mut i = 0;
        while i + 2 < n + 1 {
            w[i] += self.dt / 3.0;
            w[i + 1] += 4.0 * self.dt / 3.0;
            w[i + 2] += self.dt / 3.0;
            i += 2;
        }
        w
    }

    /// Upper bound for the neglected int_{|t|>T} |g|^p dt (finite p).
    pub fn tail_bound(&self, p: f64) -> f64 {
        2.0 * (4.8f64).powf(p) / ((2.0 * p - 1.0) * self.half_width.powf(2.0 * p - 1.0))
    }

    /// ||g||_{L^p[-T, T]}^p by the window's own quadrature.
    pub fn lp_mass(&self, p: f64) -> f64 {
        self.quadrature_weights()
            .iter()
            .zip(self.samples.iter())
            .map(|(w, g)| w * g.abs().powf(p))
            .sum()
    }
}
