//! Pseudo-spectral solver for the 2D nonlinear wave equation
//! d_t^2 u = Delta u +- |u|^{alpha-1} u on the periodic grid.
//!
//! Time stepping is an interaction-picture (Lawson) RK4: the linear wave
//! flow is applied exactly through cached cos/sinc multiplier tables and the
//! classical RK4 acts on the Duhamel-transformed nonlinearity, which is
//! evaluated pointwise in physical space under a radial dealiasing mask
//! (2/3 rule for the cubic term, 1/2 rule for the quintic one).
//!
//! Picard iterates A_m and the remainder series u^j are integrated as a
//! coupled system with the same stepper, so their algebraic relations
//! (m-homogeneity, vanishing of even orders) hold to round-off.

use crate::error::{Error, Result};
use crate::fft::kahan_sum;
use crate::grid::{Field, GridSpec, Lp, Representation};
use crate::propagator::wave_pair_full;
use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Focusing,
    Defocusing,
    /// Nonlinearity disabled; the stepper reduces to the exact linear flow.
    Off,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Focusing => 1.0,
            Sign::Defocusing => -1.0,
            Sign::Off => 0.0,
        }
    }
}

/// Placement of the complex conjugate in the trilinear map
/// N_3(u_1, u_2, u_3); the printed recursion conjugates the middle slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConjugateSlot {
    Middle,
    First,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub alpha: u32,
    pub sign: Sign,
    pub dt: f64,
    pub t_final: f64,
    pub dealias: bool,
    /// Times at which full states are kept (snapped to the step grid).
    pub sample_times: Vec<f64>,
    pub conjugate_slot: ConjugateSlot,
}

impl SolverConfig {
    pub fn new(alpha: u32, sign: Sign, dt: f64, t_final: f64) -> Result<SolverConfig> {
        if alpha < 3 || alpha % 2 == 0 {
            return Err(Error::Config(format!(
                "nonlinearity power must be an odd integer >= 3, got {alpha}"
            )));
        }
        if !(dt > 0.0) || !(t_final > 0.0) {
            return Err(Error::Config("dt and T must be positive".into()));
        }
        Ok(SolverConfig {
            alpha,
            sign,
            dt,
            t_final,
            dealias: true,
            sample_times: vec![t_final],
            conjugate_slot: ConjugateSlot::Middle,
        })
    }

    fn steps(&self) -> usize {
        (self.t_final / self.dt).round().max(1.0) as usize
    }
}

#[derive(Clone, Debug)]
pub struct WaveState {
    pub u: Field,
    pub ut: Field,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonitorPoint {
    pub t: f64,
    /// H^1 norm of the difference v = u - w against the linear flow.
    pub v_h1: f64,
    pub vt_l2: f64,
    pub mass_v: f64,
    pub energy_v: f64,
    /// Mass and energy of the full solution.
    pub mass_u: f64,
    pub energy_u: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<WaveState>,
    pub monitor: Vec<MonitorPoint>,
    /// int ||u||_{L^4}^{24/7} dt and its exponent, accumulated by trapezoid.
    pub strichartz_l247_l4: f64,
    /// int ||u||_{L^6}^4 dt.
    pub strichartz_l4_l6: f64,
    pub blow_up: Option<f64>,
}

impl Trajectory {
    pub fn final_state(&self) -> &WaveState {
        self.states.last().expect("trajectory has states")
    }
}

/// Cached multiplier tables for one linear half/full step.
struct FlowTables {
    cos: Array2<f64>,
    sinc: Array2<f64>,
    dsin: Array2<f64>,
}

fn flow_tables(spec: &GridSpec, tau: f64) -> FlowTables {
    let n = spec.n();
    let mut cos = Array2::zeros((n, n));
    let mut sinc = Array2::zeros((n, n));
    let mut dsin = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let xi = spec.xi(i, j);
            let r = xi[0].hypot(xi[1]);
            let (s, c) = (tau * r).sin_cos();
            cos[(i, j)] = c;
            sinc[(i, j)] = if r == 0.0 { tau } else { s / r };
            dsin[(i, j)] = -r * s;
        }
    }
    FlowTables { cos, sinc, dsin }
}

type Pair = (Array2<Complex64>, Array2<Complex64>);

fn apply_flow(t: &FlowTables, z: &Pair) -> Pair {
    let mut u = z.0.clone();
    let mut v = z.1.clone();
    for ((idx, uu), vv) in u.indexed_iter_mut().zip(v.iter_mut()) {
        let a = *uu;
        let b = *vv;
        *uu = a * t.cos[idx] + b * t.sinc[idx];
        *vv = a * t.dsin[idx] + b * t.cos[idx];
    }
    (u, v)
}

/// The solver core: grid, dealias mask and linear flow tables for dt.
struct Stepper {
    spec: GridSpec,
    alpha: u32,
    sign: f64,
    mask: Option<Array2<f64>>,
    half: FlowTables,
    full: FlowTables,
    dt: f64,
}

impl Stepper {
    fn new(spec: GridSpec, cfg: &SolverConfig) -> Stepper {
        let mask = if cfg.dealias {
            Some(dealias_mask(&spec, cfg.alpha))
        } else {
            None
        };
        Stepper {
            spec,
            alpha: cfg.alpha,
            sign: cfg.sign.value(),
            mask,
            half: flow_tables(&spec, 0.5 * cfg.dt),
            full: flow_tables(&spec, cfg.dt),
            dt: cfg.dt,
        }
    }

    /// sign |u|^{alpha-1} u, dealiased, from a spectral array.
    fn nonlinearity(&self, u_hat: &Array2<Complex64>) -> Array2<Complex64> {
        let field = Field::from_values(self.spec, Representation::Spectral, u_hat.clone())
            .expect("shape");
        let mut phys = field.to_physical().into_values();
        let pow = (self.alpha - 1) as i32;
        for v in phys.iter_mut() {
            let amp = v.norm_sqr().powi(pow / 2);
            *v *= self.sign * amp;
        }
        let mut hat = Field::from_values(self.spec, Representation::Physical, phys)
            .expect("shape")
            .to_spectral()
            .into_values();
        if let Some(mask) = &self.mask {
            for (v, m) in hat.iter_mut().zip(mask.iter()) {
                *v *= *m;
            }
        }
        hat
    }

    /// One Lawson-RK4 step of the coupled system. `forcing` maps the stage
    /// states to the second-component forcings (one per component).
    fn step_system(
        &self,
        states: &[Pair],
        forcing: impl Fn(&Stepper, &[Pair]) -> Vec<Array2<Complex64>>,
    ) -> Vec<Pair> {
        let h = self.dt;
        let n_comp = states.len();
        let zero = Array2::<Complex64>::zeros(states[0].0.dim());

        let lift = |f: Vec<Array2<Complex64>>| -> Vec<Pair> {
            f.into_iter().map(|w| (zero.clone(), w)).collect()
        };

        // Stage 1 at tau = 0.
        let n1 = lift(forcing(self, states));
        // Stage 2 at tau = h/2: L_{h/2}(z + h/2 n1).
        let s2: Vec<Pair> = states
            .iter()
            .zip(n1.iter())
            .map(|(z, k)| {
                apply_flow(
                    &self.half,
                    &(add_scaled(&z.0, &k.0, 0.5 * h), add_scaled(&z.1, &k.1, 0.5 * h)),
                )
            })
            .collect();
        let n2 = lift(forcing(self, &s2));
        // Stage 3 at tau = h/2: L_{h/2} z + h/2 n2.
        let half_z: Vec<Pair> = states.iter().map(|z| apply_flow(&self.half, z)).collect();
        let s3: Vec<Pair> = half_z
            .iter()
            .zip(n2.iter())
            .map(|(z, k)| (add_scaled(&z.0, &k.0, 0.5 * h), add_scaled(&z.1, &k.1, 0.5 * h)))
            .collect();
        let n3 = lift(forcing(self, &s3));
        // Stage 4 at tau = h: L_h z + h L_{h/2} n3.
        let n3_half: Vec<Pair> = n3.iter().map(|k| apply_flow(&self.half, k)).collect();
        let full_z: Vec<Pair> = states.iter().map(|z| apply_flow(&self.full, z)).collect();
        let s4: Vec<Pair> = full_z
            .iter()
            .zip(n3_half.iter())
            .map(|(z, k)| (add_scaled(&z.0, &k.0, h), add_scaled(&z.1, &k.1, h)))
            .collect();
        let n4 = lift(forcing(self, &s4));

        // Combination: L_h z + h/6 (L_h n1 + 2 L_{h/2} n2 + 2 L_{h/2} n3 + n4).
        let mut out = Vec::with_capacity(n_comp);
        for c in 0..n_comp {
            let t1 = apply_flow(&self.full, &n1[c]);
            let t2 = apply_flow(&self.half, &n2[c]);
            let t3 = &n3_half[c];
            let mut u = full_z[c].0.clone();
            let mut v = full_z[c].1.clone();
            let w = h / 6.0;
            for ((((uu, a), b), cc), d) in u
                .iter_mut()
                .zip(t1.0.iter())
                .zip(t2.0.iter())
                .zip(t3.0.iter())
                .zip(n4[c].0.iter())
            {
                *uu += w * (a + 2.0 * b + 2.0 * cc + d);
            }
            for ((((vv, a), b), cc), d) in v
                .iter_mut()
                .zip(t1.1.iter())
                .zip(t2.1.iter())
                .zip(t3.1.iter())
                .zip(n4[c].1.iter())
            {
                *vv += w * (a + 2.0 * b + 2.0 * cc + d);
            }
            out.push((u, v));
        }
        out
    }
}

fn add_scaled(
    a: &Array2<Complex64>,
    b: &Array2<Complex64>,
    s: f64,
) -> Array2<Complex64> {
    let mut out = a.clone();
    for (x, y) in out.iter_mut().zip(b.iter()) {
        *x += s * *y;
    }
    out
}

/// Radial dealias mask: keeps modes with |m| < N/3 (alpha = 3) or
/// N/4 (alpha = 5).
pub fn dealias_mask(spec: &GridSpec, alpha: u32) -> Array2<f64> {
    let n = spec.n();
    let cutoff = match alpha {
        3 => n as f64 / 3.0,
        _ => n as f64 / 4.0,
    };
    Array2::from_shape_fn((n, n), |(i, j)| {
        let m1 = spec.mode(i) as f64;
        let m2 = spec.mode(j) as f64;
        if m1.hypot(m2) < cutoff {
            1.0
        } else {
            0.0
        }
    })
}

fn masked(f: &Field, mask: &Array2<f64>) -> Field {
    let mut hat = f.to_spectral();
    for (v, m) in hat.values_mut().iter_mut().zip(mask.iter()) {
        *v *= *m;
    }
    hat
}

fn validate_dt(f: &Field, g: &Field, cfg: &SolverConfig) -> Result<()> {
    // dt <= 0.5 / (max active frequency of the data).
    let mut r_active = 1.0f64;
    for h in [f.to_spectral(), g.to_spectral()] {
        let peak = h.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let spec = h.spec();
        for ((i, j), v) in h.values().indexed_iter() {
            if v.norm() > 1e-12 * peak {
                let xi = spec.xi(i, j);
                r_active = r_active.max(xi[0].hypot(xi[1]));
            }
        }
    }
    if cfg.dt > 0.5 / r_active {
        return Err(Error::Config(format!(
            "dt = {} too large for data with frequencies up to {:.1} (need <= {:.4})",
            cfg.dt,
            r_active,
            0.5 / r_active
        )));
    }
    Ok(())
}

fn check_finite(spec: &GridSpec, z: &Pair, t: f64) -> Result<()> {
    let _ = spec;
    for v in z.0.iter().chain(z.1.iter()) {
        if !v.re.is_finite() || !v.im.is_finite() || v.norm() > 1e12 {
            return Err(Error::BlowUp { t });
        }
    }
    Ok(())
}

/// One interaction-picture RK4 step.
pub fn step(state: &WaveState, cfg: &SolverConfig) -> Result<WaveState> {
    let spec = state.u.spec();
    let stepper = Stepper::new(spec, cfg);
    let z = (
        state.u.to_spectral().into_values(),
        state.ut.to_spectral().into_values(),
    );
    let next = stepper.step_system(std::slice::from_ref(&z), |st, zs| {
        vec![st.nonlinearity(&zs[0].0)]
    });
    let z = next.into_iter().next().unwrap();
    let t = state.t + cfg.dt;
    check_finite(&spec, &z, t)?;
    Ok(WaveState {
        u: Field::from_values(spec, Representation::Spectral, z.0)?,
        ut: Field::from_values(spec, Representation::Spectral, z.1)?,
        t,
    })
}

/// Mass and energy of a state:
/// M = int |u|^2, E = int 1/2 |u_t|^2 + 1/2 |grad u|^2 - sign/(alpha+1) |u|^{alpha+1}.
/// For the defocusing cubic equation this is the conserved
/// 1/2 |u_t|^2 + 1/2 |grad u|^2 + 1/4 |u|^4.
pub fn conserved_quantities(state: &WaveState, alpha: u32, sign: Sign) -> (f64, f64) {
    let u_hat = state.u.to_spectral();
    let ut_hat = state.ut.to_spectral();
    let spec = state.u.spec();
    let w = spec.freq_spacing().powi(2);
    let mass = w * kahan_sum(u_hat.values().iter().map(|v| v.norm_sqr()));
    let kinetic = 0.5 * w * kahan_sum(ut_hat.values().iter().map(|v| v.norm_sqr()));
    let gradient = 0.5
        * w
        * kahan_sum(u_hat.values().indexed_iter().map(|((i, j), v)| {
            let xi = spec.xi(i, j);
            (xi[0] * xi[0] + xi[1] * xi[1]) * v.norm_sqr()
        }));
    let h2 = spec.spacing().powi(2);
    let phys = state.u.to_physical();
    let pw = alpha as i32 + 1;
    let potential_integral =
        h2 * kahan_sum(phys.values().iter().map(|v| v.norm().powi(pw)));
    let potential = -sign.value() / (alpha as f64 + 1.0) * potential_integral;
    (mass, kinetic + gradient + potential)
}

/// Full nonlinear solve with monitors.
pub fn solve(f: &Field, g: &Field, cfg: &SolverConfig) -> Result<Trajectory> {
    let spec = f.spec();
    if g.spec() != spec {
        return Err(Error::Usage("data fields live on different grids".into()));
    }
    validate_dt(f, g, cfg)?;
    let stepper = Stepper::new(spec, cfg);
    let (f0, g0) = match &stepper.mask {
        Some(m) => (masked(f, m), masked(g, m)),
        None => (f.to_spectral(), g.to_spectral()),
    };
    let n_steps = cfg.steps();
    let monitor_stride = (n_steps / 64).max(1);

    let mut z = (f0.values().clone(), g0.values().clone());
    let mut states = Vec::new();
    let mut monitor = Vec::new();
    let mut blow_up = None;

    let mut sample_steps: Vec<usize> = cfg
        .sample_times
        .iter()
        .map(|t| ((t / cfg.dt).round() as usize).min(n_steps))
        .collect();
    sample_steps.sort_unstable();
    sample_steps.dedup();

    let mut strich_247 = 0.0;
    let mut strich_46 = 0.0;
    let mut prev_l4: Option<f64> = None;
    let mut prev_l6: Option<f64> = None;

    let snapshot = |z: &Pair, t: f64| -> Result<WaveState> {
        Ok(WaveState {
            u: Field::from_values(spec, Representation::Spectral, z.0.clone())?,
            ut: Field::from_values(spec, Representation::Spectral, z.1.clone())?,
            t,
        })
    };

    for step_idx in 0..=n_steps {
        let t = step_idx as f64 * cfg.dt;

        // Strichartz accumulators (trapezoid in t).
        let phys = Field::from_values(spec, Representation::Spectral, z.0.clone())?
            .to_physical();
        let l4 = phys.lebesgue_norm(Lp::Finite(4.0));
        let l6 = phys.lebesgue_norm(Lp::Finite(6.0));
        if let (Some(p4), Some(p6)) = (prev_l4, prev_l6) {
            strich_247 += 0.5 * cfg.dt * (p4.powf(24.0 / 7.0) + l4.powf(24.0 / 7.0));
            strich_46 += 0.5 * cfg.dt * (p6.powi(4) + l6.powi(4));
        }
        prev_l4 = Some(l4);
        prev_l6 = Some(l6);

        if step_idx % monitor_stride == 0 || step_idx == n_steps {
            let state = snapshot(&z, t)?;
            let (w, wt) = wave_pair_full(&f0, &g0, t)?;
            let v = state
                .u
                .to_spectral()
                .axpby(Complex64::new(1.0, 0.0), &w, Complex64::new(-1.0, 0.0))?;
            let vt = state
                .ut
                .to_spectral()
                .axpby(Complex64::new(1.0, 0.0), &wt, Complex64::new(-1.0, 0.0))?;
            let v_state = WaveState {
                u: v,
                ut: vt,
                t,
            };
            let (mv, ev) = conserved_quantities(&v_state, cfg.alpha, cfg.sign);
            let (mu, eu) = conserved_quantities(&state, cfg.alpha, cfg.sign);
            let v_h1 = sobolev_h1(&v_state.u);
            let vt_l2 = v_state.ut.l2_norm();
            monitor.push(MonitorPoint {
                t,
                v_h1,
                vt_l2,
                mass_v: mv,
                energy_v: ev,
                mass_u: mu,
                energy_u: eu,
            });
            if !v_h1.is_finite() || v_h1 + vt_l2 > 1e8 {
                blow_up = Some(t);
                states.push(state);
                break;
            }
        }

        if sample_steps.contains(&step_idx) || step_idx == n_steps {
            states.push(snapshot(&z, t)?);
        }
        if step_idx == n_steps {
            break;
        }

        let next = stepper.step_system(std::slice::from_ref(&z), |st, zs| {
            vec![st.nonlinearity(&zs[0].0)]
        });
        z = next.into_iter().next().unwrap();
        if let Err(e) = check_finite(&spec, &z, t + cfg.dt) {
            // Keep the last valid state and stop.
            blow_up = Some(t + cfg.dt);
            let _ = e;
            break;
        }
    }

    Ok(Trajectory {
        states,
        monitor,
        strichartz_l247_l4: strich_247,
        strichartz_l4_l6: strich_46,
        blow_up,
    })
}

fn sobolev_h1(f: &Field) -> f64 {
    let hat = f.to_spectral();
    let spec = f.spec();
    let w = spec.freq_spacing().powi(2);
    (w * kahan_sum(hat.values().indexed_iter().map(|((i, j), v)| {
        let xi = spec.xi(i, j);
        (1.0 + xi[0] * xi[0] + xi[1] * xi[1]) * v.norm_sqr()
    })))
    .sqrt()
}

/// Picard iterates A_1..A_{m_max} sampled on a uniform time grid.
pub struct PicardSeries {
    pub times: Vec<f64>,
    /// snapshots[sample][order-1] = A_order(t).
    pub snapshots: Vec<Vec<Field>>,
}

impl PicardSeries {
    /// Partial sum sum_{m <= m_max} A_m at a sample index.
    pub fn partial_sum(&self, sample: usize, m_max: u32) -> Field {
        let mut acc = self.snapshots[sample][0].clone();
        for m in 2..=m_max {
            acc = acc
                .axpby(
                    Complex64::new(1.0, 0.0),
                    &self.snapshots[sample][(m - 1) as usize],
                    Complex64::new(1.0, 0.0),
                )
                .unwrap();
        }
        acc
    }
}

fn compositions(m: u32) -> Vec<(u32, u32, u32)> {
    let mut out = Vec::new();
    for a in 1..m {
        for b in 1..m {
            if a + b >= m {
                continue;
            }
            out.push((a, b, m - a - b));
        }
    }
    out
}

/// Computes A_1..A_{m_max} (cubic nonlinearity only).
pub fn picard_iterates(
    f: &Field,
    g: &Field,
    cfg: &SolverConfig,
    m_max: u32,
) -> Result<PicardSeries> {
    if cfg.alpha != 3 {
        return Err(Error::Config(
            "Picard recursion is implemented for alpha = 3".into(),
        ));
    }
    if m_max == 0 || m_max > 9 {
        return Err(Error::Config("Picard order must lie in 1..=9".into()));
    }
    let spec = f.spec();
    validate_dt(f, g, cfg)?;
    let stepper = Stepper::new(spec, cfg);
    let (f0, g0) = match &stepper.mask {
        Some(m) => (masked(f, m), masked(g, m)),
        None => (f.to_spectral(), g.to_spectral()),
    };
    let n = spec.n();
    let zero = Array2::<Complex64>::zeros((n, n));

    // Component 0 is A_1 (linear, no forcing); component m-1 is A_m.
    let mut comps: Vec<Pair> = Vec::new();
    comps.push((f0.values().clone(), g0.values().clone()));
    for _ in 2..=m_max {
        comps.push((zero.clone(), zero.clone()));
    }
    let combos: Vec<Vec<(u32, u32, u32)>> = (1..=m_max).map(compositions).collect();
    let slot = cfg.conjugate_slot;

    let forcing = move |st: &Stepper, zs: &[Pair]| -> Vec<Array2<Complex64>> {
        // Physical stage fields for every order.
        let phys: Vec<Array2<Complex64>> = zs
            .iter()
            .map(|z| {
                Field::from_values(st.spec, Representation::Spectral, z.0.clone())
                    .expect("shape")
                    .to_physical()
                    .into_values()
            })
            .collect();
        let mut out = Vec::with_capacity(zs.len());
        for (mi, combo) in combos.iter().enumerate() {
            if mi == 0 || combo.is_empty() {
                out.push(Array2::zeros(zs[0].0.dim()));
                continue;
            }
            let mut prod_sum = Array2::<Complex64>::zeros(zs[0].0.dim());
            for &(a, b, c) in combo {
                let fa = &phys[(a - 1) as usize];
                let fb = &phys[(b - 1) as usize];
                let fc = &phys[(c - 1) as usize];
                for (((p, x), y), zv) in prod_sum
                    .iter_mut()
                    .zip(fa.iter())
                    .zip(fb.iter())
                    .zip(fc.iter())
                {
                    *p += match slot {
                        ConjugateSlot::Middle => x * y.conj() * zv,
                        ConjugateSlot::First => x.conj() * *y * zv,
                    };
                }
            }
            let mut hat = Field::from_values(st.spec, Representation::Physical, prod_sum)
                .expect("shape")
                .to_spectral()
                .into_values();
            if let Some(mask) = &st.mask {
                for (v, m) in hat.iter_mut().zip(mask.iter()) {
                    *v *= st.sign * *m;
                }
            } else {
                for v in hat.iter_mut() {
                    *v *= st.sign;
                }
            }
            out.push(hat);
        }
        out
    };

    let n_steps = cfg.steps();
    let mut times = vec![0.0];
    let mut snapshots = vec![comps
        .iter()
        .map(|z| Field::from_values(spec, Representation::Spectral, z.0.clone()).unwrap())
        .collect::<Vec<_>>()];
    for step_idx in 0..n_steps {
        comps = stepper.step_system(&comps, &forcing);
        let t = (step_idx + 1) as f64 * cfg.dt;
        for z in &comps {
            check_finite(&spec, z, t)?;
        }
        times.push(t);
        snapshots.push(
            comps
                .iter()
                .map(|z| {
                    Field::from_values(spec, Representation::Spectral, z.0.clone()).unwrap()
                })
                .collect(),
        );
    }
    Ok(PicardSeries { times, snapshots })
}

/// Remainder series u^0..u^{n-1} and the residual v = u - sum u^j.
pub struct RemainderSeries {
    pub times: Vec<f64>,
    /// snapshots[sample][j] = u^j(t); the last entry holds the full u.
    pub snapshots: Vec<Vec<Field>>,
    /// v(t) = u - sum_{j < n} u^j at every sample.
    pub residual: Vec<Field>,
    /// sup_t ||v||_{L^2} and the L^4-in-time quadrature of ||v||_inf.
    pub v_linf_l2: f64,
    pub v_l4_linf: f64,
}

pub fn remainder_series(
    f: &Field,
    g: &Field,
    cfg: &SolverConfig,
    n_orders: u32,
) -> Result<RemainderSeries> {
    if cfg.alpha != 3 {
        return Err(Error::Config(
            "remainder series is implemented for alpha = 3".into(),
        ));
    }
    if n_orders == 0 || n_orders > 6 {
        return Err(Error::Config("remainder order must lie in 1..=6".into()));
    }
    let spec = f.spec();
    validate_dt(f, g, cfg)?;
    let stepper = Stepper::new(spec, cfg);
    let (f0, g0) = match &stepper.mask {
        Some(m) => (masked(f, m), masked(g, m)),
        None => (f.to_spectral(), g.to_spectral()),
    };

    // Components: u^1..u^{n-1} (zero data), then the full solution u.
    // u^0 = L(f, g) is evaluated in closed form at stage times.
    let n = spec.n();
    let zero = Array2::<Complex64>::zeros((n, n));
    let n_free = (n_orders - 1) as usize;
    let mut comps: Vec<Pair> = vec![(zero.clone(), zero.clone()); n_free];
    comps.push((f0.values().clone(), g0.values().clone()));

    let cubic = |st: &Stepper, s: &Array2<Complex64>| -> Array2<Complex64> {
        // |S|^2 S from a physical array, then transform + mask + sign.
        let mut w = s.clone();
        for v in w.iter_mut() {
            *v *= v.norm_sqr();
        }
        let mut hat = Field::from_values(st.spec, Representation::Physical, w)
            .expect("shape")
            .to_spectral()
            .into_values();
        match &st.mask {
            Some(mask) => {
                for (v, m) in hat.iter_mut().zip(mask.iter()) {
                    *v *= st.sign * *m;
                }
            }
            None => {
                for v in hat.iter_mut() {
                    *v *= st.sign;
                }
            }
        }
        hat
    };

    // Track the stage offset within the current step to evaluate u^0.
    use std::cell::Cell;
    use std::rc::Rc;
    let t_base = Rc::new(Cell::new(0.0f64));
    let stage_count = Rc::new(Cell::new(0usize));
    let t_base_in = Rc::clone(&t_base);
    let stage_in = Rc::clone(&stage_count);
    let f0c = f0.clone();
    let g0c = g0.clone();

    let forcing = move |st: &Stepper, zs: &[Pair]| -> Vec<Array2<Complex64>> {
        let stage = stage_in.get();
        stage_in.set((stage + 1) % 4);
        let tau = match stage {
            0 => 0.0,
            1 | 2 => 0.5 * st.dt,
            _ => st.dt,
        };
        let t_stage = t_base.get() + tau;
        let (w0, _) = wave_pair_full(&f0c, &g0c, t_stage).expect("linear flow");
        let u0 = w0.to_physical().into_values();

        let phys: Vec<Array2<Complex64>> = zs
            .iter()
            .map(|z| {
                Field::from_values(st.spec, Representation::Spectral, z.0.clone())
                    .expect("shape")
                    .to_physical()
                    .into_values()
            })
            .collect();
        let n_free = zs.len() - 1;
        let mut out = Vec::with_capacity(zs.len());
        // Forcing for u^j: sign (|S_j|^2 S_j - |S_{j-1}|^2 S_{j-1}),
        // S_j = u^0 + ... + u^{j-1}.
        let mut s_prev = u0.clone();
        let mut cube_prev = cubic(st, &s_prev);
        for j in 1..=n_free {
            let s_j = if j == 1 {
                s_prev.clone()
            } else {
                let mut s = s_prev.clone();
                for (a, b) in s.iter_mut().zip(phys[j - 2].iter()) {
                    *a += *b;
                }
                s
            };
            let cube_j = if j == 1 {
                cube_prev.clone()
            } else {
                cubic(st, &s_j)
            };
            let mut g_j = cube_j.clone();
            if j > 1 {
                for (a, b) in g_j.iter_mut().zip(cube_prev.iter()) {
                    *a -= *b;
                }
            }
            out.push(g_j);
            s_prev = s_j;
            cube_prev = cube_j;
        }
        // Full solution forcing.
        out.push(st.nonlinearity(&zs[n_free].0));
        out
    };

    let n_steps = cfg.steps();
    let mut times = vec![0.0];
    let fields_of = |comps: &[Pair], t: f64| -> Result<Vec<Field>> {
        let (w0, _) = wave_pair_full(&f0, &g0, t)?;
        let mut row = vec![w0];
        for z in comps {
            row.push(Field::from_values(spec, Representation::Spectral, z.0.clone())?);
        }
        Ok(row)
    };
    let mut snapshots = vec![fields_of(&comps, 0.0)?];
    for step_idx in 0..n_steps {
        t_base.set(step_idx as f64 * cfg.dt);
        comps = stepper.step_system(&comps, &forcing);
        let t = (step_idx + 1) as f64 * cfg.dt;
        for z in &comps {
            check_finite(&spec, z, t)?;
        }
        times.push(t);
        snapshots.push(fields_of(&comps, t)?);
    }

    // Residual v = u - sum_{j=0}^{n-1} u^j at every sample.
    let mut residual = Vec::with_capacity(times.len());
    let mut v_linf_l2 = 0.0f64;
    let mut sup_series = Vec::with_capacity(times.len());
    for row in &snapshots {
        let u_full = row.last().unwrap().clone();
        let mut v = u_full;
        for uj in row.iter().take(row.len() - 1) {
            v = v.axpby(Complex64::new(1.0, 0.0), uj, Complex64::new(-1.0, 0.0))?;
        }
        v_linf_l2 = v_linf_l2.max(v.l2_norm());
        sup_series.push(v.lebesgue_norm(Lp::Infinity));
        residual.push(v);
    }
    let dt = cfg.dt;
    let mut v_l4_linf = 0.0;
    for i in 1..sup_series.len() {
        v_l4_linf += 0.5 * dt * (sup_series[i - 1].powi(4) + sup_series[i].powi(4));
    }
    let v_l4_linf = v_l4_linf.powf(0.25);

    Ok(RemainderSeries {
        times,
        snapshots,
        residual,
        v_linf_l2,
        v_l4_linf,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GronwallReport {
    pub times: Vec<f64>,
    /// Q(t) = M(v) + E(v) + 1.
    pub q: Vec<f64>,
    /// sup_t d/dt log Q from centered differences.
    pub c_hat: f64,
    /// Q(t) <= Q(0) exp(c_hat t) on all samples.
    pub bound_holds: bool,
    pub divergence_time: Option<f64>,
}

/// Gronwall monitor for the difference solution of a trajectory.
pub fn gronwall_monitor(traj: &Trajectory) -> GronwallReport {
    let times: Vec<f64> = traj.monitor.iter().map(|m| m.t).collect();
    let q: Vec<f64> = traj
        .monitor
        .iter()
        .map(|m| m.mass_v + m.energy_v + 1.0)
        .collect();
    let mut c_hat = 0.0f64;
    for i in 1..q.len() {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            continue;
        }
        let rate = (q[i].ln() - q[i - 1].ln()) / dt;
        c_hat = c_hat.max(rate);
    }
    let q0 = q.first().copied().unwrap_or(1.0);
    let bound_holds = times
        .iter()
        .zip(q.iter())
        .all(|(t, qv)| *qv <= q0 * (c_hat * t).exp() * (1.0 + 1e-9) + 1e-12);
    GronwallReport {
        times,
        q,
        c_hat,
        bound_holds,
        divergence_time: traj.blow_up,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::gaussian;
    use crate::grid::create_grid;

    fn small_grid() -> GridSpec {
        create_grid(128, 16.0).unwrap()
    }

    fn gaussian_data(spec: &GridSpec, amp: f64) -> (Field, Field) {
        let f = gaussian(spec, [0.0, 0.0], 1.5, amp);
        let g = gaussian(spec, [0.5, -0.3], 2.0, 0.3 * amp);
        (f, g)
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = small_grid();
        let zero = Field::zeros(spec, Representation::Spectral);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 64.0, 0.25).unwrap();
        let traj = solve(&zero, &zero, &cfg).unwrap();
        assert!(traj.final_state().u.l2_norm() == 0.0);
        assert!(traj.blow_up.is_none());
    }

    #[test]
    fn linear_regime_matches_wave_pair() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.8);
        let mut cfg = SolverConfig::new(3, Sign::Off, 1.0 / 64.0, 0.5).unwrap();
        cfg.dealias = false;
        let traj = solve(&f, &g, &cfg).unwrap();
        let direct = crate::propagator::wave_pair(&f.to_spectral(), &g.to_spectral(), 0.5)
            .unwrap();
        let got = traj.final_state().u.clone();
        assert!(got.rel_l2_distance(&direct) < 1e-11);
    }

    #[test]
    fn single_mode_matches_ode_oracle_at_fourth_order() {
        // Complex single-mode data keeps the dynamics in one Fourier mode:
        // a'' = -|xi0|^2 a + sign |a|^2 a. The oracle integrates this scalar
        // ODE with a tiny-step classical RK4, independently of the grid code.
        let spec = create_grid(64, 2.0 * std::f64::consts::PI).unwrap();
        let xi0 = [2.0, -1.0];
        let r2 = xi0[0] * xi0[0] + xi0[1] * xi0[1];
        let a0 = Complex64::new(0.35, -0.1);
        let b0 = Complex64::new(0.05, 0.2);
        let f = Field::from_physical_fn(spec, |x| {
            a0 * Complex64::new(0.0, x[0] * xi0[0] + x[1] * xi0[1]).exp()
        });
        let g = Field::from_physical_fn(spec, |x| {
            b0 * Complex64::new(0.0, x[0] * xi0[0] + x[1] * xi0[1]).exp()
        });
        let t_final = 0.5;

        let oracle = {
            let rhs = |a: Complex64, b: Complex64| -> (Complex64, Complex64) {
                (b, -r2 * a + a.norm_sqr() * a)
            };
            let mut a = a0;
            let mut b = b0;
            let n = 200000;
            let h = t_final / n as f64;
            for _ in 0..n {
                let (k1a, k1b) = rhs(a, b);
                let (k2a, k2b) = rhs(a + 0.5 * h * k1a, b + 0.5 * h * k1b);
                let (k3a, k3b) = rhs(a + 0.5 * h * k2a, b + 0.5 * h * k2b);
                let (k4a, k4b) = rhs(a + h * k3a, b + h * k3b);
                a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
                b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            }
            a
        };

        let error_at = |dt: f64| -> f64 {
            let cfg = SolverConfig::new(3, Sign::Focusing, dt, t_final).unwrap();
            let traj = solve(&f, &g, &cfg).unwrap();
            let hat = traj.final_state().u.to_spectral();
            let idx = (
                spec.index_of_mode(xi0[0] as i64),
                spec.index_of_mode(xi0[1] as i64),
            );
            // Convert the spectral coefficient back to the mode amplitude.
            let coeff = hat.values()[idx];
            let unit = Field::from_physical_fn(spec, |x| {
                Complex64::new(0.0, x[0] * xi0[0] + x[1] * xi0[1]).exp()
            })
            .to_spectral()
            .values()[idx];
            (coeff / unit - oracle).norm()
        };

        let e1 = error_at(1.0 / 16.0);
        let e2 = error_at(1.0 / 32.0);
        let e3 = error_at(1.0 / 64.0);
        let o12 = (e1 / e2).log2();
        let o23 = (e2 / e3).log2();
        assert!(
            (3.5..=4.5).contains(&o12) && (3.5..=4.5).contains(&o23),
            "orders {o12:.2}, {o23:.2} (errors {e1:.3e}, {e2:.3e}, {e3:.3e})"
        );
    }

    #[test]
    fn defocusing_energy_is_conserved() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.8);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 256.0, 0.5).unwrap();
        let traj = solve(&f, &g, &cfg).unwrap();
        let e0 = traj.monitor.first().unwrap().energy_u;
        let drift = traj
            .monitor
            .iter()
            .map(|m| (m.energy_u - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift < 1e-6, "energy drift {drift:.3e}");
        // Mass of the full (complex) solution is not conserved for real data,
        // but stays finite; the dealias mask keeps the spectrum inside the
        // 2/3 ball.
        let hat = traj.final_state().u.to_spectral();
        let n = spec.n();
        for ((i, j), v) in hat.values().indexed_iter() {
            let m1 = spec.mode(i) as f64;
            let m2 = spec.mode(j) as f64;
            if m1.hypot(m2) >= n as f64 / 3.0 {
                assert_eq!(v.norm(), 0.0, "dealias mask violated");
            }
        }
    }

    #[test]
    fn focusing_and_defocusing_differ() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 1.0);
        let cfg_f = SolverConfig::new(3, Sign::Focusing, 1.0 / 128.0, 0.5).unwrap();
        let cfg_d = SolverConfig::new(3, Sign::Defocusing, 1.0 / 128.0, 0.5).unwrap();
        let uf = solve(&f, &g, &cfg_f).unwrap();
        let ud = solve(&f, &g, &cfg_d).unwrap();
        let dist = uf
            .final_state()
            .u
            .rel_l2_distance(&ud.final_state().u);
        assert!(dist > 1e-4, "sign must enter the flow, distance {dist}");
    }

    #[test]
    fn time_reversal_recovers_data() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.6);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 256.0, 0.5).unwrap();
        let fwd = solve(&f, &g, &cfg).unwrap();
        let end = fwd.final_state();
        let neg_ut = end.ut.scale(Complex64::new(-1.0, 0.0));
        let back = solve(&end.u, &neg_ut, &cfg).unwrap();
        let u_back = back.final_state().u.clone();
        // Compare against the dealiased data the forward solver actually used.
        let mask = dealias_mask(&spec, 3);
        let f_masked = masked(&f, &mask);
        assert!(u_back.rel_l2_distance(&f_masked) < 1e-6);
    }

    #[test]
    fn conserved_quantities_elementary_cases() {
        let spec = small_grid();
        let zero = Field::zeros(spec, Representation::Spectral);
        let state = WaveState {
            u: zero.clone(),
            ut: zero.clone(),
            t: 0.0,
        };
        let (m, e) = conserved_quantities(&state, 3, Sign::Defocusing);
        assert_eq!(m, 0.0);
        assert_eq!(e, 0.0);

        // u = 0, ut = plane-wave of amplitude a: E = 1/2 |a|^2 L^2.
        let a = Complex64::new(0.6, 0.3);
        let ut = Field::from_physical_fn(spec, |x| {
            a * Complex64::new(0.0, 2.0 * std::f64::consts::PI * x[0] / 16.0 * 8.0).exp()
        });
        let state = WaveState {
            u: zero.clone(),
            ut: ut.to_spectral(),
            t: 0.0,
        };
        let (_, e) = conserved_quantities(&state, 3, Sign::Defocusing);
        let expected = 0.5 * a.norm_sqr() * 16.0f64.powi(2);
        assert!((e - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn conserved_energy_dual_pathway_gaussian() {
        // E for (u = Gaussian, ut = 0) against an independent quadrature:
        // spectral 1/2 |xi|^2 |u^|^2 plus physical 1/4 int |u|^4.
        let spec = create_grid(256, 32.0).unwrap();
        let u = gaussian(&spec, [0.0, 0.0], 1.0, 1.0);
        let zero = Field::zeros(spec, Representation::Spectral);
        let state = WaveState {
            u: u.clone(),
            ut: zero,
            t: 0.0,
        };
        let (_, e) = conserved_quantities(&state, 3, Sign::Defocusing);
        let hat = u.to_spectral();
        let w = spec.freq_spacing().powi(2);
        let grad: f64 = hat
            .values()
            .indexed_iter()
            .map(|((i, j), v)| {
                let xi = spec.xi(i, j);
                0.5 * (xi[0] * xi[0] + xi[1] * xi[1]) * v.norm_sqr() * w
            })
            .sum();
        let h2 = spec.spacing().powi(2);
        let quart: f64 = u
            .to_physical()
            .values()
            .iter()
            .map(|v| 0.25 * v.norm().powi(4) * h2)
            .sum();
        let expected = grad + quart;
        assert!((e - expected).abs() / expected < 1e-8, "{e} vs {expected}");
    }

    #[test]
    fn picard_even_orders_vanish_and_homogeneity() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.2);
        let mut cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 64.0, 0.5).unwrap();
        cfg.sample_times = vec![0.5];
        let series = picard_iterates(&f, &g, &cfg, 5).unwrap();
        let last = series.snapshots.last().unwrap();
        // Even iterates vanish identically.
        assert!(last[1].l2_norm() < 1e-10);
        assert!(last[3].l2_norm() < 1e-10);
        assert!(last[2].l2_norm() > 0.0);

        // lambda-homogeneity: A_m(lambda data) = lambda^m A_m(data).
        let lam = 0.5;
        let f2 = f.scale(Complex64::new(lam, 0.0));
        let g2 = g.scale(Complex64::new(lam, 0.0));
        let series2 = picard_iterates(&f2, &g2, &cfg, 5).unwrap();
        let last2 = series2.snapshots.last().unwrap();
        for m in [1usize, 3, 5] {
            let scaled = last[m - 1].scale(Complex64::new(lam.powi(m as i32), 0.0));
            let diff = last2[m - 1].rel_l2_distance(&scaled);
            assert!(diff < 1e-8, "order {m}: homogeneity defect {diff:.2e}");
        }
    }

    #[test]
    fn picard_partial_sums_converge_to_solution() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.25);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 128.0, 0.75).unwrap();
        let series = picard_iterates(&f, &g, &cfg, 7).unwrap();
        let reference = solve(&f, &g, &cfg).unwrap();

        // sup_t || u - sum_{m<=M} A_m ||_{L^2} over the step grid; sampled at
        // the end state for economy (the residual is monotone in t here).
        let end = reference.final_state();
        let sample = series.times.len() - 1;
        let mut residuals = Vec::new();
        for m_max in [1u32, 3, 5, 7] {
            let partial = series.partial_sum(sample, m_max);
            residuals.push(
                partial
                    .axpby(Complex64::new(1.0, 0.0), &end.u, Complex64::new(-1.0, 0.0))
                    .unwrap()
                    .l2_norm(),
            );
        }
        for w in residuals.windows(2) {
            assert!(
                w[1] < 0.5 * w[0],
                "Picard residuals not geometric: {residuals:?}"
            );
        }
    }

    #[test]
    fn remainder_series_structure() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.25);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 64.0, 0.5).unwrap();

        // n = 1: v = u - u^0 matches the plain difference pathway bit-for-bit.
        let rem = remainder_series(&f, &g, &cfg, 1).unwrap();
        let traj = solve(&f, &g, &cfg).unwrap();
        let end_u = traj.final_state();
        let mask = dealias_mask(&spec, 3);
        let (w, _) = wave_pair_full(&masked(&f, &mask), &masked(&g, &mask), 0.5).unwrap();
        let v_direct = end_u
            .u
            .to_spectral()
            .axpby(Complex64::new(1.0, 0.0), &w, Complex64::new(-1.0, 0.0))
            .unwrap();
        let v_series = rem.residual.last().unwrap();
        assert_eq!(v_series.max_abs_diff(&v_direct), 0.0);

        // u^1 consists of Picard orders >= 3: it matches A_3 at small data.
        let rem2 = remainder_series(&f, &g, &cfg, 2).unwrap();
        let picard = picard_iterates(&f, &g, &cfg, 3).unwrap();
        let u1 = rem2.snapshots.last().unwrap()[1].clone();
        let a3 = picard.snapshots.last().unwrap()[2].clone();
        let rel = u1.rel_l2_distance(&a3);
        assert!(rel < 1e-3, "u^1 vs A_3: {rel:.2e}");

        // ||v|| decreases with the number of subtracted orders.
        let rem3 = remainder_series(&f, &g, &cfg, 3).unwrap();
        assert!(rem2.v_linf_l2 < rem.v_linf_l2);
        assert!(rem3.v_linf_l2 < rem2.v_linf_l2);
    }

    #[test]
    fn gronwall_monitor_certifies_growth() {
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.8);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 128.0, 1.0).unwrap();
        let traj = solve(&f, &g, &cfg).unwrap();
        let rep = gronwall_monitor(&traj);
        assert!(rep.c_hat.is_finite());
        assert!(rep.bound_holds);
        assert!(rep.divergence_time.is_none());
        assert!(rep.q.iter().all(|q| *q >= 1.0));

        // Zero data: v solves the defocusing equation with zero data, Q = 1.
        let zero = Field::zeros(spec, Representation::Spectral);
        let traj0 = solve(&zero, &zero, &cfg).unwrap();
        let rep0 = gronwall_monitor(&traj0);
        assert!(rep0.q.iter().all(|q| (q - 1.0).abs() < 1e-14));
        assert_eq!(rep0.c_hat, 0.0);
    }

    #[test]
    fn doubling_amplitude_increases_gronwall_rate() {
        let spec = small_grid();
        let cfg = SolverConfig::new(3, Sign::Defocusing, 1.0 / 128.0, 0.5).unwrap();
        let (f1, g1) = gaussian_data(&spec, 0.5);
        let (f2, g2) = gaussian_data(&spec, 1.0);
        let r1 = gronwall_monitor(&solve(&f1, &g1, &cfg).unwrap());
        let r2 = gronwall_monitor(&solve(&f2, &g2, &cfg).unwrap());
        // Reported as a trend; both finite.
        println!("c_hat(amp 0.5) = {:.4}, c_hat(amp 1.0) = {:.4}", r1.c_hat, r2.c_hat);
        assert!(r1.c_hat.is_finite() && r2.c_hat.is_finite());
    }

    #[test]
    fn blow_up_is_detected_for_large_focusing_data() {
        let spec = small_grid();
        let f = gaussian(&spec, [0.0, 0.0], 1.0, 40.0);
        let g = Field::zeros(spec, Representation::Spectral);
        let cfg = SolverConfig::new(3, Sign::Focusing, 1.0 / 128.0, 2.0).unwrap();
        let traj = solve(&f, &g, &cfg).unwrap();
        assert!(traj.blow_up.is_some(), "expected a blow-up signal");
        let rep = gronwall_monitor(&traj);
        assert!(rep.divergence_time.is_some());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(2, Sign::Focusing, 0.01, 1.0).is_err());
        assert!(SolverConfig::new(4, Sign::Focusing, 0.01, 1.0).is_err());
        assert!(SolverConfig::new(3, Sign::Focusing, -0.01, 1.0).is_err());
        assert!(SolverConfig::new(5, Sign::Defocusing, 0.01, 1.0).is_ok());

        // dt bound against the data's active frequencies.
        let spec = small_grid();
        let (f, g) = gaussian_data(&spec, 0.5);
        let cfg = SolverConfig::new(3, Sign::Defocusing, 0.2, 1.0).unwrap();
        assert!(matches!(solve(&f, &g, &cfg), Err(Error::Config(_))));
    }
}
