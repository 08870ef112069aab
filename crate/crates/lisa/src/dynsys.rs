//! Benchmark dynamical systems and a fixed-step RK4 integrator.

use crate::error::{Error, Result};
use crate::series::TimeSeries;
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A benchmark system with its parameters. Defaults follow the usual
/// chaotic regimes; every parameter is overridable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OdeSystem {
    Lorenz63 {
        sigma: f64,
        rho: f64,
        beta: f64,
    },
    Lorenz96 {
        k: usize,
        forcing: f64,
    },
    Rossler {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Forced Duffing oscillator observed as (x, v, cos wt, sin wt): the
    /// drive phase is carried in the state, so the system is autonomous.
    DuffingNess {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        omega: f64,
    },
    /// Forced Duffing oscillator observed as (x, v) only.
    DuffingNe {
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        omega: f64,
    },
    Chua {
        alpha: f64,
        beta: f64,
        m0: f64,
        m1: f64,
    },
    Halvorsen {
        a: f64,
    },
    /// Quasiperiodic curve on a torus, evaluated in closed form rather than
    /// integrated, so the radial bounds hold exactly.
    Torus {
        radius_major: f64,
        radius_minor: f64,
        omega1: f64,
        omega2: f64,
    },
}

impl OdeSystem {
    pub fn lorenz63() -> Self {
        OdeSystem::Lorenz63 {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }

    pub fn lorenz96() -> Self {
        OdeSystem::Lorenz96 { k: 5, forcing: 8.0 }
    }

    pub fn rossler() -> Self {
        OdeSystem::Rossler {
            a: 0.2,
            b: 0.2,
            c: 5.7,
        }
    }

    pub fn duffing_ness() -> Self {
        OdeSystem::DuffingNess {
            alpha: 0.2,
            beta: 0.2,
            gamma: 5.7,
            delta: 0.0,
            omega: 2.0,
        }
    }

    pub fn duffing_ne() -> Self {
        OdeSystem::DuffingNe {
            alpha: 0.2,
            beta: 0.2,
            gamma: 5.7,
            delta: 0.0,
            omega: 2.0,
        }
    }

    pub fn chua() -> Self {
        OdeSystem::Chua {
            alpha: 15.6,
            beta: 28.0,
            m0: -1.15,
            m1: -0.70,
        }
    }

    pub fn halvorsen() -> Self {
        OdeSystem::Halvorsen { a: 1.4 }
    }

    pub fn torus() -> Self {
        OdeSystem::Torus {
            radius_major: 2.0,
            radius_minor: 0.7,
            omega1: 1.0,
            omega2: std::f64::consts::SQRT_2,
        }
    }

    /// System with default parameters, by config/CLI name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lorenz63" => Ok(Self::lorenz63()),
            "lorenz96" => Ok(Self::lorenz96()),
            "rossler" => Ok(Self::rossler()),
            "duffing_ness" | "duffing-ness" => Ok(Self::duffing_ness()),
            "duffing_ne" | "duffing-ne" => Ok(Self::duffing_ne()),
            "chua" => Ok(Self::chua()),
            "halvorsen" => Ok(Self::halvorsen()),
            "torus" => Ok(Self::torus()),
            other => Err(Error::InvalidArgument(format!(
                "unknown system {other:?}; expected one of lorenz63, lorenz96, rossler, \
                 duffing_ness, duffing_ne, chua, halvorsen, torus"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OdeSystem::Lorenz63 { .. } => "lorenz63",
            OdeSystem::Lorenz96 { .. } => "lorenz96",
            OdeSystem::Rossler { .. } => "rossler",
            OdeSystem::DuffingNess { .. } => "duffing_ness",
            OdeSystem::DuffingNe { .. } => "duffing_ne",
            OdeSystem::Chua { .. } => "chua",
            OdeSystem::Halvorsen { .. } => "halvorsen",
            OdeSystem::Torus { .. } => "torus",
        }
    }

    /// State dimension as observed by the pipeline.
    pub fn dim(&self) -> usize {
        match self {
            OdeSystem::Lorenz63 { .. } => 3,
            OdeSystem::Lorenz96 { k, .. } => *k,
            OdeSystem::Rossler { .. } => 3,
            OdeSystem::DuffingNess { .. } => 4,
            OdeSystem::DuffingNe { .. } => 2,
            OdeSystem::Chua { .. } => 3,
            OdeSystem::Halvorsen { .. } => 3,
            OdeSystem::Torus { .. } => 3,
        }
    }

    /// Reference step size for this system.
    pub fn default_dt(&self) -> f64 {
        match self {
            OdeSystem::Chua { .. } | OdeSystem::Halvorsen { .. } => 0.005,
            _ => 0.01,
        }
    }

    /// Reference delay-window length. Halvorsen and Torus have no
    /// established value; 100 is a round default near the others' scale.
    pub fn default_window(&self) -> usize {
        match self {
            OdeSystem::Lorenz63 { .. } => 75,
            OdeSystem::Lorenz96 { .. } => 40,
            OdeSystem::Rossler { .. } => 1200,
            OdeSystem::DuffingNess { .. } | OdeSystem::DuffingNe { .. } => 628,
            OdeSystem::Chua { .. } => 175,
            OdeSystem::Halvorsen { .. } | OdeSystem::Torus { .. } => 100,
        }
    }

    /// Time derivative of `state` at time `t`.
    ///
    /// For Torus this is the derivative of the parametric curve at `t`; the
    /// state argument is only checked for shape.
    pub fn vector_field(&self, state: ArrayView1<'_, f64>, t: f64) -> Result<Array1<f64>> {
        if state.len() != self.dim() {
            return Err(Error::shape(
                "state",
                format!("length {}", self.dim()),
                format!("length {}", state.len()),
            ));
        }
        let mut out = Array1::zeros(self.dim());
        match *self {
            OdeSystem::Lorenz63 { sigma, rho, beta } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                out[0] = sigma * (y - x);
                out[1] = x * (rho - z) - y;
                out[2] = x * y - beta * z;
            }
            OdeSystem::Lorenz96 { k, forcing } => {
                for i in 0..k {
                    let ip1 = state[(i + 1) % k];
                    let im1 = state[(i + k - 1) % k];
                    let im2 = state[(i + k - 2) % k];
                    out[i] = (ip1 - im2) * im1 - state[i] + forcing;
                }
            }
            OdeSystem::Rossler { a, b, c } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                out[0] = -y - z;
                out[1] = x + a * y;
                out[2] = b + z * (x - c);
            }
            OdeSystem::DuffingNess {
                alpha,
                beta,
                gamma,
                delta,
                omega,
            } => {
                let (x, v, c, s) = (state[0], state[1], state[2], state[3]);
                out[0] = v;
                out[1] = -delta * v - alpha * x - beta * x * x * x + gamma * c;
                out[2] = -omega * s;
                out[3] = omega * c;
            }
            OdeSystem::DuffingNe {
                alpha,
                beta,
                gamma,
                delta,
                omega,
            } => {
                let (x, v) = (state[0], state[1]);
                out[0] = v;
                out[1] = -delta * v - alpha * x - beta * x * x * x + gamma * (omega * t).cos();
            }
            OdeSystem::Chua {
                alpha,
                beta,
                m0,
                m1,
            } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                let h = 0.5 * (m0 - m1) * ((x + 1.0).abs() - (x - 1.0).abs());
                out[0] = alpha * (y - x - h + m1 * x);
                out[1] = x - y + z;
                out[2] = -beta * y;
            }
            OdeSystem::Halvorsen { a } => {
                let (x, y, z) = (state[0], state[1], state[2]);
                out[0] = -a * x - 4.0 * y - 4.0 * z - y * y;
                out[1] = -a * y - 4.0 * z - 4.0 * x - z * z;
                out[2] = -a * z - 4.0 * x - 4.0 * y - x * x;
            }
            OdeSystem::Torus {
                radius_major: big_r,
                radius_minor: r,
                omega1,
                omega2,
            } => {
                let (t1, t2) = (omega1 * t, omega2 * t);
                out[0] = -(big_r + r * t2.cos()) * t1.sin() * omega1
                    - r * t2.sin() * omega2 * t1.cos();
                out[1] =
                    (big_r + r * t2.cos()) * t1.cos() * omega1 - r * t2.sin() * omega2 * t1.sin();
                out[2] = r * t2.cos() * omega2;
            }
        }
        Ok(out)
    }

    fn torus_point(&self, t: f64) -> Option<[f64; 3]> {
        if let OdeSystem::Torus {
            radius_major: big_r,
            radius_minor: r,
            omega1,
            omega2,
        } = *self
        {
            let (t1, t2) = (omega1 * t, omega2 * t);
            Some([
                (big_r + r * t2.cos()) * t1.cos(),
                (big_r + r * t2.cos()) * t1.sin(),
                r * t2.sin(),
            ])
        } else {
            None
        }
    }
}

/// How the integrator picks its starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Exact starting state, length must equal the system dimension.
    Fixed(Vec<f64>),
    /// All-ones base point plus uniform jitter in [-0.5, 0.5] per coordinate.
    /// For the four-dimensional Duffing variant the drive-phase pair is set
    /// from the start time instead of jittered.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    /// Total integration steps, burn-in included.
    pub n_steps: usize,
    /// Leading steps discarded; the first retained sample sits at t = 0.
    pub burn_in: usize,
    pub init: InitialState,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, n_steps: usize, burn_in: usize, seed: u64) -> Self {
        TrajectoryConfig {
            dt,
            n_steps,
            burn_in,
            init: InitialState::Seeded(seed),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if self.n_steps <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "n_steps ({}) must exceed burn_in ({})",
                self.n_steps, self.burn_in
            )));
        }
        if let InitialState::Fixed(v) = &self.init {
            if v.len() != dim {
                return Err(Error::shape(
                    "initial state",
                    format!("length {dim}"),
                    format!("length {}", v.len()),
                ));
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite initial state".into()));
            }
        }
        Ok(())
    }
}

/// One classical RK4 step of `f` from `(state, t)`.
pub(crate) fn rk4_step<F>(f: &F, state: &Array1<f64>, t: f64, dt: f64) -> Array1<f64>
where
    F: Fn(ArrayView1<'_, f64>, f64) -> Array1<f64>,
{
    let k1 = f(state.view(), t);
    let k2 = f((state + &(&k1 * (dt / 2.0))).view(), t + dt / 2.0);
    let k3 = f((state + &(&k2 * (dt / 2.0))).view(), t + dt / 2.0);
    let k4 = f((state + &(&k3 * dt)).view(), t + dt);
    state + &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

fn initial_state(system: &OdeSystem, cfg: &TrajectoryConfig, t_start: f64) -> Array1<f64> {
    match &cfg.init {
        InitialState::Fixed(v) => Array1::from_vec(v.clone()),
        InitialState::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let dim = system.dim();
            let mut state =
                Array1::from_shape_fn(dim, |_| 1.0 + rng.gen_range(-0.5..0.5));
            if let OdeSystem::DuffingNess { omega, .. } = system {
                state[2] = (omega * t_start).cos();
                state[3] = (omega * t_start).sin();
            }
            state
        }
    }
}

/// Fixed-step RK4 trajectory with `n_steps - burn_in` retained samples, the
/// first at t = 0. Integration starts at t = -burn_in * dt so time-dependent
/// forcing is phase-aligned with the retained grid.
pub fn integrate(system: &OdeSystem, cfg: &TrajectoryConfig) -> Result<TimeSeries> {
    cfg.validate(system.dim())?;
    let dim = system.dim();
    let n_keep = cfg.n_steps - cfg.burn_in;

    if matches!(system, OdeSystem::Torus { .. }) {
        let mut data = Array2::zeros((n_keep, dim));
        for i in 0..n_keep {
            let p = system.torus_point(i as f64 * cfg.dt).expect("torus");
            data[[i, 0]] = p[0];
            data[[i, 1]] = p[1];
            data[[i, 2]] = p[2];
        }
        return Ok(TimeSeries::new(data, cfg.dt));
    }

    let t_start = -(cfg.burn_in as f64) * cfg.dt;
    let mut state = initial_state(system, cfg, t_start);
    let f = |s: ArrayView1<'_, f64>, t: f64| {
        system
            .vector_field(s, t)
            .expect("state dimension fixed by construction")
    };
    let mut data = Array2::zeros((n_keep, dim));
    for step in 0..cfg.n_steps {
        if !state.iter().all(|x| x.is_finite()) {
            return Err(Error::Blowup { step });
        }
        if step >= cfg.burn_in {
            data.row_mut(step - cfg.burn_in).assign(&state);
        }
        if step + 1 < cfg.n_steps {
            let t = t_start + step as f64 * cfg.dt;
            state = rk4_step(&f, &state, t, cfg.dt);
        }
    }
    Ok(TimeSeries::new(data, cfg.dt))
}

/// Parameter switch partway through a trajectory: samples before
/// `split_step` (counted after burn-in) follow `regime_a`, the rest follow
/// `regime_b`, with the state carried continuously across the switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSwitch {
    pub regime_a: OdeSystem,
    pub regime_b: OdeSystem,
    pub split_step: usize,
}

/// Integrates a regime switch and returns (train, test) = (regime A samples,
/// regime B samples). Only Lorenz-63 pairs are accepted.
pub fn integrate_regime_switch(
    spec: &RegimeSwitch,
    cfg: &TrajectoryConfig,
) -> Result<(TimeSeries, TimeSeries)> {
    match (&spec.regime_a, &spec.regime_b) {
        (OdeSystem::Lorenz63 { .. }, OdeSystem::Lorenz63 { .. }) => {}
        _ => {
            return Err(Error::InvalidArgument(
                "regime switching is defined for lorenz63 only".into(),
            ))
        }
    }
    cfg.validate(spec.regime_a.dim())?;
    let n_keep = cfg.n_steps - cfg.burn_in;
    if spec.split_step == 0 || spec.split_step >= n_keep {
        return Err(Error::InvalidArgument(format!(
            "split_step {} must leave both segments nonempty ({} retained samples)",
            spec.split_step, n_keep
        )));
    }

    let dim = spec.regime_a.dim();
    let t_start = -(cfg.burn_in as f64) * cfg.dt;
    let mut state = initial_state(&spec.regime_a, cfg, t_start);
    let mut data = Array2::zeros((n_keep, dim));
    for step in 0..cfg.n_steps {
        if !state.iter().all(|x| x.is_finite()) {
            return Err(Error::Blowup { step });
        }
        if step >= cfg.burn_in {
            data.row_mut(step - cfg.burn_in).assign(&state);
        }
        if step + 1 < cfg.n_steps {
            // The sample produced by this step lands at retained index
            // step + 1 - burn_in; it follows regime B iff that index is at
            // or past the split.
            let system = if step + 1 >= cfg.burn_in + spec.split_step {
                &spec.regime_b
            } else {
                &spec.regime_a
            };
            let f = |s: ArrayView1<'_, f64>, t: f64| {
                system.vector_field(s, t).expect("dimension checked")
            };
            let t = t_start + step as f64 * cfg.dt;
            state = rk4_step(&f, &state, t, cfg.dt);
        }
    }
    let full = TimeSeries::new(data, cfg.dt);
    let train = full.window(0..spec.split_step);
    let test = full.window(spec.split_step..n_keep);
    Ok((train, test))
}
