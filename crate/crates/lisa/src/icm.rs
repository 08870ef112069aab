//! In-context residual correction at inference time. A prefix of recent
//! observations yields residuals of the frozen decoder on windows whose next
//! sample is known; the correction for the query window is either a GP
//! posterior over those residuals (ICGP) or their kernel-weighted average
//! (ICNW). No trained weights change.

use crate::error::{Error, Result};
use crate::gplm::{GplmDecoder, RbfKernel};
use crate::hankel::split_prefix;
use crate::linalg::{cholesky_lower, cholesky_solve_mat, solve_lower};
use crate::spectral::SpectralModel;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcmMode {
    Icgp,
    Icnw,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcmConfig {
    /// Latent-space kernel. Temperature multiplies its scale; the encoder
    /// kernel is untouched.
    pub kernel: RbfKernel,
    /// Observation noise of the residual GP.
    pub sigma2: f64,
    /// Confidence-gate scale: gate = tau2 / (tau2 + posterior variance).
    pub tau2: f64,
    /// Context-gate scale: gate = C / (C + k0); 0 disables the gate.
    pub k0: f64,
    /// Overall correction gain.
    pub gain: f64,
    pub temperature: f64,
    pub mode: IcmMode,
}

impl Default for IcmConfig {
    fn default() -> Self {
        IcmConfig {
            kernel: RbfKernel {
                beta: 1.0,
                epsilon: 1.0,
            },
            sigma2: 1e-4,
            tau2: 1.0,
            k0: 4.0,
            gain: 1.0,
            temperature: 1.0,
            mode: IcmMode::Icgp,
        }
    }
}

impl IcmConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma2 must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if !(self.tau2 > 0.0) || !self.tau2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tau2 must be positive, got {}",
                self.tau2
            )));
        }
        if !(self.k0 >= 0.0) || !self.k0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "k0 must be nonnegative, got {}",
                self.k0
            )));
        }
        if !(self.gain >= 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gain must be nonnegative, got {}",
                self.gain
            )));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Latent kernel value at the configured temperature.
    pub fn latent_kernel(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        self.kernel.with_temperature(self.temperature).eval(a, b)
    }

    /// Context gate C / (C + k0); zero when there is no context.
    pub fn context_gate(&self, c: usize) -> f64 {
        if c == 0 {
            0.0
        } else {
            c as f64 / (c as f64 + self.k0)
        }
    }
}

/// Everything the correction operators need, frozen at build time: latents
/// and decoder residuals of the context windows, the query latent, and the
/// baseline predictions.
#[derive(Debug, Clone)]
pub struct IcmState {
    context_latents: Array2<f64>,
    residuals: Array2<f64>,
    query_latent: Array1<f64>,
    /// Baseline decoder means; row A for context window A, last row for the
    /// query window.
    baseline_preds: Array2<f64>,
    /// ICGP only: lower factor of the context Gram plus sigma2 on the
    /// diagonal, and the presolved residual weights.
    gram_factor: Option<Array2<f64>>,
    resid_weights: Option<Array2<f64>>,
}

impl IcmState {
    /// Assembles a state from precomputed latents and residuals, running the
    /// ICGP factorization if the mode calls for it.
    pub fn from_parts(
        context_latents: Array2<f64>,
        residuals: Array2<f64>,
        query_latent: Array1<f64>,
        baseline_preds: Array2<f64>,
        cfg: &IcmConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let c = context_latents.nrows();
        if residuals.nrows() != c {
            return Err(Error::shape(
                "residual table",
                format!("{c} rows"),
                format!("{} rows", residuals.nrows()),
            ));
        }
        if baseline_preds.nrows() != c + 1 {
            return Err(Error::shape(
                "baseline predictions",
                format!("{} rows", c + 1),
                format!("{} rows", baseline_preds.nrows()),
            ));
        }
        let mut state = IcmState {
            context_latents,
            residuals,
            query_latent,
            baseline_preds,
            gram_factor: None,
            resid_weights: None,
        };
        if cfg.mode == IcmMode::Icgp && c > 0 {
            let kernel = cfg.kernel.with_temperature(cfg.temperature);
            let mut gram = kernel.matrix(state.context_latents.view(), state.context_latents.view());
            for i in 0..c {
                gram[[i, i]] += cfg.sigma2;
            }
            let factor = cholesky_lower(&gram)?;
            state.resid_weights = Some(cholesky_solve_mat(&factor, state.residuals.view()));
            state.gram_factor = Some(factor);
        }
        Ok(state)
    }

    /// Context size C.
    pub fn n_context(&self) -> usize {
        self.context_latents.nrows()
    }

    /// Replaces the query latent and its baseline prediction, keeping the
    /// context table and its factorization frozen. This is the per-step
    /// update during rollout: only the query window moves.
    pub fn set_query(&mut self, query_latent: Array1<f64>, query_baseline: ArrayView1<'_, f64>) {
        self.query_latent = query_latent;
        let last = self.baseline_preds.nrows() - 1;
        self.baseline_preds.row_mut(last).assign(&query_baseline);
    }

    pub fn residuals(&self) -> ArrayView2<'_, f64> {
        self.residuals.view()
    }

    pub fn query_latent(&self) -> ArrayView1<'_, f64> {
        self.query_latent.view()
    }

    /// Baseline prediction for the query window.
    pub fn baseline(&self) -> ArrayView1<'_, f64> {
        self.baseline_preds.row(self.baseline_preds.nrows() - 1)
    }

    fn out_dim(&self) -> usize {
        self.baseline_preds.ncols()
    }

    /// Kernel row between the query latent and every context latent.
    fn query_kernel_row(&self, cfg: &IcmConfig) -> Array1<f64> {
        let kernel = cfg.kernel.with_temperature(cfg.temperature);
        Array1::from_shape_fn(self.n_context(), |a| {
            kernel.eval(self.query_latent.view(), self.context_latents.row(a))
        })
    }
}

/// Builds the correction state from a raw prefix: split into windows, encode
/// them, decode baselines, difference against the known next samples.
pub fn build_state(
    prefix: ArrayView2<'_, f64>,
    encoder: &SpectralModel,
    decoder: &GplmDecoder,
    cfg: &IcmConfig,
) -> Result<IcmState> {
    cfg.validate()?;
    let split = split_prefix(prefix, encoder.window_len())?;
    let c = split.n_context();
    let d = prefix.ncols();

    let query_latent = {
        let flat = split.query_flat();
        let coords = encoder.encode_flat_batch(
            flat.view()
                .into_shape_with_order((1, flat.len()))
                .expect("contiguous"),
        )?;
        coords.row(0).to_owned()
    };
    let context_latents = if c > 0 {
        encoder.encode_flat_batch(split.context_flat().view())?
    } else {
        Array2::zeros((0, encoder.rank()))
    };

    let mut baseline_preds = Array2::zeros((c + 1, d));
    let mut residuals = Array2::zeros((c, d));
    for a in 0..c {
        let mean = decoder.predict_mean(context_latents.row(a))?;
        residuals.row_mut(a).assign(&(&split.targets.row(a) - &mean));
        baseline_preds.row_mut(a).assign(&mean);
    }
    let q_mean = decoder.predict_mean(query_latent.view())?;
    baseline_preds.row_mut(c).assign(&q_mean);

    IcmState::from_parts(context_latents, residuals, query_latent, baseline_preds, cfg)
}

/// GP posterior over residuals at the query latent: correction mean, scalar
/// posterior variance in [0, 1], and the confidence gate.
pub fn icgp_correction(state: &IcmState, cfg: &IcmConfig) -> Result<(Array1<f64>, f64, f64)> {
    let c = state.n_context();
    if c == 0 {
        let s2 = 1.0;
        return Ok((
            Array1::zeros(state.out_dim()),
            s2,
            cfg.tau2 / (cfg.tau2 + s2),
        ));
    }
    let (factor, weights) = match (&state.gram_factor, &state.resid_weights) {
        (Some(f), Some(w)) => (f, w),
        _ => {
            return Err(Error::InvalidArgument(
                "state was not built for ICGP mode".into(),
            ))
        }
    };
    let k_row = state.query_kernel_row(cfg);
    let delta = weights.t().dot(&k_row);
    let v = solve_lower(factor, k_row.view());
    let s2 = (1.0 - v.dot(&v)).clamp(0.0, 1.0);
    let gate = cfg.tau2 / (cfg.tau2 + s2);
    Ok((delta, s2, gate))
}

/// Draws a correction consistent with the ICGP posterior: the mean plus
/// sqrt(s2 + sigma2) standard normal noise, independent per dimension.
pub fn icgp_sample(state: &IcmState, cfg: &IcmConfig, seed: u64) -> Result<Array1<f64>> {
    let (delta, s2, _) = icgp_correction(state, cfg)?;
    let sd = (s2 + cfg.sigma2).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Array1::from_shape_fn(delta.len(), |_| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        sd * xi
    });
    Ok(&delta + &noise)
}

/// Kernel-weighted residual average with row-stochastic weights. When every
/// kernel value underflows the weights fall back to uniform; the flag
/// reports that degeneracy.
pub fn icnw_correction(state: &IcmState, cfg: &IcmConfig) -> (Array1<f64>, Array1<f64>, bool) {
    let c = state.n_context();
    if c == 0 {
        return (Array1::zeros(state.out_dim()), Array1::zeros(0), false);
    }
    let k_row = state.query_kernel_row(cfg);
    let total: f64 = k_row.sum();
    let (weights, degenerate) = if total > 0.0 && total.is_finite() {
        (&k_row / total, false)
    } else {
        (Array1::from_elem(c, 1.0 / c as f64), true)
    };
    let delta = state.residuals.t().dot(&weights);
    (delta, weights, degenerate)
}

/// Shannon entropy of a weight vector, in nats.
pub fn weight_entropy(weights: ArrayView1<'_, f64>) -> f64 {
    -weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * w.ln())
        .sum::<f64>()
}

/// Per-step record of what the correction did.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub context_size: usize,
    pub ctx_gate: f64,
    /// ICGP confidence gate.
    pub var_gate: Option<f64>,
    /// ICGP posterior variance.
    pub variance: Option<f64>,
    /// ICNW weight entropy in nats.
    pub weight_entropy: Option<f64>,
    pub degenerate: bool,
}

/// One-step prediction: the frozen baseline plus the gated correction for
/// the configured mode.
pub fn corrected_prediction(
    state: &IcmState,
    cfg: &IcmConfig,
) -> Result<(Array1<f64>, StepDiagnostics)> {
    corrected_prediction_inner(state, cfg, None)
}

/// Stochastic variant: the ICGP correction is sampled rather than taken at
/// its posterior mean. Other modes ignore the seed.
pub fn corrected_prediction_sampled(
    state: &IcmState,
    cfg: &IcmConfig,
    seed: u64,
) -> Result<(Array1<f64>, StepDiagnostics)> {
    corrected_prediction_inner(state, cfg, Some(seed))
}

fn corrected_prediction_inner(
    state: &IcmState,
    cfg: &IcmConfig,
    sample_seed: Option<u64>,
) -> Result<(Array1<f64>, StepDiagnostics)> {
    cfg.validate()?;
    let c = state.n_context();
    let ctx_gate = cfg.context_gate(c);
    let gamma_eff = cfg.gain * ctx_gate;
    let baseline = state.baseline().to_owned();
    match cfg.mode {
        IcmMode::None => Ok((
            baseline,
            StepDiagnostics {
                context_size: c,
                ctx_gate,
                var_gate: None,
                variance: None,
                weight_entropy: None,
                degenerate: false,
            },
        )),
        IcmMode::Icgp => {
            let (mean_delta, s2, var_gate) = icgp_correction(state, cfg)?;
            let delta = match sample_seed {
                Some(seed) => icgp_sample(state, cfg, seed)?,
                None => mean_delta,
            };
            let value = &baseline + &(&delta * (gamma_eff * var_gate));
            Ok((
                value,
                StepDiagnostics {
                    context_size: c,
                    ctx_gate,
                    var_gate: Some(var_gate),
                    variance: Some(s2),
                    weight_entropy: None,
                    degenerate: false,
                },
            ))
        }
        IcmMode::Icnw => {
            let (delta, weights, degenerate) = icnw_correction(state, cfg);
            let value = &baseline + &(&delta * gamma_eff);
            let entropy = if c > 0 {
                Some(weight_entropy(weights.view()))
            } else {
                None
            };
            Ok((
                value,
                StepDiagnostics {
                    context_size: c,
                    ctx_gate,
                    var_gate: None,
                    variance: None,
                    weight_entropy: entropy,
                    degenerate,
                },
            ))
        }
    }
}
