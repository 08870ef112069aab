//! Autoregressive forecasting: encode the sliding query window, decode the
//! baseline, apply the in-context correction, append, repeat. The context
//! residual table is computed once from the observed prefix and frozen;
//! predicted samples only ever extend the query window.

use crate::error::{Error, Result};
use crate::gplm::GplmDecoder;
use crate::icm::{
    build_state, corrected_prediction, corrected_prediction_sampled, IcmConfig, IcmMode,
    StepDiagnostics,
};
use crate::series::fmt_f64;
use crate::spectral::SpectralModel;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Frozen encoder-decoder baseline; uses only the last window.
    Nlsa,
    /// Baseline plus GP posterior residual correction.
    Lisa,
    /// Baseline plus kernel-weighted residual correction.
    Alsa,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Nlsa => "nlsa",
            Method::Lisa => "lisa",
            Method::Alsa => "alsa",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "nlsa" => Ok(Method::Nlsa),
            "lisa" => Ok(Method::Lisa),
            "alsa" => Ok(Method::Alsa),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?}; expected nlsa, lisa, or alsa"
            ))),
        }
    }

    fn icm_mode(&self) -> IcmMode {
        match self {
            Method::Nlsa => IcmMode::None,
            Method::Lisa => IcmMode::Icgp,
            Method::Alsa => IcmMode::Icnw,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub horizon: usize,
    pub method: Method,
    /// Number of trailing prefix samples available for in-context use;
    /// ignored beyond the last window for the baseline method.
    pub context_length: usize,
    pub icm: IcmConfig,
    /// Sample the ICGP correction instead of taking its posterior mean.
    pub stochastic: bool,
    pub seed: u64,
}

/// Forecast in standardized space plus per-step correction diagnostics.
/// On a divergence the value rows stop at the failing step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Forecast {
    pub values: Array2<f64>,
    /// ICGP posterior variance per step; None for other methods.
    pub per_step_variance: Option<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Step index at which the rollout stopped producing finite values.
    pub divergence: Option<usize>,
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        self.values.nrows()
    }

    /// CSV rows `step,x0,...,variance,ctx_gate,var_gate,weight_entropy,degenerate`;
    /// inapplicable fields are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.values.ncols();
        let mut header = String::from("step");
        for x in 0..d {
            header.push_str(&format!(",x{x}"));
        }
        header.push_str(",variance,ctx_gate,var_gate,weight_entropy,degenerate");
        writeln!(w, "{header}")?;
        for (h, diag) in self.diagnostics.iter().enumerate() {
            let mut line = h.to_string();
            for x in 0..d {
                line.push(',');
                line.push_str(&fmt_f64(self.values[[h, x]]));
            }
            let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
            line.push(',');
            line.push_str(&opt(diag.variance));
            line.push(',');
            line.push_str(&fmt_f64(diag.ctx_gate));
            line.push(',');
            line.push_str(&opt(diag.var_gate));
            line.push(',');
            line.push_str(&opt(diag.weight_entropy));
            line.push(',');
            line.push_str(if diag.degenerate { "1" } else { "0" });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Rolls the forecaster forward `cfg.horizon` steps from the end of
/// `prefix`. The prefix must hold at least `context_length` samples, which
/// must cover at least one window.
pub fn roll(
    prefix: ArrayView2<'_, f64>,
    encoder: &SpectralModel,
    decoder: &GplmDecoder,
    cfg: &RolloutConfig,
) -> Result<Forecast> {
    cfg.icm.validate()?;
    let l = encoder.window_len();
    let d = encoder.dim();
    if cfg.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if cfg.context_length < l {
        return Err(Error::InvalidArgument(format!(
            "context_length {} is shorter than the window length {l}",
            cfg.context_length
        )));
    }
    if prefix.nrows() < cfg.context_length {
        return Err(Error::InvalidArgument(format!(
            "prefix has {} samples but context_length is {}",
            prefix.nrows(),
            cfg.context_length
        )));
    }
    if prefix.ncols() != d {
        return Err(Error::shape(
            "prefix",
            format!("{d} columns"),
            format!("{} columns", prefix.ncols()),
        ));
    }

    let mut eff = cfg.icm;
    eff.mode = cfg.method.icm_mode();
    let used = match cfg.method {
        Method::Nlsa => l,
        _ => cfg.context_length,
    };
    let n = prefix.nrows();
    let mut state = build_state(
        prefix.slice(ndarray::s![n - used.., ..]),
        encoder,
        decoder,
        &eff,
    )?;

    let mut window: Array2<f64> = prefix.slice(ndarray::s![n - l.., ..]).to_owned();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = Array2::zeros((cfg.horizon, d));
    let mut variances = Vec::with_capacity(cfg.horizon);
    let mut diagnostics = Vec::with_capacity(cfg.horizon);
    let mut divergence = None;

    for h in 0..cfg.horizon {
        let step_seed: u64 = rng.gen();
        let result = if cfg.stochastic {
            corrected_prediction_sampled(&state, &eff, step_seed)
        } else {
            corrected_prediction(&state, &eff)
        };
        let (value, diag) = match result {
            Ok(v) => v,
            Err(Error::Degeneracy(_)) => {
                divergence = Some(h);
                break;
            }
            Err(e) => return Err(e),
        };
        if !value.iter().all(|v| v.is_finite()) {
            divergence = Some(h);
            break;
        }
        values.row_mut(h).assign(&value);
        if let Some(s2) = diag.variance {
            variances.push(s2);
        }
        diagnostics.push(diag);

        // Slide the query window over the new sample.
        if l > 1 {
            let tail = window.slice(ndarray::s![1.., ..]).to_owned();
            window.slice_mut(ndarray::s![..l - 1, ..]).assign(&tail);
        }
        window.row_mut(l - 1).assign(&value);

        if h + 1 < cfg.horizon {
            let z = match encoder.encode(window.view()) {
                Ok(z) => z,
                Err(Error::Degeneracy(_)) => {
                    divergence = Some(h + 1);
                    break;
                }
                Err(e) => return Err(e),
            };
            let q = decoder.predict_mean(z.view())?;
            state.set_query(z, q.view());
        }
    }

    let produced = diagnostics.len();
    let values = values.slice(ndarray::s![..produced, ..]).to_owned();
    let per_step_variance = if cfg.method == Method::Lisa {
        Some(variances)
    } else {
        None
    };
    Ok(Forecast {
        values,
        per_step_variance,
        diagnostics,
        divergence,
    })
}
