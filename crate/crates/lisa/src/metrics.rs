//! Forecast fidelity metrics beyond pointwise error.
//!
//! Four complementary views of how well a forecast tracks the truth:
//!
//! * [`mse`]: pointwise squared error, total and per horizon step;
//! * [`spectral_divergence`]: JS or KL divergence between normalized Welch
//!   power spectra, a phase-tolerant comparison of frequency content;
//! * [`acf_mse`]: squared discrepancy between normalized autocorrelation
//!   functions, comparing temporal dependence structure;
//! * [`mmd2`] / [`mmd2_rff`]: unbiased squared maximum mean discrepancy
//!   between the two state-sample clouds, measuring attractor fidelity.
//!
//! [`evaluate`] bundles all of them into a [`MetricReport`] with the
//! estimator settings recorded alongside the values.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::fmt_f64;

/// Which divergence to apply to the normalized spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// Jensen-Shannon divergence, symmetric and bounded by ln 2 (nats).
    Js,
    /// Kullback-Leibler divergence of the truth spectrum from the forecast's.
    Kl,
}

impl DivergenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DivergenceKind::Js => "js",
            DivergenceKind::Kl => "kl",
        }
    }
}

/// Taper applied to each Welch segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowFn {
    /// Periodic Hann taper.
    Hann,
    /// No taper.
    Boxcar,
}

impl WindowFn {
    fn weights(&self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / len as f64).cos())
                .collect(),
            WindowFn::Boxcar => vec![1.0; len],
        }
    }
}

/// Welch PSD estimator settings.
///
/// `segment_len = None` resolves to `min(256, series length)`. Segments are
/// mean-detrended, tapered, and averaged; the zero-frequency bin is excluded
/// from the normalized spectral mass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WelchSettings {
    pub segment_len: Option<usize>,
    /// Fraction of each segment shared with the next, in [0, 1).
    pub overlap: f64,
    pub window: WindowFn,
    /// Additive floor on the PSD before normalization.
    pub eps_floor: f64,
}

impl Default for WelchSettings {
    fn default() -> Self {
        WelchSettings {
            segment_len: None,
            overlap: 0.5,
            window: WindowFn::Hann,
            eps_floor: 1e-12,
        }
    }
}

impl WelchSettings {
    fn resolve_segment(&self, series_len: usize) -> Result<usize> {
        let seg = self.segment_len.unwrap_or_else(|| series_len.min(256));
        if seg < 2 {
            return Err(Error::InvalidArgument(format!(
                "welch segment length must be at least 2, got {seg}"
            )));
        }
        if seg > series_len {
            return Err(Error::InvalidArgument(format!(
                "welch segment length {seg} exceeds series length {series_len}"
            )));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidArgument(format!(
                "welch overlap must lie in [0, 1), got {}",
                self.overlap
            )));
        }
        if !(self.eps_floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "welch eps_floor must be positive, got {}",
                self.eps_floor
            )));
        }
        Ok(seg)
    }

    fn hop(&self, seg: usize) -> usize {
        (seg - (seg as f64 * self.overlap).floor() as usize).max(1)
    }
}

fn check_same_shape(forecast: ArrayView2<'_, f64>, truth: ArrayView2<'_, f64>) -> Result<()> {
    if forecast.dim() != truth.dim() {
        return Err(Error::shape(
            "forecast vs truth",
            format!("{:?}", truth.dim()),
            format!("{:?}", forecast.dim()),
        ));
    }
    Ok(())
}

/// Mean squared error between forecast and truth, both `H x D`.
///
/// Returns the total (mean over steps of the squared Euclidean step error)
/// and the per-step curve it is the mean of.
pub fn mse(
    forecast: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
) -> Result<(f64, Array1<f64>)> {
    check_same_shape(forecast, truth)?;
    if forecast.nrows() == 0 {
        return Err(Error::InvalidArgument("mse of empty series".into()));
    }
    let diff = &forecast - &truth;
    let by_horizon = diff.map_axis(Axis(1), |row| row.iter().map(|v| v * v).sum());
    let total = by_horizon.mean().expect("nonempty horizon");
    Ok((total, by_horizon))
}

/// Welch PSD over bins `1..=seg/2`; the zero-frequency bin is dropped.
fn welch_psd(x: ArrayView1<'_, f64>, seg: usize, hop: usize, window: &[f64]) -> Array1<f64> {
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg);
    let n_bins = seg / 2;
    let mut acc = Array1::zeros(n_bins);
    let mut count = 0usize;
    let mut start = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    while start + seg <= x.len() {
        let segment = x.slice(ndarray::s![start..start + seg]);
        let mean = segment.mean().expect("segment nonempty");
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new((segment[i] - mean) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for k in 1..=n_bins {
            acc[k - 1] += buf[k].norm_sqr() / wss;
        }
        count += 1;
        start += hop;
    }
    acc / count as f64
}

fn kl_divergence(p: &Array1<f64>, q: &Array1<f64>) -> f64 {
    p.iter().zip(q.iter()).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

/// Divergence between the normalized Welch power spectra of two series.
///
/// Spectra are estimated per coordinate, floored by `eps_floor`, normalized
/// to probability masses over the nonzero frequencies, compared with the
/// chosen divergence (in nats), and averaged over coordinates.
///
/// The boolean flag is true if any coordinate of either series had an
/// identically zero spectrum (constant series), in which case its mass is
/// uniform from the floor alone.
pub fn spectral_divergence(
    forecast: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    kind: DivergenceKind,
    welch: &WelchSettings,
) -> Result<(f64, bool)> {
    check_same_shape(forecast, truth)?;
    let h = forecast.nrows();
    let d = forecast.ncols();
    if d == 0 {
        return Err(Error::InvalidArgument("series has no coordinates".into()));
    }
    let seg = welch.resolve_segment(h)?;
    let hop = welch.hop(seg);
    let window = welch.window.weights(seg);

    let mut total = 0.0;
    let mut floor_only = false;
    for x in 0..d {
        let st = welch_psd(truth.column(x), seg, hop, &window);
        let sf = welch_psd(forecast.column(x), seg, hop, &window);
        floor_only |= st.sum() == 0.0 || sf.sum() == 0.0;
        let pt = normalize_mass(&st, welch.eps_floor);
        let pf = normalize_mass(&sf, welch.eps_floor);
        total += match kind {
            DivergenceKind::Kl => kl_divergence(&pt, &pf),
            DivergenceKind::Js => {
                let m = 0.5 * (&pt + &pf);
                0.5 * kl_divergence(&pt, &m) + 0.5 * kl_divergence(&pf, &m)
            }
        };
    }
    Ok(((total / d as f64).max(0.0), floor_only))
}

fn normalize_mass(psd: &Array1<f64>, eps: f64) -> Array1<f64> {
    let floored = psd.mapv(|s| s + eps);
    let sum = floored.sum();
    floored / sum
}

/// Normalized sample autocorrelation of one coordinate at lags `0..=tau_max`.
///
/// Biased normalization: every lag divides by the full-length variance sum,
/// so rho(0) = 1 and |rho(tau)| <= 1. A zero-variance series yields zeros at
/// every lag and sets the flag.
fn autocorr(x: ArrayView1<'_, f64>, tau_max: usize) -> (Vec<f64>, bool) {
    let n = x.len();
    let mean = x.mean().expect("nonempty series");
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom == 0.0 {
        return (vec![0.0; tau_max + 1], true);
    }
    let rho = (0..=tau_max)
        .map(|tau| {
            let num: f64 = (0..n - tau)
                .map(|t| (x[t] - mean) * (x[t + tau] - mean))
                .sum();
            num / denom
        })
        .collect();
    (rho, false)
}

/// Mean squared discrepancy between the normalized autocorrelation functions
/// of forecast and truth, averaged over lags `1..=tau_max` and coordinates.
///
/// `tau_max = None` resolves to `min(H - 1, 50)`. The flag is true if any
/// coordinate of either series had zero variance (its autocorrelation is
/// taken as 0 at all lags).
pub fn acf_mse(
    forecast: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    tau_max: Option<usize>,
) -> Result<(f64, bool)> {
    check_same_shape(forecast, truth)?;
    let h = forecast.nrows();
    let d = forecast.ncols();
    if d == 0 {
        return Err(Error::InvalidArgument("series has no coordinates".into()));
    }
    if h < 2 {
        return Err(Error::InvalidArgument(format!(
            "autocorrelation needs at least 2 samples, got {h}"
        )));
    }
    let tau_max = tau_max.unwrap_or_else(|| (h - 1).min(50));
    if tau_max == 0 || tau_max >= h {
        return Err(Error::InvalidArgument(format!(
            "tau_max must lie in 1..{h}, got {tau_max}"
        )));
    }
    let mut acc = 0.0;
    let mut degenerate = false;
    for x in 0..d {
        let (rho_f, flag_f) = autocorr(forecast.column(x), tau_max);
        let (rho_t, flag_t) = autocorr(truth.column(x), tau_max);
        degenerate |= flag_f || flag_t;
        for tau in 1..=tau_max {
            let diff = rho_f[tau] - rho_t[tau];
            acc += diff * diff;
        }
    }
    Ok((acc / (tau_max as f64 * d as f64), degenerate))
}

fn check_mmd_inputs(
    samples_t: ArrayView2<'_, f64>,
    samples_f: ArrayView2<'_, f64>,
    bandwidth: f64,
) -> Result<()> {
    if samples_t.ncols() != samples_f.ncols() {
        return Err(Error::shape(
            "mmd sample dimensions",
            samples_t.ncols(),
            samples_f.ncols(),
        ));
    }
    if samples_t.nrows() < 2 || samples_f.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "mmd needs at least 2 samples per side, got {} and {}",
            samples_t.nrows(),
            samples_f.nrows()
        )));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "mmd bandwidth must be positive and finite, got {bandwidth}"
        )));
    }
    Ok(())
}

/// Median-heuristic RBF bandwidth: the median pairwise Euclidean distance
/// over all distinct pairs of the pooled sample, floored away from zero.
pub fn median_bandwidth(pooled: ArrayView2<'_, f64>) -> f64 {
    let n = pooled.nrows();
    assert!(n >= 2, "median bandwidth needs at least 2 samples");
    let sq = crate::linalg::pairwise_sq_dists(pooled, pooled);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(sq[[i, j]].sqrt());
        }
    }
    crate::linalg::median(&dists).max(1e-12)
}

/// Unbiased squared maximum mean discrepancy with the exact RBF kernel
/// `k(z, w) = exp(-|z - w|^2 / (2 bandwidth^2))`.
///
/// Diagonal terms are excluded from the within-sample sums, so the estimate
/// is unbiased and may be negative.
pub fn mmd2(
    samples_t: ArrayView2<'_, f64>,
    samples_f: ArrayView2<'_, f64>,
    bandwidth: f64,
) -> Result<f64> {
    check_mmd_inputs(samples_t, samples_f, bandwidth)?;
    let n = samples_t.nrows() as f64;
    let m = samples_f.nrows() as f64;
    let scale = -0.5 / (bandwidth * bandwidth);
    let k_tt = crate::linalg::pairwise_sq_dists(samples_t, samples_t).mapv(|d| (scale * d).exp());
    let k_ff = crate::linalg::pairwise_sq_dists(samples_f, samples_f).mapv(|d| (scale * d).exp());
    let k_tf = crate::linalg::pairwise_sq_dists(samples_t, samples_f).mapv(|d| (scale * d).exp());
    let s_tt = k_tt.sum() - k_tt.diag().sum();
    let s_ff = k_ff.sum() - k_ff.diag().sum();
    Ok(s_tt / (n * (n - 1.0)) + s_ff / (m * (m - 1.0)) - 2.0 * k_tf.sum() / (n * m))
}

/// Random Fourier feature map for the RBF kernel: `n_features` frequency
/// draws from N(0, bandwidth^-2 I), each contributing a cos/sin pair, scaled
/// so that `phi(z) . phi(w)` is an unbiased estimate of the kernel.
fn rff_features(
    samples: ArrayView2<'_, f64>,
    omega: &Array2<f64>,
) -> Array2<f64> {
    let n_features = omega.nrows();
    let proj = samples.dot(&omega.t());
    let scale = (1.0 / n_features as f64).sqrt();
    let mut phi = Array2::zeros((samples.nrows(), 2 * n_features));
    for i in 0..samples.nrows() {
        for j in 0..n_features {
            phi[[i, j]] = proj[[i, j]].cos() * scale;
            phi[[i, n_features + j]] = proj[[i, j]].sin() * scale;
        }
    }
    phi
}

/// Unbiased squared maximum mean discrepancy with the RBF kernel replaced by
/// its random Fourier feature approximation.
///
/// Deterministic given `seed`; the estimate may be negative. `n_features`
/// counts frequency draws (the feature map has `2 * n_features` components).
pub fn mmd2_rff(
    samples_t: ArrayView2<'_, f64>,
    samples_f: ArrayView2<'_, f64>,
    n_features: usize,
    bandwidth: f64,
    seed: u64,
) -> Result<f64> {
    check_mmd_inputs(samples_t, samples_f, bandwidth)?;
    if n_features == 0 {
        return Err(Error::InvalidArgument(
            "mmd needs at least one random feature".into(),
        ));
    }
    let p = samples_t.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = Array2::zeros((n_features, p));
    for j in 0..n_features {
        for c in 0..p {
            let xi: f64 = StandardNormal.sample(&mut rng);
            omega[[j, c]] = xi / bandwidth;
        }
    }
    let phi_t = rff_features(samples_t, &omega);
    let phi_f = rff_features(samples_f, &omega);

    let n = phi_t.nrows() as f64;
    let m = phi_f.nrows() as f64;
    let sum_t = phi_t.sum_axis(Axis(0));
    let sum_f = phi_f.sum_axis(Axis(0));
    let sq_t: f64 = phi_t.iter().map(|v| v * v).sum();
    let sq_f: f64 = phi_f.iter().map(|v| v * v).sum();
    let s_tt = sum_t.dot(&sum_t) - sq_t;
    let s_ff = sum_f.dot(&sum_f) - sq_f;
    let cross = sum_t.dot(&sum_f);
    Ok(s_tt / (n * (n - 1.0)) + s_ff / (m * (m - 1.0)) - 2.0 * cross / (n * m))
}

/// Settings for a full [`MetricReport`] evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricConfig {
    pub divergence: DivergenceKind,
    pub welch: WelchSettings,
    /// Autocorrelation lag cap; `None` resolves to `min(H - 1, 50)`.
    pub tau_max: Option<usize>,
    pub mmd_features: usize,
    /// RBF bandwidth; `None` resolves to the median heuristic on the pooled
    /// forecast and truth samples.
    pub mmd_bandwidth: Option<f64>,
    pub mmd_seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            divergence: DivergenceKind::Js,
            welch: WelchSettings::default(),
            tau_max: None,
            mmd_features: 2048,
            mmd_bandwidth: None,
            mmd_seed: 0,
        }
    }
}

/// Estimator settings as actually resolved during an evaluation, plus the
/// degeneracy flags raised along the way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSettings {
    pub divergence: DivergenceKind,
    pub welch_segment_len: usize,
    pub welch_overlap: f64,
    pub welch_window: WindowFn,
    pub eps_floor: f64,
    pub tau_max: usize,
    pub mmd_features: usize,
    pub mmd_bandwidth: f64,
    pub mmd_seed: u64,
    /// A coordinate's spectrum was identically zero (constant series).
    pub spectrum_floor_only: bool,
    /// A coordinate had zero variance; its autocorrelation was taken as 0.
    pub acf_zero_variance: bool,
}

/// All metrics for one forecast/truth pair, with the settings they were
/// computed under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub mse_by_horizon: Array1<f64>,
    pub acf_mse: f64,
    pub spec_div: f64,
    pub mmd2: f64,
    pub metadata: MetricSettings,
}

impl MetricReport {
    /// Flat key-value view of the scalar metrics and estimator settings,
    /// suitable for a CSV row. The per-horizon curve is omitted.
    pub fn flat_record(&self) -> Vec<(&'static str, String)> {
        let m = &self.metadata;
        vec![
            ("mse", fmt_f64(self.mse)),
            ("spec_div", fmt_f64(self.spec_div)),
            ("acf_mse", fmt_f64(self.acf_mse)),
            ("mmd2", fmt_f64(self.mmd2)),
            ("divergence", m.divergence.name().to_string()),
            ("welch_segment_len", m.welch_segment_len.to_string()),
            ("welch_overlap", m.welch_overlap.to_string()),
            ("welch_window", format!("{:?}", m.welch_window).to_lowercase()),
            ("eps_floor", m.eps_floor.to_string()),
            ("tau_max", m.tau_max.to_string()),
            ("mmd_features", m.mmd_features.to_string()),
            ("mmd_bandwidth", fmt_f64(m.mmd_bandwidth)),
            ("mmd_seed", m.mmd_seed.to_string()),
            ("spectrum_floor_only", m.spectrum_floor_only.to_string()),
            ("acf_zero_variance", m.acf_zero_variance.to_string()),
        ]
    }
}

/// Compute every metric for one forecast against its truth (both `H x D`).
pub fn evaluate(
    forecast: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    let (mse_total, mse_by_horizon) = mse(forecast, truth)?;
    let (spec_div, spectrum_floor_only) =
        spectral_divergence(forecast, truth, cfg.divergence, &cfg.welch)?;
    let (acf, acf_zero_variance) = acf_mse(forecast, truth, cfg.tau_max)?;
    let bandwidth = match cfg.mmd_bandwidth {
        Some(bw) => bw,
        None => {
            let pooled = concatenate(Axis(0), &[truth, forecast]).expect("matching dims");
            median_bandwidth(pooled.view())
        }
    };
    let mmd2 = mmd2_rff(truth, forecast, cfg.mmd_features, bandwidth, cfg.mmd_seed)?;
    let h = forecast.nrows();
    Ok(MetricReport {
        mse: mse_total,
        mse_by_horizon,
        acf_mse: acf,
        spec_div,
        mmd2,
        metadata: MetricSettings {
            divergence: cfg.divergence,
            welch_segment_len: cfg.welch.segment_len.unwrap_or_else(|| h.min(256)),
            welch_overlap: cfg.welch.overlap,
            welch_window: cfg.welch.window,
            eps_floor: cfg.welch.eps_floor,
            tau_max: cfg.tau_max.unwrap_or_else(|| (h - 1).min(50)),
            mmd_features: cfg.mmd_features,
            mmd_bandwidth: bandwidth,
            mmd_seed: cfg.mmd_seed,
            spectrum_floor_only,
            acf_zero_variance,
        },
    })
}
