//! Experiment driver: dataset preparation, one-shot training, multi-start
//! context-length and temperature sweeps, and plot-ready output files.
//!
//! An experiment is described by a TOML [`ExperimentConfig`]. The driver
//! generates or ingests the dataset, splits it chronologically (or at a
//! regime switch), standardizes with training statistics, trains the
//! spectral encoder and GP decoder once, then rolls out every
//! (method, context length or temperature, start) cell and scores it with
//! the full metric suite. Everything is deterministic given the config:
//! a rerun reproduces every output file byte for byte.
//!
//! Output directory layout: `config.resolved` (provenance),rollup tables
//! `raw_metrics.csv` and `aggregates.csv`, per-start forecast files
//! `forecast_<method>_<start>.csv`, and `trajectory_export.csv` with the
//! dataset in original units.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynsys::{integrate, integrate_regime_switch, OdeSystem, RegimeSwitch, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::gplm::{GplmDecoder, RbfKernel};
use crate::hankel::hankelize_array;
use crate::icm::{IcmConfig, IcmMode};
use crate::metrics::{evaluate, MetricConfig, MetricReport};
use crate::rollout::{roll, Forecast, Method, RolloutConfig};
use crate::series::{fmt_f64, TimeSeries};
use crate::spectral::{median_sq_dist, KernelParams, SpectralModel};

// ---------------------------------------------------------------------------
// Standardization

/// Per-coordinate affine transform fit on one segment. Zero-variance
/// coordinates keep scale 1 and are listed in `flagged`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Array1<f64>,
    scale: Array1<f64>,
    flagged: Vec<usize>,
}

impl Standardizer {
    /// Mean and standard deviation (1/N normalization) of each coordinate.
    pub fn fit(data: ArrayView2<'_, f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "cannot standardize an empty segment".into(),
            ));
        }
        let mean = data.mean_axis(Axis(0)).expect("nonempty");
        let mut scale = Array1::zeros(data.ncols());
        let mut flagged = Vec::new();
        for x in 0..data.ncols() {
            let var = data
                .column(x)
                .iter()
                .map(|v| (v - mean[x]) * (v - mean[x]))
                .sum::<f64>()
                / data.nrows() as f64;
            let sd = var.sqrt();
            if sd > 0.0 {
                scale[x] = sd;
            } else {
                scale[x] = 1.0;
                flagged.push(x);
            }
        }
        Ok(Standardizer {
            mean,
            scale,
            flagged,
        })
    }

    pub fn apply(&self, data: ArrayView2<'_, f64>) -> Array2<f64> {
        (&data - &self.mean) / &self.scale
    }

    pub fn invert(&self, data: ArrayView2<'_, f64>) -> Array2<f64> {
        &data * &self.scale + &self.mean
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &Array1<f64> {
        &self.scale
    }

    /// Coordinates whose variance was zero on the fitting segment.
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }
}

// ---------------------------------------------------------------------------
// Dataset ingestion and generation

/// Parse a rectangular numeric CSV with a header row. A leading column named
/// `t` or `timestamp` (case-insensitive) supplies sample times; otherwise
/// dt = 1. With `log1p`, ln(1+x) is applied elementwise, rejecting values
/// <= -1. Row and column numbers in errors are 1-based file positions.
pub fn ingest_csv(path: &Path, log1p: bool) -> Result<TimeSeries> {
    let text = fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path_str.clone(),
        row: 1,
        col: 1,
        msg: "empty file".into(),
    })?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let first = names[0].to_ascii_lowercase();
    let has_time = first == "t" || first == "timestamp";
    let d = names.len() - usize::from(has_time);
    if d == 0 {
        return Err(Error::Parse {
            path: path_str,
            row: 1,
            col: 1,
            msg: "no data columns".into(),
        });
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut n = 0usize;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::Parse {
                path: path_str,
                row,
                col: 1,
                msg: format!("expected {} fields, got {}", names.len(), fields.len()),
            });
        }
        for (j, field) in fields.iter().enumerate() {
            let col = j + 1;
            let v: f64 = field.trim().parse().map_err(|e| Error::Parse {
                path: path_str.clone(),
                row,
                col,
                msg: format!("{e}"),
            })?;
            if has_time && j == 0 {
                times.push(v);
            } else if log1p {
                if v <= -1.0 {
                    return Err(Error::Parse {
                        path: path_str.clone(),
                        row,
                        col,
                        msg: format!("log1p requires values > -1, got {v}"),
                    });
                }
                values.push(v.ln_1p());
            } else {
                values.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            path: path_str,
            row: 2,
            col: 1,
            msg: "no data rows".into(),
        });
    }
    let data = Array2::from_shape_vec((n, d), values).expect("rectangular by construction");
    let (dt, start) = if has_time && n >= 2 {
        (times[1] - times[0], times[0])
    } else if has_time {
        (1.0, times[0])
    } else {
        (1.0, 0.0)
    };
    Ok(TimeSeries::with_start_time(data, dt, start))
}

/// Synthetic hourly load: daily and weekly sinusoids on a slow upward trend
/// with Gaussian noise, always positive. Stand-in for an electricity demand
/// feed when no CSV is supplied.
pub fn seasonal_load(n: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((n, 1));
    for t in 0..n {
        let h = t as f64;
        let daily = 30.0 * (std::f64::consts::TAU * (h + 6.0) / 24.0).sin();
        let weekly = 15.0 * (std::f64::consts::TAU * h / 168.0).sin();
        let noise: f64 = StandardNormal.sample(&mut rng);
        data[[t, 0]] = 100.0 + daily + weekly + 0.01 * h + 5.0 * noise;
    }
    TimeSeries::new(data, 1.0)
}

// ---------------------------------------------------------------------------
// Experiment configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Named benchmark ODE system, integrated on the fly.
    System,
    /// User-supplied CSV file.
    Csv,
    /// Synthetic seasonal-load generator.
    Seasonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// System name (kind = system); ignored when `system` is given in full.
    pub name: Option<String>,
    /// Full system parameters overriding `name`'s defaults.
    pub system: Option<OdeSystem>,
    /// Second regime for a train/test parameter switch (kind = system).
    pub regime_b: Option<OdeSystem>,
    /// Retained samples assigned to regime A (required with `regime_b`).
    pub split_step: Option<usize>,
    /// CSV path (kind = csv).
    pub path: Option<PathBuf>,
    pub log1p: bool,
    /// Total integration steps including burn-in; series length for the
    /// seasonal generator.
    pub n_steps: usize,
    pub burn_in: usize,
    /// Integration step; defaults to the system's.
    pub dt: Option<f64>,
    /// Seed for the initial condition / generator noise.
    pub init_seed: u64,
    /// Chronological train fraction (ignored under a regime switch).
    pub train_fraction: f64,
    /// Keep every k-th sample after generation (coarser resample).
    pub decimate: Option<usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::System,
            name: Some("lorenz63".into()),
            system: None,
            regime_b: None,
            split_step: None,
            path: None,
            log1p: false,
            n_steps: 11_000,
            burn_in: 1_000,
            dt: None,
            init_seed: 1,
            train_fraction: 0.7,
            decimate: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Delay-window length L; defaults to the system's, or 24 for csv and
    /// seasonal data. A decimated default is shortened proportionally.
    pub window: Option<usize>,
    /// Number of nontrivial spectral coordinates.
    pub rank: usize,
    /// Density-normalization exponent of the encoder kernel.
    pub alpha: f64,
    /// Encoder kernel inverse-scale multiplier.
    pub beta: f64,
    /// Encoder kernel scale; defaults to the median squared window distance.
    pub epsilon: Option<f64>,
    /// Decoder observation noise variance.
    pub noise_var: f64,
    /// Cap on training windows for the encoder and decoder; windows beyond
    /// it are subsampled evenly.
    pub max_train_windows: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: None,
            rank: 6,
            alpha: 1.0,
            beta: 1.0,
            epsilon: None,
            noise_var: 1e-4,
            max_train_windows: 4000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcmSettings {
    pub sigma2: f64,
    pub tau2: f64,
    pub k0: f64,
    pub gain: f64,
    /// Latent kernel scale; defaults to the median squared latent distance
    /// on the training coordinates.
    pub epsilon: Option<f64>,
    /// Sample the ICGP correction instead of its posterior mean.
    pub stochastic: bool,
}

impl Default for IcmSettings {
    fn default() -> Self {
        let d = IcmConfig::default();
        IcmSettings {
            sigma2: d.sigma2,
            tau2: d.tau2,
            k0: d.k0,
            gain: d.gain,
            epsilon: None,
            stochastic: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Context lengths as multiples of L.
    pub context_multiples: Vec<usize>,
    pub temperatures: Vec<f64>,
    /// Context multiple held fixed during the temperature sweep.
    pub fixed_context_multiple: usize,
    pub horizon: usize,
    pub n_starts: usize,
    /// Standardize with full-series statistics instead of training-only.
    pub global_standardization: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            context_multiples: vec![1, 2, 4, 8, 16],
            temperatures: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            fixed_context_multiple: 16,
            horizon: 300,
            n_starts: 10,
            global_standardization: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed for start selection, rollout noise, and metric features.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub icm: IcmSettings,
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::System => {
                if d.system.is_none() && d.name.is_none() {
                    return Err(Error::Config(
                        "dataset kind 'system' needs a name or a [dataset.system] table".into(),
                    ));
                }
                if d.log1p {
                    return Err(Error::Config(
                        "log1p applies to csv and seasonal datasets only".into(),
                    ));
                }
                if d.n_steps <= d.burn_in {
                    return Err(Error::Config(format!(
                        "n_steps {} must exceed burn_in {}",
                        d.n_steps, d.burn_in
                    )));
                }
            }
            DatasetKind::Csv => {
                if d.path.is_none() {
                    return Err(Error::Config("dataset kind 'csv' needs a path".into()));
                }
            }
            DatasetKind::Seasonal => {
                if d.n_steps < 2 {
                    return Err(Error::Config("seasonal series needs n_steps >= 2".into()));
                }
            }
        }
        if d.regime_b.is_some() {
            if d.kind != DatasetKind::System {
                return Err(Error::Config(
                    "regime switching requires a system dataset".into(),
                ));
            }
            if d.split_step.is_none() {
                return Err(Error::Config("regime_b needs split_step".into()));
            }
            if d.decimate.is_some() {
                return Err(Error::Config(
                    "decimation is not supported with a regime switch".into(),
                ));
            }
        }
        if let Some(k) = d.decimate {
            if k == 0 {
                return Err(Error::Config("decimate stride must be >= 1".into()));
            }
        }
        if d.regime_b.is_none() && !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                d.train_fraction
            )));
        }

        if self.model.rank == 0 {
            return Err(Error::Config("model rank must be >= 1".into()));
        }
        if self.model.max_train_windows == 0 {
            return Err(Error::Config("max_train_windows must be >= 1".into()));
        }
        if let Some(w) = self.model.window {
            if w == 0 {
                return Err(Error::Config("window must be >= 1".into()));
            }
        }

        let s = &self.sweep;
        if s.context_multiples.is_empty() {
            return Err(Error::Config("context_multiples must be nonempty".into()));
        }
        if s.context_multiples.iter().any(|&m| m == 0) {
            return Err(Error::Config("context multiples must be >= 1".into()));
        }
        if s.fixed_context_multiple == 0 {
            return Err(Error::Config("fixed_context_multiple must be >= 1".into()));
        }
        if s.temperatures.is_empty() {
            return Err(Error::Config("temperatures must be nonempty".into()));
        }
        if s.temperatures.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::Config("temperatures must be positive".into()));
        }
        if s.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if s.n_starts == 0 {
            return Err(Error::Config("n_starts must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Data preparation

/// Dataset after generation, splitting, and standardization. `full` is in
/// modeling units (post log1p, pre standardization); `train`/`test` are the
/// standardized segments the models and rollouts see.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub full: TimeSeries,
    pub split_index: usize,
    pub standardizer: Standardizer,
    pub train: Array2<f64>,
    pub test: Array2<f64>,
    pub window: usize,
    pub dt: f64,
    pub log1p: bool,
    pub train_hash: String,
}

/// SHA-256 of a matrix's shape and little-endian payload, hex encoded.
/// Certifies which segment flowed into a fit routine.
pub fn hash_matrix(a: ArrayView2<'_, f64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(a.nrows().to_le_bytes());
    hasher.update(a.ncols().to_le_bytes());
    for v in a.iter() {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn resolve_window(cfg: &ExperimentConfig, system: Option<&OdeSystem>) -> usize {
    if let Some(w) = cfg.model.window {
        return w;
    }
    match system {
        Some(sys) => {
            let base = sys.default_window();
            match cfg.dataset.decimate {
                Some(k) => (base / k).max(2),
                None => base,
            }
        }
        None => 24,
    }
}

/// Generate or ingest the dataset for `cfg`, split, and standardize.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let (full, split_index, window) = match d.kind {
        DatasetKind::System => {
            let system = match (&d.system, &d.name) {
                (Some(sys), _) => sys.clone(),
                (None, Some(name)) => OdeSystem::from_name(name)?,
                (None, None) => unreachable!("validated"),
            };
            let dt = d.dt.unwrap_or_else(|| system.default_dt());
            let traj = TrajectoryConfig::new(dt, d.n_steps, d.burn_in, d.init_seed);
            match &d.regime_b {
                Some(regime_b) => {
                    let spec = RegimeSwitch {
                        regime_a: system.clone(),
                        regime_b: regime_b.clone(),
                        split_step: d.split_step.expect("validated"),
                    };
                    let (a, b) = integrate_regime_switch(&spec, &traj)?;
                    let split = a.len();
                    let data = concatenate(Axis(0), &[a.data(), b.data()])
                        .expect("matching dims");
                    let full = TimeSeries::with_start_time(data, dt, a.start_time());
                    let window = resolve_window(cfg, Some(&system));
                    (full, split, window)
                }
                None => {
                    let mut full = integrate(&system, &traj)?;
                    if let Some(k) = d.decimate {
                        full = full.decimate(k)?;
                    }
                    let split = split_point(full.len(), d.train_fraction)?;
                    let window = resolve_window(cfg, Some(&system));
                    (full, split, window)
                }
            }
        }
        DatasetKind::Csv => {
            let full = ingest_csv(d.path.as_ref().expect("validated"), d.log1p)?;
            let full = match d.decimate {
                Some(k) => full.decimate(k)?,
                None => full,
            };
            let split = split_point(full.len(), d.train_fraction)?;
            (full, split, resolve_window(cfg, None))
        }
        DatasetKind::Seasonal => {
            let mut full = seasonal_load(d.n_steps, d.init_seed);
            if d.log1p {
                full = TimeSeries::with_start_time(
                    full.data().mapv(f64::ln_1p),
                    full.dt(),
                    full.start_time(),
                );
            }
            let full = match d.decimate {
                Some(k) => full.decimate(k)?,
                None => full,
            };
            let split = split_point(full.len(), d.train_fraction)?;
            (full, split, resolve_window(cfg, None))
        }
    };

    let full_data = full.data();
    let train_raw = full_data.slice(s![..split_index, ..]);
    let test_raw = full_data.slice(s![split_index.., ..]);
    if train_raw.nrows() < window + 2 {
        return Err(Error::Config(format!(
            "training segment has {} samples; window {} needs at least {}",
            train_raw.nrows(),
            window,
            window + 2
        )));
    }
    let stats_source = if cfg.sweep.global_standardization {
        full.data()
    } else {
        train_raw
    };
    let standardizer = Standardizer::fit(stats_source)?;
    let train = standardizer.apply(train_raw);
    let test = standardizer.apply(test_raw);
    let train_hash = hash_matrix(train.view());

    Ok(PreparedData {
        dt: full.dt(),
        full,
        split_index,
        standardizer,
        train,
        test,
        window,
        log1p: d.log1p,
        train_hash,
    })
}

fn split_point(len: usize, fraction: f64) -> Result<usize> {
    let split = (len as f64 * fraction).floor() as usize;
    if split == 0 || split >= len {
        return Err(Error::Config(format!(
            "split fraction {fraction} leaves an empty segment for {len} samples"
        )));
    }
    Ok(split)
}

// ---------------------------------------------------------------------------
// Training and the model artifact

/// Frozen models plus everything needed to rerun an experiment: the
/// standardizer, resolved kernel scales, and the hash of the exact training
/// matrix the fits consumed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub encoder: SpectralModel,
    pub decoder: GplmDecoder,
    pub standardizer: Standardizer,
    /// Latent kernel scale for the in-context adapters.
    pub icm_epsilon: f64,
    pub window: usize,
    pub dt: f64,
    pub log1p: bool,
    pub train_hash: String,
    pub config: ExperimentConfig,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let f = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::Config(format!("{e}")))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path)?;
        serde_json::from_reader(std::io::BufReader::new(f))
            .map_err(|e| Error::Config(format!("{e}")))
    }
}

/// Fit the encoder and decoder on the prepared training segment.
///
/// Windows are subsampled evenly down to `max_train_windows`; the decoder
/// reuses the encoder's training coordinates, paired with the sample right
/// after each window. The training matrix is re-hashed here and must match
/// `prep.train_hash`, pinning both fits to the training segment.
pub fn train(cfg: &ExperimentConfig, prep: &PreparedData) -> Result<TrainedModel> {
    let got = hash_matrix(prep.train.view());
    if got != prep.train_hash {
        return Err(Error::Config(
            "training data hash mismatch: fit input is not the prepared training segment".into(),
        ));
    }
    let l = prep.window;
    let n = prep.train.nrows();
    if n < l + 2 {
        return Err(Error::Config(format!(
            "training segment has {n} samples; need at least {} for window {l}",
            l + 2
        )));
    }
    let tensor = hankelize_array(prep.train.view(), l)?;
    // Only windows with a successor sample can feed the decoder.
    let usable = tensor.n_windows() - 1;
    let stride = usable.div_ceil(cfg.model.max_train_windows);
    let indices: Vec<usize> = (0..usable).step_by(stride).collect();
    let selected = tensor.select(&indices)?;

    let epsilon = match cfg.model.epsilon {
        Some(e) => e,
        None => median_sq_dist(selected.flattened().view()),
    };
    let kernel = KernelParams::new(cfg.model.beta, epsilon, cfg.model.alpha)?;
    let encoder = SpectralModel::fit(&selected, kernel, cfg.model.rank)?;

    let latents = encoder.coordinates();
    let mut targets = Array2::zeros((indices.len(), prep.train.ncols()));
    for (row, &w) in indices.iter().enumerate() {
        targets.row_mut(row).assign(&prep.train.row(w + l));
    }
    // Decoder and adapters share the latent length scale.
    let icm_epsilon = match cfg.icm.epsilon {
        Some(e) => e,
        None => {
            let cap = latents.nrows().min(1000);
            median_sq_dist(latents.slice(s![..cap, ..]))
        }
    };
    let decoder = GplmDecoder::fit(
        latents,
        targets,
        RbfKernel {
            beta: 1.0,
            epsilon: icm_epsilon,
        },
        cfg.model.noise_var,
    )?;

    Ok(TrainedModel {
        encoder,
        decoder,
        standardizer: prep.standardizer.clone(),
        icm_epsilon,
        window: l,
        dt: prep.dt,
        log1p: prep.log1p,
        train_hash: prep.train_hash.clone(),
        config: cfg.clone(),
    })
}

// ---------------------------------------------------------------------------
// Start selection

/// Sample forecast start indices from the admissible region
/// `[l_max, test_len - horizon]`, uniformly without replacement, sorted.
/// If the region is smaller than `n_starts`, sampling is with replacement
/// and the returned flag is true.
pub fn select_starts(
    test_len: usize,
    l_max: usize,
    horizon: usize,
    n_starts: usize,
    seed: u64,
) -> Result<(Vec<usize>, bool)> {
    if l_max + horizon > test_len {
        return Err(Error::Config(format!(
            "no admissible starts: test has {test_len} samples but the longest \
             context {l_max} plus horizon {horizon} needs more"
        )));
    }
    let lo = l_max;
    let hi = test_len - horizon;
    let size = hi - lo + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut starts, flagged) = if size >= n_starts {
        let mut pool: Vec<usize> = (lo..=hi).collect();
        // Partial Fisher-Yates: the first n_starts slots become the sample.
        for i in 0..n_starts {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(n_starts);
        (pool, false)
    } else {
        let draws = (0..n_starts).map(|_| rng.gen_range(lo..=hi)).collect();
        (draws, true)
    };
    starts.sort_unstable();
    Ok((starts, flagged))
}

// ---------------------------------------------------------------------------
// Sweeps

/// One scored rollout cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    /// Context length in samples.
    pub context_len: usize,
    pub temperature: f64,
    /// Start index within the test segment.
    pub start: usize,
    pub report: MetricReport,
    /// Mean kernel-weight entropy over steps (kernel-weighted method only).
    pub mean_entropy: Option<f64>,
    /// Step at which the rollout stopped producing finite values, if any.
    pub divergence_step: Option<usize>,
}

/// Per-(method, context length, temperature) mean and standard deviation of
/// one metric across starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub context_len: usize,
    pub temperature: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
    pub starts: Vec<usize>,
    /// Starts were drawn with replacement (admissible region too small).
    pub starts_with_replacement: bool,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rollout seed for one cell. Deliberately independent of temperature so
/// matching cells of different sweeps share their noise stream.
fn cell_seed(root: u64, method: Method, context_len: usize, start: usize) -> u64 {
    let m = match method {
        Method::Nlsa => 1u64,
        Method::Lisa => 2,
        Method::Alsa => 3,
    };
    let mut s = splitmix64(root ^ 0x6c69_7365_7764);
    s = splitmix64(s ^ m);
    s = splitmix64(s ^ context_len as u64);
    s ^ splitmix64(start as u64)
}

const METHODS: [Method; 3] = [Method::Nlsa, Method::Lisa, Method::Alsa];

struct CellOutput {
    row: SweepRow,
    forecast: Forecast,
}

fn run_cell(
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    test: &Array2<f64>,
    method: Method,
    context_len: usize,
    temperature: f64,
    start: usize,
) -> Result<CellOutput> {
    let provenance = |e: Error| {
        Error::Config(format!(
            "cell method={} context_len={context_len} temperature={temperature} \
             start={start}: {e}",
            method.name()
        ))
    };
    let horizon = cfg.sweep.horizon;
    let prefix = test.slice(s![start - context_len..start, ..]);
    let rollout_cfg = RolloutConfig {
        horizon,
        method,
        context_length: context_len,
        icm: IcmConfig {
            kernel: RbfKernel {
                beta: 1.0,
                epsilon: model.icm_epsilon,
            },
            sigma2: cfg.icm.sigma2,
            tau2: cfg.icm.tau2,
            k0: cfg.icm.k0,
            gain: cfg.icm.gain,
            temperature,
            mode: IcmMode::None, // roll() substitutes the method's mode
        },
        stochastic: cfg.icm.stochastic,
        seed: cell_seed(cfg.seed, method, context_len, start),
    };
    let forecast = roll(prefix, &model.encoder, &model.decoder, &rollout_cfg)
        .map_err(provenance)?;

    let produced = forecast.values.nrows();
    let truth = test.slice(s![start..start + produced, ..]);
    let metric_cfg = MetricConfig {
        mmd_seed: cfg.seed,
        ..MetricConfig::default()
    };
    let report = evaluate(forecast.values.view(), truth, &metric_cfg).map_err(provenance)?;

    let entropies: Vec<f64> = forecast
        .diagnostics
        .iter()
        .filter_map(|d| d.weight_entropy)
        .collect();
    let mean_entropy = if entropies.is_empty() {
        None
    } else {
        Some(entropies.iter().sum::<f64>() / entropies.len() as f64)
    };

    Ok(CellOutput {
        row: SweepRow {
            method: method.name().to_string(),
            context_len,
            temperature,
            start,
            report,
            mean_entropy,
            divergence_step: forecast.divergence,
        },
        forecast,
    })
}

fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    // BTreeMap keys keep the output ordering deterministic.
    let mut groups: BTreeMap<(String, usize, u64), Vec<&SweepRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.method.clone(), row.context_len, row.temperature.to_bits()))
            .or_default()
            .push(row);
    }
    let mut out = Vec::new();
    for ((method, context_len, temp_bits), members) in groups {
        let temperature = f64::from_bits(temp_bits);
        let metrics: [(&str, fn(&SweepRow) -> f64); 4] = [
            ("mse", |r| r.report.mse),
            ("spec_div", |r| r.report.spec_div),
            ("acf_mse", |r| r.report.acf_mse),
            ("mmd2", |r| r.report.mmd2),
        ];
        for (name, get) in metrics {
            let values: Vec<f64> = members.iter().map(|r| get(r)).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            out.push(AggregateRow {
                method: method.clone(),
                context_len,
                temperature,
                metric: name.to_string(),
                mean,
                std: var.sqrt(),
            });
        }
    }
    out
}

/// The (context length, temperature) grid a sweep visits.
enum SweepAxis {
    Context(Vec<usize>),
    Temperature { context_len: usize, values: Vec<f64> },
}

fn run_sweep(
    cfg: &ExperimentConfig,
    model: Option<TrainedModel>,
    axis: SweepAxis,
    out_dir: Option<&Path>,
) -> Result<(SweepResult, TrainedModel)> {
    let prep = prepare(cfg)?;
    let model = match model {
        Some(m) => {
            if m.train_hash != prep.train_hash {
                return Err(Error::Config(
                    "model artifact was trained on different data than this config prepares"
                        .into(),
                ));
            }
            m
        }
        None => train(cfg, &prep)?,
    };

    let l = model.window;
    let cells: Vec<(usize, f64)> = match &axis {
        SweepAxis::Context(multiples) => multiples.iter().map(|&m| (m * l, 1.0)).collect(),
        SweepAxis::Temperature {
            context_len,
            values,
        } => values.iter().map(|&t| (*context_len, t)).collect(),
    };
    let l_max = cells.iter().map(|&(len, _)| len).max().expect("validated");
    let (starts, starts_with_replacement) = select_starts(
        prep.test.nrows(),
        l_max,
        cfg.sweep.horizon,
        cfg.sweep.n_starts,
        cfg.seed,
    )?;

    let mut rows = Vec::new();
    let mut export: BTreeMap<(String, usize), Forecast> = BTreeMap::new();
    let export_cell = export_cell(&cells);
    for &(context_len, temperature) in &cells {
        for &start in &starts {
            for method in METHODS {
                let cell = run_cell(cfg, &model, &prep.test, method, context_len, temperature, start)?;
                if (context_len, temperature) == export_cell {
                    export.insert((method.name().to_string(), start), cell.forecast);
                }
                rows.push(cell.row);
            }
        }
    }
    let aggregates = aggregate(&rows);
    let result = SweepResult {
        rows,
        aggregates,
        starts,
        starts_with_replacement,
    };

    if let Some(dir) = out_dir {
        write_outputs(dir, cfg, &model, &prep, &result, &export)?;
    }
    Ok((result, model))
}

/// Forecast files are written for one designated cell: the largest context
/// in a context sweep, the temperature nearest 1 in a temperature sweep.
fn export_cell(cells: &[(usize, f64)]) -> (usize, f64) {
    *cells
        .iter()
        .max_by(|a, b| {
            let score = |c: &(usize, f64)| (c.0 as f64, -(c.1.ln().abs()));
            score(a).partial_cmp(&score(b)).expect("finite")
        })
        .expect("nonempty")
}

/// Train once (or reuse `model`), then score every method at every context
/// length in `cfg.sweep.context_multiples` across the shared starts.
pub fn run_context_sweep(
    cfg: &ExperimentConfig,
    model: Option<TrainedModel>,
    out_dir: Option<&Path>,
) -> Result<(SweepResult, TrainedModel)> {
    run_sweep(
        cfg,
        model,
        SweepAxis::Context(cfg.sweep.context_multiples.clone()),
        out_dir,
    )
}

/// As the context sweep, but the context is pinned to
/// `fixed_context_multiple * L` and the adapter temperature is swept.
pub fn run_temperature_sweep(
    cfg: &ExperimentConfig,
    model: Option<TrainedModel>,
    out_dir: Option<&Path>,
) -> Result<(SweepResult, TrainedModel)> {
    let prep_window = match cfg.model.window {
        Some(w) => w,
        None => prepare(cfg)?.window,
    };
    run_sweep(
        cfg,
        model,
        SweepAxis::Temperature {
            context_len: cfg.sweep.fixed_context_multiple * prep_window,
            values: cfg.sweep.temperatures.clone(),
        },
        out_dir,
    )
}

// ---------------------------------------------------------------------------
// Output files

fn to_original_units(model: &TrainedModel, standardized: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = model.standardizer.invert(standardized);
    if model.log1p {
        out.mapv_inplace(f64::exp_m1);
    }
    out
}

#[derive(Serialize)]
struct ResolvedProvenance<'a> {
    window: usize,
    dt: f64,
    icm_epsilon: f64,
    encoder_epsilon: f64,
    encoder_windows: usize,
    train_hash: &'a str,
    split_index: usize,
    starts: &'a [usize],
    starts_with_replacement: bool,
    config: &'a ExperimentConfig,
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    model: &TrainedModel,
    prep: &PreparedData,
    result: &SweepResult,
    export: &BTreeMap<(String, usize), Forecast>,
) -> Result<()> {
    fs::create_dir_all(dir)?;

    let resolved = ResolvedProvenance {
        window: model.window,
        dt: model.dt,
        icm_epsilon: model.icm_epsilon,
        encoder_epsilon: model.encoder.kernel().epsilon,
        encoder_windows: model.encoder.n_train(),
        train_hash: &model.train_hash,
        split_index: prep.split_index,
        starts: &result.starts,
        starts_with_replacement: result.starts_with_replacement,
        config: cfg,
    };
    let text =
        toml::to_string_pretty(&resolved).map_err(|e| Error::Config(format!("{e}")))?;
    fs::write(dir.join("config.resolved"), text)?;

    let mut raw = String::from(
        "method,context_len,temperature,start,mse,spec_div,acf_mse,mmd2,mean_entropy,divergence_step\n",
    );
    for row in &result.rows {
        let entropy = row.mean_entropy.map(fmt_f64).unwrap_or_default();
        let diverged = row
            .divergence_step
            .map(|s| s.to_string())
            .unwrap_or_default();
        raw.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.method,
            row.context_len,
            fmt_f64(row.temperature),
            row.start,
            fmt_f64(row.report.mse),
            fmt_f64(row.report.spec_div),
            fmt_f64(row.report.acf_mse),
            fmt_f64(row.report.mmd2),
            entropy,
            diverged,
        ));
    }
    fs::write(dir.join("raw_metrics.csv"), raw)?;

    let mut agg = String::from("method,context_len,temperature,metric,mean,std\n");
    for a in &result.aggregates {
        agg.push_str(&format!(
            "{},{},{},{},{},{}\n",
            a.method,
            a.context_len,
            fmt_f64(a.temperature),
            a.metric,
            fmt_f64(a.mean),
            fmt_f64(a.std),
        ));
    }
    fs::write(dir.join("aggregates.csv"), agg)?;

    for ((method, start), forecast) in export {
        export_forecast(
            &dir.join(format!("forecast_{method}_{start}.csv")),
            model,
            prep,
            *start,
            forecast,
        )?;
    }

    export_trajectory(prep, &dir.join("trajectory_export.csv"))?;
    Ok(())
}

/// Write one forecast as `t,x*_pred,...,x*_true,...,sq_err` in original
/// units (squared error stays in standardized space, matching the metric
/// tables). `start` is the forecast's start index within the test segment.
pub fn export_forecast(
    path: &Path,
    model: &TrainedModel,
    prep: &PreparedData,
    start: usize,
    forecast: &Forecast,
) -> Result<()> {
    let produced = forecast.values.nrows();
    if start + produced > prep.test.nrows() {
        return Err(Error::InvalidArgument(format!(
            "forecast covers test rows {start}..{} but the segment has {}",
            start + produced,
            prep.test.nrows()
        )));
    }
    let pred = to_original_units(model, forecast.values.view());
    let truth_std = prep.test.slice(s![start..start + produced, ..]);
    let truth = to_original_units(model, truth_std);
    let d = pred.ncols();
    let mut text = String::from("t");
    for x in 0..d {
        text.push_str(&format!(",x{x}_pred"));
    }
    for x in 0..d {
        text.push_str(&format!(",x{x}_true"));
    }
    text.push_str(",sq_err\n");
    for h in 0..produced {
        let t = prep.full.time_at(prep.split_index + start + h);
        text.push_str(&fmt_f64(t));
        for x in 0..d {
            text.push(',');
            text.push_str(&fmt_f64(pred[[h, x]]));
        }
        for x in 0..d {
            text.push(',');
            text.push_str(&fmt_f64(truth[[h, x]]));
        }
        let sq: f64 = (0..d)
            .map(|x| {
                let diff = forecast.values[[h, x]] - prep.test[[start + h, x]];
                diff * diff
            })
            .sum();
        text.push(',');
        text.push_str(&fmt_f64(sq));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Write the prepared dataset in original units (log1p undone).
pub fn export_trajectory(prep: &PreparedData, path: &Path) -> Result<()> {
    let series = if prep.log1p {
        TimeSeries::with_start_time(
            prep.full.data().mapv(f64::exp_m1),
            prep.full.dt(),
            prep.full.start_time(),
        )
    } else {
        prep.full.clone()
    };
    series.save_csv(path)
}
