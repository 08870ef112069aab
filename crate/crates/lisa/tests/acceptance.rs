//! End-to-end acceptance checks: independent linear-algebra and metric
//! oracles, directional forecasting claims on regime-switch and stationary
//! tasks, determinism of the full pipeline, and integrator sanity. Each test
//! prints one PASS/FAIL line (visible with --nocapture).

use std::fs;
use std::sync::OnceLock;

use ndarray::{s, Array1, Array2, ArrayView1};
use ndarray_linalg::Solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use lisa::dynsys::{integrate, InitialState, OdeSystem, TrajectoryConfig};
use lisa::gplm::{GplmDecoder, RbfKernel};
use lisa::hankel::hankelize_array;
use lisa::harness::{
    prepare, run_context_sweep, run_temperature_sweep, train, DatasetConfig, ExperimentConfig,
    IcmSettings, ModelConfig, SweepConfig, SweepResult, TrainedModel,
};
use lisa::icm::{icgp_correction, icnw_correction, IcmConfig, IcmMode, IcmState};
use lisa::metrics::{
    acf_mse, mmd2, mmd2_rff, mse, spectral_divergence, DivergenceKind, WelchSettings, WindowFn,
};
use lisa::rollout::{roll, Method, RolloutConfig};
use lisa::spectral::{cl_softmax, median_sq_dist, KernelParams, SpectralModel};

fn verdict(ok: bool, label: &str) {
    println!("{}: {label}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{label}");
}

// -------------------------------------------------------------------------
// Adapters collapse onto the baseline when the context adds no residuals.

#[test]
fn adapters_reduce_to_baseline_at_minimal_context() {
    let systems = [
        "lorenz63",
        "lorenz96",
        "rossler",
        "duffing_ness",
        "duffing_ne",
        "chua",
        "halvorsen",
        "torus",
    ];
    let horizon = 200;
    let mut worst: f64 = 0.0;
    for name in systems {
        let cfg = ExperimentConfig {
            seed: 5,
            dataset: DatasetConfig {
                name: Some(name.into()),
                n_steps: 1400,
                burn_in: 200,
                init_seed: 2,
                ..DatasetConfig::default()
            },
            model: ModelConfig {
                window: Some(20),
                rank: 4,
                max_train_windows: 500,
                ..ModelConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let prep = prepare(&cfg).expect(name);
        let model = train(&cfg, &prep).expect(name);
        let l = model.window;
        let prefix = prep.test.slice(s![..l, ..]);

        let mut forecasts = Vec::new();
        for method in [Method::Nlsa, Method::Lisa, Method::Alsa] {
            let rollout_cfg = RolloutConfig {
                horizon,
                method,
                context_length: l,
                icm: IcmConfig {
                    kernel: RbfKernel {
                        beta: 1.0,
                        epsilon: model.icm_epsilon,
                    },
                    ..IcmConfig::default()
                },
                stochastic: false,
                seed: 99,
            };
            let fc = roll(prefix, &model.encoder, &model.decoder, &rollout_cfg).expect(name);
            assert_eq!(fc.values.nrows(), horizon, "{name}: diverged");
            forecasts.push(fc.values);
        }
        for alt in &forecasts[1..] {
            for (a, b) in alt.iter().zip(forecasts[0].iter()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    verdict(
        worst <= 1e-12,
        &format!("at context = window every method matches the baseline elementwise (worst gap {worst:.3e})"),
    );
}

// -------------------------------------------------------------------------
// GP algebra against dense LU solves.

fn lu_solve_columns(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut x = Array2::zeros(b.dim());
    for j in 0..b.ncols() {
        let col = a.solve(&b.column(j).to_owned()).expect("nonsingular");
        x.column_mut(j).assign(&col);
    }
    x
}

#[test]
fn gp_posteriors_match_dense_solve_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let r = rng.gen_range(1..=5);
        let d = rng.gen_range(1..=4);
        let m = rng.gen_range(r + 2..=30);
        let c = rng.gen_range(1..=30);
        let kernel = RbfKernel {
            beta: rng.gen_range(0.5..2.0),
            epsilon: rng.gen_range(0.5..4.0),
        };
        let noise = rng.gen_range(1e-6..1e-2);
        let gauss = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| {
                let v: f64 = StandardNormal.sample(rng);
                v
            })
        };

        // Decoder: posterior mean and variance at a fresh latent.
        let latents = gauss(&mut rng, m, r);
        let targets = gauss(&mut rng, m, d);
        let z = Array1::from_shape_fn(r, |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let decoder =
            GplmDecoder::fit(latents.clone(), targets.clone(), kernel.clone(), noise).unwrap();
        let (mean, var) = decoder.predict(z.view()).unwrap();

        let mut gram = kernel.matrix(latents.view(), latents.view());
        for i in 0..m {
            gram[[i, i]] += noise;
        }
        let k_row = Array1::from_shape_fn(m, |i| kernel.eval(z.view(), latents.row(i)));
        let weights = lu_solve_columns(&gram, &targets);
        let mean_oracle = weights.t().dot(&k_row);
        let var_oracle = (1.0 - k_row.dot(&gram.solve(&k_row).unwrap())).clamp(0.0, 1.0);
        for (a, b) in mean.iter().zip(mean_oracle.iter()) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((var - var_oracle).abs());

        // Residual GP: correction mean, scalar variance, confidence gate.
        let icm_cfg = IcmConfig {
            kernel: kernel.clone(),
            sigma2: noise,
            tau2: rng.gen_range(0.25..4.0),
            k0: 4.0,
            gain: 1.0,
            temperature: [0.5, 1.0, 2.0][rng.gen_range(0..3)],
            mode: IcmMode::Icgp,
        };
        let ctx_latents = gauss(&mut rng, c, r);
        let residuals = gauss(&mut rng, c, d);
        let baselines = Array2::zeros((c + 1, d));
        let state = IcmState::from_parts(
            ctx_latents.clone(),
            residuals.clone(),
            z.clone(),
            baselines,
            &icm_cfg,
        )
        .unwrap();
        let (delta, s2, gate) = icgp_correction(&state, &icm_cfg).unwrap();

        let hot = icm_cfg.kernel.with_temperature(icm_cfg.temperature);
        let mut gram_c = hot.matrix(ctx_latents.view(), ctx_latents.view());
        for i in 0..c {
            gram_c[[i, i]] += icm_cfg.sigma2;
        }
        let k_ctx = Array1::from_shape_fn(c, |i| hot.eval(z.view(), ctx_latents.row(i)));
        let delta_oracle = lu_solve_columns(&gram_c, &residuals).t().dot(&k_ctx);
        let s2_oracle = (1.0 - k_ctx.dot(&gram_c.solve(&k_ctx).unwrap())).clamp(0.0, 1.0);
        let gate_oracle = icm_cfg.tau2 / (icm_cfg.tau2 + s2_oracle);
        for (a, b) in delta.iter().zip(delta_oracle.iter()) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((s2 - s2_oracle).abs());
        worst = worst.max((gate - gate_oracle).abs());

        // Kernel-weighted correction against direct summation.
        let (delta_nw, weights_nw, degenerate) = icnw_correction(&state, &icm_cfg);
        assert!(!degenerate);
        let total: f64 = k_ctx.sum();
        for x in 0..d {
            let direct: f64 = (0..c).map(|a| k_ctx[a] / total * residuals[[a, x]]).sum();
            worst = worst.max((delta_nw[x] - direct).abs());
        }
        for a in 0..c {
            worst = worst.max((weights_nw[a] - k_ctx[a] / total).abs());
        }
    }
    verdict(
        worst <= 1e-10,
        &format!("GP and kernel-average corrections match dense oracles on 200 instances (worst gap {worst:.3e})"),
    );
}

// -------------------------------------------------------------------------
// Spectral operator against a from-scratch dense construction.

#[test]
fn spectral_operator_matches_dense_oracle() {
    // Row-stochasticity of the normalized kernel operator.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_row: f64 = 0.0;
    for &alpha in &[0.0, 0.5, 1.0] {
        let pts = Array2::from_shape_fn((40, 3), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v
        });
        let mut h = Array2::zeros((40, 40));
        for i in 0..40 {
            for j in 0..40 {
                let diff = &pts.row(i) - &pts.row(j);
                h[[i, j]] = diff.dot(&diff);
            }
        }
        let p = cl_softmax(&h, &KernelParams::new(1.0, 1.0, alpha).unwrap()).unwrap();
        for i in 0..40 {
            worst_row = worst_row.max((p.row(i).sum() - 1.0).abs());
        }
    }

    // Eigenpairs of the trained operator, checked on an independently
    // assembled dense operator.
    let sys = OdeSystem::from_name("lorenz63").unwrap();
    let traj = TrajectoryConfig::new(0.01, 500, 200, 4);
    let series = integrate(&sys, &traj).unwrap();
    let data = series.data().slice(s![..69, ..]).to_owned();
    let tensor = hankelize_array(data.view(), 20).unwrap();
    assert_eq!(tensor.n_windows(), 50);
    let flat = tensor.flattened();
    let epsilon = median_sq_dist(flat.view());
    let kernel = KernelParams::new(1.0, epsilon, 1.0).unwrap();
    let model = SpectralModel::fit(&tensor, kernel, 5).unwrap();

    let n = 50;
    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let diff = &flat.row(i) - &flat.row(j);
            k[[i, j]] = (-diff.dot(&diff) / epsilon).exp();
        }
    }
    let q = k.sum_axis(ndarray::Axis(1));
    let mut k_alpha = k.clone();
    for i in 0..n {
        for j in 0..n {
            k_alpha[[i, j]] /= q[i] * q[j];
        }
    }
    let rho = k_alpha.sum_axis(ndarray::Axis(1));
    let mut p = k_alpha;
    for i in 0..n {
        let inv = 1.0 / rho[i];
        p.row_mut(i).mapv_inplace(|v| v * inv);
    }

    let mut worst_resid: f64 = 0.0;
    for x in 0..model.eigenvalues().len() {
        let lam = model.eigenvalues()[x];
        let v = model.eigenvectors().column(x).to_owned();
        let resid = &p.dot(&v) - &(&v * lam);
        worst_resid = worst_resid.max(resid.iter().fold(0.0f64, |m, r| m.max(r.abs())));
    }

    // Out-of-sample extension evaluated at the training windows themselves.
    let recon = model.encode_flat_batch(flat.view()).unwrap();
    let stored = model.coordinates();
    let mut worst_nystrom: f64 = 0.0;
    for (a, b) in recon.iter().zip(stored.iter()) {
        worst_nystrom = worst_nystrom.max((a - b).abs());
    }

    verdict(
        worst_row <= 1e-12 && worst_resid <= 1e-8 && worst_nystrom <= 1e-6,
        &format!(
            "spectral operator checks: row sums {worst_row:.3e}, eigen residual {worst_resid:.3e}, training reconstruction {worst_nystrom:.3e}"
        ),
    );
}

// -------------------------------------------------------------------------
// Metrics against brute-force summation.

fn brute_autocorr(x: ArrayView1<'_, f64>, tau_max: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (0..=tau_max)
        .map(|tau| {
            (0..n - tau)
                .map(|t| (x[t] - mean) * (x[t + tau] - mean))
                .sum::<f64>()
                / denom
        })
        .collect()
}

fn brute_psd_mass(x: ArrayView1<'_, f64>, eps: f64) -> Vec<f64> {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut psd = Vec::new();
    for k in 1..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for t in 0..n {
            let phase = std::f64::consts::TAU * k as f64 * t as f64 / n as f64;
            let v = (x[t] - mean) * w[t];
            re += v * phase.cos();
            im -= v * phase.sin();
        }
        psd.push((re * re + im * im) / wss);
    }
    let floored: Vec<f64> = psd.iter().map(|&s| s + eps).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|s| s / total).collect()
}

#[test]
fn metrics_match_brute_force_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = rng.gen_range(16..=64);
        let d = rng.gen_range(1..=4);
        let gen_series = |rng: &mut ChaCha8Rng| {
            Array2::from_shape_fn((h, d), |(t, x)| {
                let noise: f64 = StandardNormal.sample(rng);
                ((t as f64) * 0.2 + x as f64).sin() + 0.3 * noise
            })
        };
        let f = gen_series(&mut rng);
        let t = gen_series(&mut rng);

        // Mean squared error.
        let (total, by_horizon) = mse(f.view(), t.view()).unwrap();
        let mut brute_rows = Vec::new();
        for a in 0..h {
            let mut acc = 0.0;
            for x in 0..d {
                let diff = f[[a, x]] - t[[a, x]];
                acc += diff * diff;
            }
            brute_rows.push(acc);
        }
        let brute_total = brute_rows.iter().sum::<f64>() / h as f64;
        worst = worst.max((total - brute_total).abs());
        for (a, b) in by_horizon.iter().zip(brute_rows.iter()) {
            worst = worst.max((a - b).abs());
        }

        // Autocorrelation mismatch.
        let tau_max = (h - 1).min(50);
        let (acf, flag) = acf_mse(f.view(), t.view(), Some(tau_max)).unwrap();
        assert!(!flag);
        let mut acc = 0.0;
        for x in 0..d {
            let rf = brute_autocorr(f.column(x), tau_max);
            let rt = brute_autocorr(t.column(x), tau_max);
            for tau in 1..=tau_max {
                let diff = rf[tau] - rt[tau];
                acc += diff * diff;
            }
        }
        worst = worst.max((acf - acc / (tau_max as f64 * d as f64)).abs());

        // Spectral divergence, single segment.
        let welch = WelchSettings {
            segment_len: Some(h),
            overlap: 0.0,
            window: WindowFn::Hann,
            eps_floor: 1e-12,
        };
        let (js, _) = spectral_divergence(f.view(), t.view(), DivergenceKind::Js, &welch).unwrap();
        let mut js_brute = 0.0;
        for x in 0..d {
            let pt = brute_psd_mass(t.column(x), 1e-12);
            let pf = brute_psd_mass(f.column(x), 1e-12);
            let mut acc = 0.0;
            for (a, b) in pt.iter().zip(pf.iter()) {
                let m = 0.5 * (a + b);
                acc += 0.5 * a * (a / m).ln() + 0.5 * b * (b / m).ln();
            }
            js_brute += acc;
        }
        worst = worst.max((js - (js_brute / d as f64).max(0.0)).abs());

        // Exact-kernel two-sample distance.
        let bw = 1.3;
        let v = mmd2(t.view(), f.view(), bw).unwrap();
        let kern = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
            let diff = &a - &b;
            (-diff.dot(&diff) / (2.0 * bw * bw)).exp()
        };
        let n = h as f64;
        let mut s_tt = 0.0;
        let mut s_ff = 0.0;
        let mut s_tf = 0.0;
        for i in 0..h {
            for j in 0..h {
                if i != j {
                    s_tt += kern(t.row(i), t.row(j));
                    s_ff += kern(f.row(i), f.row(j));
                }
                s_tf += kern(t.row(i), f.row(j));
            }
        }
        let brute_mmd = s_tt / (n * (n - 1.0)) + s_ff / (n * (n - 1.0)) - 2.0 * s_tf / (n * n);
        worst = worst.max((v - brute_mmd).abs());
    }

    // Random-feature approximation against the exact kernel estimate.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let sample = |rng: &mut ChaCha8Rng, shift: f64| {
        Array2::from_shape_fn((100, 3), |_| {
            let v: f64 = StandardNormal.sample(rng);
            v + shift
        })
    };
    let t = sample(&mut rng, 0.0);
    let f = sample(&mut rng, 0.5);
    let bw = 2.0;
    let exact = mmd2(t.view(), f.view(), bw).unwrap();
    let approx = mmd2_rff(t.view(), f.view(), 2048, bw, 9).unwrap();
    let rff_gap = (exact - approx).abs();

    verdict(
        worst <= 1e-10 && rff_gap <= 0.01,
        &format!("metric oracles: brute-force gap {worst:.3e}, random-feature gap {rff_gap:.4}"),
    );
}

// -------------------------------------------------------------------------
// Regime-switch task shared by the adaptation and temperature tests.

fn regime_config() -> ExperimentConfig {
    ExperimentConfig {
        seed: 11,
        dataset: DatasetConfig {
            name: Some("lorenz63".into()),
            regime_b: Some(OdeSystem::Lorenz63 {
                sigma: 16.0,
                rho: 50.0,
                beta: 3.0,
            }),
            split_step: Some(8000),
            n_steps: 15_000,
            burn_in: 1000,
            init_seed: 6,
            ..DatasetConfig::default()
        },
        model: ModelConfig {
            rank: 6,
            max_train_windows: 3000,
            ..ModelConfig::default()
        },
        icm: IcmSettings::default(),
        sweep: SweepConfig {
            context_multiples: vec![1, 16],
            temperatures: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e6],
            fixed_context_multiple: 16,
            horizon: 300,
            n_starts: 10,
            global_standardization: false,
        },
    }
}

static REGIME_MODEL: OnceLock<TrainedModel> = OnceLock::new();

fn regime_model() -> &'static TrainedModel {
    REGIME_MODEL.get_or_init(|| {
        let cfg = regime_config();
        let prep = prepare(&cfg).expect("regime dataset");
        train(&cfg, &prep).expect("regime training")
    })
}

fn aggregate_mean(result: &SweepResult, method: &str, context_len: usize, temperature: f64, metric: &str) -> f64 {
    result
        .aggregates
        .iter()
        .find(|a| {
            a.method == method
                && a.context_len == context_len
                && a.temperature == temperature
                && a.metric == metric
        })
        .unwrap_or_else(|| panic!("missing aggregate {method}/{context_len}/{temperature}/{metric}"))
        .mean
}

#[test]
fn long_context_adapts_across_a_regime_switch() {
    let cfg = regime_config();
    let model = regime_model().clone();
    let (result, model) = run_context_sweep(&cfg, Some(model), None).unwrap();
    let l = model.window;

    let mse_base = aggregate_mean(&result, "nlsa", l, 1.0, "mse");
    let mse_alsa = aggregate_mean(&result, "alsa", 16 * l, 1.0, "mse");
    let mmd_base = aggregate_mean(&result, "nlsa", l, 1.0, "mmd2");
    let mmd_alsa = aggregate_mean(&result, "alsa", 16 * l, 1.0, "mmd2");

    verdict(
        mse_alsa < mse_base && mmd_alsa <= 0.9 * mmd_base,
        &format!(
            "regime switch: kernel-weighted adapter at 16 windows of context vs baseline, \
             MSE {mse_alsa:.4} vs {mse_base:.4}, MMD2 {mmd_alsa:.4} vs {mmd_base:.4}"
        ),
    );
}

#[test]
fn temperature_controls_adapter_locality() {
    let cfg = regime_config();
    let model = regime_model().clone();
    let (result, model) = run_temperature_sweep(&cfg, Some(model), None).unwrap();
    let fixed = 16 * model.window;

    let grid = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3];
    let best_grid = grid
        .iter()
        .map(|&t| aggregate_mean(&result, "alsa", fixed, t, "mse"))
        .fold(f64::INFINITY, f64::min);
    let hot = aggregate_mean(&result, "alsa", fixed, 1e6, "mse");

    // Near-uniform mixing: kernel weights flatten, entropy approaches ln C.
    let c = (fixed - model.window) as f64;
    let mut worst_entropy_gap: f64 = 0.0;
    for row in result
        .rows
        .iter()
        .filter(|r| r.method == "alsa" && r.temperature == 1e6)
    {
        let entropy = row.mean_entropy.expect("weighted method reports entropy");
        worst_entropy_gap = worst_entropy_gap.max((entropy - c.ln()).abs());
    }

    verdict(
        hot > best_grid && worst_entropy_gap <= 1e-3,
        &format!(
            "temperature sweep: near-uniform mixing MSE {hot:.4} vs best grid {best_grid:.4}, \
             entropy gap to ln C {worst_entropy_gap:.2e}"
        ),
    );
}

// -------------------------------------------------------------------------
// Stationary task: adaptation must not hurt a healthy baseline.

#[test]
fn adapters_do_not_degrade_a_stationary_baseline() {
    let cfg = ExperimentConfig {
        seed: 13,
        dataset: DatasetConfig {
            name: Some("rossler".into()),
            n_steps: 62_000,
            burn_in: 2000,
            init_seed: 8,
            decimate: Some(10),
            ..DatasetConfig::default()
        },
        model: ModelConfig {
            rank: 6,
            max_train_windows: 3000,
            ..ModelConfig::default()
        },
        icm: IcmSettings::default(),
        sweep: SweepConfig {
            context_multiples: vec![1, 2, 4, 8],
            horizon: 300,
            n_starts: 10,
            ..SweepConfig::default()
        },
    };
    let (result, model) = run_context_sweep(&cfg, None, None).unwrap();
    let l = model.window;

    let base = aggregate_mean(&result, "nlsa", l, 1.0, "mse");
    let best_alsa = cfg
        .sweep
        .context_multiples
        .iter()
        .map(|&m| aggregate_mean(&result, "alsa", m * l, 1.0, "mse"))
        .fold(f64::INFINITY, f64::min);

    verdict(
        best_alsa <= 1.05 * base,
        &format!("stationary task: best adapted MSE {best_alsa:.4} vs baseline {base:.4}"),
    );
}

// -------------------------------------------------------------------------
// Whole-pipeline determinism through the serialized artifact.

#[test]
fn sweep_rerun_from_artifact_reproduces_outputs_bitwise() {
    let cfg = ExperimentConfig {
        seed: 3,
        dataset: DatasetConfig {
            n_steps: 3000,
            burn_in: 500,
            init_seed: 14,
            ..DatasetConfig::default()
        },
        model: ModelConfig {
            window: Some(20),
            rank: 4,
            max_train_windows: 800,
            ..ModelConfig::default()
        },
        icm: IcmSettings::default(),
        sweep: SweepConfig {
            context_multiples: vec![1, 2],
            horizon: 40,
            n_starts: 2,
            ..SweepConfig::default()
        },
    };
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let (_, model) = run_context_sweep(&cfg, None, Some(&out_a)).unwrap();

    let artifact = dir.path().join("model.json");
    model.save(&artifact).unwrap();
    let reloaded = TrainedModel::load(&artifact).unwrap();
    let out_b = dir.path().join("b");
    run_context_sweep(&cfg, Some(reloaded), Some(&out_b)).unwrap();

    let mut names: Vec<String> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut names_b: Vec<String> = fs::read_dir(&out_b)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names_b.sort();
    assert_eq!(names, names_b, "output file sets differ");

    let mut all_equal = true;
    for name in &names {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        if a != b {
            all_equal = false;
            println!("mismatch in {name}");
        }
    }
    verdict(
        all_equal,
        &format!("artifact rerun reproduces all {} output files bitwise", names.len()),
    );
}

// -------------------------------------------------------------------------
// Integrator sanity: fourth-order convergence and attractor boundedness.

#[test]
fn integrator_shows_fourth_order_convergence_and_stays_bounded() {
    // Undamped, undriven oscillator: x'' = -x, solution (cos t, -sin t).
    let oscillator = OdeSystem::DuffingNe {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
        delta: 0.0,
        omega: 1.0,
    };
    let t_final = 2.0;
    let endpoint_error = |dt: f64| {
        let n = (t_final / dt).round() as usize + 1;
        let cfg = TrajectoryConfig {
            dt,
            n_steps: n,
            burn_in: 0,
            init: InitialState::Fixed(vec![1.0, 0.0]),
        };
        let series = integrate(&oscillator, &cfg).unwrap();
        let last = series.data().row(series.len() - 1).to_owned();
        let t = series.time_at(series.len() - 1);
        ((last[0] - t.cos()).powi(2) + (last[1] + t.sin()).powi(2)).sqrt()
    };
    let e_coarse = endpoint_error(0.02);
    let e_fine = endpoint_error(0.01);
    let ratio = e_coarse / e_fine;

    let lorenz = OdeSystem::from_name("lorenz63").unwrap();
    let traj = TrajectoryConfig::new(0.01, 100_000, 0, 1);
    let series = integrate(&lorenz, &traj).unwrap();
    let max_abs = series
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    verdict(
        (14.0..=18.0).contains(&ratio) && max_abs < 1e3,
        &format!(
            "integrator: halving dt shrinks oscillator error {ratio:.2}x (expect ~16), \
             chaotic trajectory stays bounded at {max_abs:.1}"
        ),
    );
}
