//! Linear adaptation under distribution shift, demonstrated with PCA.
//!
//! A loading matrix fit on samples from one Gaussian population embeds
//! samples from a shifted population into stale coordinates. When the
//! shifted covariance is known, the least-squares optimal linear map from
//! those stale latents back to ambient coordinates has a closed form,
//! [`oracle_adaptation`]. When only a short context from the shifted
//! population is available, the plug-in empirical covariance stands in, and
//! its adaptation error approaches the oracle's as the context grows;
//! [`adaptation_demo`] measures that convergence.
//!
//! This module is a standalone illustration of why short contexts carry
//! enough signal to re-anchor a frozen representation. It is not part of
//! the forecasting pipeline.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Principal-component model of one population: orthonormal loading columns,
/// the sample mean, and the captured variances in descending order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    loading: Array2<f64>,
    mean: Array1<f64>,
    eigvals: Array1<f64>,
}

impl PcaModel {
    /// `D x r` loading matrix; columns are principal directions.
    pub fn loading(&self) -> &Array2<f64> {
        &self.loading
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    /// Captured variances, nonnegative and descending.
    pub fn eigvals(&self) -> &Array1<f64> {
        &self.eigvals
    }

    pub fn dim(&self) -> usize {
        self.loading.nrows()
    }

    pub fn rank(&self) -> usize {
        self.loading.ncols()
    }

    /// Latent coordinates of `samples` (rows): `(x - mean) V`.
    pub fn embed(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if samples.ncols() != self.dim() {
            return Err(Error::shape("pca embed", self.dim(), samples.ncols()));
        }
        Ok((&samples - &self.mean).dot(&self.loading))
    }
}

/// Sample mean and `1/(N-1)`-normalized covariance of `samples` (rows).
pub fn empirical_covariance(samples: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mean = samples.mean_axis(Axis(0)).expect("nonempty");
    let centered = &samples - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    Ok((mean, cov))
}

/// Fit a rank-`r` PCA model to `samples` (N x D).
///
/// `r` may not exceed `min(N - 1, D)`, the largest rank the empirical
/// covariance can achieve. Degenerate data simply yield trailing zero
/// eigenvalues. Column signs follow the convention used throughout: the
/// entry of largest magnitude is positive.
pub fn fit_pca(samples: ArrayView2<'_, f64>, r: usize) -> Result<PcaModel> {
    let (n, d) = samples.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "pca needs at least 2 samples, got {n}"
        )));
    }
    let max_rank = (n - 1).min(d);
    if r == 0 || r > max_rank {
        return Err(Error::InvalidArgument(format!(
            "pca rank must lie in 1..={max_rank} for {n} samples in dimension {d}, got {r}"
        )));
    }
    let (mean, cov) = empirical_covariance(samples)?;
    let (eigvals, eigvecs) = crate::linalg::eigh_descending(&cov)?;
    let mut loading = eigvecs.slice(ndarray::s![.., ..r]).to_owned();
    for mut col in loading.axis_iter_mut(Axis(1)) {
        let mut pivot = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    let eigvals = eigvals.slice(ndarray::s![..r]).mapv(|v| v.max(0.0));
    Ok(PcaModel {
        loading,
        mean,
        eigvals,
    })
}

/// Solve `a x = b` for each column of `b` by Gaussian elimination with
/// partial pivoting. `a` is consumed. Near-zero pivots signal singularity.
fn solve_columns(mut a: Array2<f64>, mut b: Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for k in 0..n {
        let mut pivot = k;
        for i in k + 1..n {
            if a[[i, k]].abs() > a[[pivot, k]].abs() {
                pivot = i;
            }
        }
        if a[[pivot, k]].abs() <= 1e-12 * scale {
            return Err(Error::InvalidArgument(
                "projected covariance is singular".into(),
            ));
        }
        if pivot != k {
            for j in 0..n {
                a.swap([k, j], [pivot, j]);
            }
            for j in 0..b.ncols() {
                b.swap([k, j], [pivot, j]);
            }
        }
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for j in k..n {
                a[[i, j]] -= f * a[[k, j]];
            }
            for j in 0..b.ncols() {
                b[[i, j]] -= f * b[[k, j]];
            }
        }
    }
    let mut x = Array2::zeros(b.dim());
    for j in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[[i, j]];
            for k in i + 1..n {
                s -= a[[i, k]] * x[[k, j]];
            }
            x[[i, j]] = s / a[[i, i]];
        }
    }
    Ok(x)
}

/// Least-squares optimal linear map from stale latents back to ambient
/// coordinates under a shifted covariance `sigma_q`:
/// `W = Sigma_Q V (V^T Sigma_Q V)^-1`, a `D x r` matrix.
///
/// Errors if the projected covariance `V^T Sigma_Q V` is singular.
pub fn oracle_adaptation(sigma_q: ArrayView2<'_, f64>, pca: &PcaModel) -> Result<Array2<f64>> {
    let d = pca.dim();
    if sigma_q.dim() != (d, d) {
        return Err(Error::shape(
            "shifted covariance",
            format!("({d}, {d})"),
            format!("{:?}", sigma_q.dim()),
        ));
    }
    let v = pca.loading();
    let cross = sigma_q.dot(v);
    let projected = v.t().dot(&cross);
    // W^T from (V^T Sigma_Q V) W^T = (Sigma_Q V)^T.
    let wt = solve_columns(projected, cross.t().to_owned())?;
    Ok(wt.t().to_owned())
}

/// Mean squared reconstruction error of `samples` under the adaptation map:
/// the average of `|q - (mean + W V^T (q - mean))|^2` over rows.
pub fn adaptation_mse(
    samples: ArrayView2<'_, f64>,
    pca: &PcaModel,
    w: &Array2<f64>,
) -> Result<f64> {
    if w.dim() != (pca.dim(), pca.rank()) {
        return Err(Error::shape(
            "adaptation map",
            format!("({}, {})", pca.dim(), pca.rank()),
            format!("{:?}", w.dim()),
        ));
    }
    let latents = pca.embed(samples)?;
    let recon = latents.dot(&w.t()) + pca.mean();
    let diff = &samples - &recon;
    Ok(diff.map_axis(Axis(1), |r| r.iter().map(|v| v * v).sum::<f64>())
        .mean()
        .expect("nonempty"))
}

/// Draw `n` samples (rows) from `N(0, cov)`. The covariance must be
/// symmetric positive definite.
pub fn sample_gaussian(cov: &Array2<f64>, n: usize, seed: u64) -> Result<Array2<f64>> {
    let l = crate::linalg::cholesky_lower(cov)
        .map_err(|_| Error::InvalidArgument("covariance must be positive definite".into()))?;
    let d = cov.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Array2::from_shape_fn((n, d), |_| {
        let xi: f64 = StandardNormal.sample(&mut rng);
        xi
    });
    Ok(z.dot(&l.t()))
}

/// A generic well-conditioned random SPD matrix: `A A^T / d + 0.1 I`.
pub(crate) fn random_spd(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Array2::from_shape_fn((d, d), |_| rng.gen_range(-1.0..1.0));
    let mut spd = a.dot(&a.t()) / d as f64;
    for i in 0..d {
        spd[[i, i]] += 0.1;
    }
    spd
}

/// One row of the adaptation convergence report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptationDemoRow {
    pub context_len: usize,
    /// Reconstruction error of the plug-in map estimated from the context.
    pub plug_in_err: f64,
    /// Reconstruction error of the known-covariance oracle map.
    pub oracle_err: f64,
}

/// Measure how the plug-in adaptation approaches the oracle as the context
/// from the shifted population grows.
///
/// A PCA model is fit on `n_train` samples from one random population; a
/// second random population plays the shifted one. For each context length,
/// a fresh context is drawn, its empirical covariance is plugged into the
/// adaptation formula, and the resulting map is scored on a shared held-out
/// evaluation set alongside the oracle map built from the true shifted
/// covariance. Context lengths below `r + 1` make the projected covariance
/// singular and are rejected.
pub fn adaptation_demo(
    d: usize,
    r: usize,
    n_train: usize,
    context_lens: &[usize],
    n_eval: usize,
    seed: u64,
) -> Result<Vec<AdaptationDemoRow>> {
    if context_lens.is_empty() {
        return Err(Error::InvalidArgument("no context lengths given".into()));
    }
    let sigma_p = random_spd(d, seed);
    let sigma_q = random_spd(d, seed.wrapping_add(1));
    let train = sample_gaussian(&sigma_p, n_train, seed.wrapping_add(2))?;
    let pca = fit_pca(train.view(), r)?;

    let eval = sample_gaussian(&sigma_q, n_eval, seed.wrapping_add(3))?;
    let w_oracle = oracle_adaptation(sigma_q.view(), &pca)?;
    let oracle_err = adaptation_mse(eval.view(), &pca, &w_oracle)?;

    let mut rows = Vec::with_capacity(context_lens.len());
    for (i, &len) in context_lens.iter().enumerate() {
        let context = sample_gaussian(&sigma_q, len, seed.wrapping_add(4 + i as u64))?;
        let (_, cov_hat) = empirical_covariance(context.view())?;
        let w_hat = oracle_adaptation(cov_hat.view(), &pca)?;
        let plug_in_err = adaptation_mse(eval.view(), &pca, &w_hat)?;
        rows.push(AdaptationDemoRow {
            context_len: len,
            plug_in_err,
            oracle_err,
        });
    }
    Ok(rows)
}
