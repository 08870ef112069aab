//! Frozen spectral encoder: density-normalized Markov operator over training
//! delay windows, its eigenvectors as latent coordinates, and out-of-sample
//! extension for new windows.

use crate::error::{Error, Result};
use crate::hankel::DelayTensor;
use crate::linalg::{eigh_descending, median, pairwise_sq_dists};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// Modes whose eigenvalue magnitude falls below this cannot be extended to
/// new windows; their coordinates are pinned to zero instead.
const MODE_EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Locality strength multiplying the scaled distances.
    pub beta: f64,
    /// Distance scale dividing squared distances.
    pub epsilon: f64,
    /// Density-normalization exponent in [0, 1]: 0 keeps the plain random
    /// walk, 1 removes the effect of nonuniform sampling density.
    pub alpha_density: f64,
}

impl KernelParams {
    pub fn new(beta: f64, epsilon: f64, alpha_density: f64) -> Result<Self> {
        let p = KernelParams {
            beta,
            epsilon,
            alpha_density,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_density) {
            return Err(Error::InvalidArgument(format!(
                "alpha_density must lie in [0, 1], got {}",
                self.alpha_density
            )));
        }
        Ok(())
    }
}

/// Median of the off-diagonal pairwise squared distances, floored at a tiny
/// positive value so near-duplicate data cannot produce a zero scale.
pub fn median_sq_dist(flat_windows: ArrayView2<'_, f64>) -> f64 {
    let d2 = pairwise_sq_dists(flat_windows, flat_windows);
    let n = d2.nrows();
    let mut vals = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            vals.push(d2[[i, j]]);
        }
    }
    if vals.is_empty() {
        return 1.0;
    }
    median(&vals).max(1e-12)
}

pub(crate) struct MarkovParts {
    /// Row-stochastic operator.
    pub p: Array2<f64>,
    /// Kernel row sums before density normalization.
    pub density: Array1<f64>,
    /// Row sums after density normalization (the row normalizer of `p`).
    pub rho: Array1<f64>,
    /// Density-normalized symmetric kernel.
    pub k_alpha: Array2<f64>,
}

pub(crate) fn markov_parts(h: &Array2<f64>, params: &KernelParams) -> Result<MarkovParts> {
    params.validate()?;
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::shape("kernel input", "square nonempty", format!("{:?}", h.shape())));
    }
    let k = h.mapv(|v| (-params.beta * v).exp());
    let density: Array1<f64> = k.sum_axis(Axis(1));
    if density.iter().any(|&q| q <= 0.0 || !q.is_finite()) {
        return Err(Error::Degeneracy(
            "kernel row vanished; consider a larger epsilon".into(),
        ));
    }
    let qa = density.mapv(|q| q.powf(params.alpha_density));
    let mut k_alpha = k;
    for i in 0..n {
        for j in 0..n {
            k_alpha[[i, j]] /= qa[i] * qa[j];
        }
    }
    let rho: Array1<f64> = k_alpha.sum_axis(Axis(1));
    let mut p = k_alpha.clone();
    for i in 0..n {
        let inv = 1.0 / rho[i];
        p.row_mut(i).mapv_inplace(|v| v * inv);
    }
    Ok(MarkovParts {
        p,
        density,
        rho,
        k_alpha,
    })
}

/// Row-stochastic density-normalized kernel operator built from a matrix of
/// scaled squared distances: affinities exp(-beta * h), rescaled by row sums
/// raised to `alpha_density` on both sides, then row-normalized.
pub fn cl_softmax(h: &Array2<f64>, params: &KernelParams) -> Result<Array2<f64>> {
    Ok(markov_parts(h, params)?.p)
}

/// Frozen encoder: eigenvectors of the Markov operator over training
/// windows, with enough stored state to extend coordinates to new windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralModel {
    train_flat: Array2<f64>,
    window_len: usize,
    dim: usize,
    kernel: KernelParams,
    /// Leading r+1 eigenvalues, descending; index 0 is the trivial mode.
    eigenvalues: Array1<f64>,
    /// K x (r+1) right-eigenvectors, unit-normalized, sign-fixed.
    eigenvectors: Array2<f64>,
    /// Training kernel row sums, reused to normalize out-of-sample rows.
    density: Array1<f64>,
    rank: usize,
    /// Kept modes too weak to extend; their coordinates read as zero.
    excluded_modes: Vec<usize>,
    warnings: Vec<String>,
}

impl SpectralModel {
    /// Fits the encoder on training windows, keeping `rank` nontrivial modes.
    pub fn fit(train: &DelayTensor, kernel: KernelParams, rank: usize) -> Result<Self> {
        kernel.validate()?;
        let k_windows = train.n_windows();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be >= 1".into()));
        }
        if k_windows <= rank + 1 {
            return Err(Error::InvalidArgument(format!(
                "need more than rank+1 = {} training windows, got {k_windows}",
                rank + 1
            )));
        }
        let flat = train.flattened();
        let mut h = pairwise_sq_dists(flat.view(), flat.view());
        h.mapv_inplace(|v| v / kernel.epsilon);
        let parts = markov_parts(&h, &kernel)?;

        // P is conjugate to the symmetric S = R^{-1/2} K_alpha R^{-1/2}
        // (R the row normalizer), so a symmetric solver applies; right
        // eigenvectors of P are R^{-1/2} times those of S.
        let inv_sqrt_rho = parts.rho.mapv(|r| 1.0 / r.sqrt());
        let mut s = parts.k_alpha;
        for i in 0..k_windows {
            for j in 0..k_windows {
                s[[i, j]] *= inv_sqrt_rho[i] * inv_sqrt_rho[j];
            }
        }
        let (vals, vecs) = eigh_descending(&s)?;

        let n_keep = rank + 1;
        let eigenvalues = vals.slice(ndarray::s![..n_keep]).to_owned();
        let mut eigenvectors = Array2::zeros((k_windows, n_keep));
        for x in 0..n_keep {
            let mut col: Array1<f64> = vecs.column(x).to_owned();
            col *= &inv_sqrt_rho;
            let norm = col.dot(&col).sqrt();
            if norm > 0.0 {
                col /= norm;
            }
            // Deterministic sign: the entry of largest magnitude is positive.
            let mut pivot = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            if col[pivot] < 0.0 {
                col.mapv_inplace(|v| -v);
            }
            eigenvectors.column_mut(x).assign(&col);
        }

        let mut excluded_modes = Vec::new();
        let mut warnings = Vec::new();
        for x in 1..n_keep {
            if eigenvalues[x].abs() < MODE_EIGENVALUE_FLOOR {
                excluded_modes.push(x);
                warnings.push(format!(
                    "mode {x} eigenvalue {:.3e} below extension floor; coordinate pinned to 0",
                    eigenvalues[x]
                ));
            }
        }

        Ok(SpectralModel {
            train_flat: flat,
            window_len: train.window_len(),
            dim: train.dim(),
            kernel,
            eigenvalues,
            eigenvectors,
            density: parts.density,
            rank,
            excluded_modes,
            warnings,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_flat.nrows()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    /// Eigenvalues including the trivial leading mode.
    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    /// Right-eigenvectors including the trivial mode, one column per mode.
    pub fn eigenvectors(&self) -> ArrayView2<'_, f64> {
        self.eigenvectors.view()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Latent coordinates of the training windows: K x rank, mode 0 dropped.
    pub fn coordinates(&self) -> Array2<f64> {
        let k = self.n_train();
        let mut out = Array2::zeros((k, self.rank));
        for x in 1..=self.rank {
            if self.excluded_modes.contains(&x) {
                continue;
            }
            out.column_mut(x - 1).assign(&self.eigenvectors.column(x));
        }
        out
    }

    /// Latent coordinates for a batch of flattened windows (rows of length
    /// L*D, layout as in [`DelayTensor::flattened`]).
    pub fn encode_flat_batch(&self, flat: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let ld = self.window_len * self.dim;
        if flat.ncols() != ld {
            return Err(Error::shape(
                "flattened windows",
                format!("{ld} columns"),
                format!("{} columns", flat.ncols()),
            ));
        }
        let m = flat.nrows();
        let mut h = pairwise_sq_dists(flat, self.train_flat.view());
        h.mapv_inplace(|v| (-self.kernel.beta * v / self.kernel.epsilon).exp());
        let k_new = h;

        let alpha = self.kernel.alpha_density;
        let q_train_a = self.density.mapv(|q| q.powf(alpha));
        let mut out = Array2::zeros((m, self.rank));
        for a in 0..m {
            let row = k_new.row(a);
            let q_new = row.sum();
            if q_new <= 0.0 || !q_new.is_finite() {
                return Err(Error::Degeneracy(
                    "window too far from training set; all affinities vanished; \
                     consider a larger epsilon"
                        .into(),
                ));
            }
            let q_new_a = q_new.powf(alpha);
            // Out-of-sample row of the normalized operator, reusing the
            // stored training density for the column side.
            let mut p_row: Array1<f64> =
                Array1::from_shape_fn(row.len(), |j| row[j] / (q_new_a * q_train_a[j]));
            let rho = p_row.sum();
            if rho <= 0.0 || !rho.is_finite() {
                return Err(Error::Degeneracy(
                    "normalized kernel row vanished; consider a larger epsilon".into(),
                ));
            }
            p_row /= rho;
            for x in 1..=self.rank {
                if self.excluded_modes.contains(&x) {
                    continue;
                }
                let proj = p_row.dot(&self.eigenvectors.column(x));
                out[[a, x - 1]] = proj / self.eigenvalues[x];
            }
        }
        Ok(out)
    }

    /// Latent coordinates of one L x D window.
    pub fn encode(&self, window: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if window.nrows() != self.window_len || window.ncols() != self.dim {
            return Err(Error::shape(
                "window",
                format!("{} x {}", self.window_len, self.dim),
                format!("{} x {}", window.nrows(), window.ncols()),
            ));
        }
        let flat = window
            .to_shape((1, self.window_len * self.dim))
            .expect("contiguous")
            .to_owned();
        let coords = self.encode_flat_batch(flat.view())?;
        Ok(coords.row(0).to_owned())
    }

    /// Latent coordinates for every window of a tensor.
    pub fn encode_batch(&self, windows: &DelayTensor) -> Result<Array2<f64>> {
        if windows.window_len() != self.window_len || windows.dim() != self.dim {
            return Err(Error::shape(
                "windows",
                format!("_ x {} x {}", self.window_len, self.dim),
                format!("_ x {} x {}", windows.window_len(), windows.dim()),
            ));
        }
        self.encode_flat_batch(windows.flattened().view())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::hankelize_array;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(beta: f64, epsilon: f64, alpha: f64) -> KernelParams {
        KernelParams::new(beta, epsilon, alpha).unwrap()
    }

    #[test]
    fn softmax_two_point_hand_value() {
        // K = [[1, e^-1], [e^-1, 1]]; rows normalize to 1/(1+e^-1) etc.
        let h = array![[0.0, 1.0], [1.0, 0.0]];
        let p = cl_softmax(&h, &params(1.0, 1.0, 0.0)).unwrap();
        let e = (-1.0f64).exp();
        let diag = 1.0 / (1.0 + e);
        let off = e / (1.0 + e);
        assert!((p[[0, 0]] - diag).abs() < 1e-15);
        assert!((p[[0, 1]] - off).abs() < 1e-15);
        assert!((p[[1, 0]] - off).abs() < 1e-15);
        assert!((p[[1, 1]] - diag).abs() < 1e-15);
    }

    #[test]
    fn softmax_zero_distances_uniform() {
        let h = Array2::zeros((4, 4));
        for alpha in [0.0, 0.5, 1.0] {
            let p = cl_softmax(&h, &params(1.0, 1.0, alpha)).unwrap();
            for v in p.iter() {
                assert!((v - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_underflowed_rows_rejected() {
        let h = array![[1e9, 1e9], [1e9, 1e9]];
        match cl_softmax(&h, &params(1.0, 1.0, 0.5)) {
            Err(Error::Degeneracy(_)) => {}
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn softmax_rows_stochastic_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(2..30);
            let alpha = rng.gen_range(0.0..=1.0);
            let h = Array2::from_shape_fn((n, n), |_| rng.gen_range(0.0..4.0));
            // Kernel construction assumes a symmetric distance matrix.
            let h = (&h + &h.t()) * 0.5;
            let p = cl_softmax(&h, &params(1.0, 1.0, alpha)).unwrap();
            for i in 0..n {
                let s: f64 = p.row(i).sum();
                assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
            }
        }
    }

    fn fit_scalar(points: &[f64], kernel: KernelParams, rank: usize) -> SpectralModel {
        let data = Array2::from_shape_vec((points.len(), 1), points.to_vec()).unwrap();
        let tensor = hankelize_array(data.view(), 1).unwrap();
        SpectralModel::fit(&tensor, kernel, rank).unwrap()
    }

    #[test]
    fn fit_identical_windows_is_rank_one() {
        let model = fit_scalar(&[2.0; 6], params(1.0, 1.0, 1.0), 2);
        assert!((model.eigenvalues()[0] - 1.0).abs() < 1e-12);
        assert!(model.eigenvalues()[1].abs() < 1e-12);
        assert!(model.eigenvalues()[2].abs() < 1e-12);
    }

    #[test]
    fn fit_leading_mode_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = Array2::from_shape_fn((40, 2), |_| rng.gen_range(-1.0..1.0));
        let tensor = hankelize_array(data.view(), 3).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let model = SpectralModel::fit(&tensor, params(1.0, eps, 1.0), 4).unwrap();
        assert!((model.eigenvalues()[0] - 1.0).abs() < 1e-8);
        let phi0 = model.eigenvectors().column(0).to_owned();
        let mean = phi0.sum() / phi0.len() as f64;
        for v in phi0.iter() {
            assert!((v - mean).abs() < 1e-8 * mean.abs());
        }
        for x in 0..model.eigenvalues().len() - 1 {
            assert!(model.eigenvalues()[x] >= model.eigenvalues()[x + 1] - 1e-14);
        }
        assert!(*model.eigenvalues().last().unwrap() > -1.0);
    }

    #[test]
    fn fit_three_collinear_points_symmetry() {
        let model = fit_scalar(&[0.0, 1.0, 2.0], params(1.0, 1.0, 0.0), 1);
        // The configuration is symmetric under index reversal, so the first
        // nontrivial eigenvector is antisymmetric about the middle point.
        let phi1 = model.eigenvectors().column(1).to_owned();
        assert!((phi1[0] + phi1[2]).abs() < 1e-10);
        assert!(phi1[1].abs() < 1e-10);

        // Residual against the operator rebuilt independently.
        let data = array![[0.0], [1.0], [2.0]];
        let mut h = pairwise_sq_dists(data.view(), data.view());
        h.mapv_inplace(|v| v / 1.0);
        let p = cl_softmax(&h, &params(1.0, 1.0, 0.0)).unwrap();
        for x in 0..2 {
            let phi = model.eigenvectors().column(x).to_owned();
            let resid = &p.dot(&phi) - &(&phi * model.eigenvalues()[x]);
            assert!(resid.dot(&resid).sqrt() < 1e-10);
        }
    }

    #[test]
    fn eigenpairs_satisfy_operator_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((30, 3), |_| rng.gen_range(-2.0..2.0));
        let tensor = hankelize_array(data.view(), 2).unwrap();
        let flat = tensor.flattened();
        let eps = median_sq_dist(flat.view());
        let kernel = params(1.0, eps, 1.0);
        let model = SpectralModel::fit(&tensor, kernel.clone(), 5).unwrap();

        let mut h = pairwise_sq_dists(flat.view(), flat.view());
        h.mapv_inplace(|v| v / kernel.epsilon);
        let p = cl_softmax(&h, &kernel).unwrap();
        for x in 0..=5 {
            let phi = model.eigenvectors().column(x).to_owned();
            let resid = &p.dot(&phi) - &(&phi * model.eigenvalues()[x]);
            let rel = resid.dot(&resid).sqrt() / phi.dot(&phi).sqrt();
            assert!(rel < 1e-8, "mode {x} residual {rel}");
        }
    }

    #[test]
    fn encode_training_windows_reproduces_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = Array2::from_shape_fn((43, 2), |_| rng.gen_range(-1.5..1.5));
        let tensor = hankelize_array(data.view(), 4).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let model = SpectralModel::fit(&tensor, params(1.0, eps, 1.0), 3).unwrap();
        let stored = model.coordinates();
        let encoded = model.encode_batch(&tensor).unwrap();
        for i in 0..tensor.n_windows() {
            for x in 0..3 {
                assert!(
                    (stored[[i, x]] - encoded[[i, x]]).abs() < 1e-6,
                    "window {i} mode {x}: {} vs {}",
                    stored[[i, x]],
                    encoded[[i, x]]
                );
            }
        }
    }

    #[test]
    fn encode_far_window_degenerates() {
        let model = fit_scalar(&[0.0, 0.5, 1.0, 1.5, 2.0], params(1.0, 0.5, 1.0), 2);
        let far = array![[1e9]];
        match model.encode(far.view()) {
            Err(Error::Degeneracy(_)) => {}
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn encode_two_cluster_sign_agreement() {
        // Two coupled clusters; mode 1 separates them with opposite signs,
        // and a fresh point near a cluster lands on that cluster's side.
        let pts = [0.0, 0.1, -0.1, 0.05, 3.0, 3.1, 2.9, 3.05];
        let model = fit_scalar(&pts, params(1.0, 2.0, 1.0), 1);
        let coords = model.coordinates();
        let c0 = coords[[0, 0]];
        let c1 = coords[[4, 0]];
        assert!(c0.abs() > 1e-3 && c1.abs() > 1e-3);
        assert!(c0.signum() != c1.signum());
        let near0 = model.encode(array![[0.02]].view()).unwrap();
        assert_eq!(near0[0].signum(), c0.signum());
        let near1 = model.encode(array![[2.95]].view()).unwrap();
        assert_eq!(near1[0].signum(), c1.signum());
    }

    #[test]
    fn encode_batch_matches_single_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let data = Array2::from_shape_fn((30, 2), |_| rng.gen_range(-1.0..1.0));
        let tensor = hankelize_array(data.view(), 3).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let model = SpectralModel::fit(&tensor, params(1.0, eps, 0.7), 2).unwrap();

        let fresh = Array2::from_shape_fn((5, 2), |_| rng.gen_range(-1.0..1.0));
        let fresh_tensor = hankelize_array(fresh.view(), 3).unwrap();
        let batch = model.encode_batch(&fresh_tensor).unwrap();
        for w in 0..fresh_tensor.n_windows() {
            let single = model.encode(fresh_tensor.window(w)).unwrap();
            for x in 0..2 {
                assert!((batch[[w, x]] - single[x]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_one_recovers_geometry_under_nonuniform_sampling() {
        // Points on the unit circle sampled with strongly varying density.
        // The first nontrivial eigenspace of the uniform-density limit is
        // span{cos t, sin t}; alpha=1 should land closer to it than alpha=0.
        let n = 400;
        let a = 0.8;
        let thetas: Vec<f64> = (0..n)
            .map(|i| {
                let u = i as f64 / n as f64;
                2.0 * std::f64::consts::PI * u + a * (2.0 * std::f64::consts::PI * u).sin()
            })
            .collect();
        let mut data = Array2::zeros((n, 2));
        for (i, th) in thetas.iter().enumerate() {
            data[[i, 0]] = th.cos();
            data[[i, 1]] = th.sin();
        }
        let tensor = hankelize_array(data.view(), 1).unwrap();

        let residual = |alpha: f64| -> f64 {
            let model =
                SpectralModel::fit(&tensor, params(1.0, 0.01, alpha), 2).unwrap();
            let phi1 = model.eigenvectors().column(1).to_owned();
            // Project out span{cos, sin} via Gram-Schmidt on the samples.
            let mut b1 = Array1::from_shape_fn(n, |i| thetas[i].cos());
            b1 /= b1.dot(&b1).sqrt();
            let mut b2 = Array1::from_shape_fn(n, |i| thetas[i].sin());
            b2 -= &(&b1 * b1.dot(&b2));
            b2 /= b2.dot(&b2).sqrt();
            let proj = &b1 * phi1.dot(&b1) + &b2 * phi1.dot(&b2);
            let resid = &phi1 - &proj;
            resid.dot(&resid).sqrt() / phi1.dot(&phi1).sqrt()
        };

        let r1 = residual(1.0);
        let r0 = residual(0.0);
        assert!(r1 < r0, "alpha=1 residual {r1} should beat alpha=0 {r0}");
    }

    #[test]
    fn model_serde_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let data = Array2::from_shape_fn((25, 2), |_| rng.gen_range(-1.0..1.0));
        let tensor = hankelize_array(data.view(), 2).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let model = SpectralModel::fit(&tensor, params(1.0, eps, 1.0), 3).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: SpectralModel = serde_json::from_str(&json).unwrap();

        let query = Array2::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0));
        let q_tensor = hankelize_array(query.view(), 2).unwrap();
        let a = model.encode(q_tensor.window(0)).unwrap();
        let b = back.encode(q_tensor.window(0)).unwrap();
        for x in 0..3 {
            assert_eq!(a[x].to_bits(), b[x].to_bits());
        }
    }

    #[test]
    fn fit_rejects_insufficient_windows() {
        let data = array![[0.0], [1.0], [2.0]];
        let tensor = hankelize_array(data.view(), 1).unwrap();
        assert!(SpectralModel::fit(&tensor, params(1.0, 1.0, 1.0), 2).is_err());
        assert!(SpectralModel::fit(&tensor, params(1.0, 1.0, 1.0), 0).is_err());
    }
}
