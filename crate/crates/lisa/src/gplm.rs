//! Frozen decoder: GP / kernel-ridge regression from latent coordinates to
//! the next ambient sample, with predictive mean and a shared scalar
//! variance per query.

use crate::error::{Error, Result};
use crate::hankel::hankelize_array;
use crate::linalg::{cholesky_lower, cholesky_solve_mat, pairwise_sq_dists, solve_lower};
use crate::spectral::SpectralModel;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Squared-exponential kernel exp(-beta * d2 / epsilon), the same affinity
/// form as the encoder without density normalization. Unit diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub beta: f64,
    pub epsilon: f64,
}

impl RbfKernel {
    pub fn new(beta: f64, epsilon: f64) -> Result<Self> {
        let k = RbfKernel { beta, epsilon };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "kernel epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Kernel value from a squared distance.
    pub fn from_sq_dist(&self, d2: f64) -> f64 {
        (-self.beta * d2 / self.epsilon).exp()
    }

    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        let diff = &a.to_owned() - &b;
        self.from_sq_dist(diff.dot(&diff))
    }

    /// Gram block between row sets.
    pub fn matrix(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut m = pairwise_sq_dists(a, b);
        m.mapv_inplace(|d2| self.from_sq_dist(d2));
        m
    }

    /// Same kernel with the scale multiplied by `temperature`.
    pub fn with_temperature(&self, temperature: f64) -> RbfKernel {
        RbfKernel {
            beta: self.beta,
            epsilon: self.epsilon * temperature,
        }
    }
}

/// GP regression over fixed latent inputs. The latents come from the frozen
/// encoder and are never optimized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GplmDecoder {
    train_latents: Array2<f64>,
    train_targets: Array2<f64>,
    kernel: RbfKernel,
    noise_var: f64,
    /// Lower Cholesky factor of (Gram + noise_var I).
    gram_factor: Array2<f64>,
    /// (Gram + noise_var I)^{-1} targets, precomputed at fit time.
    weights: Array2<f64>,
}

/// Training pairs for the decoder: the latent of each delay window paired
/// with the sample immediately after the window. The final window has no
/// successor and is dropped.
pub fn build_pairs(
    data: ArrayView2<'_, f64>,
    encoder: &SpectralModel,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let l = encoder.window_len();
    let n = data.nrows();
    if n < l + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples to form one (window, successor) pair, got {n}",
            l + 1
        )));
    }
    let tensor = hankelize_array(data, l)?;
    let k = tensor.n_windows();
    let flat = tensor.flattened();
    let latents = encoder.encode_flat_batch(flat.slice(ndarray::s![..k - 1, ..]))?;
    let mut targets = Array2::zeros((k - 1, data.ncols()));
    for t in 0..k - 1 {
        targets.row_mut(t).assign(&data.row(t + l));
    }
    Ok((latents, targets))
}

impl GplmDecoder {
    /// Factorizes (Gram + noise_var I) once; the decoder is immutable after.
    pub fn fit(
        latents: Array2<f64>,
        targets: Array2<f64>,
        kernel: RbfKernel,
        noise_var: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(noise_var >= 0.0) || !noise_var.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be nonnegative, got {noise_var}"
            )));
        }
        let m = latents.nrows();
        if m == 0 {
            return Err(Error::InvalidArgument("no training pairs".into()));
        }
        if targets.nrows() != m {
            return Err(Error::shape(
                "decoder targets",
                format!("{m} rows"),
                format!("{} rows", targets.nrows()),
            ));
        }
        let mut gram = kernel.matrix(latents.view(), latents.view());
        for i in 0..m {
            gram[[i, i]] += noise_var;
        }
        let gram_factor = cholesky_lower(&gram)?;
        let weights = cholesky_solve_mat(&gram_factor, targets.view());
        Ok(GplmDecoder {
            train_latents: latents,
            train_targets: targets,
            kernel,
            noise_var,
            gram_factor,
            weights,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train_latents.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.train_latents.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.train_targets.ncols()
    }

    pub fn kernel(&self) -> &RbfKernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn gram_factor(&self) -> ArrayView2<'_, f64> {
        self.gram_factor.view()
    }

    /// Predictive mean and scalar variance at latent `z`. The variance is
    /// shared across output dimensions and clamped to [0, 1].
    pub fn predict(&self, z: ArrayView1<'_, f64>) -> Result<(Array1<f64>, f64)> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape(
                "latent query",
                format!("length {}", self.latent_dim()),
                format!("length {}", z.len()),
            ));
        }
        let k_a = self.cross_row(z);
        let mean = self.weights.t().dot(&k_a);
        // var = k(z,z) - k_a (K + s2 I)^{-1} k_a^T via one triangular solve.
        let v = solve_lower(&self.gram_factor, k_a.view());
        let var = (1.0 - v.dot(&v)).clamp(0.0, 1.0);
        Ok((mean, var))
    }

    /// Predictive mean only. Skips the O(n^2) triangular solve behind the
    /// variance, so rollouts that discard it stay O(n) per query.
    pub fn predict_mean(&self, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape(
                "latent query",
                format!("length {}", self.latent_dim()),
                format!("length {}", z.len()),
            ));
        }
        let k_a = self.cross_row(z);
        Ok(self.weights.t().dot(&k_a))
    }

    fn cross_row(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let z = z.to_owned();
        Array1::from_shape_fn(self.n_train(), |i| {
            let diff = &z - &self.train_latents.row(i);
            self.kernel.from_sq_dist(diff.dot(&diff))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hankel::hankelize_array;
    use crate::spectral::{median_sq_dist, KernelParams, SpectralModel};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::testutil::gauss_solve;

    fn random_instance(
        rng: &mut ChaCha8Rng,
        m: usize,
        r: usize,
        d: usize,
    ) -> (Array2<f64>, Array2<f64>) {
        let latents = Array2::from_shape_fn((m, r), |_| rng.gen_range(-2.0..2.0));
        let targets = Array2::from_shape_fn((m, d), |_| rng.gen_range(-1.0..1.0));
        (latents, targets)
    }

    #[test]
    fn single_pair_factor_value() {
        let latents = array![[0.5]];
        let targets = array![[2.0]];
        let dec =
            GplmDecoder::fit(latents, targets, RbfKernel::new(1.0, 1.0).unwrap(), 0.25).unwrap();
        assert!((dec.gram_factor()[[0, 0]] - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn duplicate_latents_without_noise_fail() {
        let latents = array![[1.0], [1.0]];
        let targets = array![[0.0], [1.0]];
        match GplmDecoder::fit(latents, targets, RbfKernel::new(1.0, 1.0).unwrap(), 0.0) {
            Err(Error::Conditioning(_)) => {}
            other => panic!("expected conditioning error, got {other:?}"),
        }
    }

    #[test]
    fn factor_reproduces_regularized_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (latents, targets) = random_instance(&mut rng, 15, 3, 2);
        let kernel = RbfKernel::new(1.0, 0.5).unwrap();
        let noise = 1e-3;
        let dec = GplmDecoder::fit(latents.clone(), targets, kernel, noise).unwrap();
        let l = dec.gram_factor();
        let rebuilt = l.dot(&l.t());
        let mut expected = kernel.matrix(latents.view(), latents.view());
        for i in 0..15 {
            expected[[i, i]] += noise;
        }
        let num: f64 = (&rebuilt - &expected).iter().map(|v| v * v).sum();
        let den: f64 = expected.iter().map(|v| v * v).sum();
        assert!((num / den).sqrt() < 1e-10);
    }

    #[test]
    fn mean_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kernel = RbfKernel::new(0.8, 1.3).unwrap();
        let noise = 0.05;
        for _ in 0..20 {
            let m = rng.gen_range(2..12);
            let (latents, targets) = random_instance(&mut rng, m, 3, 2);
            let dec = GplmDecoder::fit(latents.clone(), targets.clone(), kernel, noise).unwrap();
            let z = Array1::from_shape_fn(3, |_| rng.gen_range(-2.0..2.0));
            let (mean, var) = dec.predict(z.view()).unwrap();

            let mut gram = kernel.matrix(latents.view(), latents.view());
            for i in 0..m {
                gram[[i, i]] += noise;
            }
            let k_a = Array1::from_shape_fn(m, |i| kernel.eval(z.view(), latents.row(i)));
            for x in 0..2 {
                let sol = gauss_solve(&gram, &targets.column(x).to_owned());
                let expected = k_a.dot(&sol);
                assert!((mean[x] - expected).abs() < 1e-10);
            }
            let sol_k = gauss_solve(&gram, &k_a);
            let expected_var = 1.0 - k_a.dot(&sol_k);
            assert!((var - expected_var.clamp(0.0, 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_only_path_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let kernel = RbfKernel::new(1.1, 0.9).unwrap();
        for _ in 0..10 {
            let m = rng.gen_range(2..30);
            let (latents, targets) = random_instance(&mut rng, m, 4, 3);
            let dec = GplmDecoder::fit(latents, targets, kernel, 1e-3).unwrap();
            let z = Array1::from_shape_fn(4, |_| rng.gen_range(-2.0..2.0));
            let (mean, _) = dec.predict(z.view()).unwrap();
            let fast = dec.predict_mean(z.view()).unwrap();
            assert_eq!(mean, fast);
        }
        let dec = GplmDecoder::fit(
            array![[0.0, 0.0]],
            array![[1.0]],
            RbfKernel::new(1.0, 1.0).unwrap(),
            0.1,
        )
        .unwrap();
        assert!(matches!(
            dec.predict_mean(array![1.0].view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn noiseless_gp_interpolates() {
        let latents = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.5]];
        let targets = array![[1.0, -1.0], [2.0, 0.5], [-3.0, 0.0]];
        let dec = GplmDecoder::fit(
            latents.clone(),
            targets.clone(),
            RbfKernel::new(1.0, 1.0).unwrap(),
            0.0,
        )
        .unwrap();
        for i in 0..3 {
            let (mean, var) = dec.predict(latents.row(i)).unwrap();
            for x in 0..2 {
                assert!((mean[x] - targets[[i, x]]).abs() < 1e-8);
            }
            assert!(var < 1e-8);
        }
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let latents = array![[0.0], [1.0]];
        let targets = array![[5.0], [-5.0]];
        let dec = GplmDecoder::fit(latents, targets, RbfKernel::new(1.0, 1.0).unwrap(), 0.1)
            .unwrap();
        let (mean, var) = dec.predict(array![1e4].view()).unwrap();
        assert!(mean[0].abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_bounded_and_monotone_in_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let kernel = RbfKernel::new(1.0, 1.0).unwrap();
        for _ in 0..20 {
            let m = rng.gen_range(2..10);
            let (latents, targets) = random_instance(&mut rng, m + 1, 2, 1);
            let z = Array1::from_shape_fn(2, |_| rng.gen_range(-2.0..2.0));

            let small = GplmDecoder::fit(
                latents.slice(ndarray::s![..m, ..]).to_owned(),
                targets.slice(ndarray::s![..m, ..]).to_owned(),
                kernel,
                0.01,
            )
            .unwrap();
            let full = GplmDecoder::fit(latents, targets, kernel, 0.01).unwrap();
            let (_, var_small) = small.predict(z.view()).unwrap();
            let (_, var_full) = full.predict(z.view()).unwrap();
            assert!((0.0..=1.0).contains(&var_small));
            assert!(var_full <= var_small + 1e-10);
        }
    }

    #[test]
    fn build_pairs_index_algebra() {
        // Series 0..9 scalar, L=4: pair t has target series[t+4].
        let data = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let tensor = hankelize_array(data.view(), 4).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let encoder = SpectralModel::fit(
            &tensor,
            KernelParams::new(1.0, eps, 1.0).unwrap(),
            2,
        )
        .unwrap();
        let (latents, targets) = build_pairs(data.view(), &encoder).unwrap();
        assert_eq!(latents.nrows(), 6);
        assert_eq!(targets.nrows(), 6);
        for t in 0..6 {
            assert_eq!(targets[[t, 0]], (t + 4) as f64);
        }
    }

    #[test]
    fn build_pairs_minimal_and_degenerate() {
        let data = Array2::from_shape_fn((8, 1), |(i, _)| (i as f64 * 0.7).sin());
        let tensor = hankelize_array(data.view(), 3).unwrap();
        let eps = median_sq_dist(tensor.flattened().view());
        let encoder =
            SpectralModel::fit(&tensor, KernelParams::new(1.0, eps, 1.0).unwrap(), 2).unwrap();

        // Exactly L+1 samples gives one pair.
        let (lat, tgt) = build_pairs(data.slice(ndarray::s![..4, ..]), &encoder).unwrap();
        assert_eq!(lat.nrows(), 1);
        assert_eq!(tgt[[0, 0]], data[[3, 0]]);

        // L samples leaves no successor.
        assert!(build_pairs(data.slice(ndarray::s![..3, ..]), &encoder).is_err());
    }

    #[test]
    fn decoder_serde_round_trip_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (latents, targets) = random_instance(&mut rng, 12, 3, 2);
        let dec = GplmDecoder::fit(latents, targets, RbfKernel::new(1.0, 0.7).unwrap(), 1e-4)
            .unwrap();
        let json = serde_json::to_string(&dec).unwrap();
        let back: GplmDecoder = serde_json::from_str(&json).unwrap();
        let z = array![0.3, -0.2, 1.1];
        let (m1, v1) = dec.predict(z.view()).unwrap();
        let (m2, v2) = back.predict(z.view()).unwrap();
        assert_eq!(v1.to_bits(), v2.to_bits());
        for x in 0..2 {
            assert_eq!(m1[x].to_bits(), m2[x].to_bits());
        }
    }

    #[test]
    fn temperature_scales_lengthscale() {
        let k = RbfKernel::new(1.0, 1.0).unwrap();
        let hot = k.with_temperature(10.0);
        assert!((hot.from_sq_dist(1.0) - (-0.1f64).exp()).abs() < 1e-15);
        assert!(hot.from_sq_dist(1.0) > k.from_sq_dist(1.0));
    }
}
