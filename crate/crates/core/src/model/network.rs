use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, BRANCH_WIDTH, CONV1_FILTERS, CONV2_FILTERS, KERNEL};
use crate::error::{Error, Result};
use crate::features::{signed_log, FeatureBundle, ABSOLUTE_COUNT};
use crate::nn::{
    check_gradients, maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax, softmax_cross_entropy,
    Conv2d, Dropout, GradReport, LayerParams, Linear, PoolIndices, Tensor,
};
use crate::solvers::MethodCatalog;

/// Training-split statistics of the signed-log absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; ABSOLUTE_COUNT],
    pub std: [f64; ABSOLUTE_COUNT],
}

impl Default for NormStats {
    fn default() -> Self {
        Self { mean: [0.0; ABSOLUTE_COUNT], std: [1.0; ABSOLUTE_COUNT] }
    }
}

impl NormStats {
    /// Mean and population standard deviation of `signed_log(x)`; a zero
    /// deviation is replaced by 1.
    pub fn fit<'a, I: IntoIterator<Item = &'a [f64; ABSOLUTE_COUNT]>>(rows: I) -> Result<Self> {
        let logged: Vec<[f64; ABSOLUTE_COUNT]> =
            rows.into_iter().map(|r| core::array::from_fn(|j| signed_log(r[j]))).collect();
        if logged.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let n = logged.len() as f64;
        let mut stats = Self::default();
        for j in 0..ABSOLUTE_COUNT {
            let mean = logged.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = logged.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n;
            let std = crate::math::sqrt(var);
            stats.mean[j] = mean;
            stats.std[j] = if std > 1e-12 { std } else { 1.0 };
        }
        Ok(stats)
    }

    pub fn apply(&self, raw: &[f64; ABSOLUTE_COUNT]) -> [f64; ABSOLUTE_COUNT] {
        core::array::from_fn(|j| (signed_log(raw[j]) - self.mean[j]) / self.std[j])
    }
}

/// Class probabilities and the classes ordered from most to least likely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub ranking: Vec<usize>,
}

impl Prediction {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let mut ranking: Vec<usize> = (0..probabilities.len()).collect();
        // Stable sort keeps the lower index first on ties.
        ranking.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]));
        Self { probabilities, ranking }
    }

    pub fn selected(&self) -> usize {
        self.ranking[0]
    }
}

/// Network inputs for a batch of feature bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub pixels: Tensor,
    pub absolute: Tensor,
}

impl Inputs {
    pub fn batch_size(&self) -> usize {
        self.pixels.shape()[0]
    }
}

struct Cache {
    x0: Tensor,
    r1: Tensor,
    idx1: PoolIndices,
    p1: Tensor,
    r2: Tensor,
    idx2: PoolIndices,
    flat: Tensor,
    rf: Tensor,
    a0: Tensor,
    ra1: Tensor,
    ra2: Tensor,
    cat: Tensor,
    rh: Tensor,
    dropout_mask: Option<Vec<f64>>,
    dh: Tensor,
}

/// The two-branch selector: a convolutional path over the image channels, a
/// dense path over the absolute values, and a classification head over their
/// concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorModel {
    pub(crate) config: ModelConfig,
    pub(crate) catalog: MethodCatalog,
    pub(crate) norm: NormStats,
    pub(crate) conv1: Conv2d,
    pub(crate) conv2: Conv2d,
    pub(crate) fc: Linear,
    pub(crate) abs1: Option<Linear>,
    pub(crate) abs2: Option<Linear>,
    pub(crate) head1: Linear,
    pub(crate) head2: Linear,
}

/// Builds a freshly initialized model from `seed`.
pub fn build_model(config: ModelConfig, catalog: MethodCatalog, seed: u64) -> Result<SelectorModel> {
    SelectorModel::new(config, catalog, seed)
}

impl SelectorModel {
    pub fn new(config: ModelConfig, catalog: MethodCatalog, seed: u64) -> Result<Self> {
        Self::assemble(config, catalog, Some(&mut ChaCha8Rng::seed_from_u64(seed)))
    }

    /// All parameters zero; used when parameters are loaded afterwards.
    pub(crate) fn zeroed(config: ModelConfig, catalog: MethodCatalog) -> Result<Self> {
        Self::assemble(config, catalog, None)
    }

    fn assemble(config: ModelConfig, catalog: MethodCatalog, mut rng: Option<&mut ChaCha8Rng>) -> Result<Self> {
        config.validate()?;
        if config.k != catalog.k() {
            return Err(Error::ConfigError(format!(
                "model has {} classes but the catalog has {} entries",
                config.k,
                catalog.k()
            )));
        }
        let mut conv = |i: usize, o: usize| match rng.as_deref_mut() {
            Some(r) => Conv2d::new(i, o, KERNEL, r),
            None => Conv2d::from_params(LayerParams::zeros(&[o, i, KERNEL, KERNEL], o)).expect("valid shape"),
        };
        let conv1 = conv(config.input_channels(), CONV1_FILTERS);
        let conv2 = conv(CONV1_FILTERS, CONV2_FILTERS);
        let mut linear = |i: usize, o: usize| match rng.as_deref_mut() {
            Some(r) => Linear::new(i, o, r),
            None => Linear::zeroed(i, o),
        };
        let fc = linear(config.flatten_width(), BRANCH_WIDTH);
        let (abs1, abs2) = if config.baseline_mode {
            (None, None)
        } else {
            let a1 = linear(config.absolute_width(), config.abs_hidden);
            let a2 = linear(config.abs_hidden, BRANCH_WIDTH);
            (Some(a1), Some(a2))
        };
        let head1 = linear(config.fused_width(), config.head_hidden);
        let head2 = linear(config.head_hidden, config.k);
        Ok(Self { config, catalog, norm: NormStats::default(), conv1, conv2, fc, abs1, abs2, head1, head2 })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn catalog(&self) -> &MethodCatalog {
        &self.catalog
    }

    pub fn fingerprint(&self) -> String {
        self.catalog.fingerprint()
    }

    pub fn norm_stats(&self) -> &NormStats {
        &self.norm
    }

    pub fn set_norm_stats(&mut self, norm: NormStats) {
        self.norm = norm;
    }

    /// Zeroes the output layer so every input gets uniform probabilities.
    pub fn zero_head(&mut self) {
        self.head2.params.weights.fill(0.0);
        self.head2.params.biases.fill(0.0);
    }

    pub fn check_catalog(&self, fingerprint: &str) -> Result<()> {
        let own = self.fingerprint();
        if own == fingerprint {
            Ok(())
        } else {
            Err(Error::CatalogMismatch { model: own, data: fingerprint.into() })
        }
    }

    /// Layer parameters in a fixed order: conv1, conv2, fc, abs1, abs2,
    /// head1, head2 (absolute layers absent in baseline mode).
    pub fn layers(&self) -> Vec<&LayerParams> {
        let mut v = vec![&self.conv1.params, &self.conv2.params, &self.fc.params];
        if let (Some(a1), Some(a2)) = (&self.abs1, &self.abs2) {
            v.push(&a1.params);
            v.push(&a2.params);
        }
        v.push(&self.head1.params);
        v.push(&self.head2.params);
        v
    }

    pub fn layers_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut v = vec![&mut self.conv1.params, &mut self.conv2.params, &mut self.fc.params];
        if let (Some(a1), Some(a2)) = (&mut self.abs1, &mut self.abs2) {
            v.push(&mut a1.params);
            v.push(&mut a2.params);
        }
        v.push(&mut self.head1.params);
        v.push(&mut self.head2.params);
        v
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|p| p.param_count()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.layers_mut() {
            p.zero_grad();
        }
    }

    /// Pixel planes scaled to [0, 1] and normalized, masked absolute values.
    pub fn prepare(&self, bundles: &[&FeatureBundle]) -> Result<Inputs> {
        let cfg = &self.config;
        let (m, c, w) = (cfg.m, cfg.input_channels(), cfg.absolute_width());
        let plane = m * m;
        let mut pixels = vec![0.0; bundles.len() * c * plane];
        let mut absolute = vec![0.0; bundles.len() * w];
        for (s, bundle) in bundles.iter().enumerate() {
            if bundle.is_baseline() != cfg.baseline_mode {
                return Err(Error::ShapeError(format!(
                    "model expects {} features, got {}",
                    if cfg.baseline_mode { "baseline" } else { "raf" },
                    if bundle.is_baseline() { "baseline" } else { "raf" }
                )));
            }
            if bundle.resolution() != m {
                return Err(Error::ShapeError(format!(
                    "model resolution is {m}, features have {}",
                    bundle.resolution()
                )));
            }
            let planes = bundle.channels().planes();
            if planes.len() != c {
                return Err(Error::ShapeError(format!("expected {c} channels, got {}", planes.len())));
            }
            let dst = &mut pixels[s * c * plane..(s + 1) * c * plane];
            for (chunk, src) in dst.chunks_exact_mut(plane).zip(&planes) {
                for (d, &b) in chunk.iter_mut().zip(src.iter()) {
                    *d = f64::from(b) / 255.0;
                }
            }
            if let Some(abs) = bundle.absolute() {
                let z = self.norm.apply(&abs.to_array());
                let row = &mut absolute[s * w..(s + 1) * w];
                let mut slot = 0;
                for j in 0..ABSOLUTE_COUNT {
                    let enabled = cfg.feature_mask[j];
                    match cfg.mask_mode {
                        super::MaskMode::Zero => row[j] = if enabled { z[j] } else { 0.0 },
                        super::MaskMode::Strict if enabled => {
                            row[slot] = z[j];
                            slot += 1;
                        }
                        super::MaskMode::Strict => {}
                    }
                }
            }
        }
        Ok(Inputs {
            pixels: Tensor::from_vec(&[bundles.len(), c, m, m], pixels)?,
            absolute: Tensor::from_vec(&[bundles.len(), w], absolute)?,
        })
    }

    fn forward_cached<R: Rng + ?Sized>(&self, inputs: &Inputs, train: Option<&mut R>) -> Result<(Tensor, Cache)> {
        let b = inputs.batch_size();
        let x0 = inputs.pixels.clone();
        let mut r1 = self.conv1.forward(&x0)?;
        relu(&mut r1);
        let (p1, idx1) = maxpool2x2(&r1)?;
        let mut r2 = self.conv2.forward(&p1)?;
        relu(&mut r2);
        let (p2, idx2) = maxpool2x2(&r2)?;
        let flat = p2.reshape(&[b, self.config.flatten_width()])?;
        let mut rf = self.fc.forward(&flat)?;
        relu(&mut rf);

        let a0 = inputs.absolute.clone();
        let (cat, ra1, ra2) = match (&self.abs1, &self.abs2) {
            (Some(a1), Some(a2)) => {
                let mut ra1 = a1.forward(&a0)?;
                relu(&mut ra1);
                let mut ra2 = a2.forward(&ra1)?;
                relu(&mut ra2);
                let mut cat = Vec::with_capacity(b * 2 * BRANCH_WIDTH);
                for (f, a) in rf.data().chunks_exact(BRANCH_WIDTH).zip(ra2.data().chunks_exact(BRANCH_WIDTH)) {
                    cat.extend_from_slice(f);
                    cat.extend_from_slice(a);
                }
                (Tensor::from_vec(&[b, 2 * BRANCH_WIDTH], cat)?, ra1, ra2)
            }
            _ => (rf.clone(), Tensor::zeros(&[b, 0]), Tensor::zeros(&[b, 0])),
        };

        let mut rh = self.head1.forward(&cat)?;
        relu(&mut rh);
        let mut dh = rh.clone();
        let dropout = Dropout::new(self.config.dropout)?;
        let dropout_mask = match train {
            Some(rng) => dropout.forward(&mut dh, true, rng),
            None => None,
        };
        let logits = self.head2.forward(&dh)?;
        let cache = Cache { x0, r1, idx1, p1, r2, idx2, flat, rf, a0, ra1, ra2, cat, rh, dropout_mask, dh };
        Ok((logits, cache))
    }

    fn backward(&mut self, cache: Cache, grad_logits: &Tensor) -> Result<()> {
        let b = cache.x0.shape()[0];
        let mut g = self.head2.backward(&cache.dh, grad_logits, true)?.expect("input gradient");
        Dropout::backward(cache.dropout_mask.as_deref(), &mut g);
        relu_backward(&cache.rh, &mut g);
        let g_cat = self.head1.backward(&cache.cat, &g, true)?.expect("input gradient");

        let mut g_rf;
        if let (Some(a1), Some(a2)) = (&mut self.abs1, &mut self.abs2) {
            let mut f = Vec::with_capacity(b * BRANCH_WIDTH);
            let mut a = Vec::with_capacity(b * BRANCH_WIDTH);
            for row in g_cat.data().chunks_exact(2 * BRANCH_WIDTH) {
                f.extend_from_slice(&row[..BRANCH_WIDTH]);
                a.extend_from_slice(&row[BRANCH_WIDTH..]);
            }
            g_rf = Tensor::from_vec(&[b, BRANCH_WIDTH], f)?;
            let mut g_ra2 = Tensor::from_vec(&[b, BRANCH_WIDTH], a)?;
            relu_backward(&cache.ra2, &mut g_ra2);
            let mut g_ra1 = a2.backward(&cache.ra1, &g_ra2, true)?.expect("input gradient");
            relu_backward(&cache.ra1, &mut g_ra1);
            a1.backward(&cache.a0, &g_ra1, false)?;
        } else {
            g_rf = g_cat;
        }

        relu_backward(&cache.rf, &mut g_rf);
        let g_flat = self.fc.backward(&cache.flat, &g_rf, true)?.expect("input gradient");
        let side = self.config.pooled_side();
        let g_p2 = g_flat.reshape(&[b, CONV2_FILTERS, side, side])?;
        let mut g_r2 = maxpool2x2_backward(&g_p2, &cache.idx2)?;
        relu_backward(&cache.r2, &mut g_r2);
        let g_p1 = self.conv2.backward(&cache.p1, &g_r2, true)?.expect("input gradient");
        let mut g_r1 = maxpool2x2_backward(&g_p1, &cache.idx1)?;
        relu_backward(&cache.r1, &mut g_r1);
        self.conv1.backward(&cache.x0, &g_r1, false)?;
        Ok(())
    }

    /// Logits in inference mode (dropout off).
    pub fn logits(&self, inputs: &Inputs) -> Result<Tensor> {
        Ok(self.forward_cached::<ChaCha8Rng>(inputs, None)?.0)
    }

    /// Mean cross-entropy without touching gradients (dropout off).
    pub fn loss(&self, inputs: &Inputs, labels: &[usize]) -> Result<f64> {
        Ok(softmax_cross_entropy(&self.logits(inputs)?, labels)?.0)
    }

    /// Training-mode forward and backward pass; gradients accumulate into the
    /// layer parameters. Returns the mean loss.
    pub fn train_step<R: Rng + ?Sized>(&mut self, inputs: &Inputs, labels: &[usize], rng: &mut R) -> Result<f64> {
        let (logits, cache) = self.forward_cached(inputs, Some(rng))?;
        let (loss, grad) = softmax_cross_entropy(&logits, labels)?;
        self.backward(cache, &grad)?;
        Ok(loss)
    }

    pub fn predict(&self, bundle: &FeatureBundle) -> Result<Prediction> {
        Ok(self.predict_many(&[bundle])?.remove(0))
    }

    pub fn predict_many(&self, bundles: &[&FeatureBundle]) -> Result<Vec<Prediction>> {
        let mut out = Vec::with_capacity(bundles.len());
        for chunk in bundles.chunks(self.config.batch_size.max(1)) {
            let probs = softmax(&self.logits(&self.prepare(chunk)?)?)?;
            for row in probs.data().chunks_exact(self.config.k) {
                out.push(Prediction::from_probabilities(row.to_vec()));
            }
        }
        Ok(out)
    }

    fn param_slot(&mut self, mut index: usize) -> &mut f64 {
        for p in self.layers_mut() {
            let (nw, nb) = (p.weights.len(), p.biases.len());
            if index < nw {
                return &mut p.weights.data_mut()[index];
            }
            index -= nw;
            if index < nb {
                return &mut p.biases.data_mut()[index];
            }
            index -= nb;
        }
        panic!("parameter index out of range");
    }

    fn flat_gradient(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.param_count());
        for p in self.layers() {
            g.extend_from_slice(p.weight_grad.data());
            g.extend_from_slice(p.bias_grad.data());
        }
        g
    }

    /// Central finite-difference check of the full backward pass on `bundles`
    /// with training-mode dropout replayed from `seed`. Checks `per_tensor`
    /// randomly chosen entries of every weight and bias tensor.
    pub fn grad_check(
        &mut self,
        bundles: &[&FeatureBundle],
        labels: &[usize],
        per_tensor: usize,
        seed: u64,
        step: f64,
    ) -> Result<GradReport> {
        self.grad_check_with(bundles, labels, per_tensor, seed, step, |_| {})
    }

    pub(crate) fn grad_check_with(
        &mut self,
        bundles: &[&FeatureBundle],
        labels: &[usize],
        per_tensor: usize,
        seed: u64,
        step: f64,
        tamper: impl Fn(&mut [f64]),
    ) -> Result<GradReport> {
        let inputs = self.prepare(bundles)?;
        self.zero_grad();
        self.train_step(&inputs, labels, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let mut analytic = self.flat_gradient();
        tamper(&mut analytic);

        let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut indices = Vec::new();
        let mut offset = 0;
        for p in self.layers() {
            for len in [p.weights.len(), p.biases.len()] {
                for _ in 0..per_tensor.min(len) {
                    indices.push(offset + pick.random_range(0..len));
                }
                offset += len;
            }
        }

        let mut failure = None;
        let report = check_gradients(&analytic, &indices, step, |i, delta| {
            let original = *self.param_slot(i);
            *self.param_slot(i) = original + delta;
            let result = self
                .forward_cached(&inputs, Some(&mut ChaCha8Rng::seed_from_u64(seed)))
                .and_then(|(logits, _)| softmax_cross_entropy(&logits, labels));
            *self.param_slot(i) = original;
            match result {
                Ok((loss, _)) => loss,
                Err(e) => {
                    failure = Some(e);
                    f64::NAN
                }
            }
        });
        self.zero_grad();
        match failure {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }

    /// Copies of all weights and biases, for restoring the best epoch.
    pub(crate) fn snapshot(&self) -> Vec<(Tensor, Tensor)> {
        self.layers().iter().map(|p| (p.weights.clone(), p.biases.clone())).collect()
    }

    pub(crate) fn restore(&mut self, snapshot: &[(Tensor, Tensor)]) {
        for (p, (w, b)) in self.layers_mut().into_iter().zip(snapshot) {
            p.weights.clone_from(w);
            p.biases.clone_from(b);
        }
    }
}
