use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{NormStats, SelectorModel};
use crate::error::{Error, Result};
use crate::features::FeatureBundle;
use crate::nn::Adam;
use crate::solvers::{LabelRecord, MethodCatalog};

/// Features of one matrix together with its label record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub features: FeatureBundle,
    pub record: LabelRecord,
}

impl LabeledSample {
    pub fn label(&self) -> usize {
        self.record.optimal_index.expect("dataset samples are labelable")
    }
}

/// Labelable samples sharing one catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    catalog: MethodCatalog,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(catalog: MethodCatalog, samples: Vec<LabeledSample>) -> Result<Self> {
        for s in &samples {
            if !s.record.matches_catalog(&catalog) {
                let data = MethodCatalog::new(s.record.methods.clone())
                    .map(|c| c.fingerprint())
                    .unwrap_or_else(|_| "invalid".into());
                return Err(Error::CatalogMismatch { model: catalog.fingerprint(), data });
            }
            if !s.record.is_labelable() {
                return Err(Error::ConfigError(format!("sample {} has no optimal method", s.id)));
            }
        }
        Ok(Self { catalog, samples })
    }

    pub fn catalog(&self) -> &MethodCatalog {
        &self.catalog
    }

    pub fn fingerprint(&self) -> String {
        self.catalog.fingerprint()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(LabeledSample::label).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::ConfigError(format!(
                "split fractions {parts:?} must be non-negative and sum to 1"
            )));
        }
        if self.train == 0.0 {
            return Err(Error::ConfigError("training fraction must be positive".into()));
        }
        Ok(())
    }
}

/// Sample indices of each part, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded split that keeps each class's proportions. Within a class the
/// validation and test counts are rounded and every class with at least one
/// sample keeps one in training.
pub fn stratified_split(labels: &[usize], fractions: SplitFractions, seed: u64) -> Result<Split> {
    fractions.validate()?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split { train: Vec::new(), val: Vec::new(), test: Vec::new() };
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let round = |f: f64| crate::math::floor(f * n as f64 + 0.5) as usize;
        let (mut n_val, mut n_test) = (round(fractions.val), round(fractions.test));
        while n_val + n_test >= n && n_val + n_test > 0 {
            if n_val >= n_test {
                n_val -= 1;
            } else {
                n_test -= 1;
            }
        }
        split.test.extend_from_slice(&members[..n_test]);
        split.val.extend_from_slice(&members[n_test..n_test + n_val]);
        split.train.extend_from_slice(&members[n_test + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// New best loss; keep these parameters.
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if !(loss < best) => {
                self.stale += 1;
                if self.stale >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, loss));
                self.stale = 0;
                StopDecision::Improved
            }
        }
    }

    /// Epoch and loss of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// Training loss when the validation split is empty.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds after training.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub batch_size: usize,
}

fn bundles<'a>(dataset: &'a Dataset, indices: &[usize]) -> Vec<&'a FeatureBundle> {
    indices.iter().map(|&i| &dataset.samples[i].features).collect()
}

/// Mean loss and accuracy over `indices` in inference mode.
fn score(model: &SelectorModel, dataset: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(model.config.batch_size.max(1)) {
        let labels: Vec<usize> = chunk.iter().map(|&i| dataset.samples[i].label()).collect();
        let inputs = model.prepare(&bundles(dataset, chunk))?;
        let logits = model.logits(&inputs)?;
        loss += crate::nn::softmax_cross_entropy(&logits, &labels)?.0 * chunk.len() as f64;
        let k = model.config.k;
        for (row, &l) in logits.data().chunks_exact(k).zip(&labels) {
            let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            correct += usize::from(best == l);
        }
    }
    let n = indices.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam on softmax cross-entropy with early stopping on the
/// validation loss. Absolute-value statistics are fitted on the training
/// split and stored in the model; the best epoch's parameters are restored.
pub fn train(model: &mut SelectorModel, dataset: &Dataset, split: &Split, seed: u64) -> Result<History> {
    model.check_catalog(&dataset.fingerprint())?;
    model.config.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&bad) = split.train.iter().chain(&split.val).chain(&split.test).find(|&&i| i >= dataset.len()) {
        return Err(Error::IndexError { index: bad, len: dataset.len() });
    }

    if !model.config.baseline_mode {
        let rows: Vec<[f64; 6]> = split
            .train
            .iter()
            .map(|&i| dataset.samples[i].features.absolute().map(|a| a.to_array()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::ShapeError("raf model given baseline features".into()))?;
        model.set_norm_stats(NormStats::fit(&rows)?);
    }

    let mut present = alloc::vec![false; model.config.k];
    for &i in &split.train {
        present[dataset.samples[i].label()] = true;
    }
    for (c, _) in present.iter().enumerate().filter(|(_, p)| !**p) {
        log::warn!("class {c} ({}) is absent from the training split", dataset.catalog().entries()[c]);
    }

    let mut batch_size = model.config.batch_size;
    if split.train.len() < batch_size {
        log::warn!("training split has {} samples; batch size reduced from {batch_size}", split.train.len());
        batch_size = split.train.len();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(model.config.adam);
    let mut stopper = EarlyStopping::new(model.config.patience);
    let mut best = model.snapshot();
    let mut history = History { epochs: Vec::new(), best_epoch: 0, stopped_early: false, batch_size };
    let mut order = split.train.clone();

    for epoch in 1..=model.config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            let labels: Vec<usize> = chunk.iter().map(|&i| dataset.samples[i].label()).collect();
            let inputs = model.prepare(&bundles(dataset, chunk))?;
            model.zero_grad();
            train_loss += model.train_step(&inputs, &labels, &mut rng)? * chunk.len() as f64;
            adam.step(&mut model.layers_mut())?;
        }
        train_loss /= order.len() as f64;
        let (val_loss, val_accuracy) = if split.val.is_empty() {
            (train_loss, score(model, dataset, &split.train)?.1)
        } else {
            score(model, dataset, &split.val)?
        };
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:.5}, val acc {val_accuracy:.3}");
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, val_accuracy });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => best = model.snapshot(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    model.restore(&best);
    history.best_epoch = stopper.best().map_or(0, |(e, _)| e);
    Ok(history)
}
