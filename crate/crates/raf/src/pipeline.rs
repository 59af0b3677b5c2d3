//! The pipeline stages behind each subcommand.
//!
//! Per-matrix work runs on the rayon pool; results are collected in input
//! order so outputs do not depend on the thread count. Training is
//! single-threaded.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use raf_core::features::{extract_raf, extract_rgb_baseline, DatasetOrderStats};
use raf_core::generator::{generate, rebalance, sample_spec, PdeSpec};
use raf_core::model::{
    build_model, evaluate_predictions, stratified_split, train, Dataset, EvalReport, History, LabeledSample,
    Prediction, SelectorModel, Split,
};
use raf_core::solvers::{label_matrix, LabelRecord, NullClock, RankBy};
use raf_core::{Clock, CsrMatrix, FeatureBundle, MethodCatalog};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::MonotonicClock;
use crate::config::{FeatureMode, RunConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::manifest::{parent_dir, CorpusSummary, Manifest, ManifestEntry};
use crate::render::write_png;

/// Sizes the global pool from `RAF_THREADS`; returns the worker count.
pub fn configure_threads() -> usize {
    if let Ok(v) = std::env::var("RAF_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size worker pool: {e}");
                }
            }
            _ => log::warn!("ignoring RAF_THREADS={v:?}; expected a positive integer"),
        }
    }
    rayon::current_num_threads()
}

fn label(cfg: &RunConfig, id: &str, a: &CsrMatrix, catalog: &MethodCatalog) -> raf_core::Result<LabelRecord> {
    let clock: &dyn Clock = match cfg.labeling.options.rank_by {
        RankBy::Walltime => &MonotonicClock::new(),
        RankBy::Iterations => &NullClock,
    };
    label_matrix(id, a, catalog, &cfg.solver, &cfg.labeling.options, clock)
}

fn matrix_id(i: usize) -> String {
    format!("m{i:05}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    /// Specs sampled, including unlabelable ones.
    pub drawn: usize,
    pub unlabelable: usize,
    /// Matrices dropped by rebalancing.
    pub dropped: usize,
    pub summary: CorpusSummary,
}

/// Samples, generates and labels matrices until `generation.count` are
/// labelable, optionally rebalances, and writes `matrices/*.mtx`,
/// `manifest.jsonl` and `summary.json` under `out`.
pub fn gen_corpus(cfg: &RunConfig, out: &Path) -> Result<GenReport> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let count = cfg.generation.count;
    let max_draws = 4 * count + 16;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.sub_seed("gen"));
    let mut kept: Vec<(PdeSpec, LabelRecord, usize)> = Vec::with_capacity(count);
    let (mut drawn, mut unlabelable) = (0, 0);
    while kept.len() < count {
        if drawn >= max_draws {
            return Err(Error::Invalid(format!(
                "only {} of {count} sampled matrices were labelable after {drawn} draws",
                kept.len()
            )));
        }
        let batch = (count - kept.len()).min(max_draws - drawn);
        let specs: Vec<PdeSpec> =
            (0..batch).map(|_| sample_spec(&mut rng, &cfg.generation.ranges)).collect::<raf_core::Result<_>>()?;
        drawn += batch;
        let labeled: Vec<raf_core::Result<(PdeSpec, LabelRecord, usize)>> = specs
            .par_iter()
            .map(|spec| {
                let a = generate(spec)?;
                let record = label(cfg, "", &a, &catalog)?;
                Ok((*spec, record, a.nnz()))
            })
            .collect();
        for item in labeled {
            let item = item?;
            if item.1.is_labelable() {
                kept.push(item);
            } else {
                unlabelable += 1;
                log::debug!("spec {:?} is unlabelable; drawing another", item.0);
            }
        }
        log::info!("labeled {} of {count} matrices ({drawn} drawn)", kept.len());
    }
    let mut dropped = 0;
    if let Some(ratio) = cfg.generation.balance {
        let labels: Vec<usize> = kept.iter().map(|(_, r, _)| r.optimal_index.expect("labelable")).collect();
        let keep = rebalance(&labels, ratio, cfg.sub_seed("balance"))?;
        dropped = kept.len() - keep.len();
        let keep: BTreeSet<usize> = keep.into_iter().collect();
        kept = kept.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, x)| x).collect();
        log::info!("rebalanced to ratio {ratio}: dropped {dropped} matrices");
    }

    let mut manifest = Manifest::new(out);
    let matrices = out.join("matrices");
    fs::create_dir_all(&matrices).map_err(Error::io(&matrices))?;
    kept.par_iter().enumerate().try_for_each(|(i, (spec, _, _))| -> Result<()> {
        io::write_matrix(&matrices.join(format!("{}.mtx", matrix_id(i))), &generate(spec)?)
    })?;
    for (i, (spec, mut record, nnz)) in kept.into_iter().enumerate() {
        record.matrix_id = matrix_id(i);
        let path = manifest.relative(&matrices.join(format!("{}.mtx", record.matrix_id)));
        manifest.entries.push(ManifestEntry::new(path, Some(spec), nnz, spec.order(), &record));
    }
    manifest.write(&out.join("manifest.jsonl"))?;
    let summary = manifest.summary();
    io::write_json(&out.join("summary.json"), &summary)?;
    Ok(GenReport { drawn, unlabelable, dropped, summary })
}

/// A matrix or record that could not be processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub item: String,
    pub reason: String,
}

fn finish<T>(value: T, skipped: &[Skip], total: usize, strict: bool) -> Result<T> {
    for s in skipped {
        log::warn!("skipped {}: {}", s.item, s.reason);
    }
    if !skipped.is_empty() {
        log::warn!("{} of {total} items skipped", skipped.len());
        if strict {
            return Err(Error::Incomplete { failed: skipped.len(), total });
        }
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub labeled: usize,
    pub unlabelable: usize,
    pub skipped: Vec<Skip>,
}

/// Labels every `.mtx` file in `dir` (sorted by name) and writes `manifest`.
///
/// Files that fail to parse are logged and skipped; with `strict` the
/// manifest is still written but the call fails.
pub fn label_directory(cfg: &RunConfig, dir: &Path, manifest_path: &Path, strict: bool) -> Result<LabelReport> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "mtx"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Invalid(format!("no .mtx files in {}", dir.display())));
    }
    let mut manifest = Manifest::new(parent_dir(manifest_path));
    let results: Vec<Result<ManifestEntry>> = files
        .par_iter()
        .map(|path| {
            let a = io::read_matrix(path)?;
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let record = label(cfg, &id, &a, &catalog).map_err(Error::core_at(path))?;
            Ok(ManifestEntry::new(manifest.relative(path), None, a.nnz(), a.order(), &record))
        })
        .collect();
    let mut skipped = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(entry) => manifest.entries.push(entry),
            Err(e) => skipped.push(Skip { item: path.display().to_string(), reason: e.to_string() }),
        }
    }
    manifest.write(manifest_path)?;
    let unlabelable = manifest.entries.iter().filter(|e| !e.is_labelable()).count();
    for e in manifest.entries.iter().filter(|e| !e.is_labelable()) {
        log::warn!("{} is unlabelable: no method converged", e.id);
    }
    let report = LabelReport { labeled: manifest.entries.len() - unlabelable, unlabelable, skipped };
    let total = files.len();
    let skipped = report.skipped.clone();
    finish(report, &skipped, total, strict)
}

/// Feature record file for a matrix id.
pub fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.rafb"))
}

fn extract_one(a: &CsrMatrix, mode: FeatureMode, m: usize, stats: DatasetOrderStats) -> Result<FeatureBundle> {
    Ok(match mode {
        FeatureMode::Raf => FeatureBundle::Raf(extract_raf(a, m)?),
        FeatureMode::Baseline => FeatureBundle::Baseline(extract_rgb_baseline(a, m, stats)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractReport {
    pub written: usize,
    pub skipped: Vec<Skip>,
}

/// Writes `<id>.rafb` and `<id>.json` under `out` for every manifest entry.
///
/// Baseline mode scales the blue channel by the manifest's order range.
pub fn extract_features(cfg: &RunConfig, manifest_path: &Path, out: &Path, strict: bool) -> Result<ExtractReport> {
    let manifest = Manifest::read(manifest_path)?;
    let stats = DatasetOrderStats::from_orders(manifest.entries.iter().map(|e| e.order))?;
    let (mode, m) = (cfg.features.mode, cfg.features.m);
    fs::create_dir_all(out).map_err(Error::io(out))?;
    let results: Vec<Result<()>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let path = manifest.matrix_path(entry);
            let a = io::read_matrix(&path)?;
            let bundle = extract_one(&a, mode, m, stats).map_err(|e| match e {
                Error::Core(c) => Error::CoreAt { path: path.clone(), source: c },
                other => other,
            })?;
            io::write_features(&feature_path(out, &entry.id), &entry.id, Path::new(&entry.path), &bundle)
        })
        .collect();
    let mut skipped = Vec::new();
    for (entry, r) in manifest.entries.iter().zip(results) {
        if let Err(e) = r {
            skipped.push(Skip { item: entry.id.clone(), reason: e.to_string() });
        }
    }
    let report = ExtractReport { written: manifest.entries.len() - skipped.len(), skipped: skipped.clone() };
    finish(report, &skipped, manifest.entries.len(), strict)
}

/// Writes one PNG per matrix. `input` is a manifest or a single `.mtx` file.
pub fn render_images(cfg: &RunConfig, input: &Path, out: &Path) -> Result<usize> {
    let items: Vec<(String, PathBuf, usize)> = if input.extension().is_some_and(|x| x == "mtx") {
        let a = io::read_matrix(input)?;
        let id = input.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        vec![(id, input.to_path_buf(), a.order())]
    } else {
        let manifest = Manifest::read(input)?;
        manifest.entries.iter().map(|e| (e.id.clone(), manifest.matrix_path(e), e.order)).collect()
    };
    let stats = DatasetOrderStats::from_orders(items.iter().map(|i| i.2))?;
    fs::create_dir_all(out).map_err(Error::io(out))?;
    items.par_iter().try_for_each(|(id, path, _)| -> Result<()> {
        let a = io::read_matrix(path)?;
        let bundle = extract_one(&a, cfg.features.mode, cfg.features.m, stats)?;
        write_png(&out.join(format!("{id}.png")), bundle.channels())
    })?;
    Ok(items.len())
}

/// Matrix ids of each split part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitIds {
    fn new(split: &Split, ids: &[String]) -> Self {
        let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect();
        Self { train: pick(&split.train), val: pick(&split.val), test: pick(&split.test) }
    }
}

/// `model.rafm` -> `model.rafm.<kind>.json`.
pub fn companion_path(model: &Path, kind: &str) -> PathBuf {
    let mut name = model.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".{kind}.json"));
    model.with_file_name(name)
}

/// Labeled samples whose feature records exist; missing ones are skipped.
fn load_samples(manifest: &Manifest, features: &Path) -> Result<(Vec<LabeledSample>, Vec<Skip>)> {
    let entries: Vec<&ManifestEntry> = manifest.labelable().collect();
    let loaded: Vec<Result<FeatureBundle>> =
        entries.par_iter().map(|e| io::read_features(&feature_path(features, &e.id))).collect();
    let mut samples = Vec::with_capacity(entries.len());
    let mut skipped = Vec::new();
    for (e, f) in entries.into_iter().zip(loaded) {
        match f {
            Ok(features) => samples.push(LabeledSample { id: e.id.clone(), features, record: e.record() }),
            Err(err) => skipped.push(Skip { item: e.id.clone(), reason: err.to_string() }),
        }
    }
    for s in &skipped {
        log::warn!("skipped {}: {}", s.item, s.reason);
    }
    Ok((samples, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: usize,
    pub skipped: Vec<Skip>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub history: History,
}

/// Trains on the labelable manifest entries and writes the model plus
/// `<model>.history.json` and `<model>.split.json`.
pub fn train_model(cfg: &RunConfig, manifest_path: &Path, features: &Path, model_path: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let manifest = Manifest::read(manifest_path)?;
    let catalog = manifest.catalog()?;
    let (samples, skipped) = load_samples(&manifest, features)?;
    let first = samples.first().ok_or(raf_core::Error::EmptyCorpus)?;
    let (m, baseline) = (first.features.resolution(), first.features.is_baseline());
    if let Some(bad) = samples.iter().find(|s| s.features.resolution() != m || s.features.is_baseline() != baseline) {
        return Err(Error::Invalid(format!("feature record {} differs in mode or resolution from {}", bad.id, first.id)));
    }
    let ids: Vec<String> = samples.iter().map(|s| s.id.clone()).collect();
    let dataset = Dataset::new(catalog.clone(), samples)?;
    let split = stratified_split(&dataset.labels(), cfg.training.split, cfg.sub_seed("split"))?;
    let config = cfg.training.model_config(m, catalog.k(), baseline)?;
    log::info!(
        "training on {} samples (train {}, val {}, test {}), m={m}, baseline={baseline}",
        dataset.len(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    let mut model = build_model(config, catalog, cfg.sub_seed("init"))?;
    let history = train(&mut model, &dataset, &split, cfg.sub_seed("train"))?;
    io::save_model(model_path, &model)?;
    io::write_json(&companion_path(model_path, "history"), &history)?;
    io::write_json(&companion_path(model_path, "split"), &SplitIds::new(&split, &ids))?;
    Ok(TrainReport {
        samples: dataset.len(),
        skipped,
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        history,
    })
}

/// Input for a single prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictInput {
    Matrix(PathBuf),
    Features(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedMethod {
    pub rank: usize,
    pub method: String,
    pub probability: f64,
}

/// The `top` most likely methods for one matrix.
///
/// Baseline models need the training corpus order range to build the blue
/// channel from a raw matrix.
pub fn predict(
    model_path: &Path,
    input: &PredictInput,
    top: usize,
    order_range: Option<DatasetOrderStats>,
) -> Result<Vec<RankedMethod>> {
    let model = io::load_model(model_path)?;
    let config = model.config();
    let bundle = match input {
        PredictInput::Features(path) => io::read_features(path)?,
        PredictInput::Matrix(path) => {
            let a = io::read_matrix(path)?;
            let (mode, stats) = if config.baseline_mode {
                let stats = order_range.ok_or_else(|| {
                    Error::Invalid("baseline models need --order-range to predict from a matrix".into())
                })?;
                (FeatureMode::Baseline, stats)
            } else {
                (FeatureMode::Raf, DatasetOrderStats::new(a.order(), a.order())?)
            };
            extract_one(&a, mode, config.m, stats)?
        }
    };
    let prediction = model.predict(&bundle)?;
    Ok(ranked(&model, &prediction, top))
}

fn ranked(model: &SelectorModel, prediction: &Prediction, top: usize) -> Vec<RankedMethod> {
    let names = model.catalog().names();
    prediction
        .ranking
        .iter()
        .take(top)
        .enumerate()
        .map(|(r, &i)| RankedMethod { rank: r + 1, method: names[i].clone(), probability: prediction.probabilities[i] })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subset {
    All,
    /// The held-out test split recorded next to the model.
    Test,
}

/// Scores the model on labelable manifest entries and, if `out` is given,
/// writes `<out>.json` and `<out>.txt`.
pub fn evaluate(
    model_path: &Path,
    manifest_path: &Path,
    features: &Path,
    subset: Subset,
    out: Option<&Path>,
) -> Result<EvalReport> {
    let model = io::load_model(model_path)?;
    let manifest = Manifest::read(manifest_path)?;
    model.check_catalog(&manifest.catalog()?.fingerprint())?;
    let (mut samples, _) = load_samples(&manifest, features)?;
    if subset == Subset::Test {
        let split: SplitIds = io::read_json(&companion_path(model_path, "split"))?;
        let test: BTreeSet<&String> = split.test.iter().collect();
        samples.retain(|s| test.contains(&s.id));
    }
    if samples.is_empty() {
        return Err(raf_core::Error::EmptyCorpus.into());
    }
    let predictions: Vec<Prediction> =
        samples.par_iter().map(|s| model.predict(&s.features)).collect::<raf_core::Result<_>>()?;
    let records: Vec<&LabelRecord> = samples.iter().map(|s| &s.record).collect();
    let report = evaluate_predictions(&records, &predictions)?;
    if let Some(out) = out {
        io::write_json(&out.with_extension("json"), &report)?;
        io::write_bytes(&out.with_extension("txt"), report.to_table().as_bytes())?;
    }
    Ok(report)
}
