use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::network::{Prediction, SelectorModel};
use super::train::Dataset;
use crate::error::{Error, Result};
use crate::solvers::{slowdown, LabelRecord, RankBy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub rank_by: RankBy,
    /// Fraction of matrices whose top prediction is the optimal method.
    pub selection_accuracy: f64,
    /// Top-1, top-2 and top-3 accuracy.
    pub top_n_accuracy: [f64; 3],
    /// Mean cost paid for the selected methods: seconds when ranking by
    /// walltime, Krylov steps when ranking by iterations. A selection that
    /// did not converge is charged the record's cost cap.
    pub mean_solution_cost: f64,
    pub mean_slowdown: f64,
    /// Expected slowdown of picking a catalog entry uniformly at random.
    pub random_slowdown: f64,
    /// `confusion[optimal][selected]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub methods: Vec<String>,
}

/// Metrics for `predictions[i]` against `records[i]`.
pub fn evaluate_predictions(records: &[&LabelRecord], predictions: &[Prediction]) -> Result<EvalReport> {
    if records.len() != predictions.len() {
        return Err(Error::DimensionError { expected: records.len(), got: predictions.len() });
    }
    let first = records.first().ok_or(Error::EmptyCorpus)?;
    let k = first.k();
    let mut top = [0usize; 3];
    let mut cost = 0.0;
    let mut slow = 0.0;
    let mut confusion = vec![vec![0usize; k]; k];
    for (r, p) in records.iter().zip(predictions) {
        if r.k() != k || p.probabilities.len() != k || p.ranking.len() != k {
            return Err(Error::ShapeError(format!("expected {k} classes in every record and prediction")));
        }
        if r.rank_by != first.rank_by {
            return Err(Error::ConfigError("records mix ranking modes".into()));
        }
        let optimal = r.optimal_index.ok_or(Error::EmptyCorpus)?;
        let selected = p.selected();
        if let Some(pos) = p.ranking.iter().position(|&c| c == optimal) {
            for (n, t) in top.iter_mut().enumerate() {
                *t += usize::from(pos <= n);
            }
        }
        confusion[optimal][selected] += 1;
        cost += r.selected_cost(selected)?;
        slow += slowdown(r, selected)?;
    }
    let n = records.len() as f64;
    let top_n_accuracy = top.map(|t| t as f64 / n);
    Ok(EvalReport {
        count: records.len(),
        rank_by: first.rank_by,
        selection_accuracy: top_n_accuracy[0],
        top_n_accuracy,
        mean_solution_cost: cost / n,
        mean_slowdown: slow / n,
        random_slowdown: random_selector_slowdown(records)?,
        confusion,
        methods: first.methods.iter().map(|m| format!("{m}")).collect(),
    })
}

/// Mean over records of the average slowdown across all catalog entries.
pub fn random_selector_slowdown(records: &[&LabelRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = 0.0;
    for r in records {
        let mut s = 0.0;
        for j in 0..r.k() {
            s += slowdown(r, j)?;
        }
        total += s / r.k() as f64;
    }
    Ok(total / records.len() as f64)
}

/// Share of the most frequent optimal method.
pub fn majority_rate(records: &[&LabelRecord]) -> Result<f64> {
    let k = records.first().ok_or(Error::EmptyCorpus)?.k();
    let mut counts = vec![0usize; k];
    for r in records {
        let opt = r.optimal_index.ok_or(Error::EmptyCorpus)?;
        if opt >= k {
            return Err(Error::IndexError { index: opt, len: k });
        }
        counts[opt] += 1;
    }
    Ok(*counts.iter().max().expect("k >= 1") as f64 / records.len() as f64)
}

impl SelectorModel {
    /// Predicts every sample in `indices` and scores the selections.
    pub fn evaluate(&self, dataset: &Dataset, indices: &[usize]) -> Result<EvalReport> {
        self.check_catalog(&dataset.fingerprint())?;
        if indices.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let samples = dataset.samples();
        if let Some(&bad) = indices.iter().find(|&&i| i >= samples.len()) {
            return Err(Error::IndexError { index: bad, len: samples.len() });
        }
        let bundles: Vec<_> = indices.iter().map(|&i| &samples[i].features).collect();
        let predictions = self.predict_many(&bundles)?;
        let records: Vec<_> = indices.iter().map(|&i| &samples[i].record).collect();
        evaluate_predictions(&records, &predictions)
    }
}

impl EvalReport {
    /// Aligned plain-text table: summary metrics, then the confusion matrix.
    pub fn to_table(&self) -> String {
        let unit = match self.rank_by {
            RankBy::Walltime => "solution time (s)",
            RankBy::Iterations => "solution cost (steps)",
        };
        let rows = [
            ("matrices", format!("{}", self.count)),
            ("selection accuracy", format!("{:.4}", self.selection_accuracy)),
            ("top-1 accuracy", format!("{:.4}", self.top_n_accuracy[0])),
            ("top-2 accuracy", format!("{:.4}", self.top_n_accuracy[1])),
            ("top-3 accuracy", format!("{:.4}", self.top_n_accuracy[2])),
            (unit, format!("{:.4}", self.mean_solution_cost)),
            ("slowdown", format!("{:.4}", self.mean_slowdown)),
            ("random-selector slowdown", format!("{:.4}", self.random_slowdown)),
        ];
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let value_w = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (label, value) in &rows {
            let _ = writeln!(out, "{label:<label_w$}  {value:>value_w$}");
        }
        let names: Vec<String> = self.methods.iter().enumerate().map(|(i, m)| format!("{i:>2} {m}")).collect();
        let name_w = names.iter().map(String::len).max().unwrap_or(0).max("optimal \\ selected".len());
        let cell_w = self
            .confusion
            .iter()
            .flatten()
            .map(|c| format!("{c}").len())
            .max()
            .unwrap_or(1)
            .max(3);
        let _ = writeln!(out);
        let _ = write!(out, "{:<name_w$}", "optimal \\ selected");
        for j in 0..self.methods.len() {
            let _ = write!(out, " {:>cell_w$}", j);
        }
        let _ = writeln!(out);
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{:<name_w$}", names.get(i).map_or("", String::as_str));
            for c in row {
                let _ = write!(out, " {c:>cell_w$}");
            }
            let _ = writeln!(out);
        }
        out
    }
}
