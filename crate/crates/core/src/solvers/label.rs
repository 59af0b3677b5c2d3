//! Running a whole catalog on one matrix and scoring selections.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{solve, Clock, Method, MethodCatalog, NullClock, SolveConfig, SolveOutcome};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// What "fastest" means when picking the optimal method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    /// Median wall-clock time over repeated solves.
    Walltime,
    /// Krylov steps: iterations times operator applications per iteration,
    /// so one BiCGSTAB iteration counts twice. Bit-reproducible; walltimes
    /// are not recorded and the timeout is not enforced in this mode.
    Iterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RhsPolicy {
    /// `b = A * ones`
    Manufactured,
    Ones,
    /// Seeded uniform entries in [-1, 1], scaled to unit norm.
    Random { seed: u64 },
}

impl RhsPolicy {
    pub fn build(&self, a: &CsrMatrix) -> Vec<f64> {
        let n = a.order();
        match *self {
            RhsPolicy::Manufactured => a.spmv(&vec![1.0; n]).expect("length matches order"),
            RhsPolicy::Ones => vec![1.0; n],
            RhsPolicy::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let norm = crate::math::norm2(&b);
                if norm > 0.0 {
                    b.iter_mut().for_each(|v| *v /= norm);
                }
                b
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelOptions {
    pub rhs: RhsPolicy,
    pub rank_by: RankBy,
    /// Solves per method in walltime mode; the median walltime is kept.
    pub repeats: usize,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self { rhs: RhsPolicy::Manufactured, rank_by: RankBy::Walltime, repeats: 3 }
    }
}

/// Outcomes of every catalog entry on one matrix and the optimal entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub matrix_id: String,
    pub rank_by: RankBy,
    /// The catalog the outcomes were produced with.
    pub methods: Vec<Method>,
    /// One outcome per catalog entry, in catalog order.
    pub outcomes: Vec<SolveOutcome>,
    /// Fastest converged entry; `None` marks an unlabelable matrix.
    pub optimal_index: Option<usize>,
    /// Cost charged to a selection that did not converge: the timeout in
    /// walltime mode, the iteration cap in iteration mode.
    pub cost_cap: f64,
}

impl LabelRecord {
    pub fn k(&self) -> usize {
        self.outcomes.len()
    }

    /// Whether this record was produced with `catalog`.
    pub fn matches_catalog(&self, catalog: &MethodCatalog) -> bool {
        self.methods == catalog.entries()
    }

    pub fn is_labelable(&self) -> bool {
        self.optimal_index.is_some()
    }

    /// One-hot label over the catalog.
    pub fn label(&self) -> Option<Vec<u8>> {
        self.optimal_index.map(|opt| {
            let mut v = vec![0u8; self.k()];
            v[opt] = 1;
            v
        })
    }

    /// Ranking cost of a converged outcome.
    pub fn cost(&self, index: usize) -> Result<f64> {
        let o = self
            .outcomes
            .get(index)
            .ok_or(Error::IndexError { index, len: self.k() })?;
        Ok(match self.rank_by {
            RankBy::Walltime => o.walltime,
            RankBy::Iterations => {
                (o.iterations * self.methods[index].applications_per_iteration()) as f64
            }
        })
    }

    /// Cost paid when `index` is selected: its cost if it converged, the cap
    /// otherwise.
    pub fn selected_cost(&self, index: usize) -> Result<f64> {
        let cost = self.cost(index)?;
        Ok(if self.outcomes[index].converged() { cost } else { self.cost_cap })
    }

    /// Recomputes `optimal_index` from the outcomes: lowest cost among
    /// converged entries, ties to the lower index.
    pub fn rank(&mut self) {
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in self.outcomes.iter().enumerate() {
            if !o.converged() {
                continue;
            }
            let c = self.cost(i).expect("index in range");
            if best.is_none_or(|(_, bc)| c < bc) {
                best = Some((i, c));
            }
        }
        self.optimal_index = best.map(|(i, _)| i);
    }
}

/// Runs every catalog entry on `A x = b` and records the optimal one.
///
/// Entries run sequentially so their walltimes are comparable.
pub fn label_matrix(
    matrix_id: &str,
    a: &CsrMatrix,
    catalog: &MethodCatalog,
    cfg: &SolveConfig,
    opts: &LabelOptions,
    clock: &dyn Clock,
) -> Result<LabelRecord> {
    cfg.validate()?;
    if opts.repeats == 0 {
        return Err(Error::ConfigError("repeats must be at least 1".into()));
    }
    let b = opts.rhs.build(a);
    let mut outcomes = Vec::with_capacity(catalog.k());
    for &method in catalog.entries() {
        let outcome = match opts.rank_by {
            RankBy::Iterations => {
                let mut o = solve(a, &b, method, cfg, &NullClock)?.outcome;
                o.walltime = 0.0;
                o
            }
            RankBy::Walltime => {
                let mut runs = Vec::with_capacity(opts.repeats);
                for _ in 0..opts.repeats {
                    runs.push(solve(a, &b, method, cfg, clock)?.outcome);
                }
                let mut times: Vec<f64> = runs.iter().map(|o| o.walltime).collect();
                times.sort_by(f64::total_cmp);
                let mut o = runs[0];
                o.walltime = times[times.len() / 2];
                o
            }
        };
        outcomes.push(outcome);
    }
    let cost_cap = match opts.rank_by {
        RankBy::Walltime => cfg.timeout,
        RankBy::Iterations => (2 * cfg.max_iters_for(a.order())) as f64,
    };
    let mut record = LabelRecord {
        matrix_id: matrix_id.into(),
        rank_by: opts.rank_by,
        methods: catalog.entries().to_vec(),
        outcomes,
        optimal_index: None,
        cost_cap,
    };
    record.rank();
    Ok(record)
}

/// Optimal cost divided by the selected method's cost, in [0, 1].
///
/// A selection that did not converge scores 0; selecting the optimal method
/// scores exactly 1.
pub fn slowdown(record: &LabelRecord, selected: usize) -> Result<f64> {
    if selected >= record.k() {
        return Err(Error::IndexError { index: selected, len: record.k() });
    }
    let optimal = record.optimal_index.ok_or(Error::EmptyCorpus)?;
    if selected == optimal {
        return Ok(1.0);
    }
    if !record.outcomes[selected].converged() {
        return Ok(0.0);
    }
    let (best, chosen) = (record.cost(optimal)?, record.cost(selected)?);
    if chosen <= 0.0 {
        return Ok(1.0);
    }
    Ok((best / chosen).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::SolveStatus;

    fn outcome(status: SolveStatus, walltime: f64) -> SolveOutcome {
        SolveOutcome { status, iterations: 10, final_relres: 0.0, walltime }
    }

    fn record(outcomes: Vec<SolveOutcome>) -> LabelRecord {
        let methods = MethodCatalog::default().entries()[..outcomes.len()].to_vec();
        let mut r = LabelRecord {
            matrix_id: "m".into(),
            rank_by: RankBy::Walltime,
            methods,
            outcomes,
            optimal_index: None,
            cost_cap: 30.0,
        };
        r.rank();
        r
    }

    #[test]
    fn argmin_over_converged() {
        let r = record(vec![outcome(SolveStatus::Converged, 0.10), outcome(SolveStatus::Converged, 0.25)]);
        assert_eq!(r.optimal_index, Some(0));
        assert_eq!(r.label(), Some(vec![1, 0]));

        let r = record(vec![outcome(SolveStatus::Diverged, 0.01), outcome(SolveStatus::Converged, 1.0)]);
        assert_eq!(r.optimal_index, Some(1));

        let r = record(vec![outcome(SolveStatus::Diverged, 0.01), outcome(SolveStatus::Timeout, 30.0)]);
        assert!(!r.is_labelable());
        assert_eq!(r.label(), None);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let r = record(vec![
            outcome(SolveStatus::MaxIters, 0.1),
            outcome(SolveStatus::Converged, 0.5),
            outcome(SolveStatus::Converged, 0.5),
        ]);
        assert_eq!(r.optimal_index, Some(1));
    }

    #[test]
    fn slowdown_values() {
        let r = record(vec![
            outcome(SolveStatus::Converged, 0.36),
            outcome(SolveStatus::Converged, 1.0),
            outcome(SolveStatus::Diverged, 0.01),
        ]);
        assert_eq!(slowdown(&r, 0).unwrap(), 1.0);
        assert!((slowdown(&r, 1).unwrap() - 0.36).abs() < 1e-15);
        assert_eq!(slowdown(&r, 2).unwrap(), 0.0);
        assert!(matches!(slowdown(&r, 3), Err(Error::IndexError { .. })));
        assert_eq!(r.selected_cost(2).unwrap(), 30.0);
        assert_eq!(r.selected_cost(1).unwrap(), 1.0);
    }

    #[test]
    fn rhs_policies() {
        let a = CsrMatrix::diagonal_matrix(&[2.0, 3.0]);
        assert_eq!(RhsPolicy::Manufactured.build(&a), vec![2.0, 3.0]);
        assert_eq!(RhsPolicy::Ones.build(&a), vec![1.0, 1.0]);
        let r1 = RhsPolicy::Random { seed: 3 }.build(&a);
        assert_eq!(r1, RhsPolicy::Random { seed: 3 }.build(&a));
        assert!((crate::math::norm2(&r1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_labels_are_deterministic() {
        let a = crate::generator::generate_poisson2d(12, 12).unwrap();
        let catalog = MethodCatalog::default();
        let opts = LabelOptions { rank_by: RankBy::Iterations, ..LabelOptions::default() };
        let cfg = SolveConfig::default();
        let r1 = label_matrix("p", &a, &catalog, &cfg, &opts, &NullClock).unwrap();
        let r2 = label_matrix("p", &a, &catalog, &cfg, &opts, &NullClock).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.is_labelable());
        assert!(r1.outcomes.iter().all(|o| o.walltime == 0.0));
        assert_eq!(r1.cost_cap, 2880.0);
    }

    #[test]
    fn iteration_cost_counts_bicgstab_twice() {
        let mut r = record(vec![outcome(SolveStatus::Converged, 0.0); 15]);
        r.rank_by = RankBy::Iterations;
        for o in &mut r.outcomes {
            o.iterations = 20;
        }
        r.outcomes[10].iterations = 6;
        r.outcomes[4].iterations = 11;
        r.rank();
        assert_eq!(r.cost(10).unwrap(), 12.0);
        assert_eq!(r.optimal_index, Some(4));
        assert!((slowdown(&r, 10).unwrap() - 11.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn unlabelable_matrix() {
        // Zero diagonal defeats every preconditioner but none; cap iterations at 1.
        let a = CsrMatrix::from_dense(3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let catalog = MethodCatalog::parse_list("cg+jacobi,gmres+ilu0,bicgstab+ssor").unwrap();
        let opts = LabelOptions { rank_by: RankBy::Iterations, ..LabelOptions::default() };
        let r = label_matrix("z", &a, &catalog, &SolveConfig::default(), &opts, &NullClock).unwrap();
        assert!(!r.is_labelable());
        assert!(r.outcomes.iter().all(|o| o.status == SolveStatus::Breakdown));
    }
}
