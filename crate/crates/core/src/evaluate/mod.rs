//! Final metrics on test splits: verdict accuracy, AUROC with confidence
//! intervals, the three-rank comparison table, and report assembly.
//!
//! Accuracy follows the detection convention: true-positive rate on OOD
//! data, true-negative rate on ID data. AUROC is the probability that a
//! random ID score exceeds a random OOD score, ties half-credited; it is
//! computed by midrank Mann–Whitney in O(n log n), with the O(n²)
//! pair-counting form reserved for tests.

mod emit;

pub use emit::{
    accuracy_table_csv, auroc_table_csv, parallel_coords_svg, pareto_csv, pareto_svg, rank_table_csv,
    report_from_json, report_to_json,
};

use crate::data::{LabeledDataset, OodClassId, OodSuite, SplitDataset};
use crate::error::{Error, Result};
use crate::monitors::{score, verdict, FittedMonitor, ParamAssignment, Verdict};
use crate::nn::{forward, Network};

/// Default z-score (95% two-sided).
pub const Z_95: f64 = 1.96;

/// Detection accuracy of a monitor on one dataset: fraction of OOD verdicts
/// when `is_ood`, fraction of ID verdicts otherwise.
pub fn accuracy(mon: &FittedMonitor, net: &Network, ds: &LabeledDataset, is_ood: bool) -> Result<f64> {
    Ok(accuracy_detailed(mon, net, ds, is_ood)?.0)
}

/// Accuracy plus the per-sample verdicts it was aggregated from.
pub fn accuracy_detailed(
    mon: &FittedMonitor,
    net: &Network,
    ds: &LabeledDataset,
    is_ood: bool,
) -> Result<(f64, Vec<Verdict>)> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("accuracy on empty dataset".into()));
    }
    let mut verdicts = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let trace = forward(net, &ds.image(i)?)?;
        verdicts.push(verdict(mon, net, &trace)?);
    }
    let want = if is_ood { Verdict::Ood } else { Verdict::Id };
    let hits = verdicts.iter().filter(|&&v| v == want).count();
    Ok((hits as f64 / verdicts.len() as f64, verdicts))
}

/// Monitor scores for every image of a dataset.
pub fn scores_of(mon: &FittedMonitor, net: &Network, ds: &LabeledDataset) -> Result<Vec<f64>> {
    (0..ds.len())
        .map(|i| {
            let trace = forward(net, &ds.image(i)?)?;
            score(mon, net, &trace)
        })
        .collect()
}

/// Probability that a random ID score exceeds a random OOD score, ties
/// counted half. Rank-based Mann–Whitney with midranks.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::EmptyInput("auroc needs both score sets".into()));
    }
    let n_id = id_scores.len();
    let n_ood = ood_scores.len();
    let mut pool: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, true))
        .chain(ood_scores.iter().map(|&s| (s, false)))
        .collect();
    if pool.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::Invalid("NaN score in auroc".into()));
    }
    pool.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut rank_sum_id = 0.0f64;
    let mut i = 0usize;
    while i < pool.len() {
        let mut j = i;
        while j + 1 < pool.len() && pool[j + 1].0 == pool[i].0 {
            j += 1;
        }
        // Midrank of the tie group spanning positions i..=j (1-based ranks).
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &pool[i..=j] {
            if item.1 {
                rank_sum_id += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_id - (n_id * (n_id + 1)) as f64 / 2.0;
    Ok(u / (n_id as f64 * n_ood as f64))
}

/// Normal-approximation interval `p̂ ± z·√(p̂(1−p̂)/n)`, clamped to [0,1].
pub fn proportion_ci(p_hat: f64, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let half = z * (p_hat * (1.0 - p_hat) / n as f64).sqrt();
    ((p_hat - half).max(0.0), (p_hat + half).min(1.0))
}

/// Hanley–McNeil standard error and interval for an AUROC estimate, with
/// `Q₁ = A/(2−A)` and `Q₂ = 2A²/(1+A)`; clamped to [0,1].
pub fn auroc_ci(auc: f64, n_id: usize, n_ood: usize, z: f64) -> (f64, f64) {
    let half = z * auroc_se(auc, n_id, n_ood);
    ((auc - half).max(0.0), (auc + half).min(1.0))
}

/// Hanley–McNeil standard error; the ID side plays the higher-scoring class.
pub fn auroc_se(auc: f64, n_id: usize, n_ood: usize) -> f64 {
    if n_id == 0 || n_ood == 0 {
        return 0.0;
    }
    let a = auc;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let num = a * (1.0 - a) + (n_id as f64 - 1.0) * (q1 - a * a) + (n_ood as f64 - 1.0) * (q2 - a * a);
    (num / (n_id as f64 * n_ood as f64)).max(0.0).sqrt()
}

/// Per-row three-rank coloring: split `[min, max]` into three equal-width
/// intervals; rank 1 is the top interval, boundary cells take the better
/// rank, and a constant row is all rank 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub classes: Vec<OodClassId>,
    pub monitors: Vec<String>,
    /// `cells[row][col]`: score and rank; `None` where no score exists (Box).
    pub cells: Vec<Vec<Option<(f64, u8)>>>,
}

/// Rank of one value within `[lo, hi]` under the equal-width three-bin rule.
pub fn three_rank(value: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 1;
    }
    let width = (hi - lo) / 3.0;
    if value >= hi - width {
        1
    } else if value >= lo + width {
        2
    } else {
        3
    }
}

/// Build the rank table from a score matrix (rows = classes, cols = monitors).
pub fn rank_table(classes: Vec<OodClassId>, monitors: Vec<String>, scores: Vec<Vec<Option<f64>>>) -> RankTable {
    let mut cells = Vec::with_capacity(scores.len());
    for row in &scores {
        let present: Vec<f64> = row.iter().flatten().copied().collect();
        let lo = present.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        cells.push(
            row.iter()
                .map(|v| v.map(|s| (s, three_rank(s, lo, hi))))
                .collect(),
        );
    }
    RankTable {
        classes,
        monitors,
        cells,
    }
}

/// One (class × monitor) report cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCell {
    pub class: OodClassId,
    pub n: usize,
    pub accuracy: f64,
    pub accuracy_ci: (f64, f64),
    /// Absent for the Box monitor, which has no scalar score.
    pub auroc: Option<f64>,
    pub auroc_ci: Option<(f64, f64)>,
}

/// Everything reported for one monitor, measured on test splits only.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorReport {
    pub monitor: String,
    pub params: ParamAssignment,
    pub tau: Option<f64>,
    pub objective_value: Option<f64>,
    pub id_accuracy: f64,
    pub id_ci: (f64, f64),
    pub id_n: usize,
    pub classes: Vec<ClassCell>,
}

/// The full evaluation report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub monitors: Vec<MonitorReport>,
    pub notes: Vec<String>,
}

/// Footnote carried by every report that contains a NewWorld class.
pub const NEW_WORLD_NOTE: &str = "NewWorld cells count every sample as OOD; samples the network would \
classify correctly are not excluded from the count.";

/// Evaluate a fitted monitor on the test splits of the ID data and suite.
pub fn evaluate_monitor(
    mon: &FittedMonitor,
    net: &Network,
    id: &SplitDataset,
    suite: &OodSuite,
) -> Result<MonitorReport> {
    let id_n = id.test.len();
    let id_accuracy = accuracy(mon, net, &id.test, false)?;
    let id_scores = if mon.kind.has_score() {
        Some(scores_of(mon, net, &id.test)?)
    } else {
        None
    };
    let mut classes = Vec::new();
    for (class, entry) in &suite.entries {
        let n = entry.test.len();
        let acc = accuracy(mon, net, &entry.test, true)?;
        let (auroc_value, auroc_interval) = match &id_scores {
            Some(ids) => {
                let oods = scores_of(mon, net, &entry.test)?;
                let a = auroc(ids, &oods)?;
                (Some(a), Some(auroc_ci(a, ids.len(), oods.len(), Z_95)))
            }
            None => (None, None),
        };
        classes.push(ClassCell {
            class: class.clone(),
            n,
            accuracy: acc,
            accuracy_ci: proportion_ci(acc, n, Z_95),
            auroc: auroc_value,
            auroc_ci: auroc_interval,
        });
    }
    Ok(MonitorReport {
        monitor: mon.kind.name().into(),
        params: mon.params.clone(),
        tau: mon.tau,
        objective_value: None,
        id_accuracy,
        id_ci: proportion_ci(id_accuracy, id_n, Z_95),
        id_n,
        classes,
    })
}
