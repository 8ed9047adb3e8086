//! Multi-objective weight sweep and Pareto front extraction.

use rand::{Rng, SeedableRng};

use super::search::{run_search, SearchMethod, SearchOutcome};
use super::{EvalContext, Objective};
use crate::error::{Error, Result};
use crate::monitors::MonitorTemplate;

/// Outcome of one weight combination: the per-objective accuracies of the
/// winning monitor (with the ID constraint reported alongside).
#[derive(Debug, Clone)]
pub struct ParetoPoint {
    pub weights: Vec<f64>,
    pub accuracies: Vec<f64>,
    pub id_accuracy: f64,
}

/// One sweep entry: the weight vector, its search, and the resulting point.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub weights: Vec<f64>,
    pub outcome: SearchOutcome,
    pub point: ParetoPoint,
}

/// Weight vectors for `k` objectives: the two-objective case walks the
/// segment `(i/(combos−1), 1−i/(combos−1))`; more objectives draw `combos`
/// seeded uniform simplex samples plus the `k` one-hot vectors.
pub fn sweep_weights(k: usize, combos: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::EmptyInput("sweep objectives".into()));
    }
    if k == 1 {
        return Ok(vec![vec![1.0]]);
    }
    if k == 2 {
        if combos < 2 {
            return Err(Error::domain("combos", combos as f64, "≥ 2 for two objectives"));
        }
        return Ok((0..combos)
            .map(|i| {
                let w = i as f64 / (combos - 1) as f64;
                vec![w, 1.0 - w]
            })
            .collect());
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(combos + k);
    for _ in 0..combos {
        // Dirichlet(1): normalized unit-rate exponentials.
        let draws: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        let sum: f64 = draws.iter().sum();
        out.push(draws.into_iter().map(|v| v / sum).collect());
    }
    for i in 0..k {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        out.push(w);
    }
    Ok(out)
}

/// Optimize one monitor template once per weight combination. Combo `i`
/// derives its seed as `seed + i`, so a one-hot combo reproduces the
/// corresponding single-objective run exactly.
pub fn multi_objective_sweep(
    ctx: &EvalContext<'_>,
    template: &MonitorTemplate,
    obj: &Objective,
    combos: usize,
    method: SearchMethod,
    seed: u64,
) -> Result<Vec<SweepOutcome>> {
    let weight_sets = sweep_weights(obj.targets.len(), combos, seed)?;
    let mut out = Vec::with_capacity(weight_sets.len());
    for (i, weights) in weight_sets.into_iter().enumerate() {
        let combo_obj = obj.with_weights(weights.clone())?;
        let outcome = run_search(ctx, template, &combo_obj, method, seed.wrapping_add(i as u64))?;
        let accuracies = obj
            .targets
            .iter()
            .map(|t| outcome.best.per_class.get(t).copied().unwrap_or(0.0))
            .collect();
        let point = ParetoPoint {
            weights: weights.clone(),
            accuracies,
            id_accuracy: outcome.best.id_accuracy,
        };
        out.push(SweepOutcome {
            weights,
            outcome,
            point,
        });
    }
    Ok(out)
}

/// `a` dominates `b` iff `a ≥ b` componentwise with strict improvement
/// somewhere.
fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// The maximal non-dominated subset, preserving input order.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| dominates(&q.accuracies, &p.accuracies)))
        .cloned()
        .collect()
}
