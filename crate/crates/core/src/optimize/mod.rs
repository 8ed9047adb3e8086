//! Objective construction and candidate evaluation.
//!
//! Search always reads the *validation* splits; final reports read *test*
//! splits. [`EvalContext`] caches the forward traces of the fit and
//! validation data once, so a search spends its budget on fitting and
//! scoring, not on re-running the network.

mod pareto;
mod search;

pub use pareto::{multi_objective_sweep, pareto_front, ParetoPoint, SweepOutcome};
pub use search::{
    gradient_ascent_with, gradient_descent, grid_search, grid_search_with, random_search,
    random_search_with, run_search, GdConfig, SearchMethod, SearchOutcome,
};

use std::collections::BTreeMap;

use crate::data::{OodClassId, OodSuite, SplitDataset};
use crate::error::{Error, Result};
use crate::monitors::{
    fit_from_traces, fit_threshold, score, verdict, FittedMonitor, MonitorKind, MonitorTemplate,
    ParamAssignment, Verdict,
};
use crate::nn::{forward, ForwardTrace, Network};

/// What to optimize: which OOD classes, how they are weighted, and the
/// minimum required accuracy on in-distribution data.
#[derive(Debug, Clone)]
pub struct Objective {
    pub targets: Vec<OodClassId>,
    /// Non-negative, normalized to sum 1. Zeros appear at the endpoints of
    /// multi-objective weight sweeps.
    pub weights: Vec<f64>,
    pub min_id_accuracy: f64,
}

impl Objective {
    /// Equal weights when `weights` is `None`; weights are normalized.
    pub fn new(targets: Vec<OodClassId>, weights: Option<Vec<f64>>, min_id_accuracy: f64) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::EmptyInput("objective target classes".into()));
        }
        if !(min_id_accuracy > 0.0 && min_id_accuracy <= 1.0) {
            return Err(Error::domain("min_id_accuracy", min_id_accuracy, "(0, 1]"));
        }
        let weights = match weights {
            None => vec![1.0 / targets.len() as f64; targets.len()],
            Some(w) => {
                if w.len() != targets.len() {
                    return Err(Error::shape(
                        "objective weights",
                        format!("{}", targets.len()),
                        format!("{}", w.len()),
                    ));
                }
                if w.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return Err(Error::Invalid("objective weights must be non-negative".into()));
                }
                let sum: f64 = w.iter().sum();
                if sum <= 0.0 {
                    return Err(Error::Invalid("objective weights sum to zero".into()));
                }
                w.into_iter().map(|v| v / sum).collect()
            }
        };
        Ok(Objective {
            targets,
            weights,
            min_id_accuracy,
        })
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Objective::new(self.targets.clone(), Some(weights), self.min_id_accuracy)
    }

    pub fn validate_against(&self, suite: &OodSuite) -> Result<()> {
        for t in &self.targets {
            if suite.get(t).is_none() {
                return Err(Error::Unknown {
                    what: "objective OOD class",
                    name: t.path(),
                    known: suite.class_ids().iter().map(|c| c.path()).collect::<Vec<_>>().join(", "),
                });
            }
        }
        Ok(())
    }
}

/// One evaluated parameter assignment.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub params: ParamAssignment,
    /// Weighted validation accuracy over the target classes, or −1 when
    /// infeasible. Infeasible stays −1 (not −∞) so a smoothed search keeps
    /// slope information near the constraint.
    pub objective_value: f64,
    pub id_accuracy: f64,
    pub per_class: BTreeMap<OodClassId, f64>,
    pub feasible: bool,
}

/// Cached traces for one (network, ID split, suite) triple.
pub struct EvalContext<'a> {
    pub net: &'a Network,
    fit_traces: Vec<ForwardTrace>,
    fit_labels: Vec<usize>,
    val_id_traces: Vec<ForwardTrace>,
    class_val_traces: BTreeMap<OodClassId, Vec<ForwardTrace>>,
}

fn traces_of(net: &Network, ds: &crate::data::LabeledDataset) -> Result<Vec<ForwardTrace>> {
    (0..ds.len()).map(|i| forward(net, &ds.image(i)?)).collect()
}

impl<'a> EvalContext<'a> {
    pub fn new(net: &'a Network, id: &SplitDataset, suite: &OodSuite) -> Result<Self> {
        let mut class_val_traces = BTreeMap::new();
        for (class, entry) in &suite.entries {
            class_val_traces.insert(class.clone(), traces_of(net, &entry.validation)?);
        }
        Ok(EvalContext {
            net,
            fit_traces: traces_of(net, &id.fit)?,
            fit_labels: id.fit.labels().iter().map(|&l| l as usize).collect(),
            val_id_traces: traces_of(net, &id.validation)?,
            class_val_traces,
        })
    }

    /// Fit with the given parameters and calibrate τ at the objective's
    /// minimum ID accuracy. Shared by candidate evaluation and by the final
    /// winner serialization.
    pub fn fit_calibrated(
        &self,
        template: &MonitorTemplate,
        params: &ParamAssignment,
        min_id_accuracy: f64,
    ) -> Result<FittedMonitor> {
        let mut monitor = fit_from_traces(template, params, self.net, &self.fit_traces, &self.fit_labels)?;
        if monitor.kind.has_score() {
            let scores = self.id_validation_scores(&monitor)?;
            monitor.tau = Some(fit_threshold(&scores, min_id_accuracy)?);
        }
        Ok(monitor)
    }

    fn id_validation_scores(&self, monitor: &FittedMonitor) -> Result<Vec<f64>> {
        self.val_id_traces
            .iter()
            .map(|t| score(monitor, self.net, t))
            .collect()
    }

    /// Evaluate one candidate. Fit or scoring failures yield an infeasible
    /// candidate with objective −1 instead of aborting the search.
    pub fn evaluate(&self, template: &MonitorTemplate, params: &ParamAssignment, obj: &Objective) -> Candidate {
        match self.try_evaluate(template, params, obj) {
            Ok(c) => c,
            Err(_) => Candidate {
                params: params.clone(),
                objective_value: -1.0,
                id_accuracy: 0.0,
                per_class: BTreeMap::new(),
                feasible: false,
            },
        }
    }

    fn try_evaluate(
        &self,
        template: &MonitorTemplate,
        params: &ParamAssignment,
        obj: &Objective,
    ) -> Result<Candidate> {
        let monitor = self.fit_calibrated(template, params, obj.min_id_accuracy)?;
        let id_accuracy = if monitor.kind == MonitorKind::Box {
            let mut hits = 0usize;
            for t in &self.val_id_traces {
                if verdict(&monitor, self.net, t)? == Verdict::Id {
                    hits += 1;
                }
            }
            hits as f64 / self.val_id_traces.len() as f64
        } else {
            let tau = monitor.tau.expect("calibrated");
            let scores = self.id_validation_scores(&monitor)?;
            scores.iter().filter(|&&s| s >= tau).count() as f64 / scores.len() as f64
        };
        let mut per_class = BTreeMap::new();
        for target in &obj.targets {
            let traces = self
                .class_val_traces
                .get(target)
                .ok_or_else(|| Error::Unknown {
                    what: "objective OOD class",
                    name: target.path(),
                    known: self.class_val_traces.keys().map(|c| c.path()).collect::<Vec<_>>().join(", "),
                })?;
            let mut ood_hits = 0usize;
            for t in traces {
                if verdict(&monitor, self.net, t)? == Verdict::Ood {
                    ood_hits += 1;
                }
            }
            per_class.insert(target.clone(), ood_hits as f64 / traces.len() as f64);
        }
        let feasible = id_accuracy >= obj.min_id_accuracy;
        let objective_value = if feasible {
            obj.targets
                .iter()
                .zip(&obj.weights)
                .map(|(t, w)| w * per_class[t])
                .sum()
        } else {
            -1.0
        };
        Ok(Candidate {
            params: params.clone(),
            objective_value,
            id_accuracy,
            per_class,
            feasible,
        })
    }

    /// Hard candidate plus the sigmoid-smoothed objective used by gradient
    /// descent: each OOD verdict indicator `score < τ` becomes
    /// `σ(β·(τ−score)/σ_scores)`. Kinds without a scalar score fall back to
    /// the hard value (piecewise-constant landscape).
    pub fn evaluate_smooth(
        &self,
        template: &MonitorTemplate,
        params: &ParamAssignment,
        obj: &Objective,
        beta: f64,
    ) -> (Candidate, f64) {
        let candidate = self.evaluate(template, params, obj);
        if !template.kind.has_score() || !candidate.feasible {
            let hard = candidate.objective_value;
            return (candidate, hard);
        }
        match self.smooth_value(template, params, obj, beta) {
            Ok(s) => (candidate, s),
            Err(_) => {
                let hard = candidate.objective_value;
                (candidate, hard)
            }
        }
    }

    fn smooth_value(
        &self,
        template: &MonitorTemplate,
        params: &ParamAssignment,
        obj: &Objective,
        beta: f64,
    ) -> Result<f64> {
        let monitor = self.fit_calibrated(template, params, obj.min_id_accuracy)?;
        let tau = monitor.tau.expect("calibrated");
        let id_scores = self.id_validation_scores(&monitor)?;
        let n = id_scores.len() as f64;
        let mean = id_scores.iter().sum::<f64>() / n;
        let mut sigma = (id_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n).sqrt();
        if sigma == 0.0 {
            sigma = 1.0;
        }
        let mut total = 0.0;
        for (target, w) in obj.targets.iter().zip(&obj.weights) {
            let traces = &self.class_val_traces[target];
            let mut acc = 0.0;
            for t in traces {
                let s = score(&monitor, self.net, t)?;
                acc += sigmoid(beta * (tau - s) / sigma);
            }
            total += w * acc / traces.len() as f64;
        }
        Ok(total)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One-shot candidate evaluation building a fresh context; searches should
/// build an [`EvalContext`] once instead.
pub fn evaluate_objective(
    template: &MonitorTemplate,
    params: &ParamAssignment,
    net: &Network,
    id: &SplitDataset,
    suite: &OodSuite,
    obj: &Objective,
) -> Result<Candidate> {
    obj.validate_against(suite)?;
    let ctx = EvalContext::new(net, id, suite)?;
    Ok(ctx.evaluate(template, params, obj))
}

/// JSON-lines evaluation log, one record per candidate.
pub fn candidate_log_jsonl(log: &[Candidate]) -> String {
    let mut out = String::new();
    for c in log {
        let per_class: BTreeMap<String, f64> = c.per_class.iter().map(|(k, v)| (k.path(), *v)).collect();
        let record = serde_json::json!({
            "params": c.params,
            "objective": c.objective_value,
            "id_accuracy": c.id_accuracy,
            "per_class": per_class,
            "feasible": c.feasible,
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_ood_suite, default_intensities, split_dataset, synth_blobs};
    use crate::monitors::ParamValue;
    use crate::nn::{init_mlp, train_classifier};

    fn fixture() -> (Network, SplitDataset, OodSuite) {
        let ds = synth_blobs(3, 40, &[1, 4, 4], 11, 0.8).unwrap();
        let arch = init_mlp(&[1, 4, 4], &[10], 3, 1);
        let net = train_classifier(&ds, &arch, 10, 0.3, 12, 1).unwrap();
        let id = split_dataset(&ds, 7).unwrap();
        let suite = build_ood_suite(&id, &net, &BTreeMap::new(), &default_intensities(), 99).unwrap();
        (net, id, suite)
    }

    #[test]
    fn single_target_objective_equals_class_accuracy() {
        let (net, id, suite) = fixture();
        let target = OodClassId::parse("Noise/Gaussian").unwrap();
        let obj = Objective::new(vec![target.clone()], None, 0.7).unwrap();
        let template = MonitorTemplate::for_network(MonitorKind::Energy, &net).unwrap();
        let c = evaluate_objective(&template, &template.defaults(), &net, &id, &suite, &obj).unwrap();
        assert!(c.feasible);
        assert_eq!(c.objective_value, c.per_class[&target]);
        assert!(c.id_accuracy >= 0.7);
    }

    #[test]
    fn two_class_weighted_mean() {
        let (net, id, suite) = fixture();
        let a = OodClassId::parse("Noise/Gaussian").unwrap();
        let b = OodClassId::parse("Perturbation/Invert").unwrap();
        let obj = Objective::new(vec![a.clone(), b.clone()], Some(vec![0.5, 0.5]), 0.7).unwrap();
        let template = MonitorTemplate::for_network(MonitorKind::Energy, &net).unwrap();
        let c = evaluate_objective(&template, &template.defaults(), &net, &id, &suite, &obj).unwrap();
        let want = 0.5 * c.per_class[&a] + 0.5 * c.per_class[&b];
        assert!((c.objective_value - want).abs() < 1e-12);
    }

    #[test]
    fn constant_scorer_yields_full_id_zero_ood() {
        // A monitor whose score is constant: τ equals the constant, every
        // verdict is ID, so ID accuracy is 1 and OOD accuracy 0.
        let (net, id, suite) = fixture();
        let mut zeroed = net.clone();
        if let Some(crate::nn::LayerSpec::Dense { w, b }) = zeroed.layers.last_mut() {
            for v in w.data_mut() {
                *v = 0.0;
            }
            for v in b.data_mut() {
                *v = 0.0;
            }
        }
        let target = OodClassId::parse("Noise/Gaussian").unwrap();
        let obj = Objective::new(vec![target.clone()], None, 0.7).unwrap();
        let template = MonitorTemplate::for_network(MonitorKind::MaxLogit, &zeroed).unwrap();
        let ctx = EvalContext::new(&zeroed, &id, &suite).unwrap();
        let c = ctx.evaluate(&template, &template.defaults(), &obj);
        assert_eq!(c.id_accuracy, 1.0);
        assert_eq!(c.per_class[&target], 0.0);
        assert_eq!(c.objective_value, 0.0);
    }

    #[test]
    fn fit_failure_marks_candidate_infeasible() {
        let (net, id, suite) = fixture();
        let target = OodClassId::parse("Noise/Gaussian").unwrap();
        let obj = Objective::new(vec![target], None, 0.7).unwrap();
        // VIM with D equal to the feature dimension cannot fit.
        let template = MonitorTemplate {
            kind: MonitorKind::Vim,
            space: crate::monitors::ParamSpace {
                params: vec![("D".into(), crate::monitors::ParamDomain::Integer { lo: 1, hi: 1000 })],
                defaults: [("D".to_string(), ParamValue::Int(1000))].into(),
            },
        };
        let ctx = EvalContext::new(&net, &id, &suite).unwrap();
        let c = ctx.evaluate(&template, &template.defaults(), &obj);
        assert!(!c.feasible);
        assert_eq!(c.objective_value, -1.0);
    }

    #[test]
    fn objective_requires_known_classes() {
        let (net, id, suite) = fixture();
        let missing = OodClassId::parse("NewWorld/nope").unwrap();
        let obj = Objective::new(vec![missing], None, 0.7).unwrap();
        let template = MonitorTemplate::for_network(MonitorKind::Energy, &net).unwrap();
        assert!(evaluate_objective(&template, &template.defaults(), &net, &id, &suite, &obj).is_err());
    }
}
