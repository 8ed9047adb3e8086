//! The three search methods: random, grid, and gradient ascent on a
//! smoothed objective.
//!
//! Each engine is generic over the evaluation closure so tests can inject
//! synthetic landscapes; the monitor-backed wrappers plug in
//! [`EvalContext::evaluate`]. Every evaluated candidate lands in the log
//! and the returned best is the sequential argmax over that log (strict
//! improvement, first winner kept), so parallel evaluation cannot change
//! the result.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use super::{Candidate, EvalContext, Objective};
use crate::error::{Error, Result};
use crate::monitors::{MonitorTemplate, ParamAssignment, ParamDomain, ParamSpace, ParamValue};

/// A search's winner plus the full evaluation log in evaluation order.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub log: Vec<Candidate>,
}

fn select_best(log: Vec<Candidate>) -> SearchOutcome {
    let mut best: Option<Candidate> = None;
    for c in &log {
        if best.as_ref().is_none_or(|b| c.objective_value > b.objective_value) {
            best = Some(c.clone());
        }
    }
    SearchOutcome {
        best: best.expect("non-empty evaluation log"),
        log,
    }
}

fn sample_assignment(space: &ParamSpace, rng: &mut impl Rng) -> ParamAssignment {
    let mut out = ParamAssignment::new();
    for (name, domain) in &space.params {
        let value = match domain {
            ParamDomain::Continuous { lo, hi } => ParamValue::Float(lo + rng.gen::<f64>() * (hi - lo)),
            ParamDomain::Integer { lo, hi } => ParamValue::Int(rng.gen_range(*lo..=*hi)),
            ParamDomain::Categorical { options } => ParamValue::Cat(options[rng.gen_range(0..options.len())].clone()),
        };
        out.insert(name.clone(), value);
    }
    out
}

/// `trials` independent uniform samples of the space; deterministic per seed.
pub fn random_search_with<F>(space: &ParamSpace, trials: usize, seed: u64, eval: F) -> SearchOutcome
where
    F: Fn(&ParamAssignment) -> Candidate + Sync,
{
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let assignments: Vec<ParamAssignment> = (0..trials.max(1)).map(|_| sample_assignment(space, &mut rng)).collect();
    let log: Vec<Candidate> = assignments.par_iter().map(&eval).collect();
    select_best(log)
}

/// Grid values for one domain: `splits` evenly spaced points including both
/// endpoints; integer grids are rounded and deduplicated.
fn grid_values(domain: &ParamDomain, splits: usize) -> Vec<ParamValue> {
    match domain {
        ParamDomain::Continuous { lo, hi } => {
            if splits <= 1 || lo == hi {
                return vec![ParamValue::Float(*lo)];
            }
            (0..splits)
                .map(|i| ParamValue::Float(lo + (hi - lo) * i as f64 / (splits - 1) as f64))
                .collect()
        }
        ParamDomain::Integer { lo, hi } => {
            if splits <= 1 || lo == hi {
                return vec![ParamValue::Int(*lo)];
            }
            let mut vals: Vec<i64> = (0..splits)
                .map(|i| (*lo as f64 + (*hi - *lo) as f64 * i as f64 / (splits - 1) as f64).round() as i64)
                .collect();
            vals.dedup();
            vals.into_iter().map(ParamValue::Int).collect()
        }
        ParamDomain::Categorical { options } => options.iter().cloned().map(ParamValue::Cat).collect(),
    }
}

/// Full Cartesian product over per-parameter grids, lexicographic order
/// (first declared parameter outermost). Ties keep the earliest vertex.
pub fn grid_search_with<F>(space: &ParamSpace, splits_per_param: usize, eval: F) -> SearchOutcome
where
    F: Fn(&ParamAssignment) -> Candidate + Sync,
{
    let axes: Vec<(String, Vec<ParamValue>)> = space
        .params
        .iter()
        .map(|(name, domain)| (name.clone(), grid_values(domain, splits_per_param)))
        .collect();
    let mut assignments = vec![ParamAssignment::new()];
    for (name, values) in &axes {
        let mut next = Vec::with_capacity(assignments.len() * values.len());
        for base in &assignments {
            for v in values {
                let mut a = base.clone();
                a.insert(name.clone(), v.clone());
                next.push(a);
            }
        }
        assignments = next;
    }
    let log: Vec<Candidate> = assignments.par_iter().map(&eval).collect();
    select_best(log)
}

/// Gradient-ascent settings. Steps in the unit box; per-parameter finite
/// differences use `fd_step·(hi−lo)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub steps: usize,
    pub lr: f64,
    pub fd_step: f64,
    pub sigmoid_beta: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            steps: 50,
            lr: 0.2,
            fd_step: 0.05,
            sigmoid_beta: 10.0,
        }
    }
}

/// Ascend the smoothed objective over the continuous parameters; integer and
/// categorical parameters stay frozen at `frozen_defaults`. Returns the best
/// *hard* candidate seen, start point included.
pub fn gradient_ascent_with<F>(
    space: &ParamSpace,
    frozen_defaults: &ParamAssignment,
    cfg: GdConfig,
    seed: u64,
    mut eval_smooth: F,
) -> Result<SearchOutcome>
where
    F: FnMut(&ParamAssignment) -> (Candidate, f64),
{
    let continuous: Vec<(String, f64, f64)> = space
        .params
        .iter()
        .filter_map(|(name, d)| match d {
            ParamDomain::Continuous { lo, hi } => Some((name.clone(), *lo, *hi)),
            _ => None,
        })
        .collect();
    if continuous.is_empty() {
        return Err(Error::Invalid(
            "gradient descent needs at least one continuous parameter".into(),
        ));
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    // Unit-box coordinates; θ_k = lo + u_k·(hi−lo).
    let mut u: Vec<f64> = continuous.iter().map(|_| rng.gen::<f64>()).collect();
    let assemble = |u: &[f64]| -> ParamAssignment {
        let mut a = frozen_defaults.clone();
        for ((name, lo, hi), &uk) in continuous.iter().zip(u) {
            a.insert(name.clone(), ParamValue::Float(lo + uk * (hi - lo)));
        }
        a
    };
    let mut log = Vec::new();
    let mut probe = |u: &[f64], log: &mut Vec<Candidate>| -> f64 {
        let (candidate, smooth) = eval_smooth(&assemble(u));
        log.push(candidate);
        smooth
    };
    probe(&u, &mut log);
    for _ in 0..cfg.steps {
        let mut grad = vec![0.0f64; u.len()];
        for k in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[k] = (u[k] + cfg.fd_step).min(1.0);
            dn[k] = (u[k] - cfg.fd_step).max(0.0);
            let width = up[k] - dn[k];
            if width == 0.0 {
                continue;
            }
            let s_up = probe(&up, &mut log);
            let s_dn = probe(&dn, &mut log);
            grad[k] = (s_up - s_dn) / width;
        }
        for (uk, g) in u.iter_mut().zip(&grad) {
            *uk = (*uk + cfg.lr * g).clamp(0.0, 1.0);
        }
        probe(&u, &mut log);
    }
    Ok(select_best(log))
}

/// How a search is driven; carried by configs and the multi-objective sweep.
#[derive(Debug, Clone, Copy)]
pub enum SearchMethod {
    Random { trials: usize },
    Grid { splits: usize },
    GradientDescent(GdConfig),
}

/// Random search over a monitor template's space against the cached context.
pub fn random_search(
    ctx: &EvalContext<'_>,
    template: &MonitorTemplate,
    obj: &Objective,
    trials: usize,
    seed: u64,
) -> SearchOutcome {
    random_search_with(&template.space, trials, seed, |params| ctx.evaluate(template, params, obj))
}

/// Grid search over a monitor template's space.
pub fn grid_search(
    ctx: &EvalContext<'_>,
    template: &MonitorTemplate,
    obj: &Objective,
    splits_per_param: usize,
) -> SearchOutcome {
    grid_search_with(&template.space, splits_per_param, |params| {
        ctx.evaluate(template, params, obj)
    })
}

/// Gradient ascent over a monitor template's continuous parameters.
pub fn gradient_descent(
    ctx: &EvalContext<'_>,
    template: &MonitorTemplate,
    obj: &Objective,
    cfg: GdConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    gradient_ascent_with(&template.space, &template.defaults(), cfg, seed, |params| {
        ctx.evaluate_smooth(template, params, obj, cfg.sigmoid_beta)
    })
}

/// Run one search method.
pub fn run_search(
    ctx: &EvalContext<'_>,
    template: &MonitorTemplate,
    obj: &Objective,
    method: SearchMethod,
    seed: u64,
) -> Result<SearchOutcome> {
    match method {
        SearchMethod::Random { trials } => Ok(random_search(ctx, template, obj, trials, seed)),
        SearchMethod::Grid { splits } => Ok(grid_search(ctx, template, obj, splits)),
        SearchMethod::GradientDescent(cfg) => gradient_descent(ctx, template, obj, cfg, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn one_param_space(lo: f64, hi: f64) -> ParamSpace {
        ParamSpace {
            params: vec![("x".into(), ParamDomain::Continuous { lo, hi })],
            defaults: [("x".to_string(), ParamValue::Float(lo))].into(),
        }
    }

    fn candidate_for(params: &ParamAssignment, value: f64) -> Candidate {
        Candidate {
            params: params.clone(),
            objective_value: value,
            id_accuracy: 1.0,
            per_class: BTreeMap::new(),
            feasible: true,
        }
    }

    #[test]
    fn random_single_trial_returns_that_sample() {
        let space = one_param_space(0.0, 1.0);
        let out = random_search_with(&space, 1, 5, |p| candidate_for(p, p["x"].as_f64().unwrap()));
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best.objective_value, out.log[0].objective_value);
    }

    #[test]
    fn returned_best_is_max_of_log() {
        let space = one_param_space(0.0, 1.0);
        let out = random_search_with(&space, 64, 9, |p| {
            let x = p["x"].as_f64().unwrap();
            candidate_for(p, -(x - 0.3) * (x - 0.3))
        });
        let max = out.log.iter().map(|c| c.objective_value).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best.objective_value, max);
    }

    #[test]
    fn random_is_deterministic_per_seed() {
        let space = one_param_space(-2.0, 2.0);
        let f = |p: &ParamAssignment| candidate_for(p, p["x"].as_f64().unwrap().sin());
        let a = random_search_with(&space, 32, 123, f);
        let b = random_search_with(&space, 32, 123, f);
        assert_eq!(a.best.params, b.best.params);
    }

    #[test]
    fn grid_three_splits_hits_endpoints_and_middle() {
        let space = one_param_space(0.0, 1.0);
        let out = grid_search_with(&space, 3, |p| candidate_for(p, 0.0));
        let xs: Vec<f64> = out.log.iter().map(|c| c.params["x"].as_f64().unwrap()).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn grid_cartesian_product_size() {
        let space = ParamSpace {
            params: vec![
                ("a".into(), ParamDomain::Continuous { lo: 0.0, hi: 1.0 }),
                ("b".into(), ParamDomain::Continuous { lo: 0.0, hi: 1.0 }),
            ],
            defaults: ParamAssignment::new(),
        };
        let out = grid_search_with(&space, 50, |p| candidate_for(p, 0.0));
        assert_eq!(out.log.len(), 2500);
    }

    #[test]
    fn grid_integer_axis_dedups() {
        let space = ParamSpace {
            params: vec![("k".into(), ParamDomain::Integer { lo: 1, hi: 3 })],
            defaults: ParamAssignment::new(),
        };
        let out = grid_search_with(&space, 50, |p| candidate_for(p, 0.0));
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn gradient_zero_lr_returns_start() {
        let space = one_param_space(0.0, 1.0);
        let cfg = GdConfig { lr: 0.0, steps: 5, ..GdConfig::default() };
        let out = gradient_ascent_with(&space, &ParamAssignment::new(), cfg, 3, |p| {
            let x = p["x"].as_f64().unwrap();
            (candidate_for(p, x), x)
        })
        .unwrap();
        // All probes cluster around the unchanged start; best equals the
        // start's immediate fd neighborhood max but the center never moves.
        let start = out.log[0].params["x"].as_f64().unwrap();
        let last = out.log.last().unwrap().params["x"].as_f64().unwrap();
        assert!((start - last).abs() < 2.0 * cfg.fd_step + 1e-12);
    }

    #[test]
    fn gradient_converges_on_concave_quadratic() {
        // Smoothed and hard objective agree: f(x) = 1 − (x − 0.62)².
        let space = one_param_space(0.0, 1.0);
        let cfg = GdConfig { steps: 100, lr: 0.2, fd_step: 0.01, sigmoid_beta: 10.0 };
        let out = gradient_ascent_with(&space, &ParamAssignment::new(), cfg, 11, |p| {
            let x = p["x"].as_f64().unwrap();
            let f = 1.0 - (x - 0.62) * (x - 0.62);
            (candidate_for(p, f), f)
        })
        .unwrap();
        let best_x = out.best.params["x"].as_f64().unwrap();
        assert!((best_x - 0.62).abs() < 1e-2, "best_x {best_x}");
    }

    #[test]
    fn gradient_best_no_worse_than_start() {
        let space = one_param_space(0.0, 1.0);
        let cfg = GdConfig::default();
        let out = gradient_ascent_with(&space, &ParamAssignment::new(), cfg, 21, |p| {
            let x = p["x"].as_f64().unwrap();
            ((candidate_for(p, (x * 9.0).sin())), (x * 9.0).sin())
        })
        .unwrap();
        assert!(out.best.objective_value >= out.log[0].objective_value);
    }

    #[test]
    fn gradient_requires_continuous_param() {
        let space = ParamSpace {
            params: vec![("k".into(), ParamDomain::Integer { lo: 1, hi: 5 })],
            defaults: [("k".to_string(), ParamValue::Int(1))].into(),
        };
        let r = gradient_ascent_with(&space, &space.defaults.clone(), GdConfig::default(), 0, |p| {
            (candidate_for(p, 0.0), 0.0)
        });
        assert!(r.is_err());
    }
}
