//! The monitor library: twenty templates, their parameter spaces, fitting,
//! scoring, threshold calibration, and verdicts.
//!
//! Every scorer follows one convention: **higher score means more
//! in-distribution**, and an input is declared ID iff `score ≥ τ` (boundary
//! inclusive). The Box monitor is the one exception — it has no scalar score
//! and decides by set membership, so it carries no τ and no AUROC.
//!
//! Formulas follow each method's original publication, simplified where the
//! original offers variants: MDS uses a single tied covariance,
//! Gaussian/SHE/Box consult the predicted class only, and KLMatching groups
//! fit samples by predicted class rather than label.

mod persist;
mod shaping;
mod state;

pub use persist::{load_monitor, monitor_from_json, monitor_to_json, save_monitor};
pub use shaping::{percentile, react_clamp, shape_activations, AshMode};
pub use state::{class_mean_std, class_means, kmeans_boxes, tied_covariance, BoxRegion};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{forward, grad_input, grad_last_layer_from_trace, ForwardTrace, InputLoss, Network};
use crate::tensor::{cholesky_spd, covariance, logsumexp_slice, softmax_f64, top_eigenvectors_f64, SpdFactor, Tensor};

/// All monitor kinds, ordered alphabetically by canonical name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MonitorKind {
    AshB,
    AshP,
    AshS,
    Box,
    Dice,
    Energy,
    Entropy,
    Gaussian,
    GradNorm,
    KlMatching,
    Knn,
    Mds,
    Mahalanobis,
    MaxLogit,
    Odin,
    React,
    She,
    Softmax,
    Temperature,
    Vim,
}

impl MonitorKind {
    pub fn name(&self) -> &'static str {
        match self {
            MonitorKind::AshB => "ASH-B",
            MonitorKind::AshP => "ASH-P",
            MonitorKind::AshS => "ASH-S",
            MonitorKind::Box => "Box",
            MonitorKind::Dice => "DICE",
            MonitorKind::Energy => "Energy",
            MonitorKind::Entropy => "Entropy",
            MonitorKind::Gaussian => "Gaussian",
            MonitorKind::GradNorm => "GradNorm",
            MonitorKind::KlMatching => "KLMatching",
            MonitorKind::Knn => "KNN",
            MonitorKind::Mds => "MDS",
            MonitorKind::Mahalanobis => "Mahalanobis",
            MonitorKind::MaxLogit => "MaxLogit",
            MonitorKind::Odin => "ODIN",
            MonitorKind::React => "ReAct",
            MonitorKind::She => "SHE",
            MonitorKind::Softmax => "Softmax",
            MonitorKind::Temperature => "Temperature",
            MonitorKind::Vim => "VIM",
        }
    }

    /// All twenty kinds in canonical (alphabetical) order.
    pub fn all() -> [MonitorKind; 20] {
        [
            MonitorKind::AshB,
            MonitorKind::AshP,
            MonitorKind::AshS,
            MonitorKind::Box,
            MonitorKind::Dice,
            MonitorKind::Energy,
            MonitorKind::Entropy,
            MonitorKind::Gaussian,
            MonitorKind::GradNorm,
            MonitorKind::KlMatching,
            MonitorKind::Knn,
            MonitorKind::Mds,
            MonitorKind::Mahalanobis,
            MonitorKind::MaxLogit,
            MonitorKind::Odin,
            MonitorKind::React,
            MonitorKind::She,
            MonitorKind::Softmax,
            MonitorKind::Temperature,
            MonitorKind::Vim,
        ]
    }

    pub fn parse(s: &str) -> Result<Self> {
        MonitorKind::all()
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "monitor kind",
                name: s.into(),
                known: MonitorKind::all().map(|k| k.name()).join(", "),
            })
    }

    /// Box decides by membership; everything else scores against τ.
    pub fn has_score(&self) -> bool {
        !matches!(self, MonitorKind::Box)
    }
}

impl fmt::Display for MonitorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Domain of one tunable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamDomain {
    Continuous { lo: f64, hi: f64 },
    Integer { lo: i64, hi: i64 },
    Categorical { options: Vec<String> },
}

/// A concrete parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }
}

/// Named parameter assignment, ordered for stable serialization.
pub type ParamAssignment = BTreeMap<String, ParamValue>;

/// The search space of one monitor kind: names, domains, and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    pub params: Vec<(String, ParamDomain)>,
    pub defaults: ParamAssignment,
}

impl ParamSpace {
    fn empty() -> Self {
        ParamSpace {
            params: Vec::new(),
            defaults: ParamAssignment::new(),
        }
    }

    pub fn domain(&self, name: &str) -> Option<&ParamDomain> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    /// Check that `assignment` covers exactly the declared parameters and
    /// that every value lies inside its domain.
    pub fn validate(&self, assignment: &ParamAssignment) -> Result<()> {
        for (name, domain) in &self.params {
            let value = assignment
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("missing parameter {name}")))?;
            match (domain, value) {
                (ParamDomain::Continuous { lo, hi }, v) => {
                    let x = v
                        .as_f64()
                        .ok_or_else(|| Error::Invalid(format!("parameter {name} must be numeric")))?;
                    if !(x >= *lo && x <= *hi) {
                        return Err(Error::domain(name.clone(), x, format!("[{lo}, {hi}]")));
                    }
                }
                (ParamDomain::Integer { lo, hi }, ParamValue::Int(x)) => {
                    if x < lo || x > hi {
                        return Err(Error::domain(name.clone(), *x as f64, format!("[{lo}, {hi}] integer")));
                    }
                }
                (ParamDomain::Integer { .. }, _) => {
                    return Err(Error::Invalid(format!("parameter {name} must be an integer")));
                }
                (ParamDomain::Categorical { options }, ParamValue::Cat(s)) => {
                    if !options.contains(s) {
                        return Err(Error::Unknown {
                            what: "categorical option",
                            name: s.clone(),
                            known: options.join(", "),
                        });
                    }
                }
                (ParamDomain::Categorical { .. }, _) => {
                    return Err(Error::Invalid(format!("parameter {name} must be categorical")));
                }
            }
        }
        for name in assignment.keys() {
            if self.domain(name).is_none() {
                return Err(Error::Invalid(format!("unexpected parameter {name}")));
            }
        }
        Ok(())
    }
}

/// A monitor kind together with its (network-dependent) parameter space.
#[derive(Debug, Clone)]
pub struct MonitorTemplate {
    pub kind: MonitorKind,
    pub space: ParamSpace,
}

impl MonitorTemplate {
    /// Build the template for a network whose tapped feature vector has
    /// `feature_dim` entries (VIM's subspace dimension is bounded by it).
    pub fn new(kind: MonitorKind, feature_dim: usize) -> Self {
        let cont = |name: &str, lo: f64, hi: f64, default: f64| {
            (
                vec![(name.to_string(), ParamDomain::Continuous { lo, hi })],
                [(name.to_string(), ParamValue::Float(default))],
            )
        };
        let space = match kind {
            MonitorKind::Softmax
            | MonitorKind::MaxLogit
            | MonitorKind::Entropy
            | MonitorKind::Mds
            | MonitorKind::Mahalanobis
            | MonitorKind::Gaussian
            | MonitorKind::She
            | MonitorKind::KlMatching => ParamSpace::empty(),
            MonitorKind::Temperature => {
                let (params, defaults) = cont("T", 0.1, 1000.0, 2.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::Energy => {
                let (params, defaults) = cont("T", 0.1, 1000.0, 1.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::GradNorm => {
                let (params, defaults) = cont("T", 0.1, 1000.0, 1.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::Odin => ParamSpace {
                params: vec![
                    ("T".into(), ParamDomain::Continuous { lo: 1.0, hi: 1000.0 }),
                    ("epsilon".into(), ParamDomain::Continuous { lo: 0.0, hi: 0.2 }),
                ],
                defaults: [
                    ("T".to_string(), ParamValue::Float(1000.0)),
                    ("epsilon".to_string(), ParamValue::Float(0.0014)),
                ]
                .into(),
            },
            MonitorKind::React => {
                let (params, defaults) = cont("percentile", 0.0, 100.0, 90.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::AshB | MonitorKind::AshP | MonitorKind::AshS => {
                let (params, defaults) = cont("percentile", 0.0, 100.0, 65.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::Dice => {
                let (params, defaults) = cont("sparsity", 0.0, 99.0, 90.0);
                ParamSpace { params, defaults: defaults.into() }
            }
            MonitorKind::Knn => ParamSpace {
                params: vec![("k".into(), ParamDomain::Integer { lo: 1, hi: 50 })],
                defaults: [("k".to_string(), ParamValue::Int(10))].into(),
            },
            MonitorKind::Box => ParamSpace {
                params: vec![
                    ("m".into(), ParamDomain::Integer { lo: 1, hi: 10 }),
                    ("gamma".into(), ParamDomain::Continuous { lo: 0.0, hi: 1.0 }),
                ],
                defaults: [
                    ("m".to_string(), ParamValue::Int(3)),
                    ("gamma".to_string(), ParamValue::Float(0.1)),
                ]
                .into(),
            },
            MonitorKind::Vim => {
                let hi = feature_dim.saturating_sub(1).max(1) as i64;
                let default = (feature_dim / 2).clamp(1, hi as usize) as i64;
                ParamSpace {
                    params: vec![("D".into(), ParamDomain::Integer { lo: 1, hi })],
                    defaults: [("D".to_string(), ParamValue::Int(default))].into(),
                }
            }
        };
        MonitorTemplate { kind, space }
    }

    /// Template sized for a concrete network.
    pub fn for_network(kind: MonitorKind, net: &Network) -> Result<Self> {
        Ok(MonitorTemplate::new(kind, net.penultimate_dim()?))
    }

    pub fn defaults(&self) -> ParamAssignment {
        self.space.defaults.clone()
    }
}

/// Fitted statistics, one variant per stateful kind.
#[derive(Debug, Clone)]
pub enum MonitorState {
    Stateless,
    React { clamp: f64 },
    Dice { masked_w: Tensor, bias: Tensor },
    Knn { features: Vec<Vec<f32>> },
    Mds { means: Vec<Vec<f32>>, factor: SpdFactor },
    Mahalanobis {
        means: Vec<Vec<f32>>,
        factor: SpdFactor,
        global_mean: Vec<f32>,
        global_factor: SpdFactor,
    },
    Gaussian { means: Vec<Vec<f32>>, stds: Vec<Vec<f32>> },
    Boxes { classes: Vec<Vec<BoxRegion>> },
    She { patterns: Vec<Vec<f32>> },
    KlMatching { templates: Vec<Option<Vec<f64>>> },
    Vim { mean: Vec<f64>, basis: Vec<Vec<f64>>, alpha: f64 },
}

/// Binary monitor decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Id,
    Ood,
}

/// A monitor with frozen parameters and fitted state. Threshold kinds need
/// `tau` set (via [`fit_threshold`]) before verdicts.
#[derive(Debug, Clone)]
pub struct FittedMonitor {
    pub kind: MonitorKind,
    pub params: ParamAssignment,
    pub state: MonitorState,
    pub tau: Option<f64>,
}

impl FittedMonitor {
    fn param_f64(&self, name: &str) -> Result<f64> {
        self.params
            .get(name)
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::Invalid(format!("{}: missing parameter {name}", self.kind)))
    }

    fn param_i64(&self, name: &str) -> Result<i64> {
        self.params
            .get(name)
            .and_then(|v| v.as_i64())
            .ok_or_else(|| Error::Invalid(format!("{}: missing integer parameter {name}", self.kind)))
    }
}

/// Fit a monitor on in-distribution data.
pub fn fit(
    template: &MonitorTemplate,
    params: &ParamAssignment,
    net: &Network,
    id_fit: &LabeledDataset,
) -> Result<FittedMonitor> {
    if id_fit.is_empty() {
        return Err(Error::EmptyInput("monitor fit set".into()));
    }
    let mut traces = Vec::with_capacity(id_fit.len());
    for i in 0..id_fit.len() {
        traces.push(forward(net, &id_fit.image(i)?)?);
    }
    let labels: Vec<usize> = id_fit.labels().iter().map(|&l| l as usize).collect();
    fit_from_traces(template, params, net, &traces, &labels)
}

/// Fit from precomputed forward traces (the optimizer's cached path).
pub fn fit_from_traces(
    template: &MonitorTemplate,
    params: &ParamAssignment,
    net: &Network,
    traces: &[ForwardTrace],
    labels: &[usize],
) -> Result<FittedMonitor> {
    template.space.validate(params)?;
    if traces.is_empty() {
        return Err(Error::EmptyInput("monitor fit traces".into()));
    }
    let kind = template.kind;
    let class_count = net.class_count;
    let tapped: Vec<Vec<f32>> = traces.iter().map(|t| t.penultimate.data().to_vec()).collect();
    let mk = |state: MonitorState| FittedMonitor {
        kind,
        params: params.clone(),
        state,
        tau: None,
    };
    let monitor = match kind {
        MonitorKind::Softmax
        | MonitorKind::Temperature
        | MonitorKind::MaxLogit
        | MonitorKind::Energy
        | MonitorKind::Entropy
        | MonitorKind::Odin
        | MonitorKind::GradNorm
        | MonitorKind::AshB
        | MonitorKind::AshP
        | MonitorKind::AshS => mk(MonitorState::Stateless),
        MonitorKind::React => {
            let pct = params["percentile"].as_f64().unwrap();
            let pooled: Vec<f32> = traces
                .iter()
                .flat_map(|t| t.classifier_input.data().iter().copied())
                .collect();
            mk(MonitorState::React { clamp: percentile(&pooled, pct)? })
        }
        MonitorKind::Dice => {
            let sparsity = params["sparsity"].as_f64().unwrap();
            let (w, b) = net.final_dense();
            let d = w.shape()[1];
            let mut mean_z = vec![0.0f64; d];
            for t in traces {
                for (m, &v) in mean_z.iter_mut().zip(t.classifier_input.data()) {
                    *m += v as f64;
                }
            }
            for m in &mut mean_z {
                *m /= traces.len() as f64;
            }
            let keep = ((d as f64 * (100.0 - sparsity) / 100.0).ceil() as usize).clamp(1, d);
            let mut masked = vec![0.0f32; w.len()];
            for c in 0..class_count {
                let row = &w.data()[c * d..(c + 1) * d];
                let mut contrib: Vec<(usize, f64)> =
                    row.iter().enumerate().map(|(j, &wv)| (j, wv as f64 * mean_z[j])).collect();
                contrib.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                for &(j, _) in contrib.iter().take(keep) {
                    masked[c * d + j] = row[j];
                }
            }
            mk(MonitorState::Dice {
                masked_w: Tensor::new(vec![class_count, d], masked)?,
                bias: b.clone(),
            })
        }
        MonitorKind::Knn => {
            let features = tapped.iter().map(|z| unit_normalize(z)).collect();
            mk(MonitorState::Knn { features })
        }
        MonitorKind::Mds => {
            let means64 = class_means(&tapped, labels, class_count)?;
            let cov = tied_covariance(&tapped, labels, &means64)?;
            let factor = cholesky_spd(&cov, 0.0)?;
            let means = means64
                .iter()
                .map(|m| m.iter().map(|&v| v as f32).collect())
                .collect();
            mk(MonitorState::Mds { means, factor })
        }
        MonitorKind::Mahalanobis => {
            let means64 = class_means(&tapped, labels, class_count)?;
            let cov = tied_covariance(&tapped, labels, &means64)?;
            let factor = cholesky_spd(&cov, 0.0)?;
            let d = tapped[0].len();
            let rows = Tensor::new(
                vec![tapped.len(), d],
                tapped.iter().flat_map(|z| z.iter().copied()).collect(),
            )?;
            let global_cov = covariance(&rows)?;
            let global_factor = cholesky_spd(&global_cov, 0.0)?;
            let zeros = vec![0usize; tapped.len()];
            let global_mean64 = class_means(&tapped, &zeros, 1)?;
            let means = means64
                .iter()
                .map(|m| m.iter().map(|&v| v as f32).collect())
                .collect();
            mk(MonitorState::Mahalanobis {
                means,
                factor,
                global_mean: global_mean64[0].iter().map(|&v| v as f32).collect(),
                global_factor,
            })
        }
        MonitorKind::Gaussian => {
            let (means, stds) = class_mean_std(&tapped, labels, class_count)?;
            mk(MonitorState::Gaussian { means, stds })
        }
        MonitorKind::Box => {
            let m = params["m"].as_i64().unwrap() as usize;
            let mut classes = Vec::with_capacity(class_count);
            for c in 0..class_count {
                // Grouped by predicted class: every fit feature then lies in
                // a box of the class it will be checked against.
                let members: Vec<Vec<f32>> = traces
                    .iter()
                    .zip(&tapped)
                    .filter(|(t, _)| t.predicted_class == c)
                    .map(|(_, z)| z.clone())
                    .collect();
                classes.push(kmeans_boxes(&members, m, BOX_KMEANS_SEED ^ c as u64, 50));
            }
            mk(MonitorState::Boxes { classes })
        }
        MonitorKind::She => {
            let correct: Vec<(Vec<f32>, usize)> = traces
                .iter()
                .zip(&tapped)
                .zip(labels)
                .filter(|((t, _), &l)| t.predicted_class == l)
                .map(|((_, z), &l)| (z.clone(), l))
                .collect();
            let feats: Vec<Vec<f32>> = correct.iter().map(|(z, _)| z.clone()).collect();
            let groups: Vec<usize> = correct.iter().map(|(_, l)| *l).collect();
            let patterns64 = class_means(&feats, &groups, class_count)?;
            let patterns = patterns64
                .iter()
                .map(|p| p.iter().map(|&v| v as f32).collect())
                .collect();
            mk(MonitorState::She { patterns })
        }
        MonitorKind::KlMatching => {
            let mut sums = vec![vec![0.0f64; class_count]; class_count];
            let mut counts = vec![0usize; class_count];
            for t in traces {
                let p = softmax_f64(t.logits.data(), 1.0);
                let c = t.predicted_class;
                counts[c] += 1;
                for (s, v) in sums[c].iter_mut().zip(&p) {
                    *s += v;
                }
            }
            let templates = sums
                .into_iter()
                .zip(&counts)
                .map(|(s, &n)| {
                    if n == 0 {
                        None
                    } else {
                        Some(s.into_iter().map(|v| v / n as f64).collect())
                    }
                })
                .collect();
            mk(MonitorState::KlMatching { templates })
        }
        MonitorKind::Vim => {
            let d_sub = params["D"].as_i64().unwrap() as usize;
            let d = tapped[0].len();
            if d_sub >= d {
                return Err(Error::domain("D", d_sub as f64, format!("< feature dim {d}")));
            }
            let zeros = vec![0usize; tapped.len()];
            let mean = class_means(&tapped, &zeros, 1)?.remove(0);
            let centered: Vec<f32> = tapped
                .iter()
                .flat_map(|z| z.iter().zip(&mean).map(|(&v, &m)| (v as f64 - m) as f32))
                .collect();
            let rows = Tensor::new(vec![tapped.len(), d], centered)?;
            let cov = covariance(&rows)?;
            let (_vals, basis, _) = top_eigenvectors_f64(&cov, d_sub)?;
            let residuals: Vec<f64> = tapped.iter().map(|z| vim_residual(z, &mean, &basis)).collect();
            let logits_rows = Tensor::new(
                vec![traces.len(), class_count],
                traces.iter().flat_map(|t| t.logits.data().iter().copied()).collect(),
            )?;
            let alpha = vim_fit_alpha(&logits_rows, &residuals)?;
            mk(MonitorState::Vim { mean, basis, alpha })
        }
    };
    Ok(monitor)
}

const BOX_KMEANS_SEED: u64 = 0x426f_7831;

fn unit_normalize(z: &[f32]) -> Vec<f32> {
    let norm = z.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return z.to_vec();
    }
    z.iter().map(|&v| (v as f64 / norm) as f32).collect()
}

/// Residual norm of `z` against the principal subspace: `‖(z−μ) − PᵀP(z−μ)‖₂`.
fn vim_residual(z: &[f32], mean: &[f64], basis: &[Vec<f64>]) -> f64 {
    let v: Vec<f64> = z.iter().zip(mean).map(|(&a, &m)| a as f64 - m).collect();
    let mut recon = vec![0.0f64; v.len()];
    for row in basis {
        let coef: f64 = row.iter().zip(&v).map(|(&b, &x)| b * x).sum();
        for (r, &b) in recon.iter_mut().zip(row) {
            *r += coef * b;
        }
    }
    v.iter()
        .zip(&recon)
        .map(|(&x, &r)| (x - r) * (x - r))
        .sum::<f64>()
        .sqrt()
}

/// VIM's logit/residual balance: mean max-logit divided by mean residual norm.
pub fn vim_fit_alpha(train_logits: &Tensor, residual_norms: &[f64]) -> Result<f64> {
    if train_logits.shape().len() != 2 || train_logits.shape()[0] != residual_norms.len() {
        return Err(Error::shape(
            "vim_fit_alpha",
            format!("n×C logits with n = {}", residual_norms.len()),
            format!("{:?}", train_logits.shape()),
        ));
    }
    let n = residual_norms.len();
    if n == 0 {
        return Err(Error::EmptyInput("vim_fit_alpha".into()));
    }
    let mean_residual = residual_norms.iter().sum::<f64>() / n as f64;
    if mean_residual == 0.0 {
        return Err(Error::Degenerate("VIM: zero mean residual (features lie in the subspace)".into()));
    }
    let mean_max_logit = (0..n)
        .map(|i| {
            train_logits
                .row(i)
                .iter()
                .copied()
                .fold(f32::NEG_INFINITY, f32::max) as f64
        })
        .sum::<f64>()
        / n as f64;
    Ok(mean_max_logit / mean_residual)
}

/// `+‖∂KL(uniform ‖ softmax(f/T))/∂(W,b)‖₁`; in-distribution inputs produce
/// the larger gradient under this objective, so the raw norm already follows
/// the higher-is-ID convention.
pub fn gradnorm_score(net: &Network, trace: &ForwardTrace, temperature: f64) -> Result<f64> {
    let g = grad_last_layer_from_trace(net, trace, temperature)?;
    Ok(g.data().iter().map(|&v| v.abs() as f64).sum())
}

/// ODIN: perturb the input toward higher max-softmax at temperature `T`,
/// then score the perturbed input's max softmax probability.
pub fn odin_score(net: &Network, x: &Tensor, temperature: f64, eps: f64) -> Result<f64> {
    if eps < 0.0 || !eps.is_finite() {
        return Err(Error::domain("epsilon", eps, "finite, ≥ 0"));
    }
    let x_tilde = if eps == 0.0 {
        x.clone()
    } else {
        let g = grad_input(net, x, InputLoss::NegLogMsp { temperature })?;
        let data = x
            .data()
            .iter()
            .zip(g.data())
            .map(|(&xv, &gv)| {
                let step = if gv > 0.0 { -eps } else if gv < 0.0 { eps } else { 0.0 };
                ((xv as f64 + step).clamp(0.0, 1.0)) as f32
            })
            .collect();
        Tensor::new(x.shape().to_vec(), data)?
    };
    let trace = forward(net, &x_tilde)?;
    let p = softmax_f64(trace.logits.data(), temperature);
    Ok(p.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Final-dense application matching the forward pass bit-for-bit:
/// f64 accumulation rounded per element, then f32 bias add.
fn dense_logits(w: &Tensor, b: &Tensor, z: &[f32]) -> Vec<f32> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(in_dim, z.len());
    (0..out_dim)
        .map(|i| {
            let mut acc = 0.0f64;
            for (j, &zv) in z.iter().enumerate() {
                acc += w.data()[i * in_dim + j] as f64 * zv as f64;
            }
            acc as f32 + b.data()[i]
        })
        .collect()
}

/// Scalar score of a trace; higher means more in-distribution.
pub fn score(mon: &FittedMonitor, net: &Network, trace: &ForwardTrace) -> Result<f64> {
    let logits = trace.logits.data();
    match (&mon.kind, &mon.state) {
        (MonitorKind::Softmax, _) => Ok(max_of(&softmax_f64(logits, 1.0))),
        (MonitorKind::Temperature, _) => Ok(max_of(&softmax_f64(logits, mon.param_f64("T")?))),
        (MonitorKind::MaxLogit, _) => Ok(logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64),
        (MonitorKind::Energy, _) => logsumexp_slice(logits, mon.param_f64("T")?),
        (MonitorKind::Entropy, _) => {
            let p = softmax_f64(logits, 1.0);
            Ok(p.iter().map(|&v| if v > 0.0 { v * v.ln() } else { 0.0 }).sum())
        }
        (MonitorKind::Odin, _) => odin_score(net, &trace.input, mon.param_f64("T")?, mon.param_f64("epsilon")?),
        (MonitorKind::React, MonitorState::React { clamp }) => {
            let z = react_clamp(trace.classifier_input.data(), *clamp);
            let (w, b) = net.final_dense();
            logsumexp_slice(&dense_logits(w, b, &z), 1.0)
        }
        (MonitorKind::AshP, _) | (MonitorKind::AshB, _) | (MonitorKind::AshS, _) => {
            let mode = match mon.kind {
                MonitorKind::AshP => AshMode::Prune,
                MonitorKind::AshB => AshMode::Binarize,
                _ => AshMode::Scale,
            };
            let z = shape_activations(trace.classifier_input.data(), mode, mon.param_f64("percentile")?)?;
            let (w, b) = net.final_dense();
            logsumexp_slice(&dense_logits(w, b, &z), 1.0)
        }
        (MonitorKind::Dice, MonitorState::Dice { masked_w, bias }) => {
            logsumexp_slice(&dense_logits(masked_w, bias, trace.classifier_input.data()), 1.0)
        }
        (MonitorKind::GradNorm, _) => gradnorm_score(net, trace, mon.param_f64("T")?),
        (MonitorKind::Knn, MonitorState::Knn { features }) => {
            if features.is_empty() {
                return Err(Error::EmptyInput("KNN stored features".into()));
            }
            let k = (mon.param_i64("k")? as usize).clamp(1, features.len());
            let q = unit_normalize(trace.penultimate.data());
            let mut dists: Vec<f64> = features
                .iter()
                .map(|f| {
                    f.iter()
                        .zip(&q)
                        .map(|(&a, &b)| (a as f64 - b as f64) * (a as f64 - b as f64))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(-dists[k - 1])
        }
        (MonitorKind::Mds, MonitorState::Mds { means, factor }) => {
            Ok(-min_class_mahalanobis(trace.penultimate.data(), means, factor))
        }
        (MonitorKind::Mahalanobis, MonitorState::Mahalanobis { means, factor, global_mean, global_factor }) => {
            let z = trace.penultimate.data();
            let m0 = mahalanobis_to(z, global_mean, global_factor);
            let best = means
                .iter()
                .map(|mu| mahalanobis_to(z, mu, factor) - m0)
                .fold(f64::INFINITY, f64::min);
            Ok(-best)
        }
        (MonitorKind::Gaussian, MonitorState::Gaussian { means, stds }) => {
            let c = trace.predicted_class;
            let z = trace.penultimate.data();
            let worst = z
                .iter()
                .zip(&means[c])
                .zip(&stds[c])
                .map(|((&v, &m), &s)| ((v as f64 - m as f64).abs()) / (s as f64 + 1e-6))
                .fold(0.0f64, f64::max);
            Ok(-worst)
        }
        (MonitorKind::Box, _) => Err(Error::ScoreUnavailable("Box")),
        (MonitorKind::She, MonitorState::She { patterns }) => {
            let c = trace.predicted_class;
            Ok(trace
                .penultimate
                .data()
                .iter()
                .zip(&patterns[c])
                .map(|(&z, &s)| z as f64 * s as f64)
                .sum())
        }
        (MonitorKind::KlMatching, MonitorState::KlMatching { templates }) => {
            let p = softmax_f64(logits, 1.0);
            let mut best = f64::INFINITY;
            for template in templates.iter().flatten() {
                let kl: f64 = p
                    .iter()
                    .zip(template)
                    .map(|(&pi, &di)| pi * (pi.max(1e-12).ln() - di.max(1e-12).ln()))
                    .sum();
                best = best.min(kl);
            }
            if best.is_infinite() {
                return Err(Error::Degenerate("KLMatching: no class template available".into()));
            }
            Ok(-best)
        }
        (MonitorKind::Vim, MonitorState::Vim { mean, basis, alpha }) => {
            let r = vim_residual(trace.penultimate.data(), mean, basis);
            Ok(logsumexp_slice(logits, 1.0)? - alpha * r)
        }
        (kind, state) => Err(Error::Degenerate(format!(
            "monitor {kind} paired with mismatched state {state:?}"
        ))),
    }
}

fn max_of(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mahalanobis_to(z: &[f32], mean: &[f32], factor: &SpdFactor) -> f64 {
    let diff: Vec<f64> = z.iter().zip(mean).map(|(&a, &m)| a as f64 - m as f64).collect();
    factor.mahalanobis_sq(&diff)
}

fn min_class_mahalanobis(z: &[f32], means: &[Vec<f32>], factor: &SpdFactor) -> f64 {
    means
        .iter()
        .map(|mu| mahalanobis_to(z, mu, factor))
        .fold(f64::INFINITY, f64::min)
}

/// ID/OOD decision: threshold kinds compare `score ≥ τ` (boundary inclusive);
/// Box checks membership in any γ-enlarged box of the predicted class.
pub fn verdict(mon: &FittedMonitor, net: &Network, trace: &ForwardTrace) -> Result<Verdict> {
    if let (MonitorKind::Box, MonitorState::Boxes { classes }) = (&mon.kind, &mon.state) {
        let gamma = mon.param_f64("gamma")?;
        let z = trace.penultimate.data();
        let inside = classes[trace.predicted_class].iter().any(|b| b.contains(z, gamma));
        return Ok(if inside { Verdict::Id } else { Verdict::Ood });
    }
    let tau = mon.tau.ok_or(Error::ThresholdUnset)?;
    Ok(if score(mon, net, trace)? >= tau {
        Verdict::Id
    } else {
        Verdict::Ood
    })
}

/// The largest threshold (among the sample values) whose ID coverage on the
/// validation scores is at least `target`: τ = the ⌈target·n⌉-th largest score.
pub fn fit_threshold(id_validation_scores: &[f64], target_id_accuracy: f64) -> Result<f64> {
    if id_validation_scores.is_empty() {
        return Err(Error::EmptyInput("threshold calibration scores".into()));
    }
    if !(target_id_accuracy > 0.0 && target_id_accuracy <= 1.0) {
        return Err(Error::domain("target_id_accuracy", target_id_accuracy, "(0, 1]"));
    }
    if id_validation_scores.iter().any(|v| v.is_nan()) {
        return Err(Error::Invalid("NaN validation score".into()));
    }
    let n = id_validation_scores.len();
    let m = ((target_id_accuracy * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = id_validation_scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(sorted[m - 1])
}
