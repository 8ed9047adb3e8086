//! Acceptance suite: nine end-to-end criteria with pinned tolerances.
//!
//! Each test prints one `[PASS]`/`[FAIL]` line (run with `--nocapture` to
//! see them on success). Tolerances and runtime budgets are asserted in the
//! tests themselves.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::oracles::{
    brute_force_threshold, fd_grad_input, loss_cross_entropy, loss_kl_uniform, naive_conv2d, naive_matmul,
    naive_maxpool, pairwise_auroc,
};
use common::{desk_fixture, network_accuracy, FIXTURE_SEED};
use oodmon_cli::commands::{cmd_optimize, CommandError};
use oodmon_cli::config::Overrides;
use oodmon_core::data::{split_dataset, LabeledDataset, OodClassId};
use oodmon_core::evaluate::{auroc, auroc_se, proportion_ci, report_from_json, three_rank, Z_95};
use oodmon_core::monitors::{
    fit, fit_threshold, score, verdict, MonitorKind, MonitorTemplate, ParamAssignment, ParamValue, Verdict,
};
use oodmon_core::nn::{forward, grad_input, grad_last_layer, init_mlp, InputLoss, LayerSpec, Network};
use oodmon_core::optimize::{
    grid_search, multi_objective_sweep, pareto_front, random_search, EvalContext, Objective, ParetoPoint,
    SearchMethod,
};
use oodmon_core::tensor::{conv2d, matmul, maxpool2d, Tensor};
use rand::{Rng, SeedableRng};

struct Criterion {
    number: u8,
    label: &'static str,
    failures: Vec<String>,
    started: Instant,
    budget_secs: Option<f64>,
}

impl Criterion {
    fn new(number: u8, label: &'static str, budget_secs: Option<f64>) -> Self {
        Criterion {
            number,
            label,
            failures: Vec::new(),
            started: Instant::now(),
            budget_secs,
        }
    }

    fn check(&mut self, ok: bool, detail: impl Fn() -> String) {
        if !ok {
            self.failures.push(detail());
        }
    }

    fn finish(mut self) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if let Some(budget) = self.budget_secs {
            if elapsed > budget {
                self.failures.push(format!("runtime {elapsed:.1}s exceeds budget {budget}s"));
            }
        }
        if self.failures.is_empty() {
            eprintln!("[PASS] criterion {}: {} ({elapsed:.1}s)", self.number, self.label);
        } else {
            eprintln!(
                "[FAIL] criterion {}: {} ({elapsed:.1}s) — {}",
                self.number,
                self.label,
                self.failures.join("; ")
            );
        }
        assert!(self.failures.is_empty(), "criterion {} failed", self.number);
    }
}

fn rng(seed: u64) -> rand::rngs::StdRng {
    rand::rngs::StdRng::seed_from_u64(seed)
}

fn random_tensor(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()).unwrap()
}

#[test]
fn criterion_1_oracle_equivalence() {
    let mut c = Criterion::new(1, "auroc and tensor kernels match brute-force oracles", Some(10.0));
    let mut r = rng(1001);

    for case in 0..200 {
        let n_id = r.gen_range(1..80);
        let n_ood = r.gen_range(1..80);
        let grid = if case % 2 == 0 { 6 } else { 500 };
        let id: Vec<f64> = (0..n_id).map(|_| r.gen_range(0..grid) as f64).collect();
        let ood: Vec<f64> = (0..n_ood).map(|_| r.gen_range(0..grid) as f64).collect();
        let got = auroc(&id, &ood).unwrap();
        let want = pairwise_auroc(&id, &ood);
        c.check((got - want).abs() < 1e-12, || {
            format!("auroc case {case}: {got} vs oracle {want}")
        });
    }

    for case in 0..50 {
        let m = r.gen_range(1..8);
        let k = r.gen_range(1..8);
        let n = r.gen_range(1..8);
        let a = random_tensor(&[m, k], &mut r);
        let b = random_tensor(&[k, n], &mut r);
        let got = matmul(&a, &b).unwrap();
        let want = naive_matmul(a.data(), m, k, b.data(), n);
        for (g, w) in got.data().iter().zip(&want) {
            c.check((*g as f64 - w).abs() < 1e-5, || format!("matmul case {case}"));
        }

        let ch = r.gen_range(1..3);
        let h = r.gen_range(3..9);
        let w_ = r.gen_range(3..9);
        let f = r.gen_range(1..3);
        let kh = r.gen_range(1..=h.min(3));
        let kw = r.gen_range(1..=w_.min(3));
        let stride = r.gen_range(1..3);
        let padding = r.gen_range(0..2);
        let input = random_tensor(&[ch, h, w_], &mut r);
        let kernel = random_tensor(&[f, ch, kh, kw], &mut r);
        let got = conv2d(&input, &kernel, stride, padding).unwrap();
        let want = naive_conv2d(input.data(), ch, h, w_, kernel.data(), f, kh, kw, stride, padding);
        for (g, w2) in got.data().iter().zip(&want) {
            c.check((*g as f64 - w2).abs() < 1e-5, || format!("conv2d case {case}"));
        }

        let pk = r.gen_range(1..=h.min(w_).min(3));
        let ps = r.gen_range(1..3);
        let got = maxpool2d(&input, pk, ps).unwrap();
        let want = naive_maxpool(input.data(), ch, h, w_, pk, ps);
        for (g, w2) in got.data().iter().zip(&want) {
            c.check((*g as f64 - w2).abs() < 1e-5, || format!("maxpool case {case}"));
        }
    }
    c.finish();
}

#[test]
fn criterion_2_reduction_identities() {
    let mut c = Criterion::new(2, "reduction identities across monitor kinds", Some(5.0));
    let mut r = rng(2002);
    let net = init_mlp(&[1, 4, 4], &[14, 12], 5, 22);
    let n = 100;
    let pixels: Vec<f32> = (0..n * 16).map(|_| r.gen_range(0.0f32..1.0)).collect();
    let ds = LabeledDataset::new(Tensor::new(vec![n, 1, 4, 4], pixels).unwrap(), vec![0u8; n], "traces").unwrap();
    let traces: Vec<_> = (0..n).map(|i| forward(&net, &ds.image(i).unwrap()).unwrap()).collect();

    let fit_with = |kind: MonitorKind, params: Vec<(&str, ParamValue)>| {
        let template = MonitorTemplate::for_network(kind, &net).unwrap();
        let mut assignment = template.defaults();
        for (k, v) in params {
            assignment.insert(k.to_string(), v);
        }
        fit(&template, &assignment, &net, &ds).unwrap()
    };
    let softmax = fit_with(MonitorKind::Softmax, vec![]);
    let energy1 = fit_with(MonitorKind::Energy, vec![("T", ParamValue::Float(1.0))]);
    let pairs = [
        (
            "ODIN(ε=0,T=1) ≡ Softmax",
            fit_with(
                MonitorKind::Odin,
                vec![("T", ParamValue::Float(1.0)), ("epsilon", ParamValue::Float(0.0))],
            ),
            &softmax,
        ),
        (
            "ReAct(100) ≡ Energy(1)",
            fit_with(MonitorKind::React, vec![("percentile", ParamValue::Float(100.0))]),
            &energy1,
        ),
        (
            "ASH-P(0) ≡ Energy(1)",
            fit_with(MonitorKind::AshP, vec![("percentile", ParamValue::Float(0.0))]),
            &energy1,
        ),
        (
            "DICE(0) ≡ Energy(1)",
            fit_with(MonitorKind::Dice, vec![("sparsity", ParamValue::Float(0.0))]),
            &energy1,
        ),
        (
            "Temperature(1) ≡ Softmax",
            fit_with(MonitorKind::Temperature, vec![("T", ParamValue::Float(1.0))]),
            &softmax,
        ),
    ];
    for (label, lhs, rhs) in &pairs {
        let mut max_dev = 0.0f64;
        for t in &traces {
            let a = score(lhs, &net, t).unwrap();
            let b = score(rhs, &net, t).unwrap();
            max_dev = max_dev.max((a - b).abs());
        }
        c.check(max_dev < 1e-6, || format!("{label}: max deviation {max_dev}"));
    }
    c.finish();
}

#[test]
fn criterion_3_gradient_checks() {
    let mut c = Criterion::new(3, "gradients match 64-bit central finite differences", Some(30.0));
    let mut r = rng(3003);
    let h = 1e-3;
    let tol = |fd: f64| (1e-3 * fd.abs()).max(1e-4);

    // Compositions covering dense/conv/pool/batchnorm/relu/elu.
    type NetBuilder = fn(&mut rand::rngs::StdRng) -> (Network, Vec<usize>);
    let builders: Vec<NetBuilder> = vec![
        |r| {
            let w1 = random_tensor(&[7, 5], r);
            let b1 = random_tensor(&[7], r);
            let w2 = random_tensor(&[3, 7], r);
            let b2 = random_tensor(&[3], r);
            (
                Network::new(
                    vec![
                        LayerSpec::Dense { w: w1, b: b1 },
                        LayerSpec::Relu,
                        LayerSpec::Dense { w: w2, b: b2 },
                    ],
                    3,
                    vec![5],
                    None,
                )
                .unwrap(),
                vec![5],
            )
        },
        |r| {
            let w1 = random_tensor(&[6, 4], r);
            let b1 = random_tensor(&[6], r);
            let w2 = random_tensor(&[3, 6], r);
            let b2 = random_tensor(&[3], r);
            (
                Network::new(
                    vec![
                        LayerSpec::Dense { w: w1, b: b1 },
                        LayerSpec::Elu { alpha: 1.0 },
                        LayerSpec::Dense { w: w2, b: b2 },
                    ],
                    3,
                    vec![4],
                    None,
                )
                .unwrap(),
                vec![4],
            )
        },
        |r| {
            let gamma = Tensor::new(vec![5], (0..5).map(|_| r.gen_range(0.5f32..1.5)).collect()).unwrap();
            let beta = random_tensor(&[5], r);
            let mean = random_tensor(&[5], r);
            let var = Tensor::new(vec![5], (0..5).map(|_| r.gen_range(0.2f32..2.0)).collect()).unwrap();
            let w = random_tensor(&[3, 5], r);
            let b = random_tensor(&[3], r);
            (
                Network::new(
                    vec![
                        LayerSpec::BatchNorm { gamma, beta, mean, var },
                        LayerSpec::Dense { w, b },
                    ],
                    3,
                    vec![5],
                    None,
                )
                .unwrap(),
                vec![5],
            )
        },
        |r| {
            let cw = random_tensor(&[2, 1, 3, 3], r);
            let cb = random_tensor(&[2], r);
            let dw = random_tensor(&[3, 2 * 3 * 3], r);
            let db = random_tensor(&[3], r);
            (
                Network::new(
                    vec![
                        LayerSpec::Conv2d { w: cw, b: cb, stride: 1, padding: 1 },
                        LayerSpec::Relu,
                        LayerSpec::MaxPool2d { kernel: 2, stride: 2 },
                        LayerSpec::Flatten,
                        LayerSpec::Dense { w: dw, b: db },
                    ],
                    3,
                    vec![1, 6, 6],
                    None,
                )
                .unwrap(),
                vec![1, 6, 6],
            )
        },
        |r| {
            let cw = random_tensor(&[3, 2, 3, 3], r);
            let cb = random_tensor(&[3], r);
            let gamma = Tensor::new(vec![3], (0..3).map(|_| r.gen_range(0.5f32..1.5)).collect()).unwrap();
            let beta = random_tensor(&[3], r);
            let mean = random_tensor(&[3], r);
            let var = Tensor::new(vec![3], (0..3).map(|_| r.gen_range(0.2f32..2.0)).collect()).unwrap();
            let dw = random_tensor(&[2, 3 * 3 * 3], r);
            let db = random_tensor(&[2], r);
            (
                Network::new(
                    vec![
                        LayerSpec::Conv2d { w: cw, b: cb, stride: 2, padding: 1 },
                        LayerSpec::BatchNorm { gamma, beta, mean, var },
                        LayerSpec::Elu { alpha: 1.0 },
                        LayerSpec::Flatten,
                        LayerSpec::Dense { w: dw, b: db },
                    ],
                    2,
                    vec![2, 5, 5],
                    None,
                )
                .unwrap(),
                vec![2, 5, 5],
            )
        },
    ];

    // Kink-safe inputs: hidden relu activations and pool gaps clear of the
    // FD window.
    let checkable = |net: &Network, x: &Tensor| -> bool {
        let trace = forward(net, x).unwrap();
        for (idx, layer) in net.layers.iter().enumerate() {
            let input = if idx == 0 { x } else { &trace.named_activations[idx - 1] };
            match layer {
                LayerSpec::Relu => {
                    if input.data().iter().any(|v| v.abs() < 0.02) {
                        return false;
                    }
                }
                LayerSpec::MaxPool2d { kernel, stride } => {
                    let (ch, hh, ww) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                    let oh = (hh - kernel) / stride + 1;
                    let ow = (ww - kernel) / stride + 1;
                    for ic in 0..ch {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let mut vals = Vec::new();
                                for ky in 0..*kernel {
                                    for kx in 0..*kernel {
                                        vals.push(input.data()[(ic * hh + oy * stride + ky) * ww + ox * stride + kx]);
                                    }
                                }
                                vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
                                if vals.len() > 1 && vals[0] != 0.0 && vals[0] - vals[1] < 0.02 {
                                    return false;
                                }
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        true
    };

    for (bi, build) in builders.iter().enumerate() {
        for case in 0..20 {
            let (net, shape) = build(&mut r);
            let x = loop {
                let cand = random_tensor(&shape, &mut r);
                if checkable(&net, &cand) {
                    break cand;
                }
            };
            let target = case % net.class_count;
            let got = grad_input(&net, &x, InputLoss::CrossEntropy { target }).unwrap();
            let fd = fd_grad_input(&net, x.data(), h, |l| loss_cross_entropy(l, target));
            for (i, (&g, &f)) in got.data().iter().zip(&fd).enumerate() {
                c.check((g as f64 - f).abs() <= tol(f), || {
                    format!("grad_input builder {bi} case {case} coord {i}: {g} vs {f}")
                });
            }
        }
    }

    // grad_last_layer against FD of the KL(uniform ‖ softmax) objective.
    for case in 0..20 {
        let w1 = random_tensor(&[6, 4], &mut r);
        let b1 = random_tensor(&[6], &mut r);
        let w2 = random_tensor(&[3, 6], &mut r);
        let b2 = random_tensor(&[3], &mut r);
        let net = Network::new(
            vec![
                LayerSpec::Dense { w: w1, b: b1 },
                LayerSpec::Elu { alpha: 1.0 },
                LayerSpec::Dense { w: w2, b: b2 },
            ],
            3,
            vec![4],
            None,
        )
        .unwrap();
        let x = random_tensor(&[4], &mut r);
        let t = [1.0, 2.0, 20.0][case % 3];
        let got = grad_last_layer(&net, &x, t).unwrap();
        let trace = forward(&net, &x).unwrap();
        let z: Vec<f64> = trace.classifier_input.data().iter().map(|&v| v as f64).collect();
        let logits: Vec<f64> = trace.logits.data().iter().map(|&v| v as f64).collect();
        let hw = 1e-5;
        for row in 0..3 {
            for col in 0..=z.len() {
                let delta = if col < z.len() { z[col] * hw } else { hw };
                if delta == 0.0 {
                    continue;
                }
                let mut up = logits.clone();
                let mut dn = logits.clone();
                up[row] += delta;
                dn[row] -= delta;
                let fd = (loss_kl_uniform(&up, t) - loss_kl_uniform(&dn, t)) / (2.0 * hw);
                let g = got.at2(row, col) as f64;
                c.check((g - fd).abs() <= tol(fd), || {
                    format!("grad_last_layer case {case} ({row},{col}): {g} vs {fd}")
                });
            }
        }
    }
    c.finish();
}

#[test]
fn criterion_4_end_to_end_desk_experiment() {
    let mut c = Criterion::new(4, "end-to-end desk experiment (optimize all monitors)", Some(120.0));
    let fx = desk_fixture(
        200,
        &[32, 32],
        "optimize.method = \"random\"\n\
         optimize.trials = 100\n\
         optimize.objective = [\"NewWorld/far\"]\n\
         optimize.min_id_accuracy = 0.7\n",
    );
    let id = split_dataset(&fx.id_dataset, FIXTURE_SEED).unwrap();
    let net_acc = network_accuracy(&fx.net, &id.test);
    c.check(net_acc >= 0.9, || format!("fixture net test accuracy {net_acc}"));

    let out = match cmd_optimize(&fx.config, &Overrides::default()) {
        Ok(out) => out,
        Err(CommandError::Validation(d)) => panic!("validation: {d:?}"),
        Err(CommandError::Runtime(e)) => panic!("runtime: {e}"),
    };
    let report = report_from_json(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    c.check(report.monitors.len() == 20, || format!("{} monitors in report", report.monitors.len()));
    let far = OodClassId::parse("NewWorld/far").unwrap();

    for m in &report.monitors {
        let kind = MonitorKind::parse(&m.monitor).unwrap();
        if kind.has_score() {
            // (a) test-split ID accuracy with generalization slack.
            c.check(m.id_accuracy >= 0.65, || {
                format!("{}: test ID accuracy {}", m.monitor, m.id_accuracy)
            });
            // (a) validation guarantee, from the winning log record.
            let log_path = out.join(format!("log_{}.jsonl", m.monitor.replace('-', "_")));
            let log = std::fs::read_to_string(&log_path).unwrap();
            let mut best: Option<(f64, f64)> = None;
            for line in log.lines() {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                let obj = v["objective"].as_f64().unwrap();
                let ida = v["id_accuracy"].as_f64().unwrap();
                if best.is_none_or(|(o, _)| obj > o) {
                    best = Some((obj, ida));
                }
            }
            let (_, winner_id_acc) = best.expect("non-empty log");
            c.check(winner_id_acc >= 0.70, || {
                format!("{}: winner validation ID accuracy {winner_id_acc}", m.monitor)
            });
        } else {
            // (c) the Box row must carry no AUROC anywhere.
            c.check(m.classes.iter().all(|cell| cell.auroc.is_none()), || {
                format!("{}: expected n/a AUROC cells", m.monitor)
            });
        }
    }

    // (b) far-cluster AUROC for the four feature/energy monitors.
    for name in ["Energy", "MDS", "Mahalanobis", "KNN"] {
        let m = report.monitors.iter().find(|m| m.monitor == name).unwrap();
        let cell = m.classes.iter().find(|cell| cell.class == far).unwrap();
        let a = cell.auroc.expect("scored kind");
        c.check(a >= 0.95, || format!("{name}: NewWorld AUROC {a}"));
    }

    // (c) Box accepts ≥ 0.99 of its own fit features at γ = 0.
    let template = MonitorTemplate::for_network(MonitorKind::Box, &fx.net).unwrap();
    let mut params = template.defaults();
    params.insert("gamma".into(), ParamValue::Float(0.0));
    let box_mon = fit(&template, &params, &fx.net, &id.fit).unwrap();
    let mut hits = 0usize;
    for i in 0..id.fit.len() {
        let tr = forward(&fx.net, &id.fit.image(i).unwrap()).unwrap();
        if verdict(&box_mon, &fx.net, &tr).unwrap() == Verdict::Id {
            hits += 1;
        }
    }
    let box_accept = hits as f64 / id.fit.len() as f64;
    c.check(box_accept >= 0.99, || format!("Box fit acceptance {box_accept}"));
    c.finish();
}

#[test]
fn criterion_5_threshold_semantics() {
    let mut c = Criterion::new(5, "fit_threshold coverage and maximality vs brute force", Some(5.0));
    let mut r = rng(5005);
    for case in 0..1000 {
        let n = r.gen_range(1..60);
        let scores: Vec<f64> = (0..n).map(|_| (r.gen_range(-40i32..40) as f64) / 8.0).collect();
        for target in [0.5, 0.7, 0.9, 1.0] {
            let got = fit_threshold(&scores, target).unwrap();
            let want = brute_force_threshold(&scores, target);
            c.check(got == want, || format!("case {case} target {target}: {got} vs {want}"));
            let coverage = scores.iter().filter(|&&s| s >= got).count() as f64 / n as f64;
            c.check(coverage >= target, || format!("case {case}: coverage {coverage} < {target}"));
        }
    }
    c.finish();
}

#[test]
fn criterion_6_confidence_intervals() {
    let mut c = Criterion::new(6, "proportion and Hanley–McNeil AUROC intervals", None);
    let (lo, hi) = proportion_ci(0.5, 100, Z_95);
    c.check((0.5 - lo - 0.098).abs() < 1e-4 && (hi - 0.5 - 0.098).abs() < 1e-4, || {
        format!("proportion_ci(0.5,100) = ({lo}, {hi})")
    });
    let (lo, hi) = proportion_ci(0.8, 100, Z_95);
    c.check((0.8 - lo - 0.0784).abs() < 1e-4 && (hi - 0.8 - 0.0784).abs() < 1e-4, || {
        format!("proportion_ci(0.8,100) = ({lo}, {hi})")
    });
    // Hand-evaluated Hanley–McNeil at A=0.9, n_id=40, n_ood=60.
    let a: f64 = 0.9;
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let want = ((a * (1.0 - a) + 39.0 * (q1 - a * a) + 59.0 * (q2 - a * a)) / (40.0 * 60.0)).sqrt();
    let got = auroc_se(a, 40, 60);
    c.check((got - want).abs() < 1e-10, || format!("H–M SE {got} vs {want}"));
    c.check(auroc_se(1.0, 100, 100) == 0.0, || "SE at A=1 not zero".to_string());
    c.finish();
}

#[test]
fn criterion_7_optimizer_soundness() {
    let mut c = Criterion::new(7, "grid soundness, Pareto oracle, one-hot sweep equality", None);
    let fx = desk_fixture(60, &[16], "");
    let id = split_dataset(&fx.id_dataset, FIXTURE_SEED).unwrap();
    let collected: BTreeMap<OodClassId, LabeledDataset> =
        [(OodClassId::parse("NewWorld/far").unwrap(), fx.far_dataset.clone())].into();
    let suite = oodmon_core::data::build_ood_suite(
        &id,
        &fx.net,
        &collected,
        &oodmon_core::data::default_intensities(),
        FIXTURE_SEED,
    )
    .unwrap();
    let ctx = EvalContext::new(&fx.net, &id, &suite).unwrap();
    let far = OodClassId::parse("NewWorld/far").unwrap();
    let gaussian = OodClassId::parse("Noise/Gaussian").unwrap();

    // (i) one-parameter landscape: Energy's T against a 10⁴-point map.
    let template = MonitorTemplate::for_network(MonitorKind::Energy, &fx.net).unwrap();
    let obj = Objective::new(vec![gaussian.clone()], None, 0.7).unwrap();
    let (lo, hi) = (0.1f64, 1000.0);
    let fine = 10_000usize;
    let objective_at = |t: f64| {
        let params: ParamAssignment = [("T".to_string(), ParamValue::Float(t))].into();
        ctx.evaluate(&template, &params, &obj).objective_value
    };
    let mut best_fine = f64::NEG_INFINITY;
    let mut best_t = lo;
    for i in 0..fine {
        let t = lo + (hi - lo) * i as f64 / (fine - 1) as f64;
        let v = objective_at(t);
        if v > best_fine {
            best_fine = v;
            best_t = t;
        }
    }
    let outcome = grid_search(&ctx, &template, &obj, 50);
    let coarse: Vec<f64> = (0..50).map(|i| lo + (hi - lo) * i as f64 / 49.0).collect();
    let j = coarse.iter().rposition(|&g| g <= best_t).unwrap_or(0);
    let left = objective_at(coarse[j]);
    let right = objective_at(coarse[(j + 1).min(49)]);
    let gap = best_fine - left.max(right);
    c.check(best_fine - outcome.best.objective_value <= gap + 1e-12, || {
        format!(
            "grid best {} vs fine max {best_fine}, allowed gap {gap}",
            outcome.best.objective_value
        )
    });

    // (ii) Pareto front equals the O(n²) domination oracle on 50 point sets.
    let mut r = rng(7007);
    for set in 0..50 {
        let pts: Vec<ParetoPoint> = (0..50)
            .map(|_| ParetoPoint {
                weights: vec![0.5, 0.5],
                accuracies: vec![r.gen::<f64>(), r.gen::<f64>()],
                id_accuracy: 1.0,
            })
            .collect();
        let front = pareto_front(&pts);
        let dominates = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
        };
        for p in &front {
            c.check(
                !pts.iter().any(|q| dominates(&q.accuracies, &p.accuracies)),
                || format!("set {set}: dominated point kept"),
            );
        }
        for p in &pts {
            let kept = front.iter().any(|f| f.accuracies == p.accuracies);
            if !kept {
                c.check(
                    front.iter().any(|f| dominates(&f.accuracies, &p.accuracies)),
                    || format!("set {set}: excluded point not dominated"),
                );
            }
        }
    }

    // (iii) one-hot sweep combos reproduce single-objective runs exactly.
    let obj2 = Objective::new(vec![far.clone(), gaussian.clone()], None, 0.7).unwrap();
    let combos = 3usize;
    let seed = 4242u64;
    let sweep = multi_objective_sweep(
        &ctx,
        &template,
        &obj2,
        combos,
        SearchMethod::Random { trials: 12 },
        seed,
    )
    .unwrap();
    // Combo 0 has weights (0,1) and combo 2 has (1,0); their seeds are
    // seed+0 and seed+2.
    for (index, weights) in [(0usize, vec![0.0, 1.0]), (2usize, vec![1.0, 0.0])] {
        let single_obj = obj2.with_weights(weights.clone()).unwrap();
        let single = random_search(&ctx, &template, &single_obj, 12, seed + index as u64);
        c.check(sweep[index].weights == weights, || format!("combo {index} weights"));
        c.check(
            sweep[index].outcome.best.params == single.best.params
                && sweep[index].outcome.best.objective_value == single.best.objective_value,
            || format!("combo {index} diverges from the single-objective run"),
        );
    }
    c.finish();
}

#[test]
fn criterion_8_byte_identical_determinism() {
    let mut c = Criterion::new(8, "cmd optimize is byte-identical given config+seed", None);
    let fx = desk_fixture(
        60,
        &[16],
        "monitors = [\"Energy\", \"Box\", \"KNN\", \"VIM\", \"ODIN\"]\n\
         optimize.method = \"random\"\n\
         optimize.trials = 10\n\
         optimize.combos = 3\n\
         optimize.objective = [\"NewWorld/far\", \"Noise/Gaussian\"]\n",
    );
    let run = |name: &str| {
        cmd_optimize(
            &fx.config,
            &Overrides {
                out: Some(fx.dir.path().join(name)),
                ..Default::default()
            },
        )
        .expect("optimize")
    };
    let out1 = run("d1");
    let out2 = run("d2");
    let list = |dir: &std::path::Path| {
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        names
    };
    let names1 = list(&out1);
    let names2 = list(&out2);
    c.check(names1 == names2, || format!("file sets differ: {names1:?} vs {names2:?}"));
    c.check(names1.iter().any(|n| n.ends_with(".svg")), || "no SVG emitted".into());
    for name in &names1 {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        c.check(a == b, || format!("{name} differs between runs"));
    }
    c.finish();
}

#[test]
fn criterion_9_rank_table_rule() {
    let mut c = Criterion::new(9, "equal-width three-rank rule on the reference AUROC row", None);
    let row = [
        64.0, 65.0, 65.0, 65.0, 65.0, 37.0, 48.0, 89.0, 35.0, 48.0, 62.0, 66.0, 35.0, 50.0, 56.0, 38.0,
        61.0, 65.0, 46.0,
    ];
    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    c.check(three_rank(89.0, lo, hi) == 1, || "89 not rank 1".to_string());
    c.check(three_rank(35.0, lo, hi) == 3, || "35 not rank 3".to_string());
    let tied: Vec<u8> = row
        .iter()
        .filter(|&&v| v == 65.0)
        .map(|&v| three_rank(v, lo, hi))
        .collect();
    c.check(tied.windows(2).all(|w| w[0] == w[1]), || format!("tied 65s split ranks: {tied:?}"));
    // Every cell lands in {1,2,3} and equal scores always share a rank.
    for &v in &row {
        let rank = three_rank(v, lo, hi);
        c.check((1..=3).contains(&rank), || format!("value {v} got rank {rank}"));
    }
    c.finish();
}
