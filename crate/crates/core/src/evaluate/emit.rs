//! Report artifacts: CSV tables, the versioned JSON report, and
//! self-contained SVG plots (parallel coordinates and Pareto scatter).
//!
//! Emission is deterministic: column order is classes-in-taxonomy-order ×
//! monitors-alphabetical, rates carry four decimals, and SVG coordinates are
//! formatted with fixed precision. Identical inputs give identical bytes.

use serde::{Deserialize, Serialize};

use super::{ClassCell, EvalReport, MonitorReport, RankTable};
use crate::data::OodClassId;
use crate::error::{Error, Result};
use crate::monitors::ParamAssignment;
use crate::optimize::ParetoPoint;

const REPORT_FORMAT: &str = "oodmon-report/1";

fn rate(v: f64) -> String {
    format!("{v:.4}")
}

/// All class ids appearing in a report, in taxonomy order.
fn report_classes(report: &EvalReport) -> Vec<OodClassId> {
    let mut out: Vec<OodClassId> = Vec::new();
    for m in &report.monitors {
        for c in &m.classes {
            if !out.contains(&c.class) {
                out.push(c.class.clone());
            }
        }
    }
    out.sort();
    out
}

fn cell_of<'a>(m: &'a MonitorReport, class: &OodClassId) -> Option<&'a ClassCell> {
    m.classes.iter().find(|c| &c.class == class)
}

/// Detection-accuracy table: one row per class (ID first), one column per
/// monitor. Header-only when the report is empty.
pub fn accuracy_table_csv(report: &EvalReport) -> String {
    let classes = report_classes(report);
    let mut out = String::from("class");
    for m in &report.monitors {
        out.push(',');
        out.push_str(&m.monitor);
    }
    out.push('\n');
    if report.monitors.is_empty() {
        return out;
    }
    out.push_str("ID");
    for m in &report.monitors {
        out.push(',');
        out.push_str(&rate(m.id_accuracy));
    }
    out.push('\n');
    for class in &classes {
        out.push_str(&class.path());
        for m in &report.monitors {
            out.push(',');
            match cell_of(m, class) {
                Some(c) => out.push_str(&rate(c.accuracy)),
                None => out.push_str("n/a"),
            }
        }
        out.push('\n');
    }
    out
}

/// AUROC table; Box (and any scoreless monitor) shows `n/a`.
pub fn auroc_table_csv(report: &EvalReport) -> String {
    let classes = report_classes(report);
    let mut out = String::from("class");
    for m in &report.monitors {
        out.push(',');
        out.push_str(&m.monitor);
    }
    out.push('\n');
    for class in &classes {
        out.push_str(&class.path());
        for m in &report.monitors {
            out.push(',');
            match cell_of(m, class).and_then(|c| c.auroc) {
                Some(a) => out.push_str(&rate(a)),
                None => out.push_str("n/a"),
            }
        }
        out.push('\n');
    }
    out
}

/// Rank table: `rank` integers 1..=3, `n/a` where no score exists.
pub fn rank_table_csv(table: &RankTable) -> String {
    let mut out = String::from("class");
    for m in &table.monitors {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (row, class) in table.cells.iter().zip(&table.classes) {
        out.push_str(&class.path());
        for cell in row {
            out.push(',');
            match cell {
                Some((_, rank)) => out.push_str(&rank.to_string()),
                None => out.push_str("n/a"),
            }
        }
        out.push('\n');
    }
    out
}

// JSON report schema (oodmon-report/1)

#[derive(Serialize, Deserialize)]
struct ReportFile {
    format: String,
    notes: Vec<String>,
    monitors: Vec<MonitorFile>,
}

#[derive(Serialize, Deserialize)]
struct MonitorFile {
    monitor: String,
    params: ParamAssignment,
    tau: Option<f64>,
    objective_value: Option<f64>,
    id_accuracy: f64,
    id_ci: (f64, f64),
    id_n: usize,
    classes: Vec<CellFile>,
}

#[derive(Serialize, Deserialize)]
struct CellFile {
    class: String,
    n: usize,
    accuracy: f64,
    accuracy_ci: (f64, f64),
    auroc: Option<f64>,
    auroc_ci: Option<(f64, f64)>,
}

pub fn report_to_json(report: &EvalReport) -> Result<String> {
    let file = ReportFile {
        format: REPORT_FORMAT.into(),
        notes: report.notes.clone(),
        monitors: report
            .monitors
            .iter()
            .map(|m| MonitorFile {
                monitor: m.monitor.clone(),
                params: m.params.clone(),
                tau: m.tau,
                objective_value: m.objective_value,
                id_accuracy: m.id_accuracy,
                id_ci: m.id_ci,
                id_n: m.id_n,
                classes: m
                    .classes
                    .iter()
                    .map(|c| CellFile {
                        class: c.class.path(),
                        n: c.n,
                        accuracy: c.accuracy,
                        accuracy_ci: c.accuracy_ci,
                        auroc: c.auroc,
                        auroc_ci: c.auroc_ci,
                    })
                    .collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn report_from_json(text: &str) -> Result<EvalReport> {
    let file: ReportFile = serde_json::from_str(text)?;
    if file.format != REPORT_FORMAT {
        return Err(Error::Invalid(format!(
            "unsupported report format {:?}, expected {REPORT_FORMAT:?}",
            file.format
        )));
    }
    let monitors = file
        .monitors
        .into_iter()
        .map(|m| {
            let classes = m
                .classes
                .into_iter()
                .map(|c| {
                    Ok(ClassCell {
                        class: OodClassId::parse(&c.class)?,
                        n: c.n,
                        accuracy: c.accuracy,
                        accuracy_ci: c.accuracy_ci,
                        auroc: c.auroc,
                        auroc_ci: c.auroc_ci,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MonitorReport {
                monitor: m.monitor,
                params: m.params,
                tau: m.tau,
                objective_value: m.objective_value,
                id_accuracy: m.id_accuracy,
                id_ci: m.id_ci,
                id_n: m.id_n,
                classes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        monitors,
        notes: file.notes,
    })
}

// SVG plots

const PALETTE: [&str; 20] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd",
    "#e6550d", "#31a354", "#756bb1", "#636363",
];

const W: f64 = 900.0;
const H: f64 = 520.0;
const MARGIN_X: f64 = 80.0;
const MARGIN_Y: f64 = 60.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    )
}

/// Parallel-coordinates plot: one vertical axis per class (ID first), one
/// polyline per monitor, accuracy on the y axis.
pub fn parallel_coords_svg(report: &EvalReport) -> String {
    let classes = report_classes(report);
    let mut axes: Vec<String> = vec!["ID".into()];
    axes.extend(classes.iter().map(|c| c.path()));
    let mut svg = svg_open("Detection accuracy per OOD class");
    let n_axes = axes.len().max(2);
    let x_of = |i: usize| MARGIN_X + (W - 2.0 * MARGIN_X) * i as f64 / (n_axes - 1) as f64;
    let y_of = |v: f64| H - MARGIN_Y - (H - 2.0 * MARGIN_Y) * v.clamp(0.0, 1.0);
    for (i, label) in axes.iter().enumerate() {
        let x = x_of(i);
        svg.push_str(&format!(
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#999\"/>\n",
            y_of(1.0),
            y_of(0.0)
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" transform=\"rotate(-35 {x:.2} {:.2})\">{label}</text>\n",
            H - MARGIN_Y + 16.0,
            H - MARGIN_Y + 16.0
        ));
    }
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{tick:.2}</text>\n",
            MARGIN_X - 8.0,
            y_of(tick) + 3.0
        ));
    }
    for (mi, m) in report.monitors.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        let mut points = vec![(x_of(0), y_of(m.id_accuracy))];
        for (ci, class) in classes.iter().enumerate() {
            if let Some(cell) = cell_of(m, class) {
                points.push((x_of(ci + 1), y_of(cell.accuracy)));
            }
        }
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        let ly = 40.0 + 14.0 * mi as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\">{}</text>\n",
            W - MARGIN_X + 14.0,
            ly - 8.0,
            W - MARGIN_X + 28.0,
            ly,
            m.monitor
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Weight-sweep table: weights, per-objective accuracies, ID accuracy.
pub fn pareto_csv(targets: &[OodClassId], points: &[ParetoPoint]) -> String {
    let mut out = String::new();
    for (i, _) in points.first().map(|p| p.weights.iter().enumerate()).into_iter().flatten() {
        out.push_str(&format!("w{i},"));
    }
    if points.is_empty() {
        out.push_str("id_accuracy\n");
        return out;
    }
    for t in targets {
        out.push_str(&format!("acc[{}],", t.path()));
    }
    out.push_str("id_accuracy\n");
    for p in points {
        for w in &p.weights {
            out.push_str(&rate(*w));
            out.push(',');
        }
        for a in &p.accuracies {
            out.push_str(&rate(*a));
            out.push(',');
        }
        out.push_str(&rate(p.id_accuracy));
        out.push('\n');
    }
    out
}

/// Scatter of the first two objectives; Pareto-front members are filled.
pub fn pareto_svg(targets: &[OodClassId], points: &[ParetoPoint], front: &[ParetoPoint]) -> String {
    let mut svg = svg_open("Weight sweep: per-objective detection accuracy");
    let x_of = |v: f64| MARGIN_X + (W - 2.0 * MARGIN_X) * v.clamp(0.0, 1.0);
    let y_of = |v: f64| H - MARGIN_Y - (H - 2.0 * MARGIN_Y) * v.clamp(0.0, 1.0);
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>\n",
        x_of(0.0),
        y_of(0.0),
        x_of(1.0),
        y_of(0.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333\"/>\n",
        x_of(0.0),
        y_of(0.0),
        x_of(0.0),
        y_of(1.0)
    ));
    let x_label = targets.first().map(|t| t.path()).unwrap_or_else(|| "objective 0".into());
    let y_label = targets.get(1).map(|t| t.path()).unwrap_or_else(|| "objective 1".into());
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{x_label}</text>\n",
        W / 2.0,
        H - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{y_label}</text>\n",
        H / 2.0,
        H / 2.0
    ));
    let on_front = |p: &ParetoPoint| front.iter().any(|f| f.accuracies == p.accuracies && f.weights == p.weights);
    for p in points {
        let x = x_of(p.accuracies.first().copied().unwrap_or(0.0));
        let y = y_of(p.accuracies.get(1).copied().unwrap_or(0.0));
        if on_front(p) {
            svg.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"{}\"/>\n",
                PALETTE[3]
            ));
        } else {
            svg.push_str(&format!(
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"none\" stroke=\"{}\"/>\n",
                PALETTE[0]
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::Z_95;

    fn small_report() -> EvalReport {
        let class = OodClassId::parse("Noise/Gaussian").unwrap();
        let cell = ClassCell {
            class,
            n: 50,
            accuracy: 0.8,
            accuracy_ci: crate::evaluate::proportion_ci(0.8, 50, Z_95),
            auroc: Some(0.9),
            auroc_ci: Some(crate::evaluate::auroc_ci(0.9, 50, 50, Z_95)),
        };
        EvalReport {
            monitors: vec![
                MonitorReport {
                    monitor: "Energy".into(),
                    params: ParamAssignment::new(),
                    tau: Some(1.0),
                    objective_value: Some(0.8),
                    id_accuracy: 0.75,
                    id_ci: (0.7, 0.8),
                    id_n: 100,
                    classes: vec![cell.clone()],
                },
                MonitorReport {
                    monitor: "Softmax".into(),
                    params: ParamAssignment::new(),
                    tau: Some(0.5),
                    objective_value: None,
                    id_accuracy: 0.7,
                    id_ci: (0.65, 0.75),
                    id_n: 100,
                    classes: vec![ClassCell { auroc: None, auroc_ci: None, ..cell }],
                },
            ],
            notes: vec!["note".into()],
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = accuracy_table_csv(&EvalReport::default());
        assert_eq!(csv, "class\n");
    }

    #[test]
    fn csv_has_id_row_and_rates() {
        let csv = accuracy_table_csv(&small_report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,Energy,Softmax");
        assert_eq!(lines[1], "ID,0.7500,0.7000");
        assert_eq!(lines[2], "Noise/Gaussian,0.8000,0.8000");
    }

    #[test]
    fn auroc_csv_marks_missing_as_na() {
        let csv = auroc_table_csv(&small_report());
        assert!(csv.contains("0.9000,n/a"));
    }

    #[test]
    fn json_round_trips() {
        let report = small_report();
        let text = report_to_json(&report).unwrap();
        let back = report_from_json(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn svg_has_one_polyline_per_monitor() {
        let mut report = small_report();
        for name in ["Box", "KNN"] {
            let mut extra = report.monitors[0].clone();
            extra.monitor = name.into();
            report.monitors.push(extra);
        }
        let svg = parallel_coords_svg(&report);
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // Self-contained: the only URL is the xmlns declaration.
        assert_eq!(svg.matches("http").count(), 1);
        assert!(svg.contains("xmlns"));
    }
}
