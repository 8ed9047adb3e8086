//! Fitted-monitor serialization: a JSON manifest with the fitted state packed
//! as little-endian f32 tensors behind a shape directory. Lets a monitor be
//! optimized once and evaluated later. f64 state (covariance factors, VIM
//! basis) is rounded to f32 on the way out.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{BoxRegion, FittedMonitor, MonitorKind, MonitorState, ParamAssignment};
use crate::error::{Error, Result};
use crate::tensor::{SpdFactor, Tensor};

const MONITOR_FORMAT: &str = "oodmon-monitor/1";

#[derive(Serialize, Deserialize)]
struct MonitorFile {
    format: String,
    kind: String,
    params: ParamAssignment,
    tau: Option<f64>,
    /// Shape directory: name → dims, in blob order.
    shapes: Vec<(String, Vec<usize>)>,
    /// Base64 of the concatenated little-endian f32 tensors.
    state_blob: String,
}

type Entries = Vec<(String, Vec<usize>, Vec<f32>)>;

fn encode_state(state: &MonitorState) -> Entries {
    let matrix = |rows: &[Vec<f32>]| -> (Vec<usize>, Vec<f32>) {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        (vec![rows.len(), d], rows.iter().flatten().copied().collect())
    };
    match state {
        MonitorState::Stateless => Vec::new(),
        MonitorState::React { clamp } => vec![("clamp".into(), vec![1], vec![*clamp as f32])],
        MonitorState::Dice { masked_w, bias } => vec![
            ("masked_w".into(), masked_w.shape().to_vec(), masked_w.data().to_vec()),
            ("bias".into(), bias.shape().to_vec(), bias.data().to_vec()),
        ],
        MonitorState::Knn { features } => {
            let (shape, data) = matrix(features);
            vec![("features".into(), shape, data)]
        }
        MonitorState::Mds { means, factor } => {
            let (ms, md) = matrix(means);
            vec![
                ("means".into(), ms, md),
                ("factor".into(), vec![factor.dim(), factor.dim()], factor.lower().iter().map(|&v| v as f32).collect()),
            ]
        }
        MonitorState::Mahalanobis { means, factor, global_mean, global_factor } => {
            let (ms, md) = matrix(means);
            vec![
                ("means".into(), ms, md),
                ("factor".into(), vec![factor.dim(), factor.dim()], factor.lower().iter().map(|&v| v as f32).collect()),
                ("global_mean".into(), vec![global_mean.len()], global_mean.clone()),
                (
                    "global_factor".into(),
                    vec![global_factor.dim(), global_factor.dim()],
                    global_factor.lower().iter().map(|&v| v as f32).collect(),
                ),
            ]
        }
        MonitorState::Gaussian { means, stds } => {
            let (ms, md) = matrix(means);
            let (ss, sd) = matrix(stds);
            vec![("means".into(), ms, md), ("stds".into(), ss, sd)]
        }
        MonitorState::Boxes { classes } => {
            let mut out = Vec::new();
            for (c, boxes) in classes.iter().enumerate() {
                let lo: Vec<Vec<f32>> = boxes.iter().map(|b| b.lo.clone()).collect();
                let hi: Vec<Vec<f32>> = boxes.iter().map(|b| b.hi.clone()).collect();
                let (ls, ld) = matrix(&lo);
                let (hs, hd) = matrix(&hi);
                out.push((format!("box_lo_{c}"), ls, ld));
                out.push((format!("box_hi_{c}"), hs, hd));
            }
            out
        }
        MonitorState::She { patterns } => {
            let (shape, data) = matrix(patterns);
            vec![("patterns".into(), shape, data)]
        }
        MonitorState::KlMatching { templates } => {
            let c = templates.len();
            let mask: Vec<f32> = templates.iter().map(|t| if t.is_some() { 1.0 } else { 0.0 }).collect();
            let mut rows = vec![0.0f32; c * c];
            for (i, t) in templates.iter().enumerate() {
                if let Some(t) = t {
                    for (j, &v) in t.iter().enumerate() {
                        rows[i * c + j] = v as f32;
                    }
                }
            }
            vec![("mask".into(), vec![c], mask), ("templates".into(), vec![c, c], rows)]
        }
        MonitorState::Vim { mean, basis, alpha } => {
            let basis32: Vec<Vec<f32>> = basis
                .iter()
                .map(|r| r.iter().map(|&v| v as f32).collect())
                .collect();
            let (bs, bd) = matrix(&basis32);
            vec![
                ("mean".into(), vec![mean.len()], mean.iter().map(|&v| v as f32).collect()),
                ("basis".into(), bs, bd),
                ("alpha".into(), vec![1], vec![*alpha as f32]),
            ]
        }
    }
}

fn decode_state(kind: MonitorKind, entries: &BTreeMap<String, (Vec<usize>, Vec<f32>)>) -> Result<MonitorState> {
    let get = |name: &str| -> Result<&(Vec<usize>, Vec<f32>)> {
        entries
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("monitor state missing tensor {name}")))
    };
    let rows = |name: &str| -> Result<Vec<Vec<f32>>> {
        let (shape, data) = get(name)?;
        if shape.len() != 2 {
            return Err(Error::Invalid(format!("state tensor {name} is not a matrix")));
        }
        Ok(data.chunks(shape[1].max(1)).map(|c| c.to_vec()).collect())
    };
    let factor = |name: &str| -> Result<SpdFactor> {
        let (shape, data) = get(name)?;
        SpdFactor::from_lower(shape[0], data.iter().map(|&v| v as f64).collect())
    };
    Ok(match kind {
        MonitorKind::Softmax
        | MonitorKind::Temperature
        | MonitorKind::MaxLogit
        | MonitorKind::Energy
        | MonitorKind::Entropy
        | MonitorKind::Odin
        | MonitorKind::GradNorm
        | MonitorKind::AshB
        | MonitorKind::AshP
        | MonitorKind::AshS => MonitorState::Stateless,
        MonitorKind::React => MonitorState::React {
            clamp: get("clamp")?.1[0] as f64,
        },
        MonitorKind::Dice => {
            let (ws, wd) = get("masked_w")?.clone();
            let (bs, bd) = get("bias")?.clone();
            MonitorState::Dice {
                masked_w: Tensor::new(ws, wd)?,
                bias: Tensor::new(bs, bd)?,
            }
        }
        MonitorKind::Knn => MonitorState::Knn { features: rows("features")? },
        MonitorKind::Mds => MonitorState::Mds {
            means: rows("means")?,
            factor: factor("factor")?,
        },
        MonitorKind::Mahalanobis => MonitorState::Mahalanobis {
            means: rows("means")?,
            factor: factor("factor")?,
            global_mean: get("global_mean")?.1.clone(),
            global_factor: factor("global_factor")?,
        },
        MonitorKind::Gaussian => MonitorState::Gaussian {
            means: rows("means")?,
            stds: rows("stds")?,
        },
        MonitorKind::Box => {
            let mut classes = Vec::new();
            for c in 0.. {
                let lo_name = format!("box_lo_{c}");
                if !entries.contains_key(&lo_name) {
                    break;
                }
                let lo = rows(&lo_name)?;
                let hi = rows(&format!("box_hi_{c}"))?;
                let boxes = lo
                    .into_iter()
                    .zip(hi)
                    .map(|(lo, hi)| BoxRegion { lo, hi })
                    .collect();
                classes.push(boxes);
            }
            MonitorState::Boxes { classes }
        }
        MonitorKind::She => MonitorState::She { patterns: rows("patterns")? },
        MonitorKind::KlMatching => {
            let mask = get("mask")?.1.clone();
            let templates = rows("templates")?;
            MonitorState::KlMatching {
                templates: mask
                    .iter()
                    .zip(templates)
                    .map(|(&m, t)| {
                        if m > 0.0 {
                            Some(t.iter().map(|&v| v as f64).collect())
                        } else {
                            None
                        }
                    })
                    .collect(),
            }
        }
        MonitorKind::Vim => MonitorState::Vim {
            mean: get("mean")?.1.iter().map(|&v| v as f64).collect(),
            basis: rows("basis")?
                .into_iter()
                .map(|r| r.into_iter().map(|v| v as f64).collect())
                .collect(),
            alpha: get("alpha")?.1[0] as f64,
        },
    })
}

/// Serialize a fitted monitor to its JSON manifest.
pub fn monitor_to_json(mon: &FittedMonitor) -> Result<String> {
    let entries = encode_state(&mon.state);
    let mut blob = Vec::new();
    let mut shapes = Vec::with_capacity(entries.len());
    for (name, shape, data) in entries {
        for v in &data {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        shapes.push((name, shape));
    }
    let file = MonitorFile {
        format: MONITOR_FORMAT.into(),
        kind: mon.kind.name().into(),
        params: mon.params.clone(),
        tau: mon.tau,
        shapes,
        state_blob: BASE64.encode(blob),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parse a fitted monitor from its JSON manifest.
pub fn monitor_from_json(text: &str) -> Result<FittedMonitor> {
    let file: MonitorFile = serde_json::from_str(text)?;
    if file.format != MONITOR_FORMAT {
        return Err(Error::Invalid(format!(
            "unsupported monitor format {:?}, expected {MONITOR_FORMAT:?}",
            file.format
        )));
    }
    let kind = MonitorKind::parse(&file.kind)?;
    let blob = BASE64
        .decode(&file.state_blob)
        .map_err(|e| Error::Invalid(format!("state_blob: {e}")))?;
    let mut entries = BTreeMap::new();
    let mut offset = 0usize;
    for (name, shape) in file.shapes {
        let count: usize = shape.iter().product();
        let bytes = blob
            .get(offset..offset + count * 4)
            .ok_or_else(|| Error::Invalid("state_blob shorter than shape directory".into()))?;
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += count * 4;
        entries.insert(name, (shape, data));
    }
    if offset != blob.len() {
        return Err(Error::Invalid("state_blob longer than shape directory".into()));
    }
    let state = decode_state(kind, &entries)?;
    Ok(FittedMonitor {
        kind,
        params: file.params,
        state,
        tau: file.tau,
    })
}

pub fn save_monitor(mon: &FittedMonitor, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, monitor_to_json(mon)?)?;
    Ok(())
}

pub fn load_monitor(path: impl AsRef<Path>) -> Result<FittedMonitor> {
    monitor_from_json(&std::fs::read_to_string(path)?)
}
