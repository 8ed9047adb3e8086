//! The run configuration file: a TOML-like key/value format.
//!
//! Grammar (one entry per line, `#` starts a comment):
//!
//! ```text
//! key = value
//! key      := segment ('.' segment)*
//! segment  := [A-Za-z0-9_-]+ | "quoted text"     (quotes allow '/' and '.')
//! value    := "string" | integer | float | true | false | [ value, ... ]
//! ```
//!
//! Dotted keys group related settings (`dataset.synth.classes`); quoted
//! segments carry OOD class paths (`intensity."Noise/Gaussian" = 0.25`).
//! Command-line flags override file keys of the same name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oodmon_core::data::OodClassId;
use oodmon_core::monitors::MonitorKind;
use oodmon_core::optimize::GdConfig;

use crate::diag::{suggest, Diagnostic};

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigValue {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    List(Vec<ConfigValue>),
}

impl ConfigValue {
    fn type_name(&self) -> &'static str {
        match self {
            ConfigValue::Str(_) => "string",
            ConfigValue::Int(_) => "integer",
            ConfigValue::Float(_) => "float",
            ConfigValue::Bool(_) => "boolean",
            ConfigValue::List(_) => "list",
        }
    }
}

/// Parsed key/value file with per-key line numbers.
#[derive(Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (ConfigValue, usize)>,
}

fn parse_scalar(token: &str, line: usize, diags: &mut Vec<Diagnostic>) -> Option<ConfigValue> {
    let token = token.trim();
    if token.starts_with('"') {
        if token.len() >= 2 && token.ends_with('"') {
            return Some(ConfigValue::Str(token[1..token.len() - 1].to_string()));
        }
        diags.push(Diagnostic::new("<syntax>", Some(line), "unterminated string"));
        return None;
    }
    match token {
        "true" => return Some(ConfigValue::Bool(true)),
        "false" => return Some(ConfigValue::Bool(false)),
        _ => {}
    }
    if !token.contains(['.', 'e', 'E']) {
        if let Ok(v) = token.parse::<i64>() {
            return Some(ConfigValue::Int(v));
        }
    }
    if let Ok(v) = token.parse::<f64>() {
        return Some(ConfigValue::Float(v));
    }
    diags.push(Diagnostic::new(
        "<syntax>",
        Some(line),
        format!("cannot parse value {token:?}"),
    ));
    None
}

fn parse_value(text: &str, line: usize, diags: &mut Vec<Diagnostic>) -> Option<ConfigValue> {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('[') {
        let inner = match inner.strip_suffix(']') {
            Some(i) => i,
            None => {
                diags.push(Diagnostic::new("<syntax>", Some(line), "unterminated list"));
                return None;
            }
        };
        let mut items = Vec::new();
        // Split on commas outside quotes.
        let mut depth_quote = false;
        let mut start = 0usize;
        let bytes = inner.as_bytes();
        for (i, &b) in bytes.iter().enumerate() {
            match b {
                b'"' => depth_quote = !depth_quote,
                b',' if !depth_quote => {
                    let piece = &inner[start..i];
                    if !piece.trim().is_empty() {
                        items.push(parse_scalar(piece, line, diags)?);
                    }
                    start = i + 1;
                }
                _ => {}
            }
        }
        let last = &inner[start..];
        if !last.trim().is_empty() {
            items.push(parse_scalar(last, line, diags)?);
        }
        return Some(ConfigValue::List(items));
    }
    parse_scalar(text, line, diags)
}

/// Key segments: bare identifiers or quoted strings, joined by dots.
fn parse_key(text: &str, line: usize, diags: &mut Vec<Diagnostic>) -> Option<String> {
    let text = text.trim();
    let mut out = String::new();
    let mut chars = text.chars().peekable();
    let mut first = true;
    while chars.peek().is_some() {
        if !first {
            if chars.next() != Some('.') {
                diags.push(Diagnostic::new("<syntax>", Some(line), format!("malformed key {text:?}")));
                return None;
            }
            out.push('.');
        }
        first = false;
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut seg = String::new();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(c) => seg.push(c),
                    None => {
                        diags.push(Diagnostic::new("<syntax>", Some(line), "unterminated quoted key segment"));
                        return None;
                    }
                }
            }
            out.push_str(&seg);
        } else {
            let mut seg = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                    seg.push(c);
                    chars.next();
                } else {
                    break;
                }
            }
            if seg.is_empty() {
                diags.push(Diagnostic::new("<syntax>", Some(line), format!("malformed key {text:?}")));
                return None;
            }
            out.push_str(&seg);
        }
    }
    if out.is_empty() {
        diags.push(Diagnostic::new("<syntax>", Some(line), "empty key"));
        return None;
    }
    Some(out)
}

/// Strip a trailing comment that is outside quotes.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, Vec<Diagnostic>> {
        let mut entries = BTreeMap::new();
        let mut diags = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key_text, value_text)) = line.split_once('=') else {
                diags.push(Diagnostic::new("<syntax>", Some(line_no), format!("expected `key = value`, got {line:?}")));
                continue;
            };
            let Some(key) = parse_key(key_text, line_no, &mut diags) else {
                continue;
            };
            let Some(value) = parse_value(value_text, line_no, &mut diags) else {
                continue;
            };
            if entries.insert(key.clone(), (value, line_no)).is_some() {
                diags.push(Diagnostic::new(key, Some(line_no), "duplicate key"));
            }
        }
        if diags.is_empty() {
            Ok(RawConfig { entries })
        } else {
            Err(diags)
        }
    }

    pub fn get(&self, key: &str) -> Option<&(ConfigValue, usize)> {
        self.entries.get(key)
    }

    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.entries.get(key).map(|(_, l)| *l)
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a ConfigValue, usize)> {
        self.entries
            .iter()
            .filter(move |(k, _)| k.starts_with(prefix))
            .map(move |(k, (v, l))| (&k[prefix.len()..], v, *l))
    }

    pub fn contains_prefix(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }
}

/// Where the in-distribution data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Path(PathBuf),
    Synth {
        classes: usize,
        per_class: usize,
        channels: usize,
        height: usize,
        width: usize,
        separation: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MonitorSelection {
    All,
    List(Vec<MonitorKind>),
}

impl MonitorSelection {
    pub fn kinds(&self) -> Vec<MonitorKind> {
        match self {
            MonitorSelection::All => MonitorKind::all().to_vec(),
            MonitorSelection::List(list) => list.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodConfig {
    None,
    Random { trials: usize },
    Grid { splits: usize },
    Gradient(GdConfig),
}

#[derive(Debug, Clone)]
pub struct OptimizeSection {
    pub method: MethodConfig,
    pub objective_classes: Vec<OodClassId>,
    pub weights: Option<Vec<f64>>,
    pub min_id_accuracy: f64,
    /// Weight combinations for the multi-objective sweep; `None` disables it.
    pub combos: Option<usize>,
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: PathBuf,
    pub dataset: DatasetSource,
    pub monitors: MonitorSelection,
    pub collected: Vec<(OodClassId, PathBuf)>,
    pub intensities: BTreeMap<OodClassId, f64>,
    pub optimize: OptimizeSection,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
}

/// Command-line overrides applied on top of file keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

struct Reader<'a> {
    raw: &'a RawConfig,
    base: &'a Path,
    diags: Vec<Diagnostic>,
}

impl<'a> Reader<'a> {
    fn str_at(&mut self, key: &str) -> Option<String> {
        match self.raw.get(key) {
            Some((ConfigValue::Str(s), _)) => Some(s.clone()),
            Some((other, line)) => {
                self.diags.push(Diagnostic::new(key, Some(*line), format!("expected string, found {}", other.type_name())));
                None
            }
            None => None,
        }
    }

    fn f64_at(&mut self, key: &str) -> Option<f64> {
        match self.raw.get(key) {
            Some((ConfigValue::Float(v), _)) => Some(*v),
            Some((ConfigValue::Int(v), _)) => Some(*v as f64),
            Some((other, line)) => {
                self.diags.push(Diagnostic::new(key, Some(*line), format!("expected number, found {}", other.type_name())));
                None
            }
            None => None,
        }
    }

    fn usize_at(&mut self, key: &str) -> Option<usize> {
        match self.raw.get(key) {
            Some((ConfigValue::Int(v), line)) => {
                if *v < 0 {
                    self.diags.push(Diagnostic::new(key, Some(*line), "must be non-negative"));
                    None
                } else {
                    Some(*v as usize)
                }
            }
            Some((other, line)) => {
                self.diags.push(Diagnostic::new(key, Some(*line), format!("expected integer, found {}", other.type_name())));
                None
            }
            None => None,
        }
    }

    fn path_at(&mut self, key: &str) -> Option<PathBuf> {
        self.str_at(key).map(|s| {
            let p = PathBuf::from(&s);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }

    fn err(&mut self, key: &str, message: impl Into<String>) {
        let line = self.raw.line_of(key);
        self.diags.push(Diagnostic::new(key, line, message));
    }
}

const DEFAULT_MIN_ID_ACCURACY: f64 = 0.7;

/// Validate a raw config into a [`RunConfig`], collecting every failure.
/// Relative paths resolve against the config file's directory.
pub fn resolve_config(raw: &RawConfig, base: &Path, overrides: &Overrides) -> Result<RunConfig, Vec<Diagnostic>> {
    let mut r = Reader {
        raw,
        base,
        diags: Vec::new(),
    };

    let network = r.path_at("network");
    if network.is_none() && !r.diags.iter().any(|d| d.key == "network") {
        r.err("network", "missing (path to an oodmon-net/1 JSON file)");
    }

    let dataset = if raw.get("dataset.path").is_some() {
        r.path_at("dataset.path").map(DatasetSource::Path)
    } else if raw.contains_prefix("dataset.synth.") {
        let classes = r.usize_at("dataset.synth.classes").unwrap_or(3);
        let per_class = r.usize_at("dataset.synth.per_class").unwrap_or(200);
        let channels = r.usize_at("dataset.synth.channels").unwrap_or(1);
        let height = r.usize_at("dataset.synth.height").unwrap_or(8);
        let width = r.usize_at("dataset.synth.width").unwrap_or(8);
        let separation = r.f64_at("dataset.synth.separation").unwrap_or(0.8);
        Some(DatasetSource::Synth {
            classes,
            per_class,
            channels,
            height,
            width,
            separation,
        })
    } else {
        r.err("dataset.path", "missing (set dataset.path or dataset.synth.*)");
        None
    };

    let monitors = match raw.get("monitors") {
        None => Some(MonitorSelection::All),
        Some((ConfigValue::Str(s), line)) if s == "all" => {
            let _ = line;
            Some(MonitorSelection::All)
        }
        Some((ConfigValue::Str(s), line)) => {
            match MonitorKind::parse(s) {
                Ok(k) => Some(MonitorSelection::List(vec![k])),
                Err(_) => {
                    let known: Vec<&str> = MonitorKind::all().iter().map(|k| k.name()).collect();
                    let hint = suggest(s, known.iter().copied())
                        .map(|c| format!(" (did you mean {c}?)"))
                        .unwrap_or_default();
                    r.diags.push(Diagnostic::new(
                        "monitors",
                        Some(*line),
                        format!("unknown monitor {s:?}{hint}; known kinds: {}", known.join(", ")),
                    ));
                    None
                }
            }
        }
        Some((ConfigValue::List(items), line)) => {
            let mut kinds = Vec::new();
            let mut ok = true;
            for item in items {
                match item {
                    ConfigValue::Str(s) => match MonitorKind::parse(s) {
                        Ok(k) => kinds.push(k),
                        Err(_) => {
                            ok = false;
                            let known: Vec<&str> = MonitorKind::all().iter().map(|k| k.name()).collect();
                            let hint = suggest(s, known.iter().copied())
                                .map(|c| format!(" (did you mean {c}?)"))
                                .unwrap_or_default();
                            r.diags.push(Diagnostic::new(
                                "monitors",
                                Some(*line),
                                format!("unknown monitor {s:?}{hint}; known kinds: {}", known.join(", ")),
                            ));
                        }
                    },
                    other => {
                        ok = false;
                        r.diags.push(Diagnostic::new(
                            "monitors",
                            Some(*line),
                            format!("expected monitor name string, found {}", other.type_name()),
                        ));
                    }
                }
            }
            if ok && kinds.is_empty() {
                r.diags.push(Diagnostic::new("monitors", Some(*line), "empty monitor list"));
                ok = false;
            }
            ok.then_some(MonitorSelection::List(kinds))
        }
        Some((other, line)) => {
            r.diags.push(Diagnostic::new(
                "monitors",
                Some(*line),
                format!("expected \"all\" or a list of names, found {}", other.type_name()),
            ));
            None
        }
    };

    let mut collected = Vec::new();
    let collected_entries: Vec<(String, ConfigValue, usize)> = raw
        .keys_with_prefix("collected.")
        .map(|(k, v, l)| (k.to_string(), v.clone(), l))
        .collect();
    for (class_path, value, line) in collected_entries {
        let key = format!("collected.{class_path}");
        match (OodClassId::parse(&class_path), value) {
            (Ok(class), ConfigValue::Str(path)) => {
                if class.generated() {
                    r.diags.push(Diagnostic::new(
                        &key,
                        Some(line),
                        "collected entries must use a collected family (UnseenObject, UnseenEnvironment, NewWorld)",
                    ));
                } else {
                    let p = PathBuf::from(&path);
                    collected.push((class, if p.is_absolute() { p } else { base.join(p) }));
                }
            }
            (Err(e), _) => r.diags.push(Diagnostic::new(&key, Some(line), e.to_string())),
            (_, other) => r.diags.push(Diagnostic::new(
                &key,
                Some(line),
                format!("expected dataset path string, found {}", other.type_name()),
            )),
        }
    }
    collected.sort_by(|a, b| a.0.cmp(&b.0));

    let mut intensities = BTreeMap::new();
    let intensity_entries: Vec<(String, ConfigValue, usize)> = raw
        .keys_with_prefix("intensity.")
        .map(|(k, v, l)| (k.to_string(), v.clone(), l))
        .collect();
    for (class_path, value, line) in intensity_entries {
        let key = format!("intensity.{class_path}");
        match (OodClassId::parse(&class_path), value) {
            (Ok(class), ConfigValue::Float(v)) => {
                intensities.insert(class, v);
            }
            (Ok(class), ConfigValue::Int(v)) => {
                intensities.insert(class, v as f64);
            }
            (Err(e), _) => r.diags.push(Diagnostic::new(&key, Some(line), e.to_string())),
            (_, other) => r.diags.push(Diagnostic::new(
                &key,
                Some(line),
                format!("expected intensity number, found {}", other.type_name()),
            )),
        }
    }

    let method = match r.str_at("optimize.method").as_deref() {
        None | Some("none") => MethodConfig::None,
        Some("random") => MethodConfig::Random {
            trials: r.usize_at("optimize.trials").unwrap_or(100),
        },
        Some("grid") => MethodConfig::Grid {
            splits: r.usize_at("optimize.splits").unwrap_or(50),
        },
        Some("gradient") => {
            let defaults = GdConfig::default();
            MethodConfig::Gradient(GdConfig {
                steps: r.usize_at("optimize.steps").unwrap_or(defaults.steps),
                lr: r.f64_at("optimize.lr").unwrap_or(defaults.lr),
                fd_step: r.f64_at("optimize.fd_step").unwrap_or(defaults.fd_step),
                sigmoid_beta: r.f64_at("optimize.beta").unwrap_or(defaults.sigmoid_beta),
            })
        }
        Some(other) => {
            r.err(
                "optimize.method",
                format!("unknown method {other:?}; known: none, random, grid, gradient"),
            );
            MethodConfig::None
        }
    };

    let mut objective_classes = Vec::new();
    match raw.get("optimize.objective") {
        None => {}
        Some((ConfigValue::List(items), line)) => {
            for item in items {
                match item {
                    ConfigValue::Str(s) => match OodClassId::parse(s) {
                        Ok(c) => objective_classes.push(c),
                        Err(e) => r.diags.push(Diagnostic::new("optimize.objective", Some(*line), e.to_string())),
                    },
                    other => r.diags.push(Diagnostic::new(
                        "optimize.objective",
                        Some(*line),
                        format!("expected class path string, found {}", other.type_name()),
                    )),
                }
            }
        }
        Some((ConfigValue::Str(s), line)) => match OodClassId::parse(s) {
            Ok(c) => objective_classes.push(c),
            Err(e) => r.diags.push(Diagnostic::new("optimize.objective", Some(*line), e.to_string())),
        },
        Some((other, line)) => r.diags.push(Diagnostic::new(
            "optimize.objective",
            Some(*line),
            format!("expected class list, found {}", other.type_name()),
        )),
    }

    let weights = match raw.get("optimize.weights") {
        None => None,
        Some((ConfigValue::List(items), line)) => {
            let mut out = Vec::new();
            for item in items {
                match item {
                    ConfigValue::Float(v) => out.push(*v),
                    ConfigValue::Int(v) => out.push(*v as f64),
                    other => r.diags.push(Diagnostic::new(
                        "optimize.weights",
                        Some(*line),
                        format!("expected number, found {}", other.type_name()),
                    )),
                }
            }
            Some(out)
        }
        Some((other, line)) => {
            r.diags.push(Diagnostic::new(
                "optimize.weights",
                Some(*line),
                format!("expected list of numbers, found {}", other.type_name()),
            ));
            None
        }
    };

    let min_id_accuracy = r.f64_at("optimize.min_id_accuracy").unwrap_or(DEFAULT_MIN_ID_ACCURACY);
    if !(min_id_accuracy > 0.0 && min_id_accuracy <= 1.0) {
        r.err("optimize.min_id_accuracy", "must lie in (0, 1]");
    }
    let combos = r.usize_at("optimize.combos");

    let seed = overrides.seed.or_else(|| r.usize_at("seed").map(|v| v as u64)).unwrap_or(0);
    let out = overrides
        .out
        .clone()
        .or_else(|| r.path_at("out"))
        .unwrap_or_else(|| base.join("out"));
    let jobs = overrides.jobs.or_else(|| r.usize_at("jobs")).unwrap_or(1).max(1);

    if r.diags.is_empty() {
        Ok(RunConfig {
            network: network.expect("validated"),
            dataset: dataset.expect("validated"),
            monitors: monitors.expect("validated"),
            collected,
            intensities,
            optimize: OptimizeSection {
                method,
                objective_classes,
                weights,
                min_id_accuracy,
                combos,
            },
            seed,
            out,
            jobs,
        })
    } else {
        Err(r.diags)
    }
}

/// Parse and resolve a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("<config>", None, format!("cannot read {}: {e}", path.display()))])?;
    let raw = RawConfig::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_config(&raw, base, overrides)
}
