//! Run configuration: TOML text in, validated [`RunConfig`] out.
//!
//! Every quantity is in the repo's units (k0 = 1, γ0 = 1). A value may be a
//! bare number or a string with the unit spelled out, e.g. `"1000 /k0"`,
//! `"5 gamma0"`, `"25 /gamma0"`, `"0.002 k0^3"`.

use std::collections::BTreeMap;
use std::fmt;

use toml::de::{DeTable, DeValue};
use wgqed_core::ensemble::SamplingSpec;
use wgqed_core::waveguide::{TruncationPolicy, WaveguideGeometry};

pub const UNITS: &str = "lengths in 1/k0, detunings and rates in gamma0, times in 1/gamma0, densities in k0^3";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Dynamics,
    Steady,
    Spectrum,
    Sweep,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Dynamics, Experiment::Steady, Experiment::Spectrum, Experiment::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Dynamics => "dynamics",
            Experiment::Steady => "steady",
            Experiment::Spectrum => "spectrum",
            Experiment::Sweep => "sweep",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atoms {
    /// One fixed configuration.
    Explicit(Vec<[f64; 3]>),
    /// Random configurations; `seed` is filled from the top level.
    Sampled(SamplingSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec {
    /// 1-based, as in the output column labels.
    pub initial_atom: usize,
    pub initial_sublevel: i32,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub deltas: Vec<f64>,
    pub source_sublevel: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBins {
    pub shift_bins: usize,
    pub decay_bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub b: Vec<f64>,
    pub lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub geometry: WaveguideGeometry,
    pub atoms: Atoms,
    pub dynamics: Option<DynamicsSpec>,
    pub probe: Option<ProbeSpec>,
    pub profile: Option<ProfileSpec>,
    pub histogram: Option<HistogramBins>,
    pub sweep: Option<SweepSpec>,
    pub evanescent: bool,
    pub self_shift: bool,
    pub truncation: TruncationPolicy,
    pub output: Option<String>,
}

impl RunConfig {
    /// Sampling spec with the run seed applied.
    pub fn sampling(&self) -> Option<SamplingSpec> {
        match &self.atoms {
            Atoms::Sampled(s) => Some(SamplingSpec { seed: self.seed, ..s.clone() }),
            Atoms::Explicit(_) => None,
        }
    }

    /// Canonical TOML form. Parsing it gives back the same config and
    /// echoing again gives the same text.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(&s);
            out.push('\n');
        };
        line(format!("experiment = \"{}\"", self.experiment));
        line(format!("seed = {}", self.seed));
        if let Some(o) = &self.output {
            line(format!("output = {}", quote(o)));
        }
        line(String::new());
        line("[geometry]".into());
        line(format!("a = {}", num(self.geometry.a())));
        line(format!("b = {}", num(self.geometry.b())));
        line(String::new());
        line("[atoms]".into());
        match &self.atoms {
            Atoms::Explicit(p) => line(format!("positions = {}", points(p))),
            Atoms::Sampled(s) => {
                if let Some(n) = s.n_atoms {
                    line(format!("n_atoms = {n}"));
                }
                if let Some(d) = s.density {
                    line(format!("density = {}", num(d)));
                }
                if let Some(l) = s.length {
                    line(format!("length = {}", num(l)));
                }
                line(format!("trials = {}", s.trials));
                if !s.pinned.is_empty() {
                    line(format!("pinned = {}", points(&s.pinned)));
                }
            }
        }
        if let Some(d) = &self.dynamics {
            line(String::new());
            line("[dynamics]".into());
            line(format!("initial_atom = {}", d.initial_atom));
            line(format!("initial_sublevel = {}", d.initial_sublevel));
            line(format!("t_max = {}", num(d.t_max)));
            line(format!("points = {}", d.points));
        }
        if let Some(p) = &self.probe {
            line(String::new());
            line("[probe]".into());
            line(format!("deltas = {}", list(&p.deltas)));
            line(format!("source_sublevel = {}", p.source_sublevel));
        }
        if let Some(p) = &self.profile {
            line(String::new());
            line("[profile]".into());
            line(format!("delta = {}", num(p.delta)));
        }
        if let Some(h) = &self.histogram {
            line(String::new());
            line("[histogram]".into());
            line(format!("shift_bins = {}", h.shift_bins));
            line(format!("decay_bins = {}", h.decay_bins));
        }
        if let Some(s) = &self.sweep {
            line(String::new());
            line("[sweep]".into());
            line(format!("b = {}", list(&s.b)));
            if let Some(l) = &s.lengths {
                line(format!("lengths = {}", list(l)));
            }
        }
        line(String::new());
        line("[model]".into());
        line(format!("evanescent = {}", self.evanescent));
        line(format!("self_shift = {}", self.self_shift));
        line(String::new());
        line("[truncation]".into());
        line(format!("attenuation_budget = {}", num(self.truncation.attenuation_budget)));
        line(format!("min_separation = {}", num(self.truncation.min_separation)));
        line(format!("max_index = {}", self.truncation.max_index));
        out
    }
}

/// Shortest text that reads back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn list(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(", "))
}

fn points(v: &[[f64; 3]]) -> String {
    format!("[{}]", v.iter().map(|p| list(p)).collect::<Vec<_>>().join(", "))
}

fn quote(s: &str) -> String {
    let mut q = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

/// One problem in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Every problem found in one pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", lines.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    None,
    Length,
    Detuning,
    Time,
    Density,
}

impl Dim {
    fn suffixes(self) -> &'static [&'static str] {
        match self {
            Dim::None => &[],
            Dim::Length => &["/k0", "k0^-1"],
            Dim::Detuning => &["gamma0"],
            Dim::Time => &["/gamma0", "gamma0^-1"],
            Dim::Density => &["k0^3"],
        }
    }

    fn describe(self) -> String {
        match self {
            Dim::None => "a plain number".into(),
            _ => format!("a number or a string with unit {}", self.suffixes().join(" or ")),
        }
    }
}

#[derive(Debug, Clone)]
enum Raw {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Array(Vec<Node>),
    Table(BTreeMap<String, Entry>),
    Other,
}

#[derive(Debug, Clone)]
struct Node {
    line: usize,
    raw: Raw,
}

#[derive(Debug, Clone)]
struct Entry {
    key_line: usize,
    value: Node,
}

struct Lines {
    starts: Vec<usize>,
}

impl Lines {
    fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        Self { starts }
    }

    fn line(&self, offset: usize) -> usize {
        self.starts.partition_point(|&s| s <= offset)
    }
}

fn convert(value: &toml::Spanned<DeValue<'_>>, lines: &Lines) -> Node {
    let line = lines.line(value.span().start);
    let raw = match value.get_ref() {
        DeValue::Integer(i) => i64::from_str_radix(i.as_str(), i.radix()).map(Raw::Int).unwrap_or(Raw::Other),
        DeValue::Float(f) => f.as_str().parse::<f64>().map(Raw::Float).unwrap_or(Raw::Other),
        DeValue::String(s) => Raw::Str(s.to_string()),
        DeValue::Boolean(b) => Raw::Bool(*b),
        DeValue::Array(a) => Raw::Array(a.iter().map(|v| convert(v, lines)).collect()),
        DeValue::Table(t) => Raw::Table(convert_table(t, lines)),
        DeValue::Datetime(_) => Raw::Other,
    };
    Node { line, raw }
}

fn convert_table(t: &DeTable<'_>, lines: &Lines) -> BTreeMap<String, Entry> {
    t.iter()
        .map(|(k, v)| (k.get_ref().to_string(), Entry { key_line: lines.line(k.span().start), value: convert(v, lines) }))
        .collect()
}

struct Reader {
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn issue(&mut self, line: Option<usize>, message: impl Into<String>) {
        self.issues.push(ConfigIssue { line, message: message.into() });
    }

    fn missing(&mut self, key: &str) {
        self.issue(None, format!("missing required key `{key}`"));
    }

    fn check_keys(&mut self, section: &str, table: &BTreeMap<String, Entry>, allowed: &[&str]) {
        for (k, e) in table {
            if !allowed.contains(&k.as_str()) {
                let place = if section.is_empty() { "at top level".to_string() } else { format!("in [{section}]") };
                self.issue(Some(e.key_line), format!("unknown key `{k}` {place} (allowed: {})", allowed.join(", ")));
            }
        }
    }

    fn section<'t>(&mut self, top: &'t BTreeMap<String, Entry>, name: &str) -> Option<&'t BTreeMap<String, Entry>> {
        let e = top.get(name)?;
        match &e.value.raw {
            Raw::Table(t) => Some(t),
            _ => {
                self.issue(Some(e.key_line), format!("`{name}` must be a table ([{name}])"));
                None
            }
        }
    }

    fn number(&mut self, node: &Node, key: &str, dim: Dim) -> Option<f64> {
        let value = match &node.raw {
            Raw::Int(i) => Some(*i as f64),
            Raw::Float(f) => Some(*f),
            Raw::Str(s) => {
                let s = s.trim();
                let split = s.find(|c: char| c.is_whitespace()).unwrap_or(s.len());
                let (head, unit) = (s[..split].trim(), s[split..].trim());
                match head.parse::<f64>() {
                    Err(_) => {
                        self.issue(Some(node.line), format!("`{key}` = \"{s}\" is not a number"));
                        return None;
                    }
                    Ok(v) if unit.is_empty() => Some(v),
                    Ok(v) if dim.suffixes().contains(&unit) => Some(v),
                    Ok(_) => {
                        self.issue(
                            Some(node.line),
                            format!("unit-suffix misuse: `{key}` = \"{s}\"; `{key}` takes {}", dim.describe()),
                        );
                        return None;
                    }
                }
            }
            _ => None,
        };
        match value {
            Some(v) if v.is_finite() => Some(v),
            Some(_) => {
                self.issue(Some(node.line), format!("`{key}` must be finite"));
                None
            }
            None => {
                self.issue(Some(node.line), format!("`{key}` must be {}", dim.describe()));
                None
            }
        }
    }

    fn get_number(&mut self, t: &BTreeMap<String, Entry>, key: &str, dim: Dim) -> Option<f64> {
        let e = t.get(key)?;
        self.number(&e.value, key, dim)
    }

    fn positive(&mut self, t: &BTreeMap<String, Entry>, key: &str, dim: Dim) -> Option<f64> {
        let v = self.get_number(t, key, dim)?;
        if v > 0.0 {
            Some(v)
        } else {
            self.issue(Some(t[key].value.line), format!("`{key}` must be positive, got {v}"));
            None
        }
    }

    fn integer(&mut self, t: &BTreeMap<String, Entry>, key: &str, min: i64, max: i64) -> Option<i64> {
        let e = t.get(key)?;
        match e.value.raw {
            Raw::Int(i) if (min..=max).contains(&i) => Some(i),
            Raw::Int(i) => {
                self.issue(Some(e.value.line), format!("`{key}` = {i} is outside [{min}, {max}]"));
                None
            }
            _ => {
                self.issue(Some(e.value.line), format!("`{key}` must be an integer"));
                None
            }
        }
    }

    fn boolean(&mut self, t: &BTreeMap<String, Entry>, key: &str) -> Option<bool> {
        let e = t.get(key)?;
        match e.value.raw {
            Raw::Bool(b) => Some(b),
            _ => {
                self.issue(Some(e.value.line), format!("`{key}` must be true or false"));
                None
            }
        }
    }

    fn string(&mut self, t: &BTreeMap<String, Entry>, key: &str) -> Option<String> {
        let e = t.get(key)?;
        match &e.value.raw {
            Raw::Str(s) => Some(s.clone()),
            _ => {
                self.issue(Some(e.value.line), format!("`{key}` must be a string"));
                None
            }
        }
    }

    fn numbers(&mut self, t: &BTreeMap<String, Entry>, key: &str, dim: Dim) -> Option<Vec<f64>> {
        let e = t.get(key)?;
        match &e.value.raw {
            Raw::Array(items) if !items.is_empty() => {
                let values: Vec<Option<f64>> = items.iter().map(|n| self.number(n, key, dim)).collect();
                values.into_iter().collect()
            }
            _ => {
                self.issue(Some(e.value.line), format!("`{key}` must be a non-empty array of numbers"));
                None
            }
        }
    }

    fn sublevel(&mut self, t: &BTreeMap<String, Entry>, key: &str) -> Option<i32> {
        self.integer(t, key, -1, 1).map(|m| m as i32)
    }

    fn triples(&mut self, t: &BTreeMap<String, Entry>, key: &str) -> Option<Vec<[f64; 3]>> {
        let e = t.get(key)?;
        let Raw::Array(items) = &e.value.raw else {
            self.issue(Some(e.value.line), format!("`{key}` must be an array of [x, y, z] triples"));
            return None;
        };
        let mut out = Vec::new();
        let mut ok = true;
        for item in items {
            match &item.raw {
                Raw::Array(xyz) if xyz.len() == 3 => {
                    let p: Vec<Option<f64>> = xyz.iter().map(|n| self.number(n, key, Dim::Length)).collect();
                    match p.as_slice() {
                        [Some(x), Some(y), Some(z)] => out.push([*x, *y, *z]),
                        _ => ok = false,
                    }
                }
                _ => {
                    self.issue(Some(item.line), format!("each entry of `{key}` must be an [x, y, z] triple"));
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }
}

const TOP_KEYS: &[&str] = &["experiment", "seed", "output", "geometry", "atoms", "dynamics", "probe", "profile", "histogram", "sweep", "model", "truncation"];

/// Parses and validates a config. All problems are reported together.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let lines = Lines::new(text);
    let doc = match DeTable::parse(text) {
        Ok(d) => d,
        Err(e) => {
            let line = e.span().map(|s| lines.line(s.start));
            let message = e.message().to_string();
            return Err(ConfigError { issues: vec![ConfigIssue { line, message: format!("TOML syntax: {message}") }] });
        }
    };
    let top = convert_table(doc.get_ref(), &lines);
    let mut r = Reader { issues: Vec::new() };
    r.check_keys("", &top, TOP_KEYS);

    let experiment = match top.get("experiment") {
        None => {
            r.missing("experiment");
            None
        }
        Some(e) => match &e.value.raw {
            Raw::Str(s) => match Experiment::parse(s) {
                Some(x) => Some(x),
                None => {
                    r.issue(Some(e.value.line), format!("unknown experiment \"{s}\" (dynamics, steady, spectrum or sweep)"));
                    None
                }
            },
            _ => {
                r.issue(Some(e.value.line), "`experiment` must be a string");
                None
            }
        },
    };
    let seed = match top.get("seed") {
        None => Some(0),
        Some(e) => match e.value.raw {
            Raw::Int(i) if i >= 0 => Some(i as u64),
            _ => {
                r.issue(Some(e.value.line), "`seed` must be a non-negative integer");
                None
            }
        },
    };
    let output = r.string(&top, "output");

    // geometry
    let geometry = match r.section(&top, "geometry") {
        None => {
            if !top.contains_key("geometry") {
                r.missing("geometry.a");
                r.missing("geometry.b");
            }
            None
        }
        Some(g) => {
            r.check_keys("geometry", g, &["a", "b"]);
            let a = r.positive(g, "a", Dim::Length);
            let b = r.positive(g, "b", Dim::Length);
            for k in ["a", "b"] {
                if !g.contains_key(k) {
                    r.missing(&format!("geometry.{k}"));
                }
            }
            match (a, b) {
                (Some(a), Some(b)) => WaveguideGeometry::new(a, b).ok(),
                _ => None,
            }
        }
    };

    // atoms
    let atoms = match r.section(&top, "atoms") {
        None => {
            if !top.contains_key("atoms") {
                r.missing("atoms (either atoms.positions or two of atoms.n_atoms, atoms.density, atoms.length)");
            }
            None
        }
        Some(t) => {
            let length_swept = line_of(&top, "sweep", "lengths").is_some();
            read_atoms(&mut r, t, geometry.as_ref(), length_swept)
        }
    };

    let experiment_is = |x: Experiment| experiment == Some(x);

    let dynamics = match r.section(&top, "dynamics") {
        Some(t) => {
            r.check_keys("dynamics", t, &["initial_atom", "initial_sublevel", "t_max", "points"]);
            let initial_atom = r.integer(t, "initial_atom", 1, i64::MAX).unwrap_or(1) as usize;
            let initial_sublevel = r.sublevel(t, "initial_sublevel").unwrap_or(-1);
            let t_max = if t.contains_key("t_max") { r.positive(t, "t_max", Dim::Time) } else { Some(default_t_max(&atoms)) };
            let points = r.integer(t, "points", 2, 1_000_000).unwrap_or(400) as usize;
            t_max.map(|t_max| DynamicsSpec { initial_atom, initial_sublevel, t_max, points })
        }
        None if experiment_is(Experiment::Dynamics) => {
            Some(DynamicsSpec { initial_atom: 1, initial_sublevel: -1, t_max: default_t_max(&atoms), points: 400 })
        }
        None => None,
    };
    if let (Some(d), Some(Atoms::Explicit(p))) = (&dynamics, &atoms) {
        if d.initial_atom > p.len() {
            r.issue(line_of(&top, "dynamics", "initial_atom"), format!("initial_atom = {} but only {} atoms are listed", d.initial_atom, p.len()));
        }
    }

    let probe = match r.section(&top, "probe") {
        Some(t) => {
            r.check_keys("probe", t, &["delta", "deltas", "source_sublevel"]);
            let deltas = match (t.contains_key("delta"), t.contains_key("deltas")) {
                (true, true) => {
                    r.issue(line_of(&top, "probe", "deltas"), "give either `delta` or `deltas`, not both");
                    None
                }
                (true, false) => r.get_number(t, "delta", Dim::Detuning).map(|d| vec![d]),
                (false, true) => r.numbers(t, "deltas", Dim::Detuning),
                (false, false) => {
                    r.missing("probe.delta (or probe.deltas)");
                    None
                }
            };
            let source_sublevel = r.sublevel(t, "source_sublevel").unwrap_or(-1);
            deltas.map(|deltas| ProbeSpec { deltas, source_sublevel })
        }
        None => {
            if experiment_is(Experiment::Steady) || experiment_is(Experiment::Sweep) {
                r.missing("probe.delta (or probe.deltas)");
            }
            None
        }
    };

    let profile = r.section(&top, "profile").and_then(|t| {
        r.check_keys("profile", t, &["delta"]);
        if !t.contains_key("delta") {
            r.missing("profile.delta");
        }
        r.get_number(t, "delta", Dim::Detuning).map(|delta| ProfileSpec { delta })
    });

    let histogram = r.section(&top, "histogram").and_then(|t| {
        r.check_keys("histogram", t, &["shift_bins", "decay_bins"]);
        let s = r.integer(t, "shift_bins", 1, 100_000).unwrap_or(40) as usize;
        let d = r.integer(t, "decay_bins", 1, 100_000).unwrap_or(40) as usize;
        Some(HistogramBins { shift_bins: s, decay_bins: d })
    });

    let sweep = match r.section(&top, "sweep") {
        Some(t) => {
            r.check_keys("sweep", t, &["b", "lengths"]);
            if !t.contains_key("b") {
                r.missing("sweep.b");
            }
            let b = r.numbers(t, "b", Dim::Length);
            let lengths = r.numbers(t, "lengths", Dim::Length);
            if let Some(bs) = &b {
                if bs.iter().any(|v| *v <= 0.0) {
                    r.issue(line_of(&top, "sweep", "b"), "every sweep value of `b` must be positive");
                }
            }
            if let Some(ls) = &lengths {
                if ls.iter().any(|v| *v <= 0.0) {
                    r.issue(line_of(&top, "sweep", "lengths"), "every sweep length must be positive");
                }
            }
            b.map(|b| SweepSpec { b, lengths })
        }
        None => {
            if experiment_is(Experiment::Sweep) {
                r.missing("sweep.b");
            }
            None
        }
    };

    let (evanescent, self_shift) = match r.section(&top, "model") {
        Some(t) => {
            r.check_keys("model", t, &["evanescent", "self_shift"]);
            (r.boolean(t, "evanescent").unwrap_or(true), r.boolean(t, "self_shift").unwrap_or(true))
        }
        None => (true, true),
    };

    let mut truncation = TruncationPolicy::default();
    if let Some(t) = r.section(&top, "truncation") {
        r.check_keys("truncation", t, &["attenuation_budget", "min_separation", "max_index"]);
        if let Some(v) = r.positive(t, "attenuation_budget", Dim::None) {
            truncation.attenuation_budget = v;
        }
        if let Some(v) = r.positive(t, "min_separation", Dim::Length) {
            truncation.min_separation = v;
        }
        if let Some(v) = r.integer(t, "max_index", 1, u32::MAX as i64) {
            truncation.max_index = v as u32;
        }
        if let Err(e) = truncation.validate() {
            r.issue(top.get("truncation").map(|e| e.key_line), e.to_string());
        }
    }

    // experiment-specific requirements
    if let (Some(x), Some(atoms)) = (experiment, &atoms) {
        match (x, atoms) {
            (Experiment::Steady | Experiment::Sweep, Atoms::Explicit(_)) => {
                r.issue(top.get("atoms").map(|e| e.key_line), format!("{x} runs need sampled atoms (two of n_atoms, density, length)"))
            }
            _ => {}
        }
    }
    if profile.is_some() && experiment != Some(Experiment::Steady) && experiment.is_some() {
        r.issue(top.get("profile").map(|e| e.key_line), "[profile] applies to steady runs only");
    }
    if histogram.is_some() && experiment != Some(Experiment::Spectrum) && experiment.is_some() {
        r.issue(top.get("histogram").map(|e| e.key_line), "[histogram] applies to spectrum runs only");
    }
    if dynamics.is_some() && experiment != Some(Experiment::Dynamics) && experiment.is_some() {
        r.issue(top.get("dynamics").map(|e| e.key_line), "[dynamics] applies to dynamics runs only");
    }
    if sweep.is_some() && experiment != Some(Experiment::Sweep) && experiment.is_some() {
        r.issue(top.get("sweep").map(|e| e.key_line), "[sweep] applies to sweep runs only");
    }

    if !r.issues.is_empty() {
        r.issues.sort_by_key(|i| i.line.unwrap_or(0));
        return Err(ConfigError { issues: r.issues });
    }
    Ok(RunConfig {
        experiment: experiment.expect("checked"),
        seed: seed.expect("checked"),
        geometry: geometry.expect("checked"),
        atoms: atoms.expect("checked"),
        dynamics,
        probe,
        profile,
        histogram,
        sweep,
        evanescent,
        self_shift,
        truncation,
        output,
    })
}

fn default_t_max(atoms: &Option<Atoms>) -> f64 {
    match atoms {
        Some(Atoms::Sampled(_)) => 25.0,
        _ => 10.0,
    }
}

fn line_of(top: &BTreeMap<String, Entry>, section: &str, key: &str) -> Option<usize> {
    match &top.get(section)?.value.raw {
        Raw::Table(t) => t.get(key).map(|e| e.key_line),
        _ => None,
    }
}

fn read_atoms(r: &mut Reader, t: &BTreeMap<String, Entry>, geometry: Option<&WaveguideGeometry>, length_swept: bool) -> Option<Atoms> {
    r.check_keys("atoms", t, &["positions", "n_atoms", "density", "length", "trials", "pinned"]);
    if t.contains_key("positions") {
        for k in ["n_atoms", "density", "length", "trials", "pinned"] {
            if let Some(e) = t.get(k) {
                r.issue(Some(e.key_line), format!("`{k}` cannot be combined with explicit `positions`"));
            }
        }
        let p = r.triples(t, "positions")?;
        if p.is_empty() {
            r.issue(Some(t["positions"].value.line), "`positions` lists no atoms");
            return None;
        }
        if let Some(g) = geometry {
            for (i, q) in p.iter().enumerate() {
                if !g.contains(q[0], q[1]) {
                    r.issue(Some(t["positions"].value.line), format!("atom {} at {q:?} lies outside the {} x {} cross-section", i + 1, g.a(), g.b()));
                }
            }
        }
        return Some(Atoms::Explicit(p));
    }
    let before = r.issues.len();
    let n_atoms = r.integer(t, "n_atoms", 0, 100_000).map(|n| n as usize);
    let density = r.positive(t, "density", Dim::Density);
    let length = r.positive(t, "length", Dim::Length);
    let trials = match t.get("trials") {
        Some(_) => r.integer(t, "trials", 1, i64::MAX).map(|n| n as usize),
        None => {
            r.missing("atoms.trials");
            None
        }
    };
    let pinned = if t.contains_key("pinned") { r.triples(t, "pinned") } else { Some(Vec::new()) };
    let given = ["n_atoms", "density", "length"].iter().filter(|k| t.contains_key(**k)).count();
    let key_line = ["n_atoms", "density", "length"].iter().filter_map(|k| t.get(*k)).map(|e| e.key_line).max();
    if length_swept {
        if t.contains_key("length") || given != 1 {
            r.issue(key_line, "with sweep.lengths give exactly one of atoms.n_atoms, atoms.density (N = n·a·b·L)");
            return None;
        }
    } else if given == 3 {
        if let (Some(n), Some(d), Some(l), Some(g)) = (n_atoms, density, length, geometry) {
            let implied = d * g.area() * l;
            if (implied - n as f64).abs() > 0.5 {
                r.issue(
                    key_line,
                    format!("over-constrained: N = n·a·b·L gives {implied:.3}, but n_atoms = {n}; give only two of n_atoms, density, length"),
                );
                return None;
            }
        }
    } else if given != 2 {
        r.issue(key_line, format!("give exactly two of atoms.n_atoms, atoms.density, atoms.length (N = n·a·b·L); got {given}"));
        return None;
    }
    if r.issues.len() > before {
        return None;
    }
    let mut spec = SamplingSpec { n_atoms, density, length, seed: 0, trials: trials?, pinned: pinned? };
    if given == 3 {
        spec.density = None;
    }
    if let (Some(g), false) = (geometry, length_swept) {
        if let Err(e) = spec.resolve(g) {
            r.issue(key_line, e.to_string());
            return None;
        }
    }
    Some(Atoms::Sampled(spec))
}
