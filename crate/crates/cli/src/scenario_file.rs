//! Scenario file grammar.
//!
//! ```text
//! # comment
//! [topology]
//! groups = 20@1500, 20@750, 20@375
//! bottleneck_rate = 30000000
//! bottleneck_delay = 0.015
//!
//! [red]
//! variant = RED1
//!
//! [run]
//! seed = 7
//!
//! [output]
//! trace = true
//! ```
//!
//! Lines are `key = value` inside a section. `#` and `;` start comment lines.
//! Every key is optional and falls back to the default scenario. Unknown
//! sections, unknown keys and repeated keys are errors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use redsim_core::aqm::AqmError;
use redsim_core::netsim::ScenarioError;
use redsim_core::{GroupSpec, RedVariant, Scenario};
use thiserror::Error;

pub const DEFAULT_TRACE_INTERVAL: f64 = 0.1;

/// Error anchored to a 1-based line. Line 0 means the file as a whole.
#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

/// A parsed scenario file: the simulation scenario plus output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    /// Label written into the `scenario_id` column.
    pub id: String,
    pub scenario: Scenario,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn new(id: impl Into<String>, scenario: Scenario) -> Self {
        Self {
            id: id.into(),
            scenario,
            output_dir: None,
        }
    }
}

const SECTIONS: [(&str, &[&str]); 4] = [
    (
        "topology",
        &[
            "groups",
            "bottleneck_rate",
            "bottleneck_delay",
            "access_rate",
            "access_delay_jitter",
            "start_spread",
            "rwnd_segments",
        ],
    ),
    (
        "red",
        &["variant", "w_q", "min_th", "max_th", "max_p", "capacity", "M"],
    ),
    ("run", &["id", "duration", "warmup", "seed"]),
    ("output", &["directory", "trace", "trace_interval"]),
];

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64, ParseError> {
    let x: f64 = v
        .parse()
        .map_err(|_| ParseError::at(line, format!("{key}: expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(ParseError::at(line, format!("{key}: must be finite")));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ParseError> {
    v.parse()
        .map_err(|_| ParseError::at(line, format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ParseError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ParseError::at(line, format!("{key}: expected true or false, got {v:?}"))),
    }
}

/// Parses `count@mtu` items separated by commas.
pub fn parse_groups(v: &str) -> Result<Vec<GroupSpec>, String> {
    let mut groups = Vec::new();
    for item in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (count, mtu) = item
            .split_once('@')
            .ok_or_else(|| format!("group {item:?} is not of the form count@mtu"))?;
        let flow_count = count
            .trim()
            .parse()
            .map_err(|_| format!("group {item:?}: bad flow count"))?;
        let mtu = mtu
            .trim()
            .parse()
            .map_err(|_| format!("group {item:?}: bad MTU"))?;
        groups.push(GroupSpec { flow_count, mtu });
    }
    if groups.is_empty() {
        return Err("at least one count@mtu group is required".into());
    }
    Ok(groups)
}

/// Parses and validates a scenario file. `default_id` names the run when the
/// file has no `[run] id` key.
pub fn parse_scenario(text: &str, default_id: &str) -> Result<ScenarioFile, ParseError> {
    let mut file = ScenarioFile::new(default_id, Scenario::default());
    let mut trace = false;
    let mut trace_interval = None;
    let mut section: Option<&str> = None;
    let mut seen: HashMap<(String, String), usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ParseError::at(line, "unterminated section header"))?
                .trim();
            section = Some(
                SECTIONS
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(n, _)| *n)
                    .ok_or_else(|| ParseError::at(line, format!("unknown section [{name}]")))?,
            );
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| ParseError::at(line, format!("expected key = value, got {s:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| ParseError::at(line, format!("key {key:?} outside any section")))?;
        let allowed = SECTIONS.iter().find(|(n, _)| *n == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ParseError::at(line, format!("unknown key {key:?} in [{sec}]")));
        }
        if let Some(prev) = seen.insert((sec.to_string(), key.to_string()), line) {
            return Err(ParseError::at(line, format!("key {key:?} already set on line {prev}")));
        }

        let sc = &mut file.scenario;
        match (sec, key) {
            ("topology", "groups") => {
                sc.groups = parse_groups(value).map_err(|m| ParseError::at(line, m))?;
            }
            ("topology", "bottleneck_rate") => sc.bottleneck_rate = parse_f64(line, key, value)?,
            ("topology", "bottleneck_delay") => sc.bottleneck_delay = parse_f64(line, key, value)?,
            ("topology", "access_rate") => sc.access_rate = parse_f64(line, key, value)?,
            ("topology", "access_delay_jitter") => {
                sc.access_delay_jitter = parse_f64(line, key, value)?
            }
            ("topology", "start_spread") => sc.start_spread = parse_f64(line, key, value)?,
            ("topology", "rwnd_segments") => sc.rwnd_segments = parse_int(line, key, value)?,
            ("red", "variant") => {
                sc.variant = value
                    .parse::<RedVariant>()
                    .map_err(|e| ParseError::at(line, e.to_string()))?;
            }
            ("red", "w_q") => sc.red.w_q = parse_f64(line, key, value)?,
            ("red", "min_th") => sc.red.min_th = parse_f64(line, key, value)?,
            ("red", "max_th") => sc.red.max_th = parse_f64(line, key, value)?,
            ("red", "max_p") => sc.red.max_p = parse_f64(line, key, value)?,
            ("red", "capacity") => sc.red.capacity = parse_f64(line, key, value)?,
            ("red", "M") => sc.red.max_packet = parse_int(line, key, value)?,
            ("run", "id") => {
                if value.is_empty() || value.contains(',') || value.contains(char::is_whitespace) {
                    return Err(ParseError::at(line, "id must be non-empty without commas or spaces"));
                }
                file.id = value.to_string();
            }
            ("run", "duration") => sc.duration = parse_f64(line, key, value)?,
            ("run", "warmup") => sc.warmup = parse_f64(line, key, value)?,
            ("run", "seed") => sc.seed = parse_int(line, key, value)?,
            ("output", "directory") => file.output_dir = Some(PathBuf::from(value)),
            ("output", "trace") => trace = parse_bool(line, key, value)?,
            ("output", "trace_interval") => trace_interval = Some(parse_f64(line, key, value)?),
            _ => unreachable!("key list and match arms agree"),
        }
    }

    file.scenario.trace_interval = match (trace, trace_interval) {
        (true, iv) => Some(iv.unwrap_or(DEFAULT_TRACE_INTERVAL)),
        (false, _) => None,
    };

    if let Err(e) = file.scenario.validate() {
        let key = match &e {
            ScenarioError::Invalid { field, .. } => Some(*field),
            ScenarioError::Red(AqmError::InvalidParam { field, .. }) => {
                Some(if *field == "max_packet" { "M" } else { *field })
            }
            _ => None,
        };
        let line = key
            .and_then(|k| {
                let (sec, _) = SECTIONS.iter().find(|(_, keys)| keys.contains(&k))?;
                seen.get(&(sec.to_string(), k.to_string())).copied()
            })
            .unwrap_or(0);
        return Err(ParseError::at(line, e.to_string()));
    }
    Ok(file)
}

/// Renders every setting, defaults included, in the scenario grammar.
/// Parsing the result gives back an equal `ScenarioFile` minus the output
/// directory, which is left to the caller.
pub fn render_scenario(file: &ScenarioFile) -> String {
    let sc = &file.scenario;
    let groups: Vec<String> = sc
        .groups
        .iter()
        .map(|g| format!("{}@{}", g.flow_count, g.mtu))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "[topology]");
    let _ = writeln!(out, "groups = {}", groups.join(", "));
    let _ = writeln!(out, "bottleneck_rate = {}", sc.bottleneck_rate);
    let _ = writeln!(out, "bottleneck_delay = {}", sc.bottleneck_delay);
    let _ = writeln!(out, "access_rate = {}", sc.access_rate);
    let _ = writeln!(out, "access_delay_jitter = {}", sc.access_delay_jitter);
    let _ = writeln!(out, "start_spread = {}", sc.start_spread);
    let _ = writeln!(out, "rwnd_segments = {}", sc.rwnd_segments);
    let _ = writeln!(out, "\n[red]");
    let _ = writeln!(out, "variant = {}", sc.variant);
    let _ = writeln!(out, "w_q = {}", sc.red.w_q);
    let _ = writeln!(out, "min_th = {}", sc.red.min_th);
    let _ = writeln!(out, "max_th = {}", sc.red.max_th);
    let _ = writeln!(out, "max_p = {}", sc.red.max_p);
    let _ = writeln!(out, "capacity = {}", sc.red.capacity);
    let _ = writeln!(out, "M = {}", sc.red.max_packet);
    let _ = writeln!(out, "\n[run]");
    let _ = writeln!(out, "id = {}", file.id);
    let _ = writeln!(out, "duration = {}", sc.duration);
    let _ = writeln!(out, "warmup = {}", sc.warmup);
    let _ = writeln!(out, "seed = {}", sc.seed);
    let _ = writeln!(out, "\n[output]");
    match sc.trace_interval {
        Some(iv) => {
            let _ = writeln!(out, "trace = true");
            let _ = writeln!(out, "trace_interval = {iv}");
        }
        None => {
            let _ = writeln!(out, "trace = false");
        }
    }
    out
}
