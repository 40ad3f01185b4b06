//! Experiment files: `key = value` lines grouped under `[scenario]`, `[strategy]`
//! (repeatable) and `[run]` headers. `#` starts a comment.
//!
//! ```text
//! [scenario]
//! preset = paper-1pct
//! contamination = 0.02
//!
//! [strategy]
//! kind = bounded-cdo
//! loss = huber
//!
//! [run]
//! replicas = 200
//! ```
//!
//! A `preset` key seeds the scenario (and, without `[strategy]` sections, the strategy
//! list); the remaining keys override it regardless of order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use streamal_core::{LossKind, ScenarioConfig, StrategyKind, StrategySpec};
use thiserror::Error;

use crate::presets::{preset, preset_names, PAPER_REPLICAS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub preset: Option<String>,
    pub scenario: ScenarioConfig,
    pub strategies: Vec<StrategySpec>,
    pub replicas: usize,
    pub out: PathBuf,
    pub dump_traces: bool,
    /// Write every replica's learning and diagnostic curves.
    pub dump_curves: bool,
    /// Record the stabilization and leave-one-out curves.
    pub diagnostics: bool,
    pub stop_tol: Option<f64>,
}

impl ExperimentSpec {
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        let p = preset(name).ok_or_else(|| unknown_preset(name))?;
        Ok(Self {
            name: p.name.to_string(),
            preset: Some(p.name.to_string()),
            scenario: p.scenario,
            strategies: p.strategies,
            replicas: PAPER_REPLICAS,
            out: PathBuf::from("results"),
            dump_traces: false,
            dump_curves: false,
            diagnostics: false,
            stop_tol: None,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.strategies.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one [strategy] is required".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(ConfigError::Invalid("replicas must be at least 1".into()));
        }
        if let Some(s) = self
            .strategies
            .iter()
            .find(|s| s.weighted && !s.kind.uses_design())
        {
            return Err(ConfigError::Invalid(format!(
                "weighted: {} has no prediction variance to weight",
                s.kind
            )));
        }
        if let Some(t) = self.stop_tol {
            if !(t.is_finite() && t > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "stop_tol must be positive, got {t}"
                )));
            }
        }
        if self.name.is_empty() || self.name.contains(['/', '\\', ',']) {
            return Err(ConfigError::Invalid(format!(
                "name {:?} must be non-empty without '/', '\\' or ','",
                self.name
            )));
        }
        Ok(())
    }
}

pub fn unknown_preset(name: &str) -> ConfigError {
    ConfigError::Invalid(format!(
        "unknown preset {name:?}; valid presets: {}",
        preset_names().join(", ")
    ))
}

struct Entry {
    line: usize,
    value: String,
}

#[derive(Default)]
struct Section {
    line: usize,
    entries: BTreeMap<String, Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn reject_leftovers(self, section: &str) -> Result<(), ConfigError> {
        match self.entries.into_iter().min_by_key(|(_, e)| e.line) {
            Some((key, e)) => Err(ConfigError::Syntax {
                line: e.line,
                message: format!("unknown key {key:?} in [{section}]"),
            }),
            None => Ok(()),
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Syntax {
        line,
        message: message.into(),
    }
}

fn value<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T, ConfigError> {
    e.value
        .parse()
        .map_err(|_| syntax(e.line, format!("invalid value {:?} for {key}", e.value)))
}

fn range(e: &Entry, key: &str) -> Result<(f64, f64), ConfigError> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    let bad = || syntax(e.line, format!("{key} expects two numbers 'lo, hi'"));
    match parts.as_slice() {
        [a, b] => Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec, ConfigError> {
    let mut scenario: Option<Section> = None;
    let mut strategies: Vec<Section> = Vec::new();
    let mut run: Option<Section> = None;
    let mut current: Option<&mut Section> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let name = header
                .strip_suffix(']')
                .ok_or_else(|| syntax(line, "unterminated section header"))?
                .trim();
            let fresh = Section {
                line,
                ..Section::default()
            };
            current = Some(match name {
                "scenario" if scenario.is_none() => scenario.insert(fresh),
                "run" if run.is_none() => run.insert(fresh),
                "scenario" | "run" => return Err(syntax(line, format!("duplicate [{name}]"))),
                "strategy" => {
                    strategies.push(fresh);
                    strategies.last_mut().expect("just pushed")
                }
                other => return Err(syntax(line, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let (key, val) = content
            .split_once('=')
            .ok_or_else(|| syntax(line, "expected 'key = value'"))?;
        let (key, val) = (key.trim(), val.trim());
        if key.is_empty() {
            return Err(syntax(line, "missing key"));
        }
        let section = current
            .as_deref_mut()
            .ok_or_else(|| syntax(line, "key outside any section"))?;
        let entry = Entry {
            line,
            value: val.to_string(),
        };
        if section.entries.insert(key.to_string(), entry).is_some() {
            return Err(syntax(line, format!("duplicate key {key:?}")));
        }
    }

    let mut sc = scenario.ok_or_else(|| ConfigError::Invalid("missing scenario".into()))?;
    let mut spec = match sc.take("preset") {
        Some(e) => ExperimentSpec::from_preset(&e.value).map_err(|err| match err {
            ConfigError::Invalid(m) => syntax(e.line, m),
            other => other,
        })?,
        None => ExperimentSpec {
            name: "custom".into(),
            preset: None,
            scenario: ScenarioConfig::paper(20),
            strategies: Vec::new(),
            replicas: PAPER_REPLICAS,
            out: PathBuf::from("results"),
            dump_traces: false,
            dump_curves: false,
            diagnostics: false,
            stop_tol: None,
        },
    };
    apply_scenario(&mut sc, &mut spec)?;
    sc.reject_leftovers("scenario")?;

    if !strategies.is_empty() {
        spec.strategies = strategies
            .into_iter()
            .map(parse_strategy)
            .collect::<Result<_, _>>()?;
    }
    if let Some(mut r) = run {
        apply_run(&mut r, &mut spec)?;
        r.reject_leftovers("run")?;
    }
    spec.validate()?;
    Ok(spec)
}

fn apply_scenario(sc: &mut Section, spec: &mut ExperimentSpec) -> Result<(), ConfigError> {
    if let Some(e) = sc.take("name") {
        spec.name = e.value;
    }
    let s = &mut spec.scenario;
    if let Some(e) = sc.take("p") {
        s.p = value(&e, "p")?;
        s.initial_design_size = s.p + 2;
    }
    macro_rules! fields {
        ($($key:ident),*) => {$(
            if let Some(e) = sc.take(stringify!($key)) {
                s.$key = value(&e, stringify!($key))?;
            }
        )*};
    }
    fields!(
        sigma_x_normal,
        sigma_x_outlier,
        sigma_eps_normal,
        sigma_eps_outlier,
        contamination,
        budget,
        warm_up,
        alpha,
        cutoff,
        initial_design_size,
        contaminated_init,
        test_size,
        stream_cap,
        seed,
        fresh_outlier_beta,
        center,
        intercept
    );
    if let Some(e) = sc.take("beta_normal_range") {
        s.beta_normal_range = range(&e, "beta_normal_range")?;
    }
    if let Some(e) = sc.take("beta_outlier_range") {
        s.beta_outlier_range = range(&e, "beta_outlier_range")?;
    }
    Ok(())
}

fn parse_strategy(mut sec: Section) -> Result<StrategySpec, ConfigError> {
    let kind_entry = sec
        .take("kind")
        .ok_or_else(|| syntax(sec.line, "[strategy] needs a kind"))?;
    let kind: StrategyKind = kind_entry.value.parse().map_err(|_| {
        syntax(
            kind_entry.line,
            format!(
                "unknown strategy {:?}; expected one of {}",
                kind_entry.value,
                StrategyKind::ALL.map(|k| k.name()).join(", ")
            ),
        )
    })?;
    let k = sec
        .take("k")
        .map(|e| value::<f64>(&e, "k").map(|v| (v, e.line)))
        .transpose()?;
    let loss = match sec.take("loss") {
        None => LossKind::Ols,
        Some(e) => match e.value.as_str() {
            "ols" => LossKind::Ols,
            "huber" => LossKind::huber(),
            "tukey" => LossKind::tukey(),
            other => {
                return Err(syntax(
                    e.line,
                    format!("unknown loss {other:?}; expected ols, huber or tukey"),
                ))
            }
        },
    };
    let loss = match (loss, k) {
        (l, None) => l,
        (LossKind::Ols, Some((_, line))) => {
            return Err(syntax(line, "k needs loss = huber or tukey"))
        }
        (_, Some((v, line))) if !(v.is_finite() && v > 0.0) => {
            return Err(syntax(line, format!("k must be positive, got {v}")))
        }
        (LossKind::Huber { .. }, Some((v, _))) => LossKind::Huber { k_factor: v },
        (LossKind::Tukey { .. }, Some((v, _))) => LossKind::Tukey { k_factor: v },
    };
    let weighted = match sec.take("weighted") {
        Some(e) => value(&e, "weighted")?,
        None => false,
    };
    sec.reject_leftovers("strategy")?;
    Ok(StrategySpec {
        kind,
        loss,
        weighted,
    })
}

fn apply_run(r: &mut Section, spec: &mut ExperimentSpec) -> Result<(), ConfigError> {
    if let Some(e) = r.take("replicas") {
        spec.replicas = value(&e, "replicas")?;
    }
    if let Some(e) = r.take("out") {
        spec.out = PathBuf::from(e.value);
    }
    if let Some(e) = r.take("dump_traces") {
        spec.dump_traces = value(&e, "dump_traces")?;
    }
    if let Some(e) = r.take("dump_curves") {
        spec.dump_curves = value(&e, "dump_curves")?;
    }
    if let Some(e) = r.take("diagnostics") {
        spec.diagnostics = value(&e, "diagnostics")?;
    }
    if let Some(e) = r.take("stop_tol") {
        spec.stop_tol = Some(value(&e, "stop_tol")?);
    }
    Ok(())
}

/// Inverse of [`parse_config`]: every field is written explicitly.
pub fn serialize(spec: &ExperimentSpec) -> String {
    let s = &spec.scenario;
    let mut out = String::from("[scenario]\n");
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("name", &spec.name);
    if let Some(p) = &spec.preset {
        kv("preset", p);
    }
    kv("p", &s.p);
    kv("sigma_x_normal", &s.sigma_x_normal);
    kv("sigma_x_outlier", &s.sigma_x_outlier);
    kv("sigma_eps_normal", &s.sigma_eps_normal);
    kv("sigma_eps_outlier", &s.sigma_eps_outlier);
    let r = |(a, b): (f64, f64)| format!("{a}, {b}");
    kv("beta_normal_range", &r(s.beta_normal_range));
    kv("beta_outlier_range", &r(s.beta_outlier_range));
    kv("contamination", &s.contamination);
    kv("budget", &s.budget);
    kv("warm_up", &s.warm_up);
    kv("alpha", &s.alpha);
    kv("cutoff", &s.cutoff);
    kv("initial_design_size", &s.initial_design_size);
    kv("contaminated_init", &s.contaminated_init);
    kv("test_size", &s.test_size);
    kv("stream_cap", &s.stream_cap);
    kv("seed", &s.seed);
    kv("fresh_outlier_beta", &s.fresh_outlier_beta);
    kv("center", &s.center);
    kv("intercept", &s.intercept);
    for st in &spec.strategies {
        let _ = write!(
            out,
            "\n[strategy]\nkind = {}\nloss = {}\n",
            st.kind,
            st.loss.name()
        );
        if let Some(k) = st.loss.k_factor() {
            let _ = writeln!(out, "k = {k}");
        }
        let _ = writeln!(out, "weighted = {}", st.weighted);
    }
    let _ = write!(
        out,
        "\n[run]\nreplicas = {}\nout = {}\ndump_traces = {}\ndump_curves = {}\ndiagnostics = {}\n",
        spec.replicas,
        spec.out.display(),
        spec.dump_traces,
        spec.dump_curves,
        spec.diagnostics
    );
    if let Some(t) = spec.stop_tol {
        let _ = writeln!(out, "stop_tol = {t}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_missing_scenario() {
        let err = parse_config("").unwrap_err();
        assert_eq!(err.to_string(), "missing scenario");
        let err = parse_config("# only a comment\n\n").unwrap_err();
        assert_eq!(err.to_string(), "missing scenario");
    }

    #[test]
    fn preset_expands() {
        let spec = parse_config("[scenario]\npreset = paper-1pct\n").unwrap();
        let s = &spec.scenario;
        assert_eq!((s.p, s.budget, s.warm_up), (20, 50, 500));
        assert_eq!((s.alpha, s.cutoff, s.contamination), (0.05, 0.05, 0.01));
        assert_eq!(spec.strategies.len(), 6);
        assert_eq!(spec.name, "paper-1pct");
    }

    #[test]
    fn contamination_round_trips() {
        let text = "[scenario]\npreset = paper-clean\ncontamination = 0.05\n";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.scenario.contamination, 0.05);
        let ser = serialize(&spec);
        assert!(ser.contains("contamination = 0.05\n"));
        assert_eq!(parse_config(&ser).unwrap(), spec);
    }

    #[test]
    fn full_round_trip() {
        let text = "\
[scenario]
name = mine
p = 3
contamination = 0.125
beta_normal_range = -1, 2.5
seed = 99
intercept = true

[strategy]
kind = bounded-cdo
loss = tukey
k = 3.5
weighted = true

[strategy]
kind = random

[run]
replicas = 7
out = /tmp/x
stop_tol = 1e-3
";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.scenario.initial_design_size, 5);
        assert_eq!(spec.scenario.beta_normal_range, (-1.0, 2.5));
        assert_eq!(spec.strategies[0].loss, LossKind::Tukey { k_factor: 3.5 });
        assert!(spec.strategies[0].weighted);
        assert_eq!(spec.strategies[1].loss, LossKind::Ols);
        assert_eq!(spec.stop_tol, Some(1e-3));
        assert_eq!(parse_config(&serialize(&spec)).unwrap(), spec);
    }

    #[test]
    fn overrides_apply_after_preset_regardless_of_order() {
        let a = parse_config("[scenario]\ncontamination = 0.2\npreset = paper-clean\n").unwrap();
        assert_eq!(a.scenario.contamination, 0.2);
    }

    fn line_of(text: &str) -> usize {
        match parse_config(text).unwrap_err() {
            ConfigError::Syntax { line, .. } => line,
            e => panic!("expected a syntax error, got {e}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            line_of("[scenario]\npreset = paper-clean\ncontamnation = 0.1\n"),
            3
        );
        assert_eq!(line_of("[scenario]\nbudget = many\n"), 2);
        assert_eq!(line_of("[scenario]\n[bogus]\n"), 2);
        assert_eq!(line_of("budget = 3\n"), 1);
        assert_eq!(line_of("[scenario]\nbudget 3\n"), 2);
        assert_eq!(line_of("[scenario]\nbudget = 3\nbudget = 4\n"), 3);
        assert_eq!(line_of("[scenario]\n[strategy]\nkind = greedy\n"), 3);
        assert_eq!(
            line_of("[scenario]\n[strategy]\nkind = cdo\nloss = l1\n"),
            4
        );
        assert_eq!(line_of("[scenario]\n[strategy]\nkind = cdo\nk = 2\n"), 4);
        assert_eq!(line_of("[scenario]\n\n[strategy]\nloss = ols\n"), 3);
        assert_eq!(line_of("[scenario]\n[run]\nreplica = 3\n"), 3);
    }

    #[test]
    fn unknown_preset_lists_valid_ones() {
        let msg = parse_config("[scenario]\npreset = paper-2pct\n")
            .unwrap_err()
            .to_string();
        assert!(msg.starts_with("line 2:"));
        assert!(msg.contains("paper-clean") && msg.contains("paper-upvw-1pct"));
    }

    #[test]
    fn validation_names_the_field() {
        let msg = parse_config("[scenario]\npreset = paper-clean\nwarm_up = 5\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("warm_up"), "{msg}");
        let msg = parse_config("[scenario]\np = 2\n").unwrap_err().to_string();
        assert!(msg.contains("strategy"), "{msg}");
        let msg = parse_config("[scenario]\npreset = paper-clean\n[run]\nreplicas = 0\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("replicas"), "{msg}");
        let msg = parse_config("[scenario]\np = 2\n[strategy]\nkind = random\nweighted = true\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("weighted"), "{msg}");
    }
}
