//! CSV output: aggregated learning curves, per-replica curves and decision traces.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use streamal_core::{AggregateResult, LossKind, RunResult, StrategyKind, StrategySpec};
use thiserror::Error;

pub const HEADER: &str =
    "scenario,strategy,estimator,weighted,step,mean_rmse,std_rmse,n_replicas,n_padded";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("nothing to export")]
    Empty,
}

/// 17 significant digits, enough to recover any `f64` exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `huber`, or `huber:<k>` when the tuning constant differs from the default.
pub fn estimator_label(loss: LossKind) -> String {
    let default = match loss {
        LossKind::Ols => return "ols".into(),
        LossKind::Huber { .. } => LossKind::huber(),
        LossKind::Tukey { .. } => LossKind::tukey(),
    };
    match loss.k_factor() {
        Some(k) if loss != default => format!("{}:{k}", loss.name()),
        _ => loss.name().into(),
    }
}

pub fn parse_estimator(label: &str) -> Option<LossKind> {
    let (name, k) = match label.split_once(':') {
        Some((n, k)) => (n, Some(k.parse::<f64>().ok()?)),
        None => (label, None),
    };
    match (name, k) {
        ("ols", None) => Some(LossKind::Ols),
        ("huber", None) => Some(LossKind::huber()),
        ("tukey", None) => Some(LossKind::tukey()),
        ("huber", Some(k_factor)) => Some(LossKind::Huber { k_factor }),
        ("tukey", Some(k_factor)) => Some(LossKind::Tukey { k_factor }),
        _ => None,
    }
}

fn sort_key(spec: &StrategySpec) -> (&'static str, String, bool) {
    (spec.kind.name(), estimator_label(spec.loss), spec.weighted)
}

/// Writes one row per (strategy, step), sorted by strategy then step.
pub fn write_csv<W: Write>(mut out: W, results: &[AggregateResult<f64>]) -> io::Result<()> {
    let mut ordered: Vec<&AggregateResult<f64>> = results.iter().collect();
    ordered.sort_by(|a, b| sort_key(&a.spec).cmp(&sort_key(&b.spec)));
    writeln!(out, "{HEADER}")?;
    for r in ordered {
        let (strategy, estimator, weighted) = sort_key(&r.spec);
        for (step, (m, s)) in r.mean.iter().zip(&r.std).enumerate() {
            writeln!(
                out,
                "{},{strategy},{estimator},{weighted},{step},{},{},{},{}",
                r.scenario,
                fmt_float(*m),
                fmt_float(*s),
                r.n_replicas,
                r.n_padded
            )?;
        }
    }
    Ok(())
}

pub fn export_csv(results: &[AggregateResult<f64>], path: &Path) -> Result<(), ExportError> {
    if results.is_empty() {
        return Err(ExportError::Empty);
    }
    let mut buf = Vec::new();
    write_csv(&mut buf, results).expect("writing to memory");
    fs::write(path, buf).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads back a file written by [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<AggregateResult<f64>>, ExportError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => {
            return Err(ExportError::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let mut out: Vec<AggregateResult<f64>> = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let err = |message: &str| ExportError::Parse {
            line: line_no,
            message: message.into(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(err("expected 9 columns"));
        }
        let kind: StrategyKind = f[1].parse().map_err(|_| err("unknown strategy"))?;
        let loss = parse_estimator(f[2]).ok_or_else(|| err("unknown estimator"))?;
        let weighted: bool = f[3].parse().map_err(|_| err("invalid weighted flag"))?;
        let step: usize = f[4].parse().map_err(|_| err("invalid step"))?;
        let mean: f64 = f[5].parse().map_err(|_| err("invalid mean"))?;
        let std: f64 = f[6].parse().map_err(|_| err("invalid std"))?;
        let n_replicas: usize = f[7].parse().map_err(|_| err("invalid n_replicas"))?;
        let n_padded: usize = f[8].parse().map_err(|_| err("invalid n_padded"))?;
        let spec = StrategySpec {
            kind,
            loss,
            weighted,
        };
        let same = out
            .last()
            .is_some_and(|r| r.scenario == f[0] && r.spec == spec);
        if !same {
            out.push(AggregateResult {
                scenario: f[0].to_string(),
                spec,
                mean: Vec::new(),
                std: Vec::new(),
                n_replicas,
                n_padded,
            });
        }
        let r = out.last_mut().expect("pushed above");
        if step != r.mean.len() {
            return Err(err("steps must run 0, 1, 2, … within a strategy"));
        }
        r.mean.push(mean);
        r.std.push(std);
    }
    if out.is_empty() {
        return Err(ExportError::Empty);
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Per-replica curves, `runs[replica][strategy]`.
pub fn write_curves<W: Write>(
    mut out: W,
    scenario: &str,
    runs: &[Vec<RunResult<f64>>],
) -> io::Result<()> {
    writeln!(
        out,
        "scenario,strategy,estimator,weighted,replica,step,rmse,stabilization,loocv"
    )?;
    for (rep, row) in runs.iter().enumerate() {
        for r in row {
            let (strategy, estimator, weighted) = sort_key(&r.spec);
            for (step, v) in r.rmse_curve.iter().enumerate() {
                writeln!(
                    out,
                    "{scenario},{strategy},{estimator},{weighted},{rep},{step},{},{},{}",
                    fmt_float(*v),
                    opt(r.stabilization_curve[step]),
                    opt(r.loocv_curve[step])
                )?;
            }
        }
    }
    Ok(())
}

/// One line per screened stream point.
pub fn write_traces<W: Write>(mut out: W, runs: &[Vec<RunResult<f64>>]) -> io::Result<()> {
    writeln!(
        out,
        "strategy,estimator,weighted,replica,step,stream_index,statistic,lower,upper,accept,outlier"
    )?;
    for (rep, row) in runs.iter().enumerate() {
        for r in row {
            let (strategy, estimator, weighted) = sort_key(&r.spec);
            for t in &r.trace {
                writeln!(
                    out,
                    "{strategy},{estimator},{weighted},{rep},{},{},{},{},{},{},{}",
                    t.step,
                    t.stream_index,
                    fmt_float(t.statistic),
                    opt(t.lower),
                    opt(t.upper),
                    u8::from(t.accept),
                    u8::from(t.is_outlier)
                )?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(kind: StrategyKind, loss: LossKind, steps: usize) -> AggregateResult<f64> {
        AggregateResult {
            scenario: "s".into(),
            spec: StrategySpec::new(kind, loss),
            mean: (0..steps).map(|i| 1.0 / (i as f64 + 3.0)).collect(),
            std: (0..steps).map(|i| (i as f64).sqrt() * 0.1).collect(),
            n_replicas: 4,
            n_padded: 1,
        }
    }

    fn to_string(results: &[AggregateResult<f64>]) -> String {
        let mut buf = Vec::new();
        write_csv(&mut buf, results).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn one_strategy_has_budget_plus_one_rows() {
        let text = to_string(&[agg(StrategyKind::Cdo, LossKind::Ols, 51)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines.len(), 52);
        assert!(lines.iter().all(|l| l.split(',').count() == 9));
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        for v in [1.0 / 3.0, 1e-300, 12345.678901234567, f64::MAX] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn round_trip_and_sorting() {
        let results = vec![
            agg(StrategyKind::Random, LossKind::Ols, 4),
            agg(StrategyKind::BoundedCdo, LossKind::tukey(), 4),
            agg(StrategyKind::BoundedCdo, LossKind::huber(), 4),
            agg(
                StrategyKind::BoundedCdo,
                LossKind::Huber { k_factor: 2.0 },
                4,
            ),
            AggregateResult {
                spec: StrategySpec::new(StrategyKind::BoundedCdo, LossKind::huber()).weighted(),
                ..agg(StrategyKind::BoundedCdo, LossKind::huber(), 4)
            },
        ];
        let text = to_string(&results);
        let back = parse_csv(&text).unwrap();
        let mut expected = results.clone();
        expected.sort_by(|a, b| sort_key(&a.spec).cmp(&sort_key(&b.spec)));
        assert_eq!(back, expected);
        let strategies: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        let mut sorted = strategies.clone();
        sorted.sort();
        assert_eq!(strategies, sorted);
    }

    #[test]
    fn estimator_labels() {
        assert_eq!(estimator_label(LossKind::huber()), "huber");
        assert_eq!(
            estimator_label(LossKind::Tukey { k_factor: 3.0 }),
            "tukey:3"
        );
        assert_eq!(
            parse_estimator("tukey:3"),
            Some(LossKind::Tukey { k_factor: 3.0 })
        );
        assert_eq!(parse_estimator("ols:3"), None);
        assert_eq!(parse_estimator("lad"), None);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            parse_csv("a,b\n"),
            Err(ExportError::Parse { line: 1, .. })
        ));
        assert!(matches!(parse_csv(HEADER), Err(ExportError::Empty)));
        let bad = format!("{HEADER}\ns,random,ols,false,1,1,0,1,0\n");
        assert!(matches!(
            parse_csv(&bad),
            Err(ExportError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_results_refused() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_csv(&[], &dir.path().join("x.csv")),
            Err(ExportError::Empty)
        ));
        let r = export_csv(
            &[agg(StrategyKind::Cdo, LossKind::Ols, 2)],
            &dir.path().join("missing").join("x.csv"),
        );
        assert!(matches!(r, Err(ExportError::Io { .. })));
    }
}
