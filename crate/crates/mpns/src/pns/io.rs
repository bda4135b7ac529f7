//! Plain-text model descriptions and report formatting for the oracle CLI.
//!
//! Schema (`#` starts a comment, blank lines ignored):
//!
//! ```text
//! MPNS-SCM-V1
//! noise u = 0:0.15 1:0.85
//! cause z = 0 1
//! outcome y = 0 1
//! p_cause = 0.5 0.5
//! f | u=0 = 0 1
//! f | u=1 = 1 0
//! ```
//!
//! `noise` lines declare exogenous variables with `label:prob` pairs; later
//! noise variables vary fastest in enumeration order. `p_cause` is either a
//! single unconditional table, or one `p_cause | u=... = ...` row per joint
//! noise assignment (that is how confounding is written). `f` rows give the
//! outcome label for each cause value, in declared cause order, one row per
//! joint noise assignment.

use super::{CauseDist, NoiseVar, PnsReport, ScmSpec};
use crate::synth::parse_f64;
use crate::{Error, Result};
use std::path::Path;

pub fn read_scm(path: &Path) -> Result<ScmSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_scm(&text, &path.display().to_string())
}

pub fn parse_scm(text: &str, origin: &str) -> Result<ScmSpec> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    let mut noise: Vec<NoiseVar> = Vec::new();
    let mut cause_support: Option<Vec<String>> = None;
    let mut outcome_support: Option<Vec<String>> = None;
    let mut p_cause_plain: Option<Vec<f64>> = None;
    let mut p_cause_rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut f_rows: Vec<(usize, Vec<String>)> = Vec::new();
    let mut saw_magic = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !saw_magic {
            if line != "MPNS-SCM-V1" {
                return Err(perr(lineno, "expected magic MPNS-SCM-V1".into()));
            }
            saw_magic = true;
            continue;
        }

        if let Some(rest) = line.strip_prefix("noise ") {
            let (name, table) = rest
                .split_once('=')
                .ok_or_else(|| perr(lineno, "noise line needs `name = label:prob ...`".into()))?;
            let mut support = Vec::new();
            let mut probs = Vec::new();
            for pair in table.split_whitespace() {
                let (label, p) = pair.split_once(':').ok_or_else(|| {
                    perr(lineno, format!("expected `label:prob`, got {pair:?}"))
                })?;
                support.push(label.to_string());
                probs.push(parse_f64(p).map_err(|m| perr(lineno, m))?);
            }
            noise.push(NoiseVar {
                name: name.trim().to_string(),
                support,
                probs,
            });
        } else if let Some(rest) = line.strip_prefix("cause ") {
            let (_, labels) = rest
                .split_once('=')
                .ok_or_else(|| perr(lineno, "cause line needs `name = labels...`".into()))?;
            cause_support = Some(labels.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = line.strip_prefix("outcome ") {
            let (_, labels) = rest
                .split_once('=')
                .ok_or_else(|| perr(lineno, "outcome line needs `name = labels...`".into()))?;
            outcome_support = Some(labels.split_whitespace().map(String::from).collect());
        } else if let Some(rest) = line.strip_prefix("p_cause") {
            let rest = rest.trim();
            if let Some(cond) = rest.strip_prefix('|') {
                let (assign, table) = split_assignment_row(cond)
                    .ok_or_else(|| perr(lineno, "conditional p_cause needs `| u=0 = probs`".into()))?;
                let idx = assignment_index(&noise, assign).map_err(|m| perr(lineno, m))?;
                let probs: Vec<f64> = table
                    .split_whitespace()
                    .map(parse_f64)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|m| perr(lineno, m))?;
                p_cause_rows.push((idx, probs));
            } else if let Some(table) = rest.strip_prefix('=') {
                let probs: Vec<f64> = table
                    .split_whitespace()
                    .map(parse_f64)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|m| perr(lineno, m))?;
                p_cause_plain = Some(probs);
            } else {
                return Err(perr(lineno, "malformed p_cause line".into()));
            }
        } else if let Some(rest) = line.strip_prefix("f") {
            let rest = rest.trim();
            let cond = rest
                .strip_prefix('|')
                .ok_or_else(|| perr(lineno, "outcome rows look like `f | u=0 = y0 y1`".into()))?;
            let (assign, labels) = split_assignment_row(cond)
                .ok_or_else(|| perr(lineno, "outcome rows look like `f | u=0 = y0 y1`".into()))?;
            let idx = assignment_index(&noise, assign).map_err(|m| perr(lineno, m))?;
            f_rows.push((idx, labels.split_whitespace().map(String::from).collect()));
        } else {
            return Err(perr(lineno, format!("unrecognized line {line:?}")));
        }
    }

    if !saw_magic {
        return Err(perr(1, "empty model file".into()));
    }
    let cause_support =
        cause_support.ok_or_else(|| Error::validation("model is missing a cause line"))?;
    let outcome_support =
        outcome_support.ok_or_else(|| Error::validation("model is missing an outcome line"))?;
    let joint: usize = noise.iter().map(|v| v.support.len()).product();

    let cause_dist = if let Some(plain) = p_cause_plain {
        if !p_cause_rows.is_empty() {
            return Err(Error::validation(
                "use either one unconditional p_cause or per-assignment rows, not both",
            ));
        }
        CauseDist::Independent(plain)
    } else {
        let mut rows = vec![None; joint];
        for (idx, probs) in p_cause_rows {
            rows[idx] = Some(probs);
        }
        let rows: Option<Vec<Vec<f64>>> = rows.into_iter().collect();
        CauseDist::ConditionalOnNoise(rows.ok_or_else(|| {
            Error::validation("conditional p_cause rows do not cover every noise assignment")
        })?)
    };

    let mut outcome_table = vec![None; joint];
    for (idx, labels) in f_rows {
        let row: Result<Vec<usize>> = labels
            .iter()
            .map(|l| {
                outcome_support
                    .iter()
                    .position(|o| o == l)
                    .ok_or_else(|| Error::validation(format!("unknown outcome label {l:?}")))
            })
            .collect();
        outcome_table[idx] = Some(row?);
    }
    let outcome_table: Option<Vec<Vec<usize>>> = outcome_table.into_iter().collect();
    let outcome_table = outcome_table.ok_or_else(|| {
        Error::validation("outcome rows do not cover every noise assignment")
    })?;

    let scm = ScmSpec {
        noise,
        cause_support,
        outcome_support,
        cause_dist,
        outcome_table,
    };
    scm.validate()?;
    Ok(scm)
}

/// Splits `u=0 v=a = payload` into the assignment part and the payload after
/// the standalone `=` separator.
fn split_assignment_row(cond: &str) -> Option<(&str, &str)> {
    let bytes = cond.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'='
            && i > 0
            && bytes[i - 1].is_ascii_whitespace()
            && i + 1 < bytes.len()
            && bytes[i + 1].is_ascii_whitespace()
        {
            return Some((cond[..i].trim(), cond[i + 1..].trim()));
        }
    }
    None
}

/// Maps `u=0 v=a` to the flat enumeration index (later variables fastest).
fn assignment_index(noise: &[NoiseVar], assign: &str) -> std::result::Result<usize, String> {
    let mut digits = vec![None; noise.len()];
    for pair in assign.split_whitespace() {
        let (name, label) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected `name=label`, got {pair:?}"))?;
        let vi = noise
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| format!("unknown noise variable {name:?}"))?;
        let di = noise[vi]
            .support
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| format!("unknown value {label:?} for noise {name:?}"))?;
        digits[vi] = Some(di);
    }
    let mut idx = 0usize;
    for (v, d) in noise.iter().zip(&digits) {
        let d = d.ok_or_else(|| format!("assignment is missing noise variable {:?}", v.name))?;
        idx = idx * v.support.len() + d;
    }
    Ok(idx)
}

pub fn format_report_text(report: &PnsReport, z: &str, zbar: &str, y: &str) -> String {
    format!(
        "query: z = {z}, zbar = {zbar}, y = {y}\n\
         pns_exact       = {:.12}\n\
         lemma1_estimand = {:.12}\n\
         monotonic       = {}\n\
         exogenous       = {}\n\
         identified      = {}\n",
        report.pns_exact,
        report.lemma1_estimand,
        report.monotonic,
        report.exogenous,
        report.monotonic && report.exogenous
    )
}

pub fn format_report_csv(report: &PnsReport, z: &str, zbar: &str, y: &str) -> String {
    format!(
        "z,zbar,y,pns_exact,lemma1_estimand,monotonic,exogenous\n{z},{zbar},{y},{:?},{:?},{},{}\n",
        report.pns_exact, report.lemma1_estimand, report.monotonic, report.exogenous
    )
}
