//! Checkpoint files: a versioned text layout with the model configuration,
//! optional experiment metadata, and row-major parameter blocks per named
//! component. Floats are written in shortest round-trip form, so a load
//! reproduces the saved parameters bit for bit.

use super::{Activation, ModelBundle, ModelConfig};
use crate::autodiff::Matrix;
use crate::synth::{parse_bool, parse_f64, parse_u64, parse_usize};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const CKPT_MAGIC: &str = "MPNS-CKPT-V1";

/// Experiment provenance carried inside a checkpoint, used by the eval CLI
/// to label its CSV rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointMeta {
    pub s: Option<f64>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
}

pub fn save_checkpoint(bundle: &ModelBundle, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let mut out = String::new();
    let cfg = &bundle.config;
    let _ = writeln!(out, "{CKPT_MAGIC}");
    let _ = writeln!(out, "n_modalities = {}", cfg.n_modalities);
    let dims: Vec<String> = cfg.input_dims.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "input_dims = {}", dims.join(", "));
    let _ = writeln!(out, "rep_dim_invariant = {}", cfg.rep_dim_invariant);
    let _ = writeln!(out, "rep_dim_specific = {}", cfg.rep_dim_specific);
    let hidden: Vec<String> = cfg.hidden.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "hidden = {}", hidden.join(", "));
    let _ = writeln!(out, "activation = {}", cfg.activation.name());
    let _ = writeln!(out, "n_classes = {}", cfg.n_classes);
    let _ = writeln!(out, "grl_lambda = {:?}", cfg.grl_lambda);
    let disc: Vec<String> = cfg.disc_hidden.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "disc_hidden = {}", disc.join(", "));
    let _ = writeln!(out, "disc_logit_cap = {:?}", cfg.disc_logit_cap);
    let _ = writeln!(
        out,
        "share_invariant_predictor = {}",
        cfg.share_invariant_predictor
    );
    let _ = writeln!(out, "has_complement = {}", !bundle.complement.is_empty());
    let _ = writeln!(out, "has_discriminator = {}", bundle.discriminator.is_some());
    if let Some(s) = meta.s {
        let _ = writeln!(out, "meta_s = {s:?}");
    }
    if let Some(mode) = &meta.mode {
        let _ = writeln!(out, "meta_mode = {mode}");
    }
    if let Some(seed) = meta.seed {
        let _ = writeln!(out, "meta_seed = {seed}");
    }
    let _ = writeln!(out, "params:");
    for (name, mat) in bundle.params.names.iter().zip(&bundle.params.mats) {
        let _ = writeln!(out, "param {name} {} {}", mat.rows(), mat.cols());
        for i in 0..mat.rows() {
            let row: Vec<String> = mat.row(i).iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, CheckpointMeta)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line: line + 1,
        msg,
    };

    let first = match lines.next() {
        Some((_, r)) => r?,
        None => return Err(perr(0, "empty checkpoint".into())),
    };
    if first.trim() != CKPT_MAGIC {
        return Err(perr(0, format!("expected magic {CKPT_MAGIC:?}")));
    }

    let mut cfg = ModelConfig::synthetic_default(1);
    let mut meta = CheckpointMeta::default();
    let mut has_complement = true;
    let mut has_discriminator = true;

    for (i, line) in lines.by_ref() {
        let line = line?;
        let line = line.trim();
        if line == "params:" {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(i, format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let ints = |v: &str| -> std::result::Result<Vec<usize>, String> {
            v.split(',').map(|p| parse_usize(p.trim())).collect()
        };
        match key {
            "n_modalities" => cfg.n_modalities = parse_usize(value).map_err(|m| perr(i, m))?,
            "input_dims" => cfg.input_dims = ints(value).map_err(|m| perr(i, m))?,
            "rep_dim_invariant" => {
                cfg.rep_dim_invariant = parse_usize(value).map_err(|m| perr(i, m))?
            }
            "rep_dim_specific" => {
                cfg.rep_dim_specific = parse_usize(value).map_err(|m| perr(i, m))?
            }
            "hidden" => cfg.hidden = ints(value).map_err(|m| perr(i, m))?,
            "activation" => cfg.activation = Activation::parse(value)?,
            "n_classes" => cfg.n_classes = parse_usize(value).map_err(|m| perr(i, m))?,
            "grl_lambda" => cfg.grl_lambda = parse_f64(value).map_err(|m| perr(i, m))?,
            "disc_hidden" => cfg.disc_hidden = ints(value).map_err(|m| perr(i, m))?,
            "disc_logit_cap" => cfg.disc_logit_cap = parse_f64(value).map_err(|m| perr(i, m))?,
            "share_invariant_predictor" => {
                cfg.share_invariant_predictor = parse_bool(value).map_err(|m| perr(i, m))?
            }
            "has_complement" => has_complement = parse_bool(value).map_err(|m| perr(i, m))?,
            "has_discriminator" => {
                has_discriminator = parse_bool(value).map_err(|m| perr(i, m))?
            }
            "meta_s" => meta.s = Some(parse_f64(value).map_err(|m| perr(i, m))?),
            "meta_mode" => meta.mode = Some(value.to_string()),
            "meta_seed" => meta.seed = Some(parse_u64(value).map_err(|m| perr(i, m))?),
            other => return Err(perr(i, format!("unknown checkpoint key {other:?}"))),
        }
    }

    let mut bundle = ModelBundle::build(cfg, has_complement, has_discriminator)?;

    let mut param_idx = 0usize;
    while let Some((i, line)) = lines.next() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rest = line
            .strip_prefix("param ")
            .ok_or_else(|| perr(i, format!("expected a param header, got {line:?}")))?;
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(perr(i, "param header needs `name rows cols`".into()));
        }
        let (name, rows, cols) = (
            parts[0],
            parse_usize(parts[1]).map_err(|m| perr(i, m))?,
            parse_usize(parts[2]).map_err(|m| perr(i, m))?,
        );
        if param_idx >= bundle.params.len() {
            return Err(perr(i, format!("unexpected extra parameter {name:?}")));
        }
        if bundle.params.names[param_idx] != name {
            return Err(perr(
                i,
                format!(
                    "parameter order mismatch: expected {:?}, got {name:?}",
                    bundle.params.names[param_idx]
                ),
            ));
        }
        if bundle.params.mats[param_idx].shape() != (rows, cols) {
            return Err(perr(
                i,
                format!(
                    "shape mismatch for {name:?}: header says {rows}x{cols}, structure wants {:?}",
                    bundle.params.mats[param_idx].shape()
                ),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ri, row) = lines
                .next()
                .ok_or_else(|| perr(i, format!("truncated data for {name:?}")))?;
            let row = row?;
            for tok in row.split_whitespace() {
                data.push(parse_f64(tok).map_err(|m| perr(ri, m))?);
            }
        }
        if data.len() != rows * cols {
            return Err(perr(
                i,
                format!("{name:?} has {} values, expected {}", data.len(), rows * cols),
            ));
        }
        bundle.params.mats[param_idx] = Matrix::raw(rows, cols, data);
        param_idx += 1;
    }
    if param_idx != bundle.params.len() {
        return Err(Error::validation(format!(
            "checkpoint holds {param_idx} parameters, structure wants {}",
            bundle.params.len()
        )));
    }
    Ok((bundle, meta))
}
