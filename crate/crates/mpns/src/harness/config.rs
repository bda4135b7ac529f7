//! Flat `key = value` experiment configuration. Every constant of the
//! synthetic protocol surfaces as a named key with its default; unknown keys
//! are rejected with line context.

use crate::loss::AblationMode;
use crate::model::{Activation, ModelConfig};
use crate::synth::{parse_bool, parse_f64, parse_u64, parse_usize, GenParams};
use crate::train::TrainConfig;
use crate::{Error, Result};
use std::path::Path;

/// Axes of the ablation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub s_values: Vec<f64>,
    pub modes: Vec<AblationMode>,
    pub seeds: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub base_seed: u64,
    /// Worker threads for grid cells; `None` uses every core.
    pub workers: Option<usize>,
    pub probe_epochs: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            s_values: vec![0.0, 0.3, 0.7],
            modes: AblationMode::ALL.to_vec(),
            seeds: 5,
            n_train: 15000,
            n_eval: 5000,
            base_seed: 0,
            workers: None,
            probe_epochs: 30,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() || self.modes.is_empty() {
            return Err(Error::validation("grid axes must be nonempty"));
        }
        if self.seeds == 0 {
            return Err(Error::validation("grid needs at least one seed"));
        }
        if self.n_train == 0 || self.n_eval == 0 {
            return Err(Error::validation("sample counts must be positive"));
        }
        for &s in &self.s_values {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::validation(format!(
                    "grid s value {s} outside [0, 1)"
                )));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.s_values.len() * self.modes.len() * self.seeds
    }
}

/// Everything a run needs: grid axes, generator constants, model shape, and
/// training schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub grid: ExperimentGrid,
    pub gen: GenParams,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for FullConfig {
    fn default() -> Self {
        let gen = GenParams::default();
        let model = ModelConfig::synthetic_default(gen.modality_dim());
        Self {
            grid: ExperimentGrid::default(),
            gen,
            model,
            train: TrainConfig::default(),
        }
    }
}

impl FullConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.gen.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<FullConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text, &path.display().to_string())
}

/// Parses a config from text. An empty file yields the full defaults.
pub fn parse_config_text(text: &str, origin: &str) -> Result<FullConfig> {
    let mut cfg = FullConfig::default();
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(lineno, format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let e = |m: String| perr(lineno, m);
        let floats = |v: &str| -> std::result::Result<Vec<f64>, String> {
            v.split(',').map(|p| parse_f64(p.trim())).collect()
        };
        let ints = |v: &str| -> std::result::Result<Vec<usize>, String> {
            v.split(',').map(|p| parse_usize(p.trim())).collect()
        };
        match key {
            // grid
            "s_values" => cfg.grid.s_values = floats(value).map_err(e)?,
            "modes" => {
                cfg.grid.modes = value
                    .split(',')
                    .map(|p| AblationMode::parse(p.trim()))
                    .collect::<Result<_>>()?
            }
            "seeds" => cfg.grid.seeds = parse_usize(value).map_err(e)?,
            "n_train" => cfg.grid.n_train = parse_usize(value).map_err(e)?,
            "n_eval" => cfg.grid.n_eval = parse_usize(value).map_err(e)?,
            "base_seed" => cfg.grid.base_seed = parse_u64(value).map_err(e)?,
            "workers" => cfg.grid.workers = Some(parse_usize(value).map_err(e)?),
            "probe_epochs" => cfg.grid.probe_epochs = parse_usize(value).map_err(e)?,
            // generator
            "d" => cfg.gen.d = parse_usize(value).map_err(e)?,
            "betas" => {
                let b = floats(value).map_err(e)?;
                if b.len() != 4 {
                    return Err(perr(lineno, "betas needs exactly 4 values".into()));
                }
                cfg.gen.betas = [b[0], b[1], b[2], b[3]];
            }
            "noise_std_h" => cfg.gen.noise_std_h = parse_f64(value).map_err(e)?,
            "noise_is_variance" => cfg.gen.noise_is_variance = parse_bool(value).map_err(e)?,
            "flip_prob" => cfg.gen.flip_prob = parse_f64(value).map_err(e)?,
            "sf_prob" => cfg.gen.sf_prob = parse_f64(value).map_err(e)?,
            "nc_prob" => cfg.gen.nc_prob = parse_f64(value).map_err(e)?,
            // model
            "rep_dim_invariant" => cfg.model.rep_dim_invariant = parse_usize(value).map_err(e)?,
            "rep_dim_specific" => cfg.model.rep_dim_specific = parse_usize(value).map_err(e)?,
            "hidden" => cfg.model.hidden = ints(value).map_err(e)?,
            "activation" => cfg.model.activation = Activation::parse(value)?,
            "n_classes" => cfg.model.n_classes = parse_usize(value).map_err(e)?,
            "grl_lambda" => cfg.model.grl_lambda = parse_f64(value).map_err(e)?,
            "disc_hidden" => cfg.model.disc_hidden = ints(value).map_err(e)?,
            "disc_logit_cap" => cfg.model.disc_logit_cap = parse_f64(value).map_err(e)?,
            "share_invariant_predictor" => {
                cfg.model.share_invariant_predictor = parse_bool(value).map_err(e)?
            }
            // training
            "epochs" => cfg.train.epochs = parse_usize(value).map_err(e)?,
            "batch_size" => cfg.train.batch_size = parse_usize(value).map_err(e)?,
            "disc_steps" => cfg.train.disc_steps = parse_usize(value).map_err(e)?,
            "disc_replay" => cfg.train.disc_replay = parse_usize(value).map_err(e)?,
            "lr" => cfg.train.adam.lr = parse_f64(value).map_err(e)?,
            "beta1" => cfg.train.adam.beta1 = parse_f64(value).map_err(e)?,
            "beta2" => cfg.train.adam.beta2 = parse_f64(value).map_err(e)?,
            "eps" => cfg.train.adam.eps = parse_f64(value).map_err(e)?,
            "resample_complement_labels" => {
                cfg.train.resample_complement_labels = parse_bool(value).map_err(e)?
            }
            "per_sample_products" => {
                cfg.train.loss.per_sample_products = parse_bool(value).map_err(e)?
            }
            "align_weight" => cfg.train.loss.align_weight = parse_f64(value).map_err(e)?,
            "orth_weight" => cfg.train.loss.orth_weight = parse_f64(value).map_err(e)?,
            "loss_abort_threshold" => {
                cfg.train.loss_abort_threshold = parse_f64(value).map_err(e)?
            }
            other => return Err(perr(lineno, format!("unknown config key {other:?}"))),
        }
    }

    // Model input widths follow the generator dimension.
    let dim = cfg.gen.modality_dim();
    cfg.model.input_dims = vec![dim; cfg.model.n_modalities];
    cfg.validate()?;
    Ok(cfg)
}
