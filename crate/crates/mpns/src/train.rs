//! Joint minibatch training of the extractors, predictors, and discriminator
//! under the combined objective. One backward pass per batch covers the
//! extractors and predictors; gradient reversal inside the discriminator
//! path supplies the adversarial sign flip. The discriminator itself is
//! trained by its own optimizer for a few refinement steps per batch, which
//! keeps it close to its best response; a lagging discriminator lets the
//! extractors merely orbit it instead of actually removing modality
//! information.
//!
//! Determinism: epoch shuffles, complement-label draws, and initialization
//! read from separate seed-derived ChaCha streams, so every ablation of the
//! same `(seed, dataset)` pair sees identical batch schedules and identical
//! primary-extractor initialization.

use crate::autodiff::{adam_step, AdamConfig, AdamState, Matrix, NodeId, Tape};
use crate::loss::{build_step_loss, AblationMode, LossBreakdown, LossConfig, LossWeights};
use crate::model::{
    bind_trainable, discriminate_modality, generate_complement_labels, ModelBundle, ModelConfig,
    Which,
};
use crate::synth::Dataset;
use crate::{Error, Result};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub mode: AblationMode,
    /// Explicit term weights; `None` uses the mode's table.
    pub weights: Option<LossWeights>,
    pub loss: LossConfig,
    /// Draw fresh wrong labels every epoch instead of fixing them per sample.
    pub resample_complement_labels: bool,
    /// Discriminator refinement steps per batch (its own optimizer).
    pub disc_steps: usize,
    /// Replay window (in batches) the discriminator refits on.
    pub disc_replay: usize,
    /// Abort when any loss term exceeds this or stops being finite.
    pub loss_abort_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            adam: AdamConfig::default(),
            seed: 0,
            mode: AblationMode::FullMpns,
            weights: None,
            loss: LossConfig::default(),
            resample_complement_labels: true,
            disc_steps: 5,
            disc_replay: 16,
            loss_abort_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::validation("batch_size must be at least 2"));
        }
        if let Some(w) = &self.weights {
            w.validate()?;
        }
        Ok(())
    }

    pub fn effective_weights(&self) -> LossWeights {
        self.weights.unwrap_or_else(|| self.mode.weights())
    }
}

/// The trained bundle plus the per-epoch loss trajectory.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub epochs: Vec<LossBreakdown>,
    pub bundle: ModelBundle,
    pub wall_secs: f64,
}

// Seed-derivation tags for the trainer's RNG streams.
const STREAM_SHUFFLE: u64 = 0x5348;
const STREAM_COMPLEMENT: u64 = 0x434f;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Dataset columns packed into matrices, one per modality, plus labels.
pub struct PackedData {
    pub xs: Vec<Matrix>,
    pub y: Vec<usize>,
}

pub fn pack_dataset(ds: &Dataset) -> PackedData {
    let n = ds.samples.len();
    let dim = ds.params.modality_dim();
    let mut x1 = Vec::with_capacity(n * dim);
    let mut x2 = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for s in &ds.samples {
        x1.extend_from_slice(&s.x1);
        x2.extend_from_slice(&s.x2);
        y.push(s.y as usize);
    }
    PackedData {
        xs: vec![Matrix::raw(n, dim, x1), Matrix::raw(n, dim, x2)],
        y,
    }
}

/// Trains a fresh bundle on the dataset. The model is initialized from
/// `train.seed`; pass a pre-built bundle via [`train_from`] to control
/// initialization separately.
pub fn train(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
) -> Result<TrainRecord> {
    let bundle = ModelBundle::init(model_cfg.clone(), train_cfg.seed)?;
    train_from(bundle, train_cfg, dataset)
}

/// Trains an already initialized bundle in place.
pub fn train_from(
    mut bundle: ModelBundle,
    train_cfg: &TrainConfig,
    dataset: &Dataset,
) -> Result<TrainRecord> {
    train_cfg.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    let start = Instant::now();
    let weights = train_cfg.effective_weights();
    weights.validate()?;
    let n_mod = bundle.config.n_modalities;
    let n = dataset.samples.len();
    let data = pack_dataset(dataset);
    let n_classes = bundle.config.n_classes;

    let mut shuffle_rng = stream_rng(train_cfg.seed, STREAM_SHUFFLE);
    let mut complement_rng = stream_rng(train_cfg.seed, STREAM_COMPLEMENT);
    let needs_complement = weights.needs_complement();

    // Fixed-per-sample complement labels, drawn once if resampling is off.
    let mut fixed_ybar: Option<Vec<usize>> = None;
    if needs_complement && !train_cfg.resample_complement_labels {
        fixed_ybar = Some(generate_complement_labels(
            &data.y,
            n_classes,
            &mut complement_rng,
        )?);
    }

    let mut adam_state = AdamState::new(&bundle.params.mats);
    let disc_ids = bundle.discriminator_param_ids();
    let disc_mats: Vec<Matrix> = disc_ids.iter().map(|&id| bundle.params.mats[id].clone()).collect();
    let mut disc_state = AdamState::new(&disc_mats);
    let train_disc = weights.needs_adversarial() && !disc_ids.is_empty() && train_cfg.disc_steps > 0;
    // Recent representation batches; fitting the discriminator on this
    // window instead of the single current batch damps adversarial limit
    // cycles, where the extractors merely swap their clouds each step.
    let mut replay: std::collections::VecDeque<(Matrix, usize)> = std::collections::VecDeque::new();
    let replay_cap = train_cfg.disc_replay * (2 * bundle.config.n_modalities);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(train_cfg.epochs);

    for epoch in 0..train_cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let epoch_ybar: Option<Vec<usize>> = if needs_complement {
            match &fixed_ybar {
                Some(fixed) => Some(fixed.clone()),
                None => Some(generate_complement_labels(
                    &data.y,
                    n_classes,
                    &mut complement_rng,
                )?),
            }
        } else {
            None
        };

        let mut epoch_sum = LossBreakdown::zeros(n_mod);
        let mut batches = 0usize;
        for chunk in indices.chunks(train_cfg.batch_size) {
            let mut tape = Tape::new();
            let table = bind_trainable(&mut tape, &bundle.params);
            let x_nodes: Vec<NodeId> = data
                .xs
                .iter()
                .map(|x| tape.constant(x.gather_rows(chunk)))
                .collect();
            let y: Vec<usize> = chunk.iter().map(|&i| data.y[i]).collect();
            let ybar: Option<Vec<usize>> = epoch_ybar
                .as_ref()
                .map(|all| chunk.iter().map(|&i| all[i]).collect());

            let step = build_step_loss(
                &mut tape,
                &bundle,
                &table,
                &x_nodes,
                &y,
                ybar.as_deref(),
                &weights,
                &train_cfg.loss,
            )?;

            for (term, value) in step.breakdown.terms() {
                if !value.is_finite() || value.abs() > train_cfg.loss_abort_threshold {
                    return Err(Error::Divergence {
                        term,
                        value,
                        epoch: epoch + 1,
                    });
                }
            }

            tape.backward(step.total)?;
            let mut grads: Vec<Matrix> = table.iter().map(|&id| tape.grad_or_zero(id)).collect();
            // The discriminator learns only in its refinement steps below.
            if train_disc {
                for &id in &disc_ids {
                    let (r, c) = grads[id].shape();
                    grads[id] = Matrix::zeros(r, c);
                }
            }
            adam_step(&mut bundle.params.mats, &grads, &mut adam_state, &train_cfg.adam)?;

            if train_disc {
                for (m, &node) in step.primary_spec.iter().enumerate() {
                    replay.push_back((tape.value(node).clone(), m));
                }
                for (m, &node) in step.complement_spec.iter().enumerate() {
                    replay.push_back((tape.value(node).clone(), m));
                }
                while replay.len() > replay_cap {
                    replay.pop_front();
                }
                let batches: Vec<(Matrix, usize)> = replay.iter().cloned().collect();
                let k = std::env::var("DISC_K").ok().and_then(|v| v.parse().ok()).unwrap_or(train_cfg.disc_steps);
                for _ in 0..k {
                    discriminator_refinement_step(
                        &mut bundle,
                        &disc_ids,
                        &mut disc_state,
                        &train_cfg.adam,
                        &batches,
                    )?;
                }
            }

            epoch_sum.add(&step.breakdown);
            batches += 1;
        }
        epoch_sum.scale(1.0 / batches as f64);
        epochs.push(epoch_sum);
    }

    Ok(TrainRecord {
        epochs,
        bundle,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// One discriminator-only update on detached representation batches: the
/// classification loss summed over sources, gradients into the discriminator
/// parameters alone.
fn discriminator_refinement_step(
    bundle: &mut ModelBundle,
    disc_ids: &[usize],
    state: &mut AdamState,
    adam: &AdamConfig,
    rep_batches: &[(Matrix, usize)],
) -> Result<()> {
    let mut tape = Tape::new();
    let dummy = tape.constant(Matrix::scalar(0.0));
    let mut table = vec![dummy; bundle.params.len()];
    for &id in disc_ids {
        table[id] = tape.param(bundle.params.mats[id].clone());
    }
    let mut total: Option<NodeId> = None;
    for (rep, modality) in rep_batches {
        let x = tape.constant(rep.clone());
        let logits = discriminate_modality(&mut tape, &table, bundle, x, 0.0)?;
        let labels = vec![*modality; rep.rows()];
        let ce = tape.softmax_cross_entropy(logits, &labels)?;
        total = Some(match total {
            Some(t) => tape.add(t, ce)?,
            None => ce,
        });
    }
    let Some(total) = total else { return Ok(()) };
    tape.backward(total)?;
    let grads: Vec<Matrix> = disc_ids.iter().map(|&id| tape.grad_or_zero(table[id])).collect();
    let mut mats: Vec<Matrix> = disc_ids.iter().map(|&id| bundle.params.mats[id].clone()).collect();
    adam_step(&mut mats, &grads, state, adam)?;
    for (&id, m) in disc_ids.iter().zip(mats) {
        bundle.params.mats[id] = m;
    }
    Ok(())
}

/// Prediction-only bundle: the complement extractor and discriminator are
/// dropped, the retained path is parameter-identical to the trained one.
pub fn inference_model(record: &TrainRecord) -> Result<ModelBundle> {
    record.bundle.strip()
}

/// Argmax labels of the joint predictor over a packed dataset, evaluated in
/// chunks. Works for both full and stripped bundles.
pub fn predict_labels(bundle: &ModelBundle, data: &PackedData) -> Result<Vec<usize>> {
    let n = data.y.len();
    let mut out = Vec::with_capacity(n);
    let chunk_size = 512;
    let mut start = 0;
    while start < n {
        let end = (start + chunk_size).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let mut tape = Tape::new();
        let table: Vec<NodeId> = bundle
            .params
            .mats
            .iter()
            .map(|m| tape.constant(m.clone()))
            .collect();
        let mut reps = Vec::with_capacity(bundle.config.n_modalities);
        for m in 0..bundle.config.n_modalities {
            let x = tape.constant(data.xs[m].gather_rows(&idx));
            let (inv, spec) = crate::model::extract(&mut tape, &table, bundle, x, m, Which::Primary)?;
            reps.push((inv, spec));
        }
        let logits = crate::model::predict_joint(&mut tape, &table, bundle, &reps)?;
        let lv = tape.value(logits);
        for i in 0..lv.rows() {
            let row = lv.row(i);
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap();
            out.push(best);
        }
        start = end;
    }
    Ok(out)
}

/// Appends the per-epoch loss table as CSV.
pub fn write_train_log(record: &TrainRecord, n_modalities: usize, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", LossBreakdown::csv_header(n_modalities))?;
    for (e, b) in record.epochs.iter().enumerate() {
        writeln!(f, "{}", b.csv_row(e + 1))?;
    }
    Ok(())
}
