//! The decoupling network: per-modality extractors that split each input
//! into invariant and specific representations, a complement extractor
//! mirroring the same architecture but trained toward wrong labels, shared
//! and per-modality predictors, a joint predictor over all representations,
//! and a modality discriminator reached through gradient reversal.

mod io;

pub use io::{load_checkpoint, save_checkpoint, CheckpointMeta};

use crate::autodiff::{Matrix, NodeId, Tape};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::validation(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_modalities: usize,
    /// Input width per modality, in modality order.
    pub input_dims: Vec<usize>,
    pub rep_dim_invariant: usize,
    pub rep_dim_specific: usize,
    /// Hidden widths of the extractor MLPs.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub n_classes: usize,
    pub grl_lambda: f64,
    /// Hidden widths of the modality discriminator (and of held-out probes).
    pub disc_hidden: Vec<usize>,
    /// Confidence bound on discriminator logits (`cap * tanh(z / cap)`);
    /// nonpositive disables the squashing.
    pub disc_logit_cap: f64,
    /// One invariant predictor shared across modalities, or one each.
    pub share_invariant_predictor: bool,
}

impl ModelConfig {
    /// Defaults for the synthetic two-modality task with per-modality input
    /// width `input_dim`.
    pub fn synthetic_default(input_dim: usize) -> Self {
        Self {
            n_modalities: 2,
            input_dims: vec![input_dim, input_dim],
            rep_dim_invariant: 20,
            rep_dim_specific: 20,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            n_classes: 2,
            grl_lambda: 1.0,
            disc_hidden: vec![32],
            disc_logit_cap: 2.0,
            share_invariant_predictor: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_modalities == 0 {
            return Err(Error::validation("need at least one modality"));
        }
        if self.input_dims.len() != self.n_modalities {
            return Err(Error::validation(format!(
                "{} input dims for {} modalities",
                self.input_dims.len(),
                self.n_modalities
            )));
        }
        if self.rep_dim_invariant == 0 || self.rep_dim_specific == 0 {
            return Err(Error::validation("representation dims must be at least 1"));
        }
        if self.hidden.is_empty() {
            return Err(Error::validation("extractor needs at least one hidden layer"));
        }
        if self.n_classes < 2 {
            return Err(Error::validation("need at least two classes"));
        }
        if self.grl_lambda < 0.0 {
            return Err(Error::validation("grl_lambda must be nonnegative"));
        }
        Ok(())
    }

    pub fn rep_dim_total(&self) -> usize {
        self.rep_dim_invariant + self.rep_dim_specific
    }

    /// Input width of the joint predictor.
    pub fn joint_input_dim(&self) -> usize {
        self.n_modalities * self.rep_dim_total()
    }
}

/// Flat store of named parameter matrices; everything else indexes into it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    pub mats: Vec<Matrix>,
    pub names: Vec<String>,
}

impl ParamStore {
    fn add(&mut self, name: String, m: Matrix) -> usize {
        self.mats.push(m);
        self.names.push(name);
        self.mats.len() - 1
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.mats.iter().map(Matrix::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One dense layer: parameter ids of its weight and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerIds {
    pub w: usize,
    pub b: usize,
}

/// An MLP as a list of layers over the store, with the activation applied
/// between layers (never after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub layers: Vec<LayerIds>,
    pub activation: Activation,
}

impl MlpSpec {
    fn build(store: &mut ParamStore, name: &str, dims: &[usize], activation: Activation) -> Self {
        let mut layers = Vec::new();
        for l in 0..dims.len() - 1 {
            let w = store.add(format!("{name}.l{l}.w"), Matrix::zeros(dims[l], dims[l + 1]));
            let b = store.add(format!("{name}.l{l}.b"), Matrix::zeros(1, dims[l + 1]));
            layers.push(LayerIds { w, b });
        }
        Self { layers, activation }
    }

    pub fn param_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers.iter().flat_map(|l| [l.w, l.b])
    }
}

/// All components of the network over one shared parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub params: ParamStore,
    /// Primary extractor, one MLP per modality.
    pub extractor: Vec<MlpSpec>,
    /// Complement extractor mirroring the primary shapes; empty once stripped.
    pub complement: Vec<MlpSpec>,
    /// Invariant predictor(s): one entry when shared, one per modality otherwise.
    pub pred_invariant: Vec<MlpSpec>,
    /// Per-modality specific predictors.
    pub pred_specific: Vec<MlpSpec>,
    pub pred_joint: MlpSpec,
    /// Modality discriminator; absent once stripped for inference.
    pub discriminator: Option<MlpSpec>,
}

/// Which extractor a forward pass reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Primary,
    Complement,
}

impl ModelBundle {
    /// Builds the structure with zero parameters.
    pub fn build(config: ModelConfig, with_complement: bool, with_discriminator: bool) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let act = config.activation;

        let extractor_dims = |m: usize| -> Vec<usize> {
            let mut dims = vec![config.input_dims[m]];
            dims.extend(&config.hidden);
            dims.push(config.rep_dim_total());
            dims
        };

        let extractor: Vec<MlpSpec> = (0..config.n_modalities)
            .map(|m| MlpSpec::build(&mut store, &format!("phi.m{m}"), &extractor_dims(m), act))
            .collect();
        let complement: Vec<MlpSpec> = if with_complement {
            (0..config.n_modalities)
                .map(|m| {
                    MlpSpec::build(&mut store, &format!("phibar.m{m}"), &extractor_dims(m), act)
                })
                .collect()
        } else {
            Vec::new()
        };

        let inv_heads = if config.share_invariant_predictor {
            1
        } else {
            config.n_modalities
        };
        let pred_invariant: Vec<MlpSpec> = (0..inv_heads)
            .map(|i| {
                MlpSpec::build(
                    &mut store,
                    &format!("f_inv.{i}"),
                    &[config.rep_dim_invariant, config.n_classes],
                    act,
                )
            })
            .collect();
        let pred_specific: Vec<MlpSpec> = (0..config.n_modalities)
            .map(|m| {
                MlpSpec::build(
                    &mut store,
                    &format!("f_spec.m{m}"),
                    &[config.rep_dim_specific, config.n_classes],
                    act,
                )
            })
            .collect();
        let pred_joint = MlpSpec::build(
            &mut store,
            "f_joint",
            &[config.joint_input_dim(), config.n_classes],
            act,
        );
        let discriminator = if with_discriminator {
            let mut dims = vec![config.rep_dim_specific];
            dims.extend(&config.disc_hidden);
            dims.push(config.n_modalities);
            Some(MlpSpec::build(&mut store, "disc", &dims, act))
        } else {
            None
        };

        Ok(Self {
            config,
            params: store,
            extractor,
            complement,
            pred_invariant,
            pred_specific,
            pred_joint,
            discriminator,
        })
    }

    /// Builds and randomizes a full bundle. Each parameter draws from its own
    /// ChaCha stream, so one component's initialization never shifts another's.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut bundle = Self::build(config, true, true)?;
        bundle.randomize(seed);
        Ok(bundle)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn randomize(&mut self, seed: u64) {
        for (idx, mat) in self.params.mats.iter_mut().enumerate() {
            let (rows, cols) = mat.shape();
            if rows == 1 && self.params.names[idx].ends_with(".b") {
                *mat = Matrix::zeros(rows, cols);
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let a = (6.0 / (rows + cols) as f64).sqrt();
            *mat = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a));
        }
    }

    /// Randomizes only the complement extractor and discriminator, leaving
    /// the inference path untouched.
    pub fn randomize_auxiliary(&mut self, seed: u64) {
        let mut aux_ids: Vec<usize> = Vec::new();
        for mlp in &self.complement {
            aux_ids.extend(mlp.param_ids());
        }
        if let Some(disc) = &self.discriminator {
            aux_ids.extend(disc.param_ids());
        }
        for idx in aux_ids {
            let (rows, cols) = self.params.mats[idx].shape();
            if rows == 1 && self.params.names[idx].ends_with(".b") {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let a = (6.0 / (rows + cols) as f64).sqrt();
            self.params.mats[idx] = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a));
        }
    }

    /// Parameter ids of the three predictor families; complement-branch
    /// passes must see these as constants.
    pub fn predictor_param_ids(&self) -> Vec<usize> {
        let mut ids = Vec::new();
        for mlp in self
            .pred_invariant
            .iter()
            .chain(&self.pred_specific)
            .chain(std::iter::once(&self.pred_joint))
        {
            ids.extend(mlp.param_ids());
        }
        ids
    }

    pub fn complement_param_ids(&self) -> Vec<usize> {
        self.complement.iter().flat_map(|m| m.param_ids().collect::<Vec<_>>()).collect()
    }

    pub fn discriminator_param_ids(&self) -> Vec<usize> {
        self.discriminator
            .iter()
            .flat_map(|m| m.param_ids().collect::<Vec<_>>())
            .collect()
    }

    /// Inference bundle: the complement extractor and discriminator are
    /// dropped; retained parameters are bit-copies.
    pub fn strip(&self) -> Result<ModelBundle> {
        let mut stripped = Self::build(self.config.clone(), false, false)?;
        for (idx, name) in stripped.params.names.iter().enumerate() {
            let src = self
                .params
                .index_of(name)
                .ok_or_else(|| Error::validation(format!("missing parameter {name:?}")))?;
            stripped.params.mats[idx] = self.params.mats[src].clone();
        }
        Ok(stripped)
    }

    fn invariant_head(&self, modality: usize) -> &MlpSpec {
        if self.config.share_invariant_predictor {
            &self.pred_invariant[0]
        } else {
            &self.pred_invariant[modality]
        }
    }
}

/// Registers every parameter as a trainable leaf; the returned table is
/// indexed by parameter id.
pub fn bind_trainable(tape: &mut Tape, store: &ParamStore) -> Vec<NodeId> {
    store
        .mats
        .iter()
        .map(|m| tape.param(m.clone()))
        .collect()
}

/// Copy of `table` with the predictor heads replaced by constants, so losses
/// built on the copy cannot push gradients into `F_I`, `F_M`, or `F_P`.
pub fn detach_heads(tape: &mut Tape, bundle: &ModelBundle, table: &[NodeId]) -> Vec<NodeId> {
    let mut detached = table.to_vec();
    for id in bundle.predictor_param_ids() {
        let value = bundle.params.mats[id].clone();
        detached[id] = tape.constant(value);
    }
    detached
}

/// MLP forward through a parameter table.
pub fn mlp_forward(tape: &mut Tape, table: &[NodeId], spec: &MlpSpec, x: NodeId) -> Result<NodeId> {
    let mut h = x;
    let last = spec.layers.len() - 1;
    for (l, layer) in spec.layers.iter().enumerate() {
        h = tape.matmul(h, table[layer.w])?;
        h = tape.add_row(h, table[layer.b])?;
        if l != last {
            h = match spec.activation {
                Activation::Tanh => tape.tanh(h),
                Activation::Relu => tape.relu(h),
            };
        }
    }
    Ok(h)
}

/// Runs the selected extractor on a batch and splits the output into the
/// invariant columns and the specific columns.
pub fn extract(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    x: NodeId,
    modality: usize,
    which: Which,
) -> Result<(NodeId, NodeId)> {
    let cfg = &bundle.config;
    if modality >= cfg.n_modalities {
        return Err(Error::validation(format!(
            "modality {modality} out of range for {} modalities",
            cfg.n_modalities
        )));
    }
    let width = tape.value(x).cols();
    if width != cfg.input_dims[modality] {
        return Err(Error::dim(
            "extract",
            (tape.value(x).rows(), width),
            (tape.value(x).rows(), cfg.input_dims[modality]),
        ));
    }
    let spec = match which {
        Which::Primary => &bundle.extractor[modality],
        Which::Complement => bundle.complement.get(modality).ok_or_else(|| {
            Error::validation("bundle has no complement extractor (stripped for inference?)")
        })?,
    };
    let out = mlp_forward(tape, table, spec, x)?;
    let bounded = std::env::var("BOUND_REPS").map(|v| v == "1").unwrap_or(false);
    let out = if bounded { tape.tanh(out) } else { out };
    let r_inv = tape.slice_cols(out, 0, cfg.rep_dim_invariant)?;
    let r_spec = tape.slice_cols(out, cfg.rep_dim_invariant, cfg.rep_dim_total())?;
    let bn = std::env::var("BN_SPEC").map(|v| v == "1").unwrap_or(false);
    let r_spec = if bn { batch_standardize(tape, r_spec)? } else { r_spec };
    Ok((r_inv, r_spec))
}

/// Per-column batch standardization: `(x - mean) / sqrt(var + eps)` with the
/// statistics taken over the batch dimension.
pub fn batch_standardize(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let (n, _k) = {
        let v = tape.value(x);
        (v.rows(), v.cols())
    };
    if n < 2 {
        return Err(Error::validation(
            "batch standardization needs at least two rows",
        ));
    }
    let averager = tape.constant(Matrix::filled(1, n, 1.0 / n as f64));
    let mean = tape.matmul(averager, x)?;
    let neg_mean = tape.neg(mean);
    let centered = tape.add_row(x, neg_mean)?;
    let squares = tape.mul(x, x)?;
    let mean_sq = tape.matmul(averager, squares)?;
    let mean_mean = tape.mul(mean, mean)?;
    let var = tape.sub(mean_sq, mean_mean)?;
    let var_eps = tape.add_scalar(var, 1e-8);
    let std = tape.sqrt(var_eps);
    tape.div_row(centered, std)
}

/// Logits of the invariant predictor. With a shared head the modality index
/// only documents provenance; the parameters are the same.
pub fn predict_invariant(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    r_inv: NodeId,
    modality: usize,
) -> Result<NodeId> {
    mlp_forward(tape, table, bundle.invariant_head(modality), r_inv)
}

/// Logits of modality `m`'s specific predictor.
pub fn predict_specific(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    r_spec: NodeId,
    modality: usize,
) -> Result<NodeId> {
    mlp_forward(tape, table, &bundle.pred_specific[modality], r_spec)
}

/// Logits of the joint predictor over `[r_inv, r_spec]` of every modality,
/// concatenated in modality order.
pub fn predict_joint(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    reps: &[(NodeId, NodeId)],
) -> Result<NodeId> {
    if reps.len() != bundle.config.n_modalities {
        return Err(Error::validation(format!(
            "joint predictor needs all {} modalities, got {}",
            bundle.config.n_modalities,
            reps.len()
        )));
    }
    let mut cols = Vec::with_capacity(2 * reps.len());
    for &(inv, spec) in reps {
        cols.push(inv);
        cols.push(spec);
    }
    let joined = tape.concat_cols(&cols)?;
    mlp_forward(tape, table, &bundle.pred_joint, joined)
}

/// Discriminator logits over a specific representation, with the gradient
/// reversal in front: the discriminator's own parameters receive plain
/// gradients, everything upstream receives `-lambda` times them.
pub fn discriminate_modality(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    r_spec: NodeId,
    grl_lambda: f64,
) -> Result<NodeId> {
    let disc = bundle.discriminator.as_ref().ok_or_else(|| {
        Error::validation("bundle has no discriminator (stripped for inference?)")
    })?;
    let reversed = tape.gradient_reversal(r_spec, grl_lambda)?;
    let logits = mlp_forward(tape, table, disc, reversed)?;
    // Squashing the logits bounds the discriminator's confidence, so its
    // gradient toward the extractors never saturates to zero however far
    // apart the two representation distributions sit.
    let cap = std::env::var("DISC_CAP").ok().and_then(|v| v.parse().ok()).unwrap_or(bundle.config.disc_logit_cap);
    if cap > 0.0 {
        let inner = tape.scale(logits, 1.0 / cap);
        let squashed = tape.tanh(inner);
        Ok(tape.scale(squashed, cap))
    } else {
        Ok(logits)
    }
}

/// Labels drawn uniformly from the classes other than each `y_i`.
pub fn generate_complement_labels(
    y: &[usize],
    n_classes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if n_classes < 2 {
        return Err(Error::validation(
            "complement labels need at least two classes",
        ));
    }
    y.iter()
        .map(|&yi| {
            if yi >= n_classes {
                return Err(Error::validation(format!(
                    "label {yi} out of range for {n_classes} classes"
                )));
            }
            let r = rng.gen_range(0..n_classes - 1);
            Ok(if r >= yi { r + 1 } else { r })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::{central_diff_grad, max_rel_err, FD_FLOOR, FD_STEP, FD_TOL};

    fn test_config() -> ModelConfig {
        ModelConfig::synthetic_default(40)
    }

    #[test]
    fn mirrored_extractors_share_shape_signatures() {
        let b = ModelBundle::init(test_config(), 1).unwrap();
        for m in 0..2 {
            let phi: Vec<_> = b.extractor[m]
                .param_ids()
                .map(|i| b.params.mats[i].shape())
                .collect();
            let phibar: Vec<_> = b.complement[m]
                .param_ids()
                .map(|i| b.params.mats[i].shape())
                .collect();
            assert_eq!(phi, phibar);
        }
        let phi_count: usize = b
            .extractor
            .iter()
            .flat_map(|m| m.param_ids())
            .map(|i| b.params.mats[i].len())
            .sum();
        let phibar_count: usize = b
            .complement
            .iter()
            .flat_map(|m| m.param_ids())
            .map(|i| b.params.mats[i].len())
            .sum();
        assert_eq!(phi_count, phibar_count);
    }

    #[test]
    fn zero_bundle_produces_zero_reps_and_uniform_logits() {
        let b = ModelBundle::build(test_config(), true, true).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let x = tape.constant(Matrix::filled(3, 40, 0.7));
        let (inv, spec) = extract(&mut tape, &table, &b, x, 0, Which::Primary).unwrap();
        assert_eq!(tape.value(inv).shape(), (3, 20));
        assert_eq!(tape.value(spec).shape(), (3, 20));
        assert!(tape.value(inv).as_slice().iter().all(|&v| v == 0.0));

        let logits = predict_invariant(&mut tape, &table, &b, inv, 0).unwrap();
        let ce = tape.softmax_cross_entropy(logits, &[0, 1, 0]).unwrap();
        assert!((tape.value(ce).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn identical_parameters_make_complement_mirror_primary() {
        let mut b = ModelBundle::init(test_config(), 2).unwrap();
        // Copy primary weights into the complement extractor.
        for m in 0..2 {
            let pairs: Vec<(usize, usize)> = b.extractor[m]
                .param_ids()
                .zip(b.complement[m].param_ids())
                .collect();
            for (src, dst) in pairs {
                b.params.mats[dst] = b.params.mats[src].clone();
            }
        }
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let x = tape.constant(Matrix::from_fn(4, 40, |i, j| ((i + j) as f64 * 0.13).sin()));
        let (pi, ps) = extract(&mut tape, &table, &b, x, 1, Which::Primary).unwrap();
        let (ci, cs) = extract(&mut tape, &table, &b, x, 1, Which::Complement).unwrap();
        assert_eq!(tape.value(pi), tape.value(ci));
        assert_eq!(tape.value(ps), tape.value(cs));
    }

    #[test]
    fn shared_invariant_head_is_bit_identical_across_modalities() {
        let b = ModelBundle::init(test_config(), 3).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let r = tape.constant(Matrix::from_fn(5, 20, |i, j| (i as f64 - j as f64) * 0.07));
        let l0 = predict_invariant(&mut tape, &table, &b, r, 0).unwrap();
        let l1 = predict_invariant(&mut tape, &table, &b, r, 1).unwrap();
        assert_eq!(tape.value(l0), tape.value(l1));
        assert_eq!(tape.value(l0).shape(), (5, 2));
    }

    #[test]
    fn specific_heads_differ_across_modalities() {
        let b = ModelBundle::init(test_config(), 4).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let r = tape.constant(Matrix::from_fn(2, 20, |i, j| (i + j) as f64 * 0.05));
        let l0 = predict_specific(&mut tape, &table, &b, r, 0).unwrap();
        let l1 = predict_specific(&mut tape, &table, &b, r, 1).unwrap();
        assert_ne!(tape.value(l0), tape.value(l1));
    }

    #[test]
    fn joint_predictor_width_and_order_sensitivity() {
        let b = ModelBundle::init(test_config(), 5).unwrap();
        assert_eq!(b.config.joint_input_dim(), 80);
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let mk = |tape: &mut Tape, k: u64| {
            tape.constant(Matrix::from_fn(3, 20, |i, j| {
                ((i * 20 + j) as f64 * 0.11 + k as f64).cos()
            }))
        };
        let a = mk(&mut tape, 0);
        let s = mk(&mut tape, 1);
        let c = mk(&mut tape, 2);
        let d = mk(&mut tape, 3);
        let fwd = predict_joint(&mut tape, &table, &b, &[(a, s), (c, d)]).unwrap();
        let swapped = predict_joint(&mut tape, &table, &b, &[(c, d), (a, s)]).unwrap();
        assert_ne!(tape.value(fwd), tape.value(swapped));
        assert!(predict_joint(&mut tape, &table, &b, &[(a, s)]).is_err());
    }

    #[test]
    fn discriminator_forward_is_lambda_independent() {
        let b = ModelBundle::init(test_config(), 6).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let r = tape.constant(Matrix::from_fn(4, 20, |i, j| (i as f64 * 0.3 - j as f64 * 0.2).sin()));
        let l0 = discriminate_modality(&mut tape, &table, &b, r, 0.0).unwrap();
        let l1 = discriminate_modality(&mut tape, &table, &b, r, 1.0).unwrap();
        assert_eq!(tape.value(l0), tape.value(l1));
        assert_eq!(tape.value(l1).shape(), (4, 2));
    }

    #[test]
    fn discriminator_input_gradient_is_minus_lambda_times_plain() {
        let b = ModelBundle::init(test_config(), 7).unwrap();
        let rep = Matrix::from_fn(3, 20, |i, j| ((i * 7 + j) as f64 * 0.19).sin());
        let labels = vec![0usize, 1, 0];
        let lambda = 0.7;

        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let r = tape.param(rep.clone());
        let logits = discriminate_modality(&mut tape, &table, &b, r, lambda).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &labels).unwrap();
        tape.backward(loss).unwrap();
        let got = tape.grad_or_zero(r);

        // Finite differences on the same network without any reversal.
        let mut f = |xs: &[Matrix]| {
            let mut t = Tape::new();
            let table = bind_trainable(&mut t, &b.params);
            let r = t.constant(xs[0].clone());
            let disc = b.discriminator.as_ref().unwrap();
            let logits = mlp_forward(&mut t, &table, disc, r).unwrap();
            let loss = t.softmax_cross_entropy(logits, &labels).unwrap();
            t.value(loss).item()
        };
        let fd = central_diff_grad(&mut f, &[rep], FD_STEP);
        let expected = fd[0].map(|v| -lambda * v);
        let err = max_rel_err(&got, &expected, FD_FLOOR);
        assert!(err < FD_TOL, "rel err {err}");
    }

    #[test]
    fn complement_labels_never_collide_and_spread_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<usize> = (0..100_000).map(|i| i % 2).collect();
        let ybar = generate_complement_labels(&y, 2, &mut rng).unwrap();
        assert!(y.iter().zip(&ybar).all(|(a, b)| a != b));
        // Binary case is deterministic.
        assert!(ybar.iter().zip(&y).all(|(&b, &a)| b == 1 - a));

        let y3 = vec![2usize; 10_000];
        let ybar3 = generate_complement_labels(&y3, 3, &mut rng).unwrap();
        let zeros = ybar3.iter().filter(|&&v| v == 0).count() as f64 / 10_000.0;
        assert!(ybar3.iter().all(|&v| v != 2));
        assert!((zeros - 0.5).abs() < 0.02, "P(0) = {zeros}");

        assert!(generate_complement_labels(&[0], 1, &mut rng).is_err());
    }

    #[test]
    fn detached_heads_block_gradients_into_predictors() {
        let b = ModelBundle::init(test_config(), 9).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let detached = detach_heads(&mut tape, &b, &table);
        let x = tape.constant(Matrix::from_fn(4, 40, |i, j| ((i + 2 * j) as f64 * 0.07).sin()));
        let (ci, _) = extract(&mut tape, &detached, &b, x, 0, Which::Complement).unwrap();
        let logits = predict_invariant(&mut tape, &detached, &b, ci, 0).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[1, 0, 1, 0]).unwrap();
        tape.backward(loss).unwrap();

        for id in b.predictor_param_ids() {
            assert!(tape.grad(table[id]).is_none(), "head {id} received gradient");
        }
        let phibar_grads: f64 = b.complement[0]
            .param_ids()
            .map(|id| tape.grad_or_zero(table[id]).max_abs())
            .sum();
        assert!(phibar_grads > 0.0, "complement extractor should learn");
    }

    #[test]
    fn stripped_bundle_drops_auxiliary_parameters() {
        let b = ModelBundle::init(test_config(), 10).unwrap();
        let s = b.strip().unwrap();
        assert!(s.complement.is_empty());
        assert!(s.discriminator.is_none());
        assert!(s.params.total_scalars() < b.params.total_scalars());
        // Retained parameters are bit-copies.
        for (idx, name) in s.params.names.iter().enumerate() {
            let src = b.params.index_of(name).unwrap();
            assert_eq!(s.params.mats[idx], b.params.mats[src]);
        }
    }

    #[test]
    fn width_mismatch_is_a_dimension_error() {
        let b = ModelBundle::init(test_config(), 11).unwrap();
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &b.params);
        let x = tape.constant(Matrix::zeros(2, 39));
        assert!(extract(&mut tape, &table, &b, x, 0, Which::Primary).is_err());
    }
}
