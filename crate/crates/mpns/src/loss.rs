//! Objective terms for one training step.
//!
//! The base decoupling objective combines the joint prediction loss, a
//! decoupling constraint (cross-modal alignment of invariant representations
//! plus invariant/specific orthogonality), and per-part prediction losses.
//! On top of it sit the complement branch (the mirrored extractor trained
//! toward wrong labels), per-part monotonicity products pairing each correct
//! loss with its complement counterpart, and the adversarial modality
//! confusion term.
//!
//! Gradient routing: every complement-branch term is built against a
//! parameter table whose predictor heads are detached constants, so those
//! terms can only move the complement extractor. The monotonicity products
//! therefore push the primary extractor through their correct factor and the
//! complement extractor through their complement factor.

use crate::autodiff::{NodeId, Tape};
use crate::model::{
    discriminate_modality, extract, predict_invariant, predict_joint, predict_specific,
    ModelBundle, Which,
};
use crate::{Error, Result};

const COSINE_EPS: f64 = 1e-12;

/// The four training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationMode {
    FullMpns,
    WoPns,
    WoInvPns,
    WoSpecPns,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::FullMpns,
        AblationMode::WoPns,
        AblationMode::WoInvPns,
        AblationMode::WoSpecPns,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationMode::FullMpns => "full_mpns",
            AblationMode::WoPns => "wo_pns",
            AblationMode::WoInvPns => "wo_inv_pns",
            AblationMode::WoSpecPns => "wo_spec_pns",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full_mpns" => Ok(AblationMode::FullMpns),
            "wo_pns" => Ok(AblationMode::WoPns),
            "wo_inv_pns" => Ok(AblationMode::WoInvPns),
            "wo_spec_pns" => Ok(AblationMode::WoSpecPns),
            other => Err(Error::validation(format!(
                "unknown ablation mode {other:?}"
            ))),
        }
    }

    /// Term weights realizing this ablation.
    pub fn weights(self) -> LossWeights {
        let mut w = LossWeights::default();
        match self {
            AblationMode::FullMpns => {}
            AblationMode::WoPns => {
                w.bar_pred = 0.0;
                w.adv = 0.0;
                w.bar_inv = 0.0;
                w.inv_c = 0.0;
                w.bar_spec = 0.0;
                w.spec_c = 0.0;
            }
            AblationMode::WoInvPns => {
                w.bar_inv = 0.0;
                w.inv_c = 0.0;
            }
            AblationMode::WoSpecPns => {
                w.bar_spec = 0.0;
                w.spec_c = 0.0;
            }
        }
        w
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-term weights in the joint objective. All default to 1; ablations zero
/// their targets. A term with weight 0 is skipped entirely: it contributes
/// neither gradients nor compute, and reports 0 in the breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pred: f64,
    pub dec: f64,
    pub inv: f64,
    pub spec: f64,
    pub bar_pred: f64,
    pub bar_inv: f64,
    pub inv_c: f64,
    pub bar_spec: f64,
    pub spec_c: f64,
    pub adv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pred: 1.0,
            dec: 1.0,
            inv: 1.0,
            spec: 1.0,
            bar_pred: 1.0,
            bar_inv: 1.0,
            inv_c: 1.0,
            bar_spec: 1.0,
            spec_c: 1.0,
            adv: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("pred", self.pred),
            ("dec", self.dec),
            ("inv", self.inv),
            ("spec", self.spec),
            ("bar_pred", self.bar_pred),
            ("bar_inv", self.bar_inv),
            ("inv_c", self.inv_c),
            ("bar_spec", self.bar_spec),
            ("spec_c", self.spec_c),
            ("adv", self.adv),
        ] {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::validation(format!(
                    "loss weight {name} must be a nonnegative number, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn needs_complement(&self) -> bool {
        self.bar_pred > 0.0
            || self.bar_inv > 0.0
            || self.inv_c > 0.0
            || self.bar_spec > 0.0
            || self.spec_c > 0.0
    }

    pub fn needs_adversarial(&self) -> bool {
        self.adv > 0.0
    }
}

/// How the monotonicity products and decoupling constraint are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight on the cross-modal invariant alignment inside the decoupling
    /// constraint.
    pub align_weight: f64,
    /// Weight on the invariant/specific orthogonality penalty.
    pub orth_weight: f64,
    /// Pair per-sample losses before averaging instead of multiplying the
    /// two batch means.
    pub per_sample_products: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            align_weight: 0.1,
            orth_weight: 0.1,
            per_sample_products: false,
        }
    }
}

/// Every term's unweighted value on one batch, plus the weighted total.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_pred: f64,
    pub l_dec: f64,
    pub l_inv: Vec<f64>,
    pub l_spec: Vec<f64>,
    pub lbar_pred: f64,
    pub lbar_inv: Vec<f64>,
    pub lbar_spec: Vec<f64>,
    pub l_inv_c: Vec<f64>,
    pub l_spec_c: Vec<f64>,
    pub l_adv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn zeros(n_modalities: usize) -> Self {
        Self {
            l_inv: vec![0.0; n_modalities],
            l_spec: vec![0.0; n_modalities],
            lbar_inv: vec![0.0; n_modalities],
            lbar_spec: vec![0.0; n_modalities],
            l_inv_c: vec![0.0; n_modalities],
            l_spec_c: vec![0.0; n_modalities],
            ..Self::default()
        }
    }

    /// Recomputes the weighted sum from the recorded terms.
    pub fn weighted_sum(&self, w: &LossWeights) -> f64 {
        let mut total = w.pred * self.l_pred + w.dec * self.l_dec;
        for m in 0..self.l_inv.len() {
            total += w.inv * self.l_inv[m] + w.spec * self.l_spec[m];
            total += w.bar_inv * self.lbar_inv[m] + w.inv_c * self.l_inv_c[m];
            total += w.bar_spec * self.lbar_spec[m] + w.spec_c * self.l_spec_c[m];
        }
        total += w.bar_pred * self.lbar_pred + w.adv * self.l_adv;
        total
    }

    /// Running sum for per-epoch averaging.
    pub fn add(&mut self, other: &LossBreakdown) {
        self.l_pred += other.l_pred;
        self.l_dec += other.l_dec;
        self.lbar_pred += other.lbar_pred;
        self.l_adv += other.l_adv;
        self.total += other.total;
        for m in 0..self.l_inv.len() {
            self.l_inv[m] += other.l_inv[m];
            self.l_spec[m] += other.l_spec[m];
            self.lbar_inv[m] += other.lbar_inv[m];
            self.lbar_spec[m] += other.lbar_spec[m];
            self.l_inv_c[m] += other.l_inv_c[m];
            self.l_spec_c[m] += other.l_spec_c[m];
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.l_pred *= c;
        self.l_dec *= c;
        self.lbar_pred *= c;
        self.l_adv *= c;
        self.total *= c;
        for m in 0..self.l_inv.len() {
            self.l_inv[m] *= c;
            self.l_spec[m] *= c;
            self.lbar_inv[m] *= c;
            self.lbar_spec[m] *= c;
            self.l_inv_c[m] *= c;
            self.l_spec_c[m] *= c;
        }
    }

    /// `(term name, value)` pairs, for the divergence guard and diagnostics.
    pub fn terms(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("l_pred".to_string(), self.l_pred),
            ("l_dec".to_string(), self.l_dec),
            ("lbar_pred".to_string(), self.lbar_pred),
            ("l_adv".to_string(), self.l_adv),
            ("total".to_string(), self.total),
        ];
        for m in 0..self.l_inv.len() {
            out.push((format!("l_inv_{}", m + 1), self.l_inv[m]));
            out.push((format!("l_spec_{}", m + 1), self.l_spec[m]));
            out.push((format!("lbar_inv_{}", m + 1), self.lbar_inv[m]));
            out.push((format!("lbar_spec_{}", m + 1), self.lbar_spec[m]));
            out.push((format!("l_inv_c_{}", m + 1), self.l_inv_c[m]));
            out.push((format!("l_spec_c_{}", m + 1), self.l_spec_c[m]));
        }
        out
    }

    pub fn csv_header(n_modalities: usize) -> String {
        let mut cols = vec!["epoch".to_string(), "l_pred".into(), "l_dec".into()];
        for m in 1..=n_modalities {
            cols.push(format!("l_inv_{m}"));
        }
        for m in 1..=n_modalities {
            cols.push(format!("l_spec_{m}"));
        }
        cols.push("lbar_pred".into());
        for m in 1..=n_modalities {
            cols.push(format!("lbar_inv_{m}"));
        }
        for m in 1..=n_modalities {
            cols.push(format!("lbar_spec_{m}"));
        }
        for m in 1..=n_modalities {
            cols.push(format!("l_inv_c_{m}"));
        }
        for m in 1..=n_modalities {
            cols.push(format!("l_spec_c_{m}"));
        }
        cols.push("l_adv".into());
        cols.push("total".into());
        cols.join(",")
    }

    pub fn csv_row(&self, epoch: usize) -> String {
        let mut cols = vec![epoch.to_string(), fmt(self.l_pred), fmt(self.l_dec)];
        cols.extend(self.l_inv.iter().map(|&v| fmt(v)));
        cols.extend(self.l_spec.iter().map(|&v| fmt(v)));
        cols.push(fmt(self.lbar_pred));
        cols.extend(self.lbar_inv.iter().map(|&v| fmt(v)));
        cols.extend(self.lbar_spec.iter().map(|&v| fmt(v)));
        cols.extend(self.l_inv_c.iter().map(|&v| fmt(v)));
        cols.extend(self.l_spec_c.iter().map(|&v| fmt(v)));
        cols.push(fmt(self.l_adv));
        cols.push(fmt(self.total));
        cols.join(",")
    }
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Representation nodes for every modality of one branch.
pub struct RepNodes {
    pub inv: Vec<NodeId>,
    pub spec: Vec<NodeId>,
}

/// Runs one extractor over every modality batch.
pub fn extract_all(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    xs: &[NodeId],
    which: Which,
) -> Result<RepNodes> {
    let mut inv = Vec::with_capacity(xs.len());
    let mut spec = Vec::with_capacity(xs.len());
    for (m, &x) in xs.iter().enumerate() {
        let (i, s) = extract(tape, table, bundle, x, m, which)?;
        inv.push(i);
        spec.push(s);
    }
    Ok(RepNodes { inv, spec })
}

/// Base decoupling terms as tape nodes: means and, for the per-sample
/// product mode, the per-row loss columns they were averaged from.
pub struct BaseLossNodes {
    pub pred: NodeId,
    pub dec: NodeId,
    pub inv: Vec<NodeId>,
    pub spec: Vec<NodeId>,
    pub inv_rows: Vec<NodeId>,
    pub spec_rows: Vec<NodeId>,
}

/// Per-row cosine between two equally shaped batches, as an `n x 1` column.
fn row_cosine(tape: &mut Tape, a: NodeId, b: NodeId) -> Result<NodeId> {
    let ab = tape.mul(a, b)?;
    let dot = tape.row_sum(ab);
    let aa = tape.mul(a, a)?;
    let na2 = tape.row_sum(aa);
    let na2 = tape.add_scalar(na2, COSINE_EPS);
    let na = tape.sqrt(na2);
    let bb = tape.mul(b, b)?;
    let nb2 = tape.row_sum(bb);
    let nb2 = tape.add_scalar(nb2, COSINE_EPS);
    let nb = tape.sqrt(nb2);
    let denom = tape.mul(na, nb)?;
    tape.div(dot, denom)
}

/// Decoupling constraint: mean `1 - cos` over all invariant pairs across
/// modalities, plus mean squared cosine between each modality's invariant
/// and specific parts.
fn decoupling_constraint(tape: &mut Tape, reps: &RepNodes, cfg: &LossConfig) -> Result<NodeId> {
    let n = reps.inv.len();
    let mut acc: Option<NodeId> = None;
    let push = |tape: &mut Tape, term: NodeId, acc: &mut Option<NodeId>| -> Result<()> {
        *acc = Some(match *acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
        Ok(())
    };

    if cfg.align_weight > 0.0 && n >= 2 {
        let mut align: Option<NodeId> = None;
        let mut pairs = 0.0;
        for a in 0..n {
            for b in a + 1..n {
                let cos = row_cosine(tape, reps.inv[a], reps.inv[b])?;
                let neg = tape.neg(cos);
                let one_minus = tape.add_scalar(neg, 1.0);
                let mean = tape.mean_all(one_minus);
                push(tape, mean, &mut align)?;
                pairs += 1.0;
            }
        }
        if let Some(a) = align {
            let scaled = tape.scale(a, cfg.align_weight / pairs);
            push(tape, scaled, &mut acc)?;
        }
    }
    if cfg.orth_weight > 0.0 {
        for m in 0..n {
            let cos = row_cosine(tape, reps.inv[m], reps.spec[m])?;
            let sq = tape.mul(cos, cos)?;
            let mean = tape.mean_all(sq);
            let scaled = tape.scale(mean, cfg.orth_weight);
            push(tape, scaled, &mut acc)?;
        }
    }
    Ok(match acc {
        Some(a) => a,
        None => tape.constant(crate::autodiff::Matrix::scalar(0.0)),
    })
}

/// Joint, decoupling, and per-part prediction losses on the primary branch.
pub fn base_decoupling_loss(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    reps: &RepNodes,
    y: &[usize],
    cfg: &LossConfig,
) -> Result<BaseLossNodes> {
    let pairs: Vec<(NodeId, NodeId)> = reps
        .inv
        .iter()
        .zip(&reps.spec)
        .map(|(&i, &s)| (i, s))
        .collect();
    let joint_logits = predict_joint(tape, table, bundle, &pairs)?;
    let pred_rows = tape.softmax_ce_rows(joint_logits, y)?;
    let pred = tape.mean_all(pred_rows);

    let mut inv = Vec::new();
    let mut spec = Vec::new();
    let mut inv_rows = Vec::new();
    let mut spec_rows = Vec::new();
    for m in 0..bundle.config.n_modalities {
        let li = predict_invariant(tape, table, bundle, reps.inv[m], m)?;
        let rows = tape.softmax_ce_rows(li, y)?;
        inv.push(tape.mean_all(rows));
        inv_rows.push(rows);

        let ls = predict_specific(tape, table, bundle, reps.spec[m], m)?;
        let rows = tape.softmax_ce_rows(ls, y)?;
        spec.push(tape.mean_all(rows));
        spec_rows.push(rows);
    }
    let dec = decoupling_constraint(tape, reps, cfg)?;
    Ok(BaseLossNodes {
        pred,
        dec,
        inv,
        spec,
        inv_rows,
        spec_rows,
    })
}

/// Complement joint prediction loss toward the wrong labels. The caller
/// passes the detached table, so gradients reach the complement extractor
/// only.
pub fn complement_prediction_loss(
    tape: &mut Tape,
    detached: &[NodeId],
    bundle: &ModelBundle,
    comp_reps: &RepNodes,
    ybar: &[usize],
    y: &[usize],
) -> Result<NodeId> {
    validate_complement_labels(y, ybar)?;
    let pairs: Vec<(NodeId, NodeId)> = comp_reps
        .inv
        .iter()
        .zip(&comp_reps.spec)
        .map(|(&i, &s)| (i, s))
        .collect();
    let logits = predict_joint(tape, detached, bundle, &pairs)?;
    tape.softmax_cross_entropy(logits, ybar)
}

pub fn validate_complement_labels(y: &[usize], ybar: &[usize]) -> Result<()> {
    if y.len() != ybar.len() {
        return Err(Error::validation(format!(
            "{} complement labels for {} labels",
            ybar.len(),
            y.len()
        )));
    }
    if let Some(i) = y.iter().zip(ybar).position(|(a, b)| a == b) {
        return Err(Error::validation(format!(
            "complement label equals the true label at row {i}"
        )));
    }
    Ok(())
}

/// Mean and per-row complement losses of one predictor head over complement
/// representations.
fn complement_head_loss(
    tape: &mut Tape,
    detached: &[NodeId],
    bundle: &ModelBundle,
    rep: NodeId,
    modality: usize,
    ybar: &[usize],
    invariant: bool,
) -> Result<(NodeId, NodeId)> {
    let logits = if invariant {
        predict_invariant(tape, detached, bundle, rep, modality)?
    } else {
        predict_specific(tape, detached, bundle, rep, modality)?
    };
    let rows = tape.softmax_ce_rows(logits, ybar)?;
    let mean = tape.mean_all(rows);
    Ok((mean, rows))
}

/// Monotonicity product `correct x complement`, either as a product of batch
/// means or as the mean of per-sample products.
fn monotonicity_product(
    tape: &mut Tape,
    mean_a: NodeId,
    rows_a: NodeId,
    mean_b: NodeId,
    rows_b: NodeId,
    per_sample: bool,
) -> Result<NodeId> {
    if per_sample {
        let prod = tape.mul(rows_a, rows_b)?;
        Ok(tape.mean_all(prod))
    } else {
        tape.mul(mean_a, mean_b)
    }
}

/// Adversarial modality-confusion loss: discriminator cross-entropy against
/// the true modality index, summed over every specific-representation source
/// (primary per modality, complement per modality when that branch exists).
/// Gradient reversal in front of the discriminator handles the min-max.
pub fn adversarial_loss(
    tape: &mut Tape,
    table: &[NodeId],
    bundle: &ModelBundle,
    primary_spec: &[NodeId],
    complement_spec: Option<&[NodeId]>,
    grl_lambda: f64,
) -> Result<NodeId> {
    let mut acc: Option<NodeId> = None;
    let add_source =
        |tape: &mut Tape, rep: NodeId, modality: usize, acc: &mut Option<NodeId>| -> Result<()> {
            let logits = discriminate_modality(tape, table, bundle, rep, grl_lambda)?;
            let batch = tape.value(rep).rows();
            let labels = vec![modality; batch];
            let ce = tape.softmax_cross_entropy(logits, &labels)?;
            *acc = Some(match *acc {
                Some(a) => tape.add(a, ce)?,
                None => ce,
            });
            Ok(())
        };
    for (m, &rep) in primary_spec.iter().enumerate() {
        add_source(tape, rep, m, &mut acc)?;
    }
    if let Some(comp) = complement_spec {
        for (m, &rep) in comp.iter().enumerate() {
            add_source(tape, rep, m, &mut acc)?;
        }
    }
    acc.ok_or_else(|| Error::validation("adversarial loss needs at least one source"))
}

/// The assembled step loss: the weighted total as a tape node, the
/// unweighted term values, and the specific-representation nodes the
/// trainer's discriminator refinement steps read back.
pub struct StepLoss {
    pub total: NodeId,
    pub breakdown: LossBreakdown,
    pub primary_spec: Vec<NodeId>,
    pub complement_spec: Vec<NodeId>,
}

/// Builds the full objective for one batch. `xs` holds one constant node per
/// modality; `ybar` must be present exactly when some complement-branch term
/// has positive weight. Zero-weight terms are skipped, not multiplied by
/// zero, so `wo_pns` runs never touch complement or discriminator parameters.
pub fn build_step_loss(
    tape: &mut Tape,
    bundle: &ModelBundle,
    table: &[NodeId],
    xs: &[NodeId],
    y: &[usize],
    ybar: Option<&[usize]>,
    weights: &LossWeights,
    cfg: &LossConfig,
) -> Result<StepLoss> {
    weights.validate()?;
    let n_mod = bundle.config.n_modalities;
    let mut breakdown = LossBreakdown::zeros(n_mod);
    let mut terms: Vec<(NodeId, f64)> = Vec::new();

    let primary = extract_all(tape, table, bundle, xs, Which::Primary)?;
    let base = base_decoupling_loss(tape, table, bundle, &primary, y, cfg)?;
    breakdown.l_pred = tape.value(base.pred).item();
    breakdown.l_dec = tape.value(base.dec).item();
    terms.push((base.pred, weights.pred));
    terms.push((base.dec, weights.dec));
    for m in 0..n_mod {
        breakdown.l_inv[m] = tape.value(base.inv[m]).item();
        breakdown.l_spec[m] = tape.value(base.spec[m]).item();
        terms.push((base.inv[m], weights.inv));
        terms.push((base.spec[m], weights.spec));
    }

    let complement = if weights.needs_complement() {
        let ybar = ybar.ok_or_else(|| {
            Error::validation("complement labels are required when complement terms are active")
        })?;
        validate_complement_labels(y, ybar)?;
        let detached = crate::model::detach_heads(tape, bundle, table);
        let comp = extract_all(tape, &detached, bundle, xs, Which::Complement)?;

        if weights.bar_pred > 0.0 {
            let lbar = complement_prediction_loss(tape, &detached, bundle, &comp, ybar, y)?;
            breakdown.lbar_pred = tape.value(lbar).item();
            terms.push((lbar, weights.bar_pred));
        }
        for m in 0..n_mod {
            if weights.bar_inv > 0.0 || weights.inv_c > 0.0 {
                let (mean, rows) =
                    complement_head_loss(tape, &detached, bundle, comp.inv[m], m, ybar, true)?;
                breakdown.lbar_inv[m] = tape.value(mean).item();
                if weights.bar_inv > 0.0 {
                    terms.push((mean, weights.bar_inv));
                }
                if weights.inv_c > 0.0 {
                    let prod = monotonicity_product(
                        tape,
                        base.inv[m],
                        base.inv_rows[m],
                        mean,
                        rows,
                        cfg.per_sample_products,
                    )?;
                    breakdown.l_inv_c[m] = tape.value(prod).item();
                    terms.push((prod, weights.inv_c));
                }
            }
            if weights.bar_spec > 0.0 || weights.spec_c > 0.0 {
                let (mean, rows) =
                    complement_head_loss(tape, &detached, bundle, comp.spec[m], m, ybar, false)?;
                breakdown.lbar_spec[m] = tape.value(mean).item();
                if weights.bar_spec > 0.0 {
                    terms.push((mean, weights.bar_spec));
                }
                if weights.spec_c > 0.0 {
                    let prod = monotonicity_product(
                        tape,
                        base.spec[m],
                        base.spec_rows[m],
                        mean,
                        rows,
                        cfg.per_sample_products,
                    )?;
                    breakdown.l_spec_c[m] = tape.value(prod).item();
                    terms.push((prod, weights.spec_c));
                }
            }
        }
        Some(comp)
    } else {
        None
    };

    if weights.needs_adversarial() {
        let comp_spec = complement.as_ref().map(|c| c.spec.as_slice());
        let adv = adversarial_loss(
            tape,
            table,
            bundle,
            &primary.spec,
            comp_spec,
            bundle.config.grl_lambda,
        )?;
        breakdown.l_adv = tape.value(adv).item();
        terms.push((adv, weights.adv));
    }

    let mut total: Option<NodeId> = None;
    for (node, w) in terms {
        if w == 0.0 {
            continue;
        }
        let scaled = if w == 1.0 { node } else { tape.scale(node, w) };
        total = Some(match total {
            Some(t) => tape.add(t, scaled)?,
            None => scaled,
        });
    }
    let total = total.ok_or_else(|| Error::validation("objective has no active terms"))?;
    breakdown.total = tape.value(total).item();
    Ok(StepLoss {
        total,
        breakdown,
        primary_spec: primary.spec,
        complement_spec: complement.map(|c| c.spec).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Matrix, Tape};
    use crate::model::{bind_trainable, ModelBundle, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden: vec![8],
            rep_dim_invariant: 4,
            rep_dim_specific: 4,
            disc_hidden: vec![6],
            ..ModelConfig::synthetic_default(10)
        }
    }

    fn small_bundle(seed: u64) -> ModelBundle {
        ModelBundle::init(small_config(), seed).unwrap()
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<Matrix>, Vec<usize>, Vec<usize>) {
        let xs = (0..2)
            .map(|_| Matrix::from_fn(n, dim, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let ybar: Vec<usize> = y.iter().map(|&v| 1 - v).collect();
        (xs, y, ybar)
    }

    fn run_step(
        bundle: &ModelBundle,
        xs: &[Matrix],
        y: &[usize],
        ybar: Option<&[usize]>,
        weights: &LossWeights,
        cfg: &LossConfig,
    ) -> (Tape, Vec<NodeId>, StepLoss) {
        let mut tape = Tape::new();
        let table = bind_trainable(&mut tape, &bundle.params);
        let x_nodes: Vec<NodeId> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let step =
            build_step_loss(&mut tape, bundle, &table, &x_nodes, y, ybar, weights, cfg).unwrap();
        (tape, table, step)
    }

    #[test]
    fn zero_parameter_model_gives_ln2_everywhere() {
        let bundle = ModelBundle::build(small_config(), true, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (xs, y, ybar) = batch(&mut rng, 6, 10);
        let (_, _, step) = run_step(
            &bundle,
            &xs,
            &y,
            Some(&ybar),
            &LossWeights::default(),
            &LossConfig::default(),
        );
        let ln2 = std::f64::consts::LN_2;
        let b = &step.breakdown;
        assert!((b.l_pred - ln2).abs() < 1e-12);
        assert!((b.lbar_pred - ln2).abs() < 1e-12);
        for m in 0..2 {
            assert!((b.l_inv[m] - ln2).abs() < 1e-12);
            assert!((b.l_spec[m] - ln2).abs() < 1e-12);
            assert!((b.lbar_inv[m] - ln2).abs() < 1e-12);
            assert!((b.lbar_spec[m] - ln2).abs() < 1e-12);
            assert!((b.l_inv_c[m] - ln2 * ln2).abs() < 1e-12);
            assert!((b.l_spec_c[m] - ln2 * ln2).abs() < 1e-12);
        }
        // Discriminator at chance: ln 2 per source, four sources.
        assert!((b.l_adv - 4.0 * ln2).abs() < 1e-12);
    }

    #[test]
    fn products_and_total_satisfy_the_algebra() {
        let bundle = small_bundle(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let weights = LossWeights::default();
        let cfg = LossConfig::default();
        for _ in 0..5 {
            let (xs, y, ybar) = batch(&mut rng, 7, 10);
            let (_, _, step) = run_step(&bundle, &xs, &y, Some(&ybar), &weights, &cfg);
            let b = &step.breakdown;
            for m in 0..2 {
                assert!((b.l_inv_c[m] - b.l_inv[m] * b.lbar_inv[m]).abs() < 1e-9);
                assert!((b.l_spec_c[m] - b.l_spec[m] * b.lbar_spec[m]).abs() < 1e-9);
            }
            assert!((b.total - b.weighted_sum(&weights)).abs() < 1e-9);
            for (name, v) in b.terms() {
                assert!(v >= 0.0, "{name} = {v}");
            }
        }
    }

    #[test]
    fn weighted_total_tracks_custom_weights() {
        let bundle = small_bundle(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (xs, y, ybar) = batch(&mut rng, 5, 10);
        let weights = LossWeights {
            pred: 2.0,
            dec: 0.5,
            inv: 1.5,
            adv: 0.25,
            ..LossWeights::default()
        };
        let (_, _, step) = run_step(
            &bundle,
            &xs,
            &y,
            Some(&ybar),
            &weights,
            &LossConfig::default(),
        );
        let b = &step.breakdown;
        assert!((b.total - b.weighted_sum(&weights)).abs() < 1e-9);
    }

    #[test]
    fn negative_weights_are_rejected() {
        let weights = LossWeights {
            adv: -0.1,
            ..LossWeights::default()
        };
        assert!(weights.validate().is_err());
    }

    #[test]
    fn complement_branch_never_moves_predictor_heads() {
        let bundle = small_bundle(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (xs, y, ybar) = batch(&mut rng, 6, 10);
        // Only complement-branch terms active.
        let weights = LossWeights {
            pred: 0.0,
            dec: 0.0,
            inv: 0.0,
            spec: 0.0,
            adv: 0.0,
            ..LossWeights::default()
        };
        let (mut tape, table, step) = run_step(
            &bundle,
            &xs,
            &y,
            Some(&ybar),
            &weights,
            &LossConfig::default(),
        );
        tape.backward(step.total).unwrap();
        for id in bundle.predictor_param_ids() {
            let g = tape.grad_or_zero(table[id]);
            assert_eq!(g.max_abs(), 0.0, "predictor head moved");
        }
        let phibar: f64 = bundle
            .complement_param_ids()
            .iter()
            .map(|&id| tape.grad_or_zero(table[id]).max_abs())
            .sum();
        assert!(phibar > 0.0);
        // The products also pull the primary extractor through their correct
        // factor, but predictors stay frozen on this branch.
        let phi: f64 = bundle
            .extractor
            .iter()
            .flat_map(|m| m.param_ids())
            .map(|id| tape.grad_or_zero(table[id]).max_abs())
            .sum();
        assert!(phi > 0.0);
    }

    #[test]
    fn product_gradient_on_primary_scales_with_complement_factor() {
        // With only the invariant product active, d total / d phi equals
        // lbar_inv * d l_inv / d phi; check against the plain l_inv gradient.
        let bundle = small_bundle(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (xs, y, ybar) = batch(&mut rng, 6, 10);

        let product_only = LossWeights {
            pred: 0.0,
            dec: 0.0,
            inv: 0.0,
            spec: 0.0,
            bar_pred: 0.0,
            bar_inv: 0.0,
            bar_spec: 0.0,
            spec_c: 0.0,
            adv: 0.0,
            inv_c: 1.0,
        };
        let (mut t1, table1, step1) = run_step(
            &bundle,
            &xs,
            &y,
            Some(&ybar),
            &product_only,
            &LossConfig::default(),
        );
        t1.backward(step1.total).unwrap();

        let inv_only = LossWeights {
            pred: 0.0,
            dec: 0.0,
            spec: 0.0,
            bar_pred: 0.0,
            bar_inv: 0.0,
            bar_spec: 0.0,
            inv_c: 0.0,
            spec_c: 0.0,
            adv: 0.0,
            inv: 1.0,
        };
        let (mut t2, table2, step2) = run_step(
            &bundle,
            &xs,
            &y,
            Some(&ybar),
            &inv_only,
            &LossConfig::default(),
        );
        t2.backward(step2.total).unwrap();

        let lbar = step1.breakdown.lbar_inv.clone();
        for m in 0..2 {
            for id in bundle.extractor[m].param_ids() {
                let g_prod = t1.grad_or_zero(table1[id]);
                let g_inv = t2.grad_or_zero(table2[id]);
                let expected = g_inv.map(|v| lbar[m] * v);
                let diff = g_prod
                    .as_slice()
                    .iter()
                    .zip(expected.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max);
                assert!(diff < 1e-9, "modality {m}: max diff {diff}");
            }
        }
    }

    #[test]
    fn per_sample_product_mode_changes_only_the_pairing() {
        let bundle = small_bundle(10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (xs, y, ybar) = batch(&mut rng, 6, 10);
        let weights = LossWeights::default();
        let mean_cfg = LossConfig::default();
        let per_sample_cfg = LossConfig {
            per_sample_products: true,
            ..LossConfig::default()
        };
        let (_, _, a) = run_step(&bundle, &xs, &y, Some(&ybar), &weights, &mean_cfg);
        let (_, _, b) = run_step(&bundle, &xs, &y, Some(&ybar), &weights, &per_sample_cfg);
        // Same factors either way.
        assert_eq!(a.breakdown.l_inv, b.breakdown.l_inv);
        assert_eq!(a.breakdown.lbar_inv, b.breakdown.lbar_inv);
        // Mean of products differs from product of means in general.
        assert_ne!(a.breakdown.l_inv_c, b.breakdown.l_inv_c);
    }

    #[test]
    fn aligned_and_orthogonal_reps_zero_the_decoupling_constraint() {
        let mut tape = Tape::new();
        // Identical invariants across modalities, specifics orthogonal to them.
        let inv = Matrix::from_fn(4, 4, |i, j| if j == 0 { 1.0 + i as f64 } else { 0.0 });
        let spec = Matrix::from_fn(4, 4, |i, j| if j == 1 { 2.0 - i as f64 } else { 0.0 });
        let i1 = tape.constant(inv.clone());
        let i2 = tape.constant(inv);
        let s1 = tape.constant(spec.clone());
        let s2 = tape.constant(spec);
        let reps = RepNodes {
            inv: vec![i1, i2],
            spec: vec![s1, s2],
        };
        let dec = decoupling_constraint(&mut tape, &reps, &LossConfig::default()).unwrap();
        assert!(tape.value(dec).item().abs() < 1e-9);
    }

    #[test]
    fn wrong_label_validation_fires() {
        let y = vec![0, 1, 0];
        let ybar = vec![1, 1, 1];
        assert!(validate_complement_labels(&y, &ybar).is_err());
        let ybar = vec![1, 0, 1];
        assert!(validate_complement_labels(&y, &ybar).is_ok());
    }

    #[test]
    fn ablation_weight_tables() {
        let w = AblationMode::WoPns.weights();
        assert_eq!(w.bar_pred, 0.0);
        assert_eq!(w.adv, 0.0);
        assert_eq!(w.inv, 1.0);
        assert!(!w.needs_complement());
        let w = AblationMode::WoInvPns.weights();
        assert_eq!(w.bar_inv, 0.0);
        assert_eq!(w.inv_c, 0.0);
        assert_eq!(w.bar_spec, 1.0);
        assert!(w.needs_complement());
        for mode in AblationMode::ALL {
            assert_eq!(AblationMode::parse(mode.name()).unwrap(), mode);
        }
    }

    #[test]
    fn wo_pns_runs_without_complement_labels() {
        let bundle = small_bundle(12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (xs, y, _) = batch(&mut rng, 5, 10);
        let weights = AblationMode::WoPns.weights();
        let (_tape, _, step) = run_step(&bundle, &xs, &y, None, &weights, &LossConfig::default());
        assert!(step.breakdown.total > 0.0);
        assert_eq!(step.breakdown.lbar_pred, 0.0);
        assert_eq!(step.breakdown.l_adv, 0.0);
    }
}
