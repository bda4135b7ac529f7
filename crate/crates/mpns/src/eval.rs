//! Evaluation: distance correlation between learned representations and the
//! generator's ground-truth latents, predictive accuracy with and without a
//! modality, and a held-out discriminator probe measuring how much modality
//! identity leaks into the specific representations.

use crate::autodiff::{adam_step, AdamConfig, AdamState, Matrix, NodeId, Tape};
use crate::model::{extract, predict_joint, ModelBundle, Which};
use crate::synth::Dataset;
use crate::train::PackedData;
use crate::{Error, Result};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ground-truth latent variables of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentVar {
    Ns,
    Sf,
    Nc,
    Sc,
}

impl LatentVar {
    pub const ALL: [LatentVar; 4] = [LatentVar::Ns, LatentVar::Sf, LatentVar::Nc, LatentVar::Sc];

    pub fn name(self) -> &'static str {
        match self {
            LatentVar::Ns => "NS",
            LatentVar::Sf => "SF",
            LatentVar::Nc => "NC",
            LatentVar::Sc => "SC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "NS" => Ok(LatentVar::Ns),
            "SF" => Ok(LatentVar::Sf),
            "NC" => Ok(LatentVar::Nc),
            "SC" => Ok(LatentVar::Sc),
            other => Err(Error::validation(format!("unknown latent {other:?}"))),
        }
    }

    fn column(self, ds: &Dataset) -> Vec<f64> {
        ds.samples
            .iter()
            .map(|s| match self {
                LatentVar::Ns => f64::from(s.latents.ns),
                LatentVar::Sf => f64::from(s.latents.sf),
                LatentVar::Nc => f64::from(s.latents.nc),
                LatentVar::Sc => s.latents.sc,
            })
            .collect()
    }
}

/// Which slice of the representation a report row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RepPart {
    Invariant,
    Specific,
    Concatenated,
}

impl RepPart {
    pub const ALL: [RepPart; 3] = [RepPart::Invariant, RepPart::Specific, RepPart::Concatenated];

    pub fn name(self) -> &'static str {
        match self {
            RepPart::Invariant => "invariant",
            RepPart::Specific => "specific",
            RepPart::Concatenated => "concatenated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "invariant" => Ok(RepPart::Invariant),
            "specific" => Ok(RepPart::Specific),
            "concatenated" => Ok(RepPart::Concatenated),
            other => Err(Error::validation(format!("unknown rep part {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcorEntry {
    pub modality: usize,
    pub variable: LatentVar,
    pub part: RepPart,
    pub dcor: f64,
}

/// Distance correlations for every (modality, latent, part) cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DcorReport {
    pub entries: Vec<DcorEntry>,
}

impl DcorReport {
    pub fn get(&self, modality: usize, variable: LatentVar, part: RepPart) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.modality == modality && e.variable == variable && e.part == part)
            .map(|e| e.dcor)
    }
}

/// Accuracy of each prediction path on one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// Joint predictor with every modality present.
    pub full: f64,
    /// Single-modality paths, indexed by the available modality.
    pub modality: Vec<SingleModalityAccuracy>,
    /// Held-out modality probe accuracy, when one was trained.
    pub discriminator_probe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleModalityAccuracy {
    /// Invariant head on this modality's invariant representation.
    pub invariant_head: f64,
    /// Specific head on this modality's specific representation.
    pub specific_head: f64,
    /// Joint predictor with the other modalities' blocks zero-imputed.
    pub joint_zero_imputed: f64,
}

// ---------------------------------------------------------------------------
// Distance correlation
// ---------------------------------------------------------------------------

/// Pairwise Euclidean distances, row-major `n x n`.
fn pairwise_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let ri = x.row(i);
        for j in i + 1..n {
            let rj = x.row(j);
            let mut acc = 0.0;
            for (a, b) in ri.iter().zip(rj) {
                let t = a - b;
                acc += t * t;
            }
            let dist = acc.sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}

/// Double-centers a distance matrix in place: subtract row means and column
/// means, add the grand mean.
fn double_center(d: &mut [f64], n: usize) {
    let mut row_means = vec![0.0; n];
    for i in 0..n {
        row_means[i] = d[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
    }
    let grand = row_means.iter().sum::<f64>() / n as f64;
    // Symmetric input: column means equal row means.
    for i in 0..n {
        for j in 0..n {
            d[i * n + j] += grand - row_means[i] - row_means[j];
        }
    }
}

fn dcor_from_moments(v_xy: f64, v_x: f64, v_y: f64) -> Result<f64> {
    if v_x <= 0.0 || v_y <= 0.0 {
        return Err(Error::Degenerate(
            "distance correlation of a constant input".into(),
        ));
    }
    let r2 = v_xy / (v_x * v_y).sqrt();
    // Guard the -1e-12-scale rounding below zero, then clamp into [0, 1].
    Ok(r2.max(0.0).sqrt().min(1.0))
}

/// Sample distance correlation between two multivariate samples with one row
/// per observation.
pub fn distance_correlation(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::dim("distance_correlation", x.shape(), y.shape()));
    }
    let n = x.rows();
    if n < 2 {
        return Err(Error::validation(
            "distance correlation needs at least two observations",
        ));
    }
    let mut a = pairwise_distances(x);
    let mut b = pairwise_distances(y);
    double_center(&mut a, n);
    double_center(&mut b, n);
    let mut v_xy = 0.0;
    let mut v_x = 0.0;
    let mut v_y = 0.0;
    for (ai, bi) in a.iter().zip(&b) {
        v_xy += ai * bi;
        v_x += ai * ai;
        v_y += bi * bi;
    }
    let m = (n * n) as f64;
    dcor_from_moments(v_xy / m, v_x / m, v_y / m)
}

/// Distance correlation of a centered multivariate side against a scalar
/// latent, streaming the scalar side's centered matrix instead of storing it.
fn dcor_vs_scalar(a_centered: &[f64], n: usize, y: &[f64]) -> Result<f64> {
    let mut row_means = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += (y[i] - y[j]).abs();
        }
        row_means[i] = acc / n as f64;
    }
    let grand = row_means.iter().sum::<f64>() / n as f64;

    let mut v_xy = 0.0;
    let mut v_x = 0.0;
    let mut v_y = 0.0;
    for i in 0..n {
        for j in 0..n {
            let bij = (y[i] - y[j]).abs() - row_means[i] - row_means[j] + grand;
            let aij = a_centered[i * n + j];
            v_xy += aij * bij;
            v_x += aij * aij;
            v_y += bij * bij;
        }
    }
    let m = (n * n) as f64;
    dcor_from_moments(v_xy / m, v_x / m, v_y / m)
}

// ---------------------------------------------------------------------------
// Model evaluation
// ---------------------------------------------------------------------------

/// Invariant and specific representation matrices of one modality.
pub struct ModalityReps {
    pub inv: Matrix,
    pub spec: Matrix,
}

/// Runs the primary extractor over a whole dataset in chunks.
pub fn compute_representations(bundle: &ModelBundle, data: &PackedData) -> Result<Vec<ModalityReps>> {
    let n = data.y.len();
    let cfg = &bundle.config;
    let mut out: Vec<(Matrix, Matrix)> = (0..cfg.n_modalities)
        .map(|_| {
            (
                Matrix::zeros(n, cfg.rep_dim_invariant),
                Matrix::zeros(n, cfg.rep_dim_specific),
            )
        })
        .collect();
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
        for m in 0..cfg.n_modalities {
            let x = tape.constant(data.xs[m].gather_rows(&idx));
            let (inv, spec) = extract(&mut tape, &table, bundle, x, m, Which::Primary)?;
            let (iv, sv) = (tape.value(inv), tape.value(spec));
            for (local, global) in (start..end).enumerate() {
                out[m].0.row_mut(global).copy_from_slice(iv.row(local));
                out[m].1.row_mut(global).copy_from_slice(sv.row(local));
            }
        }
        start = end;
    }
    Ok(out
        .into_iter()
        .map(|(inv, spec)| ModalityReps { inv, spec })
        .collect())
}

/// Distance correlation of each modality's invariant, specific, and
/// concatenated representations against each scalar latent.
pub fn evaluate_dcor(bundle: &ModelBundle, ds: &Dataset) -> Result<DcorReport> {
    let data = crate::train::pack_dataset(ds);
    let reps = compute_representations(bundle, &data)?;
    let n = ds.samples.len();
    let latents: Vec<(LatentVar, Vec<f64>)> = LatentVar::ALL
        .iter()
        .map(|&v| (v, v.column(ds)))
        .collect();

    let mut report = DcorReport::default();
    for (m, rep) in reps.iter().enumerate() {
        for part in RepPart::ALL {
            let mat: Matrix = match part {
                RepPart::Invariant => rep.inv.clone(),
                RepPart::Specific => rep.spec.clone(),
                RepPart::Concatenated => Matrix::hconcat(&[&rep.inv, &rep.spec])?,
            };
            let mut a = pairwise_distances(&mat);
            double_center(&mut a, n);
            for (variable, column) in &latents {
                let dcor = dcor_vs_scalar(&a, n, column)?;
                report.entries.push(DcorEntry {
                    modality: m,
                    variable: *variable,
                    part,
                    dcor,
                });
            }
        }
    }
    Ok(report)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            logits
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(j, _)| j)
                .unwrap()
        })
        .collect()
}

/// Accuracy of every prediction path: the joint predictor on all modalities,
/// and per modality the invariant head, the specific head, and the joint
/// predictor with the other modalities zero-imputed.
pub fn evaluate_accuracy(bundle: &ModelBundle, ds: &Dataset) -> Result<AccuracyReport> {
    let data = crate::train::pack_dataset(ds);
    let reps = compute_representations(bundle, &data)?;
    let n = ds.samples.len();
    let cfg = &bundle.config;

    let mut tape = Tape::new();
    let table: Vec<NodeId> = bundle
        .params
        .mats
        .iter()
        .map(|m| tape.constant(m.clone()))
        .collect();
    let rep_nodes: Vec<(NodeId, NodeId)> = reps
        .iter()
        .map(|r| (tape.constant(r.inv.clone()), tape.constant(r.spec.clone())))
        .collect();

    let joint = predict_joint(&mut tape, &table, bundle, &rep_nodes)?;
    let full = accuracy(&argmax_rows(tape.value(joint)), &data.y);

    let mut modality = Vec::with_capacity(cfg.n_modalities);
    for m in 0..cfg.n_modalities {
        let li = crate::model::predict_invariant(&mut tape, &table, bundle, rep_nodes[m].0, m)?;
        let invariant_head = accuracy(&argmax_rows(tape.value(li)), &data.y);
        let ls = crate::model::predict_specific(&mut tape, &table, bundle, rep_nodes[m].1, m)?;
        let specific_head = accuracy(&argmax_rows(tape.value(ls)), &data.y);

        let imputed: Vec<(NodeId, NodeId)> = (0..cfg.n_modalities)
            .map(|k| {
                if k == m {
                    rep_nodes[k]
                } else {
                    (
                        tape.constant(Matrix::zeros(n, cfg.rep_dim_invariant)),
                        tape.constant(Matrix::zeros(n, cfg.rep_dim_specific)),
                    )
                }
            })
            .collect();
        let lj = predict_joint(&mut tape, &table, bundle, &imputed)?;
        let joint_zero_imputed = accuracy(&argmax_rows(tape.value(lj)), &data.y);

        modality.push(SingleModalityAccuracy {
            invariant_head,
            specific_head,
            joint_zero_imputed,
        });
    }
    Ok(AccuracyReport {
        full,
        modality,
        discriminator_probe: None,
    })
}

// ---------------------------------------------------------------------------
// Held-out discriminator probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 30,
            batch_size: 128,
        }
    }
}

/// Freezes the extractors, trains a fresh modality classifier on specific
/// representations from the first half of the samples, and reports its
/// accuracy on the second half. Near-chance accuracy means the adversarial
/// independence approximation worked.
pub fn probe_discriminator(bundle: &ModelBundle, ds: &Dataset, cfg: &ProbeConfig) -> Result<f64> {
    let data = crate::train::pack_dataset(ds);
    let reps = compute_representations(bundle, &data)?;
    let specs: Vec<Matrix> = reps.into_iter().map(|r| r.spec).collect();
    probe_on_matrices(&specs, cfg, &bundle.config.disc_hidden)
}

/// Trains and tests a fresh modality classifier over per-modality
/// representation matrices: rows of the first half of samples train it, the
/// second half score it.
pub fn probe_on_matrices(specs: &[Matrix], cfg: &ProbeConfig, hidden: &[usize]) -> Result<f64> {
    let n_mod = specs.len();
    if n_mod == 0 {
        return Err(Error::validation("probe needs at least one modality"));
    }
    if specs[0].rows() < 4 {
        return Err(Error::validation("probe needs at least four samples"));
    }
    let n = specs[0].rows();
    let rep_dim = specs[0].cols();
    let half = n / 2;
    let build = |range: std::ops::Range<usize>| -> (Matrix, Vec<usize>) {
        let rows = range.len() * n_mod;
        let mut mat = Matrix::zeros(rows, rep_dim);
        let mut labels = Vec::with_capacity(rows);
        let mut r = 0;
        for (m, spec) in specs.iter().enumerate() {
            for i in range.clone() {
                mat.row_mut(r).copy_from_slice(spec.row(i));
                labels.push(m);
                r += 1;
            }
        }
        (mat, labels)
    };
    let (train_x, train_y) = build(0..half);
    let (test_x, test_y) = build(half..n);

    let mut dims = vec![rep_dim];
    dims.extend(hidden);
    dims.push(n_mod);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: Vec<Matrix> = Vec::new();
    for l in 0..dims.len() - 1 {
        let a = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
        params.push(Matrix::from_fn(dims[l], dims[l + 1], |_, _| {
            rng.gen_range(-a..a)
        }));
        params.push(Matrix::zeros(1, dims[l + 1]));
    }
    let forward = |tape: &mut Tape, nodes: &[NodeId], x: NodeId| -> Result<NodeId> {
        let mut h = x;
        let layers = nodes.len() / 2;
        for l in 0..layers {
            h = tape.matmul(h, nodes[2 * l])?;
            h = tape.add_row(h, nodes[2 * l + 1])?;
            if l + 1 != layers {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    };
    let mut state = AdamState::new(&params);
    let adam_cfg = AdamConfig::default();
    let mut indices: Vec<usize> = (0..train_y.len()).collect();
    for _ in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let nodes: Vec<NodeId> = params.iter().map(|p| tape.param(p.clone())).collect();
            let x = tape.constant(train_x.gather_rows(chunk));
            let y: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let logits = forward(&mut tape, &nodes, x)?;
            let loss = tape.softmax_cross_entropy(logits, &y)?;
            tape.backward(loss)?;
            let grads: Vec<Matrix> = nodes.iter().map(|&id| tape.grad_or_zero(id)).collect();
            adam_step(&mut params, &grads, &mut state, &adam_cfg)?;
        }
    }
    let mut tape = Tape::new();
    let nodes: Vec<NodeId> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let x = tape.constant(test_x);
    let logits = forward(&mut tape, &nodes, x)?;
    Ok(accuracy(&argmax_rows(tape.value(logits)), &test_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Naive reference: materialize, center with explicit loops, and
    /// accumulate the three moments directly from the definition.
    fn brute_force_dcor(x: &Matrix, y: &Matrix) -> f64 {
        let n = x.rows();
        let dist = |m: &Matrix, i: usize, j: usize| -> f64 {
            m.row(i)
                .iter()
                .zip(m.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        };
        let center = |m: &Matrix| -> Vec<Vec<f64>> {
            let raw: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| dist(m, i, j)).collect())
                .collect();
            let row_mean: Vec<f64> = raw.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let col_mean: Vec<f64> = (0..n)
                .map(|j| raw.iter().map(|r| r[j]).sum::<f64>() / n as f64)
                .collect();
            let grand = row_mean.iter().sum::<f64>() / n as f64;
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| raw[i][j] - row_mean[i] - col_mean[j] + grand)
                        .collect()
                })
                .collect()
        };
        let a = center(x);
        let b = center(y);
        let mut v_xy = 0.0;
        let mut v_x = 0.0;
        let mut v_y = 0.0;
        for i in 0..n {
            for j in 0..n {
                v_xy += a[i][j] * b[i][j];
                v_x += a[i][j] * a[i][j];
                v_y += b[i][j] * b[i][j];
            }
        }
        let m = (n * n) as f64;
        ((v_xy / m) / ((v_x / m) * (v_y / m)).sqrt()).max(0.0).sqrt()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn matches_brute_force_on_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let n = rng.gen_range(3..=50);
            let p = rng.gen_range(1..=4);
            let q = rng.gen_range(1..=3);
            let x = random_matrix(&mut rng, n, p);
            let y = random_matrix(&mut rng, n, q);
            let fast = distance_correlation(&x, &y).unwrap();
            let brute = brute_force_dcor(&x, &y);
            assert!((fast - brute).abs() <= 1e-12, "{fast} vs {brute}");
        }
    }

    #[test]
    fn streamed_scalar_path_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..20 {
            let n = rng.gen_range(5..=40);
            let x = random_matrix(&mut rng, n, 3);
            let yv: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = Matrix::column(&yv);
            let general = distance_correlation(&x, &y).unwrap();
            let mut a = pairwise_distances(&x);
            double_center(&mut a, n);
            let streamed = dcor_vs_scalar(&a, n, &yv).unwrap();
            assert!((general - streamed).abs() <= 1e-12);
        }
    }

    #[test]
    fn affine_dependence_gives_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let x = random_matrix(&mut rng, 40, 1);
        let y = x.map(|v| 2.0 * v + 1.0);
        let d = distance_correlation(&x, &y).unwrap();
        assert!((d - 1.0).abs() < 1e-9, "dcor = {d}");
        let self_d = distance_correlation(&x, &x).unwrap();
        assert!((self_d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_normals_have_small_dcor() {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let n = 2000;
        let x = Matrix::from_fn(n, 1, |_, _| rng.sample(StandardNormal));
        let y = Matrix::from_fn(n, 1, |_, _| rng.sample(StandardNormal));
        let d = distance_correlation(&x, &y).unwrap();
        assert!(d < 0.1, "dcor = {d}");
    }

    #[test]
    fn invariances_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let x = random_matrix(&mut rng, 30, 2);
        let y = random_matrix(&mut rng, 30, 2);
        let base = distance_correlation(&x, &y).unwrap();

        // Symmetry.
        let sym = distance_correlation(&y, &x).unwrap();
        assert!((base - sym).abs() < 1e-12);

        // Translation.
        let shifted = x.map(|v| v + 3.7);
        let t = distance_correlation(&shifted, &y).unwrap();
        assert!((base - t).abs() < 1e-9);

        // Positive scaling.
        let scaled = x.map(|v| 2.5 * v);
        let s = distance_correlation(&scaled, &y).unwrap();
        assert!((base - s).abs() < 1e-9);

        // Orthogonal rotation of the two columns.
        let theta: f64 = 0.83;
        let rot = Matrix::from_vec(
            2,
            2,
            vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        )
        .unwrap();
        let rotated = crate::autodiff::matmul(&x, &rot).unwrap();
        let r = distance_correlation(&rotated, &y).unwrap();
        assert!((base - r).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs_error() {
        let x = Matrix::filled(10, 2, 1.0);
        let y = Matrix::from_fn(10, 1, |i, _| i as f64);
        assert!(matches!(
            distance_correlation(&x, &y),
            Err(Error::Degenerate(_))
        ));
        let one = Matrix::zeros(1, 2);
        assert!(distance_correlation(&one, &one).is_err());
    }

    #[test]
    fn replicated_latent_representation_has_dcor_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let ns: Vec<f64> = (0..60).map(|_| f64::from(rng.gen_range(0..2) as u8)).collect();
        let rep = Matrix::from_fn(60, 5, |i, _| ns[i]);
        let d = distance_correlation(&rep, &Matrix::column(&ns)).unwrap();
        assert!((d - 1.0).abs() < 1e-9);
    }

    #[test]
    fn probe_separates_blatantly_distinct_representations() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let n = 400;
        // Modality 0 clusters at -1, modality 1 at +1.
        let a = Matrix::from_fn(n, 4, |_, _| -1.0 + 0.1 * rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(n, 4, |_, _| 1.0 + 0.1 * rng.gen_range(-1.0..1.0));
        let acc = probe_on_matrices(
            &[a, b],
            &ProbeConfig {
                epochs: 10,
                ..ProbeConfig::default()
            },
            &[8],
        )
        .unwrap();
        assert!(acc > 0.95, "acc = {acc}");
    }

    #[test]
    fn probe_is_near_chance_on_identical_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let n = 400;
        let a = Matrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
        let b = Matrix::from_fn(n, 4, |_, _| rng.gen_range(-1.0..1.0));
        let acc = probe_on_matrices(
            &[a, b],
            &ProbeConfig {
                epochs: 10,
                ..ProbeConfig::default()
            },
            &[8],
        )
        .unwrap();
        assert!((acc - 0.5).abs() < 0.12, "acc = {acc}");
    }
}
