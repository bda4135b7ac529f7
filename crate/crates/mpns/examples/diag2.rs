// scratch: inspect separability structure of specific reps
use mpns::eval::{compute_representations, probe_on_matrices, ProbeConfig};
use mpns::loss::AblationMode;
use mpns::model::ModelConfig;
use mpns::synth::{generate_dataset, GenParams};
use mpns::train::{pack_dataset, train, TrainConfig};

fn main() {
    let params = GenParams { seed: 2, s: 0.0, ..GenParams::default() };
    let ds = generate_dataset(&params, 8000).unwrap();
    let eval_ds = generate_dataset(&GenParams { seed: 1002, ..params.clone() }, 5000).unwrap();
    let mcfg = ModelConfig { ..ModelConfig::synthetic_default(40) };
    let cfg = TrainConfig { epochs: 40, batch_size: 128, seed: 3, mode: AblationMode::FullMpns, ..TrainConfig::default() };
    let rec = train(&mcfg, &cfg, &ds).unwrap();
    let packed = pack_dataset(&eval_ds);
    let reps = compute_representations(&rec.bundle, &packed).unwrap();
    let specs: Vec<_> = reps.iter().map(|r| r.spec.clone()).collect();

    // per-dim means and stds
    let stats = |m: &mpns::autodiff::Matrix| -> (Vec<f64>, Vec<f64>) {
        let n = m.rows() as f64;
        let mut mu = vec![0.0; m.cols()];
        let mut sd = vec![0.0; m.cols()];
        for i in 0..m.rows() { for j in 0..m.cols() { mu[j] += m.get(i, j); } }
        mu.iter_mut().for_each(|v| *v /= n);
        for i in 0..m.rows() { for j in 0..m.cols() { let d = m.get(i, j) - mu[j]; sd[j] += d * d; } }
        sd.iter_mut().for_each(|v| *v = (*v / n).sqrt());
        (mu, sd)
    };
    let (mu1, sd1) = stats(&specs[0]);
    let (mu2, sd2) = stats(&specs[1]);
    let mean_gap: f64 = mu1.iter().zip(&mu2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let sd_gap: f64 = sd1.iter().zip(&sd2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    println!("mean gap {:.3}  sd gap {:.3}  (sd1 avg {:.3}, sd2 avg {:.3})", mean_gap, sd_gap,
        sd1.iter().sum::<f64>() / 20.0, sd2.iter().sum::<f64>() / 20.0);

    let lin = probe_on_matrices(&specs, &ProbeConfig::default(), &[]).unwrap();
    let mlp = probe_on_matrices(&specs, &ProbeConfig::default(), &[32]).unwrap();
    println!("linear probe {:.3}  mlp probe {:.3}", lin, mlp);

    // standardized per modality: kill means/stds, then probe again
    let standardize = |m: &mpns::autodiff::Matrix| -> mpns::autodiff::Matrix {
        let (mu, sd) = stats(m);
        mpns::autodiff::Matrix::from_fn(m.rows(), m.cols(), |i, j| (m.get(i, j) - mu[j]) / (sd[j] + 1e-8))
    };
    let std_specs: Vec<_> = specs.iter().map(standardize).collect();
    let lin2 = probe_on_matrices(&std_specs, &ProbeConfig::default(), &[]).unwrap();
    let mlp2 = probe_on_matrices(&std_specs, &ProbeConfig::default(), &[32]).unwrap();
    println!("after per-modality standardization: linear {:.3}  mlp {:.3}", lin2, mlp2);
}
