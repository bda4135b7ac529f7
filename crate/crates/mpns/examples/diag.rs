// scratch: all-mode trend check at one seed
use mpns::eval::{evaluate_dcor, probe_discriminator, LatentVar, ProbeConfig, RepPart};
use mpns::loss::AblationMode;
use mpns::model::ModelConfig;
use mpns::synth::{generate_dataset, GenParams};
use mpns::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_train: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8000);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let disc: Vec<usize> = args.get(3).map(|s| if s == "lin" { vec![] } else { s.split('-').map(|p| p.parse().unwrap()).collect() }).unwrap_or(vec![32]);
    let s_level: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(3);
    let params = GenParams { seed: 2, s: s_level, ..GenParams::default() };
    let ds = generate_dataset(&params, n_train).unwrap();
    let eval_ds = generate_dataset(&GenParams { seed: 1002, ..params.clone() }, 3000).unwrap();
    let base = ModelConfig { disc_hidden: disc.clone(), ..ModelConfig::synthetic_default(40) };
    println!("n={n_train} epochs={epochs} disc={disc:?} s={s_level} seed={seed}");
    for mode in AblationMode::ALL {
        let cfg = TrainConfig { epochs, batch_size: 128, seed, mode, ..TrainConfig::default() };
        let rec = train(&base, &cfg, &ds).unwrap();
        let probe = probe_discriminator(&rec.bundle, &eval_ds, &ProbeConfig::default()).unwrap();
        let dc = evaluate_dcor(&rec.bundle, &eval_ds).unwrap();
        let g = |m, v| dc.get(m, v, RepPart::Concatenated).unwrap();
        println!(
            "{:<12} NS ({:.3},{:.3})  SF ({:.3},{:.3})  NC ({:.3},{:.3})  SC ({:.3},{:.3})  probe {:.3}",
            mode.name(), g(0, LatentVar::Ns), g(1, LatentVar::Ns), g(0, LatentVar::Sf), g(1, LatentVar::Sf),
            g(0, LatentVar::Nc), g(1, LatentVar::Nc), g(0, LatentVar::Sc), g(1, LatentVar::Sc), probe
        );
    }
    // lambda-0 comparison for the probe direction
    let mcfg = ModelConfig { grl_lambda: 0.0, ..base };
    let cfg = TrainConfig { epochs, batch_size: 128, seed, mode: AblationMode::FullMpns, ..TrainConfig::default() };
    let rec = train(&mcfg, &cfg, &ds).unwrap();
    let probe = probe_discriminator(&rec.bundle, &eval_ds, &ProbeConfig::default()).unwrap();
    println!("full lambda=0 probe {:.3}", probe);
}
