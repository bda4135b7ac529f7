// scratch: compare gradient magnitudes of objective components on extractor params
use mpns::autodiff::{Matrix, Tape};
use mpns::loss::{build_step_loss, LossConfig, LossWeights};
use mpns::model::{bind_trainable, ModelBundle, ModelConfig};
use mpns::synth::{generate_dataset, GenParams};
use mpns::train::pack_dataset;

fn grad_norm_on_extractors(bundle: &ModelBundle, xs: &[Matrix], y: &[usize], ybar: &[usize], w: &LossWeights) -> f64 {
    let mut tape = Tape::new();
    let table = bind_trainable(&mut tape, &bundle.params);
    let xn: Vec<_> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let step = build_step_loss(&mut tape, bundle, &table, &xn, y, Some(ybar), w, &LossConfig::default()).unwrap();
    tape.backward(step.total).unwrap();
    let mut acc = 0.0;
    for mlp in &bundle.extractor {
        for id in mlp.param_ids() {
            let g = tape.grad_or_zero(table[id]);
            acc += g.as_slice().iter().map(|v| v * v).sum::<f64>();
        }
    }
    acc.sqrt()
}

fn main() {
    let params = GenParams { seed: 2, ..GenParams::default() };
    let ds = generate_dataset(&params, 256).unwrap();
    let data = pack_dataset(&ds);
    let bundle = ModelBundle::init(ModelConfig::synthetic_default(40), 3).unwrap();
    let idx: Vec<usize> = (0..128).collect();
    let xs: Vec<Matrix> = data.xs.iter().map(|x| x.gather_rows(&idx)).collect();
    let y: Vec<usize> = idx.iter().map(|&i| data.y[i]).collect();
    let ybar: Vec<usize> = y.iter().map(|&v| 1 - v).collect();

    let zero = LossWeights { pred: 0.0, dec: 0.0, inv: 0.0, spec: 0.0, bar_pred: 0.0, bar_inv: 0.0, inv_c: 0.0, bar_spec: 0.0, spec_c: 0.0, adv: 0.0 };
    let adv_only = LossWeights { adv: 1.0, ..zero };
    let pred_only = LossWeights { pred: 1.0, inv: 1.0, spec: 1.0, dec: 1.0, ..zero };
    println!("extractor grad norm, adversarial only: {:.5}", grad_norm_on_extractors(&bundle, &xs, &y, &ybar, &adv_only));
    println!("extractor grad norm, prediction only:  {:.5}", grad_norm_on_extractors(&bundle, &xs, &y, &ybar, &pred_only));
}
