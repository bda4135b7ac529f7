//! Minimal reverse-mode automatic differentiation over dense `f64` matrices:
//! enough to train small MLPs, including gradient reversal for adversarial
//! objectives. Single-threaded within one tape; independent tapes share
//! nothing and may run in parallel.

mod adam;
pub mod gradcheck;
mod matrix;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::{matmul, Matrix};
pub use tape::{NodeId, Tape};

#[cfg(test)]
mod gradient_tests {
    //! Finite-difference checks for every differentiable op, with inputs
    //! sampled away from non-smooth regions.

    use super::gradcheck::{central_diff_grad, max_rel_err, FD_FLOOR, FD_STEP, FD_TOL};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
    }

    /// Runs `build` under both the tape and the finite-difference oracle and
    /// compares gradients for every input.
    fn check(
        inputs: &[Matrix],
        build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
    ) {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = inputs.iter().map(|m| tape.param(m.clone())).collect();
        let root = build(&mut tape, &ids);
        tape.backward(root).unwrap();

        let mut f = |xs: &[Matrix]| {
            let mut t = Tape::new();
            let ids: Vec<NodeId> = xs.iter().map(|m| t.constant(m.clone())).collect();
            let r = build(&mut t, &ids);
            t.value(r).item()
        };
        let fd = central_diff_grad(&mut f, inputs, FD_STEP);
        for (i, want) in fd.iter().enumerate() {
            let got = tape.grad_or_zero(ids[i]);
            let err = max_rel_err(&got, want, FD_FLOOR);
            assert!(err < FD_TOL, "input {i}: rel err {err}");
        }
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 4);
            let b = random_matrix(&mut rng, 4, 2);
            check(&[a, b], |t, ids| {
                let p = t.matmul(ids[0], ids[1]).unwrap();
                t.sum_all(p)
            });
        }
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 2, 3);
            let b = random_matrix(&mut rng, 2, 3);
            check(&[a.clone(), b.clone()], |t, ids| {
                let s = t.add(ids[0], ids[1]).unwrap();
                let d = t.sub(s, ids[1]).unwrap();
                let m = t.mul(d, ids[1]).unwrap();
                t.sum_all(m)
            });
            check(&[a.clone()], |t, ids| {
                let th = t.tanh(ids[0]);
                let sg = t.sigmoid(th);
                let n = t.neg(sg);
                let sc = t.scale(n, 0.7);
                t.sum_all(sc)
            });
            // div and sqrt need inputs away from zero
            let pos = a.map(|v| v.abs() + 0.5);
            let pos_b = b.map(|v| v.abs() + 0.5);
            check(&[pos, pos_b], |t, ids| {
                let q = t.div(ids[0], ids[1]).unwrap();
                let r = t.sqrt(q);
                t.sum_all(r)
            });
        }
    }

    #[test]
    fn reduction_and_shape_op_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 3, 4);
            let bias = random_matrix(&mut rng, 1, 4);
            check(&[a.clone(), bias], |t, ids| {
                let s = t.add_row(ids[0], ids[1]).unwrap();
                let r = t.row_sum(s);
                let m = t.mul(r, r).unwrap();
                t.mean_all(m)
            });
            let b = random_matrix(&mut rng, 3, 2);
            check(&[a, b], |t, ids| {
                let c = t.concat_cols(&[ids[0], ids[1]]).unwrap();
                let sl = t.slice_cols(c, 2, 6).unwrap();
                let sq = t.mul(sl, sl).unwrap();
                t.mean_all(sq)
            });
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let logits = random_matrix(&mut rng, 4, 3);
            let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let labels2 = labels.clone();
            check(&[logits], move |t, ids| {
                t.softmax_cross_entropy(ids[0], &labels2).unwrap()
            });
        }
    }

    #[test]
    fn tanh_gradient_at_random_points_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 1, 6);
            check(&[a], |t, ids| {
                let y = t.tanh(ids[0]);
                t.sum_all(y)
            });
        }
    }

    #[test]
    fn two_layer_mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..5 {
            let x = random_matrix(&mut rng, 4, 5);
            let w1 = random_matrix(&mut rng, 5, 6);
            let b1 = random_matrix(&mut rng, 1, 6);
            let w2 = random_matrix(&mut rng, 6, 3);
            let b2 = random_matrix(&mut rng, 1, 3);
            let labels: Vec<usize> = (0..4).map(|_| rng.gen_range(0..3)).collect();
            let x2 = x.clone();
            let labels2 = labels.clone();
            check(&[w1, b1, w2, b2], move |t, ids| {
                let xn = t.constant(x2.clone());
                let h = t.matmul(xn, ids[0]).unwrap();
                let h = t.add_row(h, ids[1]).unwrap();
                let h = t.tanh(h);
                let o = t.matmul(h, ids[2]).unwrap();
                let o = t.add_row(o, ids[3]).unwrap();
                t.softmax_cross_entropy(o, &labels2).unwrap()
            });
        }
    }

    #[test]
    fn gradient_reversal_scales_upstream_gradient_by_minus_lambda() {
        // Compositional check inside a two-layer network: parameters feeding
        // the reversal see -lambda times the plain gradient, parameters after
        // it see the plain gradient.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &lambda in &[0.0, 0.5, 1.0, 2.0] {
            let x = random_matrix(&mut rng, 3, 4);
            let w1 = random_matrix(&mut rng, 4, 5);
            let w2 = random_matrix(&mut rng, 5, 2);
            let labels = vec![0, 1, 0];

            let run = |with_reversal: bool, lam: f64| {
                let mut t = Tape::new();
                let xn = t.constant(x.clone());
                let w1n = t.param(w1.clone());
                let w2n = t.param(w2.clone());
                let h = t.matmul(xn, w1n).unwrap();
                let h = t.tanh(h);
                let h = if with_reversal {
                    t.gradient_reversal(h, lam).unwrap()
                } else {
                    h
                };
                let o = t.matmul(h, w2n).unwrap();
                let loss = t.softmax_cross_entropy(o, &labels).unwrap();
                let v = t.value(loss).item();
                t.backward(loss).unwrap();
                (v, t.grad_or_zero(w1n), t.grad_or_zero(w2n))
            };

            let (v_plain, g1_plain, g2_plain) = run(false, lambda);
            let (v_rev, g1_rev, g2_rev) = run(true, lambda);
            assert_eq!(v_plain.to_bits(), v_rev.to_bits(), "value path must be identity");
            assert_eq!(g2_plain, g2_rev, "downstream gradients unchanged");
            let expected = g1_plain.map(|v| -lambda * v);
            let err = max_rel_err(&g1_rev, &expected, 1e-9);
            assert!(err < 1e-12, "lambda={lambda}: rel err {err}");
        }
    }
}
