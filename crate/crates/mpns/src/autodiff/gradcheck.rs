//! Central finite differences for validating tape gradients. Testing
//! utility: it only ever evaluates forward passes, so it stays independent
//! of the backward rules it is used to check.

use super::matrix::Matrix;

/// Gradient of `f` w.r.t. every entry of every input, by central differences
/// with step `h`. `f` must be a pure function of the inputs.
pub fn central_diff_grad(
    f: &mut dyn FnMut(&[Matrix]) -> f64,
    inputs: &[Matrix],
    h: f64,
) -> Vec<Matrix> {
    let mut work: Vec<Matrix> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for p in 0..inputs.len() {
        let (rows, cols) = inputs[p].shape();
        let mut g = Matrix::zeros(rows, cols);
        for idx in 0..rows * cols {
            let orig = work[p].as_slice()[idx];
            work[p].as_mut_slice()[idx] = orig + h;
            let fp = f(&work);
            work[p].as_mut_slice()[idx] = orig - h;
            let fm = f(&work);
            work[p].as_mut_slice()[idx] = orig;
            g.as_mut_slice()[idx] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between two gradients, with a denominator floor so
/// near-zero entries compare absolutely.
pub fn max_rel_err(got: &Matrix, want: &Matrix, floor: f64) -> f64 {
    assert_eq!(got.shape(), want.shape());
    got.as_slice()
        .iter()
        .zip(want.as_slice())
        .map(|(&a, &b)| (a - b).abs() / b.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Step size matching the advertised gradient-check tolerance.
pub const FD_STEP: f64 = 1e-5;

/// Relative-error bound for gradient checks.
pub const FD_TOL: f64 = 1e-5;

/// Denominator floor for [`max_rel_err`] in gradient checks.
pub const FD_FLOOR: f64 = 1e-3;
