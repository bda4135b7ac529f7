//! Randomized model generators for oracle self-checks: families of small
//! binary-cause models that are exogenous by construction, optionally with
//! outcome tables constrained to be monotonic for the `(1, 0, 1)` query.

use super::{NoiseVar, ScmSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn binary_labels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

fn random_noise(rng: &mut ChaCha8Rng) -> Vec<NoiseVar> {
    let n_vars = rng.gen_range(1..=3);
    (0..n_vars)
        .map(|i| {
            let k = rng.gen_range(2..=3);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            NoiseVar {
                name: format!("u{i}"),
                support: (0..k).map(|j| j.to_string()).collect(),
                probs: raw.iter().map(|p| p / sum).collect(),
            }
        })
        .collect()
}

fn random_cause_table(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let p = rng.gen_range(0.05..0.95);
    vec![1.0 - p, p]
}

/// Unconfounded binary-cause, binary-outcome model with a random outcome
/// table; exogenous by construction.
pub fn random_exogenous_scm(rng: &mut ChaCha8Rng) -> ScmSpec {
    let noise = random_noise(rng);
    let joint: usize = noise.iter().map(|v| v.support.len()).product();
    let table: Vec<Vec<usize>> = (0..joint)
        .map(|_| vec![rng.gen_range(0..2), rng.gen_range(0..2)])
        .collect();
    let cause = random_cause_table(rng);
    let scm = ScmSpec {
        noise,
        cause_support: binary_labels(),
        outcome_support: binary_labels(),
        cause_dist: super::CauseDist::Independent(cause),
        outcome_table: table,
    };
    scm.validate().expect("generated model is valid");
    scm
}

/// Like [`random_exogenous_scm`], but the outcome table never realizes
/// `Y_do(1) != 1` together with `Y_do(0) = 1`, so the model is monotonic
/// for the query `(z = 1, zbar = 0, y = 1)`.
pub fn random_monotonic_exogenous_scm(rng: &mut ChaCha8Rng) -> ScmSpec {
    let noise = random_noise(rng);
    let joint: usize = noise.iter().map(|v| v.support.len()).product();
    let table: Vec<Vec<usize>> = (0..joint)
        .map(|_| {
            let f0 = rng.gen_range(0..2);
            let f1 = if f0 == 1 { 1 } else { rng.gen_range(0..2) };
            vec![f0, f1]
        })
        .collect();
    let cause = random_cause_table(rng);
    let scm = ScmSpec {
        noise,
        cause_support: binary_labels(),
        outcome_support: binary_labels(),
        cause_dist: super::CauseDist::Independent(cause),
        outcome_table: table,
    };
    scm.validate().expect("generated model is valid");
    scm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pns::{
        check_exogeneity, check_monotonicity, lemma1_estimand, pns_exact,
        pns_joint_counterfactual,
    };
    use rand::SeedableRng;

    #[test]
    fn identification_holds_on_monotonic_exogenous_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut seen = 0;
        while seen < 200 {
            let scm = random_monotonic_exogenous_scm(&mut rng);
            assert!(check_exogeneity(&scm).unwrap());
            assert!(check_monotonicity(&scm, 1, 0, 1).unwrap());
            let pns = pns_exact(&scm, 1, 0, 1).unwrap();
            let est = lemma1_estimand(&scm, 1, 0, 1).unwrap();
            assert!(
                (pns - est).abs() <= 1e-12,
                "pns {pns} vs estimand {est}"
            );
            seen += 1;
        }
    }

    #[test]
    fn estimand_lower_bounds_pns_on_exogenous_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let scm = random_exogenous_scm(&mut rng);
            assert!(check_exogeneity(&scm).unwrap());
            let pns = pns_exact(&scm, 1, 0, 1).unwrap();
            let est = lemma1_estimand(&scm, 1, 0, 1).unwrap();
            assert!(est.max(0.0) <= pns + 1e-12, "pns {pns} vs estimand {est}");
            assert!((-1e-12..=1.0 + 1e-12).contains(&pns));
        }
    }

    #[test]
    fn two_term_and_joint_forms_agree_on_random_binary_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..200 {
            let scm = random_exogenous_scm(&mut rng);
            let a = pns_exact(&scm, 1, 0, 1).unwrap();
            let b = pns_joint_counterfactual(&scm, 1, 0, 1).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn binary_outcome_symmetry_holds_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for _ in 0..200 {
            let scm = random_exogenous_scm(&mut rng);
            let a = pns_exact(&scm, 1, 0, 1).unwrap();
            let b = pns_exact(&scm, 0, 1, 0).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }
}
