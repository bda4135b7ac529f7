//! Exact probability of necessity and sufficiency (PNS) on finite discrete
//! structural causal models.
//!
//! A model here is: a set of exogenous noise variables with finite supports
//! and probability tables, a cause variable `Z` whose distribution may depend
//! on the noise (that is how confounding enters), and a deterministic outcome
//! function `f(z, noise) -> y`. Everything is computed by enumerating the
//! joint noise support, so results are exact up to floating-point rounding.
//!
//! `PNS(z, zbar, y)` is the sum of two counterfactual terms sharing the noise
//! assignment across both intervention arms:
//!
//! ```text
//!   P(Y_do(z) = y | Z = zbar, Y != y) * P(Z = zbar, Y != y)
//! + P(Y_do(zbar) != y | Z = z, Y = y) * P(Z = z,    Y = y)
//! ```
//!
//! For a binary cause this equals the joint counterfactual probability
//! `P(Y_do(z) = y, Y_do(zbar) != y)`; [`pns_joint_counterfactual`] computes
//! that form independently so the equivalence is asserted, not assumed.
//!
//! Under exogeneity and monotonicity the observational estimand
//! `P(Y = y | Z = z) - P(Y = y | Z = zbar)` identifies PNS exactly;
//! [`check_exogeneity`] and [`check_monotonicity`] decide whether a given
//! model qualifies.

mod io;
pub mod random;

pub use io::{format_report_csv, format_report_text, parse_scm, read_scm};

use crate::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// One exogenous noise variable: finite support with a probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVar {
    pub name: String,
    pub support: Vec<String>,
    pub probs: Vec<f64>,
}

/// Distribution of the cause variable, optionally depending on the noise
/// assignment (which models confounding).
#[derive(Debug, Clone, PartialEq)]
pub enum CauseDist {
    /// One table shared by every noise assignment: no confounding.
    Independent(Vec<f64>),
    /// One table per joint noise assignment, indexed like the enumeration
    /// order of [`ScmSpec::for_each_noise`].
    ConditionalOnNoise(Vec<Vec<f64>>),
}

/// A finite discrete structural causal model with an enumerable noise space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    pub noise: Vec<NoiseVar>,
    pub cause_support: Vec<String>,
    pub outcome_support: Vec<String>,
    pub cause_dist: CauseDist,
    /// `outcome_table[noise_index][z_index]` is the outcome index.
    pub outcome_table: Vec<Vec<usize>>,
}

/// Everything the oracle reports about one `(z, zbar, y)` query.
#[derive(Debug, Clone, PartialEq)]
pub struct PnsReport {
    pub pns_exact: f64,
    pub lemma1_estimand: f64,
    pub monotonic: bool,
    pub exogenous: bool,
}

const MAX_JOINT_ASSIGNMENTS: usize = 1_000_000;

impl ScmSpec {
    /// Validates probability tables, the outcome table, and the joint noise
    /// size bound.
    pub fn validate(&self) -> Result<()> {
        let check_table = |what: &str, probs: &[f64], len: usize| -> Result<()> {
            if probs.len() != len {
                return Err(Error::validation(format!(
                    "{what}: table has {} entries for support of size {len}",
                    probs.len()
                )));
            }
            if probs.iter().any(|&p| !(0.0..=1.0 + PROB_TOL).contains(&p)) {
                return Err(Error::validation(format!(
                    "{what}: probabilities must lie in [0, 1]"
                )));
            }
            let sum: f64 = probs.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::validation(format!(
                    "{what}: probabilities sum to {sum}, expected 1"
                )));
            }
            Ok(())
        };

        if self.cause_support.is_empty() || self.outcome_support.is_empty() {
            return Err(Error::validation(
                "cause and outcome supports must be nonempty",
            ));
        }
        let mut joint = 1usize;
        for v in &self.noise {
            if v.support.is_empty() {
                return Err(Error::validation(format!(
                    "noise variable {} has empty support",
                    v.name
                )));
            }
            check_table(&format!("noise {}", v.name), &v.probs, v.support.len())?;
            joint = joint.saturating_mul(v.support.len());
        }
        if joint > MAX_JOINT_ASSIGNMENTS {
            return Err(Error::validation(format!(
                "joint noise support has {joint} assignments, exceeding the {MAX_JOINT_ASSIGNMENTS} bound"
            )));
        }
        match &self.cause_dist {
            CauseDist::Independent(t) => check_table("cause", t, self.cause_support.len())?,
            CauseDist::ConditionalOnNoise(rows) => {
                if rows.len() != joint {
                    return Err(Error::validation(format!(
                        "cause distribution has {} rows for {joint} noise assignments",
                        rows.len()
                    )));
                }
                for (i, row) in rows.iter().enumerate() {
                    check_table(&format!("cause row {i}"), row, self.cause_support.len())?;
                }
            }
        }
        if self.outcome_table.len() != joint {
            return Err(Error::validation(format!(
                "outcome table has {} rows for {joint} noise assignments",
                self.outcome_table.len()
            )));
        }
        for (i, row) in self.outcome_table.iter().enumerate() {
            if row.len() != self.cause_support.len() {
                return Err(Error::validation(format!(
                    "outcome row {i} has {} entries for {} cause values",
                    row.len(),
                    self.cause_support.len()
                )));
            }
            if let Some(&bad) = row.iter().find(|&&y| y >= self.outcome_support.len()) {
                return Err(Error::validation(format!(
                    "outcome row {i} maps to index {bad}, outside the outcome support"
                )));
            }
        }
        Ok(())
    }

    /// Builds a model from closures over noise-assignment digit vectors; the
    /// tables are materialized in enumeration order.
    pub fn from_fns(
        noise: Vec<NoiseVar>,
        cause_support: Vec<String>,
        outcome_support: Vec<String>,
        cause_probs: impl Fn(&[usize]) -> Vec<f64>,
        outcome: impl Fn(usize, &[usize]) -> usize,
        confounded: bool,
    ) -> Result<Self> {
        let sizes: Vec<usize> = noise.iter().map(|v| v.support.len()).collect();
        let joint: usize = sizes.iter().product();
        let mut outcome_table = Vec::with_capacity(joint);
        let mut cause_rows = Vec::with_capacity(if confounded { joint } else { 0 });
        let mut digits = vec![0usize; sizes.len()];
        for _ in 0..joint {
            let row: Vec<usize> = (0..cause_support.len())
                .map(|z| outcome(z, &digits))
                .collect();
            outcome_table.push(row);
            if confounded {
                cause_rows.push(cause_probs(&digits));
            }
            advance(&mut digits, &sizes);
        }
        let cause_dist = if confounded {
            CauseDist::ConditionalOnNoise(cause_rows)
        } else {
            CauseDist::Independent(cause_probs(&[]))
        };
        let scm = Self {
            noise,
            cause_support,
            outcome_support,
            cause_dist,
            outcome_table,
        };
        scm.validate()?;
        Ok(scm)
    }

    fn noise_sizes(&self) -> Vec<usize> {
        self.noise.iter().map(|v| v.support.len()).collect()
    }

    /// Visits every joint noise assignment as `(flat_index, probability)`.
    pub fn for_each_noise(&self, mut f: impl FnMut(usize, f64)) {
        let sizes = self.noise_sizes();
        let joint: usize = sizes.iter().product();
        let mut digits = vec![0usize; sizes.len()];
        for idx in 0..joint {
            let p: f64 = digits
                .iter()
                .zip(&self.noise)
                .map(|(&d, v)| v.probs[d])
                .product();
            f(idx, p);
            advance(&mut digits, &sizes);
        }
    }

    fn cause_prob(&self, noise_idx: usize, z: usize) -> f64 {
        match &self.cause_dist {
            CauseDist::Independent(t) => t[z],
            CauseDist::ConditionalOnNoise(rows) => rows[noise_idx][z],
        }
    }

    fn outcome(&self, noise_idx: usize, z: usize) -> usize {
        self.outcome_table[noise_idx][z]
    }

    pub fn cause_index(&self, label: &str) -> Result<usize> {
        self.cause_support
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::validation(format!("unknown cause value {label:?}")))
    }

    pub fn outcome_index(&self, label: &str) -> Result<usize> {
        self.outcome_support
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::validation(format!("unknown outcome value {label:?}")))
    }

    fn check_cause(&self, z: usize) -> Result<()> {
        if z >= self.cause_support.len() {
            return Err(Error::validation(format!(
                "cause index {z} outside support of size {}",
                self.cause_support.len()
            )));
        }
        Ok(())
    }

    fn check_outcome(&self, y: usize) -> Result<()> {
        if y >= self.outcome_support.len() {
            return Err(Error::validation(format!(
                "outcome index {y} outside support of size {}",
                self.outcome_support.len()
            )));
        }
        Ok(())
    }

    /// Observational `P(Z = z)`.
    fn prob_z(&self, z: usize) -> f64 {
        let mut acc = 0.0;
        self.for_each_noise(|u, p| acc += p * self.cause_prob(u, z));
        acc
    }

    /// Observational joint `P(Z = z, Y = y)`.
    fn prob_zy(&self, z: usize, y: usize) -> f64 {
        let mut acc = 0.0;
        self.for_each_noise(|u, p| {
            if self.outcome(u, z) == y {
                acc += p * self.cause_prob(u, z);
            }
        });
        acc
    }
}

fn advance(digits: &mut [usize], sizes: &[usize]) {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < sizes[i] {
            return;
        }
        digits[i] = 0;
    }
}

/// `P(Y_do(Z=z) = y)` by enumeration: fix `Z = z`, weight by noise only.
pub fn interventional_prob(scm: &ScmSpec, z: usize, y: usize) -> Result<f64> {
    scm.check_cause(z)?;
    scm.check_outcome(y)?;
    let mut acc = 0.0;
    scm.for_each_noise(|u, p| {
        if scm.outcome(u, z) == y {
            acc += p;
        }
    });
    Ok(acc)
}

/// Exact PNS: both counterfactual terms share the noise assignment, so the
/// sum reduces to one enumeration weighted by `P(Z=z|u) + P(Z=zbar|u)` on
/// the event `{f(z,u) = y, f(zbar,u) != y}`.
pub fn pns_exact(scm: &ScmSpec, z: usize, zbar: usize, y: usize) -> Result<f64> {
    scm.check_cause(z)?;
    scm.check_cause(zbar)?;
    scm.check_outcome(y)?;
    if z == zbar {
        return Err(Error::validation(
            "pns_exact requires two distinct cause values",
        ));
    }
    let mut acc = 0.0;
    scm.for_each_noise(|u, p| {
        if scm.outcome(u, z) == y && scm.outcome(u, zbar) != y {
            acc += p * (scm.cause_prob(u, z) + scm.cause_prob(u, zbar));
        }
    });
    Ok(acc)
}

/// Joint counterfactual `P(Y_do(z) = y, Y_do(zbar) != y)` over the noise
/// prior alone. Equals [`pns_exact`] whenever the cause support is exactly
/// `{z, zbar}`; kept separate so that equivalence is checked, not assumed.
pub fn pns_joint_counterfactual(scm: &ScmSpec, z: usize, zbar: usize, y: usize) -> Result<f64> {
    scm.check_cause(z)?;
    scm.check_cause(zbar)?;
    scm.check_outcome(y)?;
    if z == zbar {
        return Err(Error::validation(
            "joint counterfactual requires two distinct cause values",
        ));
    }
    let mut acc = 0.0;
    scm.for_each_noise(|u, p| {
        if scm.outcome(u, z) == y && scm.outcome(u, zbar) != y {
            acc += p;
        }
    });
    Ok(acc)
}

/// Observational estimand `P(Y = y | Z = z) - P(Y = y | Z = zbar)`.
pub fn lemma1_estimand(scm: &ScmSpec, z: usize, zbar: usize, y: usize) -> Result<f64> {
    scm.check_cause(z)?;
    scm.check_cause(zbar)?;
    scm.check_outcome(y)?;
    let pz = scm.prob_z(z);
    let pzbar = scm.prob_z(zbar);
    if pz <= 0.0 || pzbar <= 0.0 {
        return Err(Error::validation(format!(
            "conditioning on a zero-probability cause value: P(Z=z)={pz}, P(Z=zbar)={pzbar}"
        )));
    }
    Ok(scm.prob_zy(z, y) / pz - scm.prob_zy(zbar, y) / pzbar)
}

/// True iff no positive-probability noise assignment realizes the harmful
/// combination `Y_do(z) != y` together with `Y_do(zbar) = y` for this
/// orientation of the query.
pub fn check_monotonicity(scm: &ScmSpec, z: usize, zbar: usize, y: usize) -> Result<bool> {
    scm.check_cause(z)?;
    scm.check_cause(zbar)?;
    scm.check_outcome(y)?;
    if z == zbar {
        return Err(Error::validation(
            "monotonicity check requires two distinct cause values",
        ));
    }
    let mut ok = true;
    scm.for_each_noise(|u, p| {
        if p > 0.0 && scm.outcome(u, z) != y && scm.outcome(u, zbar) == y {
            ok = false;
        }
    });
    Ok(ok)
}

/// True iff interventional and observational conditionals agree for every
/// `(z, y)` pair. Degenerate conditioning (a single cause value, or a cause
/// value with zero observational probability) is an error.
pub fn check_exogeneity(scm: &ScmSpec) -> Result<bool> {
    if scm.cause_support.len() < 2 {
        return Err(Error::validation(
            "exogeneity check needs at least two cause values to condition on",
        ));
    }
    for z in 0..scm.cause_support.len() {
        let pz = scm.prob_z(z);
        if pz <= 0.0 {
            return Err(Error::validation(format!(
                "cause value {:?} has zero observational probability",
                scm.cause_support[z]
            )));
        }
        for y in 0..scm.outcome_support.len() {
            let interventional = interventional_prob(scm, z, y)?;
            let conditional = scm.prob_zy(z, y) / pz;
            if (interventional - conditional).abs() > PROB_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Runs the full oracle for one `(z, zbar, y)` query.
pub fn pns_report(scm: &ScmSpec, z: usize, zbar: usize, y: usize) -> Result<PnsReport> {
    scm.validate()?;
    Ok(PnsReport {
        pns_exact: pns_exact(scm, z, zbar, y)?,
        lemma1_estimand: lemma1_estimand(scm, z, zbar, y)?,
        monotonic: check_monotonicity(scm, z, zbar, y)?,
        exogenous: check_exogeneity(scm)?,
    })
}

/// Binary noise variable helper.
pub fn binary_noise(name: &str, p_one: f64) -> NoiseVar {
    NoiseVar {
        name: name.to_string(),
        support: vec!["0".into(), "1".into()],
        probs: vec![1.0 - p_one, p_one],
    }
}

fn binary_labels() -> Vec<String> {
    vec!["0".into(), "1".into()]
}

/// `Y = Z xor u` with `P(u = 1) = p_u` and a fair unconfounded cause.
pub fn xor_model(p_u: f64) -> ScmSpec {
    ScmSpec::from_fns(
        vec![binary_noise("u", p_u)],
        binary_labels(),
        binary_labels(),
        |_| vec![0.5, 0.5],
        |z, digits| z ^ digits[0],
        false,
    )
    .expect("xor model is valid")
}

/// `Y = Z and u` with `P(u = 1) = p_u` and a fair unconfounded cause.
pub fn and_model(p_u: f64) -> ScmSpec {
    ScmSpec::from_fns(
        vec![binary_noise("u", p_u)],
        binary_labels(),
        binary_labels(),
        |_| vec![0.5, 0.5],
        |z, digits| z & digits[0],
        false,
    )
    .expect("and model is valid")
}
