//! MPNS: multimodal representation learning guided by the probability of
//! necessity and sufficiency (PNS), at desk scale.
//!
//! The crate has three independent pillars and a training stack on top:
//!
//! - [`autodiff`]: a minimal reverse-mode tape over dense `f64` matrices,
//!   enough to train small MLPs, including a gradient-reversal op.
//! - [`synth`]: the seeded two-modality synthetic benchmark generator with
//!   ground-truth latents (`NS`, `SF`, `NC`, `SC`) retained for evaluation.
//! - [`pns`]: an exact PNS oracle for finite discrete structural causal
//!   models, with the observational estimand and condition checkers.
//!
//! The training stack ([`model`], [`loss`], [`train`], [`eval`], [`harness`])
//! implements the decoupling network with a mirrored complement extractor,
//! the five-term joint objective, adversarial modality confusion via gradient
//! reversal, distance-correlation evaluation, and the ablation grid runner.

pub mod autodiff;
pub mod eval;
pub mod harness;
pub mod loss;
pub mod model;
pub mod pns;
pub mod synth;
pub mod train;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {lhs_rows}x{lhs_cols}, right is {rhs_rows}x{rhs_cols}")]
    Dimension {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("{0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("training diverged: {term} = {value} at epoch {epoch}")]
    Divergence {
        term: String,
        value: f64,
        epoch: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn dim(op: &'static str, lhs: (usize, usize), rhs: (usize, usize)) -> Self {
        Error::Dimension {
            op,
            lhs_rows: lhs.0,
            lhs_cols: lhs.1,
            rhs_rows: rhs.0,
            rhs_cols: rhs.1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
