//! Benchmark problems with analytic derivatives, and a name registry.

mod example1;
mod hyperclean;
mod lstsq;
mod scquad;

pub use example1::{example1_derivatives, example1_optimality_gap, Example1Derivatives, Example1Problem};
pub use hyperclean::{generate_hyperclean_data, Dataset, HypercleanParams, SyntheticHypercleanProblem};
pub use lstsq::{LstsqParams, SingularLstsqProblem};
pub use scquad::{scq_hypergradient, ScQuadParams, StronglyConvexQuadProblem};

use alloc::boxed::Box;

use crate::error::{Error, Result};
use crate::oracle::BilevelOracle;

/// Registry names accepted by [`ProblemKind::from_name`].
pub const PROBLEM_NAMES: [&str; 4] = ["example1", "singular-lstsq", "sc-quad", "hyperclean-syn"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Example1,
    SingularLstsq,
    ScQuad,
    HypercleanSyn,
}

impl ProblemKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "example1" => Some(Self::Example1),
            "singular-lstsq" => Some(Self::SingularLstsq),
            "sc-quad" => Some(Self::ScQuad),
            "hyperclean-syn" => Some(Self::HypercleanSyn),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Example1 => "example1",
            Self::SingularLstsq => "singular-lstsq",
            Self::ScQuad => "sc-quad",
            Self::HypercleanSyn => "hyperclean-syn",
        }
    }
}

/// Generator parameters for any registered problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemParams {
    Example1,
    SingularLstsq(LstsqParams),
    ScQuad(ScQuadParams),
    HypercleanSyn(HypercleanParams),
}

impl ProblemParams {
    pub fn default_for(kind: ProblemKind) -> Self {
        match kind {
            ProblemKind::Example1 => Self::Example1,
            ProblemKind::SingularLstsq => Self::SingularLstsq(LstsqParams::default()),
            ProblemKind::ScQuad => Self::ScQuad(ScQuadParams::default()),
            ProblemKind::HypercleanSyn => Self::HypercleanSyn(HypercleanParams::default()),
        }
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Self::Example1 => ProblemKind::Example1,
            Self::SingularLstsq(_) => ProblemKind::SingularLstsq,
            Self::ScQuad(_) => ProblemKind::ScQuad,
            Self::HypercleanSyn(_) => ProblemKind::HypercleanSyn,
        }
    }

    pub fn build(&self) -> Result<Box<dyn BilevelOracle + Send>> {
        Ok(match self {
            Self::Example1 => Box::new(Example1Problem),
            Self::SingularLstsq(p) => Box::new(SingularLstsqProblem::generate(p)?),
            Self::ScQuad(p) => Box::new(StronglyConvexQuadProblem::generate(p)?),
            Self::HypercleanSyn(p) => Box::new(generate_hyperclean_data(p)?),
        })
    }
}

/// Looks up a problem by registry name and builds it with default parameters.
pub fn build_default(name: &str) -> Result<Box<dyn BilevelOracle + Send>> {
    let kind = ProblemKind::from_name(name)
        .ok_or_else(|| Error::InvalidInput(alloc::format!("unknown problem {name:?}")))?;
    ProblemParams::default_for(kind).build()
}
