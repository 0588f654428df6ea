//! Solver and certifier for competitive equilibria of time-dependent pure
//! exchange economies, posed as a quasi-variational inequality over
//! piecewise-constant price and allocation curves.

pub mod economy;
pub mod error;
pub mod qvi;
pub mod sets;
pub mod timegrid;
pub mod verify;
pub mod vi;

pub use economy::{assemble_qvi, default_caps, Agent, Economy, UtilitySpec};
pub use error::{Error, Result};
pub use qvi::{
    check_truncation_interior, solve_qvi, solve_qvi_product, solve_qvi_truncated, QviParams, QviProblem,
    QviSolveReport,
};
pub use sets::SetDescriptor;
pub use timegrid::{GridFunction, TimeGrid};
pub use verify::{certify_equilibrium, CertParams, CertReport, Verdict};
pub use vi::{solve_vi_extragradient, Operator, SolveReport, ViParams};
