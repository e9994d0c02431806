// `!(x > 0.0)` is used throughout to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod iterations;
pub mod linalg;
pub mod metric;
pub mod network;
pub mod sets;
pub mod signal;

pub use equilibrium::{DeviationMode, NashCertificate};
pub use error::{Error, Result};
pub use game::{CostParams, GameDescription, GameSpec};
pub use iterations::{
    FeedbackScheme, MannSchedule, ResidualKind, RunResult, SplitCounts, StoppingRule,
};
pub use metric::SpdMatrix;
pub use network::{Network, SpectralReport, Topology};
pub use sets::{ConvexSet, PrimitiveSet, ProjectionOptions, Projector};
pub use signal::StackedSignal;
