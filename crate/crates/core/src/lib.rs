//! Entropic transfer operators for point-cloud dynamics.
//!
//! A map sampled at weighted points is turned into a Markov matrix by solving
//! an entropically regularized self-transport problem between the images and
//! the points. Its leading spectrum approximates coherent and almost
//! invariant structure of the underlying dynamics at resolution `sqrt(eps)`.

pub mod analysis;
pub mod baselines;
pub mod entropic_ot;
pub mod error;
pub mod geometry;
pub mod spectral;
pub mod systems;
pub mod torus_oracle;
pub mod transfer;

pub use analysis::{internal_transition_probability, kmeans, sign_split, Partition};
pub use baselines::{
    diffusion_map_operator, edmd_matrices, normalized_gaussian_transfer, three_state_transfer,
    ThreeStateModel,
};
pub use entropic_ot::{sinkhorn, EpsilonSchedule, SinkhornConfig, TransportSolution};
pub use error::{Error, LoadError, Result};
pub use geometry::{CostMatrix, Metric, WeightedPointCloud};
pub use spectral::{
    dominant_real_eigs, eigendecompose, epsilon_sweep, EigenMethod, EigenOptions, SpectrumReport,
    SweepRow,
};
pub use systems::{LorenzParams, TrajectoryDataset, TrajectoryFormat};
pub use torus_oracle::{RationalApprox, ShiftMapSpec};
pub use transfer::{build_entropic_transfer, koopman_matrix, TransferMatrix};
