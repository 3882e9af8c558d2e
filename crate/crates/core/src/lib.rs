//! Quantum Kolmogorov–Arnold networks on a dense statevector simulator.
//!
//! * [`simcore`]: statevectors, gates, register layouts, entangling layers.
//! * [`spline`]: B-spline bases and the input lattice.
//! * [`qcbm`]: Born-machine pre-training of spline superpositions.
//! * [`residual`]: the hybrid and fully quantum edge functions.
//! * [`network`]: layer composition and grid calibration.
//! * [`optim`]: losses, Adam, finite-difference training, metrics.
//! * [`data`]: moons, Iris and regression datasets.
//! * [`baselines`]: VQC classifiers and ablation variants.

pub mod baselines;
pub mod data;
pub mod error;
pub mod network;
pub mod optim;
pub mod qcbm;
pub mod residual;
pub mod simcore;
pub mod spline;

pub use error::{QukanError, Result};
pub use network::QuKanNetwork;
pub use residual::{BaseCircuit, Readout, ResidualMode, ResidualUnit};
pub use simcore::{EntanglingLayerStack, RegisterLayout, StateVector};
pub use spline::{DiscretizationGrid, SplineBasis};
