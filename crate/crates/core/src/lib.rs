//! Joint beamforming and power control for multicell MIMO networks whose
//! base stations use low-resolution ADCs and DACs.
//!
//! The crate provides exact SINR evaluators under the additive quantization
//! noise model, the iterative uplink/downlink duality solver (narrowband and
//! OFDM), a closed-form solver for homogeneous per-cell powers, a per-cell
//! baseline, and a Monte Carlo experiment harness.

pub mod comp_solver;
pub mod deterministic;
pub mod error;
pub mod harness;
pub mod network;
pub mod numerics;
pub mod ofdm;
pub mod percell;
pub mod quantization;
pub mod sinr;

#[cfg(test)]
mod oracles;

pub use comp_solver::{
    build_k, dl_scaling, fixed_point_ul, mmse_combiner, solve_icomp, verify_solution,
    IcompSolution, SolutionAudit, SolveReport, SolverConfig,
};
pub use deterministic::{eigen_quantities, solve_deterministic, CellEigenQuantities, DeterministicSolution};
pub use error::{Error, Result};
pub use network::{draw_channels, ChannelSet, Geometry, Scenario};
pub use numerics::{ComplexMatrix, ComplexVector};
pub use ofdm::{OfdmProblem, OfdmSolution, SigmaStructure};
pub use percell::{percell_solve, PercellConfig, PercellSolution};
pub use quantization::{quant_gain, Bits, QuantConfig};
pub use sinr::{BeamformerSet, PowerAllocation};
