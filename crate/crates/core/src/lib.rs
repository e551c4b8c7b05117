//! Symmetric tensor decomposition by subspace power iterations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ascent;
pub mod decompose;
pub mod error;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod rng;
pub mod subspace;
pub mod tensor;

pub use ascent::{run_pm_ascent, run_spm_ascent, solve_component, solve_component_from, spm_step, AscentConfig, AscentTrace};
pub use decompose::{
    decompose, deflate_subspace, match_components, pinv_stability_bound, recovery_bound, sigma_k_lower_bound,
    weight_estimate, DecompositionResult, MatchReport, RecoveryBound,
};
pub use landscape::{
    certify_point, certify_point_with, estimate_rho, frame_constants, grammian, objective_via_grammian, pm_objective,
    spurious_construction, thresholds, CriticalityReport, FrameConstants, FrameEstimate, Grammian, ThresholdSet,
    Verdict,
};
pub use error::{Result, SpmError};
pub use subspace::{
    extract_subspace, subspace_distance, subspace_perturbation_bound, FlatteningSvd, RankRule, TensorSubspace,
};
pub use tensor::{
    add_gaussian_noise, cp_synthesize, flatten, flatten_matrix, sym_outer_power, symmetrize, ComponentEnsemble,
    DenseTensor, SymTensor, TensorData,
};
