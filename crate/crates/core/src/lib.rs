//! Find hyper-rectangular regions of a parameter space where a scalar score
//! `f: Ω → (0,1)` stays high (robust) or low (adversarial).
//!
//! Regions grow from a seed point by gradient steps on their bounds. The
//! update rules only need `f` (and for the white-box rules `∇f`) at the box
//! corners: see [`optimizers`]. Oracles for `f` are in [`oracles`], corner
//! sampling and integrals in [`quadrature`], whole-domain maps and region
//! checks in [`maps_metrics`].

pub mod cli;
pub mod error;
pub mod geometry;
pub mod maps_metrics;
pub mod optimizers;
pub mod oracles;
pub mod quadrature;

pub use error::{Result, SrfError};
pub use geometry::{corner_matrix, mask_matrix, outer_corner_matrix, BinaryMask, Domain, Region, MAX_DIM};
pub use maps_metrics::{
    average_maps, read_map_csv, sample_map, srvr, srvr_summary, validate_region, write_map_csv, RegionReport,
    SemanticMap, SrvrSummary, Verdict,
};
pub use optimizers::{
    grow_region, naive_step, oirb_step, oirw_step, trapgrad_step, GrowError, GrowthTrace, Method, OptimizerParams,
};
pub use oracles::{
    adversarial_wrapper, external_oracle, make_builtin, BuiltinKind, BuiltinSpec, FunctionOracle, EPS_CLIP,
};
pub use quadrature::{
    brute_force_integral, corner_gradients, corner_values, trapezoid_integral, CornerGradients, CornerValues,
};
