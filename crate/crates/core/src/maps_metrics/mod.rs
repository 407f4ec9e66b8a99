//! Semantic maps over the whole domain, region validation and SRVR.

mod map;
mod region;

pub use map::{average_maps, read_map_csv, sample_map, write_map_csv, SemanticMap};
pub use region::{
    srvr, srvr_summary, validate_region, RegionReport, SrvrSummary, Verdict, DEFAULT_EPS_M, DEFAULT_EPS_V,
    DEFAULT_SAMPLES_PER_DIM,
};
