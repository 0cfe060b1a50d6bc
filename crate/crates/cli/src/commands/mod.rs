pub mod bridge;
pub mod judge;
pub mod mep;
pub mod report;
pub mod static_xai;
pub mod stats;
pub mod synth;
