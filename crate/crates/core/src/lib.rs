//! Cycle-approximate simulator of a dual-core scalar+vector cluster whose
//! two vector units can be driven independently (split mode) or by a single
//! core as one wider unit (merge mode).

pub mod cluster;
pub mod isa;
pub mod metrics;
pub mod vector;
pub mod workloads;
pub mod experiment;
