//! Shared fixtures for the benchmark targets.

use vrcq_core::{garnet, MdpInstance};

/// The Garnet family sizes the benchmarks run against.
pub fn desk_instance() -> MdpInstance {
    garnet(20, 2, 2, 7).expect("valid parameters")
}

pub fn wide_instance() -> MdpInstance {
    garnet(100, 5, 5, 7).expect("valid parameters")
}
