//! End-to-end acceptance suite for `crookscan`, kept in its own package so
//! `cargo test --workspace` runs it after the library's own tests.
//!
//! The library exposes the helpers shared with the `crookscan` integration
//! tests.

#[path = "../../crookscan/tests/common/mod.rs"]
pub mod common;
