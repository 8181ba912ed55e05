//! Reference implementations and invariant checks shared by the property
//! suites here and the acceptance suite of the command-line crate.
#![allow(dead_code)]

pub mod grid;
pub mod invariants;
