//! Verification of a fixed controller against an STL requirement when the
//! environment is only known through data.
//!
//! The pipeline alternates two phases: a falsifier searches for environment
//! inputs that violate the requirement, and a piecewise L1 SVM learns a
//! state-dependent ("reactive") bound on the environment input that keeps
//! all observed behavior while excluding the counter-examples. Learned bounds
//! carry a random-convex-program certificate on their false-negative rate.

pub mod bench;
pub mod cegis;
pub mod falsify;
pub mod learn;
pub mod qp;
pub mod rcp;
pub mod stl;
pub mod trace;
