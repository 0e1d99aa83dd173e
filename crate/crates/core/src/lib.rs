//! Video scene segmentation with joint space-time shifted-window attention
//! and supervised inter-video pixel contrast.
//!
//! The crate is organized around a small dense-tensor engine with reverse-mode
//! differentiation ([`tensor`]), the windowed attention machinery ([`stswin`]),
//! a hybrid CNN–Transformer segmentation network ([`segnet`]), the pixel-level
//! contrastive objective with its momentum branch ([`contrast`]), the staged
//! training pipeline ([`train`]), a synthetic video dataset ([`data`]), and
//! evaluation protocols ([`metrics`]).
//!
//! Everything runs in double precision on the CPU so that analytic oracles
//! (finite differences, brute-force references in [`oracle`]) can be checked
//! at tight tolerances; [`verify`] bundles those checks into a runnable suite.

pub mod contrast;
pub mod data;
pub mod metrics;
pub mod oracle;
pub mod segnet;
pub mod stswin;
pub mod tensor;
pub mod train;
pub mod verify;
