//! Drift-kinetic Vlasov model for low-Mach plasmas in strong magnetic fields.
//!
//! Fields and geometry live in [`field`] and [`field_line`]; velocity
//! coordinates in [`frame`]; gyrophase calculus in [`gyro`]; velocity moments
//! in [`moments`]; drifts in [`drifts`]; the fast parallel motion and the full
//! orbit reference in [`fast_motion`]; the elliptic constraint for u∥ in
//! [`parallel`]; the reduced transport equation in [`transport`] and
//! [`reduced`]; configuration-driven runs in [`scenario`].

// `!(x > 0.0)` is the NaN-rejecting form used throughout input checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments)]

pub mod distribution;
pub mod drifts;
pub mod error;
pub mod fast_motion;
pub mod field;
pub mod field_line;
pub mod frame;
pub mod gyro;
pub mod math;
pub mod moments;
pub mod parallel;
pub mod reduced;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
pub use math::{Mat3, Vec3};
