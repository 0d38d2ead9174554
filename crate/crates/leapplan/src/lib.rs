//! Planning and tracking toolkit for dynamic aerial motions (jumps, spins,
//! flips) of a quadruped modeled as a single rigid body.
//!
//! The pipeline has two stages mirroring its runtime architecture:
//!
//! 1. **Plan once**: build a contact schedule and projectile-based reference
//!    ([`schedule`]), then solve a contact-constrained trajectory optimization
//!    for the takeoff phase ([`trajopt`] on top of the dense SQP/QP engine in
//!    [`qp`]/[`sqp`]).
//! 2. **Track at 500 Hz**: linearize the error dynamics on SO(3) about the
//!    plan, integrate a finite-horizon Riccati sweep ([`vbl`], [`riccati`]),
//!    and run a friction-constrained feedback QP ([`vboc`]).
//!
//! A rigid-body simulator ([`sim`]) closes the loop for open-loop vs feedback
//! comparisons, and [`cli`] wires everything to config files and artifacts.

pub mod error;
pub mod qp;
pub mod schedule;
pub mod sqp;
pub mod terrain;
pub mod trajopt;
pub mod srb;

pub use error::{Error, Result};
