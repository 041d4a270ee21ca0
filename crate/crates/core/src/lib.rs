//! Relative structural integrity mapping for pressurized vessel walls.
//!
//! The crate combines two independent measurements taken on the same wall
//! surface:
//!
//! * a membrane **wall tension** (N/m) recovered by linear finite elements on
//!   the imaged, already loaded geometry ([`solver`]), and
//! * a **circumferential strain** obtained from deformable registration of two
//!   image frames ([`registration`]) projected on the local wall normal and
//!   divided by the local radius of curvature ([`geometry`]).
//!
//! Their ratio gives the structural integrity index, and its normalisation by
//! the surface mean gives the relative index ([`indices`]). Synthetic
//! phantoms with closed-form answers live in [`phantom`], file formats in
//! [`volume`] and [`pipeline`].

pub mod error;
pub mod geometry;
pub mod indices;
pub mod phantom;
pub mod pipeline;
pub mod registration;
pub mod solver;
pub mod volume;

pub mod numeric;

pub use error::{Error, Result};
