//! Period-doubling renormalization of unimodal maps with critical exponent
//! `alpha > 1`, carried out on decompositions: tree-indexed chains of interval
//! diffeomorphisms kept in nonlinearity coordinates.
//!
//! Module map:
//!
//! * [`diffspace`] – diffeomorphisms of [-1, 1] as nonlinearity profiles,
//!   zoom operators and the canonical folding maps.
//! * [`timetree`] – decomposition times: binary words with the in-order rule.
//! * [`decompspace`] – decompositions, geometries, geometrical
//!   renormalization operators and pure decompositions.
//! * [`renorm`] – decomposed unimodal maps, the dynamical renormalization
//!   operator and the fixed-point / periodic-orbit searches.
//! * [`spectral`] – universal constants and the superstable-cascade oracle.

mod cheb;
pub mod config;
pub mod decompspace;
pub mod diffspace;
pub mod error;
pub mod renorm;
pub mod spectral;
pub mod timetree;

pub use config::SolverConfig;
pub use decompspace::{Decomposition, Geometry};
pub use diffspace::{FoldingMap, NonlinearityProfile, Orientation, OrientedInterval};
pub use error::{Error, Result};
pub use renorm::{DecomposedMap, FixedPointReport, RenormStep};
pub use spectral::CascadeTable;
pub use timetree::{DecompositionTimes, TimeIndex};
