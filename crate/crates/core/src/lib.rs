//! Finite element solver for quasi-static Biot poroelasticity coupled to
//! linear elasticity across a flat interface, solved per time step by FETI
//! iteration on the interface multiplier.

pub mod assembly;
pub mod elements;
pub mod error;
pub mod feti;
pub mod mesh;
pub mod model;
pub mod sparse;
pub mod timeloop;
pub mod verify;

pub use error::{Error, Result};
pub use mesh::{DofMap, FacetTag, FeOrders, Mesh, Point, Rect, Subdomain};
pub use sparse::CsrMatrix;
