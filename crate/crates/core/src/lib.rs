#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod error;
pub mod expr;
pub mod geodesic;
pub mod jets;
pub mod linalg;
pub mod ode;
pub mod spacetime;
pub mod submanifold;
pub mod variational;

pub use error::{GeometryError, Result};
pub use jets::Jet;
pub use spacetime::SpacetimeModel;
