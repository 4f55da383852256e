//! Serendipity and tensor-product finite elements on structured box meshes,
//! with additive Schwarz and geometric multigrid preconditioned CG.

pub mod assembly;
pub mod bench;
pub mod error;
pub mod fe_basis;
pub mod krylov;
pub mod mesh;
pub mod multigrid;
pub mod schwarz;
pub mod sparse;

pub use error::{Error, Result};
