//! Attention transfer from a document-level sentiment teacher to an
//! aspect-level student.

pub mod asc;
pub mod attention;
pub mod corpus;
pub mod dsc;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod metrics;
pub mod network;
pub mod synthetic;
pub mod train;
pub mod transfer;

pub use error::{AtnError, Result};
