//! Frequent-shopper characterization for online retail invoice data.
//!
//! The pipeline turns raw invoice lines into a customer × item spend matrix,
//! scores customer value with a weighted RFM score, keeps the items that
//! explain that value (LASSO), learns a sparse purchase dictionary and
//! customer affinities (regularised NMF), clusters the affinities with a
//! noise-aware density method and exports the resulting bipartite graphs.

pub mod cluster;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod lasso;
pub mod nmf;
pub mod pipeline;
pub mod rfm;

pub use error::{Error, Result};
