//! Confusion graphs from linear probes on intermediate classifier layers,
//! analyzed with network-science metrics.
//!
//! The flow is: feature dumps ([`dataset`]) feed softmax probes ([`probe`]),
//! whose predictions become confusion matrices and zero-diagonal directed
//! graphs ([`confusion`]). Those graphs are scored with degrees,
//! assortativity, directed modularity and community detection ([`netsci`]),
//! transformed or exported for plotting ([`graphops`]), and the whole
//! per-layer, per-epoch sweep is orchestrated by [`pipeline`].

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod confusion;
pub mod dataset;
pub mod error;
pub mod graphops;
pub mod netsci;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
