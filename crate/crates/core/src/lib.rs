// Guards of the form `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cox;
pub mod data;
pub mod embed;
pub mod error;
pub mod learners;
pub mod niecc;
pub mod numstats;
pub mod pipeline;
pub mod profile;
pub mod result;
pub mod select;
pub mod simgen;
