//! Std companion to `nestemb-core`: binary model and corpus files, CSV dataset
//! IO, report rendering, the HTTP service and the `nestemb` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod format;
pub mod report;
pub mod service;
