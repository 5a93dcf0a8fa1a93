//! Exact branch-and-price for fleet charge and service scheduling.

pub mod battery;
pub mod bnp;
pub mod fixtures;
pub mod instgen;
pub mod lp;
pub mod master;
pub mod model;
pub mod network;
pub mod oracle;
pub mod pricing;
