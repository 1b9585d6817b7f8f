pub mod config;
pub mod cli;
pub mod decision;
pub mod geometry;
pub mod guardian;
pub mod harness;
pub mod prediction;
pub mod qp;
pub mod scenario;
pub mod planner;
