pub mod frames;
pub mod report;
pub mod solve;
pub mod stats;
