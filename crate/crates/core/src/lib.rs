pub mod bench;
pub mod consensus;
pub mod coordinator;
pub mod dp;
pub mod grid;
pub mod model;
pub mod monitor;
