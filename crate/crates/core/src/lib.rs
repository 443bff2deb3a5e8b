pub mod eval;
pub mod exec;
pub mod fixtures;
pub mod gmn;
pub mod matching;
pub mod pairgen;
pub mod plan;
pub mod reward;
pub mod service;
pub mod sql;
pub mod steprtm;
