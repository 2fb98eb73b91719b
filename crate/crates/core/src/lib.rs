pub mod dsu;
pub mod engine;
pub mod eval;
pub mod policy;
pub mod protocol;
pub mod roster;
pub mod scenario;
pub mod secretary;
pub mod worldstate;
