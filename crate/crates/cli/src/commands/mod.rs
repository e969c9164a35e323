pub mod ablate;
pub mod eval;
pub mod gen_data;
pub mod sweep;
pub mod train;
pub mod validate_sim;
