pub mod eval;
pub mod gradcheck;
pub mod heatmap;
pub mod stages;
pub mod train;
