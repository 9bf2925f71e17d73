//! File formats and artifact emission: GRD1 binary tensors, flat
//! `key = value` configs, seasons CSV, and SVG plots.

pub mod config;
pub mod grd;
pub mod svg;

pub use config::ExperimentConfig;
pub use grd::{
    read_ensemble, read_grd, read_grid, read_seasons, read_stack, write_ensemble, write_grd,
    write_grid, write_seasons, write_stack, GrdFile,
};
pub use svg::{heatmap, line_plot, Series};
