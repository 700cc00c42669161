pub mod dataset;
pub mod flow;
pub mod geometry;
pub mod infill;
pub mod pipeline;
pub mod pose;
pub mod power;
pub mod ransac;
pub mod synth;
pub mod warp;
