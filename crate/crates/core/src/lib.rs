pub mod bench;
pub mod circuit;
pub mod learning;
pub mod models;
pub mod par;
pub mod program;
pub mod resolution;
pub mod synth;
pub mod terms;
