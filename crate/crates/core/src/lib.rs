pub mod geometry;
pub mod vehicle;
pub mod field;
pub mod collision;
pub mod path;
pub mod pattern;
pub mod reeds_shepp;
pub mod graph;
pub mod hybrid_astar;
pub mod optimizer;
pub mod pipeline;
pub mod tracking;
