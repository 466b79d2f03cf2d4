pub mod rs_oracle;
pub mod geometry_oracle;
