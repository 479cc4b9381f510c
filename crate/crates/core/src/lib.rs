//! Numerical laboratory for the critical-point geometry of solutions of the
//! prescribed mean curvature equation `div(∇u/√(1+|∇u|²)) = f(u)` with
//! Dirichlet data, on planar domains and on meridian sections of domains of
//! revolution.

pub mod critical;
pub mod domain;
pub mod geometry;
pub mod mesh;
pub mod nodal_flow;
pub mod pipeline;
pub mod fields;
pub mod radial_oracle;
pub mod solver;
pub mod sparse;
