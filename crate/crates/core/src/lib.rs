//! Multiprecision computation of the leading coefficients in equivariant
//! Szego kernel expansions on CR manifolds with torus symmetry.

pub mod coefficients;
pub mod fit;
pub mod group_geometry;
pub mod jets;
pub mod num;
pub mod pseudohermitian;
pub mod sphere_model;
pub mod quadrature;
pub mod stationary_phase;
pub mod verify;
