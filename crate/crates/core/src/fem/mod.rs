//! Continuous Lagrange finite elements of degree 1 to 3 on triangles.

pub mod assembly;
pub mod dense;
pub mod field;
pub mod lagrange;
pub mod quadrature;
pub mod space;
pub mod sparse;

pub use assembly::{
    apply_dirichlet, apply_dirichlet_matrix, assemble_helmholtz, assemble_mass, assemble_stiffness,
    assemble_weighted_stiffness, interpolation_matrix, interpolation_matrix_with, l2_norm_sq,
    reference_mass, zero_boundary, Tabulation, REF_AREA,
};
pub use dense::DenseMatrix;
pub use field::Field;
pub use lagrange::{local_dim, LagrangeElement, MAX_LOCAL};
pub use quadrature::TriangleQuadrature;
pub use space::FunctionSpace;
pub use sparse::SparseMatrix;
