//! Numerical toolkit for time-periodic lattice Schrodinger operators with
//! complex potentials: quasienergy operators on finite boxes, regularized
//! Fredholm determinants, complex eigenvalue extraction, and trace-identity
//! verification at desk scale.

pub mod determinant;
pub mod error;
pub mod floquet;
pub mod lattice;
pub mod linalg;
pub mod scenario;
pub mod spectra;
pub mod trace;

pub use error::{Error, Result};
