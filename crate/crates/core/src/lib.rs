pub mod coefficients;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod operator;
pub mod semigroup;
pub mod fit;
pub mod spectral;
pub mod asymptotics;
