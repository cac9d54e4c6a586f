//! Multi-parameter singular Radon transforms: dilations, kernels, vector
//! fields, surfaces, Carnot-Carathéodory geometry, operator norms and the
//! Newton-polygon decision procedure.

pub mod ccgeom;
pub mod decide;
pub mod dilations;
pub mod error;
pub mod kernels;
pub mod opnorm;
pub mod quad;
pub mod surfaces;
pub mod util;
pub mod vfields;

pub use dilations::{DegreeVector, DilationScheme, ParamLattice, Rational};
pub use error::{Error, Result};
pub use kernels::{BumpSpec, Cutoff, DyadicKernel, Shape, UniformGrid};
pub use opnorm::{DecayFit, LinOp};
pub use surfaces::{SurfaceMap, WSpec};
pub use vfields::{DegreedField, VField};
pub use decide::PolySurface;
