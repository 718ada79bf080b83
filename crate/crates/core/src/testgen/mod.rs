//! Test problem generators: synthetic `A + B` pairs with prescribed spectra
//! and the weak-constraint 4D-VAR heat-equation system.

mod fourdvar;
mod synthetic;

pub use fourdvar::{
    build_4dvar_preconditioners, FourDVarConfig, FourDVarFactor, FourDVarPreconditioners, FourDVarSystem,
};
pub use synthetic::{assemble_synthetic, assemble_synthetic_stream, spectrum, SpectrumParams, SyntheticProblem};
