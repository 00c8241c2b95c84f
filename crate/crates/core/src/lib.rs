pub mod assimilation;
pub mod diagnostics;
pub mod integrator;
pub mod io;
pub mod model;
pub mod random;
pub mod spectral;
