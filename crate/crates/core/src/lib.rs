//! C1-conforming virtual element solver for the Cahn-Hilliard equation on
//! general polygonal meshes.
//!
//! The discrete space carries three degrees of freedom per mesh vertex
//! (value plus scaled gradient), is contained in H2, and works on arbitrary
//! polygonal cells. Time stepping is backward Euler with a Newton solve per
//! step. See the crate README for the CLI and configuration format.

pub mod assembly;
pub mod expr;
pub mod io;
pub mod linsolve;
pub mod localspace;
pub mod mesh;
pub mod problems;
pub mod polybasis;
pub mod timestepper;
pub mod testing;
