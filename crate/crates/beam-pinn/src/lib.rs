//! Hybrid Fourier-neural solver for the transverse vibration of an
//! Euler-Bernoulli beam.
//!
//! The displacement field is represented as a truncated Fourier modal series
//! with learnable coefficients plus a small boundary-modulated MLP correction.
//! Fourth-order spatial and second-order temporal derivatives of the neural
//! part are computed with truncated Taylor jets; parameter gradients come from
//! a reverse pass over a recording tape. Training is two-phase: Adam with
//! gradient clipping and plateau scheduling, then full-batch L-BFGS with a
//! strong-Wolfe line search.
//!
//! Modules:
//! - [`ad`]: jet arithmetic and the reverse-mode tape
//! - [`model`]: the hybrid ansatz and its checkpoint format
//! - [`physics`]: problem definition, exact-solution oracle, loss assembly
//! - [`sampling`]: Latin Hypercube collocation points and validation grids
//! - [`optim`]: Adam, L-BFGS, and the two-phase training driver
//! - [`harness`]: error metrics, the harmonic sweep, and report emission
//! - [`cli`]: the `beam-pinn` command-line front end

pub mod ad;
pub mod cli;
pub mod harness;
pub mod model;
pub mod optim;
pub mod physics;
pub mod sampling;
