//! Numerical laboratory for transfer operators of hyperbolic maps: periodic
//! orbit sums, dynamical determinants and zeta functions, spectral-radius
//! bounds, Fourier collocation spectra and anisotropic Littlewood–Paley blocks.

// `!(x <= y)` guards are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aniso;
pub mod bounds;
pub mod cli_io;
pub mod collocation;
pub mod determinant;
pub mod map_model;
pub mod numerics;
pub mod par;
pub mod periodic_orbits;
