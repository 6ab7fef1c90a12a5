//! Discriminant-based classification of hyperbolic-elliptic transitions for
//! 2x2 quasilinear first-order systems, together with the machinery needed to
//! exhibit the associated Hadamard-type instability at desk scale: truncated
//! Taylor algebra for analytic symbols, normal forms with verified residuals,
//! scaled Airy evaluation, per-Fourier-mode propagators with growth envelopes,
//! a majorant-series fixed-point solver, and an exact-rational exponent
//! planner that reproduces the limiting Gevrey indices 1/3 and 2/13.

pub mod airy;
pub mod error;
pub mod field;
pub mod fixedpoint;
pub mod majorant;
pub mod normalform;
pub mod ode;
pub mod planner;
pub mod propagator;
pub mod series;
pub mod symbol;
pub mod vdw;

pub use error::Error;
pub use normalform::{normal_form, remainder_expansion, NormalFormData, RemainderDecomposition};
pub use series::{Caps, TaylorSeries, VarLayout};
pub use symbol::{
    classify_transition, discriminant, transition_time, QuasilinearSystem, TaylorSymbol,
    TransitionClassification,
};
