//! Numerical geometry of quantum statistical manifolds at desk scale.
//!
//! The crate builds matrix exponential families rho_theta =
//! exp(theta^k E_k - alpha(theta)), their GNS purification Omega_theta,
//! and families of parallel transport operators (mixture, unitary dual,
//! alpha-interpolated, product-form, and ODE-generated). On top of the
//! transports it computes quantum vector potentials, force and holonomy
//! tensors, curvature commutators, metric tensors with Christoffel
//! symbols, and integrates geodesics. Every algebraic identity the
//! construction is supposed to satisfy ships as a machine-checkable
//! property with explicit tolerances.

pub mod calculus;
pub mod config;
pub mod connection;
pub mod error;
pub mod expfam;
pub mod geodesic;
pub mod gns;
pub mod matrix;
pub mod metric;
pub mod path;
pub mod report;
pub mod rng;
pub mod verify;
