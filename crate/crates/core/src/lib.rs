//! Campanato spaces on Carnot groups.
//!
//! Group kernel, homogeneous polynomial calculus, gauge distances and domains,
//! quadrature, best `L^p` polynomial approximation on metric balls, and the
//! verification engine for the regularity estimates of the Campanato class.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod campanato;
pub mod error;
pub mod functions;
pub mod group;
pub mod hpoly;
pub mod metric;
pub mod parallel;
pub mod poly;
pub mod quadrature;
pub mod report;
pub mod scalar;

pub use campanato::{Campanato, CampanatoParams, PlanSpec, Regime};
pub use approx::{best_poly, best_poly_values, extract_ai, extract_word, ApproxResult};
pub use error::{Error, Result};
pub use functions::{Field, TestFunction};
pub use group::{validate_group, CarnotGroup, GroupSpec, Point};
pub use hpoly::{HPolynomial, basis, basis_indices, hom_degree};
pub use metric::{Domain, GaugeKind, HomDistance};
pub use poly::{MultiIndex, Poly};
pub use quadrature::{build_nodes, integrate, NodeSet, QuadScheme};
