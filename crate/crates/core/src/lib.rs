// SPDX-License-Identifier: Apache-2.0

//! Bell correlations between two particles in curved spacetime.
//!
//! Each particle follows a geodesic from a common emission event. A spin
//! setting chosen at the right detector is parallel-transported back to the
//! emission event and on to the left detector, where it is projected onto
//! the local observer's frame. The projection's weight `w` and direction
//! enter the singlet correlation `P(a, b) = -(a . b_RL) w^2`, which is then
//! tested against the generalized Bell inequality and against Monte Carlo
//! local hidden-variable models.

pub mod bell;
pub mod error;
pub mod frames;
pub mod geodesic;
pub mod geometry;
mod integrator;
pub mod lhv;
pub mod scenario;

pub use bell::{
    find_max_violation, generalized_bell_check, quantum_correlation, violation_condition, InequalityReport, Search,
    SettingsTriple, ViolationAngles,
};
pub use error::{Error, Result};
pub use frames::{
    build_comoving_frame, build_static_frame, embed_direction, project_to_frame, Direction3, FrameChoice, LocalFrame,
    ProjectionResult,
};
pub use geodesic::{
    integrate_geodesic, parallel_transport, transport_r_to_l, Direction, GeodesicKind, GeodesicPath, IntegratorOptions,
    StopCondition, StopKind, TransportedVector,
};
pub use geometry::{inner, Chart, ChristoffelSymbols, FourVector, MetricSpec, MetricTensor, SpacetimePoint};
pub use lhv::{
    correlation_mc, lhv_inequality_audit, make_sign_model, verify_anticorrelation, AuditCase, AuditReport, LhvModel,
    McEstimate, SignModel,
};
pub use scenario::{
    load_config, parse_config, run_horizon_sweep, run_scenario, run_sweep, CsvRow, HorizonSweep, RowStatus, RunReport,
    ScenarioConfig, ScenarioError, ScenarioGeometry, Stage,
};
