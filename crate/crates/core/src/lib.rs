//! Hazard-aware landing: LiDAR terrain mapping, circular landing-site selection,
//! lossless-convexified powered-descent trajectories and an adaptive
//! deferred-decision multi-target planner, plus the closed-loop simulator and
//! Monte Carlo harness that tie them together.
//!
//! Frame convention everywhere: surface-fixed, `e1` downrange, `e2` crossrange,
//! `e3` altitude (up). Lengths in meters, thrust in newtons, time in seconds.
//!
//! Module map:
//! - [`terrain`]: synthetic heightfields and a ray-cast LiDAR.
//! - [`mapping`]: downsampling, interpolation, normals, angle and safety maps.
//! - [`sites`]: distance skeleton, landing-site extraction, refinement, scoring.
//! - [`trajopt`]: discretized LCvx problem, conic solver interface, bisection.
//! - [`ddto`]: multi-target trunk-and-branch planner.
//! - [`adaptive`]: the adaptive re-planning guidance loop.
//! - [`harness`]: plant, failure model, closed-loop runs and Monte Carlo.
//! - [`io`]: text formats (xyz, PGM, CSV, JSON-lines).

pub mod adaptive;
pub mod ddto;
pub mod harness;
pub mod io;
pub mod mapping;
pub mod sites;
pub mod terrain;
pub mod trajopt;

pub use nalgebra;

/// Position/velocity state `[r; v]`.
pub type State = nalgebra::Vector6<f64>;
