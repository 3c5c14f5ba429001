//! Discretized lossless-convexified powered descent.
//!
//! The continuous problem minimizes cumulative thrust subject to a thrust
//! annulus, a tilt cone and velocity bounds. Replacing `||T||` by a slack `Γ`
//! with `||T|| <= Γ` turns the annulus into convex constraints; at the optimum
//! the slack is active, so nothing is lost. Time of flight is fixed per solve
//! and minimized by searching over the node count.

pub mod conic;

use nalgebra::{Matrix6, Matrix6x3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conic::{
    solve_with_fallbacks, Affine, ClarabelSolver, Cone, ConicProgram, ConicSolution, ConicSolver,
    SolveStatus,
};

use crate::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajoptError {
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("problem is infeasible with {nodes} nodes")]
    Infeasible { nodes: usize },
    #[error("solver did not converge with {nodes} nodes: {detail}")]
    SolverFailure { nodes: usize, detail: String },
    #[error("no feasible node count up to {hi}")]
    NoFeasibleNodes { hi: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    pub mass: f64,
    pub gravity: [f64; 3],
    pub thrust_min: f64,
    pub thrust_max: f64,
    pub tilt_max_deg: f64,
    pub v_max_lat: f64,
    pub v_max_vert: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            gravity: [0.0, 0.0, -9.81],
            thrust_min: 3.34,
            thrust_max: 16.72,
            tilt_max_deg: 5.0,
            v_max_lat: 5.0,
            v_max_vert: 5.0,
        }
    }
}

impl VehicleParams {
    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    /// Thrust magnitude that exactly cancels gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity().norm()
    }

    pub fn validate(&self) -> Result<(), TrajoptError> {
        let bad = |m: String| Err(TrajoptError::InvalidParams(m));
        let finite = [
            self.mass,
            self.thrust_min,
            self.thrust_max,
            self.tilt_max_deg,
            self.v_max_lat,
            self.v_max_vert,
        ]
        .iter()
        .chain(self.gravity.iter())
        .all(|v| v.is_finite());
        if !finite {
            return bad("all parameters must be finite".into());
        }
        if self.mass <= 0.0 {
            return bad(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.thrust_min > 0.0 && self.thrust_min <= self.thrust_max) {
            return bad(format!(
                "need 0 < thrust_min <= thrust_max, got {} and {}",
                self.thrust_min, self.thrust_max
            ));
        }
        if !(self.tilt_max_deg > 0.0 && self.tilt_max_deg < 90.0) {
            return bad(format!(
                "tilt_max_deg must lie in (0, 90), got {}",
                self.tilt_max_deg
            ));
        }
        if self.v_max_lat <= 0.0 || self.v_max_vert <= 0.0 {
            return bad("velocity bounds must be positive".into());
        }
        let hover = self.hover_thrust();
        if hover < self.thrust_min || hover > self.thrust_max {
            return bad(format!(
                "hover thrust {hover:.4} N lies outside [{}, {}]",
                self.thrust_min, self.thrust_max
            ));
        }
        Ok(())
    }
}

/// Exact zero-order-hold model `x+ = A x + B u + p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub dt: f64,
    pub a: Matrix6<f64>,
    pub b: Matrix6x3<f64>,
    pub p: State,
}

impl Discretization {
    pub fn step(&self, x: &State, u: &Vector3<f64>) -> State {
        self.a * x + self.b * u + self.p
    }
}

pub fn discretize_dynamics(params: &VehicleParams, dt: f64) -> Discretization {
    let mut a = Matrix6::identity();
    a.fixed_view_mut::<3, 3>(0, 3).fill_diagonal(dt);
    let mut b = Matrix6x3::zeros();
    let h = 0.5 * dt * dt / params.mass;
    b.fixed_view_mut::<3, 3>(0, 0).fill_diagonal(h);
    b.fixed_view_mut::<3, 3>(3, 0)
        .fill_diagonal(dt / params.mass);
    let g = params.gravity();
    let mut p = State::zeros();
    p.fixed_rows_mut::<3>(0).copy_from(&(g * 0.5 * dt * dt));
    p.fixed_rows_mut::<3>(3).copy_from(&(g * dt));
    Discretization { dt, a, b, p }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub x0: State,
    pub xf: State,
}

impl BoundaryConditions {
    pub fn new(x0: State, xf: State) -> Self {
        Self { x0, xf }
    }

    /// Rest at `r0` to rest at `rf`.
    pub fn rest_to_rest(r0: Vector3<f64>, rf: Vector3<f64>) -> Self {
        let mut x0 = State::zeros();
        let mut xf = State::zeros();
        x0.fixed_rows_mut::<3>(0).copy_from(&r0);
        xf.fixed_rows_mut::<3>(0).copy_from(&rf);
        Self { x0, xf }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTrajectory {
    pub dt: f64,
    pub states: Vec<State>,
    pub controls: Vec<Vector3<f64>>,
    pub slack: Vec<f64>,
    pub cost: f64,
}

impl DiscreteTrajectory {
    pub fn nodes(&self) -> usize {
        self.controls.len()
    }

    pub fn time_of_flight(&self) -> f64 {
        self.nodes() as f64 * self.dt
    }

    /// Largest `Γ_k - ||U_k||`; near zero when the relaxation is exact.
    pub fn slack_gap(&self) -> f64 {
        self.controls
            .iter()
            .zip(&self.slack)
            .map(|(u, g)| g - u.norm())
            .fold(0.0, f64::max)
    }

    /// `Σ ||U_k|| Δt`, the effort actually expended.
    pub fn effort(&self) -> f64 {
        self.controls.iter().map(|u| u.norm() * self.dt).sum()
    }
}

/// Constraint violations measured directly on a trajectory, without the solver.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Audit {
    pub thrust_low: f64,
    pub thrust_high: f64,
    pub tilt: f64,
    pub lateral_speed: f64,
    pub vertical_speed: f64,
    pub dynamics: f64,
}

impl Audit {
    pub fn worst_constraint(&self) -> f64 {
        [
            self.thrust_low,
            self.thrust_high,
            self.tilt,
            self.lateral_speed,
            self.vertical_speed,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Re-evaluates thrust, tilt and speed bounds on `||U_k||` and the dynamics
/// residual. Velocity is checked on every node after the first.
pub fn audit_trajectory(traj: &DiscreteTrajectory, params: &VehicleParams) -> Audit {
    let disc = discretize_dynamics(params, traj.dt);
    let cos_tilt = params.tilt_max_deg.to_radians().cos();
    let mut a = Audit::default();
    for (k, u) in traj.controls.iter().enumerate() {
        let n = u.norm();
        a.thrust_low = a.thrust_low.max(params.thrust_min - n);
        a.thrust_high = a.thrust_high.max(n - params.thrust_max);
        a.tilt = a.tilt.max(n * cos_tilt - u.z);
        let next = disc.step(&traj.states[k], u);
        a.dynamics = a.dynamics.max((next - traj.states[k + 1]).amax());
    }
    for x in traj.states.iter().skip(1) {
        a.lateral_speed = a.lateral_speed.max(x[3].hypot(x[4]) - params.v_max_lat);
        a.vertical_speed = a.vertical_speed.max(x[5].abs() - params.v_max_vert);
    }
    a
}

/// Indices of one trajectory segment's variables inside a [`ConicProgram`].
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentLayout {
    /// First index of each node's 6 state variables, start node included.
    pub states: Vec<usize>,
    pub controls: Vec<usize>,
    pub slack: Vec<usize>,
}

impl SegmentLayout {
    pub fn nodes(&self) -> usize {
        self.controls.len()
    }

    pub fn last_state(&self) -> usize {
        *self.states.last().expect("segment has a start node")
    }

    pub fn extract(&self, x: &[f64], dt: f64) -> DiscreteTrajectory {
        let states = self
            .states
            .iter()
            .map(|&i| State::from_column_slice(&x[i..i + 6]))
            .collect();
        let controls = self
            .controls
            .iter()
            .map(|&i| Vector3::new(x[i], x[i + 1], x[i + 2]))
            .collect();
        let slack: Vec<f64> = self.slack.iter().map(|&i| x[i]).collect();
        let cost = slack.iter().sum::<f64>() * dt;
        DiscreteTrajectory {
            dt,
            states,
            controls,
            slack,
            cost,
        }
    }
}

/// Counts of each constraint family added to a program.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConstraintCounts {
    pub dynamics: usize,
    pub thrust_bounds: usize,
    pub thrust_cones: usize,
    pub tilt: usize,
    pub lateral_speed: usize,
    pub vertical_speed: usize,
    pub boundary: usize,
}

/// Fixes the 6 variables starting at `first` to `value`.
pub fn add_state_equality(
    prog: &mut ConicProgram,
    first: usize,
    value: &State,
    counts: &mut ConstraintCounts,
) {
    for i in 0..6 {
        prog.add_eq(Affine::new(vec![(first + i, 1.0)], -value[i]));
    }
    counts.boundary += 6;
}

/// Appends `nodes` steps of dynamics, thrust and velocity constraints starting
/// from the existing state block at `start`. Slack enters the cost with weight
/// `cost_weight * dt`.
pub fn add_segment(
    prog: &mut ConicProgram,
    start: usize,
    nodes: usize,
    params: &VehicleParams,
    disc: &Discretization,
    cost_weight: f64,
    counts: &mut ConstraintCounts,
) -> SegmentLayout {
    let cos_tilt = params.tilt_max_deg.to_radians().cos();
    let mut layout = SegmentLayout {
        states: vec![start],
        controls: Vec::with_capacity(nodes),
        slack: Vec::with_capacity(nodes),
    };
    for _ in 0..nodes {
        let x = *layout.states.last().unwrap();
        let u = prog.add_vars(3);
        let g = prog.add_vars(1);
        let xn = prog.add_vars(6);
        prog.add_cost(g, cost_weight * disc.dt);

        for r in 0..6 {
            let mut terms = vec![(xn + r, 1.0)];
            for c in 0..6 {
                let v = disc.a[(r, c)];
                if v != 0.0 {
                    terms.push((x + c, -v));
                }
            }
            for c in 0..3 {
                let v = disc.b[(r, c)];
                if v != 0.0 {
                    terms.push((u + c, -v));
                }
            }
            prog.add_eq(Affine::new(terms, -disc.p[r]));
        }
        counts.dynamics += 6;

        prog.add_nonneg(Affine::new(vec![(g, 1.0)], -params.thrust_min));
        prog.add_nonneg(Affine::new(vec![(g, -1.0)], params.thrust_max));
        counts.thrust_bounds += 2;
        prog.add_nonneg(Affine::new(vec![(u + 2, 1.0), (g, -cos_tilt)], 0.0));
        counts.tilt += 1;
        prog.add_nonneg(Affine::new(vec![(xn + 5, -1.0)], params.v_max_vert));
        prog.add_nonneg(Affine::new(vec![(xn + 5, 1.0)], params.v_max_vert));
        counts.vertical_speed += 1;

        prog.add_soc(
            Affine::var(g),
            vec![Affine::var(u), Affine::var(u + 1), Affine::var(u + 2)],
        );
        counts.thrust_cones += 1;
        prog.add_soc(
            Affine::constant(params.v_max_lat),
            vec![Affine::var(xn + 3), Affine::var(xn + 4)],
        );
        counts.lateral_speed += 1;

        layout.states.push(xn);
        layout.controls.push(u);
        layout.slack.push(g);
    }
    layout
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcvxProblem {
    pub program: ConicProgram,
    pub layout: SegmentLayout,
    pub counts: ConstraintCounts,
    pub dt: f64,
}

pub fn build_lcvx(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    nodes: usize,
    dt: f64,
) -> Result<LcvxProblem, TrajoptError> {
    if nodes < 2 {
        return Err(TrajoptError::InvalidProblem(format!(
            "need at least 2 nodes, got {nodes}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajoptError::InvalidProblem(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(bc.x0.iter().chain(bc.xf.iter()).all(|v| v.is_finite())) {
        return Err(TrajoptError::InvalidProblem(
            "boundary conditions must be finite".into(),
        ));
    }
    let disc = discretize_dynamics(params, dt);
    let mut program = ConicProgram::new();
    let mut counts = ConstraintCounts::default();
    let x0 = program.add_vars(6);
    add_state_equality(&mut program, x0, &bc.x0, &mut counts);
    let layout = add_segment(&mut program, x0, nodes, params, &disc, 1.0, &mut counts);
    add_state_equality(&mut program, layout.last_state(), &bc.xf, &mut counts);
    Ok(LcvxProblem {
        program,
        layout,
        counts,
        dt,
    })
}

/// Solves the fixed-horizon problem. An inaccurate solve is retried once with
/// tighter tolerances before being reported.
pub fn solve_lcvx_with(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    nodes: usize,
    dt: f64,
    solver: &dyn ConicSolver,
) -> Result<DiscreteTrajectory, TrajoptError> {
    let problem = build_lcvx(bc, params, nodes, dt)?;
    let sol = solve_with_fallbacks(solver, &problem.program);
    match sol.status {
        SolveStatus::Optimal => Ok(problem.layout.extract(&sol.x, dt)),
        SolveStatus::Infeasible => Err(TrajoptError::Infeasible { nodes }),
        _ => Err(TrajoptError::SolverFailure {
            nodes,
            detail: sol.detail,
        }),
    }
}

pub fn solve_lcvx(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    nodes: usize,
    dt: f64,
) -> Result<DiscreteTrajectory, TrajoptError> {
    solve_lcvx_with(bc, params, nodes, dt, &ClarabelSolver::default())
}

/// Node count implied by the speed bounds alone: each step moves at most
/// `v_max * dt` along each bounded direction.
pub fn kinematic_lower_bound(bc: &BoundaryConditions, params: &VehicleParams, dt: f64) -> usize {
    let d = bc.xf - bc.x0;
    let lat = d[0].hypot(d[1]) / (params.v_max_lat * dt);
    let vert = d[2].abs() / (params.v_max_vert * dt);
    let n = (lat.max(vert) - 1e-9).ceil().max(0.0) as usize;
    n.max(2)
}

/// Result of a node-count search.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSearch {
    pub nodes: usize,
    pub trajectory: DiscreteTrajectory,
    pub probes: usize,
}

fn probe(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    dt: f64,
    nodes: usize,
    solver: &dyn ConicSolver,
    probes: &mut usize,
) -> Result<Option<DiscreteTrajectory>, TrajoptError> {
    *probes += 1;
    match solve_lcvx_with(bc, params, nodes, dt, solver) {
        Ok(t) => Ok(Some(t)),
        // A solve that cannot be certified either way is treated as infeasible
        // so the search errs toward longer, safer horizons.
        Err(TrajoptError::Infeasible { .. } | TrajoptError::SolverFailure { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn bisect_bracket(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    dt: f64,
    mut lo_infeasible: usize,
    mut hi: usize,
    mut best: DiscreteTrajectory,
    solver: &dyn ConicSolver,
    probes: &mut usize,
) -> Result<NodeSearch, TrajoptError> {
    while hi - lo_infeasible > 1 {
        let mid = lo_infeasible + (hi - lo_infeasible) / 2;
        match probe(bc, params, dt, mid, solver, probes)? {
            Some(t) => {
                hi = mid;
                best = t;
            }
            None => lo_infeasible = mid,
        }
    }
    Ok(NodeSearch {
        nodes: hi,
        trajectory: best,
        probes: *probes,
    })
}

/// Smallest node count in `[lo, hi]` whose problem is feasible, assuming
/// feasibility is monotone in the node count on that range.
pub fn bisect_min_nodes(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    dt: f64,
    lo: usize,
    hi: usize,
    solver: &dyn ConicSolver,
) -> Result<NodeSearch, TrajoptError> {
    if lo < 2 || hi < lo {
        return Err(TrajoptError::InvalidProblem(format!(
            "bad node bracket [{lo}, {hi}]"
        )));
    }
    let mut probes = 0;
    let Some(top) = probe(bc, params, dt, hi, solver, &mut probes)? else {
        return Err(TrajoptError::NoFeasibleNodes { hi });
    };
    if hi == lo {
        return Ok(NodeSearch {
            nodes: hi,
            trajectory: top,
            probes,
        });
    }
    if let Some(t) = probe(bc, params, dt, lo, solver, &mut probes)? {
        return Ok(NodeSearch {
            nodes: lo,
            trajectory: t,
            probes,
        });
    }
    bisect_bracket(bc, params, dt, lo, hi, top, solver, &mut probes)
}

/// Minimum feasible node count, found by galloping upward from the kinematic
/// lower bound and then bisecting the last gap.
pub fn min_feasible_nodes(
    bc: &BoundaryConditions,
    params: &VehicleParams,
    dt: f64,
    solver: &dyn ConicSolver,
) -> Result<NodeSearch, TrajoptError> {
    let lb = kinematic_lower_bound(bc, params, dt);
    let cap = (4 * lb).max(lb + 64);
    let mut probes = 0;
    let mut last_infeasible = lb - 1;
    let mut n = lb;
    let mut step = 1;
    loop {
        if let Some(t) = probe(bc, params, dt, n, solver, &mut probes)? {
            if n == lb {
                return Ok(NodeSearch {
                    nodes: n,
                    trajectory: t,
                    probes,
                });
            }
            return bisect_bracket(bc, params, dt, last_infeasible, n, t, solver, &mut probes);
        }
        if n >= cap {
            return Err(TrajoptError::NoFeasibleNodes { hi: cap });
        }
        last_infeasible = n;
        n = (n + step).min(cap);
        step *= 2;
    }
}

/// Trajectory as CSV with columns `t,r1,r2,r3,v1,v2,v3,T1,T2,T3,Gamma`. The
/// final node repeats the last control.
pub fn trajectory_csv(traj: &DiscreteTrajectory) -> String {
    let mut out = String::from("t,r1,r2,r3,v1,v2,v3,T1,T2,T3,Gamma\n");
    for (k, x) in traj.states.iter().enumerate() {
        let j = k.min(traj.controls.len().saturating_sub(1));
        let (u, g) = traj
            .controls
            .get(j)
            .map(|u| (*u, traj.slack[j]))
            .unwrap_or((Vector3::zeros(), 0.0));
        let row: Vec<String> = std::iter::once(k as f64 * traj.dt)
            .chain(x.iter().copied())
            .chain(u.iter().copied())
            .chain(std::iter::once(g))
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
