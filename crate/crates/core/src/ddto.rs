//! Deferred-decision multi-target planning.
//!
//! Given one start state and several candidate targets, the planner builds a
//! shared trunk trajectory that keeps every remaining target reachable within
//! its cost tolerance, and extends that trunk as far as possible before the
//! least desirable target is dropped. Repeating this stage by stage yields a
//! tree: the trunk splits at branch points `z_k` and each target owns a
//! continuation from the point where it leaves the trunk.
//!
//! Each stage looks for the largest trunk extension `d` for which a single
//! conic program, with shared trunk variables and one branch per remaining
//! target, is feasible. Feasibility is monotone in `d` (a shorter trunk can
//! always absorb the tail of a longer one into every branch), so integer
//! bisection finds the maximum.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajopt::{
    add_segment, add_state_equality, discretize_dynamics, solve_lcvx_with, solve_with_fallbacks,
    Affine, ClarabelSolver, ConicProgram, ConicSolver, ConstraintCounts, DiscreteTrajectory,
    SolveStatus, TrajoptError, VehicleParams,
};
use crate::State;

/// Absolute slack added to every cost tolerance so that `ε = 0` stays
/// numerically feasible.
pub const COST_SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DdtoError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("target {target} has no single-target solution: {source}")]
    TargetInfeasible { target: usize, source: TrajoptError },
    #[error("stage {stage}: solver failed on the no-deferral probe ({detail})")]
    ProbeFailed { stage: usize, detail: String },
    #[error("interval [{t1}, {t2}) s is not covered by the path of target {target}")]
    Range { target: usize, t1: f64, t2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdtoRequest {
    pub z0: State,
    pub targets: Vec<State>,
    pub tolerances: Vec<f64>,
    /// Node budget per target, normally its minimum feasible count.
    pub nodes: Vec<usize>,
    /// Indices into `targets`, least desirable first, `targets.len() - 1` long.
    pub rejection_order: Vec<usize>,
    pub dt: f64,
    pub params: VehicleParams,
}

impl DdtoRequest {
    pub fn validate(&self) -> Result<(), DdtoError> {
        let n = self.targets.len();
        let bad = |m: String| Err(DdtoError::InvalidRequest(m));
        if n < 2 {
            return bad(format!("need at least 2 targets, got {n}"));
        }
        if self.tolerances.len() != n || self.nodes.len() != n {
            return bad("targets, tolerances and node counts must have equal length".into());
        }
        if self
            .tolerances
            .iter()
            .any(|e| !(*e >= 0.0 && e.is_finite()))
        {
            return bad("tolerances must be finite and non-negative".into());
        }
        if self.nodes.iter().any(|&k| k < 2) {
            return bad("node counts must be at least 2".into());
        }
        if self.rejection_order.len() != n - 1 {
            return bad(format!(
                "rejection order must list {} targets, got {}",
                n - 1,
                self.rejection_order.len()
            ));
        }
        let mut seen = vec![false; n];
        for &j in &self.rejection_order {
            if j >= n || seen[j] {
                return bad(format!(
                    "rejection order entry {j} is out of range or repeated"
                ));
            }
            seen[j] = true;
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("time step must be positive, got {}", self.dt));
        }
        self.params
            .validate()
            .map_err(|e| DdtoError::InvalidRequest(e.to_string()))
    }

    /// The target that is never rejected.
    pub fn survivor(&self) -> usize {
        (0..self.targets.len())
            .find(|j| !self.rejection_order.contains(j))
            .expect("validated order")
    }
}

/// One contiguous run of controls inside `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSegment {
    /// Stage index `k >= 1`.
    pub stage: usize,
    /// `None` for the trunk of stage `k`, `Some(j)` for target `j`'s
    /// continuation from branch point `k`.
    pub target: Option<usize>,
    /// Global node index of the first control.
    pub start_node: usize,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdtoSolution {
    pub dt: f64,
    pub z0: State,
    pub targets: Vec<State>,
    pub nodes: Vec<usize>,
    pub rejection_order: Vec<usize>,
    /// `branch_nodes[0] = 0`; entry `k` is the trunk length after stage `k`.
    pub branch_nodes: Vec<usize>,
    pub branch_times: Vec<f64>,
    /// `branch_states[0] = z0`.
    pub branch_states: Vec<State>,
    /// Concatenated controls `V`.
    pub controls: Vec<Vector3<f64>>,
    pub slack: Vec<f64>,
    pub index: Vec<ControlSegment>,
    pub optimal_costs: Vec<f64>,
    pub target_costs: Vec<f64>,
}

impl DdtoSolution {
    pub fn stages(&self) -> usize {
        self.branch_nodes.len() - 1
    }

    pub fn survivor(&self) -> usize {
        (0..self.targets.len())
            .find(|j| !self.rejection_order.contains(j))
            .expect("one survivor")
    }

    /// Stage at which target `j` leaves the trunk.
    pub fn leave_stage(&self, j: usize) -> usize {
        self.rejection_order
            .iter()
            .position(|&r| r == j)
            .map(|p| p + 1)
            .unwrap_or(self.stages())
    }

    fn segment(&self, stage: usize, target: Option<usize>) -> Option<&ControlSegment> {
        self.index
            .iter()
            .find(|s| s.stage == stage && s.target == target)
    }

    fn slice(&self, seg: &ControlSegment) -> &[Vector3<f64>] {
        &self.controls[seg.offset..seg.offset + seg.len]
    }

    /// Trunk controls on `[τ_{k-1}, τ_k)`.
    pub fn trunk_controls(&self, stage: usize) -> &[Vector3<f64>] {
        self.segment(stage, None)
            .map(|s| self.slice(s))
            .unwrap_or(&[])
    }

    /// Target `j`'s controls from branch point `stage` to arrival.
    pub fn continuation(&self, stage: usize, j: usize) -> Option<&[Vector3<f64>]> {
        self.segment(stage, Some(j)).map(|s| self.slice(s))
    }

    /// Every control along target `j`'s path from `z0`.
    pub fn path_controls(&self, j: usize) -> Vec<Vector3<f64>> {
        let last = self.leave_stage(j);
        let mut out: Vec<Vector3<f64>> = (1..=last)
            .flat_map(|k| self.trunk_controls(k).iter().copied())
            .collect();
        if let Some(c) = self.continuation(last, j) {
            out.extend_from_slice(c);
        }
        out
    }

    /// Controls on `[t1, t2)` along target `j`'s path. Times are snapped to
    /// the node grid.
    pub fn extract_control(
        &self,
        j: usize,
        t1: f64,
        t2: f64,
    ) -> Result<Vec<Vector3<f64>>, DdtoError> {
        let range = || DdtoError::Range { target: j, t1, t2 };
        if j >= self.targets.len() || !(t1 >= 0.0) || !(t2 >= t1) {
            return Err(range());
        }
        let n1 = (t1 / self.dt).round() as usize;
        let n2 = (t2 / self.dt).round() as usize;
        if n2 > self.nodes[j] {
            return Err(range());
        }
        let path = self.path_controls(j);
        if n2 > path.len() {
            return Err(range());
        }
        Ok(path[n1..n2].to_vec())
    }

    /// Target `j`'s path as a trajectory, states obtained by propagating the
    /// discrete dynamics from `z0`.
    pub fn path_trajectory(&self, j: usize, params: &VehicleParams) -> DiscreteTrajectory {
        let disc = discretize_dynamics(params, self.dt);
        let controls = self.path_controls(j);
        let mut states = vec![self.z0];
        for u in &controls {
            let next = disc.step(states.last().unwrap(), u);
            states.push(next);
        }
        let last = self.leave_stage(j);
        let mut slack: Vec<f64> = Vec::with_capacity(controls.len());
        for k in 1..=last {
            if let Some(s) = self.segment(k, None) {
                slack.extend_from_slice(&self.slack[s.offset..s.offset + s.len]);
            }
        }
        if let Some(s) = self.segment(last, Some(j)) {
            slack.extend_from_slice(&self.slack[s.offset..s.offset + s.len]);
        }
        let cost = slack.iter().sum::<f64>() * self.dt;
        DiscreteTrajectory {
            dt: self.dt,
            states,
            controls,
            slack,
            cost,
        }
    }

    /// A one-target "tree": the trunk is the whole trajectory.
    pub fn single(z0: State, target: State, traj: &DiscreteTrajectory) -> Self {
        let n = traj.nodes();
        DdtoSolution {
            dt: traj.dt,
            z0,
            targets: vec![target],
            nodes: vec![n],
            rejection_order: Vec::new(),
            branch_nodes: vec![0, n],
            branch_times: vec![0.0, n as f64 * traj.dt],
            branch_states: vec![z0, *traj.states.last().unwrap()],
            controls: traj.controls.clone(),
            slack: traj.slack.clone(),
            index: vec![
                ControlSegment {
                    stage: 1,
                    target: None,
                    start_node: 0,
                    offset: 0,
                    len: n,
                },
                ControlSegment {
                    stage: 1,
                    target: Some(0),
                    start_node: n,
                    offset: n,
                    len: 0,
                },
            ],
            optimal_costs: vec![traj.cost],
            target_costs: vec![traj.cost],
        }
    }
}

/// Optimal single-target costs at each target's node budget.
pub fn single_target_costs(
    req: &DdtoRequest,
    solver: &dyn ConicSolver,
) -> Result<Vec<f64>, DdtoError> {
    req.targets
        .iter()
        .zip(&req.nodes)
        .enumerate()
        .map(|(j, (z, &n))| {
            let bc = crate::trajopt::BoundaryConditions::new(req.z0, *z);
            solve_lcvx_with(&bc, &req.params, n, req.dt, solver)
                .map(|t| t.cost)
                .map_err(|source| DdtoError::TargetInfeasible { target: j, source })
        })
        .collect()
}

/// How the per-stage deferral is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeferralSearch {
    #[default]
    Bisection,
    /// Scan every extension from the largest down; slow, used as a reference.
    Exhaustive,
}

struct Stage<'a> {
    req: &'a DdtoRequest,
    start: State,
    base_nodes: usize,
    base_cost: f64,
    alive: &'a [usize],
    budgets: &'a [f64],
}

struct Probe {
    trunk: DiscreteTrajectory,
    branches: Vec<(usize, DiscreteTrajectory)>,
}

impl Stage<'_> {
    fn max_extension(&self) -> usize {
        self.alive
            .iter()
            .map(|&j| self.req.nodes[j] - self.base_nodes)
            .min()
            .unwrap_or(0)
    }

    fn probe(&self, d: usize, solver: &dyn ConicSolver) -> Result<Option<Probe>, String> {
        let req = self.req;
        let disc = discretize_dynamics(&req.params, req.dt);
        let mut prog = ConicProgram::new();
        let mut counts = ConstraintCounts::default();
        let xs = prog.add_vars(6);
        add_state_equality(&mut prog, xs, &self.start, &mut counts);
        let trunk = add_segment(
            &mut prog,
            xs,
            d,
            &req.params,
            &disc,
            self.alive.len() as f64,
            &mut counts,
        );
        let mut branches = Vec::with_capacity(self.alive.len());
        for &j in self.alive {
            let Some(len) = req.nodes[j].checked_sub(self.base_nodes + d) else {
                return Ok(None);
            };
            let branch = add_segment(
                &mut prog,
                trunk.last_state(),
                len,
                &req.params,
                &disc,
                1.0,
                &mut counts,
            );
            add_state_equality(&mut prog, branch.last_state(), &req.targets[j], &mut counts);
            let terms: Vec<(usize, f64)> = trunk
                .slack
                .iter()
                .chain(&branch.slack)
                .map(|&g| (g, -req.dt))
                .collect();
            prog.add_nonneg(Affine::new(terms, self.budgets[j] - self.base_cost));
            branches.push((j, branch));
        }
        let sol = solve_with_fallbacks(solver, &prog);
        match sol.status {
            SolveStatus::Optimal => Ok(Some(Probe {
                trunk: trunk.extract(&sol.x, req.dt),
                branches: branches
                    .into_iter()
                    .map(|(j, b)| (j, b.extract(&sol.x, req.dt)))
                    .collect(),
            })),
            SolveStatus::Infeasible => Ok(None),
            _ => Err(sol.detail),
        }
    }
}

pub fn ddto_solve(req: &DdtoRequest) -> Result<DdtoSolution, DdtoError> {
    ddto_solve_with(req, DeferralSearch::Bisection, &ClarabelSolver::default())
}

pub fn ddto_solve_with(
    req: &DdtoRequest,
    search: DeferralSearch,
    solver: &dyn ConicSolver,
) -> Result<DdtoSolution, DdtoError> {
    req.validate()?;
    let optimal = single_target_costs(req, solver)?;
    let budgets: Vec<f64> = optimal
        .iter()
        .zip(&req.tolerances)
        .map(|(j, e)| (1.0 + e) * j + COST_SLACK)
        .collect();
    let n = req.targets.len();

    let mut alive: Vec<usize> = (0..n).collect();
    let mut sol = DdtoSolution {
        dt: req.dt,
        z0: req.z0,
        targets: req.targets.clone(),
        nodes: req.nodes.clone(),
        rejection_order: req.rejection_order.clone(),
        branch_nodes: vec![0],
        branch_times: vec![0.0],
        branch_states: vec![req.z0],
        controls: Vec::new(),
        slack: Vec::new(),
        index: Vec::new(),
        optimal_costs: optimal,
        target_costs: vec![0.0; n],
    };
    let mut base_cost = 0.0;
    let push = |sol: &mut DdtoSolution, stage, target, start_node, traj: &DiscreteTrajectory| {
        sol.index.push(ControlSegment {
            stage,
            target,
            start_node,
            offset: sol.controls.len(),
            len: traj.nodes(),
        });
        sol.controls.extend_from_slice(&traj.controls);
        sol.slack.extend_from_slice(&traj.slack);
    };

    for (k, &rejected) in req.rejection_order.iter().enumerate() {
        let stage_no = k + 1;
        let base_nodes = *sol.branch_nodes.last().unwrap();
        let stage = Stage {
            req,
            start: *sol.branch_states.last().unwrap(),
            base_nodes,
            base_cost,
            alive: &alive,
            budgets: &budgets,
        };
        let fail = |detail| DdtoError::ProbeFailed {
            stage: stage_no,
            detail,
        };
        // Probes that fail numerically above d = 0 only shorten the deferral.
        let try_probe = |d: usize| -> Result<Option<Probe>, DdtoError> {
            match stage.probe(d, solver) {
                Ok(p) => Ok(p),
                Err(_) if d > 0 => Ok(None),
                Err(e) => Err(fail(e)),
            }
        };
        let hi = stage.max_extension();
        let (d, probe) = match search {
            DeferralSearch::Exhaustive => {
                let mut found = None;
                for d in (0..=hi).rev() {
                    if let Some(p) = try_probe(d)? {
                        found = Some((d, p));
                        break;
                    }
                }
                found.ok_or_else(|| fail("no-deferral probe infeasible".into()))?
            }
            DeferralSearch::Bisection => {
                if let Some(p) = try_probe(hi)? {
                    (hi, p)
                } else {
                    let mut best: Option<(usize, Probe)> = None;
                    let (mut lo, mut top) = (0usize, hi);
                    // Invariant: `top` infeasible, `lo` feasible (or untested 0).
                    while top - lo > 1 {
                        let mid = lo + (top - lo) / 2;
                        match try_probe(mid)? {
                            Some(p) => {
                                lo = mid;
                                best = Some((mid, p));
                            }
                            None => top = mid,
                        }
                    }
                    match best {
                        Some(b) => b,
                        None => {
                            let p = try_probe(0)?
                                .ok_or_else(|| fail("no-deferral probe infeasible".into()))?;
                            (0, p)
                        }
                    }
                }
            }
        };

        push(&mut sol, stage_no, None, base_nodes, &probe.trunk);
        base_cost += probe.trunk.cost;
        let node = base_nodes + d;
        for (j, branch) in &probe.branches {
            push(&mut sol, stage_no, Some(*j), node, branch);
            if *j == rejected || (stage_no == n - 1) {
                sol.target_costs[*j] = base_cost + branch.cost;
            }
        }
        sol.branch_nodes.push(node);
        sol.branch_times.push(node as f64 * req.dt);
        sol.branch_states.push(*probe.trunk.states.last().unwrap());
        alive.retain(|&j| j != rejected);
    }
    Ok(sol)
}

/// Per-target controls as CSV, one row per node: `t,T1,T2,T3`.
pub fn controls_csv(sol: &DdtoSolution, j: usize) -> String {
    let mut out = String::from("t,T1,T2,T3\n");
    for (k, u) in sol.path_controls(j).iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", k as f64 * sol.dt, u.x, u.y, u.z));
    }
    out
}
