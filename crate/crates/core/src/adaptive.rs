//! Adaptive deferred-decision guidance.
//!
//! [`Guidance`] is a state machine driven one control step at a time. It plans
//! a DDTO tree over up to `n_max` targets, walks the tree's branch points,
//! refreshes targets through a [`Perception`] implementation, drops or
//! switches targets, re-plans when fewer than `n_min` remain and finally locks
//! to the best target below the cutoff altitude. The non-adaptive baseline
//! uses the same machine but never re-plans.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddto::{ddto_solve_with, DdtoRequest, DdtoSolution, DeferralSearch};
use crate::sites::LandingSite;
use crate::trajopt::{min_feasible_nodes, BoundaryConditions, ClarabelSolver, VehicleParams};
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub w_des: [f64; 5],
    pub r_min: f64,
    pub h_cutoff: f64,
    pub tolerance: f64,
    pub dt: f64,
    pub max_replans: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 7,
            w_des: [0.0, 0.0, 1.0, 0.0, 0.0],
            r_min: 2.5,
            h_cutoff: 65.0,
            tolerance: 0.1,
            dt: 0.5,
            max_replans: 50,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1 <= self.n_min && self.n_min <= self.n_max) {
            return Err(format!(
                "need 1 <= n_min <= n_max, got {} and {}",
                self.n_min, self.n_max
            ));
        }
        if !(self.r_min > 0.0) {
            return Err(format!("r_min must be positive, got {}", self.r_min));
        }
        if self.w_des.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err("w_des entries must be finite and non-negative".into());
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(format!(
                "tolerance must be non-negative, got {}",
                self.tolerance
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(format!("dt must be positive, got {}", self.dt));
        }
        if !self.h_cutoff.is_finite() {
            return Err("h_cutoff must be finite".into());
        }
        if self.max_replans == 0 {
            return Err("max_replans must be at least 1".into());
        }
        Ok(())
    }
}

/// Desirability `w_des · c_des`.
pub fn g_des(site: &LandingSite, w_des: &[f64; 5]) -> f64 {
    site.score.iter().zip(w_des).map(|(c, w)| c * w).sum()
}

/// Removal test: radius strictly below the minimum.
pub fn g_rem(site: &LandingSite, r_min: f64) -> bool {
    site.radius < r_min
}

/// True when `candidate` strictly beats every other target.
pub fn g_switch(candidate: &LandingSite, others: &[&LandingSite], w_des: &[f64; 5]) -> bool {
    let best = others
        .iter()
        .map(|o| g_des(o, w_des))
        .fold(f64::NEG_INFINITY, f64::max);
    g_des(candidate, w_des) > best
}

pub fn g_lock(altitude: f64, h_cutoff: f64) -> bool {
    altitude < h_cutoff
}

/// Indices that sort `values` ascending; ties keep input order.
pub fn sort_perm(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

/// Source of landing sites for the guidance loop.
pub trait Perception {
    /// Up to `n` new sites that do not overlap any of `alive`.
    fn acquire(&mut self, n: usize, alive: &[LandingSite], vehicle: &State) -> Vec<LandingSite>;

    /// Refreshed copy of `site`: radius, center and score. A dead site comes
    /// back with radius 0 and `alive = false`.
    fn update(&mut self, site: &LandingSite, alive: &[LandingSite], vehicle: &State)
        -> LandingSite;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    /// One tree, no re-planning.
    #[serde(rename = "ddto")]
    DdtoOnce,
    #[default]
    Adaptive,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceAbort {
    #[error("no landing targets remain")]
    TargetsExhausted,
    #[error("no acquired target is reachable")]
    Unreachable,
    #[error("re-planning limit of {0} reached")]
    ReplanLimit(usize),
    #[error("planner failed: {0}")]
    Solver(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FlightEvent {
    Replan {
        t: f64,
        count: usize,
        targets: Vec<u32>,
        nodes: Vec<usize>,
        rejection_order: Vec<u32>,
        branch_times: Vec<f64>,
    },
    Unreachable {
        t: f64,
        site: u32,
    },
    Branch {
        t: f64,
        stage: usize,
        rejected: u32,
        alive: Vec<u32>,
    },
    Switch {
        t: f64,
        stage: usize,
        site: u32,
    },
    Removal {
        t: f64,
        site: u32,
        radius: f64,
    },
    /// `altitude` is the vehicle's, `branch_altitude` that of the next branch point.
    Lock {
        t: f64,
        site: u32,
        altitude: f64,
        branch_altitude: f64,
    },
    Commit {
        t: f64,
        site: u32,
    },
    Touchdown {
        t: f64,
        site: u32,
        position: [f64; 3],
        velocity: [f64; 3],
    },
    Abort {
        t: f64,
        reason: GuidanceAbort,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub events: Vec<FlightEvent>,
}

impl FlightLog {
    pub fn push(&mut self, e: FlightEvent) {
        self.events.push(e);
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }

    pub fn count(&self, pred: impl Fn(&FlightEvent) -> bool) -> usize {
        self.events.iter().filter(|e| pred(e)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuidanceStep {
    Control(Vector3<f64>),
    /// The plan toward `site` has been fully executed.
    Landed {
        site: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    NeedPlan,
    Branch(usize),
    Committed(u32),
}

#[derive(Debug, Clone)]
struct Plan {
    solution: DdtoSolution,
    /// Tree target index to site id.
    ids: Vec<u32>,
}

impl Plan {
    fn index_of(&self, id: u32) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }
}

#[derive(Debug, Clone)]
pub struct Guidance {
    config: AdaptiveConfig,
    params: VehicleParams,
    mode: PlannerMode,
    solver: ClarabelSolver,
    phase: Phase,
    queue: VecDeque<Vector3<f64>>,
    targets: Vec<LandingSite>,
    plan: Option<Plan>,
    replans: usize,
    switches: usize,
    pub log: FlightLog,
}

impl Guidance {
    pub fn new(config: AdaptiveConfig, params: VehicleParams, mode: PlannerMode) -> Self {
        Self {
            config,
            params,
            mode,
            solver: ClarabelSolver::default(),
            phase: Phase::NeedPlan,
            queue: VecDeque::new(),
            targets: Vec::new(),
            plan: None,
            replans: 0,
            switches: 0,
            log: FlightLog::default(),
        }
    }

    /// Targets currently under consideration.
    pub fn targets(&self) -> &[LandingSite] {
        &self.targets
    }

    pub fn replans(&self) -> usize {
        self.replans
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn is_locked(&self) -> bool {
        matches!(self.phase, Phase::Committed(_))
    }

    /// The most recent tree.
    pub fn solution(&self) -> Option<&DdtoSolution> {
        self.plan.as_ref().map(|p| &p.solution)
    }

    /// Advances the machine at vehicle state `z` and time `t`.
    pub fn next(
        &mut self,
        z: &State,
        t: f64,
        perception: &mut dyn Perception,
    ) -> Result<GuidanceStep, GuidanceAbort> {
        let r = self.advance(z, t, perception);
        if let Err(reason) = &r {
            self.log.push(FlightEvent::Abort {
                t,
                reason: reason.clone(),
            });
        }
        r
    }

    fn advance(
        &mut self,
        z: &State,
        t: f64,
        perception: &mut dyn Perception,
    ) -> Result<GuidanceStep, GuidanceAbort> {
        loop {
            if let Some(u) = self.queue.pop_front() {
                return Ok(GuidanceStep::Control(u));
            }
            match self.phase {
                Phase::Committed(site) => {
                    self.log.push(FlightEvent::Touchdown {
                        t,
                        site,
                        position: [z[0], z[1], z[2]],
                        velocity: [z[3], z[4], z[5]],
                    });
                    return Ok(GuidanceStep::Landed { site });
                }
                Phase::NeedPlan => self.plan(z, t, perception)?,
                Phase::Branch(k) => self.branch(k, z, t, perception)?,
            }
        }
    }

    fn plan(
        &mut self,
        z: &State,
        t: f64,
        perception: &mut dyn Perception,
    ) -> Result<(), GuidanceAbort> {
        if self.replans >= self.config.max_replans {
            return Err(GuidanceAbort::ReplanLimit(self.config.max_replans));
        }
        self.replans += 1;
        let needed = self.config.n_max.saturating_sub(self.targets.len());
        let fresh = perception.acquire(needed, &self.targets, z);
        self.targets.extend(fresh);
        if self.targets.is_empty() {
            return Err(GuidanceAbort::TargetsExhausted);
        }

        let dt = self.config.dt;
        let mut reachable = Vec::with_capacity(self.targets.len());
        let mut nodes = Vec::with_capacity(self.targets.len());
        for site in std::mem::take(&mut self.targets) {
            let bc = BoundaryConditions::new(*z, site.terminal_state());
            match min_feasible_nodes(&bc, &self.params, dt, &self.solver) {
                Ok(s) => {
                    nodes.push(s.nodes);
                    reachable.push(site);
                }
                Err(_) => self.log.push(FlightEvent::Unreachable { t, site: site.id }),
            }
        }
        self.targets = reachable;
        if self.targets.is_empty() {
            return Err(GuidanceAbort::Unreachable);
        }
        let ids: Vec<u32> = self.targets.iter().map(|s| s.id).collect();
        let n = ids.len();

        let solution = if n == 1 {
            let bc = BoundaryConditions::new(*z, self.targets[0].terminal_state());
            let traj =
                crate::trajopt::solve_lcvx_with(&bc, &self.params, nodes[0], dt, &self.solver)
                    .map_err(|e| GuidanceAbort::Solver(e.to_string()))?;
            DdtoSolution::single(*z, self.targets[0].terminal_state(), &traj)
        } else {
            let scores: Vec<f64> = self
                .targets
                .iter()
                .map(|s| g_des(s, &self.config.w_des))
                .collect();
            let mut order = sort_perm(&scores);
            order.truncate(n - 1);
            let req = DdtoRequest {
                z0: *z,
                targets: self.targets.iter().map(|s| s.terminal_state()).collect(),
                tolerances: vec![self.config.tolerance; n],
                nodes: nodes.clone(),
                rejection_order: order,
                dt,
                params: self.params,
            };
            ddto_solve_with(&req, DeferralSearch::Bisection, &self.solver)
                .map_err(|e| GuidanceAbort::Solver(e.to_string()))?
        };
        self.log.push(FlightEvent::Replan {
            t,
            count: self.replans,
            targets: ids.clone(),
            nodes,
            rejection_order: solution.rejection_order.iter().map(|&i| ids[i]).collect(),
            branch_times: solution.branch_times.iter().map(|b| b + t).collect(),
        });
        self.plan = Some(Plan { solution, ids });
        self.phase = Phase::Branch(1);
        Ok(())
    }

    fn refresh(&mut self, z: &State, perception: &mut dyn Perception) {
        let snapshot = self.targets.clone();
        for site in self.targets.iter_mut() {
            let mut fresh = perception.update(site, &snapshot, z);
            fresh.radius = fresh.radius.min(site.radius);
            *site = fresh;
        }
    }

    fn drop_removed(&mut self, t: f64) {
        let r_min = self.config.r_min;
        let log = &mut self.log;
        self.targets.retain(|s| {
            let keep = s.alive && !g_rem(s, r_min);
            if !keep {
                log.push(FlightEvent::Removal {
                    t,
                    site: s.id,
                    radius: s.radius,
                });
            }
            keep
        });
    }

    fn queue_path(&mut self, id: u32, from: f64) -> Result<(), GuidanceAbort> {
        let plan = self.plan.as_ref().expect("branching requires a plan");
        let j = plan.index_of(id).expect("target belongs to the tree");
        let end = plan.solution.nodes[j] as f64 * plan.solution.dt;
        let controls = plan
            .solution
            .extract_control(j, from, end)
            .map_err(|e| GuidanceAbort::Solver(e.to_string()))?;
        self.queue.extend(controls);
        self.phase = Phase::Committed(id);
        Ok(())
    }

    fn branch(
        &mut self,
        k: usize,
        z: &State,
        t: f64,
        perception: &mut dyn Perception,
    ) -> Result<(), GuidanceAbort> {
        let plan = self.plan.as_ref().expect("branching requires a plan");
        let sol = &plan.solution;
        let stages = sol.rejection_order.len();
        let tau_prev = sol.branch_times[k - 1];

        if stages == 0 || k > stages {
            // Single target, or every branch point has been passed: fly the
            // last remaining target's path.
            let survivor = plan.ids[sol.survivor()];
            self.refresh(z, perception);
            self.drop_removed(t);
            return match self.targets.iter().find(|s| s.id == survivor) {
                Some(_) => {
                    self.log.push(FlightEvent::Commit { t, site: survivor });
                    self.queue_path(survivor, tau_prev)
                }
                None => self.exhausted(),
            };
        }

        let lambda = plan.ids[sol.rejection_order[k - 1]];
        let next_altitude = sol.branch_states[k][2];
        let trunk: Vec<Vector3<f64>> = sol.trunk_controls(k).to_vec();
        let advanced = sol.branch_nodes[k] > 0;

        self.refresh(z, perception);
        if let Some(cand) = self.targets.iter().position(|s| s.id == lambda) {
            let others: Vec<&LandingSite> =
                self.targets.iter().filter(|s| s.id != lambda).collect();
            if others.is_empty() || g_switch(&self.targets[cand], &others, &self.config.w_des) {
                if !others.is_empty() {
                    self.switches += 1;
                    self.log.push(FlightEvent::Switch {
                        t,
                        stage: k,
                        site: lambda,
                    });
                }
                let keep = self.targets.swap_remove(cand);
                self.targets = vec![keep];
            } else {
                self.targets.remove(cand);
            }
        }
        self.drop_removed(t);
        self.log.push(FlightEvent::Branch {
            t,
            stage: k,
            rejected: lambda,
            alive: self.targets.iter().map(|s| s.id).collect(),
        });

        if self.targets.is_empty() {
            return self.exhausted();
        }
        if g_lock(next_altitude, self.config.h_cutoff) {
            let w = self.config.w_des;
            let best = self
                .targets
                .iter()
                .fold(None::<&LandingSite>, |b, s| match b {
                    Some(b) if g_des(b, &w) >= g_des(s, &w) => Some(b),
                    _ => Some(s),
                })
                .expect("non-empty")
                .id;
            self.log.push(FlightEvent::Lock {
                t,
                site: best,
                altitude: z[2],
                branch_altitude: next_altitude,
            });
            return self.queue_path(best, tau_prev);
        }
        // Re-planning needs the trunk to have moved the vehicle; otherwise the
        // new tree would start from the same state and could repeat forever.
        if self.mode == PlannerMode::Adaptive && self.targets.len() < self.config.n_min && advanced
        {
            self.queue.extend(trunk);
            self.phase = Phase::NeedPlan;
            return Ok(());
        }
        if self.targets.len() == 1 && self.targets[0].id == lambda {
            self.log.push(FlightEvent::Commit { t, site: lambda });
            return self.queue_path(lambda, tau_prev);
        }
        self.queue.extend(trunk);
        self.phase = Phase::Branch(k + 1);
        Ok(())
    }

    fn exhausted(&mut self) -> Result<(), GuidanceAbort> {
        match self.mode {
            PlannerMode::Adaptive => {
                self.phase = Phase::NeedPlan;
                Ok(())
            }
            PlannerMode::DdtoOnce => Err(GuidanceAbort::TargetsExhausted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajopt::{discretize_dynamics, VehicleParams};
    use nalgebra::Vector2;
    use std::collections::BTreeSet;

    fn site(id: u32, x: f64, y: f64, score: f64) -> LandingSite {
        let mut s = LandingSite::new(id, Vector2::new(x, y), 5.0);
        s.score[2] = score;
        s
    }

    #[test]
    fn helper_examples() {
        let w = [0.0, 0.0, 1.0, 0.0, 0.0];
        let mut s = site(0, 0.0, 0.0, 0.0);
        s.score = [0.2, 0.9, 0.7, 0.1, 0.5];
        assert!((g_des(&s, &w) - 0.7).abs() < 1e-15);
        assert_eq!(g_des(&s, &[0.0; 5]), 0.0);

        let mut r = site(1, 0.0, 0.0, 0.0);
        r.radius = 1.0;
        assert!(g_rem(&r, 2.5));
        r.radius = 2.5;
        assert!(!g_rem(&r, 2.5));
        r.radius = 0.0;
        assert!(g_rem(&r, 2.5));

        let (a, b, c) = (
            site(0, 0.0, 0.0, 0.9),
            site(1, 0.0, 0.0, 0.5),
            site(2, 0.0, 0.0, 0.7),
        );
        assert!(g_switch(&a, &[&b, &c], &w));
        assert!(!g_switch(&c, &[&site(3, 0.0, 0.0, 0.7)], &w));
        assert!(g_switch(&c, &[&b], &w));

        assert!(g_lock(64.0, 65.0));
        assert!(!g_lock(65.0, 65.0));
        assert!(!g_lock(150.0, 65.0));
        assert_eq!(sort_perm(&[0.3, 0.1, 0.3, 0.0]), vec![3, 1, 0, 2]);
    }

    #[test]
    fn argmax_ignores_positive_scaling() {
        let sites = [
            site(0, 0.0, 0.0, 0.2),
            site(1, 0.0, 0.0, 0.8),
            site(2, 0.0, 0.0, 0.5),
        ];
        let best = |w: [f64; 5]| {
            let s: Vec<f64> = sites.iter().map(|s| g_des(s, &w)).collect();
            *sort_perm(&s).last().unwrap()
        };
        assert_eq!(
            best([0.0, 0.0, 1.0, 0.0, 0.0]),
            best([0.0, 0.0, 7.5, 0.0, 0.0])
        );
    }

    /// Fixed pool of sites handed out in id order; failed ids come back dead.
    struct Pool {
        sites: Vec<LandingSite>,
        next: usize,
        failed: BTreeSet<u32>,
        boost: Option<u32>,
    }

    impl Perception for Pool {
        fn acquire(&mut self, n: usize, alive: &[LandingSite], _: &State) -> Vec<LandingSite> {
            let mut out = Vec::new();
            while out.len() < n && self.next < self.sites.len() {
                let s = self.sites[self.next].clone();
                self.next += 1;
                if !self.failed.contains(&s.id) && !alive.iter().any(|a| a.overlaps(&s)) {
                    out.push(s);
                }
            }
            out
        }

        fn update(&mut self, site: &LandingSite, _: &[LandingSite], _: &State) -> LandingSite {
            let mut s = site.clone();
            if self.failed.contains(&s.id) {
                s.radius = 0.0;
                s.alive = false;
            }
            if self.boost == Some(s.id) {
                s.score[2] = 1.0;
            }
            s
        }
    }

    fn pool(n: usize) -> Pool {
        let sites = (0..n)
            .map(|i| {
                let a = i as f64 * 2.4;
                site(
                    i as u32,
                    30.0 * a.cos(),
                    30.0 * a.sin(),
                    0.1 + 0.1 * i as f64,
                )
            })
            .collect();
        Pool {
            sites,
            next: 0,
            failed: BTreeSet::new(),
            boost: None,
        }
    }

    /// Keeps the tree unlocked long enough for failures to matter.
    fn low_cutoff() -> AdaptiveConfig {
        AdaptiveConfig {
            h_cutoff: 10.0,
            ..AdaptiveConfig::default()
        }
    }

    fn start() -> State {
        State::new(0.0, 0.0, 120.0, 0.0, 0.0, 0.0)
    }

    fn fly(
        g: &mut Guidance,
        p: &mut Pool,
        hook: impl Fn(usize, &mut Pool, &Guidance),
    ) -> (State, Result<u32, GuidanceAbort>) {
        let params = VehicleParams::default();
        let disc = discretize_dynamics(&params, 0.5);
        let mut z = start();
        for step in 0..400 {
            hook(step, p, g);
            match g.next(&z, step as f64 * 0.5, p) {
                Ok(GuidanceStep::Control(u)) => z = disc.step(&z, &u),
                Ok(GuidanceStep::Landed { site }) => return (z, Ok(site)),
                Err(e) => return (z, Err(e)),
            }
        }
        panic!("flight did not end");
    }

    #[test]
    fn benign_flight_locks_and_lands() {
        let mut p = pool(7);
        let mut g = Guidance::new(
            AdaptiveConfig::default(),
            VehicleParams::default(),
            PlannerMode::Adaptive,
        );
        let (z, site) = fly(&mut g, &mut p, |_, _, _| {});
        let site = site.unwrap();
        let target = p.sites[site as usize].terminal_state();
        assert!((z - target).amax() < 1e-5, "{z:?} vs {target:?}");
        let locks: Vec<&FlightEvent> = g
            .log
            .events
            .iter()
            .filter(|e| matches!(e, FlightEvent::Lock { .. }))
            .collect();
        assert_eq!(locks.len(), 1);
        if let FlightEvent::Lock {
            branch_altitude, ..
        } = locks[0]
        {
            assert!(*branch_altitude < 65.0);
        }
    }

    #[test]
    fn failures_trigger_replanning_and_top_up() {
        let mut p = pool(20);
        let mut g = Guidance::new(
            low_cutoff(),
            VehicleParams::default(),
            PlannerMode::Adaptive,
        );
        // Kill every first-tree target but the most desirable at step 2.
        let (_, site) = fly(&mut g, &mut p, |step, p, _| {
            if step == 2 {
                for id in 0..6 {
                    p.failed.insert(id);
                }
            }
        });
        site.unwrap();
        let replans: Vec<&FlightEvent> = g
            .log
            .events
            .iter()
            .filter(|e| matches!(e, FlightEvent::Replan { .. }))
            .collect();
        assert!(replans.len() >= 2);
        if let FlightEvent::Replan { targets, .. } = replans[1] {
            assert_eq!(targets.len(), 7);
            assert!(targets.contains(&6));
        }
    }

    #[test]
    fn baseline_aborts_when_tree_targets_fail() {
        let mut p = pool(20);
        let mut g = Guidance::new(
            low_cutoff(),
            VehicleParams::default(),
            PlannerMode::DdtoOnce,
        );
        let (_, r) = fly(&mut g, &mut p, |step, p, _| {
            if step == 2 {
                p.failed.extend(0..7);
            }
        });
        assert_eq!(r, Err(GuidanceAbort::TargetsExhausted));
        assert_eq!(g.replans(), 1);
    }

    #[test]
    fn rejected_target_with_top_score_collapses_the_set() {
        let mut p = pool(7);
        // Site 0 has the lowest planning score, so it is rejected first.
        p.boost = Some(0);
        let mut g = Guidance::new(
            AdaptiveConfig::default(),
            VehicleParams::default(),
            PlannerMode::DdtoOnce,
        );
        let (_, site) = fly(&mut g, &mut p, |_, _, _| {});
        assert_eq!(site, Ok(0));
        assert!(g.log.events.iter().any(|e| matches!(
            e,
            FlightEvent::Switch {
                site: 0,
                stage: 1,
                ..
            }
        )));
        assert_eq!(g.switches(), 1);
    }

    #[test]
    fn log_is_json_lines() {
        let mut log = FlightLog::default();
        log.push(FlightEvent::Lock {
            t: 1.5,
            site: 3,
            altitude: 70.0,
            branch_altitude: 60.0,
        });
        log.push(FlightEvent::Abort {
            t: 2.0,
            reason: GuidanceAbort::ReplanLimit(50),
        });
        let text = log.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("\"event\":\"lock\""));
        let back: FlightEvent = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(
            back,
            FlightEvent::Abort {
                t: 2.0,
                reason: GuidanceAbort::ReplanLimit(50)
            }
        );
    }
}
