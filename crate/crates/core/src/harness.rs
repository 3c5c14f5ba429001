//! Closed-loop simulation and Monte Carlo campaigns.
//!
//! The plant is the exact discrete double integrator the planner uses, so the
//! vehicle follows commanded trajectories to solver precision and every
//! outcome difference comes from the guidance logic and target failures.
//!
//! Failures are paired across planner modes: whether site `i` fails at step
//! `s` is a fixed function of `(trial seed, i, s)`, so two modes flown with
//! the same trial seed see identical failure draws for every site they share.

use std::collections::BTreeMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptive::{AdaptiveConfig, FlightLog, Guidance, GuidanceStep, Perception, PlannerMode};
use crate::mapping::{coarse_hazard_maps, local_safety_map, GridGeometry, HazardParams};
use crate::sites::{
    medial_axis_skeleton, refine_site, score_site, top_n_sites, LandingSite, ScoringContext,
};
use crate::terrain::{
    accumulate, generate_terrain, lidar_scan_rotated, HeightField, LidarConfig, PointCloud,
    TerrainSpec,
};
use crate::trajopt::{discretize_dynamics, VehicleParams};
use crate::State;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One exact plant step.
pub fn step_vehicle(x: &State, u: &Vector3<f64>, params: &VehicleParams, dt: f64) -> State {
    discretize_dynamics(params, dt).step(x, u)
}

/// Actuator command limiter: moves `u` into the tilt cone, then scales its
/// magnitude into `[thrust_min, thrust_max]`. Radial scaling keeps the tilt,
/// so the result satisfies both constraints. Admissible commands pass through
/// unchanged; guidance commands only ever need solver-precision corrections.
pub fn limit_command(u: &Vector3<f64>, params: &VehicleParams) -> Vector3<f64> {
    let t = params.tilt_max_deg.to_radians().tan();
    let s = u.x.hypot(u.y);
    let mut v = *u;
    if s > t * u.z {
        if t * s <= -u.z {
            v = Vector3::zeros();
        } else {
            let a = (t * s + u.z) / (1.0 + t * t);
            v = Vector3::new(u.x / s * a * t, u.y / s * a * t, a);
        }
    }
    let n = v.norm();
    if n == 0.0 {
        return Vector3::new(0.0, 0.0, params.thrust_min);
    }
    let clamped = n.clamp(params.thrust_min, params.thrust_max);
    if clamped == n {
        v
    } else {
        v * (clamped / n)
    }
}

/// Independent Bernoulli(`p`) failure per alive site; failed sites get radius
/// 0 and `alive = false`. Returns how many failed.
pub fn inject_failures<R: Rng + ?Sized>(sites: &mut [LandingSite], p: f64, rng: &mut R) -> usize {
    let mut n = 0;
    for s in sites.iter_mut().filter(|s| s.alive) {
        if rng.gen::<f64>() < p {
            s.alive = false;
            s.radius = 0.0;
            n += 1;
        }
    }
    n
}

/// SplitMix64 finalizer applied to a pair, used to derive independent streams.
pub fn derive_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Failure draws keyed by `(seed, site id, step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureModel {
    pub seed: u64,
    pub p: f64,
}

impl FailureModel {
    /// True if the site fails on any step in `from..=to`.
    pub fn failed_between(&self, site: u32, from: usize, to: usize) -> bool {
        if self.p <= 0.0 || to < from {
            return false;
        }
        if self.p >= 1.0 {
            return true;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, site as u64));
        // Each draw consumes one 64-bit output, i.e. two stream words.
        rng.set_word_pos(2 * from as u128);
        (from..=to).any(|_| rng.gen::<f64>() < self.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionKind {
    /// Uniformly scattered circular targets on flat ground.
    #[default]
    Sandbox,
    /// Full LiDAR and hazard-mapping pipeline over synthetic terrain.
    Halss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    /// Side of the square, centered on the origin, that holds target centers (m).
    pub extent: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            extent: 200.0,
            radius_min: 3.0,
            radius_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub trials: usize,
    pub mode: PlannerMode,
    pub p_fail: f64,
    pub initial_state: [f64; 6],
    pub max_steps: usize,
    pub perception: PerceptionKind,
    pub sandbox: SandboxConfig,
    pub terrain: TerrainSpec,
    pub lidar: LidarConfig,
    pub hazard: HazardParams,
    pub vehicle: VehicleParams,
    pub adaptive: AdaptiveConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100,
            mode: PlannerMode::Adaptive,
            p_fail: 0.01,
            initial_state: [0.0, 0.0, 150.0, 0.0, 0.0, 0.0],
            max_steps: 1000,
            perception: PerceptionKind::Sandbox,
            sandbox: SandboxConfig::default(),
            terrain: TerrainSpec::default(),
            lidar: LidarConfig::default(),
            hazard: HazardParams::default(),
            vehicle: VehicleParams::default(),
            adaptive: AdaptiveConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if !(0.0..=1.0).contains(&self.p_fail) {
            return bad(format!("p_fail must lie in [0, 1], got {}", self.p_fail));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return bad("initial_state must be finite".into());
        }
        let s = &self.sandbox;
        if !(s.extent > 0.0 && s.radius_min > 0.0 && s.radius_min <= s.radius_max) {
            return bad("sandbox needs extent > 0 and 0 < radius_min <= radius_max".into());
        }
        self.vehicle
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.adaptive.validate().map_err(HarnessError::Config)?;
        self.hazard.validate().map_err(HarnessError::Config)?;
        self.terrain
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.lidar
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn initial(&self) -> State {
        State::from_column_slice(&self.initial_state)
    }
}

enum Source {
    Sandbox(SandboxConfig),
    Halss {
        field: HeightField,
        lidar: LidarConfig,
        hazard: HazardParams,
        store: PointCloud,
        scans: usize,
    },
}

/// Perception with ground truth: target generation, refresh and failures.
pub struct World {
    source: Source,
    seed: u64,
    failures: FailureModel,
    /// Latest known record of every site handed out, with its acquisition step.
    registry: BTreeMap<u32, (LandingSite, usize)>,
    next_id: u32,
    pub step: usize,
    pub t: f64,
    pub radius_history: BTreeMap<u32, Vec<(f64, f64)>>,
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

impl World {
    pub fn new(config: &SimConfig, trial_seed: u64) -> Result<Self, HarnessError> {
        let source = match config.perception {
            PerceptionKind::Sandbox => Source::Sandbox(config.sandbox),
            PerceptionKind::Halss => Source::Halss {
                field: generate_terrain(&config.terrain)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
                lidar: config.lidar.clone(),
                hazard: config.hazard.clone(),
                store: PointCloud::default(),
                scans: 0,
            },
        };
        Ok(Self {
            source,
            seed: trial_seed,
            failures: FailureModel {
                seed: derive_seed(trial_seed, 0xFA11),
                p: config.p_fail,
            },
            registry: BTreeMap::new(),
            next_id: 0,
            step: 0,
            t: 0.0,
            radius_history: BTreeMap::new(),
        })
    }

    /// LiDAR scan from `position`, rotated a little more each call.
    pub fn observe(&mut self, position: &Vector3<f64>) {
        if let Source::Halss {
            field,
            lidar,
            store,
            scans,
            ..
        } = &mut self.source
        {
            if let Ok(cloud) =
                lidar_scan_rotated(field, position, lidar, *scans as f64 * GOLDEN_ANGLE)
            {
                *store = accumulate(store, &cloud);
            }
            *scans += 1;
        }
    }

    pub fn point_cloud(&self) -> Option<&PointCloud> {
        match &self.source {
            Source::Halss { store, .. } => Some(store),
            Source::Sandbox(_) => None,
        }
    }

    pub fn site(&self, id: u32) -> Option<&LandingSite> {
        self.registry.get(&id).map(|(s, _)| s)
    }

    pub fn is_failed(&self, id: u32) -> bool {
        self.registry
            .get(&id)
            .is_some_and(|(_, since)| self.failures.failed_between(id, *since, self.step))
    }

    /// Sandbox site `id`: a pure function of the trial seed and the id.
    fn sandbox_site(&self, cfg: &SandboxConfig, id: u32) -> LandingSite {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0x5173_0000 + id as u64));
        let h = cfg.extent / 2.0;
        let c = Vector2::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h));
        let r = if cfg.radius_max > cfg.radius_min {
            rng.gen_range(cfg.radius_min..cfg.radius_max)
        } else {
            cfg.radius_min
        };
        LandingSite::new(id, c, r)
    }

    fn record(&mut self, site: &LandingSite) {
        self.radius_history
            .entry(site.id)
            .or_default()
            .push((self.t, site.radius));
    }

    fn scored(&self, mut site: LandingSite, alive: &[LandingSite], vehicle: &State) -> LandingSite {
        let pos = Vector3::new(vehicle[0], vehicle[1], vehicle[2]);
        site.score = match &self.source {
            Source::Sandbox(cfg) => score_site(
                &site,
                &ScoringContext::geometric(cfg.extent * std::f64::consts::SQRT_2),
                &pos,
                alive,
            ),
            Source::Halss { field, store, .. } => {
                let region = halss_region(field);
                score_site(
                    &site,
                    &ScoringContext::new(Some(store), None, region),
                    &pos,
                    alive,
                )
            }
        };
        site
    }

    fn acquire_sandbox(
        &mut self,
        cfg: SandboxConfig,
        n: usize,
        alive: &[LandingSite],
    ) -> Vec<LandingSite> {
        let mut out: Vec<LandingSite> = Vec::new();
        // Ids are consumed in order; a candidate that collides is skipped for good.
        let mut attempts = 0;
        while out.len() < n && attempts < 64 * n.max(1) {
            attempts += 1;
            let s = self.sandbox_site(&cfg, self.next_id);
            self.next_id += 1;
            if alive.iter().chain(out.iter()).any(|a| a.overlaps(&s)) {
                continue;
            }
            out.push(s);
        }
        out
    }

    fn acquire_halss(&mut self, n: usize, alive: &[LandingSite]) -> Vec<LandingSite> {
        let Source::Halss {
            field,
            hazard,
            store,
            ..
        } = &self.source
        else {
            return Vec::new();
        };
        if store.is_empty() {
            return Vec::new();
        }
        let region = halss_region(field);
        let maps = coarse_hazard_maps(store, hazard, region);
        let mut safety = maps.safety.clone();
        for a in alive {
            safety.mask_disc(&a.center, a.radius);
        }
        let mut out = Vec::new();
        for mut s in top_n_sites(&medial_axis_skeleton(&safety), n, 2.0) {
            s.id = self.next_id;
            self.next_id += 1;
            s.elevation = maps.heights.sample(&s.center).unwrap_or(0.0);
            out.push(s);
        }
        out
    }
}

/// Coarse mapping region: the whole terrain footprint.
fn halss_region(field: &HeightField) -> GridGeometry {
    let (lo, hi) = field.bounds();
    let center = (lo + hi) / 2.0;
    let half = ((hi - lo) / 2.0).min();
    GridGeometry::covering(center, half, 2.0)
}

impl Perception for World {
    fn acquire(&mut self, n: usize, alive: &[LandingSite], vehicle: &State) -> Vec<LandingSite> {
        if n == 0 {
            return Vec::new();
        }
        let raw = match &self.source {
            Source::Sandbox(cfg) => {
                let cfg = *cfg;
                self.acquire_sandbox(cfg, n, alive)
            }
            Source::Halss { .. } => self.acquire_halss(n, alive),
        };
        let mut pool: Vec<LandingSite> = alive.to_vec();
        pool.extend(raw.iter().cloned());
        let out: Vec<LandingSite> = raw
            .into_iter()
            .map(|s| self.scored(s, &pool, vehicle))
            .collect();
        for s in &out {
            self.registry.insert(s.id, (s.clone(), self.step));
            self.record(s);
        }
        out
    }

    fn update(
        &mut self,
        site: &LandingSite,
        alive: &[LandingSite],
        vehicle: &State,
    ) -> LandingSite {
        let mut fresh = site.clone();
        if let Source::Halss { hazard, store, .. } = &self.source {
            let local = local_safety_map(store, site, hazard);
            let refined = refine_site(site, &local);
            fresh.center = refined.center;
            fresh.radius = refined.radius.min(site.radius);
        }
        if self.is_failed(site.id) {
            fresh.radius = 0.0;
        }
        fresh.alive = fresh.radius > 0.0;
        let fresh = self.scored(fresh, alive, vehicle);
        if let Some(entry) = self.registry.get_mut(&site.id) {
            entry.0 = fresh.clone();
        }
        self.record(&fresh);
        fresh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub success: bool,
    /// `Σ ||u_k|| Δt` over every commanded step (N·s).
    pub effort: f64,
    pub touchdown_site: Option<u32>,
    pub miss_distance: Option<f64>,
    pub touchdown_speed: Option<f64>,
    pub flight_time: f64,
    pub diverts: usize,
    pub replans: usize,
    pub abort: Option<String>,
    pub min_thrust: f64,
    pub max_thrust: f64,
    pub max_tilt_deg: f64,
    /// Largest `||u|| cos(tilt_max) - u_3` over all commands; positive values
    /// are tilt-cone violations in newtons.
    pub tilt_residual: f64,
    /// Largest distance between a guidance command and what the limiter let
    /// through (N).
    pub max_command_correction: f64,
    /// Every per-site radius sequence was non-increasing.
    pub radii_monotone: bool,
}

/// A trial with its full history.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub result: TrialResult,
    pub log: FlightLog,
    pub states: Vec<State>,
    pub controls: Vec<Vector3<f64>>,
    pub radius_history: BTreeMap<u32, Vec<(f64, f64)>>,
    pub point_cloud: Option<PointCloud>,
}

pub fn run_closed_loop(config: &SimConfig, seed: u64) -> Result<TrialResult, HarnessError> {
    run_closed_loop_detailed(config, seed).map(|r| r.result)
}

/// Horizontal miss and touchdown checks are evaluated against the site's
/// latest known circle.
pub fn run_closed_loop_detailed(
    config: &SimConfig,
    seed: u64,
) -> Result<TrialRecord, HarnessError> {
    config.validate()?;
    let params = config.vehicle;
    let dt = config.adaptive.dt;
    let disc = discretize_dynamics(&params, dt);
    let mut world = World::new(config, seed)?;
    let mut guidance = Guidance::new(config.adaptive, params, config.mode);
    let mut z = config.initial();
    let mut states = vec![z];
    let mut controls = Vec::new();
    let mut effort = 0.0;
    let (mut min_thrust, mut max_thrust, mut max_tilt) = (f64::INFINITY, 0.0f64, 0.0f64);
    let mut tilt_residual = f64::NEG_INFINITY;
    let mut max_correction = 0.0f64;
    let cos_tilt = params.tilt_max_deg.to_radians().cos();
    let rate = config.lidar.rate.max(1);

    let mut outcome: Result<u32, String> = Err("step limit reached".into());
    for step in 0..config.max_steps {
        world.step = step;
        world.t = step as f64 * dt;
        if config.perception == PerceptionKind::Halss && step % rate == 0 {
            world.observe(&Vector3::new(z[0], z[1], z[2]));
        }
        match guidance.next(&z, world.t, &mut world) {
            Ok(GuidanceStep::Control(commanded)) => {
                let u = limit_command(&commanded, &params);
                max_correction = max_correction.max((u - commanded).norm());
                let n = u.norm();
                min_thrust = min_thrust.min(n);
                max_thrust = max_thrust.max(n);
                tilt_residual = tilt_residual.max(n * cos_tilt - u.z);
                if n > 0.0 {
                    max_tilt = max_tilt.max((u.z / n).clamp(-1.0, 1.0).acos().to_degrees());
                }
                effort += n * dt;
                z = disc.step(&z, &u);
                states.push(z);
                controls.push(u);
            }
            Ok(GuidanceStep::Landed { site }) => {
                outcome = Ok(site);
                break;
            }
            Err(e) => {
                outcome = Err(e.to_string());
                break;
            }
        }
    }

    let radii_monotone = world
        .radius_history
        .values()
        .all(|h| h.windows(2).all(|w| w[1].1 <= w[0].1));
    let mut result = TrialResult {
        seed,
        success: false,
        effort,
        touchdown_site: None,
        miss_distance: None,
        touchdown_speed: None,
        flight_time: controls.len() as f64 * dt,
        diverts: guidance.switches(),
        replans: guidance.replans(),
        abort: None,
        min_thrust: if controls.is_empty() { 0.0 } else { min_thrust },
        max_thrust,
        max_tilt_deg: max_tilt,
        tilt_residual: if controls.is_empty() {
            0.0
        } else {
            tilt_residual
        },
        max_command_correction: max_correction,
        radii_monotone,
    };
    match outcome {
        Ok(id) => {
            let site = world.site(id).cloned().expect("landed on a known site");
            let miss = (Vector2::new(z[0], z[1]) - site.center).norm();
            let speed = z[5].abs();
            result.touchdown_site = Some(id);
            result.miss_distance = Some(miss);
            result.touchdown_speed = Some(speed);
            result.success = !world.is_failed(id)
                && site.alive
                && miss <= site.radius
                && speed <= params.v_max_vert + 1e-6
                && (z[2] - site.elevation).abs() <= 1e-3;
        }
        Err(reason) => result.abort = Some(reason),
    }
    Ok(TrialRecord {
        result,
        log: guidance.log,
        states,
        controls,
        radius_history: world.radius_history.clone(),
        point_cloud: world.point_cloud().cloned(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mode: PlannerMode,
    pub seed: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean and standard deviation of effort over successful trials.
    pub mean_effort: f64,
    pub std_effort: f64,
    /// Mean effort over every trial, landed or not.
    pub mean_effort_all: f64,
    pub records: Vec<TrialResult>,
}

impl McSummary {
    pub fn from_records(mode: PlannerMode, seed: u64, records: Vec<TrialResult>) -> Self {
        let trials = records.len();
        let ok: Vec<f64> = records
            .iter()
            .filter(|r| r.success)
            .map(|r| r.effort)
            .collect();
        let successes = ok.len();
        let mean = |v: &[f64]| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mean_effort = mean(&ok);
        let std_effort = if ok.len() > 1 {
            (ok.iter().map(|e| (e - mean_effort).powi(2)).sum::<f64>() / (ok.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let all: Vec<f64> = records.iter().map(|r| r.effort).collect();
        Self {
            mode,
            seed,
            trials,
            successes,
            success_rate: if trials == 0 {
                0.0
            } else {
                successes as f64 / trials as f64
            },
            mean_effort,
            std_effort,
            mean_effort_all: mean(&all),
            records,
        }
    }
}

/// Seed of trial `i` under master seed `seed`.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, i as u64)
}

fn run_trials(config: &SimConfig) -> Vec<Result<TrialResult, HarnessError>> {
    let seeds: Vec<u64> = (0..config.trials)
        .map(|i| trial_seed(config.seed, i))
        .collect();
    #[cfg(not(target_arch = "wasm32"))]
    {
        let workers = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(seeds.len())
            .max(1);
        if workers > 1 {
            use std::sync::atomic::{AtomicUsize, Ordering};
            use std::sync::Mutex;
            let next = AtomicUsize::new(0);
            let slots: Mutex<Vec<Option<Result<TrialResult, HarnessError>>>> =
                Mutex::new(vec![None; seeds.len()]);
            std::thread::scope(|s| {
                for _ in 0..workers {
                    s.spawn(|| loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= seeds.len() {
                            break;
                        }
                        let r = run_closed_loop(config, seeds[i]);
                        slots.lock().expect("no poisoned workers")[i] = Some(r);
                    });
                }
            });
            return slots
                .into_inner()
                .expect("workers joined")
                .into_iter()
                .map(|r| r.expect("every trial ran"))
                .collect();
        }
    }
    seeds.iter().map(|&s| run_closed_loop(config, s)).collect()
}

/// Runs `config.trials` trials. Results are aggregated in trial order, so the
/// summary does not depend on scheduling.
pub fn run_montecarlo(config: &SimConfig) -> Result<McSummary, HarnessError> {
    config.validate()?;
    let records = run_trials(config)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(McSummary::from_records(config.mode, config.seed, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ddto: McSummary,
    pub adaptive: McSummary,
    /// Adaptive minus baseline, in percentage points.
    pub delta_success_pp: f64,
    /// Adaptive minus baseline mean effort (N·s).
    pub delta_mean_effort: f64,
    /// `|Δ mean effort| / baseline mean effort`.
    pub relative_effort_gap: f64,
}

/// Both planner modes on the same trial seeds.
pub fn run_comparison(config: &SimConfig) -> Result<Comparison, HarnessError> {
    let ddto = run_montecarlo(&SimConfig {
        mode: PlannerMode::DdtoOnce,
        ..config.clone()
    })?;
    let adaptive = run_montecarlo(&SimConfig {
        mode: PlannerMode::Adaptive,
        ..config.clone()
    })?;
    let delta = adaptive.mean_effort - ddto.mean_effort;
    Ok(Comparison {
        delta_success_pp: 100.0 * (adaptive.success_rate - ddto.success_rate),
        delta_mean_effort: delta,
        relative_effort_gap: if ddto.mean_effort > 0.0 {
            delta.abs() / ddto.mean_effort
        } else {
            0.0
        },
        ddto,
        adaptive,
    })
}

/// Uniform draw helper kept public so callers can reproduce trial streams.
pub fn trial_rng(seed: u64) -> impl RngCore {
    ChaCha8Rng::seed_from_u64(seed)
}
