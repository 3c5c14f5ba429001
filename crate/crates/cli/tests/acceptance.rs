//! End-to-end acceptance checks. Runs as a plain binary so every check prints
//! one PASS/FAIL line even when the test runner captures output; exits
//! non-zero if any check fails.

use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

use halo_core::ddto::{ddto_solve_with, DdtoRequest, DdtoSolution, DeferralSearch};
use halo_core::harness::{run_comparison, SimConfig};
use halo_core::mapping::{
    coarse_safety_map, downsample_roughness_preserving, interpolate_height_grid, surface_normals,
    GridGeometry, HazardParams, SafetyMap,
};
use halo_core::nalgebra::{Vector2, Vector3};
use halo_core::sites::{medial_axis_skeleton, top_n_sites};
use halo_core::terrain::PointCloud;
use halo_core::trajopt::{
    min_feasible_nodes, solve_lcvx, BoundaryConditions, ClarabelSolver, DiscreteTrajectory,
    TrajoptError, VehicleParams,
};
use halo_core::State;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rest(x: f64, y: f64, z: f64) -> State {
    State::new(x, y, z, 0.0, 0.0, 0.0)
}

/// Worst violation of thrust bounds, tilt cone, speed limits and dynamics,
/// computed from the controls and states alone with the analytic constant-
/// acceleration step.
fn independent_audit(t: &DiscreteTrajectory, p: &VehicleParams) -> f64 {
    let g = Vector3::new(p.gravity[0], p.gravity[1], p.gravity[2]);
    let cos_tilt = p.tilt_max_deg.to_radians().cos();
    let mut worst: f64 = 0.0;
    for (k, u) in t.controls.iter().enumerate() {
        let n = u.norm();
        worst = worst
            .max(p.thrust_min - n)
            .max(n - p.thrust_max)
            .max(n * cos_tilt - u.z);
        let (x, y) = (&t.states[k], &t.states[k + 1]);
        let a = u / p.mass + g;
        let (r, v) = (x.fixed_rows::<3>(0), x.fixed_rows::<3>(3));
        let r_next = r + v * t.dt + a * (0.5 * t.dt * t.dt);
        let v_next = v + a * t.dt;
        worst = worst
            .max((y.fixed_rows::<3>(0) - r_next).amax())
            .max((y.fixed_rows::<3>(3) - v_next).amax());
    }
    for x in &t.states[1..] {
        worst = worst
            .max(x[3].hypot(x[4]) - p.v_max_lat)
            .max(x[5].abs() - p.v_max_vert);
    }
    worst
}

fn random_bc(rng: &mut ChaCha8Rng) -> BoundaryConditions {
    let x0 = State::new(
        rng.gen_range(-40.0..40.0),
        rng.gen_range(-40.0..40.0),
        rng.gen_range(40.0..150.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-4.0..0.0),
    );
    BoundaryConditions::new(
        x0,
        rest(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), 0.0),
    )
}

fn comparative_study_and_flight_audit() -> Vec<(&'static str, Outcome)> {
    let cfg = SimConfig {
        trials: 100,
        ..SimConfig::default()
    };
    let c = run_comparison(&cfg).expect("valid configuration");
    let gap_pp = c.delta_success_pp;
    let study = outcome(
        gap_pp >= 5.0 && c.relative_effort_gap <= 0.10,
        format!(
            "adaptive {:.1}% vs ddto-once {:.1}% ({:+.1} pp, need >= 5); mean effort {:.2} vs {:.2} N s ({:.1}% apart, need <= 10%)",
            100.0 * c.adaptive.success_rate,
            100.0 * c.ddto.success_rate,
            gap_pp,
            c.adaptive.mean_effort,
            c.ddto.mean_effort,
            100.0 * c.relative_effort_gap
        ),
    );

    let p = VehicleParams::default();
    let flights: Vec<_> = c
        .ddto
        .records
        .iter()
        .chain(&c.adaptive.records)
        .filter(|r| r.flight_time > 0.0)
        .collect();
    let lo = flights
        .iter()
        .map(|r| r.min_thrust)
        .fold(f64::INFINITY, f64::min);
    let hi = flights.iter().map(|r| r.max_thrust).fold(0.0, f64::max);
    let tilt = flights
        .iter()
        .map(|r| r.tilt_residual)
        .fold(f64::NEG_INFINITY, f64::max);
    let tilt_deg = flights.iter().map(|r| r.max_tilt_deg).fold(0.0, f64::max);
    let monotone = c
        .ddto
        .records
        .iter()
        .chain(&c.adaptive.records)
        .all(|r| r.radii_monotone);
    let tol = 1e-6;
    // The plant's command limiter may only have nudged solver output.
    let nudge = flights
        .iter()
        .map(|r| r.max_command_correction)
        .fold(0.0, f64::max);
    let audit = outcome(
        lo >= p.thrust_min - tol && hi <= p.thrust_max + tol && tilt <= tol && nudge <= 1e-4 && monotone,
        format!(
            "{} flights: thrust in [{lo:.7}, {hi:.7}] N, max tilt {tilt_deg:.6} deg (cone residual {tilt:.1e} N), largest limiter correction {nudge:.1e} N, radii non-increasing: {monotone}",
            flights.len()
        ),
    );
    vec![
        ("comparative study", study),
        ("closed-loop constraint audit", audit),
    ]
}

fn lossless_activeness() -> Outcome {
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut solved, mut draws) = (0, 0);
    let (mut gap, mut audit): (f64, f64) = (0.0, 0.0);
    while solved < 200 && draws < 2000 {
        draws += 1;
        let bc = random_bc(&mut rng);
        let n = rng.gen_range(40..=90);
        match solve_lcvx(&bc, &p, n, DT) {
            Ok(t) => {
                solved += 1;
                gap = gap.max(t.slack_gap());
                audit = audit.max(independent_audit(&t, &p));
            }
            Err(TrajoptError::Infeasible { .. }) => {}
            Err(e) => return outcome(false, format!("unexpected solver outcome: {e}")),
        }
    }
    outcome(
        solved == 200 && gap <= 1e-4 * p.thrust_max && audit <= 1e-6,
        format!("{solved} optimal instances: max slack gap {gap:.2e} N (limit {:.2e}), max audit violation {audit:.2e}", 1e-4 * p.thrust_max),
    )
}

fn hover_cost() -> Outcome {
    let r = Vector3::new(5.0, -3.0, 50.0);
    let bc = BoundaryConditions::rest_to_rest(r, r);
    match solve_lcvx(&bc, &VehicleParams::default(), 20, DT) {
        Ok(t) => outcome(
            (t.cost - 98.1).abs() <= 1e-3,
            format!(
                "t_f = {} s, cost {:.6} N s (oracle m g t_f = 98.1)",
                t.time_of_flight(),
                t.cost
            ),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn bisection_minimality() -> Outcome {
    let p = VehicleParams::default();
    let solver = ClarabelSolver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = Vec::new();
    for i in 0..50 {
        let bc = random_bc(&mut rng);
        let n = match min_feasible_nodes(&bc, &p, DT, &solver) {
            Ok(s) => s.nodes,
            Err(e) => {
                bad.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let at = solve_lcvx(&bc, &p, n, DT).is_ok();
        let below = matches!(
            solve_lcvx(&bc, &p, n - 1, DT),
            Err(TrajoptError::Infeasible { .. })
        );
        if !(at && below) {
            bad.push(format!(
                "#{i}: N* = {n}, optimal at N*: {at}, infeasible at N*-1: {below}"
            ));
        }
    }
    let descent = BoundaryConditions::rest_to_rest(Vector3::new(0.0, 0.0, 150.0), Vector3::zeros());
    let n = min_feasible_nodes(&descent, &p, DT, &solver)
        .map(|s| s.nodes)
        .unwrap_or(0);
    outcome(
        bad.is_empty() && n as f64 * DT >= 30.0,
        format!(
            "50 instances, {} failures {:?}; 150 m descent N* dt = {} s (bound 30 s)",
            bad.len(),
            bad,
            n as f64 * DT
        ),
    )
}

fn three_target_request(rng: &mut ChaCha8Rng, tolerance: f64) -> Option<DdtoRequest> {
    let p = VehicleParams::default();
    let z0 = rest(
        rng.gen_range(-10.0..10.0),
        rng.gen_range(-10.0..10.0),
        rng.gen_range(90.0..150.0),
    );
    let targets: Vec<State> = (0..3)
        .map(|_| rest(rng.gen_range(-40.0..40.0), rng.gen_range(-40.0..40.0), 0.0))
        .collect();
    let solver = ClarabelSolver::default();
    let nodes = targets
        .iter()
        .map(|t| {
            min_feasible_nodes(&BoundaryConditions::new(z0, *t), &p, DT, &solver)
                .ok()
                .map(|s| s.nodes)
        })
        .collect::<Option<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..3).collect();
    order.shuffle(rng);
    order.truncate(2);
    Some(DdtoRequest {
        z0,
        targets,
        tolerances: vec![tolerance; 3],
        nodes,
        rejection_order: order,
        dt: DT,
        params: p,
    })
}

fn shared_trunks(sol: &DdtoSolution) -> bool {
    let n = sol.targets.len();
    (0..n).all(|a| {
        (a + 1..n).all(|b| {
            let stage = sol.leave_stage(a).min(sol.leave_stage(b));
            let t = sol.branch_times[stage];
            match (
                sol.extract_control(a, 0.0, t),
                sol.extract_control(b, 0.0, t),
            ) {
                (Ok(x), Ok(y)) => x == y,
                _ => false,
            }
        })
    })
}

fn ddto_tolerance_and_sharing() -> Outcome {
    let p = VehicleParams::default();
    let solver = ClarabelSolver::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut instances, mut worst_ratio, mut problems) = (0, 0.0f64, Vec::new());
    let mut oracle_requests = Vec::new();
    while instances < 20 {
        let Some(req) = three_target_request(&mut rng, 0.1) else {
            continue;
        };
        instances += 1;
        let sol = match ddto_solve_with(&req, DeferralSearch::Bisection, &solver) {
            Ok(s) => s,
            Err(e) => {
                problems.push(format!("#{instances}: {e}"));
                continue;
            }
        };
        for j in 0..3 {
            let bc = BoundaryConditions::new(req.z0, req.targets[j]);
            let jstar = solve_lcvx(&bc, &p, req.nodes[j], DT)
                .map(|t| t.cost)
                .unwrap_or(f64::NAN);
            let realized: f64 = sol.path_controls(j).iter().map(|u| u.norm() * DT).sum();
            worst_ratio = worst_ratio.max(realized / jstar);
            if !(realized <= 1.1 * jstar + 1e-5) {
                problems.push(format!(
                    "#{instances} target {j}: cost {realized:.6} > 1.1 x {jstar:.6}"
                ));
            }
        }
        if !shared_trunks(&sol) {
            problems.push(format!("#{instances}: trunk controls differ"));
        }
        if oracle_requests.len() < 3 {
            oracle_requests.push(req);
        }
    }
    let mut dominance = Vec::new();
    for (i, req) in oracle_requests.iter().enumerate() {
        let loose = ddto_solve_with(req, DeferralSearch::Exhaustive, &solver);
        let tight = ddto_solve_with(
            &DdtoRequest {
                tolerances: vec![0.01; 3],
                ..req.clone()
            },
            DeferralSearch::Exhaustive,
            &solver,
        );
        let bisect = ddto_solve_with(req, DeferralSearch::Bisection, &solver);
        match (loose, tight, bisect) {
            (Ok(l), Ok(t), Ok(b)) => {
                let dominates = l
                    .branch_times
                    .iter()
                    .zip(&t.branch_times)
                    .all(|(a, b)| a >= b);
                if !dominates || l.branch_times != b.branch_times {
                    problems.push(format!(
                        "oracle #{i}: eps 0.1 {:?}, eps 0.01 {:?}, bisection {:?}",
                        l.branch_times, t.branch_times, b.branch_times
                    ));
                }
                dominance.push(format!("{:?} >= {:?}", l.branch_times, t.branch_times));
            }
            _ => problems.push(format!("oracle #{i}: solve failed")),
        }
    }
    outcome(
        problems.is_empty(),
        format!(
            "20 instances, worst realized/optimal cost ratio {worst_ratio:.5} (limit 1.1), trunks identical; deferral eps 0.1 vs 0.01 on exhaustive oracle: {}{}",
            dominance.join(", "),
            if problems.is_empty() { String::new() } else { format!("; problems: {problems:?}") }
        ),
    )
}

/// Largest distance, in cells, from any safe cell to the nearest unsafe
/// cell or to the ring of cells just outside the map.
fn brute_force_clearance(map: &SafetyMap, row: usize, col: usize) -> f64 {
    let g = map.geometry;
    let (r0, c0) = (row as i64, col as i64);
    let mut best = f64::INFINITY;
    for r in -1..=g.rows as i64 {
        for c in -1..=g.cols as i64 {
            let outside = r < 0 || c < 0 || r >= g.rows as i64 || c >= g.cols as i64;
            if outside || !map.is_safe(r as usize, c as usize) {
                best = best.min(((r - r0) as f64).hypot((c - c0) as f64));
            }
        }
    }
    best
}

fn inscribed_circle_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let g = GridGeometry::new(
            Vector2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)),
            rng.gen_range(0.25..2.0),
            64,
            64,
        );
        let mut map = SafetyMap::all(g, true);
        let p = rng.gen_range(0.0..0.03);
        for s in map.safe.iter_mut() {
            if rng.gen::<f64>() < p {
                *s = false;
            }
        }
        for _ in 0..rng.gen_range(0..6) {
            let c = g.cell_center(rng.gen_range(0..64), rng.gen_range(0..64));
            map.mask_disc(&c, rng.gen_range(1.0..10.0) * g.cell_size);
        }
        let mut best = 0.0f64;
        for r in 0..64 {
            for c in 0..64 {
                if map.is_safe(r, c) {
                    best = best.max(brute_force_clearance(&map, r, c));
                }
            }
        }
        let sites = top_n_sites(&medial_axis_skeleton(&map), 1, 2.0);
        let (radius, at_center) = match sites.first() {
            Some(s) => {
                let (r, c) = g.cell_of(&s.center).expect("site inside the map");
                (s.radius / g.cell_size, brute_force_clearance(&map, r, c))
            }
            None => (0.0, 0.0),
        };
        worst = worst.max((radius - best).abs()).max(best - at_center);
    }
    outcome(
        worst <= 0.5,
        format!("100 maps, worst radius/center clearance mismatch {worst:.3} cells (limit 0.5)"),
    )
}

fn plane_cloud(deg: f64) -> PointCloud {
    let slope = deg.to_radians().tan();
    (0..=120)
        .flat_map(|i| (0..=120).map(move |j| (i as f64 * 0.5 - 30.0, j as f64 * 0.5 - 30.0)))
        .map(|(x, y)| Vector3::new(x, y, slope * x))
        .collect()
}

fn halss_geometry() -> Outcome {
    let params = HazardParams::default();
    let region = GridGeometry::covering(Vector2::zeros(), 20.0, params.coarse_cell);
    let mut notes = Vec::new();
    let mut pass = true;
    for deg in [0.0, 3.0, 7.5, 8.0, 8.5, 12.0, 20.0, 40.0] {
        let (safety, _) = coarse_safety_map(&plane_cloud(deg), &params, region);
        let safe = safety.safe_count();
        let expected = if deg <= params.max_inclination_deg {
            region.len()
        } else {
            0
        };
        pass &= safe == expected;
        notes.push(format!("{deg}deg:{safe}/{}", region.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cloud: PointCloud = (0..10_000)
        .map(|_| {
            Vector3::new(
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    let kept = downsample_roughness_preserving(&cloud, 1.0);
    let extremes = |c: &PointCloud| {
        let mut m: HashMap<(i64, i64), (f64, f64)> = HashMap::new();
        for p in c.iter() {
            let e = m
                .entry((p.x.floor() as i64, p.y.floor() as i64))
                .or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(p.z);
            e.1 = e.1.max(p.z);
        }
        m
    };
    let (full, reduced) = (extremes(&cloud), extremes(&kept));
    let downsample_ok = full == reduced && kept.len() <= 2 * full.len();
    pass &= downsample_ok;

    let rough: PointCloud = (0..3000)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            Vector3::new(
                x,
                y,
                (0.3 * x).sin() * 2.0 + (0.2 * y).cos() + rng.gen_range(-0.2..0.2),
            )
        })
        .collect();
    let fine = GridGeometry::covering(Vector2::zeros(), 18.0, 0.5);
    let normals = surface_normals(&interpolate_height_grid(&rough, fine));
    let norm_err = normals
        .normals
        .iter()
        .zip(&normals.valid)
        .filter(|(_, v)| **v)
        .map(|(n, _)| (n.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    pass &= norm_err <= 1e-9 && normals.valid.iter().any(|v| *v);

    let (a, b, c) = (1.5, -0.3, 0.7);
    let affine: PointCloud = (0..2000)
        .map(|_| {
            let (x, y): (f64, f64) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            Vector3::new(x, y, a + b * x + c * y)
        })
        .collect();
    let grid = interpolate_height_grid(&affine, fine);
    let mut interp_err: f64 = 0.0;
    for i in 0..fine.len() {
        if grid.valid[i] {
            let p = fine.center_of(i);
            interp_err = interp_err.max((grid.values[i] - (a + b * p.x + c * p.y)).abs());
        }
    }
    pass &= interp_err <= 1e-9 && grid.valid_count() > 0;

    outcome(
        pass,
        format!(
            "planes safe cells [{}]; downsampling per-cell min/max preserved: {downsample_ok} ({} of {} points kept); normal norm error {norm_err:.1e}; affine interpolation error {interp_err:.1e}",
            notes.join(" "),
            kept.len(),
            cloud.len()
        ),
    )
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("temporary directory");
    let mut summaries = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_halo"))
            .args([
                "montecarlo",
                "--trials",
                "20",
                "--set",
                "seed=2024",
                "--out",
            ])
            .arg(&out)
            .env_remove("HALO_SEED")
            .output()
            .expect("binary runs");
        if !status.status.success() {
            return outcome(
                false,
                format!("montecarlo exited with {:?}", status.status.code()),
            );
        }
        summaries.push(std::fs::read(out.join("summary.json")).unwrap_or_default());
    }
    let same = !summaries[0].is_empty() && summaries[0] == summaries[1];
    outcome(
        same,
        format!(
            "two `montecarlo --trials 20` runs, {} bytes each, byte-identical: {same}",
            summaries[0].len()
        ),
    )
}

fn main() {
    type Check = fn() -> Vec<(&'static str, Outcome)>;
    let checks: Vec<Check> = vec![
        || comparative_study_and_flight_audit(),
        || vec![("lossless convexification", lossless_activeness())],
        || vec![("hover cost oracle", hover_cost())],
        || vec![("node-count minimality", bisection_minimality())],
        || {
            vec![(
                "deferred-decision tolerance and trunk sharing",
                ddto_tolerance_and_sharing(),
            )]
        },
        || vec![("inscribed circle oracle", inscribed_circle_oracle())],
        || vec![("hazard geometry", halss_geometry())],
        || vec![("montecarlo determinism", cli_determinism())],
    ];
    let mut failures = 0;
    for check in checks {
        let start = Instant::now();
        let results = check();
        let secs = start.elapsed().as_secs_f64();
        for (name, o) in results {
            if !o.pass {
                failures += 1;
            }
            println!(
                "{} {name} ({secs:.1} s): {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
    }
    println!("acceptance: {} failed", failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
