use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use halo_core::adaptive::PlannerMode;
use halo_core::harness::{run_closed_loop_detailed, run_comparison, run_montecarlo, TrialRecord};
use halo_core::io::{format_xyz, parse_xyz, safety_pgm, sites_jsonl, uncertainty_pgm};
use halo_core::mapping::{coarse_hazard_maps, GridGeometry, HazardParams};
use halo_core::nalgebra::{Vector2, Vector3};
use halo_core::sites::{medial_axis_skeleton, score_site, top_n_sites, ScoringContext};
use halo_core::terrain::PointCloud;
use halo_core::trajopt::{
    min_feasible_nodes, solve_lcvx, trajectory_csv, BoundaryConditions, ClarabelSolver,
    TrajoptError,
};
use halo_core::State;

use crate::config::{self, RunConfig, SEED_ENV};
use crate::output::OutputDir;
use crate::{Cli, Command};

const FAILURE: u8 = 2;

pub fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = config::load(
        cli.common.config.as_deref(),
        &cli.common.overrides,
        std::env::var(SEED_ENV).ok(),
    )?;
    if let Some(out) = &cli.common.out {
        cfg.output_dir = out.clone();
    }
    if let Command::Montecarlo {
        trials: Some(t), ..
    } = &cli.command
    {
        cfg.sim.trials = *t;
    }
    cfg.sim.validate()?;
    if cli.common.print_config {
        print!("{}", cfg.to_toml());
        return Ok(ExitCode::SUCCESS);
    }
    match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Montecarlo { mode, .. } => montecarlo(&cfg, mode.as_deref()),
        Command::Halss { input, sites } => halss(&cfg, &input, sites),
        Command::Trajopt {
            from,
            to,
            v0,
            nodes,
            tf,
        } => trajopt(&cfg, from, to, v0, nodes, tf),
    }
}

fn simulate(cfg: &RunConfig) -> Result<ExitCode> {
    let out = OutputDir::create(&cfg.output_dir)?;
    out.write("config.toml", cfg.to_toml())?;
    let record = run_closed_loop_detailed(&cfg.sim, cfg.sim.seed)?;
    out.write("flight_log.jsonl", record.log.to_jsonl())?;
    out.write("trajectory.csv", flight_csv(&record, cfg.sim.adaptive.dt))?;
    out.write("radii.csv", radii_csv(&record))?;
    out.write(
        "result.json",
        serde_json::to_string_pretty(&record.result)? + "\n",
    )?;
    if let Some(cloud) = record.point_cloud.as_ref().filter(|c| c.len() >= 3) {
        let region = cloud_region(cloud, cfg.sim.hazard.coarse_cell);
        let maps = coarse_hazard_maps(cloud, &cfg.sim.hazard, region);
        out.write("safety.pgm", safety_pgm(&maps.safety))?;
        out.write("uncertainty.pgm", uncertainty_pgm(&maps.uncertainty))?;
    }
    let r = &record.result;
    match (&r.abort, r.touchdown_site) {
        (Some(reason), _) => println!("aborted after {:.1} s: {reason}", r.flight_time),
        (None, Some(site)) => println!(
            "touchdown on site {site} at t = {:.1} s, miss {:.3} m, effort {:.2} N s, {}",
            r.flight_time,
            r.miss_distance.unwrap_or(f64::NAN),
            r.effort,
            if r.success { "success" } else { "unsuccessful" }
        ),
        (None, None) => println!("no touchdown"),
    }
    println!("artifacts in {}", cfg.output_dir.display());
    Ok(if r.success {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    })
}

fn flight_csv(record: &TrialRecord, dt: f64) -> String {
    let mut s = String::from("t,r1,r2,r3,v1,v2,v3,T1,T2,T3\n");
    for (k, x) in record.states.iter().enumerate() {
        let u = record
            .controls
            .get(k)
            .or(record.controls.last())
            .copied()
            .unwrap_or_else(Vector3::zeros);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            k as f64 * dt,
            x[0],
            x[1],
            x[2],
            x[3],
            x[4],
            x[5],
            u.x,
            u.y,
            u.z
        );
    }
    s
}

fn radii_csv(record: &TrialRecord) -> String {
    let mut s = String::from("site,t,radius\n");
    for (id, hist) in &record.radius_history {
        for (t, r) in hist {
            let _ = writeln!(s, "{id},{t},{r}");
        }
    }
    s
}

fn montecarlo(cfg: &RunConfig, mode: Option<&str>) -> Result<ExitCode> {
    let mode = mode.unwrap_or(match cfg.sim.mode {
        PlannerMode::DdtoOnce => "ddto",
        PlannerMode::Adaptive => "adaptive",
    });
    let json = match mode {
        "ddto" | "adaptive" => {
            let mut sim = cfg.sim.clone();
            sim.mode = if mode == "ddto" {
                PlannerMode::DdtoOnce
            } else {
                PlannerMode::Adaptive
            };
            let s = run_montecarlo(&sim)?;
            println!(
                "{mode}: success {:.2}% ({} of {}), mean effort {:.2} N s",
                100.0 * s.success_rate,
                s.successes,
                s.trials,
                s.mean_effort
            );
            serde_json::to_string_pretty(&s)?
        }
        "both" => {
            let c = run_comparison(&cfg.sim)?;
            println!(
                "ddto: success {:.2}%, mean effort {:.2} N s",
                100.0 * c.ddto.success_rate,
                c.ddto.mean_effort
            );
            println!(
                "adaptive: success {:.2}%, mean effort {:.2} N s",
                100.0 * c.adaptive.success_rate,
                c.adaptive.mean_effort
            );
            println!(
                "delta: {:+.2} percentage points, {:+.2} N s",
                c.delta_success_pp, c.delta_mean_effort
            );
            serde_json::to_string_pretty(&c)?
        }
        other => bail!("invalid mode {other:?}; expected ddto, adaptive or both"),
    };
    let out = OutputDir::create(&cfg.output_dir)?;
    out.write("config.toml", cfg.to_toml())?;
    let path = out.write("summary.json", json + "\n")?;
    println!("summary written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

/// Square coarse grid over the cloud's horizontal bounding box.
fn cloud_region(cloud: &PointCloud, cell: f64) -> GridGeometry {
    let (mut lo, mut hi) = (
        Vector2::repeat(f64::INFINITY),
        Vector2::repeat(f64::NEG_INFINITY),
    );
    for p in cloud.iter() {
        lo = lo.inf(&p.xy());
        hi = hi.sup(&p.xy());
    }
    let half = ((hi - lo) / 2.0).max().max(cell / 2.0);
    GridGeometry::covering((lo + hi) / 2.0, half, cell)
}

fn halss(cfg: &RunConfig, input: &Path, n: usize) -> Result<ExitCode> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("cannot read {}", input.display()))?;
    let cloud = parse_xyz(&text).map_err(|e| anyhow!("{}: {e}", input.display()))?;
    let hazard: &HazardParams = &cfg.sim.hazard;
    let region = cloud_region(&cloud, hazard.coarse_cell);
    let maps = coarse_hazard_maps(&cloud, hazard, region);
    let mut sites = top_n_sites(&medial_axis_skeleton(&maps.safety), n, 2.0);
    let top = cloud.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let center = region.origin
        + Vector2::new(region.cols as f64, region.rows as f64) * region.cell_size / 2.0;
    let vehicle = Vector3::new(center.x, center.y, top + cfg.sim.initial_state[2]);
    let ctx = ScoringContext::new(Some(&cloud), Some(&maps.uncertainty), region);
    let snapshot = sites.clone();
    for s in sites.iter_mut() {
        s.elevation = maps.heights.sample(&s.center).unwrap_or(s.elevation);
        s.score = score_site(s, &ctx, &vehicle, &snapshot);
    }
    let out = OutputDir::create(&cfg.output_dir)?;
    out.write("safety.pgm", safety_pgm(&maps.safety))?;
    out.write("uncertainty.pgm", uncertainty_pgm(&maps.uncertainty))?;
    out.write("sites.jsonl", sites_jsonl(&sites))?;
    out.write(
        "downsampled.xyz",
        format_xyz(&halo_core::mapping::downsample_roughness_preserving(
            &cloud,
            hazard.coarse_cell,
        )),
    )?;
    println!(
        "{} points, {}x{} cells of {} m, {} safe, {} sites",
        cloud.len(),
        region.cols,
        region.rows,
        region.cell_size,
        maps.safety.safe_count(),
        sites.len()
    );
    for s in &sites {
        println!(
            "  site {}: center ({:.2}, {:.2}), radius {:.2} m",
            s.id, s.center.x, s.center.y, s.radius
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn trajopt(
    cfg: &RunConfig,
    from: [f64; 3],
    to: [f64; 3],
    v0: [f64; 3],
    nodes: Option<usize>,
    tf: Option<f64>,
) -> Result<ExitCode> {
    let params = cfg.sim.vehicle;
    let dt = cfg.sim.adaptive.dt;
    let mut x0 = State::zeros();
    x0.fixed_rows_mut::<3>(0).copy_from_slice(&from);
    x0.fixed_rows_mut::<3>(3).copy_from_slice(&v0);
    let bc = BoundaryConditions::new(x0, State::new(to[0], to[1], to[2], 0.0, 0.0, 0.0));
    let fixed = match (nodes, tf) {
        (Some(n), _) => Some(n),
        (None, Some(t)) => {
            let n = (t / dt).round();
            if !(t > 0.0) || ((n * dt) - t).abs() > 1e-9 * t.max(1.0) {
                bail!("tf = {t} s is not a positive multiple of the step {dt} s");
            }
            Some(n as usize)
        }
        (None, None) => None,
    };
    let result = match fixed {
        Some(n) => solve_lcvx(&bc, &params, n, dt),
        None => {
            min_feasible_nodes(&bc, &params, dt, &ClarabelSolver::default()).map(|s| s.trajectory)
        }
    };
    let traj = match result {
        Ok(t) => t,
        Err(e @ (TrajoptError::InvalidParams(_) | TrajoptError::InvalidProblem(_))) => {
            return Err(e.into())
        }
        Err(e) => {
            eprintln!("no trajectory: {e}");
            return Ok(ExitCode::from(FAILURE));
        }
    };
    let out = OutputDir::create(&cfg.output_dir)?;
    let path = out.write("trajectory.csv", trajectory_csv(&traj))?;
    println!("N* = {}", traj.nodes());
    println!("t_f = {} s", traj.time_of_flight());
    println!("cost = {:.6} N s", traj.cost);
    println!("trajectory written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}
