//! Browser bindings: three operations, each taking plain numbers and returning
//! a JSON document for the page script to draw.

use halo_core::ddto::{ddto_solve, DdtoRequest};
use halo_core::mapping::{coarse_hazard_maps, GridGeometry, HazardParams};
use halo_core::nalgebra::{Vector2, Vector3};
use halo_core::sites::{medial_axis_skeleton, top_n_sites, LandingSite};
use halo_core::terrain::{
    generate_terrain, lidar_scan, CraterField, LidarConfig, RockField, Span, TerrainSpec,
};
use halo_core::trajopt::{
    min_feasible_nodes, BoundaryConditions, ClarabelSolver, DiscreteTrajectory, VehicleParams,
};
use halo_core::State;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DT: f64 = 0.5;

#[derive(Debug, Serialize)]
pub struct HazardView {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
    /// Row-major, row 0 southmost; NaN where unobserved.
    pub heights: Vec<f64>,
    pub safe: Vec<bool>,
    pub points: usize,
    pub sites: Vec<LandingSite>,
}

/// Synthetic terrain of side `extent`, one nadir LiDAR scan from
/// `altitude`, the coarse safety map and the `n_sites` largest safe circles.
pub fn hazard_view(
    seed: u64,
    rocks: usize,
    extent: f64,
    altitude: f64,
    max_inclination_deg: f64,
    n_sites: usize,
) -> Result<HazardView, String> {
    let spec = TerrainSpec {
        extent,
        cell_size: 0.5,
        rocks: RockField {
            count: rocks,
            radius: Span::new(1.0, 4.0),
            height: Span::new(0.5, 2.5),
        },
        craters: CraterField {
            count: 2,
            radius: Span::new(4.0, 9.0),
            depth: Span::new(0.5, 1.5),
        },
        seed,
        ..TerrainSpec::default()
    };
    let field = generate_terrain(&spec).map_err(|e| e.to_string())?;
    let top = field.max_height();
    let lidar = LidarConfig {
        rings: 40,
        rays_per_ring: 240,
        ..LidarConfig::default()
    };
    let cloud = lidar_scan(&field, &Vector3::new(0.0, 0.0, top + altitude), &lidar)
        .map_err(|e| e.to_string())?;
    let params = HazardParams {
        max_inclination_deg,
        ..HazardParams::default()
    };
    params.validate()?;
    let region = GridGeometry::covering(Vector2::zeros(), extent / 2.0, params.coarse_cell);
    let maps = coarse_hazard_maps(&cloud, &params, region);
    let mut sites = top_n_sites(&medial_axis_skeleton(&maps.safety), n_sites, 2.0);
    for s in &mut sites {
        s.elevation = maps.heights.sample(&s.center).unwrap_or(0.0);
    }
    Ok(HazardView {
        rows: region.rows,
        cols: region.cols,
        cell_size: region.cell_size,
        origin: [region.origin.x, region.origin.y],
        heights: maps
            .heights
            .values
            .iter()
            .zip(&maps.heights.valid)
            .map(|(&h, &v)| if v { h } else { f64::NAN })
            .collect(),
        safe: maps.safety.safe.clone(),
        points: cloud.len(),
        sites,
    })
}

#[derive(Debug, Serialize)]
pub struct PathView {
    pub nodes: usize,
    pub time_of_flight: f64,
    pub cost: f64,
    pub positions: Vec<[f64; 3]>,
    pub thrust: Vec<f64>,
}

impl From<&DiscreteTrajectory> for PathView {
    fn from(t: &DiscreteTrajectory) -> Self {
        Self {
            nodes: t.nodes(),
            time_of_flight: t.time_of_flight(),
            cost: t.cost,
            positions: t.states.iter().map(|x| [x[0], x[1], x[2]]).collect(),
            thrust: t.controls.iter().map(|u| u.norm()).collect(),
        }
    }
}

fn rest_at(x: f64, y: f64, z: f64) -> State {
    State::new(x, y, z, 0.0, 0.0, 0.0)
}

/// Minimum-time fuel-optimal descent from rest at `(x, y, z)` to rest at `(tx, ty, 0)`.
pub fn landing_path(x: f64, y: f64, z: f64, tx: f64, ty: f64) -> Result<PathView, String> {
    let bc = BoundaryConditions::new(rest_at(x, y, z), rest_at(tx, ty, 0.0));
    let search = min_feasible_nodes(
        &bc,
        &VehicleParams::default(),
        DT,
        &ClarabelSolver::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(PathView::from(&search.trajectory))
}

#[derive(Debug, Serialize)]
pub struct TreeView {
    pub branch_times: Vec<f64>,
    pub rejection_order: Vec<usize>,
    pub optimal_costs: Vec<f64>,
    pub target_costs: Vec<f64>,
    pub paths: Vec<PathView>,
}

/// Deferred-decision tree from rest at `(x, y, z)` to ground targets given as
/// a flat `[x0, y0, x1, y1, ..]` list. Targets are rejected in list order,
/// the last one surviving.
pub fn decision_tree(
    x: f64,
    y: f64,
    z: f64,
    targets: &[f64],
    tolerance: f64,
) -> Result<TreeView, String> {
    if targets.len() < 4 || targets.len() % 2 != 0 {
        return Err("need at least two targets as x,y pairs".into());
    }
    let params = VehicleParams::default();
    let z0 = rest_at(x, y, z);
    let ends: Vec<State> = targets
        .chunks(2)
        .map(|c| rest_at(c[0], c[1], 0.0))
        .collect();
    let solver = ClarabelSolver::default();
    let nodes = ends
        .iter()
        .map(|e| {
            min_feasible_nodes(&BoundaryConditions::new(z0, *e), &params, DT, &solver)
                .map(|s| s.nodes)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let n = ends.len();
    let req = DdtoRequest {
        z0,
        targets: ends,
        tolerances: vec![tolerance; n],
        nodes,
        rejection_order: (0..n - 1).collect(),
        dt: DT,
        params,
    };
    let sol = ddto_solve(&req).map_err(|e| e.to_string())?;
    Ok(TreeView {
        branch_times: sol.branch_times.clone(),
        rejection_order: sol.rejection_order.clone(),
        optimal_costs: sol.optimal_costs.clone(),
        target_costs: sol.target_costs.clone(),
        paths: (0..n)
            .map(|j| PathView::from(&sol.path_trajectory(j, &params)))
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = hazardMap)]
pub fn hazard_map_js(
    seed: u32,
    rocks: u32,
    extent: f64,
    altitude: f64,
    max_inclination_deg: f64,
    n_sites: u32,
) -> Result<String, JsError> {
    to_js(hazard_view(
        seed as u64,
        rocks as usize,
        extent,
        altitude,
        max_inclination_deg,
        n_sites as usize,
    ))
}

#[wasm_bindgen(js_name = landingPath)]
pub fn landing_path_js(x: f64, y: f64, z: f64, tx: f64, ty: f64) -> Result<String, JsError> {
    to_js(landing_path(x, y, z, tx, ty))
}

#[wasm_bindgen(js_name = decisionTree)]
pub fn decision_tree_js(
    x: f64,
    y: f64,
    z: f64,
    targets: Vec<f64>,
    tolerance: f64,
) -> Result<String, JsError> {
    to_js(decision_tree(x, y, z, &targets, tolerance))
}
