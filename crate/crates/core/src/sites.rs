//! Circular landing sites from safety maps.
//!
//! The distance skeleton is an exact Euclidean distance transform of the safe
//! mask, with a virtual ring of unsafe cells around the map; its maxima are the
//! centers of maximally inscribed discs.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::mapping::{GridGeometry, SafetyMap, UncertaintyMap};
use crate::terrain::PointCloud;
use crate::State;

/// Index of each score component in [`LandingSite::score`].
pub mod component {
    pub const DENSITY: usize = 0;
    pub const PROXIMITY: usize = 1;
    pub const CLUSTERING: usize = 2;
    pub const UNCERTAINTY: usize = 3;
    pub const SIZE: usize = 4;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingSite {
    pub id: u32,
    pub center: Vector2<f64>,
    /// Ground height at the center (m).
    #[serde(default)]
    pub elevation: f64,
    pub radius: f64,
    /// Desirability components, each in `[0, 1]`, larger is better.
    #[serde(rename = "c_des")]
    pub score: [f64; 5],
    pub alive: bool,
}

impl LandingSite {
    pub fn new(id: u32, center: Vector2<f64>, radius: f64) -> Self {
        Self {
            id,
            center,
            elevation: 0.0,
            radius,
            score: [0.0; 5],
            alive: true,
        }
    }

    /// Touchdown state: at rest on the ground at the site center.
    pub fn terminal_state(&self) -> State {
        State::new(self.center.x, self.center.y, self.elevation, 0.0, 0.0, 0.0)
    }

    pub fn overlaps(&self, other: &LandingSite) -> bool {
        (self.center - other.center).norm() < self.radius + other.radius
    }
}

/// Distance (in cells) from each cell center to the nearest unsafe cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSkeleton {
    pub geometry: GridGeometry,
    pub distance: Vec<f64>,
}

impl DistanceSkeleton {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.distance[self.geometry.index(row, col)]
    }
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        loop {
            let p = v[k];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance transform of the safe mask; out-of-map cells count as unsafe.
pub fn medial_axis_skeleton(map: &SafetyMap) -> DistanceSkeleton {
    let g = map.geometry;
    let (h, w) = (g.rows + 2, g.cols + 2);
    let mut grid = vec![0.0; h * w];
    for r in 0..g.rows {
        for c in 0..g.cols {
            if map.is_safe(r, c) {
                grid[(r + 1) * w + c + 1] = FAR;
            }
        }
    }
    let n = h.max(w);
    let (mut f, mut out, mut v, mut z) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0usize; n],
        vec![0.0; n + 1],
    );
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        dt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        dt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    let mut distance = vec![0.0; g.len()];
    for r in 0..g.rows {
        for c in 0..g.cols {
            distance[g.index(r, c)] = grid[(r + 1) * w + c + 1].sqrt();
        }
    }
    DistanceSkeleton {
        geometry: g,
        distance,
    }
}

/// Greedy extraction of up to `n` largest inscribed discs, largest first.
/// After each pick, cells within `min_separation_factor * radius` of its
/// center are suppressed. Site ids are assigned `0..`.
pub fn top_n_sites(
    skel: &DistanceSkeleton,
    n: usize,
    min_separation_factor: f64,
) -> Vec<LandingSite> {
    let g = skel.geometry;
    let mut d = skel.distance.clone();
    let mut out = Vec::new();
    while out.len() < n {
        let (best, &value) = match d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        {
            Some(x) => x,
            None => break,
        };
        if value <= 0.0 {
            break;
        }
        let (br, bc) = (best / g.cols, best % g.cols);
        let reach = min_separation_factor * value;
        let span = reach.ceil() as usize;
        for r in br.saturating_sub(span)..=(br + span).min(g.rows - 1) {
            for c in bc.saturating_sub(span)..=(bc + span).min(g.cols - 1) {
                let dr = r as f64 - br as f64;
                let dc = c as f64 - bc as f64;
                if dr.hypot(dc) <= reach {
                    d[g.index(r, c)] = 0.0;
                }
            }
        }
        d[best] = 0.0;
        out.push(LandingSite::new(
            out.len() as u32,
            g.cell_center(br, bc),
            value * g.cell_size,
        ));
    }
    out
}

/// Largest disc inside both the original circle and the safe part of `local`.
/// The radius never grows; an all-safe circle leaves the site untouched.
pub fn refine_site(site: &LandingSite, local: &SafetyMap) -> LandingSite {
    let g = local.geometry;
    let mut restricted = local.clone();
    let mut any_hazard = false;
    for i in 0..g.len() {
        let inside = (g.center_of(i) - site.center).norm() <= site.radius;
        if inside && !local.safe[i] {
            any_hazard = true;
        }
        if !inside {
            restricted.safe[i] = false;
        }
    }
    if !any_hazard {
        return site.clone();
    }
    let mut out = site.clone();
    match top_n_sites(&medial_axis_skeleton(&restricted), 1, 1.0).first() {
        Some(best) => {
            out.center = best.center;
            out.radius = best.radius.min(site.radius);
        }
        None => out.radius = 0.0,
    }
    out
}

/// Shared inputs for [`score_site`].
#[derive(Debug, Clone, Copy)]
pub struct ScoringContext<'a> {
    pub cloud: Option<&'a PointCloud>,
    pub uncertainty: Option<&'a UncertaintyMap>,
    /// Normalizer for distances (m).
    pub map_diagonal: f64,
    /// Highest point density (points / m^2) over the map's cells.
    pub max_density: f64,
}

impl<'a> ScoringContext<'a> {
    pub fn new(
        cloud: Option<&'a PointCloud>,
        uncertainty: Option<&'a UncertaintyMap>,
        region: GridGeometry,
    ) -> Self {
        let max_density = cloud.map_or(0.0, |c| {
            let mut counts = vec![0usize; region.len()];
            for p in c.iter() {
                if let Some((r, col)) = region.cell_of(&p.xy()) {
                    counts[region.index(r, col)] += 1;
                }
            }
            counts.into_iter().max().unwrap_or(0) as f64 / (region.cell_size * region.cell_size)
        });
        Self {
            cloud,
            uncertainty,
            map_diagonal: region.diagonal(),
            max_density,
        }
    }

    /// Context without point-cloud or uncertainty information.
    pub fn geometric(map_diagonal: f64) -> Self {
        Self {
            cloud: None,
            uncertainty: None,
            map_diagonal,
            max_density: 0.0,
        }
    }
}

/// Nearest-rank percentile of `values` (`q` in `[0, 1]`).
fn percentile(mut values: Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    Some(values[rank - 1])
}

/// Desirability components `[density, proximity, clustering, uncertainty, size]`.
pub fn score_site(
    site: &LandingSite,
    ctx: &ScoringContext,
    vehicle_pos: &Vector3<f64>,
    others: &[LandingSite],
) -> [f64; 5] {
    use component::*;
    let mut c = [1.0; 5];
    let area = std::f64::consts::PI * site.radius * site.radius;

    if let Some(cloud) = ctx.cloud {
        if ctx.max_density > 0.0 && area > 0.0 {
            let r2 = site.radius * site.radius;
            let inside = cloud
                .iter()
                .filter(|p| (p.xy() - site.center).norm_squared() <= r2)
                .count();
            c[DENSITY] = (inside as f64 / area / ctx.max_density).clamp(0.0, 1.0);
        }
    }

    let site_pos = Vector3::new(site.center.x, site.center.y, site.elevation);
    let height = (vehicle_pos.z - site.elevation).abs();
    let scale = ctx.map_diagonal.hypot(height);
    if scale > 0.0 {
        c[PROXIMITY] = (1.0 - (vehicle_pos - site_pos).norm() / scale).clamp(0.0, 1.0);
    }

    let peers: Vec<&LandingSite> = others.iter().filter(|o| o.id != site.id).collect();
    if !peers.is_empty() && ctx.map_diagonal > 0.0 {
        let mean = peers
            .iter()
            .map(|o| (o.center - site.center).norm())
            .sum::<f64>()
            / peers.len() as f64;
        c[CLUSTERING] = (1.0 - mean / ctx.map_diagonal).clamp(0.0, 1.0);
    }

    if let Some(unc) = ctx.uncertainty {
        let g = unc.geometry;
        let inside: Vec<f64> = (0..g.len())
            .filter(|&i| (g.center_of(i) - site.center).norm() <= site.radius)
            .map(|i| unc.values[i])
            .collect();
        if let Some(p99) = percentile(inside, 0.99) {
            c[UNCERTAINTY] = (1.0 - p99).clamp(0.0, 1.0);
        }
    }

    let largest = peers.iter().map(|o| o.radius).fold(site.radius, f64::max);
    if largest > 0.0 {
        c[SIZE] = (site.radius / largest).clamp(0.0, 1.0);
    }
    c
}
