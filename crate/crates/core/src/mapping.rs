//! Raster hazard processing: roughness-preserving downsampling, piecewise-linear
//! height interpolation, surface normals, angle maps and safety maps at a coarse
//! (global) and a fine (per-site) resolution.

use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::sites::LandingSite;
use crate::terrain::PointCloud;

/// Slack applied to the inclination threshold so that an angle equal to the
/// limit, up to floating-point noise, stays on the safe side.
const ANGLE_EPS_DEG: f64 = 1e-9;

/// Raster layout: cell `(row, col)` covers
/// `origin + [col, col+1) x [row, row+1)` times `cell_size`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
}

impl GridGeometry {
    pub fn new(origin: Vector2<f64>, cell_size: f64, rows: usize, cols: usize) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self {
            origin,
            cell_size,
            rows,
            cols,
        }
    }

    /// Square grid centered on `center` wide enough to contain `half_width` on each side.
    pub fn covering(center: Vector2<f64>, half_width: f64, cell_size: f64) -> Self {
        let n = ((2.0 * half_width / cell_size).ceil() as usize).max(1);
        let origin = center - Vector2::repeat(n as f64 * cell_size / 2.0);
        Self::new(origin, cell_size, n, n)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vector2<f64> {
        self.origin + Vector2::new(col as f64 + 0.5, row as f64 + 0.5) * self.cell_size
    }

    pub fn center_of(&self, idx: usize) -> Vector2<f64> {
        self.cell_center(idx / self.cols, idx % self.cols)
    }

    pub fn cell_of(&self, p: &Vector2<f64>) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.cell_size).floor();
        let r = ((p.y - self.origin.y) / self.cell_size).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.cols && (r as usize) < self.rows)
            .then(|| (r as usize, c as usize))
    }

    /// Length of the grid diagonal (m).
    pub fn diagonal(&self) -> f64 {
        (self.rows as f64).hypot(self.cols as f64) * self.cell_size
    }

    pub fn area(&self) -> f64 {
        self.len() as f64 * self.cell_size * self.cell_size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ScalarGrid {
    pub fn invalid(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            values: vec![f64::NAN; geometry.len()],
            valid: vec![false; geometry.len()],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.geometry.index(row, col);
        self.valid[i].then(|| self.values[i])
    }

    /// Value of the cell containing `p`, if valid.
    pub fn sample(&self, p: &Vector2<f64>) -> Option<f64> {
        self.geometry.cell_of(p).and_then(|(r, c)| self.get(r, c))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Per-cell unit surface normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub geometry: GridGeometry,
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
}

/// Per-cell inclination from vertical, degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMap {
    pub geometry: GridGeometry,
    pub degrees: Vec<f64>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyMap {
    pub geometry: GridGeometry,
    pub safe: Vec<bool>,
}

impl SafetyMap {
    pub fn all(geometry: GridGeometry, safe: bool) -> Self {
        Self {
            geometry,
            safe: vec![safe; geometry.len()],
        }
    }

    pub fn is_safe(&self, row: usize, col: usize) -> bool {
        self.safe[self.geometry.index(row, col)]
    }

    pub fn safe_count(&self) -> usize {
        self.safe.iter().filter(|s| **s).count()
    }

    /// Marks every cell whose center lies within `radius` of `center` as unsafe.
    pub fn mask_disc(&mut self, center: &Vector2<f64>, radius: f64) {
        let g = self.geometry;
        for i in 0..g.len() {
            if (g.center_of(i) - center).norm() <= radius {
                self.safe[i] = false;
            }
        }
    }
}

/// Normalized per-cell uncertainty in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
}

impl UncertaintyMap {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazardParams {
    /// Maximum allowable inclination, degrees.
    pub max_inclination_deg: f64,
    /// Normalized uncertainty above which a cell is unsafe.
    pub uncertainty_threshold: f64,
    pub coarse_cell: f64,
    pub fine_cell: f64,
    /// Extra radius around a site included in its local map (m).
    pub local_buffer: f64,
    /// Smallest angle dispersion (deg) used as the uncertainty normalizer.
    pub dispersion_floor_deg: f64,
}

impl Default for HazardParams {
    fn default() -> Self {
        Self {
            max_inclination_deg: 8.0,
            uncertainty_threshold: 0.9,
            coarse_cell: 2.0,
            fine_cell: 0.5,
            local_buffer: 2.0,
            dispersion_floor_deg: 1.0,
        }
    }
}

impl HazardParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_inclination_deg > 0.0 && self.max_inclination_deg < 90.0) {
            return Err(format!(
                "max_inclination_deg must lie in (0, 90), got {}",
                self.max_inclination_deg
            ));
        }
        if !(self.uncertainty_threshold > 0.0 && self.uncertainty_threshold <= 1.0) {
            return Err(format!(
                "uncertainty_threshold must lie in (0, 1], got {}",
                self.uncertainty_threshold
            ));
        }
        if !(self.fine_cell > 0.0 && self.fine_cell < self.coarse_cell) {
            return Err(format!(
                "need 0 < fine_cell < coarse_cell, got fine {} coarse {}",
                self.fine_cell, self.coarse_cell
            ));
        }
        if !(self.local_buffer >= 0.0) {
            return Err("local_buffer must be >= 0".into());
        }
        if !(self.dispersion_floor_deg > 0.0) {
            return Err("dispersion_floor_deg must be > 0".into());
        }
        Ok(())
    }
}

/// Keeps, per occupied `cell_size` bin, only the lowest and highest point.
/// Bins are anchored at the frame origin; output follows first-occupancy order.
pub fn downsample_roughness_preserving(cloud: &PointCloud, cell_size: f64) -> PointCloud {
    assert!(cell_size > 0.0, "cell_size must be positive");
    let mut slot: HashMap<(i64, i64), usize> = HashMap::new();
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = (
            (p.x / cell_size).floor() as i64,
            (p.y / cell_size).floor() as i64,
        );
        match slot.get(&key) {
            Some(&s) => {
                let (lo, hi) = &mut cells[s];
                if p.z < cloud.points[*lo].z {
                    *lo = i;
                }
                if p.z > cloud.points[*hi].z {
                    *hi = i;
                }
            }
            None => {
                slot.insert(key, cells.len());
                cells.push((i, i));
            }
        }
    }
    let mut out = Vec::with_capacity(2 * cells.len());
    for (lo, hi) in cells {
        out.push(cloud.points[lo]);
        if hi != lo {
            out.push(cloud.points[hi]);
        }
    }
    PointCloud::new(out)
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`; `None` if degenerate.
pub fn barycentric(
    p: &Vector2<f64>,
    a: &Vector2<f64>,
    b: &Vector2<f64>,
    c: &Vector2<f64>,
) -> Option<[f64; 3]> {
    let det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
    let scale = (b - a).norm_squared().max((c - a).norm_squared());
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let l1 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
    let l2 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
    Some([l1, l2, 1.0 - l1 - l2])
}

/// Piecewise-linear interpolant over the Delaunay triangulation of the
/// points' horizontal projections, sampled at cell centers. Cells outside the
/// convex hull are invalid; fewer than three non-collinear points give an
/// all-invalid grid.
pub fn interpolate_height_grid(cloud: &PointCloud, geometry: GridGeometry) -> ScalarGrid {
    let mut grid = ScalarGrid::invalid(geometry);
    if cloud.len() < 3 {
        return grid;
    }
    let pts: Vec<delaunator::Point> = cloud
        .points
        .iter()
        .map(|p| delaunator::Point { x: p.x, y: p.y })
        .collect();
    let tri = delaunator::triangulate(&pts);
    let g = geometry;
    let cs = g.cell_size;
    for t in tri.triangles.chunks_exact(3) {
        let [a, b, c] = [t[0], t[1], t[2]].map(|i| cloud.points[i]);
        let (a2, b2, c2) = (a.xy(), b.xy(), c.xy());
        let min = a2.inf(&b2).inf(&c2);
        let max = a2.sup(&b2).sup(&c2);
        let c_lo = ((min.x - g.origin.x) / cs - 0.5).ceil().max(0.0) as usize;
        let r_lo = ((min.y - g.origin.y) / cs - 0.5).ceil().max(0.0) as usize;
        let c_hi = ((max.x - g.origin.x) / cs - 0.5).floor();
        let r_hi = ((max.y - g.origin.y) / cs - 0.5).floor();
        if c_hi < 0.0 || r_hi < 0.0 {
            continue;
        }
        let c_hi = (c_hi as usize).min(g.cols.saturating_sub(1));
        let r_hi = (r_hi as usize).min(g.rows.saturating_sub(1));
        for r in r_lo..=r_hi {
            for col in c_lo..=c_hi {
                let i = g.index(r, col);
                if grid.valid[i] {
                    continue;
                }
                let p = g.cell_center(r, col);
                let Some(l) = barycentric(&p, &a2, &b2, &c2) else {
                    continue;
                };
                if l.iter().all(|&w| w >= -1e-12) {
                    grid.values[i] = l[0] * a.z + l[1] * b.z + l[2] * c.z;
                    grid.valid[i] = true;
                }
            }
        }
    }
    grid
}

/// Central-difference gradient (one-sided at borders and next to invalid
/// cells), normal `normalize(-hx, -hy, 1)`.
pub fn surface_normals(grid: &ScalarGrid) -> NormalMap {
    let g = grid.geometry;
    let cs = g.cell_size;
    let mut normals = vec![Vector3::zeros(); g.len()];
    let mut valid = vec![false; g.len()];
    let slope = |here: f64, prev: Option<f64>, next: Option<f64>| -> Option<f64> {
        match (prev, next) {
            (Some(p), Some(n)) => Some((n - p) / (2.0 * cs)),
            (None, Some(n)) => Some((n - here) / cs),
            (Some(p), None) => Some((here - p) / cs),
            (None, None) => None,
        }
    };
    for r in 0..g.rows {
        for c in 0..g.cols {
            let Some(h) = grid.get(r, c) else { continue };
            let left = (c > 0).then(|| grid.get(r, c - 1)).flatten();
            let right = (c + 1 < g.cols).then(|| grid.get(r, c + 1)).flatten();
            let down = (r > 0).then(|| grid.get(r - 1, c)).flatten();
            let up = (r + 1 < g.rows).then(|| grid.get(r + 1, c)).flatten();
            let (Some(hx), Some(hy)) = (slope(h, left, right), slope(h, down, up)) else {
                continue;
            };
            let i = g.index(r, c);
            normals[i] = Vector3::new(-hx, -hy, 1.0).normalize();
            valid[i] = true;
        }
    }
    NormalMap {
        geometry: g,
        normals,
        valid,
    }
}

pub fn angle_map(normals: &NormalMap) -> AngleMap {
    let degrees = normals
        .normals
        .iter()
        .zip(&normals.valid)
        .map(|(n, &v)| {
            if v {
                n.z.clamp(-1.0, 1.0).acos().to_degrees()
            } else {
                f64::NAN
            }
        })
        .collect();
    AngleMap {
        geometry: normals.geometry,
        degrees,
        valid: normals.valid.clone(),
    }
}

/// Safe iff valid and `theta <= alpha`.
pub fn threshold_safety(angles: &AngleMap, max_inclination_deg: f64) -> SafetyMap {
    let safe = angles
        .degrees
        .iter()
        .zip(&angles.valid)
        .map(|(&theta, &v)| v && theta <= max_inclination_deg + ANGLE_EPS_DEG)
        .collect();
    SafetyMap {
        geometry: angles.geometry,
        safe,
    }
}

/// Standard deviation of the angle over each valid cell's 3x3 valid
/// neighborhood, divided by `max(map max, floor_deg)`.
pub fn angle_dispersion(angles: &AngleMap, floor_deg: f64) -> UncertaintyMap {
    let g = angles.geometry;
    let mut sigma = vec![0.0; g.len()];
    for r in 0..g.rows {
        for c in 0..g.cols {
            let i = g.index(r, c);
            if !angles.valid[i] {
                continue;
            }
            let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
            for rr in r.saturating_sub(1)..=(r + 1).min(g.rows - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(g.cols - 1) {
                    let j = g.index(rr, cc);
                    if angles.valid[j] {
                        n += 1;
                        sum += angles.degrees[j];
                        sq += angles.degrees[j] * angles.degrees[j];
                    }
                }
            }
            if n >= 2 {
                let mean = sum / n as f64;
                sigma[i] = (sq / n as f64 - mean * mean).max(0.0).sqrt();
            }
        }
    }
    let max = sigma.iter().copied().fold(0.0, f64::max).max(floor_deg);
    UncertaintyMap {
        geometry: g,
        values: sigma
            .into_iter()
            .map(|s| (s / max).clamp(0.0, 1.0))
            .collect(),
    }
}

/// Intermediate layers of the coarse pipeline.
#[derive(Debug, Clone)]
pub struct CoarseMaps {
    pub heights: ScalarGrid,
    pub angles: AngleMap,
    pub geometric: SafetyMap,
    pub uncertainty: UncertaintyMap,
    pub safety: SafetyMap,
}

/// downsample -> interpolate -> normals -> angles -> threshold, with the
/// angle-dispersion uncertainty layer ANDed into the result.
pub fn coarse_hazard_maps(
    cloud: &PointCloud,
    params: &HazardParams,
    region: GridGeometry,
) -> CoarseMaps {
    let culled = downsample_roughness_preserving(cloud, params.coarse_cell);
    let heights = interpolate_height_grid(&culled, region);
    let angles = angle_map(&surface_normals(&heights));
    let geometric = threshold_safety(&angles, params.max_inclination_deg);
    let uncertainty = angle_dispersion(&angles, params.dispersion_floor_deg);
    let safe = geometric
        .safe
        .iter()
        .zip(&uncertainty.values)
        .map(|(&s, &u)| s && u <= params.uncertainty_threshold)
        .collect();
    CoarseMaps {
        heights,
        angles,
        geometric,
        uncertainty,
        safety: SafetyMap {
            geometry: region,
            safe,
        },
    }
}

pub fn coarse_safety_map(
    cloud: &PointCloud,
    params: &HazardParams,
    region: GridGeometry,
) -> (SafetyMap, UncertaintyMap) {
    let maps = coarse_hazard_maps(cloud, params, region);
    (maps.safety, maps.uncertainty)
}

/// Fine-resolution layers around one site.
#[derive(Debug, Clone)]
pub struct LocalMaps {
    pub heights: ScalarGrid,
    pub safety: SafetyMap,
}

/// Points of `store` within `radius` (horizontal) of `center`.
pub fn select_disc(store: &PointCloud, center: &Vector2<f64>, radius: f64) -> PointCloud {
    let r2 = radius * radius;
    store
        .iter()
        .filter(|p| (p.xy() - center).norm_squared() <= r2)
        .copied()
        .collect()
}

pub fn local_hazard_maps(
    store: &PointCloud,
    site: &LandingSite,
    params: &HazardParams,
) -> LocalMaps {
    let reach = site.radius + params.local_buffer;
    let geometry = GridGeometry::covering(site.center, reach, params.fine_cell);
    let sub = select_disc(store, &site.center, reach);
    let culled = downsample_roughness_preserving(&sub, params.fine_cell);
    let heights = interpolate_height_grid(&culled, geometry);
    let safety = threshold_safety(
        &angle_map(&surface_normals(&heights)),
        params.max_inclination_deg,
    );
    LocalMaps { heights, safety }
}

/// Fine safety map of the disc `radius + buffer` around the site.
pub fn local_safety_map(
    store: &PointCloud,
    site: &LandingSite,
    params: &HazardParams,
) -> SafetyMap {
    local_hazard_maps(store, site, params).safety
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_terrain, lidar_scan, HeightField, LidarConfig, TerrainSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud_from(points: &[(f64, f64, f64)]) -> PointCloud {
        points
            .iter()
            .map(|&(x, y, z)| Vector3::new(x, y, z))
            .collect()
    }

    fn plane_cloud(n: usize, f: impl Fn(f64, f64) -> f64, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = rng.gen_range(-10.0..10.0);
                let y = rng.gen_range(-10.0..10.0);
                Vector3::new(x, y, f(x, y))
            })
            .collect()
    }

    #[test]
    fn downsample_keeps_extremes() {
        let c = cloud_from(&[(0.1, 0.1, 1.0), (0.5, 0.5, 5.0), (0.9, 0.2, 3.0)]);
        let d = downsample_roughness_preserving(&c, 1.0);
        let mut z: Vec<f64> = d.iter().map(|p| p.z).collect();
        z.sort_by(f64::total_cmp);
        assert_eq!(z, vec![1.0, 5.0]);

        let single = cloud_from(&[(2.5, 2.5, 7.0)]);
        assert_eq!(downsample_roughness_preserving(&single, 1.0), single);
        assert!(downsample_roughness_preserving(&PointCloud::default(), 1.0).is_empty());
    }

    #[test]
    fn downsample_matches_brute_force_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cloud: PointCloud = (0..10_000)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let d = downsample_roughness_preserving(&cloud, 1.0);
        assert!(d.len() <= 200);
        for cx in 0..10 {
            for cy in 0..10 {
                let inside =
                    |p: &&Vector3<f64>| p.x.floor() as i32 == cx && p.y.floor() as i32 == cy;
                let zs = |c: &PointCloud| -> (f64, f64) {
                    c.iter()
                        .filter(inside)
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                            (lo.min(p.z), hi.max(p.z))
                        })
                };
                assert_eq!(zs(&cloud), zs(&d));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_plane() {
        let f = |x: f64, y: f64| 0.2 * x + 0.1 * y + 3.0;
        let cloud = plane_cloud(400, f, 3);
        let g = GridGeometry::new(Vector2::new(-10.0, -10.0), 0.5, 40, 40);
        let grid = interpolate_height_grid(&cloud, g);
        assert!(grid.valid_count() > 1000);
        for i in 0..g.len() {
            if grid.valid[i] {
                let p = g.center_of(i);
                assert!((grid.values[i] - f(p.x, p.y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn centroid_of_single_triangle() {
        let cloud = cloud_from(&[(0.0, 0.0, 1.0), (3.0, 0.0, 2.0), (0.0, 3.0, 6.0)]);
        // one cell whose center is the centroid (1, 1)
        let g = GridGeometry::new(Vector2::new(0.5, 0.5), 1.0, 1, 1);
        let grid = interpolate_height_grid(&cloud, g);
        assert!((grid.get(0, 0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_clouds_give_invalid_grid() {
        let g = GridGeometry::new(Vector2::new(0.0, 0.0), 1.0, 4, 4);
        let two = cloud_from(&[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]);
        assert_eq!(interpolate_height_grid(&two, g).valid_count(), 0);
        let line = cloud_from(&[
            (0.0, 0.0, 0.0),
            (1.0, 1.0, 1.0),
            (2.0, 2.0, 2.0),
            (3.0, 3.0, 0.0),
        ]);
        assert_eq!(interpolate_height_grid(&line, g).valid_count(), 0);
    }

    /// Brute-force Delaunay: every triple whose circumcircle is empty.
    fn brute_delaunay(pts: &[Vector2<f64>]) -> Vec<[usize; 3]> {
        let n = pts.len();
        let mut tris = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (a, b, c) = (pts[i], pts[j], pts[k]);
                    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
                    if d.abs() < 1e-12 {
                        continue;
                    }
                    let (a2, b2, c2) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
                    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
                    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
                    let center = Vector2::new(ux, uy);
                    let r2 = (a - center).norm_squared();
                    if (0..n).all(|m| {
                        m == i || m == j || m == k || (pts[m] - center).norm_squared() > r2
                    }) {
                        tris.push([i, j, k]);
                    }
                }
            }
        }
        tris
    }

    #[test]
    fn interpolation_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud: PointCloud = (0..30)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(0.0..10.0),
                    rng.gen_range(-2.0..2.0),
                )
            })
            .collect();
        let xy: Vec<Vector2<f64>> = cloud.iter().map(|p| p.xy()).collect();
        let tris = brute_delaunay(&xy);
        let g = GridGeometry::new(Vector2::new(0.0, 0.0), 0.1, 100, 100);
        let grid = interpolate_height_grid(&cloud, g);
        let mut checked = 0;
        for _ in 0..400 {
            if checked == 100 {
                break;
            }
            let (r, c) = (rng.gen_range(0..100), rng.gen_range(0..100));
            let p = g.cell_center(r, c);
            let oracle = tris.iter().find_map(|t| {
                let l = barycentric(&p, &xy[t[0]], &xy[t[1]], &xy[t[2]])?;
                l.iter().all(|&w| w >= -1e-12).then(|| {
                    l[0] * cloud.points[t[0]].z
                        + l[1] * cloud.points[t[1]].z
                        + l[2] * cloud.points[t[2]].z
                })
            });
            match oracle {
                Some(z) => {
                    assert!((grid.get(r, c).unwrap() - z).abs() < 1e-9, "cell ({r},{c})");
                    checked += 1;
                }
                None => assert!(grid.get(r, c).is_none()),
            }
        }
        assert_eq!(checked, 100);
    }

    fn grid_from(g: GridGeometry, f: impl Fn(f64, f64) -> f64) -> ScalarGrid {
        let values = (0..g.len())
            .map(|i| {
                let p = g.center_of(i);
                f(p.x, p.y)
            })
            .collect();
        ScalarGrid {
            geometry: g,
            values,
            valid: vec![true; g.len()],
        }
    }

    #[test]
    fn normals_of_planes() {
        let g = GridGeometry::new(Vector2::new(0.0, 0.0), 1.0, 8, 8);
        let n = surface_normals(&grid_from(g, |_, _| 4.0));
        assert!(n.normals.iter().all(|v| (v - Vector3::z()).norm() < 1e-15));
        let t = 8f64.to_radians();
        let n = surface_normals(&grid_from(g, |x, _| x * t.tan()));
        let expect = Vector3::new(-t.sin(), 0.0, t.cos());
        for r in 1..7 {
            for c in 1..7 {
                assert!((n.normals[g.index(r, c)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn normals_match_finite_difference_oracle() {
        let f = |x: f64, y: f64| (0.3 * x).sin() + 0.5 * (0.2 * y).cos() + 0.01 * x * y;
        let g = GridGeometry::new(Vector2::new(0.0, 0.0), 0.05, 60, 60);
        let n = surface_normals(&grid_from(g, f));
        let h = 1e-6;
        for r in 1..59 {
            for c in 1..59 {
                let p = g.cell_center(r, c);
                let hx = (f(p.x + h, p.y) - f(p.x - h, p.y)) / (2.0 * h);
                let hy = (f(p.x, p.y + h) - f(p.x, p.y - h)) / (2.0 * h);
                let oracle = Vector3::new(-hx, -hy, 1.0).normalize();
                assert!((n.normals[g.index(r, c)] - oracle).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn angles_of_known_normals() {
        let g = GridGeometry::new(Vector2::zeros(), 1.0, 1, 3);
        let t = 8f64.to_radians();
        let q = 45f64.to_radians();
        let nm = NormalMap {
            geometry: g,
            normals: vec![
                Vector3::z(),
                Vector3::new(-t.sin(), 0.0, t.cos()),
                Vector3::new(q.sin(), 0.0, q.cos()),
            ],
            valid: vec![true; 3],
        };
        let a = angle_map(&nm);
        assert!(a.degrees[0].abs() < 1e-12);
        assert!((a.degrees[1] - 8.0).abs() < 1e-9);
        assert!((a.degrees[2] - 45.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_boundaries() {
        let g = GridGeometry::new(Vector2::zeros(), 1.0, 1, 3);
        let a = AngleMap {
            geometry: g,
            degrees: vec![10.0, 8.0, 0.0],
            valid: vec![true, true, false],
        };
        assert_eq!(threshold_safety(&a, 8.0).safe, vec![false, true, false]);
    }

    proptest! {
        #[test]
        fn raising_alpha_never_unsafes(angles in prop::collection::vec(0.0f64..90.0, 1..50), a in 0.0f64..80.0, da in 0.0f64..10.0) {
            let g = GridGeometry::new(Vector2::zeros(), 1.0, 1, angles.len());
            let m = AngleMap { geometry: g, valid: vec![true; angles.len()], degrees: angles };
            let lo = threshold_safety(&m, a);
            let hi = threshold_safety(&m, a + da);
            for (s_lo, s_hi) in lo.safe.iter().zip(&hi.safe) {
                prop_assert!(!s_lo || *s_hi);
            }
        }

        #[test]
        fn normals_are_unit(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GridGeometry::new(Vector2::zeros(), 0.7, 12, 9);
            let mut grid = grid_from(g, |_, _| 0.0);
            for i in 0..g.len() {
                grid.values[i] = rng.gen_range(-3.0..3.0);
                grid.valid[i] = rng.gen_bool(0.85);
            }
            let n = surface_normals(&grid);
            for (v, ok) in n.normals.iter().zip(&n.valid) {
                if *ok {
                    prop_assert!((v.norm() - 1.0).abs() <= 1e-9);
                    prop_assert!(v.z >= 0.0);
                }
            }
        }
    }

    fn scanned(field: &HeightField, alt: f64) -> PointCloud {
        let cfg = LidarConfig {
            rays_per_ring: 360,
            rings: 60,
            ..LidarConfig::default()
        };
        let mut store = PointCloud::default();
        for k in 0..4 {
            let cloud = crate::terrain::lidar_scan_rotated(
                field,
                &Vector3::new(0.0, 0.0, alt),
                &cfg,
                k as f64 * 0.37,
            )
            .unwrap();
            store.extend_from(&cloud);
        }
        store
    }

    fn region() -> GridGeometry {
        GridGeometry::new(Vector2::new(-20.0, -20.0), 2.0, 20, 20)
    }

    #[test]
    fn coarse_map_on_planes() {
        for (slope, expect_safe) in [(0.0, true), (20.0, false)] {
            let field = generate_terrain(&TerrainSpec {
                slope_deg: slope,
                ..TerrainSpec::flat(80.0, 0.5)
            })
            .unwrap();
            let store = scanned(&field, 60.0);
            let maps = coarse_hazard_maps(&store, &HazardParams::default(), region());
            let valid = maps.heights.valid_count();
            assert!(valid > 300);
            assert_eq!(
                maps.safety.safe_count(),
                if expect_safe { valid } else { 0 }
            );
            if expect_safe {
                assert!(maps.uncertainty.values.iter().all(|&u| u < 1e-6));
            }
        }
        let (s, _) = coarse_safety_map(&PointCloud::default(), &HazardParams::default(), region());
        assert_eq!(s.safe_count(), 0);
    }

    #[test]
    fn coarse_map_flags_a_rock() {
        let mut field = generate_terrain(&TerrainSpec::flat(80.0, 0.25)).unwrap();
        // 2 m tall cosine cap of radius 3 m centered at (5, -4)
        let (n, _) = field.dims();
        let o = field.origin();
        let cs = field.cell_size();
        let mut h = field.heights().to_vec();
        for iy in 0..n {
            for ix in 0..n {
                let d = (Vector2::new(o.x + ix as f64 * cs, o.y + iy as f64 * cs)
                    - Vector2::new(5.0, -4.0))
                .norm();
                if d < 3.0 {
                    h[iy * n + ix] += 1.0 + (std::f64::consts::PI * d / 3.0).cos();
                }
            }
        }
        field = HeightField::new(o, cs, n, n, h).unwrap();
        let store = scanned(&field, 60.0);
        let maps = coarse_hazard_maps(&store, &HazardParams::default(), region());
        let g = maps.safety.geometry;
        let mut unsafe_far = 0;
        for i in 0..g.len() {
            let p = g.center_of(i);
            let d = (p - Vector2::new(5.0, -4.0)).norm();
            let truth_steep = field.slope_deg_at(p.x, p.y).is_some_and(|s| s > 8.0);
            if truth_steep && d < 2.0 {
                assert!(!maps.safety.safe[i], "steep rock cell at {p:?} marked safe");
            }
            if !maps.safety.safe[i] && maps.heights.valid[i] && d > 3.0 + 2.0 * 2.0f64.sqrt() + 0.1
            {
                unsafe_far += 1;
            }
        }
        assert_eq!(unsafe_far, 0, "unsafe cells away from the rock");
        assert!(g.len() - maps.safety.safe_count() > 0);
    }

    #[test]
    fn local_map_resolves_small_rock() {
        let spec = TerrainSpec::flat(60.0, 0.1);
        let mut field = generate_terrain(&spec).unwrap();
        let (n, _) = field.dims();
        let (o, cs) = (field.origin(), field.cell_size());
        let mut h = field.heights().to_vec();
        let rock = Vector2::new(1.3, 0.7);
        for iy in 0..n {
            for ix in 0..n {
                let d = (Vector2::new(o.x + ix as f64 * cs, o.y + iy as f64 * cs) - rock).norm();
                if d < 0.8 {
                    h[iy * n + ix] += 0.2 * (1.0 + (std::f64::consts::PI * d / 0.8).cos());
                }
            }
        }
        field = HeightField::new(o, cs, n, n, h).unwrap();
        let cfg = LidarConfig {
            rays_per_ring: 720,
            rings: 120,
            ..LidarConfig::default()
        };
        let store = lidar_scan(&field, &Vector3::new(0.0, 0.0, 15.0), &cfg).unwrap();
        let params = HazardParams::default();
        let site = LandingSite::new(0, Vector2::new(0.0, 0.0), 4.0);
        let local = local_hazard_maps(&store, &site, &params);
        let g = local.safety.geometry;
        let mut flagged = 0;
        for i in 0..g.len() {
            let p = g.center_of(i);
            if (p - rock).norm() < 0.5 && !local.safety.safe[i] {
                flagged += 1;
            }
            // cells far from the rock and inside the site are clean
            if (p - rock).norm() > 1.8 && p.norm() < 4.0 {
                assert!(local.safety.safe[i], "spurious hazard at {p:?}");
            }
        }
        assert!(flagged > 0);
    }

    #[test]
    fn local_map_without_points_is_unsafe() {
        let store = cloud_from(&[(20.0, 0.0, 0.0), (21.0, 0.0, 0.0), (20.0, 1.0, 0.0)]);
        let params = HazardParams {
            local_buffer: 0.0,
            ..HazardParams::default()
        };
        let site = LandingSite::new(0, Vector2::zeros(), 3.0);
        assert_eq!(local_safety_map(&store, &site, &params).safe_count(), 0);
    }
}
