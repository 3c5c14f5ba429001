//! Synthetic terrain and a downward-scanning LiDAR.
//!
//! A [`HeightField`] stores heights on a regular node lattice and is evaluated
//! with bilinear interpolation. [`generate_terrain`] builds one from a
//! [`TerrainSpec`] (tilted base plane, cosine-cap rocks and craters, a few
//! random plane waves as band-limited noise). [`lidar_scan`] casts rays in
//! concentric rings about nadir and returns first hits.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("invalid terrain configuration: {0}")]
    InvalidSpec(String),
    #[error("invalid lidar configuration: {0}")]
    InvalidLidar(String),
    #[error("sensor at altitude {altitude:.3} m is below the terrain surface ({surface:.3} m)")]
    SensorBelowTerrain { altitude: f64, surface: f64 },
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, what: &str) -> Result<(), TerrainError> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo < 0.0 || self.lo > self.hi {
            return Err(TerrainError::InvalidSpec(format!(
                "{what} range must satisfy 0 <= lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }
}

/// Regular lattice of height samples. Node `(ix, iy)` sits at
/// `origin + (ix, iy) * cell_size`; storage is row-major in `iy`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    origin: Vector2<f64>,
    cell_size: f64,
    nx: usize,
    ny: usize,
    heights: Vec<f64>,
    max_height: f64,
    min_height: f64,
}

impl HeightField {
    pub fn new(
        origin: Vector2<f64>,
        cell_size: f64,
        nx: usize,
        ny: usize,
        heights: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(TerrainError::InvalidSpec(format!(
                "cell_size must be > 0, got {cell_size}"
            )));
        }
        if nx < 2 || ny < 2 || heights.len() != nx * ny {
            return Err(TerrainError::InvalidSpec(format!(
                "height grid {nx}x{ny} does not match {} samples (need at least 2x2)",
                heights.len()
            )));
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(TerrainError::InvalidSpec("non-finite height sample".into()));
        }
        let max_height = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_height = heights.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            origin,
            cell_size,
            nx,
            ny,
            heights,
            max_height,
            min_height,
        })
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// Node counts `(nx, ny)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn min_height(&self) -> f64 {
        self.min_height
    }

    /// Horizontal extent `(min corner, max corner)`.
    pub fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let span = Vector2::new((self.nx - 1) as f64, (self.ny - 1) as f64) * self.cell_size;
        (self.origin, self.origin + span)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.bounds();
        x >= lo.x && x <= hi.x && y >= lo.y && y <= hi.y
    }

    /// Bilinear height, `None` outside the lattice.
    pub fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        if !self.contains(x, y) {
            return None;
        }
        let (ix, iy, fx, fy) = self.locate(x, y);
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        Some(
            h00 * (1.0 - fx) * (1.0 - fy)
                + h10 * fx * (1.0 - fy)
                + h01 * (1.0 - fx) * fy
                + h11 * fx * fy,
        )
    }

    /// Gradient `(dh/dx, dh/dy)` of the bilinear surface, `None` outside.
    pub fn gradient_at(&self, x: f64, y: f64) -> Option<Vector2<f64>> {
        if !self.contains(x, y) {
            return None;
        }
        let (ix, iy, fx, fy) = self.locate(x, y);
        let h00 = self.node(ix, iy);
        let h10 = self.node(ix + 1, iy);
        let h01 = self.node(ix, iy + 1);
        let h11 = self.node(ix + 1, iy + 1);
        let dx = ((h10 - h00) * (1.0 - fy) + (h11 - h01) * fy) / self.cell_size;
        let dy = ((h01 - h00) * (1.0 - fx) + (h11 - h10) * fx) / self.cell_size;
        Some(Vector2::new(dx, dy))
    }

    /// Inclination of the surface from horizontal, degrees.
    pub fn slope_deg_at(&self, x: f64, y: f64) -> Option<f64> {
        self.gradient_at(x, y).map(|g| g.norm().atan().to_degrees())
    }

    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let gx = (x - self.origin.x) / self.cell_size;
        let gy = (y - self.origin.y) / self.cell_size;
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iy = (gy.floor() as usize).min(self.ny - 2);
        (ix, iy, gx - ix as f64, gy - iy as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockField {
    pub count: usize,
    /// Footprint radius (m).
    pub radius: Span,
    pub height: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CraterField {
    pub count: usize,
    pub radius: Span,
    pub depth: Span,
}

/// Parameters for [`generate_terrain`]. The field is a square of side
/// `extent` centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainSpec {
    pub extent: f64,
    pub cell_size: f64,
    /// Inclination of the base plane, rising along `e1`.
    pub slope_deg: f64,
    pub rocks: RockField,
    pub craters: CraterField,
    pub noise_amplitude: f64,
    /// Shortest wavelength of the noise components (m).
    pub noise_wavelength: f64,
    pub seed: u64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            extent: 120.0,
            cell_size: 0.25,
            slope_deg: 0.0,
            rocks: RockField {
                count: 60,
                radius: Span::new(0.6, 3.0),
                height: Span::new(0.3, 2.0),
            },
            craters: CraterField {
                count: 4,
                radius: Span::new(4.0, 10.0),
                depth: Span::new(0.5, 2.0),
            },
            noise_amplitude: 0.05,
            noise_wavelength: 10.0,
            seed: 7,
        }
    }
}

impl TerrainSpec {
    /// Flat, featureless field.
    pub fn flat(extent: f64, cell_size: f64) -> Self {
        Self {
            extent,
            cell_size,
            slope_deg: 0.0,
            rocks: RockField {
                count: 0,
                radius: Span::new(0.0, 0.0),
                height: Span::new(0.0, 0.0),
            },
            craters: CraterField {
                count: 0,
                radius: Span::new(0.0, 0.0),
                depth: Span::new(0.0, 0.0),
            },
            noise_amplitude: 0.0,
            noise_wavelength: 10.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), TerrainError> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(TerrainError::InvalidSpec(format!(
                "extent must be > 0, got {}",
                self.extent
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size <= self.extent) {
            return Err(TerrainError::InvalidSpec(format!(
                "cell_size must lie in (0, extent], got {}",
                self.cell_size
            )));
        }
        if !(0.0..90.0).contains(&self.slope_deg) {
            return Err(TerrainError::InvalidSpec(format!(
                "slope_deg must lie in [0, 90), got {}",
                self.slope_deg
            )));
        }
        self.rocks.radius.validate("rock radius")?;
        self.rocks.height.validate("rock height")?;
        self.craters.radius.validate("crater radius")?;
        self.craters.depth.validate("crater depth")?;
        if !(self.noise_amplitude >= 0.0 && self.noise_amplitude.is_finite()) {
            return Err(TerrainError::InvalidSpec(
                "noise_amplitude must be >= 0".into(),
            ));
        }
        if self.noise_amplitude > 0.0 && !(self.noise_wavelength > 0.0) {
            return Err(TerrainError::InvalidSpec(
                "noise_wavelength must be > 0".into(),
            ));
        }
        Ok(())
    }
}

const NOISE_WAVES: usize = 12;

/// Deterministic terrain synthesis; identical specs give bit-identical fields.
pub fn generate_terrain(spec: &TerrainSpec) -> Result<HeightField, TerrainError> {
    spec.validate()?;
    let n = (spec.extent / spec.cell_size).round() as usize + 1;
    let cs = spec.extent / (n - 1) as f64;
    let origin = Vector2::new(-spec.extent / 2.0, -spec.extent / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let slope = spec.slope_deg.to_radians().tan();
    let mut heights = vec![0.0; n * n];
    for iy in 0..n {
        for ix in 0..n {
            heights[iy * n + ix] = slope * (ix as f64 * cs);
        }
    }

    let mut stamp = |rng: &mut ChaCha8Rng, radius: Span, amp: Span, sign: f64| {
        let cx = rng.gen_range(origin.x..=origin.x + spec.extent);
        let cy = rng.gen_range(origin.y..=origin.y + spec.extent);
        let r = radius.sample(rng);
        let a = amp.sample(rng) * sign;
        if r <= 0.0 || a == 0.0 {
            return;
        }
        let lo_x = (((cx - r - origin.x) / cs).floor().max(0.0)) as usize;
        let hi_x = (((cx + r - origin.x) / cs).ceil() as usize).min(n - 1);
        let lo_y = (((cy - r - origin.y) / cs).floor().max(0.0)) as usize;
        let hi_y = (((cy + r - origin.y) / cs).ceil() as usize).min(n - 1);
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                let dx = origin.x + ix as f64 * cs - cx;
                let dy = origin.y + iy as f64 * cs - cy;
                let d = (dx * dx + dy * dy).sqrt();
                if d < r {
                    heights[iy * n + ix] += a * 0.5 * (1.0 + (PI * d / r).cos());
                }
            }
        }
    };
    for _ in 0..spec.craters.count {
        stamp(&mut rng, spec.craters.radius, spec.craters.depth, -1.0);
    }
    for _ in 0..spec.rocks.count {
        stamp(&mut rng, spec.rocks.radius, spec.rocks.height, 1.0);
    }

    if spec.noise_amplitude > 0.0 {
        // Sum of plane waves, each with variance a^2/2, scaled so the total std is the amplitude.
        let a = spec.noise_amplitude * (2.0 / NOISE_WAVES as f64).sqrt();
        let waves: Vec<(f64, f64, f64)> = (0..NOISE_WAVES)
            .map(|_| {
                let lambda = rng.gen_range(spec.noise_wavelength..=4.0 * spec.noise_wavelength);
                let dir = rng.gen_range(0.0..2.0 * PI);
                let phase = rng.gen_range(0.0..2.0 * PI);
                let k = 2.0 * PI / lambda;
                (k * dir.cos(), k * dir.sin(), phase)
            })
            .collect();
        for iy in 0..n {
            for ix in 0..n {
                let x = origin.x + ix as f64 * cs;
                let y = origin.y + iy as f64 * cs;
                heights[iy * n + ix] += waves
                    .iter()
                    .map(|(kx, ky, ph)| a * (kx * x + ky * y + ph).sin())
                    .sum::<f64>();
            }
        }
    }

    HeightField::new(origin, cs, n, n, heights)
}

/// Unordered collection of surface points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.points.iter()
    }

    /// Appends `other` in order, without deduplication.
    pub fn extend_from(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Vector3<f64>>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// Concatenation `store ++ new`.
pub fn accumulate(store: &PointCloud, new: &PointCloud) -> PointCloud {
    let mut out = PointCloud {
        points: Vec::with_capacity(store.len() + new.len()),
    };
    out.extend_from(store);
    out.extend_from(new);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub max_range: f64,
    /// Half-angle of the scan cone about nadir.
    pub radial_fov_deg: f64,
    pub rays_per_ring: usize,
    pub rings: usize,
    /// Scans per planner step.
    pub rate: usize,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            max_range: 500.0,
            radial_fov_deg: 30.0,
            rays_per_ring: 180,
            rings: 24,
            rate: 1,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), TerrainError> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(TerrainError::InvalidLidar(format!(
                "max_range must be > 0, got {}",
                self.max_range
            )));
        }
        if !(self.radial_fov_deg > 0.0 && self.radial_fov_deg < 90.0) {
            return Err(TerrainError::InvalidLidar(format!(
                "radial_fov_deg must lie in (0, 90), got {}",
                self.radial_fov_deg
            )));
        }
        if self.rays_per_ring == 0 || self.rings == 0 {
            return Err(TerrainError::InvalidLidar(
                "rays_per_ring and rings must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Unit ray directions: the nadir ray, then `rings` cones out to the FOV edge.
    pub fn ray_directions(&self, azimuth_offset: f64) -> Vec<Vector3<f64>> {
        let mut dirs = Vec::with_capacity(1 + self.rings * self.rays_per_ring);
        dirs.push(Vector3::new(0.0, 0.0, -1.0));
        let fov = self.radial_fov_deg.to_radians();
        for ring in 1..=self.rings {
            let off = fov * ring as f64 / self.rings as f64;
            // stagger alternate rings by half a ray
            let stagger = if ring % 2 == 0 { 0.5 } else { 0.0 };
            for k in 0..self.rays_per_ring {
                let az =
                    azimuth_offset + 2.0 * PI * (k as f64 + stagger) / self.rays_per_ring as f64;
                dirs.push(Vector3::new(
                    off.sin() * az.cos(),
                    off.sin() * az.sin(),
                    -off.cos(),
                ));
            }
        }
        dirs
    }
}

const HIT_TOLERANCE: f64 = 1e-6;

/// One LiDAR sweep from `position`.
pub fn lidar_scan(
    field: &HeightField,
    position: &Vector3<f64>,
    cfg: &LidarConfig,
) -> Result<PointCloud, TerrainError> {
    lidar_scan_rotated(field, position, cfg, 0.0)
}

/// [`lidar_scan`] with the ring pattern rotated by `azimuth_offset` radians.
pub fn lidar_scan_rotated(
    field: &HeightField,
    position: &Vector3<f64>,
    cfg: &LidarConfig,
    azimuth_offset: f64,
) -> Result<PointCloud, TerrainError> {
    cfg.validate()?;
    if let Some(surface) = field.height_at(position.x, position.y) {
        if position.z <= surface {
            return Err(TerrainError::SensorBelowTerrain {
                altitude: position.z,
                surface,
            });
        }
    }
    Ok(cfg
        .ray_directions(azimuth_offset)
        .iter()
        .filter_map(|dir| cast_ray(field, position, dir, cfg.max_range))
        .collect())
}

/// First intersection of the ray with the surface, if within `max_range`.
pub fn cast_ray(
    field: &HeightField,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    max_range: f64,
) -> Option<Vector3<f64>> {
    let down = -dir.z;
    if down <= 0.0 {
        return None;
    }
    // Parameter window: above max height nothing can be hit, below min height everything is.
    let mut t0 = ((origin.z - field.max_height()) / down).max(0.0);
    let mut t1 = ((origin.z - field.min_height()) / down).min(max_range);
    let (lo, hi) = field.bounds();
    for (o, d, l, h) in [(origin.x, dir.x, lo.x, hi.x), (origin.y, dir.y, lo.y, hi.y)] {
        if d.abs() < 1e-15 {
            if o < l || o > h {
                return None;
            }
        } else {
            let (a, b) = ((l - o) / d, (h - o) / d);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if t0 > t1 {
        return None;
    }

    let gap = |t: f64| -> Option<f64> {
        let p = origin + dir * t;
        field.height_at(p.x, p.y).map(|h| p.z - h)
    };
    let step = field.cell_size() / 2.0;
    let mut prev = t0;
    if gap(prev)? <= 0.0 {
        return surface_point(field, origin, dir, prev, max_range);
    }
    loop {
        let t = (prev + step).min(t1);
        let g = gap(t)?;
        if g <= 0.0 {
            let (mut a, mut b) = (prev, t);
            while b - a > HIT_TOLERANCE {
                let m = 0.5 * (a + b);
                if gap(m)? > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return surface_point(field, origin, dir, b, max_range);
        }
        if t >= t1 {
            return None;
        }
        prev = t;
    }
}

fn surface_point(
    field: &HeightField,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    t: f64,
    max_range: f64,
) -> Option<Vector3<f64>> {
    let p = origin + dir * t;
    let h = field.height_at(p.x, p.y)?;
    let hit = Vector3::new(p.x, p.y, h);
    ((hit - origin).norm() <= max_range).then_some(hit)
}
