//! Synthetic scene and trajectory generation: seeded orbit cameras,
//! random anisotropic Gaussians, self-rendered ground-truth images,
//! controlled degradations, and change injection.

use crate::avs::farthest_point_init;
use crate::image::{ColorImage, ScalarMap};
use crate::raster::{render, RenderOptions};
use crate::scene::{Camera, Primitive, Scene};
use crate::sh::{sh_basis_size, Y00};
use crate::{Error, Result};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Degradation {
    None,
    /// Keep this fraction of the primitives (seeded choice).
    Subsample { fraction: f64 },
    /// Gaussian noise of this sigma added to every mean.
    Jitter { sigma: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeBlob {
    pub center: [f64; 3],
    pub radius: f64,
    /// true: insert a clump of new primitives; false: remove primitives
    /// whose means fall inside the blob.
    pub insert: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub primitive_count: usize,
    /// Scene bounding box is the cube [-half_extent, half_extent]^3.
    pub half_extent: f64,
    pub orbit_radius: f64,
    /// Elevation above the equator, radians.
    pub orbit_elevation: f64,
    pub view_count: usize,
    pub image_size: usize,
    pub sh_degree_color: usize,
    pub sh_degree_uncert: usize,
    pub degradation: Degradation,
    pub changes: Vec<ChangeBlob>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            primitive_count: 150,
            half_extent: 1.0,
            orbit_radius: 4.0,
            orbit_elevation: 0.4,
            view_count: 32,
            image_size: 64,
            sh_degree_color: 1,
            sh_degree_uncert: 1,
            degradation: Degradation::None,
            changes: Vec::new(),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitive_count == 0 {
            return Err(Error::Invalid("primitive_count must be positive".into()));
        }
        if self.view_count < 2 {
            return Err(Error::Invalid("need at least 2 trajectory views".into()));
        }
        if self.half_extent <= 0.0 || self.orbit_radius <= self.half_extent {
            return Err(Error::Invalid("orbit must lie outside the bounding box".into()));
        }
        Ok(())
    }
}

/// Look-at camera: +z forward toward the origin, +y down.
pub fn look_at_camera(center: Vector3<f64>, image_size: usize) -> Camera {
    let f = (-center).normalize();
    let up = Vector3::new(0.0, 0.0, 1.0);
    let mut x = f.cross(&up);
    if x.norm() < 1e-9 {
        x = Vector3::new(1.0, 0.0, 0.0);
    } else {
        x = x.normalize();
    }
    let y = f.cross(&x);
    let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), f.transpose()]);
    let s = image_size as f64;
    Camera {
        fx: s,
        fy: s,
        cx: s / 2.0,
        cy: s / 2.0,
        width: image_size,
        height: image_size,
        rotation,
        translation: -(rotation * center),
    }
}

pub fn orbit_cameras(spec: &SyntheticSpec) -> Vec<Camera> {
    let (se, ce) = spec.orbit_elevation.sin_cos();
    (0..spec.view_count)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / spec.view_count as f64;
            let center = spec.orbit_radius * Vector3::new(a.cos() * ce, a.sin() * ce, se);
            look_at_camera(center, spec.image_size)
        })
        .collect()
}

fn random_primitive(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Primitive {
    let h = spec.half_extent;
    let mean = Vector3::new(
        rng.gen_range(-h..h),
        rng.gen_range(-h..h),
        rng.gen_range(-h..h),
    );
    let q = Quaternion::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let rotation = UnitQuaternion::from_quaternion(q);
    let scale = Vector3::new(
        rng.gen_range(0.05..0.25) * h,
        rng.gen_range(0.05..0.25) * h,
        rng.gen_range(0.05..0.25) * h,
    );
    let opacity = rng.gen_range(0.3..0.9);
    let s = sh_basis_size(spec.sh_degree_color);
    let mut color_sh = vec![0.0; 3 * s];
    for c in 0..3 {
        color_sh[c * s] = rng.gen_range(0.1..0.9) / Y00;
        for i in 1..s {
            color_sh[c * s + i] = rng.gen_range(-0.25..0.25);
        }
    }
    Primitive {
        mean,
        rotation,
        scale,
        opacity,
        color_sh,
        uncert_sh: vec![0.0; sh_basis_size(spec.sh_degree_uncert)],
    }
}

/// Ground-truth scene, its orbit trajectory, and self-rendered images.
/// Deterministic per seed.
pub fn generate_scene(spec: &SyntheticSpec) -> Result<(Scene, Vec<Camera>, Vec<ColorImage>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let primitives = (0..spec.primitive_count)
        .map(|_| random_primitive(&mut rng, spec))
        .collect();
    let scene = Scene {
        primitives,
        sh_degree_color: spec.sh_degree_color,
        sh_degree_uncert: spec.sh_degree_uncert,
        background_color: Vector3::zeros(),
    };
    scene.validate()?;
    let cameras = orbit_cameras(spec);
    let images = cameras
        .iter()
        .map(|c| Ok(render(&scene, c, RenderOptions::default())?.color))
        .collect::<Result<_>>()?;
    Ok((scene, cameras, images))
}

/// The degraded copy used to initialize fitting.
pub fn degrade(scene: &Scene, degradation: &Degradation, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scene.clone();
    match degradation {
        Degradation::None => {}
        Degradation::Subsample { fraction } => {
            if !(0.0..=1.0).contains(fraction) {
                return Err(Error::Invalid("subsample fraction must be in [0,1]".into()));
            }
            let n = scene.primitives.len();
            let keep = ((n as f64 * fraction).floor() as usize).max(1);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx.truncate(keep);
            idx.sort_unstable();
            out.primitives = idx.into_iter().map(|i| scene.primitives[i].clone()).collect();
        }
        Degradation::Jitter { sigma } => {
            let normal = Normal::new(0.0, *sigma).map_err(|e| Error::Invalid(e.to_string()))?;
            for p in &mut out.primitives {
                p.mean += Vector3::new(
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                );
            }
        }
    }
    Ok(out)
}

/// Applies insert/remove blobs, returning the changed scene. Inserted
/// blobs add a seeded clump of small bright primitives.
pub fn apply_changes(scene: &Scene, blobs: &[ChangeBlob], seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = scene.clone();
    let s = sh_basis_size(out.sh_degree_color);
    for blob in blobs {
        let c = Vector3::from_column_slice(&blob.center);
        if blob.insert {
            for _ in 0..10 {
                let offset = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ) * (blob.radius * 0.7);
                let mut color_sh = vec![0.0; 3 * s];
                for ch in 0..3 {
                    color_sh[ch * s] = rng.gen_range(0.6..1.0) / Y00;
                }
                out.primitives.push(Primitive {
                    mean: c + offset,
                    rotation: UnitQuaternion::identity(),
                    scale: Vector3::repeat(blob.radius * 0.25),
                    opacity: 0.9,
                    color_sh,
                    uncert_sh: vec![0.0; sh_basis_size(out.sh_degree_uncert)],
                });
            }
        } else {
            out.primitives.retain(|p| (p.mean - c).norm() > blob.radius);
        }
    }
    out
}

/// Per-view ground-truth change mask: 1 where the renders of the two
/// scenes differ by more than `threshold` in summed absolute RGB.
pub fn change_mask(
    before: &Scene,
    after: &Scene,
    cam: &Camera,
    threshold: f64,
) -> Result<ScalarMap> {
    let a = render(before, cam, RenderOptions::default())?.color;
    let b = render(after, cam, RenderOptions::default())?.color;
    let mut mask = ScalarMap::zeros(cam.width, cam.height);
    for i in 0..mask.data.len() {
        let d: f64 = (0..3).map(|c| (a.data[i * 3 + c] - b.data[i * 3 + c]).abs()).sum();
        if d > threshold {
            mask.data[i] = 1.0;
        }
    }
    Ok(mask)
}

/// Sparse protocol: k farthest-point training views, every 8th of the
/// remaining pool held out for testing.
pub fn make_sparse_split(cameras: &[Camera], k: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if cameras.len() < k + 1 {
        return Err(Error::Invalid(format!(
            "need at least {} cameras for a {k}-view sparse split",
            k + 1
        )));
    }
    let train = farthest_point_init(cameras, k)?;
    let test: Vec<usize> = (0..cameras.len())
        .filter(|i| !train.contains(i))
        .step_by(8)
        .collect();
    Ok((train, test))
}
