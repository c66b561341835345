//! CPU rasterizer: EWA projection of 3D Gaussians to the image plane,
//! global per-view depth sort, and front-to-back alpha blending of
//! color, uncertainty, and raw blend weights (the rows of matrix A).

use crate::image::{ColorImage, ScalarMap};
use crate::scene::{Camera, Primitive, Scene};
use crate::Result;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

/// 3DGS reference conventions.
pub const ALPHA_CLAMP: f64 = 0.99;
pub const ALPHA_SKIP: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_STOP: f64 = 1e-4;
pub const LOW_PASS_DILATION: f64 = 0.3;
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    /// Camera-center to primitive-mean direction, world frame.
    pub view_dir: Vector3<f64>,
    pub primitive_index: usize,
}

#[derive(Debug, Clone)]
pub struct BlendEntry {
    pub primitive_index: usize,
    /// alpha_k(x) * T_k(x)
    pub weight: f64,
    pub view_dir: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct BlendRecord {
    pub pixel_index: usize,
    /// Front-to-back order.
    pub entries: Vec<BlendEntry>,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: ColorImage,
    /// Clamped to [0,1].
    pub uncertainty: ScalarMap,
    pub uncertainty_raw: ScalarMap,
    pub final_transmittance: ScalarMap,
}

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Uncertainty assigned to uncovered background (the prior level b
    /// when the Bayesian-regularized mode is active, else 0).
    pub background_uncertainty: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { background_uncertainty: 0.0 }
    }
}

/// Perspective Jacobian at camera-space point t.
fn perspective_jacobian(cam: &Camera, t: Vector3<f64>) -> Matrix2x3<f64> {
    let z2 = t.z * t.z;
    Matrix2x3::new(
        cam.fx / t.z,
        0.0,
        -cam.fx * t.x / z2,
        0.0,
        cam.fy / t.z,
        -cam.fy * t.y / z2,
    )
}

/// Projects one primitive; `None` means culled (behind the near plane or
/// entirely off-screen at 3 sigma).
pub fn project_primitive(p: &Primitive, cam: &Camera) -> Option<Splat2D> {
    let t = cam.to_camera(p.mean);
    if t.z <= NEAR_PLANE {
        return None;
    }
    let mean2d = Vector2::new(cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy);
    let j = perspective_jacobian(cam, t);
    let m: Matrix3<f64> = cam.rotation * p.covariance() * cam.rotation.transpose();
    let mut cov2d: Matrix2<f64> = j * m * j.transpose();
    cov2d[(0, 0)] += LOW_PASS_DILATION;
    cov2d[(1, 1)] += LOW_PASS_DILATION;
    let radius = 3.0 * cov2d.symmetric_eigenvalues().max().max(0.0).sqrt();
    if mean2d.x + radius < 0.0
        || mean2d.x - radius > (cam.width - 1) as f64
        || mean2d.y + radius < 0.0
        || mean2d.y - radius > (cam.height - 1) as f64
    {
        return None;
    }
    let dir = p.mean - cam.center();
    let n = dir.norm();
    if n < 1e-12 {
        return None;
    }
    Some(Splat2D {
        mean2d,
        cov2d,
        depth: t.z,
        view_dir: dir / n,
        primitive_index: 0,
    })
}

/// Opacity of a projected splat at a pixel: a * exp(-0.5 m), clamped to
/// 0.99. Values below 1/255 are treated as zero by the blender.
pub fn alpha_at(s: &Splat2D, opacity: f64, pixel: Vector2<f64>) -> f64 {
    let det = s.cov2d[(0, 0)] * s.cov2d[(1, 1)] - s.cov2d[(0, 1)] * s.cov2d[(1, 0)];
    if det <= 0.0 {
        return 0.0;
    }
    let inv = Matrix2::new(
        s.cov2d[(1, 1)] / det,
        -s.cov2d[(0, 1)] / det,
        -s.cov2d[(1, 0)] / det,
        s.cov2d[(0, 0)] / det,
    );
    let d = pixel - s.mean2d;
    let m = (d.transpose() * inv * d)[(0, 0)];
    (opacity * (-0.5 * m).exp()).min(ALPHA_CLAMP)
}

/// Per-view prepared splat, depth-sorted.
pub(crate) struct PreparedSplat {
    pub primitive_index: usize,
    pub mean2d: Vector2<f64>,
    pub inv_cov: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
    pub uncert: f64,
    pub view_dir: Vector3<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

pub(crate) struct PreparedView {
    pub splats: Vec<PreparedSplat>,
    pub width: usize,
    pub height: usize,
}

pub(crate) fn prepare_view(scene: &Scene, cam: &Camera) -> Result<PreparedView> {
    let mut projected: Vec<(f64, usize, Splat2D)> = Vec::new();
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some(mut s) = project_primitive(p, cam) {
            s.primitive_index = i;
            projected.push((s.depth, i, s));
        }
    }
    // global per-view depth sort; ties by primitive index
    projected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut splats = Vec::with_capacity(projected.len());
    for (_, i, s) in projected {
        let p = &scene.primitives[i];
        let det = s.cov2d[(0, 0)] * s.cov2d[(1, 1)] - s.cov2d[(0, 1)] * s.cov2d[(1, 0)];
        if det <= 0.0 {
            // singular even after dilation; skip the primitive
            continue;
        }
        let inv_cov = Matrix2::new(
            s.cov2d[(1, 1)] / det,
            -s.cov2d[(0, 1)] / det,
            -s.cov2d[(1, 0)] / det,
            s.cov2d[(0, 0)] / det,
        );
        let radius = 3.0 * s.cov2d.symmetric_eigenvalues().max().max(0.0).sqrt();
        let color = p.evaluate_color(scene.sh_degree_color, s.view_dir)?;
        let uncert = p.evaluate_uncertainty(scene.sh_degree_uncert, s.view_dir)?;
        splats.push(PreparedSplat {
            primitive_index: i,
            mean2d: s.mean2d,
            inv_cov,
            opacity: p.opacity,
            color,
            uncert,
            view_dir: s.view_dir,
            x_min: s.mean2d.x - radius,
            x_max: s.mean2d.x + radius,
            y_min: s.mean2d.y - radius,
            y_max: s.mean2d.y + radius,
        })
    }
    Ok(PreparedView { splats, width: cam.width, height: cam.height })
}

/// Visits the front-to-back contributions at one pixel. The visitor
/// receives (splat index, splat, alpha, weight, transmittance-before).
/// Returns the remaining transmittance.
pub(crate) fn visit_pixel<'a>(
    view: &'a PreparedView,
    px: f64,
    py: f64,
    mut visitor: impl FnMut(usize, &'a PreparedSplat, f64, f64, f64),
) -> f64 {
    let mut t = 1.0;
    for (si, s) in view.splats.iter().enumerate() {
        if px < s.x_min || px > s.x_max || py < s.y_min || py > s.y_max {
            continue;
        }
        let dx = px - s.mean2d.x;
        let dy = py - s.mean2d.y;
        let m = s.inv_cov[(0, 0)] * dx * dx
            + (s.inv_cov[(0, 1)] + s.inv_cov[(1, 0)]) * dx * dy
            + s.inv_cov[(1, 1)] * dy * dy;
        let alpha = (s.opacity * (-0.5 * m).exp()).min(ALPHA_CLAMP);
        if alpha < ALPHA_SKIP {
            continue;
        }
        let w = alpha * t;
        visitor(si, s, alpha, w, t);
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_STOP {
            break;
        }
    }
    t
}

struct RowResult {
    color: Vec<f64>,
    uncert_raw: Vec<f64>,
    trans: Vec<f64>,
    records: Option<Vec<Vec<BlendEntry>>>,
}

fn render_impl(
    scene: &Scene,
    cam: &Camera,
    options: RenderOptions,
    record: bool,
) -> Result<(RenderOutput, Option<Vec<BlendRecord>>)> {
    crate::init_threads();
    cam.validate()?;
    let view = prepare_view(scene, cam)?;
    let (w, h) = (cam.width, cam.height);
    let bg = scene.background_color;
    let b_bg = options.background_uncertainty;

    let rows: Vec<RowResult> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut color = vec![0.0; w * 3];
            let mut uncert_raw = vec![0.0; w];
            let mut trans = vec![0.0; w];
            let mut records = if record { Some(Vec::with_capacity(w)) } else { None };
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                let mut c = [0.0f64; 3];
                let mut u = 0.0f64;
                let mut entries = if record { Some(Vec::new()) } else { None };
                let t_rem = visit_pixel(&view, px, py, |_si, s, _alpha, wgt, _t| {
                    for ch in 0..3 {
                        c[ch] += wgt * s.color[ch];
                    }
                    u += wgt * s.uncert;
                    if let Some(e) = entries.as_mut() {
                        e.push(BlendEntry {
                            primitive_index: s.primitive_index,
                            weight: wgt,
                            view_dir: s.view_dir,
                        });
                    }
                });
                for ch in 0..3 {
                    color[x * 3 + ch] = (c[ch] + bg[ch] * t_rem).clamp(0.0, 1.0);
                }
                uncert_raw[x] = u + b_bg * t_rem;
                trans[x] = t_rem;
                if let Some(r) = records.as_mut() {
                    r.push(entries.unwrap());
                }
            }
            RowResult { color, uncert_raw, trans, records }
        })
        .collect();

    let mut color = Vec::with_capacity(w * h * 3);
    let mut uncert_raw = Vec::with_capacity(w * h);
    let mut trans = Vec::with_capacity(w * h);
    let mut all_records = if record { Some(Vec::with_capacity(w * h)) } else { None };
    for (y, row) in rows.into_iter().enumerate() {
        color.extend(row.color);
        uncert_raw.extend(row.uncert_raw);
        trans.extend(row.trans);
        if let (Some(acc), Some(recs)) = (all_records.as_mut(), row.records) {
            for (x, entries) in recs.into_iter().enumerate() {
                acc.push(BlendRecord { pixel_index: y * w + x, entries });
            }
        }
    }

    let uncert_map = ScalarMap { width: w, height: h, data: uncert_raw.clone() };
    let out = RenderOutput {
        color: ColorImage { width: w, height: h, data: color },
        uncertainty: uncert_map.clamped01(),
        uncertainty_raw: ScalarMap { width: w, height: h, data: uncert_raw },
        final_transmittance: ScalarMap { width: w, height: h, data: trans },
    };
    Ok((out, all_records))
}

/// Renders color, uncertainty, and final transmittance for one view.
pub fn render(scene: &Scene, cam: &Camera, options: RenderOptions) -> Result<RenderOutput> {
    Ok(render_impl(scene, cam, options, false)?.0)
}

/// As [`render`], additionally emitting the per-pixel sparse blend rows.
pub fn render_with_weights(
    scene: &Scene,
    cam: &Camera,
    options: RenderOptions,
) -> Result<(RenderOutput, Vec<BlendRecord>)> {
    let (out, recs) = render_impl(scene, cam, options, true)?;
    Ok((out, recs.unwrap()))
}
