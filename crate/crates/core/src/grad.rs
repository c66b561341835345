//! Analytic backward pass through the rasterizer for the photometric
//! fitter. Given dLoss/d(output color image), accumulates gradients for
//! the raw optimizer parameterization: mean, unnormalized quaternion,
//! log-scale, opacity logit, and color SH coefficients.
//!
//! Geometry that is culled or skipped in the forward pass receives zero
//! gradient, and the traversal mirrors the forward blending exactly
//! (same sort, clamp, skip, and early-stop rules).

use crate::image::ColorImage;
use crate::raster::{self, PreparedView};
use crate::scene::{Camera, Scene};
use crate::sh;
use crate::Result;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct SceneGrads {
    pub mean: Vec<Vector3<f64>>,
    /// w, i, j, k — tangent-projected at the current unit quaternion.
    pub quat: Vec<Vector4<f64>>,
    pub log_scale: Vec<Vector3<f64>>,
    pub opacity_logit: Vec<f64>,
    /// Per primitive, 3*s channel-major.
    pub color_sh: Vec<Vec<f64>>,
}

impl SceneGrads {
    pub fn zeros(scene: &Scene) -> Self {
        let k = scene.primitives.len();
        let s3 = 3 * scene.color_basis_size();
        Self {
            mean: vec![Vector3::zeros(); k],
            quat: vec![Vector4::zeros(); k],
            log_scale: vec![Vector3::zeros(); k],
            opacity_logit: vec![0.0; k],
            color_sh: vec![vec![0.0; s3]; k],
        }
    }
}

/// Per-splat pixel-space accumulators.
struct SplatAccum {
    g_mean2d: Vec<Vector2<f64>>,
    g_cov2d: Vec<Matrix2<f64>>,
    /// dLoss / d(post-activation opacity a)
    g_opacity: Vec<f64>,
    /// per channel: sum over pixels of weight * pixel grad
    g_color: Vec<[f64; 3]>,
}

impl SplatAccum {
    fn zeros(n: usize) -> Self {
        Self {
            g_mean2d: vec![Vector2::zeros(); n],
            g_cov2d: vec![Matrix2::zeros(); n],
            g_opacity: vec![0.0; n],
            g_color: vec![[0.0; 3]; n],
        }
    }

    fn merge(&mut self, other: &Self) {
        for i in 0..self.g_opacity.len() {
            self.g_mean2d[i] += other.g_mean2d[i];
            self.g_cov2d[i] += other.g_cov2d[i];
            self.g_opacity[i] += other.g_opacity[i];
            for c in 0..3 {
                self.g_color[i][c] += other.g_color[i][c];
            }
        }
    }
}

/// Clamp pass-through rule: inside (0,1) the gradient flows; at a
/// saturated bound it flows only if the update direction re-enters the
/// interval.
fn clamp_gate(pre: f64, g: f64) -> f64 {
    if pre > 0.0 && pre < 1.0 {
        g
    } else if pre <= 0.0 && g < 0.0 {
        g
    } else if pre >= 1.0 && g > 0.0 {
        g
    } else {
        0.0
    }
}

fn accumulate_pixels(
    view: &PreparedView,
    scene: &Scene,
    grad_image: &ColorImage,
) -> SplatAccum {
    let n = view.splats.len();
    let (w, h) = (view.width, view.height);
    let bg = scene.background_color;
    let chunk = 8usize;
    let bands: Vec<SplatAccum> = (0..h.div_ceil(chunk))
        .into_par_iter()
        .map(|band| {
            let mut acc = SplatAccum::zeros(n);
            let mut contribs: Vec<(usize, f64, f64, f64)> = Vec::new();
            for y in band * chunk..((band + 1) * chunk).min(h) {
                for x in 0..w {
                    let (px, py) = (x as f64, y as f64);
                    contribs.clear();
                    let t_rem = raster::visit_pixel(view, px, py, |si, _s, alpha, wgt, t| {
                        contribs.push((si, alpha, wgt, t));
                    });
                    if contribs.is_empty() {
                        continue;
                    }
                    // pre-clamp pixel color for the clamp gate
                    let mut pre = [bg.x * t_rem, bg.y * t_rem, bg.z * t_rem];
                    for &(si, _, wgt, _) in &contribs {
                        for c in 0..3 {
                            pre[c] += wgt * view.splats[si].color[c];
                        }
                    }
                    let pix = (y * w + x) * 3;
                    let mut g = [0.0; 3];
                    for c in 0..3 {
                        g[c] = clamp_gate(pre[c], grad_image.data[pix + c]);
                    }
                    if g == [0.0; 3] {
                        continue;
                    }
                    // suffix S[c] = sum_{l>k} c_l w_l + bg * T_rem
                    let mut suffix = [bg.x * t_rem, bg.y * t_rem, bg.z * t_rem];
                    for &(si, alpha, wgt, t_before) in contribs.iter().rev() {
                        let s = &view.splats[si];
                        for c in 0..3 {
                            acc.g_color[si][c] += wgt * g[c];
                        }
                        let mut d_alpha = 0.0;
                        for c in 0..3 {
                            d_alpha +=
                                g[c] * (s.color[c] * t_before - suffix[c] / (1.0 - alpha));
                        }
                        for c in 0..3 {
                            suffix[c] += s.color[c] * wgt;
                        }
                        if alpha >= raster::ALPHA_CLAMP {
                            continue; // clamped: no gradient into the Gaussian
                        }
                        acc.g_opacity[si] += d_alpha * alpha / s.opacity;
                        let delta = Vector2::new(px - s.mean2d.x, py - s.mean2d.y);
                        let sd = s.inv_cov * delta;
                        acc.g_mean2d[si] += d_alpha * alpha * sd;
                        acc.g_cov2d[si] += (0.5 * d_alpha * alpha) * (sd * sd.transpose());
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = SplatAccum::zeros(n);
    for b in &bands {
        total.merge(b);
    }
    total
}

/// dR/dq for the literal quaternion rotation formula, q = (w,x,y,z).
fn rotation_jacobians(q: Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    [
        Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0),
        Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x),
        Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y),
        Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0),
    ]
}

/// Accumulates dLoss/d(raw parameters) for `sum_pixels <grad_image, C>`
/// where C is the rendered (clamped) color image of this view.
pub fn backward_color(
    scene: &Scene,
    cam: &Camera,
    grad_image: &ColorImage,
    grads: &mut SceneGrads,
) -> Result<()> {
    crate::init_threads();
    let view = raster::prepare_view(scene, cam)?;
    let acc = accumulate_pixels(&view, scene, grad_image);
    let deg_c = scene.sh_degree_color;
    let s = scene.color_basis_size();
    let cam_center = cam.center();
    let rot_wc = cam.rotation;

    for (si, splat) in view.splats.iter().enumerate() {
        let pi = splat.primitive_index;
        let p = &scene.primitives[pi];

        // ---- color SH and view-direction dependence
        let (basis, basis_grads) = sh::sh_evaluate_with_grad(deg_c, splat.view_dir)?;
        let mut g_dir = Vector3::zeros();
        for c in 0..3 {
            let a = acc.g_color[si][c];
            if a == 0.0 {
                continue;
            }
            for i in 0..s {
                grads.color_sh[pi][c * s + i] += a * basis[i];
                g_dir += a * p.color_sh[c * s + i] * basis_grads[i];
            }
        }
        // project through normalization of (mean - camera center)
        let d_raw = p.mean - cam_center;
        let norm = d_raw.norm();
        let d_unit = splat.view_dir;
        grads.mean[pi] += (g_dir - d_unit * d_unit.dot(&g_dir)) / norm;

        // ---- opacity logit
        let a = p.opacity;
        grads.opacity_logit[pi] += acc.g_opacity[si] * a * (1.0 - a);

        let gm2 = acc.g_mean2d[si];
        let gcov = acc.g_cov2d[si];
        if gm2 == Vector2::zeros() && gcov == Matrix2::zeros() {
            continue;
        }

        // ---- projection chain
        let t = cam.to_camera(p.mean);
        let z2 = t.z * t.z;
        let z3 = z2 * t.z;
        let j = Matrix2x3::new(
            cam.fx / t.z,
            0.0,
            -cam.fx * t.x / z2,
            0.0,
            cam.fy / t.z,
            -cam.fy * t.y / z2,
        );
        let sigma = p.covariance();
        let m: Matrix3<f64> = rot_wc * sigma * rot_wc.transpose();

        let mut gt: Vector3<f64> = j.transpose() * gm2;
        // cov2d = J M J^T + dilation; gJ = 2 gcov J M
        let gj: Matrix2x3<f64> = 2.0 * gcov * j * m;
        gt.x += gj[(0, 2)] * (-cam.fx / z2);
        gt.y += gj[(1, 2)] * (-cam.fy / z2);
        gt.z += gj[(0, 0)] * (-cam.fx / z2)
            + gj[(0, 2)] * (2.0 * cam.fx * t.x / z3)
            + gj[(1, 1)] * (-cam.fy / z2)
            + gj[(1, 2)] * (2.0 * cam.fy * t.y / z3);
        grads.mean[pi] += rot_wc.transpose() * gt;

        // gSigma (world) from cov2d
        let gm: Matrix3<f64> = j.transpose() * gcov * j;
        let g_sigma: Matrix3<f64> = rot_wc.transpose() * gm * rot_wc;

        // Sigma = Q D Q^T with D = diag(scale^2)
        let q_rot = p.rotation.to_rotation_matrix();
        let qm = q_rot.matrix();
        let d = Matrix3::from_diagonal(&p.scale.map(|v| v * v));
        let gq: Matrix3<f64> = 2.0 * g_sigma * qm * d;
        let inner = qm.transpose() * g_sigma * qm;
        for axis in 0..3 {
            let sv = p.scale[axis];
            // dL/d log s = dL/ds * s = 2 s^2 * inner_ii ... times s again
            grads.log_scale[pi][axis] += 2.0 * sv * inner[(axis, axis)] * sv;
        }
        let quat = p.rotation.quaternion();
        let qv = Vector4::new(quat.w, quat.i, quat.j, quat.k);
        let jr = rotation_jacobians(qv);
        let mut gq_vec = Vector4::zeros();
        for (k, jk) in jr.iter().enumerate() {
            gq_vec[k] = gq.component_mul(jk).sum();
        }
        // tangent projection at the unit quaternion
        gq_vec -= qv * qv.dot(&gq_vec);
        grads.quat[pi] += gq_vec;
    }
    Ok(())
}
