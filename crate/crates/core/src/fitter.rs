//! Minimal photometric 3DGS fitter. Optimizes geometry and appearance
//! of a fixed-size primitive set (no densification) with Adam over the
//! raw parameterization: mean, unnormalized quaternion, log-scale,
//! opacity logit, color SH.

use crate::grad::{self, SceneGrads};
use crate::image::ColorImage;
use crate::photometric::{self, ssim_backward_channel};
use crate::raster::{render, RenderOptions};
use crate::scene::{Camera, Primitive, Scene};
use crate::{Error, Result};
use nalgebra::{Quaternion, UnitQuaternion, Vector3, Vector4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub iterations: usize,
    pub lr_mean: f64,
    pub lr_rotation: f64,
    pub lr_scale: f64,
    pub lr_opacity: f64,
    pub lr_color: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            lr_mean: 2e-3,
            lr_rotation: 2e-3,
            lr_scale: 5e-3,
            lr_opacity: 2.5e-2,
            lr_color: 1e-2,
            lambda: photometric::DEFAULT_LAMBDA,
            seed: 0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Raw optimizer state for one scene.
#[derive(Debug, Clone)]
pub struct ParamState {
    pub mean: Vec<Vector3<f64>>,
    pub quat: Vec<Vector4<f64>>,
    pub log_scale: Vec<Vector3<f64>>,
    pub opacity_logit: Vec<f64>,
    pub color_sh: Vec<Vec<f64>>,
    sh_degree_color: usize,
    sh_degree_uncert: usize,
    background: Vector3<f64>,
    uncert_sh: Vec<Vec<f64>>,
}

impl ParamState {
    pub fn from_scene(scene: &Scene) -> Self {
        Self {
            mean: scene.primitives.iter().map(|p| p.mean).collect(),
            quat: scene
                .primitives
                .iter()
                .map(|p| {
                    let q = p.rotation.quaternion();
                    Vector4::new(q.w, q.i, q.j, q.k)
                })
                .collect(),
            log_scale: scene
                .primitives
                .iter()
                .map(|p| p.scale.map(|s| s.ln()))
                .collect(),
            opacity_logit: scene
                .primitives
                .iter()
                .map(|p| logit(p.opacity.clamp(1e-6, 1.0 - 1e-6)))
                .collect(),
            color_sh: scene.primitives.iter().map(|p| p.color_sh.clone()).collect(),
            sh_degree_color: scene.sh_degree_color,
            sh_degree_uncert: scene.sh_degree_uncert,
            background: scene.background_color,
            uncert_sh: scene.primitives.iter().map(|p| p.uncert_sh.clone()).collect(),
        }
    }

    /// Builds a valid scene: quaternions normalized, scales exp'd,
    /// opacities squashed into (0,1).
    pub fn materialize(&self) -> Scene {
        let primitives = (0..self.mean.len())
            .map(|i| {
                let q = self.quat[i];
                Primitive {
                    mean: self.mean[i],
                    rotation: UnitQuaternion::from_quaternion(Quaternion::new(
                        q[0], q[1], q[2], q[3],
                    )),
                    scale: self.log_scale[i].map(|v| v.exp()),
                    opacity: sigmoid(self.opacity_logit[i]).clamp(1e-9, 1.0 - 1e-9),
                    color_sh: self.color_sh[i].clone(),
                    uncert_sh: self.uncert_sh[i].clone(),
                }
            })
            .collect();
        Scene {
            primitives,
            sh_degree_color: self.sh_degree_color,
            sh_degree_uncert: self.sh_degree_uncert,
            background_color: self.background,
        }
    }
}

/// Mean combined residual of one view.
pub fn photometric_loss(scene: &Scene, cam: &Camera, gt: &ColorImage, lambda: f64) -> Result<f64> {
    let out = render(scene, cam, RenderOptions::default())?;
    Ok(photometric::residual_map(&out.color, gt, lambda)?.map.mean())
}

/// Loss and analytic gradients for one view.
pub fn photometric_loss_and_grad(
    scene: &Scene,
    cam: &Camera,
    gt: &ColorImage,
    lambda: f64,
) -> Result<(f64, SceneGrads)> {
    let out = render(scene, cam, RenderOptions::default())?;
    let rendered = &out.color;
    let res = photometric::residual_map(rendered, gt, lambda)?;
    let loss = res.map.mean();
    let n = (rendered.width * rendered.height) as f64;

    // dLoss/d(rendered image)
    let mut grad_img = ColorImage::zeros(rendered.width, rendered.height);
    // L1 part
    for i in 0..rendered.data.len() {
        grad_img.data[i] = (1.0 - lambda) / (3.0 * n) * (rendered.data[i] - gt.data[i]).signum();
    }
    // DSSIM part: upstream on the channel-averaged SSIM, gated by the
    // dssim clamp
    if lambda > 0.0 {
        let ssim = photometric::ssim_map(rendered, gt)?;
        let upstream = ssim.map(|s| {
            let ds = 1.0 - s;
            if ds > 0.0 && ds < 1.0 {
                -lambda / (3.0 * n)
            } else {
                0.0
            }
        });
        for c in 0..3 {
            let gc = ssim_backward_channel(&rendered.channel(c), &gt.channel(c), &upstream);
            for (i, &g) in gc.data.iter().enumerate() {
                grad_img.data[i * 3 + c] += g;
            }
        }
    }

    let mut grads = SceneGrads::zeros(scene);
    grad::backward_color(scene, cam, &grad_img, &mut grads)?;
    Ok((loss, grads))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t as i32);
        let c2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grads[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

pub struct FitResult {
    pub scene: Scene,
    /// Per-iteration training loss of the visited view.
    pub loss_history: Vec<f64>,
}

/// Photometric fit with a fixed primitive count. The training view order
/// is a seeded shuffled cycle.
pub fn fit_base(scene_init: &Scene, views: &[(Camera, ColorImage)], cfg: &FitConfig) -> Result<FitResult> {
    if views.is_empty() {
        return Err(Error::Invalid("fit_base requires at least one view".into()));
    }
    if scene_init.primitives.is_empty() {
        return Err(Error::Invalid("fit_base requires a non-empty scene".into()));
    }
    scene_init.validate()?;
    let k = scene_init.primitives.len();
    let s3 = 3 * scene_init.color_basis_size();
    let mut state = ParamState::from_scene(scene_init);
    let mut opt_mean = Adam::new(3 * k);
    let mut opt_quat = Adam::new(4 * k);
    let mut opt_scale = Adam::new(3 * k);
    let mut opt_opacity = Adam::new(k);
    let mut opt_color = Adam::new(s3 * k);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;

    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (cam, gt) = &views[order[cursor]];
        cursor += 1;

        let scene = state.materialize();
        let (loss, grads) = photometric_loss_and_grad(&scene, cam, gt, cfg.lambda)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite training loss {loss}")));
        }
        history.push(loss);

        let flat_mean: Vec<f64> = grads.mean.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let flat_quat: Vec<f64> = grads.quat.iter().flat_map(|v| [v[0], v[1], v[2], v[3]]).collect();
        let flat_scale: Vec<f64> = grads.log_scale.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        let flat_color: Vec<f64> = grads.color_sh.iter().flatten().copied().collect();

        let mut mean_params: Vec<f64> = state.mean.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        opt_mean.step(&mut mean_params, &flat_mean, cfg.lr_mean);
        for (i, ch) in mean_params.chunks_exact(3).enumerate() {
            state.mean[i] = Vector3::new(ch[0], ch[1], ch[2]);
        }

        let mut quat_params: Vec<f64> = state.quat.iter().flat_map(|v| [v[0], v[1], v[2], v[3]]).collect();
        opt_quat.step(&mut quat_params, &flat_quat, cfg.lr_rotation);
        for (i, ch) in quat_params.chunks_exact(4).enumerate() {
            let v = Vector4::new(ch[0], ch[1], ch[2], ch[3]);
            state.quat[i] = v / v.norm(); // re-project to the constraint set
        }

        let mut scale_params: Vec<f64> = state.log_scale.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
        opt_scale.step(&mut scale_params, &flat_scale, cfg.lr_scale);
        for (i, ch) in scale_params.chunks_exact(3).enumerate() {
            state.log_scale[i] = Vector3::new(ch[0], ch[1], ch[2]);
        }

        opt_opacity.step(&mut state.opacity_logit, &grads.opacity_logit, cfg.lr_opacity);

        let mut color_params: Vec<f64> = state.color_sh.iter().flatten().copied().collect();
        opt_color.step(&mut color_params, &flat_color, cfg.lr_color);
        for (i, ch) in color_params.chunks_exact(s3).enumerate() {
            state.color_sh[i].copy_from_slice(ch);
        }
    }

    let scene = state.materialize();
    scene.validate()?;
    Ok(FitResult { scene, loss_history: history })
}

/// One raw parameter coordinate for the finite-difference check.
#[derive(Debug, Clone, Copy)]
pub enum ParamCoord {
    Mean { prim: usize, axis: usize },
    Quat { prim: usize, comp: usize },
    LogScale { prim: usize, axis: usize },
    OpacityLogit { prim: usize },
    ColorSh { prim: usize, index: usize },
}

/// Compares analytic photometric gradients against central finite
/// differences (h = 1e-4) on the raw parameterization. Returns the
/// maximum relative error over the requested coordinates.
pub fn finite_diff_grad_check(
    scene: &Scene,
    cam: &Camera,
    gt: &ColorImage,
    lambda: f64,
    coords: &[ParamCoord],
) -> Result<f64> {
    let h = 1e-4;
    let base = ParamState::from_scene(scene);
    let (_, grads) = photometric_loss_and_grad(&base.materialize(), cam, gt, lambda)?;
    let eval = |state: &ParamState| -> Result<f64> {
        photometric_loss(&state.materialize(), cam, gt, lambda)
    };
    let mut max_rel: f64 = 0.0;
    for &coord in coords {
        let mut plus = base.clone();
        let mut minus = base.clone();
        let analytic = match coord {
            ParamCoord::Mean { prim, axis } => {
                plus.mean[prim][axis] += h;
                minus.mean[prim][axis] -= h;
                grads.mean[prim][axis]
            }
            ParamCoord::Quat { prim, comp } => {
                plus.quat[prim][comp] += h;
                minus.quat[prim][comp] -= h;
                grads.quat[prim][comp]
            }
            ParamCoord::LogScale { prim, axis } => {
                plus.log_scale[prim][axis] += h;
                minus.log_scale[prim][axis] -= h;
                grads.log_scale[prim][axis]
            }
            ParamCoord::OpacityLogit { prim } => {
                plus.opacity_logit[prim] += h;
                minus.opacity_logit[prim] -= h;
                grads.opacity_logit[prim]
            }
            ParamCoord::ColorSh { prim, index } => {
                plus.color_sh[prim][index] += h;
                minus.color_sh[prim][index] -= h;
                grads.color_sh[prim][index]
            }
        };
        let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max((analytic - fd).abs() / denom);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{degrade, generate_scene, Degradation, SyntheticSpec};

    fn small_setup() -> (Scene, Vec<(Camera, ColorImage)>) {
        let spec = SyntheticSpec {
            primitive_count: 8,
            view_count: 3,
            image_size: 24,
            sh_degree_color: 1,
            ..Default::default()
        };
        let (truth, cameras, images) = generate_scene(&spec).unwrap();
        let scene = degrade(&truth, &Degradation::Jitter { sigma: 0.05 }, 11).unwrap();
        let views = cameras.into_iter().zip(images).collect();
        (scene, views)
    }

    fn all_coords(scene: &Scene) -> Vec<ParamCoord> {
        let s3 = 3 * scene.color_basis_size();
        let mut coords = Vec::new();
        for prim in 0..scene.primitives.len() {
            for axis in 0..3 {
                coords.push(ParamCoord::Mean { prim, axis });
                coords.push(ParamCoord::LogScale { prim, axis });
            }
            for comp in 0..4 {
                coords.push(ParamCoord::Quat { prim, comp });
            }
            coords.push(ParamCoord::OpacityLogit { prim });
            for index in 0..s3 {
                coords.push(ParamCoord::ColorSh { prim, index });
            }
        }
        coords
    }

    #[test]
    fn analytic_gradients_match_finite_differences_l1_only() {
        let (scene, views) = small_setup();
        let (cam, gt) = &views[0];
        let max_rel = finite_diff_grad_check(&scene, cam, gt, 0.0, &all_coords(&scene)).unwrap();
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn analytic_gradients_match_finite_differences_combined() {
        let (scene, views) = small_setup();
        let (cam, gt) = &views[1];
        let max_rel = finite_diff_grad_check(&scene, cam, gt, 0.2, &all_coords(&scene)).unwrap();
        assert!(max_rel < 1e-3, "max relative gradient error {max_rel}");
    }

    #[test]
    fn fit_base_reduces_training_loss() {
        let (scene, views) = small_setup();
        let before: f64 = views
            .iter()
            .map(|(c, g)| photometric_loss(&scene, c, g, 0.2).unwrap())
            .sum();
        let cfg = FitConfig { iterations: 120, seed: 3, ..Default::default() };
        let result = fit_base(&scene, &views, &cfg).unwrap();
        let after: f64 = views
            .iter()
            .map(|(c, g)| photometric_loss(&result.scene, c, g, 0.2).unwrap())
            .sum();
        assert!(after < before, "loss should drop: {after} vs {before}");
        assert_eq!(result.loss_history.len(), 120);
    }

    #[test]
    fn fit_base_is_deterministic() {
        let (scene, views) = small_setup();
        let cfg = FitConfig { iterations: 15, seed: 4, ..Default::default() };
        let a = fit_base(&scene, &views, &cfg).unwrap().scene;
        let b = fit_base(&scene, &views, &cfg).unwrap().scene;
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn fit_base_rejects_empty_inputs() {
        let (scene, views) = small_setup();
        assert!(fit_base(&scene, &[], &FitConfig::default()).is_err());
        let empty = Scene { primitives: vec![], ..scene };
        assert!(fit_base(&empty, &views, &FitConfig::default()).is_err());
    }

    #[test]
    fn materialize_round_trip_preserves_scene() {
        let (scene, _) = small_setup();
        let state = ParamState::from_scene(&scene);
        let back = state.materialize();
        for (a, b) in scene.primitives.iter().zip(&back.primitives) {
            assert!((a.mean - b.mean).norm() < 1e-12);
            assert!((a.opacity - b.opacity).abs() < 1e-9);
            assert!((a.scale - b.scale).norm() < 1e-12);
        }
    }
}
