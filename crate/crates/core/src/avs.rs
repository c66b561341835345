//! Active view selection: farthest-point initialization, uncertainty-argmax
//! candidate scoring, and the interleaved fit/select schedule.

use crate::fitter::{fit_base, FitConfig};
use crate::image::ColorImage;
use crate::photometric::{psnr, residual_map, ssim_map};
use crate::raster::{render, RenderOptions};
use crate::scene::{Camera, Scene};
use crate::solver::{fit_uncertainty_sgd, UncertFitConfig};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct AvsConfig {
    pub initial_views: usize,
    pub selections: usize,
    /// Base-fitter iterations per training view after each selection.
    pub base_iter_per_view: usize,
    /// Uncertainty-solver iterations per training view (uncertainty policy).
    pub uncert_iter_per_view: usize,
    /// Uncertainty coefficients persist between selections when true.
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for AvsConfig {
    fn default() -> Self {
        Self {
            initial_views: 4,
            selections: 16,
            base_iter_per_view: 100,
            uncert_iter_per_view: 50,
            warm_start: true,
            seed: 0,
        }
    }
}

impl AvsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_views == 0 || self.base_iter_per_view == 0 || self.uncert_iter_per_view == 0 {
            return Err(Error::Invalid("AVS config fields must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvsPolicy {
    Uncertainty,
    Random,
    Farthest,
}

impl std::str::FromStr for AvsPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uncertainty" => Ok(Self::Uncertainty),
            "random" => Ok(Self::Random),
            "farthest" => Ok(Self::Farthest),
            other => Err(Error::Invalid(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AvsRound {
    pub round: usize,
    /// None for the initial state row.
    pub selected_id: Option<usize>,
    pub total_uncertainty: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AvsTrace {
    pub rounds: Vec<AvsRound>,
}

impl AvsTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,selected_id,total_uncertainty,psnr,ssim\n");
        for r in &self.rounds {
            let id = r.selected_id.map(|i| i.to_string()).unwrap_or_else(|| "-1".into());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.round, id, r.total_uncertainty, r.psnr, r.ssim
            ));
        }
        out
    }
}

/// Greedy farthest-point selection over camera centers: seed with the
/// pair at maximum distance, then repeatedly add the candidate with the
/// largest minimum distance to the chosen set. Ties break ascending.
pub fn farthest_point_init(cameras: &[Camera], k: usize) -> Result<Vec<usize>> {
    if k > cameras.len() {
        return Err(Error::Invalid(format!(
            "requested {k} views from a pool of {}",
            cameras.len()
        )));
    }
    if k < 2 {
        return Err(Error::Invalid("farthest-point init needs k >= 2".into()));
    }
    let centers: Vec<_> = cameras.iter().map(|c| c.center()).collect();
    let n = centers.len();
    let mut best = (0, 1, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = (centers[i] - centers[j]).norm();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let mut chosen = vec![best.0, best.1];
    let mut min_dist: Vec<f64> = centers
        .iter()
        .map(|c| (c - centers[best.0]).norm().min((c - centers[best.1]).norm()))
        .collect();
    while chosen.len() < k {
        let mut pick = (usize::MAX, -1.0);
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if min_dist[i] > pick.1 {
                pick = (i, min_dist[i]);
            }
        }
        chosen.push(pick.0);
        for i in 0..n {
            min_dist[i] = min_dist[i].min((centers[i] - centers[pick.0]).norm());
        }
    }
    Ok(chosen)
}

/// Renders the raw uncertainty map for each candidate and returns
/// (argmax index into `candidates`, its total). Ties break ascending.
pub fn select_next_view(
    scene: &Scene,
    candidates: &[Camera],
    background_uncertainty: f64,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::Invalid("empty candidate list".into()));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, cam) in candidates.iter().enumerate() {
        let out = render(scene, cam, RenderOptions { background_uncertainty })?;
        let total: f64 = out.uncertainty_raw.data.iter().sum();
        if total > best.1 {
            best = (i, total);
        }
    }
    Ok(best)
}

/// One fit/select campaign. The trace has `selections + 1` rows; row 0 is
/// the initial-view state. Returns the final fitted scene alongside.
#[allow(clippy::too_many_arguments)]
pub fn run_avs(
    scene_init: &Scene,
    pool: &[(Camera, ColorImage)],
    holdout: &[(Camera, ColorImage)],
    cfg: &AvsConfig,
    policy: AvsPolicy,
    base_cfg: &FitConfig,
    uncert_cfg: &UncertFitConfig,
) -> Result<(Scene, AvsTrace)> {
    cfg.validate()?;
    if cfg.initial_views + cfg.selections > pool.len() {
        return Err(Error::Invalid(format!(
            "pool of {} views exhausted by {} initial + {} selections",
            pool.len(),
            cfg.initial_views,
            cfg.selections
        )));
    }
    let cameras: Vec<Camera> = pool.iter().map(|(c, _)| c.clone()).collect();
    let mut train: Vec<usize> = farthest_point_init(&cameras, cfg.initial_views)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scene = scene_init.clone();
    let mut trace = AvsTrace::default();
    let mut last_pick: Option<(usize, f64)> = None;

    for round in 0..=cfg.selections {
        let views: Vec<(Camera, ColorImage)> =
            train.iter().map(|&i| pool[i].clone()).collect();
        let fit_cfg = FitConfig {
            iterations: cfg.base_iter_per_view * train.len(),
            seed: cfg.seed.wrapping_add(round as u64),
            ..base_cfg.clone()
        };
        scene = fit_base(&scene, &views, &fit_cfg)?.scene;
        if policy == AvsPolicy::Uncertainty {
            if !cfg.warm_start {
                let s = scene.uncert_basis_size();
                for p in &mut scene.primitives {
                    p.uncert_sh = vec![0.0; s];
                }
            }
            let residuals: Vec<_> = views
                .iter()
                .map(|(cam, gt)| {
                    let out = render(&scene, cam, RenderOptions::default())?;
                    let r = residual_map(&out.color, gt, base_cfg.lambda)?;
                    Ok((cam.clone(), r.map))
                })
                .collect::<Result<_>>()?;
            let ucfg = UncertFitConfig {
                iterations: cfg.uncert_iter_per_view * train.len(),
                seed: cfg.seed.wrapping_add(round as u64),
                ..uncert_cfg.clone()
            };
            scene = fit_uncertainty_sgd(&scene, &residuals, &ucfg)?.0;
        }

        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        for (cam, gt) in holdout {
            let out = render(&scene, cam, RenderOptions::default())?;
            psnr_sum += psnr(&out.color, gt)?;
            ssim_sum += ssim_map(&out.color, gt)?.mean();
        }
        let h = holdout.len().max(1) as f64;
        trace.rounds.push(AvsRound {
            round,
            selected_id: last_pick.map(|(id, _)| id),
            total_uncertainty: last_pick.map(|(_, t)| t).unwrap_or(0.0),
            psnr: psnr_sum / h,
            ssim: ssim_sum / h,
        });

        if round == cfg.selections {
            break;
        }
        let remaining: Vec<usize> =
            (0..pool.len()).filter(|i| !train.contains(i)).collect();
        let pick = match policy {
            AvsPolicy::Uncertainty => {
                let cams: Vec<Camera> =
                    remaining.iter().map(|&i| cameras[i].clone()).collect();
                let (local, total) =
                    select_next_view(&scene, &cams, uncert_cfg.background_uncertainty())?;
                (remaining[local], total)
            }
            AvsPolicy::Random => (remaining[rng.gen_range(0..remaining.len())], 0.0),
            AvsPolicy::Farthest => {
                let chosen: Vec<_> = train.iter().map(|&i| cameras[i].center()).collect();
                let mut best = (remaining[0], -1.0);
                for &i in &remaining {
                    let d = chosen
                        .iter()
                        .map(|c| (cameras[i].center() - c).norm())
                        .fold(f64::INFINITY, f64::min);
                    if d > best.1 {
                        best = (i, d);
                    }
                }
                (best.0, 0.0)
            }
        };
        train.push(pick.0);
        last_pick = Some(pick);
    }
    Ok((scene, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn cam_at_x(x: f64) -> Camera {
        Camera {
            fx: 30.0,
            fy: 30.0,
            cx: 8.0,
            cy: 8.0,
            width: 16,
            height: 16,
            rotation: Matrix3::identity(),
            translation: Vector3::new(-x, 0.0, 0.0),
        }
    }

    #[test]
    fn farthest_point_seeds_with_max_pair() {
        let cams: Vec<_> = [0.0, 1.0, 2.0, 10.0].iter().map(|&x| cam_at_x(x)).collect();
        let sel = farthest_point_init(&cams, 2).unwrap();
        assert_eq!(sel, vec![0, 3]);
    }

    #[test]
    fn farthest_point_greedy_third_pick() {
        let cams: Vec<_> = [0.0, 1.0, 2.0, 10.0].iter().map(|&x| cam_at_x(x)).collect();
        let sel = farthest_point_init(&cams, 3).unwrap();
        // candidate 2 has min-dist 2, candidate 1 only 1
        assert_eq!(sel, vec![0, 3, 2]);
        // brute force: among all 3-subsets containing the max pair, {0,2,3}
        // maximizes the min pairwise distance
        let subsets = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        let xs = [0.0, 1.0, 2.0, 10.0f64];
        let min_pair = |s: &[usize; 3]| {
            let mut m = f64::INFINITY;
            for i in 0..3 {
                for j in i + 1..3 {
                    m = m.min((xs[s[i]] - xs[s[j]]).abs());
                }
            }
            m
        };
        let best = subsets.iter().max_by(|a, b| min_pair(a).total_cmp(&min_pair(b))).unwrap();
        assert_eq!(*best, [0, 2, 3]);
    }

    #[test]
    fn farthest_point_full_pool_and_errors() {
        let cams: Vec<_> = [0.0, 1.0, 2.0].iter().map(|&x| cam_at_x(x)).collect();
        let mut sel = farthest_point_init(&cams, 3).unwrap();
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 1, 2]);
        assert!(farthest_point_init(&cams, 4).is_err());
    }

    #[test]
    fn select_next_view_prefers_higher_total_and_ties_ascending() {
        use crate::scene::{Primitive, Scene};
        use nalgebra::UnitQuaternion;
        let prim = Primitive {
            mean: Vector3::new(0.0, 0.0, 3.0),
            rotation: UnitQuaternion::identity(),
            scale: Vector3::new(0.3, 0.3, 0.3),
            opacity: 0.8,
            color_sh: vec![1.0, 1.0, 1.0],
            uncert_sh: vec![2.0],
        };
        let scene = Scene {
            primitives: vec![prim],
            sh_degree_color: 0,
            sh_degree_uncert: 0,
            background_color: Vector3::zeros(),
        };
        let near = Camera { cx: 8.0, cy: 8.0, ..cam_at_x(0.0) };
        // a camera looking at empty space sees zero uncertainty
        let away = Camera { translation: Vector3::new(0.0, 0.0, -100.0), ..near.clone() };
        let (idx, total) = select_next_view(&scene, &[near.clone(), away.clone()], 0.0).unwrap();
        assert_eq!(idx, 0);
        assert!(total > 0.0);
        // identical candidates: lowest index wins
        let (idx, _) = select_next_view(&scene, &[near.clone(), near.clone()], 0.0).unwrap();
        assert_eq!(idx, 0);
        // scaling uncert_sh by a positive constant keeps the argmax
        let mut scaled = scene.clone();
        scaled.primitives[0].uncert_sh[0] *= 7.5;
        let (idx2, _) = select_next_view(&scaled, &[near, away], 0.0).unwrap();
        assert_eq!(idx2, idx);
        assert!(select_next_view(&scene, &[], 0.0).is_err());
    }

    #[test]
    fn background_prior_rewards_unobserved_views() {
        use crate::scene::{Primitive, Scene};
        use nalgebra::UnitQuaternion;
        // one well-explained primitive with tiny uncertainty
        let prim = Primitive {
            mean: Vector3::new(0.0, 0.0, 3.0),
            rotation: UnitQuaternion::identity(),
            scale: Vector3::new(2.0, 2.0, 2.0),
            opacity: 0.99,
            color_sh: vec![1.0, 1.0, 1.0],
            uncert_sh: vec![0.001],
        };
        let scene = Scene {
            primitives: vec![prim],
            sh_degree_color: 0,
            sh_degree_uncert: 0,
            background_color: Vector3::zeros(),
        };
        let observed = Camera { cx: 8.0, cy: 8.0, ..cam_at_x(0.0) };
        let empty_view = Camera { translation: Vector3::new(0.0, 0.0, -100.0), ..observed.clone() };
        let (idx, total) = select_next_view(&scene, &[observed, empty_view.clone()], 1.0).unwrap();
        assert_eq!(idx, 1);
        // the fully-unobserved view scores b * pixel_count
        let pixels = (empty_view.width * empty_view.height) as f64;
        assert!((total - pixels).abs() < 1e-9);
    }
}
