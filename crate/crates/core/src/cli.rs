//! Command-line entry points wiring the pipeline stages together.
//! Exit codes: 0 success, 1 usage error, 2 data error.

use crate::avs::{run_avs, AvsConfig, AvsPolicy};
use crate::fitter::{fit_base, FitConfig};
use crate::guidance;
use crate::image::{
    read_ppm, read_scalar_fmap, write_ppm, write_scalar_fmap, ColorImage,
};
use crate::metrics;
use crate::photometric::{dssim_map, residual_map};
use crate::raster::{render, RenderOptions};
use crate::scene::{load_cameras, save_cameras, Camera, Scene};
use crate::sh::sh_basis_size;
use crate::solver::{
    assemble_normal_equations, fit_uncertainty_sgd, scene_with_coeffs, solve_direct,
    UncertFitConfig,
};
use crate::synth::{generate_scene, degrade, Degradation, SyntheticSpec};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "splat-uncert", version, about = "Gaussian splatting with per-primitive view-dependent uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene, orbit cameras, and ground-truth images.
    Datagen(DatagenArgs),
    /// Fit geometry and appearance to training images.
    FitBase(FitBaseArgs),
    /// Fit per-primitive uncertainty coefficients to training residuals.
    FitUncert(FitUncertArgs),
    /// Render color and uncertainty for one camera.
    Render(RenderArgs),
    /// Sparsification and correlation metrics for an error/uncertainty pair.
    Metrics(MetricsArgs),
    /// Active view selection campaign.
    Avs(AvsArgs),
    /// Uncertainty-guided attenuation of a score map.
    Guide(GuideArgs),
    /// AUSE-versus-lambda_reg doubling sweep on a sparse split.
    SweepReg(SweepRegArgs),
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 150)]
    primitives: usize,
    #[arg(long, default_value_t = 32)]
    views: usize,
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    #[arg(long, default_value = "none")]
    degradation: String,
    /// Fraction for subsample, sigma for jitter.
    #[arg(long, default_value_t = 0.5)]
    degradation_amount: f64,
}

#[derive(Args)]
struct ViewSetArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory holding view_NNN.ppm ground-truth images.
    #[arg(long)]
    images: PathBuf,
    /// Comma-separated camera indices; all cameras when omitted.
    #[arg(long)]
    train_indices: Option<String>,
}

#[derive(Args)]
struct FitBaseArgs {
    #[command(flatten)]
    views: ViewSetArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitUncertArgs {
    #[command(flatten)]
    views: ViewSetArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda_reg: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_b: f64,
    /// Assign the prior level to uncovered background.
    #[arg(long, default_value_t = false)]
    background_prior: bool,
    /// Override the scene's uncertainty SH degree (coefficients reset).
    #[arg(long)]
    sh_degree_uncert: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Solve the normal equations exactly instead of running SGD.
    #[arg(long, default_value_t = false)]
    direct: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, visible_alias = "cameras")]
    camera: PathBuf,
    #[arg(long, default_value_t = 0)]
    view_index: usize,
    #[arg(long)]
    out_color: Option<PathBuf>,
    #[arg(long)]
    out_uncert: Option<PathBuf>,
    #[arg(long)]
    out_uncert_raw: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    background_uncertainty: f64,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    error: PathBuf,
    #[arg(long)]
    uncert: PathBuf,
}

#[derive(Args)]
struct AvsArgs {
    #[command(flatten)]
    views: ViewSetArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated holdout camera indices; default every 8th.
    #[arg(long)]
    holdout_indices: Option<String>,
    #[arg(long, default_value = "uncertainty")]
    policy: String,
    #[arg(long, default_value_t = 4)]
    initial_views: usize,
    #[arg(long, default_value_t = 16)]
    selections: usize,
    #[arg(long, default_value_t = 100)]
    base_iter_per_view: usize,
    #[arg(long, default_value_t = 50)]
    uncert_iter_per_view: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda_reg: f64,
    #[arg(long, default_value_t = 1.0)]
    prior_b: f64,
    #[arg(long, default_value_t = false)]
    background_prior: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the final fitted scene here.
    #[arg(long)]
    out_scene: Option<PathBuf>,
}

#[derive(Args)]
struct GuideArgs {
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    uncert: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth binary mask (FMAP); enables the F1 report.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Also write the best-F1 binarized mask as PPM here.
    #[arg(long)]
    out_mask: Option<PathBuf>,
}

#[derive(Args)]
struct SweepRegArgs {
    #[command(flatten)]
    views: ViewSetArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated holdout camera indices; default every 8th.
    #[arg(long)]
    holdout_indices: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    prior_b: f64,
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
}

fn parse_indices(s: &str, len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let i: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad index '{part}'")))?;
        if i >= len {
            return Err(Error::Invalid(format!("index {i} out of range (pool {len})")));
        }
        out.push(i);
    }
    Ok(out)
}

fn image_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("view_{i:03}.ppm"))
}

fn load_views(args: &ViewSetArgs) -> Result<(Scene, Vec<Camera>, Vec<(Camera, ColorImage)>)> {
    let scene = Scene::load(&args.scene)?;
    let cameras = load_cameras(&args.cameras)?;
    let indices = match &args.train_indices {
        Some(s) => parse_indices(s, cameras.len())?,
        None => (0..cameras.len()).collect(),
    };
    let views = indices
        .iter()
        .map(|&i| Ok((cameras[i].clone(), read_ppm(&image_path(&args.images, i))?)))
        .collect::<Result<_>>()?;
    Ok((scene, cameras, views))
}

fn default_holdout(n: usize) -> Vec<usize> {
    (0..n).step_by(8).collect()
}

fn run(cli: Cli) -> Result<()> {
    crate::init_threads();
    match cli.command {
        Command::Datagen(a) => {
            let degradation = match a.degradation.as_str() {
                "none" => Degradation::None,
                "subsample" => Degradation::Subsample { fraction: a.degradation_amount },
                "jitter" => Degradation::Jitter { sigma: a.degradation_amount },
                other => return Err(Error::Invalid(format!("unknown degradation '{other}'"))),
            };
            let spec = SyntheticSpec {
                primitive_count: a.primitives,
                view_count: a.views,
                image_size: a.image_size,
                degradation: degradation.clone(),
                seed: a.seed,
                ..Default::default()
            };
            let (scene, cameras, images) = generate_scene(&spec)?;
            std::fs::create_dir_all(&a.out).map_err(Error::Io)?;
            scene.save(&a.out.join("truth.json"))?;
            degrade(&scene, &degradation, a.seed.wrapping_add(1))?
                .save(&a.out.join("degraded.json"))?;
            save_cameras(&a.out.join("cameras.json"), &cameras)?;
            for (i, img) in images.iter().enumerate() {
                write_ppm(&image_path(&a.out, i), img)?;
            }
            println!("wrote {} views to {}", images.len(), a.out.display());
        }
        Command::FitBase(a) => {
            let (scene, _, views) = load_views(&a.views)?;
            let cfg = FitConfig {
                iterations: a.iterations,
                lambda: a.lambda,
                seed: a.seed,
                ..Default::default()
            };
            let result = fit_base(&scene, &views, &cfg)?;
            result.scene.save(&a.out)?;
            println!(
                "final loss {:.6}",
                result.loss_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::FitUncert(a) => {
            let (mut scene, _, views) = load_views(&a.views)?;
            if let Some(deg) = a.sh_degree_uncert {
                if deg != scene.sh_degree_uncert {
                    scene.sh_degree_uncert = deg;
                    let s = sh_basis_size(deg);
                    for p in &mut scene.primitives {
                        p.uncert_sh = vec![0.0; s];
                    }
                }
            }
            let residuals = views
                .iter()
                .map(|(cam, gt)| {
                    let out = render(&scene, cam, RenderOptions::default())?;
                    Ok((cam.clone(), residual_map(&out.color, gt, a.lambda)?.map))
                })
                .collect::<Result<Vec<_>>>()?;
            let cfg = UncertFitConfig {
                iterations: a.iterations,
                lambda_reg: a.lambda_reg,
                prior_level: a.prior_b,
                background_prior: a.background_prior,
                seed: a.seed,
                ..Default::default()
            };
            let fitted = if a.direct {
                let ne = assemble_normal_equations(&scene, &residuals, &cfg)?;
                let sol = solve_direct(&ne, a.lambda_reg, scene.uncert_basis_size(), a.prior_b)?;
                scene_with_coeffs(&scene, sol.coeffs.as_slice())
            } else {
                fit_uncertainty_sgd(&scene, &residuals, &cfg)?.0
            };
            fitted.save(&a.out)?;
            println!("fitted uncertainty for {} primitives", fitted.primitives.len());
        }
        Command::Render(a) => {
            let scene = Scene::load(&a.scene)?;
            let cameras = load_cameras(&a.camera)?;
            let cam = cameras
                .get(a.view_index)
                .ok_or_else(|| Error::Invalid(format!("view index {} out of range", a.view_index)))?;
            let out = render(
                &scene,
                cam,
                RenderOptions { background_uncertainty: a.background_uncertainty },
            )?;
            if let Some(p) = &a.out_color {
                write_ppm(p, &out.color)?;
            }
            if let Some(p) = &a.out_uncert {
                write_scalar_fmap(p, &out.uncertainty)?;
            }
            if let Some(p) = &a.out_uncert_raw {
                write_scalar_fmap(p, &out.uncertainty_raw)?;
            }
        }
        Command::Metrics(a) => {
            let error = read_scalar_fmap(&a.error)?;
            let uncert = read_scalar_fmap(&a.uncert)?;
            let ause = metrics::ause(&error, &uncert)?;
            let pearson = metrics::pearson(&uncert, &error)?;
            println!("AUSE {ause:.6}");
            println!("pearson {:.6} degenerate={}", pearson.value, pearson.degenerate);
        }
        Command::Avs(a) => {
            let (scene, cameras, _) = load_views(&a.views)?;
            let holdout_idx = match &a.holdout_indices {
                Some(s) => parse_indices(s, cameras.len())?,
                None => default_holdout(cameras.len()),
            };
            let pool_idx: Vec<usize> = match &a.views.train_indices {
                Some(s) => parse_indices(s, cameras.len())?,
                None => (0..cameras.len()).filter(|i| !holdout_idx.contains(i)).collect(),
            };
            if pool_idx.iter().any(|i| holdout_idx.contains(i)) {
                return Err(Error::Invalid("pool and holdout overlap".into()));
            }
            let load = |idx: &[usize]| -> Result<Vec<(Camera, ColorImage)>> {
                idx.iter()
                    .map(|&i| {
                        Ok((cameras[i].clone(), read_ppm(&image_path(&a.views.images, i))?))
                    })
                    .collect()
            };
            let pool = load(&pool_idx)?;
            let holdout = load(&holdout_idx)?;
            let cfg = AvsConfig {
                initial_views: a.initial_views,
                selections: a.selections,
                base_iter_per_view: a.base_iter_per_view,
                uncert_iter_per_view: a.uncert_iter_per_view,
                seed: a.seed,
                ..Default::default()
            };
            let policy: AvsPolicy = a.policy.parse()?;
            let ucfg = UncertFitConfig {
                lambda_reg: a.lambda_reg,
                prior_level: a.prior_b,
                background_prior: a.background_prior,
                seed: a.seed,
                ..Default::default()
            };
            let (final_scene, trace) =
                run_avs(&scene, &pool, &holdout, &cfg, policy, &FitConfig::default(), &ucfg)?;
            std::fs::write(&a.out, trace.to_csv()).map_err(Error::Io)?;
            if let Some(p) = &a.out_scene {
                final_scene.save(p)?;
            }
            if let Some(last) = trace.rounds.last() {
                println!("final holdout PSNR {:.4} SSIM {:.4}", last.psnr, last.ssim);
            }
        }
        Command::Guide(a) => {
            let raw = read_scalar_fmap(&a.raw)?;
            let uncert = read_scalar_fmap(&a.uncert)?;
            let attenuated = guidance::attenuate(&raw, &uncert)?;
            write_scalar_fmap(&a.out, &attenuated)?;
            if let Some(gt_path) = &a.gt {
                let gt = read_scalar_fmap(gt_path)?;
                let (t_raw, f1_raw) = guidance::best_f1(&raw, &gt)?;
                let (t_att, f1_att) = guidance::best_f1(&attenuated, &gt)?;
                println!("raw best_f1 {f1_raw:.6} at threshold {t_raw:.2}");
                println!("attenuated best_f1 {f1_att:.6} at threshold {t_att:.2}");
                if let Some(mask_path) = &a.out_mask {
                    crate::image::write_mask_ppm(
                        mask_path,
                        &guidance::binarize(&attenuated, t_att),
                    )?;
                }
            }
        }
        Command::SweepReg(a) => {
            let (scene, cameras, views) = load_views(&a.views)?;
            let holdout_idx = match &a.holdout_indices {
                Some(s) => parse_indices(s, cameras.len())?,
                None => default_holdout(cameras.len()),
            };
            let holdout = holdout_idx
                .iter()
                .map(|&i| Ok((cameras[i].clone(), read_ppm(&image_path(&a.views.images, i))?)))
                .collect::<Result<Vec<_>>>()?;
            let residuals = views
                .iter()
                .map(|(cam, gt)| {
                    let out = render(&scene, cam, RenderOptions::default())?;
                    Ok((cam.clone(), residual_map(&out.color, gt, a.lambda)?.map))
                })
                .collect::<Result<Vec<_>>>()?;
            let cfg = UncertFitConfig { prior_level: a.prior_b, ..Default::default() };
            let ne = assemble_normal_equations(&scene, &residuals, &cfg)?;
            let s = scene.uncert_basis_size();
            let mut csv = String::from("lambda_reg,ause\n");
            for lam in lambda_sweep() {
                let sol = solve_direct(&ne, lam, s, a.prior_b)?;
                let fitted = scene_with_coeffs(&scene, sol.coeffs.as_slice());
                let mut total = 0.0;
                for (cam, gt) in &holdout {
                    let out = render(&fitted, cam, RenderOptions::default())?;
                    let err = dssim_map(&out.color, gt)?;
                    total += metrics::ause(&err, &out.uncertainty)?;
                }
                let mean_ause = total / holdout.len().max(1) as f64;
                csv.push_str(&format!("{lam},{mean_ause}\n"));
                println!("lambda_reg {lam:<8} ause {mean_ause:.6}");
            }
            std::fs::write(&a.out, csv).map_err(Error::Io)?;
        }
    }
    Ok(())
}

/// {0} then doubling 0.02 .. 10.24: 11 values.
pub fn lambda_sweep() -> Vec<f64> {
    let mut v = vec![0.0];
    let mut l = 0.02;
    for _ in 0..10 {
        v.push(l);
        l *= 2.0;
    }
    v
}

/// Parses and runs; returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_has_eleven_lambdas() {
        let v = lambda_sweep();
        assert_eq!(v.len(), 11);
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.02).abs() < 1e-12);
        assert!((v[10] - 10.24).abs() < 1e-12);
    }

    #[test]
    fn unknown_flag_exits_one() {
        assert_eq!(cli_main(["splat-uncert", "render", "--bogus"]), 1);
        assert_eq!(cli_main(["splat-uncert", "no-such-command"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(cli_main(["splat-uncert", "--help"]), 0);
    }

    #[test]
    fn missing_file_exits_two() {
        assert_eq!(
            cli_main([
                "splat-uncert",
                "metrics",
                "--error",
                "/nonexistent/e.fmap",
                "--uncert",
                "/nonexistent/u.fmap"
            ]),
            2
        );
    }
}
