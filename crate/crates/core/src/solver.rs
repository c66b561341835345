//! Post-hoc fitting of per-primitive SH uncertainty coefficients from
//! training residuals: the SGD path, an exact direct solve of the
//! (ridge-regularized) normal equations as its oracle, and the
//! sphere-quadrature prior regularizer with its Parseval closed form.

use crate::image::ScalarMap;
use crate::quadrature::{gauss_legendre_sphere, SphereQuadrature};
use crate::raster::{render_with_weights, RenderOptions};
use crate::scene::{Camera, Scene};
use crate::sh::{sh_basis_size, sh_evaluate};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SQRT_4PI: f64 = 3.544_907_701_811_032;
pub const DEFAULT_COLUMN_CAP: usize = 20_000;

#[derive(Debug, Clone)]
pub struct UncertFitConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda_reg: f64,
    /// Maximal uncertainty prior level b.
    pub prior_level: f64,
    /// Assign uncertainty b to uncovered background during fitting and
    /// rendering (moved to the target side of the linear system).
    pub background_prior: bool,
    pub seed: u64,
    pub column_cap: usize,
}

impl Default for UncertFitConfig {
    fn default() -> Self {
        Self {
            iterations: 400,
            learning_rate: 0.01,
            lambda_reg: 0.0,
            prior_level: 1.0,
            background_prior: false,
            seed: 0,
            column_cap: DEFAULT_COLUMN_CAP,
        }
    }
}

impl UncertFitConfig {
    pub fn background_uncertainty(&self) -> f64 {
        if self.background_prior {
            self.prior_level
        } else {
            0.0
        }
    }
}

// ----------------------------------------------------------- regularizer

/// Quadrature value of `sum_k ∫ (b - u_k)^2` and its gradient per
/// coefficient, linear in the coefficients.
pub fn regularizer_loss(
    coeffs: &[Vec<f64>],
    b: f64,
    quad: &SphereQuadrature,
    degree: usize,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let s = sh_basis_size(degree);
    let basis: Vec<Vec<f64>> = quad
        .nodes
        .iter()
        .map(|&(d, _)| sh_evaluate(degree, d))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(coeffs.len());
    for c in coeffs {
        if c.len() != s {
            return Err(Error::Dimension("coefficient length vs degree".into()));
        }
        let mut g = vec![0.0; s];
        for ((_, w), y) in quad.nodes.iter().zip(&basis) {
            let u: f64 = c.iter().zip(y).map(|(ci, yi)| ci * yi).sum();
            let diff = u - b;
            total += w * diff * diff;
            for i in 0..s {
                g[i] += 2.0 * w * diff * y[i];
            }
        }
        grads.push(g);
    }
    Ok((total, grads))
}

/// Parseval closed form of the regularizer, valid for the orthonormal
/// basis: `(c_00 - b sqrt(4 pi))^2 + sum_{i>0} c_i^2` per primitive.
pub fn regularizer_parseval(coeffs: &[Vec<f64>], b: f64) -> f64 {
    coeffs
        .iter()
        .map(|c| {
            let dc = c[0] - b * SQRT_4PI;
            dc * dc + c[1..].iter().map(|v| v * v).sum::<f64>()
        })
        .sum()
}

// -------------------------------------------------------- linear system

/// Sparse rows of A for one view, SH-expanded, with the background term
/// already folded into the targets.
#[derive(Debug, Clone)]
pub struct ViewSystem {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
    pub targets: Vec<f64>,
}

impl ViewSystem {
    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    /// A u for this view.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|e| self.vals[e] * u[self.cols[e]])
                    .sum()
            })
            .collect()
    }
}

/// Streams blend records into per-view SH-expanded sparse systems.
pub fn build_view_systems(
    scene: &Scene,
    views: &[(Camera, ScalarMap)],
    cfg: &UncertFitConfig,
) -> Result<Vec<ViewSystem>> {
    let degree = scene.sh_degree_uncert;
    let s = sh_basis_size(degree);
    let b_bg = cfg.background_uncertainty();
    let mut systems = Vec::with_capacity(views.len());
    for (cam, residual) in views {
        if residual.width != cam.width || residual.height != cam.height {
            return Err(Error::Dimension("residual map vs camera".into()));
        }
        let (out, records) = render_with_weights(
            scene,
            cam,
            RenderOptions { background_uncertainty: 0.0 },
        )?;
        let mut row_ptr = Vec::with_capacity(records.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut targets = Vec::with_capacity(records.len());
        row_ptr.push(0);
        for rec in &records {
            for e in &rec.entries {
                let basis = sh_evaluate(degree, e.view_dir)?;
                let base_col = e.primitive_index * s;
                for (i, &y) in basis.iter().enumerate() {
                    cols.push(base_col + i);
                    vals.push(e.weight * y);
                }
            }
            row_ptr.push(cols.len());
            let t_rem = out.final_transmittance.data[rec.pixel_index];
            targets.push(residual.data[rec.pixel_index] - b_bg * t_rem);
        }
        systems.push(ViewSystem { row_ptr, cols, vals, targets });
    }
    Ok(systems)
}

#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub pixel_count: usize,
}

pub fn assemble_normal_equations(
    scene: &Scene,
    views: &[(Camera, ScalarMap)],
    cfg: &UncertFitConfig,
) -> Result<NormalEquations> {
    let s = scene.uncert_basis_size();
    let dim = s * scene.primitives.len();
    if dim > cfg.column_cap {
        return Err(Error::Invalid(format!(
            "system has {dim} columns, above the direct-solve cap {}; use the SGD path",
            cfg.column_cap
        )));
    }
    let systems = build_view_systems(scene, views, cfg)?;
    Ok(normal_equations_from_systems(&systems, dim))
}

pub fn normal_equations_from_systems(systems: &[ViewSystem], dim: usize) -> NormalEquations {
    let mut gram = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let mut pixel_count = 0;
    for sys in systems {
        pixel_count += sys.rows();
        for r in 0..sys.rows() {
            let span = sys.row_ptr[r]..sys.row_ptr[r + 1];
            let y = sys.targets[r];
            for i in span.clone() {
                rhs[sys.cols[i]] += sys.vals[i] * y;
                for j in span.clone() {
                    gram[(sys.cols[i], sys.cols[j])] += sys.vals[i] * sys.vals[j];
                }
            }
        }
    }
    NormalEquations { gram, rhs, pixel_count }
}

/// The prior vector: b sqrt(4 pi) in each DC slot, zero elsewhere.
pub fn prior_vector(num_primitives: usize, s: usize, b: f64) -> DVector<f64> {
    let mut u = DVector::zeros(num_primitives * s);
    for k in 0..num_primitives {
        u[k * s] = b * SQRT_4PI;
    }
    u
}

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub coeffs: DVector<f64>,
    /// Numerical rank; only reported for the unregularized min-norm path.
    pub rank: Option<usize>,
}

/// Exact minimizer of `||y - A u||^2 + lambda_reg * sum_k l_k`:
/// `(AᵀA + λ I) u = Aᵀy + λ u_prior`. At λ = 0 a singular system is
/// resolved to the min-norm solution via SVD with a rank diagnostic.
pub fn solve_direct(ne: &NormalEquations, lambda_reg: f64, s: usize, b: f64) -> Result<DirectSolution> {
    let dim = ne.gram.nrows();
    let num_primitives = dim / s;
    let mut m = ne.gram.clone();
    let mut rhs = ne.rhs.clone();
    if lambda_reg > 0.0 {
        for i in 0..dim {
            m[(i, i)] += lambda_reg;
        }
        rhs += lambda_reg * prior_vector(num_primitives, s, b);
        if let Some(chol) = m.clone().cholesky() {
            return Ok(DirectSolution { coeffs: chol.solve(&rhs), rank: None });
        }
    }
    // min-norm via SVD (lambda_reg = 0, possibly rank-deficient)
    let svd = m.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_sv * 1e-12 * dim as f64;
    let rank = svd.singular_values.iter().filter(|&&v| v > tol).count();
    let coeffs = svd
        .solve(&rhs, tol)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(DirectSolution { coeffs, rank: Some(rank) })
}

// ------------------------------------------------------------ objective

/// Full objective split: (total, data term, regularizer term).
pub fn objective(
    systems: &[ViewSystem],
    coeffs: &[f64],
    lambda_reg: f64,
    b: f64,
    degree: usize,
) -> Result<(f64, f64, f64)> {
    let mut data = 0.0;
    for sys in systems {
        let pred = sys.apply(coeffs);
        for (p, y) in pred.iter().zip(&sys.targets) {
            let d = p - y;
            data += d * d;
        }
    }
    let s = sh_basis_size(degree);
    let per_prim: Vec<Vec<f64>> = coeffs.chunks_exact(s).map(|c| c.to_vec()).collect();
    let quad = gauss_legendre_sphere(degree);
    let (reg, _) = regularizer_loss(&per_prim, b, &quad, degree)?;
    Ok((data + lambda_reg * reg, data, lambda_reg * reg))
}

// ------------------------------------------------------------------ SGD

pub struct SgdDiagnostics {
    /// (iteration, total objective, data term, reg term); sampled.
    pub trace: Vec<(usize, f64, f64, f64)>,
}

/// SGD over views: per step the exact data gradient of one view plus
/// 1/N of the regularizer gradient, Adam-updated with cosine decay.
/// Only `uncert_sh` changes; everything else is frozen.
pub fn fit_uncertainty_sgd(
    scene: &Scene,
    views: &[(Camera, ScalarMap)],
    cfg: &UncertFitConfig,
) -> Result<(Scene, SgdDiagnostics)> {
    let degree = scene.sh_degree_uncert;
    let s = sh_basis_size(degree);
    let k = scene.primitives.len();
    let dim = s * k;
    let systems = build_view_systems(scene, views, cfg)?;
    let quad = gauss_legendre_sphere(degree);
    let basis_at_nodes: Vec<Vec<f64>> = quad
        .nodes
        .iter()
        .map(|&(d, _)| sh_evaluate(degree, d))
        .collect::<Result<_>>()?;

    let mut u: Vec<f64> = scene.primitives.iter().flat_map(|p| p.uncert_sh.clone()).collect();
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..systems.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0usize;
    let n_views = systems.len() as f64;
    let mut trace = Vec::new();

    for it in 0..cfg.iterations {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let sys = &systems[order[cursor]];
        cursor += 1;

        for g in grad.iter_mut() {
            *g = 0.0;
        }
        // data term of this view: 2 Aᵀ(Au - y)
        for r in 0..sys.rows() {
            let span = sys.row_ptr[r]..sys.row_ptr[r + 1];
            let mut pred = 0.0;
            for e in span.clone() {
                pred += sys.vals[e] * u[sys.cols[e]];
            }
            let resid = 2.0 * (pred - sys.targets[r]);
            if resid == 0.0 {
                continue;
            }
            for e in span {
                grad[sys.cols[e]] += resid * sys.vals[e];
            }
        }
        // regularizer, scaled so an epoch sums to the full gradient
        if cfg.lambda_reg > 0.0 {
            let scale = cfg.lambda_reg / n_views;
            for kk in 0..k {
                let c = &u[kk * s..(kk + 1) * s];
                for ((_, w), y) in quad.nodes.iter().zip(&basis_at_nodes) {
                    let val: f64 = c.iter().zip(y).map(|(ci, yi)| ci * yi).sum();
                    let diff = 2.0 * w * (val - cfg.prior_level) * scale;
                    for i in 0..s {
                        grad[kk * s + i] += diff * y[i];
                    }
                }
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite uncertainty gradient".into()));
        }
        let lr = cfg.learning_rate
            * 0.5
            * (1.0 + (std::f64::consts::PI * it as f64 / cfg.iterations as f64).cos());
        let t = it + 1;
        let c1 = 1.0 - B1.powi(t as i32);
        let c2 = 1.0 - B2.powi(t as i32);
        for i in 0..dim {
            m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
            v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
            u[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
        }
        if it % 50 == 0 || it + 1 == cfg.iterations {
            let (total, data, reg) = objective(&systems, &u, cfg.lambda_reg, cfg.prior_level, degree)?;
            if !total.is_finite() {
                return Err(Error::Numerical("non-finite uncertainty objective".into()));
            }
            trace.push((it, total, data, reg));
        }
    }

    let mut fitted = scene.clone();
    for (kk, p) in fitted.primitives.iter_mut().enumerate() {
        p.uncert_sh = u[kk * s..(kk + 1) * s].to_vec();
    }
    Ok((fitted, SgdDiagnostics { trace }))
}

/// Writes a direct-solve coefficient vector back into a scene copy.
pub fn scene_with_coeffs(scene: &Scene, coeffs: &[f64]) -> Scene {
    let s = scene.uncert_basis_size();
    let mut out = scene.clone();
    for (k, p) in out.primitives.iter_mut().enumerate() {
        p.uncert_sh = coeffs[k * s..(k + 1) * s].to_vec();
    }
    out
}
