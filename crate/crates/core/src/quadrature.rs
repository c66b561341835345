//! Gauss-Legendre quadrature on the unit sphere.
//!
//! For SH degree L: (L+1) Gauss-Legendre nodes in cos(theta) crossed with
//! (2L+2) equispaced azimuth nodes. Exact for products of spherical
//! harmonics up to degree L, which covers the squared degree-L expansions
//! in the regularizer integrand.

use nalgebra::Vector3;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    /// (unit direction, weight); weights sum to 4*pi.
    pub nodes: Vec<(Vector3<f64>, f64)>,
    pub degree: usize,
}

/// Legendre polynomial P_n and derivative at x.
fn legendre_and_deriv(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights of n-point Gauss-Legendre on [-1, 1].
pub fn gauss_legendre_1d(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, refined by Newton.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Sphere rule exact for SH products up to `degree`.
pub fn gauss_legendre_sphere(degree: usize) -> SphereQuadrature {
    let n_theta = degree + 1;
    let n_phi = 2 * degree + 2;
    let gl = gauss_legendre_1d(n_theta);
    let w_phi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(n_theta * n_phi);
    for &(ct, wt) in &gl {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for j in 0..n_phi {
            let phi = w_phi * j as f64;
            let dir = Vector3::new(st * phi.cos(), st * phi.sin(), ct);
            nodes.push((dir, wt * w_phi));
        }
    }
    SphereQuadrature { nodes, degree }
}

impl SphereQuadrature {
    /// Integrates a function over the sphere.
    pub fn integrate(&self, f: impl Fn(Vector3<f64>) -> f64) -> f64 {
        self.nodes.iter().map(|&(d, w)| w * f(d)).sum()
    }
}
