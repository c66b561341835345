//! Real orthonormal spherical harmonics up to degree 3.
//!
//! Basis ordering is (l, m) lexicographic, l ascending then m = -l..l.
//! The convention is the standard real orthonormal one,
//! `∫_{S²} Y_i Y_j dΩ = δ_ij`, with all-positive Cartesian polynomial
//! forms (the Condon-Shortley phase cancels in the real basis).

use crate::{Error, Result};
use nalgebra::Vector3;

/// Highest supported SH degree.
pub const MAX_DEGREE: usize = 3;

pub const Y00: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2A: f64 = 1.092_548_430_592_079_2;
const C2B: f64 = 0.315_391_565_252_520_05;
const C2C: f64 = 0.546_274_215_296_039_6;
const C3A: f64 = 0.590_043_589_926_643_5;
const C3B: f64 = 2.890_611_442_640_554;
const C3C: f64 = 0.457_045_799_464_465_8;
const C3D: f64 = 0.373_176_332_590_115_4;
const C3E: f64 = 1.445_305_721_320_277;

/// Number of basis functions for a given degree: (L+1)².
pub fn sh_basis_size(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

fn check_degree(degree: usize) -> Result<()> {
    if degree > MAX_DEGREE {
        return Err(Error::Invalid(format!(
            "SH degree {degree} exceeds supported maximum {MAX_DEGREE}"
        )));
    }
    Ok(())
}

/// Normalizes `dir` if it is within 1e-3 of unit length, else errors.
pub fn unit_direction(dir: Vector3<f64>) -> Result<Vector3<f64>> {
    let n = dir.norm();
    if (n - 1.0).abs() > 1e-3 {
        return Err(Error::Invalid(format!(
            "direction norm {n} is not within 1e-3 of 1"
        )));
    }
    Ok(dir / n)
}

/// Evaluates the basis at a unit direction, ordered (l,m) with m = -l..l.
pub fn sh_evaluate(degree: usize, dir: Vector3<f64>) -> Result<Vec<f64>> {
    check_degree(degree)?;
    let d = unit_direction(dir)?;
    let (x, y, z) = (d.x, d.y, d.z);
    let mut out = Vec::with_capacity(sh_basis_size(degree));
    out.push(Y00);
    if degree >= 1 {
        out.push(C1 * y);
        out.push(C1 * z);
        out.push(C1 * x);
    }
    if degree >= 2 {
        out.push(C2A * x * y);
        out.push(C2A * y * z);
        out.push(C2B * (3.0 * z * z - 1.0));
        out.push(C2A * x * z);
        out.push(C2C * (x * x - y * y));
    }
    if degree >= 3 {
        out.push(C3A * y * (3.0 * x * x - y * y));
        out.push(C3B * x * y * z);
        out.push(C3C * y * (5.0 * z * z - 1.0));
        out.push(C3D * z * (5.0 * z * z - 3.0));
        out.push(C3C * x * (5.0 * z * z - 1.0));
        out.push(C3E * z * (x * x - y * y));
        out.push(C3A * x * (x * x - 3.0 * y * y));
    }
    Ok(out)
}

/// Basis values together with Cartesian gradients of the polynomial forms.
///
/// The gradients are taken of one polynomial extension off the sphere;
/// callers that need the derivative w.r.t. an unnormalized direction must
/// project with `(I - d dᵀ)/|v|`, which removes the radial ambiguity.
pub fn sh_evaluate_with_grad(
    degree: usize,
    dir: Vector3<f64>,
) -> Result<(Vec<f64>, Vec<Vector3<f64>>)> {
    check_degree(degree)?;
    let d = unit_direction(dir)?;
    let (x, y, z) = (d.x, d.y, d.z);
    let vals = sh_evaluate(degree, d)?;
    let mut grads = Vec::with_capacity(vals.len());
    grads.push(Vector3::zeros());
    if degree >= 1 {
        grads.push(Vector3::new(0.0, C1, 0.0));
        grads.push(Vector3::new(0.0, 0.0, C1));
        grads.push(Vector3::new(C1, 0.0, 0.0));
    }
    if degree >= 2 {
        grads.push(C2A * Vector3::new(y, x, 0.0));
        grads.push(C2A * Vector3::new(0.0, z, y));
        grads.push(C2B * Vector3::new(0.0, 0.0, 6.0 * z));
        grads.push(C2A * Vector3::new(z, 0.0, x));
        grads.push(C2C * Vector3::new(2.0 * x, -2.0 * y, 0.0));
    }
    if degree >= 3 {
        grads.push(C3A * Vector3::new(6.0 * x * y, 3.0 * (x * x - y * y), 0.0));
        grads.push(C3B * Vector3::new(y * z, x * z, x * y));
        grads.push(C3C * Vector3::new(0.0, 5.0 * z * z - 1.0, 10.0 * y * z));
        grads.push(C3D * Vector3::new(0.0, 0.0, 15.0 * z * z - 3.0));
        grads.push(C3C * Vector3::new(5.0 * z * z - 1.0, 0.0, 10.0 * x * z));
        grads.push(C3E * Vector3::new(2.0 * x * z, -2.0 * y * z, x * x - y * y));
        grads.push(C3A * Vector3::new(3.0 * (x * x - y * y), -6.0 * x * y, 0.0));
    }
    Ok((vals, grads))
}

/// Dot product of a coefficient vector with the basis at `dir`.
pub fn sh_dot(degree: usize, coeffs: &[f64], dir: Vector3<f64>) -> Result<f64> {
    let basis = sh_evaluate(degree, dir)?;
    if coeffs.len() != basis.len() {
        return Err(Error::Dimension(format!(
            "coefficient length {} does not match basis size {} for degree {degree}",
            coeffs.len(),
            basis.len()
        )));
    }
    Ok(coeffs.iter().zip(&basis).map(|(c, y)| c * y).sum())
}
