//! Scene domain types: Gaussian primitives, pinhole cameras, and the
//! JSON serialization shared by every pipeline stage.

use crate::sh::{self, sh_basis_size};
use crate::{Error, Result};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One 3D Gaussian: geometry, opacity, and SH appearance/uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub mean: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    /// Per-axis standard deviations, world units, all positive.
    pub scale: Vector3<f64>,
    /// Post-activation opacity in (0,1).
    pub opacity: f64,
    /// 3 x s coefficients, channel-major (all R, then G, then B).
    pub color_sh: Vec<f64>,
    /// s coefficients.
    pub uncert_sh: Vec<f64>,
}

impl Primitive {
    /// Σ = R S Sᵀ Rᵀ; symmetric positive-definite for valid primitives.
    pub fn covariance(&self) -> Matrix3<f64> {
        let r = self.rotation.to_rotation_matrix();
        let d = Matrix3::from_diagonal(&self.scale.map(|s| s * s));
        r.matrix() * d * r.matrix().transpose()
    }

    /// View-dependent uncertainty u(d), raw (unclamped).
    pub fn evaluate_uncertainty(&self, degree: usize, dir: Vector3<f64>) -> Result<f64> {
        if self.uncert_sh.len() != sh_basis_size(degree) {
            return Err(Error::Dimension(format!(
                "uncert_sh length {} does not match degree {degree}",
                self.uncert_sh.len()
            )));
        }
        sh::sh_dot(degree, &self.uncert_sh, dir)
    }

    /// View-dependent RGB color (raw SH evaluation; clamping happens at
    /// pixel output).
    pub fn evaluate_color(&self, degree: usize, dir: Vector3<f64>) -> Result<[f64; 3]> {
        let s = sh_basis_size(degree);
        if self.color_sh.len() != 3 * s {
            return Err(Error::Dimension(format!(
                "color_sh length {} does not match degree {degree}",
                self.color_sh.len()
            )));
        }
        let basis = sh::sh_evaluate(degree, dir)?;
        let mut out = [0.0; 3];
        for (ch, o) in out.iter_mut().enumerate() {
            *o = self.color_sh[ch * s..(ch + 1) * s]
                .iter()
                .zip(&basis)
                .map(|(c, y)| c * y)
                .sum();
        }
        Ok(out)
    }

    pub fn validate(&self, sh_degree_color: usize, sh_degree_uncert: usize) -> Result<()> {
        let q = self.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid("quaternion not unit".into()));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::Invalid("non-positive scale".into()));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::Invalid(format!("opacity {} outside (0,1)", self.opacity)));
        }
        if self.color_sh.len() != 3 * sh_basis_size(sh_degree_color) {
            return Err(Error::Dimension("color_sh length".into()));
        }
        if self.uncert_sh.len() != sh_basis_size(sh_degree_uncert) {
            return Err(Error::Dimension("uncert_sh length".into()));
        }
        Ok(())
    }
}

/// Pinhole camera with a rigid world-to-camera pose. Camera frame:
/// x right, y down, z forward (depth).
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Invalid("focal lengths must be positive".into()));
        }
        if self.cx < 0.0 || self.cx >= self.width as f64 || self.cy < 0.0 || self.cy >= self.height as f64 {
            return Err(Error::Invalid("principal point outside image".into()));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    pub sh_degree_color: usize,
    pub sh_degree_uncert: usize,
    pub background_color: Vector3<f64>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.validate(self.sh_degree_color, self.sh_degree_uncert)?;
        }
        Ok(())
    }

    pub fn color_basis_size(&self) -> usize {
        sh_basis_size(self.sh_degree_color)
    }

    pub fn uncert_basis_size(&self) -> usize {
        sh_basis_size(self.sh_degree_uncert)
    }
}

// ------------------------------------------------------------- JSON I/O

#[derive(Serialize, Deserialize)]
struct PrimitiveJson {
    mean: [f64; 3],
    /// wxyz
    rotation: [f64; 4],
    scale: [f64; 3],
    opacity: f64,
    color_sh: Vec<f64>,
    uncert_sh: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SceneJson {
    sh_degree_color: usize,
    sh_degree_uncert: usize,
    background_color: [f64; 3],
    primitives: Vec<PrimitiveJson>,
}

#[derive(Serialize, Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    /// row-major 3x3
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Scene {
    pub fn to_json_string(&self) -> Result<String> {
        let doc = SceneJson {
            sh_degree_color: self.sh_degree_color,
            sh_degree_uncert: self.sh_degree_uncert,
            background_color: self.background_color.into(),
            primitives: self
                .primitives
                .iter()
                .map(|p| {
                    let q = p.rotation.quaternion();
                    PrimitiveJson {
                        mean: p.mean.into(),
                        rotation: [q.w, q.i, q.j, q.k],
                        scale: p.scale.into(),
                        opacity: p.opacity,
                        color_sh: p.color_sh.clone(),
                        uncert_sh: p.uncert_sh.clone(),
                    }
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: SceneJson = serde_json::from_str(s)?;
        let scene = Scene {
            sh_degree_color: doc.sh_degree_color,
            sh_degree_uncert: doc.sh_degree_uncert,
            background_color: doc.background_color.into(),
            primitives: doc
                .primitives
                .into_iter()
                .map(|p| Primitive {
                    mean: p.mean.into(),
                    rotation: UnitQuaternion::from_quaternion(Quaternion::new(
                        p.rotation[0],
                        p.rotation[1],
                        p.rotation[2],
                        p.rotation[3],
                    )),
                    scale: p.scale.into(),
                    opacity: p.opacity,
                    color_sh: p.color_sh,
                    uncert_sh: p.uncert_sh,
                })
                .collect(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

pub fn cameras_to_json_string(cams: &[Camera]) -> Result<String> {
    let docs: Vec<CameraJson> = cams
        .iter()
        .map(|c| {
            let mut rot = [0.0; 9];
            for r in 0..3 {
                for k in 0..3 {
                    rot[r * 3 + k] = c.rotation[(r, k)];
                }
            }
            CameraJson {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
                rotation: rot,
                translation: c.translation.into(),
            }
        })
        .collect();
    Ok(serde_json::to_string_pretty(&docs)?)
}

pub fn cameras_from_json_str(s: &str) -> Result<Vec<Camera>> {
    let docs: Vec<CameraJson> = serde_json::from_str(s)?;
    let cams: Vec<Camera> = docs
        .into_iter()
        .map(|d| Camera {
            fx: d.fx,
            fy: d.fy,
            cx: d.cx,
            cy: d.cy,
            width: d.width,
            height: d.height,
            rotation: Matrix3::from_row_slice(&d.rotation),
            translation: d.translation.into(),
        })
        .collect();
    for c in &cams {
        c.validate()?;
    }
    Ok(cams)
}

pub fn save_cameras(path: &Path, cams: &[Camera]) -> Result<()> {
    std::fs::write(path, cameras_to_json_string(cams)?)?;
    Ok(())
}

pub fn load_cameras(path: &Path) -> Result<Vec<Camera>> {
    cameras_from_json_str(&std::fs::read_to_string(path)?)
}
