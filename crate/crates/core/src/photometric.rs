//! Per-pixel residual maps: L1, SSIM/DSSIM (11x11 Gaussian window,
//! sigma 1.5, symmetric edge padding), the combined 3DGS loss map, and
//! PSNR. Also hosts the analytic SSIM backward pass used by the fitter.

use crate::image::{ColorImage, ScalarMap};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const DEFAULT_LAMBDA: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct ResidualMap {
    pub map: ScalarMap,
    pub lambda: f64,
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut k = [0.0; SSIM_WINDOW];
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = (i as isize - r) as f64;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Symmetric (edge-inclusive) index reflection.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn blur_1d(data: &[f64], n_fast: usize, n_slow: usize, stride_fast: usize, stride_slow: usize, out: &mut [f64]) {
    let k = gaussian_kernel();
    let r = (SSIM_WINDOW / 2) as isize;
    for s in 0..n_slow {
        let base = s * stride_slow;
        for f in 0..n_fast {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let src = reflect(f as isize + t as isize - r, n_fast);
                acc += kv * data[base + src * stride_fast];
            }
            out[base + f * stride_fast] = acc;
        }
    }
}

fn blur_adjoint_1d(data: &[f64], n_fast: usize, n_slow: usize, stride_fast: usize, stride_slow: usize, out: &mut [f64]) {
    let k = gaussian_kernel();
    let r = (SSIM_WINDOW / 2) as isize;
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for s in 0..n_slow {
        let base = s * stride_slow;
        for f in 0..n_fast {
            let g = data[base + f * stride_fast];
            for (t, &kv) in k.iter().enumerate() {
                let dst = reflect(f as isize + t as isize - r, n_fast);
                out[base + dst * stride_fast] += kv * g;
            }
        }
    }
}

/// Separable Gaussian blur with symmetric padding.
pub fn blur(map: &ScalarMap) -> ScalarMap {
    let mut tmp = vec![0.0; map.data.len()];
    let mut out = vec![0.0; map.data.len()];
    blur_1d(&map.data, map.width, map.height, 1, map.width, &mut tmp);
    blur_1d(&tmp, map.height, map.width, map.width, 1, &mut out);
    ScalarMap { width: map.width, height: map.height, data: out }
}

/// Adjoint of [`blur`] (exact transpose, including padding behavior).
pub fn blur_adjoint(map: &ScalarMap) -> ScalarMap {
    let mut tmp = vec![0.0; map.data.len()];
    let mut out = vec![0.0; map.data.len()];
    blur_adjoint_1d(&map.data, map.height, map.width, map.width, 1, &mut tmp);
    blur_adjoint_1d(&tmp, map.width, map.height, 1, map.width, &mut out);
    ScalarMap { width: map.width, height: map.height, data: out }
}

pub fn l1_map(a: &ColorImage, b: &ColorImage) -> Result<ScalarMap> {
    a.same_shape(b)?;
    let n = a.width * a.height;
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let d = (0..3)
            .map(|c| (a.data[i * 3 + c] - b.data[i * 3 + c]).abs())
            .sum::<f64>()
            / 3.0;
        data.push(d);
    }
    Ok(ScalarMap { width: a.width, height: a.height, data })
}

fn check_ssim_size(a: &ColorImage) -> Result<()> {
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Invalid(format!(
            "image {}x{} smaller than SSIM window {SSIM_WINDOW}",
            a.width, a.height
        )));
    }
    Ok(())
}

struct SsimChannelMaps {
    mu_x: ScalarMap,
    mu_y: ScalarMap,
    xx: ScalarMap,
    xy: ScalarMap,
    yy: ScalarMap,
}

fn ssim_channel_maps(x: &ScalarMap, y: &ScalarMap) -> SsimChannelMaps {
    let prod = |a: &ScalarMap, b: &ScalarMap| ScalarMap {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(p, q)| p * q).collect(),
    };
    SsimChannelMaps {
        mu_x: blur(x),
        mu_y: blur(y),
        xx: blur(&prod(x, x)),
        xy: blur(&prod(x, y)),
        yy: blur(&prod(y, y)),
    }
}

fn ssim_channel(x: &ScalarMap, y: &ScalarMap) -> ScalarMap {
    let m = ssim_channel_maps(x, y);
    let n = x.data.len();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let (mx, my) = (m.mu_x.data[i], m.mu_y.data[i]);
        let sx = m.xx.data[i] - mx * mx;
        let sy = m.yy.data[i] - my * my;
        let sxy = m.xy.data[i] - mx * my;
        let a1 = 2.0 * mx * my + SSIM_C1;
        let a2 = 2.0 * sxy + SSIM_C2;
        let b1 = mx * mx + my * my + SSIM_C1;
        let b2 = sx + sy + SSIM_C2;
        data.push(a1 * a2 / (b1 * b2));
    }
    ScalarMap { width: x.width, height: x.height, data }
}

/// Per-pixel SSIM, channel-averaged.
pub fn ssim_map(a: &ColorImage, b: &ColorImage) -> Result<ScalarMap> {
    a.same_shape(b)?;
    check_ssim_size(a)?;
    let mut acc = ScalarMap::zeros(a.width, a.height);
    for c in 0..3 {
        let s = ssim_channel(&a.channel(c), &b.channel(c));
        for (o, v) in acc.data.iter_mut().zip(&s.data) {
            *o += v / 3.0;
        }
    }
    Ok(acc)
}

/// Per-pixel DSSIM: clamp(1 - SSIM, 0, 1).
pub fn dssim_map(a: &ColorImage, b: &ColorImage) -> Result<ScalarMap> {
    Ok(ssim_map(a, b)?.map(|s| (1.0 - s).clamp(0.0, 1.0)))
}

/// Combined residual: (1-lambda) * L1 + lambda * DSSIM.
pub fn residual_map(render: &ColorImage, gt: &ColorImage, lambda: f64) -> Result<ResidualMap> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("lambda {lambda} outside [0,1]")));
    }
    let l1 = l1_map(render, gt)?;
    let ds = dssim_map(render, gt)?;
    let data = l1
        .data
        .iter()
        .zip(&ds.data)
        .map(|(a, d)| (1.0 - lambda) * a + lambda * d)
        .collect();
    Ok(ResidualMap {
        map: ScalarMap { width: render.width, height: render.height, data },
        lambda,
    })
}

/// 10*log10(1/MSE) over all channels; +inf for identical images.
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    a.same_shape(b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Gradient of `sum_p upstream_p * SSIM_p(x, y)` with respect to `x`.
///
/// The per-pixel partials w.r.t. the blurred moment maps are computed in
/// closed form and pulled back through the exact blur adjoint.
pub fn ssim_backward_channel(x: &ScalarMap, y: &ScalarMap, upstream: &ScalarMap) -> ScalarMap {
    let m = ssim_channel_maps(x, y);
    let n = x.data.len();
    // upstream gradients w.r.t. mu_x (p), blur(x^2) (q), blur(xy) (r)
    let mut g_p = vec![0.0; n];
    let mut g_q = vec![0.0; n];
    let mut g_r = vec![0.0; n];
    for i in 0..n {
        let u = upstream.data[i];
        if u == 0.0 {
            continue;
        }
        let (mx, my) = (m.mu_x.data[i], m.mu_y.data[i]);
        let sx = m.xx.data[i] - mx * mx;
        let sy = m.yy.data[i] - my * my;
        let sxy = m.xy.data[i] - mx * my;
        let a1 = 2.0 * mx * my + SSIM_C1;
        let a2 = 2.0 * sxy + SSIM_C2;
        let b1 = mx * mx + my * my + SSIM_C1;
        let b2 = sx + sy + SSIM_C2;
        let s = a1 * a2 / (b1 * b2);
        let d_a1 = a2 / (b1 * b2);
        let d_a2 = a1 / (b1 * b2);
        let d_b1 = -s / b1;
        let d_b2 = -s / b2;
        // sxy = r - p*my, sx = q - p^2
        g_p[i] = u * (d_a1 * 2.0 * my + d_a2 * 2.0 * (-my) + d_b1 * 2.0 * mx + d_b2 * (-2.0 * mx));
        g_q[i] = u * d_b2;
        g_r[i] = u * d_a2 * 2.0;
    }
    let wrap = |d: Vec<f64>| ScalarMap { width: x.width, height: x.height, data: d };
    let bp = blur_adjoint(&wrap(g_p));
    let bq = blur_adjoint(&wrap(g_q));
    let br = blur_adjoint(&wrap(g_r));
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = bp.data[i] + 2.0 * x.data[i] * bq.data[i] + y.data[i] * br.data[i];
    }
    wrap(out)
}
