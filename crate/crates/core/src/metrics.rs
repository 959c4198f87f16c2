//! Full-reference quality metrics.

use crate::error::{Error, Result};
use crate::image::LdrImage;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// dB; `f64::INFINITY` for identical inputs.
    pub psnr: f64,
    pub ssim: f64,
}

fn check_dims(a: &LdrImage, b: &LdrImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims("metric inputs", a.dims(), b.dims()));
    }
    Ok(())
}

pub fn mse(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.data().len();
    if n == 0 {
        return Err(Error::invalid("empty image"));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// PSNR over all colour samples jointly.
pub fn psnr(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / m).log10()
    })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

fn luma(img: &LdrImage) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

/// Separable 'valid' Gaussian filtering.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * src[y * w + x + t])
                .sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[(y + t) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean single-scale SSIM of the luma planes (11x11 Gaussian window,
/// sigma 1.5, no padding).
pub fn ssim(a: &LdrImage, b: &LdrImage) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "image {w}x{h} too small for SSIM (need {SSIM_WINDOW}x{SSIM_WINDOW})"
        )));
    }
    let k = gaussian_window();
    let ga = luma(a);
    let gb = luma(b);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let mu_a = filter_valid(&ga, w, h, &k);
    let mu_b = filter_valid(&gb, w, h, &k);
    let aa = filter_valid(&prod(&ga, &ga), w, h, &k);
    let bb = filter_valid(&prod(&gb, &gb), w, h, &k);
    let ab = filter_valid(&prod(&ga, &gb), w, h, &k);
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

pub fn evaluate(pred: &LdrImage, gt: &LdrImage) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
    })
}
