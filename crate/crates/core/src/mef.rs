//! Multi-scale exposure fusion.
//!
//! Each input gets a per-pixel quality weight (local contrast, colour
//! saturation, closeness to mid-grey). The normalised weights are smoothed
//! with a Gaussian pyramid and used to blend the inputs' Laplacian pyramids
//! level by level.

use crate::error::{Error, Result};
use crate::image::FloatImage;
use crate::pano::PanoImage;

const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

pub const WELL_EXPOSED_SIGMA: f64 = 0.2;
pub const WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PyramidKind {
    Gaussian,
    Laplacian,
}

#[derive(Clone, Debug)]
pub struct Pyramid {
    pub levels: Vec<FloatImage>,
    pub kind: PyramidKind,
}

/// Deepest pyramid allowed for an image of this size.
pub fn max_depth(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    (m.ilog2() as usize).saturating_sub(1)
}

/// `floor(log2(min side)) - 2`, which keeps the coarsest level at least four
/// pixels across.
pub fn default_depth(width: usize, height: usize) -> usize {
    let m = width.min(height).max(1);
    (m.ilog2() as usize).saturating_sub(2)
}

fn check_depth(img: &FloatImage, depth: usize) -> Result<()> {
    let limit = max_depth(img.width(), img.height());
    if depth > limit {
        return Err(Error::invalid(format!(
            "pyramid depth {depth} too large for {}x{} (max {limit})",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Separable 5-tap blur with clamped borders, then keep even samples.
fn downsample(img: &FloatImage) -> FloatImage {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let src = img.data();
    // Horizontal pass on even columns only.
    let mut tmp = vec![0.0; nw * h * ch];
    for y in 0..h {
        for nx in 0..nw {
            let x = 2 * nx;
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, &k) in KERNEL.iter().enumerate() {
                    let sx = (x as isize + t as isize - 2).clamp(0, w as isize - 1) as usize;
                    acc += k * src[(y * w + sx) * ch + c];
                }
                tmp[(y * nw + nx) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; nw * nh * ch];
    for ny in 0..nh {
        let y = 2 * ny;
        for nx in 0..nw {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, &k) in KERNEL.iter().enumerate() {
                    let sy = (y as isize + t as isize - 2).clamp(0, h as isize - 1) as usize;
                    acc += k * tmp[(sy * nw + nx) * ch + c];
                }
                out[(ny * nw + nx) * ch + c] = acc;
            }
        }
    }
    FloatImage::from_vec_unchecked(nw, nh, ch, out)
}

// Weights from coarse samples j onto fine index x: KERNEL[x - 2j + 2] for
// |x - 2j| <= 2, renormalised over the coarse samples that exist.
fn upsample_taps(n_fine: usize, n_coarse: usize) -> Vec<Vec<(usize, f64)>> {
    (0..n_fine)
        .map(|x| {
            let mut taps: Vec<(usize, f64)> = (0..n_coarse)
                .filter_map(|j| {
                    let d = x as isize - 2 * j as isize;
                    (d.abs() <= 2).then(|| (j, KERNEL[(d + 2) as usize]))
                })
                .collect();
            let norm: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= norm;
            }
            taps
        })
        .collect()
}

/// Interpolates `coarse` up to `w x h`.
fn upsample(coarse: &FloatImage, w: usize, h: usize) -> FloatImage {
    let (cw, chh, ch) = (coarse.width(), coarse.height(), coarse.channels());
    let tx = upsample_taps(w, cw);
    let ty = upsample_taps(h, chh);
    let src = coarse.data();
    let mut tmp = vec![0.0; w * chh * ch];
    for y in 0..chh {
        for (x, taps) in tx.iter().enumerate() {
            for c in 0..ch {
                tmp[(y * w + x) * ch + c] = taps
                    .iter()
                    .map(|&(j, k)| k * src[(y * cw + j) * ch + c])
                    .sum();
            }
        }
    }
    let mut out = vec![0.0; w * h * ch];
    for (y, taps) in ty.iter().enumerate() {
        for x in 0..w {
            for c in 0..ch {
                out[(y * w + x) * ch + c] = taps
                    .iter()
                    .map(|&(j, k)| k * tmp[(j * w + x) * ch + c])
                    .sum();
            }
        }
    }
    FloatImage::from_vec_unchecked(w, h, ch, out)
}

/// `depth + 1` levels, level 0 at full resolution.
pub fn gaussian_pyramid(img: &FloatImage, depth: usize) -> Result<Pyramid> {
    check_depth(img, depth)?;
    let mut levels = vec![img.clone()];
    for _ in 0..depth {
        let next = downsample(levels.last().expect("non-empty"));
        levels.push(next);
    }
    Ok(Pyramid {
        levels,
        kind: PyramidKind::Gaussian,
    })
}

/// Band-pass levels `G_k - up(G_{k+1})` plus the coarsest Gaussian level.
pub fn laplacian_pyramid(img: &FloatImage, depth: usize) -> Result<Pyramid> {
    let g = gaussian_pyramid(img, depth)?;
    let mut levels = Vec::with_capacity(depth + 1);
    for k in 0..depth {
        let (fine, coarse) = (&g.levels[k], &g.levels[k + 1]);
        let up = upsample(coarse, fine.width(), fine.height());
        let band: Vec<f64> = fine
            .data()
            .iter()
            .zip(up.data())
            .map(|(a, b)| a - b)
            .collect();
        levels.push(FloatImage::from_vec_unchecked(
            fine.width(),
            fine.height(),
            fine.channels(),
            band,
        ));
    }
    levels.push(g.levels[depth].clone());
    Ok(Pyramid {
        levels,
        kind: PyramidKind::Laplacian,
    })
}

/// Inverts [`laplacian_pyramid`].
pub fn collapse(p: &Pyramid) -> Result<FloatImage> {
    if p.kind != PyramidKind::Laplacian {
        return Err(Error::invalid("only Laplacian pyramids collapse"));
    }
    let mut acc = p
        .levels
        .last()
        .ok_or_else(|| Error::invalid("empty pyramid"))?
        .clone();
    for band in p.levels.iter().rev().skip(1) {
        let up = upsample(&acc, band.width(), band.height());
        let data = band
            .data()
            .iter()
            .zip(up.data())
            .map(|(a, b)| a + b)
            .collect();
        acc = FloatImage::from_vec_unchecked(band.width(), band.height(), band.channels(), data);
    }
    Ok(acc)
}

fn gray(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Well-exposedness factor of one RGB sample on the `[0, 255]` scale.
pub fn well_exposedness(rgb: [f64; 3]) -> f64 {
    let s2 = 2.0 * WELL_EXPOSED_SIGMA * WELL_EXPOSED_SIGMA;
    rgb.iter()
        .map(|&v| {
            let d = v / 255.0 - 0.5;
            (-d * d / s2).exp()
        })
        .product()
}

/// Contrast x saturation x well-exposedness, plus a small floor.
pub fn quality_weight(img: &FloatImage) -> FloatImage {
    assert_eq!(img.channels(), 3);
    let (w, h) = img.dims();
    let g: Vec<f64> = img
        .data()
        .chunks_exact(3)
        .map(|p| gray(p[0], p[1], p[2]) / 255.0)
        .collect();
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        g[y * w + x]
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let lap = at(xi - 1, yi) + at(xi + 1, yi) + at(xi, yi - 1) + at(xi, yi + 1)
                - 4.0 * at(xi, yi);
            let contrast = lap.abs();
            let p = [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)];
            let n = p.map(|v| v / 255.0);
            let mean = (n[0] + n[1] + n[2]) / 3.0;
            let saturation = (n.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
            out.push(contrast * saturation * well_exposedness(p) + WEIGHT_FLOOR);
        }
    }
    FloatImage::from_vec_unchecked(w, h, 1, out)
}

/// Divides each map by the pointwise sum of all maps.
pub fn normalize_weights(maps: &[FloatImage]) -> Vec<FloatImage> {
    let n = maps[0].data().len();
    let sums: Vec<f64> = (0..n)
        .map(|i| maps.iter().map(|m| m.data()[i]).sum())
        .collect();
    maps.iter()
        .map(|m| {
            let data = m.data().iter().zip(&sums).map(|(v, s)| v / s).collect();
            FloatImage::from_vec_unchecked(m.width(), m.height(), 1, data)
        })
        .collect()
}

/// Fused image and the largest excursion outside `[0, 255]` before clamping.
#[derive(Clone, Debug)]
pub struct FusionOutput {
    pub image: FloatImage,
    pub max_overshoot: f64,
}

/// Fuses equally sized RGB images.
pub fn fuse_images(images: &[&FloatImage], depth: usize) -> Result<FusionOutput> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("nothing to fuse"))?;
    for img in images {
        if img.dims() != first.dims() || img.channels() != 3 {
            return Err(Error::dims("fusion input", first.dims(), img.dims()));
        }
    }
    let weights = normalize_weights(&images.iter().map(|i| quality_weight(i)).collect::<Vec<_>>());
    let mut fused: Option<Vec<FloatImage>> = None;
    for (img, w) in images.iter().zip(&weights) {
        let lp = laplacian_pyramid(img, depth)?;
        let gp = gaussian_pyramid(w, depth)?;
        let contrib: Vec<FloatImage> = lp
            .levels
            .iter()
            .zip(&gp.levels)
            .map(|(band, wl)| {
                let data = band
                    .data()
                    .chunks_exact(3)
                    .zip(wl.data())
                    .flat_map(|(px, &wv)| [px[0] * wv, px[1] * wv, px[2] * wv])
                    .collect();
                FloatImage::from_vec_unchecked(band.width(), band.height(), 3, data)
            })
            .collect();
        fused = Some(match fused {
            None => contrib,
            Some(mut acc) => {
                for (a, c) in acc.iter_mut().zip(&contrib) {
                    for (x, y) in a.data_mut().iter_mut().zip(c.data()) {
                        *x += y;
                    }
                }
                acc
            }
        });
    }
    let raw = collapse(&Pyramid {
        levels: fused.expect("at least one input"),
        kind: PyramidKind::Laplacian,
    })?;
    let max_overshoot = raw
        .data()
        .iter()
        .map(|&v| (-v).max(v - 255.0).max(0.0))
        .fold(0.0, f64::max);
    Ok(FusionOutput {
        image: raw.map(|v| v.clamp(0.0, 255.0)),
        max_overshoot,
    })
}

/// Fuses the three exposure-level panoramas into one.
pub fn fuse(panos: [&PanoImage; 3], depth: usize) -> Result<(PanoImage, f64)> {
    let out = fuse_images(&panos.map(|p| &p.image), depth)?;
    Ok((
        PanoImage {
            image: out.image,
            layout: panos[0].layout.clone(),
        },
        out.max_overshoot,
    ))
}
