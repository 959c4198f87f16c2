//! Gradient-domain detail recovery.
//!
//! A guidance field of log2 gradients is blended across the overlaps the
//! same way the panoramas are. The detail layer `zd` minimises
//!
//! ```text
//! |zd|^2 + lambda * sum_d | (alpha * V_d - G_d zd) / psi(V_d) |^2,   d in {x, y}
//! ```
//!
//! with forward-difference operators `G_d` and `psi(v) = sqrt(|v|^0.75 + 2)`
//! taken pointwise. The normal equations
//! `(I + lambda * sum_d G_d' W_d G_d) zd = lambda * alpha * sum_d G_d' W_d V_d`,
//! `W_d = diag(1 / psi(V_d)^2)`, are symmetric positive definite and are
//! solved matrix-free by Jacobi-preconditioned conjugate gradients, one colour
//! channel at a time. The result is `Zs * 2^zd`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{quantize_sample, FloatImage, LdrImage};
use crate::layout::{PanoLayout, Region};
use crate::pano::{overlap_weight, PanoImage};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Relative residual `|b - A z| / |b|` at which CG stops.
    pub cg_tolerance: f64,
    pub cg_max_iters: usize,
    /// Weight of the unenhanced image in the final blend.
    pub nu: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.125,
            alpha: 1.125,
            cg_tolerance: 1e-6,
            cg_max_iters: 2000,
            nu: 0.0,
        }
    }
}

impl SolverConfig {
    /// `lambda = 0` is accepted and switches detail recovery off.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !self.alpha.is_finite() {
            return Err(Error::invalid("alpha must be finite"));
        }
        if !(self.cg_tolerance.is_finite() && self.cg_tolerance > 0.0) {
            return Err(Error::invalid("cg tolerance must be positive"));
        }
        if self.cg_max_iters == 0 {
            return Err(Error::invalid("cg max iterations must be positive"));
        }
        if !(0.0..=1.0).contains(&self.nu) {
            return Err(Error::invalid(format!(
                "nu must lie in [0, 1], got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

/// `log2(x + 1)` pointwise.
pub fn log_domain(img: &FloatImage) -> Result<FloatImage> {
    if img.data().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("log domain needs non-negative samples"));
    }
    Ok(img.map(|v| (v + 1.0).log2()))
}

/// `sqrt(|v|^0.75 + 2)`.
pub fn psi_weight(v: f64) -> f64 {
    (v.abs().powf(0.75) + 2.0).sqrt()
}

/// Per-pixel gradient targets, one value per colour channel.
#[derive(Clone, Debug)]
pub struct GuidanceField {
    pub vx: FloatImage,
    pub vy: FloatImage,
}

impl GuidanceField {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        GuidanceField {
            vx: FloatImage::zeros(width, height, channels),
            vy: FloatImage::zeros(width, height, channels),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DetailMap {
    pub zd: FloatImage,
    /// CG iterations and final relative residual, per channel.
    pub stats: Vec<(usize, f64)>,
}

/// Forward differences, zero in the last column / row.
fn gradients(img: &FloatImage) -> (FloatImage, FloatImage) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let gx = FloatImage::from_fn(w, h, ch, |x, y, c| {
        if x + 1 < w {
            img.get(x + 1, y, c) - img.get(x, y, c)
        } else {
            0.0
        }
    });
    let gy = FloatImage::from_fn(w, h, ch, |x, y, c| {
        if y + 1 < h {
            img.get(x, y + 1, c) - img.get(x, y, c)
        } else {
            0.0
        }
    });
    (gx, gy)
}

/// Guidance field from the log-domain panoramas of the three exposure
/// levels. Each single-view region takes the gradients of its own level;
/// overlaps ramp from the left level's gradients to the right level's.
pub fn guidance_field(levels_log: [&FloatImage; 3], layout: &PanoLayout) -> Result<GuidanceField> {
    let expected = (layout.pano_width(), layout.pano_height());
    for l in &levels_log {
        if l.dims() != expected {
            return Err(Error::dims("log panorama", expected, l.dims()));
        }
    }
    let ch = levels_log[0].channels();
    let grads: Vec<(FloatImage, FloatImage)> = levels_log.iter().map(|l| gradients(l)).collect();
    let (w, h) = expected;
    // (left level, weight of left, right level) per column
    let plan: Vec<(usize, f64, usize)> = (0..w)
        .map(|x| match layout.region_of(x).expect("column in range") {
            Region::Chi1 => (0, 1.0, 0),
            Region::Chi2 => (1, 1.0, 1),
            Region::Chi3 => (2, 1.0, 2),
            r @ Region::Xi12 => (0, overlap_weight(x, r, layout).unwrap(), 1),
            r @ Region::Xi23 => (1, overlap_weight(x, r, layout).unwrap(), 2),
        })
        .collect();
    let blend = |pick: fn(&(FloatImage, FloatImage)) -> &FloatImage| {
        FloatImage::from_fn(w, h, ch, |x, y, c| {
            let (a, wt, b) = plan[x];
            let gb = pick(&grads[b]).get(x, y, c);
            if a == b {
                gb
            } else {
                gb + wt * (pick(&grads[a]).get(x, y, c) - gb)
            }
        })
    };
    Ok(GuidanceField {
        vx: blend(|g| &g.0),
        vy: blend(|g| &g.1),
    })
}

/// Matrix-free normal-equation operator for one channel.
pub struct DetailSystem {
    width: usize,
    height: usize,
    lambda: f64,
    /// Edge weights `1 / psi(V)^2`; entries in the last column (x) or last
    /// row (y) have no edge and are zero.
    wx: Vec<f64>,
    wy: Vec<f64>,
    rhs: Vec<f64>,
    diag: Vec<f64>,
}

impl DetailSystem {
    pub fn new(
        width: usize,
        height: usize,
        vx: &[f64],
        vy: &[f64],
        lambda: f64,
        alpha: f64,
    ) -> Self {
        let n = width * height;
        assert_eq!(vx.len(), n);
        assert_eq!(vy.len(), n);
        let mut wx = vec![0.0; n];
        let mut wy = vec![0.0; n];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if x + 1 < width {
                    wx[i] = 1.0 / psi_weight(vx[i]).powi(2);
                }
                if y + 1 < height {
                    wy[i] = 1.0 / psi_weight(vy[i]).powi(2);
                }
            }
        }
        let tx: Vec<f64> = wx.iter().zip(vx).map(|(w, v)| w * v).collect();
        let ty: Vec<f64> = wy.iter().zip(vy).map(|(w, v)| w * v).collect();
        let mut rhs = vec![0.0; n];
        add_grad_transpose(&mut rhs, &tx, &ty, width, height, lambda * alpha);
        let mut diag = vec![1.0; n];
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if x + 1 < width {
                    diag[i] += lambda * wx[i];
                    diag[i + 1] += lambda * wx[i];
                }
                if y + 1 < height {
                    diag[i] += lambda * wy[i];
                    diag[i + width] += lambda * wy[i];
                }
            }
        }
        DetailSystem {
            width,
            height,
            lambda,
            wx,
            wy,
            rhs,
            diag,
        }
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `out = A z`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let mut tx = vec![0.0; z.len()];
        let mut ty = vec![0.0; z.len()];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    tx[i] = self.wx[i] * (z[i + 1] - z[i]);
                }
                if y + 1 < h {
                    ty[i] = self.wy[i] * (z[i + w] - z[i]);
                }
            }
        }
        out.copy_from_slice(z);
        add_grad_transpose(out, &tx, &ty, w, h, self.lambda);
    }

    pub fn relative_residual(&self, z: &[f64]) -> f64 {
        let mut az = vec![0.0; z.len()];
        self.apply(z, &mut az);
        let r: f64 = self
            .rhs
            .iter()
            .zip(&az)
            .map(|(b, a)| (b - a) * (b - a))
            .sum();
        let b: f64 = self.rhs.iter().map(|v| v * v).sum();
        if b == 0.0 {
            r.sqrt()
        } else {
            (r / b).sqrt()
        }
    }

    /// Preconditioned conjugate gradients from a zero start.
    pub fn solve(&self, tol: f64, max_iters: usize) -> Result<(Vec<f64>, usize, f64)> {
        let n = self.rhs.len();
        let b_norm = dot(&self.rhs, &self.rhs).sqrt();
        if b_norm == 0.0 {
            return Ok((vec![0.0; n], 0, 0.0));
        }
        let mut x = vec![0.0; n];
        let mut r = self.rhs.clone();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);
        for it in 1..=max_iters {
            self.apply(&p, &mut ap);
            let step = rz / dot(&p, &ap);
            for i in 0..n {
                x[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            if dot(&r, &r).sqrt() <= tol * b_norm {
                // Confirm against the true residual; the recurrence drifts.
                self.apply(&x, &mut ap);
                for i in 0..n {
                    r[i] = self.rhs[i] - ap[i];
                }
                let rel = dot(&r, &r).sqrt() / b_norm;
                if rel <= tol {
                    return Ok((x, it, rel));
                }
            }
            for i in 0..n {
                z[i] = r[i] / self.diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NotConverged {
            iterations: max_iters,
            residual: self.relative_residual(&x),
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += scale * (Gx' tx + Gy' ty)`.
fn add_grad_transpose(out: &mut [f64], tx: &[f64], ty: &[f64], w: usize, h: usize, scale: f64) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                out[i] -= scale * tx[i];
                out[i + 1] += scale * tx[i];
            }
            if y + 1 < h {
                out[i] -= scale * ty[i];
                out[i + w] += scale * ty[i];
            }
        }
    }
}

/// Value of the quadratic objective for one channel.
pub fn objective(
    vx: &[f64],
    vy: &[f64],
    z: &[f64],
    width: usize,
    height: usize,
    cfg: &SolverConfig,
) -> f64 {
    let mut data = 0.0;
    let mut smooth = 0.0;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            data += z[i] * z[i];
            let gx = if x + 1 < width { z[i + 1] - z[i] } else { 0.0 };
            let gy = if y + 1 < height {
                z[i + width] - z[i]
            } else {
                0.0
            };
            let ex = (cfg.alpha * vx[i] - gx) / psi_weight(vx[i]);
            let ey = (cfg.alpha * vy[i] - gy) / psi_weight(vy[i]);
            smooth += ex * ex + ey * ey;
        }
    }
    data + cfg.lambda * smooth
}

/// Detail layer for every channel of `v`.
pub fn solve_detail(v: &GuidanceField, cfg: &SolverConfig) -> Result<DetailMap> {
    cfg.validate()?;
    let (w, h, ch) = (v.vx.width(), v.vx.height(), v.vx.channels());
    if v.vy.dims() != (w, h) || v.vy.channels() != ch {
        return Err(Error::dims("guidance field", (w, h), v.vy.dims()));
    }
    if v.vx
        .data()
        .iter()
        .chain(v.vy.data())
        .any(|x| !x.is_finite())
    {
        return Err(Error::invalid("guidance field is not finite"));
    }
    let solved: Vec<Result<(Vec<f64>, usize, f64)>> = (0..ch)
        .into_par_iter()
        .map(|c| {
            let vx = v.vx.plane(c).into_data();
            let vy = v.vy.plane(c).into_data();
            DetailSystem::new(w, h, &vx, &vy, cfg.lambda, cfg.alpha)
                .solve(cfg.cg_tolerance, cfg.cg_max_iters)
        })
        .collect();
    let mut planes = Vec::with_capacity(ch);
    let mut stats = Vec::with_capacity(ch);
    for r in solved {
        let (z, it, res) = r?;
        planes.push(FloatImage::from_vec_unchecked(w, h, 1, z));
        stats.push((it, res));
    }
    Ok(DetailMap {
        zd: FloatImage::from_planes(&planes),
        stats,
    })
}

/// `nu * Zs + (1 - nu) * Zs * 2^zd`, clamped to `[0, 255]`.
pub fn recombine(zs: &PanoImage, zd: &DetailMap, cfg: &SolverConfig) -> Result<PanoImage> {
    if zs.image.dims() != zd.zd.dims() || zs.image.channels() != zd.zd.channels() {
        return Err(Error::dims("detail map", zs.image.dims(), zd.zd.dims()));
    }
    let nu = cfg.nu;
    let data = zs
        .image
        .data()
        .iter()
        .zip(zd.zd.data())
        .map(|(&s, &d)| {
            // nu * s + (1 - nu) * s is not always exactly s in floating point
            if d == 0.0 {
                return s.clamp(0.0, 255.0);
            }
            let enhanced = s * d.exp2();
            (nu * s + (1.0 - nu) * enhanced).clamp(0.0, 255.0)
        })
        .collect();
    Ok(PanoImage {
        image: FloatImage::from_vec_unchecked(
            zs.image.width(),
            zs.image.height(),
            zs.image.channels(),
            data,
        ),
        layout: zs.layout.clone(),
    })
}

/// Detail layer mapped to 8 bits around mid-grey for inspection.
pub fn detail_visualization(zd: &DetailMap) -> LdrImage {
    let peak = zd.zd.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 127.0 / peak } else { 0.0 };
    let img = &zd.zd;
    if img.channels() == 3 {
        img.map(|v| 128.0 + v * scale).quantize()
    } else {
        LdrImage::from_fn(img.width(), img.height(), |x, y| {
            [quantize_sample(128.0 + img.get(x, y, 0) * scale); 3]
        })
    }
}
