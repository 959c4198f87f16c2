//! Input view sets, scene directories and synthetic test scenes.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{quantize_sample, FloatImage, LdrImage};
use crate::layout::{PanoLayout, Side, View};

/// Raster extensions probed when looking up scene files, in order.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "ppm", "pnm"];

pub const LAYOUT_FILE: &str = "layout.txt";

/// Three aligned views ordered from low to high exposure.
#[derive(Clone, Debug)]
pub struct ViewSet {
    views: [LdrImage; 3],
    layout: PanoLayout,
}

impl ViewSet {
    pub fn new(z1: LdrImage, z2: LdrImage, z3: LdrImage, layout: PanoLayout) -> Result<Self> {
        let expected = (layout.view_width(), layout.view_height());
        for (view, img) in View::ALL.iter().zip([&z1, &z2, &z3]) {
            if img.dims() != expected {
                return Err(Error::dims(format!("view {view}"), expected, img.dims()));
            }
        }
        Ok(ViewSet {
            views: [z1, z2, z3],
            layout,
        })
    }

    pub fn view(&self, view: View) -> &LdrImage {
        &self.views[view.index()]
    }

    pub fn views(&self) -> &[LdrImage; 3] {
        &self.views
    }

    pub fn layout(&self) -> &PanoLayout {
        &self.layout
    }

    /// Overlap sub-image on one side of a view.
    pub fn overlap(&self, view: View, side: Side) -> Result<LdrImage> {
        extract_overlap(self.view(view), view, side, &self.layout)
    }
}

/// Full-height sub-image covering the overlap on `side` of `view`.
pub fn extract_overlap(
    image: &LdrImage,
    view: View,
    side: Side,
    layout: &PanoLayout,
) -> Result<LdrImage> {
    let expected = (layout.view_width(), layout.view_height());
    if image.dims() != expected {
        return Err(Error::dims(format!("view {view}"), expected, image.dims()));
    }
    let cols = layout.overlap_columns(view, side)?;
    image.crop(cols.start, 0, cols.len(), image.height())
}

/// Finds `<stem>.<ext>` in `dir` for the first supported extension present.
pub fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Loads `z1`, `z2`, `z3` and `layout.txt` from a scene directory.
pub fn load_viewset(dir: impl AsRef<Path>) -> Result<ViewSet> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "scene directory not found"),
        ));
    }
    let layout_path = dir.join(LAYOUT_FILE);
    let text = std::fs::read_to_string(&layout_path).map_err(|e| Error::io(&layout_path, e))?;
    let layout = PanoLayout::parse(&text)?;
    let mut views = Vec::with_capacity(3);
    for view in View::ALL {
        let path = find_image(dir, &view.to_string())
            .ok_or_else(|| Error::MissingView(format!("{view} in {}", dir.display())))?;
        views.push(LdrImage::load(path)?);
    }
    let [z1, z2, z3]: [LdrImage; 3] = views.try_into().expect("three views");
    ViewSet::new(z1, z2, z3, layout)
}

/// Crops an aligned pair to simulate camera motion.
///
/// `a` keeps columns `[10, W)` and rows `[0, H - 10)`, `b` keeps columns
/// `[0, W - 10)` and rows `[10, H)`, so both come out `(W - 10) x (H - 10)`
/// and the content of `a` sits 10 pixels right of and 10 pixels above that
/// of `b`.
pub fn simulate_misalignment(a: &LdrImage, b: &LdrImage) -> Result<(LdrImage, LdrImage)> {
    if a.dims() != b.dims() {
        return Err(Error::dims("misalignment pair", a.dims(), b.dims()));
    }
    let (w, h) = a.dims();
    if w < 11 || h < 11 {
        return Err(Error::invalid(format!(
            "image {w}x{h} too small to crop (need at least 11x11)"
        )));
    }
    Ok((
        a.crop(10, 0, w - 10, h - 10)?,
        b.crop(0, 10, w - 10, h - 10)?,
    ))
}

/// Gamma of the synthetic camera response.
pub const SYNTH_GAMMA: f64 = 2.2;

/// Synthetic camera response: linear exposure in `[0, 1]` to `[0, 255]`,
/// clipped above 1.
pub fn synth_response(x: f64) -> f64 {
    255.0 * x.clamp(0.0, 1.0).powf(1.0 / SYNTH_GAMMA)
}

/// Knobs of the procedural radiance field; all values in stops (log2).
#[derive(Clone, Debug)]
pub struct SceneParams {
    /// Log radiance at the top and bottom rows of the vertical ramp, relative
    /// to the clipping point of the shortest exposure.
    pub ramp_top: f64,
    pub ramp_bottom: f64,
    pub bumps: usize,
    pub bump_amplitude: f64,
    /// Bump standard deviations as fractions of the view width / height.
    pub bump_sigma_x: (f64, f64),
    pub bump_sigma_y: (f64, f64),
    pub tint_amplitude: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            ramp_top: -1.9,
            ramp_bottom: -17.5,
            bumps: 8,
            bump_amplitude: 0.9,
            bump_sigma_x: (0.25, 0.55),
            bump_sigma_y: (0.12, 0.35),
            tint_amplitude: 0.3,
        }
    }
}

struct Bump {
    cx: f64,
    cy: f64,
    inv_2sx2: f64,
    inv_2sy2: f64,
    amp: f64,
}

impl Bump {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let e = dx * dx * self.inv_2sx2 + dy * dy * self.inv_2sy2;
        // Beyond 6 sigma the bump is below 1e-7 of its amplitude.
        if e > 18.0 {
            return 0.0;
        }
        self.amp * (-e).exp()
    }
}

/// A procedurally generated scene with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub viewset: ViewSet,
    /// Scene radiance over the whole panorama, RGB.
    pub radiance: FloatImage,
    /// Panorama rendered at each of the three exposures.
    pub ground_truth: [LdrImage; 3],
}

impl SyntheticScene {
    pub fn layout(&self) -> &PanoLayout {
        self.viewset.layout()
    }

    /// Linear sensor input of `view`'s pixel rendered at `exposure`'s
    /// exposure time, before the response curve.
    pub fn exposure_input(&self, view: View, exposure: View, x: usize, y: usize, c: usize) -> f64 {
        let layout = self.layout();
        let dt = layout.exposure_ratios()[exposure.index()];
        self.radiance.get(layout.view_offset(view) + x, y, c) * dt
    }

    /// Ground-truth rendition of view `from` at the exposure of view `to`.
    pub fn ground_truth_rendition(&self, from: View, to: View) -> LdrImage {
        let layout = self.layout();
        let off = layout.view_offset(from);
        self.ground_truth[to.index()]
            .crop(off, 0, layout.view_width(), layout.view_height())
            .expect("view lies inside the panorama")
    }

    /// Writes `z1..z3`, `layout.txt`, the six `zT_<i>_to_<j>` renditions and
    /// the ground-truth panoramas `gt_pano_<l>` as PNG.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let layout_path = dir.join(LAYOUT_FILE);
        std::fs::write(&layout_path, self.layout().to_string())
            .map_err(|e| Error::io(&layout_path, e))?;
        for view in View::ALL {
            self.viewset
                .view(view)
                .save(dir.join(format!("{view}.png")))?;
            self.ground_truth[view.index()]
                .save(dir.join(format!("gt_pano_{}.png", view.number())))?;
            for to in View::ALL {
                if to != view {
                    self.ground_truth_rendition(view, to)
                        .save(dir.join(format!("zT_{}_to_{}.png", view.number(), to.number())))?;
                }
            }
        }
        Ok(())
    }
}

/// Deterministic synthetic scene for `seed` with default parameters.
pub fn synthesize_test_scene(seed: u64, layout: &PanoLayout) -> SyntheticScene {
    synthesize_test_scene_with(seed, layout, &SceneParams::default())
}

pub fn synthesize_test_scene_with(
    seed: u64,
    layout: &PanoLayout,
    params: &SceneParams,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pw = layout.pano_width();
    let h = layout.pano_height();
    let vw = layout.view_width() as f64;
    let vh = h as f64;

    let mut make_bumps = |n: usize, amp: f64| -> Vec<Bump> {
        (0..n)
            .map(|_| {
                let sx = rng.gen_range(params.bump_sigma_x.0..=params.bump_sigma_x.1) * vw;
                let sy = rng.gen_range(params.bump_sigma_y.0..=params.bump_sigma_y.1) * vh;
                Bump {
                    cx: rng.gen_range(0.0..pw as f64),
                    cy: rng.gen_range(0.0..vh),
                    inv_2sx2: 1.0 / (2.0 * sx * sx),
                    inv_2sy2: 1.0 / (2.0 * sy * sy),
                    amp: rng.gen_range(-amp..=amp),
                }
            })
            .collect()
    };
    let bumps = make_bumps(params.bumps, params.bump_amplitude);
    let tints: Vec<Vec<Bump>> = (0..3)
        .map(|_| make_bumps(3, params.tint_amplitude))
        .collect();

    let denom = (h.max(2) - 1) as f64;
    let radiance = FloatImage::from_fn(pw, h, 3, |x, y, c| {
        let (xf, yf) = (x as f64, y as f64);
        let t = yf / denom;
        let base = params.ramp_top + (params.ramp_bottom - params.ramp_top) * t;
        let shape: f64 = bumps.iter().map(|b| b.eval(xf, yf)).sum();
        let tint: f64 = tints[c].iter().map(|b| b.eval(xf, yf)).sum();
        (base + shape + tint).exp2()
    });

    let ratios = layout.exposure_ratios();
    let ground_truth: [LdrImage; 3] = std::array::from_fn(|l| {
        let dt = ratios[l];
        LdrImage::from_fn(pw, h, |x, y| {
            std::array::from_fn(|c| quantize_sample(synth_response(radiance.get(x, y, c) * dt)))
        })
    });
    let views: [LdrImage; 3] = std::array::from_fn(|l| {
        ground_truth[l]
            .crop(layout.view_offset(View::ALL[l]), 0, layout.view_width(), h)
            .expect("view lies inside the panorama")
    });
    let [z1, z2, z3] = views;
    SyntheticScene {
        viewset: ViewSet::new(z1, z2, z3, layout.clone()).expect("views match layout"),
        radiance,
        ground_truth,
    }
}

/// Two renditions of one stationary texture, the second exposed `ratio`
/// times longer.
///
/// The log radiance is blurred white noise with mean `mean` and standard
/// deviation about `spread` stops, so any large crop has nearly the same
/// intensity statistics as the whole image.
pub fn synthesize_exposure_pair(
    seed: u64,
    width: usize,
    height: usize,
    ratio: f64,
    mean: f64,
    spread: f64,
) -> Result<(LdrImage, LdrImage)> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("empty exposure pair"));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::invalid(format!(
            "exposure ratio must be positive, got {ratio}"
        )));
    }
    const SIGMA: f64 = 2.0;
    let taps: Vec<f64> = (-6..=6)
        .map(|t: i32| (-f64::from(t * t) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    // Blurring unit-variance noise shrinks its variance by sum(k^2).
    let gain = 1.0 / taps.iter().map(|k| (k / norm).powi(2)).sum::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes = Vec::with_capacity(3);
    for _ in 0..3 {
        let noise = FloatImage::from_fn(width, height, 1, |_, _, _| {
            rng.gen_range(-1.0..1.0) * 3f64.sqrt()
        });
        let blur = |img: &FloatImage, horizontal: bool| {
            FloatImage::from_fn(width, height, 1, |x, y, _| {
                let mut acc = 0.0;
                for (t, k) in taps.iter().enumerate() {
                    let d = t as isize - 6;
                    let (sx, sy) = if horizontal {
                        ((x as isize + d).clamp(0, width as isize - 1) as usize, y)
                    } else {
                        (x, (y as isize + d).clamp(0, height as isize - 1) as usize)
                    };
                    acc += k * img.get(sx, sy, 0);
                }
                acc / norm
            })
        };
        planes.push(blur(&blur(&noise, true), false));
    }
    let scale = spread * gain;
    let render = |dt: f64| {
        LdrImage::from_fn(width, height, |x, y| {
            std::array::from_fn(|c| {
                let stops = mean + scale * planes[c].get(x, y, 0);
                quantize_sample(synth_response(stops.exp2() * dt))
            })
        })
    };
    Ok((render(1.0), render(ratio)))
}
