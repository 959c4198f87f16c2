//! End-to-end stitch: IMFs, renditions, panoramas, fusion, detail recovery.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::detail::{self, DetailMap, SolverConfig};
use crate::error::{Error, Result, StageExt};
use crate::image::{FloatImage, LdrImage};
use crate::layout::{Side, View};
use crate::mef;
use crate::pano::{self, ExposureRenditionSet, Pair, PanoImage};
use crate::scene::ViewSet;
use crate::wha::{estimate_imf_pair, Imf};

#[derive(Clone, Debug, Default)]
pub struct StitchConfig {
    pub solver: SolverConfig,
    /// Pyramid depth; `None` picks [`mef::default_depth`].
    pub mef_depth: Option<usize>,
    /// Directory of refined renditions replacing the IMF-based ones.
    pub refined_dir: Option<PathBuf>,
    /// Directory receiving intermediate images.
    pub emit_intermediates: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StitchResult {
    /// Quantised output after the preference blend.
    pub final_image: LdrImage,
    /// Enhanced panorama before quantisation.
    pub enhanced: PanoImage,
    pub panos: [PanoImage; 3],
    pub fused: PanoImage,
    pub detail: DetailMap,
    pub renditions: ExposureRenditionSet,
    /// Indexed in [`Pair::ALL`] order.
    pub imfs: [Imf; 6],
    pub mef_overshoot: f64,
    pub timings: Vec<(&'static str, Duration)>,
}

impl StitchResult {
    pub fn imf(&self, pair: Pair) -> &Imf {
        let i = Pair::ALL
            .iter()
            .position(|p| *p == pair)
            .expect("valid pair");
        &self.imfs[i]
    }
}

struct Timer {
    timings: Vec<(&'static str, Duration)>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Timer {
            timings: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.timings.push((stage, now - self.start));
        self.start = now;
    }
}

/// Runs the whole pipeline on one view set.
pub fn stitch(views: &ViewSet, cfg: &StitchConfig) -> Result<StitchResult> {
    cfg.solver.validate().stage("config")?;
    let layout = views.layout();
    let mut timer = Timer::new();

    let imfs = estimate_imfs(views).stage("imf")?;
    timer.lap("imf");

    let mapped: Vec<FloatImage> = Pair::ALL
        .iter()
        .zip(&imfs)
        .map(|(p, imf)| imf.apply(views.view(p.from)))
        .collect::<Result<_>>()
        .stage("renditions")?;
    let mut rset = ExposureRenditionSet::new(views, mapped.try_into().expect("six renditions"))
        .stage("renditions")?;
    timer.lap("renditions");

    if let Some(dir) = &cfg.refined_dir {
        rset = pano::load_refined(dir, rset).stage("refined")?;
        timer.lap("refined");
    }

    let panos = View::ALL.map(|l| pano::synthesize_pano(l, &rset, layout));
    timer.lap("pano");

    let depth = cfg
        .mef_depth
        .unwrap_or_else(|| mef::default_depth(layout.pano_width(), layout.pano_height()));
    let (fused, mef_overshoot) =
        mef::fuse([&panos[0], &panos[1], &panos[2]], depth).stage("mef")?;
    timer.lap("mef");

    let (detail, enhanced) = enhance(&panos, &fused, &cfg.solver).stage("detail")?;
    timer.lap("detail");

    let final_image = enhanced.image.quantize();

    let result = StitchResult {
        final_image,
        enhanced,
        panos,
        fused,
        detail,
        renditions: rset,
        imfs,
        mef_overshoot,
        timings: Vec::new(),
    };
    if let Some(dir) = &cfg.emit_intermediates {
        write_intermediates(&result, dir).stage("export")?;
    }
    timer.lap("export");
    Ok(StitchResult {
        timings: timer.timings,
        ..result
    })
}

/// The four overlap IMFs, plus 1->3 and 3->1 by composition through view 2.
fn estimate_imfs(views: &ViewSet) -> Result<[Imf; 6]> {
    let o12 = views.overlap(View::One, Side::Right)?;
    let o21 = views.overlap(View::Two, Side::Left)?;
    let o23 = views.overlap(View::Two, Side::Right)?;
    let o32 = views.overlap(View::Three, Side::Left)?;
    let (f12, f21) = estimate_imf_pair(&o12, &o21)?;
    let (f23, f32) = estimate_imf_pair(&o23, &o32)?;
    let f13 = f12.compose(&f23)?;
    let f31 = f32.compose(&f21)?;
    // Pair::ALL order: 1->2, 1->3, 2->1, 2->3, 3->1, 3->2
    Ok([f12, f13, f21, f23, f31, f32])
}

/// Guidance field from the log panoramas, detail solve and recombination.
pub fn enhance(
    panos: &[PanoImage; 3],
    fused: &PanoImage,
    solver: &SolverConfig,
) -> Result<(DetailMap, PanoImage)> {
    let logs = panos
        .iter()
        .map(|p| detail::log_domain(&p.image))
        .collect::<Result<Vec<_>>>()?;
    let v = detail::guidance_field([&logs[0], &logs[1], &logs[2]], &fused.layout)?;
    let zd = detail::solve_detail(&v, solver)?;
    let enhanced = detail::recombine(fused, &zd, solver)?;
    Ok((zd, enhanced))
}

/// Writes renditions, panoramas, the fused image, IMF tables and the detail
/// layer to `dir`.
pub fn write_intermediates(result: &StitchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (pair, imf) in Pair::ALL.iter().zip(&result.imfs) {
        let r = result.renditions.rendition(*pair);
        r.image
            .quantize()
            .save(dir.join(format!("{}.png", pair.file_stem())))?;
        let path = dir.join(format!(
            "imf_{}_to_{}.txt",
            pair.from.number(),
            pair.to.number()
        ));
        std::fs::write(&path, imf.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    for (l, p) in result.panos.iter().enumerate() {
        p.image
            .quantize()
            .save(dir.join(format!("pano_{}.png", l + 1)))?;
    }
    result.fused.image.quantize().save(dir.join("fused.png"))?;
    detail::detail_visualization(&result.detail).save(dir.join("detail.png"))?;
    Ok(())
}
