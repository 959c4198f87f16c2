//! Assembly of the three differently exposed panoramas.
//!
//! Panorama `l` shows every view at the exposure of view `l`: the view
//! itself where it is the view `l`, otherwise its rendition `i -> l`. Single
//! view regions copy that view; overlaps cross-fade the two renditions with a
//! linear ramp that is 1 at the left neighbour's side and falls towards 0 at
//! the right neighbour's side.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{FloatImage, LdrImage};
use crate::layout::{PanoLayout, Region, View};
use crate::scene::{find_image, ViewSet};

/// Ordered pair of distinct views: `from` rendered at the exposure of `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub from: View,
    pub to: View,
}

impl Pair {
    pub const ALL: [Pair; 6] = [
        Pair::new(View::One, View::Two),
        Pair::new(View::One, View::Three),
        Pair::new(View::Two, View::One),
        Pair::new(View::Two, View::Three),
        Pair::new(View::Three, View::One),
        Pair::new(View::Three, View::Two),
    ];

    pub const fn new(from: View, to: View) -> Pair {
        Pair { from, to }
    }

    fn slot(self) -> usize {
        Pair::ALL
            .iter()
            .position(|p| *p == self)
            .expect("pair of distinct views")
    }

    /// File stem of the rendition, e.g. `z1_to_3`.
    pub fn file_stem(self) -> String {
        format!("z{}_to_{}", self.from.number(), self.to.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenditionSource {
    Physics,
    Refined,
}

#[derive(Clone, Debug)]
pub struct Rendition {
    pub image: FloatImage,
    pub source: RenditionSource,
}

/// The three views plus all six cross-exposure renditions.
#[derive(Clone, Debug)]
pub struct ExposureRenditionSet {
    direct: [FloatImage; 3],
    mapped: [Rendition; 6],
}

impl ExposureRenditionSet {
    /// `mapped` is indexed in [`Pair::ALL`] order.
    pub fn new(views: &ViewSet, mapped: [FloatImage; 6]) -> Result<Self> {
        let expected = (views.layout().view_width(), views.layout().view_height());
        for (pair, img) in Pair::ALL.iter().zip(&mapped) {
            if img.dims() != expected || img.channels() != 3 {
                return Err(Error::dims(pair.file_stem(), expected, img.dims()));
            }
        }
        Ok(ExposureRenditionSet {
            direct: std::array::from_fn(|i| views.views()[i].to_float()),
            mapped: mapped.map(|image| Rendition {
                image,
                source: RenditionSource::Physics,
            }),
        })
    }

    /// View `view` at the exposure of `level`.
    pub fn at_level(&self, view: View, level: View) -> &FloatImage {
        if view == level {
            &self.direct[view.index()]
        } else {
            &self.mapped[Pair::new(view, level).slot()].image
        }
    }

    pub fn rendition(&self, pair: Pair) -> &Rendition {
        &self.mapped[pair.slot()]
    }

    pub fn replace(
        &mut self,
        pair: Pair,
        image: FloatImage,
        source: RenditionSource,
    ) -> Result<()> {
        let expected = self.direct[0].dims();
        if image.dims() != expected || image.channels() != 3 {
            return Err(Error::dims(
                format!("refined rendition {}", pair.file_stem()),
                expected,
                image.dims(),
            ));
        }
        self.mapped[pair.slot()] = Rendition { image, source };
        Ok(())
    }
}

/// Substitutes every `z<i>_to_<j>.<ext>` found in `dir`.
pub fn load_refined(
    dir: impl AsRef<Path>,
    mut rset: ExposureRenditionSet,
) -> Result<ExposureRenditionSet> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "refined directory not found"),
        ));
    }
    for pair in Pair::ALL {
        if let Some(path) = find_image(dir, &pair.file_stem()) {
            let img = LdrImage::load(&path)?;
            rset.replace(pair, img.to_float(), RenditionSource::Refined)?;
        }
    }
    Ok(rset)
}

/// A panorama at one exposure level.
#[derive(Clone, Debug)]
pub struct PanoImage {
    pub image: FloatImage,
    pub layout: PanoLayout,
}

/// Blend weight of the left view inside the overlap of `region`: 1 at the
/// first column, `1 / width` at the last.
pub fn overlap_weight(column: usize, region: Region, layout: &PanoLayout) -> Result<f64> {
    if !matches!(region, Region::Xi12 | Region::Xi23) {
        return Err(Error::invalid(format!("{region:?} is not an overlap")));
    }
    let range = layout.region_range(region);
    if !range.contains(&column) {
        return Err(Error::invalid(format!(
            "column {column} outside overlap {range:?}"
        )));
    }
    Ok((range.end - column) as f64 / range.len() as f64)
}

pub fn phi21(column: usize, layout: &PanoLayout) -> Result<f64> {
    overlap_weight(column, Region::Xi12, layout)
}

pub fn phi32(column: usize, layout: &PanoLayout) -> Result<f64> {
    overlap_weight(column, Region::Xi23, layout)
}

/// Per-column recipe: `(left view, weight of left, right view)`.
fn column_plan(layout: &PanoLayout) -> Vec<(View, f64, View)> {
    (0..layout.pano_width())
        .map(|x| match layout.region_of(x).expect("column in range") {
            Region::Chi1 => (View::One, 1.0, View::One),
            Region::Chi2 => (View::Two, 1.0, View::Two),
            Region::Chi3 => (View::Three, 1.0, View::Three),
            r @ Region::Xi12 => (View::One, overlap_weight(x, r, layout).unwrap(), View::Two),
            r @ Region::Xi23 => (
                View::Two,
                overlap_weight(x, r, layout).unwrap(),
                View::Three,
            ),
        })
        .collect()
}

/// Assembles panorama `level` from per-view images already at that level.
pub fn assemble(layout: &PanoLayout, views_at_level: [&FloatImage; 3]) -> FloatImage {
    let pw = layout.pano_width();
    let h = layout.pano_height();
    let ch = views_at_level[0].channels();
    let plan = column_plan(layout);
    let offsets = View::ALL.map(|v| layout.view_offset(v));
    let mut out = FloatImage::zeros(pw, h, ch);
    let data = out.data_mut();
    for y in 0..h {
        for (x, &(left, phi, right)) in plan.iter().enumerate() {
            let a = views_at_level[left.index()];
            let xa = x - offsets[left.index()];
            for c in 0..ch {
                let va = a.get(xa, y, c);
                let v = if left == right {
                    va
                } else {
                    let b = views_at_level[right.index()];
                    let vb = b.get(x - offsets[right.index()], y, c);
                    phi * va + (1.0 - phi) * vb
                };
                data[(y * pw + x) * ch + c] = v;
            }
        }
    }
    out
}

/// Panorama at the exposure of view `level`.
pub fn synthesize_pano(level: View, rset: &ExposureRenditionSet, layout: &PanoLayout) -> PanoImage {
    let views = View::ALL.map(|v| rset.at_level(v, level));
    PanoImage {
        image: assemble(layout, views),
        layout: layout.clone(),
    }
}
