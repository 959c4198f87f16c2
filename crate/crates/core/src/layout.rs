//! Panorama geometry.
//!
//! Three views of equal size sit side by side in a horizontal strip, view 2
//! overlapping view 1 on its left and view 3 on its right. The panorama's
//! columns split into five half-open ranges:
//!
//! ```text
//! | chi1 | xi12 | chi2 | xi23 | chi3 |
//! ```
//!
//! where `chi` columns are seen by one view only and `xi` columns by two.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the three input views, ordered from shortest to longest exposure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum View {
    One,
    Two,
    Three,
}

impl View {
    pub const ALL: [View; 3] = [View::One, View::Two, View::Three];

    /// Zero-based index.
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based number, as used in file names.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Option<View> {
        match n {
            1 => Some(View::One),
            2 => Some(View::Two),
            3 => Some(View::Three),
            _ => None,
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}", self.number())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Panorama column regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    /// Seen by view 1 only.
    Chi1,
    /// Shared by views 1 and 2.
    Xi12,
    /// Seen by view 2 only.
    Chi2,
    /// Shared by views 2 and 3.
    Xi23,
    /// Seen by view 3 only.
    Chi3,
}

/// Largest supported stop difference between adjacent views.
pub const MAX_EV_GAP: f64 = 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PanoLayout {
    view_width: usize,
    view_height: usize,
    overlap12_width: usize,
    overlap23_width: usize,
    ev_gap: f64,
}

impl PanoLayout {
    pub fn new(
        view_width: usize,
        view_height: usize,
        overlap12_width: usize,
        overlap23_width: usize,
    ) -> Result<Self> {
        Self::with_ev_gap(
            view_width,
            view_height,
            overlap12_width,
            overlap23_width,
            1.0,
        )
    }

    pub fn with_ev_gap(
        view_width: usize,
        view_height: usize,
        overlap12_width: usize,
        overlap23_width: usize,
        ev_gap: f64,
    ) -> Result<Self> {
        if view_width == 0 || view_height == 0 {
            return Err(Error::Layout("view dimensions must be positive".into()));
        }
        for (name, w) in [
            ("overlap12_width", overlap12_width),
            ("overlap23_width", overlap23_width),
        ] {
            if w == 0 {
                return Err(Error::Layout(format!("{name} must be positive")));
            }
            if w >= view_width {
                return Err(Error::Layout(format!(
                    "overlap must be smaller than view ({name} = {w}, view_width = {view_width})"
                )));
            }
        }
        if view_width.checked_mul(3).is_none() {
            return Err(Error::Layout(format!("view_width {view_width} too large")));
        }
        if overlap12_width + overlap23_width > view_width {
            return Err(Error::Layout(format!(
                "overlaps {overlap12_width} + {overlap23_width} exceed view_width {view_width}"
            )));
        }
        if !ev_gap.is_finite() || ev_gap < 0.0 {
            return Err(Error::Layout(format!(
                "ev_gap must be a non-negative number, got {ev_gap}"
            )));
        }
        if ev_gap > MAX_EV_GAP {
            return Err(Error::Layout(format!(
                "ev_gap {ev_gap} exceeds {MAX_EV_GAP} stops"
            )));
        }
        Ok(PanoLayout {
            view_width,
            view_height,
            overlap12_width,
            overlap23_width,
            ev_gap,
        })
    }

    pub fn view_width(&self) -> usize {
        self.view_width
    }

    pub fn view_height(&self) -> usize {
        self.view_height
    }

    pub fn overlap12_width(&self) -> usize {
        self.overlap12_width
    }

    pub fn overlap23_width(&self) -> usize {
        self.overlap23_width
    }

    pub fn ev_gap(&self) -> f64 {
        self.ev_gap
    }

    /// Relative exposure times `1 : 2^ev : 4^ev`.
    pub fn exposure_ratios(&self) -> [f64; 3] {
        let r = self.ev_gap.exp2();
        [1.0, r, r * r]
    }

    pub fn pano_width(&self) -> usize {
        3 * self.view_width - self.overlap12_width - self.overlap23_width
    }

    pub fn pano_height(&self) -> usize {
        self.view_height
    }

    /// Panorama column of a view's first column.
    pub fn view_offset(&self, view: View) -> usize {
        match view {
            View::One => 0,
            View::Two => self.view_width - self.overlap12_width,
            View::Three => 2 * self.view_width - self.overlap12_width - self.overlap23_width,
        }
    }

    pub fn region_range(&self, region: Region) -> Range<usize> {
        let o2 = self.view_offset(View::Two);
        let o3 = self.view_offset(View::Three);
        match region {
            Region::Chi1 => 0..o2,
            Region::Xi12 => o2..self.view_width,
            Region::Chi2 => self.view_width..o3,
            Region::Xi23 => o3..o2 + self.view_width,
            Region::Chi3 => o2 + self.view_width..self.pano_width(),
        }
    }

    pub fn region_of(&self, column: usize) -> Result<Region> {
        if column >= self.pano_width() {
            return Err(Error::invalid(format!(
                "column {column} outside panorama of width {}",
                self.pano_width()
            )));
        }
        let o2 = self.view_offset(View::Two);
        let o3 = self.view_offset(View::Three);
        Ok(if column < o2 {
            Region::Chi1
        } else if column < self.view_width {
            Region::Xi12
        } else if column < o3 {
            Region::Chi2
        } else if column < o2 + self.view_width {
            Region::Xi23
        } else {
            Region::Chi3
        })
    }

    /// View-local column range of the overlap on one side of a view.
    pub fn overlap_columns(&self, view: View, side: Side) -> Result<Range<usize>> {
        let w = self.view_width;
        match (view, side) {
            (View::One, Side::Right) => Ok(w - self.overlap12_width..w),
            (View::Two, Side::Left) => Ok(0..self.overlap12_width),
            (View::Two, Side::Right) => Ok(w - self.overlap23_width..w),
            (View::Three, Side::Left) => Ok(0..self.overlap23_width),
            (View::One, Side::Left) => Err(Error::invalid("view 1 has no left neighbour")),
            (View::Three, Side::Right) => Err(Error::invalid("view 3 has no right neighbour")),
        }
    }

    /// Parses the `key=value` layout descriptor.
    pub fn parse(text: &str) -> Result<Self> {
        let mut view_width = None;
        let mut view_height = None;
        let mut overlap12 = None;
        let mut overlap23 = None;
        let mut ev_gap = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Layout(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let slot = match key {
                "view_width" => &mut view_width,
                "view_height" => &mut view_height,
                "overlap12_width" => &mut overlap12,
                "overlap23_width" => &mut overlap23,
                "ev_gap" => {
                    if ev_gap.is_some() {
                        return Err(Error::Layout(format!(
                            "line {}: duplicate key ev_gap",
                            lineno + 1
                        )));
                    }
                    ev_gap = Some(f64::from_str(value).map_err(|_| {
                        Error::Layout(format!("line {}: bad ev_gap {value:?}", lineno + 1))
                    })?);
                    continue;
                }
                other => {
                    return Err(Error::Layout(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            };
            if slot.is_some() {
                return Err(Error::Layout(format!(
                    "line {}: duplicate key {key}",
                    lineno + 1
                )));
            }
            *slot = Some(usize::from_str(value).map_err(|_| {
                Error::Layout(format!(
                    "line {}: bad value for {key}: {value:?}",
                    lineno + 1
                ))
            })?);
        }
        let need =
            |v: Option<usize>, k: &str| v.ok_or_else(|| Error::Layout(format!("missing key {k}")));
        PanoLayout::with_ev_gap(
            need(view_width, "view_width")?,
            need(view_height, "view_height")?,
            need(overlap12, "overlap12_width")?,
            need(overlap23, "overlap23_width")?,
            ev_gap.unwrap_or(1.0),
        )
    }
}

impl fmt::Display for PanoLayout {
    /// Renders the layout descriptor file.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "view_width={}", self.view_width)?;
        writeln!(f, "view_height={}", self.view_height)?;
        writeln!(f, "overlap12_width={}", self.overlap12_width)?;
        writeln!(f, "overlap23_width={}", self.overlap23_width)?;
        writeln!(f, "ev_gap={}", self.ev_gap)
    }
}
