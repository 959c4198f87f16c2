//! Intensity mapping functions by weighted histogram averaging.
//!
//! For a source image `i` and target image `j` of the same content, every
//! source bin `z` is matched to the run of target bins `psi(z-1)..=psi(z)`
//! that holds the same slice of the cumulative distribution. The mapped
//! intensity `lambda(z)` is the average of those target bins weighted by how
//! many pixels of each falls into the slice.
//!
//! Everything here is per channel; an [`Imf`] bundles three channels.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::{FloatImage, LdrImage};

pub const BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram256 {
    counts: [u64; BINS],
    total: u64,
}

impl Histogram256 {
    pub fn from_counts(counts: [u64; BINS]) -> Self {
        let total = counts.iter().sum();
        Histogram256 { counts, total }
    }

    /// Histogram of a prefix-padded slice, e.g. `&[2, 2]` for two bins.
    pub fn from_slice(head: &[u64]) -> Self {
        let mut counts = [0; BINS];
        counts[..head.len()].copy_from_slice(head);
        Self::from_counts(counts)
    }

    pub fn from_samples(samples: impl IntoIterator<Item = u8>) -> Self {
        let mut counts = [0u64; BINS];
        for s in samples {
            counts[s as usize] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn counts(&self) -> &[u64; BINS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cumulative(&self) -> CumHist256 {
        let mut cum = [0u64; BINS];
        let mut acc = 0;
        for (c, &n) in cum.iter_mut().zip(&self.counts) {
            acc += n;
            *c = acc;
        }
        CumHist256 { cum }
    }
}

/// Per-channel histogram of an RGB image.
pub fn histogram(image: &LdrImage, channel: usize) -> Result<Histogram256> {
    if channel >= 3 {
        return Err(Error::invalid(format!("channel {channel} out of range")));
    }
    Ok(Histogram256::from_samples(image.channel(channel)))
}

pub fn cumulative(h: &Histogram256) -> CumHist256 {
    h.cumulative()
}

/// Cumulative histogram; `at(-1)` is 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CumHist256 {
    cum: [u64; BINS],
}

impl CumHist256 {
    pub fn values(&self) -> &[u64; BINS] {
        &self.cum
    }

    pub fn total(&self) -> u64 {
        self.cum[BINS - 1]
    }

    /// `C(z)` with the convention `C(-1) = 0`.
    pub fn at(&self, z: isize) -> u64 {
        if z < 0 {
            0
        } else {
            self.cum[z as usize]
        }
    }

    pub fn count(&self, z: usize) -> u64 {
        self.at(z as isize) - self.at(z as isize - 1)
    }
}

fn check_totals(ci: &CumHist256, cj: &CumHist256) -> Result<()> {
    if ci.total() != cj.total() {
        return Err(Error::invalid(format!(
            "mismatched histogram totals {} and {}",
            ci.total(),
            cj.total()
        )));
    }
    if ci.total() == 0 {
        return Err(Error::invalid("empty histogram"));
    }
    Ok(())
}

/// Bin correspondence for all 256 source bins: the smallest target bin `k`
/// with `C_j(k) >= C_i(z)`.
///
/// Requires equal, non-zero totals.
pub fn psi_table(ci: &CumHist256, cj: &CumHist256) -> Result<[usize; BINS]> {
    check_totals(ci, cj)?;
    Ok(psi_sweep(&ci.cum.map(u128::from), &cj.cum.map(u128::from)))
}

/// `psi(z)` for a single bin; `z = -1` maps to 0.
pub fn psi(ci: &CumHist256, cj: &CumHist256, z: isize) -> Result<usize> {
    if !(-1..BINS as isize).contains(&z) {
        return Err(Error::invalid(format!("bin {z} out of range")));
    }
    let table = psi_table(ci, cj)?;
    Ok(psi_at(&table, z))
}

fn psi_at(table: &[usize; BINS], z: isize) -> usize {
    if z < 0 {
        0
    } else {
        table[z as usize]
    }
}

// psi is non-decreasing, so a single forward sweep finds every lower bound.
fn psi_sweep(ci: &[u128; BINS], cj: &[u128; BINS]) -> [usize; BINS] {
    let mut out = [0usize; BINS];
    let mut k = 0;
    for (z, &c) in ci.iter().enumerate() {
        while k < BINS - 1 && cj[k] < c {
            k += 1;
        }
        out[z] = k;
    }
    out
}

/// Number of pixels of target bin `k` matched to source bin `z`.
///
/// `psi` must be the table for `(ci, cj)`, and `k` must lie in
/// `psi(z-1)..=psi(z)`.
pub fn subbin_mass(
    ci: &CumHist256,
    cj: &CumHist256,
    psi: &[usize; BINS],
    z: usize,
    k: usize,
) -> Result<u64> {
    check_totals(ci, cj)?;
    if z >= BINS {
        return Err(Error::invalid(format!("bin {z} out of range")));
    }
    let lo = psi_at(psi, z as isize - 1);
    let hi = psi[z];
    if !(lo..=hi).contains(&k) {
        return Err(Error::invalid(format!(
            "target bin {k} outside {lo}..={hi} for source bin {z}"
        )));
    }
    let cim = |b: isize| u128::from(ci.at(b));
    let cjm = |b: isize| u128::from(cj.at(b));
    Ok(subbin_mass_scaled(&cim, &cjm, lo, hi, z, k) as u64)
}

fn subbin_mass_scaled(
    ci: &impl Fn(isize) -> u128,
    cj: &impl Fn(isize) -> u128,
    lo: usize,
    hi: usize,
    z: usize,
    k: usize,
) -> u128 {
    let (z, k) = (z as isize, k as isize);
    if lo == hi {
        ci(z) - ci(z - 1)
    } else if k == lo as isize {
        cj(k) - ci(z - 1)
    } else if k == hi as isize {
        ci(z) - cj(k - 1)
    } else {
        cj(k) - cj(k - 1)
    }
}

/// One channel of an intensity mapping function.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelImf {
    pub lambda: [f64; BINS],
    /// True where the source bin held pixels (or after filling).
    pub defined: [bool; BINS],
}

impl ChannelImf {
    pub fn identity() -> Self {
        ChannelImf {
            lambda: std::array::from_fn(|z| z as f64),
            defined: [true; BINS],
        }
    }

    pub fn is_complete(&self) -> bool {
        self.defined.iter().all(|&d| d)
    }

    /// Value at a real-valued intensity by linear interpolation between bins.
    pub fn eval(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, (BINS - 1) as f64);
        let k = v.floor() as usize;
        if k >= BINS - 1 {
            return self.lambda[BINS - 1];
        }
        let t = v - k as f64;
        if t == 0.0 {
            self.lambda[k]
        } else {
            self.lambda[k] + t * (self.lambda[k + 1] - self.lambda[k])
        }
    }

    /// Linear interpolation over undefined bins, clamped beyond the first
    /// and last defined ones.
    pub fn fill_empty_bins(&self) -> Result<ChannelImf> {
        let defined: Vec<usize> = (0..BINS).filter(|&z| self.defined[z]).collect();
        let (&first, &last) = match (defined.first(), defined.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::invalid("IMF channel has no defined bins")),
        };
        let mut lambda = self.lambda;
        for v in lambda.iter_mut().take(first) {
            *v = self.lambda[first];
        }
        for v in lambda.iter_mut().skip(last + 1) {
            *v = self.lambda[last];
        }
        for pair in defined.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (la, lb) = (self.lambda[a], self.lambda[b]);
            for (z, v) in lambda.iter_mut().enumerate().take(b).skip(a + 1) {
                let t = (z - a) as f64 / (b - a) as f64;
                *v = la + t * (lb - la);
            }
        }
        Ok(ChannelImf {
            lambda,
            defined: [true; BINS],
        })
    }

    /// `second(self(z))`, interpolating linearly inside `second`.
    pub fn compose(&self, second: &ChannelImf) -> Result<ChannelImf> {
        if !self.is_complete() || !second.is_complete() {
            return Err(Error::invalid("composition needs fully defined IMFs"));
        }
        let mut lambda = self.lambda.map(|v| second.eval(v));
        // Interpolation rounding can dent a flat run by an ulp.
        for z in 1..BINS {
            if lambda[z] < lambda[z - 1] {
                lambda[z] = lambda[z - 1];
            }
        }
        Ok(ChannelImf {
            lambda,
            defined: [true; BINS],
        })
    }
}

/// Single-channel IMF from source histogram `hi` to target histogram `hj`.
///
/// When the totals differ, both cumulative histograms are brought to the
/// common total `N_i * N_j` first, which keeps every quantity an exact
/// integer.
pub fn build_imf(hi: &Histogram256, hj: &Histogram256) -> Result<ChannelImf> {
    let (ni, nj) = (u128::from(hi.total()), u128::from(hj.total()));
    if ni == 0 || nj == 0 {
        return Err(Error::invalid("empty histogram"));
    }
    let (si, sj) = if ni == nj { (1, 1) } else { (nj, ni) };
    let ci = hi.cumulative().cum.map(|v| u128::from(v) * si);
    let cj = hj.cumulative().cum.map(|v| u128::from(v) * sj);
    let table = psi_sweep(&ci, &cj);

    let ci_at = |b: isize| if b < 0 { 0 } else { ci[b as usize] };
    let cj_at = |b: isize| if b < 0 { 0 } else { cj[b as usize] };

    let mut lambda = [0.0; BINS];
    let mut defined = [false; BINS];
    for z in 0..BINS {
        let mass = ci_at(z as isize) - ci_at(z as isize - 1);
        if mass == 0 {
            continue;
        }
        let lo = psi_at(&table, z as isize - 1);
        let hi_k = table[z];
        defined[z] = true;
        if lo == hi_k {
            lambda[z] = lo as f64;
            continue;
        }
        let weighted: u128 = (lo..=hi_k)
            .map(|k| subbin_mass_scaled(&ci_at, &cj_at, lo, hi_k, z, k) * k as u128)
            .sum();
        lambda[z] = weighted as f64 / mass as f64;
    }
    Ok(ChannelImf { lambda, defined })
}

/// Three-channel intensity mapping function.
#[derive(Clone, Debug, PartialEq)]
pub struct Imf {
    pub channels: [ChannelImf; 3],
}

pub const IMF_HEADER: &str = "wha-imf v1 channels=3";

impl Imf {
    pub fn identity() -> Self {
        Imf {
            channels: std::array::from_fn(|_| ChannelImf::identity()),
        }
    }

    /// Per-channel IMF between two images, source to target. Undefined bins
    /// are left unfilled.
    pub fn estimate_raw(source: &LdrImage, target: &LdrImage) -> Result<Imf> {
        let mut channels = Vec::with_capacity(3);
        for c in 0..3 {
            channels.push(build_imf(&histogram(source, c)?, &histogram(target, c)?)?);
        }
        Ok(Imf {
            channels: channels.try_into().expect("three channels"),
        })
    }

    /// [`Imf::estimate_raw`] followed by [`Imf::fill_empty_bins`].
    pub fn estimate(source: &LdrImage, target: &LdrImage) -> Result<Imf> {
        Imf::estimate_raw(source, target)?.fill_empty_bins()
    }

    pub fn is_complete(&self) -> bool {
        self.channels.iter().all(ChannelImf::is_complete)
    }

    pub fn fill_empty_bins(&self) -> Result<Imf> {
        let mut out = Vec::with_capacity(3);
        for (c, ch) in self.channels.iter().enumerate() {
            out.push(
                ch.fill_empty_bins()
                    .map_err(|e| Error::invalid(format!("channel {c}: {e}")))?,
            );
        }
        Ok(Imf {
            channels: out.try_into().expect("three channels"),
        })
    }

    /// Maps through `self`, then through `second`.
    pub fn compose(&self, second: &Imf) -> Result<Imf> {
        let mut out = Vec::with_capacity(3);
        for (a, b) in self.channels.iter().zip(&second.channels) {
            out.push(a.compose(b)?);
        }
        Ok(Imf {
            channels: out.try_into().expect("three channels"),
        })
    }

    /// Per-sample table lookup.
    pub fn apply(&self, image: &LdrImage) -> Result<FloatImage> {
        if !self.is_complete() {
            return Err(Error::invalid(
                "IMF has undefined bins; fill them before applying",
            ));
        }
        let data = image
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.channels[i % 3].lambda[v as usize])
            .collect();
        Ok(FloatImage::from_vec_unchecked(
            image.width(),
            image.height(),
            3,
            data,
        ))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(BINS * 48);
        s.push_str(IMF_HEADER);
        s.push('\n');
        for z in 0..BINS {
            let [r, g, b] = &self.channels;
            let _ = writeln!(
                s,
                "{z} {} {} {} {} {} {}",
                r.lambda[z],
                g.lambda[z],
                b.lambda[z],
                u8::from(r.defined[z]),
                u8::from(g.defined[z]),
                u8::from(b.defined[z]),
            );
        }
        s
    }

    /// Parses the text table written by [`Imf::to_text`], checking that
    /// defined bins are in range and non-decreasing.
    pub fn parse(text: &str) -> Result<Imf> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == IMF_HEADER => {}
            Some(h) => return Err(Error::ImfFormat(format!("bad header {:?}", truncate(h)))),
            None => return Err(Error::ImfFormat("empty input".into())),
        }
        let mut channels: [ChannelImf; 3] = std::array::from_fn(|_| ChannelImf {
            lambda: [0.0; BINS],
            defined: [false; BINS],
        });
        for z in 0..BINS {
            let line = lines
                .next()
                .ok_or_else(|| Error::ImfFormat(format!("expected {BINS} rows, found {z}")))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(Error::ImfFormat(format!(
                    "row {z}: expected 7 fields, found {}",
                    fields.len()
                )));
            }
            if fields[0].parse::<usize>().ok() != Some(z) {
                return Err(Error::ImfFormat(format!(
                    "row {z}: bad bin index {:?}",
                    truncate(fields[0])
                )));
            }
            for c in 0..3 {
                let v: f64 = fields[1 + c].parse().map_err(|_| {
                    Error::ImfFormat(format!("row {z}: bad value {:?}", truncate(fields[1 + c])))
                })?;
                if !v.is_finite() {
                    return Err(Error::ImfFormat(format!("row {z}: non-finite value")));
                }
                let d = match fields[4 + c] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::ImfFormat(format!(
                            "row {z}: bad flag {:?}",
                            truncate(other)
                        )))
                    }
                };
                channels[c].lambda[z] = v;
                channels[c].defined[z] = d;
            }
        }
        if lines.next().is_some() {
            return Err(Error::ImfFormat("trailing rows".into()));
        }
        for (c, ch) in channels.iter().enumerate() {
            let mut prev = f64::NEG_INFINITY;
            for z in (0..BINS).filter(|&z| ch.defined[z]) {
                let v = ch.lambda[z];
                if !(0.0..=255.0).contains(&v) {
                    return Err(Error::ImfFormat(format!(
                        "channel {c} bin {z}: value {v} outside [0, 255]"
                    )));
                }
                if v < prev {
                    return Err(Error::ImfFormat(format!(
                        "channel {c} bin {z}: table decreases"
                    )));
                }
                prev = v;
            }
        }
        Ok(Imf { channels })
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(32) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// IMFs in both directions between the two overlap sub-images of adjacent
/// views, with empty bins filled.
pub fn estimate_imf_pair(a: &LdrImage, b: &LdrImage) -> Result<(Imf, Imf)> {
    if a.dims() != b.dims() {
        return Err(Error::dims("overlap pair", a.dims(), b.dims()));
    }
    Ok((Imf::estimate(a, b)?, Imf::estimate(b, a)?))
}

/// Renders `image` at the target exposure through `imf`.
pub fn apply_imf(imf: &Imf, image: &LdrImage) -> Result<FloatImage> {
    imf.apply(image)
}

pub fn compose_imf(first: &Imf, second: &Imf) -> Result<Imf> {
    first.compose(second)
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Brute-force reference: psi by scanning the defining inequality for
    //! every candidate bin, masses by interval overlap of cumulative ranges.
    use super::BINS;

    pub fn cum(h: &[u64; BINS]) -> Vec<u64> {
        h.iter()
            .scan(0u64, |acc, &v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }

    pub fn psi(ci: &[u64], cj: &[u64], z: usize) -> usize {
        let target = ci[z];
        if target == 0 {
            return 0;
        }
        (0..BINS)
            .find(|&k| {
                let below = if k == 0 { 0 } else { cj[k - 1] };
                below < target && target <= cj[k]
            })
            .expect("equal totals guarantee a match")
    }

    /// Lambda on bins with `H_i(z) > 0`, `None` elsewhere.
    pub fn lambda(hi: &[u64; BINS], hj: &[u64; BINS]) -> Vec<Option<f64>> {
        let ci = cum(hi);
        let cj = cum(hj);
        (0..BINS)
            .map(|z| {
                if hi[z] == 0 {
                    return None;
                }
                let lo_i = if z == 0 { 0 } else { ci[z - 1] };
                let hi_i = ci[z];
                let mut acc = 0.0;
                for k in 0..BINS {
                    let lo_j = if k == 0 { 0 } else { cj[k - 1] };
                    let hi_j = cj[k];
                    let overlap = hi_i.min(hi_j).saturating_sub(lo_i.max(lo_j));
                    acc += overlap as f64 * k as f64 / hi[z] as f64;
                }
                Some(acc)
            })
            .collect()
    }
}
