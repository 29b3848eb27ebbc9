//! Global (Otsu) and local adaptive binarisation.

use serde::{Deserialize, Serialize};

use crate::denoise::reflect;
use crate::error::{Error, Result};
use crate::frame::Frame;

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Above,
    Below,
}

/// Equal-width histogram of `values` over their `[min, max]` range.
/// Returns `(counts, min, bin_width)`; `None` when the range is empty.
pub fn histogram(values: &[f64], bins: usize) -> Option<(Vec<u64>, f64, f64)> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Some((counts, lo, width))
}

/// Otsu split of a histogram: the index `t` such that bins `0..=t` form the
/// lower class and the between-class variance `w0 * w1 * (mu0 - mu1)^2` is
/// maximal. Exactly tied maxima forming a run resolve to the run's middle.
pub fn otsu_bin(counts: &[u64]) -> Option<usize> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let sum_all: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum();
    let mut w0 = 0.0;
    let mut s0 = 0.0;
    let mut best: Option<(usize, usize, f64)> = None;
    for (t, &c) in counts.iter().enumerate().take(counts.len().saturating_sub(1)) {
        w0 += c as f64;
        s0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = s0 / w0 - (sum_all - s0) / w1;
        let var = w0 * w1 * d * d;
        best = match best {
            None => Some((t, t, var)),
            Some((first, last, v)) if var == v && last + 1 == t => Some((first, t, v)),
            Some((_, _, v)) if var > v => Some((t, t, var)),
            keep => keep,
        };
    }
    best.map(|(first, last, _)| (first + last) / 2)
}

/// Otsu threshold of a frame, returned as the centre of the split bin.
pub fn otsu_threshold(frame: &Frame, histogram_bins: usize) -> Result<f64> {
    otsu_threshold_values(&frame.pixels, histogram_bins)
}

/// Otsu threshold of an arbitrary sample of intensities.
pub fn otsu_threshold_values(values: &[f64], histogram_bins: usize) -> Result<f64> {
    let (counts, lo, width) = histogram(values, histogram_bins).ok_or(Error::DegenerateHistogram)?;
    let t = otsu_bin(&counts).ok_or(Error::DegenerateHistogram)?;
    Ok(lo + (t as f64 + 0.5) * width)
}

pub fn binarize(frame: &Frame, threshold: f64, polarity: Polarity) -> BinaryMask {
    BinaryMask {
        width: frame.width,
        height: frame.height,
        bits: frame
            .pixels
            .iter()
            .map(|&v| match polarity {
                Polarity::Above => v > threshold,
                Polarity::Below => v < threshold,
            })
            .collect(),
    }
}

/// Mean over a `window x window` box with reflective borders.
pub fn local_mean(frame: &Frame, window: usize) -> Vec<f64> {
    let (w, h) = (frame.width, frame.height);
    let r = (window / 2) as isize;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let src = &frame.pixels[y * w..(y + 1) * w];
        for x in 0..w {
            rows[y * w + x] = (-r..=r).map(|d| src[reflect(x as isize + d, w)]).sum();
        }
    }
    let norm = (window * window) as f64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for d in -r..=r {
            let sy = reflect(y as isize + d, h);
            for x in 0..w {
                out[y * w + x] += rows[sy * w + x];
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Sets pixels brighter than their local mean plus `offset`.
pub fn adaptive_binarize(frame: &Frame, window: usize, offset: f64) -> Result<BinaryMask> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "adaptive window must be odd and >= 3, got {window}"
        )));
    }
    let mean = local_mean(frame, window);
    Ok(BinaryMask {
        width: frame.width,
        height: frame.height,
        bits: frame
            .pixels
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| v > m + offset)
            .collect(),
    })
}
