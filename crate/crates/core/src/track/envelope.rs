use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::Detection;

use super::velocity::bin_index;

/// Peak-clipping baseline with a decreasing window: for `p = m, m-1, .., 1`
/// every point with both partners in range becomes
/// `min(v[i], (v[i-p] + v[i+p]) / 2)`, all points of one pass updated from
/// the values of the previous pass. The first and last points never change.
pub fn snip_baseline(series: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter("SNIP window must be >= 1".into()));
    }
    if series.len() < 2 * m + 1 {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            needed: 2 * m + 1,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("SNIP series must be finite".into()));
    }
    let n = series.len();
    let mut cur = series.to_vec();
    let mut next = cur.clone();
    for p in (1..=m).rev() {
        for i in p..n - p {
            next[i] = cur[i].min(0.5 * (cur[i - p] + cur[i + p]));
        }
        cur.copy_from_slice(&next);
    }
    Ok(cur)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeBin {
    pub y_low: f64,
    pub y_high: f64,
    pub count: usize,
    pub min_x: f64,
    pub max_x: f64,
    pub left: f64,
    pub right: f64,
}

/// Horizontal extent of the detection cloud along elevation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeStats {
    /// Populated elevation bins, bottom to top.
    pub bins: Vec<EnvelopeBin>,
    /// Mean of `right - left` over the populated bins (mm).
    pub mean_thickness: f64,
    /// Largest `right - left` (mm).
    pub max_spread: f64,
}

/// Bins detection centroids by elevation and clips the per-bin extremes
/// outwards: `left = snip(min_x)` and `right = -snip(-max_x)`, taken over
/// the populated bins in elevation order.
pub fn envelope_stats(detections: &[Detection], bin_height: f64, snip_m: usize) -> Result<EnvelopeStats> {
    if !(bin_height > 0.0) {
        return Err(Error::InvalidParameter(format!("bin_height must be > 0, got {bin_height}")));
    }
    let mut per_bin: std::collections::BTreeMap<i64, (usize, f64, f64)> = Default::default();
    for d in detections {
        let e = per_bin
            .entry(bin_index(d.y, bin_height))
            .or_insert((0, f64::INFINITY, f64::NEG_INFINITY));
        e.0 += 1;
        e.1 = e.1.min(d.x);
        e.2 = e.2.max(d.x);
    }
    let needed = 2 * snip_m + 1;
    if per_bin.len() < needed {
        return Err(Error::TooFewBins {
            populated: per_bin.len(),
            needed,
        });
    }
    let mins: Vec<f64> = per_bin.values().map(|v| v.1).collect();
    let neg_max: Vec<f64> = per_bin.values().map(|v| -v.2).collect();
    let left = snip_baseline(&mins, snip_m)?;
    let right: Vec<f64> = snip_baseline(&neg_max, snip_m)?.into_iter().map(|v| -v).collect();

    let bins: Vec<EnvelopeBin> = per_bin
        .iter()
        .zip(left.iter().zip(&right))
        .map(|((&k, &(count, min_x, max_x)), (&l, &r))| EnvelopeBin {
            y_low: k as f64 * bin_height,
            y_high: (k + 1) as f64 * bin_height,
            count,
            min_x,
            max_x,
            left: l,
            right: r,
        })
        .collect();
    let widths: Vec<f64> = bins.iter().map(|b| b.right - b.left).collect();
    Ok(EnvelopeStats {
        mean_thickness: widths.iter().sum::<f64>() / widths.len() as f64,
        max_spread: widths.iter().cloned().fold(0.0, f64::max),
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Quality;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn det(x: f64, y: f64) -> Detection {
        Detection {
            frame_index: 0,
            time: 0.0,
            x,
            y,
            a: 1.0,
            b: 1.0,
            theta: 0.0,
            area: 1.0,
            aspect: 1.0,
            quality: Quality::Ok,
        }
    }

    #[test]
    fn constant_and_ramp_unchanged() {
        let c = vec![2.5; 30];
        assert_eq!(snip_baseline(&c, 12).unwrap(), c);
        let ramp: Vec<f64> = (0..40).map(|i| 0.25 * i as f64 - 3.0).collect();
        assert_eq!(snip_baseline(&ramp, 12).unwrap(), ramp);
    }

    #[test]
    fn spike_clipped_exactly() {
        let mut v = vec![1.0; 41];
        v[20] = 5.0;
        assert_eq!(snip_baseline(&v, 8).unwrap(), vec![1.0; 41]);
    }

    #[test]
    fn hand_iterated_small_case() {
        // m = 2 on [0, 4, 0, 4, 0]: p = 2 touches i = 2 only (stays 0),
        // p = 1 gives i = 1, 3 -> min(4, 0) = 0 and i = 2 -> min(0, 4) = 0
        assert_eq!(snip_baseline(&[0.0, 4.0, 0.0, 4.0, 0.0], 2).unwrap(), vec![0.0; 5]);
        // m = 1 on [1, 3, 2]: i = 1 -> min(3, 1.5)
        assert_eq!(snip_baseline(&[1.0, 3.0, 2.0], 1).unwrap(), vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            snip_baseline(&[0.0; 24], 12),
            Err(Error::SeriesTooShort { len: 24, needed: 25 })
        ));
        assert!(snip_baseline(&[0.0; 5], 0).is_err());
    }

    proptest! {
        #[test]
        fn never_above_input(v in prop::collection::vec(-100.0f64..100.0, 9..60), m in 1usize..5) {
            let out = snip_baseline(&v, m).unwrap();
            for (o, i) in out.iter().zip(&v) {
                prop_assert!(o <= i);
            }
            prop_assert_eq!(out[0], v[0]);
            prop_assert_eq!(out[v.len() - 1], v[v.len() - 1]);
        }

        #[test]
        fn affine_equivariant(v in prop::collection::vec(-10.0f64..10.0, 9..40), m in 1usize..5) {
            // powers of two keep the arithmetic exact
            let (alpha, beta) = (4.0, -8.0);
            let out = snip_baseline(&v, m).unwrap();
            let w: Vec<f64> = v.iter().map(|x| alpha * x + beta).collect();
            let out_w = snip_baseline(&w, m).unwrap();
            for (a, b) in out.iter().zip(&out_w) {
                prop_assert!((alpha * a + beta - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn vertical_line_has_zero_spread() {
        let d: Vec<_> = (0..200).map(|i| det(1.5, 0.3 * i as f64)).collect();
        let e = envelope_stats(&d, 2.0, 12).unwrap();
        assert!(e.bins.iter().all(|b| b.left == 1.5 && b.right == 1.5));
        assert_eq!((e.mean_thickness, e.max_spread), (0.0, 0.0));
    }

    #[test]
    fn uniform_band_spread_close_to_width() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = 4.0;
        let d: Vec<_> = (0..30 * 200)
            .map(|i| det(rng.random_range(-w..w), (i / 200) as f64 * 2.0 + 1.0))
            .collect();
        let e = envelope_stats(&d, 2.0, 12).unwrap();
        assert_eq!(e.bins.len(), 30);
        // with 200 uniform samples per bin the extremes sit within ~2w/200 of the edges
        assert!((e.mean_thickness - 2.0 * w).abs() < 0.1, "{}", e.mean_thickness);
        assert!((e.max_spread - 2.0 * w).abs() < 0.1, "{}", e.max_spread);
        assert!(e.mean_thickness <= e.max_spread);
        assert!(e.bins.iter().all(|b| b.right >= b.left));
    }

    #[test]
    fn too_few_bins() {
        let d: Vec<_> = (0..10).map(|i| det(0.0, 2.0 * i as f64)).collect();
        assert!(matches!(
            envelope_stats(&d, 2.0, 12),
            Err(Error::TooFewBins { populated: 10, needed: 25 })
        ));
    }
}
