//! Shen-Castan edge detector: infinite symmetric exponential filter (ISEF)
//! followed by zero crossings of the band-limited Laplacian.

use crate::error::{Error, Result};
use crate::frame::Frame;

use super::{morphological_thin, BinaryMask};

/// Crossings whose smoothed gradient is below this fraction of the frame
/// maximum are ignored.
pub const DEFAULT_GRADIENT_FRACTION: f64 = 0.1;

/// Symmetric exponential smoothing of one line in place,
/// impulse response proportional to `b^|n|` with unit sum.
fn isef_line(line: &mut [f64], b: f64, causal: &mut Vec<f64>) {
    let n = line.len();
    if n < 2 {
        return;
    }
    let g = 1.0 - b;
    causal.clear();
    causal.resize(n, 0.0);
    causal[0] = line[0];
    for i in 1..n {
        causal[i] = g * line[i] + b * causal[i - 1];
    }
    let mut anti = line[n - 1];
    for i in (0..n).rev() {
        if i < n - 1 {
            anti = g * line[i] + b * anti;
        }
        // line[i] is read above before being overwritten here
        line[i] = (causal[i] + anti - g * line[i]) / (1.0 + b);
    }
}

/// ISEF smoothing along rows then columns.
pub fn isef_smooth(frame: &Frame, smoothing: f64) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let mut px = frame.pixels.clone();
    let mut scratch = Vec::new();
    for row in px.chunks_mut(w) {
        isef_line(row, smoothing, &mut scratch);
    }
    let mut col = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = px[y * w + x];
        }
        isef_line(&mut col, smoothing, &mut scratch);
        for y in 0..h {
            px[y * w + x] = col[y];
        }
    }
    frame.with_pixels(px)
}

pub fn shen_castan_edges(frame: &Frame, smoothing: f64) -> Result<BinaryMask> {
    shen_castan_edges_with(frame, smoothing, DEFAULT_GRADIENT_FRACTION)
}

/// Marks, at every sign change of `smoothed - frame` between 4-neighbours,
/// the pixel on the positive side, keeps crossings with a strong enough
/// smoothed gradient and thins the result.
pub fn shen_castan_edges_with(frame: &Frame, smoothing: f64, gradient_fraction: f64) -> Result<BinaryMask> {
    if !(smoothing > 0.0 && smoothing < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "edge smoothing must lie in (0, 1), got {smoothing}"
        )));
    }
    let (w, h) = (frame.width, frame.height);
    let smooth = isef_smooth(frame, smoothing);
    let bli: Vec<f64> = smooth.pixels.iter().zip(&frame.pixels).map(|(s, f)| s - f).collect();
    let (gx, gy) = crate::denoise::gradient(&smooth);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let gate = gradient_fraction * mag.iter().cloned().fold(0.0, f64::max);

    let mut edges = BinaryMask::new(w, h);
    let mut mark = |i: usize, j: usize| {
        let (p, q) = (bli[i], bli[j]);
        if p * q < 0.0 {
            let k = if p > 0.0 { i } else { j };
            if mag[k] > gate {
                edges.bits[k] = true;
            }
        }
    };
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                mark(i, i + 1);
            }
            if y + 1 < h {
                mark(i, i + w);
            }
        }
    }
    Ok(morphological_thin(&edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::{connected_components, Connectivity};

    #[test]
    fn isef_keeps_constants_and_unit_mass() {
        let mut line = vec![3.0; 20];
        isef_line(&mut line, 0.6, &mut Vec::new());
        assert!(line.iter().all(|v| (v - 3.0).abs() < 1e-12));
        let mut imp = vec![0.0; 201];
        imp[100] = 1.0;
        isef_line(&mut imp, 0.5, &mut Vec::new());
        let sum: f64 = imp.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // b^|n| shape with peak (1-b)/(1+b)
        assert!((imp[100] - 0.5 / 1.5).abs() < 1e-12);
        assert!((imp[101] / imp[100] - 0.5).abs() < 1e-12);
        assert!((imp[97] / imp[100] - 0.125).abs() < 1e-12);
    }

    #[test]
    fn constant_frame_has_no_edges() {
        let f = Frame::filled(16, 16, 0.4);
        assert!(shen_castan_edges(&f, 0.7).unwrap().is_empty());
    }

    #[test]
    fn vertical_step_gives_single_line() {
        let f = Frame::from_fn(30, 20, |x, _| if x >= 15 { 1.0 } else { 0.0 });
        let e = shen_castan_edges(&f, 0.7).unwrap();
        for y in 0..20 {
            let cols: Vec<usize> = (0..30).filter(|&x| e.get(x, y)).collect();
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            // the true edge lies between columns 14 and 15
            assert!((cols[0] as f64 - 14.5).abs() <= 1.0);
        }
    }

    #[test]
    fn disk_gives_closed_ring() {
        let f = Frame::from_fn(48, 48, |x, y| {
            let (dx, dy) = (x as f64 - 23.5, y as f64 - 23.5);
            if dx * dx + dy * dy <= 144.0 {
                1.0
            } else {
                0.0
            }
        });
        let e = shen_castan_edges(&f, 0.7).unwrap();
        let (_, rings) = connected_components(&e, Connectivity::Eight);
        assert_eq!(rings.len(), 1);
        let inv = BinaryMask {
            width: 48,
            height: 48,
            bits: e.bits.iter().map(|b| !b).collect(),
        };
        let (_, bg) = connected_components(&inv, Connectivity::Four);
        assert_eq!(bg.len(), 2, "edge ring must separate inside from outside");
    }

    #[test]
    fn smoothing_out_of_range_rejected() {
        let f = Frame::filled(4, 4, 0.0);
        assert!(shen_castan_edges(&f, 0.0).is_err());
        assert!(shen_castan_edges(&f, 1.0).is_err());
    }
}
