//! Scalar intensity frames and pixel rectangles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detector pixel pitch of the reference acquisition, mm/pixel.
pub const DEFAULT_PIXEL_PITCH_MM: f64 = 0.0551;
/// Acquisition frame rate of the reference acquisition, frames/s.
pub const DEFAULT_FRAME_RATE: f64 = 100.0;

/// A 2D grid of real intensities with its physical metadata.
///
/// Pixels are stored row-major; `(x, y)` is (column, row) with row 0 at the
/// top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    /// mm per pixel, isotropic.
    pub pixel_pitch: f64,
    pub frame_index: usize,
    /// Seconds since the first frame of the sequence.
    pub time: f64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        Frame {
            width,
            height,
            pixels,
            pixel_pitch: DEFAULT_PIXEL_PITCH_MM,
            frame_index: 0,
            time: 0.0,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    /// Copies pitch, index and time from `other`.
    pub fn with_meta_of(mut self, other: &Frame) -> Self {
        self.pixel_pitch = other.pixel_pitch;
        self.frame_index = other.frame_index;
        self.time = other.time;
        self
    }

    /// Same metadata, new pixel buffer.
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Frame {
        assert_eq!(pixels.len(), self.pixels.len(), "pixel buffer size");
        Frame {
            width: self.width,
            height: self.height,
            pixels,
            pixel_pitch: self.pixel_pitch,
            frame_index: self.frame_index,
            time: self.time,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.pixels.iter().all(|v| v.is_finite())
    }

    /// Left-right mirror.
    pub fn mirror_x(&self) -> Frame {
        let (w, h) = (self.width, self.height);
        self.with_pixels(
            (0..h)
                .flat_map(|y| (0..w).map(move |x| (w - 1 - x, y)))
                .map(|(x, y)| self.get(x, y))
                .collect(),
        )
    }

    /// Top-bottom mirror.
    pub fn mirror_y(&self) -> Frame {
        let (w, h) = (self.width, self.height);
        self.with_pixels(
            (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, h - 1 - y)))
                .map(|(x, y)| self.get(x, y))
                .collect(),
        )
    }

    /// Transpose-based quarter turn: output (x, y) = input (y, w' - 1 - x).
    pub fn rotate90(&self) -> Frame {
        let (w, h) = (self.width, self.height);
        let mut out = Frame::filled(h, w, 0.0).with_meta_of(self);
        for y in 0..w {
            for x in 0..h {
                out.set(x, y, self.get(w - 1 - y, x));
            }
        }
        out
    }
}

/// Axis-aligned pixel rectangle, origin at its top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Roi {
            x,
            y,
            width,
            height,
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Roi::new(0, 0, width, height)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        let fits = self.width > 0
            && self.height > 0
            && self.x.checked_add(self.width).is_some_and(|r| r <= width)
            && self.y.checked_add(self.height).is_some_and(|b| b <= height);
        if fits {
            Ok(())
        } else {
            Err(Error::RoiOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.width,
                h: self.height,
                width,
                height,
            })
        }
    }

    /// Parses `x,y,w,h`.
    pub fn parse(s: &str) -> Result<Roi> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidParameter(format!("roi '{s}': {e}")))?;
        match parts.as_slice() {
            &[x, y, w, h] => Ok(Roi::new(x, y, w, h)),
            _ => Err(Error::InvalidParameter(format!(
                "roi '{s}' must have the form x,y,w,h"
            ))),
        }
    }
}

/// Median of a slice (average of the two central values for even lengths).
/// Returns NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation scaled to a normal-consistent sigma.
pub fn robust_sigma(values: &[f64], center: f64) -> f64 {
    let dev: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    1.4826 * median(&dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrors_and_rotation_are_involutive() {
        let f = Frame::from_fn(5, 3, |x, y| (x * 10 + y) as f64);
        assert_eq!(f.mirror_x().mirror_x(), f);
        assert_eq!(f.mirror_y().mirror_y(), f);
        let r = f.rotate90();
        assert_eq!((r.width, r.height), (3, 5));
        assert_eq!(r.rotate90().rotate90().rotate90(), f);
    }

    #[test]
    fn roi_bounds() {
        assert!(Roi::new(0, 0, 10, 10).check_within(10, 10).is_ok());
        assert!(Roi::new(0, 0, 11, 10).check_within(10, 10).is_err());
        assert!(Roi::new(9, 9, 1, 1).check_within(10, 10).is_ok());
        assert!(Roi::new(0, 0, 0, 1).check_within(10, 10).is_err());
        assert_eq!(Roi::parse("1, 2,3,4").unwrap(), Roi::new(1, 2, 3, 4));
        assert!(Roi::parse("1,2,3").is_err());
    }

    #[test]
    fn median_and_mad() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        let v = [1.0, 1.0, 1.0, 1.0, 100.0];
        assert_eq!(robust_sigma(&v, median(&v)), 0.0);
    }
}
