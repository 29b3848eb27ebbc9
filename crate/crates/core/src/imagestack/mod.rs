//! Sequence loading, dark/flat calibration and normalisation.
//!
//! Raw radiographs are corrected as `(raw - dark) / (flat - dark)`, where
//! `dark` and `flat` are per-pixel means of dark-current and open-beam frames.
//! Hot pixels are found on the flat statistics and replaced after
//! normalisation so the grid stays dense.

mod io;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use io::{
    load_sequence, read_f64_pages, read_stack, to_u16_image, write_f64_pages, write_raw_stack,
    write_tiff_stack, RawStack, SequenceFormat,
};

use crate::error::{Error, Result};
use crate::frame::{median, robust_sigma, Frame, Roi, DEFAULT_FRAME_RATE, DEFAULT_PIXEL_PITCH_MM};

pub const DEFAULT_HOT_SIGMA: f64 = 5.0;
pub const DEFAULT_CLAMP_MAX: f64 = 2.0;

/// Acquisition metadata of one measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceMeta {
    /// Frames per second.
    pub frame_rate: f64,
    /// mm per pixel.
    pub pixel_pitch: f64,
    /// Gas flow rate, cm^3/min.
    pub flow_rate: f64,
    pub field_applied: bool,
    /// Tesla.
    pub field_magnitude: f64,
    /// Liquid metal thickness along the beam, mm.
    pub slab_thickness: f64,
    pub roi: Option<Roi>,
}

impl Default for SequenceMeta {
    fn default() -> Self {
        SequenceMeta {
            frame_rate: DEFAULT_FRAME_RATE,
            pixel_pitch: DEFAULT_PIXEL_PITCH_MM,
            flow_rate: 100.0,
            field_applied: false,
            field_magnitude: 0.0,
            slab_thickness: 20.0,
            roi: None,
        }
    }
}

impl SequenceMeta {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.frame_rate > 0.0) {
            return Err(Error::InvalidParameter("frame_rate must be > 0".into()));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(Error::InvalidParameter("pixel_pitch must be > 0".into()));
        }
        if !(self.flow_rate >= 0.0) {
            return Err(Error::InvalidParameter("flow_rate must be >= 0".into()));
        }
        if let Some(roi) = self.roi {
            roi.check_within(width, height)?;
        }
        Ok(())
    }
}

/// Dark and flat references plus the hot-pixel mask derived from the flats.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub dark: Frame,
    pub flat: Frame,
    pub hot_pixel_mask: Vec<bool>,
    /// Upper clamp of normalised transmission.
    pub clamp_max: f64,
}

impl CalibrationSet {
    pub fn width(&self) -> usize {
        self.dark.width
    }

    pub fn height(&self) -> usize {
        self.dark.height
    }

    pub fn hot_pixel_count(&self) -> usize {
        self.hot_pixel_mask.iter().filter(|&&m| m).count()
    }

    /// Restricts the references to a region of interest.
    pub fn crop(&self, roi: Roi) -> Result<CalibrationSet> {
        let dark = crop(&self.dark, roi)?;
        let flat = crop(&self.flat, roi)?;
        let w = self.width();
        let mask = (roi.y..roi.y + roi.height)
            .flat_map(|y| (roi.x..roi.x + roi.width).map(move |x| y * w + x))
            .map(|i| self.hot_pixel_mask[i])
            .collect();
        Ok(CalibrationSet {
            dark,
            flat,
            hot_pixel_mask: mask,
            clamp_max: self.clamp_max,
        })
    }

    /// Stores dark, flat and mask as three float TIFF pages.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mask = self.dark.with_pixels(
            self.hot_pixel_mask
                .iter()
                .map(|&m| if m { 1.0 } else { 0.0 })
                .collect(),
        );
        write_f64_pages(path, &[&self.dark, &self.flat, &mask])
    }

    pub fn load(path: &Path, clamp_max: f64) -> Result<CalibrationSet> {
        let pages = read_f64_pages(path)?;
        let [dark, flat, mask]: [Frame; 3] = pages
            .try_into()
            .map_err(|_| Error::read(path, "calibration file must have 3 pages"))?;
        if !dark.same_shape(&flat) || !dark.same_shape(&mask) {
            return Err(Error::read(path, "calibration pages differ in size"));
        }
        Ok(CalibrationSet {
            dark,
            flat,
            hot_pixel_mask: mask.pixels.iter().map(|&v| v != 0.0).collect(),
            clamp_max,
        })
    }
}

fn mean_frame(frames: &[Frame], what: &'static str) -> Result<Frame> {
    let first = frames.first().ok_or(Error::EmptyInput(what))?;
    let mut acc = vec![0.0; first.len()];
    for (index, f) in frames.iter().enumerate() {
        if !f.same_shape(first) {
            return Err(Error::DimensionMismatch {
                index,
                got_w: f.width,
                got_h: f.height,
                want_w: first.width,
                want_h: first.height,
            });
        }
        for (a, v) in acc.iter_mut().zip(&f.pixels) {
            *a += v;
        }
    }
    let n = frames.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(first.with_pixels(acc))
}

/// Averages dark and flat frames and masks pixels whose flat mean exceeds
/// `median + hot_sigma * 1.4826 * MAD`.
pub fn build_calibration(
    dark_frames: &[Frame],
    flat_frames: &[Frame],
    hot_sigma: f64,
) -> Result<CalibrationSet> {
    let dark = mean_frame(dark_frames, "dark frame")?;
    let flat = mean_frame(flat_frames, "flat frame")?;
    if !dark.same_shape(&flat) {
        return Err(Error::DimensionMismatch {
            index: 0,
            got_w: flat.width,
            got_h: flat.height,
            want_w: dark.width,
            want_h: dark.height,
        });
    }
    let med = median(&flat.pixels);
    let threshold = med + hot_sigma * robust_sigma(&flat.pixels, med);
    let hot_pixel_mask: Vec<bool> = flat.pixels.iter().map(|&v| v > threshold).collect();
    let bad = flat
        .pixels
        .iter()
        .zip(&dark.pixels)
        .zip(&hot_pixel_mask)
        .filter(|((f, d), &m)| !m && !(*f - *d > 0.0))
        .count();
    if bad > 0 {
        return Err(Error::NonPositiveFlat { count: bad });
    }
    Ok(CalibrationSet {
        dark,
        flat,
        hot_pixel_mask,
        clamp_max: DEFAULT_CLAMP_MAX,
    })
}

/// Flat-field corrects one frame. Hot pixels get the median of their
/// unmasked 3x3 neighbours (the search widens if all neighbours are hot).
pub fn normalize(raw: &Frame, cal: &CalibrationSet) -> Result<Frame> {
    if !raw.same_shape(&cal.dark) {
        return Err(Error::DimensionMismatch {
            index: raw.frame_index,
            got_w: raw.width,
            got_h: raw.height,
            want_w: cal.width(),
            want_h: cal.height(),
        });
    }
    let mut out: Vec<f64> = raw
        .pixels
        .iter()
        .zip(&cal.dark.pixels)
        .zip(&cal.flat.pixels)
        .zip(&cal.hot_pixel_mask)
        .map(|(((r, d), f), &m)| {
            if m {
                0.0
            } else {
                let v = (r - d) / (f - d);
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(0.0, cal.clamp_max)
                }
            }
        })
        .collect();

    let (w, h) = (raw.width, raw.height);
    if cal.hot_pixel_mask.iter().any(|&m| m) {
        let unmasked_total = cal.hot_pixel_mask.iter().filter(|&&m| !m).count();
        let snapshot = out.clone();
        for (i, _) in cal.hot_pixel_mask.iter().enumerate().filter(|(_, &m)| m) {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let mut radius = 1;
            out[i] = loop {
                let mut nbs = Vec::new();
                for ny in (y - radius).max(0)..=(y + radius).min(h as isize - 1) {
                    for nx in (x - radius).max(0)..=(x + radius).min(w as isize - 1) {
                        let j = ny as usize * w + nx as usize;
                        if !cal.hot_pixel_mask[j] {
                            nbs.push(snapshot[j]);
                        }
                    }
                }
                if !nbs.is_empty() {
                    break median(&nbs);
                }
                if unmasked_total == 0 || radius as usize > w.max(h) {
                    break 0.0;
                }
                radius += 1;
            };
        }
    }
    Ok(raw.with_pixels(out))
}

/// Copies a rectangular region; pitch, index and time are kept.
pub fn crop(frame: &Frame, roi: Roi) -> Result<Frame> {
    roi.check_within(frame.width, frame.height)?;
    let mut pixels = Vec::with_capacity(roi.width * roi.height);
    for y in roi.y..roi.y + roi.height {
        let start = y * frame.width + roi.x;
        pixels.extend_from_slice(&frame.pixels[start..start + roi.width]);
    }
    Ok(Frame::new(roi.width, roi.height, pixels).with_meta_of(frame))
}
