//! Free-surface (air above, liquid metal below) elevation.

use crate::error::{Error, Result};
use crate::frame::{median, Frame};

use super::Origin;

/// Default minimum bright-to-dark step between adjacent rows.
pub const DEFAULT_GRADIENT_FLOOR: f64 = 0.05;

/// Row coordinate of the surface: per column the strongest bright-to-dark
/// step between consecutive rows (placed half-way between them), then the
/// median over columns. Columns without a step of at least `gradient_floor`
/// are skipped; fewer than half the columns qualifying is an error.
pub fn free_surface_row(frame: &Frame, gradient_floor: f64) -> Result<f64> {
    let (w, h) = (frame.width, frame.height);
    let mut rows = Vec::with_capacity(w);
    if h >= 2 {
        for x in 0..w {
            let mut best = (0usize, f64::INFINITY);
            for y in 0..h - 1 {
                let d = frame.pixels[(y + 1) * w + x] - frame.pixels[y * w + x];
                if d < best.1 {
                    best = (y, d);
                }
            }
            if -best.1 >= gradient_floor {
                rows.push(best.0 as f64 + 0.5);
            }
        }
    }
    if rows.is_empty() || 2 * rows.len() < w {
        return Err(Error::SurfaceNotFound);
    }
    Ok(median(&rows))
}

/// Surface elevation in mm.
pub fn detect_free_surface(frame: &Frame, gradient_floor: f64, origin: Origin) -> Result<f64> {
    let row = free_surface_row(frame, gradient_floor)?;
    Ok(origin.to_mm(origin.col, row, frame.pixel_pitch).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_band_frame() {
        let f = Frame::from_fn(20, 40, |_, y| if y < 12 { 1.0 } else { 0.25 });
        let row = free_surface_row(&f, DEFAULT_GRADIENT_FLOOR).unwrap();
        assert!((row - 11.5).abs() <= 1.0);
        let o = Origin { col: 0.0, row: 39.0 };
        let y = detect_free_surface(&f, DEFAULT_GRADIENT_FLOOR, o).unwrap();
        assert!((y - 27.5 * f.pixel_pitch).abs() < 1e-12);
    }

    #[test]
    fn tilted_band_gives_median_row() {
        // boundary row ramps from 10 to 14 across 21 columns
        let edge = |x: usize| 10 + (x * 5) / 21;
        let f = Frame::from_fn(21, 30, |x, y| if y < edge(x) { 1.0 } else { 0.2 });
        let mut oracle: Vec<f64> = (0..21).map(|x| edge(x) as f64 - 0.5).collect();
        oracle.sort_by(f64::total_cmp);
        assert_eq!(free_surface_row(&f, 0.1).unwrap(), oracle[10]);
    }

    #[test]
    fn constant_frame_has_no_surface() {
        let err = free_surface_row(&Frame::filled(8, 8, 0.3), 0.01).unwrap_err();
        assert_eq!(err.to_string(), "surface not found");
    }
}
