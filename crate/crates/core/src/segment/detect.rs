//! Frame-level bubble detection.

use serde::{Deserialize, Serialize};

use crate::denoise::gaussian_blur;
use crate::error::{Error, Result};
use crate::frame::{median, robust_sigma, Frame};

use super::{
    adaptive_binarize, connected_components, fill_holes, fit_ellipse, free_surface_row, otsu_threshold_values,
    shen_castan_edges, BinaryMask, Connectivity, Detection, Origin, Polarity,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Blur, global Otsu threshold, hole filling.
    Otsu,
    /// Local adaptive threshold combined with Shen-Castan edge rings.
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub route: Route,
    pub polarity: Polarity,
    /// Gaussian pre-blur in pixels.
    pub blur_sigma: f64,
    pub histogram_bins: usize,
    /// Components smaller than this many pixels are dropped.
    pub min_area: usize,
    pub max_aspect: f64,
    /// Required mean contrast of a component over the background median,
    /// in units of the robust noise sigma of the blurred frame.
    pub contrast_sigma: f64,
    /// Seeds grow over connected pixels brighter than background plus this
    /// fraction of the seed's peak contrast...
    pub grow_fraction: f64,
    /// ...or plus this many noise sigmas, whichever is higher.
    pub grow_sigma: f64,
    pub adaptive_window: usize,
    pub adaptive_offset: f64,
    pub edge_smoothing: f64,
    /// Locate the free surface and drop detections close to it.
    pub free_surface: bool,
    /// Detections whose centroid lies within this many semi-major axes
    /// below the surface are dropped.
    pub surface_margin: f64,
    pub surface_gradient_floor: f64,
    /// Physical origin in pixel coordinates; bottom centre of the frame when unset.
    pub origin: Option<Origin>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            route: Route::Otsu,
            polarity: Polarity::Above,
            blur_sigma: 1.5,
            histogram_bins: 256,
            min_area: 20,
            max_aspect: 4.0,
            contrast_sigma: 4.0,
            grow_fraction: 0.25,
            grow_sigma: 2.5,
            adaptive_window: 15,
            adaptive_offset: 0.0,
            edge_smoothing: 0.7,
            free_surface: false,
            surface_margin: 3.0,
            surface_gradient_floor: super::surface::DEFAULT_GRADIENT_FLOOR,
            origin: None,
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("SegmentConfig.{m}")));
        if !(self.blur_sigma >= 0.0) {
            return bad("blur_sigma must be >= 0");
        }
        if self.histogram_bins < 2 {
            return bad("histogram_bins must be >= 2");
        }
        if self.min_area == 0 {
            return bad("min_area must be >= 1");
        }
        if !(self.max_aspect >= 1.0) {
            return bad("max_aspect must be >= 1");
        }
        if !(self.contrast_sigma >= 0.0) || !(self.grow_sigma >= 0.0) {
            return bad("contrast_sigma and grow_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.grow_fraction) {
            return bad("grow_fraction must lie in [0, 1]");
        }
        if self.adaptive_window < 3 || self.adaptive_window.is_multiple_of(2) {
            return bad("adaptive_window must be odd and >= 3");
        }
        if !(self.edge_smoothing > 0.0 && self.edge_smoothing < 1.0) {
            return bad("edge_smoothing must lie in (0, 1)");
        }
        if !(self.surface_margin >= 0.0) || !(self.surface_gradient_floor > 0.0) {
            return bad("surface_margin must be >= 0 and surface_gradient_floor > 0");
        }
        Ok(())
    }

    pub fn origin_for(&self, frame: &Frame) -> Origin {
        self.origin
            .unwrap_or_else(|| Origin::bottom_centre(frame.width, frame.height))
    }
}

/// Detects bright (or dark, per polarity) blobs and fits ellipses to them.
/// Results are sorted by elevation then horizontal position.
pub fn detect_bubbles(frame: &Frame, cfg: &SegmentConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let (w, h) = (frame.width, frame.height);
    let origin = cfg.origin_for(frame);
    let blurred = gaussian_blur(frame, cfg.blur_sigma)?;

    // rows strictly below the surface take part in the statistics
    let (first_row, surface_y) = if cfg.free_surface {
        let row = free_surface_row(&blurred, cfg.surface_gradient_floor)?;
        let first = (row.ceil() as usize + 1).min(h);
        (first, Some(origin.to_mm(origin.col, row, frame.pixel_pitch).1))
    } else {
        (0, None)
    };
    let mut work = blurred;
    if cfg.polarity == Polarity::Below {
        work.pixels.iter_mut().for_each(|v| *v = -*v);
    }
    let region = &work.pixels[first_row * w..];
    if region.is_empty() {
        return Ok(Vec::new());
    }
    let (lo, hi) = region
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    if !(hi > lo) {
        // a flat frame holds nothing to detect
        return Ok(Vec::new());
    }
    let bg = median(region);
    let sigma = robust_sigma(region, bg);

    let (seed, seed_level) = match cfg.route {
        Route::Otsu => {
            let t = otsu_threshold_values(region, cfg.histogram_bins)?;
            let m = BinaryMask::from_fn(w, h, |x, y| y >= first_row && work.get(x, y) > t);
            (m, t)
        }
        Route::Adaptive => {
            let mut m = adaptive_binarize(&work, cfg.adaptive_window, cfg.adaptive_offset)?;
            let edges = shen_castan_edges(&work, cfg.edge_smoothing)?;
            let enclosed = fill_holes(&edges);
            for i in 0..w * h {
                m.bits[i] = (m.bits[i] || (enclosed.bits[i] && !edges.bits[i])) && i / w >= first_row;
            }
            (fill_holes(&m), f64::INFINITY)
        }
    };

    let grown = grow(&work, &seed, first_row, bg, sigma, seed_level, cfg);
    let filled = fill_holes(&grown);
    let (_, comps) = connected_components(&filled, Connectivity::Eight);

    let mut out = Vec::new();
    for comp in &comps {
        if comp.pixel_count() < cfg.min_area {
            continue;
        }
        let mean = comp.pixels.iter().map(|&(x, y)| work.get(x, y)).sum::<f64>() / comp.pixel_count() as f64;
        let contrast = mean - bg;
        if contrast <= 0.0 || contrast < cfg.contrast_sigma * sigma {
            continue;
        }
        let mut d = fit_ellipse(comp, frame.pixel_pitch, origin);
        if d.aspect > cfg.max_aspect {
            continue;
        }
        if let Some(ys) = surface_y {
            if d.y > ys - cfg.surface_margin * d.a {
                continue;
            }
        }
        d.frame_index = frame.frame_index;
        d.time = frame.time;
        out.push(d);
    }
    out.sort_by(|p, q| p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)));
    Ok(out)
}

/// Hysteresis growth: each seed component extends over 8-connected pixels
/// at or above its own lower level.
fn grow(
    work: &Frame,
    seed: &BinaryMask,
    first_row: usize,
    bg: f64,
    sigma: f64,
    seed_level: f64,
    cfg: &SegmentConfig,
) -> BinaryMask {
    let (w, h) = (work.width, work.height);
    let mut out = seed.clone();
    let (_, comps) = connected_components(seed, Connectivity::Eight);
    let mut stack = Vec::new();
    for comp in &comps {
        let peak = comp
            .pixels
            .iter()
            .map(|&(x, y)| work.get(x, y))
            .fold(f64::NEG_INFINITY, f64::max);
        let low = (bg + (cfg.grow_fraction * (peak - bg)).max(cfg.grow_sigma * sigma)).min(seed_level);
        stack.extend(comp.pixels.iter().map(|&(x, y)| y * w + x));
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < first_row as isize || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !out.bits[j] && work.pixels[j] >= low {
                        out.bits[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Quality;

    fn scene(w: usize, h: usize, blobs: &[(f64, f64, f64)]) -> Frame {
        Frame::from_fn(w, h, |x, y| {
            let mut v = 0.25;
            for &(cx, cy, r) in blobs {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                if d2 <= r * r {
                    v += 0.1 * (1.0 - d2 / (r * r)).sqrt();
                }
            }
            v
        })
    }

    #[test]
    fn blank_frame_gives_no_detections() {
        let f = Frame::filled(64, 64, 0.25);
        assert!(detect_bubbles(&f, &SegmentConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn three_clean_bubbles() {
        let blobs = [(40.0, 30.0, 12.0), (100.0, 70.0, 10.0), (60.0, 100.0, 14.0)];
        let f = scene(140, 130, &blobs);
        let cfg = SegmentConfig {
            origin: Some(Origin { col: 0.0, row: 0.0 }),
            ..Default::default()
        };
        let dets = detect_bubbles(&f, &cfg).unwrap();
        assert_eq!(dets.len(), 3);
        let p = f.pixel_pitch;
        for &(cx, cy, r) in &blobs {
            let d = dets
                .iter()
                .find(|d| (d.x / p - cx).abs() < 1.0 && (-d.y / p - cy).abs() < 1.0)
                .expect("matched");
            assert!((d.a / p - r).abs() < 0.1 * r, "a {} vs {r}", d.a / p);
            assert_eq!(d.quality, Quality::Ok);
        }
        // sorted by elevation (y up)
        assert!(dets.windows(2).all(|w| w[0].y <= w[1].y));
    }

    #[test]
    fn half_out_bubble_is_edge_touching() {
        let f = scene(80, 80, &[(2.0, 40.0, 12.0)]);
        let dets = detect_bubbles(&f, &SegmentConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].quality, Quality::EdgeTouching);
    }

    #[test]
    fn adaptive_route_finds_bubbles() {
        let f = scene(120, 90, &[(35.0, 45.0, 11.0), (85.0, 40.0, 9.0)]);
        let cfg = SegmentConfig {
            route: Route::Adaptive,
            adaptive_window: 31,
            ..Default::default()
        };
        let dets = detect_bubbles(&f, &cfg).unwrap();
        assert_eq!(dets.len(), 2, "{dets:?}");
    }

    #[test]
    fn surface_margin_drops_bubbles_near_surface() {
        // air band on top, one bubble deep and one just below the surface
        let mut f = scene(100, 160, &[(50.0, 120.0, 10.0), (50.0, 45.0, 8.0)]);
        for y in 0..30 {
            for x in 0..100 {
                f.set(x, y, 1.0);
            }
        }
        let cfg = SegmentConfig {
            free_surface: true,
            ..Default::default()
        };
        let dets = detect_bubbles(&f, &cfg).unwrap();
        assert_eq!(dets.len(), 1);
        let row = cfg.origin_for(&f).to_pixel(dets[0].x, dets[0].y, f.pixel_pitch).1;
        assert!((row - 120.0).abs() < 1.0);
    }

    #[test]
    fn deterministic_output() {
        let f = scene(90, 90, &[(30.0, 30.0, 9.0), (60.0, 60.0, 9.0)]);
        let a = detect_bubbles(&f, &SegmentConfig::default()).unwrap();
        let b = detect_bubbles(&f, &SegmentConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
