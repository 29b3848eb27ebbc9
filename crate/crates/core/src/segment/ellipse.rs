//! Equivalent-ellipse fit from region moments.

use serde::{Deserialize, Serialize};

use super::Component;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quality {
    Ok,
    EdgeTouching,
    LowContrast,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Ok => "ok",
            Quality::EdgeTouching => "edge_touching",
            Quality::LowContrast => "low_contrast",
        }
    }
}

impl std::str::FromStr for Quality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ok" => Ok(Quality::Ok),
            "edge_touching" => Ok(Quality::EdgeTouching),
            "low_contrast" => Ok(Quality::LowContrast),
            other => Err(format!("unknown quality '{other}'")),
        }
    }
}

/// Physical position of pixel centres: `x = (col - origin.col) * pitch`,
/// `y = (origin.row - row) * pitch`, so elevation increases upwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub col: f64,
    pub row: f64,
}

impl Origin {
    /// Horizontal centre of the bottom pixel row.
    pub fn bottom_centre(width: usize, height: usize) -> Self {
        Origin {
            col: (width as f64 - 1.0) / 2.0,
            row: height as f64 - 1.0,
        }
    }

    pub fn to_mm(&self, col: f64, row: f64, pitch: f64) -> (f64, f64) {
        ((col - self.col) * pitch, (self.row - row) * pitch)
    }

    pub fn to_pixel(&self, x_mm: f64, y_mm: f64, pitch: f64) -> (f64, f64) {
        (x_mm / pitch + self.col, self.row - y_mm / pitch)
    }
}

/// One fitted bubble silhouette. Lengths in mm, angles in radians measured
/// counterclockwise from the +x axis with y pointing up.
/// Field names on disk carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: usize,
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "x_mm")]
    pub x: f64,
    #[serde(rename = "y_mm")]
    pub y: f64,
    #[serde(rename = "a_mm")]
    pub a: f64,
    #[serde(rename = "b_mm")]
    pub b: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    #[serde(rename = "area_mm2")]
    pub area: f64,
    pub aspect: f64,
    pub quality: Quality,
}

/// Fits the ellipse with the same first and second moments as the region.
/// Each pixel counts as a unit square, so its own variance of 1/12 is added.
pub fn fit_ellipse(component: &Component, pitch: f64, origin: Origin) -> Detection {
    let n = component.pixels.len() as f64;
    let (sx, sy) = component
        .pixels
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
    let (cx, cy) = (sx / n, sy / n);
    let (mut m20, mut m02, mut m11) = (0.0, 0.0, 0.0);
    for &(x, y) in &component.pixels {
        let dx = x as f64 - cx;
        // flip rows so that moments are taken with y pointing up
        let dy = cy - y as f64;
        m20 += dx * dx;
        m02 += dy * dy;
        m11 += dx * dy;
    }
    let (m20, m02, m11) = (m20 / n + 1.0 / 12.0, m02 / n + 1.0 / 12.0, m11 / n);

    let half_tr = (m20 + m02) / 2.0;
    let disc = (((m20 - m02) / 2.0).powi(2) + m11 * m11).sqrt();
    let (l1, l2) = (half_tr + disc, (half_tr - disc).max(0.0));
    let mut theta = 0.5 * (2.0 * m11).atan2(m20 - m02);
    if theta <= -std::f64::consts::FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }

    let a = 2.0 * l1.sqrt() * pitch;
    let mut b = 2.0 * l2.sqrt() * pitch;
    let collinear = is_collinear(&component.pixels);
    let mut quality = if component.touches_border {
        Quality::EdgeTouching
    } else {
        Quality::Ok
    };
    if collinear {
        quality = Quality::LowContrast;
        b = b.max(0.5 * pitch);
    }
    let a = a.max(b);
    let (x, y) = origin.to_mm(cx, cy, pitch);
    Detection {
        frame_index: 0,
        time: 0.0,
        x,
        y,
        a,
        b,
        theta,
        area: n * pitch * pitch,
        aspect: a / b,
        quality,
    }
}

fn is_collinear(pixels: &[(usize, usize)]) -> bool {
    let (x0, y0) = (pixels[0].0 as i64, pixels[0].1 as i64);
    let Some(&(x1, y1)) = pixels.iter().find(|&&p| p != pixels[0]) else {
        return true;
    };
    let (dx, dy) = (x1 as i64 - x0, y1 as i64 - y0);
    pixels
        .iter()
        .all(|&(x, y)| dx * (y as i64 - y0) - dy * (x as i64 - x0) == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::DEFAULT_PIXEL_PITCH_MM;

    fn raster_ellipse(cx: f64, cy: f64, a: f64, b: f64, theta: f64, w: usize, h: usize) -> Component {
        let (s, c) = theta.sin_cos();
        let mut px = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = cy - y as f64;
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                if (u / a).powi(2) + (v / b).powi(2) <= 1.0 {
                    px.push((x, y));
                }
            }
        }
        Component::from_pixels(px, w, h)
    }

    const O: Origin = Origin { col: 0.0, row: 0.0 };

    #[test]
    fn disk_radius_20() {
        let p = DEFAULT_PIXEL_PITCH_MM;
        let d = fit_ellipse(&raster_ellipse(50.0, 50.0, 20.0, 20.0, 0.0, 101, 101), p, O);
        assert!((d.a - 1.102).abs() < 0.02 * 1.102, "{}", d.a);
        assert!((d.b - 1.102).abs() < 0.02 * 1.102, "{}", d.b);
        assert!((d.x - 50.0 * p).abs() < 1e-12);
        assert!((d.y + 50.0 * p).abs() < 1e-12);
        assert_eq!(d.quality, Quality::Ok);
    }

    #[test]
    fn tilted_ellipse_round_trip() {
        let th = 30f64.to_radians();
        let d = fit_ellipse(&raster_ellipse(60.3, 55.7, 30.0, 15.0, th, 121, 121), 1.0, O);
        assert!((d.a - 30.0).abs() < 0.6, "{}", d.a);
        assert!((d.b - 15.0).abs() < 0.3, "{}", d.b);
        assert!((d.theta - th).abs() < 2f64.to_radians(), "{}", d.theta.to_degrees());
        assert!(d.aspect >= 1.0);
    }

    #[test]
    fn single_pixel_is_degenerate() {
        let c = Component::from_pixels(vec![(4, 7)], 10, 10);
        let d = fit_ellipse(&c, 0.1, O);
        assert_eq!(d.quality, Quality::LowContrast);
        assert!((d.x - 0.4).abs() < 1e-12 && (d.y + 0.7).abs() < 1e-12);
        assert!(d.b >= 0.05 && d.a >= d.b);
        assert!((d.area - 0.01).abs() < 1e-15);
    }

    #[test]
    fn translation_and_rotation_equivariance() {
        let base = raster_ellipse(30.0, 30.0, 12.0, 5.0, 0.4, 61, 61);
        let d0 = fit_ellipse(&base, 1.0, O);
        let shifted = Component::from_pixels(base.pixels.iter().map(|&(x, y)| (x + 7, y + 3)).collect(), 80, 80);
        let d1 = fit_ellipse(&shifted, 1.0, O);
        assert!((d1.x - d0.x - 7.0).abs() < 1e-9 && (d1.y - d0.y + 3.0).abs() < 1e-9);
        assert!((d1.a - d0.a).abs() < 1e-9 && (d1.b - d0.b).abs() < 1e-9);
        assert!((d1.theta - d0.theta).abs() < 1e-9);
        // 90 degree screen rotation (x, y) -> (y, W-1-x) turns the shape counterclockwise
        let rot = Component::from_pixels(base.pixels.iter().map(|&(x, y)| (y, 60 - x)).collect(), 61, 61);
        let d2 = fit_ellipse(&rot, 1.0, O);
        assert!((d2.a - d0.a).abs() < 1e-9 && (d2.b - d0.b).abs() < 1e-9);
        let mut expect = d0.theta + std::f64::consts::FRAC_PI_2;
        if expect > std::f64::consts::FRAC_PI_2 {
            expect -= std::f64::consts::PI;
        }
        assert!((d2.theta - expect).abs() < 1e-9, "{} vs {}", d2.theta, expect);
    }

    #[test]
    fn origin_round_trip() {
        let o = Origin::bottom_centre(512, 512);
        let (x, y) = o.to_mm(100.0, 20.0, 0.05);
        let (c, r) = o.to_pixel(x, y, 0.05);
        assert!((c - 100.0).abs() < 1e-9 && (r - 20.0).abs() < 1e-9);
        assert!(y > 0.0);
    }
}
