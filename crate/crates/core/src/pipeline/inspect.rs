use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::Range;
use std::path::{Path, PathBuf};

use tiff::encoder::{colortype, TiffEncoder};

use crate::denoise::curvature_flow_filter;
use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::segment::{detect_bubbles, Detection, Quality};

use super::{load_inputs, normalized_frame, PipelineConfig};

/// Grey image of `frame` stretched to its range, with detection outlines
/// drawn in red (green for edge-touching ones). Returns interleaved RGB.
pub fn overlay_rgb(frame: &Frame, detections: &[Detection], origin: crate::segment::Origin) -> Vec<u8> {
    let (lo, hi) = frame.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut rgb: Vec<u8> = frame
        .pixels
        .iter()
        .flat_map(|&v| {
            let g = ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
            [g, g, g]
        })
        .collect();
    let p = frame.pixel_pitch;
    for d in detections {
        let colour = if d.quality == Quality::EdgeTouching { [0, 255, 0] } else { [255, 0, 0] };
        let steps = ((d.a / p) * 8.0).ceil().max(32.0) as usize;
        let (sin, cos) = d.theta.sin_cos();
        for k in 0..steps {
            let phi = std::f64::consts::TAU * k as f64 / steps as f64;
            let (u, v) = (d.a * phi.cos(), d.b * phi.sin());
            let (x, y) = (d.x + u * cos - v * sin, d.y + u * sin + v * cos);
            let (c, r) = origin.to_pixel(x, y, p);
            let (c, r) = (c.round(), r.round());
            if c >= 0.0 && r >= 0.0 && (c as usize) < frame.width && (r as usize) < frame.height {
                let i = 3 * (r as usize * frame.width + c as usize);
                rgb[i..i + 3].copy_from_slice(&colour);
            }
        }
    }
    rgb
}

fn write_rgb_tiff(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::write(path, e))?;
    let mut enc = TiffEncoder::new(BufWriter::new(file)).map_err(|e| Error::write(path, e))?;
    enc.write_image::<colortype::RGB8>(width as u32, height as u32, rgb)
        .map_err(|e| Error::write(path, e))
}

/// Runs the per-frame stages on `frames` and writes one overlay TIFF per
/// frame into `out_dir`.
pub fn inspect_frames(cfg: &PipelineConfig, frames: Range<usize>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (stack, cal) = load_inputs(cfg)?;
    if frames.is_empty() || frames.end > stack.len() {
        return Err(Error::FrameOutOfRange {
            index: frames.end.max(frames.start + 1) - 1,
            len: stack.len(),
        });
    }
    let first = normalized_frame(&stack, &cal, cfg, 0)?;
    let cff = cfg.cff.resolve(&first)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::write(out_dir, e))?;
    let mut written = Vec::new();
    for i in frames {
        let smooth = curvature_flow_filter(&normalized_frame(&stack, &cal, cfg, i)?, &cff)?;
        let dets = detect_bubbles(&smooth, &cfg.segment)?;
        let rgb = overlay_rgb(&smooth, &dets, cfg.segment.origin_for(&smooth));
        let path = out_dir.join(format!("overlay_{i:05}.tif"));
        write_rgb_tiff(&path, smooth.width, smooth.height, &rgb)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::Origin;

    #[test]
    fn outline_lands_on_the_ellipse() {
        let f = Frame::filled(40, 40, 0.5);
        let origin = Origin::bottom_centre(40, 40);
        let p = f.pixel_pitch;
        let (x, y) = origin.to_mm(20.0, 20.0, p);
        let d = Detection {
            frame_index: 0,
            time: 0.0,
            x,
            y,
            a: 8.0 * p,
            b: 8.0 * p,
            theta: 0.0,
            area: 0.0,
            aspect: 1.0,
            quality: Quality::Ok,
        };
        let rgb = overlay_rgb(&f, &[d], origin);
        let red = |c: usize, r: usize| rgb[3 * (r * 40 + c)..3 * (r * 40 + c) + 3] == [255, 0, 0];
        assert!(red(28, 20) && red(12, 20) && red(20, 12) && red(20, 28));
        assert!(!red(20, 20));
    }
}
