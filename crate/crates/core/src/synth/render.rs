use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagestack::RawStack;

use super::scenario::{half_extents, EllipseState, ScenarioSpec};
use super::truth::{GroundTruth, TruthState};

/// Bubbles closer than this to the frame border or the surface are not
/// scored.
pub const INSIDE_MARGIN_PX: f64 = 3.0;

const DARK_STREAM: u64 = 1 << 32;
const FLAT_STREAM: u64 = 2 << 32;

/// Output of [`render_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub raw: RawStack,
    pub darks: RawStack,
    pub flats: RawStack,
    pub truth: GroundTruth,
}

impl ScenarioSpec {
    /// Peak contrast of a bubble with minor semi-axis `b_mm` over the
    /// standard deviation of the calibrated background transmission.
    pub fn peak_snr(&self, b_mm: f64) -> f64 {
        let t_bg = self.background_transmission();
        let contrast = t_bg * ((self.attenuation * 2.0 * b_mm.min(0.5 * self.slab_thickness)).exp() - 1.0);
        let flat = self.photon_scale * self.beam[0];
        let sigma_counts = (flat * t_bg + self.read_noise * self.read_noise).sqrt();
        contrast / (sigma_counts / flat)
    }

    /// Photon scale giving `snr` for bubbles with minor semi-axis `b_mm`,
    /// inverting [`ScenarioSpec::peak_snr`].
    pub fn photon_scale_for_snr(&self, b_mm: f64, snr: f64) -> f64 {
        let t_bg = self.background_transmission();
        let contrast = t_bg * ((self.attenuation * 2.0 * b_mm.min(0.5 * self.slab_thickness)).exp() - 1.0);
        // (c/s)^2 * F^2 = F t + r^2, solved for F = photon_scale * beam[0]
        let q = (contrast / snr).powi(2);
        let r2 = self.read_noise * self.read_noise;
        let flat = (t_bg + (t_bg * t_bg + 4.0 * q * r2).sqrt()) / (2.0 * q);
        flat / self.beam[0]
    }

    fn surface_y_mm(&self) -> Option<f64> {
        self.surface_row.map(|r| self.origin().to_mm(0.0, r as f64 - 0.5, self.pixel_pitch).1)
    }

    /// Bubble states at frame `index` that reach into the melt inside the
    /// field of view.
    pub fn states_at(&self, index: usize) -> Vec<(usize, EllipseState, bool)> {
        let t = index as f64 / self.frame_rate;
        let origin = self.origin();
        let p = self.pixel_pitch;
        let (x_lo, x_hi) = (-(origin.col + 0.5) * p, (self.width as f64 - 0.5 - origin.col) * p);
        let (y_lo, y_hi) = ((origin.row + 0.5 - self.height as f64) * p, (origin.row + 0.5) * p);
        let top = self.surface_y_mm().unwrap_or(y_hi);
        let m = INSIDE_MARGIN_PX * p;
        self.tracks()
            .iter()
            .enumerate()
            .filter_map(|(id, tr)| {
                let s = tr.state(t)?;
                let (hx, hy) = half_extents(&s);
                let visible = s.x + hx > x_lo && s.x - hx < x_hi && s.y + hy > y_lo && s.y - hy < top;
                let inside = s.x - hx >= x_lo + m && s.x + hx <= x_hi - m && s.y - hy >= y_lo + m && s.y + hy <= top - m;
                visible.then_some((id, s, inside))
            })
            .collect()
    }

    /// Noiseless transmission of frame `index`, row-major.
    pub fn transmission(&self, index: usize) -> Vec<f64> {
        let (w, h, p) = (self.width, self.height, self.pixel_pitch);
        let origin = self.origin();
        let mut chord = vec![0.0; w * h];
        for (_, s, _) in self.states_at(index) {
            let (hx, hy) = half_extents(&s);
            let (c0, r0) = origin.to_pixel(s.x - hx, s.y + hy, p);
            let (c1, r1) = origin.to_pixel(s.x + hx, s.y - hy, p);
            let (sin, cos) = s.theta.sin_cos();
            let cols = (c0.floor().max(0.0) as usize)..=(c1.ceil().min(w as f64 - 1.0) as usize);
            let rows = (r0.floor().max(0.0) as usize)..=(r1.ceil().min(h as f64 - 1.0) as usize);
            for row in rows {
                for col in cols.clone() {
                    let (x, y) = origin.to_mm(col as f64, row as f64, p);
                    let (dx, dy) = (x - s.x, y - s.y);
                    let u = (dx * cos + dy * sin) / s.a;
                    let v = (-dx * sin + dy * cos) / s.b;
                    let q = u * u + v * v;
                    if q < 1.0 {
                        chord[row * w + col] += 2.0 * s.b * (1.0 - q).sqrt();
                    }
                }
            }
        }
        let surface = self.surface_row.unwrap_or(0);
        chord
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if i / w < surface {
                    1.0
                } else {
                    (-self.attenuation * (self.slab_thickness - c.min(self.slab_thickness))).exp()
                }
            })
            .collect()
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let mut states = Vec::new();
        for f in 0..self.frames {
            let t = f as f64 / self.frame_rate;
            for (id, s, inside) in self.states_at(f) {
                states.push(TruthState {
                    frame_index: f,
                    time_s: t,
                    bubble_id: id,
                    x_mm: s.x,
                    y_mm: s.y,
                    a_mm: s.a,
                    b_mm: s.b,
                    theta_rad: s.theta,
                    area_mm2: std::f64::consts::PI * s.a * s.b,
                    aspect: s.a / s.b,
                    vx_mm_s: s.vx,
                    vy_mm_s: s.vy,
                    inside,
                });
            }
        }
        GroundTruth { states }
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Detector counts for expected photon counts `photons` (`None` = dark).
fn expose(spec: &ScenarioSpec, photons: Option<&[f64]>, rng: &mut ChaCha8Rng, hot: bool) -> Result<Vec<u16>> {
    let n = spec.width * spec.height;
    let read = Normal::new(0.0, spec.read_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let shot = match photons {
            Some(l) if l[i] > 0.0 => Poisson::new(l[i])
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng),
            _ => 0.0,
        };
        let v = shot + read.sample(rng) + spec.dark_level;
        out.push(v.round().clamp(0.0, u16::MAX as f64) as u16);
    }
    if hot {
        let level = spec.hot_level.round().clamp(0.0, u16::MAX as f64) as u16;
        for &[c, r] in &spec.hot_pixels {
            out[r * spec.width + c] = level;
        }
    }
    Ok(out)
}

fn stack(spec: &ScenarioSpec, frames: Vec<Vec<u16>>) -> RawStack {
    RawStack {
        width: spec.width,
        height: spec.height,
        frames,
    }
}

/// Renders sample, dark and open-beam frames plus the exact ground truth.
/// Every frame draws from its own random stream derived from `seed`, so the
/// result does not depend on the thread schedule.
pub fn render_sequence(spec: &ScenarioSpec, seed: u64) -> Result<RenderedScene> {
    spec.validate()?;
    let beam: Vec<f64> = (0..spec.height)
        .flat_map(|r| (0..spec.width).map(move |c| (c, r)))
        .map(|(c, r)| spec.beam_at(c, r) * spec.photon_scale)
        .collect();

    let raw = (0..spec.frames)
        .into_par_iter()
        .map(|i| {
            let photons: Vec<f64> = spec.transmission(i).iter().zip(&beam).map(|(t, b)| t * b).collect();
            expose(spec, Some(&photons), &mut rng_for(seed, i as u64), true)
        })
        .collect::<Result<Vec<_>>>()?;
    let darks = (0..spec.dark_frames)
        .into_par_iter()
        .map(|j| expose(spec, None, &mut rng_for(seed, DARK_STREAM + j as u64), false))
        .collect::<Result<Vec<_>>>()?;
    let flats = (0..spec.flat_frames)
        .into_par_iter()
        .map(|j| expose(spec, Some(&beam), &mut rng_for(seed, FLAT_STREAM + j as u64), true))
        .collect::<Result<Vec<_>>>()?;

    Ok(RenderedScene {
        raw: stack(spec, raw),
        darks: stack(spec, darks),
        flats: stack(spec, flats),
        truth: spec.ground_truth(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{median, Frame};
    use crate::imagestack::{build_calibration, normalize, SequenceMeta, DEFAULT_HOT_SIGMA};
    use crate::synth::BubbleTrack;

    fn small(bubbles: Vec<BubbleTrack>) -> ScenarioSpec {
        ScenarioSpec {
            frames: 4,
            width: 96,
            height: 96,
            bubbles,
            ..Default::default()
        }
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
    }

    #[test]
    fn empty_scene_matches_background_statistics() {
        let spec = small(vec![]);
        let scene = render_sequence(&spec, 1).unwrap();
        let expected = spec.photon_scale * 0.25;
        let counts: Vec<f64> = scene.raw.frames[0].iter().map(|&v| v as f64).collect();
        let (m, var) = mean_var(&counts);
        let n = counts.len() as f64;
        let pixel_var = expected + spec.read_noise.powi(2) + 1.0 / 12.0;
        // mean within 4 standard errors, variance within 10%
        assert!((m - expected - spec.dark_level).abs() < 4.0 * (pixel_var / n).sqrt(), "{m}");
        assert!((var / pixel_var - 1.0).abs() < 0.1, "{var} vs {pixel_var}");
        assert!(scene.truth.states.is_empty());
    }

    #[test]
    fn static_bubble_contrast_follows_beer_lambert() {
        let bubble = BubbleTrack {
            x0: 0.0,
            y0: 2.6,
            vy: 0.0,
            a: 1.5,
            b: 1.5,
            ..Default::default()
        };
        let spec = ScenarioSpec {
            frames: 8,
            photon_scale: 20000.0,
            ..small(vec![bubble])
        };
        let scene = render_sequence(&spec, 5).unwrap();
        let meta = SequenceMeta::default();
        let cal = build_calibration(
            &scene.darks.to_frames(&meta).unwrap(),
            &scene.flats.to_frames(&meta).unwrap(),
            DEFAULT_HOT_SIGMA,
        )
        .unwrap();
        let frames: Vec<Frame> = scene.raw.to_frames(&meta).unwrap();
        let origin = spec.origin();
        let (cc, cr) = origin.to_pixel(0.0, 2.6, spec.pixel_pitch);
        let (cc, cr) = (cc.round() as usize, cr.round() as usize);
        let mut centre = Vec::new();
        let mut background = Vec::new();
        for f in &frames {
            let t = normalize(f, &cal).unwrap();
            for dr in 0..3 {
                for dc in 0..3 {
                    centre.push(t.get(cc + dc - 1, cr + dr - 1));
                }
            }
            background.extend((0..96).map(|c| t.get(c, 2)));
        }
        // the 3x3 core sees chords within 0.3% of the diameter
        let chord = 2.0 * 1.5;
        let ratio = mean_var(&centre).0 / median(&background);
        let expected = (spec.attenuation * chord).exp();
        assert!((ratio / expected - 1.0).abs() < 0.02, "{ratio} vs {expected}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = ScenarioSpec {
            hot_pixels: vec![[3, 4]],
            ..small(vec![BubbleTrack {
                y0: 2.0,
                vy: 30.0,
                ..Default::default()
            }])
        };
        let a = render_sequence(&spec, 42).unwrap();
        let b = render_sequence(&spec, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.raw, render_sequence(&spec, 43).unwrap().raw);
        assert_eq!(a.raw.frames[1][4 * 96 + 3], 60000);
        assert_eq!(a.flats.frames[0][4 * 96 + 3], 60000);
        assert_ne!(a.darks.frames[0][4 * 96 + 3], 60000);
    }

    #[test]
    fn overlapping_chords_clamp_to_slab() {
        let fat = BubbleTrack {
            y0: 2.6,
            vy: 0.0,
            a: 2.0,
            b: 2.0,
            ..Default::default()
        };
        let spec = ScenarioSpec {
            slab_thickness: 5.0,
            ..small(vec![fat.clone(), fat])
        };
        let t = spec.transmission(0);
        let (c, r) = spec.origin().to_pixel(0.0, 2.6, spec.pixel_pitch);
        assert_eq!(t[r.round() as usize * 96 + c.round() as usize], 1.0);
    }

    #[test]
    fn surface_band_is_open_beam_and_limits_inside() {
        let spec = ScenarioSpec {
            surface_row: Some(20),
            ..small(vec![BubbleTrack {
                y0: 2.0,
                vy: 50.0,
                ..Default::default()
            }])
        };
        let t = spec.transmission(0);
        assert_eq!(t[19 * 96 + 50], 1.0);
        assert!((t[21 * 96 + 50] - 0.25).abs() < 1e-12);
        let late = ScenarioSpec { frames: 8, ..spec };
        let truth = late.ground_truth();
        // the top reaches the surface margin between frames 1 and 2
        assert!(truth.frame(0)[0].inside);
        assert!(truth.states.iter().filter(|s| s.frame_index >= 5).all(|s| !s.inside));
    }

    #[test]
    fn snr_inversion() {
        let spec = ScenarioSpec::default();
        let p = spec.photon_scale_for_snr(0.99, 3.0);
        let s = ScenarioSpec {
            photon_scale: p,
            ..spec
        };
        assert!((s.peak_snr(0.99) - 3.0).abs() < 1e-9);
    }
}
