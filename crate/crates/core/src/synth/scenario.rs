use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::frame::{DEFAULT_FRAME_RATE, DEFAULT_PIXEL_PITCH_MM};
use crate::segment::Origin;

/// Attenuation giving 25% transmission through 20 mm of melt (1/mm).
pub const DEFAULT_ATTENUATION: f64 = std::f64::consts::LN_2 / 10.0;

/// Exact ellipse state of one bubble at one instant. Lengths in mm,
/// velocities in mm/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseState {
    pub x: f64,
    pub y: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
}

/// Parametric bubble path:
/// `x = x0 + vx*s + amp_x*sin(2 pi freq_x s + phase_x)`,
/// `y = y0 + vy*s + accel*s^2/2` with `s = t - birth_time`.
/// Semi-axes breathe in antiphase with relative amplitude `shape_amp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleTrack {
    pub birth_time: f64,
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    pub accel: f64,
    pub amp_x: f64,
    pub freq_x: f64,
    pub phase_x: f64,
    pub a: f64,
    pub b: f64,
    pub shape_amp: f64,
    pub shape_freq: f64,
    pub theta0: f64,
    pub theta_amp: f64,
    pub theta_freq: f64,
}

impl Default for BubbleTrack {
    fn default() -> Self {
        BubbleTrack {
            birth_time: 0.0,
            x0: 0.0,
            y0: 3.0,
            vx: 0.0,
            vy: 120.0,
            accel: 0.0,
            amp_x: 0.0,
            freq_x: 0.0,
            phase_x: 0.0,
            a: 1.3,
            b: 1.0,
            shape_amp: 0.0,
            shape_freq: 0.0,
            theta0: 0.0,
            theta_amp: 0.0,
            theta_freq: 0.0,
        }
    }
}

impl BubbleTrack {
    pub fn state(&self, t: f64) -> Option<EllipseState> {
        let s = t - self.birth_time;
        if s < 0.0 {
            return None;
        }
        let wx = TAU * self.freq_x;
        let ph = wx * s + self.phase_x;
        let breathe = self.shape_amp * (TAU * self.shape_freq * s).sin();
        Some(EllipseState {
            x: self.x0 + self.vx * s + self.amp_x * ph.sin(),
            y: self.y0 + self.vy * s + 0.5 * self.accel * s * s,
            a: self.a * (1.0 + breathe),
            b: self.b * (1.0 - breathe),
            theta: self.theta0 + self.theta_amp * (TAU * self.theta_freq * s).sin(),
            vx: self.vx + self.amp_x * wx * ph.cos(),
            vy: self.vy + self.accel * s,
        })
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("bubble {index}: {m}")));
        if !(self.b > 0.0) || !(self.a >= self.b) {
            return bad(format!("needs a >= b > 0, got a={} b={}", self.a, self.b));
        }
        if !(0.0..1.0).contains(&self.shape_amp) || self.a * (1.0 - self.shape_amp) < self.b * (1.0 + self.shape_amp) {
            return bad("shape oscillation lets b exceed a".into());
        }
        Ok(())
    }
}

/// A stream of similar bubbles released one after another with random
/// lateral offsets; the layout is fixed by `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSpec {
    pub count: usize,
    pub first_birth: f64,
    /// Seconds between releases.
    pub interval: f64,
    pub x_center: f64,
    /// Half-width of the uniform lateral release offset (mm).
    pub x_spread: f64,
    pub y_birth: f64,
    pub vy: f64,
    pub accel: f64,
    /// Lateral zig-zag amplitude (mm) and frequency (Hz); phases are random.
    pub amp_x: f64,
    pub freq_x: f64,
    pub a: f64,
    pub b: f64,
    /// Relative uniform jitter applied to both semi-axes per bubble.
    pub size_jitter: f64,
    pub shape_amp: f64,
    pub shape_freq: f64,
    pub theta_amp: f64,
    pub theta_freq: f64,
    pub seed: u64,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        ColumnSpec {
            count: 0,
            first_birth: 0.0,
            interval: 0.05,
            x_center: 0.0,
            x_spread: 0.0,
            y_birth: 3.0,
            vy: 120.0,
            accel: 0.0,
            amp_x: 0.0,
            freq_x: 0.0,
            a: 1.3,
            b: 1.0,
            size_jitter: 0.0,
            shape_amp: 0.0,
            shape_freq: 0.0,
            theta_amp: 0.0,
            theta_freq: 0.0,
            seed: 0,
        }
    }
}

impl ColumnSpec {
    /// Wide zig-zagging plume: about 10 mm of total lateral spread.
    pub fn field_off() -> Self {
        ColumnSpec {
            x_spread: 3.0,
            amp_x: 2.0,
            freq_x: 4.0,
            vy: 120.0,
            accel: 0.0,
            ..Default::default()
        }
    }

    /// Narrow plume (about 2 mm spread) that accelerates with height.
    pub fn field_on() -> Self {
        ColumnSpec {
            x_spread: 0.6,
            amp_x: 0.4,
            freq_x: 4.0,
            vy: 120.0,
            accel: 200.0,
            ..Default::default()
        }
    }

    pub fn tracks(&self) -> Vec<BubbleTrack> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count)
            .map(|i| {
                let offset = if self.x_spread > 0.0 {
                    rng.random_range(-self.x_spread..=self.x_spread)
                } else {
                    0.0
                };
                let phase = rng.random_range(0.0..TAU);
                let scale = if self.size_jitter > 0.0 {
                    1.0 + rng.random_range(-self.size_jitter..=self.size_jitter)
                } else {
                    1.0
                };
                let theta_phase = rng.random_range(0.0..TAU);
                BubbleTrack {
                    birth_time: self.first_birth + i as f64 * self.interval,
                    // start the zig-zag from the release point
                    x0: self.x_center + offset - self.amp_x * phase.sin(),
                    y0: self.y_birth,
                    vx: 0.0,
                    vy: self.vy,
                    accel: self.accel,
                    amp_x: self.amp_x,
                    freq_x: self.freq_x,
                    phase_x: phase,
                    a: self.a * scale,
                    b: self.b * scale,
                    shape_amp: self.shape_amp,
                    shape_freq: self.shape_freq,
                    theta0: 0.0,
                    theta_amp: self.theta_amp,
                    theta_freq: self.theta_freq * (0.8 + 0.4 * theta_phase / TAU),
                }
            })
            .collect()
    }
}

/// Declarative synthetic radiography scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub frame_rate: f64,
    pub slab_thickness: f64,
    /// Linear attenuation coefficient of the melt (1/mm).
    pub attenuation: f64,
    /// Beam profile `c0 + cx*u + cy*v + cxx*u^2 + cxy*u*v + cyy*v^2` with
    /// `u, v` in [-1, 1] across the frame.
    pub beam: [f64; 6],
    /// Expected open-beam counts per pixel where the beam profile is 1.
    pub photon_scale: f64,
    pub dark_level: f64,
    pub read_noise: f64,
    pub dark_frames: usize,
    pub flat_frames: usize,
    /// Pixels `[col, row]` stuck at `hot_level` in sample and open-beam frames.
    pub hot_pixels: Vec<[usize; 2]>,
    pub hot_level: f64,
    /// Rows above this one hold no melt.
    pub surface_row: Option<usize>,
    pub bubbles: Vec<BubbleTrack>,
    pub column: Option<ColumnSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            frames: 100,
            width: 256,
            height: 256,
            pixel_pitch: DEFAULT_PIXEL_PITCH_MM,
            frame_rate: DEFAULT_FRAME_RATE,
            slab_thickness: 20.0,
            attenuation: DEFAULT_ATTENUATION,
            beam: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            photon_scale: 2000.0,
            dark_level: 100.0,
            read_noise: 3.0,
            dark_frames: 16,
            flat_frames: 16,
            hot_pixels: Vec::new(),
            hot_level: 60000.0,
            surface_row: None,
            bubbles: Vec::new(),
            column: None,
        }
    }
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<ScenarioSpec> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn origin(&self) -> Origin {
        Origin::bottom_centre(self.width, self.height)
    }

    /// Explicit bubbles followed by the generated column.
    pub fn tracks(&self) -> Vec<BubbleTrack> {
        let mut all = self.bubbles.clone();
        if let Some(c) = &self.column {
            all.extend(c.tracks());
        }
        all
    }

    /// Open-beam expectation at pixel `(col, row)` relative to `photon_scale`.
    pub fn beam_at(&self, col: usize, row: usize) -> f64 {
        let u = if self.width > 1 { 2.0 * col as f64 / (self.width - 1) as f64 - 1.0 } else { 0.0 };
        let v = if self.height > 1 { 2.0 * row as f64 / (self.height - 1) as f64 - 1.0 } else { 0.0 };
        let c = &self.beam;
        c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v
    }

    /// Background transmission through the full slab.
    pub fn background_transmission(&self) -> f64 {
        (-self.attenuation * self.slab_thickness).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("ScenarioSpec.{m}")));
        if self.width < 2 || self.height < 2 {
            return bad("width and height must be >= 2");
        }
        if !(self.pixel_pitch > 0.0) || !(self.frame_rate > 0.0) {
            return bad("pixel_pitch and frame_rate must be > 0");
        }
        if !(self.slab_thickness > 0.0) || !(self.attenuation >= 0.0) {
            return bad("slab_thickness must be > 0 and attenuation >= 0");
        }
        if !(self.photon_scale > 0.0) || !(self.read_noise >= 0.0) || !(self.dark_level >= 0.0) {
            return bad("photon_scale must be > 0, read_noise and dark_level >= 0");
        }
        if self.dark_frames == 0 || self.flat_frames == 0 {
            return bad("dark_frames and flat_frames must be >= 1");
        }
        for (i, j) in [(0, 0), (self.width - 1, 0), (0, self.height - 1), (self.width - 1, self.height - 1)] {
            if !(self.beam_at(i, j) > 0.0) {
                return bad("beam must be positive over the frame");
            }
        }
        if let Some(&[c, r]) = self.hot_pixels.iter().find(|p| p[0] >= self.width || p[1] >= self.height) {
            return Err(Error::InvalidParameter(format!("hot pixel ({c}, {r}) outside the frame")));
        }
        let origin = self.origin();
        let (half_w, top) = (origin.col * self.pixel_pitch, origin.row * self.pixel_pitch);
        for (i, t) in self.tracks().iter().enumerate() {
            t.validate(i)?;
            let s = t.state(t.birth_time).expect("state exists at birth");
            let (hx, hy) = half_extents(&s);
            if s.x - hx < -half_w || s.x + hx > half_w || s.y - hy < 0.0 || s.y + hy > top {
                return Err(Error::InvalidParameter(format!(
                    "bubble {i} is not inside the field of view at birth"
                )));
            }
        }
        Ok(())
    }
}

/// Half-widths of the bounding box of a rotated ellipse.
pub fn half_extents(s: &EllipseState) -> (f64, f64) {
    let (sin, cos) = s.theta.sin_cos();
    (
        ((s.a * cos).powi(2) + (s.b * sin).powi(2)).sqrt(),
        ((s.a * sin).powi(2) + (s.b * cos).powi(2)).sqrt(),
    )
}
