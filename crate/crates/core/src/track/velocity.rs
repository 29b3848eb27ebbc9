use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub trajectory: usize,
    pub frame_index: usize,
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub area: f64,
    pub aspect: f64,
}

/// Finite-difference velocities (mm/s) at every detection of a trajectory:
/// central differences inside, one-sided at both ends. Time steps come from
/// frame indices, so skipped frames widen the denominator. Trajectories
/// shorter than three detections yield nothing.
pub fn compute_velocities(traj: &Trajectory, frame_rate: f64) -> Vec<VelocitySample> {
    let d = &traj.detections;
    let n = d.len();
    if n < 3 {
        return Vec::new();
    }
    let t = |i: usize| d[i].frame_index as f64 / frame_rate;
    (0..n)
        .map(|i| {
            let (lo, hi) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            let dt = t(hi) - t(lo);
            VelocitySample {
                trajectory: traj.id,
                frame_index: d[i].frame_index,
                time: t(i),
                x: d[i].x,
                y: d[i].y,
                vx: (d[hi].x - d[lo].x) / dt,
                vy: (d[hi].y - d[lo].y) / dt,
                area: d[i].area,
                aspect: d[i].aspect,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub y_low: f64,
    pub y_high: f64,
    pub n: usize,
    pub vx_mean: Option<f64>,
    pub vx_err: Option<f64>,
    pub vy_mean: Option<f64>,
    pub vy_err: Option<f64>,
}

impl ProfileBin {
    pub fn y_mid(&self) -> f64 {
        0.5 * (self.y_low + self.y_high)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Elevation-binned velocity means. Bin edges sit on multiples of the bin
/// height and cover the sample range contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityProfile {
    pub bin_height: f64,
    pub bins: Vec<ProfileBin>,
}

/// Index of the bin holding elevation `y` when edges are multiples of `h`.
pub fn bin_index(y: f64, h: f64) -> i64 {
    (y / h).floor() as i64
}

/// Mean and standard error of the mean (sample standard deviation over
/// sqrt(n)); the error needs two values.
pub fn mean_and_sem(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

pub fn bin_velocity_profile(samples: &[VelocitySample], bin_height: f64) -> Result<VelocityProfile> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("velocity samples"));
    }
    if !(bin_height > 0.0) {
        return Err(Error::InvalidParameter(format!("bin_height must be > 0, got {bin_height}")));
    }
    let first = samples.iter().map(|s| bin_index(s.y, bin_height)).min().expect("non-empty");
    let last = samples.iter().map(|s| bin_index(s.y, bin_height)).max().expect("non-empty");
    let count = (last - first + 1) as usize;
    let mut vx = vec![Vec::new(); count];
    let mut vy = vec![Vec::new(); count];
    for s in samples {
        let k = (bin_index(s.y, bin_height) - first) as usize;
        vx[k].push(s.vx);
        vy[k].push(s.vy);
    }
    let bins = (0..count)
        .map(|k| {
            let (vx_mean, vx_err) = mean_and_sem(&vx[k]);
            let (vy_mean, vy_err) = mean_and_sem(&vy[k]);
            let y_low = (first + k as i64) as f64 * bin_height;
            ProfileBin {
                y_low,
                y_high: y_low + bin_height,
                n: vx[k].len(),
                vx_mean,
                vx_err,
                vy_mean,
                vy_err,
            }
        })
        .collect();
    Ok(VelocityProfile { bin_height, bins })
}
