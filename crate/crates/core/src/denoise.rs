//! Curvature flow filtering and Gaussian smoothing.
//!
//! The curvature flow filter evolves the intensity field under
//!
//! ```text
//! dI/dt = |grad I| * div( c * grad I / |grad I| ),   c = exp(-|grad I|^2 / k^2)
//! ```
//!
//! with an explicit finite-difference scheme: fluxes live on the half-pixel
//! faces between neighbours, the |grad I| prefactor is evaluated at pixel
//! centres, and the boundary is reflective (zero flux through the frame edge).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// Stability ceiling of the explicit scheme for unit pixel spacing.
pub const DT_STABLE: f64 = 0.25;

/// Parameters of the curvature flow filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CffParams {
    /// Gradient scale of the control function, intensity units per pixel.
    pub k: f64,
    /// Total virtual diffusion time.
    pub tau: f64,
    /// Explicit time step.
    pub dt: f64,
    /// Regulariser of |grad I|.
    pub epsilon: f64,
}

impl CffParams {
    pub const DEFAULT_TAU: f64 = 10.0;
    pub const DEFAULT_DT: f64 = 0.2;
    /// Percentile of |grad I| used for the default `k`.
    pub const K_PERCENTILE: f64 = 60.0;
    /// Default epsilon as a fraction of the frame's intensity range.
    pub const EPSILON_FRACTION: f64 = 1e-4;

    /// Default parameters adapted to a sample frame: `k` is the 60th
    /// percentile of the gradient magnitude, epsilon scales with the range.
    pub fn for_frame(sample: &Frame) -> CffParams {
        CffParams {
            // flat regions give a zero percentile; keep k positive and tiny
            k: gradient_percentile(sample, Self::K_PERCENTILE).max(default_epsilon(sample)),
            tau: Self::DEFAULT_TAU,
            dt: Self::DEFAULT_DT,
            epsilon: default_epsilon(sample),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.k > 0.0) {
            return bad("CffParams.k must be > 0");
        }
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad("CffParams.tau must be >= 0");
        }
        if !(self.dt > 0.0 && self.dt <= DT_STABLE) {
            return bad("CffParams.dt must be in (0, 0.25]");
        }
        if !(self.epsilon > 0.0) {
            return bad("CffParams.epsilon must be > 0");
        }
        Ok(())
    }

    /// Number of explicit steps and the uniform step length covering `tau`.
    pub fn schedule(&self) -> (usize, f64) {
        if self.tau == 0.0 {
            return (0, 0.0);
        }
        let steps = (self.tau / self.dt - 1e-9).ceil().max(1.0) as usize;
        (steps, self.tau / steps as f64)
    }
}

/// Control function applied on each face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conductance {
    /// `exp(-|grad I|^2 / k^2)`.
    #[default]
    Exponential,
    /// `c = 1`: pure mean-curvature motion of the level sets.
    Unit,
}

/// `1e-4 * (max - min)` of the frame, floored away from zero.
pub fn default_epsilon(frame: &Frame) -> f64 {
    let (lo, hi) = frame.min_max();
    let range = hi - lo;
    if range > 0.0 && range.is_finite() {
        CffParams::EPSILON_FRACTION * range
    } else {
        1e-12
    }
}

/// Central differences in the interior, one-sided differences on the border
/// rows/columns. Returns `(d/dx, d/dy)` with `y` increasing downwards.
pub fn gradient(frame: &Frame) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (frame.width, frame.height);
    let p = &frame.pixels;
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    if w >= 2 {
        for y in 0..h {
            let row = &p[y * w..(y + 1) * w];
            let out = &mut gx[y * w..(y + 1) * w];
            out[0] = row[1] - row[0];
            for x in 1..w - 1 {
                out[x] = 0.5 * (row[x + 1] - row[x - 1]);
            }
            out[w - 1] = row[w - 1] - row[w - 2];
        }
    }
    if h >= 2 {
        for x in 0..w {
            gy[x] = p[w + x] - p[x];
            gy[(h - 1) * w + x] = p[(h - 1) * w + x] - p[(h - 2) * w + x];
        }
        for y in 1..h - 1 {
            for x in 0..w {
                gy[y * w + x] = 0.5 * (p[(y + 1) * w + x] - p[(y - 1) * w + x]);
            }
        }
    }
    (gx, gy)
}

/// Percentile (0..=100, nearest rank) of the gradient magnitude.
pub fn gradient_percentile(frame: &Frame, percentile: f64) -> f64 {
    let (gx, gy) = gradient(frame);
    let mut mags: Vec<f64> = gx
        .iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect();
    if mags.is_empty() {
        return 0.0;
    }
    let last = mags.len() - 1;
    let rank = ((percentile / 100.0) * last as f64).round() as usize;
    let (_, v, _) = mags.select_nth_unstable_by(rank.min(last), |a, b| a.total_cmp(b));
    *v
}

/// Curvature flow filter with the exponential control function.
pub fn curvature_flow_filter(frame: &Frame, params: &CffParams) -> Result<Frame> {
    curvature_flow_filter_with(frame, params, Conductance::Exponential)
}

/// Curvature flow filter with an explicit choice of control function.
///
/// Each step updates `I += dt * G_c * sum_faces(c_f * dI_f / G_f)` where
/// `G_f` is the regularised gradient magnitude on the face and `G_c` the one
/// at the pixel centre. The update is then limited to the range spanned by
/// the pixel and its four neighbours, so no step can create new extrema.
pub fn curvature_flow_filter_with(
    frame: &Frame,
    params: &CffParams,
    conductance: Conductance,
) -> Result<Frame> {
    params.validate()?;
    if !frame.is_finite() {
        return Err(Error::InvalidParameter(
            "curvature flow input contains non-finite pixels".into(),
        ));
    }
    let (w, h) = (frame.width, frame.height);
    let (steps, dt) = params.schedule();
    if steps == 0 || w < 2 || h < 2 {
        return Ok(frame.clone());
    }

    let stepper = Stepper {
        w,
        h,
        dt,
        eps2: params.epsilon * params.epsilon,
        inv_k2: match conductance {
            Conductance::Exponential => 1.0 / (params.k * params.k),
            Conductance::Unit => 0.0,
        },
    };
    let mut cur = frame.pixels.clone();
    let mut next = vec![0.0; w * h];
    let mut rows = RowScratch::new(w);
    for step in 0..steps {
        if !stepper.run(&cur, &mut next, &mut rows) {
            return Err(Error::Unstable { step });
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(frame.with_pixels(cur))
}

/// One explicit step over the whole grid, streamed row by row.
struct Stepper {
    w: usize,
    h: usize,
    dt: f64,
    eps2: f64,
    /// `1/k^2`; zero turns the control function into `c = 1`.
    inv_k2: f64,
}

impl Stepper {
    /// Returns false if any output pixel is non-finite.
    fn run(&self, cur: &[f64], next: &mut [f64], rows: &mut RowScratch) -> bool {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the required CPU feature was detected at runtime.
                return unsafe { self.run_avx2(cur, next, rows) };
            }
        }
        self.run_generic(cur, next, rows)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_avx2(&self, cur: &[f64], next: &mut [f64], rows: &mut RowScratch) -> bool {
        self.run_generic(cur, next, rows)
    }

    #[inline(always)]
    fn run_generic(&self, cur: &[f64], next: &mut [f64], rows: &mut RowScratch) -> bool {
        let (w, h) = (self.w, self.h);
        let mut finite = true;
        for y in 0..h {
            let row = &cur[y * w..(y + 1) * w];
            let above = if y > 0 { &cur[(y - 1) * w..y * w] } else { row };
            if y == 0 {
                cx_row(row, &mut rows.cx);
                diff_rows(row, &cur[w..2 * w], 1.0, &mut rows.cy);
                rows.qy_up.fill(0.0);
            }
            let below = if y + 1 < h {
                let below = &cur[(y + 1) * w..(y + 2) * w];
                cx_row(below, &mut rows.cx_next);
                if y + 2 < h {
                    diff_rows(row, &cur[(y + 2) * w..(y + 3) * w], 0.5, &mut rows.cy_next);
                } else {
                    diff_rows(row, below, 1.0, &mut rows.cy_next);
                }
                self.face_fluxes(row, below, &rows.cx, &rows.cx_next, &mut rows.qy_down);
                below
            } else {
                rows.qy_down.fill(0.0);
                row
            };
            // qx[x + 1] is the flux through the right face of x; both ends stay zero
            self.face_fluxes(
                &row[..w - 1],
                &row[1..],
                &rows.cy[..w - 1],
                &rows.cy[1..],
                &mut rows.qx[1..w],
            );
            let out = &mut next[y * w..(y + 1) * w];
            finite &= self.update_row(row, above, below, rows, out);

            std::mem::swap(&mut rows.cx, &mut rows.cx_next);
            std::mem::swap(&mut rows.cy, &mut rows.cy_next);
            std::mem::swap(&mut rows.qy_up, &mut rows.qy_down);
        }
        finite
    }

    /// `c(g) * d / sqrt(g^2 + eps^2)` for faces with normal difference `b - a`
    /// and transverse component averaged from `ta`, `tb`.
    #[inline(always)]
    fn face_fluxes(&self, a: &[f64], b: &[f64], ta: &[f64], tb: &[f64], out: &mut [f64]) {
        let n = out.len();
        let (a, b, ta, tb) = (&a[..n], &b[..n], &ta[..n], &tb[..n]);
        for i in 0..n {
            let d = b[i] - a[i];
            let t = 0.5 * (ta[i] + tb[i]);
            let g2 = d * d + t * t;
            out[i] = exp_neg(-g2 * self.inv_k2) * d / (g2 + self.eps2).sqrt();
        }
    }

    #[inline(always)]
    fn update_row(
        &self,
        row: &[f64],
        above: &[f64],
        below: &[f64],
        rows: &RowScratch,
        out: &mut [f64],
    ) -> bool {
        let w = row.len();
        let pixel = |x: usize, left: f64, right: f64| {
            let v = row[x];
            let lo = v.min(left).min(right).min(above[x]).min(below[x]);
            let hi = v.max(left).max(right).max(above[x]).max(below[x]);
            let g_c = (rows.cx[x] * rows.cx[x] + rows.cy[x] * rows.cy[x] + self.eps2).sqrt();
            let div = (rows.qx[x + 1] - rows.qx[x]) + (rows.qy_down[x] - rows.qy_up[x]);
            (v + self.dt * g_c * div).clamp(lo, hi)
        };
        out[0] = pixel(0, row[0], row[1]);
        out[w - 1] = pixel(w - 1, row[w - 2], row[w - 1]);

        let n = w - 2;
        let (v, left, right) = (&row[1..=n], &row[..n], &row[2..n + 2]);
        let (up, down) = (&above[1..=n], &below[1..=n]);
        let (cx, cy) = (&rows.cx[1..=n], &rows.cy[1..=n]);
        let (q_right, q_left) = (&rows.qx[2..n + 2], &rows.qx[1..=n]);
        let (q_down, q_up) = (&rows.qy_down[1..=n], &rows.qy_up[1..=n]);
        let dst = &mut out[1..=n];
        let mut finite = true;
        for i in 0..n {
            let lo = v[i].min(left[i]).min(right[i]).min(up[i]).min(down[i]);
            let hi = v[i].max(left[i]).max(right[i]).max(up[i]).max(down[i]);
            let g_c = (cx[i] * cx[i] + cy[i] * cy[i] + self.eps2).sqrt();
            let div = (q_right[i] - q_left[i]) + (q_down[i] - q_up[i]);
            let nv = (v[i] + self.dt * g_c * div).max(lo).min(hi);
            finite &= nv.is_finite();
            dst[i] = nv;
        }
        finite && out[0].is_finite() && out[w - 1].is_finite()
    }
}

struct RowScratch {
    cx: Vec<f64>,
    cy: Vec<f64>,
    cx_next: Vec<f64>,
    cy_next: Vec<f64>,
    qx: Vec<f64>,
    qy_up: Vec<f64>,
    qy_down: Vec<f64>,
}

impl RowScratch {
    fn new(w: usize) -> Self {
        RowScratch {
            cx: vec![0.0; w],
            cy: vec![0.0; w],
            cx_next: vec![0.0; w],
            cy_next: vec![0.0; w],
            qx: vec![0.0; w + 1],
            qy_up: vec![0.0; w],
            qy_down: vec![0.0; w],
        }
    }
}

/// Horizontal derivative of one row, same stencil as [`gradient`].
#[inline(always)]
fn cx_row(row: &[f64], out: &mut [f64]) {
    let w = row.len();
    out[0] = row[1] - row[0];
    let n = w - 2;
    let (l, r, o) = (&row[..n], &row[2..n + 2], &mut out[1..=n]);
    for i in 0..n {
        o[i] = 0.5 * (r[i] - l[i]);
    }
    out[w - 1] = row[w - 1] - row[w - 2];
}

/// `scale * (below - above)` elementwise.
#[inline(always)]
fn diff_rows(above: &[f64], below: &[f64], scale: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(above).zip(below) {
        *o = scale * (b - a);
    }
}

/// `exp(x)` for `x <= 0`, branch-free so it vectorises. Relative error
/// below 1e-13; underflows to zero below -700.
#[inline(always)]
pub(crate) fn exp_neg(x: f64) -> f64 {
    const SHIFTER: f64 = 6755399441055744.0; // 1.5 * 2^52
    let x = x.max(-700.0);
    let t = x * std::f64::consts::LOG2_E + SHIFTER;
    let n = t - SHIFTER;
    let r = x - n * std::f64::consts::LN_2;
    let mut p = 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    if x <= -700.0 {
        0.0
    } else {
        p * scale
    }
}

/// Sampled, normalised Gaussian kernel truncated at 4 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Half-sample symmetric reflection of `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with reflective borders. `sigma = 0` is the identity.
pub fn gaussian_blur(frame: &Frame, sigma: f64) -> Result<Frame> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter("blur sigma must be >= 0".into()));
    }
    if sigma == 0.0 || frame.is_empty() {
        return Ok(frame.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (frame.width, frame.height);
    let src = &frame.pixels;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as isize + j as isize - radius, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    let rows: Vec<Vec<usize>> = (0..h)
        .map(|y| {
            (0..kernel.len())
                .map(|j| reflect(y as isize + j as isize - radius, h))
                .collect()
        })
        .collect();
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (kv, &sy) in kernel.iter().zip(&rows[y]) {
            let srow = &tmp[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(srow) {
                *d += kv * s;
            }
        }
    }
    Ok(frame.with_pixels(out))
}
