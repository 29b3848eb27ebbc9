use serde::{Deserialize, Serialize};

use crate::segment::Detection;

use super::VelocitySample;

/// Pearson coefficient; `None` for fewer than two pairs or a constant column.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub name: String,
    pub n: usize,
    /// Absent when a column is constant or too short.
    pub r: Option<f64>,
}

/// Detections and velocity samples of one experimental case.
#[derive(Debug, Clone, Copy)]
pub struct CaseData<'a> {
    pub flow_rate: f64,
    pub detections: &'a [Detection],
    pub samples: &'a [VelocitySample],
}

/// Pearson table over the declared pairs:
/// detection area vs elevation, aspect vs vertical velocity at the same
/// detection, and detection area vs the case flow rate (pooled over cases).
pub fn correlate_parameters(cases: &[CaseData<'_>]) -> Vec<Correlation> {
    let mut area = Vec::new();
    let mut elevation = Vec::new();
    let mut flow = Vec::new();
    let mut aspect = Vec::new();
    let mut vy = Vec::new();
    for c in cases {
        for d in c.detections {
            area.push(d.area);
            elevation.push(d.y);
            flow.push(c.flow_rate);
        }
        for s in c.samples {
            aspect.push(s.aspect);
            vy.push(s.vy);
        }
    }
    let row = |name: &str, xs: &[f64], ys: &[f64]| Correlation {
        name: name.to_string(),
        n: xs.len(),
        r: pearson(xs, ys),
    };
    vec![
        row("area_vs_elevation", &area, &elevation),
        row("aspect_vs_vy", &aspect, &vy),
        row("area_vs_flow_rate", &area, &flow),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v + 3.0).collect();
        assert!((pearson(&x, &z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_noise_is_weakly_correlated() {
        // sd of r is about 1/sqrt(n) = 0.032 for n = 1000
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(pearson(&x, &y).unwrap().abs() < 0.1);
    }

    #[test]
    fn constant_column_is_undefined() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]), None);
        assert_eq!(pearson(&[1.0], &[2.0]), None);
    }

    #[test]
    fn single_case_flow_rate_is_undefined() {
        use crate::segment::Quality;
        let dets: Vec<Detection> = (0..5)
            .map(|i| Detection {
                frame_index: i,
                time: 0.0,
                x: 0.0,
                y: i as f64,
                a: 1.0,
                b: 1.0,
                theta: 0.0,
                area: 1.0 + i as f64,
                aspect: 1.0,
                quality: Quality::Ok,
            })
            .collect();
        let table = correlate_parameters(&[CaseData {
            flow_rate: 50.0,
            detections: &dets,
            samples: &[],
        }]);
        assert_eq!(table[0].name, "area_vs_elevation");
        assert!((table[0].r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(table[1].r, None);
        assert_eq!(table[2].r, None);
        assert_eq!(table[2].n, 5);
    }
}
