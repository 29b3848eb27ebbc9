//! Connected-component labelling.

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[
                (1, 0),
                (-1, 0),
                (0, 1),
                (0, -1),
                (1, 1),
                (1, -1),
                (-1, 1),
                (-1, -1),
            ],
        }
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
}

impl BoundingBox {
    pub fn width(&self) -> usize {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> usize {
        self.max_y - self.min_y + 1
    }
}

/// One labelled region. Pixels are listed in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// 1-based label as stored in the label grid.
    pub label: u32,
    pub pixels: Vec<(usize, usize)>,
    pub bbox: BoundingBox,
    pub touches_border: bool,
}

impl Component {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    /// Builds a component from an arbitrary pixel list (raster-sorted).
    pub fn from_pixels(mut pixels: Vec<(usize, usize)>, frame_w: usize, frame_h: usize) -> Self {
        assert!(!pixels.is_empty(), "component needs at least one pixel");
        pixels.sort_by_key(|&(x, y)| (y, x));
        let mut bbox = BoundingBox {
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
        };
        for &(x, y) in &pixels {
            bbox.min_x = bbox.min_x.min(x);
            bbox.min_y = bbox.min_y.min(y);
            bbox.max_x = bbox.max_x.max(x);
            bbox.max_y = bbox.max_y.max(y);
        }
        let touches_border = bbox.min_x == 0
            || bbox.min_y == 0
            || bbox.max_x + 1 >= frame_w
            || bbox.max_y + 1 >= frame_h;
        Component {
            label: 1,
            pixels,
            bbox,
            touches_border,
        }
    }
}

/// Labels set pixels; returns the label grid (0 = background) and the
/// components in order of their first pixel in raster order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, Vec<Component>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = comps.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x, y));
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }
        let mut c = Component::from_pixels(pixels, w, h);
        c.label = label;
        comps.push(c);
    }
    (labels, comps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_has_no_components() {
        let (labels, comps) = connected_components(&BinaryMask::new(5, 5), Connectivity::Eight);
        assert!(comps.is_empty());
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_disks_counted_like_the_rasteriser() {
        let inside = |x: usize, y: usize, cx: f64, cy: f64, r: f64| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= r * r
        };
        let m = BinaryMask::from_fn(60, 40, |x, y| {
            inside(x, y, 15.0, 20.0, 8.0) || inside(x, y, 44.0, 20.0, 6.5)
        });
        // independent count of lattice points in each disk
        let count = |cx: f64, cy: f64, r: f64| {
            (0..60)
                .flat_map(|x| (0..40).map(move |y| (x, y)))
                .filter(|&(x, y)| inside(x, y, cx, cy, r))
                .count()
        };
        let (_, comps) = connected_components(&m, Connectivity::Four);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].pixel_count(), count(15.0, 20.0, 8.0));
        assert_eq!(comps[1].pixel_count(), count(44.0, 20.0, 6.5));
        // both areas are close to pi r^2
        assert!((comps[0].pixel_count() as f64 - std::f64::consts::PI * 64.0).abs() < 10.0);
        assert!(!comps[0].touches_border);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = BinaryMask::from_fn(4, 4, |x, y| (x, y) == (1, 1) || (x, y) == (2, 2));
        assert_eq!(connected_components(&m, Connectivity::Four).1.len(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).1.len(), 1);
    }

    #[test]
    fn border_flag_and_bbox() {
        let m = BinaryMask::from_fn(6, 6, |x, y| x >= 4 && (1..3).contains(&y));
        let (labels, comps) = connected_components(&m, Connectivity::Eight);
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert!(c.touches_border);
        assert_eq!(
            c.bbox,
            BoundingBox {
                min_x: 4,
                min_y: 1,
                max_x: 5,
                max_y: 2
            }
        );
        assert_eq!(labels[6 + 4], 1);
    }
}
