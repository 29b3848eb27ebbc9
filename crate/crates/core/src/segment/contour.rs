//! Moore-neighbour boundary tracing.

use super::{BinaryMask, Component};

/// Neighbour offsets in clockwise screen order (rows grow downwards).
const MOORE: [(isize, isize); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Closed boundary of a component as pixel coordinates `(col, row)`.
/// The closing point is implicit: the last point neighbours the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
    /// Set for single-pixel components, whose contour is one point.
    pub degenerate: bool,
}

impl Contour {
    /// True when no boundary pixel is visited twice.
    pub fn is_simple(&self) -> bool {
        let mut seen = self.points.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }

    /// Polygon length through pixel centres, closing segment included.
    pub fn length(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                let (dx, dy) = (x1 as f64 - x0 as f64, y1 as f64 - y0 as f64);
                dx.hypot(dy)
            })
            .sum()
    }

    /// Shoelace area with the row axis pointing up; positive for
    /// counterclockwise traversal.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        let mut s = 0.0;
        for i in 0..n {
            let (x0, y0) = self.points[i];
            let (x1, y1) = self.points[(i + 1) % n];
            s += x0 as f64 * -(y1 as f64) - x1 as f64 * -(y0 as f64);
        }
        s / 2.0
    }

    /// Consecutive points (including the closure) are 8-neighbours.
    pub fn is_eight_connected(&self) -> bool {
        let n = self.points.len();
        n == 1
            || (0..n).all(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                let (dx, dy) = (x0.abs_diff(x1), y0.abs_diff(y1));
                dx <= 1 && dy <= 1 && dx + dy > 0
            })
    }
}

/// Traces the outer boundary of `component` counterclockwise as seen on
/// screen, starting from its first pixel in raster order.
pub fn trace_contour(component: &Component) -> Contour {
    let bb = component.bbox;
    // local mask with a one-pixel background margin
    let (w, h) = (bb.width() + 2, bb.height() + 2);
    let mut mask = BinaryMask::new(w, h);
    for &(x, y) in &component.pixels {
        mask.set(x - bb.min_x + 1, y - bb.min_y + 1, true);
    }
    let to_global = |(x, y): (isize, isize)| (x as usize + bb.min_x - 1, y as usize + bb.min_y - 1);

    let &(sx, sy) = component
        .pixels
        .iter()
        .min_by_key(|&&(x, y)| (y, x))
        .expect("component has at least one pixel");
    let start = ((sx - bb.min_x + 1) as isize, (sy - bb.min_y + 1) as isize);
    // west of the raster-first pixel is always background
    let start_back = 4usize;

    let mut points = vec![to_global(start)];
    let (mut cur, mut back) = (start, start_back);
    let limit = 4 * component.pixels.len() + 8;
    for _ in 0..limit {
        let mut next = None;
        for k in 1..=8 {
            let d = (back + k) % 8;
            let p = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
            if mask.get_signed(p.0, p.1) {
                // the previously probed neighbour is background; re-express it from p
                let prev = (back + k - 1) % 8;
                let q = (cur.0 + MOORE[prev].0, cur.1 + MOORE[prev].1);
                let nb = MOORE
                    .iter()
                    .position(|&(dx, dy)| (p.0 + dx, p.1 + dy) == q)
                    .expect("probe neighbours are adjacent");
                next = Some((p, nb));
                break;
            }
        }
        let Some((p, nb)) = next else {
            return Contour {
                points,
                degenerate: true,
            };
        };
        if p == start && nb == start_back {
            break;
        }
        if p == start && points.len() > 1 && is_closing(&mask, start, nb, start_back) {
            break;
        }
        points.push(to_global(p));
        cur = p;
        back = nb;
    }
    // clockwise on screen so far; reverse keeping the start point first
    points[1..].reverse();
    Contour {
        points,
        degenerate: false,
    }
}

/// Re-entering the start pixel closes the curve when the scan from the new
/// backtrack would next reach the same neighbour as the initial scan did.
fn is_closing(mask: &BinaryMask, start: (isize, isize), back: usize, start_back: usize) -> bool {
    let first_hit = |b: usize| {
        (1..=8)
            .map(|k| (b + k) % 8)
            .find(|&d| mask.get_signed(start.0 + MOORE[d].0, start.1 + MOORE[d].1))
    };
    first_hit(back) == first_hit(start_back)
}
