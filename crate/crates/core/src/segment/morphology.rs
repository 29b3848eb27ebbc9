//! Binary thinning and hole filling.

use std::collections::VecDeque;

use super::BinaryMask;

/// Neighbours P2..P9 clockwise starting north (rows grow downwards).
const RING: [(isize, isize); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Zhang-Suen two-subiteration thinning, iterated until nothing changes.
/// The result is a fixed point, so thinning it again is a no-op.
pub fn morphological_thin(mask: &BinaryMask) -> BinaryMask {
    let mut cur = mask.clone();
    let mut to_clear = Vec::new();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            to_clear.clear();
            for y in 0..cur.height {
                for x in 0..cur.width {
                    if cur.get(x, y) && removable(&cur, x, y, pass) {
                        to_clear.push(y * cur.width + x);
                    }
                }
            }
            changed |= !to_clear.is_empty();
            for &i in &to_clear {
                cur.bits[i] = false;
            }
        }
        if !changed {
            return cur;
        }
    }
}

fn removable(m: &BinaryMask, x: usize, y: usize, pass: usize) -> bool {
    let p: [bool; 8] =
        RING.map(|(dx, dy)| m.get_signed(x as isize + dx, y as isize + dy));
    let neighbours = p.iter().filter(|&&b| b).count();
    if !(2..=6).contains(&neighbours) {
        return false;
    }
    let transitions = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if transitions != 1 {
        return false;
    }
    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
    if pass == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Sets every background pixel that cannot be reached from the frame border
/// through 4-connected background.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width, mask.height);
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, q: &mut VecDeque<usize>| {
        let i = y * w + x;
        if !mask.bits[i] && !outside[i] {
            outside[i] = true;
            q.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        if h > 1 {
            seed(x, h - 1, &mut outside, &mut queue);
        }
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        if w > 1 {
            seed(w - 1, y, &mut outside, &mut queue);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(x - 1, y, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(x + 1, y, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(x, y - 1, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(x, y + 1, &mut outside, &mut queue);
        }
    }
    BinaryMask {
        width: w,
        height: h,
        bits: outside.iter().map(|&o| !o).collect(),
    }
}
