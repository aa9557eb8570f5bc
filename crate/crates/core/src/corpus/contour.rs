//! Binary masks and outer-border tracing.

use crate::error::{Error, Result};

/// Row-major boolean raster; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Closed chain of boundary pixel centres; the last point connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<(i64, i64)>,
}

impl Contour {
    /// Shoelace area of the closed chain (absolute value).
    pub fn area(&self) -> f64 {
        signed_area(&self.points).abs()
    }

    /// Length of the closed chain.
    pub fn perimeter(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        (0..n)
            .map(|i| {
                let (x0, y0) = self.points[i];
                let (x1, y1) = self.points[(i + 1) % n];
                (((x1 - x0).pow(2) + (y1 - y0).pow(2)) as f64).sqrt()
            })
            .sum()
    }

    pub fn as_f64(&self) -> Vec<[f64; 2]> {
        self.points.iter().map(|&(x, y)| [x as f64, y as f64]).collect()
    }
}

pub(crate) fn signed_area(points: &[(i64, i64)]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0i64;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        twice += x0 * y1 - x1 * y0;
    }
    twice as f64 / 2.0
}

// Clockwise on screen (y grows downward), starting east.
const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dx: i64, dy: i64) -> usize {
    DIRS.iter()
        .position(|&d| d == (dx, dy))
        .expect("offset between ring neighbours is a unit step")
}

/// Moore-neighbour tracing of one component's outer border, starting at its
/// raster-first pixel, stopped by Jacob's criterion.
fn trace_from(mask: &BinaryMask, start: (i64, i64)) -> Contour {
    let mut points = vec![start];
    let mut cur = start;
    // The west neighbour of the raster-first pixel is background.
    let mut back = 4usize;
    let mut first_move: Option<usize> = None;
    let limit = 4 * mask.width * mask.height + 8;

    for _ in 0..limit {
        let mut found = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            if mask.get(cur.0 + DIRS[d].0, cur.1 + DIRS[d].1) {
                found = Some(d);
                break;
            }
        }
        let Some(d) = found else {
            break;
        };
        if cur == start {
            match first_move {
                None => first_move = Some(d),
                Some(f) if f == d => break,
                Some(_) => {}
            }
        }
        let next = (cur.0 + DIRS[d].0, cur.1 + DIRS[d].1);
        let prev_d = (d + 7) % 8;
        let prev = (cur.0 + DIRS[prev_d].0, cur.1 + DIRS[prev_d].1);
        back = dir_index(prev.0 - next.0, prev.1 - next.1);
        cur = next;
        if cur == start {
            continue;
        }
        points.push(cur);
    }
    Contour { points }
}

/// Outer borders of every 8-connected foreground component, ordered by the
/// raster position of each component's first pixel.
pub fn trace_contours(mask: &BinaryMask) -> Result<Vec<Contour>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut contours = Vec::new();
    let mut queue = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if !mask.data[idx] || seen[idx] {
                continue;
            }
            seen[idx] = true;
            queue.clear();
            queue.push((x as i64, y as i64));
            while let Some((cx, cy)) = queue.pop() {
                for &(dx, dy) in &DIRS {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if mask.get(nx, ny) {
                        let ni = ny as usize * w + nx as usize;
                        if !seen[ni] {
                            seen[ni] = true;
                            queue.push((nx, ny));
                        }
                    }
                }
            }
            contours.push(trace_from(mask, (x as i64, y as i64)));
        }
    }
    if contours.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(contours)
}

/// Index of the contour with the largest enclosed area; lowest index on ties.
pub fn largest(contours: &[Contour]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in contours.iter().enumerate() {
        let a = c.area();
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((i, a));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(mask: &mut BinaryMask, x0: usize, y0: usize, w: usize, h: usize) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                mask.set(x, y, true);
            }
        }
    }

    #[test]
    fn filled_square_contour() {
        let mut m = BinaryMask::new(20, 20);
        rect(&mut m, 5, 5, 10, 10);
        let cs = trace_contours(&m).unwrap();
        assert_eq!(cs.len(), 1);
        let c = &cs[0];
        // Hand enumeration: 4·10 − 4 boundary pixels, each one step apart.
        assert_eq!(c.points.len(), 36);
        assert_eq!(c.perimeter(), 36.0);
        assert_eq!(c.area(), 81.0);
        let corners: Vec<_> = [(5, 5), (14, 5), (14, 14), (5, 14)].to_vec();
        for p in &corners {
            assert!(c.points.contains(p));
        }
        // Removing collinear points leaves exactly the four corners.
        let n = c.points.len();
        let turning: Vec<_> = (0..n)
            .filter(|&i| {
                let a = c.points[(i + n - 1) % n];
                let b = c.points[i];
                let d = c.points[(i + 1) % n];
                (b.0 - a.0) * (d.1 - b.1) - (b.1 - a.1) * (d.0 - b.0) != 0
            })
            .map(|i| c.points[i])
            .collect();
        assert_eq!(turning.len(), 4);
        for p in &corners {
            assert!(turning.contains(p));
        }
    }

    #[test]
    fn empty_mask_errors() {
        assert!(matches!(trace_contours(&BinaryMask::new(5, 5)), Err(Error::EmptyMask)));
    }

    #[test]
    fn two_blobs() {
        let mut m = BinaryMask::new(30, 30);
        rect(&mut m, 1, 1, 4, 4);
        rect(&mut m, 10, 10, 12, 8);
        let cs = trace_contours(&m).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(largest(&cs), Some(1));
    }

    #[test]
    fn single_pixel_and_diagonal_line() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        let cs = trace_contours(&m).unwrap();
        assert_eq!(cs[0].points, vec![(2, 2)]);

        let m = BinaryMask::from_fn(6, 6, |x, y| x == y);
        let cs = trace_contours(&m).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].area(), 0.0);
    }

    #[test]
    fn ring_traces_outer_border_only() {
        let m = BinaryMask::from_fn(12, 12, |x, y| {
            (2..10).contains(&x) && (2..10).contains(&y) && !((4..8).contains(&x) && (4..8).contains(&y))
        });
        let cs = trace_contours(&m).unwrap();
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].area(), 49.0);
    }
}
