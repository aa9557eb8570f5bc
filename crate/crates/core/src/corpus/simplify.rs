//! Douglas-Peucker polyline simplification.

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt();
    }
    let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    let qx = a[0] + t * dx;
    let qy = a[1] + t * dy;
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

fn recurse(points: &[[f64; 2]], lo: usize, hi: usize, epsilon: f64, keep: &mut [bool]) {
    if hi <= lo + 1 {
        return;
    }
    let mut far = lo;
    let mut far_d = -1.0;
    for i in lo + 1..hi {
        let d = point_segment_distance(points[i], points[lo], points[hi]);
        if d > far_d {
            far = i;
            far_d = d;
        }
    }
    if far_d > epsilon {
        keep[far] = true;
        recurse(points, lo, far, epsilon, keep);
        recurse(points, far, hi, epsilon, keep);
    }
}

/// Indices of the points retained by Douglas-Peucker on an open polyline.
/// Both endpoints are always kept.
pub fn douglas_peucker_indices(points: &[[f64; 2]], epsilon: f64) -> Vec<usize> {
    match points.len() {
        0 => return vec![],
        1 => return vec![0],
        _ => {}
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    recurse(points, 0, points.len() - 1, epsilon, &mut keep);
    keep.iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect()
}

/// Classic recursive simplification of an open polyline.
pub fn douglas_peucker(points: &[[f64; 2]], epsilon: f64) -> Vec<[f64; 2]> {
    douglas_peucker_indices(points, epsilon)
        .into_iter()
        .map(|i| points[i])
        .collect()
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Simplify a closed ring. The ring is split at two mutually far points
/// (which are always hull vertices) and each half is simplified as an open
/// polyline. Returns indices into `ring` in ring order.
pub fn simplify_closed_indices(ring: &[[f64; 2]], epsilon: f64) -> Vec<usize> {
    let n = ring.len();
    if n < 3 {
        return (0..n).collect();
    }
    let farthest_from = |p: [f64; 2]| {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, &q) in ring.iter().enumerate() {
            let d = dist2(p, q);
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        best
    };
    let a = farthest_from(ring[0]);
    let b = farthest_from(ring[a]);
    if a == b {
        return vec![a];
    }
    let (lo, hi) = (a.min(b), a.max(b));

    let first: Vec<[f64; 2]> = ring[lo..=hi].to_vec();
    let mut second_idx: Vec<usize> = (hi..n).collect();
    second_idx.extend(0..=lo);
    let second: Vec<[f64; 2]> = second_idx.iter().map(|&i| ring[i]).collect();

    let mut out: Vec<usize> = douglas_peucker_indices(&first, epsilon)
        .into_iter()
        .map(|i| lo + i)
        .collect();
    // Drop the shared endpoints of the second half.
    let tail = douglas_peucker_indices(&second, epsilon);
    for &i in &tail[1..tail.len() - 1] {
        out.push(second_idx[i]);
    }
    out.sort_unstable();
    out
}
