//! Density-based clustering of 2-D points.

use std::collections::{HashMap, VecDeque};

/// Uniform-grid index with cell size `eps` for radius queries.
struct GridIndex<'a> {
    points: &'a [[f64; 2]],
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn cell(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// Indices within `eps` of point `i` (including `i`), ascending.
    fn neighbours(&self, i: usize) -> Vec<usize> {
        let p = self.points[i];
        let (cx, cy) = Self::cell(&p, self.eps);
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                if let Some(members) = self.cells.get(&(gx, gy)) {
                    out.extend(members.iter().copied().filter(|&j| {
                        let q = self.points[j];
                        (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) <= eps2
                    }));
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// DBSCAN on Euclidean distance.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Returns one label per point: `Some(cluster)` with clusters
/// numbered in discovery order, or `None` for noise. Points are visited in
/// index order, so the labelling is deterministic; a border point reachable
/// from several clusters joins the first one that reaches it.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0, "eps must be positive");
    let min_pts = min_pts.max(1);
    let index = GridIndex::new(points, eps);
    let mut labels = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next_cluster = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = index.neighbours(i);
        if seeds.len() < min_pts {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = index.neighbours(j);
            if reach.len() >= min_pts {
                queue.extend(reach);
            }
        }
    }
    labels
}
