//! Importance scoring and budgeted reduction of the candidate segment set.

use rayon::prelude::*;

use super::dbscan::dbscan;
use super::{EdgeSegment, Orientation};
use crate::error::{Error, Result};

const EPS_START: f64 = 2.0;
const EPS_GROWTH: f64 = 1.5;
const MIN_CLUSTER_PTS: usize = 2;
const RETAINED_FRACTION: f64 = 0.2;

fn distance(a: &EdgeSegment, b: &EdgeSegment) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

/// Mean of the (up to) two smallest values, `fallback` when there are none.
fn mean_two_nearest(best: [f64; 2], fallback: f64) -> f64 {
    match (best[0].is_finite(), best[1].is_finite()) {
        (true, true) => 0.5 * (best[0] + best[1]),
        (true, false) => best[0],
        _ => fallback,
    }
}

fn push_smallest(best: &mut [f64; 2], d: f64) {
    if d < best[0] {
        best[1] = best[0];
        best[0] = d;
    } else if d < best[1] {
        best[1] = d;
    }
}

/// Isolation score per segment:
/// `(1 - lambda) * d_sim + lambda * d_dis`, where `d_sim` (`d_dis`) is the
/// mean center distance to the two nearest other segments with the same
/// (a different) orientation. With a single neighbour its distance is used;
/// with none, `diagonal` stands in.
pub fn importance_scores(segments: &[EdgeSegment], lambda: f64, diagonal: f64) -> Vec<f64> {
    segments
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut same = [f64::INFINITY; 2];
            let mut other = [f64::INFINITY; 2];
            for (j, t) in segments.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = distance(s, t);
                if t.orientation == s.orientation {
                    push_smallest(&mut same, d);
                } else {
                    push_smallest(&mut other, d);
                }
            }
            (1.0 - lambda) * mean_two_nearest(same, diagonal)
                + lambda * mean_two_nearest(other, diagonal)
        })
        .collect()
}

/// Mean center, modal orientation (canonical order breaks ties) and
/// rounded mean length of a cluster.
fn representative(members: &[&EdgeSegment]) -> EdgeSegment {
    let n = members.len() as f64;
    let cx = members.iter().map(|s| s.center[0]).sum::<f64>() / n;
    let cy = members.iter().map(|s| s.center[1]).sum::<f64>() / n;
    let mut counts = [0usize; 4];
    for s in members {
        counts[Orientation::ALL
            .iter()
            .position(|&o| o == s.orientation)
            .unwrap()] += 1;
    }
    let mut mode = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[mode] {
            mode = k;
        }
    }
    let length = members.iter().map(|s| s.length).sum::<usize>() as f64 / n;
    EdgeSegment {
        center: [cx, cy],
        orientation: Orientation::ALL[mode],
        length: (length.round() as usize).max(2),
    }
}

/// Reduces `segments` to at most `max_pts` entries.
///
/// Sets already within budget are returned unchanged. Otherwise the
/// `ceil(0.2 * max_pts)` highest-scoring segments are kept verbatim and the
/// rest are clustered with DBSCAN (`min_pts = 2`) at a radius that starts at
/// 2 px and grows by 1.5x (capped at `diagonal`) until the kept segments,
/// unclustered segments and one representative per cluster fit the budget.
/// Output order: verbatim segments in input order, then cluster
/// representatives in cluster order.
///
/// If the budget cannot be met even at the full diagonal, the `max_pts`
/// highest-scoring segments are returned (in input order) and a warning is
/// logged.
pub fn reduce_segments(
    segments: &[EdgeSegment],
    max_pts: usize,
    lambda: f64,
    diagonal: f64,
) -> Result<Vec<EdgeSegment>> {
    if max_pts == 0 {
        return Err(Error::InvalidConfig("max_pts must be positive".into()));
    }
    if segments.len() <= max_pts {
        return Ok(segments.to_vec());
    }
    let scores = importance_scores(segments, lambda, diagonal);
    let mut ranked: Vec<usize> = (0..segments.len()).collect();
    ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let keep = ((RETAINED_FRACTION * max_pts as f64).ceil() as usize).min(max_pts);
    let mut retained = vec![false; segments.len()];
    for &i in &ranked[..keep] {
        retained[i] = true;
    }
    let candidates: Vec<usize> = (0..segments.len()).filter(|&i| !retained[i]).collect();
    let points: Vec<[f64; 2]> = candidates.iter().map(|&i| segments[i].center).collect();

    let mut eps = EPS_START.min(diagonal.max(f64::MIN_POSITIVE));
    loop {
        let labels = dbscan(&points, eps, MIN_CLUSTER_PTS);
        let clusters = labels.iter().flatten().max().map_or(0, |&c| c + 1);
        let noise = labels.iter().filter(|l| l.is_none()).count();
        if keep + clusters + noise <= max_pts {
            let mut verbatim = retained.clone();
            for (&i, label) in candidates.iter().zip(&labels) {
                if label.is_none() {
                    verbatim[i] = true;
                }
            }
            let mut out: Vec<EdgeSegment> = (0..segments.len())
                .filter(|&i| verbatim[i])
                .map(|i| segments[i])
                .collect();
            let mut groups: Vec<Vec<&EdgeSegment>> = vec![Vec::new(); clusters];
            for (&i, label) in candidates.iter().zip(&labels) {
                if let Some(c) = label {
                    groups[*c].push(&segments[i]);
                }
            }
            out.extend(groups.iter().map(|g| representative(g)));
            return Ok(out);
        }
        if eps >= diagonal {
            log::warn!(
                "segment budget {max_pts} unreachable at eps = {eps:.2}; keeping the top-scoring segments"
            );
            let mut top = ranked[..max_pts].to_vec();
            top.sort_unstable();
            return Ok(top.into_iter().map(|i| segments[i]).collect());
        }
        eps = (eps * EPS_GROWTH).min(diagonal);
    }
}
