//! Directional line-segment parsing of an edge mask.

use super::{EdgeMask, EdgeSegment, Orientation};

/// Maximal runs of mask pixels along each canonical direction.
///
/// A run starts at a set pixel whose predecessor along the direction is unset
/// (or outside the frame) and extends while pixels stay set. Runs of at least
/// two pixels become segments centered at the midpoint of their endpoints.
/// Output order: orientation in canonical order, then run start in row-major
/// order. A pixel may belong to runs of several orientations.
pub fn extract_segments(mask: &EdgeMask) -> Vec<EdgeSegment> {
    Orientation::ALL
        .iter()
        .flat_map(|&o| runs_along(mask, o))
        .collect()
}

fn runs_along(mask: &EdgeMask, orientation: Orientation) -> Vec<EdgeSegment> {
    let (dx, dy) = orientation.step();
    let mut out = Vec::new();
    for y in 0..mask.height() as isize {
        for x in 0..mask.width() as isize {
            if !mask.get(x, y) || mask.get(x - dx, y - dy) {
                continue;
            }
            let mut n = 1;
            while mask.get(x + n * dx, y + n * dy) {
                n += 1;
            }
            if n >= 2 {
                let (ex, ey) = (x + (n - 1) * dx, y + (n - 1) * dy);
                out.push(EdgeSegment {
                    center: [0.5 * (x + ex) as f64, 0.5 * (y + ey) as f64],
                    orientation,
                    length: n as usize,
                });
            }
        }
    }
    out
}
