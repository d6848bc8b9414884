//! Orthogonal kernel-pair placement.

use super::EdgeSegment;
use crate::model::Kernel;

/// Cholesky diagonal for `Sigma = 1 / (2 delta_mu^2) I`.
pub(crate) fn isotropic_scale(delta_mu: f64) -> f64 {
    (1.0 / (2.0 * delta_mu * delta_mu)).sqrt()
}

/// Two kernels per segment at `center -/+ (delta_mu / 2) * normal`, so each
/// pair straddles its segment at distance `delta_mu`. Centers are clamped to
/// the pixel range `[0, width - 1] x [0, height - 1]`; experts start at 0
/// and amplitudes at 1.
pub fn place_kernels(
    segments: &[EdgeSegment],
    delta_mu: f64,
    width: usize,
    height: usize,
) -> Vec<Kernel> {
    let scale = isotropic_scale(delta_mu);
    let max_x = width.saturating_sub(1) as f64;
    let max_y = height.saturating_sub(1) as f64;
    let mut out = Vec::with_capacity(2 * segments.len());
    for s in segments {
        let [nx, ny] = s.orientation.normal();
        let half = 0.5 * delta_mu;
        for sign in [-1.0, 1.0] {
            let mu = [
                (s.center[0] + sign * half * nx).clamp(0.0, max_x),
                (s.center[1] + sign * half * ny).clamp(0.0, max_y),
            ];
            out.push(Kernel::isotropic(mu, scale, 0.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::Orientation;

    fn seg(x: f64, y: f64, o: Orientation) -> EdgeSegment {
        EdgeSegment {
            center: [x, y],
            orientation: o,
            length: 3,
        }
    }

    #[test]
    fn horizontal_pair() {
        let k = place_kernels(&[seg(10.0, 10.0, Orientation::Horizontal)], 4.0, 32, 32);
        assert_eq!(k.len(), 2);
        assert_eq!(k[0].mu, [10.0, 8.0]);
        assert_eq!(k[1].mu, [10.0, 12.0]);
        for kernel in &k {
            let s = kernel.steering();
            assert!((s[0] - 0.03125).abs() < 1e-15);
            assert!((s[2] - 0.03125).abs() < 1e-15);
            assert_eq!(s[1], 0.0);
            assert!((kernel.chol[0] - 0.176777).abs() < 1e-6);
            assert_eq!(kernel.alpha, 1.0);
            assert_eq!(kernel.expert, 0.0);
        }
    }

    #[test]
    fn vertical_and_diagonal_pairs() {
        let k = place_kernels(&[seg(5.0, 7.0, Orientation::Vertical)], 2.0, 32, 32);
        assert_eq!((k[0].mu, k[1].mu), ([4.0, 7.0], [6.0, 7.0]));

        let d = 2.0 * 2f64.sqrt();
        let k = place_kernels(&[seg(16.0, 16.0, Orientation::Diagonal)], d, 32, 32);
        let close =
            |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12;
        assert!(close(k[0].mu, [17.0, 15.0]));
        assert!(close(k[1].mu, [15.0, 17.0]));

        let k = place_kernels(&[seg(16.0, 16.0, Orientation::AntiDiagonal)], d, 32, 32);
        assert!(close(k[0].mu, [15.0, 15.0]));
        assert!(close(k[1].mu, [17.0, 17.0]));
    }

    #[test]
    fn pair_count_and_clamping() {
        let segs = [
            seg(0.5, 0.5, Orientation::Horizontal),
            seg(31.0, 20.0, Orientation::Vertical),
            seg(8.0, 8.0, Orientation::Diagonal),
        ];
        let k = place_kernels(&segs, 4.0, 32, 24);
        assert_eq!(k.len(), 6);
        assert_eq!(k[0].mu, [0.5, 0.0]);
        assert_eq!(k[3].mu, [31.0, 20.0]);
        for kernel in &k {
            assert!((0.0..=31.0).contains(&kernel.mu[0]));
            assert!((0.0..=23.0).contains(&kernel.mu[1]));
        }
    }
}
