//! Fourier-feature positional encoding.

use std::f64::consts::PI;

use super::tensor::Tensor;
use crate::math::Vec3;

/// Width of the encoding of a 3-vector with `n_bands` frequency bands.
pub const fn encoded_dim(n_bands: usize) -> usize {
    3 + 6 * n_bands
}

/// `[v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(n-1) pi v), cos(2^(n-1) pi v)]`.
pub fn positional_encode(v: Vec3, n_bands: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_dim(n_bands));
    encode_into(v, n_bands, &mut out);
    out
}

fn encode_into(v: Vec3, n_bands: usize, out: &mut Vec<f64>) {
    let raw = v.to_array();
    out.extend_from_slice(&raw);
    let mut freq = PI;
    for _ in 0..n_bands {
        for c in raw {
            out.push((freq * c).sin());
        }
        for c in raw {
            out.push((freq * c).cos());
        }
        freq *= 2.0;
    }
}

/// Encode a batch of points into an `n x encoded_dim` tensor.
pub fn encode_batch(points: &[Vec3], n_bands: usize) -> Tensor {
    let mut data = Vec::with_capacity(points.len() * encoded_dim(n_bands));
    for &p in points {
        encode_into(p, n_bands, &mut data);
    }
    Tensor::from_vec(points.len(), encoded_dim(n_bands), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input() {
        let e = positional_encode(Vec3::ZERO, 4);
        assert_eq!(e.len(), encoded_dim(4));
        assert!(e[..3].iter().all(|&v| v == 0.0));
        for band in 0..4 {
            let base = 3 + band * 6;
            assert!(e[base..base + 3].iter().all(|&v| v == 0.0));
            assert!(e[base + 3..base + 6].iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn dims() {
        assert_eq!(encoded_dim(11), 69);
        assert_eq!(encoded_dim(5), 33);
        assert_eq!(positional_encode(Vec3::new(0.1, 0.2, 0.3), 11).len(), 69);
    }

    #[test]
    fn bands_are_bounded_and_deterministic() {
        let v = Vec3::new(123.4, -7.7, 0.01);
        let a = positional_encode(v, 11);
        assert_eq!(a, positional_encode(v, 11));
        assert!(a[3..].iter().all(|x| (-1.0..=1.0).contains(x)));
        // band k uses frequency 2^k * pi
        assert!((a[3 + 6 * 2] - (4.0 * PI * v.x).sin()).abs() < 1e-12);
    }
}
