//! One-bit residual codec.
//!
//! A token is stored as its nearest centroid plus the sign of every residual
//! dimension. Dimension `8*b + j` lives in bit `j` (LSB first) of byte `b`;
//! a zero residual encodes as 1. Reconstruction adds `±alpha` per dimension
//! to the centroid and is not re-normalized.

use std::collections::HashMap;

use super::Centroids;
use crate::encoder::TokenMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedToken {
    pub centroid_id: u32,
    pub residual: Vec<u8>,
}

pub fn residual_bytes(dim: usize) -> usize {
    dim.div_ceil(8)
}

pub fn pack_signs(residual: &[f32]) -> Vec<u8> {
    let mut out = vec![0u8; residual_bytes(residual.len())];
    for (i, &r) in residual.iter().enumerate() {
        if r >= 0.0 {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Expands packed bits to `+1.0` / `-1.0` per dimension.
pub fn unpack_signs(bits: &[u8], dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|i| if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

pub fn compress_token(v: &[f32], centroids: &Centroids) -> CompressedToken {
    let (id, _) = centroids.nearest(v);
    let c = centroids.row(id as usize);
    let residual: Vec<f32> = v.iter().zip(c).map(|(&x, &y)| x - y).collect();
    CompressedToken {
        centroid_id: id,
        residual: pack_signs(&residual),
    }
}

pub fn decompress_into(centroid_id: u32, bits: &[u8], centroids: &Centroids, alpha: f64, out: &mut Vec<f32>) {
    let c = centroids.row(centroid_id as usize);
    let a = alpha as f32;
    out.extend(c.iter().enumerate().map(|(i, &x)| {
        let s = if bits[i / 8] >> (i % 8) & 1 == 1 { 1.0 } else { -1.0 };
        x + a * s
    }));
}

pub fn decompress(ct: &CompressedToken, centroids: &Centroids, alpha: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(centroids.dim());
    decompress_into(ct.centroid_id, &ct.residual, centroids, alpha, &mut out);
    out
}

/// Mean absolute residual over all samples and dimensions.
pub fn estimate_alpha(samples: &TokenMatrix, centroids: &Centroids) -> f64 {
    let n = samples.n_tokens();
    if n == 0 {
        return 0.0;
    }
    let mut seen: HashMap<Vec<u32>, f64> = HashMap::new();
    let total: f64 = samples
        .rows()
        .map(|v| {
            *seen.entry(v.iter().map(|x| x.to_bits()).collect()).or_insert_with(|| {
                let (id, _) = centroids.nearest(v);
                v.iter()
                    .zip(centroids.row(id as usize))
                    .map(|(&x, &y)| (x - y).abs() as f64)
                    .sum::<f64>()
            })
        })
        .sum();
    total / (n * samples.dim()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{l2_norm, normalize};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        normalize(&mut v);
        v
    }

    fn random_centroids(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Centroids {
        let rows: Vec<Vec<f32>> = (0..k).map(|_| unit(rng, dim)).collect();
        Centroids::from_rows(dim, &rows)
    }

    #[test]
    fn on_centroid_is_all_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = random_centroids(&mut rng, 5, 128);
        let ct = compress_token(c.row(3), &c);
        assert_eq!(ct.centroid_id, 3);
        assert_eq!(ct.residual.len(), 16);
        assert!(ct.residual.iter().all(|&b| b == 0xff));
    }

    #[test]
    fn negative_first_dimension_clears_bit_zero() {
        let c = Centroids::from_rows(4, [[0.5f32, 0.5, 0.5, 0.5]]);
        let ct = compress_token(&[0.4, 0.6, 0.5, 0.5], &c);
        assert_eq!(ct.residual, vec![0b1110]);
    }

    #[test]
    fn bit_order_is_lsb_first() {
        let mut r = vec![-1.0f32; 16];
        r[0] = 1.0;
        r[9] = 1.0;
        r[15] = 0.0;
        assert_eq!(pack_signs(&r), vec![0b0000_0001, 0b1000_0010]);
        let s = unpack_signs(&pack_signs(&r), 16);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[1], -1.0);
        assert_eq!(s[9], 1.0);
    }

    #[test]
    fn decompress_formula() {
        let c = Centroids::from_rows(3, [[1.0f32, 0.0, 0.0]]);
        let ct = CompressedToken {
            centroid_id: 0,
            residual: vec![0b111],
        };
        assert_eq!(decompress(&ct, &c, 0.25), vec![1.25, 0.25, 0.25]);
        let ct = CompressedToken {
            centroid_id: 0,
            residual: vec![0b010],
        };
        assert_eq!(decompress(&ct, &c, 0.25), vec![0.75, 0.25, -0.25]);
        assert_eq!(decompress(&ct, &c, 0.0), c.row(0).to_vec());
    }

    #[test]
    fn alpha_cases() {
        let c = Centroids::from_rows(2, [[1.0f32, 0.0], [0.0, 1.0]]);
        let on = TokenMatrix::from_rows(2, [[1.0f32, 0.0], [0.0, 1.0]]);
        assert_eq!(estimate_alpha(&on, &c), 0.0);

        let c = Centroids::from_rows(2, [[0.6f32, 0.8]]);
        let off = TokenMatrix::from_rows(2, [[0.85f32, 0.55], [0.35, 1.05]]);
        assert!((estimate_alpha(&off, &c) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn alpha_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_centroids(&mut rng, 9, 32);
        let rows: Vec<Vec<f32>> = (0..300).map(|_| unit(&mut rng, 32)).collect();
        let m = TokenMatrix::from_rows(32, &rows);

        let mut total = 0.0f64;
        for r in &rows {
            let mut best = 0;
            let mut best_dot = f64::NEG_INFINITY;
            for k in 0..9 {
                let d: f64 = r.iter().zip(c.row(k)).map(|(&a, &b)| a as f64 * b as f64).sum();
                if d > best_dot {
                    best_dot = d;
                    best = k;
                }
            }
            for (a, b) in r.iter().zip(c.row(best)) {
                total += (a - b).abs() as f64;
            }
        }
        let expect = total / (300.0 * 32.0);
        assert!((estimate_alpha(&m, &c) - expect).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_within_triangle_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_centroids(&mut rng, 16, 128);
        let alpha = 0.05;
        for _ in 0..500 {
            let v = unit(&mut rng, 128);
            let ct = compress_token(&v, &c);
            let rec = decompress(&ct, &c, alpha);
            let err: Vec<f32> = rec.iter().zip(&v).map(|(a, b)| a - b).collect();
            let res: Vec<f32> = v.iter().zip(c.row(ct.centroid_id as usize)).map(|(a, b)| a - b).collect();
            assert!(l2_norm(&err) <= l2_norm(&res) + alpha * (128f64).sqrt() + 1e-6);
        }
    }

    #[test]
    fn assignment_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_centroids(&mut rng, 40, 64);
        for _ in 0..1000 {
            let v = unit(&mut rng, 64);
            let mut best = 0usize;
            for k in 1..40 {
                let dk: f64 = v.iter().zip(c.row(k)).map(|(&a, &b)| a as f64 * b as f64).sum();
                let db: f64 = v.iter().zip(c.row(best)).map(|(&a, &b)| a as f64 * b as f64).sum();
                if dk > db {
                    best = k;
                }
            }
            assert_eq!(compress_token(&v, &c).centroid_id as usize, best);
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sign_pattern_survives_round_trip(
                v in prop::collection::vec(-1.0f32..1.0, 128),
                c in prop::collection::vec(-1.0f32..1.0, 128),
                alpha in 0.001f64..0.5,
            ) {
                let cents = Centroids::from_rows(128, [c.clone()]);
                let ct = compress_token(&v, &cents);
                prop_assert_eq!(ct.residual.len(), 16);
                let rec = decompress(&ct, &cents, alpha);
                for i in 0..128 {
                    let want = v[i] - c[i] >= 0.0;
                    let got = rec[i] - c[i] >= 0.0;
                    prop_assert_eq!(want, got, "dimension {}", i);
                }
            }
        }
    }
}
