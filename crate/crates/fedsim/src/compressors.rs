//! Contractive compressors: maps Q with a certified contraction factor
//! `alpha` in (0, 1] such that ‖Q(v) − v‖² ≤ (1 − alpha)‖v‖² for every v.

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorSpec {
    /// Q(v) = v, alpha = 1.
    Identity,
    /// Keeps the k largest-magnitude entries, alpha = k/d.
    /// Ties break toward the lowest index so results are platform-independent.
    TopK { k: usize },
    /// Q(v) = (‖v‖₁ / d) · sign(v) with sign(0) = 0, alpha = 1/d.
    ScaledSign,
}

/// The certified contraction factor for dimension `d`.
pub fn contraction_factor(q: CompressorSpec, d: usize) -> f64 {
    debug_assert!(d >= 1);
    match q {
        CompressorSpec::Identity => 1.0,
        CompressorSpec::TopK { k } => (k.min(d) as f64) / d as f64,
        CompressorSpec::ScaledSign => 1.0 / d as f64,
    }
}

/// Applies the compressor. Pure: no internal randomness.
pub fn compress(q: CompressorSpec, v: &ParamVector) -> Result<ParamVector> {
    match q {
        CompressorSpec::Identity => Ok(v.clone()),
        CompressorSpec::TopK { k } => {
            let d = v.len();
            if k > d {
                return Err(Error::config(format!(
                    "compressor.k = {k} exceeds dimension {d}"
                )));
            }
            if k == d {
                return Ok(v.clone());
            }
            // Select the k largest |v_j|; on equal magnitude the lower index wins.
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| {
                v.0[b]
                    .abs()
                    .partial_cmp(&v.0[a].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut out = vec![0.0; d];
            for &j in order.iter().take(k) {
                out[j] = v.0[j];
            }
            Ok(ParamVector::from_vec(out))
        }
        CompressorSpec::ScaledSign => {
            let d = v.len();
            if d == 0 {
                return Ok(v.clone());
            }
            let l1: f64 = v.0.iter().map(|x| x.abs()).sum();
            let s = l1 / d as f64;
            Ok(ParamVector::from_vec(
                v.0.iter()
                    .map(|&x| {
                        if x > 0.0 {
                            s
                        } else if x < 0.0 {
                            -s
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_vector, l2_norm_sq, Purpose, RngStream, StreamId};

    fn residual_sq(q: CompressorSpec, v: &ParamVector) -> f64 {
        l2_norm_sq(&compress(q, v).unwrap().sub(v))
    }

    #[test]
    fn topk_keeps_largest_magnitude() {
        let v = ParamVector::from_vec(vec![3.0, -1.0, 2.0]);
        let out = compress(CompressorSpec::TopK { k: 1 }, &v).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 0.0, 0.0]);
        let res = residual_sq(CompressorSpec::TopK { k: 1 }, &v);
        assert_eq!(res, 5.0);
        assert!(res <= (1.0 - 1.0 / 3.0) * 14.0);
    }

    #[test]
    fn topk_full_k_is_identity() {
        let v = ParamVector::from_vec(vec![0.3, -0.7, 0.0, 9.9]);
        let out = compress(CompressorSpec::TopK { k: 4 }, &v).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn topk_rejects_k_above_dimension() {
        let v = ParamVector::from_vec(vec![1.0, 2.0]);
        assert!(compress(CompressorSpec::TopK { k: 3 }, &v).is_err());
    }

    #[test]
    fn topk_tie_break_lowest_index() {
        let v = ParamVector::from_vec(vec![1.0, -1.0, 1.0]);
        let out = compress(CompressorSpec::TopK { k: 2 }, &v).unwrap();
        assert_eq!(out.as_slice(), &[1.0, -1.0, 0.0]);
    }

    #[test]
    fn scaled_sign_constant_magnitude_fixed_point() {
        let v = ParamVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let out = compress(CompressorSpec::ScaledSign, &v).unwrap();
        assert_eq!(out, v);
        assert_eq!(residual_sq(CompressorSpec::ScaledSign, &v), 0.0);
    }

    #[test]
    fn scaled_sign_zero_maps_to_zero() {
        let v = ParamVector::zeros(5);
        let out = compress(CompressorSpec::ScaledSign, &v).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn contraction_factors() {
        assert_eq!(contraction_factor(CompressorSpec::Identity, 100), 1.0);
        assert_eq!(contraction_factor(CompressorSpec::ScaledSign, 4), 0.25);
        // Reference setting: top 1% of 431,080 parameters.
        let a = contraction_factor(CompressorSpec::TopK { k: 4310 }, 431_080);
        assert!((a - 0.01).abs() < 1e-4);
        assert_eq!(a, 4310.0 / 431_080.0);
    }

    #[test]
    fn contraction_fuzz_four_distributions() {
        let mut rng = RngStream::new(99, StreamId::new(0, 0, Purpose::Fuzz));
        let d = 64;
        let specs = [
            CompressorSpec::TopK { k: 1 },
            CompressorSpec::TopK { k: 6 },
            CompressorSpec::TopK { k: 32 },
            CompressorSpec::TopK { k: 64 },
            CompressorSpec::ScaledSign,
            CompressorSpec::Identity,
        ];
        for trial in 0..500 {
            let v = match trial % 4 {
                0 => gaussian_vector(&mut rng, d, 1.0),
                1 => {
                    // sparse
                    let mut v = ParamVector::zeros(d);
                    for _ in 0..4 {
                        let j = rng.gen_range_usize(d);
                        v.0[j] = rng.standard_normal();
                    }
                    v
                }
                2 => {
                    // heavy-tailed: cubed normals
                    let mut v = gaussian_vector(&mut rng, d, 1.0);
                    for x in v.0.iter_mut() {
                        *x = x.powi(3) * 1e3;
                    }
                    v
                }
                _ => ParamVector::from_vec(vec![-0.37; d]),
            };
            let n2 = l2_norm_sq(&v);
            for q in specs {
                let alpha = contraction_factor(q, d);
                let res = residual_sq(q, &v);
                assert!(
                    res <= (1.0 - alpha) * n2 + 1e-12 * n2,
                    "{q:?} trial {trial}: res {res} vs {}",
                    (1.0 - alpha) * n2
                );
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn prop_topk_idempotent(
            xs in proptest::collection::vec(-1e3f64..1e3, 1..40),
            k in 1usize..40,
        ) {
            let d = xs.len();
            let k = k.min(d);
            let v = ParamVector::from_vec(xs);
            let once = compress(CompressorSpec::TopK { k }, &v).unwrap();
            let twice = compress(CompressorSpec::TopK { k }, &once).unwrap();
            proptest::prop_assert_eq!(once, twice);
        }

        #[test]
        fn prop_contraction_property(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..50),
            k in 1usize..50,
        ) {
            let d = xs.len();
            let v = ParamVector::from_vec(xs);
            let n2 = l2_norm_sq(&v);
            for q in [CompressorSpec::TopK { k: k.min(d) }, CompressorSpec::ScaledSign] {
                let alpha = contraction_factor(q, d);
                let res = l2_norm_sq(&compress(q, &v).unwrap().sub(&v));
                proptest::prop_assert!(res <= (1.0 - alpha) * n2 + 1e-12 * n2);
            }
        }
    }
}
