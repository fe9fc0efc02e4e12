//! Dense vector arithmetic, seeded random streams, and deterministic
//! aggregation shared by every other module.
//!
//! Noise normalization: `sigma` in [`gaussian_vector`] bounds the *vector-level*
//! second moment, i.e. `E‖v‖² = sigma²` with per-coordinate variance `sigma²/d`.
//! Many codebases use a per-coordinate sigma instead; everything in this crate
//! is vector-level.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Flat dense vector of 64-bit model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Coordinate-wise `self + other`.
    pub fn add(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.len(), other.len());
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Coordinate-wise `self - other`.
    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        debug_assert_eq!(self.len(), other.len());
        ParamVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * s).collect())
    }

    /// In-place `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ParamVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Squared Euclidean norm `Σ v_j²`.
pub fn l2_norm_sq(v: &ParamVector) -> f64 {
    v.0.iter().map(|x| x * x).sum()
}

/// Coordinate-wise arithmetic mean with a fixed summation order
/// (ascending worker index), so the result is bit-identical across re-runs
/// and across any caller-side parallelism.
///
/// Summation is Neumaier-compensated and the compensation term is divided
/// separately; this keeps the mean of n identical vectors equal to the input
/// (plain `(x+x+x)/3` already misses that for x = 0.1).
pub fn mean_reduce(vs: &[ParamVector]) -> Result<ParamVector> {
    let first = vs
        .first()
        .ok_or_else(|| Error::config("mean_reduce: empty vector list"))?;
    let d = first.len();
    for v in vs {
        if v.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: v.len(),
            });
        }
    }
    if vs.len() == 1 {
        return Ok(first.clone());
    }
    let n = vs.len() as f64;
    let mut out = vec![0.0; d];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for v in vs {
            let x = v.0[j];
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        *slot = sum / n + comp / n;
    }
    Ok(ParamVector(out))
}

/// What a random stream is consumed for. Distinct purposes get
/// statistically independent streams even at the same (worker, round).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Initial model draw (server side, worker index unused).
    Init = 0,
    /// Per-round local update sampling (SGD steps or the prox sample).
    Local = 1,
    /// Dataset synthesis.
    DataGen = 2,
    /// Dataset partitioning.
    Partition = 3,
    /// Monte-Carlo measurement sweeps (sigma estimation, certificates).
    Measure = 4,
    /// Theory-side fuzz instance generation.
    Fuzz = 5,
}

/// Identifies one logical random stream inside a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub worker: u32,
    pub round: u32,
    pub purpose: Purpose,
}

impl StreamId {
    pub fn new(worker: u32, round: u32, purpose: Purpose) -> Self {
        StreamId {
            worker,
            round,
            purpose,
        }
    }

    fn pack(self) -> u64 {
        ((self.worker as u64) << 40) | ((self.round as u64) << 8) | (self.purpose as u64)
    }
}

/// Counter-based random stream: the master seed keys the generator and the
/// (worker, round, purpose) triple selects an independent stream, so worker
/// parallelism cannot reorder randomness.
pub struct RngStream {
    rng: ChaCha12Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(id.pack());
        RngStream { rng }
    }

    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn gen_range_usize(&mut self, upper: usize) -> usize {
        self.rng.gen_range(0..upper)
    }

    /// First `m` entries of a seeded Fisher-Yates permutation of `0..n`.
    pub fn sample_without_replacement(&mut self, n: usize, m: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let m = m.min(n);
        for i in 0..m {
            let j = i + self.gen_range_usize(n - i);
            idx.swap(i, j);
        }
        idx.truncate(m);
        idx
    }

    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        self.sample_without_replacement(n, n)
    }
}

/// `d` iid Gaussian draws with mean 0 and vector-level second moment
/// `E‖v‖² = sigma²` (per-coordinate variance `sigma²/d`).
pub fn gaussian_vector(rng: &mut RngStream, d: usize, sigma: f64) -> ParamVector {
    debug_assert!(sigma >= 0.0);
    if sigma == 0.0 || d == 0 {
        return ParamVector::zeros(d);
    }
    let per_coord = sigma / (d as f64).sqrt();
    ParamVector((0..d).map(|_| per_coord * rng.standard_normal()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_norm_sq_zero_vector() {
        assert_eq!(l2_norm_sq(&ParamVector::from_vec(vec![0.0, 0.0, 0.0])), 0.0);
    }

    #[test]
    fn l2_norm_sq_three_four_five() {
        assert_eq!(l2_norm_sq(&ParamVector::from_vec(vec![3.0, 4.0])), 25.0);
    }

    #[test]
    fn l2_norm_sq_unit_entries() {
        assert_eq!(
            l2_norm_sq(&ParamVector::from_vec(vec![1.0, 1.0, 1.0, 1.0])),
            4.0
        );
    }

    #[test]
    fn mean_reduce_pairs() {
        let out = mean_reduce(&[
            ParamVector::from_vec(vec![1.0, 1.0]),
            ParamVector::from_vec(vec![3.0, 3.0]),
        ])
        .unwrap();
        assert_eq!(out.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn mean_reduce_singleton_is_identity() {
        let v = ParamVector::from_vec(vec![5.0]);
        assert_eq!(mean_reduce(std::slice::from_ref(&v)).unwrap(), v);
    }

    #[test]
    fn mean_reduce_symmetric_cancellation() {
        let out = mean_reduce(&[
            ParamVector::from_vec(vec![1.0, 0.0]),
            ParamVector::from_vec(vec![0.0, 1.0]),
            ParamVector::from_vec(vec![-1.0, -1.0]),
        ])
        .unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn mean_reduce_rejects_empty_and_mismatched() {
        assert!(matches!(mean_reduce(&[]), Err(Error::Config(_))));
        let r = mean_reduce(&[
            ParamVector::from_vec(vec![1.0]),
            ParamVector::from_vec(vec![1.0, 2.0]),
        ]);
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn mean_reduce_of_copies_returns_vector_exactly() {
        let v = ParamVector::from_vec(vec![0.1, -2.7, 3.3e-5, 1.0 / 3.0]);
        for n in [1usize, 2, 3, 5, 7, 10, 16, 33] {
            let copies: Vec<ParamVector> = (0..n).map(|_| v.clone()).collect();
            let out = mean_reduce(&copies).unwrap();
            for (a, b) in out.as_slice().iter().zip(v.as_slice()) {
                assert_eq!(a.to_bits(), b.to_bits(), "n={n}");
            }
        }
    }

    #[test]
    fn gaussian_vector_zero_sigma_is_zero() {
        let mut rng = RngStream::new(1, StreamId::new(0, 0, Purpose::Local));
        let v = gaussian_vector(&mut rng, 3, 0.0);
        assert_eq!(v.as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_streams_reproduce() {
        let id = StreamId::new(3, 17, Purpose::Local);
        let mut a = RngStream::new(1, id);
        let mut b = RngStream::new(1, id);
        let va = gaussian_vector(&mut a, 16, 1.0);
        let vb = gaussian_vector(&mut b, 16, 1.0);
        for (x, y) in va.as_slice().iter().zip(vb.as_slice()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(1, StreamId::new(0, 0, Purpose::Local));
        let mut b = RngStream::new(1, StreamId::new(1, 0, Purpose::Local));
        let mut c = RngStream::new(1, StreamId::new(0, 1, Purpose::Local));
        let va = gaussian_vector(&mut a, 8, 1.0);
        let vb = gaussian_vector(&mut b, 8, 1.0);
        let vc = gaussian_vector(&mut c, 8, 1.0);
        assert_ne!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn gaussian_second_moment_matches_sigma_sq() {
        // Monte-Carlo estimate of E‖v‖² over 1e5 draws, sigma = 2 -> 4 within 3%.
        let mut rng = RngStream::new(42, StreamId::new(0, 0, Purpose::Measure));
        let d = 8;
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += l2_norm_sq(&gaussian_vector(&mut rng, d, 2.0));
        }
        let est = acc / trials as f64;
        assert!((est - 4.0).abs() < 0.12, "estimate {est}");
    }

    #[test]
    fn sample_without_replacement_is_a_prefix_of_permutation() {
        let mut rng = RngStream::new(7, StreamId::new(0, 0, Purpose::Partition));
        let picked = rng.sample_without_replacement(10, 4);
        assert_eq!(picked.len(), 4);
        let mut sorted = picked.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert!(sorted.iter().all(|&i| i < 10));
    }

    proptest::proptest! {
        #[test]
        fn prop_mean_of_copies_is_identity(
            xs in proptest::collection::vec(-1e6f64..1e6, 1..8),
            n in 1usize..24,
        ) {
            let v = ParamVector::from_vec(xs);
            let copies: Vec<ParamVector> = (0..n).map(|_| v.clone()).collect();
            let out = mean_reduce(&copies).unwrap();
            for (a, b) in out.as_slice().iter().zip(v.as_slice()) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
