//! Reproducible random streams and Monte Carlo estimates.
//!
//! Every draw `i` of a stream `(seed, stream_index)` gets its own ChaCha12
//! generator: the key holds `seed` and `stream_index`, and the ChaCha stream
//! id is `i`. A draw is therefore a pure function of its indices, and any
//! partition of `0..n` over workers reproduces exactly the same samples.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat). The
//! acceptance tests pin seeds, so changing either the generator or the normal
//! method changes reported numbers.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator handed to a single Monte Carlo draw.
pub type DrawRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// Derived stream used for sub-tasks of a verification (one per case).
    pub fn child(&self, k: u64) -> Self {
        let mixed = splitmix64(self.stream_index ^ splitmix64(k.wrapping_add(1)));
        Self {
            seed: self.seed,
            stream_index: mixed,
        }
    }

    /// Generator for draw number `draw`.
    pub fn draw_rng(&self, draw: u64) -> DrawRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream_index.to_le_bytes());
        let mut rng = ChaCha12Rng::from_seed(key);
        rng.set_stream(draw);
        rng
    }
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    #[serde(rename = "se")]
    pub std_error: f64,
    #[serde(rename = "n")]
    pub n_samples: u64,
}

impl McEstimate {
    /// Sample mean and standard error, summed in index order.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got {n}"
            )));
        }
        if let Some((i, v)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample {
                draw: i as u64,
                value: *v,
            });
        }
        let nf = n as f64;
        let mean = samples.iter().sum::<f64>() / nf;
        let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
        let var = ss / (nf - 1.0);
        Ok(Self {
            mean,
            std_error: (var / nf).sqrt(),
            n_samples: n as u64,
        })
    }

    pub fn sample_std(&self) -> f64 {
        self.std_error * (self.n_samples as f64).sqrt()
    }

    /// Pooled estimate over the union of both sample sets.
    pub fn combine(&self, other: &Self) -> Self {
        let (n1, n2) = (self.n_samples as f64, other.n_samples as f64);
        let n = n1 + n2;
        let mean = (n1 * self.mean + n2 * other.mean) / n;
        let delta = other.mean - self.mean;
        let m2 = self.sample_std().powi(2) * (n1 - 1.0)
            + other.sample_std().powi(2) * (n2 - 1.0)
            + delta * delta * n1 * n2 / n;
        let var = m2 / (n - 1.0);
        Self {
            mean,
            std_error: (var / n).sqrt(),
            n_samples: (n1 + n2) as u64,
        }
    }
}

/// Canonical split of `0..n` into `workers` contiguous, nearly equal ranges.
pub fn partition(n: u64, workers: usize) -> Vec<Range<u64>> {
    let k = workers.max(1) as u64;
    (0..k).map(|w| (w * n / k)..((w + 1) * n / k)).collect()
}

/// Row-major table of per-draw sample vectors.
#[derive(Debug, Clone)]
pub struct Samples {
    width: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn len(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.chunks_exact(self.width).map(|r| r[j]).collect()
    }

    pub fn estimate(&self, j: usize) -> Result<McEstimate> {
        McEstimate::from_samples(&self.column(j))
    }

    /// Estimate of column `a` minus column `b`, draw by draw.
    pub fn difference(&self, a: usize, b: usize) -> Result<McEstimate> {
        let d: Vec<f64> = self
            .data
            .chunks_exact(self.width)
            .map(|r| r[a] - r[b])
            .collect();
        McEstimate::from_samples(&d)
    }

    pub fn map_column(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.data.chunks_exact(self.width).map(f).collect()
    }
}

fn run_range<F>(
    stream: &RngStream,
    range: Range<u64>,
    width: usize,
    sampler: &F,
) -> Result<Vec<f64>>
where
    F: Fn(&mut DrawRng, &mut [f64]) -> Result<()> + Sync,
{
    let mut out = vec![0.0; (range.end - range.start) as usize * width];
    for (row, draw) in out.chunks_exact_mut(width.max(1)).zip(range) {
        let mut rng = stream.draw_rng(draw);
        sampler(&mut rng, row)?;
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { draw, value: *v });
        }
    }
    Ok(out)
}

/// Draw `n` sample vectors of length `width`, fanned out over `workers`
/// contiguous ranges. The result does not depend on `workers`.
pub fn sample_partitioned<F>(
    n: u64,
    width: usize,
    stream: &RngStream,
    workers: usize,
    sampler: F,
) -> Result<Samples>
where
    F: Fn(&mut DrawRng, &mut [f64]) -> Result<()> + Sync,
{
    if width == 0 {
        return Err(Error::InvalidArgument(
            "sample width must be positive".into(),
        ));
    }
    let chunks: Vec<Result<Vec<f64>>> = partition(n, workers)
        .into_par_iter()
        .map(|r| run_range(stream, r, width, &sampler))
        .collect();
    let mut data = Vec::with_capacity(n as usize * width);
    for c in chunks {
        data.extend(c?);
    }
    Ok(Samples { width, data })
}

/// Sample with the default partition (one range per rayon thread, at least 16).
pub fn sample<F>(n: u64, width: usize, stream: &RngStream, sampler: F) -> Result<Samples>
where
    F: Fn(&mut DrawRng, &mut [f64]) -> Result<()> + Sync,
{
    let workers = (rayon::current_num_threads() * 4).max(16);
    sample_partitioned(n, width, stream, workers, sampler)
}

/// Mean and standard error of a scalar sampler over `n` draws.
pub fn estimate<F>(sampler: F, n: u64, stream: &RngStream) -> Result<McEstimate>
where
    F: Fn(&mut DrawRng) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    sample(n, 1, stream, |rng, out| {
        out[0] = sampler(rng);
        Ok(())
    })?
    .estimate(0)
}

pub fn estimate_partitioned<F>(
    sampler: F,
    n: u64,
    stream: &RngStream,
    workers: usize,
) -> Result<McEstimate>
where
    F: Fn(&mut DrawRng) -> f64 + Sync,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    sample_partitioned(n, 1, stream, workers, |rng, out| {
        out[0] = sampler(rng);
        Ok(())
    })?
    .estimate(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sampler_has_zero_error() {
        let e = estimate(|_| 1.0, 100, &RngStream::new(1, 0)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!(e.n_samples, 100);
    }

    #[test]
    fn needs_two_samples() {
        assert!(estimate(|_| 1.0, 1, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn non_finite_sample_reports_draw_index() {
        let s = Samples {
            width: 1,
            data: vec![0.0, 1.0, f64::NAN],
        };
        match s.estimate(0) {
            Err(Error::NonFiniteSample { draw, .. }) => assert_eq!(draw, 2),
            other => panic!("unexpected {other:?}"),
        }
        let r = sample_partitioned(20, 1, &RngStream::new(3, 0), 4, |rng, out| {
            let u: f64 = rng.random();
            out[0] = if u > 0.0 { 0.0 } else { 1.0 };
            Ok(())
        });
        assert!(r.is_ok());
    }

    #[test]
    fn sampler_infinity_is_caught_with_index() {
        let stream = RngStream::new(3, 0);
        let marker = standard_normal(&mut stream.draw_rng(7));
        let r = sample_partitioned(20, 1, &stream, 3, |rng, out| {
            let z = standard_normal(rng);
            out[0] = if z == marker { f64::INFINITY } else { z };
            Ok(())
        });
        match r {
            Err(Error::NonFiniteSample { draw, .. }) => assert_eq!(draw, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_streams_identical_draws() {
        let a = RngStream::new(42, 3);
        let xs: Vec<f64> = (0..5)
            .map(|i| standard_normal(&mut a.draw_rng(i)))
            .collect();
        let ys: Vec<f64> = (0..5)
            .map(|i| standard_normal(&mut a.draw_rng(i)))
            .collect();
        assert_eq!(xs, ys);
        let b = RngStream::new(42, 4);
        assert_ne!(
            standard_normal(&mut a.draw_rng(0)),
            standard_normal(&mut b.draw_rng(0))
        );
    }

    #[test]
    fn partition_covers_range() {
        let p = partition(10, 3);
        assert_eq!(p, vec![0..3, 3..6, 6..10]);
        assert_eq!(
            partition(5, 8).iter().map(|r| r.end - r.start).sum::<u64>(),
            5
        );
    }

    #[test]
    fn combine_matches_pooled_samples() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let whole = McEstimate::from_samples(&xs).unwrap();
        let a = McEstimate::from_samples(&xs[..20]).unwrap();
        let b = McEstimate::from_samples(&xs[20..]).unwrap();
        let c = a.combine(&b);
        assert!((c.mean - whole.mean).abs() < 1e-14);
        assert!((c.std_error - whole.std_error).abs() < 1e-14);
        assert_eq!(c.n_samples, 50);
    }
}
