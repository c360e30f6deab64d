//! Linear CTR estimator and its Gaussian posterior.
//!
//! The expected reward of a creative is `bias + sum of chosen element
//! weights + sum of chosen edge weights`, i.e. a dot product between the
//! creative's binary features and a packed weight vector. Learning keeps the
//! Bayesian linear-regression sufficient statistics `B = I + sum x xT` and
//! `f = sum r x`; the posterior over weights is `N(B^-1 f, sigma^2 B^-1)`.
//!
//! `B^-1` is maintained incrementally by the Sherman-Morrison identity and
//! refactorized from `B` every `recompute_interval` updates to bound drift.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::features::{FeatureIndexer, SparseFeatures};
use crate::graph::Creative;

/// Header line of the posterior checkpoint format.
pub const CHECKPOINT_HEADER: &str = "AES-POSTERIOR-v1";

/// Dense weight vector aligned with a [`FeatureIndexer`]: coordinate 0 is
/// the bias, then element weights, then present-edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    v: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(dim: usize) -> Self {
        Self { v: vec![0.0; dim] }
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self { v }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn get(&self, i: usize) -> f64 {
        self.v[i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        self.v[i] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }

    /// Draw every coordinate i.i.d. standard normal.
    pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            v: (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }
}

impl From<DVector<f64>> for WeightVector {
    fn from(v: DVector<f64>) -> Self {
        Self {
            v: v.as_slice().to_vec(),
        }
    }
}

/// Expected reward of a creative under packed weights: bias plus the chosen
/// vertex and edge weights. Summation order matches `featurize(c).dot(w)`
/// term for term, so the two routes agree bit for bit.
pub fn expected_reward(
    weights: &WeightVector,
    indexer: &FeatureIndexer,
    creative: &Creative,
) -> Result<f64> {
    let n = indexer.n_ingredients();
    if creative.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: creative.len(),
        });
    }
    let w = weights.as_slice();
    if w.len() != indexer.dim() {
        return Err(Error::DimensionMismatch {
            expected: indexer.dim(),
            got: w.len(),
        });
    }
    let mut sum = w[0];
    for i in 0..n {
        let e = creative.element(i);
        if e >= indexer.element_counts()[i] {
            return Err(Error::ElementOutOfRange {
                ingredient: i,
                count: indexer.element_counts()[i],
                index: e,
            });
        }
        sum += w[indexer.vertex_coord(i, e)];
    }
    for (p, c) in indexer.tree_edges() {
        match indexer.edge_coord(c, creative.element(p), creative.element(c)) {
            Some(coord) => sum += w[coord],
            None => {
                return Err(Error::InfeasibleCreative(format!(
                    "creative {creative} uses forbidden pair on edge ({p},{c})"
                )))
            }
        }
    }
    Ok(sum)
}

/// Gaussian posterior over the packed weight vector.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    b: DMatrix<f64>,
    b_inv: DMatrix<f64>,
    f: DVector<f64>,
    w_mean: DVector<f64>,
    sigma: f64,
    update_count: u64,
    recompute_interval: u64,
}

pub const DEFAULT_RECOMPUTE_INTERVAL: u64 = 1000;

impl PosteriorState {
    /// Fresh posterior: `B = I`, `f = 0`, mean zero.
    pub fn new(dim: usize, sigma: f64) -> Self {
        Self::with_recompute_interval(dim, sigma, DEFAULT_RECOMPUTE_INTERVAL)
    }

    pub fn with_recompute_interval(dim: usize, sigma: f64, recompute_interval: u64) -> Self {
        Self {
            b: DMatrix::identity(dim, dim),
            b_inv: DMatrix::identity(dim, dim),
            f: DVector::zeros(dim),
            w_mean: DVector::zeros(dim),
            sigma,
            update_count: 0,
            recompute_interval: recompute_interval.max(1),
        }
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn w_mean(&self) -> &DVector<f64> {
        &self.w_mean
    }

    pub fn w_mean_weights(&self) -> WeightVector {
        WeightVector::from(self.w_mean.clone())
    }

    /// Rank-1 posterior update with a binary feature vector and a 0/1 reward.
    ///
    /// `B += x xT`; `B^-1` via Sherman-Morrison; `f += r x`; the mean moves
    /// by the recursive-least-squares step `w += u (r - xT w) / (1 + xT u)`
    /// with `u = B^-1 x`.
    pub fn update(&mut self, x: &SparseFeatures, clicked: bool) {
        let coords = x.coords();
        let r = if clicked { 1.0 } else { 0.0 };

        for &i in coords {
            for &j in coords {
                self.b[(i, j)] += 1.0;
            }
        }

        // u = B^-1 x: sum of the touched columns (B^-1 symmetric)
        let dim = self.dim();
        let mut u = DVector::zeros(dim);
        for &c in coords {
            u += self.b_inv.column(c);
        }
        let xtu: f64 = coords.iter().map(|&c| u[c]).sum();
        let denom = 1.0 + xtu;
        let predicted: f64 = coords.iter().map(|&c| self.w_mean[c]).sum();

        // rank-1 downdate, filled symmetrically so B^-1 stays exactly
        // symmetric (a plain ger would differ by an ulp across the diagonal)
        let scale = 1.0 / denom;
        {
            let buf = self.b_inv.as_mut_slice();
            for j in 0..dim {
                let uj = u[j] * scale;
                let col = &mut buf[j * dim..(j + 1) * dim];
                for (i, slot) in col.iter_mut().enumerate().skip(j) {
                    *slot -= u[i] * uj;
                }
            }
            for j in 0..dim {
                for i in j + 1..dim {
                    buf[i * dim + j] = buf[j * dim + i];
                }
            }
        }
        if clicked {
            for &c in coords {
                self.f[c] += 1.0;
            }
        }
        self.w_mean.axpy((r - predicted) / denom, &u, 1.0);

        self.update_count += 1;
        if self.update_count % self.recompute_interval == 0 {
            self.recompute();
        }
    }

    /// Refactorize `B^-1` and the mean directly from `B` and `f`.
    pub fn recompute(&mut self) {
        let chol = Cholesky::new(self.b.clone())
            .expect("B = I + sum x xT is positive definite");
        let mut inv = chol.inverse();
        // keep the maintained inverse exactly symmetric
        let t = inv.transpose();
        inv += t;
        inv *= 0.5;
        self.b_inv = inv;
        self.w_mean = &self.b_inv * &self.f;
    }

    /// Build a reusable sampler for `N(w_mean, sigma^2 B^-1)`. Fails when the
    /// maintained inverse is no longer numerically positive definite; callers
    /// should [`recompute`](Self::recompute) and retry.
    pub fn sampler(&self) -> Result<PosteriorSampler> {
        let scaled_l = if self.sigma == 0.0 {
            None
        } else {
            let chol: Cholesky<f64, Dyn> =
                Cholesky::new(self.b_inv.clone()).ok_or(Error::PosteriorNotPd)?;
            let mut l = chol.unpack();
            l *= self.sigma;
            Some(l)
        };
        Ok(PosteriorSampler {
            mean: self.w_mean.clone(),
            scaled_l,
        })
    }

    /// `x^T B^-1 x` for a binary feature vector given by its support.
    pub fn quad_form(&self, coords: &[usize]) -> f64 {
        let mut s = 0.0;
        for &a in coords {
            for &b in coords {
                s += self.b_inv[(a, b)];
            }
        }
        s
    }

    /// Max absolute entry of `B B^-1 - I`.
    pub fn inverse_drift(&self) -> f64 {
        let prod = &self.b * &self.b_inv;
        let dim = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Max absolute entry of `B^-1 f - w_mean`.
    pub fn mean_consistency(&self) -> f64 {
        let fresh = &self.b_inv * &self.f;
        (&fresh - &self.w_mean).abs().max()
    }

    /// Trace of the posterior covariance `sigma^2 B^-1`.
    pub fn covariance_trace(&self) -> f64 {
        self.sigma * self.sigma * self.b_inv.trace()
    }

    /// Write the checkpoint format: header, scalars, `B` rows, then `f`.
    /// Floats use the shortest round-trip decimal form.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CHECKPOINT_HEADER}")?;
        writeln!(out, "k {}", self.dim())?;
        writeln!(out, "sigma {}", self.sigma)?;
        writeln!(out, "update_count {}", self.update_count)?;
        writeln!(out, "B")?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim()).map(|j| self.b[(i, j)].to_string()).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        writeln!(out, "f")?;
        let row: Vec<String> = self.f.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(" "))?;
        Ok(())
    }

    /// Load a checkpoint written by [`save`](Self::save); the inverse and
    /// mean are refactorized from `B` and `f`.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let mut next_line = |expect: &str| -> Result<(usize, String)> {
            lines
                .next()
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("unexpected end of checkpoint, expected {expect}"),
                })
                .and_then(|(n, l)| Ok((n + 1, l?)))
        };

        let (line_no, header) = next_line("header")?;
        if header.trim() != CHECKPOINT_HEADER {
            return Err(Error::Parse {
                line: line_no,
                message: format!("bad header `{header}`, expected `{CHECKPOINT_HEADER}`"),
            });
        }
        let parse_kv = |line_no: usize, line: &str, key: &str| -> Result<String> {
            let mut it = line.split_whitespace();
            match (it.next(), it.next()) {
                (Some(k), Some(v)) if k == key => Ok(v.to_string()),
                _ => Err(Error::Parse {
                    line: line_no,
                    message: format!("expected `{key} <value>`, got `{line}`"),
                }),
            }
        };
        let (n1, l1) = next_line("k")?;
        let dim: usize = parse_kv(n1, &l1, "k")?.parse().map_err(|e| Error::Parse {
            line: n1,
            message: format!("bad k: {e}"),
        })?;
        let (n2, l2) = next_line("sigma")?;
        let sigma: f64 = parse_kv(n2, &l2, "sigma")?.parse().map_err(|e| Error::Parse {
            line: n2,
            message: format!("bad sigma: {e}"),
        })?;
        let (n3, l3) = next_line("update_count")?;
        let update_count: u64 =
            parse_kv(n3, &l3, "update_count")?.parse().map_err(|e| Error::Parse {
                line: n3,
                message: format!("bad update_count: {e}"),
            })?;

        let (n4, l4) = next_line("B")?;
        if l4.trim() != "B" {
            return Err(Error::Parse {
                line: n4,
                message: format!("expected `B`, got `{l4}`"),
            });
        }
        let mut b = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            let (ln, row) = next_line("matrix row")?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: ln,
                    message: format!("bad matrix entry: {e}"),
                })?;
            if vals.len() != dim {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("row has {} entries, expected {dim}", vals.len()),
                });
            }
            for (j, v) in vals.into_iter().enumerate() {
                b[(i, j)] = v;
            }
        }
        let (n5, l5) = next_line("f")?;
        if l5.trim() != "f" {
            return Err(Error::Parse {
                line: n5,
                message: format!("expected `f`, got `{l5}`"),
            });
        }
        let (ln, row) = next_line("f values")?;
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: ln,
                message: format!("bad f entry: {e}"),
            })?;
        if vals.len() != dim {
            return Err(Error::Parse {
                line: ln,
                message: format!("f has {} entries, expected {dim}", vals.len()),
            });
        }
        let f = DVector::from_vec(vals);

        let mut state = Self {
            b,
            b_inv: DMatrix::identity(dim, dim),
            f,
            w_mean: DVector::zeros(dim),
            sigma,
            update_count,
            recompute_interval: DEFAULT_RECOMPUTE_INTERVAL,
        };
        state.recompute();
        Ok(state)
    }
}

/// One posterior snapshot factored for repeated sampling. Valid until the
/// posterior is next updated.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    mean: DVector<f64>,
    /// `sigma * chol(B^-1).L`; `None` when sigma is zero.
    scaled_l: Option<DMatrix<f64>>,
}

impl PosteriorSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw into `out`, using `z` as scratch for the standard-normal vector.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        z: &mut DVector<f64>,
        out: &mut DVector<f64>,
    ) {
        match &self.scaled_l {
            None => out.copy_from(&self.mean),
            Some(l) => {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                out.gemv(1.0, l, z, 0.0);
                *out += &self.mean;
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightVector {
        let mut z = DVector::zeros(self.dim());
        let mut out = DVector::zeros(self.dim());
        self.sample_into(rng, &mut z, &mut out);
        WeightVector::from(out)
    }
}

/// One draw from `N(w_mean, sigma^2 B^-1)`. With `sigma == 0` this is
/// exactly the posterior mean.
pub fn sample_weights<R: Rng + ?Sized>(
    posterior: &PosteriorState,
    rng: &mut R,
) -> Result<WeightVector> {
    Ok(posterior.sampler()?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_features(i: usize) -> SparseFeatures {
        SparseFeatures::from_coords(vec![i])
    }

    #[test]
    fn single_unit_update_matches_closed_form() {
        // B = I, one observation on basis coordinate 2 with reward 1:
        // B[2,2] = 2, w_mean[2] = 1/2
        let mut p = PosteriorState::new(4, 1.0);
        p.update(&unit_features(2), true);
        assert_eq!(p.b[(2, 2)], 2.0);
        assert_abs_diff_eq!(p.w_mean[2], 0.5, epsilon = 1e-15);
        assert_eq!(p.update_count(), 1);
        for i in 0..4 {
            if i != 2 {
                assert_eq!(p.w_mean[i], 0.0);
            }
        }
    }

    #[test]
    fn zero_reward_leaves_f_unchanged_but_grows_b() {
        let mut p = PosteriorState::new(3, 1.0);
        let x = SparseFeatures::from_coords(vec![0, 1]);
        p.update(&x, false);
        assert_eq!(p.f.iter().copied().sum::<f64>(), 0.0);
        assert_eq!(p.b[(0, 0)], 2.0);
        assert_eq!(p.b[(0, 1)], 1.0);
        assert_eq!(p.b[(1, 0)], 1.0);
    }

    #[test]
    fn b_stays_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = PosteriorState::new(8, 1.0);
        for _ in 0..300 {
            let k = rng.random_range(1..4);
            let mut coords: Vec<usize> = (0..8).collect();
            // random subset of size k
            for i in 0..k {
                let j = rng.random_range(i..8);
                coords.swap(i, j);
            }
            coords.truncate(k);
            coords.sort_unstable();
            p.update(&SparseFeatures::from_coords(coords), rng.random_bool(0.5));
        }
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(p.b[(i, j)], p.b[(j, i)]);
                assert_eq!(p.b_inv[(i, j)], p.b_inv[(j, i)]);
            }
        }
    }

    #[test]
    fn maintained_mean_matches_fresh_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = PosteriorState::with_recompute_interval(10, 1.0, 10_000);
        for _ in 0..2000 {
            let a = rng.random_range(0..10);
            let b = rng.random_range(0..10);
            let mut coords = vec![0, a, b];
            coords.sort_unstable();
            coords.dedup();
            p.update(&SparseFeatures::from_coords(coords), rng.random_bool(0.3));
        }
        assert!(p.mean_consistency() < 1e-8, "drift {}", p.mean_consistency());
        assert!(p.inverse_drift() < 1e-8, "inverse drift {}", p.inverse_drift());
    }

    #[test]
    fn sigma_zero_sample_is_exactly_the_mean() {
        let mut p = PosteriorState::new(5, 0.0);
        p.update(&unit_features(1), true);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = sample_weights(&p, &mut rng).unwrap();
        assert_eq!(w.as_slice(), p.w_mean.as_slice());
    }

    #[test]
    fn fresh_posterior_samples_have_unit_variance() {
        let p = PosteriorState::new(6, 1.0);
        let sampler = p.sampler().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut sums = vec![0.0; 6];
        let mut sq = vec![0.0; 6];
        for _ in 0..n {
            let w = sampler.sample(&mut rng);
            for (i, v) in w.as_slice().iter().enumerate() {
                sums[i] += v;
                sq[i] += v * v;
            }
        }
        for i in 0..6 {
            let mean = sums[i] / n as f64;
            let var = sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.05, "coord {i} mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "coord {i} variance {var}");
        }
    }

    #[test]
    fn sample_covariance_tracks_maintained_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 4;
        let mut p = PosteriorState::new(dim, 1.0);
        for _ in 0..200 {
            let a = rng.random_range(0..dim);
            let b = rng.random_range(0..dim);
            let mut coords = vec![a, b];
            coords.sort_unstable();
            coords.dedup();
            p.update(&SparseFeatures::from_coords(coords), rng.random_bool(0.4));
        }
        let sampler = p.sampler().unwrap();
        let n = 40_000;
        let mut mean = DVector::<f64>::zeros(dim);
        let mut second = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..n {
            let w = sampler.sample(&mut rng);
            let v = DVector::from_column_slice(w.as_slice());
            mean += &v;
            second.ger(1.0, &v, &v, 1.0);
        }
        mean /= n as f64;
        second /= n as f64;
        let cov = second - &mean * mean.transpose();
        for i in 0..dim {
            for j in 0..dim {
                let expect = p.b_inv[(i, j)];
                assert!(
                    (cov[(i, j)] - expect).abs() < 0.02,
                    "cov[{i},{j}] = {} expected {expect}",
                    cov[(i, j)]
                );
            }
        }
    }

    #[test]
    fn posterior_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = PosteriorState::new(6, 1.0);
        let mut last = p.covariance_trace();
        for _ in 0..100 {
            let a = rng.random_range(0..6);
            p.update(&SparseFeatures::from_coords(vec![a]), rng.random_bool(0.5));
            let now = p.covariance_trace();
            assert!(now <= last + 1e-12, "trace grew: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn ridge_estimate_improves_with_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 6;
        let w_star: Vec<f64> = vec![0.05, 0.1, 0.2, 0.05, 0.15, 0.1];
        let mut p = PosteriorState::new(dim, 1.0);
        let err_at = |p: &PosteriorState| -> f64 {
            p.w_mean
                .iter()
                .zip(&w_star)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max)
        };
        let mut err_50 = 0.0;
        for t in 0..500 {
            let a = rng.random_range(1..dim);
            let coords = vec![0, a];
            let p_true: f64 = coords.iter().map(|&c| w_star[c]).sum();
            let clicked = rng.random_bool(p_true.clamp(0.0, 1.0));
            p.update(&SparseFeatures::from_coords(coords), clicked);
            if t == 49 {
                err_50 = err_at(&p);
            }
        }
        let err_500 = err_at(&p);
        assert!(
            err_500 < err_50,
            "error should shrink: after 50 = {err_50}, after 500 = {err_500}"
        );
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut p = PosteriorState::new(5, 0.7);
        for _ in 0..50 {
            let a = rng.random_range(0..5);
            p.update(&SparseFeatures::from_coords(vec![0, a]), rng.random_bool(0.5));
        }
        let mut buf = Vec::new();
        p.save(&mut buf).unwrap();
        let loaded = PosteriorState::load(std::io::BufReader::new(buf.as_slice())).unwrap();
        assert_eq!(loaded.dim(), 5);
        assert_eq!(loaded.sigma(), 0.7);
        assert_eq!(loaded.update_count(), 50);
        assert_eq!(loaded.b.as_slice(), p.b.as_slice());
        assert_eq!(loaded.f.as_slice(), p.f.as_slice());
        assert!(loaded.mean_consistency() < 1e-12);
    }

    #[test]
    fn checkpoint_rejects_bad_header() {
        let text = "NOT-A-CHECKPOINT\nk 2\n";
        let err = PosteriorState::load(std::io::BufReader::new(text.as_bytes())).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
