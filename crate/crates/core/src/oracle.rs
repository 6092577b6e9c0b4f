//! Exact finite-state Markov oracles.
//!
//! Three generator builds share one sparse representation and one
//! uniformized matrix exponential:
//!
//! - the full open-boundary chain on all 2^L occupancy masks of `[0, L)`;
//! - the closed n-particle sector (no reservoir, particle number conserved);
//! - the particle-count ladder: sectors `0..=n_max` with reservoir coupling,
//!   which is exact whenever `n_max = L` or `beta = 0` (with `beta = 0`
//!   probability only flows up the ladder, so low sectors never miss mass).
//!
//! Everything downstream treats these as ground truth.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, Lu};
use crate::model::{ConfigSpace, Configuration, LatticeTruncation, Rates};

/// Largest full-chain window: 2^16 states.
pub const MAX_FULL_CHAIN_L: usize = 16;

/// Sparse rate matrix stored by source column: `cols[y]` lists `(x, rate)`
/// for transitions y -> x, and `diag[y] = -(sum of outflow rates)`, so that
/// columns sum to zero (or less, when a ladder top has been made absorbing).
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    dim: usize,
    cols: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

impl SparseGenerator {
    fn new(dim: usize) -> Self {
        SparseGenerator { dim, cols: vec![Vec::new(); dim], diag: vec![0.0; dim] }
    }

    /// Records the transition y -> x at the given rate and its diagonal loss.
    fn add_move(&mut self, y: usize, x: usize, rate: f64) {
        if rate == 0.0 {
            return;
        }
        self.cols[y].push((x as u32, rate));
        self.diag[y] -= rate;
    }

    /// Pure loss from state y (used for an absorbing ladder top).
    fn add_loss(&mut self, y: usize, rate: f64) {
        self.diag[y] -= rate;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    /// out = Q v.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = v.iter().zip(self.diag.iter()).map(|(a, d)| a * d).collect();
        for (y, col) in self.cols.iter().enumerate() {
            let vy = v[y];
            if vy != 0.0 {
                for &(x, rate) in col {
                    out[x as usize] += rate * vy;
                }
            }
        }
        out
    }

    /// out = Q^T w.
    pub fn matvec_transpose(&self, w: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = w.iter().zip(self.diag.iter()).map(|(a, d)| a * d).collect();
        for (y, col) in self.cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(x, rate) in col {
                acc += rate * w[x as usize];
            }
            out[y] += acc;
        }
        out
    }

    /// e^{tQ} v by uniformization: with lambda bounding the exit rates,
    /// e^{tQ} = e^{-lambda t} sum_k (lambda t)^k / k! (I + Q/lambda)^k.
    /// The Poisson tail is truncated below 1e-13, which keeps positivity
    /// and gives a computable error bound. Long horizons are split into
    /// substeps so the series never needs more than a few hundred terms.
    pub fn evolve(&self, v: &[f64], t: f64) -> Result<Vec<f64>> {
        self.evolve_impl(v, t, false)
    }

    /// e^{tQ^T} w, same series applied to the transpose.
    pub fn evolve_transpose(&self, w: &[f64], t: f64) -> Result<Vec<f64>> {
        self.evolve_impl(w, t, true)
    }

    fn evolve_impl(&self, v: &[f64], t: f64, transpose: bool) -> Result<Vec<f64>> {
        assert_eq!(v.len(), self.dim);
        if t < 0.0 {
            return Err(Error::Domain("evolution time must be nonnegative".into()));
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        let lambda = self.diag.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-300);
        let substeps = ((lambda * t) / 400.0).ceil().max(1.0) as usize;
        let dt = t / substeps as f64;
        let mut state = v.to_vec();
        for _ in 0..substeps {
            state = self.evolve_step(&state, dt, lambda, transpose)?;
        }
        Ok(state)
    }

    fn evolve_step(&self, v: &[f64], t: f64, lambda: f64, transpose: bool) -> Result<Vec<f64>> {
        let lt = lambda * t;
        let mut weight = (-lt).exp();
        let mut cumulative = weight;
        let mut term = v.to_vec();
        let mut acc: Vec<f64> = term.iter().map(|x| x * weight).collect();
        let k_cap = (lt + 80.0 * (lt + 10.0).sqrt() + 200.0) as usize;
        for k in 1..=k_cap {
            // term <- (I + Q/lambda) term
            let qv = if transpose { self.matvec_transpose(&term) } else { self.matvec(&term) };
            for (tv, qv) in term.iter_mut().zip(qv.iter()) {
                *tv += qv / lambda;
            }
            weight *= lt / k as f64;
            cumulative += weight;
            for (a, tv) in acc.iter_mut().zip(term.iter()) {
                *a += weight * tv;
            }
            if 1.0 - cumulative < 1e-13 && k as f64 > lt {
                return Ok(acc);
            }
        }
        Err(Error::Accuracy(format!(
            "uniformization series did not converge within {k_cap} terms (lambda t = {lt:.2})"
        )))
    }

    /// Dense (s I - Q)^{-1}; the ground-truth Laplace transform of the
    /// semigroup kernel on this finite state space.
    pub fn resolvent(&self, s: Complex64) -> Result<CMat> {
        if self.dim > 4096 {
            return Err(Error::Capacity(format!(
                "dense resolvent capped at dimension 4096, got {}",
                self.dim
            )));
        }
        let mut m = CMat::zeros(self.dim, self.dim);
        for y in 0..self.dim {
            m[(y, y)] = s - Complex64::new(self.diag[y], 0.0);
            for &(x, rate) in &self.cols[y] {
                m[(x as usize, y)] -= Complex64::new(rate, 0.0);
            }
        }
        Ok(Lu::factor(m)?.inverse())
    }

    /// Applies (s I - Q)^{-1} to a single right-hand side.
    pub fn resolvent_apply(&self, s: Complex64, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.dim > 8192 {
            return Err(Error::Capacity(format!(
                "dense resolvent solve capped at dimension 8192, got {}",
                self.dim
            )));
        }
        let mut m = CMat::zeros(self.dim, self.dim);
        for y in 0..self.dim {
            m[(y, y)] = s - Complex64::new(self.diag[y], 0.0);
            for &(x, rate) in &self.cols[y] {
                m[(x as usize, y)] -= Complex64::new(rate, 0.0);
            }
        }
        Ok(Lu::factor(m)?.solve_vec(rhs))
    }
}

/// Full open-boundary generator on the 2^L occupancy masks of `[0, L)`.
/// State index = occupancy bitmask, site 0 = least significant bit. The
/// right edge is closed: no hop out of site L-1.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    l: usize,
    rates: Rates,
    gen: SparseGenerator,
}

pub fn build_generator(rates: &Rates, trunc: LatticeTruncation) -> Result<GeneratorMatrix> {
    let l = trunc.l();
    if l > MAX_FULL_CHAIN_L {
        return Err(Error::Capacity(format!(
            "full-chain oracle capped at L = {MAX_FULL_CHAIN_L}, got {l}"
        )));
    }
    let dim = 1usize << l;
    let (p, q, alpha, beta) = (rates.p(), rates.q(), rates.alpha(), rates.beta());
    let mut gen = SparseGenerator::new(dim);
    for mask in 0..dim {
        let m = mask as u64;
        if m & 1 == 0 {
            gen.add_move(mask, mask | 1, alpha);
        } else {
            gen.add_move(mask, mask & !1, beta);
        }
        for k in 0..l.saturating_sub(1) {
            let here = m >> k & 1;
            let right = m >> (k + 1) & 1;
            if here == 1 && right == 0 {
                gen.add_move(mask, mask ^ (0b11 << k), p);
            } else if here == 0 && right == 1 {
                gen.add_move(mask, mask ^ (0b11 << k), q);
            }
        }
    }
    Ok(GeneratorMatrix { l, rates: *rates, gen })
}

impl GeneratorMatrix {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn rates(&self) -> &Rates {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.gen.dim()
    }

    pub fn sparse(&self) -> &SparseGenerator {
        &self.gen
    }

    pub fn evolve(&self, initial: &[f64], t: f64) -> Result<Vec<f64>> {
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "initial distribution sums to {total}, expected 1"
            )));
        }
        self.gen.evolve(initial, t)
    }

    /// Distribution concentrated on one configuration.
    pub fn delta_distribution(&self, config: &Configuration) -> Result<Vec<f64>> {
        let mask = config.bitmask()? as usize;
        if mask >= self.dim() {
            return Err(Error::Domain(format!(
                "configuration {config} does not fit in window [0,{})",
                self.l
            )));
        }
        let mut v = vec![0.0; self.dim()];
        v[mask] = 1.0;
        Ok(v)
    }

    /// Product Bernoulli(rho) distribution over the window.
    pub fn bernoulli_distribution(&self, rho: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Domain(format!("density must lie in [0,1], got {rho}")));
        }
        let mut v = vec![0.0; self.dim()];
        for (mask, slot) in v.iter_mut().enumerate() {
            let k = (mask as u64).count_ones() as i32;
            *slot = rho.powi(k) * (1.0 - rho).powi(self.l as i32 - k);
        }
        Ok(v)
    }
}

/// Closed n-particle generator (no reservoir terms) on a configuration
/// space: right hops at rate p where allowed, left hops at rate q, with the
/// left wall at site 0 and a closed right edge.
#[derive(Debug, Clone)]
pub struct SectorGenerator {
    space: ConfigSpace,
    gen: SparseGenerator,
}

pub fn build_sector_generator(rates: &Rates, space: &ConfigSpace) -> SectorGenerator {
    let l = space.l();
    let (p, q) = (rates.p(), rates.q());
    let mut gen = SparseGenerator::new(space.len());
    let mut scratch: Vec<usize> = Vec::new();
    for (iy, y) in space.configs().iter().enumerate() {
        let sites = y.sites();
        for (k, &s) in sites.iter().enumerate() {
            // Right hop s -> s+1.
            if s + 1 < l && (k + 1 >= sites.len() || sites[k + 1] != s + 1) {
                scratch.clear();
                scratch.extend_from_slice(sites);
                scratch[k] = s + 1;
                let target = space
                    .index_of(&Configuration::new(scratch.clone()).unwrap())
                    .expect("hop target stays in the window");
                gen.add_move(iy, target, p);
            }
            // Left hop s -> s-1 (forbidden from the origin).
            if s >= 1 && (k == 0 || sites[k - 1] != s - 1) {
                scratch.clear();
                scratch.extend_from_slice(sites);
                scratch[k] = s - 1;
                let target = space
                    .index_of(&Configuration::new(scratch.clone()).unwrap())
                    .expect("hop target stays in the window");
                gen.add_move(iy, target, q);
            }
        }
    }
    SectorGenerator { space: space.clone(), gen }
}

impl SectorGenerator {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn sparse(&self) -> &SparseGenerator {
        &self.gen
    }

    /// Transition probabilities p(., y; t) as a vector over the space.
    pub fn evolve_delta(&self, y: &Configuration, t: f64) -> Result<Vec<f64>> {
        let iy = self
            .space
            .index_of(y)
            .ok_or_else(|| Error::Domain(format!("configuration {y} outside the window")))?;
        let mut v = vec![0.0; self.space.len()];
        v[iy] = 1.0;
        self.gen.evolve(&v, t)
    }

    /// The Laplace-transform kernel matrix (s I - Q_n)^{-1}; its (x, y)
    /// entry is the transform of p(x, y; t) on this window.
    pub fn laplace_kernel(&self, s: Complex64) -> Result<CMat> {
        self.gen.resolvent(s)
    }
}

/// Particle-count ladder: sectors n = 0..=n_max stacked, with injection
/// coupling sector n to n+1 and ejection coupling n to n-1. When the top
/// sector is below L and beta > 0 the ladder is lossy at the top and exact
/// only for quantities that never see the cut; `is_exact` reports the safe
/// cases.
#[derive(Debug, Clone)]
pub struct LadderGenerator {
    spaces: Vec<ConfigSpace>,
    offsets: Vec<usize>,
    rates: Rates,
    gen: SparseGenerator,
    exact: bool,
}

pub fn build_ladder_generator(
    rates: &Rates,
    trunc: LatticeTruncation,
    n_max: usize,
) -> Result<LadderGenerator> {
    let l = trunc.l();
    if n_max > l {
        return Err(Error::Domain(format!(
            "ladder cannot hold {n_max} particles in {l} sites"
        )));
    }
    let spaces: Vec<ConfigSpace> = (0..=n_max).map(|n| ConfigSpace::new(trunc, n)).collect();
    let mut offsets = Vec::with_capacity(spaces.len() + 1);
    let mut acc = 0;
    for sp in &spaces {
        offsets.push(acc);
        acc += sp.len();
    }
    offsets.push(acc);
    let dim = acc;
    if dim > 2_000_000 {
        return Err(Error::Capacity(format!("ladder state space too large: {dim}")));
    }
    let (p, q, alpha, beta) = (rates.p(), rates.q(), rates.alpha(), rates.beta());
    let mut gen = SparseGenerator::new(dim);
    let mut scratch: Vec<usize> = Vec::new();
    for (n, space) in spaces.iter().enumerate() {
        let off = offsets[n];
        for (iy, y) in space.configs().iter().enumerate() {
            let src = off + iy;
            let sites = y.sites();
            // Bulk hops, identical to the closed sector.
            for (k, &s) in sites.iter().enumerate() {
                if s + 1 < l && (k + 1 >= sites.len() || sites[k + 1] != s + 1) {
                    scratch.clear();
                    scratch.extend_from_slice(sites);
                    scratch[k] = s + 1;
                    let target =
                        space.index_of(&Configuration::new(scratch.clone()).unwrap()).unwrap();
                    gen.add_move(src, off + target, p);
                }
                if s >= 1 && (k == 0 || sites[k - 1] != s - 1) {
                    scratch.clear();
                    scratch.extend_from_slice(sites);
                    scratch[k] = s - 1;
                    let target =
                        space.index_of(&Configuration::new(scratch.clone()).unwrap()).unwrap();
                    gen.add_move(src, off + target, q);
                }
            }
            // Injection when the origin is empty.
            if !y.starts_at_zero() {
                if n + 1 <= n_max {
                    let up = y.with_zero_prepended().unwrap();
                    let target = spaces[n + 1].index_of(&up).unwrap();
                    gen.add_move(src, offsets[n + 1] + target, alpha);
                } else {
                    // Absorbing top: mass leaves the tracked ladder.
                    gen.add_loss(src, alpha);
                }
            }
            // Ejection when the origin is occupied.
            if y.starts_at_zero() {
                if n > 0 {
                    let down = y.tail();
                    let target = spaces[n - 1].index_of(&down).unwrap();
                    gen.add_move(src, offsets[n - 1] + target, beta);
                }
                // n = 0 cannot start at zero (empty config), nothing to do.
            }
        }
    }
    let exact = n_max == l || beta == 0.0;
    Ok(LadderGenerator { spaces, offsets, rates: *rates, gen, exact })
}

impl LadderGenerator {
    pub fn spaces(&self) -> &[ConfigSpace] {
        &self.spaces
    }

    pub fn n_max(&self) -> usize {
        self.spaces.len() - 1
    }

    pub fn rates(&self) -> &Rates {
        &self.rates
    }

    pub fn dim(&self) -> usize {
        self.gen.dim()
    }

    pub fn sparse(&self) -> &SparseGenerator {
        &self.gen
    }

    /// True when the tracked sectors evolve exactly (no contamination from
    /// the cut top): either the ladder reaches n = L or beta = 0 so that
    /// probability only flows upward between sectors.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Flat index of a configuration in sector n.
    pub fn flat_index(&self, n: usize, config: &Configuration) -> Result<usize> {
        let idx = self.spaces[n]
            .index_of(config)
            .ok_or_else(|| Error::Domain(format!("configuration {config} outside the window")))?;
        Ok(self.offsets[n] + idx)
    }

    /// Evolves a delta initial condition in sector k.
    pub fn evolve_delta(&self, k: usize, y: &Configuration, t: f64) -> Result<LadderDistribution> {
        let mut v = vec![0.0; self.dim()];
        v[self.flat_index(k, y)?] = 1.0;
        Ok(LadderDistribution { values: self.gen.evolve(&v, t)?, offsets: self.offsets.clone() })
    }

    pub fn evolve(&self, initial: &LadderDistribution, t: f64) -> Result<LadderDistribution> {
        Ok(LadderDistribution {
            values: self.gen.evolve(&initial.values, t)?,
            offsets: self.offsets.clone(),
        })
    }
}

/// A distribution (or sub-distribution) over the ladder's stacked sectors.
#[derive(Debug, Clone)]
pub struct LadderDistribution {
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl LadderDistribution {
    pub fn sector(&self, n: usize) -> &[f64] {
        &self.values[self.offsets[n]..self.offsets[n + 1]]
    }

    pub fn sector_total(&self, n: usize) -> f64 {
        self.sector(n).iter().sum()
    }

    pub fn n_sectors(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Exact observables extracted from a full-chain distribution.
pub mod observables {
    use super::*;

    /// P_n totals: probability of exactly n particles, n = 0..=L.
    pub fn count_probabilities(dist: &[f64], l: usize) -> Vec<f64> {
        let mut out = vec![0.0; l + 1];
        for (mask, &pr) in dist.iter().enumerate() {
            out[(mask as u64).count_ones() as usize] += pr;
        }
        out
    }

    /// P_n(x): probabilities per n-particle configuration, aligned with the
    /// lexicographic order of `ConfigSpace::new(trunc, n)`.
    pub fn sector_probabilities(dist: &[f64], space: &ConfigSpace) -> Vec<f64> {
        let n = space.n();
        let mut out = vec![0.0; space.len()];
        for (mask, &pr) in dist.iter().enumerate() {
            if (mask as u64).count_ones() as usize == n && pr != 0.0 {
                let c = Configuration::from_bitmask(mask as u64);
                let idx = space.index_of(&c).expect("mask fits the window");
                out[idx] += pr;
            }
        }
        out
    }

    /// Correlation Psi_n(x) = probability that all sites of x are occupied,
    /// for every x in the space.
    pub fn correlations(dist: &[f64], space: &ConfigSpace) -> Vec<f64> {
        let mut out = vec![0.0; space.len()];
        let masks: Vec<u64> = space
            .configs()
            .iter()
            .map(|c| c.bitmask().expect("window fits in 64 bits"))
            .collect();
        for (state, &pr) in dist.iter().enumerate() {
            if pr == 0.0 {
                continue;
            }
            let sm = state as u64;
            for (i, &cm) in masks.iter().enumerate() {
                if sm & cm == cm {
                    out[i] += pr;
                }
            }
        }
        out
    }

    /// Mean and second moment of Delta N(t) = N(t) - N(0) for a
    /// deterministic initial particle count.
    pub fn delta_n_moments(dist: &[f64], n0: usize) -> (f64, f64) {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (mask, &pr) in dist.iter().enumerate() {
            let dn = (mask as u64).count_ones() as f64 - n0 as f64;
            mean += pr * dn;
            second += pr * dn * dn;
        }
        (mean, second)
    }

    /// Mean and second moment of Delta N(t) under a Bernoulli(rho) initial
    /// distribution, averaging over the initial data. The cross term
    /// <N_t N_0> is computed with one adjoint evolution.
    pub fn delta_n_moments_bernoulli(
        gen: &GeneratorMatrix,
        rho: f64,
        t: f64,
    ) -> Result<(f64, f64)> {
        let dim = gen.dim();
        let p0 = gen.bernoulli_distribution(rho)?;
        let count: Vec<f64> = (0..dim).map(|m| (m as u64).count_ones() as f64).collect();

        let dist_t = gen.sparse().evolve(&p0, t)?;
        let e_nt: f64 = dist_t.iter().zip(count.iter()).map(|(p, n)| p * n).sum();
        let e_nt2: f64 = dist_t.iter().zip(count.iter()).map(|(p, n)| p * n * n).sum();
        let e_n0: f64 = p0.iter().zip(count.iter()).map(|(p, n)| p * n).sum();
        let e_n02: f64 = p0.iter().zip(count.iter()).map(|(p, n)| p * n * n).sum();

        // <N_t N_0> = sum_y P0(y) N(y) E[N_t | start y] via w = e^{tQ^T} N.
        let w = gen.sparse().evolve_transpose(&count, t)?;
        let cross: f64 = p0
            .iter()
            .zip(count.iter())
            .zip(w.iter())
            .map(|((p, n), wv)| p * n * wv)
            .sum();

        let mean = e_nt - e_n0;
        let second = e_nt2 - 2.0 * cross + e_n02;
        Ok((mean, second))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trunc(l: usize) -> LatticeTruncation {
        LatticeTruncation::new(l).unwrap()
    }

    #[test]
    fn one_site_chain_is_two_state() {
        let rates = Rates::new(0.5, 0.5, 0.3, 0.7).unwrap();
        let gen = build_generator(&rates, trunc(1)).unwrap();
        assert_eq!(gen.dim(), 2);
        // Q = [[-a, b], [a, -b]] in (target, source) layout.
        let q = gen.sparse();
        assert_abs_diff_eq!(q.diag()[0], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(q.diag()[1], -0.7, epsilon = 1e-15);
        assert_eq!(q.cols[0], vec![(1u32, 0.3)]);
        assert_eq!(q.cols[1], vec![(0u32, 0.7)]);
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let rates = Rates::new(0.62, 0.38, 0.45, 0.2).unwrap();
        let gen = build_generator(&rates, trunc(6)).unwrap();
        let q = gen.sparse();
        for y in 0..q.dim() {
            let outflow: f64 = q.cols[y].iter().map(|&(_, r)| r).sum();
            assert_abs_diff_eq!(outflow + q.diag()[y], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn closed_chain_conserves_count_blocks() {
        let rates = Rates::closed(0.7).unwrap();
        let gen = build_generator(&rates, trunc(6)).unwrap();
        let c = Configuration::new(vec![1, 3]).unwrap();
        let v0 = gen.delta_distribution(&c).unwrap();
        let v1 = gen.evolve(&v0, 1.7).unwrap();
        let blocks = observables::count_probabilities(&v1, 6);
        assert_abs_diff_eq!(blocks[2], 1.0, epsilon = 1e-12);
        for (n, b) in blocks.iter().enumerate() {
            if n != 2 {
                assert!(b.abs() < 1e-12, "mass leaked into block {n}: {b}");
            }
        }
    }

    #[test]
    fn two_state_occupation_closed_form() {
        // L = 1, start empty: P(occupied at t) = a/(a+b) (1 - e^{-(a+b)t}).
        let (a, b, t) = (0.4, 0.9, 0.8);
        let rates = Rates::new(0.5, 0.5, a, b).unwrap();
        let gen = build_generator(&rates, trunc(1)).unwrap();
        let out = gen.evolve(&[1.0, 0.0], t).unwrap();
        let expect = a / (a + b) * (1.0 - (-(a + b) * t).exp());
        assert_abs_diff_eq!(out[1], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(out.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn evolve_preserves_mass_and_positivity() {
        let rates = Rates::new(0.3, 0.7, 0.5, 0.25).unwrap();
        let gen = build_generator(&rates, trunc(7)).unwrap();
        let v0 = gen.bernoulli_distribution(0.35).unwrap();
        let v1 = gen.evolve(&v0, 2.3).unwrap();
        assert_abs_diff_eq!(v1.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(v1.iter().all(|&x| x >= -1e-14));
    }

    #[test]
    fn ssep_bernoulli_stationarity() {
        // rho = alpha / (alpha + beta) is invariant for the symmetric chain.
        let rates = Rates::ssep(0.4, 0.6).unwrap();
        let gen = build_generator(&rates, trunc(6)).unwrap();
        let rho = 0.4 / (0.4 + 0.6);
        let v0 = gen.bernoulli_distribution(rho).unwrap();
        let v1 = gen.evolve(&v0, 1.0).unwrap();
        let dev = v0
            .iter()
            .zip(v1.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(dev < 1e-10, "stationary distribution moved by {dev:.3e}");
    }

    #[test]
    fn sector_generator_matches_full_chain_block() {
        // With alpha = beta = 0 the full chain restricted to a count block
        // is the sector generator.
        let rates = Rates::closed(0.55).unwrap();
        let full = build_generator(&rates, trunc(5)).unwrap();
        let space = ConfigSpace::new(trunc(5), 2);
        let sector = build_sector_generator(&rates, &space);
        let y = Configuration::new(vec![0, 2]).unwrap();
        let t = 0.9;
        let from_full = {
            let v0 = full.delta_distribution(&y).unwrap();
            let v1 = full.evolve(&v0, t).unwrap();
            observables::sector_probabilities(&v1, &space)
        };
        let from_sector = sector.evolve_delta(&y, t).unwrap();
        for (a, b) in from_full.iter().zip(from_sector.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ladder_matches_full_chain() {
        // n_max = L makes the ladder the full chain reorganized by count.
        let rates = Rates::new(0.5, 0.5, 0.4, 0.3).unwrap();
        let l = 5;
        let full = build_generator(&rates, trunc(l)).unwrap();
        let ladder = build_ladder_generator(&rates, trunc(l), l).unwrap();
        assert!(ladder.is_exact());
        let t = 1.3;
        let v0 = full.delta_distribution(&Configuration::empty()).unwrap();
        let v1 = full.evolve(&v0, t).unwrap();
        let ld = ladder.evolve_delta(0, &Configuration::empty(), t).unwrap();
        for n in 0..=l {
            let space = ConfigSpace::new(trunc(l), n);
            let block = observables::sector_probabilities(&v1, &space);
            for (i, (a, b)) in block.iter().zip(ld.sector(n).iter()).enumerate() {
                assert_abs_diff_eq!(a, b, epsilon = 1e-11);
                let _ = i;
            }
        }
        assert_abs_diff_eq!(ld.total(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn truncated_ladder_is_exact_for_beta_zero() {
        // With beta = 0, sectors below the cut never miss mass.
        let rates = Rates::tasep(1.0, 0.0).unwrap();
        let l = 8;
        let full = build_generator(&rates, trunc(l)).unwrap();
        let ladder = build_ladder_generator(&rates, trunc(l), 3).unwrap();
        assert!(ladder.is_exact());
        let t = 2.0;
        let v0 = full.delta_distribution(&Configuration::empty()).unwrap();
        let v1 = full.evolve(&v0, t).unwrap();
        let counts = observables::count_probabilities(&v1, l);
        let ld = ladder.evolve_delta(0, &Configuration::empty(), t).unwrap();
        for n in 0..=3 {
            assert_abs_diff_eq!(ld.sector_total(n), counts[n], epsilon = 1e-11);
        }
    }

    #[test]
    fn correlations_consistent_with_sector_probabilities() {
        let rates = Rates::ssep(0.7, 0.2).unwrap();
        let gen = build_generator(&rates, trunc(5)).unwrap();
        let v0 = gen.delta_distribution(&Configuration::empty()).unwrap();
        let v1 = gen.evolve(&v0, 0.8).unwrap();
        // Psi_1(x) = sum over all states containing x.
        let space1 = ConfigSpace::new(trunc(5), 1);
        let psi = observables::correlations(&v1, &space1);
        for (i, c) in space1.configs().iter().enumerate() {
            let site = c.site(0);
            let direct: f64 = v1
                .iter()
                .enumerate()
                .filter(|(m, _)| m >> site & 1 == 1)
                .map(|(_, p)| p)
                .sum();
            assert_abs_diff_eq!(psi[i], direct, epsilon = 1e-14);
        }
        // Total mass over sector probabilities is 1.
        let mut total = 0.0;
        for n in 0..=5 {
            let sp = ConfigSpace::new(trunc(5), n);
            total += observables::sector_probabilities(&v1, &sp).iter().sum::<f64>();
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn resolvent_columns_sum_to_inverse_s() {
        // Columns of (sI - Q)^{-1} sum to 1/s when Q columns sum to zero.
        let rates = Rates::closed(0.5).unwrap();
        let space = ConfigSpace::new(trunc(6), 2);
        let sector = build_sector_generator(&rates, &space);
        let s = Complex64::new(2.0, 0.5);
        let kernel = sector.laplace_kernel(s).unwrap();
        for j in 0..kernel.cols() {
            let mut sum = Complex64::new(0.0, 0.0);
            for i in 0..kernel.rows() {
                sum += kernel[(i, j)];
            }
            assert!((sum - 1.0 / s).norm() < 1e-12);
        }
    }
}
