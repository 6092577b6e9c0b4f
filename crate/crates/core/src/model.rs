//! Core domain types: hop/boundary rates, particle configurations, signed
//! permutations, quadrature parameters, and the finite lattice window shared
//! by the exact solvers and oracles.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hard cap on the signed-permutation group order; 2^n * n! grows too fast
/// beyond this to be useful.
pub const MAX_SIGNED_PERMUTATION_N: usize = 6;

/// Hop probabilities and reservoir rates defining the process.
///
/// `p` is the right-hop probability, `q = 1 - p` the left-hop probability;
/// `alpha` is the injection rate into site 0 when it is empty and `beta`
/// the ejection rate from site 0 when it is occupied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    p: f64,
    q: f64,
    alpha: f64,
    beta: f64,
}

impl Rates {
    /// Builds a rate set, normalizing `p + q` to 1 when the defect is at
    /// most `1e-12` and rejecting anything further off.
    pub fn new(p: f64, q: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(p.is_finite() && q.is_finite() && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Domain("rates must be finite".into()));
        }
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "hop probabilities must lie in [0,1], got p={p}, q={q}"
            )));
        }
        if (p + q - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "p + q must equal 1 (defect {:.3e})",
                p + q - 1.0
            )));
        }
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::Domain(format!(
                "reservoir rates must be nonnegative, got alpha={alpha}, beta={beta}"
            )));
        }
        // Store q = 1 - p exactly so downstream identities hold to machine
        // precision.
        Ok(Rates { p, q: 1.0 - p, alpha, beta })
    }

    /// Closed process: hop rates only, no reservoir.
    pub fn closed(p: f64) -> Result<Self> {
        Self::new(p, 1.0 - p, 0.0, 0.0)
    }

    /// Symmetric hopping (p = q = 1/2) with the given reservoir rates.
    pub fn ssep(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(0.5, 0.5, alpha, beta)
    }

    /// Totally asymmetric hopping (p = 1) with the given reservoir rates.
    pub fn tasep(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(1.0, 0.0, alpha, beta)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Returns a copy with the reservoir rates replaced.
    pub fn with_reservoir(&self, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(self.p, self.q, alpha, beta)
    }

    /// The hop-rate ratio p/q. Undefined at q = 0.
    pub fn tau(&self) -> Result<f64> {
        if self.q == 0.0 {
            Err(Error::Domain("tau = p/q is undefined at q = 0".into()))
        } else {
            Ok(self.p / self.q)
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.p == self.q
    }

    pub fn is_totally_asymmetric(&self) -> bool {
        self.q == 0.0
    }
}

/// A strictly increasing tuple of occupied sites on the nonnegative
/// integers. The empty configuration is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    sites: Vec<usize>,
}

impl Configuration {
    pub fn new(sites: Vec<usize>) -> Result<Self> {
        for w in sites.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Domain(format!(
                    "configuration sites must strictly increase, got {:?}",
                    sites
                )));
            }
        }
        Ok(Configuration { sites })
    }

    pub fn empty() -> Self {
        Configuration { sites: Vec::new() }
    }

    /// Single particle at `y`.
    pub fn single(y: usize) -> Self {
        Configuration { sites: vec![y] }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> usize {
        self.sites[i]
    }

    /// Largest occupied site, if any.
    pub fn max_site(&self) -> Option<usize> {
        self.sites.last().copied()
    }

    /// True when the leftmost particle sits at the origin.
    pub fn starts_at_zero(&self) -> bool {
        self.sites.first() == Some(&0)
    }

    /// Occupancy bitmask with site 0 as the least significant bit.
    pub fn bitmask(&self) -> Result<u64> {
        let mut m = 0u64;
        for &s in &self.sites {
            if s >= 64 {
                return Err(Error::Capacity(format!("site {s} does not fit a 64-bit mask")));
            }
            m |= 1 << s;
        }
        Ok(m)
    }

    /// Configuration from a bitmask (site 0 = least significant bit).
    pub fn from_bitmask(mut mask: u64) -> Self {
        let mut sites = Vec::with_capacity(mask.count_ones() as usize);
        while mask != 0 {
            let s = mask.trailing_zeros() as usize;
            sites.push(s);
            mask &= mask - 1;
        }
        Configuration { sites }
    }

    /// The configuration with the origin prepended: (0, x1, ..., xn).
    /// Requires all existing sites to be positive.
    pub fn with_zero_prepended(&self) -> Result<Self> {
        if self.starts_at_zero() {
            return Err(Error::Domain("configuration already occupies the origin".into()));
        }
        let mut sites = Vec::with_capacity(self.len() + 1);
        sites.push(0);
        sites.extend_from_slice(&self.sites);
        Ok(Configuration { sites })
    }

    /// The tail (x2, ..., xn); only meaningful when x1 = 0.
    pub fn tail(&self) -> Self {
        Configuration { sites: self.sites[1..].to_vec() }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sites.is_empty() {
            write!(f, "-")
        } else {
            let parts: Vec<String> = self.sites.iter().map(|s| s.to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

/// An element of the hyperoctahedral group B_n in one-line notation:
/// `images[i]` is the (signed) image of i+1, a nonzero integer in
/// [-n, -1] u [1, n], with the absolute values forming a permutation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedPermutation {
    images: Vec<i32>,
}

impl SignedPermutation {
    pub fn new(images: Vec<i32>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            let a = v.unsigned_abs() as usize;
            if v == 0 || a == 0 || a > n {
                return Err(Error::Domain(format!(
                    "signed permutation entries must lie in [-{n},-1] u [1,{n}], got {v}"
                )));
            }
            if seen[a - 1] {
                return Err(Error::Domain(format!(
                    "|images| must be a permutation; {a} repeats"
                )));
            }
            seen[a - 1] = true;
        }
        Ok(SignedPermutation { images })
    }

    pub fn identity(n: usize) -> Self {
        SignedPermutation { images: (1..=n as i32).collect() }
    }

    pub fn n(&self) -> usize {
        self.images.len()
    }

    /// The image sigma(i) for 1-based i.
    pub fn image(&self, i: usize) -> i32 {
        self.images[i - 1]
    }

    pub fn images(&self) -> &[i32] {
        &self.images
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(i, &v)| v == i as i32 + 1)
    }

    /// Position i (1-based) with |sigma(i)| = m.
    pub fn position_of(&self, m: usize) -> usize {
        self.images
            .iter()
            .position(|&v| v.unsigned_abs() as usize == m)
            .expect("valid signed permutation covers every letter")
            + 1
    }

    /// All inversions: pairs (+-sigma(i), sigma(j)) with i < j and
    /// +-sigma(i) > sigma(j), each sign branch checked independently.
    /// The signed indices are returned so that the substitution
    /// xi_{-a} = tau / xi_a can be applied downstream.
    pub fn inversions(&self) -> Vec<(i32, i32)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (si, sj) = (self.images[i], self.images[j]);
                if si > sj {
                    out.push((si, sj));
                }
                if -si > sj {
                    out.push((-si, sj));
                }
            }
        }
        out
    }
}

impl fmt::Display for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.images.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(" "))
    }
}

/// All 2^n * n! signed permutations of {1..n}, in a deterministic order:
/// underlying permutations lexicographically, sign patterns by increasing
/// bitmask within each.
pub fn enumerate_signed_permutations(n: usize) -> Result<Vec<SignedPermutation>> {
    if n > MAX_SIGNED_PERMUTATION_N {
        return Err(Error::Capacity(format!(
            "signed permutation enumeration capped at n = {MAX_SIGNED_PERMUTATION_N}, got {n}"
        )));
    }
    let perms = permutations(n);
    let mut out = Vec::with_capacity((1usize << n) * perms.len());
    for perm in &perms {
        for mask in 0..(1u32 << n) {
            let images: Vec<i32> = perm
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let s = v as i32 + 1;
                    if mask & (1 << i) != 0 {
                        -s
                    } else {
                        s
                    }
                })
                .collect();
            out.push(SignedPermutation { images });
        }
    }
    Ok(out)
}

/// All permutations of {0..n-1} in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    let mut used = vec![false; n];
    fn rec(n: usize, current: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if current.len() == n {
            out.push(current.clone());
            return;
        }
        for v in 0..n {
            if !used[v] {
                used[v] = true;
                current.push(v);
                rec(n, current, used, out);
                current.pop();
                used[v] = false;
            }
        }
    }
    rec(n, &mut current, &mut used, &mut out);
    out
}

/// Binomial coefficient as usize; saturates are not needed at our sizes.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Contour parameters for the signed-permutation integrals: circles with a
/// common center and pairwise distinct radii `base_radius * (1 + a * radius_spread)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub base_radius: f64,
    pub radius_spread: f64,
    pub nodes_per_contour: usize,
    pub center: Complex64,
}

impl QuadratureSpec {
    pub fn new(
        base_radius: f64,
        radius_spread: f64,
        nodes_per_contour: usize,
        center: Complex64,
    ) -> Result<Self> {
        if base_radius <= 0.0 || radius_spread <= 0.0 {
            return Err(Error::Domain(
                "base_radius and radius_spread must be positive (distinct radii required)".into(),
            ));
        }
        if nodes_per_contour < 16 {
            return Err(Error::Domain(format!(
                "nodes_per_contour must be at least 16, got {nodes_per_contour}"
            )));
        }
        Ok(QuadratureSpec { base_radius, radius_spread, nodes_per_contour, center })
    }

    /// Default contours for the given rates: center 1/(2q), base radius
    /// 2 (1 + |1/(2q)|) max(1, tau), so the scattering factor is analytic on
    /// and outside every circle.
    pub fn default_for(rates: &Rates) -> Result<Self> {
        let tau = rates.tau()?;
        let c = 1.0 / (2.0 * rates.q());
        let base = 2.0 * (1.0 + c.abs()) * tau.max(1.0);
        QuadratureSpec::new(base, 0.05, 128, Complex64::new(c, 0.0))
    }

    /// Radius of the a-th contour (1-based).
    pub fn radius(&self, a: usize) -> f64 {
        self.base_radius * (1.0 + a as f64 * self.radius_spread)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes_per_contour = nodes;
        self
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.radius_spread = spread;
        self
    }

    pub fn with_base_radius(mut self, base: f64) -> Self {
        self.base_radius = base;
        self
    }
}

/// Finite lattice window [0, L) that makes the oracle and simulator state
/// spaces finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeTruncation {
    l: usize,
}

impl LatticeTruncation {
    pub fn new(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Domain("lattice window must keep at least one site".into()));
        }
        Ok(LatticeTruncation { l })
    }

    pub fn l(&self) -> usize {
        self.l
    }
}

/// All n-particle configurations inside a window [0, L), enumerated in
/// lexicographic order, with O(1) config-to-index lookup.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    l: usize,
    n: usize,
    configs: Vec<Configuration>,
    index: HashMap<Vec<usize>, usize>,
}

impl ConfigSpace {
    pub fn new(trunc: LatticeTruncation, n: usize) -> Self {
        let l = trunc.l();
        let mut configs = Vec::with_capacity(binomial(l, n));
        let mut current = Vec::with_capacity(n);
        fn rec(l: usize, n: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Configuration>) {
            if current.len() == n {
                out.push(Configuration { sites: current.clone() });
                return;
            }
            let remaining = n - current.len();
            for s in start..=(l - remaining) {
                current.push(s);
                rec(l, n, s + 1, current, out);
                current.pop();
            }
        }
        if n <= l {
            rec(l, n, 0, &mut current, &mut configs);
        }
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.sites.clone(), i))
            .collect();
        ConfigSpace { l, n, configs, index }
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn config(&self, i: usize) -> &Configuration {
        &self.configs[i]
    }

    pub fn configs(&self) -> &[Configuration] {
        &self.configs
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.index.get(c.sites()).copied()
    }

    /// Indices of configurations whose leftmost particle is at the origin.
    pub fn zero_headed(&self) -> Vec<usize> {
        self.configs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_at_zero())
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_normalize_and_reject() {
        let r = Rates::new(0.3, 0.7 + 5e-13, 0.1, 0.2).unwrap();
        assert_eq!(r.p() + r.q(), 1.0);
        assert!(Rates::new(0.3, 0.6, 0.0, 0.0).is_err());
        assert!(Rates::new(0.3, 0.7, -0.1, 0.0).is_err());
        assert!(Rates::new(1.2, -0.2, 0.0, 0.0).is_err());
    }

    #[test]
    fn tau_requires_nonzero_q() {
        let r = Rates::tasep(1.0, 0.0).unwrap();
        assert!(r.tau().is_err());
        let r = Rates::closed(0.6).unwrap();
        assert!((r.tau().unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn configuration_validation() {
        assert!(Configuration::new(vec![0, 3, 7]).is_ok());
        assert!(Configuration::new(vec![3, 3]).is_err());
        assert!(Configuration::new(vec![4, 2]).is_err());
        assert!(Configuration::new(vec![]).is_ok());
    }

    #[test]
    fn configuration_bitmask_round_trip() {
        let c = Configuration::new(vec![0, 2, 5]).unwrap();
        assert_eq!(c.bitmask().unwrap(), 0b100101);
        assert_eq!(Configuration::from_bitmask(0b100101), c);
    }

    #[test]
    fn signed_permutation_validation() {
        assert!(SignedPermutation::new(vec![2, -1]).is_ok());
        assert!(SignedPermutation::new(vec![1, 1]).is_err());
        assert!(SignedPermutation::new(vec![0, 2]).is_err());
        assert!(SignedPermutation::new(vec![3, 1]).is_err());
    }

    #[test]
    fn enumeration_sizes() {
        // 2^n n! for n = 0..5.
        let sizes = [1usize, 2, 8, 48, 384, 3840];
        for (n, &expect) in sizes.iter().enumerate() {
            let all = enumerate_signed_permutations(n).unwrap();
            assert_eq!(all.len(), expect, "n = {n}");
            // No duplicates.
            let set: std::collections::HashSet<Vec<i32>> =
                all.iter().map(|s| s.images().to_vec()).collect();
            assert_eq!(set.len(), expect, "duplicates at n = {n}");
        }
        assert!(enumerate_signed_permutations(7).is_err());
    }

    #[test]
    fn inversion_examples() {
        // Identity has none: +s(i) < s(j) and -s(i) < 0 < s(j).
        let id = SignedPermutation::identity(4);
        assert!(id.inversions().is_empty());
        // (2,1): the single plus-branch inversion.
        let s = SignedPermutation::new(vec![2, 1]).unwrap();
        assert_eq!(s.inversions(), vec![(2, 1)]);
        // (-2,1): the same pair from the minus branch.
        let s = SignedPermutation::new(vec![-2, 1]).unwrap();
        assert_eq!(s.inversions(), vec![(2, 1)]);
        // (1,-2): both branches of (i,j)=(1,2) invert.
        let s = SignedPermutation::new(vec![1, -2]).unwrap();
        assert_eq!(s.inversions(), vec![(1, -2), (-1, -2)]);
    }

    #[test]
    fn config_space_enumeration() {
        let space = ConfigSpace::new(LatticeTruncation::new(5).unwrap(), 2);
        assert_eq!(space.len(), 10);
        assert_eq!(space.config(0).sites(), &[0, 1]);
        assert_eq!(space.config(9).sites(), &[3, 4]);
        let c = Configuration::new(vec![1, 3]).unwrap();
        let i = space.index_of(&c).unwrap();
        assert_eq!(space.config(i), &c);
        // Zero-headed ones are exactly those pairing 0 with 1..4.
        assert_eq!(space.zero_headed().len(), 4);
    }

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(6, 3), 20);
        assert_eq!(binomial(16, 8), 12870);
        assert_eq!(binomial(3, 5), 0);
    }
}
