//! Transition probabilities for the closed half-line process (no reservoir)
//! as contour integrals summed over the signed-permutation group, in the
//! time domain and the Laplace domain.
//!
//! For n particles the probability is (1/n!) times a sum over all signed
//! permutations of n-fold contour integrals. Each variable runs over a
//! circle centered at 1/(2q); the circles carry pairwise distinct radii and
//! the sum runs over all n! assignments of radii to variables, which is
//! what keeps the scattering factors integrable when a positive-index
//! variable meets a negated one (their pole sits exactly on the reflected
//! circle of the partner variable, so equal radii would be fatal).
//! Trapezoidal quadrature on a circle is spectrally accurate for these
//! integrands, and the assignment average cancels the leading near-pole
//! quadrature error of each ordering, so modest node counts reach 1e-9.
//!
//! Contour placement (validated against the exact generator): every circle
//! must enclose 0 and 1 and keep the scattering poles strictly inside; in
//! the Laplace domain the radii must additionally keep `Re s` above the
//! sum of per-contour maxima of `Re eps`, which places each circle between
//! the two roots of `eps(xi) = s`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::ONE;
use crate::model::{
    enumerate_signed_permutations, permutations, ConfigSpace, Configuration, LatticeTruncation,
    QuadratureSpec, Rates, SignedPermutation,
};

/// Largest particle count the contour sum accepts; the cost is
/// nodes^n * n! * 2^n n!.
pub const MAX_BETHE_N: usize = 4;

const IMAG_TOL: f64 = 1e-8;
const ADAPT_TOL: f64 = 1e-9;
const MAX_DOUBLINGS: usize = 4;

/// Single-particle symbol eps(xi) = p/xi + q xi - 1.
pub fn epsilon(xi: Complex64, rates: &Rates) -> Result<Complex64> {
    if xi.norm() < 1e-300 {
        return Err(Error::Domain("epsilon is undefined at xi = 0".into()));
    }
    Ok(rates.p() / xi + rates.q() * xi - 1.0)
}

/// Two-particle scattering factor
/// S(xi, xi') = -(p + q xi xi' - xi) / (p + q xi xi' - xi').
pub fn scattering_s(xi: Complex64, xi2: Complex64, rates: &Rates) -> Result<Complex64> {
    let (p, q) = (rates.p(), rates.q());
    let cross = q * xi * xi2 + p;
    let num = cross - xi;
    let den = cross - xi2;
    let scale = cross.norm().max(xi.norm()).max(xi2.norm()).max(1.0);
    if den.norm() < 1e-12 * scale {
        return Err(Error::Pole(format!(
            "scattering pole p + q xi xi' - xi' = 0 at xi = {xi}, xi' = {xi2}"
        )));
    }
    Ok(-num / den)
}

/// Boundary factor r(xi) = (xi - 1) / (1 - tau xi^{-1}); requires q != 0.
pub fn boundary_r(xi: Complex64, rates: &Rates) -> Result<Complex64> {
    let tau = rates
        .tau()
        .map_err(|_| Error::Unsupported("boundary factor needs q != 0 (tau undefined)".into()))?;
    if xi.norm() < 1e-300 {
        return Err(Error::Domain("boundary factor undefined at xi = 0".into()));
    }
    let den = 1.0 - tau / xi;
    if den.norm() < 1e-12 * (1.0 + tau.abs()) {
        return Err(Error::Pole(format!("boundary factor pole at xi = tau = {tau}")));
    }
    Ok((xi - 1.0) / den)
}

/// Amplitude A_sigma: boundary factors r(xi_{sigma(i)}) over negative
/// images times scattering factors S(xi_a, xi_b) over all inversions,
/// with the convention xi_{-a} = tau / xi_a.
pub fn amplitude_a(
    sigma: &SignedPermutation,
    xi: &[Complex64],
    rates: &Rates,
) -> Result<Complex64> {
    let n = sigma.n();
    if xi.len() != n {
        return Err(Error::Domain(format!(
            "amplitude needs {n} contour variables, got {}",
            xi.len()
        )));
    }
    let tau = rates
        .tau()
        .map_err(|_| Error::Unsupported("amplitude needs q != 0".into()))?;
    let value_of = |a: i32| -> Complex64 {
        let m = a.unsigned_abs() as usize;
        if a > 0 {
            xi[m - 1]
        } else {
            tau / xi[m - 1]
        }
    };
    let mut acc = ONE;
    for i in 1..=n {
        let s = sigma.image(i);
        if s < 0 {
            acc *= boundary_r(value_of(s), rates)?;
        }
    }
    for (a, b) in sigma.inversions() {
        acc *= scattering_s(value_of(a), value_of(b), rates)?;
    }
    Ok(acc)
}

/// Time-domain or Laplace-domain evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Time(f64),
    Laplace(Complex64),
}

// ---------------------------------------------------------------------------
// Contour feasibility
// ---------------------------------------------------------------------------

/// Checks that the smallest circle encloses 0 and 1 and keeps every
/// scattering pole strictly inside. The pole of S(xi_a, .) over positive
/// pairs sits at p/(1 - q xi_a), over doubly-negated pairs at
/// (1 - p/xi_a)/q; both stay within c + p/(qR - 1/2) resp. c + p/(q(R - c))
/// of the center when |xi_a - c| = R.
fn check_time_feasible(quad: &QuadratureSpec, rates: &Rates) -> Result<()> {
    let c = quad.center.re;
    let r1 = quad.radius(1);
    let geom = c.abs().max((1.0 - c).abs()) * 1.02 + 0.05;
    if r1 < geom {
        return Err(Error::Domain(format!(
            "contour radius {r1:.3} too small to enclose 0 and 1 (need >= {geom:.3})"
        )));
    }
    let (p, q) = (rates.p(), rates.q());
    if q * r1 <= 0.5 || r1 <= c {
        return Err(Error::Domain(format!(
            "contour radius {r1:.3} too small for scattering-pole containment"
        )));
    }
    let plus_reach = c + p / (q * r1 - 0.5);
    let minus_reach = c + p / (q * (r1 - c));
    let reach = plus_reach.max(minus_reach);
    if reach > 0.97 * r1 {
        return Err(Error::Domain(format!(
            "scattering poles reach {reach:.3} but the smallest contour radius is {r1:.3}; \
             increase base_radius"
        )));
    }
    Ok(())
}

/// Max of Re eps over a circle of the given radius, sampled densely.
fn max_re_eps_on_circle(radius: f64, center: Complex64, rates: &Rates) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for j in 0..512 {
        let theta = 2.0 * std::f64::consts::PI * j as f64 / 512.0;
        let xi = center + Complex64::from_polar(radius, theta);
        if let Ok(e) = epsilon(xi, rates) {
            m = m.max(e.re);
        }
    }
    m
}

/// The abscissa the given contours demand: sum over variables of the
/// per-contour maximum of Re eps.
pub fn laplace_abscissa(n: usize, quad: &QuadratureSpec, rates: &Rates) -> f64 {
    (1..=n)
        .map(|a| max_re_eps_on_circle(quad.radius(a), quad.center, rates))
        .sum()
}

fn check_laplace_feasible(
    s: Complex64,
    n: usize,
    quad: &QuadratureSpec,
    rates: &Rates,
) -> Result<()> {
    check_time_feasible(quad, rates)?;
    let bound = laplace_abscissa(n, quad, rates);
    if s.re <= bound + 0.02 * (1.0 + bound.abs()) {
        return Err(Error::Domain(format!(
            "Re s = {:.4} too small for the chosen radii; need Re s > {:.4} \
             (shrink base_radius or raise Re s)",
            s.re,
            bound + 0.02 * (1.0 + bound.abs())
        )));
    }
    Ok(())
}

/// Smallest safe base radius for time-domain contours: minimal radius that
/// encloses 0 and 1 and contains the scattering poles, with a small safety
/// factor. Tight contours avoid the exp(q R t) amplification the default
/// (deliberately generous) radius suffers at strongly asymmetric rates.
pub fn tight_time_quad(rates: &Rates, nodes: usize, spread: f64) -> Result<QuadratureSpec> {
    let q = rates.q();
    if q == 0.0 {
        return Err(Error::Unsupported("contour formulas need q != 0".into()));
    }
    let c = 1.0 / (2.0 * q);
    let p = rates.p();
    let feasible = |r1: f64| -> bool {
        r1 > c.abs().max((1.0 - c).abs()) * 1.02 + 0.05
            && q * r1 > 0.5
            && r1 > c
            && (c + p / (q * r1 - 0.5)).max(c + p / (q * (r1 - c))) <= 0.93 * r1
    };
    let (mut lo, mut hi) = (1e-3, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if !feasible(hi) {
        return Err(Error::Domain("no feasible contour radius found".into()));
    }
    // radius(1) = base (1 + spread) lands 8% above the feasibility edge.
    QuadratureSpec::new(hi * 1.08 / (1.0 + spread), spread, nodes, Complex64::new(c, 0.0))
}

/// Contours for a Laplace-domain evaluation at `s`: the largest base radius
/// whose abscissa stays below 0.92 Re s, provided the scattering poles can
/// still be contained. Errors with the required abscissa when `Re s` is too
/// small for any safe radius.
pub fn laplace_quad_for(
    s: Complex64,
    n: usize,
    rates: &Rates,
    nodes: usize,
    spread: f64,
) -> Result<QuadratureSpec> {
    let tight = tight_time_quad(rates, nodes, spread)?;
    let center = tight.center;
    let abscissa_of = |base: f64| -> f64 {
        (1..=n)
            .map(|a| max_re_eps_on_circle(base * (1.0 + a as f64 * spread), center, rates))
            .sum()
    };
    if s.re <= 0.0 {
        return Err(Error::Domain(format!(
            "Laplace evaluation needs Re s > 0, got {}",
            s.re
        )));
    }
    let min_base = tight.base_radius;
    let min_abscissa = abscissa_of(min_base);
    if min_abscissa >= 0.92 * s.re {
        return Err(Error::Domain(format!(
            "Re s = {:.4} too small: even the tightest safe contours need Re s > {:.4}",
            s.re,
            min_abscissa / 0.92
        )));
    }
    let (mut lo, mut hi) = (min_base, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if abscissa_of(mid) <= 0.92 * s.re {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Sit a third of the way into the feasible radius window.
    let base = (min_base + 0.3 * (lo - min_base)).min(lo);
    QuadratureSpec::new(base, spread, nodes, center)
}

// ---------------------------------------------------------------------------
// Evaluation plan shared across radius assignments
// ---------------------------------------------------------------------------

/// Per-signed-permutation bookkeeping, independent of nodes and radii.
struct SigmaPlan {
    /// For variable m (0-based): is the sigma-leg negated (so the x power
    /// comes with tau^x xi^{-x} and a boundary factor).
    negated: Vec<bool>,
    /// For variable m: 0-based position i with |sigma(i+...)| = m+1; x_i is
    /// the x-coordinate this variable carries.
    pos_of: Vec<usize>,
    /// Inversions as pair uses against the scattering-matrix cache.
    pairs: Vec<PairUse>,
}

struct PairUse {
    /// 0-based underlying variable indices, u < v.
    u: usize,
    v: usize,
    slot: usize,
    /// True when the cached matrix is laid out [node_v][node_u].
    transposed: bool,
}

/// Dense slot for a signed pair (a, b) with |a|, |b| in 1..=n.
fn pair_slot(a: i32, b: i32, n: usize) -> usize {
    let enc = |v: i32| -> usize {
        let m = v.unsigned_abs() as usize - 1;
        if v > 0 {
            m
        } else {
            n + m
        }
    };
    enc(a) * 2 * n + enc(b)
}

fn build_plans(sigmas: &[SignedPermutation]) -> Vec<SigmaPlan> {
    sigmas
        .iter()
        .map(|sigma| {
            let n = sigma.n();
            let mut negated = vec![false; n];
            let mut pos_of = vec![0usize; n];
            for i in 1..=n {
                let img = sigma.image(i);
                let m = img.unsigned_abs() as usize - 1;
                negated[m] = img < 0;
                pos_of[m] = i - 1;
            }
            let pairs = sigma
                .inversions()
                .into_iter()
                .map(|(a, b)| {
                    let ma = a.unsigned_abs() as usize - 1;
                    let mb = b.unsigned_abs() as usize - 1;
                    let (u, v) = (ma.min(mb), ma.max(mb));
                    PairUse { u, v, slot: pair_slot(a, b, n), transposed: ma > mb }
                })
                .collect();
            SigmaPlan { negated, pos_of, pairs }
        })
        .collect()
}

/// Contour node data for one radius assignment.
struct MuData {
    n: usize,
    nn: usize,
    nodes: Vec<Vec<Complex64>>,
    weights: Vec<Vec<Complex64>>,
    eps: Vec<Vec<Complex64>>,
    r_tau: Vec<Vec<Complex64>>,
    /// Scattering matrices, indexed by `pair_slot`, layout [node_a][node_b].
    s_mats: Vec<Option<Vec<Complex64>>>,
    tau: f64,
}

impl MuData {
    fn build(
        n: usize,
        mu: &[usize],
        quad: &QuadratureSpec,
        rates: &Rates,
        pair_types: &[(i32, i32)],
        nn: usize,
    ) -> Result<MuData> {
        let tau = rates.tau().map_err(|_| {
            Error::Unsupported(
                "contour formulas need q != 0; use the determinant module for p = 1".into(),
            )
        })?;
        let c = quad.center;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut eps_v = Vec::with_capacity(n);
        let mut r_tau = Vec::with_capacity(n);
        for m in 0..n {
            let radius = quad.radius(mu[m] + 1);
            let mut xs = Vec::with_capacity(nn);
            let mut ws = Vec::with_capacity(nn);
            let mut es = Vec::with_capacity(nn);
            let mut rs = Vec::with_capacity(nn);
            for j in 0..nn {
                let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nn as f64;
                let xi = c + Complex64::from_polar(radius, theta);
                xs.push(xi);
                ws.push((xi - c) / nn as f64);
                es.push(epsilon(xi, rates)?);
                rs.push(boundary_r(tau / xi, rates)?);
            }
            nodes.push(xs);
            weights.push(ws);
            eps_v.push(es);
            r_tau.push(rs);
        }
        let mut s_mats = vec![None; 4 * n * n];
        for &(a, b) in pair_types {
            let ma = a.unsigned_abs() as usize - 1;
            let mb = b.unsigned_abs() as usize - 1;
            let mut mat = Vec::with_capacity(nn * nn);
            for j in 0..nn {
                let va = if a > 0 { nodes[ma][j] } else { tau / nodes[ma][j] };
                for k in 0..nn {
                    let vb = if b > 0 { nodes[mb][k] } else { tau / nodes[mb][k] };
                    mat.push(scattering_s(va, vb, rates)?);
                }
            }
            s_mats[pair_slot(a, b, n)] = Some(mat);
        }
        Ok(MuData { n, nn, nodes, weights, eps: eps_v, r_tau, s_mats, tau })
    }

    /// Combined pairwise scattering product for one signed permutation:
    /// for each underlying pair (u, v) with at least one inversion, the
    /// entrywise product of its scattering matrices in [node_u][node_v]
    /// layout. Pairs without inversions stay `None`.
    fn combined_pair_mats(&self, plan: &SigmaPlan) -> Vec<Option<Vec<Complex64>>> {
        let n = self.n;
        let nn = self.nn;
        let mut out: Vec<Option<Vec<Complex64>>> = vec![None; n * n];
        for pu in &plan.pairs {
            let mat = self.s_mats[pu.slot].as_ref().expect("pair type precomputed");
            let dst = out[pu.u * n + pu.v].get_or_insert_with(|| vec![ONE; nn * nn]);
            if !pu.transposed {
                for (d, s) in dst.iter_mut().zip(mat.iter()) {
                    *d *= s;
                }
            } else {
                for j in 0..nn {
                    let row = &mut dst[j * nn..(j + 1) * nn];
                    for (k, d) in row.iter_mut().enumerate() {
                        *d *= mat[k * nn + j];
                    }
                }
            }
        }
        out
    }

    /// Per-variable factor vector for a concrete (x, y) pair:
    /// weight * (time factor) * xi^{-(y_m + 1)} * x-power * boundary factor.
    fn leg_factors(&self, plan: &SigmaPlan, x: &[usize], y: &[usize], mode: Mode) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(n);
        for m in 0..n {
            let xm = x[plan.pos_of[m]] as u32;
            let ym = y[m] as u32;
            let tau_pow = self.tau.powi(xm as i32);
            let fs: Vec<Complex64> = (0..self.nn)
                .map(|j| {
                    let xi = self.nodes[m][j];
                    let inv = 1.0 / xi;
                    let mut f = self.weights[m][j] * inv.powu(ym + 1);
                    if let Mode::Time(t) = mode {
                        f *= (self.eps[m][j] * t).exp();
                    }
                    if plan.negated[m] {
                        f *= tau_pow * inv.powu(xm) * self.r_tau[m][j];
                    } else {
                        f *= xi.powu(xm);
                    }
                    f
                })
                .collect();
            out.push(fs);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Single-pair evaluation
// ---------------------------------------------------------------------------

fn eval_sigma_mu_single(
    plan: &SigmaPlan,
    mud: &MuData,
    x: &[usize],
    y: &[usize],
    mode: Mode,
) -> Complex64 {
    let n = mud.n;
    let nn = mud.nn;
    let f = mud.leg_factors(plan, x, y, mode);
    let g = mud.combined_pair_mats(plan);
    let zero = Complex64::new(0.0, 0.0);
    let pair = |u: usize, v: usize| g[u * n + v].as_deref();
    match n {
        1 => {
            let mut acc = zero;
            match mode {
                Mode::Time(_) => {
                    for j in 0..nn {
                        acc += f[0][j];
                    }
                }
                Mode::Laplace(s) => {
                    for j in 0..nn {
                        acc += f[0][j] / (s - mud.eps[0][j]);
                    }
                }
            }
            acc
        }
        2 => {
            let g01 = pair(0, 1);
            let mut acc = zero;
            for j in 0..nn {
                let f0 = f[0][j];
                let row = g01.map(|g| &g[j * nn..(j + 1) * nn]);
                match mode {
                    Mode::Time(_) => {
                        let mut inner = zero;
                        match row {
                            Some(r) => {
                                for k in 0..nn {
                                    inner += f[1][k] * r[k];
                                }
                            }
                            None => {
                                for k in 0..nn {
                                    inner += f[1][k];
                                }
                            }
                        }
                        acc += f0 * inner;
                    }
                    Mode::Laplace(s) => {
                        let se = s - mud.eps[0][j];
                        let mut inner = zero;
                        for k in 0..nn {
                            let gv = row.map_or(ONE, |r| r[k]);
                            inner += f[1][k] * gv / (se - mud.eps[1][k]);
                        }
                        acc += f0 * inner;
                    }
                }
            }
            acc
        }
        3 => {
            let g01 = pair(0, 1);
            let g02 = pair(0, 2);
            let g12 = pair(1, 2);
            let mut acc = zero;
            for j0 in 0..nn {
                let f0 = f[0][j0];
                let row01 = g01.map(|g| &g[j0 * nn..(j0 + 1) * nn]);
                let row02 = g02.map(|g| &g[j0 * nn..(j0 + 1) * nn]);
                for j1 in 0..nn {
                    let mut f01 = f0 * f[1][j1];
                    if let Some(r) = row01 {
                        f01 *= r[j1];
                    }
                    let row12 = g12.map(|g| &g[j1 * nn..(j1 + 1) * nn]);
                    match mode {
                        Mode::Time(_) => {
                            let mut inner = zero;
                            for j2 in 0..nn {
                                let mut v = f[2][j2];
                                if let Some(r) = row02 {
                                    v *= r[j2];
                                }
                                if let Some(r) = row12 {
                                    v *= r[j2];
                                }
                                inner += v;
                            }
                            acc += f01 * inner;
                        }
                        Mode::Laplace(s) => {
                            let se = s - mud.eps[0][j0] - mud.eps[1][j1];
                            let mut inner = zero;
                            for j2 in 0..nn {
                                let mut v = f[2][j2];
                                if let Some(r) = row02 {
                                    v *= r[j2];
                                }
                                if let Some(r) = row12 {
                                    v *= r[j2];
                                }
                                inner += v / (se - mud.eps[2][j2]);
                            }
                            acc += f01 * inner;
                        }
                    }
                }
            }
            acc
        }
        4 => {
            let g01 = pair(0, 1);
            let g02 = pair(0, 2);
            let g03 = pair(0, 3);
            let g12 = pair(1, 2);
            let g13 = pair(1, 3);
            let g23 = pair(2, 3);
            let mut acc = zero;
            for j0 in 0..nn {
                let f0 = f[0][j0];
                for j1 in 0..nn {
                    let mut f01 = f0 * f[1][j1];
                    if let Some(g) = g01 {
                        f01 *= g[j0 * nn + j1];
                    }
                    for j2 in 0..nn {
                        let mut f012 = f01 * f[2][j2];
                        if let Some(g) = g02 {
                            f012 *= g[j0 * nn + j2];
                        }
                        if let Some(g) = g12 {
                            f012 *= g[j1 * nn + j2];
                        }
                        let row03 = g03.map(|g| &g[j0 * nn..(j0 + 1) * nn]);
                        let row13 = g13.map(|g| &g[j1 * nn..(j1 + 1) * nn]);
                        let row23 = g23.map(|g| &g[j2 * nn..(j2 + 1) * nn]);
                        match mode {
                            Mode::Time(_) => {
                                let mut inner = zero;
                                for j3 in 0..nn {
                                    let mut v = f[3][j3];
                                    if let Some(r) = row03 {
                                        v *= r[j3];
                                    }
                                    if let Some(r) = row13 {
                                        v *= r[j3];
                                    }
                                    if let Some(r) = row23 {
                                        v *= r[j3];
                                    }
                                    inner += v;
                                }
                                acc += f012 * inner;
                            }
                            Mode::Laplace(s) => {
                                let se = s - mud.eps[0][j0] - mud.eps[1][j1] - mud.eps[2][j2];
                                let mut inner = zero;
                                for j3 in 0..nn {
                                    let mut v = f[3][j3];
                                    if let Some(r) = row03 {
                                        v *= r[j3];
                                    }
                                    if let Some(r) = row13 {
                                        v *= r[j3];
                                    }
                                    if let Some(r) = row23 {
                                        v *= r[j3];
                                    }
                                    inner += v / (se - mud.eps[3][j3]);
                                }
                                acc += f012 * inner;
                            }
                        }
                    }
                }
            }
            acc
        }
        _ => unreachable!("n capped at {MAX_BETHE_N}"),
    }
}

/// All signed pair types that occur in any inversion list of B_n.
fn collect_pair_types(sigmas: &[SignedPermutation], n: usize) -> Vec<(i32, i32)> {
    let mut seen = vec![false; 4 * n * n];
    let mut out = Vec::new();
    for sigma in sigmas {
        for (a, b) in sigma.inversions() {
            let slot = pair_slot(a, b, n);
            if !seen[slot] {
                seen[slot] = true;
                out.push((a, b));
            }
        }
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, v| acc * v as f64)
}

/// One full evaluation of the signed-permutation sum at a fixed node count.
fn eval_sum_single(
    x: &[usize],
    y: &[usize],
    mode: Mode,
    rates: &Rates,
    quad: &QuadratureSpec,
    nn: usize,
) -> Result<Complex64> {
    let n = x.len();
    let sigmas = enumerate_signed_permutations(n)?;
    let plans = build_plans(&sigmas);
    let pair_types = collect_pair_types(&sigmas, n);
    let mus = permutations(n);
    let totals: Result<Vec<Complex64>> = mus
        .par_iter()
        .map(|mu| {
            let mud = MuData::build(n, mu, quad, rates, &pair_types, nn)?;
            let mut acc = Complex64::new(0.0, 0.0);
            for plan in &plans {
                acc += eval_sigma_mu_single(plan, &mud, x, y, mode);
            }
            Ok(acc)
        })
        .collect();
    let total: Complex64 = totals?.into_iter().sum();
    Ok(total / factorial(n))
}

// ---------------------------------------------------------------------------
// Dedicated single-particle integrand
// ---------------------------------------------------------------------------

/// The n = 1 transition probability from its dedicated one-contour
/// integrand (a circle of radius > max(1, tau) around the origin):
/// (1/2 pi i) int [xi^{x-y-1} + (tau - xi)/(1 - xi) tau^x xi^{-x-y-2}] e^{eps t} dxi.
/// Used as the n = 1 fast path and as a cross-check of the general sum.
pub fn transition_probability_n1(
    x: usize,
    y: usize,
    t: f64,
    rates: &Rates,
    nodes: usize,
) -> Result<f64> {
    let tau = rates
        .tau()
        .map_err(|_| Error::Unsupported("use the determinant module for p = 1".into()))?;
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    let radius = tau.max(1.0) + 1.0;
    let eval = |nn: usize| -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..nn {
            let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nn as f64;
            let xi = Complex64::from_polar(radius, theta);
            let w = xi / nn as f64;
            let inv = 1.0 / xi;
            let direct = xi.powu(x as u32) * inv.powu(y as u32 + 1);
            let reflected = (tau - xi) / (1.0 - xi)
                * tau.powi(x as i32)
                * inv.powu((x + y) as u32 + 2);
            acc += w * (direct + reflected) * (epsilon(xi, rates)? * t).exp();
        }
        Ok(acc)
    };
    let value = adaptive_scalar(eval, nodes)?;
    real_part_checked(value)
}

// ---------------------------------------------------------------------------
// Adaptive drivers
// ---------------------------------------------------------------------------

fn adaptive_scalar(
    eval: impl Fn(usize) -> Result<Complex64>,
    start_nodes: usize,
) -> Result<Complex64> {
    let mut nn = start_nodes.max(16);
    let mut prev: Option<Complex64> = None;
    for _ in 0..=MAX_DOUBLINGS {
        let v = eval(nn)?;
        if let Some(p) = prev {
            if (v - p).norm() < ADAPT_TOL {
                return Ok(v);
            }
        }
        prev = Some(v);
        nn *= 2;
    }
    Err(Error::Accuracy(format!(
        "quadrature did not converge to {ADAPT_TOL:.0e} within {MAX_DOUBLINGS} node doublings"
    )))
}

fn real_part_checked(v: Complex64) -> Result<f64> {
    if v.im.abs() > IMAG_TOL * v.re.abs().max(1.0) {
        return Err(Error::Accuracy(format!(
            "imaginary residue {:.3e} exceeds {IMAG_TOL:.0e} on a real-valued output",
            v.im
        )));
    }
    Ok(v.re)
}

fn validate_pair(x: &Configuration, y: &Configuration) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!(
            "configurations must have equal particle counts, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n > MAX_BETHE_N {
        return Err(Error::Capacity(format!(
            "contour sum capped at n = {MAX_BETHE_N} particles, got {n}"
        )));
    }
    Ok(n)
}

/// Transition probability p(x, y; t) for the closed half-line process.
/// Routes n = 1 through the dedicated one-contour integrand.
pub fn transition_probability(
    x: &Configuration,
    y: &Configuration,
    t: f64,
    rates: &Rates,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let n = validate_pair(x, y)?;
    if rates.q() == 0.0 {
        return Err(Error::Unsupported(
            "the contour formulas do not hold for p = 1; use the determinant module".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    if n == 1 {
        return transition_probability_n1(x.site(0), y.site(0), t, rates, quad.nodes_per_contour);
    }
    transition_probability_general(x, y, t, rates, quad)
}

/// Transition probability through the general signed-permutation sum for
/// every n (no n = 1 fast path); exists so the dedicated single-particle
/// integrand can be cross-checked against the full machinery.
pub fn transition_probability_general(
    x: &Configuration,
    y: &Configuration,
    t: f64,
    rates: &Rates,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let n = validate_pair(x, y)?;
    if rates.q() == 0.0 {
        return Err(Error::Unsupported(
            "the contour formulas do not hold for p = 1; use the determinant module".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    if n == 0 {
        return Ok(1.0);
    }
    check_time_feasible(quad, rates)?;
    let value = adaptive_scalar(
        |nn| eval_sum_single(x.sites(), y.sites(), Mode::Time(t), rates, quad, nn),
        quad.nodes_per_contour,
    )?;
    real_part_checked(value)
}

/// Laplace transform of the transition probability, evaluated by the same
/// contour sum with e^{eps t} replaced by 1/(s - sum eps). The chosen radii
/// must keep Re s above the contours' abscissa; use [`laplace_quad_for`] to
/// construct feasible contours.
pub fn transition_laplace(
    x: &Configuration,
    y: &Configuration,
    s: Complex64,
    rates: &Rates,
    quad: &QuadratureSpec,
) -> Result<Complex64> {
    let n = validate_pair(x, y)?;
    if rates.q() == 0.0 {
        return Err(Error::Unsupported(
            "the contour formulas do not hold for p = 1; use the determinant module".into(),
        ));
    }
    if n == 0 {
        if s.re <= 0.0 {
            return Err(Error::Domain("Laplace transform needs Re s > 0".into()));
        }
        return Ok(1.0 / s);
    }
    check_laplace_feasible(s, n, quad, rates)?;
    adaptive_scalar(
        |nn| eval_sum_single(x.sites(), y.sites(), Mode::Laplace(s), rates, quad, nn),
        quad.nodes_per_contour,
    )
}

// ---------------------------------------------------------------------------
// Whole-window batch evaluation
// ---------------------------------------------------------------------------

/// Transition probabilities for every configuration pair in a window,
/// sharing all node data and scattering matrices across pairs.
#[derive(Debug, Clone)]
pub struct WindowMatrix {
    space: ConfigSpace,
    /// Row-major: values[ix * len + iy] = p(config ix <- config iy).
    values: Vec<f64>,
    est_error: f64,
}

impl WindowMatrix {
    pub fn space(&self) -> &ConfigSpace {
        &self.space
    }

    pub fn value(&self, x: &Configuration, y: &Configuration) -> Option<f64> {
        let ix = self.space.index_of(x)?;
        let iy = self.space.index_of(y)?;
        Some(self.values[ix * self.space.len() + iy])
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.space.len() + iy]
    }

    /// Column sum over all window configurations for initial config iy.
    pub fn column_sum(&self, iy: usize) -> f64 {
        (0..self.space.len()).map(|ix| self.value_at(ix, iy)).sum()
    }

    pub fn est_error(&self) -> f64 {
        self.est_error
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Tensor contribution of one (sigma, mu) term for all window pairs at
/// once: contract the pairwise scattering tensor against per-leg site-power
/// tables, then scatter into the configuration-pair matrix.
fn eval_sigma_mu_window(
    plan: &SigmaPlan,
    mud: &MuData,
    space: &ConfigSpace,
    mode: Mode,
    out: &mut [Complex64],
) {
    let n = mud.n;
    let nn = mud.nn;
    let w = space.l();
    let ww = w * w;
    let zero = Complex64::new(0.0, 0.0);

    // Per-leg tables POW[m][j][a], a = ix * w + iy: everything that depends
    // on this variable alone.
    let mut pow = Vec::with_capacity(n);
    for m in 0..n {
        let mut table = vec![zero; nn * ww];
        for j in 0..nn {
            let xi = mud.nodes[m][j];
            let inv = 1.0 / xi;
            let mut base = mud.weights[m][j];
            if let Mode::Time(t) = mode {
                base *= (mud.eps[m][j] * t).exp();
            }
            if plan.negated[m] {
                base *= mud.r_tau[m][j];
            }
            // x-powers and y-powers by running products.
            let mut xpow = vec![ONE; w];
            let mut acc = ONE;
            for (ix, slot) in xpow.iter_mut().enumerate() {
                *slot = acc;
                acc *= if plan.negated[m] { mud.tau * inv } else { xi };
                let _ = ix;
            }
            let mut ypow = vec![ONE; w];
            let mut acc = inv;
            for slot in ypow.iter_mut() {
                *slot = acc;
                acc *= inv;
            }
            let row = &mut table[j * ww..(j + 1) * ww];
            for ix in 0..w {
                let bx = base * xpow[ix];
                for iy in 0..w {
                    row[ix * w + iy] = bx * ypow[iy];
                }
            }
        }
        pow.push(table);
    }

    let g = mud.combined_pair_mats(plan);
    let pair = |u: usize, v: usize| g[u * n + v].as_deref();

    // Contract down to the leg tensor T[a_1, ..., a_n].
    let leg = match n {
        1 => {
            let mut t = vec![zero; ww];
            match mode {
                Mode::Time(_) => {
                    for j in 0..nn {
                        let row = &pow[0][j * ww..(j + 1) * ww];
                        for (a, tv) in t.iter_mut().enumerate() {
                            *tv += row[a];
                        }
                    }
                }
                Mode::Laplace(s) => {
                    for j in 0..nn {
                        let d = 1.0 / (s - mud.eps[0][j]);
                        let row = &pow[0][j * ww..(j + 1) * ww];
                        for (a, tv) in t.iter_mut().enumerate() {
                            *tv += row[a] * d;
                        }
                    }
                }
            }
            t
        }
        2 => {
            // T0[j0, j1] = G01 (and Laplace denominator).
            let g01 = pair(0, 1);
            let mut t0 = vec![ONE; nn * nn];
            if let Some(gm) = g01 {
                t0.copy_from_slice(gm);
            }
            if let Mode::Laplace(s) = mode {
                for j0 in 0..nn {
                    let se = s - mud.eps[0][j0];
                    let row = &mut t0[j0 * nn..(j0 + 1) * nn];
                    for (j1, v) in row.iter_mut().enumerate() {
                        *v /= se - mud.eps[1][j1];
                    }
                }
            }
            // T1[a0, j1] = sum_j0 POW0[j0, a0] T0[j0, j1].
            let mut t1 = vec![zero; ww * nn];
            for j0 in 0..nn {
                let prow = &pow[0][j0 * ww..(j0 + 1) * ww];
                let trow = &t0[j0 * nn..(j0 + 1) * nn];
                for (a0, &pv) in prow.iter().enumerate() {
                    if pv == zero {
                        continue;
                    }
                    let dst = &mut t1[a0 * nn..(a0 + 1) * nn];
                    for (j1, d) in dst.iter_mut().enumerate() {
                        *d += pv * trow[j1];
                    }
                }
            }
            // T[a0, a1] = sum_j1 T1[a0, j1] POW1[j1, a1].
            let mut t = vec![zero; ww * ww];
            for a0 in 0..ww {
                let src = &t1[a0 * nn..(a0 + 1) * nn];
                let dst = &mut t[a0 * ww..(a0 + 1) * ww];
                for (j1, &sv) in src.iter().enumerate() {
                    if sv == zero {
                        continue;
                    }
                    let prow = &pow[1][j1 * ww..(j1 + 1) * ww];
                    for (a1, d) in dst.iter_mut().enumerate() {
                        *d += sv * prow[a1];
                    }
                }
            }
            t
        }
        3 => {
            let g01 = pair(0, 1);
            let g02 = pair(0, 2);
            let g12 = pair(1, 2);
            // T0[j0][j1, j2] built row-by-row to bound memory at nn^2.
            // T1[a0][j1, j2] accumulates the first contraction.
            let mut t1 = vec![zero; ww * nn * nn];
            let mut t0_row = vec![ONE; nn * nn];
            for j0 in 0..nn {
                // Fill T0 row for this j0.
                for j1 in 0..nn {
                    let g01v = g01.map_or(ONE, |g| g[j0 * nn + j1]);
                    let row12 = g12.map(|g| &g[j1 * nn..(j1 + 1) * nn]);
                    let dst = &mut t0_row[j1 * nn..(j1 + 1) * nn];
                    match g02 {
                        Some(g2) => {
                            let row02 = &g2[j0 * nn..(j0 + 1) * nn];
                            for j2 in 0..nn {
                                let mut v = g01v * row02[j2];
                                if let Some(r) = row12 {
                                    v *= r[j2];
                                }
                                dst[j2] = v;
                            }
                        }
                        None => {
                            for j2 in 0..nn {
                                let mut v = g01v;
                                if let Some(r) = row12 {
                                    v *= r[j2];
                                }
                                dst[j2] = v;
                            }
                        }
                    }
                }
                let prow = &pow[0][j0 * ww..(j0 + 1) * ww];
                for (a0, &pv) in prow.iter().enumerate() {
                    if pv == zero {
                        continue;
                    }
                    let dst = &mut t1[a0 * nn * nn..(a0 + 1) * nn * nn];
                    for (d, s) in dst.iter_mut().zip(t0_row.iter()) {
                        *d += pv * s;
                    }
                }
            }
            // T2[a0, a1][j2] then T[a0, a1, a2].
            let mut t = vec![zero; ww * ww * ww];
            let mut t2 = vec![zero; nn];
            for a0 in 0..ww {
                for a1 in 0..ww {
                    t2.iter_mut().for_each(|v| *v = zero);
                    for j1 in 0..nn {
                        let pv = pow[1][j1 * ww + a1];
                        if pv == zero {
                            continue;
                        }
                        let src = &t1[a0 * nn * nn + j1 * nn..a0 * nn * nn + (j1 + 1) * nn];
                        for (d, s) in t2.iter_mut().zip(src.iter()) {
                            *d += pv * s;
                        }
                    }
                    let dst = &mut t[(a0 * ww + a1) * ww..(a0 * ww + a1 + 1) * ww];
                    for (j2, &sv) in t2.iter().enumerate() {
                        if sv == zero {
                            continue;
                        }
                        let prow = &pow[2][j2 * ww..(j2 + 1) * ww];
                        for (a2, d) in dst.iter_mut().enumerate() {
                            *d += sv * prow[a2];
                        }
                    }
                }
            }
            t
        }
        _ => unreachable!("window batch capped at n = 3"),
    };

    // Scatter the leg tensor into configuration-pair entries.
    let ncfg = space.len();
    for (ix, xc) in space.configs().iter().enumerate() {
        for (iy, yc) in space.configs().iter().enumerate() {
            let mut idx = 0usize;
            for m in 0..n {
                let a = xc.site(plan.pos_of[m]) * w + yc.site(m);
                idx = idx * ww + a;
            }
            out[ix * ncfg + iy] += leg[idx];
        }
    }
}

fn eval_sum_window(
    n: usize,
    space: &ConfigSpace,
    mode: Mode,
    rates: &Rates,
    quad: &QuadratureSpec,
    nn: usize,
) -> Result<Vec<Complex64>> {
    let sigmas = enumerate_signed_permutations(n)?;
    let plans = build_plans(&sigmas);
    let pair_types = collect_pair_types(&sigmas, n);
    let mus = permutations(n);
    let ncfg = space.len();
    let zero = Complex64::new(0.0, 0.0);
    let partials: Result<Vec<Vec<Complex64>>> = mus
        .par_iter()
        .map(|mu| {
            let mud = MuData::build(n, mu, quad, rates, &pair_types, nn)?;
            let mut acc = vec![zero; ncfg * ncfg];
            for plan in &plans {
                eval_sigma_mu_window(plan, &mud, space, mode, &mut acc);
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![zero; ncfg * ncfg];
    for part in partials? {
        for (t, p) in total.iter_mut().zip(part.iter()) {
            *t += p;
        }
    }
    let nf = factorial(n);
    total.iter_mut().for_each(|v| *v /= nf);
    Ok(total)
}

/// Evaluates p(x, y; t) for every pair of n-particle configurations inside
/// the window, with one refinement pass to estimate the quadrature error.
/// For n >= 2 this shares all heavy precomputation across the pairs; n = 1
/// is evaluated the same way for uniformity.
pub fn transition_matrix_window(
    n: usize,
    window: LatticeTruncation,
    t: f64,
    rates: &Rates,
    quad: &QuadratureSpec,
) -> Result<WindowMatrix> {
    if n == 0 || n > 3 {
        return Err(Error::Capacity(format!(
            "window batch supports 1 <= n <= 3 particles, got {n}"
        )));
    }
    if rates.q() == 0.0 {
        return Err(Error::Unsupported(
            "the contour formulas do not hold for p = 1; use the determinant module".into(),
        ));
    }
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    check_time_feasible(quad, rates)?;
    let space = ConfigSpace::new(window, n);
    let mode = Mode::Time(t);
    let nn = quad.nodes_per_contour.max(16);
    let coarse = eval_sum_window(n, &space, mode, rates, quad, nn)?;
    let fine = eval_sum_window(n, &space, mode, rates, quad, nn * 3 / 2)?;
    let mut est_error = 0.0f64;
    let mut max_imag = 0.0f64;
    let values: Vec<f64> = fine
        .iter()
        .zip(coarse.iter())
        .map(|(f, c)| {
            est_error = est_error.max((f - c).norm());
            max_imag = max_imag.max(f.im.abs());
            f.re
        })
        .collect();
    if max_imag > IMAG_TOL {
        return Err(Error::Accuracy(format!(
            "imaginary residue {max_imag:.3e} exceeds {IMAG_TOL:.0e} in window evaluation"
        )));
    }
    Ok(WindowMatrix { space, values, est_error })
}

/// Laplace-domain window matrix (n <= 2), used to build transform kernels
/// from the contour route.
pub fn transition_laplace_window(
    n: usize,
    window: LatticeTruncation,
    s: Complex64,
    rates: &Rates,
    quad: &QuadratureSpec,
) -> Result<Vec<Complex64>> {
    if n == 0 || n > 2 {
        return Err(Error::Capacity(format!(
            "Laplace window batch supports n in {{1, 2}}, got {n}"
        )));
    }
    check_laplace_feasible(s, n, quad, rates)?;
    let space = ConfigSpace::new(window, n);
    eval_sum_window(n, &space, Mode::Laplace(s), rates, quad, quad.nodes_per_contour)
}

/// Deviation of the windowed total mass sum_x p(x, y; t) from 1.
pub fn conservation_defect(
    y: &Configuration,
    t: f64,
    rates: &Rates,
    quad: &QuadratureSpec,
    window: LatticeTruncation,
) -> Result<f64> {
    let n = y.len();
    let matrix = transition_matrix_window(n, window, t, rates, quad)?;
    let iy = matrix
        .space()
        .index_of(y)
        .ok_or_else(|| Error::Domain(format!("initial configuration {y} outside window")))?;
    Ok(matrix.column_sum(iy) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatticeTruncation;
    use crate::oracle::{build_sector_generator, observables};
    use approx::assert_abs_diff_eq;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg(sites: &[usize]) -> Configuration {
        Configuration::new(sites.to_vec()).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let r = Rates::closed(0.3).unwrap();
        // eps(1) = p + q - 1 = 0 for any rates.
        assert!(epsilon(c64(1.0, 0.0), &r).unwrap().norm() < 1e-15);
        // Symmetric: eps(-1) = -1/2 - 1/2 - 1 = -2.
        let ssep = Rates::closed(0.5).unwrap();
        assert_abs_diff_eq!(epsilon(c64(-1.0, 0.0), &ssep).unwrap().re, -2.0, epsilon = 1e-15);
        assert!(epsilon(c64(0.0, 0.0), &r).is_err());
        // eps(xi_plus(s)) = s.
        let r2 = Rates::closed(0.6).unwrap();
        for &s in &[0.5, 1.0, 3.0] {
            let xi = crate::open_solver::xi_plus(s, &r2).unwrap();
            assert_abs_diff_eq!(epsilon(c64(xi, 0.0), &r2).unwrap().re, s, epsilon = 1e-12);
        }
    }

    #[test]
    fn scattering_examples() {
        let r = Rates::closed(0.6).unwrap();
        // S(xi, xi) = -1 off the pole set.
        let xi = c64(1.3, 0.4);
        assert!((scattering_s(xi, xi, &r).unwrap() + 1.0).norm() < 1e-14);
        // Reciprocity at scattered sample points.
        for k in 0..8 {
            let a = c64(0.7 + 0.31 * k as f64, 0.2 - 0.13 * k as f64);
            let b = c64(-0.4 + 0.22 * k as f64, 0.5 + 0.07 * k as f64);
            let s1 = scattering_s(a, b, &r).unwrap();
            let s2 = scattering_s(b, a, &r).unwrap();
            assert!((s1 * s2 - 1.0).norm() < 1e-12, "reciprocity failed at k = {k}");
        }
        // p = 1: S = -(1 - xi)/(1 - xi').
        let tasep = Rates::tasep(0.0, 0.0).unwrap();
        let got = scattering_s(c64(0.3, 0.1), c64(0.6, -0.2), &tasep).unwrap();
        let expect = -(1.0 - c64(0.3, 0.1)) / (1.0 - c64(0.6, -0.2));
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn boundary_r_examples() {
        let r = Rates::closed(0.6).unwrap();
        let tau = r.tau().unwrap();
        // r(1) = 0.
        assert!(boundary_r(c64(1.0, 0.0), &r).unwrap().norm() < 1e-15);
        // r(tau/xi) = (tau - xi) / (xi (1 - xi)) at scattered points.
        for k in 0..6 {
            let xi = c64(0.4 + 0.37 * k as f64, 0.3 + 0.11 * k as f64);
            let got = boundary_r(tau / xi, &r).unwrap();
            let expect = (tau - xi) / (xi * (1.0 - xi));
            assert!((got - expect).norm() < 1e-12 * (1.0 + expect.norm()));
        }
        // Symmetric case tau = 1: r(xi) = xi away from xi = 1.
        let ssep = Rates::closed(0.5).unwrap();
        let xi = c64(2.0, 1.0);
        assert!((boundary_r(xi, &ssep).unwrap() - xi).norm() < 1e-13);
        // Pole at xi = tau.
        assert!(matches!(boundary_r(c64(tau, 0.0), &r), Err(Error::Pole(_))));
        // Unsupported at q = 0.
        let tasep = Rates::tasep(0.0, 0.0).unwrap();
        assert!(matches!(boundary_r(c64(2.0, 0.0), &tasep), Err(Error::Unsupported(_))));
    }

    #[test]
    fn amplitude_examples() {
        let r = Rates::closed(0.6).unwrap();
        let tau = r.tau().unwrap();
        let xi = vec![c64(2.0, 0.7), c64(-1.1, 1.9)];
        // Identity: empty products.
        let id = SignedPermutation::identity(2);
        assert!((amplitude_a(&id, &xi, &r).unwrap() - 1.0).norm() < 1e-15);
        // (2 1): a single scattering factor S(xi_2, xi_1).
        let swap = SignedPermutation::new(vec![2, 1]).unwrap();
        let expect = scattering_s(xi[1], xi[0], &r).unwrap();
        assert!((amplitude_a(&swap, &xi, &r).unwrap() - expect).norm() < 1e-14);
        // n = 1, sigma = (-1): A = r(tau/xi_1).
        let neg = SignedPermutation::new(vec![-1]).unwrap();
        let expect = boundary_r(tau / xi[0], &r).unwrap();
        assert!((amplitude_a(&neg, &xi[..1], &r).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn initial_condition_is_delta() {
        let r = Rates::closed(0.5).unwrap();
        let quad = tight_time_quad(&r, 64, 0.12).unwrap();
        let x = cfg(&[0, 2]);
        let y = cfg(&[0, 2]);
        let same = transition_probability(&x, &y, 0.0, &r, &quad).unwrap();
        assert_abs_diff_eq!(same, 1.0, epsilon = 1e-8);
        let other = cfg(&[1, 2]);
        let diff = transition_probability(&other, &y, 0.0, &r, &quad).unwrap();
        assert!(diff.abs() < 1e-8);
    }

    #[test]
    fn n1_general_matches_dedicated_integrand() {
        // The general sum at n = 1 and the one-contour special case agree
        // to near machine precision.
        let r = Rates::new(0.6, 0.4, 0.0, 0.0).unwrap();
        let quad = tight_time_quad(&r, 128, 0.12).unwrap();
        let special = transition_probability_n1(3, 1, 0.7, &r, 128).unwrap();
        let general =
            transition_probability_general(&cfg(&[3]), &cfg(&[1]), 0.7, &r, &quad).unwrap();
        assert_abs_diff_eq!(general, special, epsilon = 1e-12);
    }

    #[test]
    fn n2_matches_generator_oracle() {
        let r = Rates::closed(0.5).unwrap();
        let quad = tight_time_quad(&r, 64, 0.12).unwrap();
        let x = cfg(&[0, 1]);
        let got = transition_probability(&x, &x, 0.5, &r, &quad).unwrap();
        let trunc = LatticeTruncation::new(30).unwrap();
        let space = crate::model::ConfigSpace::new(trunc, 2);
        let sector = build_sector_generator(&r, &space);
        let dist = sector.evolve_delta(&x, 0.5).unwrap();
        let expect = dist[space.index_of(&x).unwrap()];
        assert_abs_diff_eq!(got, expect, epsilon = 1e-6);
        let _ = observables::count_probabilities(&dist, 0); // silence unused import path
    }

    #[test]
    fn window_matrix_matches_oracle_n2_asymmetric() {
        let r = Rates::closed(0.7).unwrap();
        let quad = tight_time_quad(&r, 64, 0.12).unwrap();
        let t = 1.0;
        let window = LatticeTruncation::new(6).unwrap();
        let matrix = transition_matrix_window(2, window, t, &r, &quad).unwrap();
        let trunc = LatticeTruncation::new(22).unwrap();
        let space = crate::model::ConfigSpace::new(trunc, 2);
        let sector = build_sector_generator(&r, &space);
        let mut worst = 0.0f64;
        for (iy, y) in matrix.space().configs().iter().enumerate() {
            let dist = sector.evolve_delta(y, t).unwrap();
            for (ix, x) in matrix.space().configs().iter().enumerate() {
                let expect = dist[space.index_of(x).unwrap()];
                worst = worst.max((matrix.value_at(ix, iy) - expect).abs());
            }
        }
        assert!(worst < 1e-6, "window vs oracle deviates by {worst:.3e}");
        assert!(matrix.est_error() < 1e-6);
        assert!(matrix.min_value() > -1e-8, "negative probability beyond noise");
    }

    #[test]
    fn ssep_kernel_is_symmetric() {
        let r = Rates::closed(0.5).unwrap();
        let quad = tight_time_quad(&r, 64, 0.12).unwrap();
        let t = 0.8;
        let window = LatticeTruncation::new(5).unwrap();
        let m = transition_matrix_window(2, window, t, &r, &quad).unwrap();
        let ncfg = m.space().len();
        for i in 0..ncfg {
            for j in 0..ncfg {
                assert_abs_diff_eq!(m.value_at(i, j), m.value_at(j, i), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn conservation_single_particle() {
        let r = Rates::closed(0.7).unwrap();
        let quad = tight_time_quad(&r, 96, 0.12).unwrap();
        let defect =
            conservation_defect(&cfg(&[1]), 1.0, &r, &quad, LatticeTruncation::new(16).unwrap())
                .unwrap();
        assert!(defect.abs() < 1e-6, "mass defect {defect:.3e}");
    }

    #[test]
    fn laplace_matches_closed_form_p0y() {
        // phi(0, y; s) = (1/q) xi_+(s)^{-y} / (xi_+(s) - 1).
        let r = Rates::new(0.6, 0.4, 0.0, 0.0).unwrap();
        for &s in &[1.0f64, 2.0, 4.0] {
            let quad = laplace_quad_for(c64(s, 0.0), 1, &r, 128, 0.12).unwrap();
            for &y in &[0usize, 3, 7] {
                let got =
                    transition_laplace(&cfg(&[0]), &cfg(&[y]), c64(s, 0.0), &r, &quad).unwrap();
                let xp = crate::open_solver::xi_plus(s, &r).unwrap();
                let expect = (1.0 / r.q()) * xp.powi(-(y as i32)) / (xp - 1.0);
                assert!(
                    (got.re - expect).abs() < 1e-8 && got.im.abs() < 1e-8,
                    "s={s} y={y}: got {got}, expect {expect}"
                );
            }
        }
    }

    #[test]
    fn laplace_ssep_origin_closed_form() {
        // Symmetric case: phi(0,0;s) = 2/(s + sqrt(s^2 + 2 s)).
        let r = Rates::closed(0.5).unwrap();
        let s = 2.0;
        let quad = laplace_quad_for(c64(s, 0.0), 1, &r, 192, 0.12).unwrap();
        let got = transition_laplace(&cfg(&[0]), &cfg(&[0]), c64(s, 0.0), &r, &quad).unwrap();
        let expect = 2.0 / (s + (s * s + 2.0 * s).sqrt());
        assert!((got.re - expect).abs() < 1e-10, "got {got}, expect {expect}");
    }

    #[test]
    fn laplace_mass_sums_to_inverse_s() {
        // Column sums of the transform kernel are 1/s (transformed mass
        // conservation), up to the window tail.
        let r = Rates::closed(0.5).unwrap();
        let s = c64(2.0, 0.0);
        let quad = laplace_quad_for(s, 1, &r, 128, 0.12).unwrap();
        let window = LatticeTruncation::new(24).unwrap();
        let space = ConfigSpace::new(window, 1);
        let vals = transition_laplace_window(1, window, s, &r, &quad).unwrap();
        let iy = space.index_of(&cfg(&[0])).unwrap();
        let mut sum = Complex64::new(0.0, 0.0);
        for ix in 0..space.len() {
            sum += vals[ix * space.len() + iy];
        }
        assert!((sum - 0.5).norm() < 1e-8, "sum {sum}");
    }

    #[test]
    fn laplace_rejects_small_s_for_chosen_radii() {
        let r = Rates::closed(0.5).unwrap();
        let quad = QuadratureSpec::default_for(&r).unwrap();
        let err = transition_laplace(&cfg(&[0]), &cfg(&[1]), c64(0.5, 0.0), &r, &quad);
        match err {
            Err(Error::Domain(msg)) => assert!(msg.contains("Re s"), "message: {msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn tasep_routes_away() {
        let r = Rates::tasep(0.0, 0.0).unwrap();
        let quad = QuadratureSpec::new(4.0, 0.1, 64, c64(0.0, 0.0)).unwrap();
        assert!(matches!(
            transition_probability(&cfg(&[1]), &cfg(&[0]), 1.0, &r, &quad),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn capacity_and_shape_guards() {
        let r = Rates::closed(0.5).unwrap();
        let quad = QuadratureSpec::default_for(&r).unwrap();
        assert!(matches!(
            transition_probability(&cfg(&[0, 1, 2, 3, 4]), &cfg(&[0, 1, 2, 3, 4]), 1.0, &r, &quad),
            Err(Error::Capacity(_))
        ));
        assert!(matches!(
            transition_probability(&cfg(&[0, 1]), &cfg(&[0]), 1.0, &r, &quad),
            Err(Error::Domain(_))
        ));
    }
}
