//! The totally asymmetric case p = 1.
//!
//! The half-line contour formulas break down at p = 1, but with right hops
//! only the origin boundary never acts, so the transition probability is
//! the full-line one and has a single-contour determinant form. On top of
//! it sit: the resolvent shift identity (I - alpha L0(s))^{-1} =
//! I + alpha L0(s - alpha) for origin-pinned kernels (a semigroup fact:
//! with p = 1 a leftmost particle that starts and ends at the origin never
//! moved), closed-form occupation-count probabilities P_0, P_1, P_2 for a
//! reservoir with ejection off, and the count-curve data whose maxima move
//! right with n.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{det, CMat};
use crate::model::{ConfigSpace, Configuration, LatticeTruncation, Rates};
use crate::oracle::{build_ladder_generator, build_sector_generator};

/// Contour parameters for the determinant entries: a circle of radius < 1
/// around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeterminantQuad {
    pub radius: f64,
    pub nodes: usize,
}

impl Default for DeterminantQuad {
    fn default() -> Self {
        DeterminantQuad { radius: 0.5, nodes: 256 }
    }
}

impl DeterminantQuad {
    pub fn new(radius: f64, nodes: usize) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::Domain(format!(
                "determinant contour radius must lie in (0, 1), got {radius}"
            )));
        }
        if nodes < 16 {
            return Err(Error::Domain("need at least 16 nodes".into()));
        }
        Ok(DeterminantQuad { radius, nodes })
    }
}

/// p(x, y; t) for TASEP as an n x n determinant of single-contour
/// integrals: entry (i, j) is
/// (1/2 pi i) int (1 - xi)^{j-i} xi^{x_i - y_j - 1} e^{t (1/xi - 1)} dxi.
pub fn tasep_determinant(
    x: &Configuration,
    y: &Configuration,
    t: f64,
    quad: DeterminantQuad,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain("configurations must have equal particle counts".into()));
    }
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    let n = x.len();
    if n == 0 {
        return Ok(1.0);
    }
    let eval = |nodes: usize| -> Complex64 {
        let mut entries = CMat::zeros(n, n);
        // Shared node ring.
        let ring: Vec<(Complex64, Complex64)> = (0..nodes)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / nodes as f64;
                let xi = Complex64::from_polar(quad.radius, theta);
                (xi, xi / nodes as f64)
            })
            .collect();
        for i in 0..n {
            for j in 0..n {
                let pow = x.site(i) as i64 - y.site(j) as i64 - 1;
                let rel = j as i64 - i as i64;
                let mut acc = Complex64::new(0.0, 0.0);
                for &(xi, w) in &ring {
                    let mut v = w * (t * (1.0 / xi - 1.0)).exp();
                    v *= xi.powi(pow as i32);
                    v *= (1.0 - xi).powi(rel as i32);
                    acc += v;
                }
                entries[(i, j)] = acc;
            }
        }
        det(&entries)
    };
    let mut nodes = quad.nodes.max(16);
    let mut prev: Option<Complex64> = None;
    for _ in 0..=4 {
        let v = eval(nodes);
        if let Some(p) = prev {
            if (v - p).norm() < 1e-10 {
                if v.im.abs() > 1e-8 {
                    return Err(Error::Accuracy(format!(
                        "imaginary residue {:.3e} in determinant value",
                        v.im
                    )));
                }
                return Ok(v.re);
            }
        }
        prev = Some(v);
        nodes *= 2;
    }
    Err(Error::Accuracy(
        "determinant quadrature did not converge within 4 node doublings".into(),
    ))
}

/// Builds the origin-pinned kernel matrix L^0_n(s) over X^+_n from the
/// exact (n+1)-particle resolvent: entries phi((0, x), (0, y); s).
fn pinned_kernel(n: usize, s: Complex64, trunc: LatticeTruncation) -> Result<(Vec<usize>, CMat)> {
    let rates = Rates::tasep(0.0, 0.0)?;
    let space = ConfigSpace::new(trunc, n + 1);
    let sector = build_sector_generator(&rates, &space);
    let kernel = sector.laplace_kernel(s)?;
    let zero_idx = space.zero_headed();
    let sub = kernel.submatrix(&zero_idx, &zero_idx);
    Ok((zero_idx, sub))
}

/// Max-abs deviation of (I - alpha L^0_n(s)) (I + alpha L^0_n(s - alpha))
/// from the identity on the truncated kernels. The semigroup property of
/// origin-pinned TASEP kernels holds exactly on the window, so deviations
/// measure linear-algebra error only.
pub fn resolvent_identity_check(
    n: usize,
    s: Complex64,
    alpha: f64,
    window: LatticeTruncation,
) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(Error::Domain("resolvent identity check supports n in {1, 2}".into()));
    }
    if s.re <= alpha {
        return Err(Error::Domain(format!(
            "need Re s > alpha so the shifted kernel exists; got Re s = {}, alpha = {alpha}",
            s.re
        )));
    }
    let (_, l0_s) = pinned_kernel(n, s, window)?;
    let (_, l0_shift) = pinned_kernel(n, s - alpha, window)?;
    // Tail test: the kernels must have decayed before the right edge for
    // the half-line reading of the identity to be meaningful.
    let dim = l0_s.rows();
    let tail = l0_s[(dim - 1, 0)].norm().max(l0_shift[(dim - 1, 0)].norm());
    if tail > 1e-12 {
        return Err(Error::Truncation(format!(
            "kernel mass {tail:.3e} still present at the right edge; enlarge the window"
        )));
    }
    let a = Complex64::new(alpha, 0.0);
    let lhs = CMat::identity(dim).sub(&l0_s.scale(a));
    let rhs = CMat::identity(dim).add(&l0_shift.scale(a));
    let dev = lhs.matmul(&rhs).sub(&CMat::identity(dim)).max_abs();
    Ok(dev)
}

/// Closed-form probability of exactly n particles at time t, starting
/// empty, for p = 1, ejection off, injection rate alpha. Supports
/// n in {0, 1, 2}; near alpha = 1 the analytic limit forms take over.
pub fn tasep_pn_closed(n: usize, alpha: f64, t: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Domain("injection rate must be positive".into()));
    }
    if t < 0.0 {
        return Err(Error::Domain("time must be nonnegative".into()));
    }
    match n {
        0 => Ok((-alpha * t).exp()),
        1 => {
            if (alpha - 1.0).abs() < 1e-6 {
                // Limit of the generic form as alpha -> 1.
                Ok((t + 0.5 * t * t) * (-t).exp())
            } else {
                let g = alpha / (1.0 - alpha);
                Ok(g * (t - g) * (-alpha * t).exp() + g * g * (-t).exp())
            }
        }
        2 => {
            if (alpha - 1.0).abs() < 1e-6 {
                // Limit form, cross-checked against the exact generator.
                Ok((-t).exp() * (1.0 - t + 0.5 * t * t + t.powi(4) / 12.0)
                    - (-2.0 * t).exp())
            } else {
                let om = 1.0 - alpha;
                let a2 = alpha * alpha;
                let first = (a2 / (2.0 * om * om)) * t * t - (a2 / om.powi(3)) * t
                    + a2 / (om * om);
                let second = (a2 / (2.0 * om * om)) * t * t
                    - (alpha * (1.0 - 3.0 * alpha + a2) / om.powi(3)) * t
                    + (1.0 - 2.0 * alpha) / (om * om);
                Ok(first * (-alpha * t).exp() + second * (-t).exp()
                    - (-(1.0 + alpha) * t).exp())
            }
        }
        _ => Err(Error::Unsupported(
            "closed forms cover n <= 2; use the open-boundary pipeline or the oracle beyond"
                .into(),
        )),
    }
}

/// Count-probability curves P_n(t) for n = 0..=n_max on a time grid, and
/// the grid argmax of each curve. Closed forms supply n <= 2; n = 3 comes
/// from the count-ladder oracle (exact for ejection-off dynamics).
#[derive(Debug, Clone)]
pub struct Figure1Data {
    /// Long format: (t, n, P_n(t)).
    pub rows: Vec<(f64, usize, f64)>,
    /// argmax_t P_n(t) per n.
    pub argmax_times: Vec<f64>,
}

pub fn figure1_data(alpha: f64, t_grid: &[f64], n_max: usize) -> Result<Figure1Data> {
    if n_max > 3 {
        return Err(Error::Unsupported("count curves provided for n <= 3".into()));
    }
    if t_grid.len() < 3 {
        return Err(Error::Resolution("need at least three grid points".into()));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Domain("time grid must strictly increase".into()));
        }
    }
    let t_max = *t_grid.last().unwrap();

    // Oracle curves for every n at once (and the only source for n = 3):
    // the ladder with sectors 0..=n_max is exact for beta = 0.
    let oracle_curves: Vec<Vec<f64>> = {
        let rates = Rates::tasep(alpha, 0.0)?;
        let l = (t_max + 4.0 * t_max.sqrt() + 8.0).ceil() as usize;
        let trunc = LatticeTruncation::new(l)?;
        let ladder = build_ladder_generator(&rates, trunc, n_max)?;
        let mut dist = ladder.evolve_delta(0, &Configuration::empty(), 0.0)?;
        let mut prev_t = 0.0;
        let mut curves = vec![Vec::with_capacity(t_grid.len()); n_max + 1];
        for &t in t_grid {
            dist = ladder.evolve(&dist, t - prev_t)?;
            prev_t = t;
            for (n, curve) in curves.iter_mut().enumerate() {
                curve.push(dist.sector_total(n));
            }
        }
        curves
    };

    let mut rows = Vec::with_capacity(t_grid.len() * (n_max + 1));
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let curve: Vec<f64> = if n <= 2 {
            t_grid.iter().map(|&t| tasep_pn_closed(n, alpha, t)).collect::<Result<_>>()?
        } else {
            oracle_curves[n].clone()
        };
        for (&t, &v) in t_grid.iter().zip(curve.iter()) {
            rows.push((t, n, v));
        }
        curves.push(curve);
    }

    let mut argmax_times = Vec::with_capacity(n_max + 1);
    for (n, curve) in curves.iter().enumerate() {
        let (idx, _) = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .expect("nonempty grid");
        // P_0 is monotone decreasing: its maximum legitimately sits at the
        // grid start. Every other curve must peak in the interior.
        if n > 0 && (idx == 0 || idx + 1 == curve.len()) {
            return Err(Error::Resolution(format!(
                "P_{n} attains its grid maximum on the boundary; refine or extend the grid"
            )));
        }
        argmax_times.push(t_grid[idx]);
    }
    Ok(Figure1Data { rows, argmax_times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(sites: &[usize]) -> Configuration {
        Configuration::new(sites.to_vec()).unwrap()
    }

    fn ln_factorial(k: usize) -> f64 {
        (1..=k).map(|v| (v as f64).ln()).sum()
    }

    #[test]
    fn single_particle_is_poisson() {
        // p(x, y; t) = e^{-t} t^{x-y} / (x-y)! for x >= y.
        let t = 1.3;
        for (x, y) in [(0usize, 0usize), (3, 0), (5, 2), (7, 0)] {
            let got = tasep_determinant(&cfg(&[x]), &cfg(&[y]), t, DeterminantQuad::default())
                .unwrap();
            let k = x - y;
            let expect = (-t + (k as f64) * t.ln() - ln_factorial(k)).exp();
            assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
        }
        // Left moves are impossible.
        let gone = tasep_determinant(&cfg(&[1]), &cfg(&[2]), 0.9, DeterminantQuad::default())
            .unwrap();
        assert!(gone.abs() < 1e-12);
    }

    #[test]
    fn determinant_initial_condition() {
        let x = cfg(&[1, 4]);
        let same = tasep_determinant(&x, &x, 0.0, DeterminantQuad::default()).unwrap();
        assert_abs_diff_eq!(same, 1.0, epsilon = 1e-12);
        let other = cfg(&[2, 4]);
        let off = tasep_determinant(&other, &x, 0.0, DeterminantQuad::default()).unwrap();
        assert!(off.abs() < 1e-12);
    }

    #[test]
    fn determinant_matches_sector_oracle_n2() {
        // Right hops only never feel the origin wall, so the closed sector
        // oracle on a window is the full-line answer.
        let rates = Rates::tasep(0.0, 0.0).unwrap();
        let trunc = LatticeTruncation::new(20).unwrap();
        let space = ConfigSpace::new(trunc, 2);
        let sector = build_sector_generator(&rates, &space);
        let y = cfg(&[0, 1]);
        let t = 1.0;
        let dist = sector.evolve_delta(&y, t).unwrap();
        for x in [cfg(&[2, 3]), cfg(&[0, 1]), cfg(&[1, 5]), cfg(&[4, 7])] {
            let got = tasep_determinant(&x, &y, t, DeterminantQuad::default()).unwrap();
            let expect = dist[space.index_of(&x).unwrap()];
            assert_abs_diff_eq!(got, expect, epsilon = 1e-8);
        }
    }

    #[test]
    fn resolvent_identity_holds() {
        let window = LatticeTruncation::new(40).unwrap();
        // alpha = 0: both sides are the identity.
        let dev0 = resolvent_identity_check(1, Complex64::new(3.0, 0.0), 0.0, window).unwrap();
        assert!(dev0 < 1e-14);
        let dev = resolvent_identity_check(1, Complex64::new(3.0, 0.0), 0.5, window).unwrap();
        assert!(dev < 1e-6, "n=1 alpha=0.5 deviation {dev:.3e}");
        let dev = resolvent_identity_check(1, Complex64::new(4.0, 0.0), 1.0, window).unwrap();
        assert!(dev < 1e-6, "n=1 alpha=1 deviation {dev:.3e}");
    }

    #[test]
    fn resolvent_identity_needs_room() {
        assert!(matches!(
            resolvent_identity_check(1, Complex64::new(2.0, 0.0), 3.0, LatticeTruncation::new(30).unwrap()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pn_closed_examples() {
        // P_0(1) at alpha = 1.
        assert_abs_diff_eq!(tasep_pn_closed(0, 1.0, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        // P_1(1) at alpha = 1/2 collapses to e^{-1}.
        assert_abs_diff_eq!(tasep_pn_closed(1, 0.5, 1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-12);
        // alpha = 1 limit of P_1 at t = 1: 1.5 e^{-1}.
        assert_abs_diff_eq!(
            tasep_pn_closed(1, 1.0, 1.0).unwrap(),
            1.5 * (-1.0f64).exp(),
            epsilon = 1e-12
        );
        assert!(tasep_pn_closed(3, 1.0, 1.0).is_err());
    }

    #[test]
    fn pn_closed_matches_ladder_oracle() {
        let trunc = LatticeTruncation::new(16).unwrap();
        for &alpha in &[0.5f64, 1.0, 2.0] {
            let rates = Rates::tasep(alpha, 0.0).unwrap();
            let ladder = build_ladder_generator(&rates, trunc, 3).unwrap();
            for &t in &[0.5f64, 1.5, 3.0] {
                let dist = ladder.evolve_delta(0, &Configuration::empty(), t).unwrap();
                for n in 0..=2 {
                    let closed = tasep_pn_closed(n, alpha, t).unwrap();
                    let oracle = dist.sector_total(n);
                    assert_abs_diff_eq!(closed, oracle, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn alpha_one_limit_is_continuous() {
        for n in 1..=2 {
            for &t in &[0.5f64, 1.0, 2.5] {
                let limit = tasep_pn_closed(n, 1.0, t).unwrap();
                let near_above = tasep_pn_closed(n, 1.0 + 1e-4, t).unwrap();
                let near_below = tasep_pn_closed(n, 1.0 - 1e-4, t).unwrap();
                assert_abs_diff_eq!(limit, near_above, epsilon = 1e-6);
                assert_abs_diff_eq!(limit, near_below, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn figure1_maxima_move_right() {
        let grid: Vec<f64> = (0..=120).map(|i| i as f64 * 0.05).collect();
        let data = figure1_data(1.0, &grid, 3).unwrap();
        // P_0 decreasing: argmax at the grid start.
        assert_eq!(data.argmax_times[0], 0.0);
        for w in data.argmax_times.windows(2) {
            assert!(w[1] > w[0], "argmax ordering violated: {:?}", data.argmax_times);
        }
        // Probabilities of disjoint events.
        for &t in &grid {
            let total: f64 = data
                .rows
                .iter()
                .filter(|(rt, _, _)| (*rt - t).abs() < 1e-12)
                .map(|(_, _, v)| v)
                .sum();
            assert!(total <= 1.0 + 1e-9, "sum over n exceeds 1 at t = {t}");
        }
    }
}
