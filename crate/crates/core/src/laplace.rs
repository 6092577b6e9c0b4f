//! Numerical inverse Laplace transforms and a forward transform for sampled
//! time series.
//!
//! Two methods with very different failure modes are provided, so their
//! agreement is a strong correctness check:
//!
//! - fixed-contour Talbot (complex nodes wrapping the negative real axis),
//!   the default — handles the square-root branch points our transforms
//!   carry on the negative axis;
//! - Gaver-Stehfest (real nodes, alternating weights), limited to order 18
//!   by double-precision cancellation.
//!
//! The `shift` field performs the substitution F(. + shift) before
//! inversion; inverting a transform known at shifted arguments this way is
//! how the open-boundary alpha-shift bookkeeping is handled without ever
//! multiplying by e^{alpha t}.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InversionMethod {
    Talbot,
    GaverStehfest,
}

/// Parameters of a numerical inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceInverterSpec {
    pub method: InversionMethod,
    /// Talbot node count, or Gaver-Stehfest order (even, at most 18).
    pub order: usize,
    /// Evaluate the callable at (node + shift).
    pub shift: f64,
}

impl LaplaceInverterSpec {
    pub fn talbot(order: usize) -> Result<Self> {
        if order < 16 {
            return Err(Error::Domain(format!("talbot needs at least 16 nodes, got {order}")));
        }
        Ok(LaplaceInverterSpec { method: InversionMethod::Talbot, order, shift: 0.0 })
    }

    pub fn gaver_stehfest(order: usize) -> Result<Self> {
        if order % 2 != 0 || order > 18 || order == 0 {
            return Err(Error::Domain(format!(
                "gaver-stehfest order must be even and at most 18, got {order}"
            )));
        }
        Ok(LaplaceInverterSpec { method: InversionMethod::GaverStehfest, order, shift: 0.0 })
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }
}

impl Default for LaplaceInverterSpec {
    fn default() -> Self {
        LaplaceInverterSpec { method: InversionMethod::Talbot, order: 32, shift: 0.0 }
    }
}

/// A linear inversion rule: f(t) ~ sum_k Re(weight_k * F(node_k)).
/// Exposing the rule lets callers evaluate a whole vector of transforms at
/// shared nodes (one linear solve per node instead of per component).
pub fn inversion_rule(t: f64, spec: &LaplaceInverterSpec) -> Result<Vec<(Complex64, Complex64)>> {
    if t <= 0.0 {
        return Err(Error::Domain(format!("inversion requires t > 0, got {t}")));
    }
    match spec.method {
        InversionMethod::Talbot => Ok(talbot_rule(t, spec.order)),
        InversionMethod::GaverStehfest => Ok(gaver_stehfest_rule(t, spec.order)),
    }
}

/// Fixed Talbot contour: s(theta) = r theta (cot theta + i) with
/// r = 2 M / (5 t), evaluated at theta_k = k pi / M.
fn talbot_rule(t: f64, m: usize) -> Vec<(Complex64, Complex64)> {
    let mf = m as f64;
    let r = 2.0 * mf / (5.0 * t);
    let mut rule = Vec::with_capacity(m);
    // theta = 0 node: s = r, weight (r/M) * e^{rt} / 2.
    let w0 = Complex64::new(r / mf * 0.5 * (r * t).exp(), 0.0);
    rule.push((Complex64::new(r, 0.0), w0));
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / mf;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let nu = theta + (theta * cot - 1.0) * cot;
        let w = (s * t).exp() * Complex64::new(1.0, nu) * (r / mf);
        rule.push((s, w));
    }
    rule
}

/// Gaver-Stehfest: real nodes k ln2 / t with the classical alternating
/// weights. Order-18 factorials are still exact in f64.
fn gaver_stehfest_rule(t: f64, order: usize) -> Vec<(Complex64, Complex64)> {
    let ln2t = std::f64::consts::LN_2 / t;
    let zeta = stehfest_weights(order);
    (1..=order)
        .map(|k| {
            (
                Complex64::new(k as f64 * ln2t, 0.0),
                Complex64::new(zeta[k - 1] * ln2t, 0.0),
            )
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, v| acc * v as f64)
}

fn stehfest_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    (1..=n)
        .map(|k| {
            let mut sum = 0.0;
            for j in k.div_ceil(2)..=k.min(half) {
                sum += (j as f64).powi(half as i32) * factorial(2 * j)
                    / (factorial(half - j)
                        * factorial(j)
                        * factorial(j - 1)
                        * factorial(k - j)
                        * factorial(2 * j - k));
            }
            if (k + half) % 2 == 0 {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

/// Inverts a scalar transform at time t.
pub fn invert<F>(f: F, t: f64, spec: &LaplaceInverterSpec) -> Result<f64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let shift = Complex64::new(spec.shift, 0.0);
    let mut acc = 0.0;
    for (node, weight) in inversion_rule(t, spec)? {
        let v = f(node + shift)?;
        let term = (weight * v).re;
        if !term.is_finite() {
            return Err(Error::Inversion(format!(
                "non-finite contribution at node {node} (t = {t})"
            )));
        }
        acc += term;
    }
    Ok(acc)
}

/// Inverts a vector of transforms sharing their evaluation nodes.
pub fn invert_many<F>(f: F, t: f64, spec: &LaplaceInverterSpec) -> Result<Vec<f64>>
where
    F: Fn(Complex64) -> Result<Vec<Complex64>>,
{
    let shift = Complex64::new(spec.shift, 0.0);
    let mut acc: Option<Vec<f64>> = None;
    for (node, weight) in inversion_rule(t, spec)? {
        let vs = f(node + shift)?;
        let acc = acc.get_or_insert_with(|| vec![0.0; vs.len()]);
        if vs.len() != acc.len() {
            return Err(Error::Inversion("transform changed dimension between nodes".into()));
        }
        for (a, v) in acc.iter_mut().zip(vs.iter()) {
            let term = (weight * v).re;
            if !term.is_finite() {
                return Err(Error::Inversion(format!(
                    "non-finite contribution at node {node} (t = {t})"
                )));
            }
            *a += term;
        }
    }
    acc.ok_or_else(|| Error::Inversion("empty inversion rule".into()))
}

/// Runs both methods and returns (talbot value, |talbot - gaver-stehfest|).
/// Disagreement beyond ~1e-4 relative is the self-diagnosis that one of
/// them broke.
pub fn invert_cross_checked<F>(
    f: F,
    t: f64,
    talbot_order: usize,
    gs_order: usize,
    shift: f64,
) -> Result<(f64, f64)>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let tal = invert(&f, t, &LaplaceInverterSpec::talbot(talbot_order)?.with_shift(shift))?;
    let gs = invert(&f, t, &LaplaceInverterSpec::gaver_stehfest(gs_order)?.with_shift(shift))?;
    Ok((tal, (tal - gs).abs()))
}

/// Composite trapezoidal transform of a sampled time series:
/// integral of e^{-st} v(t) over the sampled range, with the exponential
/// tail bound checked against 1e-10.
pub fn forward_transform(samples: &[(f64, f64)], s: Complex64) -> Result<Complex64> {
    if samples.len() < 2 {
        return Err(Error::Domain("forward transform needs at least two samples".into()));
    }
    for w in samples.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Domain("sample times must strictly increase".into()));
        }
    }
    let t_end = samples.last().unwrap().0;
    let max_abs = samples.iter().map(|&(_, v)| v.abs()).fold(0.0f64, f64::max);
    let tail = (-s.re * t_end).exp() * max_abs;
    if !(tail <= 1e-10) {
        return Err(Error::Truncation(format!(
            "tail bound e^(-Re s * T) max|v| = {tail:.3e} exceeds 1e-10; extend the series"
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for w in samples.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let f0 = (-s * t0).exp() * v0;
        let f1 = (-s * t1).exp() * v1;
        acc += 0.5 * (t1 - t0) * (f0 + f1);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn invert_one_over_s() {
        let spec = LaplaceInverterSpec::default();
        for &t in &[0.1, 1.0, 7.0, 42.0] {
            let v = invert(|s| Ok(1.0 / s), t, &spec).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
        }
        let gs = LaplaceInverterSpec::gaver_stehfest(16).unwrap();
        let v = invert(|s| Ok(1.0 / s), 3.0, &gs).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn invert_exponential_pair() {
        // F(s) = 1/(s + 0.7) -> e^{-0.7 t}; at t = 2 that's e^{-1.4}.
        let spec = LaplaceInverterSpec::default();
        let v = invert(|s| Ok(1.0 / (s + 0.7)), 2.0, &spec).unwrap();
        assert_abs_diff_eq!(v, (-1.4f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn invert_with_branch_point() {
        // F(s) = 1/sqrt(s) -> 1/sqrt(pi t); exercises the negative-axis cut.
        let spec = LaplaceInverterSpec::default();
        let v = invert(|s| Ok(1.0 / s.sqrt()), 2.5, &spec).unwrap();
        assert_abs_diff_eq!(v, 1.0 / (std::f64::consts::PI * 2.5).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn methods_agree_on_rational_transform() {
        let f = |s: Complex64| Ok(1.0 / (s * s + 1.0)); // sin t
        let (v, dev) = invert_cross_checked(f, 1.2, 32, 16, 0.0).unwrap();
        assert_abs_diff_eq!(v, 1.2f64.sin(), epsilon = 1e-7);
        assert!(dev < 1e-6, "methods disagree by {dev:.3e}");
    }

    #[test]
    fn shift_inverts_shifted_transform() {
        // F(z) = 1/(z - 0.3) is the transform of e^{0.3 t}; with shift 0.8
        // we invert z -> F(z + 0.8), i.e. the transform of e^{-0.5 t}.
        let spec = LaplaceInverterSpec::default().with_shift(0.8);
        let v = invert(|s| Ok(1.0 / (s - 0.3)), 2.0, &spec).unwrap();
        assert_abs_diff_eq!(v, (-1.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn invert_many_matches_scalar() {
        let spec = LaplaceInverterSpec::default();
        let out = invert_many(|s| Ok(vec![1.0 / s, 1.0 / (s + 1.0)]), 1.5, &spec).unwrap();
        assert_abs_diff_eq!(out[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(out[1], (-1.5f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn forward_transform_of_constant_and_exponential() {
        let n = 4001;
        let t_max = 40.0;
        let ones: Vec<(f64, f64)> =
            (0..n).map(|i| (i as f64 * t_max / (n - 1) as f64, 1.0)).collect();
        let v = forward_transform(&ones, c(1.0)).unwrap();
        assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-5);

        // e^{-t} at s = 1 -> 1/2. Trapezoid error ~ h^2/12 * integrand''.
        let decay: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = i as f64 * t_max / (n - 1) as f64;
                (t, (-t).exp())
            })
            .collect();
        let v = forward_transform(&decay, c(1.0)).unwrap();
        assert_abs_diff_eq!(v.re, 0.5, epsilon = 1e-4);
    }

    #[test]
    fn forward_transform_rejects_short_series() {
        let samples: Vec<(f64, f64)> = (0..11).map(|i| (i as f64 * 0.1, 1.0)).collect();
        assert!(matches!(
            forward_transform(&samples, c(1.0)),
            Err(Error::Truncation(_))
        ));
    }

    #[test]
    fn round_trip_forward_of_inverse() {
        // Invert F(s) = 1/(s+1)^2 (= t e^{-t}), then transform back.
        let spec = LaplaceInverterSpec::default();
        let n = 2001;
        let t_max = 35.0;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) * t_max / n as f64;
                (t, invert(|s| Ok(1.0 / ((s + 1.0) * (s + 1.0))), t, &spec).unwrap())
            })
            .collect();
        let s0 = c(2.0);
        let got = forward_transform(&samples, s0).unwrap();
        // The sampled range misses [0, first node); that's within the loose
        // tolerance here.
        assert_abs_diff_eq!(got.re, (1.0 / ((s0 + 1.0) * (s0 + 1.0))).re, epsilon = 1e-3);
    }

    #[test]
    fn spec_validation() {
        assert!(LaplaceInverterSpec::gaver_stehfest(20).is_err());
        assert!(LaplaceInverterSpec::gaver_stehfest(15).is_err());
        assert!(LaplaceInverterSpec::talbot(8).is_err());
        assert!(invert(|s| Ok(1.0 / s), 0.0, &LaplaceInverterSpec::default()).is_err());
    }
}
