//! Brute-force reference values for oscillatory integrals.
//!
//! Composite tensor Gauss-Legendre quadrature of `exp(i m F) u tau` over a box,
//! where `tau` is a smooth cutoff equal to one on the middle half of the box.
//! The rule is evaluated at two panel counts and rejected when they disagree.

use rug::{Complex, Float};

use crate::num::{cabs, czero, fmax, pi, tolerance};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge: doubling panels changed the value by {0:e} (relative)")]
    NonConvergence(f64),
    #[error("empty or inverted integration box")]
    BadDomain,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<Float>,
    pub weights: Vec<Float>,
}

impl GaussLegendre {
    pub fn new(n: usize, prec: u32) -> Self {
        let work = prec + 32;
        let eps = Float::with_val(work, 1) >> (prec + 8);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut x = Float::with_val(work, guess);
            let mut dp = Float::with_val(work, 1);
            for _ in 0..200 {
                let (p, d) = legendre(n, &x);
                dp = d;
                let dx = Float::with_val(work, &p / &dp);
                x -= &dx;
                if dx.abs() < eps {
                    let (_, d) = legendre(n, &x);
                    dp = d;
                    break;
                }
            }
            let one_minus = Float::with_val(work, 1) - Float::with_val(work, x.square_ref());
            let w = Float::with_val(work, 2) / (one_minus * Float::with_val(work, dp.square_ref()));
            nodes.push(Float::with_val(prec, &x));
            weights.push(Float::with_val(prec, &w));
        }
        Self { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: &Float) -> (Float, Float) {
    let prec = x.prec();
    let mut p0 = Float::with_val(prec, 1);
    let mut p1 = x.clone();
    if n == 0 {
        return (p0, Float::with_val(prec, 0));
    }
    for k in 2..=n {
        let a = Float::with_val(prec, (2 * k - 1) as u32) * x.clone() * &p1;
        let b = Float::with_val(prec, (k - 1) as u32) * &p0;
        let p2 = (a - b) / Float::with_val(prec, k as u32);
        p0 = p1;
        p1 = p2;
    }
    let num = Float::with_val(prec, n as u32) * (Float::with_val(prec, x * &p1) - &p0);
    let den = Float::with_val(prec, x.square_ref()) - 1u32;
    (p1, num / den)
}

/// Smooth cutoff on `R`: one for `|t| <= 1/2`, zero for `|t| >= 1`.
pub fn bump(t: &Float) -> Float {
    let prec = t.prec();
    let a = Float::with_val(prec, t.abs_ref());
    if a <= 0.5 {
        return Float::with_val(prec, 1);
    }
    if a >= 1 {
        return Float::with_val(prec, 0);
    }
    let s = Float::with_val(prec, 2 * a) - 1u32;
    let psi = |y: &Float| -> Float { Float::with_val(prec, Float::with_val(prec, -y.clone().recip()).exp()) };
    let one_minus = Float::with_val(prec, 1) - &s;
    let l = psi(&one_minus);
    let r = psi(&s);
    Float::with_val(prec, &l / Float::with_val(prec, &l + &r))
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Relative disagreement tolerated between the rule and its panel-doubled refinement.
    pub rel_tol: f64,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self { panels: 24, nodes_per_panel: 16, rel_tol: 1e-20 }
    }
}

/// One-dimensional nodes with weights already multiplied by the cutoff.
fn axis_rule(gl: &GaussLegendre, a: &Float, b: &Float, panels: usize) -> Vec<(Float, Float)> {
    let prec = a.prec();
    let width = Float::with_val(prec, b - a) / Float::with_val(prec, panels as u32);
    let half = Float::with_val(prec, &width / 2u32);
    let centre = Float::with_val(prec, a + b) / 2u32;
    let radius = Float::with_val(prec, b - a) / 2u32;
    let mut out = Vec::with_capacity(panels * gl.nodes.len());
    for p in 0..panels {
        let left = Float::with_val(prec, a + Float::with_val(prec, &width * p as u32));
        let mid = Float::with_val(prec, &left + &half);
        for (x, w) in gl.nodes.iter().zip(gl.weights.iter()) {
            let node = Float::with_val(prec, &mid + Float::with_val(prec, &half * x));
            let t = Float::with_val(prec, Float::with_val(prec, &node - &centre) / &radius);
            let cut = bump(&t);
            if cut.is_zero() {
                continue;
            }
            let weight = Float::with_val(prec, &half * w) * cut;
            out.push((node, weight));
        }
    }
    out
}

fn tensor_sum<F, U>(axes: &[Vec<(Float, Float)>], m: &Float, f: &F, u: &U) -> Complex
where
    F: Fn(&[Float]) -> Complex,
    U: Fn(&[Float]) -> Complex,
{
    let prec = m.prec();
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut point: Vec<Float> = axes.iter().map(|a| a[0].0.clone()).collect();
    let mut total = czero(prec);
    let i_m = Complex::with_val(prec, (0, m));
    loop {
        let mut w = Float::with_val(prec, 1);
        for (k, ax) in axes.iter().enumerate() {
            point[k].clone_from(&ax[idx[k]].0);
            w *= &ax[idx[k]].1;
        }
        let ph = Complex::with_val(prec, &i_m * f(&point));
        let val = Complex::with_val(prec, ph.exp_ref()) * u(&point);
        total += val * w;
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// `int_box exp(i m F(x)) u(x) tau(x) dx`.
pub fn oscillatory_integral<F, U>(f: F, u: U, m: &Float, domain: &[(Float, Float)], rule: &QuadratureRule) -> Result<Complex, QuadratureError>
where
    F: Fn(&[Float]) -> Complex,
    U: Fn(&[Float]) -> Complex,
{
    if domain.is_empty() || domain.iter().any(|(a, b)| a >= b) {
        return Err(QuadratureError::BadDomain);
    }
    let prec = m.prec();
    let gl = GaussLegendre::new(rule.nodes_per_panel, prec);
    let coarse_axes: Vec<_> = domain.iter().map(|(a, b)| axis_rule(&gl, a, b, rule.panels)).collect();
    let fine_axes: Vec<_> = domain.iter().map(|(a, b)| axis_rule(&gl, a, b, 2 * rule.panels)).collect();
    let coarse = tensor_sum(&coarse_axes, m, &f, &u);
    let fine = tensor_sum(&fine_axes, m, &f, &u);
    let diff = cabs(&Complex::with_val(prec, &fine - &coarse));
    let scale = fmax(cabs(&fine), tolerance(prec));
    let rel = Float::with_val(prec, diff / scale).to_f64();
    if rel > rule.rel_tol {
        return Err(QuadratureError::NonConvergence(rel));
    }
    Ok(fine)
}

/// `sqrt(pi / a)`, the Gaussian integral used to sanity-check the rules.
pub fn gaussian_integral(a: &Float) -> Float {
    let prec = a.prec();
    Float::with_val(prec, pi(prec) / a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rug::ops::Pow;

    const P: u32 = 128;

    #[test]
    fn nodes_integrate_polynomials_exactly() {
        let gl = GaussLegendre::new(8, P);
        // int_{-1}^{1} x^14 = 2/15
        let mut s = Float::with_val(P, 0);
        for (x, w) in gl.nodes.iter().zip(gl.weights.iter()) {
            s += Float::with_val(P, x.clone().pow(14u32)) * w;
        }
        let err = Float::with_val(P, s - Float::with_val(P, 2) / 15u32).abs();
        assert!(err < 1e-36);
        let total: Float = gl.weights.iter().fold(Float::with_val(P, 0), |acc, w| acc + w);
        assert!(Float::with_val(P, total - 2u32).abs() < 1e-36);
    }

    #[test]
    fn bump_is_flat_then_vanishes() {
        assert_eq!(bump(&Float::with_val(P, 0.3)), 1);
        assert_eq!(bump(&Float::with_val(P, -1.2)), 0);
        let mid = bump(&Float::with_val(P, 0.75));
        assert!(Float::with_val(P, mid - 0.5f64).abs() < 1e-30);
    }

    #[test]
    fn gaussian_integral_reproduced() {
        let m = Float::with_val(P, 40);
        let f = |x: &[Float]| Complex::with_val(P, (0, Float::with_val(P, x[0].square_ref())));
        let u = |_: &[Float]| Complex::with_val(P, 1);
        let l = Float::with_val(P, 2);
        let dom = [(-l.clone(), l)];
        let v = oscillatory_integral(f, u, &m, &dom, &QuadratureRule::default()).unwrap();
        let exact = gaussian_integral(&m);
        assert!(cabs(&Complex::with_val(P, v - exact)) < 1e-25);
    }

    #[test]
    fn coarse_rule_is_flagged() {
        let m = Float::with_val(P, 400);
        let f = |x: &[Float]| Complex::with_val(P, (0, Float::with_val(P, x[0].square_ref())));
        let u = |_: &[Float]| Complex::with_val(P, 1);
        let l = Float::with_val(P, 4);
        let dom = [(-l.clone(), l)];
        let rule = QuadratureRule { panels: 2, nodes_per_panel: 6, rel_tol: 1e-20 };
        assert!(matches!(oscillatory_integral(f, u, &m, &dom, &rule), Err(QuadratureError::NonConvergence(_))));
    }
}
