//! Numerical checks that tie the exact sphere kernels, the stationary phase
//! engine and the closed-form coefficients together.
//!
//! Each check returns [`CheckResult`]s carrying the measured value, the
//! expected value, the error and the tolerance, so callers can print or
//! serialize them. Criteria are numbered 1 to 8:
//!
//! 1. leading coefficient of `S_m(x, x)` against `1 / (2 pi^{n+1})`;
//! 2. its second coefficient against `R / (4 pi^{n+1})`;
//! 3. fitted `b_{0,k}` against the closed form;
//! 4. fitted `b_{1,k}` against the closed form, and the local assembly against it;
//! 5. the stationary phase engine against quadrature on [`reference_phases`];
//! 6. slice sums against trapezoid-rule group integrals;
//! 7. Haar density identities and the character Laplacian;
//! 8. stationary phase on the orbit integral against the exact kernel.

use rug::{Complex, Float};

use crate::coefficients::{sphere_geometry, ModelGeometry};
use crate::fit::{fit_coefficients, leading_stability, ExpansionSamples, FitError};
use crate::group_geometry::{haar_check_defect, GroupError, TorusGroup};
use crate::jets::{Jet, JetError};
use crate::num::{cabs, cplx, czero, fmax, half_integer_power, pi};
use crate::pseudohermitian::tw_scalar_curvature;
use crate::quadrature::{oscillatory_integral, QuadratureError, QuadratureRule};
use crate::sphere_model::{SphereError, SphereModel, SpherePoint};
use crate::stationary_phase::{sp_expand, StationaryPhaseError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    StationaryPhase(#[from] StationaryPhaseError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("{0}")]
    Config(String),
}

impl From<crate::pseudohermitian::PseudohermitianError> for VerifyError {
    fn from(e: crate::pseudohermitian::PseudohermitianError) -> Self {
        VerifyError::Sphere(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// Pass when `error <= tolerance`.
    AtMost,
    /// Pass when `measured >= tolerance` (slopes).
    AtLeast,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub criterion: u8,
    pub name: String,
    pub measured: f64,
    pub expected: f64,
    pub error: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(criterion: u8, name: impl Into<String>, measured: f64, expected: f64, error: f64, tolerance: f64) -> Self {
        let passed = error.is_finite() && error <= tolerance;
        Self { criterion, name: name.into(), measured, expected, error, tolerance, comparison: Comparison::AtMost, passed }
    }

    fn at_least(criterion: u8, name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        let passed = measured.is_finite() && measured >= tolerance;
        Self { criterion, name: name.into(), measured, expected: tolerance, error: 0.0, tolerance, comparison: Comparison::AtLeast, passed }
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub b1_local: f64,
    pub fit_stability: f64,
    pub sp_slope: f64,
    pub gaussian: f64,
    pub group_integral: f64,
    pub haar: f64,
    pub lap_char: f64,
    /// Route slope must reach `jmax + route_slope_margin`.
    pub route_slope_margin: f64,
    pub route_coeff: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            a0: 1e-6,
            a1: 1e-6,
            b0: 1e-5,
            b1: 1e-3,
            b1_local: 1e-10,
            fit_stability: 1e-5,
            sp_slope: 2.7,
            gaussian: 1e-25,
            group_integral: 1e-8,
            haar: 1e-12,
            lap_char: 1e-8,
            route_slope_margin: 0.7,
            route_coeff: 1e-3,
        }
    }
}

fn rel(a: &Float, b: &Float) -> f64 {
    let prec = a.prec();
    let den = fmax(b.clone().abs(), Float::with_val(prec, 1e-300));
    (Float::with_val(prec, a - b).abs() / den).to_f64()
}

/// Least-squares slope of `-log err` against `log m`.
pub fn decay_slope(ms: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| -e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `S_{k,m}(p, p)` for the degrees in `[m_min, m_max]` with a nonempty slice.
pub fn km_samples(model: &SphereModel, p: &SpherePoint, k: &[i64], m_min: u64, m_max: u64) -> Result<ExpansionSamples, FitError> {
    let entries = (m_min.max(1)..=m_max)
        .filter(|&m| model.slice_size(k, m as usize) > 0)
        .map(|m| (m, model.szego_km_diag(k, m as usize, p)))
        .collect();
    ExpansionSamples::new(entries, 2 * model.n() as i64 - model.d() as i64)
}

/// `S_m(p, p)` for `m` in `[m_min, m_max]`.
pub fn full_samples(model: &SphereModel, p: &SpherePoint, m_min: u64, m_max: u64) -> Result<ExpansionSamples, FitError> {
    let entries = (m_min.max(1)..=m_max).map(|m| (m, model.szego_m_diag(m as usize, p))).collect();
    ExpansionSamples::new(entries, 2 * model.n() as i64)
}

/// Criteria 1 and 2 on the model's sphere, from `S_m(p, p)` with `10 <= m <= 60`.
pub fn check_full_kernel(model: &SphereModel, p: &SpherePoint, tol: &Tolerances) -> Result<Vec<CheckResult>, VerifyError> {
    let prec = model.prec();
    let n = model.n();
    let s = full_samples(model, p, 10, 60)?;
    let fit = fit_coefficients(&s, 3)?;
    let a0 = crate::coefficients::a0(n, prec);
    let r = tw_scalar_curvature(&model.brt_potential(p, 6)?)?;
    let a1 = crate::coefficients::a1(n, &r);
    let tag = format!("S^{}", 2 * n + 1);
    Ok(vec![
        CheckResult::at_most(1, format!("a0 on {tag}"), fit.coeffs[0].to_f64(), a0.to_f64(), rel(&fit.coeffs[0], &a0), tol.a0),
        CheckResult::at_most(2, format!("a1 on {tag}"), fit.coeffs[1].to_f64(), a1.to_f64(), rel(&fit.coeffs[1], &a1), tol.a1),
    ])
}

fn label(model: &SphereModel, k: &[i64]) -> String {
    format!("W={:?} k={:?}", model.weights(), k)
}

/// Fitted expansion of one weight slice next to its predicted coefficients.
#[derive(Debug, Clone)]
pub struct SliceFit {
    pub k: Vec<i64>,
    pub samples: ExpansionSamples,
    pub fit: crate::fit::FitResult,
    pub stability: Float,
    pub geometry: ModelGeometry,
}

pub fn fit_slice(model: &SphereModel, p: &SpherePoint, k: &[i64], m_min: u64, m_max: u64, terms: usize) -> Result<SliceFit, VerifyError> {
    let samples = km_samples(model, p, k, m_min, m_max)?;
    let fit = fit_coefficients(&samples, terms)?;
    let stability = leading_stability(&samples, terms)?;
    let geometry = sphere_geometry(model, p, k)?;
    Ok(SliceFit { k: k.to_vec(), samples, fit, stability, geometry })
}

/// Criteria 3 and 4 for each weight.
pub fn check_coefficients(slices: &[SliceFit], model: &SphereModel, tol: &Tolerances) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for s in slices {
        let tag = label(model, &s.k);
        let b0 = s.geometry.b0();
        let b1 = s.geometry.b1_global();
        let b1l = s.geometry.b1_local();
        out.push(CheckResult::at_most(3, format!("b0 fit {tag}"), s.fit.coeffs[0].to_f64(), b0.to_f64(), rel(&s.fit.coeffs[0], &b0), tol.b0));
        out.push(CheckResult::at_most(3, format!("b0 fit stability {tag}"), s.stability.to_f64(), 0.0, s.stability.to_f64(), tol.fit_stability));
        out.push(CheckResult::at_most(4, format!("b1 fit {tag}"), s.fit.coeffs[1].to_f64(), b1.to_f64(), rel(&s.fit.coeffs[1], &b1), tol.b1));
        out.push(CheckResult::at_most(4, format!("b1 local route {tag}"), b1l.to_f64(), b1.to_f64(), rel(&b1l, &b1), tol.b1_local));
    }
    out
}

/// A fixed oscillatory integral `int exp(i m F) u` used to test the engine.
#[derive(Debug, Clone)]
pub struct ReferencePhase {
    pub name: &'static str,
    pub dim: usize,
    /// Polynomial `F` as (exponent, coefficient) pairs.
    pub phase: Vec<(Vec<u8>, Complex)>,
    pub amplitude: Vec<(Vec<u8>, Complex)>,
    /// `Im F(x) >= c |x|^2` on the whole plane.
    pub im_lower: f64,
    pub gaussian: bool,
}

fn eval_poly(terms: &[(Vec<u8>, Complex)], x: &[Float]) -> Complex {
    let prec = x[0].prec();
    let mut acc = czero(prec);
    for (e, c) in terms {
        let mut t = c.clone();
        for (xi, &ei) in x.iter().zip(e) {
            for _ in 0..ei {
                t *= xi;
            }
        }
        acc += t;
    }
    acc
}

impl ReferencePhase {
    pub fn phase_jet(&self, order: usize, prec: u32) -> Result<Jet, JetError> {
        Jet::from_terms(self.dim, order, prec, self.phase.iter().cloned())
    }

    pub fn amplitude_jet(&self, order: usize, prec: u32) -> Result<Jet, JetError> {
        Jet::from_terms(self.dim, order, prec, self.amplitude.iter().cloned())
    }

    pub fn eval_phase(&self, x: &[Float]) -> Complex {
        eval_poly(&self.phase, x)
    }

    pub fn eval_amplitude(&self, x: &[Float]) -> Complex {
        eval_poly(&self.amplitude, x)
    }

    /// Exact value of the integral over the whole space, for the Gaussian cases.
    pub fn closed_form(&self, m: &Float) -> Option<Complex> {
        if !self.gaussian {
            return None;
        }
        let prec = m.prec();
        let minus_i = Complex::with_val(prec, (0, -1));
        match self.dim {
            1 => {
                // int exp(i m a x^2 / 2 ... ) with a single quadratic term and u = 1 + b x^2
                let a = self.phase.iter().find(|t| t.0 == [2]).map(|t| t.1.clone())?;
                let b = self.amplitude.iter().find(|t| t.0 == [2]).map_or(czero(prec), |t| t.1.clone());
                // int exp(-m q x^2) = sqrt(pi / (m q)), int x^2 exp(-m q x^2) = sqrt(pi / (m q)) / (2 m q)
                let q = Complex::with_val(prec, &minus_i * &a) * m;
                let base = Complex::with_val(prec, pi(prec) / &q).sqrt();
                let second = Complex::with_val(prec, &base / Complex::with_val(prec, &q * 2u32)) * b;
                Some(base + second)
            }
            2 => {
                // F = (a x^2 + 2 b x y + c y^2) / 2, u = 1
                let get = |e: [u8; 2]| self.phase.iter().find(|t| t.0 == e).map_or(czero(prec), |t| t.1.clone());
                let a = Complex::with_val(prec, get([2, 0]) * 2u32);
                let b = get([1, 1]);
                let c = Complex::with_val(prec, get([0, 2]) * 2u32);
                let schur = Complex::with_val(prec, &a - Complex::with_val(prec, b.square_ref()) / &c);
                let two_pi_m = Float::with_val(prec, pi(prec) * 2u32) / m;
                let r1 = Complex::with_val(prec, &minus_i * &c).sqrt();
                let r2 = Complex::with_val(prec, &minus_i * &schur).sqrt();
                Some(Complex::with_val(prec, two_pi_m / (r1 * r2)))
            }
            _ => None,
        }
    }
}

/// The five fixed phases of the engine check.
///
/// | name | `F` | `u` |
/// |---|---|---|
/// | `gaussian-1d` | `i x^2` | `1 + x^2` |
/// | `gaussian-2d-complex` | `(a x^2 + 2 b x y + c y^2) / 2` | `1` |
/// | `quartic-1d` | `i (x^2 + x^4)` | `1` |
/// | `cubic-complex-1d` | `(1+i) x^2 + x^3/3 + i x^4/4` | `1 + x` |
/// | `mixed-2d` | `i (x^2 + y^2) + x^2 y + i x^2 y^2 / 2` | `1 + x + y^2` |
///
/// The complex Gaussian is `F = (a x^2 + 2 b x y + c y^2)/2` with
/// `a = 1 + 2i`, `b = (1 + i)/2`, `c = -1/2 + 3i`.
pub fn reference_phases(prec: u32) -> Vec<ReferencePhase> {
    let c = |re: f64, im: f64| cplx(prec, re, im);
    vec![
        ReferencePhase {
            name: "gaussian-1d",
            dim: 1,
            phase: vec![(vec![2], c(0.0, 1.0))],
            amplitude: vec![(vec![0], c(1.0, 0.0)), (vec![2], c(1.0, 0.0))],
            im_lower: 1.0,
            gaussian: true,
        },
        ReferencePhase {
            name: "gaussian-2d-complex",
            dim: 2,
            phase: vec![(vec![2, 0], c(0.5, 1.0)), (vec![1, 1], c(0.5, 0.5)), (vec![0, 2], c(-0.25, 1.5))],
            amplitude: vec![(vec![0, 0], c(1.0, 0.0))],
            // smallest eigenvalue of [[2, 1/2], [1/2, 3]] / 2
            im_lower: 0.9,
            gaussian: true,
        },
        ReferencePhase {
            name: "quartic-1d",
            dim: 1,
            phase: vec![(vec![2], c(0.0, 1.0)), (vec![4], c(0.0, 1.0))],
            amplitude: vec![(vec![0], c(1.0, 0.0))],
            im_lower: 1.0,
            gaussian: false,
        },
        ReferencePhase {
            name: "cubic-complex-1d",
            dim: 1,
            phase: vec![(vec![2], c(1.0, 1.0)), (vec![3], Complex::with_val(prec, Float::with_val(prec, 3).recip())), (vec![4], c(0.0, 0.25))],
            amplitude: vec![(vec![0], c(1.0, 0.0)), (vec![1], c(1.0, 0.0))],
            im_lower: 1.0,
            gaussian: false,
        },
        ReferencePhase {
            name: "mixed-2d",
            dim: 2,
            phase: vec![(vec![2, 0], c(0.0, 1.0)), (vec![0, 2], c(0.0, 1.0)), (vec![2, 1], c(1.0, 0.0)), (vec![2, 2], c(0.0, 0.5))],
            amplitude: vec![(vec![0, 0], c(1.0, 0.0)), (vec![1, 0], c(1.0, 0.0)), (vec![0, 2], c(1.0, 0.0))],
            im_lower: 1.0,
            gaussian: false,
        },
    ]
}

/// Degrees at which the engine is compared with quadrature.
pub const ENGINE_DEGREES: [u32; 5] = [50, 100, 200, 400, 800];

/// Quadrature of a reference phase on a box whose flat part leaves out only
/// `exp(-70)`-small tails.
pub fn reference_quadrature(ph: &ReferencePhase, m: &Float) -> Result<Complex, QuadratureError> {
    let prec = m.prec();
    // the cutoff is flat on half the box; the tail beyond it is below exp(-budget / 4)
    let budget = if ph.dim == 1 { 280.0 } else { 200.0 };
    let half = (budget / (ph.im_lower * m.to_f64())).sqrt();
    let l = Float::with_val(prec, half);
    let dom: Vec<(Float, Float)> = (0..ph.dim).map(|_| (Float::with_val(prec, -&l), l.clone())).collect();
    let rule = if ph.dim == 1 {
        QuadratureRule { panels: 24, nodes_per_panel: 16, rel_tol: 1e-18 }
    } else {
        QuadratureRule { panels: 12, nodes_per_panel: 16, rel_tol: 1e-16 }
    };
    oscillatory_integral(|x| ph.eval_phase(x), |x| ph.eval_amplitude(x), m, &dom, &rule)
}

/// Criterion 5.
pub fn check_engine(prec: u32, jmax: usize, tol: &Tolerances) -> Result<Vec<CheckResult>, VerifyError> {
    let mut out = Vec::new();
    let order = 2 * jmax + 2;
    for ph in reference_phases(prec) {
        let exp = sp_expand(&ph.phase_jet(order, prec)?, &ph.amplitude_jet(order, prec)?, jmax)?;
        if ph.gaussian {
            let mut worst = 0.0f64;
            for &m in &ENGINE_DEGREES {
                let mf = Float::with_val(prec, m);
                let exact = ph.closed_form(&mf).expect("gaussian case has a closed form");
                let e = Float::with_val(prec, cabs(&Complex::with_val(prec, exp.eval(&mf) - &exact)) / cabs(&exact)).to_f64();
                worst = worst.max(e);
            }
            out.push(CheckResult::at_most(5, format!("engine exact on {}", ph.name), worst, 0.0, worst, tol.gaussian));
        } else {
            let mut errs = Vec::new();
            for &m in &ENGINE_DEGREES {
                let mf = Float::with_val(prec, m);
                let q = reference_quadrature(&ph, &mf)?;
                let e = Float::with_val(prec, cabs(&Complex::with_val(prec, exp.eval(&mf) - &q)) / cabs(&q)).to_f64();
                errs.push(e);
            }
            let ms: Vec<f64> = ENGINE_DEGREES.iter().map(|&m| m as f64).collect();
            out.push(CheckResult::at_least(5, format!("engine error slope on {}", ph.name), decay_slope(&ms, &errs), tol.sp_slope));
        }
    }
    Ok(out)
}

/// Criterion 6: every `m <= m_max` and every `k` with `|k_a| <= k_max`.
pub fn check_group_integral(model: &SphereModel, p: &SpherePoint, m_max: usize, k_max: i64, tol: &Tolerances) -> CheckResult {
    let prec = model.prec();
    let d = model.d();
    let mut ks: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..d {
        ks = ks.into_iter().flat_map(|k| (-k_max..=k_max).map(move |x| [k.clone(), vec![x]].concat())).collect();
    }
    let mut worst = 0.0f64;
    for m in 0..=m_max {
        let integrals = model.szego_km_group_integrals(&ks, m, p);
        for (k, gi) in ks.iter().zip(integrals) {
            let exact = model.szego_km_diag(k, m, p);
            let den = fmax(exact.clone().abs(), Float::with_val(prec, 1));
            let e = Float::with_val(prec, cabs(&Complex::with_val(prec, gi - &exact)) / den).to_f64();
            worst = worst.max(e);
        }
    }
    CheckResult::at_most(6, format!("group integral W={:?} m<={m_max} |k|<={k_max}", model.weights()), worst, 0.0, worst, tol.group_integral)
}

/// `sum_{ab} G^{ab} d_a d_b conj(chi_k)` at the identity by central differences.
pub fn character_laplacian_fd(torus: &TorusGroup, k: &[i64]) -> Float {
    let prec = torus.covolume().prec();
    let d = torus.dim();
    let ginv = torus.unit_volume_inverse_metric();
    let h = Float::with_val(prec, 1) >> 20u32;
    let f = |theta: &[Float]| torus.character(k, theta).conj();
    let mut acc = czero(prec);
    for a in 0..d {
        for b in 0..d {
            let mut second = czero(prec);
            for (sa, sb, sign) in [(1i32, 1i32, 1i32), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)] {
                let mut t = vec![Float::with_val(prec, 0); d];
                t[a] += Float::with_val(prec, &h * sa);
                t[b] += Float::with_val(prec, &h * sb);
                second += Complex::with_val(prec, f(&t) * sign);
            }
            let den = Float::with_val(prec, h.square_ref()) * 4u32;
            acc += Complex::with_val(prec, ginv.get(a, b) * second) / den;
        }
    }
    Float::with_val(prec, acc.real())
}

/// Criterion 7 for one model point.
pub fn check_haar_and_laplacian(model: &SphereModel, p: &SpherePoint, ks: &[Vec<i64>], tol: &Tolerances) -> Result<Vec<CheckResult>, VerifyError> {
    let prec = model.prec();
    let d = model.d();
    let mut out = Vec::new();
    let g = sphere_geometry(model, p, &vec![0; d])?;
    let defect = haar_check_defect(&g.haar, d, &g.invariants.v_eff).to_f64();
    out.push(CheckResult::at_most(7, format!("Haar density identities W={:?}", model.weights()), defect, 0.0, defect, tol.haar));
    let standard = TorusGroup::standard(d, prec);
    let orbit = model.orbit_torus(p)?;
    let mut worst_std = 0.0f64;
    let mut worst_orbit = 0.0f64;
    for k in ks {
        let two_pi = Float::with_val(prec, pi(prec) * 2u32);
        let k2: i64 = k.iter().map(|x| x * x).sum();
        let expect = Float::with_val(prec, two_pi.square_ref()) * -k2;
        let fd = character_laplacian_fd(&standard, k);
        let analytic = standard.laplace_character(k)?;
        let den = fmax(expect.clone().abs(), Float::with_val(prec, 1));
        worst_std = worst_std.max((Float::with_val(prec, &fd - &expect).abs() / &den).to_f64());
        worst_std = worst_std.max((Float::with_val(prec, &analytic - &expect).abs() / &den).to_f64());
        let fd = character_laplacian_fd(&orbit, k);
        let analytic = orbit.laplace_character(k)?;
        let den = fmax(analytic.clone().abs(), Float::with_val(prec, 1));
        worst_orbit = worst_orbit.max((Float::with_val(prec, &fd - &analytic).abs() / den).to_f64());
    }
    out.push(CheckResult::at_most(7, format!("character Laplacian on the standard torus T^{d}"), worst_std, 0.0, worst_std, tol.lap_char));
    out.push(CheckResult::at_most(7, format!("character Laplacian on the orbit torus W={:?}", model.weights()), worst_orbit, 0.0, worst_orbit, tol.lap_char));
    Ok(out)
}

/// Stationary phase on the orbit integral for one weight.
#[derive(Debug, Clone)]
pub struct RouteResult {
    pub k: Vec<i64>,
    pub degrees: Vec<u64>,
    pub rel_errors: Vec<f64>,
    pub slope: f64,
    /// Coefficients of `m^{n - d/2}` and `m^{n - d/2 - 1}`.
    pub c0: Float,
    pub c1: Float,
}

/// Degrees near `targets` with a nonempty slice.
fn route_degrees(model: &SphereModel, k: &[i64], targets: &[u64]) -> Vec<u64> {
    targets.iter().filter_map(|&t| (t..t + 8).find(|&m| model.slice_size(k, m as usize) > 0)).collect()
}

pub fn stationary_phase_route(model: &SphereModel, p: &SpherePoint, k: &[i64], jmax: usize, targets: &[u64]) -> Result<RouteResult, VerifyError> {
    let prec = model.prec();
    let order = 2 * jmax + 2;
    let integrand = model.orbit_phase(k, p, order)?;
    let exp = sp_expand(&integrand.phase, &integrand.amplitude, jmax)?;
    let degrees = route_degrees(model, k, targets);
    if degrees.len() < 2 {
        return Err(VerifyError::Config(format!("weight {k:?} has too few nonempty slices for the route check")));
    }
    let mut rel_errors = Vec::new();
    for &m in &degrees {
        let mf = Float::with_val(prec, m);
        let predicted = Complex::with_val(prec, exp.eval(&mf) * integrand.multiplicity(k, m as usize)) * integrand.kernel_constant(m as usize);
        let exact = model.szego_km_diag(k, m as usize, p);
        let e = cabs(&Complex::with_val(prec, predicted - &exact)) / exact.abs();
        rel_errors.push(e.to_f64());
    }
    let ms: Vec<f64> = degrees.iter().map(|&m| m as f64).collect();
    let slope = decay_slope(&ms, &rel_errors);
    // series in m: kernel polynomial times multiplicity times the engine terms
    let mult = integrand.multiplicity(k, degrees[0] as usize);
    let l0 = Complex::with_val(prec, &exp.prefactor * &exp.terms[0]);
    let l1 = if jmax >= 1 { Complex::with_val(prec, &exp.prefactor * &exp.terms[1]) } else { czero(prec) };
    let k0 = &integrand.kernel_poly[0];
    let k1 = integrand.kernel_poly.get(1).cloned().unwrap_or(Float::with_val(prec, 0));
    let c0 = Complex::with_val(prec, &mult * &l0) * k0;
    let c1 = Complex::with_val(prec, &mult * Complex::with_val(prec, Complex::with_val(prec, &l1 * k0) + Complex::with_val(prec, &l0 * &k1)));
    Ok(RouteResult { k: k.to_vec(), degrees, rel_errors, slope, c0: Float::with_val(prec, c0.real()), c1: Float::with_val(prec, c1.real()) })
}

/// Degrees used for the route check.
pub const ROUTE_DEGREES: [u64; 5] = [50, 100, 200, 400, 800];

/// Criterion 8 for each weight.
pub fn check_route(model: &SphereModel, p: &SpherePoint, ks: &[Vec<i64>], jmax: usize, tol: &Tolerances) -> Result<Vec<CheckResult>, VerifyError> {
    let mut out = Vec::new();
    for k in ks {
        let r = stationary_phase_route(model, p, k, jmax, &ROUTE_DEGREES)?;
        let g = sphere_geometry(model, p, k)?;
        let tag = label(model, k);
        out.push(CheckResult::at_least(8, format!("route error slope {tag}"), r.slope, jmax as f64 + tol.route_slope_margin));
        let b0 = g.b0();
        let b1 = g.b1_global();
        out.push(CheckResult::at_most(8, format!("route b0 {tag}"), r.c0.to_f64(), b0.to_f64(), rel(&r.c0, &b0), tol.route_coeff));
        out.push(CheckResult::at_most(8, format!("route b1 {tag}"), r.c1.to_f64(), b1.to_f64(), rel(&r.c1, &b1), tol.route_coeff));
    }
    Ok(out)
}

/// Everything `run_all` needs.
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub n: usize,
    pub weights: Vec<Vec<i64>>,
    pub ks: Vec<Vec<i64>>,
    pub m_min: u64,
    pub m_max: u64,
    pub fit_terms: usize,
    pub jmax: usize,
    pub prec: u32,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n: 1,
            weights: vec![vec![1, -1]],
            ks: vec![vec![0], vec![1], vec![2]],
            m_min: 50,
            m_max: 400,
            fit_terms: 5,
            jmax: 2,
            prec: 128,
            tolerances: Tolerances::default(),
        }
    }
}

/// All eight criteria on the configured model.
pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<CheckResult>, VerifyError> {
    let model = SphereModel::new(cfg.n, cfg.weights.clone(), cfg.prec)?;
    let p = model.find_zero_point()?;
    for k in &cfg.ks {
        if k.len() != model.d() {
            return Err(VerifyError::Config(format!("weight {k:?} needs {} entries", model.d())));
        }
    }
    let tol = &cfg.tolerances;
    let mut out = check_full_kernel(&model, &p, tol)?;
    let slices = cfg.ks.iter().map(|k| fit_slice(&model, &p, k, cfg.m_min, cfg.m_max, cfg.fit_terms)).collect::<Result<Vec<_>, _>>()?;
    out.extend(check_coefficients(&slices, &model, tol));
    out.extend(check_engine(cfg.prec, cfg.jmax, tol)?);
    out.push(check_group_integral(&model, &p, 30, 3, tol));
    out.extend(check_haar_and_laplacian(&model, &p, &cfg.ks, tol)?);
    out.extend(check_route(&model, &p, &cfg.ks, cfg.jmax, tol)?);
    Ok(out)
}

/// `m^{n - d/2}` for reporting reduced kernel values.
pub fn reduced_value(v: &Float, m: u64, twice_base: i64) -> Float {
    let prec = v.prec();
    Float::with_val(prec, v * half_integer_power(&Float::with_val(prec, m), -twice_base))
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 128;

    #[test]
    fn slope_of_exact_power_law() {
        let ms = [10.0, 20.0, 40.0];
        let errs: Vec<f64> = ms.iter().map(|m: &f64| 5.0 * m.powf(-3.0)).collect();
        assert!((decay_slope(&ms, &errs) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_closed_forms_match_quadrature() {
        let m = Float::with_val(P, 30);
        for ph in reference_phases(P).into_iter().filter(|p| p.gaussian) {
            let q = reference_quadrature(&ph, &m).unwrap();
            let c = ph.closed_form(&m).unwrap();
            let e = cabs(&Complex::with_val(P, &q - &c)) / cabs(&c);
            assert!(e < 1e-15, "{}: {}", ph.name, e.to_f64());
        }
    }

    #[test]
    fn fd_laplacian_on_standard_circle() {
        let t = TorusGroup::standard(1, P);
        let fd = character_laplacian_fd(&t, &[2]);
        let expect = Float::with_val(P, pi(P) * 2u32).square() * -4i32;
        assert!(rel(&fd, &expect) < 1e-10);
    }

    #[test]
    fn samples_skip_empty_slices() {
        let model = SphereModel::new(1, vec![vec![1, -1]], P).unwrap();
        let p = model.find_zero_point().unwrap();
        let s = km_samples(&model, &p, &[0], 2, 10).unwrap();
        let ms: Vec<u64> = s.entries().iter().map(|e| e.0).collect();
        assert_eq!(ms, vec![2, 4, 6, 8, 10]);
        let s = km_samples(&model, &p, &[3], 1, 9).unwrap();
        assert_eq!(s.entries().first().unwrap().0, 3);
    }

    #[test]
    fn sphere_three_route_coefficients() {
        let model = SphereModel::new(1, vec![vec![1, -1]], P).unwrap();
        let p = model.find_zero_point().unwrap();
        let r = stationary_phase_route(&model, &p, &[1], 2, &[40, 80, 160]).unwrap();
        let g = sphere_geometry(&model, &p, &[1]).unwrap();
        assert!(rel(&r.c0, &g.b0()) < 1e-25);
        assert!(rel(&r.c1, &g.b1_global()) < 1e-20);
        assert!(r.slope > 2.7, "{}", r.slope);
    }
}
