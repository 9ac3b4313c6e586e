//! Stationary phase expansion at a nondegenerate critical point.
//!
//! For a phase `F` with `F'(0) = 0`, `Im F >= 0`, `Im F(0) = 0` and an
//! invertible Hessian, the integral of `exp(i m F) u` over a neighbourhood of
//! the origin in `R^N` has the asymptotic expansion
//!
//! ```text
//! det(F''(0) / (2 pi i))^(-1/2) m^(-N/2) exp(i m F(0)) sum_j m^(-j) L_j u
//! ```
//!
//! where, with `h = F - F(0) - <F''(0) x, x>/2` and `D = -i d`,
//!
//! ```text
//! L_j u = sum_{nu - mu = j, 2 nu >= 3 mu} i^(-j) 2^(-nu) <F''(0)^(-1) D, D>^nu (h^mu u)(0) / (nu! mu!)
//! ```
//!
//! The square root branch is the product of principal square roots of the
//! eigenvalues of `F''(0) / (2 pi i)`. It is obtained by continuing
//! `det((1 - t) I + t F''(0) / (2 pi i))` from `t = 0`, along which every
//! eigenvalue stays in the right half plane.

use rug::{Complex, Float};

use crate::jets::{Jet, JetError};
use crate::num::{cabs, czero, factorial, pi, symmetric_eigenvalues, tolerance, CMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StationaryPhaseError {
    #[error("origin is not a critical point: |grad F(0)| = {0:e}")]
    NotStationary(f64),
    #[error("imaginary part condition violated: {0}")]
    BadImaginaryPart(String),
    #[error("Hessian of the phase is singular")]
    Degenerate,
    #[error("{which} jet has order {have}, needs at least {needed}")]
    InsufficientOrder { which: &'static str, needed: usize, have: usize },
    #[error("cubic part of the remainder does not vanish")]
    CubicRemainder,
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Which `(nu, mu)` pairs enter `L_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuRange {
    /// `2 nu >= 3 mu`, valid for any phase.
    Full,
    /// `2 nu >= 4 mu`, valid only when the remainder starts at degree four.
    QuarticRemainder,
}

#[derive(Debug, Clone)]
pub struct PhaseData {
    pub dim: usize,
    pub f0: Complex,
    pub hessian: CMatrix,
    pub hessian_inv: CMatrix,
    /// `F - F(0) - <F''(0) x, x>/2`, with every term of degree below three removed.
    pub remainder: Jet,
    /// `det(F''(0) / (2 pi i))^(-1/2)`.
    pub prefactor: Complex,
}

impl PhaseData {
    pub fn phase_order(&self) -> usize {
        self.remainder.order()
    }
}

pub fn phase_from_jet(f: &Jet) -> Result<PhaseData, StationaryPhaseError> {
    let prec = f.prec();
    let n = f.num_vars();
    if f.order() < 2 {
        return Err(StationaryPhaseError::InsufficientOrder { which: "phase", needed: 2, have: f.order() });
    }
    let tol = tolerance(prec);
    let grad = f.max_abs_in_degree(1);
    if grad > tol {
        return Err(StationaryPhaseError::NotStationary(grad.to_f64()));
    }
    let f0 = f.constant_term().clone();
    let im0 = Float::with_val(prec, f0.imag().abs_ref());
    if im0 > tol {
        return Err(StationaryPhaseError::BadImaginaryPart(format!("Im F(0) = {:e}", f0.imag().to_f64())));
    }
    let mut hessian = CMatrix::zeros(n, n, prec);
    for a in 0..n {
        for b in 0..n {
            let mut e = vec![0u8; n];
            e[a] += 1;
            e[b] += 1;
            hessian.set(a, b, f.derivative_at_zero(&e)?);
        }
    }
    let im_h: Vec<Vec<Float>> = (0..n).map(|a| (0..n).map(|b| Float::with_val(prec, hessian.get(a, b).imag())).collect()).collect();
    let ev = symmetric_eigenvalues(&im_h);
    let scale = crate::num::fmax(hessian.max_abs(), Float::with_val(prec, 1));
    let floor = Float::with_val(prec, -(&tol * scale));
    if ev[0] < floor {
        return Err(StationaryPhaseError::BadImaginaryPart(format!(
            "Im F''(0) has eigenvalue {:e}",
            ev[0].to_f64()
        )));
    }
    let hessian_inv = hessian.inverse().ok_or(StationaryPhaseError::Degenerate)?;
    let remainder = f.drop_below(3);
    let two_pi_i = Complex::with_val(prec, (0, 2 * pi(prec)));
    let m = hessian.scale(&Complex::with_val(prec, two_pi_i.recip_ref()));
    let prefactor = principal_inv_sqrt_det(&m);
    Ok(PhaseData { dim: n, f0, hessian, hessian_inv, remainder, prefactor })
}

/// Product of principal square roots of the eigenvalues of `m`, inverted.
/// Requires every eigenvalue of `(1 - t) I + t m` to stay off the closed left
/// half plane for `t < 1`, which holds when `m + m*` is positive semidefinite.
pub fn principal_inv_sqrt_det(m: &CMatrix) -> Complex {
    let prec = m.prec();
    let n = m.rows();
    let id = CMatrix::identity(n, prec);
    let det_at = |t: &Float| -> Complex {
        let s = Complex::with_val(prec, t);
        let one_minus = Complex::with_val(prec, 1 - t.clone());
        id.scale(&one_minus).add(&m.scale(&s)).det()
    };
    let arg_ratio = |a: &Complex, b: &Complex| -> Float {
        let q = Complex::with_val(prec, b / a);
        Float::with_val(prec, q.arg_ref())
    };
    let mut theta = Float::with_val(prec, 0);
    let mut stack = vec![(Float::with_val(prec, 0), Float::with_val(prec, 1), det_at(&Float::with_val(prec, 0)), det_at(&Float::with_val(prec, 1)), 0u32)];
    while let Some((a, b, da, db, depth)) = stack.pop() {
        let mid = Float::with_val(prec, &a + &b) / 2;
        let dm = det_at(&mid);
        let whole = arg_ratio(&da, &db);
        let left = arg_ratio(&da, &dm);
        let right = arg_ratio(&dm, &db);
        let split = Float::with_val(prec, &left + &right);
        let agree = Float::with_val(prec, &split - &whole).abs() < 1e-6;
        let small = left.clone().abs() < 0.5 && right.clone().abs() < 0.5;
        if (agree && small) || depth > 60 {
            theta += split;
        } else {
            stack.push((mid.clone(), b, dm.clone(), db, depth + 1));
            stack.push((a, mid, da, dm, depth + 1));
        }
    }
    let det = m.det();
    let modulus = cabs(&det);
    let r = Float::with_val(prec, modulus.sqrt().recip());
    let half = Float::with_val(prec, -theta / 2);
    let unit = Complex::with_val(prec, (Float::with_val(prec, half.cos_ref()), Float::with_val(prec, half.sin_ref())));
    Complex::with_val(prec, unit * r)
}

/// `L_j u` with the full `(nu, mu)` range.
pub fn lj_apply(phase: &PhaseData, u: &Jet, j: usize) -> Result<Complex, StationaryPhaseError> {
    lj_apply_with(phase, u, j, MuRange::Full)
}

pub fn lj_apply_with(phase: &PhaseData, u: &Jet, j: usize, range: MuRange) -> Result<Complex, StationaryPhaseError> {
    let prec = phase.f0.prec().0;
    if u.num_vars() != phase.dim {
        return Err(JetError::ShapeMismatch(phase.dim, u.num_vars()).into());
    }
    if j >= 1 && phase.phase_order() < 2 * j + 2 {
        return Err(StationaryPhaseError::InsufficientOrder { which: "phase", needed: 2 * j + 2, have: phase.phase_order() });
    }
    if u.order() < 2 * j {
        return Err(StationaryPhaseError::InsufficientOrder { which: "amplitude", needed: 2 * j, have: u.order() });
    }
    let h = &phase.remainder;
    let mu_max = match range {
        MuRange::Full => 2 * j,
        MuRange::QuarticRemainder => {
            if h.max_abs_in_degree(3) > tolerance(prec) {
                return Err(StationaryPhaseError::CubicRemainder);
            }
            j
        }
    };
    // i^(-j)
    let i_pow = match j % 4 {
        0 => Complex::with_val(prec, 1),
        1 => Complex::with_val(prec, (0, -1)),
        2 => Complex::with_val(prec, -1),
        _ => Complex::with_val(prec, (0, 1)),
    };
    let mut total = czero(prec);
    let mut hpow: Option<Jet> = None;
    for mu in 0..=mu_max {
        let nu = j + mu;
        let deg = 2 * nu;
        if deg > crate::jets::MAX_ORDER {
            return Err(JetError::InvalidShape { num_vars: phase.dim, order: deg }.into());
        }
        // h^mu truncated at 2 nu; earlier truncation at 2 (nu - 1) loses nothing
        // since h starts at degree three.
        let g = match &hpow {
            None => u.padded(deg)?,
            Some(hp) => hp.poly_mul_to(u, deg)?,
        };
        let mut v = g;
        for _ in 0..nu {
            v = v.second_order_operator(&phase.hessian_inv)?;
        }
        let val = v.constant_term().clone();
        if !val.is_zero() {
            let mut c = Float::with_val(prec, 1) >> (nu as u32);
            c /= factorial(prec, nu as u32);
            c /= factorial(prec, mu as u32);
            if nu % 2 == 1 {
                c = -c;
            }
            total += Complex::with_val(prec, val * c);
        }
        if mu < mu_max {
            let next_deg = 2 * (nu + 1);
            hpow = Some(match &hpow {
                None => h.padded(next_deg)?,
                Some(hp) => hp.poly_mul_to(h, next_deg)?,
            });
        }
    }
    Ok(Complex::with_val(prec, total * i_pow))
}

#[derive(Debug, Clone)]
pub struct SpExpansion {
    pub dim: usize,
    pub prefactor: Complex,
    pub phase0: Complex,
    /// `L_0 u, ..., L_jmax u`.
    pub terms: Vec<Complex>,
}

pub fn sp_expand(f: &Jet, u: &Jet, jmax: usize) -> Result<SpExpansion, StationaryPhaseError> {
    let phase = phase_from_jet(f)?;
    let terms = (0..=jmax).map(|j| lj_apply(&phase, u, j)).collect::<Result<Vec<_>, _>>()?;
    Ok(SpExpansion { dim: phase.dim, prefactor: phase.prefactor, phase0: phase.f0, terms })
}

impl SpExpansion {
    /// The truncated expansion evaluated at `m`.
    pub fn eval(&self, m: &Float) -> Complex {
        let prec = self.prefactor.prec().0;
        let mut series = czero(prec);
        let inv = Float::with_val(prec, m.recip_ref());
        let mut p = Float::with_val(prec, 1);
        for t in &self.terms {
            series += Complex::with_val(prec, t * &p);
            p *= &inv;
        }
        let osc = Complex::with_val(prec, (0, 1)) * Complex::with_val(prec, &self.phase0 * m);
        let osc = Complex::with_val(prec, osc.exp_ref());
        let power = crate::num::half_integer_power(m, -(self.dim as i64));
        Complex::with_val(prec, &self.prefactor * osc) * series * power
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::cplx;
    use proptest::prelude::*;

    const P: u32 = 128;

    fn poly(num_vars: usize, order: usize, terms: &[(&[u8], f64, f64)]) -> Jet {
        Jet::from_terms(num_vars, order, P, terms.iter().map(|(e, re, im)| (e.to_vec(), cplx(P, *re, *im)))).unwrap()
    }

    fn close(a: &Complex, re: f64, im: f64, tol: f64) -> bool {
        cabs(&Complex::with_val(P, a - cplx(P, re, im))) < tol
    }

    #[test]
    fn gaussian_prefactor_is_power_of_pi() {
        let f = poly(1, 4, &[(&[2], 0.0, 1.0)]);
        let ph = phase_from_jet(&f).unwrap();
        let sp = pi(P).sqrt();
        assert!(cabs(&Complex::with_val(P, &ph.prefactor - sp)) < 1e-35);
        let f2 = poly(2, 4, &[(&[2, 0], 0.0, 1.0), (&[0, 2], 0.0, 1.0)]);
        let ph2 = phase_from_jet(&f2).unwrap();
        assert!(cabs(&Complex::with_val(P, &ph2.prefactor - pi(P))) < 1e-35);
    }

    #[test]
    fn quartic_perturbation_first_coefficient() {
        let f = poly(1, 6, &[(&[2], 0.0, 1.0), (&[4], 0.0, 1.0)]);
        let u = poly(1, 4, &[(&[0], 1.0, 0.0)]);
        let ph = phase_from_jet(&f).unwrap();
        assert!(close(&lj_apply(&ph, &u, 0).unwrap(), 1.0, 0.0, 1e-35));
        assert!(close(&lj_apply(&ph, &u, 1).unwrap(), -0.75, 0.0, 1e-35));
    }

    #[test]
    fn quadratic_amplitude_first_coefficient() {
        let f = poly(1, 6, &[(&[2], 0.0, 1.0)]);
        let u = poly(1, 4, &[(&[2], 1.0, 0.0)]);
        let ph = phase_from_jet(&f).unwrap();
        assert!(close(&lj_apply(&ph, &u, 1).unwrap(), 0.5, 0.0, 1e-35));
        assert!(close(&lj_apply(&ph, &u, 2).unwrap(), 0.0, 0.0, 1e-35));
    }

    #[test]
    fn gaussian_evaluation_is_exact() {
        // int exp(-m x^2)(1 + x^2) = sqrt(pi/m)(1 + 1/(2m))
        let f = poly(1, 6, &[(&[2], 0.0, 1.0)]);
        let u = poly(1, 4, &[(&[0], 1.0, 0.0), (&[2], 1.0, 0.0)]);
        let e = sp_expand(&f, &u, 2).unwrap();
        let m = Float::with_val(P, 37);
        let exact = Float::with_val(P, pi(P) / &m).sqrt() * (Float::with_val(P, 1) + Float::with_val(P, 2 * m.clone()).recip());
        let got = e.eval(&m);
        assert!(cabs(&Complex::with_val(P, got - exact)) < 1e-35);
    }

    #[test]
    fn complex_gaussian_branch() {
        // F = (1/2 + i) x^2: the integral is sqrt(pi / (m (1 - i/2)))
        let f = poly(1, 4, &[(&[2], 0.5, 1.0)]);
        let ph = phase_from_jet(&f).unwrap();
        let expect = Complex::with_val(P, pi(P)) / cplx(P, 1.0, -0.5);
        let expect = expect.sqrt();
        assert!(cabs(&Complex::with_val(P, &ph.prefactor - expect)) < 1e-35);
    }

    #[test]
    fn real_quadratic_phase_gets_fresnel_branch() {
        // F = x^2 / 2 : int exp(i m x^2 / 2) = sqrt(2 pi / m) exp(i pi / 4)
        let f = poly(1, 4, &[(&[2], 0.5, 0.0)]);
        let ph = phase_from_jet(&f).unwrap();
        let r = Float::with_val(P, 2 * pi(P)).sqrt();
        let q = Float::with_val(P, pi(P) / 4);
        let expect = Complex::with_val(P, (Float::with_val(P, q.cos_ref()), Float::with_val(P, q.sin_ref()))) * r;
        assert!(cabs(&Complex::with_val(P, &ph.prefactor - expect)) < 1e-34);
    }

    #[test]
    fn validation_errors() {
        let moving = poly(1, 4, &[(&[1], 1.0, 0.0), (&[2], 0.0, 1.0)]);
        assert!(matches!(phase_from_jet(&moving), Err(StationaryPhaseError::NotStationary(_))));
        let wrong_sign = poly(1, 4, &[(&[2], 0.0, -1.0)]);
        assert!(matches!(phase_from_jet(&wrong_sign), Err(StationaryPhaseError::BadImaginaryPart(_))));
        let lifted = poly(1, 4, &[(&[0], 0.0, 0.5), (&[2], 0.0, 1.0)]);
        assert!(matches!(phase_from_jet(&lifted), Err(StationaryPhaseError::BadImaginaryPart(_))));
        let flat = poly(2, 4, &[(&[2, 0], 0.0, 1.0)]);
        assert!(matches!(phase_from_jet(&flat), Err(StationaryPhaseError::Degenerate)));
        let short = poly(1, 3, &[(&[2], 0.0, 1.0)]);
        let ph = phase_from_jet(&short).unwrap();
        let u = poly(1, 4, &[(&[0], 1.0, 0.0)]);
        assert!(matches!(lj_apply(&ph, &u, 1), Err(StationaryPhaseError::InsufficientOrder { which: "phase", .. })));
    }

    #[test]
    fn cubic_remainder_blocks_tight_range() {
        let f = poly(1, 6, &[(&[2], 0.0, 1.0), (&[3], 1.0, 0.0)]);
        let ph = phase_from_jet(&f).unwrap();
        let u = poly(1, 4, &[(&[0], 1.0, 0.0)]);
        assert_eq!(lj_apply_with(&ph, &u, 1, MuRange::QuarticRemainder).unwrap_err(), StationaryPhaseError::CubicRemainder);
    }

    fn arb_quartic_phase() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (proptest::collection::vec(-0.5f64..0.5, 3), proptest::collection::vec(-1.0f64..1.0, 6))
    }

    fn build_2d(h: &[f64], q: &[f64]) -> (Jet, Jet) {
        // Im-positive quadratic part plus quartic and sextic terms; amplitude of degree 4
        let f = poly(
            2,
            8,
            &[
                (&[2, 0], h[0], 1.0),
                (&[1, 1], h[1], 0.3),
                (&[0, 2], h[2], 1.5),
                (&[4, 0], q[0], 0.2),
                (&[2, 2], q[1], 0.0),
                (&[1, 3], 0.0, q[2] * 0.1),
                (&[6, 0], q[3], 0.0),
            ],
        );
        let u = poly(2, 6, &[(&[0, 0], 1.0, 0.0), (&[1, 1], q[4], 0.0), (&[0, 2], 0.0, q[5]), (&[4, 0], 0.5, 0.0)]);
        (f, u)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn tight_mu_range_agrees_without_cubic_terms((h, q) in arb_quartic_phase()) {
            let (f, u) = build_2d(&h, &q);
            let ph = phase_from_jet(&f).unwrap();
            for j in 0..=2 {
                let full = lj_apply_with(&ph, &u, j, MuRange::Full).unwrap();
                let tight = lj_apply_with(&ph, &u, j, MuRange::QuarticRemainder).unwrap();
                prop_assert!(cabs(&Complex::with_val(P, full - tight)) < 1e-30);
            }
        }

        #[test]
        fn unimodular_linear_change_preserves_every_term((h, q) in arb_quartic_phase(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let (f, u) = build_2d(&h, &q);
            // x = y1 + a y2, y = b y1 + (1 + a b) y2 has determinant one
            let y1 = Jet::variable(2, 8, P, 0).unwrap();
            let y2 = Jet::variable(2, 8, P, 1).unwrap();
            let x = y1.add(&y2.scale(&cplx(P, a, 0.0))).unwrap();
            let ab1 = Complex::with_val(P, Float::with_val(P, a) * Float::with_val(P, b) + 1u32);
            let y = y1.scale(&cplx(P, b, 0.0)).add(&y2.scale(&ab1)).unwrap();
            let f2 = f.compose(&[x.clone(), y.clone()]).unwrap();
            let u2 = u.compose(&[x.truncate(6).unwrap(), y.truncate(6).unwrap()]).unwrap();
            let e1 = sp_expand(&f, &u, 2).unwrap();
            let e2 = sp_expand(&f2, &u2, 2).unwrap();
            prop_assert!(cabs(&Complex::with_val(P, &e1.prefactor - &e2.prefactor)) < 1e-28);
            for (t1, t2) in e1.terms.iter().zip(e2.terms.iter()) {
                let scale = crate::num::fmax(cabs(t1), Float::with_val(P, 1));
                prop_assert!(cabs(&Complex::with_val(P, t1 - t2)) / scale < 1e-20);
            }
            let m = Float::with_val(P, 123.5);
            let v1 = e1.eval(&m);
            let v2 = e2.eval(&m);
            prop_assert!(cabs(&Complex::with_val(P, v1 - v2)) < 1e-20);
        }
    }
}
