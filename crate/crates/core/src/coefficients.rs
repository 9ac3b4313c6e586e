//! Closed-form leading coefficients `b_{0,k}`, `b_{1,k}` of
//! `S_{k,m}(x, x) ~ sum_j m^{n - d/2 - j} b_{j,k}(x)` on the zero set of the
//! moment map, and the local assembly of `b_{1,k}` from stationary phase data.

use rug::ops::Pow;
use rug::{Complex, Float};

use crate::group_geometry::{adapted_haar_checks, group_scalar_curvature, HaarChecks};
use crate::jets::Jet;
use crate::num::{czero, half_integer_power, pi};
use crate::pseudohermitian::{scalar_in_g_direction, tw_scalar_curvature};
use crate::sphere_model::{SphereError, SphereModel, SpherePoint};

#[derive(Debug, Clone)]
pub struct GeomInvariants {
    pub n: usize,
    pub d: usize,
    pub d_k: u32,
    pub v_eff: Float,
    /// Tanaka-Webster scalar curvature at the point.
    pub r: Float,
    /// `(Delta_{d mu} conj(chi_k))(e_0)`.
    pub lap_char: Float,
    pub s_g: Float,
    pub r_e: Float,
}

impl GeomInvariants {
    pub fn prec(&self) -> u32 {
        self.v_eff.prec()
    }

    /// `pi^{d/2 - n - 1} 2^{d/2}`.
    fn common(&self) -> Float {
        let prec = self.prec();
        let twice = self.d as i64 - 2 * (self.n as i64 + 1);
        half_integer_power(&pi(prec), twice) * half_integer_power(&Float::with_val(prec, 2), self.d as i64)
    }

    /// `V_eff^{-2/d}`.
    fn v_scale(&self) -> Float {
        let prec = self.prec();
        self.v_eff.clone().pow(Float::with_val(prec, -2.0) / self.d as u32)
    }
}

pub fn b0(g: &GeomInvariants) -> Float {
    let dk2 = Float::with_val(g.prec(), g.d_k * g.d_k);
    g.common() * dk2 / &g.v_eff / 2u32
}

pub fn b1_global(g: &GeomInvariants) -> Float {
    let prec = g.prec();
    let c = g.common();
    let dk = Float::with_val(prec, g.d_k);
    let dk2 = Float::with_val(prec, &dk * &dk);
    let vs = g.v_scale();
    let curv = Float::with_val(prec, &c * &dk2) * &g.r / &g.v_eff / 4u32;
    let chi = Float::with_val(prec, &c * &dk) * &g.lap_char * &vs / &g.v_eff / 4u32;
    let inner = Float::with_val(prec, &vs * &g.s_g) * 2u32 - &g.r_e;
    let group = Float::with_val(prec, &c * &dk2) * inner / &g.v_eff / 32u32;
    curv + chi - group
}

/// Same value with the group-curvature term written as `-(4a - 2b)/64`.
pub fn b1_global_alt(g: &GeomInvariants) -> Float {
    let prec = g.prec();
    let c = g.common();
    let dk = Float::with_val(prec, g.d_k);
    let dk2 = Float::with_val(prec, &dk * &dk);
    let vs = g.v_scale();
    let v1 = Float::with_val(prec, &g.v_eff * Float::with_val(prec, vs.clone().recip()));
    let curv = Float::with_val(prec, &c * &dk2) * &g.r / &g.v_eff / 4u32;
    let chi = Float::with_val(prec, &c * &dk) * &g.lap_char / v1 / 4u32;
    let inner = Float::with_val(prec, &vs * &g.s_g) * 4u32 - Float::with_val(prec, &g.r_e * 2u32);
    let group = Float::with_val(prec, &c * &dk2) * inner / &g.v_eff / 64u32;
    curv + chi - group
}

/// Inputs of the local `j = 1` stationary phase assembly in adapted
/// coordinates on the orbit.
#[derive(Debug, Clone)]
pub struct LocalInputs {
    pub d: usize,
    pub d_k: u32,
    pub a0: Float,
    pub a1: Float,
    pub v0: Float,
    pub delta_v0: Float,
    /// `Delta conj(chi_k)(0) = 2 V_eff^{-2/d} (Delta_{d mu} conj(chi_k))(e_0)`.
    pub lap_char_raw: Float,
    pub delta2h: Complex,
}

pub fn b1_local(li: &LocalInputs) -> Float {
    let prec = li.a0.prec();
    let dk = Float::with_val(prec, li.d_k);
    let mut acc = Complex::with_val(prec, Float::with_val(prec, &li.a1 * &dk) * &li.v0);
    acc += Float::with_val(prec, &li.a0 * &li.v0) * &li.lap_char_raw / 4u32;
    acc += Float::with_val(prec, &li.a0 * &dk) * &li.delta_v0 / 4u32;
    let w = Float::with_val(prec, &li.a0 * &li.v0) * &dk / 32u32;
    acc += Complex::with_val(prec, (0, w)) * &li.delta2h;
    let pref = half_integer_power(&pi(prec), li.d as i64) * dk;
    Float::with_val(prec, acc.real() * pref)
}

/// `Delta^2 h(0) = i (2 T + 4 V_eff^{-2/d} S_G - 2 R_e)` where `T` sums the
/// second derivatives of the diagonal orbit metric in adapted coordinates.
pub fn delta2h_from_geometry(trace_sum: &Float, g: &GeomInvariants) -> Complex {
    let prec = g.prec();
    let re = Float::with_val(prec, trace_sum * 2u32) + Float::with_val(prec, &g.v_scale() * &g.s_g) * 4u32 - Float::with_val(prec, &g.r_e * 2u32);
    Complex::with_val(prec, (0, re))
}

/// `a_0 = 1 / (2 pi^{n+1})`.
pub fn a0(n: usize, prec: u32) -> Float {
    Float::with_val(prec, pi(prec).pow((n + 1) as u32) * 2u32).recip()
}

/// `a_1 = R / (4 pi^{n+1})`.
pub fn a1(n: usize, r: &Float) -> Float {
    let prec = r.prec();
    Float::with_val(prec, r / Float::with_val(prec, pi(prec).pow((n + 1) as u32) * 4u32))
}

/// Everything the coefficient formulas need at one model point and weight.
#[derive(Debug, Clone)]
pub struct ModelGeometry {
    pub invariants: GeomInvariants,
    pub local: LocalInputs,
    pub haar: HaarChecks,
    /// Distinct stabilizer points, `[L : 2 pi Z^d]`.
    pub multiplicity: u64,
    pub levi_volume_const: Float,
    /// `Delta^2 h(0)` read off the orbit phase itself.
    pub delta2h_direct: Complex,
}

impl ModelGeometry {
    pub fn b0(&self) -> Float {
        b0(&self.invariants)
    }

    pub fn b1_global(&self) -> Float {
        b1_global(&self.invariants)
    }

    pub fn b1_local(&self) -> Float {
        b1_local(&self.local)
    }

    /// Local assembly with the directly measured `Delta^2 h(0)`.
    pub fn b1_local_direct(&self) -> Float {
        let mut li = self.local.clone();
        li.delta2h = self.delta2h_direct.clone();
        b1_local(&li)
    }
}

/// Orbit metric as constant jets in adapted coordinates `theta = B y`, where
/// `B = sqrt(2) L^{-T}` for the Cholesky factor `Gram = L L^T`.
fn adapted_frame(gram: &[Vec<Float>], prec: u32) -> Result<Vec<Vec<Float>>, SphereError> {
    use crate::num::CMatrix;
    let d = gram.len();
    let g = CMatrix::from_fn(d, d, prec, |i, j| Complex::with_val(prec, &gram[i][j]));
    let l = g.cholesky().ok_or(SphereError::NonFreeOrbit)?;
    let linv_t = l.inverse().ok_or(SphereError::NonFreeOrbit)?.transpose();
    let s2 = Float::with_val(prec, 2).sqrt();
    Ok((0..d).map(|i| (0..d).map(|j| Float::with_val(prec, linv_t.get(i, j).real() * &s2)).collect()).collect())
}

pub fn sphere_geometry(model: &SphereModel, p: &SpherePoint, k: &[i64]) -> Result<ModelGeometry, SphereError> {
    let prec = model.prec();
    let n = model.n();
    let d = model.d();
    model.check_point(p)?;
    let v_eff = model.orbit_volume(p)?;
    let lattice = model.effective_lattice()?;
    let pot = model.brt_potential(p, 6)?;
    let r = tw_scalar_curvature(&pot)?;
    let (np, dirs) = model.normalized_orbit_frame(p)?;
    let r_e = scalar_in_g_direction(&np, &dirs)?;
    let torus = model.orbit_torus(p)?;
    let lap_char = torus.laplace_character(k)?;

    // invariant metric: constant in the angle coordinates, 2 I in adapted ones
    let gram = model.orbit_gram(p);
    let b = adapted_frame(&gram, prec)?;
    let mut metric = vec![vec![Jet::zero(d, 2, prec)?; d]; d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = Float::with_val(prec, 0);
            for a in 0..d {
                for c in 0..d {
                    acc += Float::with_val(prec, &b[a][i] * &gram[a][c]) * &b[c][j];
                }
            }
            metric[i][j] = Jet::constant(d, 2, prec, &Complex::with_val(prec, acc))?;
        }
    }
    let s_g = group_scalar_curvature(&metric)?;
    let haar = adapted_haar_checks(&metric, &v_eff)?;
    let mut trace_sum = Float::with_val(prec, 0);
    for s in 0..d {
        let mut e = vec![0u8; d];
        e[s] = 2;
        for (i, row) in metric.iter().enumerate() {
            trace_sum += Float::with_val(prec, row[i].derivative_at_zero(&e)?.real());
        }
    }

    let invariants = GeomInvariants { n, d, d_k: 1, v_eff: v_eff.clone(), r: r.clone(), lap_char: lap_char.clone(), s_g, r_e };
    let lap_char_raw = Float::with_val(prec, &invariants.v_scale() * &lap_char) * 2u32;
    let delta2h = delta2h_from_geometry(&trace_sum, &invariants);

    let integrand = model.orbit_phase(k, p, 6)?;
    let subs: Vec<Jet> = (0..d)
        .map(|a| {
            let mut acc = Jet::zero(d, 6, prec)?;
            for (j, bj) in b[a].iter().enumerate() {
                acc = acc.add(&Jet::variable(d, 6, prec, j)?.scale_real(bj))?;
            }
            Ok(acc)
        })
        .collect::<Result<_, crate::jets::JetError>>()?;
    let h = integrand.phase.compose(&subs)?.drop_below(3);
    let mut delta2h_direct = czero(prec);
    for j in 0..d {
        for l in 0..d {
            let mut e = vec![0u8; d];
            e[j] += 2;
            e[l] += 2;
            delta2h_direct += h.derivative_at_zero(&e)?;
        }
    }

    let local = LocalInputs {
        d,
        d_k: 1,
        a0: a0(n, prec),
        a1: a1(n, &r),
        v0: haar.v0.clone(),
        delta_v0: haar.delta_v0.clone(),
        lap_char_raw,
        delta2h,
    };
    Ok(ModelGeometry { invariants, local, haar, multiplicity: lattice.index, levi_volume_const: model.hardy_const().clone(), delta2h_direct })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: u32 = 128;

    fn f(v: f64) -> Float {
        Float::with_val(P, v)
    }

    fn inv(n: usize, d: usize, d_k: u32, v: f64, r: f64, lap: f64, s_g: f64, r_e: f64) -> GeomInvariants {
        GeomInvariants { n, d, d_k, v_eff: f(v), r: f(r), lap_char: f(lap), s_g: f(s_g), r_e: f(r_e) }
    }

    fn rel(a: &Float, b: &Float) -> f64 {
        (Float::with_val(P, a - b).abs() / b.clone().abs()).to_f64()
    }

    #[test]
    fn b0_reference_value_and_scaling() {
        let g = inv(1, 1, 1, 1.0, 0.0, 0.0, 0.0, 0.0);
        let expect = Float::with_val(P, 2).sqrt().recip() / Float::with_val(P, pi(P).pow(3u32)).sqrt();
        assert!(rel(&b0(&g), &expect) < 1e-35);
        assert!((b0(&g).to_f64() - 0.126_987_27).abs() < 1e-8);
        let g2 = inv(1, 1, 1, 2.0, 0.0, 0.0, 0.0, 0.0);
        assert!(rel(&Float::with_val(P, b0(&g2) * 2u32), &b0(&g)) < 1e-35);
        let g3 = inv(1, 1, 2, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(rel(&b0(&g3), &Float::with_val(P, b0(&g) * 4u32)) < 1e-35);
    }

    #[test]
    fn b1_reference_values() {
        assert!(b1_global(&inv(2, 1, 1, 3.0, 0.0, 0.0, 0.0, 0.0)).is_zero());
        let g = inv(1, 1, 1, 1.0, 1.0, 0.0, 0.0, 0.0);
        let expect = Float::with_val(P, 2).sqrt() / Float::with_val(P, pi(P).pow(3u32)).sqrt() / 4u32;
        assert!(rel(&b1_global(&g), &expect) < 1e-35);
    }

    #[test]
    fn local_assembly_vanishes_when_flat() {
        let li = LocalInputs {
            d: 1,
            d_k: 1,
            a0: a0(1, P),
            a1: f(0.0),
            v0: f(1.0),
            delta_v0: f(0.0),
            lap_char_raw: f(0.0),
            delta2h: czero(P),
        };
        assert!(b1_local(&li).is_zero());
    }

    proptest! {
        #[test]
        fn two_global_forms_agree(v in 0.1f64..10.0, r in -5.0f64..5.0, lap in -50.0f64..0.0, s_g in -3.0f64..3.0, r_e in -6.0f64..2.0, d in 1usize..3, dk in 1u32..3) {
            let g = inv(2, d, dk, v, r, lap, s_g, r_e);
            let a = b1_global(&g);
            let b = b1_global_alt(&g);
            let scale = fmax_abs(&a, &b);
            prop_assert!(Float::with_val(P, &a - &b).abs() <= scale * 1e-30);
        }

        #[test]
        fn local_route_matches_global(v in 0.1f64..10.0, r in -5.0f64..5.0, lap in -50.0f64..0.0, s_g in -3.0f64..3.0, r_e in -6.0f64..2.0, t in -2.0f64..2.0, d in 1usize..4) {
            let g = inv(3, d, 1, v, r, lap, s_g, r_e);
            let two = Float::with_val(P, 2);
            let v0 = half_integer_power(&two, d as i64) / &g.v_eff;
            let tr = f(t);
            let li = LocalInputs {
                d,
                d_k: 1,
                a0: a0(3, P),
                a1: a1(3, &g.r),
                v0,
                delta_v0: half_integer_power(&two, d as i64 - 4) * &tr / &g.v_eff,
                lap_char_raw: Float::with_val(P, &g.v_scale() * &g.lap_char) * 2u32,
                delta2h: delta2h_from_geometry(&tr, &g),
            };
            let a = b1_local(&li);
            let b = b1_global(&g);
            prop_assert!(Float::with_val(P, &a - &b).abs() <= fmax_abs(&a, &b) * 1e-30);
        }
    }

    fn fmax_abs(a: &Float, b: &Float) -> Float {
        crate::num::fmax(crate::num::fmax(a.clone().abs(), b.clone().abs()), f(1e-300))
    }

    #[test]
    fn sphere_three_geometry() {
        let model = SphereModel::new(1, vec![vec![1, -1]], P).unwrap();
        let p = model.find_zero_point().unwrap();
        let g = sphere_geometry(&model, &p, &[1]).unwrap();
        assert!(rel(&g.invariants.v_eff, &pi(P)) < 1e-33);
        assert!(rel(&g.invariants.r, &f(2.0)) < 1e-30);
        assert!(rel(&g.invariants.r_e, &f(-4.0)) < 1e-28);
        let lap = Float::with_val(P, pi(P).square()) * -1i32;
        assert!(rel(&g.invariants.lap_char, &lap) < 1e-30);
        assert!(g.invariants.s_g.clone().abs() < 1e-30);
        assert_eq!(g.multiplicity, 2);
        // b1 / b0 = 3/4 - k^2 / 2
        let ratio = Float::with_val(P, g.b1_global() / g.b0());
        assert!((ratio.to_f64() - 0.25).abs() < 1e-25);
        assert!(rel(&g.b1_local(), &g.b1_global()) < 1e-25);
        let d8 = Complex::with_val(P, (0, 8));
        assert!(crate::num::cabs(&Complex::with_val(P, &g.delta2h_direct - &d8)) < 1e-28);
        assert!(crate::num::cabs(&Complex::with_val(P, &g.local.delta2h - &d8)) < 1e-28);
    }

    #[test]
    fn doubled_weights_give_same_coefficients() {
        let a = SphereModel::new(1, vec![vec![1, -1]], P).unwrap();
        let b = SphereModel::new(1, vec![vec![2, -2]], P).unwrap();
        let pa = a.find_zero_point().unwrap();
        let pb = b.find_zero_point().unwrap();
        for k in [0i64, 1] {
            // the character k of the effective circle is 2k for the doubled weights
            let ga = sphere_geometry(&a, &pa, &[k]).unwrap();
            let gb = sphere_geometry(&b, &pb, &[2 * k]).unwrap();
            assert!(rel(&ga.b0(), &gb.b0()) < 1e-30);
            assert!(rel(&ga.b1_global(), &gb.b1_global()) < 1e-28);
        }
    }
}
