//! Cross-module properties: exact kernels, fits, geometry and the
//! stationary-phase route on models beyond the two spheres of the acceptance run.

use proptest::prelude::*;
use rug::Float;
use szego_core::coefficients::sphere_geometry;
use szego_core::fit::fit_coefficients;
use szego_core::sphere_model::SphereModel;
use szego_core::verify::{check_group_integral, km_samples, stationary_phase_route, Tolerances};

const PREC: u32 = 128;

fn rel(a: &Float, b: &Float) -> f64 {
    Float::with_val(PREC, Float::with_val(PREC, a - b).abs() / b).to_f64()
}

fn models() -> Vec<SphereModel> {
    vec![
        SphereModel::new(1, vec![vec![1, -1]], PREC).unwrap(),
        SphereModel::new(1, vec![vec![2, -2]], PREC).unwrap(),
        SphereModel::new(2, vec![vec![1, -1, 0]], PREC).unwrap(),
        SphereModel::new(2, vec![vec![2, -1, -1]], PREC).unwrap(),
        SphereModel::new(2, vec![vec![1, -1, 0], vec![0, 1, -1]], PREC).unwrap(),
    ]
}

#[test]
fn doubled_weights_fit_the_same_b0_on_the_doubled_slice() {
    let a = SphereModel::new(1, vec![vec![1, -1]], PREC).unwrap();
    let b = SphereModel::new(1, vec![vec![2, -2]], PREC).unwrap();
    let pa = a.find_zero_point().unwrap();
    let pb = b.find_zero_point().unwrap();
    for k in 0..3i64 {
        let ga = sphere_geometry(&a, &pa, &[k]).unwrap();
        let gb = sphere_geometry(&b, &pb, &[2 * k]).unwrap();
        assert!(rel(&gb.b0(), &ga.b0()) < 1e-30);
        let fit = fit_coefficients(&km_samples(&b, &pb, &[2 * k], 50, 400).unwrap(), 5).unwrap();
        assert!(rel(&fit.coeffs[0], &gb.b0()) < 1e-8, "k = {k}");
    }
}

#[test]
fn unequal_weights_b0_matches_fit() {
    let model = SphereModel::new(2, vec![vec![2, -1, -1]], PREC).unwrap();
    let p = model.find_zero_point().unwrap();
    let g = sphere_geometry(&model, &p, &[0]).unwrap();
    let fit = fit_coefficients(&km_samples(&model, &p, &[0], 60, 400).unwrap(), 5).unwrap();
    assert!(rel(&fit.coeffs[0], &g.b0()) < 1e-6, "fit {} vs {}", fit.coeffs[0], g.b0());
}

#[test]
fn group_integral_identity_on_unequal_and_rank_two_models() {
    let tol = Tolerances::default();
    for model in models().into_iter().skip(3) {
        let p = model.find_zero_point().unwrap();
        let c = check_group_integral(&model, &p, 12, 2, &tol);
        assert!(c.passed, "{}: {}", c.name, c.error);
    }
}

#[test]
fn route_leading_coefficient_on_the_five_sphere() {
    let model = SphereModel::new(2, vec![vec![1, -1, 0]], PREC).unwrap();
    let p = model.find_zero_point().unwrap();
    let r = stationary_phase_route(&model, &p, &[1], 1, &[50, 100, 200, 400]).unwrap();
    let g = sphere_geometry(&model, &p, &[1]).unwrap();
    assert!(rel(&r.c0, &g.b0()) < 1e-20);
    assert!(r.slope > 1.5, "slope {}", r.slope);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slices_are_nonnegative_and_sum_to_the_full_kernel(which in 0usize..5, m in 1usize..9) {
        let model = &models()[which];
        let p = model.find_zero_point().unwrap();
        let d = model.d();
        let bound = 2 * m as i64 * 2 + 1;
        let mut total = Float::with_val(PREC, 0);
        let mut k = vec![-bound; d];
        loop {
            if model.slice_size(&k, m) > 0 {
                let v = model.szego_km_diag(&k, m, &p);
                prop_assert!(v >= 0);
                total += v;
            }
            let mut i = 0;
            while i < d && k[i] == bound {
                k[i] = -bound;
                i += 1;
            }
            if i == d {
                break;
            }
            k[i] += 1;
        }
        let full = model.szego_m_diag(m, &p);
        prop_assert!(rel(&total, &full) < 1e-30);
    }
}
