//! Flat tori, their characters, and Riemannian data of group orbits.
//!
//! A torus is `R^d / L` in angle coordinates `theta`, with `L` spanned by the
//! columns of a period matrix. The standard torus has `L = 2 pi Z^d`. Haar
//! measure is the probability density `1 / covol(L)`.
//!
//! Laplacians of characters are taken for a flat metric of total volume one.
//! Without further data this is the metric pulled back from the unit cube
//! through the period matrix, so each standard circle has circumference one.
//! When an orbit metric is supplied, its constant multiple of volume one is
//! used instead.

use rug::ops::Pow;
use rug::{Complex, Float};

use crate::jets::{Jet, JetError};
use crate::num::{cabs, fmax, half_integer_power, pi, tolerance, CMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupError {
    #[error("period matrix or metric is singular")]
    Singular,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("orbit metric is not in adapted form: {0}")]
    NotAdapted(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone)]
pub struct TorusGroup {
    d: usize,
    prec: u32,
    /// Columns are a basis of the period lattice.
    periods: CMatrix,
    /// Flat metric in angle coordinates, if one is attached.
    metric: Option<CMatrix>,
}

fn real_matrix(rows: &[Vec<Float>], prec: u32) -> CMatrix {
    CMatrix::from_fn(rows.len(), rows.len(), prec, |i, j| Complex::with_val(prec, &rows[i][j]))
}

impl TorusGroup {
    pub fn standard(d: usize, prec: u32) -> Self {
        let two_pi = Complex::with_val(prec, 2 * pi(prec));
        Self { d, prec, periods: CMatrix::identity(d, prec).scale(&two_pi), metric: None }
    }

    pub fn with_periods(periods: &[Vec<Float>]) -> Result<Self, GroupError> {
        let d = periods.len();
        if d == 0 || periods.iter().any(|r| r.len() != d) {
            return Err(GroupError::Dimension { expected: d, got: periods.first().map_or(0, |r| r.len()) });
        }
        let prec = periods[0][0].prec();
        let p = real_matrix(periods, prec);
        if p.inverse().is_none() {
            return Err(GroupError::Singular);
        }
        Ok(Self { d, prec, periods: p, metric: None })
    }

    /// Attach a flat metric `G_{ab}` in the angle coordinates.
    pub fn with_metric(mut self, gram: &[Vec<Float>]) -> Result<Self, GroupError> {
        if gram.len() != self.d {
            return Err(GroupError::Dimension { expected: self.d, got: gram.len() });
        }
        let g = real_matrix(gram, self.prec);
        if g.cholesky().is_none() {
            return Err(GroupError::Singular);
        }
        self.metric = Some(g);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn periods(&self) -> &CMatrix {
        &self.periods
    }

    pub fn covolume(&self) -> Float {
        Float::with_val(self.prec, self.periods.det().real().abs_ref())
    }

    pub fn haar_density(&self) -> Float {
        self.covolume().recip()
    }

    /// `chi_k(theta) = exp(i k . theta)`.
    pub fn character(&self, k: &[i64], theta: &[Float]) -> Complex {
        let mut s = Float::with_val(self.prec, 0);
        for (ki, ti) in k.iter().zip(theta) {
            s += Float::with_val(self.prec, ti * *ki);
        }
        Complex::with_val(self.prec, (Float::with_val(self.prec, s.cos_ref()), Float::with_val(self.prec, s.sin_ref())))
    }

    /// Inverse of the unit-volume flat metric.
    pub fn unit_volume_inverse_metric(&self) -> CMatrix {
        match &self.metric {
            None => self.periods.mul(&self.periods.transpose()),
            Some(g) => {
                let vol = Float::with_val(self.prec, g.det().real()).sqrt() * self.covolume();
                // unit-volume metric is c G with c^(d/2) vol = 1
                let c = vol.pow(Float::with_val(self.prec, -2.0 / self.d as f64));
                let inv = g.inverse().expect("metric checked positive");
                inv.scale(&Complex::with_val(self.prec, c.recip()))
            }
        }
    }

    /// `Delta conj(chi_k) / conj(chi_k)`, a constant for a flat metric.
    pub fn laplace_character(&self, k: &[i64]) -> Result<Float, GroupError> {
        if k.len() != self.d {
            return Err(GroupError::Dimension { expected: self.d, got: k.len() });
        }
        let ginv = self.unit_volume_inverse_metric();
        let mut q = Float::with_val(self.prec, 0);
        for a in 0..self.d {
            for b in 0..self.d {
                q += Float::with_val(self.prec, ginv.get(a, b).real() * (k[a] * k[b]));
            }
        }
        Ok(-q)
    }
}

/// Inverse of a small matrix of jets by Gauss-Jordan elimination.
pub fn jet_matrix_inverse(m: &[Vec<Jet>]) -> Result<Vec<Vec<Jet>>, GroupError> {
    let n = m.len();
    let mut a: Vec<Vec<Jet>> = m.to_vec();
    let one = Complex::with_val(m[0][0].prec(), 1);
    let mut inv: Vec<Vec<Jet>> = (0..n).map(|i| (0..n).map(|j| if i == j { m[0][0].constant_like(&one) } else { m[0][0].zero_like() }).collect()).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| cabs(a[x][c].constant_term()).partial_cmp(&cabs(a[y][c].constant_term())).unwrap()).unwrap();
        if a[piv][c].constant_term().is_zero() {
            return Err(GroupError::Singular);
        }
        a.swap(piv, c);
        inv.swap(piv, c);
        let r = a[c][c].recip()?;
        for j in 0..n {
            a[c][j] = a[c][j].mul(&r)?;
            inv[c][j] = inv[c][j].mul(&r)?;
        }
        for row in 0..n {
            if row == c {
                continue;
            }
            let f = a[row][c].clone();
            for j in 0..n {
                a[row][j] = a[row][j].sub(&f.mul(&a[c][j])?)?;
                inv[row][j] = inv[row][j].sub(&f.mul(&inv[c][j])?)?;
            }
        }
    }
    Ok(inv)
}

/// Scalar curvature at the origin of a Riemannian metric given by jets `g_{ij}`.
pub fn group_scalar_curvature(g: &[Vec<Jet>]) -> Result<Float, GroupError> {
    let d = g.len();
    if g.iter().any(|r| r.len() != d) {
        return Err(GroupError::Dimension { expected: d, got: g[0].len() });
    }
    let prec = g[0][0].prec();
    let ginv = jet_matrix_inverse(g)?;
    // dg[l][i][j] = d_l g_ij
    let mut dg = Vec::with_capacity(d);
    for l in 0..d {
        let mut layer = Vec::with_capacity(d);
        for row in g {
            layer.push(row.iter().map(|e| e.diff(l)).collect::<Result<Vec<_>, _>>()?);
        }
        dg.push(layer);
    }
    let half = Float::with_val(prec, 0.5);
    // gamma[k][i][j]
    let mut gamma = vec![vec![Vec::with_capacity(d); d]; d];
    for k in 0..d {
        for i in 0..d {
            for j in 0..d {
                let mut acc = dg[0][0][0].zero_like();
                for l in 0..d {
                    let t = dg[i][j][l].add(&dg[j][i][l])?.sub(&dg[l][i][j])?;
                    acc = acc.add(&ginv[k][l].mul(&t)?)?;
                }
                gamma[k][i].push(acc.scale_real(&half));
            }
        }
    }
    let mut total = Complex::with_val(prec, 0);
    for i in 0..d {
        for j in 0..d {
            let mut ric = Complex::with_val(prec, 0);
            for k in 0..d {
                ric += gamma[k][i][j].diff(k)?.constant_term();
                ric -= gamma[k][i][k].diff(j)?.constant_term();
                for l in 0..d {
                    ric += Complex::with_val(prec, gamma[k][k][l].constant_term() * gamma[l][i][j].constant_term());
                    ric -= Complex::with_val(prec, gamma[k][j][l].constant_term() * gamma[l][i][k].constant_term());
                }
            }
            total += Complex::with_val(prec, ginv[i][j].constant_term() * ric);
        }
    }
    Ok(Float::with_val(prec, total.real()))
}

#[derive(Debug, Clone)]
pub struct HaarChecks {
    /// `V(0) = 2^(d/2) / V_eff`.
    pub v0: Float,
    /// `sum_s d^2 V / dy_s^2 (0)`.
    pub delta_v0: Float,
    /// `2^(d/2 - 2) V_eff^(-1) sum_s sum_j d^2 G_jj / dy_s^2 (0)`.
    pub rhs: Float,
}

/// Density of Haar measure against the orbit-metric volume in adapted
/// coordinates, where `G(0) = 2 I` and `dG(0) = 0`.
pub fn adapted_haar_checks(orbit_metric: &[Vec<Jet>], v_eff: &Float) -> Result<HaarChecks, GroupError> {
    let d = orbit_metric.len();
    let prec = v_eff.prec();
    let tol = Float::with_val(prec, tolerance(prec) * 1e5);
    for (i, row) in orbit_metric.iter().enumerate() {
        if row.len() != d {
            return Err(GroupError::Dimension { expected: d, got: row.len() });
        }
        for (j, e) in row.iter().enumerate() {
            let target = if i == j { 2 } else { 0 };
            let c0 = Complex::with_val(prec, e.constant_term() - target);
            if cabs(&c0) > tol {
                return Err(GroupError::NotAdapted(format!("G_{i}{j}(0) = {}", e.constant_term().real().to_f64())));
            }
            if e.max_abs_in_degree(1) > tol {
                return Err(GroupError::NotAdapted(format!("dG_{i}{j}(0) != 0")));
            }
            if e.order() < 2 {
                return Err(GroupError::NotAdapted("metric jets need order two".into()));
            }
        }
    }
    let rows: Vec<Vec<Jet>> = orbit_metric.to_vec();
    let det = crate::pseudohermitian::jet_det(&rows)?;
    let v = det.sqrt()?.scale_real(&Float::with_val(prec, v_eff.recip_ref()));
    let v0 = Float::with_val(prec, v.constant_term().real());
    let mut delta_v0 = Float::with_val(prec, 0);
    let mut trace_sum = Float::with_val(prec, 0);
    for s in 0..d {
        let mut e = vec![0u8; d];
        e[s] = 2;
        delta_v0 += Float::with_val(prec, v.derivative_at_zero(&e)?.real());
        for row in orbit_metric.iter().enumerate() {
            trace_sum += Float::with_val(prec, row.1[row.0].derivative_at_zero(&e)?.real());
        }
    }
    let two = Float::with_val(prec, 2);
    let rhs = half_integer_power(&two, d as i64 - 4) * trace_sum / v_eff;
    Ok(HaarChecks { v0, delta_v0, rhs })
}

/// Largest of `|delta_v0 - rhs|` and `|v0 - 2^(d/2)/V_eff|`, relative to the sizes involved.
pub fn haar_check_defect(c: &HaarChecks, d: usize, v_eff: &Float) -> Float {
    let prec = v_eff.prec();
    let two = Float::with_val(prec, 2);
    let v0_expect = half_integer_power(&two, d as i64) / v_eff;
    let a = Float::with_val(prec, &c.v0 - &v0_expect).abs() / fmax(v0_expect.clone(), Float::with_val(prec, 1e-300));
    let scale = fmax(fmax(c.rhs.clone().abs(), c.delta_v0.clone().abs()), v0_expect);
    let b = Float::with_val(prec, &c.delta_v0 - &c.rhs).abs() / scale;
    fmax(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::cplx;

    const P: u32 = 128;

    fn konst(d: usize, order: usize, v: f64) -> Jet {
        Jet::constant(d, order, P, &cplx(P, v, 0.0)).unwrap()
    }

    #[test]
    fn standard_torus_character_laplacian() {
        let t = TorusGroup::standard(2, P);
        let lap = t.laplace_character(&[1, 2]).unwrap();
        let expect = Float::with_val(P, -5) * Float::with_val(P, 2 * pi(P)).square();
        assert!(Float::with_val(P, lap - expect).abs() < 1e-30);
        assert!(Float::with_val(P, t.haar_density() * Float::with_val(P, 2 * pi(P)).square() - 1u32).abs() < 1e-35);
    }

    #[test]
    fn scalar_metric_matches_unit_cube_metric() {
        let two_pi = Float::with_val(P, 2 * pi(P));
        let per = vec![vec![two_pi.clone(), Float::with_val(P, 0)], vec![Float::with_val(P, 0), two_pi]];
        let plain = TorusGroup::with_periods(&per).unwrap();
        let metric = vec![vec![Float::with_val(P, 3), Float::with_val(P, 0)], vec![Float::with_val(P, 0), Float::with_val(P, 3)]];
        let with = plain.clone().with_metric(&metric).unwrap();
        let a = plain.laplace_character(&[2, -1]).unwrap();
        let b = with.laplace_character(&[2, -1]).unwrap();
        assert!(Float::with_val(P, a - b).abs() < 1e-28);
    }

    #[test]
    fn round_sphere_in_normal_coordinates() {
        // g = delta - (K/3)(|x|^2 delta - x x^T) for curvature K
        let k = 0.75;
        let d = 2;
        let x = Jet::variable(d, 3, P, 0).unwrap();
        let y = Jet::variable(d, 3, P, 1).unwrap();
        let c = cplx(P, -k / 3.0, 0.0);
        let g11 = konst(d, 3, 1.0).add(&y.mul(&y).unwrap().scale(&c)).unwrap();
        let g22 = konst(d, 3, 1.0).add(&x.mul(&x).unwrap().scale(&c)).unwrap();
        let g12 = x.mul(&y).unwrap().scale(&cplx(P, k / 3.0, 0.0));
        let s = group_scalar_curvature(&[vec![g11, g12.clone()], vec![g12, g22]]).unwrap();
        let expect = Float::with_val(P, 1.5);
        assert!(Float::with_val(P, &s - &expect).abs() < 1e-30, "{s}");
    }

    #[test]
    fn flat_metric_has_zero_curvature() {
        let g = vec![vec![konst(2, 2, 2.0), konst(2, 2, 0.5)], vec![konst(2, 2, 0.5), konst(2, 2, 1.0)]];
        assert!(group_scalar_curvature(&g).unwrap().abs() < 1e-35);
    }

    #[test]
    fn haar_density_identity_one_dimensional() {
        let y = Jet::variable(1, 4, P, 0).unwrap();
        let g = konst(1, 4, 2.0).add(&y.mul(&y).unwrap()).unwrap();
        let c = adapted_haar_checks(&[vec![g]], &Float::with_val(P, 1)).unwrap();
        let r = Float::with_val(P, 0.5).sqrt();
        assert!(Float::with_val(P, &c.delta_v0 - &r).abs() < 1e-30);
        assert!(Float::with_val(P, &c.rhs - &r).abs() < 1e-30);
        assert!(haar_check_defect(&c, 1, &Float::with_val(P, 1)) < 1e-30);
    }

    #[test]
    fn haar_density_identity_with_off_diagonal_terms() {
        let d = 2;
        let x = Jet::variable(d, 4, P, 0).unwrap();
        let y = Jet::variable(d, 4, P, 1).unwrap();
        let g11 = konst(d, 4, 2.0).add(&y.mul(&y).unwrap().scale(&cplx(P, 0.3, 0.0))).unwrap();
        let g22 = konst(d, 4, 2.0).add(&x.mul(&x).unwrap().scale(&cplx(P, -0.7, 0.0))).unwrap().add(&x.mul(&y).unwrap()).unwrap();
        let g12 = x.mul(&y).unwrap().scale(&cplx(P, 0.4, 0.0));
        let v = Float::with_val(P, 3.5);
        let c = adapted_haar_checks(&[vec![g11, g12.clone()], vec![g12, g22]], &v).unwrap();
        assert!(haar_check_defect(&c, 2, &v) < 1e-30);
    }

    #[test]
    fn unadapted_metric_rejected() {
        let y = Jet::variable(1, 3, P, 0).unwrap();
        let g = konst(1, 3, 2.0).add(&y).unwrap();
        assert!(matches!(adapted_haar_checks(&[vec![g]], &Float::with_val(P, 1)), Err(GroupError::NotAdapted(_))));
        let g = konst(1, 3, 1.0);
        assert!(matches!(adapted_haar_checks(&[vec![g]], &Float::with_val(P, 1)), Err(GroupError::NotAdapted(_))));
    }
}
