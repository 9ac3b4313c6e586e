//! Pseudohermitian invariants of a rigid CR structure given by a potential.
//!
//! Near a point, a CR manifold with a transversal CR circle action embeds as
//! `{ (z, theta) }` with `T = d/dtheta` and `T^{1,0}` spanned by
//! `d/dz_j + i phi_{z_j} d/dtheta`, where `phi` is a real potential on
//! `C^n` with `phi(0) = 0` and `d phi(0) = 0`. Points of `C^n` use the real
//! variables `z_j = x_{2j} + i x_{2j+1}`.
//!
//! The Levi matrix is `L_{jl} = phi_{z_j zbar_l}`. The rigid scalar curvature
//! is `-2 tr(L^{-1} H)` with `H_{jl} = d_{z_j} d_{zbar_l} log det L`, and the
//! Tanaka-Webster scalar curvature is a quarter of it.

use rug::{Complex, Float};

use crate::jets::{Jet, JetError};
use crate::num::{cabs, czero, fmax, tolerance, CMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PseudohermitianError {
    #[error("potential must use an even number of real variables, got {0}")]
    OddDimension(usize),
    #[error("potential is not real: largest imaginary coefficient {0:e}")]
    NotReal(f64),
    #[error("potential must vanish to second order at the origin ({0})")]
    NotCentred(&'static str),
    #[error("Levi form is not positive definite")]
    NotPositive,
    #[error("potential jet has order {have}, needs at least {needed}")]
    InsufficientOrder { needed: usize, have: usize },
    #[error("directions are not orthonormal for the Levi form (defect {0:e})")]
    NotOrthonormal(f64),
    #[error(transparent)]
    Jet(#[from] JetError),
}

#[derive(Debug, Clone)]
pub struct PotentialJet {
    n: usize,
    phi: Jet,
}

impl PotentialJet {
    pub fn new(phi: Jet) -> Result<Self, PseudohermitianError> {
        let nv = phi.num_vars();
        if nv % 2 != 0 {
            return Err(PseudohermitianError::OddDimension(nv));
        }
        if phi.order() < 2 {
            return Err(PseudohermitianError::InsufficientOrder { needed: 2, have: phi.order() });
        }
        let prec = phi.prec();
        let tol = Float::with_val(prec, tolerance(prec) * fmax(phi.max_abs(), Float::with_val(prec, 1)));
        let im = phi.max_abs_imag();
        if im > tol {
            return Err(PseudohermitianError::NotReal(im.to_f64()));
        }
        if cabs(phi.constant_term()) > tol {
            return Err(PseudohermitianError::NotCentred("phi(0) != 0"));
        }
        if phi.max_abs_in_degree(1) > tol {
            return Err(PseudohermitianError::NotCentred("d phi(0) != 0"));
        }
        let p = Self { n: nv / 2, phi };
        if p.levi_form()?.cholesky().is_none() {
            return Err(PseudohermitianError::NotPositive);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn phi(&self) -> &Jet {
        &self.phi
    }

    pub fn prec(&self) -> u32 {
        self.phi.prec()
    }

    fn unit(&self, j: usize) -> Vec<u8> {
        let mut e = vec![0u8; self.n];
        e[j] = 1;
        e
    }

    /// `d_z^holo d_zbar^anti phi (0)`.
    pub fn mixed_derivative(&self, holo: &[u8], anti: &[u8]) -> Result<Complex, PseudohermitianError> {
        Ok(self.phi.wirtinger_at_zero(holo, anti)?)
    }

    /// `L_{jl} = phi_{z_j zbar_l}(0)`.
    pub fn levi_form(&self) -> Result<CMatrix, PseudohermitianError> {
        let mut l = CMatrix::zeros(self.n, self.n, self.prec());
        for j in 0..self.n {
            for k in 0..self.n {
                l.set(j, k, self.phi.wirtinger_at_zero(&self.unit(j), &self.unit(k))?);
            }
        }
        Ok(l)
    }

    /// `phi_{z_j zbar_l}` as jets around the origin.
    pub fn levi_jets(&self) -> Result<Vec<Vec<Jet>>, PseudohermitianError> {
        use crate::jets::Wirtinger::{Antiholomorphic, Holomorphic};
        let mut out = Vec::with_capacity(self.n);
        for j in 0..self.n {
            let dj = self.phi.wirtinger(j, Holomorphic)?;
            let row = (0..self.n).map(|l| dj.wirtinger(l, Antiholomorphic)).collect::<Result<Vec<_>, _>>()?;
            out.push(row);
        }
        Ok(out)
    }
}

/// Determinant of a small matrix of jets by cofactor expansion.
pub fn jet_det(m: &[Vec<Jet>]) -> Result<Jet, JetError> {
    let n = m.len();
    if n == 1 {
        return Ok(m[0][0].clone());
    }
    let mut acc: Option<Jet> = None;
    for c in 0..n {
        let minor: Vec<Vec<Jet>> = m[1..].iter().map(|row| row.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| v.clone()).collect()).collect();
        let term = m[0][c].mul(&jet_det(&minor)?)?;
        let term = if c % 2 == 1 { term.neg() } else { term };
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    Ok(acc.expect("nonempty matrix"))
}

/// `-2 sum_{j,l} (L^{-1})_{lj} d_{z_j} d_{zbar_l} log det L (0)`.
pub fn rigid_scalar_curvature(p: &PotentialJet) -> Result<Float, PseudohermitianError> {
    if p.phi.order() < 4 {
        return Err(PseudohermitianError::InsufficientOrder { needed: 4, have: p.phi.order() });
    }
    let prec = p.prec();
    let levi = p.levi_form()?;
    let inv = levi.inverse().ok_or(PseudohermitianError::NotPositive)?;
    let logdet = jet_det(&p.levi_jets()?)?.ln()?;
    let mut total = czero(prec);
    for j in 0..p.n {
        for l in 0..p.n {
            let d = logdet.wirtinger_at_zero(&p.unit(j), &p.unit(l))?;
            total += Complex::with_val(prec, inv.get(l, j) * d);
        }
    }
    Ok(Float::with_val(prec, total.real() * -2i32))
}

pub fn tw_scalar_curvature(p: &PotentialJet) -> Result<Float, PseudohermitianError> {
    Ok(rigid_scalar_curvature(p)? / 4u32)
}

/// Potential in coordinates where `L(0) = I` and every term of types
/// `(k, 0)`, `(0, k)`, `(2, 1)`, `(1, 2)`, `(3, 1)`, `(1, 3)` vanishes.
#[derive(Debug, Clone)]
pub struct NormalizedPotential {
    pub potential: PotentialJet,
    /// Old holomorphic coordinates as jets in the new real variables.
    pub coord_change: Vec<Jet>,
    /// Differential of the coordinate change at the origin.
    pub linear: CMatrix,
    pub linear_inv: CMatrix,
}

impl NormalizedPotential {
    /// Components in the new coordinates of a `(1,0)` vector given in the old ones.
    pub fn push_direction(&self, c: &[Complex]) -> Vec<Complex> {
        self.linear_inv.mul_vec(c)
    }
}

/// Real variables `(Re z_j, Im z_j)` of a holomorphic map given as jets.
fn real_parts(z: &[Jet]) -> Result<Vec<Jet>, JetError> {
    let prec = z[0].prec();
    let half = Float::with_val(prec, 0.5);
    let minus_half_i = Complex::with_val(prec, (0, -0.5));
    let mut out = Vec::with_capacity(2 * z.len());
    for zj in z {
        let c = zj.conj();
        out.push(zj.add(&c)?.scale_real(&half));
        out.push(zj.sub(&c)?.scale(&minus_half_i));
    }
    Ok(out)
}

/// `sum_alpha c_alpha w^alpha` as a jet in the real variables of `w`.
fn holomorphic_polynomial(n: usize, order: usize, prec: u32, terms: &[(Vec<u8>, Complex)]) -> Result<Jet, JetError> {
    let zs = (0..n).map(|j| Jet::holomorphic_variable(n, order, prec, j)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Jet::zero(2 * n, order, prec)?;
    for (alpha, c) in terms {
        let mut mono = out.constant_like(&Complex::with_val(prec, 1));
        for (j, &e) in alpha.iter().enumerate() {
            if e > 0 {
                mono = mono.mul(&zs[j].powi(e as u32)?)?;
            }
        }
        out = out.add(&mono.scale(c))?;
    }
    Ok(out)
}

fn multi_indices(n: usize, deg: usize) -> Vec<Vec<u8>> {
    fn rec(n: usize, deg: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if prefix.len() + 1 == n {
            prefix.push(deg as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=deg).rev() {
            prefix.push(e as u8);
            rec(n, deg - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, deg, &mut Vec::new(), &mut out);
    out
}

fn multi_factorial(prec: u32, alpha: &[u8]) -> Float {
    let mut f = Float::with_val(prec, 1);
    for &e in alpha {
        f *= crate::num::factorial(prec, e as u32);
    }
    f
}

/// Subtract the pluriharmonic part `2 Re g`, `g` holomorphic.
fn remove_pluriharmonic(phi: &Jet, n: usize) -> Result<Jet, JetError> {
    let prec = phi.prec();
    let zero = vec![0u8; n];
    let mut terms = Vec::new();
    for deg in 1..=phi.order() {
        for alpha in multi_indices(n, deg) {
            let d = phi.wirtinger_at_zero(&alpha, &zero)?;
            let c = Complex::with_val(prec, d / multi_factorial(prec, &alpha));
            terms.push((alpha, c));
        }
    }
    let g = holomorphic_polynomial(n, phi.order(), prec, &terms)?;
    phi.sub(&g)?.sub(&g.conj())
}

fn compose_holomorphic(outer: &[Jet], inner: &[Jet]) -> Result<Vec<Jet>, JetError> {
    let re = real_parts(inner)?;
    outer.iter().map(|o| o.compose(&re)).collect()
}

pub fn normalize_potential(p: &PotentialJet) -> Result<NormalizedPotential, PseudohermitianError> {
    let n = p.n;
    let prec = p.prec();
    let order = p.phi.order();
    let levi = p.levi_form()?;
    let chol = levi.cholesky().ok_or(PseudohermitianError::NotPositive)?;
    let chol_inv = chol.inverse().ok_or(PseudohermitianError::NotPositive)?;
    let linear = chol_inv.transpose();
    let linear_inv = chol.transpose();
    let ws = (0..n).map(|j| Jet::holomorphic_variable(n, order, prec, j)).collect::<Result<Vec<_>, _>>()?;
    let mut map: Vec<Jet> = Vec::with_capacity(n);
    for j in 0..n {
        let mut zj = ws[0].zero_like();
        for (a, w) in ws.iter().enumerate() {
            zj = zj.add(&w.scale(linear.get(j, a)))?;
        }
        map.push(zj);
    }
    let mut phi = p.phi.compose(&real_parts(&map)?)?;
    phi = remove_pluriharmonic(&phi, n)?;
    for deg in [3usize, 4] {
        if deg > order {
            break;
        }
        let mut step = Vec::with_capacity(n);
        for l in 0..n {
            let mut anti = vec![0u8; n];
            anti[l] = 1;
            let mut terms = Vec::new();
            for beta in multi_indices(n, deg - 1) {
                let d = phi.wirtinger_at_zero(&beta, &anti)?;
                let c = Complex::with_val(prec, -d / multi_factorial(prec, &beta));
                terms.push((beta, c));
            }
            let q = holomorphic_polynomial(n, order, prec, &terms)?;
            step.push(ws[l].add(&q)?);
        }
        phi = phi.compose(&real_parts(&step)?)?;
        phi = remove_pluriharmonic(&phi, n)?;
        map = compose_holomorphic(&map, &step)?;
    }
    // clear rounding residue in the imaginary parts
    let phi = Jet::from_terms(
        2 * n,
        order,
        prec,
        phi.terms().map(|(e, c)| (e.to_vec(), Complex::with_val(prec, c.real()))),
    )?;
    Ok(NormalizedPotential { potential: PotentialJet::new(phi)?, coord_change: map, linear, linear_inv })
}

/// `d^4 phi / dzbar_s dz_t dzbar_l dz_j (0)`.
pub fn chern_curvature_entry(p: &NormalizedPotential, s: usize, t: usize, j: usize, l: usize) -> Result<Complex, PseudohermitianError> {
    let n = p.potential.n;
    let mut holo = vec![0u8; n];
    let mut anti = vec![0u8; n];
    holo[t] += 1;
    holo[j] += 1;
    anti[s] += 1;
    anti[l] += 1;
    p.potential.mixed_derivative(&holo, &anti)
}

/// `sum_{J,L} <R(ebar_J, e_L) e_J | e_L>` for `(1,0)` directions `e_J`
/// orthonormal for the Levi form at the origin.
pub fn scalar_in_g_direction(p: &NormalizedPotential, dirs: &[Vec<Complex>]) -> Result<Float, PseudohermitianError> {
    let n = p.potential.n;
    let prec = p.potential.prec();
    let levi = p.potential.levi_form()?;
    let mut defect = Float::with_val(prec, 0);
    for (a, ca) in dirs.iter().enumerate() {
        for (b, cb) in dirs.iter().enumerate() {
            let mut ip = czero(prec);
            for j in 0..n {
                for l in 0..n {
                    ip += Complex::with_val(prec, levi.get(j, l) * &ca[j]) * cb[l].clone().conj();
                }
            }
            if a == b {
                ip -= 1;
            }
            defect = fmax(defect, cabs(&ip));
        }
    }
    if defect > 1e-20 {
        return Err(PseudohermitianError::NotOrthonormal(defect.to_f64()));
    }
    let mut e = vec![czero(prec); n * n * n * n];
    let at = |s: usize, t: usize, a: usize, b: usize| ((s * n + t) * n + a) * n + b;
    for s in 0..n {
        for t in 0..n {
            for a in 0..n {
                for b in 0..n {
                    e[at(s, t, a, b)] = chern_curvature_entry(p, s, t, a, b)?;
                }
            }
        }
    }
    let mut total = czero(prec);
    for cj in dirs {
        for cl in dirs {
            for s in 0..n {
                let cs = cj[s].clone().conj();
                for t in 0..n {
                    let st = Complex::with_val(prec, &cs * &cl[t]);
                    for a in 0..n {
                        let sta = Complex::with_val(prec, &st * &cj[a]);
                        for b in 0..n {
                            let w = Complex::with_val(prec, &sta * cl[b].clone().conj());
                            total += w * &e[at(s, t, a, b)];
                        }
                    }
                }
            }
        }
    }
    Ok(Float::with_val(prec, total.real()))
}
