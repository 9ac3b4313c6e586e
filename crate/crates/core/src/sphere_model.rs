//! Torus actions on the unit sphere `S^{2n+1}` of `C^{n+1}`.
//!
//! The torus `T^d = R^d / 2 pi Z^d` acts by `theta . z = (exp(i (W^T theta)_l) z_l)_l`
//! for an integer weight matrix `W` of shape `d x (n+1)`. The contact form is
//! `omega_0 = -Im sum zbar_l dz_l` with `<omega_0, T> = -1` for the rotation
//! field `T = i z`, and the moment map is `mu(z) = W |z|^2`.
//!
//! Monomials `z^alpha` are orthogonal in the Hardy space with
//! `||z^alpha||^2 = c 2 pi^{n+1} alpha! / (n + |alpha|)!`, where `c` is the
//! density of the Levi volume against the round volume (equal to one). The
//! Fourier component `S_{k,m}` sums `|z^alpha|^2 / ||z^alpha||^2` over
//! `|alpha| = m` with `W alpha = k`.

use rug::ops::Pow;
use rug::{Complex, Float};

use crate::group_geometry::TorusGroup;
use crate::jets::{Jet, JetError};
use crate::num::{cabs, czero, factorial, fmax, pi, symmetric_eigenvalues, tolerance, CMatrix};
use crate::pseudohermitian::{normalize_potential, NormalizedPotential, PotentialJet, PseudohermitianError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SphereError {
    #[error("invalid weight matrix: {0}")]
    BadWeights(String),
    #[error("weight matrix has rank below its row count")]
    RankDeficient,
    #[error("no point of the moment-map zero set has all coordinates nonzero")]
    ZeroPointInfeasible,
    #[error("point is not on the unit sphere or not in the moment-map zero set: {0}")]
    BadPoint(String),
    #[error("orbit through the point has a positive-dimensional stabilizer")]
    NonFreeOrbit,
    #[error("could not build a chart at the point")]
    ChartSingular,
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Pseudohermitian(#[from] PseudohermitianError),
    #[error(transparent)]
    Group(#[from] crate::group_geometry::GroupError),
}

#[derive(Debug, Clone)]
pub struct SpherePoint {
    pub z: Vec<Complex>,
}

impl SpherePoint {
    pub fn prec(&self) -> u32 {
        self.z[0].prec().0
    }

    pub fn moduli_squared(&self) -> Vec<Float> {
        self.z.iter().map(|c| Float::with_val(self.prec(), c.norm_ref())).collect()
    }
}

/// Period lattice of the torus acting effectively on an orbit of `G x S^1`.
#[derive(Debug, Clone)]
pub struct EffectiveLattice {
    /// Columns span `L = { theta : (W^T theta)_l - (W^T theta)_0 in 2 pi Z }`.
    pub periods: Vec<Vec<Float>>,
    /// `[L : 2 pi Z^d]`.
    pub index: u64,
    /// Representatives `gamma` of `L / 2 pi Z^d` with the circle angle `(W^T gamma)_0`.
    pub stabilizer: Vec<(Vec<Float>, Float)>,
}

#[derive(Debug, Clone)]
pub struct SphereModel {
    n: usize,
    weights: Vec<Vec<i64>>,
    prec: u32,
    hardy_const: Float,
}

/// Diagonalize an integer matrix by unimodular row and column operations.
/// Returns the diagonal entries (nonnegative) and the column transform `V`.
fn integer_diagonalize(a: &[Vec<i64>]) -> (Vec<i64>, Vec<Vec<i64>>) {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Vec<Vec<i128>> = a.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut v: Vec<Vec<i128>> = (0..cols).map(|i| (0..cols).map(|j| (i == j) as i128).collect()).collect();
    let mut diag = Vec::new();
    for t in 0..rows.min(cols) {
        loop {
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if m[i][j] != 0 && best.is_none_or(|(bi, bj)| m[i][j].abs() < m[bi][bj].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((bi, bj)) = best else {
                break;
            };
            m.swap(t, bi);
            for row in m.iter_mut() {
                row.swap(t, bj);
            }
            for row in v.iter_mut() {
                row.swap(t, bj);
            }
            let p = m[t][t];
            let mut clean = true;
            for i in t + 1..rows {
                let q = m[i][t] / p;
                if q != 0 {
                    for j in t..cols {
                        m[i][j] -= q * m[t][j];
                    }
                }
                clean &= m[i][t] == 0;
            }
            for j in t + 1..cols {
                let q = m[t][j] / p;
                if q != 0 {
                    for row in m.iter_mut() {
                        row[j] -= q * row[t];
                    }
                    for row in v.iter_mut() {
                        row[j] -= q * row[t];
                    }
                }
                clean &= m[t][j] == 0;
            }
            if clean {
                break;
            }
        }
        let p = m[t][t];
        if p < 0 {
            for row in m.iter_mut() {
                row[t] = -row[t];
            }
            for row in v.iter_mut() {
                row[t] = -row[t];
            }
        }
        diag.push(m[t][t].abs() as i64);
    }
    while diag.len() < cols {
        diag.push(0);
    }
    let v = v.into_iter().map(|r| r.into_iter().map(|x| x as i64).collect()).collect();
    (diag, v)
}

fn compositions(total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, parts: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if buf.len() + 1 == parts {
            buf.push(left);
            f(buf);
            buf.pop();
            return;
        }
        for e in 0..=left {
            buf.push(e);
            rec(left - e, parts, buf, f);
            buf.pop();
        }
    }
    rec(total, parts, &mut Vec::with_capacity(parts), f);
}

impl SphereModel {
    pub fn new(n: usize, weights: Vec<Vec<i64>>, prec: u32) -> Result<Self, SphereError> {
        let d = weights.len();
        if n == 0 || n > 3 {
            return Err(SphereError::BadWeights(format!("sphere dimension parameter n = {n} not in 1..=3")));
        }
        if d == 0 || d > n {
            return Err(SphereError::BadWeights(format!("{d} weight rows for n = {n}; need 1 <= d <= n")));
        }
        if weights.iter().any(|r| r.len() != n + 1) {
            return Err(SphereError::BadWeights(format!("each weight row needs {} entries", n + 1)));
        }
        let (diag, _) = integer_diagonalize(&weights);
        if diag.iter().take(d).any(|&s| s == 0) {
            return Err(SphereError::RankDeficient);
        }
        let mut model = Self { n, weights, prec, hardy_const: Float::with_val(prec, 1) };
        let mut e0 = vec![czero(prec); n + 1];
        e0[0] = Complex::with_val(prec, 1);
        model.hardy_const = model.levi_volume_const(&SpherePoint { z: e0 });
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn hardy_const(&self) -> &Float {
        &self.hardy_const
    }

    pub fn moment_map(&self, p: &SpherePoint) -> Vec<Float> {
        let s = p.moduli_squared();
        self.weights
            .iter()
            .map(|row| row.iter().zip(&s).fold(Float::with_val(self.prec, 0), |acc, (w, sl)| acc + Float::with_val(self.prec, sl * *w)))
            .collect()
    }

    /// Point of `mu^{-1}(0)` with positive real coordinates maximizing
    /// `-sum |z_l|^2 log |z_l|^2`.
    pub fn find_zero_point(&self) -> Result<SpherePoint, SphereError> {
        let prec = self.prec;
        let d = self.d();
        let cols = self.n + 1;
        // the maximizer is s_l proportional to exp((W^T lambda)_l) with W s = 0,
        // i.e. the critical point of log sum_l exp((W^T lambda)_l)
        let s_of = |lam: &[Float]| -> (Vec<Float>, Float) {
            let mut ex = Vec::with_capacity(cols);
            for l in 0..cols {
                let mut t = Float::with_val(prec, 0);
                for a in 0..d {
                    t += Float::with_val(prec, &lam[a] * self.weights[a][l]);
                }
                ex.push(t.exp());
            }
            let z: Float = ex.iter().fold(Float::with_val(prec, 0), |acc, e| acc + e);
            let s: Vec<Float> = ex.into_iter().map(|e| e / &z).collect();
            (s, z.ln())
        };
        let grad_of = |s: &[Float]| -> Vec<Float> {
            (0..d).map(|a| (0..cols).fold(Float::with_val(prec, 0), |acc, l| acc + Float::with_val(prec, &s[l] * self.weights[a][l]))).collect()
        };
        let norm = |g: &[Float]| -> Float { g.iter().fold(Float::with_val(prec, 0), |acc, x| acc + Float::with_val(prec, x.square_ref())).sqrt() };
        let mut lam = vec![Float::with_val(prec, 0); d];
        let (mut s, mut f) = s_of(&lam);
        let tol = tolerance(prec);
        for _ in 0..400 {
            let g = grad_of(&s);
            if norm(&g) < tol {
                if s.iter().any(|x| *x < 1e-10) {
                    return Err(SphereError::ZeroPointInfeasible);
                }
                let z = s.into_iter().map(|x| Complex::with_val(prec, x.sqrt())).collect();
                return Ok(SpherePoint { z });
            }
            let mut h = CMatrix::zeros(d, d, prec);
            for a in 0..d {
                for b in 0..d {
                    let mut acc = Float::with_val(prec, 0);
                    for l in 0..cols {
                        acc += Float::with_val(prec, &s[l] * (self.weights[a][l] * self.weights[b][l]));
                    }
                    acc -= Float::with_val(prec, &g[a] * &g[b]);
                    h.set(a, b, Complex::with_val(prec, acc));
                }
            }
            let Some(hinv) = h.inverse() else {
                return Err(SphereError::ZeroPointInfeasible);
            };
            let gc: Vec<Complex> = g.iter().map(|x| Complex::with_val(prec, x)).collect();
            let step: Vec<Float> = hinv.mul_vec(&gc).into_iter().map(|c| Float::with_val(prec, c.real())).collect();
            let mut t = Float::with_val(prec, 1);
            loop {
                let trial: Vec<Float> = lam.iter().zip(&step).map(|(l, st)| Float::with_val(prec, l - Float::with_val(prec, st * &t))).collect();
                let (s2, f2) = s_of(&trial);
                if f2 <= f || t < 1e-12 {
                    lam = trial;
                    s = s2;
                    f = f2;
                    break;
                }
                t /= 2u32;
            }
            if lam.iter().any(|l| l.clone().abs() > 500) {
                return Err(SphereError::ZeroPointInfeasible);
            }
        }
        Err(SphereError::ZeroPointInfeasible)
    }

    pub fn check_point(&self, p: &SpherePoint) -> Result<(), SphereError> {
        let prec = self.prec;
        if p.z.len() != self.n + 1 {
            return Err(SphereError::BadPoint(format!("expected {} coordinates", self.n + 1)));
        }
        let tol = Float::with_val(prec, tolerance(prec) * 1e3);
        let r2 = p.moduli_squared().into_iter().fold(Float::with_val(prec, 0), |a, x| a + x);
        if Float::with_val(prec, r2 - 1u32).abs() > tol {
            return Err(SphereError::BadPoint("not on the unit sphere".into()));
        }
        for mu in self.moment_map(p) {
            if mu.abs() > tol {
                return Err(SphereError::BadPoint("moment map does not vanish".into()));
            }
        }
        Ok(())
    }

    /// Infinitesimal generators `xi_a = (i W_{al} z_l)_l` at `p`.
    pub fn generators(&self, p: &SpherePoint) -> Vec<Vec<Complex>> {
        let prec = self.prec;
        self.weights
            .iter()
            .map(|row| row.iter().zip(&p.z).map(|(w, z)| Complex::with_val(prec, z * Complex::with_val(prec, (0, *w)))).collect())
            .collect()
    }

    /// `omega_0(X) = -Im sum zbar_l X_l`.
    pub fn contact_form(&self, p: &SpherePoint, x: &[Complex]) -> Float {
        let prec = self.prec;
        let mut acc = czero(prec);
        for (z, xl) in p.z.iter().zip(x) {
            acc += Complex::with_val(prec, z.clone().conj() * xl);
        }
        Float::with_val(prec, -acc.imag())
    }

    /// Levi metric on real tangent vectors at `p`: the horizontal parts pair
    /// by `-d omega_0(X, J Y) / 2` and the `T` components multiply.
    pub fn levi_metric(&self, p: &SpherePoint, x: &[Complex], y: &[Complex]) -> Float {
        let prec = self.prec;
        let cx = Float::with_val(prec, -self.contact_form(p, x));
        let cy = Float::with_val(prec, -self.contact_form(p, y));
        let t: Vec<Complex> = p.z.iter().map(|z| Complex::with_val(prec, z * Complex::with_val(prec, (0, 1)))).collect();
        let xh: Vec<Complex> = x.iter().zip(&t).map(|(a, b)| Complex::with_val(prec, a - Complex::with_val(prec, b * &cx))).collect();
        let yh: Vec<Complex> = y.iter().zip(&t).map(|(a, b)| Complex::with_val(prec, a - Complex::with_val(prec, b * &cy))).collect();
        // d omega_0(X, Y) = -2 Im sum conj(X_l) Y_l and J Y = i Y on the horizontal space
        let mut acc = czero(prec);
        for (a, b) in xh.iter().zip(&yh) {
            acc += Complex::with_val(prec, a.clone().conj() * Complex::with_val(prec, b * Complex::with_val(prec, (0, 1))));
        }
        let domega = Float::with_val(prec, acc.imag() * -2i32);
        Float::with_val(prec, -domega / 2u32) + Float::with_val(prec, &cx * &cy)
    }

    /// Levi volume density against the round volume at `p`.
    pub fn levi_volume_const(&self, p: &SpherePoint) -> Float {
        let prec = self.prec;
        let frame = self.unitary_frame(p);
        let mut basis: Vec<Vec<Complex>> = Vec::with_capacity(2 * self.n + 1);
        basis.push(p.z.iter().map(|z| Complex::with_val(prec, z * Complex::with_val(prec, (0, 1)))).collect());
        for v in &frame[1..] {
            basis.push(v.clone());
            basis.push(v.iter().map(|c| Complex::with_val(prec, c * Complex::with_val(prec, (0, 1)))).collect());
        }
        let g = CMatrix::from_fn(basis.len(), basis.len(), prec, |i, j| Complex::with_val(prec, self.levi_metric(p, &basis[i], &basis[j])));
        Float::with_val(prec, g.det().real()).sqrt()
    }

    /// Columns of a unitary matrix whose first column is `p`.
    pub fn unitary_frame(&self, p: &SpherePoint) -> Vec<Vec<Complex>> {
        let prec = self.prec;
        let dim = self.n + 1;
        let mut frame = vec![p.z.clone()];
        let mut candidates: Vec<Vec<Complex>> = (0..dim)
            .map(|l| {
                let mut e = vec![czero(prec); dim];
                e[l] = Complex::with_val(prec, 1);
                e
            })
            .collect();
        while frame.len() < dim {
            let mut best: Option<(usize, Float, Vec<Complex>)> = None;
            for (ci, c) in candidates.iter().enumerate() {
                let mut r = c.clone();
                for f in &frame {
                    let mut ip = czero(prec);
                    for (a, b) in r.iter().zip(f) {
                        ip += Complex::with_val(prec, a * b.clone().conj());
                    }
                    for (a, b) in r.iter_mut().zip(f) {
                        *a -= Complex::with_val(prec, b * &ip);
                    }
                }
                let nr = r.iter().fold(Float::with_val(prec, 0), |acc, x| acc + Float::with_val(prec, x.norm_ref())).sqrt();
                if best.as_ref().is_none_or(|(_, bn, _)| nr > *bn) {
                    best = Some((ci, nr, r));
                }
            }
            let (ci, nr, r) = best.expect("candidates remain");
            candidates.remove(ci);
            frame.push(r.into_iter().map(|x| Complex::with_val(prec, x / &nr)).collect());
        }
        frame
    }

    pub fn hardy_norm_squared(&self, alpha: &[usize]) -> Float {
        let prec = self.prec;
        let total: usize = alpha.iter().sum();
        let mut num = Float::with_val(prec, &self.hardy_const * 2u32) * Float::with_val(prec, pi(prec).pow((self.n + 1) as u32));
        for &a in alpha {
            num *= factorial(prec, a as u32);
        }
        num / factorial(prec, (self.n + total) as u32)
    }

    /// `(n + m)! / (m! c 2 pi^{n+1})`, so that `S_m(x, y) = K(m) <x, y>^m`.
    pub fn kernel_constant(&self, m: usize) -> Float {
        let prec = self.prec;
        let mut k = Float::with_val(prec, 1);
        for j in 1..=self.n {
            k *= (m + j) as u32;
        }
        let den = Float::with_val(prec, &self.hardy_const * 2u32) * Float::with_val(prec, pi(prec).pow((self.n + 1) as u32));
        k / den
    }

    fn diag_sum(&self, k: Option<&[i64]>, m: usize, p: &SpherePoint) -> Float {
        let prec = self.prec;
        let s = p.moduli_squared();
        // s_l^j / j! for every coordinate
        let table: Vec<Vec<Float>> = s
            .iter()
            .map(|sl| {
                let mut row = Vec::with_capacity(m + 1);
                row.push(Float::with_val(prec, 1));
                for j in 1..=m {
                    let next = Float::with_val(prec, &row[j - 1] * sl) / j as u32;
                    row.push(next);
                }
                row
            })
            .collect();
        let mut total = Float::with_val(prec, 0);
        compositions(m, self.n + 1, &mut |alpha| {
            if let Some(k) = k {
                for (row, ka) in self.weights.iter().zip(k) {
                    let w: i64 = row.iter().zip(alpha).map(|(w, a)| w * *a as i64).sum();
                    if w != *ka {
                        return;
                    }
                }
            }
            let mut t = Float::with_val(prec, 1);
            for (l, &a) in alpha.iter().enumerate() {
                t *= &table[l][a];
            }
            total += t;
        });
        // |p^alpha|^2 / ||z^alpha||^2 = K(m) m! prod s^a / a!
        total * self.kernel_constant(m) * factorial(prec, m as u32)
    }

    /// `S_m(p, p)` as an exact finite sum over monomials.
    pub fn szego_m_diag(&self, m: usize, p: &SpherePoint) -> Float {
        self.diag_sum(None, m, p)
    }

    /// `S_{k,m}(p, p)` summed over the weight slice `W alpha = k`.
    pub fn szego_km_diag(&self, k: &[i64], m: usize, p: &SpherePoint) -> Float {
        self.diag_sum(Some(k), m, p)
    }

    /// `S_m(x, y) = K(m) <x, y>^m`.
    pub fn szego_m_kernel(&self, m: usize, x: &SpherePoint, y: &SpherePoint) -> Complex {
        let prec = self.prec;
        let mut ip = czero(prec);
        for (a, b) in x.z.iter().zip(&y.z) {
            ip += Complex::with_val(prec, a * b.clone().conj());
        }
        ip.pow(m as u32) * self.kernel_constant(m)
    }

    pub fn act(&self, theta: &[Float], p: &SpherePoint) -> SpherePoint {
        let prec = self.prec;
        let z = (0..=self.n)
            .map(|l| {
                let mut angle = Float::with_val(prec, 0);
                for (a, t) in theta.iter().enumerate() {
                    angle += Float::with_val(prec, t * self.weights[a][l]);
                }
                let ph = Complex::with_val(prec, (Float::with_val(prec, angle.cos_ref()), Float::with_val(prec, angle.sin_ref())));
                Complex::with_val(prec, ph * &p.z[l])
            })
            .collect();
        SpherePoint { z }
    }

    /// `int_G S_m(g p, p) conj(chi_k(g)) dg` by the trapezoid rule, exact for
    /// trigonometric polynomials of the degree that occurs.
    pub fn szego_km_group_integral(&self, k: &[i64], m: usize, p: &SpherePoint) -> Complex {
        self.szego_km_group_integrals(&[k.to_vec()], m, p).remove(0)
    }

    /// Trapezoid-rule group integrals for several weights sharing one grid.
    pub fn szego_km_group_integrals(&self, ks: &[Vec<i64>], m: usize, p: &SpherePoint) -> Vec<Complex> {
        let prec = self.prec;
        let d = self.d();
        let nodes: Vec<usize> = (0..d)
            .map(|a| {
                let wmax = self.weights[a].iter().map(|w| w.unsigned_abs() as usize).max().unwrap_or(0);
                let kmax = ks.iter().map(|k| k[a].unsigned_abs() as usize).max().unwrap_or(0);
                m * wmax + kmax + 1
            })
            .collect();
        let two_pi = Float::with_val(prec, 2 * pi(prec));
        let torus = TorusGroup::standard(d, prec);
        let count: usize = nodes.iter().product();
        let mut totals = vec![czero(prec); ks.len()];
        let mut idx = vec![0usize; d];
        for _ in 0..count {
            let theta: Vec<Float> = (0..d).map(|a| Float::with_val(prec, &two_pi * idx[a] as u32) / nodes[a] as u32).collect();
            let kern = self.szego_m_kernel(m, &self.act(&theta, p), p);
            for (t, k) in totals.iter_mut().zip(ks) {
                *t += Complex::with_val(prec, &kern * torus.character(k, &theta).conj());
            }
            for a in 0..d {
                idx[a] += 1;
                if idx[a] < nodes[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        totals.into_iter().map(|t| t / count as u32).collect()
    }

    /// Number of monomials of degree `m` in the weight slice `W alpha = k`.
    pub fn slice_size(&self, k: &[i64], m: usize) -> usize {
        let mut count = 0;
        compositions(m, self.n + 1, &mut |alpha| {
            let hit = self.weights.iter().zip(k).all(|(row, ka)| row.iter().zip(alpha).map(|(w, a)| w * *a as i64).sum::<i64>() == *ka);
            count += hit as usize;
        });
        count
    }

    pub fn effective_lattice(&self) -> Result<EffectiveLattice, SphereError> {
        let prec = self.prec;
        let d = self.d();
        // rows (w_l - w_0) for l = 1..n, as an n x d integer matrix
        let a: Vec<Vec<i64>> = (1..=self.n).map(|l| (0..d).map(|r| self.weights[r][l] - self.weights[r][0]).collect()).collect();
        let (diag, v) = integer_diagonalize(&a);
        if diag.iter().take(d).any(|&s| s == 0) {
            return Err(SphereError::NonFreeOrbit);
        }
        let two_pi = Float::with_val(prec, 2 * pi(prec));
        // L = 2 pi V diag(1/s) Z^d
        let periods: Vec<Vec<Float>> =
            (0..d).map(|i| (0..d).map(|j| Float::with_val(prec, &two_pi * v[i][j]) / diag[j] as u32).collect()).collect();
        let index: u64 = diag.iter().take(d).map(|&s| s as u64).product();
        let mut stabilizer = Vec::with_capacity(index as usize);
        let mut t = vec![0i64; d];
        for _ in 0..index {
            let gamma: Vec<Float> = (0..d)
                .map(|i| {
                    let mut acc = Float::with_val(prec, 0);
                    for j in 0..d {
                        acc += Float::with_val(prec, v[i][j] * t[j]) / diag[j] as u32;
                    }
                    // reduce into [0, 1) before scaling
                    let fl = Float::with_val(prec, acc.floor_ref());
                    (acc - fl) * &two_pi
                })
                .collect();
            let mut s0 = Float::with_val(prec, 0);
            for (r, g) in gamma.iter().enumerate() {
                s0 += Float::with_val(prec, g * self.weights[r][0]);
            }
            stabilizer.push((gamma, s0));
            for j in 0..d {
                t[j] += 1;
                if t[j] < diag[j] {
                    break;
                }
                t[j] = 0;
            }
        }
        Ok(EffectiveLattice { periods, index, stabilizer })
    }

    /// Levi-metric Gram matrix of the generators at `p`.
    pub fn orbit_gram(&self, p: &SpherePoint) -> Vec<Vec<Float>> {
        let xi = self.generators(p);
        (0..self.d()).map(|a| (0..self.d()).map(|b| self.levi_metric(p, &xi[a], &xi[b])).collect()).collect()
    }

    /// Orbit torus: effective period lattice with the orbit metric attached.
    pub fn orbit_torus(&self, p: &SpherePoint) -> Result<TorusGroup, SphereError> {
        let lat = self.effective_lattice()?;
        let gram = self.orbit_gram(p);
        let ev = symmetric_eigenvalues(&gram);
        if ev[0] <= tolerance(self.prec) {
            return Err(SphereError::NonFreeOrbit);
        }
        Ok(TorusGroup::with_periods(&lat.periods)?.with_metric(&gram)?)
    }

    /// Levi-metric volume of the orbit `G p`.
    pub fn orbit_volume(&self, p: &SpherePoint) -> Result<Float, SphereError> {
        let gram = self.orbit_gram(p);
        let ev = symmetric_eigenvalues(&gram);
        if ev[0] <= tolerance(self.prec) {
            return Err(SphereError::NonFreeOrbit);
        }
        let lat = self.effective_lattice()?;
        let torus = TorusGroup::with_periods(&lat.periods)?;
        let det = ev.iter().fold(Float::with_val(self.prec, 1), |acc, e| acc * e);
        Ok(torus.covolume() * det.sqrt())
    }

    /// Rigid potential `log(1 + |w|^2) / 2` of the chart
    /// `(w, theta) -> exp(i theta) (p + sum w_a v_a) / sqrt(1 + |w|^2)`.
    pub fn brt_potential(&self, p: &SpherePoint, order: usize) -> Result<PotentialJet, SphereError> {
        let prec = self.prec;
        let nv = 2 * self.n;
        let mut r2 = Jet::zero(nv, order, prec)?;
        for v in 0..nv {
            let x = Jet::variable(nv, order, prec, v)?;
            r2 = r2.add(&x.mul(&x)?)?;
        }
        let frame = self.unitary_frame(p);
        if frame.len() != self.n + 1 {
            return Err(SphereError::ChartSingular);
        }
        let phi = r2.log1p()?.scale_real(&Float::with_val(prec, 0.5));
        Ok(PotentialJet::new(phi)?)
    }

    /// `(1,0)` components of the generators in the chart coordinates at `p`.
    pub fn chart_directions(&self, p: &SpherePoint) -> Vec<Vec<Complex>> {
        let prec = self.prec;
        let frame = self.unitary_frame(p);
        self.generators(p)
            .iter()
            .map(|xi| {
                frame[1..]
                    .iter()
                    .map(|v| {
                        let mut acc = czero(prec);
                        for (a, b) in xi.iter().zip(v) {
                            acc += Complex::with_val(prec, a * b.clone().conj());
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }

    /// Normalized potential at `p` and a Levi-orthonormal basis of the span of
    /// the orbit directions in its coordinates.
    pub fn normalized_orbit_frame(&self, p: &SpherePoint) -> Result<(NormalizedPotential, Vec<Vec<Complex>>), SphereError> {
        let np = normalize_potential(&self.brt_potential(p, 6)?)?;
        let levi = np.potential.levi_form()?;
        let prec = self.prec;
        let inner = |a: &[Complex], b: &[Complex]| -> Complex {
            let mut acc = czero(prec);
            for j in 0..a.len() {
                for l in 0..b.len() {
                    acc += Complex::with_val(prec, levi.get(j, l) * &a[j]) * b[l].clone().conj();
                }
            }
            acc
        };
        let mut out: Vec<Vec<Complex>> = Vec::new();
        for c in self.chart_directions(p) {
            let mut r = np.push_direction(&c);
            for e in &out {
                let ip = inner(&r, e);
                for (x, y) in r.iter_mut().zip(e) {
                    *x -= Complex::with_val(prec, y * &ip);
                }
            }
            let nr = Float::with_val(prec, inner(&r, &r).real()).sqrt();
            if nr <= tolerance(prec) {
                return Err(SphereError::NonFreeOrbit);
            }
            out.push(r.into_iter().map(|x| Complex::with_val(prec, x / &nr)).collect());
        }
        Ok((np, out))
    }

    /// Phase, amplitude and kernel polynomial of `S_{k,m}(p, p)` written as an
    /// integral over the torus near the identity.
    pub fn orbit_phase(&self, k: &[i64], p: &SpherePoint, order: usize) -> Result<OrbitIntegrand, SphereError> {
        let prec = self.prec;
        let d = self.d();
        if k.len() != d {
            return Err(SphereError::BadWeights(format!("weight k has {} entries, expected {d}", k.len())));
        }
        let s = p.moduli_squared();
        let mut inner = Jet::zero(d, order, prec)?;
        for l in 0..=self.n {
            let mut lin = Jet::zero(d, order, prec)?;
            for a in 0..d {
                let t = Jet::variable(d, order, prec, a)?;
                lin = lin.add(&t.scale(&Complex::with_val(prec, (0, self.weights[a][l]))))?;
            }
            inner = inner.add(&lin.exp().scale_real(&s[l]))?;
        }
        let phase = inner.ln()?.scale(&Complex::with_val(prec, (0, -1)));
        let mut chi = Jet::zero(d, order, prec)?;
        for a in 0..d {
            let t = Jet::variable(d, order, prec, a)?;
            chi = chi.add(&t.scale(&Complex::with_val(prec, (0, -k[a]))))?;
        }
        let haar = TorusGroup::standard(d, prec).haar_density();
        let amplitude = chi.exp().scale_real(&haar);
        let lattice = self.effective_lattice()?;
        let mut kernel_poly = vec![Float::with_val(prec, 1)];
        for j in 1..=self.n {
            // multiply by (m + j)
            let mut next = vec![Float::with_val(prec, 0); kernel_poly.len() + 1];
            for (i, c) in kernel_poly.iter().enumerate() {
                next[i] += c;
                next[i + 1] += Float::with_val(prec, c * j as u32);
            }
            kernel_poly = next;
        }
        let den = Float::with_val(prec, &self.hardy_const * 2u32) * Float::with_val(prec, pi(prec).pow((self.n + 1) as u32));
        let kernel_poly = kernel_poly.into_iter().map(|c| c / &den).collect();
        Ok(OrbitIntegrand { phase, amplitude, kernel_poly, stabilizer: lattice.stabilizer })
    }
}

#[derive(Debug, Clone)]
pub struct OrbitIntegrand {
    /// `F(theta) = -i log <theta . p, p>`.
    pub phase: Jet,
    /// Haar density times `conj(chi_k)`.
    pub amplitude: Jet,
    /// `K(m) = sum_j kernel_poly[j] m^{n-j}`.
    pub kernel_poly: Vec<Float>,
    /// Critical points `gamma` of the phase on the torus and their circle angles.
    pub stabilizer: Vec<(Vec<Float>, Float)>,
}

impl OrbitIntegrand {
    pub fn kernel_constant(&self, m: usize) -> Float {
        let prec = self.phase.prec();
        let mut acc = Float::with_val(prec, 0);
        for c in &self.kernel_poly {
            acc = acc * m as u32 + c;
        }
        acc
    }

    /// Full amplitude `K(m) conj(chi_k) / covol` at a given `m`.
    pub fn amplitude_at(&self, m: usize) -> Jet {
        self.amplitude.scale_real(&self.kernel_constant(m))
    }

    /// `sum_gamma exp(i (m s_gamma - k . gamma))` over the critical points.
    pub fn multiplicity(&self, k: &[i64], m: usize) -> Complex {
        let prec = self.phase.prec();
        let mut acc = czero(prec);
        for (gamma, s) in &self.stabilizer {
            let mut angle = Float::with_val(prec, s * m as u32);
            for (g, ka) in gamma.iter().zip(k) {
                angle -= Float::with_val(prec, g * *ka);
            }
            acc += Complex::with_val(prec, (Float::with_val(prec, angle.cos_ref()), Float::with_val(prec, angle.sin_ref())));
        }
        acc
    }
}

/// Relative size of the imaginary part of a complex value.
pub fn imaginary_ratio(z: &Complex) -> Float {
    let prec = z.prec().0;
    Float::with_val(prec, z.imag().abs_ref()) / fmax(cabs(z), Float::with_val(prec, 1e-300))
}
