//! Precision helpers and small dense complex linear algebra.
//!
//! Every routine works at the precision carried by its inputs. Matrices here
//! are tiny (at most a handful of rows), so plain Gaussian elimination and
//! cyclic Jacobi sweeps are all that is needed.

use rug::float::Constant;
use rug::ops::Pow;
use rug::{Complex, Float};

/// Working precision in bits used when none is configured.
pub const DEFAULT_PRECISION: u32 = 128;

pub fn real(prec: u32, v: f64) -> Float {
    Float::with_val(prec, v)
}

pub fn cplx(prec: u32, re: f64, im: f64) -> Complex {
    Complex::with_val(prec, (re, im))
}

pub fn czero(prec: u32) -> Complex {
    Complex::with_val(prec, 0)
}

pub fn cone(prec: u32) -> Complex {
    Complex::with_val(prec, 1)
}

pub fn imag_unit(prec: u32) -> Complex {
    Complex::with_val(prec, (0, 1))
}

pub fn pi(prec: u32) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn factorial(prec: u32, n: u32) -> Float {
    Float::with_val(prec, Float::factorial(n))
}

/// `2^(45 - prec)`: about `1e-25` at 128 bits.
pub fn tolerance(prec: u32) -> Float {
    let mut t = Float::with_val(prec, 1);
    t >>= prec.saturating_sub(45);
    t
}

pub fn cabs(z: &Complex) -> Float {
    Float::with_val(z.prec().0, z.abs_ref())
}

pub fn fmax(a: Float, b: Float) -> Float {
    if a >= b {
        a
    } else {
        b
    }
}

/// `|a - b| / max(|b|, floor)`.
pub fn rel_diff(a: &Complex, b: &Complex, floor: &Float) -> Float {
    let prec = a.prec().0;
    let d = Complex::with_val(prec, a - b);
    let scale = fmax(cabs(b), floor.clone());
    Float::with_val(prec, cabs(&d) / &scale)
}

/// `m^(twice / 2)` computed from a power and at most one square root.
pub fn half_integer_power(m: &Float, twice: i64) -> Float {
    let prec = m.prec();
    let whole = twice.div_euclid(2);
    let mut out = Float::with_val(prec, m.clone().pow(whole as i32));
    if twice.rem_euclid(2) == 1 {
        out *= Float::with_val(prec, m.sqrt_ref());
    }
    out
}

#[derive(Clone, Debug)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    prec: u32,
    data: Vec<Complex>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize, prec: u32) -> Self {
        Self {
            rows,
            cols,
            prec,
            data: vec![czero(prec); rows * cols],
        }
    }

    pub fn identity(n: usize, prec: u32) -> Self {
        let mut m = Self::zeros(n, n, prec);
        for i in 0..n {
            m.set(i, i, cone(prec));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, prec: u32, mut f: impl FnMut(usize, usize) -> Complex) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(Complex::with_val(prec, f(i, j)));
            }
        }
        Self { rows, cols, prec, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn get(&self, i: usize, j: usize) -> &Complex {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, o: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, o.rows, "matrix shapes do not chain");
        let mut out = CMatrix::zeros(self.rows, o.cols, self.prec);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = czero(self.prec);
                for k in 0..self.cols {
                    acc += Complex::with_val(self.prec, self.get(i, k) * o.get(k, j));
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex]) -> Vec<Complex> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = czero(self.prec);
                for (k, vk) in v.iter().enumerate() {
                    acc += Complex::with_val(self.prec, self.get(i, k) * vk);
                }
                acc
            })
            .collect()
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, self.prec, |i, j| self.get(j, i).clone())
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, self.prec, |i, j| self.get(j, i).clone().conj())
    }

    pub fn scale(&self, c: &Complex) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, self.prec, |i, j| Complex::with_val(self.prec, self.get(i, j) * c))
    }

    pub fn add(&self, o: &CMatrix) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, self.prec, |i, j| Complex::with_val(self.prec, self.get(i, j) + o.get(i, j)))
    }

    pub fn sub(&self, o: &CMatrix) -> CMatrix {
        CMatrix::from_fn(self.rows, self.cols, self.prec, |i, j| Complex::with_val(self.prec, self.get(i, j) - o.get(i, j)))
    }

    pub fn max_abs(&self) -> Float {
        let mut best = Float::with_val(self.prec, 0);
        for z in &self.data {
            best = fmax(best, cabs(z));
        }
        best
    }

    pub fn trace(&self) -> Complex {
        let mut acc = czero(self.prec);
        for i in 0..self.rows.min(self.cols) {
            acc += self.get(i, i);
        }
        acc
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> Complex {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut det = cone(self.prec);
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| cabs(a.get(x, c)).partial_cmp(&cabs(a.get(y, c))).unwrap()).unwrap();
            if a.get(piv, c).is_zero() {
                return czero(self.prec);
            }
            if piv != c {
                for j in 0..n {
                    a.data.swap(piv * n + j, c * n + j);
                }
                det = -det;
            }
            let p = a.get(c, c).clone();
            det *= &p;
            for r in c + 1..n {
                let f = Complex::with_val(self.prec, a.get(r, c) / &p);
                for j in c..n {
                    let v = Complex::with_val(self.prec, a.get(r, j) - Complex::with_val(self.prec, &f * a.get(c, j)));
                    a.set(r, j, v);
                }
            }
        }
        det
    }

    /// Gauss-Jordan inverse; `None` when a pivot falls below `tolerance * max|a|`.
    pub fn inverse(&self) -> Option<CMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let prec = self.prec;
        let thresh = Float::with_val(prec, tolerance(prec) * self.max_abs());
        let mut a = self.clone();
        let mut inv = CMatrix::identity(n, prec);
        for c in 0..n {
            let piv = (c..n).max_by(|&x, &y| cabs(a.get(x, c)).partial_cmp(&cabs(a.get(y, c))).unwrap()).unwrap();
            if cabs(a.get(piv, c)) <= thresh {
                return None;
            }
            if piv != c {
                for j in 0..n {
                    a.data.swap(piv * n + j, c * n + j);
                    inv.data.swap(piv * n + j, c * n + j);
                }
            }
            let p = a.get(c, c).clone();
            for j in 0..n {
                let v = Complex::with_val(prec, a.get(c, j) / &p);
                a.set(c, j, v);
                let w = Complex::with_val(prec, inv.get(c, j) / &p);
                inv.set(c, j, w);
            }
            for r in 0..n {
                if r == c {
                    continue;
                }
                let f = a.get(r, c).clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = Complex::with_val(prec, a.get(r, j) - Complex::with_val(prec, &f * a.get(c, j)));
                    a.set(r, j, v);
                    let w = Complex::with_val(prec, inv.get(r, j) - Complex::with_val(prec, &f * inv.get(c, j)));
                    inv.set(r, j, w);
                }
            }
        }
        Some(inv)
    }

    /// Lower-triangular `L` with `L L* = self` for Hermitian positive definite input.
    pub fn cholesky(&self) -> Option<CMatrix> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let prec = self.prec;
        let thresh = Float::with_val(prec, tolerance(prec) * self.max_abs());
        let mut l = CMatrix::zeros(n, n, prec);
        for j in 0..n {
            let mut d = Complex::with_val(prec, self.get(j, j).real());
            for k in 0..j {
                let nk = Float::with_val(prec, l.get(j, k).norm_ref());
                d -= nk;
            }
            let dr = Float::with_val(prec, d.real());
            if dr <= thresh {
                return None;
            }
            let djj = dr.sqrt();
            l.set(j, j, Complex::with_val(prec, &djj));
            for i in j + 1..n {
                let mut s = self.get(i, j).clone();
                for k in 0..j {
                    s -= Complex::with_val(prec, l.get(i, k) * l.get(j, k).clone().conj());
                }
                l.set(i, j, Complex::with_val(prec, s / &djj));
            }
        }
        Some(l)
    }

    pub fn is_hermitian(&self, tol: &Float) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                let d = Complex::with_val(self.prec, self.get(i, j) - self.get(j, i).clone().conj());
                if cabs(&d) > *tol {
                    return false;
                }
            }
        }
        true
    }
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(a: &[Vec<Float>]) -> Vec<Float> {
    let n = a.len();
    if n == 0 {
        return Vec::new();
    }
    let prec = a[0][0].prec();
    let mut m: Vec<Vec<Float>> = a.to_vec();
    let eps = tolerance(prec);
    for _sweep in 0..100 {
        let mut off = Float::with_val(prec, 0);
        let mut diag = Float::with_val(prec, 0);
        for i in 0..n {
            diag += Float::with_val(prec, m[i][i].square_ref());
            for j in 0..n {
                if i != j {
                    off += Float::with_val(prec, m[i][j].square_ref());
                }
            }
        }
        let limit = Float::with_val(prec, &eps * &eps) * Float::with_val(prec, &diag + 1u32);
        if off <= limit {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].is_zero() {
                    continue;
                }
                let theta = Float::with_val(prec, &m[q][q] - &m[p][p]) / Float::with_val(prec, 2 * m[p][q].clone());
                let sign = if theta >= 0 { 1 } else { -1 };
                let t_den = Float::with_val(prec, theta.clone().abs() + (Float::with_val(prec, theta.square_ref()) + 1u32).sqrt());
                let t = Float::with_val(prec, sign) / t_den;
                let c = (Float::with_val(prec, t.square_ref()) + 1u32).sqrt().recip();
                let s = Float::with_val(prec, &t * &c);
                for k in 0..n {
                    let mkp = m[k][p].clone();
                    let mkq = m[k][q].clone();
                    m[k][p] = Float::with_val(prec, &c * &mkp) - Float::with_val(prec, &s * &mkq);
                    m[k][q] = Float::with_val(prec, &s * &mkp) + Float::with_val(prec, &c * &mkq);
                }
                for k in 0..n {
                    let mpk = m[p][k].clone();
                    let mqk = m[q][k].clone();
                    m[p][k] = Float::with_val(prec, &c * &mpk) - Float::with_val(prec, &s * &mqk);
                    m[q][k] = Float::with_val(prec, &s * &mpk) + Float::with_val(prec, &c * &mqk);
                }
            }
        }
    }
    let mut ev: Vec<Float> = (0..n).map(|i| m[i][i].clone()).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: u32 = 128;

    fn mat(rows: &[&[(f64, f64)]]) -> CMatrix {
        CMatrix::from_fn(rows.len(), rows[0].len(), P, |i, j| cplx(P, rows[i][j].0, rows[i][j].1))
    }

    #[test]
    fn det_of_triangular_is_diagonal_product() {
        let a = mat(&[&[(2.0, 0.0), (5.0, 1.0)], &[(0.0, 0.0), (0.0, 3.0)]]);
        let d = a.det();
        assert!(cabs(&(d - cplx(P, 0.0, 6.0))) < 1e-35);
    }

    #[test]
    fn inverse_round_trips() {
        let a = mat(&[&[(1.0, 1.0), (2.0, 0.0), (0.0, 0.5)], &[(0.0, -1.0), (3.0, 0.0), (1.0, 0.0)], &[(1.0, 0.0), (0.0, 0.0), (2.0, 2.0)]]);
        let inv = a.inverse().unwrap();
        let id = a.mul(&inv).sub(&CMatrix::identity(3, P));
        assert!(id.max_abs() < 1e-35);
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let a = mat(&[&[(1.0, 0.0), (2.0, 0.0)], &[(2.0, 0.0), (4.0, 0.0)]]);
        assert!(a.inverse().is_none());
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = mat(&[&[(4.0, 0.0), (1.0, 1.0)], &[(1.0, -1.0), (3.0, 0.0)]]);
        let l = a.cholesky().unwrap();
        let back = l.mul(&l.adjoint()).sub(&a);
        assert!(back.max_abs() < 1e-35);
        let indefinite = mat(&[&[(1.0, 0.0), (2.0, 0.0)], &[(2.0, 0.0), (1.0, 0.0)]]);
        assert!(indefinite.cholesky().is_none());
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = vec![
            vec![real(P, 2.0), real(P, -1.0), real(P, 0.0)],
            vec![real(P, -1.0), real(P, 2.0), real(P, -1.0)],
            vec![real(P, 0.0), real(P, -1.0), real(P, 2.0)],
        ];
        let ev = symmetric_eigenvalues(&a);
        let s2 = Float::with_val(P, 2).sqrt();
        let expect = [Float::with_val(P, 2 - s2.clone()), real(P, 2.0), Float::with_val(P, 2 + s2)];
        for (e, x) in ev.iter().zip(expect.iter()) {
            assert!(Float::with_val(P, e - x).abs() < 1e-30);
        }
    }

    #[test]
    fn half_integer_powers() {
        let m = real(P, 9.0);
        assert_eq!(half_integer_power(&m, 3), 27);
        assert_eq!(half_integer_power(&m, -2), Float::with_val(P, 9).recip());
        assert_eq!(half_integer_power(&m, 0), 1);
    }
}
