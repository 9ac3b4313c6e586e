//! Truncated multivariate Taylor series with complex multiprecision coefficients.
//!
//! A [`Jet`] of order `N` in `k` real variables stores every coefficient of
//! total degree at most `N`. Monomials are laid out in graded order, and within
//! a degree lexicographically with the first variable's exponent descending, so
//! a jet truncated to a lower order is a prefix of the coefficient vector.
//!
//! Complex variables `z_j = x_{2j} + i x_{2j+1}` are handled through the
//! Wirtinger operators `d/dz = (d/dx - i d/dy) / 2` and
//! `d/dzbar = (d/dx + i d/dy) / 2`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rug::{Complex, Float};

use crate::num::{cabs, czero, factorial, fmax};

pub const MAX_VARS: usize = 6;
pub const MAX_ORDER: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JetError {
    #[error("jet shape out of range: {num_vars} variables at order {order}")]
    InvalidShape { num_vars: usize, order: usize },
    #[error("jets live in different variable counts ({0} vs {1})")]
    ShapeMismatch(usize, usize),
    #[error("multi-index {0:?} is outside the jet")]
    IndexOutOfRange(Vec<u8>),
    #[error("{0}")]
    Domain(&'static str),
}

/// Monomials of a fixed variable count up to a fixed total degree.
pub struct Basis {
    num_vars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degree_start: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    products: OnceLock<Vec<Vec<(u32, u32)>>>,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Basis({} vars, order {})", self.num_vars, self.order)
    }
}

fn push_degree(num_vars: usize, deg: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() + 1 == num_vars {
        prefix.push(deg as u8);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=deg).rev() {
        prefix.push(e as u8);
        push_degree(num_vars, deg - e, prefix, out);
        prefix.pop();
    }
}

impl Basis {
    pub fn new(num_vars: usize, order: usize) -> Result<Arc<Self>, JetError> {
        if num_vars == 0 || num_vars > MAX_VARS || order > MAX_ORDER {
            return Err(JetError::InvalidShape { num_vars, order });
        }
        let mut exps = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for deg in 0..=order {
            degree_start.push(exps.len());
            push_degree(num_vars, deg, &mut Vec::new(), &mut exps);
        }
        degree_start.push(exps.len());
        let index = exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Ok(Arc::new(Self {
            num_vars,
            order,
            exps,
            degree_start,
            index,
            products: OnceLock::new(),
        }))
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, i: usize) -> &[u8] {
        &self.exps[i]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    fn degree_of(&self, i: usize) -> usize {
        self.exps[i].iter().map(|&e| e as usize).sum()
    }

    /// Number of monomials of degree at most `deg`.
    fn prefix_len(&self, deg: usize) -> usize {
        self.degree_start[deg.min(self.order) + 1]
    }

    /// For every monomial `i`, the pairs `(j, k)` with `x^i x^j = x^k` inside the basis.
    fn products(&self) -> &[Vec<(u32, u32)>] {
        self.products.get_or_init(|| {
            let mut table = Vec::with_capacity(self.len());
            let mut key = vec![0u8; self.num_vars];
            for i in 0..self.len() {
                let di = self.degree_of(i);
                let lim = self.prefix_len(self.order - di);
                let mut row = Vec::with_capacity(lim);
                for j in 0..lim {
                    for v in 0..self.num_vars {
                        key[v] = self.exps[i][v] + self.exps[j][v];
                    }
                    row.push((j as u32, self.index[&key] as u32));
                }
                table.push(row);
            }
            table
        })
    }
}

/// Which Wirtinger derivative to take with respect to a complex variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wirtinger {
    Holomorphic,
    Antiholomorphic,
}

#[derive(Clone)]
pub struct Jet {
    basis: Arc<Basis>,
    prec: u32,
    coeffs: Vec<Complex>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet[{} vars, order {}]{{", self.num_vars(), self.order())?;
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, ", ")?;
            }
            first = false;
            let (re, im) = (c.real().to_f64(), c.imag().to_f64());
            write!(f, "{:?}: ({re:.6e}, {im:.6e})", self.basis.exps[i])?;
        }
        write!(f, "}}")
    }
}

impl Jet {
    pub fn zero(num_vars: usize, order: usize, prec: u32) -> Result<Self, JetError> {
        let basis = Basis::new(num_vars, order)?;
        Ok(Self::zero_on(basis, prec))
    }

    fn zero_on(basis: Arc<Basis>, prec: u32) -> Self {
        let coeffs = vec![czero(prec); basis.len()];
        Self { basis, prec, coeffs }
    }

    pub fn zero_like(&self) -> Self {
        Self::zero_on(self.basis.clone(), self.prec)
    }

    pub fn constant(num_vars: usize, order: usize, prec: u32, c: &Complex) -> Result<Self, JetError> {
        let mut j = Self::zero(num_vars, order, prec)?;
        j.coeffs[0] = Complex::with_val(prec, c);
        Ok(j)
    }

    pub fn constant_like(&self, c: &Complex) -> Self {
        let mut j = self.zero_like();
        j.coeffs[0] = Complex::with_val(self.prec, c);
        j
    }

    /// The coordinate function `x_i`.
    pub fn variable(num_vars: usize, order: usize, prec: u32, i: usize) -> Result<Self, JetError> {
        let mut j = Self::zero(num_vars, order, prec)?;
        if i >= num_vars {
            return Err(JetError::InvalidShape { num_vars, order });
        }
        if order >= 1 {
            let mut e = vec![0u8; num_vars];
            e[i] = 1;
            j.set_coeff(&e, Complex::with_val(prec, 1))?;
        }
        Ok(j)
    }

    /// `z_j = x_{2j} + i x_{2j+1}` in `2 * n` real variables.
    pub fn holomorphic_variable(n: usize, order: usize, prec: u32, j: usize) -> Result<Self, JetError> {
        let x = Self::variable(2 * n, order, prec, 2 * j)?;
        let y = Self::variable(2 * n, order, prec, 2 * j + 1)?;
        x.add(&y.scale(&Complex::with_val(prec, (0, 1))))
    }

    pub fn from_terms<I>(num_vars: usize, order: usize, prec: u32, terms: I) -> Result<Self, JetError>
    where
        I: IntoIterator<Item = (Vec<u8>, Complex)>,
    {
        let mut j = Self::zero(num_vars, order, prec)?;
        for (alpha, c) in terms {
            if alpha.len() != num_vars {
                return Err(JetError::IndexOutOfRange(alpha));
            }
            let deg: usize = alpha.iter().map(|&e| e as usize).sum();
            if deg > order {
                continue;
            }
            let i = j.basis.index_of(&alpha).ok_or(JetError::IndexOutOfRange(alpha))?;
            j.coeffs[i] += c;
        }
        Ok(j)
    }

    pub fn num_vars(&self) -> usize {
        self.basis.num_vars
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }

    pub fn prec(&self) -> u32 {
        self.prec
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[Complex] {
        &self.coeffs
    }

    /// `(exponents, coefficient)` for every stored monomial.
    pub fn terms(&self) -> impl Iterator<Item = (&[u8], &Complex)> {
        self.basis.exps.iter().map(|e| e.as_slice()).zip(self.coeffs.iter())
    }

    pub fn coeff(&self, alpha: &[u8]) -> Result<&Complex, JetError> {
        let i = self.basis.index_of(alpha).ok_or_else(|| JetError::IndexOutOfRange(alpha.to_vec()))?;
        Ok(&self.coeffs[i])
    }

    pub fn set_coeff(&mut self, alpha: &[u8], c: Complex) -> Result<(), JetError> {
        let i = self.basis.index_of(alpha).ok_or_else(|| JetError::IndexOutOfRange(alpha.to_vec()))?;
        self.coeffs[i] = Complex::with_val(self.prec, c);
        Ok(())
    }

    pub fn constant_term(&self) -> &Complex {
        &self.coeffs[0]
    }

    /// `d^alpha f (0) = alpha! c_alpha`.
    pub fn derivative_at_zero(&self, alpha: &[u8]) -> Result<Complex, JetError> {
        let c = self.coeff(alpha)?;
        let mut f = Float::with_val(self.prec, 1);
        for &e in alpha {
            f *= factorial(self.prec, e as u32);
        }
        Ok(Complex::with_val(self.prec, c * f))
    }

    /// Largest coefficient modulus among monomials of exactly degree `deg`.
    pub fn max_abs_in_degree(&self, deg: usize) -> Float {
        let mut best = Float::with_val(self.prec, 0);
        if deg > self.order() {
            return best;
        }
        for c in &self.coeffs[self.basis.degree_start[deg]..self.basis.degree_start[deg + 1]] {
            best = fmax(best, cabs(c));
        }
        best
    }

    pub fn max_abs(&self) -> Float {
        let mut best = Float::with_val(self.prec, 0);
        for c in &self.coeffs {
            best = fmax(best, cabs(c));
        }
        best
    }

    pub fn max_abs_imag(&self) -> Float {
        let mut best = Float::with_val(self.prec, 0);
        for c in &self.coeffs {
            best = fmax(best, Float::with_val(self.prec, c.imag().abs_ref()));
        }
        best
    }

    /// Keep only degrees `<= order`.
    pub fn truncate(&self, order: usize) -> Result<Self, JetError> {
        if order >= self.order() {
            return Ok(self.clone());
        }
        let basis = Basis::new(self.num_vars(), order)?;
        let coeffs = self.coeffs[..basis.len()].to_vec();
        Ok(Self { basis, prec: self.prec, coeffs })
    }

    /// Reinterpret as a polynomial and store it at a higher order with zero
    /// coefficients above the current one. Only valid where the caller knows
    /// the missing coefficients cannot reach the degrees it later reads.
    pub(crate) fn padded(&self, order: usize) -> Result<Self, JetError> {
        if order <= self.order() {
            return self.truncate(order);
        }
        let basis = Basis::new(self.num_vars(), order)?;
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(basis.len(), czero(self.prec));
        Ok(Self { basis, prec: self.prec, coeffs })
    }

    /// Copy with every coefficient of degree below `deg` set to zero.
    pub fn drop_below(&self, deg: usize) -> Jet {
        let mut out = self.clone();
        let end = self.basis.degree_start[deg.min(self.order() + 1)];
        for c in &mut out.coeffs[..end] {
            *c = czero(self.prec);
        }
        out
    }

    fn aligned(&self, other: &Jet) -> Result<(Arc<Basis>, usize), JetError> {
        if self.num_vars() != other.num_vars() {
            return Err(JetError::ShapeMismatch(self.num_vars(), other.num_vars()));
        }
        let basis = if self.order() <= other.order() { self.basis.clone() } else { other.basis.clone() };
        let len = basis.len();
        Ok((basis, len))
    }

    pub fn add(&self, other: &Jet) -> Result<Jet, JetError> {
        let (basis, len) = self.aligned(other)?;
        let coeffs = (0..len).map(|i| Complex::with_val(self.prec, &self.coeffs[i] + &other.coeffs[i])).collect();
        Ok(Jet { basis, prec: self.prec, coeffs })
    }

    pub fn sub(&self, other: &Jet) -> Result<Jet, JetError> {
        let (basis, len) = self.aligned(other)?;
        let coeffs = (0..len).map(|i| Complex::with_val(self.prec, &self.coeffs[i] - &other.coeffs[i])).collect();
        Ok(Jet { basis, prec: self.prec, coeffs })
    }

    pub fn neg(&self) -> Jet {
        let coeffs = self.coeffs.iter().map(|c| Complex::with_val(self.prec, -c)).collect();
        Jet { basis: self.basis.clone(), prec: self.prec, coeffs }
    }

    pub fn scale(&self, c: &Complex) -> Jet {
        let coeffs = self.coeffs.iter().map(|a| Complex::with_val(self.prec, a * c)).collect();
        Jet { basis: self.basis.clone(), prec: self.prec, coeffs }
    }

    pub fn scale_real(&self, c: &Float) -> Jet {
        let coeffs = self.coeffs.iter().map(|a| Complex::with_val(self.prec, a * c)).collect();
        Jet { basis: self.basis.clone(), prec: self.prec, coeffs }
    }

    pub fn add_constant(&self, c: &Complex) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += c;
        out
    }

    /// Coefficientwise conjugate: the jet of `conj(f)` for real variables.
    pub fn conj(&self) -> Jet {
        let coeffs = self.coeffs.iter().map(|a| a.clone().conj()).collect();
        Jet { basis: self.basis.clone(), prec: self.prec, coeffs }
    }

    fn product_on(basis: Arc<Basis>, prec: u32, a: &[Complex], b: &[Complex]) -> Jet {
        let mut out = vec![czero(prec); basis.len()];
        let table = basis.products();
        for (i, row) in table.iter().enumerate() {
            let ai = &a[i];
            if ai.is_zero() {
                continue;
            }
            for &(j, k) in row {
                let bj = &b[j as usize];
                if bj.is_zero() {
                    continue;
                }
                out[k as usize] += Complex::with_val(prec, ai * bj);
            }
        }
        Jet { basis, prec, coeffs: out }
    }

    /// Cauchy product truncated to the smaller of the two orders.
    pub fn mul(&self, other: &Jet) -> Result<Jet, JetError> {
        let (basis, len) = self.aligned(other)?;
        Ok(Self::product_on(basis, self.prec, &self.coeffs[..len], &other.coeffs[..len]))
    }

    /// Polynomial product of the stored coefficients truncated at `order`,
    /// regardless of the declared orders of the factors.
    pub(crate) fn poly_mul_to(&self, other: &Jet, order: usize) -> Result<Jet, JetError> {
        let a = self.padded(order)?;
        let b = other.padded(order)?;
        a.mul(&b)
    }

    pub fn powi(&self, k: u32) -> Result<Jet, JetError> {
        let mut out = self.constant_like(&Complex::with_val(self.prec, 1));
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// `d/dx_var`, lowering the order by one.
    pub fn diff(&self, var: usize) -> Result<Jet, JetError> {
        if var >= self.num_vars() {
            return Err(JetError::IndexOutOfRange(vec![var as u8]));
        }
        if self.order() == 0 {
            return Ok(self.zero_like());
        }
        let basis = Basis::new(self.num_vars(), self.order() - 1)?;
        let mut coeffs = Vec::with_capacity(basis.len());
        let mut key = vec![0u8; self.num_vars()];
        for e in &basis.exps {
            key.copy_from_slice(e);
            key[var] += 1;
            let c = &self.coeffs[self.basis.index[&key]];
            coeffs.push(Complex::with_val(self.prec, c * key[var] as u32));
        }
        Ok(Jet { basis, prec: self.prec, coeffs })
    }

    pub fn diff_multi(&self, alpha: &[u8]) -> Result<Jet, JetError> {
        let mut out = self.clone();
        for (v, &e) in alpha.iter().enumerate() {
            for _ in 0..e {
                out = out.diff(v)?;
            }
        }
        Ok(out)
    }

    /// Wirtinger derivative in the complex variable `z_j = x_{2j} + i x_{2j+1}`.
    pub fn wirtinger(&self, j: usize, kind: Wirtinger) -> Result<Jet, JetError> {
        if self.num_vars() % 2 != 0 || 2 * j + 1 >= self.num_vars() {
            return Err(JetError::IndexOutOfRange(vec![j as u8]));
        }
        let dx = self.diff(2 * j)?;
        let dy = self.diff(2 * j + 1)?;
        let s = match kind {
            Wirtinger::Holomorphic => Complex::with_val(self.prec, (0, -1)),
            Wirtinger::Antiholomorphic => Complex::with_val(self.prec, (0, 1)),
        };
        let half = Float::with_val(self.prec, 0.5);
        Ok(dx.add(&dy.scale(&s))?.scale_real(&half))
    }

    /// `d_z^holo d_zbar^anti f (0)` as an exact combination of stored coefficients.
    pub fn wirtinger_at_zero(&self, holo: &[u8], anti: &[u8]) -> Result<Complex, JetError> {
        let n = holo.len();
        if anti.len() != n || 2 * n != self.num_vars() {
            return Err(JetError::ShapeMismatch(2 * n, self.num_vars()));
        }
        let prec = self.prec;
        // per complex variable: coefficients of dx^(deg - q) dy^q
        let mut factors: Vec<Vec<Complex>> = Vec::with_capacity(n);
        for j in 0..n {
            let mut poly = vec![Complex::with_val(prec, 1)];
            let minus_i = Complex::with_val(prec, (0, -1));
            let plus_i = Complex::with_val(prec, (0, 1));
            for step in 0..(holo[j] as usize + anti[j] as usize) {
                let s = if step < holo[j] as usize { &minus_i } else { &plus_i };
                let mut next = vec![czero(prec); poly.len() + 1];
                for (q, c) in poly.iter().enumerate() {
                    next[q] += c;
                    next[q + 1] += Complex::with_val(prec, c * s);
                }
                poly = next;
            }
            factors.push(poly);
        }
        let mut total = czero(prec);
        let mut alpha = vec![0u8; 2 * n];
        let mut choice = vec![0usize; n];
        loop {
            let mut coef = Complex::with_val(prec, 1);
            for j in 0..n {
                let deg = holo[j] as usize + anti[j] as usize;
                let q = choice[j];
                alpha[2 * j] = (deg - q) as u8;
                alpha[2 * j + 1] = q as u8;
                coef *= &factors[j][q];
            }
            let deg_total: usize = alpha.iter().map(|&e| e as usize).sum();
            if deg_total > self.order() {
                return Err(JetError::IndexOutOfRange(alpha));
            }
            if !coef.is_zero() {
                let d = self.derivative_at_zero(&alpha)?;
                total += Complex::with_val(prec, coef * d);
            }
            let mut v = 0;
            loop {
                if v == n {
                    let scale = Float::with_val(prec, 1) >> (holo.iter().chain(anti).map(|&e| e as u32).sum::<u32>());
                    return Ok(Complex::with_val(prec, total * scale));
                }
                choice[v] += 1;
                if choice[v] <= holo[v] as usize + anti[v] as usize {
                    break;
                }
                choice[v] = 0;
                v += 1;
            }
        }
    }

    fn without_constant(&self) -> (Complex, Jet) {
        let mut t = self.clone();
        let c = std::mem::replace(&mut t.coeffs[0], czero(self.prec));
        (c, t)
    }

    pub fn exp(&self) -> Jet {
        let prec = self.prec;
        let (c, t) = self.without_constant();
        let mut r = self.constant_like(&Complex::with_val(prec, 1));
        for k in (1..=self.order()).rev() {
            r = t.mul(&r).expect("same shape").scale_real(&Float::with_val(prec, k).recip());
            r.coeffs[0] += 1;
        }
        r.scale(&c.exp())
    }

    /// `log(1 + f)` on the principal branch.
    pub fn log1p(&self) -> Result<Jet, JetError> {
        let prec = self.prec;
        let (c, t) = self.without_constant();
        let base = Complex::with_val(prec, &c + 1);
        if base.is_zero() {
            return Err(JetError::Domain("log1p of a jet with constant term -1"));
        }
        let t = t.scale(&Complex::with_val(prec, base.recip_ref()));
        let mut out = self.zero_like();
        for k in (1..=self.order()).rev() {
            let sign = if k % 2 == 1 { 1 } else { -1 };
            out.coeffs[0] += Float::with_val(prec, sign) / Float::with_val(prec, k);
            out = t.mul(&out)?;
        }
        out.coeffs[0] += base.ln();
        Ok(out)
    }

    /// Principal logarithm; the constant term must be nonzero.
    pub fn ln(&self) -> Result<Jet, JetError> {
        let c = self.coeffs[0].clone();
        if c.is_zero() {
            return Err(JetError::Domain("logarithm of a jet vanishing at the origin"));
        }
        let shifted = self.scale(&Complex::with_val(self.prec, c.recip_ref())).add_constant(&Complex::with_val(self.prec, -1));
        let mut out = shifted.log1p()?;
        out.coeffs[0] += c.ln();
        Ok(out)
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let prec = self.prec;
        let (c, t) = self.without_constant();
        if c.is_zero() {
            return Err(JetError::Domain("reciprocal of a jet vanishing at the origin"));
        }
        let ci = Complex::with_val(prec, c.recip_ref());
        let t = t.scale(&Complex::with_val(prec, -&ci));
        let mut r = self.constant_like(&Complex::with_val(prec, 1));
        for _ in 0..self.order() {
            r = t.mul(&r)?;
            r.coeffs[0] += 1;
        }
        Ok(r.scale(&ci))
    }

    /// Principal square root; the constant term must be nonzero.
    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let prec = self.prec;
        let (c, t) = self.without_constant();
        if c.is_zero() {
            return Err(JetError::Domain("square root of a jet vanishing at the origin"));
        }
        let t = t.scale(&Complex::with_val(prec, c.recip_ref()));
        let n = self.order();
        // binomial(1/2, k)
        let mut binom = vec![Float::with_val(prec, 1)];
        for k in 1..=n {
            let prev = binom[k - 1].clone();
            let num = Float::with_val(prec, 0.5) - Float::with_val(prec, k - 1);
            binom.push(prev * num / Float::with_val(prec, k));
        }
        let mut r = self.zero_like();
        for k in (0..=n).rev() {
            if k < n {
                r = t.mul(&r)?;
            }
            r.coeffs[0] += &binom[k];
        }
        Ok(r.scale(&c.sqrt()))
    }

    /// Value of the stored polynomial at a point.
    pub fn eval(&self, x: &[Complex]) -> Result<Complex, JetError> {
        if x.len() != self.num_vars() {
            return Err(JetError::ShapeMismatch(self.num_vars(), x.len()));
        }
        let prec = self.prec;
        let mut total = czero(prec);
        let mut pows: Vec<Vec<Complex>> = Vec::with_capacity(x.len());
        for xi in x {
            let mut p = vec![Complex::with_val(prec, 1)];
            for k in 1..=self.order() {
                let next = Complex::with_val(prec, &p[k - 1] * xi);
                p.push(next);
            }
            pows.push(p);
        }
        for (e, c) in self.terms() {
            if c.is_zero() {
                continue;
            }
            let mut t = c.clone();
            for (v, &k) in e.iter().enumerate() {
                if k > 0 {
                    t *= &pows[v][k as usize];
                }
            }
            total += t;
        }
        Ok(total)
    }

    /// Value at a real point.
    pub fn eval_real(&self, x: &[Float]) -> Result<Complex, JetError> {
        let xs: Vec<Complex> = x.iter().map(|v| Complex::with_val(self.prec, v)).collect();
        self.eval(&xs)
    }

    /// Substitute `x_i -> subs[i]`. Every substitution must vanish at the origin.
    pub fn compose(&self, subs: &[Jet]) -> Result<Jet, JetError> {
        if subs.len() != self.num_vars() {
            return Err(JetError::ShapeMismatch(self.num_vars(), subs.len()));
        }
        let nv = subs[0].num_vars();
        let mut order = self.order();
        for s in subs {
            if s.num_vars() != nv {
                return Err(JetError::ShapeMismatch(nv, s.num_vars()));
            }
            if !s.coeffs[0].is_zero() {
                return Err(JetError::Domain("composition needs substitutions vanishing at the origin"));
            }
            order = order.min(s.order());
        }
        let subs: Vec<Jet> = subs.iter().map(|s| s.truncate(order)).collect::<Result<_, _>>()?;
        let mut out = subs[0].zero_like();
        let limit = self.basis.prefix_len(order);
        let mut monos: Vec<Jet> = Vec::with_capacity(limit);
        let mut key = vec![0u8; self.num_vars()];
        for i in 0..limit {
            let e = &self.basis.exps[i];
            let mono = if i == 0 {
                out.constant_like(&Complex::with_val(self.prec, 1))
            } else {
                let v = e.iter().rposition(|&k| k > 0).unwrap();
                key.copy_from_slice(e);
                key[v] -= 1;
                monos[self.basis.index[&key]].mul(&subs[v])?
            };
            let c = &self.coeffs[i];
            if !c.is_zero() {
                out = out.add(&mono.scale(c))?;
            }
            monos.push(mono);
        }
        Ok(out)
    }

    /// Apply `P f = sum_ab a_ab d_a d_b f`, lowering the order by two.
    pub fn second_order_operator(&self, a: &crate::num::CMatrix) -> Result<Jet, JetError> {
        let n = self.num_vars();
        if a.rows() != n || a.cols() != n {
            return Err(JetError::ShapeMismatch(n, a.rows()));
        }
        let mut out: Option<Jet> = None;
        for i in 0..n {
            let di = self.diff(i)?;
            for j in 0..n {
                let c = a.get(i, j);
                if c.is_zero() {
                    continue;
                }
                let term = di.diff(j)?.scale(c);
                out = Some(match out {
                    None => term,
                    Some(acc) => acc.add(&term)?,
                });
            }
        }
        match out {
            Some(j) => Ok(j),
            None => {
                let r = self.diff(0)?.diff(0)?;
                Ok(r.zero_like())
            }
        }
    }

    /// Lowest degree carrying a coefficient with modulus above `tol`.
    pub fn valuation(&self, tol: &Float) -> Option<usize> {
        (0..=self.order()).find(|&d| self.max_abs_in_degree(d) > *tol)
    }
}
