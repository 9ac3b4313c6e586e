//! Extraction of asymptotic coefficients from exact samples
//! `v(m) ~ sum_{j<J} c_j m^{n - d/2 - j}`.
//!
//! The data are divided by `m^{n - d/2}` and fitted against `t^j` with
//! `t = m_min / m`, which keeps the columns of comparable size.

use rug::ops::Pow;
use rug::{Complex, Float};

use crate::num::{fmax, half_integer_power, symmetric_eigenvalues, CMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("least-squares basis is ill-conditioned (condition {0:e})")]
    IllConditioned(f64),
    #[error("invalid samples: {0}")]
    InvalidSamples(String),
}

#[derive(Debug, Clone)]
pub struct ExpansionSamples {
    entries: Vec<(u64, Float)>,
    /// `2 n - d`, twice the leading exponent.
    twice_base: i64,
}

impl ExpansionSamples {
    /// Degrees must be positive and strictly increasing. Degrees whose slice
    /// is empty are left out by the caller.
    pub fn new(entries: Vec<(u64, Float)>, twice_base: i64) -> Result<Self, FitError> {
        if entries.iter().any(|(m, _)| *m == 0) {
            return Err(FitError::InvalidSamples("degree 0 sample".into()));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(FitError::InvalidSamples("degrees not strictly increasing".into()));
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(FitError::InvalidSamples("non-finite value".into()));
        }
        Ok(Self { entries, twice_base })
    }

    pub fn entries(&self) -> &[(u64, Float)] {
        &self.entries
    }

    pub fn twice_base(&self) -> i64 {
        self.twice_base
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn m_min(&self) -> u64 {
        self.entries.first().map_or(0, |e| e.0)
    }

    pub fn m_max(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.0)
    }

    /// Common difference of consecutive degrees, when there is one.
    pub fn stride(&self) -> Option<u64> {
        let mut it = self.entries.windows(2).map(|w| w[1].0 - w[0].0);
        let first = it.next()?;
        it.all(|s| s == first).then_some(first)
    }

    pub fn restrict(&self, m_min: u64) -> Self {
        Self { entries: self.entries.iter().filter(|e| e.0 >= m_min).cloned().collect(), twice_base: self.twice_base }
    }

    /// `v(m) m^{-(n - d/2)}`.
    fn reduced(&self) -> Vec<(u64, Float)> {
        self.entries
            .iter()
            .map(|(m, v)| {
                let prec = v.prec();
                let mf = Float::with_val(prec, *m);
                (*m, Float::with_val(prec, v * half_integer_power(&mf, -self.twice_base)))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub coeffs: Vec<Float>,
    /// One standard deviation from the weighted residual.
    pub uncertainties: Vec<Float>,
    /// Largest relative residual over the upper half of the degrees.
    pub residual: Float,
    /// Condition number of the weighted, scaled basis.
    pub condition: Float,
}

/// Householder least squares for a tall real system.
fn least_squares(mut a: Vec<Vec<Float>>, mut b: Vec<Float>) -> Vec<Float> {
    let rows = a.len();
    let cols = a[0].len();
    let prec = b[0].prec();
    for k in 0..cols {
        let norm = (k..rows).fold(Float::with_val(prec, 0), |acc, i| acc + Float::with_val(prec, a[i][k].square_ref())).sqrt();
        if norm.is_zero() {
            continue;
        }
        let alpha = if a[k][k] > 0 { Float::with_val(prec, -&norm) } else { norm };
        let mut v: Vec<Float> = (k..rows).map(|i| a[i][k].clone()).collect();
        v[0] -= &alpha;
        let vnorm2 = v.iter().fold(Float::with_val(prec, 0), |acc, x| acc + Float::with_val(prec, x.square_ref()));
        if vnorm2.is_zero() {
            continue;
        }
        for j in k..cols {
            let dot = v.iter().enumerate().fold(Float::with_val(prec, 0), |acc, (i, vi)| acc + Float::with_val(prec, vi * &a[k + i][j]));
            let f = Float::with_val(prec, dot * 2u32) / &vnorm2;
            for (i, vi) in v.iter().enumerate() {
                a[k + i][j] -= Float::with_val(prec, vi * &f);
            }
        }
        let dot = v.iter().enumerate().fold(Float::with_val(prec, 0), |acc, (i, vi)| acc + Float::with_val(prec, vi * &b[k + i]));
        let f = Float::with_val(prec, dot * 2u32) / &vnorm2;
        for (i, vi) in v.iter().enumerate() {
            b[k + i] -= Float::with_val(prec, vi * &f);
        }
    }
    let mut x = vec![Float::with_val(prec, 0); cols];
    for k in (0..cols).rev() {
        let mut s = b[k].clone();
        for j in k + 1..cols {
            s -= Float::with_val(prec, &a[k][j] * &x[j]);
        }
        x[k] = s / &a[k][k];
    }
    x
}

pub fn fit_coefficients(s: &ExpansionSamples, terms: usize) -> Result<FitResult, FitError> {
    fit_impl(s, terms, true)
}

fn fit_impl(s: &ExpansionSamples, terms: usize, check_span: bool) -> Result<FitResult, FitError> {
    if terms == 0 {
        return Err(FitError::InsufficientSamples("no terms requested".into()));
    }
    if s.len() < 2 * terms {
        return Err(FitError::InsufficientSamples(format!("{} samples for {terms} terms; need {}", s.len(), 2 * terms)));
    }
    if check_span && s.m_max() < 4 * s.m_min() {
        return Err(FitError::InsufficientSamples(format!("degree range [{}, {}] spans less than a factor of 4", s.m_min(), s.m_max())));
    }
    let prec = s.entries[0].1.prec();
    let red = s.reduced();
    let m_min = Float::with_val(prec, s.m_min());
    let m_max = Float::with_val(prec, s.m_max());
    let mut a = Vec::with_capacity(red.len());
    let mut b = Vec::with_capacity(red.len());
    let mut sqrt_w = Vec::with_capacity(red.len());
    for (m, w) in &red {
        let mf = Float::with_val(prec, *m);
        let t = Float::with_val(prec, &m_min / &mf);
        // weight (m / m_max)^J applied as its square root on each row
        let sw = half_integer_power(&Float::with_val(prec, &mf / &m_max), terms as i64);
        let mut row = Vec::with_capacity(terms);
        let mut p = Float::with_val(prec, 1);
        for _ in 0..terms {
            row.push(Float::with_val(prec, &p * &sw));
            p *= &t;
        }
        a.push(row);
        b.push(Float::with_val(prec, w * &sw));
        sqrt_w.push(sw);
    }
    let gram: Vec<Vec<Float>> = (0..terms)
        .map(|i| (0..terms).map(|j| a.iter().fold(Float::with_val(prec, 0), |acc, r| acc + Float::with_val(prec, &r[i] * &r[j]))).collect())
        .collect();
    let ev = symmetric_eigenvalues(&gram);
    let lo = fmax(ev[0].clone(), Float::with_val(prec, 1e-300));
    let condition = Float::with_val(prec, &ev[terms - 1] / lo).sqrt();
    let limit = Float::with_val(prec, 2).pow(prec / 2);
    if condition > limit {
        return Err(FitError::IllConditioned(condition.to_f64()));
    }
    let beta = least_squares(a.clone(), b.clone());

    let mut scale = Float::with_val(prec, 1);
    let mut coeffs = Vec::with_capacity(terms);
    for bj in &beta {
        coeffs.push(Float::with_val(prec, bj * &scale));
        scale *= &m_min;
    }

    let model = |m: u64| -> Float {
        let inv = Float::with_val(prec, m).recip();
        let mut acc = Float::with_val(prec, 0);
        for c in coeffs.iter().rev() {
            acc = acc * &inv + c;
        }
        acc
    };
    let half = red.len() / 2;
    let mut residual = Float::with_val(prec, 0);
    for (m, w) in &red[half..] {
        let r = Float::with_val(prec, model(*m) - w).abs() / fmax(w.clone().abs(), Float::with_val(prec, 1e-300));
        residual = fmax(residual, r);
    }

    let mut ssr = Float::with_val(prec, 0);
    for ((row, bi), _) in a.iter().zip(&b).zip(&sqrt_w) {
        let fitted = row.iter().zip(&beta).fold(Float::with_val(prec, 0), |acc, (x, y)| acc + Float::with_val(prec, x * y));
        ssr += Float::with_val(prec, fitted - bi).square();
    }
    let dof = (red.len() - terms).max(1) as u32;
    let sigma2 = ssr / dof;
    let gm = CMatrix::from_fn(terms, terms, prec, |i, j| Complex::with_val(prec, &gram[i][j]));
    let cov = gm.inverse().ok_or(FitError::IllConditioned(f64::INFINITY))?;
    let mut uncertainties = Vec::with_capacity(terms);
    let mut scale = Float::with_val(prec, 1);
    for j in 0..terms {
        let var = Float::with_val(prec, cov.get(j, j).real() * &sigma2).abs();
        uncertainties.push(var.sqrt() * &scale);
        scale *= &m_min;
    }
    Ok(FitResult { coeffs, uncertainties, residual, condition })
}

/// Relative change of the leading fitted coefficient when the degrees below
/// `2 m_min` are dropped. The shortened range may span less than a factor of
/// four; that requirement applies to the primary fit only.
pub fn leading_stability(s: &ExpansionSamples, terms: usize) -> Result<Float, FitError> {
    let full = fit_coefficients(s, terms)?;
    let tail = s.restrict(2 * s.m_min());
    let short = fit_impl(&tail, terms, false)?;
    let prec = full.coeffs[0].prec();
    let den = fmax(full.coeffs[0].clone().abs(), Float::with_val(prec, 1e-300));
    Ok(Float::with_val(prec, &full.coeffs[0] - &short.coeffs[0]).abs() / den)
}

/// Polynomial extrapolation to `1/m = 0` of the reduced data using the
/// `k + 1` largest degrees, for `k = 0, 1, ...`; the last entry is the most
/// refined estimate of the leading coefficient.
pub fn richardson_sequence(s: &ExpansionSamples) -> Result<Vec<Float>, FitError> {
    const MAX_DEPTH: usize = 10;
    if s.len() < 3 {
        return Err(FitError::InsufficientSamples(format!("{} samples; need at least 3", s.len())));
    }
    if s.stride().is_none() {
        return Err(FitError::InvalidSamples("degrees are not evenly spaced".into()));
    }
    let red = s.reduced();
    let prec = red[0].1.prec();
    let depth = red.len().min(MAX_DEPTH);
    let top: Vec<(Float, Float)> =
        red.iter().rev().take(depth).map(|(m, w)| (Float::with_val(prec, *m).recip(), w.clone())).collect();
    // Neville tableau evaluated at h = 0
    let mut col: Vec<Float> = top.iter().map(|(_, w)| w.clone()).collect();
    let mut out = vec![col[0].clone()];
    for k in 1..depth {
        let mut next = Vec::with_capacity(depth - k);
        for i in 0..depth - k {
            let hi = &top[i].0;
            let hk = &top[i + k].0;
            // P(0) = (h_{i+k} P_i - h_i P_{i+1}) / (h_{i+k} - h_i)
            let num = Float::with_val(prec, hk * &col[i]) - Float::with_val(prec, hi * &col[i + 1]);
            next.push(num / Float::with_val(prec, hk - hi));
        }
        out.push(next[0].clone());
        col = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: u32 = 128;

    fn samples(ms: impl Iterator<Item = u64>, twice_base: i64, f: impl Fn(&Float) -> Float) -> ExpansionSamples {
        ExpansionSamples::new(ms.map(|m| (m, f(&Float::with_val(P, m)))).collect(), twice_base).unwrap()
    }

    fn close(a: &Float, b: f64, tol: f64) -> bool {
        Float::with_val(P, a - b).abs() < tol
    }

    #[test]
    fn exact_half_integer_model() {
        let s = samples(10..=60, 1, |m| {
            Float::with_val(P, m.sqrt_ref()) * 3u32 + Float::with_val(P, m.sqrt_ref()).recip() * 5u32
        });
        let r = fit_coefficients(&s, 2).unwrap();
        assert!(close(&r.coeffs[0], 3.0, 1e-25));
        assert!(close(&r.coeffs[1], 5.0, 1e-25));
        assert!(r.residual < 1e-30);
    }

    #[test]
    fn polynomial_sphere_data() {
        let c = Float::with_val(P, 0.37);
        let s = samples((2..=40).step_by(2), 2, |m| Float::with_val(P, m + 1u32) * &c);
        let r = fit_coefficients(&s, 2).unwrap();
        assert!(Float::with_val(P, &r.coeffs[0] - &c).abs() < 1e-25);
        assert!(Float::with_val(P, &r.coeffs[1] - &c).abs() < 1e-25);
    }

    #[test]
    fn truncated_series_error_shrinks_with_m_min() {
        // v = 1 + 1/m + 1/m^2 + 1/m^3 fitted with two terms
        let f = |m: &Float| {
            let h = Float::with_val(P, m.recip_ref());
            Float::with_val(P, 1) + &h + Float::with_val(P, h.square_ref()) + Float::with_val(P, &h * Float::with_val(P, h.square_ref()))
        };
        let e1 = {
            let r = fit_coefficients(&samples(20..=160, 0, f), 2).unwrap();
            Float::with_val(P, &r.coeffs[0] - 1u32).abs().to_f64()
        };
        let e2 = {
            let r = fit_coefficients(&samples(80..=640, 0, f), 2).unwrap();
            Float::with_val(P, &r.coeffs[0] - 1u32).abs().to_f64()
        };
        assert!(e2 < e1 / 4.0, "{e1} {e2}");
    }

    #[test]
    fn sample_requirements() {
        let s = samples(10..=30, 0, |_| Float::with_val(P, 1));
        assert!(matches!(fit_coefficients(&s, 2), Err(FitError::InsufficientSamples(_))));
        let s = samples(10..=12, 0, |_| Float::with_val(P, 1));
        assert!(matches!(fit_coefficients(&s, 2), Err(FitError::InsufficientSamples(_))));
        assert!(ExpansionSamples::new(vec![(3, Float::with_val(P, 1)), (3, Float::with_val(P, 1))], 0).is_err());
    }

    #[test]
    fn ill_conditioning_detected() {
        let s = samples(1000..=4000, 0, |_| Float::with_val(P, 1));
        assert!(matches!(fit_coefficients(&s, 40), Err(FitError::IllConditioned(_))));
    }

    #[test]
    fn richardson_examples() {
        let s = samples((10..=30).step_by(2), 1, |m| Float::with_val(P, m.sqrt_ref()) * 3u32 * (Float::with_val(P, m.recip_ref()) + 1u32));
        let seq = richardson_sequence(&s).unwrap();
        assert!(close(seq.last().unwrap(), 3.0, 1e-30));
        assert!(close(&seq[1], 3.0, 1e-30));
        let c = samples(5..=9, 0, |_| Float::with_val(P, 2.5));
        assert!(close(richardson_sequence(&c).unwrap().last().unwrap(), 2.5, 1e-35));
        let two = ExpansionSamples::new(vec![(3, Float::with_val(P, 1)), (5, Float::with_val(P, 1))], 0).unwrap();
        assert!(matches!(richardson_sequence(&two), Err(FitError::InsufficientSamples(_))));
    }

    #[test]
    fn stability_of_exact_data() {
        let s = samples(20..=200, 1, |m| Float::with_val(P, m.sqrt_ref()) * (Float::with_val(P, m.recip_ref()) * 2u32 + 1u32));
        assert!(leading_stability(&s, 3).unwrap() < 1e-28);
    }

    proptest! {
        #[test]
        fn recovers_coefficients_in_span(c in proptest::collection::vec(-10.0f64..10.0, 3), twice_base in -2i64..5) {
            let cs: Vec<Float> = c.iter().map(|x| Float::with_val(P, *x)).collect();
            let s = samples(30..=200, twice_base, |m| {
                let h = Float::with_val(P, m.recip_ref());
                let mut acc = Float::with_val(P, 0);
                for x in cs.iter().rev() {
                    acc = acc * &h + x;
                }
                acc * half_integer_power(m, twice_base)
            });
            let r = fit_coefficients(&s, 3).unwrap();
            for (a, b) in r.coeffs.iter().zip(&cs) {
                prop_assert!(Float::with_val(P, a - b).abs() < 1e-22);
            }
        }
    }
}
