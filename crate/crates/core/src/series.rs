//! Truncated Taylor series with complex coefficients.
//!
//! `Series` holds `c_0..c_K` of `f(x0 + w) = Σ c_k w^k + O(w^{K+1})`. All
//! derivative work on rational and logarithmic expressions in the spectral
//! parameter goes through this type, so derivatives are exact up to rounding.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    coeffs: Vec<C64>,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl Series {
    pub fn constant(value: C64, order: usize) -> Self {
        let mut coeffs = vec![zero(); order + 1];
        coeffs[0] = value;
        Self { coeffs }
    }

    /// The expansion variable `x0 + w` itself.
    pub fn variable(x0: C64, order: usize) -> Self {
        let mut s = Self::constant(x0, order);
        if order >= 1 {
            s.coeffs[1] = C64::new(1.0, 0.0);
        }
        s
    }

    pub fn from_coeffs(coeffs: Vec<C64>) -> Self {
        assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> C64 {
        self.coeffs.get(k).copied().unwrap_or_default()
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    /// k-th derivative at the expansion point: `k! c_k`.
    pub fn derivative(&self, k: usize) -> C64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.coeff(k) * fact
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }

    pub fn recip(&self) -> Self {
        let a0 = self.coeffs[0];
        assert!(a0.norm() > 0.0, "series reciprocal of a vanishing constant term");
        let k = self.order();
        let mut out = vec![zero(); k + 1];
        out[0] = a0.inv();
        for n in 1..=k {
            let mut s = zero();
            for j in 1..=n {
                s += self.coeffs[j] * out[n - j];
            }
            out[n] = -s / a0;
        }
        Self { coeffs: out }
    }

    pub fn div(&self, other: &Self) -> Self {
        self * &other.recip()
    }

    /// Principal logarithm of the constant term plus the exact higher terms.
    pub fn ln(&self) -> Self {
        self.ln_with_branch(self.coeffs[0].ln())
    }

    /// Logarithm with a caller-chosen constant term (branch continuation).
    pub fn ln_with_branch(&self, log_c0: C64) -> Self {
        let k = self.order();
        let a0 = self.coeffs[0];
        assert!(a0.norm() > 0.0, "logarithm of a vanishing constant term");
        // (ln f)' = f'/f, integrated term by term
        let mut out = vec![zero(); k + 1];
        out[0] = log_c0;
        for n in 1..=k {
            let mut s = self.coeffs[n] * n as f64;
            for j in 1..n {
                s -= out[j] * j as f64 * self.coeffs[n - j];
            }
            out[n] = s / (a0 * n as f64);
        }
        Self { coeffs: out }
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut acc = Self::constant(C64::new(1.0, 0.0), self.order());
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    /// Evaluates a polynomial `Σ p_k x^k` on this series (Horner).
    pub fn poly_eval(&self, poly: &[C64]) -> Self {
        let mut acc = Self::constant(zero(), self.order());
        for &c in poly.iter().rev() {
            acc = (&acc * self).add_scalar(c);
        }
        acc
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, rhs: &Series) -> Series {
        assert_eq!(self.order(), rhs.order());
        Series {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Series {
    type Output = Series;
    fn sub(self, rhs: &Series) -> Series {
        assert_eq!(self.order(), rhs.order());
        Series {
            coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Mul for &Series {
    type Output = Series;
    fn mul(self, rhs: &Series) -> Series {
        assert_eq!(self.order(), rhs.order());
        let k = self.order();
        let mut out = vec![zero(); k + 1];
        for i in 0..=k {
            if self.coeffs[i] == zero() {
                continue;
            }
            for j in 0..=(k - i) {
                out[i + j] += self.coeffs[i] * rhs.coeffs[j];
            }
        }
        Series { coeffs: out }
    }
}

/// 2×2 matrix of series, used for monodromy products of affine L-matrices.
#[derive(Clone, Debug)]
pub struct SeriesMatrix2 {
    pub e: [[Series; 2]; 2],
}

impl SeriesMatrix2 {
    pub fn identity(order: usize) -> Self {
        let one = Series::constant(C64::new(1.0, 0.0), order);
        let zer = Series::constant(zero(), order);
        Self {
            e: [[one.clone(), zer.clone()], [zer, one]],
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let entry = |a: usize, c: usize| &(&self.e[a][0] * &rhs.e[0][c]) + &(&self.e[a][1] * &rhs.e[1][c]);
        Self {
            e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
        }
    }

    pub fn scale_series(&self, s: &Series) -> Self {
        Self {
            e: [
                [&self.e[0][0] * s, &self.e[0][1] * s],
                [&self.e[1][0] * s, &self.e[1][1] * s],
            ],
        }
    }

    pub fn trace(&self) -> Series {
        &self.e[0][0] + &self.e[1][1]
    }
}

/// Truncated Taylor polynomial in up to three variables, total degree ≤ 3.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet3 {
    c: [C64; 64],
}

fn jet_index(p: [usize; 3]) -> usize {
    p[0] * 16 + p[1] * 4 + p[2]
}

fn jet_powers() -> impl Iterator<Item = [usize; 3]> {
    (0..4usize).flat_map(|i| (0..4 - i).flat_map(move |j| (0..4 - i - j).map(move |k| [i, j, k])))
}

impl Jet3 {
    pub fn constant(v: C64) -> Self {
        let mut c = [zero(); 64];
        c[0] = v;
        Self { c }
    }

    /// `x0 + w_var`.
    pub fn variable(var: usize, x0: C64) -> Self {
        assert!(var < 3);
        let mut j = Self::constant(x0);
        let mut p = [0; 3];
        p[var] = 1;
        j.c[jet_index(p)] = C64::new(1.0, 0.0);
        j
    }

    pub fn value(&self) -> C64 {
        self.c[0]
    }

    pub fn coeff(&self, powers: [usize; 3]) -> C64 {
        if powers.iter().sum::<usize>() > 3 {
            return zero();
        }
        self.c[jet_index(powers)]
    }

    /// Mixed partial derivative `∂^powers` at the expansion point.
    pub fn derivative(&self, powers: [usize; 3]) -> C64 {
        let fact: f64 = powers.iter().map(|&p| (1..=p).map(|i| i as f64).product::<f64>()).product();
        self.coeff(powers) * fact
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn add_scalar(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    pub fn add(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        out.c.iter_mut().zip(&rhs.c).for_each(|(a, b)| *a += b);
        out
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        self.add(&rhs.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let mut out = [zero(); 64];
        for a in jet_powers() {
            let x = self.c[jet_index(a)];
            if x == zero() {
                continue;
            }
            for b in jet_powers() {
                let p = [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
                if p.iter().sum::<usize>() <= 3 {
                    out[jet_index(p)] += x * rhs.c[jet_index(b)];
                }
            }
        }
        Self { c: out }
    }

    /// `1/(a0 + u) = Σ_k (−u)^k / a0^{k+1}`, exact since `u⁴ = 0`.
    pub fn recip(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0.norm() > 0.0, "jet reciprocal of a vanishing constant term");
        let u = self.add_scalar(-a0).scale(-a0.inv());
        let mut term = Self::constant(C64::new(1.0, 0.0));
        let mut acc = term.clone();
        for _ in 0..3 {
            term = term.mul(&u);
            acc = acc.add(&term);
        }
        acc.scale(a0.inv())
    }

    /// `ln(a0 + u) = ln a0 + Σ_k (−1)^{k+1}(u/a0)^k/k` with the principal `ln a0`.
    pub fn ln(&self) -> Self {
        let a0 = self.c[0];
        assert!(a0.norm() > 0.0, "logarithm of a vanishing constant term");
        let u = self.add_scalar(-a0).scale(a0.inv());
        let mut term = Self::constant(C64::new(1.0, 0.0));
        let mut acc = Self::constant(a0.ln());
        for k in 1..=3 {
            term = term.mul(&u);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            acc = acc.add(&term.scale(C64::new(sign / k as f64, 0.0)));
        }
        acc
    }
}

/// 2×2 matrix of three-variable jets.
#[derive(Clone, Debug)]
pub struct JetMatrix2 {
    pub e: [[Jet3; 2]; 2],
}

impl JetMatrix2 {
    pub fn identity() -> Self {
        let one = Jet3::constant(C64::new(1.0, 0.0));
        let zer = Jet3::constant(zero());
        Self {
            e: [[one.clone(), zer.clone()], [zer, one]],
        }
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        let entry = |a: usize, c: usize| self.e[a][0].mul(&rhs.e[0][c]).add(&self.e[a][1].mul(&rhs.e[1][c]));
        Self {
            e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
        }
    }

    pub fn trace(&self) -> Jet3 {
        self.e[0][0].add(&self.e[1][1])
    }
}
