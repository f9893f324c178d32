//! su(2) triple hidden in one site of the L-operator.
//!
//! Writing `−σ₃L(λ) = a(λ) I + t³σ₃ + t⁻σ⁺ + t⁺σ⁻` (up to the scale `c`),
//! the generators are read off by matching components rather than assumed.
//! With the L-operator used here the matching gives
//!
//! ```text
//! a(λ) = iλΔ/2,   t³ = −c S³,   t₊ = c S⁻,   t₋ = −c S⁺,   c = 2/(κΔ)
//! ```
//!
//! so that `[t³, t±] = ±t±`, `[t₊, t₋] = 2t³` and the Casimir is `s(s+1)`
//! with `s = −c`. Truncation spoils `t₊t₋` on the top level, so the
//! Casimir is tested on levels `m ≤ d−2` and its commutators on `m ≤ d−3`.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::{ModelParams, SiteOperator, SiteOps};
use crate::laxops::SpinEntries;
use crate::report::{relative, CheckParams, ResidualReport};

pub const TOL_COMMUTATOR: f64 = 1e-11;
pub const TOL_CASIMIR_SCALAR: f64 = 1e-11;
pub const TOL_CASIMIR_VALUE: f64 = 1e-9;
pub const TOL_SCALAR_FIT: f64 = 1e-13;
pub const MIN_KAPPA: f64 = 1e-8;

/// What the component matching found.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinMatching {
    /// `c = 2/(κΔ)`.
    pub normalization: f64,
    /// Slope of the scalar part, `a(λ) = slope·λ`.
    #[serde(with = "crate::complex_serde")]
    pub scalar_slope: C64,
    /// `|a(0)|` plus the misfit of `a` to a line and to a multiple of I.
    pub scalar_fit_residual: f64,
    /// Gradings of `(t³, t₊, t₋)` read from the matrices.
    pub gradings: [i32; 3],
    pub combinations: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SpinTriple {
    pub t3: SiteOperator,
    pub t_plus: SiteOperator,
    pub t_minus: SiteOperator,
    pub matching: SpinMatching,
}

impl SpinTriple {
    /// Lowest weight `s = −c`.
    pub fn spin(&self) -> f64 {
        -self.matching.normalization
    }
}

/// `−σ₃L(λ)` on one site.
fn minus_sigma3_l(spin: &SpinEntries, delta: f64, lambda: C64) -> [[DMatrix<C64>; 2]; 2] {
    let d = spin.s3.dim();
    let shift = DMatrix::<C64>::identity(d, d) * (C64::new(0.0, 1.0) * lambda * delta / 2.0);
    [
        [-(&spin.s3.entries - &shift), -spin.s_plus.entries.clone()],
        [spin.s_minus.entries.clone(), &spin.s3.entries + &shift],
    ]
}

struct Components {
    scalar: DMatrix<C64>,
    s3: DMatrix<C64>,
    sp: DMatrix<C64>,
    sm: DMatrix<C64>,
}

fn decompose(m: &[[DMatrix<C64>; 2]; 2]) -> Components {
    let half = C64::new(0.5, 0.0);
    Components {
        scalar: (&m[0][0] + &m[1][1]) * half,
        s3: (&m[0][0] - &m[1][1]) * half,
        sp: m[0][1].clone(),
        sm: m[1][0].clone(),
    }
}

/// Grading `g` with every nonzero entry at `(i, j)`, `i − j = g`.
fn grading_of(m: &DMatrix<C64>) -> Result<i32> {
    let mut g = None;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)].norm() > 0.0 {
                let gi = i as i32 - j as i32;
                match g {
                    None => g = Some(gi),
                    Some(h) if h != gi => {
                        return Err(Error::Singular("matched generator has no definite grading".into()))
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(g.unwrap_or(0))
}

fn scalar_value(m: &DMatrix<C64>) -> (C64, f64) {
    let d = m.nrows();
    let v = m[(0, 0)];
    let off = (m - DMatrix::<C64>::identity(d, d) * v).camax();
    (v, off)
}

pub fn build_spin_ops(params: &ModelParams) -> Result<SpinTriple> {
    params.validate()?;
    if params.kappa < MIN_KAPPA {
        return Err(Error::InvalidParams(format!(
            "su(2) rescaling 2/(κΔ) diverges, need κ ≥ {MIN_KAPPA}"
        )));
    }
    let spin = SpinEntries::new(params, &SiteOps::new(params)?);
    let c = 2.0 / (params.kappa * params.delta);

    let samples = [
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(-0.5, 0.7),
        C64::new(0.0, 2.0),
    ];
    let comps: Vec<Components> = samples
        .iter()
        .map(|&l| decompose(&minus_sigma3_l(&spin, params.delta, l)))
        .collect();
    let (a0, off0) = scalar_value(&comps[0].scalar);
    let (a1, off1) = scalar_value(&comps[1].scalar);
    let slope = a1 - a0;
    let mut misfit = a0.norm() + off0 + off1;
    for (l, comp) in samples.iter().zip(&comps).skip(2) {
        let (a, off) = scalar_value(&comp.scalar);
        misfit += off + (a - slope * l).norm();
    }
    for comp in &comps[1..] {
        misfit += (&comp.s3 - &comps[0].s3).camax()
            + (&comp.sp - &comps[0].sp).camax()
            + (&comp.sm - &comps[0].sm).camax();
    }
    if misfit > TOL_SCALAR_FIT * c.max(1.0) {
        return Err(Error::Singular(format!(
            "scalar part of −σ₃L is not proportional to λ (misfit {misfit:.3e})"
        )));
    }

    let cc = C64::new(c, 0.0);
    let base = &comps[0];
    let t3 = &base.s3 * cc;
    let t_plus = &base.sm * cc;
    let t_minus = &base.sp * cc;
    let gradings = [grading_of(&t3)?, grading_of(&t_plus)?, grading_of(&t_minus)?];
    Ok(SpinTriple {
        t3: SiteOperator {
            entries: t3,
            grading: gradings[0],
        },
        t_plus: SiteOperator {
            entries: t_plus,
            grading: gradings[1],
        },
        t_minus: SiteOperator {
            entries: t_minus,
            grading: gradings[2],
        },
        matching: SpinMatching {
            normalization: c,
            scalar_slope: slope,
            scalar_fit_residual: misfit,
            gradings,
            combinations: vec![
                "t3 = -(2/(kappa*delta)) S3".into(),
                "t+ = (2/(kappa*delta)) S-".into(),
                "t- = -(2/(kappa*delta)) S+".into(),
            ],
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Su2Verification {
    pub commutators: ResidualReport,
    pub casimir_scalar: ResidualReport,
    pub casimir_value: ResidualReport,
    pub casimir_commute: ResidualReport,
    /// Mean diagonal of the Casimir over the exact levels.
    pub casimir: f64,
    pub spin: f64,
    pub matching: SpinMatching,
}

impl Su2Verification {
    pub fn reports(&self) -> Vec<ResidualReport> {
        vec![
            self.commutators.clone(),
            self.casimir_scalar.clone(),
            self.casimir_value.clone(),
            self.casimir_commute.clone(),
        ]
    }

    pub fn passed(&self) -> bool {
        self.reports().iter().all(|r| r.passed())
    }
}

/// Largest entry in columns `0..=last`.
fn column_window_max(m: &DMatrix<C64>, last: usize) -> f64 {
    m.columns(0, last + 1).camax()
}

pub fn verify_representation(params: &ModelParams) -> Result<Su2Verification> {
    if params.cutoff < 3 {
        return Err(Error::Range(format!(
            "Casimir checks need cutoff ≥ 3, got {}",
            params.cutoff
        )));
    }
    let triple = build_spin_ops(params)?;
    let (t3, tp, tm) = (&triple.t3.entries, &triple.t_plus.entries, &triple.t_minus.entries);
    let d = params.cutoff;
    let comm = |a: &DMatrix<C64>, b: &DMatrix<C64>| a * b - b * a;
    let two = C64::new(2.0, 0.0);

    let r1 = relative((comm(t3, tp) - tp).camax(), tp.camax());
    let r2 = relative((comm(t3, tm) + tm).camax(), tm.camax());
    // [t₊, t₋] is only exact below the top level
    let r3 = relative(column_window_max(&(comm(tp, tm) - t3 * two), d - 2), t3.camax());

    let half = C64::new(0.5, 0.0);
    let cas = t3 * t3 + (tp * tm + tm * tp) * half;
    let s = triple.spin();
    let expect = s * (s + 1.0);
    let window = d - 1;
    let diag: Vec<C64> = (0..window).map(|m| cas[(m, m)]).collect();
    let mean = diag.iter().sum::<C64>() / window as f64;
    let mut off = 0.0f64;
    for j in 0..window {
        for i in 0..d {
            if i != j {
                off = off.max(cas[(i, j)].norm());
            }
        }
    }
    let spread = diag.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max);
    let value_err = diag.iter().map(|v| (v - expect).norm()).fold(0.0, f64::max);
    let commute = [t3, tp, tm]
        .iter()
        .map(|t| column_window_max(&comm(&cas, t), d - 3))
        .fold(0.0, f64::max);

    let cp = CheckParams::model(params);
    Ok(Su2Verification {
        commutators: ResidualReport::new("su2_commutators", cp.clone(), r1.max(r2).max(r3), TOL_COMMUTATOR),
        casimir_scalar: ResidualReport::new(
            "su2_casimir_scalar",
            cp.clone(),
            relative(off.max(spread), expect.abs()),
            TOL_CASIMIR_SCALAR,
        ),
        casimir_value: ResidualReport::new("su2_casimir_value", cp.clone(), value_err, TOL_CASIMIR_VALUE),
        casimir_commute: ResidualReport::new(
            "su2_casimir_commute",
            cp,
            relative(commute, expect.abs()),
            TOL_COMMUTATOR,
        ),
        casimir: mean.re,
        spin: s,
        matching: triple.matching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_records_conventions() {
        let p = ModelParams::new(1.0, 1.0, 1, 6).unwrap();
        let t = build_spin_ops(&p).unwrap();
        assert_eq!(t.matching.gradings, [0, -1, 1]);
        assert!((t.matching.scalar_slope - C64::new(0.0, 0.5)).norm() < 1e-15);
        assert!((t.t3.entries[(0, 0)] - C64::new(t.spin(), 0.0)).norm() < 1e-14);
        assert_eq!(t.spin(), -2.0);
    }

    #[test]
    fn representation_holds() {
        for (k, dl) in [(1.0, 1.0), (2.0, 0.5), (0.3, 0.7)] {
            let v = verify_representation(&ModelParams::new(k, dl, 1, 6).unwrap()).unwrap();
            assert!(v.passed(), "{v:#?}");
            let s = -2.0 / (k * dl);
            assert!((v.casimir - s * (s + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn small_coupling_rejected() {
        let p = ModelParams::new(1e-9, 1.0, 1, 6).unwrap();
        assert!(build_spin_ops(&p).is_err());
        assert!(verify_representation(&ModelParams::new(1.0, 1.0, 1, 2).unwrap()).is_err());
    }
}
