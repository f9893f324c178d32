//! Algebraic Bethe ansatz for the lattice chain.
//!
//! Bethe equations in multiplicative form
//!
//! ```text
//! ((1 − iλ_jΔ/2)/(1 + iλ_jΔ/2))^N = Π_{k≠j} (λ_j − λ_k − iκ)/(λ_j − λ_k + iκ)
//! ```
//!
//! and, for real roots and κ > 0, in logarithmic form
//!
//! ```text
//! r_j = 2N·atan(λ_jΔ/2) + Σ_{k≠j} 2·atan((λ_j − λ_k)/κ) − 2πI_j
//! ```
//!
//! with `I_j` integer for odd n and half-odd for even n. The branch of each
//! `(u − iκ)/(u + iκ) = exp(−iπ + 2i·atan(u/κ))` factor fixes the sign of the
//! interaction term.
//!
//! The solver works in `θ_j = atan(λ_jΔ/2) ∈ (−π/2, π/2)`, which bounds the
//! admissible quantum numbers by `|I_j| < (N + n − 1)/2`. Sets with some
//! `|I_j| ≥ N/2` are solved but flagged as outside the principal window.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::ModelParams;
use crate::laxops::QuantumChain;
use crate::operator::vec_norm;
use crate::report::{relative, CheckParams, ResidualReport};
use crate::series::Series;

pub const TOL_BETHE: f64 = 1e-12;
pub const TOL_EIGENPAIR: f64 = 1e-8;
pub const TOL_SPECTRUM_MATCH: f64 = 1e-8;
const MIN_SEPARATION: f64 = 1e-8;
const MAX_NEWTON: usize = 200;
const CONTINUATION_STEPS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetheRoots {
    #[serde(with = "crate::complex_serde::vec")]
    pub roots: Vec<C64>,
    pub quantum_numbers: Vec<f64>,
    pub converged: bool,
    /// Largest log-form residual.
    pub final_residual: f64,
    /// Largest residual of the multiplicative equations.
    pub product_residual: f64,
    /// All `|I_j| < N/2`.
    pub principal_window: bool,
}

#[derive(Clone, Debug)]
pub struct BetheState {
    /// Coefficients on the lexicographic basis of sector n.
    pub coeffs: DVector<C64>,
    pub sector: usize,
    pub norm: f64,
}

fn ensure_distinct(roots: &[C64]) -> Result<()> {
    for (j, a) in roots.iter().enumerate() {
        for b in &roots[j + 1..] {
            if (a - b).norm() <= MIN_SEPARATION {
                return Err(Error::Bethe(format!("coincident roots {a} and {b}")));
            }
        }
    }
    Ok(())
}

/// Log-form residuals for real roots. Imaginary parts are ignored; use
/// [`product_residual`] for complex roots.
pub fn bethe_residual(roots: &[f64], quantum_numbers: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    if roots.len() != quantum_numbers.len() {
        return Err(Error::Bethe("roots and quantum numbers differ in length".into()));
    }
    if params.kappa <= 0.0 {
        return Err(Error::InvalidParams("log-form Bethe equations need κ > 0".into()));
    }
    let complex: Vec<C64> = roots.iter().map(|&r| C64::new(r, 0.0)).collect();
    ensure_distinct(&complex)?;
    let n_sites = params.sites as f64;
    let half = params.delta / 2.0;
    Ok(roots
        .iter()
        .zip(quantum_numbers)
        .enumerate()
        .map(|(j, (&lj, &ij))| {
            let scatter: f64 = roots
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &lk)| 2.0 * ((lj - lk) / params.kappa).atan())
                .sum();
            2.0 * n_sites * (lj * half).atan() + scatter - 2.0 * PI * ij
        })
        .collect())
}

/// `max_j |lhs_j − rhs_j|` of the multiplicative equations.
pub fn product_residual(roots: &[C64], params: &ModelParams) -> Result<f64> {
    ensure_distinct(roots)?;
    let i = C64::new(0.0, 1.0);
    let ik = i * params.kappa;
    let half = params.delta / 2.0;
    let mut worst: f64 = 0.0;
    for (j, &lj) in roots.iter().enumerate() {
        let lhs = ((C64::new(1.0, 0.0) - i * lj * half) / (C64::new(1.0, 0.0) + i * lj * half)).powi(params.sites as i32);
        let mut rhs = C64::new(1.0, 0.0);
        for (k, &lk) in roots.iter().enumerate() {
            if k != j {
                rhs *= (lj - lk - ik) / (lj - lk + ik);
            }
        }
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Quantum numbers must be distinct, integer for odd n and half-odd for
/// even n, and inside the θ-range `|I| < (N + n − 1)/2`.
pub fn check_quantum_numbers(quantum_numbers: &[f64], sites: usize) -> Result<()> {
    let n = quantum_numbers.len();
    let parity = if n.is_multiple_of(2) { 0.5 } else { 0.0 };
    let bound = (sites + n) as f64 / 2.0 - 0.5;
    for (j, &q) in quantum_numbers.iter().enumerate() {
        let frac = (q - parity).rem_euclid(1.0);
        if frac.min(1.0 - frac) > 1e-12 {
            return Err(Error::Bethe(format!(
                "quantum number {q} must be {} for n = {n}",
                if parity == 0.0 { "an integer" } else { "half-odd" }
            )));
        }
        if q.abs() >= bound - 1e-12 {
            return Err(Error::Bethe(format!("quantum number {q} outside |I| < {bound}")));
        }
        if quantum_numbers[..j].iter().any(|&p| (p - q).abs() < 1e-12) {
            return Err(Error::Bethe(format!("duplicate quantum number {q}")));
        }
    }
    Ok(())
}

/// All admissible quantum-number sets for n roots, increasing within a set.
pub fn admissible_sets(sites: usize, n: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let parity = if n.is_multiple_of(2) { 0.5 } else { 0.0 };
    let bound = (sites + n) as f64 / 2.0 - 0.5;
    let mut values = Vec::new();
    let mut q = -bound.floor() - 1.0 + parity;
    while q < bound {
        if q.abs() < bound - 1e-12 {
            values.push(q);
        }
        q += 1.0;
    }
    let mut out = Vec::new();
    let mut pick = Vec::new();
    fn rec(values: &[f64], start: usize, n: usize, pick: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if pick.len() == n {
            out.push(pick.clone());
            return;
        }
        for k in start..values.len() {
            pick.push(values[k]);
            rec(values, k + 1, n, pick, out);
            pick.pop();
        }
    }
    rec(&values, 0, n, &mut pick, &mut out);
    out
}

struct ThetaSystem<'a> {
    qn: &'a [f64],
    sites: f64,
    delta: f64,
    kappa: f64,
}

impl ThetaSystem<'_> {
    fn lambda(&self, theta: f64) -> f64 {
        2.0 / self.delta * theta.tan()
    }

    fn residual(&self, theta: &[f64]) -> DVector<f64> {
        let lam: Vec<f64> = theta.iter().map(|&t| self.lambda(t)).collect();
        DVector::from_fn(theta.len(), |j, _| {
            let scatter: f64 = (0..theta.len())
                .filter(|&k| k != j)
                .map(|k| 2.0 * ((lam[j] - lam[k]) / self.kappa).atan())
                .sum();
            2.0 * self.sites * theta[j] + scatter - 2.0 * PI * self.qn[j]
        })
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = theta.len();
        let lam: Vec<f64> = theta.iter().map(|&t| self.lambda(t)).collect();
        let dlam: Vec<f64> = theta.iter().map(|&t| 2.0 / self.delta / t.cos().powi(2)).collect();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            jac[(j, j)] = 2.0 * self.sites;
            for k in 0..n {
                if k == j {
                    continue;
                }
                let u = (lam[j] - lam[k]) / self.kappa;
                let w = 2.0 / (self.kappa * (1.0 + u * u));
                jac[(j, j)] += w * dlam[j];
                jac[(j, k)] -= w * dlam[k];
            }
        }
        jac
    }

    /// Damped Newton keeping every θ inside (−π/2, π/2).
    fn newton(&self, mut theta: Vec<f64>) -> (Vec<f64>, f64, bool) {
        let limit = PI / 2.0;
        let mut res = self.residual(&theta);
        let mut best = res.amax();
        for _ in 0..MAX_NEWTON {
            if best < TOL_BETHE {
                return (theta, best, true);
            }
            let Some(step) = self.jacobian(&theta).lu().solve(&res) else {
                return (theta, best, false);
            };
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-6 {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(&a, &s)| a - t * s).collect();
                if trial.iter().all(|x| x.abs() < limit) {
                    let r = self.residual(&trial);
                    if r.amax() < best || r.amax() < TOL_BETHE {
                        theta = trial;
                        res = r;
                        best = res.amax();
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return (theta, best, best < TOL_BETHE);
            }
        }
        (theta, best, best < TOL_BETHE)
    }
}

/// Solves the log-form Bethe equations by Newton in θ; falls back to a
/// continuation in κ (from weak coupling down to the target) in
/// [`CONTINUATION_STEPS`] steps.
pub fn solve_bethe(params: &ModelParams, quantum_numbers: &[f64]) -> Result<BetheRoots> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::InvalidParams("Bethe solver needs κ > 0".into()));
    }
    check_quantum_numbers(quantum_numbers, params.sites)?;
    let n = quantum_numbers.len();
    let principal_window = quantum_numbers.iter().all(|q| q.abs() < params.sites as f64 / 2.0);
    let sys = |kappa| ThetaSystem {
        qn: quantum_numbers,
        sites: params.sites as f64,
        delta: params.delta,
        kappa,
    };
    let span = (params.sites + n - 1).max(1) as f64;
    let start: Vec<f64> = quantum_numbers.iter().map(|q| PI * q / span).collect();
    let (mut theta, mut resid, mut ok) = sys(params.kappa).newton(start);
    if !ok && principal_window {
        // at κ → ∞ the roots decouple into θ = πI/N
        let k_hi = 1e3 * params.kappa.max(1.0);
        let mut th: Vec<f64> = quantum_numbers.iter().map(|q| PI * q / params.sites as f64).collect();
        let mut good = true;
        for step in 1..=CONTINUATION_STEPS {
            let frac = step as f64 / CONTINUATION_STEPS as f64;
            let kappa = k_hi * (params.kappa / k_hi).powf(frac);
            let (t, r, conv) = sys(kappa).newton(th);
            th = t;
            if !conv {
                good = false;
                resid = r;
                break;
            }
            let lam: Vec<C64> = th.iter().map(|&x| C64::new(2.0 / params.delta * x.tan(), 0.0)).collect();
            if ensure_distinct(&lam).is_err() {
                return Err(Error::Bethe(format!("roots collided during continuation at κ = {kappa}")));
            }
        }
        if good {
            theta = th;
            let r = sys(params.kappa).residual(&theta).amax();
            resid = r;
            ok = r < TOL_BETHE;
        }
    }
    if !ok {
        return Err(Error::NoConvergence {
            iterations: MAX_NEWTON,
            residual: resid,
        });
    }
    let roots: Vec<C64> = theta
        .iter()
        .map(|&t| C64::new(2.0 / params.delta * t.tan(), 0.0))
        .collect();
    ensure_distinct(&roots)?;
    let product = product_residual(&roots, params)?;
    Ok(BetheRoots {
        roots,
        quantum_numbers: quantum_numbers.to_vec(),
        converged: true,
        final_residual: resid,
        product_residual: product,
        principal_window,
    })
}

/// `B(λ_1)…B(λ_n)Ω` with `B = T₁₂`, applied rightmost root first.
pub fn build_state(chain: &QuantumChain, roots: &[C64]) -> Result<BetheState> {
    let n = roots.len();
    if chain.params().cutoff < n + 1 {
        return Err(Error::InvalidParams(format!(
            "cutoff {} cannot hold {n} quanta on one site",
            chain.params().cutoff
        )));
    }
    let lat = chain.lattice();
    let t = chain.full_monodromy_poly();
    let mut v = lat.vacuum();
    for (k, &lam) in roots.iter().rev().enumerate() {
        let b = t.e[0][1].eval(lam).restrict(lat, k);
        v = b * v;
    }
    let norm = vec_norm(&v);
    if !(norm > 1e-12) {
        return Err(Error::Bethe(format!("Bethe vector vanishes (norm {norm:e})")));
    }
    Ok(BetheState {
        coeffs: v,
        sector: n,
        norm,
    })
}

/// How to evaluate the transfer-matrix eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenvalueMode {
    /// The printed rational expression; fails at a root.
    Direct,
    /// Exact quotient by `Π(λ − λ_k)`, valid everywhere once the Bethe
    /// equations hold.
    PoleCancelled,
}

fn vacuum_factors(lambda: C64, params: &ModelParams) -> (C64, C64) {
    let x = C64::new(0.0, params.delta / 2.0) * lambda;
    let one = C64::new(1.0, 0.0);
    ((one - x).powi(params.sites as i32), (one + x).powi(params.sites as i32))
}

/// Printed eigenvalue
/// `(1−iλΔ/2)^N Π(λ−λ_k+iκ)/(λ−λ_k) + (1+iλΔ/2)^N Π(λ_k−λ+iκ)/(λ_k−λ)`.
pub fn eigenvalue(roots: &[C64], params: &ModelParams, lambda: C64, mode: EigenvalueMode) -> Result<C64> {
    match mode {
        EigenvalueMode::Direct => {
            let ik = C64::new(0.0, params.kappa);
            if roots.iter().any(|&r| (lambda - r).norm() <= 1e-12 * r.norm().max(1.0)) {
                return Err(Error::Pole(format!("λ = {lambda} is a Bethe root")));
            }
            let (a, d) = vacuum_factors(lambda, params);
            let p: C64 = roots.iter().map(|&r| (lambda - r + ik) / (lambda - r)).product();
            let q: C64 = roots.iter().map(|&r| (r - lambda + ik) / (r - lambda)).product();
            Ok(a * p + d * q)
        }
        EigenvalueMode::PoleCancelled => {
            let (quotient, _) = eigenvalue_polynomial(roots, params);
            Ok(horner(&quotient, lambda))
        }
    }
}

fn horner(p: &[C64], x: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Numerator `F(λ) = (1−iλΔ/2)^N Π(λ−λ_k+iκ) + (−1)^n (1+iλΔ/2)^N Π(λ_k−λ+iκ)`
/// divided by `Π(λ − λ_k)`. Returns the quotient (ascending coefficients,
/// degree N) and the largest remainder coefficient, which vanishes iff the
/// Bethe equations hold.
pub fn eigenvalue_polynomial(roots: &[C64], params: &ModelParams) -> (Vec<C64>, f64) {
    let one = C64::new(1.0, 0.0);
    let x = C64::new(0.0, params.delta / 2.0);
    let ik = C64::new(0.0, params.kappa);
    let mut a = vec![one];
    let mut d = vec![one];
    for _ in 0..params.sites {
        a = poly_mul(&a, &[one, -x]);
        d = poly_mul(&d, &[one, x]);
    }
    let sign = if roots.len().is_multiple_of(2) { 1.0 } else { -1.0 };
    for &r in roots {
        a = poly_mul(&a, &[ik - r, one]);
        d = poly_mul(&d, &[r + ik, -one]);
    }
    let mut num: Vec<C64> = a.iter().zip(&d).map(|(p, q)| p + q * sign).collect();
    // synthetic division by each (λ − λ_k)
    let mut remainder: f64 = 0.0;
    for &r in roots {
        let deg = num.len() - 1;
        let mut quot = vec![C64::new(0.0, 0.0); deg];
        let mut carry = num[deg];
        for k in (0..deg).rev() {
            quot[k] = carry;
            carry = num[k] + carry * r;
        }
        let scale = num.iter().map(|c| c.norm()).fold(1.0, f64::max);
        remainder = remainder.max(carry.norm() / scale);
        num = quot;
    }
    (num, remainder)
}

/// `‖τ(λ)Ψ − Λ(λ)Ψ‖ / ‖Ψ‖` on sector n.
pub fn verify_eigenpair(chain: &QuantumChain, roots: &[C64], lambda: C64) -> Result<ResidualReport> {
    let params = chain.params();
    let n = roots.len();
    let cp = CheckParams::model(params).lambda(lambda).sector(n);
    let state = build_state(chain, roots)?;
    let tau = chain.transfer(lambda).restrict(chain.lattice(), n);
    let lam = eigenvalue(roots, params, lambda, EigenvalueMode::PoleCancelled)?;
    let diff = &tau * &state.coeffs - &state.coeffs * lam;
    Ok(ResidualReport::new("bethe_eigenpair", cp, vec_norm(&diff) / state.norm, TOL_EIGENPAIR))
}

/// Third-order jet of `ln((μ − λ + iκ)/(μ − λ))/κ` in `z = 1/λ` at `z0 = iΔ/2`;
/// for κ = 0 the κ → 0 limit `i z/(μz − 1)` is used.
fn scattering_log_jet(mu: C64, params: &ModelParams) -> Result<Series> {
    let z0 = C64::new(0.0, params.delta / 2.0);
    let z = Series::variable(z0, 3);
    let base = z.scale(mu).add_scalar(C64::new(-1.0, 0.0));
    let guard = 1e-12 * mu.norm().max(1.0);
    if base.value().norm() <= guard {
        return Err(Error::Pole(format!("μ = ν = {}", params.nu())));
    }
    let u = z.div(&base);
    if params.kappa == 0.0 {
        return Ok(u.scale(C64::new(0.0, 1.0)));
    }
    let arg = u.scale(C64::new(0.0, params.kappa)).add_scalar(C64::new(1.0, 0.0));
    if arg.value().norm() <= guard {
        return Err(Error::Pole(format!("μ − ν = −iκ at μ = {mu}")));
    }
    Ok(arg.ln().scale(C64::new(1.0 / params.kappa, 0.0)))
}

/// `f(μ) = (i/12κ) h‴(z0) + (iκ/6) h′(z0)` with `h = ln((μz − 1 + iκz)/(μz − 1))`.
fn energy_f(mu: C64, params: &ModelParams) -> Result<C64> {
    let hk = scattering_log_jet(mu, params)?;
    let i = C64::new(0.0, 1.0);
    // hk = h/κ, so (i/12κ)h‴ = (i/12) hk‴ and (iκ/6)h′ = (iκ²/6) hk′
    Ok(i / 12.0 * hk.derivative(3) + i * params.kappa * params.kappa / 6.0 * hk.derivative(1))
}

/// Single-root energy `E(μ) = f(μ) + conj(f(conj μ))`.
pub fn root_energy(mu: C64, params: &ModelParams) -> Result<C64> {
    Ok(energy_f(mu, params)? + energy_f(mu.conj(), params)?.conj())
}

/// `Σ_k E(λ_k)`; real for real roots.
pub fn energy(roots: &[C64], params: &ModelParams) -> Result<f64> {
    let mut total = C64::new(0.0, 0.0);
    for &r in roots {
        total += root_energy(r, params)?;
    }
    Ok(total.re)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchedState {
    pub quantum_numbers: Vec<f64>,
    #[serde(with = "crate::complex_serde::vec")]
    pub roots: Vec<C64>,
    #[serde(with = "crate::complex_serde")]
    pub bethe_value: C64,
    #[serde(with = "crate::complex_serde::option")]
    pub spectrum_value: Option<C64>,
    pub distance: f64,
    pub principal_window: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumCrosscheck {
    pub sector: usize,
    #[serde(with = "crate::complex_serde")]
    pub lambda: C64,
    #[serde(with = "crate::complex_serde::vec")]
    pub spectrum: Vec<C64>,
    pub states: Vec<MatchedState>,
    #[serde(with = "crate::complex_serde::vec")]
    pub unmatched_spectrum: Vec<C64>,
    /// Quantum-number sets the solver could not handle, with the reason.
    pub unsolved: Vec<(Vec<f64>, String)>,
    pub tolerance: f64,
}

impl SpectrumCrosscheck {
    pub fn matched(&self) -> usize {
        self.states.iter().filter(|s| s.distance <= self.tolerance).count()
    }
}

/// Eigenvalues of a square complex block via Schur form.
pub fn dense_eigenvalues(m: &DMatrix<C64>) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or(Error::NoConvergence {
            iterations: 10_000,
            residual: f64::NAN,
        })?;
    let (_, t) = schur.unpack();
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Exact diagonalization of τ(λ*) on sector M against every admissible
/// Bethe state; each spectrum point is used at most once.
pub fn crosscheck_spectrum(chain: &QuantumChain, sector: usize, lambda: C64) -> Result<SpectrumCrosscheck> {
    let params = chain.params();
    if params.cutoff < sector + 2 {
        return Err(Error::InvalidParams(format!("crosscheck needs d ≥ M + 2, got d = {}", params.cutoff)));
    }
    let dim = chain.lattice().sector(sector).len();
    if dim > 2000 {
        return Err(Error::SpaceTooLarge { dim, limit: 2000 });
    }
    let tau = chain.transfer(lambda).restrict(chain.lattice(), sector);
    let spectrum = dense_eigenvalues(&tau)?;
    let mut used = vec![false; spectrum.len()];
    let mut states = Vec::new();
    let mut unsolved = Vec::new();
    for qn in admissible_sets(params.sites, sector) {
        let roots = if sector == 0 {
            BetheRoots {
                roots: Vec::new(),
                quantum_numbers: Vec::new(),
                converged: true,
                final_residual: 0.0,
                product_residual: 0.0,
                principal_window: true,
            }
        } else {
            match solve_bethe(params, &qn) {
                Ok(r) => r,
                Err(e) => {
                    unsolved.push((qn, e.to_string()));
                    continue;
                }
            }
        };
        let value = eigenvalue(&roots.roots, params, lambda, EigenvalueMode::PoleCancelled)?;
        let best = spectrum
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, s)| (k, relative((s - value).norm(), value.norm())))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let (spectrum_value, distance) = match best {
            Some((k, dist)) if dist <= TOL_SPECTRUM_MATCH => {
                used[k] = true;
                (Some(spectrum[k]), dist)
            }
            Some((_, dist)) => (None, dist),
            None => (None, f64::INFINITY),
        };
        states.push(MatchedState {
            quantum_numbers: qn,
            roots: roots.roots,
            bethe_value: value,
            spectrum_value,
            distance,
            principal_window: roots.principal_window,
        });
    }
    let unmatched_spectrum = spectrum.iter().zip(&used).filter(|(_, &u)| !u).map(|(s, _)| *s).collect();
    Ok(SpectrumCrosscheck {
        sector,
        lambda,
        spectrum,
        states,
        unmatched_spectrum,
        unsolved,
        tolerance: TOL_SPECTRUM_MATCH,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa: f64, delta: f64, sites: usize, cutoff: usize) -> ModelParams {
        ModelParams::new(kappa, delta, sites, cutoff).unwrap()
    }

    #[test]
    fn single_root_closed_form() {
        let p = params(1.0, 1.0, 4, 3);
        let r = solve_bethe(&p, &[1.0]).unwrap();
        assert!((r.roots[0].re - 2.0).abs() < 1e-12);
        let res = bethe_residual(&[2.0], &[1.0], &p).unwrap();
        assert!(res[0].abs() < 1e-14);
    }

    #[test]
    fn symmetric_pair() {
        let p = params(1.0, 0.5, 3, 4);
        let r = solve_bethe(&p, &[-0.5, 0.5]).unwrap();
        assert!(r.roots[1].re > 0.0);
        assert!((r.roots[0] + r.roots[1]).norm() < 1e-10);
        assert!(r.product_residual < 1e-10);
    }

    #[test]
    fn rejects_bad_quantum_numbers() {
        let p = params(1.0, 0.5, 3, 4);
        assert!(solve_bethe(&p, &[0.5, 0.5]).is_err());
        assert!(solve_bethe(&p, &[0.0, 1.0]).is_err());
        assert!(solve_bethe(&p, &[5.0]).is_err());
    }

    #[test]
    fn vacuum_eigenvalue() {
        let p = params(1.0, 0.5, 3, 3);
        let l = C64::new(0.3, -0.2);
        let x = C64::new(0.0, 0.25) * l;
        let expect = (C64::new(1.0, 0.0) - x).powi(3) + (C64::new(1.0, 0.0) + x).powi(3);
        assert!((eigenvalue(&[], &p, l, EigenvalueMode::Direct).unwrap() - expect).norm() < 1e-14);
        assert!((eigenvalue(&[], &p, l, EigenvalueMode::PoleCancelled).unwrap() - expect).norm() < 1e-14);
    }

    #[test]
    fn pole_cancellation_needs_bethe() {
        let p = params(1.0, 0.5, 3, 4);
        let r = solve_bethe(&p, &[-0.5, 0.5]).unwrap();
        let (q, rem) = eigenvalue_polynomial(&r.roots, &p);
        assert_eq!(q.len(), 4);
        assert!(rem < 1e-12);
        let bad = [r.roots[0] + 0.1, r.roots[1]];
        assert!(eigenvalue_polynomial(&bad, &p).1 > 1e-3);
        let l = C64::new(0.7, 0.2);
        let direct = eigenvalue(&r.roots, &p, l, EigenvalueMode::Direct).unwrap();
        let cancelled = eigenvalue(&r.roots, &p, l, EigenvalueMode::PoleCancelled).unwrap();
        assert!((direct - cancelled).norm() < 1e-10);
        assert!(eigenvalue(&r.roots, &p, r.roots[0], EigenvalueMode::Direct).is_err());
    }

    #[test]
    fn eigenpairs_match_transfer_matrix() {
        let p = params(1.0, 0.5, 3, 4);
        let chain = QuantumChain::new(&p).unwrap();
        let r = solve_bethe(&p, &[-0.5, 1.5]).unwrap();
        for l in [C64::new(0.3, 0.1), C64::new(-1.0, 0.6)] {
            let rep = verify_eigenpair(&chain, &r.roots, l).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
        let wrong = [r.roots[0] + 0.3, r.roots[1]];
        let rep = verify_eigenpair(&chain, &wrong, C64::new(0.3, 0.1)).unwrap();
        assert!(rep.residual > 1e-3);
    }

    #[test]
    fn energy_small_delta_limit() {
        let mu = C64::new(0.7, 0.0);
        let e = root_energy(mu, &params(1.0, 1e-4, 3, 3)).unwrap();
        assert!(e.im.abs() < 1e-14);
        assert!((e.re - 0.49).abs() < 1e-3);
        assert_eq!(energy(&[], &params(1.0, 0.5, 3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn crosscheck_small_chains() {
        let chain = QuantumChain::new(&params(1.0, 0.5, 3, 4)).unwrap();
        let x = chain_crosscheck(&chain, 2);
        assert_eq!(x.matched(), 6);
        assert!(x.unmatched_spectrum.is_empty());
        let chain = QuantumChain::new(&params(1.0, 0.5, 4, 3)).unwrap();
        let x = chain_crosscheck(&chain, 1);
        assert_eq!(x.matched(), 3);
        assert_eq!(x.unmatched_spectrum.len(), 1);
    }

    fn chain_crosscheck(chain: &QuantumChain, m: usize) -> SpectrumCrosscheck {
        crosscheck_spectrum(chain, m, C64::new(0.37, 0.21)).unwrap()
    }
}
