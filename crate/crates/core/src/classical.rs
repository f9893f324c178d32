//! Classical lattice model with c-number fields.
//!
//! ```text
//! L_n(λ) = [[S³ − iλΔ/2, S⁺], [S⁻, S³ + iλΔ/2]]
//! S³ = 1 + (κ/2)|χ|²,  S⁺ = −i√κ χ̄ρ,  S⁻ = i√κ ρχ,  ρ = √(1 + κ|χ|²/4)
//! {χ_m, χ̄_n} = iΔ δ_mn,   det L = 1 + λ²Δ²/4
//! ```
//!
//! The Hamiltonian `H_c = (i/12κ) d³/dz³ ln[(1+λ/ν)^{−N} τ(λ)] + c.c.` at
//! `z₀ = 1/ν` is evaluated with exact jets of the normalised L-operator
//!
//! ```text
//! L̃(z) = L(1/z)/(1 + 1/(νz)) = ν(z L₀ + L₁)/(νz + 1),   L = L₀ + λ L₁
//! ```
//!
//! and its gradient by exact jet perturbation of single sites. Hamilton's
//! equations are `dχ_n/dt = {H_c, χ_n} = −iΔ ∂H_c/∂χ̄_n`.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fockspace::ModelParams;
use crate::hamiltonian::{apply_stencil, make_stencil_form, StencilForm};
use crate::laxops::permutation;
use crate::report::{relative, CheckParams, ResidualReport};
use crate::series::{Jet3, JetMatrix2, Series, SeriesMatrix2};

pub const TOL_CL_DET: f64 = 1e-12;
pub const TOL_R_POISSON: f64 = 1e-6;
pub const TOL_DENSITY_SUM: f64 = 1e-6;
pub const TOL_LOCALITY: f64 = 1e-8;
pub const TOL_CONSERVATION: f64 = 1e-8;

/// Coupling and lattice spacing of the classical chain; the number of sites
/// is the field length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalModel {
    pub kappa: f64,
    pub delta: f64,
}

impl ClassicalModel {
    pub fn new(kappa: f64, delta: f64) -> Result<Self> {
        ModelParams::new(kappa, delta, 1, 2)?;
        Ok(Self { kappa, delta })
    }

    pub fn from_params(p: &ModelParams) -> Self {
        Self {
            kappa: p.kappa,
            delta: p.delta,
        }
    }

    pub fn nu(&self) -> C64 {
        C64::new(0.0, -2.0 / self.delta)
    }

    pub fn z0(&self) -> C64 {
        C64::new(0.0, self.delta / 2.0)
    }

    fn check_params(&self, field: &ClassicalField) -> CheckParams {
        CheckParams {
            sites: Some(field.len()),
            kappa: Some(self.kappa),
            delta: Some(self.delta),
            ..CheckParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalField {
    #[serde(with = "crate::complex_serde::vec")]
    pub chi: Vec<C64>,
}

impl ClassicalField {
    pub fn new(chi: Vec<C64>) -> Result<Self> {
        if chi.is_empty() {
            return Err(Error::InvalidParams("field needs at least one site".into()));
        }
        if chi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParams("field entries must be finite".into()));
        }
        Ok(Self { chi })
    }

    pub fn zeros(sites: usize) -> Self {
        Self {
            chi: vec![C64::new(0.0, 0.0); sites],
        }
    }

    /// Components uniform in `[−amplitude, amplitude]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, sites: usize, amplitude: f64) -> Self {
        Self {
            chi: (0..sites)
                .map(|_| C64::new(rng.gen_range(-amplitude..amplitude), rng.gen_range(-amplitude..amplitude)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.chi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi.is_empty()
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let ph = C64::from_polar(1.0, theta);
        Self {
            chi: self.chi.iter().map(|z| z * ph).collect(),
        }
    }

    fn axpy(&self, s: f64, d: &[C64]) -> Self {
        Self {
            chi: self.chi.iter().zip(d).map(|(a, b)| a + b * s).collect(),
        }
    }
}

/// Field-dependent part `L₀` (λ-independent) of the L-operator.
fn l0(model: &ClassicalModel, chi: C64) -> Matrix2<C64> {
    let k = model.kappa;
    let sk = k.sqrt();
    let n = chi.norm_sqr();
    let rho = (1.0 + k * n / 4.0).sqrt();
    let s3 = C64::new(1.0 + k * n / 2.0, 0.0);
    let sp = C64::new(0.0, -sk) * chi.conj() * rho;
    let sm = C64::new(0.0, sk) * rho * chi;
    Matrix2::new(s3, sp, sm, s3)
}

fn l1(model: &ClassicalModel) -> Matrix2<C64> {
    let h = model.delta / 2.0;
    Matrix2::new(C64::new(0.0, -h), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, h))
}

/// `∂L₀/∂x` and `∂L₀/∂y` for `χ = x + iy`.
fn l0_gradient(model: &ClassicalModel, chi: C64) -> [Matrix2<C64>; 2] {
    let k = model.kappa;
    let sk = k.sqrt();
    let (x, y) = (chi.re, chi.im);
    let rho = (1.0 + k * chi.norm_sqr() / 4.0).sqrt();
    let i = C64::new(0.0, 1.0);
    let drho = [k * x / (4.0 * rho), k * y / (4.0 * rho)];
    let dchi = [C64::new(1.0, 0.0), i];
    let mut out = [Matrix2::zeros(), Matrix2::zeros()];
    for c in 0..2 {
        let s3 = C64::new(k * [x, y][c], 0.0);
        let sp = -i * sk * (dchi[c].conj() * rho + chi.conj() * drho[c]);
        let sm = i * sk * (chi * drho[c] + dchi[c] * rho);
        out[c] = Matrix2::new(s3, sp, sm, s3);
    }
    out
}

pub fn cl_l(model: &ClassicalModel, chi: C64, lambda: C64) -> Matrix2<C64> {
    l0(model, chi) + l1(model) * lambda
}

/// `L_N(λ)…L_1(λ)`.
pub fn cl_monodromy(model: &ClassicalModel, field: &ClassicalField, lambda: C64) -> Matrix2<C64> {
    field
        .chi
        .iter()
        .fold(Matrix2::identity(), |acc, &c| cl_l(model, c, lambda) * acc)
}

pub fn cl_transfer(model: &ClassicalModel, field: &ClassicalField, lambda: C64) -> C64 {
    cl_monodromy(model, field, lambda).trace()
}

pub fn d_c(model: &ClassicalModel, lambda: C64) -> C64 {
    C64::new(1.0, 0.0) + lambda * lambda * (model.delta * model.delta / 4.0)
}

fn sigma2() -> Matrix2<C64> {
    let z = C64::new(0.0, 0.0);
    Matrix2::new(z, C64::new(0.0, -1.0), C64::new(0.0, 1.0), z)
}

/// Per-site `det L = d_c` and `Tσ₂Tᵗσ₂ = d_c^N I`, the larger relative residual.
pub fn check_cl_det(model: &ClassicalModel, field: &ClassicalField, lambda: C64) -> ResidualReport {
    let dc = d_c(model, lambda);
    let site = field
        .chi
        .iter()
        .map(|&c| relative((cl_l(model, c, lambda).determinant() - dc).norm(), dc.norm()))
        .fold(0.0, f64::max);
    let t = cl_monodromy(model, field, lambda);
    let lhs = t * sigma2() * t.transpose() * sigma2();
    let rhs = Matrix2::identity() * dc.powi(field.len() as i32);
    let mono = relative((lhs - rhs).camax(), rhs.camax());
    ResidualReport::new(
        "cl_det",
        model.check_params(field).lambda(lambda),
        site.max(mono),
        TOL_CL_DET,
    )
}

/// Largest `σ₂/σ₁` of `L_n(ν)` over the sites.
pub fn projector_rank_defect(model: &ClassicalModel, field: &ClassicalField) -> f64 {
    field
        .chi
        .iter()
        .map(|&c| {
            let sv = cl_l(model, c, model.nu()).singular_values();
            sv.min() / sv.max()
        })
        .fold(0.0, f64::max)
}

/// Classical r-matrix `κΠ/(λ−μ)`.
pub fn r_classical(model: &ClassicalModel, lambda: C64, mu: C64) -> Result<Matrix4<C64>> {
    if (lambda - mu).norm() <= 1e-6 * model.kappa.max(1.0) {
        return Err(Error::Pole("λ = μ".into()));
    }
    Ok(permutation() * (C64::new(model.kappa, 0.0) / (lambda - mu)))
}

fn kron(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

trait Combine: Sized {
    /// `a·x + b·y`
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self;
}

impl Combine for f64 {
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        a * x + b * y
    }
}

impl Combine for Matrix2<C64> {
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        x * C64::new(a, 0.0) + y * C64::new(b, 0.0)
    }
}

/// `∂f/∂x_n`, `∂f/∂y_n` by central differences with step `h`, optionally
/// Richardson-combined with `h/2`.
fn fd_gradient<T: Combine>(
    field: &ClassicalField,
    n: usize,
    h: f64,
    richardson: bool,
    f: &impl Fn(&ClassicalField) -> T,
) -> [T; 2] {
    let central = |dir: C64, step: f64| {
        let mut p = field.clone();
        let mut m = field.clone();
        p.chi[n] += dir * step;
        m.chi[n] -= dir * step;
        let s = 1.0 / (2.0 * step);
        T::combine(s, &f(&p), -s, &f(&m))
    };
    let one = |dir: C64| {
        if richardson {
            let coarse = central(dir, h);
            let fine = central(dir, h / 2.0);
            T::combine(4.0 / 3.0, &fine, -1.0 / 3.0, &coarse)
        } else {
            central(dir, h)
        }
    };
    [one(C64::new(1.0, 0.0)), one(C64::new(0.0, 1.0))]
}

/// `{T(λ) ⊗, T(μ)}` with `{f, g} = iΔ Σ_n (∂f/∂χ_n ∂g/∂χ̄_n − ∂f/∂χ̄_n ∂g/∂χ_n)`.
pub fn monodromy_bracket(
    model: &ClassicalModel,
    field: &ClassicalField,
    lambda: C64,
    mu: C64,
    h: f64,
    richardson: bool,
) -> Matrix4<C64> {
    let i = C64::new(0.0, 1.0);
    let mut out = Matrix4::zeros();
    for n in 0..field.len() {
        let [tlx, tly] = fd_gradient(field, n, h, richardson, &|f| cl_monodromy(model, f, lambda));
        let [tmx, tmy] = fd_gradient(field, n, h, richardson, &|f| cl_monodromy(model, f, mu));
        // ∂/∂χ = (∂x − i∂y)/2, ∂/∂χ̄ = (∂x + i∂y)/2
        let dl = (tlx - tly * i) * C64::new(0.5, 0.0);
        let dlb = (tlx + tly * i) * C64::new(0.5, 0.0);
        let dm = (tmx - tmy * i) * C64::new(0.5, 0.0);
        let dmb = (tmx + tmy * i) * C64::new(0.5, 0.0);
        out += (kron(&dl, &dmb) - kron(&dlb, &dm)) * (i * model.delta);
    }
    out
}

/// `{T(λ)⊗,T(μ)} = [T(λ)⊗T(μ), r(λ,μ)]` with the bracket from finite differences.
pub fn r_poisson_residual(
    model: &ClassicalModel,
    field: &ClassicalField,
    lambda: C64,
    mu: C64,
    h: f64,
    richardson: bool,
) -> Result<f64> {
    let r = r_classical(model, lambda, mu)?;
    let tt = kron(&cl_monodromy(model, field, lambda), &cl_monodromy(model, field, mu));
    let rhs = tt * r - r * tt;
    let lhs = monodromy_bracket(model, field, lambda, mu, h, richardson);
    Ok(relative((lhs - rhs).camax(), rhs.camax()))
}

pub fn check_r_poisson(model: &ClassicalModel, field: &ClassicalField, lambda: C64, mu: C64) -> Result<ResidualReport> {
    let residual = r_poisson_residual(model, field, lambda, mu, 1e-3, true)?;
    Ok(ResidualReport::new(
        "r_poisson",
        model.check_params(field).lambda(lambda).mu(mu),
        residual,
        TOL_R_POISSON,
    ))
}

/// Jet of `L̃_n(z)` at `z₀` to third order.
fn normalised_l_jet(model: &ClassicalModel, chi: C64) -> SeriesMatrix2 {
    normalised_matrix_jet(model, &l0(model, chi))
}

fn normalised_matrix_jet(model: &ClassicalModel, a0: &Matrix2<C64>) -> SeriesMatrix2 {
    let nu = model.nu();
    let z = Series::variable(model.z0(), 3);
    let den = z.scale(nu).add_scalar(C64::new(1.0, 0.0)).recip().scale(nu);
    let b = l1(model);
    let entry = |r: usize, c: usize| &z.scale(a0[(r, c)]).add_scalar(b[(r, c)]) * &den;
    SeriesMatrix2 {
        e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
    }
}

/// `ν z δL₀/(νz + 1)`: the normalised jet of a field-only perturbation.
fn perturbation_jet(model: &ClassicalModel, d0: &Matrix2<C64>) -> SeriesMatrix2 {
    let nu = model.nu();
    let z = Series::variable(model.z0(), 3);
    let den = z.scale(nu).add_scalar(C64::new(1.0, 0.0)).recip().scale(nu);
    let factor = &z * &den;
    let entry = |r: usize, c: usize| factor.scale(d0[(r, c)]);
    SeriesMatrix2 {
        e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
    }
}

fn require_coupling(model: &ClassicalModel) -> Result<()> {
    if model.kappa <= 0.0 {
        return Err(Error::InvalidParams("H_c carries 1/κ and needs κ > 0".into()));
    }
    Ok(())
}

fn hc_from_jet(model: &ClassicalModel, tau: &Series) -> Result<f64> {
    if tau.value().norm() == 0.0 {
        return Err(Error::Singular("normalised transfer vanishes at ν".into()));
    }
    let c3 = tau.ln().coeff(3);
    Ok(2.0 * (C64::new(0.0, 1.0) / (2.0 * model.kappa) * c3).re)
}

/// Normalised transfer jet `tr Π L̃_n(z)` at `z₀`.
fn normalised_transfer_jet(model: &ClassicalModel, field: &ClassicalField) -> Series {
    field
        .chi
        .iter()
        .fold(SeriesMatrix2::identity(3), |acc, &c| normalised_l_jet(model, c).mul(&acc))
        .trace()
}

/// Exact `H_c`.
pub fn build_hc(model: &ClassicalModel, field: &ClassicalField) -> Result<f64> {
    require_coupling(model)?;
    hc_from_jet(model, &normalised_transfer_jet(model, field))
}

/// `H_c` from a fitted third derivative of `g(z) = ln[(1+1/(νz))^{−N} τ(1/z)]`
/// on a real-direction grid around `z₀`, with the logarithm continued from
/// the grid centre.
pub fn build_hc_grid(model: &ClassicalModel, field: &ClassicalField, h: f64) -> Result<f64> {
    require_coupling(model)?;
    let n = field.len() as i32;
    let nu = model.nu();
    let g_raw = |z: C64| {
        let lam = z.inv();
        cl_transfer(model, field, lam) / (C64::new(1.0, 0.0) + lam / nu).powi(n)
    };
    let centre = g_raw(model.z0());
    if centre.norm() == 0.0 {
        return Err(Error::Singular("normalised transfer vanishes at ν".into()));
    }
    let third = crate::hamiltonian::DiffStencil {
        order: 1,
        form: StencilForm::Printed,
        terms: vec![crate::hamiltonian::StencilTerm {
            powers: vec![3],
            coeff: 1.0,
        }],
    };
    let mut step = h;
    for _ in 0..4 {
        let fit = apply_stencil(
            &third,
            |z: &[C64]| {
                let ratio = g_raw(z[0]) / centre;
                if ratio.re <= 0.0 {
                    return Err(Error::Differentiation("log branch crossing on the fit grid".into()));
                }
                Ok(ratio.ln())
            },
            &[model.z0()],
            step,
        );
        match fit {
            Ok(v) => return Ok(2.0 * (C64::new(0.0, 1.0) / (12.0 * model.kappa) * v.value).re),
            Err(_) => step /= 2.0,
        }
    }
    Err(Error::Differentiation("grid fit for H_c failed after shrinking".into()))
}

/// Exact `(∂H_c/∂x_n, ∂H_c/∂y_n)` for every site.
pub fn hc_gradient(model: &ClassicalModel, field: &ClassicalField) -> Result<Vec<[f64; 2]>> {
    require_coupling(model)?;
    let n = field.len();
    let jets: Vec<SeriesMatrix2> = field.chi.iter().map(|&c| normalised_l_jet(model, c)).collect();
    // before[k] = L̃_{k−1}…L̃_1, after[k] = L̃_N…L̃_{k+1} (0-based k)
    let mut before = Vec::with_capacity(n);
    let mut acc = SeriesMatrix2::identity(3);
    for j in &jets {
        before.push(acc.clone());
        acc = j.mul(&acc);
    }
    let tau = acc.trace();
    if tau.value().norm() == 0.0 {
        return Err(Error::Singular("normalised transfer vanishes at ν".into()));
    }
    let inv = tau.recip();
    let mut after = vec![SeriesMatrix2::identity(3); n];
    let mut acc = SeriesMatrix2::identity(3);
    for k in (0..n).rev() {
        after[k] = acc.clone();
        acc = acc.mul(&jets[k]);
    }
    let i = C64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let env = before[k].mul(&after[k]);
        let mut g = [0.0; 2];
        for (c, d0) in l0_gradient(model, field.chi[k]).iter().enumerate() {
            let dl = perturbation_jet(model, d0);
            let dtau = dl.mul(&env).trace();
            let c3 = (&dtau * &inv).coeff(3);
            g[c] = 2.0 * (i / (2.0 * model.kappa) * c3).re;
        }
        out.push(g);
    }
    Ok(out)
}

/// Central-difference gradient of [`build_hc`], Richardson-combined.
pub fn hc_gradient_fd(model: &ClassicalModel, field: &ClassicalField, h: f64) -> Result<Vec<[f64; 2]>> {
    build_hc(model, field)?;
    Ok((0..field.len())
        .map(|n| fd_gradient(field, n, h, true, &|f| build_hc(model, f).unwrap_or(f64::NAN)))
        .collect())
}

/// `dχ_n/dt = −iΔ ∂H_c/∂χ̄_n = −iΔ(∂_x + i∂_y)H_c/2`.
pub fn eom(model: &ClassicalModel, field: &ClassicalField) -> Result<Vec<C64>> {
    let i = C64::new(0.0, 1.0);
    Ok(hc_gradient(model, field)?
        .into_iter()
        .map(|[gx, gy]| -i * model.delta * (C64::new(gx, 0.0) + i * gy) * 0.5)
        .collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<ClassicalField>,
    #[serde(with = "crate::complex_serde::vec")]
    pub lambda_samples: Vec<C64>,
    /// `tau[t][s]` is τ(λ_s) at `times[t]`.
    pub tau: Vec<Vec<SerdeC64>>,
    pub hc: Vec<f64>,
}

/// Complex number with the `{re, im}` encoding, for nested containers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SerdeC64 {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for SerdeC64 {
    fn from(z: C64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<SerdeC64> for C64 {
    fn from(z: SerdeC64) -> Self {
        C64::new(z.re, z.im)
    }
}

fn rk4_step(model: &ClassicalModel, f: &ClassicalField, dt: f64) -> Result<ClassicalField> {
    let k1 = eom(model, f)?;
    let k2 = eom(model, &f.axpy(dt / 2.0, &k1))?;
    let k3 = eom(model, &f.axpy(dt / 2.0, &k2))?;
    let k4 = eom(model, &f.axpy(dt, &k3))?;
    let chi = (0..f.len())
        .map(|n| f.chi[n] + (k1[n] + (k2[n] + k3[n]) * 2.0 + k4[n]) * (dt / 6.0))
        .collect::<Vec<_>>();
    if chi.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Integration("non-finite field after RK4 step".into()));
    }
    Ok(ClassicalField { chi })
}

/// `steps` RK4 steps of signed size `dt` (negative runs backwards in time).
pub fn propagate(model: &ClassicalModel, field: &ClassicalField, steps: usize, dt: f64) -> Result<ClassicalField> {
    let mut f = field.clone();
    for s in 0..steps {
        f = rk4_step(model, &f, dt).map_err(|e| Error::Integration(format!("step {s}: {e}")))?;
    }
    Ok(f)
}

/// Fixed-step RK4 from t = 0 to `t_end`, recording every `record_every` steps
/// and at the end.
pub fn evolve(
    model: &ClassicalModel,
    field0: &ClassicalField,
    t_end: f64,
    dt: f64,
    lambda_samples: &[C64],
    record_every: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::Integration(format!("need dt > 0 and t_end ≥ 0, got dt = {dt}, t_end = {t_end}")));
    }
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut traj = Trajectory {
        times: Vec::new(),
        fields: Vec::new(),
        lambda_samples: lambda_samples.to_vec(),
        tau: Vec::new(),
        hc: Vec::new(),
    };
    let mut record = |t: f64, f: &ClassicalField| -> Result<()> {
        traj.times.push(t);
        traj.tau
            .push(lambda_samples.iter().map(|&l| cl_transfer(model, f, l).into()).collect());
        traj.hc.push(build_hc(model, f)?);
        traj.fields.push(f.clone());
        Ok(())
    };
    let mut f = field0.clone();
    record(0.0, &f)?;
    for s in 1..=steps {
        f = rk4_step(model, &f, dt).map_err(|e| Error::Integration(format!("step {s}: {e}")))?;
        if s % every == 0 || s == steps {
            record(s as f64 * dt, &f)?;
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConservationReport {
    #[serde(with = "crate::complex_serde::vec")]
    pub lambda_samples: Vec<C64>,
    /// `max_t |τ(λ_s, t) − τ(λ_s, 0)|` per sample.
    pub tau_drift: Vec<f64>,
    pub hc_drift: f64,
}

impl ConservationReport {
    pub fn max_drift(&self) -> f64 {
        self.tau_drift.iter().copied().fold(self.hc_drift, f64::max)
    }
}

pub fn conservation_report(traj: &Trajectory) -> Result<ConservationReport> {
    if traj.times.is_empty() {
        return Err(Error::Range("empty trajectory".into()));
    }
    let tau_drift = (0..traj.lambda_samples.len())
        .map(|s| {
            let t0 = C64::from(traj.tau[0][s]);
            traj.tau.iter().map(|row| (C64::from(row[s]) - t0).norm()).fold(0.0, f64::max)
        })
        .collect();
    let h0 = traj.hc[0];
    let hc_drift = traj.hc.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max);
    Ok(ConservationReport {
        lambda_samples: traj.lambda_samples.clone(),
        tau_drift,
        hc_drift,
    })
}

fn unnormalised_l_jet3(model: &ClassicalModel, chi: C64, var: Option<usize>) -> JetMatrix2 {
    let a = l0(model, chi);
    let b = l1(model);
    let lam = match var {
        Some(v) => Jet3::variable(v, model.z0()).recip(),
        None => Jet3::constant(model.nu()),
    };
    let entry = |r: usize, c: usize| lam.scale(b[(r, c)]).add_scalar(a[(r, c)]);
    JetMatrix2 {
        e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
    }
}

fn wrap(site: i64, n: usize) -> usize {
    site.rem_euclid(n as i64) as usize
}

/// Which sites enter the trace defining a local density.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensityTrace {
    /// `tr L_{k+n}(ν)…L_{k−1}(ν)` over the `n + 2` window.
    Window,
    /// Whole chain, every site outside the differentiated ones at ν.
    FullChain,
}

/// Classical local density `h_{k,n} = Dⁿ ln tr(…)` in the z variables at
/// `z₀`, by exact three-variable jets. `k` is 1-based and periodic.
pub fn classical_local_density(
    model: &ClassicalModel,
    field: &ClassicalField,
    k: usize,
    n: usize,
    form: StencilForm,
    trace: DensityTrace,
) -> Result<C64> {
    let sites = field.len();
    if sites < n + 2 {
        return Err(Error::Range(format!("h_(k,{n}) needs N ≥ {}, got {sites}", n + 2)));
    }
    if k == 0 || k > sites {
        return Err(Error::SiteOutOfRange { site: k, sites });
    }
    let stencil = make_stencil_form(n, form)?;
    let k0 = k as i64 - 1;
    let var_of = |site: usize| (0..n).find(|&j| wrap(k0 + j as i64, sites) == site);
    let order: Vec<usize> = match trace {
        DensityTrace::Window => (k0 - 1..=k0 + n as i64).map(|s| wrap(s, sites)).collect(),
        DensityTrace::FullChain => (0..sites).collect(),
    };
    let product = order.iter().fold(JetMatrix2::identity(), |acc, &s| {
        unnormalised_l_jet3(model, field.chi[s], var_of(s)).mul(&acc)
    });
    let tr = product.trace();
    if tr.value().norm() == 0.0 {
        return Err(Error::Singular(format!("local trace vanishes at site {k}")));
    }
    let lg = tr.ln();
    Ok(stencil
        .terms
        .iter()
        .map(|t| {
            let mut p = [0usize; 3];
            for (j, &q) in t.powers.iter().enumerate() {
                p[j] = q as usize;
            }
            lg.derivative(p) * t.coeff
        })
        .sum())
}

/// Same density from a fitted tensor grid (cross-check of the jet route).
pub fn classical_local_density_grid(
    model: &ClassicalModel,
    field: &ClassicalField,
    k: usize,
    n: usize,
    form: StencilForm,
    h: f64,
) -> Result<C64> {
    let sites = field.len();
    if sites < n + 2 {
        return Err(Error::Range(format!("h_(k,{n}) needs N ≥ {}", n + 2)));
    }
    let stencil = make_stencil_form(n, form)?;
    let k0 = k as i64 - 1;
    let window: Vec<usize> = (k0 - 1..=k0 + n as i64).map(|s| wrap(s, sites)).collect();
    let eval = |z: &[C64]| -> C64 {
        window
            .iter()
            .enumerate()
            .fold(Matrix2::identity(), |acc, (slot, &s)| {
                let lam = if slot == 0 || slot == n + 1 { model.nu() } else { z[slot - 1].inv() };
                cl_l(model, field.chi[s], lam) * acc
            })
            .trace()
    };
    let base = vec![model.z0(); n];
    let centre = eval(&base);
    let fit = apply_stencil(&stencil, |z: &[C64]| Ok((eval(z) / centre).ln()), &base, h)?;
    Ok(fit.value)
}

/// Exact `∂ⁿ_z ln τ(1/z)` at `z₀`.
pub fn log_transfer_derivative(model: &ClassicalModel, field: &ClassicalField, n: usize) -> Result<C64> {
    if n > 3 {
        return Err(Error::Range(format!("derivative order {n} > 3")));
    }
    let product = field
        .chi
        .iter()
        .fold(JetMatrix2::identity(), |acc, &c| unnormalised_l_jet3(model, c, Some(0)).mul(&acc));
    let tr = product.trace();
    if tr.value().norm() == 0.0 {
        return Err(Error::Singular("τ(ν) vanishes".into()));
    }
    Ok(tr.ln().derivative([n, 0, 0]))
}

/// `|Σ_k h_{k,n} − ∂ⁿ ln τ| / max(1, |∂ⁿ ln τ|)`.
pub fn check_density_sum_rule(
    model: &ClassicalModel,
    field: &ClassicalField,
    n: usize,
    form: StencilForm,
) -> Result<ResidualReport> {
    let target = log_transfer_derivative(model, field, n)?;
    let mut sum = C64::new(0.0, 0.0);
    for k in 1..=field.len() {
        sum += classical_local_density(model, field, k, n, form, DensityTrace::Window)?;
    }
    let name = match form {
        StencilForm::Printed => format!("density_sum_rule_n{n}_printed"),
        StencilForm::SumRule => format!("density_sum_rule_n{n}"),
    };
    Ok(ResidualReport::new(
        name,
        model.check_params(field),
        relative((sum - target).norm(), target.norm()),
        TOL_DENSITY_SUM,
    ))
}

/// Support leak of `h_{k,3}`: the full-chain density is compared with itself
/// after re-drawing every field outside sites `k−1..k+3`, and with the
/// five-site window density.
pub fn density_locality_leak<R: Rng + ?Sized>(
    model: &ClassicalModel,
    field: &ClassicalField,
    k: usize,
    form: StencilForm,
    rng: &mut R,
    trials: usize,
) -> Result<f64> {
    let sites = field.len();
    let n = 3;
    let full = classical_local_density(model, field, k, n, form, DensityTrace::FullChain)?;
    let window = classical_local_density(model, field, k, n, form, DensityTrace::Window)?;
    let support: Vec<usize> = (k as i64 - 2..=k as i64 + 2).map(|s| wrap(s, sites)).collect();
    let amp = field.chi.iter().map(|z| z.norm()).fold(0.1, f64::max);
    let mut leak = relative((full - window).norm(), full.norm());
    for _ in 0..trials {
        let mut other = field.clone();
        for s in 0..sites {
            if !support.contains(&s) {
                other.chi[s] = C64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp));
            }
        }
        let h = classical_local_density(model, &other, k, n, form, DensityTrace::FullChain)?;
        leak = leak.max(relative((h - full).norm(), full.norm()));
    }
    Ok(leak)
}

pub fn check_density_locality<R: Rng + ?Sized>(
    model: &ClassicalModel,
    field: &ClassicalField,
    k: usize,
    rng: &mut R,
) -> Result<ResidualReport> {
    let leak = density_locality_leak(model, field, k, StencilForm::SumRule, rng, 5)?;
    Ok(ResidualReport::new("density_locality", model.check_params(field).site(k), leak, TOL_LOCALITY))
}

/// Hessian block `∂²H_c/∂x_m∂x_j` by central differences of the exact gradient.
pub fn hc_hessian_xx(model: &ClassicalModel, field: &ClassicalField, h: f64) -> Result<DMatrix<f64>> {
    let n = field.len();
    let mut out = DMatrix::zeros(n, n);
    for m in 0..n {
        let mut p = field.clone();
        let mut q = field.clone();
        p.chi[m] += h;
        q.chi[m] -= h;
        let gp = hc_gradient(model, &p)?;
        let gq = hc_gradient(model, &q)?;
        for j in 0..n {
            out[(j, m)] = (gp[j][0] - gq[j][0]) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Field `χ_n = Δψ(x_n)` for `ψ = sech`, `x_n = (n − (N−1)/2)Δ` on a
/// window of the given length.
pub fn sech_field(delta: f64, length: f64) -> ClassicalField {
    let sites = (length / delta).round() as usize;
    let chi = (0..sites)
        .map(|n| {
            let x = (n as f64 - (sites as f64 - 1.0) / 2.0) * delta;
            C64::new(delta / x.cosh(), 0.0)
        })
        .collect();
    ClassicalField { chi }
}

/// `Σ_n Δ(|ψ′(x_n)|² + κ|ψ(x_n)|⁴)` for `ψ = sech` on the same grid.
pub fn sech_continuum_energy(kappa: f64, delta: f64, length: f64) -> f64 {
    let sites = (length / delta).round() as usize;
    (0..sites)
        .map(|n| {
            let x = (n as f64 - (sites as f64 - 1.0) / 2.0) * delta;
            let psi = 1.0 / x.cosh();
            let dpsi = -psi * x.tanh();
            delta * (dpsi * dpsi + kappa * psi.powi(4))
        })
        .sum()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuumPoint {
    pub delta: f64,
    pub sites: usize,
    pub hc: f64,
    pub target: f64,
    pub error: f64,
}

pub fn continuum_sweep(kappa: f64, deltas: &[f64], length: f64) -> Result<Vec<ContinuumPoint>> {
    deltas
        .iter()
        .map(|&d| {
            let model = ClassicalModel::new(kappa, d)?;
            let field = sech_field(d, length);
            let hc = build_hc(&model, &field)?;
            let target = sech_continuum_energy(kappa, d, length);
            Ok(ContinuumPoint {
                delta: d,
                sites: field.len(),
                hc,
                target,
                error: (hc - target).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ClassicalModel {
        ClassicalModel::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn transfer_closed_forms() {
        let m = model();
        let l = C64::new(0.3, -0.8);
        let x = C64::new(0.0, 0.25) * l;
        let free = (C64::new(1.0, 0.0) - x).powi(4) + (C64::new(1.0, 0.0) + x).powi(4);
        assert!((cl_transfer(&m, &ClassicalField::zeros(4), l) - free).norm() < 1e-13);
        let chi = C64::new(0.4, -0.7);
        let one = ClassicalField::new(vec![chi]).unwrap();
        assert!((cl_transfer(&m, &one, l) - C64::new(2.0 + chi.norm_sqr(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn determinant_and_projector() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = ClassicalField::random(&mut rng, 3, 0.8);
        assert!(check_cl_det(&m, &f, C64::new(0.7, 0.0)).passed());
        assert!(check_cl_det(&m, &f, C64::new(-0.4, 1.1)).passed());
        assert!(projector_rank_defect(&m, &f) < 1e-10);
        assert!(d_c(&m, m.nu()).norm() < 1e-15);
    }

    #[test]
    fn r_matrix_bracket() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = ClassicalField::random(&mut rng, 2, 0.6);
        let (l, mu) = (C64::new(0.3, 0.2), C64::new(-0.5, 0.4));
        assert!(check_r_poisson(&m, &f, l, mu).unwrap().passed());
        let coarse = r_poisson_residual(&m, &f, l, mu, 1e-2, false).unwrap();
        let fine = r_poisson_residual(&m, &f, l, mu, 5e-3, false).unwrap();
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
        assert!(check_r_poisson(&m, &f, l, l).is_err());
        let free = ClassicalModel::new(0.0, 0.5).unwrap();
        assert_eq!(r_poisson_residual(&free, &f, l, mu, 1e-3, true).unwrap(), 0.0);
    }

    #[test]
    fn vacuum_hamiltonian_vanishes() {
        let m = model();
        assert!(build_hc(&m, &ClassicalField::zeros(4)).unwrap().abs() < 1e-12);
        assert!(eom(&m, &ClassicalField::zeros(4)).unwrap().iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn exact_and_fitted_hamiltonian_agree() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = ClassicalField::random(&mut rng, 5, 0.5);
        let exact = build_hc(&m, &f).unwrap();
        let grid = build_hc_grid(&m, &f, 1e-2 * m.delta / 2.0).unwrap();
        assert!((exact - grid).abs() < 1e-6 * exact.abs().max(1.0), "{exact} {grid}");
    }

    #[test]
    fn exact_gradient_matches_finite_differences() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = ClassicalField::random(&mut rng, 4, 0.5);
        let g = hc_gradient(&m, &f).unwrap();
        let fd = hc_gradient_fd(&m, &f, 1e-3).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7, "{a:?} {b:?}");
        }
    }

    #[test]
    fn phase_covariance() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = ClassicalField::random(&mut rng, 4, 0.5);
        let th = 0.83;
        let a = eom(&m, &f.rotated(th)).unwrap();
        let b = eom(&m, &f).unwrap();
        let ph = C64::from_polar(1.0, th);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y * ph).norm() < 1e-10);
        }
        assert!((build_hc(&m, &f).unwrap() - build_hc(&m, &f.rotated(th)).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn densities_jet_vs_grid() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = ClassicalField::random(&mut rng, 6, 0.5);
        for n in 1..=3 {
            let jet = classical_local_density(&m, &f, 2, n, StencilForm::SumRule, DensityTrace::Window).unwrap();
            let grid = classical_local_density_grid(&m, &f, 2, n, StencilForm::SumRule, 1e-2 * m.delta / 2.0).unwrap();
            assert!((jet - grid).norm() < 1e-6 * jet.norm().max(1.0), "n={n}: {jet} {grid}");
        }
    }

    #[test]
    fn sum_rules_and_printed_d3() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = ClassicalField::random(&mut rng, 6, 0.5);
        for n in 1..=3 {
            let r = check_density_sum_rule(&m, &f, n, StencilForm::SumRule).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        let printed = check_density_sum_rule(&m, &f, 3, StencilForm::Printed).unwrap();
        assert!(printed.residual > 1e-6, "{printed:?}");
        assert!(check_density_locality(&m, &f, 3, &mut rng).unwrap().passed());
    }
}
