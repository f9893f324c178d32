//! Log-derivatives at the projector point ν = −2i/Δ.
//!
//! * `D^n` stencils acting on `ln tr L_{k+n}(ν)L_{k+n−1}(λ_{k+n−1})…L_k(λ_k)L_{k−1}(ν)`
//!   as a function of the inner spectral parameters, evaluated by local
//!   polynomial fits on a tensor grid with a Richardson step.
//! * The quantum Hamiltonian
//!   `H_q = (D_c + (iκ/6) d/dz) ln[(1+λ/ν)^{−N} τ(λ)] + h.c.`, `D_c = (i/12κ) d³/dz³`,
//!   `z = 1/λ`, built spectrally: every eigenvalue polynomial `Λ_j(λ)` of the
//!   commuting family is differentiated exactly at `z₀ = 1/ν`.
//!
//! All derivatives are taken in `z = 1/λ`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bethe::build_state;
use crate::error::{Error, Result};
use crate::fockspace::ModelParams;
use crate::laxops::{AuxMatrix2, QuantumChain};
use crate::operator::{op_norm, vec_norm};
use crate::report::{relative, CheckParams, ResidualReport};
use crate::series::Series;
use crate::ybe_verify::random_point;

pub const TOL_HERMITIAN: f64 = 1e-10;
pub const TOL_HQ_COMMUTE: f64 = 1e-9;
pub const TOL_ENERGY_SUM: f64 = 1e-7;
pub const TOL_SPECTRAL_BASIS: f64 = 1e-9;

/// Grid nodes in units of the step.
const NODES: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilForm {
    /// Coefficients as commonly printed for D¹, D², D³.
    Printed,
    /// D³ with weight 3 on the adjacent two-variable terms, the multinomial
    /// weight required for `Σ_k h_{k,3} = ∂³ ln τ`.
    SumRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StencilTerm {
    /// `powers[j]` is the order of `∂_{k+j}`.
    pub powers: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffStencil {
    pub order: usize,
    pub form: StencilForm,
    pub terms: Vec<StencilTerm>,
}

impl DiffStencil {
    pub fn coefficient(&self, powers: &[u32]) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.powers == powers)
            .map(|t| t.coeff)
            .sum()
    }
}

/// D¹ = ∂_k; D² = 2∂_{k+1}∂_k + ∂²_k;
/// D³ = 6∂_{k+2}∂_{k+1}∂_k + 6∂²_{k+2}∂_{k+1} + 6∂_{k+2}∂²_{k+1} − 6∂²_{k+2}∂_k − 6∂_{k+2}∂²_k + ∂³_k.
pub fn make_stencil(n: usize) -> Result<DiffStencil> {
    make_stencil_form(n, StencilForm::Printed)
}

pub fn make_stencil_form(n: usize, form: StencilForm) -> Result<DiffStencil> {
    let t = |powers: &[u32], coeff: f64| StencilTerm {
        powers: powers.to_vec(),
        coeff,
    };
    let terms = match n {
        1 => vec![t(&[1], 1.0)],
        2 => vec![t(&[1, 1], 2.0), t(&[2, 0], 1.0)],
        3 => {
            let pair = match form {
                StencilForm::Printed => 6.0,
                StencilForm::SumRule => 3.0,
            };
            vec![
                t(&[1, 1, 1], 6.0),
                t(&[0, 1, 2], pair),
                t(&[0, 2, 1], pair),
                t(&[1, 0, 2], -6.0),
                t(&[2, 0, 1], -6.0),
                t(&[3, 0, 0], 1.0),
            ]
        }
        _ => return Err(Error::Range(format!("stencils exist for n ∈ {{1,2,3}}, got {n}"))),
    };
    Ok(DiffStencil { order: n, form, terms })
}

/// Values a stencil can act on.
pub trait FitValue: Clone {
    fn zeroed(&self) -> Self;
    fn add_scaled(&mut self, w: f64, other: &Self);
    fn distance(&self, other: &Self) -> f64;
    fn is_finite(&self) -> bool;
}

impl FitValue for C64 {
    fn zeroed(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * w;
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).norm()
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl FitValue for DMatrix<C64> {
    fn zeroed(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, w: f64, other: &Self) {
        *self += other * C64::new(w, 0.0);
    }
    fn distance(&self, other: &Self) -> f64 {
        (self - other).camax()
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Weights `w_i` with `Σ w_i p(s_i) = p^{(k)}(0)` for cubic `p`, unit step.
fn node_weights(k: u32) -> Result<[f64; 4]> {
    let v = Matrix4::from_fn(|r, c| NODES[c].powi(r as i32));
    let fact: f64 = (1..=k).map(f64::from).product();
    let mut rhs = Vector4::zeros();
    if k > 3 {
        return Err(Error::Differentiation(format!("derivative order {k} exceeds the 4-point fit")));
    }
    rhs[k as usize] = fact;
    let w = v
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Differentiation("singular Vandermonde system".into()))?;
    Ok([w[0], w[1], w[2], w[3]])
}

#[derive(Clone, Debug)]
pub struct StencilValue<T> {
    /// Richardson combination of the two step sizes.
    pub value: T,
    pub coarse: T,
    pub fine: T,
    /// `|fine − coarse|/3`.
    pub error_estimate: f64,
}

fn stencil_at_step<T: FitValue>(
    stencil: &DiffStencil,
    f: &mut impl FnMut(&[C64]) -> Result<T>,
    base: &[C64],
    h: f64,
    direction: C64,
) -> Result<T> {
    let weights: Vec<[f64; 4]> = (0..=3).map(node_weights).collect::<Result<_>>()?;
    let mut cache: HashMap<Vec<i8>, T> = HashMap::new();
    let mut acc: Option<T> = None;
    for term in &stencil.terms {
        let varied: Vec<usize> = (0..term.powers.len()).filter(|&j| term.powers[j] > 0).collect();
        let order: u32 = term.powers.iter().sum();
        let scale = term.coeff / h.powi(order as i32);
        let points = 4usize.pow(varied.len() as u32);
        for idx in 0..points {
            let mut key = vec![0i8; base.len()];
            let mut w = scale;
            let mut rem = idx;
            for &j in &varied {
                let node = rem % 4;
                rem /= 4;
                key[j] = (2.0 * NODES[node]) as i8;
                w *= weights[term.powers[j] as usize][node];
            }
            if !cache.contains_key(&key) {
                let x: Vec<C64> = base
                    .iter()
                    .zip(&key)
                    .map(|(&b, &k)| b + direction * (h * f64::from(k) / 2.0))
                    .collect();
                let v = f(&x)?;
                if !v.is_finite() {
                    return Err(Error::Differentiation(format!("non-finite value at {x:?}")));
                }
                cache.insert(key.clone(), v);
            }
            let v = &cache[&key];
            match acc.as_mut() {
                Some(a) => a.add_scaled(w, v),
                None => {
                    let mut a = v.zeroed();
                    a.add_scaled(w, v);
                    acc = Some(a);
                }
            }
        }
    }
    acc.ok_or_else(|| Error::Differentiation("empty stencil".into()))
}

/// Applies `stencil` to `f` at `base` (one coordinate per stencil variable,
/// `base[j]` ↔ `∂_{k+j}`), stepping each varied variable along the real
/// axis with spacing `h`, then `h/2`, and Richardson-combining for an O(h²)
/// leading error.
pub fn apply_stencil<T: FitValue>(
    stencil: &DiffStencil,
    mut f: impl FnMut(&[C64]) -> Result<T>,
    base: &[C64],
    h: f64,
) -> Result<StencilValue<T>> {
    if base.len() < stencil.order {
        return Err(Error::Differentiation(format!(
            "stencil of order {} needs {} coordinates, got {}",
            stencil.order,
            stencil.order,
            base.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Differentiation(format!("step must be positive, got {h}")));
    }
    let dir = C64::new(1.0, 0.0);
    let coarse = stencil_at_step(stencil, &mut f, base, h, dir)?;
    let fine = stencil_at_step(stencil, &mut f, base, h / 2.0, dir)?;
    let mut value = fine.clone();
    let mut diff = fine.clone();
    diff.add_scaled(-1.0, &coarse);
    value.add_scaled(1.0 / 3.0, &diff);
    let error_estimate = fine.distance(&coarse) / 3.0;
    Ok(StencilValue {
        value,
        coarse,
        fine,
        error_estimate,
    })
}

/// Default fit spacing in `z`: 1% of `|z₀| = Δ/2`.
pub fn default_z_step(params: &ModelParams) -> f64 {
    1e-2 * params.delta / 2.0
}

pub fn z0(params: &ModelParams) -> C64 {
    C64::new(0.0, params.delta / 2.0)
}

/// Common eigenbasis of the transfer family on one sector.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub sector: usize,
    /// Columns are eigenvectors.
    pub basis: DMatrix<C64>,
    pub basis_inverse: DMatrix<C64>,
    pub condition: f64,
    /// `polys[j][p]` is the λ^p coefficient of `Λ_j(λ)`.
    pub polys: Vec<Vec<C64>>,
    /// Largest `‖τ(λ)v_j − Λ_j(λ)v_j‖` over the sampled λ.
    pub residual: f64,
}

fn hermitian_combination<R: Rng + ?Sized>(coeffs: &[DMatrix<C64>], rng: &mut R) -> DMatrix<C64> {
    let dim = coeffs[0].nrows();
    let mut out = DMatrix::zeros(dim, dim);
    for c in coeffs {
        let w: f64 = rng.gen_range(-1.0..1.0);
        out += (c + c.adjoint()) * C64::new(w / 2.0, 0.0);
    }
    out
}

fn sorted_eigen(m: DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn poly_value(p: &[C64], x: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

pub fn spectral_decomposition<R: Rng + ?Sized>(
    chain: &QuantumChain,
    sector: usize,
    rng: &mut R,
) -> Result<SpectralDecomposition> {
    let tau = chain.transfer_poly().restrict(chain.lattice(), sector);
    let dim = tau.coeffs[0].nrows();
    if dim == 0 {
        return Err(Error::Range(format!("sector {sector} is empty")));
    }
    let (vals, mut basis) = sorted_eigen(hermitian_combination(&tau.coeffs, rng));
    let scale = vals.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let second = hermitian_combination(&tau.coeffs, rng);
    let mut start = 0;
    while start < dim {
        let mut end = start + 1;
        while end < dim && (vals[end] - vals[end - 1]).abs() <= 1e-8 * scale {
            end += 1;
        }
        if end - start > 1 {
            let sub = basis.columns(start, end - start).into_owned();
            let (_, rot) = sorted_eigen(sub.adjoint() * &second * &sub);
            basis.columns_mut(start, end - start).copy_from(&(sub * rot));
        }
        start = end;
    }
    let basis_inverse = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("eigenbasis of sector {sector}")))?;
    let sv = basis.clone().singular_values();
    let condition = sv.max() / sv.min();
    let polys: Vec<Vec<C64>> = (0..dim)
        .map(|j| {
            let v = basis.column(j);
            tau.coeffs.iter().map(|c| (v.adjoint() * c * v)[(0, 0)]).collect()
        })
        .collect();
    let mut residual: f64 = 0.0;
    for _ in 0..5 {
        let l = random_point(rng);
        let t = tau.eval(l);
        for (j, p) in polys.iter().enumerate() {
            let v = basis.column(j);
            let r = &t * v - v * poly_value(p, l);
            residual = residual.max(r.norm() / v.norm());
        }
    }
    Ok(SpectralDecomposition {
        sector,
        basis,
        basis_inverse,
        condition,
        polys,
        residual,
    })
}

/// Jet of `ln[(1+λ/ν)^{−N} Λ(λ)]` in `z = 1/λ` at `z₀`, up to a constant.
///
/// With `P(z) = z^N Λ(1/z)` this is `ln P(z) − N ln(νz + 1)`.
fn regularised_log_jet(poly: &[C64], params: &ModelParams, order: usize) -> Result<Series> {
    let n = poly.len() - 1;
    let zz = z0(params);
    let z = Series::variable(zz, order);
    let reversed: Vec<C64> = (0..=n).map(|k| poly[n - k]).collect();
    let p = z.poly_eval(&reversed);
    let lam_nu = poly_value(poly, params.nu());
    let scale = poly.iter().fold(1.0f64, |a, c| a.max(c.norm()));
    if lam_nu.norm() <= 1e-13 * scale {
        return Err(Error::Singular(format!("Λ(ν) = {lam_nu} vanishes")));
    }
    let nu = params.nu();
    let front = z.scale(nu).add_scalar(C64::new(1.0, 0.0));
    Ok(&p.ln() - &front.ln().scale(C64::new(n as f64, 0.0)))
}

/// Eigenvalue of `H_q` on a state with eigenvalue polynomial `Λ`:
/// `2 Re[(i/12κ) g‴(z₀) + (iκ/6) g′(z₀)]`; the second term only when
/// `correction` is set.
pub fn state_energy(poly: &[C64], params: &ModelParams, correction: bool) -> Result<f64> {
    if params.kappa <= 0.0 {
        return Err(Error::InvalidParams("H_q needs κ > 0".into()));
    }
    let g = regularised_log_jet(poly, params, 3)?;
    let i = C64::new(0.0, 1.0);
    let mut x = i / (12.0 * params.kappa) * g.derivative(3);
    if correction {
        x += i * params.kappa / 6.0 * g.derivative(1);
    }
    Ok(2.0 * x.re)
}

#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    pub sector: usize,
    pub matrix: DMatrix<C64>,
    /// One energy per column of `basis`.
    pub energies: Vec<f64>,
    pub basis: DMatrix<C64>,
    pub z0: C64,
    pub correction: bool,
    /// `‖H − H†‖` before symmetrization.
    pub hermiticity_residual: f64,
    pub basis_residual: f64,
    pub basis_condition: f64,
}

pub fn build_hq<R: Rng + ?Sized>(chain: &QuantumChain, sector: usize, rng: &mut R) -> Result<HamiltonianMatrix> {
    build_hq_with(chain, sector, rng, true)
}

pub fn build_hq_with<R: Rng + ?Sized>(
    chain: &QuantumChain,
    sector: usize,
    rng: &mut R,
    correction: bool,
) -> Result<HamiltonianMatrix> {
    let params = chain.params();
    let decomp = spectral_decomposition(chain, sector, rng)?;
    let mut energies = Vec::with_capacity(decomp.polys.len());
    for (j, p) in decomp.polys.iter().enumerate() {
        let e = state_energy(p, params, correction).map_err(|e| Error::Singular(format!("state {j}: {e}")))?;
        energies.push(e);
    }
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(
        energies.len(),
        energies.iter().map(|&e| C64::new(e, 0.0)),
    ));
    let raw = &decomp.basis * diag * &decomp.basis_inverse;
    let hermiticity_residual = op_norm(&(&raw - raw.adjoint()));
    let matrix = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    Ok(HamiltonianMatrix {
        sector,
        matrix,
        energies,
        basis: decomp.basis,
        z0: z0(params),
        correction,
        hermiticity_residual,
        basis_residual: decomp.residual,
        basis_condition: decomp.condition,
    })
}

impl HamiltonianMatrix {
    pub fn hermiticity_report(&self, params: &ModelParams) -> ResidualReport {
        ResidualReport::new(
            "hq_hermitian",
            CheckParams::model(params).sector(self.sector),
            self.hermiticity_residual,
            TOL_HERMITIAN,
        )
    }

    /// `‖[H_q, τ(λ)]‖ / max(1, ‖τ(λ)H_q‖)`.
    pub fn commute_report(&self, chain: &QuantumChain, lambda: C64) -> ResidualReport {
        let tau = chain.transfer(lambda).restrict(chain.lattice(), self.sector);
        let ht = &self.matrix * &tau;
        let th = &tau * &self.matrix;
        ResidualReport::new(
            "hq_commute",
            CheckParams::model(chain.params()).lambda(lambda).sector(self.sector),
            relative(op_norm(&(&ht - &th)), op_norm(&th)),
            TOL_HQ_COMMUTE,
        )
    }

    pub fn sorted_energies(&self) -> Vec<f64> {
        let mut e = self.energies.clone();
        e.sort_by(f64::total_cmp);
        e
    }
}

/// Compares `H_q` on a Bethe state with `Σ_k E(λ_k)`: the larger of the
/// Rayleigh-quotient mismatch and `‖H_qΨ − EΨ‖/‖Ψ‖`.
pub fn check_energy_sum(chain: &QuantumChain, hq: &HamiltonianMatrix, roots: &[C64]) -> Result<ResidualReport> {
    let params = chain.params();
    if hq.sector != roots.len() {
        return Err(Error::Range(format!(
            "H_q is on sector {} but the state has {} roots",
            hq.sector,
            roots.len()
        )));
    }
    let state = build_state(chain, roots)?;
    let eig = crate::bethe::verify_eigenpair(chain, roots, C64::new(0.29, 0.17))?;
    if !eig.passed() {
        return Err(Error::Bethe(format!(
            "roots do not give a transfer-matrix eigenstate (residual {:e})",
            eig.residual
        )));
    }
    let target = crate::bethe::energy(roots, params)?;
    let v = &state.coeffs;
    let hv = &hq.matrix * v;
    let rayleigh = (v.adjoint() * &hv)[(0, 0)] / v.norm_squared();
    let vector = vec_norm(&(&hv - v * C64::new(target, 0.0))) / state.norm;
    let residual = (rayleigh - target).norm().max(vector);
    Ok(ResidualReport::new(
        "energy_sum",
        CheckParams::model(params).sector(roots.len()),
        residual,
        TOL_ENERGY_SUM,
    ))
}

fn wrap_site(site: i64, sites: usize) -> usize {
    (site - 1).rem_euclid(sites as i64) as usize + 1
}

/// Sector blocks of `tr L_{k+n}(ν)L_{k+n−1}(1/z_{n−1})…L_k(1/z_0)L_{k−1}(ν)` and
/// of its `z_i`-derivative (exact: L is affine in λ and `dλ/dz = −λ²`).
struct LocalTrace<'a> {
    chain: &'a QuantumChain,
    k: usize,
    n: usize,
    sector: usize,
}

impl LocalTrace<'_> {
    fn product(&self, z: &[C64], diff: Option<usize>) -> Result<AuxMatrix2> {
        let p = self.chain.params();
        let dim = self.chain.dim();
        let nu = p.nu();
        let mut acc = AuxMatrix2::identity(dim);
        let first = self.k as i64 - 1;
        for (slot, site) in (first..=first + self.n as i64 + 1).enumerate() {
            let s = wrap_site(site, p.sites);
            let poly = self.chain.l_poly(s)?;
            let l = if slot == 0 || slot == self.n + 1 {
                poly.eval(nu)
            } else {
                let lam = z[slot - 1].inv();
                if diff == Some(slot - 1) {
                    // d/dz L(1/z) = −λ² dL/dλ
                    poly.eval_derivative(lam).scale(-lam * lam)
                } else {
                    poly.eval(lam)
                }
            };
            acc = l.mul(&acc);
        }
        Ok(acc)
    }

    fn block(&self, z: &[C64], diff: Option<usize>) -> Result<DMatrix<C64>> {
        Ok(self.product(z, diff)?.trace().restrict(self.chain.lattice(), self.sector))
    }

    /// `F⁻¹ ∂_i F` on the sector.
    fn log_derivative(&self, z: &[C64], i: usize) -> Result<DMatrix<C64>> {
        let f = self.block(z, None)?;
        let df = self.block(z, Some(i))?;
        f.lu()
            .solve(&df)
            .ok_or_else(|| Error::Singular(format!("local trace at z = {z:?}")))
    }
}

/// Sector block of the quantum local density `h_{k,n}` with the ordering
/// `∂^α ln F := ∂^{α−e_i}(F⁻¹∂_iF)`, `i` the lowest differentiated variable.
pub fn quantum_local_density(
    chain: &QuantumChain,
    k: usize,
    n: usize,
    sector: usize,
    form: StencilForm,
) -> Result<DMatrix<C64>> {
    let p = chain.params();
    if k == 0 || k > p.sites {
        return Err(Error::SiteOutOfRange { site: k, sites: p.sites });
    }
    let stencil = make_stencil_form(n, form)?;
    let lt = LocalTrace { chain, k, n, sector };
    let base = vec![z0(p); n];
    let h = default_z_step(p);
    let dim = chain.lattice().sector(sector).len();
    let mut total = DMatrix::zeros(dim, dim);
    for term in &stencil.terms {
        let i = term.powers.iter().position(|&q| q > 0).expect("nonzero term");
        let mut rest = term.powers.clone();
        rest[i] -= 1;
        let g_val = if rest.iter().all(|&q| q == 0) {
            lt.log_derivative(&base, i)?
        } else {
            let sub = DiffStencil {
                order: n,
                form,
                terms: vec![StencilTerm {
                    powers: rest,
                    coeff: 1.0,
                }],
            };
            apply_stencil(&sub, |z: &[C64]| lt.log_derivative(z, i), &base, h)?.value
        };
        total += g_val * C64::new(term.coeff, 0.0);
    }
    Ok(total)
}

/// Largest matrix element of a sector block that is not of the form
/// `x_local ⊗ I` on sites `support` (1-based, inclusive, periodic).
pub fn support_leak(chain: &QuantumChain, sector: usize, block: &DMatrix<C64>, support: &[usize]) -> f64 {
    let basis = chain.lattice().sector(sector);
    let states = basis.states();
    let sites = chain.params().sites;
    let outside: Vec<usize> = (0..sites).filter(|j| !support.contains(&(j + 1))).collect();
    let local = |s: &[usize]| support.iter().map(|&j| s[j - 1]).collect::<Vec<_>>();
    let env = |s: &[usize]| outside.iter().map(|&j| s[j]).collect::<Vec<_>>();
    let mut reference: HashMap<(Vec<usize>, Vec<usize>), C64> = HashMap::new();
    let mut leak: f64 = 0.0;
    for (r, sr) in states.iter().enumerate() {
        for (c, sc) in states.iter().enumerate() {
            let v = block[(r, c)];
            if env(sr) != env(sc) {
                leak = leak.max(v.norm());
                continue;
            }
            let key = (local(sr), local(sc));
            match reference.get(&key) {
                Some(&x) => leak = leak.max((x - v).norm()),
                None => {
                    reference.insert(key, v);
                }
            }
        }
    }
    leak
}

/// Spectral `∂ⁿ_z ln τ(1/z)` at `z₀` on a sector.
pub fn spectral_log_derivative(decomp: &SpectralDecomposition, params: &ModelParams, n: usize) -> Result<DMatrix<C64>> {
    let mut diag = Vec::with_capacity(decomp.polys.len());
    for p in &decomp.polys {
        let deg = p.len() - 1;
        let z = Series::variable(z0(params), n);
        let reversed: Vec<C64> = (0..=deg).map(|k| p[deg - k]).collect();
        // ln Λ(1/z) = ln P(z) − N ln z
        let g = &z.poly_eval(&reversed).ln() - &z.ln().scale(C64::new(deg as f64, 0.0));
        diag.push(g.derivative(n));
    }
    let d = DMatrix::from_diagonal(&DVector::from_vec(diag));
    Ok(&decomp.basis * d * &decomp.basis_inverse)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantumDensityDiagnostic {
    pub order: usize,
    pub sector: usize,
    pub form: StencilForm,
    /// `‖Σ_k h_{k,n} − ∂ⁿ ln τ‖ / max(1, ‖∂ⁿ ln τ‖)`.
    pub sum_rule_residual: f64,
    /// Largest element of `h_{1,n}` outside its `n + 2` site support.
    pub support_leak: f64,
}

pub fn quantum_density_diagnostic<R: Rng + ?Sized>(
    chain: &QuantumChain,
    n: usize,
    sector: usize,
    form: StencilForm,
    rng: &mut R,
) -> Result<QuantumDensityDiagnostic> {
    let p = chain.params();
    let decomp = spectral_decomposition(chain, sector, rng)?;
    let target = spectral_log_derivative(&decomp, p, n)?;
    let mut sum = DMatrix::zeros(target.nrows(), target.ncols());
    let mut first = None;
    for k in 1..=p.sites {
        let h = quantum_local_density(chain, k, n, sector, form)?;
        if k == 1 {
            first = Some(h.clone());
        }
        sum += h;
    }
    let support: Vec<usize> = (0..n + 2).map(|j| wrap_site(j as i64, p.sites)).collect();
    let leak = if n + 2 < p.sites {
        support_leak(chain, sector, first.as_ref().expect("k = 1 computed"), &support)
    } else {
        0.0
    };
    Ok(QuantumDensityDiagnostic {
        order: n,
        sector,
        form,
        sum_rule_residual: relative(op_norm(&(&sum - &target)), op_norm(&target)),
        support_leak: leak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(kappa: f64, delta: f64, sites: usize, cutoff: usize) -> QuantumChain {
        QuantumChain::new(&ModelParams::new(kappa, delta, sites, cutoff).unwrap()).unwrap()
    }

    #[test]
    fn printed_stencils() {
        assert_eq!(make_stencil(1).unwrap().coefficient(&[1]), 1.0);
        assert_eq!(make_stencil(2).unwrap().coefficient(&[1, 1]), 2.0);
        let d3 = make_stencil(3).unwrap();
        assert_eq!(d3.coefficient(&[1, 0, 2]), -6.0);
        assert_eq!(d3.coefficient(&[0, 1, 2]), 6.0);
        assert!(make_stencil(4).is_err());
        assert!(make_stencil(0).is_err());
        assert_eq!(make_stencil_form(3, StencilForm::SumRule).unwrap().coefficient(&[0, 2, 1]), 3.0);
    }

    #[test]
    fn stencil_on_polynomials() {
        let d3 = make_stencil(3).unwrap();
        let base = [C64::new(0.3, 0.1), C64::new(-0.2, 0.4), C64::new(0.7, -0.5)];
        let prod = apply_stencil(&d3, |x: &[C64]| Ok(x[0] * x[1] * x[2]), &base, 1e-2).unwrap();
        assert!((prod.value - C64::new(6.0, 0.0)).norm() < 1e-8);
        let cube = apply_stencil(&d3, |x: &[C64]| Ok(x[0].powi(3) / 6.0), &base, 1e-2).unwrap();
        assert!((cube.value - C64::new(1.0, 0.0)).norm() < 1e-8);
        let d2 = make_stencil(2).unwrap();
        let zero = [C64::new(0.0, 0.0); 2];
        let e = apply_stencil(&d2, |x: &[C64]| Ok((x[0] + x[1]).exp()), &zero, 1e-2).unwrap();
        assert!((e.value - C64::new(3.0, 0.0)).norm() < 1e-8, "{:?}", e.value);
    }

    #[test]
    fn spectral_basis_reproduces_transfer() {
        let c = chain(1.0, 0.5, 3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = spectral_decomposition(&c, 2, &mut rng).unwrap();
        assert!(s.residual < TOL_SPECTRAL_BASIS, "{}", s.residual);
        assert!(s.condition < 1.0 + 1e-8);
    }

    #[test]
    fn vacuum_energy_vanishes_for_long_chains() {
        let c = chain(1.0, 0.5, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = build_hq(&c, 0, &mut rng).unwrap();
        assert!(h.energies[0].abs() < 1e-9, "{}", h.energies[0]);
    }

    #[test]
    fn hq_matches_bethe_energies() {
        let c = chain(1.0, 0.5, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (m, sets) in [(1, vec![vec![-1.0], vec![0.0], vec![1.0]]), (2, vec![vec![-0.5, 0.5], vec![-1.5, 0.5]])] {
            let h = build_hq(&c, m, &mut rng).unwrap();
            assert!(h.hermiticity_report(c.params()).passed());
            assert!(h.commute_report(&c, C64::new(0.4, -0.3)).passed());
            for q in sets {
                let r = crate::bethe::solve_bethe(c.params(), &q).unwrap();
                let rep = check_energy_sum(&c, &h, &r.roots).unwrap();
                assert!(rep.passed(), "{rep:?}");
            }
        }
    }

    #[test]
    fn free_density_n1() {
        // κ = 0: L diagonal, tr(...) ∝ ... and each h_{k,1} = (iΔ/4) in λ; in z
        // the factor −λ² = 4/Δ² gives (iΔ/4)(−ν²)
        let c = chain(0.0, 0.5, 3, 3);
        let h = quantum_local_density(&c, 2, 1, 1, StencilForm::Printed).unwrap();
        let nu = c.params().nu();
        let expect = C64::new(0.0, 0.5 / 4.0) * (-nu * nu);
        for i in 0..h.nrows() {
            assert!((h[(i, i)] - expect).norm() < 1e-12);
        }
    }
}
