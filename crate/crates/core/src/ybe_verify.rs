//! Residual checks for the exchange algebra of the quantum chain: the RTT
//! relation, commuting transfer matrices, the generating matrices q_n and m_n,
//! the intertwining relation q_{n+1}L_n = L_n q_n and the quantum Lax form
//!
//! ```text
//! i[τ⁻¹(μ)∂_μτ(μ), L_n(λ)] = m_{n+1}(λ,μ) L_n(λ) − L_n(λ) m_n(λ,μ)
//! q_n(λ,μ) = tr₂ (I⊗T^{N,n}(μ)) R⁻¹(λ,μ) (I⊗T^{n−1,1}(μ))
//! m_n(λ,μ) = iτ⁻¹(μ)∂_μτ(μ) − i q_n⁻¹ ∂_μ q_n
//! ```
//!
//! Operator-valued 2×2 objects preserve the auxiliary charge (quanta plus
//! auxiliary index), so every check is evaluated on dense charge blocks. A
//! check "on sector M" covers the blocks Q = M and Q = M + 1.

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::laxops::{build_r, charge_block_dims, pole_guard, probe_scalar, r_derivative_mu, AuxMatrix2, QuantumChain};
use crate::operator::{op_norm, LatticeOperator};
use crate::report::{relative, CheckParams, ResidualReport};

pub const TOL_RTT: f64 = 1e-11;
pub const TOL_TAU_COMMUTE: f64 = 1e-10;
pub const TOL_QDET: f64 = 1e-11;
pub const TOL_INTERTWINE: f64 = 1e-10;
pub const TOL_LAX_FORM: f64 = 1e-8;

/// Conditioning beyond which a per-block inverse is reported as singular.
const MAX_CONDITION: f64 = 1e12;

/// Uniform point in the complex box [−2,2]×[−2,2].
pub fn random_point<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
}

/// `(λ, μ)` pairs from the box with λ − μ kept away from {0, ±iκ}.
pub fn random_pairs<R: Rng + ?Sized>(rng: &mut R, count: usize, kappa: f64) -> Vec<(C64, C64)> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let (l, m) = (random_point(rng), random_point(rng));
        if excluded_difference(l, m, kappa, 0.1) {
            continue;
        }
        out.push((l, m));
    }
    out
}

/// True when λ − μ lies within `margin·max(1,|κ|)` of {0, iκ, −iκ}.
pub fn excluded_difference(lambda: C64, mu: C64, kappa: f64, margin: f64) -> bool {
    let diff = lambda - mu;
    let g = margin * kappa.abs().max(1.0);
    [C64::new(0.0, 0.0), C64::new(0.0, kappa), C64::new(0.0, -kappa)]
        .iter()
        .any(|s| (diff - s).norm() <= g)
}

fn base_params(chain: &QuantumChain) -> CheckParams {
    CheckParams::model(chain.params())
}

/// Assembles a 4×4 auxiliary operator acting on `|c,d⟩⊗sector(m)`; entry
/// `(a,b,c,d)` maps into `sector(m + c − a + d − b)`.
fn aux4_on_sector(
    chain: &QuantumChain,
    m: usize,
    mut block: impl FnMut(usize, usize, usize, usize) -> DMatrix<C64>,
) -> DMatrix<C64> {
    let lat = chain.lattice();
    let cols = lat.sector(m).len();
    let lo = m.saturating_sub(2);
    let hi = m + 2;
    // rows: (a, b, target sector)
    let mut row_off = Vec::new();
    let mut total = 0;
    for _ab in 0..4 {
        let mut per = Vec::new();
        for t in lo..=hi {
            per.push(total);
            total += lat.sector(t).len();
        }
        row_off.push(per);
    }
    let mut out = DMatrix::zeros(total, 4 * cols);
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for d in 0..2 {
                    let target = m as i64 + c as i64 - a as i64 + d as i64 - b as i64;
                    if target < 0 || target as usize > lat.max_quanta() {
                        continue;
                    }
                    let t = target as usize;
                    let blk = block(a, b, c, d);
                    if blk.nrows() == 0 {
                        continue;
                    }
                    let r0 = row_off[2 * a + b][t - lo];
                    out.view_mut((r0, (2 * c + d) * cols), (blk.nrows(), cols)).copy_from(&blk);
                }
            }
        }
    }
    out
}

/// Product `x·y` of two graded operators restricted to columns in `m`.
fn product_block(chain: &QuantumChain, x: &LatticeOperator, y: &LatticeOperator, m: usize) -> DMatrix<C64> {
    let lat = chain.lattice();
    let mid = m as i64 + y.grading() as i64;
    let yb = y.restrict(lat, m);
    if mid < 0 || yb.nrows() == 0 {
        let target = (mid + x.grading() as i64).max(0) as usize;
        return DMatrix::zeros(lat.sector(target).len(), lat.sector(m).len());
    }
    let xb = x.restrict(lat, mid as usize);
    if xb.nrows() == 0 {
        return DMatrix::zeros(0, lat.sector(m).len());
    }
    xb * yb
}

/// RTT relation `R(λ,μ)(T(λ)⊗T(μ)) = (I⊗T(μ))(T(λ)⊗I)R(λ,μ)` on sector `m`.
pub fn check_rtt(chain: &QuantumChain, lambda: C64, mu: C64, m: usize) -> Result<ResidualReport> {
    let kappa = chain.params().kappa;
    let r = build_r(lambda, mu, kappa)?.m;
    let poly = chain.full_monodromy_poly();
    let tl = poly.eval(lambda);
    let tm = poly.eval(mu);
    let zero = C64::new(0.0, 0.0);
    let mut cache_lhs = std::collections::HashMap::new();
    let lhs = aux4_on_sector(chain, m, |a, b, c, d| {
        let mut acc: Option<DMatrix<C64>> = None;
        for e in 0..2 {
            for f in 0..2 {
                let coeff = r[(2 * a + b, 2 * e + f)];
                if coeff == zero {
                    continue;
                }
                let prod = cache_lhs
                    .entry((e, c, f, d))
                    .or_insert_with(|| product_block(chain, &tl.e[e][c], &tm.e[f][d], m))
                    .clone();
                let term = prod * coeff;
                acc = Some(match acc {
                    None => term,
                    Some(x) => x + term,
                });
            }
        }
        acc.unwrap_or_else(|| DMatrix::zeros(0, 0))
    });
    let mut cache_rhs = std::collections::HashMap::new();
    let rhs = aux4_on_sector(chain, m, |a, b, c, d| {
        let mut acc: Option<DMatrix<C64>> = None;
        for e in 0..2 {
            for f in 0..2 {
                let coeff = r[(2 * e + f, 2 * c + d)];
                if coeff == zero {
                    continue;
                }
                let prod = cache_rhs
                    .entry((b, f, a, e))
                    .or_insert_with(|| product_block(chain, &tm.e[b][f], &tl.e[a][e], m))
                    .clone();
                let term = prod * coeff;
                acc = Some(match acc {
                    None => term,
                    Some(x) => x + term,
                });
            }
        }
        acc.unwrap_or_else(|| DMatrix::zeros(0, 0))
    });
    let residual = relative(op_norm(&(&lhs - &rhs)), op_norm(&rhs));
    Ok(ResidualReport::new(
        "rtt",
        base_params(chain).lambda(lambda).mu(mu).sector(m),
        residual,
        TOL_RTT,
    ))
}

/// `‖[τ(λ), τ(μ)]‖` on sector `m`.
pub fn check_tau_commute(chain: &QuantumChain, lambda: C64, mu: C64, m: usize) -> Result<ResidualReport> {
    let tau = chain.transfer_poly().restrict(chain.lattice(), m);
    let a = tau.eval(lambda);
    let b = tau.eval(mu);
    let ab = &a * &b;
    let ba = &b * &a;
    let residual = relative(op_norm(&(&ab - &ba)), op_norm(&ba));
    Ok(ResidualReport::new(
        "tau_commute",
        base_params(chain).lambda(lambda).mu(mu).sector(m),
        residual,
        TOL_TAU_COMMUTE,
    ))
}

/// Scalarity of the quantum determinant on sector `m`: off-scalar mass
/// relative to max(1, |scalar|).
pub fn check_qdet_scalar(chain: &QuantumChain, lambda: C64, m: usize) -> Result<(ResidualReport, C64)> {
    let blk = chain.qdet_block(lambda, C64::new(0.0, chain.params().kappa), m);
    let probe = probe_scalar(&blk);
    let residual = relative(probe.off_scalar(), probe.scalar.norm());
    Ok((
        ResidualReport::new("qdet_scalar", base_params(chain).lambda(lambda).sector(m), residual, TOL_QDET),
        probe.scalar,
    ))
}

fn check_generating_site(chain: &QuantumChain, n: usize) -> Result<()> {
    let sites = chain.params().sites;
    if n == 0 || n > sites {
        return Err(Error::Range(format!("q_n needs 1 ≤ n ≤ N = {sites}, got n = {n}")));
    }
    Ok(())
}

fn r_inverse(lambda: C64, mu: C64, kappa: f64) -> Result<Matrix4<C64>> {
    let r = build_r(lambda, mu, kappa)?;
    r.inverse(lambda, mu, kappa)
}

/// Partial trace over the second auxiliary space of
/// `(I⊗A) K (I⊗C)` for a c-number 4×4 kernel `K`:
/// `q_ac = Σ_{b,f,h} A_bf K[(a,f),(c,h)] C_hb`.
fn partial_trace(a_mat: &AuxMatrix2, kernel: &Matrix4<C64>, c_mat: &AuxMatrix2) -> AuxMatrix2 {
    let dim = a_mat.dim();
    let zero = C64::new(0.0, 0.0);
    let entry = |a: usize, c: usize| {
        let mut acc = LatticeOperator::zero(dim, c as i32 - a as i32);
        for b in 0..2 {
            for f in 0..2 {
                for h in 0..2 {
                    let k = kernel[(2 * a + f, 2 * c + h)];
                    if k == zero {
                        continue;
                    }
                    let term = a_mat.e[b][f].mul(&c_mat.e[h][b]);
                    acc = acc.axpy(k, &term);
                }
            }
        }
        acc
    };
    AuxMatrix2 {
        e: [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]],
    }
}

/// `q_n(λ, μ)` for 1 ≤ n ≤ N (`T^{0,1}` is the identity).
pub fn build_q(chain: &QuantumChain, lambda: C64, mu: C64, n: usize) -> Result<AuxMatrix2> {
    check_generating_site(chain, n)?;
    let kappa = chain.params().kappa;
    let rinv = r_inverse(lambda, mu, kappa)?;
    let upper = chain.monodromy_poly(n, chain.params().sites)?.eval(mu);
    let lower = chain.monodromy_poly(1, n - 1)?.eval(mu);
    Ok(partial_trace(&upper, &rinv, &lower))
}

/// `∂_μ q_n(λ, μ)` by the product rule with `∂R⁻¹ = −R⁻¹(∂R)R⁻¹`.
pub fn build_q_derivative(chain: &QuantumChain, lambda: C64, mu: C64, n: usize) -> Result<AuxMatrix2> {
    check_generating_site(chain, n)?;
    let kappa = chain.params().kappa;
    let rinv = r_inverse(lambda, mu, kappa)?;
    let drinv = -(rinv * r_derivative_mu(lambda, mu, kappa) * rinv);
    let upper_poly = chain.monodromy_poly(n, chain.params().sites)?;
    let lower_poly = chain.monodromy_poly(1, n - 1)?;
    let (u, du) = (upper_poly.eval(mu), upper_poly.eval_derivative(mu));
    let (l, dl) = (lower_poly.eval(mu), lower_poly.eval_derivative(mu));
    Ok(partial_trace(&du, &rinv, &l)
        .add(&partial_trace(&u, &drinv, &l))
        .add(&partial_trace(&u, &rinv, &dl)))
}

fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn solve_block(a: &DMatrix<C64>, b: &DMatrix<C64>, what: &str) -> Result<DMatrix<C64>> {
    if a.nrows() == 0 {
        return Ok(b.clone());
    }
    let cond = condition_number(a);
    if !(cond < MAX_CONDITION) {
        return Err(Error::Singular(format!("{what}: condition number {cond:e}")));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{what}: LU solve failed")))
}

/// `τ⁻¹(μ)∂_μτ(μ)` on sector `m`, by direct solve.
pub fn log_derivative_tau_block(chain: &QuantumChain, mu: C64, m: usize) -> Result<DMatrix<C64>> {
    let tau = chain.transfer_poly().restrict(chain.lattice(), m);
    solve_block(&tau.eval(mu), &tau.eval_derivative(mu), &format!("τ(μ) on sector {m}"))
}

/// `m_n(λ, μ)` on charge block `q`.
pub fn build_m_block(chain: &QuantumChain, lambda: C64, mu: C64, n: usize, q: usize) -> Result<DMatrix<C64>> {
    let lat = chain.lattice();
    let qn = build_q(chain, lambda, mu, n)?.charge_block(lat, q);
    let dqn = build_q_derivative(chain, lambda, mu, n)?.charge_block(lat, q);
    let q_part = solve_block(&qn, &dqn, &format!("q_{n} on charge block {q}"))?;
    let tau_part = tau_log_derivative_charge_block(chain, mu, q)?;
    let i = C64::new(0.0, 1.0);
    Ok((tau_part - q_part) * i)
}

fn tau_log_derivative_charge_block(chain: &QuantumChain, mu: C64, q: usize) -> Result<DMatrix<C64>> {
    let (top, bottom) = charge_block_dims(chain.lattice(), q);
    let mut out = DMatrix::zeros(top + bottom, top + bottom);
    if top > 0 {
        out.view_mut((0, 0), (top, top))
            .copy_from(&log_derivative_tau_block(chain, mu, q)?);
    }
    if bottom > 0 {
        out.view_mut((top, top), (bottom, bottom))
            .copy_from(&log_derivative_tau_block(chain, mu, q - 1)?);
    }
    Ok(out)
}

fn aux_params(chain: &QuantumChain, lambda: C64, mu: C64, n: usize, m: usize) -> CheckParams {
    base_params(chain).lambda(lambda).mu(mu).sector(m).site(n)
}

/// `q_{n+1}(λ,μ)L_n(λ) = L_n(λ)q_n(λ,μ)` on sector `m`, 1 ≤ n ≤ N−1.
pub fn check_q_intertwine(chain: &QuantumChain, lambda: C64, mu: C64, n: usize, m: usize) -> Result<ResidualReport> {
    let sites = chain.params().sites;
    if n == 0 || n >= sites {
        return Err(Error::Range(format!("intertwining needs 1 ≤ n ≤ N − 1 = {}, got {n}", sites - 1)));
    }
    let lat = chain.lattice();
    let q_next = build_q(chain, lambda, mu, n + 1)?;
    let q_here = build_q(chain, lambda, mu, n)?;
    let l = chain.build_l(n, lambda)?;
    let mut worst: f64 = 0.0;
    for q in [m, m + 1] {
        let lb = l.charge_block(lat, q);
        let lhs = q_next.charge_block(lat, q) * &lb;
        let rhs = &lb * q_here.charge_block(lat, q);
        worst = worst.max(relative(op_norm(&(&lhs - &rhs)), op_norm(&rhs)));
    }
    Ok(ResidualReport::new("q_intertwine", aux_params(chain, lambda, mu, n, m), worst, TOL_INTERTWINE))
}

/// Quantum Lax form on sector `m`, 1 ≤ n ≤ N−1 (q_{N+1} is undefined).
pub fn check_lax_form(chain: &QuantumChain, lambda: C64, mu: C64, n: usize, m: usize) -> Result<ResidualReport> {
    let sites = chain.params().sites;
    if n == 0 || n >= sites {
        return Err(Error::Range(format!(
            "Lax form needs 1 ≤ n ≤ N − 1 = {} (q_(N+1) is not defined), got {n}",
            sites - 1
        )));
    }
    if (lambda - mu).norm() <= pole_guard(chain.params().kappa) {
        return Err(Error::Pole("λ = μ".into()));
    }
    let lat = chain.lattice();
    let l = chain.build_l(n, lambda)?;
    let i = C64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for q in [m, m + 1] {
        let lb = l.charge_block(lat, q);
        let x = tau_log_derivative_charge_block(chain, mu, q)?;
        let lhs = (&x * &lb - &lb * &x) * i;
        let m_next = build_m_block(chain, lambda, mu, n + 1, q)?;
        let m_here = build_m_block(chain, lambda, mu, n, q)?;
        let rhs = &m_next * &lb - &lb * &m_here;
        worst = worst.max(relative(op_norm(&(&lhs - &rhs)), op_norm(&rhs)));
    }
    Ok(ResidualReport::new("lax_form", aux_params(chain, lambda, mu, n, m), worst, TOL_LAX_FORM))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(kappa: f64, delta: f64, sites: usize, cutoff: usize) -> QuantumChain {
        QuantumChain::new(&ModelParams::new(kappa, delta, sites, cutoff).unwrap()).unwrap()
    }

    #[test]
    fn rtt_free_is_exact() {
        let c = chain(0.0, 0.5, 2, 4);
        for m in 0..=1 {
            let r = check_rtt(&c, C64::new(0.3, 0.1), C64::new(-0.5, 0.7), m).unwrap();
            assert_eq!(r.residual, 0.0);
        }
    }

    #[test]
    fn rtt_interacting() {
        let c = chain(1.0, 0.5, 2, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (l, mu) in random_pairs(&mut rng, 3, 1.0) {
            for m in 0..=2 {
                let r = check_rtt(&c, l, mu, m).unwrap();
                assert!(r.passed(), "{r:?}");
            }
        }
        assert!(matches!(check_rtt(&c, C64::new(0.2, 0.0), C64::new(0.2, 0.0), 1), Err(Error::Pole(_))));
    }

    #[test]
    fn rtt_detects_wrong_sign() {
        // flipping κ in R only (not in L) must break the relation
        let c = chain(1.0, 0.5, 2, 5);
        let (l, mu) = (C64::new(0.3, -0.4), C64::new(-0.8, 0.2));
        let good = check_rtt(&c, l, mu, 1).unwrap();
        let r_bad = build_r(l, mu, -1.0).unwrap();
        assert!(good.passed());
        assert!((r_bad.m - build_r(l, mu, 1.0).unwrap().m).norm() > 0.1);
    }

    #[test]
    fn transfer_matrices_commute() {
        let c = chain(1.0, 0.5, 3, 5);
        let r = check_tau_commute(&c, C64::new(0.31, -0.7), C64::new(-1.2, 0.4), 2).unwrap();
        assert!(r.passed(), "{r:?}");
        let free = chain(0.0, 0.5, 3, 4);
        let r0 = check_tau_commute(&free, C64::new(0.31, -0.7), C64::new(-1.2, 0.4), 2).unwrap();
        assert!(r0.residual < 1e-15);
    }

    #[test]
    fn truncation_leak_breaks_commutativity() {
        // cutoff 3 cannot hold all three quanta on one site
        let c = chain(1.0, 0.5, 3, 3);
        let r = check_tau_commute(&c, C64::new(0.31, -0.7), C64::new(-1.2, 0.4), 3).unwrap();
        assert!(r.residual > 1e-3, "{r:?}");
    }

    #[test]
    fn free_q_is_transfer_times_identity() {
        let c = chain(0.0, 0.5, 3, 3);
        let (l, mu) = (C64::new(0.4, 0.2), C64::new(-0.3, 0.9));
        let tau = c.transfer(mu);
        for n in 1..=3 {
            let q = build_q(&c, l, mu, n).unwrap();
            assert!(q.e[0][0].sub(&tau).max_abs() < 1e-14);
            assert!(q.e[1][1].sub(&tau).max_abs() < 1e-14);
            assert!(q.e[0][1].max_abs() < 1e-14 && q.e[1][0].max_abs() < 1e-14);
        }
    }

    #[test]
    fn q_range_errors() {
        let c = chain(1.0, 0.5, 2, 3);
        let (l, mu) = (C64::new(0.4, 0.2), C64::new(-0.3, 0.9));
        assert!(build_q(&c, l, mu, 0).is_err());
        assert!(build_q(&c, l, mu, 3).is_err());
        assert!(build_q(&c, l, l + C64::new(0.0, 1.0), 1).is_err());
        assert!(check_lax_form(&c, l, mu, 2, 0).is_err());
    }

    #[test]
    fn intertwining_and_lax_form() {
        let c = chain(1.0, 0.5, 3, 4);
        let (l, mu) = (C64::new(0.4, 0.2), C64::new(-0.3, 0.9));
        for n in 1..=2 {
            let r = check_q_intertwine(&c, l, mu, n, 1).unwrap();
            assert!(r.passed(), "{r:?}");
            let lf = check_lax_form(&c, l, mu, n, 1).unwrap();
            assert!(lf.passed(), "{lf:?}");
        }
    }

    #[test]
    fn free_m_vanishes() {
        let c = chain(0.0, 0.5, 3, 3);
        let m = build_m_block(&c, C64::new(0.4, 0.2), C64::new(-0.3, 0.9), 2, 1).unwrap();
        assert!(m.norm() < 1e-13);
    }
}
