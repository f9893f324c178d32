//! Truncated bosonic Fock spaces and the lattice Bose fields.
//!
//! Each site carries levels `0..d`. The lattice field is `χ = √Δ·b` with `b`
//! the canonical truncated annihilator, so `[χ, χ†] = Δ` holds on every level
//! except the top one. `ρ` is the diagonal operator `√(1 + (κ/4)χ†χ)`.
//!
//! Full-space operators live on the product basis indexed by
//! `Σ_j m_j d^(j-1)` (site 1 least significant). Sector bases list the
//! occupation tuples of fixed total quanta in lexicographic order.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::LatticeOperator;

/// Largest full product space built explicitly.
pub const FULL_SPACE_LIMIT: usize = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub kappa: f64,
    pub delta: f64,
    pub sites: usize,
    pub cutoff: usize,
}

impl ModelParams {
    /// Validated constructor. `kappa = 0` is accepted as the free limit.
    pub fn new(kappa: f64, delta: f64, sites: usize, cutoff: usize) -> Result<Self> {
        let p = Self {
            kappa,
            delta,
            sites,
            cutoff,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "kappa must be finite and non-negative (repulsive), got {}",
                self.kappa
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if self.sites < 1 {
            return Err(Error::InvalidParams("at least one site required".into()));
        }
        if self.cutoff < 2 {
            return Err(Error::InvalidParams(format!(
                "cutoff d must be at least 2, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Projector point ν = −2i/Δ.
    pub fn nu(&self) -> C64 {
        C64::new(0.0, -2.0 / self.delta)
    }

    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        Self { cutoff, ..*self }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        Self { kappa, ..*self }
    }

    pub fn with_sites(&self, sites: usize) -> Self {
        Self { sites, ..*self }
    }

    pub fn full_dim(&self) -> Option<usize> {
        self.cutoff.checked_pow(self.sites as u32)
    }
}

/// A `d×d` matrix on one site together with its particle-number shift.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteOperator {
    pub entries: DMatrix<C64>,
    pub grading: i32,
}

impl SiteOperator {
    pub fn identity(d: usize) -> Self {
        Self {
            entries: DMatrix::identity(d, d),
            grading: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self {
            entries: &self.entries * &other.entries,
            grading: self.grading + other.grading,
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            entries: self.entries.map(|z| z * s),
            grading: self.grading,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grading, other.grading);
        Self {
            entries: &self.entries + &other.entries,
            grading: self.grading,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.grading, other.grading);
        Self {
            entries: &self.entries - &other.entries,
            grading: self.grading,
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
            grading: -self.grading,
        }
    }

    pub fn commutator(&self, other: &Self) -> DMatrix<C64> {
        &self.entries * &other.entries - &other.entries * &self.entries
    }
}

/// The single-site generators χ, χ†, N̂ = χ†χ and ρ.
#[derive(Clone, Debug)]
pub struct SiteOps {
    pub chi: SiteOperator,
    pub chi_dag: SiteOperator,
    pub number: SiteOperator,
    pub rho: SiteOperator,
}

/// χ, χ† and N̂ for the given cutoff and lattice spacing.
pub fn build_site_ops(params: &ModelParams) -> Result<(SiteOperator, SiteOperator, SiteOperator)> {
    params.validate()?;
    let d = params.cutoff;
    let mut chi = DMatrix::zeros(d, d);
    for m in 1..d {
        chi[(m - 1, m)] = C64::new((m as f64 * params.delta).sqrt(), 0.0);
    }
    let chi = SiteOperator {
        entries: chi,
        grading: -1,
    };
    let chi_dag = chi.adjoint();
    let number = SiteOperator {
        entries: DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                C64::new(i as f64 * params.delta, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }),
        grading: 0,
    };
    Ok((chi, chi_dag, number))
}

/// ρ|m⟩ = √(1 + κmΔ/4)|m⟩, so that ρ² = 1 + (κ/4)χ†χ on every level.
pub fn build_rho(params: &ModelParams) -> Result<SiteOperator> {
    params.validate()?;
    let d = params.cutoff;
    let mut rho = DMatrix::zeros(d, d);
    for m in 0..d {
        rho[(m, m)] = C64::new((1.0 + params.kappa * m as f64 * params.delta / 4.0).sqrt(), 0.0);
    }
    Ok(SiteOperator {
        entries: rho,
        grading: 0,
    })
}

impl SiteOps {
    pub fn new(params: &ModelParams) -> Result<Self> {
        let (chi, chi_dag, number) = build_site_ops(params)?;
        let rho = build_rho(params)?;
        Ok(Self {
            chi,
            chi_dag,
            number,
            rho,
        })
    }
}

/// Occupation tuples of fixed total quanta, lexicographically ordered.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorBasis {
    quanta: usize,
    states: Vec<Vec<usize>>,
    full: Vec<usize>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl SectorBasis {
    fn from_states(quanta: usize, cutoff: usize, states: Vec<Vec<usize>>) -> Self {
        let full = states
            .iter()
            .map(|s| {
                s.iter()
                    .rev()
                    .fold(0usize, |acc, &m| acc * cutoff + m)
            })
            .collect();
        let lookup = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Self {
            quanta,
            states,
            full,
            lookup,
        }
    }

    pub fn quanta(&self) -> usize {
        self.quanta
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    /// Indices of the basis states in the full product basis.
    pub fn full_indices(&self) -> &[usize] {
        &self.full
    }

    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        self.lookup.get(occupation).copied()
    }
}

/// All occupation tuples `(m_1..m_N)` with `Σ m_j = quanta`, `m_j < d`.
pub fn sector_basis(params: &ModelParams, quanta: usize) -> SectorBasis {
    fn fill(
        prefix: &mut Vec<usize>,
        remaining: usize,
        sites_left: usize,
        d: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        if sites_left == 0 {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if remaining > sites_left * (d - 1) {
            return;
        }
        for m in 0..d.min(remaining + 1) {
            prefix.push(m);
            fill(prefix, remaining - m, sites_left - 1, d, out);
            prefix.pop();
        }
    }
    let mut states = Vec::new();
    fill(
        &mut Vec::with_capacity(params.sites),
        quanta,
        params.sites,
        params.cutoff,
        &mut states,
    );
    SectorBasis::from_states(quanta, params.cutoff, states)
}

/// The full truncated product space with sector bookkeeping and the
/// single-site generators.
#[derive(Clone, Debug)]
pub struct FockLattice {
    params: ModelParams,
    dim: usize,
    sector_of: Vec<usize>,
    position_of: Vec<usize>,
    sectors: Vec<SectorBasis>,
    site_ops: SiteOps,
}

impl FockLattice {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let dim = params
            .full_dim()
            .filter(|&n| n <= FULL_SPACE_LIMIT)
            .ok_or(Error::SpaceTooLarge {
                dim: params.full_dim().unwrap_or(usize::MAX),
                limit: FULL_SPACE_LIMIT,
            })?;
        let max_quanta = params.sites * (params.cutoff - 1);
        let sectors: Vec<SectorBasis> = (0..=max_quanta).map(|m| sector_basis(params, m)).collect();
        let mut sector_of = vec![0; dim];
        let mut position_of = vec![0; dim];
        for (m, basis) in sectors.iter().enumerate() {
            for (pos, &full) in basis.full_indices().iter().enumerate() {
                sector_of[full] = m;
                position_of[full] = pos;
            }
        }
        Ok(Self {
            params: *params,
            dim,
            sector_of,
            position_of,
            sectors,
            site_ops: SiteOps::new(params)?,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_quanta(&self) -> usize {
        self.sectors.len() - 1
    }

    pub fn site_ops(&self) -> &SiteOps {
        &self.site_ops
    }

    /// Sector basis for `quanta`; an empty basis beyond the largest sector.
    pub fn sector(&self, quanta: usize) -> &SectorBasis {
        static EMPTY: std::sync::OnceLock<SectorBasis> = std::sync::OnceLock::new();
        self.sectors.get(quanta).unwrap_or_else(|| {
            EMPTY.get_or_init(|| SectorBasis::from_states(usize::MAX, 2, Vec::new()))
        })
    }

    pub fn sector_of(&self, full: usize) -> usize {
        self.sector_of[full]
    }

    pub fn position_of(&self, full: usize) -> usize {
        self.position_of[full]
    }

    /// Occupation digit of `site` (0-based) in the full index.
    pub fn occupation(&self, full: usize, site: usize) -> usize {
        (full / self.params.cutoff.pow(site as u32)) % self.params.cutoff
    }

    /// Embeds a site operator at 1-based `site`, identity elsewhere.
    pub fn embed(&self, op: &SiteOperator, site: usize) -> Result<LatticeOperator> {
        if site == 0 || site > self.params.sites {
            return Err(Error::SiteOutOfRange {
                site,
                sites: self.params.sites,
            });
        }
        let d = self.params.cutoff;
        assert_eq!(op.dim(), d, "site operator dimension must equal the cutoff");
        let stride = d.pow(site as u32 - 1);
        let mut triplets = Vec::new();
        for col in 0..self.dim {
            let m = (col / stride) % d;
            for r in 0..d {
                let v = op.entries[(r, m)];
                if v != C64::new(0.0, 0.0) {
                    let row = col - m * stride + r * stride;
                    triplets.push((row, col, v));
                }
            }
        }
        Ok(LatticeOperator::from_triplets(self.dim, op.grading, triplets))
    }

    /// Σ_j embed(N̂, j).
    pub fn total_number(&self) -> LatticeOperator {
        (1..=self.params.sites).fold(LatticeOperator::zero(self.dim, 0), |acc, j| {
            acc.add(&self.embed(&self.site_ops.number, j).expect("site in range"))
        })
    }

    /// Lexicographic index of the vacuum in sector 0 is always 0.
    pub fn vacuum(&self) -> nalgebra::DVector<C64> {
        nalgebra::DVector::from_element(1, C64::new(1.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kappa: f64, delta: f64, sites: usize, cutoff: usize) -> ModelParams {
        ModelParams::new(kappa, delta, sites, cutoff).unwrap()
    }

    #[test]
    fn oscillator_elements() {
        let (chi, _, _) = build_site_ops(&params(1.0, 1.0, 1, 3)).unwrap();
        assert!((chi.entries[(0, 1)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((chi.entries[(1, 2)] - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);
        assert_eq!(chi.grading, -1);
    }

    #[test]
    fn canonical_commutator_below_top_levels() {
        let p = params(1.0, 0.5, 1, 4);
        let (chi, chi_dag, _) = build_site_ops(&p).unwrap();
        let comm = chi.commutator(&chi_dag);
        // independent oracle: plain index arithmetic on the oscillator ladder
        for m in 0..3 {
            assert!((comm[(m, m)] - C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(comm[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn annihilator_kills_vacuum() {
        for d in 2..7 {
            let (chi, _, number) = build_site_ops(&params(1.0, 0.7, 1, d)).unwrap();
            assert!(chi.entries.column(0).iter().all(|z| z.norm() == 0.0));
            assert!((number.entries[(d - 1, d - 1)].re - (d - 1) as f64 * 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_small_cutoff() {
        assert!(ModelParams::new(1.0, 1.0, 2, 1).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 2, 3).is_err());
        assert!(ModelParams::new(1.0, 0.0, 2, 3).is_err());
    }

    #[test]
    fn rho_defining_relation() {
        let p = params(1.0, 1.0, 1, 6);
        let rho = build_rho(&p).unwrap();
        assert!((rho.entries[(4, 4)].re - 2f64.sqrt()).abs() < 1e-15);
        let (chi, chi_dag, _) = build_site_ops(&p).unwrap();
        let lhs = &rho.entries * &rho.entries;
        let rhs = DMatrix::<C64>::identity(6, 6) + (&chi_dag.entries * &chi.entries).map(|z| z * 0.25);
        assert!((lhs - rhs).norm() < 1e-14);
        let free = build_rho(&p.with_kappa(0.0)).unwrap();
        assert_eq!(free.entries, DMatrix::identity(6, 6));
    }

    #[test]
    fn sector_enumeration() {
        let p = params(1.0, 1.0, 2, 3);
        let b = sector_basis(&p, 1);
        assert_eq!(b.states(), &[vec![0, 1], vec![1, 0]]);
        let p3 = params(1.0, 1.0, 3, 3);
        assert_eq!(sector_basis(&p3, 2).len(), 6);
        assert_eq!(sector_basis(&p3, 0).states(), &[vec![0, 0, 0]]);
        assert!(sector_basis(&p3, 7).is_empty());
    }

    #[test]
    fn embedding_properties() {
        let p = params(1.0, 0.5, 3, 3);
        let lat = FockLattice::new(&p).unwrap();
        let id = lat.embed(&SiteOperator::identity(3), 2).unwrap();
        assert_eq!(id, LatticeOperator::identity(lat.dim()));
        let a = lat.embed(&lat.site_ops().chi, 1).unwrap();
        let b = lat.embed(&lat.site_ops().chi_dag, 3).unwrap();
        assert!(a.commutator(&b).is_zero());
        assert!(lat.embed(&lat.site_ops().chi, 4).is_err());
        let n = lat.total_number();
        for m in 0..=lat.max_quanta() {
            let block = n.restrict(&lat, m);
            let expect = DMatrix::<C64>::identity(block.nrows(), block.ncols()).map(|z| z * (m as f64 * 0.5));
            assert!((block - expect).norm() < 1e-13);
        }
        assert_eq!(a.grading_leak(&lat), 0.0);
        assert_eq!(a.grading(), -1);
    }

    #[test]
    fn full_space_guard() {
        let p = params(1.0, 1.0, 8, 4);
        assert!(matches!(FockLattice::new(&p), Err(Error::SpaceTooLarge { .. })));
    }
}
