use std::collections::BTreeMap;
use std::path::Path;

use lattice_nls::ybe_verify::{excluded_difference, random_pairs, random_point};
use lattice_nls::{bethe, classical, hamiltonian, su2rep, ybe_verify, ModelParams};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Verify,
    Bethe,
    Hamiltonian,
    Classical,
    Sweep,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Verify, Suite::Bethe, Suite::Hamiltonian, Suite::Classical, Suite::Sweep];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Verify => "verify",
            Suite::Bethe => "bethe",
            Suite::Hamiltonian => "hamiltonian",
            Suite::Classical => "classical",
            Suite::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Spectral parameters: the explicit points are used first, then `random`
/// seeded draws from the box `[−2, 2]²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSamples {
    #[serde(with = "lattice_nls::complex_serde::vec")]
    pub explicit: Vec<C64>,
    pub random: usize,
}

impl Default for SpectralSamples {
    fn default() -> Self {
        Self {
            explicit: Vec::new(),
            random: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Field components are drawn uniformly from `[−amplitude, amplitude]`.
    pub amplitude: f64,
    pub t_end: f64,
    pub dt: f64,
    pub fields: usize,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            amplitude: 0.6,
            t_end: 1.0,
            dt: 1e-3,
            fields: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub mu: Vec<f64>,
    pub dispersion_deltas: Vec<f64>,
    pub continuum_deltas: Vec<f64>,
    /// Window length of the sech profile.
    pub length: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mu: vec![0.5, 1.0, 2.0],
            dispersion_deltas: vec![0.4, 0.2, 0.1, 0.05],
            continuum_deltas: vec![0.5, 0.25, 0.125, 0.0625],
            length: 16.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub suite: Suite,
    pub kappa: f64,
    pub delta: f64,
    pub sites: usize,
    pub cutoff: usize,
    pub sectors: Vec<usize>,
    pub samples: SpectralSamples,
    /// Overrides of the per-check defaults, keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
    pub format: Format,
    pub seed: u64,
    pub classical: ClassicalConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            suite: Suite::Verify,
            kappa: 1.0,
            delta: 0.5,
            sites: 3,
            cutoff: 5,
            sectors: vec![0, 1, 2],
            samples: SpectralSamples::default(),
            tolerances: BTreeMap::new(),
            format: Format::Json,
            seed: 0,
            classical: ClassicalConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Check names with their default tolerances.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("rtt", ybe_verify::TOL_RTT),
    ("tau_commute", ybe_verify::TOL_TAU_COMMUTE),
    ("qdet_scalar", ybe_verify::TOL_QDET),
    ("q_intertwine", ybe_verify::TOL_INTERTWINE),
    ("lax_form", ybe_verify::TOL_LAX_FORM),
    ("su2_commutators", su2rep::TOL_COMMUTATOR),
    ("su2_casimir_scalar", su2rep::TOL_CASIMIR_SCALAR),
    ("su2_casimir_value", su2rep::TOL_CASIMIR_VALUE),
    ("su2_casimir_commute", su2rep::TOL_COMMUTATOR),
    ("cl_det", classical::TOL_CL_DET),
    ("r_poisson", classical::TOL_R_POISSON),
    ("bethe_equations", bethe::TOL_BETHE),
    ("bethe_eigenpair", bethe::TOL_EIGENPAIR),
    ("spectrum_match", bethe::TOL_SPECTRUM_MATCH),
    ("hq_hermitian", hamiltonian::TOL_HERMITIAN),
    ("hq_commute", hamiltonian::TOL_HQ_COMMUTE),
    ("energy_sum", hamiltonian::TOL_ENERGY_SUM),
    ("vacuum_energy", 1e-9),
    ("conservation", classical::TOL_CONSERVATION),
    ("hc_grid", 1e-6),
    ("dispersion_halving", 0.5),
    ("hc_continuum", 1.0),
];

pub fn default_tolerance(check: &str) -> Option<f64> {
    DEFAULT_TOLERANCES.iter().find(|(k, _)| *k == check).map(|(_, t)| *t)
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::new(self.kappa, self.delta, self.sites, self.cutoff)?)
    }

    pub fn tolerance(&self, check: &str) -> f64 {
        self.tolerances
            .get(check)
            .copied()
            .or_else(|| default_tolerance(check))
            .unwrap_or(f64::NAN)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.params()?;
        for &m in &self.sectors {
            if m + 2 > p.cutoff {
                return Err(CliError::Config(format!(
                    "sector {m} lies outside the exactness window of cutoff {} (need cutoff ≥ {})",
                    p.cutoff,
                    m + 2
                )));
            }
        }
        for (k, &t) in &self.tolerances {
            if default_tolerance(k).is_none() {
                return Err(CliError::Config(format!("unknown check `{k}` in tolerances")));
            }
            if !(t > 0.0) {
                return Err(CliError::Config(format!("tolerance for `{k}` must be positive, got {t}")));
            }
        }
        if self.samples.explicit.is_empty() && self.samples.random == 0 {
            return Err(CliError::Config("no spectral samples: set samples.random or samples.explicit".into()));
        }
        if self.samples.explicit.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(CliError::Config("spectral samples must be finite".into()));
        }
        let c = &self.classical;
        if !(c.dt > 0.0) || !(c.t_end >= 0.0) || !(c.amplitude >= 0.0) {
            return Err(CliError::Config("classical needs dt > 0, t_end ≥ 0, amplitude ≥ 0".into()));
        }
        let s = &self.sweep;
        if s.dispersion_deltas.iter().chain(&s.continuum_deltas).any(|&d| !(d > 0.0)) || !(s.length > 0.0) {
            return Err(CliError::Config("sweep lattice spacings and length must be positive".into()));
        }
        Ok(())
    }

    /// Explicit points followed by seeded random ones.
    pub fn lambdas<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<C64> {
        let mut out = self.samples.explicit.clone();
        out.extend((0..self.samples.random).map(|_| random_point(rng)));
        out
    }

    /// Consecutive explicit points, then seeded random pairs away from the
    /// R-matrix poles.
    pub fn pairs<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(C64, C64)> {
        let e = &self.samples.explicit;
        let mut out: Vec<(C64, C64)> = e
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|&(l, m)| !excluded_difference(l, m, self.kappa, 1e-6))
            .collect();
        out.extend(random_pairs(rng, self.samples.random, self.kappa));
        out
    }

    /// JSON, or TOML when the file name ends in `.toml`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let cfg = if path.extension().is_some_and(|x| x == "toml") {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        Ok(cfg)
    }
}
