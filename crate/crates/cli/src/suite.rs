use lattice_nls::bethe::{self, crosscheck_spectrum, solve_bethe, verify_eigenpair};
use lattice_nls::classical::{self, ClassicalField, ClassicalModel};
use lattice_nls::hamiltonian::{self, StencilForm};
use lattice_nls::laxops::fit_qdet;
use lattice_nls::su2rep::{self, verify_representation};
use lattice_nls::ybe_verify;
use lattice_nls::{CheckParams, ModelParams, QuantumChain, ResidualReport};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, Suite};
use crate::report::Report;
use crate::CliError;

/// Runs one suite. Only an invalid configuration is an `Err`; anything that
/// goes wrong inside a check is recorded as that check's error.
pub fn run_suite(config: &RunConfig) -> Result<Report, CliError> {
    config.validate()?;
    let params = config.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = Report::new(config.clone());
    match config.suite {
        Suite::Verify => verify(config, &params, &mut rng, &mut report),
        Suite::Bethe => bethe_suite(config, &params, &mut rng, &mut report),
        Suite::Hamiltonian => hamiltonian_suite(config, &params, &mut rng, &mut report),
        Suite::Classical => classical_suite(config, &params, &mut rng, &mut report),
        Suite::Sweep => sweep(config, &mut report),
    }
    report.finish();
    Ok(report)
}

fn record(report: &mut Report, name: &str, params: CheckParams, run: impl FnOnce() -> lattice_nls::Result<ResidualReport>) {
    let tol = report.config.tolerance(name);
    match run() {
        Ok(r) => report.push(r),
        Err(e) => report.push(ResidualReport::error(name, params, tol, e.to_string())),
    }
}

fn chain_or_error(report: &mut Report, params: &ModelParams, names: &[&str]) -> Option<QuantumChain> {
    match QuantumChain::new(params) {
        Ok(c) => Some(c),
        Err(e) => {
            for n in names {
                let tol = report.config.tolerance(n);
                report.push(ResidualReport::error(*n, CheckParams::model(params), tol, e.to_string()));
            }
            None
        }
    }
}

#[derive(Serialize)]
struct Complex {
    re: f64,
    im: f64,
}

fn cx(z: C64) -> Complex {
    Complex { re: z.re, im: z.im }
}

fn verify(config: &RunConfig, params: &ModelParams, rng: &mut ChaCha8Rng, report: &mut Report) {
    let pairs = config.pairs(rng);
    let lambdas = config.lambdas(rng);
    let cp = CheckParams::model(params);
    report.assume("R(λ,μ) = I − iκΠ/(λ−μ) with R (T(λ)⊗T(μ)) = (I⊗T(μ))(T(λ)⊗I) R");
    report.assume("quantum determinant T11(λ)T22(λ+iκ) − T12(λ)T21(λ+iκ); aux-space checks run on the charge blocks Q = M, M+1");
    if let Some(chain) = chain_or_error(
        report,
        params,
        &["rtt", "tau_commute", "qdet_scalar", "q_intertwine", "lax_form"],
    ) {
        for &m in &config.sectors {
            let scp = cp.clone().sector(m);
            for &(l, mu) in &pairs {
                record(report, "rtt", scp.clone().lambda(l).mu(mu), || ybe_verify::check_rtt(&chain, l, mu, m));
                record(report, "tau_commute", scp.clone().lambda(l).mu(mu), || {
                    ybe_verify::check_tau_commute(&chain, l, mu, m)
                });
            }
            for &l in &lambdas {
                record(report, "qdet_scalar", scp.clone().lambda(l), || {
                    ybe_verify::check_qdet_scalar(&chain, l, m).map(|(r, _)| r)
                });
            }
            for n in 1..params.sites {
                for &(l, mu) in &pairs {
                    let np = scp.clone().site(n).lambda(l).mu(mu);
                    record(report, "q_intertwine", np.clone(), || {
                        ybe_verify::check_q_intertwine(&chain, l, mu, n, m)
                    });
                    record(report, "lax_form", np, || ybe_verify::check_lax_form(&chain, l, mu, n, m));
                }
            }
        }
    }
    // five points from the box for the quadratic fit of the one-site determinant
    let fit_points: Vec<C64> = (0..5).map(|_| ybe_verify::random_point(rng)).collect();
    match fit_qdet(params, 0, &fit_points) {
        Ok(fit) => {
            report.scalar("qdet.coefficients", fit.coeffs.iter().map(|&z| cx(z)).collect::<Vec<_>>());
            report.scalar("qdet.value_at_nu", cx(fit.value_at_nu));
            report.scalar("qdet.printed_form_mismatch", fit.printed_mismatch);
            report.scalar("qdet.mirrored_form_mismatch", fit.mirrored_mismatch);
            report.scalar("qdet.fit_residual", fit.fit_residual);
        }
        Err(e) => report.warn(format!("quantum determinant fit failed: {e}")),
    }

    if params.kappa < su2rep::MIN_KAPPA {
        report.assume("su(2) checks skipped: the rescaling 2/(κΔ) needs κ ≥ 1e-8");
    } else {
        match verify_representation(params) {
            Ok(v) => {
                for r in v.reports() {
                    report.push(r);
                }
                report.scalar("su2.spin", v.spin);
                report.scalar("su2.casimir", v.casimir);
                report.scalar("su2.matching", &v.matching);
            }
            Err(e) => {
                for n in ["su2_commutators", "su2_casimir_scalar", "su2_casimir_value", "su2_casimir_commute"] {
                    let tol = report.config.tolerance(n);
                    report.push(ResidualReport::error(n, cp.clone(), tol, e.to_string()));
                }
            }
        }
    }

    let model = ClassicalModel::from_params(params);
    for _ in 0..config.classical.fields {
        let field = ClassicalField::random(rng, params.sites, config.classical.amplitude);
        for &l in lambdas.iter().take(2) {
            report.push(classical::check_cl_det(&model, &field, l));
        }
    }
    let field = ClassicalField::random(rng, params.sites, config.classical.amplitude);
    for &(l, mu) in pairs.iter().take(2) {
        record(report, "r_poisson", cp.clone().lambda(l).mu(mu), || {
            classical::check_r_poisson(&model, &field, l, mu)
        });
    }
    report.assume("classical bracket {χ, χ̄} = iΔ and {T(λ)⊗,T(μ)} = [T(λ)⊗T(μ), κΠ/(λ−μ)]");
}

#[derive(Serialize)]
struct BetheScalar {
    quantum_numbers: Vec<f64>,
    roots: Vec<Complex>,
    energy: Option<f64>,
    bethe_value: Complex,
    principal_window: bool,
}

fn bethe_suite(config: &RunConfig, params: &ModelParams, rng: &mut ChaCha8Rng, report: &mut Report) {
    report.assume("log Bethe equations 2N atan(λΔ/2) + Σ 2atan((λj−λk)/κ) = 2πI_j, Newton in θ = atan(λΔ/2)");
    report.assume("quantum numbers |I| < (N+n−1)/2; eigenvectors with a root at λ = ∞ are not produced");
    let names = ["bethe_equations", "bethe_eigenpair", "spectrum_match"];
    let Some(chain) = chain_or_error(report, params, &names) else { return };
    let lambdas = config.lambdas(rng);
    let probe = lambdas[0];
    let eig_point = *lambdas.get(1).unwrap_or(&C64::new(-0.8, 0.45));
    let cp = CheckParams::model(params);
    for &m in config.sectors.iter().filter(|&&m| m > 0) {
        let x = match crosscheck_spectrum(&chain, m, probe) {
            Ok(x) => x,
            Err(e) => {
                let tol = report.config.tolerance("spectrum_match");
                report.push(ResidualReport::error("spectrum_match", cp.clone().sector(m), tol, e.to_string()));
                continue;
            }
        };
        let mut states = Vec::new();
        for st in &x.states {
            let sp = cp.clone().sector(m).lambda(probe);
            let note = format!("I = {:?}", st.quantum_numbers);
            report.push(
                ResidualReport::new("spectrum_match", sp, st.distance, bethe::TOL_SPECTRUM_MATCH).with_message(note.clone()),
            );
            match solve_bethe(params, &st.quantum_numbers) {
                Ok(r) => report.push(
                    ResidualReport::new(
                        "bethe_equations",
                        cp.clone().sector(m),
                        r.final_residual.max(r.product_residual),
                        bethe::TOL_BETHE,
                    )
                    .with_message(note.clone()),
                ),
                Err(e) => {
                    let tol = report.config.tolerance("bethe_equations");
                    report.push(ResidualReport::error("bethe_equations", cp.clone().sector(m), tol, e.to_string()));
                }
            }
            record(report, "bethe_eigenpair", cp.clone().sector(m).lambda(eig_point), || {
                verify_eigenpair(&chain, &st.roots, eig_point).map(|r| r.with_message(note.clone()))
            });
            states.push(BetheScalar {
                quantum_numbers: st.quantum_numbers.clone(),
                roots: st.roots.iter().map(|&z| cx(z)).collect(),
                energy: bethe::energy(&st.roots, params).ok(),
                bethe_value: cx(st.bethe_value),
                principal_window: st.principal_window,
            });
        }
        for (qn, why) in &x.unsolved {
            let tol = report.config.tolerance("bethe_equations");
            report.push(ResidualReport::error(
                "bethe_equations",
                cp.clone().sector(m),
                tol,
                format!("I = {qn:?}: {why}"),
            ));
        }
        report.scalar(format!("bethe.sector{m}.states"), states);
        report.scalar(
            format!("bethe.sector{m}.unmatched_spectrum"),
            x.unmatched_spectrum.iter().map(|&z| cx(z)).collect::<Vec<_>>(),
        );
    }
}

fn hamiltonian_suite(config: &RunConfig, params: &ModelParams, rng: &mut ChaCha8Rng, report: &mut Report) {
    report.assume("H_q is assembled in a common eigenbasis of τ(λ), each eigenvalue polynomial giving its energy");
    report.assume("the energy sum rule is exact for N ≥ 4; for N ≤ 3 the vacuum factor contributes at third order");
    report.assume("local densities use the sum-rule D³ (coefficient 3 on adjacent mixed pairs); they are diagnostics");
    let names = ["hq_hermitian", "hq_commute", "energy_sum"];
    let Some(chain) = chain_or_error(report, params, &names) else { return };
    let lambdas = config.lambdas(rng);
    let cp = CheckParams::model(params);
    for &m in &config.sectors {
        let h = match hamiltonian::build_hq(&chain, m, rng) {
            Ok(h) => h,
            Err(e) => {
                for n in names {
                    let tol = report.config.tolerance(n);
                    report.push(ResidualReport::error(n, cp.clone().sector(m), tol, e.to_string()));
                }
                continue;
            }
        };
        report.push(h.hermiticity_report(params));
        for &l in &lambdas {
            report.push(h.commute_report(&chain, l));
        }
        report.scalar(format!("hamiltonian.sector{m}.energies"), h.sorted_energies());
        if m == 0 {
            if params.sites >= 4 {
                let e = h.energies.iter().map(|e| e.abs()).fold(0.0, f64::max);
                report.push(ResidualReport::new("vacuum_energy", cp.clone().sector(0), e, 1e-9));
            }
            continue;
        }
        for qn in bethe::admissible_sets(params.sites, m) {
            let Ok(r) = solve_bethe(params, &qn) else { continue };
            let note = format!("I = {qn:?}");
            record(report, "energy_sum", cp.clone().sector(m), || {
                hamiltonian::check_energy_sum(&chain, &h, &r.roots).map(|r| r.with_message(note.clone()))
            });
        }
        if params.sites >= 3 {
            match hamiltonian::quantum_density_diagnostic(&chain, 1, m, StencilForm::SumRule, rng) {
                Ok(d) => report.scalar(format!("hamiltonian.sector{m}.density_n1"), d),
                Err(e) => report.warn(format!("density diagnostic, sector {m}: {e}")),
            }
        }
    }
}

fn classical_suite(config: &RunConfig, params: &ModelParams, rng: &mut ChaCha8Rng, report: &mut Report) {
    report.assume("H_c = (i/12κ) d³/dz³ ln[(1+λ/ν)^(−N) τ] + c.c. at z = 1/ν, from exact Taylor jets");
    report.assume("dχ_n/dt = {H_c, χ_n} = −iΔ ∂H_c/∂χ̄_n, fixed-step RK4");
    let c = &config.classical;
    let model = ClassicalModel::from_params(params);
    let field = ClassicalField::random(rng, params.sites, c.amplitude);
    let samples: Vec<C64> = config.lambdas(rng).into_iter().take(3).collect();
    let cp = CheckParams::model(params);
    let every = ((c.t_end / c.dt).round() as usize / 100).max(1);
    let run = |dt: f64| -> lattice_nls::Result<classical::ConservationReport> {
        let t = classical::evolve(&model, &field, c.t_end, dt, &samples, every)?;
        classical::conservation_report(&t)
    };
    match run(c.dt) {
        Ok(cons) => {
            report.push(ResidualReport::new("conservation", cp.clone(), cons.max_drift(), classical::TOL_CONSERVATION));
            report.scalar("classical.tau_drift", &cons.tau_drift);
            report.scalar("classical.hc_drift", cons.hc_drift);
            if let Ok(coarse) = run(2.0 * c.dt) {
                report.scalar("classical.drift_ratio_dt_halving", coarse.max_drift() / cons.max_drift());
            }
        }
        Err(e) => {
            let tol = report.config.tolerance("conservation");
            report.push(ResidualReport::error("conservation", cp.clone(), tol, e.to_string()));
        }
    }
    record(report, "hc_grid", cp, || {
        let exact = classical::build_hc(&model, &field)?;
        let grid = classical::build_hc_grid(&model, &field, 1e-2 * params.delta / 2.0)?;
        Ok(ResidualReport::new(
            "hc_grid",
            CheckParams::model(params),
            lattice_nls::report::relative((exact - grid).abs(), exact.abs()),
            1e-6,
        ))
    });
    if let Ok(h) = classical::build_hc(&model, &field) {
        report.scalar("classical.hc", h);
    }
    report.scalar("classical.initial_field", field.chi.iter().map(|&z| cx(z)).collect::<Vec<_>>());
}

fn worst_ratio(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
}

fn sweep(config: &RunConfig, report: &mut Report) {
    let s = &config.sweep;
    report.assume("dispersion: E(μ) of a single Bethe root against μ²; halving passes when the error at least halves");
    for &mu in &s.mu {
        let errors: lattice_nls::Result<Vec<f64>> = s
            .dispersion_deltas
            .iter()
            .map(|&d| {
                let p = ModelParams::new(config.kappa, d, config.sites, 2)?;
                Ok((bethe::energy(&[C64::new(mu, 0.0)], &p)? / (mu * mu) - 1.0).abs())
            })
            .collect();
        let cp = CheckParams {
            kappa: Some(config.kappa),
            lambda: Some(C64::new(mu, 0.0)),
            ..CheckParams::default()
        };
        match errors {
            Ok(e) if e.len() >= 2 => {
                report.push(ResidualReport::new("dispersion_halving", cp, worst_ratio(&e), 0.5));
                report.scalar(format!("sweep.dispersion.mu{mu}"), e);
            }
            Ok(_) => report.warn("dispersion sweep needs at least two lattice spacings"),
            Err(e) => report.push(ResidualReport::error("dispersion_halving", cp, 0.5, e.to_string())),
        }
    }
    let cp = CheckParams {
        kappa: Some(config.kappa),
        ..CheckParams::default()
    };
    match classical::continuum_sweep(config.kappa, &s.continuum_deltas, s.length) {
        Ok(pts) if pts.len() >= 2 => {
            let e: Vec<f64> = pts.iter().map(|p| p.error).collect();
            report.push(ResidualReport::new("hc_continuum", cp, worst_ratio(&e), 1.0));
            report.scalar("sweep.continuum", pts);
        }
        Ok(_) => report.warn("continuum sweep needs at least two lattice spacings"),
        Err(e) => report.push(ResidualReport::error("hc_continuum", cp, 1.0, e.to_string())),
    }
}
