//! Subcommand implementations binding the library modules to config, CSV and
//! manifest plumbing.

use crate::config::{Config, ConfigError};
use crate::output::{write_manifest, write_renewal_csv, CsvBuilder, MethodTag};
use expfun::asymptote::{slowly_varying_l1_hat, spitzer_rho, RhoOracle};
use expfun::estimators::{
    estimate_bigjump_numerator, estimate_c1, estimate_c3, estimate_c4, estimate_drift_constant,
    estimate_ef_plain, estimate_ef_tilted, estimate_tau_tail, estimate_tau_tail_bigjump, Estimate,
    SeriesParams,
};
use expfun::renewal::{renewal_estimate, Flavor, RenewalTable};
use expfun::steps::StepModel;
use expfun::tilt::{regime_classify, RegimeTag, TiltReport};
use expfun::walk::{sign_stats, tau_minus_survival};
use std::io;
use std::path::Path;

pub enum RunError {
    Config(ConfigError),
    Numeric(expfun::Error),
    OracleFailure(String),
    Io(io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric(_) | RunError::Io(_) => 3,
            RunError::OracleFailure(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::Numeric(_) => "numeric_guard",
            RunError::OracleFailure(_) => "oracle_failure",
            RunError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> String {
        match self {
            RunError::Config(e) => e.to_string(),
            RunError::Numeric(e) => e.to_string(),
            RunError::OracleFailure(m) => m.clone(),
            RunError::Io(e) => e.to_string(),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<expfun::Error> for RunError {
    fn from(e: expfun::Error) -> Self {
        RunError::Numeric(e)
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Io(e)
    }
}

type CmdResult = Result<(), RunError>;

fn print_tilt_report(report: &TiltReport, tag: &RegimeTag) {
    println!("lambda_star={}", report.lambda_star);
    println!("rho_factor={}", report.rho_factor);
    println!("phi_at_lambda={}", report.phi_at_lambda);
    println!("tilted_mean={}", report.tilted_mean);
    println!("boundary={:?}", report.boundary);
    println!("regime={tag}");
    if let RegimeTag::Unsupported(reason) = tag {
        println!("regime_reason={reason}");
    }
}

pub fn classify(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let f = cfg.fspec()?;
    let (report, tag) = regime_classify(&model, &f)?;
    print_tilt_report(&report, &tag);
    let manifest = write_manifest(out, "classify", cfg.seed()?, &cfg.hash(), &[])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

pub fn tau_tail(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let seed = cfg.seed()?;
    let nsim = cfg.usize_or("mc.nsim", 100_000)?;
    let method = cfg.str_or("tau.method", "plain").to_string();
    let k_max = cfg.usize_or("tau.k_max", 16)?;
    let mut csv = CsvBuilder::new(seed, &cfg.hash());
    for n in cfg.ladder()? {
        let est = match method.as_str() {
            "plain" => estimate_tau_tail(&model, n, nsim, seed)?,
            "bigjump" => estimate_tau_tail_bigjump(&model, n, k_max, nsim, seed)?,
            other => {
                return Err(ConfigError(format!("tau.method: unknown method '{other}'")).into())
            }
        };
        println!("tau_tail n={n} value={} stderr={}", est.value, est.stderr);
        csv.row("tau_tail", n, &est);
    }
    let path = csv.write_to(out, "tau_tail.csv")?;
    let manifest = write_manifest(out, "tau-tail", seed, &cfg.hash(), &[path])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

/// The regime-appropriate estimator of E[F(I_n)].
fn ef_for_regime(
    model: &StepModel,
    f: &expfun::tilt::FSpec,
    tag: &RegimeTag,
    n: usize,
    nsim: usize,
    k_max: usize,
    seed: u64,
) -> Result<Estimate, RunError> {
    match tag {
        RegimeTag::OscLambdaZero | RegimeTag::DriftsToInfinity => {
            Ok(estimate_ef_plain(model, f, n, nsim, seed)?)
        }
        RegimeTag::OscInterior | RegimeTag::OscLambdaEqTheta | RegimeTag::DriftLambdaEqTheta => {
            Ok(estimate_ef_tilted(model, f, n, nsim, seed)?)
        }
        RegimeTag::DriftLambdaZeroHeavyTail => {
            let mut sum = 0.0;
            let mut var = 0.0;
            let mut ns = 0u64;
            for k in 1..=k_max.min(n) {
                let term = estimate_bigjump_numerator(model, f, n, k, nsim, seed)?;
                sum += term.value;
                var += term.stderr * term.stderr;
                ns += term.n_samples;
            }
            Ok(Estimate {
                value: sum,
                stderr: var.sqrt(),
                n_samples: ns,
                method: "ef_bigjump",
                log_domain: false,
            })
        }
        RegimeTag::DriftInteriorHeavyTail => Err(RunError::Numeric(expfun::Error::Unsupported(
            "no declared step family reaches the interior heavy-tail regime".into(),
        ))),
        RegimeTag::Unsupported(reason) => {
            Err(RunError::Numeric(expfun::Error::Unsupported(reason.clone())))
        }
    }
}

pub fn estimate(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let f = cfg.fspec()?;
    let seed = cfg.seed()?;
    let nsim = cfg.usize_or("mc.nsim", 100_000)?;
    let k_max = cfg.usize_or("tau.k_max", 8)?;
    let (_, tag) = regime_classify(&model, &f)?;
    println!("regime={tag}");
    let mut csv = CsvBuilder::new(seed, &cfg.hash());
    for n in cfg.ladder()? {
        let est = ef_for_regime(&model, &f, &tag, n, nsim, k_max, seed)?;
        println!(
            "ef n={n} value={} stderr={} method={}",
            est.value,
            est.stderr,
            est.method_tag()
        );
        csv.row("ef", n, &est);
    }
    let path = csv.write_to(out, "estimate.csv")?;
    let manifest = write_manifest(out, "estimate", seed, &cfg.hash(), &[path])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

fn v_table_for(model: &StepModel, cfg: &Config, seed: u64) -> Result<RenewalTable, RunError> {
    if model.is_skip_free_down() {
        let (spacing, _, _) = model.lattice_info().unwrap();
        Ok(RenewalTable::exact_skip_free(spacing, 96.0 * spacing, 1))
    } else {
        let chains = cfg.usize_or("renewal.chains", 4_000)?;
        let cap = cfg.usize_or("renewal.cap", 1 << 20)?;
        Ok(renewal_estimate(model, Flavor::Descending, 64.0, 256, chains, cap, seed ^ 0x7331)?)
    }
}

fn series_params(cfg: &Config) -> Result<SeriesParams, RunError> {
    Ok(SeriesParams {
        k_max: cfg.usize_or("constants.k_max", 48)?,
        nsim: cfg.usize_or("constants.nsim", 40_000)?,
        eps: cfg.f64_or("mc.eps", 1e-6)?,
        horizon_cap: cfg.usize_or("mc.horizon_cap", 1 << 15)?,
    })
}

/// The regime's limiting constant with its per-term trace.
fn constant_for_regime(
    model: &StepModel,
    f: &expfun::tilt::FSpec,
    tag: &RegimeTag,
    cfg: &Config,
    seed: u64,
    csv: &mut CsvBuilder,
) -> Result<Estimate, RunError> {
    let params = series_params(cfg)?;
    match tag {
        RegimeTag::OscLambdaZero => {
            let table = v_table_for(model, cfg, seed)?;
            let series = estimate_c1(model, f, &table, params, seed)?;
            for (k, t) in series.terms.iter().enumerate() {
                csv.row("c1_term", k, t);
            }
            csv.row_parts("c1_tail_bound", 0, series.tail_bound, 0.0, 0, "geometric");
            csv.row("c1", 0, &series.estimate);
            Ok(series.estimate)
        }
        RegimeTag::OscLambdaEqTheta => {
            let series = estimate_c3(model, f, params, seed)?;
            for (k, t) in series.terms.iter().enumerate() {
                csv.row("c3_term", k, t);
            }
            csv.row_parts("c3_tail_bound", 0, series.tail_bound, 0.0, 0, "geometric");
            // the rate's prefactor K0 multiplies C3
            let mut est = series.estimate.clone();
            est.value *= f.k0;
            est.stderr *= f.k0;
            csv.row("k0_c3", 0, &est);
            Ok(est)
        }
        RegimeTag::DriftLambdaEqTheta => {
            let horizon = cfg.usize_or("mc.horizon_cap", 1 << 15)?;
            let nsim = cfg.usize_or("constants.nsim", 100_000)?;
            let eps = cfg.f64_or("mc.eps", 1e-6)?;
            let d = estimate_drift_constant(model, f, horizon, nsim, eps, seed)?;
            csv.row("drift_constant", 0, &d.estimate);
            csv.row_parts("drift_truncation_rate", 0, d.truncation_rate, 0.0, 0, "adaptive");
            Ok(d.estimate)
        }
        RegimeTag::DriftLambdaZeroHeavyTail => {
            let ladder = cfg.ladder()?;
            let k_max = cfg.usize_or("tau.k_max", 8)?;
            let nsim = cfg.usize_or("constants.nsim", 40_000)?;
            let c4 = estimate_c4(model, f, k_max, &ladder, nsim, seed)?;
            for h in &c4.per_horizon {
                for (k, t) in h.terms.iter().enumerate() {
                    csv.row(&format!("c4_term_h{}", h.n), k + 1, t);
                }
                csv.row("c4_sum", h.n, &h.sum);
            }
            csv.row("c4", *ladder.last().unwrap(), &c4.final_estimate);
            Ok(c4.final_estimate)
        }
        other => Err(RunError::Numeric(expfun::Error::Unsupported(format!(
            "no constant estimator for regime {other}"
        )))),
    }
}

pub fn constants(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let f = cfg.fspec()?;
    let seed = cfg.seed()?;
    let (_, tag) = regime_classify(&model, &f)?;
    println!("regime={tag}");
    let mut csv = CsvBuilder::new(seed, &cfg.hash());
    let est = constant_for_regime(&model, &f, &tag, cfg, seed, &mut csv)?;
    println!("constant value={} stderr={}", est.value, est.stderr);
    let path = csv.write_to(out, "constants.csv")?;
    let manifest = write_manifest(out, "constants", seed, &cfg.hash(), &[path])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

/// Denominator of the ratio-convergence experiment: exact where structure
/// permits, Monte Carlo otherwise. Returns (value, stderr, method).
fn denominator_for_regime(
    model: &StepModel,
    report: &TiltReport,
    tag: &RegimeTag,
    n: usize,
    nsim: usize,
    seed: u64,
) -> Result<(f64, f64, &'static str), RunError> {
    match tag {
        RegimeTag::OscLambdaZero | RegimeTag::OscInterior => {
            if model.lattice_info().is_some() && n <= 4096 && *tag == RegimeTag::OscLambdaZero {
                let surv = tau_minus_survival(model, n, 0)?;
                Ok((surv[n], 0.0, "tau_dp"))
            } else {
                let est = estimate_tau_tail(model, n, nsim, seed ^ 0x51)?;
                Ok((est.value, est.stderr, "tau_mc"))
            }
        }
        RegimeTag::DriftLambdaEqTheta => {
            Ok(((n as f64 * report.phi_at_lambda).exp(), 0.0, "rho_pow_n"))
        }
        RegimeTag::DriftLambdaZeroHeavyTail => {
            let a = -model.mean();
            Ok((model.tail_prob(a * n as f64), 0.0, "tail_exact"))
        }
        RegimeTag::OscLambdaEqTheta => {
            let tilted = &report.tilted_model;
            let rho = spitzer_rho(tilted, 64, RhoOracle::Dp, seed)
                .or_else(|_| spitzer_rho(tilted, 256, RhoOracle::Mc { nsim }, seed))?
                .value;
            let probs_gt0: Vec<f64> = if tilted.lattice_info().is_some() {
                sign_stats(tilted, 4 * n.max(64))?.iter().map(|s| s.p_gt0).collect()
            } else if tilted.is_symmetric() {
                vec![0.5; 4 * n.max(64)]
            } else {
                return Err(RunError::Numeric(expfun::Error::Unsupported(
                    "l1-hat needs a lattice or symmetric tilted walk".into(),
                )));
            };
            let l1h = slowly_varying_l1_hat(&probs_gt0, rho, n as f64)?;
            let v = (n as f64 * report.phi_at_lambda).exp()
                * (n as f64).powf(-rho)
                * l1h.value;
            Ok((v, 0.0, "rho_pow_poly_l1hat"))
        }
        other => Err(RunError::Numeric(expfun::Error::Unsupported(format!(
            "no verification denominator for regime {other}"
        )))),
    }
}

pub fn verify(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let f = cfg.fspec()?;
    let seed = cfg.seed()?;
    let nsim = cfg.usize_or("mc.nsim", 100_000)?;
    let k_max = cfg.usize_or("tau.k_max", 8)?;
    let (report, tag) = regime_classify(&model, &f)?;
    println!("regime={tag}");
    let mut csv = CsvBuilder::new(seed, &cfg.hash());
    let ladder = cfg.ladder()?;
    let mut ratios: Vec<(usize, f64, f64)> = Vec::new();
    for &n in &ladder {
        let num = ef_for_regime(&model, &f, &tag, n, nsim, k_max, seed)?;
        let (den, den_se, den_method) = denominator_for_regime(&model, &report, &tag, n, nsim, seed)?;
        let r = num.linear_value() / den;
        let rel = (num.rel_stderr().powi(2) + (den_se / den).powi(2)).sqrt();
        csv.row("ef", n, &num);
        csv.row_parts("denominator", n, den, den_se, 0, den_method);
        csv.row_parts("ratio", n, r, r * rel, num.n_samples, "ratio");
        println!("ratio n={n} value={r} stderr={}", r * rel);
        ratios.push((n, r, r * rel));
    }
    let last = ratios.last().unwrap();
    let prev = &ratios[ratios.len().saturating_sub(2)];
    let rel_change = (last.1 / prev.1 - 1.0).abs();
    csv.row_parts("diag_rel_change", last.0, rel_change, 0.0, 0, "stabilization");
    println!("diag rel_change={rel_change}");

    // compare against the regime's constant estimate when one exists
    match constant_for_regime(&model, &f, &tag, cfg, seed, &mut csv) {
        Ok(constant) => {
            let diff = (last.1 - constant.value).abs();
            let overlap = diff <= 1.96 * (last.2 + constant.stderr);
            let rel_err = diff / constant.value.abs();
            csv.row_parts("diag_const_rel_err", last.0, rel_err, 0.0, 0, "comparison");
            csv.row_parts(
                "diag_ci_overlap",
                last.0,
                if overlap { 1.0 } else { 0.0 },
                0.0,
                0,
                "comparison",
            );
            println!(
                "diag constant={} rel_err={rel_err} ci_overlap={overlap}",
                constant.value
            );
        }
        Err(RunError::Numeric(expfun::Error::Unsupported(msg))) => {
            println!("diag constant=unavailable ({msg})");
        }
        Err(e) => return Err(e),
    }

    let path = csv.write_to(out, "verify.csv")?;
    let manifest = write_manifest(out, "verify", seed, &cfg.hash(), &[path])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

pub fn renewal(cfg: &Config, out: &Path) -> CmdResult {
    let model = cfg.model()?;
    let seed = cfg.seed()?;
    let flavor = match cfg.str_or("renewal.flavor", "descending") {
        "descending" => Flavor::Descending,
        "ascending" => Flavor::Ascending,
        other => {
            return Err(ConfigError(format!("renewal.flavor: unknown flavor '{other}'")).into())
        }
    };
    let x_max = cfg.f64_or("renewal.x_max", 16.0)?;
    let points = cfg.usize_or("renewal.points", 64)?;
    let chains = cfg.usize_or("renewal.chains", 4_000)?;
    let cap = cfg.usize_or("renewal.cap", 1 << 20)?;
    let skip_free_exact = match flavor {
        Flavor::Descending => model.is_skip_free_down(),
        Flavor::Ascending => model.is_skip_free_up(),
    };
    let table = if skip_free_exact {
        let (spacing, _, _) = model.lattice_info().unwrap();
        let mut t = RenewalTable::exact_skip_free(spacing, x_max, 1);
        t.flavor = flavor;
        t
    } else {
        renewal_estimate(&model, flavor, x_max, points, chains, cap, seed)?
    };
    println!(
        "renewal flavor={:?} provenance={:?} points={}",
        table.flavor,
        table.provenance,
        table.grid.len()
    );
    let path = write_renewal_csv(out, &table)?;
    let manifest = write_manifest(out, "renewal", seed, &cfg.hash(), &[path])?;
    println!("manifest={}", manifest.display());
    Ok(())
}

pub fn selftest(cfg: &Config, out: &Path) -> CmdResult {
    let seed = cfg.seed()?;
    let results = expfun::selftest::run_all(seed);
    let mut failures = Vec::new();
    for r in &results {
        println!("suite {}: {} ({})", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
        if !r.passed {
            failures.push(r.name);
        }
    }
    let manifest = write_manifest(out, "selftest", seed, &cfg.hash(), &[])?;
    println!("manifest={}", manifest.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(RunError::OracleFailure(format!("suites failed: {}", failures.join(", "))))
    }
}

/// Dispatch used by main and by the integration tests.
pub fn run(subcommand: &str, cfg: &Config, out: &Path) -> CmdResult {
    std::fs::create_dir_all(out).map_err(RunError::Io)?;
    match subcommand {
        "classify" => classify(cfg, out),
        "tau-tail" => tau_tail(cfg, out),
        "estimate" => estimate(cfg, out),
        "constants" => constants(cfg, out),
        "verify" => verify(cfg, out),
        "renewal" => renewal(cfg, out),
        "selftest" => selftest(cfg, out),
        other => Err(ConfigError(format!("unknown subcommand {other}")).into()),
    }
}

/// Build the rayon pool from mc.workers and run inside it.
pub fn run_with_pool(subcommand: &str, cfg: &Config, out: &Path) -> CmdResult {
    let workers = cfg.usize_or("mc.workers", 0)?;
    if workers == 0 {
        return run(subcommand, cfg, out);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(ConfigError(format!("worker pool: {e}"))))?;
    pool.install(|| run(subcommand, cfg, out))
}
