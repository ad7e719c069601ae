//! Subcommand implementations. Each loads the panel, runs the library,
//! writes plot-ready CSVs plus a manifest, and maps failures onto the
//! usage/runtime exit-code split.

use std::path::Path;

use leecarter::bootstrap::{
    BootstrapConfig, DeviancePlan, Replicate, ResidualEstimator, ResidualPlan,
};
use leecarter::dataset::MortalityDataset;
use leecarter::gaussian::{fit_ppca_closed_form, fit_svd, normalize, Method};
use leecarter::matching::detect_outliers;
use leecarter::matrix::dot;
use leecarter::pipeline::{fit_method, FitOptions};
use leecarter::simulation::{GridPlan, ScenarioConfig};
use serde_json::Value;

use crate::args::{BootstrapArgs, Common, DetectArgs, FitArgs, SimulateArgs};
use crate::formats;
use crate::manifest::Manifest;
use crate::parallel::par_map_indexed;
use crate::CliError;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_windowed(common: &Common) -> Result<MortalityDataset, CliError> {
    let ds =
        formats::load_dataset(&common.input, common.format, common.rate_floor).map_err(runtime)?;
    ds.window(common.ages, common.years).map_err(runtime)
}

fn ensure_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", dir.display())))
}

fn common_manifest(m: &mut Manifest, common: &Common) {
    m.config("input", common.input.display());
    m.config("format", common.format.as_str());
    if let Some((lo, hi)) = common.ages {
        m.config("ages", format!("{lo}:{hi}"));
    }
    if let Some((lo, hi)) = common.years {
        m.config("years", format!("{lo}:{hi}"));
    }
    m.config("seed", common.seed);
    m.config("threads", common.threads);
    m.config("rate-floor", format!("{:?}", common.rate_floor));
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    match s {
        "svd" => Ok(Method::Svd),
        "ppca" => Ok(Method::Ppca),
        "poisson_glm" => Ok(Method::PoissonGlm),
        "tppca" => Ok(Method::Tppca),
        _ => Err(CliError::Usage(format!("unknown method {s:?}"))),
    }
}

pub fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let FitArgs {
        common,
        method,
        tol,
        max_iter,
        nu_init,
        freeze_nu,
    } = args;
    let (common, cfg) = common.resolve()?;
    let method = parse_method(
        &cfg.resolve(method, "method")?
            .ok_or_else(|| CliError::Usage("missing --method".into()))?,
    )?;
    let tol = cfg.resolve(tol, "tol")?;
    let max_iter = cfg.resolve(max_iter, "max-iter")?;
    let nu_init = cfg.resolve(nu_init, "nu-init")?;
    let freeze_nu = freeze_nu || cfg.resolve(None::<bool>, "freeze-nu")?.unwrap_or(false);

    let mut opts = FitOptions::default();
    if let Some(tol) = tol {
        if !(tol > 0.0) {
            return Err(CliError::Usage("invalid tol: must be positive".into()));
        }
        opts.glm.tol = tol;
        opts.tppca.tol = tol;
    }
    if let Some(mi) = max_iter {
        if mi == 0 {
            return Err(CliError::Usage("invalid max-iter: must be positive".into()));
        }
        opts.glm.max_iter = mi;
        opts.tppca.max_iter = mi;
    }
    if let Some(nu) = nu_init {
        if !(nu > 0.0) {
            return Err(CliError::Usage("invalid nu_init: must be positive".into()));
        }
        opts.tppca.nu_init = nu;
    }
    opts.tppca.update_nu = !freeze_nu;

    let ds = load_windowed(&common)?;
    let outcome = fit_method(&ds, method, &opts).map_err(runtime)?;

    ensure_out(&common.out)?;
    formats::write_fit_csvs(&common.out, &ds, &outcome.fit).map_err(runtime)?;

    let mut m = Manifest::new("fit");
    common_manifest(&mut m, &common);
    m.config("method", method.as_str());
    m.config("tol", format!("{:?}", opts.tppca.tol));
    m.config("max-iter", opts.tppca.max_iter);
    m.config("nu-init", format!("{:?}", opts.tppca.nu_init));
    m.config("freeze-nu", freeze_nu);
    if let Some(iters) = outcome.iterations {
        m.result("iterations", Value::from(iters));
    }
    if let Some(converged) = outcome.converged {
        m.result("em_converged", Value::from(converged));
    }
    if let Some(ll) = outcome.final_loglik {
        m.result_f64("final_loglik", ll);
    }
    if let Some(nu) = outcome.fit.nu {
        m.result_f64("nu", nu);
    }
    if let Some(s2) = outcome.fit.sigma2 {
        m.result_f64("sigma2", s2);
    }
    m.result("degenerate", Value::from(outcome.fit.degenerate));

    // SVD and PPCA are two closed forms of the same axis; when either is
    // requested, cross-check the normalized b against the other and report
    // the disagreement. Zero-variance fallbacks have no axis to compare.
    if matches!(method, Method::Svd | Method::Ppca) && !outcome.fit.degenerate {
        let y = leecarter::dataset::log_rates(&ds);
        let other_b = match method {
            Method::Svd => {
                let ppca = fit_ppca_closed_form(&y).map_err(runtime)?;
                normalize(&ppca.b_unnormalized, &vec![0.0; ds.n_years()])
                    .map_err(runtime)?
                    .b
            }
            _ => fit_svd(&y).map_err(runtime)?.b,
        };
        let b = &outcome.fit.b;
        let cos = dot(b, &other_b) / (dot(b, b).sqrt() * dot(&other_b, &other_b).sqrt());
        let max_abs = b
            .iter()
            .zip(&other_b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        m.result_f64("crosscheck_b_cosine_distance", 1.0 - cos.abs());
        m.result_f64("crosscheck_b_max_abs_diff", max_abs);
    }

    m.write(&common.out).map_err(runtime)?;
    Ok(())
}

pub fn cmd_bootstrap(args: BootstrapArgs) -> Result<(), CliError> {
    let BootstrapArgs {
        common,
        estimator,
        replications,
        ci_level,
    } = args;
    let (common, cfg) = common.resolve()?;
    let estimator = cfg
        .resolve(estimator, "estimator")?
        .ok_or_else(|| CliError::Usage("missing --estimator".into()))?;
    let replications = cfg.resolve(replications, "B")?.unwrap_or(1000);
    let ci_level = cfg.resolve(ci_level, "ci-level")?.unwrap_or(0.95);
    if replications == 0 {
        return Err(CliError::Usage("B must be at least 1".into()));
    }
    if !(ci_level > 0.0 && ci_level < 1.0) {
        return Err(CliError::Usage("ci-level must be in (0, 1)".into()));
    }

    let ds = load_windowed(&common)?;

    let (summary, scheme) = match estimator.as_str() {
        "svd" | "tppca" => {
            let which = if estimator == "svd" {
                ResidualEstimator::Svd
            } else {
                ResidualEstimator::Tppca
            };
            let mut bc = BootstrapConfig::residual(replications, common.seed);
            bc.ci_level = ci_level;
            let plan = ResidualPlan::new(&ds, which, bc).map_err(runtime)?;
            let reps: Vec<Option<Replicate>> =
                par_map_indexed(replications, common.threads, |i| plan.replicate(i).ok());
            let kept: Vec<Replicate> = reps.into_iter().flatten().collect();
            (plan.summarize(&kept).map_err(runtime)?, "residual_vector")
        }
        "poisson_glm" => {
            let mut bc = BootstrapConfig::deviance(replications, common.seed);
            bc.ci_level = ci_level;
            let plan = DeviancePlan::new(&ds, bc).map_err(runtime)?;
            let reps: Vec<Option<Replicate>> =
                par_map_indexed(replications, common.threads, |i| plan.replicate(i).ok());
            let kept: Vec<Replicate> = reps.into_iter().flatten().collect();
            (plan.summarize(&kept).map_err(runtime)?, "deviance")
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown estimator {other:?} (svd, tppca, poisson_glm)"
            )))
        }
    };

    ensure_out(&common.out)?;
    formats::write_bootstrap_csv(&common.out, &summary).map_err(runtime)?;

    let mut m = Manifest::new("bootstrap");
    common_manifest(&mut m, &common);
    m.config("estimator", &estimator);
    m.config("B", replications);
    m.config("ci-level", format!("{ci_level:?}"));
    m.result("method", Value::from(scheme));
    m.result("b_effective", Value::from(summary.b_effective));
    m.write(&common.out).map_err(runtime)?;
    Ok(())
}

pub fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    let DetectArgs {
        common,
        alpha,
        tol,
        max_iter,
        nu_init,
    } = args;
    let (common, cfg) = common.resolve()?;
    let alpha = cfg.resolve(alpha, "alpha")?.unwrap_or(0.95);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage("alpha must be in (0,1)".into()));
    }
    let mut opts = FitOptions::default();
    if let Some(tol) = cfg.resolve(tol, "tol")? {
        opts.tppca.tol = tol;
    }
    if let Some(mi) = cfg.resolve(max_iter, "max-iter")? {
        opts.tppca.max_iter = mi;
    }
    if let Some(nu) = cfg.resolve(nu_init, "nu-init")? {
        if !(nu > 0.0) {
            return Err(CliError::Usage("invalid nu_init: must be positive".into()));
        }
        opts.tppca.nu_init = nu;
    }

    let ds = load_windowed(&common)?;
    let y = leecarter::dataset::log_rates(&ds);
    let outcome = fit_method(&ds, Method::Tppca, &opts).map_err(runtime)?;
    let params = outcome
        .tppca_params
        .expect("tppca fit carries its parameters");
    let report = detect_outliers(&params, &y, alpha).map_err(runtime)?;

    ensure_out(&common.out)?;
    formats::write_outlier_csv(&common.out, ds.years(), &report).map_err(runtime)?;

    let mut m = Manifest::new("detect");
    common_manifest(&mut m, &common);
    m.config("alpha", format!("{alpha:?}"));
    m.result_f64("threshold", report.threshold);
    m.result_f64("nu", params.nu);
    m.result(
        "flagged",
        Value::from(report.flags.iter().filter(|&&f| f).count()),
    );
    m.write(&common.out).map_err(runtime)?;
    Ok(())
}

pub fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let SimulateArgs {
        common,
        duration,
        pandemic,
        estimators,
        reference_year,
    } = args;
    let (common, cfg) = common.resolve()?;
    let duration = cfg
        .resolve(duration, "duration")?
        .ok_or_else(|| CliError::Usage("missing --duration".into()))?;
    if duration == 0 {
        return Err(CliError::Usage("duration must be at least 1".into()));
    }
    let pandemic_path: Option<std::path::PathBuf> = cfg.resolve(pandemic, "pandemic")?;
    let estimators_str: String = cfg
        .resolve(estimators, "estimators")?
        .unwrap_or_else(|| "svd,poisson_glm,tppca".to_string());
    let estimators = estimators_str
        .split(',')
        .map(|s| parse_method(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let reference_year = cfg.resolve(reference_year, "reference-year")?;

    let table = match &pandemic_path {
        Some(path) => formats::load_pandemic_table(path).map_err(runtime)?,
        None => formats::parse_pandemic_csv(formats::BUNDLED_PANDEMIC_CSV).map_err(runtime)?,
    };

    let ds = load_windowed(&common)?;
    let base_years = (ds.years()[0], *ds.years().last().unwrap());
    let scenario = ScenarioConfig {
        base_years,
        outlier_duration: duration,
        pandemic: table,
        estimators: estimators.clone(),
        seed: common.seed,
        reference_year,
    };
    let plan = GridPlan::new(&ds, &scenario).map_err(runtime)?;
    let n_windows = plan.windows().len();
    let experiments = par_map_indexed(n_windows, common.threads, |i| plan.run_window(i));
    let experiments = experiments
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let aggregates = plan.aggregate(&experiments);

    ensure_out(&common.out)?;
    formats::write_experiments_csv(&common.out, &experiments).map_err(runtime)?;
    formats::write_aggregate_csv(&common.out, &aggregates).map_err(runtime)?;

    let mut m = Manifest::new("simulate");
    common_manifest(&mut m, &common);
    m.config("duration", duration);
    m.config("estimators", &estimators_str);
    if let Some(path) = &pandemic_path {
        m.config("pandemic", path.display());
    } else {
        m.config("pandemic", "bundled:us_covid19_deaths_2020");
    }
    if let Some(y) = reference_year {
        m.config("reference-year", y);
    }
    m.result("experiments", Value::from(n_windows));
    m.result("base_years", Value::from(format!("{}:{}", base_years.0, base_years.1)));
    m.result_f64("injected_deaths_per_year", plan.injected_total());
    m.write(&common.out).map_err(runtime)?;
    Ok(())
}
