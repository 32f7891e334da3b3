//! Subcommand implementations and the process entry point.
//!
//! Exit codes: 0 on success, 2 on input/validation failures, 1 on internal
//! errors. Failures print a machine-readable JSON record to stderr.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use ndcfair::annuity::{self, AnnuityBasis};
use ndcfair::hermite::{gompertz_fit, AgeGrid, SpecVariant};
use ndcfair::model::MortalityModel;
use ndcfair::projection::{fit_rwd, median_projection, simulate_kappa};
use ndcfair::rules::{
    self, anchor_benchmark, method1_schedule, method2_schedule, method3_calibrate,
    method3_exact, method4_calibrate, method4_exact, FairAnchors, IncomeQuintiles,
    RuleSchedule,
};
use ndcfair::subgroup::{
    build_pooled, fit_hsm, model_scores, scores_from, ShapeConstraints,
};

use crate::config::RunConfig;
use crate::io::{self, AnchorsFile, SpecArtifact};
use crate::synth::{generate_synthetic, SyntheticTruth};

#[derive(Parser, Debug)]
#[command(name = "ndcfair", version, about = "Mortality-differentiated annuity divisors for NDC pensions")]
pub struct Cli {
    /// TOML configuration file; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Annual effective discount rate.
    #[arg(long, global = true)]
    pub r: Option<f64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Anchors JSON (fair counting months plus quintile means/boundaries).
    #[arg(long, global = true)]
    pub anchors: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic national/subgroup dataset plus its truth.
    Synth,
    /// Fit the national Lee-Carter model from a deaths/exposure CSV.
    FitNational {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the grouped spline variants to an LC-adjusted pooled panel.
    FitSubgroup {
        #[arg(long)]
        input: PathBuf,
        /// Fitted national parameters (lc_params.json).
        #[arg(long)]
        lc: PathBuf,
    },
    /// Fair counting months, official values, and subsidies by quintile.
    FairCm {
        #[arg(long)]
        lc: PathBuf,
        /// Fitted spec artifact (spec_hsm_3.json).
        #[arg(long)]
        spec: PathBuf,
    },
    /// Project median fair counting months and subsidies forward.
    Project {
        #[arg(long)]
        lc: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n_paths: Option<usize>,
        /// Force the random-walk volatility (for reproducibility checks).
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Calibrate the four income-dependent rules from anchors.
    CalibrateRules {
        /// Derive anchors from a fitted model instead of --anchors.
        #[arg(long)]
        lc: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Evaluate the four rules on a dense income grid.
    EvaluateRules {
        #[arg(long)]
        lc: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 500.0)]
        k_min: f64,
        #[arg(long, default_value_t = 120_000.0)]
        k_max: f64,
        #[arg(long, default_value_t = 100.0)]
        k_step: f64,
    },
}

enum CmdError {
    Validation(anyhow::Error),
    Internal(anyhow::Error),
}

impl CmdError {
    fn exit_code(&self) -> i32 {
        match self {
            CmdError::Validation(_) => 2,
            CmdError::Internal(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            CmdError::Validation(e) | CmdError::Internal(e) => format!("{e:#}"),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CmdError::Validation(_) => "validation",
            CmdError::Internal(_) => "internal",
        }
    }
}

trait Classify<T> {
    fn validation(self) -> Result<T, CmdError>;
    fn internal(self) -> Result<T, CmdError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn validation(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Validation(e.into()))
    }

    fn internal(self) -> Result<T, CmdError> {
        self.map_err(|e| CmdError::Internal(e.into()))
    }
}

/// Run a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let record = serde_json::json!({
                "error": e.message(),
                "kind": e.kind(),
            });
            eprintln!("{record}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CmdError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).validation()?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(r) = cli.r {
        config.r = r;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))
        .internal()?;

    match &cli.command {
        Command::Synth => cmd_synth(&config, &out),
        Command::FitNational { input } => cmd_fit_national(&config, &out, input),
        Command::FitSubgroup { input, lc } => cmd_fit_subgroup(&config, &out, input, lc),
        Command::FairCm { lc, spec } => cmd_fair_cm(&config, &out, lc, spec),
        Command::Project {
            lc,
            spec,
            n_paths,
            sigma,
        } => cmd_project(&config, &out, lc, spec, *n_paths, *sigma),
        Command::CalibrateRules { lc, spec } => {
            let (anchors, quintiles) = resolve_anchors(&cli, &config, lc, spec)?;
            cmd_calibrate_rules(&out, &anchors, &quintiles)
        }
        Command::EvaluateRules {
            lc,
            spec,
            k_min,
            k_max,
            k_step,
        } => {
            let (anchors, quintiles) = resolve_anchors(&cli, &config, lc, spec)?;
            cmd_evaluate_rules(&config, &out, &anchors, &quintiles, *k_min, *k_max, *k_step)
        }
    }
}

fn load_model(config: &RunConfig, lc: &Path, spec: &Path) -> Result<MortalityModel, CmdError> {
    let lc = io::read_lc_params(lc).validation()?;
    let artifact: SpecArtifact = io::read_json(spec).validation()?;
    if config.ref_year < lc.year_start || config.ref_year > lc.last_year() {
        return Err(CmdError::Validation(anyhow!(
            "reference year {} outside the fitted years {}..={}",
            config.ref_year,
            lc.year_start,
            lc.last_year()
        )));
    }
    Ok(MortalityModel::new(artifact.spec, lc, artifact.grid))
}

fn resolve_anchors(
    cli: &Cli,
    config: &RunConfig,
    lc: &Option<PathBuf>,
    spec: &Option<PathBuf>,
) -> Result<(FairAnchors, IncomeQuintiles), CmdError> {
    if let Some(path) = &cli.anchors {
        let file: AnchorsFile = io::read_json(path).validation()?;
        return file.parse().validation();
    }
    match (lc, spec) {
        (Some(lc), Some(spec)) => {
            let model = load_model(config, lc, spec)?;
            let basis = AnnuityBasis::new(config.r, config.x1).validation()?;
            let quintiles = config.quintiles().validation()?;
            let age = *config.retirement_ages.first().unwrap_or(&60);
            let anchors =
                FairAnchors::from_model(&model, &basis, age, 0.0, &quintiles).validation()?;
            Ok((anchors, quintiles))
        }
        _ => Err(CmdError::Validation(anyhow!(
            "either --anchors or both --lc and --spec are required"
        ))),
    }
}

fn cmd_synth(config: &RunConfig, out: &Path) -> Result<(), CmdError> {
    let truth = SyntheticTruth::default_with(
        config.seed,
        config.national_exposure,
        config.subgroup_exposure,
    );
    let (national, subgroup) = generate_synthetic(&truth).internal()?;
    io::write_national_csv(&national, &out.join("national.csv")).internal()?;
    io::write_subgroup_csv(&subgroup, &out.join("subgroup.csv")).internal()?;
    io::write_json(&truth, &out.join("truth.json")).internal()?;
    Ok(())
}

fn cmd_fit_national(config: &RunConfig, out: &Path, input: &Path) -> Result<(), CmdError> {
    let panel = io::read_national_csv(input).validation()?;
    let (params, report) = ndcfair::lee_carter::fit_lc_poisson(&panel, config.ref_year)
        .internal()?;
    io::write_json(&params, &out.join("lc_params.json")).internal()?;
    io::write_json(&report, &out.join("lc_fit_report.json")).internal()?;
    Ok(())
}

fn spec_file_name(variant: SpecVariant) -> &'static str {
    match variant {
        SpecVariant::Hsm1 => "spec_hsm_1.json",
        SpecVariant::Hsm2 => "spec_hsm_2.json",
        SpecVariant::Hsm3 => "spec_hsm_3.json",
        SpecVariant::Hsm4 => "spec_hsm_4.json",
        SpecVariant::GompertzFree => "spec_gompertz_free.json",
        SpecVariant::GompertzConstrained => "spec_gompertz_constrained.json",
    }
}

fn cmd_fit_subgroup(
    config: &RunConfig,
    out: &Path,
    input: &Path,
    lc_path: &Path,
) -> Result<(), CmdError> {
    let lc = io::read_lc_params(lc_path).validation()?;
    let panel = io::read_subgroup_csv(input, &config.waves).validation()?;
    let grid = AgeGrid::new(config.x0, config.x1).validation()?;
    let cells = build_pooled(&panel, &lc).validation()?;
    let n_used = cells.iter().filter(|c| c.exposure > 0.0).count();

    let mut score_rows = String::from("model,free_params,log_likelihood,aic,bic\n");
    for variant in [
        SpecVariant::Hsm1,
        SpecVariant::Hsm2,
        SpecVariant::Hsm3,
        SpecVariant::Hsm4,
    ] {
        let fit = fit_hsm(&cells, variant, ShapeConstraints::baseline(), &grid).internal()?;
        let scores = model_scores(&fit, &cells);
        score_rows.push_str(&format!(
            "{:?},{},{},{},{}\n",
            variant, scores.free_params, scores.log_likelihood, scores.aic, scores.bic
        ));
        let artifact = SpecArtifact {
            grid,
            spec: fit.spec.clone(),
            report: fit.report.clone(),
        };
        io::write_json(&artifact, &out.join(spec_file_name(variant))).internal()?;
    }
    for constrained in [false, true] {
        let fit = gompertz_fit(&cells, &grid, constrained).internal()?;
        let ll =
            ndcfair::subgroup::full_log_likelihood(&fit.spec, &grid, &cells).internal()?;
        let scores = scores_from(fit.spec.free_params(), ll, n_used);
        let variant = fit.spec.variant();
        score_rows.push_str(&format!(
            "{:?},{},{},{},{}\n",
            variant, scores.free_params, scores.log_likelihood, scores.aic, scores.bic
        ));
        io::write_json(&fit.spec, &out.join(spec_file_name(variant))).internal()?;
    }
    std::fs::write(out.join("model_scores.csv"), score_rows).internal()?;
    Ok(())
}

fn cmd_fair_cm(config: &RunConfig, out: &Path, lc: &Path, spec: &Path) -> Result<(), CmdError> {
    let model = load_model(config, lc, spec)?;
    let basis = AnnuityBasis::new(config.r, config.x1).validation()?;
    let mut csv = String::from("age,quintile,m_fair,m_off,subsidy\n");
    for &age in &config.retirement_ages {
        let m_off = annuity::official_cm(age).validation()?;
        for group in 0..model.groups() {
            let m_fair = model
                .fair_cm_at_year(age, group, config.ref_year, &basis)
                .internal()?;
            let lambda = annuity::subsidy(m_fair, f64::from(m_off)).internal()?;
            csv.push_str(&format!(
                "{age},{},{m_fair:.1},{m_off},{}%\n",
                group + 1,
                annuity::format_subsidy_percent(lambda)
            ));
        }
    }
    std::fs::write(out.join("fair_cm.csv"), csv).internal()?;
    Ok(())
}

fn cmd_project(
    config: &RunConfig,
    out: &Path,
    lc: &Path,
    spec: &Path,
    n_paths: Option<usize>,
    sigma: Option<f64>,
) -> Result<(), CmdError> {
    let model = load_model(config, lc, spec)?;
    let basis = AnnuityBasis::new(config.r, config.x1).validation()?;
    let mut rwd = fit_rwd(&model.lc.kappa).validation()?;
    if let Some(s) = sigma {
        rwd.sigma = s;
    }
    let base_year = model.lc.last_year();
    let kappa_base = model.lc.kappa_at(base_year).unwrap_or(0.0);
    let horizon = (config.horizon_year - base_year).max(0) as usize;
    let n_paths = n_paths.unwrap_or(config.n_paths);
    let paths = simulate_kappa(&rwd, kappa_base, base_year, horizon, n_paths, config.seed);

    let mut csv = String::from("year,age,quintile,m_fair_median,lambda_median\n");
    for &age in &config.retirement_ages {
        let m_off = f64::from(annuity::official_cm(age).validation()?);
        for group in 0..model.groups() {
            // Reference-year row from the fitted index, then simulated
            // medians. The subsidy is an increasing function of the fair
            // counting month, so the median subsidy is the subsidy of the
            // median (lower medians commute with monotone maps).
            let m_ref = model
                .fair_cm_at_year(age, group, config.ref_year, &basis)
                .internal()?;
            csv.push_str(&format!(
                "{},{age},{},{},{}\n",
                config.ref_year,
                group + 1,
                m_ref,
                m_ref / m_off - 1.0
            ));
            let medians = median_projection(&paths, |kappa| {
                model
                    .fair_cm_at_kappa(age, group, kappa, &basis)
                    .unwrap_or(f64::NAN)
            });
            for (step, m_med) in medians.iter().enumerate() {
                csv.push_str(&format!(
                    "{},{age},{},{},{}\n",
                    paths.year_of_step(step),
                    group + 1,
                    m_med,
                    m_med / m_off - 1.0
                ));
            }
        }
    }
    std::fs::write(out.join("projection.csv"), csv).internal()?;
    Ok(())
}

#[derive(serde::Serialize)]
struct ExactDiag {
    feasible: bool,
    delta: Option<Vec<f64>>,
    cumulative: Option<Vec<f64>>,
    error: Option<String>,
}

fn exact_diag(result: Result<rules::ExactSchedule, rules::RulesError>) -> ExactDiag {
    match result {
        Ok(e) => ExactDiag {
            feasible: true,
            delta: Some(e.delta),
            cumulative: Some(e.cumulative),
            error: None,
        },
        Err(e) => ExactDiag {
            feasible: false,
            delta: None,
            cumulative: None,
            error: Some(e.to_string()),
        },
    }
}

fn cmd_calibrate_rules(
    out: &Path,
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
) -> Result<(), CmdError> {
    let m1 = method1_schedule(anchors, quintiles).validation()?;
    let m2 = method2_schedule(anchors, quintiles).validation()?;
    let c3 = method3_calibrate(anchors, quintiles).internal()?;
    let c4 = method4_calibrate(anchors, quintiles).internal()?;

    io::write_json(&m1, &out.join("rule_method1.json")).internal()?;
    io::write_json(&m2, &out.join("rule_method2.json")).internal()?;
    io::write_json(&c3.schedule, &out.join("rule_method3.json")).internal()?;
    io::write_json(&c4.schedule, &out.join("rule_method4.json")).internal()?;

    let diagnostics = serde_json::json!({
        "method3_exact": exact_diag(method3_exact(anchors, quintiles)),
        "method4_exact": exact_diag(method4_exact(anchors, quintiles)),
        "method3_calibration": c3.report,
        "method4_calibration": c4.report,
    });
    io::write_json(&diagnostics, &out.join("rule_diagnostics.json")).internal()?;
    Ok(())
}

fn cmd_evaluate_rules(
    config: &RunConfig,
    out: &Path,
    anchors: &FairAnchors,
    quintiles: &IncomeQuintiles,
    k_min: f64,
    k_max: f64,
    k_step: f64,
) -> Result<(), CmdError> {
    if !(k_min > 0.0 && k_max > k_min && k_step > 0.0) {
        return Err(CmdError::Validation(anyhow!(
            "need 0 < k_min < k_max and a positive step"
        )));
    }
    let schedules: Vec<(&str, RuleSchedule)> = vec![
        ("method1", method1_schedule(anchors, quintiles).validation()?),
        ("method2", method2_schedule(anchors, quintiles).validation()?),
        (
            "method3",
            method3_calibrate(anchors, quintiles).internal()?.schedule,
        ),
        (
            "method4",
            method4_calibrate(anchors, quintiles).internal()?.schedule,
        ),
    ];
    let fair = anchor_benchmark(anchors, quintiles);

    let mut csv = String::from(
        "method,income,benefit,benefit_income_ratio,avg_cm,marginal_cm,residual_subsidy\n",
    );
    let n_points = ((k_max - k_min) / k_step).floor() as usize + 1;
    for (name, schedule) in &schedules {
        for i in 0..n_points {
            let k = k_min + i as f64 * k_step;
            let b = schedule.benefit(k, config.phi);
            let avg = schedule.average_cm(k);
            let marginal = schedule.marginal_cm(k);
            let lambda = rules::residual_subsidy(k, schedule, &fair);
            csv.push_str(&format!(
                "{name},{k},{b},{},{avg},{marginal},{lambda}\n",
                b / k
            ));
        }
    }
    std::fs::write(out.join("rules_grid.csv"), csv).internal()?;
    Ok(())
}
