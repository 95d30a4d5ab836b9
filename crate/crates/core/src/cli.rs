//! `sesqui certify | simulate | check <config.toml>`.
//!
//! Exit codes: 0 when nothing failed, 1 when a criterion failed or a solve
//! broke down, 2 for unreadable or invalid input.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::certificates::certify;
use crate::config::{is_runtime_check, projection_from_rows, BuiltModel, CheckConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::evolution::evolve;
use crate::forms::FormMatrix;
use crate::linalg::CMat;
use crate::qualitative::{
    averaging_projection, domination_check, ephaptic_sum_check, identification_check, linf_contractivity_check,
    mean_zero_projection, parabola_criterion, positivity_check, product_subspace_check, random_span_projection,
    realness_check, sector_criterion, strip_invariance_runtime, subspace_invariance_check,
    subsystem_invariance_check, CheckResult, ProjectionSpec, StripDirection, SumKind,
};
use crate::report::{CertificateEntry, Criterion, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INVALID: i32 = 2;

const DEFAULT_OUT: &str = "sesqui-out";

#[derive(Debug, Parser)]
#[command(name = "sesqui", version, about = "Certificates, simulations and invariance checks for form matrices")]
pub struct Cli {
    /// Root seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true, env = "SESQUI_OUT")]
    pub out: Option<PathBuf>,
    /// Suppress the report on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scalar certificates from the `[constants]` table.
    Certify { path: PathBuf },
    /// Integrate the model and write `trajectory.csv`.
    Simulate { path: PathBuf },
    /// Run the `[[checks]]` list and write `checks.txt`.
    Check { path: PathBuf },
}

/// Parse `args` (program name first) and run. Returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Certify { path } => cmd_certify(cli, path),
        Command::Simulate { path } => cmd_simulate(cli, path),
        Command::Check { path } => cmd_check(cli, path),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("sesqui: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Dimension(_) => EXIT_INVALID,
        Error::Numerical(_) | Error::Solver { .. } | Error::Io(_) => EXIT_FAIL,
    }
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    let target = dir.join(name);
    tmp.persist(&target).map_err(|e| Error::Io(e.error))?;
    Ok(target)
}

fn verdict_code(entries: &[&CertificateEntry]) -> i32 {
    if entries.iter().any(|e| e.verdict.is_fail()) {
        EXIT_FAIL
    } else {
        EXIT_OK
    }
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    command: &'a str,
    config: String,
    seed: u64,
    entries: T,
}

pub fn cmd_certify(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = ExperimentConfig::load(path)?;
    let bundle = cfg.bundle()?;
    let cc = cfg.constants.as_ref().expect("bundle() checked presence");
    let report = certify(&bundle, cc.diagonal_accretive)?;
    let wanted: Vec<Criterion> = match &cc.criteria {
        None => report.entries.iter().map(|e| e.criterion).collect(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                Criterion::from_id(id)
                    .filter(|c| report.get(*c).is_some())
                    .ok_or_else(|| Error::Config(format!("constants.criteria: `{id}` is not a certificate")))
            })
            .collect::<Result<_>>()?,
    };
    let entries: Vec<&CertificateEntry> = report.entries.iter().filter(|e| wanted.contains(&e.criterion)).collect();
    let text: String = entries.iter().map(|e| e.to_line() + "\n").collect();
    let dir = out_dir(cli, &cfg);
    write_atomic(&dir, "certify.txt", &text)?;
    let record = Record {
        command: "certify",
        config: path.display().to_string(),
        seed: cfg.seed(cli.seed),
        entries: &entries,
    };
    write_atomic(&dir, "certify.json", &(serde_json::to_string_pretty(&record).expect("serialisable") + "\n"))?;
    if !cli.quiet {
        print!("{text}");
    }
    Ok(verdict_code(&entries))
}

/// The configured projection, or the averaging one when every space is the
/// same and nothing was configured.
fn simulate_projection(cfg: &ExperimentConfig, form: &FormMatrix) -> Result<Option<ProjectionSpec>> {
    match &cfg.projection {
        Some(rows) => projection_from_rows(rows).map(Some),
        None if form.m() >= 2 && form.identical_spaces() => averaging_projection(form.m()).map(Some),
        None => Ok(None),
    }
}

pub fn cmd_simulate(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = ExperimentConfig::load(path)?;
    let seed = cfg.seed(cli.seed);
    let evo = cfg.evolution()?;
    let BuiltModel { form, .. } = cfg.build_model(seed)?;
    let u0 = cfg.initial_data(&form, seed)?;
    let proj = simulate_projection(&cfg, &form)?;
    let record = evolve(&form, &u0, &evo, proj.as_ref())?;
    let dir = out_dir(cli, &cfg);
    let target = write_atomic(&dir, "trajectory.csv", &record.to_csv(form.m()))?;
    if !cli.quiet {
        let last = record.len() - 1;
        println!(
            "{}: {} records, t = {}, h_norm {} -> {}, written to {}",
            form.metadata().model,
            record.len(),
            crate::fmt_f64(record.times[last]),
            crate::fmt_f64(record.h_norm[0]),
            crate::fmt_f64(record.h_norm[last]),
            target.display()
        );
    }
    Ok(EXIT_OK)
}

fn check_projection(check: &CheckConfig, form: &FormMatrix) -> Result<ProjectionSpec> {
    match &check.projection {
        Some(rows) => projection_from_rows(rows),
        None => averaging_projection(form.m()),
    }
}

fn product_projections(check: &CheckConfig, form: &FormMatrix, seed: u64) -> Result<Vec<CMat>> {
    let kinds = check
        .subspaces
        .clone()
        .unwrap_or_else(|| vec!["mean_zero".to_string(); form.m()]);
    if kinds.len() != form.m() {
        return Err(Error::Config(format!(
            "product_subspace: {} subspaces for {} spaces",
            kinds.len(),
            form.m()
        )));
    }
    kinds
        .iter()
        .zip(form.spaces())
        .enumerate()
        .map(|(i, (kind, space))| match kind.as_str() {
            "mean_zero" => Ok(mean_zero_projection(space)),
            "full" => Ok(CMat::identity(space.dim(), space.dim())),
            "random" => Ok(random_span_projection(space, seed.wrapping_add(i as u64))),
            other => Err(Error::Config(format!(
                "product_subspace: unknown subspace `{other}` (mean_zero, full, random)"
            ))),
        })
        .collect()
}

fn run_check(check: &CheckConfig, model: &BuiltModel, cfg: &ExperimentConfig, seed: u64) -> Result<CheckResult> {
    let form = &model.form;
    let seed = check.seed.unwrap_or(seed);
    let trials = check.trials.unwrap_or(20);
    let runtime = check.runtime.unwrap_or(true);
    let evo = if is_runtime_check(&check.id) && (check.id != "positivity" || runtime) {
        Some(cfg.evolution().map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("check `{}` needs [evolution]: {msg}", check.id)),
            other => other,
        })?)
    } else {
        None
    };
    let coefficients = || {
        model
            .coefficients
            .as_ref()
            .ok_or_else(|| Error::Config(format!("check `{}` needs a model with coupling coefficients", check.id)))
    };
    match check.id.as_str() {
        "row_sums" => Ok(ephaptic_sum_check(coefficients()?, SumKind::Rows)),
        "column_sums" => Ok(ephaptic_sum_check(coefficients()?, SumKind::Columns)),
        "subspace_C" => subspace_invariance_check(form, &check_projection(check, form)?, StripDirection::StripC),
        "subspace_B" => subspace_invariance_check(form, &check_projection(check, form)?, StripDirection::StripB),
        "strip_runtime" => {
            let direction = match check.direction.as_deref().unwrap_or("C") {
                "C" | "c" => StripDirection::StripC,
                "B" | "b" => StripDirection::StripB,
                other => return Err(Error::Config(format!("strip_runtime: direction `{other}` (expected C or B)"))),
            };
            if !form.identical_spaces() {
                return Ok(not_applicable(Criterion::StripRuntime, "factor spaces are not identical"));
            }
            let levels = check.alpha_levels.clone().unwrap_or_else(|| vec![0.0, 0.1, 1.0, 10.0]);
            let out = strip_invariance_runtime(
                form,
                &check_projection(check, form)?,
                direction,
                &levels,
                evo.as_ref().expect("runtime check"),
                check.trials.unwrap_or(5),
                seed,
            )?;
            Ok(out.summary)
        }
        "product_subspace" => product_subspace_check(form, &product_projections(check, form, seed)?),
        "subsystem" => {
            let m0 = check
                .m0
                .ok_or_else(|| Error::Config("check `subsystem` needs `m0`".into()))?;
            subsystem_invariance_check(form, m0).map_err(|e| Error::Config(e.to_string()))
        }
        "realness" => Ok(realness_check(form)),
        "positivity" => match &evo {
            Some(evo) => positivity_check(form, runtime, trials, evo, seed),
            None => positivity_check(form, false, trials, &crate::evolution::EvolutionConfig::implicit_euler(1.0, 1.0)?, seed),
        },
        "domination" => domination_check(form, trials, evo.as_ref().expect("runtime check"), seed),
        "linf" => linf_contractivity_check(form, runtime, trials, evo.as_ref().expect("runtime check"), seed),
        "parabola" => Ok(parabola_criterion(form, check.m_tilde, check.samples.unwrap_or(10_000), seed)),
        "sector" => sector_criterion(
            form,
            check.alpha,
            check.omega.unwrap_or(0.0),
            check.c,
            check.samples.unwrap_or(10_000),
            seed,
        ),
        "identification" => identification_check(form),
        other => Err(Error::Config(format!("unknown check id `{other}`"))),
    }
}

fn not_applicable(criterion: Criterion, why: &str) -> CheckResult {
    CheckResult {
        entry: CertificateEntry::new(criterion, Verdict::NotApplicable, why),
        witness: None,
    }
}

#[derive(Serialize)]
struct CheckRecord<'a> {
    id: &'a str,
    #[serde(flatten)]
    entry: &'a CertificateEntry,
    witness: Option<String>,
    first_violation: Option<f64>,
}

pub fn cmd_check(cli: &Cli, path: &Path) -> Result<i32> {
    let cfg = ExperimentConfig::load(path)?;
    if cfg.checks.is_empty() {
        return Err(Error::Config("no [[checks]] requested".into()));
    }
    let seed = cfg.seed(cli.seed);
    let model = cfg.build_model(seed)?;
    let dir = out_dir(cli, &cfg);
    let mut text = String::new();
    let mut records = Vec::new();
    let mut results = Vec::new();
    for check in &cfg.checks {
        let result = run_check(check, &model, &cfg, seed)?;
        results.push((check.id.as_str(), result));
    }
    for (id, result) in &results {
        text.push_str(&format!("check {id}\n  {}\n", result.entry.to_line()));
        let mut witness_file = None;
        if let Some(w) = &result.witness {
            let name = format!("witness_{}.csv", w.name);
            write_atomic(&dir, &name, &w.record.to_csv(model.form.m()))?;
            text.push_str(&format!("  witness: {name}"));
            if let Some(t) = w.first_violation {
                text.push_str(&format!(" (first violation at t = {})", crate::fmt_f64(t)));
            }
            text.push('\n');
            witness_file = Some(name);
        }
        records.push(CheckRecord {
            id,
            entry: &result.entry,
            witness: witness_file,
            first_violation: result.witness.as_ref().and_then(|w| w.first_violation),
        });
    }
    write_atomic(&dir, "checks.txt", &text)?;
    let record = Record {
        command: "check",
        config: path.display().to_string(),
        seed,
        entries: &records,
    };
    write_atomic(&dir, "checks.json", &(serde_json::to_string_pretty(&record).expect("serialisable") + "\n"))?;
    if !cli.quiet {
        print!("{text}");
    }
    let entries: Vec<&CertificateEntry> = results.iter().map(|(_, r)| &r.entry).collect();
    Ok(verdict_code(&entries))
}
