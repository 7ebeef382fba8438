//! Command-line front end: `verify-derivative`, `simulate`,
//! `check-assumptions` and `report`.
//!
//! Exit codes are 0 on pass, 1 when a criterion fails and 2 on usage or
//! configuration errors.

use crate::config::{Config, VerifySpec, VerifySuite};
use crate::copulas::C2Audit;
use crate::error::{Error, Result};
use crate::mapping::{
    verify_quantile_lemma, verify_theorem_1, verify_theorem_2, PerturbationA, PerturbationB, PerturbationBAlpha,
    RateParams,
};
use crate::mc::{run_equivalence, summarize, ExperimentReport, Record, Statistic};
use crate::models::{check_z_assumption, ZRateReport, ZVariant};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "copula-proc",
    version,
    about = "Empirical copula process experiments and verification suites"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Difference-quotient checks of the copula mapping and the quantile lemma.
    VerifyDerivative(Common),
    /// Monte Carlo comparison of residual and oracle empirical copulas.
    Simulate(Common),
    /// (C2) lattice scans and (Z1)/(Z2) rate fits.
    CheckAssumptions(Common),
    /// Re-aggregates the records of an earlier `simulate` run.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory holding `records.csv`.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `mc.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "COPULA_PROC_THREADS")]
    pub threads: Option<usize>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyDerivative(_) => "verify-derivative",
            Command::Simulate(_) => "simulate",
            Command::CheckAssumptions(_) => "check-assumptions",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::VerifyDerivative(c) | Command::Simulate(c) | Command::CheckAssumptions(c) => c,
            Command::Report { common, .. } => common,
        }
    }
}

/// Provenance record, written before the run starts and rewritten at the end.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: Config,
    pub started_unix_nanos: u128,
    pub finished_unix_nanos: Option<u128>,
    pub outputs: Vec<PathBuf>,
    pub exit_code: Option<u8>,
}

/// A run directory plus its manifest.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, config: &Config, out: &Path) -> Result<Self> {
        let started = unix_nanos();
        let seed = config.mc.seed;
        let mut dir = out.join(format!("{command}-{seed}-{started}"));
        let mut k = 1;
        while dir.exists() {
            dir = out.join(format!("{command}-{seed}-{started}-{k}"));
            k += 1;
        }
        std::fs::create_dir_all(&dir)?;
        let run = Run {
            dir,
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed,
                config: config.clone(),
                started_unix_nanos: started,
                finished_unix_nanos: None,
                outputs: Vec::new(),
                exit_code: None,
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    fn write_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(self.dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    fn finish(&mut self, code: u8) -> Result<()> {
        self.manifest.finished_unix_nanos = Some(unix_nanos());
        self.manifest.exit_code = Some(code);
        self.write_manifest()
    }
}

fn unix_nanos() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::FitFailed(_) | Error::SingularDesign { .. } => EXIT_FAIL,
        _ => EXIT_USAGE,
    }
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS });
        }
    };
    ExitCode::from(run(&cli.command))
}

/// Runs one command; the returned value is the process exit code.
pub fn run(command: &Command) -> u8 {
    match execute(command) {
        Ok(passed) => {
            println!("result: {}", if passed { "pass" } else { "fail" });
            if passed {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn execute(command: &Command) -> Result<bool> {
    let common = command.common();
    let mut config = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.mc.seed = seed;
    }
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(Error::Usage("--threads must be positive".into()));
        }
        // A pool set up earlier in the process stays in place.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    // Validate everything that does not need a run directory first.
    match command {
        Command::Simulate(_) => {
            config.experiment()?;
            if config.model.is_none() {
                return Err(Error::Config("simulate needs a model section".into()));
            }
        }
        Command::CheckAssumptions(_) => {
            let a = config.assumptions.as_ref();
            if a.is_none_or(|a| a.c2.is_none() && a.z.is_none()) {
                return Err(Error::Config(
                    "check-assumptions needs assumptions.c2 or assumptions.z".into(),
                ));
            }
        }
        _ => {}
    }
    let out = common.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let mut run = Run::start(command.name(), &config, &out)?;
    println!("run directory: {}", run.dir.display());
    let outcome = match command {
        Command::VerifyDerivative(_) => verify_derivative(&config, &mut run),
        Command::Simulate(_) => simulate(&config, &mut run),
        Command::CheckAssumptions(_) => check_assumptions(&config, &mut run),
        Command::Report { input, .. } => report(&config, input, &mut run),
    };
    let code = match &outcome {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_FAIL,
        Err(e) => exit_code_for(e),
    };
    run.finish(code)?;
    outcome
}

/// Entry point of `verify-derivative`.
pub fn cmd_verify_derivative(config: &Path) -> u8 {
    run(&Command::VerifyDerivative(common_for(config)))
}

/// Entry point of `simulate`.
pub fn cmd_simulate(config: &Path) -> u8 {
    run(&Command::Simulate(common_for(config)))
}

/// Entry point of `check-assumptions`.
pub fn cmd_check_assumptions(config: &Path) -> u8 {
    run(&Command::CheckAssumptions(common_for(config)))
}

fn common_for(config: &Path) -> Common {
    Common {
        config: config.to_path_buf(),
        seed: None,
        out: None,
        threads: None,
    }
}

fn verify_derivative(config: &Config, run: &mut Run) -> Result<bool> {
    let spec = config.verify.clone().unwrap_or_default();
    let mut passed = true;
    for suite in &spec.copulas {
        passed &= verify_copula(config, &spec, suite, run)?;
    }
    match config.rates {
        Some(rates) => {
            for (i, pair) in spec.quantile.iter().enumerate() {
                let table = verify_quantile_lemma(
                    &pair.h,
                    &pair.h_tilde,
                    &rates,
                    &spec.quantile_t_sequence,
                    spec.quantile_lattice,
                )?;
                table.write_csv(&run.path(&format!("quantile_{i}.csv")))?;
                println!("{} quantile pair {i}", status(table.passed));
                for d in &table.diagnostics {
                    println!("  {d}");
                }
                passed &= table.passed;
            }
        }
        None if !spec.quantile.is_empty() || spec.shrinking_region => {
            println!("SKIP quantile and weighted checks: no rates section");
        }
        None => {}
    }
    Ok(passed)
}

fn verify_copula(config: &Config, spec: &VerifySpec, suite: &VerifySuite, run: &mut Run) -> Result<bool> {
    let c = suite.copula.build()?;
    let d = suite.copula.d;
    let grid = config.grid.build(d)?;
    let h = PerturbationA::analytic(suite.h.unwrap_or(spec.h), d)?;
    let hb = PerturbationB::new(vec![suite.h_tilde.unwrap_or(spec.h_tilde); d])?;
    let label = suite.copula.label();
    let mut passed = true;
    if spec.full_cube {
        let table = verify_theorem_1(&c, &h, &hb, &spec.t_sequence, &grid)?;
        table.write_csv(&run.path(&format!("full_cube_{label}.csv")))?;
        println!("{} full-cube quotients {label}", status(table.passed));
        for line in &table.diagnostics {
            println!("  {line}");
        }
        passed &= table.passed;
    }
    if let (true, Some(rates)) = (spec.shrinking_region, config.rates) {
        let hb = PerturbationBAlpha::new(hb, rates.alpha(), spec.bound)?;
        let table = verify_theorem_2(&c, &h, &hb, &rates, &spec.t_sequence, &grid)?;
        table.write_csv(&run.path(&format!("shrinking_region_{label}.csv")))?;
        println!("{} shrinking-region quotients {label}", status(table.passed));
        for line in &table.diagnostics {
            println!("  {line}");
        }
        passed &= table.passed;
    }
    Ok(passed)
}

fn simulate(config: &Config, run: &mut Run) -> Result<bool> {
    let cfg = config.experiment()?;
    let spec = config
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a model section".into()))?;
    let model = spec.build(config.copula.build()?)?;
    let report = run_equivalence(model.as_ref(), &cfg)?;
    report.write_records_csv(&run.path("records.csv"))?;
    write_summary(&report, run)?;
    Ok(report.passed)
}

/// `aggregates.csv`, `summary.json` and one status line per verdict.
fn write_summary(report: &ExperimentReport, run: &mut Run) -> Result<()> {
    write_aggregates(report, &run.path("aggregates.csv"))?;
    let summary = Summary {
        verdicts: &report.verdicts,
        failed_fits: report.failed_fits,
        total_fits: report.total_fits,
        passed: report.passed,
    };
    std::fs::write(run.path("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    for v in &report.verdicts {
        let slope = v.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        println!(
            "{} {} medians {:?} slope {slope}",
            status(v.passed),
            v.statistic.name(),
            v.medians
        );
    }
    println!("failed fits: {} of {}", report.failed_fits, report.total_fits);
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    verdicts: &'a [crate::mc::Verdict],
    failed_fits: usize,
    total_fits: usize,
    passed: bool,
}

fn write_aggregates(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema=1")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["n", "statistic", "median", "q90", "count"])?;
    for a in &report.aggregates {
        w.write_record([
            a.n.to_string(),
            a.statistic.name().to_string(),
            a.median.to_string(),
            a.q90.to_string(),
            a.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `records.csv` written by `simulate`.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path)?;
    let body = text
        .strip_prefix("# schema=1\n")
        .ok_or_else(|| Error::Config(format!("{}: expected a '# schema=1' header line", path.display())))?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Config(format!("{}: row {}: bad {what}", path.display(), i + 2));
        if row.len() != 6 {
            return Err(bad("column count"));
        }
        let statistic: Statistic =
            serde_json::from_value(serde_json::Value::String(row[3].to_string())).map_err(|_| bad("statistic"))?;
        records.push(Record {
            n: row[0].parse().map_err(|_| bad("n"))?,
            replication: row[1].parse().map_err(|_| bad("replication"))?,
            seed: row[2].parse().map_err(|_| bad("seed"))?,
            statistic,
            value: row[4].parse().map_err(|_| bad("value"))?,
            flagged: match &row[5] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("flagged")),
            },
        });
    }
    Ok(records)
}

fn report(config: &Config, input: &Path, run: &mut Run) -> Result<bool> {
    let records = read_records(&input.join("records.csv"))?;
    let mut n_sequence: Vec<usize> = records.iter().map(|r| r.n).collect();
    n_sequence.sort_unstable();
    n_sequence.dedup();
    let mut decisive = vec![config.mc.statistic];
    if config.mc.representation && config.mc.statistic != Statistic::ReprError {
        decisive.push(Statistic::ReprError);
    }
    let report = summarize(records, &n_sequence, &decisive)?;
    write_summary(&report, run)?;
    Ok(report.passed)
}

fn check_assumptions(config: &Config, run: &mut Run) -> Result<bool> {
    let assumptions = config.assumptions.clone().unwrap_or_default();
    let mut passed = true;
    if let Some(c2) = &assumptions.c2 {
        let copula = config.copula.build()?;
        let audit = copula.audit_c2(c2.beta, &c2.m_values)?;
        write_c2(&audit, &run.path("c2.csv"))?;
        let ratios: Vec<f64> = audit.reports.iter().map(|r| r.max_ratio).collect();
        println!(
            "{} c2 {} beta {} ratios {ratios:?} growth {:.3}",
            status(audit.passed),
            config.copula.label(),
            c2.beta,
            audit.growth
        );
        passed &= audit.passed;
    }
    if let Some(z) = &assumptions.z {
        let spec = config
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("assumptions.z needs a model section".into()))?;
        let model = spec.build(config.copula.build()?)?;
        let rates = match (config.rates, z.variant) {
            (Some(r), _) => r,
            (None, ZVariant::Z1) => RateParams::copula(0.5, 0.5, 0.0, 1.0)?,
            (None, ZVariant::Z2) => return Err(Error::Config("the Z2 check needs a rates section".into())),
        };
        let margins: Vec<usize> = if z.margins.is_empty() {
            (0..model.dim()).collect()
        } else {
            z.margins.clone()
        };
        let settings = config.z_settings(z);
        let mut reports = Vec::new();
        for &j in &margins {
            let r = check_z_assumption(model.as_ref(), j, z.variant, &rates, &z.n_sequence, &settings)?;
            let slope = r.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
            println!(
                "{} {:?} margin {j} medians {:?} slope {slope}",
                status(r.passed),
                r.variant,
                r.medians
            );
            passed &= r.passed;
            reports.push(r);
        }
        write_z(&reports, &run.path("z_rates.csv"))?;
    }
    Ok(passed)
}

fn write_c2(audit: &C2Audit, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema=1")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["family", "beta", "m", "max_ratio", "passed_flag"])?;
    for r in &audit.reports {
        w.write_record([
            r.family.clone(),
            r.beta.to_string(),
            r.m.to_string(),
            r.max_ratio.to_string(),
            u8::from(r.passed).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_z(reports: &[ZRateReport], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema=1")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "variant",
        "margin",
        "n",
        "median",
        "rate_normalized",
        "slope",
        "passed_flag",
    ])?;
    for r in reports {
        let variant = match r.variant {
            ZVariant::Z1 => "z1",
            ZVariant::Z2 => "z2",
        };
        for (i, &n) in r.n.iter().enumerate() {
            w.write_record([
                variant.to_string(),
                r.margin.to_string(),
                n.to_string(),
                r.medians[i].to_string(),
                r.rate_normalized[i].to_string(),
                r.slope.map_or(String::new(), |s| s.to_string()),
                u8::from(r.passed).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
