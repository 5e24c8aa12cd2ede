use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cbam_ge::calibrate::{build_baseline, calibrate_manifest, export};
use cbam_ge::counterfactual::{run_sweep, SweepSpec};
use cbam_ge::linearize::{eei_terms, linearize, FactorDerivatives, ShockFlow};
use cbam_ge::metrics::ScenarioMetrics;
use cbam_ge::suite::{
    run_scenario_suite, verify_hashes, NamedBaselineShock, SuiteOptions, SuiteReport, THREADS_ENV,
};
use cbam_ge::{fixtures, solve, PolicyScenario, WorldEconomy};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "cbam",
    version,
    about = "Carbon border adjustment counterfactuals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate an economy from a manifest of CSV inputs.
    Calibrate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Apply a baseline emissions shock and recalibrate.
    Baseline {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        shock: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Solve one policy scenario.
    Solve {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Directory for solution.json and metrics.json.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario across a grid of structural counterfactuals.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the economy named in the spec.
        #[arg(long)]
        economy: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// First-order responses to a wedge on one flow `l,s,q,r`.
    Linearize {
        #[arg(long)]
        economy: PathBuf,
        #[arg(long)]
        flow: String,
        /// Hold wages and carbon prices fixed.
        #[arg(long)]
        partial: bool,
        /// Step of the central difference for factor responses.
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the results of a finished suite run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Calibrate, build the baseline, solve all scenarios and write tables.
    Suite {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Write a built-in economy as CSV inputs with a manifest.
    Fixture {
        #[arg(long, value_enum, default_value_t = FixtureName::FourCountry)]
        name: FixtureName,
        /// Seed for the random three-country economy.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    TwoByTwo,
    ThreeCountry,
    FourCountry,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// An economy JSON, or a calibration manifest that is calibrated on the fly.
fn load_economy(path: &Path) -> Result<WorldEconomy> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("dims").is_some() {
        let econ: WorldEconomy = serde_json::from_value(value)?;
        econ.validate()?;
        return Ok(econ);
    }
    Ok(calibrate_manifest(path)?.economy)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

#[derive(Deserialize)]
struct SweepFile {
    economy: Option<PathBuf>,
    #[serde(flatten)]
    spec: SweepSpec,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let closed = e
                .downcast_ref::<std::io::Error>()
                .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe);
            if closed {
                return ExitCode::SUCCESS;
            }
            let mut msg = e.to_string();
            for cause in e.chain().skip(1).map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate { manifest, out } => {
            let cal = calibrate_manifest(&manifest)?;
            fs::create_dir_all(&out)?;
            write_json(&out.join("economy.json"), &cal.economy)?;
            println!(
                "calibrated {} countries x {} sectors; imputed output {}, clamped beta {}, clipped rho {}",
                cal.economy.dims.n_countries,
                cal.economy.dims.n_sectors,
                cal.imputed_output.len(),
                cal.clamped_beta,
                cal.clipped_rho
            );
        }
        Command::Baseline {
            economy,
            shock,
            out,
        } => {
            let econ = load_economy(&economy)?;
            let named: NamedBaselineShock = read_json(&shock)?;
            let b = build_baseline(&econ, &named.resolve(&econ.country_names)?)?;
            let text = serde_json::to_string_pretty(&b.economy)? + "\n";
            sink(&out)?.write_all(text.as_bytes())?;
        }
        Command::Solve {
            economy,
            scenario,
            out,
        } => {
            let econ = load_economy(&economy)?;
            let scn: PolicyScenario = read_json(&scenario)?;
            let sol = solve(&econ, &scn, None)?;
            let metrics = ScenarioMetrics::compute(&econ, &sol)?;
            if let Some(dir) = &out {
                write_json(&dir.join("solution.json"), &sol)?;
                write_json(&dir.join("metrics.json"), &metrics)?;
            }
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            w.write_record(["metric", "value"])?;
            for (k, v) in metrics.headline() {
                w.write_record([k, v.to_string()])?;
            }
            w.flush()?;
        }
        Command::Sweep { spec, economy, out } => {
            let file: SweepFile = read_json(&spec)?;
            let econ_path = match (economy, file.economy) {
                (Some(p), _) => p,
                (None, Some(p)) => spec.parent().unwrap_or(Path::new(".")).join(p),
                (None, None) => bail!("the sweep spec names no economy; pass --economy"),
            };
            let econ = load_economy(&econ_path)?;
            let result = run_sweep(&econ, &file.spec)?;
            let mut w = csv::Writer::from_writer(sink(&out)?);
            w.write_record([
                result.axis.label(),
                "direct_without_tons",
                "direct_with_tons",
                "total_without_tons",
                "total_with_tons",
                "direct_effect_pct",
                "total_effect_pct",
                "direct_change_pct",
                "total_change_pct",
            ])?;
            for p in &result.points {
                w.write_record(
                    [
                        p.value,
                        p.direct_without_tons,
                        p.direct_with_tons,
                        p.total_without_tons,
                        p.total_with_tons,
                        p.direct_effect_pct,
                        p.total_effect_pct,
                        p.direct_change_pct,
                        p.total_change_pct,
                    ]
                    .map(|x| x.to_string()),
                )?;
            }
            w.flush()?;
        }
        Command::Linearize {
            economy,
            flow,
            partial,
            step,
            out,
        } => {
            let econ = load_economy(&economy)?;
            let flow = ShockFlow::parse(&flow)?;
            let fd = if partial {
                FactorDerivatives::zero(econ.dims.n_countries)
            } else {
                FactorDerivatives::from_solver(&econ, flow, step, 1e-13)?
            };
            let r = linearize(&econ, flow, &fd)?;
            let terms = eei_terms(&econ, flow, &fd)?;
            write_linearization(&econ, &r, &fd, &terms, sink(&out)?)?;
        }
        Command::Report { run, format } => {
            let report = SuiteReport::load(&run)?;
            verify_hashes(&run)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Csv => print!("{}", report.headline_csv()?),
            }
        }
        Command::Suite {
            manifest,
            out,
            threads,
        } => {
            let options = SuiteOptions { threads };
            let report = run_scenario_suite(&manifest, &out, &options)?;
            for s in &report.scenarios {
                println!(
                    "{}: {} iterations, max residual {:.2e}",
                    s.name, s.iterations, s.max_residual
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Fixture { name, seed, out } => {
            let econ = match name {
                FixtureName::TwoByTwo => fixtures::two_by_two(),
                FixtureName::ThreeCountry => fixtures::three_country(seed),
                FixtureName::FourCountry => fixtures::leakage_four_country(),
            };
            fs::create_dir_all(&out)?;
            export(&econ, &out)?;
            println!("wrote {}", out.join("manifest.json").display());
        }
    }
    Ok(())
}

fn write_linearization(
    econ: &WorldEconomy,
    r: &cbam_ge::linearize::LinearizedResponse,
    fd: &FactorDerivatives,
    terms: &cbam_ge::linearize::EeiTerms,
    out: Box<dyn Write>,
) -> Result<()> {
    let d = econ.dims;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "quantity",
        "country",
        "sector",
        "buyer_country",
        "buyer_sector",
        "value",
    ])?;
    let label = |k: usize| {
        (
            econ.country_name(d.country_of(k)),
            econ.sector_name(d.sector_of(k)),
        )
    };
    for i in 0..d.n_countries {
        let c = econ.country_name(i);
        w.write_record(["dlogw", &c, "", "", "", &fd.dlogw[i].to_string()])?;
        w.write_record(["dlogt", &c, "", "", "", &fd.dlogt[i].to_string()])?;
        w.write_record([
            "dlog_welfare",
            &c,
            "",
            "",
            "",
            &r.dlog_welfare[i].to_string(),
        ])?;
    }
    for k in 0..d.nj() {
        let (c, s) = label(k);
        w.write_record(["dlogp", &c, &s, "", "", &r.dlogp[k].to_string()])?;
    }
    for col in 0..d.nj() {
        for row in 0..d.nj() {
            if econ.iota[(row, col)] == 0.0 {
                continue;
            }
            let (c, s) = label(row);
            let (bc, bs) = label(col);
            w.write_record([
                "dlog_cost_share",
                &c,
                &s,
                &bc,
                &bs,
                &r.dlog_omega_tilde[(row, col)].to_string(),
            ])?;
        }
    }
    for (name, v) in [
        ("dcbam", r.dcbam),
        ("cbam_shock", r.cbam_shock),
        ("dlog_eei", r.dlog_eei),
        ("dlog_eei_intensity", terms.intensity),
        ("dlog_eei_network", terms.network),
        ("dlog_eei_imports", terms.imports),
    ] {
        w.write_record([name, "", "", "", "", &v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
