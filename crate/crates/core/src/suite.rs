//! End-to-end scenario runs: calibrate, build the baseline, solve the
//! border-adjustment scenarios, compute metrics and write result tables
//! into a versioned artifact directory.
//!
//! The tree (`layout_v1`) is deterministic: identical inputs give
//! byte-identical files for any thread count. `SHA256SUMS` lists a content
//! hash for every file. A failed run leaves an `INVALID` marker naming the
//! stage and, for solver failures, the last residuals.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{build_baseline, calibrate_with, BaselineShock, CalibrationManifest};
use crate::economy::WorldEconomy;
use crate::error::{Error, Result};
use crate::metrics::{endogenous_gap, GoodsFilter, ScenarioMetrics, Summary};
use crate::solver::{solve, CbamMode, HatSolution, PolicyScenario};

pub const LAYOUT_VERSION: &str = "layout_v1";
/// Environment variable read by the command-line front end for the size of
/// the scenario thread pool.
pub const THREADS_ENV: &str = "CBAM_THREADS";
const INVALID_MARKER: &str = "INVALID";
const LAYOUT_FILE: &str = "layout.json";
const HASH_FILE: &str = "SHA256SUMS";

/// Baseline shock keyed by country names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBaselineShock {
    /// Annual emission reduction per country; unlisted countries keep zero.
    #[serde(default)]
    pub annual_reduction: BTreeMap<String, f64>,
    #[serde(default = "default_base_year")]
    pub base_year: i32,
    #[serde(default = "default_target_year")]
    pub target_year: i32,
    #[serde(default)]
    pub free_allowance_cut: f64,
    #[serde(default)]
    pub exogenous_price_overrides: Vec<String>,
}

fn default_base_year() -> i32 {
    2018
}
fn default_target_year() -> i32 {
    2024
}

impl NamedBaselineShock {
    pub fn resolve(&self, countries: &[String]) -> Result<BaselineShock> {
        let index = |name: &str| {
            countries.iter().position(|c| c == name).ok_or_else(|| {
                Error::Argument(format!("baseline shock names unknown country '{name}'"))
            })
        };
        let mut annual_reduction = vec![0.0; countries.len()];
        for (name, rate) in &self.annual_reduction {
            annual_reduction[index(name)?] = *rate;
        }
        let exogenous_price_overrides = self
            .exogenous_price_overrides
            .iter()
            .map(|n| index(n).map(|i| i + 1))
            .collect::<Result<_>>()?;
        Ok(BaselineShock {
            annual_reduction,
            base_year: self.base_year,
            target_year: self.target_year,
            free_allowance_cut: self.free_allowance_cut,
            exogenous_price_overrides,
        })
    }
}

/// Published full-scale results a user-supplied calibration is compared
/// against. Percent changes; the tolerance is informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceTargets {
    pub scenario: String,
    pub eei_direct: f64,
    pub eei_total: f64,
    pub foreign_share_dirty: f64,
    pub eu_gne: f64,
    pub leakage: f64,
    pub tolerance_pp: f64,
}

impl Default for ReferenceTargets {
    fn default() -> Self {
        Self {
            scenario: "full_endogenous".into(),
            eei_direct: -8.84,
            eei_total: -5.19,
            foreign_share_dirty: -2.14,
            eu_gne: 0.04,
            leakage: -0.19,
            tolerance_pp: 0.5,
        }
    }
}

impl ReferenceTargets {
    /// `(target name, headline metric, target value)`.
    fn rows(&self) -> [(&'static str, &'static str, f64); 5] {
        [
            ("eei_direct", "eei_direct_total", self.eei_direct),
            ("eei_total", "eei_total_total", self.eei_total),
            (
                "foreign_share_dirty",
                "foreign_share_dirty",
                self.foreign_share_dirty,
            ),
            ("eu_gne", "eu_gne", self.eu_gne),
            ("leakage", "leakage", self.leakage),
        ]
    }
}

fn default_scenarios() -> Vec<PolicyScenario> {
    [
        ("reduced_endogenous", CbamMode::ReducedEndogenous),
        ("reduced_exogenous", CbamMode::ReducedExogenous),
        ("full_endogenous", CbamMode::FullEndogenous),
        ("full_exogenous", CbamMode::FullExogenous),
    ]
    .into_iter()
    .map(|(name, mode)| {
        let mut s = PolicyScenario::new(mode);
        s.name = name.into();
        s
    })
    .collect()
}

/// Calibration inputs plus what to run on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    #[serde(flatten)]
    pub calibration: CalibrationManifest,
    /// Without a shock the calibrated economy is the baseline.
    #[serde(default)]
    pub baseline: Option<NamedBaselineShock>,
    /// Defaults to reduced and full coverage, each with endogenous and
    /// exogenous wedges.
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<PolicyScenario>,
    /// Present to request a comparison with published results.
    #[serde(default)]
    pub reference: Option<ReferenceTargets>,
}

impl SuiteManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: SuiteManifest = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Argument("manifest lists no scenarios".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.scenarios {
            let ok = !s.name.is_empty()
                && s.name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(Error::Argument(format!(
                    "scenario name '{}' must be nonempty ASCII letters, digits, '_' or '-'",
                    s.name
                )));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Argument(format!(
                    "scenario name '{}' repeats",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Scenario thread pool size; `None` uses the global pool.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub cbam_mode: CbamMode,
    pub iterations: usize,
    pub max_residual: f64,
    pub headline: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub metric: String,
    pub target_pct: f64,
    pub computed_pct: f64,
    pub difference_pp: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub layout: String,
    pub manifest_sha256: String,
    pub countries: Vec<String>,
    pub sectors: Vec<String>,
    pub scenarios: Vec<ScenarioSummary>,
    /// Relative endogenous-minus-exogenous gap of each headline metric, per
    /// coverage with both timings present.
    pub endogenous_gaps: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<ReferenceRow>>,
}

impl SuiteReport {
    /// Reads `report.json` from a finished run; refuses invalid runs.
    pub fn load(run_dir: &Path) -> Result<Self> {
        let marker = run_dir.join(INVALID_MARKER);
        if marker.exists() {
            let why = fs::read_to_string(&marker).unwrap_or_default();
            return Err(Error::InvalidState(format!(
                "run in {} is marked invalid: {}",
                run_dir.display(),
                why.lines().next().unwrap_or("")
            )));
        }
        let path = run_dir.join("report.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `scenario,metric,value` rows.
    pub fn headline_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Csv {
            path: "report".into(),
            message: e.to_string(),
        };
        w.write_record(["scenario", "metric", "value"])
            .map_err(err)?;
        for s in &self.scenarios {
            for (k, v) in &s.headline {
                w.write_record([s.name.as_str(), k, &v.to_string()])
                    .map_err(err)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| err(e.into_error().into()))?)
            .map_err(|e| Error::InvalidState(e.to_string()))
    }
}

/// Runs every stage of `manifest_path` and writes the artifact tree into
/// `out`. `out` must be empty, absent or a previous run directory, valid or
/// not, which is replaced.
pub fn run_scenario_suite(
    manifest_path: &Path,
    out: &Path,
    options: &SuiteOptions,
) -> Result<SuiteReport> {
    prepare_output(out)?;
    match run_stages(manifest_path, out, options) {
        Ok(report) => {
            write_hashes(out)?;
            Ok(report)
        }
        Err(e) => {
            let _ = fs::write(out.join(INVALID_MARKER), describe_failure(&e));
            Err(e)
        }
    }
}

fn prepare_output(out: &Path) -> Result<()> {
    if out.exists() {
        let mut entries = fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if out.join(LAYOUT_FILE).exists() || out.join(INVALID_MARKER).exists() {
            fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
        } else if entries.next().is_some() {
            return Err(Error::Argument(format!(
                "output directory {} is not empty and holds no previous run",
                out.display()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn describe_failure(e: &Error) -> String {
    let mut text = format!("{e}\n");
    let mut cur = e;
    while let Error::Stage { source, .. } = cur {
        cur = source;
    }
    if let Error::NonConvergence { residuals, .. } = cur {
        for (name, r) in residuals {
            text.push_str(&format!("{name} {r:e}\n"));
        }
    }
    text
}

struct Writer<'a> {
    root: &'a Path,
}

impl Writer<'_> {
    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    fn json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let p = self.path(rel)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn csv(&self, rel: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(rel)?;
        let err = |e: csv::Error| Error::Csv {
            path: p.clone(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(&p).map_err(err)?;
        w.write_record(header).map_err(err)?;
        for r in rows {
            w.write_record(r).map_err(err)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct CalibrationSummary<'a> {
    countries: &'a [String],
    sectors: &'a [String],
    imputed_output: &'a [usize],
    clamped_beta: usize,
    clipped_rho: usize,
    steady_state: &'a [(String, f64)],
}

#[derive(Serialize)]
struct Layout<'a> {
    layout: &'a str,
    manifest_sha256: &'a str,
    inputs_sha256: BTreeMap<String, String>,
}

fn run_stages(manifest_path: &Path, out: &Path, options: &SuiteOptions) -> Result<SuiteReport> {
    let w = Writer { root: out };
    let manifest_bytes =
        fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e).at_stage("manifest"))?;
    let manifest = SuiteManifest::read(manifest_path).map_err(|e| e.at_stage("manifest"))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest_sha256 = sha256_hex(&manifest_bytes);

    // calibrate
    let calibrated =
        calibrate_with(dir, &manifest.calibration).map_err(|e| e.at_stage("calibrate"))?;
    let files = &manifest.calibration.files;
    let mut inputs_sha256 = BTreeMap::new();
    for name in files.all() {
        let p = dir.join(name);
        if let Ok(bytes) = fs::read(&p) {
            inputs_sha256.insert(name.display().to_string(), sha256_hex(&bytes));
        }
    }
    w.json(
        LAYOUT_FILE,
        &Layout {
            layout: LAYOUT_VERSION,
            manifest_sha256: &manifest_sha256,
            inputs_sha256,
        },
    )?;
    w.json("manifest.json", &manifest)?;
    let report = calibrated.economy.steady_state_check();
    w.json(
        "calibration/summary.json",
        &CalibrationSummary {
            countries: &manifest.calibration.countries,
            sectors: &manifest.calibration.sectors,
            imputed_output: &calibrated.imputed_output,
            clamped_beta: calibrated.clamped_beta,
            clipped_rho: calibrated.clipped_rho,
            steady_state: &report.residuals,
        },
    )?;
    w.json("calibration/economy.json", &calibrated.economy)?;

    // baseline
    let economy = match &manifest.baseline {
        None => calibrated.economy,
        Some(named) => {
            let shock = named
                .resolve(&manifest.calibration.countries)
                .map_err(|e| e.at_stage("baseline"))?;
            let b =
                build_baseline(&calibrated.economy, &shock).map_err(|e| e.at_stage("baseline"))?;
            w.json("baseline/shock.json", &shock)?;
            w.json("baseline/transition.json", &b.transition)?;
            b.economy
        }
    };
    w.json("baseline/economy.json", &economy)?;

    // solve
    let solutions = solve_all(&economy, &manifest.scenarios, options)?;
    for (s, sol) in manifest.scenarios.iter().zip(&solutions) {
        w.json(&format!("scenarios/{}/scenario.json", s.name), s)?;
        w.json(&format!("scenarios/{}/solution.json", s.name), sol)?;
    }

    // metrics
    let metrics = manifest
        .scenarios
        .iter()
        .zip(&solutions)
        .map(|(s, sol)| {
            ScenarioMetrics::compute(&economy, sol)
                .map_err(|e| e.at_stage(&format!("metrics {}", s.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (s, m) in manifest.scenarios.iter().zip(&metrics) {
        w.json(&format!("scenarios/{}/metrics.json", s.name), m)?;
    }

    // report
    let names: Vec<&str> = manifest.scenarios.iter().map(|s| s.name.as_str()).collect();
    write_tables(&w, &names, &metrics)?;
    let summaries: Vec<ScenarioSummary> = manifest
        .scenarios
        .iter()
        .zip(&solutions)
        .zip(&metrics)
        .map(|((s, sol), m)| ScenarioSummary {
            name: s.name.clone(),
            cbam_mode: s.cbam_mode,
            iterations: sol.iterations,
            max_residual: sol.max_residual(),
            headline: m.headline().into_iter().collect(),
        })
        .collect();
    let endogenous_gaps =
        gaps(&economy, &manifest.scenarios, &solutions).map_err(|e| e.at_stage("report"))?;
    let reference = manifest.reference.as_ref().map(|t| compare(t, &summaries));
    if let Some(rows) = &reference {
        let header: Vec<String> = [
            "metric",
            "target_pct",
            "computed_pct",
            "difference_pp",
            "within_tolerance",
        ]
        .map(String::from)
        .to_vec();
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.metric.clone(),
                    r.target_pct.to_string(),
                    r.computed_pct.to_string(),
                    r.difference_pp.to_string(),
                    r.within_tolerance.to_string(),
                ]
            })
            .collect();
        w.csv("reference_comparison.csv", &header, &body)?;
    }
    let report = SuiteReport {
        layout: LAYOUT_VERSION.into(),
        manifest_sha256,
        countries: manifest.calibration.countries.clone(),
        sectors: manifest.calibration.sectors.clone(),
        scenarios: summaries,
        endogenous_gaps,
        reference,
    };
    w.json("report.json", &report)?;
    Ok(report)
}

fn solve_all(
    econ: &WorldEconomy,
    scenarios: &[PolicyScenario],
    options: &SuiteOptions,
) -> Result<Vec<HatSolution>> {
    let run = || {
        scenarios
            .par_iter()
            .map(|s| solve(econ, s, None).map_err(|e| e.at_stage(&format!("solve {}", s.name))))
            .collect::<Result<Vec<_>>>()
    };
    match options.threads {
        None => run(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Argument(format!("thread pool of {n}: {e}")))?
            .install(run),
    }
}

fn gaps(
    econ: &WorldEconomy,
    scenarios: &[PolicyScenario],
    solutions: &[HatSolution],
) -> Result<BTreeMap<String, BTreeMap<String, f64>>> {
    let mut out = BTreeMap::new();
    for (i, s) in scenarios.iter().enumerate() {
        if !s.cbam_mode.is_endogenous() {
            continue;
        }
        let partner = scenarios.iter().enumerate().find(|(_, x)| {
            let mut a = s.clone();
            let mut b = (*x).clone();
            a.cbam_mode = b.cbam_mode;
            a.name.clear();
            b.name.clear();
            x.cbam_mode == s.cbam_mode.counterpart() && a == b
        });
        if let Some((j, x)) = partner {
            let g = endogenous_gap(econ, (s, &solutions[i]), (x, &solutions[j]))?;
            out.insert(format!("{}/{}", s.name, x.name), g.into_iter().collect());
        }
    }
    Ok(out)
}

fn compare(targets: &ReferenceTargets, summaries: &[ScenarioSummary]) -> Vec<ReferenceRow> {
    let Some(s) = summaries.iter().find(|s| s.name == targets.scenario) else {
        log::warn!("reference scenario '{}' was not run", targets.scenario);
        return Vec::new();
    };
    targets
        .rows()
        .iter()
        .filter_map(|&(name, key, target)| {
            let computed = *s.headline.get(key)?;
            let difference_pp = computed - target;
            Some(ReferenceRow {
                metric: name.into(),
                target_pct: target,
                computed_pct: computed,
                difference_pp,
                within_tolerance: difference_pp.abs() <= targets.tolerance_pp,
            })
        })
        .collect()
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn find<T: Copy>(v: &[(GoodsFilter, T)], g: GoodsFilter) -> Option<T> {
    v.iter().find(|(f, _)| *f == g).map(|(_, x)| *x)
}

fn write_tables(w: &Writer, names: &[&str], metrics: &[ScenarioMetrics]) -> Result<()> {
    let goods = GoodsFilter::ALL;

    // trade patterns: mean and dispersion of percent changes
    let mut header = vec!["panel".to_string(), "goods".to_string()];
    for n in names {
        header.push(format!("{n}_mean"));
        header.push(format!("{n}_std"));
    }
    type Panel = fn(&ScenarioMetrics) -> &[(GoodsFilter, Summary)];
    let panels: [(&str, Panel); 3] = [
        ("foreign_share", |m| &m.foreign_shares),
        ("domestic_share", |m| &m.domestic_shares),
        ("domar_weight", |m| &m.domar),
    ];
    let mut rows = Vec::new();
    for (panel, pick) in panels {
        for g in goods {
            let mut row = vec![panel.to_string(), g.label().to_string()];
            for m in metrics {
                let s = find(pick(m), g);
                row.push(cell(s.map(|s| s.mean)));
                row.push(cell(s.map(|s| s.std)));
            }
            rows.push(row);
        }
    }
    w.csv("tables/table1_trade.csv", &header, &rows)?;

    // embodied emissions and leakage
    let mut header = vec!["panel".to_string(), "goods".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    let mut rows = Vec::new();
    for (panel, direct) in [("eei_direct", true), ("eei_total", false)] {
        for g in goods {
            let mut row = vec![panel.to_string(), g.label().to_string()];
            for m in metrics {
                let v = if direct { &m.eei_direct } else { &m.eei_total };
                row.push(cell(find(v, g).map(|e| e.change_pct)));
            }
            rows.push(row);
        }
    }
    let mut row = vec!["leakage".to_string(), GoodsFilter::All.label().to_string()];
    row.extend(metrics.iter().map(|m| m.leakage.change_pct.to_string()));
    rows.push(row);
    w.csv("tables/table2_emissions.csv", &header, &rows)?;

    // welfare
    let mut header = vec!["region".to_string(), "variable".to_string()];
    header.extend(names.iter().map(|n| n.to_string()));
    type Stat = fn(&ScenarioMetrics) -> f64;
    let lines: [(&str, &str, Stat); 4] = [
        ("eu", "gne", |m| m.welfare.eu_gne_real_change),
        ("eu", "real_wage", |m| m.welfare.eu_real_wage_change),
        ("extra_eu", "gne", |m| m.welfare.extra_eu_gne_real_change),
        ("extra_eu", "real_wage", |m| {
            m.welfare.extra_eu_real_wage_change
        }),
    ];
    let rows: Vec<Vec<String>> = lines
        .iter()
        .map(|(region, var, f)| {
            let mut row = vec![region.to_string(), var.to_string()];
            row.extend(metrics.iter().map(|m| f(m).to_string()));
            row
        })
        .collect();
    w.csv("tables/table3_welfare.csv", &header, &rows)?;

    // decomposition of the total embodied-emissions change, in tons
    let header: Vec<String> = [
        "scenario",
        "goods",
        "total",
        "technology",
        "reallocation",
        "cross_residual",
    ]
    .map(String::from)
    .to_vec();
    let mut rows = Vec::new();
    for (n, m) in names.iter().zip(metrics) {
        for (g, d) in &m.decomposition {
            rows.push(vec![
                n.to_string(),
                g.label().to_string(),
                d.total.to_string(),
                d.technology.to_string(),
                d.reallocation.to_string(),
                d.cross_residual.to_string(),
            ]);
        }
    }
    w.csv("tables/eei_decomposition.csv", &header, &rows)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root).ok() != Some(Path::new(HASH_FILE)) {
            out.push(path);
        }
    }
    Ok(())
}

fn write_hashes(out: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    let mut lines: Vec<(String, String)> = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            let rel = p.strip_prefix(out).unwrap_or(p);
            let rel = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok((rel, sha256_hex(&bytes)))
        })
        .collect::<Result<_>>()?;
    lines.sort();
    let text: String = lines.iter().map(|(p, h)| format!("{h}  {p}\n")).collect();
    let path = out.join(HASH_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Checks every file listed in `SHA256SUMS` of a run directory.
pub fn verify_hashes(run_dir: &Path) -> Result<()> {
    let path = run_dir.join(HASH_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    for line in text.lines() {
        let (hash, rel) = line
            .split_once("  ")
            .ok_or_else(|| Error::InvalidState(format!("malformed hash line '{line}'")))?;
        let p = run_dir.join(rel);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&bytes) != hash {
            return Err(Error::InvalidState(format!(
                "{rel} does not match its hash"
            )));
        }
    }
    Ok(())
}
