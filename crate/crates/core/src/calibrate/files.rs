//! Delimited-text interchange format.
//!
//! A directory holds `manifest.json` and six CSV files keyed by country and
//! sector names:
//!
//! | file | columns |
//! |---|---|
//! | `io_flows.csv` | `origin_country, origin_sector, dest_country, dest_sector, value` |
//! | `final_demand.csv` | `origin_country, origin_sector, dest_country, value` |
//! | `output_va.csv` | `country, sector, gross_output, value_added` |
//! | `emissions.csv` | `country, sector, emissions, free_allowance_share` |
//! | `carbon_prices.csv` | `country, effective_carbon_rate, market, eu` |
//! | `taxonomy.csv` | `sector, ets, cbam` |
//!
//! `market` is `capped` or `priced`; `eu`, `ets` and `cbam` are 0 or 1.
//! Flow files may omit zero entries; the others list every key once. An
//! optional `tariffs.csv` (`origin_country, origin_sector, dest_country,
//! dest_sector, kappa`) is read but not applied at calibration.

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ingest, EmissionsInputs, Ingested, RawIoTable};
use crate::economy::{CarbonRegime, SectorTaxonomy, WorldEconomy};
use crate::error::{Error, Result};
use crate::index::Dimensions;
use crate::solver::TariffOverride;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFiles {
    pub io_flows: PathBuf,
    pub final_demand: PathBuf,
    pub output_va: PathBuf,
    pub emissions: PathBuf,
    pub carbon_prices: PathBuf,
    pub taxonomy: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tariffs: Option<PathBuf>,
}

impl Default for InputFiles {
    fn default() -> Self {
        Self {
            io_flows: "io_flows.csv".into(),
            final_demand: "final_demand.csv".into(),
            output_va: "output_va.csv".into(),
            emissions: "emissions.csv".into(),
            carbon_prices: "carbon_prices.csv".into(),
            taxonomy: "taxonomy.csv".into(),
            tariffs: None,
        }
    }
}

impl InputFiles {
    /// Every named file, optional ones included when set.
    pub fn all(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = vec![
            &self.io_flows,
            &self.final_demand,
            &self.output_va,
            &self.emissions,
            &self.carbon_prices,
            &self.taxonomy,
        ];
        v.extend(self.tariffs.as_deref());
        v
    }
}

fn default_elasticity() -> f64 {
    4.0
}

/// Dimension metadata binding the CSV inputs. File paths are relative to
/// the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationManifest {
    pub countries: Vec<String>,
    pub sectors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default = "default_elasticity")]
    pub theta: f64,
    #[serde(default = "default_elasticity")]
    pub sigma: f64,
    #[serde(default)]
    pub files: InputFiles,
}

impl CalibrationManifest {
    pub fn dims(&self) -> Result<Dimensions> {
        Dimensions::new(self.countries.len(), self.sectors.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInputs {
    pub io: RawIoTable,
    pub emissions: EmissionsInputs,
    pub taxonomy: SectorTaxonomy,
    pub eu_mask: Vec<bool>,
    pub tariffs: Vec<TariffOverride>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    origin_country: String,
    origin_sector: String,
    dest_country: String,
    dest_sector: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FinalRow {
    origin_country: String,
    origin_sector: String,
    dest_country: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct OutputRow {
    country: String,
    sector: String,
    gross_output: f64,
    value_added: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmissionRow {
    country: String,
    sector: String,
    emissions: f64,
    free_allowance_share: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Market {
    Capped,
    Priced,
}

#[derive(Debug, Serialize, Deserialize)]
struct PriceRow {
    country: String,
    effective_carbon_rate: f64,
    market: Market,
    eu: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyRow {
    sector: String,
    ets: u8,
    cbam: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct TariffRow {
    origin_country: String,
    origin_sector: String,
    dest_country: String,
    dest_sector: String,
    kappa: f64,
}

struct Labels<'a> {
    countries: HashMap<&'a str, usize>,
    sectors: HashMap<&'a str, usize>,
    dims: Dimensions,
}

impl<'a> Labels<'a> {
    fn new(manifest: &'a CalibrationManifest) -> Result<Self> {
        let dims = manifest.dims()?;
        let index = |names: &'a [String], what: &str| -> Result<HashMap<&'a str, usize>> {
            let mut map = HashMap::new();
            for (k, name) in names.iter().enumerate() {
                if map.insert(name.as_str(), k).is_some() {
                    return Err(Error::Calibration(format!(
                        "duplicate {what} name '{name}' in manifest"
                    )));
                }
            }
            Ok(map)
        };
        Ok(Self {
            countries: index(&manifest.countries, "country")?,
            sectors: index(&manifest.sectors, "sector")?,
            dims,
        })
    }

    fn country(&self, name: &str, file: &Path) -> Result<usize> {
        self.countries.get(name).copied().ok_or_else(|| {
            Error::Calibration(format!("{}: unknown country '{name}'", file.display()))
        })
    }

    fn pair(&self, country: &str, sector: &str, file: &Path) -> Result<usize> {
        let i = self.country(country, file)?;
        let j = self.sectors.get(sector).copied().ok_or_else(|| {
            Error::Calibration(format!("{}: unknown sector '{sector}'", file.display()))
        })?;
        Ok(self.dims.at(i, j))
    }
}

fn read_rows<T: DeserializeOwned>(dir: &Path, name: &Path) -> Result<Vec<T>> {
    let file = File::open(dir.join(name)).map_err(|e| Error::io(name, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::Csv {
            path: name.to_path_buf(),
            message: e.to_string(),
        })
}

/// Records each key at most once and reports keys never seen.
struct Coverage {
    seen: Vec<bool>,
    file: PathBuf,
}

impl Coverage {
    fn new(len: usize, file: &Path) -> Self {
        Self {
            seen: vec![false; len],
            file: file.to_path_buf(),
        }
    }

    fn mark(&mut self, k: usize, key: impl std::fmt::Display) -> Result<()> {
        if std::mem::replace(&mut self.seen[k], true) {
            return Err(Error::Calibration(format!(
                "{}: duplicate row for {key}",
                self.file.display()
            )));
        }
        Ok(())
    }

    fn require_all(&self, key: impl Fn(usize) -> String) -> Result<()> {
        match self.seen.iter().position(|s| !s) {
            Some(k) => Err(Error::Calibration(format!(
                "{}: no row for {}",
                self.file.display(),
                key(k)
            ))),
            None => Ok(()),
        }
    }
}

fn flag(v: u8, what: &str, file: &Path) -> Result<bool> {
    match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(Error::Calibration(format!(
            "{}: {what} must be 0 or 1, got {v}",
            file.display()
        ))),
    }
}

pub fn read_manifest(path: &Path) -> Result<CalibrationManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads every input named by `manifest`, resolving paths against `dir`.
pub fn load_inputs(dir: &Path, manifest: &CalibrationManifest) -> Result<CalibrationInputs> {
    let labels = Labels::new(manifest)?;
    let d = labels.dims;
    let (n, jn, nj) = (d.n_countries, d.n_sectors, d.nj());
    let files = &manifest.files;
    let pair_name = |k: usize| {
        format!(
            "({}, {})",
            manifest.countries[d.country_of(k)],
            manifest.sectors[d.sector_of(k)]
        )
    };

    let mut intermediate_flows = DMatrix::zeros(nj, nj);
    let mut seen = HashMap::new();
    for row in read_rows::<FlowRow>(dir, &files.io_flows)? {
        let r = labels.pair(&row.origin_country, &row.origin_sector, &files.io_flows)?;
        let c = labels.pair(&row.dest_country, &row.dest_sector, &files.io_flows)?;
        if seen.insert((r, c), ()).is_some() {
            return Err(Error::Calibration(format!(
                "{}: duplicate row for {} -> {}",
                files.io_flows.display(),
                pair_name(r),
                pair_name(c)
            )));
        }
        intermediate_flows[(r, c)] = row.value;
    }

    let mut final_flows = DMatrix::zeros(nj, n);
    seen.clear();
    for row in read_rows::<FinalRow>(dir, &files.final_demand)? {
        let r = labels.pair(&row.origin_country, &row.origin_sector, &files.final_demand)?;
        let i = labels.country(&row.dest_country, &files.final_demand)?;
        if seen.insert((r, i), ()).is_some() {
            return Err(Error::Calibration(format!(
                "{}: duplicate row for {} -> {}",
                files.final_demand.display(),
                pair_name(r),
                row.dest_country
            )));
        }
        final_flows[(r, i)] = row.value;
    }

    let mut gross_output = DVector::zeros(nj);
    let mut value_added = DVector::zeros(nj);
    let mut cover = Coverage::new(nj, &files.output_va);
    for row in read_rows::<OutputRow>(dir, &files.output_va)? {
        let k = labels.pair(&row.country, &row.sector, &files.output_va)?;
        cover.mark(k, pair_name(k))?;
        gross_output[k] = row.gross_output;
        value_added[k] = row.value_added;
    }
    cover.require_all(pair_name)?;

    let mut scope1_emissions = DVector::zeros(nj);
    let mut free_allowance_share = DVector::zeros(nj);
    let mut cover = Coverage::new(nj, &files.emissions);
    for row in read_rows::<EmissionRow>(dir, &files.emissions)? {
        let k = labels.pair(&row.country, &row.sector, &files.emissions)?;
        cover.mark(k, pair_name(k))?;
        scope1_emissions[k] = row.emissions;
        free_allowance_share[k] = row.free_allowance_share;
    }
    cover.require_all(pair_name)?;

    let mut effective_carbon_rate = DVector::zeros(n);
    let mut permit_market = vec![false; n];
    let mut eu_mask = vec![false; n];
    let mut cover = Coverage::new(n, &files.carbon_prices);
    for row in read_rows::<PriceRow>(dir, &files.carbon_prices)? {
        let i = labels.country(&row.country, &files.carbon_prices)?;
        cover.mark(i, &row.country)?;
        effective_carbon_rate[i] = row.effective_carbon_rate;
        permit_market[i] = matches!(row.market, Market::Capped);
        eu_mask[i] = flag(row.eu, "eu", &files.carbon_prices)?;
    }
    cover.require_all(|i| manifest.countries[i].clone())?;

    let mut ets = vec![false; jn];
    let mut cbam = vec![false; jn];
    let mut cover = Coverage::new(jn, &files.taxonomy);
    for row in read_rows::<TaxonomyRow>(dir, &files.taxonomy)? {
        let j = labels
            .sectors
            .get(row.sector.as_str())
            .copied()
            .ok_or_else(|| {
                Error::Calibration(format!(
                    "{}: unknown sector '{}'",
                    files.taxonomy.display(),
                    row.sector
                ))
            })?;
        cover.mark(j, &row.sector)?;
        ets[j] = flag(row.ets, "ets", &files.taxonomy)?;
        cbam[j] = flag(row.cbam, "cbam", &files.taxonomy)?;
    }
    cover.require_all(|j| manifest.sectors[j].clone())?;

    let mut tariffs = Vec::new();
    if let Some(name) = &files.tariffs {
        for row in read_rows::<TariffRow>(dir, name)? {
            let r = labels.pair(&row.origin_country, &row.origin_sector, name)?;
            let c = labels.pair(&row.dest_country, &row.dest_sector, name)?;
            tariffs.push(TariffOverride {
                origin_country: d.country_of(r) + 1,
                origin_sector: d.sector_of(r) + 1,
                dest_country: d.country_of(c) + 1,
                dest_sector: d.sector_of(c) + 1,
                kappa: row.kappa,
            });
        }
    }

    Ok(CalibrationInputs {
        io: RawIoTable {
            intermediate_flows,
            final_flows,
            gross_output,
            value_added,
        },
        emissions: EmissionsInputs {
            scope1_emissions,
            effective_carbon_rate,
            free_allowance_share,
            permit_market,
        },
        taxonomy: SectorTaxonomy::new(ets, cbam)?,
        eu_mask,
        tariffs,
    })
}

/// Reads the manifest at `path` and its inputs, and calibrates.
pub fn calibrate_manifest(path: &Path) -> Result<Ingested> {
    let manifest = read_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    calibrate_with(dir, &manifest)
}

pub(crate) fn calibrate_with(dir: &Path, manifest: &CalibrationManifest) -> Result<Ingested> {
    let inputs = load_inputs(dir, manifest)?;
    let mut out = ingest(
        &inputs.io,
        &inputs.emissions,
        inputs.taxonomy,
        inputs.eu_mask,
        manifest.theta,
        manifest.sigma,
    )?;
    out.economy.country_names = manifest.countries.clone();
    out.economy.sector_names = manifest.sectors.clone();
    Ok(out)
}

fn write_rows<T: Serialize>(
    dir: &Path,
    name: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.clone(),
        message: e.to_string(),
    };
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|e| Error::io(&path, e))
}

/// Writes `econ` as a manifest directory that [`calibrate_manifest`]
/// reads back to the same shares.
///
/// Flows are the steady-state values: intermediate purchases
/// `iota gamma S`, final purchases `chi I` from domestic sectors, gross
/// output `S`, value added `beta S` and emissions `rho S / ECR`.
pub fn export(econ: &WorldEconomy, dir: &Path) -> Result<()> {
    econ.validate()?;
    let ss = econ.require_steady_state()?;
    let d = econ.dims;
    let (n, jn, nj) = (d.n_countries, d.n_sectors, d.nj());
    if let Some(k) =
        (0..nj).find(|&k| econ.rho[k] > 0.0 && !(econ.observed_carbon_price[d.country_of(k)] > 0.0))
    {
        let (i, j) = d.unflatten(k)?;
        return Err(Error::Argument(format!(
            "pair ({i},{j}) emits but its country has no observed carbon price; tons are undefined"
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let countries: Vec<String> = (0..n).map(|i| econ.country_name(i)).collect();
    let sectors: Vec<String> = (0..jn).map(|j| econ.sector_name(j)).collect();
    let gamma = econ.gamma();
    let files = InputFiles::default();

    let flows = (0..nj)
        .flat_map(|r| (0..nj).map(move |c| (r, c)))
        .filter_map(|(r, c)| {
            let value = econ.iota[(r, c)] * gamma[c] * ss.sales[c];
            (value != 0.0).then(|| FlowRow {
                origin_country: countries[d.country_of(r)].clone(),
                origin_sector: sectors[d.sector_of(r)].clone(),
                dest_country: countries[d.country_of(c)].clone(),
                dest_sector: sectors[d.sector_of(c)].clone(),
                value,
            })
        });
    write_rows(dir, &files.io_flows, flows)?;

    let finals = (0..nj).filter_map(|k| {
        let i = d.country_of(k);
        let value = econ.chi[(i, d.sector_of(k))] * ss.income[i];
        (value != 0.0).then(|| FinalRow {
            origin_country: countries[i].clone(),
            origin_sector: sectors[d.sector_of(k)].clone(),
            dest_country: countries[i].clone(),
            value,
        })
    });
    write_rows(dir, &files.final_demand, finals)?;

    write_rows(
        dir,
        &files.output_va,
        (0..nj).map(|k| OutputRow {
            country: countries[d.country_of(k)].clone(),
            sector: sectors[d.sector_of(k)].clone(),
            gross_output: ss.sales[k],
            value_added: econ.beta[k] * ss.sales[k],
        }),
    )?;

    write_rows(
        dir,
        &files.emissions,
        (0..nj).map(|k| {
            let ecr = econ.observed_carbon_price[d.country_of(k)];
            EmissionRow {
                country: countries[d.country_of(k)].clone(),
                sector: sectors[d.sector_of(k)].clone(),
                emissions: if econ.rho[k] > 0.0 {
                    econ.rho[k] * ss.sales[k] / ecr
                } else {
                    0.0
                },
                free_allowance_share: econ.free_alloc[k],
            }
        }),
    )?;

    write_rows(
        dir,
        &files.carbon_prices,
        (0..n).map(|i| PriceRow {
            country: countries[i].clone(),
            effective_carbon_rate: econ.observed_carbon_price[i],
            market: match econ.carbon_regime[i] {
                CarbonRegime::Capped { .. } => Market::Capped,
                CarbonRegime::Priced { .. } => Market::Priced,
            },
            eu: econ.eu_mask[i] as u8,
        }),
    )?;

    write_rows(
        dir,
        &files.taxonomy,
        (0..jn).map(|j| TaxonomyRow {
            sector: sectors[j].clone(),
            ets: econ.taxonomy.ets[j] as u8,
            cbam: econ.taxonomy.cbam_reduced[j] as u8,
        }),
    )?;

    let manifest = CalibrationManifest {
        countries,
        sectors,
        year: None,
        theta: econ.theta,
        sigma: econ.sigma,
        files,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
