//! Data ingestion, result export, and scenario configuration.
//!
//! All table files are UTF-8 CSV with `.` decimals and LF line endings.
//! The first line is a version comment (`# contagion-<kind> v1 ...`);
//! readers refuse unknown versions and tolerate a missing version line on
//! input. Interbank positions are always derived from `exposures.csv` and
//! never stated in `banks.csv`, and a bipartite bank's illiquid assets must
//! equal the value of its holdings at the initial unit price.
//!
//! Formats:
//! - `banks.csv`: `bank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities`
//! - `exposures.csv`: `lender_id,borrower_id,amount`
//! - `holdings.csv`: `bank_id,asset_id,amount`
//! - `assets.csv`: `asset_id,depth`
//! - `liabilities.csv`: `debtor_id,creditor_id,amount` (clearing input)
//! - `externals.csv`: `bank_id,external_assets` (clearing input)

pub mod config;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::cascade::SweepRow;
use crate::clearing::{ClearingProblem, ClearingSolution};
use crate::intervene::InterventionRecord;
use crate::model::{
    Asset, AssetId, BalanceSheet, Bank, BankId, BipartiteNetwork, Exposure, Holding,
    InterbankNetwork, ModelError,
};
use crate::rank::{RankBasis, Ranking};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: unsupported format version `{found}` (supported: v{FORMAT_VERSION})")]
    UnsupportedVersion { file: String, found: String },
    #[error("{file}: expected header `{expected}`, found `{found}`")]
    BadHeader {
        file: String,
        expected: &'static str,
        found: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("id `{0}` contains characters not representable in CSV")]
    UnportableId(String),
    #[error("nothing to export")]
    NoRecords,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn io_err(file: &Path, source: std::io::Error) -> IoError {
    IoError::Io {
        file: file.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Low-level table reading/writing
// ---------------------------------------------------------------------------

struct Table {
    file: String,
    /// (1-based line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

/// Read a CSV table: optional version comment, exact column header, data
/// rows. An empty (or header-only) file yields an empty table.
fn read_table(path: &Path, kind: &str, header: &'static str) -> Result<Table, IoError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let n_columns = header.split(',').count();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            // A `# contagion-<kind> vN` line pins the format version.
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("contagion-") {
                let mut parts = rest.split_whitespace();
                let found_kind = parts.next().unwrap_or("");
                let version = parts.next().unwrap_or("");
                if found_kind == kind && version != format!("v{FORMAT_VERSION}") {
                    return Err(IoError::UnsupportedVersion {
                        file,
                        found: version.to_string(),
                    });
                }
            }
            continue;
        }
        if !saw_header {
            if line != header {
                return Err(IoError::BadHeader {
                    file,
                    expected: header,
                    found: line.to_string(),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != n_columns {
            return Err(IoError::Parse {
                file,
                line: line_no,
                message: format!("expected {n_columns} columns, found {}", fields.len()),
            });
        }
        rows.push((line_no, fields));
    }
    Ok(Table { file, rows })
}

fn parse_amount(table: &Table, line: usize, field: &str, what: &str) -> Result<f64, IoError> {
    let value: f64 = field.parse().map_err(|_| IoError::Parse {
        file: table.file.clone(),
        line,
        message: format!("{what} `{field}` is not a number"),
    })?;
    if value.is_nan() {
        return Err(IoError::Parse {
            file: table.file.clone(),
            line,
            message: format!("{what} must not be NaN"),
        });
    }
    Ok(value)
}

fn parse_nonnegative(table: &Table, line: usize, field: &str, what: &str) -> Result<f64, IoError> {
    let value = parse_amount(table, line, field, what)?;
    if value < 0.0 {
        return Err(IoError::Parse {
            file: table.file.clone(),
            line,
            message: format!("{what} must be non-negative, got {value}"),
        });
    }
    Ok(value)
}

fn check_id(id: &str) -> Result<(), IoError> {
    if id.is_empty()
        || id.contains(',')
        || id.contains('\n')
        || id.contains('\r')
        || id.starts_with('#')
    {
        return Err(IoError::UnportableId(id.to_string()));
    }
    Ok(())
}

/// Write a file atomically: write to a sibling temp path, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(contents.as_bytes())
            .map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Provenance line embedded in every generated artifact.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
}

impl Provenance {
    pub fn seeded(seed: u64) -> Self {
        Provenance {
            seed: Some(seed),
            config_hash: None,
        }
    }

    fn version_line(&self, kind: &str) -> String {
        let mut line = format!("# contagion-{kind} v{FORMAT_VERSION}");
        if let Some(seed) = self.seed {
            line.push_str(&format!(" seed={seed}"));
        }
        if let Some(hash) = &self.config_hash {
            line.push_str(&format!(" config={hash}"));
        }
        line.push_str(&format!(" artifact={}", env!("CARGO_PKG_VERSION")));
        line.push('\n');
        line
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------------------
// Network loading
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct NetworkPaths {
    pub banks: PathBuf,
    pub exposures: Option<PathBuf>,
    pub holdings: Option<PathBuf>,
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub enum LoadedNetwork {
    Interbank(InterbankNetwork),
    Bipartite(BipartiteNetwork),
}

const BANKS_HEADER: &str = "bank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities";
const EXPOSURES_HEADER: &str = "lender_id,borrower_id,amount";
const HOLDINGS_HEADER: &str = "bank_id,asset_id,amount";
const ASSETS_HEADER: &str = "asset_id,depth";
const LIABILITIES_HEADER: &str = "debtor_id,creditor_id,amount";
const EXTERNALS_HEADER: &str = "bank_id,external_assets";

/// Rows of banks.csv: id plus the non-derived balance-sheet fields.
fn load_bank_rows(path: &Path) -> Result<Vec<(BankId, f64, f64, f64, f64)>, IoError> {
    let table = read_table(path, "banks", BANKS_HEADER)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let id = fields[0].clone();
        if let Some(first) = seen.insert(id.clone(), *line) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("duplicate bank_id `{id}` (first seen at line {first})"),
            });
        }
        let liquid = parse_nonnegative(&table, *line, &fields[1], "liquid_assets")?;
        let illiquid = parse_nonnegative(&table, *line, &fields[2], "illiquid_assets")?;
        let deposits = parse_nonnegative(&table, *line, &fields[3], "deposits")?;
        let short_term = parse_nonnegative(&table, *line, &fields[4], "short_term_liabilities")?;
        rows.push((BankId::new(id), liquid, illiquid, deposits, short_term));
    }
    Ok(rows)
}

/// Load and validate a network. Exposure files produce an interbank
/// network; holdings plus assets files produce a bipartite one.
pub fn load_network(paths: &NetworkPaths) -> Result<LoadedNetwork, IoError> {
    let bipartite_inputs = paths.holdings.is_some() || paths.assets.is_some();
    if paths.exposures.is_some() && bipartite_inputs {
        return Err(IoError::Config(
            "specify either exposures (interbank) or holdings+assets (bipartite), not both".into(),
        ));
    }
    if bipartite_inputs && (paths.holdings.is_none() || paths.assets.is_none()) {
        return Err(IoError::Config(
            "bipartite networks need both a holdings file and an assets file".into(),
        ));
    }
    let bank_rows = load_bank_rows(&paths.banks)?;

    if let (Some(holdings_path), Some(assets_path)) = (&paths.holdings, &paths.assets) {
        let assets = load_assets(assets_path)?;
        let holdings = load_holdings(holdings_path, &bank_rows, &assets)?;
        // Balance sheets: illiquid assets must match holdings at unit
        // price; flag mismatches per bank.
        let mut held_value: BTreeMap<&BankId, f64> = BTreeMap::new();
        for h in &holdings {
            *held_value.entry(&h.bank).or_insert(0.0) += h.units;
        }
        let mut banks = Vec::with_capacity(bank_rows.len());
        for (id, liquid, illiquid, deposits, short_term) in &bank_rows {
            let derived = held_value.get(id).copied().unwrap_or(0.0);
            if !crate::model::approx_eq(*illiquid, derived) {
                return Err(IoError::Config(format!(
                    "bank `{id}`: illiquid_assets {illiquid} does not match holdings value {derived}"
                )));
            }
            let sheet = BalanceSheet::new(*liquid, derived, 0.0, *deposits, 0.0, *short_term)?;
            banks.push(Bank::new(id.clone(), sheet));
        }
        let net = BipartiteNetwork::new(banks, assets, holdings)?;
        return Ok(LoadedNetwork::Bipartite(net));
    }

    let exposures = match &paths.exposures {
        Some(path) => load_exposures(path, &bank_rows)?,
        None => Vec::new(),
    };
    let banks = bank_rows
        .iter()
        .map(|(id, liquid, illiquid, deposits, short_term)| {
            let sheet = BalanceSheet::new(*liquid, *illiquid, 0.0, *deposits, 0.0, *short_term)?;
            Ok(Bank::new(id.clone(), sheet))
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let net = InterbankNetwork::assemble(banks, exposures)?;
    Ok(LoadedNetwork::Interbank(net))
}

fn load_exposures(
    path: &Path,
    bank_rows: &[(BankId, f64, f64, f64, f64)],
) -> Result<Vec<Exposure>, IoError> {
    let known: BTreeSet<&str> = bank_rows.iter().map(|(id, ..)| id.as_str()).collect();
    let table = read_table(path, "exposures", EXPOSURES_HEADER)?;
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut exposures = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let lender = fields[0].as_str();
        let borrower = fields[1].as_str();
        for id in [lender, borrower] {
            if !known.contains(id) {
                return Err(IoError::Parse {
                    file: table.file.clone(),
                    line: *line,
                    message: format!("unknown bank id `{id}`"),
                });
            }
        }
        if lender == borrower {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("self-loop exposure on `{lender}`"),
            });
        }
        if !seen.insert((lender.to_string(), borrower.to_string())) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("duplicate exposure {lender} -> {borrower}"),
            });
        }
        let amount = parse_amount(&table, *line, &fields[2], "amount")?;
        if amount <= 0.0 {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("amount must be positive, got {amount}"),
            });
        }
        exposures.push(Exposure {
            lender: BankId::new(lender),
            borrower: BankId::new(borrower),
            amount,
        });
    }
    Ok(exposures)
}

fn load_assets(path: &Path) -> Result<Vec<Asset>, IoError> {
    let table = read_table(path, "assets", ASSETS_HEADER)?;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut assets = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let id = fields[0].clone();
        if let Some(first) = seen.insert(id.clone(), *line) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("duplicate asset_id `{id}` (first seen at line {first})"),
            });
        }
        let depth = parse_amount(&table, *line, &fields[1], "depth")?;
        if !(depth > 0.0) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("depth must be positive, got {depth}"),
            });
        }
        assets.push(Asset::new(AssetId::new(id), depth));
    }
    Ok(assets)
}

fn load_holdings(
    path: &Path,
    bank_rows: &[(BankId, f64, f64, f64, f64)],
    assets: &[Asset],
) -> Result<Vec<Holding>, IoError> {
    let known_banks: BTreeSet<&str> = bank_rows.iter().map(|(id, ..)| id.as_str()).collect();
    let known_assets: BTreeSet<&str> = assets.iter().map(|a| a.id.as_str()).collect();
    let table = read_table(path, "holdings", HOLDINGS_HEADER)?;
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    let mut holdings = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let bank = fields[0].as_str();
        let asset = fields[1].as_str();
        if !known_banks.contains(bank) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("unknown bank id `{bank}`"),
            });
        }
        if !known_assets.contains(asset) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("unknown asset id `{asset}`"),
            });
        }
        if !seen.insert((bank.to_string(), asset.to_string())) {
            return Err(IoError::Parse {
                file: table.file.clone(),
                line: *line,
                message: format!("duplicate holding ({bank}, {asset})"),
            });
        }
        let units = parse_nonnegative(&table, *line, &fields[2], "amount")?;
        holdings.push(Holding {
            bank: BankId::new(bank),
            asset: AssetId::new(asset),
            units,
        });
    }
    Ok(holdings)
}

/// Load a clearing problem from a liability edge list plus external assets.
pub fn load_clearing_problem(
    liabilities_path: &Path,
    externals_path: &Path,
) -> Result<ClearingProblem, IoError> {
    let ext_table = read_table(externals_path, "externals", EXTERNALS_HEADER)?;
    let mut ids = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut external = Vec::new();
    for (line, fields) in &ext_table.rows {
        let id = fields[0].clone();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(IoError::Parse {
                file: ext_table.file.clone(),
                line: *line,
                message: format!("duplicate bank_id `{id}`"),
            });
        }
        external.push(parse_nonnegative(
            &ext_table,
            *line,
            &fields[1],
            "external_assets",
        )?);
        ids.push(BankId::new(id));
    }
    let n = ids.len();
    let liab_table = read_table(liabilities_path, "liabilities", LIABILITIES_HEADER)?;
    let mut matrix = vec![vec![0.0; n]; n];
    for (line, fields) in &liab_table.rows {
        let debtor = index
            .get(fields[0].as_str())
            .copied()
            .ok_or_else(|| IoError::Parse {
                file: liab_table.file.clone(),
                line: *line,
                message: format!("unknown bank id `{}`", fields[0]),
            })?;
        let creditor = index
            .get(fields[1].as_str())
            .copied()
            .ok_or_else(|| IoError::Parse {
                file: liab_table.file.clone(),
                line: *line,
                message: format!("unknown bank id `{}`", fields[1]),
            })?;
        if debtor == creditor {
            return Err(IoError::Parse {
                file: liab_table.file.clone(),
                line: *line,
                message: "self-owed liability".into(),
            });
        }
        if matrix[debtor][creditor] != 0.0 {
            return Err(IoError::Parse {
                file: liab_table.file.clone(),
                line: *line,
                message: format!("duplicate liability {} -> {}", fields[0], fields[1]),
            });
        }
        let amount = parse_amount(&liab_table, *line, &fields[2], "amount")?;
        if amount <= 0.0 {
            return Err(IoError::Parse {
                file: liab_table.file.clone(),
                line: *line,
                message: format!("amount must be positive, got {amount}"),
            });
        }
        matrix[debtor][creditor] = amount;
    }
    ClearingProblem::new(ids, matrix, external)
        .map_err(|e| IoError::Config(format!("invalid clearing problem: {e}")))
}

// ---------------------------------------------------------------------------
// Network saving
// ---------------------------------------------------------------------------

/// Write a network's table files into `dir` (canonical form: rows sorted by
/// id). Returns the paths written.
pub fn save_network(
    net: &LoadedNetwork,
    dir: &Path,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>, IoError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    match net {
        LoadedNetwork::Interbank(net) => save_interbank(net, dir, provenance),
        LoadedNetwork::Bipartite(net) => save_bipartite(net, dir, provenance),
    }
}

fn banks_csv(banks: &[Bank], provenance: &Provenance) -> Result<String, IoError> {
    let mut sorted: Vec<&Bank> = banks.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = provenance.version_line("banks");
    out.push_str(BANKS_HEADER);
    out.push('\n');
    for bank in sorted {
        check_id(bank.id.as_str())?;
        let bs = &bank.balance_sheet;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            bank.id,
            fmt_f64(bs.liquid_assets()),
            fmt_f64(bs.illiquid_assets()),
            fmt_f64(bs.deposits()),
            fmt_f64(bs.short_term_liabilities()),
        ));
    }
    Ok(out)
}

fn save_interbank(
    net: &InterbankNetwork,
    dir: &Path,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>, IoError> {
    let banks_path = dir.join("banks.csv");
    write_atomic(&banks_path, &banks_csv(net.banks(), provenance)?)?;

    let mut exposures: Vec<&Exposure> = net.exposures().iter().collect();
    exposures.sort_by(|a, b| (&a.lender, &a.borrower).cmp(&(&b.lender, &b.borrower)));
    let mut out = provenance.version_line("exposures");
    out.push_str(EXPOSURES_HEADER);
    out.push('\n');
    for e in exposures {
        check_id(e.lender.as_str())?;
        check_id(e.borrower.as_str())?;
        out.push_str(&format!(
            "{},{},{}\n",
            e.lender,
            e.borrower,
            fmt_f64(e.amount)
        ));
    }
    let exposures_path = dir.join("exposures.csv");
    write_atomic(&exposures_path, &out)?;
    Ok(vec![banks_path, exposures_path])
}

fn save_bipartite(
    net: &BipartiteNetwork,
    dir: &Path,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>, IoError> {
    let banks_path = dir.join("banks.csv");
    write_atomic(&banks_path, &banks_csv(net.banks(), provenance)?)?;

    let mut assets: Vec<&Asset> = net.assets().iter().collect();
    assets.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = provenance.version_line("assets");
    out.push_str(ASSETS_HEADER);
    out.push('\n');
    for a in assets {
        check_id(a.id.as_str())?;
        out.push_str(&format!("{},{}\n", a.id, fmt_f64(a.depth)));
    }
    let assets_path = dir.join("assets.csv");
    write_atomic(&assets_path, &out)?;

    let mut holdings: Vec<&Holding> = net.holdings().iter().collect();
    holdings.sort_by(|a, b| (&a.bank, &a.asset).cmp(&(&b.bank, &b.asset)));
    let mut out = provenance.version_line("holdings");
    out.push_str(HOLDINGS_HEADER);
    out.push('\n');
    for h in holdings {
        check_id(h.bank.as_str())?;
        check_id(h.asset.as_str())?;
        out.push_str(&format!("{},{},{}\n", h.bank, h.asset, fmt_f64(h.units)));
    }
    let holdings_path = dir.join("holdings.csv");
    write_atomic(&holdings_path, &out)?;
    Ok(vec![banks_path, assets_path, holdings_path])
}

// ---------------------------------------------------------------------------
// Result export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    JsonLines,
    PlotData,
}

/// Export intervention records, bit-stable (sorted by scenario, strategy,
/// fraction). CSV and JSON-lines write one file; plot data writes one panel
/// file per strategy.
pub fn export_intervention_records(
    records: &[InterventionRecord],
    format: ExportFormat,
    dir: &Path,
    stem: &str,
    provenance: &Provenance,
) -> Result<Vec<PathBuf>, IoError> {
    if records.is_empty() {
        return Err(IoError::NoRecords);
    }
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut sorted: Vec<&InterventionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then_with(|| a.strategy.name().cmp(b.strategy.name()))
            .then_with(|| a.padded_fraction.total_cmp(&b.padded_fraction))
    });
    match format {
        ExportFormat::Csv => {
            let mut out = provenance.version_line("records");
            out.push_str("scenario_id,strategy,fraction,n_defaults,guarantee_size,systemic\n");
            for r in sorted {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.scenario_id,
                    r.strategy.name(),
                    fmt_f64(r.padded_fraction),
                    r.n_defaults,
                    fmt_f64(r.guarantee_size),
                    r.systemic,
                ));
            }
            let path = dir.join(format!("{stem}.csv"));
            write_atomic(&path, &out)?;
            Ok(vec![path])
        }
        ExportFormat::JsonLines => {
            let mut out = String::new();
            for r in sorted {
                out.push_str(&serde_json::to_string(r).expect("records serialize"));
                out.push('\n');
            }
            let path = dir.join(format!("{stem}.jsonl"));
            write_atomic(&path, &out)?;
            Ok(vec![path])
        }
        ExportFormat::PlotData => {
            // One panel per strategy, plus a `none` panel holding the
            // unguaranteed baseline (the fraction-0 rows, which are
            // identical across strategies).
            let mut panels: BTreeMap<&'static str, String> = BTreeMap::new();
            let panel_header = |name: &str| {
                let mut s = provenance.version_line("plotdata");
                s.push_str(&format!(
                    "# panel: {name} | x: padded_fraction | y: n_defaults | extra: guarantee_size systemic\n",
                ));
                s
            };
            let row_line = |r: &InterventionRecord| {
                format!(
                    "{} {} {} {}\n",
                    fmt_f64(r.padded_fraction),
                    r.n_defaults,
                    fmt_f64(r.guarantee_size),
                    u8::from(r.systemic),
                )
            };
            let baseline_strategy = sorted
                .iter()
                .find(|r| r.padded_fraction == 0.0)
                .map(|r| r.strategy);
            for r in &sorted {
                let panel = panels
                    .entry(r.strategy.name())
                    .or_insert_with(|| panel_header(r.strategy.name()));
                panel.push_str(&row_line(r));
                if r.padded_fraction == 0.0 && baseline_strategy == Some(r.strategy) {
                    panels
                        .entry("none")
                        .or_insert_with(|| panel_header("none"))
                        .push_str(&row_line(r));
                }
            }
            let mut paths = Vec::new();
            for (name, contents) in panels {
                let path = dir.join(format!("{stem}_{name}.dat"));
                write_atomic(&path, &contents)?;
                paths.push(path);
            }
            Ok(paths)
        }
    }
}

/// Parse a records CSV back (round-trip check and downstream tooling).
pub fn read_intervention_records_csv(
    path: &Path,
) -> Result<Vec<(String, String, f64, usize, f64, bool)>, IoError> {
    let table = read_table(
        path,
        "records",
        "scenario_id,strategy,fraction,n_defaults,guarantee_size,systemic",
    )?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let fraction = parse_nonnegative(&table, *line, &fields[2], "fraction")?;
        let n_defaults: usize = fields[3].parse().map_err(|_| IoError::Parse {
            file: table.file.clone(),
            line: *line,
            message: format!("n_defaults `{}` is not an integer", fields[3]),
        })?;
        let guarantee = parse_nonnegative(&table, *line, &fields[4], "guarantee_size")?;
        let systemic = match fields[5].as_str() {
            "true" => true,
            "false" => false,
            other => {
                return Err(IoError::Parse {
                    file: table.file.clone(),
                    line: *line,
                    message: format!("systemic `{other}` is not a boolean"),
                })
            }
        };
        rows.push((
            fields[0].clone(),
            fields[1].clone(),
            fraction,
            n_defaults,
            guarantee,
            systemic,
        ));
    }
    Ok(rows)
}

/// Sweep table: `(z_or_capital, probability, extent, trials, seed)` per the
/// engine interface. Undefined extent is written as an empty field.
pub fn export_sweep(
    rows: &[SweepRow],
    path: &Path,
    provenance: &Provenance,
) -> Result<(), IoError> {
    if rows.is_empty() {
        return Err(IoError::NoRecords);
    }
    let mut out = provenance.version_line("sweep");
    out.push_str("z_or_capital,probability,extent,trials,seed\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.x),
            fmt_f64(row.probability),
            row.extent.map(fmt_f64).unwrap_or_default(),
            row.trials,
            row.seed,
        ));
    }
    write_atomic(path, &out)
}

/// One scenario row of a fire-sale batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRow {
    pub scenario_id: String,
    pub shock: String,
    pub n_defaults: usize,
    pub fraction: f64,
    pub equity_loss: f64,
    pub rounds: usize,
    pub converged: bool,
}

pub fn export_scenarios(
    rows: &[ScenarioRow],
    path: &Path,
    provenance: &Provenance,
) -> Result<(), IoError> {
    if rows.is_empty() {
        return Err(IoError::NoRecords);
    }
    let mut sorted: Vec<&ScenarioRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
    let mut out = provenance.version_line("scenarios");
    out.push_str("scenario_id,shock,n_defaults,fraction,equity_loss,rounds,converged\n");
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario_id,
            r.shock,
            r.n_defaults,
            fmt_f64(r.fraction),
            fmt_f64(r.equity_loss),
            r.rounds,
            r.converged,
        ));
    }
    write_atomic(path, &out)
}

/// Clearing solution: payments and post-settlement equity per bank.
pub fn export_clearing(
    solution: &ClearingSolution,
    path: &Path,
    provenance: &Provenance,
) -> Result<(), IoError> {
    let mut out = provenance.version_line("clearing");
    out.push_str("bank_id,obligation,payment,equity_after,defaulted\n");
    for (i, id) in solution.ids.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            id,
            fmt_f64(solution.obligations[i]),
            fmt_f64(solution.payments[i]),
            fmt_f64(solution.equity_after[i]),
            solution.defaults.contains(id),
        ));
    }
    write_atomic(path, &out)
}

/// Ranking export: `(rank, id, score, basis)`.
pub fn export_ranking<Id: std::fmt::Display>(
    ranking: &Ranking<Id>,
    path: &Path,
    provenance: &Provenance,
) -> Result<(), IoError> {
    let basis = match ranking.basis {
        RankBasis::Random { .. } => "random",
        RankBasis::Size => "size",
        RankBasis::Systemicness => "systemicness",
        RankBasis::OverlapCentrality => "overlap",
        RankBasis::AssetVolume => "volume",
    };
    let mut out = provenance.version_line("ranking");
    out.push_str("rank,id,score,basis\n");
    for (i, (id, score)) in ranking.entries.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, id, fmt_f64(*score), basis));
    }
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{self, BipartiteGenParams, DegreeDist, NetGenParams, SizeDist};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("create temp dir")
    }

    fn write(path: &Path, contents: &str) {
        fs::write(path, contents).unwrap();
    }

    #[test]
    fn load_isolated_banks_from_empty_holdings() {
        let dir = tmpdir();
        let banks = dir.path().join("banks.csv");
        write(
            &banks,
            "bank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities\n\
             b1,1,0,0.5,0\nb2,2,0,1,0\nb3,3,0,0,0\n",
        );
        let holdings = dir.path().join("holdings.csv");
        write(&holdings, "");
        let assets = dir.path().join("assets.csv");
        write(&assets, "asset_id,depth\na1,10\n");
        let net = load_network(&NetworkPaths {
            banks,
            exposures: None,
            holdings: Some(holdings),
            assets: Some(assets),
        })
        .unwrap();
        match net {
            LoadedNetwork::Bipartite(net) => {
                assert_eq!(net.n_banks(), 3);
                assert!(net.holdings().is_empty());
            }
            _ => panic!("expected bipartite"),
        }
    }

    #[test]
    fn negative_amount_names_the_row() {
        let dir = tmpdir();
        let banks = dir.path().join("banks.csv");
        write(
            &banks,
            "bank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities\n\
             b1,1,0,0,0\nb2,-3,0,0,0\n",
        );
        let err = load_network(&NetworkPaths {
            banks,
            ..Default::default()
        })
        .unwrap_err();
        match err {
            IoError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn dangling_exposure_id_is_reported() {
        let dir = tmpdir();
        let banks = dir.path().join("banks.csv");
        write(
            &banks,
            "bank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities\nb1,1,0,0,0\n",
        );
        let exposures = dir.path().join("exposures.csv");
        write(&exposures, "lender_id,borrower_id,amount\nb1,ghost,5\n");
        let err = load_network(&NetworkPaths {
            banks,
            exposures: Some(exposures),
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn unknown_version_is_refused() {
        let dir = tmpdir();
        let banks = dir.path().join("banks.csv");
        write(
            &banks,
            "# contagion-banks v99\nbank_id,liquid_assets,illiquid_assets,deposits,short_term_liabilities\n",
        );
        let err = load_network(&NetworkPaths {
            banks,
            ..Default::default()
        })
        .unwrap_err();
        assert!(matches!(err, IoError::UnsupportedVersion { .. }));
    }

    #[test]
    fn interbank_round_trip_is_byte_identical() {
        let params = NetGenParams {
            n_banks: 20,
            avg_degree: 3.0,
            degree_dist: DegreeDist::ErdosRenyi,
            size_dist: SizeDist::Uniform,
            capital_ratio: 0.05,
            interbank_fraction: 0.2,
            total_asset_scale: 100.0,
            seed: 5,
        };
        let net = LoadedNetwork::Interbank(netgen::gen_interbank(&params).unwrap());
        let dir = tmpdir();
        let prov = Provenance::seeded(5);
        save_network(&net, dir.path(), &prov).unwrap();
        let loaded = load_network(&NetworkPaths {
            banks: dir.path().join("banks.csv"),
            exposures: Some(dir.path().join("exposures.csv")),
            ..Default::default()
        })
        .unwrap();
        let dir2 = tmpdir();
        save_network(&loaded, dir2.path(), &prov).unwrap();
        for name in ["banks.csv", "exposures.csv"] {
            let a = fs::read(dir.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs after round trip");
        }
    }

    #[test]
    fn bipartite_round_trip_is_byte_identical() {
        let params = BipartiteGenParams {
            n_banks: 12,
            n_assets: 5,
            bank_avg_degree: 2.0,
            size_dist: SizeDist::power_law(2.5),
            capital_ratio: 0.06,
            depth_factor: 0.4,
            seed: 9,
        };
        let net = LoadedNetwork::Bipartite(netgen::gen_bipartite(&params).unwrap());
        let dir = tmpdir();
        let prov = Provenance::seeded(9);
        save_network(&net, dir.path(), &prov).unwrap();
        let loaded = load_network(&NetworkPaths {
            banks: dir.path().join("banks.csv"),
            exposures: None,
            holdings: Some(dir.path().join("holdings.csv")),
            assets: Some(dir.path().join("assets.csv")),
        })
        .unwrap();
        let dir2 = tmpdir();
        save_network(&loaded, dir2.path(), &prov).unwrap();
        for name in ["banks.csv", "assets.csv", "holdings.csv"] {
            let a = fs::read(dir.path().join(name)).unwrap();
            let b = fs::read(dir2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs after round trip");
        }
    }

    #[test]
    fn clearing_problem_loads_from_edge_list() {
        let dir = tmpdir();
        let liabilities = dir.path().join("liabilities.csv");
        write(
            &liabilities,
            "debtor_id,creditor_id,amount\nA,B,10\nB,C,10\n",
        );
        let externals = dir.path().join("externals.csv");
        write(&externals, "bank_id,external_assets\nA,5\nB,2\nC,1\n");
        let prob = load_clearing_problem(&liabilities, &externals).unwrap();
        let sol = crate::clearing::clearing_vector(&prob).unwrap();
        assert!((sol.payments[0] - 5.0).abs() < 1e-9);
        assert!((sol.payments[1] - 7.0).abs() < 1e-9);
        assert_eq!(sol.payments[2], 0.0);
    }

    #[test]
    fn export_is_deterministic_and_reparsable() {
        use crate::intervene::{InterventionRecord, Strategy};
        let records = vec![
            InterventionRecord {
                scenario_id: "asset:A1".into(),
                strategy: Strategy::Random,
                padded_fraction: 0.5,
                padded_ids: vec!["b1".into()],
                n_defaults: 2,
                fraction_defaulted: 0.5,
                guarantee_size: 10.0,
                guarantee_drawn: 1.5,
                systemic: true,
                rounds: 3,
                converged: true,
            },
            InterventionRecord {
                scenario_id: "asset:A0".into(),
                strategy: Strategy::Size,
                padded_fraction: 0.0,
                padded_ids: vec![],
                n_defaults: 0,
                fraction_defaulted: 0.0,
                guarantee_size: 0.0,
                guarantee_drawn: 0.0,
                systemic: false,
                rounds: 0,
                converged: true,
            },
        ];
        let dir = tmpdir();
        let prov = Provenance::seeded(1);
        let paths =
            export_intervention_records(&records, ExportFormat::Csv, dir.path(), "records", &prov)
                .unwrap();
        let first = fs::read(&paths[0]).unwrap();
        export_intervention_records(&records, ExportFormat::Csv, dir.path(), "records", &prov)
            .unwrap();
        let second = fs::read(&paths[0]).unwrap();
        assert_eq!(first, second);

        let parsed = read_intervention_records_csv(&paths[0]).unwrap();
        assert_eq!(parsed.len(), 2);
        // Sorted by scenario id: A0 first.
        assert_eq!(parsed[0].0, "asset:A0");
        assert_eq!(parsed[1].3, 2);

        let jsonl = export_intervention_records(
            &records,
            ExportFormat::JsonLines,
            dir.path(),
            "records",
            &prov,
        )
        .unwrap();
        let text = fs::read_to_string(&jsonl[0]).unwrap();
        assert_eq!(text.lines().count(), 2);

        let panels =
            export_intervention_records(&records, ExportFormat::PlotData, dir.path(), "fig", &prov)
                .unwrap();
        // One per strategy plus the no-guarantee baseline panel.
        assert_eq!(panels.len(), 3);
        assert!(panels.iter().any(|p| p.ends_with("fig_none.dat")));
    }

    #[test]
    fn empty_record_export_is_an_error() {
        let dir = tmpdir();
        let err = export_intervention_records(
            &[],
            ExportFormat::Csv,
            dir.path(),
            "records",
            &Provenance::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IoError::NoRecords));
    }

    #[test]
    fn sweep_export_handles_undefined_extent() {
        let rows = vec![
            SweepRow {
                x: 0.5,
                probability: 0.0,
                extent: None,
                trials: 10,
                seed: 7,
            },
            SweepRow {
                x: 3.0,
                probability: 0.4,
                extent: Some(0.9),
                trials: 10,
                seed: 7,
            },
        ];
        let dir = tmpdir();
        let path = dir.path().join("sweep.csv");
        export_sweep(&rows, &path, &Provenance::seeded(7)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("0.5,0,,10,7"));
        assert!(text.contains("3,0.4,0.9,10,7"));
    }
}
