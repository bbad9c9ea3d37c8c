//! Command-line surface: reproducible batch runs of the generators,
//! engines, rankings, and intervention experiments.
//!
//! Every run writes the fully resolved configuration to the output
//! directory, and every artifact embeds the seed, a config hash, and the
//! artifact version in its version line. Outputs contain no timestamps, so
//! identical config plus seed reproduces byte-identical files at any
//! `--jobs` setting.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::cascade::{self, CascadeConfig};
use crate::clearing::{self, ClearingProblem};
use crate::firesale::{self, FiresaleConfig, Shock};
use crate::intervene::{self, ExperimentConfig, Strategy};
use crate::io::config::{
    parse_impact_kind, parse_policy, parse_shock, parse_strategies, EngineKind, NetworkSource,
    Overrides, RawConfig, ScenarioConfig,
};
use crate::io::{self, synthetic, ExportFormat, IoError, LoadedNetwork, Provenance, ScenarioRow};
use crate::model::{BipartiteNetwork, InterbankNetwork};
use crate::netgen;
use crate::rank;
use crate::seed;

/// Simulators for contagion in financial networks.
#[derive(Debug, Parser)]
#[command(name = "contagion", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a network and write its table files.
    Generate(RunArgs),
    /// Monte Carlo default cascades on interbank networks.
    SimulateInterbank(RunArgs),
    /// Solve the self-consistent clearing problem.
    Clearing(RunArgs),
    /// Fire-sale contagion scenarios on bank-asset networks.
    SimulateFiresale(RunArgs),
    /// Rank banks or assets by systemic importance.
    Rank(RunArgs),
    /// Bail-out and buy-out intervention experiments.
    Intervene(RunArgs),
    /// Degree, capital, or leverage parameter sweeps.
    Sweep(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario configuration file (flat `section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Seed override; beats CONTAGION_SEED and the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial-count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores). Results are independent of this.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

/// Exit code contract: 0 success, 1 validation error, 2 runtime error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
enum AppError {
    Validation(String),
    Runtime(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => EXIT_VALIDATION,
            AppError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Runtime(m) => m,
        }
    }
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => AppError::Runtime(e.to_string()),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<netgen::NetGenError> for AppError {
    fn from(e: netgen::NetGenError) -> Self {
        match e {
            netgen::NetGenError::InvalidParams(_) | netgen::NetGenError::Model(_) => {
                AppError::Validation(e.to_string())
            }
            netgen::NetGenError::Infeasible { .. } => AppError::Runtime(e.to_string()),
        }
    }
}

impl From<cascade::CascadeError> for AppError {
    fn from(e: cascade::CascadeError) -> Self {
        match e {
            cascade::CascadeError::GenerationExhausted { .. } => AppError::Runtime(e.to_string()),
            cascade::CascadeError::NetGen(inner) => inner.into(),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<clearing::ClearingError> for AppError {
    fn from(e: clearing::ClearingError) -> Self {
        match e {
            clearing::ClearingError::NonConvergence { .. } => AppError::Runtime(e.to_string()),
            clearing::ClearingError::Cascade(inner) => inner.into(),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<firesale::FiresaleError> for AppError {
    fn from(e: firesale::FiresaleError) -> Self {
        match e {
            firesale::FiresaleError::NetGen(inner) => inner.into(),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

impl From<intervene::InterveneError> for AppError {
    fn from(e: intervene::InterveneError) -> Self {
        match e {
            intervene::InterveneError::Firesale(inner) => inner.into(),
            _ => AppError::Validation(e.to_string()),
        }
    }
}

/// Parse argv, run the command, and return the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_default_env().try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes, anything else is a
            // usage error.
            let code = if err.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
            let _ = err.print();
            return code;
        }
    };
    let (args, run): (&RunArgs, fn(&ScenarioConfig) -> Result<(), AppError>) = match &cli.command {
        Command::Generate(a) => (a, cmd_generate),
        Command::SimulateInterbank(a) => (a, cmd_simulate_interbank),
        Command::Clearing(a) => (a, cmd_clearing),
        Command::SimulateFiresale(a) => (a, cmd_simulate_firesale),
        Command::Rank(a) => (a, cmd_rank),
        Command::Intervene(a) => (a, cmd_intervene),
        Command::Sweep(a) => (a, cmd_sweep),
    };
    match execute(args, run) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn execute(
    args: &RunArgs,
    run: fn(&ScenarioConfig) -> Result<(), AppError>,
) -> Result<(), AppError> {
    let raw = RawConfig::parse_file(&args.config)?;
    let overrides = Overrides {
        seed: args.seed,
        trials: args.trials,
        out_dir: args.out.clone(),
    };
    let config = ScenarioConfig::resolve(raw, &overrides)?;

    std::fs::create_dir_all(&config.out_dir).map_err(|e| {
        AppError::Runtime(format!("cannot create {}: {e}", config.out_dir.display()))
    })?;
    let resolved_path = config.out_dir.join("config.resolved.cfg");
    std::fs::write(&resolved_path, config.raw.resolved_text())
        .map_err(|e| AppError::Runtime(format!("cannot write {}: {e}", resolved_path.display())))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| AppError::Runtime(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(&config))
}

fn provenance(config: &ScenarioConfig) -> Provenance {
    Provenance {
        seed: Some(config.seed),
        config_hash: Some(config.raw.hash()),
    }
}

/// The config's `engine` must match what the subcommand runs.
fn require_engine(config: &ScenarioConfig, expected: &[EngineKind]) -> Result<(), AppError> {
    if expected.contains(&config.engine) {
        Ok(())
    } else {
        Err(AppError::Validation(format!(
            "config engine {:?} does not match this command",
            config.engine
        )))
    }
}

fn load_any_network(config: &ScenarioConfig) -> Result<LoadedNetwork, AppError> {
    match &config.network {
        NetworkSource::GeneratedInterbank(params) => {
            Ok(LoadedNetwork::Interbank(netgen::gen_interbank(params)?))
        }
        NetworkSource::GeneratedBipartite(params) => {
            Ok(LoadedNetwork::Bipartite(netgen::gen_bipartite(params)?))
        }
        NetworkSource::SyntheticEba => Ok(LoadedNetwork::Bipartite(synthetic::gen_synthetic_eba(
            config.seed,
        ))),
        NetworkSource::Loaded(paths) => Ok(io::load_network(paths)?),
        NetworkSource::LoadedClearing { .. } => Err(AppError::Validation(
            "liability-matrix inputs are only valid for the `clearing` command".into(),
        )),
    }
}

fn bipartite_network(config: &ScenarioConfig) -> Result<BipartiteNetwork, AppError> {
    match load_any_network(config)? {
        LoadedNetwork::Bipartite(net) => Ok(net),
        LoadedNetwork::Interbank(_) => Err(AppError::Validation(
            "this command needs a bank-asset (bipartite) network".into(),
        )),
    }
}

fn interbank_network(config: &ScenarioConfig) -> Result<InterbankNetwork, AppError> {
    match load_any_network(config)? {
        LoadedNetwork::Interbank(net) => Ok(net),
        LoadedNetwork::Bipartite(_) => Err(AppError::Validation(
            "this command needs an interbank network".into(),
        )),
    }
}

const COMMON_KEYS: &[&str] = &[
    "engine",
    "run.seed",
    "run.trials",
    "run.systemic_threshold",
    "output.dir",
    "network.kind",
    "netgen.n_banks",
    "netgen.avg_degree",
    "netgen.degree_dist",
    "netgen.size_dist",
    "netgen.capital_ratio",
    "netgen.interbank_fraction",
    "netgen.total_asset_scale",
    "netgen.n_assets",
    "netgen.bank_avg_degree",
    "netgen.depth_factor",
    "input.banks",
    "input.exposures",
    "input.holdings",
    "input.assets",
    "input.liabilities",
    "input.externals",
];

fn known_keys(extra: &[&'static str]) -> Vec<&'static str> {
    let mut keys = COMMON_KEYS.to_vec();
    keys.extend_from_slice(extra);
    keys
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(config: &ScenarioConfig) -> Result<(), AppError> {
    config.raw.ensure_known(&known_keys(&[]))?;
    let net = load_any_network(config)?;
    let files = io::save_network(&net, &config.out_dir, &provenance(config))?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_simulate_interbank(config: &ScenarioConfig) -> Result<(), AppError> {
    require_engine(config, &[EngineKind::Interbank])?;
    config.raw.ensure_known(&known_keys(&[
        "run.recovery_rate",
        "run.sequential",
        "run.shock_haircut",
    ]))?;
    let NetworkSource::GeneratedInterbank(params) = &config.network else {
        return Err(AppError::Validation(
            "simulate-interbank regenerates a network per trial and needs \
             network.kind = generated-interbank"
                .into(),
        ));
    };
    let cascade_config = CascadeConfig {
        recovery_rate: config.raw.get_or("run.recovery_rate", 0.0)?,
        sequential: config.raw.get_bool("run.sequential", false)?,
        shock_haircut: config.raw.get_or("run.shock_haircut", 1.0)?,
    };
    let stats = cascade::monte_carlo_with(
        params,
        config.trials,
        config.systemic_threshold,
        config.seed,
        &cascade_config,
    )?;
    let row = cascade::SweepRow {
        x: params.avg_degree,
        probability: stats.probability,
        extent: stats.extent,
        trials: stats.trials,
        seed: config.seed,
    };
    let path = config.out_dir.join("stats.csv");
    io::export_sweep(&[row], &path, &provenance(config))?;
    println!(
        "probability={} extent={} trials={} threshold={}",
        stats.probability,
        stats
            .extent
            .map(|e| e.to_string())
            .unwrap_or_else(|| "undefined".into()),
        stats.trials,
        stats.systemic_threshold,
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_clearing(config: &ScenarioConfig) -> Result<(), AppError> {
    require_engine(config, &[EngineKind::Clearing])?;
    config.raw.ensure_known(&known_keys(&[
        "shock.kind",
        "shock.bank",
        "clearing.tolerance",
        "clearing.max_iter",
    ]))?;
    let shocked = match config.raw.get("shock.kind") {
        Some("bank") => Some(crate::model::BankId::new(config.raw.require("shock.bank")?)),
        Some(other) => {
            return Err(AppError::Validation(format!(
                "clearing supports only shock.kind = bank, got `{other}`"
            )))
        }
        None => None,
    };
    let problem = match &config.network {
        NetworkSource::LoadedClearing {
            liabilities,
            externals,
        } => {
            if shocked.is_some() {
                return Err(AppError::Validation(
                    "shock.bank applies to interbank networks, not raw liability matrices".into(),
                ));
            }
            io::load_clearing_problem(liabilities, externals)?
        }
        _ => {
            let net = interbank_network(config)?;
            ClearingProblem::from_interbank(&net, shocked.as_ref())?
        }
    };
    let tol = config
        .raw
        .get_or("clearing.tolerance", clearing::DEFAULT_TOL)?;
    let max_iter = config
        .raw
        .get_or("clearing.max_iter", clearing::DEFAULT_MAX_ITER)?;
    let solution = clearing::clearing_vector_with(&problem, tol, max_iter)?;

    let path = config.out_dir.join("clearing.csv");
    io::export_clearing(&solution, &path, &provenance(config))?;
    let payments: Vec<String> = solution.payments.iter().map(|p| format!("{p}")).collect();
    println!("p = ({})", payments.join(", "));
    let defaults: Vec<String> = solution.defaults.iter().map(|d| d.to_string()).collect();
    println!("defaults = [{}]", defaults.join(", "));
    if solution.least_fixed_point_differs {
        println!("note: clearing vector is not unique (least fixed point differs)");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn shock_label(shock: &Shock) -> String {
    match shock {
        Shock::AssetDevaluation { asset, haircut } => format!("asset {asset} haircut {haircut}"),
        Shock::BankDefault { bank } => format!("bank {bank} default"),
        Shock::RandomAsset { haircut } => format!("random asset haircut {haircut}"),
        Shock::RandomBank => "random bank default".into(),
    }
}

fn cmd_simulate_firesale(config: &ScenarioConfig) -> Result<(), AppError> {
    require_engine(config, &[EngineKind::Firesale])?;
    config.raw.ensure_known(&known_keys(&[
        "shock.kind",
        "shock.asset",
        "shock.bank",
        "shock.haircut",
        "impact.kind",
        "impact.policy",
        "run.max_rounds",
    ]))?;
    let net = bipartite_network(config)?;
    let shock = parse_shock(&config.raw)?;
    let impact = parse_impact_kind(config.raw.get("impact.kind").unwrap_or("exponential"))?;
    let policy = parse_policy(config.raw.get("impact.policy").unwrap_or("on-default"))?;
    let max_rounds = config.raw.get_or("run.max_rounds", 10_000usize)?;

    let randomized = matches!(shock, Shock::RandomAsset { .. } | Shock::RandomBank);
    let trials = if randomized { config.trials } else { 1 };
    let mut rows = Vec::with_capacity(trials);
    let mut systemic = 0usize;
    for trial in 0..trials {
        let fs = FiresaleConfig {
            impact,
            liquidation_policy: policy,
            shock: shock.clone(),
            max_rounds,
            systemic_threshold: config.systemic_threshold,
            seed: seed::derive(config.seed, &[31, trial as u64]),
        };
        let result = firesale::run_firesale(&net, &fs)?;
        if result.fraction_defaulted > config.systemic_threshold {
            systemic += 1;
        }
        rows.push(ScenarioRow {
            scenario_id: format!("trial{trial:05}"),
            shock: shock_label(&shock),
            n_defaults: result.defaulted_ids.len(),
            fraction: result.fraction_defaulted,
            equity_loss: result.total_equity_loss,
            rounds: result.rounds,
            converged: result.converged,
        });
    }
    let path = config.out_dir.join("scenarios.csv");
    io::export_scenarios(&rows, &path, &provenance(config))?;
    println!(
        "trials={} systemic={} share={}",
        trials,
        systemic,
        systemic as f64 / trials as f64
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_rank(config: &ScenarioConfig) -> Result<(), AppError> {
    config.raw.ensure_known(&known_keys(&["rank.basis"]))?;
    let basis = config.raw.get("rank.basis").unwrap_or("size").to_string();
    let net = load_any_network(config)?;
    let path = config.out_dir.join("ranking.csv");
    let prov = provenance(config);
    match (&net, basis.as_str()) {
        (LoadedNetwork::Bipartite(net), "size") => {
            io::export_ranking(&rank::rank_by_size(net.banks()), &path, &prov)?
        }
        (LoadedNetwork::Interbank(net), "size") => {
            io::export_ranking(&rank::rank_by_size(net.banks()), &path, &prov)?
        }
        (LoadedNetwork::Bipartite(net), "systemicness") => io::export_ranking(
            &rank::systemicness(net, rank::Connectedness::Degree),
            &path,
            &prov,
        )?,
        (LoadedNetwork::Interbank(net), "systemicness") => io::export_ranking(
            &rank::systemicness_interbank(net, rank::Connectedness::Degree),
            &path,
            &prov,
        )?,
        (LoadedNetwork::Bipartite(net), "overlap") => {
            io::export_ranking(&rank::overlap_centrality(net), &path, &prov)?
        }
        (LoadedNetwork::Bipartite(net), "volume") => {
            io::export_ranking(&rank::rank_assets_by_volume(net), &path, &prov)?
        }
        (LoadedNetwork::Bipartite(net), "random") => {
            let ids: Vec<_> = net.banks().iter().map(|b| b.id.clone()).collect();
            io::export_ranking(&rank::rank_random(&ids, config.seed), &path, &prov)?
        }
        (LoadedNetwork::Interbank(net), "random") => {
            let ids: Vec<_> = net.banks().iter().map(|b| b.id.clone()).collect();
            io::export_ranking(&rank::rank_random(&ids, config.seed), &path, &prov)?
        }
        (_, other) => {
            return Err(AppError::Validation(format!(
                "rank.basis `{other}` is not available for this network type"
            )))
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_intervene(config: &ScenarioConfig) -> Result<(), AppError> {
    require_engine(config, &[EngineKind::Intervene])?;
    config.raw.ensure_known(&known_keys(&[
        "intervene.experiment",
        "intervene.strategies",
        "intervene.fractions",
        "intervene.haircut",
        "intervene.formats",
        "impact.kind",
        "impact.policy",
        "run.max_rounds",
    ]))?;
    let net = bipartite_network(config)?;
    let experiment = config.raw.get("intervene.experiment").unwrap_or("both");
    let fractions = config
        .raw
        .get_f64_list("intervene.fractions")?
        .unwrap_or_else(|| vec![0.0, 0.1, 0.2, 0.3, 0.5, 1.0]);
    let haircut = config.raw.get_or("intervene.haircut", 0.3)?;
    let scenarios = intervene::per_asset_scenarios(&net, haircut);
    let mut exp_config = ExperimentConfig::new(config.seed);
    exp_config.impact = parse_impact_kind(config.raw.get("impact.kind").unwrap_or("exponential"))?;
    exp_config.liquidation_policy =
        parse_policy(config.raw.get("impact.policy").unwrap_or("on-default"))?;
    exp_config.max_rounds = config.raw.get_or("run.max_rounds", 10_000usize)?;
    exp_config.systemic_threshold = config.systemic_threshold;

    let formats: Vec<ExportFormat> = match config.raw.get("intervene.formats") {
        None => vec![ExportFormat::Csv, ExportFormat::PlotData],
        Some(list) => list
            .split(',')
            .map(|f| match f.trim() {
                "csv" => Ok(ExportFormat::Csv),
                "jsonl" => Ok(ExportFormat::JsonLines),
                "plotdata" => Ok(ExportFormat::PlotData),
                other => Err(AppError::Validation(format!("unknown format `{other}`"))),
            })
            .collect::<Result<_, _>>()?,
    };
    let prov = provenance(config);

    if experiment == "bailout" || experiment == "both" {
        let strategies = match config.raw.get("intervene.strategies") {
            Some(list) => parse_strategies(list)?,
            None => vec![
                Strategy::Random,
                Strategy::Size,
                Strategy::OverlapCentrality,
            ],
        };
        let records =
            intervene::bailout_experiment(&net, &strategies, &fractions, &scenarios, &exp_config)?;
        for format in &formats {
            for f in io::export_intervention_records(
                &records,
                *format,
                &config.out_dir,
                "bailout",
                &prov,
            )? {
                println!("wrote {}", f.display());
            }
        }
    }
    if experiment == "buyout" || experiment == "both" {
        let strategies = vec![Strategy::Random, Strategy::AssetVolume];
        let records =
            intervene::buyout_experiment(&net, &strategies, &fractions, &scenarios, &exp_config)?;
        for format in &formats {
            for f in io::export_intervention_records(
                &records,
                *format,
                &config.out_dir,
                "buyout",
                &prov,
            )? {
                println!("wrote {}", f.display());
            }
        }
    }
    if !["bailout", "buyout", "both"].contains(&experiment) {
        return Err(AppError::Validation(format!(
            "intervene.experiment must be bailout, buyout, or both; got `{experiment}`"
        )));
    }
    Ok(())
}

fn cmd_sweep(config: &ScenarioConfig) -> Result<(), AppError> {
    require_engine(config, &[EngineKind::Interbank, EngineKind::Firesale])?;
    config.raw.ensure_known(&known_keys(&[
        "sweep.kind",
        "sweep.values",
        "impact.kind",
        "run.crossing_threshold",
    ]))?;
    let kind = config.raw.require("sweep.kind")?.to_string();
    let values = config
        .raw
        .get_f64_list("sweep.values")?
        .ok_or_else(|| AppError::Validation("missing sweep.values".into()))?;
    let prov = provenance(config);
    match kind.as_str() {
        "degree" | "capital" => {
            let NetworkSource::GeneratedInterbank(params) = &config.network else {
                return Err(AppError::Validation(
                    "degree/capital sweeps need network.kind = generated-interbank".into(),
                ));
            };
            let rows = if kind == "degree" {
                cascade::degree_sweep(
                    params,
                    &values,
                    config.trials,
                    config.systemic_threshold,
                    config.seed,
                )?
            } else {
                cascade::capital_sweep(
                    params,
                    &values,
                    config.trials,
                    config.systemic_threshold,
                    config.seed,
                )?
            };
            let path = config.out_dir.join("sweep.csv");
            io::export_sweep(&rows, &path, &prov)?;
            for row in &rows {
                println!(
                    "{} {} probability={} extent={}",
                    kind,
                    row.x,
                    row.probability,
                    row.extent
                        .map(|e| e.to_string())
                        .unwrap_or_else(|| "undefined".into())
                );
            }
            println!("wrote {}", path.display());
        }
        "leverage" => {
            let NetworkSource::GeneratedBipartite(params) = &config.network else {
                return Err(AppError::Validation(
                    "leverage sweeps need network.kind = generated-bipartite".into(),
                ));
            };
            let impact = parse_impact_kind(config.raw.get("impact.kind").unwrap_or("exponential"))?;
            let crossing = config.raw.get_or("run.crossing_threshold", 0.01)?;
            let result = firesale::critical_leverage_with(
                params,
                &values,
                config.trials,
                impact,
                config.systemic_threshold,
                crossing,
                config.seed,
            )?;
            let rows: Vec<cascade::SweepRow> = result
                .rows
                .iter()
                .map(|r| cascade::SweepRow {
                    x: r.leverage,
                    probability: r.probability,
                    extent: None,
                    trials: r.trials,
                    seed: config.seed,
                })
                .collect();
            let path = config.out_dir.join("sweep.csv");
            io::export_sweep(&rows, &path, &prov)?;
            match result.lambda_star {
                Some(l) => println!("lambda_star = {l}"),
                None => println!("lambda_star = none (no crossing detected)"),
            }
            println!("wrote {}", path.display());
        }
        other => {
            return Err(AppError::Validation(format!(
                "sweep.kind must be degree, capital, or leverage; got `{other}`"
            )))
        }
    }
    Ok(())
}
