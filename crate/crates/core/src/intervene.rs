//! Bail-out and buy-out guarantee experiments over grids of shock
//! scenarios, intervention strategies, and padded fractions.
//!
//! Padding a bank guarantees it against default and liquidation: it absorbs
//! losses (tracked as guarantee drawn) without propagating them. Padding an
//! asset guarantees its price against endogenous fire-sale impact, which is
//! exactly infinite market depth; the exogenous scenario shock still
//! applies so scenarios stay comparable across strategies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firesale::{
    run_firesale, FiresaleConfig, FiresaleEngine, FiresaleError, ImpactKind, LiquidationPolicy,
    Shock,
};
use crate::model::{Asset, AssetId, BankId, BankStatus, BipartiteNetwork, Currency, ModelError};
use crate::rank::{self, Connectedness, Ranking};
use crate::seed;

const STREAM_RANDOM_BANKS: u64 = 21;
const STREAM_RANDOM_ASSETS: u64 = 22;
const STREAM_CELL: u64 = 23;

#[derive(Debug, Error)]
pub enum InterveneError {
    #[error("unknown bank id `{0}`")]
    UnknownBank(BankId),
    #[error("unknown asset id `{0}`")]
    UnknownAsset(AssetId),
    #[error("bank `{0}` is already defaulted and cannot be padded")]
    CannotPadDefaulted(BankId),
    #[error("padded fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("strategy {strategy:?} is not applicable to {experiment} experiments")]
    StrategyNotApplicable {
        strategy: Strategy,
        experiment: &'static str,
    },
    #[error("experiment needs at least one strategy, fraction, and scenario")]
    EmptyGrid,
    #[error(transparent)]
    Firesale(#[from] FiresaleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ordering used to choose intervention targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Random,
    Size,
    Systemicness,
    OverlapCentrality,
    AssetVolume,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Size => "size",
            Strategy::Systemicness => "systemicness",
            Strategy::OverlapCentrality => "overlap",
            Strategy::AssetVolume => "volume",
        }
    }
}

/// Shared engine settings for one experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub impact: ImpactKind,
    pub liquidation_policy: LiquidationPolicy,
    pub max_rounds: usize,
    pub systemic_threshold: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        ExperimentConfig {
            impact: ImpactKind::Exponential,
            liquidation_policy: LiquidationPolicy::OnDefault,
            max_rounds: 10_000,
            systemic_threshold: 0.05,
            seed,
        }
    }
}

/// Outcome of one (scenario, strategy, fraction) grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub scenario_id: String,
    pub strategy: Strategy,
    pub padded_fraction: f64,
    /// Padded ids in strategy-rank order (top `ceil(f * N)`).
    pub padded_ids: Vec<String>,
    pub n_defaults: usize,
    pub fraction_defaulted: f64,
    /// Nominal face value of the guaranteed positions.
    pub guarantee_size: Currency,
    /// Shortfall actually absorbed by the guarantees at the terminal state.
    pub guarantee_drawn: Currency,
    pub systemic: bool,
    pub rounds: usize,
    pub converged: bool,
}

/// Stable label for a scenario, used for record sorting and joins.
pub fn scenario_id(shock: &Shock) -> String {
    match shock {
        Shock::AssetDevaluation { asset, .. } => format!("asset:{asset}"),
        Shock::BankDefault { bank } => format!("bank:{bank}"),
        Shock::RandomAsset { .. } => "random-asset".to_string(),
        Shock::RandomBank => "random-bank".to_string(),
    }
}

/// The standard scenario battery: every asset devalued by the given
/// haircut, one at a time.
pub fn per_asset_scenarios(net: &BipartiteNetwork, haircut: f64) -> Vec<Shock> {
    net.assets()
        .iter()
        .map(|a| Shock::AssetDevaluation {
            asset: a.id.clone(),
            haircut,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Padding
// ---------------------------------------------------------------------------

/// Mark banks as padded: they never default and never liquidate; losses
/// they absorb are tracked but do not propagate.
pub fn pad_banks(
    net: &BipartiteNetwork,
    ids: &[BankId],
) -> Result<BipartiteNetwork, InterveneError> {
    let mut out = net.clone();
    for id in ids {
        match net.bank(id) {
            None => return Err(InterveneError::UnknownBank(id.clone())),
            Some(bank) if bank.status == BankStatus::Defaulted => {
                return Err(InterveneError::CannotPadDefaulted(id.clone()))
            }
            Some(_) => out = out.with_bank_status(id, BankStatus::Padded),
        }
    }
    Ok(out)
}

/// Guarantee asset prices against endogenous impact by giving the padded
/// assets infinite market depth. Exogenous scenario shocks still apply.
pub fn pad_assets(
    net: &BipartiteNetwork,
    ids: &[AssetId],
) -> Result<BipartiteNetwork, InterveneError> {
    for id in ids {
        if net.asset_index_of(id).is_none() {
            return Err(InterveneError::UnknownAsset(id.clone()));
        }
    }
    let assets: Vec<Asset> = net
        .assets()
        .iter()
        .map(|a| {
            if ids.contains(&a.id) {
                Asset {
                    id: a.id.clone(),
                    depth: f64::INFINITY,
                    price: a.price,
                }
            } else {
                a.clone()
            }
        })
        .collect();
    Ok(BipartiteNetwork::new(
        net.banks().to_vec(),
        assets,
        net.holdings().to_vec(),
    )?)
}

/// Nominal guarantee: total assets of padded banks plus total system
/// holdings of padded assets at current (pre-shock) prices. The face value
/// can be much larger than what is ever drawn.
pub fn guarantee_cost(
    net: &BipartiteNetwork,
    padded_banks: &[BankId],
    padded_assets: &[AssetId],
) -> Result<Currency, InterveneError> {
    let mut total = 0.0;
    for id in padded_banks {
        let bank = net
            .bank(id)
            .ok_or_else(|| InterveneError::UnknownBank(id.clone()))?;
        total += bank.balance_sheet.total_assets();
    }
    for id in padded_assets {
        let k = net
            .asset_index_of(id)
            .ok_or_else(|| InterveneError::UnknownAsset(id.clone()))?;
        let price = net.assets()[k].price;
        total += net
            .holdings()
            .iter()
            .filter(|h| &h.asset == id)
            .map(|h| h.units * price)
            .sum::<f64>();
    }
    Ok(total)
}

/// Defaults caused by the shock alone, with every endogenous channel
/// switched off (all assets padded).
pub fn direct_shock_defaults(
    net: &BipartiteNetwork,
    shock: &Shock,
    config: &ExperimentConfig,
) -> Result<std::collections::BTreeSet<BankId>, InterveneError> {
    let all_assets: Vec<AssetId> = net.assets().iter().map(|a| a.id.clone()).collect();
    let padded = pad_assets(net, &all_assets)?;
    let fs = FiresaleConfig {
        impact: config.impact,
        liquidation_policy: config.liquidation_policy,
        shock: shock.clone(),
        max_rounds: config.max_rounds,
        systemic_threshold: config.systemic_threshold,
        seed: config.seed,
    };
    Ok(run_firesale(&padded, &fs)?.defaulted_ids)
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Banks,
    Assets,
}

fn validate_grid(
    strategies: &[Strategy],
    fractions: &[f64],
    scenarios: &[Shock],
    target: Target,
) -> Result<(), InterveneError> {
    if strategies.is_empty() || fractions.is_empty() || scenarios.is_empty() {
        return Err(InterveneError::EmptyGrid);
    }
    for &f in fractions {
        if !(0.0..=1.0).contains(&f) {
            return Err(InterveneError::InvalidFraction(f));
        }
    }
    for &s in strategies {
        let ok = match target {
            Target::Banks => !matches!(s, Strategy::AssetVolume),
            Target::Assets => matches!(s, Strategy::Random | Strategy::AssetVolume),
        };
        if !ok {
            return Err(InterveneError::StrategyNotApplicable {
                strategy: s,
                experiment: match target {
                    Target::Banks => "bail-out",
                    Target::Assets => "buy-out",
                },
            });
        }
    }
    Ok(())
}

fn bank_ranking(
    net: &BipartiteNetwork,
    strategy: Strategy,
    master: u64,
    scenario_idx: u64,
) -> Ranking<BankId> {
    match strategy {
        Strategy::Random => {
            let ids: Vec<BankId> = net.banks().iter().map(|b| b.id.clone()).collect();
            rank::rank_random(
                &ids,
                seed::derive(master, &[STREAM_RANDOM_BANKS, scenario_idx]),
            )
        }
        Strategy::Size => rank::rank_by_size(net.banks()),
        Strategy::Systemicness => rank::systemicness(net, Connectedness::Degree),
        Strategy::OverlapCentrality => rank::overlap_centrality(net),
        Strategy::AssetVolume => unreachable!("validated against bank experiments"),
    }
}

fn asset_ranking(
    net: &BipartiteNetwork,
    strategy: Strategy,
    master: u64,
    scenario_idx: u64,
) -> Ranking<AssetId> {
    match strategy {
        Strategy::Random => {
            let ids: Vec<AssetId> = net.assets().iter().map(|a| a.id.clone()).collect();
            rank::rank_random(
                &ids,
                seed::derive(master, &[STREAM_RANDOM_ASSETS, scenario_idx]),
            )
        }
        Strategy::AssetVolume => rank::rank_assets_by_volume(net),
        _ => unreachable!("validated against asset experiments"),
    }
}

fn run_cell(
    net: &BipartiteNetwork,
    scenario: &Shock,
    strategy: Strategy,
    fraction: f64,
    config: &ExperimentConfig,
    cell_seed: u64,
    target: Target,
    padded_banks: &[BankId],
    padded_assets: &[AssetId],
) -> Result<InterventionRecord, InterveneError> {
    let padded_net = match target {
        Target::Banks => pad_banks(net, padded_banks)?,
        Target::Assets => pad_assets(net, padded_assets)?,
    };
    let fs = FiresaleConfig {
        impact: config.impact,
        liquidation_policy: config.liquidation_policy,
        shock: scenario.clone(),
        max_rounds: config.max_rounds,
        systemic_threshold: config.systemic_threshold,
        seed: cell_seed,
    };
    let mut engine = FiresaleEngine::new(&padded_net, fs)?;
    engine.apply_shock()?;
    let result = engine.run()?;
    let guarantee_size = guarantee_cost(net, padded_banks, padded_assets)?;
    let padded_ids = match target {
        Target::Banks => padded_banks.iter().map(|b| b.to_string()).collect(),
        Target::Assets => padded_assets.iter().map(|a| a.to_string()).collect(),
    };
    Ok(InterventionRecord {
        scenario_id: scenario_id(scenario),
        strategy,
        padded_fraction: fraction,
        padded_ids,
        n_defaults: result.defaulted_ids.len(),
        fraction_defaulted: result.fraction_defaulted,
        guarantee_size,
        guarantee_drawn: engine.guarantee_drawn(),
        systemic: result.fraction_defaulted > config.systemic_threshold,
        rounds: result.rounds,
        converged: result.converged,
    })
}

fn run_experiment(
    net: &BipartiteNetwork,
    strategies: &[Strategy],
    fractions: &[f64],
    scenarios: &[Shock],
    config: &ExperimentConfig,
    target: Target,
) -> Result<Vec<InterventionRecord>, InterveneError> {
    validate_grid(strategies, fractions, scenarios, target)?;

    // One ranking per (strategy, scenario): deterministic strategies ignore
    // the scenario; Random re-draws per scenario. Fractions take prefixes
    // of the same ordering so padded sets nest.
    let mut cells = Vec::new();
    for (si, scenario) in scenarios.iter().enumerate() {
        for (ti, &strategy) in strategies.iter().enumerate() {
            let (bank_pool, asset_pool) = match target {
                Target::Banks => (
                    bank_ranking(net, strategy, config.seed, si as u64),
                    Ranking {
                        entries: Vec::new(),
                        basis: rank::RankBasis::Size,
                    },
                ),
                Target::Assets => (
                    Ranking {
                        entries: Vec::new(),
                        basis: rank::RankBasis::Size,
                    },
                    asset_ranking(net, strategy, config.seed, si as u64),
                ),
            };
            for (fi, &fraction) in fractions.iter().enumerate() {
                let padded_banks = match target {
                    Target::Banks => bank_pool.top_fraction(fraction),
                    Target::Assets => Vec::new(),
                };
                let padded_assets = match target {
                    Target::Banks => Vec::new(),
                    Target::Assets => asset_pool.top_fraction(fraction),
                };
                let cell_seed =
                    seed::derive(config.seed, &[STREAM_CELL, si as u64, ti as u64, fi as u64]);
                cells.push((
                    scenario.clone(),
                    strategy,
                    fraction,
                    cell_seed,
                    padded_banks,
                    padded_assets,
                ));
            }
        }
    }

    let mut records: Vec<InterventionRecord> = cells
        .into_par_iter()
        .map(|(scenario, strategy, fraction, cell_seed, banks, assets)| {
            run_cell(
                net, &scenario, strategy, fraction, config, cell_seed, target, &banks, &assets,
            )
        })
        .collect::<Result<_, _>>()?;

    records.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then_with(|| a.strategy.name().cmp(b.strategy.name()))
            .then_with(|| a.padded_fraction.total_cmp(&b.padded_fraction))
    });
    Ok(records)
}

/// Bail-out study: pad the top-ranked banks and measure how far each
/// scenario still cascades.
pub fn bailout_experiment(
    net: &BipartiteNetwork,
    strategies: &[Strategy],
    fractions: &[f64],
    scenarios: &[Shock],
    config: &ExperimentConfig,
) -> Result<Vec<InterventionRecord>, InterveneError> {
    run_experiment(net, strategies, fractions, scenarios, config, Target::Banks)
}

/// Buy-out study: stabilize the prices of the top-ranked assets instead of
/// rescuing banks.
pub fn buyout_experiment(
    net: &BipartiteNetwork,
    strategies: &[Strategy],
    fractions: &[f64],
    scenarios: &[Shock],
    config: &ExperimentConfig,
) -> Result<Vec<InterventionRecord>, InterveneError> {
    run_experiment(
        net,
        strategies,
        fractions,
        scenarios,
        config,
        Target::Assets,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BalanceSheet, Bank, Holding};

    fn two_bank_net() -> BipartiteNetwork {
        let b1 = Bank::new(
            BankId::new("bank1"),
            BalanceSheet::external_only(0.0, 100.0, 90.0).unwrap(),
        );
        let b2 = Bank::new(
            BankId::new("bank2"),
            BalanceSheet::external_only(0.0, 100.0, 90.0).unwrap(),
        );
        BipartiteNetwork::new(
            vec![b1, b2],
            vec![
                Asset::new(AssetId::new("asset1"), 200.0),
                Asset::new(AssetId::new("asset2"), 200.0),
            ],
            vec![
                Holding {
                    bank: BankId::new("bank1"),
                    asset: AssetId::new("asset1"),
                    units: 100.0,
                },
                Holding {
                    bank: BankId::new("bank2"),
                    asset: AssetId::new("asset1"),
                    units: 50.0,
                },
                Holding {
                    bank: BankId::new("bank2"),
                    asset: AssetId::new("asset2"),
                    units: 50.0,
                },
            ],
        )
        .unwrap()
    }

    fn shock_asset2() -> Shock {
        Shock::AssetDevaluation {
            asset: AssetId::new("asset2"),
            haircut: 0.3,
        }
    }

    fn linear_config(seed: u64) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(seed);
        config.impact = ImpactKind::Linear;
        config
    }

    fn run_with(
        net: &BipartiteNetwork,
        config: &ExperimentConfig,
        shock: Shock,
    ) -> crate::cascade::CascadeResult {
        let fs = FiresaleConfig {
            impact: config.impact,
            liquidation_policy: config.liquidation_policy,
            shock,
            max_rounds: config.max_rounds,
            systemic_threshold: config.systemic_threshold,
            seed: config.seed,
        };
        run_firesale(net, &fs).unwrap()
    }

    #[test]
    fn pad_all_banks_prevents_all_defaults() {
        let net = two_bank_net();
        let padded = pad_banks(&net, &[BankId::new("bank1"), BankId::new("bank2")]).unwrap();
        let result = run_with(&padded, &linear_config(0), shock_asset2());
        assert!(result.defaulted_ids.is_empty());
    }

    #[test]
    fn pad_none_is_identity() {
        let net = two_bank_net();
        let baseline = run_with(&net, &linear_config(0), shock_asset2());
        let padded = pad_banks(&net, &[]).unwrap();
        let same = run_with(&padded, &linear_config(0), shock_asset2());
        assert_eq!(baseline, same);
        // The unpadded baseline takes everyone down.
        assert_eq!(baseline.defaulted_ids.len(), 2);
    }

    #[test]
    fn padded_bank_absorbs_loss_without_liquidating() {
        let net = two_bank_net();
        let padded = pad_banks(&net, &[BankId::new("bank2")]).unwrap();
        let fs = FiresaleConfig {
            impact: ImpactKind::Linear,
            liquidation_policy: LiquidationPolicy::OnDefault,
            shock: shock_asset2(),
            max_rounds: 100,
            systemic_threshold: 0.05,
            seed: 0,
        };
        let mut engine = FiresaleEngine::new(&padded, fs).unwrap();
        engine.apply_shock().unwrap();
        let result = engine.run().unwrap();
        assert!(result.defaulted_ids.is_empty());
        // bank2 absorbed the full 15 against equity 10: guarantee covers 5.
        assert!((engine.guarantee_drawn() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn padded_asset_blocks_endogenous_impact_only() {
        let net = two_bank_net();
        let padded = pad_assets(&net, &[AssetId::new("asset1")]).unwrap();
        let result = run_with(&padded, &linear_config(0), shock_asset2());
        // bank2 still falls to the exogenous shock, but its sale of asset1
        // moves nothing, so bank1 survives.
        assert_eq!(result.defaulted_ids.len(), 1);
        assert!(result.defaulted_ids.contains(&BankId::new("bank2")));
    }

    #[test]
    fn padding_the_shocked_asset_matches_baseline_here() {
        // In this network the baseline outcome differs from no-op only via
        // asset1 sales, so padding the shocked asset2 changes nothing.
        let net = two_bank_net();
        let baseline = run_with(&net, &linear_config(0), shock_asset2());
        let padded = pad_assets(&net, &[AssetId::new("asset2")]).unwrap();
        let same = run_with(&padded, &linear_config(0), shock_asset2());
        assert_eq!(baseline.defaulted_ids, same.defaulted_ids);
        assert_eq!(baseline.rounds, same.rounds);
    }

    #[test]
    fn pad_errors() {
        let net = two_bank_net();
        assert!(matches!(
            pad_banks(&net, &[BankId::new("nope")]),
            Err(InterveneError::UnknownBank(_))
        ));
        assert!(matches!(
            pad_assets(&net, &[AssetId::new("nope")]),
            Err(InterveneError::UnknownAsset(_))
        ));
    }

    #[test]
    fn guarantee_cost_examples() {
        let net = two_bank_net();
        assert_eq!(guarantee_cost(&net, &[], &[]).unwrap(), 0.0);
        let all_banks =
            guarantee_cost(&net, &[BankId::new("bank1"), BankId::new("bank2")], &[]).unwrap();
        assert!((all_banks - 200.0).abs() < 1e-9);
        let one_asset = guarantee_cost(&net, &[], &[AssetId::new("asset1")]).unwrap();
        assert!((one_asset - 150.0).abs() < 1e-9);
    }

    #[test]
    fn bailout_grid_is_exhaustive_and_deterministic() {
        let net = two_bank_net();
        let strategies = [Strategy::Random, Strategy::Size];
        let fractions = [0.0, 0.5, 1.0];
        let scenarios = per_asset_scenarios(&net, 0.3);
        let config = linear_config(9);
        let records =
            bailout_experiment(&net, &strategies, &fractions, &scenarios, &config).unwrap();
        assert_eq!(records.len(), 2 * 3 * 2);
        let again = bailout_experiment(&net, &strategies, &fractions, &scenarios, &config).unwrap();
        assert_eq!(records, again);

        for r in &records {
            if r.padded_fraction == 1.0 {
                assert_eq!(r.n_defaults, 0, "full bail-out must prevent everything");
            }
            assert_eq!(
                r.padded_ids.len(),
                (r.padded_fraction * 2.0).ceil() as usize
            );
        }
    }

    #[test]
    fn buyout_full_fraction_reduces_to_direct_shock() {
        let net = two_bank_net();
        let config = linear_config(4);
        let scenarios = vec![shock_asset2()];
        let records =
            buyout_experiment(&net, &[Strategy::AssetVolume], &[1.0], &scenarios, &config).unwrap();
        let direct = direct_shock_defaults(&net, &shock_asset2(), &config).unwrap();
        assert_eq!(records[0].n_defaults, direct.len());
        assert_eq!(records[0].n_defaults, 1);
    }

    #[test]
    fn fraction_zero_matches_standalone_baseline() {
        let net = two_bank_net();
        let config = linear_config(2);
        let scenarios = vec![shock_asset2()];
        let records = bailout_experiment(
            &net,
            &[Strategy::OverlapCentrality],
            &[0.0],
            &scenarios,
            &config,
        )
        .unwrap();
        let baseline = run_with(&net, &config, shock_asset2());
        assert_eq!(records[0].n_defaults, baseline.defaulted_ids.len());
        assert_eq!(records[0].fraction_defaulted, baseline.fraction_defaulted);
        assert_eq!(records[0].rounds, baseline.rounds);
        assert!(records[0].padded_ids.is_empty());
        assert_eq!(records[0].guarantee_size, 0.0);
    }

    #[test]
    fn asset_volume_rejected_for_bailouts() {
        let net = two_bank_net();
        let err = bailout_experiment(
            &net,
            &[Strategy::AssetVolume],
            &[0.5],
            &[shock_asset2()],
            &ExperimentConfig::new(0),
        )
        .unwrap_err();
        assert!(matches!(err, InterveneError::StrategyNotApplicable { .. }));
        let err2 = buyout_experiment(
            &net,
            &[Strategy::Size],
            &[0.5],
            &[shock_asset2()],
            &ExperimentConfig::new(0),
        )
        .unwrap_err();
        assert!(matches!(err2, InterveneError::StrategyNotApplicable { .. }));
    }

    #[test]
    fn enlarging_padded_set_never_increases_defaults() {
        let net = two_bank_net();
        let config = linear_config(6);
        let scenarios = vec![shock_asset2()];
        let records = bailout_experiment(
            &net,
            &[Strategy::Random],
            &[0.0, 0.5, 1.0],
            &scenarios,
            &config,
        )
        .unwrap();
        let mut by_fraction = records.clone();
        by_fraction.sort_by(|a, b| a.padded_fraction.total_cmp(&b.padded_fraction));
        for pair in by_fraction.windows(2) {
            assert!(pair[1].n_defaults <= pair[0].n_defaults);
            // Prefix property: smaller padded set is contained in larger.
            for id in &pair[0].padded_ids {
                assert!(pair[1].padded_ids.contains(id));
            }
        }
    }
}
