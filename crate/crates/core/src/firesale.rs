//! Overlapping-portfolio contagion on bipartite bank-asset networks.
//!
//! An initial shock (asset devaluation or bank default) forces distressed
//! banks to sell; aggregate sales move prices through a configurable impact
//! function, and the mark-to-market losses can default further banks. Sales
//! are aggregated per asset and impact is applied once per asset per round,
//! so the outcome is independent of seller ordering within a round.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::CascadeResult;
use crate::model::{AssetId, BankId, BankStatus, BipartiteNetwork, Currency};
use crate::netgen::{self, BipartiteGenParams, NetGenError};
use crate::seed;

/// Price floor multiplier: no single application of impact or shock takes a
/// price below this fraction of its previous value, keeping prices positive.
pub const PRICE_FLOOR: f64 = 1e-6;

/// Relative volume below which a round's sales count as no activity
/// (prevents asymptotic deleveraging tails from spinning forever).
const VOLUME_ATOL: f64 = 1e-12;

const STREAM_NET: u64 = 11;
const STREAM_SHOCK: u64 = 12;

#[derive(Debug, Error)]
pub enum FiresaleError {
    #[error("unknown bank id `{0}`")]
    UnknownBank(BankId),
    #[error("unknown asset id `{0}`")]
    UnknownAsset(AssetId),
    #[error("bank `{0}` is not solvent")]
    NotSolvent(BankId),
    #[error("negative sale volume {0}")]
    NegativeVolume(f64),
    #[error("non-positive market depth {0}")]
    BadDepth(f64),
    #[error("haircut {0} outside (0, 1]")]
    BadHaircut(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    NetGen(#[from] NetGenError),
}

/// Functional form of the price response to sale volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpactKind {
    /// Multiplier `max(eta, 1 - volume/depth)`.
    Linear,
    /// Multiplier `exp(-volume/depth)`; never needs the floor clamp.
    Exponential,
}

/// New price after selling `volume_sold` units into a market of the given
/// depth. Volumes are in units (currency value at the initial unit price).
pub fn price_impact(
    price: f64,
    volume_sold: Currency,
    depth: Currency,
    kind: ImpactKind,
) -> Result<f64, FiresaleError> {
    if volume_sold < 0.0 || !volume_sold.is_finite() {
        return Err(FiresaleError::NegativeVolume(volume_sold));
    }
    if !(depth > 0.0) {
        return Err(FiresaleError::BadDepth(depth));
    }
    let multiplier = match kind {
        ImpactKind::Linear => (1.0 - volume_sold / depth).max(PRICE_FLOOR),
        ImpactKind::Exponential => (-volume_sold / depth).exp(),
    };
    Ok(price * multiplier)
}

/// When banks are forced to sell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LiquidationPolicy {
    /// Only defaulted banks sell, liquidating their entire portfolio.
    OnDefault,
    /// Additionally, solvent banks above the leverage cap sell a pro-rata
    /// slice of every holding, using the proceeds to pay down liabilities
    /// until leverage returns to the cap at current prices.
    LeverageTarget { max_leverage: f64 },
}

/// Initial stress scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shock {
    AssetDevaluation { asset: AssetId, haircut: f64 },
    BankDefault { bank: BankId },
    RandomAsset { haircut: f64 },
    RandomBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiresaleConfig {
    pub impact: ImpactKind,
    pub liquidation_policy: LiquidationPolicy,
    pub shock: Shock,
    pub max_rounds: usize,
    pub systemic_threshold: f64,
    pub seed: u64,
}

impl FiresaleConfig {
    /// OnDefault policy with exponential impact and the given shock.
    pub fn new(shock: Shock, seed: u64) -> Self {
        FiresaleConfig {
            impact: ImpactKind::Exponential,
            liquidation_policy: LiquidationPolicy::OnDefault,
            shock,
            max_rounds: 10_000,
            systemic_threshold: 0.05,
            seed,
        }
    }

    fn validate(&self) -> Result<(), FiresaleError> {
        if self.max_rounds == 0 {
            return Err(FiresaleError::InvalidConfig(
                "max_rounds must be >= 1".into(),
            ));
        }
        if let LiquidationPolicy::LeverageTarget { max_leverage } = self.liquidation_policy {
            if !(max_leverage > 1.0) {
                return Err(FiresaleError::InvalidConfig(format!(
                    "max_leverage must be > 1, got {max_leverage}"
                )));
            }
        }
        match &self.shock {
            Shock::AssetDevaluation { haircut, .. } | Shock::RandomAsset { haircut } => {
                if !(*haircut > 0.0 && *haircut <= 1.0) {
                    return Err(FiresaleError::BadHaircut(*haircut));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// What happened in one propagation round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundActivity {
    pub new_defaults: usize,
    pub units_sold: f64,
}

impl RoundActivity {
    pub fn is_quiet(&self, volume_scale: f64) -> bool {
        self.new_defaults == 0 && self.units_sold <= VOLUME_ATOL * volume_scale.max(1.0)
    }
}

/// Mutable fire-sale state. Build with [`FiresaleEngine::new`], shock with
/// [`FiresaleEngine::apply_shock`], then [`FiresaleEngine::run`] (or step
/// manually).
#[derive(Debug, Clone)]
pub struct FiresaleEngine {
    ids: Vec<BankId>,
    asset_ids: Vec<AssetId>,
    /// Liquid plus interbank assets: value unaffected by asset prices.
    fixed_assets: Vec<f64>,
    liabilities: Vec<f64>,
    /// Per bank: (asset index, units held).
    portfolio: Vec<Vec<(usize, f64)>>,
    prices: Vec<f64>,
    depths: Vec<f64>,
    status: Vec<BankStatus>,
    equity: Vec<f64>,
    equity_before: Vec<f64>,
    config: FiresaleConfig,
    per_round_defaults: Vec<usize>,
    rounds: usize,
    shocked: bool,
    total_initial_units: f64,
}

impl FiresaleEngine {
    pub fn new(net: &BipartiteNetwork, config: FiresaleConfig) -> Result<Self, FiresaleError> {
        config.validate()?;
        let n = net.n_banks();
        let mut portfolio: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut total_units = 0.0;
        for h in net.holdings() {
            let bank = net.bank_index_of(&h.bank).expect("validated id");
            let asset = net.asset_index_of(&h.asset).expect("validated id");
            if h.units > 0.0 {
                portfolio[bank].push((asset, h.units));
                total_units += h.units;
            }
        }
        let mut engine = FiresaleEngine {
            ids: net.banks().iter().map(|b| b.id.clone()).collect(),
            asset_ids: net.assets().iter().map(|a| a.id.clone()).collect(),
            fixed_assets: net
                .banks()
                .iter()
                .map(|b| b.balance_sheet.liquid_assets() + b.balance_sheet.interbank_assets())
                .collect(),
            liabilities: net
                .banks()
                .iter()
                .map(|b| b.balance_sheet.total_liabilities())
                .collect(),
            portfolio,
            prices: net.assets().iter().map(|a| a.price).collect(),
            depths: net.assets().iter().map(|a| a.depth).collect(),
            status: net.banks().iter().map(|b| b.status).collect(),
            equity: vec![0.0; n],
            equity_before: vec![0.0; n],
            config,
            per_round_defaults: vec![0],
            rounds: 0,
            shocked: false,
            total_initial_units: total_units,
        };
        engine.mark_to_market();
        engine.equity_before = engine.equity.clone();
        // Banks already defaulted in the input still hold their portfolios;
        // they liquidate in round 1.
        engine.per_round_defaults[0] = engine
            .status
            .iter()
            .filter(|s| **s == BankStatus::Defaulted)
            .count();
        Ok(engine)
    }

    /// Recompute current equity of live and padded banks at current prices.
    fn mark_to_market(&mut self) {
        for i in 0..self.ids.len() {
            if self.status[i] == BankStatus::Defaulted {
                continue; // terminal value frozen at default time
            }
            let marked: f64 = self.portfolio[i]
                .iter()
                .map(|&(k, units)| units * self.prices[k])
                .sum();
            self.equity[i] = self.fixed_assets[i] + marked - self.liabilities[i];
        }
    }

    /// Apply the configured shock (round 0). Random scenarios are resolved
    /// from the config seed.
    pub fn apply_shock(&mut self) -> Result<(), FiresaleError> {
        let shock = match &self.config.shock {
            Shock::RandomAsset { haircut } => {
                let mut rng = seed::rng_for(self.config.seed, &[STREAM_SHOCK]);
                let k = rng.gen_range(0..self.asset_ids.len());
                Shock::AssetDevaluation {
                    asset: self.asset_ids[k].clone(),
                    haircut: *haircut,
                }
            }
            Shock::RandomBank => {
                let mut rng = seed::rng_for(self.config.seed, &[STREAM_SHOCK]);
                let solvent: Vec<usize> = (0..self.ids.len())
                    .filter(|&i| self.status[i] == BankStatus::Solvent)
                    .collect();
                let i = solvent[rng.gen_range(0..solvent.len())];
                Shock::BankDefault {
                    bank: self.ids[i].clone(),
                }
            }
            concrete => concrete.clone(),
        };
        match shock {
            Shock::AssetDevaluation { asset, haircut } => {
                if !(haircut > 0.0 && haircut <= 1.0) {
                    return Err(FiresaleError::BadHaircut(haircut));
                }
                let k = self
                    .asset_ids
                    .iter()
                    .position(|a| *a == asset)
                    .ok_or(FiresaleError::UnknownAsset(asset))?;
                // Exogenous devaluation applies even to padded assets.
                self.prices[k] *= (1.0 - haircut).max(PRICE_FLOOR);
            }
            Shock::BankDefault { bank } => {
                let i = self
                    .ids
                    .iter()
                    .position(|b| *b == bank)
                    .ok_or_else(|| FiresaleError::UnknownBank(bank.clone()))?;
                if self.status[i] != BankStatus::Solvent {
                    return Err(FiresaleError::NotSolvent(bank));
                }
                self.status[i] = BankStatus::Defaulted;
                // Owners are wiped by the default event.
                self.equity[i] = self.equity[i].min(0.0);
                self.per_round_defaults[0] += 1;
            }
            Shock::RandomAsset { .. } | Shock::RandomBank => unreachable!("resolved above"),
        }
        self.mark_to_market();
        self.shocked = true;
        Ok(())
    }

    /// One synchronous round: mark to market, default newly insolvent
    /// banks, collect sales, and move prices once per asset.
    pub fn step(&mut self) -> RoundActivity {
        self.mark_to_market();

        // Newly insolvent banks default and liquidate everything.
        let mut new_defaults = 0usize;
        let mut sellers: Vec<(usize, f64)> = Vec::new(); // (bank, fraction of portfolio)
        for i in 0..self.ids.len() {
            match self.status[i] {
                BankStatus::Solvent if self.equity[i] < 0.0 => {
                    self.status[i] = BankStatus::Defaulted;
                    new_defaults += 1;
                    sellers.push((i, 1.0));
                }
                BankStatus::Defaulted if !self.portfolio[i].is_empty() => {
                    // Defaulted at round 0 (or in the input network) and not
                    // yet liquidated.
                    sellers.push((i, 1.0));
                }
                _ => {}
            }
        }

        // Deleveraging sales by distressed-but-solvent banks.
        if let LiquidationPolicy::LeverageTarget { max_leverage } = self.config.liquidation_policy {
            for i in 0..self.ids.len() {
                if self.status[i] != BankStatus::Solvent || self.equity[i] <= 0.0 {
                    continue;
                }
                let marked: f64 = self.portfolio[i]
                    .iter()
                    .map(|&(k, units)| units * self.prices[k])
                    .sum();
                let assets = self.fixed_assets[i] + marked;
                if assets <= max_leverage * self.equity[i] || marked <= 0.0 {
                    continue;
                }
                let target_sale = assets - max_leverage * self.equity[i];
                let fraction = (target_sale / marked).min(1.0);
                if fraction > 0.0 {
                    sellers.push((i, fraction));
                }
            }
        }

        // Aggregate volumes, adjust seller books.
        let mut volume = vec![0.0; self.asset_ids.len()];
        let mut units_sold = 0.0;
        for (i, fraction) in sellers {
            let mut proceeds = 0.0;
            for entry in &mut self.portfolio[i] {
                let (k, ref mut units) = *entry;
                let sold = *units * fraction;
                volume[k] += sold;
                units_sold += sold;
                proceeds += sold * self.prices[k];
                entry.1 -= sold;
            }
            self.portfolio[i].retain(|&(_, units)| units > 0.0);
            if self.status[i] == BankStatus::Solvent {
                // Deleveraging: proceeds pay down liabilities; any excess
                // sits as cash.
                let repaid = proceeds.min(self.liabilities[i]);
                self.liabilities[i] -= repaid;
                self.fixed_assets[i] += proceeds - repaid;
            }
            // Defaulted banks' proceeds go to their estates; their terminal
            // equity stays frozen.
        }

        // Price impact, once per asset on the round's aggregate volume.
        // Padded assets carry infinite depth, so impact vanishes there.
        for k in 0..self.asset_ids.len() {
            if volume[k] > 0.0 {
                self.prices[k] = price_impact(
                    self.prices[k],
                    volume[k],
                    self.depths[k],
                    self.config.impact,
                )
                .expect("validated depth and volume");
            }
        }

        // Keep the reported equity consistent with the reported prices.
        self.mark_to_market();

        RoundActivity {
            new_defaults,
            units_sold,
        }
    }

    /// Iterate rounds to quiescence (or `max_rounds`) and summarize.
    pub fn run(&mut self) -> Result<CascadeResult, FiresaleError> {
        if !self.shocked {
            self.apply_shock()?;
        }
        let mut converged = false;
        for round in 1..=self.config.max_rounds {
            let activity = self.step();
            if activity.is_quiet(self.total_initial_units) {
                converged = true;
                break;
            }
            self.rounds = round;
            self.per_round_defaults.push(activity.new_defaults);
        }
        Ok(self.result(converged))
    }

    fn result(&self, converged: bool) -> CascadeResult {
        let n = self.ids.len();
        let defaulted_ids: std::collections::BTreeSet<BankId> = (0..n)
            .filter(|&i| self.status[i] == BankStatus::Defaulted)
            .map(|i| self.ids[i].clone())
            .collect();
        let total_equity_loss = (0..n)
            .map(|i| {
                let terminal = match self.status[i] {
                    BankStatus::Defaulted => 0.0,
                    _ => self.equity[i].max(0.0),
                };
                self.equity_before[i].max(0.0) - terminal
            })
            .sum();
        CascadeResult {
            fraction_defaulted: defaulted_ids.len() as f64 / n as f64,
            defaulted_ids,
            rounds: self.rounds,
            per_round_defaults: self.per_round_defaults.clone(),
            total_equity_loss,
            converged,
        }
    }

    /// Current prices, in asset order.
    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// Current equity per bank (frozen at default time for defaulted
    /// banks).
    pub fn equity(&self) -> &[f64] {
        &self.equity
    }

    pub fn status(&self) -> &[BankStatus] {
        &self.status
    }

    pub fn ids(&self) -> &[BankId] {
        &self.ids
    }

    /// Losses absorbed by padded banks: the total guarantee shortfall that
    /// would have to be honored at the terminal state.
    pub fn guarantee_drawn(&self) -> Currency {
        (0..self.ids.len())
            .filter(|&i| self.status[i] == BankStatus::Padded)
            .map(|i| (-self.equity[i]).max(0.0))
            .sum()
    }
}

/// Shock, run to quiescence, and summarize one scenario.
pub fn run_firesale(
    net: &BipartiteNetwork,
    config: &FiresaleConfig,
) -> Result<CascadeResult, FiresaleError> {
    let mut engine = FiresaleEngine::new(net, config.clone())?;
    engine.apply_shock()?;
    engine.run()
}

/// Network-level shock application: devalue the asset (marking to market)
/// or mark the bank defaulted. Random scenarios resolve from `seed`.
pub fn apply_shock_to_network(
    net: &BipartiteNetwork,
    shock: &Shock,
    seed: u64,
) -> Result<BipartiteNetwork, FiresaleError> {
    let mut config = FiresaleConfig::new(shock.clone(), seed);
    config.max_rounds = 1;
    let mut engine = FiresaleEngine::new(net, config)?;
    engine.apply_shock()?;
    let mut out = net.clone();
    for (k, asset) in net.assets().iter().enumerate() {
        if engine.prices[k] != asset.price {
            out = out
                .with_price(&asset.id, engine.prices[k])
                .expect("engine prices stay in range");
        }
    }
    for (i, status) in engine.status.iter().enumerate() {
        if *status != net.banks()[i].status {
            out = out.with_bank_status(&engine.ids[i], *status);
        }
    }
    Ok(out.mark_to_market())
}

// ---------------------------------------------------------------------------
// Critical leverage sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLeverageRow {
    pub leverage: f64,
    pub probability: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLeverageResult {
    pub rows: Vec<CriticalLeverageRow>,
    /// Midpoint of the first grid interval where the systemic probability
    /// crosses the detection threshold.
    pub lambda_star: Option<f64>,
}

/// Systemic probability as a function of leverage: for each lambda the
/// networks are regenerated with `capital_ratio = 1/lambda` and hit with
/// random-bank shocks.
pub fn critical_leverage(
    params: &BipartiteGenParams,
    lambda_values: &[f64],
    trials: usize,
    impact: ImpactKind,
    master_seed: u64,
) -> Result<CriticalLeverageResult, FiresaleError> {
    critical_leverage_with(
        params,
        lambda_values,
        trials,
        impact,
        0.05,
        0.01,
        master_seed,
    )
}

pub fn critical_leverage_with(
    params: &BipartiteGenParams,
    lambda_values: &[f64],
    trials: usize,
    impact: ImpactKind,
    systemic_threshold: f64,
    crossing_threshold: f64,
    master_seed: u64,
) -> Result<CriticalLeverageResult, FiresaleError> {
    if lambda_values.is_empty() || trials == 0 {
        return Err(FiresaleError::InvalidConfig(
            "need at least one lambda value and one trial".into(),
        ));
    }
    if lambda_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FiresaleError::InvalidConfig(
            "lambda values must be sorted ascending".into(),
        ));
    }
    if lambda_values[0] < 1.0 {
        return Err(FiresaleError::InvalidConfig(
            "leverage below 1 is not representable".into(),
        ));
    }

    let mut rows = Vec::with_capacity(lambda_values.len());
    for (li, &lambda) in lambda_values.iter().enumerate() {
        let systemic_count: usize = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let mut p = params.clone();
                p.capital_ratio = 1.0 / lambda;
                p.seed = seed::derive(master_seed, &[STREAM_NET, li as u64, trial]);
                let net = netgen::gen_bipartite(&p)?;
                let mut config = FiresaleConfig::new(Shock::RandomBank, 0);
                config.impact = impact;
                config.systemic_threshold = systemic_threshold;
                config.seed = seed::derive(master_seed, &[STREAM_SHOCK, li as u64, trial]);
                let result = run_firesale(&net, &config)?;
                Ok(usize::from(result.fraction_defaulted > systemic_threshold))
            })
            .sum::<Result<usize, FiresaleError>>()?;
        rows.push(CriticalLeverageRow {
            leverage: lambda,
            probability: systemic_count as f64 / trials as f64,
            trials,
        });
    }

    let mut lambda_star = None;
    for i in 0..rows.len() {
        if rows[i].probability > crossing_threshold {
            lambda_star = Some(if i == 0 {
                rows[0].leverage
            } else {
                0.5 * (rows[i - 1].leverage + rows[i].leverage)
            });
            break;
        }
    }
    Ok(CriticalLeverageResult { rows, lambda_star })
}
