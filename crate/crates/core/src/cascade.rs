//! Interbank default-cascade engine and Monte Carlo estimators of the
//! probability and extent of contagion.
//!
//! Losses propagate from a defaulted borrower to its lenders with
//! configurable loss-given-default (zero recovery by default). A bank
//! defaults when its equity net of cumulative writedowns turns strictly
//! negative. Rounds are synchronous unless the sequential flag is set.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BankId, BankStatus, Currency, InterbankNetwork};
use crate::netgen::{self, NetGenError, NetGenParams};
use crate::seed;

/// Stream labels for counter-based RNG derivation.
const STREAM_NET: u64 = 1;
const STREAM_SHOCK: u64 = 2;
const STREAM_ROW: u64 = 3;

/// Infeasible parameter draws are deterministically resampled at most this
/// many times per trial before giving up.
const MAX_GEN_ATTEMPTS: u64 = 64;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("unknown bank id `{0}`")]
    UnknownBank(BankId),
    #[error("bank `{0}` is not solvent")]
    NotSolvent(BankId),
    #[error("no defaulted bank to propagate from")]
    NoInitialDefault,
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("network generation kept failing after {attempts} attempts: {last}")]
    GenerationExhausted { attempts: u64, last: String },
    #[error(transparent)]
    NetGen(#[from] NetGenError),
}

/// Trajectory and terminal state of one contagion run.
///
/// `per_round_defaults[0]` counts the initial (round-0) defaults; entry `r`
/// counts banks defaulted in propagation round `r`. `rounds` is the number
/// of propagation rounds executed, counting the final round that produced
/// no new defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeResult {
    pub defaulted_ids: BTreeSet<BankId>,
    pub rounds: usize,
    pub fraction_defaulted: f64,
    pub per_round_defaults: Vec<usize>,
    pub total_equity_loss: Currency,
    pub converged: bool,
}

/// Monte Carlo summary: probability of a systemic event and its extent.
///
/// `extent` is the mean defaulted fraction conditional on a systemic trial
/// and is `None` when no trial was systemic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContagionStats {
    pub probability: f64,
    pub extent: Option<f64>,
    pub trials: usize,
    pub systemic_threshold: f64,
}

/// Engine knobs. Defaults reproduce the standard zero-recovery,
/// synchronous-round, full-wipe-out construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    /// Fraction of an exposure recovered when the borrower defaults.
    pub recovery_rate: f64,
    /// Process defaults one bank at a time instead of in synchronous
    /// rounds (sensitivity analysis; the terminal set is unchanged).
    pub sequential: bool,
    /// Fraction of the shocked bank's assets wiped by the initial shock.
    pub shock_haircut: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            recovery_rate: 0.0,
            sequential: false,
            shock_haircut: 1.0,
        }
    }
}

/// A shocked network ready to run. Produced by [`shock_bank`].
#[derive(Debug, Clone)]
pub struct CascadeState {
    ids: Vec<BankId>,
    /// Pre-shock equity per bank.
    equity_before: Vec<f64>,
    /// Current equity buffer net of the shock and writedowns.
    equity: Vec<f64>,
    /// Lenders of each bank: (lender index, exposure amount).
    creditors: Vec<Vec<(usize, f64)>>,
    status: Vec<BankStatus>,
    /// Banks defaulted at round 0.
    initial_defaults: Vec<usize>,
    config: CascadeConfig,
}

/// Mark one solvent bank as defaulted and wipe its assets.
pub fn shock_bank(net: &InterbankNetwork, bank: &BankId) -> Result<CascadeState, CascadeError> {
    shock_bank_with(net, bank, CascadeConfig::default())
}

pub fn shock_bank_with(
    net: &InterbankNetwork,
    bank: &BankId,
    config: CascadeConfig,
) -> Result<CascadeState, CascadeError> {
    let shocked = net
        .index_of(bank)
        .ok_or_else(|| CascadeError::UnknownBank(bank.clone()))?;
    if net.banks()[shocked].status != BankStatus::Solvent {
        return Err(CascadeError::NotSolvent(bank.clone()));
    }

    let n = net.n_banks();
    let mut state = CascadeState {
        ids: net.banks().iter().map(|b| b.id.clone()).collect(),
        equity_before: net
            .banks()
            .iter()
            .map(|b| b.balance_sheet.equity())
            .collect(),
        equity: net
            .banks()
            .iter()
            .map(|b| b.balance_sheet.equity())
            .collect(),
        creditors: vec![Vec::new(); n],
        status: net.banks().iter().map(|b| b.status).collect(),
        initial_defaults: Vec::new(),
        config,
    };
    for e in net.exposures() {
        let lender = net.index_of(&e.lender).expect("validated id");
        let borrower = net.index_of(&e.borrower).expect("validated id");
        state.creditors[borrower].push((lender, e.amount));
    }

    // The shock wipes the configured fraction of the bank's asset side and
    // defaults it outright.
    let assets = net.banks()[shocked].balance_sheet.total_assets();
    state.equity[shocked] -= state.config.shock_haircut * assets;
    state.status[shocked] = BankStatus::Defaulted;
    state.initial_defaults.push(shocked);

    // Banks already defaulted in the input network propagate too.
    for (i, bank) in net.banks().iter().enumerate() {
        if bank.status == BankStatus::Defaulted {
            state.initial_defaults.push(i);
        }
    }
    Ok(state)
}

/// Run the cascade to quiescence and summarize the terminal state.
pub fn run_cascade(state: CascadeState) -> CascadeResult {
    let CascadeState {
        ids,
        equity_before,
        mut equity,
        creditors,
        mut status,
        initial_defaults,
        config,
    } = state;
    let n = ids.len();
    let lgd = 1.0 - config.recovery_rate;

    let mut per_round_defaults = vec![initial_defaults.len()];
    let mut rounds = 0usize;

    if config.sequential {
        // One borrower processed at a time; a lender defaults as soon as
        // its buffer is exhausted. Terminal set matches the synchronous
        // schedule; only the round bookkeeping differs.
        let mut queue: std::collections::VecDeque<usize> =
            initial_defaults.iter().copied().collect();
        while let Some(b) = queue.pop_front() {
            rounds += 1;
            let mut new_defaults = 0usize;
            for &(lender, amount) in &creditors[b] {
                if status[lender] == BankStatus::Solvent {
                    equity[lender] -= amount * lgd;
                    if equity[lender] < 0.0 {
                        status[lender] = BankStatus::Defaulted;
                        queue.push_back(lender);
                        new_defaults += 1;
                    }
                } else if status[lender] == BankStatus::Padded {
                    equity[lender] -= amount * lgd;
                }
            }
            per_round_defaults.push(new_defaults);
        }
    } else {
        let mut frontier = initial_defaults;
        loop {
            rounds += 1;
            let mut writedown = vec![0.0; n];
            for &b in &frontier {
                for &(lender, amount) in &creditors[b] {
                    writedown[lender] += amount * lgd;
                }
            }
            let mut new_defaults = Vec::new();
            for i in 0..n {
                if writedown[i] == 0.0 {
                    continue;
                }
                match status[i] {
                    BankStatus::Solvent => {
                        equity[i] -= writedown[i];
                        if equity[i] < 0.0 {
                            status[i] = BankStatus::Defaulted;
                            new_defaults.push(i);
                        }
                    }
                    // Padded banks absorb losses without propagating them.
                    BankStatus::Padded => equity[i] -= writedown[i],
                    BankStatus::Defaulted => {}
                }
            }
            per_round_defaults.push(new_defaults.len());
            if new_defaults.is_empty() {
                break;
            }
            frontier = new_defaults;
        }
    }

    let defaulted_ids: BTreeSet<BankId> = status
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == BankStatus::Defaulted)
        .map(|(i, _)| ids[i].clone())
        .collect();
    let total_equity_loss = (0..n)
        .map(|i| equity_before[i].max(0.0) - equity[i].max(0.0))
        .sum();
    CascadeResult {
        fraction_defaulted: defaulted_ids.len() as f64 / n as f64,
        defaulted_ids,
        rounds,
        per_round_defaults,
        total_equity_loss,
        converged: true,
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo estimation
// ---------------------------------------------------------------------------

/// Generate a network for one trial, deterministically resampling the
/// derived seed when a parameter draw happens to be infeasible.
fn generate_trial_network(
    params: &NetGenParams,
    master: u64,
    trial: u64,
) -> Result<InterbankNetwork, CascadeError> {
    let mut last = String::new();
    for attempt in 0..MAX_GEN_ATTEMPTS {
        let mut p = params.clone();
        p.seed = seed::derive(master, &[STREAM_NET, trial, attempt]);
        match netgen::gen_interbank(&p) {
            Ok(net) => return Ok(net),
            Err(err @ NetGenError::Infeasible { .. }) => last = err.to_string(),
            Err(other) => return Err(other.into()),
        }
    }
    Err(CascadeError::GenerationExhausted {
        attempts: MAX_GEN_ATTEMPTS,
        last,
    })
}

fn run_one_trial(
    params: &NetGenParams,
    master: u64,
    trial: u64,
    config: &CascadeConfig,
) -> Result<f64, CascadeError> {
    let net = generate_trial_network(params, master, trial)?;
    let mut rng = seed::rng_for(master, &[STREAM_SHOCK, trial]);
    let target = net.banks()[rng.gen_range(0..net.n_banks())].id.clone();
    let state = shock_bank_with(&net, &target, config.clone())?;
    Ok(run_cascade(state).fraction_defaulted)
}

/// Estimate probability and extent of contagion: each trial generates a
/// fresh network from `params` (reseeded per trial), shocks one uniformly
/// random bank, and runs the cascade. A trial is systemic when its
/// defaulted fraction strictly exceeds `systemic_threshold`.
pub fn monte_carlo(
    params: &NetGenParams,
    trials: usize,
    systemic_threshold: f64,
    master_seed: u64,
) -> Result<ContagionStats, CascadeError> {
    monte_carlo_with(
        params,
        trials,
        systemic_threshold,
        master_seed,
        &CascadeConfig::default(),
    )
}

pub fn monte_carlo_with(
    params: &NetGenParams,
    trials: usize,
    systemic_threshold: f64,
    master_seed: u64,
    config: &CascadeConfig,
) -> Result<ContagionStats, CascadeError> {
    if trials == 0 {
        return Err(CascadeError::NoTrials);
    }
    params.validate()?;
    let fractions: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_one_trial(params, master_seed, t, config))
        .collect::<Result<_, _>>()?;

    let systemic: Vec<f64> = fractions
        .iter()
        .copied()
        .filter(|f| *f > systemic_threshold)
        .collect();
    let probability = systemic.len() as f64 / trials as f64;
    let extent = if systemic.is_empty() {
        None
    } else {
        Some(systemic.iter().sum::<f64>() / systemic.len() as f64)
    };
    Ok(ContagionStats {
        probability,
        extent,
        trials,
        systemic_threshold,
    })
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Swept value (average degree or capital ratio).
    pub x: f64,
    pub probability: f64,
    pub extent: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Probability/extent of contagion as a function of average degree.
pub fn degree_sweep(
    params: &NetGenParams,
    z_values: &[f64],
    trials: usize,
    systemic_threshold: f64,
    master_seed: u64,
) -> Result<Vec<SweepRow>, CascadeError> {
    sweep(
        params,
        z_values,
        trials,
        systemic_threshold,
        master_seed,
        |p, z| {
            p.avg_degree = z;
        },
    )
}

/// Probability/extent of contagion as a function of the capital ratio.
pub fn capital_sweep(
    params: &NetGenParams,
    capital_values: &[f64],
    trials: usize,
    systemic_threshold: f64,
    master_seed: u64,
) -> Result<Vec<SweepRow>, CascadeError> {
    sweep(
        params,
        capital_values,
        trials,
        systemic_threshold,
        master_seed,
        |p, c| {
            p.capital_ratio = c;
        },
    )
}

fn sweep(
    params: &NetGenParams,
    values: &[f64],
    trials: usize,
    systemic_threshold: f64,
    master_seed: u64,
    apply: impl Fn(&mut NetGenParams, f64),
) -> Result<Vec<SweepRow>, CascadeError> {
    if values.is_empty() {
        return Err(CascadeError::NoTrials);
    }
    values
        .iter()
        .enumerate()
        .map(|(row, &x)| {
            let mut p = params.clone();
            apply(&mut p, x);
            let row_seed = seed::derive(master_seed, &[STREAM_ROW, row as u64]);
            let stats = monte_carlo(&p, trials, systemic_threshold, row_seed)?;
            Ok(SweepRow {
                x,
                probability: stats.probability,
                extent: stats.extent,
                trials,
                seed: master_seed,
            })
        })
        .collect()
}
