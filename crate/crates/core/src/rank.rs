//! Systemic-importance rankings over banks and assets, used to order
//! intervention targets.

use serde::{Deserialize, Serialize};

use crate::model::{AssetId, Bank, BankId, BipartiteNetwork, InterbankNetwork};
use crate::seed;
use rand::Rng;

/// What a ranking's scores mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankBasis {
    Random { seed: u64 },
    Size,
    Systemicness,
    OverlapCentrality,
    AssetVolume,
}

/// Degree notion used by the systemicness score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectedness {
    Degree,
    WeightedDegree,
}

/// Entries ordered by descending score, ties broken by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking<Id> {
    pub entries: Vec<(Id, f64)>,
    pub basis: RankBasis,
}

impl<Id: Ord + Clone> Ranking<Id> {
    fn from_scores(mut entries: Vec<(Id, f64)>, basis: RankBasis) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ranking { entries, basis }
    }

    /// Ids in rank order.
    pub fn ids(&self) -> impl Iterator<Item = &Id> {
        self.entries.iter().map(|(id, _)| id)
    }

    /// The top `ceil(fraction * len)` ids.
    pub fn top_fraction(&self, fraction: f64) -> Vec<Id> {
        let k = (fraction * self.entries.len() as f64).ceil() as usize;
        self.ids()
            .take(k.min(self.entries.len()))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Uniformly random permutation, deterministic per seed.
pub fn rank_random<Id: Ord + Clone>(ids: &[Id], seed_value: u64) -> Ranking<Id> {
    let mut rng = seed::rng_for(seed_value, &[]);
    let entries = ids
        .iter()
        .map(|id| (id.clone(), rng.gen::<f64>()))
        .collect();
    Ranking::from_scores(entries, RankBasis::Random { seed: seed_value })
}

/// Banks by total assets ("too big to fail" ordering).
pub fn rank_by_size(banks: &[Bank]) -> Ranking<BankId> {
    let entries = banks
        .iter()
        .map(|b| (b.id.clone(), b.balance_sheet.total_assets()))
        .collect();
    Ranking::from_scores(entries, RankBasis::Size)
}

fn systemicness_from_degrees(banks: &[Bank], degree_of: impl Fn(&Bank) -> f64) -> Ranking<BankId> {
    let mut entries: Vec<(BankId, f64)> = Vec::with_capacity(banks.len());
    let mut excluded = 0usize;
    for bank in banks {
        match bank.balance_sheet.leverage() {
            Ok(leverage) => {
                let score = bank.balance_sheet.total_assets() * leverage * degree_of(bank);
                entries.push((bank.id.clone(), score));
            }
            Err(_) => excluded += 1,
        }
    }
    if excluded > 0 {
        log::debug!("systemicness: excluded {excluded} bank(s) with non-positive equity");
    }
    let max = entries.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    if max > 0.0 {
        for entry in &mut entries {
            entry.1 /= max;
        }
    }
    Ranking::from_scores(entries, RankBasis::Systemicness)
}

/// Size x leverage x connectedness, scaled so the top score is 1. Banks
/// with non-positive equity (no defined leverage) are excluded.
pub fn systemicness(net: &BipartiteNetwork, connectedness: Connectedness) -> Ranking<BankId> {
    systemicness_from_degrees(net.banks(), |bank| match connectedness {
        Connectedness::Degree => net
            .holdings()
            .iter()
            .filter(|h| h.bank == bank.id && h.units > 0.0)
            .count() as f64,
        Connectedness::WeightedDegree => net
            .holdings()
            .iter()
            .filter(|h| h.bank == bank.id)
            .map(|h| {
                let price = net.assets()[net.asset_index_of(&h.asset).expect("valid id")].price;
                h.units * price
            })
            .sum(),
    })
}

/// Systemicness on the interbank graph: connectedness is total (in plus
/// out) degree, or total exposure volume for the weighted variant.
pub fn systemicness_interbank(
    net: &InterbankNetwork,
    connectedness: Connectedness,
) -> Ranking<BankId> {
    systemicness_from_degrees(net.banks(), |bank| {
        net.exposures()
            .iter()
            .filter(|e| e.lender == bank.id || e.borrower == bank.id)
            .map(|e| match connectedness {
                Connectedness::Degree => 1.0,
                Connectedness::WeightedDegree => e.amount,
            })
            .sum()
    })
}

/// Liquidity-weighted portfolio overlap: for bank i,
/// `sum_k pi_ik * (S_k - pi_ik) / D_k` where `pi` are currency holdings at
/// current prices, `S_k` the system total in asset k, and `D_k` its depth.
/// A bank whose assets nobody else holds scores zero.
pub fn overlap_centrality(net: &BipartiteNetwork) -> Ranking<BankId> {
    let n_assets = net.n_assets();
    let mut system_value = vec![0.0; n_assets];
    let mut bank_value: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.n_banks()];
    for h in net.holdings() {
        let k = net.asset_index_of(&h.asset).expect("valid id");
        let i = net.bank_index_of(&h.bank).expect("valid id");
        let value = h.units * net.assets()[k].price;
        system_value[k] += value;
        bank_value[i].push((k, value));
    }
    let entries = net
        .banks()
        .iter()
        .enumerate()
        .map(|(i, bank)| {
            let score: f64 = bank_value[i]
                .iter()
                .map(|&(k, value)| {
                    let depth = net.assets()[k].depth;
                    value * (system_value[k] - value) / depth
                })
                .sum();
            (bank.id.clone(), score)
        })
        .collect();
    Ranking::from_scores(entries, RankBasis::OverlapCentrality)
}

/// Assets by total system holdings at current prices.
pub fn rank_assets_by_volume(net: &BipartiteNetwork) -> Ranking<AssetId> {
    let mut totals = vec![0.0; net.n_assets()];
    for h in net.holdings() {
        let k = net.asset_index_of(&h.asset).expect("valid id");
        totals[k] += h.units * net.assets()[k].price;
    }
    let entries = net
        .assets()
        .iter()
        .zip(&totals)
        .map(|(a, &v)| (a.id.clone(), v))
        .collect();
    Ranking::from_scores(entries, RankBasis::AssetVolume)
}
