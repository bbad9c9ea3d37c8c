//! Synthetic bank-asset data with the shape of the public European
//! supervisory disclosures: 90 large banks, 140 asset classes.
//!
//! This is NOT the real dataset (which is not redistributable); it is a
//! seeded generator with matching dimensions and plausible heterogeneity:
//! power-law bank sizes, sparse size-skewed portfolios over
//! popularity-skewed assets, capital ratios drawn from 5-8%, and market
//! depths proportional to total holdings.

use rand::Rng;

use crate::model::{Asset, AssetId, BalanceSheet, Bank, BankId, BipartiteNetwork, Holding};
use crate::seed;

pub const EBA_BANKS: usize = 90;
pub const EBA_ASSETS: usize = 140;

/// Tail exponent of the bank size distribution.
const SIZE_EXPONENT: f64 = 2.0;
/// Largest bank is capped at this multiple of the smallest.
const SIZE_CAP: f64 = 90.0;
/// Portfolio sizes: between MIN_DEGREE and MAX_DEGREE assets, skewed so big
/// banks hold more names.
const MIN_DEGREE: usize = 2;
const MAX_DEGREE: usize = 25;
/// Asset popularity weight `(k+1)^-POPULARITY_EXPONENT`: low-index assets
/// (think core government bonds) are held by many banks.
const POPULARITY_EXPONENT: f64 = 0.8;
/// Capital ratio range.
const CAPITAL_LO: f64 = 0.05;
const CAPITAL_HI: f64 = 0.08;
/// Depth per asset as a multiple of its total holdings.
const DEPTH_FACTOR: f64 = 1.5;
/// Currency scale of the smallest bank.
const BASE_SIZE: f64 = 100.0;

/// Deterministic 90x140 bank-asset network.
pub fn gen_synthetic_eba(seed_value: u64) -> BipartiteNetwork {
    let mut rng = seed::rng_for(seed_value, &[]);
    let n = EBA_BANKS;
    let m = EBA_ASSETS;

    // Bank sizes: bounded Pareto via inverse CDF.
    let sizes: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let a = 1.0 - SIZE_EXPONENT;
            let x = (1.0f64.powf(a) + u * (SIZE_CAP.powf(a) - 1.0f64.powf(a))).powf(1.0 / a);
            BASE_SIZE * x.clamp(1.0, SIZE_CAP)
        })
        .collect();

    // Static popularity weights over assets.
    let weights: Vec<f64> = (0..m)
        .map(|k| ((k + 1) as f64).powf(-POPULARITY_EXPONENT))
        .collect();

    let mut holdings = Vec::new();
    let mut total_units = vec![0.0; m];
    let mut banks = Vec::with_capacity(n);
    for (i, &size) in sizes.iter().enumerate() {
        // Diversification is independent of size and skewed low: big
        // concentrated books exist, as in supervisory data.
        let span = (MAX_DEGREE - MIN_DEGREE + 1) as f64;
        let u: f64 = rng.gen();
        let degree = (MIN_DEGREE + (u * u * span) as usize).clamp(MIN_DEGREE, MAX_DEGREE.min(m));

        // Weighted sampling without replacement.
        let mut available: Vec<usize> = (0..m).collect();
        let mut picks = Vec::with_capacity(degree);
        for _ in 0..degree {
            let total_weight: f64 = available.iter().map(|&k| weights[k]).sum();
            let mut target = rng.gen::<f64>() * total_weight;
            let mut chosen = available.len() - 1;
            for (pos, &k) in available.iter().enumerate() {
                target -= weights[k];
                if target <= 0.0 {
                    chosen = pos;
                    break;
                }
            }
            picks.push(available.swap_remove(chosen));
        }
        picks.sort_unstable();

        // Concentrated portfolios: exponential random weights, so the top
        // position typically carries 30-50% of the book.
        let mut position_weights: Vec<f64> = picks
            .iter()
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let weight_sum: f64 = position_weights.iter().sum();
        for w in &mut position_weights {
            *w /= weight_sum;
        }
        for (&k, &w) in picks.iter().zip(&position_weights) {
            let units = size * w;
            total_units[k] += units;
            holdings.push(Holding {
                bank: bank_id(i),
                asset: asset_id(k),
                units,
            });
        }

        let capital = CAPITAL_LO + (CAPITAL_HI - CAPITAL_LO) * rng.gen::<f64>();
        let sheet = BalanceSheet::external_only(0.0, size, size * (1.0 - capital))
            .expect("generated fields are non-negative");
        banks.push(Bank::new(bank_id(i), sheet));
    }

    let assets: Vec<Asset> = (0..m)
        .map(|k| {
            let depth = if total_units[k] > 0.0 {
                DEPTH_FACTOR * total_units[k]
            } else {
                DEPTH_FACTOR * BASE_SIZE
            };
            Asset::new(asset_id(k), depth)
        })
        .collect();

    BipartiteNetwork::new(banks, assets, holdings).expect("generator satisfies invariants")
}

fn bank_id(i: usize) -> BankId {
    BankId::new(format!("EB{i:03}"))
}

fn asset_id(k: usize) -> AssetId {
    AssetId::new(format!("AC{k:03}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_match() {
        let net = gen_synthetic_eba(1);
        assert_eq!(net.n_banks(), EBA_BANKS);
        assert_eq!(net.n_assets(), EBA_ASSETS);
    }

    #[test]
    fn every_bank_holds_something() {
        let net = gen_synthetic_eba(2);
        for bank in net.banks() {
            let held = net.holdings().iter().filter(|h| h.bank == bank.id).count();
            assert!(held >= MIN_DEGREE);
            let value: f64 = net
                .holdings()
                .iter()
                .filter(|h| h.bank == bank.id)
                .map(|h| h.units)
                .sum();
            assert!(crate::model::approx_eq(
                value,
                bank.balance_sheet.illiquid_assets()
            ));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_synthetic_eba(3), gen_synthetic_eba(3));
        assert_ne!(gen_synthetic_eba(3), gen_synthetic_eba(4));
    }

    #[test]
    fn capital_ratios_in_declared_band() {
        let net = gen_synthetic_eba(5);
        for bank in net.banks() {
            let ratio = bank
                .balance_sheet
                .capital_ratio(crate::model::CapitalBasis::TotalAssets)
                .unwrap();
            assert!((CAPITAL_LO - 1e-9..=CAPITAL_HI + 1e-9).contains(&ratio));
        }
    }

    #[test]
    fn sizes_are_heterogeneous() {
        let net = gen_synthetic_eba(6);
        let sizes: Vec<f64> = net
            .banks()
            .iter()
            .map(|b| b.balance_sheet.total_assets())
            .collect();
        let min = sizes.iter().copied().fold(f64::MAX, f64::min);
        let max = sizes.iter().copied().fold(f64::MIN, f64::max);
        assert!(max / min > 5.0, "size spread too narrow: {min}..{max}");
    }
}
