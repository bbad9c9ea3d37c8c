//! Self-consistent clearing-vector solver for interbank settlement.
//!
//! Payments of all banks are settled simultaneously: each bank pays the
//! minimum of its nominal obligation and what it can raise from external
//! assets plus incoming payments. The solver returns the greatest fixed
//! point of `p = min(pbar, e + PI^T p)`, found by monotone iteration from
//! the full-payment vector.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{self, CascadeResult};
use crate::model::{BankId, BankStatus, Currency, InterbankNetwork, EPS};

#[derive(Debug, Error)]
pub enum ClearingError {
    #[error("liability matrix must be square: row {row} has length {len}, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("external asset vector has length {len}, expected {n}")]
    BadExternalLength { len: usize, n: usize },
    #[error("id list has length {len}, expected {n}")]
    BadIdLength { len: usize, n: usize },
    #[error("liability matrix has nonzero diagonal at {0}")]
    NonzeroDiagonal(usize),
    #[error("liability matrix entry ({i}, {j}) is negative or not finite: {value}")]
    BadEntry { i: usize, j: usize, value: f64 },
    #[error("external assets for bank {i} are negative or not finite: {value}")]
    BadExternal { i: usize, value: f64 },
    #[error("no convergence within {max_iter} iterations (last delta {delta})")]
    NonConvergence { max_iter: usize, delta: f64 },
    #[error(
        "bank `{bank}` cannot be represented: deposits {deposits} exceed external assets {external}"
    )]
    DepositsExceedExternal {
        bank: BankId,
        deposits: f64,
        external: f64,
    },
    #[error("unknown bank id `{0}`")]
    UnknownBank(BankId),
    #[error(transparent)]
    Cascade(#[from] cascade::CascadeError),
}

/// Nominal interbank obligations plus external assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingProblem {
    ids: Vec<BankId>,
    /// `liabilities[i][j]` is the amount bank `i` owes bank `j`.
    liabilities: Vec<Vec<Currency>>,
    external: Vec<Currency>,
}

impl ClearingProblem {
    pub fn new(
        ids: Vec<BankId>,
        liabilities: Vec<Vec<Currency>>,
        external: Vec<Currency>,
    ) -> Result<Self, ClearingError> {
        let n = liabilities.len();
        if ids.len() != n {
            return Err(ClearingError::BadIdLength { len: ids.len(), n });
        }
        if external.len() != n {
            return Err(ClearingError::BadExternalLength {
                len: external.len(),
                n,
            });
        }
        for (i, row) in liabilities.iter().enumerate() {
            if row.len() != n {
                return Err(ClearingError::NotSquare {
                    row: i,
                    len: row.len(),
                    n,
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(ClearingError::BadEntry { i, j, value: v });
                }
                if i == j && v != 0.0 {
                    return Err(ClearingError::NonzeroDiagonal(i));
                }
            }
        }
        for (i, &e) in external.iter().enumerate() {
            if !e.is_finite() || e < 0.0 {
                return Err(ClearingError::BadExternal { i, value: e });
            }
        }
        Ok(ClearingProblem {
            ids,
            liabilities,
            external,
        })
    }

    /// Problem with banks labelled by their index.
    pub fn from_amounts(
        liabilities: Vec<Vec<Currency>>,
        external: Vec<Currency>,
    ) -> Result<Self, ClearingError> {
        let ids = (0..liabilities.len())
            .map(|i| BankId::new(i.to_string()))
            .collect();
        Self::new(ids, liabilities, external)
    }

    /// Convert an interbank network: exposures become nominal obligations
    /// of the borrower, and deposits are senior, pre-deducted from external
    /// assets. `shocked` wipes that bank's external assets (it defaults
    /// exogenously); for every other bank, deposits exceeding external
    /// assets make the conversion infeasible.
    pub fn from_interbank(
        net: &InterbankNetwork,
        shocked: Option<&BankId>,
    ) -> Result<Self, ClearingError> {
        let n = net.n_banks();
        if let Some(id) = shocked {
            if net.index_of(id).is_none() {
                return Err(ClearingError::UnknownBank(id.clone()));
            }
        }
        let mut liabilities = vec![vec![0.0; n]; n];
        for e in net.exposures() {
            let lender = net.index_of(&e.lender).expect("validated id");
            let borrower = net.index_of(&e.borrower).expect("validated id");
            liabilities[borrower][lender] = e.amount;
        }
        let mut external = Vec::with_capacity(n);
        for bank in net.banks() {
            let bs = &bank.balance_sheet;
            if shocked.is_some_and(|id| *id == bank.id) {
                external.push(0.0);
                continue;
            }
            let ext = bs.external_assets();
            let net_ext = ext - bs.deposits();
            if net_ext < -EPS * ext.max(1.0) {
                return Err(ClearingError::DepositsExceedExternal {
                    bank: bank.id.clone(),
                    deposits: bs.deposits(),
                    external: ext,
                });
            }
            external.push(net_ext.max(0.0));
        }
        let ids = net.banks().iter().map(|b| b.id.clone()).collect();
        Self::new(ids, liabilities, external)
    }

    pub fn n(&self) -> usize {
        self.external.len()
    }

    pub fn ids(&self) -> &[BankId] {
        &self.ids
    }

    pub fn external(&self) -> &[Currency] {
        &self.external
    }

    pub fn liabilities(&self) -> &[Vec<Currency>] {
        &self.liabilities
    }

    /// Total nominal obligation of each bank.
    pub fn total_obligations(&self) -> Vec<Currency> {
        self.liabilities
            .iter()
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Payments received by each bank when everyone pays `p` pro rata.
    fn received(&self, obligations: &[f64], p: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut received = vec![0.0; n];
        for j in 0..n {
            if obligations[j] <= 0.0 {
                continue;
            }
            let factor = p[j] / obligations[j];
            if factor == 0.0 {
                continue;
            }
            for (i, &owed) in self.liabilities[j].iter().enumerate() {
                if owed > 0.0 {
                    received[i] += factor * owed;
                }
            }
        }
        received
    }
}

/// A clearing vector with its induced default set and post-settlement
/// equity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingSolution {
    pub ids: Vec<BankId>,
    /// Cleared payment of each bank.
    pub payments: Vec<Currency>,
    /// Nominal obligation of each bank.
    pub obligations: Vec<Currency>,
    pub equity_after: Vec<Currency>,
    /// Banks paying strictly less than their nominal obligation.
    pub defaults: BTreeSet<BankId>,
    pub iterations: usize,
    /// True when iterating from zero converges to a different (smaller)
    /// fixed point, i.e. the clearing vector is not unique.
    pub least_fixed_point_differs: bool,
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

fn iterate(
    prob: &ClearingProblem,
    obligations: &[f64],
    start: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), ClearingError> {
    let mut p = start;
    for iter in 1..=max_iter {
        let received = prob.received(obligations, &p);
        let mut delta: f64 = 0.0;
        let mut next = Vec::with_capacity(p.len());
        for i in 0..p.len() {
            let v = obligations[i].min(prob.external[i] + received[i]);
            delta = delta.max((v - p[i]).abs());
            next.push(v);
        }
        p = next;
        if delta < tol {
            return Ok((p, iter));
        }
    }
    let received = prob.received(obligations, &p);
    let delta = (0..p.len())
        .map(|i| (obligations[i].min(prob.external[i] + received[i]) - p[i]).abs())
        .fold(0.0, f64::max);
    Err(ClearingError::NonConvergence { max_iter, delta })
}

/// Compute the greatest clearing vector by monotone iteration from the
/// full-payment vector.
pub fn clearing_vector(prob: &ClearingProblem) -> Result<ClearingSolution, ClearingError> {
    clearing_vector_with(prob, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn clearing_vector_with(
    prob: &ClearingProblem,
    tol: f64,
    max_iter: usize,
) -> Result<ClearingSolution, ClearingError> {
    let obligations = prob.total_obligations();
    let (payments, iterations) = iterate(prob, &obligations, obligations.clone(), tol, max_iter)?;
    let (least, _) = iterate(prob, &obligations, vec![0.0; prob.n()], tol, max_iter)?;
    let gap = payments
        .iter()
        .zip(&least)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let received = prob.received(&obligations, &payments);
    let equity_after: Vec<f64> = (0..prob.n())
        .map(|i| prob.external[i] + received[i] - payments[i])
        .collect();
    let defaults = (0..prob.n())
        .filter(|&i| payments[i] < obligations[i] - EPS)
        .map(|i| prob.ids[i].clone())
        .collect();
    Ok(ClearingSolution {
        ids: prob.ids.clone(),
        payments,
        obligations,
        equity_after,
        defaults,
        iterations,
        least_fixed_point_differs: gap > 10.0 * tol,
    })
}

impl ClearingSolution {
    /// Infinity-norm residual of the fixed-point equation.
    pub fn residual(&self, prob: &ClearingProblem) -> f64 {
        let received = prob.received(&self.obligations, &self.payments);
        (0..prob.n())
            .map(|i| {
                (self.obligations[i].min(prob.external[i] + received[i]) - self.payments[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Default sets of the zero-recovery cascade and the clearing solution on
/// the same shocked network, with their symmetric difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearingComparison {
    pub shocked: BankId,
    pub cascade_defaults: BTreeSet<BankId>,
    pub clearing_defaults: BTreeSet<BankId>,
    pub symmetric_difference: BTreeSet<BankId>,
    pub cascade: CascadeResult,
    pub clearing: ClearingSolution,
}

/// Run both engines on the same initial shock and report where their
/// terminal default sets disagree. The clearing-side default set includes
/// the exogenously shocked bank even when it has no interbank obligations.
pub fn cascade_vs_clearing(
    net: &InterbankNetwork,
    shock: &BankId,
) -> Result<ClearingComparison, ClearingError> {
    if net.index_of(shock).is_none() {
        return Err(ClearingError::UnknownBank(shock.clone()));
    }
    if net.bank(shock).map(|b| b.status) != Some(BankStatus::Solvent) {
        return Err(cascade::CascadeError::NotSolvent(shock.clone()).into());
    }
    let cascade_result = cascade::run_cascade(cascade::shock_bank(net, shock)?);
    let prob = ClearingProblem::from_interbank(net, Some(shock))?;
    let solution = clearing_vector(&prob)?;
    let mut clearing_defaults = solution.defaults.clone();
    clearing_defaults.insert(shock.clone());
    let symmetric_difference = cascade_result
        .defaulted_ids
        .symmetric_difference(&clearing_defaults)
        .cloned()
        .collect();
    Ok(ClearingComparison {
        shocked: shock.clone(),
        cascade_defaults: cascade_result.defaulted_ids.clone(),
        clearing_defaults,
        symmetric_difference,
        cascade: cascade_result,
        clearing: solution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::approx_eq;

    fn approx_slice(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9)
    }

    #[test]
    fn no_obligations_pays_nothing() {
        let prob =
            ClearingProblem::from_amounts(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![5.0, 3.0])
                .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        assert_eq!(sol.payments, vec![0.0, 0.0]);
        assert!(approx_slice(&sol.equity_after, &[5.0, 3.0]));
        assert!(sol.defaults.is_empty());
    }

    #[test]
    fn chain_clearing() {
        // A owes B 10, B owes C 10, C owes nothing; e = (5, 2, 1).
        let prob = ClearingProblem::from_amounts(
            vec![
                vec![0.0, 10.0, 0.0],
                vec![0.0, 0.0, 10.0],
                vec![0.0, 0.0, 0.0],
            ],
            vec![5.0, 2.0, 1.0],
        )
        .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        assert!(approx_slice(&sol.payments, &[5.0, 7.0, 0.0]));
        assert!(approx_slice(&sol.equity_after, &[0.0, 0.0, 8.0]));
        assert_eq!(sol.defaults.len(), 2);
        assert!(sol.defaults.contains(&BankId::new("0")));
        assert!(sol.defaults.contains(&BankId::new("1")));
        assert!(sol.residual(&prob) < 10.0 * DEFAULT_TOL);
    }

    #[test]
    fn ring_already_clears() {
        let prob = ClearingProblem::from_amounts(
            vec![
                vec![0.0, 10.0, 0.0],
                vec![0.0, 0.0, 10.0],
                vec![10.0, 0.0, 0.0],
            ],
            vec![2.0, 2.0, 2.0],
        )
        .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        assert!(approx_slice(&sol.payments, &[10.0, 10.0, 10.0]));
        assert!(approx_slice(&sol.equity_after, &[2.0, 2.0, 2.0]));
        assert!(sol.defaults.is_empty());
    }

    #[test]
    fn ring_with_no_external_assets_has_multiple_fixed_points() {
        let prob = ClearingProblem::from_amounts(
            vec![
                vec![0.0, 10.0, 0.0],
                vec![0.0, 0.0, 10.0],
                vec![10.0, 0.0, 0.0],
            ],
            vec![0.0, 0.0, 0.0],
        )
        .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        // Greatest fixed point is full payment; iterating from zero stays
        // at zero.
        assert!(approx_slice(&sol.payments, &[10.0, 10.0, 10.0]));
        assert!(sol.least_fixed_point_differs);
    }

    #[test]
    fn bounds_hold() {
        let prob = ClearingProblem::from_amounts(
            vec![
                vec![0.0, 3.0, 1.0],
                vec![2.0, 0.0, 5.0],
                vec![0.5, 0.5, 0.0],
            ],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        for i in 0..3 {
            assert!(sol.payments[i] >= -1e-12);
            assert!(sol.payments[i] <= sol.obligations[i] + 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_problems() {
        assert!(ClearingProblem::from_amounts(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(ClearingProblem::from_amounts(
            vec![vec![0.0, -1.0], vec![0.0, 0.0]],
            vec![0.0, 0.0]
        )
        .is_err());
        assert!(ClearingProblem::from_amounts(vec![vec![0.0]], vec![]).is_err());
    }

    fn chain_network() -> InterbankNetwork {
        use crate::model::{BalanceSheet, Bank, Exposure};
        // Same chain as the matrix test, expressed as a network. External
        // assets are liquid; no deposits.
        let a = Bank::new(
            BankId::new("A"),
            BalanceSheet::new(5.0, 0.0, 0.0, 0.0, 10.0, 0.0).unwrap(),
        );
        let b = Bank::new(
            BankId::new("B"),
            BalanceSheet::new(2.0, 0.0, 10.0, 0.0, 10.0, 0.0).unwrap(),
        );
        let c = Bank::new(
            BankId::new("C"),
            BalanceSheet::new(1.0, 0.0, 10.0, 0.0, 0.0, 0.0).unwrap(),
        );
        InterbankNetwork::new(
            vec![a, b, c],
            vec![
                Exposure {
                    lender: BankId::new("B"),
                    borrower: BankId::new("A"),
                    amount: 10.0,
                },
                Exposure {
                    lender: BankId::new("C"),
                    borrower: BankId::new("B"),
                    amount: 10.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn from_interbank_matches_matrix_form() {
        let net = chain_network();
        let prob = ClearingProblem::from_interbank(&net, None).unwrap();
        let sol = clearing_vector(&prob).unwrap();
        assert!(approx_slice(&sol.payments, &[5.0, 7.0, 0.0]));
    }

    #[test]
    fn conversion_rejects_deposits_exceeding_external() {
        use crate::model::{BalanceSheet, Bank};
        let a = Bank::new(
            BankId::new("A"),
            BalanceSheet::new(1.0, 0.0, 0.0, 5.0, 0.0, 0.0).unwrap(),
        );
        let net = InterbankNetwork::new(
            vec![a, Bank::new(BankId::new("B"), BalanceSheet::empty())],
            vec![],
        )
        .unwrap();
        assert!(matches!(
            ClearingProblem::from_interbank(&net, None),
            Err(ClearingError::DepositsExceedExternal { .. })
        ));
        // ...unless that bank is the exogenously shocked one.
        assert!(ClearingProblem::from_interbank(&net, Some(&BankId::new("A"))).is_ok());
    }

    #[test]
    fn comparison_on_zero_edge_network() {
        use crate::model::{BalanceSheet, Bank};
        let banks: Vec<Bank> = (0..3)
            .map(|i| {
                Bank::new(
                    BankId::new(format!("N{i}")),
                    BalanceSheet::external_only(1.0, 0.0, 0.0).unwrap(),
                )
            })
            .collect();
        let net = InterbankNetwork::new(banks, vec![]).unwrap();
        let cmp = cascade_vs_clearing(&net, &BankId::new("N1")).unwrap();
        let expected: BTreeSet<BankId> = [BankId::new("N1")].into_iter().collect();
        assert_eq!(cmp.cascade_defaults, expected);
        assert_eq!(cmp.clearing_defaults, expected);
        assert!(cmp.symmetric_difference.is_empty());
    }

    #[test]
    fn comparison_on_shocked_chain_agrees() {
        let net = chain_network();
        let cmp = cascade_vs_clearing(&net, &BankId::new("A")).unwrap();
        // Clearing: A pays 0 (external wiped), B collects nothing beyond
        // e = 2 and pays 2 of its 10. Cascade: B's buffer 2 < writedown 10.
        // Both engines default {A, B}; C survives either way.
        let expected: BTreeSet<BankId> = [BankId::new("A"), BankId::new("B")].into_iter().collect();
        assert_eq!(cmp.clearing_defaults, expected);
        assert_eq!(cmp.cascade_defaults, expected);
        assert!(cmp.symmetric_difference.is_empty());
    }

    #[test]
    fn comparison_differs_when_shocked_bank_has_claims() {
        use crate::model::{BalanceSheet, Bank, Exposure};
        // D owes A 9, A owes B 10, B owes C 10. In clearing the shocked
        // bank A still collects 9 from D and passes it through, saving B;
        // the zero-recovery cascade wipes A's claim on D, so B's loss is
        // the full 10 against a buffer of 2.
        let mk =
            |liq: f64, iba: f64, ibl: f64| BalanceSheet::new(liq, 0.0, iba, 0.0, ibl, 0.0).unwrap();
        let net = InterbankNetwork::new(
            vec![
                Bank::new(BankId::new("A"), mk(5.0, 9.0, 10.0)),
                Bank::new(BankId::new("B"), mk(2.0, 10.0, 10.0)),
                Bank::new(BankId::new("C"), mk(1.0, 10.0, 0.0)),
                Bank::new(BankId::new("D"), mk(10.0, 0.0, 9.0)),
            ],
            vec![
                Exposure {
                    lender: BankId::new("A"),
                    borrower: BankId::new("D"),
                    amount: 9.0,
                },
                Exposure {
                    lender: BankId::new("B"),
                    borrower: BankId::new("A"),
                    amount: 10.0,
                },
                Exposure {
                    lender: BankId::new("C"),
                    borrower: BankId::new("B"),
                    amount: 10.0,
                },
            ],
        )
        .unwrap();
        let cmp = cascade_vs_clearing(&net, &BankId::new("A")).unwrap();
        let cascade_expected: BTreeSet<BankId> =
            [BankId::new("A"), BankId::new("B")].into_iter().collect();
        let clearing_expected: BTreeSet<BankId> = [BankId::new("A")].into_iter().collect();
        assert_eq!(cmp.cascade_defaults, cascade_expected);
        assert_eq!(cmp.clearing_defaults, clearing_expected);
        assert_eq!(
            cmp.symmetric_difference,
            [BankId::new("B")].into_iter().collect()
        );
    }

    #[test]
    fn equity_after_nonnegative_for_survivors() {
        let prob = ClearingProblem::from_amounts(
            vec![
                vec![0.0, 4.0, 2.0],
                vec![1.0, 0.0, 1.0],
                vec![3.0, 0.0, 0.0],
            ],
            vec![2.0, 3.0, 0.5],
        )
        .unwrap();
        let sol = clearing_vector(&prob).unwrap();
        for i in 0..3 {
            if !sol.defaults.contains(&sol.ids[i]) {
                assert!(sol.equity_after[i] >= -1e-9);
            } else {
                // Absolute priority: a defaulter pays out everything it
                // has, leaving zero equity.
                assert!(approx_eq(sol.equity_after[i], 0.0));
            }
        }
    }
}
