//! Domain types shared by every engine: balance sheets, banks, interbank
//! exposure networks, and bipartite bank-asset networks.
//!
//! All types are immutable value objects once constructed; engines model
//! mutation by building new states. Monetary amounts are `f64` and compared
//! with the crate-wide tolerance [`EPS`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Monetary amount. Denominated so that a freshly generated asset unit is
/// worth 1.0 (units equal currency value at the initial price).
pub type Currency = f64;

/// Comparison tolerance for equality and invariant checks.
///
/// Interpreted relative above 1.0: `a` and `b` are considered equal when
/// `|a - b| <= EPS * max(1, |a|, |b|)`.
pub const EPS: f64 = 1e-9;

/// Tolerance-based equality for currency amounts.
pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS * 1.0_f64.max(a.abs()).max(b.abs())
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("balance sheet field `{field}` is negative: {value}")]
    NegativeField { field: &'static str, value: f64 },
    #[error("balance sheet field `{field}` is not finite")]
    NonFiniteField { field: &'static str },
    #[error("leverage undefined: equity {equity} is not positive")]
    UndefinedLeverage { equity: f64 },
    #[error("capital ratio undefined: basis value {basis} is not positive")]
    ZeroBasis { basis: f64 },
    #[error("duplicate bank id `{0}`")]
    DuplicateBank(BankId),
    #[error("unknown bank id `{0}`")]
    UnknownBank(BankId),
    #[error("duplicate asset id `{0}`")]
    DuplicateAsset(AssetId),
    #[error("unknown asset id `{0}`")]
    UnknownAsset(AssetId),
    #[error("self-loop exposure on bank `{0}`")]
    SelfLoop(BankId),
    #[error("duplicate exposure {lender} -> {borrower}")]
    DuplicateExposure { lender: BankId, borrower: BankId },
    #[error("exposure {lender} -> {borrower} has non-positive amount {amount}")]
    NonPositiveExposure {
        lender: BankId,
        borrower: BankId,
        amount: f64,
    },
    #[error(
        "bank `{bank}`: stored {field} {stored} does not match value derived from exposures {derived}"
    )]
    InconsistentDerived {
        bank: BankId,
        field: &'static str,
        stored: f64,
        derived: f64,
    },
    #[error("asset `{0}` has non-positive depth")]
    NonPositiveDepth(AssetId),
    #[error("asset `{asset}` has price {price} outside (0, 1]")]
    PriceOutOfRange { asset: AssetId, price: f64 },
    #[error("holding ({bank}, {asset}) has negative units {units}")]
    NegativeHolding {
        bank: BankId,
        asset: AssetId,
        units: f64,
    },
    #[error("duplicate holding ({bank}, {asset})")]
    DuplicateHolding { bank: BankId, asset: AssetId },
    #[error(
        "bank `{bank}`: illiquid assets {stored} do not match marked value of holdings {marked}"
    )]
    NotMarkedToMarket {
        bank: BankId,
        stored: f64,
        marked: f64,
    },
}

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

/// Opaque bank identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BankId(String);

impl BankId {
    pub fn new(id: impl Into<String>) -> Self {
        BankId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BankId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BankId {
    fn from(s: &str) -> Self {
        BankId::new(s)
    }
}

/// Opaque asset-class identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(String);

impl AssetId {
    pub fn new(id: impl Into<String>) -> Self {
        AssetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AssetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AssetId {
    fn from(s: &str) -> Self {
        AssetId::new(s)
    }
}

// ---------------------------------------------------------------------------
// Balance sheet
// ---------------------------------------------------------------------------

/// One bank's asset/liability decomposition.
///
/// Equity is never stored; it is always derived as total assets minus total
/// liabilities and may be negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceSheet {
    liquid_assets: Currency,
    illiquid_assets: Currency,
    interbank_assets: Currency,
    deposits: Currency,
    interbank_liabilities: Currency,
    short_term_liabilities: Currency,
}

fn check_field(field: &'static str, value: f64) -> Result<f64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NonFiniteField { field });
    }
    if value < 0.0 {
        return Err(ModelError::NegativeField { field, value });
    }
    Ok(value)
}

impl BalanceSheet {
    /// Build a balance sheet from all six fields. Every field must be a
    /// finite non-negative amount.
    pub fn new(
        liquid_assets: Currency,
        illiquid_assets: Currency,
        interbank_assets: Currency,
        deposits: Currency,
        interbank_liabilities: Currency,
        short_term_liabilities: Currency,
    ) -> Result<Self, ModelError> {
        Ok(BalanceSheet {
            liquid_assets: check_field("liquid_assets", liquid_assets)?,
            illiquid_assets: check_field("illiquid_assets", illiquid_assets)?,
            interbank_assets: check_field("interbank_assets", interbank_assets)?,
            deposits: check_field("deposits", deposits)?,
            interbank_liabilities: check_field("interbank_liabilities", interbank_liabilities)?,
            short_term_liabilities: check_field("short_term_liabilities", short_term_liabilities)?,
        })
    }

    /// Balance sheet with no interbank positions and no short-term debt.
    pub fn external_only(
        liquid_assets: Currency,
        illiquid_assets: Currency,
        deposits: Currency,
    ) -> Result<Self, ModelError> {
        Self::new(liquid_assets, illiquid_assets, 0.0, deposits, 0.0, 0.0)
    }

    /// All-zero balance sheet.
    pub fn empty() -> Self {
        BalanceSheet {
            liquid_assets: 0.0,
            illiquid_assets: 0.0,
            interbank_assets: 0.0,
            deposits: 0.0,
            interbank_liabilities: 0.0,
            short_term_liabilities: 0.0,
        }
    }

    pub fn liquid_assets(&self) -> Currency {
        self.liquid_assets
    }

    pub fn illiquid_assets(&self) -> Currency {
        self.illiquid_assets
    }

    pub fn interbank_assets(&self) -> Currency {
        self.interbank_assets
    }

    pub fn deposits(&self) -> Currency {
        self.deposits
    }

    pub fn interbank_liabilities(&self) -> Currency {
        self.interbank_liabilities
    }

    pub fn short_term_liabilities(&self) -> Currency {
        self.short_term_liabilities
    }

    /// External (non-interbank) assets: liquid plus illiquid.
    pub fn external_assets(&self) -> Currency {
        self.liquid_assets + self.illiquid_assets
    }

    pub fn total_assets(&self) -> Currency {
        self.liquid_assets + self.illiquid_assets + self.interbank_assets
    }

    pub fn total_liabilities(&self) -> Currency {
        self.deposits + self.interbank_liabilities
    }

    /// Equity (net worth): total assets minus total liabilities. May be
    /// negative.
    pub fn equity(&self) -> Currency {
        self.total_assets() - self.total_liabilities()
    }

    /// A bank is insolvent iff its net worth is strictly negative; zero
    /// equity still counts as solvent.
    pub fn is_insolvent(&self) -> bool {
        self.equity() < 0.0
    }

    /// A bank is illiquid iff short-term liabilities strictly exceed liquid
    /// assets.
    pub fn is_illiquid(&self) -> bool {
        self.short_term_liabilities > self.liquid_assets
    }

    /// Total assets over equity. Undefined for non-positive equity.
    pub fn leverage(&self) -> Result<f64, ModelError> {
        let equity = self.equity();
        if equity <= 0.0 {
            return Err(ModelError::UndefinedLeverage { equity });
        }
        Ok(self.total_assets() / equity)
    }

    /// Equity as a fraction of the chosen asset basis.
    pub fn capital_ratio(&self, basis: CapitalBasis) -> Result<f64, ModelError> {
        let basis_value = match basis {
            CapitalBasis::TotalAssets => self.total_assets(),
            CapitalBasis::IlliquidAssets => self.illiquid_assets,
        };
        if basis_value <= 0.0 {
            return Err(ModelError::ZeroBasis { basis: basis_value });
        }
        Ok(self.equity() / basis_value)
    }

    /// Copy with `illiquid_assets` replaced (mark-to-market plumbing).
    pub fn with_illiquid_assets(&self, illiquid_assets: Currency) -> Result<Self, ModelError> {
        Self::new(
            self.liquid_assets,
            illiquid_assets,
            self.interbank_assets,
            self.deposits,
            self.interbank_liabilities,
            self.short_term_liabilities,
        )
    }

    /// Copy with both interbank positions replaced (derived from exposures).
    pub fn with_interbank(
        &self,
        interbank_assets: Currency,
        interbank_liabilities: Currency,
    ) -> Result<Self, ModelError> {
        Self::new(
            self.liquid_assets,
            self.illiquid_assets,
            interbank_assets,
            self.deposits,
            interbank_liabilities,
            self.short_term_liabilities,
        )
    }
}

/// Asset basis for the regulatory capital-ratio constraint. The literature
/// uses either convention, so the choice is a scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapitalBasis {
    TotalAssets,
    IlliquidAssets,
}

// ---------------------------------------------------------------------------
// Banks
// ---------------------------------------------------------------------------

/// Liveness of a bank within a run. Transitions are monotone: an unpadded
/// bank can only move `Solvent -> Defaulted`, and a padded bank never
/// defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BankStatus {
    Solvent,
    Defaulted,
    Padded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bank {
    pub id: BankId,
    pub balance_sheet: BalanceSheet,
    pub status: BankStatus,
}

impl Bank {
    pub fn new(id: impl Into<BankId>, balance_sheet: BalanceSheet) -> Self {
        Bank {
            id: id.into(),
            balance_sheet,
            status: BankStatus::Solvent,
        }
    }
}

// ---------------------------------------------------------------------------
// Interbank network
// ---------------------------------------------------------------------------

/// One directed credit exposure: `lender` has lent `amount` to `borrower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub lender: BankId,
    pub borrower: BankId,
    pub amount: Currency,
}

/// Directed weighted lender-to-borrower exposure graph.
///
/// Construction enforces: no self-loops, at most one edge per ordered pair,
/// strictly positive amounts, and consistency of each bank's stored
/// interbank positions with the sums derived from the exposure list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterbankNetwork {
    banks: Vec<Bank>,
    exposures: Vec<Exposure>,
    #[serde(skip)]
    index: BTreeMap<BankId, usize>,
}

impl InterbankNetwork {
    /// Validate and build. The banks' interbank fields must already agree
    /// with the exposure list (within [`EPS`]).
    pub fn new(banks: Vec<Bank>, exposures: Vec<Exposure>) -> Result<Self, ModelError> {
        let net = Self::validate_structure(banks, exposures)?;
        net.check_derived_consistency()?;
        Ok(net)
    }

    /// Build with interbank positions derived from the exposure list,
    /// overwriting whatever the supplied balance sheets stored.
    pub fn assemble(banks: Vec<Bank>, exposures: Vec<Exposure>) -> Result<Self, ModelError> {
        let mut net = Self::validate_structure(banks, exposures)?;
        let (lent, borrowed) = net.derived_positions();
        for (i, bank) in net.banks.iter_mut().enumerate() {
            bank.balance_sheet = bank.balance_sheet.with_interbank(lent[i], borrowed[i])?;
        }
        Ok(net)
    }

    fn validate_structure(banks: Vec<Bank>, exposures: Vec<Exposure>) -> Result<Self, ModelError> {
        let mut index = BTreeMap::new();
        for (i, bank) in banks.iter().enumerate() {
            if index.insert(bank.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateBank(bank.id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &exposures {
            if !index.contains_key(&e.lender) {
                return Err(ModelError::UnknownBank(e.lender.clone()));
            }
            if !index.contains_key(&e.borrower) {
                return Err(ModelError::UnknownBank(e.borrower.clone()));
            }
            if e.lender == e.borrower {
                return Err(ModelError::SelfLoop(e.lender.clone()));
            }
            if !seen.insert((e.lender.clone(), e.borrower.clone())) {
                return Err(ModelError::DuplicateExposure {
                    lender: e.lender.clone(),
                    borrower: e.borrower.clone(),
                });
            }
            if !(e.amount > 0.0) || !e.amount.is_finite() {
                return Err(ModelError::NonPositiveExposure {
                    lender: e.lender.clone(),
                    borrower: e.borrower.clone(),
                    amount: e.amount,
                });
            }
        }
        Ok(InterbankNetwork {
            banks,
            exposures,
            index,
        })
    }

    /// Per-bank (interbank assets, interbank liabilities) derived from the
    /// exposure list.
    fn derived_positions(&self) -> (Vec<Currency>, Vec<Currency>) {
        let mut lent = vec![0.0; self.banks.len()];
        let mut borrowed = vec![0.0; self.banks.len()];
        for e in &self.exposures {
            lent[self.index[&e.lender]] += e.amount;
            borrowed[self.index[&e.borrower]] += e.amount;
        }
        (lent, borrowed)
    }

    fn check_derived_consistency(&self) -> Result<(), ModelError> {
        let (lent, borrowed) = self.derived_positions();
        for (i, bank) in self.banks.iter().enumerate() {
            let bs = &bank.balance_sheet;
            if !approx_eq(bs.interbank_assets(), lent[i]) {
                return Err(ModelError::InconsistentDerived {
                    bank: bank.id.clone(),
                    field: "interbank_assets",
                    stored: bs.interbank_assets(),
                    derived: lent[i],
                });
            }
            if !approx_eq(bs.interbank_liabilities(), borrowed[i]) {
                return Err(ModelError::InconsistentDerived {
                    bank: bank.id.clone(),
                    field: "interbank_liabilities",
                    stored: bs.interbank_liabilities(),
                    derived: borrowed[i],
                });
            }
        }
        Ok(())
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn exposures(&self) -> &[Exposure] {
        &self.exposures
    }

    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn index_of(&self, id: &BankId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn bank(&self, id: &BankId) -> Option<&Bank> {
        self.index_of(id).map(|i| &self.banks[i])
    }

    /// Copy-on-write status change, e.g. to pre-default or pad a bank
    /// before running an engine. Panics if the id is unknown; callers
    /// validate ids first.
    pub fn with_status(mut self, id: &BankId, status: BankStatus) -> Self {
        let i = self.index[id];
        self.banks[i].status = status;
        self
    }
}

// ---------------------------------------------------------------------------
// Bipartite bank-asset network
// ---------------------------------------------------------------------------

/// One tradable asset class with its market depth and current price.
///
/// Prices are fractions of the initial value (initial price = 1); depth is
/// the sale volume scale over which the price moves appreciably. Depth may
/// be `f64::INFINITY` for a market with no endogenous impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub id: AssetId,
    pub depth: Currency,
    pub price: f64,
}

impl Asset {
    pub fn new(id: impl Into<AssetId>, depth: Currency) -> Self {
        Asset {
            id: id.into(),
            depth,
            price: 1.0,
        }
    }
}

/// One bank's position in one asset, in units. Units are denominated so
/// that one unit was worth 1.0 at the initial price, so `units` equals the
/// position's currency value at price 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub bank: BankId,
    pub asset: AssetId,
    pub units: f64,
}

/// Bipartite bank-asset holdings network with per-asset market depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteNetwork {
    banks: Vec<Bank>,
    assets: Vec<Asset>,
    holdings: Vec<Holding>,
    #[serde(skip)]
    bank_index: BTreeMap<BankId, usize>,
    #[serde(skip)]
    asset_index: BTreeMap<AssetId, usize>,
}

impl BipartiteNetwork {
    /// Validate and build. Balance sheets must already be marked to market
    /// (each bank's illiquid assets equal the current value of its
    /// holdings, within [`EPS`]).
    pub fn new(
        banks: Vec<Bank>,
        assets: Vec<Asset>,
        holdings: Vec<Holding>,
    ) -> Result<Self, ModelError> {
        let net = Self::assemble(banks, assets, holdings)?;
        net.check_marked()?;
        Ok(net)
    }

    /// Structural validation only: ids resolve, no duplicate holdings,
    /// units non-negative, depths positive, prices in (0, 1]. Balance
    /// sheets may be stale; follow with [`BipartiteNetwork::mark_to_market`].
    pub fn assemble(
        banks: Vec<Bank>,
        assets: Vec<Asset>,
        holdings: Vec<Holding>,
    ) -> Result<Self, ModelError> {
        let mut bank_index = BTreeMap::new();
        for (i, bank) in banks.iter().enumerate() {
            if bank_index.insert(bank.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateBank(bank.id.clone()));
            }
        }
        let mut asset_index = BTreeMap::new();
        for (k, asset) in assets.iter().enumerate() {
            if asset_index.insert(asset.id.clone(), k).is_some() {
                return Err(ModelError::DuplicateAsset(asset.id.clone()));
            }
            if !(asset.depth > 0.0) {
                return Err(ModelError::NonPositiveDepth(asset.id.clone()));
            }
            if !(asset.price > 0.0 && asset.price <= 1.0) {
                return Err(ModelError::PriceOutOfRange {
                    asset: asset.id.clone(),
                    price: asset.price,
                });
            }
        }
        let mut seen = BTreeSet::new();
        for h in &holdings {
            if !bank_index.contains_key(&h.bank) {
                return Err(ModelError::UnknownBank(h.bank.clone()));
            }
            if !asset_index.contains_key(&h.asset) {
                return Err(ModelError::UnknownAsset(h.asset.clone()));
            }
            if !seen.insert((h.bank.clone(), h.asset.clone())) {
                return Err(ModelError::DuplicateHolding {
                    bank: h.bank.clone(),
                    asset: h.asset.clone(),
                });
            }
            if !(h.units >= 0.0) || !h.units.is_finite() {
                return Err(ModelError::NegativeHolding {
                    bank: h.bank.clone(),
                    asset: h.asset.clone(),
                    units: h.units,
                });
            }
        }
        Ok(BipartiteNetwork {
            banks,
            assets,
            holdings,
            bank_index,
            asset_index,
        })
    }

    /// Marked value of each bank's holdings at current prices.
    fn marked_values(&self) -> Vec<Currency> {
        let mut value = vec![0.0; self.banks.len()];
        for h in &self.holdings {
            let price = self.assets[self.asset_index[&h.asset]].price;
            value[self.bank_index[&h.bank]] += h.units * price;
        }
        value
    }

    fn check_marked(&self) -> Result<(), ModelError> {
        let marked = self.marked_values();
        for (i, bank) in self.banks.iter().enumerate() {
            let stored = bank.balance_sheet.illiquid_assets();
            if !approx_eq(stored, marked[i]) {
                return Err(ModelError::NotMarkedToMarket {
                    bank: bank.id.clone(),
                    stored,
                    marked: marked[i],
                });
            }
        }
        Ok(())
    }

    /// Recompute every bank's illiquid assets as the current marked value
    /// of its holdings. No other field changes.
    pub fn mark_to_market(&self) -> Self {
        let marked = self.marked_values();
        let mut out = self.clone();
        for (i, bank) in out.banks.iter_mut().enumerate() {
            bank.balance_sheet = bank
                .balance_sheet
                .with_illiquid_assets(marked[i])
                .expect("marked value is non-negative");
        }
        out
    }

    /// Copy with one asset's price replaced. The result is not re-marked;
    /// callers follow with [`BipartiteNetwork::mark_to_market`].
    pub fn with_price(&self, asset: &AssetId, price: f64) -> Result<Self, ModelError> {
        let k = self
            .asset_index
            .get(asset)
            .copied()
            .ok_or_else(|| ModelError::UnknownAsset(asset.clone()))?;
        if !(price > 0.0 && price <= 1.0) {
            return Err(ModelError::PriceOutOfRange {
                asset: asset.clone(),
                price,
            });
        }
        let mut out = self.clone();
        out.assets[k].price = price;
        Ok(out)
    }

    pub fn banks(&self) -> &[Bank] {
        &self.banks
    }

    pub fn assets(&self) -> &[Asset] {
        &self.assets
    }

    pub fn holdings(&self) -> &[Holding] {
        &self.holdings
    }

    pub fn n_banks(&self) -> usize {
        self.banks.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn bank_index_of(&self, id: &BankId) -> Option<usize> {
        self.bank_index.get(id).copied()
    }

    pub fn asset_index_of(&self, id: &AssetId) -> Option<usize> {
        self.asset_index.get(id).copied()
    }

    pub fn bank(&self, id: &BankId) -> Option<&Bank> {
        self.bank_index_of(id).map(|i| &self.banks[i])
    }

    /// Total units of one asset held across the system.
    pub fn total_units(&self, asset: &AssetId) -> Currency {
        self.holdings
            .iter()
            .filter(|h| &h.asset == asset)
            .map(|h| h.units)
            .sum()
    }

    /// Copy-on-write status change; see `InterbankNetwork::with_status`.
    pub fn with_bank_status(mut self, id: &BankId, status: BankStatus) -> Self {
        let i = self.bank_index[id];
        self.banks[i].status = status;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sheet(
        liquid: f64,
        illiquid: f64,
        ib_assets: f64,
        deposits: f64,
        ib_liabilities: f64,
    ) -> BalanceSheet {
        BalanceSheet::new(liquid, illiquid, ib_assets, deposits, ib_liabilities, 0.0).unwrap()
    }

    #[test]
    fn equity_zero_sheet() {
        assert_eq!(BalanceSheet::empty().equity(), 0.0);
    }

    #[test]
    fn equity_worked_example() {
        // 10 + 80 + 10 = 100 assets, 76 + 20 = 96 liabilities.
        let bs = sheet(10.0, 80.0, 10.0, 76.0, 20.0);
        assert!(approx_eq(bs.equity(), 4.0));
        assert!(!bs.is_insolvent());
    }

    #[test]
    fn equity_negative_when_liabilities_exceed_assets() {
        let bs = sheet(0.0, 50.0, 0.0, 60.0, 0.0);
        assert!(approx_eq(bs.equity(), -10.0));
        assert!(bs.is_insolvent());
    }

    #[test]
    fn zero_equity_is_solvent() {
        let bs = sheet(0.0, 50.0, 0.0, 50.0, 0.0);
        assert_eq!(bs.equity(), 0.0);
        assert!(!bs.is_insolvent());
    }

    #[test]
    fn illiquidity_is_strict() {
        let liq = BalanceSheet::new(10.0, 0.0, 0.0, 0.0, 0.0, 5.0).unwrap();
        assert!(!liq.is_illiquid());
        let illiq = BalanceSheet::new(5.0, 0.0, 0.0, 0.0, 0.0, 10.0).unwrap();
        assert!(illiq.is_illiquid());
        let boundary = BalanceSheet::new(5.0, 0.0, 0.0, 0.0, 0.0, 5.0).unwrap();
        assert!(!boundary.is_illiquid());
    }

    #[test]
    fn leverage_examples() {
        let bs = sheet(0.0, 100.0, 0.0, 90.0, 0.0);
        assert!(approx_eq(bs.leverage().unwrap(), 10.0));
        let no_debt = sheet(0.0, 100.0, 0.0, 0.0, 0.0);
        assert!(approx_eq(no_debt.leverage().unwrap(), 1.0));
        let zero_equity = sheet(0.0, 100.0, 0.0, 100.0, 0.0);
        assert!(zero_equity.leverage().is_err());
    }

    #[test]
    fn capital_ratio_both_bases() {
        let bs = sheet(0.0, 100.0, 0.0, 92.0, 0.0);
        assert!(approx_eq(
            bs.capital_ratio(CapitalBasis::IlliquidAssets).unwrap(),
            0.08
        ));
        let bs2 = sheet(20.0, 80.0, 0.0, 96.0, 0.0);
        assert!(approx_eq(
            bs2.capital_ratio(CapitalBasis::TotalAssets).unwrap(),
            0.04
        ));
        let zero_eq = sheet(0.0, 100.0, 0.0, 100.0, 0.0);
        assert_eq!(
            zero_eq.capital_ratio(CapitalBasis::TotalAssets).unwrap(),
            0.0
        );
        assert!(BalanceSheet::empty()
            .capital_ratio(CapitalBasis::TotalAssets)
            .is_err());
    }

    #[test]
    fn negative_fields_rejected() {
        assert!(BalanceSheet::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(BalanceSheet::new(0.0, 0.0, 0.0, f64::NAN, 0.0, 0.0).is_err());
    }

    fn two_bank_net() -> InterbankNetwork {
        let a = Bank::new(BankId::new("A"), sheet(0.0, 100.0, 10.0, 80.0, 0.0));
        let b = Bank::new(BankId::new("B"), sheet(0.0, 100.0, 0.0, 80.0, 10.0));
        InterbankNetwork::new(
            vec![a, b],
            vec![Exposure {
                lender: BankId::new("A"),
                borrower: BankId::new("B"),
                amount: 10.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn interbank_accepts_consistent_positions() {
        let net = two_bank_net();
        assert_eq!(net.n_banks(), 2);
        assert_eq!(net.exposures().len(), 1);
    }

    #[test]
    fn interbank_rejects_inconsistent_positions() {
        let a = Bank::new(BankId::new("A"), sheet(0.0, 100.0, 5.0, 80.0, 0.0));
        let b = Bank::new(BankId::new("B"), sheet(0.0, 100.0, 0.0, 80.0, 10.0));
        let err = InterbankNetwork::new(
            vec![a, b],
            vec![Exposure {
                lender: BankId::new("A"),
                borrower: BankId::new("B"),
                amount: 10.0,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::InconsistentDerived { .. }));
    }

    #[test]
    fn interbank_rejects_self_loop_and_duplicates() {
        let a = Bank::new(BankId::new("A"), BalanceSheet::empty());
        let b = Bank::new(BankId::new("B"), BalanceSheet::empty());
        let self_loop = InterbankNetwork::new(
            vec![a.clone(), b.clone()],
            vec![Exposure {
                lender: BankId::new("A"),
                borrower: BankId::new("A"),
                amount: 1.0,
            }],
        );
        assert!(matches!(self_loop.unwrap_err(), ModelError::SelfLoop(_)));

        let dup = InterbankNetwork::new(
            vec![a, b],
            vec![
                Exposure {
                    lender: BankId::new("A"),
                    borrower: BankId::new("B"),
                    amount: 1.0,
                },
                Exposure {
                    lender: BankId::new("A"),
                    borrower: BankId::new("B"),
                    amount: 2.0,
                },
            ],
        );
        assert!(matches!(
            dup.unwrap_err(),
            ModelError::DuplicateExposure { .. }
        ));
    }

    #[test]
    fn assemble_derives_interbank_positions() {
        let a = Bank::new(BankId::new("A"), sheet(0.0, 100.0, 0.0, 80.0, 0.0));
        let b = Bank::new(BankId::new("B"), sheet(0.0, 100.0, 0.0, 80.0, 0.0));
        let net = InterbankNetwork::assemble(
            vec![a, b],
            vec![Exposure {
                lender: BankId::new("A"),
                borrower: BankId::new("B"),
                amount: 7.0,
            }],
        )
        .unwrap();
        assert!(approx_eq(
            net.bank(&BankId::new("A"))
                .unwrap()
                .balance_sheet
                .interbank_assets(),
            7.0
        ));
        assert!(approx_eq(
            net.bank(&BankId::new("B"))
                .unwrap()
                .balance_sheet
                .interbank_liabilities(),
            7.0
        ));
    }

    fn small_bipartite() -> BipartiteNetwork {
        let b1 = Bank::new(
            BankId::new("b1"),
            BalanceSheet::external_only(0.0, 100.0, 90.0).unwrap(),
        );
        let a1 = Asset::new(AssetId::new("a1"), 200.0);
        let h = Holding {
            bank: BankId::new("b1"),
            asset: AssetId::new("a1"),
            units: 100.0,
        };
        BipartiteNetwork::new(vec![b1], vec![a1], vec![h]).unwrap()
    }

    #[test]
    fn mark_to_market_identity_at_unit_prices() {
        let net = small_bipartite();
        let marked = net.mark_to_market();
        assert_eq!(net, marked);
    }

    #[test]
    fn mark_to_market_after_price_drop() {
        let net = small_bipartite();
        let dropped = net.with_price(&AssetId::new("a1"), 0.7).unwrap();
        let marked = dropped.mark_to_market();
        let bank = marked.bank(&BankId::new("b1")).unwrap();
        assert!(approx_eq(bank.balance_sheet.illiquid_assets(), 70.0));
        // 100 units valued at 0.7 against 90 of deposits.
        assert!(approx_eq(bank.balance_sheet.equity(), -20.0));
    }

    #[test]
    fn mark_to_market_no_holdings() {
        let b1 = Bank::new(
            BankId::new("b1"),
            BalanceSheet::external_only(5.0, 3.0, 0.0).unwrap(),
        );
        let a1 = Asset::new(AssetId::new("a1"), 10.0);
        let net = BipartiteNetwork::assemble(vec![b1], vec![a1], vec![]).unwrap();
        let marked = net.mark_to_market();
        assert_eq!(
            marked
                .bank(&BankId::new("b1"))
                .unwrap()
                .balance_sheet
                .illiquid_assets(),
            0.0
        );
    }

    #[test]
    fn bipartite_rejects_bad_prices_and_depths() {
        let b1 = Bank::new(BankId::new("b1"), BalanceSheet::empty());
        let bad_depth = BipartiteNetwork::assemble(
            vec![b1.clone()],
            vec![Asset {
                id: AssetId::new("a1"),
                depth: 0.0,
                price: 1.0,
            }],
            vec![],
        );
        assert!(matches!(
            bad_depth.unwrap_err(),
            ModelError::NonPositiveDepth(_)
        ));
        let bad_price = BipartiteNetwork::assemble(
            vec![b1],
            vec![Asset {
                id: AssetId::new("a1"),
                depth: 1.0,
                price: 1.5,
            }],
            vec![],
        );
        assert!(matches!(
            bad_price.unwrap_err(),
            ModelError::PriceOutOfRange { .. }
        ));
    }

    #[test]
    fn infinite_depth_is_allowed() {
        let b1 = Bank::new(BankId::new("b1"), BalanceSheet::empty());
        let net = BipartiteNetwork::assemble(
            vec![b1],
            vec![Asset::new(AssetId::new("a1"), f64::INFINITY)],
            vec![],
        );
        assert!(net.is_ok());
    }

    #[test]
    fn accounting_identity() {
        let bs = sheet(3.0, 5.0, 7.0, 11.0, 2.0);
        assert!(approx_eq(
            bs.equity() + bs.total_liabilities(),
            bs.total_assets()
        ));
    }
}
