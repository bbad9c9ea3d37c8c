//! Seeded random generators for interbank and bipartite bank-asset networks
//! with configurable degree and size heterogeneity.
//!
//! Generators are pure functions of their parameter struct (the seed is a
//! parameter): same params, same seed, bit-identical network.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    Asset, AssetId, BalanceSheet, Bank, BankId, BipartiteNetwork, Currency, Exposure, Holding,
    InterbankNetwork, ModelError, EPS,
};
use crate::seed;

#[derive(Debug, Error)]
pub enum NetGenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error(
        "infeasible parameters: bank `{bank}` would need negative deposits ({deposits}) to balance"
    )]
    Infeasible { bank: BankId, deposits: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Out-degree distribution for interbank generation. `avg_degree` is the
/// expected out-degree (number of borrowers a bank lends to).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegreeDist {
    ErdosRenyi,
    /// Bounded discrete power law targeting the given tail exponent. The
    /// lower cutoff is derived from `avg_degree` when the exponent allows a
    /// finite mean, so the configured average degree is approximately met.
    PowerLaw {
        exponent: f64,
    },
}

/// Bank size (total asset) distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeDist {
    /// Homogeneous system: every bank has total assets equal to
    /// `total_asset_scale`.
    Uniform,
    /// Bounded Pareto on [x_min, n_banks] (in units of the scale), capped so
    /// no single bank dominates the system.
    PowerLaw { exponent: f64, x_min: f64 },
}

impl SizeDist {
    pub fn power_law(exponent: f64) -> Self {
        SizeDist::PowerLaw {
            exponent,
            x_min: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetGenParams {
    pub n_banks: usize,
    /// Expected out-degree z.
    pub avg_degree: f64,
    pub degree_dist: DegreeDist,
    pub size_dist: SizeDist,
    /// Equity as a fraction of total assets.
    pub capital_ratio: f64,
    /// Fraction of total assets held as interbank claims.
    pub interbank_fraction: f64,
    pub total_asset_scale: Currency,
    pub seed: u64,
}

impl NetGenParams {
    pub fn validate(&self) -> Result<(), NetGenError> {
        if self.n_banks < 2 {
            return Err(NetGenError::InvalidParams(format!(
                "n_banks must be >= 2, got {}",
                self.n_banks
            )));
        }
        if !(self.avg_degree >= 0.0) {
            return Err(NetGenError::InvalidParams(format!(
                "avg_degree must be >= 0, got {}",
                self.avg_degree
            )));
        }
        if !(self.capital_ratio > 0.0 && self.capital_ratio < 1.0) {
            return Err(NetGenError::InvalidParams(format!(
                "capital_ratio must lie in (0, 1), got {}",
                self.capital_ratio
            )));
        }
        if !(0.0..=1.0).contains(&self.interbank_fraction) {
            return Err(NetGenError::InvalidParams(format!(
                "interbank_fraction must lie in [0, 1], got {}",
                self.interbank_fraction
            )));
        }
        if !(self.total_asset_scale > 0.0) {
            return Err(NetGenError::InvalidParams(format!(
                "total_asset_scale must be > 0, got {}",
                self.total_asset_scale
            )));
        }
        validate_size_dist(&self.size_dist)?;
        if let DegreeDist::PowerLaw { exponent } = self.degree_dist {
            if !(exponent > 1.0) {
                return Err(NetGenError::InvalidParams(format!(
                    "degree exponent must be > 1, got {exponent}"
                )));
            }
        }
        Ok(())
    }
}

fn validate_size_dist(dist: &SizeDist) -> Result<(), NetGenError> {
    if let SizeDist::PowerLaw { exponent, x_min } = dist {
        if !(*exponent > 1.0) {
            return Err(NetGenError::InvalidParams(format!(
                "size exponent must be > 1, got {exponent}"
            )));
        }
        if !(*x_min > 0.0) {
            return Err(NetGenError::InvalidParams(format!(
                "size x_min must be > 0, got {x_min}"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGenParams {
    pub n_banks: usize,
    pub n_assets: usize,
    /// Expected number of distinct assets in a bank's portfolio
    /// (diversification).
    pub bank_avg_degree: f64,
    pub size_dist: SizeDist,
    /// Equity as a fraction of total assets.
    pub capital_ratio: f64,
    /// Market depth of each asset as a multiple of the total system
    /// holdings of that asset. May be `f64::INFINITY` for impact-free
    /// markets.
    pub depth_factor: f64,
    pub seed: u64,
}

impl BipartiteGenParams {
    pub fn validate(&self) -> Result<(), NetGenError> {
        if self.n_banks < 1 {
            return Err(NetGenError::InvalidParams("n_banks must be >= 1".into()));
        }
        if self.n_assets < 1 {
            return Err(NetGenError::InvalidParams("n_assets must be >= 1".into()));
        }
        if !(self.bank_avg_degree >= 0.0) || self.bank_avg_degree > self.n_assets as f64 {
            return Err(NetGenError::InvalidParams(format!(
                "bank_avg_degree must lie in [0, n_assets], got {}",
                self.bank_avg_degree
            )));
        }
        // Ratio 1.0 (a debt-free bank, leverage 1) is allowed here.
        if !(self.capital_ratio > 0.0 && self.capital_ratio <= 1.0) {
            return Err(NetGenError::InvalidParams(format!(
                "capital_ratio must lie in (0, 1], got {}",
                self.capital_ratio
            )));
        }
        if !(self.depth_factor > 0.0) {
            return Err(NetGenError::InvalidParams(format!(
                "depth_factor must be > 0, got {}",
                self.depth_factor
            )));
        }
        validate_size_dist(&self.size_dist)
    }
}

// ---------------------------------------------------------------------------
// Sampling helpers
// ---------------------------------------------------------------------------

/// Bounded Pareto draw on [lo, hi] with tail exponent `alpha` (density
/// proportional to x^-alpha), via inverse CDF.
fn bounded_pareto(rng: &mut ChaCha8Rng, alpha: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(alpha > 1.0 && lo > 0.0 && hi > lo);
    let u: f64 = rng.gen();
    let a = 1.0 - alpha;
    let x = (lo.powf(a) + u * (hi.powf(a) - lo.powf(a))).powf(1.0 / a);
    x.clamp(lo, hi)
}

/// Iterate all ordered pairs (i, j), i != j, keeping each with probability
/// `p`, using geometric gap sampling so the cost is proportional to the
/// number of edges drawn.
fn sample_ordered_pairs(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: f64,
    mut emit: impl FnMut(usize, usize),
) {
    if p <= 0.0 {
        return;
    }
    let total = (n as u64) * (n as u64 - 1);
    let decode = |r: u64| -> (usize, usize) {
        let i = (r / (n as u64 - 1)) as usize;
        let jr = (r % (n as u64 - 1)) as usize;
        let j = if jr >= i { jr + 1 } else { jr };
        (i, j)
    };
    if p >= 1.0 {
        for r in 0..total {
            let (i, j) = decode(r);
            emit(i, j);
        }
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut cur: u64 = 0;
    loop {
        let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= (total - cur) as f64 {
            break;
        }
        cur += skip as u64;
        let (i, j) = decode(cur);
        emit(i, j);
        cur += 1;
        if cur >= total {
            break;
        }
    }
}

/// Choose `k` distinct values from 0..m by partial Fisher-Yates shuffle on a
/// caller-provided scratch buffer. Returns the chosen values sorted.
fn sample_distinct(
    rng: &mut ChaCha8Rng,
    scratch: &mut Vec<usize>,
    m: usize,
    k: usize,
) -> Vec<usize> {
    debug_assert!(k <= m);
    scratch.clear();
    scratch.extend(0..m);
    let mut out = Vec::with_capacity(k);
    for step in 0..k {
        let pick = rng.gen_range(step..m);
        scratch.swap(step, pick);
        out.push(scratch[step]);
    }
    out.sort_unstable();
    out
}

/// Discrete bounded power-law degree draw on [k_min, k_max]: sample the
/// continuous density and floor.
fn power_law_degree(rng: &mut ChaCha8Rng, exponent: f64, k_min: usize, k_max: usize) -> usize {
    if k_min >= k_max {
        return k_min;
    }
    let x = bounded_pareto(rng, exponent, k_min as f64, (k_max + 1) as f64);
    (x.floor() as usize).min(k_max)
}

fn bank_id(i: usize, width: usize) -> BankId {
    BankId::new(format!("B{i:0width$}"))
}

fn asset_id(k: usize, width: usize) -> AssetId {
    AssetId::new(format!("A{k:0width$}"))
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

fn draw_sizes(rng: &mut ChaCha8Rng, params_size: &SizeDist, n: usize, scale: f64) -> Vec<f64> {
    match params_size {
        SizeDist::Uniform => vec![scale; n],
        SizeDist::PowerLaw { exponent, x_min } => (0..n)
            .map(|_| scale * bounded_pareto(rng, *exponent, *x_min, *x_min * n as f64))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Interbank generation
// ---------------------------------------------------------------------------

/// Generate a directed interbank exposure network.
///
/// Each bank lends `interbank_fraction` of its total assets, split equally
/// across its outgoing edges; equity is `capital_ratio` of total assets and
/// deposits fill the residual liability. A bank that drew no borrowers keeps
/// those funds as external illiquid assets instead (logged).
pub fn gen_interbank(params: &NetGenParams) -> Result<InterbankNetwork, NetGenError> {
    params.validate()?;
    let n = params.n_banks;
    let mut rng = seed::rng_for(params.seed, &[]);

    // Adjacency as out-neighbour lists, drawn first so the edge layout only
    // depends on (n, degree parameters, seed).
    let mut out_neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    match params.degree_dist {
        DegreeDist::ErdosRenyi => {
            let p = (params.avg_degree / (n as f64 - 1.0)).min(1.0);
            sample_ordered_pairs(&mut rng, n, p, |i, j| out_neighbors[i].push(j));
        }
        DegreeDist::PowerLaw { exponent } => {
            // Lower cutoff chosen so the mean approximates avg_degree when
            // the exponent admits a finite mean.
            let k_min = if exponent > 2.0 {
                ((params.avg_degree * (exponent - 2.0) / (exponent - 1.0)).round() as usize).max(1)
            } else {
                1
            };
            let mut scratch = Vec::with_capacity(n);
            for i in 0..n {
                let k = power_law_degree(&mut rng, exponent, k_min, n - 1);
                let mut targets = sample_distinct(&mut rng, &mut scratch, n - 1, k);
                // Indices were drawn from 0..n-1 with self removed.
                for t in &mut targets {
                    if *t >= i {
                        *t += 1;
                    }
                }
                out_neighbors[i] = targets;
            }
        }
    }

    let sizes = draw_sizes(&mut rng, &params.size_dist, n, params.total_asset_scale);

    let width = id_width(n);
    let mut interbank_assets = vec![0.0; n];
    let mut borrowed = vec![0.0; n];
    let mut exposures = Vec::new();
    let mut stranded_lenders = 0usize;
    for i in 0..n {
        let target_ib = params.interbank_fraction * sizes[i];
        if target_ib <= 0.0 {
            continue;
        }
        if out_neighbors[i].is_empty() {
            // No borrowers drawn: funds stay external.
            stranded_lenders += 1;
            continue;
        }
        let per_edge = target_ib / out_neighbors[i].len() as f64;
        interbank_assets[i] = target_ib;
        for &j in &out_neighbors[i] {
            borrowed[j] += per_edge;
            exposures.push(Exposure {
                lender: bank_id(i, width),
                borrower: bank_id(j, width),
                amount: per_edge,
            });
        }
    }
    if stranded_lenders > 0 {
        log::debug!(
            "gen_interbank: {stranded_lenders} bank(s) had no lending edges; \
             interbank allocation kept as external illiquid assets"
        );
    }

    let mut banks = Vec::with_capacity(n);
    for i in 0..n {
        let total = sizes[i];
        let equity = params.capital_ratio * total;
        let mut deposits = total - equity - borrowed[i];
        if deposits < 0.0 {
            if deposits < -EPS * total.max(1.0) {
                return Err(NetGenError::Infeasible {
                    bank: bank_id(i, width),
                    deposits,
                });
            }
            deposits = 0.0;
        }
        let illiquid = total - interbank_assets[i];
        let sheet = BalanceSheet::new(
            0.0,
            illiquid,
            interbank_assets[i],
            deposits,
            borrowed[i],
            0.0,
        )?;
        banks.push(Bank::new(bank_id(i, width), sheet));
    }

    Ok(InterbankNetwork::new(banks, exposures)?)
}

// ---------------------------------------------------------------------------
// Bipartite generation
// ---------------------------------------------------------------------------

/// Generate a bipartite bank-asset holdings network.
///
/// Each bank picks a uniform random portfolio whose expected size is
/// `bank_avg_degree` (exact when the degree is an integer) and splits its
/// total assets equally across the picks. Asset depth is `depth_factor`
/// times the total system holdings of the asset.
pub fn gen_bipartite(params: &BipartiteGenParams) -> Result<BipartiteNetwork, NetGenError> {
    params.validate()?;
    let n = params.n_banks;
    let m = params.n_assets;
    let mut rng = seed::rng_for(params.seed, &[]);

    let base = params.bank_avg_degree.floor() as usize;
    let frac = params.bank_avg_degree - base as f64;

    let mut scratch = Vec::with_capacity(m);
    let mut portfolios: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut relinked = 0usize;
    for _ in 0..n {
        let mut k = base + usize::from(frac > 0.0 && rng.gen_bool(frac));
        if k == 0 {
            // Degenerate-diversification guard: every bank holds something.
            relinked += 1;
            k = 1;
        }
        portfolios.push(sample_distinct(&mut rng, &mut scratch, m, k.min(m)));
    }
    if relinked > 0 {
        log::debug!("gen_bipartite: {relinked} bank(s) relinked to one random asset");
    }

    let sizes = draw_sizes(&mut rng, &params.size_dist, n, 1.0);

    let bw = id_width(n);
    let aw = id_width(m);
    let mut holdings = Vec::new();
    let mut total_units = vec![0.0; m];
    let mut banks = Vec::with_capacity(n);
    for i in 0..n {
        let total = sizes[i];
        let per_asset = total / portfolios[i].len() as f64;
        for &k in &portfolios[i] {
            total_units[k] += per_asset;
            holdings.push(Holding {
                bank: bank_id(i, bw),
                asset: asset_id(k, aw),
                units: per_asset,
            });
        }
        let equity = params.capital_ratio * total;
        let sheet = BalanceSheet::external_only(0.0, total, total - equity)?;
        banks.push(Bank::new(bank_id(i, bw), sheet));
    }

    let assets = (0..m)
        .map(|k| {
            let depth = if total_units[k] > 0.0 {
                params.depth_factor * total_units[k]
            } else {
                // Unheld asset: depth is irrelevant to dynamics but must be
                // positive.
                params.depth_factor
            };
            Asset::new(asset_id(k, aw), depth)
        })
        .collect();

    Ok(BipartiteNetwork::new(banks, assets, holdings)?)
}
