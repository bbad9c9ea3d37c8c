//! C ABI over the contagion simulation library.
//!
//! Conventions:
//! - Networks are opaque handles created by the `*_generate`, `*_load`, or
//!   `*_synthetic_eba` constructors and released with the matching
//!   `*_free`. Handles are not thread-safe while being mutated.
//! - Every fallible function returns a status code: 0 success, 1 invalid
//!   input, 2 runtime failure, 3 null pointer. On failure,
//!   [`contagion_last_error`] returns a message for the calling thread,
//!   valid until the next FFI call on that thread.
//! - Banks and assets are addressed by their index in the handle (stable,
//!   construction order); `*_bank_id` / `*_asset_id` copy the string id.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use contagion::cascade;
use contagion::clearing::{self, ClearingProblem};
use contagion::firesale::{self, FiresaleConfig, ImpactKind, Shock};
use contagion::io;
use contagion::model::{BankStatus, BipartiteNetwork, InterbankNetwork};
use contagion::netgen::{self, BipartiteGenParams, DegreeDist, NetGenParams, SizeDist};

pub const CONTAGION_OK: i32 = 0;
pub const CONTAGION_ERR_INVALID: i32 = 1;
pub const CONTAGION_ERR_RUNTIME: i32 = 2;
pub const CONTAGION_ERR_NULL: i32 = 3;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: CONTAGION_ERR_INVALID,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: CONTAGION_ERR_RUNTIME,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure {
            code: CONTAGION_ERR_NULL,
            message: format!("null pointer: {what}"),
        }
    }
}

impl From<netgen::NetGenError> for Failure {
    fn from(e: netgen::NetGenError) -> Self {
        match e {
            netgen::NetGenError::Infeasible { .. } => Failure::runtime(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<cascade::CascadeError> for Failure {
    fn from(e: cascade::CascadeError) -> Self {
        match e {
            cascade::CascadeError::GenerationExhausted { .. } => Failure::runtime(e.to_string()),
            cascade::CascadeError::NetGen(inner) => inner.into(),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<clearing::ClearingError> for Failure {
    fn from(e: clearing::ClearingError) -> Self {
        match e {
            clearing::ClearingError::NonConvergence { .. } => Failure::runtime(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

impl From<firesale::FiresaleError> for Failure {
    fn from(e: firesale::FiresaleError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        match e {
            io::IoError::Io { .. } => Failure::runtime(e.to_string()),
            _ => Failure::invalid(e.to_string()),
        }
    }
}

/// Run an FFI body, converting failures and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => CONTAGION_OK,
        Ok(Err(failure)) => {
            set_error(failure.message);
            failure.code
        }
        Err(_) => {
            set_error("internal panic".to_string());
            CONTAGION_ERR_RUNTIME
        }
    }
}

unsafe fn path_arg(ptr: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::invalid(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn copy_id(id: &str, buf: *mut c_char, buf_len: usize) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(Failure::null("buffer"));
    }
    let bytes = id.as_bytes();
    if bytes.len() + 1 > buf_len {
        return Err(Failure::invalid(format!(
            "buffer of {buf_len} bytes too small for id of {} bytes plus NUL",
            bytes.len()
        )));
    }
    unsafe {
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    Ok(())
}

fn size_dist(exponent: f64) -> SizeDist {
    if exponent > 0.0 {
        SizeDist::PowerLaw {
            exponent,
            x_min: 1.0,
        }
    } else {
        SizeDist::Uniform
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn contagion_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread. Valid until the next FFI
/// call from the same thread.
#[no_mangle]
pub extern "C" fn contagion_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// ---------------------------------------------------------------------------
// Interbank networks
// ---------------------------------------------------------------------------

/// Opaque interbank exposure network.
pub struct ContagionInterbank(InterbankNetwork);

/// Opaque bipartite bank-asset network.
pub struct ContagionBipartite(BipartiteNetwork);

/// Terminal summary of one contagion run.
#[repr(C)]
#[derive(Default, Clone, Copy)]
pub struct ContagionCascadeStats {
    pub n_defaults: u32,
    pub rounds: u32,
    pub fraction_defaulted: f64,
    pub total_equity_loss: f64,
    pub converged: bool,
}

/// Monte Carlo probability and extent of contagion. `extent` is NaN when
/// no trial was systemic.
#[repr(C)]
#[derive(Default, Clone, Copy)]
pub struct ContagionMonteCarloStats {
    pub probability: f64,
    pub extent: f64,
    pub trials: u32,
}

/// Generate an interbank network. `degree_exponent <= 0` selects the
/// homogeneous random graph; positive values select the power-law degree
/// construction with that exponent. `size_exponent` works the same way for
/// bank sizes.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn contagion_interbank_generate(
    n_banks: u32,
    avg_degree: f64,
    degree_exponent: f64,
    size_exponent: f64,
    capital_ratio: f64,
    interbank_fraction: f64,
    total_asset_scale: f64,
    seed: u64,
    out: *mut *mut ContagionInterbank,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let params = NetGenParams {
            n_banks: n_banks as usize,
            avg_degree,
            degree_dist: if degree_exponent > 0.0 {
                DegreeDist::PowerLaw {
                    exponent: degree_exponent,
                }
            } else {
                DegreeDist::ErdosRenyi
            },
            size_dist: size_dist(size_exponent),
            capital_ratio,
            interbank_fraction,
            total_asset_scale,
            seed,
        };
        let net = netgen::gen_interbank(&params)?;
        *out = Box::into_raw(Box::new(ContagionInterbank(net)));
        Ok(())
    })
}

/// Load an interbank network from `banks.csv` plus an optional
/// `exposures.csv` (NULL for an edgeless network).
///
/// # Safety
/// Path pointers must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_interbank_load(
    banks_path: *const c_char,
    exposures_path: *const c_char,
    out: *mut *mut ContagionInterbank,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let paths = io::NetworkPaths {
            banks: path_arg(banks_path, "banks_path")?,
            exposures: if exposures_path.is_null() {
                None
            } else {
                Some(path_arg(exposures_path, "exposures_path")?)
            },
            holdings: None,
            assets: None,
        };
        match io::load_network(&paths)? {
            io::LoadedNetwork::Interbank(net) => {
                *out = Box::into_raw(Box::new(ContagionInterbank(net)));
                Ok(())
            }
            io::LoadedNetwork::Bipartite(_) => {
                Err(Failure::invalid("files describe a bipartite network"))
            }
        }
    })
}

/// # Safety
/// `net` must come from a `contagion_interbank_*` constructor and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn contagion_interbank_free(net: *mut ContagionInterbank) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of banks, or 0 for a null handle.
///
/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn contagion_interbank_n_banks(net: *const ContagionInterbank) -> u32 {
    net.as_ref().map_or(0, |n| n.0.n_banks() as u32)
}

/// Copy the id of the bank at `index` into `buf` (NUL-terminated).
///
/// # Safety
/// `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn contagion_interbank_bank_id(
    net: *const ContagionInterbank,
    index: u32,
    buf: *mut c_char,
    buf_len: usize,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| Failure::null("net"))?;
        let bank = net
            .0
            .banks()
            .get(index as usize)
            .ok_or_else(|| Failure::invalid(format!("bank index {index} out of range")))?;
        copy_id(bank.id.as_str(), buf, buf_len)
    })
}

/// Default the bank at `shocked_index` (wiping its assets) and run the
/// loss cascade with the given recovery rate on defaulted exposures.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_cascade_run(
    net: *const ContagionInterbank,
    shocked_index: u32,
    recovery_rate: f64,
    out: *mut ContagionCascadeStats,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| Failure::null("net"))?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let bank =
            net.0.banks().get(shocked_index as usize).ok_or_else(|| {
                Failure::invalid(format!("bank index {shocked_index} out of range"))
            })?;
        let config = cascade::CascadeConfig {
            recovery_rate,
            ..cascade::CascadeConfig::default()
        };
        let result =
            cascade::run_cascade(cascade::shock_bank_with(&net.0, &bank.id.clone(), config)?);
        *out = ContagionCascadeStats {
            n_defaults: result.defaulted_ids.len() as u32,
            rounds: result.rounds as u32,
            fraction_defaulted: result.fraction_defaulted,
            total_equity_loss: result.total_equity_loss,
            converged: result.converged,
        };
        Ok(())
    })
}

/// Monte Carlo contagion statistics: regenerate a network per trial, shock
/// one uniformly random bank, and run the cascade. Parameters mirror
/// [`contagion_interbank_generate`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_monte_carlo(
    n_banks: u32,
    avg_degree: f64,
    degree_exponent: f64,
    size_exponent: f64,
    capital_ratio: f64,
    interbank_fraction: f64,
    total_asset_scale: f64,
    trials: u32,
    systemic_threshold: f64,
    seed: u64,
    out: *mut ContagionMonteCarloStats,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let params = NetGenParams {
            n_banks: n_banks as usize,
            avg_degree,
            degree_dist: if degree_exponent > 0.0 {
                DegreeDist::PowerLaw {
                    exponent: degree_exponent,
                }
            } else {
                DegreeDist::ErdosRenyi
            },
            size_dist: size_dist(size_exponent),
            capital_ratio,
            interbank_fraction,
            total_asset_scale,
            seed,
        };
        let stats = cascade::monte_carlo(&params, trials as usize, systemic_threshold, seed)?;
        *out = ContagionMonteCarloStats {
            probability: stats.probability,
            extent: stats.extent.unwrap_or(f64::NAN),
            trials: stats.trials as u32,
        };
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Clearing
// ---------------------------------------------------------------------------

/// Solve the self-consistent settlement problem for `n` banks.
/// `liabilities` is row-major n-by-n (`liabilities[i*n + j]` owed by `i` to
/// `j`); `externals` has length `n`. `payments_out` (length `n`) receives
/// the greatest clearing vector; `equity_out` and `defaulted_out` are
/// optional (pass NULL to skip).
///
/// # Safety
/// All non-null pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn contagion_clearing_solve(
    n: u32,
    liabilities: *const f64,
    externals: *const f64,
    payments_out: *mut f64,
    equity_out: *mut f64,
    defaulted_out: *mut u8,
) -> i32 {
    guard(|| {
        let n = n as usize;
        if liabilities.is_null() || externals.is_null() {
            return Err(Failure::null("liabilities/externals"));
        }
        if payments_out.is_null() {
            return Err(Failure::null("payments_out"));
        }
        let flat = std::slice::from_raw_parts(liabilities, n * n);
        let matrix: Vec<Vec<f64>> = (0..n).map(|i| flat[i * n..(i + 1) * n].to_vec()).collect();
        let external = std::slice::from_raw_parts(externals, n).to_vec();
        let problem = ClearingProblem::from_amounts(matrix, external)?;
        let solution = clearing::clearing_vector(&problem)?;
        std::ptr::copy_nonoverlapping(solution.payments.as_ptr(), payments_out, n);
        if !equity_out.is_null() {
            std::ptr::copy_nonoverlapping(solution.equity_after.as_ptr(), equity_out, n);
        }
        if !defaulted_out.is_null() {
            for (i, id) in solution.ids.iter().enumerate() {
                *defaulted_out.add(i) = u8::from(solution.defaults.contains(id));
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// Bipartite networks and fire sales
// ---------------------------------------------------------------------------

/// Initial fire-sale stress scenario.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ContagionShockKind {
    /// Devalue the asset at `target_index` by `haircut`.
    AssetDevaluation = 0,
    /// Default the bank at `target_index`.
    BankDefault = 1,
    /// Devalue one seeded-random asset by `haircut`.
    RandomAsset = 2,
    /// Default one seeded-random solvent bank.
    RandomBank = 3,
}

/// Price-impact functional form.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ContagionImpact {
    Linear = 0,
    Exponential = 1,
}

/// Generate a bipartite bank-asset network (`size_exponent <= 0` for
/// homogeneous sizes).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_generate(
    n_banks: u32,
    n_assets: u32,
    bank_avg_degree: f64,
    size_exponent: f64,
    capital_ratio: f64,
    depth_factor: f64,
    seed: u64,
    out: *mut *mut ContagionBipartite,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let params = BipartiteGenParams {
            n_banks: n_banks as usize,
            n_assets: n_assets as usize,
            bank_avg_degree,
            size_dist: size_dist(size_exponent),
            capital_ratio,
            depth_factor,
            seed,
        };
        let net = netgen::gen_bipartite(&params)?;
        *out = Box::into_raw(Box::new(ContagionBipartite(net)));
        Ok(())
    })
}

/// Synthetic 90-bank, 140-asset dataset (see the library docs; this is not
/// real supervisory data).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_synthetic_eba(
    seed: u64,
    out: *mut *mut ContagionBipartite,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let net = io::synthetic::gen_synthetic_eba(seed);
        *out = Box::into_raw(Box::new(ContagionBipartite(net)));
        Ok(())
    })
}

/// Load a bipartite network from `banks.csv`, `holdings.csv`, and
/// `assets.csv`.
///
/// # Safety
/// Path pointers must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_load(
    banks_path: *const c_char,
    holdings_path: *const c_char,
    assets_path: *const c_char,
    out: *mut *mut ContagionBipartite,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let paths = io::NetworkPaths {
            banks: path_arg(banks_path, "banks_path")?,
            exposures: None,
            holdings: Some(path_arg(holdings_path, "holdings_path")?),
            assets: Some(path_arg(assets_path, "assets_path")?),
        };
        match io::load_network(&paths)? {
            io::LoadedNetwork::Bipartite(net) => {
                *out = Box::into_raw(Box::new(ContagionBipartite(net)));
                Ok(())
            }
            io::LoadedNetwork::Interbank(_) => {
                Err(Failure::invalid("files describe an interbank network"))
            }
        }
    })
}

/// # Safety
/// `net` must come from a `contagion_bipartite_*` constructor and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_free(net: *mut ContagionBipartite) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_n_banks(net: *const ContagionBipartite) -> u32 {
    net.as_ref().map_or(0, |n| n.0.n_banks() as u32)
}

/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_n_assets(net: *const ContagionBipartite) -> u32 {
    net.as_ref().map_or(0, |n| n.0.n_assets() as u32)
}

/// Copy the id of the bank at `index` into `buf` (NUL-terminated).
///
/// # Safety
/// `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_bank_id(
    net: *const ContagionBipartite,
    index: u32,
    buf: *mut c_char,
    buf_len: usize,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| Failure::null("net"))?;
        let bank = net
            .0
            .banks()
            .get(index as usize)
            .ok_or_else(|| Failure::invalid(format!("bank index {index} out of range")))?;
        copy_id(bank.id.as_str(), buf, buf_len)
    })
}

/// Copy the id of the asset at `index` into `buf` (NUL-terminated).
///
/// # Safety
/// `net` must be a live handle; `buf` must hold `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_asset_id(
    net: *const ContagionBipartite,
    index: u32,
    buf: *mut c_char,
    buf_len: usize,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| Failure::null("net"))?;
        let asset = net
            .0
            .assets()
            .get(index as usize)
            .ok_or_else(|| Failure::invalid(format!("asset index {index} out of range")))?;
        copy_id(asset.id.as_str(), buf, buf_len)
    })
}

/// Guarantee the bank at `index` against default and liquidation (bail-out
/// padding). Mutates the handle.
///
/// # Safety
/// `net` must be a live handle with no concurrent use.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_pad_bank(
    net: *mut ContagionBipartite,
    index: u32,
) -> i32 {
    guard(|| {
        let net = net.as_mut().ok_or_else(|| Failure::null("net"))?;
        let bank = net
            .0
            .banks()
            .get(index as usize)
            .ok_or_else(|| Failure::invalid(format!("bank index {index} out of range")))?;
        let id = bank.id.clone();
        net.0 = contagion::intervene::pad_banks(&net.0, &[id])
            .map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Guarantee the price of the asset at `index` against endogenous
/// fire-sale impact (buy-out padding). Mutates the handle.
///
/// # Safety
/// `net` must be a live handle with no concurrent use.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_pad_asset(
    net: *mut ContagionBipartite,
    index: u32,
) -> i32 {
    guard(|| {
        let net = net.as_mut().ok_or_else(|| Failure::null("net"))?;
        let asset = net
            .0
            .assets()
            .get(index as usize)
            .ok_or_else(|| Failure::invalid(format!("asset index {index} out of range")))?;
        let id = asset.id.clone();
        net.0 = contagion::intervene::pad_assets(&net.0, &[id])
            .map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Apply the shock and run fire-sale rounds to quiescence. `target_index`
/// addresses the shocked asset or bank for the deterministic shock kinds
/// and is ignored for the random ones, which resolve from `seed`.
///
/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contagion_firesale_run(
    net: *const ContagionBipartite,
    shock_kind: ContagionShockKind,
    target_index: u32,
    haircut: f64,
    impact: ContagionImpact,
    seed: u64,
    out: *mut ContagionCascadeStats,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| Failure::null("net"))?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let shock = match shock_kind {
            ContagionShockKind::AssetDevaluation => {
                let asset = net.0.assets().get(target_index as usize).ok_or_else(|| {
                    Failure::invalid(format!("asset index {target_index} out of range"))
                })?;
                Shock::AssetDevaluation {
                    asset: asset.id.clone(),
                    haircut,
                }
            }
            ContagionShockKind::BankDefault => {
                let bank = net.0.banks().get(target_index as usize).ok_or_else(|| {
                    Failure::invalid(format!("bank index {target_index} out of range"))
                })?;
                Shock::BankDefault {
                    bank: bank.id.clone(),
                }
            }
            ContagionShockKind::RandomAsset => Shock::RandomAsset { haircut },
            ContagionShockKind::RandomBank => Shock::RandomBank,
        };
        let mut config = FiresaleConfig::new(shock, seed);
        config.impact = match impact {
            ContagionImpact::Linear => ImpactKind::Linear,
            ContagionImpact::Exponential => ImpactKind::Exponential,
        };
        let result = firesale::run_firesale(&net.0, &config)?;
        *out = ContagionCascadeStats {
            n_defaults: result.defaulted_ids.len() as u32,
            rounds: result.rounds as u32,
            fraction_defaulted: result.fraction_defaulted,
            total_equity_loss: result.total_equity_loss,
            converged: result.converged,
        };
        Ok(())
    })
}

/// Count of padded banks in the handle (sanity helper for bindings).
///
/// # Safety
/// `net` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn contagion_bipartite_n_padded(net: *const ContagionBipartite) -> u32 {
    net.as_ref().map_or(0, |n| {
        n.0.banks()
            .iter()
            .filter(|b| b.status == BankStatus::Padded)
            .count() as u32
    })
}
