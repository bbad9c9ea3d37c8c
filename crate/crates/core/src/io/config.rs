//! Flat key-value scenario configuration.
//!
//! Config files are `section.key = value` lines; `#` starts a full-line
//! comment. The flat shape keeps diffs small and parsing trivial for any
//! language.
//!
//! Seed resolution: a CLI `--seed` flag wins over the `CONTAGION_SEED`
//! environment variable, which wins over the file's `run.seed`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{IoError, NetworkPaths};
use crate::firesale::{ImpactKind, LiquidationPolicy, Shock};
use crate::intervene::Strategy;
use crate::model::{AssetId, BankId};
use crate::netgen::{BipartiteGenParams, DegreeDist, NetGenParams, SizeDist};

pub const SEED_ENV_VAR: &str = "CONTAGION_SEED";

/// Parsed but untyped configuration.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse_str(text: &str, origin: &str) -> Result<Self, IoError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(IoError::Parse {
                    file: origin.to_string(),
                    line: idx + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(IoError::Parse {
                    file: origin.to_string(),
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(IoError::Parse {
                    file: origin.to_string(),
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn parse_file(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|e| super::io_err(path, e))?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, IoError> {
        self.get(key)
            .ok_or_else(|| IoError::Config(format!("missing required key `{key}`")))
    }

    pub fn get_parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(value) => value
                .parse::<T>()
                .map(Some)
                .map_err(|_| IoError::Config(format!("key `{key}`: cannot parse `{value}`"))),
        }
    }

    pub fn require_parse<T: FromStr>(&self, key: &str) -> Result<T, IoError> {
        self.get_parse(key)?
            .ok_or_else(|| IoError::Config(format!("missing required key `{key}`")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, IoError> {
        Ok(self.get_parse(key)?.unwrap_or(default))
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, IoError> {
        match self.get(key) {
            None => Ok(None),
            Some(value) => value
                .split(',')
                .map(|part| {
                    part.trim().parse::<f64>().map_err(|_| {
                        IoError::Config(format!("key `{key}`: `{part}` is not a number"))
                    })
                })
                .collect::<Result<Vec<f64>, IoError>>()
                .map(Some),
        }
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool, IoError> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(IoError::Config(format!(
                "key `{key}`: expected true/false, got `{other}`"
            ))),
        }
    }

    /// Reject typo'd keys: everything present must be in `known`.
    pub fn ensure_known(&self, known: &[&str]) -> Result<(), IoError> {
        let known: BTreeSet<&str> = known.iter().copied().collect();
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(|k| k.as_str())
            .filter(|k| !known.contains(k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(IoError::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )))
        }
    }

    /// Canonical `key = value` text, sorted by key.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// FNV-1a hash of the canonical text, for provenance lines.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self.resolved_text().as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}

// ---------------------------------------------------------------------------
// Typed scenario configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineKind {
    Interbank,
    Clearing,
    Firesale,
    Intervene,
}

impl EngineKind {
    fn parse(value: &str) -> Result<Self, IoError> {
        match value {
            "interbank" => Ok(EngineKind::Interbank),
            "clearing" => Ok(EngineKind::Clearing),
            "firesale" => Ok(EngineKind::Firesale),
            "intervene" => Ok(EngineKind::Intervene),
            other => Err(IoError::Config(format!("unknown engine `{other}`"))),
        }
    }
}

/// Where the network comes from: exactly one source is configured.
#[derive(Debug, Clone)]
pub enum NetworkSource {
    GeneratedInterbank(NetGenParams),
    GeneratedBipartite(BipartiteGenParams),
    /// Synthetic 90-bank, 140-asset bank-asset data.
    SyntheticEba,
    Loaded(NetworkPaths),
    LoadedClearing {
        liabilities: PathBuf,
        externals: PathBuf,
    },
}

/// Fully resolved run configuration shared by every CLI command.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub engine: EngineKind,
    pub seed: u64,
    pub trials: usize,
    pub systemic_threshold: f64,
    pub out_dir: PathBuf,
    pub network: NetworkSource,
    /// Resolved raw entries (after overrides), for provenance and
    /// command-specific keys.
    pub raw: RawConfig,
}

/// Override precedence: CLI flag beats `CONTAGION_SEED`, which beats the
/// config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

fn parse_degree_dist(value: &str) -> Result<DegreeDist, IoError> {
    if value == "erdos-renyi" {
        return Ok(DegreeDist::ErdosRenyi);
    }
    if let Some(rest) = value.strip_prefix("powerlaw:") {
        let exponent: f64 = rest
            .parse()
            .map_err(|_| IoError::Config(format!("bad powerlaw exponent `{rest}`")))?;
        return Ok(DegreeDist::PowerLaw { exponent });
    }
    Err(IoError::Config(format!(
        "degree_dist must be `erdos-renyi` or `powerlaw:<exponent>`, got `{value}`"
    )))
}

fn parse_size_dist(value: &str) -> Result<SizeDist, IoError> {
    if value == "uniform" {
        return Ok(SizeDist::Uniform);
    }
    if let Some(rest) = value.strip_prefix("powerlaw:") {
        let mut parts = rest.split(':');
        let exponent: f64 = parts
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| IoError::Config(format!("bad powerlaw exponent in `{value}`")))?;
        let x_min = match parts.next() {
            None => 1.0,
            Some(x) => x
                .parse()
                .map_err(|_| IoError::Config(format!("bad x_min in `{value}`")))?,
        };
        return Ok(SizeDist::PowerLaw { exponent, x_min });
    }
    Err(IoError::Config(format!(
        "size_dist must be `uniform` or `powerlaw:<exponent>[:<x_min>]`, got `{value}`"
    )))
}

pub fn parse_impact_kind(value: &str) -> Result<ImpactKind, IoError> {
    match value {
        "linear" => Ok(ImpactKind::Linear),
        "exponential" => Ok(ImpactKind::Exponential),
        other => Err(IoError::Config(format!("unknown impact kind `{other}`"))),
    }
}

pub fn parse_policy(value: &str) -> Result<LiquidationPolicy, IoError> {
    if value == "on-default" {
        return Ok(LiquidationPolicy::OnDefault);
    }
    if let Some(rest) = value.strip_prefix("leverage-target:") {
        let max_leverage: f64 = rest
            .parse()
            .map_err(|_| IoError::Config(format!("bad leverage target `{rest}`")))?;
        return Ok(LiquidationPolicy::LeverageTarget { max_leverage });
    }
    Err(IoError::Config(format!(
        "policy must be `on-default` or `leverage-target:<max>`, got `{value}`"
    )))
}

pub fn parse_strategies(value: &str) -> Result<Vec<Strategy>, IoError> {
    value
        .split(',')
        .map(|part| match part.trim() {
            "random" => Ok(Strategy::Random),
            "size" => Ok(Strategy::Size),
            "systemicness" => Ok(Strategy::Systemicness),
            "overlap" => Ok(Strategy::OverlapCentrality),
            "volume" => Ok(Strategy::AssetVolume),
            other => Err(IoError::Config(format!("unknown strategy `{other}`"))),
        })
        .collect()
}

/// Shock spec from `shock.*` keys.
pub fn parse_shock(raw: &RawConfig) -> Result<Shock, IoError> {
    let kind = raw.require("shock.kind")?;
    match kind {
        "asset" => Ok(Shock::AssetDevaluation {
            asset: AssetId::new(raw.require("shock.asset")?),
            haircut: raw.require_parse("shock.haircut")?,
        }),
        "bank" => Ok(Shock::BankDefault {
            bank: BankId::new(raw.require("shock.bank")?),
        }),
        "random-asset" => Ok(Shock::RandomAsset {
            haircut: raw.require_parse("shock.haircut")?,
        }),
        "random-bank" => Ok(Shock::RandomBank),
        other => Err(IoError::Config(format!("unknown shock kind `{other}`"))),
    }
}

impl ScenarioConfig {
    /// Apply overrides, resolve the seed chain, and type-check the common
    /// keys. `raw` is updated so `resolved_text()` reflects the run
    /// exactly.
    pub fn resolve(mut raw: RawConfig, overrides: &Overrides) -> Result<Self, IoError> {
        let engine = EngineKind::parse(raw.require("engine")?)?;

        let seed = match overrides.seed {
            Some(seed) => seed,
            None => match std::env::var(SEED_ENV_VAR) {
                Ok(value) => value.parse().map_err(|_| {
                    IoError::Config(format!("{SEED_ENV_VAR}=`{value}` is not a seed"))
                })?,
                Err(_) => raw.require_parse("run.seed")?,
            },
        };
        raw.set("run.seed", seed);

        let trials = match overrides.trials {
            Some(t) => t,
            None => raw.get_or("run.trials", 1usize)?,
        };
        raw.set("run.trials", trials);

        let out_dir = match &overrides.out_dir {
            Some(dir) => dir.clone(),
            None => PathBuf::from(raw.get("output.dir").unwrap_or("out")),
        };
        // The output location is not part of the run's identity: resolved
        // snapshots and config hashes must not depend on where results
        // land, so that runs into different directories stay byte-equal.
        raw.remove("output.dir");

        let systemic_threshold = raw.get_or("run.systemic_threshold", 0.05)?;
        let network = Self::network_source(&raw, seed)?;

        Ok(ScenarioConfig {
            engine,
            seed,
            trials,
            systemic_threshold,
            out_dir,
            network,
            raw,
        })
    }

    fn network_source(raw: &RawConfig, seed: u64) -> Result<NetworkSource, IoError> {
        let kind = raw.require("network.kind")?;
        let generated = matches!(
            kind,
            "generated-interbank" | "generated-bipartite" | "synthetic-eba"
        );
        let has_input_keys = raw.entries.keys().any(|k| k.starts_with("input."));
        let has_netgen_keys = raw.entries.keys().any(|k| k.starts_with("netgen."));
        if generated && has_input_keys {
            return Err(IoError::Config(
                "a generated network cannot also name input files".into(),
            ));
        }
        if !generated && has_netgen_keys {
            return Err(IoError::Config(
                "a loaded network cannot also set netgen parameters".into(),
            ));
        }
        match kind {
            "generated-interbank" => Ok(NetworkSource::GeneratedInterbank(NetGenParams {
                n_banks: raw.require_parse("netgen.n_banks")?,
                avg_degree: raw.require_parse("netgen.avg_degree")?,
                degree_dist: parse_degree_dist(
                    raw.get("netgen.degree_dist").unwrap_or("erdos-renyi"),
                )?,
                size_dist: parse_size_dist(raw.get("netgen.size_dist").unwrap_or("uniform"))?,
                capital_ratio: raw.require_parse("netgen.capital_ratio")?,
                interbank_fraction: raw.require_parse("netgen.interbank_fraction")?,
                total_asset_scale: raw.get_or("netgen.total_asset_scale", 1.0)?,
                seed,
            })),
            "generated-bipartite" => Ok(NetworkSource::GeneratedBipartite(BipartiteGenParams {
                n_banks: raw.require_parse("netgen.n_banks")?,
                n_assets: raw.require_parse("netgen.n_assets")?,
                bank_avg_degree: raw.require_parse("netgen.bank_avg_degree")?,
                size_dist: parse_size_dist(raw.get("netgen.size_dist").unwrap_or("uniform"))?,
                capital_ratio: raw.require_parse("netgen.capital_ratio")?,
                depth_factor: raw.require_parse("netgen.depth_factor")?,
                seed,
            })),
            "synthetic-eba" => Ok(NetworkSource::SyntheticEba),
            "loaded" => {
                if raw.get("input.liabilities").is_some() || raw.get("input.externals").is_some() {
                    return Ok(NetworkSource::LoadedClearing {
                        liabilities: PathBuf::from(raw.require("input.liabilities")?),
                        externals: PathBuf::from(raw.require("input.externals")?),
                    });
                }
                Ok(NetworkSource::Loaded(NetworkPaths {
                    banks: PathBuf::from(raw.require("input.banks")?),
                    exposures: raw.get("input.exposures").map(PathBuf::from),
                    holdings: raw.get("input.holdings").map(PathBuf::from),
                    assets: raw.get("input.assets").map(PathBuf::from),
                }))
            }
            other => Err(IoError::Config(format!(
                "network.kind must be generated-interbank, generated-bipartite, synthetic-eba, \
                 or loaded; got `{other}`"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_text() -> &'static str {
        "engine = interbank\n\
         network.kind = generated-interbank\n\
         netgen.n_banks = 100\n\
         netgen.avg_degree = 4\n\
         netgen.capital_ratio = 0.04\n\
         netgen.interbank_fraction = 0.2\n\
         run.seed = 7\n\
         run.trials = 20\n\
         output.dir = out/test\n"
    }

    #[test]
    fn parses_and_resolves() {
        let raw = RawConfig::parse_str(base_text(), "test.cfg").unwrap();
        let config = ScenarioConfig::resolve(raw, &Overrides::default()).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.trials, 20);
        match &config.network {
            NetworkSource::GeneratedInterbank(p) => {
                assert_eq!(p.n_banks, 100);
                assert_eq!(p.seed, 7);
            }
            _ => panic!("wrong source"),
        }
    }

    #[test]
    fn cli_override_beats_file() {
        let raw = RawConfig::parse_str(base_text(), "test.cfg").unwrap();
        let overrides = Overrides {
            seed: Some(99),
            trials: Some(5),
            out_dir: None,
        };
        let config = ScenarioConfig::resolve(raw, &overrides).unwrap();
        assert_eq!(config.seed, 99);
        assert_eq!(config.trials, 5);
        assert!(config.raw.resolved_text().contains("run.seed = 99"));
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = "engine = interbank\nnetwork.kind = synthetic-eba\n";
        let raw = RawConfig::parse_str(text, "test.cfg").unwrap();
        let err = ScenarioConfig::resolve(raw, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("run.seed"));
    }

    #[test]
    fn mixed_sources_rejected() {
        let text =
            "engine = firesale\nnetwork.kind = synthetic-eba\ninput.banks = x.csv\nrun.seed = 1\n";
        let raw = RawConfig::parse_str(text, "test.cfg").unwrap();
        assert!(ScenarioConfig::resolve(raw, &Overrides::default()).is_err());
    }

    #[test]
    fn duplicate_and_malformed_lines_are_named() {
        let err = RawConfig::parse_str("a = 1\na = 2\n", "dup.cfg").unwrap_err();
        assert!(err.to_string().contains("dup.cfg:2"));
        let err = RawConfig::parse_str("not a pair\n", "bad.cfg").unwrap_err();
        assert!(err.to_string().contains("bad.cfg:1"));
    }

    #[test]
    fn resolved_text_is_canonical_and_hash_stable() {
        let raw = RawConfig::parse_str("b = 2\na = 1\n", "x.cfg").unwrap();
        assert_eq!(raw.resolved_text(), "a = 1\nb = 2\n");
        let raw2 = RawConfig::parse_str("a = 1\nb = 2\n", "y.cfg").unwrap();
        assert_eq!(raw.hash(), raw2.hash());
    }

    #[test]
    fn shock_and_enum_parsing() {
        let mut raw = RawConfig::default();
        raw.set("shock.kind", "asset");
        raw.set("shock.asset", "A007");
        raw.set("shock.haircut", "0.3");
        match parse_shock(&raw).unwrap() {
            Shock::AssetDevaluation { asset, haircut } => {
                assert_eq!(asset.as_str(), "A007");
                assert_eq!(haircut, 0.3);
            }
            _ => panic!("wrong shock"),
        }
        assert!(parse_impact_kind("exponential").is_ok());
        assert!(parse_impact_kind("bogus").is_err());
        assert!(matches!(
            parse_policy("leverage-target:20").unwrap(),
            LiquidationPolicy::LeverageTarget { .. }
        ));
        assert_eq!(parse_strategies("random,size").unwrap().len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let raw = RawConfig::parse_str("a = 1\nzz = 3\n", "x.cfg").unwrap();
        assert!(raw.ensure_known(&["a"]).is_err());
        assert!(raw.ensure_known(&["a", "zz"]).is_ok());
    }
}
