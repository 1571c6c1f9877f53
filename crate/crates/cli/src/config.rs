//! Run configuration: a TOML document, validated into library types.
//!
//! ```toml
//! version = 1
//!
//! [scenario]
//! beta = [1.0, 1.0]        # required
//! alpha = 0.0
//! alpha_hat = 0.0          # defaults to alpha
//! horizon = 100
//! norm = "l2"              # l1 | l2 | linf
//!
//! [noise]
//! sigma2 = 0.0
//! seed = 0
//!
//! [init]
//! kind = "ridge"           # ridge | warmup
//! rho = 1e8
//! beta0 = [0.9, 1.2]       # defaults to zeros
//!
//! [strategy]
//! kind = "round-robin"     # round-robin | popularity | correlation | orthogonal | fixed | two-good
//! recompute = true
//! bundle = [1.0, 1.0]      # fixed
//! i = 0                    # two-good, 0-based
//! j = 1
//! ratio = 0.5              # two-good; omitted means the no-learning ratio
//!
//! [state]
//! info = [[1.0, 0.0], [0.0, 1.0]]   # information matrix for design/market; identity by default
//!
//! [market]
//! gamma = [0.0, 0.0]
//! delta = 1.0
//! norm = "l1"
//! regime_premise = false
//! stance = "pessimistic"   # optional: pessimistic | optimistic
//! xi = -0.1
//! ```

use std::fmt;
use std::path::Path;

use bundlelearn::design::Norm;
use bundlelearn::market::{MarketConfig, PriorBelief, Stance};
use bundlelearn::{Init, Matrix, NoiseModel, PrecisionState, Scenario, Strategy, StrategyKind};
use serde::Deserialize;
use thiserror::Error;

pub const CONFIG_VERSION: i64 = 1;
pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_RHO: f64 = 1e8;

#[derive(Debug, Error, PartialEq)]
pub struct ConfigError {
    /// Dotted location inside the document; empty for whole-file problems.
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.reason)
        } else {
            write!(f, "{}: {}", self.path, self.reason)
        }
    }
}

fn bad(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        reason: reason.into(),
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    version: Option<i64>,
    scenario: Option<RawScenario>,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    init: RawInit,
    #[serde(default)]
    strategy: RawStrategy,
    #[serde(default)]
    state: RawState,
    #[serde(default)]
    market: RawMarket,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    beta: Option<Vec<f64>>,
    alpha: Option<f64>,
    alpha_hat: Option<f64>,
    horizon: Option<i64>,
    norm: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma2: Option<f64>,
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInit {
    kind: Option<String>,
    rho: Option<f64>,
    beta0: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: Option<String>,
    recompute: Option<bool>,
    bundle: Option<Vec<f64>>,
    i: Option<i64>,
    j: Option<i64>,
    ratio: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawState {
    info: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    gamma: Option<Vec<f64>>,
    delta: Option<f64>,
    norm: Option<String>,
    regime_premise: Option<bool>,
    stance: Option<String>,
    xi: Option<f64>,
}

/// Fully validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: Scenario<f64>,
    pub strategy: Strategy<f64>,
    pub market: MarketConfig<f64>,
    pub prior: Option<PriorBelief<f64>>,
    /// Information matrix for the design and market commands.
    pub info: Matrix<f64>,
}

impl RunConfig {
    /// Learner state built from `[state].info` and the initial estimate.
    pub fn state(&self) -> Result<PrecisionState<f64>, ConfigError> {
        PrecisionState::from_info(self.info.clone(), self.scenario.init.beta0().to_vec(), self.scenario.alpha_hat)
            .map_err(|e| bad("state.info", e.to_string()))
    }
}

pub fn parse_norm(s: &str, path: &str) -> Result<Norm, ConfigError> {
    match s {
        "l1" => Ok(Norm::L1),
        "l2" => Ok(Norm::L2),
        "linf" => Ok(Norm::LInf),
        other => Err(bad(path, format!("unknown norm {other:?} (expected l1, l2 or linf)"))),
    }
}

/// Strategy name as used in configs and on the command line.
pub fn parse_strategy_kind(s: &str) -> Result<&'static str, ConfigError> {
    const KINDS: [&str; 6] = ["round-robin", "popularity", "correlation", "orthogonal", "fixed", "two-good"];
    KINDS
        .iter()
        .find(|k| **k == s)
        .copied()
        .ok_or_else(|| bad("strategy.kind", format!("unknown strategy {s:?} (expected one of {})", KINDS.join(", "))))
}

fn finite(v: &[f64], path: &str) -> Result<(), ConfigError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(bad(path, "values must be finite"))
    }
}

fn index(v: Option<i64>, n: usize, path: &str) -> Result<usize, ConfigError> {
    let v = v.ok_or_else(|| bad(path, "required for the two-good strategy"))?;
    if v < 0 || v as usize >= n {
        return Err(bad(path, format!("must be in 0..{n}")));
    }
    Ok(v as usize)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, None)
}

/// Parses and validates a document. `strategy_override` replaces
/// `[strategy].kind`.
pub fn parse_config(text: &str, strategy_override: Option<&str>) -> Result<RunConfig, ConfigError> {
    let doc: RawDoc = toml::from_str(text).map_err(|e| bad("", e.message().to_string()))?;
    if let Some(v) = doc.version {
        if v != CONFIG_VERSION {
            return Err(bad("version", format!("unsupported version {v} (expected {CONFIG_VERSION})")));
        }
    }
    let sc = doc.scenario.ok_or_else(|| bad("scenario", "section required"))?;
    let beta = sc.beta.ok_or_else(|| bad("scenario.beta", "required"))?;
    if beta.is_empty() {
        return Err(bad("scenario.beta", "needs at least one good"));
    }
    finite(&beta, "scenario.beta")?;
    let n = beta.len();
    let alpha = sc.alpha.unwrap_or(0.0);
    let alpha_hat = sc.alpha_hat.unwrap_or(alpha);
    finite(&[alpha], "scenario.alpha")?;
    finite(&[alpha_hat], "scenario.alpha_hat")?;
    let horizon = match sc.horizon {
        None => DEFAULT_HORIZON,
        Some(h) if h >= 1 => h as usize,
        Some(_) => return Err(bad("scenario.horizon", "must be ≥ 1")),
    };
    let norm = parse_norm(sc.norm.as_deref().unwrap_or("l2"), "scenario.norm")?;

    let sigma2 = doc.noise.sigma2.unwrap_or(0.0);
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(bad("noise.sigma2", "must be ≥ 0"));
    }
    let noise = NoiseModel::new(sigma2, doc.noise.seed.unwrap_or(0)).map_err(|e| bad("noise", e.to_string()))?;

    let rho = doc.init.rho.unwrap_or(DEFAULT_RHO);
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(bad("init.rho", "must be > 0"));
    }
    let beta0 = doc.init.beta0.unwrap_or_else(|| vec![0.0; n]);
    if beta0.len() != n {
        return Err(bad("init.beta0", format!("has {} entries, scenario.beta has {n}", beta0.len())));
    }
    finite(&beta0, "init.beta0")?;
    let init = match doc.init.kind.as_deref().unwrap_or("ridge") {
        "ridge" => Init::Ridge { rho, beta0 },
        "warmup" => Init::Warmup { rho, beta0 },
        other => return Err(bad("init.kind", format!("unknown init {other:?} (expected ridge or warmup)"))),
    };

    let st = doc.strategy;
    let kind_name = match strategy_override {
        Some(k) => parse_strategy_kind(k)?,
        None => parse_strategy_kind(st.kind.as_deref().unwrap_or("round-robin"))?,
    };
    let kind = match kind_name {
        "round-robin" => StrategyKind::SingleRoundRobin,
        "popularity" => StrategyKind::PopularityBiased,
        "correlation" => StrategyKind::CorrelationBreaking,
        "orthogonal" => StrategyKind::OrthogonalToError,
        "fixed" => {
            let b = st.bundle.ok_or_else(|| bad("strategy.bundle", "required for the fixed strategy"))?;
            if b.len() != n {
                return Err(bad("strategy.bundle", format!("has {} entries, expected {n}", b.len())));
            }
            finite(&b, "strategy.bundle")?;
            if b.iter().all(|v| *v == 0.0) {
                return Err(bad("strategy.bundle", "must not be zero"));
            }
            StrategyKind::FixedBundle(b)
        }
        _ => {
            let i = index(st.i, n, "strategy.i")?;
            let j = index(st.j, n, "strategy.j")?;
            if i == j {
                return Err(bad("strategy.j", "must differ from strategy.i"));
            }
            if let Some(r) = st.ratio {
                finite(&[r], "strategy.ratio")?;
            }
            StrategyKind::TwoGoodTargeted { i, j, ratio: st.ratio }
        }
    };
    let strategy = Strategy {
        kind,
        recompute: st.recompute.unwrap_or(true),
    };

    let info = match doc.state.info {
        None => Matrix::identity(n),
        Some(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(bad("state.info", format!("must be {n} x {n}")));
            }
            rows.iter().try_for_each(|r| finite(r, "state.info"))?;
            let m = Matrix::from_rows(&rows).expect("checked square");
            if m.asymmetry() > 1e-12 {
                return Err(bad("state.info", "must be symmetric"));
            }
            m
        }
    };

    let mk = doc.market;
    let gamma = mk.gamma.unwrap_or_else(|| vec![0.0; n]);
    if gamma.len() != n {
        return Err(bad("market.gamma", format!("has {} entries, expected {n}", gamma.len())));
    }
    finite(&gamma, "market.gamma")?;
    let delta_weight = mk.delta.unwrap_or(1.0);
    if !(delta_weight > 0.0) || !delta_weight.is_finite() {
        return Err(bad("market.delta", "must be > 0"));
    }
    let market = MarketConfig {
        gamma,
        delta_weight,
        norm: parse_norm(mk.norm.as_deref().unwrap_or("l1"), "market.norm")?,
        regime_premise: mk.regime_premise.unwrap_or(false),
    };
    let prior = match mk.stance.as_deref() {
        None => None,
        Some(s) => {
            let stance = match s {
                "pessimistic" => Stance::Pessimistic,
                "optimistic" => Stance::Optimistic,
                other => return Err(bad("market.stance", format!("unknown stance {other:?}"))),
            };
            let xi = mk.xi.ok_or_else(|| bad("market.xi", "required with market.stance"))?;
            let prior = PriorBelief { stance, xi };
            prior.validate().map_err(|_| {
                bad(
                    "market.xi",
                    if stance == Stance::Pessimistic { "must be < 0 for a pessimistic stance" } else { "must be > 0 for an optimistic stance" },
                )
            })?;
            Some(prior)
        }
    };

    let scenario = Scenario {
        beta_true: beta,
        alpha,
        alpha_hat,
        noise,
        init,
        horizon,
        norm,
    };
    scenario.validate().map_err(|e| bad("scenario", e.to_string()))?;
    Ok(RunConfig {
        scenario,
        strategy,
        market,
        prior,
        info,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("[scenario]\nbeta = [1, 1]\n", None).unwrap();
        assert_eq!(c.scenario.noise.sigma2, 0.0);
        assert_eq!(c.scenario.init, Init::Ridge { rho: 1e8, beta0: vec![0.0, 0.0] });
        assert_eq!(c.scenario.horizon, 100);
        assert_eq!(c.scenario.norm, Norm::L2);
        assert_eq!(c.strategy.kind, StrategyKind::SingleRoundRobin);
        assert_eq!(c.info, Matrix::identity(2));
    }

    #[test]
    fn negative_noise_is_rejected() {
        let e = parse_config("[scenario]\nbeta = [1.0]\n[noise]\nsigma2 = -1.0\n", None).unwrap_err();
        assert_eq!(e.to_string(), "noise.sigma2: must be ≥ 0");
    }

    #[test]
    fn errors_name_their_location() {
        let cases = [
            ("[scenario]\n", "scenario.beta"),
            ("[scenario]\nbeta = [1.0]\nhorizon = 0\n", "scenario.horizon"),
            ("[scenario]\nbeta = [1.0]\n[init]\nbeta0 = [1.0, 2.0]\n", "init.beta0"),
            ("[scenario]\nbeta = [1.0, 2.0]\n[strategy]\nkind = \"two-good\"\ni = 0\nj = 0\n", "strategy.j"),
            ("[scenario]\nbeta = [1.0]\n[market]\nstance = \"optimistic\"\nxi = -1.0\n", "market.xi"),
            ("version = 2\n[scenario]\nbeta = [1.0]\n", "version"),
            ("[scenario]\nbeta = [1.0]\nnorm = \"l3\"\n", "scenario.norm"),
        ];
        for (doc, path) in cases {
            assert_eq!(parse_config(doc, None).unwrap_err().path, path, "{doc}");
        }
        let unknown = parse_config("[scenario]\nbeta = [1.0]\nbogus = 1\n", None).unwrap_err();
        assert!(unknown.reason.contains("bogus"));
    }

    #[test]
    fn override_replaces_kind() {
        let c = parse_config("[scenario]\nbeta = [1.0, 2.0]\n", Some("orthogonal")).unwrap();
        assert_eq!(c.strategy.kind, StrategyKind::OrthogonalToError);
        assert!(parse_config("[scenario]\nbeta = [1.0]\n", Some("magic")).is_err());
    }
}
