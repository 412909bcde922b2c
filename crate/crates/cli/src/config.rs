//! INI experiment configs.
//!
//! ```ini
//! [data]
//! family = gaussian          ; required: gaussian | poisson | kl
//! n = 200
//! d = 20
//! n_spurious = 4
//! corruption = translation:0.5 translation:1 additive:0.25 multiplicative:0.25
//! seed = 0
//! replicates = 1
//! relevance_levels = 10
//!
//! [aggregation]
//! phi_r = gaussian           ; defaults to the data family
//! phi_z = gaussian
//! lambda = 1
//! epsilon_margin = 0.001
//! init = borda
//! reg_beta = none            ; none | ridge:<s> | lasso:<s>
//! reg_omega = none
//! outer_tol = 1e-7
//! outer_max_iter = 50
//! stable_orders = 3
//! inner_max_iter = 3
//! inner_start = scores       ; scores | ranks | coefficients
//!
//! [evaluation]
//! max_k = 10
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use rankagg::baselines::BaselineMethod;
use rankagg::data::{default_corruptions, CorruptionKind, CorruptionOp, SyntheticSpec};
use rankagg::{AggregationConfig, DivergenceSpec, InnerStart, Regularization};

use crate::Failure;

pub const GAUSS_RECOVERY: &str = include_str!("../configs/gauss-recovery.ini");
pub const POISSON_RECOVERY: &str = include_str!("../configs/poisson-recovery.ini");

pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "gauss-recovery" => Some(GAUSS_RECOVERY),
        "poisson-recovery" => Some(POISSON_RECOVERY),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub data: SyntheticSpec,
    pub replicates: u64,
    pub relevance_levels: usize,
    pub aggregation: AggregationConfig,
    pub max_k: usize,
}

/// Key-value sections with the source name kept for error messages.
pub struct Sections {
    source: String,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Sections {
    /// Reads a config file, or a bundled config when `arg` names one and no
    /// such file exists.
    pub fn load(arg: &str) -> Result<Self, Failure> {
        let path = Path::new(arg);
        if !path.exists() {
            if let Some(text) = bundled(arg) {
                return Self::parse(text, &format!("bundled:{arg}"));
            }
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {arg}: {e}")))?;
        Self::parse(&text, arg)
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, Failure> {
        let ini = Ini::load_from_str(text).map_err(|e| Failure::Usage(format!("{source}: {e}")))?;
        let mut sections = BTreeMap::new();
        for (name, props) in ini.iter() {
            let entry: &mut BTreeMap<String, String> =
                sections.entry(name.unwrap_or("").to_string()).or_default();
            for (k, v) in props.iter() {
                entry.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Sections {
            source: source.to_string(),
            sections,
        })
    }

    pub fn empty() -> Self {
        Sections {
            source: "defaults".into(),
            sections: BTreeMap::new(),
        }
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .get(section)
            .and_then(|s| s.get(key))
            .map(String::as_str)
    }

    fn require(&self, section: &str, key: &str) -> Result<&str, Failure> {
        self.get(section, key).ok_or_else(|| {
            Failure::Usage(format!(
                "{}: missing key `{key}` in section [{section}]",
                self.source
            ))
        })
    }

    fn parsed<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, Failure>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| self.bad(section, key, v, e)),
        }
    }

    fn bad(&self, section: &str, key: &str, value: &str, why: impl std::fmt::Display) -> Failure {
        Failure::Usage(format!(
            "{}: bad value `{value}` for [{section}] {key}: {why}",
            self.source
        ))
    }

    /// Rejects sections and keys outside `allowed`.
    fn check_known(&self, allowed: &[(&str, &[&str])]) -> Result<(), Failure> {
        for (name, keys) in &self.sections {
            if name.is_empty() && keys.is_empty() {
                continue;
            }
            let Some((_, known)) = allowed.iter().find(|(s, _)| s == name) else {
                return Err(Failure::Usage(format!(
                    "{}: unknown section [{name}]",
                    self.source
                )));
            };
            if let Some(k) = keys.keys().find(|k| !known.contains(&k.as_str())) {
                return Err(Failure::Usage(format!(
                    "{}: unknown key `{k}` in section [{name}]",
                    self.source
                )));
            }
        }
        Ok(())
    }
}

const DATA_KEYS: &[&str] = &[
    "family",
    "n",
    "d",
    "n_spurious",
    "corruption",
    "seed",
    "replicates",
    "relevance_levels",
];
const AGG_KEYS: &[&str] = &[
    "phi_r",
    "phi_z",
    "lambda",
    "epsilon_margin",
    "init",
    "reg_beta",
    "reg_omega",
    "outer_tol",
    "outer_max_iter",
    "stable_orders",
    "inner_max_iter",
    "inner_start",
];
const EVAL_KEYS: &[&str] = &["max_k"];

pub fn synth_config(s: &Sections) -> Result<SynthConfig, Failure> {
    s.check_known(&[
        ("data", DATA_KEYS),
        ("aggregation", AGG_KEYS),
        ("evaluation", EVAL_KEYS),
    ])?;
    let family_raw = s.require("data", "family")?;
    let family: DivergenceSpec = family_raw
        .parse()
        .map_err(|e| s.bad("data", "family", family_raw, e))?;
    let defaults = SyntheticSpec::default();
    let corruption = match s.get("data", "corruption") {
        None => default_corruptions(),
        Some(v) => parse_corruptions(v).map_err(|e| s.bad("data", "corruption", v, e))?,
    };
    let data = SyntheticSpec {
        n: s.parsed("data", "n", defaults.n)?,
        d: s.parsed("data", "d", defaults.d)?,
        family,
        corruption,
        n_spurious: s.parsed("data", "n_spurious", defaults.n_spurious)?,
        seed: s.parsed("data", "seed", 0)?,
    };
    let replicates = s.parsed("data", "replicates", 1u64)?;
    if replicates == 0 {
        return Err(s.bad("data", "replicates", "0", "need at least one"));
    }
    let max_k = s.parsed("evaluation", "max_k", 10usize)?;
    if max_k == 0 {
        return Err(s.bad("evaluation", "max_k", "0", "need at least 1"));
    }
    Ok(SynthConfig {
        relevance_levels: s.parsed("data", "relevance_levels", max_k)?,
        replicates,
        aggregation: aggregation_config(s, family)?,
        data,
        max_k,
    })
}

/// The `[aggregation]` section on its own, for the file-based command.
pub fn aggregate_config(s: &Sections) -> Result<AggregationConfig, Failure> {
    s.check_known(&[("aggregation", AGG_KEYS)])?;
    aggregation_config(s, DivergenceSpec::squared_euclidean())
}

fn aggregation_config(s: &Sections, family: DivergenceSpec) -> Result<AggregationConfig, Failure> {
    const SEC: &str = "aggregation";
    let d = AggregationConfig::default();
    let spec = |key: &str| -> Result<DivergenceSpec, Failure> {
        match s.get(SEC, key) {
            None => Ok(family),
            Some(v) => v.parse().map_err(|e| s.bad(SEC, key, v, e)),
        }
    };
    let reg = |key: &str| -> Result<Regularization, Failure> {
        match s.get(SEC, key) {
            None => Ok(Regularization::None),
            Some(v) => parse_regularization(v).map_err(|e| s.bad(SEC, key, v, e)),
        }
    };
    let init = match s.get(SEC, "init") {
        None => d.init_method,
        Some(v) => BaselineMethod::from_str(v).map_err(|e| s.bad(SEC, "init", v, e))?,
    };
    let inner_start = match s.get(SEC, "inner_start") {
        None => d.inner_start,
        Some("scores") => InnerStart::Scores,
        Some("ranks") => InnerStart::Ranks,
        Some("coefficients") => InnerStart::Coefficients,
        Some(v) => {
            return Err(s.bad(
                SEC,
                "inner_start",
                v,
                "expected scores, ranks or coefficients",
            ))
        }
    };
    let mut inner = d.inner.clone();
    inner.max_iter = s.parsed(SEC, "inner_max_iter", inner.max_iter)?;
    Ok(AggregationConfig {
        phi_r: spec("phi_r")?,
        phi_z: spec("phi_z")?,
        lambda: s.parsed(SEC, "lambda", d.lambda)?,
        epsilon_margin: s.parsed(SEC, "epsilon_margin", d.epsilon_margin)?,
        init_method: init,
        reg_beta: reg("reg_beta")?,
        reg_omega: reg("reg_omega")?,
        outer_tol: s.parsed(SEC, "outer_tol", d.outer_tol)?,
        outer_max_iter: s.parsed(SEC, "outer_max_iter", d.outer_max_iter)?,
        stable_orders: s.parsed(SEC, "stable_orders", d.stable_orders)?,
        inner_start,
        initial_order: None,
        inner,
    })
}

fn parse_regularization(v: &str) -> Result<Regularization, String> {
    if v == "none" {
        return Ok(Regularization::None);
    }
    let (kind, strength) = v
        .split_once(':')
        .ok_or("expected none, ridge:<strength> or lasso:<strength>")?;
    let strength: f64 = strength.parse().map_err(|e| format!("{e}"))?;
    match kind {
        "ridge" => Ok(Regularization::Ridge(strength)),
        "lasso" => Ok(Regularization::Lasso(strength)),
        _ => Err(format!("unknown regularization `{kind}`")),
    }
}

fn parse_corruptions(v: &str) -> Result<Vec<CorruptionOp>, String> {
    v.split([' ', ','])
        .filter(|t| !t.is_empty())
        .map(|tok| {
            let (kind, m) = tok
                .split_once(':')
                .ok_or_else(|| format!("`{tok}` is not kind:magnitude"))?;
            let kind = match kind {
                "translation" => CorruptionKind::Translation,
                "additive" => CorruptionKind::AdditiveNoise,
                "multiplicative" => CorruptionKind::MultiplicativeNoise,
                "noise" => CorruptionKind::PureNoise,
                _ => return Err(format!("unknown corruption `{kind}`")),
            };
            let m: f64 = m.parse().map_err(|e| format!("{tok}: {e}"))?;
            CorruptionOp::new(kind, m).map_err(|e| e.to_string())
        })
        .collect()
}
