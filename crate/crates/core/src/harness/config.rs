//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment. Keys:
//!
//! | key | type | default |
//! |-----|------|---------|
//! | `B`, `U`, `N`, `S`, `L` | integer | required |
//! | `F_sub` | Hz | required |
//! | `N0` | noise variance for `psd`/`linearize` | `0` |
//! | `snr_db` | comma-separated list, `SNR = 1/N0` | empty |
//! | `enable.lna`, `enable.pn`, `enable.adc` | bool | `false` |
//! | `lna.alpha1`, `lna.alpha2` | complex (`1.065`, `0.1-0.2i`) | required if LNA enabled |
//! | `pn.lambda`, `pn.beta` | real, `0 < lambda < 1` | required if PN enabled |
//! | `adc.q` | bits, 1..=24 | required if ADC enabled |
//! | `adc.delta_rule` | `scaled` or `fixed` | `scaled` |
//! | `adc.delta_value` | step size | required if rule is `fixed` |
//! | `seed` | u64 | `1` |
//! | `trials.psd_frames` | frames per PSD run | `500` |
//! | `trials.ber_channels` | channels per BER sweep | `20` |
//! | `trials.ber_frames` | frames per channel and SNR point | `25` |
//! | `symbols` | `qpsk` or `gaussian` | `qpsk` |
//! | `psd.metric` | `trace` or `diag_norm` | `trace` |
//!
//! The `scaled` step-size rule is `Δ = 0.086 sqrt(U S / N + N0)`, recomputed
//! for every noise level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::analysis::{PsdMetric, SystemConfig};
use crate::impairments::{AdcParams, Hardware, LnaParams, PhaseNoiseParams};
use crate::waveform::{make_layout, SubcarrierLayout, SymbolMode};

/// Parse or validation failure. `key` is the offending key when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn key(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }

    fn at(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    /// `Δ = 0.086 sqrt(U S / N + N0)`
    Scaled,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub antennas: usize,
    pub users: usize,
    pub n: usize,
    pub s: usize,
    pub taps: usize,
    pub f_sub: f64,
    pub n0: f64,
    pub snr_db: Vec<f64>,
    pub enable_lna: bool,
    pub enable_pn: bool,
    pub enable_adc: bool,
    pub alpha1: Option<Complex64>,
    pub alpha2: Option<Complex64>,
    pub pn_lambda: Option<f64>,
    pub pn_beta: Option<f64>,
    pub adc_q: Option<u32>,
    pub delta_rule: DeltaRule,
    pub seed: u64,
    pub psd_frames: usize,
    pub ber_channels: usize,
    pub ber_frames: usize,
    pub symbols: SymbolMode,
    pub psd_metric: PsdMetric,
}

const KEYS: &[&str] = &[
    "B",
    "U",
    "N",
    "S",
    "L",
    "F_sub",
    "N0",
    "snr_db",
    "enable.lna",
    "enable.pn",
    "enable.adc",
    "lna.alpha1",
    "lna.alpha2",
    "pn.lambda",
    "pn.beta",
    "adc.q",
    "adc.delta_rule",
    "adc.delta_value",
    "seed",
    "trials.psd_frames",
    "trials.ber_channels",
    "trials.ber_frames",
    "symbols",
    "psd.metric",
];

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        key: None,
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    ExperimentConfig::parse(&text)
}

struct Entries(BTreeMap<&'static str, (usize, String)>);

impl Entries {
    fn get<T>(
        &self,
        key: &'static str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some((line, v)) => parse(v)
                .map(Some)
                .map_err(|m| ConfigError::key(key, m).at(*line)),
        }
    }

    fn require<T>(
        &self,
        key: &'static str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, ConfigError> {
        self.get(key, parse)?
            .ok_or_else(|| ConfigError::key(key, "required key is missing"))
    }
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse()
        .map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_f64(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("expected a finite number, got {v:?}")),
    }
}

fn parse_complex(v: &str) -> Result<Complex64, String> {
    match v.parse::<Complex64>() {
        Ok(z) if z.re.is_finite() && z.im.is_finite() => Ok(z),
        _ => Err(format!(
            "expected a finite complex number such as 1.5 or 1-0.2i, got {v:?}"
        )),
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(x.trim())).collect()
}

fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im < 0.0 {
        format!("{}-{}i", z.re, -z.im)
    } else {
        format!("{}+{}i", z.re, z.im)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or(ConfigError {
                key: None,
                line: Some(line),
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let k = k.trim();
            let key = *KEYS
                .iter()
                .find(|&&known| known == k)
                .ok_or_else(|| ConfigError::key(k, "unknown key").at(line))?;
            if entries.insert(key, (line, v.trim().to_string())).is_some() {
                return Err(ConfigError::key(key, "duplicate key").at(line));
            }
        }
        Self::from_entries(&Entries(entries))
    }

    fn from_entries(e: &Entries) -> Result<Self, ConfigError> {
        let delta_rule = match e.get("adc.delta_rule", |v| Ok(v.to_string()))?.as_deref() {
            None | Some("scaled") => DeltaRule::Scaled,
            Some("fixed") => DeltaRule::Fixed(e.require("adc.delta_value", parse_f64)?),
            Some(other) => {
                return Err(ConfigError::key(
                    "adc.delta_rule",
                    format!("expected scaled or fixed, got {other:?}"),
                ))
            }
        };
        let symbols = match e.get("symbols", |v| Ok(v.to_string()))?.as_deref() {
            None | Some("qpsk") => SymbolMode::Qpsk,
            Some("gaussian") => SymbolMode::Gaussian,
            Some(other) => {
                return Err(ConfigError::key(
                    "symbols",
                    format!("expected qpsk or gaussian, got {other:?}"),
                ))
            }
        };
        let psd_metric = match e.get("psd.metric", |v| Ok(v.to_string()))?.as_deref() {
            None | Some("trace") => PsdMetric::Trace,
            Some("diag_norm") => PsdMetric::SquaredDiagonalNorm,
            Some(other) => {
                return Err(ConfigError::key(
                    "psd.metric",
                    format!("expected trace or diag_norm, got {other:?}"),
                ))
            }
        };
        let cfg = Self {
            antennas: e.require("B", parse_usize)?,
            users: e.require("U", parse_usize)?,
            n: e.require("N", parse_usize)?,
            s: e.require("S", parse_usize)?,
            taps: e.require("L", parse_usize)?,
            f_sub: e.require("F_sub", parse_f64)?,
            n0: e.get("N0", parse_f64)?.unwrap_or(0.0),
            snr_db: e.get("snr_db", parse_list)?.unwrap_or_default(),
            enable_lna: e.get("enable.lna", parse_bool)?.unwrap_or(false),
            enable_pn: e.get("enable.pn", parse_bool)?.unwrap_or(false),
            enable_adc: e.get("enable.adc", parse_bool)?.unwrap_or(false),
            alpha1: e.get("lna.alpha1", parse_complex)?,
            alpha2: e.get("lna.alpha2", parse_complex)?,
            pn_lambda: e.get("pn.lambda", parse_f64)?,
            pn_beta: e.get("pn.beta", parse_f64)?,
            adc_q: e.get("adc.q", |v| {
                v.parse::<u32>()
                    .map_err(|_| format!("expected an integer, got {v:?}"))
            })?,
            delta_rule,
            seed: e
                .get("seed", |v| {
                    v.parse::<u64>()
                        .map_err(|_| format!("expected a u64, got {v:?}"))
                })?
                .unwrap_or(1),
            psd_frames: e.get("trials.psd_frames", parse_usize)?.unwrap_or(500),
            ber_channels: e.get("trials.ber_channels", parse_usize)?.unwrap_or(20),
            ber_frames: e.get("trials.ber_frames", parse_usize)?.unwrap_or(25),
            symbols,
            psd_metric,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range and consistency checks; `parse` calls this, so it only matters
    /// after fields were changed by hand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(ConfigError::key(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("B", self.antennas)?;
        positive("U", self.users)?;
        positive("N", self.n)?;
        positive("L", self.taps)?;
        positive("trials.psd_frames", self.psd_frames)?;
        positive("trials.ber_channels", self.ber_channels)?;
        positive("trials.ber_frames", self.ber_frames)?;
        if self.s == 0 || self.s >= self.n || !self.s.is_multiple_of(2) {
            return Err(ConfigError::key(
                "S",
                format!("must be even with 0 < S < N = {}", self.n),
            ));
        }
        if self.taps > self.n {
            return Err(ConfigError::key(
                "L",
                format!("must not exceed N = {}", self.n),
            ));
        }
        if !(self.f_sub > 0.0) {
            return Err(ConfigError::key("F_sub", "must be positive"));
        }
        if !(self.n0 >= 0.0) {
            return Err(ConfigError::key("N0", "must be non-negative"));
        }
        if self.enable_lna {
            let a1 = self
                .alpha1
                .ok_or_else(|| ConfigError::key("lna.alpha1", "required when enable.lna = true"))?;
            let a2 = self
                .alpha2
                .ok_or_else(|| ConfigError::key("lna.alpha2", "required when enable.lna = true"))?;
            LnaParams::new(a1, a2).map_err(|e| ConfigError::key("lna.alpha1", e.to_string()))?;
        }
        if self.enable_pn {
            let lambda = self
                .pn_lambda
                .ok_or_else(|| ConfigError::key("pn.lambda", "required when enable.pn = true"))?;
            let beta = self
                .pn_beta
                .ok_or_else(|| ConfigError::key("pn.beta", "required when enable.pn = true"))?;
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(ConfigError::key(
                    "pn.lambda",
                    format!("must lie in (0, 1), got {lambda}"),
                ));
            }
            if !(beta >= 0.0) {
                return Err(ConfigError::key(
                    "pn.beta",
                    format!("must be non-negative, got {beta}"),
                ));
            }
        }
        if self.enable_adc {
            let q = self
                .adc_q
                .ok_or_else(|| ConfigError::key("adc.q", "required when enable.adc = true"))?;
            if !(1..=24).contains(&q) {
                return Err(ConfigError::key(
                    "adc.q",
                    format!("must lie in 1..=24, got {q}"),
                ));
            }
            if let DeltaRule::Fixed(d) = self.delta_rule {
                if !(d > 0.0) {
                    return Err(ConfigError::key(
                        "adc.delta_value",
                        format!("must be positive, got {d}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Sampling period `1/(N F_sub)`.
    pub fn ts(&self) -> f64 {
        1.0 / (self.n as f64 * self.f_sub)
    }

    pub fn osr(&self) -> f64 {
        self.n as f64 / self.s as f64
    }

    pub fn layout(&self) -> SubcarrierLayout {
        make_layout(self.n, self.s).expect("validated layout")
    }

    /// Quantizer step at noise level `n0`.
    pub fn delta_at(&self, n0: f64) -> f64 {
        match self.delta_rule {
            DeltaRule::Scaled => {
                0.086 * (self.users as f64 * self.s as f64 / self.n as f64 + n0).sqrt()
            }
            DeltaRule::Fixed(d) => d,
        }
    }

    pub fn hardware_at(&self, n0: f64) -> Hardware {
        let lna = self.enable_lna.then(|| {
            LnaParams::new(self.alpha1.unwrap(), self.alpha2.unwrap()).expect("validated LNA")
        });
        let pn = self.enable_pn.then(|| {
            PhaseNoiseParams::new(self.pn_lambda.unwrap(), self.pn_beta.unwrap(), self.ts())
                .expect("validated PN")
        });
        let adc = self.enable_adc.then(|| {
            AdcParams::new(self.adc_q.unwrap(), self.delta_at(n0)).expect("validated ADC")
        });
        Hardware { lna, pn, adc }
    }

    pub fn system_at(&self, n0: f64) -> SystemConfig {
        SystemConfig {
            antennas: self.antennas,
            users: self.users,
            taps: self.taps,
            layout: self.layout(),
            n0,
            hardware: self.hardware_at(n0),
            symbols: self.symbols,
        }
    }

    /// Canonical text form; `parse(to_cfg_string())` reproduces `self`.
    pub fn to_cfg_string(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("B", self.antennas.to_string());
        put("U", self.users.to_string());
        put("N", self.n.to_string());
        put("S", self.s.to_string());
        put("L", self.taps.to_string());
        put("F_sub", self.f_sub.to_string());
        put("N0", self.n0.to_string());
        put(
            "snr_db",
            self.snr_db
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("enable.lna", self.enable_lna.to_string());
        put("enable.pn", self.enable_pn.to_string());
        put("enable.adc", self.enable_adc.to_string());
        if let Some(a) = self.alpha1 {
            put("lna.alpha1", format_complex(a));
        }
        if let Some(a) = self.alpha2 {
            put("lna.alpha2", format_complex(a));
        }
        if let Some(v) = self.pn_lambda {
            put("pn.lambda", v.to_string());
        }
        if let Some(v) = self.pn_beta {
            put("pn.beta", v.to_string());
        }
        if let Some(q) = self.adc_q {
            put("adc.q", q.to_string());
        }
        match self.delta_rule {
            DeltaRule::Scaled => put("adc.delta_rule", "scaled".into()),
            DeltaRule::Fixed(d) => {
                put("adc.delta_rule", "fixed".into());
                put("adc.delta_value", d.to_string());
            }
        }
        put("seed", self.seed.to_string());
        put("trials.psd_frames", self.psd_frames.to_string());
        put("trials.ber_channels", self.ber_channels.to_string());
        put("trials.ber_frames", self.ber_frames.to_string());
        put(
            "symbols",
            match self.symbols {
                SymbolMode::Qpsk => "qpsk",
                SymbolMode::Gaussian => "gaussian",
            }
            .into(),
        );
        put(
            "psd.metric",
            match self.psd_metric {
                PsdMetric::Trace => "trace",
                PsdMetric::SquaredDiagonalNorm => "diag_norm",
            }
            .into(),
        );
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_cfg_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
