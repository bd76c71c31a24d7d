//! Configuration, experiment runners and CSV output behind the `sim` binary.

mod config;
mod table;
mod validate;

use std::path::Path;

pub use config::{load_config, ConfigError, DeltaRule, ExperimentConfig};
pub use table::{num, ResultTable};
pub use validate::{run_validate, run_validate_with, Check, ValidationReport, Verdict};

use crate::analysis::{ber_sweep, domain, psd_analytic, psd_empirical, OperatingPoint};
use crate::bussgang::AggregateModel;
use crate::channel::ChannelRealization;
use crate::numerics::RngStream;
use crate::waveform::SymbolMode;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Sim(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

/// `SNR = 1/N0`, in dB.
pub fn snr_db_to_n0(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn stamp(table: &mut ResultTable, cfg: &ExperimentConfig, command: &str) {
    table.meta("tool", concat!("hwsim ", env!("CARGO_PKG_VERSION")));
    table.meta("command", command);
    table.meta("config_hash", cfg.hash());
    table.meta("seed", cfg.seed);
}

/// The single channel realization used by `psd` and `linearize`.
pub fn fixed_channel(cfg: &ExperimentConfig) -> crate::Result<ChannelRealization> {
    let mut rng = RngStream::derive(cfg.seed, domain::CHANNEL, 0, 0);
    cfg.system_at(cfg.n0).draw_channel(&mut rng)
}

/// Columns `k, psd_analytic_db, psd_empirical_db, n_frames`.
pub fn psd_table(cfg: &ExperimentConfig) -> HarnessResult<ResultTable> {
    let sys = cfg.system_at(cfg.n0);
    let channel = fixed_channel(cfg)?;
    let model = AggregateModel::build(&channel, &sys.layout, cfg.n0, &sys.hardware)?;
    let analytic = psd_analytic(&model, cfg.psd_metric).to_db();
    let empirical = psd_empirical(&sys, &channel, cfg.psd_frames, cfg.seed)?.to_db();
    let mut t = ResultTable::new(&["k", "psd_analytic_db", "psd_empirical_db", "n_frames"]);
    stamp(&mut t, cfg, "psd");
    for k in 0..cfg.n {
        t.push(vec![
            k.to_string(),
            num(analytic[k]),
            num(empirical[k]),
            cfg.psd_frames.to_string(),
        ]);
    }
    Ok(t)
}

pub fn run_psd(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<ResultTable> {
    let t = psd_table(cfg)?;
    t.write(out)?;
    Ok(t)
}

/// Columns `snr_db, ber_analytic, ber_mc, mc_halfwidth, n_channels, n_bits`.
/// Rank-deficient channel draws are replaced; their count goes into the
/// `channel_redraws` metadata line.
pub fn ber_table(cfg: &ExperimentConfig) -> HarnessResult<ResultTable> {
    if cfg.snr_db.is_empty() {
        return Err(ConfigError {
            key: Some("snr_db".into()),
            line: None,
            message: "the BER sweep needs at least one SNR point".into(),
        }
        .into());
    }
    if cfg.symbols != SymbolMode::Qpsk {
        return Err(ConfigError {
            key: Some("symbols".into()),
            line: None,
            message: "the BER sweep counts QPSK bit errors; set symbols = qpsk".into(),
        }
        .into());
    }
    let points: Vec<OperatingPoint> = cfg
        .snr_db
        .iter()
        .map(|&snr| {
            let n0 = snr_db_to_n0(snr);
            OperatingPoint {
                n0,
                hardware: cfg.hardware_at(n0),
            }
        })
        .collect();
    let sys = cfg.system_at(points[0].n0);
    let results = ber_sweep(&sys, &points, cfg.ber_channels, cfg.ber_frames, cfg.seed)?;
    let mut t = ResultTable::new(&[
        "snr_db",
        "ber_analytic",
        "ber_mc",
        "mc_halfwidth",
        "n_channels",
        "n_bits",
    ]);
    stamp(&mut t, cfg, "ber");
    t.meta("frames_per_channel", cfg.ber_frames);
    t.meta("channel_redraws", results.first().map_or(0, |r| r.redraws));
    for (snr, r) in cfg.snr_db.iter().zip(&results) {
        t.push(vec![
            num(*snr),
            num(r.ber_analytic),
            num(r.ber_mc),
            num(r.half_width),
            r.n_channels.to_string(),
            r.n_bits.to_string(),
        ]);
    }
    Ok(t)
}

pub fn run_ber(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<ResultTable> {
    let t = ber_table(cfg)?;
    if let Some(r) = t.meta.iter().find(|(k, _)| k == "channel_redraws") {
        if r.1 != "0" {
            eprintln!("note: {} rank-deficient channel draws were replaced", r.1);
        }
    }
    t.write(out)?;
    Ok(t)
}

/// Long-format dump with columns `quantity, antenna, subcarrier, re, im`:
/// rows `g_lna`, `g_osc`, `g_adc`, `g_tot` per antenna, then `distortion`
/// rows holding `[C_ê_tot[k]]_{bb}` per subcarrier and antenna.
pub fn linearize_table(cfg: &ExperimentConfig) -> HarnessResult<ResultTable> {
    let sys = cfg.system_at(cfg.n0);
    let channel = fixed_channel(cfg)?;
    let model = AggregateModel::build(&channel, &sys.layout, cfg.n0, &sys.hardware)?;
    let mut t = ResultTable::new(&["quantity", "antenna", "subcarrier", "re", "im"]);
    stamp(&mut t, cfg, "linearize");
    for (name, g) in [
        ("g_lna", &model.g_lna),
        ("g_osc", &model.g_osc),
        ("g_adc", &model.g_adc),
        ("g_tot", &model.g_tot),
    ] {
        for (b, z) in g.diag().iter().enumerate() {
            t.push(vec![
                name.into(),
                b.to_string(),
                String::new(),
                num(z.re),
                num(z.im),
            ]);
        }
    }
    for k in 0..cfg.n {
        let c = &model.c_e_tot_freq[k];
        for b in 0..cfg.antennas {
            let z = c[(b, b)];
            t.push(vec![
                "distortion".into(),
                b.to_string(),
                k.to_string(),
                num(z.re),
                num(z.im),
            ]);
        }
    }
    Ok(t)
}

pub fn run_linearize(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<ResultTable> {
    let t = linearize_table(cfg)?;
    t.write(out)?;
    Ok(t)
}
