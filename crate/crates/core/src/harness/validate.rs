//! `sim validate`: structural identities at full size plus Monte-Carlo
//! agreement checks on a reduced geometry with the same per-antenna power.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::{fixed_channel, snr_db_to_n0, ExperimentConfig, HarnessResult};
use crate::analysis::{
    ber_sweep, domain, draw_usable_channel, psd_analytic, psd_empirical, OperatingPoint, Receiver,
    SystemConfig,
};
use crate::bussgang::{AggregateModel, Composition, StageModels};
use crate::channel::apply_channel;
use crate::impairments::{impair_chain, phase_noise_path, AdcParams, Hardware, PhaseNoiseParams};
use crate::numerics::{ComplexMatrix, Cplx, RngStream};
use crate::waveform::{draw_symbols, ofdm_demodulate, ofdm_modulate, SymbolMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Not applicable to this configuration.
    Skip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub verdict: Verdict,
}

impl Check {
    /// Passes when `measured <= bound` (NaN fails).
    fn at_most(name: &'static str, measured: f64, bound: f64) -> Self {
        let verdict = if measured <= bound {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            name,
            measured,
            bound,
            verdict,
        }
    }

    fn skip(name: &'static str) -> Self {
        Self {
            name,
            measured: f64::NAN,
            bound: f64::NAN,
            verdict: Verdict::Skip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// CSV with columns `check, measured, bound, verdict`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,measured,bound,verdict\n");
        for c in &self.checks {
            let verdict = match c.verdict {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::Skip => "SKIP",
            };
            let _ = writeln!(out, "{},{:e},{:e},{verdict}", c.name, c.measured, c.bound);
        }
        out
    }
}

pub fn run_validate(cfg: &ExperimentConfig) -> HarnessResult<ValidationReport> {
    run_validate_with(cfg, Composition::Consistent)
}

/// Same as [`run_validate`] but lets tests swap the distortion composition
/// used by the Bussgang equivalence check.
pub fn run_validate_with(
    cfg: &ExperimentConfig,
    composition: Composition,
) -> HarnessResult<ValidationReport> {
    let mut checks = Vec::new();
    let small = reduced(cfg);

    checks.push(Check::at_most(
        "ofdm_round_trip",
        ofdm_round_trip(cfg)?,
        1e-10,
    ));
    checks.push(Check::at_most(
        "cp_circularization",
        cp_circularization(cfg)?,
        1e-9,
    ));
    checks.push(match cfg.users <= cfg.antennas {
        true => Check::at_most("zf_identity", zf_identity(cfg)?, 1e-9),
        false => Check::skip("zf_identity"),
    });
    checks.push(match cfg.hardware_at(cfg.n0).adc {
        Some(adc) => Check::at_most("quantizer_properties", quantizer_violations(&adc), 0.0),
        None => Check::skip("quantizer_properties"),
    });
    checks.push(Check::at_most(
        "ideal_chain_reduction",
        ideal_reduction(&small)?,
        0.0,
    ));
    checks.push(match cfg.hardware_at(cfg.n0).pn {
        Some(pn) => Check::at_most("g_osc_monte_carlo", g_osc_error(&pn, cfg.seed), 5e-3),
        None => Check::skip("g_osc_monte_carlo"),
    });
    checks.push(Check::at_most(
        "bussgang_equivalence",
        bussgang_equivalence(&small, composition)?,
        0.10,
    ));
    let (inband, guard) = psd_agreement(&small)?;
    checks.push(Check::at_most("psd_inband_db", inband, 0.5));
    checks.push(match guard {
        Some(g) => Check::at_most("psd_guard_db", g, 1.5),
        None => Check::skip("psd_guard_db"),
    });
    checks.push(match ber_agreement(&small)? {
        Some(r) => Check::at_most("ber_agreement", r, 1.0),
        None => Check::skip("ber_agreement"),
    });
    Ok(ValidationReport { checks })
}

/// Reduced geometry keeping `U S / N` (and hence the per-antenna input power
/// and the quantizer step) close to the full configuration.
fn reduced(cfg: &ExperimentConfig) -> ExperimentConfig {
    let n = cfg.n.min(128);
    let users = cfg.users.min(2);
    let antennas = cfg.antennas.min(8).max(users);
    let load = cfg.users as f64 * cfg.s as f64 / cfg.n as f64;
    let s = (2.0 * (load * n as f64 / users as f64 / 2.0).round()) as usize;
    let mut small = cfg.clone();
    small.n = n;
    small.users = users;
    small.antennas = antennas;
    small.s = s.clamp(2, n - 2);
    small.taps = cfg.taps.min(8).min(n);
    // keep the oscillator sampling period of the full system
    small.f_sub = cfg.f_sub * cfg.n as f64 / n as f64;
    small
}

fn stream(seed: u64, check: u32, index: u32) -> RngStream {
    RngStream::derive(seed, domain::VALIDATE, check, index)
}

fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn ofdm_round_trip(cfg: &ExperimentConfig) -> HarnessResult<f64> {
    let mut rng = stream(cfg.seed, 0, 0);
    let frame = draw_symbols(&cfg.layout(), cfg.users, SymbolMode::Gaussian, &mut rng)?;
    let tx = ofdm_modulate(&frame, cfg.taps - 1)?;
    let back = ofdm_demodulate(&tx.body())?;
    Ok(max_abs(&(back - &frame.symbols)))
}

fn cp_circularization(cfg: &ExperimentConfig) -> HarnessResult<f64> {
    let mut rng = stream(cfg.seed, 1, 0);
    let channel = fixed_channel(cfg)?;
    let frame = draw_symbols(&cfg.layout(), cfg.users, SymbolMode::Gaussian, &mut rng)?;
    let tx = ofdm_modulate(&frame, cfg.taps - 1)?;
    let rx = ofdm_demodulate(&apply_channel(&channel, &tx, 0.0, &mut rng)?)?;
    let mut worst = 0.0f64;
    for k in 0..cfg.n {
        let expect = &channel.freq()[k] * frame.symbols.column(k);
        let diff = rx.column(k) - expect;
        worst = worst.max(diff.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(worst)
}

fn zf_identity(cfg: &ExperimentConfig) -> HarnessResult<f64> {
    let sys = cfg.system_at(cfg.n0);
    let (channel, _) = draw_usable_channel(&sys, cfg.seed, 0)?;
    let rx = Receiver::build(&channel, &sys.layout, cfg.n0, &sys.hardware)?;
    let eye = ComplexMatrix::identity(cfg.users, cfg.users);
    let mut worst = 0.0f64;
    for (a, &k) in rx.filters.iter().zip(sys.layout.occupied()) {
        let p = a.adjoint() * rx.model.g_tot.apply_left(&channel.freq()[k]);
        worst = worst.max(max_abs(&(p - &eye)));
    }
    Ok(worst)
}

/// Violations of odd symmetry, monotonicity and idempotence on a 10⁴-point
/// grid that straddles the clipping range and avoids cell boundaries.
pub(crate) fn quantizer_violations(adc: &AdcParams) -> f64 {
    let span = 1.5 * adc.max_output();
    let pts = 10_000;
    let grid: Vec<f64> = (0..pts)
        .map(|i| -span + (i as f64 + 0.5) * 2.0 * span / pts as f64)
        .map(|z| {
            // nudge points sitting exactly on a decision threshold
            let t = z / adc.delta();
            if (t - t.round()).abs() < 1e-9 {
                z + 1e-6 * adc.delta()
            } else {
                z
            }
        })
        .collect();
    let mut bad = 0usize;
    let mut prev = f64::NEG_INFINITY;
    for &z in &grid {
        let qz = adc.quantize(z);
        if adc.quantize(-z) != -qz {
            bad += 1;
        }
        if qz < prev {
            bad += 1;
        }
        if adc.quantize(qz) != qz {
            bad += 1;
        }
        prev = qz;
    }
    bad as f64
}

fn ideal_reduction(cfg: &ExperimentConfig) -> HarnessResult<f64> {
    let channel = fixed_channel(cfg)?;
    let model = AggregateModel::build(&channel, &cfg.layout(), cfg.n0, &Hardware::ideal())?;
    let gain = model
        .g_tot
        .diag()
        .iter()
        .map(|g| (g - Cplx::new(1.0, 0.0)).norm())
        .fold(0.0, f64::max);
    let dist = model.c_e_tot.mats().iter().map(max_abs).fold(0.0, f64::max);
    Ok(gain.max(dist))
}

/// `|mean e^{jφ} − e^{−σ²/2}|`, taking the last sample of many independent
/// paths so that the AR recursion itself is exercised.
fn g_osc_error(pn: &PhaseNoiseParams, seed: u64) -> f64 {
    const PATHS: usize = 100_000;
    const LEN: usize = 64;
    let sum = (0..PATHS)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, 2, i as u32);
            let phi = phase_noise_path(pn, LEN, &mut rng).expect("nonzero length");
            Cplx::from_polar(1.0, phi[LEN - 1])
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Cplx::new(0.0, 0.0), |a, b| a + b);
    let expected = (-pn.sigma_phi_sq() / 2.0).exp();
    (sum / PATHS as f64 - expected).norm()
}

/// Relative error between the model's `tr C_e_tot[0]` and the measured power
/// of `r − G_tot x` with Gaussian input.
fn bussgang_equivalence(cfg: &ExperimentConfig, composition: Composition) -> HarnessResult<f64> {
    const FRAMES: usize = 2000;
    let sys = SystemConfig {
        symbols: SymbolMode::Gaussian,
        ..cfg.system_at(cfg.n0)
    };
    let channel = fixed_channel(cfg)?;
    let model =
        StageModels::build(&channel, &sys.layout, sys.n0, &sys.hardware)?.aggregate(composition)?;
    let predicted = model.c_e_tot[0].trace().re;
    let cp = channel.len() - 1;
    let powers = (0..FRAMES)
        .into_par_iter()
        .map(|f| {
            let mut rng = stream(cfg.seed, 3, f as u32);
            let frame = draw_symbols(&sys.layout, sys.users, SymbolMode::Gaussian, &mut rng)?;
            let x = apply_channel(&channel, &ofdm_modulate(&frame, cp)?, sys.n0, &mut rng)?;
            let phase = match &sys.hardware.pn {
                Some(p) => Some(phase_noise_path(p, cp + sys.n(), &mut rng)?.split_off(cp)),
                None => None,
            };
            let hw = &sys.hardware;
            let r = impair_chain(&x, hw.lna.as_ref(), phase.as_deref(), hw.adc.as_ref())?;
            let e = r - model.g_tot.apply_left(&x);
            Ok(e.norm_squared())
        })
        .collect::<crate::Result<Vec<f64>>>()?;
    let measured = powers.iter().sum::<f64>() / (FRAMES * sys.n()) as f64;
    if predicted == 0.0 && measured == 0.0 {
        return Ok(0.0);
    }
    Ok((measured - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE))
}

fn mean_db(values: &[f64]) -> f64 {
    10.0 * (values.iter().sum::<f64>() / values.len() as f64).log10()
}

/// Band-averaged analytic vs empirical PSD gap in dB, for the occupied band
/// and for guard bins within 50 dB of the in-band level.
fn psd_agreement(cfg: &ExperimentConfig) -> HarnessResult<(f64, Option<f64>)> {
    let sys = cfg.system_at(cfg.n0);
    let layout = &sys.layout;
    let channel = fixed_channel(cfg)?;
    let model = AggregateModel::build(&channel, layout, sys.n0, &sys.hardware)?;
    let analytic = psd_analytic(&model, cfg.psd_metric).values;
    let empirical = psd_empirical(&sys, &channel, cfg.psd_frames.min(1000), cfg.seed)?.values;
    let pick = |v: &[f64], ks: &[usize]| ks.iter().map(|&k| v[k]).collect::<Vec<_>>();
    let occ = layout.occupied();
    let inband_db = mean_db(&pick(&analytic, occ));
    let inband = (inband_db - mean_db(&pick(&empirical, occ))).abs();
    let guard: Vec<usize> = layout
        .guard()
        .filter(|&k| analytic[k] > 0.0 && 10.0 * analytic[k].log10() >= inband_db - 50.0)
        .collect();
    let guard_gap = (!guard.is_empty())
        .then(|| (mean_db(&pick(&analytic, &guard)) - mean_db(&pick(&empirical, &guard))).abs());
    Ok((inband, guard_gap))
}

/// Largest `|ber_mc − ber_analytic| / max(0.15 ber_analytic, 3 halfwidth)`
/// over SNR points whose analytic BER lies in `[1e-3, 1e-1]`.
fn ber_agreement(cfg: &ExperimentConfig) -> HarnessResult<Option<f64>> {
    if cfg.snr_db.is_empty() || cfg.symbols != SymbolMode::Qpsk {
        return Ok(None);
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
    let results = ber_sweep(&sys, &points, 20, 50, cfg.seed)?;
    let ratios: Vec<f64> = results
        .iter()
        .filter(|r| (1e-3..=1e-1).contains(&r.ber_analytic))
        .map(|r| {
            (r.ber_mc - r.ber_analytic).abs() / (0.15 * r.ber_analytic).max(3.0 * r.half_width)
        })
        .collect();
    Ok((!ratios.is_empty()).then(|| ratios.iter().copied().fold(0.0, f64::max)))
}
