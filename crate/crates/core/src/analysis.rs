//! PSD (analytic and Monte-Carlo), zero-forcing detection, SINDR and BER.

use rayon::prelude::*;

use crate::bussgang::{AggregateModel, DiagonalGain, SubcarrierCovarianceSet};
use crate::channel::{apply_channel, draw_channel, ChannelRealization};
use crate::error::{invalid, Error, Result};
use crate::impairments::{impair_chain, phase_noise_path, Hardware};
use crate::numerics::{q_function, ComplexMatrix, RngStream};
use crate::waveform::{
    draw_qpsk, draw_symbols, ofdm_demodulate, ofdm_modulate, qpsk_demap, BitMatrix, FrequencyFrame,
    SubcarrierLayout, SymbolMode,
};

/// Stream domains keep channel, PSD-frame and BER-frame draws apart.
pub mod domain {
    pub const CHANNEL: u8 = 1;
    pub const PSD_FRAME: u8 = 2;
    pub const BER_FRAME: u8 = 3;
    pub const VALIDATE: u8 = 4;
}

/// Largest tolerated condition number of `G_tot Ĥ[k]` before ZF gives up.
pub const MAX_CONDITION: f64 = 1e12;

/// Dimensions, waveform and receive hardware of one uplink scenario.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub antennas: usize,
    pub users: usize,
    pub taps: usize,
    pub layout: SubcarrierLayout,
    pub n0: f64,
    pub hardware: Hardware,
    pub symbols: SymbolMode,
}

impl SystemConfig {
    pub fn n(&self) -> usize {
        self.layout.n()
    }

    pub fn draw_channel(&self, rng: &mut RngStream) -> Result<ChannelRealization> {
        draw_channel(self.antennas, self.users, self.taps, self.n(), rng)
    }
}

/// One transmitted frame and what the BS sees after demodulation.
pub struct FrameOutcome {
    pub frame: FrequencyFrame,
    pub bits: Option<BitMatrix>,
    /// `B x N` demodulated output of the exact nonlinear chain.
    pub received: ComplexMatrix,
}

/// Transmit one OFDM symbol through the channel and the exact hardware chain.
pub fn simulate_frame(
    sys: &SystemConfig,
    channel: &ChannelRealization,
    rng: &mut RngStream,
) -> Result<FrameOutcome> {
    let (frame, bits) = match sys.symbols {
        SymbolMode::Qpsk => {
            let (f, b) = draw_qpsk(&sys.layout, sys.users, rng);
            (f, Some(b))
        }
        SymbolMode::Gaussian => (
            draw_symbols(&sys.layout, sys.users, SymbolMode::Gaussian, rng)?,
            None,
        ),
    };
    let cp = channel.len() - 1;
    let tx = ofdm_modulate(&frame, cp)?;
    let x = apply_channel(channel, &tx, sys.n0, rng)?;
    // the LO runs over the prefix too; only the post-prefix window is kept
    let phase = match &sys.hardware.pn {
        Some(p) => Some(phase_noise_path(p, cp + sys.n(), rng)?.split_off(cp)),
        None => None,
    };
    let r = impair_chain(
        &x,
        sys.hardware.lna.as_ref(),
        phase.as_deref(),
        sys.hardware.adc.as_ref(),
    )?;
    Ok(FrameOutcome {
        frame,
        bits,
        received: ofdm_demodulate(&r)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdKind {
    Analytic,
    Empirical,
}

/// Per-subcarrier received power averaged over antennas (linear units).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdCurve {
    pub values: Vec<f64>,
    pub kind: PsdKind,
}

impl PsdCurve {
    pub fn to_db(&self) -> Vec<f64> {
        self.values.iter().map(|&p| 10.0 * p.log10()).collect()
    }
}

/// How the analytic PSD is read off `C_r̂[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsdMetric {
    /// `(1/B) tr C_r̂[k]`, the quantity the periodogram estimates.
    #[default]
    Trace,
    /// `(1/B) ‖diag C_r̂[k]‖²`, kept for comparison only.
    SquaredDiagonalNorm,
}

pub fn psd_analytic(model: &AggregateModel, metric: PsdMetric) -> PsdCurve {
    psd_from_covariances(&model.c_r_freq, metric)
}

pub fn psd_from_covariances(c: &SubcarrierCovarianceSet, metric: PsdMetric) -> PsdCurve {
    let values = match metric {
        PsdMetric::Trace => c.mean_diagonal().into_iter().map(|p| p.max(0.0)).collect(),
        PsdMetric::SquaredDiagonalNorm => {
            let b = c.dim() as f64;
            c.mats()
                .iter()
                .map(|m| m.diagonal().iter().map(|z| z.norm_sqr()).sum::<f64>() / b)
                .collect()
        }
    };
    PsdCurve {
        values,
        kind: PsdKind::Analytic,
    }
}

/// Averaged periodogram `(1/(B F)) Σ_frames Σ_b |r̂_b[k]|²` of the exact chain.
/// Frame `f` uses its own random stream, so the result does not depend on
/// how frames are spread over worker threads.
pub fn psd_empirical(
    sys: &SystemConfig,
    channel: &ChannelRealization,
    n_frames: usize,
    seed: u64,
) -> Result<PsdCurve> {
    if n_frames == 0 {
        return Err(invalid("n_frames", "need at least one frame"));
    }
    let n = sys.n();
    let per_frame: Vec<Vec<f64>> = (0..n_frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = RngStream::derive(seed, domain::PSD_FRAME, 0, f as u32);
            let out = simulate_frame(sys, channel, &mut rng)?;
            Ok((0..n)
                .map(|k| out.received.column(k).iter().map(|z| z.norm_sqr()).sum())
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut acc = vec![0.0; n];
    for p in &per_frame {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    let scale = 1.0 / (sys.antennas * n_frames) as f64;
    Ok(PsdCurve {
        values: acc.into_iter().map(|a| a * scale).collect(),
        kind: PsdKind::Empirical,
    })
}

/// ZF combiner `Â = M (M^H M)^{-1}` for the effective channel `M = G_tot Ĥ[k]`,
/// so that `Â^H M = I_U`.
pub fn zf_single(
    h: &ComplexMatrix,
    g_tot: &DiagonalGain,
    subcarrier: usize,
) -> Result<ComplexMatrix> {
    let m = g_tot.apply_left(h);
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if m.ncols() > m.nrows() || !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient {
            subcarrier,
            condition,
        });
    }
    let gram = m.adjoint() * &m;
    let inv = gram.try_inverse().ok_or(Error::RankDeficient {
        subcarrier,
        condition,
    })?;
    Ok(m * inv)
}

/// ZF combiners for every occupied subcarrier, in layout order.
pub fn zf_matrix(
    h: &[ComplexMatrix],
    g_tot: &DiagonalGain,
    layout: &SubcarrierLayout,
) -> Result<Vec<ComplexMatrix>> {
    layout
        .occupied()
        .iter()
        .map(|&k| zf_single(&h[k], g_tot, k))
        .collect()
}

/// `U x S` SINDR values (occupied subcarriers in layout order).
#[derive(Debug, Clone, PartialEq)]
pub struct SindrGrid {
    pub users: usize,
    pub values: Vec<f64>,
}

impl SindrGrid {
    pub fn get(&self, u: usize, i: usize) -> f64 {
        self.values[i * self.users + u]
    }

    pub fn per_subcarrier(&self) -> usize {
        self.values.len() / self.users.max(1)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            users: self.users,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// `|a_u^H G h_u|² / (I_u + N_u + D_u)` per user and occupied subcarrier. A
/// vanishing denominator yields `f64::INFINITY`.
pub fn sindr(
    filters: &[ComplexMatrix],
    h: &[ComplexMatrix],
    g_tot: &DiagonalGain,
    c_e_tot_freq: &SubcarrierCovarianceSet,
    n0: f64,
    layout: &SubcarrierLayout,
) -> Result<SindrGrid> {
    if filters.len() != layout.s() {
        return Err(Error::DimensionMismatch {
            context: "sindr filters",
            expected: layout.s(),
            got: filters.len(),
        });
    }
    let users = h[0].ncols();
    let g = g_tot.diag();
    let mut values = Vec::with_capacity(users * layout.s());
    for (a, &k) in filters.iter().zip(layout.occupied()) {
        let eff = g_tot.apply_left(&h[k]);
        let proj = a.adjoint() * &eff; // U x U, identity for ZF
        let ce = &c_e_tot_freq[k];
        for u in 0..users {
            let au = a.column(u);
            let signal = proj[(u, u)].norm_sqr();
            let interference: f64 = (0..users)
                .filter(|&v| v != u)
                .map(|v| proj[(u, v)].norm_sqr())
                .sum();
            let noise = n0
                * au.iter()
                    .zip(g)
                    .map(|(x, gb)| (x.conj() * gb).norm_sqr())
                    .sum::<f64>();
            let dist = (au.adjoint() * ce * au)[(0, 0)].re.max(0.0);
            let den = interference + noise + dist;
            values.push(if den > 0.0 {
                signal / den
            } else {
                f64::INFINITY
            });
        }
    }
    Ok(SindrGrid { users, values })
}

/// `(1/(US)) Σ Q(sqrt(SINDR))`
pub fn ber_analytic(grid: &SindrGrid) -> f64 {
    if grid.values.is_empty() {
        return 0.0;
    }
    grid.values
        .iter()
        .map(|&s| q_function(s.max(0.0).sqrt()))
        .sum::<f64>()
        / grid.values.len() as f64
}

/// Analytic model, ZF filters and predicted BER for one channel and operating point.
pub struct Receiver {
    pub model: AggregateModel,
    pub filters: Vec<ComplexMatrix>,
    pub sindr: SindrGrid,
    pub ber: f64,
}

impl Receiver {
    pub fn build(
        channel: &ChannelRealization,
        layout: &SubcarrierLayout,
        n0: f64,
        hw: &Hardware,
    ) -> Result<Self> {
        let model = AggregateModel::build(channel, layout, n0, hw)?;
        let filters = zf_matrix(channel.freq(), &model.g_tot, layout)?;
        let sindr = sindr(
            &filters,
            channel.freq(),
            &model.g_tot,
            &model.c_e_tot_freq,
            n0,
            layout,
        )?;
        let ber = ber_analytic(&sindr);
        Ok(Self {
            model,
            filters,
            sindr,
            ber,
        })
    }

    /// ZF estimates `Â^H[k] r̂[k]` (`U x N`, zero on guard subcarriers).
    pub fn equalize(&self, received: &ComplexMatrix, layout: &SubcarrierLayout) -> ComplexMatrix {
        let users = self.filters.first().map_or(0, |a| a.ncols());
        let mut est = ComplexMatrix::zeros(users, layout.n());
        for (a, &k) in self.filters.iter().zip(layout.occupied()) {
            let s = a.adjoint() * received.column(k);
            est.set_column(k, &s);
        }
        est
    }
}

/// Noise level and hardware for one point of a BER sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub n0: f64,
    pub hardware: Hardware,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub n0: f64,
    pub ber_analytic: f64,
    pub ber_mc: f64,
    /// 95% normal-approximation binomial half-width.
    pub half_width: f64,
    pub n_bits: u64,
    pub n_errors: u64,
    pub n_channels: usize,
    pub redraws: usize,
}

/// `1.96 sqrt(p(1-p)/n)`
pub fn binomial_half_width(errors: u64, bits: u64) -> f64 {
    if bits == 0 {
        return 0.0;
    }
    let p = errors as f64 / bits as f64;
    1.96 * (p * (1.0 - p) / bits as f64).sqrt()
}

struct ChannelTrial {
    redraws: usize,
    errors: Vec<u64>,
    analytic: Vec<f64>,
}

/// Draw channel `index`, redrawing while some occupied subcarrier is rank deficient.
pub fn draw_usable_channel(
    sys: &SystemConfig,
    seed: u64,
    index: u32,
) -> Result<(ChannelRealization, usize)> {
    const MAX_REDRAWS: u32 = 1000;
    for attempt in 0..MAX_REDRAWS {
        let mut rng = RngStream::derive(seed, domain::CHANNEL, index, attempt);
        let ch = sys.draw_channel(&mut rng)?;
        let unit = DiagonalGain::identity(sys.antennas);
        match zf_matrix(ch.freq(), &unit, &sys.layout) {
            Ok(_) => return Ok((ch, attempt as usize)),
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(invalid(
        "channel",
        "no full-rank channel after repeated redraws",
    ))
}

/// Monte-Carlo and analytic BER over a set of operating points that share
/// the same `n_channels` channel realizations. Each channel is one unit of
/// parallel work; frame streams are keyed by `(point, channel, frame)`.
pub fn ber_sweep(
    sys: &SystemConfig,
    points: &[OperatingPoint],
    n_channels: usize,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<BerPoint>> {
    if n_channels == 0 || n_frames == 0 {
        return Err(invalid("trials", "need at least one channel and one frame"));
    }
    if sys.symbols != SymbolMode::Qpsk {
        return Err(invalid("symbols", "bit error counting needs QPSK symbols"));
    }
    let trials: Vec<ChannelTrial> = (0..n_channels)
        .into_par_iter()
        .map(|c| {
            let (channel, redraws) = draw_usable_channel(sys, seed, c as u32)?;
            let mut errors = Vec::with_capacity(points.len());
            let mut analytic = Vec::with_capacity(points.len());
            for (pi, point) in points.iter().enumerate() {
                let rx = Receiver::build(&channel, &sys.layout, point.n0, &point.hardware)?;
                let run = SystemConfig {
                    n0: point.n0,
                    hardware: point.hardware,
                    ..sys.clone()
                };
                let mut errs = 0u64;
                for f in 0..n_frames {
                    let stream = (c * n_frames + f) as u32;
                    let mut rng = RngStream::derive(seed, domain::BER_FRAME, pi as u32, stream);
                    let out = simulate_frame(&run, &channel, &mut rng)?;
                    let est = rx.equalize(&out.received, &sys.layout);
                    let decided = qpsk_demap(&est, &sys.layout);
                    errs += decided
                        .count_differences(out.bits.as_ref().expect("qpsk frame carries bits"));
                }
                errors.push(errs);
                analytic.push(rx.ber);
            }
            Ok(ChannelTrial {
                redraws,
                errors,
                analytic,
            })
        })
        .collect::<Result<_>>()?;

    let bits_per_frame = (2 * sys.users * sys.layout.s()) as u64;
    let n_bits = bits_per_frame * (n_channels * n_frames) as u64;
    let redraws = trials.iter().map(|t| t.redraws).sum();
    Ok(points
        .iter()
        .enumerate()
        .map(|(pi, point)| {
            let n_errors: u64 = trials.iter().map(|t| t.errors[pi]).sum();
            let ber_analytic =
                trials.iter().map(|t| t.analytic[pi]).sum::<f64>() / n_channels as f64;
            BerPoint {
                n0: point.n0,
                ber_analytic,
                ber_mc: n_errors as f64 / n_bits as f64,
                half_width: binomial_half_width(n_errors, n_bits),
                n_bits,
                n_errors,
                n_channels,
                redraws,
            }
        })
        .collect())
}

/// Single-point BER at `sys.n0` with `sys.hardware`.
pub fn ber_monte_carlo(
    sys: &SystemConfig,
    n_channels: usize,
    n_frames: usize,
    seed: u64,
) -> Result<BerPoint> {
    let point = OperatingPoint {
        n0: sys.n0,
        hardware: sys.hardware,
    };
    Ok(ber_sweep(sys, &[point], n_channels, n_frames, seed)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Cplx, ONE};
    use crate::waveform::make_layout;

    fn unit_gain(b: usize) -> DiagonalGain {
        DiagonalGain::identity(b)
    }

    #[test]
    fn zf_identity_cases() {
        let a = zf_single(&ComplexMatrix::identity(3, 3), &unit_gain(3), 0).unwrap();
        assert!((a - ComplexMatrix::identity(3, 3)).norm() < 1e-14);

        let h = ComplexMatrix::from_column_slice(2, 1, &[ONE, Cplx::new(0.0, 1.0)]);
        let a = zf_single(&h, &unit_gain(2), 0).unwrap();
        assert!((a[(0, 0)] - Cplx::new(0.5, 0.0)).norm() < 1e-14);
        assert!((a[(1, 0)] - Cplx::new(0.0, 0.5)).norm() < 1e-14);
        assert!(((a.adjoint() * &h)[(0, 0)] - ONE).norm() < 1e-14);
    }

    #[test]
    fn zf_rank_deficiency_reported() {
        let h = ComplexMatrix::from_fn(4, 2, |r, _| Cplx::new(r as f64 + 1.0, 0.0));
        assert!(matches!(
            zf_single(&h, &unit_gain(4), 7),
            Err(Error::RankDeficient { subcarrier: 7, .. })
        ));
    }

    #[test]
    fn zf_random_identity() {
        let mut rng = RngStream::new(1, 0);
        let layout = make_layout(32, 12).unwrap();
        let ch = draw_channel(8, 3, 4, 32, &mut rng).unwrap();
        let g = DiagonalGain::new(
            (0..8)
                .map(|i| Cplx::new(0.9 + 0.01 * i as f64, 0.02))
                .collect(),
        );
        let filters = zf_matrix(ch.freq(), &g, &layout).unwrap();
        for (a, &k) in filters.iter().zip(layout.occupied()) {
            let p = a.adjoint() * g.apply_left(&ch.freq()[k]);
            assert!(
                (p - ComplexMatrix::identity(3, 3))
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
                    < 1e-9
            );
        }
    }

    #[test]
    fn scalar_sindr() {
        let ch = ChannelRealization::from_taps(
            vec![ComplexMatrix::from_element(1, 1, Cplx::new(2.0, 0.0))],
            4,
        )
        .unwrap();
        let layout = SubcarrierLayout::from_occupied(4, vec![1]).unwrap();
        let g = unit_gain(1);
        let filters = zf_matrix(ch.freq(), &g, &layout).unwrap();
        assert!((filters[0][(0, 0)] - Cplx::new(0.5, 0.0)).norm() < 1e-14);
        let ce = SubcarrierCovarianceSet::zeros(1, 4);
        let grid = sindr(&filters, ch.freq(), &g, &ce, 1.0, &layout).unwrap();
        assert!((grid.get(0, 0) - 4.0).abs() < 1e-12);
        let noiseless = sindr(&filters, ch.freq(), &g, &ce, 0.0, &layout).unwrap();
        assert_eq!(noiseless.get(0, 0), f64::INFINITY);
        assert_eq!(ber_analytic(&noiseless), 0.0);
    }

    #[test]
    fn ber_formula_limits() {
        let one = SindrGrid {
            users: 1,
            values: vec![1.0],
        };
        assert!((ber_analytic(&one) - 0.158_655_253_931_457).abs() < 1e-12);
        let zero = SindrGrid {
            users: 2,
            values: vec![0.0; 4],
        };
        assert_eq!(ber_analytic(&zero), 0.5);
    }

    #[test]
    fn half_width() {
        assert_eq!(binomial_half_width(0, 100), 0.0);
        assert!((binomial_half_width(50, 100) - 1.96 * 0.05).abs() < 1e-15);
    }
}
