//! Bussgang linearization of each receive-chain stage and the aggregate
//! distortion model.
//!
//! Every stage is written as `out[n] = G in[n] + e[n]` with a diagonal gain
//! `G` and a distortion `e` uncorrelated with the input. The stage outputs
//! are described by circular lag-covariance sequences `C[m]`, `m = 0..N-1`,
//! which are paired with per-subcarrier covariances through
//!
//! ```text
//! C[m] = (1/N) Σ_k Ĉ[k] e^{+j2πkm/N},    Ĉ[k] = Σ_m C[m] e^{-j2πkm/N}.
//! ```
//!
//! Composing the three stages gives `r[n] ≈ G_tot x[n] + e_tot[n]` with
//! `G_tot = G_adc G_osc G_lna` and
//! `e_tot = e_adc + G_adc e_osc + G_adc G_osc e_lna`.

use std::f64::consts::PI;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::impairments::{AdcParams, Hardware, LnaParams, PhaseNoiseParams};
use crate::numerics::{
    fft_raw, min_eigenvalue, q_function, trace_re, ComplexMatrix, Cplx, Direction, ONE, ZERO,
};
use crate::waveform::SubcarrierLayout;

/// Circular sequence of `B x B` spatial covariances `C[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagCovarianceSequence {
    mats: Vec<ComplexMatrix>,
}

/// Per-subcarrier `B x B` covariances `Ĉ[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierCovarianceSet {
    mats: Vec<ComplexMatrix>,
}

macro_rules! covariance_seq_common {
    ($t:ty) => {
        impl $t {
            pub fn new(mats: Vec<ComplexMatrix>) -> Result<Self> {
                let first = mats.first().ok_or(Error::Empty("covariance sequence"))?;
                let b = first.nrows();
                for m in &mats {
                    if m.nrows() != b || m.ncols() != b {
                        return Err(Error::DimensionMismatch {
                            context: "covariance matrix shape",
                            expected: b,
                            got: m.nrows().max(m.ncols()),
                        });
                    }
                }
                Ok(Self { mats })
            }

            pub fn zeros(b: usize, n: usize) -> Self {
                Self {
                    mats: vec![ComplexMatrix::zeros(b, b); n],
                }
            }

            pub fn n(&self) -> usize {
                self.mats.len()
            }

            pub fn dim(&self) -> usize {
                self.mats[0].nrows()
            }

            pub fn mats(&self) -> &[ComplexMatrix] {
                &self.mats
            }

            pub fn into_mats(self) -> Vec<ComplexMatrix> {
                self.mats
            }
        }

        impl std::ops::Index<usize> for $t {
            type Output = ComplexMatrix;

            fn index(&self, i: usize) -> &ComplexMatrix {
                &self.mats[i]
            }
        }
    };
}

covariance_seq_common!(LagCovarianceSequence);
covariance_seq_common!(SubcarrierCovarianceSet);

impl LagCovarianceSequence {
    /// Largest violation of `C[N-m] = C[m]^H` (including `C[0] = C[0]^H`).
    pub fn circular_hermitian_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for m in 0..n {
            let partner = (n - m) % n;
            let d = (&self.mats[partner] - self.mats[m].adjoint())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            worst = worst.max(d);
        }
        worst
    }
}

impl SubcarrierCovarianceSet {
    /// Smallest `λ_min(Ĉ[k]) / max(tr Ĉ[k], tiny)` over all subcarriers.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        self.mats
            .iter()
            .map(|m| min_eigenvalue(m) / trace_re(m).abs().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-subcarrier diagonal power averaged over the `B` antennas.
    pub fn mean_diagonal(&self) -> Vec<f64> {
        let b = self.dim() as f64;
        self.mats.iter().map(|m| trace_re(m) / b).collect()
    }
}

/// Diagonal gain matrix stored by its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGain(Vec<Cplx>);

impl DiagonalGain {
    pub fn new(diag: Vec<Cplx>) -> Self {
        Self(diag)
    }

    pub fn identity(b: usize) -> Self {
        Self(vec![ONE; b])
    }

    pub fn scalar(b: usize, g: Cplx) -> Self {
        Self(vec![g; b])
    }

    pub fn diag(&self) -> &[Cplx] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.0))
    }

    /// Product of two diagonal gains.
    pub fn then(&self, outer: &DiagonalGain) -> DiagonalGain {
        DiagonalGain(self.0.iter().zip(&outer.0).map(|(a, b)| a * b).collect())
    }

    /// `G C G^H`
    pub fn sandwich(&self, c: &ComplexMatrix) -> ComplexMatrix {
        let g = &self.0;
        ComplexMatrix::from_fn(c.nrows(), c.ncols(), |i, j| g[i] * c[(i, j)] * g[j].conj())
    }

    /// `G A` for a general left operand with `B` rows.
    pub fn apply_left(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let mut out = a.clone();
        for (i, g) in self.0.iter().enumerate() {
            for v in out.row_mut(i).iter_mut() {
                *v *= g;
            }
        }
        out
    }
}

/// Linearized model of one stage for a given input covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedComponent {
    pub gain: DiagonalGain,
    pub dist_cov: LagCovarianceSequence,
    pub out_cov: LagCovarianceSequence,
}

impl LinearizedComponent {
    /// Ideal stage: unit gain, no distortion, output equals input.
    pub fn identity(input: &LagCovarianceSequence) -> Self {
        Self {
            gain: DiagonalGain::identity(input.dim()),
            dist_cov: LagCovarianceSequence::zeros(input.dim(), input.n()),
            out_cov: input.clone(),
        }
    }
}

/// `Ĉ_x[k] = Ĥ[k] C_ŝ[k] Ĥ^H[k] + N0 I` with unit-power symbols on the
/// occupied subcarriers and none on the guards.
pub fn signal_cov_freq(
    channel: &ChannelRealization,
    layout: &SubcarrierLayout,
    n0: f64,
) -> Result<SubcarrierCovarianceSet> {
    if channel.n() != layout.n() {
        return Err(Error::DimensionMismatch {
            context: "signal_cov_freq subcarriers",
            expected: layout.n(),
            got: channel.n(),
        });
    }
    let b = channel.antennas();
    let noise = ComplexMatrix::identity(b, b).scale(n0);
    let mats = channel
        .freq()
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if layout.is_occupied(k) {
                h * h.adjoint() + &noise
            } else {
                noise.clone()
            }
        })
        .collect();
    Ok(SubcarrierCovarianceSet { mats })
}

fn transform_entries(src: &[ComplexMatrix], dir: Direction, scale: f64) -> Vec<ComplexMatrix> {
    let n = src.len();
    let b = src[0].nrows();
    let mut out = vec![ComplexMatrix::zeros(b, b); n];
    let mut buf = vec![ZERO; n];
    for i in 0..b {
        for j in 0..b {
            for (slot, m) in buf.iter_mut().zip(src) {
                *slot = m[(i, j)];
            }
            fft_raw(&mut buf, dir);
            for (dst, v) in out.iter_mut().zip(&buf) {
                dst[(i, j)] = v * scale;
            }
        }
    }
    out
}

/// `C[m] = (1/N) Σ_k Ĉ[k] e^{+j2πkm/N}`
pub fn cov_freq_to_lag(c: &SubcarrierCovarianceSet) -> LagCovarianceSequence {
    let n = c.n() as f64;
    LagCovarianceSequence {
        mats: transform_entries(&c.mats, Direction::Inverse, 1.0 / n),
    }
}

/// `Ĉ[k] = Σ_m C[m] e^{-j2πkm/N}`
pub fn cov_lag_to_freq(c: &LagCovarianceSequence) -> SubcarrierCovarianceSet {
    SubcarrierCovarianceSet {
        mats: transform_entries(&c.mats, Direction::Forward, 1.0),
    }
}

fn lag_powers(c: &LagCovarianceSequence) -> Vec<f64> {
    c[0].diagonal().iter().map(|z| z.re).collect()
}

/// Third-order LNA: gain `α1 + 2 α2 E|x_b|²`, output lag covariance from the
/// Gaussian sixth-moment expansion, distortion `2|α2|² C_x[m] ∘ |C_x[m]|²`.
pub fn lna_linearize(c_x: &LagCovarianceSequence, p: &LnaParams) -> LinearizedComponent {
    let b = c_x.dim();
    let pw = lag_powers(c_x);
    let (a1, a2) = (p.alpha1, p.alpha2);
    let gain = DiagonalGain(pw.iter().map(|&d| a1 + 2.0 * a2 * d).collect());
    let a1_sq = a1.norm_sqr();
    let a2_sq = a2.norm_sqr();
    let cross_left = 2.0 * a1.conj() * a2; // multiplies diag(C_x[0]) C_x[m]
    let cross_right = 2.0 * a2.conj() * a1; // multiplies C_x[m] diag(C_x[0])

    let mut out = Vec::with_capacity(c_x.n());
    let mut dist = Vec::with_capacity(c_x.n());
    for cm in c_x.mats() {
        let hadamard_cube = cm.map(|z| z * z.norm_sqr());
        let e = hadamard_cube.scale(2.0 * a2_sq);
        let y = ComplexMatrix::from_fn(b, b, |i, j| {
            let c = cm[(i, j)];
            a1_sq * c
                + e[(i, j)]
                + cross_left * pw[i] * c
                + cross_right * c * pw[j]
                + 4.0 * a2_sq * pw[i] * c * pw[j]
        });
        out.push(y);
        dist.push(e);
    }
    LinearizedComponent {
        gain,
        dist_cov: LagCovarianceSequence { mats: dist },
        out_cov: LagCovarianceSequence { mats: out },
    }
}

/// Circular lag distance `min(m, N - m)`.
fn circular_lag(m: usize, n: usize) -> usize {
    m.min(n - m)
}

/// Common-LO phase noise: gain `e^{-σ_φ²/2}`, output
/// `C_z[m] = e^{-σ_φ² + ρ(m)} C_y[m]` with `ρ(m) = σ_φ² λ^{|m|}`.
pub fn osc_linearize(c_y: &LagCovarianceSequence, p: &PhaseNoiseParams) -> LinearizedComponent {
    let n = c_y.n();
    let s2 = p.sigma_phi_sq();
    let g = (-0.5 * s2).exp();
    let floor = (-s2).exp();
    let mut out = Vec::with_capacity(n);
    let mut dist = Vec::with_capacity(n);
    for (m, cm) in c_y.mats().iter().enumerate() {
        let lam = p.lambda().powi(circular_lag(m, n) as i32);
        let coherent = (-s2 * (1.0 - lam)).exp();
        out.push(cm.scale(coherent));
        dist.push(cm.scale(coherent - floor));
    }
    LinearizedComponent {
        gain: DiagonalGain::scalar(c_y.dim(), Cplx::new(g, 0.0)),
        dist_cov: LagCovarianceSequence { mats: dist },
        out_cov: LagCovarianceSequence { mats: out },
    }
}

/// Per-antenna Bussgang gain of the midrise quantizer for input power `power`.
pub fn adc_gain(p: &AdcParams, power: f64) -> f64 {
    let delta = p.delta();
    let half = (p.levels() / 2) as f64;
    let sum: f64 = (1..p.levels())
        .map(|i| {
            let c = i as f64 - half;
            (-delta * delta * c * c / power).exp()
        })
        .sum();
    delta / (PI.sqrt() * power.sqrt()) * sum
}

/// Diagonal-approximation distortion power of the quantizer for input power
/// `power` and Bussgang gain `gain`.
pub fn adc_distortion_power(p: &AdcParams, power: f64, gain: f64) -> f64 {
    let delta = p.delta();
    let levels = p.levels() as f64;
    let half = levels / 2.0;
    let sigma = power.sqrt();
    let tail: f64 = (1..p.levels())
        .map(|i| {
            let c = i as f64 - half;
            c * (1.0 - q_function(std::f64::consts::SQRT_2 * delta * c / sigma))
        })
        .sum();
    0.5 * delta * delta * (levels - 1.0).powi(2) - gain * gain * power - 4.0 * delta * delta * tail
}

/// Quantizer linearization from the input lag covariance. Only `C_z[0]`
/// enters the gain and the distortion; the distortion is white and
/// uncorrelated across antennas.
pub fn adc_linearize(c_z: &LagCovarianceSequence, p: &AdcParams) -> Result<LinearizedComponent> {
    let b = c_z.dim();
    let n = c_z.n();
    let pw = lag_powers(c_z);
    let mut gains = Vec::with_capacity(b);
    let mut dist0 = ComplexMatrix::zeros(b, b);
    for (antenna, &power) in pw.iter().enumerate() {
        if !(power > 0.0) {
            return Err(Error::ZeroPower { antenna });
        }
        let g = adc_gain(p, power);
        dist0[(antenna, antenna)] = Cplx::new(adc_distortion_power(p, power, g).max(0.0), 0.0);
        gains.push(Cplx::new(g, 0.0));
    }
    let gain = DiagonalGain(gains);
    let mut dist = vec![ComplexMatrix::zeros(b, b); n];
    dist[0] = dist0;
    let out = c_z
        .mats()
        .iter()
        .zip(&dist)
        .map(|(c, e)| gain.sandwich(c) + e)
        .collect();
    Ok(LinearizedComponent {
        gain,
        dist_cov: LagCovarianceSequence { mats: dist },
        out_cov: LagCovarianceSequence { mats: out },
    })
}

/// How the stage distortions are combined into `C_e_tot[m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Composition {
    /// `C_e_adc + G_adc C_e_osc G_adc^H + G_adc G_osc C_e_lna G_osc^H G_adc^H`,
    /// which is what `e_tot = e_adc + G_adc e_osc + G_adc G_osc e_lna` implies.
    #[default]
    Consistent,
    /// Repeats the oscillator term in place of the LNA term. Only used as a
    /// negative control in validation.
    DroppedLna,
}

/// Aggregate linearized model of the whole receive chain.
#[derive(Debug, Clone)]
pub struct AggregateModel {
    pub g_lna: DiagonalGain,
    pub g_osc: DiagonalGain,
    pub g_adc: DiagonalGain,
    pub g_tot: DiagonalGain,
    pub c_e_tot: LagCovarianceSequence,
    pub c_e_tot_freq: SubcarrierCovarianceSet,
    pub c_r_freq: SubcarrierCovarianceSet,
    pub c_x_freq: SubcarrierCovarianceSet,
}

pub fn aggregate(
    c_x_freq: &SubcarrierCovarianceSet,
    lna: &LinearizedComponent,
    osc: &LinearizedComponent,
    adc: &LinearizedComponent,
) -> Result<AggregateModel> {
    aggregate_with(c_x_freq, lna, osc, adc, Composition::Consistent)
}

pub fn aggregate_with(
    c_x_freq: &SubcarrierCovarianceSet,
    lna: &LinearizedComponent,
    osc: &LinearizedComponent,
    adc: &LinearizedComponent,
    composition: Composition,
) -> Result<AggregateModel> {
    let b = c_x_freq.dim();
    let n = c_x_freq.n();
    for (ctx, comp) in [
        ("lna component", lna),
        ("oscillator component", osc),
        ("adc component", adc),
    ] {
        if comp.gain.dim() != b || comp.dist_cov.dim() != b {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: b,
                got: comp.dist_cov.dim(),
            });
        }
        if comp.dist_cov.n() != n {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: n,
                got: comp.dist_cov.n(),
            });
        }
    }
    let g_osc_adc = osc.gain.then(&adc.gain);
    let g_tot = lna.gain.then(&g_osc_adc);
    let mats = (0..n)
        .map(|m| {
            let mut c = adc.dist_cov[m].clone();
            c += adc.gain.sandwich(&osc.dist_cov[m]);
            match composition {
                Composition::Consistent => c += g_osc_adc.sandwich(&lna.dist_cov[m]),
                Composition::DroppedLna => c += g_osc_adc.sandwich(&osc.dist_cov[m]),
            }
            c
        })
        .collect();
    let c_e_tot = LagCovarianceSequence { mats };
    let c_e_tot_freq = cov_lag_to_freq(&c_e_tot);
    let c_r_freq = SubcarrierCovarianceSet {
        mats: c_x_freq
            .mats()
            .iter()
            .zip(c_e_tot_freq.mats())
            .map(|(cx, ce)| g_tot.sandwich(cx) + ce)
            .collect(),
    };
    Ok(AggregateModel {
        g_lna: lna.gain.clone(),
        g_osc: osc.gain.clone(),
        g_adc: adc.gain.clone(),
        g_tot,
        c_e_tot,
        c_e_tot_freq,
        c_r_freq,
        c_x_freq: c_x_freq.clone(),
    })
}

/// The three linearized stages for one channel and noise level.
pub struct StageModels {
    pub c_x_freq: SubcarrierCovarianceSet,
    pub c_x: LagCovarianceSequence,
    pub lna: LinearizedComponent,
    pub osc: LinearizedComponent,
    pub adc: LinearizedComponent,
}

impl StageModels {
    pub fn build(
        channel: &ChannelRealization,
        layout: &SubcarrierLayout,
        n0: f64,
        hw: &Hardware,
    ) -> Result<Self> {
        let c_x_freq = signal_cov_freq(channel, layout, n0)?;
        let c_x = cov_freq_to_lag(&c_x_freq);
        let lna = match &hw.lna {
            Some(p) => lna_linearize(&c_x, p),
            None => LinearizedComponent::identity(&c_x),
        };
        let osc = match &hw.pn {
            Some(p) => osc_linearize(&lna.out_cov, p),
            None => LinearizedComponent::identity(&lna.out_cov),
        };
        let adc = match &hw.adc {
            Some(p) => adc_linearize(&osc.out_cov, p)?,
            None => LinearizedComponent::identity(&osc.out_cov),
        };
        Ok(Self {
            c_x_freq,
            c_x,
            lna,
            osc,
            adc,
        })
    }

    pub fn aggregate(&self, composition: Composition) -> Result<AggregateModel> {
        aggregate_with(&self.c_x_freq, &self.lna, &self.osc, &self.adc, composition)
    }
}

impl AggregateModel {
    pub fn build(
        channel: &ChannelRealization,
        layout: &SubcarrierLayout,
        n0: f64,
        hw: &Hardware,
    ) -> Result<Self> {
        StageModels::build(channel, layout, n0, hw)?.aggregate(Composition::Consistent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::numerics::RngStream;
    use crate::waveform::make_layout;

    fn random_lag_cov(b: usize, n: usize, seed: u64) -> LagCovarianceSequence {
        let mut rng = RngStream::new(seed, 0);
        let ch = draw_channel(b, 2, 3, n, &mut rng).unwrap();
        let layout = make_layout(n, n / 2).unwrap();
        cov_freq_to_lag(&signal_cov_freq(&ch, &layout, 0.1).unwrap())
    }

    fn scalar_seq(v: f64, n: usize) -> LagCovarianceSequence {
        let mut mats = vec![ComplexMatrix::zeros(1, 1); n];
        mats[0][(0, 0)] = Cplx::new(v, 0.0);
        LagCovarianceSequence::new(mats).unwrap()
    }

    fn reference_lna() -> LnaParams {
        LnaParams::new(Cplx::new(1.065, 0.0), Cplx::new(-0.028, 0.0)).unwrap()
    }

    fn reference_pn() -> PhaseNoiseParams {
        PhaseNoiseParams::new(0.99, 1e3, 1.0 / 15.36e6).unwrap()
    }

    #[test]
    fn flat_spectrum_is_white() {
        let set = SubcarrierCovarianceSet::new(vec![ComplexMatrix::identity(2, 2); 8]).unwrap();
        let lag = cov_freq_to_lag(&set);
        assert!((&lag[0] - ComplexMatrix::identity(2, 2)).norm() < 1e-14);
        for m in 1..8 {
            assert!(lag[m].norm() < 1e-14);
        }
    }

    #[test]
    fn lag_freq_round_trip_and_symmetry() {
        let lag = random_lag_cov(3, 16, 1);
        assert!(lag.circular_hermitian_defect() < 1e-14);
        let freq = cov_lag_to_freq(&lag);
        for m in freq.mats() {
            assert!(crate::numerics::is_hermitian(m, 1e-12));
        }
        let back = cov_freq_to_lag(&freq);
        for (a, b) in back.mats().iter().zip(lag.mats()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn lag_impulse_is_flat() {
        let a = ComplexMatrix::from_fn(2, 2, |i, j| {
            Cplx::new((i + 2 * j) as f64, i as f64 - j as f64)
        });
        let mut mats = vec![ComplexMatrix::zeros(2, 2); 5];
        mats[0] = a.clone();
        let f = cov_lag_to_freq(&LagCovarianceSequence::new(mats).unwrap());
        for m in f.mats() {
            assert!((m - &a).norm() < 1e-14);
        }
    }

    #[test]
    fn signal_cov_scalar_case() {
        let ch = ChannelRealization::from_taps(
            vec![ComplexMatrix::from_element(1, 1, Cplx::new(2.0, 0.0))],
            4,
        )
        .unwrap();
        let layout = SubcarrierLayout::from_occupied(4, vec![1]).unwrap();
        let c = signal_cov_freq(&ch, &layout, 1.0).unwrap();
        assert!((c[1][(0, 0)] - Cplx::new(5.0, 0.0)).norm() < 1e-14);
        assert!((c[0][(0, 0)] - Cplx::new(1.0, 0.0)).norm() < 1e-14);
        let c0 = signal_cov_freq(&ch, &layout, 0.0).unwrap();
        assert_eq!(c0[2][(0, 0)], ZERO);
    }

    #[test]
    fn lna_linear_device() {
        let c_x = random_lag_cov(2, 8, 2);
        let p = LnaParams::new(Cplx::new(0.8, 0.3), Cplx::new(0.0, 0.0)).unwrap();
        let lin = lna_linearize(&c_x, &p);
        assert!(lin
            .gain
            .diag()
            .iter()
            .all(|g| (g - p.alpha1).norm() < 1e-15));
        for m in 0..8 {
            assert!(lin.dist_cov[m].norm() == 0.0);
            assert!((&lin.out_cov[m] - c_x[m].scale(p.alpha1.norm_sqr())).norm() < 1e-14);
        }
    }

    #[test]
    fn lna_scalar_values() {
        let lin = lna_linearize(&scalar_seq(1.172, 4), &reference_lna());
        assert!((lin.gain.diag()[0] - Cplx::new(0.999_368, 0.0)).norm() < 1e-12);
        let lin1 = lna_linearize(&scalar_seq(1.0, 4), &reference_lna());
        assert!((lin1.dist_cov[0][(0, 0)].re - 1.568e-3).abs() < 1e-15);
        // E|y|² = |α1|² + 4 Re(α1 α2*) + 6 |α2|² for unit-power Gaussian x
        let a1 = 1.065f64;
        let a2 = -0.028f64;
        let want = a1 * a1 + 4.0 * a1 * a2 + 6.0 * a2 * a2;
        assert!((lin1.out_cov[0][(0, 0)].re - want).abs() < 1e-13);
    }

    #[test]
    fn lna_identity_holds() {
        let c_x = random_lag_cov(3, 16, 3);
        let p = LnaParams::new(Cplx::new(1.065, 0.2), Cplx::new(-0.028, 0.05)).unwrap();
        let lin = lna_linearize(&c_x, &p);
        for m in 0..16 {
            let resid = &lin.out_cov[m] - lin.gain.sandwich(&c_x[m]) - &lin.dist_cov[m];
            assert!(
                resid.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12,
                "lag {m}"
            );
        }
    }

    #[test]
    fn osc_values_and_identity() {
        let c_y = random_lag_cov(2, 32, 4);
        let p = reference_pn();
        let lin = osc_linearize(&c_y, &p);
        let g = lin.gain.diag()[0].re;
        assert!((g - (-0.010_277_6f64).exp()).abs() < 1e-6);
        assert!((g - 0.98977).abs() < 1e-5);
        assert_eq!(lin.out_cov[0], c_y[0]);
        let frac = 1.0 - (-p.sigma_phi_sq()).exp();
        assert!((&lin.dist_cov[0] - c_y[0].scale(frac)).norm() < 1e-14);
        assert!((frac - 0.02035).abs() < 1e-4);
        for m in 0..32 {
            let resid = &lin.out_cov[m] - lin.gain.sandwich(&c_y[m]) - &lin.dist_cov[m];
            assert!(resid.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
        }
        assert!(lin.out_cov.circular_hermitian_defect() < 1e-13);
        assert!(lin.dist_cov.circular_hermitian_defect() < 1e-13);
    }

    #[test]
    fn osc_without_noise_is_transparent() {
        let c_y = random_lag_cov(2, 8, 5);
        let p = PhaseNoiseParams::new(0.9, 0.0, 1e-6).unwrap();
        let lin = osc_linearize(&c_y, &p);
        assert!(lin.gain.diag().iter().all(|&g| g == ONE));
        assert_eq!(lin.out_cov, c_y);
        assert!(lin.dist_cov.mats().iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn osc_gain_decreases_with_beta() {
        let c_y = scalar_seq(1.0, 4);
        let mut last = 1.0;
        for beta in [1.0, 10.0, 100.0, 1e3, 1e4] {
            let g = osc_linearize(
                &c_y,
                &PhaseNoiseParams::new(0.99, beta, 1.0 / 15.36e6).unwrap(),
            )
            .gain
            .diag()[0]
                .re;
            assert!(g > 0.0 && g <= 1.0 && g < last);
            last = g;
        }
    }

    #[test]
    fn one_bit_gain() {
        let p = AdcParams::new(1, 0.7).unwrap();
        let g = adc_gain(&p, 0.49);
        assert!((g - 1.0 / PI.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fine_quantizer_gain_near_one() {
        let p = AdcParams::new(12, 0.01).unwrap();
        let g = adc_gain(&p, 1.0);
        assert!((0.999..=1.001).contains(&g));
    }

    #[test]
    fn adc_distortion_fine_quantizer_is_granular() {
        // far from saturation the error is uniform with power Δ²/6 (complex)
        let delta = 0.01;
        let p = AdcParams::new(12, delta).unwrap();
        let g = adc_gain(&p, 1.0);
        let d = adc_distortion_power(&p, 1.0, g);
        assert!((d / (delta * delta / 6.0) - 1.0).abs() < 1e-3, "{d}");
    }

    #[test]
    fn adc_rejects_dead_antenna() {
        let mut mats = vec![ComplexMatrix::zeros(2, 2); 4];
        mats[0][(0, 0)] = ONE;
        let seq = LagCovarianceSequence::new(mats).unwrap();
        let p = AdcParams::new(3, 0.5).unwrap();
        assert_eq!(
            adc_linearize(&seq, &p).unwrap_err(),
            Error::ZeroPower { antenna: 1 }
        );
    }

    #[test]
    fn adc_distortion_only_at_lag_zero() {
        let c_z = random_lag_cov(3, 16, 6);
        let p = AdcParams::new(6, 0.086).unwrap();
        let lin = adc_linearize(&c_z, &p).unwrap();
        for m in 1..16 {
            assert!(lin.dist_cov[m].norm() == 0.0);
        }
        let d0 = &lin.dist_cov[0];
        for i in 0..3 {
            assert!(d0[(i, i)].re > 0.0);
            for j in 0..3 {
                if i != j {
                    assert_eq!(d0[(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn ideal_chain_reduces_exactly() {
        let mut rng = RngStream::new(7, 0);
        let ch = draw_channel(4, 2, 3, 32, &mut rng).unwrap();
        let layout = make_layout(32, 12).unwrap();
        let model = AggregateModel::build(&ch, &layout, 0.3, &Hardware::ideal()).unwrap();
        assert!(model.g_tot.diag().iter().all(|&g| g == ONE));
        assert!(model
            .c_e_tot
            .mats()
            .iter()
            .all(|m| m.iter().all(|z| *z == ZERO)));
        assert_eq!(model.c_r_freq, model.c_x_freq);
    }

    #[test]
    fn lna_only_chain() {
        let mut rng = RngStream::new(8, 0);
        let ch = draw_channel(3, 2, 3, 32, &mut rng).unwrap();
        let layout = make_layout(32, 12).unwrap();
        let hw = Hardware {
            lna: Some(reference_lna()),
            ..Hardware::ideal()
        };
        let stages = StageModels::build(&ch, &layout, 0.0, &hw).unwrap();
        let model = stages.aggregate(Composition::Consistent).unwrap();
        assert_eq!(model.g_tot, stages.lna.gain);
        for m in 0..32 {
            assert!((&model.c_e_tot[m] - &stages.lna.dist_cov[m]).norm() < 1e-15);
        }
    }

    #[test]
    fn full_chain_covariances_are_valid() {
        let mut rng = RngStream::new(9, 0);
        let ch = draw_channel(4, 2, 4, 64, &mut rng).unwrap();
        let layout = make_layout(64, 20).unwrap();
        let hw = Hardware {
            lna: Some(reference_lna()),
            pn: Some(reference_pn()),
            adc: Some(AdcParams::new(6, 0.086 * (2.0f64 * 20.0 / 64.0).sqrt()).unwrap()),
        };
        let model = AggregateModel::build(&ch, &layout, 0.0, &hw).unwrap();
        let expected = model.g_lna.then(&model.g_osc).then(&model.g_adc);
        assert_eq!(model.g_tot, expected);
        for set in [&model.c_r_freq, &model.c_e_tot_freq] {
            for m in set.mats() {
                assert!(crate::numerics::is_hermitian(m, 1e-12));
                assert!(trace_re(m) >= 0.0);
            }
            assert!(set.min_relative_eigenvalue() >= -1e-9);
        }
        assert!(model.c_e_tot.circular_hermitian_defect() < 1e-13);
    }

    #[test]
    fn composition_variants_differ() {
        let mut rng = RngStream::new(10, 0);
        let ch = draw_channel(2, 1, 2, 16, &mut rng).unwrap();
        let layout = make_layout(16, 6).unwrap();
        let hw = Hardware {
            lna: Some(reference_lna()),
            pn: Some(reference_pn()),
            adc: None,
        };
        let stages = StageModels::build(&ch, &layout, 0.0, &hw).unwrap();
        let good = stages.aggregate(Composition::Consistent).unwrap();
        let bad = stages.aggregate(Composition::DroppedLna).unwrap();
        assert!((&good.c_e_tot[0] - &bad.c_e_tot[0]).norm() > 1e-4);
    }
}
