//! Monte-Carlo checks of the analytic model at reduced scale.

mod common;

use rayon::prelude::*;

use hwsim::analysis::{
    ber_monte_carlo, ber_sweep, draw_usable_channel, psd_analytic, psd_empirical, simulate_frame,
    OperatingPoint, PsdMetric, Receiver, SystemConfig,
};
use hwsim::bussgang::{
    adc_distortion_power, adc_gain, lna_linearize, AggregateModel, LagCovarianceSequence,
    StageModels,
};
use hwsim::channel::{apply_channel, draw_channel, ChannelRealization};
use hwsim::impairments::{
    adc_quantize, lna_apply, mixer_apply, phase_noise_path, AdcParams, Hardware, LnaParams,
    PhaseNoiseParams,
};
use hwsim::numerics::{ComplexMatrix, Cplx, RngStream};
use hwsim::waveform::{draw_symbols, make_layout, ofdm_modulate, SubcarrierLayout, SymbolMode};

fn reference_lna() -> LnaParams {
    LnaParams::new(Cplx::new(1.065, 0.0), Cplx::new(-0.028, 0.0)).unwrap()
}

fn reference_pn() -> PhaseNoiseParams {
    PhaseNoiseParams::new(0.99, 1e3, 1.0 / 15.36e6).unwrap()
}

fn full_hardware(power: f64) -> Hardware {
    Hardware {
        lna: Some(reference_lna()),
        pn: Some(reference_pn()),
        adc: Some(AdcParams::new(6, 0.086 * power.sqrt()).unwrap()),
    }
}

#[test]
fn lna_scalar_distortion_matches_samples() {
    let c = LagCovarianceSequence::new(vec![ComplexMatrix::identity(1, 1)]).unwrap();
    let lin = lna_linearize(&c, &reference_lna());
    let closed = lin.dist_cov[0][(0, 0)].re;
    assert!((closed - 1.568e-3).abs() < 1e-9);
    let g = lin.gain.diag()[0];
    let lna = reference_lna();
    let mut rng = RngStream::new(8, 0);
    let n = 1_000_000;
    let mut power = 0.0;
    let mut cross = Cplx::new(0.0, 0.0);
    for _ in 0..n {
        let x = rng.cn(1.0);
        let e = lna.apply(x) - g * x;
        power += e.norm_sqr();
        cross += e * x.conj();
    }
    let power = power / n as f64;
    assert!(
        (power - closed).abs() / closed < 0.03,
        "{power} vs {closed}"
    );
    assert!(cross.norm() / n as f64 <= 4.0 / (n as f64).sqrt());
}

/// Sample cross-covariance between each stage's distortion and its input
/// stays within `4/sqrt(T)` per entry (normalized by the input and
/// distortion scales), with Gaussian symbols.
#[test]
fn bussgang_orthogonality() {
    let (b, u, n, s, l) = (3, 2, 64, 20, 4);
    let n0 = 0.05;
    let layout = make_layout(n, s).unwrap();
    let hw = full_hardware((u * s) as f64 / n as f64);
    let channel = draw_channel(b, u, l, n, &mut RngStream::new(21, 0)).unwrap();
    let model = StageModels::build(&channel, &layout, n0, &hw).unwrap();
    let adc_only = Hardware {
        adc: hw.adc,
        ..Hardware::ideal()
    };
    let adc_model = StageModels::build(&channel, &layout, n0, &adc_only)
        .unwrap()
        .adc;
    let frames = 4000usize;
    let per_frame: Vec<[ComplexMatrix; 3]> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = RngStream::new(22, f as u64);
            let frame = draw_symbols(&layout, u, SymbolMode::Gaussian, &mut rng).unwrap();
            let x = apply_channel(
                &channel,
                &ofdm_modulate(&frame, l - 1).unwrap(),
                n0,
                &mut rng,
            )
            .unwrap();
            let y = lna_apply(&x, hw.lna.as_ref().unwrap());
            let phi = phase_noise_path(hw.pn.as_ref().unwrap(), l - 1 + n, &mut rng)
                .unwrap()
                .split_off(l - 1);
            let z = mixer_apply(&y, &phi).unwrap();
            let r = adc_quantize(&x, hw.adc.as_ref().unwrap());
            let e_lna = &y - model.lna.gain.apply_left(&x);
            let e_osc = &z - model.osc.gain.apply_left(&y);
            let e_adc = &r - adc_model.gain.apply_left(&x);
            [
                &e_lna * x.adjoint(),
                &e_osc * y.adjoint(),
                &e_adc * x.adjoint(),
            ]
        })
        .collect();
    let t = Cplx::new((frames * n) as f64, 0.0);
    let stages = [
        ("lna", &model.c_x[0], &model.lna.dist_cov[0]),
        ("osc", &model.lna.out_cov[0], &model.osc.dist_cov[0]),
        ("adc", &model.c_x[0], &adc_model.dist_cov[0]),
    ];
    for (idx, (name, input, dist)) in stages.iter().enumerate() {
        let mut cross = ComplexMatrix::zeros(b, b);
        for f in &per_frame {
            cross += &f[idx];
        }
        cross /= t;
        for i in 0..b {
            for j in 0..b {
                let scale = (dist[(i, i)].re * input[(j, j)].re).sqrt();
                let normalized = cross[(i, j)].norm() / scale;
                // samples inside a frame are dependent; count frames only
                assert!(
                    normalized <= 4.0 / (frames as f64).sqrt(),
                    "{name} ({i},{j}): {normalized}"
                );
            }
        }
    }
}

#[test]
fn ideal_chain_psd_matches_periodogram() {
    let layout = make_layout(64, 24).unwrap();
    let sys = SystemConfig {
        antennas: 4,
        users: 2,
        taps: 3,
        layout: layout.clone(),
        n0: 0.0,
        hardware: Hardware::ideal(),
        symbols: SymbolMode::Qpsk,
    };
    let ch = sys.draw_channel(&mut RngStream::new(3, 0)).unwrap();
    let model = AggregateModel::build(&ch, &layout, 0.0, &sys.hardware).unwrap();
    let analytic = psd_analytic(&model, PsdMetric::Trace).values;
    let frames = 2000;
    let empirical = psd_empirical(&sys, &ch, frames, 4).unwrap().values;
    for k in 0..64 {
        if layout.is_occupied(k) {
            let expect = ch.freq()[k].norm_squared() / 4.0;
            assert!((analytic[k] - expect).abs() < 1e-12);
            // QPSK power per antenna is a sum of unit-modulus terms, so the
            // spread is bounded by the same quantity
            let sigma = analytic[k] / (frames as f64).sqrt();
            assert!((empirical[k] - analytic[k]).abs() <= 3.0 * sigma, "k={k}");
        } else {
            assert_eq!(analytic[k], 0.0);
            assert!(empirical[k] < 1e-25);
        }
    }
}

#[test]
fn white_noise_periodogram_is_flat() {
    let layout = SubcarrierLayout::from_occupied(32, vec![1]).unwrap();
    let zero = ChannelRealization::from_taps(vec![ComplexMatrix::zeros(4, 1)], 32).unwrap();
    let sys = SystemConfig {
        antennas: 4,
        users: 1,
        taps: 1,
        layout,
        n0: 1.0,
        hardware: Hardware::ideal(),
        symbols: SymbolMode::Gaussian,
    };
    let frames = 5000;
    let p = psd_empirical(&sys, &zero, frames, 9).unwrap().values;
    let sigma = 1.0 / ((frames * 4) as f64).sqrt();
    for v in p {
        assert!((v - 1.0).abs() <= 4.0 * sigma, "{v}");
    }
}

#[test]
fn full_chain_psd_tracks_model_at_small_scale() {
    let layout = make_layout(128, 40).unwrap();
    let power = 2.0 * 40.0 / 128.0;
    let sys = SystemConfig {
        antennas: 6,
        users: 2,
        taps: 5,
        layout: layout.clone(),
        n0: 0.0,
        hardware: full_hardware(power),
        symbols: SymbolMode::Qpsk,
    };
    let ch = sys.draw_channel(&mut RngStream::new(12, 0)).unwrap();
    let model = AggregateModel::build(&ch, &layout, 0.0, &sys.hardware).unwrap();
    let a = psd_analytic(&model, PsdMetric::Trace).to_db();
    let e = psd_empirical(&sys, &ch, 1500, 13).unwrap().to_db();
    for &k in layout.occupied() {
        assert!((a[k] - e[k]).abs() < 0.5, "k={k}: {} vs {}", a[k], e[k]);
    }
    for k in layout.guard() {
        assert!((a[k] - e[k]).abs() < 1.5, "k={k}: {} vs {}", a[k], e[k]);
    }
}

#[test]
fn ideal_hardware_ber_matches_zf_theory() {
    let layout = make_layout(64, 24).unwrap();
    let sys = SystemConfig {
        antennas: 4,
        users: 2,
        taps: 3,
        layout,
        n0: 0.3,
        hardware: Hardware::ideal(),
        symbols: SymbolMode::Qpsk,
    };
    let p = ber_monte_carlo(&sys, 10, 200, 5).unwrap();
    assert_eq!(p.n_bits, 2 * 2 * 24 * 200 * 10);
    assert!(
        (p.ber_mc - p.ber_analytic).abs() <= 3.0 * p.half_width,
        "{} vs {} (hw {})",
        p.ber_mc,
        p.ber_analytic,
        p.half_width
    );
}

#[test]
fn noiseless_ideal_ber_is_zero_and_trend_is_monotone() {
    let layout = make_layout(64, 20).unwrap();
    let sys = SystemConfig {
        antennas: 8,
        users: 2,
        taps: 3,
        layout,
        n0: 0.0,
        hardware: Hardware::ideal(),
        symbols: SymbolMode::Qpsk,
    };
    assert_eq!(ber_monte_carlo(&sys, 3, 20, 1).unwrap().ber_mc, 0.0);
    let points: Vec<OperatingPoint> = [-6.0f64, -3.0, 0.0, 3.0]
        .iter()
        .map(|snr| OperatingPoint {
            n0: 10f64.powf(-snr / 10.0),
            hardware: Hardware::ideal(),
        })
        .collect();
    let r = ber_sweep(&sys, &points, 10, 100, 2).unwrap();
    for w in r.windows(2) {
        assert!(w[1].ber_mc < w[0].ber_mc);
        assert!(w[1].ber_analytic < w[0].ber_analytic);
    }
}

/// Per user and subcarrier, the measured post-ZF error power matches the
/// analytic interference-noise-distortion power within 10% (Gaussian input).
#[test]
fn empirical_sindr_matches_analytic() {
    let layout = make_layout(1024, 300).unwrap();
    let n0 = 0.1;
    let power = 4.0 * 300.0 / 1024.0;
    let sys = SystemConfig {
        antennas: 32,
        users: 4,
        taps: 10,
        layout: layout.clone(),
        n0,
        hardware: full_hardware(power + n0),
        symbols: SymbolMode::Gaussian,
    };
    let (ch, _) = draw_usable_channel(&sys, 31, 0).unwrap();
    let rx = Receiver::build(&ch, &layout, n0, &sys.hardware).unwrap();
    let frames = 2000;
    let sums: Vec<Vec<f64>> = (0..frames)
        .into_par_iter()
        .map(|f| {
            let mut rng = RngStream::new(32, f as u64);
            let out = simulate_frame(&sys, &ch, &mut rng).unwrap();
            let est = rx.equalize(&out.received, &layout);
            let mut v = Vec::with_capacity(4 * 300);
            for &k in layout.occupied() {
                for u in 0..4 {
                    v.push((est[(u, k)] - out.frame.symbols[(u, k)]).norm_sqr());
                }
            }
            v
        })
        .collect();
    let mut worst = 0.0f64;
    for idx in 0..layout.s() {
        for u in 0..4 {
            let measured = sums.iter().map(|v| v[idx * 4 + u]).sum::<f64>() / frames as f64;
            let predicted = 1.0 / rx.sindr.get(u, idx);
            worst = worst.max((measured - predicted).abs() / predicted);
        }
    }
    assert!(worst <= 0.10, "worst relative gap {worst}");
}

#[test]
fn adc_closed_forms_match_quadrature() {
    for q in 1..=8u32 {
        for &ratio in &[0.05, 0.2, 0.5, 1.0, 2.0] {
            for &power in &[0.3, 1.0, 4.0] {
                let delta = ratio * f64::sqrt(power);
                let p = AdcParams::new(q, delta).unwrap();
                let g = adc_gain(&p, power);
                let g_ref = common::adc_gain_oracle(q, delta, power);
                assert!((g - g_ref).abs() < 1e-9, "gain q={q} ratio={ratio}");
                let d = adc_distortion_power(&p, power, g);
                let d_ref = common::adc_distortion_oracle(q, delta, power);
                assert!(
                    (d - d_ref).abs() < 1e-9 * power.max(1.0),
                    "dist q={q} ratio={ratio}: {d} vs {d_ref}"
                );
            }
        }
    }
    let fine = AdcParams::new(12, 0.01).unwrap();
    let g = adc_gain(&fine, 1.0);
    assert!((0.999..=1.001).contains(&g));
}
