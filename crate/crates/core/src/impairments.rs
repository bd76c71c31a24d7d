//! Behavioral models of the nonideal receive chain: third-order LNA,
//! AR(1) residual phase noise from a common LO, and a uniform midrise ADC.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::numerics::{ComplexMatrix, Cplx, RngStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LnaParams {
    pub alpha1: Cplx,
    pub alpha2: Cplx,
}

impl LnaParams {
    pub fn new(alpha1: Cplx, alpha2: Cplx) -> Result<Self> {
        if alpha1 == Cplx::new(0.0, 0.0) {
            return Err(invalid("lna.alpha1", "must be nonzero"));
        }
        if !(alpha1.is_finite() && alpha2.is_finite()) {
            return Err(invalid("lna", "coefficients must be finite"));
        }
        Ok(Self { alpha1, alpha2 })
    }

    pub fn identity() -> Self {
        Self {
            alpha1: Cplx::new(1.0, 0.0),
            alpha2: Cplx::new(0.0, 0.0),
        }
    }

    /// `α1 x + α2 x |x|²`
    #[inline]
    pub fn apply(&self, x: Cplx) -> Cplx {
        x * (self.alpha1 + self.alpha2 * x.norm_sqr())
    }
}

/// Partially coherent LO: `φ[n] = λ φ[n-1] + ϕ[n]`, `ϕ[n] ~ N(0, 2πβTs)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseNoiseParams {
    lambda: f64,
    beta: f64,
    ts: f64,
}

impl PhaseNoiseParams {
    pub fn new(lambda: f64, beta: f64, ts: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(
                "pn.lambda",
                format!("must lie in (0, 1), got {lambda}"),
            ));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(invalid(
                "pn.beta",
                format!("must be finite and >= 0, got {beta}"),
            ));
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(invalid("Ts", format!("must be finite and > 0, got {ts}")));
        }
        Ok(Self { lambda, beta, ts })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    /// Innovation variance `2πβTs`.
    pub fn innovation_var(&self) -> f64 {
        2.0 * PI * self.beta * self.ts
    }

    /// Stationary variance `2πβTs / (1 - λ²)`.
    pub fn sigma_phi_sq(&self) -> f64 {
        self.innovation_var() / (1.0 - self.lambda * self.lambda)
    }

    /// Autocovariance `σ_φ² λ^|m|`.
    pub fn autocovariance(&self, lag: usize) -> f64 {
        self.sigma_phi_sq() * self.lambda.powi(lag as i32)
    }
}

/// `q` bits per real dimension with step `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcParams {
    q: u32,
    delta: f64,
}

impl AdcParams {
    pub const MAX_BITS: u32 = 24;

    pub fn new(q: u32, delta: f64) -> Result<Self> {
        if q == 0 || q > Self::MAX_BITS {
            return Err(invalid(
                "adc.q",
                format!("must lie in 1..={}, got {q}", Self::MAX_BITS),
            ));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(invalid(
                "adc.delta",
                format!("must be finite and > 0, got {delta}"),
            ));
        }
        Ok(Self { q, delta })
    }

    pub fn bits(&self) -> u32 {
        self.q
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn levels(&self) -> usize {
        1usize << self.q
    }

    /// Largest output magnitude per real dimension, `(Δ/2)(2^q - 1)`.
    pub fn max_output(&self) -> f64 {
        0.5 * self.delta * (self.levels() as f64 - 1.0)
    }

    /// Output alphabet per real dimension in increasing order.
    pub fn alphabet(&self) -> Vec<f64> {
        let half = (self.levels() / 2) as f64;
        (0..self.levels())
            .map(|i| self.delta * (i as f64 - half + 0.5))
            .collect()
    }

    /// Midrise quantization of one real value. The cell index uses the
    /// mathematical floor, so a value on a boundary falls in the upper cell,
    /// and out-of-range inputs saturate. `cell + 0.5` is exact, which makes
    /// the map exactly odd away from boundaries.
    #[inline]
    pub fn quantize(&self, z: f64) -> f64 {
        let half = (self.levels() / 2) as f64;
        let cell = (z / self.delta).floor().clamp(-half, half - 1.0);
        self.delta * (cell + 0.5)
    }

    #[inline]
    pub fn quantize_complex(&self, z: Cplx) -> Cplx {
        Cplx::new(self.quantize(z.re), self.quantize(z.im))
    }
}

/// Which parts of the receive chain are nonideal. `None` means the stage is
/// ideal (identity LNA, clean LO, unquantized ADC).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hardware {
    pub lna: Option<LnaParams>,
    pub pn: Option<PhaseNoiseParams>,
    pub adc: Option<AdcParams>,
}

impl Hardware {
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn is_ideal(&self) -> bool {
        self.lna.is_none() && self.pn.is_none() && self.adc.is_none()
    }
}

pub fn lna_apply(x: &ComplexMatrix, p: &LnaParams) -> ComplexMatrix {
    x.map(|z| p.apply(z))
}

/// Stationary AR(1) phase path of `n_samples` samples; `φ[0]` is drawn from
/// the stationary distribution.
pub fn phase_noise_path(
    p: &PhaseNoiseParams,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::Empty("phase-noise path"));
    }
    let innov = p.innovation_var().sqrt();
    let mut path = Vec::with_capacity(n_samples);
    let mut phi = p.sigma_phi_sq().sqrt() * rng.standard_normal();
    path.push(phi);
    for _ in 1..n_samples {
        phi = p.lambda * phi + innov * rng.standard_normal();
        path.push(phi);
    }
    Ok(path)
}

/// Common-LO rotation `z_b[n] = e^{jφ[n]} y_b[n]` for every antenna `b`.
pub fn mixer_apply(y: &ComplexMatrix, phi: &[f64]) -> Result<ComplexMatrix> {
    if phi.len() != y.ncols() {
        return Err(Error::DimensionMismatch {
            context: "mixer_apply phase samples",
            expected: y.ncols(),
            got: phi.len(),
        });
    }
    let mut z = y.clone();
    for (n, &p) in phi.iter().enumerate() {
        let rot = Cplx::from_polar(1.0, p);
        for v in z.column_mut(n).iter_mut() {
            *v *= rot;
        }
    }
    Ok(z)
}

pub fn adc_quantize(z: &ComplexMatrix, p: &AdcParams) -> ComplexMatrix {
    z.map(|v| p.quantize_complex(v))
}

/// `r[n] = f_adc(e^{jφ[n]} f_lna(x[n]))`; absent stages are skipped.
pub fn impair_chain(
    x: &ComplexMatrix,
    lna: Option<&LnaParams>,
    phase: Option<&[f64]>,
    adc: Option<&AdcParams>,
) -> Result<ComplexMatrix> {
    let y = match lna {
        Some(p) => lna_apply(x, p),
        None => x.clone(),
    };
    let z = match phase {
        Some(phi) => mixer_apply(&y, phi)?,
        None => y,
    };
    Ok(match adc {
        Some(p) => adc_quantize(&z, p),
        None => z,
    })
}
