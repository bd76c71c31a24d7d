//! Complex linear algebra helpers, the unitary DFT, the Gaussian tail
//! function and reproducible random streams.

use std::cell::RefCell;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};

pub type Cplx = Complex64;

/// Dense complex matrix used for every channel and covariance quantity.
pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Cplx = Cplx::new(0.0, 0.0);
pub const ONE: Cplx = Cplx::new(1.0, 0.0);

/// Largest elementwise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &ComplexMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    hermitian_defect(m) <= tol
}

/// Smallest eigenvalue of a Hermitian matrix (the Hermitian part is used).
pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    let sym = (m + m.adjoint()).scale(0.5);
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn trace_re(m: &ComplexMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// Frobenius norm of a complex matrix.
pub fn frobenius(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place DFT: forward uses `e^{-j...}`, inverse `e^{+j...}`.
pub(crate) fn fft_raw(buf: &mut [Cplx], dir: Direction) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match dir {
            Direction::Forward => p.plan_fft_forward(buf.len()),
            Direction::Inverse => p.plan_fft_inverse(buf.len()),
        }
    });
    plan.process(buf);
}

/// In-place unitary DFT (both directions scaled by `1/sqrt(N)`).
pub fn dft_in_place(buf: &mut [Cplx], dir: Direction) -> Result<()> {
    if buf.is_empty() {
        return Err(Error::Empty("dft input"));
    }
    fft_raw(buf, dir);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    for z in buf.iter_mut() {
        *z *= scale;
    }
    Ok(())
}

/// Unitary DFT of `x`.
pub fn dft(x: &[Cplx], dir: Direction) -> Result<Vec<Cplx>> {
    let mut out = x.to_vec();
    dft_in_place(&mut out, dir)?;
    Ok(out)
}

/// Gaussian tail probability `Q(x) = P(Z > x)` for standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Seeded random stream. Equal `(seed, stream_id)` pairs reproduce the same
/// sequence; different stream ids select independent ChaCha keystreams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    /// Stream id packed from a domain tag and two indices, so that e.g.
    /// channel draws and per-frame draws never share a keystream.
    pub fn derive(seed: u64, domain: u8, major: u32, minor: u32) -> Self {
        let id =
            (u64::from(domain) << 56) | (u64::from(major & 0x00ff_ffff) << 32) | u64::from(minor);
        Self::new(seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// One `CN(0, variance)` draw.
    pub fn cn(&mut self, variance: f64) -> Cplx {
        let s = (0.5 * variance).sqrt();
        Cplx::new(s * self.standard_normal(), s * self.standard_normal())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

/// `n` i.i.d. circularly-symmetric complex Gaussian samples of the given variance.
pub fn sample_cn(rng: &mut RngStream, n: usize, variance: f64) -> Result<Vec<Cplx>> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(invalid(
            "variance",
            format!("must be finite and >= 0, got {variance}"),
        ));
    }
    if variance == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    Ok((0..n).map(|_| rng.cn(variance)).collect())
}
