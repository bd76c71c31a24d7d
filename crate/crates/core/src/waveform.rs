//! UE-side symbol generation, OFDM modulation with cyclic prefix, BS-side
//! OFDM demodulation and QPSK bit mapping.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::numerics::{fft_raw, ComplexMatrix, Cplx, Direction, RngStream, ZERO};

/// Partition of the `N` subcarriers into occupied and guard sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcarrierLayout {
    n: usize,
    occupied: Vec<usize>,
    mask: Vec<bool>,
}

impl SubcarrierLayout {
    /// LTE-style layout: `S/2` subcarriers directly above DC and the `S/2`
    /// subcarriers at the top of the band (negative frequencies). DC is
    /// never occupied.
    pub fn centered(n: usize, s: usize) -> Result<Self> {
        if s == 0 || !s.is_multiple_of(2) {
            return Err(invalid(
                "S",
                format!("occupied count must be positive and even, got {s}"),
            ));
        }
        if s >= n {
            return Err(invalid(
                "S",
                format!("need S < N so that DC stays empty (S={s}, N={n})"),
            ));
        }
        let half = s / 2;
        let occupied: Vec<usize> = (1..=half).chain(n - half..n).collect();
        Self::from_occupied(n, occupied)
    }

    /// Arbitrary occupied set; entries are sorted and must be distinct and `< n`.
    pub fn from_occupied(n: usize, mut occupied: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("subcarrier layout"));
        }
        occupied.sort_unstable();
        occupied.dedup();
        if occupied.last().is_some_and(|&k| k >= n) {
            return Err(invalid("occupied", "subcarrier index out of range"));
        }
        let mut mask = vec![false; n];
        for &k in &occupied {
            mask[k] = true;
        }
        Ok(Self { n, occupied, mask })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> usize {
        self.occupied.len()
    }

    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    pub fn guard(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(|&k| !self.mask[k])
    }

    pub fn is_occupied(&self, k: usize) -> bool {
        self.mask.get(k).copied().unwrap_or(false)
    }
}

/// Shorthand for [`SubcarrierLayout::centered`].
pub fn make_layout(n: usize, s: usize) -> Result<SubcarrierLayout> {
    SubcarrierLayout::centered(n, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolMode {
    Qpsk,
    Gaussian,
}

/// Frequency-domain symbols of all users for one OFDM symbol (`U x N`).
#[derive(Debug, Clone)]
pub struct FrequencyFrame {
    pub symbols: ComplexMatrix,
    pub layout: SubcarrierLayout,
}

impl FrequencyFrame {
    pub fn users(&self) -> usize {
        self.symbols.nrows()
    }
}

/// Time-domain samples for `n = -cp_len .. N-1`, one row per user or antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFrame {
    pub samples: ComplexMatrix,
    pub cp_len: usize,
}

impl TimeFrame {
    pub fn n(&self) -> usize {
        self.samples.ncols() - self.cp_len
    }

    /// Sample at signed time index `n` (`-cp_len <= n < N`).
    pub fn at(&self, row: usize, n: isize) -> Cplx {
        self.samples[(row, (n + self.cp_len as isize) as usize)]
    }

    /// The `N` samples after the cyclic prefix.
    pub fn body(&self) -> ComplexMatrix {
        self.samples.columns(self.cp_len, self.n()).into_owned()
    }
}

/// Hard bits per user, two per occupied subcarrier in layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    pub users: usize,
    pub per_user: usize,
    pub bits: Vec<u8>,
}

impl BitMatrix {
    pub fn get(&self, u: usize, i: usize) -> u8 {
        self.bits[u * self.per_user + i]
    }

    pub fn count_differences(&self, other: &BitMatrix) -> u64 {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count() as u64
    }
}

/// Gray-labelled QPSK: first bit selects the sign of the real part, second
/// the sign of the imaginary part, `0 -> +`.
pub fn qpsk_symbol(b0: u8, b1: u8) -> Cplx {
    let re = if b0 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    let im = if b1 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    Cplx::new(re, im)
}

/// Hard decision for one estimate; zero components resolve to bit 0.
pub fn qpsk_decide(z: Cplx) -> (u8, u8) {
    (u8::from(z.re < 0.0), u8::from(z.im < 0.0))
}

pub fn qpsk_map(bits: &BitMatrix, layout: &SubcarrierLayout) -> Result<FrequencyFrame> {
    if bits.per_user != 2 * layout.s() {
        return Err(Error::DimensionMismatch {
            context: "qpsk_map bits per user",
            expected: 2 * layout.s(),
            got: bits.per_user,
        });
    }
    let mut symbols = ComplexMatrix::zeros(bits.users, layout.n());
    for u in 0..bits.users {
        for (i, &k) in layout.occupied().iter().enumerate() {
            symbols[(u, k)] = qpsk_symbol(bits.get(u, 2 * i), bits.get(u, 2 * i + 1));
        }
    }
    Ok(FrequencyFrame {
        symbols,
        layout: layout.clone(),
    })
}

/// Uniform random bits mapped onto QPSK symbols.
pub fn draw_qpsk(
    layout: &SubcarrierLayout,
    users: usize,
    rng: &mut RngStream,
) -> (FrequencyFrame, BitMatrix) {
    let per_user = 2 * layout.s();
    let bits = BitMatrix {
        users,
        per_user,
        bits: (0..users * per_user)
            .map(|_| rng.gen::<bool>() as u8)
            .collect(),
    };
    let frame = qpsk_map(&bits, layout).expect("bit matrix sized from layout");
    (frame, bits)
}

/// Unit-variance symbols on the occupied subcarriers, zeros on the guards.
pub fn draw_symbols(
    layout: &SubcarrierLayout,
    users: usize,
    mode: SymbolMode,
    rng: &mut RngStream,
) -> Result<FrequencyFrame> {
    if users == 0 {
        return Err(invalid("U", "need at least one user"));
    }
    Ok(match mode {
        SymbolMode::Qpsk => draw_qpsk(layout, users, rng).0,
        SymbolMode::Gaussian => {
            let mut symbols = ComplexMatrix::zeros(users, layout.n());
            for &k in layout.occupied() {
                for u in 0..users {
                    symbols[(u, k)] = rng.cn(1.0);
                }
            }
            FrequencyFrame {
                symbols,
                layout: layout.clone(),
            }
        }
    })
}

/// Per-user unitary inverse DFT followed by a cyclic prefix of `cp_len` samples.
pub fn ofdm_modulate(frame: &FrequencyFrame, cp_len: usize) -> Result<TimeFrame> {
    let n = frame.layout.n();
    if frame.symbols.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "ofdm_modulate subcarriers",
            expected: n,
            got: frame.symbols.ncols(),
        });
    }
    if cp_len > n {
        return Err(invalid(
            "cp_len",
            format!("cyclic prefix {cp_len} longer than symbol {n}"),
        ));
    }
    let users = frame.symbols.nrows();
    let scale = 1.0 / (n as f64).sqrt();
    let mut samples = ComplexMatrix::zeros(users, cp_len + n);
    let mut buf = vec![ZERO; n];
    for u in 0..users {
        for (k, slot) in buf.iter_mut().enumerate() {
            // guard entries are forced to zero regardless of what the caller stored
            *slot = if frame.layout.is_occupied(k) {
                frame.symbols[(u, k)]
            } else {
                ZERO
            };
        }
        fft_raw(&mut buf, Direction::Inverse);
        for (i, z) in buf.iter().enumerate() {
            samples[(u, cp_len + i)] = z * scale;
        }
        for i in 0..cp_len {
            samples[(u, i)] = samples[(u, n + i)];
        }
    }
    Ok(TimeFrame { samples, cp_len })
}

/// Per-antenna unitary forward DFT of a CP-free `B x N` block.
pub fn ofdm_demodulate(received: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = received.ncols();
    if n == 0 {
        return Err(Error::Empty("ofdm_demodulate input"));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = ComplexMatrix::zeros(received.nrows(), n);
    let mut buf = vec![ZERO; n];
    for b in 0..received.nrows() {
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = received[(b, i)];
        }
        fft_raw(&mut buf, Direction::Forward);
        for (k, z) in buf.iter().enumerate() {
            out[(b, k)] = z * scale;
        }
    }
    Ok(out)
}

/// Hard QPSK decisions on the occupied subcarriers of a `U x N` estimate matrix.
pub fn qpsk_demap(estimates: &ComplexMatrix, layout: &SubcarrierLayout) -> BitMatrix {
    let users = estimates.nrows();
    let per_user = 2 * layout.s();
    let mut bits = Vec::with_capacity(users * per_user);
    for u in 0..users {
        for &k in layout.occupied() {
            let (b0, b1) = qpsk_decide(estimates[(u, k)]);
            bits.push(b0);
            bits.push(b1);
        }
    }
    BitMatrix {
        users,
        per_user,
        bits,
    }
}
