//! Frequency-selective Rayleigh channels: tap generation, time-domain
//! application with AWGN, and per-subcarrier responses.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::numerics::{fft_raw, ComplexMatrix, Cplx, Direction, RngStream, ONE, ZERO};
use crate::waveform::TimeFrame;

/// Channel taps `H[l]` (each `B x U`) and the cached responses `Ĥ[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    taps: Vec<ComplexMatrix>,
    freq: Vec<ComplexMatrix>,
}

impl ChannelRealization {
    pub fn from_taps(taps: Vec<ComplexMatrix>, n: usize) -> Result<Self> {
        let freq = freq_response(&taps, n)?;
        Ok(Self { taps, freq })
    }

    pub fn taps(&self) -> &[ComplexMatrix] {
        &self.taps
    }

    pub fn freq(&self) -> &[ComplexMatrix] {
        &self.freq
    }

    pub fn antennas(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn users(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn n(&self) -> usize {
        self.freq.len()
    }

    /// CSV dump with header `tap,row,col,re,im`; values use shortest
    /// round-trip formatting so a reload is bit exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tap,row,col,re,im\n");
        for (l, h) in self.taps.iter().enumerate() {
            for r in 0..h.nrows() {
                for c in 0..h.ncols() {
                    let z = h[(r, c)];
                    let _ = writeln!(out, "{l},{r},{c},{},{}", z.re, z.im);
                }
            }
        }
        out
    }

    /// Parse a CSV produced by [`Self::to_csv`]. Every `(tap, row, col)`
    /// cell of the dense `L x B x U` block must appear exactly once.
    pub fn from_csv(text: &str, n: usize) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("tap,row,col,re,im") => {}
            other => return Err(Error::ChannelFormat(format!("bad header {other:?}"))),
        }
        let mut cells = Vec::new();
        let (mut nl, mut nb, mut nu) = (0usize, 0usize, 0usize);
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::ChannelFormat(format!(
                    "line {}: expected 5 fields",
                    i + 2
                )));
            }
            let idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::ChannelFormat(format!("line {}: {e}", i + 2)))
            };
            let val = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::ChannelFormat(format!("line {}: bad number {s:?}", i + 2))
                    })
            };
            let (l, r, c) = (idx(fields[0])?, idx(fields[1])?, idx(fields[2])?);
            // caps the dense allocation below
            if l >= 4096 || r >= 4096 || c >= 4096 {
                return Err(Error::ChannelFormat(format!(
                    "line {}: index too large",
                    i + 2
                )));
            }
            nl = nl.max(l + 1);
            nb = nb.max(r + 1);
            nu = nu.max(c + 1);
            cells.push((l, r, c, Cplx::new(val(fields[3])?, val(fields[4])?)));
        }
        if cells.is_empty() {
            return Err(Error::ChannelFormat("no taps".into()));
        }
        if cells.len() != nl * nb * nu {
            return Err(Error::ChannelFormat(format!(
                "expected {} cells for {nl}x{nb}x{nu}, found {}",
                nl * nb * nu,
                cells.len()
            )));
        }
        let mut seen = vec![false; nl * nb * nu];
        let mut taps = vec![ComplexMatrix::zeros(nb, nu); nl];
        for (l, r, c, z) in cells {
            let slot = (l * nb + r) * nu + c;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::ChannelFormat(format!(
                    "duplicate cell ({l},{r},{c})"
                )));
            }
            taps[l][(r, c)] = z;
        }
        Self::from_taps(taps, n)
    }
}

/// `L` taps with i.i.d. `CN(0, 1/L)` entries; the response cache covers `n` subcarriers.
pub fn draw_channel(
    b: usize,
    u: usize,
    l: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<ChannelRealization> {
    if b == 0 || u == 0 || l == 0 {
        return Err(invalid("B/U/L", "dimensions must be at least 1"));
    }
    let var = 1.0 / l as f64;
    let taps = (0..l)
        .map(|_| ComplexMatrix::from_fn(b, u, |_, _| rng.cn(var)))
        .collect();
    ChannelRealization::from_taps(taps, n)
}

/// `Ĥ[k] = Σ_l H[l] e^{-j2πkl/N}` for `k = 0..N-1`.
pub fn freq_response(taps: &[ComplexMatrix], n: usize) -> Result<Vec<ComplexMatrix>> {
    if taps.is_empty() {
        return Err(Error::Empty("channel taps"));
    }
    if taps.len() > n {
        return Err(Error::TooManyTaps {
            taps: taps.len(),
            subcarriers: n,
        });
    }
    let (rows, cols) = taps[0].shape();
    if let Some(bad) = taps.iter().find(|t| t.shape() != (rows, cols)) {
        return Err(Error::DimensionMismatch {
            context: "channel tap shape",
            expected: rows * cols,
            got: bad.nrows() * bad.ncols(),
        });
    }
    let mut freq = vec![ComplexMatrix::zeros(rows, cols); n];
    let mut buf = vec![ZERO; n];
    for r in 0..rows {
        for c in 0..cols {
            buf.fill(ZERO);
            for (l, t) in taps.iter().enumerate() {
                buf[l] = t[(r, c)];
            }
            fft_raw(&mut buf, Direction::Forward);
            for (k, z) in buf.iter().enumerate() {
                freq[k][(r, c)] = *z;
            }
        }
    }
    Ok(freq)
}

/// Received samples `x[n] = Σ_l H[l] s[n-l] + w[n]` for `n = 0..N-1`, with
/// `w[n] ~ CN(0, N0 I)`. Samples before the frame come from the cyclic prefix.
pub fn apply_channel(
    channel: &ChannelRealization,
    tx: &TimeFrame,
    n0: f64,
    rng: &mut RngStream,
) -> Result<ComplexMatrix> {
    let l = channel.len();
    if tx.cp_len + 1 < l {
        return Err(Error::CyclicPrefixTooShort {
            needed: l - 1,
            have: tx.cp_len,
        });
    }
    if tx.samples.nrows() != channel.users() {
        return Err(Error::DimensionMismatch {
            context: "apply_channel users",
            expected: channel.users(),
            got: tx.samples.nrows(),
        });
    }
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(invalid("N0", format!("must be finite and >= 0, got {n0}")));
    }
    let n = tx.n();
    let mut x = ComplexMatrix::zeros(channel.antennas(), n);
    for (ell, h) in channel.taps.iter().enumerate() {
        let shifted = tx.samples.columns(tx.cp_len - ell, n);
        x.gemm(ONE, h, &shifted, ONE);
    }
    if n0 > 0.0 {
        for z in x.iter_mut() {
            *z += rng.cn(n0);
        }
    }
    Ok(x)
}
