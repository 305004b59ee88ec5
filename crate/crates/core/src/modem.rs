//! M-QAM modulation: Gray-labeled constellations normalized to unit average
//! energy, one-hot stream encoding, nearest-neighbor demodulation, and bit
//! error counting.
//!
//! Bits are carried as slices of 0/1 bytes. Stream `i` owns the bit group
//! `[i*log2(M), (i+1)*log2(M))`, read MSB first.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModemError {
    #[error("unsupported modulation order {0} (expected 2, 4, 16 or 64)")]
    UnsupportedOrder(usize),
    #[error("bit string length {got} does not match {want}")]
    BitLength { got: usize, want: usize },
    #[error("malformed one-hot block: {0}")]
    MalformedOneHot(String),
}

/// A Gray-labeled constellation with unit average symbol energy.
///
/// `points[i]` is the symbol whose bit label is the binary expansion of `i`;
/// `bit_labels[i]` spells that label out MSB first.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub order: usize,
    pub points: Vec<Complex64>,
    pub bit_labels: Vec<Vec<u8>>,
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }
}

/// `n_streams` one-hot vectors of length `order`, one per data stream.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotBlock {
    pub order: usize,
    pub streams: Vec<Vec<f64>>,
}

impl OneHotBlock {
    /// Index of the single hot entry in each stream.
    pub fn hot_indices(&self) -> Result<Vec<usize>, ModemError> {
        self.streams
            .iter()
            .map(|s| {
                if s.len() != self.order {
                    return Err(ModemError::MalformedOneHot(format!(
                        "stream length {} != order {}",
                        s.len(),
                        self.order
                    )));
                }
                let mut hot = None;
                for (i, &x) in s.iter().enumerate() {
                    if x == 1.0 {
                        if hot.is_some() {
                            return Err(ModemError::MalformedOneHot("two hot entries".into()));
                        }
                        hot = Some(i);
                    } else if x != 0.0 {
                        return Err(ModemError::MalformedOneHot(format!("entry {x} not 0/1")));
                    }
                }
                hot.ok_or_else(|| ModemError::MalformedOneHot("no hot entry".into()))
            })
            .collect()
    }
}

/// Gray code of `i` with `bits` bits, returned as a level index.
fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Builds the constellation for `order` in {2, 4, 16, 64}.
///
/// Order 2 is BPSK {+1, -1}; the rest are square QAM with per-axis Gray
/// labels, so horizontally or vertically adjacent points differ in one bit.
pub fn make_constellation(order: usize) -> Result<Constellation, ModemError> {
    if !matches!(order, 2 | 4 | 16 | 64) {
        return Err(ModemError::UnsupportedOrder(order));
    }
    let bits = order.trailing_zeros() as usize;
    let mut points = Vec::with_capacity(order);
    if order == 2 {
        points.push(Complex64::new(1.0, 0.0));
        points.push(Complex64::new(-1.0, 0.0));
    } else {
        let axis_bits = bits / 2;
        let levels = 1usize << axis_bits;
        // Amplitude for Gray label g: highest level for g = 0, descending in
        // binary order so adjacent levels differ in one Gray bit.
        let amp = |g: usize| (levels as f64 - 1.0) - 2.0 * gray_to_binary(g) as f64;
        for idx in 0..order {
            let gi = idx >> axis_bits;
            let gq = idx & (levels - 1);
            points.push(Complex64::new(amp(gi), amp(gq)));
        }
        let energy: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        let scale = energy.sqrt().recip();
        for p in &mut points {
            *p *= scale;
        }
    }
    let bit_labels = (0..order)
        .map(|i| (0..bits).rev().map(|b| ((i >> b) & 1) as u8).collect())
        .collect();
    Ok(Constellation { order, points, bit_labels })
}

/// Splits `bits` into `n_streams` groups and one-hot encodes each group's
/// integer value (MSB first).
pub fn bits_to_onehot(
    bits: &[u8],
    order: usize,
    n_streams: usize,
) -> Result<OneHotBlock, ModemError> {
    let bps = order.trailing_zeros() as usize;
    let want = n_streams * bps;
    if bits.len() != want {
        return Err(ModemError::BitLength { got: bits.len(), want });
    }
    let streams = (0..n_streams)
        .map(|i| {
            let idx = group_value(&bits[i * bps..(i + 1) * bps]);
            let mut v = vec![0.0; order];
            v[idx] = 1.0;
            v
        })
        .collect();
    Ok(OneHotBlock { order, streams })
}

/// Inverse of [`bits_to_onehot`].
pub fn onehot_to_bits(block: &OneHotBlock) -> Result<Vec<u8>, ModemError> {
    let bps = block.order.trailing_zeros() as usize;
    let mut bits = Vec::with_capacity(block.streams.len() * bps);
    for idx in block.hot_indices()? {
        for b in (0..bps).rev() {
            bits.push(((idx >> b) & 1) as u8);
        }
    }
    Ok(bits)
}

fn group_value(group: &[u8]) -> usize {
    group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Maps each stream's bit group to its constellation point.
pub fn modulate(
    bits: &[u8],
    constellation: &Constellation,
    n_streams: usize,
) -> Result<Vec<Complex64>, ModemError> {
    let bps = constellation.bits_per_symbol();
    let want = n_streams * bps;
    if bits.len() != want {
        return Err(ModemError::BitLength { got: bits.len(), want });
    }
    Ok((0..n_streams)
        .map(|i| constellation.points[group_value(&bits[i * bps..(i + 1) * bps])])
        .collect())
}

/// Per-stream nearest-neighbor detection; ties break toward the lowest
/// constellation index so results are deterministic.
pub fn demodulate_min_distance(symbols: &[Complex64], constellation: &Constellation) -> Vec<u8> {
    let bps = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * bps);
    for &s in symbols {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, &p) in constellation.points.iter().enumerate() {
            let d = (s - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        bits.extend_from_slice(&constellation.bit_labels[best]);
    }
    bits
}

/// Hamming distance between equal-length bit strings.
pub fn count_bit_errors(a: &[u8], b: &[u8]) -> Result<u64, ModemError> {
    if a.len() != b.len() {
        return Err(ModemError::BitLength { got: b.len(), want: a.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count() as u64)
}
