//! Broadcast-channel FEC: CRC attachment with antenna-port masking, the
//! rate-1/3 constraint-length-7 tail-biting convolutional code, an exact
//! tail-biting Viterbi decoder, and circular-buffer rate matching.

use super::PhyError;

/// Information bits per MIB transport block.
pub const MIB_BITS: usize = 24;
/// CRC length.
pub const CRC_BITS: usize = 16;
/// Encoder input length (payload + masked CRC).
pub const BLOCK_BITS: usize = MIB_BITS + CRC_BITS;
/// Mother-code output length (rate 1/3).
pub const CODED_BITS: usize = 3 * BLOCK_BITS;
/// Rate-matched broadcast codeword length for normal CP (one 40 ms TTI).
pub const RATE_MATCHED_BITS: usize = 1920;

// Generator polynomials 133, 171, 165 (octal), coefficient of D^0 first.
const GENERATORS: [u8; 3] = [0o133, 0o171, 0o165];
const CONSTRAINT: usize = 7;
const NUM_STATES: usize = 1 << (CONSTRAINT - 1);

/// CRC-16 (x^16 + x^12 + x^5 + 1) over a bit slice, MSB-first.
pub fn crc16(bits: &[u8]) -> [u8; CRC_BITS] {
    let mut reg = 0u32;
    for &b in bits {
        let fb = ((reg >> 15) & 1) as u8 ^ b;
        reg = (reg << 1) & 0xffff;
        if fb == 1 {
            reg ^= 0x1021;
        }
    }
    let mut out = [0u8; CRC_BITS];
    for (i, o) in out.iter_mut().enumerate() {
        *o = ((reg >> (CRC_BITS - 1 - i)) & 1) as u8;
    }
    out
}

/// CRC mask distinguishing the transmit antenna configuration.
pub fn port_mask(n_ports: u8) -> Result<[u8; CRC_BITS], PhyError> {
    let mut mask = [0u8; CRC_BITS];
    match n_ports {
        1 => {}
        2 => mask = [1; CRC_BITS],
        4 => {
            for (i, m) in mask.iter_mut().enumerate() {
                *m = (i % 2) as u8;
            }
        }
        _ => return Err(PhyError::UnsupportedPorts(n_ports)),
    }
    Ok(mask)
}

/// Append the port-masked CRC to 24 payload bits.
pub fn crc_attach(payload: &[u8], n_ports: u8) -> Result<[u8; BLOCK_BITS], PhyError> {
    if payload.len() != MIB_BITS {
        return Err(PhyError::InvalidArgument(format!(
            "payload must be {MIB_BITS} bits, got {}",
            payload.len()
        )));
    }
    let crc = crc16(payload);
    let mask = port_mask(n_ports)?;
    let mut out = [0u8; BLOCK_BITS];
    out[..MIB_BITS].copy_from_slice(payload);
    for i in 0..CRC_BITS {
        out[MIB_BITS + i] = crc[i] ^ mask[i];
    }
    Ok(out)
}

/// Check the masked CRC of a decoded block; the matching mask reveals the
/// port count.
pub fn crc_check(block: &[u8; BLOCK_BITS], n_ports: u8) -> bool {
    let crc = crc16(&block[..MIB_BITS]);
    let mask = match port_mask(n_ports) {
        Ok(m) => m,
        Err(_) => return false,
    };
    (0..CRC_BITS).all(|i| block[MIB_BITS + i] == crc[i] ^ mask[i])
}

#[inline]
fn encode_outputs(window: u8) -> u8 {
    // `window` holds (u_k, u_{k-1}, .., u_{k-6}) with u_k in bit 6.
    let mut out = 0u8;
    for (i, g) in GENERATORS.iter().enumerate() {
        out |= ((window & g).count_ones() as u8 & 1) << i;
    }
    out
}

/// Tail-biting convolutional encoding: three parity streams of input length.
pub fn conv_encode(input: &[u8; BLOCK_BITS]) -> [[u8; BLOCK_BITS]; 3] {
    // Initial register contents are the last six input bits, so the encoder
    // starts and ends in the same state. Positions are pre-shift: the first
    // iteration moves u_{-j} down to bit 6-j before inserting u_0.
    let mut window = 0u8;
    for j in 1..CONSTRAINT {
        window |= (input[BLOCK_BITS - j] & 1) << (CONSTRAINT - j);
    }
    let mut out = [[0u8; BLOCK_BITS]; 3];
    for (k, &u) in input.iter().enumerate() {
        window = (window >> 1) | ((u & 1) << (CONSTRAINT - 1));
        let o = encode_outputs(window);
        for s in 0..3 {
            out[s][k] = (o >> s) & 1;
        }
    }
    out
}

/// Exact maximum-likelihood tail-biting Viterbi decode.
///
/// `llr[s][k]` is the soft value for parity stream `s`, step `k`; positive
/// favours bit 1. The trellis is run once per admissible start state with
/// the start-equals-end constraint, which is exact for this block length.
pub fn viterbi_decode_tb(llr: &[[f64; BLOCK_BITS]; 3]) -> [u8; BLOCK_BITS] {
    // Branch metric contribution for output bits of transition.
    // Transition: state st = (u_{k-1}..u_{k-6}), input u -> window (u, st).
    let mut branch = [[0u8; 2]; NUM_STATES];
    for st in 0..NUM_STATES {
        for u in 0..2u8 {
            let window = ((u & 1) << (CONSTRAINT - 1)) | st as u8;
            branch[st][u as usize] = encode_outputs(window);
        }
    }
    // Per-step metric for each of the 8 possible output triplets.
    let mut step_metric = [[0.0f64; 8]; BLOCK_BITS];
    for k in 0..BLOCK_BITS {
        for pattern in 0..8usize {
            let mut m = 0.0;
            for s in 0..3 {
                let bit = (pattern >> s) & 1;
                m += if bit == 1 { llr[s][k] } else { -llr[s][k] };
            }
            step_metric[k][pattern] = m;
        }
    }

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_bits = [0u8; BLOCK_BITS];
    let mut metrics = vec![0.0f64; NUM_STATES];
    let mut next = vec![0.0f64; NUM_STATES];
    let mut decisions = vec![[0u8; NUM_STATES]; BLOCK_BITS];

    for start in 0..NUM_STATES {
        for m in metrics.iter_mut() {
            *m = f64::NEG_INFINITY;
        }
        metrics[start] = 0.0;
        for k in 0..BLOCK_BITS {
            for n in next.iter_mut() {
                *n = f64::NEG_INFINITY;
            }
            for st in 0..NUM_STATES {
                let m = metrics[st];
                if m == f64::NEG_INFINITY {
                    continue;
                }
                for u in 0..2usize {
                    let ns = (st >> 1) | (u << (CONSTRAINT - 2));
                    let cand = m + step_metric[k][branch[st][u] as usize];
                    if cand > next[ns] {
                        next[ns] = cand;
                        decisions[k][ns] = st as u8;
                    }
                }
            }
            std::mem::swap(&mut metrics, &mut next);
        }
        if metrics[start] > best_metric {
            best_metric = metrics[start];
            // Trace back from the tail-biting end state.
            let mut bits = [0u8; BLOCK_BITS];
            let mut st = start;
            for k in (0..BLOCK_BITS).rev() {
                bits[k] = ((st >> (CONSTRAINT - 2)) & 1) as u8;
                st = decisions[k][st] as usize;
            }
            best_bits = bits;
        }
    }
    best_bits
}

// Sub-block interleaver column permutation for convolutional codes.
const COL_PERM: [usize; 32] = [
    1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31, 0, 16, 8, 24, 4, 20, 12, 28, 2, 18,
    10, 26, 6, 22, 14, 30,
];

/// Map from rate-matched bit position to `(stream, mother code bit index)`.
///
/// Computed once: sub-block interleaving of the three parity streams, bit
/// collection into the circular buffer, and cyclic readout skipping filler
/// positions.
pub fn rate_match_map(e: usize) -> Vec<(usize, usize)> {
    let d = BLOCK_BITS;
    let cols = 32;
    let rows = d.div_ceil(cols);
    let k_pi = rows * cols;
    let nulls = k_pi - d;
    // v[stream][j] = Some(original index) in interleaved order.
    let mut v = vec![vec![None; k_pi]; 3];
    for stream in 0..3 {
        let mut j = 0;
        for &col in COL_PERM.iter() {
            for r in 0..rows {
                let lin = r * cols + col;
                v[stream][j] = lin.checked_sub(nulls).filter(|&i| i < d);
                j += 1;
            }
        }
    }
    let k_w = 3 * k_pi;
    let mut out = Vec::with_capacity(e);
    let mut k = 0usize;
    while out.len() < e {
        let w = k % k_w;
        let stream = w / k_pi;
        if let Some(idx) = v[stream][w % k_pi] {
            out.push((stream, idx));
        }
        k += 1;
    }
    out
}

/// Cached map for the broadcast codeword length.
pub fn broadcast_rate_match_map() -> &'static [(usize, usize)] {
    use std::sync::OnceLock;
    static MAP: OnceLock<Vec<(usize, usize)>> = OnceLock::new();
    MAP.get_or_init(|| rate_match_map(RATE_MATCHED_BITS))
}

/// Rate-match the three parity streams to `e` bits.
pub fn rate_match(streams: &[[u8; BLOCK_BITS]; 3], e: usize) -> Vec<u8> {
    if e == RATE_MATCHED_BITS {
        return broadcast_rate_match_map()
            .iter()
            .map(|&(s, i)| streams[s][i])
            .collect();
    }
    rate_match_map(e)
        .into_iter()
        .map(|(s, i)| streams[s][i])
        .collect()
}

/// Accumulate rate-matched soft values back onto the mother code bits.
pub fn rate_dematch(llr: &[f64], map: &[(usize, usize)]) -> [[f64; BLOCK_BITS]; 3] {
    debug_assert_eq!(llr.len(), map.len());
    let mut out = [[0.0f64; BLOCK_BITS]; 3];
    for (v, &(s, i)) in llr.iter().zip(map.iter()) {
        out[s][i] += v;
    }
    out
}
