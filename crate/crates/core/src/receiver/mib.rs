//! Broadcast (MIB) decoding.
//!
//! The decoder equalizes the broadcast region with per-frame pilot channel
//! estimates, extracts soft bits under each antenna-port hypothesis,
//! descrambles with the cell sequence, soft-combines every captured frame
//! of one 40 ms TTI, reverses rate matching and runs the tail-biting
//! Viterbi decoder. Success is a CRC match under the port-specific mask,
//! which simultaneously reveals the port count; the decoded SFN bits anchor
//! the capture's frame numbering.

use super::{CellInfo, ReceiverError};
use crate::grid::{FrameGrid, SC_PER_RB};
use crate::phy::coding::{
    broadcast_rate_match_map, crc_check, rate_dematch, viterbi_decode_tb, BLOCK_BITS, MIB_BITS,
    RATE_MATCHED_BITS,
};
use crate::phy::gold::gold_sequence;
use crate::phy::{crs, pbch, CellIdentity, MibPayload, PBCH_SC, SFN_PERIOD};
use num_complex::Complex64;

/// Successful broadcast decode.
#[derive(Debug, Clone, Copy)]
pub struct MibDecode {
    pub mib: MibPayload,
    pub n_ports: u8,
    /// System frame number of capture frame 0.
    pub sfn0: u16,
}

impl MibDecode {
    pub fn into_cell_info(self, identity: CellIdentity, rsrp_db: f64, sic_order: usize) -> CellInfo {
        CellInfo {
            identity,
            n_ports: self.n_ports,
            mib: self.mib,
            sfn0: self.sfn0,
            rsrp_db,
            sic_order,
        }
    }
}

/// Pilot point estimates of one port at the in-region CRS symbol.
///
/// Symbol 7 lies inside the broadcast region, where every cell transmits
/// only deterministic signals; unlike the other pilot symbols of subframe 0
/// it is never polluted by neighbour payload, which matters for weak cells
/// once the strong ones are cancelled.
fn pilot_points(
    frame: &FrameGrid,
    identity: CellIdentity,
    port: u8,
) -> Result<Vec<(usize, Complex64)>, ReceiverError> {
    let n_sc = frame.n_sc();
    let n_rb = n_sc / SC_PER_RB;
    let window_start = n_sc / 2 - PBCH_SC / 2;
    // Ports 0/1 both have CRS in symbol 7 (v = 0 and v = 3 shifts).
    let pilots = crs::generate_crs(identity.pci(), n_rb, 0, 7, port)?;
    let symbol = frame.symbol(0, 7);
    let mut points = Vec::new();
    for (k, x) in pilots {
        if k + 1 < window_start || k > window_start + PBCH_SC {
            continue;
        }
        points.push((k, symbol[k] * x.conj()));
    }
    if points.is_empty() {
        return Err(ReceiverError::InvalidArgument(
            "no pilot subcarriers inside the broadcast window".into(),
        ));
    }
    Ok(points)
}

/// Interpolate pilot points across the 72-subcarrier window.
fn interpolate_window(points: &[(usize, Complex64)], window_start: usize) -> Vec<Complex64> {
    let pts: Vec<(f64, Complex64)> = points.iter().map(|&(k, v)| (k as f64, v)).collect();
    let mut h = Vec::with_capacity(PBCH_SC);
    let mut seg = 0usize;
    for j in 0..PBCH_SC {
        let k = (window_start + j) as f64;
        while seg + 2 < pts.len() && pts[seg + 1].0 < k {
            seg += 1;
        }
        let (k0, h0) = pts[seg];
        let (k1, h1) = pts[(seg + 1).min(pts.len() - 1)];
        let v = if k1 > k0 {
            let t = ((k - k0) / (k1 - k0)).clamp(0.0, 1.0);
            h0 * (1.0 - t) + h1 * t
        } else {
            h0
        };
        h.push(v);
    }
    h
}

/// Channel window per frame: per-frame pilot estimates, or the capture
/// average when `averaged` (rescues weak cells whose per-frame pilot SNR is
/// too low; valid while the channel is static over the decode window).
fn port_channel_windows(
    frames: &[FrameGrid],
    identity: CellIdentity,
    port: u8,
    averaged: bool,
) -> Result<Vec<Vec<Complex64>>, ReceiverError> {
    let n_sc = frames[0].n_sc();
    let window_start = n_sc / 2 - PBCH_SC / 2;
    let per_frame: Vec<Vec<(usize, Complex64)>> = frames
        .iter()
        .map(|f| pilot_points(f, identity, port))
        .collect::<Result<_, _>>()?;
    if !averaged {
        return Ok(per_frame
            .iter()
            .map(|pts| interpolate_window(pts, window_start))
            .collect());
    }
    let n = per_frame.len() as f64;
    let mut mean: Vec<(usize, Complex64)> = per_frame[0].clone();
    for pts in per_frame.iter().skip(1) {
        for (m, p) in mean.iter_mut().zip(pts.iter()) {
            m.1 += p.1;
        }
    }
    for m in mean.iter_mut() {
        m.1 /= n;
    }
    let window = interpolate_window(&mean, window_start);
    Ok(vec![window; frames.len()])
}

/// Soft scrambled-codeword bits (480 per frame) under a port hypothesis.
/// Positive favours bit 1, matching the Viterbi convention.
fn frame_llrs(
    frame: &FrameGrid,
    positions: &[(usize, usize)],
    window_start: usize,
    h0: &[Complex64],
    h1: Option<&[Complex64]>,
) -> Vec<f64> {
    let mut llr = Vec::with_capacity(2 * positions.len());
    match h1 {
        None => {
            for &(sym, k) in positions {
                let y = frame.get(0, sym, k);
                let z = h0[k - window_start].conj() * y;
                llr.push(-z.re);
                llr.push(-z.im);
            }
        }
        Some(h1) => {
            for pair in positions.chunks_exact(2) {
                let (sym_a, ka) = pair[0];
                let (sym_b, kb) = pair[1];
                let ya = frame.get(0, sym_a, ka);
                let yb = frame.get(0, sym_b, kb);
                let g0 = (h0[ka - window_start] + h0[kb - window_start]) / 2.0;
                let g1 = (h1[ka - window_start] + h1[kb - window_start]) / 2.0;
                // Space-frequency combining over the adjacent mapped pair.
                let s0 = g0.conj() * ya + g1 * yb.conj();
                let s1 = g0.conj() * yb - g1 * ya.conj();
                llr.push(-s0.re);
                llr.push(-s0.im);
                llr.push(-s1.re);
                llr.push(-s1.im);
            }
        }
    }
    llr
}

/// Decode the MIB of `identity` from up to `max_frames` frames.
pub fn decode_mib(
    frames: &[FrameGrid],
    identity: CellIdentity,
    max_frames: usize,
) -> Result<MibDecode, ReceiverError> {
    let n_sc = frames
        .first()
        .map(|f| f.n_sc())
        .ok_or_else(|| ReceiverError::InvalidArgument("empty capture".into()))?;
    let n_used = frames.len().min(max_frames).max(1);
    let frames = &frames[..n_used];
    let window_start = n_sc / 2 - PBCH_SC / 2;
    let positions = pbch::pbch_positions(n_sc / SC_PER_RB, identity.v_shift());
    let scramble = gold_sequence(u32::from(identity.pci()), RATE_MATCHED_BITS);
    let map = broadcast_rate_match_map();

    for (ports, averaged) in [(1u8, false), (2, false), (1, true), (2, true)] {
        // Scrambled soft bits per frame are hypothesis-q0 independent.
        let Ok(h0) = port_channel_windows(frames, identity, 0, averaged) else {
            continue;
        };
        let h1 = if ports == 2 {
            match port_channel_windows(frames, identity, 1, averaged) {
                Ok(h) => Some(h),
                Err(_) => continue,
            }
        } else {
            None
        };
        let per_frame: Vec<Vec<f64>> = frames
            .iter()
            .enumerate()
            .map(|(i, frame)| {
                frame_llrs(
                    frame,
                    &positions,
                    window_start,
                    &h0[i],
                    h1.as_ref().map(|h| h[i].as_slice()),
                )
            })
            .collect();
        for q0 in 0..4u16 {
            // Choose the TTI with the most captured frames.
            let tti_of = |i: usize| (q0 as usize + i) / 4;
            let n_ttis = tti_of(frames.len() - 1) + 1;
            let mut counts = vec![0usize; n_ttis];
            for i in 0..frames.len() {
                counts[tti_of(i)] += 1;
            }
            let best_tti = counts
                .iter()
                .enumerate()
                .max_by_key(|(_, c)| **c)
                .map(|(t, _)| t)
                .unwrap_or(0);
            let mut acc = vec![0.0f64; RATE_MATCHED_BITS];
            let mut anchor: Option<(usize, u16)> = None;
            for (i, llr) in per_frame.iter().enumerate() {
                if tti_of(i) != best_tti {
                    continue;
                }
                let q = (q0 as usize + i) % 4;
                let base = q * llr.len();
                for (j, &v) in llr.iter().enumerate() {
                    // Descramble by sign.
                    let flip = 1.0 - 2.0 * f64::from(scramble[base + j]);
                    acc[base + j] += v * flip;
                }
                if anchor.is_none() {
                    anchor = Some((i, q as u16));
                }
            }
            let Some((anchor_i, anchor_q)) = anchor else {
                continue;
            };
            let soft = rate_dematch(&acc, map);
            let decoded = viterbi_decode_tb(&soft);
            if !crc_check(&decoded, ports) {
                continue;
            }
            let block: [u8; BLOCK_BITS] = decoded;
            let mib = MibPayload::unpack(&block[..MIB_BITS])?;
            let sfn_anchor = mib.sfn_with_quarter(anchor_q as u8);
            let sfn0 =
                ((i64::from(sfn_anchor) - anchor_i as i64).rem_euclid(i64::from(SFN_PERIOD))) as u16;
            return Ok(MibDecode {
                mib,
                n_ports: ports,
                sfn0,
            });
        }
    }
    Err(ReceiverError::DecodeFailed)
}
