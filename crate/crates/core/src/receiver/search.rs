//! Cell search: PSS root detection, SSS identity resolution, coarse timing
//! check and carrier-frequency-offset estimation.
//!
//! Correlations run in the delay domain over the central 62 subcarriers so
//! multipath energy collapses into a few bins; metrics are power-normalized
//! (peak energy over total energy) and accumulated non-coherently across
//! every synchronization occurrence in the capture.

use super::ReceiverError;
use crate::channel::symbol_time_s;
use crate::grid::FrameGrid;
use crate::phy::{sync, CellIdentity};
use num_complex::Complex64;
use std::f64::consts::PI;

const SYNC_LEN: usize = sync::SYNC_LEN;

/// Coarse timing outcome: whether the capture starts on a half-frame
/// boundary instead of a frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timing {
    pub half_frame_offset: bool,
}

/// One detected cell.
#[derive(Debug, Clone, Copy)]
pub struct Detection {
    pub identity: CellIdentity,
    pub cfo_hz: f64,
    pub timing: Timing,
    /// Normalized PSS peak metric (1.0 for a clean flat channel).
    pub pss_metric: f64,
    /// Normalized SSS peak metric.
    pub sss_metric: f64,
}

/// Detection thresholds.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub pss_threshold: f64,
    pub sss_threshold: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            pss_threshold: 0.06,
            sss_threshold: 0.06,
        }
    }
}

fn window62(frame: &FrameGrid, sf: usize, sym: usize) -> &[Complex64] {
    let off = sync::sync_offset(frame.n_sc());
    &frame.symbol(sf, sym)[off..off + SYNC_LEN]
}

/// Delay-domain cross-correlation: `c(d) = (1/N) sum_k y_k conj(x_k) e^{j2pi k d / N}`.
fn delay_correlation(y: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let n = y.len();
    let mut prod = Vec::with_capacity(n);
    for (a, b) in y.iter().zip(x.iter()) {
        prod.push(a * b.conj());
    }
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in prod.iter().enumerate() {
            acc += v * Complex64::from_polar(1.0, 2.0 * PI * (k as f64) * (d as f64) / (n as f64));
        }
        out.push(acc / n as f64);
    }
    out
}

fn mean_power(y: &[Complex64]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64
}

/// Detect the strongest cell not in `exclude`.
pub fn detect_cell(
    frames: &[FrameGrid],
    exclude: &[CellIdentity],
    params: &SearchParams,
) -> Result<Detection, ReceiverError> {
    if frames.is_empty() {
        return Err(ReceiverError::InvalidArgument("empty capture".into()));
    }
    // PSS root search: accumulate |c(d)|^2 per root and delay bin over all
    // occurrences, normalized by total received and local energy.
    let locals: Vec<[Complex64; 62]> = (0..3u8)
        .map(|r| sync::generate_pss(r).expect("valid root index"))
        .collect();
    let mut acc = [[0.0f64; SYNC_LEN]; 3];
    let mut energy = 0.0f64;
    let mut n_occ = 0usize;
    for frame in frames {
        for (sf, sym) in sync::PSS_POSITIONS {
            let y = window62(frame, sf, sym);
            energy += mean_power(y);
            n_occ += 1;
            for (r, local) in locals.iter().enumerate() {
                let c = delay_correlation(y, local);
                for (d, v) in c.iter().enumerate() {
                    acc[r][d] += v.norm_sqr();
                }
            }
        }
    }
    let denom = (energy / n_occ as f64).max(f64::MIN_POSITIVE) * n_occ as f64;
    let mut best_root = 0usize;
    let mut best_bin = 0usize;
    let mut best_metric = -1.0f64;
    for r in 0..3 {
        for d in 0..SYNC_LEN {
            let m = acc[r][d] / denom;
            if m > best_metric {
                best_metric = m;
                best_root = r;
                best_bin = d;
            }
        }
    }
    if best_metric < params.pss_threshold {
        return Err(ReceiverError::NoCellFound);
    }
    let n_id2 = best_root as u8;

    // SSS identity search near the PSS delay bin, for both the aligned and
    // half-frame-swapped placements.
    let bins: Vec<usize> = [(SYNC_LEN + best_bin - 1) % SYNC_LEN, best_bin, (best_bin + 1) % SYNC_LEN]
        .into_iter()
        .collect();
    let mut sss_energy = 0.0f64;
    let mut sss_occ = 0usize;
    for frame in frames {
        for (sf, sym) in sync::SSS_POSITIONS {
            sss_energy += mean_power(window62(frame, sf, sym));
            sss_occ += 1;
        }
    }
    let sss_denom = (sss_energy / sss_occ as f64).max(f64::MIN_POSITIVE);
    let mut scores = vec![[0.0f64; 2]; 168]; // [aligned, swapped]
    for n_id1 in 0..168u16 {
        let s0: Vec<Complex64> = sync::generate_sss(n_id1, n_id2, 0)
            .expect("valid identity")
            .iter()
            .map(|v| Complex64::new(*v, 0.0))
            .collect();
        let s5: Vec<Complex64> = sync::generate_sss(n_id1, n_id2, 5)
            .expect("valid identity")
            .iter()
            .map(|v| Complex64::new(*v, 0.0))
            .collect();
        for frame in frames {
            let y0 = window62(frame, 0, 13);
            let y5 = window62(frame, 5, 13);
            // Aligned: subframe-0 sequence at subframe 0; swapped covers a
            // capture starting on the half-frame boundary.
            scores[n_id1 as usize][0] +=
                peak_energy_near(y0, &s0, &bins) + peak_energy_near(y5, &s5, &bins);
            scores[n_id1 as usize][1] +=
                peak_energy_near(y0, &s5, &bins) + peak_energy_near(y5, &s0, &bins);
        }
    }
    let mut best_id1: Option<(u16, f64, bool)> = None;
    for n_id1 in 0..168u16 {
        let identity = CellIdentity::new(n_id1, n_id2).expect("range-checked");
        if exclude.contains(&identity) {
            continue;
        }
        let aligned = scores[n_id1 as usize][0];
        let swapped = scores[n_id1 as usize][1];
        let (metric, half) = if aligned >= swapped {
            (aligned, false)
        } else {
            (swapped, true)
        };
        let metric = metric / (sss_denom * sss_occ as f64);
        if best_id1.map_or(true, |(_, m, _)| metric > m) {
            best_id1 = Some((n_id1, metric, half));
        }
    }
    let (n_id1, sss_metric, half) = best_id1.ok_or(ReceiverError::NoCellFound)?;
    if sss_metric < params.sss_threshold {
        return Err(ReceiverError::NoCellFound);
    }
    let identity = CellIdentity::new(n_id1, n_id2).expect("range-checked");

    let cfo_hz = estimate_cfo(frames, &identity, &bins);
    Ok(Detection {
        identity,
        cfo_hz,
        timing: Timing {
            half_frame_offset: half,
        },
        pss_metric: best_metric,
        sss_metric,
    })
}

fn peak_energy_near(y: &[Complex64], local: &[Complex64], bins: &[usize]) -> f64 {
    bins.iter()
        .map(|&d| correlation_at(y, local, d).norm_sqr())
        .fold(0.0, f64::max)
}

fn correlation_at(y: &[Complex64], x: &[Complex64], d: usize) -> Complex64 {
    let n = y.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..n {
        acc += y[k]
            * x[k].conj()
            * Complex64::from_polar(1.0, 2.0 * PI * (k as f64) * (d as f64) / (n as f64));
    }
    acc / n as f64
}

/// Two-stage CFO estimate for the detected cell.
///
/// Cells sharing a PSS root superimpose on the same sync REs, so any
/// single-shot phase comparison between different sequences carries a
/// static composite-channel offset. The coarse stage therefore uses the
/// cell's own CRS across symbol pairs of subframe 0 (neighbour payload is
/// frame-random and averages out), and the fine stage uses the 5 ms PSS
/// pair, whose composite channel is identical at both ends; the coarse
/// value only resolves its +-100 Hz ambiguity.
fn estimate_cfo(frames: &[FrameGrid], identity: &CellIdentity, bins: &[usize]) -> f64 {
    let n_sc = frames[0].n_sc();
    let n_rb = n_sc / crate::grid::SC_PER_RB;
    // Coarse: CRS symbol pairs (0 -> 4) and (7 -> 11), both 4 symbols apart.
    let mut coarse_acc = Complex64::new(0.0, 0.0);
    let pilot_pairs: Vec<(usize, usize)> = vec![(0, 4), (7, 11)];
    let pilot_sum = |frame: &FrameGrid, sym: usize| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        // The v=0 and v=3 shifts alternate across the pair; both belong to
        // port 0 of this cell.
        if let Ok(pilots) = crate::phy::crs::generate_crs(identity.pci(), n_rb, 0, sym, 0) {
            let row = frame.symbol(0, sym);
            for (k, x) in pilots {
                acc += row[k] * x.conj();
            }
        }
        acc
    };
    for frame in frames {
        for &(a, b) in &pilot_pairs {
            coarse_acc += pilot_sum(frame, b) * pilot_sum(frame, a).conj();
        }
    }
    let dt_coarse = symbol_time_s(0, 0, 4) - symbol_time_s(0, 0, 0);
    let f_coarse = coarse_acc.arg() / (2.0 * PI * dt_coarse);

    // Fine: phase progression over the 5 ms between the two PSS occurrences.
    let pss: Vec<Complex64> = sync::generate_pss(identity.n_id2())
        .expect("valid identity")
        .to_vec();
    let best_corr = |y: &[Complex64], x: &[Complex64]| -> Complex64 {
        bins.iter()
            .map(|&d| correlation_at(y, x, d))
            .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
            .unwrap()
    };
    let mut fine_acc = Complex64::new(0.0, 0.0);
    for frame in frames {
        let c_pss1 = best_corr(window62(frame, 1, 2), &pss);
        let c_pss6 = best_corr(window62(frame, 6, 2), &pss);
        fine_acc += c_pss6 * c_pss1.conj();
    }
    let dt_fine = 5e-3;
    let f_fine_wrapped = fine_acc.arg() / (2.0 * PI * dt_fine);
    let wrap = 1.0 / dt_fine; // 200 Hz ambiguity
    f_fine_wrapped + wrap * ((f_coarse - f_fine_wrapped) / wrap).round()
}

/// Remove a carrier frequency offset in place (frequency-domain phase ramp
/// over the symbol clock).
pub fn compensate_cfo(frames: &mut [FrameGrid], cfo_hz: f64) {
    if cfo_hz == 0.0 {
        return;
    }
    for (n, frame) in frames.iter_mut().enumerate() {
        for sf in 0..crate::grid::SUBFRAMES_PER_FRAME {
            for sym in 0..crate::grid::SYMBOLS_PER_SUBFRAME {
                let rot = Complex64::from_polar(1.0, -2.0 * PI * cfo_hz * symbol_time_s(n, sf, sym));
                for v in frame.symbol_mut(sf, sym) {
                    *v *= rot;
                }
            }
        }
    }
}
