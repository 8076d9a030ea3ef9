//! Successive interference cancellation for multi-cell discovery.
//!
//! Detect the strongest remaining cell, decode its broadcast channel,
//! regenerate its deterministic signals, estimate every discovered stream's
//! channel jointly, subtract the reconstructed contributions from the
//! capture, and repeat on the residual until detection or decoding fails.

use super::estimate::{joint_ls_estimate, measure_rsrp, JointEstimate};
use super::known::{CellSignals, RegionGeometry};
use super::mib::decode_mib;
use super::search::{compensate_cfo, detect_cell, SearchParams};
use super::{CellInfo, ReceiverError};
use crate::grid::FrameGrid;
use crate::phy::{CellIdentity, PBCH_SYMBOLS, SFN_PERIOD};
use num_complex::Complex64;

/// Knobs of the discovery loop.
#[derive(Debug, Clone, Copy)]
pub struct SicParams {
    pub search: SearchParams,
    /// RE-group tiling for the cancellation channel estimates.
    pub k_sc: usize,
    pub l_sym: usize,
    pub cond_limit: f64,
    /// Frames fed to each broadcast decode attempt.
    pub decode_frames: usize,
    pub max_cells: usize,
}

impl Default for SicParams {
    fn default() -> Self {
        Self {
            search: SearchParams::default(),
            k_sc: 3,
            l_sym: 4,
            cond_limit: 1e6,
            decode_frames: 8,
            max_cells: 8,
        }
    }
}

/// Discovery outcome: cells in cancellation order plus the receiver CFO
/// estimated from the strongest cell.
#[derive(Debug, Clone)]
pub struct SicOutcome {
    pub cells: Vec<CellInfo>,
    pub cfo_hz: f64,
}

/// Subtract one cell's reconstructed deterministic signals from `frames`,
/// using `channel(port, k, frame)` for the per-stream channel.
pub fn cancel_cell<F>(
    frames: &mut [FrameGrid],
    signals: &CellSignals,
    sfn0: u16,
    channel: F,
) where
    F: Fn(u8, usize, usize) -> Complex64,
{
    let n_sc = match frames.first() {
        Some(f) => f.n_sc(),
        None => return,
    };
    let geometry = RegionGeometry::for_grid(n_sc);
    let sync = signals.sync_values(&geometry);
    let crs0 = signals.central_crs_values(&geometry, 0);
    for (n, frame) in frames.iter_mut().enumerate() {
        let sfn = (sfn0 + n as u16) % SFN_PERIOD;
        let region = signals.region_values(sfn, &geometry);
        for (port, vals) in region.iter().enumerate() {
            for (idx, &x) in vals.iter().enumerate() {
                if x == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let s = idx / crate::phy::PBCH_SC;
                let j = idx % crate::phy::PBCH_SC;
                let k = geometry.window_start + j;
                let h = channel(port as u8, k, n);
                frame.add(0, 7 + s, k, -(x * h));
            }
        }
        for &(sf, sym, k, x) in &sync {
            let h = channel(0, k, n);
            frame.add(sf, sym, k, -(x * h));
        }
        for &(sym, k, port, x) in &crs0 {
            if PBCH_SYMBOLS.contains(&sym) {
                continue; // already covered by the region values
            }
            let h = channel(port, k, n);
            frame.add(0, sym, k, -(x * h));
        }
    }
}

/// Run the discovery loop on one antenna's capture.
///
/// Returns an empty cell list when nothing clears the detection threshold.
pub fn sic_cell_search(capture: &[FrameGrid], params: &SicParams) -> Result<SicOutcome, ReceiverError> {
    if capture.is_empty() {
        return Err(ReceiverError::InvalidArgument("empty capture".into()));
    }
    // CFO is receiver-common: estimate from the strongest cell, compensate
    // once, then search on the corrected capture.
    let mut work: Vec<FrameGrid> = capture.to_vec();
    let cfo_hz = match detect_cell(&work, &[], &params.search) {
        Ok(det) => {
            compensate_cfo(&mut work, det.cfo_hz);
            det.cfo_hz
        }
        Err(ReceiverError::NoCellFound) => {
            return Ok(SicOutcome {
                cells: Vec::new(),
                cfo_hz: 0.0,
            })
        }
        Err(e) => return Err(e),
    };

    let mut cells: Vec<CellInfo> = Vec::new();
    let mut found_ids: Vec<CellIdentity> = Vec::new();
    let mut residual = work.clone();
    while cells.len() < params.max_cells {
        let det = match detect_cell(&residual, &found_ids, &params.search) {
            Ok(d) => d,
            Err(ReceiverError::NoCellFound) => break,
            Err(e) => return Err(e),
        };
        let decode = match decode_mib(&residual, det.identity, params.decode_frames) {
            Ok(d) => d,
            Err(ReceiverError::DecodeFailed) => break,
            Err(e) => return Err(e),
        };
        let rsrp = measure_rsrp(&work, det.identity)?;
        cells.push(decode.into_cell_info(det.identity, rsrp, cells.len()));
        found_ids.push(det.identity);

        // Re-estimate all discovered streams on the full capture and build
        // a fresh residual.
        let est = joint_ls_estimate(&work, &cells, params.k_sc, params.l_sym, params.cond_limit)?;
        residual = work.clone();
        let mut stream_base = 0usize;
        for cell in &cells {
            let signals = CellSignals::new(cell.identity, cell.n_ports, cell.mib)?;
            let base = stream_base;
            let est_ref: &JointEstimate = &est;
            cancel_cell(&mut residual, &signals, cell.sfn0, |port, k, frame| {
                est_ref.estimate_at(frame, k, base + usize::from(port))
            });
            stream_base += usize::from(cell.n_ports);
        }
    }
    Ok(SicOutcome { cells, cfo_hz })
}
