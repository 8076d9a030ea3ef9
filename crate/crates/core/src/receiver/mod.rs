//! Receiver chain: cell search with CFO estimation, broadcast decoding,
//! successive interference cancellation, and the two channel estimators
//! (per-subcarrier reference-signal LS and multi-cell joint LS over the
//! broadcast region).

pub mod estimate;
pub mod known;
pub mod mib;
pub mod search;
pub mod sic;

pub use estimate::{crs_ls_estimate, joint_ls_estimate, measure_rsrp, JointEstimate};
pub use mib::decode_mib;
pub use search::{compensate_cfo, detect_cell};
pub use sic::sic_cell_search;

use crate::dsp::CsiSource;
use crate::phy::{CellIdentity, MibPayload, PhyError, PBCH_SC};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReceiverError {
    #[error("no cell found above the detection threshold")]
    NoCellFound,
    #[error("broadcast decode failed for every hypothesis")]
    DecodeFailed,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
}

/// A discovered cell: identity, decoded broadcast contents and bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellInfo {
    pub identity: CellIdentity,
    pub n_ports: u8,
    pub mib: MibPayload,
    /// System frame number of capture frame 0 (shared by synchronized cells).
    pub sfn0: u16,
    /// Average reference-signal power on the original capture, dB.
    pub rsrp_db: f64,
    /// Discovery rank in the cancellation loop (0 = strongest).
    pub sic_order: usize,
}

/// One rectangular RE group of the broadcast region: `k_count` contiguous
/// subcarriers by `l_count` symbols over which the channel is treated as
/// constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReGroup {
    pub k_g: usize,
    pub l_g: usize,
    /// First subcarrier offset within the 72-subcarrier window.
    pub j_start: usize,
    pub k_count: usize,
    /// First symbol offset within the 4-symbol region (symbol 7 + offset).
    pub s_start: usize,
    pub l_count: usize,
}

impl ReGroup {
    /// `(region symbol offset, window subcarrier offset)` members.
    pub fn index_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.s_start..self.s_start + self.l_count)
            .flat_map(move |s| (self.j_start..self.j_start + self.k_count).map(move |j| (s, j)))
    }

    pub fn size(&self) -> usize {
        self.k_count * self.l_count
    }
}

/// Tile the 72 x 4 broadcast region into `K x L` groups.
///
/// `K * L` must cover the expected stream count (checked by the estimator)
/// and the tiling must be remainder-free.
pub fn re_groups(k_sc: usize, l_sym: usize) -> Result<Vec<ReGroup>, ReceiverError> {
    if k_sc == 0 || l_sym == 0 || PBCH_SC % k_sc != 0 || 4 % l_sym != 0 {
        return Err(ReceiverError::InvalidArgument(format!(
            "group tiling {k_sc} x {l_sym} does not partition the {PBCH_SC} x 4 region"
        )));
    }
    let mut groups = Vec::with_capacity((PBCH_SC / k_sc) * (4 / l_sym));
    for l_g in 0..4 / l_sym {
        for k_g in 0..PBCH_SC / k_sc {
            groups.push(ReGroup {
                k_g,
                l_g,
                j_start: k_g * k_sc,
                k_count: k_sc,
                s_start: l_g * l_sym,
                l_count: l_sym,
            });
        }
    }
    Ok(groups)
}

/// Per-frame complex channel estimates on a uniform frequency lattice
/// (one row per 10 ms frame; the series is sampled at exactly 100 Hz).
#[derive(Debug, Clone)]
pub struct CsiSeries {
    pub source: CsiSource,
    /// Lattice index of each column (uniform spacing).
    pub lattice: Vec<usize>,
    /// Global subcarrier index of each column, for reports.
    pub subcarriers: Vec<usize>,
    /// `rows[frame][column]`
    pub rows: Vec<Vec<Complex64>>,
}

impl CsiSeries {
    pub fn n_frames(&self) -> usize {
        self.rows.len()
    }

    pub fn n_points(&self) -> usize {
        self.lattice.len()
    }

    /// Per-subcarrier series (transpose of `rows`).
    pub fn column(&self, idx: usize) -> Vec<Complex64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Restrict the series to the given column indices.
    pub fn select_columns(&self, keep: &[usize]) -> CsiSeries {
        CsiSeries {
            source: self.source,
            lattice: keep.iter().map(|&i| self.lattice[i]).collect(),
            subcarriers: keep.iter().map(|&i| self.subcarriers[i]).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&i| r[i]).collect())
                .collect(),
        }
    }
}
