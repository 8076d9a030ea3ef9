//! Cell-specific reference signals.
//!
//! CRS symbols are unit-power QPSK drawn from the Gold sequence seeded by
//! the cell identity and slot/symbol indices, and mapped every 6 subcarriers
//! at the PCI-dependent offset `(v + n_id mod 6) mod 6`. Ports 0 and 1 use
//! slot symbols 0 and 4 (subframe symbols 0, 4, 7, 11); ports 2 and 3 use
//! slot symbol 1.

use super::gold::GoldSequence;
use super::PhyError;
use crate::grid::SC_PER_RB;
use num_complex::Complex64;

/// Largest downlink bandwidth in resource blocks; CRS sequences are indexed
/// relative to this so narrower grids take the centered slice.
pub const MAX_RB: usize = 110;

/// Subcarrier offset inside each resource block for frequency shift `v` and
/// cell identity `n_id`.
pub fn crs_subcarrier_offset(v: u8, n_id: u16) -> Result<u8, PhyError> {
    if v != 0 && v != 3 {
        return Err(PhyError::InvalidArgument(format!("v must be 0 or 3, got {v}")));
    }
    if n_id > 503 {
        return Err(PhyError::InvalidIdentity(format!("PCI {n_id} > 503")));
    }
    Ok((v + (n_id % 6) as u8) % 6)
}

/// Frequency shift `v` for `port` in slot symbol `l` of slot `ns`.
/// Returns `None` when the symbol carries no CRS for that port.
pub fn crs_v(port: u8, l: usize, ns: usize) -> Option<u8> {
    match (port, l) {
        (0, 0) => Some(0),
        (0, 4) => Some(3),
        (1, 0) => Some(3),
        (1, 4) => Some(0),
        (2, 1) => Some(3 * (ns as u8 % 2)),
        (3, 1) => Some((3 + 3 * (ns as u8 % 2)) % 6),
        _ => None,
    }
}

/// Subframe symbols carrying CRS for ports 0/1.
pub const CRS_SYMBOLS_PORT01: [usize; 4] = [0, 4, 7, 11];

/// The reference QPSK sequence for `(n_id, ns, l)`, indexed by `m` over the
/// full 110-RB lattice.
fn crs_sequence(n_id: u16, ns: usize, l: usize) -> Vec<Complex64> {
    let n_cp = 1u32; // normal CP
    let c_init = (1 << 10) * (7 * (ns as u32 + 1) + l as u32 + 1) * (2 * u32::from(n_id) + 1)
        + 2 * u32::from(n_id)
        + n_cp;
    let mut gen = GoldSequence::new(c_init);
    (0..2 * MAX_RB).map(|_| gen.next_qpsk()).collect()
}

/// CRS values and their subcarrier positions for one symbol of one port.
///
/// `symbol` is the subframe symbol index (0..13); positions are global
/// subcarrier indices in an `n_rb`-wide grid.
pub fn generate_crs(
    n_id: u16,
    n_rb: usize,
    subframe: usize,
    symbol: usize,
    port: u8,
) -> Result<Vec<(usize, Complex64)>, PhyError> {
    if n_rb == 0 || n_rb > MAX_RB {
        return Err(PhyError::InvalidArgument(format!("n_rb {n_rb} out of range")));
    }
    if subframe >= crate::grid::SUBFRAMES_PER_FRAME || symbol >= crate::grid::SYMBOLS_PER_SUBFRAME {
        return Err(PhyError::InvalidArgument(format!(
            "subframe {subframe} / symbol {symbol} out of range"
        )));
    }
    let ns = 2 * subframe + symbol / 7;
    let l = symbol % 7;
    let v = crs_v(port, l, ns)
        .ok_or_else(|| PhyError::NoCrsInSymbol { port, symbol })?;
    let offset = crs_subcarrier_offset(v, n_id)? as usize;
    let seq = crs_sequence(n_id, ns, l);
    let shift = MAX_RB - n_rb; // centered slice of the max-bandwidth lattice
    let out = (0..2 * n_rb)
        .map(|m| (SC_PER_RB / 2 * m + offset, seq[m + shift]))
        .collect();
    Ok(out)
}
