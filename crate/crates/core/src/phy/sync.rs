//! Primary and secondary synchronization signals.
//!
//! PSS is a length-63 Zadoff-Chu root sequence (root chosen by `n_id2`) with
//! the DC element punctured, leaving 62 constant-amplitude values. SSS is
//! the interleaved pair of scrambled length-31 m-sequences selected by
//! `(n_id1, n_id2)`; it differs between subframe 0 and subframe 5.
//!
//! TDD placement: PSS occupies the third symbol of subframes 1 and 6, SSS
//! the last symbol of subframes 0 and 5, both on the central 62 subcarriers.

use super::PhyError;
use num_complex::Complex64;
use std::f64::consts::PI;

pub const SYNC_LEN: usize = 62;

/// TDD subframes/symbols carrying PSS.
pub const PSS_POSITIONS: [(usize, usize); 2] = [(1, 2), (6, 2)];
/// TDD subframes/symbols carrying SSS.
pub const SSS_POSITIONS: [(usize, usize); 2] = [(0, 13), (5, 13)];

const PSS_ROOTS: [u32; 3] = [25, 29, 34];

/// 62 Zadoff-Chu values for `n_id2` (DC element punctured).
pub fn generate_pss(n_id2: u8) -> Result<[Complex64; 62], PhyError> {
    if n_id2 > 2 {
        return Err(PhyError::InvalidIdentity(format!("n_id2 {n_id2} > 2")));
    }
    let u = f64::from(PSS_ROOTS[n_id2 as usize]);
    let mut d = [Complex64::new(0.0, 0.0); 62];
    for (n, v) in d.iter_mut().enumerate() {
        let m = n as f64;
        let phase = if n < 31 {
            -PI * u * m * (m + 1.0) / 63.0
        } else {
            -PI * u * (m + 1.0) * (m + 2.0) / 63.0
        };
        *v = Complex64::from_polar(1.0, phase);
    }
    Ok(d)
}

fn m_sequence(update: fn(&[u8; 5]) -> u8) -> [i8; 31] {
    let mut x = [0u8, 0, 0, 0, 1];
    let mut seq = [0i8; 31];
    let mut bits = [0u8; 31];
    for i in 0..31 {
        bits[i] = x[0];
        let next = update(&x);
        x.rotate_left(1);
        x[4] = next;
    }
    for i in 0..31 {
        seq[i] = 1 - 2 * bits[i] as i8;
    }
    seq
}

// x(i+5) = x(i+2) + x(i)
fn s_tilde() -> [i8; 31] {
    m_sequence(|x| (x[2] + x[0]) % 2)
}
// x(i+5) = x(i+3) + x(i)
fn c_tilde() -> [i8; 31] {
    m_sequence(|x| (x[3] + x[0]) % 2)
}
// x(i+5) = x(i+4) + x(i+2) + x(i+1) + x(i)
fn z_tilde() -> [i8; 31] {
    m_sequence(|x| (x[4] + x[2] + x[1] + x[0]) % 2)
}

fn sss_m0_m1(n_id1: u16) -> (usize, usize) {
    let q_prime = n_id1 as usize / 30;
    let q = (n_id1 as usize + q_prime * (q_prime + 1) / 2) / 30;
    let m_prime = n_id1 as usize + q * (q + 1) / 2;
    let m0 = m_prime % 31;
    let m1 = (m0 + m_prime / 31 + 1) % 31;
    (m0, m1)
}

/// 62 BPSK (+-1) SSS values for `(n_id1, n_id2)` in subframe 0 or 5.
pub fn generate_sss(n_id1: u16, n_id2: u8, subframe: usize) -> Result<[f64; 62], PhyError> {
    if n_id1 > 167 {
        return Err(PhyError::InvalidIdentity(format!("n_id1 {n_id1} > 167")));
    }
    if n_id2 > 2 {
        return Err(PhyError::InvalidIdentity(format!("n_id2 {n_id2} > 2")));
    }
    if subframe != 0 && subframe != 5 {
        return Err(PhyError::InvalidIdentity(format!(
            "SSS defined in subframes 0 and 5 only, got {subframe}"
        )));
    }
    let (m0, m1) = sss_m0_m1(n_id1);
    let s = s_tilde();
    let c = c_tilde();
    let z = z_tilde();
    let s0 = |n: usize| s[(n + m0) % 31];
    let s1 = |n: usize| s[(n + m1) % 31];
    let c0 = |n: usize| c[(n + n_id2 as usize) % 31];
    let c1 = |n: usize| c[(n + n_id2 as usize + 3) % 31];
    let z1_m0 = |n: usize| z[(n + m0 % 8) % 31];
    let z1_m1 = |n: usize| z[(n + m1 % 8) % 31];

    let mut d = [0.0f64; 62];
    for n in 0..31 {
        let (even, odd) = if subframe == 0 {
            (s0(n) * c0(n), s1(n) * c1(n) * z1_m0(n))
        } else {
            (s1(n) * c0(n), s0(n) * c1(n) * z1_m1(n))
        };
        d[2 * n] = f64::from(even);
        d[2 * n + 1] = f64::from(odd);
    }
    Ok(d)
}

/// First subcarrier of the central 62-subcarrier sync window.
pub fn sync_offset(n_sc: usize) -> usize {
    n_sc / 2 - 31
}
