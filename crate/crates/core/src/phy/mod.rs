//! Deterministic LTE downlink signal generation: cell identities, MIB
//! payloads, and per-cell transmit resource grids assembling CRS, PSS/SSS,
//! PBCH and randomly occupied payload resources.

pub mod coding;
pub mod crs;
pub mod gold;
pub mod pbch;
pub mod sync;

use crate::grid::{FrameGrid, ReRole, RoleMap, SUBFRAMES_PER_FRAME, SYMBOLS_PER_SUBFRAME};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// System frame numbers wrap after 1024 frames.
pub const SFN_PERIOD: u16 = 1024;
/// The broadcast channel occupies these subframe-0 symbols.
pub const PBCH_SYMBOLS: std::ops::RangeInclusive<usize> = 7..=10;
/// Width of the broadcast window in subcarriers.
pub const PBCH_SC: usize = 72;

#[derive(Debug, Clone, thiserror::Error)]
pub enum PhyError {
    #[error("invalid cell identity: {0}")]
    InvalidIdentity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no CRS for port {port} in subframe symbol {symbol}")]
    NoCrsInSymbol { port: u8, symbol: usize },
    #[error("unsupported antenna port count {0}")]
    UnsupportedPorts(u8),
}

/// Physical layer cell identity: `pci = 3 * n_id1 + n_id2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellIdentity {
    n_id1: u16,
    n_id2: u8,
}

impl CellIdentity {
    pub fn new(n_id1: u16, n_id2: u8) -> Result<Self, PhyError> {
        if n_id1 > 167 {
            return Err(PhyError::InvalidIdentity(format!("n_id1 {n_id1} > 167")));
        }
        if n_id2 > 2 {
            return Err(PhyError::InvalidIdentity(format!("n_id2 {n_id2} > 2")));
        }
        Ok(Self { n_id1, n_id2 })
    }

    pub fn from_pci(pci: u16) -> Result<Self, PhyError> {
        if pci > 503 {
            return Err(PhyError::InvalidIdentity(format!("PCI {pci} > 503")));
        }
        Ok(Self {
            n_id1: pci / 3,
            n_id2: (pci % 3) as u8,
        })
    }

    pub fn pci(&self) -> u16 {
        3 * self.n_id1 + u16::from(self.n_id2)
    }

    pub fn n_id1(&self) -> u16 {
        self.n_id1
    }

    pub fn n_id2(&self) -> u8 {
        self.n_id2
    }

    /// CRS frequency shift `pci mod 6`.
    pub fn v_shift(&self) -> u8 {
        (self.pci() % 6) as u8
    }
}

/// Static configuration of one simulated cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellConfig {
    pub identity: CellIdentity,
    /// Transmit antenna ports: 1 or 2.
    pub n_ports: u8,
    /// Transmit power relative to the reference cell, dB.
    pub tx_power_db: f64,
    /// Probability that a payload RE is occupied in a given frame.
    pub payload_duty: f64,
}

impl CellConfig {
    pub fn validate(&self) -> Result<(), PhyError> {
        if self.n_ports != 1 && self.n_ports != 2 {
            return Err(PhyError::UnsupportedPorts(self.n_ports));
        }
        if !(0.0..=1.0).contains(&self.payload_duty) {
            return Err(PhyError::InvalidArgument(format!(
                "payload_duty {} outside [0, 1]",
                self.payload_duty
            )));
        }
        Ok(())
    }

    pub fn amplitude(&self) -> f64 {
        10f64.powf(self.tx_power_db / 20.0)
    }
}

/// Master information block payload: 24 information bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MibPayload {
    /// 3-bit downlink bandwidth field (0..=5 map to 6..100 RB).
    pub bandwidth_index: u8,
    /// 3-bit PHICH configuration, constant in this scope.
    pub phich_config: u8,
    /// Eight most significant bits of the system frame number.
    pub sfn_msb8: u8,
}

/// Downlink bandwidths addressable by the MIB, in resource blocks.
pub const MIB_BANDWIDTHS_RB: [usize; 6] = [6, 15, 25, 50, 75, 100];

impl MibPayload {
    pub fn new(bandwidth_index: u8, phich_config: u8, sfn: u16) -> Result<Self, PhyError> {
        if bandwidth_index > 7 || phich_config > 7 {
            return Err(PhyError::InvalidArgument(
                "bandwidth_index and phich_config are 3-bit fields".into(),
            ));
        }
        if sfn >= SFN_PERIOD {
            return Err(PhyError::InvalidArgument(format!("SFN {sfn} >= {SFN_PERIOD}")));
        }
        Ok(Self {
            bandwidth_index,
            phich_config,
            sfn_msb8: (sfn >> 2) as u8,
        })
    }

    pub fn for_bandwidth_rb(n_rb: usize, sfn: u16) -> Result<Self, PhyError> {
        let idx = MIB_BANDWIDTHS_RB
            .iter()
            .position(|&rb| rb == n_rb)
            .ok_or_else(|| {
                PhyError::InvalidArgument(format!("{n_rb} RB is not an addressable MIB bandwidth"))
            })?;
        Self::new(idx as u8, 0, sfn)
    }

    /// Same constant fields with the SFN MSBs for another frame.
    pub fn with_sfn(&self, sfn: u16) -> Self {
        Self {
            sfn_msb8: ((sfn % SFN_PERIOD) >> 2) as u8,
            ..*self
        }
    }

    /// Full SFN given the quarter index `sfn mod 4` detected at decode time.
    pub fn sfn_with_quarter(&self, quarter: u8) -> u16 {
        (u16::from(self.sfn_msb8) << 2) + u16::from(quarter & 3)
    }

    /// 24-bit field packing: bandwidth(3) | phich(3) | sfn_msb(8) | spare(10).
    pub fn pack(&self) -> [u8; coding::MIB_BITS] {
        let mut bits = [0u8; coding::MIB_BITS];
        for i in 0..3 {
            bits[i] = (self.bandwidth_index >> (2 - i)) & 1;
        }
        for i in 0..3 {
            bits[3 + i] = (self.phich_config >> (2 - i)) & 1;
        }
        for i in 0..8 {
            bits[6 + i] = (self.sfn_msb8 >> (7 - i)) & 1;
        }
        bits
    }

    pub fn unpack(bits: &[u8]) -> Result<Self, PhyError> {
        if bits.len() != coding::MIB_BITS {
            return Err(PhyError::InvalidArgument(format!(
                "MIB payload must be {} bits",
                coding::MIB_BITS
            )));
        }
        let field = |range: std::ops::Range<usize>| -> u8 {
            bits[range].iter().fold(0u8, |acc, b| (acc << 1) | (b & 1))
        };
        Ok(Self {
            bandwidth_index: field(0..3),
            phich_config: field(3..6),
            sfn_msb8: field(6..14),
        })
    }
}

/// Precomputed transmitter for one cell on a fixed grid width.
///
/// Each antenna port is a separate transmit stream with its own grid. The
/// deterministic signals (CRS, PSS, SSS) form per-port template frames
/// assembled once; per-frame work is a template copy, the PBCH quarter for
/// the current SFN and random payload occupancy. PSS/SSS ride on port 0.
#[derive(Debug, Clone)]
pub struct CellTransmitter {
    config: CellConfig,
    n_rb: usize,
    templates: Vec<FrameGrid>,
    roles: RoleMap,
    pbch: pbch::PbchEncoder,
    pbch_positions: Vec<(usize, usize)>,
    /// Payload RE linear indices grouped by subframe.
    payload_by_subframe: Vec<Vec<u32>>,
    amplitude: f64,
}

impl CellTransmitter {
    pub fn new(config: CellConfig, n_rb: usize, mib: MibPayload) -> Result<Self, PhyError> {
        config.validate()?;
        let n_sc = n_rb * crate::grid::SC_PER_RB;
        if n_sc < PBCH_SC {
            return Err(PhyError::InvalidArgument(format!(
                "grid of {n_rb} RB cannot hold the {PBCH_SC}-subcarrier broadcast window"
            )));
        }
        let ports = usize::from(config.n_ports);
        let mut templates = vec![
            FrameGrid::zeroed(n_sc).map_err(|e| PhyError::InvalidArgument(e.to_string()))?;
            ports
        ];
        let mut roles = RoleMap::new(n_sc);
        let identity = config.identity;
        let v_shift = identity.v_shift();
        let center72 = n_sc / 2 - PBCH_SC / 2;

        // CRS for each transmitted port, every subframe.
        for sf in 0..SUBFRAMES_PER_FRAME {
            for port in 0..config.n_ports {
                for &sym in crs::CRS_SYMBOLS_PORT01.iter() {
                    for (k, v) in crs::generate_crs(identity.pci(), n_rb, sf, sym, port)? {
                        templates[usize::from(port)].set(sf, sym, k, v);
                        roles.set(sf, sym, k, ReRole::Crs(port));
                    }
                }
            }
        }
        // Synchronization signals on the central 62 subcarriers, port 0.
        let sync_off = sync::sync_offset(n_sc);
        let pss = sync::generate_pss(identity.n_id2())?;
        for (sf, sym) in sync::PSS_POSITIONS {
            for (i, v) in pss.iter().enumerate() {
                templates[0].set(sf, sym, sync_off + i, *v);
                roles.set(sf, sym, sync_off + i, ReRole::Pss);
            }
        }
        for (sf, sym) in sync::SSS_POSITIONS {
            let sss = sync::generate_sss(identity.n_id1(), identity.n_id2(), sf)?;
            for (i, v) in sss.iter().enumerate() {
                templates[0].set(sf, sym, sync_off + i, Complex64::new(*v, 0.0));
                roles.set(sf, sym, sync_off + i, ReRole::Sss);
            }
        }
        // Broadcast region roles: PBCH plus reserved reference positions.
        let pbch_positions = pbch::pbch_positions(n_rb, v_shift);
        for &(sym, k) in &pbch_positions {
            roles.set(0, sym, k, ReRole::Pbch);
        }
        // Everything still unassigned in the broadcast window of symbols 7/8
        // is a reserved reference position and stays empty; mark payload
        // everywhere else.
        let mut payload_by_subframe = vec![Vec::new(); SUBFRAMES_PER_FRAME];
        for sf in 0..SUBFRAMES_PER_FRAME {
            for sym in 0..SYMBOLS_PER_SUBFRAME {
                for k in 0..n_sc {
                    if roles.get(sf, sym, k) != ReRole::Empty {
                        continue;
                    }
                    let in_pbch_region =
                        sf == 0 && PBCH_SYMBOLS.contains(&sym) && (center72..center72 + PBCH_SC).contains(&k);
                    if in_pbch_region {
                        continue; // reserved for reference signals
                    }
                    roles.set(sf, sym, k, ReRole::Payload);
                    let lin = ((sf * SYMBOLS_PER_SUBFRAME + sym) * n_sc + k) as u32;
                    payload_by_subframe[sf].push(lin);
                }
            }
        }

        let amplitude = config.amplitude();
        for t in &mut templates {
            t.scale(amplitude);
        }
        let pbch = pbch::PbchEncoder::new(identity.pci(), config.n_ports, mib)?;
        Ok(Self {
            config,
            n_rb,
            templates,
            roles,
            pbch,
            pbch_positions,
            payload_by_subframe,
            amplitude,
        })
    }

    pub fn config(&self) -> &CellConfig {
        &self.config
    }

    pub fn n_rb(&self) -> usize {
        self.n_rb
    }

    pub fn n_streams(&self) -> usize {
        usize::from(self.config.n_ports)
    }

    pub fn roles(&self) -> &RoleMap {
        &self.roles
    }

    pub fn pbch(&self) -> &pbch::PbchEncoder {
        &self.pbch
    }

    pub fn pbch_positions(&self) -> &[(usize, usize)] {
        &self.pbch_positions
    }

    /// Assemble the per-port transmit grids for the frame with system frame
    /// number `sfn`. Payload REs are filled only in `payload_subframes`;
    /// multi-port cells split payload power evenly across ports.
    pub fn frame<R: Rng>(&self, sfn: u16, payload_subframes: &[usize], rng: &mut R) -> Vec<FrameGrid> {
        let mut grids = self.templates.clone();
        let per_port = self.pbch.quarter_symbols(sfn);
        for (port, port_vals) in per_port.iter().enumerate() {
            for (&(sym, k), v) in self.pbch_positions.iter().zip(port_vals.iter()) {
                grids[port].add(0, sym, k, v * self.amplitude);
            }
        }
        let duty = self.config.payload_duty;
        if duty > 0.0 {
            let ports = grids.len();
            let amp =
                self.amplitude * std::f64::consts::FRAC_1_SQRT_2 / (ports as f64).sqrt();
            const QPSK: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
            for grid in grids.iter_mut() {
                let data = grid.samples_mut();
                for &sf in payload_subframes {
                    for &lin in &self.payload_by_subframe[sf] {
                        if duty >= 1.0 || rng.gen::<f64>() < duty {
                            let (re, im) = QPSK[(rng.next_u32() & 3) as usize];
                            data[lin as usize] = Complex64::new(re * amp, im * amp);
                        }
                    }
                }
            }
        }
        grids
    }
}

/// One-shot frame mapping for a cell (template construction included).
pub fn map_frame<R: Rng>(
    config: &CellConfig,
    n_rb: usize,
    mib: MibPayload,
    sfn: u16,
    rng: &mut R,
) -> Result<Vec<FrameGrid>, PhyError> {
    let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
    Ok(CellTransmitter::new(config.clone(), n_rb, mib)?.frame(sfn, &all, rng))
}
