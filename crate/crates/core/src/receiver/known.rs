//! Reconstruction of every deterministic signal a discovered cell transmits
//! in the central window: the per-port broadcast-region values (PBCH plus
//! in-region CRS), the synchronization signals, and the central CRS
//! positions. Values are unit-amplitude; transmit power is absorbed by the
//! estimated channel.

use crate::grid::SC_PER_RB;
use crate::phy::{crs, pbch, sync, CellIdentity, MibPayload, PhyError, PBCH_SC};
use num_complex::Complex64;

/// Region geometry on a concrete grid width.
#[derive(Debug, Clone, Copy)]
pub struct RegionGeometry {
    pub n_sc: usize,
    /// Global subcarrier of window offset 0.
    pub window_start: usize,
}

impl RegionGeometry {
    pub fn for_grid(n_sc: usize) -> Self {
        Self {
            n_sc,
            window_start: n_sc / 2 - PBCH_SC / 2,
        }
    }

    pub fn n_rb(&self) -> usize {
        self.n_sc / SC_PER_RB
    }
}

/// Deterministic transmit-side knowledge for one discovered cell.
#[derive(Debug, Clone)]
pub struct CellSignals {
    pub identity: CellIdentity,
    pub n_ports: u8,
    encoder: pbch::PbchEncoder,
    /// Broadcast RE positions as (region symbol offset, window offset).
    region_positions: Vec<(usize, usize)>,
}

impl CellSignals {
    pub fn new(identity: CellIdentity, n_ports: u8, mib: MibPayload) -> Result<Self, PhyError> {
        let encoder = pbch::PbchEncoder::new(identity.pci(), n_ports, mib)?;
        // Positions relative to a minimal 6-RB grid translate to any width.
        let region_positions = pbch::pbch_positions(6, identity.v_shift())
            .into_iter()
            .map(|(sym, k)| (sym - 7, k))
            .collect();
        Ok(Self {
            identity,
            n_ports,
            encoder,
            region_positions,
        })
    }

    /// Known transmit values over the whole 4 x 72 region for frame `sfn`:
    /// `values[port][region_symbol * 72 + window_offset]`, zero at positions
    /// the port leaves empty.
    pub fn region_values(&self, sfn: u16, geometry: &RegionGeometry) -> Vec<Vec<Complex64>> {
        let ports = usize::from(self.n_ports);
        let mut values = vec![vec![Complex64::new(0.0, 0.0); 4 * PBCH_SC]; ports];
        let per_port = self.encoder.quarter_symbols(sfn);
        for (port, vals) in per_port.iter().enumerate() {
            for (&(s, j), v) in self.region_positions.iter().zip(vals.iter()) {
                values[port][s * PBCH_SC + j] = *v;
            }
        }
        // In-region CRS (region symbol 0 = subframe symbol 7).
        for port in 0..self.n_ports {
            if let Ok(res) = crs::generate_crs(self.identity.pci(), geometry.n_rb(), 0, 7, port) {
                for (k, v) in res {
                    if let Some(j) = k.checked_sub(geometry.window_start) {
                        if j < PBCH_SC {
                            values[usize::from(port)][j] = v;
                        }
                    }
                }
            }
        }
        values
    }

    /// Synchronization REs as `(subframe, symbol, global k, value)`; all on
    /// port 0.
    pub fn sync_values(&self, geometry: &RegionGeometry) -> Vec<(usize, usize, usize, Complex64)> {
        let off = sync::sync_offset(geometry.n_sc);
        let mut out = Vec::with_capacity(4 * sync::SYNC_LEN);
        let pss = sync::generate_pss(self.identity.n_id2()).expect("validated identity");
        for (sf, sym) in sync::PSS_POSITIONS {
            for (i, v) in pss.iter().enumerate() {
                out.push((sf, sym, off + i, *v));
            }
        }
        for (sf, sym) in sync::SSS_POSITIONS {
            let sss = sync::generate_sss(self.identity.n_id1(), self.identity.n_id2(), sf)
                .expect("validated identity");
            for (i, v) in sss.iter().enumerate() {
                out.push((sf, sym, off + i, Complex64::new(*v, 0.0)));
            }
        }
        out
    }

    /// CRS positions inside the central window for one subframe, as
    /// `(symbol, global k, port, value)`.
    pub fn central_crs_values(
        &self,
        geometry: &RegionGeometry,
        subframe: usize,
    ) -> Vec<(usize, usize, u8, Complex64)> {
        let mut out = Vec::new();
        for port in 0..self.n_ports {
            for &sym in crs::CRS_SYMBOLS_PORT01.iter() {
                if let Ok(res) = crs::generate_crs(self.identity.pci(), geometry.n_rb(), subframe, sym, port)
                {
                    for (k, v) in res {
                        if k >= geometry.window_start && k < geometry.window_start + PBCH_SC {
                            out.push((sym, k, port, v));
                        }
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ReRole, SUBFRAMES_PER_FRAME};
    use crate::phy::{CellConfig, CellTransmitter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn region_values_match_transmitter_output() {
        // Reconstruction against the transmitter as oracle, over 64 frames
        // spanning several TTIs and the SFN quarter cycle.
        for ports in [1u8, 2] {
            let identity = CellIdentity::from_pci(253).unwrap();
            let mib = MibPayload::new(2, 0, 1000).unwrap();
            let cfg = CellConfig {
                identity,
                n_ports: ports,
                tx_power_db: 0.0,
                payload_duty: 0.0,
            };
            let tx = CellTransmitter::new(cfg, 15, mib).unwrap();
            let signals = CellSignals::new(identity, ports, mib).unwrap();
            let geom = RegionGeometry::for_grid(15 * SC_PER_RB);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
            for sfn_off in 0..64u16 {
                let sfn = (1000 + sfn_off) % 1024;
                let grids = tx.frame(sfn, &all, &mut rng);
                let recon = signals.region_values(sfn, &geom);
                for port in 0..usize::from(ports) {
                    for s in 0..4 {
                        for j in 0..PBCH_SC {
                            let expect = grids[port].get(0, 7 + s, geom.window_start + j);
                            let got = recon[port][s * PBCH_SC + j];
                            assert!(
                                (expect - got).norm() < 1e-12,
                                "sfn {sfn} port {port} sym {s} j {j}: {expect} vs {got}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn wrong_port_hypothesis_mismatches_transmitter() {
        let identity = CellIdentity::from_pci(252).unwrap();
        let mib = MibPayload::new(0, 0, 8).unwrap();
        let cfg = CellConfig {
            identity,
            n_ports: 2,
            tx_power_db: 0.0,
            payload_duty: 0.0,
        };
        let tx = CellTransmitter::new(cfg, 6, mib).unwrap();
        let wrong = CellSignals::new(identity, 1, mib).unwrap();
        let geom = RegionGeometry::for_grid(72);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let grids = tx.frame(8, &[0], &mut rng);
        let recon = wrong.region_values(8, &geom);
        let mut mismatches = 0;
        for s in 0..4 {
            for j in 0..PBCH_SC {
                let expect = grids[0].get(0, 7 + s, geom.window_start + j);
                if (expect - recon[0][s * PBCH_SC + j]).norm() > 1e-9 {
                    mismatches += 1;
                }
            }
        }
        assert!(mismatches > 50, "only {mismatches} mismatches");
    }

    #[test]
    fn sync_values_match_template_roles() {
        let identity = CellIdentity::from_pci(249).unwrap();
        let mib = MibPayload::new(0, 0, 0).unwrap();
        let cfg = CellConfig {
            identity,
            n_ports: 1,
            tx_power_db: 0.0,
            payload_duty: 0.0,
        };
        let tx = CellTransmitter::new(cfg, 6, mib).unwrap();
        let signals = CellSignals::new(identity, 1, mib).unwrap();
        let geom = RegionGeometry::for_grid(72);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let grids = tx.frame(0, &[0], &mut rng);
        for (sf, sym, k, v) in signals.sync_values(&geom) {
            assert!((grids[0].get(sf, sym, k) - v).norm() < 1e-12);
            let role = tx.roles().get(sf, sym, k);
            assert!(role == ReRole::Pss || role == ReRole::Sss);
        }
    }
}
