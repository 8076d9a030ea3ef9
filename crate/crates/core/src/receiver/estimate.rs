//! Channel estimators.
//!
//! `crs_ls_estimate` is the conventional per-subcarrier reference-signal LS:
//! the quotient of received over known pilot on the cell's own pilot REs of
//! subframe 0, which folds any colliding neighbour payload straight into
//! the estimate.
//!
//! `joint_ls_estimate` solves the broadcast region jointly for all
//! discovered streams: within each RE group the channels are treated as
//! constant, the known per-stream transmit values form the design matrix,
//! and the group channel vector is the least-squares solution. Neighbour
//! broadcast signals stop being interference the moment they become columns
//! of the design matrix, leaving a noise-limited estimate.

use super::known::{CellSignals, RegionGeometry};
use super::{CellInfo, CsiSeries, ReGroup, ReceiverError};
use crate::dsp::CsiSource;
use crate::grid::{FrameGrid, SC_PER_RB};
use crate::phy::{crs, CellIdentity, PBCH_SC, SFN_PERIOD};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// RSRP reported for a silent cell.
pub const RSRP_FLOOR_DB: f64 = -300.0;

/// Pilot-quotient estimate per CRS subcarrier of subframe 0, one row per
/// frame.
///
/// Uses the `v = 0` frequency shift of `port` (two symbols per subframe),
/// giving `2 * n_rb` estimated subcarriers at a uniform spacing of 6.
pub fn crs_ls_estimate(
    frames: &[FrameGrid],
    identity: CellIdentity,
    port: u8,
) -> Result<CsiSeries, ReceiverError> {
    let n_sc = frames
        .first()
        .map(|f| f.n_sc())
        .ok_or_else(|| ReceiverError::InvalidArgument("empty capture".into()))?;
    let n_rb = n_sc / SC_PER_RB;
    // Symbols of subframe 0 where this port transmits with v = 0.
    let symbols: [usize; 2] = match port {
        0 => [0, 7],
        1 => [4, 11],
        _ => {
            return Err(ReceiverError::InvalidArgument(format!(
                "pilot estimate supports ports 0/1, got {port}"
            )))
        }
    };
    let pilots: Vec<Vec<(usize, Complex64)>> = symbols
        .iter()
        .map(|&sym| crs::generate_crs(identity.pci(), n_rb, 0, sym, port))
        .collect::<Result<_, _>>()?;
    let positions: Vec<usize> = pilots[0].iter().map(|(k, _)| *k).collect();
    let mut rows = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut row = vec![Complex64::new(0.0, 0.0); positions.len()];
        for (sym_idx, &sym) in symbols.iter().enumerate() {
            let symbol = frame.symbol(0, sym);
            for (i, &(k, x)) in pilots[sym_idx].iter().enumerate() {
                // Unit-power pilots: y / x == y * conj(x).
                row[i] += symbol[k] * x.conj();
            }
        }
        for v in row.iter_mut() {
            *v /= symbols.len() as f64;
        }
        rows.push(row);
    }
    Ok(CsiSeries {
        source: CsiSource::Crs,
        lattice: (0..positions.len()).collect(),
        subcarriers: positions,
        rows,
    })
}

/// Reference-signal received power: average pilot-estimate power in dB.
pub fn measure_rsrp(frames: &[FrameGrid], identity: CellIdentity) -> Result<f64, ReceiverError> {
    let series = crs_ls_estimate(frames, identity, 0)?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for row in &series.rows {
        for v in row {
            acc += v.norm_sqr();
            count += 1;
        }
    }
    if count == 0 || acc <= 0.0 {
        return Ok(RSRP_FLOOR_DB);
    }
    Ok((10.0 * (acc / count as f64).log10()).max(RSRP_FLOOR_DB))
}

/// Identifier of one estimated stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub pci: u16,
    pub port: u8,
}

/// Joint LS output: per frame, per RE group, one estimate per stream.
#[derive(Debug, Clone)]
pub struct JointEstimate {
    pub streams: Vec<StreamId>,
    pub groups: Vec<ReGroup>,
    /// `rows[frame][group][stream]`
    pub rows: Vec<Vec<Vec<Complex64>>>,
    /// Groups whose design matrix failed the conditioning check and were
    /// filled by interpolation.
    pub interpolated: Vec<Vec<bool>>,
    /// Global subcarrier index of each group centre.
    group_centers: Vec<usize>,
    /// Window start subcarrier.
    window_start: usize,
}

impl JointEstimate {
    /// Channel series of one stream: one row per frame, one column per
    /// group (frequency-ordered within each symbol layer).
    pub fn stream_series(&self, stream: usize) -> CsiSeries {
        CsiSeries {
            source: CsiSource::Pbch,
            lattice: self.groups.iter().map(|g| g.k_g).collect(),
            subcarriers: self.group_centers.clone(),
            rows: self
                .rows
                .iter()
                .map(|frame| frame.iter().map(|grp| grp[stream]).collect())
                .collect(),
        }
    }

    /// Group estimate covering global subcarrier `k` (same frame), used for
    /// cancellation on REs outside the broadcast symbols.
    pub fn estimate_at(&self, frame: usize, k: usize, stream: usize) -> Complex64 {
        let j = k.saturating_sub(self.window_start).min(PBCH_SC - 1);
        // Frequency-layer groups only (first layer when L < 4 splits them).
        let per_layer = self
            .groups
            .iter()
            .position(|g| g.l_g > 0)
            .unwrap_or(self.groups.len());
        let g = (j / self.groups[0].k_count).min(per_layer - 1);
        self.rows[frame][g][stream]
    }
}

/// Reusable joint-LS state for one discovered cell set on a fixed grid,
/// supporting frame-at-a-time estimation for streaming pipelines.
pub struct JointLsContext {
    geometry: RegionGeometry,
    groups: Vec<ReGroup>,
    streams: Vec<StreamId>,
    signals: Vec<CellSignals>,
    sfn0: u16,
    cond_limit: f64,
    group_centers: Vec<usize>,
}

impl JointLsContext {
    pub fn new(
        n_sc: usize,
        cells: &[CellInfo],
        k_sc: usize,
        l_sym: usize,
        cond_limit: f64,
    ) -> Result<Self, ReceiverError> {
        if cells.is_empty() {
            return Err(ReceiverError::InvalidArgument("no cells discovered".into()));
        }
        let geometry = RegionGeometry::for_grid(n_sc);
        let groups = super::re_groups(k_sc, l_sym)?;
        let signals: Vec<CellSignals> = cells
            .iter()
            .map(|c| CellSignals::new(c.identity, c.n_ports, c.mib))
            .collect::<Result<_, _>>()?;
        let mut streams = Vec::new();
        for c in cells {
            for port in 0..c.n_ports {
                streams.push(StreamId {
                    pci: c.identity.pci(),
                    port,
                });
            }
        }
        if k_sc * l_sym < streams.len() {
            return Err(ReceiverError::InvalidArgument(format!(
                "group size {} cannot resolve {} streams",
                k_sc * l_sym,
                streams.len()
            )));
        }
        let group_centers = groups
            .iter()
            .map(|g| geometry.window_start + g.j_start + g.k_count / 2)
            .collect();
        Ok(Self {
            geometry,
            groups,
            streams,
            signals,
            sfn0: cells[0].sfn0,
            cond_limit,
            group_centers,
        })
    }

    pub fn streams(&self) -> &[StreamId] {
        &self.streams
    }

    pub fn groups(&self) -> &[ReGroup] {
        &self.groups
    }

    pub fn group_centers(&self) -> &[usize] {
        &self.group_centers
    }

    /// Subcarrier span `(first, last)` covered by group `g`.
    pub fn group_span(&self, g: usize) -> (usize, usize) {
        let grp = &self.groups[g];
        (
            self.geometry.window_start + grp.j_start,
            self.geometry.window_start + grp.j_start + grp.k_count - 1,
        )
    }

    /// Estimate all groups of capture frame `n`.
    pub fn estimate_frame(
        &self,
        frame: &FrameGrid,
        n: usize,
    ) -> Result<(Vec<Vec<Complex64>>, Vec<bool>), ReceiverError> {
        let n_streams = self.streams.len();
        let sfn = (self.sfn0 + (n % usize::from(SFN_PERIOD)) as u16) % SFN_PERIOD;
        let mut region = Vec::with_capacity(n_streams);
        for sig in &self.signals {
            for port_vals in sig.region_values(sfn, &self.geometry) {
                region.push(port_vals);
            }
        }
        let mut frame_est = Vec::with_capacity(self.groups.len());
        let mut frame_interp = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let m = g.size();
            let mut x = DMatrix::<Complex64>::zeros(m, n_streams);
            let mut y = DVector::<Complex64>::zeros(m);
            for (row_i, (s, j)) in g.index_set().enumerate() {
                y[row_i] = frame.get(0, 7 + s, self.geometry.window_start + j);
                for p in 0..n_streams {
                    x[(row_i, p)] = region[p][s * PBCH_SC + j];
                }
            }
            let xh = x.adjoint();
            let xhx = &xh * &x;
            let xhy = &xh * &y;
            let svd = xhx.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            // Singular values of X^H X are squares of X's.
            let ok = smin > 0.0 && (smax / smin).sqrt() <= self.cond_limit;
            if ok {
                let sol = svd
                    .solve(&xhy, 0.0)
                    .map_err(|e| ReceiverError::InvalidArgument(e.to_string()))?;
                frame_est.push(sol.iter().copied().collect::<Vec<Complex64>>());
                frame_interp.push(false);
            } else {
                frame_est.push(vec![Complex64::new(0.0, 0.0); n_streams]);
                frame_interp.push(true);
            }
        }
        bridge_groups(&self.groups, &mut frame_est, &frame_interp);
        Ok((frame_est, frame_interp))
    }
}

/// Joint least-squares over the broadcast region for every stream of the
/// discovered `cells`.
///
/// `k_sc * l_sym` REs per group must cover the total stream count. Groups
/// whose design matrix has a condition number above `cond_limit` are marked
/// and bridged by frequency interpolation within their symbol layer.
pub fn joint_ls_estimate(
    frames: &[FrameGrid],
    cells: &[CellInfo],
    k_sc: usize,
    l_sym: usize,
    cond_limit: f64,
) -> Result<JointEstimate, ReceiverError> {
    let n_sc = frames
        .first()
        .map(|f| f.n_sc())
        .ok_or_else(|| ReceiverError::InvalidArgument("empty capture".into()))?;
    let ctx = JointLsContext::new(n_sc, cells, k_sc, l_sym, cond_limit)?;
    let mut rows = Vec::with_capacity(frames.len());
    let mut interpolated = Vec::with_capacity(frames.len());
    for (n, frame) in frames.iter().enumerate() {
        let (est, interp) = ctx.estimate_frame(frame, n)?;
        rows.push(est);
        interpolated.push(interp);
    }
    Ok(JointEstimate {
        streams: ctx.streams.clone(),
        groups: ctx.groups.clone(),
        rows,
        interpolated,
        group_centers: ctx.group_centers.clone(),
        window_start: ctx.geometry.window_start,
    })
}

/// Fill flagged groups by linear interpolation over the frequency axis
/// within each symbol layer.
fn bridge_groups(groups: &[ReGroup], est: &mut [Vec<Complex64>], flagged: &[bool]) {
    if !flagged.iter().any(|&f| f) {
        return;
    }
    let n_streams = est.first().map_or(0, |e| e.len());
    let layers: Vec<usize> = {
        let mut l: Vec<usize> = groups.iter().map(|g| g.l_g).collect();
        l.dedup();
        l
    };
    for &layer in &layers {
        let idx: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].l_g == layer).collect();
        let valid: Vec<usize> = idx.iter().copied().filter(|&i| !flagged[i]).collect();
        if valid.is_empty() {
            continue; // nothing to anchor on; zeros stand
        }
        for &i in &idx {
            if !flagged[i] {
                continue;
            }
            let kg = groups[i].k_g as f64;
            // Nearest valid neighbours below and above in frequency.
            let below = valid
                .iter()
                .copied()
                .filter(|&v| groups[v].k_g < groups[i].k_g)
                .max_by_key(|&v| groups[v].k_g);
            let above = valid
                .iter()
                .copied()
                .filter(|&v| groups[v].k_g > groups[i].k_g)
                .min_by_key(|&v| groups[v].k_g);
            for s in 0..n_streams {
                est[i][s] = match (below, above) {
                    (Some(b), Some(a)) => {
                        let kb = groups[b].k_g as f64;
                        let ka = groups[a].k_g as f64;
                        let t = (kg - kb) / (ka - kb);
                        est[b][s] * (1.0 - t) + est[a][s] * t
                    }
                    (Some(b), None) => est[b][s],
                    (None, Some(a)) => est[a][s],
                    (None, None) => Complex64::new(0.0, 0.0),
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        synthesize_received, ChannelRealization, DopplerSpec, PathSpec, PhaseNoiseTrajectory,
        StreamChannel,
    };
    use crate::grid::SUBFRAMES_PER_FRAME;
    use crate::phy::{CellConfig, CellTransmitter, MibPayload};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_channel(gain: Complex64) -> StreamChannel {
        StreamChannel {
            paths: vec![PathSpec {
                delay_s: 0.0,
                gain,
                doppler: DopplerSpec::None,
            }],
        }
    }

    fn cell_info(pci: u16, sfn0: u16) -> CellInfo {
        CellInfo {
            identity: CellIdentity::from_pci(pci).unwrap(),
            n_ports: 1,
            mib: MibPayload::for_bandwidth_rb(72 / 12, sfn0).unwrap(),
            sfn0,
            rsrp_db: 0.0,
            sic_order: 0,
        }
    }

    fn four_cell_capture(
        n_frames: usize,
        gains: &[Complex64],
        noise: f64,
        duty: f64,
        seed: u64,
    ) -> (Vec<FrameGrid>, Vec<CellInfo>) {
        let pcis = [252u16, 249, 253, 256];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sfn0 = 16u16;
        let mib = MibPayload::for_bandwidth_rb(6, sfn0).unwrap();
        let txs: Vec<CellTransmitter> = pcis
            .iter()
            .map(|&pci| {
                CellTransmitter::new(
                    CellConfig {
                        identity: CellIdentity::from_pci(pci).unwrap(),
                        n_ports: 1,
                        tx_power_db: 0.0,
                        payload_duty: duty,
                    },
                    6,
                    mib,
                )
                .unwrap()
            })
            .collect();
        let chan = ChannelRealization::new(
            4,
            1,
            gains.iter().map(|&g| flat_channel(g)).collect(),
            vec![PhaseNoiseTrajectory::constant_zero(n_frames)],
            vec![0],
            noise,
            0.0,
        )
        .unwrap();
        let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
        let frames: Vec<FrameGrid> = (0..n_frames)
            .map(|n| {
                let sfn = sfn0 + n as u16;
                let grids: Vec<FrameGrid> = txs
                    .iter()
                    .flat_map(|tx| tx.frame(sfn, &all, &mut rng))
                    .collect();
                let refs: Vec<&FrameGrid> = grids.iter().collect();
                synthesize_received(&refs, &chan, 0, n, &all, &mut rng).unwrap()
            })
            .collect();
        let cells = pcis.iter().map(|&p| cell_info(p, sfn0)).collect();
        (frames, cells)
    }

    #[test]
    fn pilot_estimate_is_exact_without_interference() {
        let gains = [
            Complex64::new(0.8, -0.4),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let (frames, cells) = four_cell_capture(3, &gains, 0.0, 0.0, 1);
        let est = crs_ls_estimate(&frames, cells[0].identity, 0).unwrap();
        assert_eq!(est.subcarriers.len(), 12); // 2 per RB at 6 RB
        for row in &est.rows {
            for v in row {
                assert!((v - gains[0]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn twenty_mhz_grid_has_200_pilot_subcarriers() {
        let frames = vec![FrameGrid::zeroed(100 * SC_PER_RB).unwrap()];
        let est = crs_ls_estimate(&frames, CellIdentity::from_pci(252).unwrap(), 0).unwrap();
        assert_eq!(est.subcarriers.len(), 200);
        // Uniform spacing of 6 subcarriers.
        for pair in est.subcarriers.windows(2) {
            assert_eq!(pair[1] - pair[0], 6);
        }
    }

    #[test]
    fn pilot_estimate_floor_tracks_interference() {
        // Neighbour duty 1.0 at equal power: the estimate error floor
        // approaches the interference-to-signal ratio.
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.6, 0.5), // |g|^2 = 0.61
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let (frames, cells) = four_cell_capture(120, &gains, 0.0, 1.0, 2);
        let est = crs_ls_estimate(&frames, cells[0].identity, 0).unwrap();
        let mut err = 0.0;
        let mut count = 0;
        for row in &est.rows {
            for v in row {
                err += (v - gains[0]).norm_sqr();
                count += 1;
            }
        }
        let nmse = err / count as f64;
        // Interference folded into the estimate, halved by the two-symbol
        // average. Expect within a factor ~2 of the analytic level.
        let expected = 0.61 / 2.0;
        assert!(
            nmse > expected * 0.5 && nmse < expected * 2.0,
            "nmse {nmse}, expected about {expected}"
        );
    }

    #[test]
    fn scalar_joint_ls_reduces_to_quotient() {
        // One stream, K*L = 1 group size: the LS solution is y / x.
        let gains = [
            Complex64::new(0.3, 0.9),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let (frames, cells) = four_cell_capture(2, &gains, 0.0, 0.0, 3);
        let est = joint_ls_estimate(&frames, &cells[..1], 1, 1, 1e9).unwrap();
        // Groups covering reserved/idle REs get interpolated; those with a
        // pilot or broadcast RE are exact.
        for (n, frame) in est.rows.iter().enumerate() {
            for (g, grp) in frame.iter().enumerate() {
                if !est.interpolated[n][g] {
                    assert!((grp[0] - gains[0]).norm() < 1e-9, "frame {n} group {g}");
                }
            }
        }
    }

    #[test]
    fn four_streams_recovered_exactly_at_zero_noise() {
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(-0.35, 0.22),
            Complex64::new(0.4, 0.4),
            Complex64::new(0.05, -0.07),
        ];
        let (frames, cells) = four_cell_capture(8, &gains, 0.0, 1.0, 4);
        let est = joint_ls_estimate(&frames, &cells, 3, 4, 1e6).unwrap();
        assert_eq!(est.streams.len(), 4);
        assert_eq!(est.groups.len(), 24);
        for frame in &est.rows {
            for grp in frame {
                for (s, &g) in gains.iter().enumerate() {
                    let rel = (grp[s] - g).norm() / g.norm().max(1e-12);
                    assert!(rel < 1e-9, "stream {s}: {} vs {g}", grp[s]);
                }
            }
        }
    }

    #[test]
    fn overdetermination_improves_noisy_estimates() {
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.3),
            Complex64::new(-0.3, 0.45),
            Complex64::new(0.3, -0.2),
        ];
        let nmse_for = |k: usize, l: usize, seed: u64| -> f64 {
            let (frames, cells) = four_cell_capture(40, &gains, 0.1, 1.0, seed);
            let est = joint_ls_estimate(&frames, &cells, k, l, 1e6).unwrap();
            let mut err = 0.0;
            let mut count = 0;
            for (n, frame) in est.rows.iter().enumerate() {
                for (g, grp) in frame.iter().enumerate() {
                    if est.interpolated[n][g] {
                        continue;
                    }
                    err += (grp[0] - gains[0]).norm_sqr();
                    count += 1;
                }
            }
            err / count as f64 / gains[0].norm_sqr()
        };
        let tight = nmse_for(2, 2, 5); // K*L = 4 = N_s
        let loose = nmse_for(3, 4, 5); // K*L = 12
        assert!(
            loose < tight * 0.7,
            "overdetermined nmse {loose} not clearly below critical {tight}"
        );
    }

    #[test]
    fn estimate_immune_to_payload_duty() {
        let gains = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.5),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let nmse_at_duty = |duty_seed: (f64, u64)| -> f64 {
            let pcis = [252u16, 249];
            let mut rng = ChaCha8Rng::seed_from_u64(duty_seed.1);
            let sfn0 = 0u16;
            let mib = MibPayload::for_bandwidth_rb(6, sfn0).unwrap();
            let txs: Vec<CellTransmitter> = pcis
                .iter()
                .map(|&pci| {
                    CellTransmitter::new(
                        CellConfig {
                            identity: CellIdentity::from_pci(pci).unwrap(),
                            n_ports: 1,
                            tx_power_db: 0.0,
                            payload_duty: duty_seed.0,
                        },
                        6,
                        mib,
                    )
                    .unwrap()
                })
                .collect();
            let chan = ChannelRealization::new(
                2,
                1,
                vec![flat_channel(gains[0]), flat_channel(gains[1])],
                vec![PhaseNoiseTrajectory::constant_zero(60)],
                vec![0],
                0.01,
                0.0,
            )
            .unwrap();
            let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
            let frames: Vec<FrameGrid> = (0..60)
                .map(|n| {
                    let grids: Vec<FrameGrid> =
                        txs.iter().flat_map(|tx| tx.frame(n as u16, &all, &mut rng)).collect();
                    let refs: Vec<&FrameGrid> = grids.iter().collect();
                    synthesize_received(&refs, &chan, 0, n, &all, &mut rng).unwrap()
                })
                .collect();
            let cells: Vec<CellInfo> = pcis.iter().map(|&p| cell_info(p, sfn0)).collect();
            let est = joint_ls_estimate(&frames, &cells, 3, 4, 1e6).unwrap();
            let mut err = 0.0;
            let mut count = 0;
            for frame in &est.rows {
                for grp in frame {
                    err += (grp[0] - gains[0]).norm_sqr();
                    count += 1;
                }
            }
            err / count as f64
        };
        let quiet = nmse_at_duty((0.0, 7));
        let loud = nmse_at_duty((1.0, 8));
        let ratio_db = 10.0 * (loud / quiet).log10();
        assert!(
            ratio_db.abs() < 1.0,
            "joint estimate varies {ratio_db:.2} dB with duty"
        );
    }

    #[test]
    fn ls_solution_minimizes_group_residual() {
        // Optimality spot-check: the per-group solution's residual never
        // exceeds that of randomly perturbed candidates.
        let gains = [
            Complex64::new(0.9, -0.1),
            Complex64::new(-0.4, 0.3),
            Complex64::new(0.2, 0.6),
            Complex64::new(-0.1, -0.5),
        ];
        let (frames, cells) = four_cell_capture(2, &gains, 0.05, 1.0, 21);
        let ctx = JointLsContext::new(72, &cells, 3, 4, 1e6).unwrap();
        let (est, interp) = ctx.estimate_frame(&frames[0], 0).unwrap();
        let geometry = crate::receiver::known::RegionGeometry::for_grid(72);
        let signals: Vec<crate::receiver::known::CellSignals> = cells
            .iter()
            .map(|c| crate::receiver::known::CellSignals::new(c.identity, c.n_ports, c.mib).unwrap())
            .collect();
        let sfn = cells[0].sfn0;
        let region: Vec<Vec<Complex64>> = signals
            .iter()
            .flat_map(|s| s.region_values(sfn, &geometry))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (g, grp) in ctx.groups().iter().enumerate() {
            if interp[g] {
                continue;
            }
            let residual = |h: &[Complex64]| -> f64 {
                let mut acc = 0.0;
                for (s, j) in grp.index_set() {
                    let y = frames[0].get(0, 7 + s, geometry.window_start + j);
                    let mut model = Complex64::new(0.0, 0.0);
                    for (p, hp) in h.iter().enumerate() {
                        model += region[p][s * crate::phy::PBCH_SC + j] * hp;
                    }
                    acc += (y - model).norm_sqr();
                }
                acc
            };
            let base = residual(&est[g]);
            for _ in 0..8 {
                let perturbed: Vec<Complex64> = est[g]
                    .iter()
                    .map(|h| {
                        h + Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))
                    })
                    .collect();
                assert!(residual(&perturbed) >= base - 1e-12, "group {g}");
            }
        }
    }

    #[test]
    fn rsrp_tracks_configured_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gains = [
            Complex64::from_polar(1.0, rng.gen_range(0.0..6.0)),
            Complex64::from_polar(10f64.powf(-8.0 / 20.0), rng.gen_range(0.0..6.0)),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        // With neighbour traffic on, the measurement includes the folded
        // interference; the serving cell still lands within 1 dB.
        let (busy, cells) = four_cell_capture(100, &gains, 0.001, 0.25, 12);
        let r0 = measure_rsrp(&busy, cells[0].identity).unwrap();
        assert!(r0.abs() < 1.0, "serving rsrp {r0}");
        // The configured offset between two cells is read back from an
        // idle capture, where CRS-on-CRS collisions cannot occur.
        let (idle, _) = four_cell_capture(100, &gains, 0.001, 0.0, 13);
        let i0 = measure_rsrp(&idle, cells[0].identity).unwrap();
        let i1 = measure_rsrp(&idle, cells[1].identity).unwrap();
        assert!(
            ((i0 - i1) - 8.0).abs() < 0.5,
            "offset {} expected 8 dB",
            i0 - i1
        );
        // A silent capture reports the floor sentinel.
        let silent = vec![FrameGrid::zeroed(72).unwrap(); 3];
        let r = measure_rsrp(&silent, cells[3].identity).unwrap();
        assert_eq!(r, RSRP_FLOOR_DB);
    }
}
