//! End-to-end experiment orchestration: streaming capture synthesis, cell
//! discovery, per-method CSI acquisition, the sensing DSP chain, gesture
//! classification, and the Monte Carlo benchmark sweeps.
//!
//! Captures are synthesized frame by frame and fed straight into the
//! estimators, so memory stays flat regardless of capture length; only the
//! short discovery prefix is materialized. All randomness derives from the
//! scenario seed and the trial index, which keeps parallel trial execution
//! byte-reproducible.

use crate::channel::{
    synthesize_received, ChannelRealization, DopplerSpec, GestureScript, PathSpec,
    PhaseNoiseTrajectory, StreamChannel,
};
use crate::dsp::{
    bandpass_dynamic, crs_subcarrier_select, csi_ratio, doppler_spectrogram,
    estimate_activity_threshold, extract_main_path, peak_doppler_track, CsiSource, DopplerTrack,
    DspError,
};
use crate::exec;
use crate::gesture::{classify, evaluate, remove_outliers, GestureError, GestureLabel, RecognitionReport};
use crate::grid::{FrameGrid, GridError};
use crate::phy::{CellTransmitter, MibPayload, PhyError, SFN_PERIOD};
use crate::receiver::sic::{sic_cell_search, SicParams};
use crate::receiver::{crs_ls_estimate, estimate::JointLsContext, CellInfo, CsiSeries, ReceiverError};
use crate::scenario::{Method, Scenario, ScenarioError};
use crate::seed;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Gesture(#[from] GestureError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("discovery failed: {0}")]
    Discovery(String),
    #[error("configuration: {0}")]
    Config(String),
}

/// Scenario plus the per-cell transmitters, shared across trials.
pub struct SimWorld {
    pub scenario: Scenario,
    pub transmitters: Vec<CellTransmitter>,
    /// Flattened (cell-major, port-minor) stream index of the serving
    /// cell's first port.
    pub serving_stream: usize,
}

impl SimWorld {
    pub fn new(scenario: Scenario) -> Result<Self, PipelineError> {
        scenario.validate()?;
        let mib = MibPayload::for_bandwidth_rb(scenario.n_rb, 0)?;
        let transmitters = scenario
            .cell_configs()
            .into_iter()
            .map(|cfg| CellTransmitter::new(cfg, scenario.n_rb, mib))
            .collect::<Result<Vec<_>, _>>()?;
        let serving = scenario.serving_index();
        let serving_stream: usize = scenario.cells[..serving]
            .iter()
            .map(|c| usize::from(c.ports))
            .sum();
        Ok(Self {
            scenario,
            transmitters,
            serving_stream,
        })
    }

    pub fn n_sc(&self) -> usize {
        self.scenario.n_rb * crate::grid::SC_PER_RB
    }

    pub fn n_streams(&self) -> usize {
        self.transmitters.iter().map(|t| t.n_streams()).sum()
    }

    /// Transmit amplitude of the serving cell (linear).
    pub fn serving_amplitude(&self) -> f64 {
        self.scenario.cells[self.scenario.serving_index()].amplitude()
    }

    /// Gesture script for a trial of the given label.
    pub fn script(&self, label: GestureLabel) -> GestureScript {
        let g = &self.scenario.gesture;
        GestureScript {
            label,
            start_s: g.start_s,
            duration_s: g.duration_s,
            peak_doppler_hz: g.peak_doppler_hz,
            pause_s: g.pause_s,
        }
    }
}

/// Per-trial channel realization and RNG streams.
pub struct TrialSim {
    pub realization: ChannelRealization,
    pub sfn0: u16,
    payload_rngs: Vec<ChaCha8Rng>,
    noise_rngs: Vec<ChaCha8Rng>,
}

/// Build the multipath profile of one (stream, antenna) pair.
fn build_stream_channel<R: Rng>(
    spec: &crate::scenario::ChannelSpec,
    serving: bool,
    rng: &mut R,
) -> StreamChannel {
    use std::f64::consts::TAU;
    let taps = spec.static_taps;
    let mut paths = Vec::with_capacity(taps);
    for i in 0..taps {
        let (delay, power) = if i == 0 {
            (rng.gen_range(0.0..0.25e-6), 1.0)
        } else {
            let delay = rng.gen_range(0.3e-6..spec.max_delay_us.max(0.4) * 1e-6);
            let power = if serving {
                // The serving link is window-penetrated and main-path
                // dominated; echoes sit well below the direct component.
                10f64.powf(-(10.0 + 2.0 * (i - 1) as f64) / 10.0)
            } else {
                10f64.powf(-(spec.neighbor_tap_decay_db * i as f64) / 10.0)
            };
            (delay, power)
        };
        let phase = rng.gen_range(0.0..TAU);
        let mag = if i == 0 {
            1.0
        } else {
            // Rayleigh magnitude around the profile power.
            let u: f64 = rng.gen_range(1e-6..1.0f64);
            (-u.ln()).sqrt() * power.sqrt()
        };
        paths.push(PathSpec {
            delay_s: delay,
            gain: Complex64::from_polar(mag, phase),
            doppler: DopplerSpec::None,
        });
    }
    // Normalize to unit total power so received power equals the cell's
    // configured transmit power exactly.
    let total: f64 = paths.iter().map(|p| p.gain.norm_sqr()).sum();
    let scale = total.sqrt().recip();
    for p in paths.iter_mut() {
        p.gain *= scale;
    }
    StreamChannel { paths }
}

impl SimWorld {
    /// Deterministically instantiate trial `trial` with an optional gesture.
    pub fn trial(&self, trial: usize, script: Option<&GestureScript>) -> Result<TrialSim, PipelineError> {
        let s = &self.scenario;
        let root = s.seed;
        let t = trial as u64;
        let n_antennas = s.n_antennas();
        let n_streams = self.n_streams();
        let mut chan_rng = seed::rng(root, "channel", t);
        let serving = s.serving_index();

        let mut channels = Vec::with_capacity(n_streams * n_antennas);
        let mut stream_cells = Vec::with_capacity(n_streams);
        for (ci, cell) in s.cells.iter().enumerate() {
            for _ in 0..cell.ports {
                stream_cells.push(ci);
            }
        }
        let positions = s.antenna_positions();
        for &ci in &stream_cells {
            for a in 0..n_antennas {
                let mut ch = build_stream_channel(&s.channel, ci == serving, &mut chan_rng);
                if ci == serving {
                    if let Some(script) = script {
                        let jitter = s.channel.hand_gain_jitter_db * chan_rng.gen_range(-1.0..1.0f64);
                        let mag = 10f64.powf((s.channel.hand_gain_db + jitter) / 20.0);
                        let phase = chan_rng.gen_range(0.0..std::f64::consts::TAU);
                        let main_delay = ch.paths[0].delay_s;
                        ch.paths.push(PathSpec {
                            delay_s: main_delay + s.channel.hand_delay_offset_us * 1e-6,
                            gain: Complex64::from_polar(mag, phase),
                            doppler: DopplerSpec::Gesture {
                                script: *script,
                                side: positions[a],
                            },
                        });
                    }
                }
                channels.push(ch);
            }
        }
        let phase_noise = (0..s.receivers.positions)
            .map(|p| {
                let mut rng = seed::rng(root, "phase-noise", t * 64 + p as u64);
                PhaseNoiseTrajectory::generate(s.receivers.phase_noise_sigma, s.n_frames, &mut rng)
            })
            .collect();
        let realization = ChannelRealization::new(
            n_streams,
            n_antennas,
            channels,
            phase_noise,
            positions,
            s.noise_power(),
            s.cfo_hz,
        )?;
        let payload_rngs = (0..s.cells.len())
            .map(|c| seed::rng(root, "payload", t * 64 + c as u64))
            .collect();
        let noise_rngs = (0..n_antennas)
            .map(|a| seed::rng(root, "noise", t * 64 + a as u64))
            .collect();
        let sfn0 = (seed::derive(root, "sfn0", t) % u64::from(SFN_PERIOD)) as u16;
        Ok(TrialSim {
            realization,
            sfn0,
            payload_rngs,
            noise_rngs,
        })
    }
}

impl TrialSim {
    /// Synthesize received frame `n` for every antenna.
    pub fn frame(&mut self, world: &SimWorld, n: usize) -> Result<Vec<FrameGrid>, PipelineError> {
        let sfn = (self.sfn0 as usize + n) as u16 % SFN_PERIOD;
        let subframes = &world.scenario.synth_subframes;
        let mut tx_frames = Vec::with_capacity(world.n_streams());
        for (tx, rng) in world.transmitters.iter().zip(self.payload_rngs.iter_mut()) {
            tx_frames.extend(tx.frame(sfn, subframes, rng));
        }
        let refs: Vec<&FrameGrid> = tx_frames.iter().collect();
        let mut out = Vec::with_capacity(world.scenario.n_antennas());
        for (a, rng) in self.noise_rngs.iter_mut().enumerate() {
            out.push(synthesize_received(
                &refs,
                &self.realization,
                a,
                n,
                subframes,
                rng,
            )?);
        }
        Ok(out)
    }
}

/// Serving-cell CSI for one acquisition method across all antennas.
#[derive(Debug, Clone)]
pub struct MethodCsi {
    pub method: Method,
    /// Serving port-0 series per antenna.
    pub antennas: Vec<CsiSeries>,
    /// Serving port-1 series per antenna (present for a 2-port serving cell).
    pub port1: Option<Vec<CsiSeries>>,
}

/// Full capture output: discovered cells plus per-method CSI.
pub struct CaptureCsi {
    pub cells: Vec<CellInfo>,
    pub cfo_hz: f64,
    pub methods: Vec<MethodCsi>,
    /// Per-frame true serving channel rows per antenna (amplitude included),
    /// retained for benchmark error accounting.
    pub truth: Option<Vec<Vec<Vec<Complex64>>>>,
}

fn layer_average(
    est: &[Vec<Complex64>],
    ctx: &JointLsContext,
    stream: usize,
) -> Vec<Complex64> {
    let groups = ctx.groups();
    let per_layer = groups.iter().filter(|g| g.l_g == 0).count();
    let layers = groups.len() / per_layer;
    let mut out = vec![Complex64::new(0.0, 0.0); per_layer];
    for (g, grp) in groups.iter().enumerate() {
        out[grp.k_g] += est[g][stream];
    }
    for v in out.iter_mut() {
        *v /= layers as f64;
    }
    out
}

/// Options for capture processing.
#[derive(Debug, Clone, Copy)]
pub struct CaptureOptions {
    /// Record per-frame true serving channel rows (benchmarks).
    pub keep_truth: bool,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        Self { keep_truth: false }
    }
}

/// Synthesize one capture and acquire serving-cell CSI with each method.
pub fn run_capture(
    world: &SimWorld,
    trial: usize,
    script: Option<&GestureScript>,
    options: CaptureOptions,
) -> Result<CaptureCsi, PipelineError> {
    let s = &world.scenario;
    let mut sim = world.trial(trial, script)?;
    let n_antennas = s.n_antennas();
    let n_frames = s.n_frames;
    let discovery_len = s.estimators.decode_frames.max(10).min(n_frames);

    // Discovery prefix, materialized for all antennas.
    let mut prefix: Vec<Vec<FrameGrid>> = Vec::with_capacity(discovery_len);
    for n in 0..discovery_len {
        prefix.push(sim.frame(world, n)?);
    }
    let antenna0: Vec<FrameGrid> = prefix.iter().map(|b| b[0].clone()).collect();
    let sic_params = SicParams {
        k_sc: s.estimators.k_sc,
        l_sym: s.estimators.l_sym,
        cond_limit: s.estimators.cond_limit,
        decode_frames: s.estimators.decode_frames,
        ..SicParams::default()
    };
    let mut outcome = sic_cell_search(&antenna0, &sic_params)?;
    // Sub-Hz estimates are measurement noise; "compensating" them would
    // only smear a slow rotation over the capture that the ratio stage
    // cancels anyway (residual CFO rides with the phase-noise term).
    if outcome.cfo_hz.abs() < 1.0 {
        outcome.cfo_hz = 0.0;
    }
    let serving_pci = s.cells[s.serving_index()].pci;
    let serving_cell = outcome
        .cells
        .iter()
        .position(|c| c.identity.pci() == serving_pci)
        .ok_or_else(|| PipelineError::Discovery(format!("serving cell {serving_pci} not found")))?;
    let cells = outcome.cells.clone();
    let serving_identity = cells[serving_cell].identity;
    let serving_ports = cells[serving_cell].n_ports;
    // Discovered-stream index of the serving cell's ports.
    let joint_serving: usize = cells[..serving_cell].iter().map(|c| usize::from(c.n_ports)).sum();

    let want_pbch = s.estimators.methods.contains(&Method::Pbch);
    let want_crs = s
        .estimators
        .methods
        .iter()
        .any(|m| matches!(m, Method::Crs | Method::CrsSs));
    let joint_ctx = if want_pbch {
        Some(JointLsContext::new(
            world.n_sc(),
            &cells,
            s.estimators.k_sc,
            s.estimators.l_sym,
            s.estimators.cond_limit,
        )?)
    } else {
        None
    };

    // Row accumulators.
    let mut pbch_rows: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); n_antennas]; // [ant][frame][k_g]
    let mut pbch_rows_p1: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); n_antennas];
    let mut crs_rows: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); n_antennas];
    let mut crs_rows_p1: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); n_antennas];
    let mut crs_lattice: Vec<usize> = Vec::new();
    let mut crs_subcarriers: Vec<usize> = Vec::new();
    let mut truth: Option<Vec<Vec<Vec<Complex64>>>> = options.keep_truth.then(|| vec![Vec::new(); n_antennas]);
    let serving_amp = world.serving_amplitude();

    for n in 0..n_frames {
        let mut batch = if n < discovery_len {
            std::mem::take(&mut prefix[n])
        } else {
            sim.frame(world, n)?
        };
        if outcome.cfo_hz != 0.0 {
            for frame in batch.iter_mut() {
                compensate_frame(std::slice::from_mut(frame), n, outcome.cfo_hz);
            }
        }
        for (a, frame) in batch.iter().enumerate() {
            if let Some(ctx) = &joint_ctx {
                let (est, _interp) = ctx.estimate_frame(frame, n)?;
                pbch_rows[a].push(layer_average(&est, ctx, joint_serving));
                if serving_ports == 2 {
                    pbch_rows_p1[a].push(layer_average(&est, ctx, joint_serving + 1));
                }
            }
            if want_crs {
                let series = crs_ls_estimate(std::slice::from_ref(frame), serving_identity, 0)?;
                if crs_lattice.is_empty() {
                    crs_lattice = series.lattice.clone();
                    crs_subcarriers = series.subcarriers.clone();
                }
                crs_rows[a].push(series.rows.into_iter().next().unwrap());
                if serving_ports == 2 {
                    let p1 = crs_ls_estimate(std::slice::from_ref(frame), serving_identity, 1)?;
                    crs_rows_p1[a].push(p1.rows.into_iter().next().unwrap());
                }
            }
            if let Some(t) = truth.as_mut() {
                let mut row = sim
                    .realization
                    .evaluate_row(world.serving_stream, a, world.n_sc(), n);
                for v in row.iter_mut() {
                    *v *= serving_amp;
                }
                t[a].push(row);
            }
        }
    }

    let mut methods = Vec::new();
    for &method in &s.estimators.methods {
        match method {
            Method::Pbch => {
                let ctx = joint_ctx.as_ref().expect("context built for pbch");
                let per_layer = ctx.groups().iter().filter(|g| g.l_g == 0).count();
                let lattice: Vec<usize> = (0..per_layer).collect();
                let subcarriers: Vec<usize> = ctx.group_centers()[..per_layer].to_vec();
                let build = |rows: &Vec<Vec<Vec<Complex64>>>| -> Vec<CsiSeries> {
                    rows.iter()
                        .map(|r| CsiSeries {
                            source: CsiSource::Pbch,
                            lattice: lattice.clone(),
                            subcarriers: subcarriers.clone(),
                            rows: r.clone(),
                        })
                        .collect()
                };
                methods.push(MethodCsi {
                    method,
                    antennas: build(&pbch_rows),
                    port1: (serving_ports == 2).then(|| build(&pbch_rows_p1)),
                });
            }
            Method::Crs | Method::CrsSs => {
                let build = |rows: &Vec<Vec<Vec<Complex64>>>| -> Vec<CsiSeries> {
                    rows.iter()
                        .map(|r| CsiSeries {
                            source: CsiSource::Crs,
                            lattice: crs_lattice.clone(),
                            subcarriers: crs_subcarriers.clone(),
                            rows: r.clone(),
                        })
                        .collect()
                };
                methods.push(MethodCsi {
                    method,
                    antennas: build(&crs_rows),
                    port1: (serving_ports == 2).then(|| build(&crs_rows_p1)),
                });
            }
        }
    }
    Ok(CaptureCsi {
        cells,
        cfo_hz: outcome.cfo_hz,
        methods,
        truth,
    })
}

fn compensate_frame(frames: &mut [FrameGrid], frame_index: usize, cfo_hz: f64) {
    // compensate_cfo rotates by absolute frame index; shift via a one-frame
    // view at the right index.
    use crate::channel::symbol_time_s;
    use std::f64::consts::PI;
    for frame in frames.iter_mut() {
        for sf in 0..crate::grid::SUBFRAMES_PER_FRAME {
            for sym in 0..crate::grid::SYMBOLS_PER_SUBFRAME {
                let rot =
                    Complex64::from_polar(1.0, -2.0 * PI * cfo_hz * symbol_time_s(frame_index, sf, sym));
                for v in frame.symbol_mut(sf, sym) {
                    *v *= rot;
                }
            }
        }
    }
}

/// Sensing DSP parameters shared by the pipeline stages.
#[derive(Debug, Clone, Copy)]
pub struct SenseParams {
    pub window_s: f64,
    pub step_s: f64,
    pub crs_ss_count: usize,
    pub ratio_epsilon: f64,
}

impl SenseParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            window_s: s.classifier.window_s,
            step_s: s.classifier.step_s,
            crs_ss_count: s.estimators.crs_ss_count,
            ratio_epsilon: 1e-3,
        }
    }
}

/// Turn one method's capture CSI into a Doppler track per receiver position.
pub fn sense_tracks(
    csi: &MethodCsi,
    antennas_per_position: usize,
    positions: usize,
    params: &SenseParams,
) -> Result<Vec<DopplerTrack>, PipelineError> {
    let mut tracks = Vec::with_capacity(positions);
    for p in 0..positions {
        let a0 = p * antennas_per_position;
        let (num, den) = match &csi.port1 {
            Some(p1) => (csi.antennas[a0].clone(), p1[a0].clone()),
            None => {
                if antennas_per_position < 2 {
                    return Err(PipelineError::Config(
                        "CSI ratio needs a second antenna or a second serving port".into(),
                    ));
                }
                (csi.antennas[a0].clone(), csi.antennas[a0 + 1].clone())
            }
        };
        let (num, den) = if csi.method == Method::CrsSs {
            let columns: Vec<Vec<Complex64>> = (0..num.n_points()).map(|i| num.column(i)).collect();
            let keep = crs_subcarrier_select(&columns, params.crs_ss_count);
            (num.select_columns(&keep), den.select_columns(&keep))
        } else {
            (num, den)
        };
        let source = if csi.method == Method::Pbch {
            CsiSource::Pbch
        } else {
            CsiSource::Crs
        };
        let num_path = extract_main_path(&num.rows, &num.lattice, source)?;
        let den_path = extract_main_path(&den.rows, &den.lattice, source)?;
        let ratio = csi_ratio(&num_path, &den_path, params.ratio_epsilon)?;
        let dynamic = bandpass_dynamic(&ratio)?;
        let spec = doppler_spectrogram(&dynamic, params.window_s, params.step_s)?;
        let threshold = estimate_activity_threshold(&spec);
        let track = peak_doppler_track(&spec, threshold);
        tracks.push(remove_outliers(&track));
    }
    Ok(tracks)
}

/// One gesture trial: per-method predicted labels.
pub fn run_trial(
    world: &SimWorld,
    trial: usize,
    label: GestureLabel,
) -> Result<Vec<(Method, GestureLabel)>, PipelineError> {
    let script = world.script(label);
    script.validate()?;
    let params = SenseParams::from_scenario(&world.scenario);
    let s = &world.scenario;
    if s.receivers.positions != 2 {
        return Err(PipelineError::Config(
            "gesture classification needs exactly two receiver positions".into(),
        ));
    }
    let capture = run_capture(world, trial, Some(&script), CaptureOptions::default())?;
    let mut out = Vec::with_capacity(capture.methods.len());
    for csi in &capture.methods {
        let tracks = sense_tracks(csi, s.receivers.antennas_per_position, 2, &params)?;
        let predicted = classify(&tracks[0], &tracks[1], &s.classifier.params())?;
        out.push((csi.method, predicted));
    }
    Ok(out)
}

/// Per-method recognition outcome over the full trial schedule.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub methods: Vec<MethodReport>,
    pub trials: usize,
    /// Trials where discovery or DSP failed; predictions count as `none`.
    pub failed_trials: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    pub report: RecognitionReport,
}

/// Run the full gesture-recognition comparison: `trials_per_gesture` trials
/// of each label, every method evaluated on identical captures.
pub fn run_pipeline(world: &SimWorld) -> Result<PipelineReport, PipelineError> {
    let labels: Vec<GestureLabel> = GestureLabel::GESTURES.to_vec();
    let n_trials = labels.len() * world.scenario.trials_per_gesture;
    let methods = world.scenario.estimators.methods.clone();
    let outcomes = exec::map_indexed(n_trials, |t| {
        let label = labels[t % labels.len()];
        (label, run_trial(world, t, label))
    });
    let mut failed = 0usize;
    let mut truths = Vec::with_capacity(n_trials);
    let mut predictions: Vec<Vec<GestureLabel>> = vec![Vec::with_capacity(n_trials); methods.len()];
    for (label, outcome) in outcomes {
        truths.push(label);
        match outcome {
            Ok(per_method) => {
                for (m, &(method, predicted)) in per_method.iter().enumerate() {
                    debug_assert_eq!(method, methods[m]);
                    predictions[m].push(predicted);
                }
            }
            Err(_) => {
                failed += 1;
                for preds in predictions.iter_mut() {
                    preds.push(GestureLabel::None);
                }
            }
        }
    }
    let mut reports = Vec::with_capacity(methods.len());
    for (m, method) in methods.iter().enumerate() {
        reports.push(MethodReport {
            method: method.as_str().to_string(),
            report: evaluate(&predictions[m], &truths)?,
        });
    }
    Ok(PipelineReport {
        methods: reports,
        trials: n_trials,
        failed_trials: failed,
    })
}

// ---------------------------------------------------------------------------
// Benchmark sweeps
// ---------------------------------------------------------------------------

/// Swept scenario parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Neighbour payload duty.
    Duty,
    /// Serving-to-total-interference ratio, dB.
    Sir,
    /// Signal-to-noise ratio, dB.
    Snr,
    /// RE-group size K*L.
    Kl,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Duty => "duty",
            SweepAxis::Sir => "sir_db",
            SweepAxis::Snr => "snr_db",
            SweepAxis::Kl => "kl",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "duty" => Ok(SweepAxis::Duty),
            "sir" | "sir_db" => Ok(SweepAxis::Sir),
            "snr" | "snr_db" => Ok(SweepAxis::Snr),
            "kl" => Ok(SweepAxis::Kl),
            other => Err(format!("unknown sweep axis '{other}' (duty, sir, snr, kl)")),
        }
    }
}

/// Apply one sweep value to a scenario copy.
pub fn apply_axis(scenario: &mut Scenario, axis: SweepAxis, value: f64) -> Result<(), PipelineError> {
    match axis {
        SweepAxis::Duty => {
            if !(0.0..=1.0).contains(&value) {
                return Err(PipelineError::Config(format!("duty {value} outside [0, 1]")));
            }
            let serving = scenario.serving_index();
            for (i, c) in scenario.cells.iter_mut().enumerate() {
                if i != serving {
                    c.payload_duty = value;
                }
            }
        }
        SweepAxis::Sir => {
            let serving = scenario.serving_index();
            let serving_db = scenario.cells[serving].power_db;
            let current: f64 = scenario
                .cells
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != serving)
                .map(|(_, c)| 10f64.powf(c.power_db / 10.0))
                .sum();
            if current <= 0.0 {
                return Err(PipelineError::Config("no interfering cells to scale".into()));
            }
            let target = 10f64.powf((serving_db - value) / 10.0);
            let shift_db = 10.0 * (target / current).log10();
            for (i, c) in scenario.cells.iter_mut().enumerate() {
                if i != serving {
                    c.power_db += shift_db;
                }
            }
        }
        SweepAxis::Snr => {
            scenario.noise_power_db = -value;
        }
        SweepAxis::Kl => {
            let kl = value.round() as usize;
            let (k, l) = kl_tiling(kl).ok_or_else(|| {
                PipelineError::Config(format!("K*L = {kl} does not tile the 72 x 4 region"))
            })?;
            scenario.estimators.k_sc = k;
            scenario.estimators.l_sym = l;
        }
    }
    scenario.validate()?;
    Ok(())
}

/// Pick a rectangular tiling with the requested area.
pub fn kl_tiling(kl: usize) -> Option<(usize, usize)> {
    for l in [4usize, 2, 1] {
        if kl % l == 0 {
            let k = kl / l;
            if k > 0 && crate::phy::PBCH_SC % k == 0 {
                return Some((k, l));
            }
        }
    }
    None
}

/// One benchmark record (CSV row).
#[derive(Debug, Clone, Serialize)]
pub struct BenchRecord {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub method: String,
    pub metric: String,
    pub metric_value: f64,
}

/// Serving-stream NMSE (dB) of each method on one capture.
pub fn run_nmse_trial(world: &SimWorld, trial: usize) -> Result<Vec<(Method, f64)>, PipelineError> {
    let capture = run_capture(
        world,
        trial,
        None,
        CaptureOptions { keep_truth: true },
    )?;
    let truth = capture.truth.as_ref().expect("requested truth");
    let mut out = Vec::new();
    for csi in &capture.methods {
        if csi.method == Method::CrsSs {
            continue; // selection is a sensing-stage refinement, same raw CSI
        }
        let mut err = 0.0;
        let mut pow = 0.0;
        // Antenna 0 carries the benchmark statistics.
        let series = &csi.antennas[0];
        let t = &truth[0];
        for (n, row) in series.rows.iter().enumerate() {
            for (i, est) in row.iter().enumerate() {
                let reference = if csi.method == Method::Pbch {
                    // Group truth: average over the group's subcarriers.
                    let per_layer = series.lattice.len();
                    let k_count = crate::phy::PBCH_SC / per_layer;
                    let start = series.subcarriers[i] - k_count / 2;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..k_count {
                        acc += t[n][start + j];
                    }
                    acc / k_count as f64
                } else {
                    t[n][series.subcarriers[i]]
                };
                err += (est - reference).norm_sqr();
                pow += reference.norm_sqr();
            }
        }
        out.push((csi.method, 10.0 * (err / pow).log10()));
    }
    Ok(out)
}

/// NMSE sweep: `seeds` Monte Carlo captures per axis value.
pub fn run_nmse_bench(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    seeds: usize,
) -> Result<Vec<BenchRecord>, PipelineError> {
    let mut jobs = Vec::new();
    for &v in values {
        for s in 0..seeds {
            jobs.push((v, s));
        }
    }
    let results = exec::map_slice(&jobs, |&(value, trial)| -> Result<Vec<BenchRecord>, String> {
        let mut scenario = base.clone();
        apply_axis(&mut scenario, axis, value).map_err(|e| e.to_string())?;
        let world = SimWorld::new(scenario).map_err(|e| e.to_string())?;
        let nmse = run_nmse_trial(&world, trial).map_err(|e| e.to_string())?;
        Ok(nmse
            .into_iter()
            .map(|(method, db)| BenchRecord {
                axis: axis.as_str().to_string(),
                value,
                seed: trial as u64,
                method: method.as_str().to_string(),
                metric: "nmse_db".to_string(),
                metric_value: db,
            })
            .collect())
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r.map_err(PipelineError::Config)?);
    }
    Ok(records)
}

/// Accuracy sweep: the full gesture pipeline per axis value.
pub fn run_accuracy_bench(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<BenchRecord>, PipelineError> {
    let mut records = Vec::new();
    for &value in values {
        let mut scenario = base.clone();
        apply_axis(&mut scenario, axis, value)?;
        let world = SimWorld::new(scenario)?;
        let report = run_pipeline(&world)?;
        for m in &report.methods {
            records.push(BenchRecord {
                axis: axis.as_str().to_string(),
                value,
                seed: base.seed,
                method: m.method.clone(),
                metric: "accuracy".to_string(),
                metric_value: m.report.accuracy,
            });
        }
    }
    Ok(records)
}

/// Write benchmark records as CSV.
pub fn write_bench_csv<W: std::io::Write>(records: &[BenchRecord], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "axis,value,seed,method,metric,metric_value")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{:.6}",
            r.axis, r.value, r.seed, r.method, r.metric, r.metric_value
        )?;
    }
    Ok(())
}

/// Write a CSI series as CSV: `frame_index,group_k,group_l,stream,re,im`.
pub fn write_csi_csv<W: std::io::Write>(
    series: &CsiSeries,
    stream: usize,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(w, "frame_index,group_k,group_l,stream,re,im")?;
    for (n, row) in series.rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            writeln!(
                w,
                "{},{},0,{},{:.9e},{:.9e}",
                n, series.lattice[i], stream, v.re, v.im
            )?;
        }
    }
    Ok(())
}

/// Parse a CSI CSV back into a series (single stream).
pub fn read_csi_csv<R: std::io::BufRead>(
    r: R,
    stream: usize,
    source: CsiSource,
) -> Result<CsiSeries, PipelineError> {
    let mut rows: Vec<Vec<(usize, Complex64)>> = Vec::new();
    let mut lattice_set = std::collections::BTreeSet::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Config(format!("read: {e}")))?;
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(PipelineError::Config(format!(
                "line {}: expected 6 fields, got {}",
                ln + 1,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64, PipelineError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| PipelineError::Config(format!("line {}: bad {what}: {e}", ln + 1)))
        };
        let frame = parse(fields[0], "frame_index")? as usize;
        let group_k = parse(fields[1], "group_k")? as usize;
        let st = parse(fields[3], "stream")? as usize;
        if st != stream {
            continue;
        }
        let re = parse(fields[4], "re")?;
        let im = parse(fields[5], "im")?;
        while rows.len() <= frame {
            rows.push(Vec::new());
        }
        rows[frame].push((group_k, Complex64::new(re, im)));
        lattice_set.insert(group_k);
    }
    let lattice: Vec<usize> = lattice_set.into_iter().collect();
    let mut out_rows = Vec::with_capacity(rows.len());
    for (n, mut row) in rows.into_iter().enumerate() {
        row.sort_by_key(|(k, _)| *k);
        if row.len() != lattice.len() {
            return Err(PipelineError::Config(format!(
                "frame {n}: {} points, expected {}",
                row.len(),
                lattice.len()
            )));
        }
        out_rows.push(row.into_iter().map(|(_, v)| v).collect());
    }
    Ok(CsiSeries {
        source,
        subcarriers: lattice.clone(),
        lattice,
        rows: out_rows,
    })
}

/// Discovery report: one JSON object per line, `{pci, ports, sfn, rsrp_db}`.
pub fn write_discovery_jsonl<W: std::io::Write>(cells: &[CellInfo], w: &mut W) -> std::io::Result<()> {
    for c in cells {
        let obj = serde_json::json!({
            "pci": c.identity.pci(),
            "ports": c.n_ports,
            "sfn": c.sfn0,
            "rsrp_db": c.rsrp_db,
        });
        writeln!(w, "{obj}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::example_scenario;

    fn tiny_scenario() -> Scenario {
        let mut s = example_scenario();
        s.n_rb = 6;
        s.n_frames = 30;
        s.trials_per_gesture = 1;
        s.cells.truncate(2);
        s.cells[1].power_db = -6.0;
        s
    }

    #[test]
    fn capture_produces_all_methods() {
        let world = SimWorld::new(tiny_scenario()).unwrap();
        let capture = run_capture(&world, 0, None, CaptureOptions::default()).unwrap();
        assert_eq!(capture.methods.len(), 3);
        assert!(capture.cells.iter().any(|c| c.identity.pci() == 252));
        for m in &capture.methods {
            assert_eq!(m.antennas.len(), 4);
            for s in &m.antennas {
                assert_eq!(s.n_frames(), 30);
            }
        }
    }

    #[test]
    fn captures_are_reproducible() {
        let world = SimWorld::new(tiny_scenario()).unwrap();
        let a = run_capture(&world, 3, None, CaptureOptions::default()).unwrap();
        let b = run_capture(&world, 3, None, CaptureOptions::default()).unwrap();
        for (ma, mb) in a.methods.iter().zip(b.methods.iter()) {
            for (sa, sb) in ma.antennas.iter().zip(mb.antennas.iter()) {
                assert_eq!(sa.rows, sb.rows);
            }
        }
        // Distinct trials differ.
        let c = run_capture(&world, 4, None, CaptureOptions::default()).unwrap();
        assert_ne!(a.methods[0].antennas[0].rows, c.methods[0].antennas[0].rows);
    }

    #[test]
    fn kl_tilings() {
        assert_eq!(kl_tiling(12), Some((3, 4)));
        assert_eq!(kl_tiling(4), Some((1, 4)));
        assert_eq!(kl_tiling(6), Some((3, 2)));
        assert_eq!(kl_tiling(24), Some((6, 4)));
        assert_eq!(kl_tiling(5), None);
    }

    #[test]
    fn axis_application() {
        let mut s = example_scenario();
        apply_axis(&mut s, SweepAxis::Duty, 0.25).unwrap();
        assert!(s
            .cells
            .iter()
            .enumerate()
            .all(|(i, c)| i == 0 || (c.payload_duty - 0.25).abs() < 1e-12));
        apply_axis(&mut s, SweepAxis::Sir, 5.0).unwrap();
        let total: f64 = s.cells[1..]
            .iter()
            .map(|c| 10f64.powf(c.power_db / 10.0))
            .sum();
        assert!((10.0 * total.log10() - (-5.0)).abs() < 1e-9);
        apply_axis(&mut s, SweepAxis::Snr, 15.0).unwrap();
        assert_eq!(s.noise_power_db, -15.0);
        apply_axis(&mut s, SweepAxis::Kl, 8.0).unwrap();
        assert_eq!((s.estimators.k_sc, s.estimators.l_sym), (2, 4));
    }

    #[test]
    fn csi_csv_roundtrip() {
        let world = SimWorld::new(tiny_scenario()).unwrap();
        let capture = run_capture(&world, 0, None, CaptureOptions::default()).unwrap();
        let series = &capture.methods[0].antennas[0];
        let mut buf = Vec::new();
        write_csi_csv(series, 0, &mut buf).unwrap();
        let back = read_csi_csv(std::io::BufReader::new(buf.as_slice()), 0, series.source).unwrap();
        assert_eq!(back.n_frames(), series.n_frames());
        assert_eq!(back.lattice, series.lattice);
        for (ra, rb) in series.rows.iter().zip(back.rows.iter()) {
            for (a, b) in ra.iter().zip(rb.iter()) {
                assert!((a - b).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn single_trial_classifies_cleanly() {
        // A quiet scenario (no interference traffic) should classify a push
        // correctly with every method.
        let mut s = tiny_scenario();
        s.n_rb = 6;
        s.n_frames = 240;
        for c in s.cells.iter_mut() {
            c.payload_duty = 0.0;
        }
        let world = SimWorld::new(s).unwrap();
        let preds = run_trial(&world, 0, GestureLabel::Push).unwrap();
        for (method, label) in preds {
            assert_eq!(label, GestureLabel::Push, "method {method:?}");
        }
    }
}
