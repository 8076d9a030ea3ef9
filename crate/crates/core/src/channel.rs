//! Time-variant multipath channels, gesture-driven Doppler trajectories and
//! multi-cell received-grid synthesis.
//!
//! Each (transmit stream, receive antenna) pair has a set of static taps and
//! at most one dynamic path whose Doppler trajectory is either a constant
//! shift or a gesture script component. All streams arriving at one receiver
//! position share a common Wiener phase-noise rotation; the receive chain
//! additionally applies a deterministic carrier-frequency-offset phase ramp
//! over symbol time. Channels evolve at frame granularity (10 ms), matching
//! the 100 Hz CSI sample clock.

use crate::gesture::GestureLabel;
use crate::grid::{FrameGrid, GridError, SYMBOLS_PER_SUBFRAME};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Subcarrier spacing, Hz.
pub const SUBCARRIER_SPACING_HZ: f64 = 15_000.0;
/// Frame duration, seconds (one CSI sample).
pub const FRAME_S: f64 = 0.01;
/// CSI sample rate implied by per-frame estimation.
pub const CSI_RATE_HZ: f64 = 100.0;
/// Raised-cosine onset/offset duration for gesture segments.
pub const GESTURE_RAMP_S: f64 = 0.1;
/// Largest tap delay the cyclic prefix budget admits.
pub const MAX_DELAY_S: f64 = 4.7e-6;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid gesture script: {0}")]
    BadScript(String),
    #[error("invalid path: {0}")]
    BadPath(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("stream/antenna index out of range")]
    IndexOutOfRange,
}

/// Scripted gesture: label, timing and peak Doppler magnitude.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GestureScript {
    pub label: GestureLabel,
    pub start_s: f64,
    pub duration_s: f64,
    /// Peak Doppler magnitude, in (3, 20] Hz.
    pub peak_doppler_hz: f64,
    /// Mid-gesture pause for the two-segment gestures.
    pub pause_s: f64,
}

impl GestureScript {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.label == GestureLabel::None {
            return Err(ChannelError::BadScript("label must be a gesture".into()));
        }
        if !(self.peak_doppler_hz > 3.0 && self.peak_doppler_hz <= 20.0) {
            return Err(ChannelError::BadScript(format!(
                "peak Doppler {} Hz outside (3, 20]",
                self.peak_doppler_hz
            )));
        }
        if self.duration_s <= 0.0 || self.start_s < 0.0 {
            return Err(ChannelError::BadScript("non-positive timing".into()));
        }
        if self.label.is_two_segment() {
            let seg = (self.duration_s - self.pause_s) / 2.0;
            if self.pause_s <= 0.0 || seg < 2.0 * GESTURE_RAMP_S {
                return Err(ChannelError::BadScript(
                    "two-segment gesture needs a positive pause and room for ramps".into(),
                ));
            }
        } else if self.duration_s < 2.0 * GESTURE_RAMP_S {
            return Err(ChannelError::BadScript("gesture shorter than its ramps".into()));
        }
        Ok(())
    }

    /// Sign pattern (R1, R2) of the gesture's Doppler per segment.
    ///
    /// Geometry convention (fixed by the simulated room layout): R1 is on
    /// the user's left, R2 on the right. Motion toward a receiver produces
    /// positive Doppler there. The two-segment gestures repeat the stroke
    /// direction of the corresponding slide: v1 leftward, v2 rightward.
    fn segment_signs(&self) -> (f64, f64) {
        match self.label {
            GestureLabel::Push => (1.0, 1.0),
            GestureLabel::Pull => (-1.0, -1.0),
            GestureLabel::SlideLeft | GestureLabel::V1 => (1.0, -1.0),
            GestureLabel::SlideRight | GestureLabel::V2 => (-1.0, 1.0),
            GestureLabel::None => (0.0, 0.0),
        }
    }

    /// Active segments as (start, end) pairs.
    fn segments(&self) -> Vec<(f64, f64)> {
        if self.label.is_two_segment() {
            let seg = (self.duration_s - self.pause_s) / 2.0;
            vec![
                (self.start_s, self.start_s + seg),
                (self.start_s + seg + self.pause_s, self.start_s + self.duration_s),
            ]
        } else {
            vec![(self.start_s, self.start_s + self.duration_s)]
        }
    }

    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// Raised-cosine envelope on [a, b] with ramp `r`, evaluated at `t`.
fn envelope(t: f64, a: f64, b: f64, peak: f64, r: f64) -> f64 {
    if t <= a || t >= b {
        return 0.0;
    }
    if t < a + r {
        0.5 * peak * (1.0 - ((t - a) * PI / r).cos())
    } else if t > b - r {
        0.5 * peak * (1.0 - ((b - t) * PI / r).cos())
    } else {
        peak
    }
}

/// Integral of [`envelope`] from `a` to `t` (closed form).
fn envelope_integral(t: f64, a: f64, b: f64, peak: f64, r: f64) -> f64 {
    if t <= a {
        return 0.0;
    }
    let t = t.min(b);
    let up_full = 0.5 * peak * r;
    let flat_full = peak * (b - a - 2.0 * r);
    if t < a + r {
        0.5 * peak * ((t - a) - (r / PI) * ((t - a) * PI / r).sin())
    } else if t <= b - r {
        up_full + peak * (t - (a + r))
    } else {
        up_full + flat_full + 0.5 * peak * ((t - (b - r)) + (r / PI) * ((b - t) * PI / r).sin())
    }
}

/// Instantaneous Doppler pair `(f_r1, f_r2)` in Hz at time `t`.
pub fn gesture_doppler_profile(script: &GestureScript, t: f64) -> (f64, f64) {
    let (s1, s2) = script.segment_signs();
    let mut env = 0.0;
    for (a, b) in script.segments() {
        env += envelope(t, a, b, script.peak_doppler_hz, GESTURE_RAMP_S);
    }
    (s1 * env, s2 * env)
}

/// Integrated Doppler phase (cycles) for receiver component `side` up to `t`.
pub fn gesture_phase_cycles(script: &GestureScript, side: usize, t: f64) -> f64 {
    let (s1, s2) = script.segment_signs();
    let sign = if side == 0 { s1 } else { s2 };
    let mut cycles = 0.0;
    for (a, b) in script.segments() {
        cycles += envelope_integral(t, a, b, script.peak_doppler_hz, GESTURE_RAMP_S);
    }
    sign * cycles
}

/// Doppler behaviour of one propagation path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum DopplerSpec {
    /// Static path.
    None,
    /// Constant Doppler shift in Hz.
    Constant(f64),
    /// Gesture-script trajectory; `side` selects the receiver component.
    Gesture { script: GestureScript, side: usize },
}

/// One propagation path: delay, complex gain, Doppler behaviour.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathSpec {
    pub delay_s: f64,
    pub gain: Complex64,
    pub doppler: DopplerSpec,
}

impl PathSpec {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(0.0..=MAX_DELAY_S).contains(&self.delay_s) {
            return Err(ChannelError::BadPath(format!(
                "delay {} s outside CP budget",
                self.delay_s
            )));
        }
        if self.gain.norm() <= 0.0 {
            return Err(ChannelError::BadPath("zero path gain".into()));
        }
        Ok(())
    }

    fn phase_cycles_at(&self, t: f64) -> f64 {
        match self.doppler {
            DopplerSpec::None => 0.0,
            DopplerSpec::Constant(f) => f * t,
            DopplerSpec::Gesture { ref script, side } => gesture_phase_cycles(script, side, t),
        }
    }
}

/// All paths from one transmit stream to one receive antenna.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StreamChannel {
    pub paths: Vec<PathSpec>,
}

impl StreamChannel {
    /// Frequency response at subcarrier `k` and frame `n` (excluding the
    /// receiver-common phase noise).
    pub fn response(&self, k: usize, frame: usize) -> Complex64 {
        let t = frame as f64 * FRAME_S;
        let fk = k as f64 * SUBCARRIER_SPACING_HZ;
        let mut h = Complex64::new(0.0, 0.0);
        for p in &self.paths {
            let delay_phase = -2.0 * PI * fk * p.delay_s;
            let doppler_phase = 2.0 * PI * p.phase_cycles_at(t);
            h += p.gain * Complex64::from_polar(1.0, delay_phase + doppler_phase);
        }
        h
    }

    /// Response over all `n_sc` subcarriers for one frame.
    pub fn response_row(&self, n_sc: usize, frame: usize) -> Vec<Complex64> {
        let t = frame as f64 * FRAME_S;
        let mut row = vec![Complex64::new(0.0, 0.0); n_sc];
        for p in &self.paths {
            let doppler = Complex64::from_polar(1.0, 2.0 * PI * p.phase_cycles_at(t));
            let step = Complex64::from_polar(1.0, -2.0 * PI * SUBCARRIER_SPACING_HZ * p.delay_s);
            let mut rot = p.gain * doppler;
            for v in row.iter_mut() {
                *v += rot;
                rot *= step;
            }
        }
        row
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }
}

/// Wiener phase-noise trajectory, one rotation per frame, shared by every
/// stream arriving at one receiver position.
#[derive(Debug, Clone)]
pub struct PhaseNoiseTrajectory {
    theta: Vec<f64>,
}

impl PhaseNoiseTrajectory {
    pub fn generate<R: Rng>(sigma_rad: f64, n_frames: usize, rng: &mut R) -> Self {
        let mut theta = Vec::with_capacity(n_frames);
        let mut acc = 0.0;
        for _ in 0..n_frames {
            theta.push(acc);
            let step: f64 = rng.sample(StandardNormal);
            acc += sigma_rad * step;
        }
        Self { theta }
    }

    pub fn constant_zero(n_frames: usize) -> Self {
        Self {
            theta: vec![0.0; n_frames],
        }
    }

    #[inline]
    pub fn rotation(&self, frame: usize) -> Complex64 {
        Complex64::from_polar(1.0, -self.theta[frame])
    }
}

/// Complete channel realization: per-(stream, antenna) paths, per-position
/// phase noise, receiver CFO and AWGN level.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    n_streams: usize,
    n_antennas: usize,
    /// `[stream * n_antennas + antenna]`
    channels: Vec<StreamChannel>,
    /// Phase-noise trajectory per receiver position.
    phase_noise: Vec<PhaseNoiseTrajectory>,
    /// Receiver position of each antenna.
    antenna_position: Vec<usize>,
    pub awgn_power: f64,
    pub cfo_hz: f64,
}

impl ChannelRealization {
    pub fn new(
        n_streams: usize,
        n_antennas: usize,
        channels: Vec<StreamChannel>,
        phase_noise: Vec<PhaseNoiseTrajectory>,
        antenna_position: Vec<usize>,
        awgn_power: f64,
        cfo_hz: f64,
    ) -> Result<Self, ChannelError> {
        if channels.len() != n_streams * n_antennas || antenna_position.len() != n_antennas {
            return Err(ChannelError::IndexOutOfRange);
        }
        if antenna_position
            .iter()
            .any(|&p| p >= phase_noise.len())
        {
            return Err(ChannelError::IndexOutOfRange);
        }
        Ok(Self {
            n_streams,
            n_antennas,
            channels,
            phase_noise,
            antenna_position,
            awgn_power,
            cfo_hz,
        })
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn stream_channel(&self, stream: usize, antenna: usize) -> &StreamChannel {
        &self.channels[stream * self.n_antennas + antenna]
    }

    /// Full channel value including the receiver-common phase-noise rotation.
    pub fn evaluate(&self, stream: usize, antenna: usize, k: usize, frame: usize) -> Complex64 {
        let pn = self.phase_noise[self.antenna_position[antenna]].rotation(frame);
        self.stream_channel(stream, antenna).response(k, frame) * pn
    }

    /// Per-subcarrier channel row for one frame, phase noise included.
    pub fn evaluate_row(&self, stream: usize, antenna: usize, n_sc: usize, frame: usize) -> Vec<Complex64> {
        let pn = self.phase_noise[self.antenna_position[antenna]].rotation(frame);
        let mut row = self.stream_channel(stream, antenna).response_row(n_sc, frame);
        for v in row.iter_mut() {
            *v *= pn;
        }
        row
    }

    /// CFO phase rotation at subframe `sf`, symbol `sym` of frame `frame`.
    #[inline]
    pub fn cfo_rotation(&self, frame: usize, sf: usize, sym: usize) -> Complex64 {
        if self.cfo_hz == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let t = symbol_time_s(frame, sf, sym);
        Complex64::from_polar(1.0, 2.0 * PI * self.cfo_hz * t)
    }
}

/// Nominal start time of a symbol on the simulation's symbol grid (no CP
/// modelling: 14 equal symbols per 1 ms subframe).
#[inline]
pub fn symbol_time_s(frame: usize, sf: usize, sym: usize) -> f64 {
    (frame as f64 * 10.0 + sf as f64 + sym as f64 / SYMBOLS_PER_SUBFRAME as f64) * 1e-3
}

/// Superimpose per-stream transmit frames through the channel onto one
/// receive antenna's frame: `y = cfo * sum_p x_p h_p + w`, restricted to
/// `subframes`.
pub fn synthesize_received<R: Rng>(
    tx_frames: &[&FrameGrid],
    realization: &ChannelRealization,
    antenna: usize,
    frame: usize,
    subframes: &[usize],
    rng: &mut R,
) -> Result<FrameGrid, ChannelError> {
    if tx_frames.len() != realization.n_streams() {
        return Err(ChannelError::IndexOutOfRange);
    }
    let n_sc = tx_frames
        .first()
        .map(|f| f.n_sc())
        .ok_or(ChannelError::IndexOutOfRange)?;
    if tx_frames.iter().any(|f| f.n_sc() != n_sc) {
        return Err(ChannelError::Grid(GridError::DimensionMismatch(
            "transmit grids differ in width".into(),
        )));
    }
    let mut out = FrameGrid::zeroed(n_sc)?;
    let rows: Vec<Vec<Complex64>> = (0..tx_frames.len())
        .map(|p| realization.evaluate_row(p, antenna, n_sc, frame))
        .collect();
    let noise_sigma = (realization.awgn_power / 2.0).sqrt();
    for &sf in subframes {
        for sym in 0..SYMBOLS_PER_SUBFRAME {
            let cfo = realization.cfo_rotation(frame, sf, sym);
            let dst = out.symbol_mut(sf, sym);
            for (p, tx) in tx_frames.iter().enumerate() {
                let src = tx.symbol(sf, sym);
                let h = &rows[p];
                for k in 0..n_sc {
                    dst[k] += src[k] * h[k];
                }
            }
            for v in dst.iter_mut() {
                *v *= cfo;
                if noise_sigma > 0.0 {
                    let wr: f64 = rng.sample(StandardNormal);
                    let wi: f64 = rng.sample(StandardNormal);
                    *v += Complex64::new(wr * noise_sigma, wi * noise_sigma);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SUBFRAMES_PER_FRAME;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn script(label: GestureLabel) -> GestureScript {
        GestureScript {
            label,
            start_s: 0.5,
            duration_s: 1.2,
            peak_doppler_hz: 12.0,
            pause_s: 0.3,
        }
    }

    #[test]
    fn push_is_positive_at_both_receivers() {
        let s = script(GestureLabel::Push);
        let (f1, f2) = gesture_doppler_profile(&s, 1.1);
        assert!(f1 > 0.0 && f2 > 0.0);
        assert!((f1 - 12.0).abs() < 1e-9 && (f2 - 12.0).abs() < 1e-9);
    }

    #[test]
    fn profile_zero_outside_span() {
        for label in GestureLabel::GESTURES {
            let s = script(label);
            assert_eq!(gesture_doppler_profile(&s, 0.2), (0.0, 0.0));
            assert_eq!(gesture_doppler_profile(&s, 2.0), (0.0, 0.0));
        }
    }

    #[test]
    fn two_segment_gesture_pauses_in_the_middle() {
        let s = script(GestureLabel::V1);
        let mid = s.start_s + s.duration_s / 2.0;
        assert_eq!(gesture_doppler_profile(&s, mid), (0.0, 0.0));
        // Both segments exceed 3 Hz somewhere: scan a dense grid.
        let seg = (s.duration_s - s.pause_s) / 2.0;
        let mut seen = [false, false];
        for i in 0..2000 {
            let t = s.start_s + s.duration_s * i as f64 / 2000.0;
            let (f1, _) = gesture_doppler_profile(&s, t);
            if f1.abs() > 3.0 {
                if t < s.start_s + seg {
                    seen[0] = true;
                } else if t > s.start_s + seg + s.pause_s {
                    seen[1] = true;
                }
            }
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn profile_bounded_by_twenty_hz() {
        for label in GestureLabel::GESTURES {
            let mut s = script(label);
            s.peak_doppler_hz = 20.0;
            for i in 0..4000 {
                let t = i as f64 * 1e-3;
                let (f1, f2) = gesture_doppler_profile(&s, t);
                assert!(f1.abs() <= 20.0 + 1e-9 && f2.abs() <= 20.0 + 1e-9);
            }
        }
    }

    #[test]
    fn phase_integral_matches_numeric_quadrature() {
        let s = script(GestureLabel::V2);
        let dt = 1e-4;
        let mut acc = 0.0;
        let mut worst: f64 = 0.0;
        for i in 0..30_000 {
            let t = i as f64 * dt;
            let (f1, _) = gesture_doppler_profile(&s, t + dt / 2.0);
            acc += f1 * dt;
            let closed = gesture_phase_cycles(&s, 0, t + dt);
            worst = worst.max((closed - acc).abs());
        }
        assert!(worst < 1e-3, "integral drift {worst}");
    }

    #[test]
    fn static_channel_is_time_invariant_and_flat_at_zero_delay() {
        let ch = StreamChannel {
            paths: vec![PathSpec {
                delay_s: 0.0,
                gain: Complex64::new(0.6, -0.3),
                doppler: DopplerSpec::None,
            }],
        };
        let h00 = ch.response(0, 0);
        for (k, n) in [(0usize, 5usize), (17, 0), (40, 99)] {
            let h = ch.response(k, n);
            assert!((h - h00).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_doppler_peaks_at_injected_frequency() {
        let f0 = 14.0;
        let ch = StreamChannel {
            paths: vec![PathSpec {
                delay_s: 0.2e-6,
                gain: Complex64::new(1.0, 0.0),
                doppler: DopplerSpec::Constant(f0),
            }],
        };
        let n = 400;
        let series: Vec<Complex64> = (0..n).map(|i| ch.response(10, i)).collect();
        // DFT on a 0.5 Hz grid.
        let mut best = (0.0f64, 0.0f64);
        let mut f = -50.0;
        while f <= 50.0 {
            let sum: Complex64 = series
                .iter()
                .enumerate()
                .map(|(i, v)| v * Complex64::from_polar(1.0, -2.0 * PI * f * i as f64 * FRAME_S))
                .sum();
            if sum.norm() > best.1 {
                best = (f, sum.norm());
            }
            f += 0.5;
        }
        assert!((best.0 - f0).abs() <= 0.5, "peak at {}", best.0);
    }

    #[test]
    fn response_row_matches_pointwise_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = StreamChannel {
            paths: (0..4)
                .map(|i| PathSpec {
                    delay_s: i as f64 * 0.4e-6,
                    gain: Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                    doppler: if i == 0 {
                        DopplerSpec::Constant(7.0)
                    } else {
                        DopplerSpec::None
                    },
                })
                .collect(),
        };
        let row = ch.response_row(72, 13);
        for k in [0usize, 1, 35, 71] {
            assert!((row[k] - ch.response(k, 13)).norm() < 1e-9);
        }
    }

    fn identity_realization(n_frames: usize) -> ChannelRealization {
        ChannelRealization::new(
            1,
            1,
            vec![StreamChannel {
                paths: vec![PathSpec {
                    delay_s: 0.0,
                    gain: Complex64::new(1.0, 0.0),
                    doppler: DopplerSpec::None,
                }],
            }],
            vec![PhaseNoiseTrajectory::constant_zero(n_frames)],
            vec![0],
            0.0,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn identity_channel_passes_grid_through() {
        let mut tx = FrameGrid::zeroed(72).unwrap();
        tx.set(0, 7, 10, Complex64::new(0.3, 0.7));
        tx.set(5, 13, 40, Complex64::new(-1.0, 0.2));
        let real = identity_realization(1);
        let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rx = synthesize_received(&[&tx], &real, 0, 0, &all, &mut rng).unwrap();
        assert_eq!(rx, tx);
    }

    #[test]
    fn phase_noise_is_common_and_unit_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pn = PhaseNoiseTrajectory::generate(0.05, 50, &mut rng);
        for n in 0..50 {
            assert!((pn.rotation(n).norm() - 1.0).abs() < 1e-12);
        }
        // |h| invariant under the rotation.
        let ch = StreamChannel {
            paths: vec![PathSpec {
                delay_s: 0.1e-6,
                gain: Complex64::new(0.4, 0.9),
                doppler: DopplerSpec::None,
            }],
        };
        for n in [0usize, 10, 49] {
            let bare = ch.response(3, n).norm();
            let rotated = (ch.response(3, n) * pn.rotation(n)).norm();
            assert!((bare - rotated).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_accounting_over_occupied_res() {
        // Two unit-power streams plus noise: received power on an RE where
        // both transmit should match the sum of per-stream powers + noise
        // within Monte Carlo tolerance.
        let n_frames = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mk = |gain: f64| StreamChannel {
            paths: vec![PathSpec {
                delay_s: 0.3e-6,
                gain: Complex64::from_polar(gain, 1.2),
                doppler: DopplerSpec::None,
            }],
        };
        let real = ChannelRealization::new(
            2,
            1,
            vec![mk(1.0), mk(0.5)],
            vec![PhaseNoiseTrajectory::constant_zero(n_frames)],
            vec![0],
            0.01,
            0.0,
        )
        .unwrap();
        let mut tx0 = FrameGrid::zeroed(72).unwrap();
        let mut tx1 = FrameGrid::zeroed(72).unwrap();
        let mut measured = 0.0;
        let mut count = 0usize;
        for n in 0..n_frames {
            for k in 0..72 {
                let q0 = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
                let q1 = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
                tx0.set(0, 0, k, q0);
                tx1.set(0, 0, k, q1);
            }
            let rx = synthesize_received(&[&tx0, &tx1], &real, 0, n, &[0], &mut rng).unwrap();
            for k in 0..72 {
                measured += rx.get(0, 0, k).norm_sqr();
                count += 1;
            }
        }
        let mean = measured / count as f64;
        let expected = 1.0 + 0.25 + 0.01;
        // 3 sigma of the sample mean of an exponential-ish variable.
        let tol = 3.0 * expected / (count as f64).sqrt() * 2.0;
        assert!(
            (mean - expected).abs() < tol,
            "mean {mean} vs expected {expected}"
        );
    }

    #[test]
    fn zero_power_second_cell_matches_single_cell() {
        let real2 = ChannelRealization::new(
            2,
            1,
            vec![
                StreamChannel {
                    paths: vec![PathSpec {
                        delay_s: 0.0,
                        gain: Complex64::new(1.0, 0.0),
                        doppler: DopplerSpec::None,
                    }],
                },
                StreamChannel {
                    paths: vec![PathSpec {
                        delay_s: 0.0,
                        gain: Complex64::new(1.0, 0.0),
                        doppler: DopplerSpec::None,
                    }],
                },
            ],
            vec![PhaseNoiseTrajectory::constant_zero(1)],
            vec![0],
            0.0,
            0.0,
        )
        .unwrap();
        let mut tx0 = FrameGrid::zeroed(72).unwrap();
        tx0.set(0, 3, 5, Complex64::new(0.8, 0.1));
        let tx1 = FrameGrid::zeroed(72).unwrap(); // zero-power cell sends nothing
        let all: Vec<usize> = (0..SUBFRAMES_PER_FRAME).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rx = synthesize_received(&[&tx0, &tx1], &real2, 0, 0, &all, &mut rng).unwrap();
        assert_eq!(rx, tx0);
    }

    #[test]
    fn mismatched_grid_widths_rejected() {
        let real = identity_realization(1);
        let tx = FrameGrid::zeroed(72).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // realization expects 1 stream, give 2
        let res = synthesize_received(&[&tx, &tx], &real, 0, 0, &[0], &mut rng);
        assert!(res.is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let real = identity_realization(1);
        let tx = FrameGrid::zeroed(72).unwrap();
        let a = synthesize_received(
            &[&tx],
            &ChannelRealization {
                awgn_power: 0.1,
                ..real.clone()
            },
            0,
            0,
            &[0, 1],
            &mut ChaCha8Rng::seed_from_u64(42),
        )
        .unwrap();
        let b = synthesize_received(
            &[&tx],
            &ChannelRealization {
                awgn_power: 0.1,
                ..real
            },
            0,
            0,
            &[0, 1],
            &mut ChaCha8Rng::seed_from_u64(42),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
