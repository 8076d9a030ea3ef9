//! CSI conditioning: main-path extraction, phase-noise cancellation by CSI
//! ratio, band-pass isolation of the gesture Doppler band, sliding-window
//! Doppler spectrograms, peak tracks, and correlation-based subcarrier
//! selection for the interference-avoidance baseline.

use crate::channel::CSI_RATE_HZ;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum DspError {
    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series of {len} samples is shorter than the filter warm-up of {warmup}")]
    TooShort { len: usize, warmup: usize },
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Origin of a CSI series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiSource {
    Crs,
    Pbch,
}

/// One complex sample per frame (100 Hz).
#[derive(Debug, Clone)]
pub struct PathSeries {
    pub values: Vec<Complex64>,
    pub source: CsiSource,
}

impl PathSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Combine per-frame frequency-domain CSI into the dominant delay bin.
///
/// `rows[n][i]` is the estimate at frame `n` for frequency point `i`;
/// `positions[i]` gives each point's index on a uniform frequency lattice
/// (plain subcarrier or group indices). The inverse transform is evaluated
/// on the lattice's delay grid; the bin with the largest capture-average
/// magnitude is selected once and its per-frame complex value returned.
pub fn extract_main_path(
    rows: &[Vec<Complex64>],
    positions: &[usize],
    source: CsiSource,
) -> Result<PathSeries, DspError> {
    if rows.is_empty() || positions.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let k = positions.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(DspError::LengthMismatch(rows[0].len(), k));
    }
    let base = positions[0];
    let lattice: Vec<usize> = positions.iter().map(|&p| p - base).collect();
    let span = lattice.iter().copied().max().unwrap() + 1;
    let n_bins = span;
    // Steering vectors for each delay bin over the (possibly subsampled)
    // lattice; the transform reduces to a unitary IDFT for the full set.
    let mut transformed: Vec<Vec<Complex64>> = Vec::with_capacity(rows.len());
    let mut avg_power = vec![0.0f64; n_bins];
    for row in rows {
        let mut bins = Vec::with_capacity(n_bins);
        for d in 0..n_bins {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &m) in lattice.iter().enumerate() {
                let phase = 2.0 * PI * (m as f64) * (d as f64) / (n_bins as f64);
                acc += row[i] * Complex64::from_polar(1.0, phase);
            }
            acc /= k as f64;
            bins.push(acc);
        }
        for (p, b) in avg_power.iter_mut().zip(bins.iter()) {
            *p += b.norm_sqr();
        }
        transformed.push(bins);
    }
    let main_bin = avg_power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    Ok(PathSeries {
        values: transformed.into_iter().map(|b| b[main_bin]).collect(),
        source,
    })
}

/// Element-wise quotient cancelling the receiver-common phase rotation.
///
/// Samples where the reference magnitude falls below `epsilon` times its
/// median are bridged by linear interpolation from valid neighbours.
pub fn csi_ratio(series: &PathSeries, reference: &PathSeries, epsilon: f64) -> Result<PathSeries, DspError> {
    if series.len() != reference.len() {
        return Err(DspError::LengthMismatch(series.len(), reference.len()));
    }
    if series.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let mut mags: Vec<f64> = reference.values.iter().map(|v| v.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    let floor = epsilon * median.max(f64::MIN_POSITIVE);
    let mut out = Vec::with_capacity(series.len());
    let mut valid = Vec::with_capacity(series.len());
    for (a, b) in series.values.iter().zip(reference.values.iter()) {
        if b.norm() >= floor {
            out.push(a / b);
            valid.push(true);
        } else {
            out.push(Complex64::new(0.0, 0.0));
            valid.push(false);
        }
    }
    bridge_invalid(&mut out, &valid);
    Ok(PathSeries {
        values: out,
        source: series.source,
    })
}

fn bridge_invalid(values: &mut [Complex64], valid: &[bool]) {
    let n = values.len();
    let mut i = 0;
    while i < n {
        if valid[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && !valid[i] {
            i += 1;
        }
        let left = run_start.checked_sub(1);
        let right = if i < n { Some(i) } else { None };
        for j in run_start..i {
            values[j] = match (left, right) {
                (Some(l), Some(r)) => {
                    let t = (j - l) as f64 / (r - l) as f64;
                    values[l] * (1.0 - t) + values[r] * t
                }
                (Some(l), None) => values[l],
                (None, Some(r)) => values[r],
                (None, None) => Complex64::new(0.0, 0.0),
            };
        }
    }
}

// ---------------------------------------------------------------------------
// Band-pass filter
// ---------------------------------------------------------------------------

/// Second-order section with direct-form-II-transposed state.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn filter(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut s1 = Complex64::new(0.0, 0.0);
        let mut s2 = Complex64::new(0.0, 0.0);
        let mut y = Vec::with_capacity(x.len());
        for &v in x {
            let out = self.b[0] * v + s1;
            s1 = self.b[1] * v - self.a[0] * out + s2;
            s2 = self.b[2] * v - self.a[1] * out;
            y.push(out);
        }
        y
    }
}

/// Butterworth cascade (low- or high-pass) via bilinear transform.
fn butterworth_sections(order: usize, cutoff_hz: f64, fs: f64, highpass: bool) -> Vec<Biquad> {
    let warp = (PI * cutoff_hz / fs).tan();
    let mut sections = Vec::new();
    let pairs = order / 2;
    for k in 0..pairs {
        let theta = PI * (2.0 * k as f64 + order as f64 + 1.0) / (2.0 * order as f64);
        let zeta = -theta.cos();
        let d = warp * warp + 2.0 * zeta * warp + 1.0;
        let (b, a) = if highpass {
            (
                [1.0 / d, -2.0 / d, 1.0 / d],
                [2.0 * (warp * warp - 1.0) / d, (warp * warp - 2.0 * zeta * warp + 1.0) / d],
            )
        } else {
            (
                [warp * warp / d, 2.0 * warp * warp / d, warp * warp / d],
                [2.0 * (warp * warp - 1.0) / d, (warp * warp - 2.0 * zeta * warp + 1.0) / d],
            )
        };
        sections.push(Biquad { b, a });
    }
    if order % 2 == 1 {
        let d = warp + 1.0;
        let (b, a) = if highpass {
            ([1.0 / d, -1.0 / d, 0.0], [(warp - 1.0) / d, 0.0])
        } else {
            ([warp / d, warp / d, 0.0], [(warp - 1.0) / d, 0.0])
        };
        sections.push(Biquad { b, a });
    }
    sections
}

/// Forward-backward gesture-band filter (3-20 Hz at 100 Hz sampling).
///
/// High-pass: order 4 at 2.9 Hz; low-pass: order 12 at 21.8 Hz. Two passes
/// double the attenuation in dB and cancel the group delay, meeting the
/// >= 40 dB mask at 1 Hz and >= 25 dB at 25 Hz with ~1 dB droop at the
/// band edges.
pub fn bandpass_dynamic(series: &PathSeries) -> Result<PathSeries, DspError> {
    let warmup = filter_warmup();
    if series.len() < warmup + 2 {
        return Err(DspError::TooShort {
            len: series.len(),
            warmup: warmup + 2,
        });
    }
    let sections = gesture_band_sections();
    // Odd reflection padding keeps the forward-backward transients outside
    // the data span.
    let n = series.len();
    let mut padded = Vec::with_capacity(n + 2 * warmup);
    let first = series.values[0];
    let last = series.values[n - 1];
    for i in (1..=warmup).rev() {
        padded.push(2.0 * first - series.values[i]);
    }
    padded.extend_from_slice(&series.values);
    for i in 1..=warmup {
        padded.push(2.0 * last - series.values[n - 1 - i]);
    }
    let mut data = padded;
    for sec in &sections {
        data = sec.filter(&data);
    }
    data.reverse();
    for sec in &sections {
        data = sec.filter(&data);
    }
    data.reverse();
    Ok(PathSeries {
        values: data[warmup..warmup + n].to_vec(),
        source: series.source,
    })
}

fn gesture_band_sections() -> Vec<Biquad> {
    let mut s = butterworth_sections(4, 2.9, CSI_RATE_HZ, true);
    s.extend(butterworth_sections(12, 21.8, CSI_RATE_HZ, false));
    s
}

/// Samples of reflect padding required by [`bandpass_dynamic`].
pub fn filter_warmup() -> usize {
    3 * (4 + 12 + 1)
}

// ---------------------------------------------------------------------------
// Spectrogram and track
// ---------------------------------------------------------------------------

/// Doppler frequency grid: integer Hz from -50 to 50.
pub const DOPPLER_MIN_HZ: i32 = -50;
pub const DOPPLER_MAX_HZ: i32 = 50;

/// Sliding-window Doppler magnitudes on the 1 Hz grid.
#[derive(Debug, Clone)]
pub struct DopplerSpectrogram {
    /// `windows x 101` bin magnitudes.
    pub magnitudes: Vec<Vec<f64>>,
    /// Window-centre times, seconds.
    pub times_s: Vec<f64>,
    pub window_s: f64,
    pub step_s: f64,
}

impl DopplerSpectrogram {
    pub fn n_windows(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn freqs() -> impl Iterator<Item = i32> {
        DOPPLER_MIN_HZ..=DOPPLER_MAX_HZ
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), DspError> {
        let header: Vec<String> = Self::freqs().map(|f| f.to_string()).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.magnitudes {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Short-time DFT of the complex series evaluated on the integer-Hz grid.
///
/// The native resolution of a 0.1 s window is 10 Hz; the 1 Hz grid is a
/// denser evaluation of the same window (zero-padded DFT).
pub fn doppler_spectrogram(series: &PathSeries, window_s: f64, step_s: f64) -> Result<DopplerSpectrogram, DspError> {
    let wlen = (window_s * CSI_RATE_HZ).round() as usize;
    let step = (step_s * CSI_RATE_HZ).round().max(1.0) as usize;
    if series.len() < wlen || wlen == 0 {
        return Err(DspError::TooShort {
            len: series.len(),
            warmup: wlen,
        });
    }
    let n_windows = (series.len() - wlen) / step + 1;
    let mut magnitudes = Vec::with_capacity(n_windows);
    let mut times = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let start = w * step;
        let chunk = &series.values[start..start + wlen];
        let mut row = Vec::with_capacity(101);
        for f in DopplerSpectrogram::freqs() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &v) in chunk.iter().enumerate() {
                let phase = -2.0 * PI * f64::from(f) * (i as f64) / CSI_RATE_HZ;
                acc += v * Complex64::from_polar(1.0, phase);
            }
            row.push(acc.norm());
        }
        magnitudes.push(row);
        times.push((start as f64 + wlen as f64 / 2.0) / CSI_RATE_HZ);
    }
    Ok(DopplerSpectrogram {
        magnitudes,
        times_s: times,
        window_s,
        step_s: step as f64 / CSI_RATE_HZ,
    })
}

/// Dominant signed Doppler per window; zero where below the power threshold.
#[derive(Debug, Clone)]
pub struct DopplerTrack {
    pub f_hz: Vec<f64>,
    pub times_s: Vec<f64>,
    pub step_s: f64,
}

impl DopplerTrack {
    pub fn len(&self) -> usize {
        self.f_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f_hz.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<(), DspError> {
        writeln!(w, "time_s,f_hz")?;
        for (t, f) in self.times_s.iter().zip(self.f_hz.iter()) {
            writeln!(w, "{t:.3},{f}")?;
        }
        Ok(())
    }
}

/// Per-window argmax frequency gated by `power_threshold` (linear magnitude
/// squared).
pub fn peak_doppler_track(spec: &DopplerSpectrogram, power_threshold: f64) -> DopplerTrack {
    let mut f_hz = Vec::with_capacity(spec.n_windows());
    for row in &spec.magnitudes {
        let (idx, mag) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, m)| (i, *m))
            .unwrap_or((50, 0.0));
        if mag * mag >= power_threshold {
            f_hz.push(f64::from(DOPPLER_MIN_HZ + idx as i32));
        } else {
            f_hz.push(0.0);
        }
    }
    DopplerTrack {
        f_hz,
        times_s: spec.times_s.clone(),
        step_s: spec.step_s,
    }
}

/// Activity threshold: 6 dB above the off-activity spectral floor, but
/// never more than 12 dB below the capture's strongest window.
///
/// The floor is taken as the lower quartile of per-window peak powers,
/// which sits in the idle portion of a capture as long as the gesture
/// occupies less than three quarters of it. The peak-relative gate keeps
/// band-pass ringing and window leakage around strong motion segments from
/// registering as activity when the noise floor is very low; on idle
/// captures the peak gate falls below the floor gate and has no effect.
/// Both gates scale with the capture, so the track is invariant to positive
/// scaling of the series.
pub fn estimate_activity_threshold(spec: &DopplerSpectrogram) -> f64 {
    let mut peaks: Vec<f64> = spec
        .magnitudes
        .iter()
        .map(|row| {
            let m = row.iter().copied().fold(0.0f64, f64::max);
            m * m
        })
        .collect();
    if peaks.is_empty() {
        return f64::INFINITY;
    }
    let strongest = peaks.iter().copied().fold(0.0f64, f64::max);
    peaks.sort_by(f64::total_cmp);
    let floor = peaks[peaks.len() / 4];
    (floor * 10f64.powf(6.0 / 10.0)).max(strongest * 10f64.powf(-12.0 / 10.0))
}

// ---------------------------------------------------------------------------
// Subcarrier selection (interference-avoidance baseline)
// ---------------------------------------------------------------------------

/// Dynamic-time-warping distance and aligned-sample correlation between two
/// equal-length series, constrained to a Sakoe-Chiba band.
fn dtw_path_correlation(a: &[f64], b: &[f64], band: usize) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let w = band.max(1);
    let width = 2 * w + 1;
    let inf = f64::INFINITY;
    let mut cost = vec![inf; n * width];
    let mut from = vec![0u8; n * width]; // 0 diag, 1 up (i-1,j), 2 left (i,j-1)
    let col = |i: usize, j: usize| -> Option<usize> {
        let lo = i.saturating_sub(w);
        if j < lo || j > (i + w).min(n - 1) {
            None
        } else {
            Some(i * width + (j + w - i))
        }
    };
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(n - 1);
        for j in lo..=hi {
            let d = (a[i] - b[j]).abs();
            let idx = col(i, j).unwrap();
            if i == 0 && j == 0 {
                cost[idx] = d;
                continue;
            }
            let mut best = inf;
            let mut tag = 0u8;
            if i > 0 && j > 0 {
                if let Some(p) = col(i - 1, j - 1) {
                    if cost[p] < best {
                        best = cost[p];
                        tag = 0;
                    }
                }
            }
            if i > 0 {
                if let Some(p) = col(i - 1, j) {
                    if cost[p] < best {
                        best = cost[p];
                        tag = 1;
                    }
                }
            }
            if j > 0 {
                if let Some(p) = col(i, j - 1) {
                    if cost[p] < best {
                        best = cost[p];
                        tag = 2;
                    }
                }
            }
            cost[idx] = d + best;
            from[idx] = tag;
        }
    }
    // Trace the alignment path and correlate the aligned samples.
    let (mut i, mut j) = (n - 1, n - 1);
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(2 * n);
    loop {
        xs.push(a[i]);
        ys.push(b[j]);
        if i == 0 && j == 0 {
            break;
        }
        match from[col(i, j).unwrap()] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    pearson(&xs, &ys)
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn zscore(series: &[f64]) -> Option<Vec<f64>> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-24 * mean.abs().max(1e-300) {
        return None; // degenerate constant series
    }
    let sd = var.sqrt();
    Some(series.iter().map(|v| (v - mean) / sd).collect())
}

/// Sakoe-Chiba band width for the selection metric.
pub const DTW_BAND: usize = 10;

/// Pick the `count` subcarriers whose magnitude series correlate least with
/// the rest of the band after dynamic-time-warping alignment.
///
/// `series[k]` is the complex CSI of subcarrier `k` over the capture.
/// Returns ascending subcarrier indices; degenerate constant series are
/// excluded from the ranking (and from the result unless needed to reach
/// `count`). Ties break by index.
pub fn crs_subcarrier_select(series: &[Vec<Complex64>], count: usize) -> Vec<usize> {
    let total = series.len();
    if count >= total {
        return (0..total).collect();
    }
    // Magnitude series, decimated to bound the DTW cost on long captures.
    let len = series.first().map_or(0, |s| s.len());
    let decim = len.div_ceil(120).max(1);
    let mut normalized: Vec<Option<Vec<f64>>> = Vec::with_capacity(total);
    for s in series {
        let mags: Vec<f64> = s.iter().step_by(decim).map(|v| v.norm()).collect();
        normalized.push(zscore(&mags));
    }
    let usable: Vec<usize> = (0..total).filter(|&k| normalized[k].is_some()).collect();
    let mut aggregate = vec![0.0f64; total];
    for (pos, &i) in usable.iter().enumerate() {
        for &j in usable.iter().skip(pos + 1) {
            let c = dtw_path_correlation(
                normalized[i].as_ref().unwrap(),
                normalized[j].as_ref().unwrap(),
                DTW_BAND,
            );
            aggregate[i] += c;
            aggregate[j] += c;
        }
    }
    let mut order: Vec<usize> = usable.clone();
    order.sort_by(|&a, &b| aggregate[a].total_cmp(&aggregate[b]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order.into_iter().take(count).collect();
    if selected.len() < count {
        // Not enough usable subcarriers; fill with excluded ones by index.
        for k in 0..total {
            if selected.len() == count {
                break;
            }
            if normalized[k].is_none() {
                selected.push(k);
            }
        }
    }
    selected.sort_unstable();
    selected
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(f: f64, n: usize, amp: f64) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(amp, 2.0 * PI * f * i as f64 / CSI_RATE_HZ))
            .collect()
    }

    fn series(values: Vec<Complex64>) -> PathSeries {
        PathSeries {
            values,
            source: CsiSource::Pbch,
        }
    }

    // -- main path -----------------------------------------------------

    #[test]
    fn single_tap_identity() {
        // One frequency-flat tap: output equals the tap trajectory.
        let traj = tone(5.0, 50, 1.0);
        let rows: Vec<Vec<Complex64>> = traj.iter().map(|&v| vec![v; 24]).collect();
        let positions: Vec<usize> = (0..24).collect();
        let out = extract_main_path(&rows, &positions, CsiSource::Pbch).unwrap();
        for (a, b) in out.values.iter().zip(traj.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn stronger_tap_wins() {
        // Two taps 20 dB apart at distinct delays; the selected bin follows
        // the stronger one.
        let n = 40;
        let k = 24;
        let positions: Vec<usize> = (0..k).collect();
        let strong_delay = 3usize;
        let weak_delay = 9usize;
        let mut rows = Vec::new();
        for i in 0..n {
            let w = Complex64::from_polar(0.1, 0.3 * i as f64);
            let s = Complex64::from_polar(1.0, -0.1 * i as f64);
            let row: Vec<Complex64> = (0..k)
                .map(|m| {
                    s * Complex64::from_polar(1.0, -2.0 * PI * (m * strong_delay) as f64 / k as f64)
                        + w * Complex64::from_polar(1.0, -2.0 * PI * (m * weak_delay) as f64 / k as f64)
                })
                .collect();
            rows.push(row);
        }
        let out = extract_main_path(&rows, &positions, CsiSource::Pbch).unwrap();
        for (i, v) in out.values.iter().enumerate() {
            let expect = Complex64::from_polar(1.0, -0.1 * i as f64);
            assert!((v - expect).norm() < 0.15, "frame {i}: {v}");
        }
    }

    #[test]
    fn combining_gain_on_white_noise() {
        // SNR gain of the combined series vs a single subcarrier should be
        // at least half the ideal 10*log10(N) dB.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let k = 48;
        let positions: Vec<usize> = (0..k).collect();
        let sig = 1.0;
        let noise_p: f64 = 0.1;
        let mut rows = Vec::new();
        for _ in 0..n {
            let row: Vec<Complex64> = (0..k)
                .map(|_| {
                    Complex64::new(sig, 0.0)
                        + Complex64::new(
                            rng.gen_range(-1.0..1.0) * (1.5 * noise_p).sqrt(),
                            rng.gen_range(-1.0..1.0) * (1.5 * noise_p).sqrt(),
                        )
                })
                .collect();
            rows.push(row);
        }
        let out = extract_main_path(&rows, &positions, CsiSource::Crs).unwrap();
        let mean: Complex64 = out.values.iter().sum::<Complex64>() / n as f64;
        let var: f64 = out.values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / n as f64;
        let single_var = noise_p; // per-subcarrier noise power
        let gain_db = 10.0 * (single_var / var).log10();
        let min_gain = 10.0 * (k as f64).log10() / 2.0;
        assert!(gain_db >= min_gain, "gain {gain_db:.1} dB < {min_gain:.1} dB");
    }

    // -- csi ratio -------------------------------------------------------

    #[test]
    fn identical_inputs_give_unity() {
        let a = series(tone(7.0, 64, 2.0));
        let out = csi_ratio(&a, &a, 1e-6).unwrap();
        for v in out.values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn common_rotation_cancels_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = series(tone(9.0, 128, 1.0));
        let b = series(tone(-4.0, 128, 0.7));
        let base = csi_ratio(&a, &b, 1e-6).unwrap();
        let mut ra = a.clone();
        let mut rb = b.clone();
        for i in 0..128 {
            let rot = Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI));
            ra.values[i] *= rot;
            rb.values[i] *= rot;
        }
        let rotated = csi_ratio(&ra, &rb, 1e-6).unwrap();
        for (x, y) in base.values.iter().zip(rotated.values.iter()) {
            assert!((x - y).norm() / x.norm() < 1e-9);
        }
    }

    #[test]
    fn weak_reference_samples_are_bridged() {
        let mut num = tone(0.0, 9, 1.0);
        let mut den = tone(0.0, 9, 1.0);
        num[4] = Complex64::new(3.0, 0.0);
        den[4] = Complex64::new(1e-15, 0.0);
        let out = csi_ratio(&series(num), &series(den), 1e-6).unwrap();
        // Bridged from neighbours, both of which are 1.
        assert!((out.values[4] - Complex64::new(1.0, 0.0)).norm() < 1e-9);
    }

    // -- band-pass -------------------------------------------------------

    fn steady_state_gain_db(f: f64) -> f64 {
        let n = 1200;
        let input = series(tone(f, n, 1.0));
        let out = bandpass_dynamic(&input).unwrap();
        // Measure in the middle to avoid any residual edge effects.
        let mid = &out.values[n / 4..3 * n / 4];
        let power: f64 = mid.iter().map(|v| v.norm_sqr()).sum::<f64>() / mid.len() as f64;
        10.0 * power.log10()
    }

    #[test]
    fn dc_rejected() {
        let input = series(vec![Complex64::new(1.0, 0.5); 600]);
        let out = bandpass_dynamic(&input).unwrap();
        let power: f64 =
            out.values[100..500].iter().map(|v| v.norm_sqr()).sum::<f64>() / 400.0;
        assert!(10.0 * power.log10() < -40.0);
    }

    #[test]
    fn in_band_tone_passes() {
        let g10 = steady_state_gain_db(10.0);
        assert!(g10.abs() < 1.0, "10 Hz gain {g10} dB");
    }

    #[test]
    fn stopband_attenuations() {
        assert!(steady_state_gain_db(1.0) <= -40.0);
        assert!(steady_state_gain_db(-1.0) <= -40.0);
        assert!(steady_state_gain_db(25.0) <= -25.0);
        assert!(steady_state_gain_db(-25.0) <= -25.0);
        assert!(steady_state_gain_db(30.0) <= -25.0);
    }

    #[test]
    fn band_edges_within_two_db() {
        for f in [4.0, -4.0, 20.0, -20.0] {
            let g = steady_state_gain_db(f);
            assert!(g > -2.0 && g < 0.5, "{f} Hz gain {g} dB");
        }
    }

    #[test]
    fn short_series_rejected() {
        let input = series(tone(5.0, 10, 1.0));
        assert!(matches!(bandpass_dynamic(&input), Err(DspError::TooShort { .. })));
    }

    // -- spectrogram / track ----------------------------------------------

    #[test]
    fn tone_argmax_exact_over_band() {
        for f0 in 4..=20i32 {
            for sign in [1i32, -1] {
                let f = f0 * sign;
                let input = series(tone(f64::from(f), 200, 1.0));
                let spec = doppler_spectrogram(&input, 0.1, 0.05).unwrap();
                for row in &spec.magnitudes {
                    let idx = row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .unwrap()
                        .0;
                    assert_eq!(DOPPLER_MIN_HZ + idx as i32, f);
                }
            }
        }
    }

    #[test]
    fn silence_yields_zero_track() {
        let input = series(vec![Complex64::new(0.0, 0.0); 100]);
        let spec = doppler_spectrogram(&input, 0.1, 0.05).unwrap();
        let track = peak_doppler_track(&spec, 1e-12);
        assert!(track.f_hz.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn chirp_track_is_monotone() {
        // 5 -> 15 Hz linear chirp over 3 s.
        let n = 300;
        let mut phase = 0.0;
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            let f = 5.0 + 10.0 * i as f64 / n as f64;
            phase += 2.0 * PI * f / CSI_RATE_HZ;
            vals.push(Complex64::from_polar(1.0, phase));
        }
        let spec = doppler_spectrogram(&series(vals), 0.1, 0.05).unwrap();
        let track = peak_doppler_track(&spec, 1e-9);
        for pair in track.f_hz.windows(2) {
            assert!(pair[1] >= pair[0] - 1.0, "track dipped: {pair:?}");
        }
        assert!(track.f_hz[0] <= 7.0 && *track.f_hz.last().unwrap() >= 13.0);
    }

    #[test]
    fn conjugate_tone_mirrors() {
        let input = series(tone(15.0, 150, 1.0));
        let conj = series(input.values.iter().map(|v| v.conj()).collect());
        let spec = doppler_spectrogram(&conj, 0.1, 0.05).unwrap();
        let track = peak_doppler_track(&spec, 1e-9);
        assert!(track.f_hz.iter().all(|&f| (f + 15.0).abs() < 1e-9));
    }

    // -- subcarrier selection ---------------------------------------------

    #[test]
    fn identity_when_count_covers_all() {
        let s: Vec<Vec<Complex64>> = (0..8).map(|_| tone(2.0, 50, 1.0)).collect();
        assert_eq!(crs_subcarrier_select(&s, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(crs_subcarrier_select(&s, 12), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn common_mode_injection_is_rejected() {
        // Half the subcarriers share a strong common interference
        // trajectory; the selector must prefer the clean half.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 240;
        let total = 40;
        let dirty: Vec<usize> = (0..total).filter(|k| k % 2 == 0).collect();
        let common: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * 4.0).collect();
        let mut series = Vec::new();
        for k in 0..total {
            let mut vals = Vec::with_capacity(n);
            for i in 0..n {
                let mut mag = 1.0 + 0.02 * rng.gen_range(-1.0..1.0);
                if dirty.contains(&k) {
                    mag += common[i];
                }
                vals.push(Complex64::new(mag, 0.0));
            }
            series.push(vals);
        }
        let picked = crs_subcarrier_select(&series, total / 2);
        let clean_hits = picked.iter().filter(|k| *k % 2 == 1).count();
        assert!(
            clean_hits * 10 >= picked.len() * 8,
            "only {clean_hits}/{} clean",
            picked.len()
        );
    }

    #[test]
    fn constant_series_excluded_from_ranking() {
        let mut series: Vec<Vec<Complex64>> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Two constant (degenerate) series plus noisy ones.
        series.push(vec![Complex64::new(1.0, 0.0); 60]);
        series.push(vec![Complex64::new(2.0, 0.0); 60]);
        for _ in 0..6 {
            series.push(
                (0..60)
                    .map(|_| Complex64::new(1.0 + 0.3 * rng.gen_range(-1.0..1.0), 0.0))
                    .collect(),
            );
        }
        let picked = crs_subcarrier_select(&series, 4);
        assert_eq!(picked.len(), 4);
        assert!(!picked.contains(&0) && !picked.contains(&1));
    }
}
