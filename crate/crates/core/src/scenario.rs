//! Scenario configuration: the declarative description of one experiment
//! (cells, channel statistics, receivers, gesture schedule, estimator and
//! classifier settings), its validation rules, and deterministic seed
//! derivation for every random quantity in a run.

use crate::gesture::ClassifierParams;
use crate::phy::{CellConfig, CellIdentity, MIB_BANDWIDTHS_RB};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSpec {
    pub pci: u16,
    #[serde(default = "default_ports")]
    pub ports: u8,
    #[serde(default)]
    pub power_db: f64,
    #[serde(default)]
    pub payload_duty: f64,
    #[serde(default)]
    pub serving: bool,
}

fn default_ports() -> u8 {
    1
}

impl CellSpec {
    pub fn amplitude(&self) -> f64 {
        10f64.powf(self.power_db / 20.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReceiverSpec {
    /// Receiver positions (each with its own oscillator).
    #[serde(default = "default_positions")]
    pub positions: usize,
    /// Antennas per position; two enable the CSI-ratio reference.
    #[serde(default = "default_antennas")]
    pub antennas_per_position: usize,
    /// Wiener phase-noise step per frame, radians.
    #[serde(default = "default_phase_noise")]
    pub phase_noise_sigma: f64,
}

fn default_positions() -> usize {
    2
}
fn default_antennas() -> usize {
    2
}
fn default_phase_noise() -> f64 {
    0.05
}

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self {
            positions: 2,
            antennas_per_position: 2,
            phase_noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Static taps per stream (first tap dominates the serving cell).
    #[serde(default = "default_taps")]
    pub static_taps: usize,
    /// Largest static-tap delay, microseconds.
    #[serde(default = "default_max_delay")]
    pub max_delay_us: f64,
    /// Per-tap decay of the neighbour power profile, dB.
    #[serde(default = "default_neighbor_decay")]
    pub neighbor_tap_decay_db: f64,
    /// Hand-path magnitude relative to the serving static channel, dB.
    #[serde(default = "default_hand_gain")]
    pub hand_gain_db: f64,
    /// Uniform per-antenna jitter applied to the hand gain, dB.
    #[serde(default = "default_hand_jitter")]
    pub hand_gain_jitter_db: f64,
    /// Hand-path delay offset beyond the serving main tap, microseconds.
    #[serde(default = "default_hand_delay")]
    pub hand_delay_offset_us: f64,
}

fn default_taps() -> usize {
    3
}
fn default_max_delay() -> f64 {
    1.8
}
fn default_neighbor_decay() -> f64 {
    2.0
}
fn default_hand_gain() -> f64 {
    -20.0
}
fn default_hand_jitter() -> f64 {
    2.0
}
fn default_hand_delay() -> f64 {
    0.05
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self {
            static_taps: default_taps(),
            max_delay_us: default_max_delay(),
            neighbor_tap_decay_db: default_neighbor_decay(),
            hand_gain_db: default_hand_gain(),
            hand_gain_jitter_db: default_hand_jitter(),
            hand_delay_offset_us: default_hand_delay(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GestureSpec {
    #[serde(default = "default_start")]
    pub start_s: f64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_peak")]
    pub peak_doppler_hz: f64,
    #[serde(default = "default_pause")]
    pub pause_s: f64,
}

fn default_start() -> f64 {
    0.7
}
fn default_duration() -> f64 {
    1.2
}
fn default_peak() -> f64 {
    14.0
}
fn default_pause() -> f64 {
    0.3
}

impl Default for GestureSpec {
    fn default() -> Self {
        Self {
            start_s: default_start(),
            duration_s: default_duration(),
            peak_doppler_hz: default_peak(),
            pause_s: default_pause(),
        }
    }
}

/// CSI acquisition methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Multi-cell joint LS over the broadcast region.
    Pbch,
    /// Per-subcarrier reference-signal LS over the full grid.
    Crs,
    /// Reference-signal LS restricted to selected subcarriers.
    CrsSs,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Pbch => "pbch",
            Method::Crs => "crs",
            Method::CrsSs => "crs_ss",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pbch" => Ok(Method::Pbch),
            "crs" => Ok(Method::Crs),
            "crs_ss" | "crs-ss" => Ok(Method::CrsSs),
            other => Err(format!("unknown method '{other}' (pbch, crs, crs_ss)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSpec {
    /// RE-group width in subcarriers.
    #[serde(default = "default_k")]
    pub k_sc: usize,
    /// RE-group height in symbols.
    #[serde(default = "default_l")]
    pub l_sym: usize,
    #[serde(default = "default_cond")]
    pub cond_limit: f64,
    /// Subcarriers kept by the selection baseline.
    #[serde(default = "default_ss_count")]
    pub crs_ss_count: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Frames handed to each broadcast decode attempt during discovery.
    #[serde(default = "default_decode_frames")]
    pub decode_frames: usize,
}

fn default_k() -> usize {
    3
}
fn default_l() -> usize {
    4
}
fn default_cond() -> f64 {
    1e6
}
fn default_ss_count() -> usize {
    15
}
fn default_methods() -> Vec<Method> {
    vec![Method::Pbch, Method::Crs, Method::CrsSs]
}
fn default_decode_frames() -> usize {
    10
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            k_sc: default_k(),
            l_sym: default_l(),
            cond_limit: default_cond(),
            crs_ss_count: default_ss_count(),
            methods: default_methods(),
            decode_frames: default_decode_frames(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierSpec {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_pause_windows")]
    pub pause_min_windows: usize,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_step")]
    pub step_s: f64,
}

fn default_kappa() -> f64 {
    0.9
}
fn default_pause_windows() -> usize {
    4
}
fn default_window() -> f64 {
    0.1
}
fn default_step() -> f64 {
    0.05
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            pause_min_windows: default_pause_windows(),
            window_s: default_window(),
            step_s: default_step(),
        }
    }
}

impl ClassifierSpec {
    pub fn params(&self) -> ClassifierParams {
        ClassifierParams {
            kappa: self.kappa,
            pause_min_windows: self.pause_min_windows,
            slide_left_positive: true,
        }
    }
}

/// One experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Grid bandwidth in resource blocks (must be MIB-addressable).
    #[serde(default = "default_n_rb")]
    pub n_rb: usize,
    #[serde(default = "default_n_frames")]
    pub n_frames: usize,
    /// AWGN power per receive antenna relative to a unit channel, dB.
    #[serde(default = "default_noise")]
    pub noise_power_db: f64,
    #[serde(default)]
    pub cfo_hz: f64,
    /// Subframes synthesized per frame. The receiver consumes 0, 1, 5, 6;
    /// listing all ten reproduces complete captures at higher cost.
    #[serde(default = "default_subframes")]
    pub synth_subframes: Vec<usize>,
    pub cells: Vec<CellSpec>,
    #[serde(default)]
    pub receivers: ReceiverSpec,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub gesture: GestureSpec,
    #[serde(default)]
    pub estimators: EstimatorSpec,
    #[serde(default)]
    pub classifier: ClassifierSpec,
    /// Gesture trials per label in `pipeline` runs.
    #[serde(default = "default_trials")]
    pub trials_per_gesture: usize,
}

fn default_seed() -> u64 {
    1
}
fn default_n_rb() -> usize {
    15
}
fn default_n_frames() -> usize {
    240
}
fn default_noise() -> f64 {
    -20.0
}
fn default_subframes() -> Vec<usize> {
    vec![0, 1, 5, 6]
}
fn default_trials() -> usize {
    50
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !MIB_BANDWIDTHS_RB.contains(&self.n_rb) {
            return Err(invalid(
                "n_rb",
                format!("{} is not an addressable bandwidth {MIB_BANDWIDTHS_RB:?}", self.n_rb),
            ));
        }
        if self.n_frames == 0 {
            return Err(invalid("n_frames", "must be positive"));
        }
        if self.cells.is_empty() {
            return Err(invalid("cells", "at least one cell required"));
        }
        if self.cells.iter().filter(|c| c.serving).count() != 1 {
            return Err(invalid("cells", "exactly one cell must be marked serving"));
        }
        let mut mods = std::collections::HashSet::new();
        for (i, cell) in self.cells.iter().enumerate() {
            let field = format!("cells[{i}]");
            let identity = CellIdentity::from_pci(cell.pci)
                .map_err(|e| invalid(&field, e.to_string()))?;
            if cell.ports != 1 && cell.ports != 2 {
                return Err(invalid(&field, format!("ports must be 1 or 2, got {}", cell.ports)));
            }
            if !(0.0..=1.0).contains(&cell.payload_duty) {
                return Err(invalid(&field, "payload_duty outside [0, 1]"));
            }
            // Adjacent-cell planning rule: distinct CRS shifts.
            if !mods.insert(identity.v_shift()) {
                return Err(invalid(
                    &field,
                    format!("PCI {} repeats CRS shift {} (mod-6 planning rule)", cell.pci, identity.v_shift()),
                ));
            }
        }
        if self.receivers.positions == 0 || self.receivers.antennas_per_position == 0 {
            return Err(invalid("receivers", "need at least one position and antenna"));
        }
        if self.receivers.phase_noise_sigma < 0.0 {
            return Err(invalid("receivers.phase_noise_sigma", "must be non-negative"));
        }
        if !(self.gesture.peak_doppler_hz > 3.0 && self.gesture.peak_doppler_hz <= 20.0) {
            return Err(invalid(
                "gesture.peak_doppler_hz",
                "must lie in (3, 20] Hz for the sensing band",
            ));
        }
        for &sf in &self.synth_subframes {
            if sf >= crate::grid::SUBFRAMES_PER_FRAME {
                return Err(invalid("synth_subframes", format!("subframe {sf} out of range")));
            }
        }
        for sf in [0usize, 1, 5, 6] {
            if !self.synth_subframes.contains(&sf) {
                return Err(invalid(
                    "synth_subframes",
                    format!("subframe {sf} is required by the receiver"),
                ));
            }
        }
        if self.estimators.k_sc == 0
            || self.estimators.l_sym == 0
            || crate::phy::PBCH_SC % self.estimators.k_sc != 0
            || 4 % self.estimators.l_sym != 0
        {
            return Err(invalid(
                "estimators",
                format!(
                    "group tiling {} x {} does not partition the region",
                    self.estimators.k_sc, self.estimators.l_sym
                ),
            ));
        }
        let streams: usize = self.cells.iter().map(|c| usize::from(c.ports)).sum();
        if self.estimators.k_sc * self.estimators.l_sym < streams {
            return Err(invalid(
                "estimators",
                format!(
                    "group size {} cannot resolve {streams} streams",
                    self.estimators.k_sc * self.estimators.l_sym
                ),
            ));
        }
        if self.estimators.methods.is_empty() {
            return Err(invalid("estimators.methods", "at least one method"));
        }
        if self.channel.static_taps == 0 {
            return Err(invalid("channel.static_taps", "need at least one tap"));
        }
        if self.channel.max_delay_us * 1e-6 > crate::channel::MAX_DELAY_S {
            return Err(invalid("channel.max_delay_us", "exceeds the CP budget (4.7 us)"));
        }
        Ok(())
    }

    pub fn serving_index(&self) -> usize {
        self.cells
            .iter()
            .position(|c| c.serving)
            .expect("validated: one serving cell")
    }

    pub fn n_antennas(&self) -> usize {
        self.receivers.positions * self.receivers.antennas_per_position
    }

    /// Receiver position of each antenna, position-major.
    pub fn antenna_positions(&self) -> Vec<usize> {
        (0..self.n_antennas())
            .map(|a| a / self.receivers.antennas_per_position)
            .collect()
    }

    pub fn cell_configs(&self) -> Vec<CellConfig> {
        self.cells
            .iter()
            .map(|c| CellConfig {
                identity: CellIdentity::from_pci(c.pci).expect("validated"),
                n_ports: c.ports,
                tx_power_db: c.power_db,
                payload_duty: c.payload_duty,
            })
            .collect()
    }

    /// Noise power in linear units.
    pub fn noise_power(&self) -> f64 {
        10f64.powf(self.noise_power_db / 10.0)
    }

    /// Stable content hash for the run manifest.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canon = serde_json::to_vec(self).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(&canon);
        let out = hasher.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// A four-cell deployment mirroring measured living-room power offsets,
/// used as the default scenario.
pub fn example_scenario() -> Scenario {
    Scenario {
        name: "four-cell apartment".into(),
        seed: 1,
        n_rb: 15,
        n_frames: 240,
        noise_power_db: -20.0,
        cfo_hz: 0.0,
        synth_subframes: default_subframes(),
        cells: vec![
            CellSpec {
                pci: 252,
                ports: 1,
                power_db: 0.0,
                payload_duty: 1.0,
                serving: true,
            },
            CellSpec {
                pci: 249,
                ports: 1,
                power_db: -9.0,
                payload_duty: 1.0,
                serving: false,
            },
            CellSpec {
                pci: 253,
                ports: 1,
                power_db: -8.0,
                payload_duty: 1.0,
                serving: false,
            },
            CellSpec {
                pci: 256,
                ports: 1,
                power_db: -23.0,
                payload_duty: 1.0,
                serving: false,
            },
        ],
        receivers: ReceiverSpec::default(),
        channel: ChannelSpec::default(),
        gesture: GestureSpec::default(),
        estimators: EstimatorSpec::default(),
        classifier: ClassifierSpec::default(),
        trials_per_gesture: 50,
    }
}
