use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enkf::{ControlBounds, ControlSpreads, CycleConfig, GaFitting, ObservationSelection, WsrErrorModel};
use crate::error::{Error, Result};

/// Config schema version understood by this build.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Experiment {
    /// Open loop, no assimilation.
    OL,
    /// Gauge water levels only.
    IDA,
    /// Gauge water levels and wet surface ratios.
    IGDA,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::OL, Experiment::IDA, Experiment::IGDA];

    pub fn selection(self) -> ObservationSelection {
        match self {
            Experiment::OL => ObservationSelection::None,
            Experiment::IDA => ObservationSelection::Wse,
            Experiment::IGDA => ObservationSelection::WseWsr,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::OL => "OL",
            Experiment::IDA => "IDA",
            Experiment::IGDA => "IGDA",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OL" => Ok(Experiment::OL),
            "IDA" => Ok(Experiment::IDA),
            "IGDA" => Ok(Experiment::IGDA),
            _ => Err(Error::Config(format!("unknown experiment `{s}` (OL, IDA or IGDA)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingSource {
    /// The true upstream discharge.
    Observed,
    /// Routed and biased hydrologic-model discharge.
    Hydrologic,
}

impl ForcingSource {
    pub const ALL: [ForcingSource; 2] = [ForcingSource::Observed, ForcingSource::Hydrologic];

    pub fn suffix(self) -> &'static str {
        match self {
            ForcingSource::Observed => "V",
            ForcingSource::Hydrologic => "R",
        }
    }
}

impl fmt::Display for ForcingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForcingSource::Observed => "observed",
            ForcingSource::Hydrologic => "hydrologic",
        })
    }
}

impl FromStr for ForcingSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "observed" => Ok(ForcingSource::Observed),
            "hydrologic" => Ok(ForcingSource::Hydrologic),
            _ => Err(Error::Config(format!("unknown forcing `{s}` (observed or hydrologic)"))),
        }
    }
}

/// Synthetic reach geometry and the true and prior friction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Longitudinal bed slope.
    pub slope: f64,
    /// Number of channel rows, centred across the grid.
    pub channel_rows: usize,
    /// Height of the floodplain edge above the channel bed (m).
    pub bank_height: f64,
    /// Lateral rise of the floodplain away from the channel.
    pub lateral_slope: f64,
    /// Amplitude (m) and wavelength (m) of the floodplain micro-relief.
    pub relief_amplitude: f64,
    pub relief_wavelength: f64,
    /// Channel bed elevation at the outlet (m).
    pub outlet_bed: f64,
    pub station_names: Vec<String>,
    /// Station positions as fractions of the reach length.
    pub station_positions: Vec<f64>,
    pub station_sigma: f64,
    /// Number of subdomains on the left (south) and right (north) banks.
    pub left_subdomains: usize,
    pub right_subdomains: usize,
    /// Strickler coefficients for upstream channel, downstream channel and
    /// floodplain zones.
    pub true_friction: Vec<f64>,
    pub prior_friction: Vec<f64>,
    pub dry_eps: f64,
    pub cfl: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    /// Length of the baseflow spin-up that produces the initial state (s).
    pub spinup: f64,
}

fn default_dt_max() -> f64 {
    30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasKind {
    /// Smoothed reduction above a discharge threshold.
    Peak,
    /// Constant multiplicative factor.
    Uniform,
}

/// Upstream lateral inflows, routing and the hydrologic bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    /// Event length after spin-up (s).
    pub duration: f64,
    /// Forcing and routing step (s).
    pub step: f64,
    /// Total lateral baseflow (m³/s).
    pub baseflow: f64,
    /// Total lateral peak flow above baseflow (m³/s).
    pub peak: f64,
    /// Time of the lateral peak after the event start (s).
    pub peak_time: f64,
    /// Gaussian width of the lateral pulses (s).
    pub width: f64,
    /// Optional network file replacing the built-in reach tree.
    #[serde(default)]
    pub network_file: Option<PathBuf>,
    /// Optional lateral inflow file replacing the built-in pulses.
    #[serde(default)]
    pub lateral_inflow_file: Option<PathBuf>,
    pub bias: BiasKind,
    /// Peak bias: fractional reduction reached above `threshold + ramp`.
    #[serde(default)]
    pub reduction: f64,
    #[serde(default)]
    pub threshold: f64,
    #[serde(default = "default_ramp")]
    pub ramp: f64,
    /// Uniform bias factor.
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_ramp() -> f64 {
    1.0
}
fn default_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    /// Gauge sampling interval (s).
    pub wse_interval: f64,
    pub wse_noise: f64,
    /// WSR dates, seconds after the event start.
    pub wsr_dates: Vec<f64>,
    pub wsr_noise: f64,
    pub wsr_sigma: f64,
    pub seed: u64,
}

/// Rain-like water added to the truth floodplain only; the model never
/// sees it, so only a state correction can absorb it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthRainConfig {
    #[serde(default)]
    pub events: Vec<RainEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainEvent {
    /// Seconds after the event start.
    pub time: f64,
    /// Depth per subdomain, in subdomain id order (m).
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssimilationConfig {
    pub window: f64,
    pub members: usize,
    pub spreads: ControlSpreads,
    #[serde(default)]
    pub bounds: ControlBounds,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    /// When given, must agree with the experiment.
    #[serde(default)]
    pub selection: Option<ObservationSelection>,
    #[serde(default = "default_true")]
    pub anamorphosis: bool,
    #[serde(default = "default_fitting")]
    pub ga_fitting: GaFitting,
    #[serde(default = "default_wsr_error")]
    pub wsr_error: WsrErrorModel,
    #[serde(default = "default_saturation")]
    pub saturation_fraction: f64,
    #[serde(default = "default_respawn")]
    pub max_respawn: usize,
    /// Restrict each depth correction to its own subdomain's WSR.
    #[serde(default = "default_true")]
    pub localize_delta_h: bool,
}

fn default_inflation() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_fitting() -> GaFitting {
    GaFitting::PerCycle
}
fn default_wsr_error() -> WsrErrorModel {
    WsrErrorModel::UnitScore
}
fn default_saturation() -> f64 {
    0.5
}
fn default_respawn() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub forcing: ForcingSource,
    pub seed: u64,
    pub output: PathBuf,
    /// Also evaluate CSI over channel cells.
    #[serde(default)]
    pub csi_include_channel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub scenario: ScenarioConfig,
    pub event: EventConfig,
    pub observations: ObservationConfig,
    #[serde(default)]
    pub truth_rain: TruthRainConfig,
    pub assimilation: AssimilationConfig,
    pub run: RunConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    /// Parses and validates a config. Relative file paths are resolved
    /// against `base_dir`.
    pub fn from_toml(text: &str, source: &Path, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| line_of(text, s.start));
            Error::parse(source, line, e.message().to_string())
        })?;
        for p in [&mut cfg.event.network_file, &mut cfg.event.lateral_inflow_file]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        if cfg.run.output.is_relative() {
            cfg.run.output = base_dir.join(&cfg.run.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, path, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The built-in default scenario.
    pub fn default_scenario() -> Self {
        let text = include_str!("../../../../configs/default.toml");
        Self::from_toml(text, Path::new("<default>"), Path::new(".")).expect("default config is valid")
    }

    /// Cycle settings for `experiment`.
    pub fn cycle(&self, experiment: Experiment, seed: u64) -> CycleConfig {
        let a = &self.assimilation;
        CycleConfig {
            window: a.window,
            members: a.members,
            spreads: a.spreads,
            bounds: a.bounds,
            inflation: a.inflation,
            selection: experiment.selection(),
            anamorphosis: a.anamorphosis,
            ga_fitting: a.ga_fitting,
            wsr_error: a.wsr_error,
            saturation_fraction: a.saturation_fraction,
            max_respawn: a.max_respawn,
            localize_delta_h: a.localize_delta_h,
            seed,
        }
    }

    /// Checks the config for an experiment about to run: the observation
    /// selection must agree with the experiment and IGDA needs WSR dates.
    pub fn validate_experiment(&self, experiment: Experiment) -> Result<()> {
        if let Some(sel) = self.assimilation.selection {
            if sel != experiment.selection() {
                return Err(Error::Config(format!(
                    "experiment {experiment} assimilates {:?}, but the config selects {sel:?}",
                    experiment.selection()
                )));
            }
        }
        if experiment == Experiment::IGDA && self.observations.wsr_dates.is_empty() {
            return Err(Error::Config("IGDA needs at least one WSR date".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        let s = &self.scenario;
        if s.nx < 4 || s.ny < 3 {
            return err("grid must be at least 4 x 3 cells".into());
        }
        if !(s.dx > 0.0 && s.dy > 0.0 && s.slope >= 0.0 && s.bank_height >= 0.0) {
            return err("cell sizes must be > 0 and slope, bank height >= 0".into());
        }
        if s.channel_rows == 0 || s.channel_rows + 2 > s.ny {
            return err("channel must leave floodplain rows on both banks".into());
        }
        if s.station_names.len() != s.station_positions.len() || s.station_names.is_empty() {
            return err("station_names and station_positions must be non-empty and equally long".into());
        }
        if s.station_positions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return err("station positions must lie in [0, 1]".into());
        }
        let left = (s.ny - s.channel_rows) / 2;
        let right = s.ny - s.channel_rows - left;
        if s.left_subdomains == 0 || s.right_subdomains == 0 || s.left_subdomains > s.nx || s.right_subdomains > s.nx {
            return err("each bank needs between 1 and nx subdomains".into());
        }
        if left == 0 || right == 0 {
            return err("both banks need at least one row".into());
        }
        if s.true_friction.len() != 3 || s.prior_friction.len() != 3 {
            return err("friction lists need 3 zones (upstream channel, downstream channel, floodplain)".into());
        }
        if !(s.dry_eps > 0.0 && s.cfl > 0.0 && s.cfl <= 0.5 && s.spinup >= 0.0 && s.station_sigma > 0.0) {
            return err("dry_eps, station_sigma must be > 0, cfl in (0, 0.5], spinup >= 0".into());
        }
        let e = &self.event;
        if !(e.duration > 0.0 && e.step > 0.0 && e.width > 0.0) {
            return err("event duration, step and width must be > 0".into());
        }
        if !(e.peak > 0.0 && e.baseflow >= 0.0) {
            return err("event peak must be > 0 and baseflow >= 0".into());
        }
        if (e.duration / e.step).fract() != 0.0 {
            return err("event duration must be a multiple of the step".into());
        }
        match e.bias {
            BiasKind::Peak if !((0.0..1.0).contains(&e.reduction) && e.ramp > 0.0) => {
                return err("peak bias needs reduction in [0, 1) and ramp > 0".into())
            }
            BiasKind::Uniform if !(e.factor > 0.0) => return err("uniform bias factor must be > 0".into()),
            _ => {}
        }
        let o = &self.observations;
        if !(o.wse_interval > 0.0 && o.wse_noise >= 0.0 && o.wsr_noise >= 0.0 && o.wsr_sigma > 0.0) {
            return err("observation interval and sigma must be > 0, noise >= 0".into());
        }
        if o.wsr_dates.windows(2).any(|w| w[1] <= w[0]) || o.wsr_dates.iter().any(|&t| !(t > 0.0 && t <= e.duration)) {
            return err("WSR dates must be increasing and inside the event".into());
        }
        let n_sub = s.left_subdomains + s.right_subdomains;
        for r in &self.truth_rain.events {
            if r.depth.len() != n_sub {
                return err(format!("truth rain depth needs {n_sub} entries"));
            }
            if !(r.time >= 0.0 && r.time <= e.duration) || r.depth.iter().any(|d| !d.is_finite()) {
                return err("truth rain time must lie inside the event".into());
            }
        }
        let cycle = self.cycle(self.run.experiment, self.run.seed);
        cycle.validate()?;
        let a = &self.assimilation;
        if (a.window / e.step).fract() != 0.0 {
            return err("assimilation window must be a multiple of the event step".into());
        }
        let prior = s.prior_friction.iter().chain(&s.true_friction);
        for k in prior {
            if !(a.bounds.friction_min..=a.bounds.friction_max).contains(k) {
                return err(format!("friction {k} outside the assimilation bounds"));
            }
        }
        self.validate_experiment(self.run.experiment)
    }

    /// Observation-selection consistency for every experiment of the
    /// matrix.
    pub fn validate_matrix(&self) -> Result<()> {
        Experiment::ALL.iter().try_for_each(|&e| self.validate_experiment(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default_scenario();
        let again = ExperimentConfig::from_toml(&c.to_toml(), Path::new("x"), Path::new("")).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.scenario.station_names.len(), 3);
        assert_eq!(c.scenario.left_subdomains + c.scenario.right_subdomains, 5);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = "version = 1\n[scenario]\nnx = \"ten\"\n";
        match ExperimentConfig::from_toml(text, Path::new("c.toml"), Path::new("")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn selection_must_match_experiment() {
        let mut c = ExperimentConfig::default_scenario();
        c.assimilation.selection = Some(ObservationSelection::Wse);
        c.run.experiment = Experiment::IGDA;
        assert!(c.validate().is_err());
        c.run.experiment = Experiment::IDA;
        assert!(c.validate().is_ok());
        let mut c = ExperimentConfig::default_scenario();
        c.observations.wsr_dates.clear();
        assert!(c.validate_experiment(Experiment::IGDA).is_err());
        assert!(c.validate_matrix().is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        let mut c = ExperimentConfig::default_scenario();
        c.version = 2;
        assert!(c.validate().is_err());
    }
}
