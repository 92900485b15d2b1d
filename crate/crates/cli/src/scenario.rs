//! Scenario files: TOML documents describing one experiment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nldamp_core::certify::Axis;
use nldamp_core::{
    make_constant, make_slope, make_trapezoid, GainParams, IntegratorConfig, NoiseConfig, PdGains,
    PlantState, RefProfile, System,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Setpoint,
    Tracking,
    Pd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub sat: Option<f64>,
    #[serde(default)]
    pub kp: Option<f64>,
    /// Defaults to the critically damped `2√kp`.
    #[serde(default)]
    pub kd: Option<f64>,
}

impl SystemSpec {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.kind {
                SystemKind::Setpoint => "setpoint",
                SystemKind::Tracking => "tracking",
                SystemKind::Pd => "pd",
            }
            .to_string()
        })
    }

    /// Resolves the spec into a model system; `field` prefixes diagnostics.
    pub fn build(&self, field: &str) -> Result<System> {
        let gains = || -> Result<GainParams> {
            let k = self
                .k
                .with_context(|| format!("{field}.k is required for kind {:?}", self.kind))?;
            let mu = self
                .mu
                .with_context(|| format!("{field}.mu is required for kind {:?}", self.kind))?;
            GainParams::with_saturation(k, mu, self.sat).with_context(|| field.to_string())
        };
        Ok(match self.kind {
            SystemKind::Setpoint => System::Setpoint(gains()?),
            SystemKind::Tracking => System::Tracking(gains()?),
            SystemKind::Pd => {
                let kp = self
                    .kp
                    .with_context(|| format!("{field}.kp is required for kind pd"))?;
                let g = match self.kd {
                    Some(kd) => PdGains::new(kp, kd),
                    None => PdGains::critically_damped(kp),
                };
                System::Pd(g.with_context(|| field.to_string())?)
            }
        })
    }

    /// The proportional gain, `k` or `kp`.
    pub fn gain(&self) -> Option<f64> {
        match self.kind {
            SystemKind::Pd => self.kp,
            _ => self.k,
        }
    }

    pub fn with_gain(&self, k: f64) -> Self {
        let mut s = self.clone();
        match s.kind {
            SystemKind::Pd => s.kp = Some(k),
            _ => s.k = Some(k),
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "defaults::conv_eps")]
    pub conv_eps: f64,
    #[serde(default = "defaults::conv_hold")]
    pub conv_hold: f64,
    #[serde(default = "defaults::blowup_bound")]
    pub blowup_bound: f64,
    #[serde(default = "defaults::yes")]
    pub stop_on_convergence: bool,
}

impl IntegratorSpec {
    pub fn config(&self) -> IntegratorConfig {
        IntegratorConfig {
            dt: self.dt,
            t_end: self.t_end,
            conv_eps: self.conv_eps,
            conv_hold: self.conv_hold,
            blowup_bound: self.blowup_bound,
            stop_on_convergence: self.stop_on_convergence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Constant,
    Slope,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    /// Constant reference value.
    #[serde(default)]
    pub value: Option<f64>,
    /// Slope velocity.
    #[serde(default)]
    pub v: Option<f64>,
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default)]
    pub accel: Option<f64>,
    #[serde(default)]
    pub t_cruise: Option<f64>,
}

impl ReferenceSpec {
    pub fn build(&self, t_end: f64) -> Result<RefProfile> {
        let need = |v: Option<f64>, name: &str| {
            v.with_context(|| format!("reference.{name} is required for kind {:?}", self.kind))
        };
        let profile = match self.kind {
            ReferenceKind::Constant => make_constant(self.value.unwrap_or(0.0), t_end),
            ReferenceKind::Slope => make_slope(need(self.v, "v")?, t_end),
            ReferenceKind::Trapezoid => make_trapezoid(
                need(self.v_max, "v_max")?,
                need(self.accel, "accel")?,
                need(self.t_cruise, "t_cruise")?,
                t_end,
            ),
        };
        profile.context("reference")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "defaults::sigma1")]
    pub sigma1: f64,
    #[serde(default = "defaults::sigma2")]
    pub sigma2: f64,
    #[serde(default = "defaults::sample_dt")]
    pub sample_dt: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn config(&self) -> Option<NoiseConfig> {
        self.enabled.then_some(NoiseConfig {
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            sample_dt: self.sample_dt,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Directory (relative to the output root) receiving one CSV per run.
    pub csv: String,
    /// Optional long-format plot data file (relative to the output root).
    #[serde(default)]
    pub plotdata: Option<String>,
    #[serde(default = "defaults::plot_stride")]
    pub plot_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default = "defaults::log_floor")]
    pub log_floor: f64,
    /// Start of the log-scale fit window; the peak of |e1| when absent.
    #[serde(default)]
    pub log_fit_start: Option<f64>,
    /// Length of the trailing window used for the error RMS.
    #[serde(default = "defaults::rms_window")]
    pub rms_window: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            log_floor: defaults::log_floor(),
            log_fit_start: None,
            rms_window: defaults::rms_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecFile {
    pub e1: Axis,
    pub e2: Axis,
    /// `e2` value of the slice scanning `e1`.
    #[serde(default)]
    pub slice_e2: Option<f64>,
    /// `e1` value of the slice scanning `e2`.
    #[serde(default)]
    pub slice_e1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub inits: Vec<[f64; 2]>,
    pub system: SystemSpec,
    #[serde(default)]
    pub integrator: Option<IntegratorSpec>,
    #[serde(default)]
    pub reference: Option<ReferenceSpec>,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    pub outputs: OutputSpec,
    #[serde(default)]
    pub variants: Vec<SystemSpec>,
    #[serde(default)]
    pub baseline: Option<SystemSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub metrics: Option<MetricsSpec>,
    #[serde(default)]
    pub grid: Option<GridSpecFile>,
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub k: Option<f64>,
    pub mu: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).context("malformed scenario")?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.k {
            self.system = self.system.with_gain(k);
        }
        if let Some(mu) = o.mu {
            self.system.mu = Some(mu);
        }
        if let Some(integ) = self.integrator.as_mut() {
            if let Some(dt) = o.dt {
                integ.dt = dt;
            }
            if let Some(t) = o.t_end {
                integ.t_end = t;
            }
        }
        if let (Some(noise), Some(seed)) = (self.noise.as_mut(), o.seed) {
            noise.seed = seed;
        }
    }

    /// SHA-256 of the canonical JSON form; independent of key order in the file.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn integrator(&self) -> Result<&IntegratorSpec> {
        self.integrator
            .as_ref()
            .context("missing [integrator] table")
    }

    pub fn metrics(&self) -> MetricsSpec {
        self.metrics.clone().unwrap_or_default()
    }

    /// Everything a simulation command needs, checked for consistency.
    pub fn simulation_plan(&self) -> Result<SimulationPlan> {
        let integ = self.integrator()?;
        let cfg = integ.config();
        cfg.validate().context("integrator")?;
        if self.inits.is_empty() {
            bail!("inits: at least one initial condition is required");
        }
        if let Some(bad) = self
            .inits
            .iter()
            .position(|[a, b]| !(a.is_finite() && b.is_finite()))
        {
            bail!("inits[{bad}]: values must be finite");
        }
        let reference = self
            .reference
            .as_ref()
            .context("missing [reference] table")?
            .build(cfg.t_end)?;
        let noise = self.noise.as_ref().and_then(NoiseSpec::config);
        if let Some(n) = &noise {
            n.validate().context("noise")?;
            if n.sample_dt < cfg.dt {
                bail!("noise.sample_dt must not be shorter than integrator.dt");
            }
        }
        let mut systems = vec![(self.system.label(), self.system.build("system")?)];
        for (i, v) in self.variants.iter().enumerate() {
            systems.push((v.label(), v.build(&format!("variants[{i}]"))?));
        }
        let mut labels: Vec<&String> = systems.iter().map(|(l, _)| l).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            bail!("system labels must be unique; set `label` on variants");
        }
        Ok(SimulationPlan {
            systems,
            inits: self
                .inits
                .iter()
                .map(|&[a, b]| PlantState::new(a, b))
                .collect(),
            reference,
            noise,
            cfg,
        })
    }
}

pub struct SimulationPlan {
    pub systems: Vec<(String, System)>,
    pub inits: Vec<PlantState>,
    pub reference: RefProfile,
    pub noise: Option<NoiseConfig>,
    pub cfg: IntegratorConfig,
}

mod defaults {
    pub fn conv_eps() -> f64 {
        1e-6
    }
    pub fn conv_hold() -> f64 {
        0.05
    }
    pub fn blowup_bound() -> f64 {
        1e6
    }
    pub fn yes() -> bool {
        true
    }
    pub fn sigma1() -> f64 {
        1e-4
    }
    pub fn sigma2() -> f64 {
        1e-3
    }
    pub fn sample_dt() -> f64 {
        1e-3
    }
    pub fn plot_stride() -> usize {
        10
    }
    pub fn log_floor() -> f64 {
        1e-12
    }
    pub fn rms_window() -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
inits = [[1.0, 0.0]]
[system]
kind = "tracking"
k = 100.0
mu = 1e-4
[integrator]
dt = 1e-4
t_end = 1.0
[reference]
kind = "slope"
v = 1.0
[outputs]
csv = "t"
"#;

    #[test]
    fn parses_minimal() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let plan = s.simulation_plan().unwrap();
        assert_eq!(plan.systems.len(), 1);
        assert_eq!(plan.systems[0].0, "tracking");
        assert_eq!(plan.cfg.conv_eps, 1e-6);
        assert!(plan.noise.is_none());
    }

    #[test]
    fn hash_ignores_key_order() {
        let reordered = MINIMAL.replace("k = 100.0\nmu = 1e-4", "mu = 1e-4\nk = 100.0");
        assert_ne!(reordered, MINIMAL);
        assert_eq!(
            Scenario::parse(MINIMAL).unwrap().hash(),
            Scenario::parse(&reordered).unwrap().hash()
        );
        let changed = MINIMAL.replace("k = 100.0", "k = 10.0");
        assert_ne!(
            Scenario::parse(MINIMAL).unwrap().hash(),
            Scenario::parse(&changed).unwrap().hash()
        );
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = Scenario::parse(&MINIMAL.replace("dt = 1e-4", "dt = \"x\"")).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("dt") && msg.contains("line"), "{msg}");

        let empty =
            Scenario::parse(&MINIMAL.replace("inits = [[1.0, 0.0]]", "inits = []")).unwrap();
        let msg = format!("{:#}", empty.simulation_plan().err().unwrap());
        assert!(msg.contains("inits"), "{msg}");

        let no_mu = Scenario::parse(&MINIMAL.replace("mu = 1e-4\n", "")).unwrap();
        let msg = format!("{:#}", no_mu.simulation_plan().err().unwrap());
        assert!(msg.contains("system.mu"), "{msg}");

        let unknown = Scenario::parse(&MINIMAL.replace("v = 1.0", "v = 1.0\nspeed = 2.0"));
        assert!(format!("{:#}", unknown.unwrap_err()).contains("speed"));
    }

    #[test]
    fn overrides() {
        let mut s = Scenario::parse(MINIMAL).unwrap();
        s.apply(&Overrides {
            k: Some(4.0),
            mu: Some(0.0),
            dt: Some(1e-3),
            ..Overrides::default()
        });
        assert_eq!((s.system.k, s.system.mu), (Some(4.0), Some(0.0)));
        assert_eq!(s.integrator().unwrap().dt, 1e-3);
    }

    #[test]
    fn pd_defaults_to_critical_damping() {
        let spec = SystemSpec {
            kind: SystemKind::Pd,
            label: None,
            k: None,
            mu: None,
            sat: None,
            kp: Some(100.0),
            kd: None,
        };
        assert_eq!(
            spec.build("s").unwrap(),
            System::Pd(PdGains {
                kp: 100.0,
                kd: 20.0
            })
        );
    }
}
