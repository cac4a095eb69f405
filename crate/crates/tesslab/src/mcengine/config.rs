use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tesslab_core::{
    AxisBox, Characteristic, Error, EstimatorKind, Kernel, MarkDistribution, Result, WeightModel,
};

/// Guard width around the window, or `Auto` for a pilot-based choice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GuardSpec {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for GuardSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GuardSpec::Auto => s.serialize_str("auto"),
            GuardSpec::Fixed(g) => s.serialize_f64(*g),
        }
    }
}

impl<'de> Deserialize<'de> for GuardSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(g) => Ok(GuardSpec::Fixed(g)),
            Repr::Text(t) if t == "auto" => Ok(GuardSpec::Auto),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "guard must be a number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

/// The random tessellation being studied: weights, mark law, intensity of
/// the generators and the cell kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellModel {
    pub model: WeightModel,
    pub marks: MarkDistribution,
    pub intensity: f64,
    pub kernel: Kernel,
}

impl CellModel {
    pub fn new(model: WeightModel, marks: MarkDistribution, kernel: Kernel) -> Self {
        CellModel {
            model,
            marks,
            intensity: 1.0,
            kernel,
        }
    }

    pub fn mu(&self) -> f64 {
        self.marks.mu_bound()
    }

    /// Length scale of the point process.
    pub fn scale(&self) -> f64 {
        1.0 / self.intensity.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "intensity must be positive, got {}",
                self.intensity
            )));
        }
        self.marks.validate()?;
        self.kernel.validate(self.model)
    }
}

fn default_intensity() -> f64 {
    1.0
}

fn default_marks() -> MarkDistribution {
    MarkDistribution::Uniform { a: 0.0, b: 0.5 }
}

fn default_kind() -> EstimatorKind {
    EstimatorKind::FullSample
}

fn default_kernel() -> Kernel {
    Kernel::Exact
}

fn default_moment_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: WeightModel,
    pub characteristic: Characteristic,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
    #[serde(default = "default_marks")]
    pub mark_dist: MarkDistribution,
    pub lambda_values: Vec<f64>,
    pub replications: usize,
    #[serde(default = "default_kind")]
    pub kind: EstimatorKind,
    #[serde(default = "default_kernel")]
    pub kernel: Kernel,
    #[serde(default)]
    pub guard: GuardSpec,
    #[serde(default)]
    pub master_seed: u64,
    /// Order of the empirical moments reported alongside summaries.
    #[serde(default = "default_moment_p")]
    pub moment_p: f64,
    /// Typical-cell draws for the oracle; defaults to `replications`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_replications: Option<usize>,
}

impl ExperimentConfig {
    /// A configuration with the documented defaults for everything but the
    /// required fields.
    pub fn new(
        model: WeightModel,
        characteristic: Characteristic,
        lambda_values: Vec<f64>,
        replications: usize,
    ) -> Self {
        ExperimentConfig {
            model,
            characteristic,
            intensity: default_intensity(),
            mark_dist: default_marks(),
            lambda_values,
            replications,
            kind: default_kind(),
            kernel: default_kernel(),
            guard: GuardSpec::Auto,
            master_seed: 0,
            moment_p: default_moment_p(),
            oracle_replications: None,
        }
    }

    pub fn cell_model(&self) -> CellModel {
        CellModel {
            model: self.model,
            marks: self.mark_dist.clone(),
            intensity: self.intensity,
            kernel: self.kernel,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mark_dist.mu_bound()
    }

    pub fn oracle_count(&self) -> usize {
        self.oracle_replications.unwrap_or(self.replications)
    }

    pub fn window(&self, lambda: f64) -> Result<AxisBox> {
        AxisBox::window_of_volume(lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidParameter(m));
        if self.replications < 2 {
            return invalid(format!("replications must be at least 2, got {}", self.replications));
        }
        if self.lambda_values.is_empty() {
            return invalid("lambda_values must not be empty".into());
        }
        if self.lambda_values.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return invalid("lambda_values must be positive and finite".into());
        }
        if self.lambda_values.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("lambda_values must be strictly increasing".into());
        }
        if let GuardSpec::Fixed(g) = self.guard {
            if !(g >= 0.0 && g.is_finite()) {
                return invalid(format!("guard must be finite and >= 0, got {g}"));
            }
        }
        if !(self.moment_p > 0.0 && self.moment_p.is_finite()) {
            return invalid(format!("moment_p must be positive, got {}", self.moment_p));
        }
        if self.oracle_replications.is_some_and(|n| n < 2) {
            return invalid("oracle_replications must be at least 2".into());
        }
        self.characteristic.validate()?;
        self.cell_model().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::new(WeightModel::Voronoi, Characteristic::Volume, vec![16.0, 64.0], 10)
    }

    #[test]
    fn guard_round_trips() {
        for g in [GuardSpec::Auto, GuardSpec::Fixed(7.5)] {
            let s = serde_json::to_string(&g).unwrap();
            assert_eq!(serde_json::from_str::<GuardSpec>(&s).unwrap(), g);
        }
        assert!(serde_json::from_str::<GuardSpec>("\"big\"").is_err());
    }

    #[test]
    fn defaults_fill_optional_fields() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"model": "voronoi", "characteristic": "volume", "lambda_values": [16, 64], "replications": 10}"#,
        )
        .unwrap();
        assert_eq!(c, base());
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"model": "voronoi", "characteristic": "volume", "lambda_values": [16], "replications": 10, "seed": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn validation() {
        assert!(base().validate().is_ok());
        let mut c = base();
        c.replications = 1;
        assert!(c.validate().is_err());
        let mut c = base();
        c.lambda_values = vec![64.0, 16.0];
        assert!(c.validate().is_err());
        let mut c = base();
        c.model = WeightModel::JohnsonMehl;
        assert!(c.validate().is_err());
        c.kernel = Kernel::Raster { grid_h: 0.05 };
        assert!(c.validate().is_ok());
        let mut c = base();
        c.guard = GuardSpec::Fixed(-1.0);
        assert!(c.validate().is_err());
    }
}
