//! Scenario files: a single JSON document describing the architecture pair,
//! loss, frozen narrow parameter, sample specification, and per-command
//! parameters. CLI flags override individual fields.

use std::path::{Path, PathBuf};

use critlift_core::calculus::{LossKind, SampleSet};
use critlift_core::linalg::Matrix;
use critlift_core::net::{forward, Activation, Architecture, ParamVec};
use critlift_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Bundled reference scenario (one-neuron tanh net, frozen weight 1.0258,
/// inputs (1/4, 1, 4, 16), residual curve).
pub const BUNDLED_SCENARIO: &str = include_str!("../scenarios/paper_sec5.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
}

impl ArchSpec {
    pub fn to_arch(&self, activation: Activation) -> Result<Architecture> {
        Architecture::new(
            self.input_dim,
            self.hidden_widths.clone(),
            self.output_dim,
            activation,
        )
    }
}

/// Parameter data; shapes must match the narrow architecture. Bias terms do
/// not exist in this model family, so any extra field is a parse error.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub a: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<f64>>>,
}

impl ThetaSpec {
    pub fn to_params(&self) -> Result<ParamVec> {
        let out_weights = Matrix::from_rows(&self.a)?;
        let layer_weights = self
            .w
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamVec { out_weights, layer_weights })
    }
}

/// Residual curve ε(t) = base + t·direction; outputs are generated as
/// `y_i = H(θ_narrow, x_i) - ε_i(t)` (one-dimensional outputs only).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

impl CurveSpec {
    pub fn epsilon(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + t * d)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSpec {
    /// Path to a sample CSV (header `x_1..x_d,y_1..y_D`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<CurveSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifySpec {
    #[serde(default = "default_radius_list")]
    pub radius_list: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_criticality_tol")]
    pub criticality_tol: f64,
}

fn default_radius_list() -> Vec<f64> {
    vec![1e-2, 1e-3]
}
fn default_trials() -> usize {
    16
}
fn default_criticality_tol() -> f64 {
    critlift_core::embedding::DEFAULT_CRITICALITY_TOL
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            radius_list: default_radius_list(),
            trials: default_trials(),
            criticality_tol: default_criticality_tol(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    50
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self { draws: default_draws() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub activation: Activation,
    pub loss: LossKind,
    pub narrow: ArchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide: Option<ArchSpec>,
    pub theta_narrow: ThetaSpec,
    pub samples: SamplesSpec,
    /// Incoming weights of the appended last-layer neurons of the wide net.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_weights: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub certify: CertifySpec,
    #[serde(default)]
    pub probe: ProbeSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Base directory for relative paths; set when loaded from a file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn bundled() -> Scenario {
        Self::parse(BUNDLED_SCENARIO).expect("bundled scenario parses")
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let scn: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("scenario parse: {e}")))?;
        scn.validate()?;
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        let mut scn = Self::parse(&text)?;
        scn.base_dir = path.parent().map(|p| p.to_path_buf());
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let narrow = self.narrow_arch()?;
        let theta = self.theta_narrow.to_params()?;
        theta.shape_check(&narrow)?;
        if let Some(wide) = self.wide_arch()? {
            if !narrow.is_narrower_or_equal(&wide) {
                return Err(Error::Config(
                    "narrow/wide architectures do not form a widening pair".into(),
                ));
            }
            if let Some(extra) = &self.extra_weights {
                let depth = wide.depth();
                let count = wide.layer_width(depth) - narrow.layer_width(depth);
                if extra.len() != count {
                    return Err(Error::Config(format!(
                        "{} extra weight rows for {count} appended neurons",
                        extra.len()
                    )));
                }
            }
        } else if self.extra_weights.is_some() {
            return Err(Error::Config(
                "extra_weights given without a wide architecture".into(),
            ));
        }
        let spec = &self.samples;
        if spec.csv.is_none() && spec.inputs.is_none() {
            return Err(Error::Config(
                "samples need either a csv path or explicit inputs".into(),
            ));
        }
        Ok(())
    }

    pub fn narrow_arch(&self) -> Result<Architecture> {
        self.narrow.to_arch(self.activation)
    }

    pub fn wide_arch(&self) -> Result<Option<Architecture>> {
        self.wide
            .as_ref()
            .map(|w| w.to_arch(self.activation))
            .transpose()
    }

    pub fn theta(&self) -> Result<ParamVec> {
        let theta = self.theta_narrow.to_params()?;
        theta.shape_check(&self.narrow_arch()?)?;
        Ok(theta)
    }

    fn resolve_path(&self, p: &str) -> PathBuf {
        let path = PathBuf::from(p);
        if path.is_relative() {
            if let Some(base) = &self.base_dir {
                return base.join(path);
            }
        }
        path
    }

    /// Input rows only (for synthesis commands).
    pub fn resolve_inputs(&self) -> Result<Matrix> {
        if let Some(csv) = &self.samples.csv {
            let s = SampleSet::read_csv(&self.resolve_path(csv))?;
            return Ok(s.xs);
        }
        let rows = self
            .samples
            .inputs
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no sample inputs".into()))?;
        Matrix::from_rows(rows)
    }

    /// Full sample set: CSV, explicit outputs, or curve-generated residual
    /// offsets from the narrow parameter's outputs.
    pub fn resolve_samples(&self) -> Result<SampleSet> {
        if let Some(csv) = &self.samples.csv {
            return SampleSet::read_csv(&self.resolve_path(csv));
        }
        let xs = self.resolve_inputs()?;
        if let Some(out) = &self.samples.outputs {
            return SampleSet::new(xs, Matrix::from_rows(out)?);
        }
        let curve = self.samples.curve.as_ref().ok_or_else(|| {
            Error::Config("samples need outputs, a curve, or a csv path".into())
        })?;
        let arch = self.narrow_arch()?;
        if arch.output_dim != 1 {
            return Err(Error::Config(
                "curve-generated outputs need a one-dimensional output".into(),
            ));
        }
        if curve.base.len() != xs.rows() || curve.direction.len() != xs.rows() {
            return Err(Error::Config(format!(
                "curve has {} entries for {} samples",
                curve.base.len(),
                xs.rows()
            )));
        }
        let theta = self.theta()?;
        let eps = curve.epsilon(curve.t);
        let ys = Matrix::from_rows(
            &(0..xs.rows())
                .map(|i| {
                    forward(&arch, &theta, xs.row(i)).map(|p| vec![p[0] - eps[i]])
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        SampleSet::new(xs, ys)
    }

    /// Stable content hash over the serialized scenario.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
