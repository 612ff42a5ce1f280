//! Configured experiments: ε-sweeps, verdict suites and output.

mod plot;
mod run;
mod scaling;

pub use plot::{emit_plot_data, Figure};
pub use run::{
    execute, prepare_field, run_experiment, write_outputs, EpsRow, OutputLock, PreparedField, ResultRecord,
    VerdictEntry, REPORT_NOTE,
};
pub use scaling::{scaling_invariance_suite, ScalingReport};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coeff::{FamilyKind, FamilySpec};
use crate::error::{Error, Result};
use crate::pde::BoundaryData;

fn default_radius() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

impl BoundarySection {
    pub fn data(&self) -> BoundaryData {
        BoundaryData {
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]
}

fn default_cell_n() -> usize {
    256
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_cell_n")]
    pub cell_n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fixed mesh size; must satisfy `h ≤ min(ε/8, 1/64)` on every rung.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            epsilons: default_epsilons(),
            cell_n: default_cell_n(),
            seed: 0,
            h: None,
            workers: 1,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default = "yes")]
    pub persistence: bool,
    #[serde(default = "yes")]
    pub reduction: bool,
    #[serde(default = "yes")]
    pub low_index: bool,
    #[serde(default = "yes")]
    pub count: bool,
    #[serde(default = "yes")]
    pub convergence: bool,
    #[serde(default = "ChecksSection::default_ell")]
    pub ell: u32,
    #[serde(default = "ChecksSection::default_cap")]
    pub cap: u32,
    #[serde(default = "ChecksSection::default_delta0")]
    pub delta0: f64,
    #[serde(default = "ChecksSection::default_delta1")]
    pub delta1: f64,
    /// Outer radius `r` of the persistence and reduction checks.
    #[serde(default = "ChecksSection::default_radius")]
    pub radius: f64,
    #[serde(default = "ChecksSection::default_rungs")]
    pub profile_rungs: usize,
}

impl ChecksSection {
    fn default_ell() -> u32 {
        2
    }
    fn default_cap() -> u32 {
        4
    }
    fn default_delta0() -> f64 {
        0.25
    }
    fn default_delta1() -> f64 {
        0.5
    }
    fn default_radius() -> f64 {
        1.0
    }
    fn default_rungs() -> usize {
        4
    }
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            persistence: true,
            reduction: true,
            low_index: true,
            count: true,
            convergence: true,
            ell: 2,
            cap: 4,
            delta0: 0.25,
            delta1: 0.5,
            radius: 1.0,
            profile_rungs: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "OutputSection::default_dir")]
    pub dir: PathBuf,
}

impl OutputSection {
    fn default_dir() -> PathBuf {
        PathBuf::from("results")
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: Self::default_dir(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub coefficient: FamilySpec,
    pub boundary: BoundarySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Serialize)]
struct SemanticView<'a> {
    coefficient: &'a FamilySpec,
    boundary: &'a BoundarySection,
    epsilons: &'a [f64],
    cell_n: usize,
    seed: u64,
    h: Option<f64>,
    checks: &'a ChecksSection,
}

impl ExperimentConfig {
    pub fn new(coefficient: FamilySpec, g: BoundaryData, radius: f64) -> Self {
        ExperimentConfig {
            coefficient,
            boundary: BoundarySection {
                a: g.a,
                b: g.b,
                radius,
            },
            sweep: SweepSection::default(),
            checks: ChecksSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let eps = &self.sweep.epsilons;
        if eps.is_empty() {
            return Err(Error::Config("epsilon ladder is empty".into()));
        }
        for &e in eps {
            if !(e > 0.0 && e <= 1.0) || e.log2().fract() != 0.0 {
                return Err(Error::Config(format!("epsilon {e} is not a dyadic value in (0, 1]")));
            }
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilon ladder must be strictly decreasing".into()));
        }
        if self.sweep.cell_n < 32 || !self.sweep.cell_n.is_power_of_two() {
            return Err(Error::Config(format!("cell_n must be a power of two >= 32, got {}", self.sweep.cell_n)));
        }
        if self.sweep.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(h) = self.sweep.h {
            let smallest = eps[eps.len() - 1];
            if !(h > 0.0) || h > crate::pde::default_mesh_size(smallest) {
                return Err(Error::Config(format!("mesh size {h} violates h <= min(eps/8, 1/64)")));
            }
        }
        self.boundary.data().validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.boundary.radius > 0.0) {
            return Err(Error::Config("boundary radius must be positive".into()));
        }
        let c = &self.checks;
        if c.ell == 0 || c.ell > c.cap || c.cap > 8 {
            return Err(Error::Config(format!("need 1 <= ell <= L <= 8 (ell = {}, L = {})", c.ell, c.cap)));
        }
        for d in [c.delta0, c.delta1] {
            if !(d > 0.0 && d <= 0.5) {
                return Err(Error::Config(format!("delta {d} outside (0, 1/2]")));
            }
        }
        if !(c.radius > 0.0 && c.radius <= self.boundary.radius) || c.profile_rungs == 0 {
            return Err(Error::Config("check radius must lie in (0, R] and profile_rungs >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the semantic fields (output paths
    /// and worker counts excluded; keys sorted).
    pub fn hash(&self) -> String {
        let view = SemanticView {
            coefficient: &self.coefficient,
            boundary: &self.boundary,
            epsilons: &self.sweep.epsilons,
            cell_n: self.sweep.cell_n,
            seed: self.sweep.seed,
            h: self.sweep.h,
            checks: &self.checks,
        };
        let value = serde_json::to_value(&view).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short label used for output subdirectories.
    pub fn label(&self) -> String {
        let g = self.boundary.data();
        format!("{}-l{}", self.coefficient.family.name(), g.leading_degree())
    }
}

/// Five families × three boundary data (`cos θ`, `cos 2θ`, `cos 3θ`) × the
/// default ε ladder, on `B(0, 2)`.
pub fn default_sweep() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for family in FamilyKind::ALL {
        for l in 1..=3 {
            out.push(ExperimentConfig::new(FamilySpec::default_for(family), BoundaryData::cos(l), 2.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[coefficient]
family = "laminate"
params = [2.0, 1.0]

[boundary]
a = [0.0, 0.0, 1.0]

[sweep]
epsilons = [0.125, 0.0625]
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.boundary.radius, 2.0);
        assert_eq!(cfg.sweep.cell_n, 256);
        assert!(cfg.checks.persistence);
        assert_eq!(cfg.label(), "laminate-l2");
    }

    #[test]
    fn hash_ignores_key_order_and_output() {
        let reordered = r#"
[sweep]
epsilons = [0.125, 0.0625]

[boundary]
a = [0.0, 0.0, 1.0]

[coefficient]
params = [2.0, 1.0]
family = "laminate"

[output]
dir = "elsewhere"
"#;
        let a = ExperimentConfig::from_toml(SAMPLE).unwrap();
        let b = ExperimentConfig::from_toml(reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.sweep.seed = 7;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_invalid_ladders_and_checks() {
        let dup = SAMPLE.replace("[0.125, 0.0625]", "[0.125, 0.125]");
        assert!(matches!(ExperimentConfig::from_toml(&dup), Err(Error::Config(_))));
        let odd = SAMPLE.replace("[0.125, 0.0625]", "[0.3]");
        assert!(ExperimentConfig::from_toml(&odd).is_err());
        let bad = format!("{SAMPLE}\n[checks]\nell = 5\ncap = 4\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let unknown = format!("{SAMPLE}\n[checks]\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
    }

    #[test]
    fn default_sweep_covers_families_and_data() {
        let s = default_sweep();
        assert_eq!(s.len(), 15);
        assert!(s.iter().all(|c| c.validate().is_ok()));
    }
}
