//! Run configuration: JSON ingestion, validation, canonical hashing.
//!
//! Physical parameters carry no defaults; every coefficient the experiment
//! depends on must be stated in the file, so two configs that hash alike
//! describe the same run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dde_bounds::models::{
    build_duffing_system, build_gaussian_variant, build_tanh_variant, build_vdp_system,
    DelaySystem, MajorantConvention, OscillatorBase, OscillatorParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Vdp,
    Duffing,
    VdpGauss,
    DuffingGauss,
    VdpTanh,
    DuffingTanh,
}

impl ModelKind {
    pub fn base(self) -> OscillatorBase {
        match self {
            ModelKind::Vdp | ModelKind::VdpGauss | ModelKind::VdpTanh => OscillatorBase::VdpLike,
            _ => OscillatorBase::DuffingLike,
        }
    }

    /// Whether the scalar-bound pipeline applies (polynomial nonlinearity).
    pub fn has_majorant(self) -> bool {
        matches!(self, ModelKind::Vdp | ModelKind::Duffing)
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Vdp => "vdp",
            ModelKind::Duffing => "duffing",
            ModelKind::VdpGauss => "vdp_gauss",
            ModelKind::DuffingGauss => "duffing_gauss",
            ModelKind::VdpTanh => "vdp_tanh",
            ModelKind::DuffingTanh => "duffing_tanh",
        }
    }
}

/// Mirror of the oscillator parameters with units spelled out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    /// Damping coefficients (1/s).
    pub c1: f64,
    pub c2: f64,
    /// Stiffnesses (1/s^2).
    pub omega1_sq: f64,
    pub omega2_sq: f64,
    /// Coupling constant (1/s^2).
    pub d: f64,
    /// Perturbation amplitudes (1/s^2) and frequencies (rad/s).
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub r1: f64,
    pub r2: f64,
    pub s1: f64,
    pub s2: f64,
    /// Cubic scales on rows 2 and 4.
    pub mu1: f64,
    pub mu2: f64,
    /// Gaussian/tanh scales on rows 2 and 4.
    pub mu3: f64,
    pub mu4: f64,
    /// Forcing amplitude and frequency (rad/s).
    pub f0: f64,
    pub omega0: f64,
    /// Delays (s).
    pub h0: f64,
    pub h1: f64,
    /// Gaussian width and center.
    pub q: f64,
    pub x_center: f64,
    /// Saturation slopes.
    pub k1: f64,
    pub k2: f64,
}

impl From<ParamsConfig> for OscillatorParams {
    fn from(p: ParamsConfig) -> Self {
        OscillatorParams {
            c1: p.c1,
            c2: p.c2,
            omega1_sq: p.omega1_sq,
            omega2_sq: p.omega2_sq,
            d: p.d,
            a1: p.a1,
            a2: p.a2,
            b1: p.b1,
            b2: p.b2,
            r1: p.r1,
            r2: p.r2,
            s1: p.s1,
            s2: p.s2,
            mu1: p.mu1,
            mu2: p.mu2,
            mu3: p.mu3,
            mu4: p.mu4,
            f0: p.f0,
            omega0: p.omega0,
            h0: p.h0,
            h1: p.h1,
            q: p.q,
            x_center: p.x_center,
            k1: p.k1,
            k2: p.k2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConventionConfig {
    #[default]
    Coupled,
    General,
}

impl From<ConventionConfig> for MajorantConvention {
    fn from(c: ConventionConfig) -> Self {
        match c {
            ConventionConfig::Coupled => MajorantConvention::Coupled,
            ConventionConfig::General => MajorantConvention::General,
        }
    }
}

impl ConventionConfig {
    pub fn label(self) -> &'static str {
        match self {
            ConventionConfig::Coupled => "coupled",
            ConventionConfig::General => "general",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionConfig {
    #[default]
    Slice,
    MinOverTheta2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Angles per full circle; 96 gives the step pi/48.
    pub theta_divisions: usize,
    pub ray_weights: [f64; 2],
    pub rho_max: f64,
    pub tol_rho: f64,
    pub seed_radius: f64,
    #[serde(default)]
    pub projection_mode: ProjectionConfig,
    #[serde(default)]
    pub theta2_fixed: f64,
    #[serde(default = "default_theta2_divisions")]
    pub theta2_divisions: usize,
    /// Optional threshold sensitivity sweep; one boundary file per value.
    #[serde(default)]
    pub varpi_sweep: Option<Vec<f64>>,
}

fn default_theta2_divisions() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub params: ParamsConfig,
    pub k_depth: usize,
    /// Horizon T (s).
    pub horizon: f64,
    /// Fixed integration step (s).
    pub dt: f64,
    /// Exceedance threshold.
    pub varpi: f64,
    #[serde(default)]
    pub majorant_convention: ConventionConfig,
    /// Constant initial vector; required by simulate/cascade/bounds unless
    /// overridden on the command line.
    #[serde(default)]
    pub phi_s: Option<[f64; 4]>,
    pub sweep: SweepSection,
    pub output_dir: String,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| format!("config {}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        let p: OscillatorParams = self.params.into();
        p.validate().map_err(|e| e.to_string())?;
        if self.k_depth < 1 {
            return Err("k_depth must be at least 1".into());
        }
        if !(self.varpi > 0.0) {
            return Err("varpi must be positive".into());
        }
        if !(self.dt > 0.0) {
            return Err("dt must be positive".into());
        }
        if self.dt > self.params.h0.min(self.params.h1) {
            return Err(format!(
                "dt = {} must not exceed the smallest delay {}",
                self.dt,
                self.params.h0.min(self.params.h1)
            ));
        }
        if !(self.horizon > 0.0) {
            return Err("horizon must be positive".into());
        }
        let s = &self.sweep;
        if s.theta_divisions == 0 {
            return Err("sweep.theta_divisions must be positive".into());
        }
        if !(s.rho_max > s.seed_radius && s.seed_radius > 0.0) {
            return Err("sweep radii must satisfy 0 < seed_radius < rho_max".into());
        }
        if !(s.tol_rho > 0.0) {
            return Err("sweep.tol_rho must be positive".into());
        }
        Ok(())
    }

    pub fn build_system(&self) -> DelaySystem {
        let p: OscillatorParams = self.params.into();
        match self.model {
            ModelKind::Vdp => build_vdp_system(&p),
            ModelKind::Duffing => build_duffing_system(&p),
            ModelKind::VdpGauss | ModelKind::DuffingGauss => {
                build_gaussian_variant(&p, self.model.base())
            }
            ModelKind::VdpTanh | ModelKind::DuffingTanh => {
                build_tanh_variant(&p, self.model.base())
            }
        }
    }

    pub fn oscillator_params(&self) -> OscillatorParams {
        self.params.into()
    }

    /// Canonical serialization (fixed field order) used for hashing and the
    /// round-trip law.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn sample_config() -> RunConfig {
        RunConfig {
            model: ModelKind::Vdp,
            params: ParamsConfig {
                c1: 0.4,
                c2: 0.2,
                omega1_sq: 1.0,
                omega2_sq: 4.0,
                d: 0.1,
                a1: 0.1,
                a2: 0.1,
                b1: 0.1,
                b2: 0.1,
                r1: 3.14,
                r2: 6.15,
                s1: 3.1,
                s2: 6.28,
                mu1: 1.0,
                mu2: 1.0,
                mu3: 0.0,
                mu4: 0.0,
                f0: 0.0,
                omega0: 5.43,
                h0: 1.0,
                h1: 1.0,
                q: 1.0,
                x_center: 7.0,
                k1: 1.0,
                k2: 1.0,
            },
            k_depth: 6,
            horizon: 40.0,
            dt: 1e-3,
            varpi: 50.0,
            majorant_convention: ConventionConfig::Coupled,
            phi_s: Some([0.1, 0.0, 0.1, 0.0]),
            sweep: SweepSection {
                theta_divisions: 96,
                ray_weights: [1.0, 0.0],
                rho_max: 10.0,
                tol_rho: 1e-2,
                seed_radius: 1e-3,
                projection_mode: ProjectionConfig::Slice,
                theta2_fixed: 0.0,
                theta2_divisions: 12,
                varpi_sweep: None,
            },
            output_dir: "out".into(),
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = sample_config();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }

    #[test]
    fn hash_is_sensitive_to_physics() {
        let cfg = sample_config();
        let mut other = cfg.clone();
        other.params.mu1 = 2.0;
        assert_ne!(cfg.config_hash(), other.config_hash());
    }

    #[test]
    fn validation_rejects_large_step() {
        let mut cfg = sample_config();
        cfg.dt = 2.0;
        assert!(cfg.validate().unwrap_err().contains("smallest delay"));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = serde_json::to_string(&sample_config()).unwrap();
        let with_extra = text.replacen("{", "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<RunConfig>(&with_extra).is_err());
    }

    #[test]
    fn missing_physical_parameter_is_rejected() {
        let text = serde_json::to_string(&sample_config()).unwrap();
        let without_mu = text.replace("\"mu1\":1.0,", "");
        assert!(serde_json::from_str::<RunConfig>(&without_mu).is_err());
    }
}
