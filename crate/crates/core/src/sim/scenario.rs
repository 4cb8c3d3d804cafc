use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::controllers::Separation;
use crate::geometry::StrandKind;
use crate::mapping::Centerline;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    StopGoStop,
    /// Single integrators driven exactly along the reparameterized strands.
    ReparameterizeExact,
    /// Single integrators under the closed-loop optimal tracking law.
    ReparameterizeLq,
    /// Unicycles under the tracking law mapped to forward speed and turn rate.
    ReparameterizeUnicycle,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::StopGoStop,
        ControllerKind::ReparameterizeExact,
        ControllerKind::ReparameterizeLq,
        ControllerKind::ReparameterizeUnicycle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::StopGoStop => "stop-go-stop",
            ControllerKind::ReparameterizeExact => "reparameterize-exact",
            ControllerKind::ReparameterizeLq => "reparameterize-lq",
            ControllerKind::ReparameterizeUnicycle => "reparameterize-unicycle",
        }
    }

    /// Exact controllers reproduce their plan in closed form.
    pub fn is_exact(self) -> bool {
        matches!(self, ControllerKind::StopGoStop | ControllerKind::ReparameterizeExact)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ControllerKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown controller {s:?}; expected one of stop-go-stop, reparameterize-exact, reparameterize-lq, reparameterize-unicycle"))
    }
}

/// Where the braid is laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum RegionSpec {
    Rect { height: f64, length: f64 },
    /// Track given by a centerline and a width.
    Curved { centerline: Centerline, width: f64 },
    /// Explicit curved braid points, `columns[q][row]`, mapped from a
    /// `height` × `length` design rectangle.
    Quads { height: f64, length: f64, columns: Vec<Vec<[f64; 2]>> },
}

/// Scalar weights mean multiples of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Matrix([[f64; 2]; 2]),
}

impl Weight {
    pub fn matrix(&self) -> Matrix2<f64> {
        match *self {
            Weight::Scalar(s) => Matrix2::identity() * s,
            Weight::Matrix(m) => Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_q() -> Weight {
    Weight::Scalar(10.0)
}
fn default_r() -> Weight {
    Weight::Scalar(1.0)
}
fn default_kappa() -> f64 {
    5.0
}
fn default_inflation() -> f64 {
    1.0
}

/// A complete, self-describing simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub braid: String,
    pub agents: usize,
    /// Braced groups become single steps; otherwise letters are greedily
    /// packed into steps.
    #[serde(default = "default_true")]
    pub honor_braces: bool,
    pub region: RegionSpec,
    pub duration: f64,
    #[serde(default)]
    pub strand: StrandKind,
    pub controller: ControllerKind,
    pub separation: Separation,
    pub v_max: f64,
    #[serde(default = "default_q")]
    pub q: Weight,
    #[serde(default = "default_r")]
    pub r: Weight,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Integration step; `None` means `1e-3 · duration`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Initial unicycle heading (radians).
    #[serde(default)]
    pub initial_heading: f64,
    /// Factor applied to every `δ_jk` when planning (verification always
    /// uses the nominal values).
    #[serde(default = "default_inflation")]
    pub margin_inflation: f64,
    /// Braid-point tolerance override.
    #[serde(default)]
    pub waypoint_tolerance: Option<f64>,
}

impl Scenario {
    /// Rectangular-region scenario with default weights.
    pub fn rect(braid: &str, agents: usize, height: f64, length: f64, duration: f64, controller: ControllerKind, separation: f64, v_max: f64) -> Self {
        Scenario {
            name: String::new(),
            braid: braid.to_string(),
            agents,
            honor_braces: true,
            region: RegionSpec::Rect { height, length },
            duration,
            strand: StrandKind::Straight,
            controller,
            separation: Separation::Uniform(separation),
            v_max,
            q: default_q(),
            r: default_r(),
            kappa: default_kappa(),
            dt: None,
            seed: 0,
            initial_heading: 0.0,
            margin_inflation: 1.0,
            waypoint_tolerance: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_json(&text).map_err(|e| match e {
            SimError::Scenario(m) => SimError::Scenario(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios serialize")
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1e-3 * self.duration)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("scenarios serialize"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        if self.agents < 2 {
            return bad(format!("need at least 2 agents, got {}", self.agents));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.duration) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !positive(self.v_max) {
            return bad(format!("v_max must be positive, got {}", self.v_max));
        }
        if !positive(self.dt()) || self.dt() > self.duration {
            return bad(format!("dt must be in (0, duration], got {}", self.dt()));
        }
        if !positive(self.kappa) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !positive(self.margin_inflation) {
            return bad(format!("margin_inflation must be positive, got {}", self.margin_inflation));
        }
        self.separation.validate(self.agents).map_err(|e| SimError::Scenario(e.to_string()))?;
        match &self.region {
            RegionSpec::Rect { height, length } | RegionSpec::Quads { height, length, .. } => {
                if !positive(*height) || !positive(*length) {
                    return bad(format!("region dimensions must be positive, got {height} x {length}"));
                }
            }
            RegionSpec::Curved { width, .. } => {
                if !positive(*width) {
                    return bad(format!("track width must be positive, got {width}"));
                }
            }
        }
        if !matches!(self.region, RegionSpec::Rect { .. }) && self.controller == ControllerKind::StopGoStop {
            return bad("stop-go-stop needs a rectangular region".into());
        }
        Ok(())
    }
}
