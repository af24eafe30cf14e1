//! Solver configuration and its TOML file form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchor::anchor_sizes;
use crate::error::{Error, Result};

/// Which distortion is minimized and which one is penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    /// Minimize color distortion among low-distortion canvases:
    /// objective `D_V + μ·D_C`.
    Dc,
    /// Minimize canvas distortion among best-matching canvases:
    /// objective `D_C + μ·D_V`.
    Dv,
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            View::Dc => "dc",
            View::Dv => "dv",
        })
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dc" => Ok(View::Dc),
            "dv" => Ok(View::Dv),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected dc or dv"))),
        }
    }
}

/// One `(anchor grid, blur radius)` stage of the solution path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    /// Anchor grid is `anchors × anchors`, evenly spaced, capped at the image size.
    pub anchors: usize,
    /// Kernel cutoff radius used to smooth both images during this stage.
    pub cutoff: f64,
    /// Penalty weight μ of this stage.
    pub mu: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub mode: View,
    /// Stop a stage once the relative objective decrease over `patience`
    /// iterations falls below this.
    #[serde(default = "defaults::tolerance")]
    pub tolerance: f64,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
    /// Largest anchor displacement (grid units) tried by the line search.
    #[serde(default = "defaults::initial_step")]
    pub initial_step: f64,
    #[serde(default = "defaults::armijo")]
    pub armijo: f64,
    #[serde(default = "defaults::max_backtracks")]
    pub max_backtracks: usize,
    /// Exponent of the p-norm surrogate for the canvas distortion.
    #[serde(default = "defaults::soft_power")]
    pub soft_power: f64,
    /// Restrict the contrast scale `a` to be nonnegative.
    #[serde(default)]
    pub nonnegative_contrast: bool,
    /// Nearest-neighbour distances add the reverse solve (reference deformed
    /// toward moving) to the forward one.
    #[serde(default)]
    pub symmetric: bool,
    #[serde(default)]
    pub record_flow: bool,
    #[serde(default = "defaults::flow_stride")]
    pub flow_stride: usize,
    pub stages: Vec<StageConfig>,
}

mod defaults {
    pub fn tolerance() -> f64 {
        1e-4
    }
    pub fn patience() -> usize {
        5
    }
    pub fn initial_step() -> f64 {
        0.5
    }
    pub fn armijo() -> f64 {
        1e-4
    }
    pub fn max_backtracks() -> usize {
        30
    }
    pub fn soft_power() -> f64 {
        8.0
    }
    pub fn flow_stride() -> usize {
        1
    }
}

/// Blur radii of the 28×28 path, coarse to fine.
const DEFAULT_RADII: [f64; 4] = [4.0, 2.5, 1.5, 1.0];
const DEFAULT_MAX_ITERATIONS: usize = 50;
const FULL_MAX_ITERATIONS: usize = 200;

impl SolveConfig {
    /// Default path for a 28×28 canvas: anchors 2, 4, 7 at radii 4, 2.5, 1.5.
    pub fn default_28(mode: View) -> Self {
        Self::for_size(28, mode)
    }

    /// Default path for an `size × size` canvas: anchor grids 2, 4 and
    /// `⌈size/4⌉` (kept strictly increasing and at most `size`), radii taken
    /// from the end of 4, 2.5, 1.5 scaled by `size / 28` (never below 1),
    /// μ = 1, 50 iterations per stage, symmetric nearest-neighbour distance.
    ///
    /// Finer grids let the canvas fold strokes onto each other, which hurts
    /// nearest-neighbour accuracy on digits; see [`SolveConfig::full_path`]
    /// for the path that ends at one anchor per pixel.
    pub fn for_size(size: usize, mode: View) -> Self {
        let size = size.max(2);
        let mut sizes: Vec<usize> = Vec::new();
        for a in [2, 4, size.div_ceil(4)] {
            let a = a.min(size);
            if sizes.last().is_none_or(|&l| a > l) {
                sizes.push(a);
            }
        }
        let radii = [4.0, 2.5, 1.5];
        let scale = size as f64 / 28.0;
        let n = sizes.len();
        let stages = sizes
            .iter()
            .enumerate()
            .map(|(t, &anchors)| StageConfig {
                anchors,
                cutoff: (radii[radii.len() - n + t] * scale).max(1.0),
                mu: 1.0,
                max_iterations: DEFAULT_MAX_ITERATIONS,
            })
            .collect();
        Self {
            symmetric: true,
            stages,
            ..Self::full_path(size, mode)
        }
    }

    /// Path ending at one anchor per pixel. Anchor sizes follow `3^i + 1`
    /// capped at `size`; radii are the finest entries of the 28×28 radius
    /// list scaled by `size / 28` (never below 1), with a cutoff of 1 at the
    /// last stage. μ decays by 10 per stage in the DC view and grows by 10
    /// per stage in the DV view.
    pub fn full_path(size: usize, mode: View) -> Self {
        let sizes = anchor_sizes(size.max(2));
        let scale = size as f64 / 28.0;
        let n = sizes.len();
        let stages = sizes
            .iter()
            .enumerate()
            .map(|(t, &anchors)| {
                // Align the finest stage with the finest default radius.
                let r = DEFAULT_RADII[(DEFAULT_RADII.len() + t).saturating_sub(n).min(3)];
                let cutoff = if t + 1 == n { 1.0 } else { (r * scale).max(1.0) };
                StageConfig {
                    anchors,
                    cutoff,
                    mu: stage_mu(mode, t),
                    max_iterations: FULL_MAX_ITERATIONS,
                }
            })
            .collect();
        Self {
            mode,
            tolerance: defaults::tolerance(),
            patience: defaults::patience(),
            initial_step: defaults::initial_step(),
            armijo: defaults::armijo(),
            max_backtracks: defaults::max_backtracks(),
            soft_power: defaults::soft_power(),
            nonnegative_contrast: false,
            symmetric: false,
            record_flow: false,
            flow_stride: defaults::flow_stride(),
            stages,
        }
    }

    /// Only the last stage, started from the identity.
    pub fn finest_only(&self) -> Self {
        let mut c = self.clone();
        c.stages = self.stages.last().copied().into_iter().collect();
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("solution path has no stages".into()));
        }
        for (k, s) in self.stages.iter().enumerate() {
            if s.anchors < 2 {
                return Err(Error::Config(format!("stage {k}: anchor grid size must be >= 2")));
            }
            if !(s.cutoff > 0.0 && s.cutoff.is_finite()) {
                return Err(Error::Config(format!("stage {k}: cutoff must be positive")));
            }
            if !(s.mu > 0.0 && s.mu.is_finite()) {
                return Err(Error::Config(format!("stage {k}: mu must be positive")));
            }
        }
        for (k, w) in self.stages.windows(2).enumerate() {
            if w[1].anchors < w[0].anchors || w[1].cutoff > w[0].cutoff {
                return Err(Error::Config(format!(
                    "stages {k} and {} are not ordered coarse to fine",
                    k + 1
                )));
            }
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("initial_step must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Config("armijo constant must lie in (0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if self.flow_stride == 0 {
            return Err(Error::Config("flow_stride must be >= 1".into()));
        }
        if !(self.soft_power >= 1.0 && self.soft_power.is_finite()) {
            return Err(Error::Config("soft_power must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: SolveConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// μ of stage `t`: 1 at the coarsest stage, divided by 10 per stage in the
/// DC view and multiplied by 10 per stage in the DV view.
fn stage_mu(mode: View, t: usize) -> f64 {
    match mode {
        View::Dc => 10f64.powi(-(t as i32)),
        View::Dv => 10f64.powi(t as i32),
    }
}
