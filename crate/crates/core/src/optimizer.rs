//! Penalized distortion minimization along a coarse-to-fine solution path.
//!
//! Each stage runs line-searched gradient descent on the anchor coordinates
//! of one anchor system, with both images smoothed at the stage's cutoff.
//! The contrast parameters are refit in closed form at every evaluation, so
//! the descent sees the color distortion already minimized over `(a, b)`.

use serde::{Deserialize, Serialize};

use crate::anchor::{even_anchor_system, lift_anchors, AnchorSystem};
use crate::config::{SolveConfig, StageConfig, View};
use crate::distortion::{
    canvas_distortion_points, color_residual, optimal_affine, AffineColor, SoftWorkspace,
};
use crate::error::{Error, Result};
use crate::lattice::{identity_transform, CanvasLattice, CanvasTransform};
use crate::raster::{sample_into, sample_with_gradient_into, DigitalImage, SmoothImage};

/// Stage objective terms at one iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub objective: f64,
    pub color: f64,
    pub canvas_soft: f64,
    pub affine: AffineColor,
}

/// The objective of one stage as a function of the anchor coordinates.
pub struct StageObjective<'a> {
    reference: Vec<f64>,
    moving: &'a SmoothImage,
    system: &'a AnchorSystem,
    lattice: &'a CanvasLattice,
    color_weight: f64,
    canvas_weight: f64,
    soft_power: f64,
    nonnegative: bool,
    full: Vec<[f64; 2]>,
    samples: Vec<f64>,
    sample_grads: Vec<[f64; 2]>,
    soft: SoftWorkspace,
    canvas_grad: Vec<[f64; 2]>,
    grid_grad: Vec<[f64; 2]>,
}

impl<'a> StageObjective<'a> {
    /// `reference` is sampled at the identity grid once; `moving` is
    /// resampled at `W·α̂` on every evaluation.
    pub fn new(
        reference: &SmoothImage,
        moving: &'a SmoothImage,
        system: &'a AnchorSystem,
        lattice: &'a CanvasLattice,
        mode: View,
        mu: f64,
        config: &SolveConfig,
    ) -> Self {
        let id = identity_transform(system.rows(), system.cols());
        let mut ref_samples = Vec::new();
        sample_into(reference, id.points(), &mut ref_samples);
        Self::with_reference_samples(ref_samples, moving, system, lattice, mode, mu, config)
    }

    pub(crate) fn with_reference_samples(
        reference: Vec<f64>,
        moving: &'a SmoothImage,
        system: &'a AnchorSystem,
        lattice: &'a CanvasLattice,
        mode: View,
        mu: f64,
        config: &SolveConfig,
    ) -> Self {
        let (color_weight, canvas_weight) = match mode {
            View::Dc => (mu, 1.0),
            View::Dv => (1.0, mu),
        };
        Self {
            reference,
            moving,
            system,
            lattice,
            color_weight,
            canvas_weight,
            soft_power: config.soft_power,
            nonnegative: config.nonnegative_contrast,
            full: Vec::new(),
            samples: Vec::new(),
            sample_grads: Vec::new(),
            soft: SoftWorkspace::default(),
            canvas_grad: Vec::new(),
            grid_grad: Vec::new(),
        }
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn value(&mut self, anchors: &[[f64; 2]]) -> ObjectiveTerms {
        self.system.apply_into(anchors, &mut self.full);
        sample_into(self.moving, &self.full, &mut self.samples);
        let affine = optimal_affine(&self.reference, &self.samples, self.nonnegative);
        let color = color_residual(&self.reference, &self.samples, affine);
        let canvas_soft = self
            .soft
            .eval(&self.full, self.lattice, self.soft_power, None);
        ObjectiveTerms {
            objective: self.color_weight * color + self.canvas_weight * canvas_soft,
            color,
            canvas_soft,
            affine,
        }
    }

    /// Objective terms and the gradient with respect to the anchors.
    pub fn value_and_gradient(
        &mut self,
        anchors: &[[f64; 2]],
        grad: &mut Vec<[f64; 2]>,
    ) -> ObjectiveTerms {
        self.system.apply_into(anchors, &mut self.full);
        sample_with_gradient_into(
            self.moving,
            &self.full,
            &mut self.samples,
            &mut self.sample_grads,
        );
        let affine = optimal_affine(&self.reference, &self.samples, self.nonnegative);
        let canvas_soft = self.soft.eval(
            &self.full,
            self.lattice,
            self.soft_power,
            Some(&mut self.canvas_grad),
        );
        // (a, b) is the exact inner minimizer, so only the explicit
        // dependence on the samples contributes.
        self.grid_grad.clear();
        let mut color = 0.0;
        for (k, (&r, &m)) in self.reference.iter().zip(&self.samples).enumerate() {
            let res = affine.apply(m) - r;
            color += res * res;
            let w = self.color_weight * 2.0 * affine.a * res;
            let sg = self.sample_grads[k];
            let cg = self.canvas_grad[k];
            self.grid_grad.push([
                w * sg[0] + self.canvas_weight * cg[0],
                w * sg[1] + self.canvas_weight * cg[1],
            ]);
        }
        self.system.pull_back_into(&self.grid_grad, grad);
        ObjectiveTerms {
            objective: self.color_weight * color + self.canvas_weight * canvas_soft,
            color,
            canvas_soft,
            affine,
        }
    }
}

/// Records the transformation flow across all stages of one solve.
#[derive(Debug, Clone)]
pub struct FlowRecorder {
    record: bool,
    stride: usize,
    iteration: usize,
    last_recorded: usize,
    frames: Vec<CanvasTransform>,
}

impl FlowRecorder {
    pub fn new(record: bool, stride: usize, identity: CanvasTransform) -> Self {
        Self {
            record,
            stride: stride.max(1),
            iteration: 0,
            last_recorded: 0,
            frames: vec![identity],
        }
    }

    fn step(&mut self, full: impl FnOnce() -> CanvasTransform) {
        self.iteration += 1;
        if self.record && self.iteration.is_multiple_of(self.stride) {
            self.frames.push(full());
            self.last_recorded = self.iteration;
        }
    }

    fn finish(mut self, last: &CanvasTransform) -> Vec<CanvasTransform> {
        if self.last_recorded != self.iteration {
            self.frames.push(last.clone());
        } else if let Some(f) = self.frames.last_mut() {
            *f = last.clone();
        }
        self.frames
    }

    /// Accepted descent steps so far, over all stages.
    pub fn iterations(&self) -> usize {
        self.iteration
    }
}

/// Outcome of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub anchors: Vec<[f64; 2]>,
    pub affine: AffineColor,
    pub iterations: usize,
    /// Objective before the first step and after every accepted step.
    pub trace: Vec<f64>,
    pub final_objective: f64,
}

/// Line-searched gradient descent on one stage.
///
/// Each step starts from a trial displacement of at most `initial_step` grid
/// units for the fastest-moving anchor and halves until the Armijo condition
/// holds, so the objective trace never increases.
#[allow(clippy::too_many_arguments)]
pub fn solve_stage(
    reference: &SmoothImage,
    moving: &SmoothImage,
    system: &AnchorSystem,
    lattice: &CanvasLattice,
    stage: &StageConfig,
    init: &[[f64; 2]],
    config: &SolveConfig,
    flow: &mut FlowRecorder,
) -> Result<StageResult> {
    let mut objective =
        StageObjective::new(reference, moving, system, lattice, config.mode, stage.mu, config);
    run_stage(&mut objective, system, stage, 0, init, config, flow)
}

fn run_stage(
    objective: &mut StageObjective<'_>,
    system: &AnchorSystem,
    stage: &StageConfig,
    stage_index: usize,
    init: &[[f64; 2]],
    config: &SolveConfig,
    flow: &mut FlowRecorder,
) -> Result<StageResult> {
    if init.len() != system.anchor_count() {
        return Err(Error::InvalidInput(format!(
            "stage {stage_index}: expected {} initial anchors, got {}",
            system.anchor_count(),
            init.len()
        )));
    }
    if init.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "stage {stage_index}: initial anchors are not finite"
        )));
    }
    let mut x = init.to_vec();
    let mut grad = Vec::new();
    let mut terms = objective.value_and_gradient(&x, &mut grad);
    if !terms.objective.is_finite() {
        return Err(Error::Diverged {
            stage: stage_index,
            iteration: 0,
            objective: terms.objective,
        });
    }
    let mut trace = vec![terms.objective];
    let mut trial = vec![[0.0; 2]; x.len()];
    let mut step = config.initial_step;
    let mut iterations = 0;

    while iterations < stage.max_iterations {
        let gmax = grad.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let gnorm2: f64 = grad.iter().flatten().map(|g| g * g).sum();

        let mut displacement = step.min(config.initial_step);
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let t = displacement / gmax;
            for ((o, p), g) in trial.iter_mut().zip(&x).zip(&grad) {
                *o = [p[0] - t * g[0], p[1] - t * g[1]];
            }
            let f = objective.value(&trial).objective;
            if f.is_finite() && f <= terms.objective - config.armijo * t * gnorm2 {
                accepted = Some(displacement);
                break;
            }
            displacement *= 0.5;
        }
        let Some(displacement) = accepted else {
            break;
        };
        std::mem::swap(&mut x, &mut trial);
        step = 2.0 * displacement;
        iterations += 1;
        terms = objective.value_and_gradient(&x, &mut grad);
        if !terms.objective.is_finite() {
            return Err(Error::Diverged {
                stage: stage_index,
                iteration: iterations,
                objective: terms.objective,
            });
        }
        trace.push(terms.objective);
        flow.step(|| {
            let mut full = Vec::new();
            system.apply_into(&x, &mut full);
            CanvasTransform::from_points_unchecked(full)
        });

        let k = trace.len() - 1;
        if k >= config.patience {
            let old = trace[k - config.patience];
            let decrease = old - terms.objective;
            if decrease <= config.tolerance * old.abs().max(1e-12) {
                break;
            }
        }
    }

    Ok(StageResult {
        anchors: x,
        affine: terms.affine,
        iterations,
        final_objective: terms.objective,
        trace,
    })
}

/// Per-stage summary kept in a [`DistanceResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub anchors: usize,
    pub cutoff: f64,
    pub mu: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub mode: View,
    /// Color distortion at the final transform, best contrast fit, finest blur.
    pub dc_value: f64,
    /// Canvas distortion (hard maximum) at the final transform.
    pub dv_value: f64,
    /// Final penalized objective of the last stage (uses the surrogate).
    pub final_objective: f64,
    pub affine: AffineColor,
    pub anchors: Vec<[f64; 2]>,
    pub transform: CanvasTransform,
    /// Starts at the identity and ends at `transform`.
    pub flow: Vec<CanvasTransform>,
    pub stages: Vec<StageDiagnostics>,
    /// Accepted descent steps over all stages.
    pub iterations: usize,
}

impl DistanceResult {
    pub fn distance(&self) -> f64 {
        match self.mode {
            View::Dc => self.dc_value,
            View::Dv => self.dv_value,
        }
    }
}

/// Precomputed lattice and anchor systems for solving many pairs of one size.
#[derive(Debug, Clone)]
pub struct SolvePlan {
    rows: usize,
    cols: usize,
    config: SolveConfig,
    lattice: CanvasLattice,
    systems: Vec<AnchorSystem>,
    identity: CanvasTransform,
}

impl SolvePlan {
    pub fn new(rows: usize, cols: usize, config: &SolveConfig) -> Result<Self> {
        config.validate()?;
        let lattice = CanvasLattice::new(rows, cols)?;
        let systems = config
            .stages
            .iter()
            .map(|s| even_anchor_system(rows, cols, s.anchors))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows,
            cols,
            config: config.clone(),
            lattice,
            systems,
            identity: identity_transform(rows, cols),
        })
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    pub fn lattice(&self) -> &CanvasLattice {
        &self.lattice
    }

    pub fn systems(&self) -> &[AnchorSystem] {
        &self.systems
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check(&self, image: &DigitalImage) -> Result<()> {
        if image.dims() != (self.rows, self.cols) {
            return Err(Error::SizeMismatch {
                expected: (self.rows, self.cols),
                found: image.dims(),
            });
        }
        Ok(())
    }

    /// Distance used for nearest-neighbour search: the forward distance, plus
    /// the reverse one when the configuration is symmetric.
    pub fn pair_distance(&self, reference: &DigitalImage, moving: &DigitalImage) -> Result<f64> {
        let forward = self.solve(reference, moving)?.distance();
        if !self.config.symmetric {
            return Ok(forward);
        }
        Ok(forward + self.solve(moving, reference)?.distance())
    }

    /// Transforms `moving` toward `reference` along the whole path.
    pub fn solve(&self, reference: &DigitalImage, moving: &DigitalImage) -> Result<DistanceResult> {
        self.check(reference)?;
        self.check(moving)?;
        let config = &self.config;
        let mut flow = FlowRecorder::new(config.record_flow, config.flow_stride, self.identity.clone());
        let mut anchors = self.systems[0].identity_anchors();
        let mut diagnostics = Vec::with_capacity(self.systems.len());
        let mut last = None;

        for (k, (stage, system)) in config.stages.iter().zip(&self.systems).enumerate() {
            if k > 0 {
                anchors = lift_anchors(&self.systems[k - 1], &anchors, system);
            }
            let reference_s = SmoothImage::new(reference.clone(), stage.cutoff)?;
            let moving_s = SmoothImage::new(moving.clone(), stage.cutoff)?;
            let mut objective = StageObjective::new(
                &reference_s,
                &moving_s,
                system,
                &self.lattice,
                config.mode,
                stage.mu,
                config,
            );
            let result = run_stage(&mut objective, system, stage, k, &anchors, config, &mut flow)?;
            diagnostics.push(StageDiagnostics {
                anchors: stage.anchors,
                cutoff: stage.cutoff,
                mu: stage.mu,
                iterations: result.iterations,
                trace: result.trace.clone(),
            });
            anchors = result.anchors.clone();
            last = Some(result);
        }
        let last = last.expect("validated path has at least one stage");

        let system = self.systems.last().expect("nonempty");
        let mut full = Vec::new();
        system.apply_into(&anchors, &mut full);
        let transform = CanvasTransform::from_points_unchecked(full);
        let cutoff = config.stages.last().expect("nonempty").cutoff;
        let (dc_value, affine) = hard_color_distortion(
            reference,
            moving,
            &transform,
            cutoff,
            config.nonnegative_contrast,
        )?;
        let dv_value = canvas_distortion_points(transform.points(), &self.lattice);
        let iterations = flow.iterations();
        let flow = flow.finish(&transform);

        Ok(DistanceResult {
            mode: config.mode,
            dc_value,
            dv_value,
            final_objective: last.final_objective,
            affine,
            anchors,
            transform,
            flow,
            stages: diagnostics,
            iterations,
        })
    }
}

/// Color distortion of `moving ∘ transform` against `reference` at the
/// identity, with the best contrast fit.
pub fn hard_color_distortion(
    reference: &DigitalImage,
    moving: &DigitalImage,
    transform: &CanvasTransform,
    cutoff: f64,
    nonnegative: bool,
) -> Result<(f64, AffineColor)> {
    let reference_s = SmoothImage::new(reference.clone(), cutoff)?;
    let moving_s = SmoothImage::new(moving.clone(), cutoff)?;
    let id = identity_transform(reference.rows(), reference.cols());
    let mut r = Vec::new();
    sample_into(&reference_s, id.points(), &mut r);
    let mut m = Vec::new();
    sample_into(&moving_s, transform.points(), &mut m);
    let affine = optimal_affine(&r, &m, nonnegative);
    Ok((color_residual(&r, &m, affine), affine))
}

/// Runs the whole path, deforming `moving` toward `reference`.
pub fn solve_path(
    reference: &DigitalImage,
    moving: &DigitalImage,
    config: &SolveConfig,
) -> Result<DistanceResult> {
    if reference.dims() != moving.dims() {
        return Err(Error::SizeMismatch {
            expected: reference.dims(),
            found: moving.dims(),
        });
    }
    SolvePlan::new(reference.rows(), reference.cols(), config)?.solve(reference, moving)
}

/// Color distortion after minimization in the DC view.
pub fn dc_distance(reference: &DigitalImage, moving: &DigitalImage, config: &SolveConfig) -> Result<f64> {
    let mut c = config.clone();
    c.mode = View::Dc;
    Ok(solve_path(reference, moving, &c)?.dc_value)
}

/// Canvas distortion after minimization in the DV view.
pub fn dv_distance(reference: &DigitalImage, moving: &DigitalImage, config: &SolveConfig) -> Result<f64> {
    let mut c = config.clone();
    c.mode = View::Dv;
    Ok(solve_path(reference, moving, &c)?.dv_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::build_anchor_system;
    use crate::raster::smooth;

    fn blob(rows: usize, cols: usize, center: (f64, f64), radius: f64) -> DigitalImage {
        let px = (0..rows * cols)
            .map(|k| {
                let (i, j) = ((k / cols) as f64, (k % cols) as f64);
                let d = ((i - center.0).powi(2) + (j - center.1).powi(2)).sqrt();
                (1.0 - (d - radius).max(0.0)).clamp(0.0, 1.0)
            })
            .collect();
        DigitalImage::new(rows, cols, px).unwrap()
    }

    fn small_config(mode: View) -> SolveConfig {
        let mut c = SolveConfig::for_size(12, mode);
        for s in &mut c.stages {
            s.max_iterations = 100;
        }
        c
    }

    #[test]
    fn identical_images_need_no_steps() {
        let img = blob(12, 12, (5.0, 6.0), 2.5);
        let c = small_config(View::Dc);
        let r = solve_path(&img, &img, &c).unwrap();
        assert!(r.dc_value <= 1e-6, "dc {}", r.dc_value);
        assert!(r.dv_value <= 1e-6);
        assert!(r.iterations <= 1);
        assert!(r.flow.first().unwrap().max_abs_diff(&identity_transform(12, 12)) < 1e-9);
        assert_eq!(r.flow.last().unwrap(), &r.transform);
    }

    #[test]
    fn translation_is_recovered_with_little_distortion() {
        let reference = blob(16, 16, (8.0, 8.0), 3.0);
        let moving = blob(16, 16, (8.0, 5.0), 3.0);
        let system = build_anchor_system(16, 16, &[0, 15], &[0, 15]).unwrap();
        let lattice = CanvasLattice::new(16, 16).unwrap();
        let stage = StageConfig { anchors: 2, cutoff: 3.0, mu: 1.0, max_iterations: 200 };
        let c = small_config(View::Dc);
        let rs = smooth(&reference, 3.0).unwrap();
        let ms = smooth(&moving, 3.0).unwrap();
        let mut flow = FlowRecorder::new(false, 1, identity_transform(16, 16));
        let init = system.identity_anchors();
        let out = solve_stage(&rs, &ms, &system, &lattice, &stage, &init, &c, &mut flow).unwrap();
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));

        let full = crate::anchor::apply_anchors(&system, &out.anchors).unwrap();
        let dc0 = hard_color_distortion(&reference, &moving, &identity_transform(16, 16), 3.0, false).unwrap().0;
        let dc1 = hard_color_distortion(&reference, &moving, &full, 3.0, false).unwrap().0;
        assert!(dc1 < dc0);
        assert!(canvas_distortion_points(full.points(), &lattice) <= 1e-3);
    }

    #[test]
    fn flow_stride_counts() {
        let reference = blob(12, 12, (6.0, 6.0), 2.0);
        let moving = blob(12, 12, (5.0, 4.0), 2.5);
        let mut c = small_config(View::Dc);
        c.record_flow = true;
        c.flow_stride = 5;
        let r = solve_path(&reference, &moving, &c).unwrap();
        assert!(r.iterations > 0);
        assert_eq!(r.flow.len(), r.iterations.div_ceil(5) + 1);
        assert_eq!(r.flow[0], identity_transform(12, 12));
        assert_eq!(r.flow.last().unwrap(), &r.transform);

        c.flow_stride = 1;
        let r1 = solve_path(&reference, &moving, &c).unwrap();
        assert_eq!(r1.flow.len(), r1.iterations + 1);
    }

    #[test]
    fn solves_are_deterministic() {
        let reference = blob(12, 12, (6.0, 6.0), 2.0);
        let moving = blob(12, 12, (4.0, 7.0), 3.0);
        let c = small_config(View::Dv);
        let a = solve_path(&reference, &moving, &c).unwrap();
        let b = solve_path(&reference, &moving, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let a = DigitalImage::zeros(12, 12);
        let b = DigitalImage::zeros(12, 10);
        assert!(matches!(
            solve_path(&a, &b, &small_config(View::Dc)),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn bad_init_is_rejected() {
        let img = blob(8, 8, (4.0, 4.0), 2.0);
        let s = smooth(&img, 1.0).unwrap();
        let system = build_anchor_system(8, 8, &[0, 7], &[0, 7]).unwrap();
        let lattice = CanvasLattice::new(8, 8).unwrap();
        let stage = StageConfig { anchors: 2, cutoff: 1.0, mu: 1.0, max_iterations: 10 };
        let c = small_config(View::Dc);
        let mut flow = FlowRecorder::new(false, 1, identity_transform(8, 8));
        let err = solve_stage(&s, &s, &system, &lattice, &stage, &[[0.0, 0.0]], &c, &mut flow);
        assert!(err.is_err());
        let nan = vec![[f64::NAN, 0.0]; 4];
        let err = solve_stage(&s, &s, &system, &lattice, &stage, &nan, &c, &mut flow).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
