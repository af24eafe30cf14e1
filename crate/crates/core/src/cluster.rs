//! Multi-flow clustering.
//!
//! Every member image `i` carries its own canvas transform `α_i`, and every
//! centroid `k` is a member image `M̄_k` with a transform `ᾱ_k`. Assignment
//! and joint descent on all transforms alternate along the solution path;
//! the objective is the within-cluster color distortion plus a canvas
//! distortion penalty on every transform.

use std::ops::RangeInclusive;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{even_anchor_system, lift_anchors, AnchorSystem};
use crate::classify::worker_pool;
use crate::config::{SolveConfig, View};
use crate::distortion::{color_residual, optimal_affine, AffineColor, SoftWorkspace};
use crate::error::{Error, Result};
use crate::lattice::CanvasLattice;
use crate::raster::{sample_into, sample_with_gradient_into, DigitalImage, SmoothImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Fit a contrast transform per member against its centroid.
    pub fit_color: bool,
    pub workers: usize,
}

impl ClusterOptions {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            restarts: 5,
            seed: 0,
            fit_color: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    /// Solution-path stage the anchors belong to.
    pub stage: usize,
    /// Image index of each centroid's base image.
    pub bases: Vec<usize>,
    pub centroid_anchors: Vec<Vec<[f64; 2]>>,
    pub member_anchors: Vec<Vec<[f64; 2]>>,
    pub assignments: Vec<usize>,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.bases.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    /// Base image of each archetype.
    pub bases: Vec<usize>,
    /// Within-cluster sum of color distortions at the final transforms.
    pub wcsd: f64,
    pub best_restart: usize,
    pub restart_wcsd: Vec<f64>,
    /// Penalized objective after every alternation of the best restart.
    pub trace: Vec<f64>,
    #[serde(skip)]
    pub archetypes: Vec<DigitalImage>,
    #[serde(skip)]
    pub state: Option<ClusterState>,
}

/// Orthonormal directions (flattened anchor space) along which a centroid
/// transform may not move: its mean grid position and its scale about the
/// canvas centre.
#[derive(Debug, Clone)]
struct Gauge {
    directions: Vec<Vec<f64>>,
}

impl Gauge {
    fn new(system: &AnchorSystem) -> Self {
        let a = system.anchor_count();
        let n = (system.rows() * system.cols()) as f64;
        let centre = [
            (system.rows() as f64 - 1.0) / 2.0,
            (system.cols() as f64 - 1.0) / 2.0,
        ];
        let mut mean = vec![0.0; a];
        let mut scale = vec![[0.0; 2]; a];
        for (p, row) in system.weights().iter().enumerate() {
            let id = [(p / system.cols()) as f64, (p % system.cols()) as f64];
            for &(j, w) in row.entries() {
                mean[j as usize] += w / n;
                scale[j as usize][0] += w * (id[0] - centre[0]);
                scale[j as usize][1] += w * (id[1] - centre[1]);
            }
        }
        let raw = [
            mean.iter().flat_map(|&m| [m, 0.0]).collect::<Vec<_>>(),
            mean.iter().flat_map(|&m| [0.0, m]).collect(),
            scale.iter().flat_map(|s| [s[0], s[1]]).collect(),
        ];
        let mut directions: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            for u in &directions {
                let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                v.iter_mut().for_each(|x| *x /= norm);
                directions.push(v);
            }
        }
        Self { directions }
    }

    fn project(&self, grad: &mut [[f64; 2]]) {
        for u in &self.directions {
            let d: f64 = grad.iter().flatten().zip(u).map(|(g, u)| g * u).sum();
            for (g, u) in grad.iter_mut().zip(u.chunks_exact(2)) {
                g[0] -= d * u[0];
                g[1] -= d * u[1];
            }
        }
    }
}

struct Sampled {
    samples: Vec<f64>,
    grads: Vec<[f64; 2]>,
    soft: f64,
    soft_grad: Vec<[f64; 2]>,
}

/// Gradient of the penalized objective, split by transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGradient {
    pub value: f64,
    pub members: Vec<Vec<[f64; 2]>>,
    pub centroids: Vec<Vec<[f64; 2]>>,
}

/// Precomputed per-stage data for clustering one image set.
pub struct Clusterer {
    images: Vec<DigitalImage>,
    config: SolveConfig,
    fit_color: bool,
    lattice: CanvasLattice,
    systems: Vec<AnchorSystem>,
    gauges: Vec<Gauge>,
    /// `smooth[stage][image]`.
    smooth: Vec<Vec<SmoothImage>>,
    /// Frozen-identity color distortion between images, finest stage.
    seeding: Vec<Vec<f64>>,
}

impl Clusterer {
    pub fn new(images: &[DigitalImage], config: &SolveConfig, fit_color: bool) -> Result<Self> {
        config.validate()?;
        let Some(first) = images.first() else {
            return Err(Error::InvalidInput("clustering needs at least one image".into()));
        };
        let (rows, cols) = first.dims();
        if let Some(bad) = images.iter().find(|im| im.dims() != (rows, cols)) {
            return Err(Error::SizeMismatch {
                expected: (rows, cols),
                found: bad.dims(),
            });
        }
        let lattice = CanvasLattice::new(rows, cols)?;
        let systems = config
            .stages
            .iter()
            .map(|s| even_anchor_system(rows, cols, s.anchors))
            .collect::<Result<Vec<_>>>()?;
        let gauges = systems.iter().map(Gauge::new).collect();
        let smooth = config
            .stages
            .iter()
            .map(|s| {
                images
                    .iter()
                    .map(|im| SmoothImage::new(im.clone(), s.cutoff))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut this = Self {
            images: images.to_vec(),
            config: config.clone(),
            fit_color,
            lattice,
            systems,
            gauges,
            smooth,
            seeding: Vec::new(),
        };
        let last = this.last_stage();
        let identity = this.systems[last].identity_anchors();
        let samples: Vec<Vec<f64>> = (0..images.len())
            .map(|i| this.sample(last, i, &identity))
            .collect();
        this.seeding = samples
            .iter()
            .map(|a| samples.iter().map(|b| this.pair_distortion(a, b)).collect())
            .collect();
        Ok(this)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn last_stage(&self) -> usize {
        self.systems.len() - 1
    }

    /// Penalty weight on canvas distortion at `stage`, relative to a unit
    /// weight on color distortion.
    pub fn canvas_weight(&self, stage: usize) -> f64 {
        let mu = self.config.stages[stage].mu;
        match self.config.mode {
            View::Dc => 1.0 / mu,
            View::Dv => mu,
        }
    }

    fn sample(&self, stage: usize, image: usize, anchors: &[[f64; 2]]) -> Vec<f64> {
        let mut full = Vec::new();
        self.systems[stage].apply_into(anchors, &mut full);
        let mut out = Vec::new();
        sample_into(&self.smooth[stage][image], &full, &mut out);
        out
    }

    fn sample_full(&self, stage: usize, image: usize, anchors: &[[f64; 2]], grad: bool) -> Sampled {
        let mut full = Vec::new();
        self.systems[stage].apply_into(anchors, &mut full);
        let mut samples = Vec::new();
        let mut grads = Vec::new();
        let mut soft_grad = Vec::new();
        let mut ws = SoftWorkspace::default();
        let soft = if grad {
            sample_with_gradient_into(&self.smooth[stage][image], &full, &mut samples, &mut grads);
            ws.eval(&full, &self.lattice, self.config.soft_power, Some(&mut soft_grad))
        } else {
            sample_into(&self.smooth[stage][image], &full, &mut samples);
            ws.eval(&full, &self.lattice, self.config.soft_power, None)
        };
        Sampled {
            samples,
            grads,
            soft,
            soft_grad,
        }
    }

    fn member_affine(&self, centroid: &[f64], member: &[f64]) -> AffineColor {
        if self.fit_color {
            optimal_affine(centroid, member, self.config.nonnegative_contrast)
        } else {
            AffineColor::IDENTITY
        }
    }

    /// Color distortion between a centroid's and a member's samples.
    fn pair_distortion(&self, centroid: &[f64], member: &[f64]) -> f64 {
        color_residual(centroid, member, self.member_affine(centroid, member))
    }

    /// `dc[i][k]`: color distortion of member `i` against centroid `k`.
    pub fn distortion_table(&self, state: &ClusterState) -> Vec<Vec<f64>> {
        let centroids: Vec<Vec<f64>> = state
            .bases
            .iter()
            .zip(&state.centroid_anchors)
            .map(|(&b, a)| self.sample(state.stage, b, a))
            .collect();
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let s = self.sample(state.stage, i, &state.member_anchors[i]);
                centroids.iter().map(|c| self.pair_distortion(c, &s)).collect()
            })
            .collect()
    }

    /// Within-cluster sum of color distortions under the current assignments.
    pub fn wcsd(&self, state: &ClusterState) -> f64 {
        let table = self.distortion_table(state);
        state
            .assignments
            .iter()
            .enumerate()
            .map(|(i, &k)| table[i][k])
            .sum()
    }

    /// Identity-transform state with the given centroid bases and
    /// assignments, at `stage`.
    pub fn initial_state(&self, stage: usize, bases: Vec<usize>, assignments: Vec<usize>) -> ClusterState {
        let id = self.systems[stage].identity_anchors();
        ClusterState {
            stage,
            centroid_anchors: vec![id.clone(); bases.len()],
            member_anchors: vec![id; self.len()],
            bases,
            assignments,
        }
    }

    /// Moves every member to its closest centroid (lowest index on ties) and
    /// repairs empty clusters. Returns whether any assignment changed.
    pub fn assign_step(&self, state: &mut ClusterState) -> bool {
        let table = self.distortion_table(state);
        let mut assignments = assign_from_table(&table);
        let identity = self.systems[state.stage].identity_anchors();
        loop {
            let mut sizes = vec![0usize; state.k()];
            for &a in &assignments {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            // Reseed with the member farthest from its own centroid.
            let far = (0..self.len())
                .filter(|&i| sizes[assignments[i]] > 1)
                .fold(None, |best: Option<(usize, f64)>, i| {
                    let d = table[i][assignments[i]];
                    match best {
                        Some((_, bd)) if !(d > bd) => best,
                        _ => Some((i, d)),
                    }
                });
            let Some((i, _)) = far else {
                break;
            };
            state.bases[empty] = i;
            state.centroid_anchors[empty] = identity.clone();
            state.member_anchors[i] = identity.clone();
            assignments[i] = empty;
        }
        let changed = assignments != state.assignments;
        state.assignments = assignments;
        changed
    }

    /// Penalized objective at `state`.
    pub fn objective(&self, state: &ClusterState) -> f64 {
        self.evaluate(state, false).value
    }

    /// Penalized objective and its gradient with respect to every member
    /// and centroid anchor.
    pub fn gradient(&self, state: &ClusterState) -> ClusterGradient {
        self.evaluate(state, true)
    }

    fn evaluate(&self, state: &ClusterState, grad: bool) -> ClusterGradient {
        let stage = state.stage;
        let lambda = self.canvas_weight(stage);
        let members: Vec<Sampled> = (0..self.len())
            .into_par_iter()
            .map(|i| self.sample_full(stage, i, &state.member_anchors[i], grad))
            .collect();
        let centroids: Vec<Sampled> = (0..state.k())
            .into_par_iter()
            .map(|k| self.sample_full(stage, state.bases[k], &state.centroid_anchors[k], grad))
            .collect();

        let mut value = lambda
            * (members.iter().map(|m| m.soft).sum::<f64>()
                + centroids.iter().map(|c| c.soft).sum::<f64>());
        let n_px = self.lattice.vertex_count();
        let mut member_sample_grad = vec![Vec::new(); self.len()];
        let mut centroid_sample_grad = vec![vec![0.0; n_px]; state.k()];
        for (i, m) in members.iter().enumerate() {
            let k = state.assignments[i];
            let c = &centroids[k].samples;
            let chi = self.member_affine(c, &m.samples);
            let mut gi = Vec::with_capacity(if grad { n_px } else { 0 });
            for (p, (&s, &cv)) in m.samples.iter().zip(c).enumerate() {
                let res = chi.apply(s) - cv;
                value += res * res;
                if grad {
                    gi.push(2.0 * chi.a * res);
                    centroid_sample_grad[k][p] -= 2.0 * res;
                }
            }
            member_sample_grad[i] = gi;
        }
        if !grad {
            return ClusterGradient {
                value,
                members: Vec::new(),
                centroids: Vec::new(),
            };
        }

        let system = &self.systems[stage];
        let pull = |sampled: &Sampled, ds: &[f64]| {
            let grid: Vec<[f64; 2]> = sampled
                .grads
                .iter()
                .zip(ds)
                .zip(&sampled.soft_grad)
                .map(|((g, &d), sg)| [d * g[0] + lambda * sg[0], d * g[1] + lambda * sg[1]])
                .collect();
            let mut out = Vec::new();
            system.pull_back_into(&grid, &mut out);
            out
        };
        let member_grads = members
            .par_iter()
            .zip(&member_sample_grad)
            .map(|(m, ds)| pull(m, ds))
            .collect();
        let centroid_grads = centroids
            .par_iter()
            .zip(&centroid_sample_grad)
            .map(|(c, ds)| pull(c, ds))
            .collect();
        ClusterGradient {
            value,
            members: member_grads,
            centroids: centroid_grads,
        }
    }

    /// One line-searched descent step on all transforms jointly. Centroid
    /// directions are projected so the centroid gauge stays fixed. Returns
    /// the objective after the step, and whether a step was taken.
    pub fn update_step(&self, state: &mut ClusterState, step: &mut f64) -> Result<(f64, bool)> {
        let mut g = self.gradient(state);
        if !g.value.is_finite() {
            return Err(Error::Diverged {
                stage: state.stage,
                iteration: 0,
                objective: g.value,
            });
        }
        for c in &mut g.centroids {
            self.gauges[state.stage].project(c);
        }
        let all = g.members.iter().chain(&g.centroids).flatten().flatten();
        let gmax = all.clone().fold(0.0f64, |m, v| m.max(v.abs()));
        let gnorm2: f64 = all.map(|v| v * v).sum();
        if gmax == 0.0 || !gmax.is_finite() {
            return Ok((g.value, false));
        }
        let mut displacement = step.min(self.config.initial_step);
        let mut trial = state.clone();
        for _ in 0..=self.config.max_backtracks {
            let t = displacement / gmax;
            let shift = |dst: &mut Vec<Vec<[f64; 2]>>, src: &[Vec<[f64; 2]>], grad: &[Vec<[f64; 2]>]| {
                for ((d, s), gr) in dst.iter_mut().zip(src).zip(grad) {
                    for ((dp, sp), gp) in d.iter_mut().zip(s).zip(gr) {
                        *dp = [sp[0] - t * gp[0], sp[1] - t * gp[1]];
                    }
                }
            };
            shift(&mut trial.member_anchors, &state.member_anchors, &g.members);
            shift(&mut trial.centroid_anchors, &state.centroid_anchors, &g.centroids);
            let f = self.objective(&trial);
            if f.is_finite() && f <= g.value - self.config.armijo * t * gnorm2 {
                *state = trial;
                *step = 2.0 * displacement;
                return Ok((f, true));
            }
            displacement *= 0.5;
        }
        Ok((g.value, false))
    }

    /// Moves `state` to the next solution-path stage.
    fn lift(&self, state: &mut ClusterState) {
        let (from, to) = (&self.systems[state.stage], &self.systems[state.stage + 1]);
        for a in state.member_anchors.iter_mut().chain(state.centroid_anchors.iter_mut()) {
            *a = lift_anchors(from, a, to);
        }
        state.stage += 1;
    }

    /// Alternates assignment and descent from `state` through the remaining
    /// stages. Returns the objective trace.
    pub fn refine(&self, state: &mut ClusterState) -> Result<Vec<f64>> {
        let mut trace = Vec::new();
        loop {
            let stage = &self.config.stages[state.stage];
            let mut step = self.config.initial_step;
            let start = trace.len();
            for _ in 0..stage.max_iterations {
                let changed = self.assign_step(state);
                let (f, moved) = self.update_step(state, &mut step)?;
                trace.push(f);
                if changed {
                    continue;
                }
                if !moved {
                    break;
                }
                let k = trace.len() - 1;
                if k >= start + self.config.patience {
                    let old = trace[k - self.config.patience];
                    if old - f <= self.config.tolerance * old.abs().max(1e-12) {
                        break;
                    }
                }
            }
            if state.stage == self.last_stage() {
                break;
            }
            self.lift(state);
        }
        self.assign_step(state);
        Ok(trace)
    }

    /// k-means++ style choice of `k` base images, weighting each candidate
    /// by its frozen-identity color distortion to the closest chosen base.
    pub fn seed_bases(&self, k: usize, rng: &mut StdRng) -> Vec<usize> {
        let n = self.len();
        let mut bases = vec![rng.gen_range(0..n)];
        while bases.len() < k {
            let weights: Vec<f64> = (0..n)
                .map(|i| {
                    if bases.contains(&i) {
                        0.0
                    } else {
                        bases.iter().map(|&b| self.seeding[b][i]).fold(f64::INFINITY, f64::min)
                    }
                })
                .collect();
            let total: f64 = weights.iter().sum();
            let pick = if total > 0.0 && total.is_finite() {
                let mut u = rng.gen::<f64>() * total;
                let mut pick = None;
                for (i, &w) in weights.iter().enumerate() {
                    if w > 0.0 {
                        pick = Some(i);
                        if u < w {
                            break;
                        }
                        u -= w;
                    }
                }
                pick.expect("positive total weight")
            } else {
                let free: Vec<usize> = (0..n).filter(|i| !bases.contains(i)).collect();
                free[rng.gen_range(0..free.len())]
            };
            bases.push(pick);
        }
        bases
    }

    fn restart(&self, k: usize, seed: u64) -> Result<(ClusterState, f64, Vec<f64>)> {
        let mut rng = StdRng::seed_from_u64(seed);
        let bases = self.seed_bases(k, &mut rng);
        let mut state = self.initial_state(0, bases, vec![0; self.len()]);
        let trace = self.refine(&mut state)?;
        let wcsd = self.wcsd(&state);
        Ok((state, wcsd, trace))
    }

    /// Archetype `k`: its base image rendered through its transform.
    pub fn render_archetypes(&self, state: &ClusterState) -> Result<Vec<DigitalImage>> {
        let (rows, cols) = self.images[0].dims();
        state
            .bases
            .iter()
            .zip(&state.centroid_anchors)
            .map(|(&b, a)| DigitalImage::from_clamped(rows, cols, self.sample(state.stage, b, a)))
            .collect()
    }

    fn report(&self, state: ClusterState, wcsd: f64, best_restart: usize, restart_wcsd: Vec<f64>, trace: Vec<f64>) -> Result<ClusterReport> {
        Ok(ClusterReport {
            k: state.k(),
            assignments: state.assignments.clone(),
            cluster_sizes: state.cluster_sizes(),
            bases: state.bases.clone(),
            wcsd,
            best_restart,
            restart_wcsd,
            trace,
            archetypes: self.render_archetypes(&state)?,
            state: Some(state),
        })
    }

    /// Best of `options.restarts` seeded runs; ties go to the lowest restart.
    pub fn cluster(&self, options: &ClusterOptions) -> Result<ClusterReport> {
        let k = options.k;
        if k == 0 || k > self.len() {
            return Err(Error::InvalidInput(format!(
                "need 1 <= K <= N, got K = {k}, N = {}",
                self.len()
            )));
        }
        let restarts = options.restarts.max(1);
        let runs: Vec<Result<(ClusterState, f64, Vec<f64>)>> = worker_pool(options.workers)?.install(|| {
            (0..restarts)
                .into_par_iter()
                .map(|r| self.restart(k, restart_seed(options.seed, k, r)))
                .collect()
        });
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let restart_wcsd: Vec<f64> = runs.iter().map(|r| r.1).collect();
        let best = (0..runs.len())
            .min_by(|&a, &b| restart_wcsd[a].total_cmp(&restart_wcsd[b]).then(a.cmp(&b)))
            .expect("at least one restart");
        let (state, wcsd, trace) = runs.into_iter().nth(best).expect("index valid");
        self.report(state, wcsd, best, restart_wcsd, trace)
    }

    /// `previous` plus one centroid split off at the member farthest from
    /// its centroid, reassigned, at the finest stage.
    pub fn split_state(&self, previous: &ClusterState) -> ClusterState {
        let table = self.distortion_table(previous);
        let sizes = previous.cluster_sizes();
        let far = (0..self.len())
            .filter(|&i| sizes[previous.assignments[i]] > 1)
            .fold(None, |best: Option<(usize, f64)>, i| {
                let d = table[i][previous.assignments[i]];
                match best {
                    Some((_, bd)) if !(d > bd) => best,
                    _ => Some((i, d)),
                }
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut state = previous.clone();
        let id = self.systems[state.stage].identity_anchors();
        state.bases.push(far);
        state.centroid_anchors.push(id.clone());
        state.member_anchors[far] = id;
        state.assignments[far] = state.bases.len() - 1;
        let table = self.distortion_table(&state);
        state.assignments = assign_from_table(&table);
        state
    }

    /// Best-of-restarts WCSD for every `K` in `ks`. From the second `K` on,
    /// the best `K−1` solution with one split centroid competes as an extra
    /// start, which keeps the curve non-increasing.
    pub fn elbow_curve(&self, ks: RangeInclusive<usize>, options: &ClusterOptions) -> Result<ElbowReport> {
        let mut reports: Vec<ClusterReport> = Vec::new();
        for k in ks {
            let mut report = self.cluster(&ClusterOptions { k, ..*options })?;
            let previous = reports.last().and_then(|r| r.state.clone());
            if let Some(prev) = previous.filter(|p| p.k() + 1 == k) {
                let start = self.split_state(&prev);
                let start_wcsd = self.wcsd(&start);
                let mut refined = start.clone();
                let trace = self.refine(&mut refined)?;
                let refined_wcsd = self.wcsd(&refined);
                let (state, wcsd, trace) = if refined_wcsd <= start_wcsd {
                    (refined, refined_wcsd, trace)
                } else {
                    (start, start_wcsd, Vec::new())
                };
                if wcsd < report.wcsd {
                    let restart_wcsd = report.restart_wcsd.clone();
                    report = self.report(state, wcsd, restart_wcsd.len(), restart_wcsd, trace)?;
                }
            }
            reports.push(report);
        }
        Ok(ElbowReport {
            ks: reports.iter().map(|r| r.k).collect(),
            wcsd: reports.iter().map(|r| r.wcsd).collect(),
            reports,
        })
    }
}

/// WCSD per `K`. A `best_restart` equal to the restart count marks the
/// split start seeded from the previous `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub ks: Vec<usize>,
    pub wcsd: Vec<f64>,
    pub reports: Vec<ClusterReport>,
}

fn restart_seed(seed: u64, k: usize, restart: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((k as u64) << 32)
        .wrapping_add(restart as u64)
}

/// Row-wise argmin, lowest column on ties.
pub fn assign_from_table(table: &[Vec<f64>]) -> Vec<usize> {
    table
        .iter()
        .map(|row| crate::classify::argmin(row).unwrap_or(0))
        .collect()
}

/// Clusters `images` into `options.k` groups.
pub fn cluster(images: &[DigitalImage], options: &ClusterOptions, config: &SolveConfig) -> Result<ClusterReport> {
    Clusterer::new(images, config, options.fit_color)?.cluster(options)
}

pub fn elbow_curve(
    images: &[DigitalImage],
    ks: RangeInclusive<usize>,
    options: &ClusterOptions,
    config: &SolveConfig,
) -> Result<ElbowReport> {
    Clusterer::new(images, config, options.fit_color)?.elbow_curve(ks, options)
}
