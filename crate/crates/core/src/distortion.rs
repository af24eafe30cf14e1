//! Color and canvas distortions with their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CanvasLattice, CanvasTransform};

/// Edge lengths below this are floored inside the log stretch.
pub const MIN_EDGE_LENGTH: f64 = 1e-6;

/// Affine color transformation `c ↦ a·c + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineColor {
    pub a: f64,
    pub b: f64,
}

impl AffineColor {
    pub const IDENTITY: AffineColor = AffineColor { a: 1.0, b: 0.0 };

    #[inline]
    pub fn apply(&self, c: f64) -> f64 {
        self.a * c + self.b
    }
}

impl Default for AffineColor {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Value and gradients of the color distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorEval {
    pub value: f64,
    /// With respect to each moved sample.
    pub grad_moved: Vec<f64>,
    pub grad_a: f64,
    pub grad_b: f64,
}

/// `‖a·moved + b − reference‖²` and its gradients.
pub fn color_distortion(reference: &[f64], moved: &[f64], chi: AffineColor) -> Result<ColorEval> {
    check_lengths(reference, moved)?;
    let mut value = 0.0;
    let mut grad_a = 0.0;
    let mut grad_b = 0.0;
    let mut grad_moved = Vec::with_capacity(moved.len());
    for (&r, &m) in reference.iter().zip(moved) {
        let res = chi.apply(m) - r;
        value += res * res;
        grad_moved.push(2.0 * chi.a * res);
        grad_a += 2.0 * res * m;
        grad_b += 2.0 * res;
    }
    Ok(ColorEval {
        value,
        grad_moved,
        grad_a,
        grad_b,
    })
}

/// Value only; no allocation.
pub fn color_residual(reference: &[f64], moved: &[f64], chi: AffineColor) -> f64 {
    reference
        .iter()
        .zip(moved)
        .map(|(&r, &m)| {
            let res = chi.apply(m) - r;
            res * res
        })
        .sum()
}

fn check_lengths(reference: &[f64], moved: &[f64]) -> Result<()> {
    if reference.len() != moved.len() {
        return Err(Error::InvalidInput(format!(
            "color vectors differ in length: {} vs {}",
            reference.len(),
            moved.len()
        )));
    }
    Ok(())
}

/// Least-squares `(a, b)` fitting `moved` to `reference`. A constant `moved`
/// gives `a = 0, b = mean(reference)`. With `nonnegative`, a negative slope
/// is replaced by that same constant fit.
pub fn optimal_affine(reference: &[f64], moved: &[f64], nonnegative: bool) -> AffineColor {
    let n = reference.len().min(moved.len());
    if n == 0 {
        return AffineColor::IDENTITY;
    }
    let inv_n = 1.0 / n as f64;
    let mean_r = reference[..n].iter().sum::<f64>() * inv_n;
    let mean_m = moved[..n].iter().sum::<f64>() * inv_n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (&r, &m) in reference.iter().zip(moved) {
        let dm = m - mean_m;
        cov += dm * (r - mean_r);
        var += dm * dm;
    }
    let flat = AffineColor { a: 0.0, b: mean_r };
    // Relative threshold: variance lost to cancellation counts as constant.
    let scale = moved[..n].iter().map(|m| m * m).sum::<f64>();
    if var <= 1e-14 * scale || var == 0.0 {
        return flat;
    }
    let a = cov / var;
    if nonnegative && a < 0.0 {
        return flat;
    }
    AffineColor {
        a,
        b: mean_r - a * mean_m,
    }
}

/// Log stretch `log(len / rest)` of every lattice edge under `points`.
pub fn edge_stretches(points: &[[f64; 2]], lattice: &CanvasLattice) -> Vec<f64> {
    lattice
        .edges()
        .iter()
        .zip(lattice.rest_lengths())
        .map(|(&[u, v], &rest)| {
            let p = points[u as usize];
            let q = points[v as usize];
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            let len = (dx * dx + dy * dy).sqrt().max(MIN_EDGE_LENGTH);
            (len / rest).ln()
        })
        .collect()
}

fn check_transform(points: &[[f64; 2]], lattice: &CanvasLattice) {
    assert_eq!(
        points.len(),
        lattice.vertex_count(),
        "transform rows must match lattice vertices"
    );
}

/// Worst-case discrepancy between the log stretches of neighbouring edges.
pub fn canvas_distortion(alpha: &CanvasTransform, lattice: &CanvasLattice) -> f64 {
    canvas_distortion_points(alpha.points(), lattice)
}

pub fn canvas_distortion_points(points: &[[f64; 2]], lattice: &CanvasLattice) -> f64 {
    check_transform(points, lattice);
    let delta = edge_stretches(points, lattice);
    lattice
        .neighbor_pairs()
        .iter()
        .map(|&[e, f]| (delta[e as usize] - delta[f as usize]).abs())
        .fold(0.0, f64::max)
}

/// Value and gradient of a smooth surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftEval {
    pub value: f64,
    pub grad: Vec<[f64; 2]>,
}

/// Unnormalized `p`-norm of the neighbouring-edge discrepancies, which
/// bounds the hard maximum from above and converges to it as `p → ∞`.
pub fn canvas_distortion_soft(
    alpha: &CanvasTransform,
    lattice: &CanvasLattice,
    power: f64,
) -> SoftEval {
    let mut ws = SoftWorkspace::default();
    let mut grad = Vec::new();
    let value = ws.eval(alpha.points(), lattice, power, Some(&mut grad));
    SoftEval { value, grad }
}

/// Value-only form of [`canvas_distortion_soft`].
pub fn canvas_distortion_soft_value(
    points: &[[f64; 2]],
    lattice: &CanvasLattice,
    power: f64,
) -> f64 {
    SoftWorkspace::default().eval(points, lattice, power, None)
}

/// Scratch buffers reused across surrogate evaluations.
#[derive(Debug, Default, Clone)]
pub struct SoftWorkspace {
    delta: Vec<f64>,
    diffs: Vec<f64>,
    /// `|d/max|^(p-1)` per pair, reused by the gradient.
    lower: Vec<f64>,
    delta_grad: Vec<f64>,
}

#[inline]
fn powi_inline(mut x: f64, mut k: u32) -> f64 {
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= x;
        }
        x *= x;
        k >>= 1;
    }
    acc
}

impl SoftWorkspace {
    /// Surrogate value; when `grad` is given it receives d value / d point.
    pub fn eval(
        &mut self,
        points: &[[f64; 2]],
        lattice: &CanvasLattice,
        power: f64,
        grad: Option<&mut Vec<[f64; 2]>>,
    ) -> f64 {
        check_transform(points, lattice);
        assert!(power >= 1.0, "surrogate power must be at least 1");
        let int_power = (power.fract() == 0.0 && power <= 64.0).then_some(power as u32);

        self.delta.clear();
        for (&[u, v], &rest) in lattice.edges().iter().zip(lattice.rest_lengths()) {
            let p = points[u as usize];
            let q = points[v as usize];
            let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
            let len = (dx * dx + dy * dy).sqrt().max(MIN_EDGE_LENGTH);
            self.delta.push((len / rest).ln());
        }
        self.diffs.clear();
        let mut max = 0.0f64;
        for &[e, f] in lattice.neighbor_pairs() {
            let d = self.delta[e as usize] - self.delta[f as usize];
            max = max.max(d.abs());
            self.diffs.push(d);
        }

        let want_grad = grad.is_some();
        if max == 0.0 || !max.is_finite() {
            if let Some(g) = grad {
                g.clear();
                g.resize(points.len(), [0.0, 0.0]);
            }
            return if max.is_finite() { 0.0 } else { f64::INFINITY };
        }

        let inv_max = 1.0 / max;
        self.lower.clear();
        let mut sum = 0.0;
        for d in &self.diffs {
            let r = (d * inv_max).abs();
            let l = match int_power {
                Some(8) => {
                    let r2 = r * r;
                    r2 * r2 * r2 * r
                }
                Some(k) => powi_inline(r, k - 1),
                None => r.powf(power - 1.0),
            };
            sum += l * r;
            self.lower.push(l);
        }
        let value = max * sum.powf(1.0 / power);

        if let (true, Some(g)) = (want_grad, grad) {
            // d value / d diff_k = (|d_k|/max)^(p-1) · sign(d_k) · sum^(1/p - 1)
            let outer = sum.powf(1.0 / power - 1.0);
            self.delta_grad.clear();
            self.delta_grad.resize(self.delta.len(), 0.0);
            for ((&[e, f], &d), &l) in lattice.neighbor_pairs().iter().zip(&self.diffs).zip(&self.lower) {
                if d == 0.0 {
                    continue;
                }
                let w = outer * l * d.signum();
                self.delta_grad[e as usize] += w;
                self.delta_grad[f as usize] -= w;
            }
            g.clear();
            g.resize(points.len(), [0.0, 0.0]);
            for (&[u, v], &dg) in lattice.edges().iter().zip(&self.delta_grad) {
                if dg == 0.0 {
                    continue;
                }
                let p = points[u as usize];
                let q = points[v as usize];
                let dx = [p[0] - q[0], p[1] - q[1]];
                let len2 = dx[0] * dx[0] + dx[1] * dx[1];
                if len2 < MIN_EDGE_LENGTH * MIN_EDGE_LENGTH {
                    continue;
                }
                let s = dg / len2;
                g[u as usize][0] += s * dx[0];
                g[u as usize][1] += s * dx[1];
                g[v as usize][0] -= s * dx[0];
                g[v as usize][1] -= s * dx[1];
            }
        }
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, identity_transform};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn map(rows: usize, cols: usize, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> CanvasTransform {
        CanvasTransform::new(identity_transform(rows, cols).points().iter().map(|&p| f(p)).collect()).unwrap()
    }

    fn perturbed(rng: &mut StdRng, rows: usize, cols: usize, amp: f64) -> CanvasTransform {
        map(rows, cols, |p| [p[0] + rng.gen_range(-amp..amp), p[1] + rng.gen_range(-amp..amp)])
    }

    // Brute-force oracle: loop over all edge pairs, test incidence and angle from scratch.
    fn brute_canvas(alpha: &CanvasTransform, rows: usize, cols: usize) -> f64 {
        let id = identity_transform(rows, cols);
        let n = rows * cols;
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let (p, q) = (id.points()[a], id.points()[b]);
                if (p[0] - q[0]).abs().max((p[1] - q[1]).abs()) == 1.0 {
                    edges.push((a, b));
                }
            }
        }
        let stretch = |(a, b): (usize, usize)| {
            let (p, q) = (alpha.points()[a], alpha.points()[b]);
            let (r, s) = (id.points()[a], id.points()[b]);
            ((p[0] - q[0]).hypot(p[1] - q[1]) / (r[0] - s[0]).hypot(r[1] - s[1])).ln()
        };
        let mut worst = 0.0f64;
        for (x, &e) in edges.iter().enumerate() {
            for &f in &edges[x + 1..] {
                let shared = [e.0, e.1].into_iter().find(|v| *v == f.0 || *v == f.1);
                let Some(s) = shared else { continue };
                let o1 = if e.0 == s { e.1 } else { e.0 };
                let o2 = if f.0 == s { f.1 } else { f.0 };
                let c = id.points()[s];
                let u = [id.points()[o1][0] - c[0], id.points()[o1][1] - c[1]];
                let v = [id.points()[o2][0] - c[0], id.points()[o2][1] - c[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                if (cos - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12 {
                    worst = worst.max((stretch(e) - stretch(f)).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn color_examples() {
        let c = color_distortion(&[0.2, 0.7], &[0.2, 0.7], AffineColor::IDENTITY).unwrap();
        assert_eq!(c.value, 0.0);
        let c = color_distortion(&[0.0, 1.0], &[0.0, 0.5], AffineColor { a: 2.0, b: 0.0 }).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(color_distortion(&[0.0], &[0.0, 1.0], AffineColor::IDENTITY).is_err());
    }

    #[test]
    fn color_matches_oracle_and_finite_differences() {
        let mut rng = StdRng::seed_from_u64(21);
        let r: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
        let m: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
        let chi = AffineColor { a: rng.gen_range(-2.0..2.0), b: rng.gen_range(-1.0..1.0) };
        let c = color_distortion(&r, &m, chi).unwrap();
        let oracle: f64 = (0..10).map(|i| (chi.a * m[i] + chi.b - r[i]).powi(2)).sum();
        assert!((c.value - oracle).abs() < 1e-12);
        let h = 1e-6;
        let rel = |fd: f64, an: f64| (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        for i in 0..10 {
            let mut mp = m.clone();
            let mut mm = m.clone();
            mp[i] += h;
            mm[i] -= h;
            let fd = (color_residual(&r, &mp, chi) - color_residual(&r, &mm, chi)) / (2.0 * h);
            assert!(rel(fd, c.grad_moved[i]) <= 1e-6, "sample {i}");
        }
        let fa = (color_residual(&r, &m, AffineColor { a: chi.a + h, ..chi })
            - color_residual(&r, &m, AffineColor { a: chi.a - h, ..chi }))
            / (2.0 * h);
        let fb = (color_residual(&r, &m, AffineColor { b: chi.b + h, ..chi })
            - color_residual(&r, &m, AffineColor { b: chi.b - h, ..chi }))
            / (2.0 * h);
        assert!(rel(fa, c.grad_a) <= 1e-6);
        assert!(rel(fb, c.grad_b) <= 1e-6);
    }

    #[test]
    fn affine_fit_examples() {
        let r = [0.1, 0.5, 0.9, 0.3];
        let fit = optimal_affine(&r, &r, false);
        assert!((fit.a - 1.0).abs() < 1e-12 && fit.b.abs() < 1e-12);
        let fit = optimal_affine(&[0.0, 1.0], &[0.0, 0.5], false);
        assert!((fit.a - 2.0).abs() < 1e-12 && fit.b.abs() < 1e-12);
        let fit = optimal_affine(&[0.2, 0.4, 0.9], &[0.3, 0.3, 0.3], false);
        assert_eq!(fit.a, 0.0);
        assert!((fit.b - 0.5).abs() < 1e-12);
        let fit = optimal_affine(&[1.0, 0.0], &[0.0, 1.0], true);
        assert_eq!(fit, AffineColor { a: 0.0, b: 0.5 });
        let fit = optimal_affine(&[1.0, 0.0], &[0.0, 1.0], false);
        assert!((fit.a + 1.0).abs() < 1e-12 && (fit.b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_fit_matches_normal_equations() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.gen_range(2..30);
            let r: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let m: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            // [Σm² Σm; Σm n] [a b]ᵀ = [Σmr Σr]ᵀ, solved by Cramer's rule.
            let smm: f64 = m.iter().map(|x| x * x).sum();
            let sm: f64 = m.iter().sum();
            let smr: f64 = m.iter().zip(&r).map(|(x, y)| x * y).sum();
            let sr: f64 = r.iter().sum();
            let det = smm * n as f64 - sm * sm;
            let a = (smr * n as f64 - sm * sr) / det;
            let b = (smm * sr - sm * smr) / det;
            let fit = optimal_affine(&r, &m, false);
            assert!((fit.a - a).abs() <= 1e-10 && (fit.b - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn conformal_maps_have_zero_canvas_distortion() {
        let lattice = build_lattice(6, 7).unwrap();
        assert_eq!(canvas_distortion(&identity_transform(6, 7), &lattice), 0.0);
        let scaled = map(6, 7, |p| [2.0 * p[0], 2.0 * p[1]]);
        assert!(canvas_distortion(&scaled, &lattice) < 1e-12);
        let (s, c) = 30f64.to_radians().sin_cos();
        let rotated = map(6, 7, |p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]);
        assert!(canvas_distortion(&rotated, &lattice) < 1e-12);
    }

    #[test]
    fn shear_matches_brute_force() {
        let lattice = build_lattice(3, 3).unwrap();
        // x' = x + 0.5 y with x the column axis and y the row axis.
        let shear = map(3, 3, |p| [p[0], p[1] + 0.5 * p[0]]);
        let v = canvas_distortion(&shear, &lattice);
        assert!(v > 0.1);
        assert!((v - brute_canvas(&shear, 3, 3)).abs() < 1e-12);

        let mut rng = StdRng::seed_from_u64(12);
        for _ in 0..5 {
            let t = perturbed(&mut rng, 4, 5, 0.3);
            let lattice = build_lattice(4, 5).unwrap();
            assert!((canvas_distortion(&t, &lattice) - brute_canvas(&t, 4, 5)).abs() < 1e-12);
        }
    }

    #[test]
    fn collapsed_edges_are_finite() {
        let lattice = build_lattice(3, 3).unwrap();
        let collapsed = map(3, 3, |_| [1.0, 1.0]);
        let v = canvas_distortion(&collapsed, &lattice);
        assert!(v.is_finite());
        let half = map(3, 3, |p| [p[0], if p[1] > 1.0 { 1.0 } else { p[1] }]);
        let v = canvas_distortion(&half, &lattice);
        assert!(v.is_finite() && v > 10.0);
    }

    #[test]
    fn soft_surrogate_identity_and_conformal() {
        let lattice = build_lattice(4, 4).unwrap();
        let e = canvas_distortion_soft(&identity_transform(4, 4), &lattice, 8.0);
        assert_eq!(e.value, 0.0);
        assert!(e.grad.iter().all(|g| *g == [0.0, 0.0]));
        let (s, c) = 0.7f64.sin_cos();
        let sim = map(4, 4, |p| [3.0 + 1.5 * (c * p[0] - s * p[1]), -2.0 + 1.5 * (s * p[0] + c * p[1])]);
        assert!(canvas_distortion_soft(&sim, &lattice, 8.0).value < 1e-9);
    }

    #[test]
    fn soft_surrogate_sandwich_and_gradient() {
        let mut rng = StdRng::seed_from_u64(31);
        let lattice = build_lattice(3, 3).unwrap();
        let n_pairs = lattice.neighbor_pairs().len() as f64;
        for _ in 0..10 {
            let t = perturbed(&mut rng, 3, 3, 0.2);
            let hard = canvas_distortion(&t, &lattice);
            let soft = canvas_distortion_soft(&t, &lattice, 8.0);
            assert!(hard <= soft.value + 1e-15);
            assert!(soft.value <= hard * n_pairs.powf(1.0 / 8.0) + 1e-12);

            let h = 1e-6;
            for k in 0..9 {
                for axis in 0..2 {
                    let mut p = t.points().to_vec();
                    let mut m = t.points().to_vec();
                    p[k][axis] += h;
                    m[k][axis] -= h;
                    let fd = (canvas_distortion_soft_value(&p, &lattice, 8.0)
                        - canvas_distortion_soft_value(&m, &lattice, 8.0))
                        / (2.0 * h);
                    let an = soft.grad[k][axis];
                    let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(err <= 1e-4, "vertex {k} axis {axis}: fd {fd} analytic {an}");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn similarity_transforms_are_free(
                rows in 2usize..8, cols in 2usize..8,
                angle in -3.2f64..3.2, scale in 0.2f64..5.0,
                tx in -20.0f64..20.0, ty in -20.0f64..20.0,
            ) {
                let lattice = build_lattice(rows, cols).unwrap();
                let (s, c) = angle.sin_cos();
                let t = map(rows, cols, |p| [tx + scale * (c * p[0] - s * p[1]), ty + scale * (s * p[0] + c * p[1])]);
                prop_assert!(canvas_distortion(&t, &lattice) <= 1e-9);
            }

            #[test]
            fn soft_bounds_hard(
                jitter in proptest::collection::vec(-0.3f64..0.3, 32),
                power in 1.0f64..16.0,
            ) {
                let lattice = build_lattice(4, 4).unwrap();
                let t = map(4, 4, |p| {
                    let k = (p[0] * 4.0 + p[1]) as usize;
                    [p[0] + jitter[2 * k], p[1] + jitter[2 * k + 1]]
                });
                let hard = canvas_distortion(&t, &lattice);
                let soft = canvas_distortion_soft_value(t.points(), &lattice, power);
                let bound = (lattice.neighbor_pairs().len() as f64).powf(1.0 / power);
                prop_assert!(hard <= soft * (1.0 + 1e-12) + 1e-15);
                prop_assert!(soft <= hard * bound * (1.0 + 1e-12) + 1e-15);
            }

            #[test]
            fn pair_contribution_is_symmetric(
                jitter in proptest::collection::vec(-0.3f64..0.3, 18),
            ) {
                let lattice = build_lattice(3, 3).unwrap();
                let t = map(3, 3, |p| {
                    let k = (p[0] * 3.0 + p[1]) as usize;
                    [p[0] + jitter[2 * k], p[1] + jitter[2 * k + 1]]
                });
                let delta = edge_stretches(t.points(), &lattice);
                for &[e, f] in lattice.neighbor_pairs() {
                    let ab = (delta[e as usize] - delta[f as usize]).abs();
                    let ba = (delta[f as usize] - delta[e as usize]).abs();
                    prop_assert_eq!(ab, ba);
                }
            }
        }
    }
}
