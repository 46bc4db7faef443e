//! Planner-performance adaptation: root-solving the junction condition for
//! theta given a safety margin (or for the margin given theta), feasibility
//! limits, and the barrier validity checks.

use serde::{Deserialize, Serialize};

use crate::barrier::{
    assemble_barrier, build_teb, integrate_surface_stopping, BarrierPiece, IntegrationEnd,
    IntegratorConfig, SurfaceTrajectory, TrackingErrorBound,
};
use crate::error::{Error, Result};
use crate::geometry::{compute_bnup, minmax_hamiltonian, BnupConfig, CaptivitySet};
use crate::num;
use crate::system::RelativeSystem;

/// Margins below this are treated as validity failures at solutions.
pub const VALIDITY_MARGIN_MIN: f64 = 1e-6;

/// Relative slack on the containment bound `|P x| <= beta`.
pub const CONTAINMENT_REL_SLACK: f64 = 1e-9;

/// Locus the barrier pieces must meet on, with a point selecting the
/// optimal junction. The residual reported by [`junction_residual`] is the
/// signed offset of the achieved crossing along `residual_dir`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub target: Vec<f64>,
    /// Normal of the locus hyperplane (crossing detector).
    pub locus_normal: Vec<f64>,
    /// Direction along which the signed residual is measured.
    pub residual_dir: Vec<f64>,
}

impl ManifoldSpec {
    /// Junction on the second critical axis at height beta: the connected
    /// choice for planar systems symmetric about that axis.
    pub fn axis_point(sys: &dyn RelativeSystem, beta: f64) -> ManifoldSpec {
        let n = sys.state_dim();
        let axes = sys.projection().active_axes();
        let mut target = vec![0.0; n];
        target[axes[1]] = beta;
        let mut locus_normal = vec![0.0; n];
        locus_normal[axes[0]] = 1.0;
        let mut residual_dir = vec![0.0; n];
        residual_dir[axes[1]] = 1.0;
        ManifoldSpec { target, locus_normal, residual_dir }
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Residual tolerance, state units.
    pub tol: f64,
    pub max_iter: usize,
    pub integrator: IntegratorConfig,
    /// Scan points used to bracket the first sign change.
    pub bracket_points: usize,
    pub bnup: BnupConfig,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-6,
            max_iter: 200,
            integrator: IntegratorConfig::default(),
            bracket_points: 48,
            bnup: BnupConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    pub margin: f64,
}

/// Verdicts for the three barrier validity conditions: the anchor is a
/// strict projected-norm maximum, the piece stays inside the captivity set,
/// and the forward flow at the anchor points toward the non-escapable arc.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidityReport {
    pub curvature: Check,
    pub containment: Check,
    pub direction: Check,
}

impl ValidityReport {
    pub fn all_pass(&self) -> bool {
        self.curvature.pass && self.containment.pass && self.direction.pass
    }

    pub fn merge_worst(self, other: ValidityReport) -> ValidityReport {
        let pick = |a: Check, b: Check| if a.margin <= b.margin { a } else { b };
        ValidityReport {
            curvature: pick(self.curvature, other.curvature),
            containment: pick(self.containment, other.containment),
            direction: pick(self.direction, other.direction),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Limits {
    pub beta_min: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    /// Theta or the margin, depending on the objective solved.
    pub solved_value: f64,
    /// Signed junction offset from the manifold point, state units.
    pub residual: f64,
    pub junction: Vec<f64>,
    pub validity: ValidityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limits: Option<Limits>,
    pub iterations: usize,
    /// Wall-clock seconds; excluded from serialized reports so that reruns
    /// reproduce byte-identical artifacts.
    #[serde(skip)]
    pub wall_time: f64,
    pub degenerate: bool,
    pub bracket: (f64, f64),
}

pub struct SolveOutcome {
    pub report: SolveReport,
    pub teb: TrackingErrorBound,
}

impl std::fmt::Debug for SolveOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SolveOutcome").field("report", &self.report).finish_non_exhaustive()
    }
}

const SENTINEL_FACTOR: f64 = 1e3;

fn locus_offset(m: &ManifoldSpec, x: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..x.len() {
        d += m.locus_normal[i] * (x[i] - m.target[i]);
    }
    d
}

fn residual_along(m: &ManifoldSpec, x: &[f64]) -> f64 {
    let mut d = 0.0;
    for i in 0..x.len() {
        d += m.residual_dir[i] * (x[i] - m.target[i]);
    }
    d
}

/// Integrate the primary surface for one (theta, beta) pair and return the
/// signed offset of its first locus crossing from the manifold point.
/// No crossing within the horizon (divergence included) maps to a large
/// positive sentinel so that bracketing solvers stay monotone.
pub fn junction_residual(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    theta: f64,
    manifold: &ManifoldSpec,
    cfg: &SolveConfig,
) -> Result<f64> {
    let sys_t = sys.with_performance(theta)?;
    let (_, crossing) = primary_crossing(sys_t.as_ref(), cap, manifold, cfg)?;
    Ok(match crossing {
        Some(x) => residual_along(manifold, &x),
        None => SENTINEL_FACTOR * (1.0 + cap.beta()),
    })
}

/// Surface anchored on the positive side of the locus, integrated until its
/// first crossing; returns the refined crossing state when one exists.
fn primary_crossing(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    manifold: &ManifoldSpec,
    cfg: &SolveConfig,
) -> Result<(SurfaceTrajectory, Option<Vec<f64>>)> {
    let anchors = compute_bnup(sys, cap, &cfg.bnup)?;
    let anchor = anchors
        .iter()
        .max_by(|a, b| {
            locus_offset(manifold, &a.state)
                .partial_cmp(&locus_offset(manifold, &b.state))
                .unwrap()
        })
        .cloned()
        .ok_or_else(|| Error::NoBnup("no anchors".into()))?;
    let side = locus_offset(manifold, &anchor.state).signum();
    let stop = move |_t: f64, x: &[f64]| {
        let mut d = 0.0;
        for i in 0..x.len() {
            d += manifold.locus_normal[i] * (x[i] - manifold.target[i]);
        }
        d * side < 0.0
    };
    let traj = integrate_surface_stopping(sys, cap, &anchor, &cfg.integrator, Some(&stop))?;
    if traj.end != IntegrationEnd::Stopped {
        return Ok((traj, None));
    }
    // walk up from the stopped end to the adjacent samples bracketing the
    // crossing (event insertions can put several samples past the locus)
    let offset_at = |s: &crate::barrier::SurfaceSample| locus_offset(manifold, &s.state) * side;
    let hi_idx = traj
        .samples
        .iter()
        .position(|s| offset_at(s) >= 0.0)
        .ok_or_else(|| Error::Geometry("locus crossing lost after stop".into()))?;
    if hi_idx == 0 {
        let (x, _, _) = traj.eval_at(sys, traj.samples[0].t)?;
        return Ok((traj, Some(x)));
    }
    let (t0, t1) = (traj.samples[hi_idx - 1].t, traj.samples[hi_idx].t);
    let f = |t: f64| -> f64 {
        let (x, _, _) = traj.eval_at(sys, t).expect("time inside sampled range");
        locus_offset(manifold, &x) * side
    };
    let t_cross = num::bisect(t1, t0, f, cfg.integrator.event_time_tol, 80)?;
    let (x, _, _) = traj.eval_at(sys, t_cross)?;
    Ok((traj, Some(x)))
}

/// Largest performance value accepted by the model, located by doubling and
/// bisection on `with_performance`.
fn performance_sup(sys: &dyn RelativeSystem) -> f64 {
    let mut hi = 1.0;
    if sys.with_performance(hi).is_ok() {
        for _ in 0..40 {
            if sys.with_performance(hi * 2.0).is_err() {
                break;
            }
            hi *= 2.0;
        }
        let mut bad = hi * 2.0;
        let mut good = hi;
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            if sys.with_performance(mid).is_ok() {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    } else {
        let mut bad = hi;
        let mut good = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (good + bad);
            if sys.with_performance(mid).is_ok() {
                good = mid;
            } else {
                bad = mid;
            }
        }
        good
    }
}

struct RootOutcome {
    value: f64,
    residual: f64,
    iterations: usize,
    bracket: (f64, f64),
}

/// Brent on the first ascending sign change of `f` over the scan grid, then
/// polished onto the side selected by `land_sign` (-1: f <= 0, +1: f >= 0)
/// so the junction lands at or inside the manifold point.
fn ascending_root<F>(
    grid: &[f64],
    f: F,
    tol: f64,
    max_iter: usize,
    land_sign: f64,
) -> Result<RootOutcome>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut prev = grid[0];
    let mut prev_r = f(prev)?;
    let mut evals = 1usize;
    if prev_r > 0.0 {
        return Err(Error::Infeasible(format!(
            "residual already positive at the lower end: f({prev}) = {prev_r:.6e}"
        )));
    }
    let mut bracket = None;
    for &g in &grid[1..] {
        let r = match f(g) {
            Ok(r) => r,
            // infeasible probe points cap the scan from above
            Err(Error::NoBnup(_)) | Err(Error::Domain(_)) => SENTINEL_FACTOR,
            Err(e) => return Err(e),
        };
        evals += 1;
        if r > 0.0 {
            bracket = Some((prev, g));
            break;
        }
        prev = g;
        prev_r = r;
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        Error::NoRoot(format!(
            "junction residual does not change sign over the scan (last f({prev}) = {prev_r:.3e})"
        ))
    })?;
    let (mut root, iters) = num::brent(lo, hi, |v| f(v).unwrap_or(SENTINEL_FACTOR), 1e-13, max_iter)?;
    evals += iters;
    let mut r = f(root)?;
    evals += 1;
    if r * land_sign < 0.0 {
        // bisect toward the landing side, well past the tolerance so the
        // returned root tracks the true one closely
        let inner = 1e-3 * tol;
        let (mut a, mut b) = if land_sign < 0.0 { (lo, root) } else { (root, hi) };
        let mut best: Option<(f64, f64)> = None;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let rm = f(mid)?;
            evals += 1;
            if rm * land_sign >= 0.0 {
                best = Some((mid, rm));
                if rm.abs() <= inner {
                    break;
                }
                if land_sign < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            } else if land_sign < 0.0 {
                b = mid;
            } else {
                a = mid;
            }
            if (b - a).abs() < 1e-14 {
                break;
            }
        }
        if let Some((v, rv)) = best {
            root = v;
            r = rv;
        }
    }
    if r.abs() > tol || r * land_sign < 0.0 {
        return Err(Error::NoRoot(format!(
            "root polish failed: residual {r:.3e} exceeds tolerance {tol:.3e}"
        )));
    }
    Ok(RootOutcome { value: root, residual: r, iterations: evals, bracket: (lo, hi) })
}

/// Validity verdicts for one surface/piece pair: anchor curvature,
/// containment over the trimmed part, and the anchor flow direction.
pub fn check_validity(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    surface: &SurfaceTrajectory,
    piece: &BarrierPiece,
) -> Result<ValidityReport> {
    let h = 1e-4;
    // one-sided stencils at the terminal anchor on re-integrated points
    let mut r = [0.0; 5];
    for (i, ri) in r.iter_mut().enumerate() {
        let (x, _, _) = surface.eval_at(sys, -(i as f64) * h)?;
        *ri = cap.projected_norm(&x);
    }
    let d1 = (25.0 * r[0] - 48.0 * r[1] + 36.0 * r[2] - 16.0 * r[3] + 3.0 * r[4]) / (12.0 * h);
    let d2 = (2.0 * r[0] - 5.0 * r[1] + 4.0 * r[2] - r[3]) / (h * h);
    let curvature = Check { pass: d1.abs() <= 1e-9 && d2 < 0.0, margin: -d2 };

    let beta = cap.beta();
    let max_norm = piece
        .samples
        .iter()
        .map(|s| cap.projected_norm(&s.state))
        .fold(f64::NEG_INFINITY, f64::max);
    let bound = beta * (1.0 + CONTAINMENT_REL_SLACK);
    let containment = Check { pass: max_norm <= bound, margin: bound - max_norm };

    // tangent at the anchor toward the non-escapable side of the boundary
    let axes = sys.projection().active_axes();
    let gamma = piece.origin.angle;
    let eps = 1e-5;
    let h_at = |g: f64| -> Result<f64> {
        let mut x = piece.origin.state.clone();
        x[axes[0]] = beta * g.cos();
        x[axes[1]] = beta * g.sin();
        let nu = cap.outward_normal(&x)?;
        minmax_hamiltonian(sys, &x, &nu)
    };
    let toward = if h_at(gamma + eps)? <= h_at(gamma - eps)? { 1.0 } else { -1.0 };
    let mut tangent = vec![0.0; sys.state_dim()];
    tangent[axes[0]] = -toward * gamma.sin();
    tangent[axes[1]] = toward * gamma.cos();
    let v = surface.velocity_at(sys, 0.0)?;
    let dir = num::dot(&v, &tangent);
    let direction = Check { pass: dir > 0.0, margin: dir };

    Ok(ValidityReport { curvature, containment, direction })
}

fn build_solution(
    sys_t: &dyn RelativeSystem,
    cap: &CaptivitySet,
    manifold: &ManifoldSpec,
    cfg: &SolveConfig,
) -> Result<(TrackingErrorBound, ValidityReport, Vec<f64>)> {
    let anchors = compute_bnup(sys_t, cap, &cfg.bnup)?;
    if anchors.len() != 2 {
        return Err(Error::Geometry(format!("expected two anchors, found {}", anchors.len())));
    }
    let beta = cap.beta();
    let mut surfaces = Vec::new();
    for a in &anchors {
        let side = locus_offset(manifold, &a.state).signum();
        let stop = move |_t: f64, x: &[f64]| {
            let mut d = 0.0;
            for i in 0..x.len() {
                d += manifold.locus_normal[i] * (x[i] - manifold.target[i]);
            }
            d * side < -0.05 * beta
        };
        surfaces.push(integrate_surface_stopping(sys_t, cap, a, &cfg.integrator, Some(&stop))?);
    }
    let barrier = assemble_barrier(sys_t, cap, &surfaces)?;
    let junction = barrier.junction.clone();
    let mut validity: Option<ValidityReport> = None;
    for (surface, piece) in surfaces.iter().zip(&barrier.pieces) {
        let rep = check_validity(sys_t, cap, surface, piece)?;
        validity = Some(match validity {
            None => rep,
            Some(v) => v.merge_worst(rep),
        });
    }
    let validity = validity.expect("two pieces");
    let teb = build_teb(sys_t, cap, barrier)?;
    Ok((teb, validity, junction))
}

fn require_validity(v: &ValidityReport) -> Result<()> {
    let named: [(&'static str, Check, f64); 3] = [
        ("anchor curvature", v.curvature, VALIDITY_MARGIN_MIN),
        ("containment", v.containment, 0.0),
        ("anchor direction", v.direction, VALIDITY_MARGIN_MIN),
    ];
    for (name, check, floor) in named {
        if !check.pass || check.margin < floor {
            return Err(Error::ValidityFailed {
                condition: name,
                detail: format!("margin {:.3e}", check.margin),
            });
        }
    }
    Ok(())
}

/// Solve the planning performance for a prescribed safety margin: the
/// margin becomes the captivity radius and theta is driven until the
/// barrier junction reaches the manifold point.
pub fn solve_theta_for_alpha(
    sys: &dyn RelativeSystem,
    alpha: f64,
    manifold: Option<&ManifoldSpec>,
    cfg: &SolveConfig,
) -> Result<SolveOutcome> {
    let started = std::time::Instant::now();
    let cap = CaptivitySet::new(alpha, sys.projection().clone())?;
    let owned;
    let manifold = match manifold {
        Some(m) => m,
        None => {
            owned = ManifoldSpec::axis_point(sys, alpha);
            &owned
        }
    };
    let sup = performance_sup(sys);
    let n = cfg.bracket_points.max(4);
    // linear scan over most of the range plus a geometric tail toward the
    // performance bound, where the root migrates for large margins
    let mut grid = vec![0.0];
    for k in 1..=n {
        grid.push(0.9 * sup * k as f64 / n as f64);
    }
    for j in 0..14 {
        grid.push(sup * (1.0 - 0.1 * 0.5f64.powi(j)));
    }
    let f = |theta: f64| junction_residual(sys, &cap, theta, manifold, cfg);
    let root = match ascending_root(&grid, f, cfg.tol, cfg.max_iter, -1.0) {
        Err(Error::Infeasible(d)) => {
            return Err(Error::Infeasible(format!(
                "margin {alpha} is below the feasible minimum: {d}"
            )))
        }
        other => other?,
    };

    let sys_t = sys.with_performance(root.value)?;
    let (teb, validity, junction) = build_solution(sys_t.as_ref(), &cap, manifold, cfg)?;
    require_validity(&validity)?;
    let report = SolveReport {
        solved_value: root.value,
        residual: root.residual,
        junction,
        validity,
        limits: None,
        iterations: root.iterations,
        wall_time: started.elapsed().as_secs_f64(),
        degenerate: root.value == 0.0,
        bracket: root.bracket,
    };
    Ok(SolveOutcome { report, teb })
}

/// Inverse objective: fix theta, solve for the margin (captivity radius)
/// whose junction reaches the manifold point.
pub fn solve_alpha_for_theta(
    sys: &dyn RelativeSystem,
    theta: f64,
    manifold_rule: Option<&dyn Fn(f64) -> ManifoldSpec>,
    cfg: &SolveConfig,
) -> Result<SolveOutcome> {
    let started = std::time::Instant::now();
    let sys_t = sys.with_performance(theta)?;
    let rule = |beta: f64| match manifold_rule {
        Some(r) => r(beta),
        None => ManifoldSpec::axis_point(sys, beta),
    };
    // residual is decreasing in beta: bracket by doubling until negative
    let f = |beta: f64| -> Result<f64> {
        let cap = CaptivitySet::new(beta, sys.projection().clone())?;
        let m = rule(beta);
        junction_residual(sys, &cap, theta, &m, cfg)
    };
    let mut lo = 1e-3;
    let mut r_lo = f(lo)?;
    let mut evals = 1;
    while r_lo <= 0.0 {
        lo *= 0.5;
        if lo < 1e-9 {
            return Err(Error::NoRoot("junction stays inside even for tiny radii".into()));
        }
        r_lo = f(lo)?;
        evals += 1;
    }
    let mut hi = lo;
    let mut r_hi = r_lo;
    while r_hi > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoRoot(
                "junction stays beyond the manifold point for all probed radii".into(),
            ));
        }
        r_hi = f(hi)?;
        evals += 1;
    }
    let descending = |beta: f64| f(beta).map(|r| -r);
    let grid = [lo, hi];
    let root = ascending_root(&grid, descending, cfg.tol, cfg.max_iter, 1.0)?;
    evals += root.iterations;

    let beta = root.value;
    let cap = CaptivitySet::new(beta, sys.projection().clone())?;
    let manifold = rule(beta);
    let (teb, validity, junction) = build_solution(sys_t.as_ref(), &cap, &manifold, cfg)?;
    require_validity(&validity)?;
    let report = SolveReport {
        solved_value: beta,
        residual: -root.residual,
        junction,
        validity,
        limits: None,
        iterations: evals,
        wall_time: started.elapsed().as_secs_f64(),
        degenerate: theta == 0.0,
        bracket: root.bracket,
    };
    Ok(SolveOutcome { report, teb })
}

/// Feasibility limits: the smallest margin admitting a closed barrier at
/// some theta, and the largest theta that still closes one at a large
/// margin probe (100x the minimum; infinity when even that is unbounded).
pub fn compute_limits(
    sys: &dyn RelativeSystem,
    manifold_rule: Option<&dyn Fn(f64) -> ManifoldSpec>,
    cfg: &SolveConfig,
) -> Result<Limits> {
    let rule = |beta: f64| match manifold_rule {
        Some(r) => r(beta),
        None => ManifoldSpec::axis_point(sys, beta),
    };
    // residual at theta -> 0 is decreasing in beta; its root is beta_min
    let g = |beta: f64| -> Result<f64> {
        let cap = CaptivitySet::new(beta, sys.projection().clone())?;
        let m = rule(beta);
        junction_residual(sys, &cap, 0.0, &m, cfg)
    };
    let mut lo = 1e-3;
    while g(lo)? <= 0.0 {
        lo *= 0.5;
        if lo < 1e-9 {
            return Err(Error::NoRoot("no positive lower bracket for the minimum margin".into()));
        }
    }
    let mut hi = lo;
    while g(hi)? > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoRoot("minimum margin bracket not found".into()));
        }
    }
    let (beta_min, _) = num::brent(lo, hi, |b| g(b).unwrap_or(SENTINEL_FACTOR), 1e-12, 200)?;

    // largest theta closing a barrier at the capped margin probe; the
    // model's own performance bound caps the answer when the probe root
    // cannot be located
    let beta_cap = 100.0 * beta_min;
    let theta_max = match solve_theta_for_alpha(sys, beta_cap, None, cfg) {
        Ok(out) => out.report.solved_value,
        Err(_) => performance_sup(sys),
    };
    Ok(Limits { beta_min, theta_max })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    pub theta: Option<f64>,
    pub junction: Vec<f64>,
    pub residual: f64,
    pub valid_curvature: bool,
    pub valid_containment: bool,
    pub valid_direction: bool,
    pub status: String,
}

/// Offline tabulation of the optimal theta across margins.
pub fn sweep(sys: &dyn RelativeSystem, betas: &[f64], cfg: &SolveConfig) -> Vec<SweepRow> {
    use rayon::prelude::*;
    betas
        .par_iter()
        .map(|&beta| match solve_theta_for_alpha(sys, beta, None, cfg) {
            Ok(out) => SweepRow {
                beta,
                theta: Some(out.report.solved_value),
                junction: out.report.junction.clone(),
                residual: out.report.residual,
                valid_curvature: out.report.validity.curvature.pass,
                valid_containment: out.report.validity.containment.pass,
                valid_direction: out.report.validity.direction.pass,
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                beta,
                theta: None,
                junction: vec![],
                residual: f64::NAN,
                valid_curvature: false,
                valid_containment: false,
                valid_direction: false,
                status: match e {
                    Error::Infeasible(_) => "infeasible".into(),
                    other => format!("error: {other}"),
                },
            },
        })
        .collect()
}
