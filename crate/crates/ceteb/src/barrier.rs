//! Barrier construction by retrograde integration of the coupled
//! state/adjoint system from the boundary anchors, assembly of the closed
//! barrier with trimming, and the resulting tracking error bound.

use crate::error::{Error, Result};
use crate::geometry::{nup_arcs, BnupPoint, CaptivitySet};
use crate::num;
use crate::polyline::{ChainIndex, P2};
use crate::system::RelativeSystem;

/// Relative width (times beta) of the boundary classification band.
pub const BOUNDARY_BAND_REL: f64 = 1e-7;

/// Tangency residual above which an accepted sample aborts integration.
pub const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    /// Base step of the fixed-step 4th-order Runge-Kutta scheme, seconds.
    pub step: f64,
    /// Retrograde horizon, seconds (integration runs over [-horizon, 0]).
    pub horizon: f64,
    /// Integration aborts once |x| exceeds this multiple of beta.
    pub diverge_factor: f64,
    /// Switching events are localized to this time tolerance, seconds.
    pub event_time_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-4,
            horizon: 5.0,
            diverge_factor: 10.0,
            event_time_tol: 1e-12,
        }
    }
}

/// One accepted retrograde sample. `u_hf` is the tracker corner held while
/// stepping into this sample; `u_lf` is the planner maximizer at the sample.
#[derive(Debug, Clone)]
pub struct SurfaceSample {
    pub t: f64,
    pub state: Vec<f64>,
    /// Unit surface normal.
    pub adjoint: Vec<f64>,
    pub u_lf: Vec<f64>,
    pub u_hf: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationEnd {
    Horizon,
    Stopped,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct SurfaceTrajectory {
    /// Ascending in time; the last sample is the anchor at t = 0.
    pub samples: Vec<SurfaceSample>,
    pub t_bnup: f64,
    /// Start of the barrier-contributing part, set by assembly.
    pub t_hat: Option<f64>,
    pub origin: BnupPoint,
    pub switch_times: Vec<f64>,
    /// Refined times where |P x| crosses beta.
    pub rim_crossings: Vec<f64>,
    pub end: IntegrationEnd,
}

struct Stepper<'a> {
    sys: &'a dyn RelativeSystem,
    n: usize,
    u_lf: Vec<f64>,
    f: Vec<f64>,
    jac: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a dyn RelativeSystem) -> Self {
        let n = sys.state_dim();
        Stepper {
            sys,
            n,
            u_lf: vec![0.0; sys.planner_input_set().len()],
            f: vec![0.0; n],
            jac: vec![0.0; n * n],
            k: [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]],
            tmp: vec![0.0; 2 * n],
        }
    }

    /// dy/dt of the coupled (state, adjoint) pair at fixed tracker corner.
    fn rhs(&mut self, y: &[f64], u_hf: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (x, xi) = y.split_at(n);
        self.sys.planner_best_response(x, xi, u_hf, &mut self.u_lf);
        self.sys.vector_field(x, &self.u_lf, u_hf, &mut self.f);
        dy[..n].copy_from_slice(&self.f);
        self.sys.state_jacobian(x, &self.u_lf, u_hf, &mut self.jac);
        // adjoint' = -J^T xi
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += self.jac[i * n + j] * xi[i];
            }
            dy[n + j] = -acc;
        }
    }

    fn step(&mut self, y: &[f64], h: f64, u_hf: &[f64], out: &mut [f64]) {
        let n2 = 2 * self.n;
        let mut k = std::mem::take(&mut self.k);
        self.rhs(y, u_hf, &mut k[0]);
        for i in 0..n2 {
            self.tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.rhs(&tmp, u_hf, &mut k[1]);
        self.tmp = tmp;
        for i in 0..n2 {
            self.tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.rhs(&tmp, u_hf, &mut k[2]);
        self.tmp = tmp;
        for i in 0..n2 {
            self.tmp[i] = y[i] + h * k[2][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.rhs(&tmp, u_hf, &mut k[3]);
        self.tmp = tmp;
        for i in 0..n2 {
            out[i] = y[i] + (h / 6.0) * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        self.k = k;
    }
}

fn tracker_corner(sys: &dyn RelativeSystem, coeffs: &[f64], tie: f64, out: &mut [f64]) {
    for (j, c) in coeffs.iter().enumerate() {
        let iv = sys.tracker_input_set()[j];
        out[j] = if *c > 0.0 {
            iv.lo
        } else if *c < 0.0 {
            iv.hi
        } else if tie >= 0.0 {
            iv.hi
        } else {
            iv.lo
        };
    }
}

/// Adjoint derivative -J^T xi along a surface, with J the state Jacobian
/// at the surface-optimal input pair.
pub fn adjoint_rhs(
    sys: &dyn RelativeSystem,
    x: &[f64],
    xi: &[f64],
    u_lf: &[f64],
    u_hf: &[f64],
) -> Vec<f64> {
    let n = sys.state_dim();
    let mut jac = vec![0.0; n * n];
    sys.state_jacobian(x, u_lf, u_hf, &mut jac);
    let mut out = vec![0.0; n];
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            acc += jac[i * n + j] * xi[i];
        }
        out[j] = -acc;
    }
    out
}

/// Tangency residual xi^T f at a sample (unit adjoint, planner maximizer,
/// held tracker corner).
pub fn tangency_residual(sys: &dyn RelativeSystem, sample: &SurfaceSample) -> f64 {
    let mut f = vec![0.0; sys.state_dim()];
    sys.vector_field(&sample.state, &sample.u_lf, &sample.u_hf, &mut f);
    num::dot(&sample.adjoint, &f)
}

/// Retrograde integration of one semipermeable surface from a boundary
/// anchor over `[-horizon, 0]`. Divergence is an error here; use
/// [`integrate_surface_stopping`] when early termination is expected.
pub fn integrate_surface(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    anchor: &BnupPoint,
    horizon: f64,
    step: f64,
) -> Result<SurfaceTrajectory> {
    let cfg = IntegratorConfig { step, horizon, ..IntegratorConfig::default() };
    let traj = integrate_surface_stopping(sys, cap, anchor, &cfg, None)?;
    if traj.end == IntegrationEnd::Diverged {
        let last = traj.samples.first().expect("at least the anchor");
        return Err(Error::Diverged {
            t: last.t,
            norm: num::norm(&last.state),
            limit: cfg.diverge_factor * cap.beta(),
        });
    }
    Ok(traj)
}

/// As [`integrate_surface`], but an optional stop predicate ends the run
/// early (recorded as `IntegrationEnd::Stopped`) and divergence is recorded
/// rather than raised.
pub fn integrate_surface_stopping(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    anchor: &BnupPoint,
    cfg: &IntegratorConfig,
    stop: Option<&dyn Fn(f64, &[f64]) -> bool>,
) -> Result<SurfaceTrajectory> {
    if cfg.horizon <= 0.0 || cfg.step <= 0.0 {
        return Err(Error::Config("horizon and step must be positive".into()));
    }
    let n = sys.state_dim();
    let m_hf = sys.tracker_input_set().len();
    let mut st = Stepper::new(sys);
    let beta = cap.beta();
    // dead band on switching coefficients; suppresses re-fires from the
    // exactly-zero coefficient at anchors and freshly cut events
    let coeff_band = 1e-10 * (1.0 + beta);
    let diverge_limit = cfg.diverge_factor * beta;

    let mut y = vec![0.0; 2 * n];
    y[..n].copy_from_slice(&anchor.state);
    y[n..].copy_from_slice(&anchor.outward_normal);
    num::normalize(&mut y[n..]);

    let affine = {
        let mut c = vec![0.0; m_hf];
        sys.tracker_affine_coeffs(&y[..n], &y[n..], &mut c)
    };

    // initial tracker corner: one-sided retrograde trial at -step/2
    let mut mode = vec![0.0; m_hf];
    let mut coeffs = vec![0.0; m_hf];
    if affine {
        let tie = sys.tracker_tie_sign();
        let mut chosen = false;
        let mut trial_out = vec![0.0; 2 * n];
        let mut corners: Vec<Vec<f64>> = Vec::new();
        let mut base = vec![0.0; m_hf];
        tracker_corner(sys, &vec![0.0; m_hf], tie, &mut base);
        corners.push(base.clone());
        for j in 0..m_hf {
            let mut alt = base.clone();
            let iv = sys.tracker_input_set()[j];
            alt[j] = if base[j] == iv.hi { iv.lo } else { iv.hi };
            corners.push(alt);
        }
        for corner in &corners {
            st.step(&y, -0.5 * cfg.step, corner, &mut trial_out);
            sys.tracker_affine_coeffs(&trial_out[..n], &trial_out[n..], &mut coeffs);
            let mut consistent = vec![0.0; m_hf];
            tracker_corner(sys, &coeffs, tie, &mut consistent);
            if consistent == *corner {
                mode.copy_from_slice(corner);
                chosen = true;
                break;
            }
        }
        if !chosen {
            mode.copy_from_slice(&corners[0]);
        }
    } else {
        let mut u_lf = vec![0.0; sys.planner_input_set().len()];
        sys.surface_optimal_inputs(&y[..n], &y[n..], &mut u_lf, &mut mode);
    }

    let mut samples = Vec::with_capacity((cfg.horizon / cfg.step) as usize + 16);
    let mut switch_times = Vec::new();
    let mut rim_crossings = Vec::new();
    let push_sample = |samples: &mut Vec<SurfaceSample>,
                       st: &mut Stepper,
                       t: f64,
                       y: &[f64],
                       mode: &[f64]|
     -> Result<()> {
        let (x, xi) = y.split_at(n);
        let mut u_lf = vec![0.0; sys.planner_input_set().len()];
        sys.planner_best_response(x, xi, mode, &mut u_lf);
        let s = SurfaceSample {
            t,
            state: x.to_vec(),
            adjoint: xi.to_vec(),
            u_lf,
            u_hf: mode.to_vec(),
        };
        let resid = tangency_residual(st.sys, &s);
        if resid.abs() > DRIFT_TOL {
            return Err(Error::IntegrationDrift { t, residual: resid.abs(), tol: DRIFT_TOL });
        }
        samples.push(s);
        Ok(())
    };

    push_sample(&mut samples, &mut st, 0.0, &y, &mode)?;
    let mut t = 0.0;
    let mut y_new = vec![0.0; 2 * n];
    let mut end = IntegrationEnd::Horizon;
    let rim_band = 1e-11 * beta;

    'outer: while t > -cfg.horizon + 0.5 * cfg.step {
        let h = (-cfg.horizon - t).max(-cfg.step);
        st.step(&y, h, &mode, &mut y_new);

        // switching event: a coefficient now demands the other corner
        let mut fired = false;
        if affine {
            sys.tracker_affine_coeffs(&y_new[..n], &y_new[n..], &mut coeffs);
            for j in 0..m_hf {
                let iv = sys.tracker_input_set()[j];
                let opposing = (mode[j] == iv.lo && coeffs[j] < -coeff_band)
                    || (mode[j] == iv.hi && coeffs[j] > coeff_band);
                if opposing {
                    // bisect the step fraction to the event time tolerance
                    let mut lo = 0.0f64;
                    let mut hi = h;
                    let mut cj = vec![0.0; m_hf];
                    while (hi - lo).abs() > cfg.event_time_tol {
                        let mid = 0.5 * (lo + hi);
                        st.step(&y, mid, &mode, &mut y_new);
                        sys.tracker_affine_coeffs(&y_new[..n], &y_new[n..], &mut cj);
                        let opp = (mode[j] == iv.lo && cj[j] < 0.0)
                            || (mode[j] == iv.hi && cj[j] > 0.0);
                        if opp {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    st.step(&y, hi, &mode, &mut y_new);
                    t += hi;
                    num::normalize(&mut y_new[n..]);
                    push_sample(&mut samples, &mut st, t, &y_new, &mode)?;
                    y.copy_from_slice(&y_new);
                    mode[j] = if mode[j] == iv.lo { iv.hi } else { iv.lo };
                    switch_times.push(t);
                    fired = true;
                    break;
                }
            }
        } else {
            // continuous tracker optimum assumed: refresh each step
            let mut u_lf = vec![0.0; sys.planner_input_set().len()];
            sys.surface_optimal_inputs(&y_new[..n], &y_new[n..], &mut u_lf, &mut mode);
        }

        if !fired {
            // rim crossing (|P x| - beta sign change) gets a refined sample
            let g0 = cap.projected_norm(&y[..n]) - beta;
            let g1 = cap.projected_norm(&y_new[..n]) - beta;
            if (g0 < -rim_band && g1 > rim_band) || (g0 > rim_band && g1 < -rim_band) {
                let mut lo = 0.0f64;
                let mut hi = h;
                let mut ym = vec![0.0; 2 * n];
                while (hi - lo).abs() > cfg.event_time_tol {
                    let mid = 0.5 * (lo + hi);
                    st.step(&y, mid, &mode, &mut ym);
                    let gm = cap.projected_norm(&ym[..n]) - beta;
                    if (g0 < 0.0) == (gm < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                st.step(&y, hi, &mode, &mut ym);
                num::normalize(&mut ym[n..]);
                push_sample(&mut samples, &mut st, t + hi, &ym, &mode)?;
                rim_crossings.push(t + hi);
            }
            t += h;
            num::normalize(&mut y_new[n..]);
            push_sample(&mut samples, &mut st, t, &y_new, &mode)?;
            y.copy_from_slice(&y_new);
        }

        if num::norm(&y[..n]) > diverge_limit {
            end = IntegrationEnd::Diverged;
            break 'outer;
        }
        if let Some(stop_fn) = stop {
            if stop_fn(t, &y[..n]) {
                end = IntegrationEnd::Stopped;
                break 'outer;
            }
        }
    }

    samples.reverse();
    switch_times.reverse();
    rim_crossings.reverse();
    Ok(SurfaceTrajectory {
        samples,
        t_bnup: 0.0,
        t_hat: None,
        origin: anchor.clone(),
        switch_times,
        rim_crossings,
        end,
    })
}

impl SurfaceTrajectory {
    /// Re-integrated point at an arbitrary time inside the sampled range.
    /// Steps retrograde from the nearest later sample with that segment's
    /// tracker corner.
    pub fn eval_at(&self, sys: &dyn RelativeSystem, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let first = self.samples.first().ok_or_else(|| Error::Geometry("empty surface".into()))?;
        let last = self.samples.last().unwrap();
        if t < first.t - 1e-12 || t > last.t + 1e-12 {
            return Err(Error::Domain(format!(
                "eval_at time {t} outside sampled range [{}, {}]",
                first.t, last.t
            )));
        }
        // first sample with sample.t >= t
        let idx = self.samples.partition_point(|s| s.t < t);
        let upper = &self.samples[idx.min(self.samples.len() - 1)];
        // the segment (idx-1, idx) was produced stepping from `upper` with
        // the corner stored on the earlier sample
        let mode = if idx == 0 {
            upper.u_hf.clone()
        } else {
            self.samples[idx - 1].u_hf.clone()
        };
        let n = upper.state.len();
        let mut y = vec![0.0; 2 * n];
        y[..n].copy_from_slice(&upper.state);
        y[n..].copy_from_slice(&upper.adjoint);
        let dt = t - upper.t;
        if dt.abs() > 0.0 {
            let mut st = Stepper::new(sys);
            let mut out = vec![0.0; 2 * n];
            st.step(&y, dt, &mode, &mut out);
            y = out;
            num::normalize(&mut y[n..]);
        }
        let (x, xi) = y.split_at(n);
        Ok((x.to_vec(), xi.to_vec(), mode))
    }

    /// Forward-time velocity at time t (RHS with the planner maximizer and
    /// the segment's tracker corner).
    pub fn velocity_at(&self, sys: &dyn RelativeSystem, t: f64) -> Result<Vec<f64>> {
        let (x, xi, mode) = self.eval_at(sys, t)?;
        let mut u_lf = vec![0.0; sys.planner_input_set().len()];
        sys.planner_best_response(&x, &xi, &mode, &mut u_lf);
        let mut f = vec![0.0; sys.state_dim()];
        sys.vector_field(&x, &u_lf, &mode, &mut f);
        Ok(f)
    }
}

/// Barrier-contributing part of one surface: samples over [t_hat, 0].
#[derive(Debug, Clone)]
pub struct BarrierPiece {
    pub samples: Vec<SurfaceSample>,
    pub t_hat: f64,
    pub origin: BnupPoint,
    pub switch_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ClosedBarrier {
    pub pieces: Vec<BarrierPiece>,
    /// Meeting point of the pieces (element of the junction manifold).
    pub junction: Vec<f64>,
    pub trimmed: bool,
}

fn critical_plane(sys: &dyn RelativeSystem) -> Result<(usize, usize)> {
    let axes = sys.projection().active_axes();
    if sys.state_dim() != 2 || axes.len() != 2 {
        return Err(Error::Unsupported(
            "barrier assembly implemented for planar systems with a full critical plane".into(),
        ));
    }
    Ok((axes[0], axes[1]))
}

fn to_p2(x: &[f64], axes: (usize, usize)) -> P2 {
    [x[axes.0], x[axes.1]]
}

/// Compose the closed barrier from integrated surfaces: locate the junction
/// (pairwise surface intersection; boundary-arc exits as fallback), refine
/// it by a two-point Newton iteration on re-integrated trajectories, and
/// discard the portions beyond it.
pub fn assemble_barrier(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    surfaces: &[SurfaceTrajectory],
) -> Result<ClosedBarrier> {
    let axes = critical_plane(sys)?;
    if surfaces.len() != 2 {
        return Err(Error::Unsupported(format!(
            "barrier assembly expects two surfaces, got {}",
            surfaces.len()
        )));
    }
    let chains: Vec<Vec<P2>> = surfaces
        .iter()
        .map(|s| s.samples.iter().map(|smp| to_p2(&smp.state, axes)).collect())
        .collect();
    let index = ChainIndex::new(chains);
    let hits = index.chain_intersections(0, 1);

    let junction;
    let cut_times: [f64; 2];
    if let Some(best) = hits
        .iter()
        .map(|&(ia, sa, ib, sb)| {
            let ta = lerp_time(&surfaces[0], ia, sa);
            let tb = lerp_time(&surfaces[1], ib, sb);
            (ta, tb)
        })
        .max_by(|a, b| a.0.min(a.1).partial_cmp(&b.0.min(b.1)).unwrap())
    {
        let (ta, tb) = refine_junction(sys, &surfaces[0], &surfaces[1], best, axes)?;
        let (xa, _, _) = surfaces[0].eval_at(sys, ta)?;
        let (xb, _, _) = surfaces[1].eval_at(sys, tb)?;
        junction = xa.iter().zip(&xb).map(|(a, b)| 0.5 * (a + b)).collect::<Vec<f64>>();
        cut_times = [ta, tb];
    } else {
        // no mutual intersection: fall back to each surface's first
        // retrograde exit through the non-escapable boundary arc
        let mut exits = Vec::new();
        for s in surfaces {
            let exit = s
                .rim_crossings
                .iter()
                .rev()
                .find(|&&tc| {
                    let (x, _, _) = match s.eval_at(sys, tc) {
                        Ok(v) => v,
                        Err(_) => return false,
                    };
                    matches!(
                        crate::geometry::nup_membership(sys, cap, &x),
                        Ok(crate::geometry::BoundaryClass::Nup)
                    )
                })
                .copied();
            exits.push(exit);
        }
        match (exits[0], exits[1]) {
            (Some(ta), Some(tb)) => {
                let (xa, _, _) = surfaces[0].eval_at(sys, ta)?;
                let (xb, _, _) = surfaces[1].eval_at(sys, tb)?;
                junction = xa.iter().zip(&xb).map(|(a, b)| 0.5 * (a + b)).collect();
                cut_times = [ta, tb];
            }
            _ => {
                return Err(Error::BarrierOpen(
                    "surfaces neither intersect each other nor exit through the \
                     non-escapable boundary arc within the horizon"
                        .into(),
                ))
            }
        }
    }

    let mut pieces = Vec::new();
    let mut trimmed = false;
    for (s, &t_hat) in surfaces.iter().zip(&cut_times) {
        let keep_from = s.samples.partition_point(|smp| smp.t < t_hat - 1e-15);
        trimmed |= keep_from > 0;
        let mut samples = Vec::with_capacity(s.samples.len() - keep_from + 1);
        let (x, xi, mode) = s.eval_at(sys, t_hat)?;
        let mut u_lf = vec![0.0; sys.planner_input_set().len()];
        sys.planner_best_response(&x, &xi, &mode, &mut u_lf);
        samples.push(SurfaceSample { t: t_hat, state: x, adjoint: xi, u_lf, u_hf: mode });
        for smp in &s.samples[keep_from..] {
            if smp.t > t_hat + 1e-15 {
                samples.push(smp.clone());
            }
        }
        pieces.push(BarrierPiece {
            samples,
            t_hat,
            origin: s.origin.clone(),
            switch_times: s.switch_times.iter().copied().filter(|&t| t >= t_hat).collect(),
        });
    }
    Ok(ClosedBarrier { pieces, junction, trimmed })
}

fn lerp_time(s: &SurfaceTrajectory, seg: usize, frac: f64) -> f64 {
    let t0 = s.samples[seg].t;
    let t1 = s.samples[seg + 1].t;
    t0 + frac * (t1 - t0)
}

/// Newton iteration on g(ta, tb) = A(ta) - B(tb) = 0 with re-integrated
/// evaluations; velocities supply the Jacobian columns.
fn refine_junction(
    sys: &dyn RelativeSystem,
    a: &SurfaceTrajectory,
    b: &SurfaceTrajectory,
    seed: (f64, f64),
    axes: (usize, usize),
) -> Result<(f64, f64)> {
    let (mut ta, mut tb) = seed;
    let clamp = |t: f64, s: &SurfaceTrajectory| {
        t.clamp(s.samples.first().unwrap().t, s.samples.last().unwrap().t)
    };
    for _ in 0..60 {
        ta = clamp(ta, a);
        tb = clamp(tb, b);
        let (xa, _, _) = a.eval_at(sys, ta)?;
        let (xb, _, _) = b.eval_at(sys, tb)?;
        let g = [xa[axes.0] - xb[axes.0], xa[axes.1] - xb[axes.1]];
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn < 1e-13 {
            break;
        }
        let va = a.velocity_at(sys, ta)?;
        let vb = b.velocity_at(sys, tb)?;
        let j = [
            [va[axes.0], -vb[axes.0]],
            [va[axes.1], -vb[axes.1]],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-18 {
            return Err(Error::Geometry("junction refinement: singular tangents".into()));
        }
        let dta = (g[0] * j[1][1] - g[1] * j[0][1]) / det;
        let dtb = (j[0][0] * g[1] - j[1][0] * g[0]) / det;
        ta -= dta;
        tb -= dtb;
        if dta.abs() < 1e-15 && dtb.abs() < 1e-15 {
            break;
        }
    }
    Ok((ta, tb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryComponent {
    Nup,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Interior,
    Boundary(BoundaryComponent),
    Outside,
}

/// Nearest barrier element to a query point.
#[derive(Debug, Clone)]
pub struct NearestBarrier {
    pub piece: usize,
    pub segment: usize,
    pub param: f64,
    pub dist: f64,
    /// Index of the nearer sample endpoint of the segment.
    pub sample: usize,
}

/// Closed region bounded by the non-escapable boundary arc and the barrier
/// pieces, with membership classification.
pub struct TrackingErrorBound {
    beta: f64,
    axes: (usize, usize),
    arc: (f64, f64),
    arc_points: Vec<P2>,
    barrier: ClosedBarrier,
    loop_index: ChainIndex,
    barrier_index: ChainIndex,
    wte: f64,
    bbox: ([f64; 2], [f64; 2]),
}

/// Assemble the bound from the barrier: boundary = arc between the anchors
/// plus the trimmed pieces; the worst-case tracking error must equal beta.
pub fn build_teb(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    barrier: ClosedBarrier,
) -> Result<TrackingErrorBound> {
    let axes = critical_plane(sys)?;
    if barrier.pieces.len() != 2 {
        return Err(Error::Unsupported("bound assembly expects two barrier pieces".into()));
    }
    let anchors: Vec<BnupPoint> = barrier.pieces.iter().map(|p| p.origin.clone()).collect();
    let arcs = nup_arcs(sys, cap, &anchors)?;
    if arcs.len() != 1 {
        return Err(Error::Geometry(format!(
            "expected one non-escapable boundary arc, found {}",
            arcs.len()
        )));
    }
    let (glo, ghi) = arcs[0];
    let beta = cap.beta();

    // match pieces to arc endpoints
    let angle_of = |p: &BnupPoint| p.angle;
    let (first, second) = if (angle_of(&barrier.pieces[0].origin) - glo).abs()
        < (angle_of(&barrier.pieces[1].origin) - glo).abs()
    {
        (0usize, 1usize)
    } else {
        (1, 0)
    };
    let wrap = |a: f64| {
        let mut d = a;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        d
    };
    let tol = 1e-6;
    if wrap(angle_of(&barrier.pieces[first].origin) - glo).abs() > tol
        || wrap(angle_of(&barrier.pieces[second].origin) - ghi).abs() > tol
    {
        return Err(Error::Geometry("barrier anchors do not terminate the boundary arc".into()));
    }

    // arc sampling fine enough that chord sag stays below the boundary band
    let band = BOUNDARY_BAND_REL * beta;
    let dg = (8.0 * 0.2 * band / beta).sqrt();
    let n_arc = (((ghi - glo) / dg).ceil() as usize).max(8);
    let mut arc_points = Vec::with_capacity(n_arc + 1);
    for i in 0..=n_arc {
        let g = glo + (ghi - glo) * i as f64 / n_arc as f64;
        arc_points.push([beta * g.cos(), beta * g.sin()]);
    }

    // boundary closure: arc endpoints coincide with piece anchors
    let a_first = to_p2(&barrier.pieces[first].samples.last().unwrap().state, axes);
    let a_second = to_p2(&barrier.pieces[second].samples.last().unwrap().state, axes);
    let d0 = ((arc_points[0][0] - a_first[0]).powi(2) + (arc_points[0][1] - a_first[1]).powi(2)).sqrt();
    let d1 = ((arc_points[n_arc][0] - a_second[0]).powi(2)
        + (arc_points[n_arc][1] - a_second[1]).powi(2))
    .sqrt();
    if d0 > 1e-9 || d1 > 1e-9 {
        return Err(Error::Geometry(format!(
            "boundary not closed: arc/anchor gaps {d0:e}, {d1:e}"
        )));
    }

    // single closed loop: arc (first -> second anchor), second piece
    // (anchor -> junction), first piece (junction -> anchor)
    let mut loop_pts: Vec<P2> = arc_points.clone();
    for smp in barrier.pieces[second].samples.iter().rev() {
        loop_pts.push(to_p2(&smp.state, axes));
    }
    for smp in barrier.pieces[first].samples.iter() {
        loop_pts.push(to_p2(&smp.state, axes));
    }

    let wte = loop_pts
        .iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    if (wte - beta).abs() > 1e-9 {
        return Err(Error::Geometry(format!(
            "worst-case tracking error {wte} does not equal the set radius {beta}"
        )));
    }

    let mut bbox = ([f64::INFINITY, f64::INFINITY], [f64::NEG_INFINITY, f64::NEG_INFINITY]);
    for p in &loop_pts {
        bbox.0[0] = bbox.0[0].min(p[0]);
        bbox.0[1] = bbox.0[1].min(p[1]);
        bbox.1[0] = bbox.1[0].max(p[0]);
        bbox.1[1] = bbox.1[1].max(p[1]);
    }

    let loop_index = ChainIndex::new(vec![loop_pts]);
    let barrier_chains: Vec<Vec<P2>> = barrier
        .pieces
        .iter()
        .map(|p| p.samples.iter().map(|s| to_p2(&s.state, axes)).collect())
        .collect();
    let barrier_index = ChainIndex::new(barrier_chains);

    Ok(TrackingErrorBound {
        beta,
        axes,
        arc: (glo, ghi),
        arc_points,
        barrier,
        loop_index,
        barrier_index,
        wte,
        bbox,
    })
}

impl TrackingErrorBound {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn wte(&self) -> f64 {
        self.wte
    }

    pub fn barrier(&self) -> &ClosedBarrier {
        &self.barrier
    }

    pub fn arc_range(&self) -> (f64, f64) {
        self.arc
    }

    pub fn arc_points(&self) -> &[P2] {
        &self.arc_points
    }

    pub fn junction(&self) -> &[f64] {
        &self.barrier.junction
    }

    pub fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        self.bbox
    }

    pub fn critical_axes(&self) -> (usize, usize) {
        self.axes
    }

    fn plane(&self, x: &[f64]) -> P2 {
        [x[self.axes.0], x[self.axes.1]]
    }

    /// Distance to the non-escapable boundary arc (exact: radial inside the
    /// angular range, endpoint distance outside).
    pub fn arc_distance(&self, x: &[f64]) -> f64 {
        let p = self.plane(x);
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let phi = p[1].atan2(p[0]);
        let (glo, ghi) = self.arc;
        for k in [-1.0, 0.0, 1.0] {
            let a = phi + k * 2.0 * std::f64::consts::PI;
            if a >= glo && a <= ghi {
                return (r - self.beta).abs();
            }
        }
        let d0 = ((p[0] - self.beta * glo.cos()).powi(2) + (p[1] - self.beta * glo.sin()).powi(2))
            .sqrt();
        let d1 = ((p[0] - self.beta * ghi.cos()).powi(2) + (p[1] - self.beta * ghi.sin()).powi(2))
            .sqrt();
        d0.min(d1)
    }

    pub fn barrier_nearest(&self, x: &[f64]) -> NearestBarrier {
        self.barrier_near_within(x, f64::INFINITY).expect("barrier is nonempty")
    }

    /// Nearest barrier element when one lies within `radius`; `None`
    /// guarantees the barrier is farther than that.
    pub fn barrier_near_within(&self, x: &[f64], radius: f64) -> Option<NearestBarrier> {
        let n = self.barrier_index.nearest_within(self.plane(x), radius)?;
        let sample = if n.param <= 0.5 { n.segment } else { n.segment + 1 };
        Some(NearestBarrier {
            piece: n.chain,
            segment: n.segment,
            param: n.param,
            dist: n.dist,
            sample,
        })
    }

    /// Raw even-odd location against the boundary loop, with no band logic.
    pub fn even_odd_interior(&self, x: &[f64]) -> bool {
        self.loop_index.even_odd_inside(self.plane(x))
    }

    /// Classification with a boundary band of width 1e-7 * beta. Points
    /// within the band of the boundary arc label as the arc component even
    /// when a barrier endpoint coincides (the anchors carry both).
    pub fn membership(&self, x: &[f64]) -> Membership {
        let band = BOUNDARY_BAND_REL * self.beta;
        let d_arc = self.arc_distance(x);
        if d_arc <= band {
            return Membership::Boundary(BoundaryComponent::Nup);
        }
        if self.barrier_near_within(x, band).is_some() {
            return Membership::Boundary(BoundaryComponent::Barrier);
        }
        if self.loop_index.even_odd_inside(self.plane(x)) {
            Membership::Interior
        } else {
            Membership::Outside
        }
    }

    /// Distance to the full bound boundary.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.arc_distance(x).min(self.barrier_nearest(x).dist)
    }
}

/// Free-function classification entry point.
pub fn teb_membership(teb: &TrackingErrorBound, x: &[f64]) -> Membership {
    teb.membership(x)
}
