//! Captivity-set geometry: boundary classification through the min-max
//! tangency condition, and the anchor points where it holds with equality.

use crate::error::{Error, Result};
use crate::num;
use crate::system::{Interval, RelativeSystem};

/// Relative tolerance (times beta) for "on the boundary" checks.
pub const BOUNDARY_REL_TOL: f64 = 1e-9;

/// Ball `{ x : ||P x|| <= beta }` in relative-state space.
#[derive(Debug, Clone)]
pub struct CaptivitySet {
    beta: f64,
    projection: crate::system::Projection,
}

impl CaptivitySet {
    pub fn new(beta: f64, projection: crate::system::Projection) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("captivity radius must be positive, got {beta}")));
        }
        Ok(CaptivitySet { beta, projection })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn projection(&self) -> &crate::system::Projection {
        &self.projection
    }

    pub fn projected_norm(&self, x: &[f64]) -> f64 {
        self.projection.norm(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.projected_norm(x) <= self.beta
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        (self.projected_norm(x) - self.beta).abs() <= BOUNDARY_REL_TOL * self.beta
    }

    /// Outward unit normal P x / ||P x||; zero projected norm has no normal.
    pub fn outward_normal(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut nu = vec![0.0; x.len()];
        self.projection.apply(x, &mut nu);
        let n = num::norm(&nu);
        if n == 0.0 {
            return Err(Error::Domain("outward normal undefined at zero projected norm".into()));
        }
        num::scale(&mut nu, 1.0 / n);
        Ok(nu)
    }
}

/// Boundary anchor where the min-max tangency condition holds with equality.
#[derive(Debug, Clone)]
pub struct BnupPoint {
    pub state: Vec<f64>,
    /// Free (non-critical) coordinates of the anchor.
    pub kappa: Vec<f64>,
    pub outward_normal: Vec<f64>,
    /// Angle of the anchor in the critical plane.
    pub angle: f64,
}

/// min over the tracker box of max over the planner box of nu . f(x, .).
/// The order is fixed: the tracker plays state feedback against a
/// nonanticipative planner.
pub fn minmax_hamiltonian(sys: &dyn RelativeSystem, x: &[f64], nu: &[f64]) -> Result<f64> {
    if num::norm(nu) == 0.0 {
        return Err(Error::Domain("minmax_hamiltonian: zero normal".into()));
    }
    let mut u_lf = vec![0.0; sys.planner_input_set().len()];
    let mut u_hf = vec![0.0; sys.tracker_input_set().len()];
    sys.surface_optimal_inputs(x, nu, &mut u_lf, &mut u_hf);
    let mut f = vec![0.0; sys.state_dim()];
    sys.vector_field(x, &u_lf, &u_hf, &mut f);
    Ok(num::dot(nu, &f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryClass {
    /// No instantaneous escape against an optimal tracker (closed: ties in).
    Nup,
    Escapable,
}

/// Absolute tie band on the unit-normal Hamiltonian: exact equality points
/// evaluate to rounding noise, and the condition is closed (ties are in).
pub const HAMILTONIAN_TIE_TOL: f64 = 1e-12;

/// Classify a boundary state. Precondition: ||P x|| = beta within
/// [`BOUNDARY_REL_TOL`] * beta.
pub fn nup_membership(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    x: &[f64],
) -> Result<BoundaryClass> {
    if !cap.on_boundary(x) {
        return Err(Error::Precondition(format!(
            "state is not on the captivity boundary: ||P x|| = {}, beta = {}",
            cap.projected_norm(x),
            cap.beta()
        )));
    }
    let nu = cap.outward_normal(x)?;
    let h = minmax_hamiltonian(sys, x, &nu)?;
    Ok(if h <= HAMILTONIAN_TIE_TOL { BoundaryClass::Nup } else { BoundaryClass::Escapable })
}

/// Grid over the free (non-critical) coordinates used when the state has
/// more dimensions than the critical plane.
#[derive(Debug, Clone)]
pub struct KappaGrid {
    pub ranges: Vec<Interval>,
    pub points_per_dim: usize,
}

#[derive(Debug, Clone)]
pub struct BnupConfig {
    /// Scan resolution along the boundary circle.
    pub boundary_samples: usize,
    pub kappa_grid: Option<KappaGrid>,
}

impl Default for BnupConfig {
    fn default() -> Self {
        BnupConfig { boundary_samples: 720, kappa_grid: None }
    }
}

/// Compose a full state from an angle in the critical plane plus free
/// coordinates, for a projection with exactly two active axes.
fn compose_state(cap: &CaptivitySet, n: usize, angle: f64, kappa: &[f64]) -> Vec<f64> {
    let axes = cap.projection().active_axes();
    let mut x = vec![0.0; n];
    x[axes[0]] = cap.beta() * angle.cos();
    x[axes[1]] = cap.beta() * angle.sin();
    let mut k = 0;
    for i in 0..n {
        if !cap.projection().mask()[i] {
            x[i] = kappa[k];
            k += 1;
        }
    }
    x
}

fn hamiltonian_at(sys: &dyn RelativeSystem, cap: &CaptivitySet, angle: f64, kappa: &[f64]) -> f64 {
    let x = compose_state(cap, sys.state_dim(), angle, kappa);
    let nu = cap.outward_normal(&x).expect("boundary point has a normal");
    minmax_hamiltonian(sys, &x, &nu).expect("nonzero normal")
}

/// All equality anchors of the boundary tangency condition, found by sign
/// scanning plus bisection along the boundary circle (per free-grid cell).
/// Only critical planes of dimension two are supported.
pub fn compute_bnup(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    cfg: &BnupConfig,
) -> Result<Vec<BnupPoint>> {
    let axes = cap.projection().active_axes();
    if axes.len() != 2 {
        return Err(Error::Unsupported(format!(
            "anchor search needs a two-dimensional critical plane, got {}",
            axes.len()
        )));
    }
    let n = sys.state_dim();
    let free = n - 2;
    let kappas: Vec<Vec<f64>> = if free == 0 {
        vec![vec![]]
    } else {
        let grid = cfg.kappa_grid.as_ref().ok_or_else(|| {
            Error::Config("free coordinates present: a kappa grid is required".into())
        })?;
        if grid.ranges.len() != free {
            return Err(Error::DimensionMismatch {
                name: "kappa_grid",
                expected: free,
                got: grid.ranges.len(),
            });
        }
        let mut pts = vec![vec![]];
        for r in &grid.ranges {
            let mut next = Vec::new();
            for base in &pts {
                for j in 0..grid.points_per_dim {
                    let v = r.lo
                        + (r.hi - r.lo) * j as f64 / (grid.points_per_dim.max(2) - 1) as f64;
                    let mut k = base.clone();
                    k.push(v);
                    next.push(k);
                }
            }
            pts = next;
        }
        pts
    };

    let m = cfg.boundary_samples.max(8);
    let mut anchors: Vec<BnupPoint> = Vec::new();
    let mut any_nup = false;
    let mut any_escape = false;
    let two_pi = 2.0 * std::f64::consts::PI;
    for kappa in &kappas {
        // scan one full period plus the wrap interval, so roots sitting at
        // the parametrization seam are not lost to sign noise there
        let mut prev_angle = -std::f64::consts::PI;
        let mut prev_h = hamiltonian_at(sys, cap, prev_angle, kappa);
        for i in 1..=(m + 1) {
            let angle = -std::f64::consts::PI + two_pi * i as f64 / m as f64;
            let h = hamiltonian_at(sys, cap, angle, kappa);
            any_nup |= h <= 0.0;
            any_escape |= h > 0.0;
            if prev_h == 0.0 || prev_h.signum() != h.signum() {
                let mut root = num::bisect(
                    prev_angle,
                    angle,
                    |a| hamiltonian_at(sys, cap, a, kappa),
                    1e-14,
                    200,
                )?;
                if root > std::f64::consts::PI {
                    root -= two_pi;
                }
                let duplicate = anchors.iter().any(|a| {
                    a.kappa == *kappa && {
                        let mut d = (a.angle - root).abs();
                        d = d.min((d - two_pi).abs());
                        d < 1e-9
                    }
                });
                if !duplicate {
                    let state = compose_state(cap, n, root, kappa);
                    let outward_normal = cap.outward_normal(&state)?;
                    anchors.push(BnupPoint {
                        state,
                        kappa: kappa.clone(),
                        outward_normal,
                        angle: root,
                    });
                }
            }
            prev_angle = angle;
            prev_h = h;
        }
    }
    if anchors.is_empty() {
        let detail = if any_nup && !any_escape {
            "tangency condition is negative on the whole boundary"
        } else {
            "tangency condition is positive on the whole boundary"
        };
        return Err(Error::NoBnup(detail.into()));
    }
    // deterministic order: descending first critical coordinate
    let axes0 = axes[0];
    anchors.sort_by(|a, b| b.state[axes0].partial_cmp(&a.state[axes0]).unwrap());
    Ok(anchors)
}

/// Angular interval(s) of the boundary circle on which no instantaneous
/// escape exists, for systems whose critical plane is the whole state plane.
pub fn nup_arcs(
    sys: &dyn RelativeSystem,
    cap: &CaptivitySet,
    anchors: &[BnupPoint],
) -> Result<Vec<(f64, f64)>> {
    if anchors.iter().any(|a| !a.kappa.is_empty()) {
        return Err(Error::Unsupported("boundary arcs need an empty free space".into()));
    }
    let mut angles: Vec<f64> = anchors.iter().map(|a| a.angle).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut arcs = Vec::new();
    let k = angles.len();
    for i in 0..k {
        let lo = angles[i];
        let hi = if i + 1 < k { angles[i + 1] } else { angles[0] + 2.0 * std::f64::consts::PI };
        let mid = 0.5 * (lo + hi);
        if hamiltonian_at(sys, cap, mid, &[]) <= 0.0 {
            arcs.push((lo, hi));
        }
    }
    Ok(arcs)
}
