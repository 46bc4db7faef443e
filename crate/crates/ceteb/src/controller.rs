//! Minimal-intervention safety controller: free in the interior of the
//! tracking error bound, game-optimal on its boundary.

use crate::barrier::{BoundaryComponent, TrackingErrorBound};
use crate::error::{Error, Result};
use crate::system::{grid_extremum, RelativeSystem};

/// Default pre-engagement band (times beta) inside which the clamp takes
/// over before the boundary is reached.
pub const GUARD_BAND_REL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    Clamp,
}

#[derive(Debug, Clone)]
pub struct ControlDecision {
    pub mode: Mode,
    /// Tracker input; present when clamping, always inside the tracker box.
    pub u_hf: Option<Vec<f64>>,
    pub boundary_component: Option<BoundaryComponent>,
}

impl ControlDecision {
    fn free() -> Self {
        ControlDecision { mode: Mode::Free, u_hf: None, boundary_component: None }
    }
}

pub struct SafetyController<'a> {
    sys: &'a dyn RelativeSystem,
    teb: &'a TrackingErrorBound,
    guard_band: f64,
}

impl<'a> SafetyController<'a> {
    pub fn new(sys: &'a dyn RelativeSystem, teb: &'a TrackingErrorBound) -> Self {
        let guard_band = GUARD_BAND_REL * teb.beta();
        SafetyController { sys, teb, guard_band }
    }

    /// Widen the pre-engagement band (e.g. to cover one discrete step of a
    /// sampled closed loop).
    pub fn with_guard_band(mut self, band: f64) -> Self {
        self.guard_band = band;
        self
    }

    pub fn guard_band(&self) -> f64 {
        self.guard_band
    }

    /// Tracker input minimizing the outward boundary Hamiltonian at a state
    /// on (or near) the captivity boundary. Interval-degenerate components
    /// (zero coefficient) resolve to the in-box value closest to zero.
    fn boundary_clamp(&self, x: &[f64]) -> Vec<f64> {
        let sys = self.sys;
        // the minimizer is scale-invariant in the normal; the unnormalized
        // projected vector keeps the radial switching coefficient an exact
        // zero instead of rounding noise
        let mut nu = vec![0.0; x.len()];
        sys.projection().apply(x, &mut nu);
        let m = sys.tracker_input_set().len();
        let mut u = vec![0.0; m];
        if crate::num::norm(&nu) == 0.0 {
            for (j, iv) in sys.tracker_input_set().iter().enumerate() {
                u[j] = iv.clamp(0.0);
            }
            return u;
        }
        let mut coeffs = vec![0.0; m];
        if sys.tracker_affine_coeffs(x, &nu, &mut coeffs) {
            for (j, c) in coeffs.iter().enumerate() {
                let iv = sys.tracker_input_set()[j];
                u[j] = if *c > 0.0 {
                    iv.lo
                } else if *c < 0.0 {
                    iv.hi
                } else {
                    iv.clamp(0.0)
                };
            }
        } else {
            // minimize the planner's best response over the tracker box
            let mut u_lf = vec![0.0; sys.planner_input_set().len()];
            grid_extremum(sys.tracker_input_set(), &mut u, |uh| {
                -sys.planner_best_response(x, &nu, uh, &mut u_lf)
            });
        }
        u
    }

    fn stored_corner(&self, near: &crate::barrier::NearestBarrier) -> Vec<f64> {
        self.teb.barrier().pieces[near.piece].samples[near.sample].u_hf.clone()
    }

    /// Decide the tracker action for a state inside the bound. States
    /// outside void the invariance guarantee and are an error.
    pub fn decide(&self, x: &[f64]) -> Result<ControlDecision> {
        self.decide_core(x, None)
    }

    /// As [`decide`](Self::decide), skipping the interior/exterior test
    /// while the previous step was inside and the state stays farther from
    /// the boundary than the guard band. Sound when the per-step travel
    /// does not exceed the guard band.
    pub fn decide_step(&self, x: &[f64], last_inside: &mut bool) -> Result<ControlDecision> {
        self.decide_core(x, Some(last_inside))
    }

    fn decide_core(&self, x: &[f64], cache: Option<&mut bool>) -> Result<ControlDecision> {
        let teb = self.teb;
        let band = crate::barrier::BOUNDARY_BAND_REL * teb.beta();
        let radius = self.guard_band.max(band);
        let d_arc = teb.arc_distance(x);
        let near = teb.barrier_near_within(x, radius);
        let d_barr = near.as_ref().map_or(f64::INFINITY, |n| n.dist);
        if d_arc.min(d_barr) <= band {
            // on the boundary; the barrier strategy also covers the anchors
            if let Some(c) = cache {
                *c = true;
            }
            return Ok(match &near {
                Some(n) if n.dist <= band => ControlDecision {
                    mode: Mode::Clamp,
                    u_hf: Some(self.stored_corner(n)),
                    boundary_component: Some(BoundaryComponent::Barrier),
                },
                _ => ControlDecision {
                    mode: Mode::Clamp,
                    u_hf: Some(self.boundary_clamp(x)),
                    boundary_component: Some(BoundaryComponent::Nup),
                },
            });
        }
        let inside = match cache {
            Some(c) => {
                if !(*c && d_arc > self.guard_band && near.is_none()) {
                    *c = teb.even_odd_interior(x);
                }
                *c
            }
            None => teb.even_odd_interior(x),
        };
        if !inside {
            return Err(Error::SafetyViolation(format!(
                "query at projected norm {:.6}, bound radius {:.6}",
                teb.beta().max(crate::num::norm(x)),
                teb.beta()
            )));
        }
        if d_arc.min(d_barr) <= self.guard_band {
            // pre-engage; barrier strategy wins ties (anchors)
            Ok(if d_barr <= d_arc {
                let n = near.expect("within guard of the barrier");
                ControlDecision {
                    mode: Mode::Clamp,
                    u_hf: Some(self.stored_corner(&n)),
                    boundary_component: Some(BoundaryComponent::Barrier),
                }
            } else {
                ControlDecision {
                    mode: Mode::Clamp,
                    u_hf: Some(self.boundary_clamp(x)),
                    boundary_component: Some(BoundaryComponent::Nup),
                }
            })
        } else {
            Ok(ControlDecision::free())
        }
    }

    /// Best-effort recovery input for a state that slipped outside the
    /// bound (simulation aid; the invariance theorem does not cover this
    /// case). Steers the state's boundary angle back into the
    /// non-escapable arc: dithering between clamp sources here lets an
    /// adversary park just below an anchor and ratchet outward.
    pub fn recover(&self, x: &[f64]) -> Vec<f64> {
        let teb = self.teb;
        let axes = teb.critical_axes();
        let p = [x[axes.0], x[axes.1]];
        let phi = p[1].atan2(p[0]);
        let (glo, ghi) = teb.arc_range();
        let two_pi = 2.0 * std::f64::consts::PI;
        let wrap = |a: f64| a.rem_euclid(two_pi);
        // aim well inside the arc: at its edge the inward drift is only
        // marginal and the planner can hold the state there forever
        let margin = (0.05 * (ghi - glo)).min(0.2);
        let (ilo, ihi) = (glo + margin, ghi - margin);
        if wrap(phi - ilo) <= wrap(ihi - ilo) {
            // angle already deep in the arc range: hold the radial minimizer
            return self.boundary_clamp(x);
        }
        // rotate toward the nearer interior endpoint
        let ccw = wrap(ilo - phi) <= wrap(phi - ihi);
        let sys = self.sys;
        let mut u_lf = vec![0.0; sys.planner_input_set().len()];
        let mut nu = vec![0.0; x.len()];
        sys.projection().apply(x, &mut nu);
        crate::num::normalize(&mut nu);
        sys.planner_best_response(x, &nu, &vec![0.0; sys.tracker_input_set().len()], &mut u_lf);
        let mut f = vec![0.0; x.len()];
        let mut best_u: Vec<f64> = Vec::new();
        let mut best_rate = f64::NEG_INFINITY;
        let m = sys.tracker_input_set().len();
        for k in 0..(1usize << m.min(10)) {
            let u: Vec<f64> = sys
                .tracker_input_set()
                .iter()
                .enumerate()
                .map(|(j, iv)| if k >> j & 1 == 1 { iv.hi } else { iv.lo })
                .collect();
            sys.vector_field(x, &u_lf, &u, &mut f);
            let spin = (p[0] * f[axes.1] - p[1] * f[axes.0])
                / (p[0] * p[0] + p[1] * p[1]).max(1e-30);
            let rate = if ccw { spin } else { -spin };
            if rate > best_rate {
                best_rate = rate;
                best_u = u;
            }
        }
        best_u
    }
}

/// One-shot decision with the default guard band.
pub fn safety_control(
    teb: &TrackingErrorBound,
    sys: &dyn RelativeSystem,
    x: &[f64],
) -> Result<ControlDecision> {
    SafetyController::new(sys, teb).decide(x)
}
