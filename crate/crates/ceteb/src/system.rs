//! Relative planner/tracker dynamics: the system trait, input boxes, the
//! critical-state projection, and JSON model loading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num;

/// Step for the central-difference Jacobian fallback. Accuracy is O(step^2)
/// plus roundoff, roughly 1e-10 of the field scale.
pub const JACOBIAN_FD_STEP: f64 = 1e-6;

/// Closed interval box component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "interval bounds out of order");
        Interval { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

/// Diagonal 0/1 critical-state projection. Idempotent by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    mask: Vec<bool>,
}

impl Projection {
    pub fn new(mask: Vec<bool>) -> Self {
        Projection { mask }
    }

    pub fn identity(n: usize) -> Self {
        Projection { mask: vec![true; n] }
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Indices of the critical (projected) coordinates.
    pub fn active_axes(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = if self.mask[i] { x[i] } else { 0.0 };
        }
    }

    /// ||P x||
    pub fn norm(&self, x: &[f64]) -> f64 {
        self.mask
            .iter()
            .zip(x)
            .filter(|(m, _)| **m)
            .map(|(_, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Relative dynamics between a low-fidelity planning model and a
/// high-fidelity tracking model, with interval-box inputs.
///
/// Values are immutable after construction and all evaluators are pure, so a
/// system may be shared freely across worker threads.
///
/// The default method implementations are generic fallbacks (finite
/// differences, refined grid search). Models with exploitable structure
/// should override them.
pub trait RelativeSystem: Send + Sync {
    fn state_dim(&self) -> usize;

    fn planner_state_dim(&self) -> usize {
        self.state_dim()
    }

    fn tracker_state_dim(&self) -> usize {
        self.state_dim()
    }

    /// Relative vector field f(x, u_lf, u_hf). No input validation; see
    /// [`eval_dynamics`] for the checked entry point.
    fn vector_field(&self, x: &[f64], u_lf: &[f64], u_hf: &[f64], out: &mut [f64]);

    /// Row-major d f / d x. Central-difference fallback with step
    /// [`JACOBIAN_FD_STEP`]; override with the closed form when available.
    fn state_jacobian(&self, x: &[f64], u_lf: &[f64], u_hf: &[f64], out: &mut [f64]) {
        let n = self.state_dim();
        let mut xp = x.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let h = JACOBIAN_FD_STEP * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            self.vector_field(&xp, u_lf, u_hf, &mut fp);
            xp[j] = x[j] - h;
            self.vector_field(&xp, u_lf, u_hf, &mut fm);
            xp[j] = x[j];
            for i in 0..n {
                out[i * n + j] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
    }

    fn planner_input_set(&self) -> &[Interval];

    fn tracker_input_set(&self) -> &[Interval];

    fn projection(&self) -> &Projection;

    /// Current planning-performance value (theta).
    fn performance(&self) -> f64;

    /// Reconfigure the planner side for a new performance value. Must be
    /// monotone: a larger theta never shrinks the planner's capability.
    fn with_performance(&self, theta: f64) -> Result<Box<dyn RelativeSystem>>;

    /// Relative-state map from planner/tracker states. Model-pair specific;
    /// no generic construction exists.
    fn relative_state(&self, _x_lf: &[f64], _x_hf: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::Unsupported(
            "relative-state map must be supplied by the model pair".into(),
        ))
    }

    /// max over the planner box of xi . f(x, u_lf, u_hf) at fixed u_hf;
    /// writes the maximizer and returns the maximum. Fallback: refined grid.
    fn planner_best_response(&self, x: &[f64], xi: &[f64], u_hf: &[f64], u_lf: &mut [f64]) -> f64 {
        grid_extremum(self.planner_input_set(), u_lf, |u| {
            let mut f = vec![0.0; self.state_dim()];
            self.vector_field(x, u, u_hf, &mut f);
            num::dot(xi, &f)
        })
    }

    /// If xi . f is affine in the tracker input, write d(xi . f)/d u_hf per
    /// component and return true. Enables bang-bang switching with event
    /// detection in the surface integrator.
    fn tracker_affine_coeffs(&self, _x: &[f64], _xi: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Sign to use for the tracker input when a switching coefficient is
    /// exactly zero (+1 picks the upper box face).
    fn tracker_tie_sign(&self) -> f64 {
        1.0
    }

    /// The min-max pair on a surface with normal xi: u_hf minimizing the
    /// planner's best response, and the corresponding planner maximizer.
    fn surface_optimal_inputs(&self, x: &[f64], xi: &[f64], u_lf: &mut [f64], u_hf: &mut [f64]) {
        let mut coeffs = vec![0.0; u_hf.len()];
        if self.tracker_affine_coeffs(x, xi, &mut coeffs) {
            for (j, c) in coeffs.iter().enumerate() {
                let iv = self.tracker_input_set()[j];
                u_hf[j] = if *c > 0.0 {
                    iv.lo
                } else if *c < 0.0 {
                    iv.hi
                } else if self.tracker_tie_sign() >= 0.0 {
                    iv.hi
                } else {
                    iv.lo
                };
            }
            self.planner_best_response(x, xi, u_hf, u_lf);
        } else {
            let mut best_ulf = u_lf.to_vec();
            grid_extremum_by(self.tracker_input_set(), u_hf, |u| {
                let v = self.planner_best_response(x, xi, u, &mut best_ulf);
                -v // outer problem minimizes
            });
            self.planner_best_response(x, xi, u_hf, u_lf);
        }
    }
}

/// Refined grid maximization over an interval box (documented fallback for
/// models without closed-form input optimizers). 17 points per dimension,
/// 6 shrink rounds.
pub fn grid_extremum<F>(box_: &[Interval], arg: &mut [f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    grid_extremum_by(box_, arg, |u| f(u))
}

fn grid_extremum_by<F>(box_: &[Interval], arg: &mut [f64], mut f: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    const POINTS: usize = 17;
    const ROUNDS: usize = 6;
    let m = box_.len();
    let mut lo: Vec<f64> = box_.iter().map(|iv| iv.lo).collect();
    let mut hi: Vec<f64> = box_.iter().map(|iv| iv.hi).collect();
    let mut best = f64::NEG_INFINITY;
    let mut u = vec![0.0; m];
    for _ in 0..ROUNDS {
        let mut best_idx = vec![0usize; m];
        let mut idx = vec![0usize; m];
        loop {
            for j in 0..m {
                u[j] = if POINTS > 1 {
                    lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (POINTS - 1) as f64
                } else {
                    0.5 * (lo[j] + hi[j])
                };
            }
            let v = f(&u);
            if v > best {
                best = v;
                best_idx.copy_from_slice(&idx);
                arg.copy_from_slice(&u);
            }
            // odometer increment
            let mut j = 0;
            loop {
                if j == m {
                    break;
                }
                idx[j] += 1;
                if idx[j] < POINTS {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == m {
                break;
            }
        }
        // shrink around the best cell
        for j in 0..m {
            let w = (hi[j] - lo[j]) / (POINTS - 1) as f64;
            let c = lo[j] + w * best_idx[j] as f64;
            lo[j] = (c - w).max(box_[j].lo);
            hi[j] = (c + w).min(box_[j].hi);
        }
        best = f64::NEG_INFINITY; // re-evaluate on the shrunk grid
    }
    // final evaluation at the refined argument
    let v = f(arg);
    debug_assert!(v.is_finite());
    v
}

/// Checked dynamics evaluation: validates both inputs against their boxes.
pub fn eval_dynamics(
    sys: &dyn RelativeSystem,
    x: &[f64],
    u_lf: &[f64],
    u_hf: &[f64],
) -> Result<Vec<f64>> {
    check_in_box("u_lf", u_lf, sys.planner_input_set())?;
    check_in_box("u_hf", u_hf, sys.tracker_input_set())?;
    let mut out = vec![0.0; sys.state_dim()];
    sys.vector_field(x, u_lf, u_hf, &mut out);
    Ok(out)
}

/// Checked Jacobian evaluation (row-major n x n).
pub fn eval_jacobian(
    sys: &dyn RelativeSystem,
    x: &[f64],
    u_lf: &[f64],
    u_hf: &[f64],
) -> Result<Vec<f64>> {
    check_in_box("u_lf", u_lf, sys.planner_input_set())?;
    check_in_box("u_hf", u_hf, sys.tracker_input_set())?;
    let n = sys.state_dim();
    let mut out = vec![0.0; n * n];
    sys.state_jacobian(x, u_lf, u_hf, &mut out);
    Ok(out)
}

pub fn check_in_box(name: &'static str, u: &[f64], box_: &[Interval]) -> Result<()> {
    if u.len() != box_.len() {
        return Err(Error::DimensionMismatch { name, expected: box_.len(), got: u.len() });
    }
    for (i, (v, iv)) in u.iter().zip(box_).enumerate() {
        if !iv.contains(*v) {
            return Err(Error::InputOutOfRange {
                name,
                index: i,
                value: *v,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
    }
    Ok(())
}

/// On-disk model description. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Chauffeur {
        v_hf: f64,
        omega_max: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_lf: Option<f64>,
    },
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<ModelSpec> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model spec: {e}")))
    }

    pub fn build(&self) -> Result<Box<dyn RelativeSystem>> {
        match self {
            ModelSpec::Chauffeur { v_hf, omega_max, v_lf } => {
                let sys =
                    crate::chauffeur::ChauffeurSystem::new(*v_hf, v_lf.unwrap_or(0.0), *omega_max)?;
                Ok(Box::new(sys))
            }
        }
    }

    pub fn v_lf(&self) -> Option<f64> {
        match self {
            ModelSpec::Chauffeur { v_lf, .. } => *v_lf,
        }
    }

    pub fn with_v_lf(&self, v: f64) -> ModelSpec {
        match self {
            ModelSpec::Chauffeur { v_hf, omega_max, .. } => ModelSpec::Chauffeur {
                v_hf: *v_hf,
                omega_max: *omega_max,
                v_lf: Some(v),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chauffeur::ChauffeurSystem;

    #[test]
    fn model_json_roundtrip_and_unknown_key_rejection() {
        let m = ModelSpec::from_json(
            r#"{"model":"chauffeur","v_hf":1.0,"omega_max":6.2832,"v_lf":0.10}"#,
        )
        .unwrap();
        let sys = m.build().unwrap();
        assert_eq!(sys.state_dim(), 2);
        assert!((sys.performance() - 0.10).abs() < 1e-15);

        let bad = ModelSpec::from_json(
            r#"{"model":"chauffeur","v_hf":1.0,"omega_max":6.2832,"speed":3}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn input_validation_names_offending_component() {
        let sys = ChauffeurSystem::new(1.0, 0.1, 2.0 * std::f64::consts::PI).unwrap();
        let err = eval_dynamics(&sys, &[0.0, 0.0], &[0.0], &[1.5]).unwrap_err();
        match err {
            Error::InputOutOfRange { name, index, .. } => {
                assert_eq!(name, "u_hf");
                assert_eq!(index, 0);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn projection_norm_and_axes() {
        let p = Projection::new(vec![true, false, true]);
        assert_eq!(p.active_axes(), vec![0, 2]);
        assert!((p.norm(&[3.0, 100.0, 4.0]) - 5.0).abs() < 1e-15);
        let mut out = [0.0; 3];
        p.apply(&[3.0, 100.0, 4.0], &mut out);
        assert_eq!(out, [3.0, 0.0, 4.0]);
    }

    #[test]
    fn grid_extremum_finds_affine_corner() {
        let box_ = [Interval::new(-1.0, 1.0), Interval::new(-2.0, 3.0)];
        let mut arg = [0.0; 2];
        let v = grid_extremum(&box_, &mut arg, |u| 2.0 * u[0] - u[1]);
        assert!((v - 4.0).abs() < 1e-9);
        assert!((arg[0] - 1.0).abs() < 1e-9 && (arg[1] + 2.0).abs() < 1e-9);
    }

    #[test]
    fn grid_extremum_trig_interior() {
        let box_ = [Interval::new(-std::f64::consts::PI, std::f64::consts::PI)];
        let mut arg = [0.0];
        let v = grid_extremum(&box_, &mut arg, |u| (u[0] - 0.3).cos());
        assert!((v - 1.0).abs() < 1e-8);
        assert!((arg[0] - 0.3).abs() < 1e-4);
    }
}
