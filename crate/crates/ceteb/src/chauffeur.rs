//! Homicidal-chauffeur planner/tracker pair: a constant-speed planner
//! (speed `v_lf`) tracked by a constant-speed turn-rate-limited vehicle
//! (speed `v_hf`, max yaw rate `omega_max`), reduced to planar relative
//! coordinates aligned with the tracker heading.
//!
//! Relative dynamics:
//!
//! ```text
//! dx = -y * omega_max * u_hf + v_lf * sin(u_lf)
//! dy =  x * omega_max * u_hf + v_lf * cos(u_lf) - v_hf
//! ```
//!
//! with |u_hf| <= 1 and |u_lf| <= pi. The planner fully controls its
//! relative course, so the planning performance is the scalar speed:
//! theta = v_lf.

use crate::error::{Error, Result};
use crate::system::{Interval, Projection, RelativeSystem};

#[derive(Debug, Clone)]
pub struct ChauffeurSystem {
    v_hf: f64,
    v_lf: f64,
    omega_max: f64,
    tie_sign: f64,
    planner_box: [Interval; 1],
    tracker_box: [Interval; 1],
    projection: Projection,
}

impl ChauffeurSystem {
    pub fn new(v_hf: f64, v_lf: f64, omega_max: f64) -> Result<Self> {
        if !(v_lf >= 0.0 && v_lf < v_hf) {
            return Err(Error::Domain(format!(
                "planner speed must satisfy 0 <= v_lf < v_hf, got v_lf = {v_lf}, v_hf = {v_hf}"
            )));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::Domain(format!(
                "tracker yaw rate must satisfy 0 < omega_max < inf, got {omega_max}"
            )));
        }
        Ok(ChauffeurSystem {
            v_hf,
            v_lf,
            omega_max,
            tie_sign: 1.0,
            planner_box: [Interval::new(-std::f64::consts::PI, std::f64::consts::PI)],
            tracker_box: [Interval::new(-1.0, 1.0)],
            projection: Projection::identity(2),
        })
    }

    pub fn with_tie_sign(mut self, sign: f64) -> Self {
        self.tie_sign = if sign >= 0.0 { 1.0 } else { -1.0 };
        self
    }

    pub fn v_hf(&self) -> f64 {
        self.v_hf
    }

    pub fn v_lf(&self) -> f64 {
        self.v_lf
    }

    pub fn omega_max(&self) -> f64 {
        self.omega_max
    }

    fn sgn_tie(&self, v: f64) -> f64 {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            self.tie_sign
        }
    }
}

impl RelativeSystem for ChauffeurSystem {
    fn state_dim(&self) -> usize {
        2
    }

    fn planner_state_dim(&self) -> usize {
        2
    }

    fn tracker_state_dim(&self) -> usize {
        3
    }

    fn vector_field(&self, x: &[f64], u_lf: &[f64], u_hf: &[f64], out: &mut [f64]) {
        let w = self.omega_max * u_hf[0];
        out[0] = -x[1] * w + self.v_lf * u_lf[0].sin();
        out[1] = x[0] * w + self.v_lf * u_lf[0].cos() - self.v_hf;
    }

    fn state_jacobian(&self, _x: &[f64], _u_lf: &[f64], u_hf: &[f64], out: &mut [f64]) {
        let w = self.omega_max * u_hf[0];
        out[0] = 0.0;
        out[1] = -w;
        out[2] = w;
        out[3] = 0.0;
    }

    fn planner_input_set(&self) -> &[Interval] {
        &self.planner_box
    }

    fn tracker_input_set(&self) -> &[Interval] {
        &self.tracker_box
    }

    fn projection(&self) -> &Projection {
        &self.projection
    }

    fn performance(&self) -> f64 {
        self.v_lf
    }

    fn with_performance(&self, theta: f64) -> Result<Box<dyn RelativeSystem>> {
        let mut sys = ChauffeurSystem::new(self.v_hf, theta, self.omega_max)?;
        sys.tie_sign = self.tie_sign;
        Ok(Box::new(sys))
    }

    /// Planar offset rotated into the tracker frame; the tracker heading
    /// state drops out because the planner controls its relative course.
    fn relative_state(&self, x_lf: &[f64], x_hf: &[f64], out: &mut [f64]) -> Result<()> {
        if x_lf.len() != 2 || x_hf.len() != 3 || out.len() != 2 {
            return Err(Error::DimensionMismatch {
                name: "relative_state",
                expected: 2,
                got: x_lf.len().min(out.len()),
            });
        }
        let (dx, dy) = (x_lf[0] - x_hf[0], x_lf[1] - x_hf[1]);
        let (s, c) = x_hf[2].sin_cos();
        out[0] = c * dx - s * dy;
        out[1] = s * dx + c * dy;
        Ok(())
    }

    /// Maximizer of xi . f over the planner course: align the course with xi.
    fn planner_best_response(&self, x: &[f64], xi: &[f64], u_hf: &[f64], u_lf: &mut [f64]) -> f64 {
        let nxi = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
        u_lf[0] = xi[0].atan2(xi[1]);
        let w = self.omega_max * u_hf[0];
        w * (xi[1] * x[0] - xi[0] * x[1]) + self.v_lf * nxi - self.v_hf * xi[1]
    }

    fn tracker_affine_coeffs(&self, x: &[f64], xi: &[f64], out: &mut [f64]) -> bool {
        out[0] = self.omega_max * (xi[1] * x[0] - xi[0] * x[1]);
        true
    }

    fn tracker_tie_sign(&self) -> f64 {
        self.tie_sign
    }

    fn surface_optimal_inputs(&self, x: &[f64], xi: &[f64], u_lf: &mut [f64], u_hf: &mut [f64]) {
        u_lf[0] = xi[0].atan2(xi[1]);
        u_hf[0] = self.sgn_tie(xi[0] * x[1] - xi[1] * x[0]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{eval_dynamics, eval_jacobian};
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    #[test]
    fn invariants_rejected() {
        assert!(ChauffeurSystem::new(1.0, 1.0, TWO_PI).is_err()); // v_lf == v_hf
        assert!(ChauffeurSystem::new(1.0, -0.1, TWO_PI).is_err());
        assert!(ChauffeurSystem::new(1.0, 0.1, 0.0).is_err());
        assert!(ChauffeurSystem::new(1.0, 0.1, f64::INFINITY).is_err());
    }

    #[test]
    fn dynamics_static_planner_at_origin() {
        let sys = ChauffeurSystem::new(1.0, 0.0, TWO_PI).unwrap();
        let f = eval_dynamics(&sys, &[0.0, 0.0], &[0.0], &[0.0]).unwrap();
        assert_eq!(f, vec![0.0, -1.0]);
    }

    #[test]
    fn dynamics_closed_form_point() {
        let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap();
        let f = eval_dynamics(&sys, &[0.0, 0.25], &[PI / 2.0], &[1.0]).unwrap();
        assert!((f[0] - (-0.25 * TWO_PI + 0.10)).abs() < 1e-12);
        assert!((f[1] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn dynamics_periodic_in_planner_course() {
        let sys = ChauffeurSystem::new(1.0, 0.3, TWO_PI).unwrap();
        let x = [0.13, -0.07];
        let a = eval_dynamics(&sys, &x, &[PI], &[0.5]).unwrap();
        let b = eval_dynamics(&sys, &x, &[-PI], &[0.5]).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn jacobian_closed_form() {
        let sys = ChauffeurSystem::new(1.0, 0.0, TWO_PI).unwrap();
        let j = eval_jacobian(&sys, &[0.1, 0.2], &[0.0], &[1.0]).unwrap();
        assert_eq!(j, vec![0.0, -TWO_PI, TWO_PI, 0.0]);
        let j0 = eval_jacobian(&sys, &[0.1, 0.2], &[0.0], &[0.0]).unwrap();
        assert_eq!(j0, vec![0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // analytic override vs the trait's central-difference fallback
        struct Fd(ChauffeurSystem);
        impl RelativeSystem for Fd {
            fn state_dim(&self) -> usize {
                2
            }
            fn vector_field(&self, x: &[f64], a: &[f64], b: &[f64], out: &mut [f64]) {
                self.0.vector_field(x, a, b, out)
            }
            fn planner_input_set(&self) -> &[Interval] {
                self.0.planner_input_set()
            }
            fn tracker_input_set(&self) -> &[Interval] {
                self.0.tracker_input_set()
            }
            fn projection(&self) -> &Projection {
                self.0.projection()
            }
            fn performance(&self) -> f64 {
                self.0.performance()
            }
            fn with_performance(&self, _: f64) -> crate::error::Result<Box<dyn RelativeSystem>> {
                unimplemented!()
            }
        }
        let sys = ChauffeurSystem::new(1.0, 0.37, TWO_PI).unwrap();
        let fd = Fd(sys.clone());
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut rnd = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..100 {
            let x = [rnd(), rnd()];
            let u_lf = [rnd() * PI];
            let u_hf = [rnd()];
            let ja = eval_jacobian(&sys, &x, &u_lf, &u_hf).unwrap();
            let jf = eval_jacobian(&fd, &x, &u_lf, &u_hf).unwrap();
            for (a, b) in ja.iter().zip(&jf) {
                assert!((a - b).abs() < 1e-5, "analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn relative_state_rotation() {
        let sys = ChauffeurSystem::new(1.0, 0.1, TWO_PI).unwrap();
        let mut out = [0.0; 2];
        sys.relative_state(&[1.0, 0.0], &[0.0, 0.0, 0.0], &mut out).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15 && out[1].abs() < 1e-15);

        // heading pi/2 turns the tracker toward +x, so a planner at +x is
        // straight ahead: relative position (0, 1)
        sys.relative_state(&[1.0, 0.0], &[0.0, 0.0, PI / 2.0], &mut out).unwrap();
        assert!(out[0].abs() < 1e-15 && (out[1] - 1.0).abs() < 1e-15);

        sys.relative_state(&[0.3, -0.4], &[0.3, -0.4, 1.234], &mut out).unwrap();
        assert!(out[0].abs() < 1e-15 && out[1].abs() < 1e-15);
    }

    #[test]
    fn relative_rotation_preserves_norm() {
        let sys = ChauffeurSystem::new(1.0, 0.1, TWO_PI).unwrap();
        let mut out = [0.0; 2];
        let mut state = 7u64;
        let mut rnd = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..50 {
            let lf = [rnd(), rnd()];
            let hf = [rnd(), rnd(), rnd() * PI];
            sys.relative_state(&lf, &hf, &mut out).unwrap();
            let d = ((lf[0] - hf[0]).powi(2) + (lf[1] - hf[1]).powi(2)).sqrt();
            let r = (out[0].powi(2) + out[1].powi(2)).sqrt();
            assert!((d - r).abs() < 1e-12);
        }
    }

    #[test]
    fn performance_mapping_is_identity_on_speed() {
        let sys = ChauffeurSystem::new(1.0, 0.1, TWO_PI).unwrap();
        let faster = sys.with_performance(0.5).unwrap();
        assert!((faster.performance() - 0.5).abs() < 1e-15);
        assert!(sys.with_performance(1.0).is_err()); // >= v_hf

        // planner input box is performance-independent here: monotone (equal)
        for k in 0..10 {
            let th = 0.09 * k as f64;
            let s = sys.with_performance(th).unwrap();
            for (a, b) in s.planner_input_set().iter().zip(sys.planner_input_set()) {
                assert!(a.subset_of(b) && b.subset_of(a));
            }
        }
    }

    #[test]
    fn surface_inputs_closed_form() {
        let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap();
        let mut u_lf = [0.0];
        let mut u_hf = [0.0];

        // anchor-like point: xi parallel to x, tie broken to +1
        let x = [0.24875f64, 0.025];
        let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let xi = [x[0] / n, x[1] / n];
        sys.surface_optimal_inputs(&x, &xi, &mut u_lf, &mut u_hf);
        assert!((u_lf[0] - 0.24875f64.atan2(0.025)).abs() < 1e-12);
        assert!((u_lf[0] - 1.47063).abs() < 1e-4);
        assert_eq!(u_hf[0], 1.0);

        sys.surface_optimal_inputs(&[1.0, 0.0], &[0.0, 1.0], &mut u_lf, &mut u_hf);
        assert_eq!(u_lf[0], 0.0);
        assert_eq!(u_hf[0], -1.0);

        sys.surface_optimal_inputs(&[0.0, 0.7], &[1.0, 0.0], &mut u_lf, &mut u_hf);
        assert!((u_lf[0] - PI / 2.0).abs() < 1e-15);
        assert_eq!(u_hf[0], 1.0);
    }

    #[test]
    fn tie_sign_is_configurable() {
        let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap().with_tie_sign(-1.0);
        let mut u_lf = [0.0];
        let mut u_hf = [0.0];
        let xi = [1.0, 0.0];
        sys.surface_optimal_inputs(&[2.0, 0.0], &xi, &mut u_lf, &mut u_hf); // sigma = 0
        assert_eq!(u_hf[0], -1.0);
    }
}
