//! Test-only closed-form oracle for the constant-speed pursuit pair.
//!
//! Along a semipermeable surface the adjoint rotates rigidly and the state
//! obeys a linear ODE with a rotating forcing term, so each constant-corner
//! piece has the exact solution
//!
//! ```text
//! z(t)  = e^{i w s} z0 + v_lf s e^{i (w s + phi0)} + (v_hf / w)(1 - e^{i w s}),
//! xi(t) = (cos(w s + phi0), sin(w s + phi0)),        s = t - t0,
//! ```
//!
//! with w = +-omega. The tracker corner flips where sigma = xi_x y - xi_y x
//! vanishes; sigma has its own closed form along a piece,
//! sigma(s) = sigma0 - (v_hf / w)(sin(w s + phi0) - sin(phi0)), whose zeros
//! are bracketed on the analytic expression directly. Nothing here touches
//! the Runge-Kutta path under test.

#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub struct C64 {
    pub re: f64,
    pub im: f64,
}

impl C64 {
    pub fn new(re: f64, im: f64) -> Self {
        C64 { re, im }
    }

    fn cis(a: f64) -> Self {
        C64 { re: a.cos(), im: a.sin() }
    }

    fn mul(self, o: C64) -> Self {
        C64 { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }

    fn add(self, o: C64) -> Self {
        C64 { re: self.re + o.re, im: self.im + o.im }
    }

    fn scale(self, s: f64) -> Self {
        C64 { re: s * self.re, im: s * self.im }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    z0: C64,
    phi0: f64,
    w: f64,
}

impl Piece {
    fn state(&self, t: f64, v_lf: f64, v_hf: f64) -> C64 {
        let s = t - self.t0;
        let rot = C64::cis(self.w * s);
        rot.mul(self.z0)
            .add(C64::cis(self.w * s + self.phi0).scale(v_lf * s))
            .add(C64::new(1.0 - rot.re, -rot.im).scale(v_hf / self.w))
    }

    fn phase(&self, t: f64) -> f64 {
        self.w * (t - self.t0) + self.phi0
    }

    /// sigma along the piece, starting from sigma = 0 at t0
    /// (d sigma/dt = -v_hf cos(phase), integrated in closed form).
    fn sigma(&self, t: f64, v_hf: f64) -> f64 {
        -(v_hf / self.w) * ((self.phase(t)).sin() - self.phi0.sin())
    }
}

/// Exact right-anchor surface (positive first coordinate); the left surface
/// is its mirror image in the first coordinate.
pub struct OracleSurface {
    pieces: Vec<Piece>,
    v_lf: f64,
    v_hf: f64,
}

impl OracleSurface {
    /// Build the right-anchor surface down to retrograde time `t_min`.
    pub fn right(v_lf: f64, v_hf: f64, omega: f64, beta: f64, t_min: f64) -> OracleSurface {
        let delta = (v_lf / v_hf).asin();
        // retrograde from the anchor the switching function grows on the
        // positive side, so the first corner is the upper one
        let mut pieces = vec![Piece { t0: 0.0, z0: C64::cis(delta).scale(beta), phi0: delta, w: omega }];
        loop {
            let p = *pieces.last().unwrap();
            match next_switch(&p, v_hf, t_min) {
                Some(ts) => {
                    let z = p.state(ts, v_lf, v_hf);
                    pieces.push(Piece { t0: ts, z0: z, phi0: p.phase(ts), w: -p.w });
                }
                None => break,
            }
        }
        OracleSurface { pieces, v_lf, v_hf }
    }

    fn piece_at(&self, t: f64) -> &Piece {
        self.pieces
            .iter()
            .take_while(|p| p.t0 >= t - 1e-15)
            .last()
            .unwrap_or(&self.pieces[0])
    }

    pub fn state(&self, t: f64) -> [f64; 2] {
        let p = self.piece_at(t);
        let z = p.state(t, self.v_lf, self.v_hf);
        [z.re, z.im]
    }

    pub fn adjoint(&self, t: f64) -> [f64; 2] {
        let p = self.piece_at(t);
        let phi = p.phase(t);
        [phi.cos(), phi.sin()]
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.pieces[1..].iter().map(|p| p.t0).collect()
    }

    /// First retrograde zero of the first coordinate (the mirror-symmetric
    /// junction), bisected on the closed form.
    pub fn axis_crossing(&self, t_min: f64) -> Option<(f64, [f64; 2])> {
        let mut t_hi = 0.0;
        let dt = 1e-4;
        let mut x_hi = self.state(t_hi)[0];
        let mut t = -dt;
        while t >= t_min {
            let x = self.state(t)[0];
            if x_hi > 0.0 && x <= 0.0 {
                let (mut lo, mut hi) = (t, t_hi);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if self.state(mid)[0] <= 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tc = 0.5 * (lo + hi);
                return Some((tc, self.state(tc)));
            }
            t_hi = t;
            x_hi = x;
            t -= dt;
        }
        None
    }
}

/// First retrograde switch of a piece: scan the analytic switching function
/// below the piece anchor and bisect its first sign change onto the
/// corner-consistent side.
fn next_switch(p: &Piece, v_hf: f64, t_min: f64) -> Option<f64> {
    let dt = 1e-5;
    // the consistent sign right below the anchor
    let s_ref = p.sigma(p.t0 - dt, v_hf);
    if s_ref == 0.0 {
        return None; // degenerate (static planner at the seam)
    }
    let mut t = p.t0 - dt;
    while t > t_min - 1.0 {
        let t_next = t - dt;
        let s = p.sigma(t_next, v_hf);
        if s.signum() != s_ref.signum() && s != 0.0 {
            let (mut lo, mut hi) = (t_next, t);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if p.sigma(mid, v_hf).signum() == s_ref.signum() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let ts = 0.5 * (lo + hi);
            if ts <= t_min {
                return None;
            }
            return Some(ts);
        }
        t = t_next;
    }
    None
}

/// Brute-force even-odd point-in-polygon, independent of the library's
/// grid-accelerated implementation.
pub fn polygon_contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (a[1] <= p[1] && b[1] > p[1]) || (b[1] <= p[1] && a[1] > p[1]) {
            let t = (p[1] - a[1]) / (b[1] - a[1]);
            if a[0] + t * (b[0] - a[0]) > p[0] {
                inside = !inside;
            }
        }
    }
    inside
}

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
