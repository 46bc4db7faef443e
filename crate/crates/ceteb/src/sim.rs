//! Adversarial closed-loop simulation: sampled planner adversaries against
//! the safety controller, with a Monte-Carlo invariance suite.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::{Membership, TrackingErrorBound};
use crate::controller::{Mode, SafetyController};
use crate::error::{Error, Result};
use crate::num;
use crate::system::RelativeSystem;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PlannerPolicy {
    /// Push along the outward direction of the projected state.
    OptimalEscape,
    /// Piecewise-constant uniform draws from the planner box.
    RandomPiecewise { seed: u64, dwell: f64 },
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    pub policy: PlannerPolicy,
    pub x0: Vec<f64>,
    /// Escape declared beyond beta * (1 + tolerance_band).
    pub tolerance_band: f64,
    /// Tracker input used while the controller is free (defaults to the
    /// in-box value closest to zero).
    pub nominal_u_hf: Option<Vec<f64>>,
    /// Clamp pre-engagement band; defaults to one worst-case step of travel.
    pub guard_band: Option<f64>,
    pub record: bool,
}

impl SimConfig {
    pub fn new(x0: Vec<f64>, policy: PlannerPolicy) -> Self {
        SimConfig {
            horizon: 20.0,
            dt: 1e-3,
            policy,
            x0,
            tolerance_band: 1e-6,
            nominal_u_hf: None,
            guard_band: None,
            record: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSample {
    pub t: f64,
    pub state: Vec<f64>,
    pub u_lf: Vec<f64>,
    pub u_hf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    /// Populated when `record` is set.
    pub trajectory: Vec<SimSample>,
    pub escaped: bool,
    pub max_norm: f64,
    pub first_clamp_time: Option<f64>,
    /// Steps spent outside the bound while still inside the captivity set.
    pub left_teb_steps: usize,
}

/// Coarse upper bound on the field speed over the captivity set, from box
/// corners of states and inputs (with margin).
pub fn speed_bound(sys: &dyn RelativeSystem, beta: f64) -> f64 {
    let n = sys.state_dim();
    let axes = sys.projection().active_axes();
    let mut best: f64 = 0.0;
    let mut f = vec![0.0; n];
    let corners = 1usize << axes.len().min(10);
    let u_corners = |box_: &[crate::system::Interval], k: usize| -> Vec<f64> {
        box_.iter().enumerate().map(|(j, iv)| if k >> j & 1 == 1 { iv.hi } else { iv.lo }).collect()
    };
    for c in 0..corners {
        let mut x = vec![0.0; n];
        for (j, &ax) in axes.iter().enumerate() {
            x[ax] = if c >> j & 1 == 1 { beta } else { -beta };
        }
        for klf in 0..(1usize << sys.planner_input_set().len().min(10)) {
            let ulf = u_corners(sys.planner_input_set(), klf);
            for khf in 0..(1usize << sys.tracker_input_set().len().min(10)) {
                let uhf = u_corners(sys.tracker_input_set(), khf);
                sys.vector_field(&x, &ulf, &uhf, &mut f);
                best = best.max(num::norm(&f));
            }
        }
    }
    1.5 * best
}

struct PolicyState {
    rng: Option<ChaCha8Rng>,
    next_draw: f64,
    current: Vec<f64>,
    nu: Vec<f64>,
    zero_hf: Vec<f64>,
}

impl PolicyState {
    fn new(sys: &dyn RelativeSystem, policy: &PlannerPolicy) -> Self {
        let m = sys.planner_input_set().len();
        let nu = vec![0.0; sys.state_dim()];
        let zero_hf: Vec<f64> = sys.tracker_input_set().iter().map(|iv| iv.clamp(0.0)).collect();
        match policy {
            PlannerPolicy::RandomPiecewise { seed, .. } => PolicyState {
                rng: Some(ChaCha8Rng::seed_from_u64(*seed)),
                next_draw: f64::NEG_INFINITY,
                current: vec![0.0; m],
                nu,
                zero_hf,
            },
            PlannerPolicy::Constant(u) => PolicyState {
                rng: None,
                next_draw: f64::INFINITY,
                current: u.clone(),
                nu,
                zero_hf,
            },
            PlannerPolicy::OptimalEscape => PolicyState {
                rng: None,
                next_draw: f64::INFINITY,
                current: vec![0.0; m],
                nu,
                zero_hf,
            },
        }
    }

    fn input(
        &mut self,
        sys: &dyn RelativeSystem,
        policy: &PlannerPolicy,
        t: f64,
        x: &[f64],
        out: &mut [f64],
    ) {
        match policy {
            PlannerPolicy::Constant(_) => out.copy_from_slice(&self.current),
            PlannerPolicy::RandomPiecewise { dwell, .. } => {
                if t >= self.next_draw {
                    let rng = self.rng.as_mut().expect("random policy has an rng");
                    for (j, iv) in sys.planner_input_set().iter().enumerate() {
                        self.current[j] = rng.gen_range(iv.lo..=iv.hi);
                    }
                    self.next_draw = t + dwell.max(1e-9);
                }
                out.copy_from_slice(&self.current);
            }
            PlannerPolicy::OptimalEscape => {
                // planner maximizer along the outward projected direction
                sys.projection().apply(x, &mut self.nu);
                if num::normalize(&mut self.nu) == 0.0 {
                    let ax = sys.projection().active_axes()[0];
                    self.nu[ax] = 1.0;
                }
                sys.planner_best_response(x, &self.nu, &self.zero_hf, out);
            }
        }
    }
}

/// Closed-loop run: planner adversary against the safety controller, with
/// the tracker input held over each step. Ends at the horizon or at the
/// first escape beyond the tolerance band.
pub fn simulate(
    sys: &dyn RelativeSystem,
    teb: &TrackingErrorBound,
    cfg: &SimConfig,
) -> Result<SimResult> {
    if !(cfg.dt > 0.0) || !(cfg.horizon >= cfg.dt) || cfg.x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("simulation needs dt > 0, horizon >= dt, finite x0".into()));
    }
    let beta = teb.beta();
    let guard = cfg
        .guard_band
        .unwrap_or_else(|| (2.0 * speed_bound(sys, beta) * cfg.dt).max(1e-4 * beta));
    let controller = SafetyController::new(sys, teb).with_guard_band(guard);
    let nominal: Vec<f64> = cfg
        .nominal_u_hf
        .clone()
        .unwrap_or_else(|| sys.tracker_input_set().iter().map(|iv| iv.clamp(0.0)).collect());

    let n = sys.state_dim();
    let steps = (cfg.horizon / cfg.dt).round() as usize;
    let mut policy = PolicyState::new(sys, &cfg.policy);
    let mut x = cfg.x0.clone();
    let mut t = 0.0;
    let escape_limit = beta * (1.0 + cfg.tolerance_band);
    let mut max_norm = sys.projection().norm(&x);
    let mut first_clamp_time = None;
    let mut left_teb_steps = 0usize;
    let mut trajectory = Vec::new();
    let mut scratch = vec![0.0; 5 * n];
    let mut out = vec![0.0; n];

    let mut u_lf = vec![0.0; sys.planner_input_set().len()];
    let mut u_hf = vec![0.0; sys.tracker_input_set().len()];
    let mut last_inside = false;
    for k in 0..steps {
        policy.input(sys, &cfg.policy, t, &x, &mut u_lf);
        match controller.decide_step(&x, &mut last_inside) {
            Ok(d) => {
                if d.mode == Mode::Clamp && first_clamp_time.is_none() {
                    first_clamp_time = Some(t);
                }
                match d.u_hf {
                    Some(u) => u_hf.copy_from_slice(&u),
                    None => u_hf.copy_from_slice(&nominal),
                }
            }
            Err(Error::SafetyViolation(_)) => {
                // outside the bound: best effort while still captive
                left_teb_steps += 1;
                if first_clamp_time.is_none() {
                    first_clamp_time = Some(t);
                }
                u_hf.copy_from_slice(&controller.recover(&x));
            }
            Err(e) => return Err(e),
        };
        if cfg.record {
            trajectory.push(SimSample {
                t,
                state: x.clone(),
                u_lf: u_lf.clone(),
                u_hf: u_hf.clone(),
            });
        }
        num::rk4_step(
            |_, y, dy| sys.vector_field(y, &u_lf, &u_hf, dy),
            t,
            &x,
            cfg.dt,
            &mut out,
            &mut scratch,
        );
        x.copy_from_slice(&out);
        t = (k + 1) as f64 * cfg.dt;
        let r = sys.projection().norm(&x);
        if !r.is_finite() || num::norm(&x) > 1e3 * beta {
            return Err(Error::SimDiverged { t, norm: num::norm(&x) });
        }
        max_norm = max_norm.max(r);
        if r > escape_limit {
            break;
        }
    }
    if cfg.record {
        policy.input(sys, &cfg.policy, t, &x, &mut u_lf);
        trajectory.push(SimSample { t, state: x.clone(), u_lf: u_lf.clone(), u_hf: nominal });
    }
    Ok(SimResult {
        trajectory,
        escaped: max_norm > escape_limit,
        max_norm,
        first_clamp_time,
        left_teb_steps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct McSummary {
    pub runs: usize,
    pub escapes: usize,
    pub worst_max_norm: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub horizon: f64,
    pub dt: f64,
    pub dwell: f64,
    pub tolerance_band: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { horizon: 20.0, dt: 1e-3, dwell: 0.5, tolerance_band: 1e-6 }
    }
}

fn mix_seed(master: u64, salt: u64) -> u64 {
    // splitmix64
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform draw from the bound interior by rejection over its bounding box.
pub fn sample_interior(
    sys: &dyn RelativeSystem,
    teb: &TrackingErrorBound,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let (lo, hi) = teb.bbox();
    let axes = teb.critical_axes();
    let n = sys.state_dim();
    loop {
        let mut x = vec![0.0; n];
        x[axes.0] = rng.gen_range(lo[0]..=hi[0]);
        x[axes.1] = rng.gen_range(lo[1]..=hi[1]);
        if teb.membership(&x) == Membership::Interior {
            return x;
        }
    }
}

/// Recreate one Monte-Carlo run (same seed derivation as
/// [`monte_carlo_invariance`]) with trajectory recording on.
pub fn replay_run(
    sys: &dyn RelativeSystem,
    teb: &TrackingErrorBound,
    seed: u64,
    idx: usize,
    cfg: &McConfig,
) -> Result<SimResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
    let x0 = sample_interior(sys, teb, &mut rng);
    let policy = PlannerPolicy::RandomPiecewise {
        seed: mix_seed(seed, (idx as u64) ^ 0xA5A5_A5A5_A5A5_A5A5),
        dwell: cfg.dwell,
    };
    let mut sc = SimConfig::new(x0, policy);
    sc.horizon = cfg.horizon;
    sc.dt = cfg.dt;
    sc.tolerance_band = cfg.tolerance_band;
    sc.record = true;
    simulate(sys, teb, &sc)
}

/// Monte-Carlo invariance suite: independent random-adversary runs from
/// interior starts; deterministic for a fixed master seed.
pub fn monte_carlo_invariance(
    sys: &dyn RelativeSystem,
    teb: &TrackingErrorBound,
    n_runs: usize,
    seed: u64,
    cfg: &McConfig,
) -> Result<McSummary> {
    use rayon::prelude::*;
    if n_runs == 0 {
        return Err(Error::Config("monte carlo needs at least one run".into()));
    }
    let results: Result<Vec<(bool, f64)>> = (0..n_runs)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, idx as u64));
            let x0 = sample_interior(sys, teb, &mut rng);
            let policy = PlannerPolicy::RandomPiecewise {
                seed: mix_seed(seed, (idx as u64) ^ 0xA5A5_A5A5_A5A5_A5A5),
                dwell: cfg.dwell,
            };
            let mut sc = SimConfig::new(x0, policy);
            sc.horizon = cfg.horizon;
            sc.dt = cfg.dt;
            sc.tolerance_band = cfg.tolerance_band;
            let r = simulate(sys, teb, &sc)?;
            Ok((r.escaped, r.max_norm))
        })
        .collect();
    let results = results?;
    let escapes = results.iter().filter(|(e, _)| *e).count();
    let worst_max_norm = results.iter().map(|(_, m)| *m).fold(f64::NEG_INFINITY, f64::max);
    Ok(McSummary { runs: n_runs, escapes, worst_max_norm, seed })
}
