//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (run with `cargo test --test acceptance -- --nocapture` to see
//! them). Tolerances are pinned in the assertions.

mod common;

use std::time::Instant;

use ceteb::*;
use common::{polygon_contains, OracleSurface, TWO_PI};

fn base_system() -> ChauffeurSystem {
    ChauffeurSystem::new(1.0, 0.0, TWO_PI).unwrap()
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!("acceptance {criterion}: {} — {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_solve_theta_for_margin() {
    let started = Instant::now();
    let out = solve_theta_for_alpha(&base_system(), 0.25, None, &SolveConfig::default()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let theta = out.report.solved_value;
    let pass = (0.095..=0.105).contains(&theta) && elapsed <= 60.0;
    report(
        "1 (performance for margin 0.25)",
        pass,
        &format!("theta = {theta:.9} in [0.095, 0.105], {elapsed:.2} s <= 60 s"),
    );
}

#[test]
fn criterion_2_solve_margin_for_theta() {
    let started = Instant::now();
    let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap();
    let out = solve_alpha_for_theta(&sys, 0.10, None, &SolveConfig::default()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let alpha = out.report.solved_value;
    let pass = (0.245..=0.255).contains(&alpha) && elapsed <= 60.0;
    report(
        "2 (margin for planner speed 0.10)",
        pass,
        &format!("alpha = {alpha:.9} in [0.245, 0.255], {elapsed:.2} s <= 60 s"),
    );
}

#[test]
fn criterion_3_anchor_closed_form_grid() {
    let mut worst = 0.0f64;
    for i in 0..10 {
        let v_lf = 0.02 + 0.09 * i as f64;
        for j in 0..10 {
            let beta = 0.05 + 0.07 * j as f64;
            let sys = ChauffeurSystem::new(1.0, v_lf, TWO_PI).unwrap();
            let cap = CaptivitySet::new(beta, Projection::identity(2)).unwrap();
            let pts = compute_bnup(&sys, &cap, &BnupConfig::default()).unwrap();
            assert_eq!(pts.len(), 2);
            let ex = beta * (1.0 - v_lf * v_lf).sqrt();
            let ey = beta * v_lf;
            for (p, sx) in pts.iter().zip([1.0, -1.0]) {
                worst = worst
                    .max((p.state[0] - sx * ex).abs())
                    .max((p.state[1] - ey).abs());
            }
        }
    }
    report(
        "3 (anchor closed form, 10x10 grid)",
        worst <= 1e-9,
        &format!("worst coordinate error {worst:.3e} <= 1e-9"),
    );
}

#[test]
fn criterion_4_closed_form_barrier_oracle() {
    let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap();
    let cap = CaptivitySet::new(0.25, Projection::identity(2)).unwrap();
    let anchors = compute_bnup(&sys, &cap, &BnupConfig::default()).unwrap();
    let oracle = OracleSurface::right(0.10, 1.0, TWO_PI, 0.25, -0.76);
    let (t_hat, _) = oracle.axis_crossing(-0.76).unwrap();
    let traj = integrate_surface(&sys, &cap, &anchors[0], -t_hat, 1e-4).unwrap();
    let mut sup = 0.0f64;
    for s in &traj.samples {
        let z = oracle.state(s.t);
        sup = sup.max((s.state[0] - z[0]).abs()).max((s.state[1] - z[1]).abs());
    }
    report(
        "4 (closed-form barrier oracle)",
        sup <= 1e-8,
        &format!("sup-norm over [{t_hat:.4}, 0] = {sup:.3e} <= 1e-8"),
    );
}

#[test]
fn criterion_5_tangency_identity() {
    let sys = base_system();
    let out = solve_theta_for_alpha(&sys, 0.25, None, &SolveConfig::default()).unwrap();
    let solved = ChauffeurSystem::new(1.0, out.report.solved_value, TWO_PI).unwrap();
    let cap = CaptivitySet::new(0.25, Projection::identity(2)).unwrap();
    let anchors = compute_bnup(&solved, &cap, &BnupConfig::default()).unwrap();
    let mut worst = 0.0f64;
    let mut samples = 0usize;
    for a in &anchors {
        let traj = integrate_surface(&solved, &cap, a, 0.69, 1e-4).unwrap();
        for s in &traj.samples {
            let mut f = vec![0.0; 2];
            solved.vector_field(&s.state, &s.u_lf, &s.u_hf, &mut f);
            worst = worst.max((s.adjoint[0] * f[0] + s.adjoint[1] * f[1]).abs());
            samples += 1;
        }
    }
    report(
        "5 (tangency identity on every sample)",
        worst <= 1e-8,
        &format!("{samples} samples, worst |xi . f| = {worst:.3e} <= 1e-8"),
    );
}

#[test]
fn criterion_6_worst_error_equals_radius() {
    let out = solve_theta_for_alpha(&base_system(), 0.25, None, &SolveConfig::default()).unwrap();
    let wte = out.teb.wte();
    report(
        "6 (worst-case tracking error equals the radius)",
        (wte - 0.25).abs() <= 1e-9,
        &format!("wte = {wte:.12}, |wte - 0.25| = {:.3e} <= 1e-9", (wte - 0.25).abs()),
    );
}

#[test]
fn criterion_7_invariance_suite() {
    let out = solve_theta_for_alpha(&base_system(), 0.25, None, &SolveConfig::default()).unwrap();
    let solved = ChauffeurSystem::new(1.0, out.report.solved_value, TWO_PI).unwrap();
    let mc = monte_carlo_invariance(&solved, &out.teb, 1000, 42, &McConfig::default()).unwrap();
    let band_ok = mc.worst_max_norm <= 0.25 * (1.0 + 1e-6);

    // sharpness: start exactly on the barrier, radial-escape adversary
    let piece = &out.teb.barrier().pieces[0];
    let x0 = piece.samples[piece.samples.len() / 2].state.clone();
    let mut sc = SimConfig::new(x0, PlannerPolicy::OptimalEscape);
    sc.horizon = 20.0;
    sc.dt = 1e-3;
    sc.tolerance_band = 1e-3;
    let run = simulate(&solved, &out.teb, &sc).unwrap();
    let sharp = (run.max_norm - 0.25).abs() <= 1e-3 * 0.25;

    let pass = mc.escapes == 0 && band_ok && sharp;
    report(
        "7 (invariance suite)",
        pass,
        &format!(
            "{} runs, {} escapes, worst norm {:.9} (band {:.9}); sharpness |max - beta| = {:.3e} <= 2.5e-4",
            mc.runs,
            mc.escapes,
            mc.worst_max_norm,
            0.25 * (1.0 + 1e-6),
            (run.max_norm - 0.25).abs()
        ),
    );
}

#[test]
fn criterion_8_symmetry_and_step_halving() {
    let sys = ChauffeurSystem::new(1.0, 0.10, TWO_PI).unwrap();
    let cap = CaptivitySet::new(0.25, Projection::identity(2)).unwrap();
    let anchors = compute_bnup(&sys, &cap, &BnupConfig::default()).unwrap();

    let mut mirror_err = 0.0f64;
    let right = integrate_surface(&sys, &cap, &anchors[0], 0.69, 1e-4).unwrap();
    let left = integrate_surface(&sys, &cap, &anchors[1], 0.69, 1e-4).unwrap();
    for (r, l) in right.samples.iter().zip(&left.samples) {
        mirror_err = mirror_err
            .max((r.state[0] + l.state[0]).abs())
            .max((r.state[1] - l.state[1]).abs());
    }

    let junction_at = |step: f64| {
        let cfg = IntegratorConfig { step, horizon: 2.0, ..Default::default() };
        let stop_r = |_t: f64, x: &[f64]| x[0] < -0.02;
        let stop_l = |_t: f64, x: &[f64]| x[0] > 0.02;
        let r = integrate_surface_stopping(&sys, &cap, &anchors[0], &cfg, Some(&stop_r)).unwrap();
        let l = integrate_surface_stopping(&sys, &cap, &anchors[1], &cfg, Some(&stop_l)).unwrap();
        assemble_barrier(&sys, &cap, &[r, l]).unwrap().junction
    };
    let j1 = junction_at(1e-4);
    let j2 = junction_at(5e-5);
    let drift = ((j1[0] - j2[0]).powi(2) + (j1[1] - j2[1]).powi(2)).sqrt();

    let pass = mirror_err <= 1e-9 && drift <= 1e-9;
    report(
        "8 (mirror symmetry and step-halving)",
        pass,
        &format!("mirror error {mirror_err:.3e} <= 1e-9, junction drift {drift:.3e} <= 1e-9"),
    );
}

#[test]
fn criterion_9_round_trip() {
    let sys = base_system();
    let cfg = SolveConfig::default();
    let theta = solve_theta_for_alpha(&sys, 0.25, None, &cfg).unwrap().report.solved_value;
    let alpha = solve_alpha_for_theta(&sys, theta, None, &cfg).unwrap().report.solved_value;
    report(
        "9 (round trip between objectives)",
        (alpha - 0.25).abs() <= 2e-6,
        &format!("alpha(theta(0.25)) = {alpha:.9}, |alpha - 0.25| = {:.3e} <= 2e-6", (alpha - 0.25).abs()),
    );
}

#[test]
fn membership_spot_checks_against_polygon_oracle() {
    // independent even-odd oracle over the exported boundary polygon
    let out = solve_theta_for_alpha(&base_system(), 0.25, None, &SolveConfig::default()).unwrap();
    let teb = &out.teb;
    let mut poly: Vec<[f64; 2]> = teb.arc_points().to_vec();
    let pieces = &teb.barrier().pieces;
    let (first, second) =
        if pieces[0].origin.angle < pieces[1].origin.angle { (0, 1) } else { (1, 0) };
    for s in pieces[second].samples.iter().rev() {
        poly.push([s.state[0], s.state[1]]);
    }
    for s in pieces[first].samples.iter() {
        poly.push([s.state[0], s.state[1]]);
    }

    let mut state = 0xD1B54A32D192ED03u64;
    let mut rnd = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 0.7 - 0.35
    };
    let mut checked = 0;
    for _ in 0..4000 {
        let p = [rnd(), rnd()];
        // skip the boundary band where the polygon chord and the analytic
        // arc legitimately disagree
        if teb.boundary_distance(&p) < 1e-5 {
            continue;
        }
        let lib = matches!(teb.membership(&p), Membership::Interior);
        let oracle = polygon_contains(&poly, p);
        assert_eq!(lib, oracle, "at {p:?}");
        checked += 1;
    }
    assert!(checked > 3000);

    // pinned examples: the region is the crescent between the arc and the
    // barrier, so the origin and the bottom of the set lie outside
    assert_eq!(teb.membership(&[0.0, 0.0]), Membership::Outside);
    assert!(!polygon_contains(&poly, [0.0, 0.0]));
    assert_eq!(teb.membership(&[0.0, -0.25]), Membership::Outside);
    assert_eq!(teb.membership(&[0.2, 0.1]), Membership::Interior);
    assert!(polygon_contains(&poly, [0.2, 0.1]));
}
