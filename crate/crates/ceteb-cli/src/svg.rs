//! SVG rendering of a tracking error bound: captivity circle, boundary
//! arc, barrier pieces, anchor/junction/switch markers, and optional
//! trajectory overlays.

use ceteb::TrackingErrorBound;
use std::fmt::Write;

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

fn polyline(out: &mut String, pts: &[[f64; 2]], style: &str) {
    let stride = (pts.len() / 1500).max(1);
    let mut d = String::new();
    for (k, p) in pts.iter().step_by(stride).enumerate() {
        let cmd = if k == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{} {} ", fmt(p[0]), fmt(-p[1]));
    }
    if stride > 1 {
        let p = pts.last().unwrap();
        let _ = write!(d, "L{} {} ", fmt(p[0]), fmt(-p[1]));
    }
    let _ = writeln!(out, r#"    <path d="{}" style="{style}"/>"#, d.trim_end());
}

fn dot(out: &mut String, p: [f64; 2], r: f64, fill: &str) {
    let _ = writeln!(
        out,
        r#"    <circle cx="{}" cy="{}" r="{}" fill="{fill}"/>"#,
        fmt(p[0]),
        fmt(-p[1]),
        fmt(r)
    );
}

pub fn render(teb: &TrackingErrorBound, trajectories: &[Vec<[f64; 2]>]) -> String {
    let beta = teb.beta();
    let half = 1.2 * beta;
    let axes = teb.critical_axes();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="640" height="640">"#,
        fmt(-half),
        fmt(-half),
        fmt(2.0 * half),
        fmt(2.0 * half)
    );
    let sw = fmt(beta / 120.0);

    let _ = writeln!(s, r#"  <g id="captivity-boundary">"#);
    let _ = writeln!(
        s,
        r##"    <circle cx="0" cy="0" r="{}" fill="#e8f5e9" stroke="black" stroke-width="{sw}"/>"##,
        fmt(beta)
    );
    let _ = writeln!(s, "  </g>");

    if !trajectories.is_empty() {
        let _ = writeln!(s, r#"  <g id="trajectories">"#);
        for t in trajectories {
            polyline(&mut s, t, &format!("fill:none;stroke:#9e9e9e;stroke-width:{sw}"));
        }
        let _ = writeln!(s, "  </g>");
    }

    let _ = writeln!(s, r#"  <g id="nup">"#);
    polyline(
        &mut s,
        teb.arc_points(),
        &format!("fill:none;stroke:#2e7d32;stroke-width:{sw}"),
    );
    let _ = writeln!(s, "  </g>");

    let _ = writeln!(s, r#"  <g id="barrier">"#);
    for piece in &teb.barrier().pieces {
        let pts: Vec<[f64; 2]> =
            piece.samples.iter().map(|smp| [smp.state[axes.0], smp.state[axes.1]]).collect();
        polyline(&mut s, &pts, &format!("fill:none;stroke:#1565c0;stroke-width:{sw}"));
    }
    let _ = writeln!(s, "  </g>");

    let r_marker = beta / 40.0;
    let _ = writeln!(s, r#"  <g id="bnup-markers">"#);
    for piece in &teb.barrier().pieces {
        let a = &piece.origin.state;
        dot(&mut s, [a[axes.0], a[axes.1]], r_marker, "#c62828");
    }
    let _ = writeln!(s, "  </g>");

    let _ = writeln!(s, r#"  <g id="junction-marker">"#);
    let j = teb.junction();
    dot(&mut s, [j[axes.0], j[axes.1]], r_marker, "#2e7d32");
    let _ = writeln!(s, "  </g>");

    let _ = writeln!(s, r#"  <g id="switch-markers">"#);
    for piece in &teb.barrier().pieces {
        for &ts in &piece.switch_times {
            if let Some(smp) = piece
                .samples
                .iter()
                .min_by(|a, b| (a.t - ts).abs().partial_cmp(&(b.t - ts).abs()).unwrap())
            {
                dot(&mut s, [smp.state[axes.0], smp.state[axes.1]], r_marker * 0.8, "#757575");
            }
        }
    }
    let _ = writeln!(s, "  </g>");

    let _ = writeln!(s, "</svg>");
    s
}
