//! Diff-able artifact formats: trajectory/boundary CSV and report JSON.
//! Floating-point values are printed with 17 significant digits so files
//! round-trip bit-exactly.

use std::io::Write;
use std::path::Path;

use crate::barrier::{BarrierPiece, SurfaceSample, TrackingErrorBound};
use crate::error::{Error, Result};
use crate::sim::SimSample;

/// 17 significant digits, `.` decimal separator.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| {
        Error::Config(format!("csv line {line}: bad float `{field}`: {e}"))
    })
}

/// Surface/trajectory CSV: `t,x1..xn,xi1..xin,u_lf,u_hf`, one row per
/// sample, header mandatory.
pub fn write_surface_csv(path: &Path, samples: &[SurfaceSample]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.state.len());
    let m_lf = samples.first().map_or(0, |s| s.u_lf.len());
    let m_hf = samples.first().map_or(0, |s| s.u_hf.len());
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    for i in 1..=n {
        out.push_str(&format!(",xi{i}"));
    }
    push_input_headers(&mut out, "u_lf", m_lf);
    push_input_headers(&mut out, "u_hf", m_hf);
    out.push('\n');
    for s in samples {
        out.push_str(&fmt17(s.t));
        for v in s.state.iter().chain(&s.adjoint).chain(&s.u_lf).chain(&s.u_hf) {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn push_input_headers(out: &mut String, base: &str, m: usize) {
    if m == 1 {
        out.push_str(&format!(",{base}"));
    } else {
        for i in 1..=m {
            out.push_str(&format!(",{base}{i}"));
        }
    }
}

/// Reads a surface CSV produced by [`write_surface_csv`].
pub fn read_surface_csv(path: &Path) -> Result<Vec<SurfaceSample>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty surface csv", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x') && !c.starts_with("xi")).count();
    let n_xi = cols.iter().filter(|c| c.starts_with("xi")).count();
    let m_lf = cols.iter().filter(|c| c.starts_with("u_lf")).count();
    let m_hf = cols.iter().filter(|c| c.starts_with("u_hf")).count();
    if n == 0 || n != n_xi || cols.len() != 1 + 2 * n + m_lf + m_hf {
        return Err(Error::Config(format!("{}: malformed surface header", path.display())));
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Config(format!(
                "{}: line {} has {} fields, expected {}",
                path.display(),
                lineno + 1,
                fields.len(),
                cols.len()
            )));
        }
        let mut it = fields.iter();
        let t = parse_f64(it.next().unwrap(), lineno + 1)?;
        let mut take = |k: usize| -> Result<Vec<f64>> {
            (0..k).map(|_| parse_f64(it.next().unwrap(), lineno + 1)).collect()
        };
        let state = take(n)?;
        let adjoint = take(n)?;
        let u_lf = take(m_lf)?;
        let u_hf = take(m_hf)?;
        samples.push(SurfaceSample { t, state, adjoint, u_lf, u_hf });
    }
    Ok(samples)
}

/// Simulation trajectory CSV: the surface schema minus adjoint columns.
pub fn write_sim_csv(path: &Path, samples: &[SimSample]) -> Result<()> {
    let n = samples.first().map_or(0, |s| s.state.len());
    let m_lf = samples.first().map_or(0, |s| s.u_lf.len());
    let m_hf = samples.first().map_or(0, |s| s.u_hf.len());
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    push_input_headers(&mut out, "u_lf", m_lf);
    push_input_headers(&mut out, "u_hf", m_hf);
    out.push('\n');
    for s in samples {
        out.push_str(&fmt17(s.t));
        for v in s.state.iter().chain(&s.u_lf).chain(&s.u_hf) {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn piece_component_name(piece: &BarrierPiece, axes: (usize, usize)) -> &'static str {
    if piece.origin.state[axes.0] >= 0.0 {
        "barrier_right"
    } else {
        "barrier_left"
    }
}

/// Boundary polyline CSV: `component,x1,...,xn` with the non-escapable arc
/// first, then the barrier pieces in boundary-traversal order.
pub fn write_teb_csv(path: &Path, teb: &TrackingErrorBound) -> Result<()> {
    let axes = teb.critical_axes();
    let n = teb.barrier().pieces[0].samples[0].state.len();
    let mut out = String::from("component");
    for i in 1..=n {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for p in teb.arc_points() {
        out.push_str("nup");
        let mut x = vec![0.0; n];
        x[axes.0] = p[0];
        x[axes.1] = p[1];
        for v in &x {
            out.push(',');
            out.push_str(&fmt17(*v));
        }
        out.push('\n');
    }
    for piece in teb.barrier().pieces.iter() {
        let name = piece_component_name(piece, axes);
        for s in &piece.samples {
            out.push_str(name);
            for v in &s.state {
                out.push(',');
                out.push_str(&fmt17(*v));
            }
            out.push('\n');
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Sweep CSV: one row per margin.
pub fn write_sweep_csv(path: &Path, rows: &[crate::adaptation::SweepRow]) -> Result<()> {
    let n = rows.iter().find(|r| !r.junction.is_empty()).map_or(2, |r| r.junction.len());
    let mut out = String::from("beta,theta");
    for i in 1..=n {
        out.push_str(&format!(",junction_x{i}"));
    }
    out.push_str(",residual,valid18,valid20,valid21,status\n");
    for r in rows {
        out.push_str(&fmt17(r.beta));
        out.push(',');
        out.push_str(&r.theta.map(fmt17).unwrap_or_default());
        for i in 0..n {
            out.push(',');
            out.push_str(&r.junction.get(i).map(|v| fmt17(*v)).unwrap_or_default());
        }
        out.push(',');
        if r.residual.is_finite() {
            out.push_str(&fmt17(r.residual));
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            r.valid_curvature, r.valid_containment, r.valid_direction, r.status
        ));
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::SurfaceSample;

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, -1.0 / 3.0, 2.5e-17, 1.2345678901234567e8, f64::MIN_POSITIVE] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
            assert!(s.contains('.'));
        }
    }

    #[test]
    fn surface_csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("ceteb-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("surface.csv");
        let samples = vec![
            SurfaceSample {
                t: -0.5,
                state: vec![0.1, -0.2],
                adjoint: vec![0.6, 0.8],
                u_lf: vec![1.25],
                u_hf: vec![-1.0],
            },
            SurfaceSample {
                t: 0.0,
                state: vec![0.25, 0.0],
                adjoint: vec![1.0, 0.0],
                u_lf: vec![0.5],
                u_hf: vec![1.0],
            },
        ];
        write_surface_csv(&path, &samples).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x1,x2,xi1,xi2,u_lf,u_hf\n"));
        let back = read_surface_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.state, b.state);
            assert_eq!(a.adjoint, b.adjoint);
            assert_eq!(a.u_lf, b.u_lf);
            assert_eq!(a.u_hf, b.u_hf);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn malformed_surface_csv_rejected() {
        let dir = std::env::temp_dir().join(format!("ceteb-io-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "t,x1,x2,xi1,xi2,u_lf,u_hf\n0.0,1.0\n").unwrap();
        assert!(read_surface_csv(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
