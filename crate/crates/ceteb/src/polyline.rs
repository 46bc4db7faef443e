//! Planar polyline utilities: nearest-segment queries, even-odd point
//! location, and segment-chain intersection, accelerated by a uniform grid.

pub type P2 = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct Nearest {
    pub chain: usize,
    pub segment: usize,
    /// Parameter in [0, 1] along the segment.
    pub param: f64,
    pub dist: f64,
    pub point: P2,
}

fn seg_closest(p: P2, a: P2, b: P2) -> (f64, f64, P2) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * dx, a[1] + t * dy];
    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    (t, d, q)
}

/// Proper segment-segment intersection; returns (s, t) parameters when the
/// interiors (inclusive of endpoints) cross transversally.
pub fn seg_intersect(p0: P2, p1: P2, q0: P2, q1: P2) -> Option<(f64, f64)> {
    let rx = p1[0] - p0[0];
    let ry = p1[1] - p0[1];
    let sx = q1[0] - q0[0];
    let sy = q1[1] - q0[1];
    let denom = rx * sy - ry * sx;
    if denom == 0.0 {
        return None;
    }
    let qpx = q0[0] - p0[0];
    let qpy = q0[1] - p0[1];
    let s = (qpx * sy - qpy * sx) / denom;
    let t = (qpx * ry - qpy * rx) / denom;
    if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&t) {
        Some((s, t))
    } else {
        None
    }
}

struct Seg {
    chain: usize,
    idx: usize,
    a: P2,
    b: P2,
}

/// Uniform-grid index over a set of polyline chains.
pub struct ChainIndex {
    chains: Vec<Vec<P2>>,
    segs: Vec<Seg>,
    cells: Vec<Vec<u32>>,
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    cell: f64,
}

impl ChainIndex {
    pub fn new(chains: Vec<Vec<P2>>) -> Self {
        let mut segs = Vec::new();
        for (ci, ch) in chains.iter().enumerate() {
            for i in 0..ch.len().saturating_sub(1) {
                segs.push(Seg { chain: ci, idx: i, a: ch[i], b: ch[i + 1] });
            }
        }
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &segs {
            for p in [s.a, s.b] {
                xmin = xmin.min(p[0]);
                xmax = xmax.max(p[0]);
                ymin = ymin.min(p[1]);
                ymax = ymax.max(p[1]);
            }
        }
        if segs.is_empty() {
            xmin = 0.0;
            xmax = 1.0;
            ymin = 0.0;
            ymax = 1.0;
        }
        let pad = 1e-9 + 1e-9 * (xmax - xmin).abs().max((ymax - ymin).abs());
        xmin -= pad;
        ymin -= pad;
        xmax += pad;
        ymax += pad;
        let n = (segs.len() as f64).sqrt().ceil().max(8.0) as usize;
        let nx = n.min(512);
        let ny = n.min(512);
        let cell = ((xmax - xmin) / nx as f64).max((ymax - ymin) / ny as f64);
        let nx = (((xmax - xmin) / cell).ceil() as usize).max(1);
        let ny = (((ymax - ymin) / cell).ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        for (si, s) in segs.iter().enumerate() {
            let ix0 = (((s.a[0].min(s.b[0]) - xmin) / cell).floor() as isize).clamp(0, nx as isize - 1);
            let ix1 = (((s.a[0].max(s.b[0]) - xmin) / cell).floor() as isize).clamp(0, nx as isize - 1);
            let iy0 = (((s.a[1].min(s.b[1]) - ymin) / cell).floor() as isize).clamp(0, ny as isize - 1);
            let iy1 = (((s.a[1].max(s.b[1]) - ymin) / cell).floor() as isize).clamp(0, ny as isize - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    cells[iy as usize * nx + ix as usize].push(si as u32);
                }
            }
        }
        ChainIndex { chains, segs, cells, nx, ny, x0: xmin, y0: ymin, cell }
    }

    pub fn chains(&self) -> &[Vec<P2>] {
        &self.chains
    }

    fn cell_of(&self, p: P2) -> (isize, isize) {
        (
            (((p[0] - self.x0) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1),
            (((p[1] - self.y0) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1),
        )
    }

    /// Nearest point over all chains (expanding ring search).
    pub fn nearest(&self, p: P2) -> Option<Nearest> {
        self.nearest_within(p, f64::INFINITY)
    }

    /// Nearest point, abandoning the search once no segment can lie within
    /// `radius` of the query.
    pub fn nearest_within(&self, p: P2, radius: f64) -> Option<Nearest> {
        if self.segs.is_empty() {
            return None;
        }
        let (cx, cy) = self.cell_of(p);
        let mut best: Option<Nearest> = None;
        let max_ring = self.nx.max(self.ny) as isize;
        for ring in 0..=max_ring {
            let ring_dist = (ring - 1).max(0) as f64 * self.cell;
            if let Some(b) = &best {
                // ring strictly farther than current best cannot improve
                if b.dist < ring_dist {
                    break;
                }
            } else if ring_dist > radius {
                return None;
            }
            let mut any_cell = false;
            for iy in (cy - ring)..=(cy + ring) {
                if iy < 0 || iy >= self.ny as isize {
                    continue;
                }
                for ix in (cx - ring)..=(cx + ring) {
                    if ix < 0 || ix >= self.nx as isize {
                        continue;
                    }
                    if ring > 0 && (iy - cy).abs() != ring && (ix - cx).abs() != ring {
                        continue; // interior of ring already visited
                    }
                    any_cell = true;
                    for &si in &self.cells[iy as usize * self.nx + ix as usize] {
                        let s = &self.segs[si as usize];
                        let (t, d, q) = seg_closest(p, s.a, s.b);
                        if best.as_ref().map_or(true, |b| d < b.dist) {
                            best = Some(Nearest {
                                chain: s.chain,
                                segment: s.idx,
                                param: t,
                                dist: d,
                                point: q,
                            });
                        }
                    }
                }
            }
            if !any_cell && best.is_some() {
                break;
            }
        }
        best.filter(|b| b.dist <= radius)
    }

    /// Even-odd rule point location against the union of chains, treated as a
    /// closed loop set. Casts a ray in +x, walking grid cells along the row
    /// and counting crossings with the half-open rule on y.
    pub fn even_odd_inside(&self, p: P2) -> bool {
        let (_, cy) = self.cell_of(p);
        let mut crossings = 0usize;
        let mut seen: Vec<u32> = Vec::new();
        let row = cy as usize * self.nx;
        let start_ix = (((p[0] - self.x0) / self.cell).floor() as isize).max(0) as usize;
        for ix in start_ix..self.nx {
            for &si in &self.cells[row + ix] {
                if seen.contains(&si) {
                    continue;
                }
                seen.push(si);
                let s = &self.segs[si as usize];
                let (a, b) = (s.a, s.b);
                if (a[1] <= p[1] && b[1] > p[1]) || (b[1] <= p[1] && a[1] > p[1]) {
                    let t = (p[1] - a[1]) / (b[1] - a[1]);
                    let x = a[0] + t * (b[0] - a[0]);
                    if x > p[0] {
                        crossings += 1;
                    }
                }
            }
        }
        crossings % 2 == 1
    }

    /// All transversal intersections between chain `ca` and chain `cb`,
    /// as (segment index in a, param a, segment index in b, param b).
    pub fn chain_intersections(&self, ca: usize, cb: usize) -> Vec<(usize, f64, usize, f64)> {
        let a = &self.chains[ca];
        let mut hits = Vec::new();
        for ia in 0..a.len().saturating_sub(1) {
            let (p0, p1) = (a[ia], a[ia + 1]);
            let ix0 = (((p0[0].min(p1[0]) - self.x0) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1);
            let ix1 = (((p0[0].max(p1[0]) - self.x0) / self.cell).floor() as isize).clamp(0, self.nx as isize - 1);
            let iy0 = (((p0[1].min(p1[1]) - self.y0) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1);
            let iy1 = (((p0[1].max(p1[1]) - self.y0) / self.cell).floor() as isize).clamp(0, self.ny as isize - 1);
            let mut seen: Vec<u32> = Vec::new();
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    for &si in &self.cells[iy as usize * self.nx + ix as usize] {
                        let s = &self.segs[si as usize];
                        if s.chain != cb || seen.contains(&si) {
                            continue;
                        }
                        seen.push(si);
                        if let Some((sa, sb)) = seg_intersect(p0, p1, s.a, s.b) {
                            hits.push((ia, sa, s.idx, sb));
                        }
                    }
                }
            }
        }
        hits
    }
}
