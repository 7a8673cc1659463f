//! 3D convex hull by incremental quickhull.
//!
//! Only the vertex set is needed downstream, but the full triangulated
//! boundary is kept so that callers (and tests) can check convexity.
//!
//! Plane tests use a tolerance of `eps_rel` times the largest absolute
//! coordinate. Inputs of affine rank < 3 are handled by a planar or
//! collinear fallback and reported through [`HullKind`]. If the incremental
//! phase loses topological consistency, the input is jittered by
//! `1e-12 · diameter` and the hull is rebuilt.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::rng::{mix64, seeded_rng};
use rand::Rng;

type V3 = Vector3<f64>;

pub const DEFAULT_EPS_REL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullKind {
    Empty,
    Single,
    Collinear,
    Planar,
    Full,
}

#[derive(Debug, Clone)]
pub struct Hull {
    pub kind: HullKind,
    /// Sorted indices of input points that are hull vertices.
    pub vertices: Vec<usize>,
    /// Outward-oriented triangles (empty for degenerate kinds).
    pub faces: Vec<[usize; 3]>,
    /// Whether the jitter fallback was needed.
    pub jittered: bool,
}

impl Hull {
    pub fn is_degenerate(&self) -> bool {
        !matches!(self.kind, HullKind::Full)
    }

    /// Membership mask over the input indices.
    pub fn vertex_mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &v in &self.vertices {
            m[v] = true;
        }
        m
    }
}

#[derive(Debug)]
struct Face {
    v: [usize; 3],
    nbr: [usize; 3],
    normal: V3,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
    visit: u32,
}

impl Face {
    fn dist(&self, p: &V3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        (0..3).find(|&i| self.v[i] == a && self.v[(i + 1) % 3] == b)
    }
}

#[derive(Debug)]
struct Inconsistent;

fn plane(pts: &[V3], v: [usize; 3]) -> (V3, f64) {
    let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
    let len = n.norm();
    let n = if len > 0.0 { n / len } else { n };
    (n, n.dot(&pts[v[0]]))
}

/// Convex hull with the default tolerance.
pub fn convex_hull(points: &[V3]) -> Hull {
    convex_hull_with(points, DEFAULT_EPS_REL)
}

pub fn convex_hull_with(points: &[V3], eps_rel: f64) -> Hull {
    match points.len() {
        0 => {
            return Hull {
                kind: HullKind::Empty,
                vertices: vec![],
                faces: vec![],
                jittered: false,
            }
        }
        1 => {
            return Hull {
                kind: HullKind::Single,
                vertices: vec![0],
                faces: vec![],
                jittered: false,
            }
        }
        _ => {}
    }
    let scale = points
        .iter()
        .map(|p| p.amax())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let eps = eps_rel * scale;
    if let Ok(h) = build(points, eps) {
        return h;
    }
    let diameter = diameter_estimate(points);
    let mut rng = seeded_rng(mix64(points.len() as u64));
    for round in 0..4 {
        let amp = 1e-12 * diameter * 10f64.powi(round);
        let jittered: Vec<V3> = points
            .iter()
            .map(|p| {
                p + V3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ) * amp
            })
            .collect();
        if let Ok(mut h) = build(&jittered, eps) {
            h.jittered = true;
            return h;
        }
    }
    panic!("convex hull failed to converge after jitter retries");
}

fn diameter_estimate(points: &[V3]) -> f64 {
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}

fn build(pts: &[V3], eps: f64) -> Result<Hull, Inconsistent> {
    let n = pts.len();
    // Extreme points along the axes seed the simplex.
    let mut ext = [0usize; 6];
    for (i, p) in pts.iter().enumerate() {
        for a in 0..3 {
            if p[a] < pts[ext[2 * a]][a] {
                ext[2 * a] = i;
            }
            if p[a] > pts[ext[2 * a + 1]][a] {
                ext[2 * a + 1] = i;
            }
        }
    }
    let mut best = (0.0, ext[0], ext[1]);
    for i in 0..6 {
        for j in i + 1..6 {
            let d = (pts[ext[i]] - pts[ext[j]]).norm_squared();
            if d > best.0 {
                best = (d, ext[i], ext[j]);
            }
        }
    }
    let (d2, a, b) = best;
    if d2.sqrt() <= eps {
        return Ok(Hull {
            kind: HullKind::Single,
            vertices: vec![a],
            faces: vec![],
            jittered: false,
        });
    }
    let ab = (pts[b] - pts[a]).normalize();
    let (mut c, mut cd) = (usize::MAX, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let d = (p - pts[a]).cross(&ab).norm();
        if d > cd {
            cd = d;
            c = i;
        }
    }
    if cd <= eps {
        return Ok(collinear(pts, a, ab));
    }
    let (nrm, off) = plane(pts, [a, b, c]);
    let (mut d, mut dd) = (usize::MAX, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let s = (nrm.dot(p) - off).abs();
        if s > dd {
            dd = s;
            d = i;
        }
    }
    if dd <= eps {
        return Ok(planar(pts, pts[a], ab, nrm, eps));
    }

    let mut faces: Vec<Face> = Vec::with_capacity(4 * n.min(1 << 16) + 16);
    let centroid = (pts[a] + pts[b] + pts[c] + pts[d]) / 4.0;
    let mut tris = [[a, b, c], [a, b, d], [a, c, d], [b, c, d]];
    for t in tris.iter_mut() {
        let (nr, of) = plane(pts, *t);
        if nr.dot(&centroid) - of > 0.0 {
            t.swap(1, 2);
        }
    }
    for t in tris {
        let (normal, offset) = plane(pts, t);
        faces.push(Face {
            v: t,
            nbr: [usize::MAX; 3],
            normal,
            offset,
            outside: Vec::new(),
            alive: true,
            visit: 0,
        });
    }
    let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in 0..3 {
            edge_owner.insert((f.v[e], f.v[(e + 1) % 3]), (fi, e));
        }
    }
    for fi in 0..4 {
        for e in 0..3 {
            let (x, y) = (faces[fi].v[e], faces[fi].v[(e + 1) % 3]);
            let &(g, _) = edge_owner.get(&(y, x)).ok_or(Inconsistent)?;
            faces[fi].nbr[e] = g;
        }
    }
    let simplex = [a, b, c, d];
    for (i, p) in pts.iter().enumerate() {
        if simplex.contains(&i) {
            continue;
        }
        if let Some(fi) = (0..4).find(|&fi| faces[fi].dist(p) > eps) {
            faces[fi].outside.push(i);
        }
    }

    let mut stack: Vec<usize> = (0..4).filter(|&f| !faces[f].outside.is_empty()).collect();
    let mut stamp: u32 = 0;
    let mut visible: Vec<usize> = Vec::new();
    let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
    let mut bfs: Vec<usize> = Vec::new();
    let mut orphans: Vec<usize> = Vec::new();
    let mut start_of: HashMap<usize, usize> = HashMap::new();
    let max_iters = 8 * n + 64;
    let mut iters = 0;

    while let Some(fi) = stack.pop() {
        if !faces[fi].alive || faces[fi].outside.is_empty() {
            continue;
        }
        iters += 1;
        if iters > max_iters {
            return Err(Inconsistent);
        }
        let eye = {
            let f = &faces[fi];
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for &i in &f.outside {
                let s = f.dist(&pts[i]);
                if s > best.0 {
                    best = (s, i);
                }
            }
            best.1
        };
        let ep = pts[eye];

        stamp += 1;
        visible.clear();
        horizon.clear();
        bfs.clear();
        bfs.push(fi);
        faces[fi].visit = stamp;
        while let Some(g) = bfs.pop() {
            visible.push(g);
            for e in 0..3 {
                let h = faces[g].nbr[e];
                if h == usize::MAX || !faces[h].alive {
                    return Err(Inconsistent);
                }
                if faces[h].visit == stamp {
                    continue;
                }
                if faces[h].dist(&ep) > eps {
                    faces[h].visit = stamp;
                    bfs.push(h);
                }
            }
        }
        for &g in &visible {
            for e in 0..3 {
                let h = faces[g].nbr[e];
                if faces[h].visit != stamp {
                    horizon.push((faces[g].v[e], faces[g].v[(e + 1) % 3], h));
                }
            }
        }
        if horizon.len() < 3 {
            return Err(Inconsistent);
        }

        orphans.clear();
        for &g in &visible {
            faces[g].alive = false;
            let out = std::mem::take(&mut faces[g].outside);
            orphans.extend(out.into_iter().filter(|&i| i != eye));
        }

        start_of.clear();
        let first_new = faces.len();
        for &(x, y, nb) in &horizon {
            let tri = [x, y, eye];
            let (normal, offset) = plane(pts, tri);
            if !(normal.norm() > 0.5) {
                return Err(Inconsistent);
            }
            let id = faces.len();
            faces.push(Face {
                v: tri,
                nbr: [nb, usize::MAX, usize::MAX],
                normal,
                offset,
                outside: Vec::new(),
                alive: true,
                visit: 0,
            });
            let j = faces[nb].edge_index(y, x).ok_or(Inconsistent)?;
            faces[nb].nbr[j] = id;
            if start_of.insert(x, id).is_some() {
                return Err(Inconsistent);
            }
        }
        for id in first_new..faces.len() {
            let y = faces[id].v[1];
            let &g = start_of.get(&y).ok_or(Inconsistent)?;
            faces[id].nbr[1] = g;
            faces[g].nbr[2] = id;
        }

        for &i in &orphans {
            let p = &pts[i];
            let mut best = (eps, usize::MAX);
            for id in first_new..faces.len() {
                let s = faces[id].dist(p);
                if s > best.0 {
                    best = (s, id);
                }
            }
            if best.1 != usize::MAX {
                faces[best.1].outside.push(i);
            }
        }
        for id in first_new..faces.len() {
            if !faces[id].outside.is_empty() {
                stack.push(id);
            }
        }
    }

    let mut is_vertex = vec![false; n];
    let mut out_faces = Vec::new();
    for f in faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            is_vertex[v] = true;
        }
        out_faces.push(f.v);
    }
    Ok(Hull {
        kind: HullKind::Full,
        vertices: (0..n).filter(|&i| is_vertex[i]).collect(),
        faces: out_faces,
        jittered: false,
    })
}

fn collinear(pts: &[V3], a: usize, dir: V3) -> Hull {
    let (mut lo, mut hi) = ((f64::INFINITY, a), (f64::NEG_INFINITY, a));
    for (i, p) in pts.iter().enumerate() {
        let t = (p - pts[a]).dot(&dir);
        if t < lo.0 {
            lo = (t, i);
        }
        if t > hi.0 {
            hi = (t, i);
        }
    }
    let mut vertices = vec![lo.1, hi.1];
    vertices.sort_unstable();
    vertices.dedup();
    Hull {
        kind: HullKind::Collinear,
        vertices,
        faces: vec![],
        jittered: false,
    }
}

/// 2D monotone-chain hull in the plane spanned by `u` and `normal × u`.
fn planar(pts: &[V3], origin: V3, u: V3, normal: V3, eps: f64) -> Hull {
    let w = normal.cross(&u);
    let mut proj: Vec<(f64, f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p - origin;
            (d.dot(&u), d.dot(&w), i)
        })
        .collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let cross = |o: &(f64, f64, usize), a: &(f64, f64, usize), b: &(f64, f64, usize)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut chain: Vec<(f64, f64, usize)> = Vec::new();
    for pass in 0..2 {
        let start = chain.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64, usize)>> = if pass == 0 {
            Box::new(proj.iter())
        } else {
            Box::new(proj.iter().rev())
        };
        for p in iter {
            while chain.len() >= start + 2 {
                let l = chain.len();
                let len = ((chain[l - 1].0 - chain[l - 2].0).powi(2) + (chain[l - 1].1 - chain[l - 2].1).powi(2)).sqrt();
                if cross(&chain[l - 2], &chain[l - 1], p) <= eps * len.max(eps) {
                    chain.pop();
                } else {
                    break;
                }
            }
            chain.push(*p);
        }
        chain.pop();
    }
    let mut vertices: Vec<usize> = chain.iter().map(|c| c.2).collect();
    vertices.sort_unstable();
    vertices.dedup();
    Hull {
        kind: HullKind::Planar,
        vertices,
        faces: vec![],
        jittered: false,
    }
}
