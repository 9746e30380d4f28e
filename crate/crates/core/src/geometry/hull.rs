use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PointCloud;
use crate::error::{Error, Result};

/// Largest dimension for which exact hull vertices are computed.
pub const HULL_DIM_MAX: usize = 8;

/// Relative size of the coordinate jitter used when a facet degenerates.
const JITTER: f64 = 1e-12;

/// Indices (ascending) of the extreme points of the cloud.
///
/// One index is reported for a group of coincident extreme points: the
/// smallest. Uses min/max in 1-D, a monotone chain in 2-D and quickhull in
/// 3 to [`HULL_DIM_MAX`] dimensions.
pub fn hull_vertices(z: &PointCloud) -> Result<Vec<usize>> {
    let (n, d) = (z.n(), z.dim());
    if d > HULL_DIM_MAX {
        return Err(Error::HullDimensionExceeded {
            dim: d,
            max: HULL_DIM_MAX,
        });
    }
    if n < d + 1 {
        return Err(Error::DegenerateCloud(format!(
            "{n} points cannot span {d} dimensions"
        )));
    }
    match d {
        1 => min_max(z),
        2 => monotone_chain(z),
        _ => {
            let pts = z.row_major();
            match quickhull(&pts, n, d) {
                Ok(v) => Ok(v),
                Err(Qh::LowDimensional) => Err(low_dimensional(d)),
                Err(Qh::DegenerateFacet) => {
                    let jittered = jitter(&pts, d);
                    quickhull(&jittered, n, d).map_err(|e| match e {
                        Qh::LowDimensional => low_dimensional(d),
                        Qh::DegenerateFacet => Error::DegenerateCloud(
                            "hull construction failed after jitter".into(),
                        ),
                    })
                }
            }
        }
    }
}

fn low_dimensional(d: usize) -> Error {
    Error::DegenerateCloud(format!("points do not span {d} dimensions"))
}

fn min_max(z: &PointCloud) -> Result<Vec<usize>> {
    let col = z.points().column(0);
    let (mut lo, mut hi) = (0, 0);
    for (i, &v) in col.iter().enumerate() {
        if v < col[lo] {
            lo = i;
        }
        if v > col[hi] {
            hi = i;
        }
    }
    if col[lo] == col[hi] {
        return Err(low_dimensional(1));
    }
    let mut out = vec![lo, hi];
    out.sort_unstable();
    Ok(out)
}

fn monotone_chain(z: &PointCloud) -> Result<Vec<usize>> {
    let p = z.points();
    let (x, y) = (p.column(0), p.column(1));
    let mut idx: Vec<usize> = (0..z.n()).collect();
    idx.sort_by(|&a, &b| {
        x[a].total_cmp(&x[b])
            .then(y[a].total_cmp(&y[b]))
            .then(a.cmp(&b))
    });
    idx.dedup_by(|later, kept| x[*later] == x[*kept] && y[*later] == y[*kept]);
    if idx.len() < 3 {
        return Err(low_dimensional(2));
    }

    // Left turn with a relative tolerance; near-collinear points are dropped.
    let left_turn = |o: usize, a: usize, b: usize| {
        let (ax, ay) = (x[a] - x[o], y[a] - y[o]);
        let (bx, by) = (x[b] - x[o], y[b] - y[o]);
        let cross = ax * by - ay * bx;
        cross > 1e-12 * ax.hypot(ay) * bx.hypot(by)
    };
    let chain = |order: &mut dyn Iterator<Item = usize>| {
        let mut h: Vec<usize> = Vec::new();
        for q in order {
            while h.len() >= 2 && !left_turn(h[h.len() - 2], h[h.len() - 1], q) {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
        h
    };
    let mut hull = chain(&mut idx.iter().copied());
    hull.extend(chain(&mut idx.iter().rev().copied()));
    if hull.len() < 3 {
        return Err(low_dimensional(2));
    }
    hull.sort_unstable();
    Ok(hull)
}

fn jitter(pts: &[f64], d: usize) -> Vec<f64> {
    let scale = extent(pts, d);
    let mut rng = ChaCha8Rng::seed_from_u64(0x6a17_7e55);
    pts.iter()
        .map(|&v| v + JITTER * scale * rng.random_range(-1.0..=1.0))
        .collect()
}

fn extent(pts: &[f64], d: usize) -> f64 {
    (0..d)
        .map(|k| {
            let (lo, hi) = pts
                .iter()
                .skip(k)
                .step_by(d)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[derive(Debug)]
enum Qh {
    LowDimensional,
    DegenerateFacet,
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Facet {
    fn distance(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) - self.offset
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes the components of `v` along the orthonormal vectors in `basis`
/// (two passes) and returns the residual norm.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
    dot(v, v).sqrt()
}

struct Quickhull<'a> {
    pts: &'a [f64],
    d: usize,
    eps: f64,
    scale: f64,
    interior: Vec<f64>,
}

impl Quickhull<'_> {
    fn point(&self, i: usize) -> &[f64] {
        &self.pts[i * self.d..(i + 1) * self.d]
    }

    fn diff(&self, a: usize, b: usize) -> Vec<f64> {
        self.point(a)
            .iter()
            .zip(self.point(b))
            .map(|(x, y)| x - y)
            .collect()
    }

    /// Hyperplane through `verts` with its normal pointing away from the
    /// interior reference point.
    fn facet(&self, verts: Vec<usize>) -> Result<Facet, Qh> {
        let base = verts[0];
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.d - 1);
        for &v in &verts[1..] {
            let mut e = self.diff(v, base);
            let len = dot(&e, &e).sqrt();
            let r = orthogonalize(&mut e, &basis);
            if !(r > 1e-12 * len) {
                return Err(Qh::DegenerateFacet);
            }
            e.iter_mut().for_each(|x| *x /= r);
            basis.push(e);
        }
        let mut out: Vec<f64> = self
            .point(base)
            .iter()
            .zip(&self.interior)
            .map(|(b, c)| b - c)
            .collect();
        let r = orthogonalize(&mut out, &basis);
        if !(r > 1e-14 * self.scale) {
            return Err(Qh::DegenerateFacet);
        }
        out.iter_mut().for_each(|x| *x /= r);
        let offset = dot(&out, self.point(base));
        Ok(Facet {
            verts,
            normal: out,
            offset,
            outside: Vec::new(),
            alive: true,
        })
    }

    fn initial_simplex(&self, n: usize) -> Result<Vec<usize>, Qh> {
        let d = self.d;
        let first = (0..n)
            .min_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]))
            .unwrap();
        let mut chosen = vec![first];
        let mut basis: Vec<Vec<f64>> = Vec::new();
        while chosen.len() <= d {
            let mut best = (f64::NEG_INFINITY, 0usize, Vec::new());
            for i in 0..n {
                let mut v = self.diff(i, first);
                let r = orthogonalize(&mut v, &basis);
                if r > best.0 {
                    best = (r, i, v);
                }
            }
            let (r, i, mut v) = best;
            if !(r > 1e-10 * self.scale) {
                return Err(Qh::LowDimensional);
            }
            v.iter_mut().for_each(|x| *x /= r);
            basis.push(v);
            chosen.push(i);
        }
        Ok(chosen)
    }

    fn assign(&self, facets: &mut [Facet], ids: &[usize], points: impl Iterator<Item = usize>) {
        for p in points {
            let x = self.point(p);
            let mut best: Option<(usize, f64)> = None;
            for &f in ids {
                let dist = facets[f].distance(x);
                if dist > self.eps && best.is_none_or(|(_, b)| dist > b) {
                    best = Some((f, dist));
                }
            }
            if let Some((f, _)) = best {
                facets[f].outside.push(p);
            }
        }
    }
}

fn quickhull(pts: &[f64], n: usize, d: usize) -> Result<Vec<usize>, Qh> {
    let scale = extent(pts, d);
    if !(scale > 0.0) {
        return Err(Qh::LowDimensional);
    }
    let mut qh = Quickhull {
        pts,
        d,
        eps: 1e-11 * scale,
        scale,
        interior: vec![0.0; d],
    };
    let simplex = qh.initial_simplex(n)?;
    let mut interior = vec![0.0; d];
    for &s in &simplex {
        interior
            .iter_mut()
            .zip(qh.point(s))
            .for_each(|(c, x)| *c += x / (d + 1) as f64);
    }
    qh.interior = interior;

    let mut facets: Vec<Facet> = Vec::new();
    for omit in 0..=d {
        let mut verts: Vec<usize> = simplex
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != omit)
            .map(|(_, &v)| v)
            .collect();
        verts.sort_unstable();
        facets.push(qh.facet(verts)?);
    }
    let mut alive: Vec<usize> = (0..facets.len()).collect();
    let mut in_simplex = vec![false; n];
    simplex.iter().for_each(|&s| in_simplex[s] = true);
    qh.assign(&mut facets, &alive, (0..n).filter(|&i| !in_simplex[i]));

    let mut pending: Vec<usize> = alive.clone();
    while let Some(f) = pending.pop() {
        if !facets[f].alive || facets[f].outside.is_empty() {
            continue;
        }
        let apex = *facets[f]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                let (da, db) = (facets[f].distance(qh.point(a)), facets[f].distance(qh.point(b)));
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        let x = qh.point(apex);
        let visible: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&g| g == f || facets[g].distance(x) > qh.eps)
            .collect();

        let mut ridge_count: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut ridges: Vec<Vec<usize>> = Vec::new();
        for &g in &visible {
            for omit in 0..d {
                let ridge: Vec<usize> = facets[g]
                    .verts
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != omit)
                    .map(|(_, &v)| v)
                    .collect();
                let c = ridge_count.entry(ridge.clone()).or_insert(0);
                if *c == 0 {
                    ridges.push(ridge);
                }
                *c += 1;
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &g in &visible {
            facets[g].alive = false;
            orphans.extend(facets[g].outside.drain(..).filter(|&p| p != apex));
        }

        let mut created: Vec<usize> = Vec::new();
        for ridge in ridges.into_iter().filter(|r| ridge_count[r] == 1) {
            let mut verts = ridge;
            verts.push(apex);
            verts.sort_unstable();
            facets.push(qh.facet(verts)?);
            created.push(facets.len() - 1);
        }
        qh.assign(&mut facets, &created, orphans.into_iter());

        alive.retain(|&g| facets[g].alive);
        alive.extend(&created);
        pending.extend(created.iter().filter(|&&g| !facets[g].outside.is_empty()));
    }

    let mut verts: Vec<usize> = alive
        .iter()
        .flat_map(|&g| facets[g].verts.iter().copied())
        .collect();
    verts.sort_unstable();
    verts.dedup();
    Ok(verts)
}
