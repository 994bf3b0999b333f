//! Delaunay triangulation of reference landmarks (Bowyer-Watson).

use crate::error::{Error, Result};
use crate::shape::Shape;

/// Triangles as counter-clockwise index triples into the source shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriMesh {
    pub triangles: Vec<[usize; 3]>,
}

const MIN_AREA: f64 = 1e-9;

#[inline]
pub(crate) fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Positive when `d` lies strictly inside the circumcircle of counter-clockwise `a, b, c`.
#[inline]
pub(crate) fn in_circle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let (adx, ady) = (a.0 - d.0, a.1 - d.1);
    let (bdx, bdy) = (b.0 - d.0, b.1 - d.1);
    let (cdx, cdy) = (c.0 - d.0, c.1 - d.1);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

impl TriMesh {
    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks index range and minimum area against `shape`.
    pub fn validate(&self, shape: &Shape) -> Result<()> {
        let n = shape.n_points();
        for t in &self.triangles {
            if t.iter().any(|&i| i >= n) {
                return Err(Error::invalid(format!("triangle {t:?} indexes past {n} points")));
            }
            let area = 0.5 * orient(shape.point(t[0]), shape.point(t[1]), shape.point(t[2]));
            if area.abs() <= MIN_AREA {
                return Err(Error::Degenerate(format!("triangle {t:?} has zero area")));
            }
        }
        Ok(())
    }
}

/// Delaunay triangulation of the points of `reference`.
///
/// Coincident points (within `1e-9`) are triangulated once; the later duplicates are not
/// mesh vertices. Fails when every point is collinear.
pub fn delaunay(reference: &Shape) -> Result<TriMesh> {
    let pts: Vec<(f64, f64)> = reference.points().collect();
    if pts.len() < 3 {
        return Err(Error::invalid(format!("triangulation needs 3 points, got {}", pts.len())));
    }
    let (x0, y0, x1, y1) = reference.bounds();
    let span = (x1 - x0).max(y1 - y0);
    if span <= 0.0 {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let far = pts
        .iter()
        .any(|&p| pts.iter().any(|&q| orient(pts[0], q, p).abs() > 1e-9 * span * span));
    if !far {
        return Err(Error::Degenerate("points are collinear".into()));
    }

    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let big = 100.0 * span;
    let n = pts.len();
    let mut verts = pts.clone();
    verts.push((cx - 2.0 * big, cy - big));
    verts.push((cx + 2.0 * big, cy - big));
    verts.push((cx, cy + 2.0 * big));
    let mut tris: Vec<[usize; 3]> = vec![ccw(&verts, [n, n + 1, n + 2])];

    'insert: for i in 0..n {
        let p = verts[i];
        for j in 0..i {
            let q = verts[j];
            if (p.0 - q.0).abs() < 1e-9 && (p.1 - q.1).abs() < 1e-9 {
                continue 'insert;
            }
        }
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris
            .iter()
            .partition(|t| in_circle(verts[t[0]], verts[t[1]], verts[t[2]], p) > 0.0);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for t in &bad {
            for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let shared = bad.iter().any(|o| {
                    o != t && o.contains(&e.0) && o.contains(&e.1)
                });
                if !shared {
                    edges.push(e);
                }
            }
        }
        tris = keep;
        for (a, b) in edges {
            let t = ccw(&verts, [a, b, i]);
            if orient(verts[t[0]], verts[t[1]], verts[t[2]]).abs() > 0.0 {
                tris.push(t);
            }
        }
    }

    let mut tris: Vec<[usize; 3]> = tris
        .into_iter()
        .filter(|t| t.iter().all(|&v| v < n))
        .collect();
    fill_hull(&pts, &mut tris);
    legalize(&pts, &mut tris);

    let mut triangles: Vec<[usize; 3]> = tris
        .into_iter()
        .filter(|t| 0.5 * orient(pts[t[0]], pts[t[1]], pts[t[2]]) > MIN_AREA)
        .map(|mut t| {
            // rotate so the smallest index leads; keeps orientation
            let m = (0..3).min_by_key(|&k| t[k]).unwrap_or(0);
            t.rotate_left(m);
            t
        })
        .collect();
    triangles.sort_unstable();
    Ok(TriMesh { triangles })
}

/// Directed boundary edges of a set of counter-clockwise triangles.
fn boundary_edges(tris: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut directed = std::collections::BTreeSet::new();
    for t in tris {
        for e in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            directed.insert(e);
        }
    }
    directed
        .iter()
        .filter(|&&(a, b)| !directed.contains(&(b, a)))
        .copied()
        .collect()
}

/// Closes concave notches left on the outer boundary by the bounding triangle.
fn fill_hull(pts: &[(f64, f64)], tris: &mut Vec<[usize; 3]>) {
    loop {
        let edges = boundary_edges(tris);
        let next: std::collections::BTreeMap<usize, usize> = edges.iter().copied().collect();
        let mut added = false;
        for &(u, v) in &edges {
            let Some(&w) = next.get(&v) else { continue };
            if w == u || orient(pts[u], pts[v], pts[w]) >= 0.0 {
                continue;
            }
            let t = [u, w, v];
            let blocked = (0..pts.len()).any(|i| {
                !t.contains(&i)
                    && orient(pts[u], pts[w], pts[i]) > 0.0
                    && orient(pts[w], pts[v], pts[i]) > 0.0
                    && orient(pts[v], pts[u], pts[i]) > 0.0
            });
            if !blocked {
                tris.push(t);
                added = true;
                break;
            }
        }
        if !added {
            return;
        }
    }
}

/// Lawson edge flips until every interior edge is locally Delaunay.
fn legalize(pts: &[(f64, f64)], tris: &mut [[usize; 3]]) {
    for _ in 0..10_000 {
        let mut owner = std::collections::BTreeMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                owner.insert((t[k], t[(k + 1) % 3]), (ti, t[(k + 2) % 3]));
            }
        }
        let mut flipped = false;
        for (&(a, b), &(ti, c)) in &owner {
            let Some(&(tj, d)) = owner.get(&(b, a)) else { continue };
            if in_circle(pts[a], pts[b], pts[c], pts[d]) > 1e-9 {
                // the quad a-d-b-c must be convex for the flip to be valid
                if orient(pts[c], pts[a], pts[d]) > 0.0 && orient(pts[d], pts[b], pts[c]) > 0.0 {
                    tris[ti] = [a, d, c];
                    tris[tj] = [d, b, c];
                    flipped = true;
                    break;
                }
            }
        }
        if !flipped {
            return;
        }
    }
}

fn ccw(verts: &[(f64, f64)], t: [usize; 3]) -> [usize; 3] {
    if orient(verts[t[0]], verts[t[1]], verts[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hull_area(pts: &[(f64, f64)]) -> f64 {
        // monotone chain
        let mut p = pts.to_vec();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut lower: Vec<(f64, f64)> = Vec::new();
        for &q in &p {
            while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
                lower.pop();
            }
            lower.push(q);
        }
        let mut upper: Vec<(f64, f64)> = Vec::new();
        for &q in p.iter().rev() {
            while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
                upper.pop();
            }
            upper.push(q);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        let mut a = 0.0;
        for i in 0..lower.len() {
            let (x0, y0) = lower[i];
            let (x1, y1) = lower[(i + 1) % lower.len()];
            a += x0 * y1 - x1 * y0;
        }
        a.abs() / 2.0
    }

    fn check_delaunay(shape: &Shape, mesh: &TriMesh) {
        mesh.validate(shape).unwrap();
        let pts: Vec<_> = shape.points().collect();
        for t in &mesh.triangles {
            for (i, &p) in pts.iter().enumerate() {
                if t.contains(&i) {
                    continue;
                }
                let s = in_circle(pts[t[0]], pts[t[1]], pts[t[2]], p);
                assert!(s <= 1e-9, "point {i} inside circumcircle of {t:?}");
            }
        }
        let area: f64 = mesh
            .triangles
            .iter()
            .map(|t| 0.5 * orient(pts[t[0]], pts[t[1]], pts[t[2]]))
            .sum();
        assert!((area - hull_area(&pts)).abs() < 1e-6 * area.max(1.0));
    }

    #[test]
    fn single_triangle() {
        let s = Shape::new(vec![0.0, 0.0, 4.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(delaunay(&s).unwrap().len(), 1);
    }

    #[test]
    fn unit_square() {
        let s = Shape::new(vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let m = delaunay(&s).unwrap();
        assert_eq!(m.len(), 2);
        check_delaunay(&s, &m);
    }

    #[test]
    fn random_point_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let s = Shape::new((0..40).map(|_| rng.random_range(0.0..100.0)).collect()).unwrap();
            let m = delaunay(&s).unwrap();
            check_delaunay(&s, &m);
            assert_eq!(delaunay(&s).unwrap(), m);
        }
    }

    #[test]
    fn collinear_rejected() {
        let s = Shape::new(vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        assert!(matches!(delaunay(&s), Err(Error::Degenerate(_))));
    }
}
