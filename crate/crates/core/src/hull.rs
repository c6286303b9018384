//! Convex-hull queries on small point sets: distance to a hull (Wolfe's
//! minimum-norm-point algorithm), convex-position pruning and Hausdorff
//! distance between polytopes given by vertices.

use nalgebra::{DMatrix, DVector};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Minimum-norm convex combination of `points`, returned as barycentric
/// weights (one per point).
pub fn min_norm_weights(points: &[Vec<f64>]) -> Vec<f64> {
    let m = points.len();
    assert!(m > 0, "min-norm point of an empty set");
    let mut weights = vec![0.0; m];
    let scale = points.iter().map(|p| dot(p, p)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let start = (0..m)
        .min_by(|&a, &b| dot(&points[a], &points[a]).total_cmp(&dot(&points[b], &points[b])))
        .unwrap();
    let mut active = vec![start];
    let mut lam = vec![1.0];
    let dim = points[0].len();

    let combine = |active: &[usize], lam: &[f64]| {
        let mut x = vec![0.0; dim];
        for (&i, &l) in active.iter().zip(lam) {
            for (xk, pk) in x.iter_mut().zip(&points[i]) {
                *xk += l * pk;
            }
        }
        x
    };

    for _ in 0..(50 * m + 100) {
        let x = combine(&active, &lam);
        let xx = dot(&x, &x);
        if xx <= 1e-28 * scale {
            break;
        }
        let (j, best) = (0..m)
            .map(|i| (i, dot(&x, &points[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if xx - best <= 1e-13 * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        lam.push(0.0);
        loop {
            let mu = affine_min_norm(points, &active);
            if mu.iter().all(|&v| v > 1e-14) {
                lam = mu;
                break;
            }
            let mut theta = 1.0f64;
            for (l, u) in lam.iter().zip(&mu) {
                if *u <= 1e-14 && l - u > 0.0 {
                    theta = theta.min(l / (l - u));
                }
            }
            for (l, u) in lam.iter_mut().zip(&mu) {
                *l = (1.0 - theta) * *l + theta * u;
            }
            let mut keep_active = Vec::with_capacity(active.len());
            let mut keep_lam = Vec::with_capacity(lam.len());
            for (&i, &l) in active.iter().zip(&lam) {
                if l > 1e-14 {
                    keep_active.push(i);
                    keep_lam.push(l);
                }
            }
            if keep_active.is_empty() {
                // numerical breakdown; fall back to the newest point
                keep_active.push(*active.last().unwrap());
                keep_lam.push(1.0);
            }
            let total: f64 = keep_lam.iter().sum();
            keep_lam.iter_mut().for_each(|l| *l /= total);
            let shrank = keep_active.len() < active.len();
            active = keep_active;
            lam = keep_lam;
            if !shrank || active.len() == 1 {
                break;
            }
        }
    }
    for (&i, &l) in active.iter().zip(&lam) {
        weights[i] += l;
    }
    weights
}

/// Weights of the minimum-norm point of the affine hull of the active points.
fn affine_min_norm(points: &[Vec<f64>], active: &[usize]) -> Vec<f64> {
    let k = active.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            a[(r, c)] = dot(&points[i], &points[j]);
        }
        a[(r, k)] = 1.0;
        a[(k, r)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| a.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(k + 1)));
    let mut mu: Vec<f64> = sol.iter().take(k).copied().collect();
    let total: f64 = mu.iter().sum();
    if total.abs() > 1e-300 {
        mu.iter_mut().for_each(|v| *v /= total);
    }
    mu
}

/// Closest point of `conv(vertices)` to `q`.
pub fn project_to_hull(q: &[f64], vertices: &[Vec<f64>]) -> Vec<f64> {
    let shifted: Vec<Vec<f64>> = vertices.iter().map(|v| sub(v, q)).collect();
    let w = min_norm_weights(&shifted);
    let mut p = vec![0.0; q.len()];
    for (v, wi) in vertices.iter().zip(&w) {
        for (pk, vk) in p.iter_mut().zip(v) {
            *pk += wi * vk;
        }
    }
    p
}

/// Euclidean distance from `q` to `conv(vertices)`.
pub fn dist_to_hull(q: &[f64], vertices: &[Vec<f64>]) -> f64 {
    norm(&sub(q, &project_to_hull(q, vertices)))
}

/// Removes points lying within `tol` of the hull of the remaining ones.
pub fn convex_position(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut kept = points;
    let mut i = 0;
    while i < kept.len() {
        if kept.len() == 1 {
            break;
        }
        let others: Vec<Vec<f64>> = kept
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        if dist_to_hull(&kept[i], &others) <= tol {
            kept.remove(i);
        } else {
            i += 1;
        }
    }
    kept
}

/// Hausdorff distance between two polytopes given by vertex lists.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let one_way = |from: &[Vec<f64>], to: &[Vec<f64>]| from.iter().map(|p| dist_to_hull(p, to)).fold(0.0, f64::max);
    one_way(a, b).max(one_way(b, a))
}

/// Vertex average.
pub fn centroid(vertices: &[Vec<f64>]) -> Vec<f64> {
    let n = vertices[0].len();
    let mut c = vec![0.0; n];
    for v in vertices {
        for (ck, vk) in c.iter_mut().zip(v) {
            *ck += vk;
        }
    }
    c.iter_mut().for_each(|ck| *ck /= vertices.len() as f64);
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_to_segment_and_square() {
        let seg = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        assert!((dist_to_hull(&[1.0, 1.0], &seg) - 1.0).abs() < 1e-12);
        assert!((dist_to_hull(&[3.0, 0.0], &seg) - 1.0).abs() < 1e-12);
        assert!(dist_to_hull(&[0.5, 0.0], &seg) < 1e-12);
        let square = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]];
        assert!(dist_to_hull(&[0.3, 0.7], &square) < 1e-12);
        assert!((dist_to_hull(&[2.0, 2.0], &square) - 2f64.sqrt()).abs() < 1e-12);
        assert!((dist_to_hull(&[0.5, -0.25], &square) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn prunes_interior_points_and_duplicates() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![0.5, 0.5],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.25, 0.25],
        ];
        let kept = convex_position(pts, 1e-9);
        assert_eq!(kept.len(), 3);
        let segment = convex_position(vec![vec![2.0], vec![4.0], vec![6.0], vec![3.0]], 1e-9);
        let mut ends: Vec<f64> = segment.iter().map(|p| p[0]).collect();
        ends.sort_by(f64::total_cmp);
        assert_eq!(ends, vec![2.0, 6.0]);
    }

    #[test]
    fn hausdorff_of_intervals() {
        let a = vec![vec![2.0], vec![6.0]];
        let b = vec![vec![-6.0], vec![-2.0]];
        assert!((hausdorff(&a, &b) - 8.0).abs() < 1e-12);
        let neg_b: Vec<Vec<f64>> = b.iter().map(|v| vec![-v[0]]).collect();
        assert!(hausdorff(&a, &neg_b) < 1e-12);
    }

    fn brute_force_dist(q: &[f64], v: &[Vec<f64>]) -> f64 {
        // dense barycentric grid over a triangle
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=(steps - i) {
                let (a, b) = (i as f64 / steps as f64, j as f64 / steps as f64);
                let c = 1.0 - a - b;
                let p: Vec<f64> = (0..q.len()).map(|k| a * v[0][k] + b * v[1][k] + c * v[2][k]).collect();
                best = best.min(norm(&sub(q, &p)));
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_dense_barycentric_search(
            tri in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 3),
            q in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let exact = dist_to_hull(&q, &tri);
            let coarse = brute_force_dist(&q, &tri);
            // grid resolution bounds the brute-force overestimate
            prop_assert!(exact <= coarse + 1e-9);
            prop_assert!(coarse - exact <= 0.05);
        }
    }
}
