//! Small dense helpers on row-major `f64` slices.

use nalgebra::DMatrix;
use rand::Rng;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `k` orthonormal vectors in `R^d`, returned as the rows of a `k × d` array,
/// from the QR factorization of a Gaussian matrix.
pub fn random_orthonormal_rows<R: Rng + ?Sized>(rng: &mut R, d: usize, k: usize) -> Vec<f64> {
    assert!(k <= d, "cannot fit {k} orthonormal vectors in dimension {d}");
    if k == 0 {
        return Vec::new();
    }
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let q = g.qr().q();
    let mut out = Vec::with_capacity(k * d);
    for j in 0..k {
        out.extend(q.column(j).iter());
    }
    out
}

/// Orthonormal basis (rows, `r × d`) of the row space of an `m × d` matrix.
/// Directions with singular value below `rel_tol · σ_max` are dropped.
pub fn row_space_basis(rows: &[f64], m: usize, d: usize, rel_tol: f64) -> Vec<f64> {
    if m == 0 || d == 0 {
        return Vec::new();
    }
    let a = DMatrix::from_row_slice(m, d, rows);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > rel_tol * s_max {
            out.extend(v_t.row(j).iter());
        }
    }
    out
}

/// Coordinates of each row of `points` (`m × d`) in `basis` (`r × d`).
pub fn project_rows(points: &[f64], d: usize, basis: &[f64]) -> Vec<f64> {
    let r = basis.len() / d.max(1);
    let mut out = Vec::with_capacity(points.len() / d.max(1) * r);
    for p in points.chunks_exact(d) {
        for b in basis.chunks_exact(d) {
            out.push(dot(p, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthonormal_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u = random_orthonormal_rows(&mut rng, 7, 3);
        for i in 0..3 {
            for j in 0..3 {
                let g = dot(&u[i * 7..(i + 1) * 7], &u[j * 7..(j + 1) * 7]);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_space_of_planar_points() {
        // points in the plane spanned by e0 + e2 and e1
        let pts = [1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 3.0, -1.0, 3.0, 0.5, 0.5, 0.5];
        let b = row_space_basis(&pts, 4, 3, 1e-10);
        assert_eq!(b.len(), 6);
        let c = project_rows(&pts, 3, &b);
        for (p, cc) in pts.chunks(3).zip(c.chunks(2)) {
            assert!((norm_sq(p) - norm_sq(cc)).abs() < 1e-12);
        }
    }
}
