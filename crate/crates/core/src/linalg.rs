//! Small dense linear-algebra helpers: spectral abscissa and its gradient,
//! and row-major JSON (de)serialization of matrices.

use nalgebra::{Complex, DMatrix, DVector};

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "spectral abscissa of a non-square matrix");
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Eigenvalue separation below which the dominant eigenvalue is treated as
/// clustered and the gradient falls back to finite differences.
pub const EIGEN_GAP_TOL: f64 = 1e-8;

/// Spectral abscissa and its gradient `∂α/∂A_ij`.
pub fn spectral_abscissa_gradient(a: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let (alpha, g) = spectral_abscissa_gradient_if(a, |_| true);
    (alpha, g.expect("gradient requested"))
}

/// Spectral abscissa, plus its gradient when `wanted(α)` holds.
pub fn spectral_abscissa_gradient_if(
    a: &DMatrix<f64>,
    wanted: impl FnOnce(f64) -> bool,
) -> (f64, Option<DMatrix<f64>>) {
    let eig = a.clone().complex_eigenvalues();
    let n = eig.len();
    let k = (0..n).max_by(|&i, &j| eig[i].re.total_cmp(&eig[j].re)).unwrap();
    let lambda = eig[k];
    if !wanted(lambda.re) {
        return (lambda.re, None);
    }
    let scale = 1.0 + lambda.norm();
    let gap = (0..n)
        .filter(|&j| j != k)
        .filter(|&j| !(lambda.im != 0.0 && (eig[j] - lambda.conj()).norm() < 1e-12 * scale))
        .map(|j| (eig[j] - lambda).norm())
        .fold(f64::INFINITY, f64::min);
    if gap >= EIGEN_GAP_TOL {
        if let Some(g) = eigen_sensitivity(a, lambda) {
            return (lambda.re, Some(g));
        }
    }
    (lambda.re, Some(finite_difference_gradient(a)))
}

fn inverse_iteration(m: &DMatrix<Complex<f64>>, lambda: Complex<f64>) -> Option<DVector<Complex<f64>>> {
    let n = m.nrows();
    let shift = lambda + Complex::new(1e-10 * (1.0 + lambda.norm()), 0.0);
    let shifted = m - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| Complex::new(1.0 + 0.1 * i as f64, 0.0));
    for _ in 0..3 {
        x = lu.solve(&x)?;
        let norm = x.norm();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        x /= Complex::new(norm, 0.0);
    }
    Some(x)
}

fn eigen_sensitivity(a: &DMatrix<f64>, lambda: Complex<f64>) -> Option<DMatrix<f64>> {
    let ac = a.map(|x| Complex::new(x, 0.0));
    let v = inverse_iteration(&ac, lambda)?;
    let w = inverse_iteration(&ac.transpose(), lambda)?;
    let denom = w.transpose() * &v;
    let denom = denom[(0, 0)];
    if denom.norm() < 1e-10 {
        return None;
    }
    let n = a.nrows();
    Some(DMatrix::from_fn(n, n, |i, j| (w[i] * v[j] / denom).re))
}

fn finite_difference_gradient(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let h = 1e-7 * a.amax().max(1.0);
    let mut probe = a.clone();
    DMatrix::from_fn(n, n, |i, j| {
        let orig = probe[(i, j)];
        probe[(i, j)] = orig + h;
        let up = spectral_abscissa(&probe);
        probe[(i, j)] = orig - h;
        let down = spectral_abscissa(&probe);
        probe[(i, j)] = orig;
        (up - down) / (2.0 * h)
    })
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// `#[serde(with = "crate::linalg::rows")]` for a `DMatrix<f64>` stored as
/// nested row arrays.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn abscissa_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.1]);
        assert!((spectral_abscissa(&a) + 0.05).abs() < 1e-12);
        assert!((spectral_abscissa(&-DMatrix::<f64>::identity(3, 3)) + 1.0).abs() < 1e-12);
        assert_eq!(spectral_abscissa(&DMatrix::zeros(4, 4)), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
            let (alpha, g) = spectral_abscissa_gradient(&a);
            assert!((alpha - spectral_abscissa(&a)).abs() < 1e-12);
            let fd = finite_difference_gradient(&a);
            assert!((&g - &fd).amax() < 1e-5, "{}", (&g - &fd).amax());
        }
    }

    #[test]
    fn clustered_eigenvalues_fall_back() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let (alpha, g) = spectral_abscissa_gradient(&a);
        assert_eq!(alpha, -1.0);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn rows_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(to_rows(&m), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(from_rows(&to_rows(&m)).unwrap(), m);
        assert!(from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
