//! Dense complex linear algebra helpers.
//!
//! Every field stores `DMatrix<Complex64>`; real bundles keep zero imaginary
//! parts and are re-realified after each factorization.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::ToleranceConfig;

pub type CMat = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Ground field of a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scalar {
    Real,
    Complex,
}

impl Scalar {
    pub fn as_str(self) -> &'static str {
        match self {
            Scalar::Real => "real",
            Scalar::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "real" => Some(Scalar::Real),
            "complex" => Some(Scalar::Complex),
            _ => None,
        }
    }

    /// Drops imaginary parts for real scalars.
    pub fn fix(self, m: CMat) -> CMat {
        match self {
            Scalar::Real => realify(m),
            Scalar::Complex => m,
        }
    }
}

pub fn realify(mut m: CMat) -> CMat {
    m.iter_mut().for_each(|z| z.im = 0.0);
    m
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn from_real(r: usize, c: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(r, c, data.iter().map(|&x| Complex64::new(x, 0.0)))
}

/// Singular values in descending order (empty for empty matrices).
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let svd = a.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Spectral norm.
pub fn op_norm(a: &CMat) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Spectral norm of a Hermitian matrix via its eigenvalues.
pub fn hermitian_norm(h: &CMat) -> f64 {
    if h.nrows() == 0 {
        return 0.0;
    }
    let sym = hermitian_part(h);
    sym.symmetric_eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn hermitian_part(h: &CMat) -> CMat {
    (h + h.adjoint()).scale(0.5)
}

pub fn numerical_rank(a: &CMat, cfg: &ToleranceConfig) -> usize {
    let s = singular_values(a);
    rank_from_singular_values(&s, a.nrows().max(a.ncols()), cfg)
}

pub fn rank_from_singular_values(s: &[f64], max_dim: usize, cfg: &ToleranceConfig) -> usize {
    let smax = s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    let cut = cfg.rank_cutoff(max_dim, smax);
    s.iter().filter(|&&v| v > cut).count()
}

/// Thin SVD with singular values sorted descending: `(U, s, V)` with `A = U diag(s) V^*`.
pub fn thin_svd(a: &CMat) -> (CMat, Vec<f64>, CMat) {
    let (p, q) = a.shape();
    if p == 0 || q == 0 {
        let k = p.min(q);
        return (zeros(p, k), Vec::new(), zeros(q, k));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    // nalgebra sorts except for its closed-form small cases; enforce it.
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    let u = CMat::from_fn(p, order.len(), |r, c| u[(r, order[c])]);
    let v = CMat::from_fn(q, order.len(), |r, c| vt[(order[c], r)].conj());
    let s = order.iter().map(|&i| s[i]).collect();
    (u, s, v)
}

/// Full right singular basis: `(s, V)` with `V` square of size `ncols`,
/// columns ordered by decreasing singular value (missing values are zero).
pub fn right_singular_basis(a: &CMat) -> (Vec<f64>, CMat) {
    let (p, q) = a.shape();
    if q == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    if p == 0 {
        return (vec![0.0; q], identity(q));
    }
    let padded = if p < q {
        let mut m = zeros(q, q);
        m.view_mut((0, 0), (p, q)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let (_, mut s, v) = thin_svd(&padded);
    s.resize(q, 0.0);
    (s, v)
}

/// Full left singular basis: `(s, U)` with `U` square of size `nrows`.
pub fn left_singular_basis(a: &CMat) -> (Vec<f64>, CMat) {
    right_singular_basis(&a.adjoint())
}

/// Orthonormal basis of the numerical null space of `a`.
pub fn null_space(a: &CMat, cfg: &ToleranceConfig) -> CMat {
    let q = a.ncols();
    let (s, v) = right_singular_basis(a);
    let r = rank_from_singular_values(&s, a.nrows().max(q), cfg);
    v.columns(r, q - r).into_owned()
}

/// Orthonormal basis of the numerical column space of `a`.
pub fn range_basis(a: &CMat, cfg: &ToleranceConfig) -> CMat {
    let (u, s, _) = thin_svd(a);
    let r = rank_from_singular_values(&s, a.nrows().max(a.ncols()), cfg);
    u.columns(0, r).into_owned()
}

/// Orthonormal basis of the range of a (near) Hermitian projector.
pub fn projector_basis(p: &CMat) -> CMat {
    let n = p.nrows();
    if n == 0 {
        return zeros(0, 0);
    }
    let eig = hermitian_part(p).symmetric_eigen();
    let mut cols: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(i, &l)| (l, i))
        .collect();
    cols.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    CMat::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c].1)])
}

/// Orthogonal projector `B B^*` for an orthonormal basis `B`.
pub fn projector_from_orthonormal(b: &CMat) -> CMat {
    b * b.adjoint()
}

/// Rebuilds a clean Hermitian idempotent from a nearly idempotent matrix.
pub fn clean_projector(p: &CMat, scalar: Scalar) -> CMat {
    scalar.fix(projector_from_orthonormal(&projector_basis(p)))
}

/// Rank of a Hermitian projector by rounding its trace.
pub fn projector_rank(p: &CMat) -> usize {
    let t = p.trace().re;
    if t <= 0.5 {
        0
    } else {
        t.round() as usize
    }
}

/// Smallest singular value of a tall matrix (its `ncols`-th); `+inf` when it has no columns.
pub fn min_singular_value(a: &CMat) -> f64 {
    if a.ncols() == 0 {
        return f64::INFINITY;
    }
    if a.nrows() < a.ncols() {
        return 0.0;
    }
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// Gram-Schmidt via thin QR; returns `None` when the columns are numerically dependent.
pub fn orthonormalize(a: &CMat, floor: f64) -> Option<CMat> {
    if a.ncols() == 0 {
        return Some(zeros(a.nrows(), 0));
    }
    let (u, s, v) = thin_svd(a);
    if s.len() < a.ncols() || s.last().copied().unwrap_or(0.0) <= floor * s[0] {
        return None;
    }
    // Polar factor U V^* keeps the result continuous in `a`.
    Some(u * v.adjoint())
}

/// Gaussian random matrix; complex entries have unit expected modulus squared.
pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scalar: Scalar) -> CMat {
    CMat::from_fn(rows, cols, |_, _| match scalar {
        Scalar::Real => Complex64::new(rng.sample(StandardNormal), 0.0),
        Scalar::Complex => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
    })
}

/// Block-diagonal embedding `diag(a, b)`.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

/// Frobenius-norm distance, used for equality assertions.
pub fn dist(a: &CMat, b: &CMat) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    (a - b).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn null_space_of_wide_matrix() {
        let cfg = ToleranceConfig::default();
        let a = from_real(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&a, &cfg);
        assert_eq!(n.shape(), (3, 2));
        assert!((&a * &n).norm() < 1e-12);
        assert!((n.adjoint() * &n - identity(2)).norm() < 1e-12);
    }

    #[test]
    fn rank_rule_ignores_roundoff() {
        let cfg = ToleranceConfig::default();
        let a = from_real(2, 2, &[1.0, 2.0, 2.0, 4.0 + 1e-17]);
        assert_eq!(numerical_rank(&a, &cfg), 1);
        let b = from_real(2, 2, &[1.0, 0.0, 0.0, 1e-6]);
        assert_eq!(numerical_rank(&b, &cfg), 2);
        assert_eq!(numerical_rank(&zeros(3, 2), &cfg), 0);
    }

    #[test]
    fn projector_basis_recovers_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = orthonormalize(&random_matrix(&mut rng, 5, 2, Scalar::Complex), 1e-9).unwrap();
        let p = projector_from_orthonormal(&b);
        let q = projector_basis(&p);
        assert_eq!(q.ncols(), 2);
        assert!(dist(&projector_from_orthonormal(&q), &p) < 1e-12);
        assert_eq!(projector_rank(&p), 2);
    }

    #[test]
    fn empty_shapes_are_harmless() {
        let cfg = ToleranceConfig::default();
        assert!(singular_values(&zeros(0, 3)).is_empty());
        assert_eq!(null_space(&zeros(0, 3), &cfg).ncols(), 3);
        assert_eq!(range_basis(&zeros(3, 0), &cfg).ncols(), 0);
        assert_eq!(op_norm(&zeros(2, 0)), 0.0);
    }
}
