//! The boundary value problem family `u ↦ u'` on `[0,1]` with boundary
//! condition `(u(0), u(1)) ∈ V_x`, discretized on `s` uniform samples.
//!
//! The domain fibre is `{u ∈ K^{n s} : (u_0, u_{s-1}) ∈ V_x}` and the target is
//! `K^{n(s-1)}`; the operator is the forward difference `s (u_{j+1} - u_j)`.
//! Its index class is `[V] - [Θ^n]`.

use crate::bundle::ProjectionField;
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::index::{index_class_detailed, TransversalData, VirtualBundle};
use crate::invariants::{is_stably_trivial, InvariantRecord};
use crate::linalg::{self, CMat, Scalar};
use crate::morphism::{make_morphism, restrict_morphism, MorphismField};
use crate::parametrix::{parametrix_from_computation, ParametrixStatus};

#[derive(Debug, Clone)]
pub struct BvpSpec {
    /// Rank-`n` field inside `K^{2n}`.
    pub boundary: ProjectionField,
    pub n: usize,
    /// Number of samples `s` of `[0,1]`.
    pub grid: usize,
}

impl BvpSpec {
    pub fn new(boundary: ProjectionField, n: usize, grid: usize) -> Result<Self> {
        let spec = Self { boundary, n, grid };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.boundary.ambient_dim != 2 * self.n {
            return Err(Error::InvalidSpec(format!(
                "boundary bundle lives in K^{}, expected K^{}",
                self.boundary.ambient_dim,
                2 * self.n
            )));
        }
        if self.boundary.ranks().iter().any(|&r| r != self.n) {
            return Err(Error::InvalidSpec(format!(
                "boundary bundle must have rank {} everywhere",
                self.n
            )));
        }
        if self.grid < 4 {
            return Err(Error::InvalidSpec(format!("grid must be >= 4, got {}", self.grid)));
        }
        Ok(())
    }

    pub fn scalar(&self) -> Scalar {
        self.boundary.scalar
    }

    /// Same boundary data on a different grid.
    pub fn with_grid(&self, grid: usize) -> Result<Self> {
        Self::new(self.boundary.clone(), self.n, grid)
    }
}

/// Forward difference `K^{n s} -> K^{n (s-1)}` scaled by `s`.
pub fn difference_matrix(n: usize, s: usize) -> CMat {
    let mut d = linalg::zeros(n * (s - 1), n * s);
    let h = linalg::ONE * s as f64;
    for j in 0..s - 1 {
        for i in 0..n {
            d[(j * n + i, (j + 1) * n + i)] = h;
            d[(j * n + i, j * n + i)] = -h;
        }
    }
    d
}

/// Endpoint evaluation `u ↦ (u_0, u_{s-1})`.
pub fn boundary_evaluation(n: usize, s: usize) -> CMat {
    let mut b = linalg::zeros(2 * n, n * s);
    for i in 0..n {
        b[(i, i)] = linalg::ONE;
        b[(n + i, (s - 1) * n + i)] = linalg::ONE;
    }
    b
}

/// Domain field `𝔇_x = ker((I - P_{V,x}) (u_0, u_{s-1}))`.
pub fn domain_bundle(spec: &BvpSpec, cfg: &ToleranceConfig) -> Result<ProjectionField> {
    spec.check()?;
    let (n, s) = (spec.n, spec.grid);
    let b0 = boundary_evaluation(n, s);
    let scalar = spec.scalar();
    let proj = spec
        .boundary
        .proj
        .iter()
        .map(|p| {
            let b = (linalg::identity(2 * n) - p) * &b0;
            let k = linalg::null_space(&b, cfg);
            scalar.fix(linalg::projector_from_orthonormal(&k))
        })
        .collect();
    ProjectionField::new(spec.boundary.base.clone(), n * s, scalar, proj)?.validated(cfg)
}

pub fn bvp_family(spec: &BvpSpec, cfg: &ToleranceConfig) -> Result<MorphismField> {
    let (n, s) = (spec.n, spec.grid);
    let base = spec.boundary.base.clone();
    let scalar = spec.scalar();
    let domain = domain_bundle(spec, cfg)?;
    let full = ProjectionField::trivial(base.clone(), n * s, scalar);
    let target = ProjectionField::trivial(base, n * (s - 1), scalar);
    let d = difference_matrix(n, s);
    let whole = make_morphism(&full, &target, vec![d; full.len()], cfg)?;
    let l = restrict_morphism(&whole, &domain, &target, cfg)?;
    if l.index() != Some(0) {
        return Err(Error::Internal(format!(
            "discrete boundary family has index {:?}",
            l.index()
        )));
    }
    Ok(l)
}

/// `[V] - [Θ^n]`.
pub fn bvp_expected_class(spec: &BvpSpec, cfg: &ToleranceConfig) -> Result<VirtualBundle> {
    spec.check()?;
    let minus = ProjectionField::trivial(spec.boundary.base.clone(), spec.n, spec.scalar());
    VirtualBundle::new(spec.boundary.clone(), minus, cfg)
}

/// The constants `Y_1 ⊂ K^{n(s-1)}` as a transversal of the family.
pub fn constants_transversal(spec: &BvpSpec, l: &MorphismField, cfg: &ToleranceConfig) -> Result<TransversalData> {
    let (n, s) = (spec.n, spec.grid);
    let mut w = linalg::zeros(n * (s - 1), n);
    let c = linalg::ONE / ((s - 1) as f64).sqrt();
    for j in 0..s - 1 {
        for i in 0..n {
            w[(j * n + i, i)] = c;
        }
    }
    TransversalData::from_frame(l, w, cfg)
}

/// Linear interpolants `u_j = (1 - t_j) a + t_j b`, `t_j = j/(s-1)`, for a
/// basis `(a, b)` of `V_x`; one column per basis vector.
pub fn interpolant_basis(spec: &BvpSpec, x: usize) -> CMat {
    let (n, s) = (spec.n, spec.grid);
    let v = spec.boundary.basis_at(x);
    let mut out = linalg::zeros(n * s, v.ncols());
    for c in 0..v.ncols() {
        for j in 0..s {
            let t = j as f64 / (s - 1) as f64;
            for i in 0..n {
                out[(j * n + i, c)] = v[(i, c)] * (1.0 - t) + v[(n + i, c)] * t;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BvpReport {
    pub computed: InvariantRecord,
    pub expected: InvariantRecord,
    pub dim_v: usize,
    pub stably_trivial: bool,
    pub status: ParametrixStatus,
    pub min_sv: Option<f64>,
    pub certificate: Vec<String>,
}

/// Computes the index class of the family, compares it with `[V] - [Θ^n]`
/// and tries to build a parametrix.
pub fn bvp_check(spec: &BvpSpec, cfg: &ToleranceConfig) -> Result<BvpReport> {
    let l = bvp_family(spec, cfg)?;
    let expected = bvp_expected_class(spec, cfg)?;
    let comp = index_class_detailed(&l, cfg)?;
    let computed = comp.class.reduced.clone();
    if computed != expected.reduced {
        return Err(Error::Discretization(format!(
            "computed {:?} but expected {:?}; refine the grid or the mesh",
            computed, expected.reduced
        )));
    }
    let decision = is_stably_trivial(&expected)?;
    let p = parametrix_from_computation(&l, comp, cfg)?;
    if (p.status == ParametrixStatus::Built) != decision.trivial {
        return Err(Error::Internal(format!(
            "parametrix status {} disagrees with stable triviality {}",
            p.status.as_str(),
            decision.trivial
        )));
    }
    Ok(BvpReport {
        computed,
        expected: expected.reduced,
        dim_v: p.dim_v,
        stably_trivial: decision.trivial,
        status: p.status,
        min_sv: p.min_sv,
        certificate: decision.certificate,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::families::{constant_line, moebius};
    use crate::index::kernel_bundle;
    use crate::mesh::circle_mesh;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn line_spec(v: &[f64], m: usize, s: usize) -> BvpSpec {
        let base = Arc::new(circle_mesh(m).unwrap());
        BvpSpec::new(constant_line(base, v, Scalar::Real), 1, s).unwrap()
    }

    #[test]
    fn dirichlet_at_one_end_is_invertible() {
        let spec = line_spec(&[1.0, 0.0], 8, 12);
        let l = bvp_family(&spec, &cfg()).unwrap();
        for x in 0..8 {
            let r = l.restricted_matrix(x);
            assert_eq!(r.shape(), (11, 11));
            assert!(linalg::min_singular_value(&r) > 1e-3);
        }
    }

    #[test]
    fn periodic_has_constant_kernel_and_mean_zero_range() {
        let spec = line_spec(&[1.0, 1.0], 8, 12);
        let l = bvp_family(&spec, &cfg()).unwrap();
        let m = &l.mats[0];
        let k = linalg::null_space(&l.restricted_matrix(0), &cfg());
        assert_eq!(k.ncols(), 1);
        let u = l.domain.basis_at(0) * k;
        assert!((0..12).all(|j| (u[j] - u[0]).norm() < 1e-9));
        // Range: orthogonal to constants.
        let ones = CMat::from_element(11, 1, linalg::ONE);
        assert!((ones.adjoint() * m * &l.domain.proj[0]).norm() < 1e-9);
    }

    #[test]
    fn moebius_family_has_index_zero() {
        let base = Arc::new(circle_mesh(64).unwrap());
        let spec = BvpSpec::new(moebius(base), 1, 32).unwrap();
        let l = bvp_family(&spec, &cfg()).unwrap();
        assert_eq!(l.index(), Some(0));
        assert_eq!(l.domain.rank(), Some(31));
    }

    #[test]
    fn expected_classes() {
        let spec = line_spec(&[1.0, 0.0], 16, 8);
        assert!(bvp_expected_class(&spec, &cfg()).unwrap().reduced.is_zero());
        let base = Arc::new(circle_mesh(64).unwrap());
        let spec = BvpSpec::new(moebius(base), 1, 8).unwrap();
        assert_eq!(
            bvp_expected_class(&spec, &cfg()).unwrap().reduced,
            InvariantRecord {
                rank: 0,
                w1: vec![1],
                c1: vec![]
            }
        );
    }

    #[test]
    fn constants_are_transversal_and_kernel_is_interpolants() {
        let base = Arc::new(circle_mesh(64).unwrap());
        let spec = BvpSpec::new(moebius(base), 1, 16).unwrap();
        let l = bvp_family(&spec, &cfg()).unwrap();
        let y1 = constants_transversal(&spec, &l, &cfg()).unwrap();
        assert!(y1.margin >= cfg().trans_margin);
        let e = kernel_bundle(&l, &y1.field, &cfg()).unwrap();
        for x in 0..64 {
            assert_eq!(e.rank_at(x), 1);
            let w = interpolant_basis(&spec, x);
            let pw = linalg::projector_from_orthonormal(&linalg::orthonormalize(&w, 1e-9).unwrap());
            assert!(linalg::op_norm(&(pw - &e.proj[x])) < 1e-8);
        }
    }

    #[test]
    fn invalid_specs() {
        let base = Arc::new(circle_mesh(8).unwrap());
        let f = ProjectionField::trivial(base.clone(), 2, Scalar::Real);
        assert!(matches!(BvpSpec::new(f, 1, 8), Err(Error::InvalidSpec(_))));
        let g = constant_line(base, &[1.0, 0.0], Scalar::Real);
        assert!(matches!(BvpSpec::new(g, 1, 3), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn end_to_end_on_circle() {
        let r = bvp_check(&line_spec(&[1.0, 0.0], 64, 32), &cfg()).unwrap();
        assert!(r.computed.is_zero());
        assert_eq!(r.status, ParametrixStatus::Built);
        let base = Arc::new(circle_mesh(64).unwrap());
        let spec = BvpSpec::new(moebius(base), 1, 32).unwrap();
        let r = bvp_check(&spec, &cfg()).unwrap();
        assert_eq!(r.computed.w1, vec![1]);
        assert_eq!(r.status, ParametrixStatus::Obstructed);
        assert_eq!(r.certificate, vec!["w1[0] = 1".to_string()]);
    }
}
