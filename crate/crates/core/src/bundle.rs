//! Vector bundles as fields of orthogonal projectors inside a trivial
//! ambient bundle `Θ(K^N)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Scalar};
use crate::mesh::{BaseMesh, MeshMap};
use crate::morphism::MorphismField;

/// Vertex-indexed field of Hermitian idempotents `P_x` on `K^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionField {
    pub base: Arc<BaseMesh>,
    pub ambient_dim: usize,
    pub scalar: Scalar,
    pub proj: Vec<CMat>,
}

/// Outcome of [`ProjectionField::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub idempotency: Vec<f64>,
    pub hermiticity: Vec<f64>,
    pub vertex_ranks: Vec<usize>,
    /// Rank per connected component; `None` when it varies inside the component.
    pub component_ranks: Vec<Option<usize>>,
    pub edge_gaps: Vec<((usize, usize), f64)>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_edge_gap(&self) -> f64 {
        self.edge_gaps.iter().fold(0.0, |a, (_, g)| a.max(*g))
    }
}

impl ProjectionField {
    /// Wraps per-vertex projectors after a shape check (no numerical validation).
    pub fn new(base: Arc<BaseMesh>, ambient_dim: usize, scalar: Scalar, proj: Vec<CMat>) -> Result<Self> {
        if proj.len() != base.vertices {
            return Err(Error::Shape(format!(
                "{} projectors for {} vertices",
                proj.len(),
                base.vertices
            )));
        }
        if let Some((v, p)) = proj
            .iter()
            .enumerate()
            .find(|(_, p)| p.shape() != (ambient_dim, ambient_dim))
        {
            return Err(Error::Shape(format!(
                "projector at vertex {v} has shape {:?}, expected {ambient_dim}x{ambient_dim}",
                p.shape()
            )));
        }
        let proj = proj.into_iter().map(|p| scalar.fix(p)).collect();
        Ok(Self {
            base,
            ambient_dim,
            scalar,
            proj,
        })
    }

    pub fn constant(base: Arc<BaseMesh>, scalar: Scalar, p: CMat) -> Result<Self> {
        let n = p.nrows();
        let proj = vec![p; base.vertices];
        Self::new(base, n, scalar, proj)
    }

    /// The product bundle `Θ(K^n)`.
    pub fn trivial(base: Arc<BaseMesh>, n: usize, scalar: Scalar) -> Self {
        Self::constant(base, scalar, linalg::identity(n)).expect("identity is square")
    }

    pub fn zero(base: Arc<BaseMesh>, n: usize, scalar: Scalar) -> Self {
        Self::constant(base, scalar, linalg::zeros(n, n)).expect("zero is square")
    }

    pub fn len(&self) -> usize {
        self.proj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proj.is_empty()
    }

    pub fn rank_at(&self, v: usize) -> usize {
        linalg::projector_rank(&self.proj[v])
    }

    pub fn ranks(&self) -> Vec<usize> {
        (0..self.len()).map(|v| self.rank_at(v)).collect()
    }

    /// Common rank when every vertex agrees.
    pub fn rank(&self) -> Option<usize> {
        let r = self.ranks();
        r.first().copied().filter(|f| r.iter().all(|x| x == f))
    }

    /// Orthonormal basis of the fibre at `v`.
    pub fn basis_at(&self, v: usize) -> CMat {
        self.scalar.fix(linalg::projector_basis(&self.proj[v]))
    }

    pub fn edge_gap(&self, a: usize, b: usize) -> f64 {
        linalg::hermitian_norm(&(&self.proj[a] - &self.proj[b]))
    }

    pub fn same_base(&self, other: &ProjectionField) -> bool {
        Arc::ptr_eq(&self.base, &other.base) || *self.base == *other.base
    }

    pub fn check_compatible(&self, other: &ProjectionField) -> Result<()> {
        if !self.same_base(other) {
            return Err(Error::BaseMismatch("bundles live over different meshes".into()));
        }
        if self.scalar != other.scalar {
            return Err(Error::ScalarMismatch {
                expected: self.scalar.as_str().into(),
                found: other.scalar.as_str().into(),
            });
        }
        Ok(())
    }

    /// Idempotency, Hermiticity, rank constancy and edge-gap checks.
    pub fn validate(&self, cfg: &ToleranceConfig) -> ValidationReport {
        let per_vertex: Vec<(f64, f64, usize)> = self
            .proj
            .par_iter()
            .map(|p| {
                let idem = linalg::op_norm(&(p * p - p));
                let herm = linalg::op_norm(&(p - p.adjoint()));
                (idem, herm, linalg::numerical_rank(p, cfg))
            })
            .collect();
        let edge_gaps: Vec<((usize, usize), f64)> = self
            .base
            .edges
            .par_iter()
            .map(|&(a, b)| ((a, b), self.edge_gap(a, b)))
            .collect();

        let mut failures = Vec::new();
        for (v, &(idem, herm, _)) in per_vertex.iter().enumerate() {
            if idem > cfg.idem_tol {
                failures.push(format!("vertex {v}: idempotency residual {idem:e}"));
            }
            if herm > cfg.idem_tol {
                failures.push(format!("vertex {v}: hermiticity residual {herm:e}"));
            }
        }
        let vertex_ranks: Vec<usize> = per_vertex.iter().map(|x| x.2).collect();
        let labels = self.base.components();
        let ncomp = labels.iter().max().map_or(0, |m| m + 1);
        let mut component_ranks: Vec<Option<Option<usize>>> = vec![None; ncomp];
        for (v, &c) in labels.iter().enumerate() {
            component_ranks[c] = match component_ranks[c] {
                None => Some(Some(vertex_ranks[v])),
                Some(Some(r)) if r == vertex_ranks[v] => Some(Some(r)),
                _ => Some(None),
            };
        }
        let component_ranks: Vec<Option<usize>> = component_ranks.into_iter().map(|c| c.flatten()).collect();
        for (c, r) in component_ranks.iter().enumerate() {
            if r.is_none() {
                failures.push(format!("component {c}: rank not constant"));
            }
        }
        let limit = cfg.max_edge_gap();
        for &((a, b), g) in &edge_gaps {
            if g > limit {
                failures.push(format!("edge ({a},{b}): gap {g:.6} exceeds {limit}"));
            }
        }
        ValidationReport {
            idempotency: per_vertex.iter().map(|x| x.0).collect(),
            hermiticity: per_vertex.iter().map(|x| x.1).collect(),
            vertex_ranks,
            component_ranks,
            edge_gaps,
            failures,
        }
    }

    /// Returns `self` when validation passes.
    pub fn validated(self, cfg: &ToleranceConfig) -> Result<Self> {
        let report = self.validate(cfg);
        if report.passed() {
            Ok(self)
        } else {
            Err(Error::InvalidBundle(summarize(&report.failures)))
        }
    }
}

fn summarize(failures: &[String]) -> String {
    let shown: Vec<&str> = failures.iter().take(3).map(String::as_str).collect();
    if failures.len() > 3 {
        format!("{} (and {} more)", shown.join("; "), failures.len() - 3)
    } else {
        shown.join("; ")
    }
}

/// Orthogonal projector field onto the span of per-vertex generators (`N x k` each).
pub fn subbundle_span(
    base: Arc<BaseMesh>,
    ambient_dim: usize,
    scalar: Scalar,
    generators: &[CMat],
    cfg: &ToleranceConfig,
) -> Result<ProjectionField> {
    if generators.len() != base.vertices {
        return Err(Error::Shape(format!(
            "{} generator sets for {} vertices",
            generators.len(),
            base.vertices
        )));
    }
    let k = generators.first().map_or(0, |g| g.ncols());
    let mut proj = Vec::with_capacity(generators.len());
    for (v, g) in generators.iter().enumerate() {
        if g.shape() != (ambient_dim, k) {
            return Err(Error::Shape(format!(
                "generators at vertex {v} have shape {:?}, expected {ambient_dim}x{k}",
                g.shape()
            )));
        }
        let s = linalg::singular_values(g);
        let smin = if k == 0 {
            f64::INFINITY
        } else {
            s.get(k - 1).copied().unwrap_or(0.0)
        };
        let smax = s.first().copied().unwrap_or(0.0);
        if k > 0 && (k > ambient_dim || smin <= cfg.rank_cutoff(ambient_dim.max(k), smax) || smax == 0.0) {
            return Err(Error::DegenerateSpan {
                vertex: v,
                sigma_min: smin,
            });
        }
        let (u, _, _) = linalg::thin_svd(g);
        proj.push(scalar.fix(linalg::projector_from_orthonormal(&u.columns(0, k).into_owned())));
    }
    ProjectionField::new(base, ambient_dim, scalar, proj)?.validated(cfg)
}

/// Orthogonal complement of `f` inside `within` (the ambient bundle when `None`).
pub fn complement(
    f: &ProjectionField,
    within: Option<&ProjectionField>,
    cfg: &ToleranceConfig,
) -> Result<ProjectionField> {
    let ambient;
    let within = match within {
        Some(w) => {
            f.check_compatible(w)?;
            if w.ambient_dim != f.ambient_dim {
                return Err(Error::Shape("complement: ambient dimensions differ".into()));
            }
            w
        }
        None => {
            ambient = ProjectionField::trivial(f.base.clone(), f.ambient_dim, f.scalar);
            &ambient
        }
    };
    let nest_tol = 10.0 * cfg.idem_tol;
    let mut proj = Vec::with_capacity(f.len());
    for (v, (p, q)) in f.proj.iter().zip(&within.proj).enumerate() {
        let residual = linalg::op_norm(&(q * p - p));
        if residual > nest_tol {
            return Err(Error::NotASubbundle { vertex: v, residual });
        }
        proj.push(linalg::clean_projector(&(q - p), f.scalar));
    }
    ProjectionField::new(f.base.clone(), f.ambient_dim, f.scalar, proj)?.validated(cfg)
}

/// Block-diagonal sum inside `K^(N_a + N_b)`.
pub fn direct_sum(a: &ProjectionField, b: &ProjectionField) -> Result<ProjectionField> {
    a.check_compatible(b)?;
    let proj = a
        .proj
        .iter()
        .zip(&b.proj)
        .map(|(x, y)| linalg::block_diag(x, y))
        .collect();
    ProjectionField::new(a.base.clone(), a.ambient_dim + b.ambient_dim, a.scalar, proj)
}

/// Projector field onto `im L_x` inside the target bundle.
pub fn image_bundle(l: &MorphismField, cfg: &ToleranceConfig) -> Result<ProjectionField> {
    let ranks: Vec<usize> = l.mats.par_iter().map(|m| linalg::numerical_rank(m, cfg)).collect();
    let labels = l.base().components();
    let mut offenders = Vec::new();
    for &(a, b) in &l.base().edges {
        if labels[a] == labels[b] && ranks[a] != ranks[b] {
            offenders.push(a);
            offenders.push(b);
        }
    }
    if !offenders.is_empty() {
        offenders.sort_unstable();
        offenders.dedup();
        return Err(Error::NotABundle { vertices: offenders });
    }
    let scalar = l.target.scalar;
    let proj = l
        .mats
        .par_iter()
        .map(|m| scalar.fix(linalg::projector_from_orthonormal(&linalg::range_basis(m, cfg))))
        .collect();
    ProjectionField::new(l.target.base.clone(), l.target.ambient_dim, scalar, proj)?.validated(cfg)
}

/// `(f^*E)_y = E_{f(y)}` over the source mesh of `f`.
pub fn pullback_bundle(f: &MeshMap, e: &ProjectionField) -> Result<ProjectionField> {
    if f.target != *e.base {
        return Err(Error::BaseMismatch(
            "pullback: bundle is not based on the map's target".into(),
        ));
    }
    let proj = f.vertex_assignment.iter().map(|&v| e.proj[v].clone()).collect();
    ProjectionField::new(Arc::new(f.source.clone()), e.ambient_dim, e.scalar, proj)
}

/// `k` pointwise independent sections `s_i(x) = S_x e_i` of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub k: usize,
    /// Per-vertex `N x k` section matrices.
    pub sections: Vec<CMat>,
}

impl FrameSet {
    pub fn new(k: usize, sections: Vec<CMat>) -> Self {
        Self { k, sections }
    }

    /// Checks sections lie in the fibres, stay independent, and vary continuously
    /// along edges (`||S_x - S_y|| <= (1 - δ) min(σ_min(S_x), σ_min(S_y))`).
    pub fn validate(&self, bundle: &ProjectionField, cfg: &ToleranceConfig) -> Result<()> {
        if self.sections.len() != bundle.len() {
            return Err(Error::Shape("frame has wrong vertex count".into()));
        }
        let mut smin = Vec::with_capacity(self.sections.len());
        for (v, s) in self.sections.iter().enumerate() {
            if s.shape() != (bundle.ambient_dim, self.k) {
                return Err(Error::Shape(format!("frame at vertex {v} has shape {:?}", s.shape())));
            }
            if self.k > bundle.rank_at(v) {
                return Err(Error::RankSlack {
                    required: self.k,
                    available: bundle.rank_at(v),
                });
            }
            let scale = linalg::op_norm(s).max(1.0);
            let off = linalg::op_norm(&(&bundle.proj[v] * s - s));
            if off > 10.0 * cfg.idem_tol * scale {
                return Err(Error::ExtensionFailure {
                    attempts: 0,
                    seed: cfg.seed,
                    reason: format!("section leaves the fibre at vertex {v} (residual {off:e})"),
                });
            }
            let sv = linalg::singular_values(s);
            let lo = if self.k == 0 { f64::INFINITY } else { sv[self.k - 1] };
            if self.k > 0 && lo <= cfg.rank_cutoff(bundle.ambient_dim, sv[0]).max(f64::MIN_POSITIVE) {
                return Err(Error::ExtensionFailure {
                    attempts: 0,
                    seed: cfg.seed,
                    reason: format!("sections dependent at vertex {v}"),
                });
            }
            smin.push(lo);
        }
        if self.k == 0 {
            return Ok(());
        }
        for &(a, b) in &bundle.base.edges {
            let jump = linalg::op_norm(&(&self.sections[a] - &self.sections[b]));
            if jump > cfg.max_edge_gap() * smin[a].min(smin[b]) {
                return Err(Error::ExtensionFailure {
                    attempts: 0,
                    seed: cfg.seed,
                    reason: format!("frame discontinuous across edge ({a},{b})"),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families;
    use crate::invariants::w1_loop;
    use crate::mesh::{circle_mesh, circle_power_map, MeshMap};

    fn circle(m: usize) -> Arc<BaseMesh> {
        Arc::new(circle_mesh(m).unwrap())
    }

    #[test]
    fn constant_diag_passes() {
        let cfg = ToleranceConfig::default();
        let p = ProjectionField::constant(circle(8), Scalar::Real, linalg::from_real(2, 2, &[1., 0., 0., 0.])).unwrap();
        let r = p.validate(&cfg);
        assert!(r.passed());
        assert_eq!(r.component_ranks, vec![Some(1)]);
    }

    #[test]
    fn moebius_passes_with_small_gaps() {
        let cfg = ToleranceConfig::default();
        let m = families::moebius(circle(64));
        let r = m.validate(&cfg);
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(m.rank(), Some(1));
        // Oracle: adjacent half-angle lines differ by angle π/64.
        let expected = (std::f64::consts::PI / 64.0).sin();
        assert!((r.max_edge_gap() - expected).abs() < 1e-12);
        assert!(r.max_edge_gap() <= 1.0 - cfg.edge_delta);
    }

    #[test]
    fn orthogonal_neighbours_fail_edge_check() {
        let cfg = ToleranceConfig::default();
        let mut proj = vec![linalg::from_real(2, 2, &[1., 0., 0., 0.]); 8];
        proj[1] = linalg::from_real(2, 2, &[0., 0., 0., 1.]);
        let p = ProjectionField::new(circle(8), 2, Scalar::Real, proj).unwrap();
        let r = p.validate(&cfg);
        assert!(!r.passed());
        assert!((p.edge_gap(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn span_of_constant_generator() {
        let cfg = ToleranceConfig::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = vec![linalg::from_real(2, 1, &[s, s]); 8];
        let p = subbundle_span(circle(8), 2, Scalar::Real, &g, &cfg).unwrap();
        for q in &p.proj {
            assert!(linalg::dist(q, &linalg::from_real(2, 2, &[0.5, 0.5, 0.5, 0.5])) < 1e-14);
        }
    }

    #[test]
    fn span_of_moebius_generators_matches_direct_field() {
        let cfg = ToleranceConfig::default();
        let base = circle(64);
        let gens: Vec<CMat> = (0..64)
            .map(|j| {
                let h = crate::mesh::circle_angle(j, 64) / 2.0;
                linalg::from_real(2, 1, &[h.cos(), h.sin()])
            })
            .collect();
        let p = subbundle_span(base.clone(), 2, Scalar::Real, &gens, &cfg).unwrap();
        let m = families::moebius(base);
        for (a, b) in p.proj.iter().zip(&m.proj) {
            assert!(linalg::dist(a, b) < 1e-12);
        }
    }

    #[test]
    fn nearly_dependent_generators_rejected() {
        let cfg = ToleranceConfig::default();
        let g = vec![linalg::from_real(2, 2, &[1., 1., 0., 1e-15]); 4];
        let err = subbundle_span(circle(4), 2, Scalar::Real, &g, &cfg).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpan { vertex: 0, .. }));
    }

    #[test]
    fn complements() {
        let cfg = ToleranceConfig::default();
        let base = circle(8);
        let e1 =
            ProjectionField::constant(base.clone(), Scalar::Real, linalg::from_real(2, 2, &[1., 0., 0., 0.])).unwrap();
        let c = complement(&e1, None, &cfg).unwrap();
        assert!(linalg::dist(&c.proj[3], &linalg::from_real(2, 2, &[0., 0., 0., 1.])) < 1e-14);
        let full = ProjectionField::trivial(base.clone(), 3, Scalar::Real);
        let z = complement(&full, Some(&full), &cfg).unwrap();
        assert_eq!(z.rank(), Some(0));
    }

    #[test]
    fn complement_of_moebius_is_twisted() {
        let cfg = ToleranceConfig::default();
        let base = circle(64);
        let m = families::moebius(base.clone());
        let c = complement(&m, None, &cfg).unwrap();
        assert_eq!(c.rank(), Some(1));
        assert_eq!(w1_loop(&c, &base.loops[0], &cfg).unwrap(), 1);
        for (p, g) in m.proj.iter().zip(&c.proj) {
            assert!((p + g - linalg::identity(2)).norm() < 2.0 * cfg.idem_tol);
            assert!((p * g).norm() < 2.0 * cfg.idem_tol);
        }
    }

    #[test]
    fn complement_requires_nesting() {
        let cfg = ToleranceConfig::default();
        let base = circle(8);
        let a =
            ProjectionField::constant(base.clone(), Scalar::Real, linalg::from_real(2, 2, &[1., 0., 0., 0.])).unwrap();
        let b = ProjectionField::constant(base, Scalar::Real, linalg::from_real(2, 2, &[0., 0., 0., 1.])).unwrap();
        assert!(matches!(
            complement(&a, Some(&b), &cfg),
            Err(Error::NotASubbundle { .. })
        ));
    }

    #[test]
    fn direct_sums() {
        let cfg = ToleranceConfig::default();
        let base = circle(64);
        let d =
            ProjectionField::constant(base.clone(), Scalar::Real, linalg::from_real(2, 2, &[1., 0., 0., 0.])).unwrap();
        let s = direct_sum(&d, &d).unwrap();
        assert_eq!((s.ambient_dim, s.rank()), (4, Some(2)));
        let m = families::moebius(base.clone());
        let mm = direct_sum(&m, &m).unwrap();
        assert_eq!(w1_loop(&mm, &base.loops[0], &cfg).unwrap(), 0);
        let z = ProjectionField::zero(base.clone(), 1, Scalar::Real);
        let mz = direct_sum(&m, &z).unwrap();
        assert_eq!(mz.rank(), Some(1));
        assert_eq!(w1_loop(&mz, &base.loops[0], &cfg).unwrap(), 1);
        let other = ProjectionField::trivial(circle(9), 1, Scalar::Real);
        assert!(matches!(direct_sum(&m, &other), Err(Error::BaseMismatch(_))));
    }

    #[test]
    fn pullbacks() {
        let cfg = ToleranceConfig::default();
        let base = circle(32);
        let m = families::moebius(base.clone());
        let id = MeshMap::identity(&base);
        assert_eq!(pullback_bundle(&id, &m).unwrap().proj, m.proj);
        let two = circle_power_map(32, 2).unwrap();
        let p2 = pullback_bundle(&two, &m).unwrap().validated(&cfg).unwrap();
        assert_eq!(p2.rank(), Some(1));
        assert_eq!(w1_loop(&p2, &p2.base.loops[0], &cfg).unwrap(), 0);
        let zero = circle_power_map(32, 0).unwrap();
        let p0 = pullback_bundle(&zero, &m).unwrap();
        assert!(p0.proj.iter().all(|p| *p == m.proj[0]));
    }
}
