//! Transversal trivial subbundles, kernel bundles and the index class
//! `ind L = [E(L,V)] - [V]`.
//!
//! The transversal is built by a sweep over the vertices. Wherever
//! `im L_x + V_x` misses part of `F_x` by more than the margin, the deficient
//! left singular directions are lifted to ambient vectors and adjoined to a
//! global frame `W`; `V_x` is the span of `Q_x W`. A random component in
//! `ker Q_x` keeps the projected frame independent at the other vertices.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundle::{FrameSet, ProjectionField};
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::invariants::{virtual_record, InvariantRecord};
use crate::linalg::{self, CMat};
use crate::morphism::{direct_sum_morphism, identity_morphism, restrict_morphism, MorphismField};

/// Fraction of `g_a + g_b` an edge jump may reach before the edge counts
/// as unresolved.
const COARSE_EDGE_FACTOR: f64 = 0.75;

/// Edge gap below which a candidate frame is taken without further search.
const SMOOTH_FRAME_GAP: f64 = 0.25;

/// Retries per augmentation step before the ambient is declared exhausted.
pub const AUGMENT_ATTEMPTS: usize = 16;

/// Margins tried in turn when the kernel bundle comes out discontinuous.
const MARGIN_LADDER: [f64; 5] = [1e-3, 1e-2, 5e-2, 1e-1, 2e-1];

/// Trivial subbundle `V` of the target transversal to `im L`.
#[derive(Debug, Clone)]
pub struct TransversalData {
    /// Global ambient vectors `v_1..v_k` (orthonormal columns).
    pub frame: CMat,
    /// `V_x = span{Q_x v_j}`.
    pub field: ProjectionField,
    /// Per-vertex orthonormal basis of `V_x`, continuous in `x`.
    pub sections: Vec<CMat>,
    pub dim: usize,
    /// Smallest transversality margin over all vertices.
    pub margin: f64,
}

impl TransversalData {
    /// Projects an ambient frame into the target of `l` and measures its margin.
    pub fn from_frame(l: &MorphismField, frame: CMat, cfg: &ToleranceConfig) -> Result<Self> {
        if frame.nrows() != l.target.ambient_dim {
            return Err(Error::Shape(format!(
                "frame has {} rows, target ambient is {}",
                frame.nrows(),
                l.target.ambient_dim
            )));
        }
        let frame = linalg::orthonormalize(&frame, cfg.frame_floor)
            .ok_or_else(|| Error::Shape("frame vectors are dependent".into()))?;
        let sections = project_frame(&l.target, &frame, cfg).ok_or(Error::AmbientExhausted {
            ambient: l.target.ambient_dim,
            vertex: 0,
        })?;
        let field = frame_field(&l.target, &sections)?;
        let margin = margins(&Sweep::new(l), &sections)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        Ok(Self {
            dim: frame.ncols(),
            frame,
            field,
            sections,
            margin,
        })
    }
}

/// Per-vertex orthonormal bases of `Q_x W`, or `None` when the projected
/// frame is not a valid frame of the target (too small somewhere or
/// discontinuous along an edge).
fn project_frame(target: &ProjectionField, w: &CMat, cfg: &ToleranceConfig) -> Option<Vec<CMat>> {
    let projected: Vec<CMat> = target.proj.par_iter().map(|q| target.scalar.fix(q * w)).collect();
    if projected
        .iter()
        .any(|qw| linalg::min_singular_value(qw) < cfg.frame_floor)
    {
        return None;
    }
    FrameSet::new(w.ncols(), projected.clone()).validate(target, cfg).ok()?;
    projected
        .par_iter()
        .map(|qw| linalg::orthonormalize(qw, 0.0).map(|b| target.scalar.fix(b)))
        .collect()
}

fn frame_field(target: &ProjectionField, sections: &[CMat]) -> Result<ProjectionField> {
    let proj = sections
        .iter()
        .map(|b| target.scalar.fix(linalg::projector_from_orthonormal(b)))
        .collect();
    ProjectionField::new(target.base.clone(), target.ambient_dim, target.scalar, proj)
}

/// Cached per-vertex data for margin computations.
struct Sweep {
    /// `B_F^* L_x / s` in target-basis coordinates.
    reduced: Vec<CMat>,
    target_bases: Vec<CMat>,
}

impl Sweep {
    fn new(l: &MorphismField) -> Self {
        let scale = l.max_norm();
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let target_bases: Vec<CMat> = (0..l.len()).into_par_iter().map(|v| l.target.basis_at(v)).collect();
        let reduced = target_bases
            .par_iter()
            .zip(l.mats.par_iter())
            .map(|(b, m)| (b.adjoint() * m).unscale(scale))
            .collect();
        Self { reduced, target_bases }
    }

    /// `(σ, U)` of `[B_F^* L_x / s | B_F^* V_x]`, padded to the fibre rank.
    fn spectrum(&self, x: usize, vbasis: &CMat) -> (Vec<f64>, CMat) {
        let b = &self.target_bases[x];
        let r = b.ncols();
        let vb = b.adjoint() * vbasis;
        let mut stack = linalg::zeros(r, self.reduced[x].ncols() + vb.ncols());
        stack
            .view_mut((0, 0), self.reduced[x].shape())
            .copy_from(&self.reduced[x]);
        stack.view_mut((0, self.reduced[x].ncols()), vb.shape()).copy_from(&vb);
        linalg::left_singular_basis(&stack)
    }

    fn margin(&self, x: usize, vbasis: &CMat) -> f64 {
        let (s, _) = self.spectrum(x, vbasis);
        s.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn margins(sweep: &Sweep, sections: &[CMat]) -> Vec<f64> {
    (0..sections.len())
        .into_par_iter()
        .map(|x| sweep.margin(x, &sections[x]))
        .collect()
}

/// Transversal sweep in vertex-index order with the configured margin.
pub fn transversal_subbundle(l: &MorphismField, cfg: &ToleranceConfig) -> Result<TransversalData> {
    let order: Vec<usize> = (0..l.len()).collect();
    transversal_with(l, &order, cfg.seed, cfg.trans_margin, cfg)
}

/// Transversal sweep visiting vertices in `order`, requiring margin `target`.
pub fn transversal_with(
    l: &MorphismField,
    order: &[usize],
    seed: u64,
    target: f64,
    cfg: &ToleranceConfig,
) -> Result<TransversalData> {
    let n = l.target.ambient_dim;
    let scalar = l.target.scalar;
    let sweep = Sweep::new(l);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = linalg::zeros(n, 0);
    let mut sections = vec![linalg::zeros(n, 0); l.len()];
    for &x in order {
        for _ in 0..=n {
            let (s, u) = sweep.spectrum(x, &sections[x]);
            let r = s.len();
            let good = s.iter().filter(|&&v| v >= target).count();
            if good == r {
                break;
            }
            let basis = &sweep.target_bases[x];
            let outside = linalg::identity(n) - &l.target.proj[x];
            let mut accepted = None;
            for attempt in 0..AUGMENT_ATTEMPTS {
                let mut cand = w.clone();
                // Later attempts mix in other fibre directions, which keeps
                // the projected frame away from twisted summands.
                let mix = attempt as f64 / AUGMENT_ATTEMPTS as f64;
                // Most deficient direction first.
                for i in (good..r).rev() {
                    let z = &outside * linalg::random_matrix(&mut rng, n, 1, scalar);
                    let y = &l.target.proj[x] * linalg::random_matrix(&mut rng, n, 1, scalar);
                    let mut v: CMat =
                        basis * u.columns(i, 1) + z.unscale((n as f64).sqrt()) + y.scale(mix / (n as f64).sqrt());
                    v -= &cand * (cand.adjoint() * &v);
                    let norm = v.norm();
                    if norm < 1e-8 {
                        continue;
                    }
                    let cols = cand.ncols();
                    cand = cand.insert_column(cols, linalg::ZERO);
                    cand.set_column(cols, &scalar.fix(v.unscale(norm)).column(0));
                }
                if cand.ncols() > n || cand.ncols() == w.ncols() {
                    break;
                }
                let Some(secs) = project_frame(&l.target, &cand, cfg) else {
                    continue;
                };
                let Ok(field) = frame_field(&l.target, &secs) else {
                    continue;
                };
                let report = field.validate(cfg);
                if !report.passed() {
                    continue;
                }
                // A rough frame makes `E(L,V)` rough too, so keep looking
                // for a smoother one while attempts remain.
                let gap = report.max_edge_gap();
                if accepted.as_ref().is_none_or(|a: &(f64, CMat, Vec<CMat>)| gap < a.0) {
                    accepted = Some((gap, cand, secs));
                }
                if gap <= SMOOTH_FRAME_GAP {
                    break;
                }
            }
            match accepted {
                Some((_, cand, secs)) => {
                    w = cand;
                    sections = secs;
                }
                None => return Err(Error::AmbientExhausted { ambient: n, vertex: x }),
            }
        }
    }
    let field = frame_field(&l.target, &sections)?;
    let all = margins(&sweep, &sections);
    let (worst, margin) = all
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    if margin < target {
        return Err(Error::AmbientExhausted {
            ambient: n,
            vertex: worst,
        });
    }
    Ok(TransversalData {
        dim: w.ncols(),
        frame: w,
        field,
        sections,
        margin,
    })
}

/// Projector field onto `E(L,V)_x = {u ∈ E_x : L_x u ∈ V_x}` with the fibre
/// dimension asserted to be `ind(L_x) + dim V`.
pub fn kernel_bundle(l: &MorphismField, v: &ProjectionField, cfg: &ToleranceConfig) -> Result<ProjectionField> {
    l.target.check_compatible(v)?;
    if v.ambient_dim != l.target.ambient_dim {
        return Err(Error::Shape("V lives in a different ambient than the target".into()));
    }
    let n = l.target.ambient_dim;
    let scale = l.max_norm();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let fibres: Vec<(CMat, CMat, f64)> = (0..l.len())
        .into_par_iter()
        .map(|x| {
            let be = l.domain.basis_at(x);
            let re = be.ncols();
            let ambient = ((linalg::identity(n) - &v.proj[x]) * &l.mats[x]).unscale(scale);
            let (s, right) = linalg::right_singular_basis(&(&ambient * &be));
            // `L` is scaled to unit norm, so the cutoff is absolute.
            let cut = cfg.rank_cutoff(n.max(re), 1.0);
            let rank = s.iter().filter(|&&v| v > cut).count();
            let found = (re - rank) as i64;
            let expected = l.index_at(x) + v.rank_at(x) as i64;
            if found != expected {
                return Err(Error::TransversalityDegraded {
                    vertex: x,
                    expected,
                    found,
                });
            }
            let gap = if rank == 0 { f64::INFINITY } else { s[rank - 1] };
            let basis = &be * right.columns(rank, re - rank);
            Ok((
                l.domain.scalar.fix(linalg::projector_from_orthonormal(&basis)),
                ambient,
                gap,
            ))
        })
        .collect::<Result<_>>()?;
    let domain_bases: Vec<CMat> = (0..l.len()).into_par_iter().map(|x| l.domain.basis_at(x)).collect();
    let target_bases: Vec<CMat> = (0..l.len()).into_par_iter().map(|x| l.target.basis_at(x)).collect();
    // Compare the maps at both ends of an edge after transporting the far
    // fibres onto the near ones. Along the straight segment between them the
    // smallest nonzero singular value stays above `max(g_a - t j, g_b - (1 - t) j)`,
    // so a jump well below `g_a + g_b` rules out a kernel appearing between samples.
    let bad = l
        .domain
        .base
        .edges
        .par_iter()
        .map(|&(a, b)| {
            let te = transport_map(&domain_bases[b], &domain_bases[a]);
            let tf = transport_map(&target_bases[b], &target_bases[a]);
            let moved = tf * &fibres[b].1 * te.adjoint();
            let jump = linalg::op_norm(&(&fibres[a].1 - moved));
            let gap = fibres[a].2 + fibres[b].2;
            (a, b, jump, gap)
        })
        .find_first(|&(_, _, jump, gap)| jump >= COARSE_EDGE_FACTOR * gap);
    if let Some((a, b, jump, gap)) = bad {
        return Err(Error::CoarseEdge { a, b, jump, gap });
    }
    let proj = fibres.into_iter().map(|f| f.0).collect();
    ProjectionField::new(l.domain.base.clone(), l.domain.ambient_dim, l.domain.scalar, proj)?.validated(cfg)
}

/// Partial isometry carrying `span(from)` onto `span(to)` by the polar
/// factor of the overlap.
fn transport_map(from: &CMat, to: &CMat) -> CMat {
    let (u, _, v) = linalg::thin_svd(&(to.adjoint() * from));
    to * (u * v.adjoint()) * from.adjoint()
}

/// Formal difference `[plus] - [minus]` with its reduced invariants.
#[derive(Debug, Clone)]
pub struct VirtualBundle {
    pub plus: ProjectionField,
    pub minus: ProjectionField,
    pub reduced: InvariantRecord,
}

impl VirtualBundle {
    pub fn new(plus: ProjectionField, minus: ProjectionField, cfg: &ToleranceConfig) -> Result<Self> {
        let reduced = virtual_record(&plus, &minus, cfg)?;
        Ok(Self { plus, minus, reduced })
    }

    /// Recomputes the record from `plus` and `minus` and compares.
    pub fn is_consistent(&self, cfg: &ToleranceConfig) -> Result<bool> {
        Ok(virtual_record(&self.plus, &self.minus, cfg)? == self.reduced)
    }
}

/// Index class together with the transversal it was built from.
#[derive(Debug, Clone)]
pub struct IndexComputation {
    pub class: VirtualBundle,
    pub transversal: TransversalData,
    /// Rank `k` of the identity summand when the class was computed for
    /// `L ⊕ id` on `Θ^k` because the target of `L` had no room for `V`.
    pub stabilized: usize,
}

/// Trivial summands tried when the target ambient is too small.
pub const STABILIZATION_LIMIT: usize = 4;

/// `L ⊕ id` on the trivial bundle of rank `k`. Same class as `L`.
pub fn stabilize(l: &MorphismField, k: usize) -> Result<MorphismField> {
    if k == 0 {
        return Ok(l.clone());
    }
    let theta = ProjectionField::trivial(l.domain.base.clone(), k, l.domain.scalar);
    direct_sum_morphism(l, &identity_morphism(&theta))
}

pub fn index_class(l: &MorphismField, cfg: &ToleranceConfig) -> Result<VirtualBundle> {
    Ok(index_class_detailed(l, cfg)?.class)
}

pub fn index_class_detailed(l: &MorphismField, cfg: &ToleranceConfig) -> Result<IndexComputation> {
    let order: Vec<usize> = (0..l.len()).collect();
    index_class_with(l, &order, cfg.seed, cfg)
}

/// Builds the class from a sweep in `order`. When the kernel bundle is not
/// continuous on the mesh, the sweep is repeated with larger margins. When
/// the target ambient is too small for a transversal, `L` is stabilized by
/// identity summands, which leaves the class unchanged.
pub fn index_class_with(
    l: &MorphismField,
    order: &[usize],
    seed: u64,
    cfg: &ToleranceConfig,
) -> Result<IndexComputation> {
    let mut first = None;
    for k in 0..=STABILIZATION_LIMIT {
        let lk = stabilize(l, k)?;
        match margin_ladder(&lk, order, seed, cfg) {
            Ok((class, transversal)) => {
                return Ok(IndexComputation {
                    class,
                    transversal,
                    stabilized: k,
                })
            }
            Err(err) => {
                first.get_or_insert(err);
            }
        }
    }
    Err(first.expect("at least one stabilization tried"))
}

fn margin_ladder(
    l: &MorphismField,
    order: &[usize],
    seed: u64,
    cfg: &ToleranceConfig,
) -> Result<(VirtualBundle, TransversalData)> {
    let mut last = None;
    let mut rough = None;
    let ladder = std::iter::once(cfg.trans_margin).chain(MARGIN_LADDER.into_iter().filter(|&t| t > cfg.trans_margin));
    for target in ladder {
        let attempt = transversal_with(l, order, seed, target, cfg).and_then(|t| {
            let plus = kernel_bundle(l, &t.field, cfg).inspect_err(|e| {
                if matches!(e, Error::InvalidBundle(_)) && rough.is_none() {
                    rough = Some(t.frame.clone());
                }
            })?;
            Ok((VirtualBundle::new(plus, t.field.clone(), cfg)?, t))
        });
        match attempt {
            Ok(done) => return Ok(done),
            Err(err @ Error::AmbientExhausted { .. }) => {
                last.get_or_insert(err);
                break;
            }
            Err(err) => last = Some(err),
        }
    }
    let last = last.expect("at least one margin tried");
    match rough {
        Some(frame) => widen(l, &frame, seed, cfg).ok_or(last),
        None => Err(last),
    }
}

/// `E(L,V)` can turn faster than the mesh resolves even when `V` is
/// transversal; a larger `V` smooths it, since `E(L,F) = E`.
fn widen(
    l: &MorphismField,
    frame: &CMat,
    seed: u64,
    cfg: &ToleranceConfig,
) -> Option<(VirtualBundle, TransversalData)> {
    let n = l.target.ambient_dim;
    let k = frame.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51DE);
    for extra in 1..=n - k {
        for _ in 0..AUGMENT_ATTEMPTS {
            let w = linalg::random_matrix(&mut rng, n, extra, l.target.scalar);
            let mut cand = frame.clone().resize_horizontally(k + extra, linalg::ZERO);
            cand.columns_mut(k, extra).copy_from(&w);
            let found = TransversalData::from_frame(l, cand, cfg).and_then(|t| {
                if t.margin < cfg.trans_margin || !t.field.validate(cfg).passed() {
                    return Err(Error::AmbientExhausted { ambient: n, vertex: 0 });
                }
                let plus = kernel_bundle(l, &t.field, cfg)?;
                Ok((VirtualBundle::new(plus, t.field.clone(), cfg)?, t))
            });
            if let Ok(done) = found {
                return Some(done);
            }
        }
    }
    None
}

/// Two constructions of the class with different sweep orders and seeds.
#[derive(Debug, Clone)]
pub struct WellDefinednessReport {
    pub first: IndexComputation,
    pub second: IndexComputation,
}

pub fn well_definedness_check(
    l: &MorphismField,
    seeds: (u64, u64),
    cfg: &ToleranceConfig,
) -> Result<WellDefinednessReport> {
    let forward: Vec<usize> = (0..l.len()).collect();
    let backward: Vec<usize> = (0..l.len()).rev().collect();
    let first = index_class_with(l, &forward, seeds.0, cfg)?;
    let second = index_class_with(l, &backward, seeds.1, cfg)?;
    if first.class.reduced != second.class.reduced {
        return Err(Error::WellDefinedness(format!(
            "{:?} (dim V = {}) vs {:?} (dim V = {})",
            first.class.reduced, first.transversal.dim, second.class.reduced, second.transversal.dim
        )));
    }
    Ok(WellDefinednessReport { first, second })
}

fn is_full(p: &ProjectionField, cfg: &ToleranceConfig) -> bool {
    let id = linalg::identity(p.ambient_dim);
    p.proj
        .iter()
        .all(|q| linalg::op_norm(&(q - &id)) <= 10.0 * cfg.idem_tol)
}

/// Classical class `[Θ(K^M/E_1)] - [im(I - P)]` for families on trivial
/// bundles, with `E_1` a random subspace of codimension `max dim ker L_x`
/// meeting every kernel trivially.
pub fn classical_index_class(l: &MorphismField, cfg: &ToleranceConfig) -> Result<VirtualBundle> {
    if !is_full(&l.domain, cfg) || !is_full(&l.target, cfg) {
        return Err(Error::InvalidMorphism(
            "classical construction needs full ambient domain and target".into(),
        ));
    }
    let (m, n) = (l.domain.ambient_dim, l.target.ambient_dim);
    let scalar = l.domain.scalar;
    let scale = l.max_norm();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    // Directions squeezed below the margin count as kernel.
    let codim = l
        .mats
        .iter()
        .map(|a| {
            let (s, _) = linalg::right_singular_basis(&a.unscale(scale));
            m - s.iter().filter(|&&v| v >= cfg.trans_margin).count()
        })
        .max()
        .unwrap_or(0);
    let base = l.domain.base.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xC1A5);
    // A larger codimension keeps `L E_1` further from degenerate, at no cost
    // to the class.
    for c in codim..=m {
        for _ in 0..cfg.search_budget {
            let e1 = linalg::orthonormalize(&linalg::random_matrix(&mut rng, m, m - c, scalar), 1e-6)
                .unwrap_or_else(|| linalg::zeros(m, 0));
            if e1.ncols() != m - c {
                continue;
            }
            let images: Option<Vec<CMat>> = l
                .mats
                .par_iter()
                .map(|a| {
                    let img = (a * &e1).unscale(scale);
                    if img.ncols() > 0 && linalg::min_singular_value(&img) < cfg.trans_margin {
                        return None;
                    }
                    let b = linalg::orthonormalize(&img, 0.0)?;
                    Some(scalar.fix(linalg::identity(n) - linalg::projector_from_orthonormal(&b)))
                })
                .collect();
            let Some(coker) = images else { continue };
            let Ok(minus) = ProjectionField::new(base.clone(), n, scalar, coker) else {
                continue;
            };
            if !minus.validate(cfg).passed() {
                continue;
            }
            let plus = ProjectionField::trivial(base, c, scalar);
            return VirtualBundle::new(plus, minus, cfg);
        }
    }
    Err(Error::E1SearchFailure {
        codim,
        draws: cfg.search_budget * (m - codim + 1),
    })
}

/// Outcome of reducing `L` to `L̃ : E(L,V) -> V`.
#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub restricted: MorphismField,
    pub original: InvariantRecord,
    pub reduced: InvariantRecord,
}

impl ReductionReport {
    pub fn equal(&self) -> bool {
        self.original == self.reduced
    }
}

/// Restricts `L` to `E(L,V) -> V` for a transversal subfield `V` of the
/// target and compares the index classes of both morphisms.
pub fn reduce(l: &MorphismField, v: &ProjectionField, cfg: &ToleranceConfig) -> Result<ReductionReport> {
    let e = kernel_bundle(l, v, cfg)?;
    let original = virtual_record(&e, v, cfg)?;
    let restricted = restrict_morphism(l, &e, v, cfg)?;
    let reduced = index_class(&restricted, cfg)?.reduced;
    let report = ReductionReport {
        restricted,
        original,
        reduced,
    };
    if !report.equal() {
        return Err(Error::WellDefinedness(format!(
            "reduction changed the class: {:?} vs {:?}",
            report.original, report.reduced
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::families::{moebius, random_family, BundleRecipe, FamilySpec};
    use crate::linalg::Scalar;
    use crate::mesh::circle_mesh;
    use crate::morphism::{identity_morphism, make_morphism};

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn circle(m: usize) -> Arc<crate::mesh::BaseMesh> {
        Arc::new(circle_mesh(m).unwrap())
    }

    #[test]
    fn invertible_needs_no_transversal() {
        let e = ProjectionField::trivial(circle(16), 2, Scalar::Real);
        let l = identity_morphism(&e);
        let t = transversal_subbundle(&l, &cfg()).unwrap();
        assert_eq!(t.dim, 0);
        let k = kernel_bundle(&l, &t.field, &cfg()).unwrap();
        assert_eq!(k.rank(), Some(0));
        let c = index_class(&l, &cfg()).unwrap();
        assert!(c.reduced.is_zero());
    }

    #[test]
    fn zero_morphism_takes_whole_target() {
        let e = ProjectionField::trivial(circle(16), 1, Scalar::Real);
        let l = make_morphism(&e, &e, vec![linalg::zeros(1, 1); 16], &cfg()).unwrap();
        let t = transversal_subbundle(&l, &cfg()).unwrap();
        assert_eq!(t.dim, 1);
        let k = kernel_bundle(&l, &t.field, &cfg()).unwrap();
        assert_eq!(k.rank(), Some(1));
        for x in 0..16 {
            assert!(linalg::dist(&k.proj[x], &e.proj[x]) < 1e-12);
        }
    }

    #[test]
    fn moebius_domain_zero_map() {
        // E(L,V) = E for L = 0, so the class is [Möbius] - [Θ].
        let base = circle(64);
        let m = moebius(base.clone());
        let f = ProjectionField::trivial(base, 1, Scalar::Real);
        let l = make_morphism(&m, &f, vec![linalg::zeros(1, 2); 64], &cfg()).unwrap();
        let c = index_class(&l, &cfg()).unwrap();
        assert_eq!(
            c.reduced,
            InvariantRecord {
                rank: 0,
                w1: vec![1],
                c1: vec![]
            }
        );
    }

    #[test]
    fn dimension_formula_on_random_families() {
        let base = circle(64);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..10 {
            let spec = FamilySpec::random(&mut rng, 6, Scalar::Real);
            let l = random_family(base.clone(), &spec, seed, &cfg()).unwrap();
            let d = index_class_detailed(&l, &cfg()).unwrap();
            let dim_v = d.transversal.dim as i64;
            for x in 0..64 {
                assert_eq!(d.class.plus.rank_at(x) as i64, l.index_at(x) + dim_v);
            }
            assert!(d.transversal.margin >= cfg().trans_margin);
            assert_eq!(d.class.reduced.rank, l.index().unwrap());
            assert!(d.class.is_consistent(&cfg()).unwrap());
        }
    }

    #[test]
    fn finite_dimensional_class_matches_domain_minus_target() {
        let base = circle(64);
        let spec = FamilySpec::new(
            BundleRecipe {
                ambient: 4,
                rank: 2,
                twisted: true,
            },
            BundleRecipe::trivial(3, 2),
            Scalar::Real,
        );
        let l = random_family(base, &spec, 4, &cfg()).unwrap();
        let c = index_class(&l, &cfg()).unwrap();
        let expected = virtual_record(&l.domain, &l.target, &cfg()).unwrap();
        assert_eq!(c.reduced, expected);
        assert_eq!(c.reduced.w1, vec![1]);
    }

    #[test]
    fn well_definedness_on_identity_and_random() {
        let e = ProjectionField::trivial(circle(16), 3, Scalar::Complex);
        let r = well_definedness_check(&identity_morphism(&e), (1, 2), &cfg()).unwrap();
        assert!(r.first.class.reduced.is_zero());
        let spec = FamilySpec::new(BundleRecipe::trivial(4, 2), BundleRecipe::trivial(4, 2), Scalar::Real);
        let l = random_family(circle(64), &spec, 9, &cfg()).unwrap();
        well_definedness_check(&l, (1, 2), &cfg()).unwrap();
    }

    #[test]
    fn classical_examples() {
        let base = circle(16);
        let e = ProjectionField::trivial(base.clone(), 2, Scalar::Real);
        let c = classical_index_class(&identity_morphism(&e), &cfg()).unwrap();
        assert!(c.reduced.is_zero());
        assert_eq!(c.plus.ambient_dim, 0);
        let d = linalg::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let l = make_morphism(&e, &e, vec![d; 16], &cfg()).unwrap();
        let c = classical_index_class(&l, &cfg()).unwrap();
        assert_eq!(c.plus.rank(), Some(1));
        assert_eq!(c.minus.rank(), Some(1));
        assert!(c.reduced.is_zero());
    }

    #[test]
    fn classical_agrees_with_general() {
        let base = circle(64);
        for seed in 0..5 {
            let spec = FamilySpec::new(BundleRecipe::trivial(3, 3), BundleRecipe::trivial(3, 3), Scalar::Real);
            let mut spec = spec;
            spec.gauge_amp = 0.0;
            let l = random_family(base.clone(), &spec, seed, &cfg()).unwrap();
            let a = classical_index_class(&l, &cfg()).unwrap();
            let b = index_class(&l, &cfg()).unwrap();
            assert_eq!(a.reduced, b.reduced);
        }
    }

    #[test]
    fn reduction_preserves_class() {
        let base = circle(64);
        let spec = FamilySpec::new(BundleRecipe::trivial(3, 2), BundleRecipe::trivial(3, 2), Scalar::Real);
        let l = random_family(base, &spec, 2, &cfg()).unwrap();
        let whole = reduce(&l, &l.target, &cfg()).unwrap();
        for x in 0..64 {
            assert!(linalg::dist(&whole.restricted.mats[x], &l.mats[x]) < 1e-10);
        }
        let t = index_class_detailed(&l, &cfg()).unwrap().transversal;
        let r = reduce(&l, &t.field, &cfg()).unwrap();
        assert!(r.equal());
        assert_eq!(r.restricted.target.ambient_dim, 3);
    }
}
