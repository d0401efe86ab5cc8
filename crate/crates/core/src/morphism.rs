//! Fredholm morphisms between projection-field bundles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::{direct_sum, pullback_bundle, ProjectionField};
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::mesh::{BaseMesh, MeshMap};

/// Matrix field `L_x : K^M -> K^N` with `Q_x L_x P_x = L_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphismField {
    pub domain: ProjectionField,
    pub target: ProjectionField,
    pub mats: Vec<CMat>,
}

const SAME_FIELD_TOL: f64 = 1e-10;

fn same_field(a: &ProjectionField, b: &ProjectionField) -> bool {
    a.same_base(b)
        && a.scalar == b.scalar
        && a.ambient_dim == b.ambient_dim
        && a.proj
            .iter()
            .zip(&b.proj)
            .all(|(x, y)| linalg::dist(x, y) <= SAME_FIELD_TOL)
}

impl MorphismField {
    pub fn base(&self) -> &BaseMesh {
        &self.domain.base
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Finite-dimensional Fredholm index `rank P_x - rank Q_x`.
    pub fn index_at(&self, v: usize) -> i64 {
        self.domain.rank_at(v) as i64 - self.target.rank_at(v) as i64
    }

    /// Common index over all vertices, when constant.
    pub fn index(&self) -> Option<i64> {
        let first = self.index_at(0);
        (1..self.len()).all(|v| self.index_at(v) == first).then_some(first)
    }

    /// Largest relative residual `||Q L P - L|| / ||L||` over vertices.
    pub fn intertwining_residual(&self) -> f64 {
        intertwining_residual(&self.domain, &self.target, &self.mats)
    }

    /// `L_x` written in orthonormal fibre bases: `B_F^* L_x B_E`.
    pub fn restricted_matrix(&self, v: usize) -> CMat {
        self.target.basis_at(v).adjoint() * &self.mats[v] * self.domain.basis_at(v)
    }

    pub fn max_norm(&self) -> f64 {
        self.mats.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    /// Fibrewise sum `L + K` of two morphisms between the same bundles.
    pub fn add(&self, k: &MorphismField) -> Result<MorphismField> {
        if !same_field(&self.domain, &k.domain) || !same_field(&self.target, &k.target) {
            return Err(Error::MiddleMismatch(
                "sum of morphisms between different bundles".into(),
            ));
        }
        Ok(MorphismField {
            domain: self.domain.clone(),
            target: self.target.clone(),
            mats: self.mats.iter().zip(&k.mats).map(|(a, b)| a + b).collect(),
        })
    }
}

pub fn intertwining_residual(e: &ProjectionField, f: &ProjectionField, mats: &[CMat]) -> f64 {
    mats.iter()
        .enumerate()
        .map(|(v, m)| {
            let n = linalg::op_norm(m);
            if n == 0.0 {
                0.0
            } else {
                linalg::op_norm(&(&f.proj[v] * m * &e.proj[v] - m)) / n
            }
        })
        .fold(0.0, f64::max)
}

/// Builds `Q_x m_x P_x` and checks the index is constant on components.
pub fn make_morphism(
    e: &ProjectionField,
    f: &ProjectionField,
    mats: Vec<CMat>,
    _cfg: &ToleranceConfig,
) -> Result<MorphismField> {
    e.check_compatible(f)?;
    if mats.len() != e.len() {
        return Err(Error::Shape(format!(
            "{} matrices for {} vertices",
            mats.len(),
            e.len()
        )));
    }
    let scalar = e.scalar;
    let mut out = Vec::with_capacity(mats.len());
    for (v, m) in mats.into_iter().enumerate() {
        if m.shape() != (f.ambient_dim, e.ambient_dim) {
            return Err(Error::Shape(format!(
                "matrix at vertex {v} has shape {:?}, expected {}x{}",
                m.shape(),
                f.ambient_dim,
                e.ambient_dim
            )));
        }
        out.push(scalar.fix(&f.proj[v] * m * &e.proj[v]));
    }
    let l = MorphismField {
        domain: e.clone(),
        target: f.clone(),
        mats: out,
    };
    let labels = l.base().components();
    for &(a, b) in &l.base().edges {
        if labels[a] == labels[b] && l.index_at(a) != l.index_at(b) {
            return Err(Error::InvalidMorphism(format!(
                "index jumps across edge ({a},{b}): {} vs {}",
                l.index_at(a),
                l.index_at(b)
            )));
        }
    }
    Ok(l)
}

/// Identity morphism of a bundle.
pub fn identity_morphism(e: &ProjectionField) -> MorphismField {
    MorphismField {
        domain: e.clone(),
        target: e.clone(),
        mats: e.proj.clone(),
    }
}

/// `M ∘ L`.
pub fn compose(m: &MorphismField, l: &MorphismField) -> Result<MorphismField> {
    if !same_field(&l.target, &m.domain) {
        return Err(Error::MiddleMismatch(
            "target of the inner morphism differs from the domain of the outer".into(),
        ));
    }
    Ok(MorphismField {
        domain: l.domain.clone(),
        target: m.target.clone(),
        mats: m.mats.iter().zip(&l.mats).map(|(a, b)| a * b).collect(),
    })
}

/// `L ⊕ M` between the block direct sums.
pub fn direct_sum_morphism(l: &MorphismField, m: &MorphismField) -> Result<MorphismField> {
    let domain = direct_sum(&l.domain, &m.domain)?;
    let target = direct_sum(&l.target, &m.target)?;
    Ok(MorphismField {
        domain,
        target,
        mats: l
            .mats
            .iter()
            .zip(&m.mats)
            .map(|(a, b)| linalg::block_diag(a, b))
            .collect(),
    })
}

/// `(f^*L)_y = L_{f(y)}`.
pub fn pullback_morphism(f: &MeshMap, l: &MorphismField) -> Result<MorphismField> {
    let domain = pullback_bundle(f, &l.domain)?;
    let mut target = pullback_bundle(f, &l.target)?;
    target.base = domain.base.clone();
    Ok(MorphismField {
        domain,
        target,
        mats: f.vertex_assignment.iter().map(|&v| l.mats[v].clone()).collect(),
    })
}

/// Random finite-rank field `K_x = Q_x A B^* P_x` with `rank K_x <= rank_bound`
/// and `||K_x|| <= magnitude`; bit-reproducible for a given seed.
pub fn random_compact_perturbation(
    l: &MorphismField,
    rank_bound: usize,
    magnitude: f64,
    seed: u64,
) -> Result<MorphismField> {
    let (n, m) = (l.target.ambient_dim, l.domain.ambient_dim);
    if rank_bound > n.min(m) {
        return Err(Error::Shape(format!(
            "rank bound {rank_bound} exceeds min ambient dimension {}",
            n.min(m)
        )));
    }
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::Shape(format!(
            "magnitude must be finite and non-negative, got {magnitude}"
        )));
    }
    let scalar = l.domain.scalar;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = linalg::random_matrix(&mut rng, n, rank_bound, scalar);
    let b = linalg::random_matrix(&mut rng, m, rank_bound, scalar);
    let core = &a * b.adjoint();
    let norm = linalg::op_norm(&core);
    let core = if norm > 0.0 { core.scale(magnitude / norm) } else { core };
    let mats = (0..l.len())
        .map(|v| scalar.fix(&l.target.proj[v] * &core * &l.domain.proj[v]))
        .collect();
    Ok(MorphismField {
        domain: l.domain.clone(),
        target: l.target.clone(),
        mats,
    })
}

/// Restriction `F'_x L_x|_{E'_x}` between subfields of the domain and target.
pub fn restrict_morphism(
    l: &MorphismField,
    e_sub: &ProjectionField,
    f_sub: &ProjectionField,
    cfg: &ToleranceConfig,
) -> Result<MorphismField> {
    l.domain.check_compatible(e_sub)?;
    l.target.check_compatible(f_sub)?;
    if e_sub.ambient_dim != l.domain.ambient_dim || f_sub.ambient_dim != l.target.ambient_dim {
        return Err(Error::Shape("restriction subfields live in different ambients".into()));
    }
    let tol = 100.0 * cfg.idem_tol;
    let scale = l.max_norm().max(f64::MIN_POSITIVE);
    let mut worst = (0usize, 0.0f64);
    let mut mats = Vec::with_capacity(l.len());
    for v in 0..l.len() {
        let le = &l.mats[v] * &e_sub.proj[v];
        let escape = linalg::op_norm(&(&le - &f_sub.proj[v] * &le)) / scale;
        if escape > worst.1 {
            worst = (v, escape);
        }
        mats.push(l.domain.scalar.fix(&f_sub.proj[v] * le));
    }
    if worst.1 > tol {
        return Err(Error::ImageEscape {
            vertex: worst.0,
            residual: worst.1,
        });
    }
    Ok(MorphismField {
        domain: e_sub.clone(),
        target: f_sub.clone(),
        mats,
    })
}
