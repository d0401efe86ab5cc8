//! Reduction of projection fields and virtual bundles to computable
//! K-theory invariants: rank, `w1` per loop generator (real bundles) and
//! `c1` per closed oriented surface (complex bundles).
//!
//! `w1` is the sign of the holonomy determinant of an orthonormal frame
//! transported around a loop by orthogonal Procrustes alignment. `c1` is the
//! sum over faces of the phase of the product of overlap determinants
//! `det(B_a^* B_b)` around each face, divided by `2π`. Sphere faces are
//! oriented counterclockwise when seen from outside; with that convention the
//! Bott projector `(I + x·σ)/2` has `c1 = +1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bundle::ProjectionField;
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::index::VirtualBundle;
use crate::linalg::{CMat, Scalar};
use crate::mesh::{BaseMesh, MeshKind};

/// Reduced invariants of a (virtual) bundle on a supported base.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InvariantRecord {
    pub rank: i64,
    /// One bit per loop generator; present for real bundles only.
    pub w1: Vec<u8>,
    /// One integer per closed oriented surface; present for complex bundles only.
    pub c1: Vec<i64>,
}

impl InvariantRecord {
    /// Invariants of `[a] - [b]`.
    pub fn difference(&self, other: &InvariantRecord) -> InvariantRecord {
        InvariantRecord {
            rank: self.rank - other.rank,
            w1: self.w1.iter().zip(&other.w1).map(|(a, b)| a ^ b).collect(),
            c1: self.c1.iter().zip(&other.c1).map(|(a, b)| a - b).collect(),
        }
    }

    /// Invariants of `[a] + [b]`.
    pub fn sum(&self, other: &InvariantRecord) -> InvariantRecord {
        InvariantRecord {
            rank: self.rank + other.rank,
            w1: self.w1.iter().zip(&other.w1).map(|(a, b)| a ^ b).collect(),
            c1: self.c1.iter().zip(&other.c1).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rank == 0 && self.w1.iter().all(|&b| b == 0) && self.c1.iter().all(|&c| c == 0)
    }

    /// Human-readable list of the non-vanishing invariants.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rank != 0 {
            out.push(format!("rank = {}", self.rank));
        }
        for (i, b) in self.w1.iter().enumerate().filter(|(_, &b)| b != 0) {
            out.push(format!("w1[{i}] = {b}"));
        }
        for (i, c) in self.c1.iter().enumerate().filter(|(_, &c)| c != 0) {
            out.push(format!("c1[{i}] = {c}"));
        }
        out
    }
}

fn real_part(m: &CMat) -> DMatrix<f64> {
    m.map(|z| z.re)
}

fn check_edge(p: &ProjectionField, a: usize, b: usize, cfg: &ToleranceConfig) -> Result<()> {
    let gap = p.edge_gap(a, b);
    if gap >= cfg.max_edge_gap() {
        return Err(Error::TransportUndefined { a, b, gap });
    }
    Ok(())
}

/// Polar factor `U V^T` of a square real matrix.
fn polar_real(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

/// Transports an orthonormal frame of `p` along `walk` (closed when the
/// last vertex equals the first) and returns the final frame.
pub(crate) fn transport_real(
    p: &ProjectionField,
    walk: &[usize],
    start: DMatrix<f64>,
    cfg: &ToleranceConfig,
) -> Result<DMatrix<f64>> {
    let mut frame = start;
    for w in walk.windows(2) {
        check_edge(p, w[0], w[1], cfg)?;
        let b = real_part(&p.basis_at(w[1]));
        let overlap = b.transpose() * &frame;
        frame = b * polar_real(&overlap);
    }
    Ok(frame)
}

/// First Stiefel–Whitney bit of a real bundle along a closed loop.
pub fn w1_loop(p: &ProjectionField, lp: &[usize], cfg: &ToleranceConfig) -> Result<u8> {
    if p.scalar != Scalar::Real {
        return Err(Error::ScalarMismatch {
            expected: "real".into(),
            found: p.scalar.as_str().into(),
        });
    }
    if lp.is_empty() || p.rank_at(lp[0]) == 0 {
        return Ok(0);
    }
    let start = real_part(&p.basis_at(lp[0]));
    let mut walk = lp.to_vec();
    walk.push(lp[0]);
    let end = transport_real(p, &walk, start.clone(), cfg)?;
    let holonomy = start.transpose() * end;
    Ok(if holonomy.determinant() < 0.0 { 1 } else { 0 })
}

/// First Chern number of a complex bundle over a closed oriented face set.
pub fn c1_surface(p: &ProjectionField, faces: &[Vec<usize>], cfg: &ToleranceConfig) -> Result<i64> {
    if p.scalar != Scalar::Complex {
        return Err(Error::ScalarMismatch {
            expected: "complex".into(),
            found: p.scalar.as_str().into(),
        });
    }
    let frames: Vec<CMat> = (0..p.len()).map(|v| p.basis_at(v)).collect();
    let mut total = 0.0;
    for face in faces {
        let mut prod = Complex64::new(1.0, 0.0);
        for k in 0..face.len() {
            let (a, b) = (face[k], face[(k + 1) % face.len()]);
            check_edge(p, a, b, cfg)?;
            let overlap = frames[a].adjoint() * &frames[b];
            let d = if overlap.nrows() == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                overlap.determinant()
            };
            prod *= d / d.norm();
        }
        total += prod.arg();
    }
    let turns = total / (2.0 * PI);
    let rounded = turns.round();
    if (turns - rounded).abs() > 1e-6 {
        return Err(Error::MeshTooCoarse { total: turns });
    }
    Ok(rounded as i64)
}

/// Rank on the first vertex, checked constant over all vertices.
pub fn rank_of_field(p: &ProjectionField) -> Result<i64> {
    p.rank()
        .map(|r| r as i64)
        .ok_or_else(|| Error::UndecidableBase("rank differs between components".into()))
}

pub fn rank_of(v: &VirtualBundle) -> Result<i64> {
    Ok(rank_of_field(&v.plus)? - rank_of_field(&v.minus)?)
}

/// Full invariant record of a single bundle.
pub fn field_record(p: &ProjectionField, cfg: &ToleranceConfig) -> Result<InvariantRecord> {
    let rank = rank_of_field(p)?;
    let w1 = match p.scalar {
        Scalar::Real => p
            .base
            .loops
            .iter()
            .map(|lp| w1_loop(p, lp, cfg))
            .collect::<Result<Vec<_>>>()?,
        Scalar::Complex => Vec::new(),
    };
    let c1 = match p.scalar {
        Scalar::Complex if p.base.faces_closed() => vec![c1_surface(p, &p.base.faces, cfg)?],
        _ => Vec::new(),
    };
    Ok(InvariantRecord { rank, w1, c1 })
}

/// Invariants of `[plus] - [minus]`.
pub fn virtual_record(
    plus: &ProjectionField,
    minus: &ProjectionField,
    cfg: &ToleranceConfig,
) -> Result<InvariantRecord> {
    plus.check_compatible(minus)?;
    Ok(field_record(plus, cfg)?.difference(&field_record(minus, cfg)?))
}

/// Whether the record above decides stable triviality on this base.
pub fn check_decidable(base: &BaseMesh, scalar: Scalar) -> Result<()> {
    if base.component_count() != 1 {
        return Err(Error::UndecidableBase("base mesh is disconnected".into()));
    }
    decidable_kind(base, scalar)
}

fn decidable_kind(base: &BaseMesh, scalar: Scalar) -> Result<()> {
    match base.kind {
        MeshKind::Circle | MeshKind::Interval => Ok(()),
        MeshKind::Sphere if scalar == Scalar::Complex => Ok(()),
        MeshKind::Sphere => Err(Error::UndecidableBase(
            "real bundles over the sphere carry w2, which is not computed".into(),
        )),
        MeshKind::Product => match &base.slices {
            Some(s) => decidable_kind(&s.factor, scalar),
            None => Err(Error::UndecidableBase("product mesh without slice data".into())),
        },
        MeshKind::Custom => Err(Error::UndecidableBase(
            "custom meshes may carry classes the record does not separate".into(),
        )),
    }
}

/// Decision plus certificate listing violated invariants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableTriviality {
    pub trivial: bool,
    pub certificate: Vec<String>,
}

pub fn is_stably_trivial(v: &VirtualBundle) -> Result<StableTriviality> {
    check_decidable(&v.plus.base, v.plus.scalar)?;
    let certificate = v.reduced.violations();
    Ok(StableTriviality {
        trivial: certificate.is_empty(),
        certificate,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::bundle::{complement, direct_sum, pullback_bundle};
    use crate::families::{bott, constant_line, moebius};
    use crate::mesh::{circle_mesh, circle_power_map, sphere_mesh_with_coords};

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn w1_of_standard_fields() {
        let base = Arc::new(circle_mesh(64).unwrap());
        let lp = base.loops[0].clone();
        let c = constant_line(base.clone(), &[1.0, 0.0], Scalar::Real);
        assert_eq!(w1_loop(&c, &lp, &cfg()).unwrap(), 0);
        let m = moebius(base.clone());
        assert_eq!(w1_loop(&m, &lp, &cfg()).unwrap(), 1);
        let mm = direct_sum(&m, &m).unwrap();
        assert_eq!(w1_loop(&mm, &lp, &cfg()).unwrap(), 0);
    }

    #[test]
    fn w1_is_refinement_stable() {
        for m in [16, 32, 64, 128, 256] {
            let base = Arc::new(circle_mesh(m).unwrap());
            assert_eq!(
                w1_loop(&moebius(base.clone()), &base.loops[0], &cfg()).unwrap(),
                1,
                "m = {m}"
            );
        }
    }

    #[test]
    fn w1_pulls_back_by_degree() {
        let base = Arc::new(circle_mesh(16).unwrap());
        let m = moebius(base);
        for d in [-2i64, -1, 0, 1, 2, 3] {
            let f = circle_power_map(16, d).unwrap();
            let p = pullback_bundle(&f, &m).unwrap();
            assert_eq!(w1_loop(&p, &p.base.loops[0], &cfg()).unwrap() as i64, d.rem_euclid(2));
        }
    }

    #[test]
    fn transport_undefined_on_big_gap() {
        let base = Arc::new(circle_mesh(4).unwrap());
        let m = moebius(base.clone());
        assert!(matches!(
            w1_loop(&m, &base.loops[0], &cfg()),
            Err(Error::TransportUndefined { .. })
        ));
    }

    #[test]
    fn w1_needs_real_scalars() {
        let base = Arc::new(circle_mesh(8).unwrap());
        let c = constant_line(base.clone(), &[1.0, 0.0], Scalar::Complex);
        assert!(matches!(
            w1_loop(&c, &base.loops[0], &cfg()),
            Err(Error::ScalarMismatch { .. })
        ));
    }

    #[test]
    fn bott_c1_and_additivity() {
        let mut values = Vec::new();
        for level in [1, 2] {
            let (mesh, coords) = sphere_mesh_with_coords(level).unwrap();
            let mesh = Arc::new(mesh);
            let b = bott(mesh.clone(), &coords).unwrap();
            let c = c1_surface(&b, &mesh.faces, &cfg()).unwrap();
            values.push(c);
            let comp = complement(&b, None, &cfg()).unwrap();
            let cc = c1_surface(&comp, &mesh.faces, &cfg()).unwrap();
            assert_eq!(c + cc, 0);
            let sum = direct_sum(&b, &comp).unwrap();
            assert_eq!(c1_surface(&sum, &mesh.faces, &cfg()).unwrap(), 0);
            let constant = constant_line(mesh.clone(), &[1.0, 0.0], Scalar::Complex);
            assert_eq!(c1_surface(&constant, &mesh.faces, &cfg()).unwrap(), 0);
        }
        assert_eq!(values[0], values[1]);
        assert_eq!(values[0], 1);
    }

    #[test]
    fn records_and_certificates() {
        let base = Arc::new(circle_mesh(32).unwrap());
        let m = moebius(base.clone());
        let triv = ProjectionField::trivial(base, 1, Scalar::Real);
        let rec = virtual_record(&m, &triv, &cfg()).unwrap();
        assert_eq!(
            rec,
            InvariantRecord {
                rank: 0,
                w1: vec![1],
                c1: vec![]
            }
        );
        assert_eq!(rec.violations(), vec!["w1[0] = 1".to_string()]);
        assert!(virtual_record(&triv, &triv, &cfg()).unwrap().is_zero());
    }

    #[test]
    fn decidability() {
        let (s, _) = sphere_mesh_with_coords(0).unwrap();
        assert!(check_decidable(&s, Scalar::Complex).is_ok());
        assert!(matches!(
            check_decidable(&s, Scalar::Real),
            Err(Error::UndecidableBase(_))
        ));
        let c = circle_mesh(8).unwrap();
        let torus_like =
            crate::mesh::BaseMesh::new(MeshKind::Custom, 8, c.edges.clone(), vec![], vec![], None).unwrap();
        assert!(matches!(
            check_decidable(&torus_like, Scalar::Real),
            Err(Error::UndecidableBase(_))
        ));
        let p = crate::mesh::product_with_interval(&c, 3).unwrap();
        assert!(check_decidable(&p, Scalar::Real).is_ok());
    }
}
