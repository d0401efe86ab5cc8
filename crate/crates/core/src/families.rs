//! Standard bundles and randomized smooth families used as test vehicles:
//! the Möbius line, the Bott projector, and random twisted families over
//! circles, intervals and their products with `[0,1]`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bundle::ProjectionField;
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Scalar};
use crate::mesh::{circle_angle, BaseMesh, MeshKind};
use crate::morphism::{make_morphism, MorphismField};

/// Möbius line `P_j = u_j u_j^T`, `u_j = (cos θ_j/2, sin θ_j/2)` over a circle mesh.
pub fn moebius(base: Arc<BaseMesh>) -> ProjectionField {
    let m = base.vertices;
    let proj = (0..m).map(|j| half_angle_line(circle_angle(j, m))).collect();
    ProjectionField::new(base, 2, Scalar::Real, proj).expect("2x2 projectors")
}

fn half_angle_line(theta: f64) -> CMat {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    linalg::from_real(2, 2, &[c * c, c * s, c * s, s * s])
}

/// Rank-one Bott projector `(I + x·σ)/2` sampled at unit vectors.
pub fn bott(base: Arc<BaseMesh>, coords: &[[f64; 3]]) -> Result<ProjectionField> {
    if coords.len() != base.vertices {
        return Err(Error::Shape("one coordinate triple per vertex required".into()));
    }
    let proj = coords.iter().map(bott_projector).collect();
    ProjectionField::new(base, 2, Scalar::Complex, proj)
}

pub fn bott_projector(x: &[f64; 3]) -> CMat {
    let h = |re: f64, im: f64| Complex64::new(re, im);
    CMat::from_row_slice(
        2,
        2,
        &[
            h((1.0 + x[2]) / 2.0, 0.0),
            h(x[0] / 2.0, -x[1] / 2.0),
            h(x[0] / 2.0, x[1] / 2.0),
            h((1.0 - x[2]) / 2.0, 0.0),
        ],
    )
}

/// Constant rank-one field spanned by `v`.
pub fn constant_line(base: Arc<BaseMesh>, v: &[f64], scalar: Scalar) -> ProjectionField {
    let n = v.len();
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let p = CMat::from_fn(n, n, |i, j| Complex64::new(v[i] * v[j] / norm2, 0.0));
    ProjectionField::constant(base, scalar, p).expect("square")
}

/// Parameter of a vertex: an angle (circle, interval) and a time in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub angle: f64,
    pub time: f64,
}

/// Angle/time coordinates for circle, interval and product-with-interval meshes.
pub fn chart(mesh: &BaseMesh) -> Result<Vec<ChartPoint>> {
    let flat = |m: &BaseMesh| -> Result<Vec<f64>> {
        match m.kind {
            MeshKind::Circle => Ok((0..m.vertices).map(|j| circle_angle(j, m.vertices)).collect()),
            MeshKind::Interval => Ok((0..m.vertices)
                .map(|j| PI * j as f64 / (m.vertices - 1) as f64)
                .collect()),
            other => Err(Error::UndecidableBase(format!(
                "no angle chart for {} meshes",
                other.as_str()
            ))),
        }
    };
    match (&mesh.kind, &mesh.slices) {
        (MeshKind::Product, Some(s)) => {
            let angles = flat(&s.factor)?;
            let mut pts = Vec::with_capacity(mesh.vertices);
            for t in 0..s.count {
                let time = t as f64 / (s.count - 1) as f64;
                pts.extend(angles.iter().map(|&angle| ChartPoint { angle, time }));
            }
            Ok(pts)
        }
        _ => Ok(flat(mesh)?
            .into_iter()
            .map(|angle| ChartPoint { angle, time: 0.0 })
            .collect()),
    }
}

/// Smooth matrix-valued function `A0 + A1 cos θ + B1 sin θ + t C`.
#[derive(Debug, Clone)]
pub struct SmoothMatrix {
    pub constant: CMat,
    pub cos: CMat,
    pub sin: CMat,
    pub time: CMat,
}

impl SmoothMatrix {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scalar: Scalar, amp: [f64; 3]) -> Self {
        Self {
            constant: linalg::random_matrix(rng, rows, cols, scalar),
            cos: linalg::random_matrix(rng, rows, cols, scalar).scale(amp[0]),
            sin: linalg::random_matrix(rng, rows, cols, scalar).scale(amp[1]),
            time: linalg::random_matrix(rng, rows, cols, scalar).scale(amp[2]),
        }
    }

    pub fn eval(&self, p: ChartPoint) -> CMat {
        &self.constant + self.cos.scale(p.angle.cos()) + self.sin.scale(p.angle.sin()) + self.time.scale(p.time)
    }
}

/// Smooth unitary (orthogonal for real scalars) gauge `exp(S(θ, t))`.
#[derive(Debug, Clone)]
pub struct SmoothGauge {
    generator: SmoothMatrix,
}

impl SmoothGauge {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize, scalar: Scalar, amp: f64) -> Self {
        let mut g = SmoothMatrix::random(rng, n, n, scalar, [amp, amp, amp]);
        g.constant = g.constant.scale(2.0);
        for m in [&mut g.constant, &mut g.cos, &mut g.sin, &mut g.time] {
            *m = (&*m - m.adjoint()).scale(0.5);
        }
        Self { generator: g }
    }

    pub fn eval(&self, p: ChartPoint) -> CMat {
        self.generator.eval(p).exp()
    }
}

/// Shape of a random bundle: rank inside `K^ambient`, optionally containing
/// a Möbius summand (rank one twisted block in the first two coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleRecipe {
    pub ambient: usize,
    pub rank: usize,
    pub twisted: bool,
}

impl BundleRecipe {
    pub fn trivial(ambient: usize, rank: usize) -> Self {
        Self {
            ambient,
            rank,
            twisted: false,
        }
    }

    fn check(&self) -> Result<()> {
        let need = if self.twisted { self.rank + 1 } else { self.rank };
        if self.rank > self.ambient || need > self.ambient || (self.twisted && self.rank == 0) {
            return Err(Error::Shape(format!("bundle recipe {self:?} does not fit its ambient")));
        }
        Ok(())
    }

    fn model(&self, p: ChartPoint) -> CMat {
        let n = self.ambient;
        let mut m = linalg::zeros(n, n);
        let mut start = 0;
        if self.twisted {
            m.view_mut((0, 0), (2, 2)).copy_from(&half_angle_line(p.angle));
            start = 2;
        }
        let plain = if self.twisted { self.rank - 1 } else { self.rank };
        for i in start..start + plain {
            m[(i, i)] = linalg::ONE;
        }
        m
    }
}

/// `U(p) P0(p) U(p)^*` for a random smooth gauge `U`.
pub fn random_bundle<R: Rng + ?Sized>(
    base: Arc<BaseMesh>,
    points: &[ChartPoint],
    recipe: BundleRecipe,
    scalar: Scalar,
    amp: f64,
    rng: &mut R,
) -> Result<ProjectionField> {
    recipe.check()?;
    let gauge = SmoothGauge::random(rng, recipe.ambient, scalar, amp);
    let proj = points
        .iter()
        .map(|&p| {
            let u = gauge.eval(p);
            linalg::clean_projector(&(&u * recipe.model(p) * u.adjoint()), scalar)
        })
        .collect();
    ProjectionField::new(base, recipe.ambient, scalar, proj)
}

/// Parameters of a randomized Fredholm family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub domain: BundleRecipe,
    pub target: BundleRecipe,
    pub scalar: Scalar,
    /// Gauge generator amplitude per Fourier mode.
    pub gauge_amp: f64,
    /// Relative amplitude of the varying part of the matrix field.
    pub matrix_amp: f64,
    /// When set, the matrix field factors through `K^inner_rank`.
    pub inner_rank: Option<usize>,
}

impl FamilySpec {
    pub fn new(domain: BundleRecipe, target: BundleRecipe, scalar: Scalar) -> Self {
        Self {
            domain,
            target,
            scalar,
            gauge_amp: 0.03,
            matrix_amp: 0.3,
            inner_rank: None,
        }
    }

    /// Random shapes with ambient dimensions at most `max_ambient`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_ambient: usize, scalar: Scalar) -> Self {
        let recipe = |rng: &mut R| {
            let ambient = rng.random_range(2..=max_ambient);
            let twisted = scalar == Scalar::Real && rng.random_bool(0.5);
            let lo = if twisted { 1 } else { 0 };
            let hi = if twisted { ambient - 1 } else { ambient };
            let rank = rng.random_range(lo.max(1)..=hi.max(lo.max(1)));
            BundleRecipe { ambient, rank, twisted }
        };
        let domain = recipe(rng);
        let target = recipe(rng);
        let mut spec = Self::new(domain, target, scalar);
        if rng.random_bool(0.25) {
            spec.inner_rank = Some(rng.random_range(0..=domain.rank.min(target.rank)));
        }
        spec
    }
}

/// Random smooth morphism field `Q (A(p)) P` between the given bundles.
pub fn random_morphism<R: Rng + ?Sized>(
    e: &ProjectionField,
    f: &ProjectionField,
    points: &[ChartPoint],
    matrix_amp: f64,
    inner_rank: Option<usize>,
    rng: &mut R,
    cfg: &ToleranceConfig,
) -> Result<MorphismField> {
    let scalar = e.scalar;
    let amp = [matrix_amp, matrix_amp, matrix_amp];
    let mats: Vec<CMat> = match inner_rank {
        None => {
            let a = SmoothMatrix::random(rng, f.ambient_dim, e.ambient_dim, scalar, amp);
            points.iter().map(|&p| a.eval(p)).collect()
        }
        Some(r) => {
            let a = SmoothMatrix::random(rng, f.ambient_dim, r, scalar, amp);
            let b = SmoothMatrix::random(rng, r, e.ambient_dim, scalar, amp);
            points.iter().map(|&p| a.eval(p) * b.eval(p)).collect()
        }
    };
    make_morphism(e, f, mats, cfg)
}

/// A random family over `mesh` drawn from `spec`, reproducible from `seed`.
pub fn random_family(
    mesh: Arc<BaseMesh>,
    spec: &FamilySpec,
    seed: u64,
    cfg: &ToleranceConfig,
) -> Result<MorphismField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = chart(&mesh)?;
    let e = random_bundle(
        mesh.clone(),
        &points,
        spec.domain,
        spec.scalar,
        spec.gauge_amp,
        &mut rng,
    )?
    .validated(cfg)?;
    let f = random_bundle(mesh, &points, spec.target, spec.scalar, spec.gauge_amp, &mut rng)?.validated(cfg)?;
    random_morphism(&e, &f, &points, spec.matrix_amp, spec.inner_rank, &mut rng, cfg)
}
