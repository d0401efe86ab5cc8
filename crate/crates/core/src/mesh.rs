//! Finite combinatorial models of compact base spaces.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};

/// Default number of time slices for homotopies over `X x [0,1]`.
pub const DEFAULT_T_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshKind {
    Circle,
    Interval,
    Sphere,
    Product,
    Custom,
}

impl MeshKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MeshKind::Circle => "circle",
            MeshKind::Interval => "interval",
            MeshKind::Sphere => "sphere",
            MeshKind::Product => "product",
            MeshKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "circle" => MeshKind::Circle,
            "interval" => MeshKind::Interval,
            "sphere" => MeshKind::Sphere,
            "product" => MeshKind::Product,
            "custom" => MeshKind::Custom,
            _ => return None,
        })
    }
}

/// Slice decomposition of a product mesh `X x [0,1]`: vertex `(t, v)` has
/// index `t * factor.vertices + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slices {
    pub count: usize,
    pub factor: Box<BaseMesh>,
}

/// A finite mesh: vertices `0..vertices`, undirected edges, oriented faces
/// and loop generators (closed walks, the closing step is implicit).
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMesh {
    pub kind: MeshKind,
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
    pub faces: Vec<Vec<usize>>,
    pub loops: Vec<Vec<usize>>,
    pub slices: Option<Slices>,
}

fn norm_edge(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl BaseMesh {
    /// Builds and validates a mesh; edges are normalized and deduplicated.
    pub fn new(
        kind: MeshKind,
        vertices: usize,
        edges: Vec<(usize, usize)>,
        faces: Vec<Vec<usize>>,
        loops: Vec<Vec<usize>>,
        slices: Option<Slices>,
    ) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = edges.into_iter().map(|(a, b)| norm_edge(a, b)).collect();
        let mesh = Self {
            kind,
            vertices,
            edges: set.into_iter().collect(),
            faces,
            loops,
            slices,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Structural validation: references in range, cycles walk along edges.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices;
        if n == 0 {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(Error::InvalidMesh(format!("edge ({a},{b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidMesh(format!("self-loop edge at {a}")));
            }
        }
        for (what, cycles) in [("face", &self.faces), ("loop", &self.loops)] {
            for (i, c) in cycles.iter().enumerate() {
                if c.len() < 2 || (what == "face" && c.len() < 3) {
                    return Err(Error::InvalidMesh(format!("{what} {i} is too short")));
                }
                for k in 0..c.len() {
                    let (a, b) = (c[k], c[(k + 1) % c.len()]);
                    if a >= n || b >= n {
                        return Err(Error::InvalidMesh(format!("{what} {i} references vertex out of range")));
                    }
                    if !self.has_edge(a, b) {
                        return Err(Error::InvalidMesh(format!(
                            "{what} {i} steps ({a},{b}) along a non-edge"
                        )));
                    }
                }
            }
        }
        if let Some(s) = &self.slices {
            s.factor.validate()?;
            if s.count < 2 || s.count * s.factor.vertices != n {
                return Err(Error::InvalidMesh(
                    "slice decomposition inconsistent with vertex count".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&norm_edge(a, b)).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj.iter_mut().for_each(|v| v.sort_unstable());
        adj
    }

    /// Connected-component label per vertex (labels in order of first vertex).
    pub fn components(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.vertices];
        let mut next = 0;
        for s in 0..self.vertices {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if label[w] == usize::MAX {
                        label[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().max().map_or(0, |m| m + 1)
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// True when every edge used by a face is used exactly once in each direction.
    pub fn faces_closed(&self) -> bool {
        if self.faces.is_empty() {
            return false;
        }
        let mut count: HashMap<(usize, usize), i32> = HashMap::new();
        for f in &self.faces {
            for k in 0..f.len() {
                *count.entry((f[k], f[(k + 1) % f.len()])).or_default() += 1;
            }
        }
        count
            .iter()
            .all(|(&(a, b), &c)| c == 1 && count.get(&(b, a)) == Some(&1))
    }

    /// Extracts slice `t` of a product mesh together with its inclusion map.
    pub fn slice(&self, t: usize) -> Result<MeshMap> {
        let s = self
            .slices
            .as_ref()
            .ok_or_else(|| Error::InvalidMesh("mesh has no slice decomposition".into()))?;
        if t >= s.count {
            return Err(Error::InvalidMesh(format!("slice {t} out of range 0..{}", s.count)));
        }
        let n = s.factor.vertices;
        MeshMap::new((*s.factor).clone(), self.clone(), (0..n).map(|v| t * n + v).collect())
    }
}

pub fn circle_mesh(m: usize) -> Result<BaseMesh> {
    if m < 3 {
        return Err(Error::InvalidMesh(format!("circle needs at least 3 vertices, got {m}")));
    }
    let edges = (0..m).map(|j| (j, (j + 1) % m)).collect();
    BaseMesh::new(MeshKind::Circle, m, edges, vec![], vec![(0..m).collect()], None)
}

/// Angle of circle vertex `j` out of `m`.
pub fn circle_angle(j: usize, m: usize) -> f64 {
    2.0 * std::f64::consts::PI * j as f64 / m as f64
}

pub fn interval_mesh(m: usize) -> Result<BaseMesh> {
    if m < 2 {
        return Err(Error::InvalidMesh(format!(
            "interval needs at least 2 vertices, got {m}"
        )));
    }
    let edges = (0..m - 1).map(|j| (j, j + 1)).collect();
    BaseMesh::new(MeshKind::Interval, m, edges, vec![], vec![], None)
}

/// Subdivided icosahedron with outward-oriented faces.
pub fn sphere_mesh(level: usize) -> Result<BaseMesh> {
    sphere_mesh_with_coords(level).map(|(m, _)| m)
}

/// Subdivided icosahedron together with unit vertex positions.
pub fn sphere_mesh_with_coords(level: usize) -> Result<(BaseMesh, Vec<[f64; 3]>)> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pts: Vec<[f64; 3]> = Vec::new();
    for &a in &[-1.0, 1.0] {
        for &b in &[-phi, phi] {
            pts.push([a, b, 0.0]);
            pts.push([0.0, a, b]);
            pts.push([b, 0.0, a]);
        }
    }
    pts.iter_mut().for_each(normalize3);
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let edge_len2 = dist2(&pts[0], &nearest_other(&pts, 0));
    let adjacent = |i: usize, j: usize, pts: &[[f64; 3]]| (dist2(&pts[i], &pts[j]) - edge_len2).abs() < 1e-9;
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                if adjacent(i, j, &pts) && adjacent(j, k, &pts) && adjacent(i, k, &pts) {
                    faces.push([i, j, k]);
                }
            }
        }
    }
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, pts: &mut Vec<[f64; 3]>| -> usize {
            *mid.entry(norm_edge(a, b)).or_insert_with(|| {
                let mut p = [pts[a][0] + pts[b][0], pts[a][1] + pts[b][1], pts[a][2] + pts[b][2]];
                normalize3(&mut p);
                pts.push(p);
                pts.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut pts);
            let bc = midpoint(b, c, &mut pts);
            let ca = midpoint(c, a, &mut pts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    // Orient every face counterclockwise seen from outside.
    for f in faces.iter_mut() {
        let [a, b, c] = *f;
        if triple(&pts[a], &pts[b], &pts[c]) < 0.0 {
            *f = [a, c, b];
        }
    }
    let mut edges = Vec::new();
    for &[a, b, c] in &faces {
        edges.extend([(a, b), (b, c), (c, a)]);
    }
    let mesh = BaseMesh::new(
        MeshKind::Sphere,
        pts.len(),
        edges,
        faces.into_iter().map(|f| f.to_vec()).collect(),
        vec![],
        None,
    )?;
    Ok((mesh, pts))
}

fn normalize3(p: &mut [f64; 3]) {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p.iter_mut().for_each(|x| *x /= n);
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn nearest_other(pts: &[[f64; 3]], i: usize) -> [f64; 3] {
    let mut best = (f64::INFINITY, pts[0]);
    for (j, p) in pts.iter().enumerate() {
        let d = dist2(&pts[i], p);
        if j != i && d < best.0 {
            best = (d, *p);
        }
    }
    best.1
}

fn triple(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    n[0] * a[0] + n[1] * a[1] + n[2] * a[2]
}

/// `X x [0,1]` sampled at `t_steps` slices. Loops and faces of `X` are
/// carried on slice 0, which generates the same invariants.
pub fn product_with_interval(x: &BaseMesh, t_steps: usize) -> Result<BaseMesh> {
    if t_steps < 2 {
        return Err(Error::InvalidMesh(format!("t_steps must be >= 2, got {t_steps}")));
    }
    let n = x.vertices;
    let mut edges = Vec::with_capacity(t_steps * x.edges.len() + (t_steps - 1) * n);
    for t in 0..t_steps {
        edges.extend(x.edges.iter().map(|&(a, b)| (t * n + a, t * n + b)));
        if t + 1 < t_steps {
            edges.extend((0..n).map(|v| (t * n + v, (t + 1) * n + v)));
        }
    }
    BaseMesh::new(
        MeshKind::Product,
        n * t_steps,
        edges,
        x.faces.clone(),
        x.loops.clone(),
        Some(Slices {
            count: t_steps,
            factor: Box::new(x.clone()),
        }),
    )
}

/// A vertex map between meshes sending edges to edges or single vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshMap {
    pub source: BaseMesh,
    pub target: BaseMesh,
    pub vertex_assignment: Vec<usize>,
}

impl MeshMap {
    pub fn new(source: BaseMesh, target: BaseMesh, vertex_assignment: Vec<usize>) -> Result<Self> {
        if vertex_assignment.len() != source.vertices {
            return Err(Error::InvalidMesh(format!(
                "assignment has {} entries for {} source vertices",
                vertex_assignment.len(),
                source.vertices
            )));
        }
        if let Some(&bad) = vertex_assignment.iter().find(|&&v| v >= target.vertices) {
            return Err(Error::InvalidMesh(format!("assignment targets missing vertex {bad}")));
        }
        for &(a, b) in &source.edges {
            let (fa, fb) = (vertex_assignment[a], vertex_assignment[b]);
            if fa != fb && !target.has_edge(fa, fb) {
                return Err(Error::InvalidMesh(format!(
                    "source edge ({a},{b}) maps to non-edge ({fa},{fb})"
                )));
            }
        }
        Ok(Self {
            source,
            target,
            vertex_assignment,
        })
    }

    pub fn identity(mesh: &BaseMesh) -> Self {
        Self {
            source: mesh.clone(),
            target: mesh.clone(),
            vertex_assignment: (0..mesh.vertices).collect(),
        }
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &MeshMap) -> Result<MeshMap> {
        if self.target != other.source {
            return Err(Error::BaseMismatch("composed maps do not share a middle mesh".into()));
        }
        MeshMap::new(
            self.source.clone(),
            other.target.clone(),
            self.vertex_assignment
                .iter()
                .map(|&v| other.vertex_assignment[v])
                .collect(),
        )
    }

    pub fn apply(&self, v: usize) -> usize {
        self.vertex_assignment[v]
    }

    /// Signed number of times the image of `source_loop` winds around `target_loop`.
    pub fn winding(&self, source_loop: &[usize], target_loop: &[usize]) -> i64 {
        let len = target_loop.len();
        let pos: HashMap<usize, usize> = target_loop.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut steps = 0i64;
        for k in 0..source_loop.len() {
            let a = self.apply(source_loop[k]);
            let b = self.apply(source_loop[(k + 1) % source_loop.len()]);
            if a == b {
                continue;
            }
            match (pos.get(&a), pos.get(&b)) {
                (Some(&i), Some(&j)) if (i + 1) % len == j => steps += 1,
                (Some(&i), Some(&j)) if (j + 1) % len == i => steps -= 1,
                _ => {}
            }
        }
        steps / len as i64
    }
}

/// Degree-`d` self-map of the circle: source `circle_mesh(|d| m)` (or
/// `circle_mesh(m)` for `d = 0`), vertex `j ↦ sign(d) j mod m`.
pub fn circle_power_map(m: usize, d: i64) -> Result<MeshMap> {
    let target = circle_mesh(m)?;
    if d == 0 {
        return MeshMap::new(target.clone(), target, vec![0; m]);
    }
    let source = circle_mesh(d.unsigned_abs() as usize * m)?;
    let assignment = (0..source.vertices)
        .map(|j| {
            let step = if d > 0 { j as i64 } else { -(j as i64) };
            step.rem_euclid(m as i64) as usize
        })
        .collect();
    MeshMap::new(source, target, assignment)
}

/// Breadth-first distances from a vertex set (usize::MAX when unreachable).
pub fn bfs_distances(mesh: &BaseMesh, sources: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let adj = mesh.adjacency();
    let mut dist = vec![usize::MAX; mesh.vertices];
    let mut origin = vec![usize::MAX; mesh.vertices];
    let mut queue = VecDeque::new();
    let mut sorted = sources.to_vec();
    sorted.sort_unstable();
    for &s in &sorted {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            origin[s] = s;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                origin[w] = origin[v];
                queue.push_back(w);
            }
        }
    }
    (dist, origin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_counts() {
        let c = circle_mesh(4).unwrap();
        assert_eq!(
            (c.vertices, c.edges.len(), c.loops.len(), c.loops[0].len()),
            (4, 4, 1, 4)
        );
        let c = circle_mesh(3).unwrap();
        assert_eq!((c.vertices, c.edges.len()), (3, 3));
        let c = circle_mesh(64).unwrap();
        assert_eq!(c.loops[0].len(), 64);
        assert!(c.adjacency().iter().all(|n| n.len() == 2));
        assert!(c.faces.is_empty());
        assert!(matches!(circle_mesh(2), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn sphere_counts() {
        for (level, v, e, f) in [(0, 12, 30, 20), (1, 42, 120, 80), (2, 162, 480, 320)] {
            let s = sphere_mesh(level).unwrap();
            assert_eq!((s.vertices, s.edges.len(), s.faces.len()), (v, e, f), "level {level}");
            assert_eq!(s.euler_characteristic(), 2);
            assert!(s.faces_closed());
            assert!(s.loops.is_empty());
        }
    }

    #[test]
    fn sphere_faces_point_outward() {
        let (s, pts) = sphere_mesh_with_coords(1).unwrap();
        for f in &s.faces {
            assert!(triple(&pts[f[0]], &pts[f[1]], &pts[f[2]]) > 0.0);
        }
    }

    #[test]
    fn prism_and_grid() {
        let p = product_with_interval(&circle_mesh(4).unwrap(), 2).unwrap();
        assert_eq!(p.vertices, 8);
        assert_eq!(p.edges.len(), 12);
        let g = product_with_interval(&interval_mesh(3).unwrap(), 3).unwrap();
        assert_eq!(g.vertices, 9);
        assert_eq!(g.edges.len(), 12);
        assert!(matches!(
            product_with_interval(&circle_mesh(4).unwrap(), 1),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn slices_recover_factor() {
        let x = circle_mesh(5).unwrap();
        let p = product_with_interval(&x, 4).unwrap();
        for t in [0, 3] {
            let inc = p.slice(t).unwrap();
            assert_eq!(inc.source, x);
            for &(a, b) in &x.edges {
                assert!(p.has_edge(inc.apply(a), inc.apply(b)));
            }
        }
        assert!(p.slice(4).is_err());
    }

    #[test]
    fn power_maps() {
        let id = circle_power_map(8, 1).unwrap();
        assert_eq!(id.vertex_assignment, (0..8).collect::<Vec<_>>());
        let two = circle_power_map(8, 2).unwrap();
        assert_eq!(two.source.vertices, 16);
        assert_eq!(two.vertex_assignment[9], 1);
        let zero = circle_power_map(8, 0).unwrap();
        assert!(zero.vertex_assignment.iter().all(|&v| v == 0));
        for d in [-3, -1, 0, 1, 2, 3] {
            let f = circle_power_map(8, d).unwrap();
            assert_eq!(f.winding(&f.source.loops[0], &f.target.loops[0]), d);
        }
    }

    #[test]
    fn invalid_meshes_rejected() {
        let bad = BaseMesh::new(MeshKind::Custom, 3, vec![(0, 1)], vec![], vec![vec![0, 1, 2]], None);
        assert!(matches!(bad, Err(Error::InvalidMesh(_))));
        let bad = BaseMesh::new(MeshKind::Custom, 2, vec![(0, 5)], vec![], vec![], None);
        assert!(bad.is_err());
    }
}
