//! JSON persistence.
//!
//! Documents are emitted canonically: object keys sorted, floats in
//! `{:.16e}` (17 significant digits), integers verbatim. Parsing reports the
//! JSON pointer of the offending value.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::bundle::ProjectionField;
use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::index::IndexComputation;
use crate::invariants::InvariantRecord;
use crate::linalg::{CMat, Scalar};
use crate::mesh::{BaseMesh, MeshKind, MeshMap, Slices};
use crate::morphism::MorphismField;

/// Canonical text of a JSON value, newline terminated.
pub fn to_canonical(v: &Value) -> Result<String> {
    let mut out = String::new();
    emit(v, 0, &mut out)?;
    out.push('\n');
    Ok(out)
}

fn is_flat(v: &Value) -> bool {
    match v {
        Value::Array(items) => items.iter().all(is_flat),
        Value::Object(_) => false,
        _ => true,
    }
}

fn emit_number(n: &serde_json::Number, out: &mut String) -> Result<()> {
    if let Some(i) = n.as_i64() {
        write!(out, "{i}").unwrap();
    } else if let Some(u) = n.as_u64() {
        write!(out, "{u}").unwrap();
    } else {
        let f = n.as_f64().unwrap_or(f64::NAN);
        if !f.is_finite() {
            return Err(Error::Internal(format!("non-finite float {f} in document")));
        }
        write!(out, "{f:.16e}").unwrap();
    }
    Ok(())
}

fn emit(v: &Value, depth: usize, out: &mut String) -> Result<()> {
    let pad = |d: usize, out: &mut String| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => emit_number(n, out)?,
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_flat) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                emit(item, depth, out)?;
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                emit(item, depth + 1, out)?;
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(depth + 1, out);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                emit(&map[k.as_str()], depth + 1, out)?;
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(depth, out);
            out.push('}');
        }
    }
    Ok(())
}

/// Parses text, naming `origin` in syntax errors.
pub fn parse_text(text: &str, origin: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: format!("line {} column {}: {e}", e.line(), e.column()),
    })
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_text(&text, &path.display().to_string())
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    std::fs::write(path, to_canonical(v)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Cursor into a document that remembers its JSON pointer.
struct At<'a> {
    value: &'a Value,
    pointer: String,
}

fn escape_token(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

impl<'a> At<'a> {
    fn root(value: &'a Value) -> Self {
        Self {
            value,
            pointer: String::new(),
        }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Parse {
            path: if self.pointer.is_empty() {
                "/".into()
            } else {
                self.pointer.clone()
            },
            message: message.into(),
        })
    }

    fn field(&self, key: &str) -> Result<At<'a>> {
        let Value::Object(map) = self.value else {
            return self.fail("expected an object");
        };
        match map.get(key) {
            Some(v) => Ok(At {
                value: v,
                pointer: format!("{}/{}", self.pointer, escape_token(key)),
            }),
            None => At {
                value: self.value,
                pointer: format!("{}/{}", self.pointer, escape_token(key)),
            }
            .fail("missing field"),
        }
    }

    fn optional(&self, key: &str) -> Result<Option<At<'a>>> {
        let Value::Object(map) = self.value else {
            return self.fail("expected an object");
        };
        Ok(map.get(key).filter(|v| !v.is_null()).map(|v| At {
            value: v,
            pointer: format!("{}/{}", self.pointer, escape_token(key)),
        }))
    }

    fn items(&self) -> Result<Vec<At<'a>>> {
        let Value::Array(items) = self.value else {
            return self.fail("expected an array");
        };
        Ok(items
            .iter()
            .enumerate()
            .map(|(i, v)| At {
                value: v,
                pointer: format!("{}/{i}", self.pointer),
            })
            .collect())
    }

    fn usize(&self) -> Result<usize> {
        match self.value.as_u64() {
            Some(u) => Ok(u as usize),
            None => self.fail("expected a non-negative integer"),
        }
    }

    fn i64(&self) -> Result<i64> {
        match self.value.as_i64() {
            Some(i) => Ok(i),
            None => self.fail("expected an integer"),
        }
    }

    fn f64(&self) -> Result<f64> {
        match self.value.as_f64() {
            Some(f) => Ok(f),
            None => self.fail("expected a number"),
        }
    }

    fn str(&self) -> Result<&'a str> {
        match self.value.as_str() {
            Some(s) => Ok(s),
            None => self.fail("expected a string"),
        }
    }

    fn usize_list(&self) -> Result<Vec<usize>> {
        self.items()?.iter().map(At::usize).collect()
    }
}

/// Attaches the document origin to a parse error path.
fn locate<T>(origin: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { path, message } if !origin.is_empty() => Error::Parse {
            path: format!("{origin}#{path}"),
            message,
        },
        other => other,
    })
}

// Meshes.

pub fn mesh_to_json(m: &BaseMesh) -> Value {
    let mut obj = Map::new();
    obj.insert("kind".into(), json!(m.kind.as_str()));
    obj.insert("vertices".into(), json!(m.vertices));
    obj.insert(
        "edges".into(),
        json!(m.edges.iter().map(|&(a, b)| vec![a, b]).collect::<Vec<_>>()),
    );
    obj.insert("faces".into(), json!(m.faces));
    obj.insert("loops".into(), json!(m.loops));
    if let Some(s) = &m.slices {
        obj.insert(
            "slices".into(),
            json!({"count": s.count, "factor": mesh_to_json(&s.factor)}),
        );
    }
    Value::Object(obj)
}

fn mesh_at(at: &At) -> Result<BaseMesh> {
    let kind_at = at.field("kind")?;
    let kind = MeshKind::parse(kind_at.str()?).map_or_else(|| kind_at.fail("unknown mesh kind"), Ok)?;
    let vertices = at.field("vertices")?.usize()?;
    let mut edges = Vec::new();
    for e in at.field("edges")?.items()? {
        match e.usize_list()?.as_slice() {
            &[a, b] => edges.push((a, b)),
            _ => return e.fail("an edge has exactly two vertices"),
        }
    }
    let lists = |key: &str| -> Result<Vec<Vec<usize>>> {
        match at.optional(key)? {
            Some(v) => v.items()?.iter().map(At::usize_list).collect(),
            None => Ok(Vec::new()),
        }
    };
    let faces = lists("faces")?;
    let loops = lists("loops")?;
    let slices = match at.optional("slices")? {
        Some(s) => Some(Slices {
            count: s.field("count")?.usize()?,
            factor: Box::new(mesh_at(&s.field("factor")?)?),
        }),
        None => None,
    };
    BaseMesh::new(kind, vertices, edges, faces, loops, slices).or_else(|e| at.fail(e.to_string()))
}

pub fn mesh_from_json(v: &Value) -> Result<BaseMesh> {
    mesh_at(&At::root(v))
}

pub fn map_to_json(f: &MeshMap) -> Value {
    json!({
        "source": mesh_to_json(&f.source),
        "target": mesh_to_json(&f.target),
        "vertex_assignment": f.vertex_assignment,
    })
}

pub fn map_from_json(v: &Value) -> Result<MeshMap> {
    let at = At::root(v);
    let source = mesh_at(&at.field("source")?)?;
    let target = mesh_at(&at.field("target")?)?;
    let assign = at.field("vertex_assignment")?;
    MeshMap::new(source, target, assign.usize_list()?).or_else(|e| assign.fail(e.to_string()))
}

// Matrices.

fn entry_to_json(z: Complex64, scalar: Scalar) -> Value {
    match scalar {
        Scalar::Real => json!(z.re),
        Scalar::Complex => json!([z.re, z.im]),
    }
}

/// Row-major nested rows.
pub fn matrix_to_json(m: &CMat, scalar: Scalar) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| entry_to_json(m[(i, j)], scalar)).collect()))
            .collect(),
    )
}

fn entry_at(at: &At, scalar: Scalar) -> Result<Complex64> {
    match scalar {
        Scalar::Real => Ok(Complex64::new(at.f64()?, 0.0)),
        Scalar::Complex => {
            let parts = at.items()?;
            if parts.len() != 2 {
                return at.fail("complex entries are [re, im] pairs");
            }
            Ok(Complex64::new(parts[0].f64()?, parts[1].f64()?))
        }
    }
}

fn matrix_at(at: &At, rows: usize, cols: usize, scalar: Scalar) -> Result<CMat> {
    let row_nodes = at.items()?;
    if row_nodes.len() != rows {
        return at.fail(format!("expected {rows} rows, found {}", row_nodes.len()));
    }
    let mut m = CMat::zeros(rows, cols);
    for (i, row) in row_nodes.iter().enumerate() {
        let entries = row.items()?;
        if entries.len() != cols {
            return row.fail(format!("expected {cols} columns, found {}", entries.len()));
        }
        for (j, e) in entries.iter().enumerate() {
            m[(i, j)] = entry_at(e, scalar)?;
        }
    }
    Ok(m)
}

// Bundles.

pub fn bundle_to_json(e: &ProjectionField) -> Value {
    json!({
        "base": mesh_to_json(&e.base),
        "ambient_dim": e.ambient_dim,
        "scalar": e.scalar.as_str(),
        "proj": e.proj.iter().map(|p| matrix_to_json(p, e.scalar)).collect::<Vec<_>>(),
    })
}

fn scalar_at(at: &At) -> Result<Scalar> {
    Scalar::parse(at.str()?).map_or_else(|| at.fail("scalar is \"real\" or \"complex\""), Ok)
}

fn bundle_at(at: &At, base: Option<&Arc<BaseMesh>>) -> Result<ProjectionField> {
    let parsed = Arc::new(mesh_at(&at.field("base")?)?);
    let base = match base {
        Some(b) if **b == *parsed => b.clone(),
        _ => parsed,
    };
    let n = at.field("ambient_dim")?.usize()?;
    let scalar = scalar_at(&at.field("scalar")?)?;
    let proj_at = at.field("proj")?;
    let proj = proj_at
        .items()?
        .iter()
        .map(|p| matrix_at(p, n, n, scalar))
        .collect::<Result<Vec<_>>>()?;
    ProjectionField::new(base, n, scalar, proj).or_else(|e| proj_at.fail(e.to_string()))
}

pub fn bundle_from_json(v: &Value) -> Result<ProjectionField> {
    bundle_at(&At::root(v), None)
}

// Morphisms.

pub fn morphism_to_json(l: &MorphismField) -> Value {
    json!({
        "domain": bundle_to_json(&l.domain),
        "target": bundle_to_json(&l.target),
        "mats": l.mats.iter().map(|m| matrix_to_json(m, l.domain.scalar)).collect::<Vec<_>>(),
    })
}

pub fn morphism_from_json(v: &Value) -> Result<MorphismField> {
    let at = At::root(v);
    let domain = bundle_at(&at.field("domain")?, None)?;
    let target = bundle_at(&at.field("target")?, Some(&domain.base))?;
    let target_at = at.field("target")?;
    domain
        .check_compatible(&target)
        .or_else(|e| target_at.fail(e.to_string()))?;
    let mats_at = at.field("mats")?;
    let items = mats_at.items()?;
    if items.len() != domain.len() {
        return mats_at.fail(format!("{} matrices for {} vertices", items.len(), domain.len()));
    }
    let mats = items
        .iter()
        .map(|m| matrix_at(m, target.ambient_dim, domain.ambient_dim, domain.scalar))
        .collect::<Result<Vec<_>>>()?;
    Ok(MorphismField { domain, target, mats })
}

// Records and classes.

pub fn record_to_json(r: &InvariantRecord) -> Value {
    json!({"rank": r.rank, "w1": r.w1, "c1": r.c1})
}

fn record_at(at: &At) -> Result<InvariantRecord> {
    let w1 = at
        .field("w1")?
        .items()?
        .iter()
        .map(|b| match b.usize()? {
            bit @ (0 | 1) => Ok(bit as u8),
            _ => b.fail("w1 entries are bits"),
        })
        .collect::<Result<_>>()?;
    let c1 = at.field("c1")?.items()?.iter().map(At::i64).collect::<Result<_>>()?;
    Ok(InvariantRecord {
        rank: at.field("rank")?.i64()?,
        w1,
        c1,
    })
}

pub fn record_from_json(v: &Value) -> Result<InvariantRecord> {
    record_at(&At::root(v))
}

/// Class document: reduced invariants plus the transversal size and margin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDoc {
    pub record: InvariantRecord,
    pub dim_v: usize,
    pub margin: f64,
}

impl ClassDoc {
    pub fn of(comp: &IndexComputation) -> Self {
        Self {
            record: comp.class.reduced.clone(),
            dim_v: comp.transversal.dim,
            margin: comp.transversal.margin,
        }
    }
}

pub fn class_to_json(c: &ClassDoc) -> Value {
    let mut v = record_to_json(&c.record);
    v["dimV"] = json!(c.dim_v);
    v["margin"] = json!(c.margin);
    v
}

pub fn class_from_json(v: &Value) -> Result<ClassDoc> {
    let at = At::root(v);
    Ok(ClassDoc {
        record: record_at(&at)?,
        dim_v: at.field("dimV")?.usize()?,
        margin: at.field("margin")?.f64()?,
    })
}

// Configuration.

pub fn config_to_json(c: &ToleranceConfig) -> Value {
    json!({
        "rank_scale": c.rank_scale,
        "idem_tol": c.idem_tol,
        "edge_delta": c.edge_delta,
        "trans_margin": c.trans_margin,
        "frame_floor": c.frame_floor,
        "sigma_floor": c.sigma_floor,
        "search_budget": c.search_budget,
        "seed": c.seed,
    })
}

pub fn config_from_json(v: &Value) -> Result<ToleranceConfig> {
    let at = At::root(v);
    let cfg = ToleranceConfig {
        rank_scale: at.field("rank_scale")?.f64()?,
        idem_tol: at.field("idem_tol")?.f64()?,
        edge_delta: at.field("edge_delta")?.f64()?,
        trans_margin: at.field("trans_margin")?.f64()?,
        frame_floor: at.field("frame_floor")?.f64()?,
        sigma_floor: at.field("sigma_floor")?.f64()?,
        search_budget: at.field("search_budget")?.usize()?,
        seed: at
            .field("seed")?
            .value
            .as_u64()
            .map_or_else(|| at.fail("seed must be an unsigned integer"), Ok)?,
    };
    cfg.check().or_else(|e| at.fail(e.to_string()))?;
    Ok(cfg)
}

// File helpers.

pub fn load_mesh(path: &Path) -> Result<BaseMesh> {
    locate(&path.display().to_string(), mesh_from_json(&read_json(path)?))
}

pub fn load_bundle(path: &Path) -> Result<ProjectionField> {
    locate(&path.display().to_string(), bundle_from_json(&read_json(path)?))
}

pub fn load_morphism(path: &Path) -> Result<MorphismField> {
    locate(&path.display().to_string(), morphism_from_json(&read_json(path)?))
}

pub fn load_map(path: &Path) -> Result<MeshMap> {
    locate(&path.display().to_string(), map_from_json(&read_json(path)?))
}

pub fn load_config(path: &Path) -> Result<ToleranceConfig> {
    locate(&path.display().to_string(), config_from_json(&read_json(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{bott, moebius};
    use crate::linalg;
    use crate::mesh::{circle_mesh, product_with_interval, sphere_mesh_with_coords};
    use crate::morphism::make_morphism;

    fn roundtrip(v: &Value) -> String {
        let text = to_canonical(v).unwrap();
        let again = to_canonical(&parse_text(&text, "test").unwrap()).unwrap();
        assert_eq!(text, again);
        text
    }

    #[test]
    fn mesh_canonical_form_is_a_fixed_point() {
        let m = product_with_interval(&circle_mesh(4).unwrap(), 3).unwrap();
        let text = roundtrip(&mesh_to_json(&m));
        let back = mesh_from_json(&parse_text(&text, "m").unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let text = to_canonical(&json!({"b": 0.1, "a": [1, 2.0]})).unwrap();
        assert_eq!(
            text,
            "{\n  \"a\": [1, 2.0000000000000000e0],\n  \"b\": 1.0000000000000001e-1\n}\n"
        );
    }

    #[test]
    fn complex_bundle_roundtrips_exactly() {
        let (mesh, coords) = sphere_mesh_with_coords(1).unwrap();
        let b = bott(Arc::new(mesh), &coords).unwrap();
        let text = roundtrip(&bundle_to_json(&b));
        let back = bundle_from_json(&parse_text(&text, "b").unwrap()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn morphism_roundtrips() {
        let cfg = ToleranceConfig::default();
        let base = Arc::new(circle_mesh(8).unwrap());
        let m = moebius(base.clone());
        let mats = vec![linalg::from_real(2, 2, &[0.3, -1.0, 2.5, 1e-17]); 8];
        let l = make_morphism(&m, &m, mats, &cfg).unwrap();
        let text = roundtrip(&morphism_to_json(&l));
        let back = morphism_from_json(&parse_text(&text, "l").unwrap()).unwrap();
        assert_eq!(back, l);
        assert!(Arc::ptr_eq(&back.domain.base, &back.target.base));
    }

    #[test]
    fn truncated_document_names_origin() {
        let text = to_canonical(&mesh_to_json(&circle_mesh(4).unwrap())).unwrap();
        let err = parse_text(&text[..text.len() / 2], "mesh.json").unwrap_err();
        assert!(matches!(err, Error::Parse { ref path, .. } if path == "mesh.json"));
    }

    #[test]
    fn schema_errors_carry_pointer() {
        let mut v = bundle_to_json(&moebius(Arc::new(circle_mesh(4).unwrap())));
        v["proj"][2][1][0] = json!("x");
        let err = bundle_from_json(&v).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                path: "/proj/2/1/0".into(),
                message: "expected a number".into()
            }
        );
        let mut v = mesh_to_json(&circle_mesh(4).unwrap());
        v.as_object_mut().unwrap().remove("vertices");
        assert!(matches!(mesh_from_json(&v), Err(Error::Parse { path, .. }) if path == "/vertices"));
    }

    #[test]
    fn class_and_config_roundtrip() {
        let c = ClassDoc {
            record: InvariantRecord {
                rank: -1,
                w1: vec![1],
                c1: vec![],
            },
            dim_v: 2,
            margin: 0.25,
        };
        assert_eq!(class_from_json(&class_to_json(&c)).unwrap(), c);
        let cfg = ToleranceConfig::with_seed(7);
        assert_eq!(config_from_json(&config_to_json(&cfg)).unwrap(), cfg);
    }
}
