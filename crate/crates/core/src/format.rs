//! JSON documents for kernels, constraint systems and value tables.
//!
//! Numbers are exact: write them as strings (`"0.2"`, `"1/3"`, `"inf"`) or
//! as JSON numbers, which are read from their decimal text. Coordinates and
//! pattern variables are numbered from 1.

use num_traits::Zero;
use serde_json::{json, Map, Value as Json};

use crate::constraint::{ConstraintSet, Mode, Shape, Template, TupleIndex};
use crate::error::{Error, Result};
use crate::kernel::{ExceptionPiece, PieceAtom, StepKernel};
use crate::rational::{self, Q};
use crate::value_space::{FiniteMetric, Value, ValueSpace};

/// A JSON node together with its field path, for diagnostics.
#[derive(Clone, Copy)]
struct Node<'a> {
    path: &'a str,
    json: &'a Json,
}

impl<'a> Node<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::format(if self.path.is_empty() { "<root>" } else { self.path }, message)
    }

    fn object(&self) -> Result<&'a Map<String, Json>> {
        self.json.as_object().ok_or_else(|| self.err("expected an object"))
    }

    fn array(&self) -> Result<&'a Vec<Json>> {
        self.json.as_array().ok_or_else(|| self.err("expected an array"))
    }

    fn str(&self) -> Result<&'a str> {
        self.json.as_str().ok_or_else(|| self.err("expected a string"))
    }

    fn bool(&self) -> Result<bool> {
        self.json.as_bool().ok_or_else(|| self.err("expected true or false"))
    }

    fn usize(&self) -> Result<usize> {
        self.json
            .as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| self.err("expected a non-negative integer"))
    }

    /// Exact number from a string or a JSON number.
    fn rational(&self) -> Result<Q> {
        let text = match self.json {
            Json::String(s) => s.clone(),
            Json::Number(n) => n.to_string(),
            _ => return Err(self.err("expected an exact number")),
        };
        rational::parse(&text).map_err(|e| self.err(e.to_string()))
    }

    fn value(&self, space: &ValueSpace) -> Result<Value> {
        let text = match self.json {
            Json::String(s) => s.clone(),
            Json::Number(n) => n.to_string(),
            _ => return Err(self.err("expected a value")),
        };
        space.parse_value(&text).map_err(|e| self.err(e.to_string()))
    }

    fn tuple(&self) -> Result<TupleIndex> {
        self.items(|n| n.usize())
    }

    fn items<T>(&self, f: impl Fn(Node) -> Result<T>) -> Result<Vec<T>> {
        self.array()?
            .iter()
            .enumerate()
            .map(|(i, json)| {
                let path = format!("{}[{i}]", self.path);
                f(Node { path: &path, json })
            })
            .collect()
    }
}

fn field<'a>(node: Node<'a>, key: &str, path: &'a mut String) -> Result<Node<'a>> {
    let obj = node.object()?;
    *path = join(node.path, key);
    let json = obj.get(key).ok_or_else(|| Error::format(path.clone(), "missing field"))?;
    Ok(Node { path, json })
}

fn optional<'a>(node: Node<'a>, key: &str, path: &'a mut String) -> Result<Option<Node<'a>>> {
    let obj = node.object()?;
    *path = join(node.path, key);
    Ok(obj.get(key).filter(|j| !j.is_null()).map(|json| Node { path, json }))
}

fn join(parent: &str, key: &str) -> String {
    if parent.is_empty() {
        key.to_string()
    } else {
        format!("{parent}.{key}")
    }
}

/// Re-labels errors raised by library constructors with the document path.
fn at(path: &str, e: Error) -> Error {
    match e {
        Error::Format { field, message } => Error::format(join(path, &field), message),
        other => Error::format(if path.is_empty() { "<root>" } else { path }, other.to_string()),
    }
}

fn parse_space(node: Node) -> Result<ValueSpace> {
    let mut p = String::new();
    let variant = field(node, "variant", &mut p)?.str()?.to_string();
    match variant.as_str() {
        "finite_metric" => {
            let mut p = String::new();
            let labels_node = field(node, "labels", &mut p)?;
            let labels = labels_node.items(|n| Ok(n.str()?.to_string()))?;
            let mut q = String::new();
            match optional(node, "dist_matrix", &mut q)? {
                Some(m) => {
                    let dist = m.items(|row| row.items(|x| x.rational()))?;
                    FiniteMetric::new(labels, dist)
                        .map(ValueSpace::FiniteMetric)
                        .map_err(|e| at(node.path, e))
                }
                None => {
                    let n = labels.len();
                    let dist = (0..n)
                        .map(|i| (0..n).map(|j| if i == j { Q::zero() } else { rational::int(1) }).collect())
                        .collect();
                    FiniteMetric::new(labels, dist)
                        .map(ValueSpace::FiniteMetric)
                        .map_err(|e| at(node.path, e))
                }
            }
        }
        "bounded_interval" => {
            let mut p = String::new();
            let d = field(node, "diameter", &mut p)?;
            ValueSpace::bounded_interval(d.rational()?).map_err(|e| at(node.path, e))
        }
        "compactified_ray" => Ok(ValueSpace::CompactifiedRay),
        other => Err(Error::format(
            join(node.path, "variant"),
            format!("unknown variant `{other}` (expected finite_metric, bounded_interval or compactified_ray)"),
        )),
    }
}

fn parse_piece_atom(node: Node, arity: usize) -> Result<PieceAtom> {
    let coord = |n: Node| -> Result<usize> {
        let c = n.usize()?;
        if c == 0 || c > arity {
            return Err(n.err(format!("coordinates run from 1 to {arity}")));
        }
        Ok(c - 1)
    };
    let mut p = String::new();
    let mut q = String::new();
    if let Some(tie) = optional(node, "tie", &mut p)? {
        let coords = tie.items(coord)?;
        if coords.len() != 2 {
            return Err(tie.err("a tie names exactly two coordinates"));
        }
        return Ok(PieceAtom::Tied { a: coords[0], b: coords[1] });
    }
    let c = coord(field(node, "coord", &mut p)?)?;
    let value = field(node, "const", &mut q)?.rational()?;
    Ok(PieceAtom::Fixed { coord: c, value })
}

/// Reads a kernel document.
pub fn parse_kernel(json: &Json) -> Result<StepKernel> {
    let root = Node { path: "", json };
    let (mut p1, mut p2, mut p3, mut p4, mut p5, mut p6) = Default::default();
    let arity = field(root, "arity", &mut p1)?.usize()?;
    let resolution = field(root, "resolution", &mut p2)?.usize()? as u64;
    let space = parse_space(field(root, "value_space", &mut p3)?)?;
    let base = field(root, "base", &mut p4)?.items(|n| n.value(&space))?;
    let exceptions = match optional(root, "exceptions", &mut p5)? {
        Some(list) => list.items(|piece| {
            let (mut a, mut v) = (String::new(), String::new());
            let atoms = field(piece, "atoms", &mut a)?.items(|n| parse_piece_atom(n, arity))?;
            let value = field(piece, "value", &mut v)?.value(&space)?;
            Ok(ExceptionPiece { atoms, value })
        })?,
        None => Vec::new(),
    };
    let symmetric_base = match optional(root, "symmetric_base", &mut p6)? {
        Some(n) => n.bool()?,
        None => false,
    };
    StepKernel::new(arity, resolution, space, base, exceptions, symmetric_base).map_err(|e| at("", e))
}

pub fn kernel_from_str(text: &str) -> Result<StepKernel> {
    parse_kernel(&serde_json::from_str(text)?)
}

fn space_json(space: &ValueSpace) -> Json {
    match space {
        ValueSpace::FiniteMetric(fm) => json!({
            "variant": "finite_metric",
            "labels": fm.labels(),
            "dist_matrix": fm.matrix().iter().map(|row| row.iter().map(rational::render).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
        ValueSpace::BoundedInterval { diameter } => json!({
            "variant": "bounded_interval",
            "diameter": rational::render(diameter),
        }),
        ValueSpace::CompactifiedRay => json!({ "variant": "compactified_ray" }),
    }
}

pub fn kernel_to_json(kernel: &StepKernel) -> Json {
    let space = kernel.space();
    let exceptions: Vec<Json> = kernel
        .exceptions()
        .iter()
        .map(|piece| {
            let atoms: Vec<Json> = piece
                .atoms
                .iter()
                .map(|a| match a {
                    PieceAtom::Fixed { coord, value } => json!({ "coord": coord + 1, "const": rational::render(value) }),
                    PieceAtom::Tied { a, b } => json!({ "tie": [a + 1, b + 1] }),
                })
                .collect();
            json!({ "atoms": atoms, "value": space.render(&piece.value) })
        })
        .collect();
    json!({
        "arity": kernel.arity(),
        "resolution": kernel.resolution(),
        "value_space": space_json(space),
        "base": kernel.base().iter().map(|v| space.render(v)).collect::<Vec<_>>(),
        "exceptions": exceptions,
        "symmetric_base": kernel.symmetric_base(),
    })
}

fn builtin(node: Node, arity: usize) -> Result<Template> {
    let mut p = String::new();
    let name = field(node, "builtin", &mut p)?.str()?.to_string();
    let template = match name.as_str() {
        "symmetry" => Template::symmetry(),
        "triangle_free" => Template::triangle_free(),
        "triangle_inequality" => Template::triangle_inequality(),
        "anti_symmetry" => Template::anti_symmetry(),
        "diagonal_difference" => Template::diagonal_difference(),
        "finite_values" => Template::finite_values(arity),
        "clique_free" => {
            let mut q = String::new();
            let size = field(node, "size", &mut q)?.usize()?;
            if size < arity {
                return Err(Error::format(q, format!("clique size must be at least the arity {arity}")));
            }
            Template::clique_free(arity, size)
        }
        other => return Err(Error::format(p, format!("unknown builtin `{other}`"))),
    };
    Ok(template)
}

fn parse_template(node: Node, arity: usize, space: &ValueSpace) -> Result<Template> {
    if let Some(s) = node.json.as_str() {
        return builtin(Node { path: node.path, json: &json!({ "builtin": s }) }, arity);
    }
    let obj = node.object()?;
    if obj.contains_key("builtin") {
        return builtin(node, arity);
    }
    let kinds = ["symmetry", "zero_product", "linear_ineq", "finite", "abs_diff", "table"];
    let present: Vec<&str> = kinds.iter().copied().filter(|k| obj.contains_key(*k)).collect();
    let [kind] = present[..] else {
        return Err(node.err(format!("expected exactly one of builtin, {}", kinds.join(", "))));
    };
    let mut p = String::new();
    let body = field(node, kind, &mut p)?;
    let (mut a, mut b, mut c) = (String::new(), String::new(), String::new());
    let shape = match kind {
        "symmetry" => Shape::Symmetry,
        "zero_product" => Shape::ZeroProduct {
            slots: field(body, "slots", &mut a)?.items(|n| n.tuple())?,
        },
        "linear_ineq" => Shape::LinearIneq {
            coeffs: field(body, "coeffs", &mut a)?.items(|n| n.rational())?,
            slots: field(body, "slots", &mut b)?.items(|n| n.tuple())?,
            bound: field(body, "bound", &mut c)?.rational()?,
        },
        "finite" => Shape::Finite {
            slot: field(body, "slot", &mut a)?.tuple()?,
        },
        "abs_diff" => Shape::AbsDiff {
            a: field(body, "a", &mut a)?.tuple()?,
            b: field(body, "b", &mut b)?.tuple()?,
            diff: field(body, "diff", &mut c)?.rational()?,
        },
        _ => Shape::Table {
            slots: field(body, "slots", &mut a)?.items(|n| n.tuple())?,
            allowed: field(body, "allowed", &mut b)?.items(|row| row.items(|v| v.value(space)))?,
        },
    };
    let mut n = String::new();
    let name = match optional(node, "name", &mut n)? {
        Some(s) => s.str()?.to_string(),
        None => default_name(kind).to_string(),
    };
    let mut u = String::new();
    let mut template = Template::new(name, shape);
    if let Some(flag) = optional(node, "unordered", &mut u)? {
        template.unordered = flag.bool()?;
    }
    Ok(template)
}

fn default_name(kind: &str) -> &'static str {
    match kind {
        "symmetry" => "Symmetry",
        "zero_product" => "ZeroProduct",
        "linear_ineq" => "LinearIneq",
        "finite" => "Finite",
        "abs_diff" => "AbsDiff",
        _ => "Table",
    }
}

/// Reads a constraint document; table values are read in `space`.
pub fn parse_constraint(json: &Json, space: &ValueSpace) -> Result<ConstraintSet> {
    let root = Node { path: "", json };
    let (mut p1, mut p2, mut p3) = Default::default();
    let arity = field(root, "arity", &mut p1)?.usize()?;
    let mode_node = field(root, "mode", &mut p2)?;
    let mode = match mode_node.str()? {
        "distinct" => Mode::Distinct,
        "multiset" => Mode::Multiset,
        other => return Err(mode_node.err(format!("unknown mode `{other}` (expected distinct or multiset)"))),
    };
    let templates = field(root, "atoms", &mut p3)?.items(|n| parse_template(n, arity, space))?;
    ConstraintSet::new(arity, mode, templates).map_err(|e| at("", e))
}

pub fn constraint_from_str(text: &str, space: &ValueSpace) -> Result<ConstraintSet> {
    parse_constraint(&serde_json::from_str(text)?, space)
}

fn tuples(ts: &[TupleIndex]) -> Json {
    json!(ts)
}

pub fn template_to_json(t: &Template, space: &ValueSpace) -> Json {
    let body = match &t.shape {
        Shape::Symmetry => json!({ "symmetry": {} }),
        Shape::ZeroProduct { slots } => json!({ "zero_product": { "slots": tuples(slots) } }),
        Shape::LinearIneq { coeffs, slots, bound } => json!({ "linear_ineq": {
            "coeffs": coeffs.iter().map(rational::render).collect::<Vec<_>>(),
            "slots": tuples(slots),
            "bound": rational::render(bound),
        }}),
        Shape::Finite { slot } => json!({ "finite": { "slot": slot } }),
        Shape::AbsDiff { a, b, diff } => json!({ "abs_diff": { "a": a, "b": b, "diff": rational::render(diff) } }),
        Shape::Table { slots, allowed } => json!({ "table": {
            "slots": tuples(slots),
            "allowed": allowed.iter().map(|row| row.iter().map(|v| space.render(v)).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }}),
    };
    let mut obj = body.as_object().expect("object literal").clone();
    obj.insert("name".into(), json!(t.name));
    if t.unordered {
        obj.insert("unordered".into(), json!(true));
    }
    Json::Object(obj)
}

pub fn constraint_to_json(c: &ConstraintSet, space: &ValueSpace) -> Json {
    json!({
        "arity": c.arity(),
        "mode": c.mode().to_string(),
        "atoms": c.templates().iter().map(|t| template_to_json(t, space)).collect::<Vec<_>>(),
    })
}

/// Comma-separated exact numbers, e.g. `0.2,0.7` or `1/3,1/2`.
pub fn parse_points(text: &str) -> Result<Vec<Q>> {
    text.split(',')
        .enumerate()
        .map(|(i, s)| rational::parse(s.trim()).map_err(|e| Error::format(format!("points[{i}]"), e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    const GRAPHON: &str = r#"{
        "arity": 2, "resolution": 2,
        "value_space": {"variant": "finite_metric", "labels": ["0", "1"]},
        "base": ["0", "1", "1", "0"],
        "exceptions": [{"atoms": [{"coord": 1, "const": "0.2"}, {"coord": 2, "const": 0.7}], "value": "0"},
                       {"atoms": [{"tie": [1, 2]}], "value": "1"}],
        "symmetric_base": true
    }"#;

    #[test]
    fn reads_a_graphon() {
        let k = kernel_from_str(GRAPHON).unwrap();
        assert_eq!(k.eval(&[ratio(1, 5), ratio(7, 10)]).unwrap(), Value::Label(0));
        assert_eq!(k.eval(&[ratio(1, 5), ratio(1, 5)]).unwrap(), Value::Label(1));
        assert_eq!(k.eval(&[ratio(1, 5), ratio(3, 4)]).unwrap(), Value::Label(1));
        assert!(k.symmetric_base());
    }

    #[test]
    fn kernel_round_trip() {
        let k = kernel_from_str(GRAPHON).unwrap();
        let again = parse_kernel(&kernel_to_json(&k)).unwrap();
        assert_eq!(k, again);
        let ray = r#"{"arity": 1, "resolution": 3, "value_space": {"variant": "compactified_ray"},
                      "base": ["0", "1/3", "inf"]}"#;
        let k = kernel_from_str(ray).unwrap();
        assert_eq!(parse_kernel(&kernel_to_json(&k)).unwrap(), k);
    }

    fn diagnostic(text: &str) -> String {
        match kernel_from_str(text) {
            Err(Error::Format { field, message }) => format!("{field}: {message}"),
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn kernel_diagnostics_name_the_field() {
        let d = diagnostic(&GRAPHON.replace(r#""coord": 2, "const": 0.7"#, r#""coord": 3, "const": 0.7"#));
        assert!(d.starts_with("exceptions[0].atoms[1].coord"), "{d}");
        let d = diagnostic(&GRAPHON.replace(r#"["0", "1", "1", "0"]"#, r#"["0", "1", "2", "0"]"#));
        assert!(d.starts_with("base[2]"), "{d}");
        let d = diagnostic(&GRAPHON.replace(r#""finite_metric""#, r#""lattice""#));
        assert!(d.starts_with("value_space.variant"), "{d}");
        let d = diagnostic(&GRAPHON.replace(r#""resolution": 2,"#, ""));
        assert!(d.starts_with("resolution: missing"), "{d}");
        let d = diagnostic(&GRAPHON.replace(r#"["0", "1", "1", "0"]"#, r#"["0", "1", "0", "0"]"#));
        assert!(d.starts_with("symmetric_base"), "{d}");
        assert!(matches!(kernel_from_str("{\"arity\": 2,\n"), Err(Error::Json(_))));
    }

    #[test]
    fn reads_constraints() {
        let space = ValueSpace::FiniteMetric(FiniteMetric::discrete(&["0", "1"]));
        let text = r#"{"arity": 2, "mode": "multiset", "atoms": [
            "symmetry",
            {"builtin": "clique_free", "size": 3},
            {"zero_product": {"slots": [[1, 2], [2, 3], [1, 3]]}, "unordered": true, "name": "Tri"},
            {"table": {"slots": [[1, 2]], "allowed": [["0"], ["1"]]}}
        ]}"#;
        let c = constraint_from_str(text, &space).unwrap();
        assert_eq!(c.mode(), Mode::Multiset);
        assert_eq!(c.templates().len(), 4);
        assert_eq!(c.templates()[1].shape, Template::clique_free(2, 3).shape);
        assert_eq!(c.templates()[1].name, "CliqueFree");
        assert_eq!(c.templates()[2].name, "Tri");
        assert_eq!(parse_constraint(&constraint_to_json(&c, &space), &space).unwrap(), c);

        let bad = text.replace(r#"["1"]]"#, r#"["7"]]"#);
        match constraint_from_str(&bad, &space) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "atoms[3].table.allowed[1][0]"),
            other => panic!("{other:?}"),
        }
        let bad = text.replace("[1, 3]]}", "[1, 3, 4]]}");
        match constraint_from_str(&bad, &space) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "atoms[2]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn points() {
        assert_eq!(parse_points("0.2, 1/3").unwrap(), vec![ratio(1, 5), ratio(1, 3)]);
        assert!(matches!(parse_points("0.2,x"), Err(Error::Format { field, .. }) if field == "points[1]"));
    }
}
