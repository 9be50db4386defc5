//! Mesh files: `KF-MESH v1` and 4-dimensional OFF, plus per-face angle CSV.
//!
//! `KF-MESH v1` layout:
//!
//! ```text
//! KF-MESH v1
//! vertices <n>
//! faces <m>
//! boundary_policy <closed|pinned-boundary>
//! tag <name> <k> <i_1> ... <i_k>        (zero or more)
//! <x1> <y1> <x2> <y2>                   (n lines)
//! <i> <j> <k>                           (m lines)
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces positions bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kahler::{AngleField, LagrangianAngle};
use crate::mesh::{BoundaryPolicy, SurfaceMesh, Vec4};

pub const KF_MESH_HEADER: &str = "KF-MESH v1";

pub fn write_kf_mesh_string(mesh: &SurfaceMesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{KF_MESH_HEADER}");
    let _ = writeln!(out, "vertices {}", mesh.n_vertices());
    let _ = writeln!(out, "faces {}", mesh.n_faces());
    let _ = writeln!(out, "boundary_policy {}", mesh.boundary_policy.as_str());
    for (name, idx) in &mesh.tags {
        let _ = write!(out, "tag {name} {}", idx.len());
        for i in idx {
            let _ = write!(out, " {i}");
        }
        out.push('\n');
    }
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?} {:?} {:?}", v[0], v[1], v[2], v[3]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "{} {} {}", f[0], f[1], f[2]);
    }
    out
}

pub fn write_kf_mesh(mesh: &SurfaceMesh, path: &Path) -> Result<()> {
    fs::write(path, write_kf_mesh_string(mesh))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-empty, non-comment line with its 1-based number.
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next().ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn keyed_count(lines: &mut Lines, key: &str) -> Result<usize> {
    let (ln, l) = lines.expect(key)?;
    let mut it = l.split_whitespace();
    if it.next() != Some(key) {
        return Err(perr(ln, format!("expected '{key} <count>'")));
    }
    it.next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| perr(ln, format!("bad {key} count")))
}

fn parse_floats<const N: usize>(ln: usize, l: &str) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    let mut it = l.split_whitespace();
    for o in out.iter_mut() {
        *o = it
            .next()
            .ok_or_else(|| perr(ln, format!("expected {N} coordinates")))?
            .parse()
            .map_err(|e| perr(ln, format!("bad coordinate: {e}")))?;
    }
    if it.next().is_some() {
        return Err(perr(ln, format!("expected {N} coordinates")));
    }
    Ok(out)
}

fn parse_face(ln: usize, l: &str, skip_count: bool) -> Result<[usize; 3]> {
    let mut it = l.split_whitespace();
    if skip_count {
        match it.next() {
            Some("3") => {}
            _ => return Err(perr(ln, "only triangular faces are supported")),
        }
    }
    let mut f = [0usize; 3];
    for x in f.iter_mut() {
        *x = it
            .next()
            .ok_or_else(|| perr(ln, "expected 3 face indices"))?
            .parse()
            .map_err(|e| perr(ln, format!("bad face index: {e}")))?;
    }
    if it.next().is_some() {
        return Err(perr(ln, "expected 3 face indices"));
    }
    Ok(f)
}

pub fn read_kf_mesh_str(text: &str) -> Result<SurfaceMesh> {
    let mut lines = Lines::new(text);
    let (ln, head) = lines.expect("header")?;
    if head != KF_MESH_HEADER {
        return Err(perr(
            ln,
            format!("expected '{KF_MESH_HEADER}', found '{head}'"),
        ));
    }
    let nv = keyed_count(&mut lines, "vertices")?;
    let nf = keyed_count(&mut lines, "faces")?;
    let (ln, l) = lines.expect("boundary_policy")?;
    let policy = l
        .strip_prefix("boundary_policy")
        .and_then(|s| BoundaryPolicy::parse(s.trim()))
        .ok_or_else(|| perr(ln, "expected 'boundary_policy <closed|pinned-boundary>'"))?;
    let mut mesh = SurfaceMesh::new(Vec::with_capacity(nv), Vec::with_capacity(nf), policy);
    let mut pending = None;
    while let Some((ln, l)) = lines.next() {
        let Some(rest) = l.strip_prefix("tag ") else {
            pending = Some((ln, l));
            break;
        };
        let mut it = rest.split_whitespace();
        let name = it.next().ok_or_else(|| perr(ln, "tag without name"))?;
        let k: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln, "bad tag count"))?;
        let idx = it
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| perr(ln, format!("bad tag index: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if idx.len() != k {
            return Err(perr(
                ln,
                format!("tag '{name}' declares {k} indices, found {}", idx.len()),
            ));
        }
        mesh.tags.insert(name.to_string(), idx);
    }
    let mut take = |what: &str| match pending.take() {
        Some(p) => Ok(p),
        None => lines.expect(what),
    };
    for _ in 0..nv {
        let (ln, l) = take("vertex")?;
        let [a, b, c, d] = parse_floats::<4>(ln, l)?;
        mesh.vertices.push(Vec4::new(a, b, c, d));
    }
    for _ in 0..nf {
        let (ln, l) = take("face")?;
        mesh.faces.push(parse_face(ln, l, false)?);
    }
    if let Some((ln, _)) = pending.or_else(|| lines.next()) {
        return Err(perr(ln, "trailing content after faces"));
    }
    Ok(mesh)
}

pub fn read_kf_mesh(path: &Path) -> Result<SurfaceMesh> {
    read_kf_mesh_str(&fs::read_to_string(path)?)
}

/// Reads `4OFF` (or `nOFF` with dimension 4). Open meshes get a pinned,
/// tagged boundary.
pub fn read_off4_str(text: &str) -> Result<SurfaceMesh> {
    let mut lines = Lines::new(text);
    let (ln, head) = lines.expect("header")?;
    match head {
        "4OFF" => {}
        "nOFF" => {
            let (ln, d) = lines.expect("dimension")?;
            if d != "4" {
                return Err(perr(ln, format!("expected dimension 4, found {d}")));
            }
        }
        _ => {
            return Err(perr(
                ln,
                format!("expected '4OFF' or 'nOFF', found '{head}'"),
            ))
        }
    }
    let (ln, counts) = lines.expect("counts")?;
    let c: Vec<usize> = counts
        .split_whitespace()
        .map(|s| s.parse().map_err(|e| perr(ln, format!("bad count: {e}"))))
        .collect::<Result<_>>()?;
    if c.len() < 2 {
        return Err(perr(ln, "expected '<vertices> <faces> [edges]'"));
    }
    let mut vertices = Vec::with_capacity(c[0]);
    for _ in 0..c[0] {
        let (ln, l) = lines.expect("vertex")?;
        let [a, b, cc, d] = parse_floats::<4>(ln, l)?;
        vertices.push(Vec4::new(a, b, cc, d));
    }
    let mut faces = Vec::with_capacity(c[1]);
    for _ in 0..c[1] {
        let (ln, l) = lines.expect("face")?;
        faces.push(parse_face(ln, l, true)?);
    }
    let mut mesh = SurfaceMesh::with_pinned_boundary(vertices, faces);
    if mesh
        .tags
        .get(crate::mesh::BOUNDARY_TAG)
        .is_none_or(|b| b.is_empty())
    {
        mesh.boundary_policy = BoundaryPolicy::Closed;
        mesh.tags.clear();
    }
    Ok(mesh)
}

pub fn write_off4_string(mesh: &SurfaceMesh) -> String {
    let mut out = String::from("4OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.n_vertices(), mesh.n_faces());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?} {:?} {:?}", v[0], v[1], v[2], v[3]);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    out
}

/// Reads either format, chosen by the first line.
pub fn read_mesh(path: &Path) -> Result<SurfaceMesh> {
    let text = fs::read_to_string(path)?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    if first == KF_MESH_HEADER {
        read_kf_mesh_str(&text)
    } else {
        read_off4_str(&text)
    }
}

/// Per-face CSV with columns `face_id, cos_alpha, beta, branch_flag`.
/// `beta` is empty and `branch_flag` false on non-Lagrangian meshes.
pub fn write_angle_csv(
    path: &Path,
    angles: &AngleField,
    beta: Option<&LagrangianAngle>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["face_id", "cos_alpha", "beta", "branch_flag"])?;
    for (f, c) in angles.face_cos.iter().enumerate() {
        let (b, flag) = match beta {
            Some(b) => (format!("{:?}", b.face_beta[f]), b.branch_flag[f]),
            None => (String::new(), false),
        };
        w.write_record([f.to_string(), format!("{c:?}"), b, flag.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario;

    #[test]
    fn kf_mesh_round_trip_is_exact() {
        let mesh = scenario::holomorphic_graph(&[0.1, 0.0, 1.0], 1.3, 10);
        let back = read_kf_mesh_str(&write_kf_mesh_string(&mesh)).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn off4_round_trip() {
        let mesh = scenario::clifford_torus(1.0, 6);
        let back = read_off4_str(&write_off4_string(&mesh)).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.faces, mesh.faces);
        assert_eq!(back.boundary_policy, BoundaryPolicy::Closed);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "KF-MESH v1\nvertices 1\nfaces 0\nboundary_policy closed\n1 2 x 4\n";
        match read_kf_mesh_str(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(read_kf_mesh_str("KF-MESH v2\n").is_err());
    }
}
