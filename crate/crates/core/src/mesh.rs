//! 1D interval and 2D triangular meshes, a text format for them, and P1
//! point interpolation (the sensor projection).

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use crate::linalg::CsrMatrix;
use crate::{Error, Result};

/// Node coordinates; 1D meshes leave the second component at zero.
pub type Point = [f64; 2];

/// Boundary condition attached to a boundary entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    NeumannG,
    Neumann0,
    Impedance,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::NeumannG => "neumann_g",
            BoundaryTag::Neumann0 => "neumann_0",
            BoundaryTag::Impedance => "impedance",
        }
    }

    pub fn parse(word: &str) -> Option<Self> {
        match word {
            "dirichlet" => Some(BoundaryTag::Dirichlet),
            "neumann_g" => Some(BoundaryTag::NeumannG),
            "neumann_0" => Some(BoundaryTag::Neumann0),
            "impedance" => Some(BoundaryTag::Impedance),
            _ => None,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A tagged boundary node (1D) or edge (2D).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEntity {
    pub nodes: Vec<usize>,
    pub tag: BoundaryTag,
}

/// Validated simplicial mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    nodes: Vec<Point>,
    elements: Vec<Vec<usize>>,
    boundary: Vec<BoundaryEntity>,
}

impl Mesh {
    /// Builds a mesh and checks orientation, node uniqueness and that every
    /// topological boundary entity carries exactly one tag.
    pub fn new(dim: usize, nodes: Vec<Point>, elements: Vec<Vec<usize>>, boundary: Vec<BoundaryEntity>) -> Result<Self> {
        let mesh = Self {
            dim,
            nodes,
            elements,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn boundary(&self) -> &[BoundaryEntity] {
        &self.boundary
    }

    /// Sorted, deduplicated nodes touched by entities with `tag`.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary
            .iter()
            .filter(|b| b.tag == tag)
            .flat_map(|b| b.nodes.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        self.nodes_with_tag(BoundaryTag::Dirichlet)
    }

    /// Signed element length (1D) or area (2D).
    pub fn element_measure(&self, e: usize) -> f64 {
        let el = &self.elements[e];
        let p = |k: usize| self.nodes[el[k]];
        if self.dim == 1 {
            p(1)[0] - p(0)[0]
        } else {
            let (a, b, c) = (p(0), p(1), p(2));
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
        }
    }

    /// Length of the bounding-box diagonal.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Longest element edge.
    pub fn h_max(&self) -> f64 {
        let mut h = 0.0f64;
        for el in &self.elements {
            for a in 0..el.len() {
                for b in a + 1..el.len() {
                    h = h.max(dist(&self.nodes[el[a]], &self.nodes[el[b]]));
                }
            }
        }
        h
    }

    fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {}", self.dim)));
        }
        if self.nodes.is_empty() || self.elements.is_empty() {
            return Err(Error::InvalidMesh("mesh needs at least one element".into()));
        }
        let npe = self.dim + 1;
        for (e, el) in self.elements.iter().enumerate() {
            if el.len() != npe {
                return Err(Error::InvalidMesh(format!("element {e} has {} nodes, expected {npe}", el.len())));
            }
            if let Some(&bad) = el.iter().find(|&&v| v >= self.nodes.len()) {
                return Err(Error::InvalidMesh(format!("element {e} references missing node {bad}")));
            }
            let meas = self.element_measure(e);
            if !(meas > 0.0) {
                return Err(Error::InvalidMesh(format!("element {e} has non-positive measure {meas:e}")));
            }
        }
        self.check_duplicate_nodes()?;

        let mut tagged: HashMap<Vec<usize>, usize> = HashMap::new();
        for (k, b) in self.boundary.iter().enumerate() {
            if b.nodes.len() != self.dim {
                return Err(Error::InvalidMesh(format!("boundary entity {k} has {} nodes", b.nodes.len())));
            }
            let key = sorted(&b.nodes);
            if tagged.insert(key, k).is_some() {
                return Err(Error::InvalidMesh(format!("boundary entity {k} {:?} is tagged twice", b.nodes)));
            }
        }
        let topo = self.topological_boundary();
        for ent in &topo {
            if !tagged.contains_key(ent) {
                let what = if self.dim == 1 { "node" } else { "edge" };
                return Err(Error::InvalidMesh(format!("untagged boundary {what} {ent:?}")));
            }
        }
        if tagged.len() != topo.len() {
            let extra = self
                .boundary
                .iter()
                .enumerate()
                .find(|(_, b)| !topo.contains(&sorted(&b.nodes)))
                .map(|(k, _)| k)
                .unwrap_or(0);
            return Err(Error::InvalidMesh(format!("boundary entity {extra} is not on the mesh boundary")));
        }
        Ok(())
    }

    fn check_duplicate_nodes(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[a][0].total_cmp(&self.nodes[b][0]));
        for w in 0..order.len() {
            let a = order[w];
            for &b in &order[w + 1..] {
                if self.nodes[b][0] - self.nodes[a][0] > 1e-12 {
                    break;
                }
                if dist(&self.nodes[a], &self.nodes[b]) <= 1e-12 {
                    return Err(Error::InvalidMesh(format!("nodes {a} and {b} coincide")));
                }
            }
        }
        Ok(())
    }

    /// Facets (sorted node lists) that belong to exactly one element, in
    /// ascending order.
    fn topological_boundary(&self) -> Vec<Vec<usize>> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for el in &self.elements {
            for skip in 0..el.len() {
                let facet: Vec<usize> = sorted(&el.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect::<Vec<_>>());
                *count.entry(facet).or_insert(0) += 1;
            }
        }
        let mut out: Vec<Vec<usize>> = count.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect();
        out.sort();
        out
    }

    /// Number of distinct element edges (2D) or elements (1D).
    pub fn n_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for el in &self.elements {
            for a in 0..el.len() {
                for b in a + 1..el.len() {
                    edges.push((el[a].min(el[b]), el[a].max(el[b])));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

pub(crate) fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Equispaced mesh of `[0, length]`; the left end carries the inhomogeneous
/// Neumann condition, the right end the homogeneous one.
pub fn build_interval_mesh(n_elements: usize, length: f64) -> Result<Mesh> {
    if n_elements == 0 || !(length > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interval mesh needs n_elements >= 1 and length > 0 (got {n_elements}, {length})"
        )));
    }
    let h = length / n_elements as f64;
    let nodes = (0..=n_elements)
        .map(|i| [if i == n_elements { length } else { i as f64 * h }, 0.0])
        .collect();
    let elements = (0..n_elements).map(|e| vec![e, e + 1]).collect();
    let boundary = vec![
        BoundaryEntity {
            nodes: vec![0],
            tag: BoundaryTag::NeumannG,
        },
        BoundaryEntity {
            nodes: vec![n_elements],
            tag: BoundaryTag::Neumann0,
        },
    ];
    Mesh::new(1, nodes, elements, boundary)
}

/// Square `[0, side]^2` with a sound-soft circular hole.
///
/// A structured grid of right triangles is built first; triangles touching
/// the open disc are removed and the nodes on the resulting inner boundary
/// are projected radially onto the circle. The circle is tagged Dirichlet,
/// the outer square impedance. `radius = 0` yields the plain grid.
pub fn build_scatterer_mesh(side: f64, center: Point, radius: f64, target_h: f64) -> Result<Mesh> {
    if !(side > 0.0) || !(target_h > 0.0) || radius < 0.0 {
        return Err(Error::InvalidArgument("scatterer mesh needs side > 0, target_h > 0, radius >= 0".into()));
    }
    if radius > 0.0 {
        let margin = center[0].min(center[1]).min(side - center[0]).min(side - center[1]);
        if radius >= margin {
            return Err(Error::InvalidArgument("circle must lie strictly inside the square".into()));
        }
        if target_h >= radius {
            return Err(Error::InvalidArgument("target_h must be smaller than the circle radius".into()));
        }
    }
    let n = (side / target_h).ceil().max(1.0) as usize;
    let h = side / n as f64;
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let coord = |i: usize, j: usize| -> Point {
        let x = if i == n { side } else { i as f64 * h };
        let y = if j == n { side } else { j as f64 * h };
        [x, y]
    };
    let mut nodes: Vec<Point> = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push(coord(i, j));
        }
    }
    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            tris.push([a, b, c]);
            tris.push([a, c, d]);
        }
    }

    let inside = |p: &Point| radius > 0.0 && dist(p, &center) < radius;
    tris.retain(|t| !t.iter().any(|&v| inside(&nodes[v])));

    // Boundary edges of what is left; those not on the outer square form the rim.
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let on_outer = |p: &Point| p[0] == 0.0 || p[1] == 0.0 || p[0] == side || p[1] == side;
    let mut boundary_edges: Vec<(usize, usize)> = edge_count.into_iter().filter(|(_, c)| *c == 1).map(|(e, _)| e).collect();
    boundary_edges.sort_unstable();
    let mut rim_nodes: Vec<usize> = Vec::new();
    let mut tags = Vec::with_capacity(boundary_edges.len());
    for &(a, b) in &boundary_edges {
        let outer = on_outer(&nodes[a]) && on_outer(&nodes[b]) && (nodes[a][0] == nodes[b][0] || nodes[a][1] == nodes[b][1]);
        if outer {
            tags.push(BoundaryTag::Impedance);
        } else {
            tags.push(BoundaryTag::Dirichlet);
            rim_nodes.push(a);
            rim_nodes.push(b);
        }
    }
    for &v in &rim_nodes {
        let p = nodes[v];
        let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
        let r = (dx * dx + dy * dy).sqrt();
        nodes[v] = [center[0] + radius * dx / r, center[1] + radius * dy / r];
    }

    // Compact node numbering, keeping the grid order.
    let mut used = vec![false; nodes.len()];
    for t in &tris {
        for &v in t {
            used[v] = true;
        }
    }
    let mut new_id = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            new_id[v] = kept.len();
            kept.push(nodes[v]);
        }
    }
    let elements: Vec<Vec<usize>> = tris.iter().map(|t| t.iter().map(|&v| new_id[v]).collect()).collect();
    let min_area = 1e-14 * h * h;
    for (e, el) in elements.iter().enumerate() {
        let (a, b, c) = (kept[el[0]], kept[el[1]], kept[el[2]]);
        let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
        if area < min_area {
            return Err(Error::InvalidMesh(format!(
                "triangle {e} degenerates after snapping (area {area:e}, h = {h})"
            )));
        }
    }
    let boundary = boundary_edges
        .iter()
        .zip(tags)
        .map(|(&(a, b), tag)| BoundaryEntity {
            nodes: vec![new_id[a], new_id[b]],
            tag,
        })
        .collect();
    Mesh::new(2, kept, elements, boundary)
}

/// Parses the line-based mesh text format.
pub fn load_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let perr = |line: usize, msg: String| Error::MeshParse { line, msg };

    let header = |key: &str, lines: &mut dyn Iterator<Item = (usize, &str)>| -> Result<(usize, usize)> {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, format!("missing `{key}` header")))?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(perr(ln, format!("expected `{key} <count>`")));
        }
        let v = it
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| perr(ln, format!("`{key}` needs a non-negative integer")))?;
        if it.next().is_some() {
            return Err(perr(ln, "trailing tokens".into()));
        }
        Ok((ln, v))
    };

    let (dim_line, dim) = header("dim", &mut lines)?;
    if dim != 1 && dim != 2 {
        return Err(perr(dim_line, format!("dim must be 1 or 2, got {dim}")));
    }
    let (_, n_nodes) = header("nodes", &mut lines)?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in nodes".into()))?;
        let vals: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| perr(ln, format!("bad coordinate `{s}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != dim || vals.iter().any(|v| !v.is_finite()) {
            return Err(perr(ln, format!("expected {dim} finite coordinates")));
        }
        nodes.push([vals[0], if dim == 2 { vals[1] } else { 0.0 }]);
    }
    let (_, n_el) = header("elements", &mut lines)?;
    let mut elements = Vec::with_capacity(n_el);
    for _ in 0..n_el {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in elements".into()))?;
        let ids = parse_ids(l, ln)?;
        if ids.len() != dim + 1 {
            return Err(perr(ln, format!("element needs {} node ids", dim + 1)));
        }
        if ids.iter().any(|&v| v >= n_nodes) {
            return Err(perr(ln, "node id out of range".into()));
        }
        elements.push(ids);
    }
    let (_, n_b) = header("boundary", &mut lines)?;
    let mut boundary = Vec::with_capacity(n_b);
    for _ in 0..n_b {
        let (ln, l) = lines.next().ok_or_else(|| perr(0, "unexpected end of file in boundary".into()))?;
        let (ids_part, tag_word) = l.rsplit_once(char::is_whitespace).ok_or_else(|| perr(ln, "missing tag word".into()))?;
        let tag = BoundaryTag::parse(tag_word).ok_or_else(|| perr(ln, format!("unknown tag `{tag_word}`")))?;
        let ids = parse_ids(ids_part, ln)?;
        if ids.len() != dim {
            return Err(perr(ln, format!("boundary entity needs {dim} node ids")));
        }
        boundary.push(BoundaryEntity { nodes: ids, tag });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(perr(ln, "unexpected trailing content".into()));
    }
    Mesh::new(dim, nodes, elements, boundary)
}

fn parse_ids(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<usize>().map_err(|_| Error::MeshParse {
                line,
                msg: format!("bad node id `{t}`"),
            })
        })
        .collect()
}

/// Canonical text form understood by [`load_mesh`].
pub fn save_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dim {}", mesh.dim);
    let _ = writeln!(out, "nodes {}", mesh.nodes.len());
    for p in &mesh.nodes {
        if mesh.dim == 1 {
            let _ = writeln!(out, "{:?}", p[0]);
        } else {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
    }
    let _ = writeln!(out, "elements {}", mesh.elements.len());
    for el in &mesh.elements {
        let _ = writeln!(out, "{}", join_ids(el));
    }
    let _ = writeln!(out, "boundary {}", mesh.boundary.len());
    for b in &mesh.boundary {
        let _ = writeln!(out, "{} {}", join_ids(&b.nodes), b.tag);
    }
    out
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Containing element and barycentric coordinates of a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLocation {
    pub element: usize,
    pub bary: Vec<f64>,
}

const LOCATE_TOL: f64 = 1e-10;

fn barycentric(mesh: &Mesh, e: usize, p: &Point) -> Vec<f64> {
    let el = &mesh.elements[e];
    let n = &mesh.nodes;
    if mesh.dim == 1 {
        let (x0, x1) = (n[el[0]][0], n[el[1]][0]);
        let t = (p[0] - x0) / (x1 - x0);
        vec![1.0 - t, t]
    } else {
        let (a, b, c) = (n[el[0]], n[el[1]], n[el[2]]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        vec![1.0 - l1 - l2, l1, l2]
    }
}

fn clamp_bary(mut bary: Vec<f64>) -> Vec<f64> {
    for b in &mut bary {
        *b = b.clamp(0.0, 1.0);
    }
    let s: f64 = bary.iter().sum();
    for b in &mut bary {
        *b /= s;
    }
    bary
}

/// Finds the lowest-index element containing `p` within a 1e-10 tolerance.
pub fn locate(mesh: &Mesh, p: &Point) -> Option<PointLocation> {
    (0..mesh.elements.len()).find_map(|e| {
        let bary = barycentric(mesh, e, p);
        if bary.iter().all(|&b| b >= -LOCATE_TOL) {
            Some(PointLocation {
                element: e,
                bary: clamp_bary(bary),
            })
        } else {
            None
        }
    })
}

/// Like [`locate`], but falls back to the element whose most negative
/// barycentric coordinate is largest, projecting onto it. Used to transfer
/// fields between meshes whose curved boundaries are approximated differently.
pub fn locate_nearest(mesh: &Mesh, p: &Point) -> PointLocation {
    if let Some(loc) = locate(mesh, p) {
        return loc;
    }
    let (element, bary) = (0..mesh.elements.len())
        .map(|e| (e, barycentric(mesh, e, p)))
        .max_by(|(_, a), (_, b)| {
            let ma = a.iter().copied().fold(f64::INFINITY, f64::min);
            let mb = b.iter().copied().fold(f64::INFINITY, f64::min);
            ma.total_cmp(&mb)
        })
        .expect("mesh has elements");
    PointLocation {
        element,
        bary: clamp_bary(bary),
    }
}

fn rows_to_matrix(mesh: &Mesh, locs: &[PointLocation]) -> CsrMatrix<f64> {
    let triplets = locs.iter().enumerate().flat_map(|(i, loc)| {
        let el = &mesh.elements[loc.element];
        el.iter()
            .zip(loc.bary.iter())
            .filter(|(_, &w)| w != 0.0)
            .map(move |(&v, &w)| (i, v, w))
    });
    CsrMatrix::from_triplets(locs.len(), mesh.n_nodes(), triplets)
}

/// Sparse P1 interpolation operator from nodal values to `points`.
pub fn interpolation_matrix(mesh: &Mesh, points: &[Point]) -> Result<CsrMatrix<f64>> {
    let locs = points
        .iter()
        .enumerate()
        .map(|(index, p)| locate(mesh, p).ok_or(Error::PointOutside { index, point: *p }))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows_to_matrix(mesh, &locs))
}

/// Interpolation operator that snaps points slightly outside the mesh onto
/// the nearest element instead of failing.
pub fn interpolation_matrix_nearest(mesh: &Mesh, points: &[Point]) -> CsrMatrix<f64> {
    let locs: Vec<PointLocation> = points.iter().map(|p| locate_nearest(mesh, p)).collect();
    rows_to_matrix(mesh, &locs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "dim 2\nnodes 3\n0.0 0.0\n1.0 0.0\n0.0 1.0\nelements 1\n0 1 2\nboundary 3\n0 1 impedance\n1 2 dirichlet\n2 0 neumann_0\n";

    #[test]
    fn interval_spacing() {
        let m = build_interval_mesh(100, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 101);
        let spacings: Vec<f64> = (0..100).map(|e| m.element_measure(e)).collect();
        let max = spacings.iter().copied().fold(f64::MIN, f64::max);
        let min = spacings.iter().copied().fold(f64::MAX, f64::min);
        assert!(max - min <= 1e-14);
        assert!((spacings[0] - 0.01).abs() < 1e-15);
        assert_eq!(m.nodes_with_tag(BoundaryTag::NeumannG), vec![0]);
        assert_eq!(m.nodes_with_tag(BoundaryTag::Neumann0), vec![100]);

        let m = build_interval_mesh(2, 0.5).unwrap();
        let xs: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5]);
        let m = build_interval_mesh(1, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 2);
    }

    #[test]
    fn plain_square_grid() {
        let m = build_scatterer_mesh(1.0, [0.5, 0.5], 0.0, 0.25).unwrap();
        assert_eq!(m.elements().len(), 2 * 4 * 4);
        assert_eq!(m.n_nodes(), 25);
        let (v, e, f) = (m.n_nodes() as i64, m.n_edges() as i64, m.elements().len() as i64);
        assert_eq!(v - e + f, 1);
        assert!(m.dirichlet_nodes().is_empty());
    }

    #[test]
    fn scatterer_rim_on_circle() {
        let (c, r) = ([0.5, 0.5], 0.2);
        let m = build_scatterer_mesh(1.0, c, r, 1.0 / 30.0).unwrap();
        for &v in &m.dirichlet_nodes() {
            assert!((dist(&m.nodes()[v], &c) - r).abs() <= 1e-12);
        }
        for e in 0..m.elements().len() {
            assert!(m.element_measure(e) > 0.0);
        }
        let (v, e, f) = (m.n_nodes() as i64, m.n_edges() as i64, m.elements().len() as i64);
        assert_eq!(v - e + f, 0, "annulus has Euler characteristic zero");
        let n = m.n_nodes() as f64;
        assert!((n - 854.0).abs() <= 0.15 * 854.0, "{n} nodes");
    }

    #[test]
    fn minimal_triangle_and_roundtrip() {
        let m = load_mesh(TRIANGLE).unwrap();
        assert_eq!(m.n_nodes(), 3);
        assert_eq!(save_mesh(&m), TRIANGLE);
        let sq = build_scatterer_mesh(1.0, [0.5, 0.5], 0.3, 0.1).unwrap();
        let again = load_mesh(&save_mesh(&sq)).unwrap();
        assert_eq!(again, sq);
    }

    #[test]
    fn untagged_edge_is_named() {
        let text = "dim 2\nnodes 3\n0 0\n1 0\n0 1\nelements 1\n0 1 2\nboundary 2\n0 1 impedance\n1 2 dirichlet\n";
        match load_mesh(text) {
            Err(Error::InvalidMesh(msg)) => assert!(msg.contains("[0, 2]"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "dim 2\nnodes 1\n0 zero\n";
        assert!(matches!(load_mesh(text), Err(Error::MeshParse { line: 3, .. })));
        let text = TRIANGLE.replace("neumann_0", "robin");
        assert!(matches!(load_mesh(&text), Err(Error::MeshParse { line: 11, .. })));
    }

    #[test]
    fn inverted_element_rejected() {
        let text = TRIANGLE.replace("0 1 2\nboundary", "0 2 1\nboundary");
        assert!(matches!(load_mesh(&text), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn interpolation_rows() {
        let m = build_interval_mesh(4, 1.0).unwrap();
        let p = interpolation_matrix(&m, &[[0.5, 0.0], [0.125, 0.0]]).unwrap();
        assert_eq!(p.get(0, 2), 1.0);
        assert_eq!(p.row(0).count(), 1);
        assert!((p.get(1, 0) - 0.5).abs() < 1e-15 && (p.get(1, 1) - 0.5).abs() < 1e-15);
        assert!(matches!(
            interpolation_matrix(&m, &[[0.2, 0.0], [1.5, 0.0]]),
            Err(Error::PointOutside { index: 1, .. })
        ));
    }

    #[test]
    fn interface_point_goes_to_lowest_element() {
        let m = build_interval_mesh(4, 1.0).unwrap();
        assert_eq!(locate(&m, &[0.25, 0.0]).unwrap().element, 0);
    }

    #[test]
    fn linear_reproduction_2d() {
        let m = build_scatterer_mesh(1.0, [0.5, 0.5], 0.2, 0.1).unwrap();
        let f = |p: &Point| 2.0 * p[0] - 3.0 * p[1] + 0.5;
        let vals: Vec<f64> = m.nodes().iter().map(f).collect();
        let pts = [[0.05, 0.93], [0.91, 0.12], [0.33, 0.07]];
        let p = interpolation_matrix(&m, &pts).unwrap();
        let out = p.mul_vec(&vals);
        for (i, q) in pts.iter().enumerate() {
            assert!((out[i] - f(q)).abs() < 1e-12);
        }
    }
}
