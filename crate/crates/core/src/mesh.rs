//! Triangulations of convex polygons with an oriented edge skeleton.
//!
//! Cells are stored counterclockwise. Every edge shared by two cells becomes an
//! [`InteriorEdge`] with a fixed `t_plus`/`t_minus` pair and a unit normal that
//! points out of `t_plus` into `t_minus`; jumps are always `trace(t_plus) -
//! trace(t_minus)`. Edges with a single incident cell become [`BoundaryEdge`]s
//! carrying the outward normal.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::geometry::{midpoint, norm, orient, sub, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub endpoints: [usize; 2],
    pub t_plus: usize,
    pub t_minus: usize,
    /// Unit normal, outward for `t_plus`.
    pub normal: [f64; 2],
    pub length: f64,
}

impl InteriorEdge {
    /// Swaps the two sides and negates the normal.
    pub fn flipped(&self) -> Self {
        InteriorEdge {
            endpoints: self.endpoints,
            t_plus: self.t_minus,
            t_minus: self.t_plus,
            normal: [-self.normal[0], -self.normal[1]],
            length: self.length,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub endpoints: [usize; 2],
    pub cell: usize,
    /// Unit outward normal.
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
    h_min: f64,
}

impl Mesh {
    /// Builds a mesh from raw vertices and counterclockwise cells, validating
    /// orientation and manifoldness.
    pub fn from_parts(vertices: Vec<Point>, cells: Vec<[usize; 3]>) -> Result<Self> {
        if cells.is_empty() {
            return invalid("mesh has no cells");
        }
        for (k, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return invalid(format!("cell {k} references a missing vertex"));
            }
            let area2 = orient(vertices[cell[0]], vertices[cell[1]], vertices[cell[2]]);
            if !(area2 > 0.0) {
                return Err(Error::Topology(format!(
                    "cell {k} has non-positive signed area {}",
                    0.5 * area2
                )));
            }
        }
        let (interior_edges, boundary_edges) = build_edges(&vertices, &cells)?;
        let diameters = cells.iter().map(|c| cell_diameter(&vertices, c));
        let (h_min, h_max) = diameters.fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Ok(Mesh {
            vertices,
            cells,
            interior_edges,
            boundary_edges,
            h_max,
            h_min,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Total number of edges (interior plus boundary).
    pub fn n_edges(&self) -> usize {
        self.interior_edges.len() + self.boundary_edges.len()
    }

    /// Largest cell diameter.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn h_min(&self) -> f64 {
        self.h_min
    }

    pub fn cell_vertices(&self, cell: usize) -> [Point; 3] {
        let c = self.cells[cell];
        [self.vertices[c[0]], self.vertices[c[1]], self.vertices[c[2]]]
    }

    pub fn cell_area(&self, cell: usize) -> f64 {
        let [a, b, c] = self.cell_vertices(cell);
        0.5 * orient(a, b, c)
    }

    pub fn cell_centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.cell_vertices(cell);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|k| self.cell_area(k)).sum()
    }

    /// Copy of this mesh with the orientation of selected interior edges reversed.
    pub fn with_flipped_edges(&self, flip: impl Fn(usize) -> bool) -> Mesh {
        let mut out = self.clone();
        for (i, e) in out.interior_edges.iter_mut().enumerate() {
            if flip(i) {
                *e = e.flipped();
            }
        }
        out
    }

    /// Writes `vertices N cells M`, then `x y` per vertex, then `i j k` per cell.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {} cells {}", self.n_vertices(), self.n_cells())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        for c in &self.cells {
            writeln!(w, "{} {} {}", c[0], c[1], c[2])?;
        }
        Ok(())
    }
}

fn cell_diameter(vertices: &[Point], c: &[usize; 3]) -> f64 {
    let [a, b, d] = [vertices[c[0]], vertices[c[1]], vertices[c[2]]];
    norm(sub(a, b)).max(norm(sub(b, d))).max(norm(sub(d, a)))
}

/// Outward unit normal of the directed edge a -> b of a counterclockwise cell.
fn outward_normal(a: Point, b: Point) -> ([f64; 2], f64) {
    let t = sub(b, a);
    let len = norm(t);
    ([t[1] / len, -t[0] / len], len)
}

/// Splits the edge set of `cells` into oriented interior edges and boundary edges.
///
/// `t_plus` is the incident cell with the smaller index.
pub fn build_interior_edges(vertices: &[Point], cells: &[[usize; 3]]) -> Result<Vec<InteriorEdge>> {
    build_edges(vertices, cells).map(|(interior, _)| interior)
}

fn build_edges(vertices: &[Point], cells: &[[usize; 3]]) -> Result<(Vec<InteriorEdge>, Vec<BoundaryEdge>)> {
    // key: sorted vertex pair; value: (first-seen order, incident (cell, directed a->b))
    let mut incident: HashMap<(usize, usize), (usize, Vec<(usize, usize, usize)>)> = HashMap::new();
    for (k, cell) in cells.iter().enumerate() {
        for l in 0..3 {
            let a = cell[l];
            let b = cell[(l + 1) % 3];
            if a == b {
                return Err(Error::Topology(format!("cell {k} is degenerate")));
            }
            let key = (a.min(b), a.max(b));
            let next = incident.len();
            incident.entry(key).or_insert((next, Vec::new())).1.push((k, a, b));
        }
    }
    let mut entries: Vec<_> = incident.into_iter().collect();
    entries.sort_by_key(|(_, (order, _))| *order);

    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for ((lo, hi), (_, sides)) in entries {
        match sides.as_slice() {
            [(cell, a, b)] => {
                let (normal, length) = outward_normal(vertices[*a], vertices[*b]);
                boundary.push(BoundaryEdge {
                    endpoints: [*a, *b],
                    cell: *cell,
                    normal,
                    length,
                });
            }
            [first, second] => {
                if first.1 == second.1 {
                    return Err(Error::Topology(format!(
                        "edge ({lo}, {hi}) traversed in the same direction by cells {} and {}",
                        first.0, second.0
                    )));
                }
                let (plus, minus) = if first.0 < second.0 {
                    (first, second)
                } else {
                    (second, first)
                };
                let (normal, length) = outward_normal(vertices[plus.1], vertices[plus.2]);
                interior.push(InteriorEdge {
                    endpoints: [lo, hi],
                    t_plus: plus.0,
                    t_minus: minus.0,
                    normal,
                    length,
                });
            }
            _ => {
                return Err(Error::Topology(format!(
                    "edge ({lo}, {hi}) shared by {} cells",
                    sides.len()
                )))
            }
        }
    }
    Ok((interior, boundary))
}

/// Structured mesh of the unit square with `n` squares per side, each split
/// along its lower-left to upper-right diagonal.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    rectangle_mesh([0.0, 0.0], [1.0, 1.0], n)
}

/// Structured diagonal mesh of the axis-aligned rectangle `[lo, hi]`.
pub fn rectangle_mesh(lo: Point, hi: Point, n: usize) -> Result<Mesh> {
    if n == 0 {
        return invalid("cells per side must be at least 1");
    }
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return invalid("rectangle corners must satisfy lo < hi");
    }
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            let x = lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64;
            let y = lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64;
            vertices.push([x, y]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * np + i;
            let v10 = v00 + 1;
            let v01 = v00 + np;
            let v11 = v01 + 1;
            cells.push([v00, v10, v11]);
            cells.push([v00, v11, v01]);
        }
    }
    Mesh::from_parts(vertices, cells)
}

/// Mesh of a convex polygon: a fan from the vertex centroid, uniformly refined
/// `levels` times.
pub fn convex_polygon_mesh(polygon: &[Point], levels: usize) -> Result<Mesh> {
    if polygon.len() < 3 {
        return invalid("polygon needs at least three vertices");
    }
    let m = polygon.len();
    for i in 0..m {
        let turn = orient(polygon[i], polygon[(i + 1) % m], polygon[(i + 2) % m]);
        if !(turn > 0.0) {
            return invalid("polygon must be strictly convex and counterclockwise");
        }
    }
    let centre = [
        polygon.iter().map(|p| p[0]).sum::<f64>() / m as f64,
        polygon.iter().map(|p| p[1]).sum::<f64>() / m as f64,
    ];
    let mut vertices = polygon.to_vec();
    vertices.push(centre);
    let cells = (0..m).map(|i| [i, (i + 1) % m, m]).collect();
    let mut mesh = Mesh::from_parts(vertices, cells)?;
    for _ in 0..levels {
        mesh = refine_uniform(&mesh)?;
    }
    Ok(mesh)
}

/// Splits every cell into four congruent children through its edge midpoints.
///
/// Children of cell `k` occupy indices `4k..4k+4`; the fourth is the middle one.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint_of = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(midpoint(vertices[a], vertices[b]));
            vertices.len() - 1
        })
    };
    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    for &[a, b, c] in &mesh.cells {
        let ab = midpoint_of(a, b, &mut vertices);
        let bc = midpoint_of(b, c, &mut vertices);
        let ca = midpoint_of(c, a, &mut vertices);
        cells.push([a, ab, ca]);
        cells.push([ab, b, bc]);
        cells.push([ca, bc, c]);
        cells.push([ab, bc, ca]);
    }
    Mesh::from_parts(vertices, cells)
}
