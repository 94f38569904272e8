//! Wavefront OBJ export of a map over its masked grid.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::field::MapField;

/// Vertices are the masked nodes in row-major order; faces are 1-based
/// vertex indices, counter-clockwise in the parameter plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

/// Two triangles per cell with all four corners masked; a boundary cell
/// with exactly three masked corners keeps the one triangle they span.
pub fn triangulate(u: &MapField) -> Mesh {
    let grid = u.grid();
    let n = grid.n();
    let mut vertex_of = vec![0usize; grid.len()];
    let mut vertices = Vec::with_capacity(grid.masked_count());
    for idx in grid.masked_indices() {
        vertices.push(u.get(idx));
        vertex_of[idx] = vertices.len();
    }
    let mut faces = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            // a b
            // c d  with j increasing upward, so (c, d, b) runs counter-clockwise.
            let c = vertex_of[grid.index(i, j)];
            let d = vertex_of[grid.index(i + 1, j)];
            let a = vertex_of[grid.index(i, j + 1)];
            let b = vertex_of[grid.index(i + 1, j + 1)];
            match (a > 0, b > 0, c > 0, d > 0) {
                (true, true, true, true) => {
                    faces.push([c, d, b]);
                    faces.push([c, b, a]);
                }
                (false, true, true, true) => faces.push([c, d, b]),
                (true, false, true, true) => faces.push([c, d, a]),
                (true, true, false, true) => faces.push([d, b, a]),
                (true, true, true, false) => faces.push([c, b, a]),
                _ => {}
            }
        }
    }
    Mesh { vertices, faces }
}

/// `{:?}` on f64 prints the shortest string that parses back to the same
/// value, so a reload is exact.
pub fn write_obj<W: Write>(mesh: &Mesh, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(
        out,
        "# c1beta mesh: {} vertices, {} faces",
        mesh.vertices.len(),
        mesh.faces.len()
    )?;
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0], f[1], f[2])?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_mesh(u: &MapField, path: &Path) -> Result<Mesh> {
    let mesh = triangulate(u);
    write_obj(&mesh, File::create(path)?)?;
    Ok(mesh)
}

/// Reads back the subset of OBJ that [`write_obj`] emits.
pub fn read_obj(path: &Path) -> Result<Mesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let bad = |line: usize, what: &str| Error::Format(format!("{}:{line}: {what}", path.display()));
    for (k, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> = parts
                    .map(|p| p.parse::<f64>().map_err(|_| bad(k + 1, "bad coordinate")))
                    .collect::<Result<_>>()?;
                if xyz.len() != 3 {
                    return Err(bad(k + 1, "vertex needs three coordinates"));
                }
                vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let ids: Vec<usize> = parts
                    .map(|p| {
                        p.split('/')
                            .next()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad(k + 1, "bad face index"))
                    })
                    .collect::<Result<_>>()?;
                if ids.len() != 3 || ids.iter().any(|&i| i == 0 || i > vertices.len()) {
                    return Err(bad(k + 1, "face must reference three known vertices"));
                }
                faces.push([ids[0], ids[1], ids[2]]);
            }
            _ => {}
        }
    }
    Ok(Mesh { vertices, faces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    #[test]
    fn flat_disk_is_planar_and_consistently_oriented() {
        let g = Grid::disk(1.0, 33).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x, y, 0.0));
        let m = triangulate(&u);
        assert_eq!(m.vertices.len(), g.masked_count());
        assert!(m.vertices.iter().all(|v| v.z == 0.0));
        let mut area = 0.0;
        for f in &m.faces {
            let [a, b, c] = f.map(|i| m.vertices[i - 1]);
            let z = (b - a).cross(&(c - a)).z;
            assert!(z > 0.0);
            area += 0.5 * z;
        }
        // The polygon inscribed in the masked nodes is within a cell-wide
        // ring of the unit disk.
        let h = g.spacing();
        assert!(area < std::f64::consts::PI && area > std::f64::consts::PI * (1.0 - 2.0 * h));
    }

    #[test]
    fn single_cell_clipping() {
        // Nodes at multiples of 1/2 on the unit disk: 13 are masked. The
        // four inner cells are whole; the eight cells next to an axis tip
        // have three masked corners; the four corner cells have one.
        let g = Grid::new(1.0, 5, 1.0).unwrap();
        let u = MapField::from_fn_masked(g, |x, y| Vector3::new(x, y, 0.0));
        let m = triangulate(&u);
        assert_eq!(m.vertices.len(), 13);
        assert_eq!(m.faces.len(), 4 * 2 + 8);
    }
}
