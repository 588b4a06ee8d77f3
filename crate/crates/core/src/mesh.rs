use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// Indexed triangle mesh. Degenerate triangles are allowed and rasterize to
/// nothing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::OutOfRange(format!(
                "triangle {t:?} indexes past {} vertices",
                vertices.len()
            )));
        }
        Ok(Self { vertices, triangles })
    }

    /// Axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        let vertices = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let triangles = vec![
            [0, 2, 1], [1, 2, 3], // -z
            [4, 5, 6], [5, 7, 6], // +z
            [0, 1, 4], [1, 5, 4], // -y
            [2, 6, 3], [3, 6, 7], // +y
            [0, 4, 2], [2, 4, 6], // -x
            [1, 3, 5], [3, 7, 5], // +x
        ];
        Self { vertices, triangles }
    }

    pub fn transformed(&self, t: &RigidTransform) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn append(&mut self, other: &TriangleMesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
    }

    /// Loads `.obj` or `.stl` (binary or ASCII) by extension. Polygonal OBJ
    /// faces are fan-triangulated.
    pub fn load(path: &Path) -> Result<Self> {
        match extension(path).as_deref() {
            Some("obj") => Self::load_obj(path),
            Some("stl") => Self::load_stl(path),
            _ => Err(Error::schema(path, "mesh", "expected an .obj or .stl file")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match extension(path).as_deref() {
            Some("obj") => self.save_obj(path),
            Some("stl") => self.save_stl(path),
            _ => Err(Error::schema(path, "mesh", "expected an .obj or .stl file")),
        }
    }

    pub fn load_obj(path: &Path) -> Result<Self> {
        let options = tobj::LoadOptions {
            triangulate: true,
            single_index: true,
            ..Default::default()
        };
        let (models, _) = tobj::load_obj(path, &options)
            .map_err(|e| Error::schema(path, "obj", e.to_string()))?;
        let mut mesh = TriangleMesh::default();
        for model in models {
            let m = &model.mesh;
            let vertices = m
                .positions
                .chunks_exact(3)
                .map(|c| Vec3::new(c[0], c[1], c[2]))
                .collect();
            let triangles = m
                .indices
                .chunks_exact(3)
                .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize])
                .collect();
            mesh.append(&TriangleMesh::new(vertices, triangles)?);
        }
        Ok(mesh)
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            for v in &self.vertices {
                writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
            }
            for t in &self.triangles {
                writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load_stl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let indexed = stl_io::read_stl(&mut BufReader::new(file)).map_err(|e| Error::io(path, e))?;
        let vertices = indexed
            .vertices
            .iter()
            .map(|v| Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64))
            .collect();
        let triangles = indexed.faces.iter().map(|f| f.vertices).collect();
        TriangleMesh::new(vertices, triangles)
    }

    /// Binary STL; coordinates are stored as f32.
    pub fn save_stl(&self, path: &Path) -> Result<()> {
        let to_f32 = |v: &Vec3| stl_io::Vertex::new([v.x as f32, v.y as f32, v.z as f32]);
        let triangles: Vec<stl_io::Triangle> = self
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i]);
                let n = (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_default();
                stl_io::Triangle {
                    normal: to_f32(&n),
                    vertices: [to_f32(&a), to_f32(&b), to_f32(&c)],
                }
            })
            .collect();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        stl_io::write_stl(&mut w, triangles.iter()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}
