use std::io::Write;
use std::path::Path;

use super::mesh::TriangleMesh;
use super::CadError;

const HEADER: &[u8] = b"binary STL, units mm";

/// One facet as stored in a binary STL.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StlTriangle {
    pub normal: [f32; 3],
    pub vertices: [[f32; 3]; 3],
}

/// Little-endian binary STL: 80-byte header, `u32` count, 50 bytes per facet.
pub fn stl_bytes(mesh: &TriangleMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [b' '; 80];
    header[..HEADER.len()].copy_from_slice(HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for i in 0..mesh.triangles.len() {
        for c in mesh.normal(i) {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for v in mesh.triangle(i) {
            for c in v {
                out.extend_from_slice(&(c as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_stl(mesh: &TriangleMesh, path: &Path) -> Result<(), CadError> {
    std::fs::write(path, stl_bytes(mesh))?;
    Ok(())
}

pub fn write_ascii_stl(mesh: &TriangleMesh, mut w: impl Write) -> Result<(), CadError> {
    writeln!(w, "solid bellow")?;
    for i in 0..mesh.triangles.len() {
        let n = mesh.normal(i);
        writeln!(w, "  facet normal {:e} {:e} {:e}", n[0], n[1], n[2])?;
        writeln!(w, "    outer loop")?;
        for v in mesh.triangle(i) {
            writeln!(w, "      vertex {:e} {:e} {:e}", v[0] as f32, v[1] as f32, v[2] as f32)?;
        }
        writeln!(w, "    endloop")?;
        writeln!(w, "  endfacet")?;
    }
    writeln!(w, "endsolid bellow")?;
    Ok(())
}

pub fn read_stl(bytes: &[u8]) -> Result<Vec<StlTriangle>, CadError> {
    if bytes.len() < 84 {
        return Err(CadError::Stl(format!("{} bytes is shorter than the 84-byte preamble", bytes.len())));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * n {
        return Err(CadError::Stl(format!("count {n} needs {} bytes, file has {}", 84 + 50 * n, bytes.len())));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    Ok((0..n)
        .map(|i| {
            let o = 84 + 50 * i;
            let v = |k: usize| [f(o + 12 * k), f(o + 12 * k + 4), f(o + 12 * k + 8)];
            StlTriangle { normal: v(0), vertices: [v(1), v(2), v(3)] }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tetrahedron_is_284_bytes() {
        let mesh = TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        let bytes = stl_bytes(&mesh);
        assert_eq!(bytes.len(), 284);
        let back = read_stl(&bytes).unwrap();
        assert_eq!(back.len(), 4);
        assert_eq!(back[3].vertices, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(read_stl(&bytes[..283]).is_err());
        assert!(!bytes.starts_with(b"solid"));
    }
}
