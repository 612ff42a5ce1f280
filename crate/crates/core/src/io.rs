//! Flat little-endian arrays with a JSON header, and solution directories.
//!
//! An array file holds an 8-byte little-endian header length, the JSON
//! header `{"name", "dtype", "shape"}`, then the raw values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ClosedForm;
use crate::pde::{BoundaryData, DiskMesh, SolutionField, SolveInfo};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

fn write_array(path: &Path, header: &ArrayHeader, bytes: &[u8]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

fn read_array(path: &Path) -> Result<(ArrayHeader, Vec<u8>)> {
    let mut f = fs::File::open(path)?;
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    f.read_exact(&mut json)?;
    let header: ArrayHeader = serde_json::from_slice(&json)?;
    let mut data = Vec::new();
    f.read_to_end(&mut data)?;
    Ok((header, data))
}

pub fn write_f64(path: &Path, name: &str, shape: &[usize], values: &[f64]) -> Result<()> {
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::InvalidParameter(format!("shape {shape:?} does not match {} values", values.len())));
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = ArrayHeader {
        name: name.into(),
        dtype: "f64".into(),
        shape: shape.to_vec(),
    };
    write_array(path, &header, &bytes)
}

pub fn write_u32(path: &Path, name: &str, shape: &[usize], values: &[u32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = ArrayHeader {
        name: name.into(),
        dtype: "u32".into(),
        shape: shape.to_vec(),
    };
    write_array(path, &header, &bytes)
}

pub fn read_f64(path: &Path) -> Result<(ArrayHeader, Vec<f64>)> {
    let (header, data) = read_array(path)?;
    if header.dtype != "f64" || data.len() != 8 * header.shape.iter().product::<usize>() {
        return Err(Error::InvalidParameter(format!("{} is not a valid f64 array", path.display())));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, values))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionMeta {
    pub radius: f64,
    pub h: f64,
    pub epsilon: f64,
    pub boundary: BoundaryData,
    pub info: SolveInfo,
    pub arrays: Vec<String>,
}

/// Writes `solution.meta.json` plus `nodes.bin`, `triangles.bin`, `u.bin`
/// and `grad.bin`; with `reference`, also `reference.bin`.
pub fn save_solution(dir: &Path, sol: &SolutionField, g: &BoundaryData, reference: Option<&ClosedForm>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mesh = &sol.mesh;
    let n = mesh.num_nodes();
    let nodes: Vec<f64> = mesh.nodes.iter().flat_map(|p| [p.x, p.y]).collect();
    write_f64(&dir.join("nodes.bin"), "nodes", &[n, 2], &nodes)?;
    let tris: Vec<u32> = mesh.triangles.iter().flat_map(|t| t.map(|v| v as u32)).collect();
    write_u32(&dir.join("triangles.bin"), "triangles", &[mesh.num_triangles(), 3], &tris)?;
    write_f64(&dir.join("u.bin"), "u", &[n], &sol.u)?;
    let grad: Vec<f64> = sol.nodal_grad.iter().flat_map(|g| [g.x, g.y]).collect();
    write_f64(&dir.join("grad.bin"), "recovered_gradient", &[n, 2], &grad)?;
    let mut arrays = vec!["nodes.bin".into(), "triangles.bin".into(), "u.bin".into(), "grad.bin".into()];
    if let Some(u0) = reference {
        let vals: Vec<f64> = mesh.nodes.iter().map(|&p| u0.eval(p)).collect();
        write_f64(&dir.join("reference.bin"), "reference", &[n], &vals)?;
        arrays.push("reference.bin".into());
    }
    let meta = SolutionMeta {
        radius: mesh.radius,
        h: mesh.h_target,
        epsilon: sol.info.epsilon,
        boundary: g.clone(),
        info: sol.info.clone(),
        arrays,
    };
    fs::write(dir.join("solution.meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Loads a saved solution, regenerating the mesh and checking that its
/// nodes match the stored ones bitwise.
pub fn load_solution(dir: &Path) -> Result<(SolutionField, SolutionMeta)> {
    let meta: SolutionMeta = serde_json::from_str(&fs::read_to_string(dir.join("solution.meta.json"))?)?;
    let mesh = DiskMesh::new(meta.radius, meta.h)?;
    let (_, nodes) = read_f64(&dir.join("nodes.bin"))?;
    let same = nodes.len() == 2 * mesh.num_nodes()
        && mesh
            .nodes
            .iter()
            .zip(nodes.chunks_exact(2))
            .all(|(p, q)| p.x.to_bits() == q[0].to_bits() && p.y.to_bits() == q[1].to_bits());
    if !same {
        return Err(Error::InvalidParameter(format!(
            "stored mesh in {} does not match the regenerated mesh",
            dir.display()
        )));
    }
    let (_, u) = read_f64(&dir.join("u.bin"))?;
    let sol = SolutionField::from_nodal(Arc::new(mesh), u, meta.info.clone())?;
    Ok((sol, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{build_family, FamilyKind, FamilySpec};
    use crate::pde::DiskProblem;

    #[test]
    fn arrays_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let vals = [1.5, -2.0, f64::MIN_POSITIVE, 3.25];
        write_f64(&p, "a", &[2, 2], &vals).unwrap();
        let (h, back) = read_f64(&p).unwrap();
        assert_eq!(h.shape, vec![2, 2]);
        assert_eq!(back, vals);
        assert!(write_f64(&p, "a", &[3], &vals).is_err());
    }

    #[test]
    fn solutions_round_trip() {
        let field = build_family(&FamilySpec::new(FamilyKind::Constant, vec![1.0, 0.0, 1.0])).unwrap();
        let g = BoundaryData::cos(2);
        let sol = DiskProblem::new(&field, 1.0, 1.0, 1.0 / 16.0).unwrap().solve(&g).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_solution(dir.path(), &sol, &g, None).unwrap();
        let (back, meta) = load_solution(dir.path()).unwrap();
        assert_eq!(back.u, sol.u);
        assert_eq!(back.nodal_grad, sol.nodal_grad);
        assert_eq!(meta.boundary, g);
    }
}
