//! Model file round-trip. Binary layout documented in
//! docs/model_format.md; magic "CEAF1", little-endian throughout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::domain::FeatureSchema;
use crate::error::{Error, Result};
use crate::forest::{ClassWeighting, ForestModel, ForestParams, Node, Tree};

pub const MODEL_MAGIC: &[u8; 5] = b"CEAF1";

fn wr_u8(w: &mut impl Write, v: u8) -> Result<()> {
    Ok(w.write_all(&[v])?)
}

fn wr_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn wr_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn wr_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn wr_str(w: &mut impl Write, s: &str) -> Result<()> {
    wr_u32(w, s.len() as u32)?;
    Ok(w.write_all(s.as_bytes())?)
}

/// Reads exactly `buf.len()` bytes; a short file is a format error, not an
/// I/O error.
fn rd_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("model file truncated".to_string())
        } else {
            Error::Io(e)
        }
    })
}

fn rd_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    rd_exact(r, &mut b)?;
    Ok(b[0])
}

fn rd_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    rd_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn rd_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    rd_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn rd_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    rd_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn rd_str(r: &mut impl Read) -> Result<String> {
    let len = rd_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("unreasonable string length {len} in model file")));
    }
    let mut buf = vec![0u8; len];
    rd_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("non-UTF-8 string in model file".to_string()))
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    wr_u32(&mut w, model.schema.version)?;
    wr_u32(&mut w, model.schema.names.len() as u32)?;
    for name in &model.schema.names {
        wr_str(&mut w, name)?;
    }
    wr_u32(&mut w, model.classes.len() as u32)?;
    for class in &model.classes {
        wr_str(&mut w, class)?;
    }
    wr_u32(&mut w, model.params.n_trees as u32)?;
    wr_u32(&mut w, model.params.max_leaves as u32)?;
    wr_u32(&mut w, model.params.features_per_split as u32)?;
    wr_u32(&mut w, model.params.min_samples_leaf as u32)?;
    wr_u8(&mut w, match model.params.class_weighting {
        ClassWeighting::None => 0,
        ClassWeighting::Balanced => 1,
    })?;
    wr_u64(&mut w, model.params.seed)?;
    wr_u64(&mut w, model.trained_rows as u64)?;
    wr_u64(&mut w, model.dropped_rows as u64)?;
    wr_u8(&mut w, model.degenerate as u8)?;
    for v in &model.importances {
        wr_f64(&mut w, *v)?;
    }
    wr_u32(&mut w, model.trees.len() as u32)?;
    for tree in &model.trees {
        wr_u32(&mut w, tree.nodes.len() as u32)?;
        for node in &tree.nodes {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    wr_u8(&mut w, 0)?;
                    wr_u32(&mut w, *feature)?;
                    wr_f64(&mut w, *threshold)?;
                    wr_u32(&mut w, *left)?;
                    wr_u32(&mut w, *right)?;
                }
                Node::Leaf { distribution } => {
                    wr_u8(&mut w, 1)?;
                    for p in distribution {
                        wr_f64(&mut w, *p)?;
                    }
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 5];
    rd_exact(&mut r, &mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "bad model magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MODEL_MAGIC)
        )));
    }
    let schema_version = rd_u32(&mut r)?;
    let n_features = rd_u32(&mut r)? as usize;
    let mut names = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        names.push(rd_str(&mut r)?);
    }
    let n_classes = rd_u32(&mut r)? as usize;
    let mut classes = Vec::with_capacity(n_classes);
    for _ in 0..n_classes {
        classes.push(rd_str(&mut r)?);
    }
    let params = ForestParams {
        n_trees: rd_u32(&mut r)? as usize,
        max_leaves: rd_u32(&mut r)? as usize,
        features_per_split: rd_u32(&mut r)? as usize,
        min_samples_leaf: rd_u32(&mut r)? as usize,
        class_weighting: match rd_u8(&mut r)? {
            0 => ClassWeighting::None,
            1 => ClassWeighting::Balanced,
            other => {
                return Err(Error::Format(format!("unknown class weighting tag {other}")));
            }
        },
        seed: rd_u64(&mut r)?,
    };
    let trained_rows = rd_u64(&mut r)? as usize;
    let dropped_rows = rd_u64(&mut r)? as usize;
    let degenerate = match rd_u8(&mut r)? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad degenerate flag {other}"))),
    };
    let mut importances = Vec::with_capacity(n_features);
    for _ in 0..n_features {
        importances.push(rd_f64(&mut r)?);
    }
    let n_trees = rd_u32(&mut r)? as usize;
    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = rd_u32(&mut r)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let node = match rd_u8(&mut r)? {
                0 => {
                    let feature = rd_u32(&mut r)?;
                    let threshold = rd_f64(&mut r)?;
                    let left = rd_u32(&mut r)?;
                    let right = rd_u32(&mut r)?;
                    if feature as usize >= n_features {
                        return Err(Error::Format(format!(
                            "split feature {feature} out of range for {n_features} features"
                        )));
                    }
                    if left as usize >= n_nodes || right as usize >= n_nodes {
                        return Err(Error::Format("child index out of range".to_string()));
                    }
                    Node::Split { feature, threshold, left, right }
                }
                1 => {
                    let mut distribution = Vec::with_capacity(n_classes);
                    for _ in 0..n_classes {
                        distribution.push(rd_f64(&mut r)?);
                    }
                    Node::Leaf { distribution }
                }
                other => return Err(Error::Format(format!("unknown node tag {other}"))),
            };
            nodes.push(node);
        }
        if nodes.is_empty() {
            return Err(Error::Format("tree with no nodes".to_string()));
        }
        trees.push(Tree { nodes });
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing data after model".to_string()));
    }

    Ok(ForestModel {
        schema: FeatureSchema { version: schema_version, names },
        classes,
        params,
        trees,
        importances,
        trained_rows,
        dropped_rows,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{FeatureRow, FeatureTable};
    use crate::forest::{fit_forest, predict};
    use rand::Rng;

    fn trained_model() -> ForestModel {
        let schema =
            FeatureSchema { version: 1, names: (0..5).map(|i| format!("f{i}")).collect() };
        let mut table = FeatureTable::new(schema);
        let mut rng = crate::rng::seeded_rng(11, 0);
        for i in 0..80 {
            let label = if i % 2 == 0 { "shunt" } else { "clamped_artery" };
            let mut values: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            values[0] += if i % 2 == 0 { -2.0 } else { 2.0 };
            table.push(FeatureRow {
                patient_id: "P00".into(),
                window_start_s: i as f64,
                values,
                label: label.into(),
            }).unwrap();
        }
        fit_forest(&table, &ForestParams { n_trees: 8, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trip_preserves_model_and_predictions() {
        let model = trained_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ceaf");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model, loaded);

        let mut rng = crate::rng::seeded_rng(12, 0);
        for _ in 0..1000 {
            let row: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = predict(&model, &row).unwrap();
            let b = predict(&loaded, &row).unwrap();
            assert_eq!(a.0, b.0);
            assert!(a.1.iter().zip(&b.1).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn saved_bytes_are_deterministic() {
        let model = trained_model();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ceaf");
        let b = dir.path().join("b.ceaf");
        save_model(&model, &a).unwrap();
        save_model(&model, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn corrupt_magic_is_a_format_error() {
        let model = trained_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ceaf");
        save_model(&model, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_and_trailing_data_are_format_errors() {
        let model = trained_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ceaf");
        save_model(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));

        let mut padded = bytes.clone();
        padded.push(0);
        std::fs::write(&path, &padded).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_a_missing_input_error() {
        assert!(matches!(
            load_model(Path::new("/nonexistent/m.ceaf")),
            Err(Error::MissingInput(_))
        ));
    }
}
