//! Parameter file format: a little-endian `u32` header length, a JSON
//! header listing tensor names and shapes in order, then the flat data as
//! little-endian `f32`. The writer emits tensors in the order given, so a
//! fixed registration order makes files byte-reproducible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const FORMAT_NAME: &str = "dualstain-params";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    tensors: Vec<TensorMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

pub fn save_params<T: Element, P: AsRef<Path>>(
    path: P,
    tensors: &[(String, &Tensor<T>)],
) -> Result<()> {
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorMeta { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for (_, t) in tensors {
        for v in t.data() {
            w.write_all(&(v.to_f64().unwrap() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_params<T: Element, P: AsRef<Path>>(path: P) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let header_len = u32::from_le_bytes(len_buf) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;
    if header.format != FORMAT_NAME {
        return Err(Error::Validation(format!(
            "unrecognized parameter file format {:?}",
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Validation(format!(
            "unsupported parameter file version {}",
            header.version
        )));
    }
    let mut out = Vec::with_capacity(header.tensors.len());
    for meta in header.tensors {
        let n: usize = meta.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            r.read_exact(&mut buf)?;
            data.push(
                T::from_f64(f32::from_le_bytes(buf) as f64)
                    .ok_or_else(|| Error::Validation("unrepresentable parameter value".into()))?,
            );
        }
        out.push((meta.name, Tensor::new(meta.shape, data)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_names_shapes_and_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        let a = Tensor::<f32>::from_vec(vec![1.5, -2.25, 0.0]);
        let b = Tensor::<f32>::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        save_params(&path, &[("a".to_string(), &a), ("b".to_string(), &b)]).unwrap();
        let loaded = load_params::<f32, _>(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "a");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].0, "b");
        assert_eq!(loaded[1].1, b);
    }

    #[test]
    fn writes_are_byte_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::<f64>::from_vec(vec![0.125, 3.5]);
        let p1 = dir.path().join("one.bin");
        let p2 = dir.path().join("two.bin");
        save_params(&p1, &[("t".to_string(), &t)]).unwrap();
        save_params(&p2, &[("t".to_string(), &t)]).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.bin");
        let bogus = serde_json::to_vec(&serde_json::json!({
            "format": "something-else", "version": 1, "tensors": []
        }))
        .unwrap();
        let mut bytes = (bogus.len() as u32).to_le_bytes().to_vec();
        bytes.extend(bogus);
        std::fs::write(&path, bytes).unwrap();
        assert!(load_params::<f32, _>(&path).is_err());
    }
}
