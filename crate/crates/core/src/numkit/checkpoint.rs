//! Flat binary parameter container plus a plain-text manifest.
//!
//! Layout of the `.bin` file, all integers little-endian:
//! magic `ISOKPRM1`, u32 entry count, then per entry: u32 name length, the
//! UTF-8 name, u32 ndim, u64 dims, and the f64 values. The manifest lists
//! one `name shape offset bytes` line per entry and is purely informational.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::optim::ParamStore;
use super::{NumError, Tensor};

const MAGIC: &[u8; 8] = b"ISOKPRM1";

pub fn save_params(store: &ParamStore, bin_path: &Path, manifest_path: &Path) -> Result<(), NumError> {
    let mut bin = Vec::new();
    let mut manifest = String::new();
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for name in store.names().map(str::to_string).collect::<Vec<_>>() {
        let t = store.value(&name).expect("iterating known names");
        let offset = bin.len();
        bin.extend_from_slice(&(name.len() as u32).to_le_bytes());
        bin.extend_from_slice(name.as_bytes());
        bin.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            bin.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        let dims = t
            .shape()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("x");
        manifest.push_str(&format!("{name} {dims} {offset} {}\n", bin.len() - offset));
    }
    if let Some(parent) = bin_path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(bin_path)?.write_all(&bin)?;
    fs::File::create(manifest_path)?.write_all(manifest.as_bytes())?;
    Ok(())
}

pub fn load_params(bin_path: &Path) -> Result<ParamStore, NumError> {
    let mut bytes = Vec::new();
    fs::File::open(bin_path)?.read_to_end(&mut bytes)?;
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], NumError> {
        if *at + n > bytes.len() {
            return Err(NumError::CheckpointFormat("truncated file".into()));
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    if take(&mut at, 8)? != MAGIC {
        return Err(NumError::CheckpointFormat("bad magic".into()));
    }
    let count = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap());
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut at, name_len)?.to_vec())
            .map_err(|_| NumError::CheckpointFormat("non-utf8 name".into()))?;
        let ndim = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut at, numel * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| NumError::CheckpointFormat(format!("{name}: {e}")))?;
        store.register(&name, t);
    }
    Ok(store)
}
