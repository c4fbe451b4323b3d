//! Checkpoint directory layout: a text index listing parameter names and
//! shapes, one VTEN file per parameter, and the training config that
//! produced it. Round-trips are bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Params;
use crate::scalar::{Dtype, Scalar};
use crate::train::TrainConfig;
use crate::vten;

const INDEX_FILE: &str = "checkpoint.idx";
const PARAMS_DIR: &str = "params";
const CONFIG_FILE: &str = "config.txt";

fn ckpt_err(dir: &Path, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: dir.display().to_string(),
        detail: detail.into(),
    }
}

fn param_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(PARAMS_DIR).join(format!("{name}.vten"))
}

pub fn save<T: Scalar>(dir: &Path, params: &Params<T>, cfg: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir.join(PARAMS_DIR))
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut index = format!("DFBCKPT 1 {} {}\n", T::DTYPE, params.len());
    for (name, tensor) in params.iter() {
        let shape = tensor
            .shape()
            .iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(",");
        index.push_str(&format!("{name}\t{shape}\n"));
        vten::write(&param_file(dir, name), tensor)?;
    }
    fs::write(dir.join(INDEX_FILE), index)
        .map_err(|e| Error::io(format!("writing {}", dir.join(INDEX_FILE).display()), e))?;
    cfg.write(&dir.join(CONFIG_FILE))
}

/// Dtype recorded in the checkpoint index, for dispatching the right
/// monomorphization before loading.
pub fn stored_dtype(dir: &Path) -> Result<Dtype> {
    let index = fs::read_to_string(dir.join(INDEX_FILE))
        .map_err(|e| Error::io(format!("reading {}", dir.join(INDEX_FILE).display()), e))?;
    let header = index
        .lines()
        .next()
        .ok_or_else(|| ckpt_err(dir, "empty checkpoint index"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    match parts.as_slice() {
        ["DFBCKPT", "1", dtype, _count] => match *dtype {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(ckpt_err(dir, format!("unknown dtype '{other}' in index header"))),
        },
        _ => Err(ckpt_err(dir, format!("bad index header '{header}'"))),
    }
}

pub fn load_config(dir: &Path) -> Result<TrainConfig> {
    TrainConfig::read(&dir.join(CONFIG_FILE))
}

pub fn load<T: Scalar>(dir: &Path) -> Result<Params<T>> {
    let index_path = dir.join(INDEX_FILE);
    let index = fs::read_to_string(&index_path)
        .map_err(|e| Error::io(format!("reading {}", index_path.display()), e))?;
    let mut lines = index.lines();
    let header = lines
        .next()
        .ok_or_else(|| ckpt_err(dir, "empty checkpoint index"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let count: usize = match parts.as_slice() {
        ["DFBCKPT", "1", dtype, count] => {
            if *dtype != T::DTYPE.to_string() {
                return Err(ckpt_err(
                    dir,
                    format!("checkpoint stores {dtype}, requested {}", T::DTYPE),
                ));
            }
            count
                .parse()
                .map_err(|_| ckpt_err(dir, format!("bad parameter count '{count}'")))?
        }
        _ => return Err(ckpt_err(dir, format!("bad index header '{header}'"))),
    };

    let mut params = Params::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((name, shape_s)) = line.split_once('\t') else {
            return Err(ckpt_err(
                dir,
                format!("index line {}: expected '<name>\\t<shape>'", idx + 2),
            ));
        };
        let shape: Vec<usize> = shape_s
            .split(',')
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| ckpt_err(dir, format!("index line {}: bad shape '{shape_s}'", idx + 2)))?;
        let tensor = vten::read_exact::<T>(&param_file(dir, name))?;
        if tensor.shape() != shape.as_slice() {
            return Err(ckpt_err(
                dir,
                format!(
                    "parameter '{name}': index says shape {shape:?}, file has {:?}",
                    tensor.shape()
                ),
            ));
        }
        params.insert(name, tensor);
    }
    if params.len() != count {
        return Err(ckpt_err(
            dir,
            format!("index promises {count} parameters, found {}", params.len()),
        ));
    }
    Ok(params)
}
