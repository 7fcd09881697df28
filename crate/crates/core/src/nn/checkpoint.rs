//! Text checkpoint: header, scalar tag, configuration block, then every
//! parameter tensor with its shape and values as hexadecimal `f64` bit patterns.

use std::fs;
use std::path::Path;

use crate::kv::KvMap;

use super::config::MODEL_KEYS;
use super::{Model, ModelConfig, NnError, Scalar};

const MAGIC: &str = "abagnn-checkpoint 1";

fn fail(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

pub fn write_checkpoint<T: Scalar>(model: &Model<T>) -> String {
    let config = model.config.to_kv().render();
    let mut out = format!(
        "{MAGIC}\nscalar {}\nconfig {}\n{config}",
        T::NAME,
        config.lines().count()
    );
    for (name, t) in model.params.named() {
        out.push_str(&format!("tensor {name} {} {}\n", t.nrows(), t.ncols()));
        for row in t.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{:016x}", x.f64().to_bits())).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

/// Parses a checkpoint and checks every tensor against the shapes implied by
/// its configuration.
pub fn read_checkpoint<T: Scalar>(text: &str) -> Result<Model<T>, NnError> {
    let mut lines = text.lines();
    let mut next = |what: &str| lines.next().ok_or_else(|| fail(format!("truncated before {what}")));
    if next("header")? != MAGIC {
        return Err(fail("not a version 1 checkpoint"));
    }
    let scalar = next("scalar tag")?;
    if scalar.strip_prefix("scalar ") != Some(T::NAME) {
        return Err(fail(format!("expected scalar {}, found {scalar:?}", T::NAME)));
    }
    let count: usize = next("config")?
        .strip_prefix("config ")
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| fail("bad config line"))?;
    let mut kv_text = String::new();
    for _ in 0..count {
        kv_text.push_str(next("config entries")?);
        kv_text.push('\n');
    }
    let kv = KvMap::parse(&kv_text).map_err(|e| fail(e.to_string()))?;
    kv.check_keys(MODEL_KEYS).map_err(|e| fail(e.to_string()))?;
    let config = ModelConfig::from_kv(&kv).map_err(|e| fail(e.to_string()))?;
    let mut model = Model::<T>::new(config)?;
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    for (name, tensor) in names.iter().zip(model.params.tensors_mut()) {
        let header = next("tensor")?;
        let expected = format!("tensor {name} {} {}", tensor.nrows(), tensor.ncols());
        if header != expected {
            return Err(fail(format!("expected {expected:?}, found {header:?}")));
        }
        for mut row in tensor.rows_mut() {
            let line = next(name)?;
            let mut values = line.split_ascii_whitespace();
            for x in row.iter_mut() {
                let hex = values.next().ok_or_else(|| fail(format!("short row in {name}")))?;
                let bits = u64::from_str_radix(hex, 16).map_err(|_| fail(format!("bad value {hex:?} in {name}")))?;
                let v = f64::from_bits(bits);
                if !v.is_finite() {
                    return Err(NnError::NonFinite(name.clone()));
                }
                *x = T::of(v);
            }
            if values.next().is_some() {
                return Err(fail(format!("long row in {name}")));
            }
        }
    }
    if next("end")? != "end" {
        return Err(fail("extra tensors"));
    }
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: &Path) -> Result<(), NnError> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Model<T>, NnError> {
    read_checkpoint(&fs::read_to_string(path)?)
}
