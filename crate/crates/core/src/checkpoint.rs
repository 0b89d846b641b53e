//! JSON checkpoints:
//!
//! ```text
//! {"config":{...},"params":{"embed":[[...],...],...},"version":1}
//! ```
//!
//! Keys are sorted at every level and every parameter value is written with
//! 17 significant digits, so a save/load cycle is bit-exact and two equal
//! models always produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde_json::Value;

use crate::block::{FeedForward, GwtLayer, GwtModel};
use crate::error::{GwtError, Result};
use crate::filter_bank::{FilterBank, FilterMlp};
use crate::matrix::DenseMatrix;

pub const CHECKPOINT_VERSION: u64 = 1;

fn bad(msg: impl Into<String>) -> GwtError {
    GwtError::InvalidArgument(format!("checkpoint: {}", msg.into()))
}

fn write_number(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn write_tensor(out: &mut String, shape: &[usize], data: &[f64]) {
    out.push('[');
    if shape.len() == 2 {
        for (i, row) in data.chunks(shape[1].max(1)).enumerate().take(shape[0]) {
            if i > 0 {
                out.push(',');
            }
            out.push('[');
            for (j, &v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write_number(out, v);
            }
            out.push(']');
        }
    } else {
        for (j, &v) in data.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write_number(out, v);
        }
    }
    out.push(']');
}

/// Serializes `model` with an arbitrary JSON `config` object.
pub fn to_checkpoint_json(model: &GwtModel, config: &Value) -> Result<String> {
    // serde_json's map is ordered, so this is already key-sorted.
    let config_text = serde_json::to_string(config)?;
    let tensors: BTreeMap<String, _> = model
        .tensors()
        .into_iter()
        .map(|t| (t.name, (t.shape, t.data)))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{{\"config\":{config_text},\"params\":{{");
    for (i, (name, (shape, data))) in tensors.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push('\n');
        let _ = write!(out, "{}:", serde_json::to_string(name)?);
        write_tensor(&mut out, shape, data);
    }
    let _ = write!(out, "\n}},\"version\":{CHECKPOINT_VERSION}}}\n");
    Ok(out)
}

pub fn save_checkpoint(path: &Path, model: &GwtModel, config: &Value) -> Result<()> {
    std::fs::write(path, to_checkpoint_json(model, config)?)?;
    Ok(())
}

fn vector(v: &Value, name: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| bad(format!("{name} is not an array")))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| bad(format!("{name} holds a non-number"))))
        .collect()
}

fn matrix(v: &Value, name: &str) -> Result<DenseMatrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| bad(format!("{name} is not an array")))?
        .iter()
        .map(|r| vector(r, name))
        .collect::<Result<Vec<_>>>()?;
    DenseMatrix::from_rows(&rows).map_err(|e| bad(format!("{name}: {e}")))
}

fn take<'a>(params: &'a serde_json::Map<String, Value>, name: &str) -> Result<&'a Value> {
    params.get(name).ok_or_else(|| bad(format!("missing tensor {name}")))
}

/// Parses a checkpoint, returning the model and its stored config object.
pub fn from_checkpoint_json(text: &str) -> Result<(GwtModel, Value)> {
    let root: Value = serde_json::from_str(text)?;
    let version = root.get("version").and_then(Value::as_u64);
    if version != Some(CHECKPOINT_VERSION) {
        return Err(bad(format!("unsupported version {version:?}")));
    }
    let params = root
        .get("params")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("missing params"))?;

    let mut layers = Vec::new();
    while params.contains_key(&format!("layers.{}.bank.alpha", layers.len())) {
        let p = format!("layers.{}", layers.len());
        let alpha = matrix(take(params, &format!("{p}.bank.alpha"))?, "alpha")?;
        let mut filters = Vec::with_capacity(alpha.rows());
        for k in 0..alpha.rows() {
            let f = |t: &str| vector(take(params, &format!("{p}.bank.filters.{k}.{t}"))?, t);
            let b2 = f("b2")?;
            if b2.len() != 1 {
                return Err(bad("filter b2 must hold one value"));
            }
            filters.push(FilterMlp {
                w1: f("w1")?,
                b1: f("b1")?,
                w2: f("w2")?,
                b2: b2[0],
            });
        }
        let ffn = FeedForward {
            w1: matrix(take(params, &format!("{p}.ffn.w1"))?, "ffn.w1")?,
            b1: vector(take(params, &format!("{p}.ffn.b1"))?, "ffn.b1")?,
            w2: matrix(take(params, &format!("{p}.ffn.w2"))?, "ffn.w2")?,
            b2: vector(take(params, &format!("{p}.ffn.b2"))?, "ffn.b2")?,
        };
        layers.push(GwtLayer {
            bank: FilterBank { filters, alpha },
            ffn,
        });
    }
    let model = GwtModel {
        embed: matrix(take(params, "embed")?, "embed")?,
        layers,
        readout: matrix(take(params, "readout")?, "readout")?,
    };
    // shape sanity: names and sizes must match a freshly shaped model
    let expect = model.zeros_like();
    let stored: usize = model.tensors().iter().map(|t| t.data.len()).sum();
    if stored != expect.parameter_count() || params.len() != model.tensors().len() {
        return Err(bad("tensor set does not describe a consistent model"));
    }
    let cfg = model.config();
    for layer in &model.layers {
        if layer.bank.d() != cfg.d
            || layer.ffn.d() != cfg.d
            || layer
                .bank
                .filters
                .iter()
                .any(|f| f.hidden_width() != f.b1.len() || f.w2.len() != f.b1.len())
        {
            return Err(bad("layer dimensions disagree with the embedding width"));
        }
    }
    if model.readout.shape() != (cfg.d, cfg.vocab) {
        return Err(bad("readout shape disagrees with the embedding table"));
    }
    let config = root.get("config").cloned().unwrap_or(Value::Null);
    Ok((model, config))
}

pub fn load_checkpoint(path: &Path) -> Result<(GwtModel, Value)> {
    from_checkpoint_json(&std::fs::read_to_string(path)?)
}
