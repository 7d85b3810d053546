//! Single-file model archive.
//!
//! Layout: the 8-byte magic `DASCNCK1`, a little-endian `u64` header
//! length, a JSON header (architecture, network shapes, seen classes, the
//! training config and a tensor index), then every tensor as row-major
//! little-endian `f64` in index order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::classifier::SoftmaxClassifier;
use crate::data::ClassId;
use crate::error::{Error, Result};
use crate::networks::{Architecture, Mlp, ModelParams, NetworkShape};
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 8] = b"DASCNCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    architecture: Architecture,
    shapes: BTreeMap<String, NetworkShape>,
    seen_classes: Vec<ClassId>,
    train_config: TrainConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: TrainConfig,
}

fn networks(params: &ModelParams) -> [(&'static str, &Mlp); 4] {
    [
        ("g_sv", &params.g_sv),
        ("g_vs", &params.g_vs),
        ("d_v", &params.d_v),
        ("d_s", &params.d_s),
    ]
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn tensors(params: &ModelParams) -> Vec<(String, Array2<f64>)> {
    let mut out = Vec::new();
    for (name, net) in networks(params) {
        out.push((format!("{name}.w1"), net.w1.clone()));
        out.push((format!("{name}.b1"), row(&net.b1)));
        out.push((format!("{name}.w2"), net.w2.clone()));
        out.push((format!("{name}.b2"), row(&net.b2)));
    }
    out.push(("cls_seen.weights".into(), params.cls_seen.weights.clone()));
    out.push(("cls_seen.bias".into(), row(&params.cls_seen.bias)));
    out
}

pub fn to_bytes(params: &ModelParams, config: &TrainConfig) -> Result<Vec<u8>> {
    let tensors = tensors(params);
    let header = Header {
        format_version: FORMAT_VERSION,
        dtype: "f64".into(),
        architecture: params.arch,
        shapes: networks(params)
            .into_iter()
            .map(|(n, net)| (n.to_string(), net.shape))
            .collect(),
        seen_classes: params.cls_seen.classes.clone(),
        train_config: config.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                rows: t.nrows(),
                cols: t.ncols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| Error::json("checkpoint header", e))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in &tensors {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8], file: &str) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::format(file, msg);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&bytes[16..header_end]).map_err(|e| Error::json(file.to_string(), e))?;
    if header.format_version != FORMAT_VERSION || header.dtype != "f64" {
        return Err(bad("unsupported checkpoint version or dtype"));
    }

    let mut payload = &bytes[header_end..];
    let mut read: BTreeMap<String, Array2<f64>> = BTreeMap::new();
    for t in &header.tensors {
        let n = t.rows * t.cols;
        if payload.len() < n * 8 {
            return Err(bad(&format!("payload ends inside tensor {}", t.name)));
        }
        let values: Vec<f64> = payload[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        payload = &payload[n * 8..];
        read.insert(t.name.clone(), Array2::from_shape_vec((t.rows, t.cols), values).expect("sized"));
    }
    if !payload.is_empty() {
        return Err(bad("trailing bytes after last tensor"));
    }

    let mut take = |name: &str, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let t = read
            .remove(name)
            .ok_or_else(|| bad(&format!("missing tensor {name}")))?;
        if t.dim() != (rows, cols) {
            return Err(bad(&format!("tensor {name} has shape {:?}, expected {:?}", t.dim(), (rows, cols))));
        }
        Ok(t)
    };
    let arch = header.architecture;
    let expected = [
        ("g_sv", arch.gen_sv()),
        ("g_vs", arch.gen_vs()),
        ("d_v", arch.disc_v()),
        ("d_s", arch.disc_s()),
    ];
    let mut nets = Vec::new();
    for (name, shape) in expected {
        if header.shapes.get(name) != Some(&shape) {
            return Err(bad(&format!("shape metadata of {name} disagrees with the architecture")));
        }
        let (i, h, o) = (shape.input_dim, shape.hidden_dim, shape.output_dim);
        nets.push(Mlp {
            shape,
            w1: take(&format!("{name}.w1"), i, h)?,
            b1: take(&format!("{name}.b1"), 1, h)?.row(0).to_owned(),
            w2: take(&format!("{name}.w2"), h, o)?,
            b2: take(&format!("{name}.b2"), 1, o)?.row(0).to_owned(),
        });
    }
    let n_seen = header.seen_classes.len();
    let cls_seen = SoftmaxClassifier {
        weights: take("cls_seen.weights", arch.feature_dim, n_seen)?,
        bias: take("cls_seen.bias", 1, n_seen)?.row(0).to_owned(),
        classes: header.seen_classes,
    };
    let mut nets = nets.into_iter();
    let mut next = || nets.next().expect("four networks");
    let params = ModelParams {
        arch,
        g_sv: next(),
        g_vs: next(),
        d_v: next(),
        d_s: next(),
        cls_seen,
    };
    Ok(Checkpoint {
        params,
        config: header.train_config,
    })
}

pub fn save_checkpoint(path: &Path, params: &ModelParams, config: &TrainConfig) -> Result<()> {
    let bytes = to_bytes(params, config)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, &path.display().to_string())
}
