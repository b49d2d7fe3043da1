//! Plain-text model checkpoints.
//!
//! ```text
//! poirec-checkpoint v1
//! graphs split|unsplit
//! dims d=.. users=.. pois=.. geo_entities=.. func_entities=.. geo_relations=.. func_relations=.. geo_intents=.. func_intents=.. layers=..
//! tensor E_g <rows> <cols>
//! <cols space-separated values>   (one line per row)
//! ...                             (six tensors, E_g R_g S_g E_f R_f S_f)
//! ```
//!
//! Values use the shortest representation that parses back to the same
//! `f64`, so a save/load cycle is lossless.

use std::fmt::Write as _;
use std::path::Path;

use poirec_core::model::{ModelDims, ModelParams, TENSOR_NAMES};

use crate::error::{CliError, Result};

pub const MAGIC: &str = "poirec-checkpoint v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphMode {
    Split,
    Unsplit,
}

impl GraphMode {
    pub fn name(self) -> &'static str {
        match self {
            GraphMode::Split => "split",
            GraphMode::Unsplit => "unsplit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub mode: GraphMode,
    pub params: ModelParams,
}

pub fn to_text(ckpt: &Checkpoint) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "graphs {}", ckpt.mode.name());
    let _ = writeln!(out, "dims {}", ckpt.params.dims);
    for (name, m) in TENSOR_NAMES.iter().zip(ckpt.params.tensors()) {
        let _ = writeln!(out, "tensor {name} {} {}", m.rows(), m.cols());
        for r in 0..m.rows() {
            for (c, v) in m.row(r).iter().enumerate() {
                if c > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
    }
    out
}

fn parse_dims(line: &str) -> Option<ModelDims> {
    let mut vals = [0usize; 10];
    let keys = [
        "d",
        "users",
        "pois",
        "geo_entities",
        "func_entities",
        "geo_relations",
        "func_relations",
        "geo_intents",
        "func_intents",
        "layers",
    ];
    let fields: Vec<(&str, &str)> = line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    if fields.len() != keys.len() {
        return None;
    }
    for (slot, key) in vals.iter_mut().zip(keys) {
        *slot = fields.iter().find(|(k, _)| *k == key)?.1.parse().ok()?;
    }
    Some(ModelDims {
        d: vals[0],
        n_users: vals[1],
        n_pois: vals[2],
        n_geo_entities: vals[3],
        n_func_entities: vals[4],
        n_geo_relations: vals[5],
        n_func_relations: vals[6],
        n_intents_geo: vals[7],
        n_intents_func: vals[8],
        n_layers: vals[9],
    })
}

pub fn from_text(text: &str, path: &Path) -> Result<Checkpoint> {
    let err = |line: usize, message: &str| CliError::Checkpoint { path: path.to_path_buf(), line, message: message.into() };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("truncated before {what}")));

    let (n, l) = next("header")?;
    if l.trim() != MAGIC {
        return Err(err(n, "not a poirec checkpoint"));
    }
    let (n, l) = next("graphs")?;
    let mode = match l.trim().strip_prefix("graphs ") {
        Some("split") => GraphMode::Split,
        Some("unsplit") => GraphMode::Unsplit,
        _ => return Err(err(n, "expected `graphs split|unsplit`")),
    };
    let (n, l) = next("dims")?;
    let dims = l.trim().strip_prefix("dims ").and_then(parse_dims).ok_or_else(|| err(n, "malformed dims line"))?;
    let mut params = ModelParams::zeros(dims);
    for (name, m) in TENSOR_NAMES.iter().zip(params.tensors_mut()) {
        let (n, l) = next(name)?;
        let expected = format!("tensor {name} {} {}", m.rows(), m.cols());
        if l.trim() != expected {
            return Err(err(n, &format!("expected `{expected}`")));
        }
        for r in 0..m.rows() {
            let (n, l) = next(name)?;
            let row = m.row_mut(r);
            let mut count = 0;
            for (slot, tok) in row.iter_mut().zip(l.split_whitespace()) {
                *slot = tok.parse().map_err(|_| err(n, &format!("bad number `{tok}`")))?;
                count += 1;
            }
            if count != row.len() || l.split_whitespace().count() != row.len() {
                return Err(err(n, &format!("expected {} values", row.len())));
            }
        }
    }
    Ok(Checkpoint { mode, params })
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    crate::write_text(path, &to_text(ckpt))
}

/// Loads a checkpoint and checks it against the dims the data implies.
pub fn load(path: &Path, expected: &ModelDims) -> Result<Checkpoint> {
    let ckpt = from_text(&crate::read_text(path)?, path)?;
    ckpt.params.check_dims(expected)?;
    Ok(ckpt)
}
