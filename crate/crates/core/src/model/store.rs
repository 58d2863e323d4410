//! Model checkpoints: a `key=value` manifest, a `---` separator line, then tensor records.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GeneratorConfig, UnrolledModel, ValueMap, WeightMode};
use crate::checkpoint::{load_into, read_tensors, write_tensors};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::tensor::Real;

pub const MODEL_HEADER: &str = "proxrec-model 1";
const SEPARATOR: &str = "---";

pub fn manifest<T: Real>(model: &UnrolledModel<T>) -> KeyValues {
    let mut kv = KeyValues::new();
    let c = model.config();
    kv.set("copies", model.copies);
    kv.set("weight_mode", model.weight_mode);
    kv.set("num_residual_blocks", c.num_residual_blocks);
    kv.set("feature_maps", c.feature_maps);
    kv.set("in_channels", c.in_channels);
    kv.set("out_channels", c.out_channels);
    kv.set("value_scale", model.value_map.scale);
    kv.set("value_offset", model.value_map.offset);
    kv.set("learn_alpha", model.learn_alpha);
    let alphas: Vec<String> = model.alphas().iter().map(|a| a.as_f32().to_string()).collect();
    kv.set("alphas", alphas.join(","));
    kv
}

pub fn write_model<T: Real, W: Write>(w: &mut W, model: &UnrolledModel<T>) -> Result<()> {
    let io = |e| Error::io("<stream>", e);
    writeln!(w, "{MODEL_HEADER}").map_err(io)?;
    w.write_all(manifest(model).to_text().as_bytes()).map_err(io)?;
    writeln!(w, "{SEPARATOR}").map_err(io)?;
    write_tensors(w, &model.named_state())
}

pub fn save_model<T: Real>(path: &Path, model: &UnrolledModel<T>) -> Result<()> {
    let mut bytes = Vec::new();
    write_model(&mut bytes, model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model<T: Real, R: std::io::Read>(r: R) -> Result<UnrolledModel<T>> {
    let mut reader = BufReader::new(r);
    let mut line = String::new();
    let mut text = String::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(|e| Error::io("<stream>", e))?;
        if n == 0 {
            return Err(Error::parse("model checkpoint", "missing manifest separator"));
        }
        let trimmed = line.trim_end();
        if first {
            if trimmed != MODEL_HEADER {
                return Err(Error::parse("model checkpoint", format!("bad header '{trimmed}'")));
            }
            first = false;
        } else if trimmed == SEPARATOR {
            break;
        } else {
            text.push_str(&line);
        }
    }
    let kv = KeyValues::parse(&text)?;
    let config = GeneratorConfig {
        num_residual_blocks: kv.require("num_residual_blocks")?,
        feature_maps: kv.require("feature_maps")?,
        in_channels: kv.require("in_channels")?,
        out_channels: kv.require("out_channels")?,
    };
    let value_map = ValueMap { scale: kv.require("value_scale")?, offset: kv.require("value_offset")? };
    let copies: usize = kv.require("copies")?;
    let mode: WeightMode = kv.require("weight_mode")?;
    let mut model = UnrolledModel::new(copies, mode, config, value_map, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.learn_alpha = kv.require("learn_alpha")?;
    let records = read_tensors(&mut reader)?;
    load_into(&mut model, &records)?;
    Ok(model)
}

pub fn load_model<T: Real>(path: &Path) -> Result<UnrolledModel<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(file)
}
