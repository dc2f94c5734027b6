//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SVDM", u32 version (1)
//! u32 lookback, u32 hidden, u32 input_dim, u32 dense layer count
//! u32 per dense layer: output width (last equals input_dim)
//! f64 learning_rate, u64 epochs, u64 seed
//! f64 initial_loss, f64 final_loss
//! tensors in canonical order, column-major f64
//! normalization: input_dim means, then input_dim scales
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::io::{read_f64, read_u32, read_u64, write_f64, write_u32, write_u64};

use super::net::init_model;
use super::{Model, ModelConfig, Normalization};

const MODEL_MAGIC: &[u8; 4] = b"SVDM";
const MODEL_VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    write_u32(&mut w, MODEL_VERSION)?;
    write_u32(&mut w, model.config.lookback as u32)?;
    write_u32(&mut w, model.config.hidden as u32)?;
    write_u32(&mut w, model.input_dim as u32)?;
    write_u32(&mut w, model.dense.len() as u32)?;
    for layer in &model.dense {
        write_u32(&mut w, layer.weight.nrows() as u32)?;
    }
    write_f64(&mut w, model.config.learning_rate)?;
    write_u64(&mut w, model.config.epochs as u64)?;
    write_u64(&mut w, model.config.seed)?;
    write_f64(&mut w, model.initial_loss)?;
    write_f64(&mut w, model.final_loss)?;
    for tensor in model.tensor_views() {
        for &v in tensor {
            write_f64(&mut w, v)?;
        }
    }
    for &v in model.norm.mean.as_slice() {
        write_f64(&mut w, v)?;
    }
    for &v in model.norm.scale.as_slice() {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: not a model checkpoint",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let lookback = read_u32(&mut r)? as usize;
    let hidden = read_u32(&mut r)? as usize;
    let input_dim = read_u32(&mut r)? as usize;
    let n_dense = read_u32(&mut r)? as usize;
    let mut widths = Vec::with_capacity(n_dense);
    for _ in 0..n_dense {
        widths.push(read_u32(&mut r)? as usize);
    }
    if widths.last() != Some(&input_dim) {
        return Err(Error::Format(
            "checkpoint output width does not match input_dim".into(),
        ));
    }
    let learning_rate = read_f64(&mut r)?;
    let epochs = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let initial_loss = read_f64(&mut r)?;
    let final_loss = read_f64(&mut r)?;

    let config = ModelConfig {
        lookback,
        hidden,
        dense_widths: widths[..n_dense - 1].to_vec(),
        learning_rate,
        epochs,
        seed,
    };
    let placeholder = Normalization {
        mean: DVector::zeros(input_dim),
        scale: DVector::from_element(input_dim, 1.0),
    };
    let mut model = init_model(&config, input_dim, placeholder);
    model.initial_loss = initial_loss;
    model.final_loss = final_loss;
    for tensor in model.tensor_views_mut() {
        for v in tensor.iter_mut() {
            *v = read_f64(&mut r)?;
        }
    }
    let mut mean = DVector::zeros(input_dim);
    let mut scale = DVector::zeros(input_dim);
    for i in 0..input_dim {
        mean[i] = read_f64(&mut r)?;
    }
    for i in 0..input_dim {
        scale[i] = read_f64(&mut r)?;
    }
    model.norm = Normalization { mean, scale };
    Ok(model)
}
