//! Binary checkpoint: magic, format version, scalar width, encoder spec, then
//! every parameter array as little-endian IEEE-754 bit patterns.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{Activation, Dense, EncoderSpec, ModelState, Role};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MLTCCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

fn write_dense<F: Scalar, W: Write>(w: &mut W, d: &Dense<F>) -> Result<()> {
    w.write_u64::<LittleEndian>(d.fan_in as u64)?;
    w.write_u64::<LittleEndian>(d.fan_out as u64)?;
    for v in d.weights.iter().chain(&d.bias) {
        w.write_u64::<LittleEndian>(v.as_f64().to_bits())?;
    }
    Ok(())
}

fn read_dense<F: Scalar, R: Read>(r: &mut R, fan_in: usize, fan_out: usize) -> Result<Dense<F>> {
    let got_in = r.read_u64::<LittleEndian>()? as usize;
    let got_out = r.read_u64::<LittleEndian>()? as usize;
    if (got_in, got_out) != (fan_in, fan_out) {
        return Err(Error::Checkpoint(format!(
            "layer shape {got_in}x{got_out} does not match spec {fan_in}x{fan_out}"
        )));
    }
    let mut read = |n: usize| -> Result<Vec<F>> {
        (0..n)
            .map(|_| Ok(F::lit(f64::from_bits(r.read_u64::<LittleEndian>()?))))
            .collect()
    };
    let weights = read(fan_in * fan_out)?;
    let bias = read(fan_out)?;
    Ok(Dense {
        fan_in,
        fan_out,
        weights,
        bias,
    })
}

pub fn write_checkpoint<F: Scalar, W: Write>(model: &ModelState<F>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u8(F::BITS)?;
    w.write_u8(match model.spec.role {
        Role::Teacher => 0,
        Role::Student => 1,
    })?;
    w.write_u8(match model.spec.activation {
        Activation::Tanh => 0,
        Activation::Relu => 1,
    })?;
    w.write_u64::<LittleEndian>(model.spec.input_dim as u64)?;
    w.write_u64::<LittleEndian>(model.spec.hidden_sizes.len() as u64)?;
    for &h in &model.spec.hidden_sizes {
        w.write_u64::<LittleEndian>(h as u64)?;
    }
    w.write_u64::<LittleEndian>(model.heads.len() as u64)?;
    for d in model.layers.iter().chain(&model.heads) {
        write_dense(&mut w, d)?;
    }
    Ok(())
}

pub fn read_checkpoint<F: Scalar, R: Read>(mut r: R) -> Result<ModelState<F>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a model checkpoint".into()));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let bits = r.read_u8()?;
    if bits != F::BITS {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {bits}-bit scalars, reader expects {}",
            F::BITS
        )));
    }
    let role = match r.read_u8()? {
        0 => Role::Teacher,
        1 => Role::Student,
        other => return Err(Error::Checkpoint(format!("bad role tag {other}"))),
    };
    let activation = match r.read_u8()? {
        0 => Activation::Tanh,
        1 => Activation::Relu,
        other => return Err(Error::Checkpoint(format!("bad activation tag {other}"))),
    };
    let input_dim = r.read_u64::<LittleEndian>()? as usize;
    let depth = r.read_u64::<LittleEndian>()? as usize;
    let hidden_sizes = (0..depth)
        .map(|_| Ok(r.read_u64::<LittleEndian>()? as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = EncoderSpec {
        input_dim,
        hidden_sizes,
        activation,
        role,
    };
    spec.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let num_labels = r.read_u64::<LittleEndian>()? as usize;
    let mut layers = Vec::with_capacity(depth);
    let mut fan_in = input_dim;
    for &h in &spec.hidden_sizes {
        layers.push(read_dense(&mut r, fan_in, h)?);
        fan_in = h;
    }
    let heads = (0..num_labels)
        .map(|_| read_dense(&mut r, fan_in, 2))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelState { spec, layers, heads })
}
