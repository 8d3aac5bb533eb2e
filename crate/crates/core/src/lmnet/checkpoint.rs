//! Model checkpoints.
//!
//! Little-endian. Header: `LFNN`, u32 version, u32 variant code, u32 ι, u32
//! κ, u32 dense-layer count `L`, then `L` pairs of u32 (fan in, fan out) in
//! the order location stages, RSS stages, ω_a head, ω_r head, regression.
//! Then every trainable tensor as f32 in [`ModelParams::tensors`] order,
//! followed by each batch-norm layer's running mean and variance as f32.
//! Optimizer state is not stored.

use super::model::{LmNet, ModelParams, Variant};
use super::LmError;
use crate::rng;
use std::io::{Read, Write};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LFNN";
const VERSION: u32 = 1;

fn dense_dims(p: &ModelParams) -> Vec<(usize, usize)> {
    let mut dims: Vec<(usize, usize)> = p
        .location
        .iter()
        .chain(&p.rss)
        .map(|s| (s.dense.fan_in(), s.dense.fan_out()))
        .collect();
    for d in p.fusion_a.iter().chain(&p.fusion_r) {
        dims.push((d.fan_in(), d.fan_out()));
    }
    dims.push((p.regression.fan_in(), p.regression.fan_out()));
    dims
}

pub fn write_checkpoint<W: Write>(mut w: W, net: &LmNet) -> Result<(), LmError> {
    let p = &net.params;
    let dims = dense_dims(p);
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [VERSION, net.variant.code(), p.iota as u32, p.kappa as u32, dims.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for (a, b) in dims {
        buf.extend_from_slice(&(a as u32).to_le_bytes());
        buf.extend_from_slice(&(b as u32).to_le_bytes());
    }
    let stats = p.running_stats();
    let values = p
        .tensors()
        .into_iter()
        .flat_map(|(_, t)| t.iter())
        .chain(stats.iter().flat_map(|a| a.iter()));
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<LmNet, LmError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let bad = |m: &str| LmError::Checkpoint(m.to_string());
    if bytes.len() < 24 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint"));
    }
    let word = |i: usize| -> Result<u32, LmError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
            .ok_or_else(|| bad("truncated header"))
    };
    if word(1)? != VERSION {
        return Err(bad("unsupported version"));
    }
    let variant = Variant::from_code(word(2)?).ok_or_else(|| bad("unknown variant"))?;
    let (iota, kappa, layers) = (word(3)? as usize, word(4)? as usize, word(5)? as usize);
    // Shape template; every value is overwritten below.
    let mut params = ModelParams::init(iota, kappa, &mut rng::substream(0, rng::INIT, &[]));
    let expected = dense_dims(&params);
    let stored: Vec<(usize, usize)> = (0..layers)
        .map(|i| Ok((word(6 + 2 * i)? as usize, word(7 + 2 * i)? as usize)))
        .collect::<Result<_, LmError>>()?;
    if stored != expected {
        return Err(LmError::ShapeMismatch(format!("layer dims {stored:?}, expected {expected:?}")));
    }
    let mut pos = 4 * (6 + 2 * layers);
    let mut next = || -> Result<f64, LmError> {
        let b = bytes.get(pos..pos + 4).ok_or_else(|| bad("truncated tensors"))?;
        pos += 4;
        Ok(f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
    };
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = next()?;
        }
    }
    for a in params.running_stats_mut() {
        for v in a.iter_mut() {
            *v = next()?;
        }
    }
    if pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(LmNet::new(params, variant))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let mut params = ModelParams::init(3, 4, &mut rng::substream(5, rng::INIT, &[]));
        params.location[2].norm.running_var[7] = 2.5;
        let net = LmNet::new(params, Variant::RssPlusAng);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back.variant, Variant::RssPlusAng);
        for ((_, a), (_, b)) in net.params.tensors().iter().zip(back.params.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        assert_eq!(back.params.location[2].norm.running_var[7], 2.5);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = LmNet::new(ModelParams::init(1, 2, &mut rng::substream(5, rng::INIT, &[])), Variant::Full);
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &net).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(read_checkpoint(wrong.as_slice()).is_err());
        let mut dims = bytes;
        dims[24] = 6;
        assert!(matches!(read_checkpoint(dims.as_slice()), Err(LmError::ShapeMismatch(_))));
    }
}
