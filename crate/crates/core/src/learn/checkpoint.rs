//! Checkpoint format: everything needed to resume or evaluate a run.
//!
//! Layout (all integers little-endian):
//!   magic "PRCK", u32 version
//!   model config as u32 fields, u8 has_oracle
//!   u32 note length + bytes (free-form, typically the experiment config)
//!   u32 tensor count, then per tensor:
//!     u16 name length + name, u8 kind (0 param, 1 buffer),
//!     u32 element count, f32 data
//!   u8 has_optimizer; if set: five f64 hyperparameters, u64 step count,
//!     then per parameter tensor u32 count + f32 first moment, and the
//!     same again for second moments.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::model::{ModelConfig, ModelParams};
use super::optim::{AdamW, OptimConfig};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"PRCK";
const VERSION: u32 = 1;

fn w_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    w_u32(w, vs.len() as u32)?;
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn r_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn r_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn r_f32s(r: &mut impl Read) -> Result<Vec<f32>> {
    let n = r_u32(r)? as usize;
    if n > (1 << 28) {
        return Err(Error::Checkpoint(format!("implausible tensor of {} elements", n)));
    }
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn w_tensor(w: &mut impl Write, name: &str, kind: u8, data: &[f32]) -> Result<()> {
    let nb = name.as_bytes();
    w.write_all(&(nb.len() as u16).to_le_bytes())?;
    w.write_all(nb)?;
    w.write_all(&[kind])?;
    w_f32s(w, data)
}

pub fn save(
    w: &mut impl Write,
    params: &ModelParams<f32>,
    optim: Option<&AdamW<f32>>,
    note: &str,
) -> Result<()> {
    w.write_all(MAGIC)?;
    w_u32(w, VERSION)?;
    let c = &params.cfg;
    for v in [
        c.input_res,
        c.conv_channels[0],
        c.conv_channels[1],
        c.conv_channels[2],
        c.conv_kernel[0],
        c.conv_kernel[1],
        c.conv_kernel[2],
        c.conv_stride[0],
        c.conv_stride[1],
        c.conv_stride[2],
        c.conv_pad[0],
        c.conv_pad[1],
        c.conv_pad[2],
        c.feat_dim,
        c.head_hidden,
        c.proj_dim,
        c.token_dim,
        c.vocab_size,
        c.n_categories,
    ] {
        w_u32(w, v as u32)?;
    }
    w.write_all(&[params.oracle.is_some() as u8])?;
    w_u32(w, note.len() as u32)?;
    w.write_all(note.as_bytes())?;

    let ps = params.visit_params();
    let bs = params.visit_buffers();
    w_u32(w, (ps.len() + bs.len()) as u32)?;
    for (name, _, data) in &ps {
        w_tensor(w, name, 0, data)?;
    }
    for (name, data) in &bs {
        w_tensor(w, name, 1, data)?;
    }

    match optim {
        Some(o) => {
            w.write_all(&[1u8])?;
            for h in [
                o.cfg.learning_rate,
                o.cfg.weight_decay,
                o.cfg.beta1,
                o.cfg.beta2,
                o.cfg.eps,
            ] {
                w.write_all(&h.to_le_bytes())?;
            }
            w.write_all(&o.step_count.to_le_bytes())?;
            for m in &o.m {
                w_f32s(w, m)?;
            }
            for v in &o.v {
                w_f32s(w, v)?;
            }
        }
        None => w.write_all(&[0u8])?,
    }
    Ok(())
}

pub fn load(r: &mut impl Read) -> Result<(ModelParams<f32>, Option<AdamW<f32>>, String)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", version)));
    }
    let mut f = [0usize; 19];
    for v in f.iter_mut() {
        *v = r_u32(r)? as usize;
    }
    let cfg = ModelConfig {
        input_res: f[0],
        conv_channels: [f[1], f[2], f[3]],
        conv_kernel: [f[4], f[5], f[6]],
        conv_stride: [f[7], f[8], f[9]],
        conv_pad: [f[10], f[11], f[12]],
        feat_dim: f[13],
        head_hidden: f[14],
        proj_dim: f[15],
        token_dim: f[16],
        vocab_size: f[17],
        n_categories: f[18],
    };
    let has_oracle = r_u8(r)? != 0;
    let note_len = r_u32(r)? as usize;
    if note_len > (1 << 24) {
        return Err(Error::Checkpoint("implausible note length".into()));
    }
    let mut note = vec![0u8; note_len];
    r.read_exact(&mut note)?;
    let note = String::from_utf8(note)
        .map_err(|_| Error::Checkpoint("note is not utf-8".into()))?;

    let count = r_u32(r)? as usize;
    let mut tensors: HashMap<String, Vec<f32>> = HashMap::with_capacity(count);
    for _ in 0..count {
        let mut nl = [0u8; 2];
        r.read_exact(&mut nl)?;
        let mut name = vec![0u8; u16::from_le_bytes(nl) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let _kind = r_u8(r)?;
        let data = r_f32s(r)?;
        if tensors.insert(name.clone(), data).is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {}", name)));
        }
    }

    let mut params = ModelParams::<f32>::init(cfg, has_oracle, 0)?;
    fn fill(
        tensors: &mut HashMap<String, Vec<f32>>,
        name: String,
        slot: &mut [f32],
    ) -> Result<()> {
        let data = tensors
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", name)))?;
        if data.len() != slot.len() {
            return Err(Error::Checkpoint(format!(
                "tensor {} holds {} values, model wants {}",
                name,
                data.len(),
                slot.len()
            )));
        }
        slot.copy_from_slice(&data);
        Ok(())
    }
    for (name, _, slot) in params.visit_params_mut() {
        fill(&mut tensors, name, slot)?;
    }
    for (name, slot) in params.visit_buffers_mut() {
        fill(&mut tensors, name, slot)?;
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(Error::Checkpoint(format!("unknown tensor {}", extra)));
    }

    let optim = if r_u8(r)? != 0 {
        let mut h = [0f64; 5];
        for v in h.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
        }
        let cfg = OptimConfig {
            learning_rate: h[0],
            weight_decay: h[1],
            beta1: h[2],
            beta2: h[3],
            eps: h[4],
        };
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let step_count = u64::from_le_bytes(b);
        let mut opt = AdamW::new(&params, cfg)?;
        opt.step_count = step_count;
        for m in opt.m.iter_mut() {
            let data = r_f32s(r)?;
            if data.len() != m.len() {
                return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
            }
            m.copy_from_slice(&data);
        }
        for v in opt.v.iter_mut() {
            let data = r_f32s(r)?;
            if data.len() != v.len() {
                return Err(Error::Checkpoint("optimizer state shape mismatch".into()));
            }
            v.copy_from_slice(&data);
        }
        Some(opt)
    } else {
        None
    };
    Ok((params, optim, note))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trained_pair() -> (ModelParams<f32>, AdamW<f32>) {
        let cfg = ModelConfig::tiny(12, 3);
        let mut params = ModelParams::<f32>::init(cfg, true, 31).unwrap();
        // Make running stats and moments nontrivial.
        for (_, buf) in params.visit_buffers_mut() {
            for (i, v) in buf.iter_mut().enumerate() {
                *v = 0.25 + i as f32 * 0.01;
            }
        }
        let mut opt = AdamW::new(&params, OptimConfig::default()).unwrap();
        let mut grads = params.zeros_like();
        for (_, _, s) in grads.visit_params_mut() {
            for (i, g) in s.iter_mut().enumerate() {
                *g = (i as f32 * 0.37).sin();
            }
        }
        opt.step(&mut params, &grads);
        opt.step(&mut params, &grads);
        (params, opt)
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let (params, opt) = trained_pair();
        let mut buf = Vec::new();
        save(&mut buf, &params, Some(&opt), "lr = 0.001").unwrap();
        let (p2, o2, note) = load(&mut buf.as_slice()).unwrap();
        assert_eq!(params, p2);
        let o2 = o2.unwrap();
        assert_eq!(opt.step_count, o2.step_count);
        assert_eq!(opt.m, o2.m);
        assert_eq!(opt.v, o2.v);
        assert_eq!(opt.cfg, o2.cfg);
        assert_eq!(note, "lr = 0.001");
    }

    #[test]
    fn roundtrip_without_optimizer() {
        let (params, _) = trained_pair();
        let mut buf = Vec::new();
        save(&mut buf, &params, None, "").unwrap();
        let (p2, o2, note) = load(&mut buf.as_slice()).unwrap();
        assert_eq!(params, p2);
        assert!(o2.is_none());
        assert!(note.is_empty());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let (params, _) = trained_pair();
        let mut buf = Vec::new();
        save(&mut buf, &params, None, "").unwrap();
        buf[0] = b'X';
        match load(&mut buf.as_slice()) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("not a checkpoint")),
            other => panic!("expected checkpoint error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn truncation_is_an_error() {
        let (params, opt) = trained_pair();
        let mut buf = Vec::new();
        save(&mut buf, &params, Some(&opt), "x").unwrap();
        buf.truncate(buf.len() / 2);
        assert!(load(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn renamed_tensor_is_detected() {
        let (params, _) = trained_pair();
        let mut buf = Vec::new();
        save(&mut buf, &params, None, "").unwrap();
        // Corrupt the first tensor name ("conv1.w" follows the header).
        let pos = buf
            .windows(7)
            .position(|w| w == b"conv1.w")
            .expect("tensor name present");
        buf[pos] = b'x';
        match load(&mut buf.as_slice()) {
            Err(Error::Checkpoint(msg)) => {
                assert!(msg.contains("missing") || msg.contains("unknown"), "{msg}")
            }
            other => panic!("expected checkpoint error, got {:?}", other.map(|_| ())),
        }
    }
}
