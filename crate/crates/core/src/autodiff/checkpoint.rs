//! Binary checkpoint of named `f64` tensors.
//!
//! Layout: `RFFCKPT1\n`, then records until end of file, each
//! `u16 name_len | name | u8 rank | u32 dims[rank] | f64 data[]`,
//! all little-endian. Optimizer state is stored under the reserved
//! `__adam.` prefix.

use std::io::{Read, Write};

use super::adam::{AdamConfig, AdamState};
use super::param::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"RFFCKPT1\n";

const ADAM_M: &str = "__adam.m/";
const ADAM_V: &str = "__adam.v/";
const ADAM_STEP: &str = "__adam.step";
const ADAM_HYPER: &str = "__adam.hyper";

pub fn write_tensors<W: Write>(mut w: W, tensors: &[(String, Tensor)]) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for (name, t) in tensors {
        let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("name too long: {name}")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.rank() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if !bytes.starts_with(CHECKPOINT_MAGIC) {
        return Err(Error::Format("missing RFFCKPT1 magic".into()));
    }
    let mut cur = &bytes[CHECKPOINT_MAGIC.len()..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    let mut out = Vec::new();
    loop {
        let Ok(len) = take(2) else { break };
        let len = u16::from_le_bytes([len[0], len[1]]) as usize;
        let name = String::from_utf8(take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))?;
        let rank = take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = take(4)?;
            shape.push(u32::from_le_bytes(d.try_into().unwrap()) as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

/// Parameters followed by optimizer state, as checkpoint records.
pub fn to_records(store: &ParamStore, adam: &AdamState) -> Vec<(String, Tensor)> {
    let mut recs: Vec<(String, Tensor)> = store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect();
    for ((_, p), (m, v)) in store.iter().zip(adam.m.iter().zip(&adam.v)) {
        recs.push((format!("{ADAM_M}{}", p.name), m.clone()));
        recs.push((format!("{ADAM_V}{}", p.name), v.clone()));
    }
    recs.push((ADAM_STEP.into(), Tensor::scalar(adam.step as f64)));
    let c = adam.config;
    recs.push((ADAM_HYPER.into(), Tensor::from_vec(vec![c.lr, c.beta1, c.beta2, c.eps])));
    recs
}

/// Loads records into an existing store (names and shapes must match
/// exactly) and returns the stored optimizer state.
pub fn from_records(store: &mut ParamStore, records: Vec<(String, Tensor)>) -> Result<AdamState> {
    let mut adam = AdamState::new(store, AdamConfig::default());
    let mut seen = vec![false; store.len()];
    for (name, t) in records {
        let (target, id) = if let Some(rest) = name.strip_prefix(ADAM_M) {
            (0, rest)
        } else if let Some(rest) = name.strip_prefix(ADAM_V) {
            (1, rest)
        } else if name == ADAM_STEP {
            adam.step = t.item() as u64;
            continue;
        } else if name == ADAM_HYPER {
            let d = t.data();
            if d.len() != 4 {
                return Err(Error::Checkpoint("bad optimizer hyperparameters".into()));
            }
            adam.config = AdamConfig {
                lr: d[0],
                beta1: d[1],
                beta2: d[2],
                eps: d[3],
            };
            continue;
        } else {
            (2, name.as_str())
        };
        let pid = store
            .id_of(id)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
        let expected = store.get(pid).value.shape().to_vec();
        if t.shape() != expected.as_slice() {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?}, model expects {expected:?}",
                t.shape()
            )));
        }
        match target {
            0 => adam.m[pid.index()] = t,
            1 => adam.v[pid.index()] = t,
            _ => {
                seen[pid.index()] = true;
                store.get_mut(pid).value = t;
            }
        }
    }
    if let Some((_, p)) = store.iter().find(|(id, _)| !seen[id.index()]) {
        return Err(Error::Checkpoint(format!("missing parameter {}", p.name)));
    }
    Ok(adam)
}
