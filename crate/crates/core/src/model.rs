//! Feature extractor ψ (residual shrinkage blocks), classifier f and the
//! adversarial classifier f′.
//!
//! Each block computes `conv -> relu -> conv`, soft-thresholds every channel
//! at `tau_c = mean(|x_c|) * sigmoid(s_c)` with a learned `s_c`, and adds the
//! skip path (a strided 1x1 projection when the shape changes).

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{checkpoint, AdamConfig, AdamState, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::IQFrame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub sample_len: usize,
    pub block_channels: Vec<usize>,
    /// Stride of each block's first convolution.
    pub block_strides: Vec<usize>,
    pub kernel: usize,
    pub embedding_dim: usize,
    pub class_count: usize,
    pub hidden_width: usize,
    /// Initial value of every learned shrinkage scale `s_c`.
    pub shrink_init: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 2,
            sample_len: 200,
            block_channels: vec![8, 16, 32, 32],
            block_strides: vec![1, 2, 2, 2],
            kernel: 3,
            embedding_dim: 64,
            class_count: 7,
            hidden_width: 128,
            shrink_init: -1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        if self.input_channels == 0 || self.sample_len == 0 {
            return bad("input shape must be positive");
        }
        if self.block_channels.len() != self.block_strides.len() {
            return bad("block_channels and block_strides differ in length");
        }
        if self.block_channels.contains(&0) || self.block_strides.contains(&0) {
            return bad("block channels and strides must be positive");
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        if self.embedding_dim == 0 || self.hidden_width == 0 {
            return bad("embedding_dim and hidden_width must be positive");
        }
        if self.class_count < 2 {
            return bad("class_count must be at least 2");
        }
        if !self.shrink_init.is_finite() {
            return bad("shrink_init must be finite");
        }
        Ok(())
    }

    pub fn block_count(&self) -> usize {
        self.block_channels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// f, used for prediction.
    Main,
    /// f′, used only during adversarial training.
    Adversarial,
}

impl Head {
    fn prefix(self) -> &'static str {
        match self {
            Head::Main => "f",
            Head::Adversarial => "fprime",
        }
    }
}

#[derive(Debug, Clone)]
struct BlockIds {
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
    shrink: ParamId,
    skip: Option<ParamId>,
    stride: usize,
}

#[derive(Debug, Clone)]
struct HeadIds {
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
}

impl HeadIds {
    fn all(&self) -> [ParamId; 4] {
        [self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b]
    }
}

/// ψ, f and f′ parameters together with the optimizer state.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub adam: AdamState,
    blocks: Vec<BlockIds>,
    proj_w: ParamId,
    proj_b: ParamId,
    main: HeadIds,
    adversarial: HeadIds,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive dims")
}

/// Builds a bundle with fan-in-scaled uniform weights and zero biases.
/// Layers followed by relu use bound `sqrt(6 / fan_in)`, the rest
/// `sqrt(3 / fan_in)`.
pub fn build_model(config: &ModelConfig, model_seed: u64, adam: AdamConfig) -> Result<ModelBundle> {
    config.validate()?;
    let mut rng = seed::rng(model_seed, &[seed::label("model")]);
    let mut store = ParamStore::new();
    let k = config.kernel;
    let relu_bound = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
    let lin_bound = |fan_in: usize| (3.0 / fan_in as f64).sqrt();

    let mut blocks = Vec::with_capacity(config.block_count());
    let mut cin = config.input_channels;
    for (i, (&cout, &stride)) in config.block_channels.iter().zip(&config.block_strides).enumerate() {
        let p = format!("psi.block{i}");
        let conv1_w = store.insert(format!("{p}.conv1.w"), uniform(&mut rng, &[cout, cin, k], relu_bound(cin * k)))?;
        let conv1_b = store.insert(format!("{p}.conv1.b"), Tensor::zeros(&[cout]))?;
        let conv2_w = store.insert(format!("{p}.conv2.w"), uniform(&mut rng, &[cout, cout, k], lin_bound(cout * k)))?;
        let conv2_b = store.insert(format!("{p}.conv2.b"), Tensor::zeros(&[cout]))?;
        let shrink = store.insert(format!("{p}.shrink.s"), Tensor::filled(&[cout], config.shrink_init))?;
        let skip = if cin != cout || stride != 1 {
            Some(store.insert(format!("{p}.skip.w"), uniform(&mut rng, &[cout, cin, 1], lin_bound(cin)))?)
        } else {
            None
        };
        blocks.push(BlockIds {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            shrink,
            skip,
            stride,
        });
        cin = cout;
    }
    let e = config.embedding_dim;
    let proj_w = store.insert("psi.proj.w", uniform(&mut rng, &[cin, e], lin_bound(cin)))?;
    let proj_b = store.insert("psi.proj.b", Tensor::zeros(&[e]))?;

    let mut head = |store: &mut ParamStore, which: Head| -> Result<HeadIds> {
        let p = which.prefix();
        let (h, c) = (config.hidden_width, config.class_count);
        Ok(HeadIds {
            fc1_w: store.insert(format!("{p}.fc1.w"), uniform(&mut rng, &[e, h], relu_bound(e)))?,
            fc1_b: store.insert(format!("{p}.fc1.b"), Tensor::zeros(&[h]))?,
            fc2_w: store.insert(format!("{p}.fc2.w"), uniform(&mut rng, &[h, c], lin_bound(h)))?,
            fc2_b: store.insert(format!("{p}.fc2.b"), Tensor::zeros(&[c]))?,
        })
    };
    let main = head(&mut store, Head::Main)?;
    let adversarial = head(&mut store, Head::Adversarial)?;
    let adam = AdamState::new(&store, adam);
    let mut bundle = ModelBundle {
        config: config.clone(),
        store,
        adam,
        blocks,
        proj_w,
        proj_b,
        main,
        adversarial,
    };
    // f and f′ start from the same draw
    bundle.copy_main_to_adversarial();
    Ok(bundle)
}

/// Stacks frames into a `(batch, 2, L)` tensor.
pub fn batch_tensor(frames: &[&IQFrame], config: &ModelConfig) -> Result<Tensor> {
    if frames.is_empty() {
        return Err(Error::Empty("frame batch"));
    }
    let per = config.input_channels * config.sample_len;
    let mut data = Vec::with_capacity(frames.len() * per);
    for f in frames {
        if f.rows().len() != per {
            return Err(Error::Shape {
                op: "batch_tensor",
                detail: format!("frame has {} values, model expects {per}", f.rows().len()),
            });
        }
        data.extend_from_slice(f.rows());
    }
    Tensor::new(vec![frames.len(), config.input_channels, config.sample_len], data)
}

impl ModelBundle {
    pub fn head_params(&self, which: Head) -> [ParamId; 4] {
        match which {
            Head::Main => self.main.all(),
            Head::Adversarial => self.adversarial.all(),
        }
    }

    pub fn extractor_params(&self) -> Vec<ParamId> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend([b.conv1_w, b.conv1_b, b.conv2_w, b.conv2_b, b.shrink]);
            v.extend(b.skip);
        }
        v.extend([self.proj_w, self.proj_b]);
        v
    }

    pub fn is_adversarial_param(&self, id: ParamId) -> bool {
        self.adversarial.all().contains(&id)
    }

    /// f′ ← f, values only; optimizer moments are left alone.
    pub fn copy_main_to_adversarial(&mut self) {
        for (src, dst) in self.main.all().into_iter().zip(self.adversarial.all()) {
            let v = self.store.get(src).value.clone();
            self.store.get_mut(dst).value = v;
        }
    }

    /// Records ψ on `tape`; returns `(batch, embedding_dim)` embeddings.
    pub fn extract_on(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let s = tape.value(input).shape().to_vec();
        let c = &self.config;
        if s.len() != 3 || s[1] != c.input_channels || s[2] != c.sample_len {
            return Err(Error::Shape {
                op: "extract",
                detail: format!("input {s:?}, model expects (batch, {}, {})", c.input_channels, c.sample_len),
            });
        }
        let pad = c.kernel / 2;
        let mut x = input;
        for b in &self.blocks {
            let w1 = tape.param(&self.store, b.conv1_w)?;
            let b1 = tape.param(&self.store, b.conv1_b)?;
            let w2 = tape.param(&self.store, b.conv2_w)?;
            let b2 = tape.param(&self.store, b.conv2_b)?;
            let sc = tape.param(&self.store, b.shrink)?;

            let h = tape.conv1d(x, w1, b.stride, pad)?;
            let h = tape.add_channel(h, b1)?;
            let h = tape.relu(h)?;
            let h = tape.conv1d(h, w2, 1, pad)?;
            let h = tape.add_channel(h, b2)?;

            let mag = tape.abs(h)?;
            let mean_abs = tape.global_average_pool(mag)?;
            let gate = tape.sigmoid(sc)?;
            let tau = tape.mul_channel(mean_abs, gate)?;
            let h = tape.soft_threshold(h, tau)?;

            let skip = match b.skip {
                Some(id) => {
                    let ws = tape.param(&self.store, id)?;
                    tape.conv1d(x, ws, b.stride, 0)?
                }
                None => x,
            };
            x = tape.add(h, skip)?;
        }
        let pooled = tape.global_average_pool(x)?;
        let pw = tape.param(&self.store, self.proj_w)?;
        let pb = tape.param(&self.store, self.proj_b)?;
        let e = tape.matmul(pooled, pw)?;
        tape.add_channel(e, pb)
    }

    /// Records f or f′ on `tape`. With `param_grl = Some(beta)` every head
    /// parameter passes through a gradient-reversal node first.
    pub fn classify_on(&self, tape: &mut Tape, embeddings: Var, which: Head, param_grl: Option<f64>) -> Result<Var> {
        let s = tape.value(embeddings).shape();
        if s.len() != 2 || s[1] != self.config.embedding_dim {
            return Err(Error::Shape {
                op: "classify",
                detail: format!("embeddings {s:?}, model expects (batch, {})", self.config.embedding_dim),
            });
        }
        let ids = match which {
            Head::Main => &self.main,
            Head::Adversarial => &self.adversarial,
        };
        let p = |id: ParamId, tape: &mut Tape| -> Result<Var> {
            let v = tape.param(&self.store, id)?;
            match param_grl {
                Some(beta) => tape.grl(v, beta),
                None => Ok(v),
            }
        };
        let (w1, b1, w2, b2) = (p(ids.fc1_w, tape)?, p(ids.fc1_b, tape)?, p(ids.fc2_w, tape)?, p(ids.fc2_b, tape)?);
        let h = tape.matmul(embeddings, w1)?;
        let h = tape.add_channel(h, b1)?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, w2)?;
        tape.add_channel(o, b2)
    }

    /// Embeddings for a batch of frames.
    pub fn extract(&self, frames: &[&IQFrame]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(batch_tensor(frames, &self.config)?)?;
        let e = self.extract_on(&mut tape, x)?;
        Ok(tape.value(e).clone())
    }

    /// Raw logits of f or f′ for precomputed embeddings.
    pub fn classify(&self, embeddings: &Tensor, which: Head) -> Result<Tensor> {
        let mut tape = Tape::new();
        let e = tape.constant(embeddings.clone())?;
        let o = self.classify_on(&mut tape, e, which, None)?;
        Ok(tape.value(o).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let recs = checkpoint::to_records(&self.store, &self.adam);
        checkpoint::write_tensors(BufWriter::new(fs::File::create(path)?), &recs)
    }

    /// Loads parameters and optimizer state into a bundle built from the
    /// same config.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let recs = checkpoint::read_tensors(BufReader::new(fs::File::open(path)?))?;
        self.adam = checkpoint::from_records(&mut self.store, recs)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        checkpoint::write_tensors(&mut out, &checkpoint::to_records(&self.store, &self.adam))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
