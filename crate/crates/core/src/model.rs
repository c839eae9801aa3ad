//! Encoder/decoder detection network.
//!
//! Three view encoders (range-angle, range-Doppler, angle-Doppler) of six
//! stride-2/stride-1 conv blocks each feed a cross-attention fusion block;
//! one shared transpose-conv decoder restores full resolution and carries
//! three heads: class heatmaps and center offsets at input resolution
//! (sigmoid), heading sin/cos at quarter resolution (tanh). Multi-frame
//! input stacks past frames as channels of every encoder's first layer.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use raddet_tensor::init::kaiming_uniform;
use raddet_tensor::ops::{
    batched_matmul, batchnorm2d, conv2d, conv_transpose2d, layernorm_channels, prelu,
    softmax_lastdim, BatchNormState,
};

use crate::{CoreError, RadarGeometry, Result, Scalar, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
pub const LN_EPS: f64 = 1e-5;
pub const PRELU_INIT: f64 = 0.25;

/// Spatial stride schedule: six encoder layers taking range/angle to 1/16.
const ENC_STRIDES_SPATIAL: [usize; 6] = [2, 1, 2, 1, 2, 2];
/// Doppler axis compresses only to 1/4 so fusion still sees a velocity axis.
const ENC_STRIDES_DOPPLER: [usize; 6] = [2, 1, 1, 1, 2, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Three encoders, Doppler cross-attention, one shared decoder.
    CrossAttention,
    /// Range-angle encoder and decoder only (no Doppler branches).
    RaOnly,
    /// Like `CrossAttention` but with three parallel decoder/head stacks
    /// whose outputs are averaged; exists as the parameter-count baseline
    /// for the shared-decoder design.
    ThreeDecoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub r_bins: usize,
    pub a_bins: usize,
    pub d_bins: usize,
    pub t_frames: usize,
    pub enc_channels: Vec<usize>,
    pub dec_channels: Vec<usize>,
    pub num_classes: usize,
    pub variant: ModelVariant,
}

impl ModelConfig {
    pub fn new(geometry: &RadarGeometry, t_frames: usize, variant: ModelVariant) -> Self {
        ModelConfig {
            r_bins: geometry.r_bins,
            a_bins: geometry.a_bins,
            d_bins: geometry.d_bins,
            t_frames,
            enc_channels: vec![16, 32, 64, 64, 128, 128],
            dec_channels: vec![128, 64, 32, 16],
            num_classes: 3,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_bins % 16 != 0 || self.a_bins % 16 != 0 {
            return Err(CoreError::Config(format!(
                "range/angle bins must be divisible by 16, got {}x{}",
                self.r_bins, self.a_bins
            )));
        }
        if self.d_bins % 4 != 0 {
            return Err(CoreError::Config(format!(
                "Doppler bins must be divisible by 4, got {}",
                self.d_bins
            )));
        }
        if !matches!(self.t_frames, 1 | 3 | 5) {
            return Err(CoreError::Config(format!(
                "t_frames must be 1, 3 or 5, got {}",
                self.t_frames
            )));
        }
        if self.enc_channels.len() != 6 {
            return Err(CoreError::Config("need exactly 6 encoder layers".into()));
        }
        if self.dec_channels.len() != 4 {
            return Err(CoreError::Config("need exactly 4 decoder layers".into()));
        }
        if *self.enc_channels.last().unwrap() != self.dec_channels[0] {
            return Err(CoreError::Config(
                "decoder width must start at the encoder bottleneck width".into(),
            ));
        }
        Ok(())
    }

    fn fusion_dim(&self) -> usize {
        *self.enc_channels.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvBlock {
    w: usize,
    b: usize,
    gamma: usize,
    beta: usize,
    alpha: usize,
    bn: usize,
    stride: (usize, usize),
}

#[derive(Debug, Clone, Copy)]
struct Head {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct DecoderArch {
    blocks: Vec<ConvBlock>,
    heatmap: Head,
    offset: Head,
    heading: Head,
}

#[derive(Debug, Clone)]
struct Arch {
    enc_ra: Vec<ConvBlock>,
    enc_rd: Vec<ConvBlock>,
    enc_ad: Vec<ConvBlock>,
    fusion_ln: Option<(usize, usize)>,
    decoders: Vec<DecoderArch>,
}

/// Network outputs for one forward pass (batch leading).
#[derive(Debug, Clone)]
pub struct NetworkOutput {
    /// `[N, classes, R, A]`, sigmoid.
    pub heatmap: Tensor,
    /// `[N, 2, R, A]`, sigmoid (decode as `2x-1`).
    pub offset: Tensor,
    /// `[N, 2, R/4, A/4]`, tanh.
    pub heading: Tensor,
}

pub struct Model {
    pub config: ModelConfig,
    params: Vec<Tensor>,
    names: Vec<String>,
    bn_states: Vec<BatchNormState<Scalar>>,
    arch: Arch,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
            names: self.names.clone(),
            bn_states: self.bn_states.clone(),
            arch: self.arch.clone(),
        }
    }
}

struct Builder {
    rng: ChaCha8Rng,
    params: Vec<Tensor>,
    names: Vec<String>,
    bn_states: Vec<BatchNormState<Scalar>>,
}

impl Builder {
    fn param(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> usize {
        self.params
            .push(Tensor::leaf(shape, data, true).expect("param shape"));
        self.names.push(name);
        self.params.len() - 1
    }

    fn conv_block(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: (usize, usize),
    ) -> ConvBlock {
        let fan_in = cin * k * k;
        let w = kaiming_uniform(&mut self.rng, fan_in, cout * cin * k * k);
        let w = self.param(format!("{name}.weight"), &[cout, cin, k, k], w);
        let b = self.param(format!("{name}.bias"), &[cout], vec![0.0; cout]);
        let gamma = self.param(format!("{name}.bn.gamma"), &[cout], vec![1.0; cout]);
        let beta = self.param(format!("{name}.bn.beta"), &[cout], vec![0.0; cout]);
        let alpha = self.param(format!("{name}.prelu"), &[cout], vec![PRELU_INIT; cout]);
        self.bn_states.push(BatchNormState::new(cout));
        ConvBlock {
            w,
            b,
            gamma,
            beta,
            alpha,
            bn: self.bn_states.len() - 1,
            stride,
        }
    }

    fn deconv_block(&mut self, name: &str, cin: usize, cout: usize) -> ConvBlock {
        let fan_in = cin * 16;
        let w = kaiming_uniform(&mut self.rng, fan_in, cin * cout * 16);
        let w = self.param(format!("{name}.weight"), &[cin, cout, 4, 4], w);
        let b = self.param(format!("{name}.bias"), &[cout], vec![0.0; cout]);
        let gamma = self.param(format!("{name}.bn.gamma"), &[cout], vec![1.0; cout]);
        let beta = self.param(format!("{name}.bn.beta"), &[cout], vec![0.0; cout]);
        let alpha = self.param(format!("{name}.prelu"), &[cout], vec![PRELU_INIT; cout]);
        self.bn_states.push(BatchNormState::new(cout));
        ConvBlock {
            w,
            b,
            gamma,
            beta,
            alpha,
            bn: self.bn_states.len() - 1,
            stride: (2, 2),
        }
    }

    fn head(&mut self, name: &str, cin: usize, cout: usize) -> Head {
        let w = kaiming_uniform(&mut self.rng, cin, cout * cin);
        let w = self.param(format!("{name}.weight"), &[cout, cin, 1, 1], w);
        let b = self.param(format!("{name}.bias"), &[cout], vec![0.0; cout]);
        Head { w, b }
    }

    fn encoder(&mut self, name: &str, t: usize, channels: &[usize], doppler_axis: bool) -> Vec<ConvBlock> {
        let mut blocks = Vec::with_capacity(channels.len());
        let mut cin = t;
        for (i, &cout) in channels.iter().enumerate() {
            let stride = if doppler_axis {
                (ENC_STRIDES_SPATIAL[i], ENC_STRIDES_DOPPLER[i])
            } else {
                (ENC_STRIDES_SPATIAL[i], ENC_STRIDES_SPATIAL[i])
            };
            blocks.push(self.conv_block(&format!("{name}.{i}"), cin, cout, 3, stride));
            cin = cout;
        }
        blocks
    }

    fn decoder(&mut self, name: &str, cfg: &ModelConfig) -> DecoderArch {
        let mut blocks = Vec::with_capacity(cfg.dec_channels.len());
        let mut cin = cfg.fusion_dim();
        for (i, &cout) in cfg.dec_channels.iter().enumerate() {
            blocks.push(self.deconv_block(&format!("{name}.{i}"), cin, cout));
            cin = cout;
        }
        let heading_cin = cfg.dec_channels[1];
        DecoderArch {
            blocks,
            heatmap: self.head(&format!("{name}.head_heatmap"), cin, cfg.num_classes),
            offset: self.head(&format!("{name}.head_offset"), cin, 2),
            heading: self.head(&format!("{name}.head_heading"), heading_cin, 2),
        }
    }
}

impl Model {
    /// Builds a freshly initialized model; deterministic in `seed`.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut b = Builder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            names: Vec::new(),
            bn_states: Vec::new(),
        };
        let t = config.t_frames;
        let enc_ra = b.encoder("enc_ra", t, &config.enc_channels, false);
        let (enc_rd, enc_ad, fusion_ln) = if config.variant == ModelVariant::RaOnly {
            (Vec::new(), Vec::new(), None)
        } else {
            let rd = b.encoder("enc_rd", t, &config.enc_channels, true);
            let ad = b.encoder("enc_ad", t, &config.enc_channels, true);
            let c = config.fusion_dim();
            let gamma = b.param("fusion.ln.gamma".into(), &[c], vec![1.0; c]);
            let beta = b.param("fusion.ln.beta".into(), &[c], vec![0.0; c]);
            (rd, ad, Some((gamma, beta)))
        };
        let n_decoders = if config.variant == ModelVariant::ThreeDecoder {
            3
        } else {
            1
        };
        let decoders = (0..n_decoders)
            .map(|i| b.decoder(&format!("dec{i}"), &config))
            .collect();

        let model = Model {
            config,
            params: b.params,
            names: b.names,
            bn_states: b.bn_states,
            arch: Arch {
                enc_ra,
                enc_rd,
                enc_ad,
                fusion_ln,
                decoders,
            },
        };
        log::info!(
            "built {:?} model: {} parameters",
            model.config.variant,
            model.param_count()
        );
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.numel()).sum()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Vec<Tensor> {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn set_param(&mut self, index: usize, value: Tensor) {
        self.params[index] = value;
    }

    pub fn clear_grads(&self) {
        for p in &self.params {
            p.clear_grad();
        }
    }

    fn conv_block_fwd(&mut self, x: &Tensor, blk: &ConvBlock, training: bool) -> Result<Tensor> {
        let y = conv2d(
            x,
            &self.params[blk.w],
            Some(&self.params[blk.b]),
            blk.stride,
            (1, 1),
        )?;
        let y = batchnorm2d(
            &y,
            &self.params[blk.gamma],
            &self.params[blk.beta],
            &mut self.bn_states[blk.bn],
            training,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        Ok(prelu(&y, &self.params[blk.alpha])?)
    }

    fn deconv_block_fwd(&mut self, x: &Tensor, blk: &ConvBlock, training: bool) -> Result<Tensor> {
        let y = conv_transpose2d(
            x,
            &self.params[blk.w],
            Some(&self.params[blk.b]),
            blk.stride,
            (1, 1),
        )?;
        let y = batchnorm2d(
            &y,
            &self.params[blk.gamma],
            &self.params[blk.beta],
            &mut self.bn_states[blk.bn],
            training,
            BN_MOMENTUM,
            BN_EPS,
        )?;
        Ok(prelu(&y, &self.params[blk.alpha])?)
    }

    fn encode(&mut self, mut x: Tensor, blocks: &[ConvBlock], training: bool) -> Result<Tensor> {
        for blk in blocks.to_vec() {
            x = self.conv_block_fwd(&x, &blk, training)?;
        }
        Ok(x)
    }

    fn decode(
        &mut self,
        fused: &Tensor,
        dec: &DecoderArch,
        training: bool,
    ) -> Result<NetworkOutput> {
        let mut x = fused.clone();
        let mut quarter = None;
        for (i, blk) in dec.blocks.to_vec().iter().enumerate() {
            x = self.deconv_block_fwd(&x, blk, training)?;
            if i == 1 {
                quarter = Some(x.clone());
            }
        }
        let quarter = quarter.expect("decoder has 4 blocks");
        let heatmap = conv2d(
            &x,
            &self.params[dec.heatmap.w],
            Some(&self.params[dec.heatmap.b]),
            (1, 1),
            (0, 0),
        )?
        .sigmoid();
        let offset = conv2d(
            &x,
            &self.params[dec.offset.w],
            Some(&self.params[dec.offset.b]),
            (1, 1),
            (0, 0),
        )?
        .sigmoid();
        let heading = conv2d(
            &quarter,
            &self.params[dec.heading.w],
            Some(&self.params[dec.heading.b]),
            (1, 1),
            (0, 0),
        )?
        .tanh_act();
        Ok(NetworkOutput {
            heatmap,
            offset,
            heading,
        })
    }

    /// Full forward pass. Inputs: `ra [N,t,R,A]`, `rd [N,t,R,D]`,
    /// `ad [N,t,A,D]` (the Doppler views are ignored by the range-angle-only
    /// variant).
    pub fn forward(
        &mut self,
        ra: &Tensor,
        rd: &Tensor,
        ad: &Tensor,
        training: bool,
    ) -> Result<NetworkOutput> {
        self.check_input("ra", ra, self.config.r_bins, self.config.a_bins)?;
        let f_ra = self.encode(ra.clone(), &self.arch.enc_ra.clone(), training)?;
        let fused = if self.config.variant == ModelVariant::RaOnly {
            f_ra
        } else {
            self.check_input("rd", rd, self.config.r_bins, self.config.d_bins)?;
            self.check_input("ad", ad, self.config.a_bins, self.config.d_bins)?;
            let f_rd = self.encode(rd.clone(), &self.arch.enc_rd.clone(), training)?;
            let f_ad = self.encode(ad.clone(), &self.arch.enc_ad.clone(), training)?;
            let (gamma, beta) = self.arch.fusion_ln.expect("fusion params");
            cross_attention(
                &f_ra,
                &f_rd,
                &f_ad,
                &self.params[gamma],
                &self.params[beta],
                LN_EPS,
            )?
        };

        let decoders = self.arch.decoders.clone();
        let mut outputs = Vec::with_capacity(decoders.len());
        for dec in &decoders {
            outputs.push(self.decode(&fused, dec, training)?);
        }
        if outputs.len() == 1 {
            return Ok(outputs.pop().unwrap());
        }
        let k = 1.0 / outputs.len() as f64;
        let mut hm = outputs[0].heatmap.scale(k);
        let mut off = outputs[0].offset.scale(k);
        let mut hd = outputs[0].heading.scale(k);
        for o in &outputs[1..] {
            hm = hm.add(&o.heatmap.scale(k))?;
            off = off.add(&o.offset.scale(k))?;
            hd = hd.add(&o.heading.scale(k))?;
        }
        Ok(NetworkOutput {
            heatmap: hm,
            offset: off,
            heading: hd,
        })
    }

    fn check_input(&self, name: &str, x: &Tensor, h: usize, w: usize) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != self.config.t_frames || s[2] != h || s[3] != w {
            return Err(CoreError::Config(format!(
                "{name} input shape {s:?} does not match [N,{},{h},{w}]",
                self.config.t_frames
            )));
        }
        Ok(())
    }

    /// Serializes config, parameters, and batchnorm running statistics as a
    /// versioned little-endian binary blob.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header =
            serde_json::to_vec(&self.config).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(b"RDCK");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);

        let entries = self.named_entries();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, data) in entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
        f.write_all(&out).map_err(|e| CoreError::io(path, e))
    }

    fn named_entries(&self) -> Vec<(String, Vec<f64>)> {
        let mut entries: Vec<(String, Vec<f64>)> = self
            .names
            .iter()
            .zip(&self.params)
            .map(|(n, p)| (n.clone(), p.data().to_vec()))
            .collect();
        for (i, st) in self.bn_states.iter().enumerate() {
            entries.push((format!("bn{i}.running_mean"), st.mean.clone()));
            entries.push((format!("bn{i}.running_var"), st.var.clone()));
        }
        entries
    }

    pub fn load(path: &Path) -> Result<Model> {
        let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
        let fail = |msg: &str| CoreError::Checkpoint(format!("{}: {msg}", path.display()));
        if bytes.len() < 12 || &bytes[..4] != b"RDCK" {
            return Err(fail("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != 1 {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mut pos = 12;
        let config: ModelConfig = serde_json::from_slice(
            bytes
                .get(pos..pos + hlen)
                .ok_or_else(|| fail("truncated header"))?,
        )
        .map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        pos += hlen;

        let mut model = Model::build(config, 0)?;
        let n = u32::from_le_bytes(
            bytes
                .get(pos..pos + 4)
                .ok_or_else(|| fail("truncated"))?
                .try_into()
                .unwrap(),
        ) as usize;
        pos += 4;
        let mut loaded: std::collections::HashMap<String, Vec<f64>> =
            std::collections::HashMap::new();
        for _ in 0..n {
            let nl = u32::from_le_bytes(
                bytes
                    .get(pos..pos + 4)
                    .ok_or_else(|| fail("truncated"))?
                    .try_into()
                    .unwrap(),
            ) as usize;
            pos += 4;
            let name = String::from_utf8(
                bytes
                    .get(pos..pos + nl)
                    .ok_or_else(|| fail("truncated"))?
                    .to_vec(),
            )
            .map_err(|_| fail("bad name"))?;
            pos += nl;
            let len = u64::from_le_bytes(
                bytes
                    .get(pos..pos + 8)
                    .ok_or_else(|| fail("truncated"))?
                    .try_into()
                    .unwrap(),
            ) as usize;
            pos += 8;
            let raw = bytes
                .get(pos..pos + len * 8)
                .ok_or_else(|| fail("truncated data"))?;
            pos += len * 8;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            loaded.insert(name, data);
        }

        for (i, name) in model.names.clone().iter().enumerate() {
            let data = loaded
                .remove(name)
                .ok_or_else(|| fail(&format!("missing parameter {name}")))?;
            if data.len() != model.params[i].numel() {
                return Err(fail(&format!("parameter {name} has wrong size")));
            }
            let shape = model.params[i].shape().to_vec();
            model.params[i] = Tensor::leaf(&shape, data, true)?;
        }
        for i in 0..model.bn_states.len() {
            let mean = loaded
                .remove(&format!("bn{i}.running_mean"))
                .ok_or_else(|| fail("missing bn state"))?;
            let var = loaded
                .remove(&format!("bn{i}.running_var"))
                .ok_or_else(|| fail("missing bn state"))?;
            if mean.len() != model.bn_states[i].mean.len() {
                return Err(fail("bn state has wrong size"));
            }
            model.bn_states[i].mean = mean;
            model.bn_states[i].var = var;
        }
        if !loaded.is_empty() {
            return Err(fail(&format!(
                "unexpected entries: {:?}",
                loaded.keys().collect::<Vec<_>>()
            )));
        }
        Ok(model)
    }
}

/// Doppler cross-attention: the range-Doppler and (transposed) angle-Doppler
/// features multiply over the Doppler axis into range-angle attention
/// logits; a softmax over the angle axis gates the range-angle features
/// (Hadamard), and a residual skip plus channel layer-norm closes the block.
///
/// Shapes: `f_ra [N,C,h,w]`, `f_rd [N,C,h,d]`, `f_ad [N,C,w,d]`.
pub fn cross_attention(
    f_ra: &Tensor,
    f_rd: &Tensor,
    f_ad: &Tensor,
    ln_gamma: &Tensor,
    ln_beta: &Tensor,
    eps: f64,
) -> Result<Tensor> {
    let (sra, srd, sad) = (f_ra.shape(), f_rd.shape(), f_ad.shape());
    if srd[3] != sad[3] {
        return Err(CoreError::Config(format!(
            "Doppler axes differ: {} vs {}",
            srd[3], sad[3]
        )));
    }
    let (n, c, h, w) = (sra[0], sra[1], sra[2], sra[3]);
    let d = srd[3];
    if srd[2] != h || sad[2] != w || srd[0] != n || sad[0] != n || srd[1] != c || sad[1] != c {
        return Err(CoreError::Config(format!(
            "fusion shapes inconsistent: ra {sra:?}, rd {srd:?}, ad {sad:?}"
        )));
    }
    let rd_flat = f_rd.reshape(&[n * c, h, d])?;
    let ad_t = f_ad.reshape(&[n * c, w, d])?.transpose_last2()?;
    let logits = batched_matmul(&rd_flat, &ad_t)?.reshape(&[n, c, h, w])?;
    let attn = softmax_lastdim(&logits)?;
    let gated = attn.mul(f_ra)?;
    let skip = gated.add(f_ra)?;
    Ok(layernorm_channels(&skip, ln_gamma, ln_beta, eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_geometry() -> RadarGeometry {
        RadarGeometry {
            r_bins: 16,
            a_bins: 16,
            d_bins: 8,
            ..RadarGeometry::default()
        }
    }

    fn zero_inputs(cfg: &ModelConfig, n: usize) -> (Tensor, Tensor, Tensor) {
        let t = cfg.t_frames;
        (
            Tensor::zeros(&[n, t, cfg.r_bins, cfg.a_bins]),
            Tensor::zeros(&[n, t, cfg.r_bins, cfg.d_bins]),
            Tensor::zeros(&[n, t, cfg.a_bins, cfg.d_bins]),
        )
    }

    #[test]
    fn output_shapes_match_contract() {
        let cfg = ModelConfig::new(&tiny_geometry(), 1, ModelVariant::CrossAttention);
        let mut m = Model::build(cfg.clone(), 1).unwrap();
        let (ra, rd, ad) = zero_inputs(&cfg, 2);
        let out = m.forward(&ra, &rd, &ad, false).unwrap();
        assert_eq!(out.heatmap.shape(), &[2, 3, 16, 16]);
        assert_eq!(out.offset.shape(), &[2, 2, 16, 16]);
        assert_eq!(out.heading.shape(), &[2, 2, 4, 4]);
        assert!(out.heatmap.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_identical_params() {
        let cfg = ModelConfig::new(&tiny_geometry(), 1, ModelVariant::CrossAttention);
        let a = Model::build(cfg.clone(), 7).unwrap();
        let b = Model::build(cfg, 7).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.data(), pb.data());
        }
    }

    #[test]
    fn t_frames_changes_only_first_layer_shapes() {
        let cfg1 = ModelConfig::new(&tiny_geometry(), 1, ModelVariant::CrossAttention);
        let cfg3 = ModelConfig {
            t_frames: 3,
            ..cfg1.clone()
        };
        let m1 = Model::build(cfg1, 1).unwrap();
        let m3 = Model::build(cfg3, 1).unwrap();
        for ((n1, p1), (n3, p3)) in m1
            .param_names()
            .iter()
            .zip(m1.params())
            .zip(m3.param_names().iter().zip(m3.params()))
        {
            assert_eq!(n1, n3);
            if n1.ends_with(".0.weight") && n1.starts_with("enc") {
                assert_ne!(p1.shape(), p3.shape(), "{n1}");
            } else {
                assert_eq!(p1.shape(), p3.shape(), "{n1}");
            }
        }
    }

    #[test]
    fn fusion_model_smaller_than_three_decoder() {
        let g = tiny_geometry();
        let one = Model::build(ModelConfig::new(&g, 1, ModelVariant::CrossAttention), 1).unwrap();
        let three = Model::build(ModelConfig::new(&g, 1, ModelVariant::ThreeDecoder), 1).unwrap();
        assert!(one.param_count() < three.param_count());
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let cfg = ModelConfig::new(&tiny_geometry(), 1, ModelVariant::CrossAttention);
        let mut m = Model::build(cfg.clone(), 3).unwrap();
        let t = cfg.t_frames;
        let mk = |seed: u64, shape: &[usize]| {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
        };
        let ra = mk(1, &[1, t, 16, 16]);
        let rd = mk(2, &[1, t, 16, 8]);
        let ad = mk(3, &[1, t, 16, 8]);
        let o1 = m.forward(&ra, &rd, &ad, false).unwrap();
        let o2 = m.forward(&ra, &rd, &ad, false).unwrap();
        assert_eq!(o1.heatmap.data(), o2.heatmap.data());
        assert_eq!(o1.heading.data(), o2.heading.data());
    }

    #[test]
    fn geometry_not_divisible_is_rejected() {
        let g = RadarGeometry {
            r_bins: 20,
            a_bins: 16,
            d_bins: 8,
            ..RadarGeometry::default()
        };
        let cfg = ModelConfig::new(&g, 1, ModelVariant::CrossAttention);
        assert!(Model::build(cfg, 1).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_bit_identical() {
        let cfg = ModelConfig::new(&tiny_geometry(), 1, ModelVariant::CrossAttention);
        let mut m = Model::build(cfg.clone(), 11).unwrap();
        // Touch bn states so they are non-trivial.
        let (ra, rd, ad) = zero_inputs(&cfg, 2);
        let _ = m.forward(&ra, &rd, &ad, true).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save(&path).unwrap();
        let mut loaded = Model::load(&path).unwrap();
        for (a, b) in m.params().iter().zip(loaded.params()) {
            assert_eq!(a.data(), b.data());
        }
        let (ra, rd, ad) = zero_inputs(&cfg, 1);
        let o1 = m.forward(&ra, &rd, &ad, false).unwrap();
        let o2 = loaded.forward(&ra, &rd, &ad, false).unwrap();
        assert_eq!(o1.heatmap.data(), o2.heatmap.data());
    }
}
