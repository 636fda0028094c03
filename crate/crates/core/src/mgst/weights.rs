//! Layer parameters, seeded initialization and the weight file.
//!
//! Weight files use the safetensors container: a little-endian `u64` header length, a
//! JSON header mapping tensor names to dtype, shape and byte offsets, then the raw
//! little-endian `F64` data.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_param, Error, Result};
use crate::io::write_atomic;

use super::geometry::PatchGeometry;
use super::window::WindowSpec;

/// Number of input channels per pixel: RGB, focus mask, depth, blur map.
pub const INPUT_CHANNELS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MgstConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub blocks: usize,
    /// Channels of the feature map that is split into patches.
    pub feature_channels: usize,
    /// Spatial reduction between the input clip and the feature map; a power of two.
    pub encoder_factor: usize,
    pub ffn_ratio: usize,
    pub kv_stride: usize,
    pub window: WindowSpec,
    pub patch: PatchGeometry,
    pub init_std: f64,
}

impl Default for MgstConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            heads: 4,
            blocks: 8,
            feature_channels: 8,
            encoder_factor: 2,
            ffn_ratio: 2,
            kv_stride: 2,
            window: WindowSpec::default(),
            patch: PatchGeometry::default(),
            init_std: 0.02,
        }
    }
}

impl MgstConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_param!(self.embed_dim >= 1 && self.heads >= 1, "embedding width and head count must be positive");
        ensure_param!(
            self.embed_dim.is_multiple_of(self.heads),
            "embedding width {} is not divisible by {} heads",
            self.embed_dim,
            self.heads
        );
        ensure_param!(self.blocks >= 1, "at least one transformer block is required");
        ensure_param!(self.feature_channels >= 1, "feature channels must be positive");
        ensure_param!(
            self.encoder_factor.is_power_of_two(),
            "encoder factor {} is not a power of two",
            self.encoder_factor
        );
        ensure_param!(self.ffn_ratio >= 1, "feed-forward ratio must be positive");
        ensure_param!(self.kv_stride >= 1, "temporal stride must be positive");
        ensure_param!(self.init_std > 0.0 && self.init_std.is_finite(), "initialization std must be positive");
        self.window.validate()?;
        self.patch.validate()
    }

    pub fn patch_dim(&self) -> usize {
        self.feature_channels * self.patch.kernel * self.patch.kernel
    }

    /// Pixel-shuffle stages from the feature map to twice the input resolution.
    pub fn decoder_stages(&self) -> usize {
        (2 * self.encoder_factor).trailing_zeros() as usize
    }
}

/// `y = W x + b` with `W` stored row-major as `output x input`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weight.chunks_exact(self.input).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    const EPS: f64 = 1e-5;

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv = 1.0 / (var + Self::EPS).sqrt();
        for (i, o) in out.iter_mut().enumerate() {
            *o = (x[i] - mean) * inv * self.gamma[i] + self.beta[i];
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub norm_attn: LayerNorm,
    /// Added to the normalized query token, scaled by the token's query-mask value.
    pub mask_embed: Vec<f64>,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub proj: Linear,
    pub norm_ffn: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: MgstConfig,
    pub encoder: Linear,
    pub embed: Linear,
    pub blocks: Vec<BlockWeights>,
    pub unembed: Linear,
    pub decoder: Vec<Linear>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Init {
    Normal,
    Zeros,
    Ones,
}

type Source<'a> = dyn FnMut(&str, &[usize], Init) -> Result<Vec<f64>> + 'a;

fn linear(src: &mut Source<'_>, name: &str, input: usize, output: usize) -> Result<Linear> {
    Ok(Linear {
        input,
        output,
        weight: src(&format!("{name}.weight"), &[output, input], Init::Normal)?,
        bias: src(&format!("{name}.bias"), &[output], Init::Zeros)?,
    })
}

fn layer_norm(src: &mut Source<'_>, name: &str, dim: usize) -> Result<LayerNorm> {
    Ok(LayerNorm {
        gamma: src(&format!("{name}.gamma"), &[dim], Init::Ones)?,
        beta: src(&format!("{name}.beta"), &[dim], Init::Zeros)?,
    })
}

impl ModelWeights {
    /// Builds every tensor in a fixed order, asking `src` for its values.
    fn build(config: &MgstConfig, src: &mut Source<'_>) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let c = config.feature_channels;
        let encoder = linear(src, "encoder", INPUT_CHANNELS, c)?;
        let embed = linear(src, "embed", config.patch_dim(), d)?;
        let blocks = (0..config.blocks)
            .map(|b| {
                let p = format!("blocks.{b}");
                Ok(BlockWeights {
                    norm_attn: layer_norm(src, &format!("{p}.norm_attn"), d)?,
                    mask_embed: src(&format!("{p}.mask_embed"), &[d], Init::Normal)?,
                    query: linear(src, &format!("{p}.query"), d, d)?,
                    key: linear(src, &format!("{p}.key"), d, d)?,
                    value: linear(src, &format!("{p}.value"), d, d)?,
                    proj: linear(src, &format!("{p}.proj"), d, d)?,
                    norm_ffn: layer_norm(src, &format!("{p}.norm_ffn"), d)?,
                    ffn_in: linear(src, &format!("{p}.ffn_in"), d, d * config.ffn_ratio)?,
                    ffn_out: linear(src, &format!("{p}.ffn_out"), d * config.ffn_ratio, d)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let unembed = linear(src, "unembed", d, config.patch_dim())?;
        let stages = config.decoder_stages();
        let decoder = (0..stages)
            .map(|s| {
                let out = if s + 1 == stages { 3 } else { c };
                linear(src, &format!("decoder.{s}"), c, out * 4)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            encoder,
            embed,
            blocks,
            unembed,
            decoder,
        })
    }

    /// Weights drawn from `N(0, init_std)`; biases and norm shifts zero, norm gains one.
    pub fn seeded(config: &MgstConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std)
            .map_err(|e| Error::InvalidParameter(format!("initialization std: {e}")))?;
        Self::build(config, &mut |_, shape, init| {
            let n = shape.iter().product();
            Ok(match init {
                Init::Normal => (0..n).map(|_| normal.sample(&mut rng)).collect(),
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            })
        })
    }

    /// Every tensor with its name and shape, in file order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        fn lin<'a>(name: &str, l: &'a Linear, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
            out.push((format!("{name}.weight"), vec![l.output, l.input], &l.weight));
            out.push((format!("{name}.bias"), vec![l.output], &l.bias));
        }
        fn norm<'a>(name: &str, n: &'a LayerNorm, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
            out.push((format!("{name}.gamma"), vec![n.gamma.len()], &n.gamma));
            out.push((format!("{name}.beta"), vec![n.beta.len()], &n.beta));
        }
        lin("encoder", &self.encoder, &mut out);
        lin("embed", &self.embed, &mut out);
        for (b, w) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{b}");
            norm(&format!("{p}.norm_attn"), &w.norm_attn, &mut out);
            out.push((format!("{p}.mask_embed"), vec![w.mask_embed.len()], &w.mask_embed));
            lin(&format!("{p}.query"), &w.query, &mut out);
            lin(&format!("{p}.key"), &w.key, &mut out);
            lin(&format!("{p}.value"), &w.value, &mut out);
            lin(&format!("{p}.proj"), &w.proj, &mut out);
            norm(&format!("{p}.norm_ffn"), &w.norm_ffn, &mut out);
            lin(&format!("{p}.ffn_in"), &w.ffn_in, &mut out);
            lin(&format!("{p}.ffn_out"), &w.ffn_out, &mut out);
        }
        lin("unembed", &self.unembed, &mut out);
        for (s, l) in self.decoder.iter().enumerate() {
            lin(&format!("decoder.{s}"), l, &mut out);
        }
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let raw: Vec<(String, Vec<usize>, Vec<u8>)> = self
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| (name, shape, data.iter().flat_map(|v| v.to_le_bytes()).collect()))
            .collect();
        let views = raw
            .iter()
            .map(|(name, shape, bytes)| {
                safetensors::tensor::TensorView::new(Dtype::F64, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| Error::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let metadata = HashMap::from([("format".to_string(), "focalvid-mgst".to_string())]);
        safetensors::serialize(views, Some(metadata)).map_err(|e| Error::Format(e.to_string()))
    }

    /// Reads a weight file written for `config`; every expected tensor must be present
    /// with the expected shape.
    pub fn from_bytes(config: &MgstConfig, bytes: &[u8]) -> Result<Self> {
        let file = SafeTensors::deserialize(bytes).map_err(|e| Error::Format(format!("weight file: {e}")))?;
        let expected = Self::build(config, &mut |_, shape, _| Ok(vec![0.0; shape.iter().product()]))?
            .tensors()
            .len();
        if file.len() != expected {
            return Err(Error::Format(format!(
                "weight file holds {} tensors, the configuration needs {expected}",
                file.len()
            )));
        }
        Self::build(config, &mut |name, shape, _| {
            let view = file
                .tensor(name)
                .map_err(|_| Error::Format(format!("weight file lacks tensor {name}")))?;
            if view.dtype() != Dtype::F64 || view.shape() != shape {
                return Err(Error::dims(
                    format!("{name} as F64 {shape:?}"),
                    format!("{:?} {:?}", view.dtype(), view.shape()),
                ));
            }
            Ok(view
                .data()
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect())
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(config: &MgstConfig, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(config, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MgstConfig {
        MgstConfig {
            embed_dim: 8,
            heads: 2,
            blocks: 2,
            feature_channels: 2,
            ..MgstConfig::default()
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ModelWeights::seeded(&small(), 3).unwrap();
        assert_eq!(a, ModelWeights::seeded(&small(), 3).unwrap());
        assert_ne!(a, ModelWeights::seeded(&small(), 4).unwrap());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let w = ModelWeights::seeded(&small(), 11).unwrap();
        let back = ModelWeights::from_bytes(&small(), &w.to_bytes().unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn header_length_prefix_is_little_endian() {
        let bytes = ModelWeights::seeded(&small(), 1).unwrap().to_bytes().unwrap();
        let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[8..8 + n]).unwrap();
        assert_eq!(header["embed.weight"]["dtype"], "F64");
        assert_eq!(header["embed.weight"]["shape"], serde_json::json!([8, 2 * 49]));
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let bytes = ModelWeights::seeded(&small(), 1).unwrap().to_bytes().unwrap();
        let other = MgstConfig {
            embed_dim: 16,
            ..small()
        };
        assert!(ModelWeights::from_bytes(&other, &bytes).is_err());
    }

    #[test]
    fn decoder_reaches_twice_the_input_resolution() {
        for (factor, stages) in [(1, 1), (2, 2), (4, 3)] {
            let c = MgstConfig {
                encoder_factor: factor,
                ..small()
            };
            assert_eq!(c.decoder_stages(), stages);
            assert_eq!(ModelWeights::seeded(&c, 0).unwrap().decoder.len(), stages);
        }
    }
}
