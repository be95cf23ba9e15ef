use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{relu, Conv2d, Init};
use crate::tensor::{FeatureMap, ImageTensor};

/// Identifies the weights behind every reported number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorDescriptor {
    pub name: String,
    pub version: u32,
    /// SHA-256 of the little-endian weight bytes, in layer order.
    pub weights_hash: String,
}

/// Frozen conv stack mapping an image to one feature map per layer.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    layers: Vec<Conv2d>,
    descriptor: ExtractorDescriptor,
}

/// `(out_channels, kernel, stride, padding)` of the default stack.
const DEFAULT_LAYERS: [(usize, usize, usize, usize); 3] = [(8, 3, 1, 1), (16, 4, 2, 1), (32, 4, 2, 1)];
pub const DEFAULT_EXTRACTOR_SEED: u64 = 20_240_601;

fn weights_hash(layers: &[Conv2d]) -> String {
    let mut h = Sha256::new();
    for l in layers {
        for v in l.weight.value.iter().chain(&l.bias.value) {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl FeatureExtractor {
    /// The default randomly initialised, frozen stack for `in_channels` inputs.
    pub fn seeded(in_channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = in_channels;
        let layers: Vec<Conv2d> = DEFAULT_LAYERS
            .iter()
            .map(|&(c_out, k, s, p)| {
                let conv = Conv2d::new(c_in, c_out, k, s, p, Init::Kaiming, &mut rng);
                c_in = c_out;
                conv
            })
            .collect();
        Self::from_layers(format!("seeded-conv3-c{in_channels}-s{seed}"), 1, layers)
    }

    fn from_layers(name: String, version: u32, layers: Vec<Conv2d>) -> Self {
        let descriptor = ExtractorDescriptor {
            name,
            version,
            weights_hash: weights_hash(&layers),
        };
        Self { layers, descriptor }
    }

    pub fn descriptor(&self) -> &ExtractorDescriptor {
        &self.descriptor
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Cumulative stride of each layer's output.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = 1;
        self.layers
            .iter()
            .map(|l| {
                s *= l.stride;
                s
            })
            .collect()
    }

    pub fn features(&self, image: &ImageTensor) -> Result<Vec<FeatureMap>> {
        self.features_of(&image.pixels)
    }

    pub fn features_of(&self, pixels: &FeatureMap) -> Result<Vec<FeatureMap>> {
        if pixels.channels() != self.in_channels() {
            return Err(Error::dim(format!(
                "extractor takes {} channels, image has {}",
                self.in_channels(),
                pixels.channels()
            )));
        }
        let mut out = Vec::with_capacity(self.layers.len());
        let mut x = pixels.clone();
        for l in &self.layers {
            x = relu(&l.forward(&x)?);
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Concatenated global average of every layer: the distribution embedding.
    pub fn embed(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        let mut e = Vec::new();
        for f in self.features(image)? {
            let n = f.plane_len() as f64;
            for c in 0..f.channels() {
                e.push(f.plane(c).iter().map(|&v| v as f64).sum::<f64>() / n);
            }
        }
        Ok(e)
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.iter().map(|l| l.out_channels).sum()
    }

    /// Writes the weights as a safetensors archive (`layer{i}.weight`,
    /// `layer{i}.bias`, plus stride and padding in the header).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut blobs = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let bytes = |v: &[f32]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
            blobs.push((
                format!("layer{i}.weight"),
                l.weight.shape.clone(),
                bytes(&l.weight.value),
            ));
            blobs.push((format!("layer{i}.bias"), l.bias.shape.clone(), bytes(&l.bias.value)));
        }
        let views = blobs
            .iter()
            .map(|(n, s, b)| TensorView::new(Dtype::F32, s.clone(), b).map(|v| (n.as_str(), v)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Format(e.to_string()))?;
        let geometry: Vec<(usize, usize)> = self.layers.iter().map(|l| (l.stride, l.padding)).collect();
        let header = HashMap::from([
            ("name".to_string(), self.descriptor.name.clone()),
            ("version".to_string(), self.descriptor.version.to_string()),
            (
                "geometry".to_string(),
                serde_json::to_string(&geometry).expect("plain data"),
            ),
        ]);
        let data = safetensors::serialize(views, Some(header)).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, data).map_err(|e| Error::io(path, e))
    }

    /// Loads a weights file in the format written by [`FeatureExtractor::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let fmt = |e: safetensors::SafeTensorError| Error::Format(format!("{}: {e}", path.display()));
        let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(fmt)?;
        let header = meta.metadata().clone().unwrap_or_default();
        let field = |k: &str| {
            header
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Format(format!("missing field {k} in {}", path.display())))
        };
        let name = field("name")?;
        let version: u32 = field("version")?
            .parse()
            .map_err(|_| Error::Format("extractor version is not an integer".into()))?;
        let geometry: Vec<(usize, usize)> =
            serde_json::from_str(&field("geometry")?).map_err(|e| Error::Format(e.to_string()))?;
        let archive = SafeTensors::deserialize(&bytes).map_err(fmt)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layers = Vec::with_capacity(geometry.len());
        for (i, &(stride, padding)) in geometry.iter().enumerate() {
            let w = archive
                .tensor(&format!("layer{i}.weight"))
                .map_err(|_| Error::Format(format!("missing field layer{i}.weight")))?;
            let b = archive
                .tensor(&format!("layer{i}.bias"))
                .map_err(|_| Error::Format(format!("missing field layer{i}.bias")))?;
            let [c_out, c_in, k, k2] = w.shape() else {
                return Err(Error::Format(format!("layer{i}.weight must be 4-dimensional")));
            };
            if k != k2 || b.shape() != [*c_out] || w.dtype() != Dtype::F32 || b.dtype() != Dtype::F32 {
                return Err(Error::Format(format!("layer{i} has inconsistent shapes or dtypes")));
            }
            let floats = |d: &[u8]| {
                d.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect::<Vec<f32>>()
            };
            let mut conv = Conv2d::new(*c_in, *c_out, *k, stride, padding, Init::Constant(0.0), &mut rng);
            conv.weight.value = floats(w.data());
            conv.bias.value = floats(b.data());
            if let Some(prev) = layers.last().map(|l: &Conv2d| l.out_channels) {
                if prev != *c_in {
                    return Err(Error::Format(format!("layer{i} input channels do not chain")));
                }
            }
            layers.push(conv);
        }
        if layers.is_empty() {
            return Err(Error::Format("extractor has no layers".into()));
        }
        Ok(Self::from_layers(name, version, layers))
    }
}
