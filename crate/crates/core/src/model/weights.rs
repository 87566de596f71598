use std::fs;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::metrics::Restorer;
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::config::ModelConfig;
use super::layers::ParamKind;
use super::network::Network;

/// Network plus its flat parameter vector.
#[derive(Debug, Clone)]
pub struct ModelWeights<T> {
    network: Network,
    values: Vec<T>,
}

const MAGIC: &[u8; 8] = b"MIXSRW\0\0";
const FORMAT_VERSION: u32 = 1;

impl<T: Scalar> ModelWeights<T> {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let network = Network::new(config)?;
        let values = vec![T::zero(); network.num_params()];
        Ok(Self { network, values })
    }

    pub fn from_values(config: ModelConfig, values: Vec<T>) -> Result<Self> {
        let network = Network::new(config)?;
        if values.len() != network.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                values.len(),
                network.num_params()
            )));
        }
        Ok(Self { network, values })
    }

    /// He-normal kernels (`N(0, 2 / fan_in)`), zero biases.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut weights = Self::zeros(config)?;
        for spec in weights.network.params() {
            if let ParamKind::Kernel { fan_in } = spec.kind {
                let std = (2.0 / fan_in as f64).sqrt();
                for v in spec.slot.of_mut(&mut weights.values) {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = T::from_f64_lossy(z * std);
                }
            }
        }
        Ok(weights)
    }

    /// All-zero weights except fusion convolutions, which pass the raw
    /// input channel group through. Computes the identity map whenever
    /// the global skip is enabled.
    pub fn identity(config: ModelConfig) -> Result<Self> {
        let mut weights = Self::zeros(config)?;
        let c = config.base_channels;
        let fusions: Vec<_> = weights
            .network
            .body
            .fusions
            .iter()
            .chain(weights.network.body.units.iter().flat_map(|u| u.fusions.iter()))
            .map(|f| (f.weight, f.cin))
            .collect();
        for (slot, cin) in fusions {
            let w = slot.of_mut(&mut weights.values);
            for co in 0..c {
                w[co * cin + co] = T::one();
            }
        }
        Ok(weights)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.network.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> ModelWeights<U> {
        ModelWeights {
            network: self.network.clone(),
            values: self.values.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    /// Values of the named parameter.
    pub fn param(&self, name: &str) -> Option<&[T]> {
        self.network
            .params()
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.slot.of(&self.values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        for v in [
            cfg.base_channels,
            cfg.num_cascading_blocks,
            cfg.rcabs_per_block,
            cfg.attention_reduction,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(cfg.global_skip as u8);
        out.push(cfg.encoder_skips as u8);
        let specs = self.network.params();
        out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
        for spec in specs {
            out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
            out.extend_from_slice(spec.name.as_bytes());
            out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
            for &d in &spec.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in spec.slot.of(&self.values) {
                out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::MalformedWeights(m.to_string());
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("missing header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader {
            buf: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::MalformedWeights(format!("unsupported format version {version}")));
        }
        let config = ModelConfig {
            base_channels: r.u32()? as usize,
            num_cascading_blocks: r.u32()? as usize,
            rcabs_per_block: r.u32()? as usize,
            attention_reduction: r.u32()? as usize,
            global_skip: r.u8()? != 0,
            encoder_skips: r.u8()? != 0,
        };
        let mut weights = Self::zeros(config)?;
        let count = r.u32()? as usize;
        if count != weights.network.params().len() {
            return Err(bad("parameter inventory does not match config"));
        }
        for spec in weights.network.params().to_vec() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| bad("name is not utf-8"))?;
            if name != spec.name {
                return Err(Error::MalformedWeights(format!("expected {}, found {name}", spec.name)));
            }
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if shape != spec.shape {
                return Err(Error::MalformedWeights(format!("shape mismatch for {name}")));
            }
            for v in spec.slot.of_mut(&mut weights.values) {
                let raw: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
                *v = T::from_f64_lossy(f32::from_le_bytes(raw) as f64);
            }
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(weights)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Hex SHA-256 of the serialized container.
    pub fn checksum(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::MalformedWeights("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

impl<T: Scalar> Restorer for ModelWeights<T> {
    fn restore(&self, lr: &ImageBuffer) -> Result<ImageBuffer> {
        self.network.restore_image(&self.values, lr)
    }
}
