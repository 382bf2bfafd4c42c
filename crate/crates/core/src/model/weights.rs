//! Named weight tensors and their binary file format.
//!
//! Layout (little-endian): magic `STWT`, `u32` version (1), `u32` tensor
//! count, then per tensor `u32` name length, UTF-8 name, `u32` rank,
//! `u32` dims, `f32` data. Tensors are written in name order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::LEAKY_SLOPE;
use crate::real::Real;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"STWT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightSet<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> WeightSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// Inserts a tensor, failing if the name is already taken.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate weight name `{name}`")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> WeightSet<U> {
        WeightSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// All-zero weights laid out for `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut ws = Self::new();
        for (name, shape) in config.layout() {
            ws.insert(name, Tensor::zeros(&shape))?;
        }
        Ok(ws)
    }

    /// He-uniform initialisation for the leaky rectifier, zero biases.
    /// The second conv of each residual block and the two output heads
    /// start small so the untrained network is close to its skip paths.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt();
        let mut ws = Self::new();
        for (name, shape) in config.layout() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let damp = if name.ends_with(".b.weight") || name.starts_with("ref.out") {
                    0.1
                } else if name.starts_with("agg.out") {
                    0.5
                } else {
                    1.0
                };
                let bound = damp * gain * (3.0 / fan_in as f64).sqrt();
                Tensor::from_fn(&shape, |_| T::of(rng.random_range(-bound..bound)))
            };
            ws.insert(name, t)?;
        }
        Ok(ws)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("weights file does not start with STWT"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported weights version {version}")));
        }
        let count = r.u32()?;
        let mut ws = Self::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::format("weight name is not UTF-8"))?
                .to_owned();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::format(format!("`{name}`: {e}")))?;
            ws.insert(name, t)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::format("trailing bytes after last tensor"));
        }
        Ok(ws)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format("weights file is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut ws = WeightSet::<f32>::init(&ModelConfig::toy(), 7).unwrap();
        ws.get_mut("agg.out.bias").unwrap().data_mut()[0] = f32::from_bits(0x7fc0_1234);
        let bytes = ws.to_bytes();
        let back = WeightSet::<f32>::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        for ((na, a), (nb, b)) in ws.iter().zip(back.iter()) {
            assert_eq!(na, nb);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn header_layout() {
        let mut ws = WeightSet::<f32>::new();
        ws.insert("w", Tensor::new(&[2], vec![1.0, -2.0]).unwrap()).unwrap();
        let b = ws.to_bytes();
        assert_eq!(&b[..4], b"STWT");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&b[12..17], &[1, 0, 0, 0, b'w']);
        assert_eq!(&b[17..25], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[25..29], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 33);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(WeightSet::<f32>::from_bytes(b"XXXX").is_err());
        let ws = WeightSet::<f32>::init(&ModelConfig::toy(), 1).unwrap();
        let b = ws.to_bytes();
        assert!(WeightSet::<f32>::from_bytes(&b[..b.len() - 1]).is_err());
        let mut ws = WeightSet::<f32>::new();
        ws.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(ws.insert("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = WeightSet::<f32>::init(&ModelConfig::toy(), 3).unwrap();
        let b = WeightSet::<f32>::init(&ModelConfig::toy(), 3).unwrap();
        let c = WeightSet::<f32>::init(&ModelConfig::toy(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
