//! `model.bin`: little-endian binary checkpoint. Layout in `docs/checkpoint.md`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::PermutationMap;
use crate::linalg::Matrix;
use crate::nn::{Activation, BatchNorm, Block, DenseLayer, Network};

pub const MAGIC: &[u8; 8] = b"HSICNET1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// One network, or the branches of an ensemble.
    pub networks: Vec<Network>,
    pub head: Option<DenseLayer>,
    pub permutation: Option<PermutationMap>,
}

impl Checkpoint {
    pub fn single(net: Network) -> Self {
        Checkpoint {
            networks: vec![net],
            head: None,
            permutation: None,
        }
    }

    pub fn network(&self) -> &Network {
        &self.networks[0]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        put_u32(&mut w, self.networks.len() as u32);
        for net in &self.networks {
            put_u32(&mut w, net.input_dim() as u32);
            put_u32(&mut w, net.depth() as u32);
            for block in net.blocks() {
                put_u32(&mut w, block.d_out() as u32);
                w.push(block.activation.code());
                w.push(block.bn.is_some() as u8);
                put_f64s(&mut w, block.dense.w.as_slice());
                put_f64s(&mut w, &block.dense.b);
                if let Some(bn) = &block.bn {
                    put_f64s(&mut w, &bn.gamma);
                    put_f64s(&mut w, &bn.beta);
                    put_f64s(&mut w, &bn.running_mean);
                    put_f64s(&mut w, &bn.running_var);
                    put_f64s(&mut w, &[bn.momentum, bn.eps]);
                }
            }
        }
        match &self.head {
            None => w.push(0),
            Some(h) => {
                w.push(1);
                put_u32(&mut w, h.d_in() as u32);
                put_u32(&mut w, h.d_out() as u32);
                put_f64s(&mut w, h.w.as_slice());
                put_f64s(&mut w, &h.b);
            }
        }
        match &self.permutation {
            None => w.push(0),
            Some(p) => {
                w.push(1);
                put_u32(&mut w, p.len() as u32);
                for &o in p.class_to_output() {
                    put_u32(&mut w, o as u32);
                }
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        if count == 0 {
            return Err(Error::Checkpoint("no networks".into()));
        }
        let mut networks = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let mut d_in = r.u32()? as usize;
            let depth = r.u32()? as usize;
            let mut blocks = Vec::with_capacity(depth.min(1024));
            for _ in 0..depth {
                let d_out = r.u32()? as usize;
                let code = r.u8()?;
                let activation = Activation::from_code(code)
                    .ok_or_else(|| Error::Checkpoint(format!("unknown activation code {code}")))?;
                let has_bn = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::Checkpoint(format!("bad batch-norm flag {b}"))),
                };
                let w = r.matrix(d_in, d_out)?;
                let b = r.f64s(d_out)?;
                let bn = if has_bn {
                    let gamma = r.f64s(d_out)?;
                    let beta = r.f64s(d_out)?;
                    let running_mean = r.f64s(d_out)?;
                    let running_var = r.f64s(d_out)?;
                    let me = r.f64s(2)?;
                    Some(BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        momentum: me[0],
                        eps: me[1],
                    })
                } else {
                    None
                };
                blocks.push(Block {
                    dense: DenseLayer { w, b },
                    bn,
                    activation,
                });
                d_in = d_out;
            }
            networks.push(Network::from_blocks(blocks).map_err(|e| Error::Checkpoint(e.to_string()))?);
        }
        let head = match r.u8()? {
            0 => None,
            1 => {
                let d_in = r.u32()? as usize;
                let d_out = r.u32()? as usize;
                let w = r.matrix(d_in, d_out)?;
                let b = r.f64s(d_out)?;
                Some(DenseLayer { w, b })
            }
            b => return Err(Error::Checkpoint(format!("bad head flag {b}"))),
        };
        let permutation = match r.u8()? {
            0 => None,
            1 => {
                let n = r.u32()? as usize;
                let map = (0..n).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
                Some(PermutationMap::new(map).map_err(|e| Error::Checkpoint(e.to_string()))?)
            }
            b => return Err(Error::Checkpoint(format!("bad permutation flag {b}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            networks,
            head,
            permutation,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(e) => {
                let s = &self.bytes[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            ))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
        let data = self.f64s(n)?;
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Architecture;

    fn sample() -> Checkpoint {
        let a = Architecture::parse("5-4-3", Activation::Tanh, true).unwrap();
        let b = Architecture::parse("5-6-3", Activation::Relu, false).unwrap();
        Checkpoint {
            networks: vec![Network::new(&a, 1), Network::new(&b, 2)],
            head: Some(DenseLayer::seeded(3, 3, 4)),
            permutation: Some(PermutationMap::new(vec![2, 0, 1]).unwrap()),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..8], b"HSICNET1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn bare_network_round_trip() {
        let a = Architecture::parse("3-2", Activation::Identity, false).unwrap();
        let c = Checkpoint::single(Network::new(&a, 0));
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&magic).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(Checkpoint::from_bytes(&version).is_err());
    }
}
