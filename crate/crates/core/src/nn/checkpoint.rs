//! Binary model checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"FPRUNE01"
//! u64 LE               metadata length in bytes
//! UTF-8 metadata       one `key=value` per line, '\n' terminated, keys in this order:
//!                        layer_sizes=<comma separated>
//!                        activation=tanh|relu
//!                        seed=<u64>
//!                        mask=0|1
//! f64 LE x N           parameters in flattening order
//! u8 x N               (only if mask=1) 1 = pruned, 0 = kept
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, DifferentiableModel, Mlp};
use crate::error::{Error, Result};
use crate::pruner::PruningMask;

pub const MAGIC: &[u8; 8] = b"FPRUNE01";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub mask: Option<PruningMask>,
}

impl Checkpoint {
    pub fn new(model: Mlp, mask: Option<PruningMask>) -> Self {
        Self { model, mask }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes: Vec<String> = self.model.layer_sizes().iter().map(|s| s.to_string()).collect();
        let meta = format!(
            "layer_sizes={}\nactivation={}\nseed={}\nmask={}\n",
            sizes.join(","),
            self.model.activation(),
            self.model.seed(),
            u8::from(self.mask.is_some())
        );
        let n = self.model.num_params();
        let mut out = Vec::with_capacity(16 + meta.len() + 9 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for p in self.model.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
        if let Some(mask) = &self.mask {
            out.extend(mask.bits().iter().map(|&b| u8::from(b)));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut cursor, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a model checkpoint".into()));
        }
        let mut len = [0u8; 8];
        read_exact(&mut cursor, &mut len, "metadata length")?;
        let len = u64::from_le_bytes(len) as usize;
        if len > cursor.len() {
            return Err(Error::Checkpoint("metadata length exceeds file size".into()));
        }
        let (meta, rest) = cursor.split_at(len);
        let meta = std::str::from_utf8(meta)
            .map_err(|_| Error::Checkpoint("metadata is not UTF-8".into()))?;
        let meta = Metadata::parse(meta)?;

        let mut model = Mlp::zeros(&meta.layer_sizes, meta.activation)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n = model.num_params();
        let expected = 8 * n + if meta.has_mask { n } else { 0 };
        if rest.len() != expected {
            return Err(Error::Checkpoint(format!(
                "payload is {} bytes, expected {expected}",
                rest.len()
            )));
        }
        let params: Vec<f64> = rest[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model = Mlp::from_flat(&meta.layer_sizes, meta.activation, params, meta.seed)?;
        let mask = if meta.has_mask {
            let bits = rest[8 * n..]
                .iter()
                .map(|&b| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Checkpoint(format!("invalid mask byte {other}"))),
                })
                .collect::<Result<Vec<bool>>>()?;
            Some(PruningMask::from_bits(bits))
        } else {
            None
        };
        Ok(Self { model, mask })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn read_exact(cursor: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    cursor
        .read_exact(buf)
        .map_err(|_| Error::Checkpoint(format!("truncated before {what}")))
}

struct Metadata {
    layer_sizes: Vec<usize>,
    activation: Activation,
    seed: u64,
    has_mask: bool,
}

impl Metadata {
    fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut layer_sizes = None;
        let mut activation = None;
        let mut seed = None;
        let mut has_mask = None;
        for line in text.lines() {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed metadata line `{line}`")))?;
            match key {
                "layer_sizes" => {
                    let sizes = value
                        .split(',')
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("bad layer_sizes `{value}`")))?;
                    layer_sizes = Some(sizes);
                }
                "activation" => {
                    activation = Some(value.parse::<Activation>().map_err(|e| bad(e.to_string()))?)
                }
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad(format!("bad seed `{value}`")))?),
                "mask" => {
                    has_mask = Some(match value {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad(format!("bad mask flag `{value}`"))),
                    })
                }
                other => return Err(bad(format!("unknown metadata key `{other}`"))),
            }
        }
        Ok(Self {
            layer_sizes: layer_sizes.ok_or_else(|| bad("missing layer_sizes".into()))?,
            activation: activation.ok_or_else(|| bad("missing activation".into()))?,
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            has_mask: has_mask.ok_or_else(|| bad("missing mask flag".into()))?,
        })
    }
}
