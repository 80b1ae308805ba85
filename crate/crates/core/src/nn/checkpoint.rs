//! Versioned binary checkpoints holding named networks.
//!
//! Layout (all integers little-endian):
//! `b"RSDLCKPT"`, `u32` version, `u32` metadata count, metadata pairs,
//! `u32` entry count, then per entry: name, spec description, `u64`
//! parameter count, parameters as `f64`, a `u8` optimizer flag and, when
//! set, `u64` step, `f64` learning rate, first and second moments. The file
//! ends with the SHA-256 digest of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::mlp::{Mlp, MlpSpec};

const MAGIC: &[u8; 8] = b"RSDLCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Entry {
    pub name: String,
    pub net: Mlp,
    pub opt: Option<Adam>,
}

#[derive(Clone, Debug, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub entries: Vec<Entry>,
}

/// Hex SHA-256 of a parameter vector's little-endian bytes.
pub fn param_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, name: &str, net: &Mlp, opt: Option<&Adam>) {
        self.entries.push(Entry { name: name.to_string(), net: net.clone(), opt: opt.cloned() });
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("no network named {name}")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format("checkpoint", format!("missing metadata {key}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut b, k);
            put_str(&mut b, v);
        }
        b.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            put_str(&mut b, &e.name);
            put_str(&mut b, &e.net.spec().describe());
            put_f64s(&mut b, e.net.params());
            match &e.opt {
                None => b.push(0),
                Some(o) => {
                    b.push(1);
                    b.extend_from_slice(&o.t.to_le_bytes());
                    b.extend_from_slice(&o.lr.to_le_bytes());
                    put_f64s(&mut b, &o.m);
                    put_f64s(&mut b, &o.v);
                }
            }
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::format("checkpoint", msg);
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..8] != MAGIC {
            return Err(fail("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fail("checksum mismatch"));
        }
        let mut r = Reader { b: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let mut ck = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ck.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let desc = r.string()?;
            let spec = MlpSpec::parse_description(&desc).ok_or_else(|| fail(&format!("bad spec {desc:?}")))?;
            let params = r.f64s()?;
            if params.len() != spec.n_params() {
                return Err(fail(&format!("{name}: {} parameters for {desc}", params.len())));
            }
            let opt = match r.u8()? {
                0 => None,
                1 => {
                    let t = r.u64()?;
                    let lr = r.f64()?;
                    let mut o = Adam::new(params.len(), lr);
                    o.t = t;
                    o.m = r.f64s()?;
                    o.v = r.f64s()?;
                    if o.m.len() != params.len() || o.v.len() != params.len() {
                        return Err(fail("optimizer moment length"));
                    }
                    Some(o)
                }
                _ => return Err(fail("bad optimizer flag")),
            };
            ck.entries.push(Entry { name, net: Mlp::from_params(spec, params), opt });
        }
        if r.pos != body.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(b: &mut Vec<u8>, s: &str) {
    b.extend_from_slice(&(s.len() as u32).to_le_bytes());
    b.extend_from_slice(s.as_bytes());
}

fn put_f64s(b: &mut Vec<u8>, xs: &[f64]) {
    b.extend_from_slice(&(xs.len() as u64).to_le_bytes());
    for x in xs {
        b.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.b.len() {
            return Err(Error::format("checkpoint", "truncated"));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("checkpoint", "invalid utf-8"))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.b.len() - self.pos) / 8 {
            return Err(Error::format("checkpoint", "truncated"));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}
