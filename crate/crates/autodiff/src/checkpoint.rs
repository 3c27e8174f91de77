//! Binary checkpoint container.
//!
//! Layout (little endian):
//!
//! ```text
//! "SLATECKP" u32:version
//! u32:meta_count  { str:key str:value }*
//! u32:param_count { u64:id str:name shape f64* }*
//! u8:has_optimizer [ f64:lr f64:beta1 f64:beta2 f64:eps u64:step
//!                    u32:count { shape f64* }*  (first moments)
//!                    u32:count { shape f64* }*  (second moments) ]
//! str   = u32:len utf8
//! shape = u32:ndim u64*
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::param::{ParamId, ParamStore, Parameter};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SLATECKP";
const VERSION: u32 = 1;
const MAX_RANK: u32 = 8;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
}

impl Checkpoint {
    pub fn new(params: ParamStore) -> Self {
        Self {
            meta: BTreeMap::new(),
            params,
            optimizer: None,
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key:?}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta_str(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("metadata {key:?} has invalid value {raw:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(self.meta.len() as u32);
        for (k, v) in &self.meta {
            w.str(k);
            w.str(v);
        }
        w.u32(self.params.len() as u32);
        for p in self.params.iter() {
            w.u64(p.id.0);
            w.str(&p.name);
            w.tensor(&p.value);
        }
        match &self.optimizer {
            None => w.0.push(0),
            Some(adam) => {
                w.0.push(1);
                for x in [adam.lr, adam.beta1, adam.beta2, adam.eps] {
                    w.f64(x);
                }
                w.u64(adam.steps());
                let (first, second) = adam.moments();
                for moments in [first, second] {
                    w.u32(moments.len() as u32);
                    for t in moments {
                        w.tensor(t);
                    }
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.str()?;
            let v = r.str()?;
            if meta.insert(k.clone(), v).is_some() {
                return Err(Error::Checkpoint(format!("duplicate metadata key {k:?}")));
            }
        }
        let mut params = ParamStore::new();
        for index in 0..r.u32()? {
            let id = r.u64()?;
            if id != u64::from(index) {
                return Err(Error::Checkpoint(format!("parameter {index} has non-sequential id {id}")));
            }
            let name = r.str()?;
            let value = r.tensor()?;
            let grad = Tensor::zeros(value.shape());
            params.push_raw(Parameter { id: ParamId(id), name, value, grad });
        }
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let step = r.u64()?;
                let mut halves = [Vec::new(), Vec::new()];
                for half in &mut halves {
                    let count = r.u32()?;
                    if count as usize > params.len() {
                        return Err(Error::Checkpoint("more optimizer moments than parameters".into()));
                    }
                    for i in 0..count as usize {
                        let t = r.tensor()?;
                        if t.shape() != params.iter().nth(i).map(|p| p.value.shape()).unwrap_or_default() {
                            return Err(Error::Checkpoint(format!("optimizer moment {i} shape mismatch")));
                        }
                        half.push(t);
                    }
                }
                let [first, second] = halves;
                if first.len() != second.len() {
                    return Err(Error::Checkpoint("optimizer moment counts differ".into()));
                }
                Some(Adam::from_parts(lr, beta1, beta2, eps, step, first, second))
            }
            flag => return Err(Error::Checkpoint(format!("invalid optimizer flag {flag}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { meta, params, optimizer })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &x in t.data() {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Checkpoint("invalid utf-8 string".into()))
    }
    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if rank > MAX_RANK {
            return Err(Error::Checkpoint(format!("tensor rank {rank} exceeds {MAX_RANK}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
            shape.push(d);
        }
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::Checkpoint("tensor size overflow".into()))?;
        let raw = self.take(bytes)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Tensor::new(shape, data)
    }
}
