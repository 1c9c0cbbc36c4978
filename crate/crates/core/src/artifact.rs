//! Binary artifact container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"VGFT"
//! version  u32
//! kind     u32 length + UTF-8
//! hash     u32 length + UTF-8 (hex SHA-256 of the producing config)
//! header   u32 length + UTF-8 JSON
//! count    u32
//! count x  name   u32 length + UTF-8
//!          ndim   u32
//!          shape  ndim x u64
//!          data   prod(shape) x f64
//! ```
//!
//! [`pack`] turns any serializable value into a container: rectangular
//! floating-point arrays become data blocks, everything else stays in the
//! JSON header with a `{"$block": name}` placeholder.

use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::{Error, Result};
use crate::physics::{GeometryParams, MaterialParams};
use crate::reference::{plan_flat_output, ReferenceBundle, ScenarioConfig};

pub const MAGIC: &[u8; 4] = b"VGFT";
pub const VERSION: u32 = 1;
/// Smallest array stored as a data block.
const MIN_BLOCK: usize = 8;
const PLACEHOLDER: &str = "$block";

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub config_hash: String,
    pub header: Value,
    pub blocks: Vec<Block>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Artifact(format!("truncated artifact at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Artifact("invalid UTF-8 in artifact".into()))
    }
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.config_hash);
        put_str(&mut out, &serde_json::to_string(&self.header).expect("header serializes"));
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            put_str(&mut out, &b.name);
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Container> {
        let mut c = Cursor { buf, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(Error::Artifact("not a vgf-track artifact (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(Error::Artifact(format!("unsupported artifact version {version}")));
        }
        let kind = c.string()?;
        let config_hash = c.string()?;
        let header = serde_json::from_str(&c.string()?)?;
        let count = c.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let name = c.string()?;
            let ndim = c.u32()? as usize;
            let shape = (0..ndim).map(|_| c.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let raw = c.take(len.checked_mul(8).ok_or_else(|| Error::Artifact("block too large".into()))?)?;
            let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            blocks.push(Block { name, shape, data });
        }
        if c.pos != buf.len() {
            return Err(Error::Artifact(format!("{} trailing bytes in artifact", buf.len() - c.pos)));
        }
        Ok(Container { kind, config_hash, header, blocks })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Container> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Container> {
        let buf = std::fs::read(path).map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&buf)
    }

    /// Load and check kind and producing config.
    pub fn load_verified(path: &Path, kind: &str, config_hash: &str) -> Result<Container> {
        let c = Self::load(path)?;
        if c.kind != kind {
            return Err(Error::Artifact(format!("{} holds a '{}' artifact, expected '{kind}'", path.display(), c.kind)));
        }
        if c.config_hash != config_hash {
            return Err(Error::Artifact(format!(
                "{} was produced by config {}, current config is {config_hash}",
                path.display(),
                c.config_hash
            )));
        }
        Ok(c)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// Shape of a rectangular array whose leaves are all floats.
fn float_shape(v: &Value) -> Option<Vec<usize>> {
    match v {
        Value::Number(n) if n.is_f64() => Some(Vec::new()),
        Value::Array(items) if !items.is_empty() => {
            let inner = float_shape(&items[0])?;
            for it in &items[1..] {
                if float_shape(it)? != inner {
                    return None;
                }
            }
            let mut shape = vec![items.len()];
            shape.extend(inner);
            Some(shape)
        }
        _ => None,
    }
}

fn flatten_into(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap()),
        Value::Array(items) => items.iter().for_each(|it| flatten_into(it, out)),
        _ => unreachable!("checked by float_shape"),
    }
}

fn split(v: Value, path: &str, blocks: &mut Vec<Block>) -> Value {
    if let Some(shape) = float_shape(&v) {
        let len: usize = shape.iter().product();
        if !shape.is_empty() && len >= MIN_BLOCK {
            let mut data = Vec::with_capacity(len);
            flatten_into(&v, &mut data);
            let mut m = Map::new();
            m.insert(PLACEHOLDER.into(), Value::String(path.into()));
            blocks.push(Block { name: path.into(), shape, data });
            return Value::Object(m);
        }
    }
    match v {
        Value::Array(items) => {
            Value::Array(items.into_iter().enumerate().map(|(i, it)| split(it, &format!("{path}.{i}"), blocks)).collect())
        }
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, it)| {
                let p = format!("{path}.{k}");
                (k, split(it, &p, blocks))
            }).collect())
        }
        other => other,
    }
}

fn build(shape: &[usize], data: &[f64]) -> Result<Value> {
    if shape.is_empty() {
        return Number::from_f64(data[0])
            .map(Value::Number)
            .ok_or_else(|| Error::Artifact("non-finite value in data block".into()));
    }
    let stride: usize = shape[1..].iter().product();
    (0..shape[0]).map(|i| build(&shape[1..], &data[i * stride..(i + 1) * stride])).collect::<Result<Vec<_>>>().map(Value::Array)
}

fn join(v: Value, blocks: &[Block]) -> Result<Value> {
    match v {
        Value::Object(map) => {
            if map.len() == 1 {
                if let Some(Value::String(name)) = map.get(PLACEHOLDER) {
                    let b = blocks
                        .iter()
                        .find(|b| &b.name == name)
                        .ok_or_else(|| Error::Artifact(format!("missing data block '{name}'")))?;
                    if b.shape.iter().product::<usize>() != b.data.len() {
                        return Err(Error::Artifact(format!("block '{name}' shape does not match its data")));
                    }
                    return build(&b.shape, &b.data);
                }
            }
            Ok(Value::Object(map.into_iter().map(|(k, it)| Ok((k, join(it, blocks)?))).collect::<Result<_>>()?))
        }
        Value::Array(items) => Ok(Value::Array(items.into_iter().map(|it| join(it, blocks)).collect::<Result<_>>()?)),
        other => Ok(other),
    }
}

pub fn pack<T: Serialize>(kind: &str, config_hash: &str, value: &T) -> Result<Container> {
    let mut blocks = Vec::new();
    let header = split(serde_json::to_value(value)?, "root", &mut blocks);
    Ok(Container { kind: kind.into(), config_hash: config_hash.into(), header, blocks })
}

pub fn unpack<T: DeserializeOwned>(c: &Container) -> Result<T> {
    let v = join(c.header.clone(), &c.blocks)?;
    serde_json::from_value(v).map_err(|e| Error::Artifact(format!("malformed '{}' artifact: {e}", c.kind)))
}

pub const REFERENCE_KIND: &str = "reference";
pub const CONTROLLER_KIND: &str = "controller";

/// Persistent form of a [`ReferenceBundle`]; the flat output is re-planned
/// from the scenario on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub scenario: ScenarioConfig,
    pub params: MaterialParams,
    pub geometry: GeometryParams,
    pub truncation: usize,
    pub sigma: Vec<f64>,
    pub t0: f64,
    pub dt: f64,
    pub gamma: Vec<f64>,
    pub gamma_dot: Vec<f64>,
    pub gamma_ddot: Vec<f64>,
    pub gradient: Vec<f64>,
    pub inputs: [Vec<f64>; 2],
    pub inputs_dot: [Vec<f64>; 2],
}

impl ReferenceRecord {
    pub fn new(bundle: &ReferenceBundle, scenario: &ScenarioConfig) -> Self {
        let gradient = bundle.times().iter().map(|&t| bundle.flat.gradient(t)).collect();
        ReferenceRecord {
            scenario: scenario.clone(),
            params: bundle.params.clone(),
            geometry: bundle.geometry.clone(),
            truncation: bundle.truncation,
            sigma: bundle.sigma.clone(),
            t0: bundle.t0,
            dt: bundle.dt,
            gamma: bundle.gamma.clone(),
            gamma_dot: bundle.gamma_dot.clone(),
            gamma_ddot: bundle.gamma_ddot.clone(),
            gradient,
            inputs: bundle.inputs.clone(),
            inputs_dot: bundle.inputs_dot.clone(),
        }
    }

    pub fn into_bundle(self) -> Result<ReferenceBundle> {
        let flat = plan_flat_output(&self.scenario, &self.geometry)?;
        Ok(ReferenceBundle {
            flat,
            params: self.params,
            geometry: self.geometry,
            truncation: self.truncation,
            sigma: self.sigma,
            t0: self.t0,
            dt: self.dt,
            gamma: self.gamma,
            gamma_dot: self.gamma_dot,
            gamma_ddot: self.gamma_ddot,
            inputs: self.inputs,
            inputs_dot: self.inputs_dot,
        })
    }
}
