// Copyright 2026 The Fasco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Versioned binary artifacts and line-delimited plan and report files.
//!
//! Every binary artifact is a single container:
//!
//! ```text
//! "FASC" | kind (4 bytes) | version u32 | section count u32
//! section table: name len u16 | name | type u8 | offset u64 | length u64
//! section payloads
//! checksum: first 8 bytes of SHA-256 over everything above
//! ```
//!
//! Integers are little-endian. A section is JSON metadata or an `f64`/`i64`
//! array prefixed by its shape (`ndim u32`, then `ndim` × `u64`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::calibration::{LookupList, LookupStore};
use crate::error::{Error, Result};
use crate::estimator::{ModelDims, ModelParams, TrainConfig};
use crate::featurizer::{Catalog, JoinPair, Normalizer, Vocabularies};
use crate::metrics::ReportRow;
use crate::plan_model::{parse_plan, serialize_plan, PlanTree};
use crate::scalar::Scalar;
use crate::table::{Database, Table};
use crate::tinynn::{Activation, Dense, DenseStack, EmbeddingTable};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"FASC";
const CHECKSUM_BYTES: usize = 8;
pub const LOOKUP_EXTENSION: &str = "lkp";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Model,
    Lookup,
    Catalog,
    Tables,
}

impl ArtifactKind {
    fn tag(self) -> &'static [u8; 4] {
        match self {
            ArtifactKind::Model => b"MODL",
            ArtifactKind::Lookup => b"LKUP",
            ArtifactKind::Catalog => b"CATL",
            ArtifactKind::Tables => b"TBLS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Json(Value),
    F64 { shape: Vec<usize>, data: Vec<f64> },
    I64 { shape: Vec<usize>, data: Vec<i64> },
}

fn shape_len(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn encode_array<const N: usize>(shape: &[usize], cells: impl Iterator<Item = [u8; N]>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend((shape.len() as u32).to_le_bytes());
    for d in shape {
        out.extend((*d as u64).to_le_bytes());
    }
    for c in cells {
        out.extend(c);
    }
    out
}

/// Serializes a container.
pub fn encode(kind: ArtifactKind, sections: &[(String, Section)]) -> Result<Vec<u8>> {
    let mut payloads = Vec::with_capacity(sections.len());
    for (name, s) in sections {
        let (ty, bytes) = match s {
            Section::Json(v) => (
                0u8,
                serde_json::to_vec(v).map_err(|e| Error::Format(e.to_string()))?,
            ),
            Section::F64 { shape, data } => {
                if shape_len(shape) != data.len() {
                    return Err(Error::Format(format!(
                        "section {name}: shape {shape:?} for {} values",
                        data.len()
                    )));
                }
                (
                    1u8,
                    encode_array(shape, data.iter().map(|v| v.to_le_bytes())),
                )
            }
            Section::I64 { shape, data } => {
                if shape_len(shape) != data.len() {
                    return Err(Error::Format(format!(
                        "section {name}: shape {shape:?} for {} values",
                        data.len()
                    )));
                }
                (
                    2u8,
                    encode_array(shape, data.iter().map(|v| v.to_le_bytes())),
                )
            }
        };
        payloads.push((name, ty, bytes));
    }

    let table_len: usize = payloads.iter().map(|(n, _, _)| 2 + n.len() + 1 + 16).sum();
    let mut offset = (16 + table_len) as u64;
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.extend(kind.tag());
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend((payloads.len() as u32).to_le_bytes());
    for (name, ty, bytes) in &payloads {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::Format(format!("section name too long: {name}")))?;
        out.extend(name_len.to_le_bytes());
        out.extend(name.as_bytes());
        out.push(*ty);
        out.extend(offset.to_le_bytes());
        out.extend((bytes.len() as u64).to_le_bytes());
        offset += bytes.len() as u64;
    }
    for (_, _, bytes) in &payloads {
        out.extend(bytes);
    }
    let digest = Sha256::digest(&out);
    out.extend(&digest[..CHECKSUM_BYTES]);
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

fn decode_array<T, const N: usize>(
    bytes: &[u8],
    from: impl Fn([u8; N]) -> T,
) -> Result<(Vec<usize>, Vec<T>)> {
    let mut c = Cursor { bytes, at: 0 };
    let ndim = c.u32()? as usize;
    if ndim > 8 {
        return Err(Error::Format(format!("array with {ndim} dimensions")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(
            usize::try_from(c.u64()?).map_err(|_| Error::Format("dimension overflow".into()))?,
        );
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .ok_or_else(|| Error::Format("shape overflow".into()))?;
    let rest = &bytes[c.at..];
    if rest.len() != n * N {
        return Err(Error::Format(format!(
            "shape {shape:?} needs {} bytes, section holds {}",
            n * N,
            rest.len()
        )));
    }
    let data = rest
        .chunks_exact(N)
        .map(|ch| from(ch.try_into().expect("exact chunk")))
        .collect();
    Ok((shape, data))
}

/// Parses and verifies a container of the expected kind.
pub fn decode(bytes: &[u8], kind: ArtifactKind) -> Result<Vec<(String, Section)>> {
    if bytes.is_empty() {
        return Err(Error::Format("empty file".into()));
    }
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4)
        .map_err(|_| Error::Format("bad magic bytes".into()))?
        != MAGIC
    {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let tag = c.take(4)?;
    if tag != kind.tag() {
        return Err(Error::Format(format!(
            "expected a {} artifact, found {}",
            String::from_utf8_lossy(kind.tag()),
            String::from_utf8_lossy(tag)
        )));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 16 + CHECKSUM_BYTES {
        return Err(Error::Format("truncated file".into()));
    }
    let body_end = bytes.len() - CHECKSUM_BYTES;
    let digest = Sha256::digest(&bytes[..body_end]);
    if digest[..CHECKSUM_BYTES] != bytes[body_end..] {
        return Err(Error::Checksum);
    }
    let body = &bytes[..body_end];
    let mut c = Cursor {
        bytes: body,
        at: 12,
    };
    let count = c.u32()? as usize;
    let mut sections = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u16()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("section name is not UTF-8".into()))?;
        let ty = c.take(1)?[0];
        let offset =
            usize::try_from(c.u64()?).map_err(|_| Error::Format("offset overflow".into()))?;
        let len = usize::try_from(c.u64()?).map_err(|_| Error::Format("length overflow".into()))?;
        let payload = offset
            .checked_add(len)
            .and_then(|end| body.get(offset..end))
            .ok_or_else(|| Error::Format(format!("section {name} lies outside the file")))?;
        let section = match ty {
            0 => Section::Json(
                serde_json::from_slice(payload)
                    .map_err(|e| Error::Format(format!("section {name}: {e}")))?,
            ),
            1 => {
                let (shape, data) = decode_array(payload, f64::from_le_bytes)?;
                Section::F64 { shape, data }
            }
            2 => {
                let (shape, data) = decode_array(payload, i64::from_le_bytes)?;
                Section::I64 { shape, data }
            }
            other => {
                return Err(Error::Format(format!(
                    "section {name} has unknown type {other}"
                )))
            }
        };
        sections.push((name, section));
    }
    Ok(sections)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Sections(Vec<(String, Section)>);

impl Sections {
    fn get(&self, name: &str) -> Result<&Section> {
        self.0
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::Format(format!("missing section {name}")))
    }

    fn json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        match self.get(name)? {
            Section::Json(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Format(format!("section {name}: {e}"))),
            _ => Err(Error::Format(format!("section {name} is not JSON"))),
        }
    }

    fn f64s(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        match self.get(name)? {
            Section::F64 { shape: s, data } if s == shape => Ok(data),
            Section::F64 { shape: s, .. } => Err(Error::Format(format!(
                "section {name}: shape {s:?}, expected {shape:?}"
            ))),
            _ => Err(Error::Format(format!("section {name} is not an f64 array"))),
        }
    }

    fn i64s(&self, name: &str) -> Result<(&[usize], &[i64])> {
        match self.get(name)? {
            Section::I64 { shape, data } => Ok((shape, data)),
            _ => Err(Error::Format(format!("section {name} is not an i64 array"))),
        }
    }
}

fn json_section<T: Serialize>(name: &str, value: &T) -> Result<(String, Section)> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    Ok((name.to_string(), Section::Json(v)))
}

// ---------------------------------------------------------------------------
// Models

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    scalar: String,
    dims: ModelDims,
    vocabs: Vocabularies,
    normalizer: Normalizer,
    config: TrainConfig,
    backbone: Vec<LayerMeta>,
    state_head: Vec<LayerMeta>,
    cost_head: Vec<LayerMeta>,
}

#[derive(Serialize, Deserialize)]
struct LayerMeta {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

fn widen<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn stack_sections<T: Scalar>(
    name: &str,
    stack: &DenseStack<T>,
    out: &mut Vec<(String, Section)>,
) -> Vec<LayerMeta> {
    stack
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            out.push((
                format!("{name}.{i}.weight"),
                Section::F64 {
                    shape: vec![l.out_dim, l.in_dim],
                    data: widen(&l.weight),
                },
            ));
            out.push((
                format!("{name}.{i}.bias"),
                Section::F64 {
                    shape: vec![l.out_dim],
                    data: widen(&l.bias),
                },
            ));
            LayerMeta {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                activation: l.activation,
            }
        })
        .collect()
}

fn narrow<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::of(*x)).collect()
}

fn load_stack<T: Scalar>(
    name: &str,
    meta: &[LayerMeta],
    sections: &Sections,
) -> Result<DenseStack<T>> {
    let layers = meta
        .iter()
        .enumerate()
        .map(|(i, m)| {
            Ok(Dense {
                in_dim: m.in_dim,
                out_dim: m.out_dim,
                weight: narrow(
                    sections.f64s(&format!("{name}.{i}.weight"), &[m.out_dim, m.in_dim])?,
                ),
                bias: narrow(sections.f64s(&format!("{name}.{i}.bias"), &[m.out_dim])?),
                activation: m.activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DenseStack::from_layers(layers)
}

pub fn model_to_bytes<T: Scalar>(params: &ModelParams<T>) -> Result<Vec<u8>> {
    params.check()?;
    let mut sections = Vec::new();
    for (name, e) in [
        ("op_embedding", &params.op_embedding),
        ("joinkey_embedding", &params.joinkey_embedding),
    ] {
        sections.push((
            name.to_string(),
            Section::F64 {
                shape: vec![e.vocab_size, e.dim],
                data: widen(&e.table),
            },
        ));
    }
    let meta = ModelMeta {
        scalar: T::NAME.to_string(),
        dims: params.dims,
        vocabs: params.vocabs.clone(),
        normalizer: params.normalizer,
        config: params.config.clone(),
        backbone: stack_sections("backbone", &params.backbone, &mut sections),
        state_head: stack_sections("state_head", &params.state_head, &mut sections),
        cost_head: stack_sections("cost_head", &params.cost_head, &mut sections),
    };
    sections.insert(0, json_section("meta", &meta)?);
    encode(ArtifactKind::Model, &sections)
}

pub fn model_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>> {
    let sections = Sections(decode(bytes, ArtifactKind::Model)?);
    let meta: ModelMeta = sections.json("meta")?;
    let embedding = |name: &str, vocab_size: usize| -> Result<EmbeddingTable<T>> {
        Ok(EmbeddingTable {
            vocab_size,
            dim: meta.dims.embed_dim,
            table: narrow(sections.f64s(name, &[vocab_size, meta.dims.embed_dim])?),
        })
    };
    let params = ModelParams {
        op_embedding: embedding("op_embedding", meta.vocabs.operators.len())?,
        joinkey_embedding: embedding("joinkey_embedding", meta.vocabs.join_keys.len())?,
        backbone: load_stack("backbone", &meta.backbone, &sections)?,
        state_head: load_stack("state_head", &meta.state_head, &sections)?,
        cost_head: load_stack("cost_head", &meta.cost_head, &sections)?,
        dims: meta.dims,
        vocabs: meta.vocabs,
        normalizer: meta.normalizer,
        config: meta.config,
    };
    params.check()?;
    Ok(params)
}

pub fn save_model<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &model_to_bytes(params)?)
}

pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    model_from_bytes(&fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Lookup lists

#[derive(Serialize, Deserialize)]
struct LookupMeta {
    pair: JoinPair,
    columns: Vec<String>,
    inv_sample_rate: f64,
    join_size: u64,
    built_at: u64,
}

pub fn lookup_to_bytes(list: &LookupList) -> Result<Vec<u8>> {
    let meta = LookupMeta {
        pair: list.pair.clone(),
        columns: list.columns.clone(),
        inv_sample_rate: list.inv_sample_rate,
        join_size: list.join_size,
        built_at: list.built_at,
    };
    encode(
        ArtifactKind::Lookup,
        &[
            json_section("meta", &meta)?,
            (
                "rows".into(),
                Section::I64 {
                    shape: vec![list.len(), list.columns.len()],
                    data: list.rows.clone(),
                },
            ),
        ],
    )
}

pub fn lookup_from_bytes(bytes: &[u8]) -> Result<LookupList> {
    let sections = Sections(decode(bytes, ArtifactKind::Lookup)?);
    let meta: LookupMeta = sections.json("meta")?;
    let (shape, rows) = sections.i64s("rows")?;
    if shape.len() != 2 || shape[1] != meta.columns.len() {
        return Err(Error::Format(format!(
            "lookup rows have shape {shape:?} for {} columns",
            meta.columns.len()
        )));
    }
    if !(meta.inv_sample_rate >= 1.0 && meta.inv_sample_rate.is_finite()) {
        return Err(Error::Format(format!(
            "inverse sample rate {} below 1",
            meta.inv_sample_rate
        )));
    }
    Ok(LookupList {
        pair: meta.pair,
        columns: meta.columns,
        rows: rows.to_vec(),
        inv_sample_rate: meta.inv_sample_rate,
        join_size: meta.join_size,
        built_at: meta.built_at,
    })
}

fn lookup_file_name(pair: &JoinPair) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                    c
                } else {
                    '-'
                }
            })
            .collect::<String>()
    };
    format!(
        "{}__{}.{LOOKUP_EXTENSION}",
        clean(&pair.left_key),
        clean(&pair.right_key)
    )
}

/// Saves a store as a directory holding one file per join pair. Stale list
/// files in the directory are removed.
pub fn save_lookup_store(store: &LookupStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for list in store.lists() {
        let path = dir.join(lookup_file_name(&list.pair));
        write_atomic(&path, &lookup_to_bytes(list)?)?;
        written.push(path);
    }
    for path in lookup_files(dir)? {
        if !written.contains(&path) {
            fs::remove_file(path)?;
        }
    }
    Ok(())
}

fn lookup_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == LOOKUP_EXTENSION) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_lookup_store(dir: impl AsRef<Path>) -> Result<LookupStore> {
    let mut store = LookupStore::new();
    for path in lookup_files(dir.as_ref())? {
        store.insert(lookup_from_bytes(&fs::read(&path)?)?);
    }
    Ok(store)
}

// ---------------------------------------------------------------------------
// Catalogs and tables

pub fn save_catalog(catalog: &Catalog, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(ArtifactKind::Catalog, &[json_section("catalog", catalog)?])?;
    write_atomic(path.as_ref(), &bytes)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let sections = Sections(decode(&fs::read(path)?, ArtifactKind::Catalog)?);
    let catalog: Catalog = sections.json("catalog")?;
    catalog.check()?;
    Ok(catalog)
}

#[derive(Serialize, Deserialize)]
struct TableMeta {
    name: String,
    columns: Vec<String>,
}

pub fn save_tables(db: &Database, path: impl AsRef<Path>) -> Result<()> {
    let meta: Vec<TableMeta> = db
        .tables
        .values()
        .map(|t| TableMeta {
            name: t.name.clone(),
            columns: t.columns.clone(),
        })
        .collect();
    let mut sections = vec![json_section("tables", &meta)?];
    for t in db.tables.values() {
        sections.push((
            format!("table.{}", t.name),
            Section::I64 {
                shape: vec![t.columns.len(), t.rows()],
                data: t.data.concat(),
            },
        ));
    }
    write_atomic(path.as_ref(), &encode(ArtifactKind::Tables, &sections)?)
}

pub fn load_tables(path: impl AsRef<Path>) -> Result<Database> {
    let sections = Sections(decode(&fs::read(path)?, ArtifactKind::Tables)?);
    let meta: Vec<TableMeta> = sections.json("tables")?;
    let mut db = Database::default();
    for m in meta {
        let (shape, data) = sections.i64s(&format!("table.{}", m.name))?;
        if shape.len() != 2 || shape[0] != m.columns.len() {
            return Err(Error::Format(format!(
                "table {} has shape {shape:?}",
                m.name
            )));
        }
        let columns = if shape[1] == 0 {
            vec![Vec::new(); shape[0]]
        } else {
            data.chunks_exact(shape[1]).map(<[i64]>::to_vec).collect()
        };
        db.insert(Table::new(m.name, m.columns, columns)?);
    }
    Ok(db)
}

// ---------------------------------------------------------------------------
// Line-delimited files

/// One canonical plan document per line.
pub fn write_plans(plans: &[PlanTree], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for p in plans {
        out.push_str(&serialize_plan(p));
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn read_plans(path: impl AsRef<Path>) -> Result<Vec<PlanTree>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_plan(l).map_err(|e| match e {
                Error::Parse { path, message } => Error::Parse {
                    path: format!("line {}: {path}", i + 1),
                    message,
                },
                other => other,
            })
        })
        .collect()
}

pub fn write_report(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Format(e.to_string()))?;
        out.push(b'\n');
    }
    write_atomic(path.as_ref(), &out)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Format(e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let sections = vec![
            (
                "meta".to_string(),
                Section::Json(serde_json::json!({"a": 1})),
            ),
            (
                "x".to_string(),
                Section::F64 {
                    shape: vec![2, 2],
                    data: vec![1.5, -0.0, f64::MIN_POSITIVE, 3.0],
                },
            ),
            (
                "y".to_string(),
                Section::I64 {
                    shape: vec![0, 3],
                    data: vec![],
                },
            ),
        ];
        let bytes = encode(ArtifactKind::Catalog, &sections).unwrap();
        assert_eq!(decode(&bytes, ArtifactKind::Catalog).unwrap(), sections);
    }

    #[test]
    fn corrupt_inputs_are_errors() {
        let bytes = encode(ArtifactKind::Model, &[]).unwrap();
        assert!(matches!(
            decode(&[], ArtifactKind::Model),
            Err(Error::Format(_))
        ));
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode(&bad_magic, ArtifactKind::Model),
            Err(Error::Format(_))
        ));
        let mut next = bytes.clone();
        next[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode(&next, ArtifactKind::Model),
            Err(Error::UnsupportedVersion {
                found: 2,
                supported: 1
            })
        ));
        let mut flipped = bytes.clone();
        flipped[13] ^= 1;
        assert!(matches!(
            decode(&flipped, ArtifactKind::Model),
            Err(Error::Checksum)
        ));
        assert!(decode(&bytes[..bytes.len() - 3], ArtifactKind::Model).is_err());
        assert!(matches!(
            decode(&bytes, ArtifactKind::Lookup),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected_on_encode() {
        let s = vec![(
            "x".to_string(),
            Section::F64 {
                shape: vec![3],
                data: vec![1.0],
            },
        )];
        assert!(encode(ArtifactKind::Model, &s).is_err());
    }
}
