//! Persistence for vectors, labels, judgments and every lab artifact.
//!
//! Bulk artifacts (baselines, LID profiles, indexes) share one container:
//!
//! ```text
//! magic[8] | version: u32 LE | body | sha256(magic ‖ version ‖ body)[32]
//! ```
//!
//! Loading verifies magic, version and checksum before parsing the body, so
//! a damaged file is rejected whole. Every write goes to a temporary file in
//! the destination directory and is renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::dimest::LidProfile;
use crate::error::{Error, Result};
use crate::hnsw::{HnswIndex, HnswParams, NeighborSelect};
use crate::knn::{Baseline, SearchResult};
use crate::metrics::Qrels;
use crate::orders::OrderPlan;
use crate::vecmath::Metric;

pub const BASELINE_MAGIC: &[u8; 8] = b"HLBASE\0\0";
pub const LID_MAGIC: &[u8; 8] = b"HLLIDP\0\0";
pub const INDEX_MAGIC: &[u8; 8] = b"HLHNSW\0\0";
pub const BASELINE_VERSION: u32 = 1;
pub const LID_VERSION: u32 = 1;
pub const INDEX_VERSION: u32 = 1;
pub const ORDER_VERSION: u32 = 1;
pub const JSON_ARTIFACT_VERSION: u32 = 1;

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- fvecs

/// Reads little-endian `[dim: i32][dim × f32]` records; ids are record
/// positions. Values are widened to f64.
pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    parse_fvecs(&bytes, path)
}

pub fn parse_fvecs(bytes: &[u8], path: &Path) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::format(path, 0, "empty file: datasets must be non-empty"));
    }
    let mut offset = 0usize;
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    let mut record = 0usize;
    while offset < bytes.len() {
        let Some(head) = bytes.get(offset..offset + 4) else {
            return Err(Error::format(
                path,
                offset as u64,
                format!("record {record}: truncated dimension header"),
            ));
        };
        let d = i32::from_le_bytes(head.try_into().expect("4 bytes"));
        if d <= 0 {
            return Err(Error::format(
                path,
                offset as u64,
                format!("record {record}: invalid dimension {d}"),
            ));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(
                    path,
                    offset as u64,
                    format!("record {record}: dimension {d} differs from {expected}"),
                ))
            }
            _ => {}
        }
        let start = offset + 4;
        let end = start + 4 * d;
        let Some(payload) = bytes.get(start..end) else {
            return Err(Error::format(
                path,
                start as u64,
                format!("record {record}: truncated payload ({} of {} bytes)", bytes.len() - start, 4 * d),
            ));
        };
        for (i, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(Error::format(
                    path,
                    (start + 4 * i) as u64,
                    format!("record {record}: non-finite component {i}"),
                ));
            }
            data.push(f64::from(v));
        }
        offset = end;
        record += 1;
    }
    Dataset::new(dim.expect("at least one record"), data)
}

/// Encodes the dataset as fvecs, narrowing to f32.
pub fn encode_fvecs(x: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * (4 + 4 * x.dim()));
    for row in x.rows() {
        out.extend_from_slice(&(x.dim() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_fvecs(x: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    write_atomic(path.as_ref(), &encode_fvecs(x))
}

// ----------------------------------------------------------- categories

#[derive(Deserialize)]
struct CategoryLine {
    id: u64,
    category: String,
}

/// Reads newline-delimited `{"id": …, "category": …}` objects.
pub fn read_categories(path: impl AsRef<Path>) -> Result<BTreeMap<usize, String>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut offset = 0u64;
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let here = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CategoryLine = serde_json::from_str(&line).map_err(|e| {
            Error::format(path, here, format!("line {}: {e}", lineno + 1))
        })?;
        if out.insert(rec.id as usize, rec.category).is_some() {
            return Err(Error::format(
                path,
                here,
                format!("line {}: duplicate id {}", lineno + 1, rec.id),
            ));
        }
    }
    Ok(out)
}

/// Joins labels onto a dataset of `n` rows; every id `0..n` must be
/// labelled and no other id may appear.
pub fn join_categories(labels: &BTreeMap<usize, String>, n: usize) -> Result<Vec<String>> {
    if let Some((&extra, _)) = labels.range(n..).next() {
        return Err(Error::Category(format!(
            "label for unknown id {extra} (dataset has {n} rows)"
        )));
    }
    (0..n)
        .map(|id| {
            labels
                .get(&id)
                .cloned()
                .ok_or_else(|| Error::Category(format!("id {id} has no category")))
        })
        .collect()
}

pub fn write_categories(categories: &[String], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (id, c) in categories.iter().enumerate() {
        out.push_str(&serde_json::to_string(&serde_json::json!({ "id": id, "category": c }))?);
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

// ---------------------------------------------------------------- qrels

/// Reads `query_id <TAB> doc_id <TAB> grade` lines.
pub fn read_qrels(path: impl AsRef<Path>) -> Result<Qrels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text, path)
}

pub fn parse_qrels(text: &str, path: &Path) -> Result<Qrels> {
    let mut q = Qrels::default();
    let mut offset = 0u64;
    for (lineno, line) in text.split('\n').enumerate() {
        let here = offset;
        offset += line.len() as u64 + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                here,
                format!("line {}: expected 3 tab-separated fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let grade: i64 = fields[2].trim().parse().map_err(|_| {
            Error::format(path, here, format!("line {}: grade '{}' is not an integer", lineno + 1, fields[2]))
        })?;
        if grade < 0 || grade > i64::from(u32::MAX) {
            return Err(Error::format(path, here, format!("line {}: grade {grade} out of range", lineno + 1)));
        }
        q.insert(fields[0].trim(), fields[1].trim(), grade as u32)
            .map_err(|e| Error::format(path, here, format!("line {}: {e}", lineno + 1)))?;
    }
    Ok(q)
}

// ------------------------------------------------------- binary container

fn seal(magic: &[u8; 8], version: u32, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + body.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Verifies the container and returns the body.
fn unseal<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32, path: &Path) -> Result<&'a [u8]> {
    if bytes.len() < 12 + 32 {
        return Err(Error::format(path, 0, "file too short for an artifact header"));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(path, 0, "wrong magic"));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: version,
        });
    }
    let split = bytes.len() - 32;
    if Sha256::digest(&bytes[..split]).as_slice() != &bytes[split..] {
        return Err(Error::format(path, split as u64, "checksum mismatch"));
    }
    Ok(&bytes[12..split])
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn hash(&mut self, h: &str) {
        let raw = hex::decode(h).unwrap_or_default();
        let mut buf = [0u8; 32];
        let n = raw.len().min(32);
        buf[..n].copy_from_slice(&raw[..n]);
        self.0.extend_from_slice(&buf);
    }
}

/// Body reader that reports file offsets on failure.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        // body starts after magic + version
        Reader { bytes, pos: 0, base: 12, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.err("truncated body")),
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::format(self.path, (self.base + self.pos) as u64, message)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().expect("16")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
    fn len(&mut self, what: &str) -> Result<usize> {
        let v = self.u64()?;
        // a count can never exceed the bytes left to hold it
        if v > self.bytes.len() as u64 {
            return Err(self.err(&format!("implausible {what} count {v}")));
        }
        Ok(v as usize)
    }
    fn hash(&mut self) -> Result<String> {
        Ok(hex::encode(self.take(32)?))
    }
    fn metric(&mut self) -> Result<Metric> {
        let t = self.u8()?;
        Metric::from_tag(t).ok_or_else(|| self.err(&format!("unknown metric tag {t}")))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err("trailing bytes after body"));
        }
        Ok(())
    }
}

// ------------------------------------------------------------- baselines

pub fn encode_baseline(b: &Baseline) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(b.results.len() as u64);
    w.u32(b.k as u32);
    w.u8(b.metric.tag());
    w.hash(&b.dataset_hash);
    w.hash(&b.query_hash);
    for r in &b.results {
        w.u32(r.ids.len() as u32);
        for &id in &r.ids {
            w.u64(id as u64);
        }
        for &d in &r.distances {
            w.f64(d);
        }
    }
    seal(BASELINE_MAGIC, BASELINE_VERSION, &w.0)
}

pub fn save_baseline(b: &Baseline, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_baseline(b))
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<Baseline> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let body = unseal(&bytes, BASELINE_MAGIC, BASELINE_VERSION, path)?;
    let mut r = Reader::new(body, path);
    let nq = r.len("query")?;
    let k = r.u32()? as usize;
    let metric = r.metric()?;
    let dataset_hash = r.hash()?;
    let query_hash = r.hash()?;
    let mut results = Vec::with_capacity(nq);
    for _ in 0..nq {
        let len = r.u32()? as usize;
        if len > k {
            return Err(r.err("result longer than k"));
        }
        let ids = (0..len).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let distances = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        results.push(SearchResult { ids, distances });
    }
    r.finish()?;
    Ok(Baseline {
        k,
        metric,
        dataset_hash,
        query_hash,
        results,
    })
}

// ----------------------------------------------------------- LID profile

pub fn encode_lid_profile(p: &LidProfile) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.u64(p.lid.len() as u64);
    w.u32(p.k_neighbours as u32);
    w.u8(p.metric.tag());
    w.hash(&p.dataset_hash);
    for (id, v) in p.lid.iter().enumerate() {
        w.u64(id as u64);
        w.f64(*v);
    }
    for &id in &p.neighbour_ids {
        w.u32(id as u32);
    }
    for &d in &p.neighbour_distances {
        w.f64(d);
    }
    seal(LID_MAGIC, LID_VERSION, &w.0)
}

/// Binary id → LID table plus neighbour rows, and a JSON summary next to
/// it (`<path>.summary.json`).
pub fn save_lid_profile(p: &LidProfile, path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    write_atomic(path, &encode_lid_profile(p))?;
    let summary_path = sidecar(path, "summary.json");
    save_json(&p.summary(), &summary_path)?;
    Ok(summary_path)
}

pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn load_lid_profile(path: impl AsRef<Path>) -> Result<LidProfile> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let body = unseal(&bytes, LID_MAGIC, LID_VERSION, path)?;
    let mut r = Reader::new(body, path);
    let n = r.len("point")?;
    let k = r.u32()? as usize;
    let metric = r.metric()?;
    let dataset_hash = r.hash()?;
    let mut lid = Vec::with_capacity(n);
    for expected in 0..n {
        let id = r.u64()?;
        if id != expected as u64 {
            return Err(r.err("LID table ids out of order"));
        }
        lid.push(r.f64()?);
    }
    let total = n
        .checked_mul(k)
        .filter(|&t| t <= body.len())
        .ok_or_else(|| r.err("implausible neighbour table size"))?;
    let neighbour_ids = (0..total).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let neighbour_distances = (0..total).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(LidProfile {
        k_neighbours: k,
        metric,
        dataset_hash,
        lid,
        neighbour_ids,
        neighbour_distances,
    })
}

// ------------------------------------------------------------ order plans

#[derive(Serialize, Deserialize)]
struct OrderHeader {
    format: String,
    version: u32,
    strategy: crate::orders::Strategy,
    seed: u64,
    detail: crate::orders::OrderDetail,
    count: usize,
}

/// JSON header line followed by one id per line.
pub fn encode_order_plan(plan: &OrderPlan) -> Result<String> {
    let header = OrderHeader {
        format: "hnswlab.order".into(),
        version: ORDER_VERSION,
        strategy: plan.strategy,
        seed: plan.seed,
        detail: plan.detail.clone(),
        count: plan.ids.len(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for id in &plan.ids {
        out.push_str(&id.to_string());
        out.push('\n');
    }
    Ok(out)
}

pub fn save_order_plan(plan: &OrderPlan, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), encode_order_plan(plan)?.as_bytes())
}

pub fn load_order_plan(path: impl AsRef<Path>) -> Result<OrderPlan> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split('\n');
    let first = lines.next().unwrap_or("");
    let header: OrderHeader = serde_json::from_str(first)
        .map_err(|e| Error::format(path, 0, format!("order header: {e}")))?;
    if header.format != "hnswlab.order" {
        return Err(Error::format(path, 0, "not an order plan"));
    }
    if header.version != ORDER_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: header.version,
            expected: ORDER_VERSION,
        });
    }
    let mut offset = first.len() as u64 + 1;
    let mut ids = Vec::with_capacity(header.count);
    for line in lines {
        let here = offset;
        offset += line.len() as u64 + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        ids.push(t.parse::<usize>().map_err(|_| Error::format(path, here, format!("bad id '{t}'")))?);
    }
    if ids.len() != header.count {
        return Err(Error::format(
            path,
            offset,
            format!("header announces {} ids, found {}", header.count, ids.len()),
        ));
    }
    let plan = OrderPlan {
        ids,
        strategy: header.strategy,
        seed: header.seed,
        detail: header.detail,
    };
    plan.verify_for(plan.ids.len())?;
    Ok(plan)
}

// ---------------------------------------------------------------- indexes

/// Params block, dataset hash, levels, per-layer CSR adjacency, insertion
/// log. Vectors are not stored; loading re-attaches them from the dataset
/// whose hash is recorded.
pub fn encode_index(index: &HnswIndex, dataset_hash: &str) -> Vec<u8> {
    let p = index.params();
    let mut w = Writer(Vec::new());
    w.u64(p.m as u64);
    w.u64(p.m0 as u64);
    w.u64(p.ef_construction as u64);
    w.f64(p.ml);
    w.u64(p.seed);
    w.u8(p.metric.tag());
    w.u8(p.neighbor_select.tag());
    w.u128(index.level_rng_word_pos());
    w.u64(index.dim() as u64);
    w.hash(dataset_hash);
    let cap = index.capacity();
    w.u64(cap as u64);
    for l in index.levels() {
        w.u32(l.map_or(u32::MAX, |v| v as u32));
    }
    w.u64(index.entry_point().map_or(u64::MAX, |e| e as u64));
    let layers = index.max_level().map_or(0, |l| l + 1);
    w.u32(layers as u32);
    for layer in 0..layers {
        // CSR: offsets over all id slots, then the concatenated targets
        let mut offsets = Vec::with_capacity(cap + 1);
        let mut targets = Vec::new();
        offsets.push(0u64);
        for id in 0..cap {
            targets.extend_from_slice(index.neighbors(id, layer));
            offsets.push(targets.len() as u64);
        }
        for o in offsets {
            w.u64(o);
        }
        for t in targets {
            w.u32(t as u32);
        }
    }
    let log = index.insertion_log();
    w.u64(log.len() as u64);
    for &id in log {
        w.u32(id as u32);
    }
    seal(INDEX_MAGIC, INDEX_VERSION, &w.0)
}

pub fn save_index(index: &HnswIndex, dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_index(index, &dataset.content_hash()))
}

/// Loads an index and re-attaches the vectors of `dataset`, which must
/// hash to the value recorded at save time.
pub fn load_index(path: impl AsRef<Path>, dataset: &Dataset) -> Result<HnswIndex> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let body = unseal(&bytes, INDEX_MAGIC, INDEX_VERSION, path)?;
    let mut r = Reader::new(body, path);
    let m = r.u64()? as usize;
    let m0 = r.u64()? as usize;
    let ef_construction = r.u64()? as usize;
    let ml = r.f64()?;
    let seed = r.u64()?;
    let metric = r.metric()?;
    let sel = r.u8()?;
    let neighbor_select =
        NeighborSelect::from_tag(sel).ok_or_else(|| r.err(&format!("unknown selection tag {sel}")))?;
    let word_pos = r.u128()?;
    let dim = r.u64()? as usize;
    let stored_hash = r.hash()?;
    let found = dataset.content_hash();
    if stored_hash != found {
        return Err(Error::HashMismatch {
            what: format!("index dataset ({})", path.display()),
            expected: stored_hash,
            found,
        });
    }
    if dim != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: dataset.dim(),
        });
    }
    let cap = r.len("slot")?;
    let levels = (0..cap)
        .map(|_| r.u32().map(|v| (v != u32::MAX).then_some(v as usize)))
        .collect::<Result<Vec<_>>>()?;
    let entry = r.u64()?;
    let entry_point = (entry != u64::MAX).then_some(entry as usize);
    let layers = r.u32()? as usize;
    let mut links: Vec<Vec<Vec<usize>>> = levels
        .iter()
        .map(|l| l.map_or_else(Vec::new, |l| vec![Vec::new(); l + 1]))
        .collect();
    for layer in 0..layers {
        let offsets = (0..=cap).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let total = *offsets.last().unwrap_or(&0) as usize;
        if offsets.windows(2).any(|w| w[0] > w[1]) || total > body.len() {
            return Err(r.err("corrupt adjacency offsets"));
        }
        let targets = (0..total).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        for id in 0..cap {
            let (a, b) = (offsets[id] as usize, offsets[id + 1] as usize);
            if a == b {
                continue;
            }
            let slot = links[id]
                .get_mut(layer)
                .ok_or_else(|| Error::Invariant(format!("id {id} has links above its level")))?;
            *slot = targets[a..b].to_vec();
        }
    }
    let log_len = r.len("log")?;
    let insertion_log = (0..log_len).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    r.finish()?;

    let mut vectors = vec![0.0; cap * dim];
    for (id, l) in levels.iter().enumerate() {
        if l.is_some() {
            if id >= dataset.len() {
                return Err(Error::UnknownId(id as u64));
            }
            vectors[id * dim..(id + 1) * dim].copy_from_slice(dataset.row(id));
        }
    }
    let params = HnswParams {
        m,
        m0,
        ef_construction,
        ml,
        seed,
        metric,
        neighbor_select,
    };
    HnswIndex::from_parts(params, dim, vectors, levels, links, entry_point, insertion_log, word_pos)
}

// ------------------------------------------------------------------- JSON

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        let offset = text
            .split_inclusive('\n')
            .take(e.line().saturating_sub(1))
            .map(str::len)
            .sum::<usize>()
            + e.column().saturating_sub(1);
        Error::format(path, offset as u64, e.to_string())
    })
}

/// JSON document carrying a `format`/`version` envelope.
pub trait Versioned {
    const FORMAT: &'static str;
    const VERSION: u32;
    fn format_tag(&self) -> (&str, u32);
}

pub fn load_versioned<T: DeserializeOwned + Versioned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let value: T = load_json(path)?;
    let (format, version) = value.format_tag();
    if format != T::FORMAT {
        return Err(Error::format(path, 0, format!("expected a {} document, found {format}", T::FORMAT)));
    }
    if version != T::VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: T::VERSION,
        });
    }
    Ok(value)
}

/// SHA-256 of a file's bytes.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    Ok(hex::encode(Sha256::digest(read_all(path)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orders::order_random;
    use crate::seed;
    use rand::Rng;

    fn random_ds(n: usize, d: usize, s: u64) -> Dataset {
        let mut rng = seed::rng(s);
        // f32-representable so the fvecs round trip is exact
        Dataset::new(d, (0..n * d).map(|_| f64::from(rng.random_range(-1.0f32..1.0))).collect()).unwrap()
    }

    #[test]
    fn fvecs_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.fvecs");
        let x = random_ds(13, 5, 1);
        write_fvecs(&x, &p).unwrap();
        let y = read_fvecs(&p).unwrap();
        assert_eq!(x, y);
        assert_eq!(fs::read(&p).unwrap(), encode_fvecs(&y));
        assert_eq!(fs::metadata(&p).unwrap().len(), 13 * (4 + 4 * 5));
    }

    #[test]
    fn fvecs_dim_mismatch_names_record() {
        let x = random_ds(10, 3, 2);
        let mut bytes = encode_fvecs(&x);
        let rec = 4 + 4 * 3;
        bytes[7 * rec..7 * rec + 4].copy_from_slice(&4i32.to_le_bytes());
        let err = parse_fvecs(&bytes, Path::new("bad.fvecs")).unwrap_err();
        match err {
            Error::Format { offset, message, .. } => {
                assert_eq!(offset, (7 * rec) as u64);
                assert!(message.contains("record 7"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fvecs_truncated_and_empty() {
        let x = random_ds(3, 4, 3);
        let bytes = encode_fvecs(&x);
        let err = parse_fvecs(&bytes[..bytes.len() - 2], Path::new("t")).unwrap_err();
        assert!(matches!(err, Error::Format { offset, .. } if offset == 2 * 20 + 4));
        assert!(parse_fvecs(&[], Path::new("e")).is_err());
        assert!(parse_fvecs(&[1, 0], Path::new("e")).is_err());
    }

    #[test]
    fn categories_round_trip_and_join() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cats.jsonl");
        let cats: Vec<String> = ["watches", "sneakers", "handbags", "streetwear", "collectibles"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        write_categories(&cats, &p).unwrap();
        let labels = read_categories(&p).unwrap();
        assert_eq!(join_categories(&labels, 5).unwrap(), cats);
        assert!(join_categories(&labels, 6).is_err());
        assert!(join_categories(&labels, 4).is_err());
    }

    #[test]
    fn categories_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.jsonl");
        fs::write(&p, "{\"id\":0,\"category\":\"a\"}\n{\"id\":0,\"category\":\"b\"}\n").unwrap();
        assert!(matches!(read_categories(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn qrels_parse() {
        let q = parse_qrels("q1\td1\t2\nq1\td2\t0\n\nq2\td9\t1\n", Path::new("q")).unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q.get("q1").unwrap()["d1"], 2);
        assert!(parse_qrels("q1\td1\n", Path::new("q")).is_err());
        assert!(parse_qrels("q1\td1\t-1\n", Path::new("q")).is_err());
        assert!(parse_qrels("q1\td1\t1\nq1\td1\t2\n", Path::new("q")).is_err());
    }

    #[test]
    fn baseline_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let x = random_ds(50, 4, 4);
        let q = random_ds(6, 4, 5);
        let b = Baseline::compute(&x, &q, 5, Metric::L2).unwrap();
        let p = dir.path().join("b.hlb");
        save_baseline(&b, &p).unwrap();
        assert_eq!(load_baseline(&p).unwrap(), b);

        let mut bytes = fs::read(&p).unwrap();
        bytes[20] ^= 0xff;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_baseline(&p), Err(Error::Format { .. })));

        let mut bytes = encode_baseline(&b);
        bytes[8] = 9;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_baseline(&p), Err(Error::VersionMismatch { found: 9, .. })));
    }

    #[test]
    fn order_plan_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.order");
        let plan = order_random(&(0..40).collect::<Vec<_>>(), 3).unwrap();
        save_order_plan(&plan, &p).unwrap();
        assert_eq!(load_order_plan(&p).unwrap(), plan);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"format\":\"hnswlab.order\""));
        fs::write(&p, text.replace("\"count\":40", "\"count\":41")).unwrap();
        assert!(load_order_plan(&p).is_err());
    }
}
