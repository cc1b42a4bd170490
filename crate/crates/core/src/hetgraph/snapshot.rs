//! Binary snapshot format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "PMSNAP\0\0" | version u32 | section count u32
//! repeated: tag u32 | payload length u64 | payload | crc32(payload) u32
//! crc32(all preceding bytes) u32
//! ```
//!
//! Sections are nodes, adjacency (all eight kinds), review attributes and
//! labels, always written in that order, so equal inputs give equal bytes.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{
    Csr, EdgeKind, HeteroGraph, LabelStore, Node, NodeAttrs, NodeId, NodeKind, PoliticalClass, PoliticalLabel,
    Provenance, ReviewAttrs,
};
use crate::ingest::MoralVector;

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PMSNAP\0\0";

const TAG_NODES: u32 = 1;
const TAG_ADJ: u32 = 2;
const TAG_REVIEWS: u32 = 3;
const TAG_LABELS: u32 = 4;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot file")]
    BadMagic,
    #[error("snapshot version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot truncated")]
    Truncated,
    #[error("checksum mismatch in {0}")]
    Checksum(&'static str),
    #[error("corrupt snapshot: {0}")]
    Corrupt(String),
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i64(&mut self, v: i64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn opt<T>(&mut self, v: &Option<T>, f: impl FnOnce(&mut Self, &T)) {
        match v {
            None => self.u8(0),
            Some(x) => {
                self.u8(1);
                f(self, x);
            }
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(SnapshotError::Truncated)?;
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8, SnapshotError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn i64(&mut self) -> Result<i64, SnapshotError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> Result<String, SnapshotError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SnapshotError::Corrupt("invalid utf-8".into()))
    }
    fn opt<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, SnapshotError>) -> Result<Option<T>, SnapshotError> {
        match self.u8()? {
            0 => Ok(None),
            1 => f(self).map(Some),
            t => Err(SnapshotError::Corrupt(format!("option tag {t}"))),
        }
    }
    fn count(&mut self) -> Result<usize, SnapshotError> {
        let n = self.u64()?;
        // Every counted element occupies at least one byte.
        if n as usize > self.buf.len() {
            return Err(SnapshotError::Corrupt(format!("count {n} exceeds payload")));
        }
        Ok(n as usize)
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn encode_nodes(g: &HeteroGraph) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.u64(g.nodes.len() as u64);
    for n in &g.nodes {
        e.u8(n.kind.code());
        e.str(&n.key);
        let a = &n.attrs;
        e.opt(&a.name, |e, s| e.str(s));
        e.opt(&a.main_category, |e, s| e.str(s));
        e.opt(&a.big_category, |e, s| e.str(s));
        e.opt(&a.avg_rating, |e, v| e.f64(*v));
        e.opt(&a.sales_rank, |e, v| e.u64(*v));
        e.opt(&a.price, |e, v| e.f64(*v));
        e.opt(&a.wave, |e, v| e.u8(*v));
    }
    e.0
}

fn encode_adj(g: &HeteroGraph) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    for csr in &g.adj {
        e.u64(csr.targets.len() as u64);
        for w in csr.offsets.windows(2) {
            e.u32((w[1] - w[0]) as u32);
        }
        for &t in &csr.targets {
            e.u32(t);
        }
    }
    e.0
}

fn encode_reviews(g: &HeteroGraph) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.u64(g.reviews.len() as u64);
    for ((a, p), r) in &g.reviews {
        e.u32(*a);
        e.u32(*p);
        e.u8(r.rating);
        e.u32(r.helpful_up);
        e.u32(r.helpful_total);
        e.i64(r.unix_time);
        e.opt(&r.moral, |e, m| m.0.iter().for_each(|&x| e.f64(x)));
    }
    e.0
}

fn encode_labels(labels: &LabelStore) -> Vec<u8> {
    let mut e = Enc(Vec::new());
    e.u64(labels.len() as u64);
    for l in labels.iter() {
        e.str(&l.product);
        e.u8(l.class.index() as u8);
        e.f64(l.probability);
        e.u8(match l.provenance {
            Provenance::Model => 0,
            Provenance::Human => 1,
            Provenance::Seed => 2,
        });
        e.u32(l.iteration);
    }
    e.0
}

/// Serializes graph and labels to bytes.
pub fn encode(g: &HeteroGraph, labels: &LabelStore) -> Vec<u8> {
    let sections = [
        (TAG_NODES, encode_nodes(g)),
        (TAG_ADJ, encode_adj(g)),
        (TAG_REVIEWS, encode_reviews(g)),
        (TAG_LABELS, encode_labels(labels)),
    ];
    let mut e = Enc(Vec::new());
    e.0.extend_from_slice(MAGIC);
    e.u32(SNAPSHOT_VERSION);
    e.u32(sections.len() as u32);
    for (tag, payload) in &sections {
        e.u32(*tag);
        e.u64(payload.len() as u64);
        e.0.extend_from_slice(payload);
        e.u32(crc32fast::hash(payload));
    }
    let total = crc32fast::hash(&e.0);
    e.u32(total);
    e.0
}

/// Writes the snapshot atomically (temp file + rename).
pub fn snapshot_save(path: &Path, g: &HeteroGraph, labels: &LabelStore) -> Result<(), SnapshotError> {
    let bytes = encode(g, labels);
    let tmp = path.with_extension("snap.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn snapshot_load(path: &Path) -> Result<(HeteroGraph, LabelStore), SnapshotError> {
    decode(&fs::read(path)?)
}

fn section_name(tag: u32) -> &'static str {
    match tag {
        TAG_NODES => "nodes",
        TAG_ADJ => "adjacency",
        TAG_REVIEWS => "reviews",
        TAG_LABELS => "labels",
        _ => "unknown section",
    }
}

/// Parses a snapshot. Nothing is returned unless every checksum matches.
pub fn decode(bytes: &[u8]) -> Result<(HeteroGraph, LabelStore), SnapshotError> {
    let mut d = Dec { buf: bytes, pos: 0 };
    if d.take(MAGIC.len()).map_err(|_| SnapshotError::BadMagic)? != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = d.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: version,
            expected: SNAPSHOT_VERSION,
        });
    }
    let count = d.u32()?;
    let mut payloads: BTreeMap<u32, &[u8]> = BTreeMap::new();
    for _ in 0..count {
        let tag = d.u32()?;
        let len = d.u64()? as usize;
        let payload = d.take(len)?;
        let crc = d.u32()?;
        if crc != crc32fast::hash(payload) {
            return Err(SnapshotError::Checksum(section_name(tag)));
        }
        payloads.insert(tag, payload);
    }
    let body_end = d.pos;
    let total = d.u32()?;
    if !d.done() || total != crc32fast::hash(&bytes[..body_end]) {
        return Err(SnapshotError::Checksum("file"));
    }

    let get = |tag| {
        payloads
            .get(&tag)
            .copied()
            .ok_or_else(|| SnapshotError::Corrupt(format!("missing {}", section_name(tag))))
    };
    let nodes = decode_nodes(get(TAG_NODES)?)?;
    let n = nodes.len();
    let adj = decode_adj(get(TAG_ADJ)?, n)?;
    let reviews = decode_reviews(get(TAG_REVIEWS)?, n)?;
    let labels = decode_labels(get(TAG_LABELS)?)?;

    let mut index = HashMap::with_capacity(n);
    for (i, node) in nodes.iter().enumerate() {
        if index.insert((node.kind, node.key.clone()), i as NodeId).is_some() {
            return Err(SnapshotError::Corrupt(format!("duplicate key {}", node.key)));
        }
    }
    Ok((
        HeteroGraph {
            nodes,
            index,
            adj,
            reviews,
        },
        labels,
    ))
}

fn decode_nodes(buf: &[u8]) -> Result<Vec<Node>, SnapshotError> {
    let mut d = Dec { buf, pos: 0 };
    let n = d.count()?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let code = d.u8()?;
        let kind = NodeKind::from_code(code).ok_or_else(|| SnapshotError::Corrupt(format!("node kind {code}")))?;
        let key = d.str()?;
        let attrs = NodeAttrs {
            name: d.opt(Dec::str)?,
            main_category: d.opt(Dec::str)?,
            big_category: d.opt(Dec::str)?,
            avg_rating: d.opt(Dec::f64)?,
            sales_rank: d.opt(Dec::u64)?,
            price: d.opt(Dec::f64)?,
            wave: d.opt(Dec::u8)?,
        };
        nodes.push(Node { kind, key, attrs });
    }
    if !d.done() {
        return Err(SnapshotError::Corrupt("trailing node bytes".into()));
    }
    Ok(nodes)
}

fn decode_adj(buf: &[u8], n: usize) -> Result<Vec<Csr>, SnapshotError> {
    let mut d = Dec { buf, pos: 0 };
    let mut out = Vec::with_capacity(EdgeKind::ALL.len());
    for _ in EdgeKind::ALL {
        let total = d.count()?;
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        for _ in 0..n {
            let deg = d.u32()? as usize;
            offsets.push(offsets.last().unwrap() + deg);
        }
        if *offsets.last().unwrap() != total {
            return Err(SnapshotError::Corrupt("degree sum mismatch".into()));
        }
        let mut targets = Vec::with_capacity(total);
        for _ in 0..total {
            let t = d.u32()?;
            if t as usize >= n {
                return Err(SnapshotError::Corrupt(format!("neighbor {t} out of range")));
            }
            targets.push(t);
        }
        out.push(Csr { offsets, targets });
    }
    if !d.done() {
        return Err(SnapshotError::Corrupt("trailing adjacency bytes".into()));
    }
    Ok(out)
}

fn decode_reviews(buf: &[u8], n: usize) -> Result<BTreeMap<(NodeId, NodeId), ReviewAttrs>, SnapshotError> {
    let mut d = Dec { buf, pos: 0 };
    let count = d.count()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let a = d.u32()?;
        let p = d.u32()?;
        if a as usize >= n || p as usize >= n {
            return Err(SnapshotError::Corrupt("review endpoint out of range".into()));
        }
        let attrs = ReviewAttrs {
            rating: d.u8()?,
            helpful_up: d.u32()?,
            helpful_total: d.u32()?,
            unix_time: d.i64()?,
            moral: d.opt(|d| {
                let mut v = [0.0; MoralVector::LEN];
                for x in &mut v {
                    *x = d.f64()?;
                }
                Ok(MoralVector(v))
            })?,
        };
        out.insert((a, p), attrs);
    }
    if !d.done() {
        return Err(SnapshotError::Corrupt("trailing review bytes".into()));
    }
    Ok(out)
}

fn decode_labels(buf: &[u8]) -> Result<LabelStore, SnapshotError> {
    let mut d = Dec { buf, pos: 0 };
    let count = d.count()?;
    let mut store = LabelStore::new();
    for _ in 0..count {
        let product = d.str()?;
        let class =
            PoliticalClass::from_index(d.u8()? as usize).ok_or_else(|| SnapshotError::Corrupt("label class".into()))?;
        let probability = d.f64()?;
        let provenance = match d.u8()? {
            0 => Provenance::Model,
            1 => Provenance::Human,
            2 => Provenance::Seed,
            t => return Err(SnapshotError::Corrupt(format!("provenance {t}"))),
        };
        let iteration = d.u32()?;
        store.offer(PoliticalLabel {
            product,
            class,
            probability,
            provenance,
            iteration,
        });
    }
    if !d.done() {
        return Err(SnapshotError::Corrupt("trailing label bytes".into()));
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::GraphBuilder;

    fn all_kinds() -> (HeteroGraph, LabelStore) {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Author, "A1");
        let p: Vec<_> = (0..4)
            .map(|i| b.add_node(NodeKind::Product, &format!("B00{i}")))
            .collect();
        let br = b.add_node(NodeKind::Brand, "Acme");
        let c = b.add_node(NodeKind::Category, "Books");
        {
            let attrs = b.attrs_mut(p[0]).unwrap();
            attrs.name = Some("A Title".into());
            attrs.price = Some(9.99);
            attrs.wave = Some(1);
            attrs.sales_rank = Some(1234);
        }
        let mut moral = [0.0; MoralVector::LEN];
        moral[10] = 0.99;
        b.add_edge(
            a,
            p[0],
            EdgeKind::Reviews,
            Some(ReviewAttrs {
                rating: 4,
                helpful_up: 3,
                helpful_total: 5,
                unix_time: 1_400_000_000,
                moral: Some(MoralVector(moral)),
            }),
        )
        .unwrap();
        for (i, k) in EdgeKind::ALL[1..6].iter().enumerate() {
            b.add_edge(p[i % 4], p[(i + 1) % 4], *k, None).unwrap();
        }
        b.add_edge(p[0], br, EdgeKind::HasBrand, None).unwrap();
        b.add_edge(p[1], c, EdgeKind::InCategory, None).unwrap();
        let mut labels = LabelStore::new();
        labels.offer(PoliticalLabel::seed("B000", PoliticalClass::Conservative));
        labels.offer(PoliticalLabel::model("B001", PoliticalClass::Liberal, 0.97, 2));
        (b.freeze(), labels)
    }

    #[test]
    fn round_trip_all_kinds() {
        let (g, l) = all_kinds();
        for k in EdgeKind::ALL {
            assert_eq!(g.edge_count(k), 1, "{k}");
        }
        let bytes = encode(&g, &l);
        let (g2, l2) = decode(&bytes).unwrap();
        assert_eq!(g2, g);
        assert_eq!(l2, l);
        assert_eq!(encode(&g2, &l2), bytes);
    }

    #[test]
    fn empty_round_trip() {
        let g = HeteroGraph::default();
        let (g2, l2) = decode(&encode(&g, &LabelStore::new())).unwrap();
        assert_eq!(g2.node_count(), 0);
        assert!(l2.is_empty());
    }

    #[test]
    fn corrupted_tail_is_rejected() {
        let (g, l) = all_kinds();
        let mut bytes = encode(&g, &l);
        let n = bytes.len();
        bytes[n - 6] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(SnapshotError::Checksum(_))));
    }

    #[test]
    fn appended_bytes_are_rejected() {
        let (g, l) = all_kinds();
        let mut bytes = encode(&g, &l);
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(SnapshotError::Checksum("file"))));
    }

    #[test]
    fn truncation_and_version() {
        let (g, l) = all_kinds();
        let bytes = encode(&g, &l);
        assert!(matches!(
            decode(&bytes[..bytes.len() / 2]),
            Err(SnapshotError::Truncated)
        ));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(matches!(
            decode(&v2),
            Err(SnapshotError::VersionMismatch { found: 2, .. })
        ));
        assert!(matches!(decode(b"nope"), Err(SnapshotError::BadMagic)));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.snap");
        let (g, l) = all_kinds();
        snapshot_save(&path, &g, &l).unwrap();
        let (g2, l2) = snapshot_load(&path).unwrap();
        assert_eq!((g2, l2), (g, l));
    }
}
