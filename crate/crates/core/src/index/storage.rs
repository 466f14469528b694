//! On-disk layout (format version 1). All integers and floats little-endian.
//!
//! ```text
//! manifest.json  {"format_version", "config", "collection"}
//! docs.bin       "TCDOCS01" u32:n  { u32:length u32:id_len [u8; id_len] }*n
//! postings.bin   "TCPOST01" u32:terms
//!                { u32:term_len [u8] u32:df u64:cf f64:idf f64:max_score
//!                  u32:blocks {u32:last_doc f64:max_score}*  {u32:doc u32:tf}*df }*
//! impacts.bin    "TCIMPT01" u32:terms { u32:segments {u16:impact u32:len u32:doc*}* }*
//! stats.bin      "TCSTAT01" u32:terms { f64 x 36 }*   (similarity-major, 6 stats each)
//! ```
//! Terms appear in lexicographic order in every file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    BlockMeta, CollectionStats, Document, ImpactList, ImpactSegment, Index, IndexConfig,
    PostingsList, ScoreSummary, TermEntry, TermStats,
};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: IndexConfig,
    collection: CollectionStats,
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], file: &'static str, magic: &[u8; 8]) -> Result<Self> {
        if buf.len() < 8 || &buf[..8] != magic {
            return Err(Error::Format(format!("{file}: bad magic")));
        }
        Ok(Reader { buf, pos: 8, file })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!("{}: truncated at byte {}", self.file, self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
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
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format(format!("{}: invalid utf-8", self.file)))
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!("{}: trailing bytes", self.file)));
        }
        Ok(())
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| Error::io(path, e))
}

pub fn save(index: &Index, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: index.config,
        collection: index.collection.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_file(dir, "manifest.json", &json)?;

    let mut w = Writer::default();
    w.0.extend_from_slice(b"TCDOCS01");
    w.u32(index.docs.len() as u32);
    for d in &index.docs {
        w.u32(d.length);
        w.str(&d.external_id);
    }
    write_file(dir, "docs.bin", &w.0)?;

    let mut p = Writer::default();
    let mut im = Writer::default();
    let mut st = Writer::default();
    p.0.extend_from_slice(b"TCPOST01");
    im.0.extend_from_slice(b"TCIMPT01");
    st.0.extend_from_slice(b"TCSTAT01");
    let n = index.terms.len() as u32;
    p.u32(n);
    im.u32(n);
    st.u32(n);
    for t in &index.terms {
        let pl = &t.postings;
        p.str(&t.term);
        p.u32(t.stats.doc_freq);
        p.u64(t.stats.coll_freq);
        p.f64(pl.idf);
        p.f64(pl.max_score);
        p.u32(pl.blocks.len() as u32);
        for b in &pl.blocks {
            p.u32(b.last_doc);
            p.f64(b.max_score);
        }
        for (&d, &f) in pl.docs.iter().zip(&pl.freqs) {
            p.u32(d);
            p.u32(f);
        }

        im.u32(t.impacts.segments.len() as u32);
        for s in &t.impacts.segments {
            im.u16(s.impact);
            im.u32(s.docs.len() as u32);
            for &d in &s.docs {
                im.u32(d);
            }
        }

        for s in &t.stats.summaries {
            for v in s.to_array() {
                st.f64(v);
            }
        }
    }
    write_file(dir, "postings.bin", &p.0)?;
    write_file(dir, "impacts.bin", &im.0)?;
    write_file(dir, "stats.bin", &st.0)?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<Index> {
    let manifest: Manifest = serde_json::from_slice(&read_file(dir, "manifest.json")?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported index format version {}",
            manifest.format_version
        )));
    }
    manifest.config.validate()?;

    let buf = read_file(dir, "docs.bin")?;
    let mut r = Reader::new(&buf, "docs.bin", b"TCDOCS01")?;
    let n = r.u32()? as usize;
    let mut docs = Vec::with_capacity(n);
    for _ in 0..n {
        let length = r.u32()?;
        let external_id = r.str()?;
        docs.push(Document { external_id, length });
    }
    r.finish()?;

    let pbuf = read_file(dir, "postings.bin")?;
    let ibuf = read_file(dir, "impacts.bin")?;
    let sbuf = read_file(dir, "stats.bin")?;
    let mut p = Reader::new(&pbuf, "postings.bin", b"TCPOST01")?;
    let mut im = Reader::new(&ibuf, "impacts.bin", b"TCIMPT01")?;
    let mut st = Reader::new(&sbuf, "stats.bin", b"TCSTAT01")?;
    let nt = p.u32()?;
    if im.u32()? != nt || st.u32()? != nt {
        return Err(Error::Format("term counts disagree across files".into()));
    }
    let mut terms = Vec::with_capacity(nt as usize);
    for _ in 0..nt {
        let term = p.str()?;
        let doc_freq = p.u32()?;
        let coll_freq = p.u64()?;
        let idf = p.f64()?;
        let max_score = p.f64()?;
        let nb = p.u32()? as usize;
        let mut blocks = Vec::with_capacity(nb);
        for _ in 0..nb {
            blocks.push(BlockMeta {
                last_doc: p.u32()?,
                max_score: p.f64()?,
            });
        }
        let mut pdocs = Vec::with_capacity(doc_freq as usize);
        let mut freqs = Vec::with_capacity(doc_freq as usize);
        for _ in 0..doc_freq {
            pdocs.push(p.u32()?);
            freqs.push(p.u32()?);
        }

        let ns = im.u32()? as usize;
        let mut segments = Vec::with_capacity(ns);
        for _ in 0..ns {
            let impact = im.u16()?;
            let len = im.u32()? as usize;
            let mut sdocs = Vec::with_capacity(len);
            for _ in 0..len {
                sdocs.push(im.u32()?);
            }
            segments.push(ImpactSegment { impact, docs: sdocs });
        }

        let mut summaries = [ScoreSummary::default(); 6];
        for s in summaries.iter_mut() {
            let mut a = [0.0; 6];
            for v in a.iter_mut() {
                *v = st.f64()?;
            }
            *s = ScoreSummary::from_array(a);
        }

        terms.push(TermEntry {
            term,
            postings: PostingsList {
                docs: pdocs,
                freqs,
                blocks,
                idf,
                max_score,
            },
            impacts: ImpactList { segments },
            stats: TermStats {
                doc_freq,
                coll_freq,
                summaries,
            },
        });
    }
    p.finish()?;
    im.finish()?;
    st.finish()?;
    Ok(Index::assemble(manifest.config, manifest.collection, docs, terms))
}
