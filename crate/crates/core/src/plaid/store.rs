//! On-disk layout of a [`PlaidIndex`] directory.
//!
//! | file            | contents                                                   |
//! |-----------------|------------------------------------------------------------|
//! | `meta.txt`      | `key = value` header: format, version, dim, k, alpha, ... |
//! | `docids.txt`    | one docid per line, ordinal order                          |
//! | `centroids.bin` | magic, version, k, dim, then `k*dim` LE `f32`              |
//! | `doclens.bin`   | magic, version, n_docs, then per-doc LE `u32` token counts |
//! | `codes.bin`     | magic, version, n_tokens, then per-token LE `u32` centroid |
//! | `residuals.bin` | raw packed residuals, `ceil(dim/8)` bytes per token        |
//! | `ivf.bin`       | magic, version, k, then per centroid a LEB128 length and   |
//! |                 | LEB128 gaps between ascending token ids                    |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{residual_bytes, Centroids, PlaidError, PlaidIndex};
use crate::encoder::EncoderConfig;

pub const FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "clirkit-plaid";

const MAGIC_CENTROIDS: &[u8; 4] = b"CKCE";
const MAGIC_DOCLENS: &[u8; 4] = b"CKDL";
const MAGIC_CODES: &[u8; 4] = b"CKCO";
const MAGIC_IVF: &[u8; 4] = b"CKIV";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PlaidError + '_ {
    move |source| PlaidError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PlaidError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

fn header(magic: &[u8; 4], count: u64) -> Vec<u8> {
    let mut b = Vec::with_capacity(16);
    b.extend_from_slice(magic);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    b.extend_from_slice(&count.to_le_bytes());
    b
}

fn push_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn save_index(index: &PlaidIndex, dir: impl AsRef<Path>) -> Result<(), PlaidError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg = index.config();

    let meta = format!(
        "format = {FORMAT_NAME}\n\
         version = {FORMAT_VERSION}\n\
         dim = {}\n\
         k = {}\n\
         alpha = {:?}\n\
         num_docs = {}\n\
         num_tokens = {}\n\
         seed = {}\n\
         query_len = {}\n\
         doc_maxlen = {}\n\
         mask_symbol = {}\n\
         embed_seed = {}\n",
        index.dim(),
        index.centroids().k(),
        index.alpha(),
        index.n_docs(),
        index.n_tokens(),
        index.seed(),
        cfg.query_len,
        cfg.doc_maxlen,
        cfg.mask_symbol,
        cfg.seed,
    );
    write_file(&dir.join("meta.txt"), meta.as_bytes())?;

    let mut ids = String::new();
    for d in index.docids() {
        ids.push_str(d);
        ids.push('\n');
    }
    write_file(&dir.join("docids.txt"), ids.as_bytes())?;

    let c = index.centroids();
    let mut b = header(MAGIC_CENTROIDS, c.k() as u64);
    b.extend_from_slice(&(c.dim() as u32).to_le_bytes());
    for x in c.as_slice() {
        b.extend_from_slice(&x.to_le_bytes());
    }
    write_file(&dir.join("centroids.bin"), &b)?;

    let mut b = header(MAGIC_DOCLENS, index.n_docs() as u64);
    for d in 0..index.n_docs() {
        b.extend_from_slice(&(index.doc_tokens(d).len() as u32).to_le_bytes());
    }
    write_file(&dir.join("doclens.bin"), &b)?;

    let mut b = header(MAGIC_CODES, index.n_tokens() as u64);
    for x in index.codes() {
        b.extend_from_slice(&x.to_le_bytes());
    }
    write_file(&dir.join("codes.bin"), &b)?;

    write_file(&dir.join("residuals.bin"), index.residuals())?;

    let mut b = header(MAGIC_IVF, c.k() as u64);
    for cid in 0..c.k() {
        let list = index.inverted_list(cid);
        push_varint(&mut b, list.len() as u64);
        let mut prev = 0u32;
        for &t in list {
            push_varint(&mut b, (t - prev) as u64);
            prev = t;
        }
    }
    write_file(&dir.join("ivf.bin"), &b)
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, PlaidError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(PlaidError::MissingFile(path.display().to_string()));
    }
    fs::read(&path).map_err(io_err(&path))
}

fn corrupt(file: &str, message: impl Into<String>) -> PlaidError {
    PlaidError::Corrupt {
        file: file.to_string(),
        message: message.into(),
    }
}

/// Validates a binary header and returns (count, payload).
fn check_header<'a>(file: &str, bytes: &'a [u8], magic: &[u8; 4]) -> Result<(u64, &'a [u8]), PlaidError> {
    if bytes.len() < 16 {
        return Err(corrupt(file, "truncated header"));
    }
    if &bytes[..4] != magic {
        return Err(corrupt(file, format!("bad magic number {:02x?}", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(file, format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    Ok((count, &bytes[16..]))
}

fn le_u32s(file: &str, payload: &[u8], count: usize) -> Result<Vec<u32>, PlaidError> {
    if payload.len() != count * 4 {
        return Err(corrupt(
            file,
            format!("expected {} payload bytes, found {}", count * 4, payload.len()),
        ));
    }
    Ok(payload
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

struct VarintReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl VarintReader<'_> {
    fn next(&mut self) -> Option<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = *self.bytes.get(self.pos)?;
            self.pos += 1;
            v |= ((b & 0x7f) as u64) << shift;
            if b & 0x80 == 0 {
                return Some(v);
            }
        }
        None
    }
}

fn parse_meta(text: &str) -> Result<BTreeMap<&str, &str>, PlaidError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt("meta.txt", format!("line {}: expected key = value", i + 1)))?;
        map.insert(k.trim(), v.trim());
    }
    Ok(map)
}

fn meta_field<T: std::str::FromStr>(meta: &BTreeMap<&str, &str>, key: &str) -> Result<T, PlaidError> {
    let raw = meta
        .get(key)
        .ok_or_else(|| corrupt("meta.txt", format!("missing field {key}")))?;
    raw.parse()
        .map_err(|_| corrupt("meta.txt", format!("invalid value for {key}: {raw:?}")))
}

pub fn load_index(dir: impl AsRef<Path>) -> Result<PlaidIndex, PlaidError> {
    let dir = dir.as_ref();
    let meta_bytes = read_file(dir, "meta.txt")?;
    let meta_text = String::from_utf8(meta_bytes).map_err(|_| corrupt("meta.txt", "not UTF-8"))?;
    let meta = parse_meta(&meta_text)?;
    let format: String = meta_field(&meta, "format")?;
    if format != FORMAT_NAME {
        return Err(corrupt("meta.txt", format!("unknown format {format:?}")));
    }
    let version: u32 = meta_field(&meta, "version")?;
    if version != FORMAT_VERSION {
        return Err(corrupt("meta.txt", format!("unsupported version {version}")));
    }
    let dim: usize = meta_field(&meta, "dim")?;
    let k: usize = meta_field(&meta, "k")?;
    let alpha: f64 = meta_field(&meta, "alpha")?;
    let num_docs: usize = meta_field(&meta, "num_docs")?;
    let num_tokens: usize = meta_field(&meta, "num_tokens")?;
    let config = EncoderConfig {
        dim,
        query_len: meta_field(&meta, "query_len")?,
        doc_maxlen: meta_field(&meta, "doc_maxlen")?,
        mask_symbol: meta_field(&meta, "mask_symbol")?,
        seed: meta_field(&meta, "embed_seed")?,
    };
    config
        .validate()
        .map_err(|e| corrupt("meta.txt", e.to_string()))?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(corrupt("meta.txt", format!("invalid alpha {alpha}")));
    }

    let ids_raw = read_file(dir, "docids.txt")?;
    let ids_text = String::from_utf8(ids_raw).map_err(|_| corrupt("docids.txt", "not UTF-8"))?;
    let docids: Vec<String> = ids_text.lines().map(str::to_string).collect();
    if docids.len() != num_docs {
        return Err(corrupt(
            "docids.txt",
            format!("expected {num_docs} docids, found {}", docids.len()),
        ));
    }

    let raw = read_file(dir, "centroids.bin")?;
    let (ck, payload) = check_header("centroids.bin", &raw, MAGIC_CENTROIDS)?;
    if ck as usize != k || payload.len() < 4 {
        return Err(corrupt("centroids.bin", "centroid count disagrees with meta.txt"));
    }
    let cdim = u32::from_le_bytes(payload[..4].try_into().unwrap()) as usize;
    if cdim != dim {
        return Err(corrupt("centroids.bin", format!("dimension {cdim} != {dim}")));
    }
    let floats = le_u32s("centroids.bin", &payload[4..], k * dim)?;
    let data: Vec<f32> = floats.into_iter().map(f32::from_bits).collect();
    let centroids = Centroids::from_rows(dim, data.chunks_exact(dim));

    let raw = read_file(dir, "doclens.bin")?;
    let (n, payload) = check_header("doclens.bin", &raw, MAGIC_DOCLENS)?;
    if n as usize != num_docs {
        return Err(corrupt("doclens.bin", "document count disagrees with meta.txt"));
    }
    let lens = le_u32s("doclens.bin", payload, num_docs)?;
    let mut doc_offsets = Vec::with_capacity(num_docs + 1);
    doc_offsets.push(0u32);
    let mut acc = 0u64;
    for l in lens {
        acc += l as u64;
        if acc > num_tokens as u64 {
            return Err(corrupt("doclens.bin", "token counts exceed num_tokens"));
        }
        doc_offsets.push(acc as u32);
    }
    if acc as usize != num_tokens {
        return Err(corrupt("doclens.bin", "token counts do not sum to num_tokens"));
    }

    let raw = read_file(dir, "codes.bin")?;
    let (n, payload) = check_header("codes.bin", &raw, MAGIC_CODES)?;
    if n as usize != num_tokens {
        return Err(corrupt("codes.bin", "token count disagrees with meta.txt"));
    }
    let codes = le_u32s("codes.bin", payload, num_tokens)?;
    if let Some(bad) = codes.iter().find(|&&c| c as usize >= k) {
        return Err(corrupt("codes.bin", format!("centroid id {bad} out of range")));
    }

    let residuals = read_file(dir, "residuals.bin")?;
    let expected = num_tokens * residual_bytes(dim);
    if residuals.len() != expected {
        return Err(corrupt(
            "residuals.bin",
            format!("expected {expected} bytes, found {}", residuals.len()),
        ));
    }

    let index = PlaidIndex::from_parts(
        config,
        centroids,
        alpha,
        meta_field(&meta, "seed")?,
        docids,
        doc_offsets,
        codes,
        residuals,
    );

    // The inverted lists are derived from the codes; the stored copy must agree.
    let raw = read_file(dir, "ivf.bin")?;
    let (n, payload) = check_header("ivf.bin", &raw, MAGIC_IVF)?;
    if n as usize != k {
        return Err(corrupt("ivf.bin", "list count disagrees with meta.txt"));
    }
    let mut rd = VarintReader {
        bytes: payload,
        pos: 0,
    };
    for cid in 0..k {
        let len = rd
            .next()
            .ok_or_else(|| corrupt("ivf.bin", "truncated list length"))?;
        let expect = index.inverted_list(cid);
        if len as usize != expect.len() {
            return Err(corrupt("ivf.bin", format!("list {cid} disagrees with codes.bin")));
        }
        let mut prev = 0u64;
        for &t in expect {
            prev += rd.next().ok_or_else(|| corrupt("ivf.bin", "truncated list"))?;
            if prev != t as u64 {
                return Err(corrupt("ivf.bin", format!("list {cid} disagrees with codes.bin")));
            }
        }
    }
    if rd.pos != payload.len() {
        return Err(corrupt("ivf.bin", "trailing bytes"));
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Collection, Document, Lang};
    use crate::encoder::HashProvider;
    use crate::plaid::{build_plaid, PlaidBuildParams};

    fn fixture() -> PlaidIndex {
        let docs = (0..6)
            .map(|i| {
                let text = (0..(3 + i * 2)).map(|j| format!("t{}", (i * 7 + j) % 11)).collect::<Vec<_>>();
                Document::new(format!("doc{i}"), text.join(" "), Lang::Ha)
            })
            .collect();
        let c = Collection::from_documents(docs).unwrap();
        build_plaid(
            &c,
            &HashProvider::new(128, 3),
            &EncoderConfig::default(),
            &PlaidBuildParams {
                k: Some(5),
                seed: 17,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let idx = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_index(&idx, dir.path()).unwrap();
        assert_eq!(load_index(dir.path()).unwrap(), idx);
        let size = fs::metadata(dir.path().join("residuals.bin")).unwrap().len();
        assert_eq!(size as usize, idx.n_tokens() * 16);
    }

    #[test]
    fn tampered_magic_is_rejected() {
        let idx = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_index(&idx, dir.path()).unwrap();
        let p = dir.path().join("centroids.bin");
        let mut b = fs::read(&p).unwrap();
        b[0] ^= 0xff;
        fs::write(&p, b).unwrap();
        let err = load_index(dir.path()).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn empty_dir_names_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_index(dir.path()).unwrap_err();
        assert!(matches!(&err, PlaidError::MissingFile(f) if f.ends_with("meta.txt")));
    }

    #[test]
    fn truncated_residuals_are_rejected() {
        let idx = fixture();
        let dir = tempfile::tempdir().unwrap();
        save_index(&idx, dir.path()).unwrap();
        let p = dir.path().join("residuals.bin");
        let b = fs::read(&p).unwrap();
        fs::write(&p, &b[..b.len() - 1]).unwrap();
        assert!(matches!(load_index(dir.path()), Err(PlaidError::Corrupt { .. })));
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_index(&fixture(), a.path()).unwrap();
        save_index(&fixture(), b.path()).unwrap();
        for f in ["meta.txt", "docids.txt", "centroids.bin", "doclens.bin", "codes.bin", "residuals.bin", "ivf.bin"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn varint_round_trip() {
        let mut b = Vec::new();
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64] {
            push_varint(&mut b, v);
        }
        let mut rd = VarintReader { bytes: &b, pos: 0 };
        for v in [0u64, 1, 127, 128, 300, u32::MAX as u64] {
            assert_eq!(rd.next(), Some(v));
        }
        assert_eq!(rd.next(), None);
    }
}
