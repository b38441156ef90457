//! Binary model and corpus files (little-endian throughout).
//!
//! Model: `"MXEM"`, version u32, d u32, F u32, ladder length u32, ladder
//! entries u32, seed u64, featurizer block (n_min u8, n_max u8, log2 F u8,
//! reserved u8), then the `d × F` weights as f32.
//!
//! Corpus: model fingerprint (16 bytes), N u64, d u32, N ids (u32 byte length
//! + UTF-8), then `N × d` f32 values.

use std::fs;
use std::io;
use std::path::Path;

use nestemb_core::encoder::FORMAT_VERSION;
use nestemb_core::retrieval::Corpus;
use nestemb_core::{DimensionLadder, EncoderModel, FeaturizerConfig};
use sha2::{Digest, Sha256};

pub const MODEL_MAGIC: [u8; 4] = *b"MXEM";

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("format error at byte {offset}: {reason}")]
    Invalid { offset: usize, reason: String },
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl FormatError {
    fn at(offset: usize, reason: impl Into<String>) -> Self {
        FormatError::Invalid {
            offset,
            reason: reason.into(),
        }
    }

    /// Byte offset of the problem, for malformed content.
    pub fn offset(&self) -> Option<usize> {
        match self {
            FormatError::Invalid { offset, .. } => Some(*offset),
            FormatError::Io { .. } => None,
        }
    }
}

type Result<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::at(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    /// `n` f32 values; the caller has already checked the size.
    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Header size in bytes for a ladder of `ladder_len` entries.
pub fn model_header_len(ladder_len: usize) -> usize {
    4 + 4 + 4 + 4 + 4 + 4 * ladder_len + 8 + 4
}

pub fn encode_model(model: &EncoderModel) -> Vec<u8> {
    let ladder = model.ladder();
    let fz = model.featurizer();
    let mut out = Vec::with_capacity(model_header_len(ladder.len()) + 4 * model.weights().len());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&model.version().to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.feature_space() as u32).to_le_bytes());
    out.extend_from_slice(&(ladder.len() as u32).to_le_bytes());
    for m in ladder.iter() {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.seed().to_le_bytes());
    out.extend_from_slice(&[fz.n_min, fz.n_max, fz.feature_bits, 0]);
    for w in model.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<EncoderModel> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(FormatError::at(0, "bad magic, not a model file"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(FormatError::at(4, format!("unsupported version {version}")));
    }
    let d = r.u32("dimension")? as usize;
    let f_off = r.pos;
    let f = r.u32("feature space")? as usize;
    let len_off = r.pos;
    let ladder_len = r.u32("ladder length")? as usize;
    if ladder_len == 0 || ladder_len > 64 {
        return Err(FormatError::at(
            len_off,
            format!("implausible ladder length {ladder_len}"),
        ));
    }
    let ladder_off = r.pos;
    let dims = (0..ladder_len)
        .map(|_| r.u32("ladder entry").map(|m| m as usize))
        .collect::<Result<Vec<_>>>()?;
    let ladder =
        DimensionLadder::new(dims).map_err(|e| FormatError::at(ladder_off, e.to_string()))?;
    if ladder.full_dim() != d {
        return Err(FormatError::at(
            ladder_off,
            format!("ladder starts at {} but d is {d}", ladder.full_dim()),
        ));
    }
    let seed = r.u64("seed")?;
    let fz_off = r.pos;
    let (n_min, n_max, bits) = (r.u8("n_min")?, r.u8("n_max")?, r.u8("feature bits")?);
    r.u8("reserved")?;
    let featurizer = FeaturizerConfig {
        n_min,
        n_max,
        feature_bits: bits,
    };
    featurizer
        .validate()
        .map_err(|e| FormatError::at(fz_off, e.to_string()))?;
    if featurizer.feature_space() != f {
        return Err(FormatError::at(
            f_off,
            format!("F = {f} disagrees with 2^{bits}"),
        ));
    }
    let expected = d
        .checked_mul(f)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| FormatError::at(f_off, "weight block size overflows"))?;
    if r.remaining() != expected {
        return Err(FormatError::at(
            r.pos,
            format!("expected {expected} weight bytes, found {}", r.remaining()),
        ));
    }
    let weights = r.f32s(d * f, "weights")?;
    EncoderModel::from_parts(ladder, featurizer, seed, weights)
        .map_err(|e| FormatError::at(model_header_len(ladder_len), e.to_string()))
}

/// First 16 bytes of SHA-256 over the serialized model.
pub fn model_fingerprint(model: &EncoderModel) -> [u8; 16] {
    let digest = Sha256::digest(encode_model(model));
    digest[..16].try_into().unwrap()
}

pub fn fingerprint_hex(fp: &[u8; 16]) -> String {
    fp.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_corpus(corpus: &Corpus) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + corpus.data().len() * 4);
    out.extend_from_slice(&corpus.fingerprint());
    out.extend_from_slice(&(corpus.len() as u64).to_le_bytes());
    out.extend_from_slice(&(corpus.dim() as u32).to_le_bytes());
    for id in corpus.ids() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in corpus.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Corpus> {
    let mut r = Reader::new(bytes);
    let fingerprint: [u8; 16] = r.take(16, "fingerprint")?.try_into().unwrap();
    let n_off = r.pos;
    let n = r.u64("document count")?;
    let d_off = r.pos;
    let d = r.u32("dimension")? as usize;
    if d == 0 {
        return Err(FormatError::at(d_off, "dimension is zero"));
    }
    // Every id costs at least its length prefix.
    if n == 0 || n > (r.remaining() / 4) as u64 {
        return Err(FormatError::at(
            n_off,
            format!("implausible document count {n}"),
        ));
    }
    let n = n as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32("id length")? as usize;
        let at = r.pos;
        let raw = r.take(len, "id")?;
        let id = std::str::from_utf8(raw)
            .map_err(|e| FormatError::at(at + e.valid_up_to(), "id is not valid UTF-8"))?;
        ids.push(id.to_owned());
    }
    let expected = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or_else(|| FormatError::at(d_off, "vector block size overflows"))?;
    if r.remaining() != expected {
        return Err(FormatError::at(
            r.pos,
            format!("expected {expected} vector bytes, found {}", r.remaining()),
        ));
    }
    let data_off = r.pos;
    let data = r.f32s(n * d, "vectors")?;
    Corpus::new(ids, d, data, fingerprint).map_err(|e| FormatError::at(data_off, e.to_string()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_model(model: &EncoderModel, path: &Path) -> Result<()> {
    write(path, &encode_model(model))
}

pub fn load_model(path: &Path) -> Result<EncoderModel> {
    decode_model(&read(path)?)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    write(path, &encode_corpus(corpus))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    decode_corpus(&read(path)?)
}
