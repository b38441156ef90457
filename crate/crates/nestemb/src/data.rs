//! CSV reading and writing for the five dataset shapes.

use std::fs;
use std::path::Path;

use nestemb_core::dataset::{
    normalize_score, NliLabel, PairClassRow, PairRow, Schema, ScoredPair, TripletRow,
    DEFAULT_SCORE_RANGE,
};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid UTF-8 at byte {offset}")]
    Decode { offset: usize },
    #[error("{schema} schema needs a {column:?} column; header has {found:?}")]
    Schema {
        schema: Schema,
        column: String,
        found: Vec<String>,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("empty file, expected a header row")]
    MissingHeader,
    #[error("csv: {0}")]
    Csv(String),
}

/// Parsed rows; pair-score and STS files both become [`ScoredPair`]s.
#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Pair(Vec<PairRow>),
    Triplet(Vec<TripletRow>),
    PairClass(Vec<PairClassRow>),
    Scored(Vec<ScoredPair>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Pair(r) => r.len(),
            Rows::Triplet(r) => r.len(),
            Rows::PairClass(r) => r.len(),
            Rows::Scored(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn empty(schema: Schema) -> Self {
        match schema {
            Schema::Pair => Rows::Pair(Vec::new()),
            Schema::Triplet => Rows::Triplet(Vec::new()),
            Schema::PairClass => Rows::PairClass(Vec::new()),
            Schema::PairScore | Schema::Sts => Rows::Scored(Vec::new()),
        }
    }

    pub fn into_triplets(self) -> Option<Vec<TripletRow>> {
        match self {
            Rows::Triplet(r) => Some(r),
            _ => None,
        }
    }

    pub fn into_scored(self) -> Option<Vec<ScoredPair>> {
        match self {
            Rows::Scored(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParseOptions {
    /// Collect bad rows into [`Parsed::quarantine`] instead of failing.
    pub lenient: bool,
    /// Raw score range. Defaults: `[0, 1]` for pair-score, `[0, 5]` for STS.
    pub score_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quarantined {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub rows: Rows,
    pub quarantine: Vec<Quarantined>,
}

fn score_range(schema: Schema, opts: &ParseOptions) -> (f64, f64) {
    opts.score_range.unwrap_or(match schema {
        Schema::Sts => DEFAULT_SCORE_RANGE,
        _ => (0.0, 1.0),
    })
}

pub fn parse_csv(path: &Path, schema: Schema, opts: &ParseOptions) -> Result<Parsed, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_csv_bytes(&bytes, schema, opts)
}

pub fn parse_csv_bytes(
    bytes: &[u8],
    schema: Schema,
    opts: &ParseOptions,
) -> Result<Parsed, DataError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DataError::Decode {
        offset: e.valid_up_to(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h.map_err(|e| DataError::Csv(e.to_string()))?,
        None => return Err(DataError::MissingHeader),
    };
    let found: Vec<String> = header
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').trim().to_owned())
        .collect();
    let positions = schema
        .columns()
        .iter()
        .map(|&col| {
            found
                .iter()
                .position(|h| h == col || schema.aliases(col).contains(&h.as_str()))
                .ok_or_else(|| DataError::Schema {
                    schema,
                    column: col.to_owned(),
                    found: found.clone(),
                })
        })
        .collect::<Result<Vec<usize>, _>>()?;

    let range = score_range(schema, opts);
    let mut rows = Rows::empty(schema);
    let mut quarantine = Vec::new();
    for record in records {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let outcome = if record.len() != found.len() {
            Err(format!(
                "expected {} fields, found {}",
                found.len(),
                record.len()
            ))
        } else {
            let fields: Vec<&str> = positions.iter().map(|&i| &record[i]).collect();
            push_row(&mut rows, &fields, range)
        };
        if let Err(message) = outcome {
            if opts.lenient {
                quarantine.push(Quarantined { line, message });
            } else {
                return Err(DataError::Row { line, message });
            }
        }
    }
    Ok(Parsed { rows, quarantine })
}

fn push_row(rows: &mut Rows, f: &[&str], range: (f64, f64)) -> Result<(), String> {
    let own = |i: usize| f[i].to_owned();
    match rows {
        Rows::Pair(out) => {
            let row = PairRow {
                anchor: own(0),
                positive: own(1),
            };
            row.validate().map_err(|e| e.to_string())?;
            out.push(row);
        }
        Rows::Triplet(out) => {
            let row = TripletRow {
                anchor: own(0),
                positive: own(1),
                negative: own(2),
            };
            row.validate().map_err(|e| e.to_string())?;
            out.push(row);
        }
        Rows::PairClass(out) => {
            let label = f[2]
                .trim()
                .parse::<u8>()
                .ok()
                .and_then(|id| NliLabel::from_id(id).ok())
                .ok_or_else(|| format!("label {:?} is not one of 0, 1, 2", f[2]))?;
            out.push(PairClassRow {
                premise: own(0),
                hypothesis: own(1),
                label,
            });
        }
        Rows::Scored(out) => {
            let raw: f64 = f[2]
                .trim()
                .parse()
                .map_err(|_| format!("score {:?} is not a number", f[2]))?;
            let gold = normalize_score(raw, range).map_err(|e| format!("score: {e}"))?;
            out.push(ScoredPair {
                sentence1: own(0),
                sentence2: own(1),
                gold,
            });
        }
    }
    Ok(())
}

/// Writes rows with the canonical header. Scored pairs are written under the
/// pair-score header with their normalized `[0, 1]` gold value.
pub fn write_csv<W: std::io::Write>(rows: &Rows, out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| DataError::Csv(e.to_string());
    match rows {
        Rows::Pair(rs) => {
            w.write_record(Schema::Pair.columns()).map_err(err)?;
            for r in rs {
                w.write_record([&r.anchor, &r.positive]).map_err(err)?;
            }
        }
        Rows::Triplet(rs) => {
            w.write_record(Schema::Triplet.columns()).map_err(err)?;
            for r in rs {
                w.write_record([&r.anchor, &r.positive, &r.negative])
                    .map_err(err)?;
            }
        }
        Rows::PairClass(rs) => {
            w.write_record(Schema::PairClass.columns()).map_err(err)?;
            for r in rs {
                w.write_record([&r.premise, &r.hypothesis, &r.label.id().to_string()])
                    .map_err(err)?;
            }
        }
        Rows::Scored(rs) => {
            w.write_record(Schema::PairScore.columns()).map_err(err)?;
            for r in rs {
                w.write_record([&r.sentence1, &r.sentence2, &r.gold.to_string()])
                    .map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

pub fn write_csv_file(rows: &Rows, path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// `id,text` document lists for building corpora.
pub fn parse_documents(path: &Path) -> Result<Vec<(String, String)>, DataError> {
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| DataError::Decode {
        offset: e.valid_up_to(),
    })?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Row {
                line: 1,
                message: format!("document file needs an {name:?} column"),
            })
    };
    let (id_col, text_col) = (col("id")?, col("text")?);
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| DataError::Csv(e.to_string()))?;
            Ok((r[id_col].to_owned(), r[text_col].to_owned()))
        })
        .collect()
}

pub fn write_documents<W: std::io::Write>(
    docs: &[(String, String)],
    out: W,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| DataError::Csv(e.to_string());
    w.write_record(["id", "text"]).map_err(err)?;
    for (id, text) in docs {
        w.write_record([id, text]).map_err(err)?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}
