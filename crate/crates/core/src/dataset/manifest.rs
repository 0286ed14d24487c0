//! Cohort manifest (CSV) reader and writer.

use std::collections::HashSet;
use std::io::{Read, Write};

use thiserror::Error;

use super::{DiagnosisLabel, Gender, Partition, Pitch, Vowel};

pub const MANIFEST_HEADER: [&str; 8] = [
    "recording_id",
    "path",
    "speaker_id",
    "gender",
    "age",
    "vowel",
    "pitch",
    "diagnosis",
];

/// Optional trailing column written by the `split` command.
const SPLIT_COLUMN: &str = "split";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ManifestError {
    #[error("manifest header is missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: unknown value for `{column}`")]
    UnknownEnum { row: usize, column: String },
    #[error("row {row}: duplicate recording_id `{id}`")]
    DuplicateRecording { row: usize, id: String },
    #[error("row {row}: malformed record: {message}")]
    Malformed { row: usize, message: String },
    #[error("manifest I/O: {0}")]
    Io(String),
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordingDescriptor {
    pub recording_id: String,
    pub path: String,
    pub speaker_id: String,
    pub gender: Gender,
    pub age: Option<u32>,
    pub vowel: Vowel,
    pub pitch: Pitch,
    pub diagnosis: DiagnosisLabel,
    pub split: Option<Partition>,
}

/// Parses a manifest. Rows are numbered from 1 (the first data row); lines
/// starting with `#` are skipped.
pub fn parse_manifest<R: Read>(reader: R) -> Result<Vec<RecordingDescriptor>, ManifestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| ManifestError::Io(e.to_string()))?
        .clone();
    let mut columns = [0usize; 8];
    for (slot, name) in columns.iter_mut().zip(MANIFEST_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ManifestError::MissingColumn(name.to_string()))?;
    }
    let split_col = headers.iter().position(|h| h == SPLIT_COLUMN);

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| ManifestError::Malformed {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(columns[c]).unwrap_or("");
        let unknown = |column: &str| ManifestError::UnknownEnum {
            row,
            column: column.to_string(),
        };

        let recording_id = field(0).to_string();
        if recording_id.is_empty() {
            return Err(ManifestError::Malformed {
                row,
                message: "empty recording_id".into(),
            });
        }
        if !seen.insert(recording_id.clone()) {
            return Err(ManifestError::DuplicateRecording { row, id: recording_id });
        }
        let age = match field(4) {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| ManifestError::Malformed {
                row,
                message: format!("age `{s}` is not a non-negative integer"),
            })?),
        };
        let split = match split_col.map(|c| record.get(c).unwrap_or("")) {
            None | Some("") => None,
            Some(s) => Some(Partition::parse(s).ok_or_else(|| unknown(SPLIT_COLUMN))?),
        };
        out.push(RecordingDescriptor {
            recording_id,
            path: field(1).to_string(),
            speaker_id: field(2).to_string(),
            gender: Gender::parse(field(3)).ok_or_else(|| unknown("gender"))?,
            age,
            vowel: Vowel::parse(field(5)).ok_or_else(|| unknown("vowel"))?,
            pitch: Pitch::parse(field(6)).ok_or_else(|| unknown("pitch"))?,
            diagnosis: field(7).parse().map_err(|_| unknown("diagnosis"))?,
            split,
        });
    }
    Ok(out)
}

/// Writes descriptors in manifest format; a `split` column is appended when any row carries one.
pub fn write_manifest<W: Write>(writer: W, rows: &[RecordingDescriptor]) -> Result<(), ManifestError> {
    let with_split = rows.iter().any(|r| r.split.is_some());
    let mut csv = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| ManifestError::Io(e.to_string());
    let mut header: Vec<&str> = MANIFEST_HEADER.to_vec();
    if with_split {
        header.push(SPLIT_COLUMN);
    }
    csv.write_record(&header).map_err(io)?;
    for r in rows {
        let age = r.age.map(|a| a.to_string()).unwrap_or_default();
        let mut record = vec![
            r.recording_id.as_str(),
            r.path.as_str(),
            r.speaker_id.as_str(),
            r.gender.token(),
            age.as_str(),
            r.vowel.token(),
            r.pitch.token(),
            r.diagnosis.name(),
        ];
        if with_split {
            record.push(r.split.map(|s| s.token()).unwrap_or(""));
        }
        csv.write_record(&record).map_err(io)?;
    }
    csv.flush().map_err(|e| ManifestError::Io(e.to_string()))
}
