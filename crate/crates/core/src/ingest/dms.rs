//! Deep-mutational-scanning assay files.
//!
//! ```text
//! # id: BLAT_ECOLX
//! # wildtype: MSIQHFRVAL...
//! # wt_reference: 0.0
//! # taxon: prokaryote
//! mutant,DMS_score
//! A24G,0.83
//! A24G:L30P,1.2
//! ```
//!
//! Metadata lines are optional. Without a `wildtype` line the sequence is
//! recovered from a `mutated_sequence` column when one is present. Rows
//! with several colon-separated substitutions are skipped and counted.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::structio::{parse_sequence, sequence_string, AminoAcid, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Taxon {
    Human,
    Eukaryote,
    Prokaryote,
    Virus,
    #[default]
    Unknown,
}

impl std::str::FromStr for Taxon {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" => Ok(Taxon::Human),
            "eukaryote" => Ok(Taxon::Eukaryote),
            "prokaryote" => Ok(Taxon::Prokaryote),
            "virus" => Ok(Taxon::Virus),
            "unknown" | "" => Ok(Taxon::Unknown),
            other => Err(IngestError::Dms {
                row: 0,
                message: format!("unknown taxon '{other}'"),
            }),
        }
    }
}

impl std::fmt::Display for Taxon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Taxon::Human => "human",
            Taxon::Eukaryote => "eukaryote",
            Taxon::Prokaryote => "prokaryote",
            Taxon::Virus => "virus",
            Taxon::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmsRecord {
    pub position: Position,
    pub wildtype: AminoAcid,
    pub mutant: AminoAcid,
    pub fitness: f64,
}

impl DmsRecord {
    pub fn token(&self) -> String {
        format!("{}{}{}", self.wildtype, self.position, self.mutant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmsAssay {
    pub id: String,
    pub wildtype: Vec<AminoAcid>,
    pub records: Vec<DmsRecord>,
    pub wt_reference: f64,
    pub taxon: Taxon,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DmsParseStats {
    pub single: usize,
    pub skipped_multi: usize,
    pub skipped_synonymous: usize,
}

/// Parses a mutation token such as `A24G`.
pub fn parse_mutant_token(token: &str) -> Option<(AminoAcid, Position, AminoAcid)> {
    let token = token.trim();
    let mut chars = token.chars();
    let wt = AminoAcid::from_code(chars.next()?)?;
    let mt = AminoAcid::from_code(chars.next_back()?)?;
    let digits = chars.as_str();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let pos: Position = digits.parse().ok()?;
    (pos >= 1).then_some((wt, pos, mt))
}

impl DmsAssay {
    pub fn is_better_than_wt(&self, fitness: f64) -> bool {
        fitness > self.wt_reference
    }

    pub fn is_worse_than_wt(&self, fitness: f64) -> bool {
        fitness < self.wt_reference
    }

    /// Number of records with fitness strictly above the wildtype reference.
    pub fn better_than_wt_count(&self) -> usize {
        self.records.iter().filter(|r| self.is_better_than_wt(r.fitness)).count()
    }

    pub fn fitness_map(&self) -> HashMap<(Position, AminoAcid), f64> {
        self.records.iter().map(|r| ((r.position, r.mutant), r.fitness)).collect()
    }

    pub fn wildtype_at(&self, position: Position) -> Option<AminoAcid> {
        usize::try_from(position - 1).ok().and_then(|i| self.wildtype.get(i).copied())
    }

    /// Checks record/sequence agreement and uniqueness of (position, mutant).
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for (row, r) in self.records.iter().enumerate() {
            match self.wildtype_at(r.position) {
                Some(wt) if wt == r.wildtype => {}
                Some(wt) => {
                    return Err(IngestError::Consistency(format!(
                        "record {} says {} at position {}, sequence has {}",
                        r.token(),
                        r.wildtype,
                        r.position,
                        wt
                    )))
                }
                None => {
                    return Err(IngestError::Consistency(format!(
                        "record {} is beyond the sequence length {}",
                        r.token(),
                        self.wildtype.len()
                    )))
                }
            }
            if !seen.insert((r.position, r.mutant)) {
                return Err(IngestError::Dms {
                    row: row + 1,
                    message: format!("duplicate mutation {}", r.token()),
                });
            }
        }
        Ok(())
    }

    /// Serializes in the same format [`parse_dms`] reads.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# id: {}", self.id);
        let _ = writeln!(out, "# wildtype: {}", sequence_string(&self.wildtype));
        let _ = writeln!(out, "# wt_reference: {}", self.wt_reference);
        let _ = writeln!(out, "# taxon: {}", self.taxon);
        out.push_str("mutant,DMS_score\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{}", r.token(), r.fitness);
        }
        out
    }
}

/// Parses a DMS CSV, returning the assay and counts of skipped rows.
pub fn parse_dms(bytes: &[u8]) -> Result<(DmsAssay, DmsParseStats), IngestError> {
    parse_dms_with_reference(bytes, 0.0)
}

/// As [`parse_dms`], with the wildtype reference used when the file declares none.
pub fn parse_dms_with_reference(bytes: &[u8], default_reference: f64) -> Result<(DmsAssay, DmsParseStats), IngestError> {
    let text = String::from_utf8_lossy(bytes);
    let mut id = String::from("assay");
    let mut declared: Option<Vec<AminoAcid>> = None;
    let mut wt_reference = default_reference;
    let mut taxon = Taxon::Unknown;
    for line in text.lines() {
        let Some(meta) = line.strip_prefix('#') else { continue };
        let Some((key, value)) = meta.split_once(':').or_else(|| meta.split_once('=')) else {
            continue;
        };
        let value = value.trim();
        match key.trim().to_ascii_lowercase().as_str() {
            "id" => id = value.to_string(),
            "wildtype" | "sequence" | "target_seq" => {
                declared = Some(parse_sequence(value).map_err(|e| IngestError::Dms {
                    row: 0,
                    message: format!("wildtype sequence: {e}"),
                })?)
            }
            "wt_reference" => {
                wt_reference = value.parse().map_err(|_| IngestError::Dms {
                    row: 0,
                    message: format!("invalid wt_reference '{value}'"),
                })?
            }
            "taxon" => taxon = value.parse()?,
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| IngestError::Dms { row: 0, message: e.to_string() })?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let mutant_col = column("mutant").ok_or_else(|| IngestError::Dms {
        row: 0,
        message: "missing 'mutant' column".into(),
    })?;
    let score_col = column("DMS_score").ok_or_else(|| IngestError::Dms {
        row: 0,
        message: "missing 'DMS_score' column".into(),
    })?;
    let sequence_col = column("mutated_sequence");

    let mut stats = DmsParseStats::default();
    let mut records = Vec::new();
    let mut recovered: Option<Vec<AminoAcid>> = None;
    for (k, result) in reader.records().enumerate() {
        let record = result.map_err(|e| IngestError::Dms { row: k + 1, message: e.to_string() })?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(k + 2);
        let token = record.get(mutant_col).unwrap_or("");
        if token.contains(':') {
            stats.skipped_multi += 1;
            continue;
        }
        let (wt, position, mutant) = parse_mutant_token(token).ok_or_else(|| IngestError::Dms {
            row,
            message: format!("malformed mutant '{token}'"),
        })?;
        let raw_score = record.get(score_col).unwrap_or("");
        let fitness: f64 = raw_score.parse().map_err(|_| IngestError::Dms {
            row,
            message: format!("invalid DMS_score '{raw_score}'"),
        })?;
        if !fitness.is_finite() {
            return Err(IngestError::Dms {
                row,
                message: "non-finite DMS_score".into(),
            });
        }
        if declared.is_none() && recovered.is_none() {
            if let Some(seq) = sequence_col.and_then(|c| record.get(c)) {
                let mut seq = parse_sequence(seq).map_err(|e| IngestError::Dms { row, message: e.to_string() })?;
                if let Some(slot) = seq.get_mut(position as usize - 1) {
                    *slot = wt;
                }
                recovered = Some(seq);
            }
        }
        if wt == mutant {
            stats.skipped_synonymous += 1;
            continue;
        }
        records.push(DmsRecord {
            position,
            wildtype: wt,
            mutant,
            fitness,
        });
    }
    stats.single = records.len();
    let wildtype = declared.or(recovered).ok_or_else(|| IngestError::Dms {
        row: 0,
        message: "no wildtype sequence: add a '# wildtype:' line or a mutated_sequence column".into(),
    })?;
    if stats.skipped_multi > 0 {
        log::info!("{id}: skipped {} multi-substitution rows", stats.skipped_multi);
    }
    let assay = DmsAssay {
        id,
        wildtype,
        records,
        wt_reference,
        taxon,
    };
    assay.validate()?;
    Ok((assay, stats))
}
