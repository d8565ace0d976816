use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::StructError;

/// Single-letter codes in index order. Every 20-vector in the crate is
/// indexed by this ordering (alphabetical by one-letter code).
pub const CODES: [char; 20] = [
    'A', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'K', 'L', 'M', 'N', 'P', 'Q', 'R', 'S', 'T', 'V', 'W',
    'Y',
];

const THREE_LETTER: [&str; 20] = [
    "ALA", "CYS", "ASP", "GLU", "PHE", "GLY", "HIS", "ILE", "LYS", "LEU", "MET", "ASN", "PRO",
    "GLN", "ARG", "SER", "THR", "VAL", "TRP", "TYR",
];

/// One of the 20 canonical amino acids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AminoAcid(u8);

impl AminoAcid {
    pub const COUNT: usize = 20;

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(AminoAcid(index as u8))
    }

    pub fn from_code(code: char) -> Option<Self> {
        let upper = code.to_ascii_uppercase();
        CODES.iter().position(|&c| c == upper).map(|i| AminoAcid(i as u8))
    }

    pub fn from_three_letter(name: &str) -> Option<Self> {
        let upper = name.trim().to_ascii_uppercase();
        THREE_LETTER
            .iter()
            .position(|&n| n == upper)
            .map(|i| AminoAcid(i as u8))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn code(self) -> char {
        CODES[self.index()]
    }

    pub fn three_letter(self) -> &'static str {
        THREE_LETTER[self.index()]
    }

    pub fn all() -> impl Iterator<Item = AminoAcid> {
        (0..Self::COUNT as u8).map(AminoAcid)
    }
}

impl fmt::Display for AminoAcid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for AminoAcid {
    type Err = StructError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => {
                AminoAcid::from_code(c).ok_or_else(|| StructError::UnknownAminoAcid(s.to_string()))
            }
            _ => AminoAcid::from_three_letter(s)
                .ok_or_else(|| StructError::UnknownAminoAcid(s.to_string())),
        }
    }
}

impl Serialize for AminoAcid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_char(self.code())
    }
}

impl<'de> Deserialize<'de> for AminoAcid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a one-letter sequence string.
pub fn parse_sequence(seq: &str) -> Result<Vec<AminoAcid>, StructError> {
    seq.trim()
        .chars()
        .map(|c| AminoAcid::from_code(c).ok_or_else(|| StructError::UnknownAminoAcid(c.to_string())))
        .collect()
}

pub fn sequence_string(seq: &[AminoAcid]) -> String {
    seq.iter().map(|aa| aa.code()).collect()
}
