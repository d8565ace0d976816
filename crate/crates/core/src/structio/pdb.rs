//! Fixed-column PDB reader and writer.
//!
//! | Columns | Field                         |
//! |---------|-------------------------------|
//! | 1-6     | record name (`ATOM  `)        |
//! | 13-16   | atom name                     |
//! | 17      | alternate location            |
//! | 18-20   | residue name                  |
//! | 22      | chain identifier              |
//! | 23-26   | residue sequence number       |
//! | 27      | insertion code                |
//! | 31-54   | x, y, z (8.3 each, Ångström)  |
//! | 77-78   | element symbol                |

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use super::{AminoAcid, Atom, Position, StructError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StructureFormat {
    #[default]
    Pdb,
}

struct RawAtom {
    element: String,
    name: String,
    coords: [f64; 3],
    chain: char,
    res_seq: Position,
    insertion: char,
    residue_type: AminoAcid,
}

fn column(line: &str, start: usize, end: usize) -> &str {
    let end = end.min(line.len());
    if start >= end {
        ""
    } else {
        line.get(start..end).unwrap_or("")
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> StructError {
    StructError::Parse {
        line,
        message: message.into(),
    }
}

fn element_from_name(name: &str) -> String {
    name.chars()
        .find(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_uppercase().to_string())
        .unwrap_or_default()
}

/// Parses structure file content into atoms of standard amino-acid residues.
///
/// Only the first model is read. HETATM records (ligands, water), hydrogens
/// and non-standard residues are skipped; for alternate locations the first
/// occurrence of each atom wins. Residues carrying an insertion code are
/// renumbered after the highest plain residue number of their chain, in
/// order of appearance.
pub fn parse_structure(content: &[u8], format: StructureFormat) -> Result<Vec<Atom>, StructError> {
    match format {
        StructureFormat::Pdb => parse_pdb(content),
    }
}

fn parse_pdb(content: &[u8]) -> Result<Vec<Atom>, StructError> {
    let text = String::from_utf8_lossy(content);
    let mut raw = Vec::new();
    let mut seen_atoms: HashSet<(char, Position, char, String)> = HashSet::new();
    let mut residue_types: HashMap<(char, Position, char), AminoAcid> = HashMap::new();
    let mut skipped_altloc = 0usize;

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM") {
            continue;
        }
        if line.len() < 54 {
            return Err(parse_error(lineno, "ATOM record shorter than 54 columns"));
        }
        let Some(residue_type) = AminoAcid::from_three_letter(column(line, 17, 20)) else {
            continue;
        };
        let name = column(line, 12, 16).trim().to_string();
        if name.is_empty() {
            return Err(parse_error(lineno, "empty atom name"));
        }
        let mut element = column(line, 76, 78).trim().to_ascii_uppercase();
        if element.is_empty() {
            element = element_from_name(&name);
        }
        if element == "H" || element == "D" {
            continue;
        }
        let chain = column(line, 21, 22).chars().next().unwrap_or(' ');
        let res_seq: Position = column(line, 22, 26)
            .trim()
            .parse()
            .map_err(|_| parse_error(lineno, "invalid residue sequence number"))?;
        let insertion = column(line, 26, 27).chars().next().unwrap_or(' ');
        let mut coords = [0.0; 3];
        for (k, (start, end)) in [(30, 38), (38, 46), (46, 54)].into_iter().enumerate() {
            coords[k] = column(line, start, end)
                .trim()
                .parse()
                .map_err(|_| parse_error(lineno, format!("invalid coordinate in columns {}-{}", start + 1, end)))?;
        }

        let residue_key = (chain, res_seq, insertion);
        match residue_types.get(&residue_key) {
            Some(&existing) if existing != residue_type => {
                // alternate residue identity at the same position
                skipped_altloc += 1;
                continue;
            }
            Some(_) => {}
            None => {
                residue_types.insert(residue_key, residue_type);
            }
        }
        if !seen_atoms.insert((chain, res_seq, insertion, name.clone())) {
            log::debug!("line {lineno}: skipping alternate location of {name}");
            skipped_altloc += 1;
            continue;
        }
        raw.push(RawAtom {
            element,
            name,
            coords,
            chain,
            res_seq,
            insertion,
            residue_type,
        });
    }

    if skipped_altloc > 0 {
        log::info!("skipped {skipped_altloc} alternate-location atom records");
    }
    if raw.is_empty() {
        return Err(StructError::EmptyStructure);
    }

    // renumber insertion-coded residues after each chain's highest plain number
    let mut max_plain: BTreeMap<char, Position> = BTreeMap::new();
    for a in raw.iter().filter(|a| a.insertion == ' ') {
        let m = max_plain.entry(a.chain).or_insert(a.res_seq);
        *m = (*m).max(a.res_seq);
    }
    let mut inserted: HashMap<(char, Position, char), Position> = HashMap::new();
    let mut next_free: BTreeMap<char, Position> = BTreeMap::new();
    let mut atoms = Vec::with_capacity(raw.len());
    for a in raw {
        let residue_index = if a.insertion == ' ' {
            a.res_seq
        } else {
            *inserted.entry((a.chain, a.res_seq, a.insertion)).or_insert_with(|| {
                let base = max_plain.get(&a.chain).copied().unwrap_or(0);
                let next = next_free.entry(a.chain).or_insert(base);
                *next += 1;
                *next
            })
        };
        atoms.push(Atom {
            element: a.element,
            name: a.name,
            coords: a.coords,
            residue_index,
            chain_id: a.chain,
            residue_type: a.residue_type,
        });
    }
    Ok(atoms)
}

fn format_atom_name(name: &str, element: &str) -> String {
    if name.len() < 4 && element.len() == 1 {
        format!(" {name:<3}")
    } else {
        format!("{name:<4}")
    }
}

/// Writes atoms as fixed-column ATOM records followed by `END`.
pub fn write_pdb(atoms: &[Atom]) -> String {
    let mut out = String::with_capacity(atoms.len() * 81);
    for (i, a) in atoms.iter().enumerate() {
        let _ = writeln!(
            out,
            "ATOM  {:>5} {} {:>3} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}{:>6.2}{:>6.2}          {:>2}",
            (i + 1) % 100_000,
            format_atom_name(&a.name, &a.element),
            a.residue_type.three_letter(),
            a.chain_id,
            a.residue_index,
            a.coords[0],
            a.coords[1],
            a.coords[2],
            1.0,
            0.0,
            a.element,
        );
    }
    out.push_str("END\n");
    out
}
