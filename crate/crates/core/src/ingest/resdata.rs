//! On-disk residue-identity dataset: structure files plus a targets CSV
//! `structure_file,chain,residue_index,label`, paths relative to the directory.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::structio::{
    build_atomic_graph_for_chain, mask_residue, parse_structure, write_pdb, AminoAcid, Atom, MaskedGraph, Position,
    StructureFormat, DEFAULT_CUTOFF,
};

pub const TARGETS_FILE: &str = "targets.csv";

#[derive(Debug, Serialize, Deserialize)]
struct TargetRow {
    structure_file: String,
    chain: char,
    residue_index: Position,
    label: AminoAcid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based data row in the targets file.
    pub row: usize,
    pub message: String,
}

/// Loaded graphs together with the rows that could not be loaded.
#[derive(Debug, Clone)]
pub struct ResDataset {
    pub graphs: Vec<MaskedGraph>,
    pub errors: Vec<RowError>,
}

impl ResDataset {
    /// Fails with a summary when any row was rejected.
    pub fn into_result(self) -> Result<Vec<MaskedGraph>, IngestError> {
        if self.errors.is_empty() {
            Ok(self.graphs)
        } else {
            Err(IngestError::Rows {
                failed: self.errors.len(),
                total: self.errors.len() + self.graphs.len(),
            })
        }
    }
}

fn load_row(
    dir: &Path,
    row: &TargetRow,
    structures: &mut HashMap<String, Result<Vec<Atom>, String>>,
) -> Result<MaskedGraph, String> {
    let atoms = structures
        .entry(row.structure_file.clone())
        .or_insert_with(|| {
            let bytes = std::fs::read(dir.join(&row.structure_file)).map_err(|e| format!("{}: {e}", row.structure_file))?;
            parse_structure(&bytes, StructureFormat::Pdb).map_err(|e| format!("{}: {e}", row.structure_file))
        })
        .clone()?;
    let graph = build_atomic_graph_for_chain(atoms, DEFAULT_CUTOFF, row.chain).map_err(|e| e.to_string())?;
    let masked = mask_residue(&graph, row.residue_index)
        .map_err(|_| format!("chain {} has no residue {}", row.chain, row.residue_index))?;
    if masked.true_label != row.label {
        return Err(format!(
            "consistency: label {} but structure has {} at chain {} residue {}",
            row.label, masked.true_label, row.chain, row.residue_index
        ));
    }
    Ok(masked)
}

/// Loads every target row. Bad rows are collected in [`ResDataset::errors`]
/// and do not stop the remaining rows from loading.
pub fn load_res_dataset(dir: &Path) -> Result<ResDataset, IngestError> {
    let mut reader = csv::Reader::from_path(dir.join(TARGETS_FILE))?;
    let mut structures = HashMap::new();
    let mut graphs = Vec::new();
    let mut errors = Vec::new();
    for (k, result) in reader.deserialize::<TargetRow>().enumerate() {
        let outcome = result
            .map_err(|e| e.to_string())
            .and_then(|row| load_row(dir, &row, &mut structures));
        match outcome {
            Ok(m) => graphs.push(m),
            Err(message) => {
                log::warn!("{}: row {}: {message}", TARGETS_FILE, k + 1);
                errors.push(RowError { row: k + 1, message });
            }
        }
    }
    if !errors.is_empty() {
        log::warn!("{} of {} target rows failed", errors.len(), errors.len() + graphs.len());
    }
    Ok(ResDataset { graphs, errors })
}

/// Writes each masked graph as `sample_<k>.pdb` plus the targets file.
pub fn write_res_dataset(dir: &Path, dataset: &[MaskedGraph]) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir)?;
    let mut writer = csv::Writer::from_path(dir.join(TARGETS_FILE))?;
    for (k, m) in dataset.iter().enumerate() {
        let name = format!("sample_{k:05}.pdb");
        std::fs::write(dir.join(&name), write_pdb(&m.base.atoms))?;
        let target = &m.base.atoms[m.target_node];
        writer.serialize(TargetRow {
            structure_file: name,
            chain: target.chain_id,
            residue_index: target.residue_index,
            label: m.true_label,
        })?;
    }
    writer.flush()?;
    Ok(())
}
