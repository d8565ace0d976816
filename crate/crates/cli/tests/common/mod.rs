#![allow(dead_code)]

use std::path::Path;

use varscore::ingest::{DmsAssay, DmsRecord, Taxon};
use varscore::scorer::{save_checkpoint, Checkpoint, FeatureSpec, ScorerParams};
use varscore::structio::{AminoAcid, Atom, Position};
use varscore::variants::ScoreMatrix;

/// Idealized helix of `n` residues with N, CA, C, O and CB atoms.
pub fn helix(sequence: &[AminoAcid]) -> Vec<Atom> {
    let mut atoms = Vec::new();
    for (i, &aa) in sequence.iter().enumerate() {
        let theta = (i as f64) * 100f64.to_radians();
        let z = 1.5 * i as f64;
        let at = |r: f64, dtheta: f64, dz: f64| {
            let t = theta + dtheta.to_radians();
            [r * t.cos(), r * t.sin(), z + dz]
        };
        for (name, element, coords) in [
            ("N", "N", at(1.6, -28.0, -0.8)),
            ("CA", "C", at(2.3, 0.0, 0.0)),
            ("C", "C", at(1.7, 30.0, 0.8)),
            ("O", "O", at(1.2, 45.0, 1.9)),
            ("CB", "C", at(3.7, 5.0, 0.4)),
        ] {
            atoms.push(Atom {
                element: element.into(),
                name: name.into(),
                coords,
                residue_index: i as Position + 1,
                chain_id: 'A',
                residue_type: aa,
            });
        }
    }
    atoms
}

pub fn save_random_checkpoint(path: &Path, seed: u64) -> Checkpoint {
    let ck = Checkpoint::new(ScorerParams::init(FeatureSpec::default(), seed).unwrap(), None);
    save_checkpoint(path, &ck).unwrap();
    ck
}

/// Every substitution at every scored position, with fitness `f(S(i, a))`
/// and the wildtype reference at the median fitness.
pub fn assay_from_matrix(matrix: &ScoreMatrix, f: impl Fn(f64) -> f64) -> DmsAssay {
    let mut records = Vec::new();
    for (r, (&p, &wt)) in matrix.positions().iter().zip(matrix.wildtype()).enumerate() {
        for aa in AminoAcid::all().filter(|&a| a != wt) {
            records.push(DmsRecord {
                position: p,
                wildtype: wt,
                mutant: aa,
                fitness: f(matrix.rows()[r][aa.index()]),
            });
        }
    }
    let mut sorted: Vec<f64> = records.iter().map(|r| r.fitness).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    DmsAssay {
        id: "synthetic".into(),
        wildtype: matrix.wildtype().to_vec(),
        records,
        wt_reference: median,
        taxon: Taxon::Unknown,
    }
}
