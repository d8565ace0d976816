//! Synthetic residue-identity dataset.
//!
//! Each sample is a small masked environment around a target Cα. The label
//! is fixed by which non-backbone N, O and S atoms lie within 4.5 Å of the
//! target Cα: every multiset of at most three atoms drawn from {N, O, S}
//! (1 + 3 + 6 + 10 = 20 of them) names one amino acid. Carbon atoms inside
//! the shell and heteroatoms further than 5.5 Å away are distractors. Every
//! sample is rigidly moved by a random rotation and translation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::structio::{build_atomic_graph_for_chain, mask_residue, AminoAcid, Atom, MaskedGraph, DEFAULT_CUTOFF};

const TARGET_RESIDUE: i32 = 10;
const MARKER_ELEMENTS: [&str; 3] = ["N", "O", "S"];

/// Marker counts (N, O, S) for each label index.
pub fn label_composition(label: AminoAcid) -> [usize; 3] {
    composition_table()[label.index()]
}

fn composition_table() -> [[usize; 3]; 20] {
    let mut table = [[0; 3]; 20];
    let mut k = 0;
    for total in 0..=3usize {
        for n in (0..=total).rev() {
            for o in (0..=total - n).rev() {
                table[k] = [n, o, total - n - o];
                k += 1;
            }
        }
    }
    table
}

/// Recovers the label from geometry alone: counts non-backbone N, O and S
/// atoms within 4.5 Å of the target Cα and looks the counts up in the table.
pub fn decode_label(masked: &MaskedGraph) -> Option<AminoAcid> {
    let atoms = &masked.base.atoms;
    let center = atoms.get(masked.target_node)?.coords;
    let mut counts = [0usize; 3];
    for a in atoms {
        if a.is_backbone() || crate::structio::distance(&a.coords, &center) >= DEFAULT_CUTOFF {
            continue;
        }
        if let Some(k) = MARKER_ELEMENTS.iter().position(|e| *e == a.element) {
            counts[k] += 1;
        }
    }
    composition_table()
        .iter()
        .position(|c| *c == counts)
        .and_then(AminoAcid::from_index)
}

/// Uniformly distributed rotation matrix.
pub fn random_rotation<R: Rng>(rng: &mut R) -> [[f64; 3]; 3] {
    let mut q: [f64; 4] = [0.0; 4];
    loop {
        for x in q.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
        let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.iter_mut().for_each(|x| *x /= norm);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn apply_rigid(rot: &[[f64; 3]; 3], shift: &[f64; 3], p: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (r, o) in out.iter_mut().enumerate() {
        *o = rot[r][0] * p[0] + rot[r][1] * p[1] + rot[r][2] * p[2] + shift[r];
    }
    out
}

fn random_direction<R: Rng>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

struct Builder {
    atoms: Vec<Atom>,
    next_residue: i32,
}

impl Builder {
    fn push(&mut self, element: &str, name: &str, residue: i32, aa: char, coords: [f64; 3]) {
        self.atoms.push(Atom {
            element: element.into(),
            name: name.into(),
            coords,
            residue_index: residue,
            chain_id: 'A',
            residue_type: AminoAcid::from_code(aa).expect("canonical code"),
        });
    }

    fn clear_of_others(&self, p: &[f64; 3], min_sep: f64) -> bool {
        self.atoms.iter().all(|a| crate::structio::distance(&a.coords, p) >= min_sep)
    }

    /// Places an atom in the shell [r_min, r_max] around the origin.
    fn place_in_shell<R: Rng>(&mut self, rng: &mut R, element: &str, name: &str, aa: char, r_min: f64, r_max: f64) {
        let residue = self.next_residue;
        self.next_residue += 1;
        let mut last = [r_max, 0.0, 0.0];
        for _ in 0..200 {
            let r = rng.gen_range(r_min..r_max);
            let d = random_direction(rng);
            last = [d[0] * r, d[1] * r, d[2] * r];
            if self.clear_of_others(&last, 2.0) {
                break;
            }
        }
        self.push(element, name, residue, aa, last);
    }
}

fn jitter<R: Rng>(rng: &mut R, p: [f64; 3]) -> [f64; 3] {
    [
        p[0] + rng.gen_range(-0.05..0.05),
        p[1] + rng.gen_range(-0.05..0.05),
        p[2] + rng.gen_range(-0.05..0.05),
    ]
}

fn sample<R: Rng>(rng: &mut R, label: AminoAcid) -> MaskedGraph {
    let mut b = Builder {
        atoms: Vec::with_capacity(20),
        next_residue: 20,
    };
    let code = label.code();
    // target backbone around a Cα at the origin, flanked by peptide neighbours
    b.push("N", "N", TARGET_RESIDUE, code, jitter(rng, [-0.53, 1.36, 0.0]));
    b.push("C", "CA", TARGET_RESIDUE, code, [0.0, 0.0, 0.0]);
    b.push("C", "C", TARGET_RESIDUE, code, jitter(rng, [1.52, 0.0, 0.0]));
    b.push("O", "O", TARGET_RESIDUE, code, jitter(rng, [2.15, -1.05, 0.0]));
    b.push("C", "C", TARGET_RESIDUE - 1, 'G', jitter(rng, [-1.8, 1.75, 0.0]));
    b.push("O", "O", TARGET_RESIDUE - 1, 'G', jitter(rng, [-2.7, 0.9, 0.0]));
    b.push("N", "N", TARGET_RESIDUE + 1, 'G', jitter(rng, [2.15, 1.18, 0.0]));
    b.push("C", "CA", TARGET_RESIDUE + 1, 'G', jitter(rng, [3.6, 1.3, 0.0]));

    let counts = label_composition(label);
    for (element, &count) in MARKER_ELEMENTS.iter().zip(&counts) {
        let (name, aa) = match *element {
            "N" => ("NZ", 'K'),
            "O" => ("OG", 'S'),
            _ => ("SD", 'M'),
        };
        for _ in 0..count {
            b.place_in_shell(rng, element, name, aa, 3.0, 4.0);
        }
    }
    for _ in 0..rng.gen_range(0..=2) {
        b.place_in_shell(rng, "C", "CD", 'L', 3.0, 4.0);
    }
    for _ in 0..rng.gen_range(2..=4) {
        let element = *["C", "N", "O", "S"].choose(rng).expect("non-empty");
        let name = format!("{element}X");
        b.place_in_shell(rng, element, &name, 'A', 5.5, 7.0);
    }

    let rot = random_rotation(rng);
    let shift = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
    for a in &mut b.atoms {
        a.coords = apply_rigid(&rot, &shift, &a.coords);
    }
    let graph = build_atomic_graph_for_chain(b.atoms, DEFAULT_CUTOFF, 'A').expect("synthetic graph is valid");
    mask_residue(&graph, TARGET_RESIDUE).expect("target residue present")
}

/// Generates `n_samples` masked environments, balanced across the 20 labels.
pub fn generate_synthetic_res(n_samples: usize, seed: u64) -> Vec<MaskedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n_samples).map(|i| i % AminoAcid::COUNT).collect();
    labels.shuffle(&mut rng);
    labels
        .into_iter()
        .map(|l| sample(&mut rng, AminoAcid::from_index(l).expect("label < 20")))
        .collect()
}
