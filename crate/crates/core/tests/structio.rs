use std::collections::{BTreeSet, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varscore::structio::*;

const FRAGMENT: &str = include_str!("data/fragment10.pdb");

/// Independent count: ATOM lines of standard residues, excluding hydrogens
/// and repeated (chain, residue, atom name) keys from alternate locations.
fn count_atom_lines(text: &str) -> usize {
    let mut seen = HashSet::new();
    text.lines()
        .filter(|l| l.starts_with("ATOM  "))
        .filter(|l| l[76..78].trim() != "H")
        .filter(|l| seen.insert((l[21..22].to_string(), l[22..27].to_string(), l[12..16].trim().to_string())))
        .count()
}

#[test]
fn fragment_atom_count_matches_line_count() {
    let atoms = parse_structure(FRAGMENT.as_bytes(), StructureFormat::Pdb).unwrap();
    assert_eq!(atoms.len(), count_atom_lines(FRAGMENT));
    let residues: BTreeSet<Position> = atoms.iter().map(|a| a.residue_index).collect();
    assert_eq!(residues, (1..=10).collect());
    let seq: String = (1..=10)
        .map(|i| atoms.iter().find(|a| a.residue_index == i).unwrap().residue_type.code())
        .collect();
    assert_eq!(seq, "MKTAYIAGLS");
}

#[test]
fn fragment_graph_and_masks() {
    let atoms = parse_structure(FRAGMENT.as_bytes(), StructureFormat::Pdb).unwrap();
    let g = build_atomic_graph(atoms.clone(), DEFAULT_CUTOFF).unwrap();
    assert_eq!(g.ca_map.len(), 10);
    for (&i, &node) in &g.ca_map {
        assert_eq!(g.atoms[node].residue_index, i);
        assert_eq!(g.atoms[node].name, "CA");
    }
    for pos in 1..=10 {
        let m = mask_residue(&g, pos).unwrap();
        let side = atoms.iter().filter(|a| a.residue_index == pos && !is_backbone(&a.name)).count();
        assert_eq!(m.base.atoms.len(), atoms.len() - side);
        let others: Vec<&Atom> = atoms.iter().filter(|a| a.residue_index != pos).collect();
        let kept: Vec<&Atom> = m.base.atoms.iter().filter(|a| a.residue_index != pos).collect();
        assert_eq!(others, kept);
    }
    let gly = mask_residue(&g, 8).unwrap();
    assert_eq!(gly.base.atoms, g.atoms);
    let ala = mask_residue(&g, 4).unwrap();
    let names: BTreeSet<&str> = ala.base.atoms.iter().filter(|a| a.residue_index == 4).map(|a| a.name.as_str()).collect();
    assert_eq!(names, BTreeSet::from(["N", "CA", "C", "O"]));
}

#[test]
fn write_then_parse_preserves_atoms() {
    let atoms = parse_structure(FRAGMENT.as_bytes(), StructureFormat::Pdb).unwrap();
    let again = parse_structure(write_pdb(&atoms).as_bytes(), StructureFormat::Pdb).unwrap();
    assert_eq!(atoms, again);
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, side: f64) -> Vec<Atom> {
    (0..n)
        .map(|i| Atom {
            element: "C".into(),
            name: if i % 4 == 0 { "CA".into() } else { "CB".into() },
            coords: [rng.gen_range(0.0..side), rng.gen_range(0.0..side), rng.gen_range(0.0..side)],
            residue_index: (i / 4) as Position + 1,
            chain_id: 'A',
            residue_type: AminoAcid::from_index(i % 20).unwrap(),
        })
        .collect()
}

fn pair_oracle(atoms: &[Atom], cutoff: f64) -> BTreeSet<(usize, usize)> {
    let mut out = BTreeSet::new();
    for i in 0..atoms.len() {
        for j in 0..atoms.len() {
            let d = atoms[i].coords.iter().zip(&atoms[j].coords).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if i != j && d < cutoff {
                out.insert((i, j));
            }
        }
    }
    out
}

#[test]
fn five_hundred_atoms_match_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let atoms = cloud(&mut rng, 500, 20.0);
    let g = build_atomic_graph(atoms.clone(), 4.5).unwrap();
    let got: BTreeSet<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
    assert_eq!(got.len(), g.edges.len());
    assert_eq!(got, pair_oracle(&atoms, 4.5));
}

#[test]
fn hundred_random_clouds_match_all_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let n = rng.gen_range(1..300);
        let side = rng.gen_range(3.0..25.0);
        let atoms = cloud(&mut rng, n, side);
        let g = build_atomic_graph(atoms.clone(), DEFAULT_CUTOFF).unwrap();
        let got: BTreeSet<(usize, usize)> = g.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(got, pair_oracle(&atoms, DEFAULT_CUTOFF));
        assert!(g.edges.iter().all(|e| e.distance < DEFAULT_CUTOFF));
    }
}

#[test]
fn local_environment_matches_distance_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let atoms = cloud(&mut rng, 400, 24.0);
    let g = build_atomic_graph(atoms.clone(), DEFAULT_CUTOFF).unwrap();
    for pos in [1, 17, 60] {
        let center = g.atoms[g.ca_node(pos).unwrap()].coords;
        let env = extract_local_environment(&g, pos, 8.0).unwrap();
        let expected: Vec<&Atom> = atoms.iter().filter(|a| distance(&a.coords, &center) <= 8.0).collect();
        assert_eq!(env.atoms.iter().collect::<Vec<_>>(), expected);
        assert!(env.ca_map.keys().all(|p| g.ca_map.contains_key(p)));
    }
    let whole = extract_local_environment(&g, 1, g.diameter() + 1.0).unwrap();
    assert_eq!(whole.atoms, g.atoms);
    assert_eq!(whole.edges, g.edges);
    let tiny = extract_local_environment(&g, 1, 0.1).unwrap();
    assert_eq!(tiny.atoms.len(), 1);
    assert!(tiny.atoms[0].is_ca());
}

#[test]
fn threshold_is_strict() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut atoms = cloud(&mut rng, 2, 1.0);
    atoms[0].coords = [0.0, 0.0, 0.0];
    atoms[1].coords = [4.5, 0.0, 0.0];
    assert!(build_atomic_graph(atoms.clone(), 4.5).unwrap().edges.is_empty());
    atoms[1].coords = [3.0, 0.0, 0.0];
    assert_eq!(build_atomic_graph(atoms, 4.5).unwrap().edges.len(), 2);
}

#[test]
fn unknown_position_is_an_error() {
    let atoms = parse_structure(FRAGMENT.as_bytes(), StructureFormat::Pdb).unwrap();
    let g = build_atomic_graph(atoms, DEFAULT_CUTOFF).unwrap();
    assert!(matches!(mask_residue(&g, 42), Err(StructError::UnknownPosition(42))));
    assert!(matches!(extract_local_environment(&g, 42, 5.0), Err(StructError::UnknownPosition(42))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ca_map_round_trips(seed in 0u64..1000, n in 4usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = build_atomic_graph(cloud(&mut rng, n, 15.0), DEFAULT_CUTOFF).unwrap();
        for (&i, &node) in &g.ca_map {
            prop_assert_eq!(g.atoms[node].residue_index, i);
        }
    }
}
