use super::*;

fn adjacency(m: &Molecule) -> Vec<Vec<Option<u8>>> {
    let n = m.num_atoms();
    let mut a = vec![vec![None; n]; n];
    for b in &m.bonds {
        a[b.a as usize][b.b as usize] = Some(b.order);
        a[b.b as usize][b.a as usize] = Some(b.order);
    }
    a
}

/// Backtracking search for a label- and order-preserving bijection.
fn isomorphic(x: &Molecule, y: &Molecule) -> bool {
    if x.num_atoms() != y.num_atoms() || x.num_bonds() != y.num_bonds() {
        return false;
    }
    let (ax, ay) = (adjacency(x), adjacency(y));
    let label = |m: &Molecule, i: usize| (m.atoms[i].element, m.atoms[i].charge);
    fn extend(i: usize, map: &mut Vec<usize>, used: &mut [bool], ax: &[Vec<Option<u8>>], ay: &[Vec<Option<u8>>], ok: &dyn Fn(usize, usize) -> bool) -> bool {
        if i == ax.len() {
            return true;
        }
        for j in 0..ay.len() {
            if used[j] || !ok(i, j) || (0..i).any(|p| ax[i][p] != ay[j][map[p]]) {
                continue;
            }
            used[j] = true;
            map.push(j);
            if extend(i + 1, map, used, ax, ay, ok) {
                return true;
            }
            map.pop();
            used[j] = false;
        }
        false
    }
    let ok = |i: usize, j: usize| label(x, i) == label(y, j);
    extend(0, &mut Vec::new(), &mut vec![false; y.num_atoms()], &ax, &ay, &ok)
}

fn bond_set(m: &Molecule) -> Vec<(u32, u32, u8)> {
    let mut v: Vec<_> = m.bonds.iter().map(|b| (b.a.min(b.b), b.a.max(b.b), b.order)).collect();
    v.sort();
    v
}

fn parse_err_offset(s: &str) -> usize {
    match parse_smiles(s) {
        Err(Error::Parse { offset, .. }) => offset,
        other => panic!("{s}: expected parse error, got {other:?}"),
    }
}

#[test]
fn smallest_examples() {
    let m = parse_smiles("C").unwrap();
    assert_eq!((m.num_atoms(), m.num_bonds()), (1, 0));
    let m = parse_smiles("C1CC1").unwrap();
    assert_eq!((m.num_atoms(), m.num_bonds()), (3, 3));
    assert!(m.bonds.iter().all(|b| b.ring && b.order == 0));
    assert!(m.atoms.iter().all(|a| a.ring));
    assert_eq!(m.ring_count(), 1);
}

#[test]
fn acetic_acid_matches_hand_built_adjacency() {
    let m = parse_smiles("CC(=O)O").unwrap();
    let hand = Molecule::new(
        vec![Atom { element: 1, charge: 0, ring: false }, Atom { element: 1, charge: 0, ring: false }, Atom { element: 3, charge: 0, ring: false }, Atom { element: 3, charge: 0, ring: false }],
        vec![Bond { a: 0, b: 1, order: 0, ring: false }, Bond { a: 1, b: 2, order: 1, ring: false }, Bond { a: 1, b: 3, order: 0, ring: false }],
        None,
        None,
    )
    .unwrap();
    assert_eq!(m, hand);
    let mut orders: Vec<u8> = m.bonds.iter().map(|b| b.order + 1).collect();
    orders.sort();
    assert_eq!(orders, vec![1, 1, 2]);
}

#[test]
fn bracket_atoms_ring_numbers_and_two_letter_elements() {
    let m = parse_smiles("[NH4+]C[O-]").unwrap();
    assert_eq!(m.atoms.iter().map(|a| a.charge).collect::<Vec<_>>(), vec![1, 0, -1]);
    assert_eq!(parse_smiles("[O--]").unwrap().atoms[0].charge, -2);
    assert_eq!(parse_smiles("[S+2]").unwrap().atoms[0].charge, 2);
    let m = parse_smiles("ClCBr").unwrap();
    assert_eq!(m.atoms.iter().map(|a| a.element).collect::<Vec<_>>(), vec![7, 1, 8]);
    let m = parse_smiles("C%12CC=%12").unwrap();
    assert_eq!(m.bonds[2].order, 1);
    let m = parse_smiles("C#CC1CC=1").unwrap();
    assert_eq!(m.bonds[0].order, 2);
    assert!(!m.bonds[0].ring && !m.bonds[1].ring);
    assert!(m.bonds[2..].iter().all(|b| b.ring));
    assert_eq!(m.atoms.iter().map(|a| a.ring).collect::<Vec<_>>(), vec![false, false, true, true, true]);
}

#[test]
fn parse_errors_carry_byte_offsets() {
    assert_eq!(parse_err_offset("c1ccccc1"), 0);
    assert_eq!(parse_err_offset("CC(C"), 2);
    assert_eq!(parse_err_offset("CC)C"), 2);
    assert_eq!(parse_err_offset("C1CC"), 1);
    assert_eq!(parse_err_offset("CC="), 2);
    assert_eq!(parse_err_offset("C$C"), 1);
    assert_eq!(parse_err_offset("C.C"), 1);
    assert_eq!(parse_err_offset("C[Fe]"), 2);
    assert_eq!(parse_err_offset("C[C@H]"), 3);
    assert_eq!(parse_err_offset("C=1CC#1"), 6);
    assert_eq!(parse_err_offset("C11"), 2);
    assert_eq!(parse_err_offset("C12CC12"), 6);
    assert_eq!(parse_err_offset(""), 0);
    assert_eq!(parse_err_offset("=C"), 0);
    assert_eq!(parse_err_offset("C()"), 2);
    assert_eq!(parse_err_offset("Xe"), 0);
}

#[test]
fn features_geometry_and_layout() {
    let mut m = parse_smiles("CO").unwrap();
    m.coords = Some(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    let f = mol_features(&m);
    assert_eq!(f.edges.cols, EDGE_WIDTH_CONFORMER);
    assert_eq!(&f.edges.row(0)[EDGE_WIDTH..], &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(&f.edges.row(1)[EDGE_WIDTH..], &[-1.0, 0.0, 0.0, 1.0]);
    assert_eq!((f.src.clone(), f.dst.clone()), (vec![0, 1], vec![1, 0]));
    assert_eq!(f.nodes.row(1)[3], 1.0);
    assert_eq!(f.nodes.row(1)[ATOM_VOCAB + 1], 1.0);

    m.coords = None;
    let f = mol_features(&m);
    assert_eq!(f.edges.cols, EDGE_WIDTH);
    assert!(!f.has_conformer());
}

#[test]
fn conformer_distances_match_euclidean_norms() {
    let cfg = SynthMolConfig { count: 30, ..Default::default() };
    for m in synth_mol_dataset(&cfg, 5).unwrap() {
        let f = mol_features(&m);
        let c = m.coords.as_ref().unwrap();
        assert_eq!(f.edges.rows, 2 * m.num_bonds());
        for e in 0..f.edges.rows {
            let (s, d) = (f.src[e] as usize, f.dst[e] as usize);
            let norm = (0..3).map(|k| (c[d][k] - c[s][k]).powi(2)).sum::<f64>().sqrt();
            let row = f.edges.row(e);
            assert!((row[EDGE_WIDTH + 3] as f64 - norm).abs() < 1e-5);
            let pair = f.edges.row(e ^ 1);
            for k in 0..3 {
                assert_eq!(row[EDGE_WIDTH + k], -pair[EDGE_WIDTH + k]);
            }
            assert_eq!(row[EDGE_WIDTH + 3], pair[EDGE_WIDTH + 3]);
        }
    }
}

#[test]
fn writer_round_trip_is_isomorphic() {
    for s in ["C", "CC(=O)O", "C1CC1", "C1CC2CCC1C2", "[N+]#CC(C)(Cl)C=C[O-]", "C12C3C4C1C5C2C3C45", "OC(=O)C1=CC=CC=C1"] {
        let m = parse_smiles(s).unwrap();
        let (text, order) = to_smiles(&m).unwrap();
        let back = parse_smiles(&text).unwrap();
        assert!(isomorphic(&m, &back), "{s} -> {text}");
        assert_eq!(bond_set(&back), bond_set(&m.reordered(&order).unwrap()), "{s} -> {text}");
    }
    let cfg = SynthMolConfig { count: 200, min_atoms: 1, max_atoms: 12, conformer_fraction: 0.0, max_rings: 3 };
    for m in synth_mol_dataset(&cfg, 9).unwrap() {
        let (text, _) = to_smiles(&m).unwrap();
        let mut back = parse_smiles(&text).unwrap();
        back.target = m.target;
        assert!(isomorphic(&m, &back), "{text}");
        // synthetic molecules are stored in writer order
        assert_eq!(back, m);
    }
}

fn formula_oracle(m: &Molecule) -> f64 {
    let n = m.num_atoms() as f64;
    let rings = m.num_bonds() as f64 - n + 1.0;
    let hetero = m.atoms.iter().filter(|a| ELEMENTS[a.element as usize] != "C").count() as f64;
    let mut d = 1.45;
    if !m.bonds.is_empty() {
        let lens: Vec<f64> = m
            .bonds
            .iter()
            .map(|b| match &m.coords {
                Some(c) => {
                    let (p, q) = (c[b.a as usize], c[b.b as usize]);
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                }
                None => [1.50, 1.34, 1.20][b.order as usize],
            })
            .collect();
        d = lens.iter().sum::<f64>() / lens.len() as f64;
    }
    let z = 0.9 * rings - 0.45 * hetero + 0.12 * (n - 12.0) + 6.0 * (d - 1.45);
    20.0 * (1.0 / (1.0 + (-z).exp()))
}

#[test]
fn synthetic_dataset_properties() {
    let cfg = SynthMolConfig { count: 300, conformer_fraction: 0.5, ..Default::default() };
    let a = synth_mol_dataset(&cfg, 3).unwrap();
    assert_eq!(a, synth_mol_dataset(&cfg, 3).unwrap());
    assert_ne!(a, synth_mol_dataset(&cfg, 4).unwrap());
    let with = a.iter().filter(|m| m.coords.is_some()).count();
    assert!((100..200).contains(&with), "{with}");
    for m in &a {
        let t = m.target.unwrap();
        assert!((0.0..=20.0).contains(&t));
        assert!((t - formula_oracle(m)).abs() < 1e-9);
        assert!((cfg.min_atoms..=cfg.max_atoms).contains(&m.num_atoms()));
        to_smiles(m).unwrap();
    }
    let none = synth_mol_dataset(&SynthMolConfig { count: 50, conformer_fraction: 0.0, ..Default::default() }, 1).unwrap();
    assert!(none.iter().all(|m| m.coords.is_none()));
    assert!(synth_mol_dataset(&SynthMolConfig { count: 0, ..Default::default() }, 1).is_err());
    let targets: Vec<f64> = a.iter().map(|m| m.target.unwrap()).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let sd = (targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / targets.len() as f64).sqrt();
    assert!(sd > 1.0, "target spread too small: {sd}");
}

#[test]
fn dataset_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mols.tsv");
    let cfg = SynthMolConfig { count: 40, conformer_fraction: 0.5, ..Default::default() };
    let mut recs: Vec<MolRecord> = synth_mol_dataset(&cfg, 2).unwrap().into_iter().enumerate().map(|(i, mol)| MolRecord { id: format!("m{i}"), mol }).collect();
    recs[0].mol.target = None;
    write_dataset(&path, &recs).unwrap();
    assert_eq!(read_dataset(&path).unwrap(), recs);
    std::fs::write(&path, "a\tCC\tNA\tNA\nb\tC(\t1.0\tNA\n").unwrap();
    let err = read_dataset(&path).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");
    std::fs::write(&path, "a\tCC\tNA\t0,0,0\n").unwrap();
    assert!(read_dataset(&path).is_err());
}

#[test]
fn invalid_molecules_rejected() {
    let a = Atom { element: 1, charge: 0, ring: false };
    assert!(Molecule::new(vec![a], vec![Bond { a: 0, b: 1, order: 0, ring: false }], None, None).is_err());
    assert!(Molecule::new(vec![a, a], vec![Bond { a: 0, b: 1, order: 3, ring: false }], None, None).is_err());
    assert!(Molecule::new(vec![a], vec![], Some(vec![[f64::NAN, 0.0, 0.0]]), None).is_err());
    let m = Molecule::new(vec![a, a], vec![], None, None).unwrap();
    assert!(to_smiles(&m).is_err());
}
