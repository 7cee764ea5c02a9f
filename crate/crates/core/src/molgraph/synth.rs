use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{parse_smiles, to_smiles, Atom, Bond, Molecule};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Bond length by order code, used for synthetic conformers and for the
/// target's distance term when a molecule has no coordinates.
pub const NOMINAL_BOND_LENGTH: [f64; 3] = [1.50, 1.34, 1.20];

/// Sampling weights over the element vocabulary.
const ELEMENT_WEIGHTS: [f64; 10] = [0.01, 0.62, 0.13, 0.13, 0.01, 0.03, 0.03, 0.02, 0.01, 0.01];
const ORDER_WEIGHTS: [f64; 3] = [0.8, 0.16, 0.04];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMolConfig {
    pub count: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    /// Fraction of molecules carrying a conformer.
    pub conformer_fraction: f64,
    pub max_rings: usize,
}

impl Default for SynthMolConfig {
    fn default() -> Self {
        SynthMolConfig { count: 2000, min_atoms: 4, max_atoms: 20, conformer_fraction: 1.0, max_rings: 3 }
    }
}

fn weighted<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let mut x = rng.random::<f64>() * w.iter().sum::<f64>();
    for (i, &wi) in w.iter().enumerate() {
        if x < wi {
            return i;
        }
        x -= wi;
    }
    w.len() - 1
}

/// Target in eV:
/// `20 * sigmoid(0.9 * rings - 0.45 * hetero + 0.12 * (atoms - 12) + 6 * (d - 1.45))`,
/// where `hetero` counts non-carbon atoms and `d` is the mean bonded distance
/// (from coordinates when present, otherwise from [`NOMINAL_BOND_LENGTH`];
/// 1.45 for a molecule without bonds).
pub fn synthetic_target(m: &Molecule) -> f64 {
    let rings = m.ring_count() as f64;
    let hetero = m.atoms.iter().filter(|a| a.element != 1).count() as f64;
    let atoms = m.atoms.len() as f64;
    let d = if m.bonds.is_empty() {
        1.45
    } else {
        let total: f64 = m
            .bonds
            .iter()
            .map(|b| match &m.coords {
                Some(c) => {
                    let (p, q) = (c[b.a as usize], c[b.b as usize]);
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                }
                None => NOMINAL_BOND_LENGTH[b.order as usize],
            })
            .sum();
        total / m.bonds.len() as f64
    };
    let z = 0.9 * rings - 0.45 * hetero + 0.12 * (atoms - 12.0) + 6.0 * (d - 1.45);
    20.0 / (1.0 + (-z).exp())
}

fn one_molecule(cfg: &SynthMolConfig, stream: Stream) -> Result<Molecule> {
    let mut rng = stream.rng();
    let n = rng.random_range(cfg.min_atoms..=cfg.max_atoms);
    let atoms: Vec<Atom> = (0..n)
        .map(|_| {
            let element = weighted(&ELEMENT_WEIGHTS, &mut rng) as u8;
            // occasional N+ / O-
            let charge = match element {
                2 if rng.random::<f64>() < 0.03 => 1,
                3 if rng.random::<f64>() < 0.03 => -1,
                _ => 0,
            };
            Atom { element, charge, ring: false }
        })
        .collect();
    let mut degree = vec![0usize; n];
    let mut bonded = std::collections::HashSet::new();
    let mut bonds = Vec::new();
    let mut parent = vec![usize::MAX; n];
    for i in 1..n {
        // prefer attaching to atoms with spare valence
        let mut j = rng.random_range(0..i);
        for _ in 0..8 {
            if degree[j] < 3 {
                break;
            }
            j = rng.random_range(0..i);
        }
        parent[i] = j;
        bonds.push(Bond { a: j as u32, b: i as u32, order: weighted(&ORDER_WEIGHTS, &mut rng) as u8, ring: false });
        bonded.insert((j, i));
        degree[i] += 1;
        degree[j] += 1;
    }
    let rings = if n >= 3 { rng.random_range(0..=cfg.max_rings.min(n / 3)) } else { 0 };
    let mut added = 0;
    for _ in 0..50 * rings {
        if added == rings {
            break;
        }
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a == b || bonded.contains(&(a, b)) || parent[b] == a || degree[a] >= 4 || degree[b] >= 4 {
            continue;
        }
        bonded.insert((a, b));
        bonds.push(Bond { a: a as u32, b: b as u32, order: 0, ring: false });
        degree[a] += 1;
        degree[b] += 1;
        added += 1;
    }
    let coords = if rng.random::<f64>() < cfg.conformer_fraction {
        let mut c = vec![[0.0f64; 3]; n];
        for (k, b) in bonds.iter().enumerate().take(n.saturating_sub(1)) {
            debug_assert_eq!(k + 1, b.b as usize);
            let mut dir = [0.0f64; 3];
            for v in &mut dir {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            let len = NOMINAL_BOND_LENGTH[b.order as usize];
            let p = c[b.a as usize];
            c[b.b as usize] = [p[0] + len * dir[0] / norm, p[1] + len * dir[1] / norm, p[2] + len * dir[2] / norm];
        }
        Some(c)
    } else {
        None
    };
    let m = Molecule::new(atoms, bonds, coords, None)?;
    // Store atoms in writer order so that dataset files round-trip exactly.
    let (text, order) = to_smiles(&m)?;
    let parsed = parse_smiles(&text)?;
    let coords = m.coords.map(|c| order.iter().map(|&i| c[i as usize]).collect());
    let mut m = Molecule::new(parsed.atoms, parsed.bonds, coords, None)?;
    m.target = Some(synthetic_target(&m));
    Ok(m)
}

/// Random connected molecules within the SMILES subset, each with
/// [`synthetic_target`] as its target. Molecule `i` depends only on `seed`
/// and `i`.
pub fn synth_mol_dataset(cfg: &SynthMolConfig, seed: u64) -> Result<Vec<Molecule>> {
    if cfg.count == 0 {
        return Err(Error::input("molecule count must be >= 1"));
    }
    if cfg.min_atoms == 0 || cfg.min_atoms > cfg.max_atoms {
        return Err(Error::input(format!("invalid atom range {}..={}", cfg.min_atoms, cfg.max_atoms)));
    }
    if !(0.0..=1.0).contains(&cfg.conformer_fraction) {
        return Err(Error::input("conformer fraction must be in [0, 1]"));
    }
    let base = Stream::root(seed).named("synth-mol");
    (0..cfg.count).map(|i| one_molecule(cfg, base.keyed(i as u64))).collect()
}
