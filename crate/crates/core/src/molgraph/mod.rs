//! Molecules, a kekulized SMILES subset, molecular input features and a
//! synthetic molecule generator.
//!
//! Atom features are an element one-hot over [`ELEMENTS`], formal charge,
//! degree and a ring flag. Edge features are a bond-order one-hot and a ring
//! flag, followed by the displacement `x_dst - x_src` and its norm when the
//! molecule carries a conformer. Each bond contributes two directed edges,
//! `2k: i -> j` and `2k + 1: j -> i`.

mod io;
mod smiles;
mod synth;

pub use io::{read_dataset, write_dataset, MolRecord};
pub use smiles::{parse_smiles, to_smiles};
pub use synth::{synth_mol_dataset, synthetic_target, SynthMolConfig, NOMINAL_BOND_LENGTH};

use crate::error::{Error, Result};
use crate::pfgm::Matrix;
use crate::processors::GraphItem;

/// Element vocabulary; atom types are indices into this table.
pub const ELEMENTS: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
pub const ATOM_VOCAB: usize = ELEMENTS.len();
/// Single, double, triple.
pub const BOND_VOCAB: usize = 3;
pub const NODE_WIDTH: usize = ATOM_VOCAB + 3;
pub const EDGE_WIDTH: usize = BOND_VOCAB + 1;
pub const EDGE_WIDTH_CONFORMER: usize = EDGE_WIDTH + 4;

pub fn element_index(symbol: &str) -> Option<u8> {
    ELEMENTS.iter().position(|&e| e == symbol).map(|i| i as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Atom {
    pub element: u8,
    pub charge: i8,
    pub ring: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: u32,
    pub b: u32,
    /// 0 single, 1 double, 2 triple.
    pub order: u8,
    pub ring: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub coords: Option<Vec<[f64; 3]>>,
    pub target: Option<f64>,
}

impl Molecule {
    /// Validates endpoints, vocabularies and coordinates, and recomputes
    /// ring flags.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>, coords: Option<Vec<[f64; 3]>>, target: Option<f64>) -> Result<Self> {
        let n = atoms.len() as u32;
        if let Some(a) = atoms.iter().find(|a| a.element as usize >= ATOM_VOCAB) {
            return Err(Error::input(format!("element code {} outside vocabulary", a.element)));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &bonds {
            if b.a >= n || b.b >= n || b.a == b.b {
                return Err(Error::input(format!("bond ({}, {}) invalid for {n} atoms", b.a, b.b)));
            }
            if b.order as usize >= BOND_VOCAB {
                return Err(Error::input(format!("bond order code {} outside vocabulary", b.order)));
            }
            if !seen.insert((b.a.min(b.b), b.a.max(b.b))) {
                return Err(Error::input(format!("duplicate bond ({}, {})", b.a, b.b)));
            }
        }
        if let Some(c) = &coords {
            if c.len() != atoms.len() {
                return Err(Error::input(format!("{} coordinates for {n} atoms", c.len())));
            }
            if c.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::input("non-finite coordinates"));
            }
        }
        let mut m = Molecule { atoms, bonds, coords, target };
        m.assign_ring_flags();
        Ok(m)
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.atoms.len()];
        for b in &self.bonds {
            d[b.a as usize] += 1;
            d[b.b as usize] += 1;
        }
        d
    }

    /// `(src, dst)` of the directed edges, two per bond.
    pub fn directed_edges(&self) -> (Vec<u32>, Vec<u32>) {
        let mut src = Vec::with_capacity(2 * self.bonds.len());
        let mut dst = Vec::with_capacity(2 * self.bonds.len());
        for b in &self.bonds {
            src.extend([b.a, b.b]);
            dst.extend([b.b, b.a]);
        }
        (src, dst)
    }

    /// A bond is in a ring iff it is not a bridge; an atom iff it touches a
    /// ring bond.
    fn assign_ring_flags(&mut self) {
        let n = self.atoms.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, b) in self.bonds.iter().enumerate() {
            adj[b.a as usize].push((b.b as usize, k));
            adj[b.b as usize].push((b.a as usize, k));
        }
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut bridge = vec![false; self.bonds.len()];
        let mut time = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (node, bond used to enter, next adjacency position)
            let mut stack = vec![(root, usize::MAX, 0usize)];
            disc[root] = time;
            low[root] = time;
            time += 1;
            while let Some(&mut (u, via, ref mut pos)) = stack.last_mut() {
                if *pos < adj[u].len() {
                    let (v, k) = adj[u][*pos];
                    *pos += 1;
                    if k == via {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = time;
                        low[v] = time;
                        time += 1;
                        stack.push((v, k, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            bridge[via] = true;
                        }
                    }
                }
            }
        }
        for a in &mut self.atoms {
            a.ring = false;
        }
        for (k, b) in self.bonds.iter_mut().enumerate() {
            b.ring = !bridge[k];
            if b.ring {
                self.atoms[b.a as usize].ring = true;
                self.atoms[b.b as usize].ring = true;
            }
        }
    }

    /// Number of independent cycles, `bonds - atoms + components`.
    pub fn ring_count(&self) -> usize {
        let n = self.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut comps = n;
        for b in &self.bonds {
            let (x, y) = (find(&mut parent, b.a as usize), find(&mut parent, b.b as usize));
            if x != y {
                parent[x] = y;
                comps -= 1;
            }
        }
        self.bonds.len() + comps - n
    }

    /// Returns a copy with atoms relabelled so that old atom `order[i]`
    /// becomes atom `i`.
    pub fn reordered(&self, order: &[u32]) -> Result<Molecule> {
        let n = self.atoms.len();
        if order.len() != n {
            return Err(Error::input(format!("order has {} entries for {n} atoms", order.len())));
        }
        let mut inv = vec![u32::MAX; n];
        for (i, &o) in order.iter().enumerate() {
            if o as usize >= n || inv[o as usize] != u32::MAX {
                return Err(Error::input("order is not a permutation"));
            }
            inv[o as usize] = i as u32;
        }
        let atoms = order.iter().map(|&o| self.atoms[o as usize]).collect();
        let bonds = self.bonds.iter().map(|b| Bond { a: inv[b.a as usize], b: inv[b.b as usize], ..*b }).collect();
        let coords = self.coords.as_ref().map(|c| order.iter().map(|&o| c[o as usize]).collect());
        Molecule::new(atoms, bonds, coords, self.target)
    }
}

/// Node and directed-edge feature matrices of one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct MolFeatures {
    pub nodes: Matrix,
    pub edges: Matrix,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
}

impl MolFeatures {
    pub fn item(&self) -> GraphItem<'_> {
        GraphItem { node_x: &self.nodes, edge_x: &self.edges, src: &self.src, dst: &self.dst, central: 0 }
    }

    pub fn has_conformer(&self) -> bool {
        self.edges.cols == EDGE_WIDTH_CONFORMER
    }
}

pub fn mol_features(m: &Molecule) -> MolFeatures {
    let n = m.atoms.len();
    let deg = m.degrees();
    let mut nodes = vec![0.0f32; n * NODE_WIDTH];
    for (i, a) in m.atoms.iter().enumerate() {
        let row = &mut nodes[i * NODE_WIDTH..(i + 1) * NODE_WIDTH];
        row[a.element as usize] = 1.0;
        row[ATOM_VOCAB] = a.charge as f32;
        row[ATOM_VOCAB + 1] = deg[i] as f32;
        row[ATOM_VOCAB + 2] = a.ring as u8 as f32;
    }
    let width = if m.coords.is_some() { EDGE_WIDTH_CONFORMER } else { EDGE_WIDTH };
    let (src, dst) = m.directed_edges();
    let mut edges = vec![0.0f32; src.len() * width];
    for (e, (&s, &d)) in src.iter().zip(&dst).enumerate() {
        let b = &m.bonds[e / 2];
        let row = &mut edges[e * width..(e + 1) * width];
        row[b.order as usize] = 1.0;
        row[BOND_VOCAB] = b.ring as u8 as f32;
        if let Some(c) = &m.coords {
            let disp: Vec<f64> = (0..3).map(|k| c[d as usize][k] - c[s as usize][k]).collect();
            for k in 0..3 {
                row[EDGE_WIDTH + k] = disp[k] as f32;
            }
            row[EDGE_WIDTH + 3] = disp.iter().map(|v| v * v).sum::<f64>().sqrt() as f32;
        }
    }
    MolFeatures {
        nodes: Matrix::new(n, NODE_WIDTH, nodes).expect("sized"),
        edges: Matrix::new(src.len(), width, edges).expect("sized"),
        src,
        dst,
    }
}

#[cfg(test)]
mod tests;
