//! Immutable heterogeneous citation graph: papers, authors and
//! institutions joined by three edge types, each stored as a forward and a
//! reverse CSR.
//!
//! Node ids are `u32` per node type, which bounds a single graph at
//! 2^32 - 1 nodes of each type.

mod csr;
mod io;
mod synth;

use std::collections::HashMap;

use log::warn;

pub use csr::{build_csr, Csr};
pub use io::{load_dir, write_dir};
pub use synth::{synth_mag, SynthMagConfig};

use crate::error::{Error, Result};
use crate::pfgm::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum NodeType {
    Paper = 0,
    Author = 1,
    Institution = 2,
}

impl NodeType {
    pub const ALL: [NodeType; 3] = [NodeType::Paper, NodeType::Author, NodeType::Institution];

    pub fn code(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EdgeType {
    /// paper -> cited paper
    Cites = 0,
    /// author -> written paper
    Writes = 1,
    /// author -> institution
    AffiliatedWith = 2,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::Cites, EdgeType::Writes, EdgeType::AffiliatedWith];

    pub fn src(self) -> NodeType {
        match self {
            EdgeType::Cites => NodeType::Paper,
            EdgeType::Writes | EdgeType::AffiliatedWith => NodeType::Author,
        }
    }

    pub fn dst(self) -> NodeType {
        match self {
            EdgeType::Cites | EdgeType::Writes => NodeType::Paper,
            EdgeType::AffiliatedWith => NodeType::Institution,
        }
    }
}

/// Raw edge lists, one per edge type, as `(src, dst)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeSets {
    pub cites: Vec<(u32, u32)>,
    pub writes: Vec<(u32, u32)>,
    pub affiliated: Vec<(u32, u32)>,
}

impl EdgeSets {
    pub fn get(&self, et: EdgeType) -> &[(u32, u32)] {
        match et {
            EdgeType::Cites => &self.cites,
            EdgeType::Writes => &self.writes,
            EdgeType::AffiliatedWith => &self.affiliated,
        }
    }
}

/// Everything needed to assemble a [`HeteroGraph`], before duplicate fusion.
#[derive(Debug, Clone)]
pub struct GraphParts {
    pub num_authors: usize,
    pub num_institutions: usize,
    pub num_classes: usize,
    /// One row per paper.
    pub features: Matrix,
    pub years: Vec<i32>,
    /// `-1` marks an unlabelled paper.
    pub labels: Vec<i32>,
    pub edges: EdgeSets,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    counts: [usize; 3],
    forward: [Csr; 3],
    reverse: [Csr; 3],
    features: Matrix,
    years: Vec<i32>,
    labels: Vec<i32>,
    num_classes: usize,
    fusion: Vec<u32>,
}

/// Maps every paper to the lowest id whose feature row is bitwise identical.
pub fn fusion_map(features: &Matrix) -> Vec<u32> {
    let mut first: HashMap<Vec<u32>, u32> = HashMap::with_capacity(features.rows);
    (0..features.rows)
        .map(|i| {
            let key: Vec<u32> = features.row(i).iter().map(|x| x.to_bits()).collect();
            *first.entry(key).or_insert(i as u32)
        })
        .collect()
}

/// Fuses duplicated papers (bitwise-identical feature rows) onto their
/// lowest id. Paper endpoints are remapped, citation self-loops created by
/// fusion are dropped and parallel edges are collapsed.
pub fn fuse_duplicates(features: &Matrix, edges: &EdgeSets) -> (Vec<u32>, EdgeSets) {
    let map = fusion_map(features);
    let canon = |p: u32| map[p as usize];
    let dedup = |mut v: Vec<(u32, u32)>| {
        v.sort_unstable();
        v.dedup();
        v
    };
    let cites = dedup(
        edges
            .cites
            .iter()
            .map(|&(s, d)| (canon(s), canon(d)))
            .filter(|(s, d)| s != d)
            .collect(),
    );
    let writes = dedup(edges.writes.iter().map(|&(a, p)| (a, canon(p))).collect());
    let affiliated = dedup(edges.affiliated.clone());
    (map, EdgeSets { cites, writes, affiliated })
}

impl HeteroGraph {
    /// Validates `parts`, fuses duplicate papers and materialises forward
    /// and reverse adjacency for every edge type.
    pub fn new(parts: GraphParts) -> Result<Self> {
        let num_papers = parts.features.rows;
        if parts.years.len() != num_papers || parts.labels.len() != num_papers {
            return Err(Error::input(format!(
                "{num_papers} feature rows but {} years and {} labels",
                parts.years.len(),
                parts.labels.len()
            )));
        }
        for (i, &l) in parts.labels.iter().enumerate() {
            if l < -1 || l >= parts.num_classes as i32 {
                return Err(Error::input(format!("paper {i} has label {l} outside [0, {})", parts.num_classes)));
            }
        }
        let counts = [num_papers, parts.num_authors, parts.num_institutions];
        let (fusion, fused) = fuse_duplicates(&parts.features, &parts.edges);
        for (i, &c) in fusion.iter().enumerate() {
            let c = c as usize;
            if c != i && (parts.years[c] != parts.years[i] || parts.labels[c] != parts.labels[i]) {
                warn!(
                    "fused paper {i} disagrees with canonical {c} (year {} vs {}, label {} vs {}); keeping canonical",
                    parts.years[i], parts.years[c], parts.labels[i], parts.labels[c]
                );
            }
        }
        let mut forward: [Csr; 3] = Default::default();
        let mut reverse: [Csr; 3] = Default::default();
        for et in EdgeType::ALL {
            let (ns, nd) = (counts[et.src().code()], counts[et.dst().code()]);
            let f = build_csr(fused.get(et), ns, nd)?;
            reverse[et as usize] = f.transpose();
            forward[et as usize] = f;
        }
        Ok(HeteroGraph {
            counts,
            forward,
            reverse,
            features: parts.features,
            years: parts.years,
            labels: parts.labels,
            num_classes: parts.num_classes,
            fusion,
        })
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.counts[t.code()]
    }

    pub fn num_papers(&self) -> usize {
        self.counts[0]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Adjacency indexed by the edge type's source.
    pub fn forward(&self, et: EdgeType) -> &Csr {
        &self.forward[et as usize]
    }

    /// Adjacency indexed by the edge type's destination.
    pub fn reverse(&self, et: EdgeType) -> &Csr {
        &self.reverse[et as usize]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn year(&self, paper: u32) -> i32 {
        self.years[paper as usize]
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    /// Stored label of the paper, `None` when unlabelled.
    pub fn label(&self, paper: u32) -> Option<usize> {
        let l = self.labels[paper as usize];
        (l >= 0).then_some(l as usize)
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn fusion(&self) -> &[u32] {
        &self.fusion
    }

    pub fn canonical(&self, paper: u32) -> u32 {
        self.fusion[paper as usize]
    }

    pub fn is_canonical(&self, paper: u32) -> bool {
        (paper as usize) < self.counts[0] && self.fusion[paper as usize] == paper
    }

    /// Copy of the graph with one paper's stored label replaced.
    pub fn with_label(&self, paper: u32, label: i32) -> Result<Self> {
        if label < -1 || label >= self.num_classes as i32 || paper as usize >= self.num_papers() {
            return Err(Error::input(format!("cannot set label {label} on paper {paper}")));
        }
        let mut g = self.clone();
        g.labels[paper as usize] = label;
        Ok(g)
    }

    /// Fused edge lists, recovered from the forward adjacency.
    pub fn edge_sets(&self) -> EdgeSets {
        EdgeSets {
            cites: self.forward(EdgeType::Cites).expand(),
            writes: self.forward(EdgeType::Writes).expand(),
            affiliated: self.forward(EdgeType::AffiliatedWith).expand(),
        }
    }

    /// Parts that reproduce this graph when passed to [`HeteroGraph::new`].
    pub fn to_parts(&self) -> GraphParts {
        GraphParts {
            num_authors: self.counts[1],
            num_institutions: self.counts[2],
            num_classes: self.num_classes,
            features: self.features.clone(),
            years: self.years.clone(),
            labels: self.labels.clone(),
            edges: self.edge_sets(),
        }
    }
}
