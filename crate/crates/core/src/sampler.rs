//! Rooted patch subsampling around a central paper.
//!
//! Fan-outs are upper bounds per (depth, relation). A neighbourhood `N` is
//! taken whole when `|N| <= K`, subsampled without replacement when
//! `K < |N| <= 5K`, and sampled with replacement when `|N| > 5K`. Patches
//! reach depth two; edges point from each sampled neighbour to the node that
//! sampled it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};
use crate::hetgraph::{Csr, EdgeType, HeteroGraph, NodeType};
use crate::rng::Stream;

/// How a neighbour was reached from the node that sampled it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Relation {
    /// paper samples a paper it cites
    CitedPaper = 0,
    /// paper samples a paper citing it
    CitingPaper = 1,
    /// paper samples one of its authors
    AuthorOfPaper = 2,
    /// author samples a paper it wrote
    PaperOfAuthor = 3,
    /// author samples an institution it is affiliated with
    InstitutionOfAuthor = 4,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::CitedPaper,
        Relation::CitingPaper,
        Relation::AuthorOfPaper,
        Relation::PaperOfAuthor,
        Relation::InstitutionOfAuthor,
    ];

    pub fn sampler(self) -> NodeType {
        match self {
            Relation::CitedPaper | Relation::CitingPaper | Relation::AuthorOfPaper => NodeType::Paper,
            Relation::PaperOfAuthor | Relation::InstitutionOfAuthor => NodeType::Author,
        }
    }

    pub fn sampled(self) -> NodeType {
        match self {
            Relation::CitedPaper | Relation::CitingPaper | Relation::PaperOfAuthor => NodeType::Paper,
            Relation::AuthorOfPaper => NodeType::Author,
            Relation::InstitutionOfAuthor => NodeType::Institution,
        }
    }

    /// Adjacency whose row for the sampler lists candidate neighbours.
    pub fn adjacency(self, g: &HeteroGraph) -> &Csr {
        match self {
            Relation::CitedPaper => g.forward(EdgeType::Cites),
            Relation::CitingPaper => g.reverse(EdgeType::Cites),
            Relation::AuthorOfPaper => g.reverse(EdgeType::Writes),
            Relation::PaperOfAuthor => g.forward(EdgeType::Writes),
            Relation::InstitutionOfAuthor => g.forward(EdgeType::AffiliatedWith),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::CitedPaper => "cited",
            Relation::CitingPaper => "citing",
            Relation::AuthorOfPaper => "authors",
            Relation::PaperOfAuthor => "papers",
            Relation::InstitutionOfAuthor => "institutions",
        }
    }

    pub fn from_name(s: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.name() == s)
    }

    fn of(t: NodeType) -> &'static [Relation] {
        match t {
            NodeType::Paper => &[Relation::CitedPaper, Relation::CitingPaper, Relation::AuthorOfPaper],
            NodeType::Author => &[Relation::PaperOfAuthor, Relation::InstitutionOfAuthor],
            NodeType::Institution => &[],
        }
    }
}

/// Upper bounds `K` per (depth of the sampled node, relation). The relation
/// fixes the sampler's node type. Missing entries mean `K = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    bounds: BTreeMap<(u8, Relation), usize>,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan::uniform(40, 40, 20, 40, 10)
    }
}

impl SamplingPlan {
    pub fn empty() -> Self {
        SamplingPlan { bounds: BTreeMap::new() }
    }

    /// Same paper fan-outs at both depths, plus depth-2 author fan-outs.
    pub fn uniform(cited: usize, citing: usize, authors: usize, papers: usize, institutions: usize) -> Self {
        let mut p = SamplingPlan::empty();
        for depth in [1, 2] {
            p.set(depth, Relation::CitedPaper, cited);
            p.set(depth, Relation::CitingPaper, citing);
            p.set(depth, Relation::AuthorOfPaper, authors);
        }
        p.set(2, Relation::PaperOfAuthor, papers);
        p.set(2, Relation::InstitutionOfAuthor, institutions);
        p
    }

    pub fn set(&mut self, depth: u8, rel: Relation, k: usize) {
        self.bounds.insert((depth, rel), k);
    }

    pub fn get(&self, depth: u8, rel: Relation) -> usize {
        self.bounds.get(&(depth, rel)).copied().unwrap_or(0)
    }

    /// Largest patch this plan can produce on any graph.
    pub fn max_nodes(&self) -> usize {
        let d1: Vec<(NodeType, usize)> = Relation::of(NodeType::Paper)
            .iter()
            .map(|&r| (r.sampled(), self.get(1, r)))
            .collect();
        let mut total = 1;
        for (t, k) in d1 {
            total += k;
            let per: usize = Relation::of(t).iter().map(|&r| self.get(2, r)).sum();
            total += k * per;
        }
        total
    }

    /// Parses `depth<d>.<relation> = K` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = SamplingPlan::empty();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = || Error::Config(format!("plan line {}: expected 'depth<1|2>.<relation> = K', got '{line}'", i + 1));
            let (key, val) = line.split_once('=').ok_or_else(err)?;
            let (depth, rel) = key.trim().split_once('.').ok_or_else(err)?;
            let depth: u8 = depth.strip_prefix("depth").and_then(|d| d.parse().ok()).filter(|d| (1..=2).contains(d)).ok_or_else(err)?;
            let rel = Relation::from_name(rel).ok_or_else(|| {
                let known: Vec<&str> = Relation::ALL.iter().map(|r| r.name()).collect();
                Error::Config(format!("plan line {}: unknown relation '{rel}' (known: {})", i + 1, known.join(", ")))
            })?;
            let k: usize = val.trim().parse().map_err(|_| err())?;
            p.set(depth, rel, k);
        }
        Ok(p)
    }

    pub fn to_text(&self) -> String {
        self.bounds.iter().map(|((d, r), k)| format!("depth{d}.{} = {k}\n", r.name())).collect()
    }
}

/// Three-regime neighbour selection with upper bound `k`.
pub fn sample_neighbors<R: Rng + ?Sized>(neighborhood: &[u32], k: usize, rng: &mut R) -> Vec<u32> {
    let n = neighborhood.len();
    if k == 0 {
        return Vec::new();
    }
    if n <= k {
        return neighborhood.to_vec();
    }
    if n <= 5 * k {
        // Partial Fisher-Yates over the index range; only displaced slots
        // are stored.
        let mut moved: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = rng.random_range(i..n);
            let at_j = *moved.get(&j).unwrap_or(&j);
            let at_i = *moved.get(&i).unwrap_or(&i);
            moved.insert(j, at_i);
            out.push(neighborhood[at_j]);
        }
        return out;
    }
    (0..k).map(|_| neighborhood[rng.random_range(0..n)]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchNode {
    pub id: u32,
    pub node_type: NodeType,
    pub depth: u8,
}

/// Directed from the sampled neighbour (`src`) to the node that sampled it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchEdge {
    pub src: u32,
    pub dst: u32,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pub nodes: Vec<PatchNode>,
    pub edges: Vec<PatchEdge>,
    pub central: u32,
}

struct Builder {
    nodes: Vec<PatchNode>,
    index: HashMap<(NodeType, u32), u32>,
    edges: Vec<PatchEdge>,
    seen_edges: HashSet<PatchEdge>,
}

impl Builder {
    fn node(&mut self, node_type: NodeType, id: u32, depth: u8) -> u32 {
        let next = self.nodes.len() as u32;
        *self.index.entry((node_type, id)).or_insert_with(|| {
            self.nodes.push(PatchNode { id, node_type, depth });
            next
        })
    }

    fn edge(&mut self, e: PatchEdge) {
        if self.seen_edges.insert(e) {
            self.edges.push(e);
        }
    }

    fn expand<R: Rng + ?Sized>(&mut self, g: &HeteroGraph, sampler: u32, depth: u8, plan: &SamplingPlan, rng: &mut R) {
        let PatchNode { id, node_type, .. } = self.nodes[sampler as usize];
        for &rel in Relation::of(node_type) {
            let picked = sample_neighbors(rel.adjacency(g).neighbors(id), plan.get(depth, rel), rng);
            for nb in picked {
                let idx = self.node(rel.sampled(), nb, depth);
                self.edge(PatchEdge { src: idx, dst: sampler, relation: rel });
            }
        }
    }
}

/// Samples a depth-two patch around `center`. Re-sampled nodes are merged
/// into their existing patch node; the edge is still recorded, and exact
/// duplicate edges are collapsed.
pub fn sample_patch<R: Rng + ?Sized>(g: &HeteroGraph, center: u32, plan: &SamplingPlan, rng: &mut R) -> Result<Patch> {
    if center as usize >= g.num_papers() {
        return Err(Error::input(format!("center {center} is not a paper id (graph has {})", g.num_papers())));
    }
    if !g.is_canonical(center) {
        return Err(Error::input(format!("center {center} is a fused duplicate of {}", g.canonical(center))));
    }
    let mut b = Builder { nodes: Vec::new(), index: HashMap::new(), edges: Vec::new(), seen_edges: HashSet::new() };
    let root = b.node(NodeType::Paper, center, 0);
    b.expand(g, root, 1, plan, rng);
    let depth1: Vec<u32> = (0..b.nodes.len() as u32).filter(|&i| b.nodes[i as usize].depth == 1).collect();
    for i in depth1 {
        b.expand(g, i, 2, plan, rng);
    }
    Ok(Patch { nodes: b.nodes, edges: b.edges, central: root })
}

/// Substream for the patch around `center` in `epoch`.
pub fn patch_stream(seed: u64, epoch: u64, center: u32) -> Stream {
    Stream::root(seed).named("sampler").keyed(epoch).keyed(center as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchStats {
    pub nodes: usize,
    pub edges: usize,
    /// indexed by `NodeType::code()`
    pub per_type: [usize; 3],
}

pub fn patch_stats(p: &Patch) -> PatchStats {
    let mut per_type = [0; 3];
    for n in &p.nodes {
        per_type[n.node_type.code()] += 1;
    }
    PatchStats { nodes: p.nodes.len(), edges: p.edges.len(), per_type }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub patches: usize,
    pub elapsed: Duration,
    /// (bucket upper bound on node count, patches in bucket)
    pub node_histogram: Vec<(usize, usize)>,
    pub edge_histogram: Vec<(usize, usize)>,
}

impl BenchReport {
    pub fn patches_per_sec(&self) -> f64 {
        self.patches as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

fn histogram(values: &[usize]) -> Vec<(usize, usize)> {
    let mut buckets: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in values {
        *buckets.entry(v.max(1).next_power_of_two()).or_default() += 1;
    }
    buckets.into_iter().collect()
}

/// Samples patches around canonical papers in round-robin order for roughly
/// `duration`, single-threaded.
pub fn bench(g: &HeteroGraph, plan: &SamplingPlan, duration: Duration, seed: u64) -> Result<BenchReport> {
    let centers: Vec<u32> = (0..g.num_papers() as u32).filter(|&p| g.is_canonical(p)).collect();
    if centers.is_empty() {
        return Err(Error::input("graph has no papers to sample"));
    }
    let start = Instant::now();
    let (mut nodes, mut edges) = (Vec::new(), Vec::new());
    let mut i = 0usize;
    while start.elapsed() < duration || i == 0 {
        let c = centers[i % centers.len()];
        let p = sample_patch(g, c, plan, &mut patch_stream(seed, (i / centers.len()) as u64, c).rng())?;
        nodes.push(p.nodes.len());
        edges.push(p.edges.len());
        i += 1;
    }
    Ok(BenchReport { patches: i, elapsed: start.elapsed(), node_histogram: histogram(&nodes), edge_histogram: histogram(&edges) })
}
