//! Input features for patches: PCA-compressed paper features, averaged
//! author and institution features, and the per-node / per-edge input
//! matrices.
//!
//! Node rows concatenate, in order: PCA block, node-type one-hot (3), depth
//! one-hot (3), publication-year bits (11, papers only), and a label block of
//! `num_classes` one-hot entries plus a presence bit. Edge rows are 7 bits:
//! the sampler's node type (3) and the sampled neighbour's group (4).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::hetgraph::{EdgeType, HeteroGraph, NodeType};
use crate::pfgm::{self, Matrix};
use crate::processors::GraphItem;
use crate::sampler::{Patch, Relation};

pub const YEAR_BITS: usize = 11;
pub const YEAR_ORIGIN: i32 = 1950;
pub const EDGE_WIDTH: usize = 7;

/// Unsigned binary of `clamp(year - 1950, 0, 2047)`, least significant bit first.
pub fn year_bits(year: i32) -> [u8; YEAR_BITS] {
    let v = (year - YEAR_ORIGIN).clamp(0, (1 << YEAR_BITS) - 1) as u32;
    let mut out = [0u8; YEAR_BITS];
    for (i, b) in out.iter_mut().enumerate() {
        *b = ((v >> i) & 1) as u8;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d_raw x d_out`, column `j` is the `j`-th principal direction.
    pub components: Vec<Vec<f64>>,
    pub ratios: Vec<f64>,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].partial_cmp(&m[i][i]).unwrap().then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

pub fn fit_pca(x: &Matrix, d_out: usize) -> Result<PcaModel> {
    let (n, d) = (x.rows, x.cols);
    if n < 2 {
        return Err(Error::input(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d_out > (n - 1).min(d) {
        return Err(Error::input(format!("d_out {d_out} exceeds min(rows - 1, cols) = {}", (n - 1).min(d))));
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0f64; d]; d];
    let mut centered = vec![0.0f64; d];
    for i in 0..n {
        for ((c, &v), &m) in centered.iter_mut().zip(x.row(i)).zip(&mean) {
            *c = v as f64 - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            for b in a..d {
                cov[a][b] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a][b] /= (n - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    let (values, mut vectors) = jacobi_eigen(&cov);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let ratios = values
        .iter()
        .take(d_out)
        .map(|&v| if total > 0.0 { (v.max(0.0) / total).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    vectors.truncate(d_out);
    vectors.iter_mut().for_each(|v| canonical_sign(v));
    let components = (0..d).map(|r| vectors.iter().map(|v| v[r]).collect()).collect();
    Ok(PcaModel { mean, components, ratios })
}

impl PcaModel {
    pub fn d_raw(&self) -> usize {
        self.mean.len()
    }

    pub fn d_out(&self) -> usize {
        self.ratios.len()
    }

    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.d_raw() {
            return Err(Error::shape("pca project", format!("{} columns, model expects {}", x.cols, self.d_raw())));
        }
        let k = self.d_out();
        let mut out = Vec::with_capacity(x.rows * k);
        for i in 0..x.rows {
            let row = x.row(i);
            for j in 0..k {
                let s: f64 = (0..self.d_raw()).map(|r| (row[r] as f64 - self.mean[r]) * self.components[r][j]).sum();
                out.push(s as f32);
            }
        }
        Matrix::new(x.rows, k, out)
    }

    /// Writes `mean.pfgm`, `components.pfgm`, `ratios.pfgm` and a one-line
    /// `pca.manifest`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (d, k) = (self.d_raw(), self.d_out());
        pfgm::write(&dir.join("mean.pfgm"), &Matrix::new(1, d, self.mean.iter().map(|&v| v as f32).collect())?)?;
        let comp = self.components.iter().flatten().map(|&v| v as f32).collect();
        pfgm::write(&dir.join("components.pfgm"), &Matrix::new(d, k, comp)?)?;
        pfgm::write(&dir.join("ratios.pfgm"), &Matrix::new(1, k, self.ratios.iter().map(|&v| v as f32).collect())?)?;
        let manifest = format!("pca d_raw={d} d_out={k} mean=mean.pfgm components=components.pfgm ratios=ratios.pfgm\n");
        let p = dir.join("pca.manifest");
        fs::write(&p, manifest).map_err(|e| Error::io(p, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join("pca.manifest");
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let mut files = std::collections::HashMap::new();
        for tok in text.split_whitespace().skip(1) {
            if let Some((k, v)) = tok.split_once('=') {
                files.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| files.get(k).cloned().ok_or_else(|| Error::format(&mpath, format!("missing '{k}'")));
        let mean = pfgm::read(&dir.join(get("mean")?))?;
        let comp = pfgm::read(&dir.join(get("components")?))?;
        let ratios = pfgm::read(&dir.join(get("ratios")?))?;
        if comp.rows != mean.cols || ratios.cols != comp.cols {
            return Err(Error::format(&mpath, "inconsistent PCA matrix shapes"));
        }
        Ok(PcaModel {
            mean: mean.data.iter().map(|&v| v as f64).collect(),
            components: (0..comp.rows).map(|r| comp.row(r).iter().map(|&v| v as f64).collect()).collect(),
            ratios: ratios.data.iter().map(|&v| v as f64).collect(),
        })
    }
}

/// Author rows average the PCA rows of their written papers; institution
/// rows average their affiliated authors' rows. Empty neighbourhoods give
/// zero rows.
pub fn derive_entity_features(g: &HeteroGraph, paper_pca: &Matrix) -> Result<(Matrix, Matrix)> {
    if paper_pca.rows != g.num_papers() {
        return Err(Error::shape("entity features", format!("{} PCA rows for {} papers", paper_pca.rows, g.num_papers())));
    }
    let mean_rows = |src: &Matrix, csr: &crate::hetgraph::Csr| -> Result<Matrix> {
        let k = src.cols;
        let mut out = vec![0.0f32; csr.num_rows() * k];
        for r in 0..csr.num_rows() {
            let nb = csr.neighbors(r as u32);
            if nb.is_empty() {
                continue;
            }
            let mut acc = vec![0.0f64; k];
            for &p in nb {
                for (a, &v) in acc.iter_mut().zip(src.row(p as usize)) {
                    *a += v as f64;
                }
            }
            for (o, a) in out[r * k..(r + 1) * k].iter_mut().zip(acc) {
                *o = (a / nb.len() as f64) as f32;
            }
        }
        Matrix::new(csr.num_rows(), k, out)
    };
    let authors = mean_rows(paper_pca, g.forward(EdgeType::Writes))?;
    let institutions = mean_rows(&authors, g.reverse(EdgeType::AffiliatedWith))?;
    Ok((authors, institutions))
}

/// Per-type input feature tables shared by all patches.
#[derive(Debug, Clone)]
pub struct FeatureTables {
    pub papers: Matrix,
    pub authors: Matrix,
    pub institutions: Matrix,
}

impl FeatureTables {
    pub fn build(g: &HeteroGraph, pca: &PcaModel) -> Result<Self> {
        let papers = pca.project(g.features())?;
        let (authors, institutions) = derive_entity_features(g, &papers)?;
        Ok(FeatureTables { papers, authors, institutions })
    }

    pub fn dim(&self) -> usize {
        self.papers.cols
    }

    fn row(&self, t: NodeType, id: u32) -> &[f32] {
        match t {
            NodeType::Paper => self.papers.row(id as usize),
            NodeType::Author => self.authors.row(id as usize),
            NodeType::Institution => self.institutions.row(id as usize),
        }
    }
}

/// Set of canonical paper ids whose labels may be used as input features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVisibility {
    visible: Vec<bool>,
}

impl LabelVisibility {
    pub fn none(num_papers: usize) -> Self {
        LabelVisibility { visible: vec![false; num_papers] }
    }

    pub fn from_ids(num_papers: usize, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut v = Self::none(num_papers);
        for i in ids {
            v.visible[i as usize] = true;
        }
        v
    }

    pub fn is_visible(&self, paper: u32) -> bool {
        self.visible.get(paper as usize).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeFeatureLayout {
    pub pca_dim: usize,
    pub num_classes: usize,
}

impl NodeFeatureLayout {
    pub fn width(&self) -> usize {
        self.pca_dim + 3 + 3 + YEAR_BITS + self.num_classes + 1
    }

    pub fn type_offset(&self) -> usize {
        self.pca_dim
    }

    pub fn depth_offset(&self) -> usize {
        self.pca_dim + 3
    }

    pub fn year_offset(&self) -> usize {
        self.pca_dim + 6
    }

    pub fn label_offset(&self) -> usize {
        self.pca_dim + 6 + YEAR_BITS
    }
}

/// Bit index (3..7) of the sampled neighbour's group in the edge feature.
/// Papers reached through an author's writing list share the cited-paper
/// bit; the sampler-type bits keep the pair distinct.
pub fn relation_bit(rel: Relation) -> usize {
    match rel {
        Relation::CitedPaper | Relation::PaperOfAuthor => 3,
        Relation::CitingPaper => 4,
        Relation::AuthorOfPaper => 5,
        Relation::InstitutionOfAuthor => 6,
    }
}

pub fn edge_feature(rel: Relation) -> [f32; EDGE_WIDTH] {
    let mut out = [0.0f32; EDGE_WIDTH];
    out[rel.sampler().code()] = 1.0;
    out[relation_bit(rel)] = 1.0;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatures {
    pub nodes: Matrix,
    pub edges: Matrix,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub central: u32,
}

impl PatchFeatures {
    pub fn item(&self) -> GraphItem<'_> {
        GraphItem { node_x: &self.nodes, edge_x: &self.edges, src: &self.src, dst: &self.dst, central: self.central }
    }
}

/// Node and edge input matrices for a patch. A node's label block is filled
/// only for visible papers and never for the central paper, wherever it
/// appears in the patch.
pub fn featurize_patch(
    patch: &Patch,
    g: &HeteroGraph,
    tables: &FeatureTables,
    visible: &LabelVisibility,
    num_classes: usize,
) -> Result<PatchFeatures> {
    let layout = NodeFeatureLayout { pca_dim: tables.dim(), num_classes };
    let w = layout.width();
    let central = patch.nodes[patch.central as usize];
    let mut data = vec![0.0f32; patch.nodes.len() * w];
    for (i, n) in patch.nodes.iter().enumerate() {
        let row = &mut data[i * w..(i + 1) * w];
        row[..layout.pca_dim].copy_from_slice(tables.row(n.node_type, n.id));
        row[layout.type_offset() + n.node_type.code()] = 1.0;
        row[layout.depth_offset() + n.depth.min(2) as usize] = 1.0;
        if n.node_type == NodeType::Paper {
            for (j, b) in year_bits(g.year(n.id)).into_iter().enumerate() {
                row[layout.year_offset() + j] = b as f32;
            }
            let is_central = n.id == central.id || g.canonical(n.id) == g.canonical(central.id);
            if !is_central && visible.is_visible(n.id) {
                if let Some(l) = g.label(n.id) {
                    if l >= num_classes {
                        return Err(Error::input(format!("paper {} label {l} >= {num_classes} classes", n.id)));
                    }
                    row[layout.label_offset() + l] = 1.0;
                    row[layout.label_offset() + num_classes] = 1.0;
                }
            }
        }
    }
    let nodes = Matrix::new(patch.nodes.len(), w, data)?;
    let edges = Matrix::new(
        patch.edges.len(),
        EDGE_WIDTH,
        patch.edges.iter().flat_map(|e| edge_feature(e.relation)).collect(),
    )?;
    Ok(PatchFeatures {
        nodes,
        edges,
        src: patch.edges.iter().map(|e| e.src).collect(),
        dst: patch.edges.iter().map(|e| e.dst).collect(),
        central: patch.central,
    })
}
