use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{EdgeSets, GraphParts, HeteroGraph};
use crate::error::{Error, Result};
use crate::pfgm::Matrix;
use crate::rng::{Stream, StreamRng};

/// Desk-scale stand-in for a citation heterograph with planted
/// communities.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMagConfig {
    pub num_papers: usize,
    pub num_authors: usize,
    pub num_institutions: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Probability that an edge stays inside its source's community.
    pub p_in: f64,
    pub cites_per_paper: (usize, usize),
    pub authors_per_paper: (usize, usize),
    pub affiliations_per_author: (usize, usize),
    pub labelled_fraction: f64,
    pub centroid_scale: f64,
    pub noise_std: f64,
    /// Number of papers overwritten with a copy of another paper's features.
    pub duplicates: usize,
}

impl Default for SynthMagConfig {
    fn default() -> Self {
        SynthMagConfig {
            num_papers: 1000,
            num_authors: 300,
            num_institutions: 20,
            num_classes: 4,
            feature_dim: 32,
            p_in: 0.9,
            cites_per_paper: (2, 10),
            authors_per_paper: (1, 3),
            affiliations_per_author: (1, 2),
            labelled_fraction: 0.5,
            centroid_scale: 1.0,
            noise_std: 1.0,
            duplicates: 0,
        }
    }
}

/// Balanced random assignment of `n` items to `k` communities.
fn communities(n: usize, k: usize, rng: &mut StreamRng) -> (Vec<usize>, Vec<Vec<u32>>) {
    let mut assign: Vec<usize> = (0..n).map(|i| i % k).collect();
    assign.shuffle(rng);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(i as u32);
    }
    (assign, members)
}

/// Picks a member of `home` with probability `p_in`, otherwise a member of
/// a uniformly chosen other community.
fn pick(members: &[Vec<u32>], home: usize, p_in: f64, rng: &mut StreamRng) -> Option<u32> {
    let k = members.len();
    let c = if k == 1 || rng.random::<f64>() < p_in {
        home
    } else {
        let o = rng.random_range(0..k - 1);
        if o >= home {
            o + 1
        } else {
            o
        }
    };
    members[c].choose(rng).copied()
}

fn draw_count(range: (usize, usize), rng: &mut StreamRng) -> usize {
    rng.random_range(range.0..=range.1.max(range.0))
}

pub fn synth_mag(cfg: &SynthMagConfig, seed: u64) -> Result<HeteroGraph> {
    if cfg.num_papers == 0 || cfg.num_authors == 0 || cfg.num_institutions == 0 {
        return Err(Error::input("synthetic graph needs at least one node of every type"));
    }
    if cfg.num_classes == 0 || cfg.feature_dim == 0 {
        return Err(Error::input("synthetic graph needs at least one class and one feature"));
    }
    if !(0.0..=1.0).contains(&cfg.p_in) || !(0.0..=1.0).contains(&cfg.labelled_fraction) {
        return Err(Error::input("p_in and labelled_fraction must lie in [0, 1]"));
    }
    let root = Stream::root(seed).named("synth-mag");
    let k = cfg.num_classes;
    let (paper_c, paper_m) = communities(cfg.num_papers, k, &mut root.named("paper-communities").rng());
    let (author_c, author_m) = communities(cfg.num_authors, k, &mut root.named("author-communities").rng());
    let (_, inst_m) = communities(cfg.num_institutions, k, &mut root.named("institution-communities").rng());

    let mut rng = root.named("cites").rng();
    let mut cites = Vec::new();
    for p in 0..cfg.num_papers {
        for _ in 0..draw_count(cfg.cites_per_paper, &mut rng) {
            if let Some(q) = pick(&paper_m, paper_c[p], cfg.p_in, &mut rng) {
                if q as usize != p {
                    cites.push((p as u32, q));
                }
            }
        }
    }

    let mut rng = root.named("writes").rng();
    let mut writes = Vec::new();
    for p in 0..cfg.num_papers {
        for _ in 0..draw_count(cfg.authors_per_paper, &mut rng) {
            if let Some(a) = pick(&author_m, paper_c[p], cfg.p_in, &mut rng) {
                writes.push((a, p as u32));
            }
        }
    }

    let mut rng = root.named("affiliations").rng();
    let mut affiliated = Vec::new();
    for a in 0..cfg.num_authors {
        for _ in 0..draw_count(cfg.affiliations_per_author, &mut rng) {
            if let Some(i) = pick(&inst_m, author_c[a], cfg.p_in, &mut rng) {
                affiliated.push((a as u32, i));
            }
        }
    }

    let mut rng = root.named("features").rng();
    let d = cfg.feature_dim;
    let centroids: Vec<f64> = (0..k * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.centroid_scale * z
        })
        .collect();
    let mut data = Vec::with_capacity(cfg.num_papers * d);
    for &c in &paper_c {
        for j in 0..d {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push((centroids[c * d + j] + cfg.noise_std * noise) as f32);
        }
    }
    let mut rng = root.named("duplicates").rng();
    for _ in 0..cfg.duplicates.min(cfg.num_papers / 2) {
        let dst = rng.random_range(0..cfg.num_papers);
        if let Some(&src) = paper_m[paper_c[dst]].choose(&mut rng) {
            let src = src as usize;
            if src != dst {
                let row: Vec<f32> = data[src * d..(src + 1) * d].to_vec();
                data[dst * d..(dst + 1) * d].copy_from_slice(&row);
            }
        }
    }
    let features = Matrix::new(cfg.num_papers, d, data)?;

    let mut rng = root.named("metadata").rng();
    let years: Vec<i32> = (0..cfg.num_papers).map(|_| rng.random_range(2010..=2020)).collect();
    let labels: Vec<i32> = paper_c
        .iter()
        .map(|&c| if rng.random::<f64>() < cfg.labelled_fraction { c as i32 } else { -1 })
        .collect();

    HeteroGraph::new(GraphParts {
        num_authors: cfg.num_authors,
        num_institutions: cfg.num_institutions,
        num_classes: k,
        features,
        years,
        labels,
        edges: EdgeSets { cites, writes, affiliated },
    })
}
