use crate::error::{Error, Result};

/// Compressed sparse rows: the neighbours of row `i` are
/// `targets[offsets[i]..offsets[i + 1]]`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    num_dst: usize,
}

/// Builds a CSR over `num_src` rows. Parallel duplicate edges are kept.
pub fn build_csr(edges: &[(u32, u32)], num_src: usize, num_dst: usize) -> Result<Csr> {
    let mut counts = vec![0usize; num_src + 1];
    for &(s, d) in edges {
        if s as usize >= num_src || d as usize >= num_dst {
            return Err(Error::input(format!(
                "edge ({s}, {d}) out of range for {num_src} sources and {num_dst} destinations"
            )));
        }
        counts[s as usize + 1] += 1;
    }
    for i in 0..num_src {
        counts[i + 1] += counts[i];
    }
    let offsets = counts;
    let mut cursor = offsets.clone();
    let mut targets = vec![0u32; edges.len()];
    for &(s, d) in edges {
        let c = &mut cursor[s as usize];
        targets[*c] = d;
        *c += 1;
    }
    for i in 0..num_src {
        targets[offsets[i]..offsets[i + 1]].sort_unstable();
    }
    Ok(Csr { offsets, targets, num_dst })
}

impl Csr {
    pub fn num_rows(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn num_cols(&self) -> usize {
        self.num_dst
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn neighbors(&self, row: u32) -> &[u32] {
        let r = row as usize;
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn degree(&self, row: u32) -> usize {
        let r = row as usize;
        self.offsets[r + 1] - self.offsets[r]
    }

    /// Edge list in (row, ascending target) order.
    pub fn expand(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.targets.len());
        for r in 0..self.num_rows() {
            for &t in &self.targets[self.offsets[r]..self.offsets[r + 1]] {
                out.push((r as u32, t));
            }
        }
        out
    }

    /// The same edge set indexed by destination.
    pub fn transpose(&self) -> Csr {
        let swapped: Vec<(u32, u32)> = self.expand().into_iter().map(|(s, d)| (d, s)).collect();
        build_csr(&swapped, self.num_dst, self.num_rows()).expect("transposed endpoints are in range")
    }
}
