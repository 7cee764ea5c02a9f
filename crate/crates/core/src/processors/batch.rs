use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::pfgm::Matrix;

/// One graph (patch or molecule) to be packed into a batch.
#[derive(Debug, Clone, Copy)]
pub struct GraphItem<'a> {
    pub node_x: &'a Matrix,
    pub edge_x: &'a Matrix,
    pub src: &'a [u32],
    pub dst: &'a [u32],
    /// Readout node for node-level tasks; ignored by graph-level models.
    pub central: u32,
}

/// Disjoint union of several graphs with per-graph segment ids.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch<T> {
    pub node_x: Tensor<T>,
    pub edge_x: Tensor<T>,
    /// Graph-level inputs, all zero.
    pub graph_x: Tensor<T>,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub node_graph: Vec<u32>,
    pub edge_graph: Vec<u32>,
    pub centrals: Vec<u32>,
}

impl<T: Real> GraphBatch<T> {
    pub fn pack(items: &[GraphItem<'_>], graph_in: usize) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::input("cannot pack an empty batch"))?;
        let (nw, ew) = (first.node_x.cols, first.edge_x.cols);
        let n_total: usize = items.iter().map(|i| i.node_x.rows).sum();
        let e_total: usize = items.iter().map(|i| i.edge_x.rows).sum();
        let mut node_x = Vec::with_capacity(n_total * nw);
        let mut edge_x = Vec::with_capacity(e_total * ew);
        let (mut src, mut dst) = (Vec::with_capacity(e_total), Vec::with_capacity(e_total));
        let (mut node_graph, mut edge_graph) = (Vec::with_capacity(n_total), Vec::with_capacity(e_total));
        let mut centrals = Vec::with_capacity(items.len());
        let mut offset = 0u32;
        for (g, it) in items.iter().enumerate() {
            if it.node_x.cols != nw || it.edge_x.cols != ew {
                return Err(Error::shape("pack", format!("graph {g} has widths ({}, {}), expected ({nw}, {ew})", it.node_x.cols, it.edge_x.cols)));
            }
            let n = it.node_x.rows as u32;
            if it.src.len() != it.edge_x.rows || it.dst.len() != it.edge_x.rows {
                return Err(Error::shape("pack", format!("graph {g}: {} edge rows but {} / {} endpoints", it.edge_x.rows, it.src.len(), it.dst.len())));
            }
            if let Some(&bad) = it.src.iter().chain(it.dst).find(|&&v| v >= n) {
                return Err(Error::input(format!("graph {g}: edge endpoint {bad} >= {n} nodes")));
            }
            if n > 0 && it.central >= n {
                return Err(Error::input(format!("graph {g}: central {} >= {n} nodes", it.central)));
            }
            node_x.extend(it.node_x.data.iter().map(|&v| T::lit(v as f64)));
            edge_x.extend(it.edge_x.data.iter().map(|&v| T::lit(v as f64)));
            src.extend(it.src.iter().map(|&s| s + offset));
            dst.extend(it.dst.iter().map(|&d| d + offset));
            node_graph.extend(std::iter::repeat_n(g as u32, n as usize));
            edge_graph.extend(std::iter::repeat_n(g as u32, it.src.len()));
            centrals.push(it.central + offset);
            offset += n;
        }
        Ok(GraphBatch {
            node_x: Tensor::from_vec(n_total, nw, node_x)?,
            edge_x: Tensor::from_vec(e_total, ew, edge_x)?,
            graph_x: Tensor::zeros(items.len(), graph_in),
            src,
            dst,
            node_graph,
            edge_graph,
            centrals,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_x.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edge_x.rows()
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_x.rows()
    }
}
