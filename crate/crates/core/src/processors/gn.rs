use rand::Rng;

use super::mlp::{Activation, Mlp, MlpSpec};
use super::params::{Bound, ParamGroup, ParamStore};
use super::{select, surviving_edges, GraphBatch, LatentState};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::rng::StreamRng;

/// Deep Graph Network for molecular property regression with denoising heads.
#[derive(Debug, Clone, PartialEq)]
pub struct GnConfig {
    pub node_in: usize,
    pub edge_in: usize,
    pub graph_in: usize,
    pub latent: usize,
    pub hidden: usize,
    pub steps: usize,
    pub encoder_layers: usize,
    pub processor_layers: usize,
    pub decoder_layers: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub drop_edge: f64,
    pub residual: bool,
    pub atom_vocab: usize,
    pub bond_vocab: usize,
    /// Displacement and distance regression heads on edges.
    pub position_heads: bool,
    /// The gap head predicts `target_mean + target_std * out`.
    pub target_mean: f64,
    pub target_std: f64,
}

impl GnConfig {
    pub fn new(node_in: usize, edge_in: usize, atom_vocab: usize, bond_vocab: usize) -> Self {
        GnConfig {
            node_in,
            edge_in,
            graph_in: 1,
            latent: 512,
            hidden: 512,
            steps: 32,
            encoder_layers: 3,
            processor_layers: 3,
            decoder_layers: 3,
            activation: Activation::Relu,
            dropout: 0.0,
            drop_edge: 0.0,
            residual: false,
            atom_vocab,
            bond_vocab,
            position_heads: false,
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.latent == 0 || self.hidden == 0 || self.graph_in == 0 || self.atom_vocab == 0 || self.bond_vocab == 0 {
            return Err(Error::Config("widths and vocabularies must be positive".into()));
        }
        if !self.target_mean.is_finite() || !(self.target_std > 0.0 && self.target_std.is_finite()) {
            return Err(Error::Config(format!("invalid target normalisation {} / {}", self.target_mean, self.target_std)));
        }
        for (name, p) in [("dropout", self.dropout), ("drop_edge", self.drop_edge)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {p}")));
            }
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("mode", "gn");
        m.set("node_in", self.node_in);
        m.set("edge_in", self.edge_in);
        m.set("graph_in", self.graph_in);
        m.set("latent", self.latent);
        m.set("hidden", self.hidden);
        m.set("steps", self.steps);
        m.set("encoder_layers", self.encoder_layers);
        m.set("processor_layers", self.processor_layers);
        m.set("decoder_layers", self.decoder_layers);
        m.set("activation", self.activation.name());
        m.set("dropout", self.dropout);
        m.set("drop_edge", self.drop_edge);
        m.set("residual", self.residual);
        m.set("atom_vocab", self.atom_vocab);
        m.set("bond_vocab", self.bond_vocab);
        m.set("position_heads", self.position_heads);
        m.set("target_mean", format!("{:?}", self.target_mean));
        m.set("target_std", format!("{:?}", self.target_std));
        m
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let d = GnConfig::new(0, 0, 1, 1);
        let act = m.get_str("activation").unwrap_or("relu");
        let cfg = GnConfig {
            node_in: m.require("node_in")?,
            edge_in: m.require("edge_in")?,
            graph_in: m.get_or("graph_in", d.graph_in)?,
            latent: m.get_or("latent", d.latent)?,
            hidden: m.get_or("hidden", d.hidden)?,
            steps: m.get_or("steps", d.steps)?,
            encoder_layers: m.get_or("encoder_layers", d.encoder_layers)?,
            processor_layers: m.get_or("processor_layers", d.processor_layers)?,
            decoder_layers: m.get_or("decoder_layers", d.decoder_layers)?,
            activation: Activation::parse(act).ok_or_else(|| Error::Config(format!("unknown activation '{act}'")))?,
            dropout: m.get_or("dropout", d.dropout)?,
            drop_edge: m.get_or("drop_edge", d.drop_edge)?,
            residual: m.get_or("residual", d.residual)?,
            atom_vocab: m.require("atom_vocab")?,
            bond_vocab: m.require("bond_vocab")?,
            position_heads: m.get_or("position_heads", d.position_heads)?,
            target_mean: m.get_or("target_mean", d.target_mean)?,
            target_std: m.get_or("target_std", d.target_std)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
struct GnBlock {
    edge: Mlp,
    node: Mlp,
    graph: Mlp,
}

/// Decoder outputs for a batch.
#[derive(Debug, Clone, Copy)]
pub struct GnHeads {
    /// `[B x 1]` regression target per graph.
    pub gap: Var,
    /// `[N x atom_vocab]` atom-type logits.
    pub atoms: Var,
    /// `[E x bond_vocab]` bond-type logits.
    pub bonds: Var,
    /// `[E x 3]` displacement predictions.
    pub displacement: Option<Var>,
    /// `[E x 1]` distance predictions.
    pub distance: Option<Var>,
}

#[derive(Debug, Clone)]
pub struct GnModel {
    cfg: GnConfig,
    node_enc: Mlp,
    edge_enc: Mlp,
    graph_enc: Mlp,
    blocks: Vec<GnBlock>,
    gap: Mlp,
    atoms: Mlp,
    bonds: Mlp,
    displacement: Option<Mlp>,
    distance: Option<Mlp>,
}

impl GnModel {
    pub fn new<T: Real, R: Rng + ?Sized>(cfg: GnConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.latent;
        let act = cfg.activation;
        let spec = |layers, out| MlpSpec { layers, hidden: cfg.hidden, out };
        let enc = |store: &mut ParamStore<T>, rng: &mut R, name: &str, d| Mlp::new(store, name, ParamGroup::Encoder, d, spec(cfg.encoder_layers, k), act, rng);
        let node_enc = enc(store, rng, "enc.node", cfg.node_in);
        let edge_enc = enc(store, rng, "enc.edge", cfg.edge_in);
        let graph_enc = enc(store, rng, "enc.graph", cfg.graph_in);
        let pspec = spec(cfg.processor_layers, k);
        let blocks = (0..cfg.steps)
            .map(|t| GnBlock {
                edge: Mlp::new(store, &format!("proc{t}.edge"), ParamGroup::Processor, 4 * k, pspec, act, rng),
                node: Mlp::new(store, &format!("proc{t}.node"), ParamGroup::Processor, 3 * k, pspec, act, rng),
                graph: Mlp::new(store, &format!("proc{t}.graph"), ParamGroup::Processor, 3 * k, pspec, act, rng),
            })
            .collect();
        let mut dec = |name: &str, out| Mlp::new(store, name, ParamGroup::Decoder, k, spec(cfg.decoder_layers, out), act, rng);
        let gap = dec("dec.gap", 1);
        let atoms = dec("dec.atoms", cfg.atom_vocab);
        let bonds = dec("dec.bonds", cfg.bond_vocab);
        let (displacement, distance) = if cfg.position_heads { (Some(dec("dec.disp", 3)), Some(dec("dec.dist", 1))) } else { (None, None) };
        Ok(GnModel { cfg, node_enc, edge_enc, graph_enc, blocks, gap, atoms, bonds, displacement, distance })
    }

    pub fn config(&self) -> &GnConfig {
        &self.cfg
    }

    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>) -> Result<LatentState> {
        let c = &self.cfg;
        if batch.node_x.cols() != c.node_in || batch.edge_x.cols() != c.edge_in || batch.graph_x.cols() != c.graph_in {
            return Err(Error::input(format!(
                "input widths ({}, {}, {}) do not match encoder widths ({}, {}, {})",
                batch.node_x.cols(),
                batch.edge_x.cols(),
                batch.graph_x.cols(),
                c.node_in,
                c.edge_in,
                c.graph_in
            )));
        }
        let x = tape.constant(batch.node_x.clone());
        let e = tape.constant(batch.edge_x.clone());
        let g = tape.constant(batch.graph_x.clone());
        Ok(LatentState {
            nodes: self.node_enc.forward(tape, bound, x)?,
            edges: self.edge_enc.forward(tape, bound, e)?,
            graph: Some(self.graph_enc.forward(tape, bound, g)?),
        })
    }

    /// One GN block: edges, then nodes (summing incoming updated edges),
    /// then the graph latent (summing updated nodes and edges per graph).
    pub fn step<T: Real>(
        &self,
        t: usize,
        tape: &mut Tape<T>,
        bound: &Bound,
        batch: &GraphBatch<T>,
        state: LatentState,
        mut noise: Option<&mut StreamRng>,
    ) -> Result<LatentState> {
        let block = self.blocks.get(t).ok_or_else(|| Error::input(format!("step {t} >= {}", self.blocks.len())))?;
        let graph = state.graph.ok_or_else(|| Error::input("graph network state has no graph latent"))?;
        let (n, b) = (batch.num_nodes(), batch.num_graphs());
        let h = match noise.as_deref_mut() {
            Some(rng) => tape.dropout(state.nodes, self.cfg.dropout, rng)?,
            None => state.nodes,
        };
        let kept = surviving_edges(batch.num_edges(), self.cfg.drop_edge, noise);

        let hs = tape.gather(h, &batch.src)?;
        let hd = tape.gather(h, &batch.dst)?;
        let ge = tape.gather(graph, &batch.edge_graph)?;
        let cat = tape.concat(&[hs, hd, state.edges, ge], 1)?;
        let mut edges = block.edge.forward(tape, bound, cat)?;
        if self.cfg.residual {
            edges = tape.add(state.edges, edges)?;
        }

        let (agg_edges, agg_dst, agg_graph) = match &kept {
            Some(idx) => (tape.gather(edges, idx)?, select(&batch.dst, &kept), select(&batch.edge_graph, &kept)),
            None => (edges, batch.dst.clone(), batch.edge_graph.clone()),
        };
        let incoming = tape.segment_sum(agg_edges, &agg_dst, n)?;
        let gn = tape.gather(graph, &batch.node_graph)?;
        let cat = tape.concat(&[h, incoming, gn], 1)?;
        let mut nodes = block.node.forward(tape, bound, cat)?;
        if self.cfg.residual {
            nodes = tape.add(state.nodes, nodes)?;
        }

        let node_sum = tape.segment_sum(nodes, &batch.node_graph, b)?;
        let edge_sum = tape.segment_sum(agg_edges, &agg_graph, b)?;
        let cat = tape.concat(&[node_sum, edge_sum, graph], 1)?;
        let mut g = block.graph.forward(tape, bound, cat)?;
        if self.cfg.residual {
            g = tape.add(graph, g)?;
        }
        Ok(LatentState { nodes, edges, graph: Some(g) })
    }

    pub fn process<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>, mut noise: Option<&mut StreamRng>) -> Result<LatentState> {
        let mut s = self.encode(tape, bound, batch)?;
        for t in 0..self.blocks.len() {
            s = self.step(t, tape, bound, batch, s, noise.as_deref_mut())?;
        }
        Ok(s)
    }

    pub fn decode<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, state: LatentState) -> Result<GnHeads> {
        let graph = state.graph.ok_or_else(|| Error::input("graph network state has no graph latent"))?;
        let raw = self.gap.forward(tape, bound, graph)?;
        let scaled = tape.scale(raw, T::lit(self.cfg.target_std));
        let shift = tape.constant(Tensor::filled(1, 1, T::lit(self.cfg.target_mean)));
        Ok(GnHeads {
            gap: tape.add_row(scaled, shift)?,
            atoms: self.atoms.forward(tape, bound, state.nodes)?,
            bonds: self.bonds.forward(tape, bound, state.edges)?,
            displacement: self.displacement.as_ref().map(|m| m.forward(tape, bound, state.edges)).transpose()?,
            distance: self.distance.as_ref().map(|m| m.forward(tape, bound, state.edges)).transpose()?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>, noise: Option<&mut StreamRng>) -> Result<GnHeads> {
        let s = self.process(tape, bound, batch, noise)?;
        self.decode(tape, bound, s)
    }
}
