use rand::Rng;

use super::mlp::{Activation, Mlp, MlpSpec};
use super::params::{Bound, ParamGroup, ParamStore};
use super::{select, surviving_edges, GraphBatch, LatentState};
use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::rng::StreamRng;

/// Node-level message passing network for patch classification.
#[derive(Debug, Clone, PartialEq)]
pub struct MpnnConfig {
    pub node_in: usize,
    pub edge_in: usize,
    pub num_classes: usize,
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
    /// When false, the outgoing-message sum is replaced by zeros.
    pub bidirectional: bool,
}

impl MpnnConfig {
    pub fn new(node_in: usize, edge_in: usize, num_classes: usize) -> Self {
        MpnnConfig {
            node_in,
            edge_in,
            num_classes,
            latent: 256,
            hidden: 512,
            steps: 4,
            encoder_layers: 2,
            processor_layers: 2,
            decoder_layers: 2,
            activation: Activation::Relu,
            dropout: 0.0,
            drop_edge: 0.0,
            residual: false,
            bidirectional: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.latent == 0 || self.hidden == 0 || self.num_classes == 0 {
            return Err(Error::Config("latent, hidden and num_classes must be positive".into()));
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
        m.set("mode", "mpnn");
        m.set("node_in", self.node_in);
        m.set("edge_in", self.edge_in);
        m.set("num_classes", self.num_classes);
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
        m.set("bidirectional", self.bidirectional);
        m
    }

    pub fn from_kv(m: &KvMap) -> Result<Self> {
        let d = MpnnConfig::new(0, 0, 1);
        let act = m.get_str("activation").unwrap_or("relu");
        let cfg = MpnnConfig {
            node_in: m.require("node_in")?,
            edge_in: m.require("edge_in")?,
            num_classes: m.require("num_classes")?,
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
            bidirectional: m.get_or("bidirectional", d.bidirectional)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone)]
struct MpnnLayer {
    message: Mlp,
    update: Mlp,
}

#[derive(Debug, Clone)]
pub struct MpnnModel {
    cfg: MpnnConfig,
    node_enc: Mlp,
    edge_enc: Mlp,
    layers: Vec<MpnnLayer>,
    decoder: Mlp,
    projector: Mlp,
}

impl MpnnModel {
    pub fn new<T: Real, R: Rng + ?Sized>(cfg: MpnnConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let k = cfg.latent;
        let act = cfg.activation;
        let spec = |layers| MlpSpec { layers, hidden: cfg.hidden, out: k };
        let node_enc = Mlp::new(store, "enc.node", ParamGroup::Encoder, cfg.node_in, spec(cfg.encoder_layers), act, rng);
        let edge_enc = Mlp::new(store, "enc.edge", ParamGroup::Encoder, cfg.edge_in, spec(cfg.encoder_layers), act, rng);
        let layers = (0..cfg.steps)
            .map(|t| MpnnLayer {
                message: Mlp::new(store, &format!("proc{t}.msg"), ParamGroup::Processor, 3 * k, spec(cfg.processor_layers), act, rng),
                update: Mlp::new(store, &format!("proc{t}.upd"), ParamGroup::Processor, 3 * k, spec(cfg.processor_layers), act, rng),
            })
            .collect();
        let dec_spec = MlpSpec { layers: cfg.decoder_layers, hidden: cfg.hidden, out: cfg.num_classes };
        let decoder = Mlp::new(store, "dec", ParamGroup::Decoder, k, dec_spec, act, rng);
        let projector = Mlp::new(store, "proj", ParamGroup::Projector, k, MlpSpec { layers: 2, hidden: k, out: k }, act, rng);
        Ok(MpnnModel { cfg, node_enc, edge_enc, layers, decoder, projector })
    }

    pub fn config(&self) -> &MpnnConfig {
        &self.cfg
    }

    pub fn encode<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>) -> Result<LatentState> {
        if batch.node_x.cols() != self.cfg.node_in || batch.edge_x.cols() != self.cfg.edge_in {
            return Err(Error::input(format!(
                "input widths ({}, {}) do not match encoder widths ({}, {})",
                batch.node_x.cols(),
                batch.edge_x.cols(),
                self.cfg.node_in,
                self.cfg.edge_in
            )));
        }
        let x = tape.constant(batch.node_x.clone());
        let e = tape.constant(batch.edge_x.clone());
        Ok(LatentState { nodes: self.node_enc.forward(tape, bound, x)?, edges: self.edge_enc.forward(tape, bound, e)?, graph: None })
    }

    /// One processor step: `m_uv = psi(h_u, h_v, h0_uv)` for every edge
    /// `u -> v`, then `h_u' = phi(h_u, sum of incoming, sum of outgoing)`.
    pub fn step<T: Real>(
        &self,
        t: usize,
        tape: &mut Tape<T>,
        bound: &Bound,
        batch: &GraphBatch<T>,
        nodes: Var,
        edges0: Var,
        mut noise: Option<&mut StreamRng>,
    ) -> Result<Var> {
        let layer = self.layers.get(t).ok_or_else(|| Error::input(format!("step {t} >= {}", self.layers.len())))?;
        let n = batch.num_nodes();
        let k = self.cfg.latent;
        let h = match noise.as_deref_mut() {
            Some(rng) => tape.dropout(nodes, self.cfg.dropout, rng)?,
            None => nodes,
        };
        let kept = surviving_edges(batch.num_edges(), self.cfg.drop_edge, noise);
        let (src, dst) = (select(&batch.src, &kept), select(&batch.dst, &kept));
        let e = match &kept {
            Some(idx) => tape.gather(edges0, idx)?,
            None => edges0,
        };
        let hs = tape.gather(h, &src)?;
        let hd = tape.gather(h, &dst)?;
        let cat = tape.concat(&[hs, hd, e], 1)?;
        let m = layer.message.forward(tape, bound, cat)?;
        let incoming = tape.segment_sum(m, &dst, n)?;
        let outgoing = if self.cfg.bidirectional { tape.segment_sum(m, &src, n)? } else { tape.constant(Tensor::zeros(n, k)) };
        let cat = tape.concat(&[h, incoming, outgoing], 1)?;
        let out = layer.update.forward(tape, bound, cat)?;
        if self.cfg.residual {
            tape.add(nodes, out)
        } else {
            Ok(out)
        }
    }

    /// Final node latents after all processor steps.
    pub fn process<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>, mut noise: Option<&mut StreamRng>) -> Result<Var> {
        let s = self.encode(tape, bound, batch)?;
        let mut h = s.nodes;
        for t in 0..self.layers.len() {
            h = self.step(t, tape, bound, batch, h, s.edges, noise.as_deref_mut())?;
        }
        Ok(h)
    }

    /// Final latents of each graph's central node, one row per graph.
    pub fn embed_centrals<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>, noise: Option<&mut StreamRng>) -> Result<Var> {
        let h = self.process(tape, bound, batch, noise)?;
        tape.gather(h, &batch.centrals)
    }

    pub fn decode<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, central: Var) -> Result<Var> {
        self.decoder.forward(tape, bound, central)
    }

    pub fn logits<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, batch: &GraphBatch<T>, noise: Option<&mut StreamRng>) -> Result<Var> {
        let c = self.embed_centrals(tape, bound, batch, noise)?;
        self.decode(tape, bound, c)
    }

    pub fn project<T: Real>(&self, tape: &mut Tape<T>, bound: &Bound, z: Var) -> Result<Var> {
        self.projector.forward(tape, bound, z)
    }
}
