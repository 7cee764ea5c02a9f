use crate::error::{Error, Result};

/// Per-batch limits on nodes (atoms), edges (bonds) and graphs (patches,
/// molecules).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchCaps {
    pub nodes: usize,
    pub edges: usize,
    pub graphs: usize,
}

impl BatchCaps {
    pub fn node_default() -> Self {
        BatchCaps { nodes: 84_000, edges: 185_000, graphs: 256 }
    }

    pub fn mol_default() -> Self {
        BatchCaps { nodes: 1_024, edges: 2_560, graphs: 64 }
    }

    pub fn fits(&self, s: ItemSize) -> bool {
        s.nodes <= self.nodes && s.edges <= self.edges && s.graphs <= self.graphs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ItemSize {
    pub nodes: usize,
    pub edges: usize,
    pub graphs: usize,
}

impl ItemSize {
    pub fn graph(nodes: usize, edges: usize) -> Self {
        ItemSize { nodes, edges, graphs: 1 }
    }

    fn plus(self, o: ItemSize) -> Self {
        ItemSize { nodes: self.nodes + o.nodes, edges: self.edges + o.edges, graphs: self.graphs + o.graphs }
    }
}

/// Greedy fill in arrival order: an item that would push any total past its
/// cap closes the current batch and opens the next.
#[derive(Debug, Clone)]
pub struct DynamicBatcher<I> {
    caps: BatchCaps,
    items: Vec<I>,
    used: ItemSize,
}

impl<I> DynamicBatcher<I> {
    pub fn new(caps: BatchCaps) -> Self {
        DynamicBatcher { caps, items: Vec::new(), used: ItemSize::default() }
    }

    /// Adds an item, returning the batch it closed, if any. An item that
    /// exceeds the caps on its own is rejected.
    pub fn push(&mut self, item: I, size: ItemSize) -> Result<Option<Vec<I>>> {
        if !self.caps.fits(size) {
            return Err(Error::input(format!("item of {size:?} exceeds batch caps {:?}", self.caps)));
        }
        let mut closed = None;
        if !self.items.is_empty() && !self.caps.fits(self.used.plus(size)) {
            closed = Some(std::mem::take(&mut self.items));
            self.used = ItemSize::default();
        }
        self.items.push(item);
        self.used = self.used.plus(size);
        Ok(closed)
    }

    pub fn pending(&self) -> usize {
        self.items.len()
    }

    pub fn finish(self) -> Option<Vec<I>> {
        (!self.items.is_empty()).then_some(self.items)
    }
}

/// Batches item indices; oversize items are logged and skipped, and their
/// indices returned separately.
pub fn dynamic_batch(sizes: &[ItemSize], caps: BatchCaps) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut b = DynamicBatcher::new(caps);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (i, &s) in sizes.iter().enumerate() {
        match b.push(i, s) {
            Ok(Some(batch)) => out.push(batch),
            Ok(None) => {}
            Err(e) => {
                log::warn!("skipping item {i}: {e}");
                skipped.push(i);
            }
        }
    }
    out.extend(b.finish());
    (out, skipped)
}
