#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMode {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    /// Index of the best evaluation; ties go to the earliest.
    pub best: usize,
}

/// Incremental early stopping over validation evaluations.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    mode: StopMode,
    patience: usize,
    best: Option<(usize, f64)>,
    seen: usize,
}

impl EarlyStopper {
    pub fn new(mode: StopMode, patience: usize) -> Self {
        EarlyStopper { mode, patience, best: None, seen: 0 }
    }

    fn better(&self, a: f64, b: f64) -> bool {
        match self.mode {
            StopMode::Min => a < b,
            StopMode::Max => a > b,
        }
    }

    /// Records one evaluation. Returns whether it is a new best. NaN never
    /// improves.
    pub fn observe(&mut self, value: f64) -> bool {
        let i = self.seen;
        self.seen += 1;
        let improved = !value.is_nan() && self.best.is_none_or(|(_, b)| b.is_nan() || self.better(value, b));
        if improved || self.best.is_none() {
            self.best = Some((i, value));
        }
        improved
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    /// True once `patience` evaluations have passed without improvement.
    pub fn should_stop(&self) -> bool {
        self.best.is_some_and(|(i, _)| self.seen - 1 - i >= self.patience)
    }
}

/// Decision after the whole `history`; `None` for an empty history.
pub fn early_stop(history: &[f64], patience: usize, mode: StopMode) -> Option<StopDecision> {
    let mut s = EarlyStopper::new(mode, patience);
    for &v in history {
        s.observe(v);
    }
    s.best().map(|(best, _)| StopDecision { stop: s.should_stop(), best })
}
