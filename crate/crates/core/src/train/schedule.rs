/// Linear warmup from `initial` to `peak`, then cosine decay to `floor`
/// over the remaining steps, then constant `floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub initial: f64,
    pub peak: f64,
    pub warmup: u64,
    pub total: u64,
    pub floor: f64,
}

impl ScheduleConfig {
    pub fn node_default() -> Self {
        ScheduleConfig { initial: 0.0, peak: 0.01, warmup: 50_000, total: 500_000, floor: 0.0 }
    }

    pub fn mol_default() -> Self {
        ScheduleConfig { initial: 1e-5, peak: 1e-4, warmup: 50_000, total: 500_000, floor: 0.0 }
    }
}

pub fn lr_at(step: u64, s: &ScheduleConfig) -> f64 {
    if step < s.warmup {
        return s.initial + (s.peak - s.initial) * step as f64 / s.warmup as f64;
    }
    if step >= s.total {
        return s.floor;
    }
    let span = (s.total - s.warmup) as f64;
    let frac = (step - s.warmup) as f64 / span;
    s.floor + 0.5 * (s.peak - s.floor) * (1.0 + (std::f64::consts::PI * frac).cos())
}
