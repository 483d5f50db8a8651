//! Warm-up adaptation: dual-averaging step size and windowed diagonal mass.

/// Nesterov dual averaging toward a target acceptance rate.
#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    target: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl DualAveraging {
    pub(crate) fn new(target: f64, step_size: f64) -> Self {
        let mut da = DualAveraging { target, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        da.restart(step_size);
        da
    }

    pub(crate) fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size.
    pub(crate) fn update(&mut self, accept_prob: f64) -> f64 {
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + T0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_prob);
        let x = self.mu - self.s_bar * self.counter.sqrt() / GAMMA;
        let w = self.counter.powf(-KAPPA);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Averaged iterate used once adaptation ends.
    pub(crate) fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running variance per coordinate (Welford).
#[derive(Debug, Clone)]
pub(crate) struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub(crate) fn new(dim: usize) -> Self {
        Welford { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    /// Sample variance shrunk toward 1e-3 (weight 5/(n+5)).
    pub(crate) fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub(crate) fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Three-phase warm-up: 15% step size only, 75% mass-matrix windows that
/// double in length, 10% step size only. Returns the iteration index (0-based)
/// at which each mass window ends.
pub(crate) fn mass_window_ends(n_warmup: usize) -> Vec<usize> {
    let init_buffer = (0.15 * n_warmup as f64) as usize;
    let term_buffer = (0.10 * n_warmup as f64) as usize;
    let middle = n_warmup.saturating_sub(init_buffer + term_buffer);
    if n_warmup < 20 || middle < 10 {
        return Vec::new();
    }
    let stop = init_buffer + middle;
    let mut ends = Vec::new();
    let mut size = 25.min(middle);
    let mut start = init_buffer;
    loop {
        let mut end = start + size;
        let next_end = end + 2 * size;
        if next_end > stop {
            end = stop;
        }
        ends.push(end - 1);
        if end >= stop {
            break;
        }
        start = end;
        size *= 2;
    }
    ends
}
