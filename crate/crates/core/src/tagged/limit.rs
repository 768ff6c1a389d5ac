use rand::Rng;
use serde::{Deserialize, Serialize};

use super::finite::TaggedPoint;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::meanfield::{MeanFieldRun, MeanFieldState};
use crate::stats::CompensatedSum;

/// Envelope factor over the largest rate in a grid cell.
const ENVELOPE_FACTOR: f64 = 1.1;

/// Rates of the limiting chain at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRates {
    pub birth: f64,
    pub death: f64,
    /// `(k, rate)` for jumps to state `k ≥ 1`.
    pub relocate: Vec<(usize, f64)>,
}

impl LimitRates {
    pub fn total_relocation(&self) -> f64 {
        self.relocate.iter().map(|(_, r)| r).sum()
    }

    pub fn total(&self) -> f64 {
        self.birth + self.death + self.total_relocation()
    }
}

/// Birth `μ_W`, death `(W−1)/W·μ_W` and relocation to `k` at rate
/// `c(W, k−1) f_{k−1} / W`.
pub fn limit_tagged_rates(w: usize, f: &MeanFieldState, kernel: &Kernel) -> Result<LimitRates> {
    if w == 0 {
        return Err(Error::InvalidParameter("the tagged site holds W ≥ 1".into()));
    }
    if !kernel.supports(w) {
        return Err(Error::OutOfTableRange {
            k: w,
            l: 0,
            max: kernel.max_size().unwrap_or(0),
        });
    }
    let mu = f.mu(kernel, w);
    let wf = w as f64;
    let relocate = (1..=f.f.len())
        .map(|k| (k, kernel.rate(w, k - 1) * f.f[k - 1] / wf))
        .filter(|&(_, r)| r > 0.0)
        .collect();
    Ok(LimitRates {
        birth: mu,
        death: (wf - 1.0) / wf * mu,
        relocate,
    })
}

/// A mean-field trajectory on a time grid, linearly interpolated in time.
#[derive(Debug, Clone)]
pub struct Driver {
    kernel: Kernel,
    times: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    /// `m_γ` per grid time for product kernels.
    m_gamma: Option<Vec<f64>>,
}

impl Driver {
    pub fn new(kernel: Kernel, snapshots: &[MeanFieldState]) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::GridMismatch("driver needs at least one state".into()));
        }
        if snapshots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::GridMismatch("driver times must increase".into()));
        }
        let times = snapshots.iter().map(|s| s.t).collect();
        let profiles: Vec<Vec<f64>> = snapshots.iter().map(|s| s.f.clone()).collect();
        let m_gamma = kernel.separable_gamma().map(|_| {
            profiles
                .iter()
                .map(|f| {
                    f.iter()
                        .enumerate()
                        .skip(1)
                        .map(|(l, &v)| kernel.product_power(l).unwrap_or(0.0) * v)
                        .collect::<CompensatedSum>()
                        .value()
                })
                .collect()
        });
        Ok(Self {
            kernel,
            times,
            profiles,
            m_gamma,
        })
    }

    pub fn from_run(kernel: Kernel, run: &MeanFieldRun) -> Result<Self> {
        Self::new(kernel, &run.snapshots)
    }

    /// A driver constant in time on `[0, t_end]`.
    pub fn frozen(kernel: Kernel, f: &MeanFieldState, t_end: f64) -> Result<Self> {
        let a = MeanFieldState { t: 0.0, ..f.clone() };
        if t_end <= 0.0 {
            return Self::new(kernel, &[a]);
        }
        let b = MeanFieldState { t: t_end, ..f.clone() };
        Self::new(kernel, &[a, b])
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn mu_at_node(&self, w: usize, i: usize) -> f64 {
        match &self.m_gamma {
            Some(m) => self.kernel.product_power(w).unwrap_or(0.0) * m[i],
            None => self.profiles[i]
                .iter()
                .enumerate()
                .skip(1)
                .map(|(l, &v)| self.kernel.rate(w, l) * v)
                .collect::<CompensatedSum>()
                .value(),
        }
    }

    /// Cell index and interpolation weight of `t`.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 2, 1.0);
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let theta = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        (i, theta)
    }

    /// `μ_W(t)` from the interpolated profile.
    pub fn mu(&self, w: usize, t: f64) -> f64 {
        let (i, theta) = self.locate(t);
        if self.times.len() == 1 {
            return self.mu_at_node(w, 0);
        }
        (1.0 - theta) * self.mu_at_node(w, i) + theta * self.mu_at_node(w, i + 1)
    }

    /// The interpolated profile at `t`, zero-padded to a common length.
    pub fn profile(&self, t: f64) -> Vec<f64> {
        let (i, theta) = self.locate(t);
        if self.times.len() == 1 {
            return self.profiles[0].clone();
        }
        let (a, b) = (&self.profiles[i], &self.profiles[i + 1]);
        let len = a.len().max(b.len());
        (0..len)
            .map(|k| {
                let x = a.get(k).copied().unwrap_or(0.0);
                let y = b.get(k).copied().unwrap_or(0.0);
                (1.0 - theta) * x + theta * y
            })
            .collect()
    }

    /// End of the grid cell containing `t`.
    fn cell_end(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s <= t);
        self.times.get(i).copied().unwrap_or(f64::INFINITY)
    }
}

/// Simulates the limiting chain from `w0` by thinning against the envelope
/// `1.1 × max(2μ_W)` over each driver grid cell, recording `Ŵ` on `grid`.
pub fn simulate_limit_tagged<R: Rng + ?Sized>(
    w0: usize,
    driver: &Driver,
    t_end: f64,
    grid: &[f64],
    rng: &mut R,
) -> Result<Vec<TaggedPoint>> {
    if w0 == 0 {
        return Err(Error::InvalidParameter("the tagged site holds W ≥ 1".into()));
    }
    if t_end > driver.end() + 1e-12 {
        return Err(Error::GridMismatch(format!(
            "driver ends at {} before t_end = {t_end}",
            driver.end()
        )));
    }
    crate::grid::validate_grid(grid, driver.times[0], t_end)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut grid = grid.iter().copied().peekable();
    let mut w = w0;
    let mut t = driver.times[0];
    while t < t_end {
        let cell_end = driver.cell_end(t).min(t_end);
        // The total exit rate is 2μ_W, linear in time within a cell.
        let envelope = ENVELOPE_FACTOR * 2.0 * driver.mu(w, t).max(driver.mu(w, cell_end));
        let proposal = if envelope > 0.0 {
            t - rng.random::<f64>().max(f64::MIN_POSITIVE).ln() / envelope
        } else {
            f64::INFINITY
        };
        if proposal >= cell_end {
            t = cell_end;
            continue;
        }
        t = proposal;
        let mu = driver.mu(w, t);
        let rate = 2.0 * mu;
        if rate > envelope {
            return Err(Error::EnvelopeViolation { envelope, rate, t });
        }
        let wf = w as f64;
        let u = rng.random::<f64>() * envelope;
        let new_w = if u < mu {
            w + 1
        } else if u < mu + (wf - 1.0) / wf * mu {
            w - 1
        } else if u < rate {
            let f = driver.profile(t);
            let weights: Vec<f64> = f
                .iter()
                .enumerate()
                .map(|(m, &v)| driver.kernel.rate(w, m) * v)
                .collect();
            let total: f64 = weights.iter().sum();
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = weights.iter().rposition(|&x| x > 0.0).unwrap_or(0);
            for (m, &x) in weights.iter().enumerate() {
                if x <= 0.0 {
                    continue;
                }
                acc += x;
                if target < acc {
                    chosen = m;
                    break;
                }
            }
            chosen + 1
        } else {
            w
        };
        if new_w != w {
            while let Some(&g) = grid.peek() {
                if g >= t {
                    break;
                }
                points.push(TaggedPoint { t: g, w });
                grid.next();
            }
            w = new_w;
        }
    }
    points.extend(grid.map(|g| TaggedPoint { t: g, w }));
    Ok(points)
}
