use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::rhs::{edg_rhs, edg_rhs_product, sbm_rhs, sbm_rhs_product};
use super::{MeanFieldState, SizeBiasedState};
use crate::error::{Error, Result};
use crate::grid::validate_grid;
use crate::kernel::Kernel;

/// How the truncation size `K` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TruncationPolicy {
    /// Start from `4·max(4ρ, support of f0)` and double whenever the
    /// k-weighted mass beyond `0.9K` exceeds the tail threshold, up to `cap`.
    Adaptive { cap: usize },
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeControls {
    pub rtol: f64,
    pub atol: f64,
    pub truncation: TruncationPolicy,
    /// `m_2` above this raises [`BlowUpFlag::MomentCeiling`].
    pub moment_ceiling: f64,
    /// Step sizes below this raise [`BlowUpFlag::StepUnderflow`].
    pub min_step: f64,
    pub tail_threshold: f64,
}

impl Default for OdeControls {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            truncation: TruncationPolicy::Adaptive { cap: 1 << 12 },
            moment_ceiling: 1e6,
            min_step: 1e-12,
            tail_threshold: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowUpFlag {
    StepUnderflow,
    MomentCeiling,
    /// The tail needs a truncation beyond the adaptive cap.
    TruncationCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    BlowUp { flag: BlowUpFlag, t: f64 },
}

impl Outcome {
    pub fn blow_up_time(&self) -> Option<f64> {
        match self {
            Outcome::Completed => None,
            Outcome::BlowUp { t, .. } => Some(*t),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evaluations: u64,
    pub clipped_steps: u64,
    pub truncation_doublings: u32,
    pub final_truncation: usize,
}

#[derive(Debug, Clone)]
pub struct MeanFieldRun {
    /// States at the grid times reached.
    pub snapshots: Vec<MeanFieldState>,
    /// Size-biased states at the same times, when integrated.
    pub size_biased: Vec<SizeBiasedState>,
    /// State where integration stopped.
    pub final_state: MeanFieldState,
    pub outcome: Outcome,
    pub annotations: Vec<String>,
    pub stats: IntegrationStats,
}

pub const NO_SOLUTION_NOTE: &str = "no mean-field solution exists; output is a truncation artifact";
pub const BLOW_UP_NOTE: &str =
    "a truncated system cannot gel; confirm divergence by comparing truncation sizes";

// Dormand–Prince 5(4).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct System<'a> {
    kernel: &'a Kernel,
    product: bool,
    coupled: bool,
    len: usize,
}

impl System<'_> {
    /// Fills `dy` and returns the rate at which mass leaves the truncation.
    fn eval(&self, y: &[f64], dy: &mut [f64]) -> f64 {
        let (f, p) = y.split_at(self.len);
        let (df, dp) = dy.split_at_mut(self.len);
        let flux = if self.product {
            edg_rhs_product(f, self.kernel, df).unwrap_or(f64::NAN)
        } else {
            edg_rhs(f, self.kernel, df)
        };
        if self.coupled {
            if self.product {
                sbm_rhs_product(p, f, self.kernel, dp).unwrap_or(f64::NAN);
            } else {
                sbm_rhs(p, f, self.kernel, dp);
            }
        }
        self.len as f64 * flux
    }
}

fn initial_truncation(f0: &MeanFieldState, policy: TruncationPolicy) -> Result<usize> {
    let support = f0.f.iter().rposition(|&v| v > 0.0).unwrap_or(0);
    match policy {
        TruncationPolicy::Fixed(k) => {
            if support > k {
                return Err(Error::InvalidInitial(format!(
                    "initial profile reaches size {support} beyond the fixed truncation {k}"
                )));
            }
            Ok(k)
        }
        TruncationPolicy::Adaptive { cap } => {
            if support > cap {
                return Err(Error::InvalidInitial(format!(
                    "initial profile reaches size {support} beyond the truncation cap {cap}"
                )));
            }
            let start = (4.0 * f0.rho).ceil().max(support as f64).max(2.0) as usize * 4;
            Ok(start.min(cap).max(support).max(2))
        }
    }
}

fn resize_state(y: &[f64], old_len: usize, new_len: usize, coupled: bool) -> Vec<f64> {
    let mut out = vec![0.0; if coupled { 2 * new_len } else { new_len }];
    out[..old_len].copy_from_slice(&y[..old_len]);
    if coupled {
        out[new_len..new_len + old_len].copy_from_slice(&y[old_len..2 * old_len]);
    }
    out
}

/// Clips small negative entries of one block and restores its pre-clip sum.
/// Returns `Err` with the offending entry when the negativity is too large
/// to be roundoff.
fn clip_block(block: &mut [f64], atol: f64) -> std::result::Result<bool, (usize, f64)> {
    let mut clipped = 0.0;
    for (k, &v) in block.iter().enumerate() {
        if v < -atol {
            return Err((k, v));
        }
        if v < 0.0 {
            clipped -= v;
        }
    }
    if clipped == 0.0 {
        return Ok(false);
    }
    if clipped > 10.0 * atol {
        let (k, v) = block
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |m, (k, v)| if v < m.1 { (k, v) } else { m });
        return Err((k, v));
    }
    let before: f64 = block.iter().sum();
    block.iter_mut().for_each(|v| *v = v.max(0.0));
    let after: f64 = block.iter().sum();
    if after > 0.0 {
        let scale = before / after;
        block.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(true)
}

/// Integrates the truncated hierarchy from `f0` to `t_end` with an adaptive
/// Dormand–Prince pair, recording states at each time of `grid`.
///
/// When `p0` is given the size-biased equation is integrated alongside.
/// Product kernels use the `O(K)` right-hand sides.
pub fn integrate(
    f0: &MeanFieldState,
    kernel: &Kernel,
    t_end: f64,
    controls: &OdeControls,
    p0: Option<&SizeBiasedState>,
    grid: &[f64],
) -> Result<MeanFieldRun> {
    validate_grid(grid, f0.t, t_end)?;
    if !(controls.rtol > 0.0 && controls.atol > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    let checked = MeanFieldState::new(f0.f.clone(), f0.t)?;
    let rho = f0.rho;
    if (checked.rho - rho).abs() > 1e-6 * rho.max(1.0) {
        return Err(Error::InvalidInitial(format!(
            "declared density {rho} differs from the profile's first moment {}",
            checked.rho
        )));
    }
    let coupled = p0.is_some();
    let mut truncation = initial_truncation(f0, controls.truncation)?;
    if let Some(p) = p0 {
        SizeBiasedState::new(p.p.clone(), p.t)?;
        let p_support = p.p.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        if p_support > truncation {
            return Err(Error::InvalidInitial(format!(
                "size-biased profile reaches size {p_support} beyond the truncation {truncation}"
            )));
        }
    }

    let mut annotations = Vec::new();
    if kernel.separable_gamma().is_some_and(|g| g > 2.0) {
        warn!("{NO_SOLUTION_NOTE}");
        annotations.push(NO_SOLUTION_NOTE.to_string());
    }

    let mut len = truncation + 1;
    let mut y = vec![0.0; if coupled { 2 * len } else { len }];
    let support = f0.f.len().min(len);
    y[..support].copy_from_slice(&f0.f[..support]);
    if let Some(p) = p0 {
        let ps = p.p.len().min(len);
        y[len..len + ps].copy_from_slice(&p.p[..ps]);
    }

    let product = kernel.separable_gamma().is_some();
    let mut system = System {
        kernel,
        product,
        coupled,
        len,
    };
    let mut stats = IntegrationStats::default();
    let mut t = f0.t;
    let mut leak = f0.leak;
    let mut snapshots = Vec::with_capacity(grid.len());
    let mut size_biased = Vec::new();
    let mut grid_iter = grid.iter().copied().peekable();

    let record = |y: &[f64], len: usize, t: f64, leak: f64| {
        let state = MeanFieldState {
            f: y[..len].to_vec(),
            t,
            rho,
            leak,
        };
        let p = coupled.then(|| SizeBiasedState {
            p: y[len..2 * len].to_vec(),
            t,
        });
        (state, p)
    };

    let mut k: Vec<Vec<f64>> = vec![vec![0.0; y.len()]; 7];
    let mut fluxes = [0.0; 7];
    fluxes[0] = system.eval(&y, &mut k[0]);
    stats.rhs_evaluations += 1;

    // Absolute tolerance on k²·f_k.
    let weighted_tol = |n: usize, len: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let k = (i % len).max(1) as f64;
                controls.atol / (k * k)
            })
            .collect()
    };
    let mut abs_tol = weighted_tol(y.len(), len);
    let scale = |y: &[f64], i: usize| abs_tol[i] + controls.rtol * y[i].abs();
    let mut h = {
        let d0 = y.iter().enumerate().map(|(i, v)| (v / scale(&y, i)).abs()).fold(0.0, f64::max);
        let d1 = k[0]
            .iter()
            .enumerate()
            .map(|(i, v)| (v / scale(&y, i)).abs())
            .fold(0.0, f64::max);
        if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
    };
    h = h.min((t_end - t).max(0.0)).max(controls.min_step);

    let mut outcome = Outcome::Completed;
    let mut stage = vec![0.0; y.len()];
    let mut y_new = vec![0.0; y.len()];

    loop {
        while grid_iter.peek().is_some_and(|&g| g <= t) {
            let (s, p) = record(&y, len, t, leak);
            snapshots.push(MeanFieldState { t: grid_iter.next().unwrap_or(t), ..s });
            if let Some(p) = p {
                size_biased.push(p);
            }
        }
        if t >= t_end {
            break;
        }
        let target = grid_iter.peek().copied().unwrap_or(t_end).min(t_end);
        let remaining = target - t;
        if remaining <= 1e-13 * t.abs().max(1.0) {
            t = target;
            continue;
        }
        let step = h.min(remaining);

        for s in 1..7 {
            for i in 0..y.len() {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + step * acc;
            }
            fluxes[s] = system.eval(&stage, &mut k[s]);
        }
        stats.rhs_evaluations += 6;
        // The seventh stage is evaluated at the fifth-order solution.
        y_new.copy_from_slice(&stage);
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * step;
            let sc = abs_tol[i] + controls.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }

        let mut accepted = err <= 1.0;
        let mut clipped = false;
        if accepted {
            let (fb, pb) = y_new.split_at_mut(len);
            let blocks: [&mut [f64]; 2] = [fb, pb];
            for block in blocks {
                match clip_block(block, controls.atol) {
                    Ok(c) => clipped |= c,
                    Err((index, value)) => {
                        debug!("negativity f[{index}] = {value} at t = {t}; shrinking step");
                        accepted = false;
                        if step * 0.5 < controls.min_step {
                            return Err(Error::Negativity {
                                k: index,
                                value,
                                t: t + step,
                            });
                        }
                        break;
                    }
                }
            }
            if !accepted {
                stats.rejected += 1;
                h = step * 0.5;
                continue;
            }
        }

        if !accepted {
            stats.rejected += 1;
            let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h = step * factor;
            if h < controls.min_step {
                outcome = Outcome::BlowUp {
                    flag: BlowUpFlag::StepUnderflow,
                    t,
                };
                break;
            }
            continue;
        }

        stats.accepted += 1;
        let flux_integral: f64 = (0..6).map(|j| A[6][j] * fluxes[j]).sum();
        leak += step * flux_integral.max(0.0);
        t = if step == remaining { target } else { t + step };
        std::mem::swap(&mut y, &mut y_new);
        if clipped {
            stats.clipped_steps += 1;
            fluxes[0] = system.eval(&y, &mut k[0]);
            stats.rhs_evaluations += 1;
        } else {
            k.swap(0, 6);
            fluxes[0] = fluxes[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        // A step clipped to a grid time does not shrink the next proposal.
        h = if step < h { h.max(step * factor) } else { step * factor };

        let tail_start = (9 * truncation).div_ceil(10);
        let tail: f64 = (tail_start + 1..len).map(|i| i as f64 * y[i]).sum();
        if tail > controls.tail_threshold {
            match controls.truncation {
                TruncationPolicy::Adaptive { cap } if truncation * 2 <= cap => {
                    let new_truncation = truncation * 2;
                    debug!("truncation {truncation} -> {new_truncation} at t = {t}");
                    let new_len = new_truncation + 1;
                    y = resize_state(&y, len, new_len, coupled);
                    truncation = new_truncation;
                    len = new_len;
                    system.len = len;
                    k = vec![vec![0.0; y.len()]; 7];
                    stage = vec![0.0; y.len()];
                    y_new = vec![0.0; y.len()];
                    abs_tol = weighted_tol(y.len(), len);
                    fluxes[0] = system.eval(&y, &mut k[0]);
                    stats.rhs_evaluations += 1;
                    stats.truncation_doublings += 1;
                }
                TruncationPolicy::Adaptive { .. } => {
                    outcome = Outcome::BlowUp {
                        flag: BlowUpFlag::TruncationCap,
                        t,
                    };
                    break;
                }
                TruncationPolicy::Fixed(_) => {}
            }
        }

        let m2: f64 = (1..len).map(|i| (i * i) as f64 * y[i]).sum();
        if m2 > controls.moment_ceiling {
            outcome = Outcome::BlowUp {
                flag: BlowUpFlag::MomentCeiling,
                t,
            };
            break;
        }
    }

    if matches!(outcome, Outcome::BlowUp { .. }) {
        warn!("mean-field blow-up flagged: {outcome:?}");
        annotations.push(BLOW_UP_NOTE.to_string());
        // Grid times exactly at the stopping time are still valid.
        while grid_iter.peek().is_some_and(|&g| g <= t) {
            let (s, p) = record(&y, len, t, leak);
            snapshots.push(MeanFieldState { t: grid_iter.next().unwrap_or(t), ..s });
            if let Some(p) = p {
                size_biased.push(p);
            }
        }
    }
    stats.final_truncation = truncation;
    let (final_state, _) = record(&y, len, t, leak);
    Ok(MeanFieldRun {
        snapshots,
        size_biased,
        final_state,
        outcome,
        annotations,
        stats,
    })
}
