use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::count::{CountState, EventDecision};
use crate::error::Result;
use crate::grid::validate_grid;

/// The configuration seen at one observation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// `n_k` for occupied sizes `k ≥ 1`.
    pub counts: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOutcome {
    pub events: u64,
    /// Time of the event that left all particles on one site, if reached.
    pub absorbed_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub sites: usize,
    pub particles: usize,
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
    pub absorbed_at: Option<f64>,
}

impl CountState {
    /// Advances to `t_end` (or absorption) and calls `observe(t, state)` at
    /// every grid time with the state left by the last event at or before `t`.
    ///
    /// The grid must be sorted and lie in `[self.time(), t_end]`. On return
    /// the state time is `t_end` unless the chain was absorbed earlier, in
    /// which case it is the absorption time.
    pub fn run_observed<R, F>(
        &mut self,
        t_end: f64,
        grid: &[f64],
        rng: &mut R,
        mut observe: F,
    ) -> Result<RunOutcome>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, &CountState),
    {
        validate_grid(grid, self.time(), t_end)?;
        let start_events = self.events();
        let mut absorbed_at = self.is_absorbed().then(|| self.time());
        let mut grid = grid.iter().copied().peekable();
        loop {
            if absorbed_at.is_some() {
                break;
            }
            let decision = EventDecision::draw(rng);
            let next = self.time() - decision.time_u.ln() / self.total_rate();
            while let Some(&g) = grid.peek() {
                if g < next {
                    observe(g, self);
                    grid.next();
                } else {
                    break;
                }
            }
            if next > t_end {
                self.set_time(t_end);
                break;
            }
            let (k, l) = self.select_event(decision.donor_u, decision.recipient_u)?;
            self.apply_exchange(k, l)?;
            self.set_time(next);
            if self.is_absorbed() {
                absorbed_at = Some(next);
            }
        }
        for g in grid {
            observe(g, self);
        }
        Ok(RunOutcome {
            events: self.events() - start_events,
            absorbed_at,
        })
    }

    /// [`CountState::run_observed`] collecting a snapshot at every grid time.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        grid: &[f64],
        rng: &mut R,
    ) -> Result<TrajectoryRecord> {
        let mut snapshots = Vec::with_capacity(grid.len());
        let outcome = self.run_observed(t_end, grid, rng, |t, s| {
            snapshots.push(Snapshot {
                t,
                counts: s.counts_map(),
            })
        })?;
        Ok(TrajectoryRecord {
            sites: self.sites(),
            particles: self.particles(),
            snapshots,
            events: outcome.events,
            absorbed_at: outcome.absorbed_at,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::rng::rng_from_seed;

    fn linear() -> Kernel {
        Kernel::product(1.0).unwrap()
    }

    #[test]
    fn zero_length_run_observes_once() {
        let mut s = CountState::init_iid(linear(), 20, 20, 1).unwrap();
        let before = s.counts_map();
        let rec = s.run_until(0.0, &[0.0], &mut rng_from_seed(1)).unwrap();
        assert_eq!(rec.snapshots.len(), 1);
        assert_eq!(rec.events, 0);
        assert_eq!(rec.snapshots[0].counts, before);
    }

    #[test]
    fn one_record_per_grid_time() {
        let mut s = CountState::init_iid(linear(), 20, 20, 1).unwrap();
        let rec = s.run_until(1.0, &[0.0, 0.5, 1.0], &mut rng_from_seed(2)).unwrap();
        assert_eq!(rec.snapshots.iter().map(|s| s.t).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert!(rec.events > 0);
        assert!(rec.snapshots.iter().all(|s| s.counts.iter().map(|(k, n)| k * *n as usize).sum::<usize>() == 20));
    }

    #[test]
    fn grid_outside_range_is_rejected() {
        let mut s = CountState::init_iid(linear(), 20, 20, 1).unwrap();
        assert!(s.run_until(1.0, &[0.0, 2.0], &mut rng_from_seed(2)).is_err());
    }

    #[test]
    fn observation_is_cadlag() {
        // Observed configurations must equal the state after the last event
        // before the grid time: replaying with step() reproduces them.
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let mut a = CountState::init_iid(linear(), 30, 30, 4).unwrap();
        let rec = a.run_until(1.0, &grid, &mut rng_from_seed(6)).unwrap();

        let mut b = CountState::init_iid(linear(), 30, 30, 4).unwrap();
        let mut rng = rng_from_seed(6);
        let mut path = vec![(0.0, b.counts_map())];
        while !b.is_absorbed() && b.time() <= 1.0 {
            b.step(&mut rng).unwrap();
            path.push((b.time(), b.counts_map()));
        }
        for snap in &rec.snapshots {
            let expected = &path.iter().rev().find(|(t, _)| *t <= snap.t).unwrap().1;
            assert_eq!(&snap.counts, expected, "at t = {}", snap.t);
        }
    }

    #[test]
    fn two_site_absorption_is_exponential() {
        // η = (1, 1): two ordered pairs of rate 1, the first event absorbs.
        let n = 20_000;
        let mut rng = rng_from_seed(99);
        let times: Vec<f64> = (0..n)
            .map(|_| {
                let mut s = CountState::from_occupations(linear(), &[1, 1]).unwrap();
                s.run_until(100.0, &[], &mut rng).unwrap().absorbed_at.unwrap()
            })
            .collect();
        let mean = times.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn initially_absorbed_reports_time_zero() {
        let mut s = CountState::from_occupations(linear(), &[0, 1, 0]).unwrap();
        let rec = s.run_until(1.0, &[0.0, 1.0], &mut rng_from_seed(0)).unwrap();
        assert_eq!(rec.absorbed_at, Some(0.0));
        assert_eq!(rec.snapshots.len(), 2);
    }
}
