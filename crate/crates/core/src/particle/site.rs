use std::collections::BTreeMap;

use rand::Rng;

use super::count::{CountState, EventDecision};
use super::run::{Snapshot, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::grid::validate_grid;
use crate::kernel::Kernel;
use crate::rng::rng_from_seed;
use crate::stats::CompensatedSum;

/// Guard rail for the reference engine.
pub const MAX_REFERENCE_SITES: usize = 1000;

/// Events between full recomputations of the per-site donor rates.
const SITE_AUDIT_INTERVAL: u64 = 1000;

/// An [`EventDecision`] plus the uniforms that pick concrete sites inside
/// the chosen size classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteDecision {
    pub event: EventDecision,
    pub donor_pick_u: f64,
    pub recipient_pick_u: f64,
}

impl SiteDecision {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            event: EventDecision::draw(rng),
            donor_pick_u: rng.random(),
            recipient_pick_u: rng.random(),
        }
    }
}

/// The particle system with an explicit occupation number per site.
///
/// Each site keeps its donor rate `r_x = Σ_{y≠x} c(η_x, η_y)`, updated in
/// `O(L)` per event. Sampling scans sites directly and never looks at
/// occupation counts, which keeps this engine independent of
/// [`CountState`].
#[derive(Debug, Clone)]
pub struct SiteState {
    kernel: Kernel,
    occupations: Vec<usize>,
    donor_rates: Vec<f64>,
    total_weight: f64,
    time: f64,
    events: u64,
    since_audit: u64,
}

impl SiteState {
    pub fn new(kernel: Kernel, occupations: Vec<usize>) -> Result<Self> {
        let sites = occupations.len();
        if sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least two sites, got {sites}"
            )));
        }
        if sites > MAX_REFERENCE_SITES {
            return Err(Error::SystemTooLarge {
                max: MAX_REFERENCE_SITES,
                got: sites,
            });
        }
        let particles: usize = occupations.iter().sum();
        if !kernel.supports(particles) {
            return Err(Error::InvalidParameter(format!(
                "kernel is defined up to size {:?} but the system holds {particles} particles",
                kernel.max_size()
            )));
        }
        let mut state = Self {
            kernel,
            donor_rates: vec![0.0; sites],
            occupations,
            total_weight: 0.0,
            time: 0.0,
            events: 0,
            since_audit: 0,
        };
        state.refresh_rates();
        Ok(state)
    }

    /// Uniform independent placement of `particles` particles.
    pub fn init_iid(kernel: Kernel, sites: usize, particles: usize, seed: u64) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least two sites, got {sites}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut occupations = vec![0usize; sites];
        for _ in 0..particles {
            occupations[rng.random_range(0..sites)] += 1;
        }
        Self::new(kernel, occupations)
    }

    /// Lays the counts of `state` out on sites in ascending size order.
    pub fn from_count_state(state: &CountState) -> Result<Self> {
        let mut occupations = vec![0usize; state.count(0) as usize];
        for (k, n) in state.occupied() {
            occupations.extend(std::iter::repeat_n(k, n as usize));
        }
        let mut s = Self::new(state.kernel().clone(), occupations)?;
        s.time = state.time();
        Ok(s)
    }

    pub fn sites(&self) -> usize {
        self.occupations.len()
    }

    pub fn particles(&self) -> usize {
        self.occupations.iter().sum()
    }

    pub fn occupations(&self) -> &[usize] {
        &self.occupations
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `n_k` for occupied sizes.
    pub fn counts_map(&self) -> BTreeMap<usize, u64> {
        let mut map = BTreeMap::new();
        for &k in self.occupations.iter().filter(|&&k| k > 0) {
            *map.entry(k).or_insert(0) += 1;
        }
        map
    }

    pub fn is_absorbed(&self) -> bool {
        self.occupations.iter().filter(|&&k| k > 0).count() <= 1
    }

    /// Exit rate from the maintained per-site rates.
    pub fn exit_rate(&self) -> f64 {
        if self.is_absorbed() {
            return 0.0;
        }
        self.total_weight / (self.sites() - 1) as f64
    }

    /// Exit rate as the literal sum over ordered site pairs, `O(L²)`.
    pub fn exit_rate_by_pairs(&self) -> f64 {
        let mut sum = CompensatedSum::new();
        for (x, &a) in self.occupations.iter().enumerate() {
            for (y, &b) in self.occupations.iter().enumerate() {
                if x != y {
                    sum.add(self.kernel.rate(a, b));
                }
            }
        }
        sum.value() / (self.sites() - 1) as f64
    }

    fn site_rate(&self, x: usize) -> f64 {
        let a = self.occupations[x];
        if a == 0 {
            return 0.0;
        }
        self.occupations
            .iter()
            .enumerate()
            .filter(|&(y, _)| y != x)
            .map(|(_, &b)| self.kernel.rate(a, b))
            .sum()
    }

    fn refresh_rates(&mut self) {
        for x in 0..self.sites() {
            self.donor_rates[x] = self.site_rate(x);
        }
        self.total_weight = self.donor_rates.iter().sum();
        self.since_audit = 0;
    }

    /// Picks an ordered site pair `(x, y)` with probability proportional to
    /// `c(η_x, η_y)`.
    pub fn sample_pair(&self, donor_u: f64, recipient_u: f64) -> Result<(usize, usize)> {
        if self.is_absorbed() {
            return Err(Error::Absorbed);
        }
        let target = donor_u * self.total_weight;
        let mut acc = 0.0;
        let mut donor = None;
        for (x, &r) in self.donor_rates.iter().enumerate() {
            if r <= 0.0 {
                continue;
            }
            donor = Some(x);
            acc += r;
            if target < acc {
                break;
            }
        }
        let x = donor.ok_or(Error::Absorbed)?;
        let a = self.occupations[x];
        let target = recipient_u * self.donor_rates[x];
        let mut acc = 0.0;
        let mut recipient = None;
        for (y, &b) in self.occupations.iter().enumerate() {
            if y == x || b == 0 {
                continue;
            }
            recipient = Some(y);
            acc += self.kernel.rate(a, b);
            if target < acc {
                break;
            }
        }
        Ok((x, recipient.ok_or(Error::Absorbed)?))
    }

    /// Moves one particle from site `x` to site `y`.
    pub fn apply_move(&mut self, x: usize, y: usize) -> Result<()> {
        let (a, b) = (self.occupations[x], self.occupations[y]);
        if x == y || a == 0 || b == 0 {
            return Err(Error::InvalidExchange {
                donor: a,
                recipient: b,
                reason: "need two distinct occupied sites",
            });
        }
        let kernel = &self.kernel;
        let mut total = 0.0;
        for (z, &e) in self.occupations.iter().enumerate() {
            if z == x || z == y || e == 0 {
                total += self.donor_rates[z];
                continue;
            }
            let r = &mut self.donor_rates[z];
            *r += kernel.rate(e, a - 1) - kernel.rate(e, a) + kernel.rate(e, b + 1)
                - kernel.rate(e, b);
            total += *r;
        }
        self.occupations[x] = a - 1;
        self.occupations[y] = b + 1;
        let (rx, ry) = (self.site_rate(x), self.site_rate(y));
        total += rx - self.donor_rates[x] + ry - self.donor_rates[y];
        self.donor_rates[x] = rx;
        self.donor_rates[y] = ry;
        self.total_weight = total;
        self.events += 1;
        self.since_audit += 1;
        if self.since_audit >= SITE_AUDIT_INTERVAL {
            self.refresh_rates();
        }
        Ok(())
    }

    /// One event of the chain: exponential holding time, then a site pair.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let d = EventDecision::draw(rng);
        let rate = self.exit_rate();
        if rate == 0.0 {
            return Err(Error::Absorbed);
        }
        let dt = -d.time_u.ln() / rate;
        let (x, y) = self.sample_pair(d.donor_u, d.recipient_u)?;
        self.apply_move(x, y)?;
        self.time += dt;
        Ok(dt)
    }

    /// One event driven by a shared decision.
    ///
    /// Donor and recipient sizes are chosen exactly as in
    /// [`CountState::step_with`], but their weights are accumulated site by
    /// site; the concrete sites are then picked uniformly within the size
    /// classes. Returns the holding time and the chosen sites.
    pub fn step_with(&mut self, decision: &SiteDecision) -> Result<(f64, usize, usize)> {
        let rate = self.exit_rate();
        if rate == 0.0 {
            return Err(Error::Absorbed);
        }
        let dt = -decision.event.time_u.ln() / rate;

        let mut by_size: BTreeMap<usize, (f64, Vec<usize>)> = BTreeMap::new();
        for (x, &a) in self.occupations.iter().enumerate() {
            if a > 0 {
                let entry = by_size.entry(a).or_default();
                entry.0 += self.donor_rates[x];
                entry.1.push(x);
            }
        }
        let donor_size = pick_class(&by_size, decision.event.donor_u * self.total_weight)?;
        let donors = &by_size[&donor_size].1;
        let x = donors[pick_index(decision.donor_pick_u, donors.len())];

        let mut targets: BTreeMap<usize, (f64, Vec<usize>)> = BTreeMap::new();
        for (y, &b) in self.occupations.iter().enumerate() {
            if y != x && b > 0 {
                let entry = targets.entry(b).or_default();
                entry.0 += self.kernel.rate(donor_size, b);
                entry.1.push(y);
            }
        }
        let recipient_size =
            pick_class(&targets, decision.event.recipient_u * self.donor_rates[x])?;
        let recipients = &targets[&recipient_size].1;
        let y = recipients[pick_index(decision.recipient_pick_u, recipients.len())];

        self.apply_move(x, y)?;
        self.time += dt;
        Ok((dt, x, y))
    }

    /// Advances to `t_end` recording the counts at each grid time.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        grid: &[f64],
        rng: &mut R,
    ) -> Result<TrajectoryRecord> {
        validate_grid(grid, self.time, t_end)?;
        let start_events = self.events;
        let mut snapshots = Vec::with_capacity(grid.len());
        let mut absorbed_at = self.is_absorbed().then_some(self.time);
        let mut grid = grid.iter().copied().peekable();
        while absorbed_at.is_none() {
            let d = EventDecision::draw(rng);
            let next = self.time - d.time_u.ln() / self.exit_rate();
            while let Some(&g) = grid.peek() {
                if g >= next {
                    break;
                }
                snapshots.push(Snapshot {
                    t: g,
                    counts: self.counts_map(),
                });
                grid.next();
            }
            if next > t_end {
                self.time = t_end;
                break;
            }
            let (x, y) = self.sample_pair(d.donor_u, d.recipient_u)?;
            self.apply_move(x, y)?;
            self.time = next;
            if self.is_absorbed() {
                absorbed_at = Some(next);
            }
        }
        for g in grid {
            snapshots.push(Snapshot {
                t: g,
                counts: self.counts_map(),
            });
        }
        Ok(TrajectoryRecord {
            sites: self.sites(),
            particles: self.particles(),
            snapshots,
            events: self.events - start_events,
            absorbed_at,
        })
    }
}

fn pick_class(classes: &BTreeMap<usize, (f64, Vec<usize>)>, target: f64) -> Result<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (&size, (w, _)) in classes {
        if *w <= 0.0 {
            continue;
        }
        last = Some(size);
        acc += w;
        if target < acc {
            break;
        }
    }
    last.ok_or(Error::Absorbed)
}

fn pick_index(u: f64, len: usize) -> usize {
    ((u * len as f64) as usize).min(len - 1)
}

/// Simulates `L` sites with `N` uniformly placed particles at site level up
/// to `t_end`, observing on `grid`.
pub fn site_reference_run(
    kernel: Kernel,
    sites: usize,
    particles: usize,
    seed: u64,
    t_end: f64,
    grid: &[f64],
) -> Result<TrajectoryRecord> {
    let mut state = SiteState::init_iid(kernel, sites, particles, seed)?;
    let mut rng = rng_from_seed(crate::rng::split_seed(seed, 0));
    state.run_until(t_end, grid, &mut rng)
}

/// Drives the count engine and the site engine from one decision stream for
/// up to `steps` events and reports the first event index at which their
/// counts or holding times differ, if any.
pub fn coupled_divergence(
    kernel: Kernel,
    sites: usize,
    particles: usize,
    seed: u64,
    steps: u64,
) -> Result<Option<u64>> {
    let mut site = SiteState::init_iid(kernel.clone(), sites, particles, crate::rng::split_seed(seed, 0))?;
    let mut count = CountState::from_occupations(kernel, site.occupations())?;
    let mut rng = rng_from_seed(crate::rng::split_seed(seed, 1));
    for i in 0..steps {
        if count.is_absorbed() || site.is_absorbed() {
            return Ok((count.is_absorbed() != site.is_absorbed()).then_some(i));
        }
        let d = SiteDecision::draw(&mut rng);
        let dt_count = count.step_with(&d.event)?;
        let (dt_site, _, _) = site.step_with(&d)?;
        if dt_count != dt_site || count.counts_map() != site.counts_map() {
            return Ok(Some(i));
        }
    }
    Ok(None)
}
