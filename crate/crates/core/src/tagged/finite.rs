use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::validate_grid;
use crate::particle::{CountState, EventDecision};

/// Where the tagged particle is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// A uniformly chosen site.
    UniformSite,
    /// A site currently holding this many particles.
    GivenSize(usize),
    /// A site of maximal occupation. Its initial occupation grows with `L`,
    /// so it falls outside the admissible initial conditions.
    MaxOccupied,
}

impl Placement {
    pub fn is_admissible(&self) -> bool {
        !matches!(self, Placement::MaxOccupied)
    }
}

/// Joint state of the configuration and the tagged site's occupation.
///
/// The counts include the tagged site, which holds `w ≥ 1` particles.
#[derive(Debug, Clone)]
pub struct TaggedCountState {
    base: CountState,
    w: usize,
}

/// Exact finite-`L` rates of the moves of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRates {
    /// `W → W+1`: another site donates to the tagged site.
    pub birth: f64,
    /// `W → W−1`: the tagged site donates and the tagged particle stays.
    pub death_stay: f64,
    /// `W → l+1` for each occupied size `l`: the tagged particle itself
    /// jumps to a site of size `l`.
    pub relocate: Vec<(usize, f64)>,
}

impl TaggedRates {
    pub fn total(&self) -> f64 {
        self.birth + self.death_stay + self.relocate.iter().map(|(_, r)| r).sum::<f64>()
    }

    /// Rates keyed by the new value of `W`, excluding moves that leave it
    /// unchanged.
    pub fn by_target(&self, w: usize) -> BTreeMap<usize, f64> {
        let mut table = BTreeMap::new();
        let mut add = |target: usize, rate: f64| {
            if target != w && rate > 0.0 {
                *table.entry(target).or_insert(0.0) += rate;
            }
        };
        add(w + 1, self.birth);
        add(w - 1, self.death_stay);
        for &(l, r) in &self.relocate {
            add(l + 1, r);
        }
        table
    }
}

/// Uniforms driving one joint event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedDecision {
    pub event: EventDecision,
    pub donor_tag_u: f64,
    pub recipient_tag_u: f64,
    pub relocate_u: f64,
}

impl TaggedDecision {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            event: EventDecision::draw(rng),
            donor_tag_u: rng.random(),
            recipient_tag_u: rng.random(),
            relocate_u: rng.random(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedPoint {
    pub t: f64,
    #[serde(rename = "W")]
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedTrajectory {
    pub points: Vec<TaggedPoint>,
    pub events: u64,
    pub absorbed_at: Option<f64>,
}

/// Adds a tagged particle to `state` according to `rule`.
pub fn init_tagged<R: Rng + ?Sized>(
    state: &CountState,
    rule: Placement,
    rng: &mut R,
) -> Result<TaggedCountState> {
    let size = match rule {
        Placement::UniformSite => {
            let site = rng.random_range(0..state.sites() as u64);
            let mut acc = state.count(0);
            let mut chosen = 0;
            if site >= acc {
                for (k, n) in state.occupied() {
                    acc += n;
                    if site < acc {
                        chosen = k;
                        break;
                    }
                }
            }
            chosen
        }
        Placement::GivenSize(k) => {
            if state.count(k) == 0 {
                return Err(Error::NoSiteOfSize(k));
            }
            k
        }
        Placement::MaxOccupied => {
            warn!("placing the tagged particle on a maximal site is not an admissible initial condition");
            state.max_size()
        }
    };
    let mut counts = state.counts_map();
    if size > 0 {
        let n = counts.get_mut(&size).ok_or(Error::NoSiteOfSize(size))?;
        *n -= 1;
        if *n == 0 {
            counts.remove(&size);
        }
    }
    *counts.entry(size + 1).or_insert(0) += 1;
    let mut base = CountState::from_counts(state.kernel().clone(), state.sites(), counts)?;
    base.set_time(state.time());
    Ok(TaggedCountState { base, w: size + 1 })
}

impl TaggedCountState {
    /// Wraps counts that already contain a tagged site of size `w`.
    pub fn new(base: CountState, w: usize) -> Result<Self> {
        if w == 0 || base.count(w) == 0 {
            return Err(Error::NoSiteOfSize(w));
        }
        Ok(Self { base, w })
    }

    pub fn base(&self) -> &CountState {
        &self.base
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn time(&self) -> f64 {
        self.base.time()
    }

    /// `m_k`: the counts with the tagged site removed.
    fn others(&self, k: usize) -> f64 {
        (self.base.count(k) - u64::from(k == self.w)) as f64
    }

    pub fn rates(&self) -> TaggedRates {
        let kernel = self.base.kernel();
        let w = self.w;
        let scale = 1.0 / (self.base.sites() - 1) as f64;
        let mut birth = 0.0;
        let mut donate = 0.0;
        let mut relocate = Vec::new();
        for &k in self.base.active_sizes() {
            let m = self.others(k);
            if m == 0.0 {
                continue;
            }
            let c = kernel.rate(k, w);
            birth += c * m;
            donate += c * m;
            relocate.push((k, c * m * scale / w as f64));
        }
        TaggedRates {
            birth: birth * scale,
            death_stay: (w - 1) as f64 / w as f64 * donate * scale,
            relocate,
        }
    }

    /// One joint event from shared uniforms. Returns the holding time.
    pub fn step_with(&mut self, d: &TaggedDecision) -> Result<f64> {
        let rate = self.base.total_rate();
        if rate == 0.0 {
            return Err(Error::Absorbed);
        }
        let (k, l) = self.base.select_event(d.event.donor_u, d.event.recipient_u)?;
        let w = self.w;
        let donor_tagged = k == w && d.donor_tag_u * (self.base.count(k) as f64) < 1.0;
        let new_w = if donor_tagged {
            if d.relocate_u * (w as f64) < 1.0 {
                l + 1
            } else {
                w - 1
            }
        } else {
            let candidates = self.base.count(l) - u64::from(k == l);
            if l == w && d.recipient_tag_u * (candidates as f64) < 1.0 {
                w + 1
            } else {
                w
            }
        };
        self.base.apply_exchange(k, l)?;
        let dt = -d.event.time_u.ln() / rate;
        self.base.set_time(self.base.time() + dt);
        self.w = new_w;
        Ok(dt)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        self.step_with(&TaggedDecision::draw(rng))
    }

    /// Advances to `t_end`, recording `W` at each grid time.
    pub fn run_until<R: Rng + ?Sized>(
        &mut self,
        t_end: f64,
        grid: &[f64],
        rng: &mut R,
    ) -> Result<TaggedTrajectory> {
        validate_grid(grid, self.time(), t_end)?;
        let mut points = Vec::with_capacity(grid.len());
        let mut grid = grid.iter().copied().peekable();
        let mut events = 0;
        let mut absorbed_at = self.base.is_absorbed().then(|| self.time());
        while absorbed_at.is_none() {
            let d = TaggedDecision::draw(rng);
            let next = self.time() - d.event.time_u.ln() / self.base.total_rate();
            while let Some(&g) = grid.peek() {
                if g >= next {
                    break;
                }
                points.push(TaggedPoint { t: g, w: self.w });
                grid.next();
            }
            if next > t_end {
                self.base.set_time(t_end);
                break;
            }
            self.step_with(&d)?;
            self.base.set_time(next);
            events += 1;
            if self.base.is_absorbed() {
                absorbed_at = Some(next);
            }
        }
        points.extend(grid.map(|t| TaggedPoint { t, w: self.w }));
        Ok(TaggedTrajectory {
            points,
            events,
            absorbed_at,
        })
    }
}

/// The finite-`L` generator acting on `g` at `n = W`, term by term in the
/// form with separate birth, death and relocation parts and the explicit
/// self-interaction correction.
pub fn generator_full<G: Fn(usize) -> f64>(state: &TaggedCountState, g: G) -> f64 {
    let base = state.base();
    let kernel = base.kernel();
    let n = state.w();
    let l = base.sites() as f64;
    let big = l / (l - 1.0);
    let nf = n as f64;
    let f = |k: usize| base.count(k) as f64 / l;
    let mut birth = 0.0;
    let mut death = 0.0;
    let mut jump = 0.0;
    for &k in base.active_sizes() {
        let c = kernel.rate(k, n);
        birth += c * f(k) * (g(n + 1) - g(n));
        death += kernel.rate(n, k) * f(k) * (g(n - 1) - g(n));
        jump += kernel.rate(n, k) * f(k) * (g(k + 1) - g(n));
    }
    let correction = kernel.rate(n, n) / (l - 1.0)
        * ((nf + 1.0) / nf * (g(n + 1) - g(n)) + (nf - 1.0) / nf * (g(n - 1) - g(n)));
    big * birth + big * ((nf - 1.0) / nf * death + jump / nf) - correction
}

/// The same generator in the reduced form using kernel symmetry.
pub fn generator_reduced<G: Fn(usize) -> f64>(state: &TaggedCountState, g: G) -> f64 {
    let base = state.base();
    let kernel = base.kernel();
    let n = state.w();
    let l = base.sites() as f64;
    let big = l / (l - 1.0);
    let nf = n as f64;
    let f = |k: usize| base.count(k) as f64 / l;
    let mut diffusion = 0.0;
    let mut jump = 0.0;
    for &k in base.active_sizes() {
        diffusion += kernel.rate(k, n) * f(k) * (g(n + 1) + g(n - 1) - 2.0 * g(n));
        jump += kernel.rate(n, k) * f(k) * (g(k + 1) - g(n - 1));
    }
    let correction = kernel.rate(n, n) / (l - 1.0)
        * ((nf + 1.0) / nf * (g(n + 1) - g(n)) + (nf - 1.0) / nf * (g(n - 1) - g(n)));
    big * diffusion + big * jump / nf - correction
}

/// `Σ rate·(g(target) − g(W))` from a rate table.
pub fn generator_from_rates<G: Fn(usize) -> f64>(rates: &TaggedRates, w: usize, g: G) -> f64 {
    rates.birth * (g(w + 1) - g(w))
        + rates.death_stay * (g(w - 1) - g(w))
        + rates
            .relocate
            .iter()
            .map(|&(l, r)| r * (g(l + 1) - g(w)))
            .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn linear() -> Kernel {
        Kernel::product(1.0).unwrap()
    }

    #[test]
    fn placement_examples() {
        let mut rng = rng_from_seed(1);
        let empty = CountState::from_counts(linear(), 5, []).unwrap();
        let t = init_tagged(&empty, Placement::UniformSite, &mut rng).unwrap();
        assert_eq!(t.w(), 1);
        assert_eq!(t.base().particles(), 1);
        let ones = CountState::from_counts(linear(), 6, [(1, 6)]).unwrap();
        assert_eq!(init_tagged(&ones, Placement::UniformSite, &mut rng).unwrap().w(), 2);
        let s = CountState::from_counts(linear(), 6, [(3, 2), (1, 1)]).unwrap();
        let t = init_tagged(&s, Placement::GivenSize(3), &mut rng).unwrap();
        assert_eq!(t.w(), 4);
        assert_eq!(t.base().count(4), 1);
        assert_eq!(t.base().count(3), 1);
        assert!(matches!(
            init_tagged(&s, Placement::GivenSize(2), &mut rng),
            Err(Error::NoSiteOfSize(2))
        ));
        assert_eq!(init_tagged(&s, Placement::MaxOccupied, &mut rng).unwrap().w(), 4);
        assert!(!Placement::MaxOccupied.is_admissible());
    }

    #[test]
    fn two_site_rates() {
        // L=2, one other singleton, tagged singleton.
        let base = CountState::from_counts(linear(), 2, [(1, 2)]).unwrap();
        let t = TaggedCountState::new(base, 1).unwrap();
        let r = t.rates();
        assert_eq!(r.birth, 1.0);
        assert_eq!(r.death_stay, 0.0);
        assert_eq!(r.relocate, vec![(1, 1.0)]);
        assert_eq!(r.by_target(1), BTreeMap::from([(2, 2.0)]));
    }

    #[test]
    fn death_vanishes_for_single_occupancy() {
        let base = CountState::from_counts(linear(), 10, [(1, 4), (3, 2)]).unwrap();
        assert_eq!(TaggedCountState::new(base, 1).unwrap().rates().death_stay, 0.0);
    }

    #[test]
    fn isolated_tagged_site_is_frozen() {
        let base = CountState::from_counts(linear(), 4, [(3, 1)]).unwrap();
        let mut t = TaggedCountState::new(base, 3).unwrap();
        assert_eq!(t.rates().total(), 0.0);
        let traj = t.run_until(5.0, &[0.0, 5.0], &mut rng_from_seed(2)).unwrap();
        assert_eq!(traj.events, 0);
        assert!(traj.points.iter().all(|p| p.w == 3));
    }

    #[test]
    fn joint_run_conserves_mass() {
        let bg = CountState::init_iid(linear(), 40, 39, 5).unwrap();
        let mut rng = rng_from_seed(6);
        let mut t = init_tagged(&bg, Placement::UniformSite, &mut rng).unwrap();
        for _ in 0..5_000 {
            if t.base().is_absorbed() {
                break;
            }
            t.step(&mut rng).unwrap();
            assert_eq!(t.base().mass(), 40);
            assert!(t.w() >= 1 && t.base().count(t.w()) >= 1);
        }
    }

    proptest! {
        #[test]
        fn generator_forms_agree(seed in 0u64..2000, l in 2usize..30, n in 0usize..60, gamma in 0.0f64..2.0) {
            let bg = CountState::init_iid(Kernel::product(gamma).unwrap(), l, n, seed).unwrap();
            let mut rng = rng_from_seed(seed + 1);
            let t = init_tagged(&bg, Placement::UniformSite, &mut rng).unwrap();
            let coeffs: Vec<f64> = (0..n + 3).map(|_| rng.random::<f64>() - 0.5).collect();
            let g = |k: usize| coeffs[k];
            let a = generator_full(&t, g);
            let b = generator_reduced(&t, g);
            let c = generator_from_rates(&t.rates(), t.w(), g);
            let scale = a.abs().max(b.abs()).max(1.0) * (n + 2) as f64;
            prop_assert!((a - b).abs() <= 1e-12 * scale);
            prop_assert!((a - c).abs() <= 1e-12 * scale);
        }
    }
}
