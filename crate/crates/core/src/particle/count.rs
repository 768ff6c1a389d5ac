use std::collections::BTreeMap;

use rand::distr::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rng::rng_from_seed;
use crate::stats::CompensatedSum;

/// Events between full recomputations of the cached rate aggregates.
pub const DEFAULT_AUDIT_INTERVAL: u64 = 100_000;

/// The uniforms that drive one event.
///
/// Both engines consume a decision the same way: `time_u` gives the holding
/// time by inversion, `donor_u` selects the donor size by a cumulative scan in
/// ascending size order and `recipient_u` selects the recipient size the same
/// way. Feeding one stream of decisions to both engines therefore produces the
/// same trajectory whenever their rate sums agree exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDecision {
    /// In `(0, 1)`.
    pub time_u: f64,
    /// In `[0, 1)`.
    pub donor_u: f64,
    /// In `[0, 1)`.
    pub recipient_u: f64,
}

impl EventDecision {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            time_u: rng.sample(Open01),
            donor_u: rng.random(),
            recipient_u: rng.random(),
        }
    }
}

#[derive(Debug, Clone)]
enum Caches {
    /// Product kernel: `R_k = k^γ·M_γ`, exit weight `M_γ² − M_{2γ}`.
    Separable { m_gamma: f64, m_2gamma: f64 },
    /// Arbitrary kernel: row sums `R_k = Σ_l c(k,l) n_l` for active `k`, the
    /// quadratic form `Σ_{k,l} c(k,l) n_k n_l` and the diagonal
    /// `Σ_k c(k,k) n_k`.
    General {
        row_sums: Vec<f64>,
        pair_sum: f64,
        diagonal: f64,
    },
}

/// A configuration on the complete graph in occupation-count form.
///
/// `count(k)` is the number of sites holding exactly `k` particles. The state
/// caches the aggregates needed to sample events in `O(K)` time, `K` being the
/// number of distinct occupied sizes, and refreshes them from scratch every
/// [`DEFAULT_AUDIT_INTERVAL`] events.
#[derive(Debug, Clone)]
pub struct CountState {
    kernel: Kernel,
    sites: usize,
    particles: usize,
    /// Indexed by size; `counts[0]` is the number of empty sites.
    counts: Vec<u64>,
    /// Sorted sizes `k ≥ 1` with `counts[k] > 0`.
    active: Vec<usize>,
    caches: Caches,
    time: f64,
    events: u64,
    audit_interval: u64,
    since_audit: u64,
}

impl CountState {
    /// Builds a state from `(k, n_k)` pairs with `k ≥ 1`; the remaining sites
    /// are empty.
    pub fn from_counts<I>(kernel: Kernel, sites: usize, counts: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, u64)>,
    {
        if sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least two sites, got {sites}"
            )));
        }
        let pairs: Vec<(usize, u64)> = counts.into_iter().filter(|&(_, n)| n > 0).collect();
        let occupied: u64 = pairs.iter().map(|&(_, n)| n).sum();
        if pairs.iter().any(|&(k, _)| k == 0) {
            return Err(Error::InvalidParameter(
                "give counts for sizes k >= 1 only; empty sites are implied".into(),
            ));
        }
        if occupied > sites as u64 {
            return Err(Error::InvalidParameter(format!(
                "{occupied} occupied sites exceed the lattice size {sites}"
            )));
        }
        let particles: usize = pairs.iter().map(|&(k, n)| k * n as usize).sum();
        if !kernel.supports(particles) {
            return Err(Error::InvalidParameter(format!(
                "kernel is defined up to size {:?} but the system holds {particles} particles",
                kernel.max_size()
            )));
        }
        let mut dense = vec![0u64; particles + 2];
        dense[0] = sites as u64 - occupied;
        for (k, n) in pairs {
            dense[k] += n;
        }
        let active = (1..dense.len()).filter(|&k| dense[k] > 0).collect();
        let caches = match kernel.separable_gamma() {
            Some(_) => Caches::Separable {
                m_gamma: 0.0,
                m_2gamma: 0.0,
            },
            None => Caches::General {
                row_sums: vec![0.0; dense.len()],
                pair_sum: 0.0,
                diagonal: 0.0,
            },
        };
        let mut state = Self {
            kernel,
            sites,
            particles,
            counts: dense,
            active,
            caches,
            time: 0.0,
            events: 0,
            audit_interval: DEFAULT_AUDIT_INTERVAL,
            since_audit: 0,
        };
        state.refresh_caches();
        Ok(state)
    }

    /// Builds a state from an explicit occupation per site.
    pub fn from_occupations(kernel: Kernel, occupations: &[usize]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &k in occupations.iter().filter(|&&k| k > 0) {
            *map.entry(k).or_insert(0u64) += 1;
        }
        Self::from_counts(kernel, occupations.len(), map)
    }

    /// Places `particles` particles independently and uniformly on `sites`
    /// sites (multinomial occupancy, Poisson marginals in the large-`L`
    /// limit). Deterministic given `seed`.
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
        Self::from_occupations(kernel, &occupations)
    }

    /// Spreads the particles as evenly as possible: every site gets
    /// `⌊N/L⌋` and the first `N mod L` sites one more.
    pub fn init_uniform(kernel: Kernel, sites: usize, particles: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least two sites, got {sites}"
            )));
        }
        let base = particles / sites;
        let extra = (particles % sites) as u64;
        let mut counts = vec![(base + 1, extra)];
        if base > 0 {
            counts.push((base, sites as u64 - extra));
        }
        Self::from_counts(kernel, sites, counts)
    }

    /// Sets how many events pass between full cache recomputations.
    pub fn set_audit_interval(&mut self, events: u64) {
        self.audit_interval = events.max(1);
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Number of events applied so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// `n_k`, including `n_0`.
    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    /// Occupied sizes in ascending order.
    pub fn active_sizes(&self) -> &[usize] {
        &self.active
    }

    /// `(k, n_k)` for occupied sizes, ascending.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.active.iter().map(move |&k| (k, self.counts[k]))
    }

    /// Sparse counts for `k ≥ 1`.
    pub fn counts_map(&self) -> BTreeMap<usize, u64> {
        self.occupied().collect()
    }

    /// Largest occupied size, 0 when empty.
    pub fn max_size(&self) -> usize {
        self.active.last().copied().unwrap_or(0)
    }

    /// One site holds every particle (or there are fewer than two particles).
    pub fn is_absorbed(&self) -> bool {
        match self.active.as_slice() {
            [] => true,
            [k] => self.counts[*k] == 1,
            _ => false,
        }
    }

    /// Exit rate `(1/(L−1)) Σ_{k,l} c(k,l) n_k (n_l − δ_kl)` from the caches.
    pub fn total_rate(&self) -> f64 {
        self.exit_weight() / (self.sites - 1) as f64
    }

    /// The exit rate recomputed from the counts by a direct double sum.
    pub fn recomputed_total_rate(&self) -> f64 {
        let mut sum = CompensatedSum::new();
        for &k in &self.active {
            for &l in &self.active {
                let pairs = self.counts[k] as f64 * (self.counts[l] - u64::from(k == l)) as f64;
                sum.add(self.kernel.rate(k, l) * pairs);
            }
        }
        sum.value() / (self.sites - 1) as f64
    }

    /// `(L−1)·total_rate`: the rate summed over ordered site pairs without
    /// the `1/(L−1)` factor.
    fn exit_weight(&self) -> f64 {
        if self.is_absorbed() {
            return 0.0;
        }
        let w = match &self.caches {
            Caches::Separable { m_gamma, m_2gamma } => m_gamma * m_gamma - m_2gamma,
            Caches::General {
                pair_sum, diagonal, ..
            } => pair_sum - diagonal,
        };
        w.max(0.0)
    }

    /// `R_k = Σ_l c(k,l) n_l` for an active size.
    #[inline]
    pub fn row_sum(&self, k: usize) -> f64 {
        match &self.caches {
            Caches::Separable { m_gamma, .. } => self.power(k) * m_gamma,
            Caches::General { row_sums, .. } => row_sums[k],
        }
    }

    #[inline]
    fn power(&self, k: usize) -> f64 {
        self.kernel.product_power(k).unwrap_or(f64::NAN)
    }

    /// Rate, without the `1/(L−1)` factor, at which some site of size `k`
    /// donates to some other occupied site: `R_k − c(k,k)`.
    #[inline]
    fn donor_row(&self, k: usize) -> f64 {
        match &self.caches {
            Caches::Separable { m_gamma, .. } => {
                let p = self.power(k);
                p * (m_gamma - p)
            }
            Caches::General { row_sums, .. } => row_sums[k] - self.kernel.rate(k, k),
        }
    }

    /// Recomputes every cached aggregate from the counts.
    pub fn refresh_caches(&mut self) {
        let active = &self.active;
        let counts = &self.counts;
        let kernel = &self.kernel;
        match &mut self.caches {
            Caches::Separable { m_gamma, m_2gamma } => {
                let mut m = CompensatedSum::new();
                let mut m2 = CompensatedSum::new();
                for &k in active {
                    let p = kernel.product_power(k).unwrap_or(f64::NAN);
                    m.add(p * counts[k] as f64);
                    m2.add(p * p * counts[k] as f64);
                }
                *m_gamma = m.value();
                *m_2gamma = m2.value();
            }
            Caches::General {
                row_sums,
                pair_sum,
                diagonal,
            } => {
                let mut pairs = CompensatedSum::new();
                let mut diag = CompensatedSum::new();
                for &k in active {
                    let row: CompensatedSum = active
                        .iter()
                        .map(|&l| kernel.rate(k, l) * counts[l] as f64)
                        .collect();
                    row_sums[k] = row.value();
                    pairs.add(row_sums[k] * counts[k] as f64);
                    diag.add(kernel.rate(k, k) * counts[k] as f64);
                }
                *pair_sum = pairs.value();
                *diagonal = diag.value();
            }
        }
        self.since_audit = 0;
    }

    /// Samples donor and recipient sizes with probability proportional to
    /// `c(k,l)·n_k·(n_l − δ_kl)`.
    pub fn sample_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, usize)> {
        let d = EventDecision::draw(rng);
        self.select_event(d.donor_u, d.recipient_u)
    }

    /// Deterministic event selection from two uniforms in `[0, 1)`.
    ///
    /// The donor size is found by a cumulative scan of `n_k (R_k − c(k,k))`
    /// over ascending `k`, the recipient by a scan of `c(k,l)(n_l − δ_kl)` over
    /// ascending `l`. Empty sites are never selected since `c(k,0) = 0`.
    pub fn select_event(&self, donor_u: f64, recipient_u: f64) -> Result<(usize, usize)> {
        if self.is_absorbed() {
            return Err(Error::Absorbed);
        }
        let target = donor_u * self.exit_weight();
        let mut acc = 0.0;
        let mut donor = None;
        for &k in &self.active {
            let w = self.counts[k] as f64 * self.donor_row(k);
            if w <= 0.0 {
                continue;
            }
            donor = Some(k);
            acc += w;
            if target < acc {
                break;
            }
        }
        let k = donor.ok_or(Error::Absorbed)?;

        let target = recipient_u * self.donor_row(k);
        let mut acc = 0.0;
        let mut recipient = None;
        for &l in &self.active {
            let available = self.counts[l] - u64::from(k == l);
            if available == 0 {
                continue;
            }
            recipient = Some(l);
            acc += self.kernel.rate(k, l) * available as f64;
            if target < acc {
                break;
            }
        }
        Ok((k, recipient.ok_or(Error::Absorbed)?))
    }

    /// Moves one particle from a site of size `donor` to a site of size
    /// `recipient`: `n_k−−, n_{k−1}++, n_l−−, n_{l+1}++`.
    pub fn apply_exchange(&mut self, donor: usize, recipient: usize) -> Result<()> {
        let invalid = |reason| Error::InvalidExchange {
            donor,
            recipient,
            reason,
        };
        if donor == 0 {
            return Err(invalid("an empty site cannot donate"));
        }
        if recipient == 0 {
            return Err(invalid("empty sites never receive under a symmetric kernel"));
        }
        if self.count(donor) == 0 {
            return Err(invalid("no site of the donor size"));
        }
        let needed = 1 + u64::from(donor == recipient);
        if self.count(recipient) < needed {
            return Err(invalid("no distinct site of the recipient size"));
        }
        self.adjust(donor, -1);
        self.adjust(donor - 1, 1);
        self.adjust(recipient, -1);
        self.adjust(recipient + 1, 1);
        self.events += 1;
        self.since_audit += 1;
        if self.since_audit >= self.audit_interval {
            self.refresh_caches();
        }
        Ok(())
    }

    fn adjust(&mut self, size: usize, delta: i64) {
        let before = self.counts[size];
        self.counts[size] = before.checked_add_signed(delta).expect("count underflow");
        if size == 0 {
            return;
        }
        let d = delta as f64;
        if before == 0 {
            let pos = self.active.binary_search(&size).unwrap_err();
            self.active.insert(pos, size);
        }
        let kernel = &self.kernel;
        let counts = &self.counts;
        let active = &self.active;
        match &mut self.caches {
            Caches::Separable { m_gamma, m_2gamma } => {
                let p = kernel.product_power(size).unwrap_or(f64::NAN);
                *m_gamma += d * p;
                *m_2gamma += d * p * p;
            }
            Caches::General {
                row_sums,
                pair_sum,
                diagonal,
            } => {
                if before == 0 {
                    row_sums[size] = active
                        .iter()
                        .filter(|&&l| l != size)
                        .map(|&l| kernel.rate(size, l) * counts[l] as f64)
                        .sum();
                }
                let c_ss = kernel.rate(size, size);
                *pair_sum += 2.0 * d * row_sums[size] + d * d * c_ss;
                *diagonal += d * c_ss;
                for &k in active {
                    row_sums[k] += d * kernel.rate(k, size);
                }
            }
        }
        if self.counts[size] == 0 {
            let pos = self.active.binary_search(&size).expect("active size");
            self.active.remove(pos);
        }
    }

    /// Applies one event chosen by `decision` and returns the holding time.
    pub fn step_with(&mut self, decision: &EventDecision) -> Result<f64> {
        if self.is_absorbed() {
            return Err(Error::Absorbed);
        }
        let dt = -decision.time_u.ln() / self.total_rate();
        let (k, l) = self.select_event(decision.donor_u, decision.recipient_u)?;
        self.apply_exchange(k, l)?;
        self.time += dt;
        Ok(dt)
    }

    /// Draws an exponential holding time, samples an event and applies it.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        self.step_with(&EventDecision::draw(rng))
    }

    /// `Σ_{k≥1} k·n_k`, recomputed.
    pub fn mass(&self) -> usize {
        self.occupied().map(|(k, n)| k * n as usize).sum()
    }

    /// `Σ_{k≥0} n_k`, recomputed.
    pub fn site_total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn linear() -> Kernel {
        Kernel::product(1.0).unwrap()
    }

    /// A table kernel equal to `k·l + 1` on `1..=max`, exercising the general
    /// cache path.
    fn table(max: usize) -> Kernel {
        let mut entries = Vec::new();
        for k in 1..=max {
            for l in k..=max {
                entries.push((k, l, (k * l) as f64 + 1.0));
            }
        }
        Kernel::from_upper_triangle(max, &entries, crate::GrowthBounds::new(1.0, 1.0, 1.0).unwrap())
            .unwrap()
    }

    #[test]
    fn empty_system() {
        let s = CountState::init_iid(linear(), 2, 0, 1).unwrap();
        assert!(s.counts_map().is_empty());
        assert_eq!(s.count(0), 2);
        assert!(s.is_absorbed());
        assert_eq!(s.total_rate(), 0.0);
        assert!(CountState::init_iid(linear(), 1, 0, 1).is_err());
    }

    #[test]
    fn iid_init_conserves_mass() {
        let s = CountState::init_iid(linear(), 10_000, 10_000, 3).unwrap();
        assert_eq!(s.mass(), 10_000);
        assert_eq!(s.site_total(), 10_000);
    }

    #[test]
    fn iid_init_has_poisson_singletons() {
        let s = CountState::init_iid(linear(), 100_000, 100_000, 11).unwrap();
        let f1 = s.count(1) as f64 / 1e5;
        assert!((f1 - (-1.0f64).exp()).abs() < 3e-2, "F_1 = {f1}");
    }

    #[test]
    fn total_rate_examples() {
        let s = CountState::from_occupations(linear(), &[1, 1]).unwrap();
        assert_eq!(s.total_rate(), 2.0);
        let s = CountState::from_occupations(linear(), &[2, 1]).unwrap();
        assert_eq!(s.total_rate(), 4.0);
        let s = CountState::from_occupations(linear(), &[0, 5, 0, 0]).unwrap();
        assert_eq!(s.total_rate(), 0.0);
        assert!(s.is_absorbed());
    }

    #[test]
    fn event_probabilities_for_two_sites() {
        let s = CountState::from_occupations(linear(), &[2, 1]).unwrap();
        // Cumulative weights: donor 1 has weight c(1,2)·1·1 = 2, donor 2 has 2.
        assert_eq!(s.select_event(0.25, 0.5).unwrap(), (1, 2));
        assert_eq!(s.select_event(0.75, 0.5).unwrap(), (2, 1));
    }

    #[test]
    fn single_size_class_selects_itself() {
        let s = CountState::from_counts(linear(), 5, [(3, 5)]).unwrap();
        for u in [0.0, 0.3, 0.999] {
            assert_eq!(s.select_event(u, u).unwrap(), (3, 3));
        }
    }

    #[test]
    fn apply_exchange_examples() {
        let mut s = CountState::from_counts(linear(), 3, [(1, 2)]).unwrap();
        s.apply_exchange(1, 1).unwrap();
        assert_eq!(s.counts_map(), BTreeMap::from([(2, 1)]));
        assert_eq!(s.count(0), 2);

        let mut s = CountState::from_counts(linear(), 2, [(2, 1), (1, 1)]).unwrap();
        s.apply_exchange(2, 1).unwrap();
        assert_eq!(s.counts_map(), BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(s.mass(), 3);
    }

    #[test]
    fn apply_exchange_rejects_impossible_moves() {
        let mut s = CountState::from_counts(linear(), 3, [(1, 1), (2, 1)]).unwrap();
        assert!(s.apply_exchange(0, 1).is_err());
        assert!(s.apply_exchange(1, 0).is_err());
        assert!(s.apply_exchange(3, 1).is_err());
        assert!(s.apply_exchange(1, 1).is_err());
        assert_eq!(s.mass(), 3);
    }

    #[test]
    fn absorbed_state_refuses_to_step() {
        let mut s = CountState::from_occupations(linear(), &[3, 0, 0]).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(matches!(s.step(&mut rng), Err(Error::Absorbed)));
        assert!(matches!(s.sample_event(&mut rng), Err(Error::Absorbed)));
    }

    #[test]
    fn equal_seeds_give_equal_paths() {
        let run = |seed| {
            let mut s = CountState::init_iid(linear(), 200, 300, 5).unwrap();
            let mut rng = rng_from_seed(seed);
            (0..2_000)
                .map(|_| {
                    s.step(&mut rng).unwrap();
                    s.counts_map()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(8), run(8));
        assert_ne!(run(8), run(9));
    }

    #[test]
    fn holding_times_are_exponential() {
        let s = CountState::init_iid(linear(), 50, 80, 2).unwrap();
        let rate = s.total_rate();
        let mut rng = rng_from_seed(4);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| s.clone().step(&mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let se = 1.0 / rate / (n as f64).sqrt();
        assert!((mean - 1.0 / rate).abs() < 3.0 * se, "mean {mean}, expected {}", 1.0 / rate);
    }

    #[test]
    fn event_sampler_matches_exact_weights() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        // η = (3, 2, 1) on three sites.
        let s = CountState::from_occupations(linear(), &[3, 2, 1]).unwrap();
        let sizes = [1usize, 2, 3];
        let mut expected = BTreeMap::new();
        let mut total = 0.0;
        for &k in &sizes {
            for &l in &sizes {
                if k != l {
                    let w = (k * l) as f64;
                    expected.insert((k, l), w);
                    total += w;
                }
            }
        }
        let draws = 100_000;
        let mut observed = BTreeMap::new();
        let mut rng = rng_from_seed(17);
        for _ in 0..draws {
            *observed.entry(s.sample_event(&mut rng).unwrap()).or_insert(0u64) += 1;
        }
        assert!(observed.keys().all(|key| expected.contains_key(key)));
        let chi2: f64 = expected
            .iter()
            .map(|(key, w)| {
                let e = w / total * draws as f64;
                let o = observed.get(key).copied().unwrap_or(0) as f64;
                (o - e).powi(2) / e
            })
            .sum();
        let dof = (expected.len() - 1) as f64;
        let p = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn general_and_separable_caches_agree_on_long_runs() {
        for kernel in [linear(), Kernel::product(0.7).unwrap(), table(400)] {
            let mut s = CountState::init_iid(kernel, 100, 400, 12).unwrap();
            s.set_audit_interval(u64::MAX);
            let mut rng = rng_from_seed(21);
            for i in 0..20_000 {
                if s.is_absorbed() {
                    break;
                }
                s.step(&mut rng).unwrap();
                if i % 997 == 0 {
                    let (a, b) = (s.total_rate(), s.recomputed_total_rate());
                    assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
                }
            }
            assert_eq!(s.mass(), 400);
        }
    }

    #[test]
    fn absorbing_state_is_closed() {
        let mut s = CountState::from_occupations(linear(), &[1, 1, 1, 1]).unwrap();
        let mut rng = rng_from_seed(2);
        while !s.is_absorbed() {
            s.step(&mut rng).unwrap();
        }
        assert_eq!(s.counts_map(), BTreeMap::from([(4, 1)]));
        assert_eq!(s.total_rate(), 0.0);
        assert!(s.step(&mut rng).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn events_conserve_mass_and_sites(
            sites in 2usize..40,
            particles in 0usize..120,
            seed in any::<u64>(),
            gamma in 0.0f64..2.0,
        ) {
            let kernel = Kernel::product(gamma).unwrap();
            let mut s = CountState::init_iid(kernel, sites, particles, seed).unwrap();
            let mut rng = rng_from_seed(seed ^ 1);
            for _ in 0..300 {
                if s.is_absorbed() {
                    prop_assert_eq!(s.total_rate(), 0.0);
                    break;
                }
                let before = s.counts_map();
                s.step(&mut rng).unwrap();
                prop_assert_eq!(s.mass(), particles);
                prop_assert_eq!(s.site_total(), sites as u64);
                let changed = (0..=particles + 1)
                    .filter(|&k| {
                        let b = if k == 0 {
                            sites as u64 - before.values().sum::<u64>()
                        } else {
                            before.get(&k).copied().unwrap_or(0)
                        };
                        b != s.count(k)
                    })
                    .count();
                // (k, k−1) swaps two sizes and leaves the counts unchanged.
                prop_assert!(changed <= 4);
                let (a, b) = (s.total_rate(), s.recomputed_total_rate());
                prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
            }
        }
    }
}
