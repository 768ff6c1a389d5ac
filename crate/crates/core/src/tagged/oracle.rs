use std::collections::BTreeMap;

use rand::Rng;

use super::finite::TaggedCountState;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::particle::MAX_REFERENCE_SITES;

/// Site-level joint process `(η, X)`: explicit occupations plus the index of
/// the tagged particle's site. Every event is enumerated over site pairs.
#[derive(Debug, Clone)]
pub struct SiteTaggedState {
    kernel: Kernel,
    occupations: Vec<usize>,
    tagged: usize,
    time: f64,
}

struct Move {
    rate: f64,
    from: usize,
    to: usize,
    carries_tag: bool,
}

impl SiteTaggedState {
    pub fn new(kernel: Kernel, occupations: Vec<usize>, tagged: usize) -> Result<Self> {
        if occupations.len() < 2 {
            return Err(Error::InvalidParameter("need at least two sites".into()));
        }
        if occupations.len() > MAX_REFERENCE_SITES {
            return Err(Error::SystemTooLarge {
                max: MAX_REFERENCE_SITES,
                got: occupations.len(),
            });
        }
        if occupations.get(tagged).is_none_or(|&k| k == 0) {
            return Err(Error::InvalidParameter(
                "the tagged site must exist and be occupied".into(),
            ));
        }
        Ok(Self {
            kernel,
            occupations,
            tagged,
            time: 0.0,
        })
    }

    /// Lays out the counts of `state` on sites with the tagged site first.
    pub fn from_tagged_counts(state: &TaggedCountState) -> Result<Self> {
        let base = state.base();
        let mut occupations = vec![state.w()];
        for (k, n) in base.occupied() {
            let n = n - u64::from(k == state.w());
            occupations.extend(std::iter::repeat_n(k, n as usize));
        }
        occupations.resize(base.sites(), 0);
        Self::new(base.kernel().clone(), occupations, 0)
    }

    pub fn w(&self) -> usize {
        self.occupations[self.tagged]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn occupations(&self) -> &[usize] {
        &self.occupations
    }

    fn moves(&self) -> Vec<Move> {
        let scale = 1.0 / (self.occupations.len() - 1) as f64;
        let mut moves = Vec::new();
        for (y, &a) in self.occupations.iter().enumerate() {
            for (z, &b) in self.occupations.iter().enumerate() {
                if y == z {
                    continue;
                }
                let rate = self.kernel.rate(a, b) * scale;
                if rate <= 0.0 {
                    continue;
                }
                if y == self.tagged {
                    let share = 1.0 / a as f64;
                    moves.push(Move {
                        rate: rate * (1.0 - share),
                        from: y,
                        to: z,
                        carries_tag: false,
                    });
                    moves.push(Move {
                        rate: rate * share,
                        from: y,
                        to: z,
                        carries_tag: true,
                    });
                } else {
                    moves.push(Move {
                        rate,
                        from: y,
                        to: z,
                        carries_tag: false,
                    });
                }
            }
        }
        moves
    }

    fn w_after(&self, m: &Move) -> usize {
        if m.carries_tag {
            self.occupations[m.to] + 1
        } else if m.from == self.tagged {
            self.w() - 1
        } else if m.to == self.tagged {
            self.w() + 1
        } else {
            self.w()
        }
    }

    /// Rates of all moves that change `W`, keyed by the new value.
    pub fn rate_table(&self) -> BTreeMap<usize, f64> {
        let mut table = BTreeMap::new();
        for m in self.moves() {
            let target = self.w_after(&m);
            if target != self.w() && m.rate > 0.0 {
                *table.entry(target).or_insert(0.0) += m.rate;
            }
        }
        table
    }

    pub fn exit_rate(&self) -> f64 {
        self.moves().iter().map(|m| m.rate).sum()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<f64> {
        let moves = self.moves();
        let total: f64 = moves.iter().map(|m| m.rate).sum();
        if total <= 0.0 {
            return Err(Error::Absorbed);
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = moves.last().ok_or(Error::Absorbed)?;
        for m in &moves {
            acc += m.rate;
            if u < acc {
                chosen = m;
                break;
            }
        }
        let dt = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln() / total;
        self.occupations[chosen.from] -= 1;
        self.occupations[chosen.to] += 1;
        if chosen.carries_tag {
            self.tagged = chosen.to;
        }
        self.time += dt;
        Ok(dt)
    }

    /// `W` at time `t_end`.
    pub fn w_at<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) -> Result<usize> {
        loop {
            let before = self.clone();
            match self.step(rng) {
                Ok(_) if self.time > t_end => {
                    *self = before;
                    self.time = t_end;
                    return Ok(self.w());
                }
                Ok(_) => {}
                Err(Error::Absorbed) => return Ok(self.w()),
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::CountState;
    use crate::rng::rng_from_seed;
    use crate::tagged::{init_tagged, Placement};

    #[test]
    fn rate_tables_match_count_representation() {
        for gamma in [0.5, 1.0, 1.7] {
            for seed in 0..30 {
                let l = 2 + (seed as usize % 49);
                let bg = CountState::init_iid(Kernel::product(gamma).unwrap(), l, l, seed).unwrap();
                let t = init_tagged(&bg, Placement::UniformSite, &mut rng_from_seed(seed)).unwrap();
                let site = SiteTaggedState::from_tagged_counts(&t).unwrap();
                let a = t.rates().by_target(t.w());
                let b = site.rate_table();
                assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
                for (k, ra) in &a {
                    assert!((ra - b[k]).abs() <= 1e-12 * ra.max(1.0), "gamma {gamma} seed {seed}");
                }
                let total = t.base().total_rate();
                assert!((site.exit_rate() - total).abs() <= 1e-12 * total.max(1.0));
            }
        }
    }

    #[test]
    fn rejects_empty_tagged_site() {
        assert!(SiteTaggedState::new(Kernel::product(1.0).unwrap(), vec![0, 2], 0).is_err());
    }
}
