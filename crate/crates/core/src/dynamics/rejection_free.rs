//! Rejection-free (n-fold-way) engine.
//!
//! Null clock rings never change the Markov state, so the jump chain can be
//! sampled directly: every site carries an effective flip rate in
//! `{0, 1/2, 1}` (1 when its spin disagrees with a strict majority, 1/2 on a
//! tie, 0 otherwise), the next flip time is exponential in the total rate and
//! the flipping site is drawn proportionally to its rate. The trajectory law
//! equals the graphical engine's law; only the execution differs.
//!
//! Freeze filters enter as rate-zero sites with unfreeze milestones: when the
//! clock crosses a deadline the affected sites are rescanned and, by
//! memorylessness, the exponential race simply restarts. Blocking filters
//! zero the rate of unprotected plus spins.

use crate::error::{Error, Result};
use crate::randomness::SplitMix64;

use super::{DynamicsState, Flip, Hitting, Observer, RunStats, UpdateFilter};

const NOT_MEMBER: u32 = u32::MAX;

/// Set of site indices with O(1) insert, remove and uniform sampling.
#[derive(Debug, Clone)]
struct ActiveSet {
    members: Vec<u32>,
    pos: Vec<u32>,
}

impl ActiveSet {
    fn new(n: usize) -> ActiveSet {
        ActiveSet {
            members: Vec::new(),
            pos: vec![NOT_MEMBER; n],
        }
    }

    #[inline]
    fn contains(&self, site: u32) -> bool {
        self.pos[site as usize] != NOT_MEMBER
    }

    #[inline]
    fn len(&self) -> usize {
        self.members.len()
    }

    #[inline]
    fn get(&self, k: u32) -> u32 {
        self.members[k as usize]
    }

    fn insert(&mut self, site: u32) {
        if self.contains(site) {
            return;
        }
        self.pos[site as usize] = self.members.len() as u32;
        self.members.push(site);
    }

    fn remove(&mut self, site: u32) {
        let idx = self.pos[site as usize];
        if idx == NOT_MEMBER {
            return;
        }
        let last = self.members.pop().expect("non-empty by membership");
        if last != site {
            self.members[idx as usize] = last;
            self.pos[last as usize] = idx;
        }
        self.pos[site as usize] = NOT_MEMBER;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rate {
    Zero,
    Half,
    One,
}

enum Step {
    Flipped(Flip),
    Exhausted,
}

/// Event-driven engine maintaining the active-rate table incrementally.
#[derive(Debug, Clone)]
pub struct RejectionFreeEngine {
    rng: SplitMix64,
    one: ActiveSet,
    half: ActiveSet,
    /// Unfreeze deadlines: (time, filter index), ascending in time.
    milestones: Vec<(f64, usize)>,
    next_milestone: usize,
    flips: u64,
    nbr_buf: Vec<u32>,
}

impl RejectionFreeEngine {
    /// Builds the rate table for the current state of `state`. The state's
    /// filter list must not change while the engine is attached.
    pub fn new(state: &DynamicsState, seed: u64) -> RejectionFreeEngine {
        let n = state.field.len();
        let mut engine = RejectionFreeEngine {
            rng: SplitMix64::new(seed),
            one: ActiveSet::new(n),
            half: ActiveSet::new(n),
            milestones: Vec::new(),
            next_milestone: 0,
            flips: 0,
            nbr_buf: Vec::new(),
        };
        for (idx, filter) in state.filters().iter().enumerate() {
            if let UpdateFilter::FreezeRegion { until, .. } = filter {
                if *until > state.clock {
                    engine.milestones.push((*until, idx));
                }
            }
        }
        engine.milestones.sort_by(|a, b| a.0.total_cmp(&b.0));
        for site in 0..n as u32 {
            engine.refresh(state, site);
        }
        engine
    }

    /// Total flips executed so far.
    pub fn flips(&self) -> u64 {
        self.flips
    }

    fn rate_of(state: &DynamicsState, site: u32) -> Rate {
        if state.is_frozen(site, state.clock) {
            return Rate::Zero;
        }
        let old = state.field.spin(site);
        if old == 1 && state.is_minus_blocked(site) {
            // the only move of a plus spin is to minus, and that is blocked
            return Rate::Zero;
        }
        let sum = state.neighbor_sum(site);
        if sum == 0 {
            Rate::Half
        } else if (sum > 0 && old == -1) || (sum < 0 && old == 1) {
            Rate::One
        } else {
            Rate::Zero
        }
    }

    fn refresh(&mut self, state: &DynamicsState, site: u32) {
        match Self::rate_of(state, site) {
            Rate::Zero => {
                self.one.remove(site);
                self.half.remove(site);
            }
            Rate::Half => {
                self.one.remove(site);
                self.half.insert(site);
            }
            Rate::One => {
                self.half.remove(site);
                self.one.insert(site);
            }
        }
    }

    fn cross_milestone(&mut self, state: &mut DynamicsState, time: f64, filter: usize) {
        state.clock = time;
        self.next_milestone += 1;
        if let UpdateFilter::FreezeRegion { mask, .. } = &state.filters()[filter] {
            let sites: Vec<u32> = mask
                .iter()
                .enumerate()
                .filter_map(|(s, &m)| if m { Some(s as u32) } else { None })
                .collect();
            for site in sites {
                self.refresh(state, site);
            }
        }
    }

    fn advance(&mut self, state: &mut DynamicsState, t_limit: f64) -> Step {
        loop {
            let total = self.one.len() as f64 + 0.5 * self.half.len() as f64;
            let milestone = self.milestones.get(self.next_milestone).copied();
            if total == 0.0 {
                match milestone {
                    Some((mt, fi)) if mt <= t_limit => {
                        self.cross_milestone(state, mt, fi);
                        continue;
                    }
                    _ => {
                        state.clock = t_limit;
                        return Step::Exhausted;
                    }
                }
            }
            let t_next = state.clock + self.rng.next_exp(total);
            if let Some((mt, fi)) = milestone {
                if mt <= t_limit && mt <= t_next {
                    // restart the race at the deadline; exponential clocks
                    // are memoryless so this preserves the law
                    self.cross_milestone(state, mt, fi);
                    continue;
                }
            }
            if t_next > t_limit {
                state.clock = t_limit;
                return Step::Exhausted;
            }
            state.clock = t_next;
            let ones = self.one.len() as f64;
            let u = self.rng.next_unit() * total;
            let site = if self.one.len() > 0 && u <= ones {
                let k = self.rng.next_index(self.one.len() as u32);
                self.one.get(k)
            } else {
                let k = self.rng.next_index(self.half.len() as u32);
                self.half.get(k)
            };
            let old = state.field.spin(site);
            let new = -old;
            state.field.set(site, new);
            self.refresh(state, site);
            self.nbr_buf.clear();
            self.nbr_buf.extend(state.stencil().neighbors(site));
            for i in 0..self.nbr_buf.len() {
                let nbr = self.nbr_buf[i];
                self.refresh(state, nbr);
            }
            self.flips += 1;
            if cfg!(debug_assertions) && self.flips.is_multiple_of(65_536) {
                self.audit(state).expect("rate table audit");
            }
            return Step::Flipped(Flip {
                time: t_next,
                site,
                old,
                new,
            });
        }
    }

    /// Runs to `t_max`; the reported event count is the number of flips.
    pub fn run_until(
        &mut self,
        state: &mut DynamicsState,
        t_max: f64,
        obs: &mut dyn Observer,
    ) -> Result<RunStats> {
        if !(t_max >= state.clock) {
            return Err(Error::InvalidInput(format!(
                "t_max {} precedes state clock {}",
                t_max, state.clock
            )));
        }
        let mut events = 0u64;
        loop {
            match self.advance(state, t_max) {
                Step::Flipped(flip) => {
                    events += 1;
                    obs.on_flip(&flip);
                    if state.field.is_all_plus() {
                        obs.on_absorption(flip.time);
                    }
                }
                Step::Exhausted => return Ok(RunStats { events }),
            }
        }
    }

    /// Runs until the all-plus state or the cap; a cap hit is a reported
    /// timeout, not an error.
    pub fn run_to_absorption(
        &mut self,
        state: &mut DynamicsState,
        t_cap: f64,
        obs: &mut dyn Observer,
    ) -> Result<Hitting> {
        if !(t_cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_cap must be positive, got {t_cap}"
            )));
        }
        if state.field.is_all_plus() {
            return Ok(Hitting::Absorbed {
                time: state.clock,
                events: 0,
            });
        }
        let mut events = 0u64;
        loop {
            match self.advance(state, t_cap) {
                Step::Flipped(flip) => {
                    events += 1;
                    obs.on_flip(&flip);
                    if state.field.is_all_plus() {
                        obs.on_absorption(flip.time);
                        return Ok(Hitting::Absorbed {
                            time: flip.time,
                            events,
                        });
                    }
                }
                Step::Exhausted => return Ok(Hitting::Timeout { t_cap, events }),
            }
        }
    }

    /// Compares the incremental rate table against a full rescan.
    pub fn audit(&self, state: &DynamicsState) -> Result<()> {
        for site in 0..state.field.len() as u32 {
            let expect = Self::rate_of(state, site);
            let got = if self.one.contains(site) {
                Rate::One
            } else if self.half.contains(site) {
                Rate::Half
            } else {
                Rate::Zero
            };
            if expect != got {
                return Err(Error::Internal(format!(
                    "rate table drift at site {site}: table {got:?}, rescan {expect:?}"
                )));
            }
        }
        if state.field.minus_count() != state.field.recount() {
            return Err(Error::Internal("minus count cache drift".into()));
        }
        Ok(())
    }
}
