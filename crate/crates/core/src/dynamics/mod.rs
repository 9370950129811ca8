//! Zero-temperature majority-rule dynamics.
//!
//! At every clock ring the spin at the ringing site is set to the sign of
//! its neighbour sum (boundary sites contribute their fixed spins); an exact
//! tie defers to the event's coin. Two interchangeable engines run the same
//! law: the graphical engine replays an [`EventStream`] event by event
//! (null events included, which is what makes pathwise coupling possible),
//! and the rejection-free engine samples only effective flips.
//!
//! Update filters implement the censored dynamics: freezing a set of sites
//! until a given time, or cancelling every update that would create a minus
//! spin outside a protected set.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, Region};
use crate::randomness::{Event, EventStream};

mod rejection_free;
pub use rejection_free::RejectionFreeEngine;

const NO_NEIGHBOR: u32 = u32::MAX;

/// Which engine drives a run. Both produce the same trajectory law; only the
/// graphical engine can replay a shared stream, which coupled runs require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EngineKind {
    Graphical,
    RejectionFree,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Graphical => "graphical",
            EngineKind::RejectionFree => "rejection-free",
        }
    }
}

/// Majority rule on an explicit neighbourhood: plus on positive sum, minus
/// on negative sum, the coin on an exact tie. Exposed for contract tests;
/// the run loops use the equivalent sum-based fast path.
pub fn local_rule(d: usize, neighbor_spins: &[i8], coin: i8) -> Result<i8> {
    if neighbor_spins.len() != 2 * d {
        return Err(Error::InvalidInput(format!(
            "majority rule in dimension {d} needs exactly {} neighbour spins, got {}",
            2 * d,
            neighbor_spins.len()
        )));
    }
    if neighbor_spins.iter().any(|&s| s != 1 && s != -1) || (coin != 1 && coin != -1) {
        return Err(Error::InvalidInput("spins must be +1 or -1".into()));
    }
    let sum: i32 = neighbor_spins.iter().map(|&s| s as i32).sum();
    Ok(rule_from_sum(sum, coin))
}

#[inline]
pub(crate) fn rule_from_sum(sum: i32, coin: i8) -> i8 {
    if sum > 0 {
        1
    } else if sum < 0 {
        -1
    } else {
        coin
    }
}

/// Dense spin assignment over a region, indexed by the region's site index.
/// Keeps a running count of minus spins; absorption is `minus_count == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinField {
    spins: Vec<i8>,
    minus_count: usize,
}

impl SpinField {
    pub fn all_minus(n: usize) -> SpinField {
        SpinField {
            spins: vec![-1; n],
            minus_count: n,
        }
    }

    pub fn all_plus(n: usize) -> SpinField {
        SpinField {
            spins: vec![1; n],
            minus_count: 0,
        }
    }

    pub fn from_spins(spins: Vec<i8>) -> Result<SpinField> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput("spins must be +1 or -1".into()));
        }
        let minus_count = spins.iter().filter(|&&s| s == -1).count();
        Ok(SpinField { spins, minus_count })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn spin(&self, site: u32) -> i8 {
        self.spins[site as usize]
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn minus_count(&self) -> usize {
        self.minus_count
    }

    pub fn is_all_plus(&self) -> bool {
        self.minus_count == 0
    }

    #[inline]
    fn set(&mut self, site: u32, spin: i8) {
        let old = self.spins[site as usize];
        if old == spin {
            return;
        }
        self.spins[site as usize] = spin;
        if spin == -1 {
            self.minus_count += 1;
        } else {
            self.minus_count -= 1;
        }
    }

    /// Direct recount, used by the consistency audits.
    pub fn recount(&self) -> usize {
        self.spins.iter().filter(|&&s| s == -1).count()
    }

    /// Pointwise partial order.
    pub fn le(&self, other: &SpinField) -> bool {
        self.spins.len() == other.spins.len()
            && self.spins.iter().zip(&other.spins).all(|(a, b)| a <= b)
    }
}

/// Precompiled neighbourhood table: in-region neighbour indices plus the
/// cached sum of boundary spins per site, so the inner loop touches only the
/// spin array and one integer.
#[derive(Debug, Clone)]
pub struct Stencil {
    d: usize,
    nbrs: Vec<u32>,
    bsum: Vec<i32>,
}

impl Stencil {
    pub fn build(region: &Region, bc: &BoundaryCondition) -> Result<Stencil> {
        let d = region.dim();
        let n = region.len();
        let mut nbrs = vec![NO_NEIGHBOR; 2 * d * n];
        let mut bsum = vec![0i32; n];
        let mut nbr = vec![0; d];
        for idx in 0..n {
            let site = region.site(idx as u32);
            for axis in 0..d {
                for (slot, delta) in [-1, 1].into_iter().enumerate() {
                    nbr.copy_from_slice(site);
                    nbr[axis] += delta;
                    match region.index_of(&nbr) {
                        Some(j) => nbrs[(idx * d + axis) * 2 + slot] = j,
                        None => {
                            let s = bc.spin_at(&nbr).ok_or_else(|| {
                                Error::InvalidInput(format!(
                                    "boundary condition assigns no spin to {nbr:?}"
                                ))
                            })?;
                            bsum[idx] += s as i32;
                        }
                    }
                }
            }
        }
        Ok(Stencil { d, nbrs, bsum })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn neighbor_sum(&self, spins: &[i8], site: u32) -> i32 {
        let base = site as usize * 2 * self.d;
        let mut sum = self.bsum[site as usize];
        for &j in &self.nbrs[base..base + 2 * self.d] {
            if j != NO_NEIGHBOR {
                sum += spins[j as usize] as i32;
            }
        }
        sum
    }

    /// In-region neighbours of `site`.
    pub fn neighbors(&self, site: u32) -> impl Iterator<Item = u32> + '_ {
        let base = site as usize * 2 * self.d;
        self.nbrs[base..base + 2 * self.d]
            .iter()
            .copied()
            .filter(|&j| j != NO_NEIGHBOR)
    }

    /// Cached boundary contribution of `site`.
    pub fn boundary_sum(&self, site: u32) -> i32 {
        self.bsum[site as usize]
    }
}

/// Censoring filters applied to every update attempt.
#[derive(Debug, Clone)]
pub enum UpdateFilter {
    /// Discards any event at a masked site before `until`.
    FreezeRegion { mask: Vec<bool>, until: f64 },
    /// Keeps the old spin whenever the rule would write a minus at an
    /// unprotected site; minus-to-plus moves pass through.
    BlockMinusOutside { protected: Vec<bool> },
}

/// One spin change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flip {
    pub time: f64,
    pub site: u32,
    pub old: i8,
    pub new: i8,
}

/// Result of feeding one event to a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventOutcome {
    /// The flip, if the spin changed.
    pub flip: Option<Flip>,
    /// True when a blocking filter overrode the rule's outcome.
    pub canceled: bool,
}

/// Read-only hooks fired by the run drivers.
pub trait Observer {
    fn on_flip(&mut self, _flip: &Flip) {}
    fn on_absorption(&mut self, _time: f64) {}
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {}

/// Collects every flip; handy in replay comparisons.
#[derive(Debug, Default)]
pub struct FlipLog(pub Vec<Flip>);

impl Observer for FlipLog {
    fn on_flip(&mut self, flip: &Flip) {
        self.0.push(*flip);
    }
}

/// Watches a site mask and records the first time at or after `active_from`
/// at which the mask contains a minus spin.
#[derive(Debug)]
pub struct WatchedSet {
    mask: Vec<bool>,
    active_from: f64,
    minus_in_set: usize,
    pub first_minus: Option<f64>,
}

impl WatchedSet {
    pub fn new(mask: Vec<bool>, active_from: f64, field: &SpinField) -> WatchedSet {
        let minus_in_set = field
            .spins()
            .iter()
            .zip(&mask)
            .filter(|&(&s, &m)| m && s == -1)
            .count();
        WatchedSet {
            mask,
            active_from,
            minus_in_set,
            first_minus: None,
        }
    }

    /// Checkpoint query: call with the current time once the run has passed
    /// `active_from` to account for a minus already present at activation.
    pub fn check_now(&mut self, time: f64) {
        if time >= self.active_from && self.minus_in_set > 0 && self.first_minus.is_none() {
            self.first_minus = Some(time);
        }
    }
}

impl Observer for WatchedSet {
    fn on_flip(&mut self, flip: &Flip) {
        if self.mask[flip.site as usize] {
            if flip.new == -1 {
                self.minus_in_set += 1;
            } else {
                self.minus_in_set -= 1;
            }
        }
        self.check_now(flip.time);
    }
}

/// A running dynamics: field, compiled stencil, clock and filters. The
/// boundary spins are kept for coupling pre-checks.
#[derive(Debug, Clone)]
pub struct DynamicsState {
    pub region: Arc<Region>,
    pub field: SpinField,
    stencil: Stencil,
    bc_spins: Vec<i8>,
    pub clock: f64,
    filters: Vec<UpdateFilter>,
}

impl DynamicsState {
    pub fn new(
        region: Arc<Region>,
        bc: &BoundaryCondition,
        field: SpinField,
    ) -> Result<DynamicsState> {
        if field.len() != region.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} spins for a region of {} sites",
                field.len(),
                region.len()
            )));
        }
        let stencil = Stencil::build(&region, bc)?;
        Ok(DynamicsState {
            region,
            field,
            stencil,
            bc_spins: bc.spins().to_vec(),
            clock: 0.0,
            filters: Vec::new(),
        })
    }

    pub fn add_filter(&mut self, filter: UpdateFilter) -> Result<()> {
        let n = self.region.len();
        let len = match &filter {
            UpdateFilter::FreezeRegion { mask, until } => {
                if !(*until >= 0.0) {
                    return Err(Error::InvalidParameter("freeze time must be >= 0".into()));
                }
                mask.len()
            }
            UpdateFilter::BlockMinusOutside { protected } => protected.len(),
        };
        if len != n {
            return Err(Error::InvalidInput(format!(
                "filter mask length {len} does not match region size {n}"
            )));
        }
        self.filters.push(filter);
        Ok(())
    }

    pub fn filters(&self) -> &[UpdateFilter] {
        &self.filters
    }

    pub fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    /// Spins of the boundary condition the state was built with, in the
    /// boundary region's index order.
    pub fn bc_spins(&self) -> &[i8] {
        &self.bc_spins
    }

    /// Overwrites one spin, bypassing the rule. Fault-injection hook for the
    /// verification tooling; never part of a real trajectory.
    pub(crate) fn force_spin(&mut self, site: u32, spin: i8) {
        self.field.set(site, spin);
    }

    #[inline]
    pub fn neighbor_sum(&self, site: u32) -> i32 {
        self.stencil.neighbor_sum(self.field.spins(), site)
    }

    #[inline]
    fn is_frozen(&self, site: u32, time: f64) -> bool {
        self.filters.iter().any(|f| match f {
            UpdateFilter::FreezeRegion { mask, until } => mask[site as usize] && time < *until,
            _ => false,
        })
    }

    #[inline]
    fn is_minus_blocked(&self, site: u32) -> bool {
        self.filters.iter().any(|f| match f {
            UpdateFilter::BlockMinusOutside { protected } => !protected[site as usize],
            _ => false,
        })
    }

    /// Feeds one event through the rule and the filters. Freeze filters
    /// discard the event entirely; blocking filters retain the old spin when
    /// the rule would create a minus at an unprotected site. The clock
    /// advances in either case.
    pub fn apply_event(&mut self, ev: &Event) -> Result<EventOutcome> {
        if ev.site as usize >= self.field.len() {
            return Err(Error::InvalidInput(format!(
                "event site {} outside region of {} sites",
                ev.site,
                self.field.len()
            )));
        }
        if ev.time < self.clock {
            return Err(Error::InvalidInput(format!(
                "event time {} precedes state clock {}",
                ev.time, self.clock
            )));
        }
        let frozen = self.is_frozen(ev.site, ev.time);
        self.clock = ev.time;
        if frozen {
            return Ok(EventOutcome {
                flip: None,
                canceled: false,
            });
        }
        let old = self.field.spin(ev.site);
        let sum = self.neighbor_sum(ev.site);
        let mut new = rule_from_sum(sum, ev.coin);
        let mut canceled = false;
        if new == -1 && old == 1 && self.is_minus_blocked(ev.site) {
            new = old;
            canceled = true;
        }
        if new == old {
            return Ok(EventOutcome {
                flip: None,
                canceled,
            });
        }
        self.field.set(ev.site, new);
        Ok(EventOutcome {
            flip: Some(Flip {
                time: ev.time,
                site: ev.site,
                old,
                new,
            }),
            canceled,
        })
    }
}

/// Statistics of one run segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
}

/// Outcome of a run-to-absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hitting {
    Absorbed { time: f64, events: u64 },
    Timeout { t_cap: f64, events: u64 },
}

impl Hitting {
    /// The hitting time, absent on timeout.
    pub fn time(&self) -> Option<f64> {
        match self {
            Hitting::Absorbed { time, .. } => Some(*time),
            Hitting::Timeout { .. } => None,
        }
    }

    pub fn events(&self) -> u64 {
        match self {
            Hitting::Absorbed { events, .. } | Hitting::Timeout { events, .. } => *events,
        }
    }
}

/// Replays stream events up to `t_max` (inclusive); the clock ends at
/// `t_max` exactly. Deterministic given the initial state, stream and
/// filters.
pub fn run_until(
    state: &mut DynamicsState,
    stream: &mut EventStream,
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
    while let Some(ev) = stream.next_before(t_max) {
        let out = state.apply_event(&ev)?;
        events += 1;
        if let Some(flip) = out.flip {
            obs.on_flip(&flip);
            if state.field.is_all_plus() {
                obs.on_absorption(flip.time);
            }
        }
        if events.is_multiple_of(10_000) {
            debug_assert_eq!(state.field.minus_count(), state.field.recount());
        }
    }
    state.clock = t_max;
    Ok(RunStats { events })
}

/// Replays events until the field is all plus or the cap is reached. A
/// timeout is a reported outcome, not an error.
pub fn run_to_absorption(
    state: &mut DynamicsState,
    stream: &mut EventStream,
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
    while let Some(ev) = stream.next_before(t_cap) {
        let out = state.apply_event(&ev)?;
        events += 1;
        if let Some(flip) = out.flip {
            obs.on_flip(&flip);
            if state.field.is_all_plus() {
                obs.on_absorption(flip.time);
                return Ok(Hitting::Absorbed {
                    time: flip.time,
                    events,
                });
            }
        }
        if events.is_multiple_of(10_000) {
            debug_assert_eq!(state.field.minus_count(), state.field.recount());
        }
    }
    state.clock = t_cap;
    Ok(Hitting::Timeout { t_cap, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{hypercube, BoundaryCondition};

    fn plus_square(l: u32) -> (Arc<Region>, BoundaryCondition) {
        let region = Arc::new(hypercube(l, 2).unwrap());
        let bc = BoundaryCondition::uniform(&region, 1).unwrap();
        (region, bc)
    }

    #[test]
    fn local_rule_cases() {
        assert_eq!(local_rule(2, &[1, 1, 1, -1], -1).unwrap(), 1);
        assert_eq!(local_rule(2, &[1, 1, -1, -1], -1).unwrap(), -1);
        assert_eq!(local_rule(2, &[1, 1, -1, -1], 1).unwrap(), 1);
        assert_eq!(local_rule(4, &[1, 1, 1, 1, 1, -1, -1, -1], -1).unwrap(), 1);
        assert!(local_rule(2, &[1, 1, 1], 1).is_err());
        assert!(local_rule(2, &[1, 1, 0, 1], 1).is_err());
    }

    #[test]
    fn stencil_boundary_sums() {
        let (region, bc) = plus_square(2);
        let st = Stencil::build(&region, &bc).unwrap();
        // every site of the 2x2 square has two boundary neighbours, all plus
        for site in 0..4 {
            assert_eq!(st.boundary_sum(site), 2);
            assert_eq!(st.neighbors(site).count(), 2);
        }
    }

    #[test]
    fn all_plus_with_plus_boundary_is_absorbing() {
        let (region, bc) = plus_square(3);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_plus(9)).unwrap();
        let mut stream = EventStream::new(5, 9).unwrap();
        for _ in 0..1_000_000 {
            let ev = stream.next_event();
            let out = state.apply_event(&ev).unwrap();
            assert!(out.flip.is_none());
        }
        assert!(state.field.is_all_plus());
    }

    #[test]
    fn single_site_absorbs_at_first_event() {
        let (region, bc) = plus_square(1);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_minus(1)).unwrap();
        let mut stream = EventStream::new(1, 1).unwrap();
        let first_time = stream.peek_time();
        let hit = run_to_absorption(&mut state, &mut stream, 1e9, &mut NoObserver).unwrap();
        assert_eq!(
            hit,
            Hitting::Absorbed {
                time: first_time,
                events: 1
            }
        );
    }

    #[test]
    fn all_plus_start_has_zero_hitting_time() {
        let (region, bc) = plus_square(4);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_plus(16)).unwrap();
        let mut stream = EventStream::new(2, 16).unwrap();
        let hit = run_to_absorption(&mut state, &mut stream, 10.0, &mut NoObserver).unwrap();
        assert_eq!(hit.time(), Some(0.0));
    }

    #[test]
    fn run_until_at_clock_consumes_nothing() {
        let (region, bc) = plus_square(2);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_minus(4)).unwrap();
        let mut stream = EventStream::new(3, 4).unwrap();
        let stats = run_until(&mut state, &mut stream, 0.0, &mut NoObserver).unwrap();
        assert_eq!(stats.events, 0);
        assert_eq!(state.field.minus_count(), 4);
    }

    #[test]
    fn frozen_sites_ignore_events() {
        let (region, bc) = plus_square(2);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_minus(4)).unwrap();
        state
            .add_filter(UpdateFilter::FreezeRegion {
                mask: vec![true; 4],
                until: 50.0,
            })
            .unwrap();
        let mut stream = EventStream::new(9, 4).unwrap();
        while let Some(ev) = stream.next_before(49.0) {
            let out = state.apply_event(&ev).unwrap();
            assert!(out.flip.is_none(), "frozen site flipped at {}", ev.time);
        }
        assert_eq!(state.field.minus_count(), 4);
        // after the deadline events act again
        let mut stats = RunStats { events: 0 };
        while state.field.minus_count() > 0 {
            let ev = stream.next_event();
            state.apply_event(&ev).unwrap();
            stats.events += 1;
            assert!(stats.events < 100_000);
        }
    }

    #[test]
    fn block_minus_outside_keeps_plus_spins() {
        // every neighbour sum pushes towards minus, but the block filter
        // protects nothing, so plus spins never decay
        let region = Arc::new(hypercube(2, 2).unwrap());
        let bc = BoundaryCondition::uniform(&region, -1).unwrap();
        let mut state = DynamicsState::new(region, &bc, SpinField::all_plus(4)).unwrap();
        state
            .add_filter(UpdateFilter::BlockMinusOutside {
                protected: vec![false; 4],
            })
            .unwrap();
        let mut stream = EventStream::new(17, 4).unwrap();
        let mut saw_cancel = false;
        for _ in 0..10_000 {
            let ev = stream.next_event();
            let out = state.apply_event(&ev).unwrap();
            assert!(out.flip.is_none());
            saw_cancel |= out.canceled;
        }
        assert!(saw_cancel);
        assert!(state.field.is_all_plus());
    }

    #[test]
    fn filter_order_does_not_matter() {
        let (region, bc) = plus_square(3);
        let freeze = UpdateFilter::FreezeRegion {
            mask: (0..9).map(|i| i < 3).collect(),
            until: 2.0,
        };
        let block = UpdateFilter::BlockMinusOutside {
            protected: (0..9).map(|i| i % 2 == 0).collect(),
        };
        let mut a = DynamicsState::new(region.clone(), &bc, SpinField::all_minus(9)).unwrap();
        a.add_filter(freeze.clone()).unwrap();
        a.add_filter(block.clone()).unwrap();
        let mut b = DynamicsState::new(region, &bc, SpinField::all_minus(9)).unwrap();
        b.add_filter(block).unwrap();
        b.add_filter(freeze).unwrap();
        let mut sa = EventStream::new(123, 9).unwrap();
        let mut sb = sa.clone();
        run_until(&mut a, &mut sa, 30.0, &mut NoObserver).unwrap();
        run_until(&mut b, &mut sb, 30.0, &mut NoObserver).unwrap();
        assert_eq!(a.field, b.field);
    }

    #[test]
    fn event_validation() {
        let (region, bc) = plus_square(2);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_minus(4)).unwrap();
        let bad_site = Event {
            time: 1.0,
            site: 99,
            coin: 1,
        };
        assert!(state.apply_event(&bad_site).is_err());
        state
            .apply_event(&Event {
                time: 5.0,
                site: 0,
                coin: 1,
            })
            .unwrap();
        let stale = Event {
            time: 4.0,
            site: 0,
            coin: 1,
        };
        assert!(state.apply_event(&stale).is_err());
    }

    #[test]
    fn minus_count_stays_consistent() {
        let (region, bc) = plus_square(4);
        let mut state = DynamicsState::new(region, &bc, SpinField::all_minus(16)).unwrap();
        let mut stream = EventStream::new(77, 16).unwrap();
        for _ in 0..20_000 {
            let ev = stream.next_event();
            state.apply_event(&ev).unwrap();
        }
        assert_eq!(state.field.minus_count(), state.field.recount());
    }

    #[test]
    fn watched_set_records_first_minus() {
        let (region, bc) = plus_square(2);
        let field = SpinField::all_plus(4);
        let mut watch = WatchedSet::new(vec![true; 4], 0.0, &field);
        watch.on_flip(&Flip {
            time: 3.0,
            site: 1,
            old: 1,
            new: -1,
        });
        watch.on_flip(&Flip {
            time: 4.0,
            site: 2,
            old: 1,
            new: -1,
        });
        assert_eq!(watch.first_minus, Some(3.0));
        drop((region, bc));
    }
}
