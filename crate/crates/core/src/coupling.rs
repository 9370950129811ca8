//! Coupled runs on shared randomness and their pathwise verifications.
//!
//! All copies in a coupled run consume the same `(time, site, coin)` triples,
//! which is exactly the construction that makes monotonicity a pathwise
//! statement: with ordered initial fields and ordered boundary conditions the
//! spin order holds after every single event, not merely in distribution.
//! Violations are structured witnesses (never panics): they carry the seed,
//! the event ordinal and the offending site, and signal an implementation
//! bug in the dynamics rather than a statistical fluctuation.
//!
//! The slice check replays a slab dynamics against the three-dimensional
//! shell dynamics of each of its height slices, driven by the restricted
//! view of the same stream, and requires bit-identical flip sequences.

use serde::Serialize;
use std::sync::Arc;

use crate::dynamics::{DynamicsState, EngineKind, SpinField, UpdateFilter};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, Region, SlabSystem};
use crate::randomness::{restrict_view, EventStream, SplitMix64};

/// One copy in a coupled run: boundary condition, initial field, filters.
#[derive(Debug, Clone)]
pub struct CoupledSpec {
    pub bc: BoundaryCondition,
    pub init: SpinField,
    pub filters: Vec<UpdateFilter>,
}

/// Witness of a failed pathwise check.
#[derive(Debug, Clone, Serialize)]
pub struct OrderViolation {
    /// Which check failed: "order", "equality" or "slice".
    pub kind: String,
    /// Indices of the compared copies (lower, upper).
    pub pair: (usize, usize),
    pub time: f64,
    pub event_no: u64,
    pub site_index: u32,
    pub site: Vec<i32>,
    pub lower_spin: i8,
    pub upper_spin: i8,
    /// Seed of the shared stream, for exact reproduction.
    pub seed: u64,
}

/// Summary of a clean coupled run.
#[derive(Debug, Clone, Serialize)]
pub struct DominationReport {
    pub events: u64,
    pub pairs: usize,
    pub order_checks: u64,
}

/// Outcome of a pathwise verification: clean report or witness.
#[derive(Debug, Clone, Serialize)]
pub enum Verdict<R> {
    Clean(R),
    Violation(OrderViolation),
}

impl<R> Verdict<R> {
    pub fn is_clean(&self) -> bool {
        matches!(self, Verdict::Clean(_))
    }

    pub fn violation(&self) -> Option<&OrderViolation> {
        match self {
            Verdict::Violation(v) => Some(v),
            Verdict::Clean(_) => None,
        }
    }
}

/// Options of a coupled run.
#[derive(Debug, Clone)]
pub struct CoupleOptions {
    /// Frequency of whole-field order scans (in events); per-event checks at
    /// the updated site happen always.
    pub full_check_every: u64,
    /// Engine request; only the graphical engine can share a stream.
    pub engine: EngineKind,
    /// Verification hook: corrupt the upper copy of the first pair at this
    /// event ordinal to exercise the violation path end to end.
    pub fault_at: Option<u64>,
}

impl Default for CoupleOptions {
    fn default() -> Self {
        CoupleOptions {
            full_check_every: 1024,
            engine: EngineKind::Graphical,
            fault_at: None,
        }
    }
}

/// Runs several dynamics on one shared stream and asserts the pointwise spin
/// order for every comparison pair `(lower, upper)` after every event.
///
/// Preconditions per pair: `init_lower <= init_upper` and
/// `bc_lower <= bc_upper` pointwise; all copies live on the same region.
pub fn coupled_run(
    region: Arc<Region>,
    specs: Vec<CoupledSpec>,
    pairs: Vec<(usize, usize)>,
    stream: &mut EventStream,
    t_max: f64,
    opts: &CoupleOptions,
) -> Result<Verdict<DominationReport>> {
    if opts.engine == EngineKind::RejectionFree {
        return Err(Error::InvalidMode(
            "coupled runs replay a shared stream; the rejection-free engine cannot".into(),
        ));
    }
    if specs.is_empty() {
        return Err(Error::InvalidInput(
            "coupled run needs at least one copy".into(),
        ));
    }
    if stream.n_sites() as usize != region.len() {
        return Err(Error::InvalidInput(
            "stream size does not match region".into(),
        ));
    }
    let mut states = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut st = DynamicsState::new(region.clone(), &spec.bc, spec.init)?;
        for f in spec.filters {
            st.add_filter(f)?;
        }
        states.push(st);
    }
    for &(lo, hi) in &pairs {
        if lo >= states.len() || hi >= states.len() {
            return Err(Error::InvalidInput(format!(
                "comparison pair ({lo}, {hi}) out of range"
            )));
        }
        if !states[lo].field.le(&states[hi].field) {
            return Err(Error::InvalidInput(format!(
                "initial fields of pair ({lo}, {hi}) are not ordered"
            )));
        }
        let ordered_bc = states[lo]
            .bc_spins()
            .iter()
            .zip(states[hi].bc_spins())
            .all(|(a, b)| a <= b);
        if !ordered_bc {
            return Err(Error::InvalidInput(format!(
                "boundary conditions of pair ({lo}, {hi}) are not ordered"
            )));
        }
    }

    let seed = stream.seed();
    let mut events = 0u64;
    let mut order_checks = 0u64;
    let make_witness =
        |states: &[DynamicsState], pair: (usize, usize), site: u32, time: f64, events: u64| {
            OrderViolation {
                kind: "order".into(),
                pair,
                time,
                event_no: events,
                site_index: site,
                site: region.site(site).to_vec(),
                lower_spin: states[pair.0].field.spin(site),
                upper_spin: states[pair.1].field.spin(site),
                seed,
            }
        };

    while let Some(ev) = stream.next_before(t_max) {
        events += 1;
        for st in &mut states {
            st.apply_event(&ev)?;
        }
        if opts.fault_at == Some(events) {
            if let Some(&(lo, hi)) = pairs.first() {
                // corrupt both copies against the order, as a buggy update
                // rule would; the per-event check must catch it here
                states[lo].force_spin(ev.site, 1);
                states[hi].force_spin(ev.site, -1);
            }
        }
        for &(lo, hi) in &pairs {
            order_checks += 1;
            if states[lo].field.spin(ev.site) > states[hi].field.spin(ev.site) {
                return Ok(Verdict::Violation(make_witness(
                    &states,
                    (lo, hi),
                    ev.site,
                    ev.time,
                    events,
                )));
            }
        }
        if events.is_multiple_of(opts.full_check_every) {
            if let Some((pair, site)) = first_order_break(&states, &pairs) {
                return Ok(Verdict::Violation(make_witness(
                    &states, pair, site, ev.time, events,
                )));
            }
        }
    }
    if let Some((pair, site)) = first_order_break(&states, &pairs) {
        let time = states[pair.0].clock;
        return Ok(Verdict::Violation(make_witness(
            &states, pair, site, time, events,
        )));
    }
    Ok(Verdict::Clean(DominationReport {
        events,
        pairs: pairs.len(),
        order_checks,
    }))
}

fn first_order_break(
    states: &[DynamicsState],
    pairs: &[(usize, usize)],
) -> Option<((usize, usize), u32)> {
    for &(lo, hi) in pairs {
        let a = states[lo].field.spins();
        let b = states[hi].field.spins();
        for (site, (x, y)) in a.iter().zip(b).enumerate() {
            if x > y {
                return Some(((lo, hi), site as u32));
            }
        }
    }
    None
}

/// Report of a clean censoring-domination run.
#[derive(Debug, Clone, Serialize)]
pub struct CensoringReport {
    pub events: u64,
    pub cancellations: u64,
    /// Time of the first cancelled move, if any; the two copies are
    /// identical before it.
    pub first_cancel: Option<f64>,
}

/// Runs an uncensored copy against a copy whose minus-creating moves outside
/// `protected` are cancelled, on one shared stream.
///
/// Cancelling minus-creations can only raise spins, so the censored copy
/// dominates: `uncensored <= censored` pointwise at every event, with exact
/// equality up to the first cancelled move.
pub fn censoring_domination(
    region: Arc<Region>,
    bc: &BoundaryCondition,
    init: SpinField,
    protected: Vec<bool>,
    stream: &mut EventStream,
    t_max: f64,
) -> Result<Verdict<CensoringReport>> {
    if stream.n_sites() as usize != region.len() {
        return Err(Error::InvalidInput(
            "stream size does not match region".into(),
        ));
    }
    let mut uncensored = DynamicsState::new(region.clone(), bc, init.clone())?;
    let mut censored = DynamicsState::new(region.clone(), bc, init)?;
    censored.add_filter(UpdateFilter::BlockMinusOutside { protected })?;

    let seed = stream.seed();
    let mut events = 0u64;
    let mut cancellations = 0u64;
    let mut first_cancel: Option<f64> = None;
    while let Some(ev) = stream.next_before(t_max) {
        events += 1;
        uncensored.apply_event(&ev)?;
        let out = censored.apply_event(&ev)?;
        if out.canceled {
            cancellations += 1;
            first_cancel.get_or_insert(ev.time);
        }
        let (u, c) = (uncensored.field.spin(ev.site), censored.field.spin(ev.site));
        let bad = if first_cancel.is_none() {
            u != c
        } else {
            u > c
        };
        if bad {
            return Ok(Verdict::Violation(OrderViolation {
                kind: if first_cancel.is_none() {
                    "equality"
                } else {
                    "order"
                }
                .into(),
                pair: (0, 1),
                time: ev.time,
                event_no: events,
                site_index: ev.site,
                site: region.site(ev.site).to_vec(),
                lower_spin: u,
                upper_spin: c,
                seed,
            }));
        }
        if events.is_multiple_of(1024) {
            if let Some(site) = censoring_break(&uncensored, &censored, first_cancel.is_none()) {
                return Ok(Verdict::Violation(OrderViolation {
                    kind: "order".into(),
                    pair: (0, 1),
                    time: ev.time,
                    event_no: events,
                    site_index: site,
                    site: region.site(site).to_vec(),
                    lower_spin: uncensored.field.spin(site),
                    upper_spin: censored.field.spin(site),
                    seed,
                }));
            }
        }
    }
    if let Some(site) = censoring_break(&uncensored, &censored, first_cancel.is_none()) {
        return Ok(Verdict::Violation(OrderViolation {
            kind: "order".into(),
            pair: (0, 1),
            time: uncensored.clock,
            event_no: events,
            site_index: site,
            site: region.site(site).to_vec(),
            lower_spin: uncensored.field.spin(site),
            upper_spin: censored.field.spin(site),
            seed,
        }));
    }
    Ok(Verdict::Clean(CensoringReport {
        events,
        cancellations,
        first_cancel,
    }))
}

fn censoring_break(
    uncensored: &DynamicsState,
    censored: &DynamicsState,
    require_equality: bool,
) -> Option<u32> {
    for (site, (u, c)) in uncensored
        .field
        .spins()
        .iter()
        .zip(censored.field.spins())
        .enumerate()
    {
        let bad = if require_equality { u != c } else { u > c };
        if bad {
            return Some(site as u32);
        }
    }
    None
}

/// One recorded flip of a slice, in shell-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceFlip {
    pub time: f64,
    pub shell_site: u32,
    pub old: i8,
    pub new: i8,
}

/// Witness of a slab/shell replay mismatch.
#[derive(Debug, Clone, Serialize)]
pub struct SliceMismatch {
    pub slice: usize,
    pub ordinal: usize,
    pub expected: Option<SliceFlip>,
    pub got: Option<SliceFlip>,
    pub seed: u64,
}

/// Summary of a clean slice-decoupling check.
#[derive(Debug, Clone, Serialize)]
pub struct SliceCheckReport {
    pub events: u64,
    pub flips: u64,
    pub slices: usize,
}

/// Outcome of the slice check.
#[derive(Debug, Clone, Serialize)]
pub enum SliceVerdict {
    Clean(SliceCheckReport),
    Mismatch(SliceMismatch),
}

impl SliceVerdict {
    pub fn is_clean(&self) -> bool {
        matches!(self, SliceVerdict::Clean(_))
    }
}

/// Verifies the dimension-reduction of a slab system.
///
/// Statically: every slab site has its height-axis neighbours outside the
/// slab with cancelling boundary spins, and the in-slice boundary spins
/// match the shell boundary conditions. Dynamically: the slab dynamics from
/// all minus is replayed for `events` events, and every height slice is
/// independently re-run as the mapped three-dimensional shell dynamics on
/// the restricted view of the same stream. Flip sequences must agree
/// bit-exactly (times, sites, directions), and so must the final fields.
pub fn slice_decoupling_check(sys: &SlabSystem, seed: u64, events: u64) -> Result<SliceVerdict> {
    sys.verify_vertical_cancellation()?;
    sys.verify_slice_bc_correspondence()?;

    let n = sys.region.len();
    let mut slab = DynamicsState::new(sys.region.clone(), &sys.bc, SpinField::all_minus(n))?;

    // A slab site and its shell image must see identical static boundary
    // contributions; with the vertical spins cancelling this is the whole
    // point of the construction.
    let shell_states: Vec<DynamicsState> = sys
        .slices
        .iter()
        .map(|slice| {
            DynamicsState::new(
                slice.shell.clone(),
                &slice.shell_bc,
                SpinField::all_minus(slice.shell.len()),
            )
        })
        .collect::<Result<_>>()?;
    for (idx, _) in sys.region.sites().enumerate() {
        let k = sys.slice_of[idx] as usize;
        let slab_bsum = slab.stencil().boundary_sum(idx as u32);
        let shell_bsum = shell_states[k].stencil().boundary_sum(sys.to_shell[idx]);
        if slab_bsum != shell_bsum {
            return Err(Error::Geometry(format!(
                "static boundary sums differ at slab site {idx}: {slab_bsum} vs {shell_bsum}"
            )));
        }
    }

    let mut stream = EventStream::new(seed, n as u32)?;
    let mut expected: Vec<Vec<SliceFlip>> = vec![Vec::new(); sys.slices.len()];
    let mut total_flips = 0u64;
    for _ in 0..events {
        let ev = stream.next_event();
        let out = slab.apply_event(&ev)?;
        if let Some(flip) = out.flip {
            total_flips += 1;
            let k = sys.slice_of[flip.site as usize] as usize;
            expected[k].push(SliceFlip {
                time: flip.time,
                shell_site: sys.to_shell[flip.site as usize],
                old: flip.old,
                new: flip.new,
            });
        }
    }
    let t_end = slab.clock;

    for (k, mut shell) in shell_states.into_iter().enumerate() {
        let mask: Vec<bool> = (0..n).map(|idx| sys.slice_of[idx] as usize == k).collect();
        let mut view = restrict_view(EventStream::new(seed, n as u32)?, mask)?;
        let mut cursor = 0usize;
        while let Some(ev) = view.next_before(t_end) {
            let shell_ev = crate::randomness::Event {
                time: ev.time,
                site: sys.to_shell[ev.site as usize],
                coin: ev.coin,
            };
            let out = shell.apply_event(&shell_ev)?;
            if let Some(flip) = out.flip {
                let got = SliceFlip {
                    time: flip.time,
                    shell_site: flip.site,
                    old: flip.old,
                    new: flip.new,
                };
                match expected[k].get(cursor) {
                    Some(want) if *want == got => cursor += 1,
                    want => {
                        return Ok(SliceVerdict::Mismatch(SliceMismatch {
                            slice: k,
                            ordinal: cursor,
                            expected: want.copied(),
                            got: Some(got),
                            seed,
                        }));
                    }
                }
            }
        }
        if cursor != expected[k].len() {
            return Ok(SliceVerdict::Mismatch(SliceMismatch {
                slice: k,
                ordinal: cursor,
                expected: expected[k].get(cursor).copied(),
                got: None,
                seed,
            }));
        }
        // final-field agreement through the bijection
        for (idx, _) in sys.region.sites().enumerate() {
            if sys.slice_of[idx] as usize != k {
                continue;
            }
            let want = slab.field.spin(idx as u32);
            let got = shell.field.spin(sys.to_shell[idx]);
            if want != got {
                return Ok(SliceVerdict::Mismatch(SliceMismatch {
                    slice: k,
                    ordinal: cursor,
                    expected: None,
                    got: None,
                    seed,
                }));
            }
        }
    }
    Ok(SliceVerdict::Clean(SliceCheckReport {
        events,
        flips: total_flips,
        slices: sys.slices.len(),
    }))
}

/// Configuration of the randomized verification campaigns.
#[derive(Debug, Clone)]
pub struct RandomCampaign {
    pub dims: Vec<usize>,
    pub l_min: u32,
    pub l_max: u32,
    pub runs: u32,
    pub seed: u64,
    /// Run length per trial in units of `L^2`.
    pub t_scale: f64,
    /// Fault-injection ordinal forwarded to every trial (verification hook).
    pub fault_at: Option<u64>,
}

impl RandomCampaign {
    pub fn new(runs: u32, seed: u64) -> RandomCampaign {
        RandomCampaign {
            dims: vec![2, 3, 4],
            l_min: 2,
            l_max: 8,
            runs,
            seed,
            t_scale: 1.0,
            fault_at: None,
        }
    }
}

/// Totals of a clean randomized campaign.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignTotals {
    pub runs: u32,
    pub events: u64,
    pub order_checks: u64,
    pub cancellations: u64,
}

fn random_bc_pair(
    region: &Region,
    rng: &mut SplitMix64,
) -> Result<(BoundaryCondition, BoundaryCondition)> {
    let boundary = region.boundary();
    let upper: Vec<i8> = (0..boundary.len())
        .map(|_| if rng.next_u64().is_multiple_of(2) { 1 } else { -1 })
        .collect();
    let lower: Vec<i8> = upper
        .iter()
        .map(|&s| {
            if s == 1 && rng.next_u64().is_multiple_of(3) {
                -1
            } else {
                s
            }
        })
        .collect();
    Ok((
        BoundaryCondition::new(boundary.clone(), lower)?,
        BoundaryCondition::new(boundary, upper)?,
    ))
}

/// Runs `cfg.runs` coupled trials on random hypercube regions with random
/// ordered initial fields and boundary conditions, cycling through the
/// requested dimensions. Stops at the first violation.
pub fn random_order_campaign(cfg: &RandomCampaign) -> Result<Verdict<CampaignTotals>> {
    let mut rng = SplitMix64::new(cfg.seed);
    let mut totals = CampaignTotals {
        runs: 0,
        events: 0,
        order_checks: 0,
        cancellations: 0,
    };
    for run in 0..cfg.runs {
        let d = cfg.dims[(run as usize) % cfg.dims.len()];
        let span = (cfg.l_max - cfg.l_min + 1) as u64;
        let l = cfg.l_min + (rng.next_u64() % span) as u32;
        let region = Arc::new(crate::geometry::hypercube(l, d)?);
        let n = region.len();
        let upper_field = random_field(n, &mut rng);
        let lower_field = random_lower_field(&upper_field, &mut rng);
        let (lower_bc, upper_bc) = random_bc_pair(&region, &mut rng)?;
        let specs = vec![
            CoupledSpec {
                bc: lower_bc,
                init: lower_field,
                filters: vec![],
            },
            CoupledSpec {
                bc: upper_bc,
                init: upper_field,
                filters: vec![],
            },
        ];
        let mut stream = EventStream::new(rng.next_u64(), n as u32)?;
        let opts = CoupleOptions {
            fault_at: cfg.fault_at,
            ..CoupleOptions::default()
        };
        let t_max = cfg.t_scale * (l as f64) * (l as f64);
        match coupled_run(region, specs, vec![(0, 1)], &mut stream, t_max, &opts)? {
            Verdict::Clean(report) => {
                totals.runs += 1;
                totals.events += report.events;
                totals.order_checks += report.order_checks;
            }
            Verdict::Violation(v) => return Ok(Verdict::Violation(v)),
        }
    }
    Ok(Verdict::Clean(totals))
}

/// Runs `cfg.runs` censoring trials with random protected sets, boundary
/// conditions and (alternately) all-minus or random starts.
pub fn random_censoring_campaign(cfg: &RandomCampaign) -> Result<Verdict<CampaignTotals>> {
    let mut rng = SplitMix64::new(cfg.seed ^ 0x5eed_cafe);
    let mut totals = CampaignTotals {
        runs: 0,
        events: 0,
        order_checks: 0,
        cancellations: 0,
    };
    for run in 0..cfg.runs {
        let d = cfg.dims[(run as usize) % cfg.dims.len()];
        let span = (cfg.l_max - cfg.l_min + 1) as u64;
        let l = cfg.l_min + (rng.next_u64() % span) as u32;
        let region = Arc::new(crate::geometry::hypercube(l, d)?);
        let n = region.len();
        let boundary = region.boundary();
        let spins: Vec<i8> = (0..boundary.len())
            .map(|_| if rng.next_u64().is_multiple_of(2) { 1 } else { -1 })
            .collect();
        let bc = BoundaryCondition::new(boundary, spins)?;
        let init = if run % 2 == 0 {
            SpinField::all_minus(n)
        } else {
            random_field(n, &mut rng)
        };
        let protected: Vec<bool> = (0..n).map(|_| rng.next_u64().is_multiple_of(3)).collect();
        let mut stream = EventStream::new(rng.next_u64(), n as u32)?;
        let t_max = cfg.t_scale * (l as f64) * (l as f64);
        match censoring_domination(region, &bc, init, protected, &mut stream, t_max)? {
            Verdict::Clean(report) => {
                totals.runs += 1;
                totals.events += report.events;
                totals.cancellations += report.cancellations;
            }
            Verdict::Violation(v) => return Ok(Verdict::Violation(v)),
        }
    }
    Ok(Verdict::Clean(totals))
}

/// Draws a random spin field dominated by `upper`.
pub fn random_lower_field(upper: &SpinField, rng: &mut SplitMix64) -> SpinField {
    let spins: Vec<i8> = upper
        .spins()
        .iter()
        .map(|&s| {
            if s == 1 && rng.next_u64().is_multiple_of(2) {
                -1
            } else {
                s
            }
        })
        .collect();
    SpinField::from_spins(spins).expect("valid spins")
}

/// Draws a random spin field.
pub fn random_field(n: usize, rng: &mut SplitMix64) -> SpinField {
    let spins: Vec<i8> = (0..n)
        .map(|_| if rng.next_u64().is_multiple_of(2) { 1 } else { -1 })
        .collect();
    SpinField::from_spins(spins).expect("valid spins")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{hypercube, GeometryParams};

    fn square(l: u32) -> (Arc<Region>, BoundaryCondition) {
        let region = Arc::new(hypercube(l, 2).unwrap());
        let bc = BoundaryCondition::uniform(&region, 1).unwrap();
        (region, bc)
    }

    #[test]
    fn identical_inputs_identical_trajectories() {
        let (region, bc) = square(4);
        let init = SpinField::all_minus(16);
        let specs = vec![
            CoupledSpec {
                bc: bc.clone(),
                init: init.clone(),
                filters: vec![],
            },
            CoupledSpec {
                bc,
                init,
                filters: vec![],
            },
        ];
        let mut stream = EventStream::new(3, 16).unwrap();
        let verdict = coupled_run(
            region,
            specs,
            vec![(0, 1), (1, 0)], // equality = order both ways
            &mut stream,
            60.0,
            &CoupleOptions::default(),
        )
        .unwrap();
        assert!(verdict.is_clean());
    }

    #[test]
    fn all_minus_below_all_plus_stays_ordered() {
        let (region, bc) = square(4);
        let specs = vec![
            CoupledSpec {
                bc: bc.clone(),
                init: SpinField::all_minus(16),
                filters: vec![],
            },
            CoupledSpec {
                bc,
                init: SpinField::all_plus(16),
                filters: vec![],
            },
        ];
        let mut stream = EventStream::new(11, 16).unwrap();
        let verdict = coupled_run(
            region,
            specs,
            vec![(0, 1)],
            &mut stream,
            100.0,
            &CoupleOptions::default(),
        )
        .unwrap();
        match verdict {
            Verdict::Clean(report) => assert!(report.events > 0),
            Verdict::Violation(v) => panic!("unexpected violation {v:?}"),
        }
    }

    #[test]
    fn unordered_inputs_rejected() {
        let (region, bc) = square(2);
        let specs = vec![
            CoupledSpec {
                bc: bc.clone(),
                init: SpinField::all_plus(4),
                filters: vec![],
            },
            CoupledSpec {
                bc,
                init: SpinField::all_minus(4),
                filters: vec![],
            },
        ];
        let mut stream = EventStream::new(5, 4).unwrap();
        let err = coupled_run(
            region,
            specs,
            vec![(0, 1)],
            &mut stream,
            5.0,
            &CoupleOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejection_free_engine_is_invalid_for_coupling() {
        let (region, bc) = square(2);
        let specs = vec![CoupledSpec {
            bc,
            init: SpinField::all_minus(4),
            filters: vec![],
        }];
        let mut stream = EventStream::new(5, 4).unwrap();
        let opts = CoupleOptions {
            engine: EngineKind::RejectionFree,
            ..CoupleOptions::default()
        };
        match coupled_run(region, specs, vec![], &mut stream, 5.0, &opts) {
            Err(Error::InvalidMode(_)) => {}
            other => panic!("expected invalid-mode, got {other:?}"),
        }
    }

    #[test]
    fn injected_fault_is_caught_with_witness() {
        let (region, bc) = square(4);
        let specs = vec![
            CoupledSpec {
                bc: bc.clone(),
                init: SpinField::all_minus(16),
                filters: vec![],
            },
            CoupledSpec {
                bc,
                init: SpinField::all_plus(16),
                filters: vec![],
            },
        ];
        let mut stream = EventStream::new(21, 16).unwrap();
        let opts = CoupleOptions {
            fault_at: Some(5),
            ..CoupleOptions::default()
        };
        let verdict = coupled_run(region, specs, vec![(0, 1)], &mut stream, 200.0, &opts).unwrap();
        let v = verdict.violation().expect("fault must be detected");
        assert_eq!(v.pair, (0, 1));
        assert_eq!(v.seed, 21);
        assert!(v.lower_spin > v.upper_spin);
    }

    #[test]
    fn censoring_with_full_protection_is_identity() {
        let (region, bc) = square(4);
        let mut stream = EventStream::new(9, 16).unwrap();
        let verdict = censoring_domination(
            region,
            &bc,
            SpinField::all_minus(16),
            vec![true; 16],
            &mut stream,
            200.0,
        )
        .unwrap();
        match verdict {
            Verdict::Clean(report) => {
                assert_eq!(report.cancellations, 0);
                assert_eq!(report.first_cancel, None);
            }
            Verdict::Violation(v) => panic!("unexpected violation {v:?}"),
        }
    }

    #[test]
    fn censoring_with_empty_protection_freezes_all_plus() {
        // all-plus start, nothing protected: the censored copy can never
        // create a minus anywhere, so it stays the top configuration
        let region = Arc::new(hypercube(3, 2).unwrap());
        let bc = BoundaryCondition::uniform(&region, -1).unwrap();
        let mut stream = EventStream::new(13, 9).unwrap();
        let verdict = censoring_domination(
            region,
            &bc,
            SpinField::all_plus(9),
            vec![false; 9],
            &mut stream,
            100.0,
        )
        .unwrap();
        match verdict {
            Verdict::Clean(report) => assert!(report.cancellations > 0),
            Verdict::Violation(v) => panic!("unexpected violation {v:?}"),
        }
    }

    #[test]
    fn slice_check_first_layer_small() {
        let gp = GeometryParams::new(3, 4);
        let sys = crate::geometry::first_layer(&gp).unwrap();
        let verdict = slice_decoupling_check(&sys, 17, 5000).unwrap();
        assert!(verdict.is_clean(), "{verdict:?}");
    }

    #[test]
    fn slice_check_slab_small() {
        let gp = GeometryParams::new(3, 4);
        let sys = crate::geometry::eta_slab(&gp, 1).unwrap();
        let verdict = slice_decoupling_check(&sys, 29, 5000).unwrap();
        match &verdict {
            SliceVerdict::Clean(report) => assert!(report.flips > 0),
            SliceVerdict::Mismatch(m) => panic!("mismatch {m:?}"),
        }
    }
}
