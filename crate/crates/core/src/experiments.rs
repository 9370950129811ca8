//! Hitting-time campaigns, mixing-time estimation and scaling fits.
//!
//! A campaign runs `R` independent replicas of the dynamics per system size,
//! each on its own label-derived stream, and records the absorption time (or
//! a timeout) per replica. The mixing time of one size is estimated as the
//! 75th percentile of the hitting-time sample, with a distribution-free
//! order-statistic confidence interval; scaling exponents come from least
//! squares on log-log data, optionally with a log-log-log correction term.
//!
//! Records persist as CSV under a fixed header; every output embeds the
//! campaign id, base seed and a hash of the resolved configuration. Given
//! the same configuration the records are identical except for the wall-time
//! column, which measures the actual run.

use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;

use crate::dynamics::{
    run_to_absorption, run_until, DynamicsState, EngineKind, Flip, Hitting, Observer,
    RejectionFreeEngine, SpinField, UpdateFilter,
};
use crate::error::{Error, Result};
use crate::geometry::{
    eta0, hypercube, shrunk_set, BoundaryCondition, GeometryParams, LogBase, Region,
};
use crate::randomness::{EventStream, Purpose, StreamLabel};
use crate::stats;

/// Fixed CSV header of campaign records.
pub const CSV_HEADER: &str = "d,L,replica,seed,t_plus,timeout,events,wall_ms";

/// Geometry-plus-boundary preset of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Preset {
    /// Hypercube `{1..L}^d` with uniform plus boundary, all-minus start.
    HypercubePlus,
    /// Polylog cylinder with the minus-top boundary condition.
    CylinderEta0,
    /// Hypercube with plus boundary where layer `i` along the last axis is
    /// frozen until `(i-1) L^2 (log L)^{c0}`.
    Layered,
    /// Containment measurement on the cylinder (see [`envelope_check`]).
    Envelope,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::HypercubePlus => "hypercube",
            Preset::CylinderEta0 => "cylinder",
            Preset::Layered => "layered",
            Preset::Envelope => "envelope",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "hypercube" | "hypercube+plus" => Ok(Preset::HypercubePlus),
            "cylinder" | "cylinder+eta0" => Ok(Preset::CylinderEta0),
            "layered" => Ok(Preset::Layered),
            "envelope" => Ok(Preset::Envelope),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

/// Cap rule for a single run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TcapRule {
    /// Preset-dependent default: `20 L^2 (ln L)^2` on hypercubes, `L^3` on
    /// the cylinder, `L^3 (log L)^{c0}` for the layered schedule.
    Auto,
    Fixed(f64),
}

/// Fully resolved campaign configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub campaign_id: String,
    pub dim: usize,
    pub ls: Vec<u32>,
    pub preset: Preset,
    pub replicas: u32,
    pub seed: u64,
    pub engine: EngineKind,
    pub tcap: TcapRule,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub log_base: LogBase,
    /// Worker threads; 0 = available parallelism.
    pub jobs: usize,
}

impl CampaignConfig {
    pub fn new(campaign_id: &str, dim: usize, ls: Vec<u32>, preset: Preset) -> CampaignConfig {
        CampaignConfig {
            campaign_id: campaign_id.into(),
            dim,
            ls,
            preset,
            replicas: 1,
            seed: 0,
            engine: EngineKind::RejectionFree,
            tcap: TcapRule::Auto,
            c0: 10.0,
            c1: 6.6,
            c2: 1.5,
            log_base: LogBase::Natural,
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidParameter(
                "campaign dimension must be >= 2".into(),
            ));
        }
        if self.ls.is_empty() || self.ls.contains(&0) {
            return Err(Error::InvalidParameter(
                "campaign needs positive system sizes".into(),
            ));
        }
        let mut sorted = self.ls.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.ls.len() {
            return Err(Error::InvalidParameter(
                "system sizes must be distinct".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(Error::InvalidParameter(
                "campaign needs at least one replica".into(),
            ));
        }
        if !(self.c1 > 6.5) {
            return Err(Error::InvalidParameter(format!(
                "c1 must exceed 13/2, got {}",
                self.c1
            )));
        }
        if !(self.c0 > self.c1 + 2.0 * self.c2) {
            return Err(Error::InvalidParameter(format!(
                "c0 must exceed c1 + 2 c2 = {}, got {}",
                self.c1 + 2.0 * self.c2,
                self.c0
            )));
        }
        if matches!(self.preset, Preset::CylinderEta0 | Preset::Envelope) && self.dim < 4 {
            return Err(Error::InvalidParameter(
                "cylinder presets need dim >= 4".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry_params(&self, l: u32) -> GeometryParams {
        GeometryParams {
            l,
            d: self.dim,
            c2: self.c2,
            log_base: self.log_base,
        }
    }

    /// Cap for one run at size `l`.
    pub fn tcap_for(&self, l: u32) -> f64 {
        match self.tcap {
            TcapRule::Fixed(t) => t,
            TcapRule::Auto => {
                let lf = l as f64;
                match self.preset {
                    Preset::HypercubePlus => 20.0 * lf * lf * lf.ln().max(1.0).powi(2),
                    Preset::CylinderEta0 | Preset::Envelope => lf * lf * lf,
                    Preset::Layered => {
                        (lf * lf * lf * self.log_base.log(lf).max(1.0).powf(self.c0))
                            .max(20.0 * lf * lf)
                    }
                }
            }
        }
    }

    /// Canonical one-line rendering; hashing it identifies the resolved
    /// configuration in every output artifact.
    pub fn canonical_string(&self) -> String {
        let ls = self
            .ls
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let tcap = match self.tcap {
            TcapRule::Auto => "auto".to_string(),
            TcapRule::Fixed(t) => format!("{t}"),
        };
        format!(
            "campaign={};dim={};Ls={};preset={};replicas={};seed={};engine={};tcap={};c0={};c1={};c2={};logbase={}",
            self.campaign_id,
            self.dim,
            ls,
            self.preset.name(),
            self.replicas,
            self.seed,
            self.engine.name(),
            tcap,
            self.c0,
            self.c1,
            self.c2,
            self.log_base.name()
        )
    }

    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_string().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Parses the plain `key=value` configuration format. Keys: `campaign`,
    /// `dim`, `Ls` (comma separated), `preset`, `replicas`, `seed`, `engine`,
    /// `tcap` (`auto` or a number), `c0`, `c1`, `c2`, `logbase`, `jobs`.
    /// Lines starting with `#` are comments.
    pub fn parse_config(text: &str) -> Result<CampaignConfig> {
        let mut dim = None;
        let mut ls: Option<Vec<u32>> = None;
        let mut preset = None;
        let mut cfg = CampaignConfig::new("campaign", 2, vec![1], Preset::HypercubePlus);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key=value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |what: &str| Error::Config(format!("line {}: bad {what}: '{value}'", lineno + 1));
            match key {
                "campaign" => cfg.campaign_id = value.to_string(),
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad("dim"))?),
                "Ls" | "ls" => {
                    let parsed: std::result::Result<Vec<u32>, _> =
                        value.split(',').map(|s| s.trim().parse::<u32>()).collect();
                    ls = Some(parsed.map_err(|_| bad("Ls"))?);
                }
                "preset" => preset = Some(Preset::parse(value)?),
                "replicas" => cfg.replicas = value.parse().map_err(|_| bad("replicas"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "engine" => {
                    cfg.engine = match value {
                        "graphical" => EngineKind::Graphical,
                        "rejection-free" | "rejection_free" => EngineKind::RejectionFree,
                        _ => return Err(bad("engine")),
                    }
                }
                "tcap" => {
                    cfg.tcap = if value == "auto" {
                        TcapRule::Auto
                    } else {
                        TcapRule::Fixed(value.parse().map_err(|_| bad("tcap"))?)
                    }
                }
                "c0" => cfg.c0 = value.parse().map_err(|_| bad("c0"))?,
                "c1" => cfg.c1 = value.parse().map_err(|_| bad("c1"))?,
                "c2" => cfg.c2 = value.parse().map_err(|_| bad("c2"))?,
                "logbase" => {
                    cfg.log_base = match value {
                        "natural" | "ln" => LogBase::Natural,
                        "base2" | "log2" => LogBase::Base2,
                        "base10" | "log10" => LogBase::Base10,
                        _ => return Err(bad("logbase")),
                    }
                }
                "jobs" => cfg.jobs = value.parse().map_err(|_| bad("jobs"))?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        cfg.dim = dim.ok_or_else(|| Error::Config("missing key 'dim'".into()))?;
        cfg.ls = ls.ok_or_else(|| Error::Config("missing key 'Ls'".into()))?;
        cfg.preset = preset.ok_or_else(|| Error::Config("missing key 'preset'".into()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One replica's measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingRecord {
    pub d: usize,
    pub l: u32,
    pub replica: u32,
    /// Seed of the stream that drove this run (engine-dependent purpose).
    pub seed: u64,
    /// Hitting time of the all-plus state; absent on timeout.
    pub t_plus: Option<f64>,
    pub events: u64,
    pub wall_ms: u64,
}

impl HittingRecord {
    pub fn timed_out(&self) -> bool {
        self.t_plus.is_none()
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.d,
            self.l,
            self.replica,
            self.seed,
            self.t_plus.map(|t| t.to_string()).unwrap_or_default(),
            u8::from(self.timed_out()),
            self.events,
            self.wall_ms
        )
    }

    pub fn parse_csv_row(row: &str) -> Result<HittingRecord> {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Io(format!("malformed record row '{row}'")));
        }
        let parse_err = |what: &str| Error::Io(format!("bad {what} in row '{row}'"));
        let t_plus = if fields[4].is_empty() {
            None
        } else {
            Some(fields[4].parse::<f64>().map_err(|_| parse_err("t_plus"))?)
        };
        Ok(HittingRecord {
            d: fields[0].parse().map_err(|_| parse_err("d"))?,
            l: fields[1].parse().map_err(|_| parse_err("L"))?,
            replica: fields[2].parse().map_err(|_| parse_err("replica"))?,
            seed: fields[3].parse().map_err(|_| parse_err("seed"))?,
            t_plus,
            events: fields[6].parse().map_err(|_| parse_err("events"))?,
            wall_ms: fields[7].parse().map_err(|_| parse_err("wall_ms"))?,
        })
    }
}

/// Writes records with the standard header; comment lines carry the campaign
/// identity and configuration hash.
pub fn write_records_csv<W: Write>(
    w: &mut W,
    cfg: &CampaignConfig,
    records: &[HittingRecord],
) -> Result<()> {
    writeln!(
        w,
        "# campaign={} seed={} config_hash={:016x}",
        cfg.campaign_id,
        cfg.seed,
        cfg.config_hash()
    )?;
    writeln!(w, "# config: {}", cfg.canonical_string())?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Reads records written by [`write_records_csv`].
pub fn read_records_csv<R: BufRead>(r: R) -> Result<Vec<HittingRecord>> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                return Err(Error::Io(format!(
                    "unexpected header '{line}', want '{CSV_HEADER}'"
                )));
            }
            saw_header = true;
            continue;
        }
        records.push(HittingRecord::parse_csv_row(line)?);
    }
    if !saw_header {
        return Err(Error::Io("missing CSV header".into()));
    }
    Ok(records)
}

/// Geometry, boundary condition and filters of one campaign run.
pub struct Setup {
    pub region: Arc<Region>,
    pub bc: BoundaryCondition,
    pub filters: Vec<UpdateFilter>,
}

/// Builds the preset geometry for one system size. Regions are shared across
/// replicas; they are immutable after construction.
pub fn build_setup(cfg: &CampaignConfig, l: u32) -> Result<Setup> {
    match cfg.preset {
        Preset::HypercubePlus => {
            let region = Arc::new(hypercube(l, cfg.dim)?);
            let bc = BoundaryCondition::uniform(&region, 1)?;
            Ok(Setup {
                region,
                bc,
                filters: Vec::new(),
            })
        }
        Preset::CylinderEta0 | Preset::Envelope => {
            let (region, bc) = eta0(&cfg.geometry_params(l))?;
            Ok(Setup {
                region,
                bc,
                filters: Vec::new(),
            })
        }
        Preset::Layered => {
            let region = Arc::new(hypercube(l, cfg.dim)?);
            let bc = BoundaryCondition::uniform(&region, 1)?;
            let axis = cfg.dim - 1;
            let window = (l as f64).powi(2) * cfg.log_base.log(l as f64).max(0.0).powf(cfg.c0);
            let mut filters = Vec::new();
            for layer in 2..=l {
                let mask: Vec<bool> = region.sites().map(|s| s[axis] == layer as i32).collect();
                let until = (layer - 1) as f64 * window;
                if until > 0.0 {
                    filters.push(UpdateFilter::FreezeRegion { mask, until });
                }
            }
            Ok(Setup {
                region,
                bc,
                filters,
            })
        }
    }
}

fn run_one(cfg: &CampaignConfig, setup: &Setup, l: u32, replica: u32) -> Result<HittingRecord> {
    let n = setup.region.len();
    let t_cap = cfg.tcap_for(l);
    let mut state = DynamicsState::new(setup.region.clone(), &setup.bc, SpinField::all_minus(n))?;
    for f in &setup.filters {
        state.add_filter(f.clone())?;
    }
    let started = Instant::now();
    let (seed, hit) = match cfg.engine {
        EngineKind::Graphical => {
            let seed = StreamLabel {
                campaign: &cfg.campaign_id,
                l,
                replica,
                purpose: Purpose::Dynamics,
            }
            .seed(cfg.seed);
            let mut stream = EventStream::new(seed, n as u32)?;
            let hit = run_to_absorption(
                &mut state,
                &mut stream,
                t_cap,
                &mut crate::dynamics::NoObserver,
            )?;
            (seed, hit)
        }
        EngineKind::RejectionFree => {
            let seed = StreamLabel {
                campaign: &cfg.campaign_id,
                l,
                replica,
                purpose: Purpose::Engine,
            }
            .seed(cfg.seed);
            let mut engine = RejectionFreeEngine::new(&state, seed);
            let hit =
                engine.run_to_absorption(&mut state, t_cap, &mut crate::dynamics::NoObserver)?;
            (seed, hit)
        }
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    let (t_plus, events) = match hit {
        Hitting::Absorbed { time, events } => (Some(time), events),
        Hitting::Timeout { events, .. } => (None, events),
    };
    Ok(HittingRecord {
        d: cfg.dim,
        l,
        replica,
        seed,
        t_plus,
        events,
        wall_ms,
    })
}

/// Runs the whole campaign; records are produced in `(L, replica)` order and
/// handed to `sink` as they are finalized, so persistence can append
/// incrementally while staying deterministic.
pub fn run_campaign_with(
    cfg: &CampaignConfig,
    mut sink: impl FnMut(&HittingRecord),
) -> Result<Vec<HittingRecord>> {
    cfg.validate()?;
    if cfg.preset == Preset::Envelope {
        return Err(Error::InvalidInput(
            "the envelope preset runs through envelope_check, not run_campaign".into(),
        ));
    }
    let jobs = effective_jobs(cfg.jobs);
    let mut all = Vec::with_capacity(cfg.ls.len() * cfg.replicas as usize);
    for &l in &cfg.ls {
        let setup = build_setup(cfg, l)?;
        let results: Mutex<Vec<Option<Result<HittingRecord>>>> =
            Mutex::new((0..cfg.replicas).map(|_| None).collect());
        let next = AtomicU32::new(0);
        std::thread::scope(|scope| {
            for _ in 0..jobs.min(cfg.replicas as usize) {
                scope.spawn(|| loop {
                    let replica = next.fetch_add(1, Ordering::Relaxed);
                    if replica >= cfg.replicas {
                        break;
                    }
                    let record = run_one(cfg, &setup, l, replica);
                    let mut slots = results.lock().expect("worker poisoned");
                    slots[replica as usize] = Some(record);
                });
            }
        });
        let results = results.into_inner().expect("worker poisoned");
        for slot in results {
            let record = slot.expect("worker filled every slot")?;
            sink(&record);
            all.push(record);
        }
    }
    Ok(all)
}

/// Convenience wrapper collecting all records.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<Vec<HittingRecord>> {
    run_campaign_with(cfg, |_| {})
}

pub fn effective_jobs(requested: usize) -> usize {
    if requested > 0 {
        requested
    } else {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

/// Mixing-time estimate for one system size.
#[derive(Debug, Clone, Serialize)]
pub struct TmixEstimate {
    pub tmix: f64,
    /// Distribution-free 95% confidence interval from order statistics.
    pub ci: (f64, f64),
    pub samples: usize,
    pub timeouts: usize,
}

/// 75th percentile of the hitting-time sample (linear interpolation between
/// order statistics). Needs at least 20 completed samples; refuses when more
/// than a quarter of the runs timed out, since the percentile would then be
/// censored.
pub fn estimate_tmix(records: &[HittingRecord]) -> Result<TmixEstimate> {
    let mut times: Vec<f64> = records.iter().filter_map(|r| r.t_plus).collect();
    let timeouts = records.len() - times.len();
    if times.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "need >= 20 completed samples, have {}",
            times.len()
        )));
    }
    if 4 * timeouts > records.len() {
        return Err(Error::InsufficientData(format!(
            "{timeouts} of {} runs timed out; the 75th percentile is censored",
            records.len()
        )));
    }
    times.sort_by(|a, b| a.total_cmp(b));
    let tmix = stats::percentile(&times, 0.75);
    let ci = stats::quantile_ci(&times, 0.75, 0.95);
    Ok(TmixEstimate {
        tmix,
        ci,
        samples: times.len(),
        timeouts,
    })
}

/// Scaling model fitted to `(L, T)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitModel {
    /// `T = a L^b`
    PurePower,
    /// `T = a L^b (log L)^c`; `fixed = Some(c)` pins the polylog power,
    /// `None` fits it.
    PowerPolylog { fixed: Option<f64> },
}

/// Least-squares fit of a scaling law on log-log data.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub amplitude: f64,
    /// 95% confidence interval of the exponent (Student-t on the slope).
    pub exponent_ci: (f64, f64),
    pub polylog_power: Option<f64>,
    pub residuals: Vec<f64>,
    pub r2: f64,
    pub points: usize,
}

pub fn fit_scaling(points: &[(f64, f64)], model: FitModel) -> Result<ScalingFit> {
    let need = match model {
        FitModel::PowerPolylog { fixed: None } => 4,
        _ => 3,
    };
    if points.len() < need {
        return Err(Error::InsufficientData(format!(
            "scaling fit needs >= {need} sizes, have {}",
            points.len()
        )));
    }
    if points.iter().any(|&(l, t)| !(l > 0.0) || !(t > 0.0)) {
        return Err(Error::InvalidInput(
            "scaling fit needs positive sizes and times".into(),
        ));
    }
    let ln_l: Vec<f64> = points.iter().map(|&(l, _)| l.ln()).collect();
    let ln_t: Vec<f64> = points.iter().map(|&(_, t)| t.ln()).collect();
    match model {
        FitModel::PurePower => {
            let fit = stats::linear_fit(&ln_l, &ln_t)?;
            let margin = stats::t_crit_95(points.len().saturating_sub(2)) * fit.se_slope;
            let residuals = ln_l
                .iter()
                .zip(&ln_t)
                .map(|(x, y)| y - (fit.intercept + fit.slope * x))
                .collect();
            Ok(ScalingFit {
                exponent: fit.slope,
                amplitude: fit.intercept.exp(),
                exponent_ci: (fit.slope - margin, fit.slope + margin),
                polylog_power: None,
                residuals,
                r2: fit.r2,
                points: points.len(),
            })
        }
        FitModel::PowerPolylog { fixed } => {
            if points.iter().any(|&(l, _)| l <= 1.0) {
                return Err(Error::InvalidInput(
                    "polylog fits need L >= 2 (log log L must exist)".into(),
                ));
            }
            let ln_ln_l: Vec<f64> = ln_l.iter().map(|x| x.ln()).collect();
            match fixed {
                Some(c) => {
                    let adj: Vec<f64> = ln_t.iter().zip(&ln_ln_l).map(|(y, z)| y - c * z).collect();
                    let fit = stats::linear_fit(&ln_l, &adj)?;
                    let margin = stats::t_crit_95(points.len().saturating_sub(2)) * fit.se_slope;
                    let residuals = ln_l
                        .iter()
                        .zip(&adj)
                        .map(|(x, y)| y - (fit.intercept + fit.slope * x))
                        .collect();
                    Ok(ScalingFit {
                        exponent: fit.slope,
                        amplitude: fit.intercept.exp(),
                        exponent_ci: (fit.slope - margin, fit.slope + margin),
                        polylog_power: Some(c),
                        residuals,
                        r2: fit.r2,
                        points: points.len(),
                    })
                }
                None => {
                    let (beta, se) = stats::two_var_fit(&ln_l, &ln_ln_l, &ln_t)?;
                    let margin = stats::t_crit_95(points.len().saturating_sub(3)) * se[1];
                    let residuals = (0..points.len())
                        .map(|i| ln_t[i] - (beta[0] + beta[1] * ln_l[i] + beta[2] * ln_ln_l[i]))
                        .collect();
                    let ss_tot: f64 = {
                        let m = stats::mean(&ln_t);
                        ln_t.iter().map(|y| (y - m) * (y - m)).sum()
                    };
                    let sse: f64 = (0..points.len())
                        .map(|i| {
                            let r: f64 =
                                ln_t[i] - (beta[0] + beta[1] * ln_l[i] + beta[2] * ln_ln_l[i]);
                            r * r
                        })
                        .sum();
                    Ok(ScalingFit {
                        exponent: beta[1],
                        amplitude: beta[0].exp(),
                        exponent_ci: (beta[1] - margin, beta[1] + margin),
                        polylog_power: Some(beta[2]),
                        residuals,
                        r2: if ss_tot > 0.0 {
                            1.0 - sse / ss_tot
                        } else {
                            1.0
                        },
                        points: points.len(),
                    })
                }
            }
        }
    }
}

/// Lower-bound sanity report: the 5th percentile of the hitting time must
/// grow at least linearly in `L`.
#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub exponent: f64,
    pub exponent_ci: (f64, f64),
    pub per_l: Vec<(u32, f64)>,
    pub passes: bool,
}

pub fn linear_lower_sanity(records: &[HittingRecord]) -> Result<LowerBoundReport> {
    let mut by_l: Vec<(u32, Vec<f64>)> = Vec::new();
    for r in records {
        if let Some(t) = r.t_plus {
            match by_l.iter_mut().find(|(l, _)| *l == r.l) {
                Some((_, v)) => v.push(t),
                None => by_l.push((r.l, vec![t])),
            }
        }
    }
    by_l.sort_by_key(|(l, _)| *l);
    if by_l.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "lower-bound sanity needs >= 3 sizes, have {}",
            by_l.len()
        )));
    }
    let mut per_l = Vec::new();
    for (l, times) in &mut by_l {
        if times.len() < 20 {
            return Err(Error::InsufficientData(format!(
                "lower-bound sanity needs >= 20 samples at L = {l}, have {}",
                times.len()
            )));
        }
        times.sort_by(|a, b| a.total_cmp(b));
        per_l.push((*l, stats::percentile(times, 0.05)));
    }
    let points: Vec<(f64, f64)> = per_l.iter().map(|&(l, p)| (l as f64, p)).collect();
    let fit = fit_scaling(&points, FitModel::PurePower)?;
    Ok(LowerBoundReport {
        exponent: fit.exponent,
        exponent_ci: fit.exponent_ci,
        per_l,
        passes: fit.exponent >= 1.0,
    })
}

/// One containment observation of the envelope measurement.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub l: u32,
    pub replica: u32,
    pub i: u32,
    pub t_check: f64,
    pub violated: bool,
}

/// Containment fractions of the envelope measurement.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub rows: Vec<EnvelopeRow>,
    /// `(L, i, fraction of replicas with a minus outside the nested set)`.
    pub fractions: Vec<(u32, u32, f64)>,
}

/// Tracks, per nesting level, how many minus spins sit at sites whose
/// deepest containing set is that level.
struct LevelCounter {
    level_of: Arc<Vec<u32>>,
    counts: Vec<i64>,
}

impl LevelCounter {
    fn new(level_of: Arc<Vec<u32>>, levels: usize, field: &SpinField) -> LevelCounter {
        let mut counts = vec![0i64; levels];
        for (site, &spin) in field.spins().iter().enumerate() {
            if spin == -1 {
                counts[level_of[site] as usize] += 1;
            }
        }
        LevelCounter { level_of, counts }
    }

    /// Number of minus spins strictly outside the level-`i` set.
    fn minus_outside(&self, i: u32) -> i64 {
        self.counts.iter().take(i as usize).sum()
    }
}

impl Observer for LevelCounter {
    fn on_flip(&mut self, flip: &Flip) {
        let lvl = self.level_of[flip.site as usize] as usize;
        if flip.new == -1 {
            self.counts[lvl] += 1;
        } else {
            self.counts[lvl] -= 1;
        }
    }
}

/// Runs the cylinder dynamics from all minus and records, at each checkpoint
/// `t_i = i L (log L)^{c0}`, whether any minus spin lies outside the nested
/// set with parameter `i`. Violations are data, not failures.
pub fn envelope_check(cfg: &CampaignConfig) -> Result<EnvelopeReport> {
    cfg.validate()?;
    if cfg.preset != Preset::Envelope {
        return Err(Error::InvalidInput(
            "envelope_check needs the envelope preset".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut fractions = Vec::new();
    for &l in &cfg.ls {
        let gp = cfg.geometry_params(l);
        let setup = build_setup(cfg, l)?;
        let n = setup.region.len();
        let i_max = gp.max_shrink_index();

        // deepest nesting level containing each site
        let mut level_of = vec![0u32; n];
        for i in 1..=i_max {
            let set = shrunk_set(&gp, i)?;
            for idx in 0..n {
                // nesting makes membership monotone in i
                if level_of[idx] == i - 1 && set.contains(setup.region.site(idx as u32)) {
                    level_of[idx] = i;
                }
            }
        }
        let level_of = Arc::new(level_of);

        let step = l as f64 * cfg.log_base.log(l as f64).powf(cfg.c0);
        let mut viol_counts = vec![0u32; (i_max + 1) as usize];
        for replica in 0..cfg.replicas {
            let mut state =
                DynamicsState::new(setup.region.clone(), &setup.bc, SpinField::all_minus(n))?;
            let mut counter =
                LevelCounter::new(level_of.clone(), (i_max + 2) as usize, &state.field);
            match cfg.engine {
                EngineKind::Graphical => {
                    let seed = StreamLabel {
                        campaign: &cfg.campaign_id,
                        l,
                        replica,
                        purpose: Purpose::Dynamics,
                    }
                    .seed(cfg.seed);
                    let mut stream = EventStream::new(seed, n as u32)?;
                    for i in 0..=i_max {
                        run_until(&mut state, &mut stream, i as f64 * step, &mut counter)?;
                        let violated = counter.minus_outside(i) > 0;
                        rows.push(EnvelopeRow {
                            l,
                            replica,
                            i,
                            t_check: i as f64 * step,
                            violated,
                        });
                        if violated {
                            viol_counts[i as usize] += 1;
                        }
                    }
                }
                EngineKind::RejectionFree => {
                    let seed = StreamLabel {
                        campaign: &cfg.campaign_id,
                        l,
                        replica,
                        purpose: Purpose::Engine,
                    }
                    .seed(cfg.seed);
                    let mut engine = RejectionFreeEngine::new(&state, seed);
                    for i in 0..=i_max {
                        engine.run_until(&mut state, i as f64 * step, &mut counter)?;
                        let violated = counter.minus_outside(i) > 0;
                        rows.push(EnvelopeRow {
                            l,
                            replica,
                            i,
                            t_check: i as f64 * step,
                            violated,
                        });
                        if violated {
                            viol_counts[i as usize] += 1;
                        }
                    }
                }
            }
        }
        for i in 0..=i_max {
            fractions.push((l, i, viol_counts[i as usize] as f64 / cfg.replicas as f64));
        }
    }
    Ok(EnvelopeReport { rows, fractions })
}
