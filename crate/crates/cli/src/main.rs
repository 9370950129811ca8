//! Command-line front end: single-run simulation, hitting-time campaigns,
//! coupling and slice verification, geometry reports and scaling fits.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 verification violation
//! (order break, slice mismatch, failed boundary partition), 3 insufficient
//! data for an estimate.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lifshitz_core::coupling::{
    random_censoring_campaign, random_order_campaign, slice_decoupling_check, RandomCampaign,
    SliceVerdict, Verdict,
};
use lifshitz_core::dynamics::{
    run_to_absorption, DynamicsState, EngineKind, Hitting, NoObserver, RejectionFreeEngine,
    SpinField, UpdateFilter,
};
use lifshitz_core::error::Error;
use lifshitz_core::experiments::{
    self, envelope_check, estimate_tmix, fit_scaling, linear_lower_sanity, run_campaign_with,
    CampaignConfig, FitModel, HittingRecord, Preset,
};
use lifshitz_core::geometry::{
    cylinder, discrete_ball3, eta0, eta_slab, first_layer, hypercube, shell3, shrunk_set,
    BoundaryCondition, GeometryParams, LogBase, Region,
};
use lifshitz_core::randomness::EventStream;

#[derive(Parser)]
#[command(
    name = "lifshitz",
    version,
    long_version = concat!(
        env!("CARGO_PKG_VERSION"),
        "\ndefault constants: c0=10, c1=6.6, c2=1.5, log=natural"
    ),
    about = "Event-driven zero-temperature majority dynamics on lattice regions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one dynamics to absorption and print a JSON record.
    Simulate(SimulateArgs),
    /// Run a hitting-time campaign from a key=value config file.
    Campaign(CampaignArgs),
    /// Randomized monotone-coupling and censoring verification runs.
    CoupleCheck(CoupleArgs),
    /// Replay a slab dynamics against its per-slice shell dynamics.
    SliceCheck(SliceArgs),
    /// Region cardinalities, boundary sizes and boundary-partition checks.
    Geometry(GeometryArgs),
    /// Mixing-time estimates and scaling fits over campaign records.
    Fit(FitArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeometryKind {
    Hypercube,
    Cylinder,
    Shell,
    Slab,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundaryKind {
    /// Uniform plus.
    Plus,
    /// Uniform minus.
    Minus,
    /// Cylinder condition: minus on top, plus elsewhere.
    Eta0,
    /// Slab condition (built into the slab geometry).
    Slab,
    /// Shell condition: plus outside, minus inside.
    Shell,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Graphical,
    RejectionFree,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> EngineKind {
        match e {
            EngineArg::Graphical => EngineKind::Graphical,
            EngineArg::RejectionFree => EngineKind::RejectionFree,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogBaseArg {
    Natural,
    Base2,
    Base10,
}

impl From<LogBaseArg> for LogBase {
    fn from(b: LogBaseArg) -> LogBase {
        match b {
            LogBaseArg::Natural => LogBase::Natural,
            LogBaseArg::Base2 => LogBase::Base2,
            LogBaseArg::Base10 => LogBase::Base10,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Minus,
    Plus,
}

#[derive(Args)]
struct SimulateArgs {
    /// Ambient dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// System size L (not used by the shell geometry).
    #[arg(long)]
    l: Option<u32>,
    #[arg(long, value_enum, default_value_t = GeometryKind::Hypercube)]
    geometry: GeometryKind,
    /// Boundary preset; defaults to the geometry's natural one.
    #[arg(long, value_enum)]
    boundary: Option<BoundaryKind>,
    #[arg(long, value_enum, default_value_t = EngineArg::Graphical)]
    engine: EngineArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Simulation-time cap; defaults to 20 L^2 (ln L)^2 on hypercubes and
    /// L^3 on the other geometries.
    #[arg(long)]
    tcap: Option<f64>,
    #[arg(long, value_enum, default_value_t = InitArg::Minus)]
    init: InitArg,
    /// Shell outer radius (geometry = shell).
    #[arg(long)]
    r: Option<f64>,
    /// Shell width (geometry = shell).
    #[arg(long)]
    width: Option<f64>,
    /// Shrink parameter i (geometry = slab).
    #[arg(long)]
    i: Option<u32>,
    #[arg(long, default_value_t = 1.5)]
    c2: f64,
    #[arg(long, value_enum, default_value_t = LogBaseArg::Natural)]
    logbase: LogBaseArg,
    /// Freeze filter `LAYERS:UNTIL`, e.g. `2..4:50` or `3:12.5`; layers
    /// count along the last axis. Repeatable.
    #[arg(long)]
    freeze: Vec<String>,
    /// Censor minus-creating moves outside the nested set with this
    /// parameter (cylinder geometry only).
    #[arg(long)]
    protect_shrunk: Option<u32>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Key=value configuration file (keys: campaign, dim, Ls, preset,
    /// replicas, seed, engine, tcap, c0, c1, c2, logbase, jobs).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for records.csv (envelope.csv for the envelope
    /// preset).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads; overrides the config file.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CoupleArgs {
    /// Dimensions to cycle through.
    #[arg(long, default_value = "2,3,4")]
    dims: String,
    #[arg(long, default_value_t = 2)]
    l_min: u32,
    #[arg(long, default_value_t = 8)]
    l_max: u32,
    /// Randomized ordered coupled runs.
    #[arg(long, default_value_t = 1000)]
    runs: u32,
    /// Randomized censoring-domination runs.
    #[arg(long, default_value_t = 200)]
    censoring_runs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trial length in units of L^2.
    #[arg(long, default_value_t = 1.0)]
    t_scale: f64,
    /// Engine request; coupled replay requires the graphical engine.
    #[arg(long, value_enum, default_value_t = EngineArg::Graphical)]
    engine: EngineArg,
    /// Deliberately corrupt the coupled pair at this event ordinal to
    /// exercise the violation path.
    #[arg(long, hide = true)]
    inject_violation: Option<u64>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long)]
    l: u32,
    /// Slab shrink parameter; omit with --first-layer.
    #[arg(long)]
    i: Option<u32>,
    /// Check the bottom layer of the cylinder against the full-ball
    /// dynamics instead of a slab.
    #[arg(long)]
    first_layer: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    events: u64,
    #[arg(long, default_value_t = 1.5)]
    c2: f64,
    #[arg(long, value_enum, default_value_t = LogBaseArg::Natural)]
    logbase: LogBaseArg,
}

#[derive(Args)]
struct GeometryArgs {
    /// Ambient dimension.
    #[arg(long = "d")]
    d: usize,
    /// System size.
    #[arg(long = "L")]
    l: u32,
    /// Verify the four-part boundary decomposition of every valid slab.
    #[arg(long)]
    check_bdecop: bool,
    /// Also report a discrete ball of this radius.
    #[arg(long)]
    ball: Option<f64>,
    #[arg(long, default_value_t = 1.5)]
    c2: f64,
    #[arg(long, value_enum, default_value_t = LogBaseArg::Natural)]
    logbase: LogBaseArg,
}

#[derive(Args)]
struct FitArgs {
    /// Campaign records CSV.
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the summary JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scaling model: `pure`, `polylog` (free power) or `polylog:<c>`.
    #[arg(long, default_value = "pure")]
    model: String,
    /// Two-column `L Tmix` file for plotting.
    #[arg(long)]
    emit_plot: Option<PathBuf>,
    /// Also fit the 5th-percentile lower-bound exponent.
    #[arg(long)]
    lower_sanity: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(map_error(&err))
        }
    }
}

fn map_error(err: &Error) -> u8 {
    match err {
        Error::InsufficientData(_) => 3,
        Error::Geometry(_) | Error::Internal(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> lifshitz_core::Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Campaign(args) => campaign(args),
        Command::CoupleCheck(args) => couple_check(args),
        Command::SliceCheck(args) => slice_check(args),
        Command::Geometry(args) => geometry_report(args),
        Command::Fit(args) => fit(args),
    }
}

fn fnv_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn parse_freeze(spec: &str) -> lifshitz_core::Result<(u32, u32, f64)> {
    let bad = || Error::InvalidInput(format!("freeze spec '{spec}', want 'A..B:T' or 'A:T'"));
    let (layers, until) = spec.split_once(':').ok_or_else(bad)?;
    let until: f64 = until.trim().parse().map_err(|_| bad())?;
    let (a, b) = match layers.split_once("..") {
        Some((a, b)) => (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ),
        None => {
            let v: u32 = layers.trim().parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if a > b {
        return Err(bad());
    }
    Ok((a, b, until))
}

fn simulate(args: SimulateArgs) -> lifshitz_core::Result<ExitCode> {
    let l = match (args.l, args.geometry) {
        (Some(l), _) => l,
        (None, GeometryKind::Shell) => 1,
        (None, _) => return Err(Error::InvalidInput("this geometry needs --l".into())),
    };
    let gp = GeometryParams {
        l,
        d: args.dim,
        c2: args.c2,
        log_base: args.logbase.into(),
    };
    let boundary = args.boundary.unwrap_or(match args.geometry {
        GeometryKind::Hypercube => BoundaryKind::Plus,
        GeometryKind::Cylinder => BoundaryKind::Eta0,
        GeometryKind::Shell => BoundaryKind::Shell,
        GeometryKind::Slab => BoundaryKind::Slab,
    });
    let (region, bc, geometry_name): (Arc<Region>, BoundaryCondition, &str) = match args.geometry {
        GeometryKind::Hypercube => {
            let region = Arc::new(hypercube(l, args.dim)?);
            let bc = match boundary {
                BoundaryKind::Plus => BoundaryCondition::uniform(&region, 1)?,
                BoundaryKind::Minus => BoundaryCondition::uniform(&region, -1)?,
                _ => {
                    return Err(Error::InvalidInput(
                        "hypercube takes the plus or minus boundary".into(),
                    ))
                }
            };
            (region, bc, "hypercube")
        }
        GeometryKind::Cylinder => match boundary {
            BoundaryKind::Eta0 => {
                let (region, bc) = eta0(&gp)?;
                (region, bc, "cylinder")
            }
            BoundaryKind::Plus => {
                let region = Arc::new(cylinder(&gp)?);
                let bc = BoundaryCondition::uniform(&region, 1)?;
                (region, bc, "cylinder")
            }
            _ => {
                return Err(Error::InvalidInput(
                    "cylinder takes the eta0 or plus boundary".into(),
                ))
            }
        },
        GeometryKind::Shell => {
            if boundary != BoundaryKind::Shell {
                return Err(Error::InvalidInput("shell has a built-in boundary".into()));
            }
            let r = args
                .r
                .ok_or_else(|| Error::InvalidInput("shell needs --r".into()))?;
            let w = args
                .width
                .ok_or_else(|| Error::InvalidInput("shell needs --width".into()))?;
            let (region, bc) = shell3(r, w)?;
            (Arc::new(region), bc, "shell")
        }
        GeometryKind::Slab => {
            if boundary != BoundaryKind::Slab {
                return Err(Error::InvalidInput("slab has a built-in boundary".into()));
            }
            let i = args
                .i
                .ok_or_else(|| Error::InvalidInput("slab needs --i".into()))?;
            let sys = eta_slab(&gp, i)?;
            (sys.region.clone(), sys.bc.clone(), "slab")
        }
    };

    let n = region.len();
    let init = match args.init {
        InitArg::Minus => SpinField::all_minus(n),
        InitArg::Plus => SpinField::all_plus(n),
    };
    let mut state = DynamicsState::new(region.clone(), &bc, init)?;
    for spec in &args.freeze {
        let (a, b, until) = parse_freeze(spec)?;
        let axis = region.dim() - 1;
        let mask: Vec<bool> = region
            .sites()
            .map(|s| s[axis] >= a as i32 && s[axis] <= b as i32)
            .collect();
        state.add_filter(UpdateFilter::FreezeRegion { mask, until })?;
    }
    if let Some(i) = args.protect_shrunk {
        if args.geometry != GeometryKind::Cylinder {
            return Err(Error::InvalidInput(
                "--protect-shrunk applies to the cylinder geometry".into(),
            ));
        }
        let protected_set = shrunk_set(&gp, i)?;
        let protected: Vec<bool> = region.sites().map(|s| protected_set.contains(s)).collect();
        state.add_filter(UpdateFilter::BlockMinusOutside { protected })?;
    }

    let lf = l as f64;
    let t_cap = args.tcap.unwrap_or(match args.geometry {
        GeometryKind::Hypercube => 20.0 * lf * lf * lf.ln().max(1.0).powi(2),
        _ => (lf * lf * lf).max(100.0),
    });
    let started = std::time::Instant::now();
    let hit = match EngineKind::from(args.engine) {
        EngineKind::Graphical => {
            let mut stream = EventStream::new(args.seed, n as u32)?;
            run_to_absorption(&mut state, &mut stream, t_cap, &mut NoObserver)?
        }
        EngineKind::RejectionFree => {
            let mut engine = RejectionFreeEngine::new(&state, args.seed);
            engine.run_to_absorption(&mut state, t_cap, &mut NoObserver)?
        }
    };
    let wall_ms = started.elapsed().as_millis() as u64;
    let (t_plus, events) = match hit {
        Hitting::Absorbed { time, events } => (Some(time), events),
        Hitting::Timeout { events, .. } => (None, events),
    };
    let boundary_name = match boundary {
        BoundaryKind::Plus => "plus",
        BoundaryKind::Minus => "minus",
        BoundaryKind::Eta0 => "eta0",
        BoundaryKind::Slab => "slab",
        BoundaryKind::Shell => "shell",
    };
    let config = json!({
        "command": "simulate",
        "geometry": geometry_name,
        "boundary": boundary_name,
        "dim": region.dim(),
        "l": l,
        "sites": n,
        "engine": EngineKind::from(args.engine).name(),
        "seed": args.seed,
        "tcap": t_cap,
        "init": if args.init == InitArg::Minus { "minus" } else { "plus" },
        "freeze": args.freeze,
        "protect_shrunk": args.protect_shrunk,
        "c2": args.c2,
    });
    let record = json!({
        "config": config,
        "config_hash": format!("{:016x}", fnv_hash(&config.to_string())),
        "t_plus": t_plus,
        "timeout": t_plus.is_none(),
        "events": events,
        "wall_ms": wall_ms,
        "final_minus": state.field.minus_count(),
    });
    println!("{record}");
    Ok(ExitCode::SUCCESS)
}

fn campaign(args: CampaignArgs) -> lifshitz_core::Result<ExitCode> {
    let text = fs::read_to_string(&args.config)?;
    let mut cfg = CampaignConfig::parse_config(&text)?;
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    fs::create_dir_all(&args.out)?;

    if cfg.preset == Preset::Envelope {
        let report = envelope_check(&cfg)?;
        let path = args.out.join("envelope.csv");
        let mut file = fs::File::create(&path)?;
        writeln!(
            file,
            "# campaign={} seed={} config_hash={:016x}",
            cfg.campaign_id,
            cfg.seed,
            cfg.config_hash()
        )?;
        writeln!(file, "l,replica,i,t_check,violated")?;
        for row in &report.rows {
            writeln!(
                file,
                "{},{},{},{},{}",
                row.l,
                row.replica,
                row.i,
                row.t_check,
                u8::from(row.violated)
            )?;
        }
        let summary = json!({
            "command": "campaign",
            "preset": "envelope",
            "config": cfg.canonical_string(),
            "config_hash": format!("{:016x}", cfg.config_hash()),
            "rows": report.rows.len(),
            "csv": path,
            "fractions": report.fractions.iter().map(|(l, i, f)| json!({
                "l": l, "i": i, "violation_fraction": f
            })).collect::<Vec<_>>(),
        });
        println!("{summary}");
        return Ok(ExitCode::SUCCESS);
    }

    let path = args.out.join("records.csv");
    let mut file = fs::File::create(&path)?;
    writeln!(
        file,
        "# campaign={} seed={} config_hash={:016x}",
        cfg.campaign_id,
        cfg.seed,
        cfg.config_hash()
    )?;
    writeln!(file, "# config: {}", cfg.canonical_string())?;
    writeln!(file, "{}", experiments::CSV_HEADER)?;
    let records = run_campaign_with(&cfg, |record| {
        // crash-safe incremental append in deterministic order
        let _ = writeln!(file, "{}", record.csv_row());
        let _ = file.flush();
    })?;

    let mut per_l = Vec::new();
    for &l in &cfg.ls {
        let group: Vec<HittingRecord> = records.iter().filter(|r| r.l == l).cloned().collect();
        match estimate_tmix(&group) {
            Ok(est) => per_l.push(json!({
                "l": l,
                "tmix": est.tmix,
                "ci": [est.ci.0, est.ci.1],
                "samples": est.samples,
                "timeouts": est.timeouts,
            })),
            Err(e) => per_l.push(json!({ "l": l, "error": e.to_string() })),
        }
    }
    let summary = json!({
        "command": "campaign",
        "config": cfg.canonical_string(),
        "config_hash": format!("{:016x}", cfg.config_hash()),
        "seed": cfg.seed,
        "records": records.len(),
        "timeouts": records.iter().filter(|r| r.timed_out()).count(),
        "csv": path,
        "per_l": per_l,
    });
    println!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn couple_check(args: CoupleArgs) -> lifshitz_core::Result<ExitCode> {
    if EngineKind::from(args.engine) == EngineKind::RejectionFree {
        return Err(Error::InvalidMode(
            "coupled verification replays a shared stream; use the graphical engine".into(),
        ));
    }
    let dims: Vec<usize> = args
        .dims
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidInput(format!("bad --dims '{}'", args.dims)))?;
    let mut campaign = RandomCampaign::new(args.runs, args.seed);
    campaign.dims = dims;
    campaign.l_min = args.l_min;
    campaign.l_max = args.l_max;
    campaign.t_scale = args.t_scale;
    campaign.fault_at = args.inject_violation;

    let order = random_order_campaign(&campaign)?;
    if let Verdict::Violation(v) = &order {
        let witness = json!({ "check": "monotone-coupling", "violation": v });
        println!("{witness}");
        return Ok(ExitCode::from(2));
    }
    campaign.runs = args.censoring_runs;
    campaign.fault_at = None;
    let censoring = random_censoring_campaign(&campaign)?;
    if let Verdict::Violation(v) = &censoring {
        let witness = json!({ "check": "censoring-domination", "violation": v });
        println!("{witness}");
        return Ok(ExitCode::from(2));
    }
    let config = json!({
        "dims": args.dims,
        "l_min": args.l_min,
        "l_max": args.l_max,
        "runs": args.runs,
        "censoring_runs": args.censoring_runs,
        "seed": args.seed,
        "t_scale": args.t_scale,
    });
    let report = json!({
        "command": "couple-check",
        "config": config,
        "config_hash": format!("{:016x}", fnv_hash(&config.to_string())),
        "seed": args.seed,
        "order": match order { Verdict::Clean(t) => serde_json::to_value(t).unwrap(), _ => unreachable!() },
        "censoring": match censoring { Verdict::Clean(t) => serde_json::to_value(t).unwrap(), _ => unreachable!() },
        "violations": 0,
    });
    println!("{report}");
    Ok(ExitCode::SUCCESS)
}

fn slice_check(args: SliceArgs) -> lifshitz_core::Result<ExitCode> {
    let gp = GeometryParams {
        l: args.l,
        d: args.dim,
        c2: args.c2,
        log_base: args.logbase.into(),
    };
    let sys = if args.first_layer {
        first_layer(&gp)?
    } else {
        let i = args
            .i
            .ok_or_else(|| Error::InvalidInput("slice-check needs --i or --first-layer".into()))?;
        eta_slab(&gp, i)?
    };
    let verdict = slice_decoupling_check(&sys, args.seed, args.events)?;
    match verdict {
        SliceVerdict::Clean(report) => {
            let out = json!({
                "command": "slice-check",
                "dim": args.dim,
                "l": args.l,
                "i": args.i,
                "first_layer": args.first_layer,
                "seed": args.seed,
                "slab_sites": sys.region.len(),
                "report": report,
            });
            println!("{out}");
            Ok(ExitCode::SUCCESS)
        }
        SliceVerdict::Mismatch(witness) => {
            let out = json!({ "check": "slice-decoupling", "mismatch": witness });
            println!("{out}");
            Ok(ExitCode::from(2))
        }
    }
}

fn geometry_report(args: GeometryArgs) -> lifshitz_core::Result<ExitCode> {
    let gp = GeometryParams {
        l: args.l,
        d: args.d,
        c2: args.c2,
        log_base: args.logbase.into(),
    };
    let cube = hypercube(args.l, args.d)?;
    let mut out = json!({
        "command": "geometry",
        "d": args.d,
        "l": args.l,
        "c2": args.c2,
        "hypercube": { "sites": cube.len(), "boundary": cube.boundary().len() },
    });
    if let Some(r) = args.ball {
        let ball = discrete_ball3(r)?;
        out["ball"] = json!({
            "radius": r,
            "sites": ball.len(),
            "boundary": ball.boundary().len(),
            "inner_boundary": ball.inner_boundary().len(),
        });
    }
    if args.d >= 4 {
        let (cyl, bc) = eta0(&gp)?;
        let zero = shrunk_set(&gp, 0)?;
        out["cylinder"] = json!({
            "base_radius": gp.base_radius(),
            "sites": cyl.len(),
            "boundary": bc.domain().len(),
            "shrunk_zero_equals_cylinder": zero == *cyl,
        });
    }
    if args.check_bdecop {
        if args.d < 4 {
            return Err(Error::InvalidInput("--check-bdecop needs d >= 4".into()));
        }
        let max_i = 2 * (args.d as u32 - 2) * args.l - 2;
        let mut checks = Vec::new();
        for i in 0..=max_i {
            // a failed partition is a geometry error and aborts with exit 2
            let sys = eta_slab(&gp, i)?;
            checks.push(json!({
                "i": i,
                "slab_sites": sys.region.len(),
                "boundary_sites": sys.bc.domain().len(),
                "partition_ok": true,
            }));
        }
        out["bdecop"] = json!({ "checked": max_i + 1, "results": checks });
    }
    println!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn parse_model(spec: &str) -> lifshitz_core::Result<FitModel> {
    match spec {
        "pure" => Ok(FitModel::PurePower),
        "polylog" => Ok(FitModel::PowerPolylog { fixed: None }),
        other => match other.strip_prefix("polylog:") {
            Some(c) => {
                let c: f64 = c
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad polylog power '{c}'")))?;
                Ok(FitModel::PowerPolylog { fixed: Some(c) })
            }
            None => Err(Error::InvalidInput(format!(
                "unknown model '{other}', want pure | polylog | polylog:<c>"
            ))),
        },
    }
}

fn fit(args: FitArgs) -> lifshitz_core::Result<ExitCode> {
    let text = fs::read_to_string(&args.input)?;
    let meta: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    let records = experiments::read_records_csv(std::io::Cursor::new(text.as_bytes()))?;
    let model = parse_model(&args.model)?;

    let mut ls: Vec<u32> = records.iter().map(|r| r.l).collect();
    ls.sort_unstable();
    ls.dedup();
    let mut per_l = Vec::new();
    let mut points = Vec::new();
    for &l in &ls {
        let group: Vec<HittingRecord> = records.iter().filter(|r| r.l == l).cloned().collect();
        let est = estimate_tmix(&group)?;
        points.push((l as f64, est.tmix));
        per_l.push(json!({
            "l": l,
            "tmix": est.tmix,
            "ci": [est.ci.0, est.ci.1],
            "samples": est.samples,
            "timeouts": est.timeouts,
        }));
    }
    let fit = fit_scaling(&points, model)?;
    if let Some(plot) = &args.emit_plot {
        let mut f = fs::File::create(plot)?;
        writeln!(f, "# L  Tmix")?;
        for (l, t) in &points {
            writeln!(f, "{l}  {t}")?;
        }
    }
    let lower = if args.lower_sanity {
        Some(serde_json::to_value(linear_lower_sanity(&records)?).unwrap())
    } else {
        None
    };
    let summary = json!({
        "command": "fit",
        "source": args.input,
        "source_meta": meta,
        "model": args.model,
        "per_l": per_l,
        "fit": fit,
        "lower_bound": lower,
    });
    match &args.out {
        Some(path) => fs::write(path, format!("{summary}\n"))?,
        None => println!("{summary}"),
    }
    Ok(ExitCode::SUCCESS)
}
