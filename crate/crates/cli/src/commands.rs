//! Subcommand implementations.

use crate::config::{self, Resolved};
use crate::manifest::{sibling, Recorder};
use crate::{ManifestArg, SearchMode};
use anyhow::{anyhow, Context};
use kvtier::cost_model::{total_cost, PricingModel};
use kvtier::engine_sim::{replay_objectives, simulate as run_sim, GroupTtl, StorageConfig, TtlPolicy};
use kvtier::pareto_search::{
    adaptive_search, auto_reference, extreme_points, grid_search, hypervolume as hv, pareto_filter,
    write_frontier_csv, Config, ExtremePoints, Outcome, ParetoPoint, SearchResult,
};
use kvtier::prefix_index::{group_interarrivals, top_k_subtrees, write_group_csv, write_group_histogram_csv};
use kvtier::trace::{
    generate_trace, interarrival_stats, oracle_footprint, parse_trace, reuse_skew, workload_density,
    write_footprint_csv, write_lorenz_csv, SyntheticTraceSpec, Trace,
};
use kvtier::ttl_alloc::{allocate_ttls, curves_from_grouping, AllocOptions};
use log::{info, warn};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub enum Failure {
    /// Bad arguments, unreadable inputs or invalid configuration.
    Usage(anyhow::Error),
    /// The inputs were valid but the run failed.
    Runtime(anyhow::Error),
}

type CmdResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn load_trace(path: &Path, rec: &mut Recorder) -> CmdResult<Trace> {
    let parsed = parse_trace(path)
        .with_context(|| format!("trace {}", path.display()))
        .usage()?;
    if parsed.reordered > 0 {
        warn!("{}: {} records were out of arrival order and were sorted", path.display(), parsed.reordered);
    }
    rec.inputs.push(path.to_path_buf());
    Ok(parsed.trace)
}

fn load_config(path: &Path, rec: &mut Recorder) -> CmdResult<Resolved> {
    let cfg = config::load(path).usage()?;
    rec.inputs.extend(cfg.inputs.iter().cloned());
    rec.config = serde_json::to_value(cfg.echo()).runtime()?;
    Ok(cfg)
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .usage()?;
    }
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .usage()
}

fn write_json<T: Serialize>(path: &Path, value: &T, rec: &mut Recorder) -> CmdResult<()> {
    let text = serde_json::to_string_pretty(value).runtime()?;
    let mut w = create(path)?;
    std::io::Write::write_all(&mut w, (text + "\n").as_bytes()).runtime()?;
    std::io::Write::flush(&mut w).runtime()?;
    rec.outputs.push(path.to_path_buf());
    Ok(())
}

fn write_csv<F>(path: &Path, rec: &mut Recorder, f: F) -> CmdResult<()>
where
    F: FnOnce(BufWriter<File>) -> csv::Result<()>,
{
    f(create(path)?)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()?;
    rec.outputs.push(path.to_path_buf());
    Ok(())
}

fn finish(rec: Recorder, manifest: ManifestArg, out: &Path) -> CmdResult<()> {
    let path = manifest.manifest.unwrap_or_else(|| sibling(out, "manifest.json"));
    rec.finish(&path).runtime()
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    objectives: kvtier::engine_sim::ObjectiveVector,
    cost: kvtier::cost_model::CostBreakdown,
    report: &'a kvtier::engine_sim::SimReport,
}

pub fn simulate(trace: &Path, config: &Path, out: &Path, manifest: ManifestArg) -> CmdResult<()> {
    let mut rec = Recorder::new("simulate");
    let cfg = load_config(config, &mut rec)?;
    let trace = load_trace(trace, &mut rec)?;
    let storage = cfg.storage().usage()?;
    let report = run_sim(&trace, storage, &cfg.compute).runtime()?;
    if report.kernel_clamped_queries > 0 {
        warn!("{} kernel queries fell outside the profile and were clamped", report.kernel_clamped_queries);
    }
    let output = SimulateOutput {
        objectives: replay_objectives(&report, &cfg.pricing),
        cost: total_cost(&report, &cfg.pricing),
        report: &report,
    };
    write_json(out, &output, &mut rec)?;
    finish(rec, manifest, out)
}

#[derive(clap::Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub mode: SearchMode,
    /// Concurrent simulations.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Recorded in the manifest; the search itself is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frontier CSV. The evaluation log and the extreme points are written
    /// next to it as `<stem>.evaluations.json` and `<stem>.extremes.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_mean_ttft_ms: Option<f64>,
    #[arg(long)]
    pub max_p90_ttft_ms: Option<f64>,
    #[arg(long)]
    pub max_p99_ttft_ms: Option<f64>,
    #[arg(long)]
    pub min_throughput_tps: Option<f64>,
    #[arg(long)]
    pub max_cost: Option<f64>,
    /// Pure-DRAM baseline capacity to compare the extreme points against;
    /// overrides `search.baseline_dram_gb`.
    #[arg(long)]
    pub baseline_dram_gb: Option<u64>,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Constraints {
    pub max_mean_ttft_ms: Option<f64>,
    pub max_p90_ttft_ms: Option<f64>,
    pub max_p99_ttft_ms: Option<f64>,
    pub min_throughput_tps: Option<f64>,
    pub max_cost: Option<f64>,
}

impl Constraints {
    pub fn admits(&self, o: &Outcome) -> bool {
        let le = |v: f64, cap: Option<f64>| cap.is_none_or(|c| v <= c);
        le(o.objectives[0], self.max_mean_ttft_ms)
            && le(o.p90_ttft_ms, self.max_p90_ttft_ms)
            && le(o.p99_ttft_ms, self.max_p99_ttft_ms)
            && self.min_throughput_tps.is_none_or(|m| -o.objectives[1] >= m)
            && le(o.objectives[2], self.max_cost)
    }
}

#[derive(Serialize)]
struct EvaluationLog<'a> {
    mode: &'static str,
    rounds: usize,
    truncated: bool,
    evaluation_count: usize,
    evaluations: &'a [ParetoPoint],
}

/// Relative improvement of an extreme point over the baseline, in percent.
#[derive(Serialize)]
struct VersusBaseline {
    ttft_reduction_pct: f64,
    throughput_gain_pct: f64,
    cost_reduction_pct: f64,
}

#[derive(Serialize)]
struct Baseline {
    dram_gb: u64,
    outcome: Outcome,
    min_ttft: VersusBaseline,
    max_throughput: VersusBaseline,
    min_cost: VersusBaseline,
}

#[derive(Serialize)]
struct ExtremesOutput {
    constraints: Constraints,
    frontier_size: usize,
    notice: Option<String>,
    extremes: Option<ExtremePoints>,
    baseline: Option<Baseline>,
}

fn versus(p: &Outcome, base: &Outcome) -> VersusBaseline {
    let pct = |gain: f64, denom: f64| if denom == 0.0 { 0.0 } else { 100.0 * gain / denom.abs() };
    let (o, b) = (&p.objectives, &base.objectives);
    VersusBaseline {
        ttft_reduction_pct: pct(b[0] - o[0], b[0]),
        throughput_gain_pct: pct(b[1] - o[1], b[1]),
        cost_reduction_pct: pct(b[2] - o[2], b[2]),
    }
}

pub fn search(args: &SearchArgs) -> CmdResult<()> {
    let mut rec = Recorder::new("search");
    rec.seed = Some(args.seed);
    let cfg = load_config(&args.config, &mut rec)?;
    let trace = load_trace(&args.trace, &mut rec)?;
    let section = cfg.search().usage()?;
    let media = config::media(&cfg).usage()?;
    let grid = match args.mode {
        SearchMode::Grid => section.fine_grid(),
        SearchMode::Adaptive => &section.seed_grid,
    };
    config::check_media(grid, &media, "search.grid").usage()?;
    if args.jobs == 0 {
        return Err(Failure::Usage(anyhow!("--jobs must be at least 1")));
    }

    let evaluate = |storage: &StorageConfig, pricing: &PricingModel| -> Result<Outcome, String> {
        let r = run_sim(&trace, storage, &cfg.compute).map_err(|e| e.to_string())?;
        Ok(Outcome {
            objectives: replay_objectives(&r, pricing).as_array(),
            p90_ttft_ms: r.p90_ttft_ms,
            p99_ttft_ms: r.p99_ttft_ms,
        })
    };
    let simulate_fn = |c: &Config| -> Result<Outcome, String> {
        let (storage, pricing) = config::candidate(&cfg, section, &media, c)?;
        let o = evaluate(&storage, &pricing)?;
        info!("{c}: {:?}", o.objectives);
        Ok(o)
    };
    let result: SearchResult = match args.mode {
        SearchMode::Grid => grid_search(grid, simulate_fn, args.jobs),
        SearchMode::Adaptive => adaptive_search(&section.search_config(), simulate_fn, args.jobs),
    }
    .runtime()?;
    if result.truncated {
        warn!("search stopped at the evaluation budget of {}", section.budget);
    }

    let constraints = Constraints {
        max_mean_ttft_ms: args.max_mean_ttft_ms,
        max_p90_ttft_ms: args.max_p90_ttft_ms,
        max_p99_ttft_ms: args.max_p99_ttft_ms,
        min_throughput_tps: args.min_throughput_tps,
        max_cost: args.max_cost,
    };
    let frontier: Vec<ParetoPoint> = pareto_filter(&result.evaluations)
        .into_iter()
        .filter(|p| constraints.admits(&p.outcome))
        .collect();
    let notice = frontier.is_empty().then(|| {
        let n = "no evaluated configuration satisfies the constraints; the frontier is empty".to_string();
        eprintln!("notice: {n}");
        n
    });
    let extremes = extreme_points(&frontier);

    let baseline = match (args.baseline_dram_gb.or(section.baseline_dram_gb), &extremes) {
        (Some(gb), Some(ex)) => {
            let c = Config {
                medium: grid.media[0].clone(),
                dram_gb: gb,
                ttl_s: 0,
            };
            let (mut storage, pricing) = config::candidate(&cfg, section, &media, &c).map_err(|m| Failure::Usage(anyhow!(m)))?;
            storage.disk.capacity_gb = 0.0;
            let outcome = evaluate(&storage, &pricing)
                .map_err(|m| anyhow!("baseline with {gb} GB DRAM: {m}"))
                .runtime()?;
            Some(Baseline {
                dram_gb: gb,
                min_ttft: versus(&ex.min_ttft.outcome, &outcome),
                max_throughput: versus(&ex.max_throughput.outcome, &outcome),
                min_cost: versus(&ex.min_cost.outcome, &outcome),
                outcome,
            })
        }
        _ => None,
    };

    write_csv(&args.out, &mut rec, |w| write_frontier_csv(&frontier, w))?;
    let log = EvaluationLog {
        mode: match args.mode {
            SearchMode::Grid => "grid",
            SearchMode::Adaptive => "adaptive",
        },
        rounds: result.rounds,
        truncated: result.truncated,
        evaluation_count: result.evaluation_count(),
        evaluations: &result.evaluations,
    };
    write_json(&sibling(&args.out, "evaluations.json"), &log, &mut rec)?;
    let extremes_out = ExtremesOutput {
        constraints,
        frontier_size: frontier.len(),
        notice,
        extremes,
        baseline,
    };
    write_json(&sibling(&args.out, "extremes.json"), &extremes_out, &mut rec)?;
    rec.notes.insert("evaluations".into(), result.evaluation_count().into());
    rec.notes.insert("frontier_size".into(), frontier.len().into());
    finish(rec, ManifestArg { manifest: args.manifest.manifest.clone() }, &args.out)
}

pub fn gen_trace(spec: &Path, seed: Option<u64>, out: &Path, manifest: ManifestArg) -> CmdResult<()> {
    let mut rec = Recorder::new("gen-trace");
    let text = std::fs::read_to_string(spec)
        .with_context(|| format!("cannot read spec {}", spec.display()))
        .usage()?;
    let mut s: SyntheticTraceSpec = serde_json::from_str(&text)
        .with_context(|| format!("invalid spec {}", spec.display()))
        .usage()?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s.validate().usage()?;
    rec.inputs.push(spec.to_path_buf());
    rec.seed = Some(s.seed);
    rec.config = serde_json::to_value(&s).runtime()?;
    let trace = generate_trace(&s).runtime()?;
    let mut w = create(out)?;
    trace
        .write_jsonl(&mut w)
        .and_then(|_| std::io::Write::flush(&mut w))
        .with_context(|| format!("cannot write {}", out.display()))
        .runtime()?;
    rec.outputs.push(out.to_path_buf());
    finish(rec, manifest, out)
}

#[derive(Serialize)]
struct AnalysisSummary {
    requests: usize,
    duration_ms: u64,
    mean_rate_per_s: f64,
    baseline_rps: Option<f64>,
    density: Option<f64>,
    block_fraction_for_90pct_hits: f64,
    no_reuse: bool,
    interval_p50_ms: Option<u64>,
    interval_p90_ms: Option<u64>,
    interval_p99_ms: Option<u64>,
    interval_mean_ms: Option<f64>,
}

pub fn analyze(
    trace_path: &Path,
    out_dir: &Path,
    baseline_rps: Option<f64>,
    k: usize,
    window_seconds: u64,
    manifest: ManifestArg,
) -> CmdResult<()> {
    let mut rec = Recorder::new("analyze");
    if window_seconds == 0 {
        return Err(Failure::Usage(anyhow!("--window-seconds must be positive")));
    }
    let trace = load_trace(trace_path, &mut rec)?;
    rec.config = serde_json::json!({ "baseline_rps": baseline_rps, "k": k, "window_seconds": window_seconds });
    let density = baseline_rps.map(|b| workload_density(&trace, b)).transpose().usage()?;
    let lorenz = reuse_skew(&trace).runtime()?;
    let intervals = interarrival_stats(&trace).runtime()?;
    let footprint = oracle_footprint(&trace).runtime()?;
    let mut grouping = top_k_subtrees(&trace, k).usage()?;
    group_interarrivals(&trace, &mut grouping);

    let out = |name: &str| out_dir.join(name);
    write_csv(&out("lorenz.csv"), &mut rec, |w| write_lorenz_csv(&lorenz, w))?;
    write_csv(&out("footprint.csv"), &mut rec, |w| write_footprint_csv(&footprint, w))?;
    write_csv(&out("intervals.csv"), &mut rec, |w| {
        let mut wr = csv::Writer::from_writer(w);
        for bin in &intervals.histogram {
            wr.serialize(bin)?;
        }
        wr.flush()?;
        Ok(())
    })?;
    write_csv(&out("density.csv"), &mut rec, |w| density_csv(&trace, window_seconds, baseline_rps, w))?;
    write_csv(&out("groups.csv"), &mut rec, |w| write_group_csv(&grouping, w))?;
    write_csv(&out("group_intervals.csv"), &mut rec, |w| write_group_histogram_csv(&grouping, w))?;

    let secs = trace.duration_ms as f64 / 1000.0;
    let summary = AnalysisSummary {
        requests: trace.len(),
        duration_ms: trace.duration_ms,
        mean_rate_per_s: if secs > 0.0 { trace.len() as f64 / secs } else { 0.0 },
        baseline_rps,
        density,
        block_fraction_for_90pct_hits: lorenz.fraction_for_90pct,
        no_reuse: lorenz.degenerate,
        interval_p50_ms: intervals.p50_ms,
        interval_p90_ms: intervals.p90_ms,
        interval_p99_ms: intervals.p99_ms,
        interval_mean_ms: intervals.mean_ms,
    };
    let summary_path = out("summary.json");
    write_json(&summary_path, &summary, &mut rec)?;
    finish(rec, manifest, &summary_path)
}

/// Arrivals per fixed window, with the window's density when a baseline
/// capacity is given.
fn density_csv<W: std::io::Write>(trace: &Trace, window_s: u64, baseline_rps: Option<f64>, w: W) -> csv::Result<()> {
    let window_ms = window_s * 1000;
    let windows = (trace.duration_ms / window_ms + 1) as usize;
    let mut counts = vec![0u64; windows];
    for r in &trace.requests {
        counts[((r.arrival_ms / window_ms) as usize).min(windows - 1)] += 1;
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["window_start_s", "requests", "rate_per_s", "density"])?;
    for (i, &n) in counts.iter().enumerate() {
        let rate = n as f64 / window_s as f64;
        wr.write_record([
            (i as u64 * window_s).to_string(),
            n.to_string(),
            rate.to_string(),
            baseline_rps.map_or(String::new(), |b| (rate / b).to_string()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(clap::Args)]
pub struct TtlOptArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// Storage budget in block-seconds: the summed residency time of every
    /// cached block. Multiply by the block size for byte-seconds.
    #[arg(long)]
    pub budget: f64,
    /// Number of top-ranked prefix subtrees that get their own TTL.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Only the most recent window of the trace is used.
    #[arg(long)]
    pub window_seconds: Option<u64>,
    /// Seeds the start-point perturbation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on any TTL, in seconds.
    #[arg(long)]
    pub horizon_s: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub manifest: ManifestArg,
}

#[derive(Serialize)]
struct GroupRow {
    group_id: usize,
    root: Option<String>,
    unique_blocks: usize,
    reuse_count: u64,
    ttl_s: f64,
    hits: u64,
    cost: f64,
}

#[derive(Serialize)]
struct TtlOutput {
    /// Group id → TTL in seconds.
    ttls: BTreeMap<usize, f64>,
    /// Ready to paste into a storage config's `ttl` field.
    policy: TtlPolicy,
    groups: Vec<GroupRow>,
    hits: u64,
    cost: f64,
    budget: f64,
    budget_units: &'static str,
    window_requests: usize,
    diagnostics: kvtier::ttl_alloc::Diagnostics,
}

pub fn ttl_opt(args: &TtlOptArgs) -> CmdResult<()> {
    let mut rec = Recorder::new("ttl-opt");
    rec.seed = Some(args.seed);
    if !(args.budget >= 0.0) || !args.budget.is_finite() {
        return Err(Failure::Usage(anyhow!("--budget must be finite and non-negative")));
    }
    if args.horizon_s.is_some_and(|h| !(h > 0.0)) {
        return Err(Failure::Usage(anyhow!("--horizon-s must be positive")));
    }
    let full = load_trace(&args.trace, &mut rec)?;
    rec.config = serde_json::json!({
        "budget": args.budget,
        "k": args.k,
        "window_seconds": args.window_seconds,
        "horizon_s": args.horizon_s,
    });
    let trace = match args.window_seconds {
        Some(w) => full.recent_window(w * 1000),
        None => full,
    };
    if trace.is_empty() {
        return Err(Failure::Usage(anyhow!("the selected window holds no requests")));
    }
    let mut grouping = top_k_subtrees(&trace, args.k).usage()?;
    group_interarrivals(&trace, &mut grouping);
    let mut curves = curves_from_grouping(&grouping).runtime()?;
    if let Some(h) = args.horizon_s {
        curves = curves.into_iter().map(|c| c.with_horizon(h)).collect();
    }
    let opts = AllocOptions {
        seed: args.seed,
        ..AllocOptions::default()
    };
    let sol = allocate_ttls(&curves, args.budget, &opts).runtime()?;

    let groups: Vec<GroupRow> = grouping
        .groups
        .iter()
        .zip(&curves)
        .zip(&sol.ttls)
        .map(|((g, c), &t)| GroupRow {
            group_id: g.group_id,
            root: g.root.as_ref().map(|h| h.to_string()),
            unique_blocks: g.unique_blocks(),
            reuse_count: g.reuse_count,
            ttl_s: t,
            hits: c.hits(t),
            cost: c.cost(t),
        })
        .collect();
    let policy = TtlPolicy::Group {
        groups: grouping
            .groups
            .iter()
            .zip(&sol.ttls)
            .map(|(g, &ttl_s)| GroupTtl {
                root: g.root.clone(),
                ttl_s,
            })
            .collect(),
    };
    let out = TtlOutput {
        ttls: groups.iter().map(|g| (g.group_id, g.ttl_s)).collect(),
        policy,
        groups,
        hits: sol.hits,
        cost: sol.cost,
        budget: sol.budget,
        budget_units: "block-seconds",
        window_requests: trace.len(),
        diagnostics: sol.diagnostics,
    };
    write_json(&args.out, &out, &mut rec)?;
    finish(rec, ManifestArg { manifest: args.manifest.manifest.clone() }, &args.out)
}

/// Objective vectors `[mean TTFT, −throughput, cost]` of a frontier CSV.
pub fn read_frontier(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("cannot read frontier {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column `{name}`", path.display()))
    };
    let cols = [col("mean_ttft_ms")?, col("throughput_tps")?, col("cost")?];
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: row {}", path.display(), i + 2))?;
        let v = |k: usize| -> anyhow::Result<f64> {
            let s = &rec[cols[k]];
            s.parse::<f64>()
                .with_context(|| format!("{}: row {}: bad number `{s}`", path.display(), i + 2))
        };
        out.push(vec![v(0)?, -v(1)?, v(2)?]);
    }
    Ok(out)
}

#[derive(Serialize)]
struct HvSet {
    path: String,
    points: usize,
    hypervolume: f64,
}

#[derive(Serialize)]
struct HvOutput {
    reference: Vec<f64>,
    reference_mode: &'static str,
    sets: Vec<HvSet>,
}

pub fn hypervolume(frontiers: &[PathBuf], reference: &str, out: &Path, manifest: ManifestArg) -> CmdResult<()> {
    let mut rec = Recorder::new("hypervolume");
    let mut sets = Vec::new();
    for f in frontiers {
        sets.push(read_frontier(f).usage()?);
        rec.inputs.push(f.clone());
    }
    let (reference, mode) = if reference == "auto" {
        let all: Vec<Vec<f64>> = sets.iter().flatten().cloned().collect();
        if all.is_empty() {
            return Err(Failure::Usage(anyhow!("--ref auto needs at least one frontier point")));
        }
        (auto_reference(&all).runtime()?, "auto")
    } else {
        let r: Vec<f64> = reference
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("--ref: expected `auto` or three numbers, got `{reference}`"))
            .usage()?;
        if r.len() != 3 {
            return Err(Failure::Usage(anyhow!("--ref: expected three values, got {}", r.len())));
        }
        (r, "explicit")
    };
    rec.config = serde_json::json!({ "reference": reference, "reference_mode": mode });
    rec.notes.insert("reference".into(), serde_json::json!(reference));
    let mut rows = Vec::new();
    for (f, pts) in frontiers.iter().zip(&sets) {
        let v = if pts.is_empty() {
            0.0
        } else {
            hv(pts, &reference).with_context(|| format!("{}", f.display())).usage()?
        };
        rows.push(HvSet {
            path: f.display().to_string(),
            points: pts.len(),
            hypervolume: v,
        });
    }
    write_json(
        out,
        &HvOutput {
            reference,
            reference_mode: mode,
            sets: rows,
        },
        &mut rec,
    )?;
    finish(rec, manifest, out)
}
