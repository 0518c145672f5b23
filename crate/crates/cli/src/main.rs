//! `physloop`: command-line front end for the toolkit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use physloop::bench::{
    from_json_str, generate_scenario_with, load_scene, read_text, rows_to_csv, run_benchmark, save_scene,
    to_canonical_json, write_text, BenchConfig, Difficulty, GenOptions, Scenario,
};
use physloop::body::kp;
use physloop::dsro::{
    pretrain, trace_to_csv, train_dsro, Condition, Denoiser, DsroOptions, NoiseSchedule, PretrainOptions,
    ShapeFamily, D,
};
use physloop::geometry::Sdf;
use physloop::motion_refine::{refine_motion, RefineParams, ScoreParts};
use physloop::pointmap_align::{global_align, synth_graph, AlignOptions, PairGraph, SynthTopology};
use physloop::scene_align::{align_placement, Placement, PlacementOptions, PlacementState};
use physloop::simulator::{classify_outcome, settle, OutcomeType, SettleOutcome, SettleParams, StabilityScenario};

#[derive(Parser, Debug)]
#[command(name = "physloop", version, about = "Physics-in-the-loop human-scene interaction toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory outputs are written to.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// JSON file with options for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Global alignment of a point-map pair graph.
    Pmalign {
        /// Pair graph JSON; a synthetic graph is built when omitted.
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        views: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Joint object/human placement for a scene.
    Align { scene: PathBuf },
    /// Settle a scene with its motion and classify the outcome.
    Simulate { scene: PathBuf },
    /// Refine the motion of a scene against its objects.
    Refine { scene: PathBuf },
    /// Pretrain a shape denoiser, then fine-tune it with simulator rewards.
    DsroTrain,
    /// Write generated scenes.
    Gen {
        #[arg(long, value_parser = parse_difficulty, default_value = "easy")]
        difficulty: Difficulty,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Run the benchmark and write the report and per-run rows.
    Bench,
}

fn parse_difficulty(s: &str) -> Result<Difficulty, String> {
    Difficulty::ALL
        .into_iter()
        .find(|d| d.name() == s.to_lowercase())
        .ok_or_else(|| format!("unknown difficulty `{s}` (easy, medium or hard)"))
}

enum Failure {
    Config(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::Run(e.to_string())
}

/// Options for `dsro-train`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DsroTrainConfig {
    hidden: Vec<usize>,
    family: ShapeFamily,
    conditions: Vec<Condition>,
    pretrain: PretrainOptions,
    dsro: DsroOptions,
}

impl Default for DsroTrainConfig {
    fn default() -> Self {
        DsroTrainConfig {
            hidden: vec![64, 64],
            family: ShapeFamily::mixed(),
            conditions: vec![Condition::default()],
            pretrain: PretrainOptions::default(),
            dsro: DsroOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct PmalignSummary {
    views: usize,
    initial_residual: f64,
    final_residual: f64,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct SimulateSummary {
    outcome: OutcomeType,
    settle: SettleOutcome,
}

#[derive(Serialize)]
struct RefineSummary {
    input_score: ScoreParts,
    best_score: ScoreParts,
    trace: Vec<f64>,
    discarded: usize,
}

struct Ctx {
    seed: Option<u64>,
    out_dir: PathBuf,
    config: Option<PathBuf>,
}

impl Ctx {
    fn options<T: DeserializeOwned + Default>(&self) -> Result<T, Failure> {
        match &self.config {
            None => Ok(T::default()),
            Some(p) => from_json_str(&read_text(p).map_err(config_err)?).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        let path = self.out(name);
        write_text(&path, text).map_err(run_err)?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}

fn scene_stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scene".into(), |s| s.to_string_lossy().into_owned())
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    load_scene(path).map_err(config_err)
}

fn pmalign(ctx: &Ctx, graph: Option<&Path>, views: usize, size: usize, noise: f64) -> Result<(), Failure> {
    let opts: AlignOptions = ctx.options()?;
    let graph: PairGraph = match graph {
        Some(p) => from_json_str(&read_text(p).map_err(config_err)?).map_err(config_err)?,
        None => {
            if views < 2 || size == 0 {
                return Err(config_err("a synthetic graph needs at least two views and a positive size"));
            }
            synth_graph(views, size, size, noise, ctx.seed.unwrap_or(0), SynthTopology::Ring).0
        }
    };
    graph.validate().map_err(config_err)?;
    let res = global_align(&graph, &opts, None).map_err(run_err)?;
    let summary = PmalignSummary {
        views: graph.intrinsics.len(),
        initial_residual: res.trace.first().copied().unwrap_or(f64::NAN),
        final_residual: res.trace.last().copied().unwrap_or(f64::NAN),
        iterations: res.iterations,
        converged: res.converged,
    };
    ctx.write("pmalign_result.json", &to_canonical_json(&res))?;
    let mut trace = String::from("iteration,residual\n");
    for (i, r) in res.trace.iter().enumerate() {
        trace.push_str(&format!("{i},{r:e}\n"));
    }
    ctx.write("pmalign_trace.csv", &trace)?;
    println!("{}", to_canonical_json(&summary).trim_end());
    Ok(())
}

fn align(ctx: &Ctx, path: &Path) -> Result<(), Failure> {
    let opts: PlacementOptions = ctx.options()?;
    let mut scene = load(path)?;
    let descs = scene.bodies(path.parent()).map_err(run_err)?;
    let sdfs: Vec<Sdf> = descs.iter().map(|d| Sdf::new(&d.mesh)).collect::<Result<_, _>>().map_err(run_err)?;
    let refs: Vec<&Sdf> = sdfs.iter().collect();
    let init = PlacementState {
        objects: scene.objects.iter().map(|o| o.placement).collect(),
        human: Placement::default(),
    };
    let res = align_placement(&scene.motion, &refs, &init, &opts).map_err(run_err)?;
    let pivot = scene.motion.frames[0][kp::PELVIS];
    scene.motion = scene.motion.transformed(&res.state.human.pose_about(&pivot));
    for (o, p) in scene.objects.iter_mut().zip(&res.state.objects) {
        o.placement = *p;
    }
    let stem = scene_stem(path);
    save_scene(&ctx.out(&format!("{stem}_aligned.json")), &scene).map_err(run_err)?;
    ctx.write(&format!("{stem}_align.json"), &to_canonical_json(&res))?;
    println!(
        "align: loss {:.6} -> {:.6} over {} steps",
        res.trace[0],
        res.trace.last().copied().unwrap_or(res.trace[0]),
        res.trace.len() - 1
    );
    Ok(())
}

fn simulate(ctx: &Ctx, path: &Path) -> Result<(), Failure> {
    let params: SettleParams = ctx.options()?;
    let scene = load(path)?;
    let sc = StabilityScenario {
        bodies: scene.bodies(path.parent()).map_err(run_err)?,
        motion: Some(scene.motion.clone()),
        targets: Vec::new(),
    }
    .with_default_targets();
    let out = settle(sc.world().map_err(run_err)?, &params).map_err(|e| match e {
        physloop::simulator::SimError::BadTimeStep(_) | physloop::simulator::SimError::BadParams(_) => config_err(e),
        e => run_err(e),
    })?;
    let outcome = classify_outcome(&sc, &out, &params).map_err(run_err)?;
    ctx.write(
        &format!("{}_outcome.json", scene_stem(path)),
        &to_canonical_json(&SimulateSummary { outcome, settle: out }),
    )?;
    println!("outcome: {}", outcome.name());
    Ok(())
}

fn refine(ctx: &Ctx, path: &Path) -> Result<(), Failure> {
    let params: RefineParams = ctx.options()?;
    let mut scene = load(path)?;
    let descs = scene.bodies(path.parent()).map_err(run_err)?;
    let res = refine_motion(&scene.motion, &descs, &params, ctx.seed.unwrap_or(0)).map_err(|e| match e {
        physloop::motion_refine::RefineError::BadParams(_) => config_err(e),
        e => run_err(e),
    })?;
    scene.motion = res.motion.clone();
    let stem = scene_stem(path);
    save_scene(&ctx.out(&format!("{stem}_refined.json")), &scene).map_err(run_err)?;
    let summary = RefineSummary {
        input_score: res.input_score,
        best_score: res.best_score,
        trace: res.trace,
        discarded: res.discarded,
    };
    ctx.write(&format!("{stem}_refine.json"), &to_canonical_json(&summary))?;
    println!("refine: score {:.6} -> {:.6}", summary.input_score.total, summary.best_score.total);
    Ok(())
}

fn dsro_train(ctx: &Ctx) -> Result<(), Failure> {
    let mut cfg: DsroTrainConfig = ctx.options()?;
    if let Some(s) = ctx.seed {
        cfg.pretrain.seed = s;
        cfg.dsro.seed = s;
    }
    cfg.dsro.validate().map_err(config_err)?;
    if cfg.hidden.is_empty() || cfg.hidden.contains(&0) {
        return Err(config_err("hidden layer sizes must be positive"));
    }
    if cfg.family.mean.len() != D || cfg.family.std.len() != D {
        return Err(config_err(format!("shape family needs {D} means and deviations")));
    }
    let sched = NoiseSchedule::default();
    let mut den = Denoiser::new(D, &cfg.hidden, cfg.pretrain.seed);
    let pre = pretrain(&mut den, std::slice::from_ref(&cfg.family), &cfg.conditions, &sched, &cfg.pretrain)
        .map_err(config_err)?;
    log::info!("pretrain loss {:.4} -> {:.4}", pre.first().unwrap_or(&0.0), pre.last().unwrap_or(&0.0));
    let res = train_dsro(&den, &cfg.conditions, &sched, &cfg.dsro).map_err(run_err)?;
    let mut bytes = Vec::new();
    res.denoiser.write_to(&mut bytes).map_err(run_err)?;
    let model = ctx.out("denoiser.pldn");
    std::fs::write(&model, bytes).map_err(|e| run_err(format!("{}: {e}", model.display())))?;
    ctx.write("dsro_trace.csv", &trace_to_csv(&res.trace).map_err(run_err)?)?;
    if let (Some(a), Some(b)) = (res.trace.first(), res.trace.last()) {
        println!(
            "dsro: stability {:.1}% -> {:.1}% ({} simulator labels)",
            a.stability_rate, b.stability_rate, res.simulator_calls
        );
    }
    Ok(())
}

fn gen(ctx: &Ctx, difficulty: Difficulty, count: usize) -> Result<(), Failure> {
    let opts: GenOptions = ctx.options()?;
    let base = ctx.seed.unwrap_or(0);
    for i in 0..count as u64 {
        let s = generate_scenario_with(difficulty, base + i, &opts);
        let path = ctx.out(&format!("{}.json", s.id));
        save_scene(&path, &s).map_err(run_err)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn bench(ctx: &Ctx) -> Result<(), Failure> {
    let mut cfg: BenchConfig = ctx.options()?;
    if let Some(s) = ctx.seed {
        cfg.base_seed = s;
    }
    cfg.validate().map_err(config_err)?;
    let (report, rows) = run_benchmark(&cfg).map_err(run_err)?;
    ctx.write("bench_report.json", &to_canonical_json(&report))?;
    ctx.write("bench_runs.csv", &rows_to_csv(&rows).map_err(run_err)?)?;
    for t in &report.tiers {
        println!(
            "{:6} runs {:4} stability-hsi {:6.2}% gravity {:6.2}% sp-3d {:6.2}% -> {:6.2}%",
            t.difficulty.name(),
            t.runs,
            t.stability_hsi,
            t.stability_gravity,
            t.sp3d_input,
            t.sp3d
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| config_err(format!("{}: {e}", cli.out_dir.display())))?;
    let ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        config: cli.config,
    };
    match cli.command {
        Command::Pmalign { graph, views, size, noise } => pmalign(&ctx, graph.as_deref(), views, size, noise),
        Command::Align { scene } => align(&ctx, &scene),
        Command::Simulate { scene } => simulate(&ctx, &scene),
        Command::Refine { scene } => refine(&ctx, &scene),
        Command::DsroTrain => dsro_train(&ctx),
        Command::Gen { difficulty, count } => gen(&ctx, difficulty, count),
        Command::Bench => bench(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Run(m) => eprintln!("run failed: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
