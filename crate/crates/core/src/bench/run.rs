use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::sort_rows;
use super::{generate_scenario_with, run_seed, BenchError, BenchReport, Difficulty, GenOptions, RunRow, Scenario};
use crate::body::{kp, MotionSequence};
use crate::geometry::Sdf;
use crate::motion_refine::{pa_mpjpe, refine_motion, w_mpjpe, RefineParams};
use crate::scene_align::{align_placement, sp3d, PlacedObject, Placement, PlacementOptions, PlacementState, SP3D_EPS};
use crate::simulator::{
    classify_with_gravity, gravity_stability, settle, BodyDesc, OutcomeType, SettleParams, StabilityScenario,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub align: bool,
    pub refine: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            align: true,
            refine: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub tiers: Vec<Difficulty>,
    pub n_per_tier: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub stages: Stages,
    pub generator: GenOptions,
    pub align: PlacementOptions,
    pub refine: RefineParams,
    pub settle: SettleParams,
    /// Leave Type1 runs out of the Stability-HSI denominator.
    pub exclude_gravity_failures: bool,
    /// Per-run standard deviation of the object placement jitter, in
    /// meters for position and radians for yaw.
    pub jitter: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            tiers: Difficulty::ALL.to_vec(),
            n_per_tier: 10,
            repeats: 15,
            base_seed: 0,
            stages: Stages::default(),
            generator: GenOptions::default(),
            align: PlacementOptions {
                frame_stride: 3,
                max_iters: 60,
                ..PlacementOptions::default()
            },
            refine: RefineParams::default(),
            settle: SettleParams::default(),
            exclude_gravity_failures: false,
            jitter: 0.002,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n_per_tier == 0 || self.repeats == 0 || self.tiers.is_empty() {
            return Err(BenchError::Invalid("need at least one tier, scenario and repeat".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(BenchError::Invalid("jitter must be non-negative".into()));
        }
        Ok(())
    }

    /// The scenarios this config benchmarks.
    pub fn scenarios(&self) -> Vec<Scenario> {
        self.tiers
            .iter()
            .flat_map(|&d| {
                (0..self.n_per_tier).map(move |i| {
                    let seed = run_seed(&format!("{d}/{}", self.base_seed), i);
                    let mut s = generate_scenario_with(d, seed, &self.generator);
                    s.id = format!("{d}-{i:03}");
                    s
                })
            })
            .collect()
    }
}

fn jittered(scenario: &Scenario, seed: u64, sigma: f64) -> Vec<Placement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).ok();
    scenario
        .objects
        .iter()
        .map(|o| {
            let mut p = o.placement;
            if let Some(n) = &noise {
                p.yaw += n.sample(&mut rng);
                p.translation.x += n.sample(&mut rng);
                p.translation.y += n.sample(&mut rng);
            }
            p
        })
        .collect()
}

fn sp3d_of(motion: &MotionSequence, sdfs: &[Sdf], placements: &[Placement]) -> f64 {
    let placed: Vec<PlacedObject> = sdfs
        .iter()
        .zip(placements)
        .map(|(sdf, p)| PlacedObject { sdf, pose: p.pose() })
        .collect();
    sp3d(motion, &placed, SP3D_EPS)
}

/// The pipeline on one scenario and repeat: optional align, optional
/// refine, then settle and classify. Failures end as Type2 with a note.
pub fn run_scenario(scenario: &Scenario, repeat: usize, config: &BenchConfig, base: Option<&Path>) -> RunRow {
    let seed = run_seed(&scenario.id, repeat);
    let pa = |m: &MotionSequence| pa_mpjpe(m, &scenario.reference).ok();
    let w = |m: &MotionSequence| w_mpjpe(m, &scenario.reference).unwrap_or(f64::INFINITY);
    let mut row = RunRow {
        scenario: scenario.id.clone(),
        difficulty: scenario.difficulty,
        repeat,
        seed,
        outcome: OutcomeType::Type2,
        gravity_ok: false,
        stabilized: false,
        settle_time: 0.0,
        sp3d_input: 0.0,
        sp3d: 0.0,
        w_mpjpe_pre: w(&scenario.motion),
        w_mpjpe_post: w(&scenario.motion),
        pa_mpjpe_pre: pa(&scenario.motion),
        pa_mpjpe_post: pa(&scenario.motion),
        note: String::new(),
    };
    if let Err(e) = pipeline(scenario, seed, config, base, &mut row) {
        row.outcome = OutcomeType::Type2;
        row.note = e;
    }
    row
}

fn pipeline(
    scenario: &Scenario,
    seed: u64,
    config: &BenchConfig,
    base: Option<&Path>,
    row: &mut RunRow,
) -> Result<(), String> {
    let mut objects = scenario.objects.clone();
    for (o, p) in objects.iter_mut().zip(jittered(scenario, seed, config.jitter)) {
        o.placement = p;
    }
    let descs: Vec<BodyDesc> = objects
        .iter()
        .map(|o| o.body(base))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let sdfs: Vec<Sdf> = descs
        .iter()
        .map(|d| Sdf::new(&d.mesh))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut placements: Vec<Placement> = objects.iter().map(|o| o.placement).collect();
    let mut motion = scenario.motion.clone();
    row.sp3d_input = sp3d_of(&motion, &sdfs, &placements);

    if config.stages.align {
        let refs: Vec<&Sdf> = sdfs.iter().collect();
        let init = PlacementState {
            objects: placements.clone(),
            human: Placement::default(),
        };
        let res = align_placement(&motion, &refs, &init, &config.align).map_err(|e| e.to_string())?;
        let pivot = motion.frames[0][kp::PELVIS];
        motion = motion.transformed(&res.state.human.pose_about(&pivot));
        placements = res.state.objects;
    }
    row.sp3d = sp3d_of(&motion, &sdfs, &placements);
    let descs: Vec<BodyDesc> = descs
        .into_iter()
        .zip(&placements)
        .map(|(mut d, p)| {
            d.pose = p.pose();
            d
        })
        .collect();

    if config.stages.refine {
        let r = refine_motion(&motion, &descs, &config.refine, seed).map_err(|e| e.to_string())?;
        motion = r.motion;
    }
    row.w_mpjpe_post = w_mpjpe(&motion, &scenario.reference).map_err(|e| e.to_string())?;
    row.pa_mpjpe_post = pa_mpjpe(&motion, &scenario.reference).ok();

    let gravity: Vec<bool> = descs
        .iter()
        .map(|d| gravity_stability(d, &config.settle))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    row.gravity_ok = gravity.iter().all(|&g| g);
    if !row.gravity_ok {
        row.outcome = OutcomeType::Type1;
        return Ok(());
    }
    let sc = StabilityScenario {
        bodies: descs,
        motion: Some(motion),
        targets: Vec::new(),
    }
    .with_default_targets();
    let world = sc.world().map_err(|e| e.to_string())?;
    let out = settle(world, &config.settle).map_err(|e| e.to_string())?;
    row.stabilized = out.stabilized;
    row.settle_time = out.settle_time;
    row.outcome = classify_with_gravity(&gravity, &out, &sc.targets, config.settle.dwell_steps());
    Ok(())
}

/// Every scenario × repeat on the work pool, rows in (id, repeat) order.
pub fn run_scenarios(scenarios: &[Scenario], config: &BenchConfig, base: Option<&Path>) -> Vec<RunRow> {
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| (0..config.repeats).map(move |r| (s, r)))
        .collect();
    let mut rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|&(s, r)| run_scenario(&scenarios[s], r, config, base))
        .collect();
    sort_rows(&mut rows);
    rows
}

pub fn run_benchmark(config: &BenchConfig) -> Result<(BenchReport, Vec<RunRow>), BenchError> {
    config.validate()?;
    let rows = run_scenarios(&config.scenarios(), config, None);
    Ok((BenchReport::from_rows(&rows, config.exclude_gravity_failures), rows))
}
