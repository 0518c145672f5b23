//! Scenario generation, the tiered benchmark and its report.

mod report;
mod run;
pub mod suite;
pub mod templates;

pub use report::{read_rows, rows_from_csv, rows_to_csv, sort_rows, BenchReport, RunRow, TierReport};
pub use run::{run_benchmark, run_scenario, run_scenarios, BenchConfig, Stages};

use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::body::MotionSequence;
use crate::dsro::{ShapeFamily, ShapeParam};
use crate::geometry::{read_obj, GeometryError};
use crate::math::Vec3;
use crate::scene_align::Placement;
use crate::simulator::{BodyDesc, DEFAULT_FRICTION};
use templates::{footrest, footrest_offset, table, table_offset, SitExtras, SitTemplate};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("missing asset: {0}")]
    MissingAsset(PathBuf),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown difficulty `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectShape {
    Chair { params: ShapeParam },
    Table,
    Footrest,
    /// Wavefront OBJ, relative paths taken from the scene file's directory.
    Mesh { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub name: String,
    pub shape: ObjectShape,
    pub placement: Placement,
    pub friction: f64,
}

impl SceneObject {
    /// Simulator body at the object's placement. Mesh paths resolve
    /// against `base`.
    pub fn body(&self, base: Option<&Path>) -> Result<BodyDesc, BenchError> {
        let pose = self.placement.pose();
        let mut d = match &self.shape {
            ObjectShape::Chair { params } => params.decode().body(&self.name, pose),
            ObjectShape::Table => table().body(&self.name, pose),
            ObjectShape::Footrest => footrest().body(&self.name, pose),
            ObjectShape::Mesh { path } => {
                let p = resolve(base, path);
                if !p.exists() {
                    return Err(BenchError::MissingAsset(p));
                }
                BodyDesc::new(&self.name, read_obj(&p)?, pose)
            }
        };
        d.friction = self.friction;
        Ok(d)
    }
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

/// One benchmark case: objects, the observed motion fed to the pipeline,
/// and the clean motion the metrics compare against. Contact
/// designations travel with the motions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub id: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub objects: Vec<SceneObject>,
    pub motion: MotionSequence,
    pub reference: MotionSequence,
}

impl Scenario {
    pub fn bodies(&self, base: Option<&Path>) -> Result<Vec<BodyDesc>, BenchError> {
        self.objects.iter().map(|o| o.body(base)).collect()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Invalid(m));
        if self.objects.is_empty() {
            return bad(format!("{}: no objects", self.id));
        }
        for m in [&self.motion, &self.reference] {
            m.validate().map_err(|e| BenchError::Invalid(format!("{}: {e}", self.id)))?;
            if let Some(c) = m.contacts.iter().find(|c| c.object >= self.objects.len()) {
                return bad(format!("{}: contact names object {}", self.id, c.object));
            }
        }
        if self.motion.len() != self.reference.len() {
            return bad(format!("{}: motion and reference lengths differ", self.id));
        }
        Ok(())
    }
}

/// Knobs for [`generate_scenario_with`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenOptions {
    /// Range of the vertical error added to the observed motion; positive
    /// values hover, negative values sink into the furniture.
    pub lift: [f64; 2],
    /// Standard deviation of the horizontal error (meters).
    pub drift: f64,
    /// Half-width of the square the chair is placed in.
    pub spread: f64,
    pub family: ShapeFamily,
    pub template: SitTemplate,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            lift: [-0.06, 0.06],
            drift: 0.02,
            spread: 1.0,
            family: ShapeFamily::stable(),
            template: SitTemplate::default(),
        }
    }
}

pub fn generate_scenario(difficulty: Difficulty, seed: u64) -> Scenario {
    generate_scenario_with(difficulty, seed, &GenOptions::default())
}

/// A chair (plus a table for Medium, plus a footrest for Hard) at a random
/// spot and heading, a sitting motion that touches every object, and an
/// observed copy of it shifted by a random error.
pub fn generate_scenario_with(difficulty: Difficulty, seed: u64, opts: &GenOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = opts.family.sample(&mut rng, None);
    let chair = params.decode();
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let at = Vec3::new(
        rng.random_range(-opts.spread..=opts.spread),
        rng.random_range(-opts.spread..=opts.spread),
        0.0,
    );
    let chair_place = Placement { yaw, translation: at };
    let chair_pose = chair_place.pose();
    let object = |name: &str, shape, translation| SceneObject {
        name: name.to_string(),
        shape,
        placement: Placement { yaw, translation },
        friction: DEFAULT_FRICTION,
    };
    let mut objects = vec![object("chair", ObjectShape::Chair { params }, at)];
    let mut extras = SitExtras::default();
    let depth = chair.dims.seat_depth;
    if difficulty >= Difficulty::Medium {
        extras.table = Some(objects.len());
        objects.push(object("table", ObjectShape::Table, chair_pose.apply(&table_offset(depth))));
    }
    if difficulty == Difficulty::Hard {
        extras.footrest = Some(objects.len());
        objects.push(object("footrest", ObjectShape::Footrest, chair_pose.apply(&footrest_offset(depth))));
    }
    let reference = opts.template.motion(&chair_pose, 0, chair.seat_top(), depth, extras);

    let (lo, hi) = (opts.lift[0].min(opts.lift[1]), opts.lift[0].max(opts.lift[1]));
    let dz = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let (dx, dy) = match Normal::new(0.0, opts.drift.max(0.0)) {
        Ok(n) => (n.sample(&mut rng), n.sample(&mut rng)),
        Err(_) => (0.0, 0.0),
    };
    let motion = reference.transformed(&crate::math::Pose::from_translation(Vec3::new(dx, dy, dz)));
    Scenario {
        schema: SCHEMA_VERSION,
        id: format!("{difficulty}-{seed}"),
        difficulty,
        seed,
        objects,
        motion,
        reference,
    }
}

/// Stable 64-bit mix of a string and an index, used to derive run seeds.
pub fn run_seed(id: &str, repeat: usize) -> u64 {
    // FNV-1a over the id, then a splitmix finalizer with the repeat index
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = h ^ (repeat as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Pretty JSON with a trailing newline; the canonical on-disk form.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Strict decode that names the offending field on failure.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, BenchError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        BenchError::Parse {
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

pub fn read_text(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), BenchError> {
    std::fs::write(path, text).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses scene JSON, checking the schema version before the fields.
pub fn parse_scene(text: &str) -> Result<Scenario, BenchError> {
    let raw: serde_json::Value = from_json_str(text)?;
    match raw.get("schema").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(found) => {
            return Err(BenchError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            })
        }
        None => {
            return Err(BenchError::Parse {
                field: "schema".into(),
                line: 0,
                column: 0,
                message: "missing or non-integer `schema`".into(),
            })
        }
    }
    let s: Scenario = from_json_str(text)?;
    s.validate()?;
    Ok(s)
}

/// Loads a scene and checks that every referenced mesh exists.
pub fn load_scene(path: &Path) -> Result<Scenario, BenchError> {
    let s = parse_scene(&read_text(path)?)?;
    let base = path.parent();
    for o in &s.objects {
        if let ObjectShape::Mesh { path: p } = &o.shape {
            let full = resolve(base, p);
            if !full.exists() {
                return Err(BenchError::MissingAsset(full));
            }
        }
    }
    Ok(s)
}

pub fn save_scene(path: &Path, scenario: &Scenario) -> Result<(), BenchError> {
    write_text(path, &to_canonical_json(scenario))
}
