//! Command-line front end.
//!
//! Exit codes: 0 success, 2 bad input data or arguments, 1 internal failure.
//! Every subcommand writes only inside its `--out-dir`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::ccf::{self, Forest, ForestParams, Impurity, SplitMode};
use crate::evalmap::{self, EvalReport};
use crate::geodata::{self, GeoTransform};
use crate::pipeline::{self, MaterialClass, RejectionReport};
use crate::synth::{self, Layout};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file", path.display())))
    }
}

fn prepare_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))
}

#[derive(Debug, Parser)]
#[command(
    name = "ccfmap",
    version,
    about = "Canonical correlation forest material mapping"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract, balance and train a forest from survey points on a scene.
    Train(TrainArgs),
    /// Classify every pixel of a scene with a trained model.
    Classify(ClassifyArgs),
    /// Score a class grid against a ground-truth mask.
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene, survey points and mask.
    Synth(SynthArgs),
}

/// Scene header plus optional raw data path (defaults to the header path
/// with a `.bsq` extension).
#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub scene_data: Option<PathBuf>,
}

impl SceneArgs {
    pub fn new(scene: impl Into<PathBuf>) -> Self {
        SceneArgs {
            scene: scene.into(),
            scene_data: None,
        }
    }

    fn data_path(&self) -> PathBuf {
        self.scene_data
            .clone()
            .unwrap_or_else(|| self.scene.with_extension("bsq"))
    }

    fn check(&self) -> Result<(), CliError> {
        require_file(&self.scene)?;
        require_file(&self.data_path())
    }

    fn load(&self) -> Result<geodata::Scene, CliError> {
        geodata::load_scene(&self.scene, &self.data_path()).map_err(data)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Survey points CSV (source_id,lon,lat,survey_class).
    #[arg(long)]
    pub points: PathBuf,
    /// Environment points CSV, same columns; every row is labeled environment.
    #[arg(long)]
    pub env_points: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of trees. 15 is a good choice when compute allows.
    #[arg(long, default_value_t = 10)]
    pub trees: usize,
    #[arg(long, default_value_t = 11)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "gini")]
    pub impurity: Impurity,
    #[arg(long, default_value = "ccf")]
    pub mode: SplitMode,
    #[arg(long, default_value_t = ccf::DEFAULT_GAMMA)]
    pub gamma: f64,
    /// Features per node; defaults to ceil(sqrt(bands)).
    #[arg(long)]
    pub features_per_node: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_node_size: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Grow trees one after another instead of in parallel.
    #[arg(long)]
    pub serial: bool,
}

impl TrainArgs {
    pub fn new(scene: SceneArgs, points: PathBuf, env_points: PathBuf, out_dir: PathBuf) -> Self {
        TrainArgs {
            scene,
            points,
            env_points,
            out_dir,
            trees: 10,
            per_class: 11,
            seed: 0,
            impurity: Impurity::Gini,
            mode: SplitMode::Ccf,
            gamma: ccf::DEFAULT_GAMMA,
            features_per_node: None,
            min_node_size: 2,
            max_depth: None,
            serial: false,
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.trees,
            n_classes: MaterialClass::ALL.len(),
            feature_subsample: self.features_per_node,
            min_node_size: self.min_node_size,
            max_depth: self.max_depth,
            impurity: self.impurity,
            mode: self.mode,
            gamma: self.gamma,
            seed: self.seed,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub forest: Forest,
    pub report: RejectionReport,
    pub model_path: PathBuf,
}

pub const MODEL_FILE: &str = "model.ccf";
pub const REJECTIONS_TABLE: &str = "rejections.txt";
pub const REJECTIONS_KV: &str = "rejections.kv";

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome, CliError> {
    args.scene.check()?;
    require_file(&args.points)?;
    require_file(&args.env_points)?;
    prepare_out_dir(&args.out_dir)?;

    let scene = args.scene.load()?;
    let survey = geodata::load_points(&args.points).map_err(data)?;
    let env = geodata::load_points(&args.env_points).map_err(data)?;

    let (mut samples, mut report) = pipeline::extract_samples(&scene, &survey).map_err(data)?;
    let (env_samples, env_report) =
        pipeline::extract_samples_as(&scene, &env, MaterialClass::Environment).map_err(data)?;
    samples.extend(env_samples);
    report.merge(env_report);

    write_file(&args.out_dir.join(REJECTIONS_TABLE), report.to_table())?;
    write_file(&args.out_dir.join(REJECTIONS_KV), report.to_key_values())?;

    let balanced = pipeline::balance(&samples, args.per_class, args.seed).map_err(data)?;
    let training = pipeline::to_training_set(&balanced).map_err(data)?;
    let execution = if args.serial {
        ccf::Execution::Serial
    } else {
        ccf::Execution::Parallel
    };
    let forest =
        ccf::train_forest_with(&training, &args.forest_params(), execution).map_err(data)?;

    let model_path = args.out_dir.join(MODEL_FILE);
    write_file(&model_path, ccf::serialize(&forest))?;
    Ok(TrainOutcome {
        forest,
        report,
        model_path,
    })
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub const CLASSMAP_PNG: &str = "classmap.png";
pub const CLASSMAP_GRID: &str = "classmap.grid";

pub fn load_model(path: &Path) -> Result<Forest, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    ccf::deserialize(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_classify(args: &ClassifyArgs) -> Result<evalmap::ClassMap, CliError> {
    require_file(&args.model)?;
    args.scene.check()?;
    prepare_out_dir(&args.out_dir)?;

    let forest = load_model(&args.model)?;
    let scene = args.scene.load()?;
    let map = evalmap::classify_scene(&forest, &scene).map_err(data)?;

    write_file(&args.out_dir.join(CLASSMAP_PNG), evalmap::render_png(&map))?;
    let mut grid = Vec::new();
    evalmap::write_class_grid(&map, &mut grid).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&args.out_dir.join(CLASSMAP_GRID), grid)?;
    Ok(map)
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Class grid written by `classify`.
    #[arg(long)]
    pub grid: PathBuf,
    /// 8-bit grayscale PNG: 255 informal, 0 environment, 128 unknown.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub const EVAL_TABLE: &str = "eval.txt";
pub const EVAL_KV: &str = "eval.kv";

pub fn load_grid(path: &Path) -> Result<evalmap::ClassMap, CliError> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    evalmap::read_class_grid(file).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvalReport, CliError> {
    require_file(&args.grid)?;
    require_file(&args.mask)?;
    prepare_out_dir(&args.out_dir)?;

    let map = load_grid(&args.grid)?;
    let mask = geodata::load_mask(&args.mask).map_err(data)?;
    let report = evalmap::evaluate_against_mask(&map, &mask).map_err(data)?;
    write_file(&args.out_dir.join(EVAL_TABLE), report.to_table())?;
    write_file(&args.out_dir.join(EVAL_KV), report.to_key_values())?;
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value = "quadrants")]
    pub layout: Layout,
    /// Fraction of mask pixels marked unknown.
    #[arg(long, default_value_t = 0.3)]
    pub unknown_fraction: f64,
    /// Points per class as environment,metal,shingles,thatch.
    #[arg(long, value_delimiter = ',', default_value = "30,40,25,20")]
    pub points_per_class: Vec<usize>,
    /// Prototype table replacing the shipped fixture.
    #[arg(long)]
    pub prototypes: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn new(out_dir: PathBuf) -> Self {
        SynthArgs {
            out_dir,
            width: 64,
            height: 64,
            layout: Layout::Quadrants,
            unknown_fraction: 0.3,
            points_per_class: vec![30, 40, 25, 20],
            prototypes: None,
            seed: 0,
        }
    }
}

/// Mixed into the synth seed so point placement does not reuse the scene stream.
const POINTS_SEED_SALT: u64 = 0x005e_ed0f_9015;

pub const SYNTH_SCENE: &str = "scene.hdr";
pub const SYNTH_SCENE_DATA: &str = "scene.bsq";
pub const SYNTH_POINTS: &str = "points.csv";
pub const SYNTH_ENV_POINTS: &str = "env_points.csv";
pub const SYNTH_MASK: &str = "mask.png";
pub const SYNTH_TRUTH_GRID: &str = "truth.grid";
pub const SYNTH_TRUTH_PNG: &str = "truth.png";

pub fn cmd_synth(args: &SynthArgs) -> Result<synth::SyntheticScene, CliError> {
    let counts: [usize; 4] = args.points_per_class.as_slice().try_into().map_err(|_| {
        CliError::Data(format!(
            "--points-per-class needs 4 values, got {}",
            args.points_per_class.len()
        ))
    })?;
    if let Some(p) = &args.prototypes {
        require_file(p)?;
    }
    if args.width == 0 || args.height == 0 {
        return Err(CliError::Data("width and height must be positive".into()));
    }
    prepare_out_dir(&args.out_dir)?;

    let prototypes = match &args.prototypes {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            synth::parse_prototypes(&text).map_err(data)?
        }
        None => synth::default_prototypes(),
    };
    let layout = synth::layout_grid(args.layout, args.width, args.height);
    let generated = synth::generate_scene(
        args.width,
        args.height,
        &layout,
        &prototypes,
        args.unknown_fraction,
        args.seed,
    )
    .map_err(data)?;
    let gt: GeoTransform = generated.scene.geotransform;
    let (survey, env) =
        synth::generate_points(&generated.truth, &gt, counts, args.seed ^ POINTS_SEED_SALT)
            .map_err(data)?;

    let dir = &args.out_dir;
    let internal = |e: geodata::GeoError| CliError::Internal(e.to_string());
    geodata::write_scene(
        &generated.scene,
        &dir.join(SYNTH_SCENE),
        &dir.join(SYNTH_SCENE_DATA),
    )
    .map_err(internal)?;
    geodata::write_points(&survey, &dir.join(SYNTH_POINTS)).map_err(internal)?;
    geodata::write_points(&env, &dir.join(SYNTH_ENV_POINTS)).map_err(internal)?;
    geodata::write_mask(&generated.mask, &dir.join(SYNTH_MASK)).map_err(internal)?;
    let mut grid = Vec::new();
    evalmap::write_class_grid(&generated.truth, &mut grid)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&dir.join(SYNTH_TRUTH_GRID), grid)?;
    write_file(
        &dir.join(SYNTH_TRUTH_PNG),
        evalmap::render_png(&generated.truth),
    )?;
    Ok(generated)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let out = cmd_train(&args)?;
            print!("{}", out.report.to_table());
            println!(
                "trained {} trees ({} mode) -> {}",
                out.forest.trees.len(),
                out.forest.params.mode,
                out.model_path.display()
            );
        }
        Command::Classify(args) => {
            let map = cmd_classify(&args)?;
            let invalid = map.valid.iter().filter(|v| !**v).count();
            println!(
                "classified {}x{} pixels ({invalid} invalid) -> {}",
                map.width,
                map.height,
                args.out_dir.join(CLASSMAP_PNG).display()
            );
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args)?;
            print!("{}", report.to_table());
        }
        Command::Synth(args) => {
            cmd_synth(&args)?;
            println!("wrote synthetic fixture set to {}", args.out_dir.display());
        }
    }
    Ok(())
}

/// Parse arguments, run, and map the outcome onto the exit-code contract.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
