use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mnolytics::eval::{AggregationLevel, Scoring};
use mnolytics::learners::{CartParams, ForestParams, LearnerSpec, M5Params};
use mnolytics::trace::{Direction, RouteShape, Scenario};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "mnolytics", version, about = "Multi-operator drive-test analytics: traces, connectivity maps, operator selection and data-rate prediction")]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores. Results do
    /// not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file whose keys mirror the command-line flags (a `[command]`
    /// table per subcommand, shared keys at top level). Flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Join trace directories into a labeled samples CSV.
    Ingest(IngestArgs),
    /// Generate a synthetic multi-operator drive trace.
    Synth(SynthArgs),
    /// Check trace directories against the schema and value ranges.
    Validate(ValidateArgs),
    /// Build a multilayer connectivity map.
    BuildMap(BuildMapArgs),
    /// Per-instant best-operator selection and coverage table.
    Select(SelectArgs),
    /// Train a data-rate model and save it.
    Train(TrainArgs),
    /// Cross-validate learners per aggregation level.
    Eval(EvalArgs),
    /// Train on one group, test on every other group.
    Matrix(MatrixArgs),
    /// Mean decrease in impurity of a tree model.
    Importance(ImportanceArgs),
    /// Compare measured features against connectivity-map lookups across cell sizes.
    CmSweep(CmSweepArgs),
    /// Empirical CDF of a column, per operator.
    Ecdf(EcdfArgs),
    /// Predict data rates for a feature CSV with a saved model.
    Predict(PredictArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Validate(_) => "validate",
            Command::BuildMap(_) => "build-map",
            Command::Select(_) => "select",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Matrix(_) => "matrix",
            Command::Importance(_) => "importance",
            Command::CmSweep(_) => "cm-sweep",
            Command::Ecdf(_) => "ecdf",
            Command::Predict(_) => "predict",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Synth(a) => Some(a.seed),
            Command::Train(a) => Some(a.seed),
            Command::Eval(a) => Some(a.seed),
            Command::Matrix(a) => Some(a.seed),
            Command::Importance(a) => Some(a.seed),
            Command::CmSweep(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionFilter {
    All,
    Uplink,
    Downlink,
}

impl DirectionFilter {
    pub fn admits(self, d: Direction) -> bool {
        match self {
            DirectionFilter::All => true,
            DirectionFilter::Uplink => d == Direction::Uplink,
            DirectionFilter::Downlink => d == Direction::Downlink,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Trace directory, directory of trace directories, or samples CSV.
    #[arg(long, required = true, num_args = 1.., value_name = "PATH")]
    pub data: Vec<PathBuf>,
    /// Maximum |Δt| in seconds between a transmission and its context.
    #[arg(long, default_value_t = 5.0)]
    pub max_gap: f64,
    /// Keep only these operators.
    #[arg(long, value_delimiter = ',')]
    pub mno: Vec<String>,
    #[arg(long, value_enum, default_value_t = DirectionFilter::All)]
    pub direction: DirectionFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Linear,
    Cart,
    Rf,
    M5,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LearnerArgs {
    /// Learner.
    #[arg(long, value_enum, default_value_t = Learner::Rf)]
    pub model: Learner,
    #[command(flatten)]
    pub params: HyperParams,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HyperParams {
    /// Trees in a random forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Minimum training rows per leaf (cart, rf).
    #[arg(long, default_value_t = 5)]
    pub min_leaf: usize,
    /// Features tried per split (rf); default max(1, d/3).
    #[arg(long)]
    pub mtry: Option<usize>,
    /// Maximum tree depth (cart, rf); default unlimited.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// M5: nodes with fewer rows are not split.
    #[arg(long, default_value_t = 4)]
    pub min_split: usize,
    /// M5: stop splitting below this fraction of the root label SD.
    #[arg(long, default_value_t = 0.05)]
    pub sdr_stop: f64,
    /// M5: smoothing constant k (0 disables smoothing).
    #[arg(long, default_value_t = 15.0)]
    pub smoothing_k: f64,
    /// M5: keep the unpruned tree.
    #[arg(long)]
    pub no_prune: bool,
}

impl HyperParams {
    pub fn spec(&self, learner: Learner, seed: u64) -> LearnerSpec {
        match learner {
            Learner::Linear => LearnerSpec::Linear,
            Learner::Cart => LearnerSpec::Cart(CartParams { min_leaf: self.min_leaf, max_depth: self.max_depth }),
            Learner::Rf => LearnerSpec::Forest(ForestParams {
                n_trees: self.trees,
                min_leaf: self.min_leaf,
                features_per_split: self.mtry,
                max_depth: self.max_depth,
                bootstrap: true,
                seed,
            }),
            Learner::M5 => LearnerSpec::M5(M5Params {
                min_split: self.min_split,
                sdr_stop: self.sdr_stop,
                smoothing_k: self.smoothing_k,
                prune: !self.no_prune,
                ..M5Params::default()
            }),
        }
    }
}

impl LearnerArgs {
    pub fn spec(&self, seed: u64) -> LearnerSpec {
        self.params.spec(self.model, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringArg {
    Pooled,
    MeanOfFolds,
}

impl From<ScoringArg> for Scoring {
    fn from(s: ScoringArg) -> Scoring {
        match s {
            ScoringArg::Pooled => Scoring::Pooled,
            ScoringArg::MeanOfFolds => Scoring::MeanOfFolds,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    /// Cross-validation folds.
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Score pooled out-of-fold predictions or average per-fold scores.
    #[arg(long, value_enum, default_value_t = ScoringArg::Pooled)]
    pub scoring: ScoringArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Mno,
    Scenario,
    Enb,
    Cell,
}

impl From<Level> for AggregationLevel {
    fn from(l: Level) -> AggregationLevel {
        match l {
            Level::Mno => AggregationLevel::Mno,
            Level::Scenario => AggregationLevel::Scenario,
            Level::Enb => AggregationLevel::Enb,
            Level::Cell => AggregationLevel::Cell,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Samples CSV to write.
    #[arg(long, default_value = "samples.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteArg {
    Loop,
    OutAndBack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthDirection {
    Alternate,
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioArg {
    Campus,
    Urban,
    Suburban,
    Highway,
    Synthetic,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Scenario {
        match s {
            ScenarioArg::Campus => Scenario::Campus,
            ScenarioArg::Urban => Scenario::Urban,
            ScenarioArg::Suburban => Scenario::Suburban,
            ScenarioArg::Highway => Scenario::Highway,
            ScenarioArg::Synthetic => Scenario::Synthetic,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace directory to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub mnos: usize,
    /// Drive duration, seconds.
    #[arg(long, default_value_t = 600.0)]
    pub duration: f64,
    #[arg(long, value_enum, default_value_t = RouteArg::Loop)]
    pub route: RouteArg,
    /// Loop radius or out-and-back length, meters.
    #[arg(long, default_value_t = 800.0)]
    pub route_size: f64,
    /// Mean speed, km/h.
    #[arg(long, default_value_t = 50.0)]
    pub speed: f64,
    /// Seconds between transmissions.
    #[arg(long, default_value_t = 10.0)]
    pub tx_interval: f64,
    /// Relative SD of multiplicative label noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// SD of reported RSRP/SINR measurement error, dB.
    #[arg(long, default_value_t = 0.0)]
    pub kpi_noise: f64,
    #[arg(long, value_enum, default_value_t = SynthDirection::Alternate)]
    pub direction: SynthDirection,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Synthetic)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value = "0")]
    pub run_id: String,
}

impl SynthArgs {
    pub fn route_shape(&self) -> RouteShape {
        match self.route {
            RouteArg::Loop => RouteShape::Loop { radius_m: self.route_size },
            RouteArg::OutAndBack => RouteShape::OutAndBack { length_m: self.route_size },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ValidateArgs {
    /// Trace directories (or a directory of them).
    #[arg(long, required = true, num_args = 1.., value_name = "DIR")]
    pub trace: Vec<PathBuf>,
    /// Also write the violations as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildMapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cell edge, meters.
    #[arg(long, default_value_t = 10.0)]
    pub cell_size: f64,
    /// Grid origin; defaults to the south-west corner of the data.
    #[arg(long, requires = "origin_lon", allow_hyphen_values = true)]
    pub origin_lat: Option<f64>,
    #[arg(long, requires = "origin_lat", allow_hyphen_values = true)]
    pub origin_lon: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "map")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Trace directories (or a directory of them).
    #[arg(long, required = true, num_args = 1.., value_name = "DIR")]
    pub trace: Vec<PathBuf>,
    /// Alignment bucket, seconds.
    #[arg(long, default_value_t = 10.0)]
    pub bucket: f64,
    #[arg(long, default_value = "selection.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Learners to compare.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rf")]
    pub models: Vec<Learner>,
    #[command(flatten)]
    pub params: HyperParams,
    /// Aggregation levels.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mno,scenario,enb,cell")]
    pub levels: Vec<Level>,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature binned against the data rate in binned.csv.
    #[arg(long, default_value = "sinr")]
    pub bin_feature: String,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Output directory.
    #[arg(long, default_value = "eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Level whose groups form the matrix rows and columns.
    #[arg(long, value_enum, default_value_t = Level::Mno)]
    pub level: Level,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "matrix.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    /// Saved CART or forest model; without it a model is trained on --data.
    #[arg(long, conflicts_with = "data")]
    pub model_file: Option<PathBuf>,
    /// Trace directory, directory of trace directories, or samples CSV.
    #[arg(long, num_args = 1.., value_name = "PATH", required_unless_present = "model_file")]
    pub data: Vec<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub max_gap: f64,
    #[arg(long, value_delimiter = ',')]
    pub mno: Vec<String>,
    #[arg(long, value_enum, default_value_t = DirectionFilter::All)]
    pub direction: DirectionFilter,
    #[command(flatten)]
    pub params: HyperParams,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "importance.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CmSweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Cell sizes, meters (at least two).
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50,100")]
    pub sizes: Vec<f64>,
    /// Features replaced by map lookups.
    #[arg(long, value_delimiter = ',', default_value = "rsrp,rsrq,sinr,cqi,ta,freq")]
    pub kpis: Vec<String>,
    /// Ring radius, in cells, searched when a sample's own cell is empty.
    #[arg(long, default_value_t = 0)]
    pub fallback_radius: u32,
    /// Keep measured features and append the lookups.
    #[arg(long)]
    pub keep_measured: bool,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "cm_sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EcdfArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `label` (data rate) or a feature name.
    #[arg(long, default_value = "label")]
    pub column: String,
    #[arg(long, default_value = "ecdf.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    /// Saved model.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose header lists the model's features in order; empty = missing.
    #[arg(long)]
    pub features: PathBuf,
    /// Predictions CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
