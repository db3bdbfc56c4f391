use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, Parser, Subcommand};
use geoseg::segmenter::{SolverConfig, UStep};
use geoseg::unary::UnaryMode;
use serde_json::{Map, Value};

pub const CONFIG_ENV: &str = "GEOSEG_CONFIG";

fn defaults() -> SolverConfig {
    SolverConfig::default()
}

#[derive(Debug, Parser)]
#[command(name = "geoseg", version, about = "Interactive binary image segmentation from scribbles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one image from a scribble image (green = foreground, red = background).
    Segment(SegmentArgs),
    /// Evaluate a dataset laid out as images/, scribbles/, gt/.
    Eval(EvalArgs),
    /// Evaluate a dataset once per superpixel count.
    AblateK(AblateKArgs),
    /// Evaluate a dataset with and without bilateral smoothing.
    AblateFbs(EvalArgs),
    /// Print superpixel and bilateral grid statistics for an image.
    GridInfo(GridInfoArgs),
}

/// Solver settings. Resolution order: built-in defaults, then the config
/// file, then flags given on the command line.
#[derive(Debug, Clone, Args)]
pub struct SolverFlags {
    /// Pairwise smoothing weight
    #[arg(long, default_value_t = defaults().lambda)]
    pub lambda: f64,
    /// Coupling weight between the label field and its smoothed copy
    #[arg(long, default_value_t = defaults().theta)]
    pub theta: f64,
    /// Target number of superpixels
    #[arg(long, default_value_t = defaults().k_target)]
    pub superpixels: usize,
    /// Spatial bandwidth of the bilateral grid, in pixels
    #[arg(long, default_value_t = defaults().sigma_xy)]
    pub sigma_xy: f64,
    /// Luma bandwidth of the bilateral grid
    #[arg(long, default_value_t = defaults().sigma_l)]
    pub sigma_l: f64,
    /// Chroma bandwidth of the bilateral grid
    #[arg(long, default_value_t = defaults().sigma_uv)]
    pub sigma_uv: f64,
    /// Cut applied to the relaxed labels
    #[arg(long, default_value_t = defaults().threshold)]
    pub threshold: f64,
    /// Unary term: geodesic, gaussian or histogram
    #[arg(long, default_value_t = defaults().unary_mode)]
    pub unary: UnaryMode,
    /// Per-pixel label update: closed_form or sgd
    #[arg(long, default_value_t = defaults().u_step)]
    pub u_step: UStep,
    /// Config file (JSON object or key = value lines); falls back to $GEOSEG_CONFIG
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Fail with exit code 4 when a solver does not converge
    #[arg(long)]
    pub strict: bool,
}

/// Flag id and the config key it sets.
const FLAG_KEYS: [(&str, &str); 9] = [
    ("lambda", "lambda"),
    ("theta", "theta"),
    ("superpixels", "k_target"),
    ("sigma_xy", "sigma_xy"),
    ("sigma_l", "sigma_l"),
    ("sigma_uv", "sigma_uv"),
    ("threshold", "threshold"),
    ("unary", "unary_mode"),
    ("u_step", "u_step"),
];

impl SolverFlags {
    /// Values of the flags that were typed on the command line.
    pub fn explicit(&self, matches: &ArgMatches) -> Map<String, Value> {
        let mut out = Map::new();
        for (id, key) in FLAG_KEYS {
            if matches.value_source(id) != Some(ValueSource::CommandLine) {
                continue;
            }
            let value = match id {
                "lambda" => Value::from(self.lambda),
                "theta" => Value::from(self.theta),
                "superpixels" => Value::from(self.superpixels),
                "sigma_xy" => Value::from(self.sigma_xy),
                "sigma_l" => Value::from(self.sigma_l),
                "sigma_uv" => Value::from(self.sigma_uv),
                "threshold" => Value::from(self.threshold),
                "unary" => Value::from(self.unary.to_string()),
                "u_step" => Value::from(self.u_step.to_string()),
                _ => unreachable!(),
            };
            out.insert(key.to_string(), value);
        }
        out
    }

    pub fn config_path(&self) -> Option<PathBuf> {
        self.config
            .clone()
            .or_else(|| std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Input image (PNG or PPM)
    pub image: PathBuf,
    /// Scribble image with the same dimensions
    pub scribbles: PathBuf,
    /// Output mask PNG
    #[arg(short, long, default_value = "mask.png")]
    pub out: PathBuf,
    /// Write superpixels, unary maps and traces; defaults to <out>.debug/
    #[arg(long, value_name = "DIR", num_args = 0..=1, default_missing_value = "")]
    pub dump_debug: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct EvalOutputArgs {
    /// Concurrent images; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Boundary matching radius in pixels
    #[arg(long, default_value_t = 2.0)]
    pub boundary_tol: f64,
    /// Leave gray ground-truth pixels out of the region metrics
    #[arg(long)]
    pub exclude_unknown: bool,
    /// Leave scribbled pixels out of the region metrics
    #[arg(long)]
    pub exclude_seeds: bool,
    /// Directory for report files
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset root
    pub root: PathBuf,
    #[command(flatten)]
    pub output: EvalOutputArgs,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct AblateKArgs {
    /// Dataset root
    pub root: PathBuf,
    /// Superpixel counts, ascending
    #[arg(long, value_delimiter = ',', default_values_t = [400, 800, 1600, 3200])]
    pub k_list: Vec<usize>,
    #[command(flatten)]
    pub output: EvalOutputArgs,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct GridInfoArgs {
    /// Input image (PNG or PPM)
    pub image: PathBuf,
    #[command(flatten)]
    pub solver: SolverFlags,
}
