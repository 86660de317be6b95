//! Argument parsing: flags override config-file values, which override
//! built-in defaults.

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ifront_core::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Rates,
    Front { y_max: Option<f64>, alpha_tol: f64 },
    Scan { c_min: f64, c_max: f64, n: usize, y_max: Option<f64>, alpha_tol: f64 },
    Asym { alpha: Option<f64>, compare: bool, points: usize, y_max: Option<f64>, alpha_tol: f64 },
    Effdiff { y_max: Option<f64>, alpha_tol: f64, approx: bool },
    Pde { half_width: f64, nx: usize, t_end: f64, frame_dt: f64 },
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub command: Command,
    /// `c` is unused by `pde`, which takes it as 1.
    pub params: ModelParams,
    pub out: Option<PathBuf>,
    pub format: Format,
}

/// Usage error: one line, exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    Usage(UsageError),
    Help(String),
}

impl From<UsageError> for ParseError {
    fn from(e: UsageError) -> Self {
        ParseError::Usage(e)
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Parser, Debug)]
#[command(name = "ifront", about = "Invasion fronts of a degenerate cross-diffusion tumor model", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug, Clone)]
struct Model {
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct Output {
    /// Output file (directory for `pde`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Flat `key = value` file with defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Shooting {
    #[arg(long = "y-max")]
    y_max: Option<f64>,
    #[arg(long = "alpha-tol", default_value_t = 1e-8)]
    alpha_tol: f64,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Print the linearization rates as JSON.
    Rates {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        output: Output,
    },
    /// Compute one front: profile CSV plus diagnostics JSON.
    Front {
        #[command(flatten)]
        model: Model,
        #[command(flatten)]
        shooting: Shooting,
        #[command(flatten)]
        output: Output,
    },
    /// Compute fronts over a range of speeds, one JSON record per speed.
    Scan {
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        cmin: f64,
        #[arg(long)]
        cmax: f64,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        shooting: Shooting,
        #[command(flatten)]
        output: Output,
    },
    /// Sharp small-speed profile, optionally beside the computed front.
    Asym {
        #[command(flatten)]
        model: Model,
        /// Manual calibration constant instead of the speed relation.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        compare: bool,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[command(flatten)]
        shooting: Shooting,
        #[command(flatten)]
        output: Output,
    },
    /// Effective diffusion curve `(V, 1 - U)` along the front.
    Effdiff {
        #[command(flatten)]
        model: Model,
        /// Use the small-speed approximation instead of the computed front.
        #[arg(long)]
        approx: bool,
        #[command(flatten)]
        shooting: Shooting,
        #[command(flatten)]
        output: Output,
    },
    /// Direct simulation from Heaviside data on `[-L, L]`.
    Pde {
        #[arg(long)]
        d: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long = "L", default_value_t = 100.0)]
        half_width: f64,
        #[arg(long, default_value_t = 2001)]
        nx: usize,
        #[arg(long, default_value_t = 60.0)]
        tend: f64,
        #[arg(long = "frame-dt", default_value_t = 5.0)]
        frame_dt: f64,
        #[command(flatten)]
        output: Output,
    },
}

/// Parse a flat `key = value` file into flags; `true`/`false` toggle
/// switches.
pub fn config_flags(text: &str) -> Result<Vec<String>, UsageError> {
    let mut flags = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key == "config" {
            return Err(UsageError(format!("config line {}: invalid key `{key}`", n + 1)));
        }
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            _ => {
                flags.push(format!("--{key}"));
                flags.push(value.to_string());
            }
        }
    }
    Ok(flags)
}

fn first_line(e: &clap::Error) -> String {
    e.to_string().lines().next().unwrap_or("invalid arguments").to_string()
}

fn model(d: Option<f64>, r: Option<f64>, c: Option<f64>) -> Result<ModelParams, UsageError> {
    let need = |v: Option<f64>, flag: &str| v.ok_or_else(|| UsageError(format!("error: missing required flag --{flag}")));
    let (d, r, c) = (need(d, "d")?, need(r, "r")?, need(c, "c")?);
    ModelParams::new(d, r, c).map_err(|e| UsageError(format!("error: invalid model flags --d/--r/--c: {e}")))
}

fn positive(v: f64, flag: &str) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(UsageError(format!("error: --{flag} must be positive, got {v}")))
    }
}

/// `argv` starts with the program name; `config` is the text of a config
/// file, if any. A `--config` flag in `argv` is read when `config` is `None`.
pub fn parse(argv: &[String], config: Option<&str>) -> Result<RunPlan, UsageError> {
    match parse_or_help(argv, config) {
        Ok(plan) => Ok(plan),
        Err(ParseError::Usage(e)) => Err(e),
        Err(ParseError::Help(text)) => Err(UsageError(text)),
    }
}

/// As [`parse`], separating requested help text from usage errors.
pub fn parse_or_help(argv: &[String], config: Option<&str>) -> Result<RunPlan, ParseError> {
    use clap::error::ErrorKind;
    if argv.len() >= 2 && matches!(argv[1].as_str(), "-h" | "--help" | "help" | "-V" | "--version") {
        return match Cli::try_parse_from(argv) {
            Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
                Err(ParseError::Help(e.to_string()))
            }
            Err(e) => Err(UsageError(first_line(&e)).into()),
            Ok(_) => Err(UsageError("error: missing subcommand".into()).into()),
        };
    }
    if argv.len() < 2 {
        return Err(UsageError("error: missing subcommand (rates, front, scan, asym, effdiff, pde)".into()).into());
    }
    let from_file;
    let config = match config {
        Some(text) => Some(text),
        None => match argv.iter().position(|a| a == "--config") {
            Some(i) => {
                let path = argv
                    .get(i + 1)
                    .ok_or_else(|| UsageError("error: --config needs a path".into()))?;
                from_file = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("error: --config {path}: {e}")))?;
                Some(from_file.as_str())
            }
            None => None,
        },
    };
    let mut args = vec![argv[0].clone(), argv[1].clone()];
    if let Some(text) = config {
        args.extend(config_flags(text)?);
    }
    args.extend(argv[2..].iter().cloned());
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) if e.kind() == ErrorKind::DisplayHelp => return Err(ParseError::Help(e.to_string())),
        Err(e) => return Err(UsageError(first_line(&e)).into()),
    };

    let plan = match cli.command {
        Sub::Rates { model: m, output } => RunPlan {
            command: Command::Rates,
            params: model(m.d, m.r, m.c)?,
            out: output.out,
            format: output.format,
        },
        Sub::Front { model: m, shooting, output } => RunPlan {
            command: Command::Front {
                y_max: shooting.y_max.map(|v| positive(v, "y-max")).transpose()?,
                alpha_tol: positive(shooting.alpha_tol, "alpha-tol")?,
            },
            params: model(m.d, m.r, m.c)?,
            out: output.out,
            format: output.format,
        },
        Sub::Scan { d, r, cmin, cmax, n, shooting, output } => {
            let c_min = positive(cmin, "cmin")?;
            let c_max = positive(cmax, "cmax")?;
            if c_max < c_min || n == 0 || (n == 1 && c_max != c_min) {
                return Err(UsageError("error: --cmin/--cmax/--n need cmin <= cmax and n >= 2 (n = 1 only when cmin = cmax)".into()).into());
            }
            RunPlan {
                command: Command::Scan {
                    c_min,
                    c_max,
                    n,
                    y_max: shooting.y_max.map(|v| positive(v, "y-max")).transpose()?,
                    alpha_tol: positive(shooting.alpha_tol, "alpha-tol")?,
                },
                params: model(d, r, Some(c_min))?,
                out: output.out,
                format: output.format,
            }
        }
        Sub::Asym { model: m, alpha, compare, points, shooting, output } => {
            if points < 2 {
                return Err(UsageError("error: --points must be at least 2".into()).into());
            }
            RunPlan {
                command: Command::Asym {
                    alpha: alpha.map(|a| positive(a, "alpha")).transpose()?,
                    compare,
                    points,
                    y_max: shooting.y_max.map(|v| positive(v, "y-max")).transpose()?,
                    alpha_tol: positive(shooting.alpha_tol, "alpha-tol")?,
                },
                params: model(m.d, m.r, m.c)?,
                out: output.out,
                format: output.format,
            }
        }
        Sub::Effdiff { model: m, approx, shooting, output } => RunPlan {
            command: Command::Effdiff {
                y_max: shooting.y_max.map(|v| positive(v, "y-max")).transpose()?,
                alpha_tol: positive(shooting.alpha_tol, "alpha-tol")?,
                approx,
            },
            params: model(m.d, m.r, m.c)?,
            out: output.out,
            format: output.format,
        },
        Sub::Pde { d, r, half_width, nx, tend, frame_dt, output } => {
            if nx < 16 {
                return Err(UsageError(format!("error: --nx must be at least 16, got {nx}")).into());
            }
            RunPlan {
                command: Command::Pde {
                    half_width: positive(half_width, "L")?,
                    nx,
                    t_end: positive(tend, "tend")?,
                    frame_dt: positive(frame_dt, "frame-dt")?,
                },
                params: model(d, r, Some(1.0))?,
                out: output.out,
                format: output.format,
            }
        }
    };
    Ok(plan)
}
