use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use pestctl_core::simulator::IntegratorConfig;
use pestctl_core::{Model, NormalizedParams, OriginalParams, State};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "pestctl",
    version,
    about = "Equilibria, bifurcations and simulations of a pest/nematode release model",
    allow_negative_numbers = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibria, classes, thresholds and bifurcation reports.
    Analyze(AnalyzeArgs),
    /// Integrate one trajectory and write it as CSV.
    Simulate(SimulateArgs),
    /// Integrate a batch of trajectories into an output directory.
    Portrait(PortraitArgs),
    /// Tabulate equilibria and regimes over a list of release rates.
    Sweep(SweepArgs),
    /// Release thresholds in original units.
    Plan(PlanArgs),
}

/// Model parameters without the release rate. Normalized units are the
/// default; `-r`/`-c` only make sense with `--original`.
#[derive(Debug, Clone, Args)]
pub struct BaseParams {
    /// Interpret parameters in original units (requires -r and -c).
    #[arg(long, conflicts_with = "normalized")]
    pub original: bool,
    /// Interpret parameters in normalized units (the default).
    #[arg(long)]
    pub normalized: bool,
    /// Pest birth rate.
    #[arg(short = 'r')]
    pub r: Option<f64>,
    /// Inhibition level.
    #[arg(short = 'k')]
    pub k: f64,
    /// Predation rate.
    #[arg(short = 'c')]
    pub c: Option<f64>,
    /// Nematode death rate.
    #[arg(short = 'm')]
    pub m: f64,
}

impl BaseParams {
    pub fn model(&self, u: f64) -> Result<Model, CliError> {
        let original =
            self.original || (!self.normalized && (self.r.is_some() || self.c.is_some()));
        if original {
            let (Some(r), Some(c)) = (self.r, self.c) else {
                return Err(CliError::Usage("original units need both -r and -c".into()));
            };
            let p = OriginalParams::new(r, self.k, c, self.m, u).map_err(CliError::usage)?;
            Ok(Model::Original(p))
        } else {
            if self.r.is_some() || self.c.is_some() {
                return Err(CliError::Usage(
                    "-r and -c are original-unit parameters and cannot be combined with --normalized".into(),
                ));
            }
            let p = NormalizedParams::new(self.k, self.m, u).map_err(CliError::usage)?;
            Ok(Model::Normalized(p))
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for data files and the run manifest.
    #[arg(long, env = "PESTCTL_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Final time of each integration.
    #[arg(long, default_value_t = 500.0)]
    pub t_end: f64,
    /// Relative error tolerance per step.
    #[arg(long, default_value_t = 1e-9)]
    pub rel_tol: f64,
    /// Absolute error tolerance per step.
    #[arg(long, default_value_t = 1e-11)]
    pub abs_tol: f64,
    /// Largest accepted step.
    #[arg(long, default_value_t = 1.0)]
    pub max_step: f64,
    /// Spacing of the output samples.
    #[arg(long, default_value_t = 0.05)]
    pub dt: f64,
}

impl SolverArgs {
    pub fn config(&self) -> Result<IntegratorConfig, CliError> {
        let cfg = IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            t_end: self.t_end,
            dense_output_dt: self.dt,
        };
        cfg.validate().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub params: BaseParams,
    /// Release rate.
    #[arg(short = 'u')]
    pub u: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: BaseParams,
    /// Release rate.
    #[arg(short = 'u')]
    pub u: f64,
    /// Initial pest density.
    #[arg(long)]
    pub x0: f64,
    /// Initial nematode density.
    #[arg(long)]
    pub y0: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also draw the trajectory as SVG (needs an output directory).
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
#[command(group(ArgGroup::new("initial").required(true).multiple(true).args(["ic", "grid"])))]
pub struct PortraitArgs {
    #[command(flatten)]
    pub params: BaseParams,
    /// Release rate.
    #[arg(short = 'u')]
    pub u: f64,
    /// Initial condition `X,Y`; repeatable.
    #[arg(long, value_parser = parse_point)]
    pub ic: Vec<State>,
    /// Grid of initial conditions `NXxNY` over --x-range and --y-range.
    #[arg(long, value_parser = parse_grid, requires_all = ["x_range", "y_range"])]
    pub grid: Option<(usize, usize)>,
    /// Grid bounds `LO:HI` in x.
    #[arg(long, value_parser = parse_interval)]
    pub x_range: Option<(f64, f64)>,
    /// Grid bounds `LO:HI` in y.
    #[arg(long, value_parser = parse_interval)]
    pub y_range: Option<(f64, f64)>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Also draw all trajectories as one SVG.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl PortraitArgs {
    /// Explicit points first, then the grid row by row.
    pub fn initial_conditions(&self) -> Vec<State> {
        let mut out = self.ic.clone();
        if let (Some((nx, ny)), Some((x0, x1)), Some((y0, y1))) =
            (self.grid, self.x_range, self.y_range)
        {
            let at = |lo: f64, hi: f64, i: usize, n: usize| {
                if n == 1 {
                    0.5 * (lo + hi)
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            };
            for j in 0..ny {
                for i in 0..nx {
                    out.push(State::new(at(x0, x1, i, nx), at(y0, y1, j, ny)));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
#[command(group(ArgGroup::new("release").required(true).args(["u_list", "u_range"])))]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: BaseParams,
    /// Comma-separated release rates.
    #[arg(long, value_delimiter = ',')]
    pub u_list: Vec<f64>,
    /// Inclusive range `START:STOP:STEP`.
    #[arg(long, value_parser = parse_range)]
    pub u_range: Option<ReleaseRange>,
    /// Table format written to stdout or the output directory.
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Simulate each row and compare the attractor with the regime.
    #[arg(long)]
    pub spot_check: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

impl SweepArgs {
    pub fn release_rates(&self) -> Vec<f64> {
        match &self.u_range {
            Some(range) => range.0.clone(),
            None => self.u_list.clone(),
        }
    }
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct PlanArgs {
    /// Pest birth rate.
    #[arg(short = 'r')]
    pub r: f64,
    /// Inhibition level.
    #[arg(short = 'k')]
    pub k: f64,
    /// Predation rate.
    #[arg(short = 'c')]
    pub c: f64,
    /// Nematode death rate.
    #[arg(short = 'm')]
    pub m: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_point(s: &str) -> Result<State, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    State::first_quadrant(parse_f64(x)?, parse_f64(y)?).map_err(|e| e.to_string())
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let (lo, hi) = (parse_f64(lo)?, parse_f64(hi)?);
    if lo < 0.0 || hi < lo {
        return Err(format!("need 0 <= LO <= HI, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (nx, ny) = s.split_once('x').ok_or("expected NXxNY")?;
    let n = |v: &str| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("`{v}` is not a positive count")),
    };
    Ok((n(nx)?, n(ny)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseRange(pub Vec<f64>);

/// `START:STOP:STEP`, both ends included when STOP lies on the lattice.
pub fn parse_range(s: &str) -> Result<ReleaseRange, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err("expected START:STOP:STEP".into());
    };
    let decimals = [start, step]
        .iter()
        .map(|p| match p.trim().split_once('.') {
            Some((_, frac)) if frac.chars().all(|c| c.is_ascii_digit()) => Some(frac.len()),
            Some(_) => None,
            None => p
                .chars()
                .all(|c| c.is_ascii_digit() || c == '-')
                .then_some(0),
        })
        .try_fold(0, |acc, d| d.map(|d| acc.max(d)));
    let (start, stop, step) = (parse_f64(start)?, parse_f64(stop)?, parse_f64(step)?);
    if step <= 0.0 || stop < start {
        return Err(format!("need STEP > 0 and STOP >= START, got {s}"));
    }
    let steps = ((stop - start) / step + 1e-9).floor();
    if steps > 1e6 {
        return Err(format!("range {s} has too many values"));
    }
    // plain decimal inputs give lattice points written with the same digits
    let snap = |v: f64| match decimals {
        Some(d) => format!("{v:.d$}").parse().unwrap_or(v),
        None => v,
    };
    Ok(ReleaseRange(
        (0..=steps as usize)
            .map(|i| snap(start + i as f64 * step))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusive_range() {
        let v = parse_range("0.01:0.3:0.01").unwrap().0;
        assert_eq!(v.len(), 30);
        assert_eq!(v[5], 0.06);
        assert_eq!(v[29], 0.3);
        assert!((parse_range("0:1e-1:2.5e-2").unwrap().0[3] - 0.075).abs() < 1e-15);
        assert_eq!(parse_range("1:1:0.5").unwrap().0, vec![1.0]);
    }

    #[test]
    fn malformed_ranges() {
        for s in [
            "0.1:0.2",
            "0.1:0.2:0",
            "0.3:0.1:0.1",
            "a:1:0.1",
            "0:1:0.1:2",
        ] {
            assert!(parse_range(s).is_err(), "{s}");
        }
    }

    #[test]
    fn points_and_grids() {
        assert_eq!(parse_point("0.2,0.8").unwrap(), State::new(0.2, 0.8));
        assert!(parse_point("-0.2,0.8").is_err());
        assert_eq!(parse_grid("3x2").unwrap(), (3, 2));
        assert!(parse_grid("0x2").is_err());
    }
}
