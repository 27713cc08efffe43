//! Subcommand drivers behind the `coldgen` binary.
//!
//! Exit codes: 0 success, 1 configuration/input/I-O error, 2 thermal solver
//! did not converge (artifacts are still written), 3 the reaction-diffusion
//! state went non-finite.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::design::{
    compare_designs, generate_baseline_parallel, run_generative_design, DesignError, DesignReport,
};
use crate::geometry::{build_heat_flux_map, BoardLayout};
use crate::grid::{Grid, ScalarField};
use crate::io::{
    export_field_csv, export_heatmap, load_config, read_field_csv, write_report_json,
    ComparisonDocument, ConfigError, DesignDocument, ExportError, RunConfig,
};
use crate::rd::{ChannelMask, RdError};
use crate::thermal::{compute_metrics, solve_mask, ThermalError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NONCONVERGED: i32 = 2;
pub const EXIT_RD_ABORT: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("cannot create output directory {path}: {source}")]
    OutDir {
        path: String,
        source: std::io::Error,
    },
    #[error("mask {path}: {msg}")]
    Mask { path: String, msg: String },
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        Self::Design(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Design(DesignError::Rd(RdError::NonFinite { .. })) => EXIT_RD_ABORT,
            CliError::Design(DesignError::Thermal(ThermalError::NoSink { .. })) => {
                EXIT_NONCONVERGED
            }
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Baseline,
    Generate,
    Solve,
    Compare,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// External mask CSV for `solve`.
    pub mask: Option<PathBuf>,
}

struct Context {
    config: RunConfig,
    grid: Grid,
    layout: BoardLayout,
    out: PathBuf,
}

impl Context {
    fn new(inv: &Invocation) -> Result<Self, CliError> {
        let mut config = match &inv.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = inv.seed {
            config.loop_config.rng_seed = seed;
        }
        let grid = config.grid()?;
        let layout = config.layout(&grid)?;
        fs::create_dir_all(&inv.out).map_err(|source| CliError::OutDir {
            path: inv.out.display().to_string(),
            source,
        })?;
        Ok(Self {
            config,
            grid,
            layout,
            out: inv.out.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_temperature(&self, stem: &str, t: &ScalarField) -> Result<(), CliError> {
        export_field_csv(t, self.path(&format!("{stem}_temperature.csv")))?;
        if !self.config.output.no_heatmaps {
            let range = self.config.output.heatmap_range.map(|[lo, hi]| (lo, hi));
            export_heatmap(t, self.path(&format!("{stem}_temperature.pgm")), range)?;
        }
        Ok(())
    }
}

fn summary(phase: &str, max_c: f64, mean_c: f64, fill: f64, converged: bool) {
    println!(
        "{phase}: max {max_c:.2} C, mean {mean_c:.2} C, fill {fill:.3}{}",
        if converged {
            ""
        } else {
            " (solver did not converge)"
        }
    );
}

fn baseline_mask(ctx: &Context) -> Result<ChannelMask, CliError> {
    let b = &ctx.config.baseline;
    Ok(generate_baseline_parallel(
        &ctx.grid,
        &ctx.layout,
        b.channel_width,
        b.pitch,
    )?)
}

/// Returns whether the solve converged.
fn run_baseline(ctx: &Context) -> Result<(ChannelMask, bool), CliError> {
    let mask = baseline_mask(ctx)?;
    let converged = solve_and_write(ctx, "baseline", &mask)?;
    Ok((mask, converged))
}

fn solve_and_write(ctx: &Context, stem: &str, mask: &ChannelMask) -> Result<bool, CliError> {
    let q = build_heat_flux_map(&ctx.grid, &ctx.layout).map_err(DesignError::from)?;
    let solved = solve_mask(
        &q,
        mask,
        &ctx.config.material,
        &ctx.config.loop_config.solver,
    )?;
    let metrics = compute_metrics(&solved.temperature, &ctx.layout);
    export_field_csv(&mask.to_field(), ctx.path(&format!("{stem}_mask.csv")))?;
    ctx.write_temperature(stem, &solved.temperature)?;
    let kind = if stem == "baseline" {
        "baseline"
    } else {
        "external"
    };
    let doc = DesignDocument::fixed_mask(kind, mask, &solved, metrics, &ctx.config);
    write_report_json(&doc, ctx.path(&format!("{stem}_report.json")))?;
    summary(
        stem,
        doc.max_c,
        doc.mean_c,
        doc.fill_fraction,
        doc.converged,
    );
    Ok(solved.converged)
}

fn run_generate(ctx: &Context) -> Result<DesignReport, CliError> {
    let c = &ctx.config;
    let report = run_generative_design(&ctx.grid, &ctx.layout, &c.material, &c.rd, &c.loop_config)?;
    export_field_csv(&report.mask.to_field(), ctx.path("generative_mask.csv"))?;
    export_field_csv(&report.v, ctx.path("generative_v.csv"))?;
    ctx.write_temperature("generative", &report.temperature)?;
    let doc = DesignDocument::generative(&report, c);
    write_report_json(&doc, ctx.path("generative_report.json"))?;
    summary(
        "generative",
        report.metrics.max_c,
        report.metrics.mean_c,
        report.mask_fill_fraction,
        report.converged,
    );
    Ok(report)
}

fn run_compare(
    ctx: &Context,
    baseline: &ChannelMask,
    generative: &ChannelMask,
) -> Result<bool, CliError> {
    let c = &ctx.config;
    let cmp = compare_designs(
        baseline,
        generative,
        &ctx.grid,
        &ctx.layout,
        &c.material,
        &c.loop_config.solver,
    )?;
    let doc = ComparisonDocument::new(&cmp, c);
    write_report_json(&doc, ctx.path("comparison_report.json"))?;
    println!(
        "compare: baseline max {:.2} C / mean {:.2} C, generative max {:.2} C / mean {:.2} C, \
         delta max {:.2} K, delta mean {:.2} K",
        cmp.baseline.metrics.max_c,
        cmp.baseline.metrics.mean_c,
        cmp.candidate.metrics.max_c,
        cmp.candidate.metrics.mean_c,
        cmp.delta_max_c,
        cmp.delta_mean_c,
    );
    Ok(cmp.converged())
}

fn load_mask(path: &Path, grid: &Grid) -> Result<ChannelMask, CliError> {
    let field = read_field_csv(path)?;
    let err = |msg: &str| CliError::Mask {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    if field.grid() != grid {
        return Err(err("grid does not match the configured board"));
    }
    ChannelMask::from_field(&field).ok_or_else(|| err("values must be 0 or 1"))
}

fn execute(inv: &Invocation) -> Result<bool, CliError> {
    let ctx = Context::new(inv)?;
    log::info!(
        "grid {}x{} at {} m, {} chips",
        ctx.grid.nx(),
        ctx.grid.ny(),
        ctx.grid.dx(),
        ctx.layout.chips.len()
    );
    match inv.command {
        Command::Baseline => Ok(run_baseline(&ctx)?.1),
        Command::Generate => Ok(run_generate(&ctx)?.converged),
        Command::Solve => {
            let path = inv.mask.as_deref().ok_or_else(|| CliError::Mask {
                path: String::new(),
                msg: "solve needs --mask <csv>".into(),
            })?;
            let mask = load_mask(path, &ctx.grid)?;
            solve_and_write(&ctx, "solve", &mask)
        }
        Command::Compare => {
            let baseline = baseline_mask(&ctx)?;
            let c = &ctx.config;
            let report =
                run_generative_design(&ctx.grid, &ctx.layout, &c.material, &c.rd, &c.loop_config)?;
            run_compare(&ctx, &baseline, &report.mask)
        }
        Command::Pipeline => {
            let (baseline, base_ok) = run_baseline(&ctx)?;
            let report = run_generate(&ctx)?;
            let cmp_ok = run_compare(&ctx, &baseline, &report.mask)?;
            Ok(base_ok && report.converged && cmp_ok)
        }
    }
}

/// Runs one subcommand and returns the process exit code. Diagnostics go to
/// stderr, one summary line per phase to stdout.
pub fn run(inv: &Invocation) -> i32 {
    match execute(inv) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("warning: thermal solver hit its iteration cap; results are flagged");
            EXIT_NONCONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
