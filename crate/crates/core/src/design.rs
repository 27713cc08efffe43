//! Closed-loop channel generation, the parallel-channel baseline, and the
//! side-by-side comparison of two masks.
//!
//! Each outer round thresholds the current V field, solves for temperature
//! on that mask, turns the temperature into a per-cell feed rate
//! `F = clamp(f (1 + alpha theta), f_min, f_max)` with `theta` the normalized
//! temperature excess, and advances the pinned Gray-Scott system under that
//! feed. Hot regions get more feed, which favors V growth there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_heat_flux_map, build_pinned_sets, BoardLayout, GeometryError};
use crate::grid::{Grid, ScalarField};
use crate::rd::{
    init_state, run_constrained, threshold_mask, ChannelMask, Feed, RDParams, RdError,
    DEFAULT_SEED_PROBABILITY,
};
use crate::thermal::{
    compute_metrics, solve_mask, MaterialParams, SolverOptions, ThermalError, ThermalMetrics,
};

#[derive(Debug, Error, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Rd(#[from] RdError),
    #[error("{0}")]
    Domain(String),
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub outer_rounds: usize,
    pub rd_steps_per_round: usize,
    /// Feedback gain on the normalized temperature excess.
    pub alpha: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Channel threshold on V.
    pub tau: f64,
    pub solver: SolverOptions,
    pub rng_seed: u64,
    /// Per-cell probability of a random V seed at start-up.
    pub seed_probability: f64,
    /// Stop early once the round-to-round change of max T drops below this
    /// many kelvin. Off when absent.
    pub plateau_tol: Option<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            outer_rounds: 10,
            rd_steps_per_round: 2000,
            alpha: 0.5,
            f_min: 0.03,
            f_max: 0.07,
            tau: 0.3,
            solver: SolverOptions::default(),
            rng_seed: DEFAULT_SEED,
            seed_probability: DEFAULT_SEED_PROBABILITY,
            plateau_tol: None,
        }
    }
}

impl LoopConfig {
    /// Returns the name of the first violated constraint, if any.
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        if self.outer_rounds < 1 {
            return Err(("outer_rounds", "must be >= 1"));
        }
        if self.rd_steps_per_round < 1 {
            return Err(("rd_steps_per_round", "must be >= 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(("alpha", "must be >= 0"));
        }
        if !(self.f_min > 0.0 && self.f_min.is_finite()) {
            return Err(("f_min", "must be > 0"));
        }
        if !(self.f_max >= self.f_min && self.f_max.is_finite()) {
            return Err(("f_max", "must be >= f_min"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(("tau", "must lie in (0, 1)"));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) {
            return Err(("solver.tol", "must be > 0"));
        }
        if self.solver.max_iter < 1 {
            return Err(("solver.max_iter", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.seed_probability) {
            return Err(("seed_probability", "must lie in [0, 1]"));
        }
        if let Some(tol) = self.plateau_tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(("plateau_tol", "must be > 0 when set"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Channel width, m.
    pub channel_width: f64,
    /// Center-to-center channel spacing, m.
    pub pitch: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            channel_width: 0.002,
            pitch: 0.004,
        }
    }
}

impl BaselineConfig {
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        if !(self.channel_width > 0.0 && self.channel_width.is_finite()) {
            return Err(("channel_width", "must be > 0"));
        }
        if !(self.pitch > self.channel_width && self.pitch.is_finite()) {
            return Err(("pitch", "must be > channel_width"));
        }
        Ok(())
    }
}

/// Straight channels along y from the inlet edge to the outlet edge. Column
/// `i` is a channel iff `i mod pitch_cells < width_cells`; the port spans on
/// both edges are always open.
pub fn generate_baseline_parallel(
    grid: &Grid,
    layout: &BoardLayout,
    channel_width: f64,
    pitch: f64,
) -> Result<ChannelMask, DesignError> {
    let width_cells = (channel_width / grid.dx()).round();
    let pitch_cells = (pitch / grid.dx()).round();
    if !(channel_width < pitch && width_cells >= 1.0 && width_cells < pitch_cells) {
        return Err(DesignError::Domain(format!(
            "parallel channels need 0 < width < pitch on the grid; got width {channel_width} m \
             ({width_cells} cells), pitch {pitch} m ({pitch_cells} cells)"
        )));
    }
    let (w, p) = (width_cells as usize, pitch_cells as usize);
    let top = grid.ny() - 1;
    let inlet = layout.inlet.start..=layout.inlet.end;
    let outlet = layout.outlet.start..=layout.outlet.end;
    Ok(ChannelMask::from_fn(*grid, |i, j| {
        i % p < w || (j == 0 && inlet.contains(&i)) || (j == top && outlet.contains(&i))
    }))
}

/// Per-cell feed rate from the temperature field.
pub fn thermal_feedback_field(t: &ScalarField, params: &RDParams, cfg: &LoopConfig) -> ScalarField {
    let (lo, hi) = (t.min(), t.max());
    let span = hi - lo;
    let values = t
        .values()
        .iter()
        .map(|&tk| {
            let theta = if span > 0.0 { (tk - lo) / span } else { 0.0 };
            (params.f * (1.0 + cfg.alpha * theta)).clamp(cfg.f_min, cfg.f_max)
        })
        .collect();
    ScalarField::from_vec(*t.grid(), values).expect("feed field is finite for finite T")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mean_c: f64,
    pub max_c: f64,
    pub fill_fraction: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignReport {
    pub mask: ChannelMask,
    /// Final V field the mask was thresholded from.
    pub v: ScalarField,
    pub temperature: ScalarField,
    pub metrics: ThermalMetrics,
    pub mask_fill_fraction: f64,
    pub converged: bool,
    pub solver_iterations: usize,
    pub rd_steps: u64,
    pub history: Vec<RoundRecord>,
    pub material: MaterialParams,
    pub rd: RDParams,
    pub loop_config: LoopConfig,
}

fn validate_inputs(
    grid: &Grid,
    layout: &BoardLayout,
    material: &MaterialParams,
    rd: &RDParams,
    cfg: &LoopConfig,
) -> Result<(), DesignError> {
    layout.validate(grid)?;
    material
        .check()
        .map_err(|(f, m)| ThermalError::InvalidParams(format!("{f} {m}")))?;
    cfg.check()
        .map_err(|(f, m)| DesignError::Domain(format!("loop.{f} {m}")))?;
    rd.validate(grid, cfg.f_max)?;
    Ok(())
}

pub fn run_generative_design(
    grid: &Grid,
    layout: &BoardLayout,
    material: &MaterialParams,
    rd: &RDParams,
    cfg: &LoopConfig,
) -> Result<DesignReport, DesignError> {
    validate_inputs(grid, layout, material, rd, cfg)?;
    let q = build_heat_flux_map(grid, layout)?;
    let pinned = build_pinned_sets(grid, layout)?;
    let mut state = init_state(*grid, &pinned, cfg.rng_seed, cfg.seed_probability);
    let mut history = Vec::with_capacity(cfg.outer_rounds);

    for round in 0..cfg.outer_rounds {
        let mask = threshold_mask(&state.v, cfg.tau)?;
        let solved = solve_mask(&q, &mask, material, &cfg.solver)?;
        let t = &solved.temperature;
        history.push(RoundRecord {
            round,
            mean_c: t.mean(),
            max_c: t.max(),
            fill_fraction: mask.fill_fraction(),
            converged: solved.converged,
        });
        log::debug!(
            "round {round}: max {:.3} C, mean {:.3} C, fill {:.3}, {} sweeps",
            t.max(),
            t.mean(),
            mask.fill_fraction(),
            solved.iterations
        );
        let feed = thermal_feedback_field(t, rd, cfg);
        state = run_constrained(
            state,
            rd,
            &pinned,
            Feed::Field(feed.values()),
            cfg.rd_steps_per_round,
        )?;
        if let (Some(tol), [.., prev, last]) = (cfg.plateau_tol, history.as_slice()) {
            if (last.max_c - prev.max_c).abs() < tol {
                break;
            }
        }
    }

    let mask = threshold_mask(&state.v, cfg.tau)?;
    let solved = solve_mask(&q, &mask, material, &cfg.solver)?;
    let metrics = compute_metrics(&solved.temperature, layout);
    Ok(DesignReport {
        mask_fill_fraction: mask.fill_fraction(),
        mask,
        v: state.v,
        temperature: solved.temperature,
        metrics,
        converged: solved.converged,
        solver_iterations: solved.iterations,
        rd_steps: state.step_count,
        history,
        material: *material,
        rd: *rd,
        loop_config: *cfg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub metrics: ThermalMetrics,
    pub fill_fraction: f64,
    pub converged: bool,
    pub solver_iterations: usize,
}

/// Two masks solved under identical conditions. Deltas are
/// `baseline - candidate`, so positive values favor the candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline: DesignSummary,
    pub candidate: DesignSummary,
    pub delta_mean_c: f64,
    pub delta_max_c: f64,
    pub baseline_temperature: ScalarField,
    pub candidate_temperature: ScalarField,
}

impl ComparisonReport {
    pub fn converged(&self) -> bool {
        self.baseline.converged && self.candidate.converged
    }
}

pub fn compare_designs(
    baseline: &ChannelMask,
    candidate: &ChannelMask,
    grid: &Grid,
    layout: &BoardLayout,
    material: &MaterialParams,
    opts: &SolverOptions,
) -> Result<ComparisonReport, DesignError> {
    if baseline.grid() != grid || candidate.grid() != grid {
        return Err(ThermalError::GridMismatch.into());
    }
    let q = build_heat_flux_map(grid, layout)?;
    let summarize = |mask: &ChannelMask| -> Result<(DesignSummary, ScalarField), DesignError> {
        let solved = solve_mask(&q, mask, material, opts)?;
        let summary = DesignSummary {
            metrics: compute_metrics(&solved.temperature, layout),
            fill_fraction: mask.fill_fraction(),
            converged: solved.converged,
            solver_iterations: solved.iterations,
        };
        Ok((summary, solved.temperature))
    };
    let (a, ta) = summarize(baseline)?;
    let (b, tb) = summarize(candidate)?;
    Ok(ComparisonReport {
        delta_mean_c: a.metrics.mean_c - b.metrics.mean_c,
        delta_max_c: a.metrics.max_c - b.metrics.max_c,
        baseline: a,
        candidate: b,
        baseline_temperature: ta,
        candidate_temperature: tb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_layout, PortSpan};
    use crate::rd::constrained_step;

    fn small_layout(grid: &Grid) -> BoardLayout {
        let layout = BoardLayout {
            chips: vec![],
            inlet: PortSpan { start: 3, end: 6 },
            outlet: PortSpan { start: 1, end: 2 },
            port_width: 0.004,
        };
        layout.validate(grid).unwrap();
        layout
    }

    #[test]
    fn baseline_rejects_width_equal_to_pitch() {
        let grid = Grid::new(12, 8, 0.001, 0.001).unwrap();
        let layout = small_layout(&grid);
        assert!(matches!(
            generate_baseline_parallel(&grid, &layout, 0.002, 0.002),
            Err(DesignError::Domain(_))
        ));
        assert!(generate_baseline_parallel(&grid, &layout, 0.0001, 0.004).is_err());
    }

    #[test]
    fn baseline_columns_alternate() {
        let grid = Grid::new(12, 8, 0.001, 0.001).unwrap();
        let layout = small_layout(&grid);
        let mask = generate_baseline_parallel(&grid, &layout, 0.002, 0.004).unwrap();
        for i in 0..12 {
            let channel = i % 4 < 2;
            for j in 1..7 {
                assert_eq!(mask.get(i, j), channel, "({i}, {j})");
            }
        }
        for i in 3..=6 {
            assert!(mask.get(i, 0));
        }
        for i in 1..=2 {
            assert!(mask.get(i, 7));
        }
        // Outside the ports the edge rows follow the column pattern.
        assert!(!mask.get(2, 0));
        assert!(!mask.get(7, 0));
    }

    #[test]
    fn feedback_field_cases() {
        let grid = Grid::new(3, 3, 0.001, 0.001).unwrap();
        let p = RDParams::default();
        let wide = LoopConfig {
            f_min: 1e-6,
            f_max: 10.0,
            ..LoopConfig::default()
        };
        let uniform = thermal_feedback_field(&ScalarField::filled(grid, 40.0), &p, &wide);
        assert!(uniform.values().iter().all(|&f| f == 0.055));

        let t = ScalarField::from_fn(grid, |i, j| if (i, j) == (2, 1) { 75.0 } else { 25.0 });
        let f = thermal_feedback_field(&t, &p, &wide);
        assert!((f.get(0, 0) - 0.055).abs() < 1e-15);
        assert!((f.get(2, 1) - 0.0825).abs() < 1e-15);

        let no_gain = LoopConfig { alpha: 0.0, ..wide };
        assert!(thermal_feedback_field(&t, &p, &no_gain)
            .values()
            .iter()
            .all(|&f| f == 0.055));

        let tight = LoopConfig {
            f_min: 0.06,
            f_max: 0.07,
            ..LoopConfig::default()
        };
        let clamped = thermal_feedback_field(&t, &p, &tight);
        assert_eq!(clamped.get(0, 0), 0.06);
        assert_eq!(clamped.get(2, 1), 0.07);
    }

    #[test]
    fn one_round_one_step_matches_manual_composition() {
        let grid = Grid::new(30, 40, 0.001, 0.001).unwrap();
        let layout = BoardLayout::with_centered_ports(
            &grid,
            vec![crate::geometry::Chip {
                region: crate::geometry::RectRegion::new("die", 0.010, 0.010, 0.020, 0.020),
                tdp: 50.0,
            }],
            0.006,
        )
        .unwrap();
        let rd = RDParams::default();
        let cfg = LoopConfig {
            outer_rounds: 1,
            rd_steps_per_round: 1,
            alpha: 0.0,
            seed_probability: 0.05,
            ..LoopConfig::default()
        };
        let report =
            run_generative_design(&grid, &layout, &MaterialParams::default(), &rd, &cfg).unwrap();
        let pinned = build_pinned_sets(&grid, &layout).unwrap();
        let start = init_state(grid, &pinned, cfg.rng_seed, cfg.seed_probability);
        let manual = threshold_mask(&constrained_step(&start, &rd, &pinned).v, cfg.tau).unwrap();
        assert_eq!(report.mask, manual);
        assert_eq!(report.history.len(), 1);
        assert_eq!(report.rd_steps, 1);
        for k in pinned.flat_indices() {
            assert!(report.mask.bits()[k]);
        }
        assert_eq!(
            report.metrics,
            compute_metrics(&report.temperature, &layout)
        );
    }

    #[test]
    fn plateau_stops_early() {
        let grid = Grid::new(20, 20, 0.001, 0.001).unwrap();
        let layout = BoardLayout::with_centered_ports(&grid, vec![], 0.004).unwrap();
        let cfg = LoopConfig {
            outer_rounds: 5,
            rd_steps_per_round: 1,
            plateau_tol: Some(1e3),
            ..LoopConfig::default()
        };
        let report = run_generative_design(
            &grid,
            &layout,
            &MaterialParams::default(),
            &RDParams::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(report.history.len(), 2);
    }

    #[test]
    fn invalid_loop_config_is_rejected() {
        let (grid, layout) = default_layout();
        let cfg = LoopConfig {
            f_min: 0.08,
            f_max: 0.07,
            ..LoopConfig::default()
        };
        assert!(matches!(
            run_generative_design(
                &grid,
                &layout,
                &MaterialParams::default(),
                &RDParams::default(),
                &cfg
            ),
            Err(DesignError::Domain(_))
        ));
        let unstable = RDParams {
            dt: 1.0,
            ..RDParams::default()
        };
        assert!(matches!(
            run_generative_design(
                &grid,
                &layout,
                &MaterialParams::default(),
                &unstable,
                &LoopConfig::default()
            ),
            Err(DesignError::Rd(RdError::Unstable { .. }))
        ));
    }

    #[test]
    fn identical_masks_compare_equal() {
        let grid = Grid::new(16, 16, 0.001, 0.001).unwrap();
        let layout = BoardLayout::with_centered_ports(
            &grid,
            vec![crate::geometry::Chip {
                region: crate::geometry::RectRegion::new("die", 0.004, 0.004, 0.010, 0.010),
                tdp: 20.0,
            }],
            0.004,
        )
        .unwrap();
        let mask = ChannelMask::from_fn(grid, |i, _| i % 3 == 0);
        let r = compare_designs(
            &mask,
            &mask,
            &grid,
            &layout,
            &MaterialParams::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.delta_mean_c, 0.0);
        assert_eq!(r.delta_max_c, 0.0);

        let ones = ChannelMask::from_fn(grid, |_, _| true);
        let zeros = ChannelMask::from_fn(grid, |_, _| false);
        let r = compare_designs(
            &zeros,
            &ones,
            &grid,
            &layout,
            &MaterialParams::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(r.candidate.metrics.mean_c < r.baseline.metrics.mean_c);
        assert!(r.delta_mean_c > 0.0);
        assert_eq!(
            r.delta_max_c,
            r.baseline.metrics.max_c - r.candidate.metrics.max_c
        );
    }

    #[test]
    fn mask_on_other_grid_is_rejected() {
        let grid = Grid::new(8, 8, 0.001, 0.001).unwrap();
        let other = Grid::new(9, 8, 0.001, 0.001).unwrap();
        let layout = BoardLayout::with_centered_ports(&grid, vec![], 0.002).unwrap();
        let a = ChannelMask::from_fn(grid, |_, _| true);
        let b = ChannelMask::from_fn(other, |_, _| true);
        assert!(compare_designs(
            &a,
            &b,
            &grid,
            &layout,
            &MaterialParams::default(),
            &SolverOptions::default()
        )
        .is_err());
    }
}
