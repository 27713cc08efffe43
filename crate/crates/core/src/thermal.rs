//! Steady-state 2D conduction with a distributed convective sink,
//!
//! ```text
//! k t lap(T) + Q - h (T - T_coolant) = 0
//! ```
//!
//! discretized with central differences on the cell-centered grid and solved
//! by Jacobi relaxation. Edges are adiabatic: the ghost cell mirrors the
//! boundary cell, so the discrete conduction fluxes telescope to zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BoardLayout;
use crate::grid::{row_with_neighbors, Grid, ScalarField};
use crate::parallel;
use crate::rd::ChannelMask;

#[derive(Debug, Error, PartialEq)]
pub enum ThermalError {
    #[error("h is zero everywhere but the board dissipates {power} W; no steady state exists")]
    NoSink { power: f64 },
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialParams {
    /// Thermal conductivity, W/(m K).
    pub k: f64,
    /// Plate thickness, m.
    pub thickness: f64,
    /// Coolant temperature, deg C.
    pub t_coolant: f64,
    /// Heat transfer coefficient on channel cells, W/(m^2 K).
    pub h_channel: f64,
    /// Heat transfer coefficient elsewhere, W/(m^2 K).
    pub h_base: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            k: 148.0,
            thickness: 0.001,
            t_coolant: 25.0,
            h_channel: 15_000.0,
            h_base: 10.0,
        }
    }
}

impl MaterialParams {
    /// Returns the dotted name of the first violated constraint, if any.
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(("k", "must be > 0"));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(("thickness", "must be > 0"));
        }
        if !self.t_coolant.is_finite() {
            return Err(("t_coolant", "must be finite"));
        }
        if !(self.h_base >= 0.0 && self.h_base.is_finite()) {
            return Err(("h_base", "must be >= 0"));
        }
        if !(self.h_channel > self.h_base && self.h_channel.is_finite()) {
            return Err(("h_channel", "must be finite and > h_base"));
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ThermalError> {
        self.check()
            .map_err(|(field, msg)| ThermalError::InvalidParams(format!("{field} {msg}")))
    }

    /// Conduction coefficients `(k t / dx^2, k t / dy^2)`.
    pub fn conduction_coefficients(&self, grid: &Grid) -> (f64, f64) {
        let kt = self.k * self.thickness;
        (kt / (grid.dx() * grid.dx()), kt / (grid.dy() * grid.dy()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Convergence tolerance on the temperature, K.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub temperature: ScalarField,
    pub iterations: usize,
    /// Max-norm of the last Jacobi update, K.
    pub final_residual: f64,
    pub converged: bool,
}

/// `h_channel` on channel cells, `h_base` elsewhere.
pub fn assemble_h_field(mask: &ChannelMask, params: &MaterialParams) -> ScalarField {
    let values = mask
        .bits()
        .iter()
        .map(|&b| if b { params.h_channel } else { params.h_base })
        .collect();
    ScalarField::from_raw(*mask.grid(), values)
}

/// Per-cell constants of the update: `Q + h T_c` and `1 / (2 (r_x + r_y) + h)`.
struct JacobiOperator {
    grid: Grid,
    rx: f64,
    ry: f64,
    source: Vec<f64>,
    inv_diag: Vec<f64>,
}

impl JacobiOperator {
    fn new(q: &ScalarField, h: &ScalarField, params: &MaterialParams) -> Self {
        let grid = *q.grid();
        let (rx, ry) = params.conduction_coefficients(&grid);
        let source = q
            .values()
            .iter()
            .zip(h.values())
            .map(|(&qk, &hk)| qk + hk * params.t_coolant)
            .collect();
        let inv_diag = h
            .values()
            .iter()
            .map(|&hk| 1.0 / (2.0 * (rx + ry) + hk))
            .collect();
        Self {
            grid,
            rx,
            ry,
            source,
            inv_diag,
        }
    }

    /// One sweep from `src` into `dst`; returns `max |dst - src|`.
    fn sweep(&self, src: &[f64], dst: &mut [f64]) -> f64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (rx, ry) = (self.rx, self.ry);
        parallel::map_rows_max(dst, nx, |j, out| {
            let base = j * nx;
            let (row, down, up) = row_with_neighbors(src, j, nx, ny);
            let source = &self.source[base..base + nx];
            let inv_diag = &self.inv_diag[base..base + nx];
            let cell = |i: usize, left: f64, right: f64| {
                (rx * (left + right) + ry * (down[i] + up[i]) + source[i]) * inv_diag[i]
            };
            out[0] = cell(0, row[0], row[1]);
            out[nx - 1] = cell(nx - 1, row[nx - 2], row[nx - 1]);
            let n = nx - 2;
            let (left, right) = (&row[..n], &row[2..]);
            let (down, up) = (&down[1..n + 1], &up[1..n + 1]);
            let (source, inv_diag) = (&source[1..n + 1], &inv_diag[1..n + 1]);
            let interior = &mut out[1..n + 1];
            for i in 0..n {
                interior[i] =
                    (rx * (left[i] + right[i]) + ry * (down[i] + up[i]) + source[i]) * inv_diag[i];
            }
            out.iter()
                .zip(row)
                .fold(0.0f64, |acc, (&new, &old)| acc.max((new - old).abs()))
        })
    }
}

fn same_grid(fields: &[&ScalarField]) -> Result<Grid, ThermalError> {
    let grid = *fields[0].grid();
    if fields.iter().any(|f| *f.grid() != grid) {
        return Err(ThermalError::GridMismatch);
    }
    Ok(grid)
}

/// Single Jacobi update. The input temperature is left untouched.
pub fn jacobi_step(
    t: &ScalarField,
    q: &ScalarField,
    h: &ScalarField,
    params: &MaterialParams,
) -> Result<(ScalarField, f64), ThermalError> {
    let grid = same_grid(&[t, q, h])?;
    let op = JacobiOperator::new(q, h, params);
    let mut out = vec![0.0; grid.len()];
    let residual = op.sweep(t.values(), &mut out);
    Ok((ScalarField::from_raw(grid, out), residual))
}

/// Window of recent update ratios used to estimate the contraction factor.
const RATE_WINDOW: usize = 8;

/// Jacobi iteration from `T = t_coolant`.
///
/// Stops once the last update is at most `tol` *and* the geometric error
/// estimate `update * rho / (1 - rho)` is at most `tol`, with `rho` the
/// largest update ratio over the last few sweeps. The second test matters on
/// fine grids, where `rho` is close to one and a small update still leaves a
/// large distance to the fixed point.
pub fn solve_steady(
    q: &ScalarField,
    h: &ScalarField,
    params: &MaterialParams,
    opts: &SolverOptions,
) -> Result<SolveResult, ThermalError> {
    params.validate()?;
    let grid = same_grid(&[q, h])?;
    if h.values().iter().all(|&v| v == 0.0) {
        let power = q.sum() * grid.cell_area();
        if power > 0.0 {
            return Err(ThermalError::NoSink { power });
        }
    }
    let op = JacobiOperator::new(q, h, params);
    let mut cur = vec![params.t_coolant; grid.len()];
    let mut next = vec![0.0; grid.len()];
    let mut ratios = [f64::INFINITY; RATE_WINDOW];
    let mut prev = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        residual = op.sweep(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        ratios[iterations % RATE_WINDOW] = if prev > 0.0 { residual / prev } else { 0.0 };
        iterations += 1;
        prev = residual;

        if residual == 0.0 {
            converged = true;
            break;
        }
        if residual <= opts.tol {
            let rho = ratios.iter().copied().fold(0.0, f64::max);
            if rho < 1.0 && residual * rho / (1.0 - rho) <= opts.tol {
                converged = true;
                break;
            }
        }
    }

    Ok(SolveResult {
        temperature: ScalarField::from_raw(grid, cur),
        iterations,
        final_residual: residual,
        converged,
    })
}

/// Convenience: assemble `h` from a mask and solve.
pub fn solve_mask(
    q: &ScalarField,
    mask: &ChannelMask,
    params: &MaterialParams,
    opts: &SolverOptions,
) -> Result<SolveResult, ThermalError> {
    solve_steady(q, &assemble_h_field(mask, params), params, opts)
}

/// Net power `sum (Q - h (T - T_c)) dx dy` and the injected power `sum Q dx dy`.
pub fn energy_imbalance(
    t: &ScalarField,
    q: &ScalarField,
    h: &ScalarField,
    params: &MaterialParams,
) -> (f64, f64) {
    let area = t.grid().cell_area();
    let mut net = 0.0;
    let mut injected = 0.0;
    for ((&tk, &qk), &hk) in t.values().iter().zip(q.values()).zip(h.values()) {
        net += qk - hk * (tk - params.t_coolant);
        injected += qk;
    }
    (net * area, injected * area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMetrics {
    pub label: String,
    pub mean_c: f64,
    pub max_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalMetrics {
    pub mean_c: f64,
    pub max_c: f64,
    pub chips: Vec<RegionMetrics>,
}

pub fn compute_metrics(t: &ScalarField, layout: &BoardLayout) -> ThermalMetrics {
    let grid = t.grid();
    let chips = layout
        .chips
        .iter()
        .map(|chip| {
            let mut sum = 0.0;
            let mut max = f64::NEG_INFINITY;
            let mut n = 0usize;
            for (i, j) in chip.region.cells(grid) {
                let v = t.get(i, j);
                sum += v;
                max = max.max(v);
                n += 1;
            }
            RegionMetrics {
                label: chip.region.label.clone(),
                mean_c: if n > 0 { sum / n as f64 } else { f64::NAN },
                max_c: max,
            }
        })
        .collect();
    ThermalMetrics {
        mean_c: t.mean(),
        max_c: t.max(),
        chips,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_layout;

    fn mm_grid(n: usize) -> Grid {
        Grid::new(n, n, 0.001, 0.001).unwrap()
    }

    #[test]
    fn h_field_follows_mask() {
        let grid = mm_grid(5);
        let p = MaterialParams::default();
        let ones = ChannelMask::from_fn(grid, |_, _| true);
        assert!(assemble_h_field(&ones, &p)
            .values()
            .iter()
            .all(|&h| h == 15_000.0));
        let zeros = ChannelMask::from_fn(grid, |_, _| false);
        assert!(assemble_h_field(&zeros, &p)
            .values()
            .iter()
            .all(|&h| h == 10.0));
        let checker = ChannelMask::from_fn(grid, |i, j| (i + j) % 2 == 0);
        let h = assemble_h_field(&checker, &p);
        for j in 0..5 {
            for i in 0..5 {
                let want = if (i + j) % 2 == 0 { 15_000.0 } else { 10.0 };
                assert_eq!(h.get(i, j), want);
            }
        }
    }

    #[test]
    fn coolant_temperature_is_a_fixed_point_without_load() {
        let grid = mm_grid(6);
        let t = ScalarField::filled(grid, 25.0);
        let q = ScalarField::zeros(grid);
        let h = ScalarField::from_fn(grid, |i, _| i as f64 * 100.0);
        let (next, residual) = jacobi_step(&t, &q, &h, &MaterialParams::default()).unwrap();
        assert_eq!(residual, 0.0);
        assert_eq!(next, t);
    }

    #[test]
    fn uniform_load_without_sink_single_step() {
        let grid = mm_grid(6);
        let t = ScalarField::filled(grid, 25.0);
        let q = ScalarField::filled(grid, 1000.0);
        let h = ScalarField::zeros(grid);
        let before = t.clone();
        let (next, residual) = jacobi_step(&t, &q, &h, &MaterialParams::default()).unwrap();
        // r_x = r_y = 148 * 0.001 / 1e-6 = 148000
        let want = 25.0 + 1000.0 / (4.0 * 148_000.0);
        assert!((want - 25.001_689_189_189_f64).abs() < 1e-9);
        for &v in next.values() {
            assert!((v - want).abs() < 1e-12);
        }
        assert!((residual - 1000.0 / 592_000.0).abs() < 1e-12);
        assert_eq!(t, before);
    }

    #[test]
    fn analytic_uniform_solution_is_fixed() {
        let grid = mm_grid(6);
        let t = ScalarField::filled(grid, 35.0);
        let q = ScalarField::filled(grid, 1000.0);
        let h = ScalarField::filled(grid, 100.0);
        let (_, residual) = jacobi_step(&t, &q, &h, &MaterialParams::default()).unwrap();
        assert!(residual < 1e-12);
    }

    #[test]
    fn unloaded_solve_converges_immediately() {
        let grid = mm_grid(7);
        let q = ScalarField::zeros(grid);
        let h = ScalarField::from_fn(grid, |i, _| if i == 0 { 10.0 } else { 0.0 });
        let res = solve_steady(
            &q,
            &h,
            &MaterialParams::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
        assert!(res.temperature.values().iter().all(|&v| v == 25.0));
    }

    #[test]
    fn uniform_gpu_flux_reaches_analytic_temperature() {
        let grid = mm_grid(16);
        let q = ScalarField::filled(grid, 750_000.0);
        let h = ScalarField::filled(grid, 15_000.0);
        let opts = SolverOptions::default();
        let res = solve_steady(&q, &h, &MaterialParams::default(), &opts).unwrap();
        assert!(res.converged);
        assert!(res.final_residual <= opts.tol);
        for &v in res.temperature.values() {
            assert!((v - 75.0).abs() <= opts.tol, "{v}");
        }
    }

    #[test]
    fn no_sink_is_an_error() {
        let grid = mm_grid(5);
        let q = ScalarField::filled(grid, 1.0);
        let h = ScalarField::zeros(grid);
        assert!(matches!(
            solve_steady(
                &q,
                &h,
                &MaterialParams::default(),
                &SolverOptions::default()
            ),
            Err(ThermalError::NoSink { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let grid = mm_grid(20);
        let q = ScalarField::filled(grid, 1e5);
        let h = ScalarField::filled(grid, 10.0);
        let opts = SolverOptions {
            tol: 1e-4,
            max_iter: 5,
        };
        let res = solve_steady(&q, &h, &MaterialParams::default(), &opts).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 5);
        assert!(res.temperature.is_finite());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let q = ScalarField::zeros(mm_grid(5));
        let h = ScalarField::zeros(mm_grid(6));
        assert_eq!(
            solve_steady(
                &q,
                &h,
                &MaterialParams::default(),
                &SolverOptions::default()
            ),
            Err(ThermalError::GridMismatch)
        );
    }

    #[test]
    fn bad_material_is_rejected() {
        let grid = mm_grid(5);
        let q = ScalarField::zeros(grid);
        let h = ScalarField::filled(grid, 1.0);
        let p = MaterialParams {
            h_channel: 5.0,
            ..MaterialParams::default()
        };
        assert!(matches!(
            solve_steady(&q, &h, &p, &SolverOptions::default()),
            Err(ThermalError::InvalidParams(_))
        ));
    }

    #[test]
    fn metrics_basic() {
        let (grid, layout) = default_layout();
        let t = ScalarField::filled(grid, 25.0);
        let m = compute_metrics(&t, &layout);
        assert_eq!(m.mean_c, 25.0);
        assert_eq!(m.max_c, 25.0);
        assert_eq!(m.chips.len(), 3);
        for c in &m.chips {
            assert_eq!(c.mean_c, 25.0);
            assert_eq!(c.max_c, 25.0);
        }
        let mut hot = t.clone();
        hot.set(3, 150, 80.0);
        assert_eq!(compute_metrics(&hot, &layout).max_c, 80.0);
    }

    #[test]
    fn metrics_mean_matches_independent_sum() {
        let (grid, layout) = default_layout();
        let t = ScalarField::from_fn(grid, |i, j| {
            ((i * 7919 + j * 104_729) % 1000) as f64 * 0.1 + 20.0
        });
        let m = compute_metrics(&t, &layout);
        let mut acc = 0.0;
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                acc += t.get(i, j);
            }
        }
        let mean = acc / grid.len() as f64;
        assert!((m.mean_c - mean).abs() <= 1e-12 * mean);
        let gpu = &m.chips[0];
        let (is, js) = layout.chips[0].region.cell_ranges(&grid);
        let n = (is.len() * js.len()) as f64;
        let s: f64 = js
            .flat_map(|j| is.clone().map(move |i| (i, j)))
            .map(|(i, j)| t.get(i, j))
            .sum();
        assert!((gpu.mean_c - s / n).abs() < 1e-9);
    }
}
