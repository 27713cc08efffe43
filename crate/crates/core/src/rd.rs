//! Gray-Scott reaction-diffusion with V pinned to 1 on a fixed cell set.
//!
//! ```text
//! dU/dt = D_u lap(U) - U V^2 + F (1 - U)
//! dV/dt = D_v lap(V) + U V^2 - (F + kappa) V
//! ```
//!
//! Integrated with explicit Euler on the thermal grid. Lengths are measured
//! in units of `RDParams::length_scale` (1 mm by default), so the default
//! 1 mm grid has unit spacing. Edges are no-flux via ghost-cell mirroring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PinnedSet;
use crate::grid::{row_with_neighbors, Grid, ScalarField};
use crate::parallel;

#[derive(Debug, Error, PartialEq)]
pub enum RdError {
    #[error("threshold must lie in (0, 1), got {0}")]
    Domain(f64),
    #[error("dt = {dt} exceeds the explicit stability bound {dt_max}")]
    Unstable { dt: f64, dt_max: f64 },
    #[error("invalid reaction-diffusion parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite concentration after step {step}")]
    NonFinite { step: u64 },
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RDParams {
    pub d_u: f64,
    pub d_v: f64,
    /// Feed rate, per step.
    pub f: f64,
    /// Kill rate, per step.
    pub kappa: f64,
    pub dt: f64,
    /// Physical length of one reaction-diffusion length unit, m.
    pub length_scale: f64,
}

impl Default for RDParams {
    fn default() -> Self {
        Self {
            d_u: 0.16,
            d_v: 0.08,
            f: 0.055,
            kappa: 0.062,
            dt: 0.5,
            length_scale: 0.001,
        }
    }
}

impl RDParams {
    /// Returns the name of the first violated constraint, if any.
    pub fn check(&self) -> Result<(), (&'static str, &'static str)> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.d_v) {
            return Err(("d_v", "must be > 0"));
        }
        if !(self.d_u > self.d_v && self.d_u.is_finite()) {
            return Err(("d_u", "must be finite and > d_v"));
        }
        if !pos(self.f) {
            return Err(("f", "must be > 0"));
        }
        if !pos(self.kappa) {
            return Err(("kappa", "must be > 0"));
        }
        if !pos(self.dt) {
            return Err(("dt", "must be > 0"));
        }
        if !pos(self.length_scale) {
            return Err(("length_scale", "must be > 0"));
        }
        Ok(())
    }

    /// Validates the parameters and the explicit time step on `grid`,
    /// assuming feed rates up to `f_peak`.
    pub fn validate(&self, grid: &Grid, f_peak: f64) -> Result<(), RdError> {
        self.check()
            .map_err(|(field, msg)| RdError::InvalidParams(format!("{field} {msg}")))?;
        let dt_max = check_stability(self, grid).min(pinned_stability(self, grid, f_peak));
        if self.dt > dt_max {
            return Err(RdError::Unstable {
                dt: self.dt,
                dt_max,
            });
        }
        Ok(())
    }

    /// Grid spacing in reaction-diffusion length units.
    pub fn spacing(&self, grid: &Grid) -> (f64, f64) {
        (grid.dx() / self.length_scale, grid.dy() / self.length_scale)
    }
}

/// Largest stable explicit Euler step for the diffusion part,
/// `1 / (2 max(D_u, D_v) (1/hx^2 + 1/hy^2))`.
pub fn check_stability(params: &RDParams, grid: &Grid) -> f64 {
    let (hx, hy) = params.spacing(grid);
    let d = params.d_u.max(params.d_v);
    1.0 / (2.0 * d * (1.0 / (hx * hx) + 1.0 / (hy * hy)))
}

/// Step bound for U on a pinned cell. With `V = 1` held fixed the U update
/// gains the linear decay `-(1 + F) U`, which together with the checkerboard
/// diffusion mode requires `dt (1 + F + 4 D_u (1/hx^2 + 1/hy^2)) < 2`.
pub fn pinned_stability(params: &RDParams, grid: &Grid, f_peak: f64) -> f64 {
    let (hx, hy) = params.spacing(grid);
    let diffusion = 4.0 * params.d_u * (1.0 / (hx * hx) + 1.0 / (hy * hy));
    2.0 / (1.0 + f_peak.max(params.f) + diffusion)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDState {
    pub u: ScalarField,
    pub v: ScalarField,
    pub step_count: u64,
}

impl RDState {
    /// The trivial steady state `U = 1, V = 0`.
    pub fn trivial(grid: Grid) -> Self {
        Self {
            u: ScalarField::filled(grid, 1.0),
            v: ScalarField::zeros(grid),
            step_count: 0,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Binary channel indicator, row-major like [`ScalarField`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMask {
    grid: Grid,
    bits: Vec<bool>,
}

impl ChannelMask {
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                bits.push(f(i, j));
            }
        }
        Self { grid, bits }
    }

    pub fn from_bits(grid: Grid, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == grid.len()).then_some(Self { grid, bits })
    }

    /// Reads a 0/1 field; anything else yields `None`.
    pub fn from_field(field: &ScalarField) -> Option<Self> {
        let bits = field
            .values()
            .iter()
            .map(|&v| {
                if v == 1.0 {
                    Some(true)
                } else if v == 0.0 {
                    Some(false)
                } else {
                    None
                }
            })
            .collect::<Option<Vec<_>>>()?;
        Some(Self {
            grid: *field.grid(),
            bits,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[self.grid.idx(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, on: bool) {
        let k = self.grid.idx(i, j);
        self.bits[k] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Share of cells marked as channel.
    pub fn fill_fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    /// True if every channel cell of `other` is also a channel cell here.
    pub fn is_superset_of(&self, other: &ChannelMask) -> bool {
        self.grid == other.grid && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a || !b)
    }

    pub fn to_field(&self) -> ScalarField {
        let values = self
            .bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        ScalarField::from_raw(self.grid, values)
    }
}

/// Spatially constant or per-cell feed rate.
#[derive(Debug, Clone, Copy)]
pub enum Feed<'a> {
    Uniform(f64),
    Field(&'a [f64]),
}

/// Five-point Laplacian of `src` at flat index `k = j nx + i`, mirrored edges.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn lap_at(
    src: &[f64],
    k: usize,
    i: usize,
    j: usize,
    nx: usize,
    ny: usize,
    ihx2: f64,
    ihy2: f64,
) -> f64 {
    let c = src[k];
    let left = if i == 0 { c } else { src[k - 1] };
    let right = if i + 1 == nx { c } else { src[k + 1] };
    let down = if j == 0 { c } else { src[k - nx] };
    let up = if j + 1 == ny { c } else { src[k + nx] };
    (left + right - 2.0 * c) * ihx2 + (down + up - 2.0 * c) * ihy2
}

/// Five-point Laplacian with spacings `hx`, `hy` and no-flux edges.
pub fn laplacian(phi: &ScalarField, hx: f64, hy: f64) -> ScalarField {
    let grid = *phi.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ihx2, ihy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let src = phi.values();
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            out[k] = lap_at(src, k, i, j, nx, ny, ihx2, ihy2);
        }
    }
    ScalarField::from_raw(grid, out)
}

/// One explicit Euler step from `(u, v)` into `(u_out, v_out)`.
fn euler_into(
    u: &[f64],
    v: &[f64],
    u_out: &mut [f64],
    v_out: &mut [f64],
    grid: &Grid,
    params: &RDParams,
    feed: Feed<'_>,
) {
    match feed {
        Feed::Uniform(f) => euler_kernel(u, v, u_out, v_out, grid, params, &vec![f; grid.len()]),
        Feed::Field(f) => euler_kernel(u, v, u_out, v_out, grid, params, f),
    }
}

fn euler_kernel(
    u: &[f64],
    v: &[f64],
    u_out: &mut [f64],
    v_out: &mut [f64],
    grid: &Grid,
    params: &RDParams,
    feed: &[f64],
) {
    assert_eq!(feed.len(), grid.len(), "feed field does not match the grid");
    let (nx, ny) = (grid.nx(), grid.ny());
    let (hx, hy) = params.spacing(grid);
    let (ihx2, ihy2) = (1.0 / (hx * hx), 1.0 / (hy * hy));
    let RDParams {
        d_u,
        d_v,
        kappa,
        dt,
        ..
    } = *params;
    let cell = |uk: f64, vk: f64, f: f64, lap_u: [f64; 4], lap_v: [f64; 4]| {
        let [ul, ur, ud, uu] = lap_u;
        let [vl, vr, vd, vu] = lap_v;
        let uvv = uk * vk * vk;
        let lu = (ul + ur - 2.0 * uk) * ihx2 + (ud + uu - 2.0 * uk) * ihy2;
        let lv = (vl + vr - 2.0 * vk) * ihx2 + (vd + vu - 2.0 * vk) * ihy2;
        (
            uk + dt * (d_u * lu - uvv + f * (1.0 - uk)),
            vk + dt * (d_v * lv + uvv - (f + kappa) * vk),
        )
    };
    parallel::map_rows2(u_out, v_out, nx, |j, u_row, v_row| {
        let (u0, ud, uu) = row_with_neighbors(u, j, nx, ny);
        let (v0, vd, vu) = row_with_neighbors(v, j, nx, ny);
        let f0 = &feed[j * nx..(j + 1) * nx];
        let edge = |i: usize, l: usize, r: usize| {
            cell(
                u0[i],
                v0[i],
                f0[i],
                [u0[l], u0[r], ud[i], uu[i]],
                [v0[l], v0[r], vd[i], vu[i]],
            )
        };
        (u_row[0], v_row[0]) = edge(0, 0, 1);
        (u_row[nx - 1], v_row[nx - 1]) = edge(nx - 1, nx - 2, nx - 1);

        // Interior: equal-length windows so the loop runs without bounds checks.
        let n = nx - 2;
        let (ul, uc, ur) = (&u0[..n], &u0[1..n + 1], &u0[2..]);
        let (vl, vc, vr) = (&v0[..n], &v0[1..n + 1], &v0[2..]);
        let (ud, uu, vd, vu) = (&ud[1..n + 1], &uu[1..n + 1], &vd[1..n + 1], &vu[1..n + 1]);
        let fc = &f0[1..n + 1];
        let (uo, vo) = (&mut u_row[1..n + 1], &mut v_row[1..n + 1]);
        for i in 0..n {
            (uo[i], vo[i]) = cell(
                uc[i],
                vc[i],
                fc[i],
                [ul[i], ur[i], ud[i], uu[i]],
                [vl[i], vr[i], vd[i], vu[i]],
            );
        }
    });
}

/// Unconstrained explicit Euler step with the scalar feed rate.
pub fn gray_scott_step(state: &RDState, params: &RDParams) -> RDState {
    gray_scott_step_with_feed(state, params, Feed::Uniform(params.f))
}

/// Unconstrained step with an explicit feed: the kill term uses `F + kappa`
/// per cell.
pub fn gray_scott_step_with_feed(state: &RDState, params: &RDParams, feed: Feed<'_>) -> RDState {
    let grid = *state.grid();
    let mut u = vec![0.0; grid.len()];
    let mut v = vec![0.0; grid.len()];
    euler_into(
        state.u.values(),
        state.v.values(),
        &mut u,
        &mut v,
        &grid,
        params,
        feed,
    );
    RDState {
        u: ScalarField::from_raw(grid, u),
        v: ScalarField::from_raw(grid, v),
        step_count: state.step_count + 1,
    }
}

fn pin(v: &mut [f64], pinned: &PinnedSet) {
    for (vk, &m) in v.iter_mut().zip(pinned.membership()) {
        if m {
            *vk = 1.0;
        }
    }
}

/// Sets `V = 1` on every pinned cell; everything else is copied unchanged.
pub fn apply_pinning(state: &RDState, pinned: &PinnedSet) -> RDState {
    let mut out = state.clone();
    pin(out.v.values_mut(), pinned);
    out
}

pub fn constrained_step(state: &RDState, params: &RDParams, pinned: &PinnedSet) -> RDState {
    apply_pinning(&gray_scott_step(state, params), pinned)
}

/// Runs `steps` constrained steps with double buffering. Fails if a
/// concentration turns non-finite; the check runs every 64 steps and at the end.
pub fn run_constrained(
    state: RDState,
    params: &RDParams,
    pinned: &PinnedSet,
    feed: Feed<'_>,
    steps: usize,
) -> Result<RDState, RdError> {
    const CHECK_EVERY: usize = 64;
    let grid = *state.grid();
    if *pinned.grid() != grid {
        return Err(RdError::GridMismatch);
    }
    let uniform;
    let feed = match feed {
        Feed::Uniform(f) => {
            uniform = vec![f; grid.len()];
            &uniform[..]
        }
        Feed::Field(f) if f.len() == grid.len() => f,
        Feed::Field(_) => return Err(RdError::GridMismatch),
    };
    let mut step_count = state.step_count;
    let mut u = state.u.into_values();
    let mut v = state.v.into_values();
    let mut u_next = vec![0.0; grid.len()];
    let mut v_next = vec![0.0; grid.len()];
    for n in 0..steps {
        euler_kernel(&u, &v, &mut u_next, &mut v_next, &grid, params, feed);
        pin(&mut v_next, pinned);
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
        step_count += 1;
        if (n + 1) % CHECK_EVERY == 0 || n + 1 == steps {
            let finite = u.iter().chain(&v).all(|x| x.is_finite());
            if !finite {
                return Err(RdError::NonFinite { step: step_count });
            }
        }
    }
    Ok(RDState {
        u: ScalarField::from_raw(grid, u),
        v: ScalarField::from_raw(grid, v),
        step_count,
    })
}

/// Default probability that a cell receives a random seed in [`init_state`].
pub const DEFAULT_SEED_PROBABILITY: f64 = 0.002;

/// `U = 1, V = 0`, with `V = 1` on pinned cells and sparse random seeds
/// (`U = V = 0.5`) drawn with probability `p_seed` per cell from a ChaCha8
/// stream. Seeds never override a pin.
pub fn init_state(grid: Grid, pinned: &PinnedSet, rng_seed: u64, p_seed: f64) -> RDState {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut state = RDState::trivial(grid);
    let u = state.u.values_mut();
    let v = state.v.values_mut();
    for k in 0..grid.len() {
        if rng.gen::<f64>() < p_seed {
            u[k] = 0.5;
            v[k] = 0.5;
        }
    }
    pin(state.v.values_mut(), pinned);
    state
}

/// `bits = V >= tau`.
pub fn threshold_mask(v: &ScalarField, tau: f64) -> Result<ChannelMask, RdError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(RdError::Domain(tau));
    }
    let bits = v.values().iter().map(|&x| x >= tau).collect();
    Ok(ChannelMask {
        grid: *v.grid(),
        bits,
    })
}
