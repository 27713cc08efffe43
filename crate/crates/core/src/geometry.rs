//! Board description: chip footprints, coolant ports, the heat-flux map they
//! induce and the index sets the generator pins to "channel".
//!
//! Rasterization uses cell-center inclusion over half-open rectangles: cell
//! `(i, j)` belongs to `[x0, x1) x [y0, y1)` iff its center does.

use std::ops::Range;

use thiserror::Error;

use crate::grid::{Grid, ScalarField};

pub const GPU_TDP_W: f64 = 1200.0;
pub const CPU_TDP_W: f64 = 300.0;
/// One inch.
pub const PORT_WIDTH_M: f64 = 0.0254;

pub const DEFAULT_NX: usize = 120;
pub const DEFAULT_NY: usize = 160;
pub const DEFAULT_SPACING_M: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("chip `{label}`: rectangle must satisfy x0 < x1 and y0 < y1")]
    DegenerateRect { label: String },
    #[error("chip `{label}` extends outside the {width} m x {height} m board")]
    OutsideBoard {
        label: String,
        width: f64,
        height: f64,
    },
    #[error("chip `{label}`: TDP must be positive, got {tdp} W")]
    BadTdp { label: String, tdp: f64 },
    #[error("chip `{label}` covers no cell centers; the grid is too coarse")]
    EmptyFootprint { label: String },
    #[error("{port} span [{start}, {end}] is invalid for nx = {nx}")]
    BadSpan {
        port: &'static str,
        start: usize,
        end: usize,
        nx: usize,
    },
    #[error("port width {width} m rasterizes to zero cells at dx = {dx} m")]
    PortTooNarrow { width: f64, dx: f64 },
}

/// Axis-aligned rectangle in board coordinates (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct RectRegion {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub label: String,
}

impl RectRegion {
    pub fn new(label: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0,
            y0,
            x1,
            y1,
            label: label.into(),
        }
    }

    /// Index ranges `(i, j)` of the cells whose centers lie inside.
    pub fn cell_ranges(&self, grid: &Grid) -> (Range<usize>, Range<usize>) {
        let span = |lo: f64, hi: f64, h: f64, n: usize| {
            let first = (lo / h - 0.5).ceil().max(0.0) as usize;
            let last = ((hi / h - 0.5).ceil().max(0.0) as usize).min(n);
            first.min(last)..last
        };
        (
            span(self.x0, self.x1, grid.dx(), grid.nx()),
            span(self.y0, self.y1, grid.dy(), grid.ny()),
        )
    }

    pub fn cells(&self, grid: &Grid) -> impl Iterator<Item = (usize, usize)> {
        let (is, js) = self.cell_ranges(grid);
        js.flat_map(move |j| is.clone().map(move |i| (i, j)))
    }

    pub fn cell_count(&self, grid: &Grid) -> usize {
        let (is, js) = self.cell_ranges(grid);
        is.len() * js.len()
    }

    fn validate(&self, grid: &Grid) -> Result<(), GeometryError> {
        if !(self.x0 < self.x1 && self.y0 < self.y1) {
            return Err(GeometryError::DegenerateRect {
                label: self.label.clone(),
            });
        }
        let (w, h) = grid.extent();
        // Small slack so that e.g. 0.12 == 120 * 0.001 is accepted.
        let eps = 1e-9 * w.max(h);
        if self.x0 < -eps || self.y0 < -eps || self.x1 > w + eps || self.y1 > h + eps {
            return Err(GeometryError::OutsideBoard {
                label: self.label.clone(),
                width: w,
                height: h,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chip {
    pub region: RectRegion,
    /// Thermal design power in watts.
    pub tdp: f64,
}

/// Inclusive cell range `[start, end]` along x. The inlet sits on the `j = 0`
/// edge and the outlet on the `j = ny - 1` edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortSpan {
    pub start: usize,
    pub end: usize,
}

impl PortSpan {
    /// Span of `round(width / dx)` cells centered on the edge.
    pub fn centered(grid: &Grid, width: f64) -> Result<Self, GeometryError> {
        let cells = port_cells(grid, width)?.min(grid.nx());
        let start = (grid.nx() - cells) / 2;
        Ok(Self {
            start,
            end: start + cells - 1,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn validate(&self, grid: &Grid, port: &'static str) -> Result<(), GeometryError> {
        if self.start > self.end || self.end >= grid.nx() {
            return Err(GeometryError::BadSpan {
                port,
                start: self.start,
                end: self.end,
                nx: grid.nx(),
            });
        }
        Ok(())
    }
}

fn port_cells(grid: &Grid, width: f64) -> Result<usize, GeometryError> {
    let cells = (width / grid.dx()).round();
    if cells.is_nan() || cells < 1.0 {
        return Err(GeometryError::PortTooNarrow {
            width,
            dx: grid.dx(),
        });
    }
    Ok(cells as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardLayout {
    pub chips: Vec<Chip>,
    pub inlet: PortSpan,
    pub outlet: PortSpan,
    pub port_width: f64,
}

impl BoardLayout {
    /// Layout with both ports centered on their edges.
    pub fn with_centered_ports(
        grid: &Grid,
        chips: Vec<Chip>,
        port_width: f64,
    ) -> Result<Self, GeometryError> {
        let span = PortSpan::centered(grid, port_width)?;
        let layout = Self {
            chips,
            inlet: span,
            outlet: span,
            port_width,
        };
        layout.validate(grid)?;
        Ok(layout)
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), GeometryError> {
        for chip in &self.chips {
            chip.region.validate(grid)?;
            if !(chip.tdp > 0.0 && chip.tdp.is_finite()) {
                return Err(GeometryError::BadTdp {
                    label: chip.region.label.clone(),
                    tdp: chip.tdp,
                });
            }
            if chip.region.cell_count(grid) == 0 {
                return Err(GeometryError::EmptyFootprint {
                    label: chip.region.label.clone(),
                });
            }
        }
        port_cells(grid, self.port_width)?;
        self.inlet.validate(grid, "inlet")?;
        self.outlet.validate(grid, "outlet")?;
        Ok(())
    }

    pub fn total_tdp(&self) -> f64 {
        self.chips.iter().map(|c| c.tdp).sum()
    }
}

/// Default board: 120 mm x 160 mm at 1 mm resolution. Two 40 mm GPU dies
/// sit near the inlet edge (y = 20..60 mm), a 30 mm CPU near the outlet edge
/// (y = 110..140 mm).
pub fn default_layout() -> (Grid, BoardLayout) {
    let grid = Grid::new(DEFAULT_NX, DEFAULT_NY, DEFAULT_SPACING_M, DEFAULT_SPACING_M)
        .expect("default grid is valid");
    let chips = default_chips();
    let layout = BoardLayout::with_centered_ports(&grid, chips, PORT_WIDTH_M)
        .expect("default layout is valid");
    (grid, layout)
}

pub fn default_chips() -> Vec<Chip> {
    vec![
        Chip {
            region: RectRegion::new("gpu_left", 0.015, 0.020, 0.055, 0.060),
            tdp: GPU_TDP_W,
        },
        Chip {
            region: RectRegion::new("gpu_right", 0.065, 0.020, 0.105, 0.060),
            tdp: GPU_TDP_W,
        },
        Chip {
            region: RectRegion::new("cpu", 0.045, 0.110, 0.075, 0.140),
            tdp: CPU_TDP_W,
        },
    ]
}

/// Uniform flux `tdp / footprint area` on every rasterized chip cell, in W/m^2.
pub fn build_heat_flux_map(
    grid: &Grid,
    layout: &BoardLayout,
) -> Result<ScalarField, GeometryError> {
    let mut q = ScalarField::zeros(*grid);
    for chip in &layout.chips {
        let cells = chip.region.cell_count(grid);
        if cells == 0 {
            return Err(GeometryError::EmptyFootprint {
                label: chip.region.label.clone(),
            });
        }
        let flux = chip.tdp / (cells as f64 * grid.cell_area());
        let values = q.values_mut();
        for (i, j) in chip.region.cells(grid) {
            values[grid.idx(i, j)] += flux;
        }
    }
    Ok(q)
}

/// Cells whose generator value is held at 1: inlet, outlet and chip footprints.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedSet {
    grid: Grid,
    inlet: Vec<(usize, usize)>,
    outlet: Vec<(usize, usize)>,
    chips: Vec<(usize, usize)>,
    member: Vec<bool>,
    len: usize,
}

impl PinnedSet {
    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            inlet: Vec::new(),
            outlet: Vec::new(),
            chips: Vec::new(),
            member: vec![false; grid.len()],
            len: 0,
        }
    }

    /// Arbitrary set of cells, recorded as an extra "chip" constituent.
    pub fn from_cells(grid: Grid, cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut set = Self::empty(grid);
        let mut chips: Vec<_> = cells
            .into_iter()
            .filter(|&(i, j)| i < grid.nx() && j < grid.ny())
            .collect();
        chips.sort_unstable_by_key(|&(i, j)| (j, i));
        chips.dedup();
        set.chips = chips;
        set.rebuild_union();
        set
    }

    fn rebuild_union(&mut self) {
        self.member.iter_mut().for_each(|m| *m = false);
        for &(i, j) in self.inlet.iter().chain(&self.outlet).chain(&self.chips) {
            self.member[self.grid.idx(i, j)] = true;
        }
        self.len = self.member.iter().filter(|&&m| m).count();
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn inlet(&self) -> &[(usize, usize)] {
        &self.inlet
    }

    pub fn outlet(&self) -> &[(usize, usize)] {
        &self.outlet
    }

    /// Union of all chip footprints, sorted by `(j, i)`, no duplicates.
    pub fn chips(&self) -> &[(usize, usize)] {
        &self.chips
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.grid.nx() && j < self.grid.ny() && self.member[self.grid.idx(i, j)]
    }

    /// Per-cell membership flags in row-major order.
    pub fn membership(&self) -> &[bool] {
        &self.member
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Flat indices of the union, ascending.
    pub fn flat_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter_map(|(k, &m)| m.then_some(k))
    }

    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.flat_indices().map(|k| self.grid.coords(k))
    }
}

pub fn build_pinned_sets(grid: &Grid, layout: &BoardLayout) -> Result<PinnedSet, GeometryError> {
    layout.inlet.validate(grid, "inlet")?;
    layout.outlet.validate(grid, "outlet")?;
    let top = grid.ny() - 1;
    let mut set = PinnedSet::empty(*grid);
    set.inlet = (layout.inlet.start..=layout.inlet.end)
        .map(|i| (i, 0))
        .collect();
    set.outlet = (layout.outlet.start..=layout.outlet.end)
        .map(|i| (i, top))
        .collect();
    let mut chips: Vec<_> = layout
        .chips
        .iter()
        .flat_map(|c| c.region.cells(grid))
        .collect();
    chips.sort_unstable_by_key(|&(i, j)| (j, i));
    chips.dedup();
    set.chips = chips;
    set.rebuild_union();
    Ok(set)
}
