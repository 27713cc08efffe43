//! JSON run configuration. Every field is optional; missing fields take the
//! defaults below and unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{BaselineConfig, LoopConfig};
use crate::geometry::{
    default_chips, BoardLayout, Chip, GeometryError, PortSpan, RectRegion, DEFAULT_NX, DEFAULT_NY,
    DEFAULT_SPACING_M, PORT_WIDTH_M,
};
use crate::grid::Grid;
use crate::rd::RDParams;
use crate::thermal::MaterialParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: `{field}` {constraint}")]
    Validation { field: String, constraint: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self::Validation {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

/// Board extent and resolution. The cell counts are `round(width / dx)` and
/// `round(height / dy)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub width: f64,
    pub height: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            width: DEFAULT_NX as f64 * DEFAULT_SPACING_M,
            height: DEFAULT_NY as f64 * DEFAULT_SPACING_M,
            dx: DEFAULT_SPACING_M,
            dy: DEFAULT_SPACING_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipSpec {
    pub label: String,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Watts.
    pub tdp: f64,
}

impl From<&Chip> for ChipSpec {
    fn from(c: &Chip) -> Self {
        Self {
            label: c.region.label.clone(),
            x0: c.region.x0,
            y0: c.region.y0,
            x1: c.region.x1,
            y1: c.region.y1,
            tdp: c.tdp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoardSection {
    pub chips: Vec<ChipSpec>,
    /// Port width in meters; ports are centered unless a span is given.
    pub port_width: f64,
    /// Explicit inclusive inlet cell span `[start, end]` on the `j = 0` edge.
    pub inlet_span: Option<[usize; 2]>,
    /// Explicit inclusive outlet cell span on the `j = ny - 1` edge.
    pub outlet_span: Option<[usize; 2]>,
}

impl Default for BoardSection {
    fn default() -> Self {
        Self {
            chips: default_chips().iter().map(ChipSpec::from).collect(),
            port_width: PORT_WIDTH_M,
            inlet_span: None,
            outlet_span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// Skip PGM heatmaps when true.
    pub no_heatmaps: bool,
    /// Fixed temperature range `[lo, hi]` for heatmaps; auto-range if absent.
    pub heatmap_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSection,
    pub board: BoardSection,
    pub material: MaterialParams,
    pub rd: RDParams,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub baseline: BaselineConfig,
    pub output: OutputSection,
}

fn prefixed(section: &str) -> impl Fn((&'static str, &'static str)) -> ConfigError + '_ {
    move |(field, constraint)| ConfigError::invalid(format!("{section}.{field}"), constraint)
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = &self.grid;
        for (name, v) in [
            ("width", g.width),
            ("height", g.height),
            ("dx", g.dx),
            ("dy", g.dy),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(format!("grid.{name}"), "must be > 0"));
            }
        }
        let nx = (g.width / g.dx).round() as usize;
        let ny = (g.height / g.dy).round() as usize;
        if nx < 3 {
            return Err(ConfigError::invalid(
                "grid.width",
                "must span at least 3 cells",
            ));
        }
        if ny < 3 {
            return Err(ConfigError::invalid(
                "grid.height",
                "must span at least 3 cells",
            ));
        }
        Grid::new(nx, ny, g.dx, g.dy).map_err(|e| ConfigError::invalid("grid", e.to_string()))
    }

    pub fn layout(&self, grid: &Grid) -> Result<BoardLayout, ConfigError> {
        let b = &self.board;
        let chips: Vec<Chip> = b
            .chips
            .iter()
            .map(|c| Chip {
                region: RectRegion::new(c.label.clone(), c.x0, c.y0, c.x1, c.y1),
                tdp: c.tdp,
            })
            .collect();
        let centered = PortSpan::centered(grid, b.port_width).map_err(|e| geometry_error(b, e))?;
        let span =
            |s: Option<[usize; 2]>| s.map_or(centered, |[start, end]| PortSpan { start, end });
        let layout = BoardLayout {
            chips,
            inlet: span(b.inlet_span),
            outlet: span(b.outlet_span),
            port_width: b.port_width,
        };
        layout.validate(grid).map_err(|e| geometry_error(b, e))?;
        Ok(layout)
    }

    /// Checks every section; the error names the first offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        self.layout(&grid)?;
        self.material.check().map_err(prefixed("material"))?;
        self.rd.check().map_err(prefixed("rd"))?;
        self.loop_config.check().map_err(prefixed("loop"))?;
        self.rd
            .validate(&grid, self.loop_config.f_max)
            .map_err(|e| ConfigError::invalid("rd.dt", e.to_string()))?;
        self.baseline.check().map_err(prefixed("baseline"))?;
        let w = self.baseline.channel_width / grid.dx();
        if w.round() < 1.0 || w.round() >= (self.baseline.pitch / grid.dx()).round() {
            return Err(ConfigError::invalid(
                "baseline.channel_width",
                "must rasterize to at least one cell and fewer cells than the pitch",
            ));
        }
        if let Some([lo, hi]) = self.output.heatmap_range {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(ConfigError::invalid(
                    "output.heatmap_range",
                    "needs lo < hi",
                ));
            }
        }
        Ok(())
    }
}

fn geometry_error(board: &BoardSection, e: GeometryError) -> ConfigError {
    let chip_field = |label: &str| {
        let idx = board
            .chips
            .iter()
            .position(|c| c.label == label)
            .unwrap_or(0);
        format!("board.chips[{idx}]")
    };
    let field = match &e {
        GeometryError::DegenerateRect { label }
        | GeometryError::OutsideBoard { label, .. }
        | GeometryError::EmptyFootprint { label } => chip_field(label),
        GeometryError::BadTdp { label, .. } => format!("{}.tdp", chip_field(label)),
        GeometryError::BadSpan { port, .. } => format!("board.{port}_span"),
        GeometryError::PortTooNarrow { .. } => "board.port_width".to_string(),
    };
    ConfigError::invalid(field, e.to_string())
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    RunConfig::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_layout;

    fn field_of(err: ConfigError) -> String {
        match err {
            ConfigError::Validation { field, .. } => field,
            other => panic!("expected a validation error, got {other}"),
        }
    }

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = RunConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let grid = cfg.grid().unwrap();
        let (g, l) = default_layout();
        assert_eq!(grid, g);
        assert_eq!(cfg.layout(&grid).unwrap(), l);
    }

    #[test]
    fn negative_dx_names_the_field() {
        let err = RunConfig::from_json_str(r#"{"grid": {"dx": -1}}"#).unwrap_err();
        assert_eq!(field_of(err), "grid.dx");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json_str(r#"{"rd": {"feed": 0.05}}"#).unwrap_err();
        match err {
            ConfigError::Parse(msg) => assert!(msg.contains("feed"), "{msg}"),
            other => panic!("{other}"),
        }
        let err = RunConfig::from_json_str(r#"{"solver": {}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Parse(m) if m.contains("solver")));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(
            RunConfig::from_json_str("{"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn section_constraints_are_named() {
        let cases = [
            (r#"{"material": {"h_channel": 5}}"#, "material.h_channel"),
            (r#"{"rd": {"d_u": 0.01}}"#, "rd.d_u"),
            (r#"{"rd": {"dt": 1.0}}"#, "rd.dt"),
            (r#"{"loop": {"tau": 1.0}}"#, "loop.tau"),
            (r#"{"loop": {"outer_rounds": 0}}"#, "loop.outer_rounds"),
            (r#"{"baseline": {"pitch": 0.002}}"#, "baseline.pitch"),
            (r#"{"board": {"port_width": 0.0001}}"#, "board.port_width"),
            (
                r#"{"board": {"inlet_span": [10, 500]}}"#,
                "board.inlet_span",
            ),
            (
                r#"{"board": {"chips": [{"label": "a", "x0": 0, "y0": 0, "x1": 0.01, "y1": 0.01, "tdp": 5},
                                         {"label": "b", "x0": 0, "y0": 0, "x1": 0.5, "y1": 0.01, "tdp": 5}]}}"#,
                "board.chips[1]",
            ),
            (r#"{"grid": {"width": 0.002}}"#, "grid.width"),
            (
                r#"{"output": {"heatmap_range": [50, 20]}}"#,
                "output.heatmap_range",
            ),
        ];
        for (text, field) in cases {
            let err = RunConfig::from_json_str(text).unwrap_err();
            assert_eq!(field_of(err), field, "{text}");
        }
    }

    #[test]
    fn explicit_spans_override_centering() {
        let cfg = RunConfig::from_json_str(r#"{"board": {"inlet_span": [10, 35]}}"#).unwrap();
        let grid = cfg.grid().unwrap();
        let layout = cfg.layout(&grid).unwrap();
        assert_eq!(layout.inlet, PortSpan { start: 10, end: 35 });
        assert_eq!(
            layout.outlet,
            PortSpan::centered(&grid, PORT_WIDTH_M).unwrap()
        );
    }

    #[test]
    fn dump_load_is_idempotent() {
        let text = r#"{"grid": {"dx": 0.002, "dy": 0.002}, "loop": {"rng_seed": 7, "plateau_tol": 0.5},
                       "output": {"heatmap_range": [25, 90]}}"#;
        let once = RunConfig::from_json_str(text).unwrap();
        let dumped = once.to_json_string();
        let twice = RunConfig::from_json_str(&dumped).unwrap();
        assert_eq!(once, twice);
        assert_eq!(dumped, twice.to_json_string());
    }
}
