#![allow(dead_code)]

use coldgen::thermal::MaterialParams;
use coldgen::{Grid, ScalarField};
use nalgebra::{DMatrix, DVector};

/// Direct LU solve of the five-point heat balance with mirrored
/// (zero-flux) edges, assembled cell by cell from the conductances.
pub fn dense_solve(q: &ScalarField, h: &ScalarField, p: &MaterialParams) -> Vec<f64> {
    let g = *q.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let n = g.len();
    let gx = p.k * p.thickness / (g.dx() * g.dx());
    let gy = p.k * p.thickness / (g.dy() * g.dy());
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let mut link = |other: usize, c: f64| {
                a[(k, k)] += c;
                a[(k, other)] -= c;
            };
            if i > 0 {
                link(k - 1, gx);
            }
            if i + 1 < nx {
                link(k + 1, gx);
            }
            if j > 0 {
                link(k - nx, gy);
            }
            if j + 1 < ny {
                link(k + nx, gy);
            }
            a[(k, k)] += h.values()[k];
            b[k] = q.values()[k] + h.values()[k] * p.t_coolant;
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .expect("heat balance matrix is nonsingular");
    x.iter().copied().collect()
}

pub fn small_grid(nx: usize, ny: usize) -> Grid {
    Grid::new(nx, ny, 0.001, 0.001).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A 40x48 mm board with three chips and a short design loop, small
/// enough for end-to-end tests.
pub const SMALL_CONFIG: &str = r#"{
  "grid": { "width": 0.04, "height": 0.048, "dx": 0.001, "dy": 0.001 },
  "board": {
    "chips": [
      { "label": "gpu_a", "x0": 0.006, "y0": 0.008, "x1": 0.018, "y1": 0.020, "tdp": 200.0 },
      { "label": "gpu_b", "x0": 0.022, "y0": 0.008, "x1": 0.034, "y1": 0.020, "tdp": 200.0 },
      { "label": "cpu", "x0": 0.015, "y0": 0.032, "x1": 0.025, "y1": 0.040, "tdp": 50.0 }
    ],
    "port_width": 0.01
  },
  "loop": { "outer_rounds": 3, "rd_steps_per_round": 400 }
}
"#;
