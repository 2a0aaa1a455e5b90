//! Unknown fields `ψ` and the noisy measurement model.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

/// `amplitude · exp(-‖x - center‖² / (2σ²))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussBump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub bandwidth: f64,
}

impl GaussBump {
    pub fn new(center: Vec<f64>, amplitude: f64, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bump bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            center,
            amplitude,
            bandwidth,
        })
    }

    fn eval_scaled(&self, x: &[f64], var_scale: f64) -> f64 {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitude * (-d2 / (2.0 * var_scale * self.bandwidth * self.bandwidth)).exp()
    }
}

/// Values on a regular lattice over the unit square, row 0 at the north
/// edge (`x2 = 1`), column 0 at the west edge (`x1 = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    rows: usize,
    cols: usize,
    /// Original `x1min x1max x2min x2max`; kept for round-tripping only.
    bounds: [f64; 4],
    values: Vec<f64>,
}

impl GridField {
    pub fn new(rows: usize, cols: usize, bounds: [f64; 4], values: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 2x2, got {rows}x{cols}"
            )));
        }
        check_len(rows * cols, values.len())?;
        Ok(Self {
            rows,
            cols,
            bounds,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    /// Unit-square coordinates of lattice point `(row, col)`.
    pub fn node_position(&self, row: usize, col: usize) -> [f64; 2] {
        [
            col as f64 / (self.cols - 1) as f64,
            1.0 - row as f64 / (self.rows - 1) as f64,
        ]
    }

    /// Bilinear interpolation; inputs outside `[0,1]²` are clamped.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let u = snap(x[0].clamp(0.0, 1.0) * (self.cols - 1) as f64);
        let v = snap((1.0 - x[1].clamp(0.0, 1.0)) * (self.rows - 1) as f64);
        let c0 = (u.floor() as usize).min(self.cols - 2);
        let r0 = (v.floor() as usize).min(self.rows - 2);
        let fu = u - c0 as f64;
        let fv = v - r0 as f64;
        let top = self.value(r0, c0) * (1.0 - fu) + self.value(r0, c0 + 1) * fu;
        let bottom = self.value(r0 + 1, c0) * (1.0 - fu) + self.value(r0 + 1, c0 + 1) * fu;
        top * (1.0 - fv) + bottom * fv
    }

    pub fn parse<R: BufRead>(input: R) -> Result<Self> {
        let err = |line: usize, message: String| Error::GridFormat { line, message };
        let mut lines = input.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, l)) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break (i + 1, l);
                    }
                }
                None => return Err(err(1, "missing header".into())),
            }
        };
        let tokens: Vec<&str> = header.1.split_whitespace().collect();
        if tokens.len() != 6 {
            return Err(err(
                header.0,
                format!(
                    "header needs `rows cols x1min x1max x2min x2max`, got {} fields",
                    tokens.len()
                ),
            ));
        }
        let rows: usize = tokens[0]
            .parse()
            .map_err(|e| err(header.0, format!("rows: {e}")))?;
        let cols: usize = tokens[1]
            .parse()
            .map_err(|e| err(header.0, format!("cols: {e}")))?;
        let mut bounds = [0.0; 4];
        for (b, t) in bounds.iter_mut().zip(&tokens[2..]) {
            *b = t
                .parse()
                .map_err(|e| err(header.0, format!("bound `{t}`: {e}")))?;
        }

        let mut values = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, l) in lines {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            if seen == rows {
                return Err(err(i + 1, format!("more than {rows} data rows")));
            }
            let row = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| err(i + 1, e.to_string()))?;
            if row.len() != cols {
                return Err(err(
                    i + 1,
                    format!("expected {cols} values, found {}", row.len()),
                ));
            }
            values.extend(row);
            seen += 1;
        }
        if seen != rows {
            return Err(err(0, format!("expected {rows} data rows, found {seen}")));
        }
        Self::new(rows, cols, bounds, values).map_err(|e| err(header.0, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let [a, b, c, d] = self.bounds;
        writeln!(out, "{} {} {a} {b} {c} {d}", self.rows, self.cols).unwrap();
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }
}

/// Rounds lattice coordinates that are integers up to rounding noise, so
/// grid nodes evaluate to their stored values exactly.
fn snap(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() < 1e-9 {
        r
    } else {
        t
    }
}

/// Deterministic rolling terrain with two peaks, a ridge and a valley,
/// heights in kilometres. Stands in for a real elevation tile.
pub fn synthetic_terrain(rows: usize, cols: usize) -> Result<GridField> {
    let bumps = [
        ([0.3, 0.7], 1.2, 0.12),
        ([0.72, 0.62], 0.8, 0.08),
        ([0.55, 0.22], 0.6, 0.15),
        ([0.5, 0.48], -0.45, 0.06),
        ([0.1, 0.15], -0.2, 0.1),
    ];
    let mut values = Vec::with_capacity(rows * cols);
    let proto = GridField::new(
        rows,
        cols,
        [138.5, 139.0, 34.5, 35.0],
        vec![0.0; rows * cols],
    )?;
    for r in 0..rows {
        for c in 0..cols {
            let [u, v] = proto.node_position(r, c);
            let mut h = 0.25 + 0.08 * (6.0 * u).sin() * (5.0 * v).cos();
            for (p, a, s) in bumps {
                let d2 = (u - p[0]).powi(2) + (v - p[1]).powi(2);
                h += a * (-d2 / (2.0 * s * s)).exp();
            }
            values.push(h.max(0.0));
        }
    }
    GridField::new(rows, cols, proto.bounds, values)
}

/// Modulation rate of the time-varying field, radians per iteration.
pub const TIME_VARYING_RATE: f64 = std::f64::consts::TAU * 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum FieldModel {
    MultiGauss(Vec<GaussBump>),
    /// Two bumps whose variances breathe in opposite phase with period 1000.
    TimeVarying,
    Grid(GridField),
}

impl FieldModel {
    /// `2·exp(-‖x - [0.5,0.7]‖²/(2·0.1²)) + exp(-‖x - [0.3,0.1]‖²/(2·0.3²))`.
    pub fn multi_gauss_default() -> Self {
        Self::MultiGauss(vec![
            GaussBump::new(vec![0.5, 0.7], 2.0, 0.1).expect("valid"),
            GaussBump::new(vec![0.3, 0.1], 1.0, 0.3).expect("valid"),
        ])
    }

    pub fn eval(&self, x: &[f64], k: usize) -> f64 {
        match self {
            Self::MultiGauss(bumps) => bumps.iter().map(|b| b.eval_scaled(x, 1.0)).sum(),
            Self::TimeVarying => {
                // Reducing k first makes the period exact in floating point.
                let s = (TIME_VARYING_RATE * (k % 1000) as f64).sin();
                let d1 = (x[0] - 0.6).powi(2) + (x[1] - 0.5).powi(2);
                let d2 = (x[0] - 0.25).powi(2) + (x[1] - 0.3).powi(2);
                0.8 * (-d1 / (2.0 * (1.0 - 0.5 * s) * 0.09)).exp()
                    + (-d2 / (2.0 * (1.0 + 0.5 * s) * 0.01)).exp()
            }
            Self::Grid(g) => g.eval(x),
        }
    }

    pub fn is_static(&self) -> bool {
        !matches!(self, Self::TimeVarying)
    }

    /// `ψ(x, k) + n` with `n ~ N(0, σ²)`.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        k: usize,
        noise_var: f64,
        rng: &mut R,
    ) -> f64 {
        let clean = self.eval(x, k);
        if noise_var == 0.0 {
            return clean;
        }
        let n: f64 = StandardNormal.sample(rng);
        clean + noise_var.sqrt() * n
    }
}

pub fn load_grid(path: &Path) -> Result<FieldModel> {
    let file = std::fs::File::open(path)?;
    Ok(FieldModel::Grid(GridField::parse(
        std::io::BufReader::new(file),
    )?))
}

pub fn save_grid(grid: &GridField, path: &Path) -> Result<()> {
    std::fs::write(path, grid.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multi_gauss_peak() {
        let f = FieldModel::multi_gauss_default();
        let expected = 2.0 + (-(0.2f64 * 0.2 + 0.6 * 0.6) / 0.18).exp();
        let v = f.eval(&[0.5, 0.7], 0);
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 2.108).abs() < 1e-3);
    }

    #[test]
    fn lone_bump_peak_is_amplitude() {
        let f = FieldModel::MultiGauss(vec![GaussBump::new(vec![0.2, 0.2], 3.5, 0.05).unwrap()]);
        assert_eq!(f.eval(&[0.2, 0.2], 0), 3.5);
        assert!(GaussBump::new(vec![0.0, 0.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn time_varying_phase_zero() {
        let f = FieldModel::TimeVarying;
        let x = [0.4, 0.35];
        let d1: f64 = 0.2 * 0.2 + 0.15 * 0.15;
        let d2: f64 = 0.15 * 0.15 + 0.05 * 0.05;
        let expected = 0.8 * (-d1 / (2.0 * 0.09)).exp() + (-d2 / (2.0 * 0.01)).exp();
        assert!((f.eval(&x, 0) - expected).abs() < 1e-15);
        assert!(!f.is_static());
    }

    #[test]
    fn time_varying_period() {
        let f = FieldModel::TimeVarying;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let k = rng.random_range(0..100_000usize);
            assert_eq!(f.eval(&x, k), f.eval(&x, k + 1000));
        }
        // A quarter period shrinks the first bump's variance by half.
        let at_peak = f.eval(&[0.6, 0.5], 250);
        assert!(at_peak > 0.8);
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let f = FieldModel::multi_gauss_default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            f.measure(&[0.1, 0.9], 0, 0.0, &mut rng),
            f.eval(&[0.1, 0.9], 0)
        );
    }

    #[test]
    fn noise_variance_matches() {
        let f = FieldModel::multi_gauss_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = [0.4, 0.6];
        let psi = f.eval(&x, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| f.measure(&x, 0, 0.3, &mut rng) - psi)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 0.3).abs() / 0.3 < 0.03, "{var}");
    }

    #[test]
    fn constant_grid() {
        let g = GridField::new(2, 2, [0.0, 1.0, 0.0, 1.0], vec![4.2; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            assert!((g.eval(&x) - 4.2).abs() < 1e-14);
        }
    }

    #[test]
    fn bilinear_midpoint() {
        let g = GridField::new(2, 2, [0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.eval(&[0.5, 0.2]), 0.5);
        assert_eq!(g.eval(&[0.5, 0.9]), 0.5);
        assert_eq!(g.eval(&[0.25, 0.5]), 0.25);
        // Clamped outside the square.
        assert_eq!(g.eval(&[1.7, -3.0]), 1.0);
    }

    #[test]
    fn north_row_comes_first() {
        let g = GridField::new(2, 2, [0.0, 1.0, 0.0, 1.0], vec![5.0, 5.0, 1.0, 1.0]).unwrap();
        assert_eq!(g.eval(&[0.3, 1.0]), 5.0);
        assert_eq!(g.eval(&[0.3, 0.0]), 1.0);
    }

    #[test]
    fn grid_points_reproduced_exactly() {
        let g = synthetic_terrain(31, 31).unwrap();
        for r in 0..31 {
            for c in 0..31 {
                let p = g.node_position(r, c);
                assert_eq!(g.eval(&p), g.value(r, c), "({r},{c})");
            }
        }
    }

    #[test]
    fn terrain_round_trips_exactly() {
        let g = synthetic_terrain(31, 31).unwrap();
        let text = g.to_text();
        let back = GridField::parse(text.as_bytes()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_text(), text);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("terrain.txt");
        save_grid(&g, &path).unwrap();
        assert_eq!(load_grid(&path).unwrap(), FieldModel::Grid(g));
    }

    #[test]
    fn terrain_is_rough_and_deterministic() {
        let g = synthetic_terrain(31, 31).unwrap();
        assert_eq!(g, synthetic_terrain(31, 31).unwrap());
        let max = g.values.iter().cloned().fold(f64::MIN, f64::max);
        let min = g.values.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max - min > 1.0);
        assert!(min >= 0.0);
    }

    #[test]
    fn malformed_grids_are_rejected() {
        let cases = [
            "",
            "2 2 0 1 0\n1 2\n3 4\n",
            "2 x 0 1 0 1\n1 2\n3 4\n",
            "2 2 0 1 0 1\n1 2\n3\n",
            "2 2 0 1 0 1\n1 2\n3 four\n",
            "2 2 0 1 0 1\n1 2\n",
            "2 2 0 1 0 1\n1 2\n3 4\n5 6\n",
            "1 2 0 1 0 1\n1 2\n",
        ];
        for text in cases {
            assert!(
                matches!(
                    GridField::parse(text.as_bytes()),
                    Err(Error::GridFormat { .. })
                ),
                "{text:?}"
            );
        }
        let ok = "2 2 0 1 0 1\n1 2\n3 4\n\n";
        assert!(GridField::parse(ok.as_bytes()).is_ok());
    }

    #[test]
    fn fields_are_deterministic() {
        let f = FieldModel::TimeVarying;
        assert_eq!(f.eval(&[0.3, 0.3], 17), f.eval(&[0.3, 0.3], 17));
    }
}
