//! Real functions sampled on uniform grids.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A uniform grid `min, min + step, ..., max` with at least two points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    min: f64,
    max: f64,
    points: usize,
}

impl UniformGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidInput(format!(
                "a grid needs at least 2 points, got {points}"
            )));
        }
        if !(min.is_finite() && max.is_finite() && max > min) {
            return Err(Error::InvalidInput(format!(
                "grid bounds must be finite with max > min, got [{min}, {max}]"
            )));
        }
        Ok(Self { min, max, points })
    }

    /// Grid with spacing `step` from `min` up to `max` (rounded to the
    /// nearest whole number of steps).
    pub fn with_step(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!("grid step must be positive, got {step}")));
        }
        let cells = ((max - min) / step).round() as usize;
        Self::new(min, min + cells as f64 * step, cells + 1)
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }
}

/// A labelled real function on a [`UniformGrid`], optionally carrying a
/// per-point error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    label: String,
    grid: UniformGrid,
    values: Vec<f64>,
    err_est: Option<Vec<f64>>,
}

impl Curve {
    pub fn new(label: impl Into<String>, grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "curve has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { label: label.into(), grid, values, err_est: None })
    }

    pub fn from_fn(label: impl Into<String>, grid: UniformGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { label: label.into(), grid, values, err_est: None }
    }

    pub fn with_err_est(mut self, err: Vec<f64>) -> Result<Self> {
        if err.len() != self.values.len() {
            return Err(Error::InvalidInput("error estimate length mismatch".into()));
        }
        self.err_est = Some(err);
        Ok(self)
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn err_est(&self) -> Option<&[f64]> {
        self.err_est.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.grid.x(i), v))
    }

    /// Piecewise-linear evaluation; clamps to the end values outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let g = &self.grid;
        if x <= g.min() {
            return self.values[0];
        }
        if x >= g.max() {
            return self.values[self.values.len() - 1];
        }
        let t = (x - g.min()) / g.step();
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Pointwise map over values, keeping the grid; drops error estimates.
    pub fn map(&self, label: impl Into<String>, f: impl Fn(f64, f64) -> f64) -> Curve {
        let values = self.points().map(|(x, v)| f(x, v)).collect();
        Curve { label: label.into(), grid: self.grid, values, err_est: None }
    }

    pub fn scaled(&self, factor: f64) -> Curve {
        let mut out = self.map(self.label.clone(), |_, v| v * factor);
        out.err_est = self
            .err_est
            .as_ref()
            .map(|e| e.iter().map(|x| x * factor.abs()).collect());
        out
    }

    /// The first `len` points.
    pub fn truncated(&self, len: usize) -> Result<Curve> {
        let len = len.min(self.len());
        let grid = UniformGrid::new(self.grid.min(), self.grid.x(len - 1), len)?;
        let out = Curve::new(self.label.clone(), grid, self.values[..len].to_vec())?;
        match &self.err_est {
            Some(e) => out.with_err_est(e[..len].to_vec()),
            None => Ok(out),
        }
    }

    pub fn same_grid(&self, other: &Curve) -> bool {
        self.grid == other.grid
    }

    /// Writes `s,value,err_est` rows with 17 significant digits. A missing
    /// error estimate is written as 0.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["s", "value", "err_est"])?;
        for i in 0..self.len() {
            let err = self.err_est.as_ref().map_or(0.0, |e| e[i]);
            w.write_record([fmt_f64(self.x(i)), fmt_f64(self.values[i]), fmt_f64(err)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a curve written by [`Curve::write_csv`]; the abscissae must form
    /// a uniform grid.
    pub fn read_csv<R: Read>(reader: R, label: impl Into<String>) -> Result<Curve> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["s", "value", "err_est"] {
            return Err(Error::Parse(format!("unexpected curve header {headers:?}")));
        }
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        let mut es = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            xs.push(parse_f64(&rec[0])?);
            vs.push(parse_f64(&rec[1])?);
            es.push(parse_f64(&rec[2])?);
        }
        let grid = grid_from_nodes(&xs)?;
        Curve::new(label, grid, vs)?.with_err_est(es)
    }
}

/// Recovers a [`UniformGrid`] from explicit nodes, checking uniformity.
pub fn grid_from_nodes(xs: &[f64]) -> Result<UniformGrid> {
    if xs.len() < 2 {
        return Err(Error::Parse("curve needs at least 2 rows".into()));
    }
    let grid = UniformGrid::new(xs[0], xs[xs.len() - 1], xs.len())?;
    let tol = 1e-9 * grid.step();
    for (i, &x) in xs.iter().enumerate() {
        if (x - grid.x(i)).abs() > tol {
            return Err(Error::Parse(format!("abscissa {x} at row {i} is off the uniform grid")));
        }
    }
    Ok(grid)
}

/// Formats with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("bad number {s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_are_exact() {
        let g = UniformGrid::new(0.0, 1.0, 11).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(10), 1.0);
        assert!((g.step() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_degenerate() {
        assert!(UniformGrid::new(0.0, 1.0, 1).is_err());
        assert!(UniformGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn with_step_rounds_to_whole_cells() {
        let g = UniformGrid::with_step(0.0, 1.0, 0.01).unwrap();
        assert_eq!(g.len(), 101);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = UniformGrid::new(0.0, 1.0, 7).unwrap();
        let c = Curve::from_fn("c", g, |x| (x * 3.1).sin() / 7.0)
            .with_err_est(vec![1e-17, 0.0, 3.3, 1.0 / 3.0, 0.0, 2.0, 5e-300])
            .unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let back = Curve::read_csv(buf.as_slice(), "c").unwrap();
        assert_eq!(back.values(), c.values());
        assert_eq!(back.err_est(), c.err_est());
    }

    #[test]
    fn linear_evaluation() {
        let g = UniformGrid::new(0.0, 2.0, 3).unwrap();
        let c = Curve::new("c", g, vec![0.0, 2.0, 6.0]).unwrap();
        assert_eq!(c.value_at(0.5), 1.0);
        assert_eq!(c.value_at(1.5), 4.0);
        assert_eq!(c.value_at(5.0), 6.0);
    }
}
