//! Cell partitions of a truncated line and piecewise-constant functions on them.
//!
//! Values are cell averages. A uniform grid has cells of width `h` centred at
//! `x_j = -X + j h`, so the centre cell straddles the origin.

use std::sync::Arc;

use super::KernelError;
use crate::quad::gl6;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    edges: Vec<f64>,
    /// Half-width of the core region.
    pub x: f64,
    /// Cell width in the core region.
    pub h: f64,
    /// Outer end of the geometric tail, equal to `x` for a uniform grid.
    pub far: f64,
}

impl Grid {
    pub fn uniform(x: f64, h: f64) -> Result<Arc<Self>, KernelError> {
        if !(x > 0.0 && h > 0.0 && h <= x && x.is_finite()) {
            return Err(KernelError::Input(format!("need 0 < h ≤ X, got X={x}, h={h}")));
        }
        let n = (x / h).round() as i64;
        if ((n as f64) * h - x).abs() > 1e-9 * x {
            return Err(KernelError::Input(format!("X={x} is not a multiple of h={h}")));
        }
        let edges = (-n..=n + 1).map(|j| (j as f64 - 0.5) * h).collect();
        Ok(Arc::new(Self { edges, x, h, far: x }))
    }

    /// Uniform core of width `h` on `[-x, x]` (edges at half-integers of `h`),
    /// continued by cells growing geometrically with `ratio` until `far`.
    pub fn graded(x: f64, h: f64, far: f64, ratio: f64) -> Result<Arc<Self>, KernelError> {
        if !(far >= x && ratio > 1.0 && ratio.is_finite() && far.is_finite()) {
            return Err(KernelError::Input(format!(
                "graded tail needs far ≥ X and ratio > 1, got far={far}, ratio={ratio}"
            )));
        }
        let core = Self::uniform(x, h)?;
        let mut right = vec![*core.edges.last().unwrap()];
        let mut w = h;
        while *right.last().unwrap() < far {
            w *= ratio;
            right.push(right.last().unwrap() + w);
        }
        let mut edges: Vec<f64> = right.iter().skip(1).rev().map(|e| -e).collect();
        edges.extend_from_slice(&core.edges);
        edges.extend_from_slice(&right[1..]);
        Ok(Arc::new(Self { edges, x, h, far }))
    }

    /// `(X, h) → (2X, h/2)`; a graded tail also doubles `far` and takes `√ratio`.
    pub fn refined(&self) -> Result<Arc<Self>, KernelError> {
        if self.far > self.x {
            let ratio = self.tail_ratio();
            Self::graded(2.0 * self.x, self.h / 2.0, 2.0 * self.far, ratio.sqrt())
        } else {
            Self::uniform(2.0 * self.x, self.h / 2.0)
        }
    }

    fn tail_ratio(&self) -> f64 {
        let n = self.edges.len();
        (self.edges[n - 1] - self.edges[n - 2]) / (self.edges[n - 2] - self.edges[n - 3])
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Index of the centre cell, the one containing 0.
    pub fn origin_cell(&self) -> usize {
        self.len() / 2
    }

    /// Cells meeting the open interval `(a, b)`, as a half-open index range.
    pub fn cells_meeting(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let e = &self.edges;
        let start = e.partition_point(|&v| v <= a).saturating_sub(1);
        let end = e.partition_point(|&v| v < b).min(self.len());
        if start >= end || b <= e[0] || a >= self.hi() {
            0..0
        } else {
            start..end
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self, KernelError> {
        if values.len() != grid.len() {
            return Err(KernelError::Input(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::Input("non-finite grid value".into()));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    /// Cell averages of `f`.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let (a, b) = grid.cell(i);
                gl6().integrate(a, b, &f) / (b - a)
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    /// Indicator of `[a, b]`, exact on partially covered cells.
    pub fn indicator(grid: &Arc<Grid>, a: f64, b: f64) -> Self {
        let mut out = Self::zeros(grid);
        for i in grid.cells_meeting(a, b) {
            let (lo, hi) = grid.cell(i);
            out.values[i] = (hi.min(b) - lo.max(a)).max(0.0) / (hi - lo);
        }
        out
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().enumerate().map(|(i, v)| v.abs() * self.grid.width(i)).sum()
    }

    pub fn norm2(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v * v * self.grid.width(i))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(i, (a, b))| a * b * self.grid.width(i))
            .sum()
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.values.iter_mut().for_each(|v| *v *= s);
        self
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { grid: self.grid.clone(), values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_is_symmetric_with_odd_count() {
        let g = Grid::uniform(2.0, 0.5).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.center(g.origin_cell()), 0.0);
        assert!((g.center(0) + 2.0).abs() < 1e-15);
        assert!(Grid::uniform(2.0, 0.3).is_err());
        assert!(Grid::uniform(-1.0, 0.1).is_err());
    }

    #[test]
    fn graded_and_refined() {
        let g = Grid::graded(4.0, 0.5, 100.0, 1.5).unwrap();
        assert!(g.hi() >= 100.0 && (g.lo() + g.hi()).abs() < 1e-9);
        assert_eq!(g.len() % 2, 1);
        assert!((g.width(g.len() - 1) / g.width(g.len() - 2) - 1.5).abs() < 1e-9);
        let r = g.refined().unwrap();
        assert_eq!((r.x, r.h, r.far), (8.0, 0.25, 200.0));
        assert!((r.tail_ratio() - 1.5f64.sqrt()).abs() < 1e-9);
        let u = Grid::uniform(1.0, 0.1).unwrap().refined().unwrap();
        assert_eq!(u.len(), 81);
    }

    #[test]
    fn cells_meeting_is_exact() {
        let g = Grid::uniform(1.0, 0.5).unwrap();
        // edges -1.25, -0.75, -0.25, 0.25, 0.75, 1.25
        assert_eq!(g.cells_meeting(-0.25, 0.25), 2..3);
        assert_eq!(g.cells_meeting(-0.3, 0.3), 1..4);
        assert_eq!(g.cells_meeting(5.0, 6.0), 0..0);
        assert_eq!(g.cells_meeting(-9.0, 9.0), 0..5);
    }

    #[test]
    fn norms_of_indicator() {
        let g = Grid::uniform(4.0, 0.01).unwrap();
        let f = GridFunction::indicator(&g, 1.0, 2.0);
        assert!((f.norm1() - 1.0).abs() < 1e-12);
        assert!((f.norm2() - 1.0).abs() < 1e-2);
        assert_eq!(f.norm_inf(), 1.0);
        assert!(GridFunction::new(&g, vec![0.0; 3]).is_err());
    }
}
