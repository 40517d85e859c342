use std::ops::Range;

use crate::error::{Error, Result};

/// A univariate basis evaluated sparsely: only the functions that can be
/// nonzero at `x` are reported.
pub trait Basis {
    fn num_functions(&self) -> usize;

    /// Upper bound on the number of functions active at any point.
    fn max_active(&self) -> usize;

    /// Writes the values and first derivatives of the active functions into
    /// the front of `values` / `derivs` (each at least `max_active` long) and
    /// returns the indices they belong to. An empty range means every
    /// function vanishes at `x`.
    fn eval_active(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) -> Range<usize>;
}

pub const MAX_DEGREE: usize = 15;

/// Uniform knot vector extended by `degree` steps past `[min, max]` on both
/// sides.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineGrid {
    min: f64,
    max: f64,
    grid_size: usize,
    degree: usize,
    step: f64,
    knots: Vec<f64>,
}

/// Builds the extended uniform grid: `2·degree + grid_size + 1` knots with
/// step `(max − min) / grid_size` spanning `[min − degree·h, max + degree·h]`.
pub fn build_grid(min: f64, max: f64, grid_size: usize, degree: usize) -> Result<SplineGrid> {
    if !(min.is_finite() && max.is_finite() && max > min) {
        return Err(Error::invalid(format!("spline grid needs max > min, got [{min}, {max}]")));
    }
    if grid_size == 0 || degree == 0 {
        return Err(Error::invalid("spline grid size and degree must be at least 1"));
    }
    if degree > MAX_DEGREE {
        return Err(Error::invalid(format!("spline degree above {MAX_DEGREE} is not supported")));
    }
    let step = (max - min) / grid_size as f64;
    let count = 2 * degree + grid_size + 1;
    let knots = (0..count)
        .map(|k| min + (k as f64 - degree as f64) * step)
        .collect();
    Ok(SplineGrid {
        min,
        max,
        grid_size,
        degree,
        step,
        knots,
    })
}

impl SplineGrid {
    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

impl Basis for SplineGrid {
    fn num_functions(&self) -> usize {
        self.grid_size + self.degree
    }

    fn max_active(&self) -> usize {
        self.degree + 1
    }

    fn eval_active(&self, x: f64, values: &mut [f64], derivs: &mut [f64]) -> Range<usize> {
        let p = self.degree;
        let t0 = self.knots[0];
        let intervals = self.knots.len() - 1;
        let pos = (x - t0) / self.step;
        if !(pos >= 0.0) || pos >= intervals as f64 {
            return 0..0;
        }
        let span = (pos.floor() as usize).min(intervals - 1);
        let u = pos - span as f64;

        // Uniform Cox–de Boor triangle on the span; local index k of degree d
        // is the function starting at knot span − d + k.
        let mut cur = [0.0; MAX_DEGREE + 1];
        let mut prev = [0.0; MAX_DEGREE + 1];
        cur[0] = 1.0;
        for d in 1..=p {
            std::mem::swap(&mut cur, &mut prev);
            let df = d as f64;
            for k in 0..=d {
                let mut v = 0.0;
                if k >= 1 {
                    v += (u + df - k as f64) / df * prev[k - 1];
                }
                if k < d {
                    v += (k as f64 + 1.0 - u) / df * prev[k];
                }
                cur[k] = v;
            }
        }
        // prev holds degree p − 1 values
        let first = span as isize - p as isize;
        let lo = first.max(0) as usize;
        let hi = ((span + 1).min(self.num_functions())).max(lo);
        for (slot, i) in (lo..hi).enumerate() {
            let k = (i as isize - first) as usize;
            values[slot] = cur[k];
            let left = if k >= 1 { prev[k - 1] } else { 0.0 };
            let right = if k < p { prev[k] } else { 0.0 };
            derivs[slot] = if p == 0 { 0.0 } else { (left - right) / self.step };
        }
        lo..hi
    }
}

/// Dense vector of all basis values at `x`.
pub fn bspline_basis(x: f64, grid: &SplineGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.num_functions()];
    let mut values = vec![0.0; grid.max_active()];
    let mut derivs = vec![0.0; grid.max_active()];
    let range = grid.eval_active(x, &mut values, &mut derivs);
    for (slot, i) in range.enumerate() {
        out[i] = values[slot];
    }
    out
}

/// Textbook recursive definition of `B_{i,degree}` on an arbitrary knot
/// vector, with half-open degree-0 indicators.
pub fn cox_de_boor(knots: &[f64], i: usize, degree: usize, x: f64) -> f64 {
    if degree == 0 {
        return if knots[i] <= x && x < knots[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let left = knots[i + degree] - knots[i];
    if left > 0.0 {
        v += (x - knots[i]) / left * cox_de_boor(knots, i, degree - 1, x);
    }
    let right = knots[i + degree + 1] - knots[i + 1];
    if right > 0.0 {
        v += (knots[i + degree + 1] - x) / right * cox_de_boor(knots, i + 1, degree - 1, x);
    }
    v
}
