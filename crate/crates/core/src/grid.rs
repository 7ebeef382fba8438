//! Uniform lattices on `[0,1]^d` and functions sampled on them.
//!
//! Every process in the crate (copulas, empirical copulas, perturbations,
//! the `A_n`/`B_n` processes) lives on one shared [`Grid`], so sup-distances
//! are plain maxima over stored node values.

use crate::error::{Error, Result};

/// Slack applied to node coordinates when testing region membership.
pub const REGION_TOL: f64 = 1e-12;

/// Default points per axis for bivariate work.
pub const DEFAULT_M_2D: usize = 101;
/// Default points per axis for trivariate work.
pub const DEFAULT_M_3D: usize = 41;

/// Lattice `{0, 1/(m-1), ..., 1}^d`, stored implicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    d: usize,
    m: usize,
}

impl Grid {
    pub fn new(d: usize, m: usize) -> Result<Self> {
        if d == 0 || d > 4 {
            return Err(Error::Usage(format!("grid dimension must be in 1..=4, got {d}")));
        }
        if m < 2 {
            return Err(Error::Usage(format!("grid needs at least 2 points per axis, got {m}")));
        }
        if m.checked_pow(d as u32).is_none_or(|n| n > 50_000_000) {
            return Err(Error::Usage(format!("grid {m}^{d} is too large")));
        }
        Ok(Grid { d, m })
    }

    /// Grid with the default resolution for `d` (101 for `d <= 2`, 41 otherwise).
    pub fn default_for(d: usize) -> Result<Self> {
        Grid::new(d, if d <= 2 { DEFAULT_M_2D } else { DEFAULT_M_3D })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of the `k`-th node along any axis; `coord(0) == 0` and
    /// `coord(m-1) == 1` exactly.
    #[inline]
    pub fn coord(&self, k: usize) -> f64 {
        if k + 1 == self.m {
            1.0
        } else {
            k as f64 / (self.m - 1) as f64
        }
    }

    /// All axis coordinates, in increasing order.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.m).map(|k| self.coord(k)).collect()
    }

    /// Row-major flat index of a multi-index (axis 0 varies slowest).
    #[inline]
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &k| acc * self.m + k)
    }

    /// Inverse of [`Grid::flat_index`].
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.m;
            flat /= self.m;
        }
    }

    /// Node coordinates of a flat index.
    pub fn node(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for slot in out.iter_mut().rev() {
            *slot = self.coord(rest % self.m);
            rest /= self.m;
        }
    }

    /// Index of `x` along an axis if `x` is exactly a node coordinate.
    pub fn node_position(&self, x: f64) -> Option<usize> {
        let k = (x * (self.m - 1) as f64).round();
        if !(0.0..=(self.m - 1) as f64).contains(&k) {
            return None;
        }
        let k = k as usize;
        (self.coord(k) == x).then_some(k)
    }

    /// Flat index of `u^(j)`: every coordinate at the top node except axis
    /// `j`, which keeps `multi[j]`.
    pub fn slice_index(&self, multi: &[usize], j: usize) -> usize {
        (0..self.d).fold(0, |acc, axis| {
            acc * self.m + if axis == j { multi[axis] } else { self.m - 1 }
        })
    }
}

/// The box `[lower, upper]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub lower: f64,
    pub upper: f64,
}

impl Region {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower > upper {
            return Err(Error::Domain(format!("invalid region [{lower}, {upper}]")));
        }
        Ok(Region { lower, upper })
    }

    pub fn full() -> Self {
        Region { lower: 0.0, upper: 1.0 }
    }

    /// `[eps * t^vartheta, 1 - eps * t^vartheta]`, the region that shrinks
    /// towards the full cube as the rate `t` goes to zero.
    pub fn shrunk(eps: f64, t: f64, vartheta: f64) -> Result<Self> {
        if !(eps > 0.0) || !(t > 0.0) || !(vartheta > 0.0 && vartheta <= 1.0) {
            return Err(Error::Domain(format!(
                "shrunk region needs eps > 0, t > 0, vartheta in (0,1]; got {eps}, {t}, {vartheta}"
            )));
        }
        let width = eps * t.powf(vartheta);
        if width >= 0.5 {
            return Err(Error::Domain(format!("degenerate region: margin {width} >= 1/2")));
        }
        Ok(Region {
            lower: width,
            upper: 1.0 - width,
        })
    }

    #[inline]
    pub fn contains_coord(&self, x: f64) -> bool {
        x >= self.lower - REGION_TOL && x <= self.upper + REGION_TOL
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().all(|&x| self.contains_coord(x))
    }

    /// Per-axis mask of lattice positions inside the region.
    pub fn axis_mask(&self, grid: &Grid) -> Vec<bool> {
        (0..grid.points_per_axis())
            .map(|k| self.contains_coord(grid.coord(k)))
            .collect()
    }
}

/// `[eps n^{-vartheta/2}, 1 - eps n^{-vartheta/2}]^d`.
pub fn shrink_region(eps: f64, n: usize, vartheta: f64) -> Result<Region> {
    if n == 0 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    Region::shrunk(eps, (n as f64).sqrt().recip(), vartheta)
}

/// Values of a function at every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Usage(format!(
                "grid has {} nodes but {} values were supplied",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("grid values must be finite, found {bad}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at every node.
    ///
    /// Panics if `f` returns a non-finite value.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut u = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|idx| {
                grid.node(idx, &mut u);
                let v = f(&u);
                assert!(v.is_finite(), "non-finite value {v} at node {u:?}");
                v
            })
            .collect();
        GridFunction { grid, values }
    }

    pub(crate) fn from_values_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, multi: &[usize]) -> f64 {
        self.values[self.grid.flat_index(multi)]
    }

    /// Multilinear interpolation; exact at nodes.
    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        let d = self.grid.dim();
        if u.len() != d {
            return Err(Error::Usage(format!("point has {} coordinates, grid has {d}", u.len())));
        }
        if let Some(x) = u.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("coordinate {x} outside [0,1]")));
        }
        Ok(self.interpolate(u))
    }

    pub(crate) fn interpolate(&self, u: &[f64]) -> f64 {
        let m = self.grid.points_per_axis();
        // Per axis: (lower index, weight of upper neighbour); weight 0 means exact node.
        let mut cells = [(0usize, 0.0f64); 4];
        for (cell, &x) in cells.iter_mut().zip(u) {
            *cell = match self.grid.node_position(x) {
                Some(k) => (k, 0.0),
                None => {
                    let t = x * (m - 1) as f64;
                    let i = (t.floor() as usize).min(m - 2);
                    (i, t - i as f64)
                }
            };
        }
        let d = u.len();
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut flat = 0;
            let mut skip = false;
            for (axis, &(i, w)) in cells[..d].iter().enumerate() {
                let upper = corner >> (d - 1 - axis) & 1 == 1;
                if upper && w == 0.0 {
                    skip = true;
                    break;
                }
                weight *= if upper { w } else { 1.0 - w };
                flat = flat * m + i + usize::from(upper);
            }
            if !skip {
                total += weight * self.values[flat];
            }
        }
        total
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Usage(format!(
                "grid mismatch: {:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    /// Max over lattice nodes inside `region` of `|self - other|`.
    pub fn sup_diff(&self, other: &GridFunction, region: Region) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.sup_over(region, |idx| (self.values[idx] - other.values[idx]).abs()))
    }

    /// Max over lattice nodes inside `region` of `|self|`.
    pub fn sup_abs(&self, region: Region) -> f64 {
        self.sup_over(region, |idx| self.values[idx].abs())
    }

    fn sup_over(&self, region: Region, f: impl Fn(usize) -> f64) -> f64 {
        let mask = region.axis_mask(&self.grid);
        let mut multi = vec![0usize; self.grid.dim()];
        let mut best = 0.0f64;
        for idx in 0..self.grid.len() {
            self.grid.multi_index(idx, &mut multi);
            if multi.iter().all(|&k| mask[k]) {
                best = best.max(f(idx));
            }
        }
        best
    }

    /// `a * self + b * other`, node-wise.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn scale(&self, a: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nodes_hit_both_ends() {
        let g = Grid::new(2, 101).unwrap();
        assert_eq!(g.coord(0), 0.0);
        assert_eq!(g.coord(100), 1.0);
        assert_eq!(g.len(), 101 * 101);
        assert_eq!(GridFunction::zeros(g).values().len(), g.len());
    }

    #[test]
    fn eval_examples() {
        let g = Grid::new(2, 3).unwrap();
        let zero = GridFunction::zeros(g);
        assert_eq!(zero.eval(&[0.37, 0.61]).unwrap(), 0.0);
        let uv = GridFunction::from_fn(g, |u| u[0] * u[1]);
        assert_eq!(uv.eval(&[0.5, 0.5]).unwrap(), 0.25);
        // Corners of the cell [0,0.5]^2 carry 0, 0, 0, 0.25.
        assert!((uv.eval(&[0.25, 0.25]).unwrap() - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn eval_rejects_outside_points() {
        let g = Grid::new(2, 5).unwrap();
        let f = GridFunction::zeros(g);
        assert!(matches!(f.eval(&[1.2, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(f.eval(&[0.5]), Err(Error::Usage(_))));
    }

    #[test]
    fn sup_diff_examples() {
        let g = Grid::new(2, 5).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0);
        let zero = GridFunction::zeros(g);
        assert_eq!(one.sup_diff(&one, Region::full()).unwrap(), 0.0);
        assert_eq!(one.sup_diff(&zero, Region::full()).unwrap(), 1.0);
        let u = GridFunction::from_fn(g, |u| u[0]);
        let r = Region::new(0.0, 0.5).unwrap();
        assert_eq!(u.sup_diff(&zero, r).unwrap(), 0.5);
    }

    #[test]
    fn sup_diff_rejects_mismatched_grids() {
        let a = GridFunction::zeros(Grid::new(2, 5).unwrap());
        let b = GridFunction::zeros(Grid::new(2, 6).unwrap());
        assert!(matches!(a.sup_diff(&b, Region::full()), Err(Error::Usage(_))));
    }

    #[test]
    fn shrink_region_examples() {
        let r = shrink_region(1.0, 100, 1.0).unwrap();
        assert!((r.lower - 0.1).abs() < 1e-15 && (r.upper - 0.9).abs() < 1e-15);
        let r = shrink_region(2.0, 400, 1.0).unwrap();
        assert!((r.lower - 0.1).abs() < 1e-15 && (r.upper - 0.9).abs() < 1e-15);
        let r = shrink_region(1.0, 256, 0.5).unwrap();
        assert!((r.lower - 0.25).abs() < 1e-15 && (r.upper - 0.75).abs() < 1e-15);
        assert!(matches!(shrink_region(5.0, 4, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn shrink_region_grows_with_n() {
        let mut prev = shrink_region(1.0, 10, 0.7).unwrap();
        for n in [20, 50, 100, 1000, 10_000] {
            let r = shrink_region(1.0, n, 0.7).unwrap();
            assert!(r.lower < prev.lower && r.upper > prev.upper);
            prev = r;
        }
    }

    #[test]
    fn slice_index_points_at_u_j() {
        let g = Grid::new(3, 5).unwrap();
        let idx = g.slice_index(&[1, 2, 3], 1);
        let mut u = [0.0; 3];
        g.node(idx, &mut u);
        assert_eq!(u, [1.0, 0.5, 1.0]);
    }

    fn random_function(d: usize, m: usize) -> impl Strategy<Value = GridFunction> {
        let g = Grid::new(d, m).unwrap();
        prop::collection::vec(-5.0f64..5.0, g.len()).prop_map(move |v| GridFunction::from_values(g, v).unwrap())
    }

    proptest! {
        #[test]
        fn eval_is_exact_at_nodes(f in random_function(2, 7)) {
            let mut u = [0.0; 2];
            for idx in 0..f.grid().len() {
                f.grid().node(idx, &mut u);
                prop_assert_eq!(f.eval(&u).unwrap().to_bits(), f.values()[idx].to_bits());
            }
        }

        #[test]
        fn sup_diff_is_a_pseudometric(
            f in random_function(2, 6),
            g in random_function(2, 6),
            h in random_function(2, 6),
            lo in 0.0f64..0.5,
        ) {
            let r = Region::new(lo, 1.0 - lo).unwrap();
            let fg = f.sup_diff(&g, r).unwrap();
            prop_assert_eq!(fg, g.sup_diff(&f, r).unwrap());
            prop_assert_eq!(f.sup_diff(&f, r).unwrap(), 0.0);
            let fh = f.sup_diff(&h, r).unwrap();
            let hg = h.sup_diff(&g, r).unwrap();
            prop_assert!(fg <= fh + hg + 1e-12);
        }

        #[test]
        fn eval_three_dims_exact(f in random_function(3, 4)) {
            let mut u = [0.0; 3];
            for idx in 0..f.grid().len() {
                f.grid().node(idx, &mut u);
                prop_assert_eq!(f.eval(&u).unwrap(), f.values()[idx]);
            }
        }
    }
}
