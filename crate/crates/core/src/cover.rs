//! Covers of metric spaces and the disjoint partitions they induce.
//!
//! Three partition shapes are supported:
//!
//! * axis-aligned grids over a box, with cell side chosen so every cell has
//!   diameter at most `gamma` under the metric;
//! * ball covers, where cell `i` is the closed ball of radius `gamma / 2`
//!   around center `i` minus all earlier balls (first match wins);
//! * products of an input partition with a label partition, either the two
//!   binary labels or a grid over a bounded output interval.
//!
//! Cell indices are zero-based. Grid cells are half-open `[a, b)` along every
//! axis except the last cell, which is closed so that the box is covered.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default ceiling on the number of cells of any partition.
pub const DEFAULT_MAX_CELLS: u64 = 10_000_000;

/// Rejection attempts per probe when sampling inside a ball-difference cell.
const BALL_REJECTION_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Sup,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Sup => diffs.fold(0.0, f64::max),
        }
    }

    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Metric::Sup => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    /// Norm dual to this one: `|<w, v>| <= dual_norm(w) * norm(v)`.
    pub fn dual_norm(self, w: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => Metric::Euclidean.norm(w),
            Metric::Sup => w.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Side of an axis-aligned cube in `dim` dimensions whose diameter is `gamma`.
    pub fn cube_side(self, gamma: f64, dim: usize) -> f64 {
        match self {
            Metric::Euclidean => gamma / (dim as f64).sqrt(),
            Metric::Sup => gamma,
        }
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_m, hi_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxSpace {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl TryFrom<RawBox> for BoxSpace {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoxSpace::new(raw.lo, raw.hi)
    }
}

impl BoxSpace {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() {
            return Err(Error::EmptyInput("box with zero coordinates"));
        }
        if lo.len() != hi.len() {
            return Err(Error::param(format!(
                "box bounds have {} lower and {} upper coordinates",
                lo.len(),
                hi.len()
            )));
        }
        for (j, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::param(format!(
                    "box coordinate {j}: need finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(BoxSpace { lo, hi })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxSpace::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    /// Cartesian product `self x other`, coordinates concatenated.
    pub fn product(&self, other: &BoxSpace) -> BoxSpace {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        BoxSpace { lo, hi }
    }

    /// Largest norm of any point of the box (attained at a corner).
    pub fn max_norm(&self, metric: Metric) -> f64 {
        let far: Vec<f64> = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| l.abs().max(h.abs()))
            .collect();
        metric.norm(&far)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| rng.random_range(*l..*h))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Box(BoxSpace),
    Points(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpace {
    pub space: Space,
    pub metric: Metric,
}

impl MetricSpace {
    pub fn boxed(space: BoxSpace, metric: Metric) -> Self {
        MetricSpace {
            space: Space::Box(space),
            metric,
        }
    }

    pub fn points(points: Vec<Vec<f64>>, metric: Metric) -> Result<Self> {
        let dim = points
            .first()
            .ok_or(Error::EmptyInput("finite point set"))?
            .len();
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::param("points of a finite space differ in dimension"));
        }
        Ok(MetricSpace {
            space: Space::Points(points),
            metric,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.space {
            Space::Box(b) => b.dim(),
            Space::Points(p) => p[0].len(),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match &self.space {
            Space::Box(b) => b.contains(z),
            Space::Points(p) => p.iter().any(|q| q.as_slice() == z),
        }
    }

    pub fn as_box(&self) -> Result<&BoxSpace> {
        match &self.space {
            Space::Box(b) => Ok(b),
            Space::Points(_) => Err(Error::UnsupportedSpace(
                "a box is required, got a finite point set".into(),
            )),
        }
    }
}

/// Output (label) space of a supervised problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OutputSpace {
    /// Labels `-1` and `+1`.
    Binary,
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl OutputSpace {
    pub fn contains(&self, y: f64) -> bool {
        match *self {
            OutputSpace::Binary => y == 1.0 || y == -1.0,
            OutputSpace::Interval { lo, hi } => lo <= y && y <= hi,
        }
    }
}

/// Disjoint cells covering a space, with a deterministic membership rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    gamma: f64,
    cells: Cells,
}

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Grid(Grid),
    Cover(BallCover),
    Product(Product),
}

#[derive(Debug, Clone, PartialEq)]
struct Grid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    side: f64,
    counts: Vec<usize>,
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct BallCover {
    centers: Vec<Vec<f64>>,
    radius: f64,
    metric: Metric,
    domain: Space,
}

#[derive(Debug, Clone, PartialEq)]
struct Product {
    input: Box<Partition>,
    input_dim: usize,
    output: LabelCells,
}

#[derive(Debug, Clone, PartialEq)]
enum LabelCells {
    Binary,
    Interval { grid: Grid },
}

/// Number of intervals of width `side` needed to cover `[lo, hi]`.
fn interval_count(lo: f64, hi: f64, side: f64) -> f64 {
    let range = hi - lo;
    let mut n = (range / side).ceil().max(1.0);
    // rounding can push an exact multiple one cell too far
    if n > 1.0 && (n - 1.0) * side >= range {
        n -= 1.0;
    }
    n
}

fn check_limit(cells: f64, limit: u64) -> Result<usize> {
    if !cells.is_finite() || cells > limit as f64 {
        return Err(Error::PartitionTooLarge { cells, limit });
    }
    Ok(cells as usize)
}

impl Grid {
    fn new(lo: &[f64], hi: &[f64], side: f64, limit: u64) -> Result<Grid> {
        let counts_f: Vec<f64> = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| interval_count(*l, *h, side))
            .collect();
        let len = check_limit(counts_f.iter().product(), limit)?;
        Ok(Grid {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
            side,
            counts: counts_f.into_iter().map(|c| c as usize).collect(),
            len,
        })
    }

    fn index(&self, z: &[f64]) -> Result<usize> {
        if z.len() != self.lo.len() {
            return Err(Error::OutOfSpace(z.to_vec()));
        }
        let mut idx = 0usize;
        for (j, &x) in z.iter().enumerate() {
            if !(self.lo[j] <= x && x <= self.hi[j]) {
                return Err(Error::OutOfSpace(z.to_vec()));
            }
            let i = (((x - self.lo[j]) / self.side).floor() as usize).min(self.counts[j] - 1);
            idx = idx * self.counts[j] + i;
        }
        Ok(idx)
    }

    /// Per-axis `[a, b]` bounds of a cell.
    fn bounds(&self, mut cell: usize) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); self.lo.len()];
        for j in (0..self.lo.len()).rev() {
            let i = cell % self.counts[j];
            cell /= self.counts[j];
            let a = self.lo[j] + i as f64 * self.side;
            let b = if i + 1 == self.counts[j] {
                self.hi[j]
            } else {
                (self.lo[j] + (i + 1) as f64 * self.side).min(self.hi[j])
            };
            out[j] = (a, b);
        }
        out
    }

    fn sample<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> Vec<f64> {
        self.bounds(cell)
            .into_iter()
            .map(|(a, b)| if b > a { rng.random_range(a..b) } else { a })
            .collect()
    }
}

impl BallCover {
    fn index(&self, z: &[f64]) -> Result<usize> {
        let in_domain = match &self.domain {
            Space::Box(b) => b.contains(z),
            Space::Points(p) => p.iter().any(|q| q.as_slice() == z),
        };
        if !in_domain {
            return Err(Error::OutOfSpace(z.to_vec()));
        }
        self.centers
            .iter()
            .position(|c| self.metric.distance(c, z) <= self.radius)
            .ok_or_else(|| Error::CoverViolation(z.to_vec()))
    }

    fn sample<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> Option<Vec<f64>> {
        match &self.domain {
            Space::Points(points) => {
                let members: Vec<&Vec<f64>> = points
                    .iter()
                    .filter(|p| self.index(p).ok() == Some(cell))
                    .collect();
                if members.is_empty() {
                    None
                } else {
                    Some(members[rng.random_range(0..members.len())].clone())
                }
            }
            Space::Box(_) => {
                let center = &self.centers[cell];
                (0..BALL_REJECTION_ATTEMPTS).find_map(|_| {
                    let z = self.sample_ball(center, rng);
                    (self.index(&z).ok() == Some(cell)).then_some(z)
                })
            }
        }
    }

    fn sample_ball<R: Rng + ?Sized>(&self, center: &[f64], rng: &mut R) -> Vec<f64> {
        let r = self.radius;
        match self.metric {
            Metric::Sup => center
                .iter()
                .map(|c| c + rng.random_range(-r..=r))
                .collect(),
            Metric::Euclidean => {
                let dir: Vec<f64> = center.iter().map(|_| StandardNormal.sample(rng)).collect();
                let norm = Metric::Euclidean.norm(&dir).max(f64::MIN_POSITIVE);
                let u: f64 = rng.random();
                let scale = r * u.powf(1.0 / center.len() as f64) / norm;
                center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + d * scale)
                    .collect()
            }
        }
    }
}

impl Partition {
    /// Number of cells `K`.
    pub fn len(&self) -> usize {
        match &self.cells {
            Cells::Grid(g) => g.len,
            Cells::Cover(c) => c.centers.len(),
            Cells::Product(p) => p.input.len() * p.output.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cover parameter: cells of cover-induced partitions have diameter `<= gamma`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> &'static str {
        match &self.cells {
            Cells::Grid(_) => "grid",
            Cells::Cover(_) => "ball_cover",
            Cells::Product(p) => match p.output {
                LabelCells::Binary => "product_binary",
                LabelCells::Interval { .. } => "product_interval",
            },
        }
    }

    /// Dimension of the points this partition indexes.
    pub fn point_dim(&self) -> usize {
        match &self.cells {
            Cells::Grid(g) => g.lo.len(),
            Cells::Cover(c) => c.centers[0].len(),
            Cells::Product(p) => p.input_dim + 1,
        }
    }

    /// Zero-based index of the unique cell containing `z`.
    pub fn cell_index(&self, z: &[f64]) -> Result<usize> {
        match &self.cells {
            Cells::Grid(g) => g.index(z),
            Cells::Cover(c) => c.index(z),
            Cells::Product(p) => {
                if z.len() != p.input_dim + 1 {
                    return Err(Error::OutOfSpace(z.to_vec()));
                }
                let (x, y) = z.split_at(p.input_dim);
                let input = p.input.cell_index(x)?;
                let label = p
                    .output
                    .index(y[0])
                    .ok_or_else(|| Error::OutOfSpace(z.to_vec()))?;
                Ok(label * p.input.len() + input)
            }
        }
    }

    /// Draws a point inside `cell`. Returns `None` when rejection sampling gives
    /// up or the cell holds no point of a finite domain.
    pub fn sample_cell<R: Rng + ?Sized>(
        &self,
        cell: usize,
        rng: &mut R,
    ) -> Result<Option<Vec<f64>>> {
        if cell >= self.len() {
            return Err(Error::param(format!(
                "cell {cell} out of range for a partition of {} cells",
                self.len()
            )));
        }
        Ok(match &self.cells {
            Cells::Grid(g) => Some(g.sample(cell, rng)),
            Cells::Cover(c) => c.sample(cell, rng),
            Cells::Product(p) => {
                let k_in = p.input.len();
                let (label_cell, input_cell) = (cell / k_in, cell % k_in);
                let Some(mut x) = p.input.sample_cell(input_cell, rng)? else {
                    return Ok(None);
                };
                x.push(p.output.sample(label_cell, rng));
                Some(x)
            }
        })
    }

    /// Largest diameter of any cell, when it is known in closed form.
    pub fn max_cell_diameter(&self, metric: Metric) -> Option<f64> {
        match &self.cells {
            Cells::Grid(g) => {
                let a: Vec<f64> = vec![0.0; g.lo.len()];
                let b: Vec<f64> =
                    g.lo.iter()
                        .zip(&g.hi)
                        .map(|(l, h)| g.side.min(h - l))
                        .collect();
                Some(metric.distance(&a, &b))
            }
            Cells::Cover(c) if c.metric == metric => Some(2.0 * c.radius),
            _ => None,
        }
    }
}

impl LabelCells {
    fn len(&self) -> usize {
        match self {
            LabelCells::Binary => 2,
            LabelCells::Interval { grid } => grid.len,
        }
    }

    fn index(&self, y: f64) -> Option<usize> {
        match self {
            LabelCells::Binary if y == -1.0 => Some(0),
            LabelCells::Binary if y == 1.0 => Some(1),
            LabelCells::Binary => None,
            LabelCells::Interval { grid } => grid.index(&[y]).ok(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, cell: usize, rng: &mut R) -> f64 {
        match self {
            LabelCells::Binary => {
                if cell == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            LabelCells::Interval { grid } => grid.sample(cell, rng)[0],
        }
    }
}

/// Grid partition of a box with every cell of diameter `<= gamma`.
pub fn grid_cover(space: &MetricSpace, gamma: f64) -> Result<Partition> {
    grid_cover_limited(space, gamma, DEFAULT_MAX_CELLS)
}

pub fn grid_cover_limited(space: &MetricSpace, gamma: f64, max_cells: u64) -> Result<Partition> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::param(format!("gamma must be positive, got {gamma}")));
    }
    let b = space.as_box()?;
    let side = space.metric.cube_side(gamma, b.dim());
    Ok(Partition {
        gamma,
        cells: Cells::Grid(Grid::new(b.lo(), b.hi(), side, max_cells)?),
    })
}

/// Centers of the grid cells of [`grid_cover`]; together they form a
/// `gamma / 2`-cover of the box.
pub fn grid_centers(space: &MetricSpace, gamma: f64) -> Result<Vec<Vec<f64>>> {
    let partition = grid_cover(space, gamma)?;
    let Cells::Grid(g) = &partition.cells else {
        unreachable!("grid_cover builds grids")
    };
    Ok((0..g.len)
        .map(|cell| {
            g.bounds(cell)
                .into_iter()
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        })
        .collect())
}

/// Farthest-point traversal: keep adding the point farthest from the current
/// centers until every point lies within `radius` of some center.
pub fn greedy_cover(points: &[Vec<f64>], radius: f64, metric: Metric) -> Result<Vec<Vec<f64>>> {
    let first = points.first().ok_or(Error::EmptyInput("points to cover"))?;
    if !(radius > 0.0) {
        return Err(Error::param(format!(
            "cover radius must be positive, got {radius}"
        )));
    }
    let mut centers = vec![first.clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| metric.distance(p, first)).collect();
    loop {
        // first index wins ties
        let (far, dist) =
            nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
        if dist <= radius {
            return Ok(centers);
        }
        let c = points[far].clone();
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(metric.distance(p, &c));
        }
        centers.push(c);
    }
}

/// Cell `i` = ball(center_i, gamma / 2) minus all earlier balls.
pub fn partition_from_cover(
    centers: Vec<Vec<f64>>,
    gamma: f64,
    space: &MetricSpace,
) -> Result<Partition> {
    if centers.is_empty() {
        return Err(Error::EmptyInput("cover centers"));
    }
    if !(gamma > 0.0) {
        return Err(Error::param(format!("gamma must be positive, got {gamma}")));
    }
    let dim = space.dim();
    if centers.iter().any(|c| c.len() != dim) {
        return Err(Error::param(
            "cover centers do not match the space dimension",
        ));
    }
    let cover = BallCover {
        centers,
        radius: gamma / 2.0,
        metric: space.metric,
        domain: space.space.clone(),
    };
    if let Space::Points(points) = &space.space {
        for p in points {
            cover.index(p)?;
        }
    }
    Ok(Partition {
        gamma,
        cells: Cells::Cover(cover),
    })
}

/// Product of an input partition with the binary labels, or with a grid of
/// side `output_gamma` over a bounded output interval.
pub fn product_partition(
    input: Partition,
    output: OutputSpace,
    output_gamma: Option<f64>,
) -> Result<Partition> {
    product_partition_limited(input, output, output_gamma, DEFAULT_MAX_CELLS)
}

pub fn product_partition_limited(
    input: Partition,
    output: OutputSpace,
    output_gamma: Option<f64>,
    max_cells: u64,
) -> Result<Partition> {
    let labels = match output {
        OutputSpace::Binary => LabelCells::Binary,
        OutputSpace::Interval { lo, hi } => {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::UnsupportedSpace(format!(
                    "output interval [{lo}, {hi}] is unbounded"
                )));
            }
            let g = output_gamma.unwrap_or(input.gamma);
            if !(g > 0.0) {
                return Err(Error::param(format!(
                    "output gamma must be positive, got {g}"
                )));
            }
            LabelCells::Interval {
                grid: Grid::new(&[lo], &[hi], g, max_cells)?,
            }
        }
    };
    check_limit(input.len() as f64 * labels.len() as f64, max_cells)?;
    Ok(Partition {
        gamma: input.gamma,
        cells: Cells::Product(Product {
            input_dim: input.point_dim(),
            input: Box::new(input),
            output: labels,
        }),
    })
}
