//! Kantorovich–Rubinstein (W₁) distances and k-point barycenter projections.
//!
//! The W₁ distance between finite atomic measures is computed as an exact
//! transportation LP (network simplex on the bipartite transportation graph,
//! Bland's rule for anti-cycling) with the torus geodesic metric as ground
//! cost. Grid measures are first downsampled by block aggregation onto at
//! most [`KR_COARSE_SIDE`]² mass-weighted centroids; the induced error is
//! bounded by the reported per-cell displacement, never more than one coarse
//! cell diameter.
//!
//! `dist_to_barycenters` projects a density onto the set of measures carried
//! by at most k points (k ≤ 4): alternating nearest-atom assignment, cluster
//! reweighting and torus Weiszfeld updates, finished by an exact transport
//! solve. The returned value is always an upper bound for the true distance,
//! since any candidate barycenter is feasible.

use crate::field::{TorusField, TorusGrid, TorusPoint};
use serde::Serialize;
use thiserror::Error;

/// Errors from measure construction and transport solves.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("measure weights must be nonnegative and finite, found {value} at index {index}")]
    BadWeight { index: usize, value: f64 },
    #[error("barycenter weights sum to {0:e}, expected 1 within 1e-12")]
    WeightSum(f64),
    #[error("barycenter needs at least one atom")]
    NoAtoms,
    #[error("total masses differ: {mu} vs {nu} (tolerance 1e-8)")]
    MassMismatch { mu: f64, nu: f64 },
    #[error("barycenter count k = {0} outside the supported range 1..=4")]
    InvalidK(usize),
    #[error("measure carries no mass")]
    EmptyMeasure,
    #[error("transportation simplex exceeded its pivot budget")]
    Stalled,
}

/// Atomic probability measure carried by finitely many torus points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Barycenter {
    atoms: Vec<(TorusPoint, f64)>,
}

impl Barycenter {
    /// Validates positive weights with unit total (within 1e-12).
    pub fn new(atoms: Vec<(TorusPoint, f64)>) -> Result<Self, TransportError> {
        if atoms.is_empty() {
            return Err(TransportError::NoAtoms);
        }
        let mut total = 0.0;
        for (index, &(_, w)) in atoms.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(TransportError::BadWeight { index, value: w });
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(TransportError::WeightSum(total));
        }
        Ok(Self { atoms })
    }

    pub fn single(p: TorusPoint) -> Self {
        Self { atoms: vec![(p, 1.0)] }
    }

    pub fn atoms(&self) -> &[(TorusPoint, f64)] {
        &self.atoms
    }
}

/// Nonnegative measure on the points of a torus grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMeasure {
    grid: TorusGrid,
    masses: Vec<f64>,
    total: f64,
}

impl DensityMeasure {
    /// Builds a measure from per-point masses (not normalized).
    pub fn from_masses(grid: TorusGrid, masses: Vec<f64>) -> Result<Self, TransportError> {
        if masses.len() != grid.cells() {
            return Err(TransportError::BadWeight {
                index: masses.len().min(grid.cells()),
                value: f64::NAN,
            });
        }
        let mut total = 0.0;
        for (index, &value) in masses.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(TransportError::BadWeight { index, value });
            }
            total += value;
        }
        Ok(Self { grid, masses, total })
    }

    /// Interprets a nonnegative field as a density and normalizes it to a
    /// probability measure.
    pub fn from_density_field(density: &TorusField) -> Result<Self, TransportError> {
        let grid = density.grid();
        let w = grid.weight();
        let mut measure = Self::from_masses(grid, density.values().iter().map(|v| v * w).collect())?;
        if measure.total <= 0.0 {
            return Err(TransportError::EmptyMeasure);
        }
        let scale = 1.0 / measure.total;
        for m in &mut measure.masses {
            *m *= scale;
        }
        measure.total = 1.0;
        Ok(measure)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Block-aggregates onto at most `max_side`² atoms placed at per-block
    /// mass centroids. Returns the atoms and the largest displacement any
    /// mass unit underwent (the W₁ downsampling error bound).
    pub fn downsample(&self, max_side: usize) -> (Vec<(TorusPoint, f64)>, f64) {
        let n = self.grid.n();
        let mut side = max_side.max(1).min(n);
        if !side.is_power_of_two() {
            side = (side + 1).next_power_of_two() / 2;
        }
        let f = n / side;
        let mut mass = vec![0.0; side * side];
        let mut cx = vec![0.0; side * side];
        let mut cy = vec![0.0; side * side];
        for row in 0..n {
            for col in 0..n {
                let m = self.masses[row * n + col];
                if m == 0.0 {
                    continue;
                }
                let b = (row / f) * side + col / f;
                mass[b] += m;
                cx[b] += m * (col as f64 / n as f64);
                cy[b] += m * (row as f64 / n as f64);
            }
        }
        let mut atoms = Vec::new();
        let mut centroid = vec![None; side * side];
        for b in 0..side * side {
            if mass[b] > 0.0 {
                let p = TorusPoint::new(cx[b] / mass[b], cy[b] / mass[b]);
                centroid[b] = Some(p);
                atoms.push((p, mass[b]));
            }
        }
        let mut bound = 0.0_f64;
        for row in 0..n {
            for col in 0..n {
                if self.masses[row * n + col] == 0.0 {
                    continue;
                }
                let b = (row / f) * side + col / f;
                if let Some(p) = centroid[b] {
                    let q = TorusPoint::new(col as f64 / n as f64, row as f64 / n as f64);
                    bound = bound.max(p.distance(q));
                }
            }
        }
        (atoms, bound)
    }
}

/// Exact W₁ cost between atomic measures with equal totals (within 1e-8).
pub fn w1_atomic(
    sources: &[(TorusPoint, f64)],
    sinks: &[(TorusPoint, f64)],
) -> Result<f64, TransportError> {
    let total_mu: f64 = sources.iter().map(|&(_, m)| m).sum();
    let total_nu: f64 = sinks.iter().map(|&(_, m)| m).sum();
    if (total_mu - total_nu).abs() > 1e-8 {
        return Err(TransportError::MassMismatch { mu: total_mu, nu: total_nu });
    }
    let src: Vec<(TorusPoint, f64)> = sources.iter().copied().filter(|&(_, m)| m > 0.0).collect();
    let snk: Vec<(TorusPoint, f64)> = sinks.iter().copied().filter(|&(_, m)| m > 0.0).collect();
    if src.is_empty() || snk.is_empty() {
        return if total_mu.abs() <= 1e-12 {
            Ok(0.0)
        } else {
            Err(TransportError::MassMismatch { mu: total_mu, nu: total_nu })
        };
    }
    let m = src.len();
    let n = snk.len();
    let mut cost = vec![0.0; m * n];
    for (i, &(p, _)) in src.iter().enumerate() {
        for (j, &(q, _)) in snk.iter().enumerate() {
            cost[i * n + j] = p.distance(q);
        }
    }
    let supplies: Vec<f64> = src.iter().map(|&(_, m)| m).collect();
    // Rescale demands so totals match exactly; the mismatch is at most 1e-8.
    let scale = total_mu / total_nu;
    let demands: Vec<f64> = snk.iter().map(|&(_, m)| m * scale).collect();
    Transportation::new(supplies, demands, cost).solve()
}

/// Transportation simplex state: basis cells form a spanning tree over the
/// m source nodes and n sink nodes.
struct Transportation {
    m: usize,
    n: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    /// Basic cell indices incident to each node (sources 0..m, sinks m..m+n).
    adj: Vec<Vec<usize>>,
}

impl Transportation {
    fn new(supplies: Vec<f64>, demands: Vec<f64>, cost: Vec<f64>) -> Self {
        let m = supplies.len();
        let n = demands.len();
        let mut t = Self {
            m,
            n,
            cost,
            flow: vec![0.0; m * n],
            basic: vec![false; m * n],
            adj: vec![Vec::new(); m + n],
        };
        t.northwest_corner(supplies, demands);
        t
    }

    fn insert_basic(&mut self, cell: usize, amount: f64) {
        self.basic[cell] = true;
        self.flow[cell] = amount;
        let (i, j) = (cell / self.n, cell % self.n);
        self.adj[i].push(cell);
        self.adj[self.m + j].push(cell);
    }

    fn remove_basic(&mut self, cell: usize) {
        self.basic[cell] = false;
        self.flow[cell] = 0.0;
        let (i, j) = (cell / self.n, cell % self.n);
        self.adj[i].retain(|&c| c != cell);
        self.adj[self.m + j].retain(|&c| c != cell);
    }

    /// Initial basis along the monotone staircase: exactly m+n−1 cells, some
    /// possibly with zero flow (degenerate ties).
    fn northwest_corner(&mut self, mut supplies: Vec<f64>, mut demands: Vec<f64>) {
        let (mut i, mut j) = (0, 0);
        loop {
            let t = supplies[i].min(demands[j]).max(0.0);
            self.insert_basic(i * self.n + j, t);
            supplies[i] -= t;
            demands[j] -= t;
            if i == self.m - 1 && j == self.n - 1 {
                break;
            }
            if supplies[i] <= 0.0 && i < self.m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    /// Node potentials from the basis tree (reduced cost of basic cells is 0).
    fn potentials(&self) -> Vec<f64> {
        let nodes = self.m + self.n;
        let mut pot = vec![0.0; nodes];
        let mut seen = vec![false; nodes];
        let mut stack = vec![0_usize];
        seen[0] = true;
        while let Some(node) = stack.pop() {
            for &cell in &self.adj[node] {
                let (i, j) = (cell / self.n, self.m + cell % self.n);
                let other = if node == i { j } else { i };
                if !seen[other] {
                    seen[other] = true;
                    // cost = u_i + v_j on basic cells.
                    pot[other] = if other == j {
                        self.cost[cell] - pot[i]
                    } else {
                        self.cost[cell] - pot[j]
                    };
                    stack.push(other);
                }
            }
        }
        pot
    }

    /// Unique tree path between the two endpoints of the entering cell,
    /// returned as the list of basic cells along it.
    fn tree_path(&self, from: usize, to: usize) -> Vec<usize> {
        let nodes = self.m + self.n;
        let mut parent_cell = vec![usize::MAX; nodes];
        let mut parent_node = vec![usize::MAX; nodes];
        let mut seen = vec![false; nodes];
        let mut queue = std::collections::VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for &cell in &self.adj[node] {
                let (i, j) = (cell / self.n, self.m + cell % self.n);
                let other = if node == i { j } else { i };
                if !seen[other] {
                    seen[other] = true;
                    parent_cell[other] = cell;
                    parent_node[other] = node;
                    queue.push_back(other);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = to;
        while node != from {
            path.push(parent_cell[node]);
            node = parent_node[node];
        }
        path.reverse();
        path
    }

    fn solve(mut self) -> Result<f64, TransportError> {
        let scale = self.cost.iter().fold(0.0_f64, |a, &c| a.max(c)).max(1.0);
        let threshold = -1e-12 * scale;
        let budget = 1000 + 64 * (self.m + self.n) * (self.m + self.n).ilog2() as usize;
        for _ in 0..budget {
            let pot = self.potentials();
            // Bland's rule: first cell with negative reduced cost.
            let mut entering = None;
            'scan: for i in 0..self.m {
                for j in 0..self.n {
                    let cell = i * self.n + j;
                    if !self.basic[cell]
                        && self.cost[cell] - pot[i] - pot[self.m + j] < threshold
                    {
                        entering = Some(cell);
                        break 'scan;
                    }
                }
            }
            let Some(entering) = entering else {
                let value = self
                    .flow
                    .iter()
                    .zip(&self.cost)
                    .map(|(f, c)| f * c)
                    .sum::<f64>();
                return Ok(value);
            };
            let (ei, ej) = (entering / self.n, self.m + entering % self.n);
            let path = self.tree_path(ei, ej);
            // Walking from the source endpoint, even path positions carry −θ.
            let mut theta = f64::INFINITY;
            let mut leaving = usize::MAX;
            for (pos, &cell) in path.iter().enumerate() {
                if pos % 2 == 0 && (self.flow[cell] < theta) {
                    theta = self.flow[cell];
                    leaving = cell;
                }
            }
            for (pos, &cell) in path.iter().enumerate() {
                if pos % 2 == 0 {
                    self.flow[cell] = (self.flow[cell] - theta).max(0.0);
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.remove_basic(leaving);
            self.insert_basic(entering, theta);
        }
        Err(TransportError::Stalled)
    }
}

/// Side length cap for the downsampled transport source grid.
pub const KR_COARSE_SIDE: usize = 32;

/// Exact W₁ distance plus the downsampling error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KrDistance {
    pub value: f64,
    /// Largest displacement introduced by block aggregation; the true
    /// distance lies within ±bound of `value`.
    pub downsample_bound: f64,
}

/// W₁ distance from a grid measure to an atomic measure, downsampling the
/// grid side to at most [`KR_COARSE_SIDE`].
pub fn kr_distance(mu: &DensityMeasure, nu: &Barycenter) -> Result<KrDistance, TransportError> {
    kr_distance_coarse(mu, nu, KR_COARSE_SIDE)
}

/// [`kr_distance`] with an explicit cap on the downsampled side length.
pub fn kr_distance_coarse(
    mu: &DensityMeasure,
    nu: &Barycenter,
    max_side: usize,
) -> Result<KrDistance, TransportError> {
    let total_nu: f64 = nu.atoms().iter().map(|&(_, w)| w).sum();
    if (mu.total() - total_nu).abs() > 1e-8 {
        return Err(TransportError::MassMismatch { mu: mu.total(), nu: total_nu });
    }
    if mu.total() <= 0.0 {
        return Err(TransportError::EmptyMeasure);
    }
    let (sources, bound) = mu.downsample(max_side);
    let value = w1_atomic(&sources, nu.atoms())?;
    Ok(KrDistance { value, downsample_bound: bound })
}

/// Result of projecting a density onto measures carried by ≤ k points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarycenterFit {
    /// Exact W₁ distance to `barycenter` (an upper bound for the true
    /// distance to the k-point set).
    pub distance: f64,
    pub barycenter: Barycenter,
    pub downsample_bound: f64,
}

/// Number of Weiszfeld iterations per coordinate-descent round.
const WEISZFELD_STEPS: usize = 25;

/// W₁ projection of `mu` onto measures carried by at most k points (k ≤ 4).
///
/// Local search: atoms start on the k strongest local maxima of the
/// downsampled mass grid, then alternate nearest-atom assignment, cluster
/// reweighting and a torus Weiszfeld step until the assignment cost stops
/// decreasing. The final distance is an exact transport solve, which for
/// nearest-assignment weights coincides with the assignment cost.
pub fn dist_to_barycenters(
    mu: &DensityMeasure,
    k: usize,
) -> Result<BarycenterFit, TransportError> {
    if !(1..=4).contains(&k) {
        return Err(TransportError::InvalidK(k));
    }
    if mu.total() <= 0.0 {
        return Err(TransportError::EmptyMeasure);
    }
    let (sources, bound) = mu.downsample(KR_COARSE_SIDE);
    let side = (sources.len() as f64).sqrt() as usize; // only used for seeding scale
    let min_sep = 0.5 / side.max(4) as f64;
    let mut atoms = seed_atoms(mu, k, min_sep);
    atoms.truncate(sources.len().max(1));

    let mut best_cost = assignment_cost(&sources, &atoms);
    let mut best_atoms = atoms.clone();
    for _ in 0..50 {
        // Assignment and cluster masses.
        let clusters = assign(&sources, &atoms);
        // Empty clusters steal the most expensive source.
        for c in 0..atoms.len() {
            if clusters[c].is_empty() {
                if let Some(&(far_idx, _)) = clusters
                    .iter()
                    .flatten()
                    .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                {
                    atoms[c] = sources[far_idx].0;
                }
            }
        }
        let clusters = assign(&sources, &atoms);
        for (c, members) in clusters.iter().enumerate() {
            if !members.is_empty() {
                atoms[c] = weiszfeld(&sources, members, atoms[c]);
            }
        }
        let cost = assignment_cost(&sources, &atoms);
        if cost < best_cost - 1e-14 {
            best_cost = cost;
            best_atoms = atoms.clone();
        } else {
            break;
        }
    }

    // Weights from the final assignment; drop empty atoms (still within the
    // ≤ k-point class).
    let clusters = assign(&sources, &best_atoms);
    let mut weighted = Vec::new();
    for (c, members) in clusters.iter().enumerate() {
        let mass: f64 = members.iter().map(|&(i, _)| sources[i].1).sum();
        if mass > 0.0 {
            weighted.push((best_atoms[c], mass / mu.total()));
        }
    }
    let total: f64 = weighted.iter().map(|&(_, w)| w).sum();
    for w in &mut weighted {
        w.1 /= total;
    }
    let barycenter = Barycenter::new(weighted)?;
    let scaled: Vec<(TorusPoint, f64)> = barycenter
        .atoms()
        .iter()
        .map(|&(p, w)| (p, w * mu.total()))
        .collect();
    let distance = w1_atomic(&sources, &scaled)?;
    Ok(BarycenterFit { distance, barycenter, downsample_bound: bound })
}

/// Initial atom positions: strongest 8-neighbor local maxima of the coarse
/// mass grid, padded greedily with far-away massive cells.
fn seed_atoms(mu: &DensityMeasure, k: usize, min_sep: f64) -> Vec<TorusPoint> {
    let (sources, _) = mu.downsample(KR_COARSE_SIDE);
    let n = mu.grid().n();
    let side = KR_COARSE_SIDE.min(n);
    let f = n / side;
    let mut coarse = vec![0.0; side * side];
    for row in 0..n {
        for col in 0..n {
            coarse[(row / f) * side + col / f] += mu.masses()[row * n + col];
        }
    }
    let at = |r: isize, c: isize| -> f64 {
        let r = r.rem_euclid(side as isize) as usize;
        let c = c.rem_euclid(side as isize) as usize;
        coarse[r * side + c]
    };
    let mut maxima: Vec<(f64, TorusPoint)> = Vec::new();
    for row in 0..side as isize {
        for col in 0..side as isize {
            let v = at(row, col);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            for dr in -1..=1_isize {
                for dc in -1..=1_isize {
                    if (dr, dc) != (0, 0) && at(row + dr, col + dc) >= v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                let p = TorusPoint::new(
                    (col as f64 + 0.5) / side as f64,
                    (row as f64 + 0.5) / side as f64,
                );
                maxima.push((v, p));
            }
        }
    }
    maxima.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut picked: Vec<TorusPoint> = Vec::new();
    for (_, p) in maxima {
        if picked.len() == k {
            break;
        }
        if picked.iter().all(|q| q.distance(p) >= min_sep) {
            picked.push(p);
        }
    }
    // Pad with massive cells farthest from what we already have.
    while picked.len() < k {
        let far = sources
            .iter()
            .filter(|&&(_, m)| m > 0.0)
            .max_by(|a, b| {
                let da = picked.iter().map(|q| q.distance(a.0)).fold(f64::INFINITY, f64::min);
                let db = picked.iter().map(|q| q.distance(b.0)).fold(f64::INFINITY, f64::min);
                let da = if da.is_finite() { da * a.1 } else { a.1 };
                let db = if db.is_finite() { db * b.1 } else { b.1 };
                da.partial_cmp(&db).unwrap()
            })
            .map(|&(p, _)| p);
        match far {
            Some(p) if picked.iter().all(|q| q.distance(p) > 1e-9) => picked.push(p),
            _ => break,
        }
    }
    if picked.is_empty() {
        picked.push(TorusPoint::new(0.5, 0.5));
    }
    picked
}

/// Members (source index, distance) of each atom's nearest-neighbor cluster.
fn assign(sources: &[(TorusPoint, f64)], atoms: &[TorusPoint]) -> Vec<Vec<(usize, f64)>> {
    let mut clusters = vec![Vec::new(); atoms.len()];
    for (i, &(p, _)) in sources.iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, &q) in atoms.iter().enumerate() {
            let d = p.distance(q);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        clusters[best].push((i, best_d));
    }
    clusters
}

fn assignment_cost(sources: &[(TorusPoint, f64)], atoms: &[TorusPoint]) -> f64 {
    sources
        .iter()
        .map(|&(p, m)| {
            m * atoms
                .iter()
                .map(|q| p.distance(*q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Weighted geodesic median of a cluster via Weiszfeld iteration in the
/// chart centered at the current atom.
fn weiszfeld(
    sources: &[(TorusPoint, f64)],
    members: &[(usize, f64)],
    start: TorusPoint,
) -> TorusPoint {
    let mut c = start;
    for _ in 0..WEISZFELD_STEPS {
        let mut wx = 0.0;
        let mut wy = 0.0;
        let mut wsum = 0.0;
        for &(i, _) in members {
            let (p, m) = sources[i];
            let (dx, dy) = p.delta(c);
            let r = dx.hypot(dy).max(1e-12);
            wx += m / r * dx;
            wy += m / r * dy;
            wsum += m / r;
        }
        if wsum == 0.0 {
            break;
        }
        let step = (wx / wsum, wy / wsum);
        c = TorusPoint::new(c.x + step.0, c.y + step.1);
        if step.0.hypot(step.1) < 1e-10 {
            break;
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::TorusField;
    use proptest::prelude::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    fn pt(x: f64, y: f64) -> TorusPoint {
        TorusPoint::new(x, y)
    }

    #[test]
    fn single_atoms_recover_the_metric() {
        let a = [(pt(0.1, 0.1), 1.0)];
        let b = [(pt(0.4, 0.5), 1.0)];
        let d = w1_atomic(&a, &b).unwrap();
        assert!((d - pt(0.1, 0.1).distance(pt(0.4, 0.5))).abs() < 1e-14);
    }

    #[test]
    fn forced_split_plan() {
        let a = [(pt(0.2, 0.2), 1.0)];
        let b = [(pt(0.1, 0.2), 0.5), (pt(0.5, 0.2), 0.5)];
        let d = w1_atomic(&a, &b).unwrap();
        assert!((d - (0.5 * 0.1 + 0.5 * 0.3)).abs() < 1e-14);
    }

    /// Independent two-sink oracle: with sinks fixed, shipping to sink 0 is a
    /// fractional knapsack in the cost differences.
    fn two_sink_oracle(sources: &[(TorusPoint, f64)], sinks: &[(TorusPoint, f64)]) -> f64 {
        assert_eq!(sinks.len(), 2);
        let base: f64 = sources.iter().map(|&(p, m)| m * p.distance(sinks[1].0)).sum();
        let mut diffs: Vec<(f64, f64)> = sources
            .iter()
            .map(|&(p, m)| (p.distance(sinks[0].0) - p.distance(sinks[1].0), m))
            .collect();
        diffs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut rest = sinks[0].1;
        let mut value = base;
        for (diff, m) in diffs {
            let take = m.min(rest);
            value += take * diff;
            rest -= take;
            if rest <= 0.0 {
                break;
            }
        }
        value
    }

    #[test]
    fn simplex_matches_knapsack_oracle_on_grid_sources() {
        // 8×8 source grid with deterministic lumpy masses against two sinks.
        let mut sources = Vec::new();
        let mut total = 0.0;
        for row in 0..8 {
            for col in 0..8 {
                let m = 1.0 + ((3 * row + 5 * col) % 7) as f64;
                total += m;
                sources.push((pt(col as f64 / 8.0, row as f64 / 8.0), m));
            }
        }
        let sinks = [(pt(0.31, 0.47), 0.6 * total), (pt(0.83, 0.12), 0.4 * total)];
        let got = w1_atomic(&sources, &sinks).unwrap();
        let oracle = two_sink_oracle(&sources, &sinks);
        assert!((got - oracle).abs() < 1e-9 * total, "{got} vs {oracle}");
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let a = [(pt(0.0, 0.0), 1.0)];
        let b = [(pt(0.5, 0.5), 0.9)];
        assert!(matches!(
            w1_atomic(&a, &b),
            Err(TransportError::MassMismatch { .. })
        ));
    }

    #[test]
    fn kr_uniform_to_center_atom_matches_direct_sum() {
        let g = grid(16);
        let mu = DensityMeasure::from_density_field(&TorusField::constant(g, 1.0)).unwrap();
        let nu = Barycenter::single(pt(0.5, 0.5));
        // With a single sink every plan is forced, so the LP value is the
        // plain mass-weighted distance sum over the downsampled sources.
        let (sources, _) = mu.downsample(8);
        let direct: f64 = sources.iter().map(|&(p, m)| m * p.distance(pt(0.5, 0.5))).sum();
        let kr = kr_distance_coarse(&mu, &nu, 8).unwrap();
        assert!((kr.value - direct).abs() < 1e-12);
        assert!(kr.downsample_bound <= 2.0_f64.sqrt() / 8.0 + 1e-12);
    }

    #[test]
    fn kr_one_cell_density_to_same_atom_within_bound() {
        let g = grid(32);
        let mut masses = vec![0.0; g.cells()];
        masses[g.index(5, 7)] = 1.0;
        let mu = DensityMeasure::from_masses(g, masses).unwrap();
        let nu = Barycenter::single(g.point(g.index(5, 7)));
        let kr = kr_distance(&mu, &nu).unwrap();
        assert!(kr.value <= kr.downsample_bound + 1e-12);
    }

    #[test]
    fn kr_mass_mismatch_error() {
        let g = grid(16);
        let mu = DensityMeasure::from_masses(g, vec![2.0 / g.cells() as f64; g.cells()]).unwrap();
        let nu = Barycenter::single(pt(0.5, 0.5));
        assert!(matches!(
            kr_distance(&mu, &nu),
            Err(TransportError::MassMismatch { .. })
        ));
    }

    #[test]
    fn barycenter_fit_recovers_atomic_measures() {
        let g = grid(64);
        let mut masses = vec![0.0; g.cells()];
        masses[g.index(16, 16)] = 0.5;
        masses[g.index(48, 48)] = 0.5;
        let mu = DensityMeasure::from_masses(g, masses).unwrap();
        let fit = dist_to_barycenters(&mu, 2).unwrap();
        // Two coarse cells of slack on a 32-side downsample.
        assert!(fit.distance <= 2.0 * (2.0_f64.sqrt() / 32.0), "distance {}", fit.distance);
        assert_eq!(fit.barycenter.atoms().len(), 2);
        for &(p, w) in fit.barycenter.atoms() {
            let near = p.distance(pt(0.25, 0.25)).min(p.distance(pt(0.75, 0.75)));
            assert!(near < 2.0 / 32.0, "atom at ({}, {})", p.x, p.y);
            assert!((w - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn barycenter_fit_uniform_single_atom_cost() {
        let g = grid(32);
        let mu = DensityMeasure::from_density_field(&TorusField::constant(g, 1.0)).unwrap();
        let fit = dist_to_barycenters(&mu, 1).unwrap();
        // Mean torus distance to any fixed point is ≈ 0.3826.
        assert!(fit.distance > 0.2, "distance {}", fit.distance);
        assert!(fit.distance < 0.45);
    }

    #[test]
    fn invalid_k_is_rejected() {
        let g = grid(16);
        let mu = DensityMeasure::from_density_field(&TorusField::constant(g, 1.0)).unwrap();
        assert!(matches!(dist_to_barycenters(&mu, 0), Err(TransportError::InvalidK(0))));
        assert!(matches!(dist_to_barycenters(&mu, 5), Err(TransportError::InvalidK(5))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// W₁ is a metric: symmetry, identity and the triangle inequality on
        /// random atomic triples (exact solves, 1e-9 slack for rounding).
        #[test]
        fn w1_is_a_metric_on_atomic_measures(seed in 0_u64..1000) {
            let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1_u64 << 53) as f64
            };
            let mut measure = |count: usize| {
                let raw: Vec<(TorusPoint, f64)> =
                    (0..count).map(|_| (pt(next(), next()), next() + 0.05)).collect();
                let total: f64 = raw.iter().map(|&(_, m)| m).sum();
                raw.into_iter().map(|(p, m)| (p, m / total)).collect::<Vec<_>>()
            };
            let a = measure(6);
            let b = measure(9);
            let c = measure(5);
            let dab = w1_atomic(&a, &b).unwrap();
            let dba = w1_atomic(&b, &a).unwrap();
            let dac = w1_atomic(&a, &c).unwrap();
            let dcb = w1_atomic(&c, &b).unwrap();
            let daa = w1_atomic(&a, &a).unwrap();
            prop_assert!((dab - dba).abs() < 1e-9);
            prop_assert!(daa.abs() < 1e-12);
            prop_assert!(dab <= dac + dcb + 1e-9);
        }
    }
}
