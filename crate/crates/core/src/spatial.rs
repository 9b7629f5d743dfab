//! Uniform-grid index for fixed-radius neighbor queries on the periodic
//! square. The grid is rebuilt from scratch every step.

use crate::config::Metric;
use crate::geometry::{distance_sq, Position};
use crate::AgentId;

const MAX_CELLS_PER_SIDE: usize = 1024;
/// Cells per communication radius. Finer cells shrink the scanned area
/// from 9r² to 6.25r².
const SUBDIVISION: usize = 2;

/// A run of consecutive cells `first..last` visited by a query, with the
/// periodic shift that brings their agents next to the query cell. Cells
/// are stored row-major, so a run is one contiguous slice of the entries.
#[derive(Debug, Clone, Copy)]
struct Segment {
    first: u32,
    last: u32,
    shift_x: f64,
    shift_y: f64,
}

#[derive(Debug, Clone)]
pub struct NeighborIndex {
    side: f64,
    radius_sq: f64,
    metric: Metric,
    cells_per_side: usize,
    cell_size: f64,
    /// CSR offsets into the entry arrays, one slot per cell plus a sentinel.
    cell_start: Vec<u32>,
    ids: Vec<AgentId>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    cell_of: Vec<u32>,
    positions: Vec<Position>,
    /// Runs scanned from cell `c`: `stencil[stencil_start[c]..stencil_start[c + 1]]`.
    stencil_start: Vec<u32>,
    stencil: Vec<Segment>,
    /// The grid is too coarse for a non-overlapping stencil; every cell is
    /// scanned and distances use the metric directly.
    small_grid: bool,
    epoch: Option<u64>,
}

impl NeighborIndex {
    /// Empty index for agents with communication radius `radius` on a
    /// square of side `side`.
    pub fn new(side: f64, radius: f64, metric: Metric) -> Self {
        let cells_per_side = ((side * SUBDIVISION as f64 / radius).floor() as usize).clamp(1, MAX_CELLS_PER_SIDE);
        let cell_size = side / cells_per_side as f64;
        let reach = (radius / cell_size).ceil() as usize;
        let small_grid = cells_per_side < 2 * reach + 1;
        let (stencil_start, stencil) = stencil_table(cells_per_side, reach, side, metric, small_grid);
        Self {
            side,
            radius_sq: radius * radius,
            metric,
            cells_per_side,
            cell_size,
            cell_start: vec![0; cells_per_side * cells_per_side + 1],
            ids: Vec::new(),
            xs: Vec::new(),
            ys: Vec::new(),
            cell_of: Vec::new(),
            positions: Vec::new(),
            stencil_start,
            stencil,
            small_grid,
            epoch: None,
        }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_side * self.cells_per_side
    }

    pub fn epoch(&self) -> Option<u64> {
        self.epoch
    }

    pub fn is_fresh(&self, epoch: u64) -> bool {
        self.epoch == Some(epoch)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    fn cell_coord(&self, v: f64) -> usize {
        ((v / self.cell_size) as usize).min(self.cells_per_side - 1)
    }

    pub fn cell_of_position(&self, p: Position) -> usize {
        self.cell_coord(p.y) * self.cells_per_side + self.cell_coord(p.x)
    }

    /// Agent ids stored in bucket `cell`.
    pub fn bucket(&self, cell: usize) -> &[AgentId] {
        &self.ids[self.cell_start[cell] as usize..self.cell_start[cell + 1] as usize]
    }

    /// Bucket every agent; the index becomes valid for step `epoch`.
    pub fn rebuild(&mut self, positions: &[Position], epoch: u64) {
        let ncells = self.num_cells();
        let n = positions.len();
        self.positions.clear();
        self.positions.extend_from_slice(positions);
        self.cell_of.clear();
        self.cell_start.clear();
        self.cell_start.resize(ncells + 1, 0);
        for p in positions {
            let c = self.cell_of_position(*p);
            self.cell_of.push(c as u32);
            self.cell_start[c + 1] += 1;
        }
        for c in 0..ncells {
            self.cell_start[c + 1] += self.cell_start[c];
        }
        let mut cursor = self.cell_start.clone();
        self.ids.resize(n, 0);
        self.xs.resize(n, 0.0);
        self.ys.resize(n, 0.0);
        for (id, p) in positions.iter().enumerate() {
            let c = self.cell_of[id] as usize;
            let slot = cursor[c] as usize;
            self.ids[slot] = id as AgentId;
            self.xs[slot] = p.x;
            self.ys[slot] = p.y;
            cursor[c] += 1;
        }
        self.epoch = Some(epoch);
    }

    pub fn position(&self, id: AgentId) -> Position {
        self.positions[id as usize]
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    /// Call `f(j)` for every agent `j ≠ i` strictly closer than the radius
    /// to agent `i`.
    #[inline]
    pub fn for_each_neighbor(&self, i: AgentId, mut f: impl FnMut(AgentId)) {
        let origin = self.positions[i as usize];
        let c = self.cell_of[i as usize] as usize;
        let (a, b) = (self.stencil_start[c] as usize, self.stencil_start[c + 1] as usize);
        let r2 = self.radius_sq;
        for sc in &self.stencil[a..b] {
            let (s, e) = self.span(sc);
            let (ids, xs, ys) = (&self.ids[s..e], &self.xs[s..e], &self.ys[s..e]);
            if self.small_grid {
                for k in 0..ids.len() {
                    let p = Position { x: xs[k], y: ys[k] };
                    if ids[k] != i && distance_sq(origin, p, self.side, self.metric) < r2 {
                        f(ids[k]);
                    }
                }
            } else {
                let qx = origin.x - sc.shift_x;
                let qy = origin.y - sc.shift_y;
                for k in 0..ids.len() {
                    let dx = xs[k] - qx;
                    let dy = ys[k] - qy;
                    if dx * dx + dy * dy < r2 && ids[k] != i {
                        f(ids[k]);
                    }
                }
            }
        }
    }

    /// Replace `out` with the neighbors of `i`.
    pub fn neighbors_into(&self, i: AgentId, out: &mut Vec<AgentId>) {
        out.clear();
        if self.small_grid {
            self.for_each_neighbor(i, |j| out.push(j));
            return;
        }
        let origin = self.positions[i as usize];
        let c = self.cell_of[i as usize] as usize;
        let segments = &self.stencil[self.stencil_start[c] as usize..self.stencil_start[c + 1] as usize];
        let total: usize = segments.iter().map(|sc| self.span(sc).1 - self.span(sc).0).sum();
        let r2 = self.radius_sq;
        // Branch-free compaction: write every candidate, advance the cursor
        // only for hits.
        out.resize(total, 0);
        let mut w = 0;
        for sc in segments {
            let (s, e) = self.span(sc);
            let qx = origin.x - sc.shift_x;
            let qy = origin.y - sc.shift_y;
            for ((&id, &x), &y) in self.ids[s..e].iter().zip(&self.xs[s..e]).zip(&self.ys[s..e]) {
                let dx = x - qx;
                let dy = y - qy;
                out[w] = id;
                w += ((dx * dx + dy * dy < r2) & (id != i)) as usize;
            }
        }
        out.truncate(w);
    }

    #[inline]
    fn span(&self, sc: &Segment) -> (usize, usize) {
        (
            self.cell_start[sc.first as usize] as usize,
            self.cell_start[sc.last as usize] as usize,
        )
    }

    /// Neighbors of `i` at step `epoch`. Panics if the index was built for
    /// a different step.
    pub fn neighbors_of(&self, i: AgentId, epoch: u64) -> Vec<AgentId> {
        assert!(
            self.is_fresh(epoch),
            "stale neighbor index: built for {:?}, queried at step {epoch}",
            self.epoch
        );
        let mut out = Vec::new();
        self.neighbors_into(i, &mut out);
        out
    }
}

/// For each cell, the cells within `reach` in both directions (wrapped),
/// with the coordinate shift of each wrapped cell. A grid too small for a
/// non-overlapping stencil scans every cell once.
fn stencil_table(m: usize, reach: usize, side: f64, metric: Metric, small_grid: bool) -> (Vec<u32>, Vec<Segment>) {
    let mut start = Vec::with_capacity(m * m + 1);
    let mut stencil: Vec<Segment> = Vec::new();
    start.push(0);
    let shift = |c: isize| -> f64 {
        match metric {
            Metric::Euclidean => 0.0,
            Metric::Torus if c < 0 => -side,
            Metric::Torus if c >= m as isize => side,
            Metric::Torus => 0.0,
        }
    };
    let w = reach as isize;
    for cy in 0..m as isize {
        for cx in 0..m as isize {
            if small_grid {
                stencil.push(Segment {
                    first: 0,
                    last: (m * m) as u32,
                    shift_x: 0.0,
                    shift_y: 0.0,
                });
            } else {
                let own = stencil.len();
                for dy in -w..=w {
                    for dx in -w..=w {
                        let (x, y) = (cx + dx, cy + dy);
                        let cell = (y.rem_euclid(m as isize) as usize * m + x.rem_euclid(m as isize) as usize) as u32;
                        let (sx, sy) = (shift(x), shift(y));
                        let mergeable = stencil.len() > own;
                        match stencil.last_mut() {
                            Some(run) if mergeable && run.last == cell && run.shift_x == sx && run.shift_y == sy => {
                                run.last = cell + 1
                            }
                            _ => stencil.push(Segment {
                                first: cell,
                                last: cell + 1,
                                shift_x: sx,
                                shift_y: sy,
                            }),
                        }
                    }
                }
            }
            start.push(stencil.len() as u32);
        }
    }
    (start, stencil)
}
