
/// `min(t[i + m] - t[i])` by direct enumeration.
pub fn naive_window(t: &[f64], m: usize) -> f64 {
    (0..t.len() - m).map(|i| t[i + m] - t[i]).fold(f64::INFINITY, f64::min)
}

/// Largest count of any left-open window of length `w`, testing every
/// window that ends on an arrival.
pub fn naive_max_occupancy(t: &[f64], w: f64) -> usize {
    t.iter()
        .map(|&end| t.iter().filter(|&&x| x <= end && end - x < w).count())
        .max()
        .unwrap_or(0)
}

/// Counts of `(s, s + w]` for ascending `s`, by two monotone pointers.
struct Sweep<'a> {
    t: &'a [f64],
    w: f64,
    lo: usize,
    hi: usize,
}

impl<'a> Sweep<'a> {
    fn new(t: &'a [f64], w: f64) -> Self {
        Sweep { t, w, lo: 0, hi: 0 }
    }

    fn count(&mut self, s: f64) -> usize {
        while self.lo < self.t.len() && self.t[self.lo] <= s {
            self.lo += 1;
        }
        while self.hi < self.t.len() && self.t[self.hi] <= s + self.w {
            self.hi += 1;
        }
        self.hi - self.lo
    }
}

/// Grid resolution for an integer span: the smallest multiple of the span
/// with at least `points` cells, so every integer falls on a cell edge.
fn cells_for(span: f64, points: usize) -> (usize, usize) {
    let l = span.round() as usize;
    assert!(l >= 1 && (span - l as f64).abs() == 0.0, "span must be a positive integer");
    let per_unit = points.div_ceil(l);
    (l * per_unit, per_unit)
}

/// Midpoint-rule mean of `m - u(s)` over `[t0, end]` with about `points`
/// cells. Arrivals must lie on the integer lattice.
pub fn grid_deviation(t: &[f64], m: usize, w: f64, end: f64, points: usize) -> f64 {
    let t0 = t[0];
    let (n_cells, per_unit) = cells_for(end - t0, points);
    let mut sweep = Sweep::new(t, w);
    let mut acc = 0.0;
    for k in 0..n_cells {
        let s = t0 + (k as f64 + 0.5) / per_unit as f64;
        acc += m as f64 - sweep.count(s) as f64;
    }
    acc / n_cells as f64
}

/// Largest count over the grid points `t0 + k / per_unit` in `[t0, end]`.
pub fn grid_max_occupancy(t: &[f64], w: f64, end: f64, points: usize) -> usize {
    let t0 = t[0];
    let (n_cells, per_unit) = cells_for(end - t0, points);
    let mut sweep = Sweep::new(t, w);
    (0..=n_cells)
        .map(|k| sweep.count(t0 + k as f64 / per_unit as f64))
        .max()
        .unwrap_or(0)
}

/// Arrivals on the integer lattice: `n` points, gaps in `1..=max_gap`.
pub fn lattice_trace(seed: u64, n: usize, max_gap: u64) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n as u64 {
        out.push(t);
        t += (1 + scip_core::seed::derive(seed, i) % max_gap) as f64;
    }
    out
}
