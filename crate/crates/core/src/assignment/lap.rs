//! Dense shortest-augmenting-path solver for square linear assignment
//! problems, with support for forbidden edges, inactive (pinned) rows and
//! columns, and warm restarts from feasible duals. The warm restart is what
//! lets ranked enumeration re-solve a child subproblem with a single
//! augmentation instead of a full solve.

/// Matching state plus dual variables for one subproblem.
#[derive(Debug, Clone)]
pub(crate) struct LapState {
    pub row_to_col: Vec<Option<usize>>,
    pub col_to_row: Vec<Option<usize>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl LapState {
    pub fn new(n: usize) -> Self {
        LapState {
            row_to_col: vec![None; n],
            col_to_row: vec![None; n],
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// View of one subproblem: base costs, extra forbidden edges and the subset
/// of rows/columns still in play.
pub(crate) struct SubProblem<'a> {
    pub n: usize,
    pub costs: &'a [f64],
    pub forbidden: &'a [(usize, usize)],
    pub row_active: &'a [bool],
    pub col_active: &'a [bool],
}

impl SubProblem<'_> {
    #[inline]
    fn cost(&self, i: usize, j: usize) -> f64 {
        let c = self.costs[i * self.n + j];
        if c.is_finite() && self.forbidden.iter().any(|&(r, s)| r == i && s == j) {
            f64::INFINITY
        } else {
            c
        }
    }
}

/// Augment the matching with a path rooted at `start_row`, updating duals so
/// that reduced costs stay nonnegative and matched edges tight.
///
/// Returns `false` when no augmenting path exists, i.e. the subproblem has no
/// perfect matching. `scans` counts edge relaxations for complexity
/// instrumentation.
pub(crate) fn augment(
    sub: &SubProblem,
    state: &mut LapState,
    start_row: usize,
    scans: &mut u64,
) -> bool {
    let n = sub.n;
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];

    let mut i = start_row;
    let mut delta = 0.0;
    let sink = loop {
        for j in 0..n {
            if !sub.col_active[j] || done[j] {
                continue;
            }
            *scans += 1;
            let c = sub.cost(i, j);
            if !c.is_finite() {
                continue;
            }
            let nd = delta + c - state.u[i] - state.v[j];
            if nd < dist[j] {
                dist[j] = nd;
                pred[j] = i;
            }
        }
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for j in 0..n {
            if sub.col_active[j] && !done[j] && dist[j] < best {
                best = dist[j];
                best_j = j;
            }
        }
        if best_j == usize::MAX {
            return false;
        }
        done[best_j] = true;
        delta = best;
        match state.col_to_row[best_j] {
            None => break best_j,
            Some(next_row) => i = next_row,
        }
    };

    // Dual updates keep feasibility: only columns settled before the sink
    // (and their matched rows) move.
    state.u[start_row] += delta;
    for j in 0..n {
        if done[j] && j != sink {
            let row = state.col_to_row[j].expect("settled non-sink column is matched");
            state.u[row] += delta - dist[j];
            state.v[j] -= delta - dist[j];
        }
    }

    // Flip the alternating path back to the root.
    let mut j = sink;
    loop {
        let row = pred[j];
        state.col_to_row[j] = Some(row);
        let prev = state.row_to_col[row];
        state.row_to_col[row] = Some(j);
        if row == start_row {
            break;
        }
        j = prev.expect("interior path row was matched");
    }
    true
}

/// Solve a subproblem from scratch. Returns `None` when infeasible.
pub(crate) fn solve(sub: &SubProblem, scans: &mut u64) -> Option<LapState> {
    let mut state = LapState::new(sub.n);
    for i in 0..sub.n {
        if sub.row_active[i] && !augment(sub, &mut state, i, scans) {
            return None;
        }
    }
    Some(state)
}
