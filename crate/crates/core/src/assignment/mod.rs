//! Optimal and k-best linear assignment: a Hungarian-style solver plus
//! Murty's ranked-assignment enumeration with a probability-ratio cutoff.
//!
//! Costs are `-log` probabilities, so ranking assignments by nondecreasing
//! cost enumerates data associations by nonincreasing likelihood, and the
//! ratio of assignment k to the optimum is `exp(best_cost - cost_k)`.

mod lap;

use lap::{LapState, SubProblem, augment, solve};
use thiserror::Error;

/// Default hard cap on the number of assignments returned by ranked
/// enumeration; exceeding it is an error rather than silent truncation.
pub const DEFAULT_MURTY_CAP: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum AssignError {
    #[error("cost matrix rows must all have length {0}")]
    NotSquare(usize),
    #[error("cost matrix entries must be finite or +inf, got {0}")]
    InvalidEntry(f64),
    #[error("no finite-cost perfect assignment exists")]
    Infeasible,
    #[error("ranked enumeration exceeded the cap of {0} assignments")]
    CapExceeded(usize),
}

/// Square grid of extended-real costs; `+inf` encodes a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, AssignError> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for row in &rows {
            if row.len() != n {
                return Err(AssignError::NotSquare(n));
            }
            for &c in row {
                if c.is_nan() || c == f64::NEG_INFINITY {
                    return Err(AssignError::InvalidEntry(c));
                }
                entries.push(c);
            }
        }
        Ok(CostMatrix { n, entries })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, AssignError> {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let c = f(i, j);
                if c.is_nan() || c == f64::NEG_INFINITY {
                    return Err(AssignError::InvalidEntry(c));
                }
                entries.push(c);
            }
        }
        Ok(CostMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Total cost of a full mapping, summed in row order so a given mapping
    /// always produces the bit-identical float.
    fn mapping_cost(&self, mapping: &[usize]) -> f64 {
        mapping
            .iter()
            .enumerate()
            .map(|(i, &j)| self.at(i, j))
            .sum()
    }
}

/// A perfect assignment: `mapping[i]` is the column matched to row i.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub mapping: Vec<usize>,
    pub total_cost: f64,
}

/// Operation counts from ranked enumeration, for complexity checks.
#[derive(Debug, Clone, Copy, Default)]
pub struct MurtyStats {
    /// Edge relaxations performed inside augmenting searches.
    pub scans: u64,
    /// Augmenting searches run (full solves count one per row).
    pub solves: u64,
}

/// Minimum-total-cost assignment; among cost ties the lexicographically
/// smallest mapping is returned.
pub fn solve_best(m: &CostMatrix) -> Result<Assignment, AssignError> {
    let n = m.n();
    if n == 0 {
        return Ok(Assignment {
            mapping: Vec::new(),
            total_cost: 0.0,
        });
    }
    let mut scans = 0u64;
    let all = vec![true; n];
    let base = SubProblem {
        n,
        costs: &m.entries,
        forbidden: &[],
        row_active: &all,
        col_active: &all,
    };
    let state = solve(&base, &mut scans).ok_or(AssignError::Infeasible)?;
    let best_cost = m.mapping_cost(&extract_mapping(&state));
    let eps = 1e-9 * best_cost.abs().max(1.0);

    // Fix rows in order to the smallest column that still admits an optimal
    // completion; this pins the lexicographic tie-break exactly.
    let mut mapping = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let mut committed = false;
        for j in 0..n {
            if col_used[j] || !m.at(i, j).is_finite() {
                continue;
            }
            let mut row_active = vec![false; n];
            let mut col_active = vec![false; n];
            for r in i + 1..n {
                row_active[r] = true;
            }
            for (c, used) in col_used.iter().enumerate() {
                col_active[c] = !used && c != j;
            }
            let sub = SubProblem {
                n,
                costs: &m.entries,
                forbidden: &[],
                row_active: &row_active,
                col_active: &col_active,
            };
            let completion = if i + 1 == n {
                Some(0.0)
            } else {
                solve(&sub, &mut scans).map(|s| {
                    (i + 1..n)
                        .map(|r| m.at(r, s.row_to_col[r].unwrap()))
                        .sum::<f64>()
                })
            };
            if let Some(rest) = completion
                && fixed_cost + m.at(i, j) + rest <= best_cost + eps
            {
                mapping[i] = j;
                col_used[j] = true;
                fixed_cost += m.at(i, j);
                committed = true;
                break;
            }
        }
        debug_assert!(committed, "optimal completion must exist for row {i}");
        if !committed {
            return Err(AssignError::Infeasible);
        }
    }
    Ok(Assignment {
        total_cost: m.mapping_cost(&mapping),
        mapping,
    })
}

/// Ranked assignments in nondecreasing cost order, starting with the
/// optimum and stopping before the first assignment whose probability ratio
/// `exp(best_cost - cost)` drops below `ratio_threshold`. Cost ties are
/// ordered by lexicographic mapping. Uses [`DEFAULT_MURTY_CAP`].
pub fn murty_k_best(
    m: &CostMatrix,
    ratio_threshold: f64,
) -> Result<Vec<Assignment>, AssignError> {
    murty_k_best_detailed(m, ratio_threshold, DEFAULT_MURTY_CAP).map(|(a, _)| a)
}

/// As [`murty_k_best`] but with an explicit cap and operation counts.
pub fn murty_k_best_detailed(
    m: &CostMatrix,
    ratio_threshold: f64,
    cap: usize,
) -> Result<(Vec<Assignment>, MurtyStats), AssignError> {
    assert!(
        ratio_threshold > 0.0 && ratio_threshold <= 1.0,
        "ratio threshold must lie in (0, 1]"
    );
    murty_enumerate(m, ratio_threshold, cap, true, false)
}

/// Ranked enumeration that also keeps the first assignment violating the
/// ratio cutoff (do-while semantics): the sum that stops "when the ratio
/// drops below T'" still contains the assignment that triggered the stop,
/// so a threshold of 1 yields the top two assignments rather than one.
pub fn murty_k_best_inclusive(
    m: &CostMatrix,
    ratio_threshold: f64,
    cap: usize,
) -> Result<(Vec<Assignment>, MurtyStats), AssignError> {
    assert!(
        ratio_threshold > 0.0 && ratio_threshold <= 1.0,
        "ratio threshold must lie in (0, 1]"
    );
    murty_enumerate(m, ratio_threshold, cap, true, true)
}

/// Exactly the first `k` ranked assignments (fewer if the problem has fewer
/// feasible ones), with operation counts. Used by complexity checks and
/// benchmarks that want top-k semantics without a cap error.
pub fn murty_top_k(m: &CostMatrix, k: usize) -> Result<(Vec<Assignment>, MurtyStats), AssignError> {
    murty_enumerate(m, f64::MIN_POSITIVE, k, false, false)
}

struct Node {
    mapping: Vec<usize>,
    cost: f64,
    fixed: Vec<usize>,
    forbidden: Vec<(usize, usize)>,
    state: LapState,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.mapping == other.mapping
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed so that BinaryHeap pops the cheapest node first.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.mapping.cmp(&self.mapping))
    }
}

fn murty_enumerate(
    m: &CostMatrix,
    ratio_threshold: f64,
    limit: usize,
    error_on_limit: bool,
    include_boundary: bool,
) -> Result<(Vec<Assignment>, MurtyStats), AssignError> {
    let n = m.n();
    let mut stats = MurtyStats::default();
    if n == 0 {
        return Ok((
            vec![Assignment {
                mapping: Vec::new(),
                total_cost: 0.0,
            }],
            stats,
        ));
    }

    let all = vec![true; n];
    let root_sub = SubProblem {
        n,
        costs: &m.entries,
        forbidden: &[],
        row_active: &all,
        col_active: &all,
    };
    let root_state = solve(&root_sub, &mut stats.scans).ok_or(AssignError::Infeasible)?;
    stats.solves += n as u64;
    let root_mapping = extract_mapping(&root_state);

    // Min-heap on cost; equal-cost assignments are buffered and sorted by
    // mapping before emission, so the output order is canonical.
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Node {
        cost: m.mapping_cost(&root_mapping),
        mapping: root_mapping,
        fixed: Vec::new(),
        forbidden: Vec::new(),
        state: root_state,
    });
    let mut out: Vec<Assignment> = Vec::new();
    let mut pending: Vec<Assignment> = Vec::new();
    let mut best_cost: Option<f64> = None;

    fn flush(
        pending: &mut Vec<Assignment>,
        out: &mut Vec<Assignment>,
        limit: usize,
        error_on_limit: bool,
    ) -> Result<bool, AssignError> {
        pending.sort_by(|a, b| a.mapping.cmp(&b.mapping));
        for a in pending.drain(..) {
            if out.len() == limit {
                if error_on_limit {
                    return Err(AssignError::CapExceeded(limit));
                }
                return Ok(true);
            }
            out.push(a);
        }
        Ok(false)
    }

    let mut boundary_hit = false;
    'main: while let Some(node) = heap.pop() {
        let best = *best_cost.get_or_insert(node.cost);
        if (best - node.cost).exp() < ratio_threshold {
            if !include_boundary || boundary_hit {
                break;
            }
            boundary_hit = true;
        }
        if let Some(last) = pending.last()
            && node.cost > last.total_cost
        {
            if flush(&mut pending, &mut out, limit, error_on_limit)? {
                break 'main;
            }
        }
        if !error_on_limit && out.len() + pending.len() >= limit {
            break;
        }
        pending.push(Assignment {
            mapping: node.mapping.clone(),
            total_cost: node.cost,
        });
        if boundary_hit {
            break;
        }

        // Partition the node's space over its free rows in ascending order.
        let free_rows: Vec<usize> = (0..n).filter(|r| !node.fixed.contains(r)).collect();
        for (k, &split_row) in free_rows.iter().enumerate() {
            let banned_col = node.mapping[split_row];
            let mut forbidden = node.forbidden.clone();
            forbidden.push((split_row, banned_col));
            let mut fixed = node.fixed.clone();
            fixed.extend_from_slice(&free_rows[..k]);

            let mut row_active = vec![true; n];
            let mut col_active = vec![true; n];
            for &r in &fixed {
                row_active[r] = false;
                col_active[node.mapping[r]] = false;
            }

            let mut state = node.state.clone();
            state.row_to_col[split_row] = None;
            state.col_to_row[banned_col] = None;
            let sub = SubProblem {
                n,
                costs: &m.entries,
                forbidden: &forbidden,
                row_active: &row_active,
                col_active: &col_active,
            };
            stats.solves += 1;
            if !augment(&sub, &mut state, split_row, &mut stats.scans) {
                continue;
            }
            let mut mapping = node.mapping.clone();
            for r in 0..n {
                if row_active[r] {
                    mapping[r] = state.row_to_col[r].expect("active row matched after augment");
                }
            }
            heap.push(Node {
                cost: m.mapping_cost(&mapping),
                mapping,
                fixed,
                forbidden,
                state,
            });
        }
    }
    flush(&mut pending, &mut out, limit, error_on_limit)?;
    Ok((out, stats))
}

fn extract_mapping(state: &LapState) -> Vec<usize> {
    state
        .row_to_col
        .iter()
        .map(|c| c.expect("solved state has a full matching"))
        .collect()
}
