//! Utility ranking and greedy admission of speculative jobs.

use super::job::SpecEstimate;
use std::cmp::Ordering;

/// Launch order: `U` descending, then higher `p`, then lower `c`, then
/// lower index (earlier submission).
pub fn launch_order(a: &SpecEstimate, ia: usize, b: &SpecEstimate, ib: usize) -> Ordering {
    b.utility()
        .total_cmp(&a.utility())
        .then_with(|| b.p.total_cmp(&a.p))
        .then_with(|| a.cost.cmp(&b.cost))
        .then_with(|| ia.cmp(&ib))
}

/// Candidate indices in launch order.
pub fn rank_by_utility(cands: &[SpecEstimate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..cands.len()).collect();
    idx.sort_by(|&a, &b| launch_order(&cands[a], a, &cands[b], b));
    idx
}

/// Greedy walk over the ranking: a job launches when its cost fits both the
/// remaining slack and the remaining budget; infeasible jobs are skipped.
/// Returns the admitted indices in launch order.
pub fn greedy_select(cands: &[SpecEstimate], slack: u32, budget: u32) -> Vec<usize> {
    let (mut r, mut b) = (slack, budget);
    let mut out = Vec::new();
    for i in rank_by_utility(cands) {
        if r == 0 || b == 0 {
            break;
        }
        let c = cands[i].cost;
        if c <= r && c <= b {
            r -= c;
            b -= c;
            out.push(i);
        }
    }
    out
}

/// `sum p * T` over a selection.
pub fn expected_utility(cands: &[SpecEstimate], selected: &[usize]) -> f64 {
    selected.iter().map(|&i| cands[i].p * cands[i].benefit_ms).sum()
}

pub fn total_cost(cands: &[SpecEstimate], selected: &[usize]) -> u64 {
    selected.iter().map(|&i| u64::from(cands[i].cost)).sum()
}
