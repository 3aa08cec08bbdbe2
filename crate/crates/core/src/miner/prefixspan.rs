//! PrefixSpan over short windows with per-window support.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentSequence<S> {
    pub items: Vec<S>,
    /// Number of windows containing `items` as an order-preserving subsequence.
    pub support: usize,
}

/// Every subsequence of length `1..=max_len` supported by at least `sigma`
/// windows, in lexicographic order of items.
pub fn mine_frequent_subsequences<S: Clone + Ord>(
    windows: &[Vec<S>],
    sigma: usize,
    max_len: usize,
) -> Vec<FrequentSequence<S>> {
    let sigma = sigma.max(1);
    let mut out = Vec::new();
    if max_len == 0 || windows.len() < sigma {
        return out;
    }
    let projection: Vec<(usize, usize)> = (0..windows.len()).map(|w| (w, 0)).collect();
    let mut prefix = Vec::new();
    grow(windows, &projection, sigma, max_len, &mut prefix, &mut out);
    out
}

fn grow<S: Clone + Ord>(
    windows: &[Vec<S>],
    projection: &[(usize, usize)],
    sigma: usize,
    max_len: usize,
    prefix: &mut Vec<S>,
    out: &mut Vec<FrequentSequence<S>>,
) {
    // item -> projected postfixes after its first occurrence
    let mut extensions: BTreeMap<&S, Vec<(usize, usize)>> = BTreeMap::new();
    for &(w, start) in projection {
        let window = &windows[w];
        let mut seen: Vec<&S> = Vec::new();
        for (i, item) in window.iter().enumerate().skip(start) {
            if seen.contains(&item) {
                continue;
            }
            seen.push(item);
            extensions.entry(item).or_default().push((w, i + 1));
        }
    }
    for (item, projected) in extensions {
        if projected.len() < sigma {
            continue;
        }
        prefix.push(item.clone());
        out.push(FrequentSequence {
            items: prefix.clone(),
            support: projected.len(),
        });
        if prefix.len() < max_len {
            grow(windows, &projected, sigma, max_len, prefix, out);
        }
        prefix.pop();
    }
}
