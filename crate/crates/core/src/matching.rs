//! Context matching: does a pattern context fit the recent tool calls?
//!
//! Both relations are anchored at the most recent event: the last context
//! signature must equal the anchor's signature.

use crate::event::{Event, EventSignature};
use crate::mapping::MatchedContext;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The context is exactly the last `|C|` signatures.
    Contiguous,
    /// The context is an order-preserving subsequence of the last `horizon`
    /// signatures whose final element is the anchor.
    #[default]
    Embedded,
}

/// Matches `context` against `window` (chronological tool calls, anchor last).
///
/// In embedded mode earlier context elements bind to the nearest preceding
/// matching event, so the matched span is as short as possible.
pub fn match_context<'a>(
    context: &[EventSignature],
    window: &[&'a Event],
    mode: MatchMode,
    horizon: usize,
) -> Option<MatchedContext<'a>> {
    let n = context.len();
    if n == 0 || window.is_empty() {
        return None;
    }
    let lo = window.len().saturating_sub(horizon.max(n));
    let recent = &window[lo..];
    let sig_eq = |e: &Event, s: &EventSignature| e.is_tool_call() && e.tool_type == s.tool_type && e.status == s.status;
    match mode {
        MatchMode::Contiguous => {
            if recent.len() < n {
                return None;
            }
            let tail = &recent[recent.len() - n..];
            tail.iter()
                .zip(context)
                .all(|(e, s)| sig_eq(e, s))
                .then(|| MatchedContext::contiguous(tail.to_vec()))
        }
        MatchMode::Embedded => {
            let last = recent.len() - 1;
            if !sig_eq(recent[last], &context[n - 1]) {
                return None;
            }
            let mut positions = vec![0usize; n];
            positions[n - 1] = last;
            let mut cursor = last;
            for ci in (0..n - 1).rev() {
                let found = (0..cursor).rev().find(|&i| sig_eq(recent[i], &context[ci]))?;
                positions[ci] = found;
                cursor = found;
            }
            let first = positions[0];
            let span = recent[first..].to_vec();
            let positions = positions.into_iter().map(|p| p - first).collect();
            Some(MatchedContext { span, positions })
        }
    }
}
