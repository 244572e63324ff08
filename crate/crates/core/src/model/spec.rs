use std::iter;

use crate::error::{NgnnError, Result};
use crate::tensor::Activation;

/// Upper bound on the expanded block depth a spec may request.
pub const MAX_NGNN_DEPTH: usize = 64;

/// Parses `<n>-<act>("+"<n>-<act>)*` into the expanded activation list,
/// e.g. `"1-relu+1-sigmoid"` -> `[relu, sigmoid]`, `"2-relu"` -> `[relu, relu]`.
///
/// Errors carry the byte offset of the offending token.
pub fn parse_ngnn_spec(spec: &str) -> Result<Vec<Activation>> {
    let err = |position: usize, reason: String| NgnnError::SpecParse {
        spec: spec.to_string(),
        position,
        reason,
    };
    if spec.is_empty() {
        return Err(err(0, "empty spec".into()));
    }
    let mut acts = Vec::new();
    let mut pos = 0;
    for term in spec.split('+') {
        let Some(dash) = term.find('-') else {
            return Err(err(pos + term.len(), "expected '-' after the layer count".into()));
        };
        let (count, act) = (&term[..dash], &term[dash + 1..]);
        if count.is_empty() || !count.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(pos, format!("expected a layer count, found {count:?}")));
        }
        let n: usize = count
            .parse()
            .ok()
            .filter(|&n| n <= MAX_NGNN_DEPTH)
            .ok_or_else(|| err(pos, format!("layer count exceeds {MAX_NGNN_DEPTH}")))?;
        if n == 0 {
            return Err(err(pos, "layer count must be at least 1".into()));
        }
        let kind: Activation = act.parse().map_err(|e: String| err(pos + dash + 1, e))?;
        if acts.len() + n > MAX_NGNN_DEPTH {
            return Err(err(pos, format!("total depth exceeds {MAX_NGNN_DEPTH}")));
        }
        acts.extend(iter::repeat_n(kind, n));
        pos += term.len() + 1;
    }
    Ok(acts)
}

/// Canonical spec for an activation list: runs of equal activations are
/// merged, so `[relu, relu, sigmoid]` renders as `"2-relu+1-sigmoid"`.
pub fn render_ngnn_spec(acts: &[Activation]) -> String {
    let mut parts: Vec<(usize, Activation)> = Vec::new();
    for &a in acts {
        match parts.last_mut() {
            Some((n, last)) if *last == a => *n += 1,
            _ => parts.push((1, a)),
        }
    }
    parts
        .iter()
        .map(|(n, a)| format!("{n}-{a}"))
        .collect::<Vec<_>>()
        .join("+")
}
