use std::collections::HashMap;

use crate::error::{Error, Result};

/// Kendall's tau-b between two paired score vectors; `None` when either side
/// is constant or the lengths differ.
pub fn tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            let dx = (x[a] - x[b]).partial_cmp(&0.0)? as i64;
            let dy = (y[a] - y[b]).partial_cmp(&0.0)? as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n1 = (concordant + discordant + tie_x) as f64;
    let n2 = (concordant + discordant + tie_y) as f64;
    if n1 == 0.0 || n2 == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / (n1 * n2).sqrt())
}

/// Kendall's tau between two total orders (best first) over the same ids.
pub fn kendall_tau<S: AsRef<str>, T: AsRef<str>>(pred: &[S], truth: &[T]) -> Result<f64> {
    let pos: HashMap<&str, usize> = truth.iter().enumerate().map(|(r, id)| (id.as_ref(), r)).collect();
    if pos.len() != truth.len() || pred.len() != truth.len() {
        return Err(Error::MismatchedIds(format!(
            "{} predicted vs {} true ids",
            pred.len(),
            truth.len()
        )));
    }
    let mut x = Vec::with_capacity(pred.len());
    let mut y = Vec::with_capacity(pred.len());
    for (r, id) in pred.iter().enumerate() {
        let t = pos
            .get(id.as_ref())
            .ok_or_else(|| Error::MismatchedIds(format!("`{}` missing from truth", id.as_ref())))?;
        x.push(-(r as f64));
        y.push(-(*t as f64));
    }
    tau_b(&x, &y).ok_or_else(|| Error::MismatchedIds("need at least two distinct ids".into()))
}
