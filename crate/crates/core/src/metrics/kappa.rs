use std::collections::BTreeMap;

use super::MetricsError;

/// Cohen's kappa over two aligned labelings. When chance agreement is 1
/// (both annotators constant) the score is 1 if the labelings agree, else 0.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(1.0);
    }
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut counts: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    for x in a {
        counts.entry(x).or_default().0 += 1;
    }
    for y in b {
        counts.entry(y).or_default().1 += 1;
    }
    let p_e: f64 = counts.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
