//! The loss-coefficient grid: nine (alpha, beta) pairs, each with gamma
//! above, equal to, and below alpha + beta.

use serde::Serialize;

/// How gamma relates to alpha + beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// gamma = 2 (alpha + beta)
    Above,
    /// gamma = alpha + beta
    Equal,
    /// gamma = (alpha + beta) / 2
    Below,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Above => "a+b<g",
            Relation::Equal => "a+b=g",
            Relation::Below => "a+b>g",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub relation: Relation,
}

/// (alpha, beta) in tenths, in table order.
const PAIRS: [(u32, u32); 9] = [(2, 4), (2, 6), (2, 8), (2, 2), (4, 4), (6, 6), (4, 2), (6, 2), (8, 2)];

/// The 27 rows. Values are built from integer tenths so they print exactly.
pub fn loss_grid() -> Vec<GridRow> {
    let mut rows = Vec::with_capacity(27);
    for (a, b) in PAIRS {
        let s = a + b;
        for (relation, g) in [(Relation::Above, 2 * s), (Relation::Equal, s), (Relation::Below, s / 2)] {
            rows.push(GridRow { alpha: a as f64 / 10.0, beta: b as f64 / 10.0, gamma: g as f64 / 10.0, relation });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_27_distinct_rows() {
        let g = loss_grid();
        assert_eq!(g.len(), 27);
        let keys: std::collections::HashSet<String> =
            g.iter().map(|r| format!("{:.1},{:.1},{:.1}", r.alpha, r.beta, r.gamma)).collect();
        assert_eq!(keys.len(), 27);
    }

    #[test]
    fn relations_hold() {
        for r in loss_grid() {
            let s = r.alpha + r.beta;
            match r.relation {
                Relation::Above => assert!(s < r.gamma),
                Relation::Equal => assert!((s - r.gamma).abs() < 1e-12),
                Relation::Below => assert!(s > r.gamma),
            }
        }
    }
}
