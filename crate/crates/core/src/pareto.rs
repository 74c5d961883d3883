//! Dominance, Pareto frontiers and normalized 2-D hypervolume over
//! `(complexity, accuracy)` points. Lower complexity and higher accuracy are
//! both better.

use std::cmp::Ordering;

use crate::corpus::TaskKind;
use crate::training::Family;

/// Where a point came from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Provenance {
    pub task: TaskKind,
    pub language: String,
    pub representation: String,
    pub family: Family,
    pub probe_id: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbePoint {
    pub complexity: f64,
    pub accuracy: f64,
    pub provenance: Provenance,
}

impl ProbePoint {
    pub fn new(complexity: f64, accuracy: f64, provenance: Provenance) -> Self {
        ProbePoint { complexity, accuracy, provenance }
    }
}

/// Non-dominated points, by ascending complexity and strictly increasing accuracy.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frontier {
    pub points: Vec<ProbePoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypervolumeResult {
    pub value: f64,
    pub c_max: f64,
    /// Points within the bound.
    pub point_count: usize,
    /// Points with complexity above `c_max`, which contribute nothing.
    pub excluded: usize,
}

pub fn dominates(p: &ProbePoint, q: &ProbePoint) -> bool {
    p.complexity <= q.complexity && p.accuracy >= q.accuracy && (p.complexity < q.complexity || p.accuracy > q.accuracy)
}

fn frontier_order(a: &ProbePoint, b: &ProbePoint) -> Ordering {
    a.complexity
        .total_cmp(&b.complexity)
        .then(b.accuracy.total_cmp(&a.accuracy))
        .then(a.provenance.probe_id.cmp(&b.provenance.probe_id))
}

/// Sort-and-sweep frontier extraction, `O(n log n)`. Of several identical
/// points the one with the lowest probe id is kept.
pub fn pareto_frontier(points: &[ProbePoint]) -> Frontier {
    let mut sorted: Vec<&ProbePoint> = points.iter().collect();
    sorted.sort_by(|a, b| frontier_order(a, b));
    let mut out: Vec<ProbePoint> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|best| p.accuracy > best.accuracy) {
            out.push(p.clone());
        }
    }
    Frontier { points: out }
}

/// Area dominated in the unit box after scaling complexity by `c_max`, with
/// reference corner `(1, 0)`. Points beyond the bound are excluded rather
/// than clipped.
///
/// # Panics
///
/// If `c_max` is not positive and finite.
pub fn hypervolume(points: &[ProbePoint], c_max: f64) -> HypervolumeResult {
    assert!(c_max > 0.0 && c_max.is_finite(), "c_max must be positive");
    let inside: Vec<ProbePoint> = points.iter().filter(|p| p.complexity / c_max <= 1.0).cloned().collect();
    let frontier = pareto_frontier(&inside);
    let steps = &frontier.points;
    let mut value = 0.0;
    for (i, p) in steps.iter().enumerate() {
        let from = p.complexity / c_max;
        let to = steps.get(i + 1).map_or(1.0, |q| q.complexity / c_max);
        value += p.accuracy.max(0.0) * (to - from);
    }
    HypervolumeResult { value, c_max, point_count: inside.len(), excluded: points.len() - inside.len() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: f64, a: f64, id: usize) -> ProbePoint {
        ProbePoint::new(
            c,
            a,
            Provenance {
                task: TaskKind::Posl,
                language: "en".into(),
                representation: "r".into(),
                family: Family::Mlp,
                probe_id: id,
                seed: 0,
            },
        )
    }

    fn coords(f: &Frontier) -> Vec<(f64, f64)> {
        f.points.iter().map(|p| (p.complexity, p.accuracy)).collect()
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&pt(1.0, 0.9, 0), &pt(2.0, 0.8, 1)));
        assert!(!dominates(&pt(1.0, 0.9, 0), &pt(1.0, 0.9, 1)));
        assert!(!dominates(&pt(1.0, 0.8, 0), &pt(2.0, 0.9, 1)));
    }

    #[test]
    fn frontier_examples() {
        let f = pareto_frontier(&[pt(1.0, 0.9, 0), pt(2.0, 0.95, 1), pt(3.0, 0.8, 2)]);
        assert_eq!(coords(&f), vec![(1.0, 0.9), (2.0, 0.95)]);
        assert_eq!(coords(&pareto_frontier(&[pt(4.0, 0.2, 0)])), vec![(4.0, 0.2)]);
        assert!(pareto_frontier(&[]).points.is_empty());
    }

    #[test]
    fn ties_and_duplicates() {
        let f = pareto_frontier(&[pt(1.0, 0.5, 3), pt(1.0, 0.7, 4), pt(1.0, 0.7, 2)]);
        assert_eq!(f.points.len(), 1);
        assert_eq!(f.points[0].provenance.probe_id, 2);
    }

    #[test]
    fn hypervolume_examples() {
        assert!((hypervolume(&[pt(0.5, 0.8, 0)], 1.0).value - 0.40).abs() < 1e-12);
        let two = hypervolume(&[pt(0.2, 0.5, 0), pt(0.6, 0.9, 1)], 1.0);
        assert!((two.value - 0.56).abs() < 1e-12);
        assert_eq!(hypervolume(&[pt(0.0, 1.0, 0)], 1.0).value, 1.0);
        assert_eq!(hypervolume(&[], 1.0).value, 0.0);
    }

    #[test]
    fn over_bound_points_are_excluded() {
        let r = hypervolume(&[pt(100.0, 0.5, 0), pt(500.0, 0.9, 1)], 400.0);
        assert_eq!((r.point_count, r.excluded), (1, 1));
        assert!((r.value - 0.75 * 0.5).abs() < 1e-12);
    }
}
