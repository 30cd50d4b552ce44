use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::spatial::PointGrid;

/// Disjoint groups of Gaussian indices covering a cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods {
    pub groups: Vec<Vec<usize>>,
    /// Mean over groups with at least two members of their mean pairwise
    /// member distance; zero if there are none.
    pub d_mean: f64,
}

/// Greedy grouping in index order: each still-unassigned point takes its
/// `k` nearest unassigned points (fewer once exhausted).
pub fn build_neighborhoods(points: &[Vec3], k: usize) -> Result<Neighborhoods> {
    if points.is_empty() {
        return Err(Error::EmptyInput("neighborhoods need at least one point"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut grid = PointGrid::new(points);
    let mut groups = Vec::new();
    for i in 0..points.len() {
        if !grid.is_alive(i) {
            continue;
        }
        grid.remove(i);
        let mut group = vec![i];
        for (j, _) in grid.knn(&points[i], k) {
            grid.remove(j);
            group.push(j);
        }
        groups.push(group);
    }

    let mut sum = 0.0;
    let mut counted = 0usize;
    for g in groups.iter().filter(|g| g.len() >= 2) {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (a, &i) in g.iter().enumerate() {
            for &j in &g[a + 1..] {
                total += (points[i] - points[j]).norm();
                pairs += 1;
            }
        }
        sum += total / pairs as f64;
        counted += 1;
    }
    let d_mean = if counted == 0 { 0.0 } else { sum / counted as f64 };
    Ok(Neighborhoods { groups, d_mean })
}
