use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::lines::Line;
use crate::anchor::neighborhoods::Neighborhoods;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::spatial::PointGrid;

const LINE_CHUNK: usize = 2048;

/// Anchors of one cloud. Anchor `j` is the convex combination
/// `Σ weights[j][m] · x[members[j][m]]` of its neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnchorSetFile", into = "AnchorSetFile")]
pub struct AnchorSet {
    positions: Vec<Vec3>,
    members: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    line_index: Vec<usize>,
    gaussian_to_anchors: Vec<Vec<usize>>,
    d_mean: f64,
    delta: f64,
}

/// JSON layout of [`AnchorSet`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorSetFile {
    d_mean: f64,
    delta: f64,
    anchors: Vec<AnchorEntry>,
    gaussian_to_anchors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorEntry {
    position: [f64; 3],
    line: usize,
    members: Vec<usize>,
    weights: Vec<f64>,
}

impl TryFrom<AnchorSetFile> for AnchorSet {
    type Error = Error;

    fn try_from(f: AnchorSetFile) -> Result<Self> {
        let set = AnchorSet {
            positions: f.anchors.iter().map(|a| Vec3::from(a.position)).collect(),
            line_index: f.anchors.iter().map(|a| a.line).collect(),
            weights: f.anchors.iter().map(|a| a.weights.clone()).collect(),
            members: f.anchors.into_iter().map(|a| a.members).collect(),
            gaussian_to_anchors: f.gaussian_to_anchors,
            d_mean: f.d_mean,
            delta: f.delta,
        };
        set.validate()?;
        Ok(set)
    }
}

impl From<AnchorSet> for AnchorSetFile {
    fn from(s: AnchorSet) -> Self {
        AnchorSetFile {
            d_mean: s.d_mean,
            delta: s.delta,
            anchors: (0..s.positions.len())
                .map(|j| AnchorEntry {
                    position: s.positions[j].into(),
                    line: s.line_index[j],
                    members: s.members[j].clone(),
                    weights: s.weights[j].clone(),
                })
                .collect(),
            gaussian_to_anchors: s.gaussian_to_anchors,
        }
    }
}

impl AnchorSet {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvariantViolation(m));
        let n = self.gaussian_to_anchors.len();
        let m = self.positions.len();
        if !(self.d_mean.is_finite() && self.d_mean >= 0.0 && self.delta.is_finite() && self.delta >= 0.0) {
            return bad("d_mean and delta must be finite and non-negative".into());
        }
        for j in 0..m {
            if !self.positions[j].iter().all(|v| v.is_finite()) {
                return bad(format!("anchor {j} has a non-finite position"));
            }
            let (mem, w) = (&self.members[j], &self.weights[j]);
            if mem.is_empty() || mem.len() != w.len() {
                return bad(format!("anchor {j} members and weights disagree"));
            }
            if let Some(&i) = mem.iter().find(|&&i| i >= n) {
                return bad(format!("anchor {j} member {i} out of range"));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad(format!("anchor {j} weights are not a convex combination"));
            }
        }
        for (i, list) in self.gaussian_to_anchors.iter().enumerate() {
            if list.is_empty() {
                return bad(format!("gaussian {i} has no anchor"));
            }
            if let Some(&j) = list.iter().find(|&&j| j >= m) {
                return bad(format!("gaussian {i} refers to anchor {j} of {m}"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn members(&self, anchor: usize) -> &[usize] {
        &self.members[anchor]
    }

    pub fn weights(&self, anchor: usize) -> &[f64] {
        &self.weights[anchor]
    }

    /// Index of the sampled line that produced each anchor.
    pub fn line_index(&self) -> &[usize] {
        &self.line_index
    }

    pub fn gaussian_to_anchors(&self) -> &[Vec<usize>] {
        &self.gaussian_to_anchors
    }

    pub fn d_mean(&self) -> f64 {
        self.d_mean
    }

    /// Cylinder radius `(√3/2)·d_mean`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Anchor positions recomputed from moved Gaussian centers with the
    /// frame-1 weights.
    pub fn positions_at(&self, points: &[Vec3]) -> Result<Vec<Vec3>> {
        if points.len() != self.gaussian_to_anchors.len() {
            return Err(Error::SizeMismatch {
                expected: self.gaussian_to_anchors.len(),
                found: points.len(),
            });
        }
        Ok(self
            .members
            .iter()
            .zip(&self.weights)
            .map(|(mem, w)| mem.iter().zip(w).map(|(&i, &wi)| points[i] * wi).sum())
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }
}

/// Bucket grid over neighborhood centroids for line queries.
struct CentroidGrid {
    lo: Vec3,
    cell: f64,
    dims: [usize; 3],
    start: Vec<usize>,
    items: Vec<u32>,
}

impl CentroidGrid {
    fn new(centroids: &[Vec3], delta: f64) -> Self {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in centroids {
            lo = lo.inf(c);
            hi = hi.sup(c);
        }
        let ext = (hi - lo).max();
        let mut cell = delta.max(ext * 1e-6).max(1e-12);
        let cap = (centroids.len() * 8).max(64) as f64;
        while (0..3).map(|a| ((hi[a] - lo[a]) / cell).floor() + 1.0).product::<f64>() > cap {
            cell *= 1.5;
        }
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1);
        let id_of = |c: &Vec3| {
            let k = [0, 1, 2].map(|a| (((c[a] - lo[a]) / cell).floor() as usize).min(dims[a] - 1));
            (k[2] * dims[1] + k[1]) * dims[0] + k[0]
        };
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut start = vec![0usize; n_cells + 1];
        for c in centroids {
            start[id_of(c) + 1] += 1;
        }
        for i in 0..n_cells {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; centroids.len()];
        for (g, c) in centroids.iter().enumerate() {
            let id = id_of(c);
            items[fill[id]] = g as u32;
            fill[id] += 1;
        }
        Self { lo, cell, dims, start, items }
    }

    /// Every centroid within `pad` of the line, plus some farther ones.
    fn candidates(&self, line: &Line, pad: f64, out: &mut Vec<u32>) {
        out.clear();
        let dir = line.dir;
        let a = (0..3).max_by(|&i, &j| dir[i].abs().total_cmp(&dir[j].abs())).expect("3 axes");
        let others = [(a + 1) % 3, (a + 2) % 3];
        let cell_range = |axis: usize, lo_v: f64, hi_v: f64| -> Option<(usize, usize)> {
            let lo_c = ((lo_v - self.lo[axis]) / self.cell).floor();
            let hi_c = ((hi_v - self.lo[axis]) / self.cell).floor();
            let max = self.dims[axis] as f64 - 1.0;
            if hi_c < 0.0 || lo_c > max {
                return None;
            }
            Some((lo_c.max(0.0) as usize, hi_c.min(max) as usize))
        };
        for s in 0..self.dims[a] {
            let z0 = self.lo[a] + s as f64 * self.cell - pad;
            let z1 = self.lo[a] + (s + 1) as f64 * self.cell + pad;
            let t0 = (z0 - line.a[a]) / dir[a];
            let t1 = (z1 - line.a[a]) / dir[a];
            let mut ranges = [(0usize, 0usize); 2];
            let mut empty = false;
            for (k, &b) in others.iter().enumerate() {
                let v0 = line.a[b] + t0 * dir[b];
                let v1 = line.a[b] + t1 * dir[b];
                match cell_range(b, v0.min(v1) - pad, v0.max(v1) + pad) {
                    Some(r) => ranges[k] = r,
                    None => empty = true,
                }
            }
            if empty {
                continue;
            }
            for c1 in ranges[0].0..=ranges[0].1 {
                for c2 in ranges[1].0..=ranges[1].1 {
                    let mut k = [0usize; 3];
                    k[a] = s;
                    k[others[0]] = c1;
                    k[others[1]] = c2;
                    let id = (k[2] * self.dims[1] + k[1]) * self.dims[0] + k[0];
                    out.extend_from_slice(&self.items[self.start[id]..self.start[id + 1]]);
                }
            }
        }
    }
}

fn check_partition(n: usize, hoods: &Neighborhoods) -> Result<()> {
    let mut seen = vec![false; n];
    for g in &hoods.groups {
        if g.is_empty() {
            return Err(Error::InvariantViolation("empty neighborhood".into()));
        }
        for &i in g {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvariantViolation(format!("neighborhoods do not partition the cloud at index {i}")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvariantViolation("neighborhoods do not cover the cloud".into()));
    }
    Ok(())
}

/// For each neighborhood, the first line (in sampling order) whose
/// radius-`delta` cylinder contains every member, or `None`.
pub(crate) fn first_hits(points: &[Vec3], lines: &[Line], groups: &[Vec<usize>], delta: f64) -> Vec<Option<usize>> {
    let mut hits = vec![None; groups.len()];
    if groups.is_empty() {
        return hits;
    }
    let centroids: Vec<Vec3> = groups
        .iter()
        .map(|g| g.iter().map(|&i| points[i]).sum::<Vec3>() / g.len() as f64)
        .collect();
    let grid = CentroidGrid::new(&centroids, delta);
    let pad = delta * (1.0 + 1e-9);
    let mut remaining = groups.len();
    for (chunk_idx, chunk) in lines.chunks(LINE_CHUNK).enumerate() {
        let found: Vec<Vec<u32>> = chunk
            .par_iter()
            .map_init(Vec::new, |buf, line| {
                grid.candidates(line, pad, buf);
                buf.iter()
                    .copied()
                    .filter(|&g| {
                        let g = g as usize;
                        hits[g].is_none()
                            && line.distance(&centroids[g]) <= pad
                            && groups[g].iter().all(|&i| line.distance(&points[i]) <= delta)
                    })
                    .collect()
            })
            .collect();
        for (offset, gs) in found.into_iter().enumerate() {
            for g in gs {
                if hits[g as usize].is_none() {
                    hits[g as usize] = Some(chunk_idx * LINE_CHUNK + offset);
                    remaining -= 1;
                }
            }
        }
        if remaining == 0 {
            break;
        }
    }
    hits
}

/// Builds the anchor set of one cloud from its neighborhoods and a line set.
pub fn extract_anchors(points: &[Vec3], lines: &[Line], hoods: &Neighborhoods) -> Result<AnchorSet> {
    if points.is_empty() {
        return Err(Error::EmptyInput("anchor extraction needs a nonempty cloud"));
    }
    check_partition(points.len(), hoods)?;
    let delta = 3f64.sqrt() / 2.0 * hoods.d_mean;
    let hits = first_hits(points, lines, &hoods.groups, delta);

    let mut set = AnchorSet {
        positions: Vec::new(),
        members: Vec::new(),
        weights: Vec::new(),
        line_index: Vec::new(),
        gaussian_to_anchors: vec![Vec::new(); points.len()],
        d_mean: hoods.d_mean,
        delta,
    };
    for (group, hit) in hoods.groups.iter().zip(&hits) {
        let Some(l) = *hit else { continue };
        let d: Vec<f64> = group.iter().map(|&i| lines[l].distance(&points[i])).collect();
        let total: f64 = d.iter().sum();
        let weights: Vec<f64> = if total > 0.0 {
            d.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / group.len() as f64; group.len()]
        };
        let p = group.iter().zip(&weights).map(|(&i, &w)| points[i] * w).sum();
        let j = set.positions.len();
        for &i in group {
            set.gaussian_to_anchors[i].push(j);
        }
        set.positions.push(p);
        set.members.push(group.clone());
        set.weights.push(weights);
        set.line_index.push(l);
    }
    if set.positions.is_empty() {
        return Err(Error::NoAnchorsProduced);
    }
    let grid = PointGrid::new(&set.positions);
    for (i, list) in set.gaussian_to_anchors.iter_mut().enumerate() {
        if list.is_empty() {
            list.push(grid.nearest(&points[i]).expect("nonempty").0);
        }
    }
    Ok(set)
}
