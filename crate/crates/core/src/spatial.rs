//! Uniform-grid point index for k-nearest-neighbor queries with removal.

use crate::math::Vec3;

/// Points bucketed into cubic cells. Queries search shells of cells around
/// the query cell until the k-th candidate is provably final. Results are
/// ordered by `(squared distance, index)`.
#[derive(Debug, Clone)]
pub struct PointGrid {
    points: Vec<Vec3>,
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
    alive: Vec<bool>,
    n_alive: usize,
}

impl PointGrid {
    /// Cell size chosen for about one point per cell.
    pub fn new(points: &[Vec3]) -> Self {
        let (lo, hi) = bounds(points);
        let ext = hi - lo;
        let n = points.len().max(1) as f64;
        let vol = ext.iter().map(|e| e.max(1e-9)).product::<f64>();
        let mut cell = (vol / n).cbrt();
        // flat or degenerate inputs: fall back to a size driven by the longest side
        let longest = ext.max();
        if !(cell.is_finite() && cell > longest * 1e-6) {
            cell = (longest / n.cbrt()).max(1e-9);
        }
        Self::with_cell_size(points, cell)
    }

    pub fn with_cell_size(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        let (lo, hi) = bounds(points);
        // cap the cell count near the point count for sparse extents
        let mut cell = cell;
        let cap = (points.len() * 8).max(64) as f64;
        loop {
            let count: f64 = (0..3).map(|a| ((hi[a] - lo[a]) / cell).floor() + 1.0).product();
            if count <= cap {
                break;
            }
            cell *= 1.5;
        }
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / cell).floor() as usize + 1);
        let mut grid = Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
            alive: vec![true; points.len()],
            n_alive: points.len(),
        };
        for (i, p) in points.iter().enumerate() {
            let c = grid.cell_of(p);
            let id = grid.cell_id(c);
            grid.cells[id].push(i as u32);
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn alive_count(&self) -> usize {
        self.n_alive
    }

    pub fn is_alive(&self, i: usize) -> bool {
        self.alive[i]
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    /// Excludes point `i` from later queries.
    pub fn remove(&mut self, i: usize) {
        if !std::mem::replace(&mut self.alive[i], false) {
            return;
        }
        self.n_alive -= 1;
        let id = self.cell_id(self.cell_of(&self.points[i]));
        let bucket = &mut self.cells[id];
        if let Some(pos) = bucket.iter().position(|&j| j as usize == i) {
            bucket.swap_remove(pos);
        }
    }

    fn cell_of(&self, p: &Vec3) -> [isize; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.origin[a]) / self.cell).floor() as isize;
            c.clamp(0, self.dims[a] as isize - 1)
        })
    }

    fn cell_id(&self, c: [isize; 3]) -> usize {
        (c[2] as usize * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize
    }

    /// Distance from `q` to the nearest face of the box of cells within
    /// Chebyshev radius `r` of `c`; anything outside that box is farther.
    fn shell_clearance(&self, q: &Vec3, c: [isize; 3], r: isize) -> f64 {
        (0..3)
            .map(|a| {
                let lo = self.origin[a] + (c[a] - r) as f64 * self.cell;
                let hi = self.origin[a] + (c[a] + r + 1) as f64 * self.cell;
                let below = if c[a] - r <= 0 { f64::INFINITY } else { q[a] - lo };
                let above = if c[a] + r >= self.dims[a] as isize - 1 { f64::INFINITY } else { hi - q[a] };
                below.min(above)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn visit_shell(&self, c: [isize; 3], r: isize, mut f: impl FnMut(usize)) {
        let clip = |a: usize, v: isize| v >= 0 && v < self.dims[a] as isize;
        for z in c[2] - r..=c[2] + r {
            if !clip(2, z) {
                continue;
            }
            for y in c[1] - r..=c[1] + r {
                if !clip(1, y) {
                    continue;
                }
                let on_face = (z - c[2]).abs() == r || (y - c[1]).abs() == r;
                let xs: Box<dyn Iterator<Item = isize>> = if on_face {
                    Box::new(c[0] - r..=c[0] + r)
                } else {
                    Box::new([c[0] - r, c[0] + r].into_iter())
                };
                for x in xs {
                    if !clip(0, x) || (r == 0 && x != c[0]) {
                        continue;
                    }
                    for &i in &self.cells[self.cell_id([x, y, z])] {
                        f(i as usize);
                    }
                    if r == 0 {
                        break;
                    }
                }
            }
        }
    }

    /// The `k` alive points closest to `q`, as `(index, squared distance)`
    /// ordered by distance then index.
    pub fn knn(&self, q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.n_alive);
        if k == 0 {
            return Vec::new();
        }
        let c = self.cell_of(q);
        let max_r = *self.dims.iter().max().expect("3 dims") as isize;
        let mut found: Vec<(usize, f64)> = Vec::new();
        let mut r = 0;
        loop {
            self.visit_shell(c, r, |i| found.push((i, (self.points[i] - q).norm_squared())));
            if found.len() >= k {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let clearance = self.shell_clearance(q, c, r);
                if found[k - 1].1 < clearance * clearance || r >= max_r {
                    found.truncate(k);
                    return found;
                }
            } else if r >= max_r {
                found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                return found;
            }
            r += 1;
        }
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.knn(q, 1).into_iter().next()
    }
}

fn bounds(points: &[Vec3]) -> (Vec3, Vec3) {
    if points.is_empty() {
        return (Vec3::zeros(), Vec3::zeros());
    }
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(points: &[Vec3], alive: &[bool], q: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<_> = points
            .iter()
            .enumerate()
            .filter(|(i, _)| alive[*i])
            .map(|(i, p)| (i, (p - q).norm_squared()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn ties_break_by_index() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let g = PointGrid::new(&pts);
        let r = g.knn(&Vec3::zeros(), 2);
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn removal_and_exhaustion() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        let mut g = PointGrid::new(&pts);
        g.remove(0);
        g.remove(0);
        assert_eq!(g.alive_count(), 9);
        assert_eq!(g.nearest(&Vec3::zeros()).unwrap().0, 1);
        assert_eq!(g.knn(&Vec3::zeros(), 50).len(), 9);
    }

    #[test]
    fn single_and_coincident_points() {
        let pts = vec![Vec3::new(0.5, 0.5, 0.5); 4];
        let g = PointGrid::new(&pts);
        assert_eq!(g.knn(&Vec3::zeros(), 3).iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(PointGrid::new(&[]).nearest(&Vec3::zeros()).is_none());
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            raw in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, -0.5f64..0.5), 1..120),
            queries in prop::collection::vec((-7.0f64..7.0, -7.0f64..7.0, -7.0f64..7.0), 1..8),
            removed in prop::collection::vec(any::<prop::sample::Index>(), 0..40),
            k in 1usize..9,
        ) {
            let pts: Vec<Vec3> = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let mut g = PointGrid::new(&pts);
            let mut alive = vec![true; pts.len()];
            for r in &removed {
                let i = r.index(pts.len());
                g.remove(i);
                alive[i] = false;
            }
            for &(x, y, z) in &queries {
                let q = Vec3::new(x, y, z);
                prop_assert_eq!(g.knn(&q, k), brute(&pts, &alive, &q, k));
            }
        }
    }
}
