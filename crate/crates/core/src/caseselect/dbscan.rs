use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub case_ids: Vec<String>,
    /// Cluster id per point, [`NOISE`] for noise.
    pub labels: Vec<i32>,
    pub n_clusters: usize,
}

/// Uniform grid with cell side `eps`; neighbors of a point lie in the 3^d
/// surrounding cells.
struct Grid {
    eps: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn new(points: &Matrix, eps: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter_rows().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Grid { eps, cells }
    }

    fn key(p: &[f64], eps: f64) -> Vec<i64> {
        p.iter().map(|v| (v / eps).floor() as i64).collect()
    }

    /// Indices within `eps` of point `i` (including `i`), ascending.
    fn neighbors(&self, points: &Matrix, i: usize) -> Vec<usize> {
        let p = points.row(i);
        let base = Self::key(p, self.eps);
        let d = base.len();
        let eps2 = self.eps * self.eps;
        let mut out = Vec::new();
        let mut offset = vec![-1i64; d];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(members) = self.cells.get(&key) {
                for &j in members {
                    let q = points.row(j);
                    let dist2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist2 <= eps2 {
                        out.push(j);
                    }
                }
            }
            // odometer over {-1, 0, 1}^d
            let mut k = 0;
            while k < d {
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density clustering with Euclidean distance; a point's own position counts
/// toward its neighborhood.
///
/// Cluster ids follow first discovery when scanning points by index. A border
/// point joins the cluster of its nearest core neighbor (lower index on exact
/// distance ties), which keeps labels independent of input order.
pub fn dbscan(points: &Matrix, eps: f64, min_samples: usize) -> (Vec<i32>, usize) {
    let n = points.rows();
    let grid = Grid::new(points, eps);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbors(points, i)).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_samples).collect();

    let mut labels = vec![NOISE; n];
    let mut next = 0i32;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(q) = queue.pop_front() {
            for &r in &neighbors[q] {
                if core[r] && labels[r] == NOISE {
                    labels[r] = next;
                    queue.push_back(r);
                }
            }
        }
        next += 1;
    }

    for i in (0..n).filter(|&i| !core[i]) {
        let p = points.row(i);
        let mut best: Option<(f64, usize)> = None;
        for &j in neighbors[i].iter().filter(|&&j| core[j]) {
            let d2: f64 = p
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.is_none_or(|(bd, _)| d2 < bd) {
                best = Some((d2, j));
            }
        }
        if let Some((_, j)) = best {
            labels[i] = labels[j];
        }
    }
    (labels, next as usize)
}

pub fn dbscan_embedding(
    case_ids: Vec<String>,
    coordinates: &[[f64; 2]],
    eps: f64,
    min_samples: usize,
) -> ClusterAssignment {
    let m = Matrix::from_rows(coordinates);
    let (labels, n_clusters) = dbscan(&m, eps, min_samples);
    ClusterAssignment {
        case_ids,
        labels,
        n_clusters,
    }
}
