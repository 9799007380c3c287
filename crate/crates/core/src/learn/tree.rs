use serde::{Deserialize, Serialize};

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;

/// Per-feature quantization of training values. Bin `b` covers the observed
/// values `lo[b]..=hi[b]`; features with few distinct values get one bin per
/// value.
#[derive(Debug, Clone)]
pub struct Binned {
    pub rows: usize,
    codes: Vec<Vec<u16>>,
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
}

impl Binned {
    pub fn new(x: &Matrix, max_bins: usize) -> Self {
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let mut codes = Vec::with_capacity(x.cols());
        let mut los = Vec::with_capacity(x.cols());
        let mut his = Vec::with_capacity(x.cols());
        for f in 0..x.cols() {
            let col = x.column(f);
            let mut sorted = col.clone();
            sorted.sort_by(f64::total_cmp);
            let mut uniq: Vec<(f64, usize)> = Vec::new();
            for v in sorted {
                match uniq.last_mut() {
                    Some((u, c)) if *u == v => *c += 1,
                    _ => uniq.push((v, 1)),
                }
            }
            let (lo, hi) = if uniq.len() <= max_bins {
                let v: Vec<f64> = uniq.iter().map(|u| u.0).collect();
                (v.clone(), v)
            } else {
                let target = x.rows().div_ceil(max_bins);
                let mut lo = Vec::new();
                let mut hi = Vec::new();
                let mut count = 0;
                for (k, &(v, c)) in uniq.iter().enumerate() {
                    if count == 0 {
                        lo.push(v);
                    }
                    count += c;
                    let left = uniq.len() - k - 1;
                    if count >= target || left == 0 || left < max_bins - lo.len() {
                        hi.push(v);
                        count = 0;
                    }
                }
                (lo, hi)
            };
            let c = col
                .iter()
                .map(|v| hi.partition_point(|h| h < v).min(hi.len() - 1) as u16)
                .collect();
            codes.push(c);
            los.push(lo);
            his.push(hi);
        }
        Binned {
            rows: x.rows(),
            codes,
            lo: los,
            hi: his,
        }
    }

    pub fn features(&self) -> usize {
        self.codes.len()
    }

    fn bins(&self, f: usize) -> usize {
        self.hi[f].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Class 1 probability for classification trees, raw value otherwise.
        value: f64,
        /// Training samples reaching the leaf (bootstrap multiplicity counted).
        samples: u32,
        positives: u32,
    },
}

/// Binary tree stored as a node array; node 0 is the root and `x <= threshold`
/// goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { .. } => return i,
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Sum of squared deviations; for 0/1 targets this is half the weighted Gini
/// impurity, so both trees share one split criterion.
fn sse(w: f64, s: f64, s2: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        (s2 - s * s / w).max(0.0)
    }
}

pub fn gini(positives: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = positives / total;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` uses all.
    pub m_features: Option<usize>,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    n: u32,
    pos: u32,
    w: f64,
    s: f64,
    s2: f64,
}

impl Acc {
    fn add(&mut self, o: &Acc) {
        self.n += o.n;
        self.pos += o.pos;
        self.w += o.w;
        self.s += o.s;
        self.s2 += o.s2;
    }
    fn sub(&self, o: &Acc) -> Acc {
        Acc {
            n: self.n - o.n,
            pos: self.pos - o.pos,
            w: self.w - o.w,
            s: self.s - o.s,
            s2: self.s2 - o.s2,
        }
    }
    fn sse(&self) -> f64 {
        sse(self.w, self.s, self.s2)
    }
}

/// Training targets per row: multiplicity, weight and target value.
pub struct Targets<'a> {
    pub count: &'a [u32],
    pub weight: &'a [f64],
    pub y: &'a [f64],
    /// Rows with `y >= 0.5` are counted as positives in leaves.
    pub classification: bool,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Last bin sent left.
    bin: u16,
    gain: f64,
}

/// Greedy CART on binned features. Splits minimize the weighted child sum of
/// squares; ties go to the lowest feature index, then the lowest threshold.
pub fn grow_tree(
    data: &Binned,
    targets: &Targets,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let d = data.features();
    let min_leaf = params.min_leaf.max(1) as u32;
    let m = params.m_features.unwrap_or(d).clamp(1, d.max(1));
    let rows: Vec<u32> = (0..data.rows as u32)
        .filter(|&i| targets.count[i as usize] > 0)
        .collect();
    let acc_of = |i: usize| {
        let c = targets.count[i];
        let w = targets.weight[i] * c as f64;
        let y = targets.y[i];
        Acc {
            n: c,
            pos: if targets.classification && y >= 0.5 {
                c
            } else {
                0
            },
            w,
            s: w * y,
            s2: w * y * y,
        }
    };
    let max_bins = (0..d).map(|f| data.bins(f)).max().unwrap_or(0);
    let mut hist = vec![Acc::default(); max_bins];

    let mut nodes: Vec<Node> = Vec::new();
    let mut rows = rows;
    // (node slot, range start, range end, depth)
    let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
    nodes.push(Node::Leaf {
        value: 0.0,
        samples: 0,
        positives: 0,
    });
    while let Some((slot, a, b, depth)) = stack.pop() {
        let mut total = Acc::default();
        for &i in &rows[a..b] {
            total.add(&acc_of(i as usize));
        }
        let leaf = Node::Leaf {
            value: if total.w > 0.0 {
                total.s / total.w
            } else {
                0.0
            },
            samples: total.n,
            positives: total.pos,
        };
        let parent = total.sse();
        let tol = 1e-12 * parent.abs().max(1.0);
        let can_split =
            params.max_depth.is_none_or(|md| depth < md) && total.n >= 2 * min_leaf && parent > tol;
        if !can_split {
            nodes[slot] = leaf;
            continue;
        }

        let mut feats: Vec<usize> = if m < d {
            sample(rng, d, m).into_vec()
        } else {
            (0..d).collect()
        };
        feats.sort_unstable();

        let mut best: Option<Split> = None;
        for &f in &feats {
            let nb = data.bins(f);
            if nb < 2 {
                continue;
            }
            let h = &mut hist[..nb];
            h.fill(Acc::default());
            let codes = &data.codes[f];
            for &i in &rows[a..b] {
                h[codes[i as usize] as usize].add(&acc_of(i as usize));
            }
            let mut left = Acc::default();
            let mut prev: Option<usize> = None;
            for (bin, acc) in h.iter().enumerate() {
                if acc.n == 0 {
                    continue;
                }
                if let Some(p) = prev {
                    let right = total.sub(&left);
                    if left.n >= min_leaf && right.n >= min_leaf {
                        let gain = parent - left.sse() - right.sse();
                        if gain > tol && best.as_ref().is_none_or(|bs| gain > bs.gain + tol) {
                            best = Some(Split {
                                feature: f,
                                threshold: 0.5 * (data.hi[f][p] + data.lo[f][bin]),
                                bin: p as u16,
                                gain,
                            });
                        }
                    }
                }
                left.add(acc);
                prev = Some(bin);
            }
        }

        let Some(split) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let codes = &data.codes[split.feature];
        let mut lo = a;
        let mut hi = b;
        while lo < hi {
            if codes[rows[lo] as usize] <= split.bin {
                lo += 1;
            } else {
                hi -= 1;
                rows.swap(lo, hi);
            }
        }
        let left = nodes.len();
        let right = left + 1;
        nodes.push(leaf);
        nodes.push(leaf);
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        stack.push((right, lo, b, depth + 1));
        stack.push((left, a, lo, depth + 1));
    }
    DecisionTree { nodes }
}
