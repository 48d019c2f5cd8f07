//! Static kd-tree for nearest-neighbor distances.

const LEAF: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    pts: Vec<f64>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds from flat coordinates, `dim` per point.
    pub fn new(dim: usize, coords: &[f64]) -> Self {
        let count = coords.len() / dim;
        let mut order: Vec<usize> = (0..count).collect();
        let mut nodes = Vec::new();
        if count > 0 {
            build(coords, dim, &mut order, 0, count, &mut nodes);
        }
        let mut pts = Vec::with_capacity(coords.len());
        for &i in &order {
            pts.extend_from_slice(&coords[i * dim..(i + 1) * dim]);
        }
        Self { dim, pts, nodes }
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.pts.len() / self.dim
    }

    /// Squared distance from `q` to the nearest stored point (∞ when empty).
    pub fn nearest2(&self, q: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &[f64], best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let p = &self.pts[i * self.dim..(i + 1) * self.dim];
                    let d: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff < *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(coords: &[f64], dim: usize, order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut axis = 0;
    let mut spread = -1.0;
    for a in 0..dim {
        let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = coords[i * dim + a];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > spread {
            spread = hi - lo;
            axis = a;
        }
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&i, &j| coords[i * dim + axis].total_cmp(&coords[j * dim + axis]));
    let value = coords[slice[mid] * dim + axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build(coords, dim, order, start, start + mid, nodes);
    let right = build(coords, dim, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}
