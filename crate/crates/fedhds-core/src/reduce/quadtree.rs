//! Quadtree over a 2-D embedding for Barnes-Hut force approximation.

const MAX_DEPTH: usize = 48;

struct Node {
    /// Cell center and half side length.
    cx: f64,
    cy: f64,
    half: f64,
    /// Sum of member coordinates (center of mass = sum / count).
    sum_x: f64,
    sum_y: f64,
    count: usize,
    /// Child node indices (NW, NE, SW, SE); usize::MAX = absent.
    children: [usize; 4],
    /// Point indices held directly: transient for an unsplit leaf,
    /// permanent once MAX_DEPTH forces coincident points to pile up.
    points: Vec<usize>,
    depth: usize,
}

impl Node {
    fn new(cx: f64, cy: f64, half: f64, depth: usize) -> Self {
        Node {
            cx,
            cy,
            half,
            sum_x: 0.0,
            sum_y: 0.0,
            count: 0,
            children: [usize::MAX; 4],
            points: Vec::new(),
            depth,
        }
    }

    fn is_leaf(&self) -> bool {
        self.children == [usize::MAX; 4]
    }
}

pub struct QuadTree<'a> {
    nodes: Vec<Node>,
    ys: &'a [f64],
}

impl<'a> QuadTree<'a> {
    /// Builds the tree over `n` points stored row-major in `ys`
    /// (`[x0, y0, x1, y1, ...]`).
    pub fn build(ys: &'a [f64]) -> Self {
        let n = ys.len() / 2;
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            min_x = min_x.min(ys[2 * i]);
            max_x = max_x.max(ys[2 * i]);
            min_y = min_y.min(ys[2 * i + 1]);
            max_y = max_y.max(ys[2 * i + 1]);
        }
        let cx = 0.5 * (min_x + max_x);
        let cy = 0.5 * (min_y + max_y);
        let half = (0.5 * (max_x - min_x).max(max_y - min_y)).max(1e-12) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            nodes: vec![Node::new(cx, cy, half, 0)],
            ys,
        };
        for i in 0..n {
            tree.insert(0, i);
        }
        tree
    }

    fn insert(&mut self, mut node: usize, point: usize) {
        let (px, py) = (self.ys[2 * point], self.ys[2 * point + 1]);
        loop {
            let n = &mut self.nodes[node];
            n.sum_x += px;
            n.sum_y += py;
            n.count += 1;
            if n.is_leaf() {
                if n.count == 1 || n.depth >= MAX_DEPTH {
                    n.points.push(point);
                    return;
                }
                // Split: push the resident points down, then continue with
                // the new point.
                let residents = std::mem::take(&mut self.nodes[node].points);
                for r in residents {
                    let child = self.child_for(node, r);
                    let (rx, ry) = (self.ys[2 * r], self.ys[2 * r + 1]);
                    let c = &mut self.nodes[child];
                    c.sum_x += rx;
                    c.sum_y += ry;
                    c.count += 1;
                    c.points.push(r);
                }
            }
            node = self.child_for(node, point);
        }
    }

    /// Child quadrant index for a point, materializing the node if needed.
    fn child_for(&mut self, node: usize, point: usize) -> usize {
        let (px, py) = (self.ys[2 * point], self.ys[2 * point + 1]);
        let (cx, cy, half, depth) = {
            let n = &self.nodes[node];
            (n.cx, n.cy, n.half, n.depth)
        };
        let east = px >= cx;
        let north = py >= cy;
        let quadrant = match (north, east) {
            (true, false) => 0,
            (true, true) => 1,
            (false, false) => 2,
            (false, true) => 3,
        };
        if self.nodes[node].children[quadrant] == usize::MAX {
            let h = half * 0.5;
            let ccx = if east { cx + h } else { cx - h };
            let ccy = if north { cy + h } else { cy - h };
            let idx = self.nodes.len();
            self.nodes.push(Node::new(ccx, ccy, h, depth + 1));
            self.nodes[node].children[quadrant] = idx;
        }
        self.nodes[node].children[quadrant]
    }

    /// Accumulates the repulsive numerator `sum_j w^2 (y_i - y_j)` into
    /// `force` and the partition contribution `sum_j w` into the returned
    /// value, for `w = 1 / (1 + ||y_i - y_j||^2)`, skipping `j == i`.
    ///
    /// A cell is summarized by its center of mass when
    /// `side / distance < theta`; `theta == 0` therefore descends to the
    /// leaves and reproduces the exact sums.
    pub fn negative_forces(&self, i: usize, theta: f64, force: &mut [f64; 2]) -> f64 {
        let (xi, yi) = (self.ys[2 * i], self.ys[2 * i + 1]);
        let theta_sq = theta * theta;
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.count == 0 {
                continue;
            }
            if node.is_leaf() {
                for &j in &node.points {
                    if j == i {
                        continue;
                    }
                    let dx = xi - self.ys[2 * j];
                    let dy = yi - self.ys[2 * j + 1];
                    let w = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += w;
                    force[0] += w * w * dx;
                    force[1] += w * w * dy;
                }
                continue;
            }
            let com_x = node.sum_x / node.count as f64;
            let com_y = node.sum_y / node.count as f64;
            let dx = xi - com_x;
            let dy = yi - com_y;
            let dist_sq = dx * dx + dy * dy;
            let side = 2.0 * node.half;
            if dist_sq > 0.0 && side * side < theta_sq * dist_sq {
                let w = 1.0 / (1.0 + dist_sq);
                let m = node.count as f64;
                z += m * w;
                force[0] += m * w * w * dx;
                force[1] += m * w * w * dy;
            } else {
                for &child in &node.children {
                    if child != usize::MAX {
                        stack.push(child);
                    }
                }
            }
        }
        z
    }
}
