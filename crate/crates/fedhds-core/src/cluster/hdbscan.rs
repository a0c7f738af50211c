//! HDBSCAN: core distances, mutual reachability, Prim MST, condensed
//! tree, excess-of-mass extraction.
//!
//! Conventions (shared with the brute-force test oracle):
//! - core distance of a point is the distance to its `min_samples`-th
//!   nearest neighbor counting the point itself;
//! - MST edges are ordered by `(weight, lower endpoint, higher endpoint)`;
//! - a parent cluster wins the excess-of-mass comparison when its
//!   stability is greater than or equal to the summed excess of its
//!   children; the root is never selectable;
//! - a merge at distance zero has lambda = infinity, and
//!   `lambda - birth` contributions with both values infinite count as 0;
//! - degenerate inputs always yield at least one group, so a
//!   participating client always contributes a centroid: fewer points
//!   than `min_cluster_size` collapse into a single group, and when
//!   excess-of-mass extraction finds no cluster below the root, the root
//!   itself becomes the group, keeping the points that survive to the
//!   root's final merge level and marking earlier dropouts as noise.

use super::{centroid_of, ClusterGroup, ClusteringResult, HdbscanConfig};
use crate::error::{Error, Result};
use crate::linalg::{dist, Matrix};

pub fn hdbscan(points: &Matrix, config: &HdbscanConfig) -> Result<ClusteringResult> {
    config.validate()?;
    let n = points.rows();
    if n == 0 {
        return Err(Error::EmptyInput("hdbscan on zero points"));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite("hdbscan input".into()));
    }
    if n < config.min_cluster_size {
        return fallback_single_group(points);
    }

    let core = core_distances(points, config.effective_min_samples());
    let mst = prim_mst(points, &core);
    let slt = single_linkage_tree(n, &mst);
    let condensed = condense_tree(&slt, n, config.min_cluster_size);
    let selected = extract_eom(&condensed);
    let member_sets = if selected.is_empty() {
        vec![root_threshold_members(&condensed)]
    } else {
        collect_members(&condensed, &selected)
    };
    build_result(points, member_sets)
}

/// Single-cluster rescue when no non-root cluster survives extraction:
/// the tree then holds only point rows hanging off the root, and the
/// group keeps the points whose fall-out lambda reaches the maximum
/// (the members of the root's last surviving component).
fn root_threshold_members(tree: &CondensedTree) -> Vec<usize> {
    let threshold = tree
        .rows
        .iter()
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut members: Vec<usize> = tree
        .rows
        .iter()
        .filter(|r| r.lambda >= threshold)
        .filter_map(|r| match r.child {
            CondensedChild::Point(p) => Some(p),
            CondensedChild::Cluster(_) => None,
        })
        .collect();
    members.sort_unstable();
    members
}

fn fallback_single_group(points: &Matrix) -> Result<ClusteringResult> {
    let members: Vec<usize> = (0..points.rows()).collect();
    let centroid = centroid_of(points, &members)?;
    Ok(ClusteringResult {
        labels: vec![0; points.rows()],
        groups: vec![ClusterGroup {
            member_indices: members,
            centroid,
        }],
    })
}

/// Distance to the `min_samples`-th nearest neighbor, the point itself
/// included, clamped to the sample count.
fn core_distances(points: &Matrix, min_samples: usize) -> Vec<f64> {
    let n = points.rows();
    let k = min_samples.min(n);
    (0..n)
        .map(|i| {
            let mut dists: Vec<f64> = (0..n).map(|j| dist(points.row(i), points.row(j))).collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dists[k - 1]
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    a: usize,
    b: usize,
    weight: f64,
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
///
/// Mutual reachability produces exact weight ties routinely (the max with
/// a core distance collapses many pairs onto one value), so edges are
/// compared by the strict total order `(weight, lower endpoint, higher
/// endpoint)`. Under a strict total order the minimum spanning tree is
/// unique, which is what lets the brute-force Kruskal oracle reproduce
/// this tree edge for edge. The returned edges are sorted by the same
/// key.
fn prim_mst(points: &Matrix, core: &[f64]) -> Vec<Edge> {
    let n = points.rows();
    let edge_key = |w: f64, a: usize, b: usize| (w, a.min(b), a.max(b));
    let mut in_tree = vec![false; n];
    let mut best_dist = vec![f64::INFINITY; n];
    let mut best_via = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));

    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = dist(points.row(current), points.row(j));
            let mrd = core[current].max(core[j]).max(d);
            if best_via[j] == usize::MAX
                || edge_key(mrd, current, j) < edge_key(best_dist[j], best_via[j], j)
            {
                best_dist[j] = mrd;
                best_via[j] = current;
            }
            if next == usize::MAX
                || edge_key(best_dist[j], best_via[j], j)
                    < edge_key(best_dist[next], best_via[next], next)
            {
                next = j;
            }
        }
        edges.push(Edge {
            a: best_via[next],
            b: next,
            weight: best_dist[next],
        });
        in_tree[next] = true;
        current = next;
    }

    edges.sort_by(|x, y| {
        let kx = (x.weight, x.a.min(x.b), x.a.max(x.b));
        let ky = (y.weight, y.a.min(y.b), y.a.max(y.b));
        kx.partial_cmp(&ky).unwrap()
    });
    edges
}

/// One merge in the single-linkage dendrogram. Leaves are ids `0..n`;
/// internal nodes are `n..2n-1` in merge order.
struct SltNode {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

fn single_linkage_tree(n: usize, sorted_edges: &[Edge]) -> Vec<SltNode> {
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let mut nodes = Vec::with_capacity(n.saturating_sub(1));

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for edge in sorted_edges {
        let ra = find(&mut parent, edge.a);
        let rb = find(&mut parent, edge.b);
        debug_assert_ne!(ra, rb, "MST edge within one component");
        let merged = n + nodes.len();
        size[merged] = size[ra] + size[rb];
        parent[ra] = merged;
        parent[rb] = merged;
        nodes.push(SltNode {
            left: ra.min(rb),
            right: ra.max(rb),
            distance: edge.weight,
            size: size[merged],
        });
    }
    nodes
}

/// Rows of the condensed tree. Cluster ids start at 0 (the root).
pub(crate) enum CondensedChild {
    Point(usize),
    Cluster(usize),
}

pub(crate) struct CondensedRow {
    pub parent: usize,
    pub child: CondensedChild,
    pub lambda: f64,
    pub size: usize,
}

pub(crate) struct CondensedTree {
    pub rows: Vec<CondensedRow>,
    pub birth_lambda: Vec<f64>,
    pub n_clusters: usize,
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

fn condense_tree(slt: &[SltNode], n: usize, min_cluster_size: usize) -> CondensedTree {
    let slt_size = |node: usize| -> usize {
        if node < n {
            1
        } else {
            slt[node - n].size
        }
    };

    let mut rows = Vec::new();
    let mut birth_lambda = vec![0.0f64];
    // Work stack of (slt internal node, condensed cluster id it belongs to).
    let root = n + slt.len() - 1;
    let mut stack = vec![(root, 0usize)];
    while let Some((node, cluster)) = stack.pop() {
        let merge = &slt[node - n];
        let lambda = lambda_of(merge.distance);
        let (left, right) = (merge.left, merge.right);
        let (ls, rs) = (slt_size(left), slt_size(right));
        let left_big = ls >= min_cluster_size;
        let right_big = rs >= min_cluster_size;
        match (left_big, right_big) {
            (true, true) => {
                for &(child, child_size) in &[(left, ls), (right, rs)] {
                    let id = birth_lambda.len();
                    birth_lambda.push(lambda);
                    rows.push(CondensedRow {
                        parent: cluster,
                        child: CondensedChild::Cluster(id),
                        lambda,
                        size: child_size,
                    });
                    stack.push((child, id));
                }
            }
            (true, false) => {
                shed_points(slt, n, right, cluster, lambda, &mut rows);
                stack.push((left, cluster));
            }
            (false, true) => {
                shed_points(slt, n, left, cluster, lambda, &mut rows);
                stack.push((right, cluster));
            }
            (false, false) => {
                shed_points(slt, n, left, cluster, lambda, &mut rows);
                shed_points(slt, n, right, cluster, lambda, &mut rows);
            }
        }
    }
    let n_clusters = birth_lambda.len();
    CondensedTree {
        rows,
        birth_lambda,
        n_clusters,
    }
}

/// Emits every point under `node` as falling out of `cluster` at `lambda`.
fn shed_points(
    slt: &[SltNode],
    n: usize,
    node: usize,
    cluster: usize,
    lambda: f64,
    rows: &mut Vec<CondensedRow>,
) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            rows.push(CondensedRow {
                parent: cluster,
                child: CondensedChild::Point(x),
                lambda,
                size: 1,
            });
        } else {
            let merge = &slt[x - n];
            stack.push(merge.left);
            stack.push(merge.right);
        }
    }
}

/// Lambda-range contribution with the infinity-cap convention.
fn lambda_gap(lambda: f64, birth: f64) -> f64 {
    if lambda.is_infinite() && birth.is_infinite() {
        0.0
    } else {
        lambda - birth
    }
}

/// Excess-of-mass selection over the condensed tree; returns the chosen
/// cluster ids (never the root).
fn extract_eom(tree: &CondensedTree) -> Vec<usize> {
    let m = tree.n_clusters;
    let mut stability = vec![0.0f64; m];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for row in &tree.rows {
        stability[row.parent] +=
            lambda_gap(row.lambda, tree.birth_lambda[row.parent]) * row.size as f64;
        if let CondensedChild::Cluster(c) = row.child {
            children[row.parent].push(c);
        }
    }

    // Child cluster ids are always larger than their parent's, so one
    // descending pass propagates subtree excess bottom-up.
    let mut excess = stability.clone();
    let mut marked = vec![false; m];
    for c in (1..m).rev() {
        let child_sum: f64 = children[c].iter().map(|&ch| excess[ch]).sum();
        if children[c].is_empty() || stability[c] >= child_sum {
            marked[c] = true;
            excess[c] = stability[c];
        } else {
            excess[c] = child_sum;
        }
    }

    // Top-down: keep the shallowest marked clusters.
    let mut selected = Vec::new();
    let mut stack: Vec<usize> = children[0].clone();
    while let Some(c) = stack.pop() {
        if marked[c] {
            selected.push(c);
        } else {
            stack.extend(&children[c]);
        }
    }
    selected.sort_unstable();
    selected
}

/// Member points of each selected cluster: every point row in the
/// condensed subtree rooted at that cluster.
fn collect_members(tree: &CondensedTree, selected: &[usize]) -> Vec<Vec<usize>> {
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); tree.n_clusters];
    let mut points: Vec<Vec<usize>> = vec![Vec::new(); tree.n_clusters];
    for row in &tree.rows {
        match row.child {
            CondensedChild::Cluster(c) => children[row.parent].push(c),
            CondensedChild::Point(p) => points[row.parent].push(p),
        }
    }
    selected
        .iter()
        .map(|&root| {
            let mut members = Vec::new();
            let mut stack = vec![root];
            while let Some(c) = stack.pop() {
                members.extend(&points[c]);
                stack.extend(&children[c]);
            }
            members.sort_unstable();
            members
        })
        .collect()
}

fn build_result(points: &Matrix, mut member_sets: Vec<Vec<usize>>) -> Result<ClusteringResult> {
    member_sets.sort_by_key(|m| m[0]);
    let mut labels = vec![-1i32; points.rows()];
    let mut groups = Vec::with_capacity(member_sets.len());
    for (id, members) in member_sets.into_iter().enumerate() {
        for &p in &members {
            labels[p] = id as i32;
        }
        let centroid = centroid_of(points, &members)?;
        groups.push(ClusterGroup {
            member_indices: members,
            centroid,
        });
    }
    Ok(ClusteringResult { labels, groups })
}
