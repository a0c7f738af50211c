//! Independent reference implementations used only by the acceptance
//! suite. Everything here is written against the definitions directly
//! (exhaustive edge sorts, recursive tree walks, direct formulas) so the
//! production code is checked by a separate route.

use fedhds_core::Matrix;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------
// Brute-force HDBSCAN: explicit mutual-reachability matrix, Kruskal MST
// over every pair, recursive condensed tree and recursive excess-of-mass
// selection. Mirrors the production conventions (min_samples counts the
// point itself; parent wins ties; infinite-lambda gaps count 0; root
// rescue keeps the max-lambda component when nothing else survives).
// ---------------------------------------------------------------------

pub struct OraclePartition {
    /// Sorted member sets, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

enum Tree {
    Leaf(usize),
    Merge {
        distance: f64,
        left: Box<Tree>,
        right: Box<Tree>,
        size: usize,
    },
}

impl Tree {
    fn size(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Merge { size, .. } => *size,
        }
    }

    fn points(&self, out: &mut Vec<usize>) {
        match self {
            Tree::Leaf(p) => out.push(*p),
            Tree::Merge { left, right, .. } => {
                left.points(out);
                right.points(out);
            }
        }
    }
}

/// A condensed cluster with its own point fall-outs and child clusters.
struct OracleCluster {
    birth_lambda: f64,
    point_rows: Vec<(usize, f64)>,
    children: Vec<OracleCluster>,
}

pub fn oracle_hdbscan(points: &[Vec<f64>], min_cluster_size: usize, min_samples: usize) -> OraclePartition {
    let n = points.len();
    assert!(n >= 1);
    if n < min_cluster_size {
        return OraclePartition {
            groups: vec![(0..n).collect()],
            noise: vec![],
        };
    }

    // Explicit distance and mutual-reachability matrices.
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = dist(&points[i], &points[j]);
        }
    }
    let k = min_samples.min(n);
    let core: Vec<f64> = (0..n)
        .map(|i| {
            let mut row = d[i].clone();
            row.sort_by(|a, b| a.partial_cmp(b).unwrap());
            row[k - 1]
        })
        .collect();
    let mut mrd = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                mrd[i][j] = core[i].max(core[j]).max(d[i][j]);
            }
        }
    }

    // Kruskal over the exhaustive sorted edge list.
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((mrd[i][j], i, j));
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut owner: Vec<usize> = (0..n).collect();
    let mut components: Vec<Option<Tree>> = (0..n).map(|p| Some(Tree::Leaf(p))).collect();
    let mut accepted = 0usize;
    for (w, a, b) in edges {
        let (ra, rb) = (find_owner(&owner, a), find_owner(&owner, b));
        if ra == rb {
            continue;
        }
        let left = components[ra].take().unwrap();
        let right = components[rb].take().unwrap();
        let merged = Tree::Merge {
            distance: w,
            size: left.size() + right.size(),
            left: Box::new(left),
            right: Box::new(right),
        };
        components[ra] = Some(merged);
        owner[rb] = ra;
        accepted += 1;
        if accepted == n - 1 {
            break;
        }
    }
    let root_tree = components
        .into_iter()
        .flatten()
        .next()
        .expect("spanning tree root");

    // Recursive condensation into the root cluster.
    let mut root = OracleCluster {
        birth_lambda: 0.0,
        point_rows: Vec::new(),
        children: Vec::new(),
    };
    condense_into(&root_tree, &mut root, min_cluster_size);

    // Recursive excess-of-mass.
    let mut selected: Vec<&OracleCluster> = Vec::new();
    for child in &root.children {
        select_eom(child, &mut selected);
    }

    let mut groups: Vec<Vec<usize>> = if selected.is_empty() {
        // Root rescue: members of the last surviving component.
        let threshold = root
            .point_rows
            .iter()
            .map(|&(_, l)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut members: Vec<usize> = root
            .point_rows
            .iter()
            .filter(|&&(_, l)| l >= threshold)
            .map(|&(p, _)| p)
            .collect();
        members.sort_unstable();
        vec![members]
    } else {
        selected
            .iter()
            .map(|c| {
                let mut members = Vec::new();
                collect_points(c, &mut members);
                members.sort_unstable();
                members
            })
            .collect()
    };
    groups.sort_by_key(|g| g[0]);

    let mut in_group = vec![false; n];
    for g in &groups {
        for &p in g {
            in_group[p] = true;
        }
    }
    OraclePartition {
        noise: (0..n).filter(|&p| !in_group[p]).collect(),
        groups,
    }
}

fn find_owner(owner: &[usize], mut x: usize) -> usize {
    while owner[x] != x {
        x = owner[x];
    }
    x
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

/// Walks a merge subtree that currently belongs to `cluster`, recording
/// fall-outs and spawning child clusters at big-big splits.
fn condense_into(tree: &Tree, cluster: &mut OracleCluster, mcs: usize) {
    match tree {
        Tree::Leaf(p) => {
            // A bare leaf only reaches here as the whole dataset (n = 1),
            // which the caller already handled via the small-n fallback.
            cluster.point_rows.push((*p, f64::INFINITY));
        }
        Tree::Merge { distance, left, right, .. } => {
            let lambda = lambda_of(*distance);
            let big_left = left.size() >= mcs;
            let big_right = right.size() >= mcs;
            match (big_left, big_right) {
                (true, true) => {
                    for side in [left, right] {
                        let mut child = OracleCluster {
                            birth_lambda: lambda,
                            point_rows: Vec::new(),
                            children: Vec::new(),
                        };
                        condense_into(side, &mut child, mcs);
                        cluster.children.push(child);
                    }
                }
                (true, false) => {
                    shed(right, lambda, cluster);
                    condense_into(left, cluster, mcs);
                }
                (false, true) => {
                    shed(left, lambda, cluster);
                    condense_into(right, cluster, mcs);
                }
                (false, false) => {
                    shed(left, lambda, cluster);
                    shed(right, lambda, cluster);
                }
            }
        }
    }
}

fn shed(tree: &Tree, lambda: f64, cluster: &mut OracleCluster) {
    let mut points = Vec::new();
    tree.points(&mut points);
    for p in points {
        cluster.point_rows.push((p, lambda));
    }
}

fn stability(cluster: &OracleCluster) -> f64 {
    let gap = |l: f64| {
        if l.is_infinite() && cluster.birth_lambda.is_infinite() {
            0.0
        } else {
            l - cluster.birth_lambda
        }
    };
    let points: f64 = cluster.point_rows.iter().map(|&(_, l)| gap(l)).sum();
    let childs: f64 = cluster
        .children
        .iter()
        .map(|c| gap(c.birth_lambda) * subtree_point_count(c) as f64)
        .sum();
    points + childs
}

fn subtree_point_count(cluster: &OracleCluster) -> usize {
    cluster.point_rows.len()
        + cluster
            .children
            .iter()
            .map(subtree_point_count)
            .sum::<usize>()
}

/// Returns the subtree's excess of mass and pushes the winning clusters.
fn select_eom<'a>(cluster: &'a OracleCluster, selected: &mut Vec<&'a OracleCluster>) -> f64 {
    let own = stability(cluster);
    let mut child_selected = Vec::new();
    let child_sum: f64 = cluster
        .children
        .iter()
        .map(|c| select_eom(c, &mut child_selected))
        .sum();
    if cluster.children.is_empty() || own >= child_sum {
        selected.push(cluster);
        own
    } else {
        selected.extend(child_selected);
        child_sum
    }
}

fn collect_points(cluster: &OracleCluster, out: &mut Vec<usize>) {
    out.extend(cluster.point_rows.iter().map(|&(p, _)| p));
    for child in &cluster.children {
        collect_points(child, out);
    }
}

// ---------------------------------------------------------------------
// Direct-formula clustering metrics.
// ---------------------------------------------------------------------

pub fn reference_silhouette(points: &[Vec<f64>], labels: &[i32]) -> f64 {
    let ids: std::collections::BTreeSet<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        if li < 0 {
            continue;
        }
        let same: Vec<usize> = (0..points.len())
            .filter(|&j| labels[j] == li && j != i)
            .collect();
        count += 1;
        if same.is_empty() {
            continue; // singleton scores 0
        }
        let a = same.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / same.len() as f64;
        let mut b = f64::INFINITY;
        for &other in &ids {
            if other == li {
                continue;
            }
            let members: Vec<usize> = (0..points.len()).filter(|&j| labels[j] == other).collect();
            let mean =
                members.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / members.len() as f64;
            b = b.min(mean);
        }
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / count as f64
}

pub fn reference_calinski_harabasz(points: &[Vec<f64>], labels: &[i32]) -> f64 {
    let ids: std::collections::BTreeSet<i32> = labels.iter().copied().filter(|&l| l >= 0).collect();
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|&c| (0..points.len()).filter(|&j| labels[j] == c).collect())
        .collect();
    let n: usize = members.iter().map(Vec::len).sum();
    let k = members.len();
    let dim = points[0].len();
    let mean_of = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; dim];
        for &i in idx {
            for (mm, v) in m.iter_mut().zip(&points[i]) {
                *mm += v;
            }
        }
        for mm in &mut m {
            *mm /= idx.len() as f64;
        }
        m
    };
    let all: Vec<usize> = members.iter().flatten().copied().collect();
    let overall = mean_of(&all);
    let mut between = 0.0;
    let mut within = 0.0;
    for group in &members {
        let mu = mean_of(group);
        between += group.len() as f64
            * mu.iter().zip(&overall).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        for &i in group {
            within += points[i]
                .iter()
                .zip(&mu)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
    }
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

// ---------------------------------------------------------------------
// Exact t-SNE gradient straight from the KL formula.
// ---------------------------------------------------------------------

pub fn reference_tsne_gradient(embedding: &Matrix, joint: &Matrix) -> Vec<Vec<f64>> {
    let n = embedding.rows();
    let k = embedding.cols();
    let w = |i: usize, j: usize| {
        let mut s = 0.0;
        for c in 0..k {
            let d = embedding.get(i, c) - embedding.get(j, c);
            s += d * d;
        }
        1.0 / (1.0 + s)
    };
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                z += w(i, j);
            }
        }
    }
    let mut grad = vec![vec![0.0; k]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wij = w(i, j);
            let q = wij / z;
            let coeff = 4.0 * (joint.get(i, j) - q) * wij;
            for c in 0..k {
                grad[i][c] += coeff * (embedding.get(i, c) - embedding.get(j, c));
            }
        }
    }
    grad
}

/// Repulsive-force vectors (normalized by Z) computed exactly.
pub fn reference_repulsion(embedding: &Matrix) -> Vec<Vec<f64>> {
    let n = embedding.rows();
    let k = embedding.cols();
    let mut z = 0.0;
    let mut numer = vec![vec![0.0; k]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut s = 0.0;
            for c in 0..k {
                let d = embedding.get(i, c) - embedding.get(j, c);
                s += d * d;
            }
            let w = 1.0 / (1.0 + s);
            z += w;
            for c in 0..k {
                numer[i][c] += w * w * (embedding.get(i, c) - embedding.get(j, c));
            }
        }
    }
    for row in &mut numer {
        for v in row {
            *v /= z;
        }
    }
    numer
}

// ---------------------------------------------------------------------
// Trustworthiness by brute-force neighbor-rank comparison.
// ---------------------------------------------------------------------

pub fn trustworthiness(input: &Matrix, output: &Matrix, k: usize) -> f64 {
    let n = input.rows();
    let rank_lists = |m: &Matrix| -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                order.sort_by(|&a, &b| {
                    let da = dist(m.row(a), m.row(i));
                    let db = dist(m.row(b), m.row(i));
                    da.partial_cmp(&db).unwrap().then(a.cmp(&b))
                });
                order
            })
            .collect()
    };
    let input_order = rank_lists(input);
    let output_order = rank_lists(output);

    let mut penalty = 0.0;
    for i in 0..n {
        let input_rank: std::collections::HashMap<usize, usize> = input_order[i]
            .iter()
            .enumerate()
            .map(|(r, &j)| (j, r + 1))
            .collect();
        let true_neighbors: std::collections::HashSet<usize> =
            input_order[i][..k].iter().copied().collect();
        for &j in &output_order[i][..k] {
            if !true_neighbors.contains(&j) {
                penalty += (input_rank[&j] - k) as f64;
            }
        }
    }
    1.0 - 2.0 / (n as f64 * k as f64 * (2.0 * n as f64 - 3.0 * k as f64 - 1.0)) * penalty
}

// ---------------------------------------------------------------------
// Small deterministic RNG for fixture generation, independent of the
// library's generator.
// ---------------------------------------------------------------------

pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        // Numerical Recipes LCG constants.
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, bound: usize) -> usize {
        (self.next_u64() % bound as u64) as usize
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform().max(1e-12);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
