//! Non-IID client partitioning: Dirichlet label skew and one-task-per-
//! client meta partitioning.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    Dirichlet,
    Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub scheme: PartitionScheme,
    pub n_clients: usize,
    /// Dirichlet concentration; ignored by the meta scheme.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.5
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be at least 1".into()));
        }
        if self.scheme == PartitionScheme::Dirichlet && !(self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "dirichlet alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-sample client assignment: a partition of the sample indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientAssignment {
    pub client_of_sample: Vec<usize>,
    pub n_clients: usize,
}

impl ClientAssignment {
    /// Sample indices per client, ascending within each client.
    pub fn client_samples(&self) -> Vec<Vec<usize>> {
        let mut per_client = vec![Vec::new(); self.n_clients];
        for (sample, &client) in self.client_of_sample.iter().enumerate() {
            per_client[client].push(sample);
        }
        per_client
    }

    /// Writes the `sample_index,client_id` CSV export.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "sample_index,client_id")?;
        for (sample, &client) in self.client_of_sample.iter().enumerate() {
            writeln!(out, "{sample},{client}")?;
        }
        Ok(())
    }
}

/// Label-skew partition: per category, client proportions are drawn from
/// Dirichlet(alpha, ..., alpha) and the category's samples are assigned
/// by categorical draws. Empty clients are then topped up with one
/// sample moved from the largest client.
pub fn dirichlet_partition(labels: &[u32], spec: &PartitionSpec) -> Result<ClientAssignment> {
    spec.validate()?;
    if spec.scheme != PartitionScheme::Dirichlet {
        return Err(Error::Config("spec.scheme must be dirichlet".into()));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("dirichlet_partition with no samples"));
    }
    if spec.n_clients > labels.len() {
        return Err(Error::Config(format!(
            "{} clients but only {} samples",
            spec.n_clients,
            labels.len()
        )));
    }

    let mut rng = DetRng::new(spec.seed);
    let mut by_category: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_category.entry(l).or_default().push(i);
    }

    let mut assignment = vec![0usize; labels.len()];
    for samples in by_category.values() {
        let proportions = dirichlet_draw(&mut rng, spec.alpha, spec.n_clients);
        for &sample in samples {
            let mut u = rng.next_f64();
            let mut client = spec.n_clients - 1;
            for (c, &p) in proportions.iter().enumerate() {
                u -= p;
                if u < 0.0 {
                    client = c;
                    break;
                }
            }
            assignment[sample] = client;
        }
    }

    rebalance_empty_clients(&mut assignment, spec.n_clients);
    Ok(ClientAssignment {
        client_of_sample: assignment,
        n_clients: spec.n_clients,
    })
}

fn dirichlet_draw(rng: &mut DetRng, alpha: f64, k: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..k).map(|_| rng.next_gamma(alpha)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        for d in &mut draws {
            *d /= total;
        }
    } else {
        for d in &mut draws {
            *d = 1.0 / k as f64;
        }
    }
    draws
}

/// Moves one sample at a time from the largest client (ties to the lowest
/// id, highest sample index moved first) into each empty client.
fn rebalance_empty_clients(assignment: &mut [usize], n_clients: usize) {
    loop {
        let mut counts = vec![0usize; n_clients];
        for &c in assignment.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap();
        let moved = assignment
            .iter()
            .rposition(|&c| c == largest)
            .expect("largest client has samples");
        assignment[moved] = empty;
    }
}

/// Task-per-client partition: all samples of task t go to client t, tasks
/// ordered by first appearance. `n_clients` must equal the task count.
pub fn meta_partition(task_ids: &[u32], spec: &PartitionSpec) -> Result<ClientAssignment> {
    spec.validate()?;
    if spec.scheme != PartitionScheme::Meta {
        return Err(Error::Config("spec.scheme must be meta".into()));
    }
    if task_ids.is_empty() {
        return Err(Error::EmptyInput("meta_partition with no samples"));
    }
    let mut client_of_task: BTreeMap<u32, usize> = BTreeMap::new();
    let mut order = Vec::new();
    for &t in task_ids {
        if let std::collections::btree_map::Entry::Vacant(e) = client_of_task.entry(t) {
            e.insert(order.len());
            order.push(t);
        }
    }
    if order.len() != spec.n_clients {
        return Err(Error::Config(format!(
            "meta partition needs n_clients == distinct tasks: {} tasks, {} clients",
            order.len(),
            spec.n_clients
        )));
    }
    Ok(ClientAssignment {
        client_of_sample: task_ids.iter().map(|t| client_of_task[t]).collect(),
        n_clients: spec.n_clients,
    })
}
