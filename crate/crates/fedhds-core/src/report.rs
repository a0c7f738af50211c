//! Report emission: run history files, clustering-metric tables and
//! plot-ready embedding exports.
//!
//! All numeric formatting uses Rust's shortest-roundtrip float printing,
//! so re-running a seeded config reproduces every output byte.

use std::io::Write;
use std::path::Path;

use crate::cluster;
use crate::error::{Error, Result};
use crate::fedsim::{RoundRecord, RunHistory, Simulator};
use crate::metrics;

/// Writes `run.jsonl` (one record per round) and `summary.json`.
pub fn write_history(history: &RunHistory, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut jsonl = Vec::new();
    for record in &history.records {
        serde_json::to_writer(&mut jsonl, record)?;
        jsonl.push(b'\n');
    }
    std::fs::write(out_dir.join("run.jsonl"), jsonl)?;
    let mut summary = serde_json::to_vec_pretty(&history.summary)?;
    summary.push(b'\n');
    std::fs::write(out_dir.join("summary.json"), summary)?;
    Ok(())
}

/// Reads `run.jsonl` back into round records.
pub fn read_history_records(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Per-client, per-feature-source clustering quality rows for
/// `metrics.csv`.
///
/// Each client's samples are clustered with k-means (k = class count) on
/// every single layer's features and on the fused embedding, mirroring a
/// per-layer feature-quality comparison. Metric failures (for example a
/// degenerate within-dispersion) leave an empty cell.
pub fn write_metrics_csv(sim: &mut Simulator, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let file = std::fs::File::create(out_dir.join("metrics.csv"))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(
        out,
        "client_id,feature_source,n_samples,n_clusters,calinski_harabasz,silhouette,f1"
    )?;

    let n_clients = sim.data.clients.len();
    let n_classes = sim.data.n_classes;
    for client in 0..n_clients as u64 {
        let archive = sim.data.clients[client as usize].archive.clone();
        let labels = archive.labels.clone().expect("validated archives are labeled");
        let n = archive.n_samples();
        let k = n_classes.min(n).max(1);

        let mut sources: Vec<(String, crate::linalg::Matrix)> = (0..archive.layer_count)
            .map(|l| (format!("layer_{l}"), archive.layer_matrix(l)))
            .collect();
        let fused = sim.intra_result(client)?.fused.clone();
        sources.push(("fused".to_string(), fused));

        for (name, points) in sources {
            let km = cluster::kmeans(&points, k, 0)?;
            let pred: Vec<i32> = km.labels.iter().map(|&l| l as i32).collect();
            let ch = metrics::calinski_harabasz(&points, &pred)
                .map(|v| v.to_string())
                .unwrap_or_default();
            let sil = metrics::silhouette(&points, &pred)
                .map(|v| v.to_string())
                .unwrap_or_default();
            let f1 = metrics::clustering_f1(&pred, &labels)
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(out, "{client},{name},{n},{k},{ch},{sil},{f1}")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Plot-ready scatter data: `embeddings_{client}.csv` holds the fused
/// 2-D coordinates and `embeddings_lastlayer_{client}.csv` the same
/// samples fused from the last layer alone, each with the sample label
/// and whether the intra-phase coreset kept it.
pub fn write_embeddings(sim: &mut Simulator, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let n_clients = sim.data.clients.len();
    for client in 0..n_clients as u64 {
        let archive = sim.data.clients[client as usize].archive.clone();
        let labels = archive.labels.clone().expect("validated archives are labeled");

        let intra = sim.intra_result(client)?.clone();
        let coreset = crate::selection::coreset_from_all_groups(client, &intra, 0)?;
        let selected: std::collections::BTreeSet<usize> =
            coreset.sample_indices.iter().copied().collect();
        write_embedding_csv(
            &out_dir.join(format!("embeddings_{client}.csv")),
            &intra.fused,
            &labels,
            &selected,
        )?;

        let last = archive.last_layer_matrix();
        let reducer = crate::reduce::ReducerConfig {
            seed: crate::rng::derive_seed(sim.config().master_seed, "report.lastlayer", 0, client),
            ..sim.config().reducer.clone()
        };
        let last_intra =
            crate::selection::client_intra_phase(&last, &reducer, sim.intra_cluster_config())?;
        let last_coreset = crate::selection::coreset_from_all_groups(client, &last_intra, 0)?;
        let last_selected: std::collections::BTreeSet<usize> =
            last_coreset.sample_indices.iter().copied().collect();
        write_embedding_csv(
            &out_dir.join(format!("embeddings_lastlayer_{client}.csv")),
            &last_intra.fused,
            &labels,
            &last_selected,
        )?;
    }
    Ok(())
}

fn write_embedding_csv(
    path: &Path,
    coords: &crate::linalg::Matrix,
    labels: &[u32],
    selected: &std::collections::BTreeSet<usize>,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "x,y,label,selected")?;
    for i in 0..coords.rows() {
        let x = coords.get(i, 0);
        let y = if coords.cols() > 1 { coords.get(i, 1) } else { 0.0 };
        writeln!(
            out,
            "{x},{y},{},{}",
            labels[i],
            u8::from(selected.contains(&i))
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Per-client coreset files plus the JSON-lines message trace of one
/// full-participation selection round.
pub fn write_selection(sim: &mut Simulator, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let all: Vec<u64> = (0..sim.data.clients.len() as u64).collect();
    let pass = sim.selection_pass(0, &all)?;

    let mut trace = Vec::new();
    for upload in &pass.uploads {
        let mut value = serde_json::to_value(upload)?;
        value["type"] = serde_json::Value::String("centroid_upload".into());
        serde_json::to_writer(&mut trace, &value)?;
        trace.push(b'\n');
    }
    for notice in &pass.notices {
        let mut value = serde_json::to_value(notice)?;
        value["type"] = serde_json::Value::String("selection_notice".into());
        serde_json::to_writer(&mut trace, &value)?;
        trace.push(b'\n');
    }
    std::fs::write(out_dir.join("selection_trace.jsonl"), trace)?;

    for (client, coreset) in &pass.coresets {
        let mut bytes = serde_json::to_vec_pretty(coreset)?;
        bytes.push(b'\n');
        std::fs::write(out_dir.join(format!("coreset_{client}.json")), bytes)?;
    }
    Ok(())
}
