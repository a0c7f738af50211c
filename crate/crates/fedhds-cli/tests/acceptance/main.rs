//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured margin. Heavier benchmarks carry their runtime
//! budget as an assertion.

mod oracles;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use fedhds_core::cluster::{hdbscan, HdbscanConfig};
use fedhds_core::fedsim::model::{
    aggregate, local_train, sample_loss, ModelParams, Optimizer, TrainConfig,
};
use fedhds_core::privacy::{calibrate_sigma, transform_centroid, DpConfig};
use fedhds_core::reduce::{bh_gradient, run_tsne, tsne_affinities, TsneParams};
use fedhds_core::rng::DetRng;
use fedhds_core::selection::{
    build_coreset, coreset_from_all_groups, inter_select, intra_select, CentroidUpload,
    SelectionNotice,
};
use fedhds_core::{features, Matrix};

use oracles::Lcg;

fn partition_of(result: &fedhds_core::cluster::ClusteringResult) -> (Vec<Vec<usize>>, Vec<usize>) {
    let groups: Vec<Vec<usize>> = result.groups.iter().map(|g| g.member_indices.clone()).collect();
    let noise: Vec<usize> = result
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == -1)
        .map(|(i, _)| i)
        .collect();
    (groups, noise)
}

// Criterion 1: production HDBSCAN equals the brute-force condensed-tree
// oracle exactly on 200 random instances.
#[test]
fn criterion_1_hdbscan_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = Lcg(0xC0FFEE);
    let sizes = [2usize, 3, 5];
    for case in 0..200 {
        let n = 5 + rng.below(46);
        let mcs = sizes[rng.below(3)];
        // Mixture layout so instances carry real cluster structure.
        let n_centers = 1 + rng.below(4);
        let centers: Vec<(f64, f64)> = (0..n_centers)
            .map(|_| (20.0 * rng.uniform(), 20.0 * rng.uniform()))
            .collect();
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let (cx, cy) = centers[rng.below(n_centers)];
                vec![cx + rng.gaussian(), cy + rng.gaussian()]
            })
            .collect();

        let config = HdbscanConfig::new(mcs);
        let production = hdbscan(&Matrix::from_rows(&points).unwrap(), &config).unwrap();
        let (prod_groups, prod_noise) = partition_of(&production);
        let oracle = oracles::oracle_hdbscan(&points, mcs, config.effective_min_samples());
        assert_eq!(
            prod_groups, oracle.groups,
            "case {case}: groups diverge (n={n}, mcs={mcs})"
        );
        assert_eq!(
            prod_noise, oracle.noise,
            "case {case}: noise diverges (n={n}, mcs={mcs})"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!("criterion 1 (hdbscan oracle equivalence, 200 cases in {elapsed:?}): PASS");
}

// Criterion 2: silhouette and Calinski-Harabasz match direct-formula
// references within 1e-9; the two-pair fixture hits its derived values.
#[test]
fn criterion_2_metric_references() {
    let mut rng = Lcg(0xBEEF);
    let mut max_sil_err = 0.0f64;
    let mut max_ch_err = 0.0f64;
    for _ in 0..100 {
        let n = 20 + rng.below(181);
        let k = 2 + rng.below(4);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![10.0 * rng.uniform(), 10.0 * rng.uniform(), 10.0 * rng.uniform()])
            .collect();
        // Random labels with every cluster occupied.
        let mut labels: Vec<i32> = (0..n).map(|i| (i % k) as i32).collect();
        for i in 0..n {
            let j = rng.below(n);
            labels.swap(i, j);
        }
        let m = Matrix::from_rows(&points).unwrap();
        let sil = fedhds_core::metrics::silhouette(&m, &labels).unwrap();
        let sil_ref = oracles::reference_silhouette(&points, &labels);
        max_sil_err = max_sil_err.max((sil - sil_ref).abs());

        let ch = fedhds_core::metrics::calinski_harabasz(&m, &labels).unwrap();
        let ch_ref = oracles::reference_calinski_harabasz(&points, &labels);
        max_ch_err = max_ch_err.max((ch - ch_ref).abs() / ch_ref.abs().max(1.0));
    }
    assert!(max_sil_err < 1e-9, "silhouette error {max_sil_err}");
    assert!(max_ch_err < 1e-9, "calinski-harabasz error {max_ch_err}");

    let fixture = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![0.0, 1.0],
        vec![10.0, 0.0],
        vec![10.0, 1.0],
    ])
    .unwrap();
    let labels = vec![0, 0, 1, 1];
    let ch = fedhds_core::metrics::calinski_harabasz(&fixture, &labels).unwrap();
    let sil = fedhds_core::metrics::silhouette(&fixture, &labels).unwrap();
    assert!((ch - 200.0).abs() < 1e-9, "two-pair CH {ch}");
    assert!((sil - 0.9002).abs() < 1e-3, "two-pair silhouette {sil}");
    println!(
        "criterion 2 (metric references: sil err {max_sil_err:.2e}, CH rel err {max_ch_err:.2e}): PASS"
    );
}

fn three_blob_fixture() -> Matrix {
    let mut rng = Lcg(0x3B10B5);
    let mut rows = Vec::new();
    for (cx, cy, cz) in [(0.0, 0.0, 0.0), (40.0, 0.0, 10.0), (0.0, 40.0, -10.0)] {
        for _ in 0..30 {
            rows.push(vec![
                cx + rng.gaussian(),
                cy + rng.gaussian(),
                cz + rng.gaussian(),
            ]);
        }
    }
    Matrix::from_rows(&rows).unwrap()
}

// Criterion 3: t-SNE correctness on gradient exactness, per-row
// perplexity, trustworthiness and net KL descent.
#[test]
fn criterion_3_tsne_correctness() {
    // (a) theta = 0 Barnes-Hut gradient equals the exact gradient, n = 50.
    let mut rng = Lcg(0x7E57);
    let input: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![8.0 * rng.uniform(), 8.0 * rng.uniform(), 8.0 * rng.uniform()])
        .collect();
    let input = Matrix::from_rows(&input).unwrap();
    let affinities = tsne_affinities(&input, 10.0).unwrap();
    let embedding: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0])
        .collect();
    let embedding = Matrix::from_rows(&embedding).unwrap();
    let bh = bh_gradient(&embedding, &affinities.joint, 0.0).unwrap();
    let exact = oracles::reference_tsne_gradient(&embedding, &affinities.joint);
    let mut max_grad_err = 0.0f64;
    for i in 0..50 {
        for c in 0..2 {
            max_grad_err = max_grad_err.max((bh.get(i, c) - exact[i][c]).abs());
        }
    }
    assert!(max_grad_err < 1e-10, "gradient error {max_grad_err}");

    // (b) per-row conditional perplexity hits the target within 1e-3.
    let mut max_perp_err = 0.0f64;
    for i in 0..50 {
        let mut entropy = 0.0;
        for j in 0..50 {
            let p = affinities.conditional.get(i, j);
            if p > 0.0 {
                entropy -= p * p.ln();
            }
        }
        max_perp_err = max_perp_err.max((entropy.exp() - 10.0).abs());
    }
    assert!(max_perp_err < 1e-3, "perplexity error {max_perp_err}");

    // (c) trustworthiness at 5 neighbors on the three-blob fixture.
    let blobs = three_blob_fixture();
    let params = TsneParams {
        perplexity: 10.0,
        iterations: 500,
        ..TsneParams::default()
    };
    let result = run_tsne(&blobs, 2, &params).unwrap();
    let trust = oracles::trustworthiness(&blobs, &result.embedding, 5);
    assert!(trust >= 0.95, "trustworthiness {trust}");

    // (d) net KL descent after exaggeration.
    assert!(
        result.kl_final <= result.kl_post_exaggeration + 1e-12,
        "KL rose: {} -> {}",
        result.kl_post_exaggeration,
        result.kl_final
    );
    println!(
        "criterion 3 (t-SNE: grad err {max_grad_err:.2e}, perp err {max_perp_err:.2e}, trust {trust:.4}, KL {:.4} -> {:.4}): PASS",
        result.kl_post_exaggeration, result.kl_final
    );
}

// Criterion 4: DP calibration value, monotonicity on a 10x10 grid, and
// empirical noise variance within 2% over 1e5 draws.
#[test]
fn criterion_4_dp_calibration() {
    let sigma = calibrate_sigma(0.5, 1e-5).unwrap();
    assert!((sigma - 19.3792).abs() < 1e-3, "sigma {sigma}");

    let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 11.0).collect();
    for (i, &eps) in grid.iter().enumerate() {
        for (j, &delta) in grid.iter().enumerate() {
            let s = calibrate_sigma(eps, delta).unwrap();
            if i + 1 < grid.len() {
                assert!(
                    calibrate_sigma(grid[i + 1], delta).unwrap() <= s,
                    "monotone in epsilon at ({i},{j})"
                );
            }
            if j + 1 < grid.len() {
                assert!(
                    calibrate_sigma(eps, grid[j + 1]).unwrap() <= s,
                    "monotone in delta at ({i},{j})"
                );
            }
        }
    }

    let config = DpConfig {
        enabled: true,
        sigma: Some(2.0),
        ..DpConfig::default()
    };
    let mut rng = DetRng::new(0xD0E5);
    let base: f64 = 0.4f64.tanh();
    let n = 100_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let out = transform_centroid(&[0.4], &config, &mut rng).unwrap();
        let z = out.values[0] - base;
        sum += z;
        sq += z * z;
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    let rel = (var - 4.0).abs() / 4.0;
    assert!(rel < 0.02, "variance {var} rel err {rel}");
    println!("criterion 4 (DP calibration: sigma {sigma:.4}, variance rel err {rel:.4}): PASS");
}

// Criterion 5: protocol invariants over 500 randomized selection rounds.
#[test]
fn criterion_5_protocol_invariants() {
    let mut rng = Lcg(0x5E1EC7);
    let inter_config = HdbscanConfig::new(2);
    for round in 0..500u64 {
        let n_clients = 2 + rng.below(6);
        let mut uploads = Vec::new();
        let mut per_client: Vec<(Matrix, fedhds_core::cluster::ClusteringResult, Vec<Vec<f64>>)> =
            Vec::new();
        let dp = DpConfig {
            enabled: round % 3 == 0,
            sigma: Some(0.05),
            ..DpConfig::default()
        };
        for client in 0..n_clients {
            let n = 1 + rng.below(40);
            let n_centers = 1 + rng.below(4);
            let centers: Vec<(f64, f64)> = (0..n_centers)
                .map(|_| (6.0 * rng.uniform() - 3.0, 6.0 * rng.uniform() - 3.0))
                .collect();
            let fused: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let (cx, cy) = centers[rng.below(n_centers)];
                    vec![cx + 0.2 * rng.gaussian(), cy + 0.2 * rng.gaussian()]
                })
                .collect();
            let fused = Matrix::from_rows(&fused).unwrap();
            let (clustering, centroids) =
                intra_select(&fused, &HdbscanConfig::new(2 + rng.below(3))).unwrap();
            let mut noise_rng = DetRng::new(round * 100 + client as u64);
            for (group_id, centroid) in centroids.iter().enumerate() {
                let transformed = transform_centroid(centroid, &dp, &mut noise_rng).unwrap();
                uploads.push(CentroidUpload {
                    round,
                    client_id: client as u64,
                    group_id: group_id as u32,
                    values: transformed.values,
                });
            }
            per_client.push((fused, clustering, centroids));
        }

        let notices = inter_select(&uploads, &inter_config).unwrap();

        // Every notice references only groups that client uploaded, and
        // every selected pair appears exactly once.
        let uploaded: BTreeSet<(u64, u32)> =
            uploads.iter().map(|u| (u.client_id, u.group_id)).collect();
        let mut seen_pairs = BTreeSet::new();
        for notice in &notices {
            for &g in &notice.selected_group_ids {
                assert!(uploaded.contains(&(notice.client_id, g)), "round {round}: ghost group");
                assert!(seen_pairs.insert((notice.client_id, g)), "round {round}: duplicate pair");
            }
        }

        // Selection count equals second-level clusters plus noise.
        let mut ordered = uploads.clone();
        ordered.sort_by_key(|u| (u.client_id, u.group_id));
        let upload_matrix =
            Matrix::from_rows(&ordered.iter().map(|u| u.values.clone()).collect::<Vec<_>>())
                .unwrap();
        let inter_clustering = hdbscan(&upload_matrix, &inter_config).unwrap();
        let expected = inter_clustering.groups.len() + inter_clustering.n_noise();
        assert_eq!(seen_pairs.len(), expected, "round {round}: selection count");

        // Coresets are inside the dataset and never bigger than the
        // intra-only coresets built from identical intra outputs.
        for notice in &notices {
            let (fused, clustering, centroids) = &per_client[notice.client_id as usize];
            let coreset = build_coreset(fused, clustering, centroids, notice).unwrap();
            assert!(coreset.sample_indices.iter().all(|&i| i < fused.rows()));
            let intra_only = coreset_from_all_groups(
                notice.client_id,
                &fedhds_core::selection::IntraSelection {
                    fused: fused.clone(),
                    clustering: clustering.clone(),
                    raw_centroids: centroids.clone(),
                },
                round,
            )
            .unwrap();
            assert!(
                coreset.sample_indices.len() <= intra_only.sample_indices.len(),
                "round {round}: hierarchical coreset exceeded intra coreset"
            );
            let intra_set: BTreeSet<usize> = intra_only.sample_indices.iter().copied().collect();
            assert!(coreset.sample_indices.iter().all(|i| intra_set.contains(i)));
        }

        // Unknown group ids are rejected.
        let bogus = SelectionNotice {
            round,
            client_id: 0,
            selected_group_ids: vec![per_client[0].2.len() as u32 + 7],
        };
        let (fused, clustering, centroids) = &per_client[0];
        assert!(build_coreset(fused, clustering, centroids, &bogus).is_err());
    }
    println!("criterion 5 (protocol invariants, 500 randomized rounds): PASS");
}

/// Builds the 50-mode benchmark client archives plus a held-out archive:
/// each client draws `samples_per_client` points from 5 client-specific
/// modes. Returns (client archives, heldout archive).
fn latent_mode_benchmark(
    n_clients: usize,
    samples_per_client: usize,
    seed: u64,
) -> (Vec<features::FeatureArchive>, features::FeatureArchive) {
    let n_modes = 50usize;
    let layer_count = 2usize;
    let layer_dim = 4usize;
    let dim = layer_count * layer_dim;
    let separation = 50.0;
    let stddev = 0.1;
    let mut rng = Lcg(seed);

    // Mode centers on a separated lattice.
    let base = (n_modes as f64).powf(1.0 / dim as f64).ceil().max(2.0) as usize;
    let center = |m: usize| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        let mut rest = m;
        for coord in c.iter_mut() {
            *coord = (rest % base) as f64 * separation;
            rest /= base;
        }
        c
    };

    let per_mode = samples_per_client / 5;
    let mut clients = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        // Five distinct modes for this client.
        let mut modes = BTreeSet::new();
        while modes.len() < 5 {
            modes.insert(rng.below(n_modes));
        }
        let mut rows = Vec::with_capacity(samples_per_client);
        let mut labels = Vec::with_capacity(samples_per_client);
        for &m in &modes {
            let c = center(m);
            for _ in 0..per_mode {
                rows.push(c.iter().map(|&v| (v + stddev * rng.gaussian()) as f32).collect());
                labels.push(m as u32);
            }
        }
        clients.push(features::FeatureArchive {
            layer_count,
            layer_dim,
            features: rows,
            labels: Some(labels),
            perplexity: None,
            source_tag: "synthetic".into(),
        });
    }

    let mut held_rows = Vec::new();
    let mut held_labels = Vec::new();
    for m in 0..n_modes {
        let c = center(m);
        for _ in 0..4 {
            held_rows.push(c.iter().map(|&v| (v + stddev * rng.gaussian()) as f32).collect());
            held_labels.push(m as u32);
        }
    }
    let heldout = features::FeatureArchive {
        layer_count,
        layer_dim,
        features: held_rows,
        labels: Some(held_labels),
        perplexity: None,
        source_tag: "synthetic".into(),
    };
    (clients, heldout)
}

fn write_archives(
    dir: &Path,
    clients: &[features::FeatureArchive],
    heldout: &features::FeatureArchive,
) -> (Vec<std::path::PathBuf>, std::path::PathBuf) {
    let mut paths = Vec::new();
    for (i, archive) in clients.iter().enumerate() {
        let path = dir.join(format!("client_{i}.fca"));
        features::write_archive(archive, &path).unwrap();
        paths.push(path);
    }
    let heldout_path = dir.join("heldout.fca");
    features::write_archive(heldout, &heldout_path).unwrap();
    (paths, heldout_path)
}

fn benchmark_config(
    client_paths: &[std::path::PathBuf],
    heldout: &Path,
    selector: serde_json::Value,
    rounds: u64,
    active_ratio: f64,
    intra_mcs: usize,
    seed: u64,
) -> serde_json::Value {
    serde_json::json!({
        "schema_version": 1,
        "master_seed": seed,
        "rounds": rounds,
        "active_ratio": active_ratio,
        "selector": selector,
        "reducer": {"method": "tsne", "output_dim": 2, "tsne": {"iterations": 300}},
        "intra_cluster": {"min_cluster_size": intra_mcs},
        "inter_cluster": {"min_cluster_size": 2},
        "train": {"learning_rate": 0.05, "optimizer": "sgd", "epochs_per_round": 3},
        "model_features": "raw",
        "data": {"archives": {
            "clients": client_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "heldout": heldout.display().to_string(),
        }},
    })
}

// Criterion 6: on the 200-client latent-mode benchmark, at least 90% of
// clients produce 5 +/- 1 intra groups, and the cumulative data ratio of
// a 5%-participation run stays at or below 0.05. Budget: 5 minutes.
#[test]
fn criterion_6_selection_ratio_benchmark() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (clients, heldout) = latent_mode_benchmark(200, 500, 0x6EA7);
    let (paths, heldout_path) = write_archives(tmp.path(), &clients, &heldout);

    let config_value = benchmark_config(
        &paths,
        &heldout_path,
        serde_json::json!({"kind": "fedhds"}),
        5,
        0.05,
        5,
        60,
    );
    let config = fedhds_core::config::RunConfig::from_json(&config_value.to_string()).unwrap();
    let mut sim = fedhds_core::fedsim::Simulator::new(config).unwrap();

    // Intra group counts across every client.
    let mut within_band = 0usize;
    for client in 0..200u64 {
        let groups = sim.intra_result(client).unwrap().clustering.groups.len();
        if (4..=6).contains(&groups) {
            within_band += 1;
        }
    }
    let share = within_band as f64 / 200.0;
    assert!(share >= 0.9, "only {share:.2} of clients in the 5 +/- 1 band");

    // Short run at 5% participation: cumulative ratio <= 0.05.
    let history = sim.run().unwrap();
    let cumulative = history.summary.cumulative_data_ratio;
    assert!(cumulative <= 0.05, "cumulative data ratio {cumulative}");
    for record in &history.records {
        assert!(record.data_ratio <= 0.05, "round ratio {}", record.data_ratio);
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "criterion 6 (ratio benchmark: group-count share {share:.3}, cumulative ratio {cumulative:.5}, {elapsed:?}): PASS"
    );
}

/// Duplicate-heavy benchmark: each client holds 10 distinct samples
/// replicated with tiny jitter. Labels follow the underlying distinct
/// sample's mode.
fn duplicate_heavy_benchmark(
    n_clients: usize,
    seed: u64,
) -> (Vec<features::FeatureArchive>, features::FeatureArchive) {
    let n_modes = 10usize;
    let layer_count = 2usize;
    let layer_dim = 3usize;
    let dim = layer_count * layer_dim;
    let separation = 10.0;
    let jitter = 0.01;
    let mut rng = Lcg(seed);

    let base = (n_modes as f64).powf(1.0 / dim as f64).ceil().max(2.0) as usize;
    let center = |m: usize| -> Vec<f64> {
        let mut c = vec![0.0; dim];
        let mut rest = m;
        for coord in c.iter_mut() {
            *coord = (rest % base) as f64 * separation;
            rest /= base;
        }
        c
    };

    let mut clients = Vec::with_capacity(n_clients);
    for _ in 0..n_clients {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for m in 0..n_modes {
            // One distinct sample per mode, replicated 50x with jitter.
            let distinct: Vec<f64> = center(m)
                .iter()
                .map(|&v| v + 0.5 * rng.gaussian())
                .collect();
            for _ in 0..50 {
                rows.push(distinct.iter().map(|&v| (v + jitter * rng.gaussian()) as f32).collect());
                labels.push(m as u32);
            }
        }
        clients.push(features::FeatureArchive {
            layer_count,
            layer_dim,
            features: rows,
            labels: Some(labels),
            perplexity: None,
            source_tag: "synthetic".into(),
        });
    }

    let mut held_rows = Vec::new();
    let mut held_labels = Vec::new();
    for m in 0..n_modes {
        let c = center(m);
        for _ in 0..10 {
            held_rows.push(c.iter().map(|&v| (v + 0.5 * rng.gaussian()) as f32).collect());
            held_labels.push(m as u32);
        }
    }
    let heldout = features::FeatureArchive {
        layer_count,
        layer_dim,
        features: held_rows,
        labels: Some(held_labels),
        perplexity: None,
        source_tag: "synthetic".into(),
    };
    (clients, heldout)
}

// Criterion 7: on the duplicate-heavy benchmark the hierarchical
// selector reaches the full-data accuracy within 2 points while
// consuming at most 10% of the samples, and Random at the same
// automatically obtained ratio does no better than 2 points above it.
// Averaged over 5 seeds. Budget: 10 minutes.
#[test]
fn criterion_7_redundancy_benchmark() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (clients, heldout) = duplicate_heavy_benchmark(6, 0xD077);
    let (paths, heldout_path) = write_archives(tmp.path(), &clients, &heldout);

    let rounds = 40u64;
    let mut fedhds_acc = Vec::new();
    let mut full_acc = Vec::new();
    let mut random_acc = Vec::new();
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let run = |selector: serde_json::Value, seed: u64| {
            let value = benchmark_config(&paths, &heldout_path, selector, rounds, 1.0, 5, seed);
            let config = fedhds_core::config::RunConfig::from_json(&value.to_string()).unwrap();
            fedhds_core::fedsim::run(&config).unwrap()
        };
        let hds = run(serde_json::json!({"kind": "fedhds"}), seed);
        let ratio = hds.summary.cumulative_data_ratio;
        ratios.push(ratio);
        fedhds_acc.push(hds.summary.final_accuracy);
        let full = run(serde_json::json!({"kind": "random", "ratio": 1.0}), seed);
        full_acc.push(full.summary.final_accuracy);
        let rnd = run(serde_json::json!({"kind": "random", "ratio": ratio}), seed);
        random_acc.push(rnd.summary.final_accuracy);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (hds, full, rnd) = (mean(&fedhds_acc), mean(&full_acc), mean(&random_acc));
    let ratio = mean(&ratios);
    assert!(ratio <= 0.10, "consumed ratio {ratio}");
    assert!(
        hds >= full - 0.02,
        "hierarchical accuracy {hds} vs full-data {full}"
    );
    assert!(
        rnd <= hds + 0.02,
        "random at matched ratio {rnd} vs hierarchical {hds}"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "criterion 7 (redundancy: acc {hds:.4} vs full {full:.4}, random {rnd:.4}, ratio {ratio:.4}, {elapsed:?}): PASS"
    );
}

// Criterion 8: aggregation matches the direct weighted mean to 1e-12 and
// the single-step training gradient matches central finite differences.
#[test]
fn criterion_8_training_and_aggregation() {
    let mut rng = Lcg(0xA66);
    // Aggregation vs direct computation.
    let mut max_agg_err = 0.0f64;
    for _ in 0..50 {
        let n_updates = 1 + rng.below(6);
        let len = 1 + rng.below(20);
        let updates: Vec<(ModelParams, usize)> = (0..n_updates)
            .map(|_| {
                let values: Vec<f64> = (0..len).map(|_| 4.0 * rng.uniform() - 2.0).collect();
                (ModelParams { values }, 1 + rng.below(30))
            })
            .collect();
        let out = aggregate(&updates).unwrap();
        let total: f64 = updates.iter().map(|(_, s)| *s as f64).sum();
        for i in 0..len {
            let direct: f64 = updates
                .iter()
                .map(|(p, s)| *s as f64 / total * p.values[i])
                .sum();
            max_agg_err = max_agg_err.max((out.values[i] - direct).abs());
        }
    }
    assert!(max_agg_err < 1e-12, "aggregation error {max_agg_err}");

    // Single SGD step vs central differences on the loss.
    let n_classes = 4;
    let dim = 5;
    let x: Vec<f64> = (0..dim).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    let label = 2u32;
    let mut params = ModelParams::zeros(n_classes, dim);
    for v in params.values.iter_mut() {
        *v = rng.uniform() - 0.5;
    }
    let lr = 1e-3;
    let config = TrainConfig {
        learning_rate: lr,
        optimizer: Optimizer::Sgd,
        epochs_per_round: 1,
    };
    let features = Matrix::from_rows(&[x.clone()]).unwrap();
    let stepped = local_train(&params, &features, &[label], n_classes, &config).unwrap();
    let h = 1e-6;
    let mut max_rel = 0.0f64;
    for i in 0..params.len() {
        let grad_impl = (params.values[i] - stepped.values[i]) / lr;
        let mut plus = params.clone();
        plus.values[i] += h;
        let mut minus = params.clone();
        minus.values[i] -= h;
        let fd = (sample_loss(&plus, n_classes, &x, label) - sample_loss(&minus, n_classes, &x, label))
            / (2.0 * h);
        let rel = (grad_impl - fd).abs() / fd.abs().max(1e-6);
        max_rel = max_rel.max(rel);
    }
    assert!(max_rel < 1e-5, "gradient rel err {max_rel}");
    println!(
        "criterion 8 (aggregate err {max_agg_err:.2e}, gradient rel err {max_rel:.2e}): PASS"
    );
}

fn write_cli_config(dir: &Path, value: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path
}

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_fedhds"))
        .args(args)
        .output()
        .expect("spawn fedhds")
}

// Criterion 9: two cmd_run executions with the same config and master
// seed produce byte-identical run.jsonl and summary.json.
#[test]
fn criterion_9_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let (clients, heldout) = duplicate_heavy_benchmark(3, 0x9E9E);
    let (paths, heldout_path) = write_archives(tmp.path(), &clients, &heldout);
    let config_value = benchmark_config(
        &paths,
        &heldout_path,
        serde_json::json!({"kind": "fedhds"}),
        3,
        1.0,
        5,
        1234,
    );
    let config_path = write_cli_config(tmp.path(), &config_value);

    let out_a = tmp.path().join("out_a");
    let out_b = tmp.path().join("out_b");
    for out in [&out_a, &out_b] {
        let output = run_cli(&[
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    }
    let run_a = std::fs::read(out_a.join("run.jsonl")).unwrap();
    let run_b = std::fs::read(out_b.join("run.jsonl")).unwrap();
    assert_eq!(run_a, run_b, "run.jsonl differs");
    let sum_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let sum_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(sum_a, sum_b, "summary.json differs");
    assert!(!run_a.is_empty() && !sum_a.is_empty());
    println!("criterion 9 (byte-identical reruns): PASS");
}

// Criterion 10: ablation ordering through the CLI on the duplicate-heavy
// benchmark: per round, data_ratio(fedhds) <= data_ratio(fedhds_intra)
// <= data_ratio(feddb with the same reducer).
#[test]
fn criterion_10_ablation_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let (clients, heldout) = duplicate_heavy_benchmark(4, 0xAB1A);
    let (paths, heldout_path) = write_archives(tmp.path(), &clients, &heldout);

    let mut ratios: Vec<Vec<f64>> = Vec::new();
    for kind in ["fedhds", "fedhds_intra", "feddb"] {
        let config_value = benchmark_config(
            &paths,
            &heldout_path,
            serde_json::json!({"kind": kind}),
            3,
            1.0,
            5,
            777,
        );
        let config_path = tmp.path().join(format!("config_{kind}.json"));
        std::fs::write(&config_path, serde_json::to_vec_pretty(&config_value).unwrap()).unwrap();
        let out = tmp.path().join(format!("out_{kind}"));
        let output = run_cli(&[
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
        let text = std::fs::read_to_string(out.join("run.jsonl")).unwrap();
        let per_round: Vec<f64> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["data_ratio"].as_f64().unwrap())
            .collect();
        ratios.push(per_round);
    }
    for round in 0..ratios[0].len() {
        assert!(
            ratios[0][round] <= ratios[1][round] + 1e-12,
            "round {round}: fedhds {} > intra {}",
            ratios[0][round],
            ratios[1][round]
        );
        assert!(
            ratios[1][round] <= ratios[2][round] + 1e-12,
            "round {round}: intra {} > feddb {}",
            ratios[1][round],
            ratios[2][round]
        );
    }
    println!(
        "criterion 10 (ablation ordering: fedhds {:?} <= intra {:?} <= feddb {:?}): PASS",
        ratios[0], ratios[1], ratios[2]
    );
}
