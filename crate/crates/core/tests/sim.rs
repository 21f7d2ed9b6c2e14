mod common;

use common::{sum, weighted};
use senscap_core::model::Discipline;
use senscap_core::sim::{
    decode_bp, decode_ml, draw_targets, encode, generate_network, observe, run_trials, Decoder, FactorGraph,
    TrialConfig,
};
use senscap_core::types::compute_type;

/// Total variation between the empirical ideal-output law of a large network
/// and the one predicted from the type of the targets.
#[test]
fn output_ensemble_matches_the_type() {
    for (model, c) in [
        (sum(Discipline::Arbitrary, 3, 0.1), 1),
        (sum(Discipline::Contiguous1d, 3, 0.1), 3),
        (weighted(Discipline::Contiguous1d, 0.1), 4),
    ] {
        let k = 50;
        let v = draw_targets(&model, k, 31);
        let net = generate_network(&model, k, 100_000, 32).unwrap();
        let x = encode(&net, &v).unwrap();
        let predicted = model.output_dist(&compute_type(&v, 2, c, true).unwrap()).unwrap();
        let mut seen = vec![0.0; predicted.len()];
        for s in x {
            seen[s] += 1.0 / 100_000.0;
        }
        let tv: f64 = seen.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "{tv}");
    }
}

#[test]
fn arbitrary_connections_are_uniform() {
    let k = 20;
    let net = generate_network(&sum(Discipline::Arbitrary, 4, 0.1), k, 5000, 33).unwrap();
    let mut counts = vec![0.0; k];
    for conn in net.connections() {
        for &p in conn {
            counts[p] += 1.0;
        }
    }
    let expected = 20_000.0 / k as f64;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // 19 degrees of freedom, 0.1% level
    assert!(chi2 < 43.82, "{chi2}");
}

#[test]
fn single_connection_sensors_decode_alike() {
    let model = sum(Discipline::Arbitrary, 1, 0.2);
    for seed in 0..5 {
        let net = generate_network(&model, 12, 30, seed).unwrap();
        let v = draw_targets(&model, 12, seed + 100);
        let y = observe(&net, &encode(&net, &v).unwrap(), seed + 200).unwrap();
        let graph = FactorGraph::new(&net, &y).unwrap();
        assert!(graph.is_tree());
        let bp = decode_bp(&graph, 50, 0.0).unwrap();
        assert!(bp.converged);
        assert_eq!(bp.decision, decode_ml(&net, &y).unwrap());
    }
}

#[test]
fn damping_rarely_changes_the_decision() {
    let model = sum(Discipline::Arbitrary, 4, 0.1);
    let config = |damping| TrialConfig {
        k: 30,
        n: 60,
        distortion: 0.1,
        trials: 100,
        seed: 34,
        decoder: Decoder::Bp { max_iters: 50, damping },
    };
    let a = run_trials(&model, &config(0.0)).unwrap();
    let b = run_trials(&model, &config(0.3)).unwrap();
    let same = a.records.iter().zip(&b.records).filter(|(x, y)| x.v_hat == y.v_hat).count();
    assert!(same >= 90, "{same}/100");
}

#[test]
fn loopy_bp_tracks_ml_on_small_networks() {
    let model = sum(Discipline::Arbitrary, 4, 0.1);
    let ml = |decoder| {
        run_trials(
            &model,
            &TrialConfig {
                k: 12,
                n: 16,
                distortion: 0.1,
                trials: 60,
                seed: 35,
                decoder,
            },
        )
        .unwrap()
    };
    let exact = ml(Decoder::Ml);
    let bp = ml(Decoder::default());
    let agree = exact
        .records
        .iter()
        .zip(&bp.records)
        .filter(|(a, b)| a.error == b.error)
        .count();
    println!("BP/ML error agreement at k=12: {agree}/60");
    assert!(exact.errors <= bp.errors + 6, "ML {} vs BP {}", exact.errors, bp.errors);
    assert!(agree >= 45, "{agree}/60");
}
