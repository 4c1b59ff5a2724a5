use oscnet::network::{build_network, NetworkConfig};
use oscnet::speech::classifier::{balanced_accuracy, tally};
use oscnet::speech::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_cloud(rng: &mut ChaCha8Rng, n: usize, mean: &[f64], spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            mean.iter()
                .map(|m| m + spread * { let z: f64 = StandardNormal.sample(rng); z })
                .collect()
        })
        .collect()
}

fn dense_oracle(a: &[Vec<f64>], b: &[Vec<f64>], ridge: f64) -> Vec<f64> {
    let d = a[0].len();
    let mean = |s: &[Vec<f64>]| -> Vec<f64> {
        (0..d).map(|j| s.iter().map(|v| v[j]).sum::<f64>() / s.len() as f64).collect()
    };
    let (ma, mb) = (mean(a), mean(b));
    // N * S with S the n-1 normalized covariance
    let scatter = |s: &[Vec<f64>], m: &[f64], i: usize, j: usize| {
        let n = s.len() as f64;
        n * s.iter().map(|v| (v[i] - m[i]) * (v[j] - m[j])).sum::<f64>() / (n - 1.0)
    };
    let mut m: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| scatter(a, &ma, i, j) + scatter(b, &mb, i, j) + if i == j { ridge } else { 0.0 })
                .collect()
        })
        .collect();
    let mut rhs: Vec<f64> = ma.iter().zip(&mb).map(|(x, y)| x - y).collect();
    // Gauss-Jordan
    for k in 0..d {
        let p = (k..d).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
        m.swap(k, p);
        rhs.swap(k, p);
        let piv = m[k][k];
        for j in 0..d {
            m[k][j] /= piv;
        }
        rhs[k] /= piv;
        for i in 0..d {
            if i != k {
                let f = m[i][k];
                for j in 0..d {
                    m[i][j] -= f * m[k][j];
                }
                rhs[i] -= f * rhs[k];
            }
        }
    }
    rhs
}

#[test]
fn fisher_direction_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for ridge in [0.0, 1e-3, 5.0] {
        let a = gaussian_cloud(&mut rng, 40, &[1.0, 0.0, 2.0, -1.0, 0.5], 0.7);
        let b = gaussian_cloud(&mut rng, 55, &[0.0, 0.3, 1.0, -1.5, 0.0], 1.1);
        let d = fit_fisher(&a, &b, ridge).unwrap();
        let o = dense_oracle(&a, &b, ridge);
        for (x, y) in d.iter().zip(&o) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1e-12), "{x} vs {y}");
        }
    }
}

#[test]
fn large_ridge_preserves_mean_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = gaussian_cloud(&mut rng, 10, &[1.0, 2.0, 3.0], 0.5);
    let b = gaussian_cloud(&mut rng, 10, &[0.0, 0.0, 0.0], 0.5);
    let lambda = 1e12;
    let d = fit_fisher(&a, &b, lambda).unwrap();
    let ma: Vec<f64> = (0..3).map(|j| a.iter().map(|v| v[j]).sum::<f64>() / 10.0).collect();
    let mb: Vec<f64> = (0..3).map(|j| b.iter().map(|v| v[j]).sum::<f64>() / 10.0).collect();
    for j in 0..3 {
        let expected = (ma[j] - mb[j]) / lambda;
        assert!((d[j] - expected).abs() < 1e-6 * expected.abs());
    }
}

#[test]
fn singular_scatter_without_ridge_fails() {
    // every sample identical in the last coordinate
    let a = vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]];
    let b = vec![vec![0.0, 0.0], vec![-1.0, 0.0]];
    assert!(fit_fisher(&a, &b, 0.0).is_err());
    assert!(fit_fisher(&a, &b, 1e-3).is_ok());
}

#[test]
fn threshold_matches_exhaustive_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..20 {
        let na = rng.random_range(3..40);
        let nb = rng.random_range(3..40);
        let shift = rng.random_range(0.0..2.0);
        let pa: Vec<f64> = (0..na).map(|_| shift + { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
        let pb: Vec<f64> = (0..nb).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); z }).collect();
        let (t, acc) = tune_threshold(&pa, &pb);
        assert!((balanced_accuracy(&pa, &pb, t) - acc).abs() < 1e-12);
        // brute force: every data value and the points just past both ends
        let mut best = 0.0f64;
        for &c in pa.iter().chain(&pb) {
            best = best.max(balanced_accuracy(&pa, &pb, c));
        }
        best = best.max(balanced_accuracy(&pa, &pb, f64::NEG_INFINITY));
        best = best.max(balanced_accuracy(&pa, &pb, f64::INFINITY));
        assert!((acc - best).abs() < 1e-9, "trial {trial}: {acc} vs {best}");
    }
}

#[test]
fn separated_projections_get_the_gap_midpoint() {
    let (t, acc) = tune_threshold(&[3.0, 4.0, 5.0], &[-1.0, 0.0, 1.0]);
    assert_eq!(t, 2.0);
    assert_eq!(acc, 1.0);
    let (t, acc) = tune_threshold(&[1.0, 2.0], &[1.0, 2.0]);
    assert_eq!(acc, 0.5);
    assert_eq!(t, 1.5);
}

fn random_features(rng: &mut ChaCha8Rng, sections: usize) -> FeatureVector {
    FeatureVector {
        c: (0..DIGITS)
            .map(|_| (0..sections).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect(),
    }
}

fn labelled_clusters(rng: &mut ChaCha8Rng, per_digit: usize, sections: usize) -> (Vec<FeatureVector>, Vec<u8>) {
    let centers: Vec<FeatureVector> = (0..DIGITS).map(|_| random_features(rng, sections)).collect();
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (d, c) in centers.iter().enumerate() {
        for _ in 0..per_digit {
            let noise = random_features(rng, sections).scaled(0.3);
            feats.push(FeatureVector {
                c: c.c.iter().zip(&noise.c).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect(),
            });
            labels.push(d as u8);
        }
    }
    (feats, labels)
}

#[test]
fn votes_match_brute_force_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (feats, labels) = labelled_clusters(&mut rng, 8, 5);
    let pairs = fit_pairs(&feats, &labels, 1e-6).unwrap();
    assert_eq!(pairs.len(), 45);
    for _ in 0..100 {
        let f = random_features(&mut rng, 5);
        let mut votes = [0usize; DIGITS];
        for p in &pairs {
            let proj: f64 = (0..5).map(|j| p.direction[j] * (f.c[p.first as usize][j] - f.c[p.second as usize][j])).sum();
            let winner = if proj > p.threshold { p.first } else { p.second };
            votes[winner as usize] += 1;
        }
        let c = classify(&f, &pairs);
        assert_eq!(c.votes, votes);
        assert_eq!(c.votes.iter().sum::<usize>(), 45);
        let top = *votes.iter().max().unwrap();
        assert_eq!(c.digit as usize, votes.iter().position(|&v| v == top).unwrap());
    }
}

#[test]
fn clustered_features_are_classified() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (feats, labels) = labelled_clusters(&mut rng, 12, 6);
    let pairs = fit_pairs(&feats, &labels, 1e-6).unwrap();
    let hits = feats
        .iter()
        .zip(&labels)
        .filter(|(f, &l)| classify(f, &pairs).digit == l)
        .count();
    assert!(hits as f64 / labels.len() as f64 > 0.9);
}

#[test]
fn rescaled_features_classify_identically() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (feats, labels) = labelled_clusters(&mut rng, 10, 4);
    let probe: Vec<FeatureVector> = (0..50).map(|_| random_features(&mut rng, 4)).collect();
    let base = fit_pairs(&feats, &labels, 0.0).unwrap();
    for s in [0.5, 2.0] {
        let scaled: Vec<FeatureVector> = feats.iter().map(|f| f.scaled(s)).collect();
        let pairs = fit_pairs(&scaled, &labels, 0.0).unwrap();
        for f in &probe {
            assert_eq!(classify(f, &base).digit, classify(&f.scaled(s), &pairs).digit);
        }
    }
}

#[test]
fn confusion_matrix_permutes_with_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let labels: Vec<u8> = (0..300).map(|_| rng.random_range(0..10)).collect();
    let preds: Vec<u8> = labels
        .iter()
        .map(|&l| if rng.random_bool(0.6) { l } else { rng.random_range(0..10) })
        .collect();
    let perm: [u8; 10] = [3, 7, 0, 9, 1, 5, 2, 8, 4, 6];
    let a = confusion_matrix(&preds, &labels);
    let b = confusion_matrix(
        &preds.iter().map(|&p| perm[p as usize]).collect::<Vec<_>>(),
        &labels.iter().map(|&l| perm[l as usize]).collect::<Vec<_>>(),
    );
    for p in 0..10 {
        for l in 0..10 {
            assert_eq!(a.counts[p][l], b.counts[perm[p] as usize][perm[l] as usize]);
        }
    }
    assert_eq!(a.accuracy, b.accuracy);
    for col in 0..10 {
        let s: f64 = (0..10).map(|r| a.probabilities[r][col]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn perfect_predictions_give_identity() {
    let labels: Vec<u8> = (0..50).map(|i| (i % 10) as u8).collect();
    let m = confusion_matrix(&labels, &labels);
    for p in 0..10 {
        for a in 0..10 {
            assert_eq!(m.probabilities[p][a], if p == a { 1.0 } else { 0.0 });
        }
    }
    assert_eq!(m.accuracy.p, 1.0);
}

#[test]
fn symmetric_tie_returns_smaller_digit() {
    let mut votes = [4usize; DIGITS];
    votes[2] = 9;
    votes[5] = 9;
    let c = tally(votes);
    assert_eq!(c.digit, 2);
    assert!(c.tie);
    let mut votes = [0usize; DIGITS];
    votes[7] = 9;
    let c = tally(votes);
    assert_eq!((c.digit, c.tie), (7, false));
}

fn toy_utterance(rng: &mut ChaCha8Rng, digit: u8, speaker: usize) -> Utterance {
    let rate = 2000.0;
    let len = 300 + 40 * digit as usize + rng.random_range(0..30);
    let f = 200.0 + 30.0 * digit as f64 + 10.0 * speaker as f64;
    let samples = (0..len)
        .map(|k| {
            let t = k as f64 / rate;
            let env = (std::f64::consts::PI * k as f64 / len as f64).sin().powi(1 + (digit % 3) as i32);
            env * (2.0 * std::f64::consts::PI * f * t).sin() + 0.01 * rng.random_range(-1.0..1.0)
        })
        .collect();
    Utterance {
        samples,
        sample_rate: rate,
        label: digit,
        speaker: format!("s{speaker}"),
        id: format!("{digit}-{speaker}"),
    }
}

#[test]
fn end_to_end_on_toy_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let corpus: Vec<Utterance> = (0..5)
        .flat_map(|s| (0..DIGITS as u8).map(move |d| (s, d)))
        .map(|(s, d)| toy_utterance(&mut rng, d, s))
        .collect();
    let cfg = SpeechPipelineConfig {
        silence_duration: 10.0,
        train_count: 30,
        section_len: 4,
        section_stride: 2,
        ..SpeechPipelineConfig::default()
    };
    let net = build_network(&NetworkConfig {
        n_oscillators: 20,
        delta_star: cfg.delta_star,
        ..NetworkConfig::default()
    })
    .unwrap();
    let setup = SpeechSetup::with_defaults(cfg);
    let out = setup.run(&net, &corpus, 1).unwrap();
    assert_eq!(out.predictions.len(), 20);
    assert_eq!(out.model.pairs.len(), 45);
    assert_eq!(out.model.readouts.len(), DIGITS);
    assert_eq!(out.model.readouts[0].layout.len(), 9);
    for col in 0..DIGITS {
        let s: f64 = (0..DIGITS).map(|r| out.confusion.probabilities[r][col]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
    for p in &out.predictions {
        assert_eq!(p.votes.iter().sum::<usize>(), 45);
    }
    let again = setup.run(&net, &corpus, 1).unwrap();
    assert_eq!(again.predictions, out.predictions);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    out.model.save(&path).unwrap();
    assert_eq!(SpeechModel::load(&path).unwrap(), out.model);
}

#[test]
fn nineteen_overlapping_sections_cover_the_chain() {
    let cfg = SpeechPipelineConfig::default();
    let setup = SpeechSetup::with_defaults(cfg);
    let layout = setup.layout(400).unwrap();
    assert_eq!(layout.len(), 19);
    let starts: Vec<usize> = layout.sections.iter().map(|s| s.start).collect();
    assert_eq!(starts, (0..19).map(|k| 20 * k).collect::<Vec<_>>());
    assert!(layout.sections.iter().all(|s| s.len == 40));
}
