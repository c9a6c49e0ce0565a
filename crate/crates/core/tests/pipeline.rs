use hdpair_core::cca::{Init, SccaParams};
use hdpair_core::distances::{distance_matrix, Euclidean, MetricRegistry, PEARSON_DISTANCE, SCALED_EUCLIDEAN};
use hdpair_core::inference::{dcor, InferenceInput, InferenceRegistry, InferenceSettings};
use hdpair_core::matrixio::{self, FeatureMatrix, Format};
use hdpair_core::selection;
use hdpair_core::synth;
use nalgebra::DMatrix;

#[test]
fn io_roundtrip_and_alignment() {
    let (d, _) = synth::gen_shared_latent(12, 5, 4, 0.5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (name, fmt) in [("x.csv", Format::Csv), ("x.bin", Format::Bin)] {
        let p = dir.path().join(name);
        d.x.save(&p, fmt).unwrap();
        let back = matrixio::load_matrix(&p, Format::from_path(&p)).unwrap();
        assert_eq!(back.data(), d.x.data());
        assert_eq!(back.subject_ids(), d.x.subject_ids());
    }
    // Y stored in reverse subject order is realigned to X.
    let rev: Vec<usize> = (0..12).rev().collect();
    let paired = matrixio::pair(d.x.clone(), d.y.select_rows(&rev)).unwrap();
    assert_eq!(paired.y.data(), d.y.data());
    let extra = FeatureMatrix::new(DMatrix::zeros(1, 4), vec!["stranger".into()], "y").unwrap();
    assert!(matrixio::pair(d.x.clone(), extra).is_err());
}

#[test]
fn statistics_ignore_joint_relabeling() {
    let (d, _) = synth::gen_shared_latent(40, 30, 30, 0.6, 2).unwrap();
    let metrics = MetricRegistry::default();
    let (mx, my) = (metrics.get(SCALED_EUCLIDEAN).unwrap(), metrics.get(PEARSON_DISTANCE).unwrap());
    let perm: Vec<usize> = (0..40).map(|i| (i * 7) % 40).collect();
    let shuffled = d.select_rows(&perm);
    let settings = InferenceSettings {
        b: 199,
        ratio: 0.5,
        ..InferenceSettings::default()
    };
    let registry = InferenceRegistry::default();
    assert_eq!(registry.names(), vec!["bootstrap", "dcor", "perm", "subsample"]);
    let a = InferenceInput::new(&d, mx, my).unwrap();
    let b = InferenceInput::new(&shuffled, mx, my).unwrap();
    for name in registry.names() {
        let m = registry.get(&name).unwrap();
        let (ra, rb) = (m.run(&a, &settings).unwrap(), m.run(&b, &settings).unwrap());
        assert!((ra.observed - rb.observed).abs() < 1e-12, "{name}");
    }
    assert!(registry.get("nope").is_err());
}

/// Double-sum definition of the bias-corrected statistic.
fn dcor_double_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let nf = n as f64;
    let u = |m: &DMatrix<f64>, i: usize, j: usize| {
        if i == j {
            return 0.0;
        }
        let row: f64 = m.row(i).sum();
        let col: f64 = m.column(j).sum();
        m[(i, j)] - row / (nf - 2.0) - col / (nf - 2.0) + m.sum() / ((nf - 1.0) * (nf - 2.0))
    };
    let dot = |p: &DMatrix<f64>, q: &DMatrix<f64>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u(p, i, j) * u(q, i, j);
            }
        }
        s
    };
    dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()
}

#[test]
fn dcor_matches_double_sum_at_n12() {
    let (d, _) = synth::gen_shared_latent(12, 6, 5, 0.7, 3).unwrap();
    let dx = distance_matrix(&d.x, &Euclidean).unwrap();
    let dy = distance_matrix(&d.y, &Euclidean).unwrap();
    let got = dcor::dcor_ttest(&d.x, &d.y).unwrap();
    let want = dcor_double_sum(dx.data(), dy.data());
    assert!((got.bias_corrected_r - want).abs() < 1e-12);
    assert_eq!(got.degrees_of_freedom, 12.0 * 9.0 / 2.0 - 1.0);
}

#[test]
fn planted_pair_generalizes() {
    let (d, truth) = synth::gen_sparse_canonical_pair(120, 60, 50, 5, 5, 0.9, 4).unwrap();
    let (train, test) = selection::train_test_split(120, 4).unwrap();
    let params = SccaParams::with_sparsity(1.8, 1.8);
    let model = selection::fit_model(d.x.data(), d.y.data(), &train, &params, Init::Svd).unwrap();
    let r = selection::evaluate_test(&model, &d.x.data().select_rows(&test), &d.y.data().select_rows(&test)).unwrap();
    assert!(r > 0.6, "test correlation {r}");
    let (sx, _) = model.pair.support_columns();
    let hits = truth.u_star.unwrap().indices.iter().filter(|i| sx.contains(i)).count();
    assert!(hits >= 3, "{hits} planted x features selected");
}
