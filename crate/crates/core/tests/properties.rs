use proptest::prelude::*;

use visemekit::dct::{dct2, fd_first, idct2, zigzag_order, zigzag_select};
use visemekit::eval::{align_score, align_score_with, EditCosts};
use visemekit::features::{FeatureKind, FeatureSequence};
use visemekit::hmm::Transcript;
use visemekit::image::GrayImage;
use visemekit::pca::pca_fit;
use visemekit::shape::{align_pair, Shape, SimilarityTransform};

fn labels(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["sil", "pbm", "aa", "iy", "ow"]).prop_map(str::to_string), 0..max)
}

fn shape(n: usize) -> impl Strategy<Value = Shape> {
    prop::collection::vec(-100.0..100.0f64, 2 * n).prop_map(|c| Shape::new(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dct_round_trip(n in 2usize..20, seed in prop::collection::vec(0.0..1.0f64, 400)) {
        let data: Vec<f64> = seed.iter().cycle().take(n * n).copied().collect();
        let c = dct2(&GrayImage::new(n, n, data.clone()).unwrap()).unwrap();
        for (a, b) in idct2(&c).iter().zip(&data) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zigzag_selection_is_a_prefix(n in 2usize..12, k in 1usize..20) {
        let k = k.min(n * n - 2);
        let data: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let c = dct2(&GrayImage::new(n, n, data).unwrap()).unwrap();
        let short = zigzag_select(&c, k).unwrap();
        let long = zigzag_select(&c, k + 1).unwrap();
        prop_assert_eq!(&long[..k], &short[..]);
        let order = zigzag_order(n);
        prop_assert_eq!(order.len(), n * n);
        for w in order.windows(2) {
            prop_assert!(w[1].0 + w[1].1 >= w[0].0 + w[0].1);
        }
    }

    #[test]
    fn finite_differences_are_linear(
        a in prop::collection::vec(-5.0..5.0f64, 5..15),
        alpha in -3.0..3.0f64,
        offset in -10.0..10.0f64,
    ) {
        let seq: Vec<Vec<f64>> = a.iter().map(|v| vec![*v]).collect();
        let shifted: Vec<Vec<f64>> = a.iter().map(|v| vec![alpha * v + offset]).collect();
        let d = fd_first(&seq).unwrap();
        let ds = fd_first(&shifted).unwrap();
        for (x, y) in d.iter().zip(&ds) {
            prop_assert!((alpha * x[0] - y[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn procrustes_recovers_similarities(
        s in shape(6),
        scale in 0.3..3.0f64,
        rot in -3.0..3.0f64,
        tx in -50.0..50.0f64,
        ty in -50.0..50.0f64,
    ) {
        prop_assume!(s.centered_norm() > 1.0);
        let t = SimilarityTransform::new(scale, rot, (tx, ty)).unwrap();
        let moved = t.apply(&s);
        let back = t.inverse().apply(&moved);
        prop_assert!(back.sq_distance(&s).sqrt() < 1e-8);
        let fitted = align_pair(&s, &moved).unwrap();
        prop_assert!(fitted.apply(&s).sq_distance(&moved).sqrt() < 1e-7);
    }

    #[test]
    fn alignment_counts_are_consistent(r in labels(8), h in labels(8), htk in any::<bool>()) {
        prop_assume!(!r.is_empty());
        let (rt, ht) = (Transcript::new(r.clone()), Transcript::new(h.clone()));
        let costs = if htk { EditCosts::HTK } else { EditCosts::UNIT };
        let s = align_score_with(&rt, &ht, &costs).unwrap();
        prop_assert_eq!(s.n, r.len());
        prop_assert_eq!(s.hits() + s.substitutions + s.insertions, h.len());
        prop_assert!(s.accuracy() <= s.correctness());
        let same = align_score(&rt, &rt).unwrap();
        prop_assert_eq!((same.substitutions, same.deletions, same.insertions), (0, 0, 0));
        prop_assert!((same.accuracy() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn transcripts_round_trip_through_text(l in labels(12)) {
        let t = Transcript::new(l);
        let back: Transcript = t.to_string().parse().unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn pca_reconstructs_points_in_its_span(
        rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 4..10),
    ) {
        // 3-D points embedded in 6 dims
        let data: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![r[0], r[1], r[2], r[0] + r[1], r[1] - r[2], 2.0 * r[0]])
            .collect();
        let pca = pca_fit(&data, 6, 1.0).unwrap();
        prop_assume!(!pca.degenerate);
        prop_assert!(pca.n_components() <= 3);
        for w in pca.eigenvalues.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for row in &data {
            let back = pca.reconstruct(&pca.project(row));
            for (a, b) in back.iter().zip(row) {
                prop_assert!((a - b).abs() < 1e-7);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feature_files_round_trip(
        frames in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 7), 1..20),
        rate in 1.0..120.0f64,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let seq = FeatureSequence::new(frames, rate, FeatureKind::Dct).unwrap();
        seq.save(&path).unwrap();
        let back = FeatureSequence::load(&path).unwrap();
        prop_assert_eq!(back.frames(), seq.frames());
        prop_assert_eq!(back.frame_rate(), rate);
        prop_assert_eq!(back.kind(), FeatureKind::Dct);
    }
}
