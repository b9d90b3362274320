use proptest::prelude::*;

use seqvad::calibration::{compute_d_alpha, compute_threshold};
use seqvad::data::{
    normalize, parse_feature_stream, write_feature_stream, FeatureVector, FrameObservation,
    NormalizationStats,
};
use seqvad::detector::{
    build_training_sequence, localize, rnn_loss, statistic_series, train_rnn_detector, update,
    DetectorState, RnnDetector, RnnTrainConfig,
};
use seqvad::evidence::{
    leave_one_out_targets, train_knn_regressor, KdTree, RegressorConfig, TrainingSet,
};
use seqvad::lambert::{lambert_w, Branch};
use seqvad::metrics::{
    alarm_runs, apd, frame_auc, precision_delay_curve, VideoSeries,
};
use seqvad::synth::{generate_nominal_stream, generate_scenario, ScenarioConfig};
use seqvad::{calibrate, GroundTruthEvent, NominalModel};

fn frames_strategy() -> impl Strategy<Value = Vec<FrameObservation>> {
    (1usize..5, 1usize..20).prop_flat_map(|(dim, n)| {
        prop::collection::vec(
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, dim), 0..4),
            n,
        )
        .prop_map(|frames| {
            frames
                .into_iter()
                .enumerate()
                .map(|(i, objs)| {
                    FrameObservation::new(
                        if i % 2 == 0 { "a" } else { "b" },
                        i as u64,
                        objs.into_iter().map(FeatureVector).collect(),
                    )
                })
                .collect()
        })
    })
}

fn small_model(seed: u64) -> NominalModel {
    let mut config = ScenarioConfig::standard(2, seed);
    config.n_train_frames = 200;
    calibrate(&generate_scenario(&config).unwrap().train, 0.05, 0.05, 5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_stream_round_trip(frames in frames_strategy()) {
        let mut buf = Vec::new();
        write_feature_stream(&mut buf, &frames).unwrap();
        let back = parse_feature_stream(buf.as_slice()).unwrap();
        prop_assert_eq!(back, frames);
    }

    #[test]
    fn normalize_lands_in_unit_cube(
        lo in prop::collection::vec(-5.0f64..5.0, 1..6),
        width in 0.0f64..3.0,
        x in prop::collection::vec(-20.0f64..20.0, 6),
    ) {
        let hi: Vec<f64> = lo.iter().map(|v| v + width).collect();
        let stats = NormalizationStats::new(lo.clone(), hi).unwrap();
        let x = FeatureVector(x[..lo.len()].to_vec());
        let y = normalize(&x, &stats).unwrap();
        prop_assert!(y.0.iter().all(|v| (0.0..=1.0).contains(v)));
        let unit = NormalizationStats::new(vec![0.0; lo.len()], vec![1.0; lo.len()]).unwrap();
        prop_assert_eq!(normalize(&y, &unit).unwrap(), y);
    }

    #[test]
    fn adding_a_point_never_increases_distance(
        pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 6..60),
        extra in prop::collection::vec(0.0f64..1.0, 3),
        q in prop::collection::vec(0.0f64..1.0, 3),
        k in 1usize..6,
    ) {
        let base: Vec<FeatureVector> = pts.into_iter().map(FeatureVector).collect();
        let mut more = base.clone();
        more.push(FeatureVector(extra));
        let a = KdTree::build(&TrainingSet::new(&base, k).unwrap()).kth_distance(&q, k, None).unwrap();
        let b = KdTree::build(&TrainingSet::new(&more, k).unwrap()).kth_distance(&q, k, None).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn lambert_residual(x in -0.36787944117144233f64..1e6) {
        let w = lambert_w(Branch::Principal, x).unwrap();
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.abs().max(1.0));
        if x < 0.0 {
            let w = lambert_w(Branch::MinusOne, x).unwrap();
            prop_assert!(w <= -1.0);
            prop_assert!((w * w.exp() - x).abs() <= 1e-12);
        }
    }

    #[test]
    fn d_alpha_non_increasing_in_alpha(
        d in prop::collection::vec(0.0f64..10.0, 1..200),
        a in 0.0f64..0.99,
        b in 0.0f64..0.99,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(compute_d_alpha(&d, hi).unwrap() <= compute_d_alpha(&d, lo).unwrap());
    }

    #[test]
    fn threshold_decreasing_in_beta(omega0 in 1e-3f64..1e4, a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(compute_threshold(omega0, hi).unwrap() < compute_threshold(omega0, lo).unwrap());
    }

    #[test]
    fn statistic_non_negative_and_zero_without_drift(
        e in prop::collection::vec(0.0f64..2.0, 0..200),
        offset in 0.0f64..2.0,
        m in 1usize..5,
    ) {
        let s = statistic_series(&e, m, offset);
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        let below: Vec<f64> = e.into_iter().filter(|v| v.powi(m as i32) <= offset).collect();
        prop_assert!(statistic_series(&below, m, offset).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn raising_h_only_removes_alarmed_frames(
        s in prop::collection::vec(0.0f64..5.0, 1..300),
        h1 in 0.0f64..5.0,
        h2 in 0.0f64..5.0,
    ) {
        let (lo, hi) = if h1 < h2 { (h1, h2) } else { (h2, h1) };
        let series = VideoSeries::contiguous("v", s);
        let frames = |h: f64| -> Vec<u64> {
            alarm_runs(&series, h).iter().flat_map(|r| r.start_frame..=r.end_frame).collect()
        };
        let low = frames(lo);
        prop_assert!(frames(hi).iter().all(|f| low.contains(f)));
    }

    #[test]
    fn localize_ignores_values_past_the_window(
        s in prop::collection::vec(0.0f64..10.0, 2..100),
        alarm_frac in 0.0f64..1.0,
        window in 1usize..6,
        tail in prop::collection::vec(0.0f64..10.0, 100),
    ) {
        let alarm = ((s.len() - 1) as f64 * alarm_frac) as usize;
        let ev = localize(&s, alarm, window).unwrap();
        prop_assert!(ev.start_frame <= ev.end_frame);
        let cut = ev.end_frame as usize + window;
        if cut < s.len() {
            let mut changed = s.clone();
            for (i, v) in changed.iter_mut().enumerate().skip(cut) {
                *v = tail[i % tail.len()];
            }
            let again = localize(&changed, alarm, window).unwrap();
            prop_assert_eq!(again.end_frame, ev.end_frame);
            prop_assert_eq!(again.start_frame, ev.start_frame);
        }
    }

    #[test]
    fn apd_within_unit_interval(
        s in prop::collection::vec(prop::collection::vec(0.0f64..3.0, 50), 1..4),
        start in 0u64..40,
    ) {
        let series: Vec<VideoSeries> = s
            .into_iter()
            .enumerate()
            .map(|(i, v)| VideoSeries::contiguous(format!("v{i}"), v))
            .collect();
        let truth: Vec<GroundTruthEvent> = series
            .iter()
            .map(|v| GroundTruthEvent {
                video_id: v.video_id.clone(),
                start_frame: start,
                end_frame: start + 5,
                segment_length: 50,
            })
            .collect();
        let grid: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let a = apd(&precision_delay_curve(&series, &truth, &grid).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_rank_invariances(
        pairs in prop::collection::vec((-5.0f64..5.0, any::<bool>()), 2..100),
    ) {
        let labels: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let a = frame_auc(&s, &labels).unwrap();
        let monotone: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        prop_assert!((frame_auc(&monotone, &labels).unwrap() - a).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((frame_auc(&neg, &labels).unwrap() + a - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn streaming_update_equals_batch(seed in 0u64..1000, e in prop::collection::vec(0.0f64..0.5, 1..300)) {
        let model = small_model(seed % 3);
        let batch = statistic_series(&e, model.dim, model.drift_offset());
        let mut state = DetectorState::default();
        for (i, &x) in e.iter().enumerate() {
            let (next, s, _) = update(&state, x, &model).unwrap();
            prop_assert_eq!(s, batch[i]);
            state = next;
        }
    }
}

#[test]
fn regressor_objective_mostly_monotone_full_batch() {
    let mut config = ScenarioConfig::standard(3, 2);
    config.n_train_frames = 150;
    let model = calibrate(&generate_scenario(&config).unwrap().train, 0.05, 0.05, 10).unwrap();
    let targets = leave_one_out_targets(&model.training).unwrap();
    // full batch, step 0.005 in standardized units
    let cfg = RegressorConfig {
        epochs: 200,
        learning_rate: 0.005,
        batch_size: 0,
        ..RegressorConfig::default()
    };
    let (_, report) = train_knn_regressor(&model.training, &targets, 1e-4, &cfg, 1).unwrap();
    let h = &report.objective_history;
    let rising = h.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rising * 20 <= h.len() - 1, "{rising} of {} steps rose", h.len() - 1);
    assert!(h.last().unwrap() < h.first().unwrap());
}

#[test]
fn rnn_training_reduces_loss_and_is_deterministic() {
    let mut config = ScenarioConfig::standard(2, 3);
    config.n_train_frames = 500;
    let model = calibrate(&generate_scenario(&config).unwrap().train, 0.05, 0.05, 10).unwrap();
    let nominal = model.evidences(&generate_nominal_stream(&config, 600, 4).unwrap()).unwrap();
    let cfg = RnnTrainConfig::default();
    let (a, report) = train_rnn_detector(&nominal, &model, &cfg, 9).unwrap();
    assert!(report.final_loss < report.initial_loss, "{report:?}");
    let (b, _) = train_rnn_detector(&nominal, &model, &cfg, 9).unwrap();
    assert_eq!(a, b);

    let (ev, labels) = build_training_sequence(&nominal, &model, &cfg, 9).unwrap();
    let fixed = RnnDetector::fixed_weight(&model);
    let inputs: Vec<f64> = ev.iter().map(|&e| fixed.input(e)).collect();
    assert!(rnn_loss(&fixed, &inputs, &labels).is_finite());
}

#[test]
fn synthetic_mean_converges() {
    let config = ScenarioConfig::standard(3, 21);
    let frames = generate_nominal_stream(&config, 10_000, 5).unwrap();
    let objects: Vec<&FeatureVector> = frames.iter().flat_map(|f| f.objects.iter()).collect();
    let n = objects.len() as f64;
    let target = config.mixture_mean();
    for d in 0..config.m {
        let mean = objects.iter().map(|o| o.0[d]).sum::<f64>() / n;
        let var = objects.iter().map(|o| (o.0[d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        assert!((mean - target[d]).abs() <= 3.0 * se, "dim {d}: {mean} vs {}", target[d]);
    }
}

#[test]
fn anomalous_objects_only_inside_windows() {
    let mut config = ScenarioConfig::standard(2, 6);
    config.nominal_components.iter_mut().for_each(|c| c.scale = 0.0);
    config.anomaly_shift = vec![0.2, 0.2];
    let s = generate_scenario(&config).unwrap();
    for frame in &s.test {
        let inside = s
            .truth
            .iter()
            .any(|e| e.video_id == frame.video_id && e.contains(frame.frame_index));
        let shifted = frame.objects.iter().any(|o| o.0 == vec![0.3 + 0.2; 2] || o.0 == vec![0.7 + 0.2; 2]);
        assert_eq!(inside, shifted, "{} frame {}", frame.video_id, frame.frame_index);
    }
}
