//! Seeded synthetic scenarios: nominal objects from a Gaussian mixture
//! clipped to the unit cube, anomalies as mean-shifted objects inside
//! configured windows, and optional isolated nominal outlier frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureVector, FrameObservation, GroundTruthEvent};
use crate::error::{Error, Result};

pub const TRAIN_VIDEO_ID: &str = "train";
pub const NOMINAL_VIDEO_ID: &str = "nominal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalComponent {
    pub mean: Vec<f64>,
    /// Per-dimension standard deviation.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub m: usize,
    pub n_train_frames: usize,
    /// Frames in each test video.
    pub n_test_frames: usize,
    /// Inclusive range of objects per frame.
    pub objects_per_frame: (usize, usize),
    pub nominal_components: Vec<NominalComponent>,
    pub anomaly_shift: Vec<f64>,
    /// Inclusive `(start, end)` windows for each test video.
    pub anomaly_windows: Vec<Vec<(u64, u64)>>,
    pub n_videos: usize,
    pub seed: u64,
    /// Probability that a nominal test frame carries one outlying object.
    #[serde(default)]
    pub outlier_rate: f64,
    #[serde(default)]
    pub outlier_shift: Vec<f64>,
}

/// Generated training frames, test frames and their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub train: Vec<FrameObservation>,
    pub test: Vec<FrameObservation>,
    pub truth: Vec<GroundTruthEvent>,
}

impl ScenarioConfig {
    /// A two-cluster scenario in `m` dimensions with 8000 training frames and
    /// four test videos of 300 frames, each holding one 60-frame anomaly.
    pub fn standard(m: usize, seed: u64) -> Self {
        let shift = (0..m).map(|d| if d % 2 == 0 { 0.35 } else { -0.35 }).collect();
        ScenarioConfig {
            m,
            n_train_frames: 8000,
            n_test_frames: 300,
            objects_per_frame: (1, 3),
            nominal_components: vec![
                NominalComponent {
                    mean: vec![0.3; m],
                    scale: 0.15,
                },
                NominalComponent {
                    mean: vec![0.7; m],
                    scale: 0.15,
                },
            ],
            anomaly_shift: shift,
            anomaly_windows: vec![
                vec![(100, 159)],
                vec![(40, 99)],
                vec![(180, 239)],
                vec![(200, 259)],
            ],
            n_videos: 4,
            seed,
            outlier_rate: 0.0,
            outlier_shift: Vec::new(),
        }
    }

    /// Mean of the (unclipped) mixture.
    pub fn mixture_mean(&self) -> Vec<f64> {
        let n = self.nominal_components.len() as f64;
        (0..self.m)
            .map(|d| self.nominal_components.iter().map(|c| c.mean[d]).sum::<f64>() / n)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.m == 0 {
            return bad("scenario dimension must be positive".into());
        }
        let (lo, hi) = self.objects_per_frame;
        if lo > hi {
            return bad(format!("objects_per_frame range ({lo}, {hi}) is empty"));
        }
        if self.nominal_components.is_empty() {
            return bad("at least one nominal component is required".into());
        }
        for c in &self.nominal_components {
            if c.mean.len() != self.m || !(c.scale >= 0.0) {
                return bad("nominal component must have m means and a non-negative scale".into());
            }
        }
        for (name, v) in [("anomaly_shift", &self.anomaly_shift), ("outlier_shift", &self.outlier_shift)] {
            if !v.is_empty() && v.len() != self.m {
                return bad(format!("{name} must be empty or have m = {} entries", self.m));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier_rate {} outside [0, 1]", self.outlier_rate));
        }
        if !self.anomaly_windows.is_empty() && self.anomaly_windows.len() != self.n_videos {
            return bad(format!(
                "{} window lists for {} videos",
                self.anomaly_windows.len(),
                self.n_videos
            ));
        }
        for (v, windows) in self.anomaly_windows.iter().enumerate() {
            let mut sorted = windows.clone();
            sorted.sort();
            for &(s, e) in &sorted {
                if s > e || e >= self.n_test_frames as u64 {
                    return bad(format!(
                        "window ({s}, {e}) of video {v} outside 0..{}",
                        self.n_test_frames
                    ));
                }
            }
            if sorted.windows(2).any(|w| w[1].0 <= w[0].1) {
                return bad(format!("overlapping windows in video {v}"));
            }
        }
        Ok(())
    }

    fn windows_of(&self, video: usize) -> &[(u64, u64)] {
        self.anomaly_windows.get(video).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn video_id(index: usize) -> String {
    format!("video_{index:03}")
}

struct Sampler<'a> {
    config: &'a ScenarioConfig,
    normals: Vec<Normal<f64>>,
}

impl<'a> Sampler<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        let normals = config
            .nominal_components
            .iter()
            .map(|c| Normal::new(0.0, c.scale).expect("scale validated"))
            .collect();
        Sampler { config, normals }
    }

    fn object(&self, rng: &mut ChaCha8Rng) -> FeatureVector {
        let c = rng.random_range(0..self.normals.len());
        let comp = &self.config.nominal_components[c];
        let noise = &self.normals[c];
        FeatureVector(
            comp.mean
                .iter()
                .map(|&mu| (mu + noise.sample(rng)).clamp(0.0, 1.0))
                .collect(),
        )
    }

    fn object_count(&self, rng: &mut ChaCha8Rng) -> usize {
        let (lo, hi) = self.config.objects_per_frame;
        rng.random_range(lo..=hi)
    }

    fn nominal_frame(&self, rng: &mut ChaCha8Rng, video: &str, index: u64) -> FrameObservation {
        let n = self.object_count(rng);
        let objects = (0..n).map(|_| self.object(rng)).collect();
        FrameObservation::new(video, index, objects)
    }
}

fn shifted(x: &mut FeatureVector, shift: &[f64]) {
    for (v, s) in x.0.iter_mut().zip(shift) {
        *v = (*v + s).clamp(0.0, 1.0);
    }
}

/// Training frames, test videos and ground truth for `config`.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let sampler = Sampler::new(config);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let train = (0..config.n_train_frames as u64)
        .map(|i| sampler.nominal_frame(&mut rng, TRAIN_VIDEO_ID, i))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut test = Vec::with_capacity(config.n_videos * config.n_test_frames);
    let mut truth = Vec::new();
    for v in 0..config.n_videos {
        let id = video_id(v);
        let windows = config.windows_of(v);
        for i in 0..config.n_test_frames as u64 {
            let mut frame = sampler.nominal_frame(&mut rng, &id, i);
            let in_window = windows.iter().any(|&(s, e)| s <= i && i <= e);
            if in_window {
                if frame.objects.is_empty() {
                    frame.objects.push(sampler.object(&mut rng));
                }
                shifted(&mut frame.objects[0], &config.anomaly_shift);
            } else if config.outlier_rate > 0.0 && rng.random_bool(config.outlier_rate) {
                if frame.objects.is_empty() {
                    frame.objects.push(sampler.object(&mut rng));
                }
                shifted(&mut frame.objects[0], &config.outlier_shift);
            }
            test.push(frame);
        }
        for &(s, e) in windows {
            truth.push(GroundTruthEvent {
                video_id: id.clone(),
                start_frame: s,
                end_frame: e,
                segment_length: config.n_test_frames as u64,
            });
        }
    }
    let truth = crate::data::sort_and_check_events(truth)?;
    Ok(Scenario { train, test, truth })
}

/// Purely nominal frames for false-alarm experiments.
pub fn generate_nominal_stream(
    config: &ScenarioConfig,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<FrameObservation>> {
    config.validate()?;
    let sampler = Sampler::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    Ok((0..n_frames as u64)
        .map(|i| sampler.nominal_frame(&mut rng, NOMINAL_VIDEO_ID, i))
        .collect())
}
