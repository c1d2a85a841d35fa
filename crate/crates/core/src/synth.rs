//! Synthetic feature dumps with planted confusion structure.
//!
//! Classes are Gaussian clusters. Group centers sit on mutually orthogonal
//! axes `cross_distance` apart; each class center is offset from its group
//! center along its own axis so that classes of one group are
//! `within_distance` apart. Small `within_distance` relative to `noise`
//! makes classes of the same group confusable while groups stay separable.
//!
//! Model predictions come from a fixed linear reference predictor: a
//! nearest-center rule in which each class's own axis is rotated by an
//! angle toward the axis of the next class of its group. At angle 0 this is
//! the optimal rule; as the angle grows, samples increasingly go to the
//! preceding class of the same group. The angle is calibrated by bisection
//! on a separate draw to hit the requested error rate.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    split_dataset, write_feature_dump, write_grouping, write_manifest, DumpMeta, FeatureDataset,
    GroupAssignment, ManifestEntry, RunManifest, SplitTag,
};
use crate::error::{Error, Result};
use crate::probe::{predict, LinearProbe, Optimizer, ProbeConfigPatch};

fn default_probe_fraction() -> f64 {
    0.8
}

fn default_layer() -> String {
    "synthetic".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Samples per class in the training pool (split into probe_train / probe_eval).
    pub train_per_class: usize,
    pub validation_per_class: usize,
    /// Planted class groups; must partition `0..num_classes`.
    pub groups: Vec<Vec<usize>>,
    pub within_distance: f64,
    pub cross_distance: f64,
    pub noise: f64,
    pub reference_error_rate: f64,
    pub seed: u64,
    #[serde(default = "default_probe_fraction")]
    pub probe_fraction: f64,
    #[serde(default)]
    pub epoch: u32,
    #[serde(default = "default_layer")]
    pub layer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes < 2 {
            return bad("need at least 2 classes".into());
        }
        let m = self.groups.len();
        if self.feature_dim < m + self.num_classes {
            return bad(format!(
                "feature_dim {} too small: need at least groups + classes = {}",
                self.feature_dim,
                m + self.num_classes
            ));
        }
        let mut seen = vec![false; self.num_classes];
        for g in &self.groups {
            if g.is_empty() {
                return bad("empty group".into());
            }
            for &c in g {
                if c >= self.num_classes || seen[c] {
                    return bad(format!("groups must partition the classes (class {c})"));
                }
                seen[c] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("groups must cover every class".into());
        }
        for (name, v) in [
            ("within_distance", self.within_distance),
            ("cross_distance", self.cross_distance),
            ("noise", self.noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.reference_error_rate) {
            return bad("reference_error_rate must lie in [0, 1)".into());
        }
        if self.train_per_class < 2 || self.validation_per_class == 0 {
            return bad("need at least 2 training and 1 validation sample per class".into());
        }
        if !(self.probe_fraction > 0.0 && self.probe_fraction < 1.0) {
            return bad("probe_fraction must lie in (0, 1)".into());
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return bad("class_names length must equal num_classes".into());
            }
        }
        Ok(())
    }

    pub fn grouping(&self) -> GroupAssignment {
        let mut membership = vec![0; self.num_classes];
        for (g, members) in self.groups.iter().enumerate() {
            for &c in members {
                membership[c] = g;
            }
        }
        let groups = (0..self.groups.len()).map(|g| format!("block_{g}")).collect();
        GroupAssignment::new("planted", groups, membership).expect("validated spec")
    }

    fn group_of(&self) -> Vec<usize> {
        self.grouping().membership
    }

    fn group_center(&self, g: usize) -> Array1<f64> {
        let mut c = Array1::zeros(self.feature_dim);
        c[g] = self.cross_distance / std::f64::consts::SQRT_2;
        c
    }

    fn class_center(&self, class: usize) -> Array1<f64> {
        let m = self.groups.len();
        let mut c = self.group_center(self.group_of()[class]);
        c[m + class] += self.within_distance / std::f64::consts::SQRT_2;
        c
    }

    /// Class following `class` in its group, cyclically.
    fn successor(&self, class: usize) -> usize {
        let g = &self.groups[self.group_of()[class]];
        let pos = g.iter().position(|&c| c == class).expect("class in its group");
        g[(pos + 1) % g.len()]
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub probe_train: FeatureDataset,
    pub probe_eval: FeatureDataset,
    pub validation: FeatureDataset,
    pub reference: LinearProbe,
    /// Calibrated rotation angle of the reference predictor, in radians.
    pub mixing_angle: f64,
    /// Error rate of the reference predictor on the calibration draw.
    pub achieved_error_rate: f64,
    pub warnings: Vec<String>,
}

fn draw(spec: &SynthSpec, per_class: usize, rng: &mut ChaCha8Rng) -> (Array2<f32>, Vec<u32>) {
    let normal = Normal::new(0.0, spec.noise).expect("noise validated");
    let n = per_class * spec.num_classes;
    let mut x = Array2::<f32>::zeros((n, spec.feature_dim));
    let mut y = Vec::with_capacity(n);
    let centers: Vec<Array1<f64>> = (0..spec.num_classes).map(|c| spec.class_center(c)).collect();
    for i in 0..n {
        let c = i % spec.num_classes;
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = (centers[c][j] + normal.sample(rng)) as f32;
        }
        y.push(c as u32);
    }
    (x, y)
}

/// Nearest-center rule over rotated centers, written as a linear probe.
fn reference_predictor(spec: &SynthSpec, angle: f64) -> LinearProbe {
    let m = spec.groups.len();
    let offset = spec.within_distance / std::f64::consts::SQRT_2;
    let mut p = LinearProbe::zeros(spec.num_classes, spec.feature_dim);
    for c in 0..spec.num_classes {
        let mut mu = spec.group_center(spec.group_of()[c]);
        mu[m + c] += offset * angle.cos();
        mu[m + spec.successor(c)] += offset * angle.sin();
        p.bias[c] = -0.5 * mu.dot(&mu);
        p.weights.row_mut(c).assign(&mu);
    }
    p
}

fn error_rate(pred: &[u32], y: &[u32]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a != b).count() as f64 / y.len() as f64
}

pub fn synth_dataset(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (train_x, train_y) = draw(spec, spec.train_per_class, &mut rng);
    let (val_x, val_y) = draw(spec, spec.validation_per_class, &mut rng);
    let (cal_x, cal_y) = draw(spec, spec.train_per_class.max(50), &mut rng);

    let cal_error = |angle: f64| -> f64 {
        let p = reference_predictor(spec, angle);
        error_rate(&predict(&p, cal_x.view()).expect("dims match"), &cal_y)
    };
    let target = spec.reference_error_rate;
    let max_angle = std::f64::consts::FRAC_PI_2;
    let mut warnings = Vec::new();
    let floor = cal_error(0.0);
    let ceiling = cal_error(max_angle);
    let angle = if floor >= target {
        if floor > target {
            warnings.push(format!(
                "requested reference error {target} is below what the geometry allows; achieved {floor}"
            ));
        }
        0.0
    } else if ceiling <= target {
        if ceiling < target {
            warnings.push(format!(
                "requested reference error {target} exceeds the maximum reachable {ceiling}"
            ));
        }
        max_angle
    } else {
        // error grows with the angle; keep the largest angle not above target
        let (mut lo, mut hi) = (0.0, max_angle);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            if cal_error(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let achieved = cal_error(angle);
    for w in &warnings {
        log::warn!("{w}");
    }

    let reference = reference_predictor(spec, angle);
    let meta = |tag: SplitTag| DumpMeta {
        epoch: Some(spec.epoch),
        layer: Some(spec.layer.clone()),
        split_tag: Some(tag),
        class_names: spec.class_names.clone(),
    };
    let build = |x: Array2<f32>, y: Vec<u32>| -> Result<FeatureDataset> {
        let pred = predict(&reference, x.view())?;
        FeatureDataset::new(x, y, Some(pred), spec.num_classes as u32)
    };
    let pool = build(train_x, train_y)?.with_meta(meta(SplitTag::ProbeTrain));
    let split = split_dataset(&pool, spec.probe_fraction, spec.seed)?;
    let mut probe_eval = split.probe_eval;
    probe_eval.meta = meta(SplitTag::ProbeEval);
    let validation = build(val_x, val_y)?.with_meta(meta(SplitTag::Validation));

    Ok(SynthOutput {
        probe_train: split.probe_train,
        probe_eval,
        validation,
        reference,
        mixing_angle: angle,
        achieved_error_rate: achieved,
        warnings,
    })
}

/// Probe settings written into synthetic manifests. The library defaults
/// target standardized deep features; synthetic clusters sit several units
/// from the origin and converge much faster with Adam.
pub fn synth_probe_settings() -> ProbeConfigPatch {
    ProbeConfigPatch {
        learning_rate: Some(0.01),
        batch_size: Some(64),
        max_epochs: Some(200),
        optimizer: Some(Optimizer::Adam),
        ..Default::default()
    }
}

/// Paths written by [`write_synth`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub probe_train: PathBuf,
    pub probe_eval: PathBuf,
    pub validation: PathBuf,
    pub grouping: PathBuf,
    pub manifest: PathBuf,
}

/// Generates the dataset and writes the three dumps, the planted grouping
/// and a ready-to-run manifest (paths relative to `dir`) into `dir`.
pub fn write_synth(spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<(SynthOutput, SynthFiles)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = synth_dataset(spec)?;
    let stem = format!("e{}_{}", spec.epoch, spec.layer);
    let names = [
        format!("{stem}_probe_train.gfd"),
        format!("{stem}_probe_eval.gfd"),
        format!("{stem}_validation.gfd"),
    ];
    write_feature_dump(&out.probe_train, dir.join(&names[0]))?;
    write_feature_dump(&out.probe_eval, dir.join(&names[1]))?;
    write_feature_dump(&out.validation, dir.join(&names[2]))?;
    write_grouping(&spec.grouping(), dir.join("planted.csv"))?;

    let manifest = RunManifest {
        entries: vec![ManifestEntry {
            epoch: spec.epoch,
            layer: spec.layer.clone(),
            probe_train: names[0].clone().into(),
            probe_eval: names[1].clone().into(),
            validation: Some(names[2].clone().into()),
        }],
        lambdas: vec![0.0, 1.0],
        seeds: vec![0],
        groupings: vec!["planted.csv".into()],
        probe_hyperparams: [("*".to_string(), synth_probe_settings())].into(),
        class_names: spec.class_names.clone(),
        k: 5.min(spec.num_classes),
        louvain: Default::default(),
        warm_start: false,
        export: None,
    };
    write_manifest(&manifest, dir.join("manifest.json"))?;
    let files = SynthFiles {
        probe_train: dir.join(&names[0]),
        probe_eval: dir.join(&names[1]),
        validation: dir.join(&names[2]),
        grouping: dir.join("planted.csv"),
        manifest: dir.join("manifest.json"),
    };
    Ok((out, files))
}
