//! From survey points and a scene to a clean, balanced training set.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ccf::{ForestError, TrainingSet};
use crate::geodata::{geo_to_pixel, pixel_spectrum, GeoError, LabeledPoint, Scene};

/// Roof-material classes. The integer codes index class distributions and
/// the rendering palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MaterialClass {
    Environment = 0,
    Metal = 1,
    Shingles = 2,
    Thatch = 3,
}

impl MaterialClass {
    pub const ALL: [MaterialClass; 4] = [
        MaterialClass::Environment,
        MaterialClass::Metal,
        MaterialClass::Shingles,
        MaterialClass::Thatch,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MaterialClass::Environment => "environment",
            MaterialClass::Metal => "metal",
            MaterialClass::Shingles => "shingles",
            MaterialClass::Thatch => "thatch",
        }
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for MaterialClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Survey answer outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SurveyMapping {
    Accepted(MaterialClass),
    Rejected(String),
}

/// Map a raw roof-material survey answer onto the four material classes.
///
/// Matching is case-insensitive on the trimmed answer. Answers outside the
/// four-class scheme are rejected with a reason.
pub fn map_survey_class(answer: &str) -> SurveyMapping {
    let key = answer.trim().to_lowercase();
    match key.as_str() {
        "metal, tin or zinc" | "metal" => SurveyMapping::Accepted(MaterialClass::Metal),
        "shingles" | "asbestos" => SurveyMapping::Accepted(MaterialClass::Shingles),
        "thatch or grass" | "thatch" => SurveyMapping::Accepted(MaterialClass::Thatch),
        "tiles"
        | "plastic sheets"
        | "multiple materials"
        | "some other material"
        | "could not tell/could not see" => SurveyMapping::Rejected(format!(
            "survey answer {:?} is outside the four-class scheme",
            answer.trim()
        )),
        _ => SurveyMapping::Rejected(format!("unrecognised survey answer {:?}", answer.trim())),
    }
}

/// Level-1C digital number to top-of-atmosphere reflectance.
#[inline]
pub fn normalize_reflectance(raw: u16) -> f64 {
    f64::from(raw) / 10000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSample {
    pub features: Vec<f64>,
    pub label: Option<MaterialClass>,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    SurveyClass,
    OutOfBounds,
    Nodata,
    EmptyAcquisition,
}

impl RejectReason {
    pub const ALL: [RejectReason; 4] = [
        RejectReason::SurveyClass,
        RejectReason::OutOfBounds,
        RejectReason::Nodata,
        RejectReason::EmptyAcquisition,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RejectReason::SurveyClass => "survey_class",
            RejectReason::OutOfBounds => "out_of_bounds",
            RejectReason::Nodata => "nodata",
            RejectReason::EmptyAcquisition => "empty_acquisition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub source_id: String,
    pub reason: RejectReason,
    pub detail: String,
}

/// Per-reason rejection counts plus per-class accepted counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub n_points: usize,
    pub accepted: BTreeMap<MaterialClass, usize>,
    pub rejections: Vec<Rejection>,
}

impl RejectionReport {
    pub fn count(&self, reason: RejectReason) -> usize {
        self.rejections
            .iter()
            .filter(|r| r.reason == reason)
            .count()
    }

    pub fn n_accepted(&self) -> usize {
        self.accepted.values().sum()
    }

    pub fn merge(&mut self, other: RejectionReport) {
        self.n_points += other.n_points;
        for (c, n) in other.accepted {
            *self.accepted.entry(c).or_default() += n;
        }
        self.rejections.extend(other.rejections);
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>8}", "category", "count");
        let _ = writeln!(out, "{:<28} {:>8}", "points", self.n_points);
        for c in MaterialClass::ALL {
            let n = self.accepted.get(&c).copied().unwrap_or(0);
            let _ = writeln!(out, "{:<28} {:>8}", format!("accepted_{c}"), n);
        }
        for r in RejectReason::ALL {
            let _ = writeln!(
                out,
                "{:<28} {:>8}",
                format!("rejected_{}", r.key()),
                self.count(r)
            );
        }
        out
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "points = {}", self.n_points);
        let _ = writeln!(out, "accepted = {}", self.n_accepted());
        for c in MaterialClass::ALL {
            let n = self.accepted.get(&c).copied().unwrap_or(0);
            let _ = writeln!(out, "accepted_{c} = {n}");
        }
        for r in RejectReason::ALL {
            let _ = writeln!(out, "rejected_{} = {}", r.key(), self.count(r));
        }
        out
    }
}

/// Extract labeled spectra for survey points, labeling each through
/// [`map_survey_class`].
pub fn extract_samples(
    scene: &Scene,
    points: &[LabeledPoint],
) -> Result<(Vec<SpectralSample>, RejectionReport), GeoError> {
    extract_with(scene, points, |p| map_survey_class(&p.survey_class))
}

/// Extract spectra for points whose class is known up front, such as
/// analyst-chosen environment locations. The survey column is ignored.
pub fn extract_samples_as(
    scene: &Scene,
    points: &[LabeledPoint],
    class: MaterialClass,
) -> Result<(Vec<SpectralSample>, RejectionReport), GeoError> {
    extract_with(scene, points, |_| SurveyMapping::Accepted(class))
}

fn extract_with(
    scene: &Scene,
    points: &[LabeledPoint],
    classify: impl Fn(&LabeledPoint) -> SurveyMapping,
) -> Result<(Vec<SpectralSample>, RejectionReport), GeoError> {
    let mut samples = Vec::new();
    let mut report = RejectionReport {
        n_points: points.len(),
        ..Default::default()
    };
    let mut reject = |p: &LabeledPoint, reason, detail: String| {
        report.rejections.push(Rejection {
            source_id: p.source_id.clone(),
            reason,
            detail,
        })
    };
    let mut accepted: BTreeMap<MaterialClass, usize> = BTreeMap::new();

    for p in points {
        let class = match classify(p) {
            SurveyMapping::Accepted(c) => c,
            SurveyMapping::Rejected(why) => {
                reject(p, RejectReason::SurveyClass, why);
                continue;
            }
        };
        let Some((col, row)) = geo_to_pixel(scene, p.lon, p.lat)? else {
            reject(
                p,
                RejectReason::OutOfBounds,
                format!("({}, {}) is off the raster", p.lon, p.lat),
            );
            continue;
        };
        let spectrum = pixel_spectrum(scene, col, row)?;
        if spectrum.has_nodata {
            reject(
                p,
                RejectReason::Nodata,
                format!("pixel ({col}, {row}) has a nodata band"),
            );
            continue;
        }
        if spectrum.values.iter().all(|&v| v == 0) {
            reject(
                p,
                RejectReason::EmptyAcquisition,
                format!("pixel ({col}, {row}) is all zero"),
            );
            continue;
        }
        *accepted.entry(class).or_default() += 1;
        samples.push(SpectralSample {
            features: spectrum
                .values
                .iter()
                .map(|&v| normalize_reflectance(v))
                .collect(),
            label: Some(class),
            provenance: p.source_id.clone(),
        });
    }
    report.accepted = accepted;
    Ok((samples, report))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("class {class} has {available} samples, fewer than the {requested} requested per class (counts: {counts})")]
    Imbalance {
        class: MaterialClass,
        available: usize,
        requested: usize,
        counts: String,
    },
    #[error("sample {0:?} has no label")]
    Unlabeled(String),
}

fn class_counts(samples: &[SpectralSample]) -> BTreeMap<MaterialClass, usize> {
    let mut counts: BTreeMap<MaterialClass, usize> =
        MaterialClass::ALL.iter().map(|&c| (c, 0)).collect();
    for s in samples {
        if let Some(c) = s.label {
            *counts.entry(c).or_default() += 1;
        }
    }
    counts
}

/// Draw exactly `n_per_class` samples of every material class, uniformly
/// without replacement. Output is sorted by class, then provenance.
pub fn balance(
    samples: &[SpectralSample],
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<SpectralSample>, PipelineError> {
    if let Some(s) = samples.iter().find(|s| s.label.is_none()) {
        return Err(PipelineError::Unlabeled(s.provenance.clone()));
    }
    let counts = class_counts(samples);
    if let Some((&class, &available)) = counts.iter().find(|(_, &n)| n < n_per_class) {
        let counts = counts
            .iter()
            .map(|(c, n)| format!("{c}={n}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(PipelineError::Imbalance {
            class,
            available,
            requested: n_per_class,
            counts,
        });
    }

    let mut out = Vec::with_capacity(n_per_class * MaterialClass::ALL.len());
    for class in MaterialClass::ALL {
        let mut pool: Vec<&SpectralSample> =
            samples.iter().filter(|s| s.label == Some(class)).collect();
        // stable: equal provenance keeps input order
        pool.sort_by(|a, b| a.provenance.cmp(&b.provenance));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class.code() as u64);
        let mut picked: Vec<usize> = sample(&mut rng, pool.len(), n_per_class).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    Ok(out)
}

/// Training set over the four material classes.
pub fn to_training_set(samples: &[SpectralSample]) -> Result<TrainingSet, ForestError> {
    let features: Vec<Vec<f64>> = samples.iter().map(|s| s.features.clone()).collect();
    let mut labels = Vec::with_capacity(samples.len());
    for (index, s) in samples.iter().enumerate() {
        match s.label {
            Some(c) => labels.push(c.code()),
            None => {
                return Err(ForestError::LabelOutOfRange {
                    index,
                    label: usize::MAX,
                    n_classes: MaterialClass::ALL.len(),
                })
            }
        }
    }
    TrainingSet::new(&features, &labels, MaterialClass::names())
}
