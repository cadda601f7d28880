//! Synthetic spectra, scenes and survey points with known ground truth.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::ccf::TrainingSet;
use crate::evalmap::ClassMap;
use crate::geodata::{GeoTransform, GroundTruthMask, LabeledPoint, MaskValue, Scene};
use crate::pipeline::{MaterialClass, SpectralSample};

/// Number of Sentinel-2 bands.
pub const N_BANDS: usize = 13;

/// Upper clamp for generated reflectance.
pub const MAX_REFLECTANCE: f64 = 1.2;

pub const NODATA: u16 = 65535;

const DEFAULT_PROTOTYPES: &str = include_str!("../data/prototypes.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("prototype table, record {record}: {message}")]
    Prototype { record: usize, message: String },
    #[error("layout has {actual} cells for a {width}x{height} scene")]
    Layout {
        width: usize,
        height: usize,
        actual: usize,
    },
    #[error("unknown_fraction must lie in [0, 1], got {0}")]
    UnknownFraction(f64),
    #[error("no prototype for class {0}")]
    MissingPrototype(MaterialClass),
    #[error("class {class} has {available} pixels but {requested} points were requested")]
    TooFewPixels {
        class: MaterialClass,
        available: usize,
        requested: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototype {
    pub class: MaterialClass,
    pub mean_spectrum: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl ClassPrototype {
    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.mean_spectrum
            .iter()
            .zip(&self.stddev)
            .map(|(&m, &s)| {
                let z: f64 = StandardNormal.sample(rng);
                (m + s * z).clamp(0.0, MAX_REFLECTANCE)
            })
            .collect()
    }
}

/// The shipped four-class prototype fixture.
pub fn default_prototypes() -> Vec<ClassPrototype> {
    parse_prototypes(DEFAULT_PROTOTYPES).expect("shipped prototype table is valid")
}

/// Parse a prototype table: `class,stat,b01..b13` rows where `stat` is
/// `mean` or `stddev`; `#` starts a comment line.
pub fn parse_prototypes(text: &str) -> Result<Vec<ClassPrototype>, SynthError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(text.as_bytes());
    let mut means: Vec<(MaterialClass, Vec<f64>)> = Vec::new();
    let mut stds: Vec<(MaterialClass, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let err = |message: String| SynthError::Prototype {
            record: i + 1,
            message,
        };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if rec.len() != N_BANDS + 2 {
            return Err(err(format!(
                "expected {} fields, found {}",
                N_BANDS + 2,
                rec.len()
            )));
        }
        let class = MaterialClass::ALL
            .into_iter()
            .find(|c| c.name() == &rec[0])
            .ok_or_else(|| err(format!("unknown class {:?}", &rec[0])))?;
        let values = (2..rec.len())
            .map(|j| {
                rec[j]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad value {:?}", &rec[j])))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        match &rec[1] {
            "mean" => {
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(err("means must lie in [0, 1]".into()));
                }
                means.push((class, values));
            }
            "stddev" => {
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(err("stddev must be > 0".into()));
                }
                stds.push((class, values));
            }
            other => return Err(err(format!("stat must be mean or stddev, found {other:?}"))),
        }
    }
    means
        .into_iter()
        .enumerate()
        .map(|(i, (class, mean_spectrum))| {
            let stddev = stds
                .iter()
                .find(|(c, _)| *c == class)
                .map(|(_, s)| s.clone())
                .ok_or(SynthError::Prototype {
                    record: i + 1,
                    message: format!("class {class} has no stddev row"),
                })?;
            Ok(ClassPrototype {
                class,
                mean_spectrum,
                stddev,
            })
        })
        .collect()
}

/// `n_per_class` noisy draws from every prototype, clamped to
/// `[0, MAX_REFLECTANCE]`.
pub fn generate_samples(
    prototypes: &[ClassPrototype],
    n_per_class: usize,
    seed: u64,
) -> Vec<SpectralSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(prototypes.len() * n_per_class);
    for p in prototypes {
        for i in 0..n_per_class {
            out.push(SpectralSample {
                features: p.draw(&mut rng),
                label: Some(p.class),
                provenance: format!("synth-{}-{i:05}", p.class),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Environment, metal, shingles, thatch in the four quadrants
    /// (top-left, top-right, bottom-left, bottom-right).
    #[default]
    Quadrants,
    /// 8×8-pixel blocks of mixed materials over an environment background.
    Patches,
}

impl std::str::FromStr for Layout {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadrants" => Ok(Layout::Quadrants),
            "patches" => Ok(Layout::Patches),
            other => Err(format!(
                "unknown layout {other:?} (expected quadrants or patches)"
            )),
        }
    }
}

/// Row-major class grid for a layout.
pub fn layout_grid(layout: Layout, width: usize, height: usize) -> Vec<MaterialClass> {
    use MaterialClass::*;
    let mut grid = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let class = match layout {
                Layout::Quadrants => {
                    let right = col >= width / 2;
                    let bottom = row >= height / 2;
                    match (bottom, right) {
                        (false, false) => Environment,
                        (false, true) => Metal,
                        (true, false) => Shingles,
                        (true, true) => Thatch,
                    }
                }
                Layout::Patches => {
                    let (bx, by) = (col / 8, row / 8);
                    [
                        Environment,
                        Metal,
                        Environment,
                        Shingles,
                        Environment,
                        Thatch,
                    ][(bx * 5 + by * 3) % 6]
                }
            };
            grid.push(class);
        }
    }
    grid
}

/// Geotransform of generated scenes: roughly 10 m pixels in degrees.
pub fn default_geotransform() -> GeoTransform {
    GeoTransform([30.0, 1e-4, 0.0, -1.0, 0.0, -1e-4])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: Scene,
    pub mask: GroundTruthMask,
    pub truth: ClassMap,
}

/// Render a class grid into a 13-band scene plus a settlement mask with
/// `unknown_fraction` of its pixels set to unknown.
pub fn generate_scene(
    width: usize,
    height: usize,
    layout: &[MaterialClass],
    prototypes: &[ClassPrototype],
    unknown_fraction: f64,
    seed: u64,
) -> Result<SyntheticScene, SynthError> {
    if layout.len() != width * height {
        return Err(SynthError::Layout {
            width,
            height,
            actual: layout.len(),
        });
    }
    if !(0.0..=1.0).contains(&unknown_fraction) {
        return Err(SynthError::UnknownFraction(unknown_fraction));
    }
    let lookup = |c: MaterialClass| {
        prototypes
            .iter()
            .find(|p| p.class == c)
            .ok_or(SynthError::MissingPrototype(c))
    };

    let n_pixels = width * height;
    let n_bands = prototypes
        .first()
        .map_or(N_BANDS, |p| p.mean_spectrum.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0u16; n_pixels * n_bands];
    for (pixel, &class) in layout.iter().enumerate() {
        let spectrum = lookup(class)?.draw(&mut rng);
        for (b, v) in spectrum.iter().enumerate() {
            data[b * n_pixels + pixel] = (v * 10000.0).round() as u16;
        }
    }
    let scene = Scene::new(width, height, n_bands, default_geotransform(), NODATA, data)
        .expect("generated scene is consistent");

    let mut values: Vec<MaskValue> = layout
        .iter()
        .map(|&c| {
            if c == MaterialClass::Environment {
                MaskValue::Environment
            } else {
                MaskValue::Informal
            }
        })
        .collect();
    let n_unknown = (unknown_fraction * n_pixels as f64).round() as usize;
    for i in sample(&mut rng, n_pixels, n_unknown) {
        values[i] = MaskValue::Unknown;
    }

    Ok(SyntheticScene {
        scene,
        mask: GroundTruthMask {
            width,
            height,
            values,
        },
        truth: ClassMap {
            width,
            height,
            classes: layout.to_vec(),
            valid: vec![true; n_pixels],
        },
    })
}

/// Survey answer used for synthetic points of each class.
fn survey_answer(class: MaterialClass, i: usize) -> &'static str {
    match class {
        MaterialClass::Environment => "environment",
        MaterialClass::Metal => "Metal, tin or zinc",
        MaterialClass::Shingles if i.is_multiple_of(2) => "Shingles",
        MaterialClass::Shingles => "Asbestos",
        MaterialClass::Thatch => "Thatch or grass",
    }
}

/// Survey points for the roof classes and a separate list of environment
/// points, placed at random positions inside randomly chosen pixels of
/// each class. `counts` is indexed by class code.
pub fn generate_points(
    truth: &ClassMap,
    geotransform: &GeoTransform,
    counts: [usize; 4],
    seed: u64,
) -> Result<(Vec<LabeledPoint>, Vec<LabeledPoint>), SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut survey = Vec::new();
    let mut environment = Vec::new();
    for class in MaterialClass::ALL {
        let pixels: Vec<usize> = (0..truth.classes.len())
            .filter(|&i| truth.valid[i] && truth.classes[i] == class)
            .collect();
        let requested = counts[class.code()];
        if pixels.len() < requested {
            return Err(SynthError::TooFewPixels {
                class,
                available: pixels.len(),
                requested,
            });
        }
        let mut picked = sample(&mut rng, pixels.len(), requested).into_vec();
        picked.sort_unstable();
        for (i, k) in picked.into_iter().enumerate() {
            let pixel = pixels[k];
            let (col, row) = (pixel % truth.width, pixel / truth.width);
            let (u, v): (f64, f64) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
            let (lon, lat) = geotransform.apply(col as f64 + u, row as f64 + v);
            let point = LabeledPoint {
                source_id: format!("{}-{i:04}", class.name()),
                lon,
                lat,
                survey_class: survey_answer(class, i).to_string(),
            };
            if class == MaterialClass::Environment {
                environment.push(point);
            } else {
                survey.push(point);
            }
        }
    }
    Ok((survey, environment))
}

/// Parameters of [`rotated_two_class_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedParams {
    pub dims: usize,
    /// Distance between the two class means along the boundary normal.
    pub separation: f64,
    /// Standard deviation along the boundary and in the nuisance dimensions.
    pub spread: f64,
    /// Standard deviation across the boundary.
    pub noise: f64,
}

impl Default for RotatedParams {
    fn default() -> Self {
        RotatedParams {
            dims: N_BANDS,
            separation: 1.0,
            spread: 2.0,
            noise: 0.15,
        }
    }
}

/// Unit normal of the class boundary in the plane of features 0 and 1.
pub fn boundary_normal(angle_degrees: f64) -> (f64, f64) {
    let a = angle_degrees.to_radians();
    (a.cos(), a.sin())
}

/// Two classes split by a hyperplane whose normal lies at `angle_degrees`
/// from feature 0 within the plane of features 0 and 1. At angle 0 the
/// boundary is axis-aligned. Labels alternate 0, 1, 0, ...
pub fn rotated_two_class(n: usize, angle_degrees: f64, seed: u64) -> TrainingSet {
    rotated_two_class_with(n, angle_degrees, RotatedParams::default(), seed)
}

pub fn rotated_two_class_with(
    n: usize,
    angle_degrees: f64,
    params: RotatedParams,
    seed: u64,
) -> TrainingSet {
    assert!(
        params.dims >= 2,
        "rotated_two_class needs at least two dimensions"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, s) = boundary_normal(angle_degrees);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let sign = if label == 1 { 1.0 } else { -1.0 };
        let mut z = |sd: f64| -> f64 {
            let v: f64 = StandardNormal.sample(&mut rng);
            sd * v
        };
        let across = sign * params.separation / 2.0 + z(params.noise);
        let along = z(params.spread);
        let mut x = Vec::with_capacity(params.dims);
        // rotate (across, along) so "across" follows the boundary normal
        x.push(c * across - s * along);
        x.push(s * across + c * along);
        for _ in 2..params.dims {
            x.push(z(params.spread));
        }
        features.push(x);
        labels.push(label);
    }
    TrainingSet::new(
        &features,
        &labels,
        vec!["negative".into(), "positive".into()],
    )
    .expect("generated rows are consistent")
}
