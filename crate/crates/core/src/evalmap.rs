//! Whole-scene classification, palette rendering and scoring against
//! partial ground-truth masks.

use std::fmt::Write as _;
use std::io::{Cursor, Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::ccf::{Forest, ForestError};
use crate::geodata::{GroundTruthMask, MaskValue, Scene};
use crate::pipeline::{normalize_reflectance, MaterialClass};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("forest expects {expected} features but the scene has {actual} bands")]
    BandCount { expected: usize, actual: usize },
    #[error("forest has {0} classes; material maps need exactly 4")]
    ClassCount(usize),
    #[error("dimension mismatch: map is {map_w}x{map_h}, mask is {mask_w}x{mask_h}")]
    Dimensions {
        map_w: usize,
        map_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error("invalid class grid: {0}")]
    Grid(String),
    #[error("invalid class map image: {0}")]
    Image(String),
    #[error("{0} and {1} label sequences differ in length")]
    LabelLength(usize, usize),
}

/// Per-pixel material codes, row-major. Invalid pixels carry
/// `Environment` and are excluded from metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<MaterialClass>,
    pub valid: Vec<bool>,
}

impl ClassMap {
    pub fn filled(width: usize, height: usize, class: MaterialClass) -> Self {
        ClassMap {
            width,
            height,
            classes: vec![class; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> Option<MaterialClass> {
        let i = row * self.width + col;
        self.valid[i].then_some(self.classes[i])
    }
}

/// Classify every pixel of `scene`. Pixels with a nodata band are invalid.
pub fn classify_scene(forest: &Forest, scene: &Scene) -> Result<ClassMap, EvalError> {
    if forest.n_features != scene.n_bands {
        return Err(EvalError::BandCount {
            expected: forest.n_features,
            actual: scene.n_bands,
        });
    }
    if forest.n_classes() != MaterialClass::ALL.len() {
        return Err(EvalError::ClassCount(forest.n_classes()));
    }
    let width = scene.width;
    let rows: Vec<Vec<Option<MaterialClass>>> = (0..scene.height)
        .into_par_iter()
        .map(|row| {
            let mut spectrum = vec![0.0; scene.n_bands];
            (0..width)
                .map(|col| {
                    let pixel = row * width + col;
                    for (b, v) in spectrum.iter_mut().enumerate() {
                        let raw = scene.raw(b, pixel);
                        if raw == scene.nodata {
                            return Ok(None);
                        }
                        *v = normalize_reflectance(raw);
                    }
                    let code = forest.predict_class(&spectrum)?;
                    Ok(MaterialClass::from_code(code))
                })
                .collect::<Result<Vec<_>, ForestError>>()
        })
        .collect::<Result<_, _>>()?;

    let mut map = ClassMap::filled(width, scene.height, MaterialClass::Environment);
    for (i, p) in rows.into_iter().flatten().enumerate() {
        match p {
            Some(c) => map.classes[i] = c,
            None => map.valid[i] = false,
        }
    }
    Ok(map)
}

/// RGB colour of each material, indexed by class code.
pub const PALETTE: [[u8; 3]; 4] = [
    [0, 0, 0],     // environment
    [255, 255, 0], // metal
    [0, 0, 255],   // shingles
    [255, 0, 0],   // thatch
];
pub const INVALID_COLOR: [u8; 3] = [64, 64, 64];
const INVALID_INDEX: u8 = 4;

fn palette_bytes() -> Vec<u8> {
    PALETTE
        .iter()
        .chain(std::iter::once(&INVALID_COLOR))
        .flatten()
        .copied()
        .collect()
}

/// Encode the map as an indexed-colour PNG using [`PALETTE`].
pub fn render_png(map: &ClassMap) -> Vec<u8> {
    let indices: Vec<u8> = map
        .classes
        .iter()
        .zip(&map.valid)
        .map(|(c, &ok)| if ok { c.code() as u8 } else { INVALID_INDEX })
        .collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, map.width as u32, map.height as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette_bytes());
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&indices).expect("in-memory PNG data");
    }
    out
}

/// Decode a PNG produced by [`render_png`], or any RGB/RGBA/indexed image
/// whose colours are all palette colours.
pub fn decode_png(bytes: &[u8]) -> Result<ClassMap, EvalError> {
    let img = |e: png::DecodingError| EvalError::Image(e.to_string());
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(img)?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader.next_frame(&mut buf).map_err(img)?;
    let channels = match frame.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        other => {
            return Err(EvalError::Image(format!(
                "unsupported colour type {other:?}"
            )))
        }
    };
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(EvalError::Image(format!(
            "unsupported bit depth {:?}",
            frame.bit_depth
        )));
    }
    let (width, height) = (frame.width as usize, frame.height as usize);
    let mut map = ClassMap::filled(width, height, MaterialClass::Environment);
    for row in 0..height {
        for col in 0..width {
            let at = row * frame.line_size + col * channels;
            let rgb = [buf[at], buf[at + 1], buf[at + 2]];
            let i = row * width + col;
            if rgb == INVALID_COLOR {
                map.valid[i] = false;
            } else {
                let code = PALETTE.iter().position(|p| *p == rgb).ok_or_else(|| {
                    EvalError::Image(format!(
                        "pixel ({col}, {row}) has non-palette colour {rgb:?}"
                    ))
                })?;
                map.classes[i] = MaterialClass::ALL[code];
            }
        }
    }
    Ok(map)
}

const GRID_MAGIC: &str = "ccfmap-classgrid";
const GRID_INVALID: u8 = 255;

/// Raw class grid: one ASCII header line
/// `ccfmap-classgrid 1 <width> <height>` followed by `width * height`
/// bytes in row-major order (class code, or 255 for invalid pixels).
pub fn write_class_grid<W: Write>(map: &ClassMap, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{GRID_MAGIC} 1 {} {}", map.width, map.height)?;
    let bytes: Vec<u8> = map
        .classes
        .iter()
        .zip(&map.valid)
        .map(|(c, &ok)| if ok { c.code() as u8 } else { GRID_INVALID })
        .collect();
    w.write_all(&bytes)
}

pub fn read_class_grid<R: Read>(mut r: R) -> Result<ClassMap, EvalError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| EvalError::Grid(e.to_string()))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| EvalError::Grid("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| EvalError::Grid("header is not text".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, version, w, h] = fields[..] else {
        return Err(EvalError::Grid(format!("malformed header {header:?}")));
    };
    if magic != GRID_MAGIC {
        return Err(EvalError::Grid(format!("bad magic {magic:?}")));
    }
    if version != "1" {
        return Err(EvalError::Grid(format!("unsupported version {version}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| EvalError::Grid(format!("bad dimension {s:?}")))
    };
    let (width, height) = (parse(w)?, parse(h)?);
    let body = &bytes[nl + 1..];
    if body.len() != width * height {
        return Err(EvalError::Grid(format!(
            "expected {} pixel bytes, found {}",
            width * height,
            body.len()
        )));
    }
    let mut map = ClassMap::filled(width, height, MaterialClass::Environment);
    for (i, &b) in body.iter().enumerate() {
        if b == GRID_INVALID {
            map.valid[i] = false;
        } else {
            map.classes[i] = MaterialClass::from_code(b as usize)
                .ok_or_else(|| EvalError::Grid(format!("pixel {i} has class code {b}")))?;
        }
    }
    Ok(map)
}

/// Agreement of a material map with a binary settlement mask.
///
/// A pixel counts as a predicted settlement when its material is anything
/// other than environment. Rates are `None` when their denominator is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub settlement_recall: Option<f64>,
    pub environment_specificity: Option<f64>,
    /// Indexed by class code, over valid pixels of the map.
    pub per_class_pixel_counts: [usize; 4],
    pub n_evaluated: usize,
    /// Pixels skipped because the mask is unknown or the map pixel is invalid.
    pub n_unknown_skipped: usize,
    pub n_informal: usize,
    pub n_environment: usize,
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<26} {:>12}", "metric", "value");
        let _ = writeln!(
            out,
            "{:<26} {:>12}",
            "settlement_recall",
            fmt_rate(self.settlement_recall)
        );
        let _ = writeln!(
            out,
            "{:<26} {:>12}",
            "environment_specificity",
            fmt_rate(self.environment_specificity)
        );
        let _ = writeln!(out, "{:<26} {:>12}", "evaluated_pixels", self.n_evaluated);
        let _ = writeln!(
            out,
            "{:<26} {:>12}",
            "skipped_pixels", self.n_unknown_skipped
        );
        let _ = writeln!(out, "{:<26} {:>12}", "mask_informal", self.n_informal);
        let _ = writeln!(out, "{:<26} {:>12}", "mask_environment", self.n_environment);
        for c in MaterialClass::ALL {
            let _ = writeln!(
                out,
                "{:<26} {:>12}",
                format!("predicted_{c}"),
                self.per_class_pixel_counts[c.code()]
            );
        }
        out
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "settlement_recall = {}",
            fmt_rate(self.settlement_recall)
        );
        let _ = writeln!(
            out,
            "environment_specificity = {}",
            fmt_rate(self.environment_specificity)
        );
        let _ = writeln!(out, "n_evaluated = {}", self.n_evaluated);
        let _ = writeln!(out, "n_unknown_skipped = {}", self.n_unknown_skipped);
        let _ = writeln!(out, "n_informal = {}", self.n_informal);
        let _ = writeln!(out, "n_environment = {}", self.n_environment);
        for c in MaterialClass::ALL {
            let _ = writeln!(
                out,
                "predicted_{c} = {}",
                self.per_class_pixel_counts[c.code()]
            );
        }
        out
    }
}

pub fn evaluate_against_mask(
    map: &ClassMap,
    mask: &GroundTruthMask,
) -> Result<EvalReport, EvalError> {
    if map.width != mask.width || map.height != mask.height {
        return Err(EvalError::Dimensions {
            map_w: map.width,
            map_h: map.height,
            mask_w: mask.width,
            mask_h: mask.height,
        });
    }
    let mut per_class = [0usize; 4];
    let (mut informal, mut informal_hit) = (0usize, 0usize);
    let (mut environment, mut environment_hit) = (0usize, 0usize);
    let mut skipped = 0usize;
    for ((&class, &valid), &truth) in map.classes.iter().zip(&map.valid).zip(&mask.values) {
        if valid {
            per_class[class.code()] += 1;
        }
        if !valid || truth == MaskValue::Unknown {
            skipped += 1;
            continue;
        }
        let settlement = class != MaterialClass::Environment;
        match truth {
            MaskValue::Informal => {
                informal += 1;
                informal_hit += usize::from(settlement);
            }
            MaskValue::Environment => {
                environment += 1;
                environment_hit += usize::from(!settlement);
            }
            MaskValue::Unknown => unreachable!(),
        }
    }
    let rate = |hit: usize, total: usize| (total > 0).then(|| hit as f64 / total as f64);
    Ok(EvalReport {
        settlement_recall: rate(informal_hit, informal),
        environment_specificity: rate(environment_hit, environment),
        per_class_pixel_counts: per_class,
        n_evaluated: informal + environment,
        n_unknown_skipped: skipped,
        n_informal: informal,
        n_environment: environment,
    })
}

/// Rows are truth, columns prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: usize = (0..self.counts.len()).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total() as f64
    }

    /// Fraction of class `c` truths predicted as `c`.
    pub fn recall(&self, c: usize) -> f64 {
        let row: usize = self.counts[c].iter().sum();
        self.counts[c][c] as f64 / row as f64
    }

    /// Fraction of `c` predictions that are truly `c`.
    pub fn precision(&self, c: usize) -> f64 {
        let col: usize = self.counts.iter().map(|r| r[c]).sum();
        self.counts[c][c] as f64 / col as f64
    }
}

pub fn confusion_matrix(
    predicted: &[MaterialClass],
    truth: &[MaterialClass],
) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LabelLength(predicted.len(), truth.len()));
    }
    let mut counts = vec![vec![0usize; 4]; 4];
    for (p, t) in predicted.iter().zip(truth) {
        counts[t.code()][p.code()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use MaterialClass::*;

    #[test]
    fn palette_is_a_bijection() {
        let colors = palette_bytes();
        let mut seen: Vec<&[u8]> = colors.chunks(3).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 5);
        assert_eq!(PALETTE[Metal.code()], [255, 255, 0]);
        assert_eq!(PALETTE[Shingles.code()], [0, 0, 255]);
        assert_eq!(PALETTE[Thatch.code()], [255, 0, 0]);
        assert_eq!(PALETTE[Environment.code()], [0, 0, 0]);
    }

    #[test]
    fn render_solid_metal() {
        let map = ClassMap::filled(3, 2, Metal);
        let back = decode_png(&render_png(&map)).unwrap();
        assert_eq!(back, map);
    }

    #[test]
    fn render_all_invalid() {
        let mut map = ClassMap::filled(2, 2, Environment);
        map.valid = vec![false; 4];
        let png_bytes = render_png(&map);
        let mut dec = png::Decoder::new(Cursor::new(&png_bytes));
        dec.set_transformations(png::Transformations::EXPAND);
        let mut r = dec.read_info().unwrap();
        let mut buf = vec![0; r.output_buffer_size()];
        r.next_frame(&mut buf).unwrap();
        assert!(buf.chunks(3).all(|px| px == INVALID_COLOR));
        assert_eq!(decode_png(&png_bytes).unwrap(), map);
    }

    #[test]
    fn class_grid_round_trip() {
        let mut map = ClassMap::filled(3, 2, Shingles);
        map.classes[1] = Thatch;
        map.valid[4] = false;
        map.classes[4] = Environment;
        let mut buf = Vec::new();
        write_class_grid(&map, &mut buf).unwrap();
        assert_eq!(read_class_grid(buf.as_slice()).unwrap(), map);
        buf.pop();
        assert!(matches!(
            read_class_grid(buf.as_slice()),
            Err(EvalError::Grid(_))
        ));
    }

    fn mask(values: &[MaskValue], width: usize) -> GroundTruthMask {
        GroundTruthMask {
            width,
            height: values.len() / width,
            values: values.to_vec(),
        }
    }

    #[test]
    fn perfect_prediction_scores_one() {
        use MaskValue as M;
        let m = mask(&[M::Informal, M::Environment, M::Informal, M::Unknown], 2);
        let mut map = ClassMap::filled(2, 2, Environment);
        map.classes[0] = Metal;
        map.classes[2] = Thatch;
        let r = evaluate_against_mask(&map, &m).unwrap();
        assert_eq!(r.settlement_recall, Some(1.0));
        assert_eq!(r.environment_specificity, Some(1.0));
        assert_eq!(r.n_evaluated + r.n_unknown_skipped, 4);
        assert_eq!(r.n_unknown_skipped, 1);
    }

    #[test]
    fn all_environment_prediction_has_zero_recall() {
        use MaskValue as M;
        let m = mask(
            &[M::Informal, M::Informal, M::Environment, M::Environment],
            4,
        );
        let r = evaluate_against_mask(&ClassMap::filled(4, 1, Environment), &m).unwrap();
        assert_eq!(r.settlement_recall, Some(0.0));
        assert_eq!(r.environment_specificity, Some(1.0));
    }

    #[test]
    fn invalid_pixels_are_skipped() {
        use MaskValue as M;
        let m = mask(&[M::Informal, M::Environment], 2);
        let mut map = ClassMap::filled(2, 1, Metal);
        map.valid[1] = false;
        let r = evaluate_against_mask(&map, &m).unwrap();
        assert_eq!(r.environment_specificity, None);
        assert_eq!((r.n_evaluated, r.n_unknown_skipped), (1, 1));
    }

    #[test]
    fn mismatched_dimensions_error() {
        let m = mask(&[MaskValue::Unknown; 4], 2);
        assert!(matches!(
            evaluate_against_mask(&ClassMap::filled(4, 1, Metal), &m),
            Err(EvalError::Dimensions { .. })
        ));
    }

    #[test]
    fn confusion_identity_and_disjoint() {
        let t = [Environment, Metal, Shingles, Thatch];
        assert_eq!(confusion_matrix(&t, &t).unwrap().accuracy(), 1.0);
        let p = [Metal, Shingles, Thatch, Environment];
        assert_eq!(confusion_matrix(&p, &t).unwrap().accuracy(), 0.0);
    }

    #[test]
    fn confusion_six_sample_fixture() {
        let truth = [Metal, Metal, Thatch, Thatch, Environment, Shingles];
        let pred = [Metal, Thatch, Thatch, Thatch, Metal, Shingles];
        let cm = confusion_matrix(&pred, &truth).unwrap();
        // hand count: env->metal 1; metal->metal 1, metal->thatch 1;
        // shingles->shingles 1; thatch->thatch 2
        assert_eq!(
            cm.counts,
            vec![
                vec![0, 1, 0, 0],
                vec![0, 1, 0, 1],
                vec![0, 0, 1, 0],
                vec![0, 0, 0, 2]
            ]
        );
        assert_eq!(cm.accuracy(), 4.0 / 6.0);
        assert_eq!(cm.recall(Metal.code()), 0.5);
        assert_eq!(cm.precision(Thatch.code()), 2.0 / 3.0);
    }
}
