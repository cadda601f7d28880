//! Scene, survey-point and ground-truth mask I/O.
//!
//! A scene is a text header plus a raw band-sequential file of
//! little-endian `u16` reflectance counts. The header is a small
//! `key = value` document:
//!
//! ```text
//! width = 64
//! height = 64
//! bands = 13
//! dtype = "u16"
//! order = "band_sequential"
//! geotransform = [30.0, 0.0001, 0.0, -1.0, 0.0, -0.0001]
//! nodata = 65535
//! ```
//!
//! The geotransform maps pixel `(col, row)` to map coordinates:
//! `x = gt[0] + col*gt[1] + row*gt[2]`, `y = gt[3] + col*gt[4] + row*gt[5]`.
//! Survey coordinates are assumed to already be in the scene's map
//! coordinate system; nothing here reprojects.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid scene header: {message}")]
    Header { path: PathBuf, message: String },
    #[error("{path}: data size mismatch: expected {expected} bytes, found {actual}")]
    DataSize {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("scene is inconsistent: {0}")]
    Scene(String),
    #[error("geotransform is singular (determinant {0})")]
    SingularTransform(f64),
    #[error("pixel ({col}, {row}) outside {width}x{height} scene")]
    PixelOutOfRange {
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },
    #[error("{path}: row {row}: {message}")]
    Points {
        path: PathBuf,
        row: u64,
        message: String,
    },
    #[error("{path}: invalid mask: {message}")]
    Mask { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GeoError + '_ {
    move |source| GeoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Affine pixel ↔ map transform in the conventional six-coefficient order
/// `(origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoTransform(pub [f64; 6]);

impl GeoTransform {
    pub fn determinant(&self) -> f64 {
        let g = &self.0;
        g[1] * g[5] - g[2] * g[4]
    }

    /// Map coordinates of fractional pixel position `(col, row)`.
    pub fn apply(&self, col: f64, row: f64) -> (f64, f64) {
        let g = &self.0;
        (
            g[0] + col * g[1] + row * g[2],
            g[3] + col * g[4] + row * g[5],
        )
    }

    /// Fractional pixel position of map coordinates `(x, y)`.
    pub fn invert(&self, x: f64, y: f64) -> Result<(f64, f64), GeoError> {
        let g = &self.0;
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return Err(GeoError::SingularTransform(det));
        }
        let (dx, dy) = (x - g[0], y - g[3]);
        let col = (dx * g[5] - dy * g[2]) / det;
        let row = (dy * g[1] - dx * g[4]) / det;
        Ok((col, row))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub n_bands: usize,
    pub geotransform: GeoTransform,
    pub nodata: u16,
    /// Band-sequential: `data[band * width * height + row * width + col]`.
    pub data: Vec<u16>,
}

impl Scene {
    pub fn new(
        width: usize,
        height: usize,
        n_bands: usize,
        geotransform: GeoTransform,
        nodata: u16,
        data: Vec<u16>,
    ) -> Result<Self, GeoError> {
        let scene = Scene {
            width,
            height,
            n_bands,
            geotransform,
            nodata,
            data,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn validate(&self) -> Result<(), GeoError> {
        if self.width == 0 || self.height == 0 || self.n_bands == 0 {
            return Err(GeoError::Scene(format!(
                "dimensions must be positive, got {}x{}x{}",
                self.width, self.height, self.n_bands
            )));
        }
        let expected = self.width * self.height * self.n_bands;
        if self.data.len() != expected {
            return Err(GeoError::Scene(format!(
                "{} samples for a {}x{}x{} scene (expected {expected})",
                self.data.len(),
                self.width,
                self.height,
                self.n_bands
            )));
        }
        let g = &self.geotransform.0;
        if g[1] == 0.0 || g[5] == 0.0 || g.iter().any(|v| !v.is_finite()) {
            return Err(GeoError::Scene(format!(
                "geotransform needs finite values and nonzero pixel sizes, got {g:?}"
            )));
        }
        Ok(())
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Raw value of `band` at pixel index `row * width + col`.
    #[inline]
    pub fn raw(&self, band: usize, pixel: usize) -> u16 {
        self.data[band * self.n_pixels() + pixel]
    }

    /// Map coordinates of the centre of pixel `(col, row)`.
    pub fn pixel_to_geo(&self, col: usize, row: usize) -> (f64, f64) {
        self.geotransform.apply(col as f64 + 0.5, row as f64 + 0.5)
    }
}

/// Pixel containing map position `(lon, lat)`, or `None` when it falls
/// outside the raster.
pub fn geo_to_pixel(scene: &Scene, lon: f64, lat: f64) -> Result<Option<(usize, usize)>, GeoError> {
    let (col, row) = scene.geotransform.invert(lon, lat)?;
    let (col, row) = (col.floor(), row.floor());
    if col < 0.0 || row < 0.0 || col >= scene.width as f64 || row >= scene.height as f64 {
        return Ok(None);
    }
    Ok(Some((col as usize, row as usize)))
}

/// Band-ordered raw values at one pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelSpectrum {
    pub values: Vec<u16>,
    /// Some band equals the scene's nodata value.
    pub has_nodata: bool,
}

pub fn pixel_spectrum(scene: &Scene, col: usize, row: usize) -> Result<PixelSpectrum, GeoError> {
    if col >= scene.width || row >= scene.height {
        return Err(GeoError::PixelOutOfRange {
            col,
            row,
            width: scene.width,
            height: scene.height,
        });
    }
    let pixel = row * scene.width + col;
    let values: Vec<u16> = (0..scene.n_bands).map(|b| scene.raw(b, pixel)).collect();
    let has_nodata = values.contains(&scene.nodata);
    Ok(PixelSpectrum { values, has_nodata })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderDoc {
    width: usize,
    height: usize,
    bands: usize,
    dtype: String,
    order: String,
    geotransform: [f64; 6],
    nodata: u16,
}

/// Load a scene from its header and raw data file.
pub fn load_scene(header_path: &Path, data_path: &Path) -> Result<Scene, GeoError> {
    let text = fs::read_to_string(header_path).map_err(io_err(header_path))?;
    let header_err = |message: String| GeoError::Header {
        path: header_path.to_path_buf(),
        message,
    };
    let doc: HeaderDoc = toml::from_str(&text).map_err(|e| header_err(e.message().to_string()))?;
    if doc.dtype != "u16" {
        return Err(header_err(format!(
            "unsupported dtype {:?} (expected \"u16\")",
            doc.dtype
        )));
    }
    if doc.order != "band_sequential" {
        return Err(header_err(format!(
            "unsupported order {:?} (expected \"band_sequential\")",
            doc.order
        )));
    }

    let bytes = fs::read(data_path).map_err(io_err(data_path))?;
    let expected = (doc.width * doc.height * doc.bands * 2) as u64;
    if bytes.len() as u64 != expected {
        return Err(GeoError::DataSize {
            path: data_path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    Scene::new(
        doc.width,
        doc.height,
        doc.bands,
        GeoTransform(doc.geotransform),
        doc.nodata,
        data,
    )
    .map_err(|e| header_err(e.to_string()))
}

pub fn write_scene(scene: &Scene, header_path: &Path, data_path: &Path) -> Result<(), GeoError> {
    let g = &scene.geotransform.0;
    let header = format!(
        "width = {}\nheight = {}\nbands = {}\ndtype = \"u16\"\norder = \"band_sequential\"\n\
         geotransform = [{:?}, {:?}, {:?}, {:?}, {:?}, {:?}]\nnodata = {}\n",
        scene.width, scene.height, scene.n_bands, g[0], g[1], g[2], g[3], g[4], g[5], scene.nodata
    );
    fs::write(header_path, header).map_err(io_err(header_path))?;

    let file = File::create(data_path).map_err(io_err(data_path))?;
    let mut w = BufWriter::new(file);
    for v in &scene.data {
        w.write_all(&v.to_le_bytes()).map_err(io_err(data_path))?;
    }
    w.flush().map_err(io_err(data_path))
}

/// One geolocated survey answer.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub source_id: String,
    pub lon: f64,
    pub lat: f64,
    pub survey_class: String,
}

const POINT_COLUMNS: [&str; 4] = ["source_id", "lon", "lat", "survey_class"];

/// Read a points CSV with header `source_id,lon,lat,survey_class`.
pub fn load_points(path: &Path) -> Result<Vec<LabeledPoint>, GeoError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_points(file, path)
}

fn read_points<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<LabeledPoint>, GeoError> {
    let row_err = |row: u64, message: String| GeoError::Points {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| row_err(1, e.to_string()))?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != POINT_COLUMNS {
        return Err(row_err(
            1,
            format!(
                "header must be {}, found {}",
                POINT_COLUMNS.join(","),
                found.join(",")
            ),
        ));
    }

    let mut points = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // data rows are numbered from 2 (the header is row 1)
        let row = i as u64 + 2;
        let record = record.map_err(|e| row_err(row, e.to_string()))?;
        if record.len() != 4 {
            return Err(row_err(
                row,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let coord = |idx: usize, name: &str| -> Result<f64, GeoError> {
            record[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    row_err(
                        row,
                        format!("{name} {:?} is not a finite number", &record[idx]),
                    )
                })
        };
        let lon = coord(1, "lon")?;
        let lat = coord(2, "lat")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(row_err(row, format!("lat {lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(row_err(row, format!("lon {lon} outside [-180, 180]")));
        }
        points.push(LabeledPoint {
            source_id: record[0].to_string(),
            lon,
            lat,
            survey_class: record[3].to_string(),
        });
    }
    Ok(points)
}

pub fn write_points(points: &[LabeledPoint], path: &Path) -> Result<(), GeoError> {
    let csv_err = |e: csv::Error| GeoError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(POINT_COLUMNS).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.source_id.as_str(),
            &format!("{:?}", p.lon),
            &format!("{:?}", p.lat),
            p.survey_class.as_str(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskValue {
    Informal,
    Environment,
    Unknown,
}

impl MaskValue {
    pub fn from_gray(v: u8) -> Option<Self> {
        match v {
            255 => Some(MaskValue::Informal),
            0 => Some(MaskValue::Environment),
            128 => Some(MaskValue::Unknown),
            _ => None,
        }
    }

    pub fn gray(self) -> u8 {
        match self {
            MaskValue::Informal => 255,
            MaskValue::Environment => 0,
            MaskValue::Unknown => 128,
        }
    }
}

/// Partial settlement/environment ground truth, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<MaskValue>,
}

impl GroundTruthMask {
    pub fn get(&self, col: usize, row: usize) -> MaskValue {
        self.values[row * self.width + col]
    }
}

/// Load an 8-bit grayscale PNG mask: 255 informal, 0 environment, 128 unknown.
pub fn load_mask(path: &Path) -> Result<GroundTruthMask, GeoError> {
    let file = File::open(path).map_err(io_err(path))?;
    decode_mask(std::io::BufReader::new(file), path)
}

fn decode_mask<R: std::io::BufRead + std::io::Seek>(
    reader: R,
    path: &Path,
) -> Result<GroundTruthMask, GeoError> {
    let mask_err = |message: String| GeoError::Mask {
        path: path.to_path_buf(),
        message,
    };
    let decoder = png::Decoder::new(reader);
    let mut reader = decoder.read_info().map_err(|e| mask_err(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(mask_err(format!(
            "expected 8-bit grayscale, found {:?} at {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| mask_err(e.to_string()))?;
    let stride = frame.line_size;

    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let v = buf[row * stride + col];
            let m = MaskValue::from_gray(v).ok_or_else(|| {
                mask_err(format!(
                    "pixel ({col}, {row}) has value {v}; allowed values are 0, 128, 255"
                ))
            })?;
            values.push(m);
        }
    }
    Ok(GroundTruthMask {
        width,
        height,
        values,
    })
}

pub fn write_mask(mask: &GroundTruthMask, path: &Path) -> Result<(), GeoError> {
    let pixels: Vec<u8> = mask.values.iter().map(|m| m.gray()).collect();
    write_gray_png(path, mask.width, mask.height, &pixels)
}

pub(crate) fn write_gray_png(
    path: &Path,
    width: usize,
    height: usize,
    pixels: &[u8],
) -> Result<(), GeoError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| GeoError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = enc.write_header().map_err(to_io)?;
    w.write_image_data(pixels).map_err(to_io)?;
    w.finish().map_err(to_io)
}
