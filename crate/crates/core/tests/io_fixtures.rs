use std::path::PathBuf;

use ccfmap::ccf::{deserialize, serialize, ModelParseError};
use ccfmap::geodata::{self, GeoError, MaskValue};
use ccfmap::synth;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

#[test]
fn zero_scene_loads() {
    let scene = geodata::load_scene(&fixture("zeros_2x2.hdr"), &fixture("zeros_2x2.bsq")).unwrap();
    assert_eq!((scene.width, scene.height, scene.n_bands), (2, 2, 13));
    assert_eq!(scene.nodata, 65535);
    assert_eq!(scene.data.len(), 52);
    assert!(scene.data.iter().all(|&v| v == 0));
}

#[test]
fn short_scene_data_names_both_sizes() {
    let err = geodata::load_scene(&fixture("truncated_2x2.hdr"), &fixture("truncated_2x2.bsq"))
        .unwrap_err();
    match &err {
        GeoError::DataSize {
            expected, actual, ..
        } => assert_eq!((*expected, *actual), (104, 102)),
        other => panic!("unexpected error {other:?}"),
    }
    let msg = err.to_string();
    assert!(msg.contains("104") && msg.contains("102"), "{msg}");
}

#[test]
fn bad_headers_are_descriptive() {
    let data = fixture("zeros_2x2.bsq");
    let err = geodata::load_scene(&fixture("bad_dtype.hdr"), &data).unwrap_err();
    assert!(matches!(err, GeoError::Header { .. }));
    assert!(err.to_string().contains("f32"));

    let err = geodata::load_scene(&fixture("missing_field.hdr"), &data).unwrap_err();
    assert!(matches!(err, GeoError::Header { .. }));
    assert!(err.to_string().contains("nodata"), "{err}");
}

#[test]
fn written_synthetic_scene_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let layout = synth::layout_grid(synth::Layout::Patches, 9, 7);
    let generated =
        synth::generate_scene(9, 7, &layout, &synth::default_prototypes(), 0.25, 11).unwrap();
    let (hdr, bsq) = (dir.path().join("s.hdr"), dir.path().join("s.bsq"));
    geodata::write_scene(&generated.scene, &hdr, &bsq).unwrap();
    assert_eq!(geodata::load_scene(&hdr, &bsq).unwrap(), generated.scene);

    let mask_path = dir.path().join("m.png");
    geodata::write_mask(&generated.mask, &mask_path).unwrap();
    assert_eq!(geodata::load_mask(&mask_path).unwrap(), generated.mask);
}

#[test]
fn mask_fixtures() {
    let all = geodata::load_mask(&fixture("mask_all_informal.png")).unwrap();
    assert_eq!((all.width, all.height), (3, 2));
    assert!(all.values.iter().all(|&v| v == MaskValue::Informal));

    let unknown = geodata::load_mask(&fixture("mask_all_unknown.png")).unwrap();
    assert!(unknown.values.iter().all(|&v| v == MaskValue::Unknown));

    let cb = geodata::load_mask(&fixture("mask_checkerboard.png")).unwrap();
    assert_eq!((cb.width, cb.height), (4, 3));
    for row in 0..3 {
        for col in 0..4 {
            let expected = if (row, col) == (2, 3) {
                MaskValue::Unknown
            } else if (row + col) % 2 == 0 {
                MaskValue::Informal
            } else {
                MaskValue::Environment
            };
            assert_eq!(cb.get(col, row), expected, "({col}, {row})");
        }
    }
}

#[test]
fn mask_value_outside_the_three_levels_is_rejected() {
    let err = geodata::load_mask(&fixture("mask_bad_value.png")).unwrap_err();
    assert!(matches!(err, GeoError::Mask { .. }));
    assert!(err.to_string().contains("100"), "{err}");

    let err = geodata::load_mask(&fixture("mask_rgb.png")).unwrap_err();
    assert!(matches!(err, GeoError::Mask { .. }));
}

#[test]
fn malformed_points_report_the_row() {
    let err = geodata::load_points(&fixture("points_malformed.csv")).unwrap_err();
    match &err {
        GeoError::Points { row, .. } => assert_eq!(*row, 3),
        other => panic!("unexpected error {other:?}"),
    }

    let err = geodata::load_points(&fixture("points_lat_out_of_range.csv")).unwrap_err();
    match &err {
        GeoError::Points { row, message, .. } => {
            assert_eq!(*row, 3);
            assert!(message.contains("95"), "{message}");
        }
        other => panic!("unexpected error {other:?}"),
    }

    assert!(matches!(
        geodata::load_points(&fixture("points_no_header.csv")),
        Err(GeoError::Points { .. })
    ));
}

#[test]
fn model_fixtures() {
    let valid = text("model_valid.ccf");
    let forest = deserialize(&valid).unwrap();
    assert_eq!(serialize(&forest), valid);
    assert_eq!(forest.predict_proba(&[0.0, 0.0]).unwrap(), vec![1.0, 0.0]);
    // 0.6 + 0.8 = 1.4 > 0.5
    assert_eq!(forest.predict_proba(&[1.0, 1.0]).unwrap(), vec![0.25, 0.75]);

    assert_eq!(
        deserialize(&text("model_version_999.ccf")),
        Err(ModelParseError::UnsupportedVersion(999))
    );
    assert!(matches!(
        deserialize(&text("model_truncated.ccf")),
        Err(ModelParseError::Truncated(_))
    ));
    match deserialize(&text("model_bad_leaf.ccf")) {
        Err(ModelParseError::Syntax { line, .. }) => assert_eq!(line, 16),
        other => panic!("unexpected result {other:?}"),
    }
}
