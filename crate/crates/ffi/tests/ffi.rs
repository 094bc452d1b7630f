use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hwr::dataset::Charset;
use hwr::imageproc::GrayImage;
use hwr::network::{CellKind, NetworkConfig};
use hwr::trainer::{AdamState, Checkpoint, Decoder, Model, TrainConfig};
use hwr_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hwr_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn tiny_model() -> Model {
    let charset = Charset::new(vec!['a', 'b', 'c']).unwrap();
    let config = NetworkConfig {
        conv_channels: vec![2, 2, 2],
        kernel: 3,
        cell: CellKind::Gru,
        hidden: 3,
        rnn_layers: 2,
        num_classes: charset.num_classes(),
    };
    Model::new(config, charset, 11).unwrap()
}

fn saved_checkpoint(dir: &std::path::Path) -> (Model, CString) {
    let model = tiny_model();
    let ck = Checkpoint {
        adam: AdamState::new(&model.params),
        model: model.clone(),
        train: TrainConfig::default(),
        epoch: 0,
        best_val_loss: None,
    };
    let path = dir.join("m.ckpt");
    ck.save(&path).unwrap();
    (model, CString::new(path.to_str().unwrap()).unwrap())
}

fn test_pixels() -> (Vec<u8>, usize, usize) {
    let (h, w) = (30, 80);
    let px = (0..h * w).map(|i| ((i * 37) % 256) as u8).collect();
    (px, h, w)
}

#[test]
fn ctc_loss_worked_example() {
    let probs = [0.5, 0.5, 0.5, 0.5];
    let labels = [0u32];
    let mut loss = 0.0;
    let st = unsafe { hwr_ctc_loss(probs.as_ptr(), 2, 2, labels.as_ptr(), 1, &mut loss) };
    assert_eq!(st, HwrStatus::Ok);
    assert!((loss + 0.75f64.ln()).abs() < 1e-12);
    assert_eq!(last_error(), "");
}

#[test]
fn ctc_loss_reports_bad_labels() {
    let probs = [0.5, 0.5, 0.5, 0.5];
    let mut loss = 0.0;
    let blank = [1u32];
    let st = unsafe { hwr_ctc_loss(probs.as_ptr(), 2, 2, blank.as_ptr(), 1, &mut loss) };
    assert_eq!(st, HwrStatus::Label);
    assert!(!last_error().is_empty());
    let too_long = [0u32, 0, 0];
    let st = unsafe { hwr_ctc_loss(probs.as_ptr(), 2, 2, too_long.as_ptr(), 3, &mut loss) };
    assert_eq!(st, HwrStatus::Label);
    let st = unsafe { hwr_ctc_loss(ptr::null(), 2, 2, blank.as_ptr(), 1, &mut loss) };
    assert_eq!(st, HwrStatus::NullPointer);
    assert_eq!(last_error(), "probs is null");
    let rows = [0.9, 0.9, 0.5, 0.5];
    let st = unsafe { hwr_ctc_loss(rows.as_ptr(), 2, 2, ptr::null(), 0, &mut loss) };
    assert_eq!(st, HwrStatus::InvalidArgument);
}

#[test]
fn edit_distance_matches_core() {
    let r = CString::new("kitten").unwrap();
    let h = CString::new("sitting").unwrap();
    let mut out = HwrEdits::default();
    assert_eq!(unsafe { hwr_edit_distance(r.as_ptr(), h.as_ptr(), &mut out) }, HwrStatus::Ok);
    let e = hwr::metrics::edit_distance("kitten", "sitting");
    assert_eq!(
        (out.substitutions, out.insertions, out.deletions),
        (e.substitutions, e.insertions, e.deletions)
    );
    assert_eq!(out.substitutions + out.insertions + out.deletions, 3);
    let bad = [0xffu8, 0];
    let st = unsafe { hwr_edit_distance(bad.as_ptr().cast::<c_char>(), h.as_ptr(), &mut out) };
    assert_eq!(st, HwrStatus::InvalidUtf8);
}

#[test]
fn model_round_trip_through_handle() {
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = saved_checkpoint(dir.path());
    let mut handle: *mut HwrModel = ptr::null_mut();
    assert_eq!(unsafe { hwr_model_load(path.as_ptr(), &mut handle) }, HwrStatus::Ok);
    assert!(!handle.is_null());
    assert_eq!(unsafe { hwr_model_num_classes(handle) }, 4);
    assert_eq!(hwr_model_num_frames(), 25);

    let (px, h, w) = test_pixels();
    let img = GrayImage::new(h, w, px.iter().map(|&v| f64::from(v)).collect()).unwrap();
    for (beam, decoder) in [(0, Decoder::Greedy), (5, Decoder::Beam(5))] {
        let mut text: *mut c_char = ptr::null_mut();
        let st = unsafe { hwr_model_predict_pixels(handle, px.as_ptr(), h, w, beam, &mut text) };
        assert_eq!(st, HwrStatus::Ok, "{}", last_error());
        let got = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_string();
        unsafe { hwr_string_free(text) };
        assert_eq!(got, model.predict(&img, decoder).unwrap());
    }

    let mut probs = vec![0.0; 25 * 4];
    let st = unsafe { hwr_model_frame_probs(handle, px.as_ptr(), h, w, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(st, HwrStatus::Ok);
    for row in probs.chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let expected = model.frames(&hwr::imageproc::preprocess(&img)).unwrap();
    assert_eq!(probs, expected.probs());
    let st = unsafe { hwr_model_frame_probs(handle, px.as_ptr(), h, w, probs.as_mut_ptr(), 10) };
    assert_eq!(st, HwrStatus::InvalidArgument);

    let png = dir.path().join("word.png");
    img.save_png(&png).unwrap();
    let png_c = CString::new(png.to_str().unwrap()).unwrap();
    let mut text: *mut c_char = ptr::null_mut();
    assert_eq!(unsafe { hwr_model_predict_file(handle, png_c.as_ptr(), 0, &mut text) }, HwrStatus::Ok);
    unsafe { hwr_string_free(text) };

    unsafe { hwr_model_free(handle) };
}

#[test]
fn load_failures_set_status_and_message() {
    let mut handle: *mut HwrModel = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    assert_eq!(unsafe { hwr_model_load(missing.as_ptr(), &mut handle) }, HwrStatus::Io);
    assert!(last_error().contains("/nonexistent/model.ckpt"));
    assert!(handle.is_null());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk_c = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { hwr_model_load(junk_c.as_ptr(), &mut handle) }, HwrStatus::Checkpoint);
    assert_eq!(unsafe { hwr_model_load(ptr::null(), &mut handle) }, HwrStatus::NullPointer);

    let mut text: *mut c_char = ptr::null_mut();
    let px = [0u8; 4];
    let st = unsafe { hwr_model_predict_pixels(ptr::null(), px.as_ptr(), 2, 2, 0, &mut text) };
    assert_eq!(st, HwrStatus::NullPointer);
    assert_eq!(unsafe { hwr_model_num_classes(ptr::null()) }, 0);
    unsafe {
        hwr_model_free(ptr::null_mut());
        hwr_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(hwr_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hwr.h")).unwrap();
    for name in [
        "hwr_last_error_message",
        "hwr_version",
        "hwr_model_load",
        "hwr_model_free",
        "hwr_model_num_classes",
        "hwr_model_num_frames",
        "hwr_model_predict_pixels",
        "hwr_model_predict_file",
        "hwr_model_frame_probs",
        "hwr_string_free",
        "hwr_ctc_loss",
        "hwr_edit_distance",
        "typedef struct HwrModel HwrModel",
        "HWR_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"hwr.h\"\nint main(void) { HwrEdits e = {0, 0, 0}; return (int)e.deletions + (int)HWR_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| std::process::Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
