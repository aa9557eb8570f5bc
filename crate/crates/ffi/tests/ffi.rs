use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use logoscope_ffi::*;

fn last_error() -> String {
    let p = ls_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn solid(rgb: [u8; 3], w: u32, h: u32) -> *mut LsImage {
    let px: Vec<u8> = (0..w * h).flat_map(|_| rgb).collect();
    let mut img = ptr::null_mut();
    assert_eq!(unsafe { ls_image_new(w, h, 3, px.as_ptr(), px.len(), &mut img) }, LsStatus::Ok);
    img
}

#[test]
fn colors_and_shapes() {
    let img = solid([20, 40, 200], 8, 8);
    let mut c = LsColorBucket::Red;
    let mut gap = true;
    unsafe {
        assert_eq!(ls_dominant_color(img, &mut c, &mut gap), LsStatus::Ok);
        assert_eq!((c, gap), (LsColorBucket::Blue, false));
        ls_image_free(img);
    }
    let magenta = solid([200, 0, 200], 8, 8);
    unsafe {
        assert_eq!(ls_dominant_color(magenta, &mut c, &mut gap), LsStatus::Ok);
        assert!(gap);
        ls_image_free(magenta);
    }

    // dark disk on white
    let n = 60u32;
    let px: Vec<u8> = (0..n * n)
        .flat_map(|i| {
            let (x, y) = ((i % n) as f64 - 30.0, (i / n) as f64 - 30.0);
            if x * x + y * y <= 400.0 { [0, 0, 0] } else { [255, 255, 255] }
        })
        .collect();
    let mut img = ptr::null_mut();
    let mut s = LsShapeBucket::Irregular;
    unsafe {
        assert_eq!(ls_image_new(n, n, 3, px.as_ptr(), px.len(), &mut img), LsStatus::Ok);
        assert_eq!(ls_classify_shape(img, &mut s), LsStatus::Ok);
        ls_image_free(img);
    }
    assert_eq!(s, LsShapeBucket::Circle);
}

#[test]
fn perturbations_round_trip() {
    let px: Vec<u8> = (0..12 * 7 * 4).map(|i| (i * 37 % 251) as u8).collect();
    let mut img = ptr::null_mut();
    unsafe {
        assert_eq!(ls_image_new(12, 7, 4, px.as_ptr(), px.len(), &mut img), LsStatus::Ok);
        let mut cur = img;
        for _ in 0..4 {
            let mut next = ptr::null_mut();
            assert_eq!(ls_perturb(cur, LsPerturbation::Rotate90, LsRotation::FullCircle, 0, &mut next), LsStatus::Ok);
            if cur != img {
                ls_image_free(cur);
            }
            cur = next;
        }
        let (mut w, mut h, mut ch, mut p, mut len) = (0, 0, 0, ptr::null(), 0);
        assert_eq!(ls_image_pixels(cur, &mut w, &mut h, &mut ch, &mut p, &mut len), LsStatus::Ok);
        assert_eq!((w, h, ch), (12, 7, 4));
        assert_eq!(std::slice::from_raw_parts(p, len), &px[..]);
        ls_image_free(cur);
        ls_image_free(img);
    }
}

#[test]
fn embeddings_masks_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let id = CString::new("acme").unwrap();
    let vals = [1.0f32, -2.0, 3.0, 0.5, 3.0, 2.0, -1.0, 0.5];
    let mut emb = ptr::null_mut();
    unsafe {
        assert_eq!(ls_embedding_new(id.as_ptr(), 2, 4, vals.as_ptr(), &mut emb), LsStatus::Ok);
        let mut pooled = [0.0f64; 4];
        assert_eq!(ls_pool(emb, pooled.as_mut_ptr(), 4), LsStatus::Ok);
        assert_eq!(pooled, [2.0, 0.0, 1.0, 0.5]);
        assert_eq!(ls_pool(emb, pooled.as_mut_ptr(), 3), LsStatus::Invariant);

        let file = CString::new(dir.path().join("acme.lemb").to_str().unwrap()).unwrap();
        assert_eq!(ls_embedding_write(emb, file.as_ptr()), LsStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ls_embedding_read(file.as_ptr(), &mut back), LsStatus::Ok);
        let (mut n, mut d) = (0, 0);
        assert_eq!(ls_embedding_dims(back, &mut n, &mut d), LsStatus::Ok);
        assert_eq!((n, d), (2, 4));

        let w = [0.1, -3.0, 0.0, 2.0];
        let mut mask = ptr::null_mut();
        assert_eq!(ls_mask_top_k(w.as_ptr(), 4, 2, &mut mask), LsStatus::Ok);
        let (mut idx, mut len) = (ptr::null(), 0);
        assert_eq!(ls_mask_indices(mask, &mut idx, &mut len), LsStatus::Ok);
        assert_eq!(std::slice::from_raw_parts(idx, len), &[1, 3]);
        let mut ab = ptr::null_mut();
        assert_eq!(ls_ablate(back, mask, &mut ab), LsStatus::Ok);
        assert_eq!(ls_pool(ab, pooled.as_mut_ptr(), 4), LsStatus::Ok);
        assert_eq!(pooled, [2.0, 0.0, 1.0, 0.0]);

        let mut placebo = ptr::null_mut();
        assert_eq!(ls_mask_placebo(4, 5, 0, &mut placebo), LsStatus::InvalidArgument);
        assert!(last_error().contains('5'));
        assert_eq!(ls_mask_placebo(4, 2, 0, &mut placebo), LsStatus::Ok);

        for p in [emb, back, ab] {
            ls_embedding_free(p);
        }
        ls_mask_free(mask);
        ls_mask_free(placebo);

        let missing = CString::new(dir.path().join("nope.lemb").to_str().unwrap()).unwrap();
        assert_eq!(ls_embedding_read(missing.as_ptr(), &mut back), LsStatus::Io);
    }

    // one informative coordinate out of three
    let (m, d) = (200usize, 3usize);
    let x: Vec<f64> = (0..m * d).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let y: Vec<u8> = (0..m).map(|i| (x[i * d] > 0.0) as u8).collect();
    let mut probe = ptr::null_mut();
    unsafe {
        assert_eq!(ls_probe_fit(x.as_ptr(), y.as_ptr(), m, d, 1.0, &mut probe), LsStatus::Ok);
        let (mut w, mut b, mut nnz) = ([0.0; 3], 0.0, 0);
        assert_eq!(ls_probe_weights(probe, w.as_mut_ptr(), 3, &mut b, &mut nnz), LsStatus::Ok);
        assert!(w[0] > 0.0 && w[0].abs() > w[1].abs() && w[0].abs() > w[2].abs(), "{w:?}");
        let (mut hi, mut lo) = (0.0, 0.0);
        assert_eq!(ls_probe_predict(probe, [0.9, 0.0, 0.0].as_ptr(), 3, &mut hi), LsStatus::Ok);
        assert_eq!(ls_probe_predict(probe, [-0.9, 0.0, 0.0].as_ptr(), 3, &mut lo), LsStatus::Ok);
        assert!(hi > 0.5 && lo < 0.5);
        ls_probe_free(probe);
        let one = [1u8; 4];
        assert_eq!(ls_probe_fit([0.0; 4].as_ptr(), one.as_ptr(), 4, 1, 1.0, &mut probe), LsStatus::Invariant);
    }
}

#[test]
fn calibration_and_errors() {
    let probs = [0.05, 0.95];
    let labels = [0u8, 1];
    let (mut e, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(ls_ece(probs.as_ptr(), labels.as_ptr(), 2, 10, &mut e), LsStatus::Ok);
        assert_eq!(ls_brier(probs.as_ptr(), labels.as_ptr(), 2, &mut b), LsStatus::Ok);
        assert_eq!(ls_ece(ptr::null(), labels.as_ptr(), 2, 10, &mut e), LsStatus::NullPointer);
        assert!(last_error().contains("probs"));
        assert_eq!(ls_ece(probs.as_ptr(), labels.as_ptr(), 0, 10, &mut e), LsStatus::Invariant);
        assert_eq!(ls_image_load(ptr::null(), ptr::null_mut()), LsStatus::NullPointer);
        ls_image_free(ptr::null_mut());
    }
    approx::assert_abs_diff_eq!(e, 0.05, epsilon = 1e-12);
    approx::assert_abs_diff_eq!(b, 0.0025, epsilon = 1e-12);
    let ok = unsafe { ls_brier(probs.as_ptr(), labels.as_ptr(), 2, &mut b) };
    assert_eq!(ok, LsStatus::Ok);
    assert!(ls_last_error_message().is_null());
}

#[test]
fn header_declares_every_export() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/logoscope.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for f in exports {
        assert!(header.contains(&format!("{f}(")), "{f}");
    }
    for t in ["typedef struct LsImage LsImage;", "LS_STATUS_NULL_POINTER = 1", "#ifndef LOGOSCOPE_H"] {
        assert!(header.contains(t), "{t}");
    }
}

/// Compile and run the C smoke program against the static library when a C
/// compiler is available.
#[test]
fn c_program_links_against_the_header() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liblogoscope_ffi.a");
    if !lib.is_file() || std::process::Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static library or C compiler");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = std::process::Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-lssl", "-lcrypto", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
