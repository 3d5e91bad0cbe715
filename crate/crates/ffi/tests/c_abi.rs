use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use unipred_ffi::*;

fn last_error() -> String {
    let p = up_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_and_predictor_round_trip() {
    let json = CString::new(
        r#"{"k":2,"l":2,"trans":[[0.9,0.1],[0.2,0.8]],"emit":[[0.95,0.05],[0.1,0.9]]}"#,
    )
    .unwrap();
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(up_model_from_json(json.as_ptr(), &mut model), UpStatus::Ok);
        let mut l = 0usize;
        assert_eq!(up_model_alphabet(model, &mut l), UpStatus::Ok);
        assert_eq!(l, 2);

        let mut path = vec![0usize; 20];
        assert_eq!(
            up_model_sample(model, 20, 3, path.as_mut_ptr(), path.len()),
            UpStatus::Ok
        );
        assert!(path.iter().all(|&s| s < 2));

        let mut lp = 0.0;
        assert_eq!(
            up_model_log_prob(model, path.as_ptr(), path.len(), &mut lp),
            UpStatus::Ok
        );
        assert!(lp < 0.0 && lp.is_finite());

        let spec = CString::new(r#"{"kind":"oracle"}"#).unwrap();
        let mut pred = ptr::null_mut();
        assert_eq!(
            up_predictor_from_json(spec.as_ptr(), model, &mut pred),
            UpStatus::Ok
        );
        let mut probs = [0.0; 2];
        assert_eq!(
            up_predict(pred, path.as_ptr(), path.len(), probs.as_mut_ptr(), 2),
            UpStatus::Ok
        );
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);

        up_predictor_free(pred);
        up_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut model = ptr::null_mut();
        let bad = CString::new(r#"{"mu":[0.5,0.7]}"#).unwrap();
        assert_eq!(
            up_model_from_json(bad.as_ptr(), &mut model),
            UpStatus::InvalidArgument
        );
        assert!(model.is_null());
        assert!(last_error().contains("row"), "{}", last_error());

        let junk = CString::new("not json").unwrap();
        assert_eq!(
            up_model_from_json(junk.as_ptr(), &mut model),
            UpStatus::Parse
        );
        assert_eq!(
            up_model_from_json(ptr::null(), &mut model),
            UpStatus::NullPointer
        );

        let spec = CString::new(r#"{"kind":"oracle"}"#).unwrap();
        let mut pred = ptr::null_mut();
        assert_eq!(
            up_predictor_from_json(spec.as_ptr(), ptr::null(), &mut pred),
            UpStatus::Parse
        );

        let spec = CString::new(r#"{"kind":"markov-approx","l":3,"d":1}"#).unwrap();
        assert_eq!(
            up_predictor_from_json(spec.as_ptr(), ptr::null(), &mut pred),
            UpStatus::Ok
        );
        let mut small = [0.0; 2];
        assert_eq!(
            up_predict(pred, [0usize].as_ptr(), 1, small.as_mut_ptr(), 2),
            UpStatus::BufferTooSmall
        );
        let mut probs = [0.0; 3];
        assert_eq!(
            up_predict(pred, [7usize].as_ptr(), 1, probs.as_mut_ptr(), 3),
            UpStatus::InvalidArgument
        );
        up_predictor_free(pred);

        let mut out = 0.0;
        let x = [0usize, 1, 1, 0];
        assert_eq!(
            up_marginal_log_prob(2, 2, x.as_ptr(), 4, &mut out),
            UpStatus::Ok
        );
        assert!(out < 0.0);

        up_model_free(ptr::null_mut());
        up_predictor_free(ptr::null_mut());
    }
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(up_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/unipred.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    for line in source.lines().filter(|l| l.contains("extern \"C\" fn ")) {
        let name = line.split("fn ").nth(1).unwrap().split('(').next().unwrap();
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    assert!(header.contains("typedef struct UpModel UpModel;"));
}

/// Compiles and runs a small C program against the static library when a
/// C compiler is available.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let target_dir = crate_dir().join("../../target");
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(|p| p.parent())
        .map(PathBuf::from)
        .unwrap_or_else(|| target_dir.join("debug"));
    let lib = profile_dir.join("libunipred_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile_dir();
    let src = dir.join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "unipred.h"
int main(void) {
    UpModel *m = NULL;
    if (up_model_random_hmm(2, 2, 42, &m) != UP_STATUS_OK) return 1;
    UpPredictor *p = NULL;
    if (up_predictor_from_json("{\"kind\":\"optimal-hmm\",\"k\":2,\"l\":2}", NULL, &p) != UP_STATUS_OK) return 2;
    size_t x[8];
    if (up_model_sample(m, 8, 7, x, 8) != UP_STATUS_OK) return 3;
    double probs[2];
    if (up_predict(p, x, 8, probs, 2) != UP_STATUS_OK) return 4;
    if (up_predict(p, x, 8, probs, 1) != UP_STATUS_BUFFER_TOO_SMALL) return 5;
    printf("%.6f\n", probs[0] + probs[1]);
    up_predictor_free(p);
    up_model_free(m);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.join("smoke");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.000000");
    let _ = std::fs::remove_dir_all(dir);
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("unipred-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
