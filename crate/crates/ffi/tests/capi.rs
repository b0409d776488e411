use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cbx_ffi::*;

const DATA: &str = r#"{
  "classes": ["neg", "pos"],
  "instances": [
    {"id": "a", "label": "pos"},
    {"id": "b", "label": "pos"},
    {"id": "c", "label": "neg"},
    {"id": "d", "label": "neg"}
  ],
  "classifiers": [{"name": "LR", "scores": {"a": 0.9, "b": 0.55, "c": 0.45, "d": 0.1}}]
}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn open() -> *mut CbxSession {
    let json = c(DATA);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { cbx_session_open_json(json.as_ptr(), false, &mut s) }, CbxStatus::Ok);
    assert!(!s.is_null());
    s
}

fn last_error() -> String {
    let p = cbx_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    cbx_string_free(p);
    s
}

#[test]
fn summary_follows_operating_point() {
    let s = open();
    let lr = c("LR");
    let mut counts = CbxTrinaryCounts::default();
    unsafe {
        assert_eq!(cbx_trinary_summary(s, lr.as_ptr(), ptr::null(), &mut counts), CbxStatus::Ok);
        assert_eq!((counts.tp, counts.tn, counts.total), (2.0, 2.0, 4.0));

        let mut version = 0;
        assert_eq!(cbx_set_operating_point(s, lr.as_ptr(), 0.4, 0.6, &mut version), CbxStatus::Ok);
        assert_eq!(version, 1);
        assert_eq!(cbx_trinary_summary(s, lr.as_ptr(), ptr::null(), &mut counts), CbxStatus::Ok);
        assert_eq!((counts.tp, counts.tn, counts.rejected), (1.0, 1.0, 2.0));

        let (mut value, mut undefined) = (0.0, true);
        let acc = c("accuracy");
        assert_eq!(
            cbx_metric(s, lr.as_ptr(), acc.as_ptr(), ptr::null(), ptr::null(), &mut value, &mut undefined),
            CbxStatus::Ok
        );
        assert_eq!((value, undefined), (1.0, false));
        let incorrect = c("as-incorrect");
        assert_eq!(
            cbx_metric(s, lr.as_ptr(), acc.as_ptr(), incorrect.as_ptr(), ptr::null(), &mut value, &mut undefined),
            CbxStatus::Ok
        );
        assert_eq!(value, 0.5);

        let auc = c("auc");
        assert_eq!(cbx_metric(s, lr.as_ptr(), auc.as_ptr(), ptr::null(), ptr::null(), &mut value, ptr::null_mut()), CbxStatus::Ok);
        assert_eq!(value, 1.0);
        cbx_session_free(s);
    }
}

#[test]
fn classify_single_scores() {
    let mut out = CbxOutcome::Tp;
    unsafe {
        assert_eq!(cbx_classify(0.5, true, 0.4, 0.6, &mut out), CbxStatus::Ok);
        assert_eq!(out, CbxOutcome::Rejected);
        assert_eq!(cbx_classify(0.6, false, 0.4, 0.6, &mut out), CbxStatus::Ok);
        assert_eq!(out, CbxOutcome::Fp);
        assert_eq!(cbx_classify(0.39, true, 0.4, 0.6, &mut out), CbxStatus::Ok);
        assert_eq!(out, CbxOutcome::Fn);
        assert_eq!(cbx_classify(0.5, true, 0.7, 0.2, &mut out), CbxStatus::InvalidArgument);
    }
    assert!(last_error().starts_with("INVALID_ARGUMENT"));
}

#[test]
fn selections_curves_and_export() {
    let s = open();
    unsafe {
        let req = c(r#"{"expr":{"pred":{"kind":"class","label":"pos"}},"slot":"A"}"#);
        let mut id = ptr::null_mut();
        assert_eq!(cbx_create_selection(s, req.as_ptr(), &mut id), CbxStatus::Ok);
        let id = take(id);
        assert_eq!(id, "sel-1");
        let mut size = 0;
        let id_c = c(&id);
        assert_eq!(cbx_selection_size(s, id_c.as_ptr(), &mut size), CbxStatus::Ok);
        assert_eq!(size, 2);

        let mut json = ptr::null_mut();
        let roc = c("roc");
        let query = c("classifier=LR");
        assert_eq!(cbx_curve_json(s, roc.as_ptr(), query.as_ptr(), &mut json), CbxStatus::Ok);
        let value: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
        assert_eq!(value["kind"], "roc");

        let mut doc = ptr::null_mut();
        assert_eq!(cbx_export_json(s, &mut doc), CbxStatus::Ok);
        let mut copy = ptr::null_mut();
        assert_eq!(cbx_session_import_json(doc, &mut copy), CbxStatus::Ok);
        cbx_string_free(doc);
        assert_eq!(cbx_selection_size(copy, id_c.as_ptr(), &mut size), CbxStatus::Ok);
        assert_eq!(size, 2);
        cbx_session_free(copy);
        cbx_session_free(s);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let s = open();
    let mut counts = CbxTrinaryCounts::default();
    unsafe {
        let ghost = c("SVM");
        assert_eq!(cbx_trinary_summary(s, ghost.as_ptr(), ptr::null(), &mut counts), CbxStatus::NotFound);
        assert!(last_error().contains("SVM"));

        assert_eq!(cbx_trinary_summary(s, ptr::null(), ptr::null(), &mut counts), CbxStatus::NullArg);
        assert_eq!(cbx_trinary_summary(ptr::null(), ghost.as_ptr(), ptr::null(), &mut counts), CbxStatus::NullArg);

        let bad = [0xffu8, 0];
        assert_eq!(
            cbx_trinary_summary(s, bad.as_ptr().cast(), ptr::null(), &mut counts),
            CbxStatus::InvalidUtf8
        );

        let lr = c("LR");
        let f1 = c("f1");
        let correct = c("as-correct");
        let mut value = 0.0;
        assert_eq!(
            cbx_metric(s, lr.as_ptr(), f1.as_ptr(), correct.as_ptr(), ptr::null(), &mut value, ptr::null_mut()),
            CbxStatus::InvalidArgument
        );
        assert!(last_error().starts_with("UNSUPPORTED_POLICY"));

        let garbage = c("{not json");
        let mut other = ptr::null_mut();
        assert_eq!(cbx_session_open_json(garbage.as_ptr(), false, &mut other), CbxStatus::Parse);
        assert!(other.is_null());

        let out_of_range = c(&DATA.replace("0.9", "1.9"));
        assert_eq!(cbx_session_open_json(out_of_range.as_ptr(), false, &mut other), CbxStatus::Validation);
        assert_eq!(cbx_session_open_json(out_of_range.as_ptr(), true, &mut other), CbxStatus::Ok);
        cbx_session_free(other);
        cbx_session_free(s);
    }
}

#[test]
fn free_functions_accept_null() {
    unsafe {
        cbx_session_free(ptr::null_mut());
        cbx_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(cbx_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/cbx.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "cbx_session_open_json",
        "cbx_session_import_json",
        "cbx_session_free",
        "cbx_instance_count",
        "cbx_set_operating_point",
        "cbx_classify",
        "cbx_trinary_summary",
        "cbx_metric",
        "cbx_create_selection",
        "cbx_selection_size",
        "cbx_curve_json",
        "cbx_export_json",
        "cbx_string_free",
        "cbx_last_error_message",
        "cbx_version",
        "typedef struct CbxSession CbxSession",
        "CBX_STATUS_NOT_FOUND = 5",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

fn have_cc() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn c_program_links_against_library() {
    if !have_cc() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    // target/<profile>/deps/<test binary> -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcbx_ffi.so");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let data = DATA.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    std::fs::write(
        &src,
        format!(
            r#"#include <stdio.h>
#include "cbx.h"
int main(void) {{
    CbxSession *s = NULL;
    if (cbx_session_open_json("{data}", false, &s) != CBX_STATUS_OK) return 1;
    if (cbx_set_operating_point(s, "LR", 0.4, 0.6, NULL) != CBX_STATUS_OK) return 2;
    CbxTrinaryCounts t;
    if (cbx_trinary_summary(s, "LR", NULL, &t) != CBX_STATUS_OK) return 3;
    if (t.rejected != 2.0) return 4;
    if (cbx_trinary_summary(s, "nope", NULL, &t) != CBX_STATUS_NOT_FOUND) return 5;
    char *json = NULL;
    if (cbx_curve_json(s, "pr", "classifier=LR", &json) != CBX_STATUS_OK) return 6;
    printf("%s\n", json);
    cbx_string_free(json);
    cbx_session_free(s);
    return 0;
}}
"#
        ),
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg("-L")
        .arg(&profile_dir)
        .arg("-lcbx_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).env("LD_LIBRARY_PATH", &profile_dir).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"kind\":\"pr\""));
}
