use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use pflp_ffi::*;
use serde_json::Value;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = pflp_last_error();
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { pflp_string_free(p) };
    s
}

fn labeling(s: *mut PflpSession) -> Value {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { pflp_labeling_json(s, &mut out) }, PflpStatus::Ok);
    let v = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { pflp_string_free(out) };
    v
}

fn grid(rows: u32, cols: u32) -> *mut PflpSession {
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { pflp_session_from_grid(rows, cols, 18.0, 4.0, 8, 3, 10.0, &mut s) },
        PflpStatus::Ok
    );
    assert!(!s.is_null());
    s
}

#[test]
fn solve_edit_update_undo() {
    let s = grid(6, 6);
    let (mut n, mut m) = (0usize, 0usize);
    assert_eq!(unsafe { pflp_graph_size(s, &mut n, &mut m) }, PflpStatus::Ok);
    assert_eq!(n, 36 * 4);
    assert!(m > 36 * 6);

    let mut labeled = 0usize;
    assert_eq!(
        unsafe { pflp_solve(s, c("exact").as_ptr(), 0, 0.0, &mut labeled) },
        PflpStatus::Ok
    );
    let l = labeling(s);
    assert_eq!(l["selected"].as_array().unwrap().len(), labeled);
    assert_eq!(l["labels"].as_array().unwrap().len(), labeled);

    let (mut ratio, mut after) = (0.0, 0usize);
    let exact = c("exact");
    assert_eq!(
        unsafe { pflp_update(s, exact.as_ptr(), 1.0, false, 0, &mut ratio, &mut after) },
        PflpStatus::Ok
    );
    assert_eq!(ratio, 1.0);
    assert_eq!(after, labeled);

    let edit = c(r#"{"kind":"SetFontSize","feature":"g2_2","size":20}"#);
    assert_eq!(unsafe { pflp_apply_edit(s, edit.as_ptr()) }, PflpStatus::Ok);
    assert_eq!(
        unsafe { pflp_update(s, exact.as_ptr(), 1.0, false, 0, &mut ratio, &mut after) },
        PflpStatus::Ok
    );
    assert!(ratio > 0.0 && ratio <= 1.0);

    let mut undone = false;
    assert_eq!(unsafe { pflp_undo(s, &mut undone) }, PflpStatus::Ok);
    assert!(undone);
    assert_eq!(unsafe { pflp_undo(s, &mut undone) }, PflpStatus::Ok);
    assert!(!undone);
    unsafe { pflp_session_free(s) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let s = grid(2, 2);
    assert_eq!(
        unsafe { pflp_solve(s, c("annealing").as_ptr(), 0, 0.0, ptr::null_mut()) },
        PflpStatus::UnknownAlgorithm
    );
    assert!(last_error().contains("annealing"));

    let unknown = c(r#"{"kind":"DeleteFeature","feature":"nope"}"#);
    assert_eq!(
        unsafe { pflp_apply_edit(s, unknown.as_ptr()) },
        PflpStatus::UnknownFeature
    );
    let bad = c(r#"{"kind":"Paint"}"#);
    assert_eq!(unsafe { pflp_apply_edit(s, bad.as_ptr()) }, PflpStatus::Parse);
    let missing = c(r#"{"kind":"DeleteCandidate","candidate":4242}"#);
    assert_eq!(
        unsafe { pflp_apply_edit(s, missing.as_ptr()) },
        PflpStatus::UnknownCandidate
    );
    assert!(last_error().contains("4242"));

    for id in [0, 1] {
        let fix = c(&format!(r#"{{"kind":"FixateCandidate","candidate":{id}}}"#));
        assert_eq!(unsafe { pflp_apply_edit(s, fix.as_ptr()) }, PflpStatus::Ok);
    }
    let exact = c("exact");
    assert_eq!(
        unsafe { pflp_update(s, exact.as_ptr(), 1.0, false, 0, ptr::null_mut(), ptr::null_mut()) },
        PflpStatus::FixationConflict
    );

    assert_eq!(
        unsafe { pflp_apply_edit(ptr::null_mut(), bad.as_ptr()) },
        PflpStatus::NullPointer
    );
    assert_eq!(unsafe { pflp_apply_edit(s, ptr::null()) }, PflpStatus::NullPointer);
    assert_eq!(
        unsafe { pflp_labeling_json(s, ptr::null_mut()) },
        PflpStatus::NullPointer
    );
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { pflp_session_from_grid(0, 3, 18.0, 0.0, 8, 0, 10.0, &mut out) },
        PflpStatus::InvalidInput
    );
    assert!(out.is_null());
    unsafe { pflp_session_free(s) };
    unsafe { pflp_session_free(ptr::null_mut()) };
}

#[test]
fn sessions_from_json() {
    let geo = c(r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"name":"Alpha"},"geometry":{"type":"Point","coordinates":[16.37,48.21]}},
        {"type":"Feature","properties":{"name":"Beta"},"geometry":{"type":"Point","coordinates":[16.3701,48.21]}}]}"#);
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { pflp_session_from_json(geo.as_ptr(), ptr::null(), 10.0, &mut s) },
        PflpStatus::Ok
    );
    let mut n = 0usize;
    assert_eq!(unsafe { pflp_graph_size(s, &mut n, ptr::null_mut()) }, PflpStatus::Ok);
    assert_eq!(n, 8);
    unsafe { pflp_session_free(s) };

    let simple = c(r#"{"name":"mini","features":[{"id":"a","name":"A","lon":0,"lat":0}]}"#);
    assert_eq!(
        unsafe { pflp_session_from_json(simple.as_ptr(), c("simple-json").as_ptr(), 10.0, &mut s) },
        PflpStatus::Ok
    );
    let mut labeled = 0usize;
    assert_eq!(
        unsafe { pflp_solve(s, c("greedy").as_ptr(), 1, 0.0, &mut labeled) },
        PflpStatus::Ok
    );
    assert_eq!(labeled, 1);
    assert_eq!(labeling(s)["dataset"], "mini");
    unsafe { pflp_session_free(s) };

    let broken = c("{\"name\": ");
    assert_eq!(
        unsafe { pflp_session_from_json(broken.as_ptr(), ptr::null(), 10.0, &mut s) },
        PflpStatus::Parse
    );
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(pflp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "pflp.h"

int main(void) {
    PflpSession *s = NULL;
    if (pflp_session_from_grid(4, 4, 18.0, 4.0, 8, 1, 10.0, &s) != PFLP_STATUS_OK) return 1;
    size_t labeled = 0;
    if (pflp_solve(s, "exact", 0, 0.0, &labeled) != PFLP_STATUS_OK || labeled == 0) return 2;
    if (pflp_solve(s, "nope", 0, 0.0, NULL) != PFLP_STATUS_UNKNOWN_ALGORITHM) return 3;
    char *err = pflp_last_error();
    if (err == NULL || strstr(err, "nope") == NULL) return 4;
    pflp_string_free(err);
    char *json = NULL;
    if (pflp_labeling_json(s, &json) != PFLP_STATUS_OK) return 5;
    printf("%zu %s\n", labeled, json);
    pflp_string_free(json);
    pflp_session_free(s);
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let target = tmp.parent()?;
    ["debug", "release"]
        .iter()
        .map(|p| target.join(p).join("libpflp_ffi.a"))
        .find(|p| p.exists())
}

#[test]
fn header_serves_a_c_program() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let Some(lib) = static_lib() else {
        let status = Command::new("cc")
            .args(["-std=c11", "-Wall", "-Werror", "-fsyntax-only", "-I"])
            .arg(&include)
            .arg(&src)
            .status();
        match status {
            Ok(st) => assert!(st.success()),
            Err(e) => eprintln!("no C compiler, header check skipped: {e}"),
        }
        return;
    };
    let exe = dir.path().join("main");
    let status = match Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
    {
        Ok(st) => st,
        Err(e) => {
            eprintln!("no C compiler, header check skipped: {e}");
            return;
        }
    };
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let line = String::from_utf8(out.stdout).unwrap();
    let (count, json) = line.trim().split_once(' ').unwrap();
    let v: Value = serde_json::from_str(json).unwrap();
    assert_eq!(v["selected"].as_array().unwrap().len(), count.parse::<usize>().unwrap());
}
