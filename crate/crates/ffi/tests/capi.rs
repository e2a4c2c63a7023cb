use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use rights_market_ffi::*;

const MARKET: &str = r#"{
  "kind": "market",
  "sellers": [{"good": 2}],
  "buyers": [{"money": "24", "claim": 2, "alpha": 1, "marginals": ["6", "5"]}],
  "epsilon": "1/10",
  "mechanism": "proportional"
}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rm_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

unsafe fn take(s: *mut c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    rm_string_free(s);
    out
}

fn scenario(json: &str) -> *mut RmScenario {
    let text = CString::new(json).unwrap();
    let mut sc = ptr::null_mut();
    let st = unsafe { rm_scenario_from_json(text.as_ptr(), &mut sc) };
    assert_eq!(st, RmStatus::Ok, "{}", last_error());
    sc
}

#[test]
fn solve_report_and_replay_round_trip() {
    unsafe {
        let sc = scenario(MARKET);
        let mut sol = ptr::null_mut();
        assert_eq!(rm_solve(sc, &mut sol), RmStatus::Ok, "{}", last_error());
        assert_eq!(last_error(), "");

        let mut k = 0u64;
        assert_eq!(rm_solution_couples(sol, 0, &mut k), RmStatus::Ok);
        assert_eq!(k, 2);
        assert_eq!(rm_solution_couples(sol, 1, &mut k), RmStatus::BadArgument);
        assert!(last_error().contains("no buyer 1"));

        let mut s = ptr::null_mut();
        assert_eq!(rm_solution_json(sol, &mut s), RmStatus::Ok);
        let solution = take(s);
        assert_eq!(rm_solution_report_json(sol, &mut s), RmStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert!(report["verification"]["violations"]
            .as_array()
            .unwrap()
            .is_empty());

        assert_eq!(rm_solution_trace_jsonl(sol, &mut s), RmStatus::Ok);
        let trace = CString::new(take(s)).unwrap();
        assert_eq!(rm_replay(trace.as_ptr(), &mut s), RmStatus::Ok);
        assert_eq!(take(s), solution);

        rm_solution_free(sol);
        rm_scenario_free(sc);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(
            rm_scenario_from_json(ptr::null(), &mut sc),
            RmStatus::BadArgument
        );
        assert!(sc.is_null());

        let broken = CString::new(MARKET.replace("1/10", "1/0")).unwrap();
        assert_eq!(
            rm_scenario_from_json(broken.as_ptr(), &mut sc),
            RmStatus::Parse
        );
        assert!(!last_error().is_empty());

        let poor = CString::new(MARKET.replace("\"24\"", "\"8\"")).unwrap();
        assert_eq!(
            rm_scenario_from_json(poor.as_ptr(), &mut sc),
            RmStatus::Invalid
        );
        assert!(last_error().contains("clause"), "{}", last_error());

        assert_eq!(rm_scenario_generate(1, 0, 1, 5, &mut sc), RmStatus::Invalid);

        let junk = CString::new("{\"init\": 1}\n").unwrap();
        let mut s = ptr::null_mut();
        assert_ne!(rm_replay(junk.as_ptr(), &mut s), RmStatus::Ok);
        assert!(s.is_null());

        let mut sol = ptr::null_mut();
        assert_eq!(rm_solve(ptr::null(), &mut sol), RmStatus::BadArgument);

        // Freeing null is a no-op.
        rm_scenario_free(ptr::null_mut());
        rm_solution_free(ptr::null_mut());
        rm_string_free(ptr::null_mut());
    }
}

#[test]
fn generated_crisis_runs_but_does_not_solve() {
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(rm_scenario_generate(4, 3, 2, 8, &mut sc), RmStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(rm_scenario_to_json(sc, &mut s), RmStatus::Ok);
        let mut json: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        rm_scenario_free(sc);

        json["kind"] = "crisis".into();
        json["rounds"] = 3.into();
        json["mode"] = "restricted".into();
        let sc = scenario(&json.to_string());
        let mut sol = ptr::null_mut();
        assert_eq!(rm_solve(sc, &mut sol), RmStatus::Invalid);
        assert_eq!(rm_crisis_run(sc, &mut s), RmStatus::Ok, "{}", last_error());
        let report: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(report["rounds"].as_array().unwrap().len(), 3);
        rm_scenario_free(sc);
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "rights_market.h"

int main(void) {
    RmScenario *sc = NULL;
    RmSolution *sol = NULL;
    char *json = NULL;
    uint64_t k = 0;
    if (rm_scenario_generate(7, 3, 2, 9, &sc) != RM_STATUS_OK) return 1;
    if (rm_solve(sc, &sol) != RM_STATUS_OK) return 2;
    if (rm_solution_couples(sol, 0, &k) != RM_STATUS_OK) return 3;
    if (rm_solution_json(sol, &json) != RM_STATUS_OK) return 4;
    if (strstr(json, "price_good") == NULL) return 5;
    rm_string_free(json);
    if (rm_solve(NULL, &sol) != RM_STATUS_BAD_ARGUMENT) return 6;
    if (strlen(rm_last_error_message()) == 0) return 7;
    rm_solution_free(sol);
    rm_scenario_free(sc);
    printf("ok %s\n", rm_version());
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_against_header() {
    let Some(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let target = std::env::current_exe().unwrap();
    let profile_dir = target.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("librights_market_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    let exe = tmp.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C program failed to compile");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn which_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
}
