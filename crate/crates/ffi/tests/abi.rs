use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ubdb_ffi::*;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/models")
}

fn model(name: &str) -> CString {
    CString::new(std::fs::read_to_string(models().join(name)).unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ubdb_last_error()) }.to_str().unwrap().to_string()
}

/// Take ownership of a returned string.
fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { ubdb_string_free(p) };
    s
}

struct Chain(*mut UbdbChain);

impl Chain {
    fn load(src: &CString) -> Result<Chain, (UbdbStatus, String)> {
        let mut h = ptr::null_mut();
        match unsafe { ubdb_chain_load(src.as_ptr(), &mut h) } {
            UbdbStatus::Ok => Ok(Chain(h)),
            s => Err((s, last_error())),
        }
    }

    fn check(&self, options: Option<&str>) -> (UbdbStatus, serde_json::Value) {
        let opts = options.map(|o| CString::new(o).unwrap());
        let mut out = ptr::null_mut();
        let s = unsafe { ubdb_check(self.0, opts.as_ref().map_or(ptr::null(), |o| o.as_ptr()), &mut out) };
        let doc = if out.is_null() {
            serde_json::Value::Null
        } else {
            serde_json::from_str(&take(out)).unwrap()
        };
        (s, doc)
    }
}

impl Drop for Chain {
    fn drop(&mut self) {
        unsafe { ubdb_chain_free(self.0) };
    }
}

#[test]
fn load_check_and_free() {
    let chain = Chain::load(&model("relation.ubdb")).unwrap();
    assert_eq!(unsafe { ubdb_chain_machine_count(chain.0) }, 2);
    let (s, doc) = chain.check(None);
    assert_eq!(s, UbdbStatus::Ok);
    assert!(doc["records"].as_array().unwrap().iter().all(|r| r["verdict"] == "holds"));
    assert_eq!(last_error(), "");

    let (s, doc) = chain.check(Some(r#"{"machine": "M0", "scope": {"A_SET": 3}, "symmetry": false}"#));
    assert_eq!(s, UbdbStatus::Ok);
    assert!(doc["records"].as_array().unwrap().iter().all(|r| r["machine"] == "M0"));
    let (s, doc) = chain.check(Some(r#"{"refinement": true}"#));
    assert_eq!(s, UbdbStatus::Ok);
    assert!(doc["records"].as_array().unwrap().iter().all(|r| r["abstract_machine"] == "M0"));
}

#[test]
fn findings_are_reported() {
    let chain = Chain::load(&model("staff_department.ubdb")).unwrap();
    let (s, doc) = chain.check(None);
    assert_eq!(s, UbdbStatus::Findings);
    let violated: Vec<_> = doc["records"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["verdict"] == "violated")
        .collect();
    assert_eq!(violated.len(), 2);
    assert!(violated.iter().all(|r| r["note"].as_str().unwrap().contains("circular")));
}

#[test]
fn load_errors_map_to_codes() {
    let cases = [
        ("machine M0\n  event e\n", UbdbStatus::Parse),
        ("machine M1 refines M9\nend\n", UbdbStatus::Resolve),
        (
            "context C0\n  sets S\nend\nmachine M0 sees C0\n  class K : S kind primary\n  event addK constructor of K\n    any k : S\n    then\n      @act1 K := K \\/ {k |-> k}\n  end\nend\n",
            UbdbStatus::Type,
        ),
    ];
    for (src, want) in cases {
        let (code, msg) = Chain::load(&CString::new(src).unwrap()).err().unwrap();
        assert_eq!(code, want, "{src}");
        assert!(!msg.is_empty());
    }
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { ubdb_chain_load(ptr::null(), &mut h) }, UbdbStatus::NullArgument);
    assert!(h.is_null());
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { ubdb_chain_load(bad.as_ptr().cast(), &mut h) },
        UbdbStatus::InvalidUtf8
    );
    let src = model("relation.ubdb");
    assert_eq!(unsafe { ubdb_chain_load(src.as_ptr(), ptr::null_mut()) }, UbdbStatus::NullArgument);
}

#[test]
fn bad_options_are_rejected() {
    let chain = Chain::load(&model("relation.ubdb")).unwrap();
    for opts in ["{", r#"{"machine": "M7"}"#, r#"{"scope": {"NOPE": 2}}"#, r#"{"colour": true}"#] {
        let (s, doc) = chain.check(Some(opts));
        assert_eq!(s, UbdbStatus::Options, "{opts}");
        assert!(doc.is_null());
        assert!(!last_error().is_empty());
    }
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ubdb_check(ptr::null(), ptr::null(), &mut out) }, UbdbStatus::NullArgument);
    assert_eq!(unsafe { ubdb_check(chain.0, ptr::null(), ptr::null_mut()) }, UbdbStatus::NullArgument);
}

#[test]
fn lint_generate_and_format() {
    let chain = Chain::load(&model("sres.ubdb")).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { ubdb_lint(chain.0, &mut out) }, UbdbStatus::Ok);
    let lint: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
    assert!(lint["findings"].is_array());

    let (mut sql, mut manifest) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { ubdb_generate_sql(chain.0, ptr::null(), &mut sql, &mut manifest) }, UbdbStatus::Ok);
    let sql = take(sql);
    assert!(sql.contains("CREATE TABLE Program"));
    let manifest: serde_json::Value = serde_json::from_str(&take(manifest)).unwrap();
    assert_eq!(manifest["machine"], "M4");
    // Same bytes as the library produces directly.
    let direct = ubdb::sqlgen::render_script(
        &ubdb::sqlgen::generate(
            &ubdb::resolve::resolve(&ubdb::parser::parse_chain(model("sres.ubdb").to_str().unwrap()).unwrap()).unwrap(),
            None,
        )
        .unwrap(),
    );
    assert_eq!(sql, direct);

    let m9 = CString::new("M9").unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { ubdb_generate_sql(chain.0, m9.as_ptr(), &mut a, &mut b) }, UbdbStatus::Options);
    assert!(a.is_null() && b.is_null());

    let src = model("relation.ubdb");
    let mut once = ptr::null_mut();
    assert_eq!(unsafe { ubdb_format(src.as_ptr(), &mut once) }, UbdbStatus::Ok);
    let once = CString::new(take(once)).unwrap();
    let mut twice = ptr::null_mut();
    assert_eq!(unsafe { ubdb_format(once.as_ptr(), &mut twice) }, UbdbStatus::Ok);
    assert_eq!(take(twice), once.to_str().unwrap());
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        ubdb_chain_free(ptr::null_mut());
        ubdb_string_free(ptr::null_mut());
        assert_eq!(ubdb_chain_machine_count(ptr::null()), 0);
    }
    let v = unsafe { CStr::from_ptr(ubdb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "ubdb.h"

int main(int argc, char **argv) {
    FILE *f = fopen(argv[1], "rb");
    if (!f) return 10;
    static char src[1 << 20];
    size_t n = fread(src, 1, sizeof src - 1, f);
    fclose(f);
    src[n] = 0;

    UbdbChain *chain = NULL;
    if (ubdb_chain_load(src, &chain) != UBDB_STATUS_OK) return 11;
    char *report = NULL;
    UbdbStatus s = ubdb_check(chain, "{\"machine\": \"M0\"}", &report);
    if (s != UBDB_STATUS_OK || strstr(report, "\"holds\"") == NULL) return 12;
    ubdb_string_free(report);
    if (ubdb_check(chain, "{\"machine\": \"nope\"}", &report) != UBDB_STATUS_OPTIONS) return 13;
    if (strstr(ubdb_last_error(), "nope") == NULL) return 14;
    ubdb_chain_free(chain);
    if (ubdb_chain_load("machine", &chain) != UBDB_STATUS_PARSE) return 15;
    printf("ok %s\n", ubdb_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    // target/<profile>/deps/abi-<hash> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libubdb_ffi.a");
    assert!(lib.exists(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("smoke.c");
    std::fs::write(&c, C_PROGRAM).unwrap();
    let bin = dir.path().join("smoke");
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&c)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap_or_else(|e| panic!("cannot run {cc}: {e}"));
    assert!(status.success());
    let out = Command::new(&bin).arg(models().join("relation.ubdb")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
