use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use pdk_ffi::*;

fn preset(name: &str) -> *mut PdkProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pdk_problem_preset(name.as_ptr(), &mut p) }, PdkStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let msg = pdk_last_error_message();
    assert!(!msg.is_null());
    unsafe { CStr::from_ptr(msg) }.to_string_lossy().into_owned()
}

#[test]
fn solve_case1p_matches_the_library() {
    let p = preset("case1p");
    let mut sol = PdkSolution::default();
    assert_eq!(unsafe { pdk_solve(p, &mut sol) }, PdkStatus::Ok);
    assert!((sol.b_star - 3.797618422927856).abs() < 1e-9);
    assert!((sol.b_bar - 5.135054924486524).abs() < 1e-9);
    assert!((sol.phi_q - 0.0862907813126304).abs() < 1e-12);
    assert_eq!(sol.positive_criterion, 1);

    let xs = [0.0, 1.0, sol.b_star, 10.0];
    let mut vs = [0.0; 4];
    assert_eq!(
        unsafe { pdk_value(p, sol.b_star, xs.as_ptr(), xs.len(), vs.as_mut_ptr()) },
        PdkStatus::Ok
    );
    assert!((vs[0] - 2.557834255429779).abs() < 1e-9);
    assert!(vs.windows(2).all(|w| w[0] < w[1]));

    let mut w0 = 0.0;
    assert_eq!(unsafe { pdk_scale_w(p, 0, 0.0, &mut w0) }, PdkStatus::Ok);
    assert!((w0 - 1.0 / 1.5).abs() < 1e-14);
    unsafe { pdk_problem_free(p) };
}

#[test]
fn explicit_model_equals_preset() {
    let (rates, lambdas) = ([1.0], [1.0]);
    let mut p = ptr::null_mut();
    let status = unsafe { pdk_problem_new(1.5, 0.0, rates.as_ptr(), lambdas.as_ptr(), 1, 0.05, 0.5, &mut p) };
    assert_eq!(status, PdkStatus::Ok);
    let q = preset("case1p");
    let (mut a, mut b) = (PdkSolution::default(), PdkSolution::default());
    unsafe {
        assert_eq!(pdk_solve(p, &mut a), PdkStatus::Ok);
        assert_eq!(pdk_solve(q, &mut b), PdkStatus::Ok);
        pdk_problem_free(p);
        pdk_problem_free(q);
    }
    assert_eq!(a, b);
}

#[test]
fn json_constructor_and_config_errors() {
    let good = CString::new(r#"{"sigma":0.2,"c":0.0,"jumps":[{"rate":1,"lambda":1}],"q":0.05,"r":0.5}"#).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pdk_problem_from_json(good.as_ptr(), &mut p) }, PdkStatus::Ok);
    let mut sol = PdkSolution::default();
    assert_eq!(unsafe { pdk_solve(p, &mut sol) }, PdkStatus::Ok);
    assert_eq!((sol.b_star, sol.b_bar), (0.0, 0.0));
    unsafe { pdk_problem_free(p) };

    let bad = CString::new("{not json").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { pdk_problem_from_json(bad.as_ptr(), &mut p) },
        PdkStatus::Config
    );
    assert!(p.is_null());
    assert!(last_error().contains("malformed config"));

    let unknown = CString::new("case9").unwrap();
    assert_eq!(
        unsafe { pdk_problem_preset(unknown.as_ptr(), &mut p) },
        PdkStatus::Config
    );
}

#[test]
fn invalid_models_and_domain_errors() {
    let (rates, lambdas) = ([1.0], [-1.0]);
    let mut p = ptr::null_mut();
    let status = unsafe { pdk_problem_new(1.5, 0.0, rates.as_ptr(), lambdas.as_ptr(), 1, 0.05, 0.5, &mut p) };
    assert_eq!(status, PdkStatus::InvalidModel);
    assert!(p.is_null());
    assert!(last_error().starts_with("invalid model"));

    let q = preset("case1p");
    let mut v = 0.0;
    let x = 1.0;
    assert_eq!(unsafe { pdk_value(q, -1.0, &x, 1, &mut v) }, PdkStatus::Domain);
    let mut est = PdkEstimate::default();
    assert_eq!(
        unsafe { pdk_simulate(q, 1.0, 1.0, 0, 1, 1e-3, &mut est) },
        PdkStatus::Domain
    );
    unsafe { pdk_problem_free(q) };
}

#[test]
fn null_pointers_are_reported() {
    let mut sol = PdkSolution::default();
    assert_eq!(unsafe { pdk_solve(ptr::null(), &mut sol) }, PdkStatus::NullPointer);
    assert!(last_error().contains("problem"));
    let p = preset("case1");
    assert_eq!(unsafe { pdk_solve(p, ptr::null_mut()) }, PdkStatus::NullPointer);
    assert_eq!(
        unsafe { pdk_problem_preset(ptr::null(), &mut ptr::null_mut()) },
        PdkStatus::NullPointer
    );
    unsafe {
        pdk_problem_free(p);
        pdk_problem_free(ptr::null_mut());
    }
}

#[test]
fn check_and_simulate() {
    let p = preset("case1p");
    let mut report = PdkCheck::default();
    assert_eq!(unsafe { pdk_check(p, f64::NAN, &mut report) }, PdkStatus::Ok);
    assert_eq!(report.pass, 1);
    assert_eq!(unsafe { pdk_check(p, 1.0, &mut report) }, PdkStatus::Ok);
    assert_eq!(report.pass, 0);
    assert!(report.max_hjb_slack > 1e-3);

    let mut sol = PdkSolution::default();
    unsafe { pdk_solve(p, &mut sol) };
    let (mut a, mut b) = (PdkEstimate::default(), PdkEstimate::default());
    unsafe {
        assert_eq!(pdk_simulate(p, sol.b_star, 2.0, 4000, 11, 1e-3, &mut a), PdkStatus::Ok);
        assert_eq!(pdk_simulate(p, sol.b_star, 2.0, 4000, 11, 1e-3, &mut b), PdkStatus::Ok);
        pdk_problem_free(p);
    }
    assert_eq!(a, b);
    assert_eq!(a.n_paths, 4000);
    assert!((a.mean - 5.453017662864869).abs() < 4.0 * a.std_error);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pdk_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/pdk.h");
    let text = std::fs::read_to_string(&header).expect("header is generated by the build script");
    for name in [
        "pdk_problem_new",
        "pdk_problem_free",
        "pdk_solve",
        "pdk_last_error_message",
        "PDK_STATUS_NUMERICAL",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler, header syntax check skipped");
        return;
    };
    let src = std::env::temp_dir().join(format!("pdk_header_{}.c", std::process::id()));
    std::fs::write(
        &src,
        "#include \"pdk.h\"\nint main(void) { PdkSolution s; PdkProblem *p = 0; return pdk_solve(p, &s) == PDK_STATUS_NULL_POINTER ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    let _ = std::fs::remove_file(&src);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
        .ok_or(())
}
