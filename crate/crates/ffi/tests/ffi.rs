use std::ffi::{CStr, CString};
use std::ptr;

use toasel_ffi::*;

const OPEN: &str = r#"{"bounds": {"min": [0, 0], "max": [10, 10]}, "default_ue_height": 1,
    "walls": [],
    "aps": [{"id": 0, "pos": [0.5, 1.0, 2.5]}, {"id": 1, "pos": [9.2, 0.5, 2.5]},
            {"id": 2, "pos": [9.5, 8.7, 2.5]}, {"id": 3, "pos": [1.0, 9.4, 2.5]},
            {"id": 4, "pos": [5.3, 0.8, 2.5]}]}"#;

fn last_error() -> String {
    let p = toasel_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scene() -> *mut ToaselScene {
    let json = CString::new(OPEN).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_scene_load(json.as_ptr(), &mut out) },
        ToaselStatus::Ok
    );
    assert!(!out.is_null());
    out
}

#[test]
fn load_count_and_free() {
    let s = scene();
    let mut n = 0usize;
    assert_eq!(
        unsafe { toasel_scene_ap_count(s, &mut n) },
        ToaselStatus::Ok
    );
    assert_eq!(n, 5);
    unsafe { toasel_scene_free(s) };
    unsafe { toasel_scene_free(ptr::null_mut()) };
}

#[test]
fn parse_errors_are_reported() {
    let json = CString::new(r#"{"bounds": 3}"#).unwrap();
    let mut out = ptr::null_mut();
    let st = unsafe { toasel_scene_load(json.as_ptr(), &mut out) };
    assert_eq!(st, ToaselStatus::Parse);
    assert!(out.is_null());
    assert!(last_error().contains("bounds"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_scene_load(ptr::null(), &mut out) },
        ToaselStatus::NullPointer
    );
    let mut n = 0usize;
    assert_eq!(
        unsafe { toasel_scene_ap_count(ptr::null(), &mut n) },
        ToaselStatus::NullPointer
    );
}

#[test]
fn invalid_utf8_is_rejected() {
    let bytes = CString::new(vec![0xff, 0xfe]).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_scene_load(bytes.as_ptr(), &mut out) },
        ToaselStatus::InvalidUtf8
    );
}

#[test]
fn min_delay_in_free_space() {
    let s = scene();
    let (tx, rx) = ([1.0, 1.0, 1.0], [4.0, 5.0, 1.0]);
    let (mut toa, mut n) = (0.0, 99usize);
    let st = unsafe { toasel_min_delay_toa(s, tx.as_ptr(), rx.as_ptr(), 3, &mut toa, &mut n) };
    assert_eq!(st, ToaselStatus::Ok);
    assert!((toa - 5.0 / 299_792_458.0).abs() < 1e-20);
    assert_eq!(n, 0);
    let st = unsafe { toasel_min_delay_toa(s, tx.as_ptr(), rx.as_ptr(), 7, &mut toa, &mut n) };
    assert_eq!(st, ToaselStatus::Invalid);
    unsafe { toasel_scene_free(s) };
}

#[test]
fn table_round_trip_and_k() {
    let s = scene();
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_table_build(s, 3, &mut t) },
        ToaselStatus::Ok
    );
    let mut k = 0usize;
    assert_eq!(unsafe { toasel_table_k(t, 0, &mut k) }, ToaselStatus::Ok);
    assert!((3..=4).contains(&k));
    assert_eq!(
        unsafe { toasel_table_k(t, 9, &mut k) },
        ToaselStatus::Invalid
    );

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { toasel_table_save(t, &mut text) }, ToaselStatus::Ok);
    let mut t2 = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_table_load(text, &mut t2) },
        ToaselStatus::Ok
    );
    let mut text2 = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_table_save(t2, &mut text2) },
        ToaselStatus::Ok
    );
    unsafe {
        assert_eq!(CStr::from_ptr(text), CStr::from_ptr(text2));
        toasel_string_free(text);
        toasel_string_free(text2);
        toasel_table_free(t);
        toasel_table_free(t2);
        toasel_scene_free(s);
    }
}

#[test]
fn measure_then_estimate() {
    let s = scene();
    let mut t = ptr::null_mut();
    assert_eq!(
        unsafe { toasel_table_build(s, 3, &mut t) },
        ToaselStatus::Ok
    );
    let ue = [3.0, 6.0, 1.0];
    let (mut toas, mut valid) = ([0.0; 5], [0u8; 5]);
    let st = unsafe {
        toasel_measure(
            s,
            ue.as_ptr(),
            3,
            0.0,
            1,
            toas.as_mut_ptr(),
            valid.as_mut_ptr(),
            5,
        )
    };
    assert_eq!(st, ToaselStatus::Ok);
    assert!(valid.iter().all(|&v| v == 1));

    for strategy in ["all", "union", "cardinality", "fixed:5"] {
        let name = CString::new(strategy).unwrap();
        let (mut xyz, mut n) = ([0.0; 3], 0usize);
        let st = unsafe {
            toasel_estimate(
                s,
                t,
                name.as_ptr(),
                toas.as_ptr(),
                valid.as_ptr(),
                5,
                xyz.as_mut_ptr(),
                &mut n,
            )
        };
        assert_eq!(st, ToaselStatus::Ok, "{strategy}: {}", last_error());
        assert!(n >= 3);
        let pe = ((xyz[0] - ue[0]).powi(2) + (xyz[1] - ue[1]).powi(2)).sqrt();
        assert!(pe < 1e-6, "{strategy}: pe {pe}");
    }

    // table-free strategies work without a table
    let all = CString::new("all").unwrap();
    let mut xyz = [0.0; 3];
    let st = unsafe {
        toasel_estimate(
            s,
            ptr::null(),
            all.as_ptr(),
            toas.as_ptr(),
            valid.as_ptr(),
            5,
            xyz.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, ToaselStatus::Ok);
    let union = CString::new("union").unwrap();
    let st = unsafe {
        toasel_estimate(
            s,
            ptr::null(),
            union.as_ptr(),
            toas.as_ptr(),
            valid.as_ptr(),
            5,
            xyz.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, ToaselStatus::NullPointer);

    // too few valid entries
    let few = [1u8, 1, 0, 0, 0];
    let st = unsafe {
        toasel_estimate(
            s,
            t,
            all.as_ptr(),
            toas.as_ptr(),
            few.as_ptr(),
            5,
            xyz.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, ToaselStatus::InsufficientMeasurements);
    assert!(last_error().contains("insufficient"));

    let bad = CString::new("fixed:2").unwrap();
    let st = unsafe {
        toasel_estimate(
            s,
            t,
            bad.as_ptr(),
            toas.as_ptr(),
            valid.as_ptr(),
            5,
            xyz.as_mut_ptr(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, ToaselStatus::Invalid);

    unsafe {
        toasel_table_free(t);
        toasel_scene_free(s);
    }
}

#[test]
fn header_declares_the_api() {
    let header = include_str!("../include/toasel.h");
    for name in [
        "toasel_scene_load",
        "toasel_scene_free",
        "toasel_min_delay_toa",
        "toasel_table_build",
        "toasel_estimate",
        "toasel_last_error_message",
        "typedef struct ToaselScene ToaselScene",
        "TOASEL_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(format!("{dir}/include"))
        .arg(format!("{dir}/tests/c/smoke.c"))
        .status();
    match status {
        Ok(s) => assert!(s.success(), "{cc} rejected the header"),
        Err(_) => eprintln!("no C compiler found, skipping"),
    }
}
