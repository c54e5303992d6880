use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use statrom_ffi::*;

const SMALL: &str = "elements = 20\nref_elements = 60\nsamples = 16\ntraining_points = 6\nn_sensors = 4\nn_obs = 3\nm = 6\n";

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(statrom_last_error()) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut StatromConfig {
    let mut cfg = ptr::null_mut();
    let status = unsafe { statrom_config_parse(cstr(text).as_ptr(), &mut cfg) };
    assert_eq!(status, StatromStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn full_round_trip() {
    let cfg = config(SMALL);
    unsafe {
        let mut art = ptr::null_mut();
        assert_eq!(statrom_offline(cfg, &mut art), StatromStatus::Ok, "{}", last_error());
        let mut nodes = 0;
        assert_eq!(statrom_artifacts_nodes(art, &mut nodes), StatromStatus::Ok);
        assert_eq!(nodes, 21);

        let mut ds = ptr::null_mut();
        assert_eq!(statrom_generate_data(cfg, 460.0, &mut ds), StatromStatus::Ok, "{}", last_error());
        let (mut ny, mut no) = (0, 0);
        assert_eq!(statrom_dataset_shape(ds, &mut ny, &mut no), StatromStatus::Ok);
        assert_eq!((ny, no), (4, 3));
        let mut buf = vec![0.0; 12];
        let mut written = 0;
        assert_eq!(statrom_dataset_readings(ds, StatromChannel::Real, buf.as_mut_ptr(), 2, &mut written), StatromStatus::BufferTooSmall);
        assert_eq!(written, 12);
        assert_eq!(statrom_dataset_readings(ds, StatromChannel::Real, buf.as_mut_ptr(), 12, &mut written), StatromStatus::Ok);
        assert!(buf.iter().all(|v| v.is_finite()) && buf.iter().any(|v| *v != 0.0));

        let mut res = ptr::null_mut();
        assert_eq!(statrom_online(art, ds, true, &mut res), StatromStatus::Ok, "{}", last_error());
        for m in [StatromMethod::FullOrder, StatromMethod::Classical, StatromMethod::StatRom] {
            let (mut err, mut sd) = (f64::NAN, f64::NAN);
            assert_eq!(statrom_result_error(res, m, StatromChannel::Real, &mut err, &mut sd), StatromStatus::Ok);
            assert!(err.is_finite() && err > 0.0 && sd > 0.0, "{m:?}: {err} {sd}");
            let mut field = vec![0.0; nodes];
            assert_eq!(statrom_result_field(res, m, StatromChannel::Real, field.as_mut_ptr(), nodes, ptr::null_mut()), StatromStatus::Ok);
        }
        // A real 1D problem carries no imaginary channel.
        assert_eq!(
            statrom_result_error(res, StatromMethod::StatRom, StatromChannel::Imag, ptr::null_mut(), ptr::null_mut()),
            StatromStatus::InvalidInput
        );

        statrom_result_free(res);
        statrom_dataset_free(ds);
        statrom_artifacts_free(art);
        statrom_config_free(cfg);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(statrom_config_parse(cstr("m = zero\n").as_ptr(), &mut cfg), StatromStatus::Config);
        assert!(cfg.is_null());
        assert!(last_error().contains("`m`"), "{}", last_error());
        assert_eq!(statrom_config_parse(ptr::null(), &mut cfg), StatromStatus::NullPointer);
        assert_eq!(statrom_config_parse(cstr("").as_ptr(), ptr::null_mut()), StatromStatus::NullPointer);
        let bad = [0xffu8, 0];
        assert_eq!(statrom_config_parse(bad.as_ptr().cast(), &mut cfg), StatromStatus::InvalidUtf8);

        let cfg = config(SMALL);
        assert_eq!(statrom_config_set(cfg, cstr("frequencies").as_ptr(), cstr("").as_ptr()), StatromStatus::Config);
        assert_eq!(statrom_config_set(cfg, cstr("m").as_ptr(), cstr("3").as_ptr()), StatromStatus::Ok);
        assert_eq!(statrom_run_command(cfg, cstr("fly").as_ptr(), ptr::null()), StatromStatus::InvalidInput);
        let mut ds = ptr::null_mut();
        assert_eq!(statrom_generate_data(cfg, -1.0, &mut ds), StatromStatus::InvalidInput);
        assert_eq!(statrom_offline(ptr::null(), &mut ptr::null_mut()), StatromStatus::NullPointer);
        statrom_config_free(cfg);
        statrom_config_free(ptr::null_mut());
    }
}

#[test]
fn commands_run_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&format!("{SMALL}m_min = 1\nm_max = 3\n"));
    let out = cstr(dir.path().to_str().unwrap());
    let status = unsafe { statrom_run_command(cfg, cstr("converge-rom").as_ptr(), out.as_ptr()) };
    assert_eq!(status, StatromStatus::Ok, "{}", last_error());
    let text = std::fs::read_to_string(dir.path().join("converge_rom.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    unsafe { statrom_config_free(cfg) };
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_owned()
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "statrom.h"

int main(void) {
    StatromConfig *cfg = NULL;
    if (statrom_config_parse("elements = 20\nref_elements = 60\nsamples = 8\nbogus = 1\n", &cfg) != STATROM_STATUS_CONFIG) return 1;
    if (cfg != NULL) return 2;
    if (statrom_last_error()[0] == '\0') return 3;
    if (statrom_config_parse("elements = 20\nref_elements = 60\nsamples = 8\ntraining_points = 4\n", &cfg) != STATROM_STATUS_OK) return 4;
    StatromArtifacts *art = NULL;
    if (statrom_offline(cfg, &art) != STATROM_STATUS_OK) return 5;
    size_t nodes = 0;
    statrom_artifacts_nodes(art, &nodes);
    printf("%zu\n", nodes);
    statrom_artifacts_free(art);
    statrom_config_free(cfg);
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let Ok(cc) = std::env::var("CC").or_else(|_| which("cc")) else {
        eprintln!("no C compiler on PATH; skipping");
        return;
    };
    let lib = target_dir().join("libstatrom_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl"])
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "21");
}

fn which(name: &str) -> Result<String, ()> {
    let path = std::env::var_os("PATH").ok_or(())?;
    std::env::split_paths(&path)
        .map(|d| d.join(name))
        .find(|p| p.is_file())
        .map(|p| p.to_string_lossy().into_owned())
        .ok_or(())
}
