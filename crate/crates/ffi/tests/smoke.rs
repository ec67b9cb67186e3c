//! Drives the C surface end to end from Rust: handle lifecycle, both run
//! modes, column extraction, the generated header, and every error path
//! with its status code.

use dissipaton_pinn_ffi::*;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::path::Path;
use std::ptr;

/// Spinless level pinned at its bath's chemical potential: stationary
/// dynamics, so both runs are fast and easy to train.
const RUN_FILE: &str = r#"
[system]
n_s = 1
epsilon0 = 0.15
mu_equilibrium = 0.3

[bath]
n_pade = 1

[[bath.reservoir]]
name = "left"
beta = 2.0
mu = 0.3
width = 1.2
coupling = [0.4]

[network]
n_h = 8
layers = 3
features = ["t", "t^2"]
seed = 11

[schedule]
width = 0.35
stages = [[0.05, 5.0e-3]]
delta_t = 1e-4
max_iters = 250

[integrator]
dt = 1e-3
horizon = 0.35

[output]
sample_dt = 0.05
"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { dqme_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(buf.len() - 1)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).expect("error messages are UTF-8")
}

fn handle(toml: &str) -> *mut DqmeSimulation {
    let text = CString::new(toml).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { dqme_simulation_from_toml(text.as_ptr(), &mut sim) };
    assert_eq!(status, DqmeStatus::Ok, "setup failed: {}", last_error());
    assert!(!sim.is_null());
    sim
}

fn column(sim: *const DqmeSimulation, col: DqmeColumn) -> Vec<f64> {
    let n = unsafe { dqme_trajectory_len(sim) };
    let mut buf = vec![f64::NAN; n];
    let status = unsafe { dqme_trajectory_column(sim, col, buf.as_mut_ptr(), buf.len()) };
    assert_eq!(status, DqmeStatus::Ok, "{}", last_error());
    buf
}

#[test]
fn the_generated_header_declares_the_surface() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dissipaton_pinn.h");
    let header = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing generated header {}: {e}", path.display()));
    for needle in [
        "DISSIPATON_PINN_H",
        "struct DqmeSimulation",
        "DQME_STATUS_OK",
        "DQME_STATUS_BUFFER_TOO_SMALL",
        "DQME_COLUMN_OCCUPATION_UP",
        "dqme_simulation_from_toml",
        "dqme_simulation_from_file",
        "dqme_simulation_free",
        "dqme_run_reference",
        "dqme_run_training",
        "dqme_trajectory_column",
        "dqme_correlation",
        "dqme_gradient_audit",
        "dqme_last_error",
        "dqme_version",
    ] {
        assert!(header.contains(needle), "header lacks `{needle}`");
    }
}

#[test]
fn the_version_string_is_a_version() {
    let v = unsafe { CStr::from_ptr(dqme_version()) }.to_str().unwrap();
    assert!(
        v.split('.').count() >= 2 && v.split('.').all(|p| p.parse::<u64>().is_ok()),
        "odd version string {v:?}"
    );
}

#[test]
fn reference_and_training_flow_through_one_handle() {
    let sim = handle(RUN_FILE);
    unsafe {
        // One reservoir, one orbital, one Padé pole: two modes per sign.
        assert_eq!(dqme_mode_count(sim), 4);
        assert!(dqme_hierarchy_dim(sim) > 0);
        assert!(dqme_generator_nnz(sim) > 0);

        // Nothing has run yet.
        assert_eq!(dqme_trajectory_len(sim), 0);
        let mut scratch = [0.0f64; 1];
        assert_eq!(
            dqme_trajectory_column(sim, DqmeColumn::Time, scratch.as_mut_ptr(), 1),
            DqmeStatus::Config
        );
        assert!(last_error().contains("no trajectory"));
        assert_eq!(
            dqme_trace_drift(sim, scratch.as_mut_ptr()),
            DqmeStatus::Config
        );

        assert_eq!(dqme_run_reference(sim), DqmeStatus::Ok, "{}", last_error());
    }
    // horizon / sample_dt = 7 cells, endpoints included.
    let n = unsafe { dqme_trajectory_len(sim) };
    assert_eq!(n, 8);

    let times = column(sim, DqmeColumn::Time);
    assert_eq!(times[0], 0.0);
    assert!((times[n - 1] - 0.35).abs() < 1e-12);
    assert!(times.windows(2).all(|w| w[1] > w[0]));

    let trace_re = column(sim, DqmeColumn::TraceRe);
    let trace_im = column(sim, DqmeColumn::TraceIm);
    for (re, im) in trace_re.iter().zip(&trace_im) {
        assert!(((re - 1.0).powi(2) + im * im).sqrt() < 1e-6);
    }
    let n_ref = column(sim, DqmeColumn::OccupationUp);
    assert!(n_ref.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));

    unsafe {
        // A short buffer is refused without touching it.
        let mut short = vec![-7.0f64; n - 1];
        assert_eq!(
            dqme_trajectory_column(sim, DqmeColumn::Time, short.as_mut_ptr(), short.len()),
            DqmeStatus::BufferTooSmall
        );
        assert!(short.iter().all(|v| *v == -7.0));
        assert!(last_error().contains("needs 8"));

        assert_eq!(dqme_run_training(sim, 0), DqmeStatus::Ok, "{}", last_error());
    }
    assert_eq!(unsafe { dqme_trajectory_len(sim) }, n);
    let n_pinn = column(sim, DqmeColumn::OccupationUp);
    for (a, b) in n_pinn.iter().zip(&n_ref) {
        assert!(
            (a - b).abs() < 0.15,
            "network occupation {a} strays from reference {b}"
        );
    }
    let mut drift = f64::NAN;
    unsafe {
        assert_eq!(dqme_trace_drift(sim, &mut drift), DqmeStatus::Ok);
        assert!(drift < 5e-2, "trained trace drift {drift}");
        dqme_simulation_free(sim);
    }
}

#[test]
fn correlation_matches_the_library_bitwise() {
    use dissipaton_pinn::bath::{correlation_from_modes, expand_bath, Sigma};
    use dissipaton_pinn::config::RunConfig;

    let cfg = RunConfig::from_toml(RUN_FILE).unwrap();
    let modes = expand_bath(&cfg.bath_spec(), 1).unwrap();

    let sim = handle(RUN_FILE);
    for (sign, sigma) in [(-1, Sigma::Minus), (1, Sigma::Plus)] {
        for t in [0.0, 0.3, 1.7] {
            let want = correlation_from_modes(&modes, 0, 0, sigma, t).unwrap();
            let (mut re, mut im) = (f64::NAN, f64::NAN);
            let status = unsafe { dqme_correlation(sim, 0, 0, sign, t, &mut re, &mut im) };
            assert_eq!(status, DqmeStatus::Ok);
            assert_eq!((re, im), (want.re, want.im));
        }
    }
    unsafe {
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            dqme_correlation(sim, 0, 0, 0, 0.1, &mut re, &mut im),
            DqmeStatus::Config
        );
        assert!(last_error().contains("sigma"));
        assert_eq!(
            dqme_correlation(sim, 0, 0, 1, -0.1, &mut re, &mut im),
            DqmeStatus::Config
        );
        dqme_simulation_free(sim);
    }
}

#[test]
fn failures_carry_codes_and_messages() {
    unsafe {
        // NULL arguments.
        assert_eq!(
            dqme_simulation_from_toml(ptr::null(), ptr::null_mut()),
            DqmeStatus::NullArgument
        );
        let mut sim = ptr::null_mut();
        assert_eq!(
            dqme_simulation_from_toml(ptr::null(), &mut sim),
            DqmeStatus::NullArgument
        );
        assert!(sim.is_null());

        // Malformed run file: missing required keys.
        let bad = CString::new("[system]\n").unwrap();
        assert_eq!(
            dqme_simulation_from_toml(bad.as_ptr(), &mut sim),
            DqmeStatus::Config
        );
        assert!(sim.is_null());
        let msg = last_error();
        assert!(!msg.is_empty());

        // Truncated retrieval still NUL-terminates and reports the full length.
        let mut tiny = [0x55 as c_char; 8];
        let full = dqme_last_error(tiny.as_mut_ptr(), tiny.len());
        assert_eq!(full, msg.len());
        assert_eq!(tiny[7], 0);
        let head: Vec<u8> = tiny[..7].iter().map(|&c| c as u8).collect();
        assert_eq!(&head, &msg.as_bytes()[..7]);

        // Not UTF-8.
        let garbage = CString::new(vec![0xffu8, 0xfe]).unwrap();
        assert_eq!(
            dqme_simulation_from_toml(garbage.as_ptr(), &mut sim),
            DqmeStatus::InvalidUtf8
        );

        // Unreadable path.
        let missing = CString::new("/nonexistent/run.toml").unwrap();
        assert_eq!(
            dqme_simulation_from_file(missing.as_ptr(), &mut sim),
            DqmeStatus::Io
        );

        // Freeing NULL is a no-op.
        dqme_simulation_free(ptr::null_mut());
    }
}

#[test]
fn a_run_file_on_disk_builds_the_same_simulation() {
    let dir = std::env::temp_dir().join(format!("dqme-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.toml");
    std::fs::write(&path, RUN_FILE).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut sim = ptr::null_mut();
    let status = unsafe { dqme_simulation_from_file(c_path.as_ptr(), &mut sim) };
    assert_eq!(status, DqmeStatus::Ok, "{}", last_error());

    let twin = handle(RUN_FILE);
    unsafe {
        assert_eq!(dqme_hierarchy_dim(sim), dqme_hierarchy_dim(twin));
        assert_eq!(dqme_generator_nnz(sim), dqme_generator_nnz(twin));
        dqme_simulation_free(sim);
        dqme_simulation_free(twin);
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn the_gradient_audit_is_reachable_from_c() {
    let mut worst = f64::NAN;
    let status = unsafe { dqme_gradient_audit(2, &mut worst) };
    assert_eq!(status, DqmeStatus::Ok, "{}", last_error());
    assert!(worst.is_finite() && worst >= 0.0 && worst < 1e-6, "worst {worst}");
}
