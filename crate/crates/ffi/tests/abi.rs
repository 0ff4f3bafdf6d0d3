use std::ffi::CStr;
use std::path::Path;
use std::process::Command;
use std::ptr;

use boson_ffi::*;

fn last_error() -> String {
    let p = bs_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(bs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn permanent_of_all_ones() {
    // perm(J_3) = 3! = 6
    let data: Vec<f64> = (0..9).flat_map(|_| [1.0, 0.0]).collect();
    for alg in [BsPermanentAlgorithm::Naive, BsPermanentAlgorithm::Ryser, BsPermanentAlgorithm::Glynn] {
        let (mut re, mut im) = (0.0, 0.0);
        let s = unsafe { bs_permanent(data.as_ptr(), 3, alg, &mut re, &mut im) };
        assert_eq!(s, BsStatus::Ok);
        assert!((re - 6.0).abs() < 1e-12 && im.abs() < 1e-12);
    }
}

#[test]
fn permanent_size_limit_is_reported() {
    let data = vec![0.0; 2 * 40 * 40];
    let (mut re, mut im) = (0.0, 0.0);
    let s = unsafe { bs_permanent(data.as_ptr(), 40, BsPermanentAlgorithm::Ryser, &mut re, &mut im) };
    assert_eq!(s, BsStatus::Limit);
    assert!(last_error().contains("limited"));
}

#[test]
fn null_pointers_are_rejected() {
    let s = unsafe { bs_unitary_haar(4, 1, ptr::null_mut()) };
    assert_eq!(s, BsStatus::NullPointer);
    assert!(last_error().contains("out"));
    assert_eq!(unsafe { bs_unitary_dim(ptr::null()) }, 0);
    unsafe { bs_unitary_free(ptr::null_mut()) };
}

#[test]
fn unitary_round_trip() {
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_haar(5, 9, &mut u) }, BsStatus::Ok);
    assert_eq!(unsafe { bs_unitary_dim(u) }, 5);
    let mut buf = vec![0.0; 50];
    assert_eq!(unsafe { bs_unitary_copy(u, buf.as_mut_ptr(), buf.len()) }, BsStatus::Ok);
    assert_eq!(unsafe { bs_unitary_copy(u, buf.as_mut_ptr(), 49) }, BsStatus::InvalidArgument);
    let mut v = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_from_interleaved(buf.as_ptr(), 5, &mut v) }, BsStatus::Ok);
    let mut back = vec![0.0; 50];
    assert_eq!(unsafe { bs_unitary_copy(v, back.as_mut_ptr(), 50) }, BsStatus::Ok);
    assert_eq!(buf, back);
    buf[0] += 0.1;
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_from_interleaved(buf.as_ptr(), 5, &mut w) }, BsStatus::InvalidData);
    assert!(w.is_null());
    unsafe {
        bs_unitary_free(u);
        bs_unitary_free(v);
    }
}

#[test]
fn device_evolve_with_zero_power() {
    let mut d = ptr::null_mut();
    assert_eq!(unsafe { bs_device_bundled(&mut d) }, BsStatus::Ok);
    let m = unsafe { bs_device_mode_count(d) };
    let h = unsafe { bs_device_heater_count(d) };
    assert!(m > 0 && h > 0);
    let mut p = vec![0.0; h];
    assert_eq!(unsafe { bs_device_random_powers(d, 5, 100.0, 3, p.as_mut_ptr(), h) }, BsStatus::Ok);
    assert_eq!(p.iter().filter(|&&x| x > 0.0).count(), 5);
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_device_evolve(d, p.as_ptr(), h, &mut u) }, BsStatus::Ok);
    assert_eq!(unsafe { bs_unitary_dim(u) }, m);
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { bs_device_evolve(d, p.as_ptr(), h - 1, &mut bad) }, BsStatus::InvalidArgument);
    unsafe {
        bs_unitary_free(u);
        bs_device_free(d);
    }
}

#[test]
fn missing_device_file_is_rejected() {
    let mut d = ptr::null_mut();
    let s = unsafe { bs_device_load(c"/nonexistent/device.json".as_ptr(), &mut d) };
    assert_eq!(s, BsStatus::InvalidArgument);
    assert!(last_error().contains("device.json"));
    assert!(d.is_null());
}

#[test]
fn sample_and_validate() {
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_haar(12, 4, &mut u) }, BsStatus::Ok);
    let inputs = [0usize, 1, 2];
    let run = |kind| {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { bs_sample(u, inputs.as_ptr(), 3, kind, 1.0, 4000, 11, &mut s) }, BsStatus::Ok);
        s
    };
    let bs = run(BsSamplerKind::Boson);
    let uni = run(BsSamplerKind::Uniform);
    assert_eq!(unsafe { bs_samples_len(bs) }, 4000);
    assert_eq!(unsafe { bs_samples_photons(bs, 0) }, 3);
    let mut modes = [0usize; 3];
    assert_eq!(unsafe { bs_samples_modes(bs, 0, modes.as_mut_ptr(), 3) }, BsStatus::Ok);
    assert!(modes.windows(2).all(|w| w[0] <= w[1]) && modes.iter().all(|&x| x < 12));
    assert_eq!(unsafe { bs_samples_modes(bs, 4000, modes.as_mut_ptr(), 3) }, BsStatus::InvalidArgument);

    let (mut fin, mut rej) = (0i64, false);
    assert_eq!(unsafe { bs_validate(u, inputs.as_ptr(), 3, bs, BsNull::Distinguishable, &mut fin, &mut rej) }, BsStatus::Ok);
    assert!(rej && fin > 0);
    // W_k needs collision-free events.
    if unsafe { bs_validate(u, inputs.as_ptr(), 3, bs, BsNull::Uniform, &mut fin, &mut rej) } != BsStatus::Ok {
        assert!(last_error().contains("collision"));
    }
    unsafe {
        bs_samples_post_select(bs);
        bs_samples_post_select(uni);
    }
    let kept = unsafe { bs_samples_kept(bs) };
    assert!(kept > 0 && kept < 4000);
    assert_eq!(unsafe { bs_validate(u, inputs.as_ptr(), 3, bs, BsNull::Uniform, &mut fin, &mut rej) }, BsStatus::Ok);
    assert!(rej && fin > 0);
    assert_eq!(unsafe { bs_validate(u, inputs.as_ptr(), 3, uni, BsNull::Uniform, &mut fin, &mut rej) }, BsStatus::Ok);
    assert!(!rej);

    let mut again = run(BsSamplerKind::Boson);
    unsafe { bs_samples_post_select(again) };
    assert_eq!(unsafe { bs_samples_kept(again) }, kept);
    unsafe { bs_samples_free(again) };
    again = run(BsSamplerKind::Boson);
    for i in 0..100 {
        let mut a = [0usize; 3];
        let mut b = [0usize; 3];
        unsafe {
            bs_samples_modes(bs, i, a.as_mut_ptr(), 3);
            bs_samples_modes(again, i, b.as_mut_ptr(), 3);
        }
        assert_eq!(a, b);
    }
    unsafe {
        bs_samples_free(bs);
        bs_samples_free(uni);
        bs_samples_free(again);
        bs_unitary_free(u);
    }
}

#[test]
fn bad_input_mode_is_invalid_argument() {
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_haar(4, 4, &mut u) }, BsStatus::Ok);
    let inputs = [0usize, 7];
    let mut s = ptr::null_mut();
    let st = unsafe { bs_sample(u, inputs.as_ptr(), 2, BsSamplerKind::Boson, 1.0, 10, 1, &mut s) };
    assert_eq!(st, BsStatus::InvalidArgument);
    assert!(s.is_null());
    unsafe { bs_unitary_free(u) };
}

#[test]
fn reconstruction_from_simulated_counts() {
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_haar(8, 21, &mut u) }, BsStatus::Ok);
    let inputs = [0usize, 1, 2, 3];
    let outputs: Vec<usize> = (0..8).collect();
    let mut d = f64::NAN;
    let mut mat = vec![0.0; 2 * 8 * 4];
    let st = unsafe { bs_reconstruct_simulated(u, inputs.as_ptr(), 4, outputs.as_ptr(), 8, 1_000_000, 5, &mut d, mat.as_mut_ptr()) };
    assert_eq!(st, BsStatus::Ok);
    assert!(d < 0.02, "distance {d}");
    // Columns come back with unit norm.
    for a in 0..4 {
        let norm: f64 = (0..8).map(|b| mat[2 * (b * 4 + a)].powi(2) + mat[2 * (b * 4 + a) + 1].powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-9);
    }
    unsafe { bs_unitary_free(u) };
}

#[test]
fn extraction_and_battery() {
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { bs_unitary_haar(16, 20240611, &mut u) }, BsStatus::Ok);
    let inputs = [0usize, 1, 2];
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { bs_sample(u, inputs.as_ptr(), 3, BsSamplerKind::Boson, 1.0, 100_000, 1, &mut s) }, BsStatus::Ok);
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { bs_extract(s, 8, 0.01, &mut b) }, BsStatus::Ok);
    let n = unsafe { bs_bits_len(b) };
    let h = unsafe { bs_bits_min_entropy(b) };
    assert!(n > 0 && h > 0.0 && h <= 1.0);
    let mut bits = vec![0u8; n];
    assert_eq!(unsafe { bs_bits_copy(b, bits.as_mut_ptr(), n) }, BsStatus::Ok);
    assert!(bits.iter().all(|&x| x <= 1));
    let (mut computed, mut passed) = (0usize, 0usize);
    assert_eq!(unsafe { bs_nist(bits.as_ptr(), n, 0.01, &mut computed, &mut passed) }, BsStatus::Ok);
    assert!(computed > 0);
    assert_eq!(unsafe { bs_bits_tests_passed(b) }, computed == passed);

    let zeros = vec![0u8; 10_000];
    assert_eq!(unsafe { bs_nist(zeros.as_ptr(), zeros.len(), 0.01, &mut computed, &mut passed) }, BsStatus::Ok);
    assert!(passed < computed);
    let junk = [0u8, 2, 1];
    assert_eq!(unsafe { bs_nist(junk.as_ptr(), 3, 0.01, &mut computed, &mut passed) }, BsStatus::InvalidArgument);
    unsafe {
        bs_bits_free(b);
        bs_samples_free(s);
        bs_unitary_free(u);
    }
}

#[test]
fn header_is_valid_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/boson.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["bs_unitary_haar", "bs_sample", "bs_last_error_message", "BS_STATUS_OK", "typedef struct BsUnitary BsUnitary"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let probe = Command::new(&cc).arg("--version").output();
    if probe.is_err() {
        eprintln!("no C compiler, skipping syntax check");
        return;
    }
    let out = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
