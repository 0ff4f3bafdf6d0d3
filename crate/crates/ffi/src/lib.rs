//! C ABI over `boson-core`.
//!
//! Every fallible call returns a [`BsStatus`] and writes its result through
//! out-pointers. On failure the message is kept per thread and can be read
//! with [`bs_last_error_message`]. Objects are opaque handles created by
//! constructor calls and released with the matching `bs_*_free`.
//!
//! Complex matrices cross the boundary as interleaved `(re, im)` doubles in
//! row-major order, so an `r x c` matrix takes `2 * r * c` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use boson_core::device::{DeviceConfig, DeviceModel};
use boson_core::randomness::{self, BitStream};
use boson_core::reconstruction::{gauge_distance, reconstruct, simulate_counts};
use boson_core::sampling::{post_select_collision_free, InputConfig, SampleRecord, Sampler};
use boson_core::validation::{ck_counter, wk_counter};
use boson_core::{haar_unitary, permanent, rng, Complex64, ComplexMatrix, Error, PermanentAlgorithm, Provenance, UnitaryMatrix};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Size or enumeration limit exceeded.
    Limit = 3,
    /// Input data rejected: not unitary, not Hermitian, inconsistent counts.
    InvalidData = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsPermanentAlgorithm {
    Naive = 0,
    Ryser = 1,
    Glynn = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsSamplerKind {
    /// Indistinguishable photons.
    Boson = 0,
    Distinguishable = 1,
    Uniform = 2,
    /// Partial distinguishability; uses the `indistinguishability` argument.
    Mixture = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsNull {
    /// W_k counter, boson sampling vs uniform.
    Uniform = 0,
    /// C_k counter, boson sampling vs distinguishable.
    Distinguishable = 1,
}

/// Opaque unitary matrix.
pub struct BsUnitary {
    inner: UnitaryMatrix,
}

/// Opaque device model.
pub struct BsDevice {
    inner: DeviceModel,
}

/// Opaque batch of sampled output events.
pub struct BsSamples {
    m: usize,
    records: Vec<SampleRecord>,
}

/// Opaque extracted bit stream with its extraction summary.
pub struct BsBits {
    hashed: BitStream,
    h_min: f64,
    tests_passed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: BsStatus, msg: impl Into<String>) -> BsStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> BsStatus {
    match e {
        Error::SizeLimit { .. } | Error::EnumerationTooLarge(_) => BsStatus::Limit,
        Error::HermiticityViolation { .. } | Error::NotUnitary { .. } | Error::InconsistentCounts(_) | Error::InsufficientData(_) => {
            BsStatus::InvalidData
        }
        Error::Io(_) | Error::Json(_) => BsStatus::Io,
        _ => BsStatus::InvalidArgument,
    }
}

fn from_core(e: Error) -> BsStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

/// Runs `f`, turning panics into `BsStatus::Panic`.
fn guard(f: impl FnOnce() -> BsStatus) -> BsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(BsStatus::Panic, msg)
        }
    }
}

macro_rules! check_ptr {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(BsStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> &'a [T] {
    if len == 0 {
        &[]
    } else {
        std::slice::from_raw_parts(p, len)
    }
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> &'a mut [T] {
    if len == 0 {
        &mut []
    } else {
        std::slice::from_raw_parts_mut(p, len)
    }
}

fn interleaved_to_matrix(data: &[f64], rows: usize, cols: usize) -> Result<ComplexMatrix, Error> {
    let values = data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    ComplexMatrix::new(rows, cols, values)
}

fn write_interleaved(m: &ComplexMatrix, out: &mut [f64]) {
    for (o, z) in out.chunks_exact_mut(2).zip(m.as_slice()) {
        o[0] = z.re;
        o[1] = z.im;
    }
}

fn box_out<T>(value: T, out: *mut *mut T) -> BsStatus {
    unsafe { *out = Box::into_raw(Box::new(value)) };
    BsStatus::Ok
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Permanent of an `n x n` complex matrix given as `2 n^2` interleaved doubles.
///
/// # Safety
/// `data` must point to `2 * n * n` doubles; `out_re` and `out_im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_permanent(
    data: *const f64,
    n: usize,
    algorithm: BsPermanentAlgorithm,
    out_re: *mut f64,
    out_im: *mut f64,
) -> BsStatus {
    guard(|| {
        check_ptr!(out_re, out_im);
        if n > 0 {
            check_ptr!(data);
        }
        let a = match interleaved_to_matrix(slice(data, 2 * n * n), n, n) {
            Ok(a) => a,
            Err(e) => return from_core(e),
        };
        let alg = match algorithm {
            BsPermanentAlgorithm::Naive => PermanentAlgorithm::Naive,
            BsPermanentAlgorithm::Ryser => PermanentAlgorithm::Ryser,
            BsPermanentAlgorithm::Glynn => PermanentAlgorithm::Glynn,
        };
        match permanent(&a, alg) {
            Ok(p) => {
                *out_re = p.value.re;
                *out_im = p.value.im;
                BsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Haar-random `m x m` unitary.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_unitary_haar(m: usize, seed: u64, out: *mut *mut BsUnitary) -> BsStatus {
    guard(|| {
        check_ptr!(out);
        match haar_unitary(m, seed) {
            Ok(u) => box_out(BsUnitary { inner: u }, out),
            Err(e) => from_core(e),
        }
    })
}

/// Unitary from `2 m^2` interleaved doubles; rejected when not unitary.
///
/// # Safety
/// `data` must point to `2 * m * m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_unitary_from_interleaved(data: *const f64, m: usize, out: *mut *mut BsUnitary) -> BsStatus {
    guard(|| {
        check_ptr!(data, out);
        let u = interleaved_to_matrix(slice(data, 2 * m * m), m, m).and_then(|a| UnitaryMatrix::new(a, Provenance::File));
        match u {
            Ok(u) => box_out(BsUnitary { inner: u }, out),
            Err(e) => from_core(e),
        }
    })
}

/// Number of modes, or 0 for NULL.
///
/// # Safety
/// `u` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_unitary_dim(u: *const BsUnitary) -> usize {
    u.as_ref().map_or(0, |u| u.inner.dim())
}

/// Copies the matrix into `out` as interleaved doubles; `len` must be `2 m^2`.
///
/// # Safety
/// `u` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_unitary_copy(u: *const BsUnitary, out: *mut f64, len: usize) -> BsStatus {
    guard(|| {
        check_ptr!(u, out);
        let u = &(*u).inner;
        let need = 2 * u.dim() * u.dim();
        if len != need {
            return fail(BsStatus::InvalidArgument, format!("buffer holds {len} doubles, need {need}"));
        }
        write_interleaved(u.matrix(), slice_mut(out, len));
        BsStatus::Ok
    })
}

/// # Safety
/// `u` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_unitary_free(u: *mut BsUnitary) {
    if !u.is_null() {
        drop(Box::from_raw(u));
    }
}

/// Device model built into the library.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_device_bundled(out: *mut *mut BsDevice) -> BsStatus {
    guard(|| {
        check_ptr!(out);
        box_out(BsDevice { inner: DeviceModel::bundled() }, out)
    })
}

/// Device model from a JSON config file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_device_load(path: *const c_char, out: *mut *mut BsDevice) -> BsStatus {
    guard(|| {
        check_ptr!(path, out);
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(BsStatus::InvalidArgument, "path is not UTF-8");
        };
        match DeviceConfig::load(Path::new(p)).and_then(|c| DeviceModel::from_config(&c)) {
            Ok(d) => box_out(BsDevice { inner: d }, out),
            Err(e) => from_core(e),
        }
    })
}

/// Waveguide count, or 0 for NULL.
///
/// # Safety
/// `d` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_device_mode_count(d: *const BsDevice) -> usize {
    d.as_ref().map_or(0, |d| d.inner.mode_count())
}

/// Heater count (length of a power vector), or 0 for NULL.
///
/// # Safety
/// `d` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_device_heater_count(d: *const BsDevice) -> usize {
    d.as_ref().map_or(0, |d| d.inner.heaters.count())
}

/// Random power vector with `n_active` heaters drawn uniformly in `[0, p_max_mw]`.
///
/// # Safety
/// `d` must be a live handle and `out` must hold `len` doubles, `len` equal to the heater count.
#[no_mangle]
pub unsafe extern "C" fn bs_device_random_powers(
    d: *const BsDevice,
    n_active: usize,
    p_max_mw: f64,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> BsStatus {
    guard(|| {
        check_ptr!(d, out);
        let d = &(*d).inner;
        if len != d.heaters.count() {
            return fail(BsStatus::InvalidArgument, format!("buffer holds {len} powers, device has {} heaters", d.heaters.count()));
        }
        match d.random_power_vector(n_active, p_max_mw, seed) {
            Ok(p) => {
                slice_mut(out, len).copy_from_slice(&p);
                BsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Device unitary under the power vector `powers` (mW, one per heater).
///
/// # Safety
/// `d` must be a live handle, `powers` must hold `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_device_evolve(d: *const BsDevice, powers: *const f64, len: usize, out: *mut *mut BsUnitary) -> BsStatus {
    guard(|| {
        check_ptr!(d, powers, out);
        match (*d).inner.evolve(slice(powers, len)) {
            Ok(u) => box_out(BsUnitary { inner: u }, out),
            Err(e) => from_core(e),
        }
    })
}

/// # Safety
/// `d` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_device_free(d: *mut BsDevice) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Draws `count` output events for single photons in `inputs`. Trials and
/// seeding match the `boson sample` command for the same seed.
///
/// # Safety
/// `u` must be a live handle, `inputs` must hold `n_inputs` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_sample(
    u: *const BsUnitary,
    inputs: *const usize,
    n_inputs: usize,
    kind: BsSamplerKind,
    indistinguishability: f64,
    count: u64,
    seed: u64,
    out: *mut *mut BsSamples,
) -> BsStatus {
    guard(|| {
        check_ptr!(u, inputs, out);
        let u = &(*u).inner;
        let input = match InputConfig::new(slice(inputs, n_inputs).to_vec(), u.dim()) {
            Ok(i) => i,
            Err(e) => return from_core(e),
        };
        let sampler = match kind {
            BsSamplerKind::Boson => Sampler::bs(u, &input),
            BsSamplerKind::Distinguishable => Sampler::distinguishable(u, &input),
            BsSamplerKind::Uniform => Sampler::uniform(u.dim(), input.photon_count()),
            BsSamplerKind::Mixture => Sampler::mixture(u, &input, indistinguishability),
        };
        match sampler {
            Ok(s) => {
                let records = s.sample(0..count, rng::substream_seed(seed, "sampler"));
                box_out(BsSamples { m: u.dim(), records }, out)
            }
            Err(e) => from_core(e),
        }
    })
}

/// Number of events, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_len(s: *const BsSamples) -> usize {
    s.as_ref().map_or(0, |s| s.records.len())
}

/// Photon count of event `index`, or 0 when out of range.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_photons(s: *const BsSamples, index: usize) -> usize {
    s.as_ref()
        .and_then(|s| s.records.get(index))
        .map_or(0, |r| r.output.photon_count())
}

/// Occupied output modes of event `index` in ascending order, repeated per
/// photon. `len` must equal [`bs_samples_photons`] for that event.
///
/// # Safety
/// `s` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_modes(s: *const BsSamples, index: usize, out: *mut usize, len: usize) -> BsStatus {
    guard(|| {
        check_ptr!(s, out);
        let records = &(*s).records;
        let Some(r) = records.get(index) else {
            return fail(BsStatus::InvalidArgument, format!("event {index} out of range"));
        };
        let modes = r.output.modes();
        if modes.len() != len {
            return fail(BsStatus::InvalidArgument, format!("event has {} photons, buffer holds {len}", modes.len()));
        }
        slice_mut(out, len).copy_from_slice(&modes);
        BsStatus::Ok
    })
}

/// Clears the kept flag of every event with two or more photons in one
/// mode. The W_k counter needs this; the C_k counter does not.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_post_select(s: *mut BsSamples) -> BsStatus {
    guard(|| {
        check_ptr!(s);
        post_select_collision_free(&mut (*s).records);
        BsStatus::Ok
    })
}

/// Number of events with the kept flag set, or 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_kept(s: *const BsSamples) -> usize {
    s.as_ref().map_or(0, |s| s.records.iter().filter(|r| r.kept).count())
}

/// # Safety
/// `s` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_samples_free(s: *mut BsSamples) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Runs one validation counter over the kept events. Writes the final counter
/// value and whether the null hypothesis is rejected.
///
/// # Safety
/// `u` and `s` must be live handles, `inputs` must hold `n_inputs` values and
/// the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_validate(
    u: *const BsUnitary,
    inputs: *const usize,
    n_inputs: usize,
    s: *const BsSamples,
    null: BsNull,
    out_final: *mut i64,
    out_rejects: *mut bool,
) -> BsStatus {
    guard(|| {
        check_ptr!(u, inputs, s, out_final, out_rejects);
        let u = &(*u).inner;
        let input = match InputConfig::new(slice(inputs, n_inputs).to_vec(), u.dim()) {
            Ok(i) => i,
            Err(e) => return from_core(e),
        };
        let records = &(*s).records;
        let trace = match null {
            BsNull::Uniform => wk_counter(u, &input, records),
            BsNull::Distinguishable => ck_counter(u, &input, records),
        };
        match trace {
            Ok(t) => {
                *out_final = t.final_value();
                *out_rejects = t.rejects_null();
                BsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Simulates `shots` single and pair counts from `u` on the listed inputs
/// and outputs, reconstructs the submatrix and writes its gauge distance to
/// the column-normalized truth. When `out_matrix` is not NULL it receives the
/// reconstruction as `2 * n_outputs * n_inputs` interleaved doubles.
///
/// # Safety
/// `u` must be a live handle, `inputs`/`outputs` must hold the given counts,
/// `out_distance` must be writable and `out_matrix` must be NULL or hold
/// `2 * n_outputs * n_inputs` doubles.
#[no_mangle]
pub unsafe extern "C" fn bs_reconstruct_simulated(
    u: *const BsUnitary,
    inputs: *const usize,
    n_inputs: usize,
    outputs: *const usize,
    n_outputs: usize,
    shots: u64,
    seed: u64,
    out_distance: *mut f64,
    out_matrix: *mut f64,
) -> BsStatus {
    guard(|| {
        check_ptr!(u, inputs, outputs, out_distance);
        let u = &(*u).inner;
        let ins = slice(inputs, n_inputs);
        let outs = slice(outputs, n_outputs);
        let result = simulate_counts(u, ins, outs, shots, seed).and_then(|c| reconstruct(&c)).and_then(|r| {
            let truth = u.matrix().select(outs, ins).normalize_columns();
            gauge_distance(&r, &truth).map(|d| (r, d))
        });
        match result {
            Ok((r, d)) => {
                *out_distance = d;
                if !out_matrix.is_null() {
                    write_interleaved(&r.to_matrix(), slice_mut(out_matrix, 2 * n_outputs * n_inputs));
                }
                BsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Occupancy encoding, Von Neumann unbiasing, min-entropy estimate and
/// SHA-256 conditioning of every kept event, followed by the SP 800-22
/// battery at threshold `p_threshold`.
///
/// # Safety
/// `s` must be a live handle and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_extract(s: *const BsSamples, block_size: usize, p_threshold: f64, out: *mut *mut BsBits) -> BsStatus {
    guard(|| {
        check_ptr!(s, out);
        let s = &*s;
        let kept: Vec<SampleRecord> = s.records.iter().filter(|r| r.kept).cloned().collect();
        match randomness::pipeline(&kept, s.m, block_size, p_threshold) {
            Ok(p) => box_out(
                BsBits {
                    hashed: p.hashed,
                    h_min: p.report.h_min,
                    tests_passed: p.report.all_computed_passed,
                },
                out,
            ),
            Err(e) => from_core(e),
        }
    })
}

/// Number of conditioned bits, or 0 for NULL.
///
/// # Safety
/// `b` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_bits_len(b: *const BsBits) -> usize {
    b.as_ref().map_or(0, |b| b.hashed.len())
}

/// Estimated min-entropy per Von Neumann bit, or NaN for NULL.
///
/// # Safety
/// `b` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_bits_min_entropy(b: *const BsBits) -> f64 {
    b.as_ref().map_or(f64::NAN, |b| b.h_min)
}

/// Whether every SP 800-22 test long enough to run passed; false for NULL.
///
/// # Safety
/// `b` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bs_bits_tests_passed(b: *const BsBits) -> bool {
    b.as_ref().is_some_and(|b| b.tests_passed)
}

/// Copies the bits, one per byte with values 0 or 1; `len` must equal [`bs_bits_len`].
///
/// # Safety
/// `b` must be a live handle and `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bs_bits_copy(b: *const BsBits, out: *mut u8, len: usize) -> BsStatus {
    guard(|| {
        check_ptr!(b, out);
        let bits = &(*b).hashed.bits;
        if bits.len() != len {
            return fail(BsStatus::InvalidArgument, format!("stream has {} bits, buffer holds {len}", bits.len()));
        }
        slice_mut(out, len).copy_from_slice(bits);
        BsStatus::Ok
    })
}

/// # Safety
/// `b` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bs_bits_free(b: *mut BsBits) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// SP 800-22 battery on `len` bits (one per byte, 0 or 1). Writes how many
/// tests were long enough to run and how many of those passed.
///
/// # Safety
/// `bits` must hold `len` bytes; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn bs_nist(
    bits: *const u8,
    len: usize,
    p_threshold: f64,
    out_computed: *mut usize,
    out_passed: *mut usize,
) -> BsStatus {
    guard(|| {
        check_ptr!(bits, out_computed, out_passed);
        let bits = slice(bits, len);
        if bits.iter().any(|&b| b > 1) {
            return fail(BsStatus::InvalidArgument, "bits must be 0 or 1");
        }
        let res = randomness::nist_suite(bits, p_threshold);
        *out_computed = res.iter().filter(|t| !t.skipped).count();
        *out_passed = res.iter().filter(|t| !t.skipped && t.pass).count();
        BsStatus::Ok
    })
}
