//! C ABI over `eikonal_lab`.
//!
//! Fields are opaque `EikField` handles owned by the caller and released with
//! `eik_field_free`. Every function returns an `EikStatus`; on failure the
//! message is kept per thread and read back with `eik_last_error`. Panics are
//! caught at the boundary and reported as `EIK_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use eikonal_lab::besov::{finite_difference, lp_norm, Shift};
use eikonal_lab::cli::{build_field, run, Config, Experiment, FieldSpec, GridSpec};
use eikonal_lab::io::read_field;
use eikonal_lab::kinetic::{kinetic_measure, AngularGrid};
use eikonal_lab::mollify::cone_kernel;
use eikonal_lab::solutions::JumpSpec;
use eikonal_lab::{Error, UnitVectorField, Vec2};

#[repr(C)]
#[allow(non_camel_case_types)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EikStatus {
    EIK_OK = 0,
    EIK_NULL_ARGUMENT = 1,
    /// Bad parameters, unresolved scales or malformed input.
    EIK_INVALID_ARGUMENT = 2,
    EIK_PRECONDITION = 3,
    EIK_NUMERICAL = 4,
    EIK_IO = 5,
    EIK_PANIC = 6,
}

/// A unit vector field on a uniform grid.
pub struct EikField {
    inner: UnitVectorField,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> EikStatus {
    match e {
        Error::Config(_) | Error::Resolution(_) | Error::Format { .. } => EikStatus::EIK_INVALID_ARGUMENT,
        Error::Precondition(_) => EikStatus::EIK_PRECONDITION,
        Error::Numerical(_) => EikStatus::EIK_NUMERICAL,
        Error::Io(_) => EikStatus::EIK_IO,
    }
}

enum Failure {
    Null(&'static str),
    Lab(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lab(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EikStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EikStatus::EIK_OK,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            EikStatus::EIK_NULL_ARGUMENT
        }
        Ok(Err(Failure::Lab(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EikStatus::EIK_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lab(Error::Config(format!("{what} is not valid UTF-8"))))
}

unsafe fn field_arg<'a>(p: *const EikField) -> Result<&'a UnitVectorField, Failure> {
    p.as_ref().map(|f| &f.inner).ok_or(Failure::Null("field"))
}

unsafe fn emit<T>(out: *mut T, value: T) {
    *out = value;
}

fn make(spec: FieldSpec, n: usize, half_width: f64, out: *mut *mut EikField) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let inner = build_field(&spec, &GridSpec { n, half_width })?;
    unsafe { emit(out, Box::into_raw(Box::new(EikField { inner }))) };
    Ok(())
}

/// Constant field with the given direction on `[-w, w]²` with `n × n` nodes.
#[no_mangle]
pub extern "C" fn eik_field_constant(n: usize, half_width: f64, dx: f64, dy: f64, out: *mut *mut EikField) -> EikStatus {
    guard(|| {
        make(
            FieldSpec::Constant {
                direction: Vec2::new(dx, dy),
            },
            n,
            half_width,
            out,
        )
    })
}

/// Vortex `i(x − c)/|x − c|`, masked out at the center.
#[no_mangle]
pub extern "C" fn eik_field_vortex(n: usize, half_width: f64, cx: f64, cy: f64, out: *mut *mut EikField) -> EikStatus {
    guard(|| {
        make(
            FieldSpec::Vortex {
                center: Vec2::new(cx, cy),
            },
            n,
            half_width,
            out,
        )
    })
}

/// Two-state jump across `{x = 0}`, or across `{y = 0}` when `horizontal` is nonzero.
#[no_mangle]
pub extern "C" fn eik_field_jump(n: usize, half_width: f64, horizontal: c_int, out: *mut *mut EikField) -> EikStatus {
    let spec = if horizontal != 0 {
        JumpSpec::standard_horizontal()
    } else {
        JumpSpec::standard()
    };
    guard(|| make(FieldSpec::Jump(spec), n, half_width, out))
}

/// Reads an EIKF1 vector field; every masked-in value must have unit length.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn eik_field_read(path: *const c_char, out: *mut *mut EikField) -> EikStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let inner = read_field(path)?.into_unit()?;
        emit(out, Box::into_raw(Box::new(EikField { inner })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `field` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eik_field_free(field: *mut EikField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Node counts along x and y.
///
/// # Safety
/// `field` must be a live handle; `nx` and `ny` writable pointers.
#[no_mangle]
pub unsafe extern "C" fn eik_field_shape(field: *const EikField, nx: *mut usize, ny: *mut usize) -> EikStatus {
    guard(|| {
        let f = field_arg(field)?;
        if nx.is_null() || ny.is_null() {
            return Err(Failure::Null("nx/ny"));
        }
        emit(nx, f.grid().nx());
        emit(ny, f.grid().ny());
        Ok(())
    })
}

/// Copies the field row by row (x fastest): `xy` receives `2·len` numbers,
/// `mask` (optional) receives `len` flags. `len` must equal `nx·ny`.
///
/// # Safety
/// `xy` must hold `2·len` doubles and `mask`, when non-null, `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn eik_field_values(field: *const EikField, xy: *mut f64, mask: *mut u8, len: usize) -> EikStatus {
    guard(|| {
        let f = field_arg(field)?;
        if xy.is_null() {
            return Err(Failure::Null("xy"));
        }
        if len != f.grid().len() {
            return Err(Error::Config(format!("buffer holds {len} nodes, field has {}", f.grid().len())).into());
        }
        let xy = std::slice::from_raw_parts_mut(xy, 2 * len);
        for (k, v) in f.values().iter().enumerate() {
            xy[2 * k] = v.x;
            xy[2 * k + 1] = v.y;
        }
        if !mask.is_null() {
            let mask = std::slice::from_raw_parts_mut(mask, len);
            for (m, &b) in mask.iter_mut().zip(f.mask()) {
                *m = b as u8;
            }
        }
        Ok(())
    })
}

/// `‖m(· + h) − m‖_{L^p}` over the nodes where both values exist.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eik_difference_norm(field: *const EikField, hx: f64, hy: f64, p: f64, out: *mut f64) -> EikStatus {
    guard(|| {
        let f = field_arg(field)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let d = finite_difference(f.as_field(), Shift::new(Vec2::new(hx, hy))?)?;
        emit(out, lp_norm(&d, p, None)?);
        Ok(())
    })
}

/// `‖ν‖_{L^p}` of the kinetic measure at mollification scale `epsilon`
/// with `n_s` angular nodes.
///
/// # Safety
/// `field` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eik_kinetic_norm(field: *const EikField, epsilon: f64, n_s: usize, p: f64, out: *mut f64) -> EikStatus {
    guard(|| {
        let f = field_arg(field)?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let km = kinetic_measure(f, AngularGrid::new(n_s)?, &cone_kernel(epsilon)?)?;
        emit(out, km.nu_norm(p, None)?);
        Ok(())
    })
}

/// Runs a named experiment (`field`, `besov`, `entropy`, `kinetic`, `trace`,
/// `cover`, `bc`) as the command-line tool does. `config_path` may be null
/// for the defaults.
///
/// # Safety
/// String arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn eik_run(experiment: *const c_char, config_path: *const c_char, out_dir: *const c_char) -> EikStatus {
    guard(|| {
        let kind: Experiment = str_arg(experiment, "experiment")?.parse()?;
        let out = str_arg(out_dir, "out_dir")?;
        let cfg = if config_path.is_null() {
            Config::default()
        } else {
            Config::load(Path::new(str_arg(config_path, "config_path")?))?
        };
        run(kind, &cfg, Path::new(out))?;
        Ok(())
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the full message length
/// plus one.
///
/// # Safety
/// `buf` must hold `len` bytes, or be null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn eik_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eik_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, EikStatus::EIK_PANIC);
        let mut buf = [0 as c_char; 64];
        unsafe { eik_last_error(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
    }
}
