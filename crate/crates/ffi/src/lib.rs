//! C ABI over the translator.
//!
//! Models are opaque handles created by [`t2t_model_load`] and released by
//! [`t2t_model_free`]. Every fallible call returns a [`T2tStatus`]; on
//! failure a human-readable message is stored per thread and can be read
//! back with [`t2t_last_error_message`]. Strings returned through `out`
//! parameters are owned by the caller and must be released with
//! [`t2t_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use tree2tree::checkpoint;
use tree2tree::model::{DecodeLimits, IndexedBinaryTree, Model, ModelError};
use tree2tree::oracle::{translate_with, OracleMode};
use tree2tree::syntax::{join_tokens, parse_for, render_lambda, tokenize};
use tree2tree::tree::{for_to_tree, from_lcrs, to_lcrs, tree_to_lambda};

/// Outcome of a call. Matches the CLI exit codes, with one extra code for
/// argument errors that a shell would catch before the process even ran.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum T2tStatus {
    Ok = 0,
    Other = 1,
    Syntax = 2,
    DecodeLimit = 3,
    Data = 4,
    InvalidArgument = 5,
}

/// A loaded translation model.
pub struct T2tModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: T2tStatus, message: &str) -> T2tStatus {
    set_error(message);
    status
}

fn guarded(body: impl FnOnce() -> T2tStatus) -> T2tStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => {
            if status == T2tStatus::Ok {
                set_error("");
            }
            status
        }
        Err(_) => fail(T2tStatus::Other, "internal panic"),
    }
}

fn model_status(e: &ModelError) -> T2tStatus {
    match e {
        ModelError::LimitExceeded { .. } => T2tStatus::DecodeLimit,
        ModelError::UnknownToken { .. } | ModelError::EosLabel => T2tStatus::Data,
        _ => T2tStatus::Other,
    }
}

/// Reads a required NUL-terminated UTF-8 argument.
///
/// # Safety
/// `ptr` must be null or point to a NUL-terminated string that stays valid
/// for the duration of the call.
unsafe fn required_str<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, T2tStatus> {
    if ptr.is_null() {
        return Err(fail(
            T2tStatus::InvalidArgument,
            &format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            T2tStatus::InvalidArgument,
            &format!("{name} must be valid UTF-8"),
        )
    })
}

fn export_string(text: String, out: *mut *mut c_char) -> T2tStatus {
    match CString::new(text) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            T2tStatus::Ok
        }
        Err(_) => fail(T2tStatus::Other, "output contained an interior NUL byte"),
    }
}

fn translate_text(model: &Model, source: &str) -> Result<String, T2tStatus> {
    let ast = parse_for(&tokenize(source))
        .map_err(|e| fail(T2tStatus::Syntax, &e.to_string()))?;
    let indexed = IndexedBinaryTree::index_source(&to_lcrs(&for_to_tree(&ast)), model.src_vocab())
        .map_err(|e| fail(model_status(&e), &e.to_string()))?;
    let decoded = model
        .decode_greedy(&indexed, DecodeLimits::default())
        .map_err(|e| fail(model_status(&e), &e.to_string()))?
        .ok_or_else(|| fail(T2tStatus::Other, "the model predicted an empty program"))?;
    let tree = from_lcrs(&decoded)
        .map_err(|e| fail(T2tStatus::Other, &format!("the decoded tree is malformed: {e}")))?;
    let target = tree_to_lambda(&tree).map_err(|e| {
        fail(
            T2tStatus::Other,
            &format!("the decoded tree is not a program: {e}"),
        )
    })?;
    Ok(join_tokens(&render_lambda(&target)))
}

/// Returns the library version as a static string. Never fails.
#[no_mangle]
pub extern "C" fn t2t_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Returns the message of the last failure on this thread, or an empty
/// string after a success. The pointer stays valid until the next call
/// into this library on the same thread.
#[no_mangle]
pub extern "C" fn t2t_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Loads a model checkpoint from `path` into `*out`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
/// On success the caller owns the handle and must release it with
/// [`t2t_model_free`]; on failure `*out` is set to null.
#[no_mangle]
pub unsafe extern "C" fn t2t_model_load(
    path: *const c_char,
    out: *mut *mut T2tModel,
) -> T2tStatus {
    guarded(|| {
        if out.is_null() {
            return fail(T2tStatus::InvalidArgument, "out must not be null");
        }
        *out = std::ptr::null_mut();
        let path = match required_str(path, "path") {
            Ok(p) => p,
            Err(status) => return status,
        };
        match checkpoint::load(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(T2tModel { inner }));
                T2tStatus::Ok
            }
            Err(e) => fail(T2tStatus::Data, &e.to_string()),
        }
    })
}

/// Releases a handle returned by [`t2t_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from [`t2t_model_load`] that has not
/// been freed yet.
#[no_mangle]
pub unsafe extern "C" fn t2t_model_free(model: *mut T2tModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Translates the FOR program in `source` with a loaded model, writing a
/// newly allocated LAMBDA program text to `*out`.
///
/// # Safety
/// `model` must be a live handle from [`t2t_model_load`], `source` a valid
/// NUL-terminated string, and `out` a valid pointer. On failure `*out` is
/// set to null.
#[no_mangle]
pub unsafe extern "C" fn t2t_model_translate(
    model: *const T2tModel,
    source: *const c_char,
    out: *mut *mut c_char,
) -> T2tStatus {
    guarded(|| {
        if out.is_null() {
            return fail(T2tStatus::InvalidArgument, "out must not be null");
        }
        *out = std::ptr::null_mut();
        if model.is_null() {
            return fail(T2tStatus::InvalidArgument, "model must not be null");
        }
        let source = match required_str(source, "source") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match translate_text(&(*model).inner, source) {
            Ok(text) => export_string(text, out),
            Err(status) => status,
        }
    })
}

/// Translates the FOR program in `source` with the reference translator,
/// writing a newly allocated LAMBDA program text to `*out`. With
/// `literal_loop_entry` the outer application of a translated loop repeats
/// the step expression instead of the initializer.
///
/// # Safety
/// `source` must be a valid NUL-terminated string and `out` a valid
/// pointer. On failure `*out` is set to null.
#[no_mangle]
pub unsafe extern "C" fn t2t_oracle_translate(
    source: *const c_char,
    literal_loop_entry: bool,
    out: *mut *mut c_char,
) -> T2tStatus {
    guarded(|| {
        if out.is_null() {
            return fail(T2tStatus::InvalidArgument, "out must not be null");
        }
        *out = std::ptr::null_mut();
        let source = match required_str(source, "source") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let ast = match parse_for(&tokenize(source)) {
            Ok(ast) => ast,
            Err(e) => return fail(T2tStatus::Syntax, &e.to_string()),
        };
        let mode = if literal_loop_entry {
            OracleMode::LoopFromStep
        } else {
            OracleMode::LoopFromInit
        };
        export_string(join_tokens(&render_lambda(&translate_with(&ast, mode))), out)
    })
}

/// Releases a string returned through an `out` parameter. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn t2t_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
