//! Invocation of C-ABI functions exported by shared libraries.

use std::ffi::c_int;
use std::path::{Path, PathBuf};

use libloading::Library;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArgShape {
    /// `fn()`
    None,
    /// `fn(const uint8_t *input, size_t len)`
    #[default]
    PtrLen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReturnShape {
    #[default]
    Void,
    /// `int`; non-zero is reported as an invocation failure.
    Status,
    /// A pointer-sized value that is recorded but not interpreted.
    Value,
}

/// Calling convention of an external black-box function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SymbolSignature {
    #[serde(default)]
    pub args: ArgShape,
    #[serde(default)]
    pub returns: ReturnShape,
}

type RawFn = unsafe extern "C" fn();

pub struct DynamicSymbol {
    path: PathBuf,
    symbol: String,
    signature: SymbolSignature,
    func: RawFn,
    // Keeps `func` mapped.
    _library: Library,
}

impl std::fmt::Debug for DynamicSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicSymbol")
            .field("path", &self.path)
            .field("symbol", &self.symbol)
            .field("signature", &self.signature)
            .finish()
    }
}

impl DynamicSymbol {
    pub fn load(path: &Path, symbol: &str, signature: SymbolSignature) -> Result<Self> {
        let not_found = |e: libloading::Error| {
            Error::SymbolNotFound(format!("{}:{symbol}: {e}", path.display()))
        };
        // SAFETY: loading a library runs its initialisers; the caller names a
        // library it trusts to be measured.
        let library = unsafe { Library::new(path) }.map_err(not_found)?;
        // SAFETY: the pointer is only called through the declared signature.
        let func = unsafe { library.get::<RawFn>(symbol.as_bytes()) }
            .map(|s| *s)
            .map_err(not_found)?;
        Ok(DynamicSymbol {
            path: path.to_path_buf(),
            symbol: symbol.to_string(),
            signature,
            func,
            _library: library,
        })
    }

    /// Calls the function once. Returns the raw return value (0 for `void`).
    pub fn call(&self, input: &[u8]) -> Result<usize> {
        let ptr = input.as_ptr();
        let len = input.len();
        // SAFETY: the signature descriptor states the true prototype of the
        // symbol; the input buffer outlives the call.
        let ret: usize = unsafe {
            match (self.signature.args, self.signature.returns) {
                (ArgShape::None, ReturnShape::Void) => {
                    (self.func)();
                    0
                }
                (ArgShape::None, ReturnShape::Status) => {
                    let f: unsafe extern "C" fn() -> c_int = std::mem::transmute(self.func);
                    f() as usize
                }
                (ArgShape::None, ReturnShape::Value) => {
                    let f: unsafe extern "C" fn() -> usize = std::mem::transmute(self.func);
                    f()
                }
                (ArgShape::PtrLen, ReturnShape::Void) => {
                    let f: unsafe extern "C" fn(*const u8, usize) = std::mem::transmute(self.func);
                    f(ptr, len);
                    0
                }
                (ArgShape::PtrLen, ReturnShape::Status) => {
                    let f: unsafe extern "C" fn(*const u8, usize) -> c_int =
                        std::mem::transmute(self.func);
                    f(ptr, len) as u32 as usize
                }
                (ArgShape::PtrLen, ReturnShape::Value) => {
                    let f: unsafe extern "C" fn(*const u8, usize) -> usize =
                        std::mem::transmute(self.func);
                    f(ptr, len)
                }
            }
        };
        if self.signature.returns == ReturnShape::Status && ret != 0 {
            return Err(Error::InvocationFailed {
                target: format!("{}:{}", self.path.display(), self.symbol),
                reason: format!("returned status {}", ret as u32 as c_int),
            });
        }
        Ok(ret)
    }
}
