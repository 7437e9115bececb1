//! Measurement targets: a built-in suite of idempotent functions and an
//! invoker for symbols exported by external shared libraries.
//!
//! Inputs (data, keys, IVs) for an instance are derived from the workload
//! seed and the instance seed before the measured call, so repeated calls of
//! one prepared instance perform the same computation.

pub mod crypto;
mod dynamic;
pub mod kernels;

use std::fmt;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng as _, RngCore};
use serde::{Deserialize, Serialize};

pub use dynamic::{ArgShape, DynamicSymbol, ReturnShape, SymbolSignature};

use crate::counters::Target;
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_INPUT_RANGE: (usize, usize) = (8, 4096);

const FIXED_STREAM: u64 = 0x4649_5845_44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    Quicksort,
    InsertionSort,
    MatrixMultiply,
    Crc32,
    Adler32,
    Fibonacci,
    Fft,
    Base64Encode,
    Base64Decode,
    Xorshift,
    Sha256,
    HmacSha256,
    AesEcbEncrypt,
    AesEcbDecrypt,
    AesCtr,
    AesCbcEncrypt,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 16] = [
        BuiltinKind::Quicksort,
        BuiltinKind::InsertionSort,
        BuiltinKind::MatrixMultiply,
        BuiltinKind::Crc32,
        BuiltinKind::Adler32,
        BuiltinKind::Fibonacci,
        BuiltinKind::Fft,
        BuiltinKind::Base64Encode,
        BuiltinKind::Base64Decode,
        BuiltinKind::Xorshift,
        BuiltinKind::Sha256,
        BuiltinKind::HmacSha256,
        BuiltinKind::AesEcbEncrypt,
        BuiltinKind::AesEcbDecrypt,
        BuiltinKind::AesCtr,
        BuiltinKind::AesCbcEncrypt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::Quicksort => "quicksort",
            BuiltinKind::InsertionSort => "insertion_sort",
            BuiltinKind::MatrixMultiply => "matrix_multiply",
            BuiltinKind::Crc32 => "crc32",
            BuiltinKind::Adler32 => "adler32",
            BuiltinKind::Fibonacci => "fibonacci",
            BuiltinKind::Fft => "fft",
            BuiltinKind::Base64Encode => "base64_encode",
            BuiltinKind::Base64Decode => "base64_decode",
            BuiltinKind::Xorshift => "xorshift",
            BuiltinKind::Sha256 => "sha256",
            BuiltinKind::HmacSha256 => "hmac_sha256",
            BuiltinKind::AesEcbEncrypt => "aes_ecb_encrypt",
            BuiltinKind::AesEcbDecrypt => "aes_ecb_decrypt",
            BuiltinKind::AesCtr => "aes_ctr",
            BuiltinKind::AesCbcEncrypt => "aes_cbc_encrypt",
        }
    }

    pub fn is_cryptographic(self) -> bool {
        matches!(
            self,
            BuiltinKind::Sha256
                | BuiltinKind::HmacSha256
                | BuiltinKind::AesEcbEncrypt
                | BuiltinKind::AesEcbDecrypt
                | BuiltinKind::AesCtr
                | BuiltinKind::AesCbcEncrypt
        )
    }

    fn uses_aes(self) -> bool {
        matches!(
            self,
            BuiltinKind::AesEcbEncrypt
                | BuiltinKind::AesEcbDecrypt
                | BuiltinKind::AesCtr
                | BuiltinKind::AesCbcEncrypt
        )
    }
}

impl fmt::Display for BuiltinKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown builtin workload {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPolicy {
    /// One input derived from the workload seed, shared by every instance.
    Fixed,
    /// Length drawn uniformly from the range per instance; content random.
    RandomLength,
    /// Exactly these bytes, every instance.
    Literal(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    Builtin(BuiltinKind),
    DynamicSymbol {
        library: PathBuf,
        symbol: String,
        signature: SymbolSignature,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub id: usize,
    pub name: String,
    pub kind: WorkloadKind,
    pub input_policy: InputPolicy,
    pub input_len_range: (usize, usize),
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn builtin(id: usize, kind: BuiltinKind, seed: u64) -> Self {
        WorkloadSpec {
            id,
            name: kind.name().to_string(),
            kind: WorkloadKind::Builtin(kind),
            input_policy: InputPolicy::RandomLength,
            input_len_range: DEFAULT_INPUT_RANGE,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.input_len_range;
        if lo == 0 || lo > hi {
            return Err(Error::invalid(format!(
                "workload {}: input length range [{lo}, {hi}] is empty or starts at zero",
                self.name
            )));
        }
        Ok(())
    }
}

/// The built-in suite, ids `0..16` in [`BuiltinKind::ALL`] order.
pub fn builtin_suite() -> Vec<WorkloadSpec> {
    builtin_suite_seeded(0)
}

pub fn builtin_suite_seeded(seed: u64) -> Vec<WorkloadSpec> {
    BuiltinKind::ALL
        .into_iter()
        .enumerate()
        .map(|(id, kind)| WorkloadSpec::builtin(id, kind, rng::derive(seed, &[id as u64])))
        .collect()
}

/// Per-instance input material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedInput {
    pub data: Vec<u8>,
    pub key: Vec<u8>,
    pub iv: [u8; 16],
}

/// Derives the inputs for one instance of `spec`.
pub fn prepare_input(spec: &WorkloadSpec, instance_seed: u64) -> PreparedInput {
    let (lo, hi) = spec.input_len_range;
    let mut r = match spec.input_policy {
        InputPolicy::RandomLength => rng::rng(spec.seed, &[instance_seed]),
        _ => rng::rng(spec.seed, &[FIXED_STREAM]),
    };
    let mut data = match &spec.input_policy {
        InputPolicy::Literal(bytes) => bytes.clone(),
        InputPolicy::Fixed => vec![0u8; lo],
        InputPolicy::RandomLength => vec![0u8; r.random_range(lo..=hi)],
    };
    if !matches!(spec.input_policy, InputPolicy::Literal(_)) {
        r.fill_bytes(&mut data);
    }
    let key_len = match spec.kind {
        WorkloadKind::Builtin(k) if k.uses_aes() => [16, 24, 32][r.random_range(0..3)],
        _ => 32,
    };
    let mut key = vec![0u8; key_len];
    r.fill_bytes(&mut key);
    let mut iv = [0u8; 16];
    r.fill_bytes(&mut iv);
    if let WorkloadKind::Builtin(kind) = spec.kind {
        match kind {
            BuiltinKind::Base64Decode => data = kernels::base64_encode(&data),
            BuiltinKind::AesEcbDecrypt => data.resize(data.len().div_ceil(16) * 16, 0),
            _ => {}
        }
    }
    PreparedInput { data, key, iv }
}

/// Runs a builtin on prepared inputs and returns its output bytes.
pub fn run_builtin(kind: BuiltinKind, input: &PreparedInput) -> Vec<u8> {
    let data = black_box(input.data.as_slice());
    let aes = || crypto::Aes::new(&input.key).expect("prepared AES keys are 16, 24 or 32 bytes");
    match kind {
        BuiltinKind::Quicksort => {
            let mut v = kernels::words(data);
            kernels::quicksort(&mut v);
            v.into_iter().flat_map(u32::to_le_bytes).collect()
        }
        BuiltinKind::InsertionSort => {
            let mut v = kernels::words(data);
            kernels::insertion_sort(&mut v);
            v.into_iter().flat_map(u32::to_le_bytes).collect()
        }
        BuiltinKind::MatrixMultiply => kernels::matrix_multiply(data)
            .into_iter()
            .flat_map(f64::to_le_bytes)
            .collect(),
        BuiltinKind::Crc32 => kernels::crc32(data).to_be_bytes().to_vec(),
        BuiltinKind::Adler32 => kernels::adler32(data).to_be_bytes().to_vec(),
        BuiltinKind::Fibonacci => {
            let n = 16 + (data.len() % 8) as u32;
            kernels::fibonacci(n).to_le_bytes().to_vec()
        }
        BuiltinKind::Fft => kernels::fft_bytes(data)
            .into_iter()
            .flat_map(f64::to_le_bytes)
            .collect(),
        BuiltinKind::Base64Encode => kernels::base64_encode(data),
        BuiltinKind::Base64Decode => kernels::base64_decode(data).unwrap_or_default(),
        BuiltinKind::Xorshift => {
            let mut seed = [0u8; 8];
            let n = data.len().min(8);
            seed[..n].copy_from_slice(&data[..n]);
            kernels::xorshift(u64::from_le_bytes(seed), data.len() / 8 + 1)
                .into_iter()
                .flat_map(u64::to_le_bytes)
                .collect()
        }
        BuiltinKind::Sha256 => crypto::sha256(data).to_vec(),
        BuiltinKind::HmacSha256 => crypto::hmac_sha256(&input.key, data).to_vec(),
        BuiltinKind::AesEcbEncrypt => crypto::aes_ecb_encrypt(&aes(), data),
        BuiltinKind::AesEcbDecrypt => crypto::aes_ecb_decrypt(&aes(), data),
        BuiltinKind::AesCtr => crypto::aes_ctr(&aes(), &input.iv, data),
        BuiltinKind::AesCbcEncrypt => crypto::aes_cbc_encrypt(&aes(), &input.iv, data),
    }
}

/// Proof that a target ran to completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub output: Vec<u8>,
    pub digest: u64,
}

impl Completion {
    fn new(output: Vec<u8>) -> Self {
        let digest = output.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
            (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
        });
        Completion { output, digest }
    }
}

/// A workload ready for repeated invocation (external symbols resolved).
#[derive(Debug)]
pub struct Workload {
    spec: WorkloadSpec,
    dynamic: Option<DynamicSymbol>,
}

impl Workload {
    pub fn load(spec: &WorkloadSpec) -> Result<Self> {
        spec.validate()?;
        let dynamic = match &spec.kind {
            WorkloadKind::Builtin(_) => None,
            WorkloadKind::DynamicSymbol {
                library,
                symbol,
                signature,
            } => Some(DynamicSymbol::load(library, symbol, *signature)?),
        };
        Ok(Workload {
            spec: spec.clone(),
            dynamic,
        })
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    pub fn prepare(&self, instance_seed: u64) -> PreparedCall<'_> {
        PreparedCall {
            workload: self,
            input: prepare_input(&self.spec, instance_seed),
            last: None,
        }
    }

    fn call(&self, input: &PreparedInput) -> Result<Completion> {
        match (&self.spec.kind, &self.dynamic) {
            (WorkloadKind::Builtin(kind), _) => Ok(Completion::new(black_box(run_builtin(*kind, input)))),
            (WorkloadKind::DynamicSymbol { .. }, Some(sym)) => {
                let ret = sym.call(black_box(&input.data))?;
                Ok(Completion::new(ret.to_le_bytes().to_vec()))
            }
            (WorkloadKind::DynamicSymbol { symbol, .. }, None) => {
                Err(Error::SymbolNotFound(symbol.clone()))
            }
        }
    }
}

/// One instance's inputs bound to a workload; each `invoke` runs the
/// function exactly once on the same inputs.
#[derive(Debug)]
pub struct PreparedCall<'a> {
    workload: &'a Workload,
    input: PreparedInput,
    last: Option<Completion>,
}

impl PreparedCall<'_> {
    pub fn input(&self) -> &PreparedInput {
        &self.input
    }

    pub fn last_completion(&self) -> Option<&Completion> {
        self.last.as_ref()
    }
}

impl Target for PreparedCall<'_> {
    fn label(&self) -> usize {
        self.workload.spec.id
    }

    fn name(&self) -> &str {
        &self.workload.spec.name
    }

    fn invoke(&mut self) -> Result<()> {
        let done = self.workload.call(&self.input)?;
        self.last = Some(done);
        Ok(())
    }
}

/// Resolves `spec`, derives the instance inputs and runs it once.
pub fn invoke(spec: &WorkloadSpec, instance_seed: u64) -> Result<Completion> {
    let workload = Workload::load(spec)?;
    let input = prepare_input(spec, instance_seed);
    workload.call(&input)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    #[serde(rename = "workload")]
    workloads: Vec<SuiteEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteEntry {
    name: String,
    #[serde(default = "default_kind")]
    kind: String,
    builtin: Option<String>,
    library: Option<PathBuf>,
    symbol: Option<String>,
    #[serde(default)]
    signature: SymbolSignature,
    #[serde(default = "default_policy")]
    input_policy: String,
    input: Option<String>,
    input_len: Option<(usize, usize)>,
    #[serde(default)]
    seed: u64,
}

fn default_kind() -> String {
    "builtin".into()
}

fn default_policy() -> String {
    "random_length".into()
}

/// Parses a workload suite file (TOML, `[[workload]]` tables). Ids are
/// assigned in file order starting from 0.
pub fn parse_suite(text: &str, origin: &Path) -> Result<Vec<WorkloadSpec>> {
    let cfg_err = |message: String| Error::Config {
        path: origin.to_path_buf(),
        message,
    };
    let file: SuiteFile = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
    let mut specs = Vec::with_capacity(file.workloads.len());
    for (id, entry) in file.workloads.into_iter().enumerate() {
        let kind = match entry.kind.as_str() {
            "builtin" => {
                let name = entry.builtin.as_deref().unwrap_or(&entry.name);
                WorkloadKind::Builtin(name.parse().map_err(|e: Error| cfg_err(e.to_string()))?)
            }
            "dynamic_symbol" => WorkloadKind::DynamicSymbol {
                library: entry
                    .library
                    .ok_or_else(|| cfg_err(format!("workload {} needs `library`", entry.name)))?,
                symbol: entry
                    .symbol
                    .ok_or_else(|| cfg_err(format!("workload {} needs `symbol`", entry.name)))?,
                signature: entry.signature,
            },
            other => return Err(cfg_err(format!("unknown workload kind {other:?}"))),
        };
        let input_policy = match (entry.input_policy.as_str(), entry.input) {
            (_, Some(literal)) => InputPolicy::Literal(literal.into_bytes()),
            ("fixed", None) => InputPolicy::Fixed,
            ("random_length", None) => InputPolicy::RandomLength,
            (other, None) => return Err(cfg_err(format!("unknown input policy {other:?}"))),
        };
        let spec = WorkloadSpec {
            id,
            name: entry.name,
            kind,
            input_policy,
            input_len_range: entry.input_len.unwrap_or(DEFAULT_INPUT_RANGE),
            seed: entry.seed,
        };
        spec.validate().map_err(|e| cfg_err(e.to_string()))?;
        specs.push(spec);
    }
    Ok(specs)
}

pub fn load_suite(path: &Path) -> Result<Vec<WorkloadSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_suite(&text, path)
}
