//! Linux `perf_event_open` backend.
//!
//! Each catalog event owns one counting file descriptor, created disabled.
//! A measurement resets and enables only that descriptor, reads it, runs the
//! target, reads it again and disables it, so exactly one counter is armed
//! per execution. The measuring thread is pinned to a single logical core.

use std::collections::HashMap;
use std::fs;
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::path::Path;

use super::{delta, BackendCode, CounterBackend, CounterSample, EventDescriptor, Privilege, Target};
use crate::error::{Error, Result};

const PARANOID_PATH: &str = "/proc/sys/kernel/perf_event_paranoid";
const CPU_EVENTS_DIR: &str = "/sys/bus/event_source/devices/cpu/events";

const TYPE_HARDWARE: u32 = 0;
const TYPE_HW_CACHE: u32 = 3;
const TYPE_RAW: u32 = 4;

const HW_CPU_CYCLES: u64 = 0;
const HW_INSTRUCTIONS: u64 = 1;
const HW_CACHE_REFERENCES: u64 = 2;
const HW_CACHE_MISSES: u64 = 3;
const HW_BRANCH_INSTRUCTIONS: u64 = 4;
const HW_BRANCH_MISSES: u64 = 5;
const HW_STALLED_FRONTEND: u64 = 7;
const HW_STALLED_BACKEND: u64 = 8;
const HW_REF_CPU_CYCLES: u64 = 9;

const CACHE_L1D: u64 = 0;
const CACHE_L1I: u64 = 1;
const CACHE_LL: u64 = 2;
const CACHE_DTLB: u64 = 3;
const CACHE_ITLB: u64 = 4;
const OP_READ: u64 = 0;
const RESULT_ACCESS: u64 = 0;
const RESULT_MISS: u64 = 1;

const FLAG_DISABLED: u64 = 1 << 0;
const FLAG_EXCLUDE_KERNEL: u64 = 1 << 5;
const FLAG_EXCLUDE_HV: u64 = 1 << 6;

const IOC_ENABLE: libc::c_ulong = 0x2400;
const IOC_DISABLE: libc::c_ulong = 0x2401;
const IOC_RESET: libc::c_ulong = 0x2403;

/// `struct perf_event_attr`, layout revision 5 (112 bytes).
#[repr(C)]
#[derive(Default)]
struct PerfEventAttr {
    kind: u32,
    size: u32,
    config: u64,
    sample_period: u64,
    sample_type: u64,
    read_format: u64,
    flags: u64,
    wakeup_events: u32,
    bp_type: u32,
    config1: u64,
    config2: u64,
    branch_sample_type: u64,
    sample_regs_user: u64,
    sample_stack_user: u32,
    clockid: i32,
    sample_regs_intr: u64,
    aux_watermark: u32,
    sample_max_stack: u16,
    reserved: u16,
}

const ATTR_SIZE: u32 = 112;
const _: () = assert!(std::mem::size_of::<PerfEventAttr>() == ATTR_SIZE as usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerfConfig {
    /// Count events attributed to the kernel as well. Requires
    /// `perf_event_paranoid <= 1` for unprivileged users.
    pub include_kernel: bool,
    /// Pin the measuring thread to the core it is running on.
    pub pin: bool,
}

impl Default for PerfConfig {
    fn default() -> Self {
        PerfConfig {
            include_kernel: false,
            pin: true,
        }
    }
}

pub struct PerfBackend {
    config: PerfConfig,
    catalog: Vec<EventDescriptor>,
    fds: HashMap<String, OwnedFd>,
    pinned_cpu: Option<usize>,
    exec_counter: u64,
}

struct Candidate {
    name: &'static str,
    description: &'static str,
    code: BackendCode,
}

fn cache(id: u64, result: u64) -> u64 {
    id | (OP_READ << 8) | (result << 16)
}

fn candidates() -> Vec<Candidate> {
    let hw = |config| BackendCode::Perf { kind: TYPE_HARDWARE, config };
    let hc = |id, result| BackendCode::Perf { kind: TYPE_HW_CACHE, config: cache(id, result) };
    let mut list = vec![
        Candidate { name: "TOT_INS", description: "Instructions completed.", code: hw(HW_INSTRUCTIONS) },
        Candidate { name: "TOT_CYC", description: "Total cycles executed.", code: hw(HW_CPU_CYCLES) },
        Candidate { name: "REF_CYC", description: "Reference cycles executed.", code: hw(HW_REF_CPU_CYCLES) },
        Candidate { name: "BR_INS", description: "Branch instructions.", code: hw(HW_BRANCH_INSTRUCTIONS) },
        Candidate { name: "BR_MSP", description: "Conditional branch mispredictions.", code: hw(HW_BRANCH_MISSES) },
        Candidate { name: "STL_ICY", description: "Cycles with no instruction issue.", code: hw(HW_STALLED_FRONTEND) },
        Candidate { name: "RES_STL", description: "Cycles stalled on any resource.", code: hw(HW_STALLED_BACKEND) },
        Candidate { name: "LLC_TCA", description: "Last-level cache accesses.", code: hw(HW_CACHE_REFERENCES) },
        Candidate { name: "LLC_TCM", description: "Last-level cache misses.", code: hw(HW_CACHE_MISSES) },
        Candidate { name: "L1_DCA", description: "L1 data cache accesses.", code: hc(CACHE_L1D, RESULT_ACCESS) },
        Candidate { name: "L1_DCM", description: "L1 data cache misses.", code: hc(CACHE_L1D, RESULT_MISS) },
        Candidate { name: "L1_ICM", description: "L1 instruction cache misses.", code: hc(CACHE_L1I, RESULT_MISS) },
        Candidate { name: "LLC_LDM", description: "Last-level cache load misses.", code: hc(CACHE_LL, RESULT_MISS) },
        Candidate { name: "TLB_DM", description: "Data TLB misses.", code: hc(CACHE_DTLB, RESULT_MISS) },
        Candidate { name: "TLB_IM", description: "Instruction TLB misses.", code: hc(CACHE_ITLB, RESULT_MISS) },
    ];
    if let Some(config) = hardware_interrupt_event(Path::new(CPU_EVENTS_DIR)) {
        list.push(Candidate {
            name: "HW_INT",
            description: "Hardware interrupts received.",
            code: BackendCode::Perf { kind: TYPE_RAW, config },
        });
    }
    if cfg!(target_arch = "x86_64") {
        list.push(Candidate {
            name: "RDTSCP",
            description: "Cycle count since a reset.",
            code: BackendCode::TimestampCounter,
        });
    }
    list
}

/// Raw encoding of the host's hardware-interrupt event, if the PMU
/// advertises one in sysfs.
fn hardware_interrupt_event(dir: &Path) -> Option<u64> {
    let entries = fs::read_dir(dir).ok()?;
    let mut names: Vec<_> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("hw_interrupts") && !n.ends_with(".scale") && !n.ends_with(".unit"))
        .collect();
    names.sort();
    let text = fs::read_to_string(dir.join(names.first()?)).ok()?;
    parse_sysfs_event(&text)
}

/// Parses `event=0xcb,umask=0x01` style sysfs encodings into a raw config.
pub(crate) fn parse_sysfs_event(text: &str) -> Option<u64> {
    let mut config = 0u64;
    for term in text.trim().split(',') {
        let (key, value) = match term.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (term.trim(), "1"),
        };
        let value = match value.strip_prefix("0x") {
            Some(hex) => u64::from_str_radix(hex, 16).ok()?,
            None => value.parse().ok()?,
        };
        let shift = match key {
            "event" => 0,
            "umask" => 8,
            "edge" => 18,
            "inv" => 23,
            "cmask" => 24,
            _ => return None,
        };
        config |= value << shift;
    }
    Some(config)
}

fn read_paranoid() -> Result<i32> {
    let text = fs::read_to_string(PARANOID_PATH).map_err(|e| Error::BackendUnavailable {
        capability: "perf_event_open".into(),
        reason: format!("{PARANOID_PATH} unreadable ({e}); the kernel performance-events interface is absent"),
    })?;
    text.trim().parse().map_err(|_| Error::BackendUnavailable {
        capability: "perf_event_open".into(),
        reason: format!("unexpected content in {PARANOID_PATH}: {text:?}"),
    })
}

fn open_counter(kind: u32, config: u64, include_kernel: bool) -> std::io::Result<OwnedFd> {
    let mut attr = PerfEventAttr {
        kind,
        size: ATTR_SIZE,
        config,
        flags: FLAG_DISABLED | FLAG_EXCLUDE_HV | if include_kernel { 0 } else { FLAG_EXCLUDE_KERNEL },
        ..Default::default()
    };
    // SAFETY: attr is a properly sized, initialised perf_event_attr; pid 0 and
    // cpu -1 request a counter for the calling thread on any CPU.
    let fd = unsafe {
        libc::syscall(
            libc::SYS_perf_event_open,
            &mut attr as *mut PerfEventAttr,
            0 as libc::pid_t,
            -1 as libc::c_int,
            -1 as libc::c_int,
            0 as libc::c_ulong,
        )
    };
    if fd < 0 {
        return Err(std::io::Error::last_os_error());
    }
    // SAFETY: the syscall returned a fresh descriptor we now own.
    Ok(unsafe { OwnedFd::from_raw_fd(fd as libc::c_int) })
}

fn ioctl(fd: &OwnedFd, request: libc::c_ulong) -> std::io::Result<()> {
    // SAFETY: fd is a live perf event descriptor; these requests take no argument.
    let rc = unsafe { libc::ioctl(fd.as_raw_fd(), request as _, 0) };
    if rc < 0 {
        Err(std::io::Error::last_os_error())
    } else {
        Ok(())
    }
}

#[inline(always)]
fn read_counter(fd: &OwnedFd) -> std::io::Result<u64> {
    let mut value = 0u64;
    // SAFETY: reading 8 bytes into a u64 from a counting perf descriptor.
    let n = unsafe { libc::read(fd.as_raw_fd(), &mut value as *mut u64 as *mut libc::c_void, 8) };
    if n != 8 {
        return Err(std::io::Error::last_os_error());
    }
    Ok(value)
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn read_tsc() -> u64 {
    let mut aux = 0u32;
    // SAFETY: rdtscp is available on every x86_64 CPU this backend targets.
    unsafe { core::arch::x86_64::__rdtscp(&mut aux) }
}

#[cfg(not(target_arch = "x86_64"))]
fn read_tsc() -> u64 {
    0
}

fn pin_current_thread() -> Result<usize> {
    // SAFETY: plain libc calls on the calling thread with a zeroed cpu_set_t.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return Err(Error::BackendUnavailable {
                capability: "sched_getcpu".into(),
                reason: std::io::Error::last_os_error().to_string(),
            });
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            return Err(Error::BackendUnavailable {
                capability: "sched_setaffinity".into(),
                reason: std::io::Error::last_os_error().to_string(),
            });
        }
        Ok(cpu as usize)
    }
}

impl PerfBackend {
    /// Opens the backend, probing which events the host can count.
    ///
    /// Fails with [`Error::BackendUnavailable`] when the paranoid setting
    /// forbids the requested access or no event can be opened.
    pub fn open(config: PerfConfig) -> Result<Self> {
        let paranoid = read_paranoid()?;
        // SAFETY: geteuid has no preconditions.
        let root = unsafe { libc::geteuid() } == 0;
        let limit = if config.include_kernel { 1 } else { 2 };
        if !root && paranoid > limit {
            return Err(Error::BackendUnavailable {
                capability: "perf_event_open".into(),
                reason: format!(
                    "kernel.perf_event_paranoid = {paranoid} denies unprivileged counter access; \
                     run `sysctl -w kernel.perf_event_paranoid={limit}` or measure as root"
                ),
            });
        }

        let privilege = if config.include_kernel { Privilege::Privileged } else { Privilege::User };
        let mut catalog = Vec::new();
        let mut fds = HashMap::new();
        let mut last_error = None;
        for c in candidates() {
            match c.code {
                BackendCode::Perf { kind, config: code } => {
                    match open_counter(kind, code, config.include_kernel) {
                        Ok(fd) => {
                            fds.insert(c.name.to_string(), fd);
                            catalog.push(EventDescriptor {
                                name: c.name.into(),
                                description: c.description.into(),
                                privilege,
                                backend_code: c.code,
                            });
                        }
                        Err(e) => last_error = Some(format!("{}: {e}", c.name)),
                    }
                }
                BackendCode::TimestampCounter => catalog.push(EventDescriptor {
                    name: c.name.into(),
                    description: c.description.into(),
                    privilege: Privilege::User,
                    backend_code: c.code,
                }),
                _ => unreachable!("perf candidates only carry perf or tsc codes"),
            }
        }
        if fds.is_empty() {
            return Err(Error::BackendUnavailable {
                capability: "perf_event_open".into(),
                reason: format!(
                    "no hardware counter could be opened (kernel.perf_event_paranoid = {paranoid}; last error {})",
                    last_error.unwrap_or_else(|| "none".into())
                ),
            });
        }
        let pinned_cpu = if config.pin { Some(pin_current_thread()?) } else { None };
        log::debug!("perf backend: {} events, pinned to {:?}", catalog.len(), pinned_cpu);
        Ok(PerfBackend {
            config,
            catalog,
            fds,
            pinned_cpu,
            exec_counter: 0,
        })
    }

    pub fn pinned_cpu(&self) -> Option<usize> {
        self.pinned_cpu
    }
}

impl CounterBackend for PerfBackend {
    fn identity(&self) -> String {
        format!(
            "perf_event(kernel={}, cpu={})",
            self.config.include_kernel,
            self.pinned_cpu.map_or_else(|| "any".to_string(), |c| c.to_string())
        )
    }

    fn catalog(&self) -> Result<Vec<EventDescriptor>> {
        Ok(self.catalog.clone())
    }

    fn measure_one(
        &mut self,
        event: &EventDescriptor,
        target: &mut dyn Target,
    ) -> Result<CounterSample> {
        let known = self
            .catalog
            .iter()
            .find(|e| e.name == event.name)
            .ok_or_else(|| Error::UnknownEvent(event.name.clone()))?;
        if known.privilege == Privilege::Privileged && !self.config.include_kernel {
            return Err(Error::PrivilegedEvent(event.name.clone()));
        }
        let fail = |reason: String| Error::MeasurementFailed {
            event: event.name.clone(),
            reason,
        };
        let value = match known.backend_code {
            BackendCode::TimestampCounter => {
                let before = read_tsc();
                target.invoke().map_err(|e| fail(e.to_string()))?;
                let after = read_tsc();
                delta(&event.name, before, after)?
            }
            _ => {
                let fd = self
                    .fds
                    .get(&event.name)
                    .ok_or_else(|| fail("descriptor missing".into()))?;
                ioctl(fd, IOC_RESET).map_err(|e| fail(format!("reset: {e}")))?;
                ioctl(fd, IOC_ENABLE).map_err(|e| fail(format!("enable: {e}")))?;
                let before = read_counter(fd);
                let outcome = target.invoke();
                let after = read_counter(fd);
                ioctl(fd, IOC_DISABLE).map_err(|e| fail(format!("disable: {e}")))?;
                outcome.map_err(|e| fail(e.to_string()))?;
                let before = before.map_err(|e| fail(format!("pre-read: {e}")))?;
                let after = after.map_err(|e| fail(format!("post-read: {e}")))?;
                delta(&event.name, before, after)?
            }
        };
        let exec_index = self.exec_counter;
        self.exec_counter += 1;
        Ok(CounterSample {
            event: event.name.clone(),
            value,
            exec_index,
        })
    }
}
