//! Host scheduling controls for the threaded engine. Every request may be
//! refused (no privileges, non-Linux host); callers fall back to normal
//! time-sharing and report why.

use std::cell::RefCell;

use crate::datapool::CeilingHook;

/// Host `SCHED_FIFO` priority for a task priority.
pub(crate) fn os_priority(task_priority: u8) -> i32 {
    10 + task_priority as i32
}

#[cfg(target_os = "linux")]
pub(crate) fn set_fifo(prio: i32) -> Result<(), String> {
    let param = libc::sched_param {
        sched_priority: prio,
    };
    // SAFETY: plain syscall on the calling thread with a valid param struct.
    let rc = unsafe { libc::pthread_setschedparam(libc::pthread_self(), libc::SCHED_FIFO, &param) };
    if rc == 0 {
        Ok(())
    } else {
        Err(std::io::Error::from_raw_os_error(rc).to_string())
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn set_fifo(_prio: i32) -> Result<(), String> {
    Err("SCHED_FIFO is only requested on Linux".into())
}

#[cfg(target_os = "linux")]
pub(crate) fn pin_to_cpu(cpu: usize) -> Result<(), String> {
    // SAFETY: cpu_set_t is plain data; zeroed is a valid empty set.
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0 {
            Ok(())
        } else {
            Err(std::io::Error::last_os_error().to_string())
        }
    }
}

#[cfg(not(target_os = "linux"))]
pub(crate) fn pin_to_cpu(_cpu: usize) -> Result<(), String> {
    Err("CPU affinity is only requested on Linux".into())
}

/// Raises the holder of a protected object to the object's ceiling.
pub(crate) struct FifoCeiling {
    base: i32,
    stack: RefCell<Vec<i32>>,
}

impl FifoCeiling {
    pub(crate) fn new(base: i32) -> Self {
        Self {
            base,
            stack: RefCell::new(Vec::new()),
        }
    }
}

impl CeilingHook for FifoCeiling {
    fn enter(&self, ceiling: u8) {
        let mut st = self.stack.borrow_mut();
        let cur = st.last().copied().unwrap_or(self.base);
        let want = os_priority(ceiling).max(cur);
        if want != cur {
            let _ = set_fifo(want);
        }
        st.push(want);
    }

    fn exit(&self) {
        let mut st = self.stack.borrow_mut();
        let was = st.pop().unwrap_or(self.base);
        let back = st.last().copied().unwrap_or(self.base);
        if was != back {
            let _ = set_fifo(back);
        }
    }
}
