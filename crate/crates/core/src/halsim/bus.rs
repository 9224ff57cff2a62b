//! I²C bus fabric. Each bus is one mutual-exclusion domain; a transfer
//! (optional write then optional read) is atomic with respect to other
//! transfers on the same bus.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use super::topology::{BusId, PowerDomain};
use super::world::World;
use super::HalError;

/// What a device sees while handling a transfer.
pub struct DevCtx<'a> {
    pub now_ns: u64,
    pub world: &'a World,
}

/// Register-level behaviour of one bus target.
pub trait I2cDevice: Send {
    fn name(&self) -> &'static str;
    fn domain(&self) -> PowerDomain;
    fn write(&mut self, ctx: &DevCtx<'_>, bytes: &[u8]) -> Result<(), HalError>;
    fn read(&mut self, ctx: &DevCtx<'_>, len: usize) -> Result<Vec<u8>, HalError>;
    /// Called when the device's rail is switched off.
    fn power_reset(&mut self) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    W,
    R,
}

/// One leg of a transfer in the transaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxRecord {
    pub t_ms: u64,
    pub bus: u8,
    pub addr: u8,
    pub dir: Direction,
    pub bytes: Vec<u8>,
    /// Transfer id; both legs of one transfer share it.
    pub txn: u64,
}

pub(crate) struct BusInner {
    pub(crate) devices: BTreeMap<u8, Box<dyn I2cDevice>>,
    log: Option<Vec<TxRecord>>,
    log_cap: usize,
}

pub struct I2cBus {
    id: BusId,
    pub(crate) inner: Mutex<BusInner>,
    transfers: AtomicU64,
    nacks: AtomicU64,
}

impl I2cBus {
    pub(crate) fn new(id: BusId) -> Self {
        Self {
            id,
            inner: Mutex::new(BusInner {
                devices: BTreeMap::new(),
                log: None,
                log_cap: 0,
            }),
            transfers: AtomicU64::new(0),
            nacks: AtomicU64::new(0),
        }
    }

    pub fn id(&self) -> BusId {
        self.id
    }

    pub(crate) fn attach(&self, addr: u8, dev: Box<dyn I2cDevice>) {
        let prev = self.inner.lock().unwrap().devices.insert(addr, dev);
        assert!(
            prev.is_none(),
            "{}: address 0x{addr:02x} already taken",
            self.id
        );
    }

    pub(crate) fn enable_log(&self, cap: usize) {
        let mut g = self.inner.lock().unwrap();
        g.log = Some(Vec::new());
        g.log_cap = cap;
    }

    pub fn take_log(&self) -> Vec<TxRecord> {
        let mut g = self.inner.lock().unwrap();
        g.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn transfers(&self) -> u64 {
        self.transfers.load(Ordering::Relaxed)
    }

    pub fn nacks(&self) -> u64 {
        self.nacks.load(Ordering::Relaxed)
    }

    pub(crate) fn transfer(
        &self,
        world: &World,
        now_ns: u64,
        addr: u8,
        write: &[u8],
        read_len: usize,
    ) -> Result<Vec<u8>, HalError> {
        let mut g = self.inner.lock().unwrap();
        let txn = self.transfers.fetch_add(1, Ordering::Relaxed);
        let inner = &mut *g;
        let res = (|| {
            let dev = inner
                .devices
                .get_mut(&addr)
                .ok_or(HalError::Nack { bus: self.id, addr })?;
            if !world.is_powered(dev.domain()) {
                return Err(HalError::PoweredOff { bus: self.id, addr });
            }
            let ctx = DevCtx { now_ns, world };
            if !write.is_empty() {
                dev.write(&ctx, write)?;
            }
            if read_len > 0 {
                dev.read(&ctx, read_len)
            } else {
                Ok(Vec::new())
            }
        })();
        if res.is_err() {
            self.nacks.fetch_add(1, Ordering::Relaxed);
        }
        if let Some(log) = inner.log.as_mut() {
            let mut push = |dir, bytes: &[u8]| {
                if log.len() < inner.log_cap {
                    log.push(TxRecord {
                        t_ms: now_ns / 1_000_000,
                        bus: self.id.0,
                        addr,
                        dir,
                        bytes: bytes.to_vec(),
                        txn,
                    });
                }
            };
            if !write.is_empty() {
                push(Direction::W, write);
            }
            if let Ok(r) = &res {
                if !r.is_empty() {
                    push(Direction::R, r);
                }
            }
        }
        res
    }

    pub(crate) fn reset_domain(&self, domain: PowerDomain) {
        let mut g = self.inner.lock().unwrap();
        for dev in g.devices.values_mut() {
            if dev.domain() == domain {
                dev.power_reset();
            }
        }
    }
}

/// Serialises a transaction log as JSON lines.
pub fn log_to_jsonl(records: &[TxRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("plain record"));
        s.push('\n');
    }
    s
}
