//! Simulated hardware abstraction layer.
//!
//! Layers mirror the flight HAL: bus handlers ([`Hal::i2c_transfer`],
//! [`Hal::uart_read`], GPIO/PWM), equipment handlers ([`drivers`]) and the
//! register models behind the buses ([`devices`], [`adc`], [`gps`]).

pub mod adc;
mod bus;
pub mod devices;
pub mod drivers;
pub mod gps;
pub mod pt1000;
mod testbench;
pub mod topology;
mod world;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use thiserror::Error;

pub use bus::{log_to_jsonl, DevCtx, Direction, I2cDevice, TxRecord};
pub use testbench::{FixtureRow, TestBenchFixture};
pub use topology::{BusId, BusTopology, InterfaceAudit, MuxId, PinRole, PowerDomain, Rtu};
pub use world::{AnalogSource, World, WorldConfig, MUX_SETTLE_NS, PLATES_PER_ZONE};

use crate::envsim::Profile;
use crate::time::SimClock;
use bus::I2cBus;
use gps::Uart;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HalError {
    #[error("{bus}: no device acknowledged address 0x{addr:02x}")]
    Nack { bus: BusId, addr: u8 },
    #[error("{bus}: device 0x{addr:02x} is not powered")]
    PoweredOff { bus: BusId, addr: u8 },
    #[error("no such bus I2C-{0}")]
    NoBus(u8),
    #[error("ADC not configured for the ±4.096 V range")]
    Unconfigured,
    #[error("device busy")]
    Busy,
    #[error("register 0x{0:02x}: {1}")]
    Register(u8, String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("UART port {0} is closed")]
    PortClosed(u8),
    #[error("model error: {0}")]
    Model(String),
}

impl HalError {
    /// Errors a bus master sees as a missing acknowledge.
    pub fn is_nack(&self) -> bool {
        matches!(self, HalError::Nack { .. } | HalError::PoweredOff { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HalConfig {
    pub world: WorldConfig,
    pub barometer_noise_mbar: f64,
    /// Keep up to this many transaction-log entries per bus.
    pub tx_log_cap: Option<usize>,
}

impl Default for HalConfig {
    fn default() -> Self {
        Self {
            world: WorldConfig::default(),
            barometer_noise_mbar: 0.05,
            tx_log_cap: None,
        }
    }
}

/// The onboard computer's view of its hardware.
pub struct Hal {
    clock: SimClock,
    world: Arc<World>,
    topology: BusTopology,
    buses: [I2cBus; 4],
    uart: Mutex<Uart>,
    gpio: Mutex<BTreeMap<u8, bool>>,
}

impl std::fmt::Debug for Hal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Hal")
            .field("world", &self.world)
            .finish_non_exhaustive()
    }
}

impl Hal {
    pub fn new(clock: SimClock, profile: Profile, cfg: HalConfig) -> Self {
        let seed = cfg.world.seed;
        let world = Arc::new(World::new(profile, cfg.world.clone()));
        let buses = BusId::ALL.map(I2cBus::new);
        use topology::addr;
        buses[0].attach(addr::IMU, Box::new(devices::Imu::new(seed)));
        buses[1].attach(addr::INA226, Box::new(devices::PowerMonitor::new(seed)));
        buses[1].attach(addr::TC74, Box::new(devices::Thermometer::new()));
        buses[2].attach(
            addr::BARO_A,
            Box::new(devices::Barometer::new(
                seed ^ 0xA,
                cfg.barometer_noise_mbar,
            )),
        );
        buses[2].attach(
            addr::BARO_B,
            Box::new(devices::Barometer::new(
                seed ^ 0xB,
                cfg.barometer_noise_mbar,
            )),
        );
        buses[2].attach(addr::ADC, Box::new(adc::Adc::new(Rtu::Sdpu)));
        buses[3].attach(addr::ADC, Box::new(adc::Adc::new(Rtu::Tmu)));
        if let Some(cap) = cfg.tx_log_cap {
            for b in &buses {
                b.enable_log(cap);
            }
        }
        let topology = BusTopology::onboard();
        let gpio = topology
            .pins
            .iter()
            .filter(|p| matches!(p.interface(), topology::Interface::Gpio))
            .map(|p| (p.gpio, false))
            .collect();
        Self {
            clock,
            world,
            topology,
            buses,
            uart: Mutex::new(Uart::new()),
            gpio: Mutex::new(gpio),
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn topology(&self) -> &BusTopology {
        &self.topology
    }

    pub fn bus(&self, id: BusId) -> Result<&I2cBus, HalError> {
        id.index()
            .map(|i| &self.buses[i])
            .ok_or(HalError::NoBus(id.0))
    }

    fn now(&self) -> u64 {
        self.clock.now_ns()
    }

    /// Atomic write-then-read transfer on one bus.
    pub fn i2c_transfer(
        &self,
        bus: BusId,
        addr: u8,
        write: &[u8],
        read_len: usize,
    ) -> Result<Vec<u8>, HalError> {
        if addr > 0x7F {
            return Err(HalError::Range(format!(
                "address 0x{addr:02x} is not 7-bit"
            )));
        }
        self.bus(bus)?
            .transfer(&self.world, self.now(), addr, write, read_len)
    }

    /// Drained transaction logs of every bus, in bus order.
    pub fn take_tx_logs(&self) -> Vec<TxRecord> {
        self.buses.iter().flat_map(|b| b.take_log()).collect()
    }

    pub fn bus_nacks(&self) -> u64 {
        self.buses.iter().map(|b| b.nacks()).sum()
    }

    // UART -------------------------------------------------------------------

    pub fn uart_open(&self, port: u8, baud: u32) -> Result<(), HalError> {
        if port != 0 {
            return Err(HalError::PortClosed(port));
        }
        let mut u = self.uart.lock().unwrap();
        u.sync(&self.world, self.now());
        u.open(baud);
        Ok(())
    }

    pub fn uart_close(&self, port: u8) {
        if port == 0 {
            self.uart.lock().unwrap().close();
        }
    }

    /// Bytes that have arrived by now, up to `max`.
    pub fn uart_read(&self, port: u8, max: usize) -> Result<Vec<u8>, HalError> {
        if port != 0 {
            return Err(HalError::PortClosed(port));
        }
        self.uart.lock().unwrap().read(&self.world, self.now(), max)
    }

    /// (epochs emitted, FIFO overruns).
    pub fn uart_stats(&self) -> (u64, u64) {
        let u = self.uart.lock().unwrap();
        (u.epochs, u.overruns)
    }

    // GPIO / PWM -------------------------------------------------------------

    pub fn gpio_read(&self, pin: u8) -> Option<bool> {
        self.gpio.lock().unwrap().get(&pin).copied()
    }

    /// Drives a GPIO line; the effect depends on the pin's role.
    pub fn gpio_write(&self, pin: u8, level: bool) -> Result<(), HalError> {
        let role = self
            .topology
            .pins
            .iter()
            .find(|p| p.gpio == pin && matches!(p.interface(), topology::Interface::Gpio))
            .map(|p| p.role)
            .ok_or_else(|| HalError::Range(format!("GPIO {pin} is not an output line")))?;
        let now = self.now();
        {
            let mut g = self.gpio.lock().unwrap();
            if g.get(&pin) == Some(&level) {
                return Ok(());
            }
            g.insert(pin, level);
        }
        match role {
            PinRole::PowerSwitch(s) => {
                self.uart.lock().unwrap().sync(&self.world, now);
                self.world.set_rail(now, s as usize, level);
                if !level {
                    let domain = PowerDomain::SWITCHED[s as usize];
                    for b in &self.buses {
                        b.reset_domain(domain);
                    }
                }
            }
            PinRole::MuxSelect { rtu, bit } => self.world.set_select_bit(now, rtu, bit, level),
            PinRole::HeaterBankEnable(b) => self.world.set_bank(now, b as usize, level),
            _ => unreachable!("filtered to GPIO roles"),
        }
        Ok(())
    }

    pub fn set_power(&self, switch: usize, on: bool) -> Result<(), HalError> {
        let pin = self
            .topology
            .pin_for(PinRole::PowerSwitch(switch as u8))
            .ok_or_else(|| HalError::Range(format!("power switch {switch}")))?;
        self.gpio_write(pin, on)
    }

    pub fn power_states(&self) -> [bool; 3] {
        self.world.rails()
    }

    /// Drives the shared select lines of `mux`'s RTU. Returns whether the
    /// routed channel changed.
    pub fn mux_select(&self, mux: MuxId, channel: u8) -> Result<bool, HalError> {
        if channel > 7 {
            return Err(HalError::Range(format!("mux channel {channel} > 7")));
        }
        if mux.index >= mux.rtu.mux_count() {
            return Err(HalError::Range(format!(
                "{:?} has no mux {}",
                mux.rtu, mux.index
            )));
        }
        let before = self.world.selected_channel(mux.rtu);
        {
            // all three lines switch in one register write
            let mut g = self.gpio.lock().unwrap();
            for bit in 0..3u8 {
                let pin = self
                    .topology
                    .pin_for(PinRole::MuxSelect { rtu: mux.rtu, bit })
                    .expect("select pins wired");
                g.insert(pin, channel & (1 << bit) != 0);
            }
        }
        self.world.set_select_channel(self.now(), mux.rtu, channel);
        Ok(before != channel)
    }

    pub fn set_heater_bank(&self, bank: usize, on: bool) -> Result<(), HalError> {
        let pin = self
            .topology
            .pin_for(PinRole::HeaterBankEnable(bank as u8))
            .ok_or_else(|| HalError::Range(format!("heater bank {bank}")))?;
        self.gpio_write(pin, on)
    }

    pub fn pwm_set(&self, channel: usize, duty_pct: f64) -> Result<(), HalError> {
        if channel >= 4 {
            return Err(HalError::Range(format!("PWM channel {channel}")));
        }
        if !(0.0..=100.0).contains(&duty_pct) {
            return Err(HalError::Range(format!("PWM duty {duty_pct} %")));
        }
        self.world.set_pwm(self.now(), channel, duty_pct);
        Ok(())
    }

    pub fn pwm_duty(&self) -> [f64; 4] {
        self.world.pwm()
    }

    // bench ------------------------------------------------------------------

    /// Replaces every analog source of `rtu` with one pass of `fixture`
    /// (see [`TestBenchFixture::passes`]); channels not listed read 0 V.
    pub fn load_testbench_pass(&self, rtu: Rtu, pass: BTreeMap<(u8, u8), f64>) {
        self.world.set_bench(rtu, Some(pass));
    }

    /// Loads the first pass of `fixture`.
    pub fn load_testbench(&self, rtu: Rtu, fixture: &TestBenchFixture) {
        let pass = fixture.passes().into_iter().next().unwrap_or_default();
        self.load_testbench_pass(rtu, pass);
    }

    pub fn clear_testbench(&self, rtu: Rtu) {
        self.world.set_bench(rtu, None);
    }
}

#[cfg(test)]
mod tests;
