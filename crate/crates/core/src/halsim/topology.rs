//! Static wiring of the onboard computer: buses, pins and device placement.

use std::fmt;

use serde::{Deserialize, Serialize};

/// An I²C bus, numbered 1..=4 as on the harness drawings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BusId(pub u8);

impl BusId {
    pub const I2C1: BusId = BusId(1);
    pub const I2C2: BusId = BusId(2);
    pub const I2C3: BusId = BusId(3);
    pub const I2C4: BusId = BusId(4);
    pub const ALL: [BusId; 4] = [Self::I2C1, Self::I2C2, Self::I2C3, Self::I2C4];

    pub(crate) fn index(self) -> Option<usize> {
        (1..=4).contains(&self.0).then(|| self.0 as usize - 1)
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "I2C-{}", self.0)
    }
}

/// Power domains switched by the PCU. The OBC rail (barometers, PCU
/// sensors) is always on and has no switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PowerDomain {
    Tmu,
    SdpuAnalog,
    Nads,
    Obc,
}

impl PowerDomain {
    pub const SWITCHED: [PowerDomain; 3] =
        [PowerDomain::Tmu, PowerDomain::SdpuAnalog, PowerDomain::Nads];

    /// PCU switch index for switched domains.
    pub fn switch(self) -> Option<usize> {
        match self {
            PowerDomain::Tmu => Some(0),
            PowerDomain::SdpuAnalog => Some(1),
            PowerDomain::Nads => Some(2),
            PowerDomain::Obc => None,
        }
    }
}

/// Remote terminal unit carrying analog multiplexers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rtu {
    Tmu,
    Sdpu,
}

impl Rtu {
    pub fn mux_count(self) -> u8 {
        match self {
            Rtu::Tmu => 4,
            Rtu::Sdpu => 2,
        }
    }

    pub fn domain(self) -> PowerDomain {
        match self {
            Rtu::Tmu => PowerDomain::Tmu,
            Rtu::Sdpu => PowerDomain::SdpuAnalog,
        }
    }

    pub fn adc(self) -> (BusId, u8) {
        match self {
            Rtu::Tmu => (BusId::I2C4, addr::ADC),
            Rtu::Sdpu => (BusId::I2C3, addr::ADC),
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Rtu::Tmu => 0,
            Rtu::Sdpu => 1,
        }
    }
}

/// One 8:1 analog multiplexer. Mux `index` feeds input AIN`index` of its
/// RTU's ADC; all muxes of an RTU share the same three select lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MuxId {
    pub rtu: Rtu,
    pub index: u8,
}

impl MuxId {
    pub fn new(rtu: Rtu, index: u8) -> Self {
        Self { rtu, index }
    }
}

pub mod addr {
    pub const IMU: u8 = 0x28;
    pub const INA226: u8 = 0x40;
    pub const TC74: u8 = 0x48;
    pub const ADC: u8 = 0x48;
    pub const BARO_A: u8 = 0x76;
    pub const BARO_B: u8 = 0x77;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PinRole {
    PowerSwitch(u8),
    MuxSelect { rtu: Rtu, bit: u8 },
    HeaterBankEnable(u8),
    I2cSda(u8),
    I2cScl(u8),
    UartTx,
    UartRx,
    Pwm(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interface {
    Gpio,
    I2c(u8),
    Uart,
    Pwm(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pin {
    /// Header GPIO number.
    pub gpio: u8,
    pub role: PinRole,
}

impl Pin {
    pub fn interface(&self) -> Interface {
        match self.role {
            PinRole::PowerSwitch(_) | PinRole::MuxSelect { .. } | PinRole::HeaterBankEnable(_) => {
                Interface::Gpio
            }
            PinRole::I2cSda(b) | PinRole::I2cScl(b) => Interface::I2c(b),
            PinRole::UartTx | PinRole::UartRx => Interface::Uart,
            PinRole::Pwm(c) => Interface::Pwm(c),
        }
    }
}

/// Device placement entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub device: &'static str,
    pub bus: BusId,
    pub addr: u8,
    pub domain: PowerDomain,
}

/// Interface and pin counts of a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct InterfaceAudit {
    pub gpio: usize,
    pub i2c: usize,
    pub uart: usize,
    pub pwm: usize,
    pub pins: usize,
}

impl InterfaceAudit {
    pub fn interfaces(&self) -> usize {
        self.gpio + self.i2c + self.uart + self.pwm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusTopology {
    pub pins: Vec<Pin>,
    pub placements: Vec<Placement>,
}

impl BusTopology {
    pub fn onboard() -> Self {
        use PinRole::*;
        let mut pins = Vec::new();
        let mut gpio = [4u8, 17, 27, 22, 5, 6, 13, 19, 26, 20, 21].into_iter();
        let mut next = || gpio.next().expect("pin plan");
        for s in 0..3 {
            pins.push(Pin {
                gpio: next(),
                role: PowerSwitch(s),
            });
        }
        for rtu in [Rtu::Tmu, Rtu::Sdpu] {
            for bit in 0..3 {
                pins.push(Pin {
                    gpio: next(),
                    role: MuxSelect { rtu, bit },
                });
            }
        }
        for b in 0..2 {
            pins.push(Pin {
                gpio: next(),
                role: HeaterBankEnable(b),
            });
        }
        // bus pins on the header alternate-function positions
        let i2c_pins = [(2, 3), (0, 1), (24, 25), (10, 11)];
        for (i, (sda, scl)) in i2c_pins.into_iter().enumerate() {
            let b = i as u8 + 1;
            pins.push(Pin {
                gpio: sda,
                role: I2cSda(b),
            });
            pins.push(Pin {
                gpio: scl,
                role: I2cScl(b),
            });
        }
        pins.push(Pin {
            gpio: 14,
            role: UartTx,
        });
        pins.push(Pin {
            gpio: 15,
            role: UartRx,
        });
        for (c, g) in [12u8, 18, 16, 23].into_iter().enumerate() {
            pins.push(Pin {
                gpio: g,
                role: Pwm(c as u8),
            });
        }

        let placements = vec![
            Placement {
                device: "IMU",
                bus: BusId::I2C1,
                addr: addr::IMU,
                domain: PowerDomain::Nads,
            },
            Placement {
                device: "INA226",
                bus: BusId::I2C2,
                addr: addr::INA226,
                domain: PowerDomain::Obc,
            },
            Placement {
                device: "TC74",
                bus: BusId::I2C2,
                addr: addr::TC74,
                domain: PowerDomain::Obc,
            },
            Placement {
                device: "Barometer-A",
                bus: BusId::I2C3,
                addr: addr::BARO_A,
                domain: PowerDomain::Obc,
            },
            Placement {
                device: "Barometer-B",
                bus: BusId::I2C3,
                addr: addr::BARO_B,
                domain: PowerDomain::Obc,
            },
            Placement {
                device: "ADC-SDPU",
                bus: BusId::I2C3,
                addr: addr::ADC,
                domain: PowerDomain::SdpuAnalog,
            },
            Placement {
                device: "ADC-TMU",
                bus: BusId::I2C4,
                addr: addr::ADC,
                domain: PowerDomain::Tmu,
            },
        ];
        Self { pins, placements }
    }

    pub fn audit(&self) -> InterfaceAudit {
        let mut a = InterfaceAudit {
            pins: self.pins.len(),
            ..Default::default()
        };
        let mut i2c = std::collections::BTreeSet::new();
        let mut uart = false;
        for p in &self.pins {
            match p.interface() {
                Interface::Gpio => a.gpio += 1,
                Interface::I2c(b) => {
                    i2c.insert(b);
                }
                Interface::Uart => uart = true,
                Interface::Pwm(_) => a.pwm += 1,
            }
        }
        a.i2c = i2c.len();
        a.uart = usize::from(uart);
        a
    }

    pub fn pin_for(&self, role: PinRole) -> Option<u8> {
        self.pins.iter().find(|p| p.role == role).map(|p| p.gpio)
    }
}
