use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Event, EventKind, MissionConfig, TcId, Telecommand};

/// Mission phase. Declaration order is the flight chain.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
pub enum OperatingMode {
    #[default]
    PreLaunch,
    Ascent1,
    Ascent2,
    Float1,
    Float2,
    Descent,
    Shutdown,
}

impl OperatingMode {
    pub const CHAIN: [OperatingMode; 7] = [
        OperatingMode::PreLaunch,
        OperatingMode::Ascent1,
        OperatingMode::Ascent2,
        OperatingMode::Float1,
        OperatingMode::Float2,
        OperatingMode::Descent,
        OperatingMode::Shutdown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn next(self) -> Option<OperatingMode> {
        Self::CHAIN.get(self.index() + 1).copied()
    }

    pub fn is_float(self) -> bool {
        matches!(self, OperatingMode::Float1 | OperatingMode::Float2)
    }

    /// Ascent and float phases, where TM is nominal and every RTU is powered.
    pub fn is_nominal(self) -> bool {
        matches!(
            self,
            OperatingMode::Ascent1
                | OperatingMode::Ascent2
                | OperatingMode::Float1
                | OperatingMode::Float2
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperatingMode::PreLaunch => "PreLaunch",
            OperatingMode::Ascent1 => "Ascent1",
            OperatingMode::Ascent2 => "Ascent2",
            OperatingMode::Float1 => "Float1",
            OperatingMode::Float2 => "Float2",
            OperatingMode::Descent => "Descent",
            OperatingMode::Shutdown => "Shutdown",
        }
    }
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::CHAIN
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ControlAuthority {
    Manual,
    #[default]
    Autonomous,
}

impl FromStr for ControlAuthority {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            s if s.eq_ignore_ascii_case("manual") => Ok(ControlAuthority::Manual),
            s if s.eq_ignore_ascii_case("autonomous") => Ok(ControlAuthority::Autonomous),
            _ => Err(format!("unknown authority `{s}`")),
        }
    }
}

/// Inputs the automaton reacts to.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stimulus<'a> {
    pub pressure_mbar: f64,
    /// Positive when pressure is rising.
    pub pressure_rate_mbar_s: f64,
    pub elapsed_in_mode_s: f64,
    pub event: Option<&'a Event>,
    pub tc: Option<&'a Telecommand>,
}

impl<'a> Stimulus<'a> {
    pub fn pressure(pressure_mbar: f64) -> Self {
        Self {
            pressure_mbar,
            ..Self::default()
        }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.pressure_rate_mbar_s = rate;
        self
    }

    pub fn with_elapsed(mut self, s: f64) -> Self {
        self.elapsed_in_mode_s = s;
        self
    }

    pub fn with_event(mut self, ev: &'a Event) -> Self {
        self.event = Some(ev);
        self
    }

    pub fn with_tc(mut self, tc: &'a Telecommand) -> Self {
        self.tc = Some(tc);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Backward {
        from: OperatingMode,
        to: OperatingMode,
    },
    InvalidTarget(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Backward { from, to } => write!(f, "backward transition {from} -> {to}"),
            Rejection::InvalidTarget(s) => write!(f, "invalid target mode: {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub mode: OperatingMode,
    pub rejection: Option<Rejection>,
}

impl Transition {
    fn stay(mode: OperatingMode) -> Self {
        Self {
            mode,
            rejection: None,
        }
    }

    fn to(mode: OperatingMode) -> Self {
        Self::stay(mode)
    }

    fn rejected(mode: OperatingMode, why: Rejection) -> Self {
        Self {
            mode,
            rejection: Some(why),
        }
    }
}

/// Next mission mode for the given stimulus.
///
/// A `SetMode` telecommand takes precedence over environmental triggers and
/// may jump any number of steps forward; backward requests are rejected and
/// leave the mode unchanged. Environmental triggers advance one step along
/// the chain, except the cut-off shortcut from either float mode to descent.
pub fn mode_transition(
    current: OperatingMode,
    stimulus: &Stimulus<'_>,
    cfg: &MissionConfig,
) -> Transition {
    use OperatingMode::*;

    if let Some(tc) = stimulus.tc.filter(|tc| tc.id == TcId::SetMode) {
        let target = match tc.arg_str("mode").map(str::parse::<OperatingMode>) {
            Some(Ok(m)) => m,
            Some(Err(e)) => return Transition::rejected(current, Rejection::InvalidTarget(e)),
            None => {
                return Transition::rejected(
                    current,
                    Rejection::InvalidTarget("missing `mode` argument".into()),
                )
            }
        };
        if target < current {
            return Transition::rejected(
                current,
                Rejection::Backward {
                    from: current,
                    to: target,
                },
            );
        }
        return Transition::to(target);
    }

    let p = stimulus.pressure_mbar;
    let kind = stimulus.event.map(|e| e.kind);
    let next = match current {
        PreLaunch if p < cfg.ascent1_mbar => Ascent1,
        Ascent1 if p < cfg.ascent2_mbar => Ascent2,
        Ascent2 if p <= cfg.float1_mbar || kind == Some(EventKind::FloatDetected) => Float1,
        Float1 | Float2
            if kind == Some(EventKind::CutoffDetected)
                || stimulus.pressure_rate_mbar_s >= cfg.cutoff_rise_rate_mbar_s =>
        {
            Descent
        }
        Float1 if stimulus.elapsed_in_mode_s >= cfg.float2_delta_s => Float2,
        Descent if p >= cfg.ascent1_mbar => Shutdown,
        other => other,
    };
    Transition::stay(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> MissionConfig {
        MissionConfig::default()
    }

    #[test]
    fn ascent2_below_float_threshold_enters_float1() {
        let t = mode_transition(OperatingMode::Ascent2, &Stimulus::pressure(21.4), &cfg());
        assert_eq!(t.mode, OperatingMode::Float1);
        assert!(t.rejection.is_none());
    }

    #[test]
    fn prelaunch_at_ground_pressure_stays() {
        let t = mode_transition(OperatingMode::PreLaunch, &Stimulus::pressure(954.0), &cfg());
        assert_eq!(t.mode, OperatingMode::PreLaunch);
    }

    #[test]
    fn float1_timer_enters_float2() {
        let mut c = cfg();
        c.float2_delta_s = 1200.0;
        let s = Stimulus::pressure(11.0).with_elapsed(1200.0);
        assert_eq!(
            mode_transition(OperatingMode::Float1, &s, &c).mode,
            OperatingMode::Float2
        );
        let s = Stimulus::pressure(11.0).with_elapsed(1199.0);
        assert_eq!(
            mode_transition(OperatingMode::Float1, &s, &c).mode,
            OperatingMode::Float1
        );
    }

    #[test]
    fn cutoff_event_enters_descent_from_float2() {
        let ev = Event::new(EventKind::CutoffDetected, 0);
        let s = Stimulus::pressure(15.0).with_event(&ev);
        assert_eq!(
            mode_transition(OperatingMode::Float2, &s, &cfg()).mode,
            OperatingMode::Descent
        );
        assert_eq!(
            mode_transition(OperatingMode::Float1, &s, &cfg()).mode,
            OperatingMode::Descent
        );
    }

    #[test]
    fn rising_pressure_enters_descent() {
        let s = Stimulus::pressure(15.0).with_rate(0.6);
        assert_eq!(
            mode_transition(OperatingMode::Float1, &s, &cfg()).mode,
            OperatingMode::Descent
        );
    }

    #[test]
    fn descent_back_at_ground_shuts_down() {
        let s = Stimulus::pressure(950.0);
        assert_eq!(
            mode_transition(OperatingMode::Descent, &s, &cfg()).mode,
            OperatingMode::Shutdown
        );
    }

    #[test]
    fn tc_forward_jump_accepted_backward_rejected() {
        let tc = Telecommand::new(TcId::SetMode, 1).with("mode", "Float1");
        let s = Stimulus::pressure(954.0).with_tc(&tc);
        let t = mode_transition(OperatingMode::PreLaunch, &s, &cfg());
        assert_eq!(t.mode, OperatingMode::Float1);
        assert!(t.rejection.is_none());

        let tc = Telecommand::new(TcId::SetMode, 2).with("mode", "Ascent1");
        let s = Stimulus::pressure(954.0).with_tc(&tc);
        let t = mode_transition(OperatingMode::Descent, &s, &cfg());
        assert_eq!(t.mode, OperatingMode::Descent);
        assert!(matches!(t.rejection, Some(Rejection::Backward { .. })));
    }

    #[test]
    fn tc_takes_precedence_over_environment() {
        // pressure alone would move Ascent2 to Float1; the TC asks for the same mode
        let tc = Telecommand::new(TcId::SetMode, 1).with("mode", "Ascent2");
        let s = Stimulus::pressure(10.0).with_tc(&tc);
        assert_eq!(
            mode_transition(OperatingMode::Ascent2, &s, &cfg()).mode,
            OperatingMode::Ascent2
        );
    }

    #[test]
    fn bad_tc_target_rejected() {
        let tc = Telecommand::new(TcId::SetMode, 1).with("mode", "Orbit");
        let s = Stimulus::pressure(10.0).with_tc(&tc);
        let t = mode_transition(OperatingMode::Ascent1, &s, &cfg());
        assert_eq!(t.mode, OperatingMode::Ascent1);
        assert!(matches!(t.rejection, Some(Rejection::InvalidTarget(_))));
    }

    #[test]
    fn shutdown_is_absorbing() {
        let ev = Event::new(EventKind::CutoffDetected, 0);
        let s = Stimulus::pressure(0.0).with_rate(100.0).with_event(&ev);
        assert_eq!(
            mode_transition(OperatingMode::Shutdown, &s, &cfg()).mode,
            OperatingMode::Shutdown
        );
    }

    fn arb_mode() -> impl Strategy<Value = OperatingMode> {
        (0usize..7).prop_map(|i| OperatingMode::CHAIN[i])
    }

    fn arb_event() -> impl Strategy<Value = Option<EventKind>> {
        prop_oneof![
            Just(None),
            (0usize..6).prop_map(|i| Some(EventKind::ALL[i]))
        ]
    }

    proptest! {
        #[test]
        fn total_over_arbitrary_inputs(
            mode in arb_mode(),
            p in prop_oneof![any::<f64>(), 0.0f64..1100.0],
            rate in any::<f64>(),
            elapsed in any::<f64>(),
            ev in arb_event(),
        ) {
            let event = ev.map(|k| Event::new(k, 0));
            let stim = Stimulus {
                pressure_mbar: p,
                pressure_rate_mbar_s: rate,
                elapsed_in_mode_s: elapsed,
                event: event.as_ref(),
                tc: None,
            };
            let t = mode_transition(mode, &stim, &MissionConfig::default());
            prop_assert!(t.mode >= mode);
        }

        #[test]
        fn environment_walks_the_chain(
            steps in proptest::collection::vec(
                (0.0f64..1100.0, -2.0f64..2.0, 0.0f64..30000.0, arb_event()),
                1..200,
            )
        ) {
            let cfg = MissionConfig::default();
            let mut mode = OperatingMode::PreLaunch;
            let mut shortcuts = 0;
            for (p, rate, elapsed, ev) in steps {
                let event = ev.map(|k| Event::new(k, 0));
                let stim = Stimulus {
                    pressure_mbar: p,
                    pressure_rate_mbar_s: rate,
                    elapsed_in_mode_s: elapsed,
                    event: event.as_ref(),
                    tc: None,
                };
                let next = mode_transition(mode, &stim, &cfg).mode;
                if next != mode {
                    let one_step = mode.next() == Some(next);
                    let shortcut = mode == OperatingMode::Float1 && next == OperatingMode::Descent;
                    prop_assert!(one_step || shortcut, "{mode} -> {next}");
                    if shortcut {
                        shortcuts += 1;
                    }
                }
                mode = next;
            }
            prop_assert!(shortcuts <= 1);
        }
    }
}
