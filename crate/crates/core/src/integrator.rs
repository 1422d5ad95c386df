//! Time-domain integration of the combined stochastic system: OU channels
//! advance first, device states integrate with a trapezoidal
//! predictor-corrector, and the algebraic network constraints are re-solved
//! every step. Collapse is detected by the first of eigenvalue sign change,
//! algebraic divergence, or a voltage floor.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::devices::{
    erl, generator::generator_q_update, ltc, ramp, renewable::renewable_power, DeviceSet,
    ErlState, Generator, GeneratorKind, LimitSide, LtcState, RenewableKind,
};
use crate::error::{InputError, NumericsError, SolveError};
use crate::margin::{
    critical_eigenvalue, detect_collapse, CollapseCause, CollapseEvent, EigenSample, StepOutcome,
};
use crate::network::newton::{
    algebraic_jacobian, solve_algebraic, BusKind, InjectionModel, NewtonOptions,
};
use crate::network::{build_admittance, AlgebraicState, Complex64, NetworkCase};
use crate::stochastic::{channel_stream, ou_init, ou_step, OuParams, OuScheme, OuState};

/// What a noise channel perturbs; indices refer to the device vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelTarget {
    ErlLoad(usize),
    Wind(usize),
    Solar(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub params: OuParams,
    pub target: ChannelTarget,
}

/// Integration configuration for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub dt: f64,
    pub scheme: OuScheme,
    pub max_time: f64,
    /// Eigenvalue monitoring cadence in steps; sign changes are localized
    /// inside the window afterwards.
    pub eigen_interval: usize,
    pub voltage_floor: f64,
    pub newton: NewtonOptions,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            scheme: OuScheme::EulerMaruyama,
            max_time: 2000.0,
            eigen_interval: 5,
            voltage_floor: 0.5,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BusDevices {
    erl: Option<usize>,
    static_load: Option<usize>,
    gen: Option<usize>,
    res: Option<usize>,
    ramp: bool,
}

/// Immutable description of one study configuration: case, devices with
/// channel bindings, and integration settings. Shared across trials.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub case: NetworkCase,
    pub devices: DeviceSet,
    pub channels: Vec<ChannelSpec>,
    pub config: StepConfig,
    pub q_limits_enabled: bool,
    pub q_limit_reversible: bool,
    /// Reactive-limit violations must persist this long (s) before the
    /// machine latches; 0 latches on first violation.
    pub q_limit_delay: f64,
    bus_devices: Vec<BusDevices>,
}

impl SimSetup {
    pub fn new(
        case: NetworkCase,
        devices: DeviceSet,
        channels: Vec<ChannelSpec>,
        config: StepConfig,
        q_limits_enabled: bool,
        q_limit_reversible: bool,
    ) -> Self {
        Self::with_q_limit_delay(case, devices, channels, config, q_limits_enabled, q_limit_reversible, 0.0)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_q_limit_delay(
        case: NetworkCase,
        mut devices: DeviceSet,
        channels: Vec<ChannelSpec>,
        config: StepConfig,
        q_limits_enabled: bool,
        q_limit_reversible: bool,
        q_limit_delay: f64,
    ) -> Self {
        // Channel bindings on the devices mirror the channel list.
        for e in &mut devices.erl_loads {
            e.noise_channel = None;
        }
        for r in &mut devices.renewables {
            r.noise_channel = None;
        }
        for (c, spec) in channels.iter().enumerate() {
            match spec.target {
                ChannelTarget::ErlLoad(i) => devices.erl_loads[i].noise_channel = Some(c),
                ChannelTarget::Wind(i) | ChannelTarget::Solar(i) => {
                    devices.renewables[i].noise_channel = Some(c)
                }
            }
        }
        let mut bus_devices = vec![BusDevices::default(); case.n_buses()];
        for (i, e) in devices.erl_loads.iter().enumerate() {
            bus_devices[case.bus_index(e.bus).expect("validated")].erl = Some(i);
        }
        for (i, s) in devices.static_loads.iter().enumerate() {
            bus_devices[case.bus_index(s.bus).expect("validated")].static_load = Some(i);
        }
        for (i, g) in devices.generators.iter().enumerate() {
            bus_devices[case.bus_index(g.bus).expect("validated")].gen = Some(i);
        }
        for (i, r) in devices.renewables.iter().enumerate() {
            bus_devices[case.bus_index(r.bus).expect("validated")].res = Some(i);
        }
        bus_devices[case.bus_index(devices.ramp.bus).expect("validated")].ramp = true;
        Self {
            case,
            devices,
            channels,
            config,
            q_limits_enabled,
            q_limit_reversible,
            q_limit_delay,
            bus_devices,
        }
    }

    /// The sigma = 0 companion: identical system with every noise channel
    /// silenced, so all stochastic outputs sit at their constant medians.
    pub fn deterministic(&self) -> SimSetup {
        let mut out = self.clone();
        for ch in &mut out.channels {
            ch.params.sigma = 0.0;
        }
        out
    }
}

/// Full dynamic state of one trial.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub t: f64,
    pub erl: Vec<ErlState>,
    pub eta: Vec<OuState>,
    pub y: AlgebraicState,
    pub taps: Vec<f64>,
    pub ltc: Vec<LtcState>,
    pub generators: Vec<Generator>,
    /// Per-generator reactive-violation timers (s).
    pub q_violation: Vec<f64>,
    /// Ramp scaling travelled since t = 0; always recomputed from `t`.
    pub z: f64,
    pub floor_events: u64,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    QLimitHit { bus: u32, side: LimitSide },
    QLimitReleased { bus: u32 },
    LtcEngaged { bus: u32 },
    LtcAtLimit { bus: u32 },
}

/// One recorded trajectory sample.
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t: f64,
    pub z: f64,
    pub v: Vec<f64>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Collapse(CollapseEvent),
    NoCollapse { t_end: f64 },
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial_index: u64,
    pub outcome: TrialOutcome,
    pub floor_events: u64,
    pub events: Vec<SimEvent>,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// Hard failures; never produced by a mere collapse.
#[derive(Debug, Clone, Error)]
pub enum TrialFault {
    #[error("initial power flow failed: {0}")]
    InitialSolve(SolveError),
    #[error("non-finite state at t = {t}: {what}")]
    NonFinite { t: f64, what: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Input(#[from] InputError),
}

/// Why an attempted step did not go through.
enum StepFailure {
    /// The algebraic constraints could not be solved: a collapse signal.
    Solve(#[allow(dead_code)] SolveError),
    /// A genuine numerical/input fault that must abort the trial.
    Fault(TrialFault),
}

/// How the ERL consumption enters an algebraic solve: the steady-state
/// characteristic for the initial equilibrium, the instantaneous
/// state-dependent expression everywhere else.
#[derive(Clone, Copy)]
enum ErlMode<'a> {
    Steady,
    Instantaneous(&'a [ErlState]),
}

/// Per-solve view of all device injections; implements the network's
/// injection contract in per-unit on the case base.
struct InjectionView<'a> {
    setup: &'a SimSetup,
    erl_mode: ErlMode<'a>,
    erl_eta: &'a [f64],
    res_pq: &'a [(f64, f64)],
    gens: &'a [Generator],
    t: f64,
}

impl InjectionView<'_> {
    /// Device load draw (MW, MVAr) at the bus for voltage `v`.
    fn load_mw(&self, bus: usize, v: f64) -> (f64, f64) {
        let map = &self.setup.bus_devices[bus];
        let mut p = 0.0;
        let mut q = 0.0;
        if let Some(i) = map.erl {
            let load = &self.setup.devices.erl_loads[i];
            let (lp, lq) = match self.erl_mode {
                ErlMode::Instantaneous(states) => {
                    erl::erl_power(load, &states[i], v, self.erl_eta[i])
                        .expect("solver guards v > 0")
                }
                ErlMode::Steady => {
                    let (pl, ql, _) = erl::noise_levels(load, self.erl_eta[i]);
                    let vr = v / load.v0;
                    (pl * vr.powf(load.alpha_s), ql * vr.powf(load.beta_s))
                }
            };
            p += lp;
            q += lq;
        }
        if let Some(i) = map.static_load {
            let s = &self.setup.devices.static_loads[i];
            p += s.p_mw;
            q += s.q_mvar;
        }
        if map.ramp {
            let (rp, rq) = ramp::ramp_power(&self.setup.devices.ramp, v, self.t);
            p += rp;
            q += rq;
        }
        (p, q)
    }

    fn load_mw_dv(&self, bus: usize, v: f64) -> (f64, f64) {
        let map = &self.setup.bus_devices[bus];
        let mut dp = 0.0;
        let mut dq = 0.0;
        if let Some(i) = map.erl {
            let load = &self.setup.devices.erl_loads[i];
            let (dlp, dlq) = match self.erl_mode {
                ErlMode::Instantaneous(_) => erl::erl_power_dv(load, v, self.erl_eta[i]),
                ErlMode::Steady => {
                    let (pl, ql, _) = erl::noise_levels(load, self.erl_eta[i]);
                    let vr = v / load.v0;
                    (
                        pl * load.alpha_s * vr.powf(load.alpha_s - 1.0) / load.v0,
                        ql * load.beta_s * vr.powf(load.beta_s - 1.0) / load.v0,
                    )
                }
            };
            dp += dlp;
            dq += dlq;
        }
        if map.ramp {
            let (drp, drq) = ramp::ramp_power_dv(&self.setup.devices.ramp, v, self.t);
            dp += drp;
            dq += drq;
        }
        (dp, dq)
    }

    /// Generation-side injection (MW, MVAr): scheduled machine output,
    /// fixed-Q output when limited, and renewables.
    fn source_mw(&self, bus: usize) -> (f64, f64) {
        let map = &self.setup.bus_devices[bus];
        let mut p = 0.0;
        let mut q = 0.0;
        if let Some(i) = map.gen {
            let g = &self.gens[i];
            if g.kind != GeneratorKind::Slack {
                p += g.p_mw;
            }
            if let Some(qf) = g.q_fixed() {
                q += qf;
            }
        }
        if let Some(i) = map.res {
            p += self.res_pq[i].0;
            q += self.res_pq[i].1;
        }
        (p, q)
    }
}

impl InjectionModel for InjectionView<'_> {
    fn injection(&self, bus: usize, v: f64) -> (f64, f64) {
        let (lp, lq) = self.load_mw(bus, v);
        let (sp, sq) = self.source_mw(bus);
        let base = self.setup.case.base_mva;
        ((sp - lp) / base, (sq - lq) / base)
    }

    fn injection_dv(&self, bus: usize, v: f64) -> (f64, f64) {
        let (dlp, dlq) = self.load_mw_dv(bus, v);
        let base = self.setup.case.base_mva;
        (-dlp / base, -dlq / base)
    }
}

/// Window entry for sign-change localization.
struct JacSnapshot {
    t: f64,
    jac: DMatrix<f64>,
}

/// One trial's integrator: owns the state, the admittance matrix, and the
/// collapse monitor.
pub struct Simulator<'a> {
    setup: &'a SimSetup,
    pub state: SystemState,
    ybus: DMatrix<Complex64>,
    window: VecDeque<JacSnapshot>,
    last_sample: Option<EigenSample>,
    steps_since_sample: usize,
    trace: VecDeque<EigenSample>,
    record_trajectory: bool,
    trajectory: Vec<TrajectoryRow>,
}

const TRACE_LEN: usize = 32;

impl<'a> Simulator<'a> {
    /// Builds the initial condition: stationary channel draws, an initial
    /// power flow with steady-state load characteristics, and device states
    /// in equilibrium at the solved voltages.
    pub fn new(
        setup: &'a SimSetup,
        base_seed: u64,
        trial_index: u64,
        record_trajectory: bool,
    ) -> Result<Self, TrialFault> {
        let eta: Vec<OuState> = setup
            .channels
            .iter()
            .enumerate()
            .map(|(c, spec)| {
                ou_init(
                    &spec.params,
                    channel_stream(base_seed, trial_index, c as u64),
                )
            })
            .collect();
        let mut generators = setup.devices.generators.clone();
        for g in &mut generators {
            g.limited = None;
        }
        let taps: Vec<f64> = setup.case.branches.iter().map(|b| b.tap).collect();
        let ybus = build_admittance(&setup.case, &taps);

        let erl_eta = erl_eta_values(setup, &eta);
        let res_pq = renewable_injections(setup, &eta).map_err(fault_of)?;
        let kinds = bus_kinds(setup, &generators);
        let guess = AlgebraicState::flat(&setup.case);
        let view = InjectionView {
            setup,
            erl_mode: ErlMode::Steady,
            erl_eta: &erl_eta,
            res_pq: &res_pq,
            gens: &generators,
            t: 0.0,
        };
        let mut y = solve_algebraic(&ybus, &view, &kinds, &guess, setup.config.newton)
            .map_err(TrialFault::InitialSolve)?;
        // Reactive limits may bind already at the base point.
        let mut events = Vec::new();
        let mut q_violation = vec![0.0; generators.len()];
        apply_q_limits(
            setup,
            &ybus,
            &mut y,
            &mut generators,
            &mut q_violation,
            0.0,
            ErlMode::Steady,
            &erl_eta,
            &res_pq,
            0.0,
            &mut events,
        )
        .map_err(TrialFault::InitialSolve)?;

        let erl_states: Vec<ErlState> = setup
            .devices
            .erl_loads
            .iter()
            .enumerate()
            .map(|(i, load)| {
                let bus = setup.case.bus_index(load.bus).expect("validated");
                erl::erl_equilibrium_state(load, y.v[bus], erl_eta[i])
            })
            .collect();
        let ltc_states: Vec<LtcState> = setup
            .devices
            .ltcs
            .iter()
            .map(|l| LtcState::new(taps[l.branch]))
            .collect();

        let state = SystemState {
            t: 0.0,
            erl: erl_states,
            eta,
            y,
            taps,
            ltc: ltc_states,
            generators,
            q_violation,
            z: 0.0,
            floor_events: 0,
            events,
        };
        let mut sim = Self {
            setup,
            state,
            ybus,
            window: VecDeque::new(),
            last_sample: None,
            steps_since_sample: 0,
            trace: VecDeque::new(),
            record_trajectory,
            trajectory: Vec::new(),
        };
        let jac = sim.current_jacobian().map_err(fault_of)?;
        let lam = critical_eigenvalue(&jac)?;
        sim.push_sample(EigenSample { t: 0.0, value: lam });
        sim.window.push_back(JacSnapshot { t: 0.0, jac });
        if record_trajectory {
            sim.record_row();
        }
        Ok(sim)
    }

    fn push_sample(&mut self, s: EigenSample) {
        self.last_sample = Some(s);
        if self.trace.len() == TRACE_LEN {
            self.trace.pop_front();
        }
        self.trace.push_back(s);
    }

    fn record_row(&mut self) {
        self.trajectory.push(TrajectoryRow {
            t: self.state.t,
            z: self.state.z,
            v: self.state.y.v.clone(),
            eta: self.state.eta.iter().map(|e| e.value).collect(),
        });
    }

    fn current_jacobian(&self) -> Result<DMatrix<f64>, InputError> {
        let erl_eta = erl_eta_values(self.setup, &self.state.eta);
        let res_pq = renewable_injections(self.setup, &self.state.eta)?;
        let view = InjectionView {
            setup: self.setup,
            erl_mode: ErlMode::Instantaneous(&self.state.erl),
            erl_eta: &erl_eta,
            res_pq: &res_pq,
            gens: &self.state.generators,
            t: self.state.t,
        };
        let kinds = bus_kinds(self.setup, &self.state.generators);
        Ok(algebraic_jacobian(&self.ybus, &view, &kinds, &self.state.y))
    }

    /// Attempts one step of size `dt`. On failure the state is untouched,
    /// so the caller can retry with a smaller step.
    fn advance(&mut self, dt: f64) -> Result<(), StepFailure> {
        let setup = self.setup;
        let mut work = self.state.clone();
        let t_next = work.t + dt;

        // (1) Noise channels advance once; the draw is frozen across the
        // predictor and corrector halves of the step.
        for (ou, spec) in work.eta.iter_mut().zip(&setup.channels) {
            ou_step(ou, &spec.params, dt, setup.config.scheme);
        }
        let erl_eta = erl_eta_values(setup, &work.eta);
        // (2) Channels map to renewable injections for this step.
        let res_pq = renewable_injections(setup, &work.eta)
            .map_err(|e| StepFailure::Fault(fault_of(e)))?;
        for (i, load) in setup.devices.erl_loads.iter().enumerate() {
            let (.., floored) = erl::noise_levels(load, erl_eta[i]);
            if floored {
                work.floor_events += 1;
            }
        }

        // (3) The ramp scaling advances implicitly with t_next below.
        let kinds = bus_kinds(setup, &work.generators);

        // (4) Trapezoidal predictor-corrector on the recovery-load states.
        let deriv_start = erl_derivative_vec(setup, &work.erl, &work.y, &erl_eta)
            .map_err(|e| StepFailure::Fault(fault_of(e)))?;
        let predicted: Vec<ErlState> = work
            .erl
            .iter()
            .zip(&deriv_start)
            .map(|(s, d)| ErlState {
                x_p: s.x_p + dt * d.0,
                x_q: s.x_q + dt * d.1,
            })
            .collect();
        let y_pred = {
            let view = InjectionView {
                setup,
                erl_mode: ErlMode::Instantaneous(&predicted),
                erl_eta: &erl_eta,
                res_pq: &res_pq,
                gens: &work.generators,
                t: t_next,
            };
            solve_algebraic(&self.ybus, &view, &kinds, &work.y, setup.config.newton)
                .map_err(StepFailure::Solve)?
        };
        let deriv_end = erl_derivative_vec(setup, &predicted, &y_pred, &erl_eta)
            .map_err(|e| StepFailure::Fault(fault_of(e)))?;
        let corrected: Vec<ErlState> = work
            .erl
            .iter()
            .zip(deriv_start.iter().zip(&deriv_end))
            .map(|(s, (d0, d1))| ErlState {
                x_p: s.x_p + 0.5 * dt * (d0.0 + d1.0),
                x_q: s.x_q + 0.5 * dt * (d0.1 + d1.1),
            })
            .collect();

        // (5) Re-solve the algebraic constraints at the corrected state,
        // then enforce reactive limits.
        let mut y_next = {
            let view = InjectionView {
                setup,
                erl_mode: ErlMode::Instantaneous(&corrected),
                erl_eta: &erl_eta,
                res_pq: &res_pq,
                gens: &work.generators,
                t: t_next,
            };
            solve_algebraic(&self.ybus, &view, &kinds, &work.y, setup.config.newton)
                .map_err(StepFailure::Solve)?
        };
        work.erl = corrected;
        let mut gens = work.generators.clone();
        let mut timers = work.q_violation.clone();
        let mut events = Vec::new();
        apply_q_limits(
            setup,
            &self.ybus,
            &mut y_next,
            &mut gens,
            &mut timers,
            dt,
            ErlMode::Instantaneous(&work.erl),
            &erl_eta,
            &res_pq,
            t_next,
            &mut events,
        )
        .map_err(StepFailure::Solve)?;
        work.generators = gens;
        work.q_violation = timers;

        // (6) LTC timers and taps advance on the solved voltages.
        let mut taps_changed = false;
        for (i, l) in setup.devices.ltcs.iter().enumerate() {
            let bus = setup.case.bus_index(l.controlled_bus).expect("validated");
            let prev = work.ltc[i];
            let next = ltc::ltc_step(l, &prev, y_next.v[bus], dt);
            if next.tap != prev.tap {
                work.taps[l.branch] = next.tap;
                taps_changed = true;
                if !prev.has_acted && next.has_acted {
                    events.push(SimEvent {
                        t: t_next,
                        kind: EventKind::LtcEngaged {
                            bus: l.controlled_bus,
                        },
                    });
                }
                if next.tap == l.tap_min || next.tap == l.tap_max {
                    events.push(SimEvent {
                        t: t_next,
                        kind: EventKind::LtcAtLimit {
                            bus: l.controlled_bus,
                        },
                    });
                }
            }
            work.ltc[i] = next;
        }

        work.y = y_next;
        work.t = t_next;
        work.z = setup.devices.ramp.scale_at(t_next) - setup.devices.ramp.z0;
        work.events.extend(events);
        if taps_changed {
            self.ybus = build_admittance(&setup.case, &work.taps);
        }
        self.state = work;
        Ok(())
    }

    /// Runs one nominal step (with the quarter-step retry on divergence)
    /// and the collapse checks. `Ok(Some(event))` ends the trial.
    pub fn step(&mut self) -> Result<Option<CollapseEvent>, TrialFault> {
        let dt = self.setup.config.dt;
        let t_prev = self.state.t;
        let outcome = match self.advance(dt) {
            Ok(()) => StepOutcome::Converged {
                t_prev,
                t_new: self.state.t,
            },
            Err(StepFailure::Fault(f)) => return Err(f),
            Err(StepFailure::Solve(_)) => {
                // Distinguish a genuine nose-point failure from a Newton
                // hiccup near device events: one retry at a quarter step.
                match self.advance(dt / 4.0) {
                    Ok(()) => StepOutcome::Converged {
                        t_prev,
                        t_new: self.state.t,
                    },
                    Err(StepFailure::Fault(f)) => return Err(f),
                    Err(StepFailure::Solve(_)) => StepOutcome::DivergedAfterRetry {
                        t_prev,
                        t_new: t_prev + dt / 4.0,
                    },
                }
            }
        };

        if let StepOutcome::DivergedAfterRetry { .. } = outcome {
            let history: Vec<EigenSample> = self.last_sample.into_iter().collect();
            let (cause, t_collapse) = detect_collapse(
                &history,
                outcome,
                &self.state.y.v,
                self.setup.config.voltage_floor,
            )
            .expect("divergence always yields an event");
            return Ok(Some(self.make_event(t_collapse, cause)));
        }

        // Accepted step: sanity checks, trajectory, monitoring.
        for s in &self.state.erl {
            if !s.x_p.is_finite() || !s.x_q.is_finite() {
                return Err(TrialFault::NonFinite {
                    t: self.state.t,
                    what: "recovery-load state".into(),
                });
            }
        }
        for e in &self.state.eta {
            if !e.value.is_finite() {
                return Err(TrialFault::NonFinite {
                    t: self.state.t,
                    what: "noise channel".into(),
                });
            }
        }
        if self.record_trajectory {
            self.record_row();
        }

        let jac = self.current_jacobian().map_err(fault_of)?;
        while self.window.len() > self.setup.config.eigen_interval {
            self.window.pop_front();
        }
        self.window.push_back(JacSnapshot {
            t: self.state.t,
            jac,
        });
        self.steps_since_sample += 1;

        let mut history: Vec<EigenSample> = self.last_sample.into_iter().collect();
        if self.steps_since_sample >= self.setup.config.eigen_interval {
            self.steps_since_sample = 0;
            let now = EigenSample {
                t: self.state.t,
                value: critical_eigenvalue(&self.window.back().unwrap().jac)?,
            };
            if let Some(prev) = self.last_sample {
                if (prev.value > 0.0) != (now.value > 0.0) {
                    let (lo, hi) = self.localize_crossing(prev, now)?;
                    history = vec![lo, hi];
                } else {
                    history = vec![prev, now];
                }
            }
            self.push_sample(now);
        }

        let detection = detect_collapse(
            &history,
            outcome,
            &self.state.y.v,
            self.setup.config.voltage_floor,
        );
        Ok(detection.map(|(cause, t)| self.make_event(t, cause)))
    }

    /// Bisects the stored per-step Jacobians between two samples of
    /// opposite sign, returning the adjacent pair that brackets the change.
    fn localize_crossing(
        &self,
        prev: EigenSample,
        now: EigenSample,
    ) -> Result<(EigenSample, EigenSample), TrialFault> {
        let snaps: Vec<&JacSnapshot> = self
            .window
            .iter()
            .filter(|s| s.t > prev.t && s.t < now.t)
            .collect();
        let mut lo = prev;
        let mut hi = now;
        let mut lo_idx: isize = -1;
        let mut hi_idx: isize = snaps.len() as isize;
        while hi_idx - lo_idx > 1 {
            let mid_idx = (lo_idx + hi_idx) / 2;
            let snap = snaps[mid_idx as usize];
            let lam = critical_eigenvalue(&snap.jac)?;
            let sample = EigenSample {
                t: snap.t,
                value: lam,
            };
            if (lam > 0.0) == (lo.value > 0.0) {
                lo = sample;
                lo_idx = mid_idx;
            } else {
                hi = sample;
                hi_idx = mid_idx;
            }
        }
        Ok((lo, hi))
    }

    fn make_event(&self, t_collapse: f64, cause: CollapseCause) -> CollapseEvent {
        CollapseEvent::new(
            t_collapse,
            cause,
            self.setup.devices.ramp.rate,
            self.setup.devices.ramp.p0,
            self.trace.iter().copied().collect(),
        )
    }

    /// Integrates until collapse or the configured maximum time.
    pub fn run(mut self, trial_index: u64) -> Result<TrialResult, TrialFault> {
        let max_time = self.setup.config.max_time;
        let outcome = loop {
            if self.state.t >= max_time {
                break TrialOutcome::NoCollapse { t_end: self.state.t };
            }
            if let Some(event) = self.step()? {
                break TrialOutcome::Collapse(event);
            }
        };
        Ok(TrialResult {
            trial_index,
            outcome,
            floor_events: self.state.floor_events,
            events: self.state.events,
            trajectory: if self.record_trajectory {
                Some(self.trajectory)
            } else {
                None
            },
        })
    }
}

/// Injection model at a frozen trial state, for driving the algebraic
/// operations from outside the stepping loop (validation, Jacobian
/// checks). Evaluates exactly the expressions the integrator uses.
pub struct StateInjections<'a> {
    setup: &'a SimSetup,
    state: &'a SystemState,
    erl_eta: Vec<f64>,
    res_pq: Vec<(f64, f64)>,
}

impl InjectionModel for StateInjections<'_> {
    fn injection(&self, bus: usize, v: f64) -> (f64, f64) {
        let view = InjectionView {
            setup: self.setup,
            erl_mode: ErlMode::Instantaneous(&self.state.erl),
            erl_eta: &self.erl_eta,
            res_pq: &self.res_pq,
            gens: &self.state.generators,
            t: self.state.t,
        };
        view.injection(bus, v)
    }
    fn injection_dv(&self, bus: usize, v: f64) -> (f64, f64) {
        let view = InjectionView {
            setup: self.setup,
            erl_mode: ErlMode::Instantaneous(&self.state.erl),
            erl_eta: &self.erl_eta,
            res_pq: &self.res_pq,
            gens: &self.state.generators,
            t: self.state.t,
        };
        view.injection_dv(bus, v)
    }
}

impl SimSetup {
    /// The injection model the integrator would use at `state`.
    pub fn injections<'a>(&'a self, state: &'a SystemState) -> StateInjections<'a> {
        StateInjections {
            setup: self,
            state,
            erl_eta: erl_eta_values(self, &state.eta),
            res_pq: renewable_injections(self, &state.eta)
                .expect("state was produced by a successful solve"),
        }
    }

    /// Solver bus kinds for the given generator states.
    pub fn solver_bus_kinds(&self, gens: &[Generator]) -> Vec<BusKind> {
        bus_kinds(self, gens)
    }
}

/// Convenience wrapper: build and run one trial.
pub fn run_trial(
    setup: &SimSetup,
    base_seed: u64,
    trial_index: u64,
    record_trajectory: bool,
) -> Result<TrialResult, TrialFault> {
    Simulator::new(setup, base_seed, trial_index, record_trajectory)?.run(trial_index)
}

fn fault_of(e: InputError) -> TrialFault {
    TrialFault::Input(e)
}

fn erl_eta_values(setup: &SimSetup, eta: &[OuState]) -> Vec<f64> {
    setup
        .devices
        .erl_loads
        .iter()
        .map(|l| l.noise_channel.map(|c| eta[c].value).unwrap_or(0.0))
        .collect()
}

/// Wind speed / irradiance for every renewable, transformed from its
/// channel (or the process median when the channel is off), then mapped
/// through the power curves.
fn renewable_injections(setup: &SimSetup, eta: &[OuState]) -> Result<Vec<(f64, f64)>, InputError> {
    setup
        .devices
        .renewables
        .iter()
        .map(|inj| {
            let eta_value = inj.noise_channel.map(|c| eta[c].value).unwrap_or(0.0);
            let value = match &inj.kind {
                RenewableKind::Wind { weibull, .. } => {
                    let ou = process_ou(setup, inj.noise_channel, weibull.alpha_w);
                    crate::stochastic::transform::weibull_transform(eta_value, weibull, &ou)
                }
                RenewableKind::Solar {
                    beta,
                    irradiance_max,
                    ..
                } => {
                    let ou = process_ou(setup, inj.noise_channel, beta.alpha_s);
                    let fraction =
                        crate::stochastic::transform::beta_transform(eta_value, beta, &ou)
                            .expect("inverse beta CDF converges on tail-clamped input");
                    fraction * irradiance_max
                }
            };
            renewable_power(inj, value)
        })
        .collect()
}

fn process_ou(setup: &SimSetup, channel: Option<usize>, alpha: f64) -> OuParams {
    match channel {
        Some(c) => setup.channels[c].params,
        // Channel off: any unit-strength parameterization gives the median.
        None => OuParams::new(alpha, (2.0 * alpha).sqrt(), 0.0),
    }
}

fn erl_derivative_vec(
    setup: &SimSetup,
    states: &[ErlState],
    y: &AlgebraicState,
    erl_eta: &[f64],
) -> Result<Vec<(f64, f64)>, InputError> {
    setup
        .devices
        .erl_loads
        .iter()
        .enumerate()
        .map(|(i, load)| {
            let bus = setup.case.bus_index(load.bus).expect("validated");
            erl::erl_derivatives(load, &states[i], y.v[bus], erl_eta[i])
        })
        .collect()
}

fn bus_kinds(setup: &SimSetup, gens: &[Generator]) -> Vec<BusKind> {
    let mut kinds = vec![BusKind::Pq; setup.case.n_buses()];
    for g in gens {
        let i = setup.case.bus_index(g.bus).expect("validated");
        kinds[i] = match g.kind {
            GeneratorKind::Slack => BusKind::Slack { v_set: g.v_set },
            GeneratorKind::PvWithQlimit => {
                if g.is_limited() {
                    BusKind::Pq
                } else {
                    BusKind::Pv { v_set: g.v_set }
                }
            }
        };
    }
    kinds
}

/// PV -> PQ switching: solve, check reactive requirements, and pin
/// machines whose violation has persisted past the enforcement delay at
/// their limits, re-solving until no machine switches.
#[allow(clippy::too_many_arguments)]
fn apply_q_limits(
    setup: &SimSetup,
    ybus: &DMatrix<Complex64>,
    y: &mut AlgebraicState,
    gens: &mut Vec<Generator>,
    timers: &mut [f64],
    dt: f64,
    erl_mode: ErlMode<'_>,
    erl_eta: &[f64],
    res_pq: &[(f64, f64)],
    t: f64,
    events: &mut Vec<SimEvent>,
) -> Result<(), SolveError> {
    if !setup.q_limits_enabled {
        return Ok(());
    }
    // Timers accrue once per step, against the first converged solution.
    {
        let view = InjectionView {
            setup,
            erl_mode,
            erl_eta,
            res_pq,
            gens,
            t,
        };
        let (_, q_calc) = crate::network::calc_injections(ybus, y);
        for (i, g) in gens.iter().enumerate() {
            if g.kind == GeneratorKind::Slack || g.is_limited() {
                continue;
            }
            let q_required = required_q(setup, &view, &q_calc, y, g);
            if q_required > g.q_max || q_required < g.q_min {
                timers[i] += dt;
            } else {
                // Decay rather than reset: enforcement integrates the
                // violation history, so band-edge chatter cannot stall it.
                timers[i] = (timers[i] - dt).max(0.0);
            }
        }
    }
    for _pass in 0..gens.len() + 2 {
        let (_, q_calc) = crate::network::calc_injections(ybus, y);
        let mut updates: Vec<(usize, Generator)> = Vec::new();
        {
            let view = InjectionView {
                setup,
                erl_mode,
                erl_eta,
                res_pq,
                gens,
                t,
            };
            for (i, g) in gens.iter().enumerate() {
                if g.kind == GeneratorKind::Slack {
                    continue;
                }
                let bus = setup.case.bus_index(g.bus).expect("validated");
                let q_required = required_q(setup, &view, &q_calc, y, g);
                if !g.is_limited() && timers[i] < setup.q_limit_delay {
                    continue;
                }
                let updated =
                    generator_q_update(g, q_required, y.v[bus], setup.q_limit_reversible);
                if updated.limited != g.limited {
                    updates.push((i, updated));
                }
            }
        }
        if updates.is_empty() {
            return Ok(());
        }
        for (i, updated) in updates {
            let kind = if updated.is_limited() {
                EventKind::QLimitHit {
                    bus: updated.bus,
                    side: updated.limited.unwrap(),
                }
            } else {
                timers[i] = 0.0;
                EventKind::QLimitReleased { bus: updated.bus }
            };
            events.push(SimEvent { t, kind });
            gens[i] = updated;
        }
        let kinds = bus_kinds(setup, gens);
        let view = InjectionView {
            setup,
            erl_mode,
            erl_eta,
            res_pq,
            gens,
            t,
        };
        *y = solve_algebraic(ybus, &view, &kinds, y, setup.config.newton)?;
    }
    Ok(())
}

/// Reactive output the solved network requires from a machine (MVAr):
/// net bus injection plus local load draw minus any renewable injection.
fn required_q(
    setup: &SimSetup,
    view: &InjectionView<'_>,
    q_calc: &[f64],
    y: &AlgebraicState,
    g: &Generator,
) -> f64 {
    let bus = setup.case.bus_index(g.bus).expect("validated");
    let v = y.v[bus];
    let (_, q_load) = view.load_mw(bus, v);
    let q_res = setup.bus_devices[bus]
        .res
        .map(|r| view.res_pq[r].1)
        .unwrap_or(0.0);
    q_calc[bus] * setup.case.base_mva + q_load - q_res
}
