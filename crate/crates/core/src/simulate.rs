//! Fixed-step RK4 flows with event localization, stochastic jumps and arcs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid::{FlowSegment, HybridArc, HybridTime, JumpRecord, ParamBox, SpSystem, StateVector, Termination};
use crate::scalar::Real;
use crate::stochastic::{RandomStream, LANE_JUMP, LANE_SELECT};

/// Resolution of points in `C ∩ D`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdPolicy {
    JumpPriority,
    FlowPriority,
}

/// Which element of a set-valued flow map is integrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum FlowSelection {
    Lower,
    Upper,
    Midpoint,
    Fixed { s: Vec<f64> },
    /// Constant over a trial, uniform in the parameter box.
    RandomPerTrial,
}

/// Which element of a set-valued jump map is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum JumpSelection {
    Lower,
    /// Upper corner of the parameter box, the worst case for reset factors.
    Upper,
    Midpoint,
    Fixed { s: Vec<f64> },
    UniformPerJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step_h: f64,
    pub horizon_t: f64,
    pub horizon_j: usize,
    pub cd_policy: CdPolicy,
    pub flow_selection: FlowSelection,
    pub jump_selection: JumpSelection,
    pub event_tol: f64,
}

/// Default bisection tolerance for event localization.
pub const EVENT_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;
/// Draw index reserved for the per-trial flow selection on the selection lane.
const FLOW_SELECT_DRAW: u64 = u64::MAX;

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            step_h: 1e-3,
            horizon_t: 10.0,
            horizon_j: 1000,
            cd_policy: CdPolicy::JumpPriority,
            flow_selection: FlowSelection::Midpoint,
            jump_selection: JumpSelection::Midpoint,
            event_tol: EVENT_TOL,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("step_h", self.step_h)?;
        pos("horizon_t", self.horizon_t)?;
        pos("event_tol", self.event_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowExit {
    EnteredD,
    LeftC,
    Horizon,
    /// The caller's stop predicate held at the last sample.
    Stopped,
}

/// Predicate on `(t, j, y)` that ends an arc early.
pub type StopFn<'a, T> = &'a (dyn Fn(T, usize, &StateVector<T>) -> bool + Sync);

/// Parameters of the flow selections used for a whole trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSelections<T> {
    pub sx: Vec<T>,
    pub sz: Vec<T>,
}

fn pick<T: Real>(params: &ParamBox<T>, fixed: Option<&[f64]>, corner: Option<f64>, u: impl Fn(u64) -> f64) -> Result<Vec<T>> {
    if let Some(s) = fixed {
        if s.len() != params.dim() {
            return Err(Error::Config(format!("fixed selection has {} entries, parameter box has {}", s.len(), params.dim())));
        }
        return Ok(s.iter().map(|&a| T::lit(a)).collect());
    }
    let fr: Vec<f64> = match corner {
        Some(c) => vec![c; params.dim()],
        None => (0..params.dim() as u64).map(u).collect(),
    };
    Ok(params.at(&fr))
}

/// Resolves the flow selection policy. `Fixed` values apply to the slow map
/// first and then to the fast map.
pub fn resolve_flow_selection<T: Real>(system: &SpSystem<T>, config: &SimConfig, stream: &RandomStream) -> Result<FlowSelections<T>> {
    let px = &system.flow_x.params;
    let pz = &system.flow_z.params;
    let draw = stream.lane(LANE_SELECT).at_counter(FLOW_SELECT_DRAW);
    let (fx, fz, corner) = match &config.flow_selection {
        FlowSelection::Lower => (None, None, Some(0.0)),
        FlowSelection::Upper => (None, None, Some(1.0)),
        FlowSelection::Midpoint => (None, None, Some(0.5)),
        FlowSelection::RandomPerTrial => (None, None, None),
        FlowSelection::Fixed { s } => {
            if s.len() != px.dim() + pz.dim() {
                return Err(Error::Config(format!(
                    "fixed flow selection has {} entries, expected {}",
                    s.len(),
                    px.dim() + pz.dim()
                )));
            }
            let (a, b) = s.split_at(px.dim());
            (Some(a), Some(b), None)
        }
    };
    let nx = px.dim() as u64;
    Ok(FlowSelections {
        sx: pick(px, fx, corner, |k| draw.uniform_at(k))?,
        sz: pick(pz, fz, corner, |k| draw.uniform_at(nx + k))?,
    })
}

fn rk4<T: Real>(system: &SpSystem<T>, y: &StateVector<T>, h: T, sel: &FlowSelections<T>) -> StateVector<T> {
    let n_x = system.n_x;
    let f = |v: &[T]| system.field(&StateVector::split(v, n_x), &sel.sx, &sel.sz).concat();
    let y0 = y.concat();
    let axpy = |a: T, d: &[T]| -> Vec<T> { y0.iter().zip(d).map(|(&p, &q)| p + a * q).collect() };
    let half = T::lit(0.5) * h;
    let k1 = f(&y0);
    let k2 = f(&axpy(half, &k1));
    let k3 = f(&axpy(half, &k2));
    let k4 = f(&axpy(h, &k3));
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    let out: Vec<T> = (0..y0.len()).map(|i| y0[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).collect();
    StateVector::split(&out, n_x)
}

fn sign_changed<T: Real>(a: T, b: T) -> bool {
    (a > T::zero() && b <= T::zero()) || (a < T::zero() && b >= T::zero())
}

/// Bisects the step fraction for the first point with `D`-membership below
/// `tol`. Returns `None` when the sign change was not an entry into `D`.
fn localize_jump<T: Real>(
    system: &SpSystem<T>,
    y: &StateVector<T>,
    h: T,
    sel: &FlowSelections<T>,
    tol: T,
) -> Option<(T, StateVector<T>)> {
    let d = &system.jump_set;
    let e0 = d.event(y);
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..MAX_BISECTIONS {
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let ym = rk4(system, y, mid * h, sel);
        if d.membership(&ym) <= tol {
            return Some((mid, ym));
        }
        let em = d.event(&ym);
        if em != T::zero() && !sign_changed(e0, em) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let yh = rk4(system, y, hi * h, sel);
    if d.contains(&yh) {
        Some((hi, yh))
    } else {
        None
    }
}

/// Last point inside `C` before the step leaves it.
fn localize_exit<T: Real>(system: &SpSystem<T>, y: &StateVector<T>, h: T, sel: &FlowSelections<T>, tol: T) -> (T, StateVector<T>) {
    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut y_lo = y.clone();
    for _ in 0..MAX_BISECTIONS {
        let mid = T::lit(0.5) * (lo + hi);
        if (hi - lo) * h <= tol * T::lit(1e-3) || mid <= lo || mid >= hi {
            break;
        }
        let ym = rk4(system, y, mid * h, sel);
        if system.in_flow_set(&ym) {
            lo = mid;
            y_lo = ym;
        } else {
            hi = mid;
        }
    }
    (lo, y_lo)
}

fn not_in_set<T: Real>(set: &'static str, y: &StateVector<T>) -> Error {
    Error::NotInSet { set: set.into(), state: y.to_f64() }
}

/// Flow from `y0` starting at hybrid time `start` with fixed selections.
pub fn integrate_flow_from<T: Real>(
    system: &SpSystem<T>,
    start: HybridTime<T>,
    y0: &StateVector<T>,
    sel: &FlowSelections<T>,
    config: &SimConfig,
) -> Result<(FlowSegment<T>, FlowExit)> {
    integrate_flow_until(system, start, y0, sel, config, None)
}

fn integrate_flow_until<T: Real>(
    system: &SpSystem<T>,
    start: HybridTime<T>,
    y0: &StateVector<T>,
    sel: &FlowSelections<T>,
    config: &SimConfig,
    stop: Option<StopFn<'_, T>>,
) -> Result<(FlowSegment<T>, FlowExit)> {
    config.validate()?;
    if !system.in_flow_set(y0) {
        return Err(not_in_set("C", y0));
    }
    let jump_priority = config.cd_policy == CdPolicy::JumpPriority;
    let mut samples = vec![(start.t, y0.clone())];
    let done = |samples, exit| Ok((FlowSegment { start, samples }, exit));
    if jump_priority && system.in_jump_set(y0) {
        return done(samples, FlowExit::EnteredD);
    }
    let h = T::lit(config.step_h);
    let horizon = T::lit(config.horizon_t);
    let tol = T::lit(config.event_tol);
    let mut t = start.t;
    let mut y = y0.clone();
    loop {
        let remaining = horizon - t;
        if remaining <= h * T::lit(1e-9) {
            return done(samples, FlowExit::Horizon);
        }
        let step = h.min(remaining);
        let y1 = rk4(system, &y, step, sel);
        if !y1.is_finite() {
            return Err(Error::NonFinite { t: t.as_f64(), last: y.to_f64() });
        }
        let mut event: Option<(T, StateVector<T>, FlowExit)> = None;
        if jump_priority {
            let entered = sign_changed(system.jump_set.event(&y), system.jump_set.event(&y1)) || system.in_jump_set(&y1);
            if entered {
                if let Some((f, ye)) = localize_jump(system, &y, step, sel, tol) {
                    event = Some((f, ye, FlowExit::EnteredD));
                }
            }
        }
        if !system.in_flow_set(&y1) {
            let (f, ye) = localize_exit(system, &y, step, sel, tol);
            if event.as_ref().map_or(true, |(fd, _, _)| f < *fd) {
                event = Some((f, ye, FlowExit::LeftC));
            }
        }
        match event {
            Some((f, ye, exit)) => {
                let te = t + f * step;
                if te > t {
                    samples.push((te, ye));
                } else if samples.len() > 1 {
                    samples.last_mut().expect("nonempty").1 = ye;
                }
                return done(samples, exit);
            }
            None => {
                t = if step == remaining { horizon } else { t + step };
                y = y1;
                samples.push((t, y.clone()));
                if stop.is_some_and(|f| f(t, start.j, &y)) {
                    return done(samples, FlowExit::Stopped);
                }
            }
        }
    }
}

/// Flow from `y0` at hybrid time `(0, 0)`. A per-trial random selection uses
/// the stream of trial 0 of seed 0.
pub fn integrate_flow<T: Real>(system: &SpSystem<T>, y0: &StateVector<T>, config: &SimConfig) -> Result<(FlowSegment<T>, FlowExit)> {
    let sel = resolve_flow_selection(system, config, &RandomStream::new(0, 0))?;
    integrate_flow_from(system, HybridTime::origin(), y0, &sel, config)
}

/// Draws `v ~ μ` from `stream` (one logical draw) and applies the jump
/// selection policy. Random selections read the selection lane at the same
/// draw index, so the jump lane advances by exactly one per jump.
pub fn execute_jump<T: Real>(
    system: &SpSystem<T>,
    y: &StateVector<T>,
    stream: &mut RandomStream,
    config: &SimConfig,
) -> Result<(Vec<T>, StateVector<T>)> {
    if !system.in_jump_set(y) {
        return Err(not_in_set("D", y));
    }
    let select = stream.lane(LANE_SELECT).at_counter(stream.draw_counter());
    let v: Vec<T> = system.measure.sample(stream).into_iter().map(T::lit).collect();
    let params = &system.jump.params;
    let s = match &config.jump_selection {
        JumpSelection::Lower => pick(params, None, Some(0.0), |_| 0.0)?,
        JumpSelection::Upper => pick(params, None, Some(1.0), |_| 0.0)?,
        JumpSelection::Midpoint => pick(params, None, Some(0.5), |_| 0.0)?,
        JumpSelection::Fixed { s } => pick(params, Some(s), None, |_| 0.0)?,
        JumpSelection::UniformPerJump => pick(params, None, None, |k| select.uniform_at(k))?,
    };
    let y_plus = system.jump.eval(&y.x, &y.z, &v, &s);
    if y_plus.x.len() != system.n_x || y_plus.z.len() != system.n_z {
        return Err(Error::Dimension(format!(
            "jump map returned ({}, {}) components, expected ({}, {})",
            y_plus.x.len(),
            y_plus.z.len(),
            system.n_x,
            system.n_z
        )));
    }
    if !y_plus.is_finite() {
        return Err(Error::NonFinite { t: f64::NAN, last: y.to_f64() });
    }
    Ok((v, y_plus))
}

/// Alternates flows and jumps from `y0` until a horizon is reached or the
/// solution leaves `C ∪ D`. Pure in its arguments.
pub fn simulate_arc<T: Real>(system: &SpSystem<T>, y0: &StateVector<T>, stream: &RandomStream, config: &SimConfig) -> Result<HybridArc<T>> {
    simulate_arc_until(system, y0, stream, config, None)
}

/// [`simulate_arc`] that also ends, with [`Termination::Stopped`], at the
/// first recorded point where `stop` holds. The arc is a prefix of the
/// unstopped arc for the same stream.
pub fn simulate_arc_until<T: Real>(
    system: &SpSystem<T>,
    y0: &StateVector<T>,
    stream: &RandomStream,
    config: &SimConfig,
    stop: Option<StopFn<'_, T>>,
) -> Result<HybridArc<T>> {
    config.validate()?;
    system.validate()?;
    if y0.x.len() != system.n_x || y0.z.len() != system.n_z {
        return Err(Error::Dimension(format!("initial state has ({}, {}) components", y0.x.len(), y0.z.len())));
    }
    if !system.in_flow_set(y0) && !system.in_jump_set(y0) {
        return Err(not_in_set("C ∪ D", y0));
    }
    let sel = resolve_flow_selection(system, config, stream)?;
    let mut jump_stream = stream.lane(LANE_JUMP);
    let mut segments = vec![];
    let mut jumps = vec![];
    let mut time = HybridTime::origin();
    let mut y = y0.clone();
    let jump_priority = config.cd_policy == CdPolicy::JumpPriority;
    loop {
        if stop.is_some_and(|f| f(time.t, time.j, &y)) {
            segments.push(FlowSegment { start: time, samples: vec![(time.t, y)] });
            return Ok(HybridArc { segments, jumps, termination: Termination::Stopped });
        }
        let (segment, exit) = if system.in_flow_set(&y) && !(jump_priority && system.in_jump_set(&y)) {
            integrate_flow_until(system, time, &y, &sel, config, stop)?
        } else {
            let exit = if system.in_jump_set(&y) { FlowExit::EnteredD } else { FlowExit::LeftC };
            (FlowSegment { start: time, samples: vec![(time.t, y.clone())] }, exit)
        };
        let (t_end, y_end) = segment.end().clone();
        segments.push(segment);
        let termination = match exit {
            FlowExit::Horizon => Some(Termination::HorizonReached),
            FlowExit::Stopped => Some(Termination::Stopped),
            _ if stop.is_some_and(|f| f(t_end, time.j, &y_end)) => Some(Termination::Stopped),
            _ if !system.in_jump_set(&y_end) => Some(Termination::LeftCAndD),
            _ if jumps.len() >= config.horizon_j => Some(Termination::JumpBudgetExhausted),
            _ => None,
        };
        if let Some(termination) = termination {
            return Ok(HybridArc { segments, jumps, termination });
        }
        let (v, y_plus) = execute_jump(system, &y_end, &mut jump_stream, config)?;
        let at = HybridTime::new(t_end, time.j);
        jumps.push(JumpRecord { time: at, pre: y_end, v, post: y_plus.clone() });
        time = HybridTime::new(t_end, time.j + 1);
        y = y_plus;
        if !system.in_flow_set(&y) && !system.in_jump_set(&y) {
            segments.push(FlowSegment { start: time, samples: vec![(time.t, y)] });
            return Ok(HybridArc { segments, jumps, termination: Termination::LeftCAndD });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{FlowMap, JumpMap, Manifold, ProductSet, SetPredicate};
    use crate::linalg::Matrix;
    use crate::stochastic::JumpMeasure;

    fn decay() -> SpSystem<f64> {
        SpSystem {
            name: "decay".into(),
            n_x: 1,
            n_z: 0,
            epsilon: 1.0,
            flow_set: ProductSet::new(SetPredicate::everything(), SetPredicate::everything()),
            jump_set: ProductSet::new(SetPredicate::nothing(), SetPredicate::everything()),
            flow_x: FlowMap::single(|x: &[f64], _: &[f64]| vec![-x[0]]),
            flow_z: FlowMap::zero(0),
            jump: JumpMap::single(|x: &[f64], z: &[f64], _: &[f64]| StateVector::new(x.to_vec(), z.to_vec())),
            measure: JumpMeasure::Discrete { points: vec![0.0], weights: vec![1.0] },
            manifold: Manifold::trivial(1),
        }
    }

    /// Timer `τ̇ = 1` on `[0, 1]`, reset to `v ∈ {0, 0.5}` at `τ = 1`.
    fn timer() -> SpSystem<f64> {
        SpSystem {
            name: "timer".into(),
            n_x: 1,
            n_z: 0,
            epsilon: 1.0,
            flow_set: ProductSet::new(SetPredicate::interval(0, 0.0, 1.0), SetPredicate::everything()),
            jump_set: ProductSet::new(SetPredicate::level(0, 1.0).with_crossing(|x| 1.0 - x[0]), SetPredicate::everything()),
            flow_x: FlowMap::single(|_: &[f64], _: &[f64]| vec![1.0]),
            flow_z: FlowMap::zero(0),
            jump: JumpMap::single(|_: &[f64], _: &[f64], v: &[f64]| StateVector::new(vec![v[0]], vec![])),
            measure: JumpMeasure::Discrete { points: vec![0.0, 0.5], weights: vec![0.5, 0.5] },
            manifold: Manifold::trivial(1),
        }
    }

    fn config(h: f64, t: f64) -> SimConfig {
        SimConfig { step_h: h, horizon_t: t, ..SimConfig::default() }
    }

    #[test]
    fn exponential_decay() {
        let (seg, exit) = integrate_flow(&decay(), &StateVector::from_f64(&[1.0], &[]), &config(1e-3, 1.0)).unwrap();
        assert_eq!(exit, FlowExit::Horizon);
        let (t, y) = seg.end();
        assert_eq!(*t, 1.0);
        assert!((y.x[0] - (-1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn f32_decay() {
        let mut s = decay();
        s.flow_x = FlowMap::single(|x: &[f64], _: &[f64]| vec![-2.0 * x[0]]);
        let sys32: SpSystem<f32> = SpSystem {
            name: s.name.clone(),
            n_x: 1,
            n_z: 0,
            epsilon: 1.0,
            flow_set: ProductSet::new(SetPredicate::everything(), SetPredicate::everything()),
            jump_set: ProductSet::new(SetPredicate::nothing(), SetPredicate::everything()),
            flow_x: FlowMap::single(|x: &[f32], _: &[f32]| vec![-2.0 * x[0]]),
            flow_z: FlowMap::zero(0),
            jump: JumpMap::single(|x: &[f32], z: &[f32], _: &[f32]| StateVector::new(x.to_vec(), z.to_vec())),
            measure: s.measure.clone(),
            manifold: Manifold::trivial(1),
        };
        let (seg, _) = integrate_flow(&sys32, &StateVector::from_f64(&[1.0], &[]), &config(1e-2, 1.0)).unwrap();
        assert!((seg.end().1.x[0] - (-2f32).exp()).abs() < 1e-5);
    }

    #[test]
    fn start_in_jump_set_gives_empty_segment() {
        let (seg, exit) = integrate_flow(&timer(), &StateVector::from_f64(&[1.0], &[]), &config(0.01, 5.0)).unwrap();
        assert!(seg.is_empty());
        assert_eq!(exit, FlowExit::EnteredD);
    }

    #[test]
    fn event_is_localized() {
        let (seg, exit) = integrate_flow(&timer(), &StateVector::from_f64(&[0.123], &[]), &config(0.03, 5.0)).unwrap();
        assert_eq!(exit, FlowExit::EnteredD);
        let (t, y) = seg.end();
        assert!((y.x[0] - 1.0).abs() <= 1e-10, "{t} {y:?}");
        assert!((t - 0.877).abs() <= 1e-9);
    }

    #[test]
    fn flow_priority_exits_at_boundary() {
        let mut c = config(0.03, 5.0);
        c.cd_policy = CdPolicy::FlowPriority;
        let (seg, exit) = integrate_flow(&timer(), &StateVector::from_f64(&[0.5], &[]), &c).unwrap();
        assert_eq!(exit, FlowExit::LeftC);
        assert!((seg.end().1.x[0] - 1.0).abs() <= 1e-9);
        let arc = simulate_arc(&timer(), &StateVector::from_f64(&[0.5], &[]), &RandomStream::new(1, 0), &c).unwrap();
        assert!(!arc.jumps.is_empty());
        arc.check_invariants(&timer()).unwrap();
    }

    #[test]
    fn arc_alternates_and_replays() {
        let sys = timer();
        let y0 = StateVector::from_f64(&[0.0], &[]);
        let c = config(0.01, 20.0);
        let a = simulate_arc(&sys, &y0, &RandomStream::new(3, 4), &c).unwrap();
        let b = simulate_arc(&sys, &y0, &RandomStream::new(3, 4), &c).unwrap();
        assert_eq!(a, b);
        a.check_invariants(&sys).unwrap();
        assert_eq!(a.termination, Termination::HorizonReached);
        assert!(a.jumps.len() >= 20);
        for j in &a.jumps {
            assert!(sys.jump_set.membership(&j.pre) <= 1e-10);
        }
    }

    #[test]
    fn zero_jump_budget() {
        let mut c = config(0.01, 20.0);
        c.horizon_j = 0;
        let a = simulate_arc(&timer(), &StateVector::from_f64(&[0.0], &[]), &RandomStream::new(3, 4), &c).unwrap();
        assert_eq!(a.segments.len(), 1);
        assert!(a.jumps.is_empty());
        assert_eq!(a.termination, Termination::JumpBudgetExhausted);
    }

    #[test]
    fn leaving_both_sets_stops() {
        let mut sys = timer();
        sys.jump = JumpMap::single(|_: &[f64], _: &[f64], _: &[f64]| StateVector::new(vec![2.0], vec![]));
        let a = simulate_arc(&sys, &StateVector::from_f64(&[0.9], &[]), &RandomStream::new(0, 0), &config(0.01, 5.0)).unwrap();
        assert_eq!(a.termination, Termination::LeftCAndD);
        assert_eq!(a.jumps.len(), 1);
        assert!(simulate_arc(&sys, &StateVector::from_f64(&[3.0], &[]), &RandomStream::new(0, 0), &config(0.01, 5.0)).is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let mut sys = decay();
        sys.flow_x = FlowMap::single(|x: &[f64], _: &[f64]| vec![x[0] * x[0]]);
        match integrate_flow(&sys, &StateVector::from_f64(&[1.0], &[]), &config(0.01, 5.0)) {
            Err(Error::NonFinite { last, .. }) => assert!(last[0].is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fast_layer_scales_with_epsilon() {
        let base = SpSystem {
            name: "layer".into(),
            n_x: 1,
            n_z: 1,
            epsilon: 0.1,
            flow_set: ProductSet::new(SetPredicate::everything(), SetPredicate::everything()),
            jump_set: ProductSet::new(SetPredicate::nothing(), SetPredicate::everything()),
            flow_x: FlowMap::single(|_: &[f64], z: &[f64]| vec![z[0]]),
            flow_z: FlowMap::single(|x: &[f64], z: &[f64]| vec![-(z[0] + x[0])]),
            jump: JumpMap::single(|x: &[f64], z: &[f64], _: &[f64]| StateVector::new(x.to_vec(), z.to_vec())),
            measure: JumpMeasure::Discrete { points: vec![0.0], weights: vec![1.0] },
            manifold: Manifold::affine(Matrix::from_f64(&[&[-1.0]]), vec![0.0]),
        };
        let efold = |eps: f64| {
            let sys = base.with_epsilon(eps).unwrap();
            let (seg, _) = integrate_flow(&sys, &StateVector::from_f64(&[1.0], &[0.0]), &config(1e-4, 1.0)).unwrap();
            let d0 = sys.manifold_distance(&seg.samples[0].1);
            seg.samples.iter().find(|(_, y)| sys.manifold_distance(y) <= d0 / std::f64::consts::E).unwrap().0
        };
        let r = efold(0.05) / efold(0.1);
        assert!((0.45..=0.55).contains(&r), "ratio {r}");
    }

    #[test]
    fn config_validation() {
        assert!(config(0.0, 1.0).validate().is_err());
        assert!(config(0.1, -1.0).validate().is_err());
        let json = serde_json::to_string(&SimConfig::default()).unwrap();
        assert!(json.contains("\"cd_policy\":\"jump_priority\""));
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, SimConfig::default());
    }
}
