//! System data, hybrid time, recorded arcs and the reduced-system constructor.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{self, Real};
use crate::stochastic::JumpMeasure;

/// Default absolute set-membership tolerance.
pub const SET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridTime<T> {
    pub t: T,
    pub j: usize,
}

impl<T: Real> HybridTime<T> {
    pub fn new(t: T, j: usize) -> Self {
        HybridTime { t, j }
    }

    pub fn origin() -> Self {
        HybridTime { t: T::zero(), j: 0 }
    }

    /// `t + j`, the scalar clock used for hybrid horizons.
    pub fn tj(&self) -> T {
        self.t + T::lit(self.j as f64)
    }

    /// Ordering of points within one hybrid time domain.
    pub fn precedes(&self, other: &Self) -> bool {
        self.tj() <= other.tj() && self.t <= other.t && self.j <= other.j
    }
}

/// `y = (x, z)` with slow part `x` and fast part `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateVector<T> {
    pub x: Vec<T>,
    pub z: Vec<T>,
}

impl<T: Real> StateVector<T> {
    pub fn new(x: Vec<T>, z: Vec<T>) -> Self {
        StateVector { x, z }
    }

    pub fn from_f64(x: &[f64], z: &[f64]) -> Self {
        StateVector { x: x.iter().map(|&a| T::lit(a)).collect(), z: z.iter().map(|&a| T::lit(a)).collect() }
    }

    pub fn concat(&self) -> Vec<T> {
        let mut y = self.x.clone();
        y.extend_from_slice(&self.z);
        y
    }

    pub fn split(y: &[T], n_x: usize) -> Self {
        StateVector { x: y[..n_x].to_vec(), z: y[n_x..].to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.z.len()
    }

    pub fn is_finite(&self) -> bool {
        scalar::all_finite(&self.x) && scalar::all_finite(&self.z)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.concat().into_iter().map(Real::as_f64).collect()
    }
}

pub type PointFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Set given by a signed membership function: nonpositive inside, positive
/// outside. A point is in the set iff `membership <= tol`.
///
/// The optional crossing function changes sign when a flowing state reaches
/// the set; event detection uses it for sets that are equalities (`τ = 0`,
/// integers) and so are only touched, never entered, by a continuous flow.
#[derive(Clone)]
pub struct SetPredicate<T> {
    membership: PointFn<T>,
    crossing: Option<PointFn<T>>,
    tol: T,
}

impl<T: Real> SetPredicate<T> {
    pub fn new(membership: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        SetPredicate { membership: Arc::new(membership), crossing: None, tol: T::lit(SET_TOL) }
    }

    pub fn with_crossing(mut self, crossing: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        self.crossing = Some(Arc::new(crossing));
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn everything() -> Self {
        Self::new(|_| T::neg_infinity())
    }

    pub fn nothing() -> Self {
        Self::new(|_| T::infinity())
    }

    /// `{v : lo <= v[i] <= hi}`.
    pub fn interval(i: usize, lo: T, hi: T) -> Self {
        Self::new(move |v| (lo - v[i]).max(v[i] - hi))
    }

    /// `{v : v[i] = c}`.
    pub fn level(i: usize, c: T) -> Self {
        Self::new(move |v| (v[i] - c).abs())
    }

    /// `{v : v[i] ∈ values}`.
    pub fn finite_values(i: usize, values: Vec<T>) -> Self {
        Self::new(move |v| values.iter().fold(T::infinity(), |m, &c| m.min((v[i] - c).abs())))
    }

    /// Euclidean ball `{v : |v[idx] - c| <= r}` over the listed components.
    pub fn ball(idx: Vec<usize>, center: Vec<T>, r: T) -> Self {
        Self::new(move |v| {
            let d: T = idx.iter().zip(&center).map(|(&i, &c)| (v[i] - c) * (v[i] - c)).sum();
            d.sqrt() - r
        })
    }

    /// Intersection; membership is the max. Crossings are combined by max too.
    pub fn and(self, other: Self) -> Self {
        let (a, b) = (self.membership.clone(), other.membership.clone());
        let crossing = if self.crossing.is_some() || other.crossing.is_some() {
            let (sa, sb) = (self.clone(), other.clone());
            Some(Arc::new(move |v: &[T]| sa.event(v).max(sb.event(v))) as PointFn<T>)
        } else {
            None
        };
        SetPredicate { membership: Arc::new(move |v| a(v).max(b(v))), crossing, tol: self.tol.min(other.tol) }
    }

    pub fn membership(&self, v: &[T]) -> T {
        (self.membership)(v)
    }

    pub fn contains(&self, v: &[T]) -> bool {
        self.membership(v) <= self.tol
    }

    /// Strict interior, used for open sets.
    pub fn contains_open(&self, v: &[T]) -> bool {
        self.membership(v) < T::zero()
    }

    /// Event function: the crossing function when given, else `membership - tol`.
    pub fn event(&self, v: &[T]) -> T {
        match &self.crossing {
            Some(c) => c(v),
            None => self.membership(v) - self.tol,
        }
    }

    pub fn tol(&self) -> T {
        self.tol
    }
}

/// `S_x × S_z`.
#[derive(Clone)]
pub struct ProductSet<T> {
    pub x: SetPredicate<T>,
    pub z: SetPredicate<T>,
}

impl<T: Real> ProductSet<T> {
    pub fn new(x: SetPredicate<T>, z: SetPredicate<T>) -> Self {
        ProductSet { x, z }
    }

    pub fn membership(&self, y: &StateVector<T>) -> T {
        self.x.membership(&y.x).max(self.z.membership(&y.z))
    }

    pub fn contains(&self, y: &StateVector<T>) -> bool {
        self.x.contains(&y.x) && self.z.contains(&y.z)
    }

    pub fn event(&self, y: &StateVector<T>) -> T {
        self.x.event(&y.x).max(self.z.event(&y.z))
    }

    pub fn tol(&self) -> T {
        self.x.tol().min(self.z.tol())
    }
}

/// Box of parameters indexing the elements of a set-valued map.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

/// Points per axis when enumerating a one-dimensional parameter.
pub const GRID_POINTS_1D: usize = 101;
const GRID_POINTS_ND: usize = 11;

impl<T: Real> ParamBox<T> {
    pub fn empty() -> Self {
        ParamBox { lo: vec![], hi: vec![] }
    }

    pub fn interval(lo: T, hi: T) -> Self {
        ParamBox { lo: vec![lo], hi: vec![hi] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn midpoint(&self) -> Vec<T> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| T::lit(0.5) * (a + b)).collect()
    }

    /// Point at fractions `u ∈ [0,1]^d` of the box.
    pub fn at(&self, u: &[f64]) -> Vec<T> {
        self.lo.iter().zip(&self.hi).zip(u).map(|((&a, &b), &f)| a + (b - a) * T::lit(f)).collect()
    }

    /// Tensor grid including the corners: 101 points for a scalar parameter,
    /// 11 per axis otherwise. Degenerate axes contribute one point.
    pub fn grid(&self) -> Vec<Vec<T>> {
        let per = if self.dim() == 1 { GRID_POINTS_1D } else { GRID_POINTS_ND };
        let mut out: Vec<Vec<T>> = vec![vec![]];
        for (&a, &b) in self.lo.iter().zip(&self.hi) {
            let axis: Vec<T> = if a == b {
                vec![a]
            } else {
                (0..per).map(|k| a + (b - a) * T::lit(k as f64 / (per - 1) as f64)).collect()
            };
            out = out
                .iter()
                .flat_map(|p| {
                    axis.iter().map(move |&s| {
                        let mut q = p.clone();
                        q.push(s);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

pub type FlowFn<T> = Arc<dyn Fn(&[T], &[T], &[T]) -> Vec<T> + Send + Sync>;
pub type JumpFn<T> = Arc<dyn Fn(&[T], &[T], &[T], &[T]) -> StateVector<T> + Send + Sync>;

/// Set-valued flow map `(x, z) ↦ {f(x, z, s) : s ∈ params}`.
#[derive(Clone)]
pub struct FlowMap<T> {
    pub f: FlowFn<T>,
    pub params: ParamBox<T>,
}

impl<T: Real> FlowMap<T> {
    pub fn single(f: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static) -> Self {
        FlowMap { f: Arc::new(move |x, z, _| f(x, z)), params: ParamBox::empty() }
    }

    pub fn family(f: impl Fn(&[T], &[T], &[T]) -> Vec<T> + Send + Sync + 'static, params: ParamBox<T>) -> Self {
        FlowMap { f: Arc::new(f), params }
    }

    /// Zero vector field of dimension `n`.
    pub fn zero(n: usize) -> Self {
        Self::single(move |_, _| vec![T::zero(); n])
    }

    pub fn eval(&self, x: &[T], z: &[T], s: &[T]) -> Vec<T> {
        (self.f)(x, z, s)
    }

    /// Every element on the parameter grid.
    pub fn enumerate(&self, x: &[T], z: &[T]) -> Vec<Vec<T>> {
        self.params.grid().iter().map(|s| self.eval(x, z, s)).collect()
    }
}

/// Set-valued jump map `(x, z, v) ↦ {g(x, z, v, s) : s ∈ params}`.
#[derive(Clone)]
pub struct JumpMap<T> {
    pub g: JumpFn<T>,
    pub params: ParamBox<T>,
}

impl<T: Real> JumpMap<T> {
    pub fn single(g: impl Fn(&[T], &[T], &[T]) -> StateVector<T> + Send + Sync + 'static) -> Self {
        JumpMap { g: Arc::new(move |x, z, v, _| g(x, z, v)), params: ParamBox::empty() }
    }

    pub fn family(g: impl Fn(&[T], &[T], &[T], &[T]) -> StateVector<T> + Send + Sync + 'static, params: ParamBox<T>) -> Self {
        JumpMap { g: Arc::new(g), params }
    }

    pub fn eval(&self, x: &[T], z: &[T], v: &[T], s: &[T]) -> StateVector<T> {
        (self.g)(x, z, v, s)
    }

    pub fn enumerate(&self, x: &[T], z: &[T], v: &[T]) -> Vec<StateVector<T>> {
        self.params.grid().iter().map(|s| self.eval(x, z, v, s)).collect()
    }
}

pub type ManifoldPointsFn<T> = Arc<dyn Fn(&[T], usize) -> std::result::Result<Vec<Vec<T>>, String> + Send + Sync>;
pub type ManifoldDistanceFn<T> = Arc<dyn Fn(&[T], &[T]) -> T + Send + Sync>;

/// Quasi-steady-state manifold `M(x)`.
#[derive(Clone)]
pub enum Manifold<T> {
    /// `z[constrained] = gain · x + offset`; the remaining components range
    /// over the listed intervals `(index, lo, hi)`.
    Affine { gain: Matrix<T>, offset: Vec<T>, constrained: Vec<usize>, free: Vec<(usize, T, T)> },
    /// User supplied representative points and distance.
    Custom { points: ManifoldPointsFn<T>, distance: ManifoldDistanceFn<T> },
}

impl<T: Real> Manifold<T> {
    /// `z = gain · x + offset` on every fast component.
    pub fn affine(gain: Matrix<T>, offset: Vec<T>) -> Self {
        let constrained = (0..gain.rows()).collect();
        Manifold::Affine { gain, offset, constrained, free: vec![] }
    }

    /// Manifold of a system without fast states.
    pub fn trivial(n_x: usize) -> Self {
        Manifold::affine(Matrix::zeros(0, n_x), vec![])
    }

    fn anchor(gain: &Matrix<T>, offset: &[T], x: &[T]) -> Vec<T> {
        gain.mat_vec(x).iter().zip(offset).map(|(&a, &b)| a + b).collect()
    }

    /// `|z|_{M(x)}`.
    pub fn distance(&self, x: &[T], z: &[T]) -> T {
        match self {
            Manifold::Affine { gain, offset, constrained, free } => {
                let a = Self::anchor(gain, offset, x);
                let mut d2: T = constrained.iter().zip(&a).map(|(&i, &c)| (z[i] - c) * (z[i] - c)).sum();
                for &(i, lo, hi) in free {
                    let e = (lo - z[i]).max(z[i] - hi).max(T::zero());
                    d2 = d2 + e * e;
                }
                d2.sqrt()
            }
            Manifold::Custom { distance, .. } => distance(x, z),
        }
    }

    /// `n` representative points of `M(x)`, a single one when `M(x)` is a singleton.
    pub fn points(&self, x: &[T], n: usize, n_z: usize) -> Result<Vec<Vec<T>>> {
        let fail = |reason: String| Error::Manifold { x: x.iter().map(|a| a.as_f64()).collect(), reason };
        let pts = match self {
            Manifold::Affine { gain, offset, constrained, free } => {
                let a = Self::anchor(gain, offset, x);
                let count = if free.is_empty() { 1 } else { n.max(1) };
                (0..count)
                    .map(|k| {
                        let f = if count == 1 { 0.5 } else { k as f64 / (count - 1) as f64 };
                        let mut z = vec![T::zero(); n_z];
                        for (&i, &c) in constrained.iter().zip(&a) {
                            z[i] = c;
                        }
                        for &(i, lo, hi) in free {
                            z[i] = lo + (hi - lo) * T::lit(f);
                        }
                        z
                    })
                    .collect()
            }
            Manifold::Custom { points, .. } => points(x, n.max(1)).map_err(fail)?,
        };
        if pts.is_empty() {
            return Err(fail("empty manifold".into()));
        }
        if pts.iter().any(|p| p.len() != n_z || !scalar::all_finite(p)) {
            return Err(fail("non-finite or mis-sized manifold point".into()));
        }
        Ok(pts)
    }

    /// Closest point of `M(x)` to `z` for affine manifolds; the first
    /// representative point otherwise.
    pub fn project(&self, x: &[T], z: &[T]) -> Result<Vec<T>> {
        match self {
            Manifold::Affine { gain, offset, constrained, free } => {
                let a = Self::anchor(gain, offset, x);
                let mut out = z.to_vec();
                for (&i, &c) in constrained.iter().zip(&a) {
                    out[i] = c;
                }
                for &(i, lo, hi) in free {
                    out[i] = out[i].max(lo).min(hi);
                }
                Ok(out)
            }
            Manifold::Custom { .. } => Ok(self.points(x, 1, z.len())?.remove(0)),
        }
    }
}

/// The tuple `(ε, C, F_x, F_z, D, G, μ, M)`.
#[derive(Clone)]
pub struct SpSystem<T> {
    pub name: String,
    pub n_x: usize,
    pub n_z: usize,
    pub epsilon: T,
    pub flow_set: ProductSet<T>,
    pub jump_set: ProductSet<T>,
    pub flow_x: FlowMap<T>,
    pub flow_z: FlowMap<T>,
    pub jump: JumpMap<T>,
    pub measure: JumpMeasure,
    pub manifold: Manifold<T>,
}

impl<T: Real> SpSystem<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.measure.validate()
    }

    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.validate()?;
        Ok(s)
    }

    pub fn in_flow_set(&self, y: &StateVector<T>) -> bool {
        self.flow_set.contains(y)
    }

    pub fn in_jump_set(&self, y: &StateVector<T>) -> bool {
        self.jump_set.contains(y)
    }

    /// `(f_x, ε⁻¹ f_z)` for the given selections.
    pub fn field(&self, y: &StateVector<T>, sx: &[T], sz: &[T]) -> StateVector<T> {
        let fx = self.flow_x.eval(&y.x, &y.z, sx);
        let inv = T::one() / self.epsilon;
        let fz = self.flow_z.eval(&y.x, &y.z, sz).into_iter().map(|a| a * inv).collect();
        StateVector { x: fx, z: fz }
    }

    pub fn manifold_distance(&self, y: &StateVector<T>) -> T {
        self.manifold.distance(&y.x, &y.z)
    }
}

/// `|z|_{M(x)}`.
pub fn manifold_distance<T: Real>(system: &SpSystem<T>, y: &StateVector<T>) -> T {
    system.manifold_distance(y)
}

/// Reduced system: `F̃(x)` is the hull of `F_x(x, z)` over `z ∈ M(x)` and
/// `G̃` keeps the slow part of `G`.
#[derive(Clone)]
pub struct ReducedSystem<T> {
    pub base: SpSystem<T>,
    pub hull_samples: usize,
}

pub fn build_reduced<T: Real>(system: &SpSystem<T>, hull_samples: usize) -> Result<ReducedSystem<T>> {
    if hull_samples == 0 {
        return Err(Error::Config("hull_samples must be at least 1".into()));
    }
    Ok(ReducedSystem { base: system.clone(), hull_samples })
}

impl<T: Real> ReducedSystem<T> {
    pub fn n_x(&self) -> usize {
        self.base.n_x
    }

    /// `F_x(x, z_k, s)` at the sampled manifold points.
    pub fn flow_vertices(&self, x: &[T], s: &[T]) -> Result<Vec<Vec<T>>> {
        let pts = self.base.manifold.points(x, self.hull_samples, self.base.n_z)?;
        Ok(pts.iter().map(|z| self.base.flow_x.eval(x, z, s)).collect())
    }

    /// Convex combination of the vertices with the given weights.
    pub fn flow_combination(&self, x: &[T], s: &[T], weights: &[T]) -> Result<Vec<T>> {
        let verts = self.flow_vertices(x, s)?;
        if weights.len() != verts.len() {
            return Err(Error::Dimension(format!("{} hull weights for {} vertices", weights.len(), verts.len())));
        }
        let total: T = weights.iter().copied().sum();
        let mut out = vec![T::zero(); x.len()];
        for (v, &w) in verts.iter().zip(weights) {
            for (o, &a) in out.iter_mut().zip(v) {
                *o = *o + w / total * a;
            }
        }
        Ok(out)
    }

    /// Barycentre of the vertices.
    pub fn flow(&self, x: &[T], s: &[T]) -> Result<Vec<T>> {
        let verts = self.flow_vertices(x, s)?;
        let k = T::lit(verts.len() as f64);
        let mut out = vec![T::zero(); x.len()];
        for v in &verts {
            for (o, &a) in out.iter_mut().zip(v) {
                *o = *o + a / k;
            }
        }
        Ok(out)
    }

    /// Selections of `F̃(x)`: every vertex for every grid parameter.
    pub fn flow_selections(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let mut out = vec![];
        for s in self.base.flow_x.params.grid() {
            out.extend(self.flow_vertices(x, &s)?);
        }
        Ok(out)
    }

    /// Slow part of `G(x, z, v, s)` with `z` on the manifold.
    pub fn jump(&self, x: &[T], v: &[T], s: &[T]) -> Result<Vec<T>> {
        let z = self.base.manifold.points(x, 1, self.base.n_z)?.remove(0);
        Ok(self.base.jump.eval(x, &z, v, s).x)
    }

    /// Every slow jump output on the parameter grid.
    pub fn jump_enumerate(&self, x: &[T], v: &[T]) -> Result<Vec<Vec<T>>> {
        let z = self.base.manifold.points(x, 1, self.base.n_z)?.remove(0);
        Ok(self.base.jump.enumerate(x, &z, v).into_iter().map(|g| g.x).collect())
    }

    /// The reduced dynamics packaged as a system without fast states.
    /// Manifold failures surface as non-finite derivatives.
    pub fn to_system(&self) -> SpSystem<T> {
        let n_x = self.base.n_x;
        let me = self.clone();
        let flow_x = FlowMap::family(
            move |x, _z, s| me.flow(x, s).unwrap_or_else(|_| vec![T::nan(); x.len()]),
            self.base.flow_x.params.clone(),
        );
        let me = self.clone();
        let jump = JumpMap::family(
            move |x, _z, v, s| StateVector {
                x: me.jump(x, v, s).unwrap_or_else(|_| vec![T::nan(); x.len()]),
                z: vec![],
            },
            self.base.jump.params.clone(),
        );
        SpSystem {
            name: format!("{}-reduced", self.base.name),
            n_x,
            n_z: 0,
            epsilon: self.base.epsilon,
            flow_set: ProductSet::new(self.base.flow_set.x.clone(), SetPredicate::everything()),
            jump_set: ProductSet::new(self.base.jump_set.x.clone(), SetPredicate::everything()),
            flow_x,
            flow_z: FlowMap::zero(0),
            jump,
            measure: self.base.measure.clone(),
            manifold: Manifold::trivial(n_x),
        }
    }
}

/// One flow interval of an arc.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSegment<T> {
    pub start: HybridTime<T>,
    /// `(t, y)` pairs, the first being the start point.
    pub samples: Vec<(T, StateVector<T>)>,
}

impl<T: Real> FlowSegment<T> {
    /// No flow took place.
    pub fn is_empty(&self) -> bool {
        self.samples.len() <= 1
    }

    pub fn end(&self) -> &(T, StateVector<T>) {
        self.samples.last().expect("segment has a start sample")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord<T> {
    pub time: HybridTime<T>,
    pub pre: StateVector<T>,
    pub v: Vec<T>,
    pub post: StateVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    LeftCAndD,
    JumpBudgetExhausted,
    /// A caller-supplied stop predicate held.
    Stopped,
}

/// Recorded sample path: segment `k` is followed by jump `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridArc<T> {
    pub segments: Vec<FlowSegment<T>>,
    pub jumps: Vec<JumpRecord<T>>,
    pub termination: Termination,
}

impl<T: Real> HybridArc<T> {
    /// Every recorded point in hybrid-time order.
    pub fn points(&self) -> impl Iterator<Item = (HybridTime<T>, &StateVector<T>)> + '_ {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(j, seg)| seg.samples.iter().map(move |(t, y)| (HybridTime::new(*t, j), y)))
    }

    pub fn final_point(&self) -> (HybridTime<T>, &StateVector<T>) {
        let j = self.segments.len() - 1;
        let (t, y) = self.segments[j].end();
        (HybridTime::new(*t, j), y)
    }

    /// Checks ordering, domain confinement and jump/segment linkage.
    pub fn check_invariants(&self, system: &SpSystem<T>) -> std::result::Result<(), String> {
        if self.segments.len() != self.jumps.len() + 1 {
            return Err(format!("{} segments for {} jumps", self.segments.len(), self.jumps.len()));
        }
        let mut prev: Option<HybridTime<T>> = None;
        for (k, seg) in self.segments.iter().enumerate() {
            if seg.start.j != k {
                return Err(format!("segment {k} starts at jump count {}", seg.start.j));
            }
            for w in seg.samples.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(format!("segment {k}: sample times not increasing"));
                }
            }
            for (t, y) in &seg.samples[..seg.samples.len().saturating_sub(1)] {
                if !system.in_flow_set(y) {
                    return Err(format!("segment {k}: flow point at t = {t} outside C"));
                }
            }
            for (t, _) in &seg.samples {
                let h = HybridTime::new(*t, k);
                if let Some(p) = prev {
                    if !p.precedes(&h) {
                        return Err(format!("hybrid time out of order at ({t}, {k})"));
                    }
                }
                prev = Some(h);
            }
            if let Some(jr) = self.jumps.get(k) {
                let (t_end, y_end) = seg.end();
                if jr.time.t != *t_end || jr.time.j != k || &jr.pre != y_end {
                    return Err(format!("jump {k} does not start at the end of segment {k}"));
                }
                if !system.in_jump_set(&jr.pre) {
                    return Err(format!("jump {k} pre-state outside D"));
                }
                let next = &self.segments[k + 1];
                if next.samples[0].1 != jr.post || next.samples[0].0 != *t_end {
                    return Err(format!("segment {} does not start at the post-state of jump {k}", k + 1));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_system() -> SpSystem<f64> {
        SpSystem {
            name: "test".into(),
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
        }
    }

    #[test]
    fn hybrid_time_order() {
        let a = HybridTime::new(1.0, 0);
        let b = HybridTime::new(1.0, 1);
        let c = HybridTime::new(0.5, 2);
        assert!(a.precedes(&b));
        assert!(!b.precedes(&c));
    }

    #[test]
    fn distance_to_affine_manifold() {
        let s = scalar_system();
        assert_eq!(s.manifold_distance(&StateVector::from_f64(&[1.0], &[-1.0])), 0.0);
        assert_eq!(s.manifold_distance(&StateVector::from_f64(&[0.0], &[2.0])), 2.0);
    }

    #[test]
    fn reduced_flow_singleton_manifold() {
        let r = build_reduced(&scalar_system(), 3).unwrap();
        for k in -30..=30 {
            let x = k as f64 * 0.1;
            assert!((r.flow(&[x], &[]).unwrap()[0] + x).abs() <= 1e-12);
        }
        assert!(build_reduced(&scalar_system(), 0).is_err());
    }

    #[test]
    fn free_manifold_components() {
        let m = Manifold::Affine {
            gain: Matrix::from_f64(&[&[1.0]]),
            offset: vec![0.0],
            constrained: vec![0],
            free: vec![(1, 0.0, 2.0)],
        };
        assert_eq!(m.distance(&[1.0], &[1.0, 1.5]), 0.0);
        assert_eq!(m.distance(&[1.0], &[1.0, 3.0]), 1.0);
        let pts = m.points(&[1.0], 3, 2).unwrap();
        assert_eq!(pts, vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
    }

    #[test]
    fn custom_manifold_failure_names_x() {
        let m: Manifold<f64> = Manifold::Custom {
            points: Arc::new(|_, _| Err("undefined".into())),
            distance: Arc::new(|_, _| 0.0),
        };
        match m.points(&[2.5], 1, 1) {
            Err(Error::Manifold { x, .. }) => assert_eq!(x, vec![2.5]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn param_grid_sizes() {
        let b = ParamBox::interval(0.0, 1.0);
        let g = b.grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], vec![0.0]);
        assert_eq!(g[100], vec![1.0]);
        assert_eq!(ParamBox::<f64>::empty().grid(), vec![Vec::<f64>::new()]);
        let b2 = ParamBox { lo: vec![0.0, 0.0], hi: vec![1.0, 0.0] };
        assert_eq!(b2.grid().len(), 11);
    }

    #[test]
    fn set_predicates() {
        let s = SetPredicate::<f64>::interval(0, 0.0, 2.0);
        assert!(s.contains(&[2.0 + 1e-10]));
        assert!(!s.contains(&[2.1]));
        let l = SetPredicate::<f64>::level(0, 0.0).with_crossing(|v| v[0]);
        assert_eq!(l.event(&[0.3]), 0.3);
        let b = SetPredicate::<f64>::ball(vec![0, 1], vec![0.0, 0.0], 1.0);
        assert!(b.contains_open(&[0.5, 0.5]));
        assert!(!b.contains_open(&[1.0, 0.0]));
    }
}
