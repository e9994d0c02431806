//! Compact convex constraint sets and projections in weighted spaces `ℋ_Q`.
//!
//! A [`ConvexSet`] is an intersection of [`PrimitiveSet`]s. Projection onto a
//! single primitive uses a closed form whenever one exists for the requested
//! metric; intersections are handled by Dykstra's alternating projection
//! carried out in the `Q` inner product, so that the limit is the
//! `Q`-projection onto the intersection and not merely some feasible point.
//!
//! One intersection gets an exact special case: a box together with a single
//! linear (in)equality under a diagonal metric. That is a continuous knapsack
//! problem, solved by searching the scalar multiplier of the linear constraint.
//! Load-scheduling sets (nonnegative consumption with a fixed energy budget)
//! have this shape and are projected in every iteration of the solvers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::metric::SpdMatrix;

/// Tolerance and iteration cap for Dykstra's algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Stop once a full cycle moves the iterate and the correction terms by
    /// at most `tol` in `‖·‖_Q` and no primitive is violated by more than `tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Serialized form of a primitive, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Halfspace { a: Vec<f64>, b: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Affine { a: Vec<Vec<f64>>, b: Vec<f64> },
}

/// A basic closed convex set in `ℝⁿ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PrimitiveSpec", into = "PrimitiveSpec")]
pub enum PrimitiveSet {
    /// `{x : lo ≤ x ≤ hi}`
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `{x : aᵀx ≤ b}`
    Halfspace { a: DVector<f64>, b: f64 },
    /// `{x : ‖x − center‖ ≤ radius}` (Euclidean)
    Ball { center: DVector<f64>, radius: f64 },
    /// `{x : Ax = b}`
    Affine { a: DMatrix<f64>, b: DVector<f64> },
}

impl PrimitiveSet {
    pub fn boxed(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty() {
            return Err(Error::InvalidSet("box of dimension zero".into()));
        }
        if let Some(k) = (0..lo.len()).find(|&k| !(lo[k] <= hi[k])) {
            return Err(Error::InvalidSet(format!(
                "box bound lo[{k}] = {} exceeds hi[{k}] = {}",
                lo[k], hi[k]
            )));
        }
        if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSet("box bounds must be finite".into()));
        }
        Ok(Self::Box { lo, hi })
    }

    /// The unit cube `[0, 1]ⁿ`.
    pub fn unit_box(n: usize) -> Self {
        Self::Box {
            lo: DVector::zeros(n),
            hi: DVector::from_element(n, 1.0),
        }
    }

    /// The singleton `{x}`, represented as a degenerate box.
    pub fn singleton(x: DVector<f64>) -> Result<Self> {
        Self::boxed(x.clone(), x)
    }

    pub fn halfspace(a: DVector<f64>, b: f64) -> Result<Self> {
        if a.is_empty() || a.norm() == 0.0 || !b.is_finite() {
            return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
        }
        Ok(Self::Halfspace { a, b })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidSet("ball radius must be finite and ≥ 0".into()));
        }
        Ok(Self::Ball { center, radius })
    }

    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidSet("empty affine constraint".into()));
        }
        if a.nrows() > a.ncols() {
            return Err(Error::InvalidSet("affine constraint is not full row rank".into()));
        }
        let sv = a.clone().singular_values();
        if sv.min() <= 1e-10 * sv.max().max(1.0) {
            return Err(Error::InvalidSet("affine constraint is not full row rank".into()));
        }
        Ok(Self::Affine { a, b })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lo, .. } => lo.len(),
            Self::Halfspace { a, .. } => a.len(),
            Self::Ball { center, .. } => center.len(),
            Self::Affine { a, .. } => a.ncols(),
        }
    }

    /// How far `x` is from satisfying this primitive, in Euclidean units.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
                .fold(0.0, f64::max),
            Self::Halfspace { a, b } => ((a.dot(x) - b) / a.norm()).max(0.0),
            Self::Ball { center, radius } => ((x - center).norm() - radius).max(0.0),
            Self::Affine { a, b } => {
                let r = a * x - b;
                (0..a.nrows())
                    .map(|i| r[i].abs() / a.row(i).norm())
                    .fold(0.0, f64::max)
            }
        }
    }
}

impl TryFrom<PrimitiveSpec> for PrimitiveSet {
    type Error = Error;

    fn try_from(spec: PrimitiveSpec) -> Result<Self> {
        match spec {
            PrimitiveSpec::Box { lo, hi } => Self::boxed(lo.into(), hi.into()),
            PrimitiveSpec::Halfspace { a, b } => Self::halfspace(a.into(), b),
            PrimitiveSpec::Ball { center, radius } => Self::ball(center.into(), radius),
            PrimitiveSpec::Affine { a, b } => Self::affine(linalg::matrix_from_rows(&a)?, b.into()),
        }
    }
}

impl From<PrimitiveSet> for PrimitiveSpec {
    fn from(p: PrimitiveSet) -> Self {
        let v = |x: DVector<f64>| x.iter().copied().collect::<Vec<_>>();
        match p {
            PrimitiveSet::Box { lo, hi } => Self::Box { lo: v(lo), hi: v(hi) },
            PrimitiveSet::Halfspace { a, b } => Self::Halfspace { a: v(a), b },
            PrimitiveSet::Ball { center, radius } => Self::Ball {
                center: v(center),
                radius,
            },
            PrimitiveSet::Affine { a, b } => Self::Affine {
                a: linalg::matrix_to_rows(&a),
                b: v(b),
            },
        }
    }
}

/// A nonempty intersection of primitive sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<PrimitiveSet>", into = "Vec<PrimitiveSet>")]
pub struct ConvexSet {
    dim: usize,
    primitives: Vec<PrimitiveSet>,
    bounding_box: Option<(DVector<f64>, DVector<f64>)>,
}

impl TryFrom<Vec<PrimitiveSet>> for ConvexSet {
    type Error = Error;

    fn try_from(p: Vec<PrimitiveSet>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<ConvexSet> for Vec<PrimitiveSet> {
    fn from(s: ConvexSet) -> Self {
        s.primitives
    }
}

impl ConvexSet {
    /// Builds the intersection and certifies it is nonempty by projecting the
    /// origin onto it.
    pub fn new(primitives: Vec<PrimitiveSet>) -> Result<Self> {
        let dim = primitives
            .first()
            .ok_or_else(|| Error::InvalidSet("no primitives".into()))?
            .dim();
        for p in &primitives {
            check_dim(dim, p.dim())?;
        }
        let bounding_box = derive_bounding_box(dim, &primitives);
        let set = Self {
            dim,
            primitives,
            bounding_box,
        };
        let opts = ProjectionOptions::default();
        let origin = DVector::zeros(dim);
        let x = set
            .projector_with(&SpdMatrix::identity(dim), opts)?
            .project(&origin)
            .map_err(|e| Error::EmptySet(e.to_string()))?;
        let viol = set.max_violation(&x);
        if viol > 10.0 * opts.tol {
            return Err(Error::EmptySet(format!("best point violates by {viol:e}")));
        }
        Ok(set)
    }

    pub fn from_primitive(p: PrimitiveSet) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn unit_box(n: usize) -> Self {
        Self::from_primitive(PrimitiveSet::unit_box(n)).expect("unit box is nonempty")
    }

    pub fn singleton(x: DVector<f64>) -> Result<Self> {
        Self::from_primitive(PrimitiveSet::singleton(x)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn primitives(&self) -> &[PrimitiveSet] {
        &self.primitives
    }

    /// Coordinate bounds derived from the box and ball primitives, if any.
    pub fn bounding_box(&self) -> Option<&(DVector<f64>, DVector<f64>)> {
        self.bounding_box.as_ref()
    }

    pub fn is_bounded(&self) -> bool {
        self.bounding_box.is_some()
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.violation(x))
            .fold(0.0, f64::max)
    }

    /// True iff `x` violates no primitive by more than `tol`.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if !(tol > 0.0) {
            return Err(Error::Precondition("tol must be positive".into()));
        }
        check_dim(self.dim, x.len())?;
        Ok(self.max_violation(x) <= tol)
    }

    /// `argmin_{x ∈ set} ‖x − y‖_Q`.
    pub fn project(
        &self,
        q: &SpdMatrix,
        y: &DVector<f64>,
        opts: ProjectionOptions,
    ) -> Result<DVector<f64>> {
        self.projector_with(q, opts)?.project(y)
    }

    pub fn projector(&self, q: &SpdMatrix) -> Result<Projector> {
        self.projector_with(q, ProjectionOptions::default())
    }

    /// Precomputes everything the projection in metric `q` needs.
    pub fn projector_with(&self, q: &SpdMatrix, opts: ProjectionOptions) -> Result<Projector> {
        check_dim(self.dim, q.dim())?;
        if !(opts.tol > 0.0) || opts.max_iter == 0 {
            return Err(Error::Precondition(
                "projection needs tol > 0 and max_iter ≥ 1".into(),
            ));
        }
        Ok(Projector {
            atoms: compile(self.dim, &self.primitives, q)?,
            metric: q.clone(),
            primitives: self.primitives.clone(),
            opts,
        })
    }
}

fn derive_bounding_box(
    dim: usize,
    primitives: &[PrimitiveSet],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let mut bb: Option<(DVector<f64>, DVector<f64>)> = None;
    for p in primitives {
        let (lo, hi) = match p {
            PrimitiveSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            PrimitiveSet::Ball { center, radius } => (
                center.add_scalar(-radius),
                center.add_scalar(*radius),
            ),
            _ => continue,
        };
        bb = Some(match bb {
            None => (lo, hi),
            Some((l, h)) => (l.sup(&lo), h.inf(&hi)),
        });
    }
    bb.filter(|(l, _)| l.len() == dim)
}

/// Elementary projection steps; each is an exact `Q`-projection onto one
/// closed convex set.
#[derive(Clone, Debug)]
enum Atom {
    /// Box under a diagonal metric.
    Clamp { lo: DVector<f64>, hi: DVector<f64> },
    /// `aᵀx ≤ b`; `w = Q⁻¹a`, `denom = aᵀQ⁻¹a`.
    Halfspace {
        a: DVector<f64>,
        b: f64,
        w: DVector<f64>,
        denom: f64,
    },
    /// `Ax = b`; `gain = Q⁻¹Aᵀ(AQ⁻¹Aᵀ)⁻¹`.
    Affine {
        a: DMatrix<f64>,
        b: DVector<f64>,
        gain: DMatrix<f64>,
    },
    /// Euclidean ball; valid for metrics that are a multiple of the identity.
    Ball { center: DVector<f64>, radius: f64 },
    /// Box ∩ {aᵀx = b} (or ≤ b) under the diagonal metric `weights`.
    Knapsack {
        lo: DVector<f64>,
        hi: DVector<f64>,
        a: DVector<f64>,
        b: f64,
        equality: bool,
        weights: DVector<f64>,
    },
}

fn compile(dim: usize, primitives: &[PrimitiveSet], q: &SpdMatrix) -> Result<Vec<Atom>> {
    // Boxes intersect into a single box.
    let mut bx: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut others = Vec::new();
    for p in primitives {
        match p {
            PrimitiveSet::Box { lo, hi } => {
                bx = Some(match bx {
                    None => (lo.clone(), hi.clone()),
                    Some((l, h)) => (l.sup(lo), h.inf(hi)),
                });
            }
            other => others.push(other),
        }
    }

    if q.is_diagonal() {
        if let (Some((lo, hi)), [single]) = (&bx, others.as_slice()) {
            let weights = q.matrix().diagonal();
            let knapsack = match single {
                PrimitiveSet::Halfspace { a, b } => Some((a.clone(), *b, false)),
                PrimitiveSet::Affine { a, b } if a.nrows() == 1 => {
                    Some((a.row(0).transpose(), b[0], true))
                }
                _ => None,
            };
            if let Some((a, b, equality)) = knapsack {
                return Ok(vec![Atom::Knapsack {
                    lo: lo.clone(),
                    hi: hi.clone(),
                    a,
                    b,
                    equality,
                    weights,
                }]);
            }
        }
    }

    let mut atoms = Vec::new();
    if let Some((lo, hi)) = bx {
        if q.is_diagonal() {
            atoms.push(Atom::Clamp { lo, hi });
        } else {
            // Fixed coordinates become one affine block, the rest halfspaces.
            let fixed: Vec<usize> = (0..dim).filter(|&k| lo[k] == hi[k]).collect();
            if !fixed.is_empty() {
                let a = DMatrix::from_fn(fixed.len(), dim, |r, c| {
                    if c == fixed[r] {
                        1.0
                    } else {
                        0.0
                    }
                });
                let b = DVector::from_iterator(fixed.len(), fixed.iter().map(|&k| lo[k]));
                atoms.push(affine_atom(a, b, q)?);
            }
            for k in (0..dim).filter(|&k| lo[k] < hi[k]) {
                let mut e = DVector::zeros(dim);
                e[k] = 1.0;
                atoms.push(halfspace_atom(e.clone(), hi[k], q));
                atoms.push(halfspace_atom(-e, -lo[k], q));
            }
        }
    }
    for p in others {
        atoms.push(match p {
            PrimitiveSet::Halfspace { a, b } => halfspace_atom(a.clone(), *b, q),
            PrimitiveSet::Affine { a, b } => affine_atom(a.clone(), b.clone(), q)?,
            PrimitiveSet::Ball { center, radius } => {
                if q.as_scalar().is_none() {
                    return Err(Error::Unsupported(
                        "ball projection requires a metric proportional to the identity".into(),
                    ));
                }
                Atom::Ball {
                    center: center.clone(),
                    radius: *radius,
                }
            }
            PrimitiveSet::Box { .. } => unreachable!("boxes merged above"),
        });
    }
    Ok(atoms)
}

fn halfspace_atom(a: DVector<f64>, b: f64, q: &SpdMatrix) -> Atom {
    let w = q.solve(&a);
    let denom = a.dot(&w);
    Atom::Halfspace { a, b, w, denom }
}

fn affine_atom(a: DMatrix<f64>, b: DVector<f64>, q: &SpdMatrix) -> Result<Atom> {
    let qinv_at = q.inverse() * a.transpose();
    let gram = &a * &qinv_at;
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::InvalidSet("affine Gram matrix is singular".into()))?;
    Ok(Atom::Affine {
        gain: qinv_at * gram_inv,
        a,
        b,
    })
}

impl Atom {
    fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Atom::Clamp { lo, hi } => y.sup(lo).inf(hi),
            Atom::Halfspace { a, b, w, denom } => {
                let excess = a.dot(y) - b;
                if excess <= 0.0 {
                    y.clone()
                } else {
                    y - w * (excess / denom)
                }
            }
            Atom::Affine { a, b, gain } => y - gain * (a * y - b),
            Atom::Ball { center, radius } => {
                let d = y - center;
                let r = d.norm();
                if r <= *radius {
                    y.clone()
                } else {
                    center + d * (radius / r)
                }
            }
            Atom::Knapsack {
                lo,
                hi,
                a,
                b,
                equality,
                weights,
            } => knapsack(y, weights, lo, hi, a, *b, *equality),
        }
    }
}

/// `argmin Σ_t w_t (x_t − y_t)²` over `lo ≤ x ≤ hi`, `aᵀx = b` (or `≤ b`).
///
/// The minimizer is `x(τ) = clamp(y − τ a / w)` for the multiplier `τ` that
/// makes the linear constraint tight; `aᵀx(τ)` is nonincreasing in `τ`.
fn knapsack(
    y: &DVector<f64>,
    w: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &DVector<f64>,
    b: f64,
    equality: bool,
) -> DVector<f64> {
    let x_at = |tau: f64| {
        DVector::from_fn(y.len(), |t, _| {
            (y[t] - tau * a[t] / w[t]).clamp(lo[t], hi[t])
        })
    };
    let g = |tau: f64| a.dot(&x_at(tau));

    if !equality {
        let x0 = x_at(0.0);
        if a.dot(&x0) <= b {
            return x0;
        }
    }

    let (mut lo_t, mut hi_t) = (-1.0_f64, 1.0_f64);
    for _ in 0..2000 {
        if g(lo_t) >= b {
            break;
        }
        lo_t *= 2.0;
    }
    for _ in 0..2000 {
        if g(hi_t) <= b {
            break;
        }
        hi_t *= 2.0;
    }
    if !equality {
        lo_t = lo_t.max(0.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo_t + hi_t);
        if mid <= lo_t || mid >= hi_t {
            break;
        }
        if g(mid) > b {
            lo_t = mid;
        } else {
            hi_t = mid;
        }
    }
    let tau = 0.5 * (lo_t + hi_t);
    let x = x_at(tau);

    // The constraint is piecewise linear in τ; with the active set frozen at
    // the bisection point, the multiplier has a closed form.
    let mut clamped_sum = 0.0;
    let mut free_num = 0.0;
    let mut free_den = 0.0;
    for t in 0..y.len() {
        let raw = y[t] - tau * a[t] / w[t];
        if raw > lo[t] && raw < hi[t] {
            free_num += a[t] * y[t];
            free_den += a[t] * a[t] / w[t];
        } else {
            clamped_sum += a[t] * x[t];
        }
    }
    if free_den > 0.0 {
        let exact = (free_num + clamped_sum - b) / free_den;
        let refined = x_at(exact);
        if (a.dot(&refined) - b).abs() <= (a.dot(&x) - b).abs() {
            return refined;
        }
    }
    x
}

/// A set compiled against a fixed metric `Q`.
#[derive(Clone, Debug)]
pub struct Projector {
    atoms: Vec<Atom>,
    metric: SpdMatrix,
    primitives: Vec<PrimitiveSet>,
    opts: ProjectionOptions,
}

impl Projector {
    pub fn metric(&self) -> &SpdMatrix {
        &self.metric
    }

    pub fn options(&self) -> ProjectionOptions {
        self.opts
    }

    /// True when the projection is computed without Dykstra iterations.
    pub fn is_closed_form(&self) -> bool {
        self.atoms.len() == 1
    }

    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.metric.dim(), y.len())?;
        match self.atoms.as_slice() {
            [single] => Ok(single.apply(y)),
            atoms => self.dykstra(atoms, y),
        }
    }

    fn violation(&self, x: &DVector<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.violation(x))
            .fold(0.0, f64::max)
    }

    fn dykstra(&self, atoms: &[Atom], y: &DVector<f64>) -> Result<DVector<f64>> {
        let n = y.len();
        let mut x = y.clone();
        let mut increments = vec![DVector::<f64>::zeros(n); atoms.len()];
        let mut displacement = f64::INFINITY;
        for _ in 0..self.opts.max_iter {
            let start = x.clone();
            let mut increment_change = 0.0;
            for (atom, p) in atoms.iter().zip(increments.iter_mut()) {
                let shifted = &x + &*p;
                let next = atom.apply(&shifted);
                let fresh = shifted - &next;
                increment_change += self.metric.norm_sq(&(&fresh - &*p));
                *p = fresh;
                x = next;
            }
            // The iterate can sit still for a whole cycle while the increments
            // are still moving, so both must have settled.
            displacement = self.metric.norm(&(&x - &start)).max(increment_change.sqrt());
            if displacement <= self.opts.tol && self.violation(&x) <= self.opts.tol {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence {
            iterations: self.opts.max_iter,
            residual: displacement,
        })
    }
}
