//! Nonlinearity definitions, built-in example models, and sampling-based
//! audits of the structural assumptions on G: sign symmetry, nonnegativity
//! of F(z) = G(z) + 1/2 sum m_j^2 z_j^2, polynomial growth of DG, and the
//! two spectral constants alpha and alpha_j with their inequalities.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

type GFn<T> = dyn Fn(&[T]) -> T + Send + Sync;
type DgFn<T> = dyn Fn(&[T], &mut [T]) + Send + Sync;

/// A k-component nonlinearity G together with its gradient DG, the masses
/// m_1 <= ... <= m_k, and the growth exponents (p, q) bounding |DG|.
///
/// Models are immutable after construction and safe to share across threads.
#[derive(Clone)]
pub struct NonlinearityModel<T: Scalar> {
    name: String,
    masses: Vec<T>,
    g: Arc<GFn<T>>,
    dg: Arc<DgFn<T>>,
    p: T,
    q: T,
    growth_constant: T,
}

impl<T: Scalar> std::fmt::Debug for NonlinearityModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonlinearityModel")
            .field("name", &self.name)
            .field("k", &self.masses.len())
            .field("masses", &self.masses)
            .field("p", &self.p)
            .field("q", &self.q)
            .finish()
    }
}

impl<T: Scalar> NonlinearityModel<T> {
    pub fn new(
        name: impl Into<String>,
        masses: Vec<T>,
        p: T,
        q: T,
        growth_constant: T,
        g: Arc<GFn<T>>,
        dg: Arc<DgFn<T>>,
    ) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::Parameter("model needs k >= 1 components".into()));
        }
        if masses.iter().any(|&m| !(m > T::zero())) {
            return Err(Error::Parameter("masses must be positive".into()));
        }
        if masses.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Parameter(
                "masses must be sorted ascending (m_1 <= ... <= m_k)".into(),
            ));
        }
        if !(p > T::of(2.0)) || !(q >= p) {
            return Err(Error::Parameter(format!(
                "growth exponents must satisfy 2 < p <= q, got p = {p}, q = {q}"
            )));
        }
        Ok(Self {
            name: name.into(),
            masses,
            g,
            dg,
            p,
            q,
            growth_constant,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn k(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// m = m_1, the smallest mass.
    pub fn mass_min(&self) -> T {
        self.masses[0]
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn growth_constant(&self) -> T {
        self.growth_constant
    }

    pub fn g(&self, z: &[T]) -> T {
        debug_assert_eq!(z.len(), self.k());
        (self.g)(z)
    }

    pub fn dg(&self, z: &[T], out: &mut [T]) {
        debug_assert_eq!(z.len(), self.k());
        debug_assert_eq!(out.len(), self.k());
        (self.dg)(z, out)
    }

    /// F(z) = G(z) + 1/2 sum_j m_j^2 z_j^2, always computed from G so the
    /// defining identity cannot drift.
    pub fn f(&self, z: &[T]) -> T {
        let half = T::of(0.5);
        let mass_term: T = self
            .masses
            .iter()
            .zip(z)
            .map(|(&m, &zj)| half * m * m * zj * zj)
            .sum();
        self.g(z) + mass_term
    }

    /// Evaluates (G, DG, F) at z, erroring on non-finite output.
    pub fn evaluate(&self, z: &[T]) -> Result<(T, Vec<T>, T)> {
        let gv = self.g(z);
        let mut dgv = vec![T::zero(); self.k()];
        self.dg(z, &mut dgv);
        let fv = self.f(z);
        if !gv.is_finite() || !fv.is_finite() || dgv.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelEval {
                z: z.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        Ok((gv, dgv, fv))
    }
}

fn param<T: Scalar>(params: &BTreeMap<String, f64>, key: &str, default: f64) -> T {
    T::of(params.get(key).copied().unwrap_or(default))
}

fn masses_from_params<T: Scalar>(params: &BTreeMap<String, f64>, k: usize) -> Result<Vec<T>> {
    let mut masses = Vec::with_capacity(k);
    for j in 1..=k {
        masses.push(param::<T>(params, &format!("m{j}"), 1.0));
    }
    Ok(masses)
}

fn scalar_quartic_quintic_fns<T: Scalar>() -> (Arc<GFn<T>>, Arc<DgFn<T>>) {
    // G(s) = -|s|^4 + |s|^5, the standard focusing-defocusing scalar example
    let g = Arc::new(|z: &[T]| {
        let s = z[0].abs();
        let s2 = s * s;
        -s2 * s2 + s2 * s2 * s
    });
    let dg = Arc::new(|z: &[T], out: &mut [T]| {
        let s = z[0].abs();
        let sign = if z[0] >= T::zero() { T::one() } else { -T::one() };
        let s3 = s * s * s;
        out[0] = sign * (T::of(5.0) * s3 * s - T::of(4.0) * s3);
    });
    (g, dg)
}

/// Constructs one of the built-in example models.
///
/// Names: `scalar_quartic_quintic`, `coupled_k2`, `coupled_k3`,
/// `uncoupled_sum`. Parameters outside the admissible exponent ranges are
/// rejected with the violated inequality spelled out.
pub fn builtin_model<T: Scalar>(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<NonlinearityModel<T>> {
    match name {
        "scalar_quartic_quintic" => {
            let m = param::<T>(params, "m", 1.0);
            let (g, dg) = scalar_quartic_quintic_fns::<T>();
            NonlinearityModel::new(
                name,
                vec![m],
                T::of(4.0),
                T::of(5.0),
                T::of(9.0),
                g,
                dg,
            )
        }
        "coupled_k2" => {
            // G(z) = -(|z1| |z2|)^p + |z|^q with 1 < p, 2p < q < 5 (n = 3)
            let p = param::<T>(params, "p", 2.0);
            let q = param::<T>(params, "q", 4.5);
            if !(p > T::one()) {
                return Err(Error::Parameter(format!("1 < p violated: p = {p}")));
            }
            if !(T::of(2.0) * p < q) {
                return Err(Error::Parameter(format!(
                    "2p < q violated: p = {p}, q = {q}"
                )));
            }
            if !(q < T::of(5.0)) {
                return Err(Error::Parameter(format!("q < 5 violated: q = {q}")));
            }
            let masses = masses_from_params::<T>(params, 2)?;
            let g = Arc::new(move |z: &[T]| {
                let (a, b) = (z[0].abs(), z[1].abs());
                let norm = (a * a + b * b).sqrt();
                -(a * b).powf(p) + norm.powf(q)
            });
            let dgp = p;
            let dgq = q;
            let dg = Arc::new(move |z: &[T], out: &mut [T]| {
                let (a, b) = (z[0].abs(), z[1].abs());
                let n2 = a * a + b * b;
                let sgn = |x: T| if x >= T::zero() { T::one() } else { -T::one() };
                // d/dz1 |z|^q = q |z|^{q-2} z1
                let outer = if n2 > T::zero() {
                    dgq * n2.powf((dgq - T::of(2.0)) / T::of(2.0))
                } else {
                    T::zero()
                };
                let coupling = |x: T, y: T| {
                    if x == T::zero() {
                        T::zero()
                    } else {
                        dgp * x.powf(dgp - T::one()) * y.powf(dgp)
                    }
                };
                out[0] = -sgn(z[0]) * coupling(a, b) + outer * z[0];
                out[1] = -sgn(z[1]) * coupling(b, a) + outer * z[1];
            });
            // effective lower growth exponent of DG is 2p (coupling term)
            NonlinearityModel::new(name, masses, T::of(2.0) * p, q, T::of(16.0), g, dg)
        }
        "coupled_k3" => {
            // G(z) = -(z1 z2)^p1 - (z2 z3)^p2 - (z1 z3)^p3 - (z1 z2 z3)^p4 + |z|^q
            // with 2 < 2 p_i < q < 5 and 3 < 3 p4 < q (n = 3)
            let ps = [
                param::<T>(params, "p1", 1.5),
                param::<T>(params, "p2", 1.5),
                param::<T>(params, "p3", 1.5),
            ];
            let p4 = param::<T>(params, "p4", 1.2);
            let q = param::<T>(params, "q", 4.5);
            for (i, &pi) in ps.iter().enumerate() {
                if !(T::of(2.0) < T::of(2.0) * pi) {
                    return Err(Error::Parameter(format!(
                        "2 < 2p{} violated: p{} = {pi}",
                        i + 1,
                        i + 1
                    )));
                }
                if !(T::of(2.0) * pi < q) {
                    return Err(Error::Parameter(format!(
                        "2p{} < q violated: p{} = {pi}, q = {q}",
                        i + 1,
                        i + 1
                    )));
                }
            }
            if !(q < T::of(5.0)) {
                return Err(Error::Parameter(format!("q < 5 violated: q = {q}")));
            }
            if !(T::of(3.0) < T::of(3.0) * p4) {
                return Err(Error::Parameter(format!("3 < 3p4 violated: p4 = {p4}")));
            }
            if !(T::of(3.0) * p4 < q) {
                return Err(Error::Parameter(format!(
                    "3p4 < q violated: p4 = {p4}, q = {q}"
                )));
            }
            let masses = masses_from_params::<T>(params, 3)?;
            let g = {
                let ps = ps;
                Arc::new(move |z: &[T]| {
                    let (a, b, c) = (z[0].abs(), z[1].abs(), z[2].abs());
                    let norm2 = a * a + b * b + c * c;
                    -(a * b).powf(ps[0]) - (b * c).powf(ps[1]) - (a * c).powf(ps[2])
                        - (a * b * c).powf(p4)
                        + norm2.powf(q / T::of(2.0))
                })
            };
            let dg = {
                let ps = ps;
                Arc::new(move |z: &[T], out: &mut [T]| {
                    let abs = [z[0].abs(), z[1].abs(), z[2].abs()];
                    let n2 = abs.iter().map(|&x| x * x).sum::<T>();
                    let outer = if n2 > T::zero() {
                        q * n2.powf((q - T::of(2.0)) / T::of(2.0))
                    } else {
                        T::zero()
                    };
                    // d/dx (x y)^p = p x^{p-1} y^p, zero at x = 0 since p > 1
                    let pair = |p: T, x: T, y: T| {
                        if x == T::zero() {
                            T::zero()
                        } else {
                            p * x.powf(p - T::one()) * y.powf(p)
                        }
                    };
                    let triple = |x: T, y: T, w: T| {
                        if x == T::zero() {
                            T::zero()
                        } else {
                            p4 * x.powf(p4 - T::one()) * (y * w).powf(p4)
                        }
                    };
                    let sgn =
                        |x: T| if x >= T::zero() { T::one() } else { -T::one() };
                    out[0] = -sgn(z[0])
                        * (pair(ps[0], abs[0], abs[1])
                            + pair(ps[2], abs[0], abs[2])
                            + triple(abs[0], abs[1], abs[2]))
                        + outer * z[0];
                    out[1] = -sgn(z[1])
                        * (pair(ps[0], abs[1], abs[0])
                            + pair(ps[1], abs[1], abs[2])
                            + triple(abs[1], abs[0], abs[2]))
                        + outer * z[1];
                    out[2] = -sgn(z[2])
                        * (pair(ps[1], abs[2], abs[1])
                            + pair(ps[2], abs[2], abs[0])
                            + triple(abs[2], abs[0], abs[1]))
                        + outer * z[2];
                })
            };
            let p_eff = ps
                .iter()
                .map(|&pi| T::of(2.0) * pi)
                .fold(T::of(3.0) * p4, T::min);
            NonlinearityModel::new(name, masses, p_eff, q, T::of(32.0), g, dg)
        }
        "uncoupled_sum" => {
            // G(z) = G_1(z_1) + ... + G_k(z_k), each the scalar quartic-quintic
            let k = params.get("k").copied().unwrap_or(2.0) as usize;
            if k < 1 {
                return Err(Error::Parameter("k >= 1 required".into()));
            }
            let masses = masses_from_params::<T>(params, k)?;
            let g = Arc::new(move |z: &[T]| {
                z.iter()
                    .map(|&zj| {
                        let s = zj.abs();
                        let s4 = s * s * s * s;
                        -s4 + s4 * s
                    })
                    .sum()
            });
            let dg = Arc::new(|z: &[T], out: &mut [T]| {
                for (o, &zj) in out.iter_mut().zip(z) {
                    let s = zj.abs();
                    let sign = if zj >= T::zero() { T::one() } else { -T::one() };
                    let s3 = s * s * s;
                    *o = sign * (T::of(5.0) * s3 * s - T::of(4.0) * s3);
                }
            });
            NonlinearityModel::new(name, masses, T::of(4.0), T::of(5.0), T::of(9.0), g, dg)
        }
        other => Err(Error::Parameter(format!(
            "unknown builtin model {other:?}; expected one of scalar_quartic_quintic, \
             coupled_k2, coupled_k3, uncoupled_sum"
        ))),
    }
}

/// Search configuration for the alpha and alpha_j estimators.
#[derive(Debug, Clone)]
pub struct AlphaSearch<T: Scalar> {
    /// The compact search box [0, z_cap]^k.
    pub z_cap: T,
    /// Grid points per dimension for the initial scan.
    pub grid_per_dim: usize,
    /// Local refinement stops when the compass step falls below this.
    pub refine_tol: T,
}

impl<T: Scalar> Default for AlphaSearch<T> {
    fn default() -> Self {
        Self {
            z_cap: T::of(10.0),
            grid_per_dim: 64,
            refine_tol: T::of(1e-10),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlphaEstimate<T: Scalar> {
    pub alpha: T,
    pub z_star: Vec<T>,
    /// True when the refined minimizer sits on the search-box boundary,
    /// i.e. the infimum was possibly not captured.
    pub boundary_attained: bool,
}

/// Grid-then-descent minimization of `ratio` over [0, z_cap]^k \ {0}.
fn minimize_ratio<T: Scalar>(
    k: usize,
    search: &AlphaSearch<T>,
    ratio: impl Fn(&[T]) -> Option<T>,
) -> Result<AlphaEstimate<T>> {
    if !(search.z_cap > T::zero()) {
        return Err(Error::Config(format!(
            "alpha search box cap must be positive, got {}",
            search.z_cap
        )));
    }
    if search.grid_per_dim < 2 {
        return Err(Error::Config(
            "alpha search grid must have at least 2 points per dimension".into(),
        ));
    }
    let step = search.z_cap / T::of_usize(search.grid_per_dim);
    let n_points = search
        .grid_per_dim
        .checked_add(1)
        .and_then(|m| m.checked_pow(k as u32))
        .ok_or_else(|| Error::Config("alpha search grid too large".into()))?;

    let mut best_val = T::infinity();
    let mut best_z = vec![T::zero(); k];
    let mut z = vec![T::zero(); k];
    let mut found = false;
    for idx in 0..n_points {
        let mut rest = idx;
        for zj in z.iter_mut() {
            *zj = T::of_usize(rest % (search.grid_per_dim + 1)) * step;
            rest /= search.grid_per_dim + 1;
        }
        if let Some(v) = ratio(&z) {
            if v < best_val {
                best_val = v;
                best_z.copy_from_slice(&z);
                found = true;
            }
        }
    }
    if !found {
        return Err(Error::Config(
            "alpha search grid contained no admissible point (z_cap too small \
             relative to the grid density)"
                .into(),
        ));
    }

    // pattern-search refinement over all directions in {-1,0,1}^k \ {0},
    // projected to the box; axis moves alone stall in diagonal valleys
    let dirs: Vec<Vec<T>> = (1..3usize.pow(k as u32))
        .map(|code| {
            let mut rest = code;
            (0..k)
                .map(|_| {
                    let d = rest % 3;
                    rest /= 3;
                    match d {
                        0 => T::zero(),
                        1 => T::one(),
                        _ => -T::one(),
                    }
                })
                .collect()
        })
        .collect();
    let mut h = step;
    let mut z = best_z.clone();
    while h > search.refine_tol {
        let mut improved = false;
        for dir in &dirs {
            let mut cand = z.clone();
            for (c, &d) in cand.iter_mut().zip(dir) {
                *c = (*c + d * h).max(T::zero()).min(search.z_cap);
            }
            if let Some(v) = ratio(&cand) {
                if v < best_val {
                    best_val = v;
                    z = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            h = h * T::of(0.5);
        }
    }

    let boundary_tol = search.refine_tol * T::of(10.0) + search.z_cap * T::of(1e-12);
    let boundary_attained = z.iter().any(|&zj| (search.z_cap - zj).abs() <= boundary_tol);
    Ok(AlphaEstimate {
        alpha: best_val,
        z_star: z,
        boundary_attained,
    })
}

/// Estimates alpha = inf over the punctured orthant of F(z)/|z|^2.
pub fn estimate_alpha<T: Scalar>(
    model: &NonlinearityModel<T>,
    search: &AlphaSearch<T>,
) -> Result<AlphaEstimate<T>> {
    minimize_ratio(model.k(), search, |z| {
        let n2: T = z.iter().map(|&x| x * x).sum();
        if n2 > T::zero() {
            Some(model.f(z) / n2)
        } else {
            None
        }
    })
}

/// Estimates alpha_j = inf of F(z) / sum_{h != j} z_h^2; undefined for k = 1.
pub fn estimate_alpha_j<T: Scalar>(
    model: &NonlinearityModel<T>,
    j: usize,
    search: &AlphaSearch<T>,
) -> Result<T> {
    if model.k() < 2 {
        return Err(Error::Undefined(
            "alpha_j requires k >= 2 components (vacuous for k = 1)".into(),
        ));
    }
    if j >= model.k() {
        return Err(Error::Parameter(format!(
            "component index {j} out of range for k = {}",
            model.k()
        )));
    }
    let est = minimize_ratio(model.k(), search, |z| {
        let denom: T = z
            .iter()
            .enumerate()
            .filter(|&(h, _)| h != j)
            .map(|(_, &x)| x * x)
            .sum();
        if denom > T::zero() {
            Some(model.f(z) / denom)
        } else {
            None
        }
    })?;
    Ok(est.alpha)
}

/// Sampling configuration for [`check_assumptions`].
#[derive(Debug, Clone)]
pub struct SamplingConfig<T: Scalar> {
    pub samples: usize,
    /// Sampling box [-box_cap, box_cap]^k for the pointwise checks.
    pub box_cap: T,
    pub seed: u64,
    pub alpha_search: AlphaSearch<T>,
}

impl<T: Scalar> Default for SamplingConfig<T> {
    fn default() -> Self {
        Self {
            samples: 10_000,
            box_cap: T::of(3.0),
            seed: 0,
            alpha_search: AlphaSearch::default(),
        }
    }
}

/// Audit verdicts for the structural assumptions, with the estimated
/// constants alpha and alpha_j. Verdicts certify the sampled set only.
#[derive(Debug, Clone)]
pub struct AssumptionReport<T: Scalar> {
    pub alpha: T,
    pub alpha_minimizer: Vec<T>,
    pub alpha_j: Vec<T>,
    /// min_j alpha_j; +infinity when k = 1 (no cross-component constraint).
    pub alpha_star: T,
    pub a0_holds: bool,
    pub a1_holds: bool,
    pub a2_holds: bool,
    pub a3_holds: bool,
    pub a4_holds: bool,
    /// Empirical supremum of |DG(z)| / (|z|^{p-1} + |z|^{q-1}) over samples.
    pub empirical_growth_constant: T,
    /// Worst relative mismatch between DG and finite differences of G.
    pub dg_consistency_error: T,
    /// The alpha minimizer hit the search-box boundary; the (A3) verdict is
    /// then inconclusive rather than a certificate.
    pub boundary_attained: bool,
}

/// Halton low-discrepancy point in [0,1]^k for index i (bases 2,3,5,7,...).
fn halton(i: usize, dim: usize) -> f64 {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    let base = PRIMES[dim % PRIMES.len()];
    let mut f = 1.0;
    let mut r = 0.0;
    let mut n = i + 1;
    while n > 0 {
        f /= base as f64;
        r += f * (n % base) as f64;
        n /= base;
    }
    r
}

/// Runs the full (A0)-(A4) audit: sign symmetry and F >= 0 on quasi-random
/// samples, the empirical growth constant, a finite-difference cross-check
/// of DG, and the alpha / alpha_j estimators.
pub fn check_assumptions<T: Scalar>(
    model: &NonlinearityModel<T>,
    cfg: &SamplingConfig<T>,
) -> Result<AssumptionReport<T>> {
    let k = model.k();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut a0_holds = true;
    let mut a1_holds = model.g(&vec![T::zero(); k]).abs() <= T::of(1e-14);
    let mut a2_holds = true;
    let mut empirical_c = T::zero();
    let mut dg_err = T::zero();

    let mut z = vec![T::zero(); k];
    let mut z_abs = vec![T::zero(); k];
    let mut dgv = vec![T::zero(); k];
    for i in 0..cfg.samples {
        for (d, zj) in z.iter_mut().enumerate() {
            let u = halton(i, d);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            *zj = T::of(sign * u) * cfg.box_cap;
        }
        let norm2: T = z.iter().map(|&x| x * x).sum();
        if norm2 == T::zero() {
            continue;
        }
        let norm = norm2.sqrt();

        // (A0): G invariant under componentwise sign flips
        for (za, &zj) in z_abs.iter_mut().zip(&z) {
            *za = zj.abs();
        }
        let gv = model.g(&z);
        let ga = model.g(&z_abs);
        let scale = T::one().max(gv.abs());
        if (gv - ga).abs() > T::of(1e-12) * scale {
            a0_holds = false;
        }

        // (A1): F >= 0
        let fv = model.f(&z);
        if !(fv >= -T::of(1e-12) * T::one().max(norm2)) || !fv.is_finite() {
            a1_holds = false;
        }

        // (A2): record the empirical growth ratio
        model.dg(&z, &mut dgv);
        let dg_norm = dgv.iter().map(|&x| x * x).sum::<T>().sqrt();
        if !dg_norm.is_finite() {
            a2_holds = false;
        } else {
            let bound = norm.powf(model.p() - T::one()) + norm.powf(model.q() - T::one());
            if bound > T::zero() {
                empirical_c = empirical_c.max(dg_norm / bound);
            }
        }

        // DG vs centered finite differences, at moderate |z|
        if norm >= T::of(0.1) && norm <= T::of(2.0) && i % 37 == 0 {
            let eps = T::of(1e-6) * T::one().max(norm);
            for d in 0..k {
                let orig = z[d];
                z[d] = orig + eps;
                let gp = model.g(&z);
                z[d] = orig - eps;
                let gm = model.g(&z);
                z[d] = orig;
                let fd = (gp - gm) / (T::of(2.0) * eps);
                let denom = T::one().max(dgv.iter().map(|&x| x * x).sum::<T>().sqrt());
                // recompute dgv at this z (it is current from above)
                model.dg(&z, &mut dgv);
                let rel = (fd - dgv[d]).abs() / denom;
                dg_err = dg_err.max(rel);
            }
        }
    }
    if dg_err > T::of(1e-5) {
        a2_holds = false;
    }

    let alpha_est = estimate_alpha(model, &cfg.alpha_search)?;
    let m = model.mass_min();
    let a3_holds = alpha_est.alpha < m * m / T::of(2.0);

    let (alpha_j, alpha_star, a4_holds) = if k >= 2 {
        let mut vals = Vec::with_capacity(k);
        for j in 0..k {
            vals.push(estimate_alpha_j(model, j, &cfg.alpha_search)?);
        }
        let star = vals.iter().copied().fold(T::infinity(), T::min);
        // strict inequality up to estimator noise
        let margin = T::of(1e-6) * (T::one() + alpha_est.alpha);
        let holds = vals.iter().all(|&aj| aj > alpha_est.alpha + margin);
        (vals, star, holds)
    } else {
        (Vec::new(), T::infinity(), true)
    };

    Ok(AssumptionReport {
        alpha: alpha_est.alpha,
        alpha_minimizer: alpha_est.z_star,
        alpha_j,
        alpha_star,
        a0_holds,
        a1_holds,
        a2_holds,
        a3_holds,
        a4_holds,
        empirical_growth_constant: empirical_c,
        dg_consistency_error: dg_err,
        boundary_attained: alpha_est.boundary_attained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model() -> NonlinearityModel<f64> {
        builtin_model("scalar_quartic_quintic", &BTreeMap::new()).unwrap()
    }

    fn coupled_k2() -> NonlinearityModel<f64> {
        builtin_model("coupled_k2", &BTreeMap::new()).unwrap()
    }

    #[test]
    fn evaluate_at_zero() {
        for model in [scalar_model(), coupled_k2()] {
            let z = vec![0.0; model.k()];
            let (g, dg, f) = model.evaluate(&z).unwrap();
            assert_eq!(g, 0.0);
            assert_eq!(f, 0.0);
            assert!(dg.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_f_at_two_thirds() {
        let model = scalar_model();
        let s: f64 = 2.0 / 3.0;
        let (_, _, f) = model.evaluate(&[s]).unwrap();
        // F = 1/2 s^2 - s^4 + s^5; F/s^2 = 1/2 - s^2 + s^3 = 19/54 at s = 2/3
        assert_relative_eq!(f, 0.5 * s * s - s.powi(4) + s.powi(5), epsilon = 1e-15);
        assert_relative_eq!(f / (s * s), 19.0 / 54.0, epsilon = 1e-14);
    }

    #[test]
    fn coupled_k2_closed_form_value() {
        let model = coupled_k2();
        let (g, _, _) = model.evaluate(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(g, -1.0 + 2.0_f64.powf(2.25), epsilon = 1e-14);
    }

    #[test]
    fn coupled_k2_rejects_bad_exponents() {
        let mut params = BTreeMap::new();
        params.insert("q".to_string(), 5.5);
        let err = builtin_model::<f64>("coupled_k2", &params).unwrap_err();
        assert!(err.to_string().contains("q < 5 violated"), "{err}");

        let mut params = BTreeMap::new();
        params.insert("p".to_string(), 2.4);
        let err = builtin_model::<f64>("coupled_k2", &params).unwrap_err();
        assert!(err.to_string().contains("2p < q violated"), "{err}");
    }

    #[test]
    fn uncoupled_sum_is_componentwise() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.0);
        let sum = builtin_model::<f64>("uncoupled_sum", &params).unwrap();
        let scalar = scalar_model();
        for z in [[0.4, 1.3], [-0.7, 0.2], [2.0, -2.0]] {
            let expect = scalar.g(&[z[0]]) + scalar.g(&[z[1]]);
            assert_relative_eq!(sum.g(&z), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn alpha_with_zero_g_is_half_m_min_squared() {
        // G == 0, masses (1, 2): alpha = m^2/2 = 1/2 on the first axis
        let model = NonlinearityModel::<f64>::new(
            "zero",
            vec![1.0, 2.0],
            3.0,
            3.0,
            1.0,
            Arc::new(|_| 0.0),
            Arc::new(|_, out| out.fill(0.0)),
        )
        .unwrap();
        let est = estimate_alpha(&model, &AlphaSearch::default()).unwrap();
        assert_relative_eq!(est.alpha, 0.5, epsilon = 1e-8);
        assert!(est.z_star[1].abs() < 1e-6, "z* = {:?}", est.z_star);
        let report = check_assumptions(&model, &SamplingConfig::default()).unwrap();
        assert!(!report.a3_holds);
    }

    #[test]
    fn scalar_alpha_is_19_over_54() {
        let est = estimate_alpha(&scalar_model(), &AlphaSearch::default()).unwrap();
        assert_relative_eq!(est.alpha, 19.0 / 54.0, epsilon = 1e-9);
        assert_relative_eq!(est.z_star[0], 2.0 / 3.0, epsilon = 1e-5);
        assert!(!est.boundary_attained);
    }

    #[test]
    fn coupled_k2_alpha_interior_below_half() {
        let est = estimate_alpha(&coupled_k2(), &AlphaSearch::default()).unwrap();
        assert!(est.alpha < 0.5, "alpha = {}", est.alpha);
        assert!(est.z_star[0] > 1e-3 && est.z_star[1] > 1e-3, "z* = {:?}", est.z_star);
        assert!(!est.boundary_attained);
    }

    #[test]
    fn alpha_j_for_pure_mass_term() {
        // F = |z|^2/2, j = 0: inf of (z1^2 + z2^2)/(2 z2^2) = 1/2 as z1 -> 0
        let model = NonlinearityModel::<f64>::new(
            "mass-only",
            vec![1.0, 1.0],
            3.0,
            3.0,
            1.0,
            Arc::new(|_| 0.0),
            Arc::new(|_, out| out.fill(0.0)),
        )
        .unwrap();
        let aj = estimate_alpha_j(&model, 0, &AlphaSearch::default()).unwrap();
        assert_relative_eq!(aj, 0.5, epsilon = 1e-8);
    }

    #[test]
    fn alpha_j_undefined_for_scalar() {
        let err = estimate_alpha_j(&scalar_model(), 0, &AlphaSearch::default()).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
    }

    #[test]
    fn uncoupled_fails_a4_coupled_passes() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.0);
        let sum = builtin_model::<f64>("uncoupled_sum", &params).unwrap();
        let report = check_assumptions(&sum, &SamplingConfig::default()).unwrap();
        assert!(report.a0_holds && report.a1_holds && report.a2_holds && report.a3_holds);
        assert!(!report.a4_holds, "alpha = {}, alpha_j = {:?}", report.alpha, report.alpha_j);
        // for identical uncoupled components alpha_j == alpha
        for &aj in &report.alpha_j {
            assert_relative_eq!(aj, report.alpha, epsilon = 1e-6);
        }

        let report2 = check_assumptions(&coupled_k2(), &SamplingConfig::default()).unwrap();
        assert!(report2.a4_holds, "alpha = {}, alpha_j = {:?}", report2.alpha, report2.alpha_j);
        assert!(report2.alpha <= report2.alpha_star);
    }

    #[test]
    fn scalar_audit_passes() {
        let report = check_assumptions(&scalar_model(), &SamplingConfig::default()).unwrap();
        assert!(report.a0_holds);
        assert!(report.a1_holds);
        assert!(report.a2_holds, "dg error {}", report.dg_consistency_error);
        assert!(report.a3_holds);
        assert!(report.a4_holds); // vacuous for k = 1
        assert!(report.dg_consistency_error <= 1e-6);
    }

    #[test]
    fn f_dominates_alpha_quadratic() {
        // F(z) >= alpha |z|^2 on samples, by definition of the infimum
        let model = coupled_k2();
        let est = estimate_alpha(&model, &AlphaSearch::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let z = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let n2 = z[0] * z[0] + z[1] * z[1];
            if n2 == 0.0 {
                continue;
            }
            let f = model.f(&z);
            assert!(
                f >= est.alpha * n2 - 1e-12 * n2.max(1.0),
                "F = {f}, alpha|z|^2 = {}",
                est.alpha * n2
            );
        }
    }
}
