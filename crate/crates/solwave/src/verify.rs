//! Quantitative certificates: trial-field ratio convergence, the coercivity
//! bounds tying low energy/charge ratios to a narrow frequency window, the
//! Pohozaev dilation defect, and minimizer diagnostics.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::{lambda_ratio, xi, FrequencyVector};
use crate::grid::{FieldState, RadialGrid};
use crate::model::{
    check_assumptions, estimate_alpha, estimate_alpha_j, AlphaSearch, AssumptionReport,
    NonlinearityModel, SamplingConfig,
};
use crate::scalar::Scalar;
use crate::solver::SolverResult;

/// Plateau field: u_j = z_j for r <= R, the linear ramp z_j (1 + R - r) on
/// [R, R+1], zero beyond.
pub fn trial_field<T: Scalar>(grid: &RadialGrid<T>, z: &[T], radius: T) -> Result<FieldState<T>> {
    validate_plateau(grid, z, radius, T::one())?;
    Ok(FieldState::from_fn(grid, z.len(), |j, r| {
        if r <= radius {
            z[j]
        } else if r < radius + T::one() {
            z[j] * (T::one() + radius - r)
        } else {
            T::zero()
        }
    }))
}

/// Plateau with a smooth cosine ramp of width `ramp`: much lower gradient
/// cost than the width-1 ramp, used to generate low-ratio audit samples.
pub fn smooth_plateau<T: Scalar>(
    grid: &RadialGrid<T>,
    z: &[T],
    radius: T,
    ramp: T,
) -> Result<FieldState<T>> {
    validate_plateau(grid, z, radius, ramp)?;
    let pi = T::of(std::f64::consts::PI);
    let half = T::of(0.5);
    Ok(FieldState::from_fn(grid, z.len(), |j, r| {
        if r <= radius {
            z[j]
        } else if r < radius + ramp {
            z[j] * half * (T::one() + (pi * (r - radius) / ramp).cos())
        } else {
            T::zero()
        }
    }))
}

fn validate_plateau<T: Scalar>(grid: &RadialGrid<T>, z: &[T], radius: T, ramp: T) -> Result<()> {
    if z.is_empty() || z.iter().any(|&v| !(v >= T::zero())) || z.iter().all(|&v| v == T::zero()) {
        return Err(Error::Parameter(
            "plateau height z must be componentwise nonnegative and not all zero".into(),
        ));
    }
    if !(radius > T::zero()) || !(ramp > T::zero()) {
        return Err(Error::Parameter("plateau radius and ramp must be positive".into()));
    }
    if radius + ramp > grid.r_max() {
        return Err(Error::Domain(format!(
            "plateau support {} exceeds the domain radius {}; enlarge r_max",
            (radius + ramp).to_f64_lossy(),
            grid.r_max().to_f64_lossy()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct HylomorphyRow<T: Scalar> {
    pub radius: T,
    pub xi: T,
    pub xi_squared: T,
}

#[derive(Debug, Clone)]
pub struct HylomorphyTable<T: Scalar> {
    pub rows: Vec<HylomorphyRow<T>>,
    /// Richardson extrapolation of xi^2 from the two largest radii under the
    /// surface-to-volume error model xi^2(R) = limit + c/R.
    pub limit_estimate: T,
}

/// xi(u_R)^2 for each plateau radius, decreasing toward 2 F(z)/|z|^2.
pub fn hylomorphy_table<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    z: &[T],
    radii: &[T],
) -> Result<HylomorphyTable<T>> {
    if radii.len() < 2 {
        return Err(Error::Parameter(
            "hylomorphy table needs at least two radii for the limit estimate".into(),
        ));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
    let mut rows = Vec::with_capacity(sorted.len());
    for &radius in &sorted {
        let u = trial_field(grid, z, radius)?;
        let (x, _) = xi(model, grid, &u)?;
        rows.push(HylomorphyRow {
            radius,
            xi: x,
            xi_squared: x * x,
        });
    }
    let a = &rows[rows.len() - 2];
    let b = &rows[rows.len() - 1];
    let limit_estimate =
        (b.xi_squared * b.radius - a.xi_squared * a.radius) / (b.radius - a.radius);
    Ok(HylomorphyTable {
        rows,
        limit_estimate,
    })
}

pub fn write_hylomorphy_csv<T: Scalar, W: Write>(
    w: &mut W,
    table: &HylomorphyTable<T>,
) -> Result<()> {
    writeln!(w, "R,xi_squared")?;
    for row in &table.rows {
        writeln!(w, "{:.16e},{:.16e}", row.radius, row.xi_squared)?;
    }
    Ok(())
}

/// delta_0 = 2 alpha_* / (sqrt(2 alpha) + eta)^2 - 1; positive exactly when
/// eta < sqrt(2 alpha_*) - sqrt(2 alpha).
pub fn delta_0<T: Scalar>(alpha: T, alpha_star: T, eta: T) -> T {
    let s = (T::of(2.0) * alpha).sqrt() + eta;
    T::of(2.0) * alpha_star / (s * s) - T::one()
}

/// C_0 = (sqrt(2 alpha) + eta)(1 - delta_0)/delta_0.
pub fn c_0<T: Scalar>(alpha: T, eta: T, delta0: T) -> T {
    ((T::of(2.0) * alpha).sqrt() + eta) * (T::one() - delta0) / delta0
}

/// Frequency deviation bound for k = 1:
/// |omega - sqrt(2 alpha)| < sqrt(eta) (sqrt(eta) + 2 (sqrt(2 alpha) + eta)^{1/2}).
pub fn deviation_bound_k1<T: Scalar>(alpha: T, eta: T) -> T {
    let s = (T::of(2.0) * alpha).sqrt() + eta;
    eta.sqrt() * (eta.sqrt() + T::of(2.0) * s.sqrt())
}

/// Frequency deviation bound for k >= 2:
/// sqrt(eta) (sqrt(eta) + (1-d0)/d0 * (2 (sqrt(2 alpha)+eta)(sqrt(k)+1))^{1/2}).
pub fn deviation_bound_k<T: Scalar>(alpha: T, eta: T, delta0: T, k: usize) -> T {
    let s = (T::of(2.0) * alpha).sqrt() + eta;
    let root = (T::of(2.0) * s * (T::of_usize(k).sqrt() + T::one())).sqrt();
    eta.sqrt() * (eta.sqrt() + (T::one() - delta0) / delta0 * root)
}

/// Largest eta whose deviation bound stays at or below
/// (m - sqrt(2 alpha))/2, additionally capped for k >= 2 by
/// eta < sqrt(2 alpha_*) - sqrt(2 alpha). Found by bisection; both caps are
/// monotone in eta.
pub fn default_eta<T: Scalar>(alpha: T, alpha_star: T, mass_min: T, k: usize) -> Result<T> {
    let root2a = (T::of(2.0) * alpha).sqrt();
    if !(root2a < mass_min) {
        return Err(Error::Parameter(format!(
            "sqrt(2 alpha) = {} is not below m = {}; the quadratic-coefficient \
             condition fails and no admissible eta exists",
            root2a.to_f64_lossy(),
            mass_min.to_f64_lossy()
        )));
    }
    let target = T::of(0.5) * (mass_min - root2a);
    let bound = |eta: T| -> Option<T> {
        if k >= 2 {
            let d0 = delta_0(alpha, alpha_star, eta);
            if !(d0 > T::zero()) {
                return None;
            }
            Some(deviation_bound_k(alpha, eta, d0, k))
        } else {
            Some(deviation_bound_k1(alpha, eta))
        }
    };

    let mut hi = if k >= 2 {
        let cap = (T::of(2.0) * alpha_star).sqrt() - root2a;
        if !(cap > T::zero()) {
            return Err(Error::Parameter(format!(
                "sqrt(2 alpha_*) - sqrt(2 alpha) = {} <= 0; no eta satisfies the \
                 cross-component separation bound",
                cap.to_f64_lossy()
            )));
        }
        cap * (T::one() - T::of(1e-9))
    } else {
        let mut h = T::one();
        while bound(h).map(|b| b < target).unwrap_or(false) {
            h = h * T::of(2.0);
        }
        h
    };
    match bound(hi) {
        Some(b) if b <= target => return Ok(hi),
        _ => {}
    }
    let mut lo = T::zero();
    for _ in 0..200 {
        let mid = T::of(0.5) * (lo + hi);
        match bound(mid) {
            Some(b) if b <= target => lo = mid,
            _ => hi = mid,
        }
    }
    if !(lo > T::zero()) {
        return Err(Error::Parameter(
            "bisection found no positive eta below the deviation-bound cap".into(),
        ));
    }
    Ok(lo)
}

/// Sampling plan for [`coercivity_audit`]. Radii and ramp widths are
/// fractions of r_max so one default scales across domains.
#[derive(Debug, Clone)]
pub struct CoercivitySampleConfig<T: Scalar> {
    pub samples: usize,
    pub seed: u64,
    /// Plateau radius range as fractions of r_max for the biased samples.
    pub radius_fraction: (T, T),
    /// Cosine ramp width as a fraction of r_max.
    pub ramp_fraction: T,
    /// Relative jitter applied to the plateau heights around the ratio
    /// minimizer z*.
    pub amplitude_jitter: T,
    /// Relative jitter of the sampled frequencies around xi(u).
    pub frequency_jitter: T,
    /// Fraction of samples biased toward low ratios; the rest are Gaussian
    /// bumps with frequencies uniform in (0, omega_cap].
    pub biased_fraction: f64,
    pub alpha_search: AlphaSearch<T>,
}

impl<T: Scalar> Default for CoercivitySampleConfig<T> {
    fn default() -> Self {
        Self {
            samples: 300,
            seed: 0,
            radius_fraction: (T::of(0.55), T::of(0.85)),
            ramp_fraction: T::of(0.005),
            amplitude_jitter: T::of(0.01),
            frequency_jitter: T::of(0.01),
            biased_fraction: 0.7,
            alpha_search: AlphaSearch::default(),
        }
    }
}

/// Outcome of the sampling audit of the coercivity bounds.
#[derive(Debug, Clone)]
pub struct CoercivityAudit<T: Scalar> {
    pub eta: T,
    pub alpha: T,
    pub alpha_star: T,
    pub delta_0: T,
    pub c_0: T,
    pub samples_tested: usize,
    /// Samples with Lambda(u, omega) < sqrt(2 alpha) + eta; only these are
    /// subject to the bound assertions.
    pub samples_below_threshold: usize,
    pub violations: usize,
    /// Smallest slack (bound minus attained value) over all asserted
    /// inequalities on qualifying samples; +inf when none qualified.
    pub worst_margin: T,
    /// One line per violated bound, naming the bound and the sample index.
    pub violation_log: Vec<String>,
}

/// Draws random fields and frequencies and asserts, for every sample whose
/// ratio falls below sqrt(2 alpha) + eta:
/// the component mass-fraction window (k >= 2), the frequency upper bound,
/// and the frequency deviation bound. The sampler mixes low-ratio plateau
/// fields (so the conditional bounds are exercised) with unbiased Gaussian
/// bumps.
pub fn coercivity_audit<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    cfg: &CoercivitySampleConfig<T>,
    eta: T,
) -> Result<CoercivityAudit<T>> {
    if !(eta > T::zero()) {
        return Err(Error::Parameter(format!("eta must be positive, got {eta}")));
    }
    let k = model.k();
    let alpha_est = estimate_alpha(model, &cfg.alpha_search)?;
    let alpha = alpha_est.alpha;
    let z_star = alpha_est.z_star.clone();
    let alpha_star = if k >= 2 {
        let mut star = T::infinity();
        for j in 0..k {
            star = star.min(estimate_alpha_j(model, j, &cfg.alpha_search)?);
        }
        star
    } else {
        T::infinity()
    };
    let root2a = (T::of(2.0) * alpha).sqrt();
    let (d0, c0) = if k >= 2 {
        let cap = (T::of(2.0) * alpha_star).sqrt() - root2a;
        if !(eta < cap) {
            return Err(Error::Parameter(format!(
                "eta = {} violates the separation bound eta < sqrt(2 alpha_*) - \
                 sqrt(2 alpha) = {}",
                eta.to_f64_lossy(),
                cap.to_f64_lossy()
            )));
        }
        let d0 = delta_0(alpha, alpha_star, eta);
        (d0, c_0(alpha, eta, d0))
    } else {
        (T::nan(), T::nan())
    };
    let omega_cap = if k >= 2 {
        T::of(2.0) * c0 * (T::one() + T::of_usize(k).sqrt())
    } else {
        T::of(4.0) * (root2a + eta)
    };
    let threshold = root2a + eta;
    let dev_bound = if k >= 2 {
        deviation_bound_k(alpha, eta, d0, k)
    } else {
        deviation_bound_k1(alpha, eta)
    };
    let om_bound = if k >= 2 {
        c0 * (T::one() + T::of_usize(k).sqrt())
    } else {
        T::of(2.0) * threshold
    };

    let (r_lo, r_hi) = (
        cfg.radius_fraction.0 * grid.r_max(),
        cfg.radius_fraction.1 * grid.r_max(),
    );
    let ramp = cfg.ramp_fraction * grid.r_max();
    let biased_count = (cfg.samples as f64 * cfg.biased_fraction).round() as usize;

    let mut audit = CoercivityAudit {
        eta,
        alpha,
        alpha_star,
        delta_0: d0,
        c_0: c0,
        samples_tested: 0,
        samples_below_threshold: 0,
        violations: 0,
        worst_margin: T::infinity(),
        violation_log: Vec::new(),
    };
    let mut z = vec![T::zero(); k];
    let mut w = vec![T::zero(); k];
    for i in 0..cfg.samples {
        // per-sample generator keyed by the index: deterministic regardless
        // of evaluation order
        let mut rng =
            ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
        let (u, omega) = if i < biased_count {
            let radius = T::of(rng.gen_range(r_lo.to_f64_lossy()..r_hi.to_f64_lossy()));
            for (zi, &zs) in z.iter_mut().zip(&z_star) {
                let jit = T::of(rng.gen_range(-1.0..1.0)) * cfg.amplitude_jitter;
                *zi = zs * (T::one() + jit);
            }
            let u = smooth_plateau(grid, &z, radius, ramp)?;
            let (x, _) = xi(model, grid, &u)?;
            for wi in w.iter_mut() {
                let jit = T::of(rng.gen_range(-1.0..1.0)) * cfg.frequency_jitter;
                *wi = x * (T::one() + jit);
            }
            (u, FrequencyVector::new(w.clone())?)
        } else {
            let amps: Vec<T> = z_star
                .iter()
                .map(|&zs| {
                    let base = if zs > T::zero() { zs } else { T::one() };
                    base * T::of(rng.gen_range(0.2..2.0))
                })
                .collect();
            let widths: Vec<T> = (0..k)
                .map(|_| grid.r_max() * T::of(rng.gen_range(0.05..0.3)))
                .collect();
            let u = FieldState::from_fn(grid, k, |j, r| {
                amps[j] * (-(r / widths[j]).powi(2)).exp()
            });
            for wi in w.iter_mut() {
                *wi = omega_cap * T::of(rng.gen_range(1e-3..1.0));
            }
            (u, FrequencyVector::new(w.clone())?)
        };

        audit.samples_tested += 1;
        let lambda = lambda_ratio(model, grid, &u, &omega)?;
        let (xi_val, _) = xi(model, grid, &u)?;

        // ratio ordering holds unconditionally, up to quadrature error
        let quad_tol = T::of(1e-4);
        if lambda < xi_val - quad_tol * (T::one() + xi_val) {
            audit.violations += 1;
            audit
                .violation_log
                .push(format!("ratio ordering violated at sample {i}"));
        }
        if xi_val < root2a - quad_tol * (T::one() + root2a) {
            audit.violations += 1;
            audit
                .violation_log
                .push(format!("ratio lower bound violated at sample {i}"));
        }

        if !(lambda < threshold) {
            continue;
        }
        audit.samples_below_threshold += 1;
        let mut note = |margin: T, what: &str| {
            audit.worst_margin = audit.worst_margin.min(margin);
            if !(margin > T::zero()) {
                audit.violations += 1;
                audit.violation_log.push(format!("{what} at sample {i}"));
            }
        };
        if k >= 2 {
            // component mass fractions
            let mut b_sum = T::zero();
            let mut b = vec![T::zero(); k];
            for (j, bj) in b.iter_mut().enumerate() {
                for (&wt, &v) in grid.weights().iter().zip(u.component(j)) {
                    *bj = *bj + wt * v * v;
                }
                b_sum = b_sum + *bj;
            }
            for (j, &bj) in b.iter().enumerate() {
                let frac = bj / b_sum;
                note(frac - d0, &format!("mass-fraction lower bound (component {j}) violated"));
                note(
                    T::one() - d0 - frac,
                    &format!("mass-fraction upper bound (component {j}) violated"),
                );
            }
        }
        for (j, &wj) in omega.as_slice().iter().enumerate() {
            note(
                om_bound - wj,
                &format!("frequency upper bound (component {j}) violated"),
            );
            note(
                dev_bound - (wj - root2a).abs(),
                &format!("frequency deviation bound (component {j}) violated"),
            );
        }
    }
    Ok(audit)
}

pub fn write_audit_report<T: Scalar, W: Write>(
    w: &mut W,
    audit: &CoercivityAudit<T>,
) -> Result<()> {
    writeln!(w, "eta = {:.16e}", audit.eta)?;
    writeln!(w, "alpha = {:.16e}", audit.alpha)?;
    writeln!(w, "alpha_star = {:.16e}", audit.alpha_star)?;
    writeln!(w, "delta_0 = {:.16e}", audit.delta_0)?;
    writeln!(w, "C_0 = {:.16e}", audit.c_0)?;
    writeln!(w, "samples_tested = {}", audit.samples_tested)?;
    writeln!(w, "samples_below_threshold = {}", audit.samples_below_threshold)?;
    writeln!(w, "violations = {}", audit.violations)?;
    writeln!(w, "worst_margin = {:.16e}", audit.worst_margin)?;
    for line in &audit.violation_log {
        writeln!(w, "violation: {line}")?;
    }
    Ok(())
}

/// The dilation defect
/// (n-2)/2 ||Du||^2 + n int (F(u) - 1/2 sum_j omega_j^2 u_j^2),
/// zero on stationary profiles.
pub fn pohozaev_defect<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<T> {
    let k = model.k();
    if u.k() != k || omega.k() != k {
        return Err(Error::Shape {
            context: "field/frequency components vs model",
            expected: k,
            actual: u.k().min(omega.k()),
        });
    }
    let n = T::of_usize(grid.dimension());
    let half = T::of(0.5);
    let mut grad = T::zero();
    for j in 0..k {
        grad = grad + grid.gradient_l2_sq(u.component(j))?;
    }
    let mut integral = T::zero();
    let mut z = Vec::with_capacity(k);
    for (i, &wt) in grid.weights().iter().enumerate() {
        u.point(i, &mut z);
        let mut val = model.f(&z);
        for (j, &wj) in omega.as_slice().iter().enumerate() {
            val = val - half * wj * wj * z[j] * z[j];
        }
        integral = integral + wt * val;
    }
    Ok((n - T::of(2.0)) * half * grad + n * integral)
}

/// Resamples u(r / lambda) onto the grid by linear interpolation (even
/// extension at the origin, zero beyond r_max).
pub fn dilate<T: Scalar>(
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    lambda: T,
) -> Result<FieldState<T>> {
    if u.n_nodes() != grid.len() {
        return Err(Error::Shape {
            context: "dilate field vs grid",
            expected: grid.len(),
            actual: u.n_nodes(),
        });
    }
    if !(lambda > T::zero()) {
        return Err(Error::Parameter(format!(
            "dilation factor must be positive, got {lambda}"
        )));
    }
    let dr = grid.dr();
    let half = T::of(0.5);
    let n_nodes = grid.len();
    Ok(FieldState::from_fn(grid, u.k(), |j, r| {
        let comp = u.component(j);
        let s = r / lambda;
        // fractional node index of s: nodes at (i + 1/2) dr
        let x = s / dr - half;
        if x <= T::zero() {
            comp[0]
        } else {
            let i = x.floor().to_f64_lossy() as usize;
            if i + 1 >= n_nodes {
                T::zero()
            } else {
                let frac = x - T::of_usize(i);
                comp[i] * (T::one() - frac) + comp[i + 1] * frac
            }
        }
    }))
}

/// Finite-difference dilation oracle for the Pohozaev defect: the centered
/// derivative of the action a(u_l) - 1/2 sum_j omega_j^2 b_j(u_l) at l = 1
/// with u_l = u(x / l).
pub fn fd_dilation_defect<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
    eps: T,
) -> Result<T> {
    let action = |field: &FieldState<T>| -> Result<T> {
        let (a, b, _, _) = crate::functionals::a_and_b(model, grid, field)?;
        let half = T::of(0.5);
        let mut val = a;
        for (&wj, &bj) in omega.as_slice().iter().zip(&b) {
            val = val - half * wj * wj * bj;
        }
        Ok(val)
    };
    let up = dilate(grid, u, T::one() + eps)?;
    let um = dilate(grid, u, T::one() - eps)?;
    Ok((action(&up)? - action(&um)?) / (T::of(2.0) * eps))
}

/// Pass/fail certificates for a converged minimizer, with their margins.
#[derive(Debug, Clone)]
pub struct MinimizerDiagnostics<T: Scalar> {
    pub positivity: bool,
    /// sqrt(2 alpha) < omega_j < m (the smallest mass) for every j.
    pub frequency_window: bool,
    /// Per component: sqrt(2 alpha) < omega_j < m_j. For uncoupled models
    /// the global window against m = m_1 can fail while these hold.
    pub per_component_window: Vec<bool>,
    /// Lambda(u*, omega*) < sqrt(2 alpha) + eta.
    pub lambda_below_threshold: bool,
    /// xi(u*) >= sqrt(2 alpha) up to quadrature error.
    pub xi_at_least_floor: bool,
    pub lambda_margin: T,
    pub xi_margin: T,
    pub frequency_margins: Vec<T>,
}

pub fn minimizer_diagnostics<T: Scalar>(
    model: &NonlinearityModel<T>,
    result: &SolverResult<T>,
    report: &AssumptionReport<T>,
    eta: T,
) -> Result<MinimizerDiagnostics<T>> {
    if !result.converged {
        return Err(Error::Parameter(
            "diagnostics require a converged solver result".into(),
        ));
    }
    let root2a = (T::of(2.0) * report.alpha).sqrt();
    let m = model.mass_min();
    let omega = result.omega_star.as_slice();
    let frequency_window = omega.iter().all(|&w| w > root2a && w < m);
    let per_component_window = omega
        .iter()
        .zip(model.masses())
        .map(|(&w, &mj)| w > root2a && w < mj)
        .collect();
    let frequency_margins = omega
        .iter()
        .zip(model.masses())
        .map(|(&w, &mj)| (w - root2a).min(mj - w))
        .collect();
    let lambda_margin = root2a + eta - result.lambda;
    let quad_tol = T::of(1e-4);
    let xi_margin = result.xi - root2a;
    Ok(MinimizerDiagnostics {
        positivity: result.positivity,
        frequency_window,
        per_component_window,
        lambda_below_threshold: lambda_margin > T::zero(),
        xi_at_least_floor: xi_margin > -quad_tol * (T::one() + root2a),
        lambda_margin,
        xi_margin,
        frequency_margins,
    })
}

/// Convenience: run the assumption audit and derive the default eta for the
/// model in one step.
pub fn audit_and_default_eta<T: Scalar>(
    model: &NonlinearityModel<T>,
    sampling: &SamplingConfig<T>,
) -> Result<(AssumptionReport<T>, T)> {
    let report = check_assumptions(model, sampling)?;
    let eta = default_eta(report.alpha, report.alpha_star, model.mass_min(), model.k())?;
    Ok((report, eta))
}
