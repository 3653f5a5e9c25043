//! Minimization of the reduced constrained energy by Sobolev-preconditioned
//! gradient descent with a backtracking Armijo line search, multistart, and
//! post-convergence sign normalization.

use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::functionals::{
    self, charges, lambda_ratio, xi, ChargeVector, EnergyBreakdown, FrequencyVector,
};
use crate::grid::{self, FieldState, RadialGrid};
use crate::model::NonlinearityModel;
use crate::scalar::Scalar;
use crate::verify::trial_field;

#[derive(Debug, Clone)]
pub enum InitialGuess<T: Scalar> {
    /// Per-component Gaussian bumps amplitude_j * exp(-(r/width_j)^2).
    GaussianBumps { amplitudes: Vec<T>, widths: Vec<T> },
    /// Plateau of height z_j up to `radius`, then a linear ramp of width 1.
    TrialField { z: Vec<T>, radius: T },
    /// Profile table produced by `grid::write_field_table`.
    FromFile(PathBuf),
    /// An explicit field, already sampled on the target grid.
    Field(FieldState<T>),
}

#[derive(Debug, Clone)]
pub struct SolverConfig<T: Scalar> {
    pub max_iterations: usize,
    /// Stop when every preconditioned residual norm falls below
    /// grad_tolerance * (1 + ||u||_{H^1}).
    pub grad_tolerance: T,
    pub armijo_c: T,
    pub initial_guess: InitialGuess<T>,
    /// Components whose L^2 mass drops below b_floor_factor times its
    /// initial value are treated as degenerate.
    pub b_floor_factor: T,
    pub seed: u64,
    /// Number of seeded multistart runs; the best final energy wins.
    pub restarts: usize,
    /// Descent steps after the componentwise absolute-value normalization.
    pub polish_iterations: usize,
    /// When known, enables the frequency-window verdict
    /// sqrt(2 alpha) < omega_j < m for all j.
    pub alpha: Option<T>,
}

impl<T: Scalar> SolverConfig<T> {
    pub fn new(initial_guess: InitialGuess<T>) -> Self {
        Self {
            max_iterations: 20_000,
            grad_tolerance: T::of(1e-6),
            armijo_c: T::of(1e-4),
            initial_guess,
            b_floor_factor: T::of(1e-8),
            seed: 0,
            restarts: 3,
            polish_iterations: 10,
            alpha: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.grad_tolerance > T::zero()) {
            return Err(Error::Config("grad_tolerance must be positive".into()));
        }
        if !(self.armijo_c > T::zero() && self.armijo_c < T::one()) {
            return Err(Error::Config(format!(
                "armijo_c must lie in (0, 1), got {}",
                self.armijo_c
            )));
        }
        if !(self.b_floor_factor > T::zero()) {
            return Err(Error::Config("b_floor_factor must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TracePoint<T: Scalar> {
    pub iter: usize,
    pub e_red: T,
    pub grad_norm: T,
}

#[derive(Debug, Clone)]
pub struct SolverResult<T: Scalar> {
    pub u_star: FieldState<T>,
    pub omega_star: FrequencyVector<T>,
    pub sigma: ChargeVector<T>,
    pub energy: T,
    pub breakdown: EnergyBreakdown<T>,
    pub lambda: T,
    pub xi: T,
    pub charges: Vec<T>,
    /// Preconditioned (H^{-1}-type) norms of the elliptic-system residual,
    /// per component.
    pub residual_norms: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub positivity: bool,
    /// sqrt(2 alpha) < omega_j < m for all j; None when alpha is unknown.
    pub frequency_window: Option<bool>,
    pub trace: Vec<TracePoint<T>>,
    pub restart_index: usize,
}

fn l2w_inner<T: Scalar>(grid: &RadialGrid<T>, a: &FieldState<T>, b: &FieldState<T>) -> T {
    let mut acc = T::zero();
    for j in 0..a.k() {
        for ((&w, &x), &y) in grid
            .weights()
            .iter()
            .zip(a.component(j))
            .zip(b.component(j))
        {
            acc = acc + w * x * y;
        }
    }
    acc
}

/// H^{-1}-type residual norms: sqrt(<g_j, (I - Lap)^{-1} g_j>) per component.
fn preconditioned_norms<T: Scalar>(
    grid: &RadialGrid<T>,
    g: &FieldState<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(g.k());
    let mut sol = vec![T::zero(); grid.len()];
    for j in 0..g.k() {
        grid.solve_shifted_laplacian(T::one(), g.component(j), &mut sol)?;
        let mut acc = T::zero();
        for ((&w, &gi), &si) in grid.weights().iter().zip(g.component(j)).zip(&sol) {
            acc = acc + w * gi * si;
        }
        out.push(acc.max(T::zero()).sqrt());
    }
    Ok(out)
}

fn h1_total<T: Scalar>(grid: &RadialGrid<T>, u: &FieldState<T>) -> Result<T> {
    let mut acc = T::zero();
    for j in 0..u.k() {
        let mut l2 = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u.component(j)) {
            l2 = l2 + w * v * v;
        }
        acc = acc + l2 + grid.gradient_l2_sq(u.component(j))?;
    }
    Ok(acc.sqrt())
}

/// Builds the configured initial guess on the grid; restart runs beyond the
/// first perturb component amplitudes with seeded random factors.
fn build_initial_guess<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    guess: &InitialGuess<T>,
    restart: usize,
    seed: u64,
) -> Result<FieldState<T>> {
    let k = model.k();
    let mut u = match guess {
        InitialGuess::GaussianBumps { amplitudes, widths } => {
            if amplitudes.len() != k || widths.len() != k {
                return Err(Error::Shape {
                    context: "gaussian bump parameters vs model",
                    expected: k,
                    actual: amplitudes.len().min(widths.len()),
                });
            }
            if widths.iter().any(|&w| !(w > T::zero())) {
                return Err(Error::Parameter("bump widths must be positive".into()));
            }
            FieldState::from_fn(grid, k, |j, r| {
                amplitudes[j] * (-(r / widths[j]).powi(2)).exp()
            })
        }
        InitialGuess::TrialField { z, radius } => {
            if z.len() != k {
                return Err(Error::Shape {
                    context: "trial field z vs model",
                    expected: k,
                    actual: z.len(),
                });
            }
            trial_field(grid, z, *radius)?
        }
        InitialGuess::FromFile(path) => {
            let file = std::fs::File::open(path)?;
            let (radii, field): (Vec<T>, FieldState<T>) =
                grid::read_field_table(std::io::BufReader::new(file))?;
            if field.k() != k || field.n_nodes() != grid.len() {
                return Err(Error::Config(format!(
                    "profile file {path:?} has {} components x {} nodes; \
                     expected {} x {}",
                    field.k(),
                    field.n_nodes(),
                    k,
                    grid.len()
                )));
            }
            let dr = grid.dr();
            for (&a, &b) in radii.iter().zip(grid.nodes()) {
                if (a - b).abs() > dr * T::of(1e-6) {
                    return Err(Error::Config(format!(
                        "profile file {path:?} was sampled on a different grid"
                    )));
                }
            }
            field
        }
        InitialGuess::Field(field) => {
            if field.k() != k || field.n_nodes() != grid.len() {
                return Err(Error::Shape {
                    context: "initial field vs model/grid",
                    expected: k * grid.len(),
                    actual: field.k() * field.n_nodes(),
                });
            }
            field.clone()
        }
    };
    if restart > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9e37_79b9));
        for j in 0..k {
            let factor = T::of(rng.gen_range(0.7..1.4));
            for v in u.component_mut(j) {
                *v = *v * factor;
            }
        }
    }
    Ok(u)
}

struct DescentState<T: Scalar> {
    u: FieldState<T>,
    e_red: T,
    residual_norms: Vec<T>,
    omega: FrequencyVector<T>,
    iterations: usize,
    converged: bool,
    trace: Vec<TracePoint<T>>,
}

fn descend<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    sigma: &ChargeVector<T>,
    cfg: &SolverConfig<T>,
    mut u: FieldState<T>,
    b_floor: T,
    budget: usize,
    trace: &mut Vec<TracePoint<T>>,
    iter_offset: usize,
) -> Result<DescentState<T>> {
    let k = model.k();
    let masses = model.masses().to_vec();
    let shift_floor: Vec<T> = masses.iter().map(|&m| T::of(1e-6) * m * m).collect();
    let mut t_prev = T::one();
    let mut direction = FieldState::zeros(k, grid.len());
    let mut iterations = 0;
    let mut converged = false;

    let mut red = functionals::reduced_energy_and_gradient(model, grid, &u, sigma, b_floor)?;
    loop {
        let res = preconditioned_norms(grid, &red.gradient)?;
        let grad_norm = res.iter().copied().fold(T::zero(), T::max);
        let scale = T::one() + h1_total(grid, &u)?;
        trace.push(TracePoint {
            iter: iter_offset + iterations,
            e_red: red.value,
            grad_norm,
        });
        if grad_norm <= cfg.grad_tolerance * scale {
            converged = true;
        }
        if converged || iterations >= budget {
            return Ok(DescentState {
                u,
                e_red: red.value,
                residual_norms: res,
                omega: red.omega,
                iterations,
                converged,
                trace: Vec::new(),
            });
        }

        for j in 0..k {
            let w = red.omega.as_slice()[j];
            let shift = (masses[j] * masses[j] - w * w).max(shift_floor[j]);
            grid.solve_shifted_laplacian(shift, red.gradient.component(j), direction.component_mut(j))?;
        }
        let slope = l2w_inner(grid, &red.gradient, &direction);
        if !(slope > T::zero()) {
            // numerically flat; cannot certify descent
            return Ok(DescentState {
                u,
                e_red: red.value,
                residual_norms: res,
                omega: red.omega,
                iterations,
                converged: false,
                trace: Vec::new(),
            });
        }

        let mut t = (t_prev * T::of(2.0)).min(T::of(64.0));
        let mut accepted = None;
        while t > T::of(1e-18) {
            let mut cand = u.clone();
            cand.axpy(-t, &direction);
            match functionals::reduced_energy_and_gradient(model, grid, &cand, sigma, b_floor) {
                Ok(next) if next.value <= red.value - cfg.armijo_c * t * slope => {
                    accepted = Some((cand, next));
                    break;
                }
                _ => t = t * T::of(0.5),
            }
        }
        match accepted {
            Some((cand, next)) => {
                u = cand;
                red = next;
                t_prev = t;
                iterations += 1;
            }
            None => {
                // line search exhausted at machine precision
                return Ok(DescentState {
                    u,
                    e_red: red.value,
                    residual_norms: res,
                    omega: red.omega,
                    iterations,
                    converged: false,
                    trace: Vec::new(),
                });
            }
        }
    }
}

/// Runs one full minimization for a single restart index.
fn minimize_once<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    sigma: &ChargeVector<T>,
    cfg: &SolverConfig<T>,
    restart: usize,
) -> Result<DescentState<T>> {
    let u0 = build_initial_guess(model, grid, &cfg.initial_guess, restart, cfg.seed)?;
    // degeneracy floor anchored to the initial component masses
    let mut b_min = T::infinity();
    for j in 0..model.k() {
        let mut bj = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u0.component(j)) {
            bj = bj + w * v * v;
        }
        b_min = b_min.min(bj);
    }
    if !(b_min > T::zero()) {
        return Err(Error::Config(
            "initial guess has a component with zero L^2 mass".into(),
        ));
    }
    let b_floor = cfg.b_floor_factor * b_min;

    let mut trace = Vec::new();
    let main = descend(
        model, grid, sigma, cfg, u0, b_floor, cfg.max_iterations, &mut trace, 0,
    )?;
    // sign normalization per the symmetry assumption, then a short polish
    let normalized = main.u.abs();
    let offset = trace.last().map(|p| p.iter + 1).unwrap_or(0);
    let mut polished = descend(
        model,
        grid,
        sigma,
        cfg,
        normalized,
        b_floor,
        cfg.polish_iterations,
        &mut trace,
        offset,
    )?;
    polished.converged = polished.converged || main.converged;
    polished.iterations += main.iterations;
    polished.trace = trace;
    Ok(polished)
}

/// Minimizes the reduced energy over `restarts` seeded starts and assembles
/// the full result for the best run.
pub fn minimize<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    sigma: &ChargeVector<T>,
    cfg: &SolverConfig<T>,
) -> Result<SolverResult<T>> {
    cfg.validate()?;
    if sigma.k() != model.k() {
        return Err(Error::Shape {
            context: "sigma components vs model",
            expected: model.k(),
            actual: sigma.k(),
        });
    }

    let mut best: Option<(usize, DescentState<T>)> = None;
    let mut last_err = None;
    for restart in 0..cfg.restarts {
        match minimize_once(model, grid, sigma, cfg, restart) {
            Ok(state) => {
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        (state.converged && !b.converged)
                            || (state.converged == b.converged && state.e_red < b.e_red)
                    }
                };
                if better {
                    best = Some((restart, state));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (restart_index, state) = match best {
        Some(b) => b,
        None => return Err(last_err.expect("restarts >= 1")),
    };

    let breakdown = functionals::energy(model, grid, &state.u, &state.omega)?;
    let lambda = lambda_ratio(model, grid, &state.u, &state.omega)?;
    let (xi_val, _) = xi(model, grid, &state.u)?;
    let charge_vals = charges(grid, &state.u, &state.omega)?;
    let positivity = (0..state.u.k()).all(|j| state.u.component(j).iter().all(|&v| v > T::zero()));
    let frequency_window = cfg.alpha.map(|alpha| {
        let lo = (T::of(2.0) * alpha).sqrt();
        let m = model.mass_min();
        state
            .omega
            .as_slice()
            .iter()
            .all(|&w| w > lo && w < m)
    });

    Ok(SolverResult {
        u_star: state.u,
        omega_star: state.omega,
        sigma: sigma.clone(),
        energy: breakdown.total,
        breakdown,
        lambda,
        xi: xi_val,
        charges: charge_vals,
        residual_norms: state.residual_norms,
        iterations: state.iterations,
        converged: state.converged,
        positivity,
        frequency_window,
        trace: state.trace,
        restart_index,
    })
}

/// Per-component quadrature L^2 norms of the elliptic-system left side
/// -Lap u_j + (m_j^2 - omega_j^2) u_j + dG_j(u).
pub fn residual_elliptic<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<Vec<T>> {
    if omega.k() != model.k() {
        return Err(Error::Shape {
            context: "frequency components vs model",
            expected: model.k(),
            actual: omega.k(),
        });
    }
    let residual = residual_field(model, grid, u, omega)?;
    let mut out = Vec::with_capacity(model.k());
    for j in 0..model.k() {
        let mut acc = T::zero();
        for (&w, &v) in grid.weights().iter().zip(residual.component(j)) {
            acc = acc + w * v * v;
        }
        out.push(acc.sqrt());
    }
    Ok(out)
}

/// The pointwise elliptic residual field for given frequencies; identical to
/// the reduced gradient when omega is implied by the charge constraint.
pub fn residual_field<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<FieldState<T>> {
    let k = model.k();
    if u.k() != k || u.n_nodes() != grid.len() {
        return Err(Error::Shape {
            context: "field vs model/grid",
            expected: k * grid.len(),
            actual: u.k() * u.n_nodes(),
        });
    }
    let mut out = FieldState::zeros(k, grid.len());
    let mut z = Vec::with_capacity(k);
    let mut dgv = vec![T::zero(); k];
    for i in 0..grid.len() {
        u.point(i, &mut z);
        model.dg(&z, &mut dgv);
        for j in 0..k {
            let m = model.masses()[j];
            let w = omega.as_slice()[j];
            out.component_mut(j)[i] = (m * m - w * w) * z[j] + dgv[j];
        }
    }
    let mut lap = vec![T::zero(); grid.len()];
    for j in 0..k {
        grid.laplacian_radial(u.component(j), &mut lap)?;
        for (o, &l) in out.component_mut(j).iter_mut().zip(&lap) {
            *o = *o - l;
        }
    }
    Ok(out)
}

/// One row of a charge sweep.
#[derive(Debug, Clone)]
pub struct SweepRow<T: Scalar> {
    pub sigma: ChargeVector<T>,
    pub energy: Option<T>,
    pub lambda: Option<T>,
    pub omega: Option<Vec<T>>,
    pub converged: bool,
    /// Lambda(u*, omega*) < sqrt(2 alpha) + eta; None without (alpha, eta).
    pub in_omega_set: Option<bool>,
    pub frequency_window: Option<bool>,
    pub error: Option<String>,
}

/// Minimizes for every sigma in the set; failures are recorded per row and
/// never abort the sweep.
pub fn sweep<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    sigma_set: &[ChargeVector<T>],
    cfg: &SolverConfig<T>,
    eta: Option<T>,
) -> Result<Vec<SweepRow<T>>> {
    if sigma_set.is_empty() {
        return Err(Error::Config("sweep needs a nonempty sigma set".into()));
    }
    let mut rows = Vec::with_capacity(sigma_set.len());
    for sigma in sigma_set {
        match minimize(model, grid, sigma, cfg) {
            Ok(result) => {
                let in_omega_set = match (cfg.alpha, eta) {
                    (Some(alpha), Some(eta)) => {
                        Some(result.lambda < (T::of(2.0) * alpha).sqrt() + eta)
                    }
                    _ => None,
                };
                rows.push(SweepRow {
                    sigma: sigma.clone(),
                    energy: Some(result.energy),
                    lambda: Some(result.lambda),
                    omega: Some(result.omega_star.as_slice().to_vec()),
                    converged: result.converged,
                    in_omega_set,
                    frequency_window: result.frequency_window,
                    error: None,
                });
            }
            Err(e) => rows.push(SweepRow {
                sigma: sigma.clone(),
                energy: None,
                lambda: None,
                omega: None,
                converged: false,
                in_omega_set: None,
                frequency_window: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

/// The 2k single-component +/- `rel` perturbations of sigma, for probing
/// that nearby charges stay solvable.
pub fn perturbed_charges<T: Scalar>(sigma: &ChargeVector<T>, rel: T) -> Result<Vec<ChargeVector<T>>> {
    let mut out = Vec::with_capacity(2 * sigma.k());
    for j in 0..sigma.k() {
        for &sgn in &[T::one(), -T::one()] {
            let mut s = sigma.as_slice().to_vec();
            s[j] = s[j] * (T::one() + sgn * rel);
            out.push(ChargeVector::new(s)?);
        }
    }
    Ok(out)
}

/// Writes the iteration trace as CSV `iter,E_red,grad_norm`.
pub fn write_trace<T: Scalar, W: Write>(w: &mut W, trace: &[TracePoint<T>]) -> Result<()> {
    writeln!(w, "iter,E_red,grad_norm")?;
    for p in trace {
        writeln!(w, "{},{:.16e},{:.16e}", p.iter, p.e_red, p.grad_norm)?;
    }
    Ok(())
}

/// Structured text report, one `name = value` per line, full precision.
pub fn write_report<T: Scalar, W: Write>(w: &mut W, r: &SolverResult<T>) -> Result<()> {
    let vec_str = |v: &[T]| {
        v.iter()
            .map(|x| format!("{:.16e}", x))
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(w, "converged = {}", r.converged)?;
    writeln!(w, "iterations = {}", r.iterations)?;
    writeln!(w, "restart_index = {}", r.restart_index)?;
    writeln!(w, "sigma = {}", vec_str(r.sigma.as_slice()))?;
    writeln!(w, "omega_star = {}", vec_str(r.omega_star.as_slice()))?;
    writeln!(w, "E = {:.16e}", r.energy)?;
    writeln!(w, "lambda = {:.16e}", r.lambda)?;
    writeln!(w, "xi = {:.16e}", r.xi)?;
    writeln!(w, "charges = {}", vec_str(&r.charges))?;
    writeln!(w, "residual_norms = {}", vec_str(&r.residual_norms))?;
    writeln!(w, "kinetic = {:.16e}", r.breakdown.kinetic)?;
    writeln!(w, "potential_F = {:.16e}", r.breakdown.potential_f)?;
    writeln!(w, "b = {}", vec_str(&r.breakdown.b))?;
    writeln!(w, "positivity = {}", r.positivity)?;
    match r.frequency_window {
        Some(v) => writeln!(w, "frequency_window = {v}")?,
        None => writeln!(w, "frequency_window = unknown")?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn scalar_setup() -> (NonlinearityModel<f64>, RadialGrid<f64>, ChargeVector<f64>) {
        let model = builtin_model("scalar_quartic_quintic", &BTreeMap::new()).unwrap();
        let grid = RadialGrid::new(3, 40.0, 800).unwrap();
        let u_r = trial_field(&grid, &[2.0 / 3.0], 15.0).unwrap();
        let (xi_val, omega) = xi(&model, &grid, &u_r).unwrap();
        assert!(xi_val < 1.0);
        let c = charges(&grid, &u_r, &omega).unwrap();
        (model, grid, ChargeVector::new(c).unwrap())
    }

    fn scalar_config() -> SolverConfig<f64> {
        let mut cfg = SolverConfig::new(InitialGuess::TrialField {
            z: vec![2.0 / 3.0],
            radius: 15.0,
        });
        cfg.alpha = Some(19.0 / 54.0);
        cfg.restarts = 1;
        cfg
    }

    #[test]
    fn scalar_benchmark_converges_in_window() {
        let (model, grid, sigma) = scalar_setup();
        let cfg = scalar_config();
        let result = minimize(&model, &grid, &sigma, &cfg).unwrap();
        assert!(result.converged, "residuals {:?}", result.residual_norms);
        assert!(result.positivity);
        assert_eq!(result.frequency_window, Some(true));
        let w = result.omega_star.as_slice()[0];
        assert!(w > (19.0_f64 / 27.0).sqrt() && w < 1.0, "omega = {w}");
        // the constraint is satisfied identically
        for (c, s) in result.charges.iter().zip(sigma.as_slice()) {
            assert_relative_eq!(c, s, max_relative = 1e-10);
        }
        // the ratio at the constrained frequency dominates its minimum over
        // frequencies, and both sit in the hylomorphy window below the mass
        assert!(result.lambda >= result.xi - 1e-12);
        assert!(result.lambda < 1.0, "lambda = {}", result.lambda);
        assert!(result.xi >= (19.0_f64 / 27.0).sqrt() - 1e-4);
    }

    #[test]
    fn trace_is_monotone() {
        let (model, grid, sigma) = scalar_setup();
        let cfg = scalar_config();
        let result = minimize(&model, &grid, &sigma, &cfg).unwrap();
        for pair in result.trace.windows(2) {
            assert!(
                pair[1].e_red <= pair[0].e_red + 1e-12 * pair[0].e_red.abs(),
                "E_red increased: {} -> {}",
                pair[0].e_red,
                pair[1].e_red
            );
        }
        assert!(result.trace.len() >= 2);
    }

    #[test]
    fn residual_zero_field() {
        let model = builtin_model::<f64>("coupled_k2", &BTreeMap::new()).unwrap();
        let grid = RadialGrid::new(3, 10.0, 200).unwrap();
        let u = FieldState::zeros(2, grid.len());
        let omega = FrequencyVector::new(vec![0.5, 0.5]).unwrap();
        let res = residual_elliptic(&model, &grid, &u, &omega).unwrap();
        assert_eq!(res, vec![0.0, 0.0]);
    }

    #[test]
    fn residual_equals_reduced_gradient_at_implied_omega() {
        let model = builtin_model::<f64>("coupled_k2", &BTreeMap::new()).unwrap();
        let grid = RadialGrid::new(3, 15.0, 300).unwrap();
        let u = FieldState::from_fn(&grid, 2, |j, r| {
            (0.4 + 0.2 * j as f64) * (-(r / 2.5_f64).powi(2)).exp()
        });
        let omega = FrequencyVector::new(vec![0.6, 0.9]).unwrap();
        let sig = ChargeVector::new(charges(&grid, &u, &omega).unwrap()).unwrap();
        let red =
            functionals::reduced_energy_and_gradient(&model, &grid, &u, &sig, 1e-12).unwrap();
        let res = residual_field(&model, &grid, &u, &omega).unwrap();
        for j in 0..2 {
            for (a, b) in red.gradient.component(j).iter().zip(res.component(j)) {
                assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn uncoupled_components_stay_identical() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.0);
        let model = builtin_model::<f64>("uncoupled_sum", &params).unwrap();
        let grid = RadialGrid::new(3, 30.0, 500).unwrap();
        let u_r = trial_field(&grid, &[2.0 / 3.0, 2.0 / 3.0], 10.0).unwrap();
        let (_, omega) = xi(&model, &grid, &u_r).unwrap();
        let sigma = ChargeVector::new(charges(&grid, &u_r, &omega).unwrap()).unwrap();
        let mut cfg = SolverConfig::new(InitialGuess::TrialField {
            z: vec![2.0 / 3.0, 2.0 / 3.0],
            radius: 10.0,
        });
        cfg.restarts = 1;
        let result = minimize(&model, &grid, &sigma, &cfg).unwrap();
        assert!(result.converged);
        let w = result.omega_star.as_slice();
        assert_relative_eq!(w[0], w[1], max_relative = 1e-6);
        let mut num = 0.0;
        let mut den = 0.0_f64;
        for ((&wt, &a), &b) in grid
            .weights()
            .iter()
            .zip(result.u_star.component(0))
            .zip(result.u_star.component(1))
        {
            num += wt * (a - b) * (a - b);
            den += wt * a * a;
        }
        assert!((num / den).sqrt() < 1e-6, "profile mismatch {}", (num / den).sqrt());
    }

    #[test]
    fn perturbed_charges_layout() {
        let sigma = ChargeVector::new(vec![2.0, 4.0]).unwrap();
        let set = perturbed_charges(&sigma, 0.01).unwrap();
        assert_eq!(set.len(), 4);
        assert_relative_eq!(set[0].as_slice()[0], 2.02);
        assert_relative_eq!(set[1].as_slice()[0], 1.98);
        assert_relative_eq!(set[2].as_slice()[1], 4.04);
        assert_relative_eq!(set[3].as_slice()[1], 3.96);
    }

    #[test]
    fn sweep_records_failures_per_row() {
        let (model, grid, sigma) = scalar_setup();
        let mut cfg = scalar_config();
        cfg.max_iterations = 0;
        cfg.polish_iterations = 0;
        // sigma so large every component frequency blows past any minimum:
        // still a recorded row, not an abort
        let huge = ChargeVector::new(vec![1e12]).unwrap();
        let rows = sweep(&model, &grid, &[sigma, huge], &cfg, None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(!rows[0].converged);
        assert!(rows[0].error.is_none());
    }

    #[test]
    fn invalid_config_rejected() {
        let (model, grid, sigma) = scalar_setup();
        let mut cfg = scalar_config();
        cfg.armijo_c = 1.5;
        assert!(minimize(&model, &grid, &sigma, &cfg).is_err());
        let mut cfg = scalar_config();
        cfg.restarts = 0;
        assert!(minimize(&model, &grid, &sigma, &cfg).is_err());
    }
}
