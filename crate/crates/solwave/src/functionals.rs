//! The energy E, charges C_j, the energy/charge ratio and its
//! frequency-optimal value, and the reduced constrained energy obtained by
//! eliminating the frequencies through the charge constraint.

use crate::error::{Error, Result};
use crate::grid::{FieldState, RadialGrid};
use crate::model::NonlinearityModel;
use crate::scalar::Scalar;

/// Nonnegative frequency vector omega in [0, inf)^k.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector<T: Scalar>(Vec<T>);

impl<T: Scalar> FrequencyVector<T> {
    pub fn new(omega: Vec<T>) -> Result<Self> {
        if omega.iter().any(|&w| !(w >= T::zero()) || !w.is_finite()) {
            return Err(Error::Parameter(format!(
                "frequencies must be finite and nonnegative, got {:?}",
                omega.iter().map(|w| w.to_f64_lossy()).collect::<Vec<_>>()
            )));
        }
        Ok(Self(omega))
    }

    pub fn constant(value: T, k: usize) -> Result<Self> {
        Self::new(vec![value; k])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

/// Strictly positive charge constraint vector sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeVector<T: Scalar>(Vec<T>);

impl<T: Scalar> ChargeVector<T> {
    pub fn new(sigma: Vec<T>) -> Result<Self> {
        if sigma.is_empty() || sigma.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::Parameter(format!(
                "charges must be finite and strictly positive, got {:?}",
                sigma.iter().map(|s| s.to_f64_lossy()).collect::<Vec<_>>()
            )));
        }
        Ok(Self(sigma))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> T {
        self.0.iter().copied().sum()
    }
}

/// The energy split into its building blocks: E = a + 1/2 sum omega_j^2 b_j
/// with a = kinetic + potential_F.
#[derive(Debug, Clone)]
pub struct EnergyBreakdown<T: Scalar> {
    pub total: T,
    /// 1/2 ||Du||_{L^2}^2 summed over components.
    pub kinetic: T,
    /// int F(u).
    pub potential_f: T,
    /// a(u) = kinetic + potential_f.
    pub a: T,
    /// b_j(u) = int u_j^2.
    pub b: Vec<T>,
    /// 1/2 sum omega_j^2 b_j.
    pub frequency_term: T,
}

fn check_dims<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
) -> Result<()> {
    if u.k() != model.k() {
        return Err(Error::Shape {
            context: "field components vs model",
            expected: model.k(),
            actual: u.k(),
        });
    }
    if u.n_nodes() != grid.len() {
        return Err(Error::Shape {
            context: "field nodes vs grid",
            expected: grid.len(),
            actual: u.n_nodes(),
        });
    }
    Ok(())
}

/// a(u) = 1/2 int |Du|^2 + int F(u) and b_j(u) = int u_j^2, plus the split
/// (kinetic, potential_F).
pub fn a_and_b<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
) -> Result<(T, Vec<T>, T, T)> {
    check_dims(model, grid, u)?;
    let k = model.k();
    let half = T::of(0.5);

    let mut kinetic = T::zero();
    let mut b = Vec::with_capacity(k);
    for j in 0..k {
        kinetic = kinetic + half * grid.gradient_l2_sq(u.component(j))?;
        let mut bj = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u.component(j)) {
            bj = bj + w * v * v;
        }
        b.push(bj);
    }

    let mut potential_f = T::zero();
    let mut z = Vec::with_capacity(k);
    for (i, &w) in grid.weights().iter().enumerate() {
        u.point(i, &mut z);
        potential_f = potential_f + w * model.f(&z);
    }
    if !potential_f.is_finite() {
        return Err(Error::Domain(
            "non-finite integrand while evaluating int F(u)".into(),
        ));
    }

    Ok((kinetic + potential_f, b, kinetic, potential_f))
}

/// E(u, omega) = a(u) + 1/2 sum_j omega_j^2 b_j(u).
pub fn energy<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<EnergyBreakdown<T>> {
    if omega.k() != model.k() {
        return Err(Error::Shape {
            context: "frequency components vs model",
            expected: model.k(),
            actual: omega.k(),
        });
    }
    let (a, b, kinetic, potential_f) = a_and_b(model, grid, u)?;
    let half = T::of(0.5);
    let frequency_term: T = omega
        .as_slice()
        .iter()
        .zip(&b)
        .map(|(&w, &bj)| half * w * w * bj)
        .sum();
    Ok(EnergyBreakdown {
        total: a + frequency_term,
        kinetic,
        potential_f,
        a,
        b,
        frequency_term,
    })
}

/// E evaluated straight from its defining display,
/// 1/2 sum_j int |Du_j|^2 + (m_j^2 + omega_j^2) u_j^2 + 2 k^{-1} G(u),
/// as an independent code path for cross-checks.
pub fn energy_from_definition<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<T> {
    check_dims(model, grid, u)?;
    let k = model.k();
    let half = T::of(0.5);
    let mut acc = T::zero();
    for j in 0..k {
        let m = model.masses()[j];
        let w = omega.as_slice()[j];
        let mut quad = T::zero();
        for (&wi, &v) in grid.weights().iter().zip(u.component(j)) {
            quad = quad + wi * (m * m + w * w) * v * v;
        }
        acc = acc + half * (grid.gradient_l2_sq(u.component(j))? + quad);
    }
    // sum_j 2 k^{-1} G(u) collapses to 2 G(u)
    let mut z = Vec::with_capacity(k);
    let mut g_int = T::zero();
    for (i, &wi) in grid.weights().iter().enumerate() {
        u.point(i, &mut z);
        g_int = g_int + wi * model.g(&z);
    }
    Ok(acc + g_int)
}

/// C_j(u, omega) = omega_j int u_j^2.
pub fn charges<T: Scalar>(
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<Vec<T>> {
    if omega.k() != u.k() {
        return Err(Error::Shape {
            context: "frequency components vs field",
            expected: u.k(),
            actual: omega.k(),
        });
    }
    let mut out = Vec::with_capacity(u.k());
    for j in 0..u.k() {
        let mut bj = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u.component(j)) {
            bj = bj + w * v * v;
        }
        out.push(omega.as_slice()[j] * bj);
    }
    Ok(out)
}

/// The energy/charge ratio E(u, omega) / sum_j C_j(u, omega).
pub fn lambda_ratio<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<T> {
    let breakdown = energy(model, grid, u, omega)?;
    let denom: T = omega
        .as_slice()
        .iter()
        .zip(&breakdown.b)
        .map(|(&w, &bj)| w * bj)
        .sum();
    if !(denom > T::zero()) {
        return Err(Error::Domain(
            "energy/charge ratio undefined where the total charge vanishes".into(),
        ));
    }
    Ok(breakdown.total / denom)
}

/// The frequency-optimal ratio value xi(u) = sqrt(2 a(u) / sum_j b_j(u)) and
/// the minimizing frequency vector (xi, ..., xi) on the principal diagonal.
pub fn xi<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
) -> Result<(T, FrequencyVector<T>)> {
    let (a, b, _, _) = a_and_b(model, grid, u)?;
    let b_sum: T = b.iter().copied().sum();
    if !(b_sum > T::zero()) {
        return Err(Error::Domain(
            "xi undefined on the zero field (sum b_j = 0)".into(),
        ));
    }
    let value = (T::of(2.0) * a / b_sum).sqrt();
    Ok((value, FrequencyVector::constant(value, model.k())?))
}

/// The reduced constrained energy, its L^2 gradient field, and the implied
/// frequencies.
#[derive(Debug, Clone)]
pub struct ReducedEnergy<T: Scalar> {
    pub value: T,
    pub gradient: FieldState<T>,
    pub omega: FrequencyVector<T>,
    pub breakdown: EnergyBreakdown<T>,
}

/// Eliminates omega through the charge constraint C_j = sigma_j, giving
/// omega_j = sigma_j / b_j(u) and
/// E_red(u) = a(u) + 1/2 sum_j sigma_j^2 / b_j(u).
///
/// The gradient component j is -Lap u_j + m_j^2 u_j + dG_j(u) - omega_j^2 u_j,
/// which vanishes exactly on stationary profiles of the elliptic system.
pub fn reduced_energy_and_gradient<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    sigma: &ChargeVector<T>,
    b_floor: T,
) -> Result<ReducedEnergy<T>> {
    let omega = implied_frequencies(model, grid, u, sigma, b_floor)?;
    let breakdown = energy(model, grid, u, &omega)?;

    let k = model.k();
    let mut gradient = FieldState::zeros(k, grid.len());
    let mut dgv = vec![T::zero(); k];
    let mut z = Vec::with_capacity(k);
    // pointwise part first
    for i in 0..grid.len() {
        u.point(i, &mut z);
        model.dg(&z, &mut dgv);
        for j in 0..k {
            let m = model.masses()[j];
            let w = omega.as_slice()[j];
            gradient.component_mut(j)[i] = (m * m - w * w) * z[j] + dgv[j];
        }
    }
    // subtract the Laplacian
    let mut lap = vec![T::zero(); grid.len()];
    for j in 0..k {
        grid.laplacian_radial(u.component(j), &mut lap)?;
        for (g, &l) in gradient.component_mut(j).iter_mut().zip(&lap) {
            *g = *g - l;
        }
    }
    if !gradient.all_finite() {
        return Err(Error::Domain(
            "non-finite reduced gradient (model evaluation blew up)".into(),
        ));
    }

    Ok(ReducedEnergy {
        value: breakdown.total,
        gradient,
        omega,
        breakdown,
    })
}

/// Just the reduced energy value (cheap path for line searches).
pub fn reduced_energy<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    sigma: &ChargeVector<T>,
    b_floor: T,
) -> Result<T> {
    let omega = implied_frequencies(model, grid, u, sigma, b_floor)?;
    Ok(energy(model, grid, u, &omega)?.total)
}

/// omega_j = sigma_j / b_j(u), erroring when a component's mass b_j falls
/// below the floor.
pub fn implied_frequencies<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    u: &FieldState<T>,
    sigma: &ChargeVector<T>,
    b_floor: T,
) -> Result<FrequencyVector<T>> {
    check_dims(model, grid, u)?;
    if sigma.k() != model.k() {
        return Err(Error::Shape {
            context: "charge components vs model",
            expected: model.k(),
            actual: sigma.k(),
        });
    }
    let mut omega = Vec::with_capacity(model.k());
    for j in 0..model.k() {
        let mut bj = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u.component(j)) {
            bj = bj + w * v * v;
        }
        if !(bj >= b_floor) {
            return Err(Error::DegenerateComponent {
                j,
                b: bj.to_f64_lossy(),
                floor: b_floor.to_f64_lossy(),
            });
        }
        omega.push(sigma.as_slice()[j] / bj);
    }
    FrequencyVector::new(omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin_model;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn setup_k2() -> (NonlinearityModel<f64>, RadialGrid<f64>) {
        let model = builtin_model("coupled_k2", &BTreeMap::new()).unwrap();
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        (model, grid)
    }

    fn random_field(grid: &RadialGrid<f64>, k: usize, seed: u64) -> FieldState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
        let widths: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..4.0)).collect();
        FieldState::from_fn(grid, k, |j, r| amps[j] * (-(r / widths[j]).powi(2)).exp())
    }

    #[test]
    fn zero_field_zero_energy() {
        let (model, grid) = setup_k2();
        let u = FieldState::zeros(2, grid.len());
        let omega = FrequencyVector::new(vec![0.7, 1.3]).unwrap();
        let e = energy(&model, &grid, &u, &omega).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(e.a, 0.0);
    }

    #[test]
    fn charges_componentwise_product() {
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        // scale two bumps so that b = (2, 3)
        let raw = FieldState::from_fn(&grid, 2, |j, r| (-(r / (1.0 + j as f64)).powi(2)).exp());
        let mut comps = Vec::new();
        for (j, target) in [(0usize, 2.0), (1usize, 3.0)] {
            let b: f64 = grid
                .weights()
                .iter()
                .zip(raw.component(j))
                .map(|(&w, &v)| w * v * v)
                .sum();
            comps.push(
                raw.component(j)
                    .iter()
                    .map(|&v| v * (target / b).sqrt())
                    .collect::<Vec<_>>(),
            );
        }
        let u = FieldState::from_components(comps).unwrap();
        let omega = FrequencyVector::new(vec![1.0, 2.0]).unwrap();
        let c = charges(&grid, &u, &omega).unwrap();
        assert_relative_eq!(c[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(c[1], 6.0, max_relative = 1e-12);

        let zero = FrequencyVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(charges(&grid, &u, &zero).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn energy_identity_two_code_paths() {
        let (model, grid) = setup_k2();
        for seed in 0..8 {
            let u = random_field(&grid, 2, seed);
            let omega = FrequencyVector::new(vec![
                0.3 + 0.1 * seed as f64,
                1.1 - 0.05 * seed as f64,
            ])
            .unwrap();
            let split = energy(&model, &grid, &u, &omega).unwrap();
            let direct = energy_from_definition(&model, &grid, &u, &omega).unwrap();
            assert_relative_eq!(split.total, direct, max_relative = 1e-12);
            assert_relative_eq!(
                split.total,
                split.a + split.frequency_term,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn lambda_at_optimal_frequency_equals_xi() {
        let (model, grid) = setup_k2();
        for seed in 0..8 {
            let u = random_field(&grid, 2, 100 + seed);
            let (xi_val, omega_opt) = xi(&model, &grid, &u).unwrap();
            let lam = lambda_ratio(&model, &grid, &u, &omega_opt).unwrap();
            assert_relative_eq!(lam, xi_val, max_relative = 1e-12);
        }
    }

    #[test]
    fn lambda_scalar_closed_form() {
        // k = 1 with a = 1, b = 1, omega = 2: Lambda = (2 + 4)/(2*2) = 1.5
        // realized by checking the display (2a + b w^2)/(2 b w) directly
        let model = builtin_model::<f64>("scalar_quartic_quintic", &BTreeMap::new()).unwrap();
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        let u = random_field(&grid, 1, 5);
        let (a, b, _, _) = a_and_b(&model, &grid, &u).unwrap();
        let w = 2.0;
        let omega = FrequencyVector::new(vec![w]).unwrap();
        let lam = lambda_ratio(&model, &grid, &u, &omega).unwrap();
        assert_relative_eq!(
            lam,
            0.5 * (2.0 * a + b[0] * w * w) / (b[0] * w),
            max_relative = 1e-12
        );
    }

    #[test]
    fn lambda_undefined_on_zero_charge() {
        let (model, grid) = setup_k2();
        let u = random_field(&grid, 2, 9);
        let omega = FrequencyVector::new(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            lambda_ratio(&model, &grid, &u, &omega),
            Err(Error::Domain(_))
        ));
        let zero = FieldState::zeros(2, grid.len());
        assert!(xi(&model, &grid, &zero).is_err());
    }

    #[test]
    fn lambda_grid_argmin_on_diagonal() {
        let (model, grid) = setup_k2();
        let u = random_field(&grid, 2, 42);
        let (xi_val, _) = xi(&model, &grid, &u).unwrap();
        let steps = 60;
        let cap = 3.0;
        let cell = cap / steps as f64;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 1..=steps {
            for j in 1..=steps {
                let w = FrequencyVector::new(vec![i as f64 * cell, j as f64 * cell]).unwrap();
                let lam = lambda_ratio(&model, &grid, &u, &w).unwrap();
                if lam < best.0 {
                    best = (lam, i as f64 * cell, j as f64 * cell);
                }
            }
        }
        assert!((best.1 - best.2).abs() <= cell + 1e-12, "argmin off diagonal: {best:?}");
        assert!((best.1 - xi_val).abs() <= cell + 1e-12, "argmin away from xi: {best:?}");
        assert!(best.0 >= xi_val - 1e-12);
    }

    #[test]
    fn implied_frequencies_ratio() {
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        let model = builtin_model::<f64>("coupled_k2", &BTreeMap::new()).unwrap();
        // scale components so b = (2, 4)
        let raw = random_field(&grid, 2, 3);
        let mut comps = Vec::new();
        for (j, target) in [(0usize, 2.0), (1usize, 4.0)] {
            let b: f64 = grid
                .weights()
                .iter()
                .zip(raw.component(j))
                .map(|(&w, &v)| w * v * v)
                .sum();
            comps.push(
                raw.component(j)
                    .iter()
                    .map(|&v| v * (target / b).sqrt())
                    .collect::<Vec<_>>(),
            );
        }
        let u = FieldState::from_components(comps).unwrap();
        let sigma = ChargeVector::new(vec![1.0, 1.0]).unwrap();
        let omega = implied_frequencies(&model, &grid, &u, &sigma, 1e-8).unwrap();
        assert_relative_eq!(omega.as_slice()[0], 0.5, max_relative = 1e-12);
        assert_relative_eq!(omega.as_slice()[1], 0.25, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_component_detected() {
        let (model, grid) = setup_k2();
        let mut u = random_field(&grid, 2, 11);
        u.component_mut(1).fill(0.0);
        let sigma = ChargeVector::new(vec![1.0, 1.0]).unwrap();
        let err = reduced_energy_and_gradient(&model, &grid, &u, &sigma, 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegenerateComponent { j: 1, .. }));
    }

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let (model, grid) = setup_k2();
        let u = random_field(&grid, 2, 17);
        let sigma = ChargeVector::new(vec![0.5, 0.8]).unwrap();
        let red = reduced_energy_and_gradient(&model, &grid, &u, &sigma, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let aw: f64 = rng.gen_range(0.5..2.0);
            let ph: f64 = rng.gen_range(0.0..3.0);
            let dir = FieldState::from_fn(&grid, 2, |j, r| {
                (-(r / aw).powi(2)).exp() * ((ph + j as f64) + 0.3 * r).cos()
            });
            let eps = 1e-5;
            let mut up = u.clone();
            up.axpy(eps, &dir);
            let mut um = u.clone();
            um.axpy(-eps, &dir);
            let ep = reduced_energy(&model, &grid, &up, &sigma, 1e-12).unwrap();
            let em = reduced_energy(&model, &grid, &um, &sigma, 1e-12).unwrap();
            let fd = (ep - em) / (2.0 * eps);
            let mut inner = 0.0;
            for j in 0..2 {
                for ((&w, &g), &d) in grid
                    .weights()
                    .iter()
                    .zip(red.gradient.component(j))
                    .zip(dir.component(j))
                {
                    inner += w * g * d;
                }
            }
            let denom = fd.abs().max(1.0);
            assert!(
                (fd - inner).abs() / denom <= 1e-6,
                "directional derivative mismatch: fd = {fd}, <g, v> = {inner}"
            );
        }
    }
}
