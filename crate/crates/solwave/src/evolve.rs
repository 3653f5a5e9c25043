//! Time evolution of the complex k-component wave system
//! d_tt phi_j = Lap phi_j - m_j^2 phi_j - dG_j(|phi|) phi_j / |phi_j|
//! by a kick-drift-kick leapfrog, plus the conserved energy and charges used
//! to verify that computed minimizers really are standing waves.

use std::io::Write;

use crate::error::{Error, Result};
use crate::functionals::FrequencyVector;
use crate::grid::{FieldState, RadialGrid};
use crate::model::NonlinearityModel;
use crate::scalar::Scalar;

/// Complex field and its time derivative, stored as real/imaginary parts on
/// the shared radial grid.
#[derive(Debug, Clone)]
pub struct ComplexFieldState<T: Scalar> {
    pub re: FieldState<T>,
    pub im: FieldState<T>,
    pub re_t: FieldState<T>,
    pub im_t: FieldState<T>,
}

impl<T: Scalar> ComplexFieldState<T> {
    pub fn zeros(k: usize, n_nodes: usize) -> Self {
        Self {
            re: FieldState::zeros(k, n_nodes),
            im: FieldState::zeros(k, n_nodes),
            re_t: FieldState::zeros(k, n_nodes),
            im_t: FieldState::zeros(k, n_nodes),
        }
    }

    pub fn k(&self) -> usize {
        self.re.k()
    }

    pub fn n_nodes(&self) -> usize {
        self.re.n_nodes()
    }

    pub fn all_finite(&self) -> bool {
        self.re.all_finite() && self.im.all_finite() && self.re_t.all_finite() && self.im_t.all_finite()
    }

    /// |phi_j| at every node.
    pub fn modulus(&self, j: usize) -> Vec<T> {
        self.re
            .component(j)
            .iter()
            .zip(self.im.component(j))
            .map(|(&a, &b)| (a * a + b * b).sqrt())
            .collect()
    }

    /// arg phi_j at node i.
    pub fn phase(&self, j: usize, i: usize) -> T {
        self.im.component(j)[i].atan2(self.re.component(j)[i])
    }

    /// Time reversal: phi fixed, phi_t negated.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        for j in 0..self.k() {
            for v in out.re_t.component_mut(j) {
                *v = -*v;
            }
            for v in out.im_t.component_mut(j) {
                *v = -*v;
            }
        }
        out
    }
}

/// The standing-wave initial datum phi_j = u_j, d_t phi_j = -i omega_j u_j.
pub fn to_standing_wave<T: Scalar>(
    u: &FieldState<T>,
    omega: &FrequencyVector<T>,
) -> Result<ComplexFieldState<T>> {
    if omega.k() != u.k() {
        return Err(Error::Shape {
            context: "frequency components vs field",
            expected: u.k(),
            actual: omega.k(),
        });
    }
    let mut state = ComplexFieldState::zeros(u.k(), u.n_nodes());
    state.re = u.clone();
    for j in 0..u.k() {
        let w = omega.as_slice()[j];
        for (t, &v) in state.im_t.component_mut(j).iter_mut().zip(u.component(j)) {
            *t = -w * v;
        }
    }
    Ok(state)
}

/// Conserved energy
/// sum_j 1/2 int |d_t phi_j|^2 + |D phi_j|^2 + m_j^2 |phi_j|^2, plus int G(|phi|).
pub fn field_energy<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    s: &ComplexFieldState<T>,
) -> Result<T> {
    check_state(model, grid, s)?;
    let k = model.k();
    let half = T::of(0.5);
    let mut acc = T::zero();
    for j in 0..k {
        let m = model.masses()[j];
        let mut quad = T::zero();
        for (((&w, &a), &b), (&at, &bt)) in grid
            .weights()
            .iter()
            .zip(s.re.component(j))
            .zip(s.im.component(j))
            .zip(s.re_t.component(j).iter().zip(s.im_t.component(j)))
        {
            quad = quad + w * (at * at + bt * bt + m * m * (a * a + b * b));
        }
        acc = acc
            + half
                * (quad
                    + grid.gradient_l2_sq(s.re.component(j))?
                    + grid.gradient_l2_sq(s.im.component(j))?);
    }
    let mut z = vec![T::zero(); k];
    let mut g_int = T::zero();
    for (i, &w) in grid.weights().iter().enumerate() {
        for (j, zj) in z.iter_mut().enumerate() {
            let a = s.re.component(j)[i];
            let b = s.im.component(j)[i];
            *zj = (a * a + b * b).sqrt();
        }
        g_int = g_int + w * model.g(&z);
    }
    Ok(acc + g_int)
}

/// Conserved charges C_j = -Im int conj(phi_j) d_t phi_j.
pub fn field_charges<T: Scalar>(
    grid: &RadialGrid<T>,
    s: &ComplexFieldState<T>,
) -> Result<Vec<T>> {
    if s.n_nodes() != grid.len() {
        return Err(Error::Shape {
            context: "state nodes vs grid",
            expected: grid.len(),
            actual: s.n_nodes(),
        });
    }
    let mut out = Vec::with_capacity(s.k());
    for j in 0..s.k() {
        let mut acc = T::zero();
        for (((&w, &a), &b), (&at, &bt)) in grid
            .weights()
            .iter()
            .zip(s.re.component(j))
            .zip(s.im.component(j))
            .zip(s.re_t.component(j).iter().zip(s.im_t.component(j)))
        {
            // -Im((a - ib)(at + ibt)) = -(a bt - b at)
            acc = acc - w * (a * bt - b * at);
        }
        out.push(acc);
    }
    Ok(out)
}

fn check_state<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    s: &ComplexFieldState<T>,
) -> Result<()> {
    if s.k() != model.k() {
        return Err(Error::Shape {
            context: "state components vs model",
            expected: model.k(),
            actual: s.k(),
        });
    }
    if s.n_nodes() != grid.len() {
        return Err(Error::Shape {
            context: "state nodes vs grid",
            expected: grid.len(),
            actual: s.n_nodes(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct EvolveConfig<T: Scalar> {
    pub dt: T,
    pub t_final: T,
    /// Diagnostics are sampled every `stride` steps (and at start/end).
    pub stride: usize,
    /// Stability limit: require dt <= cfl_limit * dr.
    pub cfl_limit: T,
    /// Abort when the measured energy exceeds this factor of its start value.
    pub instability_factor: T,
}

impl<T: Scalar> EvolveConfig<T> {
    pub fn new(dt: T, t_final: T) -> Self {
        Self {
            dt,
            t_final,
            stride: 16,
            cfl_limit: T::of(0.5),
            instability_factor: T::of(1.1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiagSample<T: Scalar> {
    pub t: T,
    pub energy: T,
    pub charges: Vec<T>,
    pub profile_drift: T,
}

#[derive(Debug, Clone)]
pub struct EvolutionDiagnostics<T: Scalar> {
    pub samples: Vec<DiagSample<T>>,
    pub max_energy_drift: T,
    pub max_charge_drift: T,
    pub max_profile_drift: T,
    /// Step index at which an instability abort triggered, if any.
    pub aborted_at: Option<usize>,
}

/// nonlinear force component evaluated through the modulus, zero below the
/// amplitude floor (the gradient of G vanishes superlinearly at 0)
const MODULUS_FLOOR: f64 = 1e-14;

fn acceleration<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    s: &ComplexFieldState<T>,
    out_re: &mut FieldState<T>,
    out_im: &mut FieldState<T>,
    lap: &mut [T],
) -> Result<()> {
    let k = model.k();
    for j in 0..k {
        grid.laplacian_radial(s.re.component(j), lap)?;
        out_re.component_mut(j).copy_from_slice(lap);
        grid.laplacian_radial(s.im.component(j), lap)?;
        out_im.component_mut(j).copy_from_slice(lap);
    }
    let floor = T::of(MODULUS_FLOOR);
    let mut z = vec![T::zero(); k];
    let mut dgv = vec![T::zero(); k];
    for i in 0..grid.len() {
        for (j, zj) in z.iter_mut().enumerate() {
            let a = s.re.component(j)[i];
            let b = s.im.component(j)[i];
            *zj = (a * a + b * b).sqrt();
        }
        model.dg(&z, &mut dgv);
        for j in 0..k {
            let m = model.masses()[j];
            let a = s.re.component(j)[i];
            let b = s.im.component(j)[i];
            let mut coef = m * m;
            if z[j] >= floor {
                coef = coef + dgv[j] / z[j];
            }
            out_re.component_mut(j)[i] = out_re.component_mut(j)[i] - coef * a;
            out_im.component_mut(j)[i] = out_im.component_mut(j)[i] - coef * b;
        }
    }
    Ok(())
}

/// Leapfrog (kick-drift-kick) integration to t_final with conservation and
/// profile-drift diagnostics. Returns the diagnostics and the final state.
pub fn evolve_nlkg<T: Scalar>(
    model: &NonlinearityModel<T>,
    grid: &RadialGrid<T>,
    initial: &ComplexFieldState<T>,
    cfg: &EvolveConfig<T>,
) -> Result<(EvolutionDiagnostics<T>, ComplexFieldState<T>)> {
    check_state(model, grid, initial)?;
    if !(cfg.dt > T::zero()) || !(cfg.t_final > T::zero()) {
        return Err(Error::Parameter("dt and t_final must be positive".into()));
    }
    if cfg.dt > cfg.cfl_limit * grid.dr() {
        return Err(Error::Parameter(format!(
            "dt = {} exceeds the stability bound {} * dr = {}",
            cfg.dt.to_f64_lossy(),
            cfg.cfl_limit.to_f64_lossy(),
            (cfg.cfl_limit * grid.dr()).to_f64_lossy()
        )));
    }
    let steps_f = (cfg.t_final / cfg.dt).to_f64_lossy();
    let steps = steps_f.round() as usize;
    if steps == 0 || (steps_f - steps as f64).abs() > 1e-6 * steps_f.max(1.0) {
        return Err(Error::Parameter(format!(
            "t_final / dt = {steps_f} is not an integer step count"
        )));
    }

    let k = model.k();
    let mut state = initial.clone();
    let mut acc_re = FieldState::zeros(k, grid.len());
    let mut acc_im = FieldState::zeros(k, grid.len());
    let mut lap = vec![T::zero(); grid.len()];

    let mod0: Vec<Vec<T>> = (0..k).map(|j| state.modulus(j)).collect();
    let mut norm0_sq = T::zero();
    for m in &mod0 {
        for (&w, &v) in grid.weights().iter().zip(m) {
            norm0_sq = norm0_sq + w * v * v;
        }
    }
    let e0 = field_energy(model, grid, &state)?;
    let c0 = field_charges(grid, &state)?;
    let e_scale = T::one().max(e0.abs());

    let mut diag = EvolutionDiagnostics {
        samples: Vec::new(),
        max_energy_drift: T::zero(),
        max_charge_drift: T::zero(),
        max_profile_drift: T::zero(),
        aborted_at: None,
    };
    let record = |state: &ComplexFieldState<T>,
                      t: T,
                      diag: &mut EvolutionDiagnostics<T>|
     -> Result<(T, T)> {
        let e = field_energy(model, grid, state)?;
        let c = field_charges(grid, state)?;
        let mut drift_sq = T::zero();
        for (j, m0) in mod0.iter().enumerate() {
            let m_now = state.modulus(j);
            for ((&w, &a), &b) in grid.weights().iter().zip(&m_now).zip(m0) {
                drift_sq = drift_sq + w * (a - b) * (a - b);
            }
        }
        let profile_drift = if norm0_sq > T::zero() {
            (drift_sq / norm0_sq).sqrt()
        } else {
            T::zero()
        };
        let e_drift = (e - e0).abs() / e_scale;
        let mut c_drift = T::zero();
        for (&cj, &c0j) in c.iter().zip(&c0) {
            c_drift = c_drift.max((cj - c0j).abs() / T::one().max(c0j.abs()));
        }
        diag.max_energy_drift = diag.max_energy_drift.max(e_drift);
        diag.max_charge_drift = diag.max_charge_drift.max(c_drift);
        diag.max_profile_drift = diag.max_profile_drift.max(profile_drift);
        diag.samples.push(DiagSample {
            t,
            energy: e,
            charges: c,
            profile_drift,
        });
        Ok((e, profile_drift))
    };
    record(&state, T::zero(), &mut diag)?;

    let half_dt = T::of(0.5) * cfg.dt;
    acceleration(model, grid, &state, &mut acc_re, &mut acc_im, &mut lap)?;
    for step in 1..=steps {
        // kick
        for j in 0..k {
            for (v, &a) in state.re_t.component_mut(j).iter_mut().zip(acc_re.component(j)) {
                *v = *v + half_dt * a;
            }
            for (v, &a) in state.im_t.component_mut(j).iter_mut().zip(acc_im.component(j)) {
                *v = *v + half_dt * a;
            }
        }
        // drift
        for j in 0..k {
            for (v, &d) in state.re.component_mut(j).iter_mut().zip(state.re_t.component(j)) {
                *v = *v + cfg.dt * d;
            }
            for (v, &d) in state.im.component_mut(j).iter_mut().zip(state.im_t.component(j)) {
                *v = *v + cfg.dt * d;
            }
        }
        // kick
        acceleration(model, grid, &state, &mut acc_re, &mut acc_im, &mut lap)?;
        for j in 0..k {
            for (v, &a) in state.re_t.component_mut(j).iter_mut().zip(acc_re.component(j)) {
                *v = *v + half_dt * a;
            }
            for (v, &a) in state.im_t.component_mut(j).iter_mut().zip(acc_im.component(j)) {
                *v = *v + half_dt * a;
            }
        }

        if step % cfg.stride == 0 || step == steps {
            let t = cfg.dt * T::of_usize(step);
            let (e, _) = record(&state, t, &mut diag)?;
            if !state.all_finite() || e - e0 > (cfg.instability_factor - T::one()) * e_scale {
                diag.aborted_at = Some(step);
                return Ok((diag, state));
            }
        }
    }
    Ok((diag, state))
}

/// Diagnostics CSV `t,E,C_1..C_k,profile_drift`.
pub fn write_evolution_csv<T: Scalar, W: Write>(
    w: &mut W,
    diag: &EvolutionDiagnostics<T>,
) -> Result<()> {
    let k = diag.samples.first().map(|s| s.charges.len()).unwrap_or(0);
    write!(w, "t,E")?;
    for j in 1..=k {
        write!(w, ",C_{j}")?;
    }
    writeln!(w, ",profile_drift")?;
    for s in &diag.samples {
        write!(w, "{:.16e},{:.16e}", s.t, s.energy)?;
        for c in &s.charges {
            write!(w, ",{:.16e}", c)?;
        }
        writeln!(w, ",{:.16e}", s.profile_drift)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{charges, energy};
    use crate::model::builtin_model;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn scalar_model() -> NonlinearityModel<f64> {
        builtin_model("scalar_quartic_quintic", &BTreeMap::new()).unwrap()
    }

    fn bump(grid: &RadialGrid<f64>) -> FieldState<f64> {
        FieldState::from_fn(grid, 1, |_, r| 0.6 * (-(r / 3.0).powi(2)).exp())
    }

    #[test]
    fn standing_wave_matches_static_energy_and_charges() {
        let model = scalar_model();
        let grid = RadialGrid::new(3, 20.0, 800).unwrap();
        let u = bump(&grid);
        let omega = FrequencyVector::new(vec![0.85]).unwrap();
        let state = to_standing_wave(&u, &omega).unwrap();
        let e_dyn = field_energy(&model, &grid, &state).unwrap();
        let e_stat = energy(&model, &grid, &u, &omega).unwrap().total;
        assert_relative_eq!(e_dyn, e_stat, max_relative = 1e-12);
        let c_dyn = field_charges(&grid, &state).unwrap();
        let c_stat = charges(&grid, &u, &omega).unwrap();
        assert_relative_eq!(c_dyn[0], c_stat[0], max_relative = 1e-12);

        let still = to_standing_wave(&u, &FrequencyVector::new(vec![0.0]).unwrap()).unwrap();
        assert!(still.im_t.component(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_data_stays_zero() {
        let model = scalar_model();
        let grid = RadialGrid::new(3, 10.0, 200).unwrap();
        let state = ComplexFieldState::zeros(1, grid.len());
        let cfg = EvolveConfig::new(0.02, 1.0);
        let (diag, final_state) = evolve_nlkg(&model, &grid, &state, &cfg).unwrap();
        assert_eq!(diag.aborted_at, None);
        assert_eq!(diag.max_profile_drift, 0.0);
        assert!(final_state.re.component(0).iter().all(|&v| v == 0.0));
        assert!(final_state.im.component(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conservation_second_order_generic_data() {
        let model = scalar_model();
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        let u = bump(&grid);
        let omega = FrequencyVector::new(vec![0.9]).unwrap();
        let state = to_standing_wave(&u, &omega).unwrap();
        let drift_at = |dt: f64| {
            let cfg = EvolveConfig::new(dt, 4.0);
            let (diag, _) = evolve_nlkg(&model, &grid, &state, &cfg).unwrap();
            assert_eq!(diag.aborted_at, None);
            (diag.max_energy_drift, diag.max_charge_drift)
        };
        let (e1, c1) = drift_at(0.02);
        let (e2, c2) = drift_at(0.01);
        assert!(e1 < 1e-4, "energy drift {e1}");
        assert!(c1 < 1e-4, "charge drift {c1}");
        assert!(e2 < e1 / 3.0, "drift not second order: {e1} -> {e2}");
        // charge drift of the leapfrog can sit at round-off already
        assert!(c2 <= c1 + 1e-12);
    }

    #[test]
    fn time_reversal_returns_profile() {
        let model = scalar_model();
        let grid = RadialGrid::new(3, 20.0, 400).unwrap();
        let u = bump(&grid);
        let omega = FrequencyVector::new(vec![0.9]).unwrap();
        let state = to_standing_wave(&u, &omega).unwrap();
        let cfg = EvolveConfig::new(0.02, 4.0);
        let (diag_fwd, at_t) = evolve_nlkg(&model, &grid, &state, &cfg).unwrap();
        let (_, back) = evolve_nlkg(&model, &grid, &at_t.reversed(), &cfg).unwrap();
        let mut num = 0.0;
        let mut den = 0.0_f64;
        let m0 = state.modulus(0);
        let mb = back.modulus(0);
        for ((&w, &a), &b) in grid.weights().iter().zip(&mb).zip(&m0) {
            num += w * (a - b) * (a - b);
            den += w * b * b;
        }
        let round_trip = (num / den).sqrt();
        assert!(
            round_trip <= 2.0 * diag_fwd.max_profile_drift + 1e-12,
            "round trip {round_trip} vs one-way {}",
            diag_fwd.max_profile_drift
        );
    }

    #[test]
    fn linear_mode_dispersion() {
        // G == 0: mode sin(kappa r)/r rotates at sqrt(m^2 + kappa^2)
        let model = NonlinearityModel::<f64>::new(
            "linear",
            vec![1.0],
            3.0,
            3.0,
            0.0,
            Arc::new(|_| 0.0),
            Arc::new(|_, out| out.fill(0.0)),
        )
        .unwrap();
        let grid = RadialGrid::new(3, 20.0, 800).unwrap();
        let kappa = 3.0 * std::f64::consts::PI / 20.0;
        let u = FieldState::from_fn(&grid, 1, |_, r| (kappa * r).sin() / r);
        let w_exact = (1.0 + kappa * kappa).sqrt();
        let state = to_standing_wave(&u, &FrequencyVector::new(vec![w_exact]).unwrap()).unwrap();
        let cfg = EvolveConfig::new(0.0125, 5.0);
        let (diag, final_state) = evolve_nlkg(&model, &grid, &state, &cfg).unwrap();
        assert_eq!(diag.aborted_at, None);
        // phase advance at a mid-domain node over T = 5
        let node = 200;
        let phase0 = state.phase(0, node);
        let phase1 = final_state.phase(0, node);
        let mut advance = phase0 - phase1; // clockwise rotation
        let two_pi = 2.0 * std::f64::consts::PI;
        while advance < 0.0 {
            advance += two_pi;
        }
        let expect = (w_exact * 5.0) % two_pi;
        let mut diff = (advance - expect).abs();
        diff = diff.min(two_pi - diff);
        assert!(
            diff / (w_exact * 5.0) < 0.01,
            "phase advance {advance} vs expected {expect}"
        );
        assert!(diag.max_profile_drift < 5e-3, "profile drift {}", diag.max_profile_drift);
    }

    #[test]
    fn cfl_and_step_count_validated() {
        let model = scalar_model();
        let grid = RadialGrid::new(3, 10.0, 200).unwrap();
        let state = ComplexFieldState::zeros(1, grid.len());
        assert!(evolve_nlkg(&model, &grid, &state, &EvolveConfig::new(0.5, 1.0)).is_err());
        assert!(evolve_nlkg(&model, &grid, &state, &EvolveConfig::new(0.0151, 1.0)).is_err());
    }
}
