//! Radial discretization of R^n: half-offset uniform nodes, midpoint
//! quadrature for integrals of radial functions, a conservative second-order
//! radial Laplacian, and norm computations.
//!
//! Nodes sit at r_i = (i + 1/2) dr with dr = r_max / N, so r = 0 is never a
//! node and the 1/r singularity of the radial Laplacian never appears.
//! Boundary conditions: u'(0) = 0 (radial regularity, built into the zero
//! flux through the r = 0 face) and u(r_max) = 0 (domain truncation).

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::{unit_sphere_area, Scalar};

#[derive(Debug, Clone)]
pub struct RadialGrid<T: Scalar> {
    n: usize,
    r_max: T,
    dr: T,
    nodes: Vec<T>,
    weights: Vec<T>,
    /// Face factors s_{n-1} (i dr)^{n-1} for i = 0..=N; face i separates
    /// node i-1 from node i, face N touches the Dirichlet boundary.
    faces: Vec<T>,
    sphere_area: T,
}

impl<T: Scalar> RadialGrid<T> {
    pub fn new(n: usize, r_max: T, node_count: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Config(format!(
                "spatial dimension n must be >= 3, got {n}"
            )));
        }
        if !(r_max > T::zero()) || !r_max.is_finite() {
            return Err(Error::Config(format!("r_max must be positive, got {r_max}")));
        }
        if node_count < 16 {
            return Err(Error::Config(format!(
                "node count must be >= 16, got {node_count}"
            )));
        }
        let sphere_area = T::of(unit_sphere_area(n));
        let dr = r_max / T::of_usize(node_count);
        let half = T::of(0.5);
        let mut nodes = Vec::with_capacity(node_count);
        let mut weights = Vec::with_capacity(node_count);
        for i in 0..node_count {
            let r = (T::of_usize(i) + half) * dr;
            nodes.push(r);
            weights.push(sphere_area * r.powi(n as i32 - 1) * dr);
        }
        let faces = (0..=node_count)
            .map(|i| sphere_area * (T::of_usize(i) * dr).powi(n as i32 - 1))
            .collect();
        Ok(Self {
            n,
            r_max,
            dr,
            nodes,
            weights,
            faces,
            sphere_area,
        })
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    pub fn dr(&self) -> T {
        self.dr
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn sphere_area(&self) -> T {
        self.sphere_area
    }

    fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len != self.len() {
            return Err(Error::Shape {
                context,
                expected: self.len(),
                actual: len,
            });
        }
        Ok(())
    }

    /// Quadrature for int_{R^n} f(|x|) dx with f sampled at the nodes.
    pub fn integrate(&self, samples: &[T]) -> Result<T> {
        self.check_len(samples.len(), "integrate")?;
        Ok(self
            .weights
            .iter()
            .zip(samples)
            .map(|(&w, &s)| w * s)
            .sum())
    }

    /// Conservative discretization of the radial Laplacian
    /// u'' + (n-1)/r u' = r^{1-n} (r^{n-1} u')'.
    ///
    /// The flux through the r = 0 face is identically zero and the ghost
    /// value beyond r_max is zero, so the operator is self-adjoint with
    /// respect to the quadrature weights and summation by parts against
    /// `gradient_l2_sq` is exact.
    pub fn laplacian_radial(&self, u: &[T], out: &mut [T]) -> Result<()> {
        self.check_len(u.len(), "laplacian_radial")?;
        self.check_len(out.len(), "laplacian_radial output")?;
        let n_nodes = u.len();
        let inv_dr2 = (self.dr * self.dr).recip();
        for i in 0..n_nodes {
            let flux_lo = if i == 0 {
                T::zero()
            } else {
                self.faces[i] * (u[i] - u[i - 1])
            };
            let u_hi = if i + 1 < n_nodes { u[i + 1] } else { T::zero() };
            let flux_hi = self.faces[i + 1] * (u_hi - u[i]);
            out[i] = (flux_hi - flux_lo) * inv_dr2 / (self.weights[i] / self.dr);
        }
        Ok(())
    }

    /// Solves (shift I - Lap) x = rhs with the stencil of
    /// [`laplacian_radial`], by the Thomas algorithm. The matrix is strictly
    /// diagonally dominant for shift > 0, so no pivoting is needed.
    pub fn solve_shifted_laplacian(&self, shift: T, rhs: &[T], out: &mut [T]) -> Result<()> {
        self.check_len(rhs.len(), "solve_shifted_laplacian")?;
        self.check_len(out.len(), "solve_shifted_laplacian output")?;
        if !(shift > T::zero()) {
            return Err(Error::Parameter(format!(
                "shift must be positive, got {shift}"
            )));
        }
        let n_nodes = rhs.len();
        let inv = |i: usize| (self.dr * self.weights[i]).recip();
        let mut c_prime = vec![T::zero(); n_nodes];
        let diag0 = shift + (self.faces[0] + self.faces[1]) * inv(0);
        c_prime[0] = -self.faces[1] * inv(0) / diag0;
        out[0] = rhs[0] / diag0;
        for i in 1..n_nodes {
            let a = -self.faces[i] * inv(i);
            let c = -self.faces[i + 1] * inv(i);
            let d = shift + (self.faces[i] + self.faces[i + 1]) * inv(i);
            let denom = d - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            out[i] = (rhs[i] - a * out[i - 1]) / denom;
        }
        for i in (0..n_nodes - 1).rev() {
            out[i] = out[i] - c_prime[i] * out[i + 1];
        }
        Ok(())
    }

    /// || Du ||_{L^2}^2 via the face differences matching the Laplacian
    /// stencil (Dirichlet zero ghost beyond r_max).
    pub fn gradient_l2_sq(&self, u: &[T]) -> Result<T> {
        self.check_len(u.len(), "gradient_l2_sq")?;
        let n_nodes = u.len();
        let mut acc = T::zero();
        for i in 1..=n_nodes {
            let u_hi = if i < n_nodes { u[i] } else { T::zero() };
            let diff = u_hi - u[i - 1];
            acc = acc + self.faces[i] * diff * diff;
        }
        Ok(acc / self.dr)
    }
}

/// k radial profiles sampled on a grid: the discretized u in H^1_r(R^n, R^k).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState<T: Scalar> {
    components: Vec<Vec<T>>,
}

impl<T: Scalar> FieldState<T> {
    pub fn zeros(k: usize, n_nodes: usize) -> Self {
        Self {
            components: vec![vec![T::zero(); n_nodes]; k],
        }
    }

    /// Build componentwise from a function of the radius.
    pub fn from_fn(grid: &RadialGrid<T>, k: usize, mut f: impl FnMut(usize, T) -> T) -> Self {
        let components = (0..k)
            .map(|j| grid.nodes().iter().map(|&r| f(j, r)).collect())
            .collect();
        Self { components }
    }

    pub fn from_components(components: Vec<Vec<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("field needs at least one component".into()));
        }
        let n = components[0].len();
        for c in &components {
            if c.len() != n {
                return Err(Error::Shape {
                    context: "field components",
                    expected: n,
                    actual: c.len(),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.components[0].len()
    }

    pub fn component(&self, j: usize) -> &[T] {
        &self.components[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.components[j]
    }

    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    pub fn all_finite(&self) -> bool {
        self.components
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// Componentwise absolute value.
    pub fn abs(&self) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|v| v.abs()).collect())
                .collect(),
        }
    }

    /// self <- self + t * other
    pub fn axpy(&mut self, t: T, other: &Self) {
        for (c, oc) in self.components.iter_mut().zip(&other.components) {
            for (v, &o) in c.iter_mut().zip(oc) {
                *v = *v + t * o;
            }
        }
    }

    /// Values of all k components at node i.
    pub fn point(&self, i: usize, buf: &mut Vec<T>) {
        buf.clear();
        buf.extend(self.components.iter().map(|c| c[i]));
    }
}

/// Per-component norms of a field.
#[derive(Debug, Clone)]
pub struct Norms<T: Scalar> {
    pub l2: Vec<T>,
    pub lp: Vec<T>,
    pub lq: Vec<T>,
    pub grad_l2: Vec<T>,
    pub h1: Vec<T>,
}

impl<T: Scalar> Norms<T> {
    /// H^1 norm of the whole field, sqrt of the sum of the squared
    /// per-component H^1 norms.
    pub fn h1_total(&self) -> T {
        self.h1.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn l2_total(&self) -> T {
        self.l2.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

/// Quadrature-based L^2, L^p, L^q, gradient-L^2 and H^1 norms per component.
pub fn norms<T: Scalar>(grid: &RadialGrid<T>, field: &FieldState<T>, p: T, q: T) -> Result<Norms<T>> {
    let k = field.k();
    let mut l2 = Vec::with_capacity(k);
    let mut lp = Vec::with_capacity(k);
    let mut lq = Vec::with_capacity(k);
    let mut grad_l2 = Vec::with_capacity(k);
    let mut h1 = Vec::with_capacity(k);
    for j in 0..k {
        let u = field.component(j);
        grid.check_len(u.len(), "norms")?;
        let mut s2 = T::zero();
        let mut sp = T::zero();
        let mut sq = T::zero();
        for (&w, &v) in grid.weights().iter().zip(u) {
            let a = v.abs();
            s2 = s2 + w * a * a;
            sp = sp + w * a.powf(p);
            sq = sq + w * a.powf(q);
        }
        let g2 = grid.gradient_l2_sq(u)?;
        l2.push(s2.sqrt());
        lp.push(sp.powf(p.recip()));
        lq.push(sq.powf(q.recip()));
        grad_l2.push(g2.sqrt());
        h1.push((s2 + g2).sqrt());
    }
    Ok(Norms {
        l2,
        lp,
        lq,
        grad_l2,
        h1,
    })
}

/// Fraction of the total L^2 mass carried by the outer 10% of the radius;
/// used to validate that r_max is large enough for a decaying profile.
pub fn tail_mass_fraction<T: Scalar>(grid: &RadialGrid<T>, field: &FieldState<T>) -> Result<T> {
    let cut = T::of(0.9) * grid.r_max();
    let mut tail = T::zero();
    let mut total = T::zero();
    for j in 0..field.k() {
        let u = field.component(j);
        grid.check_len(u.len(), "tail_mass_fraction")?;
        for ((&w, &r), &v) in grid.weights().iter().zip(grid.nodes()).zip(u) {
            let m = w * v * v;
            total = total + m;
            if r > cut {
                tail = tail + m;
            }
        }
    }
    if total == T::zero() {
        return Ok(T::zero());
    }
    Ok(tail / total)
}

/// Writes the field as a text table `r,u_1,...,u_k`, one row per node,
/// 17 significant digits (round-trip safe for f64).
pub fn write_field_table<T: Scalar, W: Write>(
    w: &mut W,
    grid: &RadialGrid<T>,
    field: &FieldState<T>,
) -> Result<()> {
    grid.check_len(field.n_nodes(), "write_field_table")?;
    write!(w, "r")?;
    for j in 1..=field.k() {
        write!(w, ",u_{j}")?;
    }
    writeln!(w)?;
    for (i, &r) in grid.nodes().iter().enumerate() {
        write!(w, "{:.16e}", r)?;
        for j in 0..field.k() {
            write!(w, ",{:.16e}", field.component(j)[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a field table written by [`write_field_table`]; returns the node
/// radii alongside the field so callers can validate against their grid.
pub fn read_field_table<T: Scalar, R: BufRead>(r: R) -> Result<(Vec<T>, FieldState<T>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty field table".into()))??;
    let k = header.split(',').count().saturating_sub(1);
    if k == 0 {
        return Err(Error::Config(format!(
            "field table header must be r,u_1,...,u_k, got {header:?}"
        )));
    }
    let mut radii = Vec::new();
    let mut components = vec![Vec::new(); k];
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: &str| -> Result<T> {
            let v: f64 = s.trim().parse().map_err(|_| {
                Error::Config(format!("bad number {s:?} at table row {}", lineno + 2))
            })?;
            Ok(T::of(v))
        };
        radii.push(parse(parts.next().ok_or_else(|| {
            Error::Config(format!("short row at table row {}", lineno + 2))
        })?)?);
        for comp in components.iter_mut() {
            comp.push(parse(parts.next().ok_or_else(|| {
                Error::Config(format!("short row at table row {}", lineno + 2))
            })?)?);
        }
    }
    Ok((radii, FieldState::from_components(components)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::unit_ball_volume;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_invalid_sizes() {
        assert!(RadialGrid::<f64>::new(2, 1.0, 100).is_err());
        assert!(RadialGrid::<f64>::new(3, -1.0, 100).is_err());
        assert!(RadialGrid::<f64>::new(3, 1.0, 8).is_err());
    }

    #[test]
    fn layout_rule() {
        let g = RadialGrid::<f64>::new(3, 20.0, 2000).unwrap();
        assert_relative_eq!(g.dr(), 0.01);
        assert_relative_eq!(g.nodes()[0], 0.005);
    }

    #[test]
    fn unit_ball_volume_n3_and_n4() {
        for (n, expect) in [(3usize, unit_ball_volume(3)), (4, unit_ball_volume(4))] {
            let g = RadialGrid::<f64>::new(n, 1.0, 4000).unwrap();
            let ones = vec![1.0; g.len()];
            let v = g.integrate(&ones).unwrap();
            assert_relative_eq!(v, expect, max_relative = 1e-5);
        }
    }

    #[test]
    fn integrate_zero_and_indicator() {
        let g = RadialGrid::<f64>::new(3, 2.0, 1000).unwrap();
        assert_eq!(g.integrate(&vec![0.0; g.len()]).unwrap(), 0.0);
        let r_cut = 1.3;
        let ind: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&r| if r <= r_cut { 1.0 } else { 0.0 })
            .collect();
        let v = g.integrate(&ind).unwrap();
        let exact = unit_ball_volume(3) * r_cut.powi(3);
        assert!((v - exact).abs() < 4.0 * std::f64::consts::PI * r_cut * r_cut * g.dr());
    }

    #[test]
    fn gaussian_integral() {
        let g = RadialGrid::<f64>::new(3, 10.0, 4000).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|&r| (-r * r).exp()).collect();
        let v = g.integrate(&f).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI.powf(1.5), max_relative = 1e-6);
    }

    #[test]
    fn integrate_shape_error() {
        let g = RadialGrid::<f64>::new(3, 1.0, 100).unwrap();
        assert!(matches!(
            g.integrate(&[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn laplacian_of_constant_and_r_squared() {
        let g = RadialGrid::<f64>::new(3, 10.0, 2000).unwrap();
        let ones = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        g.laplacian_radial(&ones, &mut out).unwrap();
        // away from the Dirichlet boundary the Laplacian of a constant is 0
        for &v in &out[..g.len() - 5] {
            assert!(v.abs() < 1e-9, "laplacian of constant = {v}");
        }

        // lap r^2 = 6 exactly for r away from the origin cell; the first
        // cells divide by the midpoint volume and carry a 2/(2i+1)^2 defect
        let r2: Vec<f64> = g.nodes().iter().map(|&r| r * r).collect();
        g.laplacian_radial(&r2, &mut out).unwrap();
        for (&r, &v) in g.nodes().iter().zip(&out).take(g.len() - 5) {
            if r >= 1.0 {
                assert_relative_eq!(v, 6.0, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn laplacian_of_gaussian_second_order() {
        let errs: Vec<f64> = [1000usize, 2000]
            .iter()
            .map(|&n| {
                let g = RadialGrid::<f64>::new(3, 10.0, n).unwrap();
                let u: Vec<f64> = g.nodes().iter().map(|&r| (-r * r).exp()).collect();
                let mut out = vec![0.0; g.len()];
                g.laplacian_radial(&u, &mut out).unwrap();
                g.nodes()
                    .iter()
                    .zip(&out)
                    .filter(|&(&r, _)| (0.5..=9.0).contains(&r))
                    .map(|(&r, &v)| {
                        let exact = (4.0 * r * r - 6.0) * (-r * r).exp();
                        (v - exact).abs()
                    })
                    .fold(0.0_f64, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0, "not second order: {errs:?}");
        assert!(errs[1] < 1e-4);
    }

    #[test]
    fn summation_by_parts_exact() {
        let g = RadialGrid::<f64>::new(3, 8.0, 500).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|&r| (-0.5 * r * r).exp() * (1.0 + r)).collect();
        let mut lap = vec![0.0; g.len()];
        g.laplacian_radial(&u, &mut lap).unwrap();
        let lhs: f64 = -g
            .weights()
            .iter()
            .zip(&lap)
            .zip(&u)
            .map(|((&w, &l), &v)| w * l * v)
            .sum::<f64>();
        let rhs = g.gradient_l2_sq(&u).unwrap();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn quadrature_refinement_order() {
        // halving dr reduces the error by ~4x; cos(r) is used because its
        // midpoint error does not telescope away like a Gaussian's does.
        // int_0^R r^2 cos r dr = (R^2 - 2) sin R + 2 R cos R
        let r_cap = 10.0_f64;
        let exact =
            4.0 * std::f64::consts::PI * ((r_cap * r_cap - 2.0) * r_cap.sin() + 2.0 * r_cap * r_cap.cos());
        let err = |n: usize| {
            let g = RadialGrid::<f64>::new(3, r_cap, n).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|&r| r.cos()).collect();
            (g.integrate(&f).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(250), err(500));
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.0, "refinement ratio {ratio}");
    }

    #[test]
    fn shifted_laplacian_solve_round_trip() {
        let g = RadialGrid::<f64>::new(3, 12.0, 700).unwrap();
        let u: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&r| (-0.3 * r * r).exp() * (1.0 + 0.5 * r))
            .collect();
        let shift = 0.7;
        let mut lap = vec![0.0; g.len()];
        g.laplacian_radial(&u, &mut lap).unwrap();
        let rhs: Vec<f64> = u
            .iter()
            .zip(&lap)
            .map(|(&v, &l)| shift * v - l)
            .collect();
        let mut x = vec![0.0; g.len()];
        g.solve_shifted_laplacian(shift, &rhs, &mut x).unwrap();
        for (a, b) in x.iter().zip(&u) {
            assert_relative_eq!(a, b, epsilon = 1e-11, max_relative = 1e-10);
        }
        assert!(g.solve_shifted_laplacian(0.0, &rhs, &mut x).is_err());
    }

    #[test]
    fn field_table_round_trip() {
        let g = RadialGrid::<f64>::new(3, 5.0, 64).unwrap();
        let f = FieldState::from_fn(&g, 2, |j, r| ((j + 1) as f64) * (-r).exp());
        let mut buf = Vec::new();
        write_field_table(&mut buf, &g, &f).unwrap();
        let (radii, f2) = read_field_table::<f64, _>(&buf[..]).unwrap();
        assert_eq!(radii, g.nodes());
        assert_eq!(f, f2);
    }

    #[test]
    fn norms_zero_field() {
        let g = RadialGrid::<f64>::new(3, 5.0, 64).unwrap();
        let f = FieldState::zeros(2, g.len());
        let n = norms(&g, &f, 4.0, 5.0).unwrap();
        assert!(n.l2.iter().chain(&n.lp).chain(&n.lq).chain(&n.grad_l2).all(|&x| x == 0.0));
    }
}
