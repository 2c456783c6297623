//! Classical fixed-step Runge–Kutta.

use crate::error::{Error, Result};

/// A first-order system `ẏ = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rates(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Human-readable name of state component `i`, used in diagnostics.
    fn component_name(&self, i: usize) -> String {
        format!("y[{i}]")
    }
}

/// Reusable RK4 stage buffers.
#[derive(Debug, Default, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = vec![0.0; dim];
        Self {
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            tmp: z,
        }
    }

    fn resize(&mut self, dim: usize) {
        for b in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            b.resize(dim, 0.0);
        }
    }

    /// Advances `y` from `t` to `t + dt` in place.
    pub fn step<S: OdeSystem + ?Sized>(&mut self, system: &S, t: f64, y: &mut [f64], dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let n = system.dim();
        debug_assert_eq!(y.len(), n);
        self.resize(n);
        let half = 0.5 * dt;

        system.rates(t, y, &mut self.k1);
        check_finite(system, &self.k1, t)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        system.rates(t + half, &self.tmp, &mut self.k2);
        check_finite(system, &self.k2, t + half)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        system.rates(t + half, &self.tmp, &mut self.k3);
        check_finite(system, &self.k3, t + half)?;
        for i in 0..n {
            self.tmp[i] = y[i] + dt * self.k3[i];
        }
        system.rates(t + dt, &self.tmp, &mut self.k4);
        check_finite(system, &self.k4, t + dt)?;
        for i in 0..n {
            y[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

fn check_finite<S: OdeSystem + ?Sized>(system: &S, k: &[f64], t: f64) -> Result<()> {
    match k.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFiniteDerivative {
            component: system.component_name(i),
            time: t,
        }),
    }
}

/// One RK4 step of a closure-defined system.
pub fn step_rk4<F>(rates: F, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    struct Closure<F> {
        f: F,
        dim: usize,
    }
    impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for Closure<F> {
        fn dim(&self) -> usize {
            self.dim
        }
        fn rates(&self, t: f64, y: &[f64], dy: &mut [f64]) {
            (self.f)(t, y, dy)
        }
    }
    let sys = Closure { f: rates, dim: y.len() };
    let mut out = y.to_vec();
    Rk4::new(y.len()).step(&sys, t, &mut out, dt)?;
    Ok(out)
}
