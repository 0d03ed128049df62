//! π-equivalent network model and Newton-Raphson AC power flow.
//!
//! Every non-slack bus is a PQ bus. Generation at non-slack buses enters as
//! negative load through the injection vector handed to [`solve_power_flow`].

use num_complex::Complex;
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::thermo::ThermalLineParams;

pub const MISMATCH_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("network needs exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("network is not connected")]
    Disconnected,
    #[error("branch `{name}`: {reason}")]
    BadBranch { name: String, reason: &'static str },
    #[error("expected {expected} bus injections, got {got}")]
    InjectionLength { expected: usize, got: usize },
    #[error("expected {expected} branch temperatures, got {got}")]
    TemperatureLength { expected: usize, got: usize },
    #[error("power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e} p.u.)")]
    NonConvergence { iterations: usize, mismatch: f64 },
    #[error("singular Jacobian at iteration {0}")]
    SingularJacobian(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSpec<T> {
    /// External bus number.
    pub id: usize,
    pub kind: BusKind,
    /// Peak real load, p.u.
    pub load_p: T,
    /// Peak reactive load, p.u.
    pub load_q: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch<T> {
    pub name: String,
    /// Index into the bus list.
    pub from: usize,
    pub to: usize,
    /// Series resistance at the conductor reference temperature, p.u.
    pub ref_resistance: T,
    pub reactance: T,
    pub shunt_susceptance_half: T,
    pub thermal: ThermalLineParams<T>,
    /// Series resistance at the last refresh, p.u.
    pub current_resistance: T,
}

impl<T: Real> Branch<T> {
    pub fn new(
        name: impl Into<String>,
        from: usize,
        to: usize,
        ref_resistance: T,
        reactance: T,
        shunt_susceptance_half: T,
        thermal: ThermalLineParams<T>,
    ) -> Self {
        Self {
            name: name.into(),
            from,
            to,
            ref_resistance,
            reactance,
            shunt_susceptance_half,
            thermal,
            current_resistance: ref_resistance,
        }
    }

    /// p.u. series resistance at conductor temperature `temp`.
    #[inline]
    pub fn resistance_pu_at(&self, temp: T) -> T {
        self.ref_resistance
            * (T::one() + self.thermal.resist_temp_coeff * (temp - self.thermal.ref_temp))
    }

    fn series_admittance(&self) -> Complex<T> {
        Complex::new(self.current_resistance, self.reactance).inv()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel<T> {
    pub base_power_mva: T,
    pub slack_voltage: T,
    buses: Vec<BusSpec<T>>,
    branches: Vec<Branch<T>>,
    slack: usize,
}

impl<T: Real> NetworkModel<T> {
    pub fn new(
        base_power_mva: T,
        slack_voltage: T,
        buses: Vec<BusSpec<T>>,
        branches: Vec<Branch<T>>,
    ) -> Result<Self, PowerFlowError> {
        let slacks: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Slack)
            .map(|(i, _)| i)
            .collect();
        if slacks.len() != 1 {
            return Err(PowerFlowError::SlackCount(slacks.len()));
        }
        let n = buses.len();
        for br in &branches {
            let reason = if br.from >= n || br.to >= n {
                Some("bus index out of range")
            } else if br.from == br.to {
                Some("both ends on the same bus")
            } else if !(br.reactance > T::zero()) {
                Some("reactance must be positive")
            } else if br.ref_resistance < T::zero() {
                Some("reference resistance must be non-negative")
            } else if br.thermal.validate().is_err() {
                Some("invalid thermal parameters")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(PowerFlowError::BadBranch { name: br.name.clone(), reason });
            }
        }
        if !connected(n, &branches) {
            return Err(PowerFlowError::Disconnected);
        }
        Ok(Self { base_power_mva, slack_voltage, buses, branches, slack: slacks[0] })
    }

    pub fn buses(&self) -> &[BusSpec<T>] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch<T>] {
        &self.branches
    }

    pub fn slack_index(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_index(&self, name: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.name == name)
    }

    /// Net injections (generation minus load) with every bus load scaled by `level`.
    pub fn load_injections(&self, level: T) -> Vec<Complex<T>> {
        self.buses.iter().map(|b| Complex::new(-b.load_p * level, -b.load_q * level)).collect()
    }

    /// Sets each branch resistance from its conductor temperature.
    pub fn refresh_resistances(&mut self, temps: &[T]) -> Result<(), PowerFlowError> {
        if temps.len() != self.branches.len() {
            return Err(PowerFlowError::TemperatureLength {
                expected: self.branches.len(),
                got: temps.len(),
            });
        }
        for (br, &t) in self.branches.iter_mut().zip(temps) {
            br.current_resistance = br.resistance_pu_at(t);
        }
        Ok(())
    }

    fn admittance(&self) -> (DenseMatrix<T>, DenseMatrix<T>) {
        let n = self.buses.len();
        let mut g = DenseMatrix::zeros(n);
        let mut b = DenseMatrix::zeros(n);
        for br in &self.branches {
            let y = br.series_admittance();
            let (f, t) = (br.from, br.to);
            g.set(f, f, g.get(f, f) + y.re);
            g.set(t, t, g.get(t, t) + y.re);
            b.set(f, f, b.get(f, f) + y.im + br.shunt_susceptance_half);
            b.set(t, t, b.get(t, t) + y.im + br.shunt_susceptance_half);
            g.set(f, t, g.get(f, t) - y.re);
            g.set(t, f, g.get(t, f) - y.re);
            b.set(f, t, b.get(f, t) - y.im);
            b.set(t, f, b.get(t, f) - y.im);
        }
        (g, b)
    }
}

/// Convenience wrapper returning a copy with refreshed resistances.
pub fn refresh_resistances<T: Real>(
    net: &NetworkModel<T>,
    temps: &[T],
) -> Result<NetworkModel<T>, PowerFlowError> {
    let mut out = net.clone();
    out.refresh_resistances(temps)?;
    Ok(out)
}

fn connected<T>(n: usize, branches: &[Branch<T>]) -> bool {
    if n == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for br in branches {
        let (a, b) = (find(&mut parent, br.from), find(&mut parent, br.to));
        parent[a] = b;
    }
    let root = find(&mut parent, 0);
    (0..n).all(|i| find(&mut parent, i) == root)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution<T> {
    /// Voltage magnitude per bus, p.u.
    pub vm: Vec<T>,
    /// Voltage angle per bus, rad.
    pub va: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: T,
}

impl<T: Real> PowerFlowSolution<T> {
    pub fn flat(net: &NetworkModel<T>) -> Self {
        let n = net.buses.len();
        let mut vm = vec![T::one(); n];
        vm[net.slack] = net.slack_voltage;
        Self { vm, va: vec![T::zero(); n], converged: false, iterations: 0, max_mismatch: T::infinity() }
    }

    pub fn voltage(&self, bus: usize) -> Complex<T> {
        Complex::from_polar(self.vm[bus], self.va[bus])
    }
}

/// Complex power injected at every bus by the network for the given voltages.
pub fn bus_powers<T: Real>(net: &NetworkModel<T>, sol: &PowerFlowSolution<T>) -> Vec<Complex<T>> {
    let (g, b) = net.admittance();
    calc_powers(&g, &b, &sol.vm, &sol.va)
}

fn calc_powers<T: Real>(
    g: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    vm: &[T],
    va: &[T],
) -> Vec<Complex<T>> {
    let n = vm.len();
    (0..n)
        .map(|i| {
            let (mut p, mut q) = (T::zero(), T::zero());
            for k in 0..n {
                let (gik, bik) = (g.get(i, k), b.get(i, k));
                if gik == T::zero() && bik == T::zero() {
                    continue;
                }
                let (s, c) = (va[i] - va[k]).sin_cos();
                p += vm[k] * (gik * c + bik * s);
                q += vm[k] * (gik * s - bik * c);
            }
            Complex::new(vm[i] * p, vm[i] * q)
        })
        .collect()
}

/// Full Newton-Raphson on the polar mismatch equations.
///
/// `injections` holds the specified net complex power per bus (p.u.); the
/// slack entry is ignored. Starts flat unless `warm_start` is given.
pub fn solve_power_flow<T: Real>(
    net: &NetworkModel<T>,
    injections: &[Complex<T>],
    warm_start: Option<&PowerFlowSolution<T>>,
) -> Result<PowerFlowSolution<T>, PowerFlowError> {
    let n = net.buses.len();
    if injections.len() != n {
        return Err(PowerFlowError::InjectionLength { expected: n, got: injections.len() });
    }
    let (g, b) = net.admittance();
    let mut sol = match warm_start {
        Some(w) if w.vm.len() == n => w.clone(),
        _ => PowerFlowSolution::flat(net),
    };
    sol.vm[net.slack] = net.slack_voltage;
    sol.va[net.slack] = T::zero();

    let pq: Vec<usize> = (0..n).filter(|&i| i != net.slack).collect();
    let m = pq.len();
    let tol = T::lit(MISMATCH_TOLERANCE);
    let mut iterations = 0;
    loop {
        let calc = calc_powers(&g, &b, &sol.vm, &sol.va);
        let mut rhs = vec![T::zero(); 2 * m];
        let mut worst = T::zero();
        for (r, &i) in pq.iter().enumerate() {
            let dp = injections[i].re - calc[i].re;
            let dq = injections[i].im - calc[i].im;
            rhs[r] = dp;
            rhs[m + r] = dq;
            worst = worst.max(dp.abs()).max(dq.abs());
        }
        if !worst.is_finite() {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch: f64::INFINITY });
        }
        if worst < tol {
            sol.converged = true;
            sol.iterations = iterations;
            sol.max_mismatch = worst;
            return Ok(sol);
        }
        if iterations == MAX_ITERATIONS {
            return Err(PowerFlowError::NonConvergence { iterations, mismatch: worst.as_f64() });
        }
        let mut jac = DenseMatrix::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            let (vi, pi, qi) = (sol.vm[i], calc[i].re, calc[i].im);
            for (c, &k) in pq.iter().enumerate() {
                let (gik, bik) = (g.get(i, k), b.get(i, k));
                if i == k {
                    jac.set(r, c, -qi - bik * vi * vi);
                    jac.set(r, m + c, pi / vi + gik * vi);
                    jac.set(m + r, c, pi - gik * vi * vi);
                    jac.set(m + r, m + c, qi / vi - bik * vi);
                } else {
                    if gik == T::zero() && bik == T::zero() {
                        continue;
                    }
                    let vk = sol.vm[k];
                    let (s, co) = (sol.va[i] - sol.va[k]).sin_cos();
                    let a = gik * s - bik * co;
                    let d = gik * co + bik * s;
                    jac.set(r, c, vi * vk * a);
                    jac.set(r, m + c, vi * d);
                    jac.set(m + r, c, -vi * vk * d);
                    jac.set(m + r, m + c, vi * a);
                }
            }
        }
        jac.solve_in_place(&mut rhs).ok_or(PowerFlowError::SingularJacobian(iterations))?;
        for (r, &i) in pq.iter().enumerate() {
            sol.va[i] += rhs[r];
            sol.vm[i] += rhs[m + r];
        }
        iterations += 1;
    }
}

/// Current through the series element from `from` to `to`, p.u.
pub fn series_current<T: Real>(sol: &PowerFlowSolution<T>, br: &Branch<T>) -> Complex<T> {
    (sol.voltage(br.from) - sol.voltage(br.to)) * br.series_admittance()
}

/// Three-phase series Joule loss of a branch, p.u.
pub fn line_loss_pu<T: Real>(sol: &PowerFlowSolution<T>, br: &Branch<T>) -> T {
    let r = br.current_resistance;
    let x = br.reactance;
    let (vy, vz) = (sol.vm[br.from], sol.vm[br.to]);
    let dtheta = sol.va[br.from] - sol.va[br.to];
    r / (r * r + x * x) * (vy * vy + vz * vz - T::lit(2.0) * vy * vz * dtheta.cos())
}

/// Ohmic loss per metre of one phase conductor, W/m.
pub fn joule_w_per_m<T: Real>(sol: &PowerFlowSolution<T>, br: &Branch<T>, base_power_mva: T) -> T {
    joule_from_loss_pu(line_loss_pu(sol, br), base_power_mva, br.thermal.length)
}

#[inline]
pub fn joule_from_loss_pu<T: Real>(loss_pu: T, base_power_mva: T, length_m: T) -> T {
    loss_pu * base_power_mva * T::lit(1e6) / (T::lit(3.0) * length_m)
}
