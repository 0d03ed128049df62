//! Conductor heat balance: temperature-dependent resistance, transient
//! integration, steady-state temperature and ampacity.
//!
//! All temperatures are absolute (K). Heat terms are per metre of a single
//! phase conductor (W/m).

use thiserror::Error;

use crate::scalar::Real;

/// Default upper bracket for steady-state root searches.
pub const DEFAULT_TEMPERATURE_CAP: f64 = 2000.0;

/// Bisection stops once the bracket is narrower than this (K).
const BISECTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error("invalid thermal parameter `{field}` = {value}")]
    InvalidParameter { field: &'static str, value: f64 },
    #[error("non-finite conductor temperature after {elapsed} s of integration")]
    NonFiniteState { elapsed: f64 },
    #[error("horizon {horizon} s is not a whole number of {dt} s steps")]
    MisalignedHorizon { horizon: f64, dt: f64 },
    #[error("steady-state temperature exceeds the {cap} K search cap")]
    BracketFailure { cap: f64 },
    #[error("solar gain exceeds total cooling at the rating temperature (numerator {numerator} W/m)")]
    NegativeRadicand { numerator: f64 },
}

/// Per-line conductor constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalLineParams<T> {
    /// J m⁻¹ K⁻¹
    pub heat_capacity: T,
    /// W m⁻¹ K⁻¹
    pub conv_coeff: T,
    /// W m⁻¹ K⁻⁴
    pub rad_coeff: T,
    /// W m⁻¹
    pub solar_gain: T,
    /// K
    pub ambient_temp: T,
    /// K
    pub ref_temp: T,
    /// K⁻¹
    pub resist_temp_coeff: T,
    /// Ω m⁻¹ at `ref_temp`
    pub ref_resistance_per_m: T,
    /// Ω m⁻¹
    pub reactance_per_m: T,
    /// m
    pub length: T,
    /// Maximum allowed operating temperature, K
    pub max_operating_temp: T,
}

impl<T: Real> ThermalLineParams<T> {
    /// 'Drake' 26/7 ACSR conductor data with 40 °C ambient and a 100 °C rating.
    pub fn drake_acsr(length_m: T) -> Self {
        Self {
            heat_capacity: T::lit(1310.0),
            conv_coeff: T::lit(0.948),
            rad_coeff: T::lit(2.5e-9),
            solar_gain: T::lit(14.08),
            ambient_temp: T::lit(313.15),
            ref_temp: T::lit(298.15),
            resist_temp_coeff: T::lit(0.0039),
            ref_resistance_per_m: T::lit(7.3e-5),
            reactance_per_m: T::lit(2.5e-4),
            length: length_m,
            max_operating_temp: T::lit(373.15),
        }
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        let zero = T::zero();
        let checks: [(&'static str, T, bool); 10] = [
            ("heat_capacity", self.heat_capacity, self.heat_capacity > zero),
            ("conv_coeff", self.conv_coeff, self.conv_coeff > zero),
            ("rad_coeff", self.rad_coeff, self.rad_coeff > zero),
            ("length", self.length, self.length > zero),
            ("solar_gain", self.solar_gain, self.solar_gain >= zero),
            ("ambient_temp", self.ambient_temp, self.ambient_temp > zero),
            ("ref_temp", self.ref_temp, self.ref_temp > zero),
            ("resist_temp_coeff", self.resist_temp_coeff, self.resist_temp_coeff >= zero),
            (
                "ref_resistance_per_m",
                self.ref_resistance_per_m,
                self.ref_resistance_per_m > zero,
            ),
            (
                "max_operating_temp",
                self.max_operating_temp,
                self.max_operating_temp > self.ambient_temp,
            ),
        ];
        for (field, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ThermoError::InvalidParameter { field, value: value.as_f64() });
            }
        }
        if !(self.reactance_per_m >= zero) {
            return Err(ThermoError::InvalidParameter {
                field: "reactance_per_m",
                value: self.reactance_per_m.as_f64(),
            });
        }
        Ok(())
    }

    /// Conductor resistance over the whole line length at temperature `temp` (Ω).
    pub fn total_resistance(&self, temp: T) -> T {
        resistance_at(temp, self) * self.length
    }
}

/// Time-varying weather overrides. Only the convective coefficient,
/// ambient temperature and solar gain vary; radiation stays constant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Weather<T> {
    pub conv_coeff_override: Option<T>,
    pub ambient_temp_override: Option<T>,
    pub solar_gain_override: Option<T>,
}

impl<T: Real> Weather<T> {
    pub fn calm() -> Self {
        Self { conv_coeff_override: None, ambient_temp_override: None, solar_gain_override: None }
    }

    pub fn with_conv_coeff(conv_coeff: T) -> Self {
        Self { conv_coeff_override: Some(conv_coeff), ..Self::calm() }
    }

    pub fn validate(&self) -> Result<(), ThermoError> {
        if let Some(a) = self.conv_coeff_override {
            if !(a > T::zero()) || !a.is_finite() {
                return Err(ThermoError::InvalidParameter { field: "conv_coeff", value: a.as_f64() });
            }
        }
        if let Some(t) = self.ambient_temp_override {
            if !(t > T::zero()) || !t.is_finite() {
                return Err(ThermoError::InvalidParameter { field: "ambient_temp", value: t.as_f64() });
            }
        }
        if let Some(q) = self.solar_gain_override {
            if !(q >= T::zero()) || !q.is_finite() {
                return Err(ThermoError::InvalidParameter { field: "solar_gain", value: q.as_f64() });
            }
        }
        Ok(())
    }

    fn conv(&self, p: &ThermalLineParams<T>) -> T {
        self.conv_coeff_override.unwrap_or(p.conv_coeff)
    }

    fn ambient(&self, p: &ThermalLineParams<T>) -> T {
        self.ambient_temp_override.unwrap_or(p.ambient_temp)
    }

    fn solar(&self, p: &ThermalLineParams<T>) -> T {
        self.solar_gain_override.unwrap_or(p.solar_gain)
    }
}

/// Absolute conductor temperature in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LineTemperature<T>(T);

impl<T: Real> LineTemperature<T> {
    pub fn new(kelvin: T) -> Option<Self> {
        (kelvin > T::zero() && kelvin.is_finite()).then_some(Self(kelvin))
    }

    pub fn kelvin(self) -> T {
        self.0
    }

    pub fn celsius(self) -> T {
        self.0 - T::lit(273.15)
    }
}

/// Ohmic heat input driving the conductor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Heating<T> {
    /// Fixed loss in W/m, independent of conductor temperature.
    Joule(T),
    /// Fixed phase current in A; the loss follows the conductor resistance.
    Current(T),
}

impl<T: Real> Heating<T> {
    /// Ohmic loss in W/m at conductor temperature `temp`.
    #[inline]
    pub fn joule_at(&self, temp: T, p: &ThermalLineParams<T>) -> T {
        match *self {
            Heating::Joule(q) => q,
            Heating::Current(i) => i * i * resistance_at(temp, p),
        }
    }
}

/// Linear resistance model, Ω/m.
#[inline]
pub fn resistance_at<T: Real>(temp: T, p: &ThermalLineParams<T>) -> T {
    debug_assert!(temp > T::zero());
    p.ref_resistance_per_m * (T::one() + p.resist_temp_coeff * (temp - p.ref_temp))
}

/// Convective loss, W/m.
#[inline]
pub fn convective_loss<T: Real>(temp: T, p: &ThermalLineParams<T>, w: &Weather<T>) -> T {
    w.conv(p) * (temp - w.ambient(p))
}

/// Radiative loss, W/m.
#[inline]
pub fn radiative_loss<T: Real>(temp: T, p: &ThermalLineParams<T>, w: &Weather<T>) -> T {
    let ta = w.ambient(p);
    p.rad_coeff * (temp.powi(4) - ta.powi(4))
}

/// dT/dt in K/s for a given ohmic loss.
#[inline]
pub fn thermal_rhs<T: Real>(temp: T, joule_per_m: T, p: &ThermalLineParams<T>, w: &Weather<T>) -> T {
    (joule_per_m + w.solar(p) - convective_loss(temp, p, w) - radiative_loss(temp, p, w))
        / p.heat_capacity
}

#[inline]
fn rhs_with<T: Real>(temp: T, heating: &Heating<T>, p: &ThermalLineParams<T>, w: &Weather<T>) -> T {
    thermal_rhs(temp, heating.joule_at(temp, p), p, w)
}

/// One classical fourth-order Runge-Kutta step of length `dt`.
#[inline]
pub fn rk4_step<T: Real>(
    temp: T,
    heating: &Heating<T>,
    p: &ThermalLineParams<T>,
    w: &Weather<T>,
    dt: T,
) -> T {
    let half = dt * T::lit(0.5);
    let k1 = rhs_with(temp, heating, p, w);
    let k2 = rhs_with(temp + half * k1, heating, p, w);
    let k3 = rhs_with(temp + half * k2, heating, p, w);
    let k4 = rhs_with(temp + dt * k3, heating, p, w);
    temp + dt / T::lit(6.0) * (k1 + T::lit(2.0) * (k2 + k3) + k4)
}

/// Number of whole `dt` steps in `horizon`, if it divides evenly.
pub fn step_count<T: Real>(horizon: T, dt: T) -> Option<u64> {
    if !(dt > T::zero()) || horizon < T::zero() {
        return None;
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    let tol = T::lit(1e-9) * (T::one() + ratio.abs());
    ((ratio - n).abs() <= tol).then(|| n.to_u64()).flatten()
}

/// Integrates the heat balance from `t0` over `horizon` seconds with fixed step `dt`.
pub fn integrate_temperature<T: Real>(
    t0: LineTemperature<T>,
    heating: Heating<T>,
    p: &ThermalLineParams<T>,
    w: &Weather<T>,
    dt: T,
    horizon: T,
) -> Result<LineTemperature<T>, ThermoError> {
    let steps = step_count(horizon, dt).ok_or(ThermoError::MisalignedHorizon {
        horizon: horizon.as_f64(),
        dt: dt.as_f64(),
    })?;
    let mut temp = t0.kelvin();
    for k in 0..steps {
        temp = rk4_step(temp, &heating, p, w, dt);
        if !temp.is_finite() || temp <= T::zero() {
            return Err(ThermoError::NonFiniteState { elapsed: (k + 1) as f64 * dt.as_f64() });
        }
    }
    Ok(LineTemperature(temp))
}

/// Steady-state temperature for a constant ohmic loss.
pub fn steady_state_temperature<T: Real>(
    joule_per_m: T,
    p: &ThermalLineParams<T>,
    w: &Weather<T>,
) -> Result<T, ThermoError> {
    steady_state_temperature_with(Heating::Joule(joule_per_m), p, w, T::lit(DEFAULT_TEMPERATURE_CAP))
}

/// Root of the heat balance above ambient for the given heating, found by bisection.
pub fn steady_state_temperature_with<T: Real>(
    heating: Heating<T>,
    p: &ThermalLineParams<T>,
    w: &Weather<T>,
    cap: T,
) -> Result<T, ThermoError> {
    let mut lo = w.ambient(p);
    let mut hi = cap;
    if rhs_with(hi, &heating, p, w) > T::zero() {
        return Err(ThermoError::BracketFailure { cap: cap.as_f64() });
    }
    if rhs_with(lo, &heating, p, w) <= T::zero() {
        return Ok(lo);
    }
    let tol = T::lit(BISECTION_TOLERANCE);
    for _ in 0..200 {
        if hi - lo < tol {
            break;
        }
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if rhs_with(mid, &heating, p, w) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * T::lit(0.5))
}

/// Steady-state current that holds the conductor at `rating_temp` (A).
pub fn steady_state_ampacity<T: Real>(
    rating_temp: T,
    p: &ThermalLineParams<T>,
    w: &Weather<T>,
) -> Result<T, ThermoError> {
    let numerator =
        convective_loss(rating_temp, p, w) + radiative_loss(rating_temp, p, w) - w.solar(p);
    if numerator < T::zero() {
        return Err(ThermoError::NegativeRadicand { numerator: numerator.as_f64() });
    }
    Ok((numerator / resistance_at(rating_temp, p)).sqrt())
}

/// Phase current that dissipates `joule_per_m` at conductor temperature `temp` (A).
pub fn phase_current_from_loss<T: Real>(joule_per_m: T, temp: T, p: &ThermalLineParams<T>) -> T {
    (joule_per_m / resistance_at(temp, p)).sqrt()
}
