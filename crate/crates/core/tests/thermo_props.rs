use linetemp::thermo::*;
use proptest::prelude::*;

fn drake() -> ThermalLineParams<f64> {
    ThermalLineParams::drake_acsr(20_000.0)
}

/// Independent root finder for the heat balance: Newton on the quartic with a
/// numerical derivative, started well above the root.
fn newton_root(joule: f64, p: &ThermalLineParams<f64>, w: &Weather<f64>) -> f64 {
    let f = |t: f64| thermal_rhs(t, joule, p, w);
    let mut t = 600.0;
    for _ in 0..100 {
        let h = 1e-4;
        let d = (f(t + h) - f(t - h)) / (2.0 * h);
        let next = t - f(t) / d;
        if (next - t).abs() < 1e-12 {
            return next;
        }
        t = next;
    }
    t
}

#[test]
fn tabulated_operating_points() {
    let p = drake();
    let w = Weather::calm();
    let t1 = steady_state_temperature(19.34, &p, &w).unwrap();
    let t2 = steady_state_temperature(67.23, &p, &w).unwrap();
    assert!((t1 - 338.95).abs() < 0.05, "{t1}");
    assert!((t2 - 373.15).abs() < 0.05, "{t2}");
    assert!((t1 - newton_root(19.34, &p, &w)).abs() < 1e-6);
    let amp = steady_state_ampacity(373.15, &p, &w).unwrap();
    assert!((amp - 844.0).abs() < 1.0, "{amp}");
}

#[test]
fn step_size_convergence_over_one_hour() {
    let p = drake();
    let w = Weather::calm();
    for i in [300.0, 478.0, 700.0, 900.0] {
        let t0 = LineTemperature::new(313.15).unwrap();
        let a = integrate_temperature(t0, Heating::Current(i), &p, &w, 5.0, 3600.0).unwrap();
        let b = integrate_temperature(t0, Heating::Current(i), &p, &w, 2.5, 3600.0).unwrap();
        assert!((a.kelvin() - b.kelvin()).abs() < 1e-3, "I={i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn root_zeroes_the_balance(joule in 0.0f64..150.0, conv in 0.3f64..3.0) {
        let p = drake();
        let w = Weather::with_conv_coeff(conv);
        let t = steady_state_temperature(joule, &p, &w).unwrap();
        prop_assert!(thermal_rhs(t, joule, &p, &w).abs() < 1e-4);
        prop_assert!((t - newton_root(joule, &p, &w)).abs() < 1e-5);
    }

    #[test]
    fn energy_balance_sign(joule in 0.0f64..150.0, offset in 0.05f64..80.0) {
        let p = drake();
        let w = Weather::calm();
        let t = steady_state_temperature(joule, &p, &w).unwrap();
        prop_assert!(thermal_rhs(t + offset, joule, &p, &w) < 0.0);
        prop_assert!(thermal_rhs(t - offset, joule, &p, &w) > 0.0);
    }

    #[test]
    fn relaxation_is_monotone(joule in 0.0f64..120.0, start in 250.0f64..450.0, dt in 1.0f64..10.0) {
        let p = drake();
        let w = Weather::calm();
        let target = steady_state_temperature(joule, &p, &w).unwrap();
        let heating = Heating::Joule(joule);
        let mut t = start;
        let rising = start < target;
        for _ in 0..2000 {
            let next = rk4_step(t, &heating, &p, &w, dt);
            if rising {
                prop_assert!(next >= t - 1e-12 && next <= target + 1e-6);
            } else {
                prop_assert!(next <= t + 1e-12 && next >= target - 1e-6);
            }
            t = next;
        }
    }

    #[test]
    fn ampacity_duality(margin in 1.0f64..90.0, conv in 0.5f64..2.5) {
        let p = drake();
        let w = Weather::with_conv_coeff(conv);
        let rating = steady_state_temperature(0.0, &p, &w).unwrap() + margin;
        let i = steady_state_ampacity(rating, &p, &w).unwrap();
        let joule = i * i * resistance_at(rating, &p);
        let t = steady_state_temperature(joule, &p, &w).unwrap();
        prop_assert!((t - rating).abs() < 1e-3);
        let held = steady_state_temperature_with(Heating::Current(i), &p, &w, 2000.0).unwrap();
        prop_assert!((held - rating).abs() < 1e-3);
    }
}
