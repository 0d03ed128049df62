use linetemp::acpf::*;
use linetemp::thermo::ThermalLineParams;
use num_complex::Complex64;
use proptest::prelude::*;

fn example_b_network() -> NetworkModel<f64> {
    let cfg = linetemp::config::load_scenario(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example_b.cfg")).unwrap();
    cfg.to_scenario().unwrap().network
}

fn injections(net: &NetworkModel<f64>, level: f64, gen2: f64, gen4: f64) -> Vec<Complex64> {
    let mut inj = net.load_injections(level);
    inj[net.bus_index(2).unwrap()] += Complex64::new(gen2, 0.75 * gen2);
    inj[net.bus_index(4).unwrap()] += Complex64::new(gen4, 0.0);
    inj
}

/// Bus admittance matrix assembled from the π-model of every branch.
fn ybus(net: &NetworkModel<f64>) -> Vec<Vec<Complex64>> {
    let n = net.buses().len();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in net.branches() {
        let ys = Complex64::new(br.current_resistance, br.reactance).inv();
        let sh = Complex64::new(0.0, br.shunt_susceptance_half);
        let (a, b) = (br.from, br.to);
        y[a][a] += ys + sh;
        y[b][b] += ys + sh;
        y[a][b] -= ys;
        y[b][a] -= ys;
    }
    y
}

/// Plain Gauss-Seidel iteration, slack held fixed.
fn gauss_seidel(net: &NetworkModel<f64>, inj: &[Complex64]) -> Vec<Complex64> {
    let y = ybus(net);
    let n = y.len();
    let slack = net.slack_index();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    v[slack] = Complex64::new(net.slack_voltage, 0.0);
    for _ in 0..20_000 {
        let mut delta: f64 = 0.0;
        for i in (0..n).filter(|&i| i != slack) {
            let mut sum = Complex64::new(0.0, 0.0);
            for k in (0..n).filter(|&k| k != i) {
                sum += y[i][k] * v[k];
            }
            let next = ((inj[i] / v[i]).conj() - sum) / y[i][i];
            delta = delta.max((next - v[i]).norm());
            v[i] = next;
        }
        if delta < 1e-13 {
            break;
        }
    }
    v
}

#[test]
fn newton_agrees_with_gauss_seidel_on_five_bus_case() {
    let net = example_b_network();
    let inj = injections(&net, 1.0, 0.25, 0.2);
    let sol = solve_power_flow(&net, &inj, None).unwrap();
    let gs = gauss_seidel(&net, &inj);
    for (i, v) in gs.iter().enumerate() {
        assert!((sol.voltage(i) - v).norm() < 1e-7, "bus {i}: {} vs {v}", sol.voltage(i));
    }
}

#[test]
fn slack_supplies_exactly_the_losses() {
    let net = example_b_network();
    let inj = injections(&net, 0.9, 0.3, 0.1);
    let sol = solve_power_flow(&net, &inj, None).unwrap();
    let s = bus_powers(&net, &sol);
    let total_injected: f64 = s.iter().map(|x| x.re).sum();
    let losses: f64 = net.branches().iter().map(|b| line_loss_pu(&sol, b)).sum();
    assert!((total_injected - losses).abs() < 1e-8, "{total_injected} vs {losses}");
}

fn random_branch(r: f64, x: f64) -> Branch<f64> {
    Branch::new("a-b", 0, 1, r, x, 0.0, ThermalLineParams::drake_acsr(10_000.0))
}

fn solution(vy: f64, vz: f64, ty: f64, tz: f64) -> PowerFlowSolution<f64> {
    PowerFlowSolution { vm: vec![vy, vz], va: vec![ty, tz], converged: true, iterations: 0, max_mismatch: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn loss_identity(
        vy in 0.85f64..1.15, vz in 0.85f64..1.15,
        ty in -0.6f64..0.6, tz in -0.6f64..0.6,
        r in 0.0f64..0.2, x in 0.01f64..0.5,
    ) {
        let br = random_branch(r, x);
        let sol = solution(vy, vz, ty, tz);
        let a = Complex64::from_polar(vy, ty);
        let b = Complex64::from_polar(vz, tz);
        let i = (a - b) / Complex64::new(r, x);
        let sending = (a * i.conj()).re;
        let receiving = (b * i.conj()).re;
        prop_assert!((line_loss_pu(&sol, &br) - (sending - receiving)).abs() < 1e-10);
    }

    #[test]
    fn loss_is_symmetric(
        vy in 0.85f64..1.15, vz in 0.85f64..1.15,
        ty in -0.6f64..0.6, tz in -0.6f64..0.6,
        r in 0.0f64..0.2, x in 0.01f64..0.5,
    ) {
        let fwd = Branch::new("a-b", 0, 1, r, x, 0.0, ThermalLineParams::drake_acsr(10_000.0));
        let rev = Branch::new("b-a", 1, 0, r, x, 0.0, ThermalLineParams::drake_acsr(10_000.0));
        let sol = solution(vy, vz, ty, tz);
        prop_assert!((line_loss_pu(&sol, &fwd) - line_loss_pu(&sol, &rev)).abs() < 1e-14);
    }

    #[test]
    fn converged_solutions_carry_a_mismatch_certificate(
        level in 0.3f64..1.1, gen2 in 0.0f64..0.4, gen4 in 0.0f64..0.35,
    ) {
        let net = example_b_network();
        let inj = injections(&net, level, gen2, gen4);
        let sol = solve_power_flow(&net, &inj, None).unwrap();
        let s = bus_powers(&net, &sol);
        for i in (0..inj.len()).filter(|&i| i != net.slack_index()) {
            prop_assert!((s[i] - inj[i]).re.abs() < 1e-8);
            prop_assert!((s[i] - inj[i]).im.abs() < 1e-8);
        }
    }

    #[test]
    fn warm_start_reaches_the_flat_start_solution(
        level in 0.3f64..1.1, gen2 in 0.0f64..0.4, bump in -0.1f64..0.1,
    ) {
        let net = example_b_network();
        let first = solve_power_flow(&net, &injections(&net, level, gen2, 0.1), None).unwrap();
        let inj = injections(&net, level + bump, gen2, 0.1);
        let cold = solve_power_flow(&net, &inj, None).unwrap();
        let warm = solve_power_flow(&net, &inj, Some(&first)).unwrap();
        for i in 0..inj.len() {
            prop_assert!((cold.vm[i] - warm.vm[i]).abs() < 1e-6);
            prop_assert!((cold.va[i] - warm.va[i]).abs() < 1e-6);
        }
    }
}
