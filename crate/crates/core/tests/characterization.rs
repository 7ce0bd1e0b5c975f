use memres::characterize::{normalized_loop_area, ppf_surface, simulate_hysteresis, PpfProtocol};
use memres::presets;

#[test]
fn loop_area_shrinks_with_sweep_period() {
    for p in presets::all::<f64>() {
        let areas: Vec<f64> = [5.0, 1.0, 0.2, 0.05, 0.01]
            .iter()
            .map(|&f| normalized_loop_area(&simulate_hysteresis(&p, f, 0.170, 1e-4).unwrap()))
            .collect();
        assert!(areas.windows(2).all(|w| w[1] < w[0]), "{} {areas:?}", p.label);
    }
}

#[test]
fn loop_vanishes_in_the_quasi_static_limit() {
    for p in presets::all::<f64>() {
        let fast = normalized_loop_area(&simulate_hysteresis(&p, 1.0, 0.170, 1e-4).unwrap());
        let slow = normalized_loop_area(&simulate_hysteresis(&p, 1e-4, 0.170, 1e-3).unwrap());
        assert!(slow < 1e-2 * fast, "{}: {slow} vs {fast}", p.label);
    }
}

#[test]
fn higher_concentration_gives_the_wider_loop_at_200_mhz() {
    let area = |label: &str| {
        let p = presets::table_row::<f64>(label).unwrap();
        normalized_loop_area(&simulate_hysteresis(&p, 0.2, 0.170, 1e-4).unwrap())
    };
    assert!(area("3.0uM") > area("1.0uM"));
}

#[test]
fn facilitation_fades_with_pulse_interval() {
    let ipis = [1e-3, 2e-3, 5e-3, 10e-3, 20e-3, 50e-3];
    for p in presets::all::<f64>() {
        let surf = ppf_surface(&p, &[5e-3, 20e-3], &ipis, &PpfProtocol::default()).unwrap();
        for row in &surf {
            assert!(row.windows(2).all(|w| w[1] <= w[0]), "{} {row:?}", p.label);
            assert!(row[0] > 0.0);
        }
    }
}
