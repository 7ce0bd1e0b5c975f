use memres::characterize::{fit_device, synthetic_fit_traces};
use memres::device::NoiseSpec;
use memres::presets;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[test]
fn noiseless_fit_recovers_every_preset() {
    for p in presets::all::<f64>() {
        let vh = presets::v_high::<f64>(&p.label).unwrap();
        let (sweep, decay) = synthetic_fit_traces(&p, vh, NoiseSpec::noiseless()).unwrap();
        let f = fit_device(&p.label, &sweep, &decay, p.g_scale, 0.0, None).unwrap().params;
        let errs = [
            ("n0", rel(f.n0, p.n0)),
            ("ve", rel(f.ve, p.ve)),
            ("tau01", rel(f.tau01, p.tau01)),
            ("vtau1", rel(f.vtau1, p.vtau1)),
            ("tau02", rel(f.tau02, p.tau02)),
            ("vtau2", rel(f.vtau2, p.vtau2)),
            ("vt", rel(f.vt, p.vt)),
        ];
        for (name, e) in errs {
            assert!(e < 0.05, "{} {name} off by {:.2}%", p.label, e * 100.0);
        }
    }
}

#[test]
fn noisy_fit_recovers_ve_and_tau01() {
    for p in presets::all::<f64>() {
        let vh = presets::v_high::<f64>(&p.label).unwrap();
        let (sweep, decay) = synthetic_fit_traces(&p, vh, NoiseSpec::instrument(7)).unwrap();
        let f = fit_device(&p.label, &sweep, &decay, p.g_scale, 0.8e-9, None).unwrap().params;
        assert!(rel(f.ve, p.ve) < 0.10, "{} ve", p.label);
        assert!(rel(f.tau01, p.tau01) < 0.10, "{} tau01", p.label);
    }
}
