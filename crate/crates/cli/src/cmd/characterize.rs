use std::io::Write as _;

use memres::characterize::{
    decay_fits, loop_area, normalized_loop_area, ppf, ppf_surface, simulate_step_decay_with, simulate_sweep_with,
    simulate_waveform, triangle_waveform, Instrument, IvTrace, PpfProtocol, StepDecayProtocol,
};
use memres::device::NoiseSpec;
use memres::presets::{self, PresetBook};
use memres::tasks::VoltageWaveform;
use serde_json::{json, Value};

use crate::args::{CharacterizeArgs, Which};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, print_json, write_json, write_with};

fn name(which: Which) -> &'static str {
    match which {
        Which::Sweep => "sweep",
        Which::Hysteresis => "hysteresis",
        Which::Decay => "decay",
        Which::Ppf => "ppf",
        Which::PpfSurface => "ppf_surface",
    }
}

pub fn run(a: &CharacterizeArgs, book: &PresetBook<f64>) -> CliResult<()> {
    let p = book.get(&a.device)?;
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(CliError::input("--noise must be >= 0"));
    }
    let inst = Instrument { method: a.method.into(), noise: NoiseSpec { current_rms: a.noise, seed: a.seed } };
    ensure_dir(&a.out)?;
    let stem = name(a.which);
    let csv = a.out.join(format!("{stem}.csv"));
    let write_trace = |tr: &IvTrace<f64>| write_with(&csv, |w| tr.write_csv(w));
    let base = json!({ "device": p.label, "protocol": stem });
    let details: Value = match a.which {
        Which::Sweep => {
            let tr = simulate_sweep_with(&p, a.rate, a.vmax, a.dt, &inst)?;
            write_trace(&tr)?;
            json!({ "rate_V_per_s": a.rate, "v_max_V": a.vmax, "samples": tr.len(), "noise_rms_A": a.noise })
        }
        Which::Hysteresis => {
            if a.freq <= 0.0 {
                return Err(CliError::input("--freq must be > 0"));
            }
            let wf = triangle_waveform(a.vmax, 0.5 / a.freq, a.dt)?;
            let tr = simulate_waveform(&p, &wf, p.rest_state(0.0), &inst)?;
            write_trace(&tr)?;
            json!({
                "freq_Hz": a.freq,
                "v_max_V": a.vmax,
                "loop_area_W": loop_area(&tr),
                "normalized_loop_area": normalized_loop_area(&tr),
            })
        }
        Which::Decay => {
            let v_high = match a.v_high.or_else(|| presets::v_high(&p.label)) {
                Some(v) => v,
                None => return Err(CliError::input(format!("device `{}` has no default --v-high", p.label))),
            };
            let mut proto = StepDecayProtocol::with_ladder(v_high, a.v_low_from, a.v_low_step, a.v_low_margin);
            if proto.v_lows.is_empty() {
                return Err(CliError::input("the low-level ladder is empty; lower --v-low-from or --v-low-margin"));
            }
            proto.hold_high = a.hold_high;
            proto.hold_low = a.hold_low;
            proto.dt = a.dt;
            let tr = simulate_step_decay_with(&p, &proto, &inst)?;
            write_trace(&tr)?;
            let fits: Vec<Value> = decay_fits(&tr, a.noise)?
                .into_iter()
                .map(|(v, f)| json!({ "v_low_V": v, "tau_s": f.tau, "g0_S": f.g0, "residual": f.residual }))
                .collect();
            json!({ "v_high_V": v_high, "v_lows_V": proto.v_lows, "fits": fits })
        }
        Which::Ppf => {
            let r = ppf(&p, a.v_pulse, a.v_off, a.pw, a.ipi, a.dt)?;
            let mut wf = VoltageWaveform::empty(a.dt);
            wf.hold(a.v_pulse, a.pw).hold(a.v_off, a.ipi).hold(a.v_pulse, a.pw);
            let tr = simulate_waveform(&p, &wf, p.rest_state(a.v_off), &inst)?;
            write_trace(&tr)?;
            json!({
                "v_pulse_V": a.v_pulse,
                "v_off_V": a.v_off,
                "pw_s": a.pw,
                "ipi_s": a.ipi,
                "peak_a_A": r.peak_a,
                "peak_b_A": r.peak_b,
                "ppf_percent": r.ppf_percent,
            })
        }
        Which::PpfSurface => {
            let proto = PpfProtocol { v_pulse: a.v_pulse, v_off: a.v_off, dt: a.dt };
            let grid = ppf_surface(&p, &a.pws, &a.ipis, &proto)?;
            write_with(&csv, |w| {
                writeln!(w, "pw_s,ipi_s,ppf_percent")?;
                for (pw, row) in a.pws.iter().zip(&grid) {
                    for (ipi, v) in a.ipis.iter().zip(row) {
                        writeln!(w, "{pw},{ipi},{v}")?;
                    }
                }
                Ok(())
            })?;
            json!({ "v_pulse_V": a.v_pulse, "v_off_V": a.v_off, "pw_s": a.pws, "ipi_s": a.ipis, "ppf_percent": grid })
        }
    };
    let mut summary = base;
    if let (Value::Object(s), Value::Object(d)) = (&mut summary, details) {
        s.extend(d);
    }
    write_json(&a.out.join(format!("{stem}.json")), &summary)?;
    print_json(&summary)?;
    Ok(())
}
