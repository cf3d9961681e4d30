use hess_core::battery::{self, BatteryParams, BatteryState, ThermalParams};
use hess_core::supercap::{sc_soc, sc_step, SupercapParams, SupercapState};
use proptest::prelude::*;

#[test]
fn polarization_tracks_closed_form_at_tenth_tau() {
    let params = BatteryParams::default();
    let tau = params.tau();
    let dt = tau / 10.0;
    let current = 80.0;
    let mut s = BatteryState::new(0.8, 298.15);
    for n in 1..=100 {
        s = battery::battery_step(&s, &params, current, dt);
        let exact = current * (1.0 - (-(n as f64) * dt / tau).exp());
        assert!((s.i_pol - exact).abs() <= 0.01 * current, "step {n}: {} vs {exact}", s.i_pol);
    }
}

#[test]
fn lossless_pack_delivers_source_energy() {
    let params = BatteryParams { r_ohm: 1e-9, eta_coulomb: 1.0, ..Default::default() };
    let thermal = ThermalParams::default();
    let mut s = BatteryState::new(0.9, 298.15);
    for k in 0..200 {
        let i = 60.0 * ((k as f64) * 0.1).sin();
        let v_src = s.effective_voltage(&params);
        let next = battery::advance(&s, &params, &thermal, i, 1.0);
        let delivered = next.u_terminal * i;
        assert!((delivered - v_src * i).abs() <= 1e-9 * (v_src * i).abs().max(1.0));
        s = next.state;
    }
}

#[test]
fn bank_charge_is_conserved_at_rest() {
    let p = SupercapParams::default();
    let mut s = SupercapState { u_b: 200.0, u_s: 140.0, q_loss_acc: 0.0 };
    for _ in 0..1000 {
        let q0 = s.charge(&p);
        s = sc_step(&s, &p, 0.0, 0.5);
        assert!((s.charge(&p) - q0).abs() <= 1e-9 * q0);
    }
    assert!((s.u_b - s.u_s).abs() < 1e-6);
}

proptest! {
    #[test]
    fn soc_stays_in_unit_interval(
        soc0 in 0.0f64..=1.0,
        currents in prop::collection::vec(-2000.0f64..2000.0, 1..60),
        dt in 0.1f64..50.0,
    ) {
        let params = BatteryParams { c_bulk: 1e9, ..Default::default() };
        let thermal = ThermalParams::default();
        let mut s = BatteryState::new(soc0, 298.15);
        for i in currents {
            let next = battery::advance(&s, &params, &thermal, i, dt).state;
            prop_assert!((0.0..=1.0).contains(&next.soc));
            prop_assert!(next.q_loss_acc >= s.q_loss_acc);
            prop_assert!(next.ah_throughput >= s.ah_throughput);
            s = next;
        }
    }

    #[test]
    fn bank_charge_conserved_for_any_rest_state(u_b in 120.0f64..240.0, u_s in 120.0f64..240.0, dt in 0.01f64..1.0) {
        let p = SupercapParams::default();
        let s = SupercapState { u_b, u_s, q_loss_acc: 0.0 };
        let q0 = s.charge(&p);
        let next = sc_step(&s, &p, 0.0, dt);
        prop_assert!((next.charge(&p) - q0).abs() <= 1e-9 * q0);
        prop_assert!((0.0..=1.0).contains(&sc_soc(&next, &p)));
    }

    #[test]
    fn bank_charge_moves_by_current(i in -200.0f64..200.0, dt in 0.01f64..1.0) {
        let p = SupercapParams::default();
        let s = SupercapState::at_soc(&p, 0.5);
        let next = sc_step(&s, &p, i, dt);
        let moved = s.charge(&p) - next.charge(&p);
        prop_assert!((moved - i * dt).abs() <= 1e-9 * s.charge(&p));
    }
}
