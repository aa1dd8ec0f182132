use approx::assert_relative_eq;
use tcqsim_core::analysis::{self, ChiFitFixed};
use tcqsim_core::device::{self, DispersiveShifts};
use tcqsim_core::experiments::{self, DecaySetup};
use tcqsim_core::fockspace::DimensionLayout;
use tcqsim_core::{Mode, TcqParams};

#[test]
fn tuned_coupling_shows_up_in_the_dispersive_spectrum() {
    let base = TcqParams::canonical();
    let g = device::g_minus_for_chi(&base, 0.5).unwrap();
    let params = base.with_g_minus(g);
    let chi = device::chi_minus_perturbative(&params).unwrap().chi_minus;
    assert_relative_eq!(chi, 0.5, max_relative = 1e-12);

    let layout = DimensionLayout::with_modes(&[(Mode::Cavity, 3), (Mode::QubitMinus, 2)]).unwrap();
    let h = device::build_dispersive_hamiltonian_with(
        &params,
        &layout,
        DispersiveShifts {
            chi_minus: chi,
            chi_plus: 0.0,
        },
    )
    .unwrap();
    let e =
        |nc: usize, nq: usize| h.matrix()[(layout.flatten(&[nc, nq]).unwrap(), layout.flatten(&[nc, nq]).unwrap())].re;
    let shift = (e(1, 1) - e(1, 0) - e(0, 1) + e(0, 0)) / device::TWO_PI;
    assert_relative_eq!(shift, 0.5, max_relative = 1e-9);
}

#[test]
fn noiseless_synthetic_data_fit_back_exactly() {
    let fixed = ChiFitFixed {
        kappa: 0.25,
        t1: 11.0,
        gamma_extra: 0.01,
    };
    let n_th = analysis::linspace(0.0, 0.2, 30);
    let t2 = analysis::synthetic_t2_vs_nth(0.3, &fixed, &n_th, 0.0, 0).unwrap();
    let fit = analysis::fit_chi_from_t2(&n_th, &t2, &fixed).unwrap();
    assert!(fit.converged);
    assert_relative_eq!(fit.value("chi").unwrap().abs(), 0.3, max_relative = 1e-6);
}

#[test]
fn echo_without_dispersive_shift_is_relaxation_limited() {
    let setup = DecaySetup {
        chi: 0.0,
        kappa: 0.25,
        gamma1: 0.1,
        n_th: 0.1,
        cavity_dim: 3,
    };
    let t1 = experiments::t1_experiment_with(&setup, &experiments::default_delays(10.0)).unwrap();
    assert_relative_eq!(t1.extracted_t, 10.0, max_relative = 1e-3);
    let echo = experiments::echo_experiment_with(&setup, &experiments::default_delays(20.0)).unwrap();
    assert_relative_eq!(echo.extracted_t, 20.0, max_relative = 1e-3);
    assert_relative_eq!(setup.analytic_t2().unwrap(), 20.0, max_relative = 1e-12);
}

#[test]
fn shipped_device_file_is_the_canonical_record() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/device.canonical.json");
    let text = std::fs::read_to_string(path).unwrap();
    let params: TcqParams = serde_json::from_str(&text).unwrap();
    assert_eq!(params, TcqParams::canonical());
    params.validate().unwrap();
}
