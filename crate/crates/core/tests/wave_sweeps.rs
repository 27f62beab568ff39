use wlde_core::kernels::KernelSpec;
use wlde_core::waves::{run_wave, sweep, SweepAxis, WaveSetup};

fn small() -> WaveSetup {
    WaveSetup {
        sites: 1000,
        generations: 200,
        ..WaveSetup::default()
    }
}

#[test]
fn single_point_sweep_matches_direct_run() {
    let setup = small();
    let spec = KernelSpec::Gaussian { sigma: 1.0 };
    let rows = sweep(SweepAxis::Delta, &[setup.delta], &setup, &[("gaussian".into(), spec)]).unwrap();
    assert_eq!(rows.len(), 1);
    let direct = run_wave(&setup, &spec).unwrap();
    assert_eq!(rows[0].c_star, direct.speed.c_star);
    assert_eq!(rows[0].died, direct.speed.died);
}

#[test]
fn heavier_tail_runs_faster() {
    let setup = small();
    let cauchy = run_wave(&setup, &KernelSpec::Cauchy { gamma: 1.0 }).unwrap().speed.c_star;
    let gaussian = run_wave(&setup, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap().speed.c_star;
    assert!(cauchy > gaussian, "cauchy {cauchy} gaussian {gaussian}");
}

#[test]
fn release_below_threshold_dies() {
    let setup = WaveSetup {
        amplitude: 0.3,
        ..small()
    };
    let run = run_wave(&setup, &KernelSpec::Gaussian { sigma: 1.0 }).unwrap();
    assert!(!run.speed.is_advancing());
}
