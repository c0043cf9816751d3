use absorb_core::bohm::{evolve_series, mc_exit_statistics_with, simulate_sequence, BohmSeries, InitialSampler};
use absorb_core::domain::{
    gaussian_packet, make_grid, Face, FaceId, Interval1D, PhysicalConstants, PotentialSpec, Side, WaveFunctionNP,
};
use absorb_core::moving::{evolve_moving, DomainTrajectory, KappaRule, MovingParticle, MovingPotential};
use absorb_core::multiparticle::{first_detection_distribution, SystemParams};
use absorb_core::stats::ks_statistic;

fn pair_system() -> (WaveFunctionNP, SystemParams) {
    let g = make_grid(Interval1D::new(0.0, 6.0).unwrap(), 41).unwrap();
    let a = gaussian_packet(&g, 3.0, 0.5, 1.5).unwrap();
    let b = gaussian_packet(&g, 3.0, 0.5, -1.0).unwrap();
    let psi = WaveFunctionNP::product(&[("A".into(), &a), ("B".into(), &b)]).unwrap();
    let params = SystemParams::new(
        PhysicalConstants::default(),
        PotentialSpec::zero(),
        vec![Face::new("A", Side::Right, 1.5).unwrap(), Face::new("B", Side::Left, 1.0).unwrap()],
    );
    (psi, params)
}

#[test]
fn bohmian_first_exits_follow_the_first_detection_law() {
    let (psi, params) = pair_system();
    let h = params.hamiltonian(&psi).unwrap();
    let (t_max, dt) = (4.0, 0.02);
    let series = evolve_series(&psi, &h, &params.constants, t_max, dt).unwrap();
    let stats = mc_exit_statistics_with(&series, 2000, 21, 0.01).unwrap();
    let law = first_detection_distribution(&psi, &params, t_max, dt).unwrap();
    let ks = ks_statistic(&stats.exit_times(), |t| law.time_cdf(t));
    assert!(ks < 1.63 / 2000f64.sqrt() + 0.02, "{ks}");
}

#[test]
fn bohmian_sequences_are_valid_records() {
    let (psi, params) = pair_system();
    let h = params.hamiltonian(&psi).unwrap();
    let series = evolve_series(&psi, &h, &params.constants, 4.0, 0.02).unwrap();
    let sampler = InitialSampler::new(&psi);
    let mut rng = absorb_core::rng::stream(8, 0);
    let mut both = 0;
    for _ in 0..40 {
        let x0 = sampler.draw(&mut rng);
        let (rec, _) = simulate_sequence(&series, &params, &x0, 0.02, 0.01).unwrap();
        rec.validate().unwrap();
        both += usize::from(rec.detected_count() == 2);
    }
    assert!(both > 10, "{both}");
}

#[test]
fn moving_face_exit_speed_exceeds_face_speed_by_the_margin() {
    let c = PhysicalConstants::default();
    let iv = Interval1D::new(0.0, 10.0).unwrap();
    let (v, kappa) = (0.4, 1.0);
    let g = make_grid(iv, 201).unwrap();
    let psi = gaussian_packet(&g, 5.0, 0.7, 1.2).unwrap();
    let p = MovingParticle {
        label: "A".into(),
        trajectory: DomainTrajectory::translating(iv, v),
        n_points: 201,
        kappas: [KappaRule::Detector(kappa), KappaRule::Detector(kappa)],
        potential: MovingPotential::Zero,
    };
    let run = evolve_moving(&psi, &p, &c, 8.0, 0.01, 1).unwrap();
    let series = BohmSeries::from_moving_run(&run).unwrap();
    let stats = mc_exit_statistics_with(&series, 200, 4, 0.005).unwrap();
    let right = stats.exit_speeds(&FaceId::new("A", Side::Right));
    assert!(right.len() > 100);
    for s in right {
        // lab-frame outward velocity is ħκ_t/m = ħκ/m + v_n
        assert!((s - (kappa + v)).abs() < 1e-9, "{s}");
    }
}
