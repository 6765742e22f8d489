use proptest::prelude::*;
use sflock::io::{read_trajectory, write_trajectory};
use sflock::parallel::ThreadedField;
use sflock_core::diagnostics::ResolvedDiagnostics;
use sflock_core::integrator::simulate;
use sflock_core::sampling::Sampler;
use sflock_core::{AccelerationField, DiagnosticsConfig, Dynamics, Error, IntegratorConfig, ModelParams, ParticleState};

fn random_state(n: usize, d: usize, seed: u64) -> ParticleState {
    let mut rng = Sampler::new(seed);
    let x = (0..n * d).map(|_| rng.uniform_in(0.0, 10.0)).collect();
    let v = (0..n * d).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    ParticleState::new(0.0, n, d, x, v).unwrap()
}

#[test]
fn trajectory_csv_round_trips_bitwise() {
    let p = ModelParams::new(5, 3).gamma(0.9);
    let st = random_state(5, 3, 4);
    let rec = simulate(&st, &p, &IntegratorConfig::for_horizon(1.0), 1.0, 0.1, &DiagnosticsConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &rec.samples).unwrap();
    let back = read_trajectory(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rec.samples.len());
    for (a, b) in back.iter().zip(&rec.samples) {
        assert_eq!(a.time.to_bits(), b.state.time.to_bits());
        assert!(a.positions.iter().zip(&b.state.positions).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.velocities.iter().zip(&b.state.velocities).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

proptest! {
    #[test]
    fn csv_round_trip_any_values(vals in prop::collection::vec(-1e300f64..1e300, 8)) {
        let st = ParticleState::new(0.5, 2, 2, vals[..4].to_vec(), vals[4..].to_vec()).unwrap();
        let p = ModelParams::new(2, 2).weight(sflock_core::WeightKind::RegularCs { beta: 0.0 });
        let frame = ResolvedDiagnostics::new(&DiagnosticsConfig::default(), &st, &p).unwrap().frame(&st);
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &[sflock_core::Sample { state: st.clone(), frame }]).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &st);
    }
}

#[test]
fn threaded_field_matches_serial_bitwise() {
    for (n, threads) in [(100, 4), (64, 3), (40, 8), (5, 4)] {
        let p = ModelParams::new(n, 2).alpha(1.3).gamma(0.8);
        let st = random_state(n, 2, n as u64);
        let serial = Dynamics::new(&p).unwrap();
        let threaded = ThreadedField::new(Dynamics::new(&p).unwrap(), threads);
        let mut a = vec![0.0; n * 2];
        let mut b = vec![0.0; n * 2];
        serial.accelerations(&st.positions, &st.velocities, &mut a).unwrap();
        threaded.accelerations(&st.positions, &st.velocities, &mut b).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "n {n} threads {threads}");
    }
}

#[test]
fn threaded_field_reports_the_same_singular_pair() {
    let p = ModelParams::new(80, 1);
    let mut st = random_state(80, 1, 3);
    st.positions[70] = st.positions[50];
    st.positions[31] = st.positions[12];
    let mut out = vec![0.0; 80];
    let serial = Dynamics::new(&p).unwrap().accelerations(&st.positions, &st.velocities, &mut out);
    let threaded = ThreadedField::new(Dynamics::new(&p).unwrap(), 4).accelerations(&st.positions, &st.velocities, &mut out);
    assert!(matches!(serial, Err(Error::Singularity { .. })));
    assert_eq!(serial, threaded);
}
