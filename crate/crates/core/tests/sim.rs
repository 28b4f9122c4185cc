//! Mission engine: motion, measurement events, planning rounds and logs.

use radarnav::config::Config;
use radarnav::estimator::{MeasurementModel, TrackStore};
use radarnav::geometry::Position2;
use radarnav::radar::{Measurement, NoiseModel};
use radarnav::sim::*;

fn config(seed: u64, t_max: f64) -> Config {
    let mut cfg = Config::default();
    cfg.scenario.seed = seed;
    cfg.sim.t_max = t_max;
    cfg
}

fn ticks(logs: &[LogRecord]) -> Vec<(f64, Vec<Position2>, usize)> {
    logs.iter()
        .filter_map(|r| match r {
            LogRecord::Tick { t, positions, intercepts } => Some((*t, positions.clone(), *intercepts)),
            _ => None,
        })
        .collect()
}

#[test]
fn idle_scout_stays_put() {
    let m = Mission::with_radars(MissionSetup::new(config(0, 100.0), PlannerMode::Lawnmower), vec![], 1).unwrap();
    let mut st = m.initial_state();
    let here = st.scouts[0].position;
    st.scouts[0].route.clear();
    st.scouts[0].waypoint = Some(here);
    for _ in 0..10 {
        m.step(&mut st, 1.0).unwrap();
    }
    assert_eq!(st.scouts[0].position, here);
    assert_ne!(st.scouts[1].position, m.initial_state().scouts[1].position);
}

#[test]
fn halving_the_step_keeps_sweep_positions() {
    let run = |dt: f64| {
        let mut cfg = config(0, 150.0);
        cfg.sim.dt = dt;
        cfg.sim.coverage_to_attempt = 2.0;
        Mission::with_radars(MissionSetup::new(cfg, PlannerMode::Lawnmower), vec![], 1).unwrap().run().unwrap()
    };
    let (a, b) = (ticks(&run(1.0).logs), ticks(&run(0.5).logs));
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), 151);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0, y.0);
        for (p, q) in x.1.iter().zip(&y.1) {
            assert!(p.distance(*q) < 1e-6, "t={}: {p:?} vs {q:?}", x.0);
        }
    }
}

#[test]
fn scouts_move_at_their_speed() {
    let m = Mission::with_radars(MissionSetup::new(config(0, 100.0), PlannerMode::Lawnmower), vec![], 1).unwrap();
    let mut st = m.initial_state();
    let start: Vec<Position2> = st.scouts.iter().map(|s| s.position).collect();
    m.step(&mut st, 1.0).unwrap();
    for (s, p) in st.scouts.iter().zip(&start) {
        assert!((s.position.distance(*p) - 50.0).abs() < 1e-9);
    }
}

#[test]
fn empty_field_has_no_intercepts() {
    let mut cfg = config(0, 60.0);
    cfg.sim.coverage_to_attempt = 2.0;
    let out = Mission::with_radars(MissionSetup::new(cfg, PlannerMode::Ours), vec![], 1).unwrap().run().unwrap();
    assert!(ticks(&out.logs).iter().all(|t| t.2 == 0));
    assert!(!out.logs.iter().any(|r| matches!(r, LogRecord::Measurement { .. } | LogRecord::TrackInit { .. })));
    assert!(!out.found);
}

#[test]
fn explored_empty_field_dispatches_immediately() {
    let m = Mission::with_radars(MissionSetup::new(config(0, 100.0), PlannerMode::Ours), vec![], 1).unwrap();
    let mut st = m.initial_state();
    let mut agent = 1000;
    for i in 0..=22 {
        for j in 0..=22 {
            st.history.push(agent, -1.0, Position2::new(1000.0 * i as f64, 1000.0 * j as f64)).unwrap();
            agent += 1;
        }
    }
    let out = m.run_from(st).unwrap();
    assert!(out.found);
    assert_eq!(out.t_found, Some(0.0));
    assert!(out.plan.unwrap().dispatchable);
    assert_eq!(out.truth_max_pd, Some(0.0));
}

#[test]
fn zero_time_cap_ends_without_a_path() {
    let out = run_mission(MissionSetup::new(config(0, 0.0), PlannerMode::Ours)).unwrap();
    assert!(!out.found);
    assert_eq!(out.attempts, 0);
    assert!(matches!(out.logs.last(), Some(LogRecord::End { found: false, .. })));
}

#[test]
fn missions_replay_byte_for_byte() {
    let setup = MissionSetup::new(config(2, 300.0), PlannerMode::Ours);
    let a = run_mission(setup.clone()).unwrap();
    let b = run_mission(setup).unwrap();
    assert_eq!(a, b);
    let (mut ja, mut jb) = (Vec::new(), Vec::new());
    write_log(&a.logs, &mut ja).unwrap();
    write_log(&b.logs, &mut jb).unwrap();
    assert_eq!(ja, jb);
    assert_eq!(read_log(std::str::from_utf8(&ja).unwrap()).unwrap(), a.logs);
    if a.found {
        let plan = a.plan.as_ref().unwrap();
        assert!(plan.dispatchable);
        let attempt = a.logs.iter().rev().find_map(|r| match r {
            LogRecord::HpAttempt { dispatchable, t, .. } => Some((*dispatchable, *t)),
            _ => None,
        });
        assert_eq!(attempt, Some((true, a.t_found.unwrap())));
    }
}

#[test]
fn sweeps_never_log_waypoint_rounds() {
    let out = run_mission(MissionSetup::new(config(1, 120.0), PlannerMode::Lawnmower)).unwrap();
    assert!(!out.logs.iter().any(|r| matches!(r, LogRecord::Waypoints { .. })));
    let ours = run_mission(MissionSetup::new(config(1, 120.0), PlannerMode::Ours)).unwrap();
    assert!(ours.logs.iter().any(|r| matches!(r, LogRecord::Waypoints { .. })));
}

#[test]
fn measurement_log_rebuilds_the_tracks() {
    let cfg = config(0, 60.0);
    let mut setup = MissionSetup::new(cfg.clone(), PlannerMode::Ours);
    setup.log_measurements = true;
    let m = Mission::new(setup).unwrap();
    let mut st = m.initial_state();
    m.process_events(&mut st).unwrap();
    for _ in 0..40 {
        m.step(&mut st, cfg.sim.dt).unwrap();
    }
    let sc = &cfg.scenario;
    let model = MeasurementModel { g_i: sc.g_i(), lambda: sc.radar.lambda, noise: NoiseModel::from_config(sc) };
    let mut replay = TrackStore::new(model, sc.region.center());
    let mut n = 0;
    for r in &st.log {
        if let LogRecord::Measurement { t, agent, radar, s_e, phi, location } = *r {
            replay.ingest(Measurement { s_e, phi, location, agent_id: agent, radar_id: radar, time: t }, cfg.sim.n_z_min);
            n += 1;
        }
    }
    assert_eq!(n, st.total_intercepts);
    assert!(n > 0);
    assert!(!st.tracks.estimates().is_empty());
    assert_eq!(replay.estimates(), st.tracks.estimates());
}

#[test]
fn coverage_grows_with_history() {
    let m = Mission::with_radars(MissionSetup::new(config(0, 100.0), PlannerMode::Ours), vec![], 1).unwrap();
    assert_eq!(coverage(&[], &m.ctx), 0.0);
    let c = coverage(&[Position2::new(11_000.0, 11_000.0)], &m.ctx);
    assert!(c > 0.0 && c <= 1.0);
}
