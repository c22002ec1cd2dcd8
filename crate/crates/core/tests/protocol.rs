use khalasi_core::env::{EnvPreset, Environment};
use khalasi_core::episode::{run_episode, EpisodeConfig, EpisodeRecord};
use khalasi_core::policy::{
    DriftPolicy, ExternalPolicy, GreedyPolicy, Outcome, Policy, PolicySpec,
};
use std::time::{Duration, Instant};

const STUB: &str = env!("CARGO_BIN_EXE_khalasi-policy-stub");

fn cfg(seed: u64) -> EpisodeConfig {
    let mut c = EpisodeConfig::new(EnvPreset::CylStatic);
    c.seed = seed;
    c.step_limit = 300;
    c
}

fn run(policy: &mut dyn Policy, seed: u64) -> EpisodeRecord {
    let env = Environment::from_preset(&EnvPreset::CylStatic).unwrap();
    run_episode(&cfg(seed), &env, policy).unwrap()
}

fn stub(args: &str, timeout: Duration) -> ExternalPolicy {
    ExternalPolicy::spawn(&format!("{STUB} {args}"), timeout).unwrap()
}

/// Records equal except for the policy label.
fn same_run(a: &EpisodeRecord, b: &EpisodeRecord) {
    let mut b = b.clone();
    b.summary.policy = a.summary.policy.clone();
    assert_eq!(*a, b);
}

#[test]
fn echo_zero_stub_reproduces_drift_bit_for_bit() {
    for seed in [1, 2] {
        let drift = run(&mut DriftPolicy, seed);
        let ext = run(&mut stub("zero", Duration::from_secs(10)), seed);
        same_run(&drift, &ext);
        assert_eq!(ext.summary.total_energy, 0.0);
    }
}

#[test]
fn greedy_stub_matches_builtin_greedy() {
    let builtin = run(&mut GreedyPolicy::default(), 5);
    let ext = run(&mut stub("greedy", Duration::from_secs(10)), 5);
    same_run(&builtin, &ext);
}

#[test]
fn out_of_box_actions_are_clamped() {
    let rec = run(&mut stub("wild", Duration::from_secs(10)), 3);
    assert_ne!(rec.summary.outcome, Outcome::Aborted);
    for row in &rec.rows[1..] {
        assert_eq!((row.a_l, row.a_r), (1.0, -1.0));
    }
}

#[test]
fn maps_are_shipped_when_requested() {
    // a stub that asks for maps still acts on the state alone
    let plain = run(&mut stub("greedy", Duration::from_secs(10)), 4);
    let with_maps = run(&mut stub("greedy --maps", Duration::from_secs(10)), 4);
    same_run(&plain, &with_maps);
}

#[test]
fn killed_stub_aborts_the_episode() {
    let rec = run(&mut stub("die-after=5", Duration::from_secs(10)), 1);
    assert_eq!(rec.summary.outcome, Outcome::Aborted);
    assert_eq!(rec.summary.steps, 5);
    assert!(rec.summary.abort_reason.is_some());
}

#[test]
fn protocol_violations_abort() {
    for mode in ["garbage", "wrong-step"] {
        let rec = run(&mut stub(mode, Duration::from_secs(10)), 1);
        assert_eq!(rec.summary.outcome, Outcome::Aborted, "{mode}");
        assert_eq!(rec.summary.steps, 0, "{mode}");
    }
}

#[test]
fn silent_stub_times_out() {
    let t = Instant::now();
    let rec = run(&mut stub("hang", Duration::from_millis(300)), 1);
    assert_eq!(rec.summary.outcome, Outcome::Aborted);
    let reason = rec.summary.abort_reason.unwrap();
    assert!(reason.contains("did not answer"), "{reason}");
    assert!(t.elapsed() < Duration::from_secs(5));
}

#[test]
fn exec_spec_instantiates_the_stub() {
    let spec: PolicySpec = format!("exec:{STUB} zero").parse().unwrap();
    let mut p = spec.instantiate(Duration::from_secs(10)).unwrap();
    let rec = run(&mut *p, 2);
    assert_eq!(rec.summary.policy, spec.to_string());
    same_run(&run(&mut DriftPolicy, 2), &rec);
}
