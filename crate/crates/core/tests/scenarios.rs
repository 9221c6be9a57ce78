use msfq_core::scenario::SweepOptions;
use msfq_core::{run_sweep, run_timeline, ModelConfig, Phase, Timeline, TimelineTrace};

fn cfg(lambda: f64) -> ModelConfig {
    ModelConfig::new(lambda, 15.0, 1.0)
        .unwrap()
        .with_mu0(1.0)
        .unwrap()
}

fn spike(peak: f64, seed: u64) -> TimelineTrace {
    let phases = vec![
        Phase {
            config: cfg(4.0),
            duration: 1_000.0,
        },
        Phase {
            config: cfg(peak),
            duration: 100.0,
        },
        Phase {
            config: cfg(4.0),
            duration: 1_000.0,
        },
    ];
    run_timeline(&Timeline::new(phases, seed, 50.0)).unwrap()
}

fn settled(trace: &TimelineTrace, phase: usize) -> f64 {
    let m: Vec<f64> = trace.phase_samples(phase).map(|s| s.metric).collect();
    let tail = &m[m.len() / 2..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

#[test]
fn spike_to_five_recovers() {
    let trace = spike(5.0, 1);
    assert!(trace.diverged_at.is_none());
    let (before, after) = (settled(&trace, 0), settled(&trace, 2));
    assert!(
        after <= 3.0 * before && before <= 3.0 * after,
        "{before} vs {after}"
    );
}

#[test]
fn spike_to_six_persists() {
    let trace = spike(6.0, 1);
    let final_phase_grows = {
        let m: Vec<f64> = trace.phase_samples(2).map(|s| s.metric).collect();
        !m.is_empty() && m.windows(2).all(|w| w[1] >= w[0])
    };
    assert!(
        trace.diverged_at.is_some() || final_phase_grows,
        "recovered: settled metric {} before, {} after",
        settled(&trace, 0),
        settled(&trace, 2)
    );
}

#[test]
fn phases_carry_the_backlog() {
    // Pile up requests in a short overload, then watch the next phase start
    // from that backlog rather than from scratch.
    let phases = vec![
        Phase {
            config: ModelConfig::new(14.0, 1.0, 1e6).unwrap(),
            duration: 10.0,
        },
        Phase {
            config: ModelConfig::new(1e-3, 1e-3, 1e6).unwrap(),
            duration: 1.0,
        },
    ];
    let trace = run_timeline(&Timeline::new(phases, 5, 10.0)).unwrap();
    let end_of_first = trace.phase_samples(0).last().unwrap().state;
    let start_of_second = trace.phase_samples(1).next().unwrap().state;
    assert!(end_of_first.queue > 50, "{end_of_first}");
    assert!(start_of_second.queue.abs_diff(end_of_first.queue) <= 1);
}

fn light_sweep() -> Vec<msfq_core::SweepRow> {
    let grid: Vec<ModelConfig> = (1..=14).map(|l| cfg(l as f64)).collect();
    run_sweep(&grid, 1e4, &[1, 2, 3], &SweepOptions::default()).unwrap()
}

#[test]
fn sweep_splits_into_stable_prefix_and_unstable_suffix() {
    let rows = light_sweep();
    let verdicts: Vec<bool> = rows.iter().map(|r| r.stationary).collect();
    let boundary = verdicts.iter().position(|s| !s).unwrap_or(verdicts.len());
    let stragglers = verdicts[boundary..].iter().filter(|&&s| s).count();
    assert!(stragglers <= 1, "{verdicts:?}");
    assert!(boundary > 0 && boundary < verdicts.len(), "{verdicts:?}");

    let metrics: Vec<f64> = rows[..boundary]
        .iter()
        .map(|r| r.final_metric.unwrap())
        .collect();
    assert!(metrics.windows(2).all(|w| w[1] > w[0]), "{metrics:?}");
    assert!(rows[boundary..]
        .iter()
        .filter(|r| !r.stationary)
        .all(|r| r.final_metric.is_none()));
}

#[test]
fn sweep_matches_spike_trichotomy() {
    let rows = light_sweep();
    assert!(rows[3].stationary && rows[4].stationary);
    assert!(!rows[5].stationary, "λ=6: {:?}", rows[5]);
}
