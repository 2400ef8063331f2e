use super::{
    check_signal, check_step, held_field, run_segment, DisturbanceSignal, Rk4, SegmentEnd, SimError, Trajectory,
    DEFAULT_EVENT_TOL, DEFAULT_STEP,
};
use crate::models::{ModelError, Plant, Trigger};
use crate::schedulers::SchedulerPolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub step: f64,
    /// Bisection tolerance for event-triggered crossings (s).
    pub event_tol: f64,
    /// Keep the full trajectory in the result.
    pub record: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            event_tol: DEFAULT_EVENT_TOL,
            record: false,
        }
    }
}

/// Outcome of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub scheme: &'static str,
    pub horizon: f64,
    /// Sampling instants `t_i`, starting at `0`.
    pub sampling_times: Vec<f64>,
    /// Dwell assigned at each sampling instant. For the event-triggered
    /// scheme this is the realized crossing interval, so the last entry is
    /// missing when the horizon ends the run first.
    pub dwells: Vec<f64>,
    /// Largest `φ(ξ(t))` over all integration points.
    pub max_phi: f64,
    pub final_state: Vec<f64>,
    pub trajectory: Option<Trajectory>,
}

impl SimResult {
    pub fn samplings(&self) -> usize {
        self.sampling_times.len()
    }

    pub fn min_dwell(&self) -> Option<f64> {
        self.dwells.iter().copied().reduce(f64::min)
    }
}

/// Runs the sampled-data loop from `x0` over `[0, T]`.
///
/// At each sampling instant the error is reset to zero and the scheduler
/// picks the next instant; event-triggered runs end each segment at the
/// detected crossing of `φ`.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_run(
    plant: &dyn Plant,
    trigger: &dyn Trigger,
    scheduler: &SchedulerPolicy,
    x0: &[f64],
    signal: &DisturbanceSignal,
    horizon: f64,
    options: &RunOptions,
) -> Result<SimResult, SimError> {
    let n = plant.state_dim();
    if x0.len() != n || trigger.state_dim() != n {
        return Err(ModelError::Dimension {
            expected: n,
            got: x0.len(),
        }
        .into());
    }
    check_step(options.step, horizon)?;
    check_signal(plant, signal)?;

    let mut xi: Vec<f64> = x0.iter().copied().chain(std::iter::repeat_n(0.0, n)).collect();
    let mut rk = Rk4::new(2 * n);
    let mut field = held_field(plant, signal);
    let event = |s: &[f64]| trigger.value(s);

    let mut trajectory = options.record.then(|| Trajectory::new(options.step, 2 * n));
    let mut sampling_times = Vec::new();
    let mut dwells = Vec::new();
    let mut max_phi = f64::NEG_INFINITY;
    let mut t = 0.0;

    while t < horizon {
        // Sampling instant: the error resets and the controller sees ζ(t_i).
        for e in &mut xi[n..] {
            *e = 0.0;
        }
        sampling_times.push(t);
        let phi = trigger.value(&xi);
        max_phi = max_phi.max(phi);
        if let Some(traj) = trajectory.as_mut() {
            traj.push(t, &xi, Some(phi));
        }

        let dwell = scheduler.dwell(&xi[..n]).map_err(|source| SimError::Coverage {
            t,
            state: xi[..n].to_vec(),
            source,
        })?;
        let (t_end, event_fn) = match dwell {
            Some(d) => {
                if !(d > 0.0) {
                    return Err(SimError::NonPositiveDwell { t, dwell: d });
                }
                dwells.push(d);
                ((t + d).min(horizon), None)
            }
            None => (horizon, Some(&event)),
        };

        let mut observe = |ts: f64, s: &[f64]| {
            let p = trigger.value(s);
            max_phi = max_phi.max(p);
            if let Some(traj) = trajectory.as_mut() {
                traj.push(ts, s, Some(p));
            }
        };
        // The segment end is also the next sample (or the horizon), so it is
        // recorded as the next segment's start instead.
        let mut last_point: Option<(f64, Vec<f64>)> = None;
        let mut observe_inner = |ts: f64, s: &[f64]| {
            if let Some((tp, sp)) = last_point.take() {
                observe(tp, &sp);
            }
            last_point = Some((ts, s.to_vec()));
        };
        let (t_next, end) = run_segment(
            &mut rk,
            &mut field,
            event_fn,
            t,
            &mut xi,
            options.step,
            t_end,
            options.event_tol,
            &mut observe_inner,
        )?;
        if let Some((tp, sp)) = last_point {
            // The pre-reset endpoint still counts towards max φ.
            let p = trigger.value(&sp);
            max_phi = max_phi.max(p);
            if t_next >= horizon {
                if let Some(traj) = trajectory.as_mut() {
                    traj.push(tp, &sp, Some(p));
                }
            }
        }
        if end == SegmentEnd::Crossed {
            dwells.push(t_next - t);
        }
        t = t_next;
    }

    Ok(SimResult {
        scheme: scheduler.name(),
        horizon,
        sampling_times,
        dwells,
        max_phi,
        final_state: xi[..n].to_vec(),
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{BenchmarkPlant, ConstantPlant, QuadraticTrigger};

    fn opts() -> RunOptions {
        RunOptions {
            step: 1e-3,
            event_tol: 1e-10,
            record: true,
        }
    }

    #[test]
    fn short_horizon_samples_once() {
        let p = BenchmarkPlant::default();
        let t = QuadraticTrigger::benchmark();
        let r = closed_loop_run(
            &p,
            &t,
            &SchedulerPolicy::BaselineStc,
            &[-1.0, -1.0],
            &DisturbanceSignal::Benchmark,
            0.005,
            &opts(),
        )
        .unwrap();
        assert_eq!(r.samplings(), 1);
        assert_eq!(r.sampling_times, vec![0.0]);
    }

    #[test]
    fn baseline_samples_follow_formula() {
        let p = BenchmarkPlant::default();
        let t = QuadraticTrigger::benchmark();
        let r = closed_loop_run(
            &p,
            &t,
            &SchedulerPolicy::BaselineStc,
            &[0.5, -0.2],
            &DisturbanceSignal::Benchmark,
            0.2,
            &opts(),
        )
        .unwrap();
        let traj = r.trajectory.as_ref().unwrap();
        for (i, w) in r.sampling_times.windows(2).enumerate() {
            assert!((w[1] - w[0] - r.dwells[i]).abs() < 1e-12);
        }
        // Error is zero at every sampling instant.
        for &ts in &r.sampling_times {
            let k = traj.times().iter().position(|&x| x == ts).unwrap();
            assert_eq!(&traj.state(k)[2..], &[0.0, 0.0]);
        }
        // Recorded times never go backwards.
        assert!(traj.times().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn etc_segments_end_on_crossings() {
        let p = ConstantPlant::new(vec![1.0], 1.0).unwrap();
        let t = QuadraticTrigger::lebesgue(1, 0.25).unwrap();
        let r = closed_loop_run(
            &p,
            &t,
            &SchedulerPolicy::Etc,
            &[0.0],
            &DisturbanceSignal::constant(vec![]),
            1.1,
            &opts(),
        )
        .unwrap();
        assert_eq!(r.samplings(), 5);
        for (i, ts) in r.sampling_times.iter().enumerate() {
            assert!((ts - 0.25 * i as f64).abs() < 1e-8, "{:?}", r.sampling_times);
        }
        assert!(r.max_phi.abs() < 1e-8);
    }

    #[test]
    fn non_positive_dwell_is_rejected() {
        let p = ConstantPlant::new(vec![1.0], 1.0).unwrap();
        let t = QuadraticTrigger::lebesgue(1, 0.25).unwrap();
        let err = closed_loop_run(
            &p,
            &t,
            &SchedulerPolicy::Fixed(0.0),
            &[0.0],
            &DisturbanceSignal::constant(vec![]),
            1.0,
            &opts(),
        );
        assert!(matches!(err, Err(SimError::NonPositiveDwell { .. })));
    }
}
