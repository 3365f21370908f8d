//! State-dependent sampling.
//!
//! A decision is taken at `tau_k`, the input is held constant, and the next
//! decision time is the first raw step whose state lies in a different bin,
//! capped at `tau_k + n_bar`. Each interval becomes a [`TrajectorySegment`]
//! carrying the cumulative cost over the interval.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::envs::{Environment, State, StateBox};
use crate::error::{Error, Result};
use crate::features::{qbar, FeatureMap};

/// Uniform grid over a state box. States outside the box fall into the
/// nearest boundary bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    bounds: StateBox,
    bins: Vec<usize>,
}

impl Binning {
    pub fn uniform(bounds: StateBox, bins: Vec<usize>) -> Result<Self> {
        if bounds.len() != bins.len() {
            return Err(Error::Shape(format!(
                "{} bin counts for a {}-dimensional box",
                bins.len(),
                bounds.len()
            )));
        }
        if bins.iter().any(|&b| b == 0) {
            return Err(Error::Parameter("bin counts must be positive".into()));
        }
        if bounds.iter().any(|(lo, hi)| !(hi > lo)) {
            return Err(Error::Parameter(format!("degenerate box {bounds:?}")));
        }
        Ok(Self { bounds, bins })
    }

    pub fn num_bins(&self) -> usize {
        self.bins.iter().product()
    }

    /// Row-major bin index of `x`.
    pub fn bin(&self, x: &[f64]) -> usize {
        let mut index = 0;
        for ((&v, &(lo, hi)), &n) in x.iter().zip(&self.bounds).zip(&self.bins) {
            let t = ((v - lo) / (hi - lo) * n as f64).floor();
            let i = if t.is_nan() { 0 } else { t.clamp(0.0, (n - 1) as f64) as usize };
            index = index * n + i;
        }
        index
    }
}

/// One sampling interval `[tau_k, tau_{k+1})` under a held input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub x_start: State,
    pub action: usize,
    /// Cumulative cost over the interval.
    pub cost: f64,
    pub x_next: State,
    /// Raw length `tau_{k+1} - tau_k`.
    pub len: usize,
}

/// Next decision time from a recorded raw trajectory `states` (state at raw
/// time `j` is `states[j]`).
pub fn next_sample_time(states: &[State], tau: usize, binning: &Binning, n_bar: usize) -> Result<usize> {
    if n_bar == 0 {
        return Err(Error::Parameter("n_bar must be at least 1".into()));
    }
    if tau >= states.len() {
        return Err(Error::NeedsMoreData {
            needed: tau,
            available: states.len(),
        });
    }
    let home = binning.bin(&states[tau]);
    for j in tau + 1..=tau + n_bar {
        let Some(x) = states.get(j) else {
            return Err(Error::NeedsMoreData {
                needed: j,
                available: states.len(),
            });
        };
        if binning.bin(x) != home {
            return Ok(j);
        }
    }
    Ok(tau + n_bar)
}

/// Hold `action` from `x` for at most `len` raw steps, closing early if the
/// goal set is entered.
pub fn segment(env: &dyn Environment, x: &[f64], action: usize, len: usize) -> Result<TrajectorySegment> {
    env.check_action(action)?;
    let mut cur = x.to_vec();
    let mut cost = 0.0;
    let mut steps = 0;
    while steps < len.max(1) {
        cost += env.stage_cost(&cur, action);
        cur = env.transition(&cur, action);
        steps += 1;
        if env.is_goal(&cur) {
            break;
        }
    }
    Ok(TrajectorySegment {
        x_start: x.to_vec(),
        action,
        cost,
        x_next: cur,
        len: steps,
    })
}

/// Online state-dependent sampler: binning plus the cap `n_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub binning: Binning,
    pub n_bar: usize,
}

impl Sampler {
    pub fn new(binning: Binning, n_bar: usize) -> Result<Self> {
        if n_bar == 0 {
            return Err(Error::Parameter("n_bar must be at least 1".into()));
        }
        Ok(Self { binning, n_bar })
    }

    /// Run one interval from decision state `x` under held `action`.
    pub fn run(&self, env: &dyn Environment, x: &[f64], action: usize) -> TrajectorySegment {
        let home = self.binning.bin(x);
        let mut cur = x.to_vec();
        let mut cost = 0.0;
        let mut steps = 0;
        loop {
            cost += env.stage_cost(&cur, action);
            cur = env.transition(&cur, action);
            steps += 1;
            if steps >= self.n_bar || env.is_goal(&cur) || self.binning.bin(&cur) != home {
                break;
            }
        }
        TrajectorySegment {
            x_start: x.to_vec(),
            action,
            cost,
            x_next: cur,
            len: steps,
        }
    }
}

/// Split a recorded raw trajectory into segments. The input applied at each
/// decision time is taken as held over the interval; costs are summed from
/// the recorded raw costs. The last segment closes at the end of the data.
pub fn segment_trajectory(
    states: &[State],
    actions: &[usize],
    costs: &[f64],
    binning: &Binning,
    n_bar: usize,
) -> Result<Vec<TrajectorySegment>> {
    let n = actions.len();
    if states.len() != n + 1 || costs.len() != n {
        return Err(Error::Shape(format!(
            "{} states, {} actions, {} costs",
            states.len(),
            n,
            costs.len()
        )));
    }
    let mut out = Vec::new();
    let mut tau = 0;
    while tau < n {
        let next = match next_sample_time(states, tau, binning, n_bar) {
            Ok(t) => t.min(n),
            Err(Error::NeedsMoreData { .. }) => n,
            Err(e) => return Err(e),
        };
        out.push(TrajectorySegment {
            x_start: states[tau].clone(),
            action: actions[tau],
            cost: costs[tau..next].iter().sum(),
            x_next: states[next].clone(),
            len: next - tau,
        });
        tau = next;
    }
    Ok(out)
}

/// Unit-length segments for every raw transition.
pub fn raw_segments(states: &[State], actions: &[usize], costs: &[f64]) -> Vec<TrajectorySegment> {
    actions
        .iter()
        .enumerate()
        .map(|(k, &a)| TrajectorySegment {
            x_start: states[k].clone(),
            action: a,
            cost: costs[k],
            x_next: states[k + 1].clone(),
            len: 1,
        })
        .collect()
}

/// Temporal difference over a segment:
/// `-Q^theta(z_start) + C + Q_bar^theta(x_next)`.
pub fn tdiff(theta: &[f64], seg: &TrajectorySegment, features: &dyn FeatureMap) -> f64 {
    -features.q_value(theta, &seg.x_start, seg.action) + seg.cost + qbar(theta, &seg.x_next, features).0
}

/// Write segments as CSV: `x0..,u,cost,next0..,len`.
pub fn write_segments_csv<W: Write>(segments: &[TrajectorySegment], out: W) -> Result<()> {
    let n = segments.first().map_or(0, |s| s.x_start.len());
    let mut wtr = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    header.push("u".into());
    header.push("cost".into());
    header.extend((0..n).map(|i| format!("next{i}")));
    header.push("len".into());
    wtr.write_record(&header)?;
    for s in segments {
        let mut rec: Vec<String> = s.x_start.iter().map(|v| format!("{v:?}")).collect();
        rec.push(s.action.to_string());
        rec.push(format!("{:?}", s.cost));
        rec.extend(s.x_next.iter().map(|v| format!("{v:?}")));
        rec.push(s.len.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Inverse of [`write_segments_csv`].
pub fn read_segments_csv<R: Read>(input: R) -> Result<Vec<TrajectorySegment>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let n = headers.iter().filter(|h| h.starts_with('x')).count();
    if headers.len() != 2 * n + 3 {
        return Err(Error::Shape(format!("unexpected segment header {headers:?}")));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::Parameter(format!("bad number {s:?}: {e}")))
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let x_start = (0..n).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
        let action = rec[n]
            .parse()
            .map_err(|e| Error::Parameter(format!("bad action: {e}")))?;
        let cost = parse(&rec[n + 1])?;
        let x_next = (0..n).map(|i| parse(&rec[n + 2 + i])).collect::<Result<Vec<_>>>()?;
        let len = rec[2 * n + 2]
            .parse()
            .map_err(|e| Error::Parameter(format!("bad length: {e}")))?;
        out.push(TrajectorySegment {
            x_start,
            action,
            cost,
            x_next,
            len,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{rollout, GridWorld, MountainCar};
    use crate::features::TabularBasis;
    use proptest::prelude::*;

    fn mc_binning() -> Binning {
        Binning::uniform(MountainCar::default().state_bounds(), vec![20, 20]).unwrap()
    }

    #[test]
    fn bins_partition_box_and_clamp_outside() {
        let b = Binning::uniform(vec![(0.0, 1.0), (0.0, 2.0)], vec![2, 4]).unwrap();
        assert_eq!(b.num_bins(), 8);
        assert_eq!(b.bin(&[0.0, 0.0]), 0);
        assert_eq!(b.bin(&[0.99, 1.99]), 7);
        assert_eq!(b.bin(&[1.0, 2.0]), 7);
        assert_eq!(b.bin(&[-5.0, 9.0]), 3);
        assert!(Binning::uniform(vec![(0.0, 1.0)], vec![0]).is_err());
    }

    #[test]
    fn cap_branch_when_bin_never_changes() {
        let b = Binning::uniform(vec![(0.0, 10.0)], vec![1]).unwrap();
        let states: Vec<State> = (0..20).map(|i| vec![i as f64 * 0.1]).collect();
        assert_eq!(next_sample_time(&states, 3, &b, 5).unwrap(), 8);
    }

    #[test]
    fn crossing_at_next_step() {
        let b = Binning::uniform(vec![(0.0, 2.0)], vec![2]).unwrap();
        let states = vec![vec![0.9], vec![1.1], vec![1.2]];
        assert_eq!(next_sample_time(&states, 0, &b, 50).unwrap(), 1);
    }

    #[test]
    fn short_trajectory_needs_more_data() {
        let b = Binning::uniform(vec![(0.0, 10.0)], vec![1]).unwrap();
        let states = vec![vec![0.0], vec![0.1]];
        assert!(matches!(
            next_sample_time(&states, 0, &b, 5),
            Err(Error::NeedsMoreData { .. })
        ));
    }

    #[test]
    fn full_throttle_segments_match_direct_bin_crossing_record() {
        let env = MountainCar::default();
        let binning = mc_binning();
        let n_bar = 50;
        // Oracle: simulate raw steps and record every bin change directly.
        let raw = rollout(&env, |_| 2, MountainCar::standard_start(), 400);
        let mut expected = Vec::new();
        let mut start = 0;
        for j in 1..raw.states.len() {
            let changed = binning.bin(&raw.states[j]) != binning.bin(&raw.states[start]);
            if changed || j - start == n_bar || env.is_goal(&raw.states[j]) {
                expected.push(j - start);
                start = j;
            }
        }
        let sampler = Sampler::new(binning, n_bar).unwrap();
        let mut x = MountainCar::standard_start();
        let mut got = Vec::new();
        let mut total = 0;
        while total < raw.len() {
            let seg = sampler.run(&env, &x, 2);
            total += seg.len;
            got.push(seg.len);
            x = seg.x_next;
        }
        assert_eq!(&got[..expected.len()], expected.as_slice());
    }

    #[test]
    fn unit_segment_and_equilibrium_segment() {
        let env = MountainCar::default();
        let s = segment(&env, &[-0.5, 0.0], 0, 1).unwrap();
        assert_eq!(s.cost, 1.0);
        assert_eq!(s.x_next, env.transition(&[-0.5, 0.0], 0));
        let (xe, ue) = env.equilibrium();
        let s = segment(&env, &xe, ue, 10).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.x_next, xe);
    }

    #[test]
    fn seven_step_segment_costs_seven() {
        let env = MountainCar::default();
        let s = segment(&env, &[-0.5, 0.0], 1, 7).unwrap();
        assert_eq!(s.len, 7);
        assert_eq!(s.cost, 7.0);
    }

    #[test]
    fn tdiff_of_zero_theta_is_cost() {
        let g = GridWorld::new(3, 3);
        let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
        let seg = segment(&g, &[0.0, 0.0], 1, 1).unwrap();
        assert_eq!(tdiff(&vec![0.0; 35], &seg, &b), seg.cost);
    }

    #[test]
    fn tdiff_vanishes_on_optimal_transitions() {
        let g = GridWorld::new(3, 3);
        let m = g.model();
        let q = m.q_star();
        let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
        let theta = b.theta_from_table(&q);
        for s in 0..9 {
            let x = g.cell(s);
            let a = m.greedy(&q, s);
            let seg = segment(&g, &x, a, 1).unwrap();
            assert_eq!(tdiff(&theta, &seg, &b), 0.0);
            // Any pair satisfies the Bellman equation at Q*.
            for u in 0..4 {
                let seg = segment(&g, &x, u, 1).unwrap();
                assert_eq!(tdiff(&theta, &seg, &b), 0.0);
            }
        }
    }

    #[test]
    fn segments_csv_round_trip() {
        let env = MountainCar::default();
        let sampler = Sampler::new(mc_binning(), 50).unwrap();
        let mut x = MountainCar::standard_start();
        let mut segs = Vec::new();
        for k in 0..10 {
            let s = sampler.run(&env, &x, k % 3);
            x = s.x_next.clone();
            segs.push(s);
        }
        let mut buf = Vec::new();
        write_segments_csv(&segs, &mut buf).unwrap();
        assert_eq!(read_segments_csv(buf.as_slice()).unwrap(), segs);
    }

    proptest! {
        #[test]
        fn segmentation_covers_raw_trajectory(seed in 0u64..500, n_bar in 1usize..60, steps in 1usize..600) {
            use rand::{Rng, SeedableRng};
            let env = MountainCar::default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut hold = 0;
            let r = rollout(&env, |_| { if rng.gen_bool(0.05) { hold = rng.gen_range(0..3); } hold }, vec![-0.5, 0.0], steps);
            let segs = segment_trajectory(&r.states, &r.actions, &r.costs, &mc_binning(), n_bar).unwrap();
            prop_assert_eq!(segs.iter().map(|s| s.len).sum::<usize>(), r.len());
            prop_assert!((segs.iter().map(|s| s.cost).sum::<f64>() - r.total_cost()).abs() < 1e-9);
            prop_assert!(segs.iter().all(|s| s.len >= 1 && s.len <= n_bar));
        }

        #[test]
        fn unit_cap_reduces_to_raw_pipeline(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let g = GridWorld::new(3, 3);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let r = rollout(&g, |_| rng.gen_range(0..4), vec![0.0, 2.0], 40);
            let binning = Binning::uniform(g.state_bounds(), vec![3, 3]).unwrap();
            let segs = segment_trajectory(&r.states, &r.actions, &r.costs, &binning, 1).unwrap();
            prop_assert_eq!(&segs, &raw_segments(&r.states, &r.actions, &r.costs));
            let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
            let theta: Vec<f64> = (0..35).map(|i| rng.gen_range(-3.0..3.0) + i as f64 * 0.0).collect();
            for (k, s) in segs.iter().enumerate() {
                let raw_td = -b.q_value(&theta, &r.states[k], r.actions[k]) + r.costs[k]
                    + crate::features::qbar(&theta, &r.states[k + 1], &b).0;
                prop_assert_eq!(tdiff(&theta, s, &b), raw_td);
            }
        }

        #[test]
        fn tdiff_is_concave_and_homogeneous(
            ta in proptest::collection::vec(-4.0..4.0f64, 35),
            tb in proptest::collection::vec(-4.0..4.0f64, 35),
            s in 0usize..9, u in 0usize..4,
        ) {
            let g = GridWorld::new(3, 3);
            let b = TabularBasis::new(g.states(), 4, g.equilibrium()).unwrap();
            let seg = segment(&g, &g.cell(s), u, 1).unwrap();
            let mid: Vec<f64> = ta.iter().zip(&tb).map(|(x, y)| 0.5 * (x + y)).collect();
            prop_assert!(tdiff(&mid, &seg, &b) >= 0.5 * (tdiff(&ta, &seg, &b) + tdiff(&tb, &seg, &b)) - 1e-12);
            let doubled: Vec<f64> = ta.iter().map(|v| 2.0 * v).collect();
            let lhs = tdiff(&doubled, &seg, &b) - seg.cost;
            let rhs = 2.0 * (tdiff(&ta, &seg, &b) - seg.cost);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
