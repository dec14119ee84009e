mod common;

use common::brute_force;
use proptest::prelude::*;

use rebalance_core::baselines::{rebalance_flows, RandomPolicy};
use rebalance_core::config::RunConfig;
use rebalance_core::episode::{GridView, Outcome, PreferenceSource, Recommender, StepContext};
use rebalance_core::experiment::Experiment;
use rebalance_core::rng::SimRng;
use rebalance_core::world::{Event, GapVector, RequestStatus, Simulator, SLOTS};
use rebalance_core::Result;

const SMALL: &str = "[map]\nsteps = 30\n[fleet]\nsize = 20\n[behavior]\npredictor = \"frequency\"\n";

fn small() -> (Experiment, PreferenceSource) {
    let exp = Experiment::new(RunConfig::from_toml(SMALL).unwrap()).unwrap();
    let prefs = exp.prepare_preferences().unwrap().0;
    (exp, prefs)
}

/// Random recommendations, asserting that the live gap grows by exactly the
/// arrivals committed so far in the current grid.
#[derive(Default)]
struct LiveGapCheck {
    inner: RandomPolicy,
    arrivals: [i64; SLOTS],
    checked: usize,
}

impl Recommender for LiveGapCheck {
    fn order(&mut self, ctx: &StepContext<'_>, view: &GridView, rng: &mut SimRng) -> Result<Vec<usize>> {
        self.arrivals = [0; SLOTS];
        self.inner.order(ctx, view, rng)
    }

    fn recommend(
        &mut self,
        ctx: &StepContext<'_>,
        view: &GridView,
        driver: usize,
        live: &GapVector,
        rng: &mut SimRng,
    ) -> Result<Option<usize>> {
        for s in 0..SLOTS {
            let d = live.0[s].zip(view.gap.0[s]).map(|(a, b)| a - b);
            assert_eq!(d.unwrap_or(0), self.arrivals[s], "slot {s}");
            assert_eq!(live.0[s].is_some(), view.mask.0[s]);
        }
        self.checked += 1;
        self.inner.recommend(ctx, view, driver, live, rng)
    }

    fn observe(&mut self, _driver: usize, outcome: Outcome) {
        self.arrivals[outcome.dest] += 1;
    }
}

fn run_random(exp: &Experiment, prefs: &PreferenceSource, seed: u64) -> (u64, Simulator, usize) {
    let mut rec = LiveGapCheck::default();
    let mut demand = exp.demand_predictor().unwrap();
    let (m, sim) = exp.run(&mut rec, prefs, &mut demand, "random", seed, 0, 0).unwrap();
    (m.tdi.0 as u64, sim, rec.checked)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn earnings_match_income_and_requests_close(seed in any::<u64>()) {
        let (exp, prefs) = small();
        let (tdi, sim, checked) = run_random(&exp, &prefs, seed);
        prop_assert!(checked > 0);
        let earned: i64 = sim.drivers().iter().map(|d| d.earnings.0).sum();
        prop_assert_eq!(earned as u64, tdi);

        let mut matched = std::collections::HashMap::new();
        let mut served = std::collections::HashMap::new();
        let mut expired = std::collections::HashSet::new();
        let mut fare_total = 0i64;
        for e in sim.log() {
            match *e {
                Event::Match { request, .. } => *matched.entry(request).or_insert(0) += 1,
                Event::Serve { request, fare, .. } => {
                    *served.entry(request).or_insert(0) += 1;
                    fare_total += fare.0;
                }
                Event::Expire { request, .. } => {
                    prop_assert!(expired.insert(request));
                }
                _ => {}
            }
        }
        prop_assert_eq!(fare_total, earned);
        for r in sim.requests() {
            let m = matched.get(&r.id).copied().unwrap_or(0);
            let s = served.get(&r.id).copied().unwrap_or(0);
            match r.status {
                RequestStatus::Served => prop_assert!(m == 1 && s == 1 && !expired.contains(&r.id)),
                RequestStatus::Expired => prop_assert!(m == 0 && s == 0 && expired.contains(&r.id)),
                RequestStatus::Pending => prop_assert!(m == 0 && s == 0 && !expired.contains(&r.id)),
                RequestStatus::Matched => prop_assert!(false, "request {} still in a car after finish", r.id),
            }
        }
    }

    #[test]
    fn reruns_are_identical(seed in any::<u64>()) {
        let (exp, prefs) = small();
        let (a, sa, _) = run_random(&exp, &prefs, seed);
        let (b, sb, _) = run_random(&exp, &prefs, seed);
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa.log(), sb.log());
    }

    #[test]
    fn config_survives_a_round_trip(w in 9usize..16, h in 9usize..16, steps in 2usize..200, size in 1usize..300, seed in 0..=i64::MAX as u64) {
        let mut cfg = RunConfig::default();
        cfg.map.width = w;
        cfg.map.height = h;
        cfg.map.steps = steps;
        cfg.fleet.size = size;
        cfg.run.seed = seed;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn seeds_beyond_toml_integers_are_rejected(seed in i64::MAX as u64 + 1..=u64::MAX) {
        let mut cfg = RunConfig::default();
        cfg.run.seed = seed;
        prop_assert!(cfg.validate().is_err());
    }
}

fn instance() -> impl Strategy<Value = (usize, Vec<(usize, usize, i64)>, Vec<i64>, Vec<i64>)> {
    (2usize..=5).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec((0..n, 0..n, 1i64..=4), 0..=2 * n),
            proptest::collection::vec(-3i64..=3, n),
            proptest::collection::vec(0i64..=3, n),
        )
            .prop_map(|(n, arcs, gap, movable)| {
                let arcs = arcs.into_iter().filter(|(a, b, _)| a != b).collect();
                (n, arcs, gap, movable)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn min_cost_flow_matches_enumeration((n, arcs, gap, movable) in instance()) {
        let got = rebalance_flows(n, &arcs, &gap, &movable);
        let (flow, cost) = brute_force(n, &arcs, &gap, &movable);
        prop_assert_eq!(got.flow, flow);
        prop_assert_eq!(got.cost, cost);
        prop_assert_eq!(got.units.iter().zip(&arcs).map(|(u, a)| u * a.2).sum::<i64>(), got.cost);

        let mut net = vec![0i64; n];
        for (u, &(a, b, _)) in got.units.iter().zip(&arcs) {
            prop_assert!(*u >= 0);
            net[a] += u;
            net[b] -= u;
        }
        for g in 0..n {
            if gap[g] > 0 {
                prop_assert!(net[g] >= 0 && net[g] <= gap[g].min(movable[g]));
            } else {
                prop_assert!(net[g] <= 0 && net[g] >= gap[g]);
            }
        }
    }
}
