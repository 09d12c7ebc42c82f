//! Results must not depend on how the executor schedules work.

use fnl_core::coeffs::{CoefficientModel, Population};
use fnl_core::equilibrium::{KVariant, Preference, StrategyClosure};
use fnl_core::exec::{Executor, Sequential};
use fnl_core::game::{Averaging, GameSetup};
use fnl_core::rng::SeedLineage;
use fnl_core::verify::{martingale_report, BenchmarkMode};

/// Splits indices round-robin over scoped OS threads, then restores order.
struct Striped(usize);

impl Executor for Striped {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let workers = self.0.max(1);
        let mut parts: Vec<Vec<(usize, T)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let f = &f;
                    s.spawn(move || (w..len).step_by(workers).map(|i| (i, f(i))).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        let mut out: Vec<(usize, T)> = parts.drain(..).flatten().collect();
        out.sort_by_key(|p| p.0);
        out.into_iter().map(|p| p.1).collect()
    }
}

fn setup(pref: Preference, delta: f64) -> GameSetup {
    GameSetup {
        preference: pref,
        population: Population::homogeneous(CoefficientModel::constant(0.05, 0.2, 0.3, delta, 0.5), 5),
        initial_wealth: vec![1.0; 5],
        n_replications: 300,
        steps: 10,
        dt: 0.1,
        strategy: StrategyClosure::equilibrium(pref),
        averaging: Averaging::Replications,
        lineage: SeedLineage::new(11, 0),
    }
}

#[test]
fn martingale_reports_are_schedule_invariant() {
    for (pref, delta) in [(Preference::Cara, 1.5), (Preference::Crra, 2.0)] {
        let s = setup(pref, delta);
        let seq = martingale_report(&Sequential, &s, KVariant::Half, BenchmarkMode::Conditional).unwrap();
        for workers in [2, 7] {
            let par = martingale_report(&Striped(workers), &s, KVariant::Half, BenchmarkMode::Conditional).unwrap();
            assert_eq!(seq, par, "{pref:?} with {workers} workers");
        }
    }
}
