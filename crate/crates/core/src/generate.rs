//! Synthetic muon events for benchmarks and end-to-end tests.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Poisson};

use crate::codec::{ColumnData, ColumnStore};
use crate::schema::Schema;

/// Prefix the generated events are stored under.
pub const PREFIX: &str = "events";

/// `Record{muons: List<Record{pt, eta, phi: float64}>}`, one per event.
pub fn event_schema() -> Schema {
    let muon = Schema::record([("pt", Schema::float64()), ("eta", Schema::float64()), ("phi", Schema::float64())]);
    Schema::record([("muons", Schema::list(muon))])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub events: usize,
    pub seed: u64,
    /// Mean of the Poisson muon multiplicity, before truncation.
    pub mean_muons: f64,
    /// Multiplicities above this are redrawn.
    pub max_muons: usize,
    /// Mean of the exponential pt spectrum.
    pub pt_mean: f64,
    /// Half-width of the uniform eta range.
    pub eta_max: f64,
}

impl GeneratorConfig {
    pub fn new(events: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig { events, seed, mean_muons: 2.0, max_muons: 16, pt_mean: 30.0, eta_max: 2.4 }
    }
}

/// Writes columns directly instead of encoding values one by one.
pub fn generate(config: &GeneratorConfig) -> ColumnStore {
    assert!(config.mean_muons > 0.0 && config.pt_mean > 0.0, "generator means must be positive");
    assert!(config.eta_max >= 0.0 && config.eta_max <= 5.0, "eta_max must lie in [0, 5]");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let multiplicity = Poisson::new(config.mean_muons).expect("positive mean");
    let pt_dist = Exp::new(1.0 / config.pt_mean).expect("positive rate");
    let eta_dist = Uniform::new_inclusive(-config.eta_max, config.eta_max);
    let phi_dist = Uniform::new_inclusive(-PI, PI);

    let mut offsets = Vec::with_capacity(config.events + 1);
    offsets.push(0i64);
    let expected = (config.events as f64 * config.mean_muons * 1.1) as usize;
    let (mut pt, mut eta, mut phi) =
        (Vec::with_capacity(expected), Vec::with_capacity(expected), Vec::with_capacity(expected));

    for _ in 0..config.events {
        let n = loop {
            let n = multiplicity.sample(&mut rng) as usize;
            if n <= config.max_muons {
                break n;
            }
        };
        for _ in 0..n {
            let p = loop {
                let p: f64 = pt_dist.sample(&mut rng);
                if p > 0.0 {
                    break p;
                }
            };
            pt.push(p);
            eta.push(eta_dist.sample(&mut rng));
            phi.push(phi_dist.sample(&mut rng));
        }
        offsets.push(pt.len() as i64);
    }

    let mut store = ColumnStore::new();
    store.register(&Schema::list(event_schema()), PREFIX).expect("event schema registers");
    if config.events > 0 {
        store.insert_column(format!("{PREFIX}-Lo"), ColumnData::Int64(vec![0, config.events as i64]));
    }
    let muons = format!("{PREFIX}-Ld-R_muons");
    store.insert_column(format!("{muons}-Lo"), ColumnData::Int64(offsets));
    store.insert_column(format!("{muons}-Ld-R_pt"), ColumnData::Float64(pt));
    store.insert_column(format!("{muons}-Ld-R_eta"), ColumnData::Float64(eta));
    store.insert_column(format!("{muons}-Ld-R_phi"), ColumnData::Float64(phi));
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode_all, encode, validate};
    use crate::exec::event_count;

    #[test]
    fn empty_store_has_single_zero_offsets() {
        let store = generate(&GeneratorConfig::new(0, 1));
        assert_eq!(store.column("events-Lo").unwrap().data().as_i64(), Some(&[0i64][..]));
        assert_eq!(store.column("events-Ld-R_muons-Lo").unwrap().data().as_i64(), Some(&[0i64][..]));
        assert_eq!(event_count(&store, PREFIX), Ok(0));
        assert!(validate(&store, &Schema::list(event_schema()), PREFIX).is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&GeneratorConfig::new(500, 7));
        let b = generate(&GeneratorConfig::new(500, 7));
        let c = generate(&GeneratorConfig::new(500, 8));
        assert!(a.same_contents(&b));
        assert!(!a.same_contents(&c));
    }

    #[test]
    fn matches_the_encoder() {
        let store = generate(&GeneratorConfig::new(300, 3));
        let schema = Schema::list(event_schema());
        let events = decode_all(&store, &schema, PREFIX).unwrap();
        let mut again = ColumnStore::new();
        assert_eq!(events.len(), 1);
        encode(&events[0], &schema, PREFIX, &mut again).unwrap();
        assert!(store.same_contents(&again));
    }

    #[test]
    fn ranges_and_multiplicity() {
        let config = GeneratorConfig::new(20_000, 11);
        let store = generate(&config);
        assert!(validate(&store, &Schema::list(event_schema()), PREFIX).is_ok());
        let col = |n: &str| store.column(&format!("events-Ld-R_muons-Ld-R_{n}")).unwrap().data().as_f64().unwrap().to_vec();
        assert!(col("pt").iter().all(|&p| p > 0.0));
        assert!(col("eta").iter().all(|e| e.abs() <= 5.0));
        assert!(col("phi").iter().all(|p| p.abs() <= PI));
        let offsets = store.column("events-Ld-R_muons-Lo").unwrap().data().as_i64().unwrap();
        let counts: Vec<i64> = offsets.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = counts.iter().sum::<i64>() as f64 / counts.len() as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean multiplicity {mean}");
        let empty = counts.iter().filter(|&&c| c == 0).count() as f64 / counts.len() as f64;
        // P(0) of Poisson(2) is e^-2
        assert!((empty - (-2.0f64).exp()).abs() < 0.01, "empty fraction {empty}");
        assert!(counts.iter().all(|&c| c <= config.max_muons as i64));
    }
}
