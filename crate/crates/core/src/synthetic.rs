//! Seeded synthetic basket data for tests, benchmarks and the bundled toy
//! fixture.
//!
//! Items follow a Zipf-like global popularity. Each user keeps a small set of
//! favorite items; every basket slot is drawn from the favorites with
//! probability `repeat_prob` and from the global distribution otherwise.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BasketDataset, UserBaskets};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub min_baskets: usize,
    pub max_baskets: usize,
    pub min_basket_size: usize,
    pub max_basket_size: usize,
    pub favorites: usize,
    pub repeat_prob: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 200,
            items: 300,
            categories: 12,
            min_baskets: 4,
            max_baskets: 10,
            min_basket_size: 3,
            max_basket_size: 8,
            favorites: 8,
            repeat_prob: 0.6,
            zipf_exponent: 1.0,
            seed: 42,
        }
    }
}

pub fn item_id(i: usize) -> String {
    format!("i{i:04}")
}

pub fn user_id(u: usize) -> String {
    format!("u{u:04}")
}

/// Item `i` belongs to category `i mod categories`.
pub fn category_map(items: usize, categories: usize) -> BTreeMap<String, String> {
    (0..items).map(|i| (item_id(i), format!("c{}", i % categories.max(1)))).collect()
}

/// Generates a dataset. Identical specs give identical datasets.
pub fn generate(spec: &SyntheticSpec) -> BasketDataset {
    assert!(spec.items > 0 && spec.categories > 0, "synthetic spec needs items and categories");
    assert!(spec.min_baskets <= spec.max_baskets && spec.min_basket_size <= spec.max_basket_size);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let popularity: Vec<f64> = (0..spec.items)
        .map(|r| 1.0 / ((r + 1) as f64).powf(spec.zipf_exponent))
        .collect();
    let global = WeightedIndex::new(&popularity).expect("positive popularity weights");
    let mut order: Vec<usize> = (0..spec.items).collect();
    order.shuffle(&mut rng);

    let users = (0..spec.users)
        .map(|u| {
            let mut favorites: Vec<usize> = Vec::with_capacity(spec.favorites);
            let mut attempts = 0;
            while favorites.len() < spec.favorites.min(spec.items) && attempts < 100 * spec.items {
                let i = order[global.sample(&mut rng)];
                if !favorites.contains(&i) {
                    favorites.push(i);
                }
                attempts += 1;
            }
            let n_baskets = rng.gen_range(spec.min_baskets..=spec.max_baskets);
            let baskets = (0..n_baskets)
                .map(|_| {
                    let size = rng.gen_range(spec.min_basket_size..=spec.max_basket_size).min(spec.items);
                    let mut basket: Vec<usize> = Vec::with_capacity(size);
                    let mut attempts = 0;
                    while basket.len() < size && attempts < 100 * size.max(1) {
                        let i = if !favorites.is_empty() && rng.gen_bool(spec.repeat_prob) {
                            favorites[rng.gen_range(0..favorites.len())]
                        } else {
                            order[global.sample(&mut rng)]
                        };
                        if !basket.contains(&i) {
                            basket.push(i);
                        }
                        attempts += 1;
                    }
                    basket.into_iter().map(item_id).collect()
                })
                .collect();
            UserBaskets {
                user_id: user_id(u),
                baskets,
            }
        })
        .collect();
    let (ds, _) = BasketDataset::from_users(users).expect("generated baskets are valid");
    ds.with_categories(&category_map(spec.items, spec.categories), true)
}

/// Parameters of the bundled toy fixture: 12 users, 30 items, 5 categories.
pub fn toy_spec() -> SyntheticSpec {
    SyntheticSpec {
        users: 12,
        items: 30,
        categories: 5,
        min_baskets: 4,
        max_baskets: 7,
        min_basket_size: 2,
        max_basket_size: 6,
        favorites: 6,
        repeat_prob: 0.6,
        zipf_exponent: 0.8,
        seed: 2024,
    }
}

pub fn toy_fixture() -> BasketDataset {
    generate(&toy_spec())
}
