//! Stratified, seeded subsampling of image ids.
//!
//! The overall target is `round_half_up(fraction * n)`. It is apportioned
//! across classes by largest remainder (ties broken by class name), so each
//! class receives the floor or ceiling of its proportional share. Within a
//! class, ids are sorted and shuffled by a ChaCha stream keyed on the seed
//! and the class name, so the result does not depend on input order or
//! platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sha256_hex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("fraction must be in (0, 1], got {0}")]
pub struct FractionError(pub f64);

pub fn check_fraction(fraction: f64) -> Result<(), FractionError> {
    if fraction > 0.0 && fraction <= 1.0 {
        Ok(())
    } else {
        Err(FractionError(fraction))
    }
}

/// `floor(x + 0.5)` for non-negative `x`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Number of ids each class contributes.
pub fn apportion(class_sizes: &BTreeMap<String, usize>, fraction: f64) -> Result<BTreeMap<String, usize>, FractionError> {
    check_fraction(fraction)?;
    let total: usize = class_sizes.values().sum();
    let target = round_half_up(fraction * total as f64).min(total);
    let mut quotas: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders = Vec::with_capacity(class_sizes.len());
    for (class, &size) in class_sizes {
        let exact = fraction * size as f64;
        let base = (exact.floor() as usize).min(size);
        quotas.insert(class.clone(), base);
        remainders.push((exact - base as f64, class));
    }
    let assigned: usize = quotas.values().sum();
    // largest remainder first; BTreeMap iteration already orders by name
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, class) in remainders.into_iter().take(target.saturating_sub(assigned)) {
        *quotas.get_mut(class).unwrap() += 1;
    }
    Ok(quotas)
}

fn class_rng(seed: u64, class: &str) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{seed}\u{0}{class}").as_bytes());
    let mut key = [0u8; 32];
    hex::decode_to_slice(&digest, &mut key).expect("sha256 hex is 32 bytes");
    ChaCha8Rng::from_seed(key)
}

/// Selects a stratified subset of `(image_id, class)` pairs. Duplicate ids
/// count once, under their first class.
pub fn stratified_sample<'a, I>(items: I, fraction: f64, seed: u64) -> Result<BTreeSet<String>, FractionError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    check_fraction(fraction)?;
    let mut seen = BTreeSet::new();
    let mut by_class: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (id, class) in items {
        if seen.insert(id) {
            by_class.entry(class.to_string()).or_default().push(id);
        }
    }
    let sizes = by_class.iter().map(|(c, ids)| (c.clone(), ids.len())).collect();
    let quotas = apportion(&sizes, fraction)?;
    let mut out = BTreeSet::new();
    for (class, mut ids) in by_class {
        ids.sort_unstable();
        let k = quotas[&class];
        let mut rng = class_rng(seed, &class);
        let (chosen, _) = ids.partial_shuffle(&mut rng, k);
        out.extend(chosen.iter().map(|s| s.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool(sizes: &[usize]) -> Vec<(String, String)> {
        sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| (format!("c{c}-{i:05}"), format!("class{c}"))))
            .collect()
    }

    fn sample(items: &[(String, String)], f: f64, seed: u64) -> BTreeSet<String> {
        stratified_sample(items.iter().map(|(a, b)| (a.as_str(), b.as_str())), f, seed).unwrap()
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn fraction_bounds() {
        assert!(check_fraction(0.0).is_err());
        assert!(check_fraction(1.0001).is_err());
        assert!(check_fraction(f64::NAN).is_err());
        assert!(check_fraction(1.0).is_ok());
    }

    #[test]
    fn ties_broken_by_class_name() {
        let sizes: BTreeMap<String, usize> = [("b".to_string(), 1), ("a".to_string(), 1)].into();
        let q = apportion(&sizes, 0.5).unwrap();
        assert_eq!(q["a"], 1);
        assert_eq!(q["b"], 0);
    }

    #[test]
    fn full_fraction_is_identity() {
        let items = pool(&[7, 3, 11]);
        assert_eq!(sample(&items, 1.0, 9).len(), 21);
    }

    #[test]
    fn input_order_does_not_matter() {
        let items = pool(&[40, 25, 13]);
        let mut reversed = items.clone();
        reversed.reverse();
        assert_eq!(sample(&items, 0.3, 5), sample(&reversed, 0.3, 5));
    }

    #[test]
    fn small_fraction_keeps_classes() {
        let items = pool(&[1000, 400, 60]);
        let s = sample(&items, 0.05, 1);
        for c in 0..3 {
            assert!(s.iter().any(|id| id.starts_with(&format!("c{c}-"))));
        }
    }

    proptest! {
        #[test]
        fn size_and_stratification(
            sizes in proptest::collection::vec(1usize..200, 1..9),
            f in 0.01f64..=1.0,
            seed in any::<u64>(),
        ) {
            let items = pool(&sizes);
            let s = sample(&items, f, seed);
            let total: usize = sizes.iter().sum();
            prop_assert_eq!(s.len(), round_half_up(f * total as f64));
            for (c, &n) in sizes.iter().enumerate() {
                let got = s.iter().filter(|id| id.starts_with(&format!("c{c}-"))).count() as f64;
                prop_assert!((got - f * n as f64).abs() <= 1.0);
            }
            let ids: BTreeSet<String> = items.iter().map(|(a, _)| a.clone()).collect();
            prop_assert!(s.is_subset(&ids));
            prop_assert_eq!(&s, &sample(&items, f, seed));
        }
    }
}
