//! Ordered parallel map over sample or sweep indices.

use rayon::prelude::*;

/// Evaluates `f(0..count)` on `workers` threads (rayon's default pool when
/// `None`) and returns the results in index order.
pub fn map_indexed<T, F>(count: usize, workers: Option<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let run = || (0..count).into_par_iter().map(&f).collect::<Vec<T>>();
    match workers {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => (0..count).map(&f).collect(),
        },
        None => run(),
    }
}

/// Lower-case hex SHA-256 of `text`.
pub fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_independent_of_workers() {
        let one = map_indexed(100, Some(1), |i| (i * i) as u64);
        let four = map_indexed(100, Some(4), |i| (i * i) as u64);
        assert_eq!(one, four);
        assert_eq!(one[7], 49);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
