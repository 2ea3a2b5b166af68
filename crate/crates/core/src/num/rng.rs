use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Seeded random stream addressed by `(master_seed, path)`.
///
/// Substreams are derived by hashing the parent path with a child index, so
/// the same `(master_seed, path)` always replays the same draws no matter how
/// many values the parent has already produced.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_seed(master_seed: u64, path: &[u64]) -> [u8; 32] {
    let mut h = splitmix64(master_seed ^ 0x5eed_0fca_05a1_u64);
    for (depth, &p) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(p.wrapping_add((depth as u64 + 1) << 56)));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    seed
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self::at(master_seed, Vec::new())
    }

    fn at(master_seed: u64, path: Vec<u64>) -> Self {
        let rng = ChaCha8Rng::from_seed(derive_seed(master_seed, &path));
        Self { master_seed, path, rng }
    }

    /// Derives child stream `k`. Independent of how far `self` has been advanced.
    pub fn substream(&self, k: u64) -> Self {
        let mut path = self.path.clone();
        path.push(k);
        Self::at(self.master_seed, path)
    }

    /// Convenience for deriving a nested path at once.
    pub fn derive(&self, keys: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(keys);
        Self::at(self.master_seed, path)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Standard Gumbel(0, 1) draw.
    pub fn gumbel(&mut self) -> f64 {
        // uniform() can return exactly 0.0
        let u = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        -(-u.ln()).ln()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible() {
        let root = RngStream::new(42);
        let mut a = root.substream(3);
        let mut advanced = root.clone();
        for _ in 0..10 {
            advanced.uniform();
        }
        let mut b = advanced.substream(3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(
            root.derive(&[1, 2]).next_u64(),
            root.substream(1).substream(2).next_u64()
        );
    }

    #[test]
    fn distinct_paths_differ() {
        let root = RngStream::new(7);
        let a: Vec<u64> = {
            let mut s = root.substream(0);
            (0..4).map(|_| s.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut s = root.substream(1);
            (0..4).map(|_| s.next_u64()).collect()
        };
        assert_ne!(a, b);
        assert_ne!(RngStream::new(1).next_u64(), RngStream::new(2).next_u64());
        // path [0] must differ from path [0, 0]
        assert_ne!(root.substream(0).next_u64(), root.derive(&[0, 0]).next_u64());
    }

    #[test]
    fn substream_draws_are_uncorrelated() {
        let root = RngStream::new(11);
        let mut a = root.substream(0);
        let mut b = root.substream(1);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| a.normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.normal()).collect();
        let corr: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
