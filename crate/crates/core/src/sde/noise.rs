//! Replayable noise sources.
//!
//! Every path owns a key derived from `(seed, path)`. Each noise source is a
//! separate ChaCha8 stream under that key. Sources whose consumption does not
//! depend on the state (Brownian increments, ν-jumps) are read sequentially;
//! state-dependent sources (thinning points, the exact square-root steps) are
//! re-positioned at the start of every step, so the draws of step `k` never
//! depend on how many numbers earlier steps consumed. That makes coupled runs
//! with different levels read identical prefixes.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

const STREAM_B: u64 = 1;
const STREAM_M: u64 = 2;
const STREAM_W: u64 = 0x10;
const STREAM_THIN: u64 = 0x1000;
const STREAM_SQRT_MAIN: u64 = 0x2000;
const STREAM_SQRT_EXTRA: u64 = 0x3000;

/// Words reserved per step on a counter-positioned stream.
const WORDS_PER_STEP: u128 = 1 << 32;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Identifies the noise of one path: master seed plus path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseBundle {
    pub seed: u64,
    pub path: u64,
}

impl NoiseBundle {
    pub fn new(seed: u64, path: u64) -> Self {
        Self { seed, path }
    }

    fn key(&self) -> u64 {
        splitmix(self.seed ^ splitmix(self.path.wrapping_add(0x5151_5151)))
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.key());
        r.set_stream(id);
        r
    }

    pub(crate) fn open(&self, m: usize) -> PathNoise {
        PathNoise {
            brownian_b: self.stream(STREAM_B),
            brownian_w: (0..m as u64).map(|i| self.stream(STREAM_W + i)).collect(),
            immigration: self.stream(STREAM_M),
            counter: self.stream(0),
            counter_extra: self.stream(0),
        }
    }
}

pub(crate) struct PathNoise {
    brownian_b: ChaCha8Rng,
    brownian_w: Vec<ChaCha8Rng>,
    immigration: ChaCha8Rng,
    counter: ChaCha8Rng,
    counter_extra: ChaCha8Rng,
}

impl PathNoise {
    /// Fills `out` with standard normals from `B`.
    pub fn normals_b(&mut self, out: &mut [f64]) {
        for o in out {
            *o = StandardNormal.sample(&mut self.brownian_b);
        }
    }

    /// Fills `out` with standard normals from `W^i`.
    pub fn normals_w(&mut self, i: usize, out: &mut [f64]) {
        let r = &mut self.brownian_w[i];
        for o in out {
            *o = StandardNormal.sample(r);
        }
    }

    /// Sequential stream for the state-independent ν-jumps.
    pub fn immigration(&mut self) -> &mut ChaCha8Rng {
        &mut self.immigration
    }

    fn at(&mut self, id: u64, step: usize) -> &mut ChaCha8Rng {
        self.counter.set_stream(id);
        self.counter.set_word_pos(step as u128 * WORDS_PER_STEP);
        &mut self.counter
    }

    /// Thinning points of `N_i` during step `step`.
    pub fn thinning(&mut self, i: usize, step: usize) -> &mut ChaCha8Rng {
        self.at(STREAM_THIN + i as u64, step)
    }

    /// Main stream of the square-root step of coordinate `c`.
    pub fn sqrt_main(&mut self, c: usize, step: usize) -> &mut ChaCha8Rng {
        self.at(STREAM_SQRT_MAIN + c as u64, step)
    }

    /// Main and extra streams together, for coupled states.
    pub fn sqrt_pair(&mut self, c: usize, step: usize) -> (&mut ChaCha8Rng, &mut ChaCha8Rng) {
        self.counter.set_stream(STREAM_SQRT_MAIN + c as u64);
        self.counter.set_word_pos(step as u128 * WORDS_PER_STEP);
        self.counter_extra.set_stream(STREAM_SQRT_EXTRA + c as u64);
        self.counter_extra.set_word_pos(step as u128 * WORDS_PER_STEP);
        (&mut self.counter, &mut self.counter_extra)
    }
}

pub(crate) fn poisson<R: RngCore + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    // Small means: inversion keeps the draw count low and exact.
    if mean < 12.0 {
        let l = (-mean).exp();
        let mut k = 0u64;
        let mut p = rng.random::<f64>();
        while p > l {
            k += 1;
            p *= rng.random::<f64>();
        }
        return k;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

pub(crate) fn gamma<R: RngCore + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if !(shape > 0.0) {
        return 0.0;
    }
    Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

pub(crate) fn exponential<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}
