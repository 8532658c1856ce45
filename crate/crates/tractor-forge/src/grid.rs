//! Deterministic sample-point generation: a uniform interior grid plus a
//! seeded pseudorandom batch, so every verification report is reproducible
//! from its recorded seed.

/// SplitMix64. Small, seedable, stable across platforms.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in `[lo, hi)`.
    pub fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// A point inside the given box.
    pub fn point_in(&mut self, domain: &[(f64, f64)]) -> Vec<f64> {
        domain
            .iter()
            .map(|&(lo, hi)| self.in_range(lo, hi))
            .collect()
    }

    /// A vector with components in `[-1, 1)`.
    pub fn unit_box_vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.in_range(-1.0, 1.0)).collect()
    }
}

/// Shrink each axis interval, keeping its center, to stay clear of the
/// boundary. `margin` is the fraction removed from each side.
pub fn shrink_domain(domain: &[(f64, f64)], margin: f64) -> Vec<(f64, f64)> {
    domain
        .iter()
        .map(|&(lo, hi)| {
            let w = hi - lo;
            (lo + margin * w, hi - margin * w)
        })
        .collect()
}

/// Deterministic uniform grid, `per_axis` points per axis, on the domain
/// shrunk by 10% per side.
pub fn interior_grid(domain: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let inner = shrink_domain(domain, 0.1);
    let n = inner.len();
    let total = per_axis.pow(n as u32);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut idx = flat;
        let mut p = Vec::with_capacity(n);
        for &(lo, hi) in &inner {
            let k = idx % per_axis;
            idx /= per_axis;
            let frac = if per_axis == 1 {
                0.5
            } else {
                k as f64 / (per_axis - 1) as f64
            };
            p.push(lo + frac * (hi - lo));
        }
        points.push(p);
    }
    points
}

/// Seeded pseudorandom points in the 10%-shrunk interior.
pub fn random_points(domain: &[(f64, f64)], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let inner = shrink_domain(domain, 0.1);
    let mut rng = Rng::new(seed);
    (0..count).map(|_| rng.point_in(&inner)).collect()
}

/// The standard scan set: 5-per-axis interior grid plus 20 seeded points.
pub fn scan_points(domain: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    scan_points_dense(domain, 5, seed)
}

/// Scan set with a configurable grid density.
pub fn scan_points_dense(domain: &[(f64, f64)], per_axis: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = interior_grid(domain, per_axis);
    pts.extend(random_points(domain, 20, seed));
    pts
}
