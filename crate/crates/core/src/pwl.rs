//! Exact arithmetic on continuous, nondecreasing piecewise-linear functions
//! of the level variable.

/// Breakpoints closer than this are merged.
pub const MERGE_EPS: f64 = 1e-12;

/// Continuous nondecreasing piecewise-linear function on the real line,
/// linear between breakpoints and affine with the given slopes beyond them.
#[derive(Clone, Debug, PartialEq)]
pub struct PwlMonotone {
    xs: Vec<f64>,
    ys: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

impl PwlMonotone {
    pub fn constant(value: f64) -> Self {
        PwlMonotone {
            xs: vec![0.0],
            ys: vec![value],
            left_slope: 0.0,
            right_slope: 0.0,
        }
    }

    /// `weight * f(level)` for the interpolated rate through `rates` at
    /// levels `1..=n`.
    pub fn interpolated_rate(rates: &[f64], weight: f64) -> Self {
        PwlMonotone {
            xs: (1..=rates.len()).map(|i| i as f64).collect(),
            ys: rates.iter().map(|r| weight * r).collect(),
            left_slope: weight,
            right_slope: weight,
        }
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn left_slope(&self) -> f64 {
        self.left_slope
    }

    pub fn right_slope(&self) -> f64 {
        self.right_slope
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.xs.len() - 1;
        if x <= self.xs[0] {
            return self.ys[0] + self.left_slope * (x - self.xs[0]);
        }
        if x >= self.xs[k] {
            return self.ys[k] + self.right_slope * (x - self.xs[k]);
        }
        // first breakpoint strictly right of x
        let r = self.xs.partition_point(|&b| b <= x);
        let (x0, x1, y0, y1) = (self.xs[r - 1], self.xs[r], self.ys[r - 1], self.ys[r]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Pointwise sum `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &PwlMonotone, b: f64) -> Self {
        let mut xs: Vec<f64> = Vec::with_capacity(self.xs.len() + other.xs.len());
        let (mut i, mut j) = (0, 0);
        while i < self.xs.len() || j < other.xs.len() {
            let next = match (self.xs.get(i), other.xs.get(j)) {
                (Some(&u), Some(&w)) if u <= w => {
                    i += 1;
                    if u == w {
                        j += 1;
                    }
                    u
                }
                (Some(_), Some(&w)) => {
                    j += 1;
                    w
                }
                (Some(&u), None) => {
                    i += 1;
                    u
                }
                (None, Some(&w)) => {
                    j += 1;
                    w
                }
                (None, None) => unreachable!(),
            };
            xs.push(next);
        }
        let ys = xs.iter().map(|&x| a * self.eval(x) + b * other.eval(x)).collect();
        let mut out = PwlMonotone {
            xs,
            ys,
            left_slope: a * self.left_slope + b * other.left_slope,
            right_slope: a * self.right_slope + b * other.right_slope,
        };
        out.merge_close();
        out
    }

    pub fn scale(&self, a: f64) -> Self {
        PwlMonotone {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| a * y).collect(),
            left_slope: a * self.left_slope,
            right_slope: a * self.right_slope,
        }
    }

    pub fn add(&self, other: &PwlMonotone) -> Self {
        self.combine(1.0, other, 1.0)
    }

    /// Pointwise `max(self, level)`.
    pub fn max_const(&self, c: f64) -> Self {
        let k = self.xs.len() - 1;
        let mut xs = Vec::with_capacity(self.xs.len() + 2);
        let mut ys = Vec::with_capacity(self.xs.len() + 2);
        // left tail crossing
        if self.left_slope > 0.0 && c < self.ys[0] {
            xs.push(self.xs[0] - (self.ys[0] - c) / self.left_slope);
            ys.push(c);
        }
        for idx in 0..=k {
            if idx > 0 {
                let (x0, x1, y0, y1) = (self.xs[idx - 1], self.xs[idx], self.ys[idx - 1], self.ys[idx]);
                if y0 < c && c < y1 {
                    xs.push(x0 + (c - y0) * (x1 - x0) / (y1 - y0));
                    ys.push(c);
                }
            }
            xs.push(self.xs[idx]);
            ys.push(self.ys[idx].max(c));
        }
        let mut right_slope = self.right_slope;
        if self.right_slope > 0.0 {
            if c > self.ys[k] {
                xs.push(self.xs[k] + (c - self.ys[k]) / self.right_slope);
                ys.push(c);
            }
        } else {
            right_slope = 0.0;
        }
        let mut out = PwlMonotone {
            xs,
            ys,
            left_slope: 0.0,
            right_slope,
        };
        out.merge_close();
        out
    }

    /// `sup { x : self(x) <= c }`; `+inf` when the function never exceeds
    /// `c`, `-inf` when it is above `c` everywhere.
    pub fn sup_level_at_most(&self, c: f64) -> f64 {
        let k = self.xs.len() - 1;
        if self.ys[k] <= c {
            if self.right_slope > 0.0 {
                return self.xs[k] + (c - self.ys[k]) / self.right_slope;
            }
            return f64::INFINITY;
        }
        // ys[k] > c: locate the last breakpoint at or below c
        let below = self.ys.partition_point(|&y| y <= c);
        if below == 0 {
            if self.left_slope > 0.0 {
                return self.xs[0] - (self.ys[0] - c) / self.left_slope;
            }
            return f64::NEG_INFINITY;
        }
        let (x0, x1, y0, y1) = (self.xs[below - 1], self.xs[below], self.ys[below - 1], self.ys[below]);
        x0 + (c - y0) * (x1 - x0) / (y1 - y0)
    }

    fn merge_close(&mut self) {
        let mut w = 0;
        for r in 0..self.xs.len() {
            if w > 0 && self.xs[r] - self.xs[w - 1] < MERGE_EPS {
                continue;
            }
            self.xs[w] = self.xs[r];
            self.ys[w] = self.ys[r];
            w += 1;
        }
        self.xs.truncate(w);
        self.ys.truncate(w);
    }

    /// Nondecreasing with sorted breakpoints and nonnegative tail slopes.
    pub fn is_monotone(&self) -> bool {
        self.xs.windows(2).all(|w| w[0] < w[1])
            && self.ys.windows(2).all(|w| w[0] <= w[1])
            && self.left_slope >= 0.0
            && self.right_slope >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_interpolation_matches_breakpoints_and_tails() {
        let f = PwlMonotone::interpolated_rate(&[0.0, 1.0], 1.0);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(1.5), 0.5);
        assert_eq!(f.eval(0.0), -1.0);
        assert_eq!(f.eval(3.0), 2.0);
    }

    #[test]
    fn max_with_constant_inserts_crossings() {
        let f = PwlMonotone::interpolated_rate(&[0.0], 1.0); // l - 1
        let z = f.max_const(0.5);
        assert_eq!(z.eval(-10.0), 0.5);
        assert_eq!(z.eval(1.5), 0.5);
        assert_eq!(z.eval(2.5), 1.5);
        assert_eq!(z.left_slope(), 0.0);
        assert_eq!(f.sup_level_at_most(0.5), 1.5);
        assert_eq!(z.sup_level_at_most(0.5), 1.5);
    }

    #[test]
    fn flat_function_sup_is_infinite() {
        let c = PwlMonotone::constant(2.0);
        assert_eq!(c.sup_level_at_most(2.0), f64::INFINITY);
        assert_eq!(c.sup_level_at_most(1.0), f64::NEG_INFINITY);
    }

    fn arb_pwl() -> impl Strategy<Value = PwlMonotone> {
        (
            prop::collection::vec((0.01f64..2.0, 0.0f64..2.0), 1..6),
            -3.0f64..3.0,
            0.0f64..2.0,
            0.0f64..2.0,
            -1.0f64..1.0,
        )
            .prop_map(|(steps, x0, ls, rs, y0)| {
                let mut xs = vec![x0];
                let mut ys = vec![y0];
                for (dx, dy) in steps {
                    xs.push(xs.last().unwrap() + dx);
                    ys.push(ys.last().unwrap() + dy);
                }
                PwlMonotone {
                    xs,
                    ys,
                    left_slope: ls,
                    right_slope: rs,
                }
            })
    }

    proptest! {
        #[test]
        fn combine_is_pointwise(a in arb_pwl(), b in arb_pwl(), wa in 0.0f64..1.0, x in -8.0f64..8.0) {
            let c = a.combine(wa, &b, 1.0 - wa);
            let expect = wa * a.eval(x) + (1.0 - wa) * b.eval(x);
            prop_assert!((c.eval(x) - expect).abs() <= 1e-9);
            prop_assert!(c.is_monotone());
        }

        #[test]
        fn max_const_is_pointwise(a in arb_pwl(), c in -4.0f64..6.0, x in -8.0f64..8.0) {
            let m = a.max_const(c);
            prop_assert!((m.eval(x) - a.eval(x).max(c)).abs() <= 1e-9);
            prop_assert!(m.is_monotone());
        }

        #[test]
        fn sup_level_brackets_the_crossing(a in arb_pwl(), c in -4.0f64..6.0) {
            let s = a.sup_level_at_most(c);
            if s.is_finite() {
                prop_assert!(a.eval(s) <= c + 1e-9);
                prop_assert!(a.eval(s + 1e-6) > c - 1e-9);
            }
        }
    }
}
