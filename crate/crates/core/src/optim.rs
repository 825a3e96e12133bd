//! Derivative-free local minimization (Nelder–Mead simplex).

use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct NelderMead<T> {
    pub max_iterations: usize,
    /// Stop once the spread of simplex values falls below this.
    pub f_tolerance: T,
    /// Edge length of the initial simplex, per coordinate.
    pub initial_step: T,
}

impl<T: Scalar> Default for NelderMead<T> {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tolerance: T::tol(1e-12),
            initial_step: T::lit(0.5),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub f: T,
    pub iterations: usize,
    pub evaluations: usize,
}

impl<T: Scalar> NelderMead<T> {
    pub fn minimize<F>(&self, mut f: F, x0: &[T]) -> Minimum<T>
    where
        F: FnMut(&[T]) -> T,
    {
        let dim = x0.len();
        let mut evaluations = 0usize;
        let mut eval = |x: &[T]| {
            evaluations += 1;
            let y = f(x);
            // NaN compares false everywhere; treat it as +∞.
            if y.is_finite() {
                y
            } else {
                T::max_value().unwrap_or_else(|| T::lit(f64::MAX))
            }
        };

        if dim == 0 {
            let fx = eval(x0);
            return Minimum {
                x: Vec::new(),
                f: fx,
                iterations: 0,
                evaluations: 1,
            };
        }

        let mut simplex: Vec<Vec<T>> = Vec::with_capacity(dim + 1);
        simplex.push(x0.to_vec());
        for i in 0..dim {
            let mut v = x0.to_vec();
            v[i] += self.initial_step;
            simplex.push(v);
        }
        let mut values: Vec<T> = simplex.iter().map(|v| eval(v)).collect();

        let half = T::lit(0.5);
        let two = T::lit(2.0);
        let mut iterations = 0;
        let mut centroid = vec![T::zero(); dim];
        let mut trial = vec![T::zero(); dim];
        let mut trial2 = vec![T::zero(); dim];

        while iterations < self.max_iterations {
            iterations += 1;

            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
            let (best, second, worst) = (order[0], order[dim - 1], order[dim]);

            if (values[worst] - values[best]).abs() <= self.f_tolerance {
                break;
            }

            centroid.iter_mut().for_each(|c| *c = T::zero());
            for &idx in order.iter().take(dim) {
                for (c, &s) in centroid.iter_mut().zip(&simplex[idx]) {
                    *c += s;
                }
            }
            let inv = T::one() / T::from_count(dim as i64);
            centroid.iter_mut().for_each(|c| *c *= inv);

            // reflection
            for j in 0..dim {
                trial[j] = centroid[j] + (centroid[j] - simplex[worst][j]);
            }
            let f_reflect = eval(&trial);

            if f_reflect < values[best] {
                // expansion
                for j in 0..dim {
                    trial2[j] = centroid[j] + two * (trial[j] - centroid[j]);
                }
                let f_expand = eval(&trial2);
                if f_expand < f_reflect {
                    simplex[worst].copy_from_slice(&trial2);
                    values[worst] = f_expand;
                } else {
                    simplex[worst].copy_from_slice(&trial);
                    values[worst] = f_reflect;
                }
                continue;
            }
            if f_reflect < values[second] {
                simplex[worst].copy_from_slice(&trial);
                values[worst] = f_reflect;
                continue;
            }

            // contraction, outside or inside
            let outside = f_reflect < values[worst];
            for j in 0..dim {
                trial2[j] = if outside {
                    centroid[j] + half * (trial[j] - centroid[j])
                } else {
                    centroid[j] + half * (simplex[worst][j] - centroid[j])
                };
            }
            let f_contract = eval(&trial2);
            let accept = if outside {
                f_contract <= f_reflect
            } else {
                f_contract < values[worst]
            };
            if accept {
                simplex[worst].copy_from_slice(&trial2);
                values[worst] = f_contract;
                continue;
            }

            // shrink toward the best vertex
            let anchor = simplex[best].clone();
            for idx in 0..=dim {
                if idx == best {
                    continue;
                }
                for j in 0..dim {
                    simplex[idx][j] = anchor[j] + half * (simplex[idx][j] - anchor[j]);
                }
                values[idx] = eval(&simplex[idx]);
            }
        }

        let best = (0..=dim)
            .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        Minimum {
            x: simplex[best].clone(),
            f: values[best],
            iterations,
            evaluations,
        }
    }
}
