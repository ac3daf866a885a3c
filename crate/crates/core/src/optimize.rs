//! Derivative-free Nelder–Mead simplex minimization.

/// Outcome of a simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Largest coordinate distance from the best vertex at termination.
    pub diameter: f64,
    pub converged: bool,
}

/// Nelder–Mead with the standard reflection/expansion/contraction/shrink
/// coefficients (1, 2, 1/2, 1/2).
#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Stop once the simplex diameter (max-norm) falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Per-coordinate offsets used to build the initial simplex.
    pub initial_step: Vec<f64>,
}

impl NelderMead {
    pub fn new(tolerance: f64, initial_step: Vec<f64>) -> Self {
        Self { tolerance, max_iterations: 5_000, initial_step }
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    /// Minimizes `objective` from `start`. NaN objective values are treated
    /// as `+inf`.
    pub fn minimize<F>(&self, mut objective: F, start: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = start.len();
        assert_eq!(dim, self.initial_step.len(), "step/start dimension mismatch");
        let mut evaluations = 0usize;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let v = objective(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut vertices: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        vertices.push(start.to_vec());
        for i in 0..dim {
            let mut v = start.to_vec();
            v[i] += self.initial_step[i];
            vertices.push(v);
        }
        let mut values: Vec<f64> = vertices.iter().map(|v| eval(v)).collect();

        let mut iterations = 0;
        let mut converged = false;
        loop {
            sort_simplex(&mut vertices, &mut values);
            let diameter = simplex_diameter(&vertices);
            if diameter < self.tolerance {
                converged = true;
            }
            if converged || iterations >= self.max_iterations {
                let value = values[0];
                return Minimum {
                    point: vertices.swap_remove(0),
                    value,
                    iterations,
                    evaluations,
                    diameter,
                    converged,
                };
            }
            iterations += 1;

            let worst = dim;
            let centroid: Vec<f64> = (0..dim)
                .map(|j| vertices[..worst].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
                .collect();
            let along = |coef: f64, from: &[f64]| -> Vec<f64> {
                centroid.iter().zip(from).map(|(c, w)| c + coef * (c - w)).collect()
            };

            let reflected = along(1.0, &vertices[worst]);
            let f_reflected = eval(&reflected);

            if f_reflected < values[0] {
                let expanded = along(2.0, &vertices[worst]);
                let f_expanded = eval(&expanded);
                if f_expanded < f_reflected {
                    vertices[worst] = expanded;
                    values[worst] = f_expanded;
                } else {
                    vertices[worst] = reflected;
                    values[worst] = f_reflected;
                }
                continue;
            }
            if f_reflected < values[worst - 1] {
                vertices[worst] = reflected;
                values[worst] = f_reflected;
                continue;
            }

            let (contracted, f_contracted, accept) = if f_reflected < values[worst] {
                let c = along(-0.5, &reflected);
                let fc = eval(&c);
                (c, fc, fc <= f_reflected)
            } else {
                let c = along(-0.5, &vertices[worst]);
                let fc = eval(&c);
                (c, fc, fc < values[worst])
            };
            if accept {
                vertices[worst] = contracted;
                values[worst] = f_contracted;
                continue;
            }

            let best = vertices[0].clone();
            for i in 1..=dim {
                for (x, b) in vertices[i].iter_mut().zip(&best) {
                    *x = b + 0.5 * (*x - b);
                }
                values[i] = eval(&vertices[i]);
            }
        }
    }
}

fn sort_simplex(vertices: &mut [Vec<f64>], values: &mut [f64]) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // stable sort keeps the older vertex first on ties
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let v: Vec<Vec<f64>> = order.iter().map(|&i| vertices[i].clone()).collect();
    let f: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    vertices.clone_from_slice(&v);
    values.copy_from_slice(&f);
}

fn simplex_diameter(vertices: &[Vec<f64>]) -> f64 {
    let best = &vertices[0];
    vertices[1..]
        .iter()
        .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let nm = NelderMead::new(1e-10, vec![0.5, 0.5]);
        let m = nm.minimize(|x| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2), &[0.0, 0.0]);
        assert!(m.converged);
        assert!((m.point[0] - 3.0).abs() < 1e-8);
        assert!((m.point[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let nm = NelderMead::new(1e-10, vec![0.1, 0.1]).with_max_iterations(10_000);
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
        );
        assert!(m.converged);
        assert!((m.point[0] - 1.0).abs() < 1e-6 && (m.point[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        let nm = NelderMead::new(1e-9, vec![0.5]);
        let m = nm.minimize(|x| if x[0] < 1.0 { f64::INFINITY } else { (x[0] - 1.5).powi(2) }, &[2.0]);
        assert!((m.point[0] - 1.5).abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let nm = NelderMead::new(1e-12, vec![1.0]).with_max_iterations(3);
        let m = nm.minimize(|x| x[0] * x[0], &[10.0]);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }
}
