//! Dense factors over discrete variables.
//!
//! Variables are kept sorted by network index and the value table is
//! row-major with the first variable most significant.

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn scalar(value: f64) -> Self {
        Factor {
            vars: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    pub fn contains(&self, var: usize) -> bool {
        self.vars.binary_search(&var).is_ok()
    }

    /// Build a factor over `vars` (sorted) by evaluating `f` at every assignment.
    pub fn tabulate(
        vars: Vec<usize>,
        cards: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0usize; vars.len()];
        for _ in 0..size {
            values.push(f(&assignment));
            advance(&mut assignment, &cards);
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.vars.len()];
        for i in (0..self.vars.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.cards[i + 1];
        }
        strides
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.iter().chain(other.vars.iter()).copied().collect();
        vars.sort_unstable();
        vars.dedup();
        let cards: Vec<usize> = vars
            .iter()
            .map(|v| match self.vars.binary_search(v) {
                Ok(i) => self.cards[i],
                Err(_) => other.cards[other.vars.binary_search(v).expect("var in one operand")],
            })
            .collect();
        // stride of each output variable in either operand, 0 where absent
        let stride_in = |f: &Factor| -> Vec<usize> {
            let strides = f.strides();
            vars.iter()
                .map(|v| f.vars.binary_search(v).map_or(0, |p| strides[p]))
                .collect()
        };
        let (sa, sb) = (stride_in(self), stride_in(other));
        let size: usize = cards.iter().product();
        let mut values = Vec::with_capacity(size);
        let mut assignment = vec![0usize; vars.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..size {
            values.push(self.values[ia] * other.values[ib]);
            for i in (0..assignment.len()).rev() {
                assignment[i] += 1;
                ia += sa[i];
                ib += sb[i];
                if assignment[i] < cards[i] {
                    break;
                }
                ia -= sa[i] * cards[i];
                ib -= sb[i] * cards[i];
                assignment[i] = 0;
            }
        }
        Factor {
            vars,
            cards,
            values,
        }
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Ok(pos) = self.vars.binary_search(&var) else {
            return self.clone();
        };
        let card = self.cards[pos];
        // values split as [outer][card][inner] around the summed variable
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer = self.values.len() / (card * inner);
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..card {
                let src = &self.values[(o * card + s) * inner..][..inner];
                for (dst, v) in values[o * inner..][..inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        let mut vars = self.vars.clone();
        let mut cards = self.cards.clone();
        vars.remove(pos);
        cards.remove(pos);
        Factor {
            vars,
            cards,
            values,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Odometer increment, last position fastest.
pub(crate) fn advance(assignment: &mut [usize], cards: &[usize]) {
    for i in (0..assignment.len()).rev() {
        assignment[i] += 1;
        if assignment[i] < cards[i] {
            return;
        }
        assignment[i] = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_out_either_axis() {
        // f(x0, x1) with x0 most significant
        let f = Factor {
            vars: vec![0, 1],
            cards: vec![2, 3],
            values: vec![1., 2., 3., 4., 5., 6.],
        };
        assert_eq!(f.sum_out(0).values, vec![5., 7., 9.]);
        assert_eq!(f.sum_out(1).values, vec![6., 15.]);
        assert_eq!(f.total(), 21.0);
    }

    #[test]
    fn product_aligns_shared_variables() {
        let a = Factor {
            vars: vec![0],
            cards: vec![2],
            values: vec![0.25, 0.75],
        };
        let b = Factor {
            vars: vec![0, 2],
            cards: vec![2, 2],
            values: vec![0.9, 0.1, 0.2, 0.8],
        };
        let p = a.product(&b);
        assert_eq!(p.vars, vec![0, 2]);
        let expected = [0.225, 0.025, 0.15, 0.6];
        for (x, y) in p.values.iter().zip(expected) {
            assert!((x - y).abs() < 1e-15);
        }
        let q = Factor::scalar(2.0).product(&a);
        assert_eq!(q.values, vec![0.5, 1.5]);
    }
}
