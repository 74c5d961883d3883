use ndarray::{Array2, Zip};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Adaptive moment estimation over a fixed list of dense tensors.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Adam {
            lr,
            t: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &[Array2<f64>]) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - BETA2.powi(self.t)).sqrt() / (1.0 - BETA1.powi(self.t));
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr_t * *m / (v.sqrt() + EPS);
            });
        }
    }
}

/// Lazy Adam for an embedding table: only rows that received gradient in a
/// step have their moments and values updated.
#[derive(Clone, Debug)]
pub struct RowAdam {
    lr: f64,
    t: i32,
    m: Array2<f64>,
    v: Array2<f64>,
    grad: Array2<f64>,
    touched: Vec<usize>,
    marked: Vec<bool>,
}

impl RowAdam {
    pub fn new(lr: f64, shape: (usize, usize)) -> Self {
        RowAdam {
            lr,
            t: 0,
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
            grad: Array2::zeros(shape),
            touched: Vec::new(),
            marked: vec![false; shape.0],
        }
    }

    pub fn accumulate(&mut self, row: usize, g: ndarray::ArrayView1<f64>) {
        if !self.marked[row] {
            self.marked[row] = true;
            self.touched.push(row);
        }
        let mut r = self.grad.row_mut(row);
        r += &g;
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.touched.iter().map(|&r| self.grad.row(r).iter().map(|x| x * x).sum::<f64>()).sum()
    }

    pub fn step(&mut self, table: &mut Array2<f64>) {
        self.t += 1;
        let lr_t = self.lr * (1.0 - BETA2.powi(self.t)).sqrt() / (1.0 - BETA1.powi(self.t));
        self.touched.sort_unstable();
        for &r in &self.touched {
            Zip::from(table.row_mut(r))
                .and(self.grad.row_mut(r))
                .and(self.m.row_mut(r))
                .and(self.v.row_mut(r))
                .for_each(|p, g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * *g;
                    *v = BETA2 * *v + (1.0 - BETA2) * *g * *g;
                    *p -= lr_t * *m / (v.sqrt() + EPS);
                    *g = 0.0;
                });
            self.marked[r] = false;
        }
        self.touched.clear();
    }
}
