use crate::matrix::Matrix;
use crate::params::{Grads, ParamStore};

pub trait Optimizer {
    /// Applies one update from `grads`. Returns the learning rate used.
    fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> f64;
}

/// Plain (mini-batch) gradient descent.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> f64 {
        for (id, g) in grads.iter() {
            let p = store.get_mut(id);
            for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                *x -= self.lr * d;
            }
        }
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// `factor · d^-0.5 · min(t^-0.5, t · warmup^-1.5)`
    Noam {
        model_dim: usize,
        warmup: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, schedule: LrSchedule) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.998,
            eps: 1e-9,
            schedule,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn current_lr(&self, step: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Noam { model_dim, warmup } => {
                let t = step.max(1) as f64;
                let w = warmup.max(1) as f64;
                self.lr * (model_dim as f64).powf(-0.5) * t.powf(-0.5).min(t * w.powf(-1.5))
            }
        }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore, grads: &Grads) -> f64 {
        if self.m.is_empty() {
            for (_, g) in grads.iter() {
                self.m.push(Matrix::zeros(g.rows(), g.cols()));
                self.v.push(Matrix::zeros(g.rows(), g.cols()));
            }
        }
        self.t += 1;
        let lr = self.current_lr(self.t);
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (id, g) in grads.iter() {
            let i = id.index();
            let p = store.get_mut(id);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((x, &d), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * d;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * d * d;
                let mh = *mi / bc1;
                let vh = *vi / bc2;
                *x -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        lr
    }
}
