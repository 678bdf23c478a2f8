use nalgebra::{DMatrix, DVector};

use super::{Agent, AgentConfig, AgentError, Algorithm, BetaSchedule, TraceState, Transition};
use crate::scalar::Real;
use crate::svd::TruncatedSvd;

/// LSTD(lambda) on an incrementally updated rank-`r` SVD of `A_t`.
pub struct TlstdAgent<T: Real> {
    svd: TruncatedSvd<T>,
    trace: TraceState<T>,
    b: DVector<T>,
    w: DVector<T>,
    beta: BetaSchedule,
    batch: usize,
    rel_cutoff: T,
    solve_every: usize,
    // buffered (z, d) columns awaiting a flush
    zs: DMatrix<T>,
    ds: DMatrix<T>,
    buffered: usize,
    // samples folded into the factorization
    absorbed: usize,
    samples: usize,
    stale: bool,
}

impl<T: Real> TlstdAgent<T> {
    pub fn new(dim: usize, cfg: &AgentConfig) -> Result<Self, AgentError> {
        if cfg.algorithm != Algorithm::Tlstd {
            return Err(AgentError::InvalidConfig("not a tlstd configuration".into()));
        }
        cfg.validate(dim)?;
        let rank = cfg.rank.unwrap_or(dim);
        let k = cfg.batch_size;
        Ok(Self {
            svd: TruncatedSvd::new(dim, rank)?,
            trace: TraceState::new(dim, T::lit(cfg.lambda)),
            b: DVector::zeros(dim),
            w: DVector::zeros(dim),
            beta: cfg.beta,
            batch: k,
            rel_cutoff: T::lit(cfg.rel_cutoff),
            solve_every: cfg.solve_every,
            zs: DMatrix::zeros(dim, k),
            ds: DMatrix::zeros(dim, k),
            buffered: 0,
            absorbed: 0,
            samples: 0,
            stale: false,
        })
    }

    pub fn svd(&self) -> &TruncatedSvd<T> {
        &self.svd
    }

    pub fn b(&self) -> &DVector<T> {
        &self.b
    }

    /// Transitions buffered but not yet folded into the factorization.
    pub fn buffered(&self) -> usize {
        self.buffered
    }

    fn flush(&mut self) -> Result<(), AgentError> {
        let k = self.buffered;
        if k == 0 {
            return Ok(());
        }
        let (decay, weights): (T, Vec<T>) = match self.beta {
            BetaSchedule::RunningAverage => {
                let t = T::lit(self.absorbed as f64);
                let total = T::lit((self.absorbed + k) as f64);
                (t / total, vec![T::one() / total.sqrt(); k])
            }
            BetaSchedule::Constant(beta) => {
                let keep = 1.0 - beta;
                let w = (0..k)
                    .map(|j| T::lit((beta * keep.powi((k - 1 - j) as i32)).sqrt()))
                    .collect();
                (T::lit(keep.powi(k as i32)), w)
            }
        };
        if self.svd.width() > 0 && decay > T::zero() {
            self.svd.scale(decay)?;
        }
        if k == 1 {
            let z = self.zs.column(0) * weights[0];
            let d = self.ds.column(0) * weights[0];
            self.svd.rank_one_update(&z, &d)?;
        } else {
            let mut z = self.zs.columns(0, k).into_owned();
            let mut d = self.ds.columns(0, k).into_owned();
            for (j, &s) in weights.iter().enumerate() {
                z.column_mut(j).scale_mut(s);
                d.column_mut(j).scale_mut(s);
            }
            self.svd.compact();
            self.svd.minibatch_update(&z, &d)?;
        }
        self.absorbed += k;
        self.buffered = 0;
        Ok(())
    }

    fn solve(&mut self) {
        // the factorization rejects only dimension mismatches, which `step` has already excluded
        if let Ok(w) = self.svd.solve(&self.b, self.rel_cutoff) {
            self.w = w;
        }
        self.stale = false;
    }
}

impl<T: Real> Agent<T> for TlstdAgent<T> {
    fn algorithm(&self) -> Algorithm {
        Algorithm::Tlstd
    }

    fn dim(&self) -> usize {
        self.b.len()
    }

    fn samples(&self) -> usize {
        self.samples
    }

    fn step(&mut self, tr: &Transition<T>) -> Result<&DVector<T>, AgentError> {
        tr.check_dim(self.dim())?;
        let z = self.trace.update(tr);
        let beta = match self.beta {
            BetaSchedule::RunningAverage => T::one() / T::lit((self.samples + 1) as f64),
            BetaSchedule::Constant(b) => T::lit(b),
        };
        self.b.scale_mut(T::one() - beta);
        self.b.axpy(beta * tr.reward, z, T::one());
        self.zs.set_column(self.buffered, z);
        let mut col = self.ds.column_mut(self.buffered);
        col.fill(T::zero());
        for (i, v) in tr.difference().iter() {
            col[i] += v;
        }
        self.buffered += 1;
        self.samples += 1;
        if self.buffered == self.batch {
            self.flush()?;
        }
        self.stale = true;
        if self.samples.is_multiple_of(self.solve_every) {
            self.solve();
        }
        Ok(&self.w)
    }

    fn weights(&mut self) -> &DVector<T> {
        if self.stale {
            self.solve();
        }
        &self.w
    }

    fn factorization(&self) -> Option<&TruncatedSvd<T>> {
        Some(&self.svd)
    }
}
