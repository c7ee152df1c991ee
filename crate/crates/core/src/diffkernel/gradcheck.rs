use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error. Finite differences in `f64`
/// cannot resolve gradients far below this.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar function against the
/// fourth-order central difference
/// `(-f(θ+2e) + 8 f(θ+e) - 8 f(θ-e) + f(θ-2e)) / (12 e)` on every coordinate
/// of `ids`. Returns the largest relative error, using
/// `max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)` as the denominator.
pub fn grad_check<F>(f: F, store: &mut ParamStore, ids: &[ParamId], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::Range {
            what: "eps",
            value: eps,
            lo: 0.0,
            hi: 1e-2,
        });
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };

    let mut worst: f64 = 0.0;
    for &id in ids {
        let n = store.tensor(id).len();
        for k in 0..n {
            let orig = store.tensor(id).values()[k];
            let mut at = |h: f64| -> Result<f64> {
                store.values_mut(id)[k] = orig + h;
                eval(store)
            };
            let (p2, p1, m1, m2) = (at(2.0 * eps)?, at(eps)?, at(-eps)?, at(-2.0 * eps)?);
            store.values_mut(id)[k] = orig;
            let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
            let a = analytic.get(id).map_or(0.0, |g| g[k]);
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffkernel::tensor::Tensor;

    #[test]
    fn square_at_three() {
        let mut s = ParamStore::new();
        let w = s.add("w", Tensor::new(vec![1, 1], vec![3.0]).unwrap()).unwrap();
        let err = grad_check(
            |t| {
                let v = t.param(w);
                Ok(t.mul(v, v)?)
            },
            &mut s,
            &[w],
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-7, "err {err}");
        assert_eq!(s.tensor(w).values(), &[3.0]);
    }

    #[test]
    fn constant_function() {
        let mut s = ParamStore::new();
        let w = s.add("w", Tensor::new(vec![1, 2], vec![3.0, 1.0]).unwrap()).unwrap();
        let err = grad_check(|t| Ok(t.constant_values(1, 1, vec![4.0])), &mut s, &[w], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_bad_eps() {
        let mut s = ParamStore::new();
        let w = s.add_zeros("w", vec![1]).unwrap();
        assert!(grad_check(|t| Ok(t.param(w)), &mut s, &[w], 0.1).is_err());
        assert!(grad_check(|t| Ok(t.param(w)), &mut s, &[w], 0.0).is_err());
    }
}
