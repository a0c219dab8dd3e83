use super::{DenseArray, NumericError, Tape, Var};

/// Largest relative error between reverse-mode gradients and central finite
/// differences over every coordinate of `params`.
///
/// `f` must build a scalar on the supplied tape from the leaves bound to
/// `params` (in order) and must be deterministic. The relative error of a
/// coordinate is `|a - b| / max(1e-8, |a| + |b|)`.
pub fn grad_check<F, E>(mut f: F, params: &[DenseArray], step: f64) -> Result<f64, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericError>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).check_finite()?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.get_or_zeros(&tape, v)).collect::<Vec<_>>()
    };

    let mut eval = |params: &[DenseArray]| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let y = tape.value(out);
        y.check_finite()?;
        if y.len() != 1 {
            return Err(NumericError::NotScalar(y.len()).into());
        }
        Ok(y.data()[0])
    };

    let mut worst: f64 = 0.0;
    let mut probe = params.to_vec();
    for (k, grad) in analytic.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = probe[k].data()[j];
            probe[k].data_mut()[j] = orig + step;
            let plus = eval(&probe)?;
            probe[k].data_mut()[j] = orig - step;
            let minus = eval(&probe)?;
            probe[k].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
    }
    Ok(worst)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}
