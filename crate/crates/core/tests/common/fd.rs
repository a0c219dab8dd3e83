//! Coordinatewise comparison of reverse-mode and finite-difference loss
//! gradients.
//!
//! A central difference in `f64` carries rounding noise of roughly
//! `ulp(loss) / step`. Coordinates whose true gradient is far below that
//! cannot be certified by relative error, so each coordinate passes when
//! either its relative error is under `rel_tol` or the absolute gap is under
//! `abs_floor`.

#![allow(dead_code)]

use dagnn::datasets::Sample;
use dagnn::model::{ModelSpec, ParamSet};
use dagnn::numeric::{relative_error, Tape};
use dagnn::train::batch_loss;

#[derive(Debug, Clone, Default)]
pub struct FdReport {
    pub coordinates: usize,
    /// Largest relative error over every coordinate.
    pub worst_relative: f64,
    /// Coordinates failing the relative test but within the absolute floor.
    pub below_resolution: usize,
    /// Coordinates failing both tests, as `(name, index, analytic, numeric)`.
    pub failures: Vec<(String, usize, f64, f64)>,
    /// Largest `|analytic|` among coordinates that failed the relative test.
    pub largest_unresolved_gradient: f64,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn loss(spec: &ModelSpec, params: &ParamSet, samples: &[&Sample]) -> f64 {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let (l, _) = batch_loss(spec, &mut tape, &bound, samples).unwrap();
    tape.value(l).data()[0]
}

pub fn analytic_gradients(spec: &ModelSpec, params: &ParamSet, samples: &[&Sample]) -> ParamSet {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let (l, _) = batch_loss(spec, &mut tape, &bound, samples).unwrap();
    let grads = tape.backward(l).unwrap();
    params.gradients(&tape, &bound, &grads)
}

pub fn resolved_grad_check(
    spec: &ModelSpec,
    params: &ParamSet,
    samples: &[&Sample],
    step: f64,
    rel_tol: f64,
    abs_floor: f64,
) -> FdReport {
    let analytic = analytic_gradients(spec, params, samples);
    let mut probe = params.clone();
    let mut report = FdReport::default();
    for (name, grad) in analytic.iter() {
        for j in 0..grad.len() {
            let orig = probe.get(name).unwrap().data()[j];
            probe.get_mut(name).unwrap().data_mut()[j] = orig + step;
            let plus = loss(spec, &probe, samples);
            probe.get_mut(name).unwrap().data_mut()[j] = orig - step;
            let minus = loss(spec, &probe, samples);
            probe.get_mut(name).unwrap().data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.data()[j];
            let rel = relative_error(a, numeric);
            report.coordinates += 1;
            report.worst_relative = report.worst_relative.max(rel);
            if rel >= rel_tol {
                report.largest_unresolved_gradient = report.largest_unresolved_gradient.max(a.abs());
                if (a - numeric).abs() < abs_floor {
                    report.below_resolution += 1;
                } else {
                    report.failures.push((name.to_string(), j, a, numeric));
                }
            }
        }
    }
    report
}
