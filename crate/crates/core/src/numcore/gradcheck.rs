use crate::error::{Error, Result};

use super::graph::{Graph, NodeId};
use super::params::{BoundParams, ParamSet};

/// Worst disagreement between reverse-mode and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: usize,
    pub checked: usize,
}

/// Relative errors are measured against `max(|analytic|, |numeric|, 1e-6)`.
const REL_FLOOR: f64 = 1e-6;

/// Compares the reverse-mode gradient of a scalar loss against
/// `(f(θ+eps) − f(θ−eps)) / 2eps` for every parameter element, in `f64`.
pub fn grad_check<F>(loss_fn: F, probe_point: &ParamSet<f64>, eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &BoundParams<'_, f64>) -> Result<NodeId>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Argument(format!("eps {eps} outside [1e-7, 1e-4]")));
    }
    let eval = |params: &ParamSet<f64>| -> Result<(Graph<f64>, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let loss = loss_fn(&mut g, &bound)?;
        let ids = bound.ids().to_vec();
        Ok((g, ids, loss))
    };
    let scalar = |g: &Graph<f64>, id: NodeId| g.value(id).data()[0];

    let (g, ids, loss) = eval(probe_point)?;
    if !scalar(&g, loss).is_finite() {
        return Err(Error::NonFinite {
            param: "<loss at probe point>".into(),
        });
    }
    let grads = g.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_index: 0,
        checked: 0,
    };
    let mut work = probe_point.clone();
    for (pi, name) in probe_point.names().iter().enumerate() {
        let analytic = grads.get(ids[pi]);
        for e in 0..probe_point.value(pi).len() {
            let original = probe_point.value(pi).data()[e];
            work.value_mut(pi).data_mut()[e] = original + eps;
            let (gp, _, lp) = eval(&work)?;
            work.value_mut(pi).data_mut()[e] = original - eps;
            let (gm, _, lm) = eval(&work)?;
            work.value_mut(pi).data_mut()[e] = original;
            let (fp, fm) = (scalar(&gp, lp), scalar(&gm, lm));
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite { param: name.clone() });
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g.data()[e]);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > report.max_rel_error || report.worst_param.is_none() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = Some(name.clone());
                report.worst_index = e;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::DenseArray;

    fn theta() -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.insert("theta", DenseArray::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
        p
    }

    #[test]
    fn linear_loss_is_exact() {
        let r = grad_check(|g, p| Ok(g.sum(p.id("theta")?)), &theta(), 1e-5).unwrap();
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error < 1e-9);
    }

    #[test]
    fn quadratic_gradient() {
        let p = theta();
        let mut g = Graph::new();
        let b = p.bind(&mut g);
        let x = b.id("theta").unwrap();
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);

        let r = grad_check(
            |g, p| {
                let x = p.id("theta")?;
                let sq = g.mul(x, x)?;
                Ok(g.sum(sq))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn rejects_bad_eps_and_non_finite_loss() {
        assert!(grad_check(|g, p| Ok(g.sum(p.id("theta")?)), &theta(), 1e-2).is_err());
        let mut p = theta();
        p.value_mut(0).data_mut()[0] = f64::INFINITY;
        assert!(matches!(
            grad_check(|g, p| Ok(g.sum(p.id("theta")?)), &p, 1e-5),
            Err(Error::NonFinite { .. })
        ));
    }
}
