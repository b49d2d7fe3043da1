//! Central finite-difference check of [`backward`] on a tiny instance.

use alloc::vec;
use alloc::vec::Vec;

use crate::interactions::{BprTriple, InteractionSet};
use crate::math;
use crate::model::{init_params, ModelDims, ModelParams, TENSOR_NAMES};
use crate::propagation::{forward, PropagationGraphs};
use crate::training::{backward, total_loss, HyperParams, TrainError};
use crate::ukg::{split_subgraphs, EntityClass, EntityRef, Relation, Triplet, UrbanKG};

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor for relative error so exact zeros compare absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct GradcheckInstance {
    pub params: ModelParams,
    pub graphs: PropagationGraphs,
    pub batch: Vec<BprTriple>,
    pub hp: HyperParams,
}

/// d=4, 3 users, 3 POIs, two geographical and two functional entities,
/// two intents per channel, two layers, λ1 = λ2 = 0.1, α = 1.
pub fn tiny_instance(seed: u64) -> GradcheckInstance {
    use EntityClass::*;
    let e = EntityRef::new;
    let t = |h, r, tl| Triplet::new(h, r, tl);
    let triplets = vec![
        t(e(Poi, 0), Relation::LocateAt, e(Region, 0)),
        t(e(Poi, 1), Relation::LocateAt, e(Region, 0)),
        t(e(Poi, 1), Relation::BelongTo, e(BusinessArea, 0)),
        t(e(Poi, 2), Relation::BelongTo, e(BusinessArea, 0)),
        t(e(BusinessArea, 0), Relation::BaServe, e(Region, 0)),
        t(e(Poi, 0), Relation::BrandOf, e(Brand, 0)),
        t(e(Poi, 2), Relation::BrandOf, e(Brand, 0)),
        t(e(Poi, 1), Relation::Cate1Of, e(Cate1, 0)),
        t(e(Poi, 2), Relation::Cate1Of, e(Cate1, 0)),
        t(e(Brand, 0), Relation::Brand2Cate1, e(Cate1, 0)),
    ];
    let kg = UrbanKG::new(triplets, None).expect("tiny graph respects the schema");
    let train = InteractionSet::from_pairs(3, 3, vec![(0, 0), (0, 1), (1, 2), (2, 1)]).expect("ids in range");
    let (geo, func) = split_subgraphs(&kg);
    let dims = ModelDims::for_graphs(3, &geo, &func, 4, 2, 2);
    let graphs = PropagationGraphs::split(&kg, train);
    let batch = [(0, 0, 2), (0, 1, 2), (1, 2, 0), (1, 2, 1), (2, 1, 0), (2, 1, 2)]
        .into_iter()
        .map(|(user, pos, neg)| BprTriple { user, pos, neg })
        .collect();
    let hp = HyperParams { lambda_ind: 0.1, lambda_reg: 0.1, alpha: 1.0, ..HyperParams::default() };
    GradcheckInstance { params: init_params(dims, seed), graphs, batch, hp }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub worst_row: usize,
    pub worst_col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub step: f64,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn worst(&self) -> &TensorCheck {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
            .expect("six tensors")
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    math::abs(analytic - numeric) / math::abs(analytic).max(math::abs(numeric)).max(REL_ERR_FLOOR)
}

fn objective(inst: &GradcheckInstance, params: &ModelParams) -> f64 {
    total_loss(&inst.batch, params, &forward(params, &inst.graphs), &inst.hp).total
}

/// Compares analytic gradients against central differences for every
/// entry of every tensor. `corrupt` names a tensor whose analytic gradient
/// is deliberately perturbed (fault injection for testing the checker).
pub fn gradcheck(
    inst: &GradcheckInstance,
    step: f64,
    tolerance: f64,
    corrupt: Option<&str>,
) -> Result<GradcheckReport, TrainError> {
    let (_, mut grads, _) = backward(&inst.batch, &inst.params, &inst.graphs, &inst.hp)?;
    if let Some(name) = corrupt {
        if let Some(i) = TENSOR_NAMES.iter().position(|n| *n == name) {
            let g = grads.tensors_mut().into_iter().nth(i).expect("index from TENSOR_NAMES");
            g.as_mut_slice()[0] += 1.0;
        }
    }
    let mut probe = inst.params.clone();
    let mut tensors = Vec::with_capacity(6);
    for (ti, name) in TENSOR_NAMES.iter().enumerate() {
        let analytic = grads.tensors()[ti].clone();
        let cols = analytic.cols();
        let mut check =
            TensorCheck { name, max_rel_err: 0.0, worst_row: 0, worst_col: 0, analytic: 0.0, numeric: 0.0 };
        for idx in 0..analytic.as_slice().len() {
            let orig = probe.tensors()[ti].as_slice()[idx];
            probe.tensors_mut()[ti].as_mut_slice()[idx] = orig + step;
            let up = objective(inst, &probe);
            probe.tensors_mut()[ti].as_mut_slice()[idx] = orig - step;
            let down = objective(inst, &probe);
            probe.tensors_mut()[ti].as_mut_slice()[idx] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.as_slice()[idx];
            let err = relative_error(a, numeric);
            if err > check.max_rel_err || idx == 0 {
                check = TensorCheck {
                    name,
                    max_rel_err: err,
                    worst_row: idx / cols,
                    worst_col: idx % cols,
                    analytic: a,
                    numeric,
                };
            }
        }
        tensors.push(check);
    }
    let max_rel_err = tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport { tensors, max_rel_err, tolerance, step, passed: max_rel_err < tolerance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_instance_passes() {
        let report = gradcheck(&tiny_instance(0), DEFAULT_STEP, DEFAULT_TOLERANCE, None).unwrap();
        for t in &report.tensors {
            std::println!("{} {:.3e} at ({}, {})", t.name, t.max_rel_err, t.worst_row, t.worst_col);
        }
        assert!(report.passed, "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let report = gradcheck(&tiny_instance(0), DEFAULT_STEP, DEFAULT_TOLERANCE, Some("R_f")).unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst().name, "R_f");
    }
}
