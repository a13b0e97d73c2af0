//! The black box being optimized: policy in, accuracy-like objective and
//! FLOPs ratio out.

mod external;
mod replay;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::acquisition::SearchDomain;
use crate::error::{Error, Result};
use crate::gp::PruningPolicy;
use crate::layer_model::NetworkDescriptor;

pub use external::ExternalEnvironment;
pub use replay::{RecordingEnvironment, ReplayEnvironment, Response};
pub use synthetic::{GeneratorConfig, Interaction, SyntheticEnvSpec, SyntheticEnvironment};

/// Slack allowed when classifying an evaluated FLOPs ratio as feasible.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Width of the final bracket on the repair scale factor.
pub const REPAIR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub flops_ratio: f64,
    pub feasible: bool,
}

impl Evaluation {
    pub fn new(objective: f64, flops_ratio: f64, target: f64) -> Self {
        Self {
            objective,
            flops_ratio,
            feasible: flops_ratio <= target + FEASIBILITY_TOLERANCE,
        }
    }
}

/// A layer-space evaluator. Implementations are used sequentially, one
/// evaluation at a time.
pub trait Environment {
    fn evaluate(
        &mut self,
        net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation>;
}

impl<E: Environment + ?Sized> Environment for &mut E {
    fn evaluate(
        &mut self,
        net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        (**self).evaluate(net, policy, target)
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn evaluate(
        &mut self,
        net: &NetworkDescriptor,
        policy: &PruningPolicy,
        target: f64,
    ) -> Result<Evaluation> {
        (**self).evaluate(net, policy, target)
    }
}

/// Makes a layer-space policy satisfy `flops_ratio <= target` inside `domain`.
pub fn project_feasible(
    net: &NetworkDescriptor,
    policy: &PruningPolicy,
    target: f64,
    domain: &SearchDomain,
) -> Result<PruningPolicy> {
    let repaired = repair_with(|p| net.flops_ratio(p), policy.as_slice(), target, domain)?;
    PruningPolicy::new(repaired)
}

/// Repair against an arbitrary monotone FLOPs map.
///
/// A feasible point is returned unchanged. Otherwise the result is
/// `clamp(alpha * x, lo, hi)` for the largest `alpha` in `(0, 1]` that keeps
/// it feasible, bracketed to [`REPAIR_TOLERANCE`]. The clamp sits inside the
/// search so the returned point is feasible after clamping.
pub fn repair_with<F>(
    mut flops_ratio: F,
    x: &[f64],
    target: f64,
    domain: &SearchDomain,
) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if x.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: x.len(),
        });
    }
    if !domain.contains(x) {
        return Err(Error::InvalidPolicy(
            "policy lies outside the search domain".into(),
        ));
    }
    if flops_ratio(x)? <= target {
        return Ok(x.to_vec());
    }
    let lower_ratio = flops_ratio(domain.lo())?;
    if lower_ratio > target {
        return Err(Error::TargetUnreachable {
            target,
            lower_ratio,
        });
    }
    let mut y = vec![0.0; x.len()];
    let scaled = |alpha: f64, y: &mut Vec<f64>| {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = alpha * xi;
        }
        domain.clamp(y);
    };
    // Invariant: scaling by `feasible` meets the target, by `infeasible` not.
    let (mut feasible, mut infeasible) = (0.0, 1.0);
    while infeasible - feasible > REPAIR_TOLERANCE {
        let mid = 0.5 * (feasible + infeasible);
        scaled(mid, &mut y);
        if flops_ratio(&y)? <= target {
            feasible = mid;
        } else {
            infeasible = mid;
        }
    }
    scaled(feasible, &mut y);
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer_model::{LayerDescriptor, LayerKind};

    fn conv(index: usize, n: u64, c: u64, k: u64, producer: Option<usize>) -> LayerDescriptor {
        LayerDescriptor {
            index,
            kind: LayerKind::Conv,
            n,
            c,
            k,
            out_h: 8,
            out_w: 8,
            prunable: true,
            producer,
        }
    }

    fn chain() -> NetworkDescriptor {
        NetworkDescriptor::new(
            "chain",
            vec![conv(0, 8, 4, 3, None), conv(1, 8, 8, 3, Some(0))],
        )
        .unwrap()
    }

    #[test]
    fn feasible_policy_is_untouched() {
        let net = chain();
        let p = PruningPolicy::new(vec![0.3, 0.4]).unwrap();
        let d = SearchDomain::full(2, 0.05).unwrap();
        assert_eq!(project_feasible(&net, &p, 0.5, &d).unwrap(), p);
    }

    #[test]
    fn unreachable_target() {
        let net = chain();
        let d = SearchDomain::new(vec![0.9; 2], vec![1.0; 2]).unwrap();
        let p = PruningPolicy::uniform(2, 1.0).unwrap();
        let err = project_feasible(&net, &p, 0.1, &d).unwrap_err();
        assert!(err.to_string().contains("target unreachable"));
    }

    #[test]
    fn repaired_policy_is_feasible_and_tight() {
        let net = chain();
        let d = SearchDomain::full(2, 0.05).unwrap();
        let p = PruningPolicy::new(vec![1.0, 0.8]).unwrap();
        let r = project_feasible(&net, &p, 0.3, &d).unwrap();
        let ratio = net.flops_ratio(r.as_slice()).unwrap();
        assert!(ratio <= 0.3 && ratio > 0.3 - 1e-5, "{ratio}");
        assert!((r.as_slice()[1] / r.as_slice()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clamping_happens_inside_the_search() {
        let net = chain();
        let d = SearchDomain::new(vec![0.6, 0.05], vec![1.0, 1.0]).unwrap();
        let p = PruningPolicy::new(vec![0.6, 1.0]).unwrap();
        let r = project_feasible(&net, &p, 0.4, &d).unwrap();
        assert_eq!(r.as_slice()[0], 0.6);
        assert!(net.flops_ratio(r.as_slice()).unwrap() <= 0.4);
    }

    #[test]
    fn feasibility_flag() {
        assert!(Evaluation::new(0.5, 0.5 + 1e-10, 0.5).feasible);
        assert!(!Evaluation::new(0.5, 0.5 + 1e-8, 0.5).feasible);
    }
}
