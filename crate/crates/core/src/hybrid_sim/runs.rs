//! Exhaustive enumeration of the successor choices along an arc.

use nalgebra::DVector;

use super::{FlowSegment, Gamma, HybridArc, HybridState, HybridSystem, JumpRecord, PhaseEnd, SimError, SimParams, Termination};

/// Branching grows as the product of successor-set sizes.
pub const MAX_ENUMERATION_DEPTH: usize = 12;

/// One flow interval and the subtrees of every successor taken at its end.
#[derive(Debug, Clone, PartialEq)]
pub struct RunNode {
    pub segment: FlowSegment,
    pub children: Vec<RunNode>,
    /// Set on leaves.
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTree {
    pub root: RunNode,
    pub depth: usize,
}

impl RunTree {
    /// One arc per root-to-leaf path.
    pub fn leaves(&self) -> Vec<HybridArc> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        collect(&self.root, &mut path, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        fn count(n: &RunNode) -> usize {
            if n.children.is_empty() {
                1
            } else {
                n.children.iter().map(count).sum()
            }
        }
        count(&self.root)
    }

    /// Preorder walk over every node with its depth.
    pub fn nodes(&self) -> Vec<(usize, &RunNode)> {
        let mut out = Vec::new();
        let mut stack = vec![(0, &self.root)];
        while let Some((d, n)) = stack.pop() {
            out.push((d, n));
            stack.extend(n.children.iter().rev().map(|c| (d + 1, c)));
        }
        out
    }

    /// Indented text listing of the tree.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (d, n) in self.nodes() {
            let seg = &n.segment;
            let end = match n.termination {
                Some(t) => format!(" [{}]", serde_json::to_value(t).unwrap().as_str().unwrap_or("")),
                None => String::new(),
            };
            out.push_str(&format!(
                "{}{} t=[{:.4}, {:.4}]{}\n",
                "  ".repeat(d),
                seg.chi,
                seg.start().t,
                seg.end().t,
                end
            ));
        }
        out
    }
}

fn collect<'a>(node: &'a RunNode, path: &mut Vec<&'a RunNode>, out: &mut Vec<HybridArc>) {
    path.push(node);
    if node.children.is_empty() {
        let segments: Vec<FlowSegment> = path.iter().map(|n| n.segment.clone()).collect();
        let jumps = path
            .windows(2)
            .map(|w| {
                let (parent, child) = (w[0], w[1]);
                let end = parent.segment.end();
                JumpRecord {
                    t: end.t,
                    pre: parent.segment.chi,
                    post: child.segment.chi,
                    alternatives: parent
                        .children
                        .iter()
                        .map(|c| c.segment.chi)
                        .filter(|&c| c != child.segment.chi)
                        .collect(),
                    zeta: end.zeta.clone(),
                }
            })
            .collect();
        out.push(HybridArc {
            segments,
            jumps,
            termination: node.termination.unwrap_or(Termination::JumpLimit),
        });
    } else {
        for c in &node.children {
            collect(c, path, out);
        }
    }
    path.pop();
}

pub(super) fn enumerate(
    system: &HybridSystem,
    x0: &HybridState,
    depth: usize,
    params: &SimParams,
    gamma: &Gamma<'_>,
) -> Result<RunTree, SimError> {
    if depth > MAX_ENUMERATION_DEPTH {
        return Err(SimError::DepthExceeded(depth));
    }
    system.check_initial(x0, gamma)?;
    let steps = system.step_matrices(params.h_step)?;
    let ctx = Ctx { system, params, steps: &steps, gamma, depth };
    let root = ctx.expand(x0.chi, 0, 0.0, &x0.zeta)?;
    Ok(RunTree { root, depth })
}

struct Ctx<'a, 'g> {
    system: &'a HybridSystem,
    params: &'a SimParams,
    steps: &'a std::collections::BTreeMap<usize, nalgebra::DMatrix<f64>>,
    gamma: &'a Gamma<'g>,
    depth: usize,
}

impl Ctx<'_, '_> {
    fn expand(&self, chi: crate::constrain::AutomatonState, j: usize, t: f64, zeta: &DVector<f64>) -> Result<RunNode, SimError> {
        let leaf = |samples, termination| RunNode {
            segment: FlowSegment { j, chi, samples },
            children: Vec::new(),
            termination: Some(termination),
        };
        if j > 0 && !(self.gamma)(chi, zeta) {
            let s = vec![super::Sample { t, zeta: zeta.clone() }];
            return Ok(leaf(s, Termination::LeftRestriction));
        }
        let (samples, end) = self.system.flow_phase(chi, t, zeta, self.params, self.steps, self.gamma)?;
        let z_event = match end {
            PhaseEnd::Event(z) => z,
            PhaseEnd::Exhausted => return Ok(leaf(samples, Termination::FlowExhausted)),
            PhaseEnd::Left => return Ok(leaf(samples, Termination::LeftRestriction)),
        };
        if j >= self.depth {
            return Ok(leaf(samples, Termination::JumpLimit));
        }
        let t_end = samples.last().map_or(t, |x| x.t);
        let children = self
            .system
            .constrained()
            .jump_map(chi)?
            .into_iter()
            .map(|post| self.expand(post, j + 1, t_end, &z_event))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RunNode { segment: FlowSegment { j, chi, samples }, children, termination: None })
    }
}
