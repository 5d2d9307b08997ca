use super::constraints::{Candidate, Deps};
use super::program::{Assignment, AttrValue, ConstraintProgram};
use crate::vis::OperationKind;

/// Result of enumerating a program's models.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Enumeration {
    /// Valid assignments in lexicographic slot order.
    pub models: Vec<Assignment>,
    /// Search nodes expanded.
    pub visited: usize,
    /// Branches cut before reaching a leaf.
    pub pruned: usize,
}

impl Enumeration {
    pub fn is_unsatisfiable(&self) -> bool {
        self.models.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Open {
    mark: bool,
    task: bool,
    fields: bool,
    aggregate: bool,
    bin: bool,
    sort: bool,
}

impl Open {
    fn mark_op(&mut self, op: OperationKind) {
        match op {
            OperationKind::Mark => self.mark = true,
            OperationKind::Task => self.task = true,
            OperationKind::ChannelMap(_) | OperationKind::DataColumnSelect => self.fields = true,
            OperationKind::Aggregate(_) => self.aggregate = true,
            OperationKind::Bin(_) => self.bin = true,
            OperationKind::Sort(_) => self.sort = true,
            OperationKind::DataValueFilter => {}
        }
    }

    /// Whether every completion of the current prefix agrees with the
    /// prefix on a violation of a constraint with these dependencies.
    fn decides(&self, d: Deps) -> bool {
        let blocked = (d.mark && self.mark)
            || (d.task && self.task)
            || (d.aggregate && self.aggregate)
            || (d.bin && self.bin)
            || (d.sort && self.sort);
        !blocked && !(d.fields && self.fields && !d.monotone_in_fields)
    }
}

struct Search<'p> {
    prog: &'p ConstraintProgram,
    /// `open[d]`: slot kinds still unassigned after the first `d` slots of the order.
    open: Vec<Open>,
    values: Vec<Option<&'p AttrValue>>,
    out: Enumeration,
}

impl<'p> Search<'p> {
    fn violated(&self, depth: usize) -> bool {
        let nodes = self.prog.reify_partial(&self.values);
        let cand = Candidate::from_nodes(&nodes);
        let ctx = self.prog.ctx();
        let leaf = depth == self.prog.order().len();
        let open = self.open[depth];
        self.prog.hard_constraints.iter().any(|hc| {
            let applies = leaf || hc.deps().is_some_and(|d| open.decides(d));
            applies && ctx.eval(hc, &cand).is_some()
        })
    }

    fn dfs(&mut self, depth: usize) {
        self.out.visited += 1;
        if self.violated(depth) {
            if depth < self.prog.order().len() {
                self.out.pruned += 1;
            }
            return;
        }
        let Some(&slot) = self.prog.order().get(depth) else {
            let model = self
                .values
                .iter()
                .map(|v| (*v).cloned().expect("leaf assigns every slot"))
                .collect();
            self.out.models.push(model);
            return;
        };
        let domain = &self.prog.attributes[slot].domain;
        for v in domain {
            self.values[slot] = Some(v);
            self.dfs(depth + 1);
        }
        self.values[slot] = None;
    }
}

/// All assignments that pick one value per slot and violate no hard
/// constraint, in lexicographic order of the slot order.
pub fn enumerate_models(prog: &ConstraintProgram) -> Enumeration {
    let order = prog.order();
    let mut open = vec![Open::default(); order.len() + 1];
    for d in (0..order.len()).rev() {
        let mut o = open[d + 1];
        let a = &prog.attributes[order[d]];
        o.mark_op(prog.nodes()[a.node].op);
        open[d] = o;
    }
    if prog.attributes.iter().any(|a| a.domain.is_empty()) {
        return Enumeration::default();
    }
    let mut s = Search {
        prog,
        open,
        values: vec![None; prog.attributes.len()],
        out: Enumeration::default(),
    };
    s.dfs(0);
    s.out
}
