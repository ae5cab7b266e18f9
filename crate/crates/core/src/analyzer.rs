//! Variable classification, dependency graphs and causes/uses trees.
//!
//! Two graphs are built. The step-time graph orders auxiliaries within a
//! step; reads of stocks and of SMOOTH/SMOOTHI/DELAY FIXED outputs come
//! from stored state and are not edges. The init-time graph orders the
//! evaluation at the initial time, where state sites themselves must be
//! seeded (SMOOTH from its input, SMOOTHI/DELAY FIXED/INTEG from their
//! explicit initial argument).

use std::collections::{HashMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{normalize_name, BuiltinKind, CmpOp, Expr, ModelAst, NameKey};
use crate::graph::DepGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VarKind {
    Stock,
    Constant,
    Control,
    Auxiliary,
}

impl VarKind {
    pub fn is_constant(self) -> bool {
        matches!(self, VarKind::Constant | VarKind::Control)
    }

    pub fn label(self) -> &'static str {
        match self {
            VarKind::Stock => "stock",
            VarKind::Constant => "constant",
            VarKind::Control => "control",
            VarKind::Auxiliary => "auxiliary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SiteKind {
    IntegState,
    SmoothState,
    DelayBuffer,
    RngStream,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSite {
    pub site_id: usize,
    pub kind: SiteKind,
    pub builtin: BuiltinKind,
    pub owner: NameKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LoopPhase {
    StepTime,
    InitTime,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopDiagnostic {
    pub cycle: Vec<NameKey>,
    pub phase: LoopPhase,
    pub hint: String,
}

impl LoopDiagnostic {
    pub fn mentions(&self, raw: &str) -> bool {
        normalize_name(raw).is_ok_and(|k| self.cycle.contains(&k))
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub enum Diagnostic {
    #[error("line {line}: {used_by:?} reads undefined variable {name:?}")]
    Undefined { name: String, used_by: String, line: usize },
    #[error("{phase:?} loop: {} ({hint})", .cycle.join(" -> "))]
    Loop {
        cycle: Vec<String>,
        phase: LoopPhase,
        hint: String,
    },
    #[error("line {line}: {builtin} in {owner:?} needs a constant {argument}")]
    NonConstantArgument {
        owner: String,
        builtin: &'static str,
        argument: &'static str,
        line: usize,
    },
}

impl From<&LoopDiagnostic> for Diagnostic {
    fn from(l: &LoopDiagnostic) -> Self {
        Diagnostic::Loop {
            cycle: l.cycle.iter().map(|n| n.canonical().to_string()).collect(),
            phase: l.phase,
            hint: l.hint.clone(),
        }
    }
}

/// A node of the initialization plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitNode {
    Var(usize),
    Site(usize),
}

#[derive(Debug, Clone)]
pub struct ClassifiedModel {
    pub ast: ModelAst,
    /// Kinds in model order.
    pub kinds: IndexMap<NameKey, VarKind>,
    /// Auxiliaries, dependencies first.
    pub step_order: Vec<NameKey>,
    /// Every variable in initialization order.
    pub init_order: Vec<NameKey>,
    pub init_plan: Vec<InitNode>,
    pub state_sites: Vec<StateSite>,
    pub flows: HashSet<NameKey>,
    pub warnings: Vec<String>,
}

impl ClassifiedModel {
    pub fn kind(&self, name: &NameKey) -> Option<VarKind> {
        self.kinds.get(name).copied()
    }

    pub fn index_of(&self, name: &NameKey) -> Option<usize> {
        self.kinds.get_index_of(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &NameKey> {
        self.kinds.keys()
    }

    pub fn is_flow(&self, name: &NameKey) -> bool {
        self.flows.contains(name)
    }

    /// Direct reads of a variable, in order of first appearance.
    pub fn causes(&self, name: &NameKey) -> Vec<NameKey> {
        self.ast
            .equation(name)
            .map(|eq| eq.rhs.vars_in_order().into_iter().filter(|n| !n.is_time()).collect())
            .unwrap_or_default()
    }

    /// Variables whose equation reads `name`, in model order.
    pub fn uses(&self, name: &NameKey) -> Vec<NameKey> {
        self.ast
            .equations
            .iter()
            .filter(|eq| eq.rhs.free_vars().contains(name))
            .map(|eq| eq.name.clone())
            .collect()
    }

    pub fn count(&self, kind: VarKind) -> usize {
        self.kinds.values().filter(|k| **k == kind).count()
    }
}

/// Visit every stateful call site in deterministic order: equations in
/// model order, then pre-order (left to right) within each right-hand side.
pub(crate) fn for_each_site<'a, F: FnMut(usize, &'a Expr)>(ast: &'a ModelAst, mut f: F) {
    for (i, eq) in ast.equations.iter().enumerate() {
        eq.rhs.walk(&mut |node| {
            if let Expr::Call(kind, _) = node {
                if kind.is_stateful() {
                    f(i, node);
                }
            }
        });
    }
}

fn site_kind(b: BuiltinKind) -> SiteKind {
    match b {
        BuiltinKind::Integ => SiteKind::IntegState,
        BuiltinKind::Smooth | BuiltinKind::SmoothI => SiteKind::SmoothState,
        BuiltinKind::DelayFixed => SiteKind::DelayBuffer,
        _ => SiteKind::RngStream,
    }
}

/// True when the expression can be folded given the set of constants.
pub(crate) fn is_constant_expr(e: &Expr, is_const: &dyn Fn(&NameKey) -> bool) -> bool {
    let mut ok = true;
    e.walk(&mut |n| match n {
        Expr::Var(name) if name.is_time() || !is_const(name) => ok = false,
        Expr::Call(kind, _) if !matches!(kind, BuiltinKind::IfThenElse | BuiltinKind::Max | BuiltinKind::Min) => {
            ok = false
        }
        _ => {}
    });
    ok
}

struct Reads {
    vars: Vec<NameKey>,
    sites: Vec<usize>,
}

/// Walks an expression collecting same-step reads. State-backed calls
/// contribute their site instead of their arguments; RANDOM UNIFORM bounds
/// are evaluated inline and do count. `next_site` tracks site numbering.
fn collect_reads(e: &Expr, next_site: &mut usize, out: &mut Reads) {
    match e {
        Expr::Number(_) => {}
        Expr::Var(n) => {
            if !n.is_time() && !out.vars.contains(n) {
                out.vars.push(n.clone());
            }
        }
        Expr::Neg(x) => collect_reads(x, next_site, out),
        Expr::Binary(_, l, r) | Expr::Compare(_, l, r) => {
            collect_reads(l, next_site, out);
            collect_reads(r, next_site, out);
        }
        Expr::Call(kind, args) if kind.is_stateful() => {
            let id = *next_site;
            *next_site += 1;
            out.sites.push(id);
            let mut skip = Reads {
                vars: Vec::new(),
                sites: Vec::new(),
            };
            for (i, a) in args.iter().enumerate() {
                if *kind == BuiltinKind::RandomUniform && i < 2 {
                    collect_reads(a, next_site, out);
                } else {
                    // still advance site numbering for nested calls
                    collect_reads(a, next_site, &mut skip);
                }
            }
        }
        Expr::Call(_, args) => args.iter().for_each(|a| collect_reads(a, next_site, out)),
    }
}

fn reads_of(e: &Expr) -> Reads {
    let mut out = Reads {
        vars: Vec::new(),
        sites: Vec::new(),
    };
    let mut counter = 0;
    collect_reads(e, &mut counter, &mut out);
    out
}

const INIT_HINT: &str = "replace SMOOTH with SMOOTHI or give an explicit initial value";
const STEP_HINT: &str = "break the loop with a stock or a SMOOTH/DELAY FIXED state";

/// Classify variables, build both dependency graphs and order them.
pub fn classify(ast: &ModelAst) -> Result<ClassifiedModel, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut warnings = Vec::new();
    let n = ast.equations.len();
    let index: HashMap<&NameKey, usize> = ast.equations.iter().enumerate().map(|(i, e)| (&e.name, i)).collect();

    for eq in &ast.equations {
        let mut seen = HashSet::new();
        eq.rhs.visit_vars(&mut |name| {
            if !name.is_time() && !index.contains_key(name) && seen.insert(name.clone()) {
                diags.push(Diagnostic::Undefined {
                    name: name.canonical().to_string(),
                    used_by: eq.name.canonical().to_string(),
                    line: eq.source_line,
                });
            }
        });
        eq.rhs.walk(&mut |node| {
            if let Expr::Compare(CmpOp::Eq, ..) = node {
                warnings.push(format!(
                    "line {}: {:?} compares floats with `=`",
                    eq.source_line,
                    eq.name.canonical()
                ));
            }
        });
    }

    // Constants: least fixed point over constant-foldable right-hand sides.
    let mut constant = vec![false; n];
    loop {
        let mut changed = false;
        for (i, eq) in ast.equations.iter().enumerate() {
            if constant[i] || eq.is_stock() {
                continue;
            }
            let is_const = |k: &NameKey| index.get(k).is_some_and(|&j| constant[j]);
            if is_constant_expr(&eq.rhs, &is_const) {
                constant[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kinds: IndexMap<NameKey, VarKind> = ast
        .equations
        .iter()
        .enumerate()
        .map(|(i, eq)| {
            let kind = if eq.name.is_control() {
                VarKind::Control
            } else if eq.is_stock() {
                VarKind::Stock
            } else if constant[i] {
                VarKind::Constant
            } else {
                VarKind::Auxiliary
            };
            (eq.name.clone(), kind)
        })
        .collect();
    let kind_of = |name: &NameKey| kinds.get(name).copied();
    let is_const = |name: &NameKey| kind_of(name).is_some_and(|k| k.is_constant());

    // State sites and the constant-argument rules.
    let mut sites = Vec::new();
    let mut site_args: Vec<&[Expr]> = Vec::new();
    for_each_site(ast, |eq_idx, node| {
        let Expr::Call(builtin, args) = node else {
            unreachable!()
        };
        let eq = &ast.equations[eq_idx];
        let required = match builtin {
            BuiltinKind::DelayFixed => Some((1, "delay time")),
            BuiltinKind::RandomUniform => Some((2, "seed")),
            _ => None,
        };
        if let Some((arg, what)) = required {
            if !is_constant_expr(&args[arg], &is_const) {
                diags.push(Diagnostic::NonConstantArgument {
                    owner: eq.name.canonical().to_string(),
                    builtin: builtin.keyword(),
                    argument: what,
                    line: eq.source_line,
                });
            }
        }
        sites.push(StateSite {
            site_id: sites.len(),
            kind: site_kind(*builtin),
            builtin: *builtin,
            owner: eq.name.clone(),
        });
        site_args.push(args.as_slice());
    });

    let mut flows = HashSet::new();
    for eq in &ast.equations {
        if let Expr::Call(BuiltinKind::Integ, args) = &eq.rhs {
            for v in args[0].free_vars() {
                if kind_of(&v) == Some(VarKind::Auxiliary) {
                    flows.insert(v);
                }
            }
        }
    }

    if !diags.is_empty() {
        return Err(diags);
    }

    // Step-time graph over variables: auxiliary -> auxiliary reads.
    let mut step_graph = DepGraph::new(n);
    for (i, eq) in ast.equations.iter().enumerate() {
        if kinds[i] != VarKind::Auxiliary {
            continue;
        }
        for v in reads_of(&eq.rhs).vars {
            let j = index[&v];
            if kinds[j] == VarKind::Auxiliary {
                step_graph.add_edge(i, j);
            }
        }
    }
    let aux: Vec<usize> = (0..n).filter(|&i| kinds[i] == VarKind::Auxiliary).collect();
    let mut step_cycles: Vec<Vec<NameKey>> = Vec::new();
    let step_order = match step_graph.topo_order(&aux) {
        Ok(order) => order,
        Err(cycles) => {
            for c in cycles {
                let mut sorted: Vec<NameKey> = c.iter().map(|&i| ast.equations[i].name.clone()).collect();
                sorted.sort();
                step_cycles.push(sorted);
                let diag = LoopDiagnostic {
                    cycle: c.iter().map(|&i| ast.equations[i].name.clone()).collect(),
                    phase: LoopPhase::StepTime,
                    hint: STEP_HINT.to_string(),
                };
                diags.push((&diag).into());
            }
            Vec::new()
        }
    };

    // Init-time graph: variables 0..n, then sites n..n+s.
    let mut init_graph = DepGraph::new(n + sites.len());
    let mut site_base = 0;
    for (i, eq) in ast.equations.iter().enumerate() {
        let r = reads_of(&eq.rhs);
        let sites_here = count_sites(&eq.rhs);
        match &eq.rhs {
            Expr::Call(BuiltinKind::Integ, _) => init_graph.add_edge(i, n + site_base),
            _ => {
                for v in &r.vars {
                    init_graph.add_edge(i, index[v]);
                }
                for s in &r.sites {
                    init_graph.add_edge(i, n + site_base + s);
                }
            }
        }
        site_base += sites_here;
    }
    for site in &sites {
        let args = site_args[site.site_id];
        let seeded_by: &[usize] = match site.builtin {
            BuiltinKind::Integ => &[1],
            BuiltinKind::Smooth => &[0],
            BuiltinKind::SmoothI => &[2],
            BuiltinKind::DelayFixed => &[1, 2],
            BuiltinKind::RandomUniform => &[2],
            _ => &[],
        };
        // Nested sites inside an argument are numbered after this one.
        let mut nested_base = site.site_id + 1;
        for (ai, arg) in args.iter().enumerate() {
            let nested = count_sites(arg);
            if seeded_by.contains(&ai) {
                let r = reads_of(arg);
                for v in &r.vars {
                    init_graph.add_edge(n + site.site_id, index[v]);
                }
                for s in &r.sites {
                    init_graph.add_edge(n + site.site_id, n + nested_base + s);
                }
            }
            nested_base += nested;
        }
    }
    let all_nodes: Vec<usize> = (0..n + sites.len()).collect();
    let init_plan = match init_graph.topo_order(&all_nodes) {
        Ok(order) => order
            .into_iter()
            .map(|i| if i < n { InitNode::Var(i) } else { InitNode::Site(i - n) })
            .collect::<Vec<_>>(),
        Err(cycles) => {
            for c in cycles {
                let mut names: Vec<NameKey> = Vec::new();
                for i in c {
                    let name = if i < n {
                        ast.equations[i].name.clone()
                    } else {
                        sites[i - n].owner.clone()
                    };
                    if !names.contains(&name) {
                        names.push(name);
                    }
                }
                // An algebraic loop is also an init loop; report it once.
                let mut sorted = names.clone();
                sorted.sort();
                if step_cycles.contains(&sorted) {
                    continue;
                }
                let diag = LoopDiagnostic {
                    cycle: names,
                    phase: LoopPhase::InitTime,
                    hint: INIT_HINT.to_string(),
                };
                diags.push((&diag).into());
            }
            Vec::new()
        }
    };

    if !diags.is_empty() {
        return Err(diags);
    }

    let init_order = init_plan
        .iter()
        .filter_map(|node| match node {
            InitNode::Var(i) => Some(ast.equations[*i].name.clone()),
            InitNode::Site(_) => None,
        })
        .collect();

    Ok(ClassifiedModel {
        ast: ast.clone(),
        step_order: step_order.into_iter().map(|i| ast.equations[i].name.clone()).collect(),
        init_order,
        init_plan,
        kinds,
        state_sites: sites,
        flows,
        warnings,
    })
}

fn count_sites(e: &Expr) -> usize {
    let mut c = 0;
    e.walk(&mut |node| {
        if let Expr::Call(kind, _) = node {
            if kind.is_stateful() {
                c += 1;
            }
        }
    });
    c
}

/// Loop diagnostics only, for callers that need the structured form.
pub fn loop_diagnostics(diags: &[Diagnostic]) -> Vec<LoopDiagnostic> {
    diags
        .iter()
        .filter_map(|d| match d {
            Diagnostic::Loop { cycle, phase, hint } => Some(LoopDiagnostic {
                cycle: cycle.iter().filter_map(|c| normalize_name(c).ok()).collect(),
                phase: *phase,
                hint: hint.clone(),
            }),
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown variable {0:?}")]
pub struct UnknownVariable(pub String);

/// A rendered causes or uses tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextTree {
    pub name: NameKey,
    pub kind: VarKind,
    pub is_flow: bool,
    /// Node already on the path from the root; not expanded.
    pub looped: bool,
    pub children: Vec<TextTree>,
}

impl TextTree {
    pub fn child_names(&self) -> Vec<&str> {
        self.children.iter().map(|c| c.name.key()).collect()
    }

    fn render(&self, depth: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:indent$}{}", "", self.name.canonical(), indent = depth * 2)?;
        match self.kind {
            VarKind::Stock => f.write_str(" [stock]")?,
            _ if self.is_flow => f.write_str(" [flow]")?,
            _ => {}
        }
        if self.looped {
            f.write_str(" (loop)")?;
        }
        writeln!(f)?;
        self.children.iter().try_for_each(|c| c.render(depth + 1, f))
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TextTree::size).sum::<usize>()
    }
}

impl fmt::Display for TextTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.render(0, f)
    }
}

fn build_tree(
    m: &ClassifiedModel,
    name: &NameKey,
    depth: usize,
    path: &mut Vec<NameKey>,
    edges: &dyn Fn(&NameKey) -> Vec<NameKey>,
) -> TextTree {
    let kind = m.kind(name).expect("tree over defined variables");
    let looped = path.contains(name);
    let mut node = TextTree {
        name: m
            .kinds
            .get_key_value(name)
            .map(|(k, _)| k.clone())
            .unwrap_or_else(|| name.clone()),
        kind,
        is_flow: m.is_flow(name),
        looped,
        children: Vec::new(),
    };
    // Constants are leaves; their causes are not expanded.
    if looped || depth == 0 || kind.is_constant() {
        return node;
    }
    path.push(name.clone());
    node.children = edges(name)
        .iter()
        .map(|c| build_tree(m, c, depth - 1, path, edges))
        .collect();
    path.pop();
    node
}

fn resolve(m: &ClassifiedModel, var: &str) -> Result<NameKey, UnknownVariable> {
    normalize_name(var)
        .ok()
        .filter(|k| m.kinds.contains_key(k))
        .ok_or_else(|| UnknownVariable(var.to_string()))
}

/// Tree of what feeds `var`, down to `depth` levels.
pub fn causes_tree(m: &ClassifiedModel, var: &str, depth: usize) -> Result<TextTree, UnknownVariable> {
    let root = resolve(m, var)?;
    Ok(build_tree(m, &root, depth, &mut Vec::new(), &|n| m.causes(n)))
}

/// Tree of what `var` feeds, down to `depth` levels.
pub fn uses_tree(m: &ClassifiedModel, var: &str, depth: usize) -> Result<TextTree, UnknownVariable> {
    let root = resolve(m, var)?;
    let uses: HashMap<NameKey, Vec<NameKey>> = m.names().map(|k| (k.clone(), m.uses(k))).collect();
    Ok(build_tree(m, &root, depth, &mut Vec::new(), &|n| uses[n].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_model;

    fn classify_src(src: &str) -> Result<ClassifiedModel, Vec<Diagnostic>> {
        classify(&parse_model(src, "t").unwrap())
    }

    #[test]
    fn direct_algebraic_loop() {
        let diags = classify_src("x = y\ny = x").unwrap_err();
        let loops = loop_diagnostics(&diags);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].phase, LoopPhase::StepTime);
        let keys: Vec<_> = loops[0].cycle.iter().map(|n| n.key()).collect();
        assert_eq!(keys, ["x", "y"]);
    }

    #[test]
    fn undefined_reference() {
        let diags = classify_src("x = y + 1").unwrap_err();
        assert!(matches!(&diags[0], Diagnostic::Undefined { name, .. } if name == "y"));
    }

    #[test]
    fn stocks_break_step_cycles() {
        let m = classify_src("s = INTEG(f, 1)\nf = -s / 2").unwrap();
        assert_eq!(m.kind(&normalize_name("s").unwrap()), Some(VarKind::Stock));
        assert_eq!(m.step_order.len(), 1);
        assert!(m.is_flow(&normalize_name("f").unwrap()));
    }

    #[test]
    fn smooth_breaks_step_cycle_but_not_init() {
        // a -> SMOOTH(b) -> b -> a: fine at step time, init-time loop.
        let diags = classify_src("a = SMOOTH(b, 2)\nb = a + 1").unwrap_err();
        let loops = loop_diagnostics(&diags);
        assert_eq!(loops[0].phase, LoopPhase::InitTime);
        assert!(loops[0].hint.contains("SMOOTHI"));
        assert!(classify_src("a = SMOOTHI(b, 2, 0)\nb = a + 1").is_ok());
    }

    #[test]
    fn constants_fold_through_constants() {
        let m = classify_src("a = 2\nb = a * 3\nc = MAX(a, b)\nd = time\ne = STEP(1, a)\nTIME STEP = 0.5").unwrap();
        let kinds: Vec<_> = m.kinds.values().copied().collect();
        use VarKind::*;
        assert_eq!(kinds, [Constant, Constant, Constant, Auxiliary, Auxiliary, Control]);
    }

    #[test]
    fn variable_delay_rejected() {
        let diags = classify_src("x = time\ny = DELAY FIXED(x, x, 0)").unwrap_err();
        assert!(matches!(
            diags[0],
            Diagnostic::NonConstantArgument {
                argument: "delay time",
                ..
            }
        ));
        let diags = classify_src("x = time\ny = RANDOM UNIFORM(0, 1, x)").unwrap_err();
        assert!(matches!(
            diags[0],
            Diagnostic::NonConstantArgument { argument: "seed", .. }
        ));
    }

    #[test]
    fn float_equality_warns() {
        let m = classify_src("x = IF THEN ELSE(time = 1, 1, 0)").unwrap();
        assert_eq!(m.warnings.len(), 1);
    }

    #[test]
    fn site_ids_follow_model_then_preorder() {
        let m = classify_src("u = time\na = SMOOTH(DELAY FIXED(u, 1, 0), 2)\nb = RANDOM UNIFORM(0, 1, 3)").unwrap();
        let sites: Vec<_> = m.state_sites.iter().map(|s| (s.site_id, s.kind)).collect();
        assert_eq!(
            sites,
            vec![
                (0, SiteKind::SmoothState),
                (1, SiteKind::DelayBuffer),
                (2, SiteKind::RngStream)
            ]
        );
    }

    #[test]
    fn trees_stop_at_constants_and_loops() {
        let m = classify_src("k = 2\ns = INTEG(f, k)\nf = k - s / k").unwrap();
        let t = causes_tree(&m, "k", 5).unwrap();
        assert!(t.children.is_empty());
        let t = causes_tree(&m, "s", 9).unwrap();
        let text = t.to_string();
        assert!(text.contains("(loop)"), "{text}");
        assert!(text.starts_with("s [stock]\n  f [flow]\n"), "{text}");
        assert!(causes_tree(&m, "nope", 1).is_err());
        let u = uses_tree(&m, "f", 1).unwrap();
        assert_eq!(u.child_names(), ["s"]);
    }
}
