//! Ground-structure truss topology instances.
//!
//! A `g × g` grid of nodes with unit spacing, every node pair joined by a
//! potential bar, the left column clamped and a unit point load at the
//! middle node of the right column. Bar volumes `t` are the design
//! variables; the SDP minimizes total volume subject to a compliance bound
//! (and optionally a lower bound on the fundamental vibration frequency).
//!
//! The SDP is stored in dual view with `y = −t`:
//!
//! ```text
//! [[γ, −fᵀ], [−f, K(t)]] ⪰ 0,            t̲ ≤ t ≤ t̄,
//! K(t) − λ̄ (M(t) + M₀) ⪰ 0               (vibration variant only)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{chol, sym_eigvals, DenseSym, Mat, SparseSym, Vector};
use crate::model::{LinMatrix, SdpProblem};
use crate::precond::detect_rank;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Vertical load, compliance constraint only.
    Tru,
    /// Horizontal load, compliance and vibration constraints.
    Vib,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Tru => "tru",
            Variant::Vib => "vib",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tru" => Ok(Variant::Tru),
            "vib" => Ok(Variant::Vib),
            _ => Err(Error::Config(format!("unknown truss variant {s:?} (expected tru or vib)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub nodes: [usize; 2],
    pub length: f64,
    /// `(−cx, −cy, cx, cy)` for the unit direction `(cx, cy)` from the first node to the second.
    pub cosines: [f64; 4],
    /// Free DOF index of each of the four end displacements, `None` if clamped.
    pub dofs: [Option<usize>; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStructure {
    pub grid: usize,
    pub variant: Variant,
    pub nodes: Vec<[f64; 2]>,
    pub fixed_nodes: Vec<usize>,
    /// Free DOF index of `(x, y)` per node.
    pub node_dofs: Vec<[Option<usize>; 2]>,
    pub bars: Vec<Bar>,
    pub load_node: usize,
    /// Load on the free DOFs.
    pub load: Vec<f64>,
    pub youngs_modulus: f64,
}

impl GroundStructure {
    pub fn num_bars(&self) -> usize {
        self.bars.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.load.len()
    }
}

/// Builds the full ground structure on a `g × g` grid.
///
/// Node `col * g + row` sits at `(col, row)`; column 0 is clamped.
pub fn gen_ground(g: usize, variant: Variant) -> Result<GroundStructure> {
    if g < 2 {
        return Err(Error::Config(format!("grid size {g} must be at least 2")));
    }
    let num_nodes = g * g;
    let nodes: Vec<[f64; 2]> = (0..num_nodes).map(|k| [(k / g) as f64, (k % g) as f64]).collect();
    let fixed_nodes: Vec<usize> = (0..g).collect();
    let mut node_dofs = vec![[None, None]; num_nodes];
    let mut next = 0;
    for (k, d) in node_dofs.iter_mut().enumerate().skip(g) {
        debug_assert!(k >= g);
        *d = [Some(next), Some(next + 1)];
        next += 2;
    }
    let num_dofs = next;

    let mut bars = Vec::with_capacity(num_nodes * (num_nodes - 1) / 2);
    for a in 0..num_nodes {
        for b in a + 1..num_nodes {
            let (dx, dy) = (nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1]);
            let length = dx.hypot(dy);
            let (cx, cy) = (dx / length, dy / length);
            bars.push(Bar {
                nodes: [a, b],
                length,
                cosines: [-cx, -cy, cx, cy],
                dofs: [node_dofs[a][0], node_dofs[a][1], node_dofs[b][0], node_dofs[b][1]],
            });
        }
    }

    let load_node = (g - 1) * g + (g - 1) / 2;
    let mut load = vec![0.0; num_dofs];
    let [lx, ly] = node_dofs[load_node];
    match variant {
        Variant::Tru => load[ly.expect("load node is free")] = -1.0,
        Variant::Vib => load[lx.expect("load node is free")] = 1.0,
    }
    let gs = GroundStructure { grid: g, variant, nodes, fixed_nodes, node_dofs, bars, load_node, load, youngs_modulus: 1.0 };

    let k1 = stiffness_matrix(&gs, &vec![1.0; gs.num_bars()]);
    if chol(&k1).is_err() {
        return Err(Error::InvalidProblem("K(1) is not positive definite".into()));
    }
    Ok(gs)
}

/// `K_i = (E/ℓ²) γγᵀ` on the free DOFs (at most 16 stored entries in full form).
pub fn bar_stiffness(bar: &Bar, num_dofs: usize, youngs_modulus: f64) -> Result<SparseSym> {
    if !(bar.length > 0.0) {
        return Err(Error::InvalidProblem(format!("bar {:?} has zero length", bar.nodes)));
    }
    let scale = youngs_modulus / (bar.length * bar.length);
    let mut trip = Vec::with_capacity(10);
    for p in 0..4 {
        for q in 0..=p {
            if let (Some(r), Some(c)) = (bar.dofs[p], bar.dofs[q]) {
                let v = scale * bar.cosines[p] * bar.cosines[q];
                if v != 0.0 {
                    trip.push((r.max(c), r.min(c), v));
                }
            }
        }
    }
    SparseSym::new(num_dofs, trip)
}

/// Lumped mass `M_i`: `ρℓ/2` on each free DOF of both end nodes.
pub fn bar_mass(bar: &Bar, num_dofs: usize, density: f64) -> Result<SparseSym> {
    let v = density * bar.length / 2.0;
    SparseSym::new(num_dofs, bar.dofs.iter().flatten().map(|&d| (d, d, v)))
}

/// `K(t)` as a dense matrix.
pub fn stiffness_matrix(gs: &GroundStructure, t: &[f64]) -> DenseSym {
    let n = gs.num_dofs();
    let mut k = Mat::zeros(n, n);
    for (bar, &ti) in gs.bars.iter().zip(t) {
        let scale = ti * gs.youngs_modulus / (bar.length * bar.length);
        for p in 0..4 {
            for q in 0..4 {
                if let (Some(r), Some(c)) = (bar.dofs[p], bar.dofs[q]) {
                    k[(r, c)] += scale * bar.cosines[p] * bar.cosines[q];
                }
            }
        }
    }
    DenseSym::new(k)
}

/// Diagonal of `M(t) + M₀`.
pub fn mass_diagonal(gs: &GroundStructure, spec: &TrussSdpSpec, t: &[f64]) -> Vector {
    let mut m = Vector::zeros(gs.num_dofs());
    for (bar, &ti) in gs.bars.iter().zip(t) {
        for d in bar.dofs.iter().flatten() {
            m[*d] += ti * spec.density * bar.length / 2.0;
        }
    }
    for d in gs.node_dofs[gs.load_node].iter().flatten() {
        m[*d] += spec.nonstructural_mass;
    }
    m
}

/// Smallest eigenvalue of the pencil `(K(t), M(t) + M₀)`.
pub fn pencil_min_eig(gs: &GroundStructure, spec: &TrussSdpSpec, t: &[f64]) -> Result<f64> {
    let m = mass_diagonal(gs, spec, t);
    if let Some(i) = m.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroDivisor { row: i, col: i });
    }
    let s = m.map(|v| 1.0 / v.sqrt());
    let k = stiffness_matrix(gs, t);
    let scaled = Mat::from_fn(s.len(), s.len(), |r, c| s[r] * k[(r, c)] * s[c]);
    Ok(sym_eigvals(&DenseSym::new(scaled))?[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrussSdpSpec {
    /// Compliance bound `γ`.
    pub compliance_bound: f64,
    pub t_lower: f64,
    pub t_upper: f64,
    pub vibration: bool,
    /// `λ̄`; `None` picks `0.01 · λ_min(K(1), M(1) + M₀)`.
    pub lambda_bar: Option<f64>,
    pub density: f64,
    pub nonstructural_mass: f64,
}

impl TrussSdpSpec {
    /// Lower bound used by the `e` instances.
    pub const EPS_LOWER: f64 = 1e-4;

    pub fn for_variant(variant: Variant, t_lower: f64) -> Self {
        TrussSdpSpec {
            compliance_bound: 1.0,
            t_lower,
            t_upper: 1e4,
            vibration: variant == Variant::Vib,
            lambda_bar: None,
            density: 1.0,
            nonstructural_mass: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.compliance_bound > 0.0) {
            return Err(Error::Config(format!("compliance bound {} must be positive", self.compliance_bound)));
        }
        if !(self.t_lower >= 0.0 && self.t_upper > self.t_lower) {
            return Err(Error::Config(format!("bounds need 0 ≤ t_lower < t_upper, got {} and {}", self.t_lower, self.t_upper)));
        }
        if let Some(l) = self.lambda_bar {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("lambda_bar {l} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// `λ̄`, resolving the default.
    pub fn resolved_lambda_bar(&self, gs: &GroundStructure) -> Result<f64> {
        match self.lambda_bar {
            Some(l) => Ok(l),
            None => Ok(0.01 * pencil_min_eig(gs, self, &vec![1.0; gs.num_bars()])?),
        }
    }
}

/// Shift a `dof × dof` sparse matrix into the lower-right of a `(dof+1)` block.
fn bordered(a: &SparseSym) -> Result<SparseSym> {
    SparseSym::new(a.dim() + 1, a.entries().iter().map(|&(r, c, v)| (r + 1, c + 1, v)))
}

/// `[[γ, −fᵀ], [−f, 0]]`.
fn compliance_objective(gs: &GroundStructure, gamma: f64) -> Result<SparseSym> {
    let mut trip = vec![(0, 0, gamma)];
    trip.extend(gs.load.iter().enumerate().filter(|(_, &f)| f != 0.0).map(|(i, &f)| (i + 1, 0, -f)));
    SparseSym::new(gs.num_dofs() + 1, trip)
}

/// `D = [I; −I]`, `d = [−t̲·1; t̄·1]`.
fn box_constraints(n: usize, spec: &TrussSdpSpec) -> Result<(LinMatrix, Vector)> {
    let lin = LinMatrix::new(2 * n, n, (0..n).flat_map(|j| [(j, j, 1.0), (n + j, j, -1.0)]))?;
    let rhs = Vector::from_iterator(2 * n, (0..2 * n).map(|k| if k < n { -spec.t_lower } else { spec.t_upper }));
    Ok((lin, rhs))
}

/// Compliance-constrained minimum volume problem.
pub fn assemble_tru_sdp(gs: &GroundStructure, spec: &TrussSdpSpec) -> Result<SdpProblem> {
    spec.validate()?;
    let nd = gs.num_dofs();
    let cons = gs
        .bars
        .iter()
        .map(|bar| bordered(&bar_stiffness(bar, nd, gs.youngs_modulus)?))
        .collect::<Result<Vec<_>>>()?;
    let (lin, rhs) = box_constraints(gs.num_bars(), spec)?;
    SdpProblem::new(
        vec![cons],
        vec![compliance_objective(gs, spec.compliance_bound)?],
        Vector::from_element(gs.num_bars(), 1.0),
        lin,
        rhs,
    )
}

/// Adds the block `K(t) − λ̄(M(t) + M₀) ⪰ 0` to the compliance problem.
pub fn assemble_vib_sdp(gs: &GroundStructure, spec: &TrussSdpSpec) -> Result<SdpProblem> {
    spec.validate()?;
    if !spec.vibration {
        return Err(Error::Config("vibration is off in the truss spec".into()));
    }
    let nd = gs.num_dofs();
    let lambda = spec.resolved_lambda_bar(gs)?;
    let mut compliance = Vec::with_capacity(gs.num_bars());
    let mut vib = Vec::with_capacity(gs.num_bars());
    for bar in &gs.bars {
        let k = bar_stiffness(bar, nd, gs.youngs_modulus)?;
        compliance.push(bordered(&k)?);
        let mut dense = k.to_dense().into_mat();
        for (d, _, v) in bar_mass(bar, nd, spec.density)?.entries() {
            dense[(*d, *d)] -= lambda * v;
        }
        let trip = (0..nd).flat_map(|r| (0..=r).map(move |c| (r, c))).filter_map(|(r, c)| {
            let v = dense[(r, c)];
            (v != 0.0).then_some((r, c, v))
        });
        vib.push(SparseSym::new(nd, trip.collect::<Vec<_>>())?);
    }
    let m0 = gs.node_dofs[gs.load_node]
        .iter()
        .flatten()
        .map(|&d| (d, d, -lambda * spec.nonstructural_mass))
        .filter(|t| t.2 != 0.0)
        .collect::<Vec<_>>();
    let (lin, rhs) = box_constraints(gs.num_bars(), spec)?;
    SdpProblem::new(
        vec![compliance, vib],
        vec![compliance_objective(gs, spec.compliance_bound)?, SparseSym::new(nd, m0)?],
        Vector::from_element(gs.num_bars(), 1.0),
        lin,
        rhs,
    )
}

/// Dispatches on `spec.vibration`.
pub fn assemble(gs: &GroundStructure, spec: &TrussSdpSpec) -> Result<SdpProblem> {
    if spec.vibration {
        assemble_vib_sdp(gs, spec)
    } else {
        assemble_tru_sdp(gs, spec)
    }
}

/// Bar volumes from a dual-view solution.
pub fn volumes_from_y(y: &Vector) -> Vec<f64> {
    y.iter().map(|v| -v).collect()
}

/// Mechanical check of a design `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrussVerification {
    pub volume: f64,
    /// `fᵀu` with `K(t)u = f`; `None` if `K(t)` is singular.
    pub compliance: Option<f64>,
    pub compliance_bound: f64,
    pub stiffness_singular: bool,
    /// `λ_min(K(t), M(t) + M₀)` for vibration instances.
    pub pencil_min_eig: Option<f64>,
    pub lambda_bar: Option<f64>,
    /// Largest bound violation `max(t̲ − t, t − t̄, 0)`.
    pub bound_violation: f64,
    /// Free nodes whose incident bars all have `t ≤ 1e-6 · max t`.
    pub vanished_nodes: usize,
    /// Eigenvalues of the multiplier `X` of the compliance block, descending.
    pub dual_spectrum: Option<Vec<f64>>,
    /// Eigenvalues above 100× the median of `dual_spectrum`.
    pub outliers: Option<usize>,
}

impl TrussVerification {
    /// Compliance within `γ(1 + rel)`.
    pub fn compliance_ok(&self, rel: f64) -> bool {
        self.compliance.is_some_and(|c| c <= self.compliance_bound * (1.0 + rel))
    }
}

pub fn verify_solution(
    gs: &GroundStructure,
    spec: &TrussSdpSpec,
    t: &[f64],
    dual_x: Option<&DenseSym>,
) -> Result<TrussVerification> {
    if t.len() != gs.num_bars() {
        return Err(Error::InvalidProblem(format!("{} volumes for {} bars", t.len(), gs.num_bars())));
    }
    let k = stiffness_matrix(gs, t);
    let (compliance, singular) = match chol(&k) {
        Ok(f) => {
            let f_vec = Vector::from_column_slice(&gs.load);
            let u = f.solve_vec(&f_vec);
            (Some(f_vec.dot(&u)), false)
        }
        Err(_) => (None, true),
    };
    let (pencil, lambda_bar) = if spec.vibration {
        (Some(pencil_min_eig(gs, spec, t)?), Some(spec.resolved_lambda_bar(gs)?))
    } else {
        (None, None)
    };
    let bound_violation = t
        .iter()
        .map(|&ti| (spec.t_lower - ti).max(ti - spec.t_upper))
        .fold(0.0_f64, f64::max);

    let t_max = t.iter().copied().fold(0.0_f64, f64::max);
    let mut alive = vec![false; gs.nodes.len()];
    for (bar, &ti) in gs.bars.iter().zip(t) {
        if ti > 1e-6 * t_max {
            alive[bar.nodes[0]] = true;
            alive[bar.nodes[1]] = true;
        }
    }
    let vanished_nodes = (0..gs.nodes.len()).filter(|&k| gs.node_dofs[k][0].is_some() && !alive[k]).count();

    let (dual_spectrum, outliers) = match dual_x {
        Some(x) => {
            let asc: Vec<f64> = sym_eigvals(x)?.iter().copied().collect();
            let outliers = detect_rank(&asc);
            (Some(asc.into_iter().rev().collect()), Some(outliers))
        }
        None => (None, None),
    };

    Ok(TrussVerification {
        volume: t.iter().sum(),
        compliance,
        compliance_bound: spec.compliance_bound,
        stiffness_singular: singular,
        pencil_min_eig: pencil,
        lambda_bar,
        bound_violation,
        vanished_nodes,
        dual_spectrum,
        outliers,
    })
}

/// Geometry and parameters written next to a generated instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrussSidecar {
    pub ground: GroundStructure,
    pub spec: TrussSdpSpec,
}

impl TrussSidecar {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Conventional instance name, e.g. `tru3`, `vib5e`.
pub fn instance_name(variant: Variant, g: usize, eps_variant: bool) -> String {
    format!("{}{g}{}", variant.name(), if eps_variant { "e" } else { "" })
}

/// Generates the named instance family member with default parameters.
pub fn standard_instance(variant: Variant, g: usize, eps_variant: bool) -> Result<(GroundStructure, TrussSdpSpec, SdpProblem)> {
    let gs = gen_ground(g, variant)?;
    let t_lower = if eps_variant { TrussSdpSpec::EPS_LOWER } else { 0.0 };
    let spec = TrussSdpSpec::for_variant(variant, t_lower);
    let prob = assemble(&gs, &spec)?;
    Ok((gs, spec, prob))
}
