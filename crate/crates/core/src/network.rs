//! Two-pole equivalent network and its loop-current state-space model.
//!
//! Every branch carries series R, L (with pole-to-pole mutual coupling on
//! line segments), an optional capacitor and an optional EMF. The state is
//! the vector of fundamental-loop currents followed by capacitor voltages.
//! The spanning tree is grown on the pre-fault graph, so the fault branch is
//! always the last chord: the post-fault state is the pre-fault state with a
//! zero fault-loop current inserted.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modal::Pole;
use crate::params::{Bus, FaultKind, FaultScenario, Grid, LineId, LineTotals};

/// What a branch represents in the equivalent circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BranchRole {
    /// Pole half of a converter: R_MMC/2, L_MMC/2 and 2 C_MMC (or EMF).
    Converter(Bus),
    /// Remote DC-link equivalent at the far end of line 14 or 23.
    Terminal(Bus),
    /// Current limiting reactor at the `bus` end of `line`.
    Reactor(Bus, LineId),
    /// Lumped R-L line segment.
    LineSegment(LineId),
    Fault,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub name: String,
    pub role: BranchRole,
    pub pole: Option<Pole>,
    /// Node the positive current leaves (`None` = ground).
    pub from: Option<usize>,
    /// Node the positive current enters.
    pub to: Option<usize>,
    pub resistance: f64,
    pub inductance: f64,
    pub capacitance: Option<f64>,
    /// Capacitor voltage drop (from minus to) at t = 0.
    pub initial_voltage: f64,
    /// Series EMF driving current from `from` to `to`.
    pub emf: f64,
    /// EMF added per unit of the ramp signal.
    pub ramp_emf: f64,
}

/// A slow converter voltage change used to test trigger immunity.
#[derive(Clone, Debug, PartialEq)]
pub struct VoltageRamp {
    /// Final change as a fraction of V_dc (e.g. 0.1 or -0.1).
    pub fraction: f64,
    pub start: f64,
    pub duration: f64,
    pub converters: Vec<Bus>,
}

impl VoltageRamp {
    /// Ramp signal in [0, fraction].
    pub fn value(&self, t: f64) -> f64 {
        if self.duration <= 0.0 {
            return if t >= self.start { self.fraction } else { 0.0 };
        }
        ((t - self.start) / self.duration).clamp(0.0, 1.0) * self.fraction
    }
}

/// Simulator options.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimOptions {
    /// Replace every capacitor by an ideal source at its initial voltage.
    pub stiff_sources: bool,
    pub ramp: Option<VoltageRamp>,
}

/// Graph description of the equivalent network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub nodes: Vec<String>,
    pub branches: Vec<Branch>,
    /// (branch a, branch b, mutual inductance).
    pub couplings: Vec<(usize, usize, f64)>,
    /// Index of the fault branch, always the last branch when present.
    pub fault_branch: Option<usize>,
}

/// Element counts per pole of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ElementInventory {
    pub converters: usize,
    pub terminal_equivalents: usize,
    pub reactors: usize,
    pub line_segments: usize,
    pub fault_branches: usize,
}

impl Network {
    pub fn node(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn branch(&self, name: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.name == name)
    }

    /// Counts of positive-pole elements (the fault branch counted once).
    pub fn inventory(&self) -> ElementInventory {
        let count = |pred: &dyn Fn(&BranchRole) -> bool| {
            self.branches
                .iter()
                .filter(|b| b.pole == Some(Pole::Positive) && pred(&b.role))
                .count()
        };
        ElementInventory {
            converters: count(&|r| matches!(r, BranchRole::Converter(_))),
            terminal_equivalents: count(&|r| matches!(r, BranchRole::Terminal(_))),
            reactors: count(&|r| matches!(r, BranchRole::Reactor(..))),
            line_segments: count(&|r| matches!(r, BranchRole::LineSegment(_))),
            fault_branches: self.fault_branch.iter().count(),
        }
    }
}

struct Builder {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    branches: Vec<Branch>,
    couplings: Vec<(usize, usize, f64)>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            nodes: Vec::new(),
            index: HashMap::new(),
            branches: Vec::new(),
            couplings: Vec::new(),
        }
    }

    fn node(&mut self, name: &str) -> Option<usize> {
        if name == "ground" {
            return None;
        }
        if let Some(&i) = self.index.get(name) {
            return Some(i);
        }
        self.nodes.push(name.to_string());
        self.index.insert(name.to_string(), self.nodes.len() - 1);
        Some(self.nodes.len() - 1)
    }

    #[allow(clippy::too_many_arguments)]
    fn add(
        &mut self,
        name: String,
        role: BranchRole,
        pole: Option<Pole>,
        from: &str,
        to: &str,
        resistance: f64,
        inductance: f64,
    ) -> usize {
        let from = self.node(from);
        let to = self.node(to);
        self.branches.push(Branch {
            name,
            role,
            pole,
            from,
            to,
            resistance,
            inductance,
            capacitance: None,
            initial_voltage: 0.0,
            emf: 0.0,
            ramp_emf: 0.0,
        });
        self.branches.len() - 1
    }
}

fn pole_tag(p: Pole) -> &'static str {
    match p {
        Pole::Positive => "p",
        Pole::Negative => "n",
    }
}

fn pole_sign(p: Pole) -> f64 {
    match p {
        Pole::Positive => 1.0,
        Pole::Negative => -1.0,
    }
}

/// Assembles the two-pole network for `fault` (line 12 is always split at
/// the fault location, 0.5 for external faults).
pub fn build_graph(grid: &Grid, fault: &FaultScenario, options: &SimOptions) -> Result<Network> {
    fault.validate()?;
    let half_v = grid.v_dc / 2.0;
    let d = fault.location_d.unwrap_or(0.5);
    let mut b = Builder::new();
    let poles = [Pole::Positive, Pole::Negative];
    let ramp_buses: Vec<Bus> = options
        .ramp
        .as_ref()
        .map(|r| r.converters.clone())
        .unwrap_or_default();

    for &pole in &poles {
        let x = pole_tag(pole);
        let sg = pole_sign(pole);
        for bus in [Bus::B1, Bus::B2] {
            let n = bus.number();
            let j = b.add(
                format!("mmc{n}_{x}"),
                BranchRole::Converter(bus),
                Some(pole),
                "ground",
                &format!("B{n}{x}"),
                grid.mmc.r_mmc / 2.0,
                grid.mmc.l_mmc / 2.0,
            );
            let br = &mut b.branches[j];
            if options.stiff_sources {
                br.emf = sg * half_v;
            } else {
                br.capacitance = Some(2.0 * grid.mmc.c_mmc);
                br.initial_voltage = -sg * half_v;
            }
            if ramp_buses.contains(&bus) {
                br.ramp_emf = sg * half_v;
            }
        }
        for (bus, c) in [(Bus::B4, grid.c_14), (Bus::B3, grid.c_23)] {
            let n = bus.number();
            let j = b.add(
                format!("term{n}_{x}"),
                BranchRole::Terminal(bus),
                Some(pole),
                "ground",
                &format!("T{n}{x}"),
                0.0,
                0.0,
            );
            let br = &mut b.branches[j];
            if options.stiff_sources {
                br.emf = sg * half_v;
            } else {
                br.capacitance = Some(2.0 * c);
                br.initial_voltage = -sg * half_v;
            }
        }
        let reactors = [
            (Bus::B1, LineId::L12, "B1", "C12", grid.clr.clr12, "clr12"),
            (Bus::B2, LineId::L12, "B2", "C21", grid.clr.clr21, "clr21"),
            (Bus::B1, LineId::L14, "B1", "C14", grid.clr.clr14, "clr14"),
            (Bus::B2, LineId::L23, "B2", "C23", grid.clr.clr23, "clr23"),
        ];
        for (bus, line, from, to, l, name) in reactors {
            b.add(
                format!("{name}_{x}"),
                BranchRole::Reactor(bus, line),
                Some(pole),
                &format!("{from}{x}"),
                &format!("{to}{x}"),
                0.0,
                l,
            );
        }
    }

    let segment = |b: &mut Builder, name: &str, line: LineId, from: &str, to: &str, t: LineTotals| {
        let jp = b.add(
            format!("{name}_p"),
            BranchRole::LineSegment(line),
            Some(Pole::Positive),
            &format!("{from}p"),
            &format!("{to}p"),
            t.resistance,
            t.inductance,
        );
        let jn = b.add(
            format!("{name}_n"),
            BranchRole::LineSegment(line),
            Some(Pole::Negative),
            &format!("{from}n"),
            &format!("{to}n"),
            t.resistance,
            t.inductance,
        );
        if t.mutual != 0.0 {
            b.couplings.push((jp, jn, t.mutual));
        }
    };
    segment(&mut b, "line12a", LineId::L12, "C12", "F", grid.line12.portion(d));
    segment(&mut b, "line12b", LineId::L12, "F", "C21", grid.line12.portion(1.0 - d));
    segment(&mut b, "line14", LineId::L14, "C14", "T4", grid.line14);
    segment(&mut b, "line23", LineId::L23, "C23", "T3", grid.line23);

    let fault_branch = match fault.kind {
        FaultKind::None => None,
        kind => {
            let site = match kind {
                k if k.is_internal() => "F",
                FaultKind::ExternalForwardPtg | FaultKind::ExternalForwardPtp => "B2",
                _ => "B1",
            };
            let (from, to) = match kind {
                k if k.is_pole_to_pole() => (format!("{site}p"), format!("{site}n")),
                FaultKind::InternalNPtg => (format!("{site}n"), "ground".to_string()),
                _ => (format!("{site}p"), "ground".to_string()),
            };
            let j = b.add(
                "fault".to_string(),
                BranchRole::Fault,
                None,
                &from,
                &to,
                fault.r_f,
                0.0,
            );
            Some(j)
        }
    };

    Ok(Network {
        nodes: b.nodes,
        branches: b.branches,
        couplings: b.couplings,
        fault_branch,
    })
}

/// Continuous-time model `x' = A x + B e` of one switching configuration.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    /// Number of branches included (the fault branch is excluded before
    /// inception).
    pub n_branches: usize,
    pub n_loops: usize,
    /// Branch-by-loop matrix: branch currents `i = N z`.
    pub loops: DMatrix<f64>,
    /// Branch indices holding capacitors, in state order.
    pub capacitors: Vec<usize>,
    pub a: DMatrix<f64>,
    /// Input matrix from the branch EMF vector.
    pub b: DMatrix<f64>,
    pub inductance: DMatrix<f64>,
    pub resistance: DVector<f64>,
    pub capacitance: DVector<f64>,
    /// Tree path vectors: node potential = path . branch drops.
    pub node_paths: Vec<DVector<f64>>,
}

impl LinearSystem {
    pub fn n_states(&self) -> usize {
        self.n_loops + self.capacitors.len()
    }

    /// Branch currents of state `x`.
    pub fn branch_currents(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.loops * x.rows(0, self.n_loops)
    }

    /// Stored magnetic plus electric energy.
    pub fn stored_energy(&self, x: &DVector<f64>) -> f64 {
        let i = self.branch_currents(x);
        let magnetic = 0.5 * i.dot(&(&self.inductance * &i));
        let v = x.rows(self.n_loops, self.capacitors.len());
        let electric = 0.5 * v.iter().zip(self.capacitance.iter()).map(|(v, c)| c * v * v).sum::<f64>();
        magnetic + electric
    }

    /// Largest real part of the eigenvalues of A.
    pub fn spectral_abscissa(&self) -> f64 {
        self.a
            .clone()
            .complex_eigenvalues()
            .iter()
            .fold(f64::NEG_INFINITY, |m, l| m.max(l.re))
    }

    /// Affine output row `(c, g)`: the potential of `node` is `c.x + g.e`.
    pub fn node_potential_row(&self, node: usize) -> (DVector<f64>, DVector<f64>) {
        let nb = self.n_branches;
        let nz = self.n_loops;
        let nx = self.n_states();
        let path = &self.node_paths[node];
        // Branch drops d = R N z + L N z' + S^T v_c - e, with z' = A_z x + B_z e.
        let a_z = self.a.rows(0, nz);
        let b_z = self.b.rows(0, nz);
        let ln = &self.inductance * &self.loops;
        let mut c = (path.transpose() * &ln * a_z).transpose();
        let rn_row = path.component_mul(&self.resistance).transpose() * &self.loops;
        for k in 0..nz {
            c[k] += rn_row[k];
        }
        for (k, &j) in self.capacitors.iter().enumerate() {
            c[nz + k] += path[j];
        }
        let mut g = (path.transpose() * &ln * b_z).transpose();
        for j in 0..nb {
            g[j] -= path[j];
        }
        debug_assert_eq!(c.len(), nx);
        (c, g)
    }

    /// Affine output row of `L_b di_b/dt` for a branch without coupling.
    pub fn reactor_voltage_row(&self, branch: usize) -> (DVector<f64>, DVector<f64>) {
        let nz = self.n_loops;
        let l = self.inductance[(branch, branch)];
        let n_row = self.loops.row(branch);
        let c = (n_row * self.a.rows(0, nz)).transpose() * l;
        let g = (n_row * self.b.rows(0, nz)).transpose() * l;
        (c, g)
    }

    /// Output row of a branch current (no input feedthrough).
    pub fn current_row(&self, branch: usize) -> DVector<f64> {
        let mut c = DVector::zeros(self.n_states());
        for k in 0..self.n_loops {
            c[k] = self.loops[(branch, k)];
        }
        c
    }
}

/// Fundamental loops of the graph restricted to the first `nb` branches,
/// with a spanning tree grown from ground over the first `tree_nb` branches.
fn loop_basis(net: &Network, nb: usize, tree_nb: usize) -> Result<(DMatrix<f64>, Vec<DVector<f64>>)> {
    let nn = net.nodes.len();
    let ground = nn;
    let id = |n: Option<usize>| n.unwrap_or(ground);
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nn + 1];
    for (j, br) in net.branches.iter().enumerate().take(tree_nb) {
        let (a, b) = (id(br.from), id(br.to));
        adj[a].push((j, b));
        adj[b].push((j, a));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; nn + 1];
    let mut seen = vec![false; nn + 1];
    let mut in_tree = vec![false; net.branches.len()];
    seen[ground] = true;
    let mut queue = VecDeque::from([ground]);
    while let Some(u) = queue.pop_front() {
        for &(j, v) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent[v] = Some((j, u));
                in_tree[j] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::Build(format!(
            "node `{}` is not connected to ground",
            net.nodes[k]
        )));
    }
    // Unit flow from node to ground through the tree.
    let path_to_ground = |node: usize| -> DVector<f64> {
        let mut v = DVector::zeros(nb);
        let mut y = node;
        while let Some((j, p)) = parent[y] {
            let br = &net.branches[j];
            v[j] += if id(br.from) == y { 1.0 } else { -1.0 };
            y = p;
        }
        v
    };
    let node_paths: Vec<DVector<f64>> = (0..nn).map(path_to_ground).collect();
    let chords: Vec<usize> = (0..nb).filter(|&j| !in_tree[j]).collect();
    let mut loops = DMatrix::zeros(nb, chords.len());
    for (k, &j) in chords.iter().enumerate() {
        let br = &net.branches[j];
        let mut col = DVector::zeros(nb);
        col[j] = 1.0;
        if let Some(b) = br.to {
            col += &node_paths[b];
        }
        if let Some(a) = br.from {
            col -= &node_paths[a];
        }
        loops.set_column(k, &col);
    }
    Ok((loops, node_paths))
}

fn linear_system(net: &Network, nb: usize) -> Result<LinearSystem> {
    let tree_nb = net.fault_branch.unwrap_or(net.branches.len()).min(nb);
    let (loops, node_paths) = loop_basis(net, nb, tree_nb)?;
    let nz = loops.ncols();
    let mut inductance = DMatrix::zeros(nb, nb);
    let mut resistance = DVector::zeros(nb);
    for (j, br) in net.branches.iter().enumerate().take(nb) {
        inductance[(j, j)] = br.inductance;
        resistance[j] = br.resistance;
    }
    for &(a, b, m) in &net.couplings {
        if a < nb && b < nb {
            if m >= inductance[(a, a)].min(inductance[(b, b)]) {
                return Err(Error::Build(format!(
                    "mutual inductance between `{}` and `{}` is not below the self inductance",
                    net.branches[a].name, net.branches[b].name
                )));
            }
            inductance[(a, b)] = m;
            inductance[(b, a)] = m;
        }
    }
    let capacitors: Vec<usize> = (0..nb)
        .filter(|&j| net.branches[j].capacitance.is_some())
        .collect();
    let nc = capacitors.len();
    let capacitance = DVector::from_iterator(
        nc,
        capacitors.iter().map(|&j| net.branches[j].capacitance.unwrap_or(0.0)),
    );
    let mut sel = DMatrix::zeros(nc, nb);
    for (k, &j) in capacitors.iter().enumerate() {
        sel[(k, j)] = 1.0;
    }
    let m = loops.transpose() * &inductance * &loops;
    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Build("loop inductance matrix is not positive definite (a loop without inductance?)".into())
    })?;
    let nt = loops.transpose();
    let r_diag = DMatrix::from_diagonal(&resistance);
    let a_zz = -chol.solve(&(&nt * &r_diag * &loops));
    let a_zc = -chol.solve(&(&nt * sel.transpose()));
    let b_z = chol.solve(&nt);
    let nx = nz + nc;
    let mut a = DMatrix::zeros(nx, nx);
    a.view_mut((0, 0), (nz, nz)).copy_from(&a_zz);
    a.view_mut((0, nz), (nz, nc)).copy_from(&a_zc);
    let sn = &sel * &loops;
    for k in 0..nc {
        for l in 0..nz {
            a[(nz + k, l)] = sn[(k, l)] / capacitance[k];
        }
    }
    let mut b = DMatrix::zeros(nx, nb);
    b.view_mut((0, 0), (nz, nb)).copy_from(&b_z);
    Ok(LinearSystem {
        n_branches: nb,
        n_loops: nz,
        loops,
        capacitors,
        a,
        b,
        inductance,
        resistance,
        capacitance,
        node_paths,
    })
}

/// Pre- and post-fault state-space models of one scenario.
#[derive(Clone, Debug)]
pub struct StateSpaceModel {
    pub network: Network,
    pub fault: FaultKind,
    pub pre: LinearSystem,
    pub post: Option<LinearSystem>,
    pub t_fault: f64,
    pub ramp: Option<VoltageRamp>,
    /// Constant branch EMFs (full branch set).
    pub emf: DVector<f64>,
    /// Branch EMFs per unit of the ramp signal.
    pub ramp_emf: DVector<f64>,
    /// Initial state of the pre-fault system.
    pub initial_state: DVector<f64>,
}

impl StateSpaceModel {
    /// Maps a pre-fault state to the post-fault layout (zero fault-loop
    /// current inserted after the pre-fault loops).
    pub fn map_to_post(&self, x: &DVector<f64>) -> DVector<f64> {
        let nz = self.pre.n_loops;
        x.clone().insert_row(nz, 0.0)
    }

    /// Branch EMF vector at time `t` for a system with `nb` branches.
    pub fn emf_at(&self, t: f64, nb: usize) -> DVector<f64> {
        let r = self.ramp.as_ref().map_or(0.0, |r| r.value(t));
        let mut e = self.emf.rows(0, nb).into_owned();
        if r != 0.0 {
            e += self.ramp_emf.rows(0, nb) * r;
        }
        e
    }
}

/// Builds the state-space models of `fault` on `grid`.
pub fn build_network(grid: &Grid, fault: &FaultScenario, options: &SimOptions) -> Result<StateSpaceModel> {
    let network = build_graph(grid, fault, options)?;
    let nb_all = network.branches.len();
    let nb_pre = network.fault_branch.unwrap_or(nb_all);
    let pre = linear_system(&network, nb_pre)?;
    let post = match network.fault_branch {
        Some(_) => Some(linear_system(&network, nb_all)?),
        None => None,
    };
    let emf = DVector::from_iterator(nb_all, network.branches.iter().map(|b| b.emf));
    let ramp_emf = DVector::from_iterator(nb_all, network.branches.iter().map(|b| b.ramp_emf));
    let mut initial_state = DVector::zeros(pre.n_states());
    for (k, &j) in pre.capacitors.iter().enumerate() {
        initial_state[pre.n_loops + k] = network.branches[j].initial_voltage;
    }
    Ok(StateSpaceModel {
        network,
        fault: fault.kind,
        pre,
        post,
        t_fault: fault.t_fault,
        ramp: options.ramp.clone(),
        emf,
        ramp_emf,
        initial_state,
    })
}
