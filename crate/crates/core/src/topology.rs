//! Circuit topologies of the reconfigurable impedance network.
//!
//! A [`Topology`] records which ports carry a ground admittance (always all of
//! them) and which port pairs carry an inter-port admittance. From component
//! values it assembles the admittance matrix; it also exposes structure masks,
//! constraint checks on scattering matrices, permuted-diagonal (non-reciprocal)
//! scattering matrices and the block views used by hybrid and multi-sector
//! arrangements.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::NetworkMatrix;
use crate::scalar::{abs, abs2, cis, fro, identity, real_part, within, zeros, CMatrix, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Single,
    Fully,
    Group,
    TreeTridiagonal,
    TreeArrowhead,
    Forest,
    Band,
    Stem,
    Dynamic,
}

impl Family {
    pub const ALL: [Family; 9] = [
        Family::Single,
        Family::Fully,
        Family::Group,
        Family::TreeTridiagonal,
        Family::TreeArrowhead,
        Family::Forest,
        Family::Band,
        Family::Stem,
        Family::Dynamic,
    ];

    /// Scattering-level constraint family realized by lossless, reciprocal
    /// components on this topology.
    pub fn scattering_family(self) -> ScatteringFamily {
        match self {
            Family::Single => ScatteringFamily::Diagonal,
            Family::Group | Family::Forest => ScatteringFamily::BlockSymmetricUnitary,
            _ => ScatteringFamily::SymmetricUnitary,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem_width: Option<usize>,
    /// Switch states of a dynamic topology, one per port pair in
    /// lexicographic order. Absent means every switch is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_mask: Option<Vec<bool>>,
    /// Logical-to-physical port map applied before masking, e.g. to build
    /// interlaced groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
}

impl TopologyParams {
    pub fn group(size: usize) -> Self {
        Self { group_size: Some(size), ..Self::default() }
    }

    pub fn band(q: usize) -> Self {
        Self { band_width: Some(q), ..Self::default() }
    }

    pub fn stem(q: usize) -> Self {
        Self { stem_width: Some(q), ..Self::default() }
    }
}

pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    family: Family,
    m: usize,
    params: TopologyParams,
    edges: Vec<Edge>,
    switches: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub admittances: usize,
    pub switches: usize,
}

fn check_width(name: &str, q: Option<usize>, m: usize) -> Result<usize> {
    let q = q.ok_or_else(|| Error::InvalidParams(format!("{name} is required")))?;
    if q < 1 || q + 1 > m {
        return Err(Error::InvalidParams(format!("{name} {q} outside 1..={}", m.saturating_sub(1))));
    }
    Ok(q)
}

fn check_group(g: Option<usize>, m: usize) -> Result<usize> {
    let g = g.ok_or_else(|| Error::InvalidParams("group_size is required".into()))?;
    if g == 0 || m % g != 0 {
        return Err(Error::InvalidParams(format!("group size {g} does not divide {m}")));
    }
    Ok(g)
}

pub(crate) fn check_permutation(p: &[usize], m: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::InvalidPermutation(format!("length {} != {m}", p.len())));
    }
    let mut seen = vec![false; m];
    for &k in p {
        if k >= m || seen[k] {
            return Err(Error::InvalidPermutation(format!("{p:?} is not a permutation of 0..{m}")));
        }
        seen[k] = true;
    }
    Ok(())
}

/// All pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn all_pairs(m: usize) -> impl Iterator<Item = Edge> {
    (0..m).flat_map(move |i| (i + 1..m).map(move |j| (i, j)))
}

/// Inter-port edges of a family in logical (unpermuted) port indices.
fn logical_edges(family: Family, m: usize, p: &TopologyParams) -> Result<Vec<Edge>> {
    let pairs = |keep: &dyn Fn(usize, usize) -> bool| all_pairs(m).filter(|&(i, j)| keep(i, j)).collect();
    Ok(match family {
        Family::Single => Vec::new(),
        Family::Fully | Family::Dynamic => pairs(&|_, _| true),
        Family::Group => {
            let g = check_group(p.group_size, m)?;
            pairs(&|i, j| i / g == j / g)
        }
        Family::Forest => {
            let g = check_group(p.group_size, m)?;
            pairs(&|i, j| i / g == j / g && j == i + 1)
        }
        Family::TreeTridiagonal => pairs(&|i, j| j == i + 1),
        Family::TreeArrowhead => pairs(&|i, _| i == 0),
        Family::Band => {
            let q = check_width("band_width", p.band_width, m)?;
            pairs(&|i, j| j - i <= q)
        }
        Family::Stem => {
            let q = check_width("stem_width", p.stem_width, m)?;
            pairs(&|i, _| i < q)
        }
    })
}

/// Builds a topology of the given family on `m` ports.
pub fn build_topology(family: Family, m: usize, params: TopologyParams) -> Result<Topology> {
    if m == 0 {
        return Err(Error::InvalidParams("port count must be at least 1".into()));
    }
    let mut edges = logical_edges(family, m, &params)?;
    if let Some(perm) = &params.permutation {
        check_permutation(perm, m)?;
        for e in edges.iter_mut() {
            let (a, b) = (perm[e.0], perm[e.1]);
            *e = (a.min(b), a.max(b));
        }
        edges.sort_unstable();
    }
    let switches = match (family, &params.switch_mask) {
        (Family::Dynamic, Some(mask)) => {
            if mask.len() != edges.len() {
                return Err(Error::InvalidParams(format!(
                    "switch mask has {} entries, expected {}",
                    mask.len(),
                    edges.len()
                )));
            }
            Some(mask.clone())
        }
        (Family::Dynamic, None) => Some(vec![true; edges.len()]),
        (_, Some(_)) => return Err(Error::InvalidParams("switch_mask applies to dynamic topologies only".into())),
        (_, None) => None,
    };
    Ok(Topology { family, m, params, edges, switches })
}

impl Topology {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn params(&self) -> &TopologyParams {
        &self.params
    }

    /// All inter-port edges, sorted, including switched-off ones.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn switches(&self) -> Option<&[bool]> {
        self.switches.as_deref()
    }

    /// Edges that contribute to the admittance matrix.
    pub fn active_edges(&self) -> Vec<Edge> {
        match &self.switches {
            Some(s) => self.edges.iter().zip(s).filter(|(_, on)| **on).map(|(e, _)| *e).collect(),
            None => self.edges.clone(),
        }
    }

    /// Same topology with a new switch configuration (dynamic family only).
    pub fn with_switches(&self, mask: Vec<bool>) -> Result<Topology> {
        let mut params = self.params.clone();
        params.switch_mask = Some(mask);
        build_topology(self.family, self.m, params)
    }

    /// Admissible nonzero positions of the admittance matrix.
    pub fn mask(&self) -> DMatrix<bool> {
        let mut mask = DMatrix::from_element(self.m, self.m, false);
        for k in 0..self.m {
            mask[(k, k)] = true;
        }
        for (i, j) in self.active_edges() {
            mask[(i, j)] = true;
            mask[(j, i)] = true;
        }
        mask
    }

    /// Number of tunable components, counted from the edge set.
    pub fn complexity(&self) -> Complexity {
        let admittances = self.m + self.edges.len();
        let switches = if self.family == Family::Dynamic { self.edges.len() } else { 0 };
        Complexity { admittances, switches }
    }
}

/// Closed-form component count of each architecture.
pub fn closed_form_complexity(family: Family, m: usize, params: &TopologyParams) -> Result<Complexity> {
    let admittances = match family {
        Family::Single => m,
        Family::Fully => m * (m + 1) / 2,
        Family::Group => m * (check_group(params.group_size, m)? + 1) / 2,
        Family::TreeTridiagonal | Family::TreeArrowhead => 2 * m - 1,
        Family::Forest => {
            let g = check_group(params.group_size, m)?;
            (m / g) * (2 * g - 1)
        }
        Family::Band => {
            let q = check_width("band_width", params.band_width, m)?;
            (2 * m - q) * (q + 1) / 2
        }
        Family::Stem => {
            let q = check_width("stem_width", params.stem_width, m)?;
            (2 * m - q) * (q + 1) / 2
        }
        Family::Dynamic => {
            return Ok(Complexity { admittances: m * (m + 1) / 2, switches: m * (m - 1) / 2 });
        }
    };
    Ok(Complexity { admittances, switches: 0 })
}

/// Ground and inter-port admittances in siemens.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentValues<T: Real> {
    pub ground: Vec<C<T>>,
    /// One value per entry of [`Topology::edges`], in the same order.
    pub inter: Vec<C<T>>,
}

impl<T: Real> ComponentValues<T> {
    /// Lossless components from susceptances.
    pub fn lossless(ground: &[T], inter: &[T]) -> Self {
        Self {
            ground: ground.iter().map(|&b| C::new(T::zero(), b)).collect(),
            inter: inter.iter().map(|&b| C::new(T::zero(), b)).collect(),
        }
    }

    pub fn is_lossless(&self) -> bool {
        self.ground.iter().chain(&self.inter).all(|y| y.re == T::zero())
    }
}

/// Admittance matrix: off-diagonal `-Y_{m,m'}` on active edges, diagonal
/// `Y_m + sum_k Y_{m,k}`.
pub fn assemble_admittance<T: Real>(t: &Topology, c: &ComponentValues<T>, z0: T) -> Result<NetworkMatrix<T>> {
    if c.ground.len() != t.m {
        return Err(Error::MissingComponent(format!(
            "ground admittances: got {} values for {} ports",
            c.ground.len(),
            t.m
        )));
    }
    if c.inter.len() != t.edges.len() {
        return Err(Error::MissingComponent(format!(
            "inter-port admittances: got {} values for {} edges",
            c.inter.len(),
            t.edges.len()
        )));
    }
    let mut y = zeros::<T>(t.m, t.m);
    for (k, g) in c.ground.iter().enumerate() {
        y[(k, k)] = *g;
    }
    let on = |k: usize| t.switches.as_ref().is_none_or(|s| s[k]);
    for (k, (&(i, j), v)) in t.edges.iter().zip(&c.inter).enumerate() {
        if !on(k) {
            continue;
        }
        y[(i, j)] = -*v;
        y[(j, i)] = -*v;
        y[(i, i)] += *v;
        y[(j, j)] += *v;
    }
    NetworkMatrix::admittance(y, z0)
}

/// Reads component values back from an admittance matrix on a topology.
pub fn components_from_admittance<T: Real>(t: &Topology, y: &CMatrix<T>) -> ComponentValues<T> {
    let inter: Vec<C<T>> = t.edges.iter().map(|&(i, j)| -y[(i, j)]).collect();
    let mut ground: Vec<C<T>> = (0..t.m).map(|k| y[(k, k)]).collect();
    for (&(i, j), v) in t.edges.iter().zip(&inter) {
        ground[i] -= *v;
        ground[j] -= *v;
    }
    ComponentValues { ground, inter }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScatteringFamily {
    Diagonal,
    PermutedDiagonal,
    /// Non-reciprocal fully-connected.
    Unitary,
    SymmetricUnitary,
    /// Non-reciprocal group-connected.
    BlockUnitary,
    BlockSymmetricUnitary,
}

impl ScatteringFamily {
    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::Diagonal | Self::SymmetricUnitary | Self::BlockSymmetricUnitary)
    }

    pub fn is_block(self) -> bool {
        matches!(self, Self::BlockUnitary | Self::BlockSymmetricUnitary)
    }
}

/// A scattering matrix tagged with its constraint family.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringSpec<T: Real> {
    pub theta: CMatrix<T>,
    pub family: ScatteringFamily,
    /// Block size for block families; `M` otherwise.
    pub group_size: usize,
    /// `(permR, permT)` for the permuted-diagonal family.
    pub permutations: Option<(Vec<usize>, Vec<usize>)>,
}

impl<T: Real> ScatteringSpec<T> {
    pub fn new(theta: CMatrix<T>, family: ScatteringFamily, group_size: usize) -> Result<Self> {
        if !theta.is_square() {
            return Err(Error::DimensionMismatch(format!("theta is {}x{}", theta.nrows(), theta.ncols())));
        }
        let m = theta.nrows();
        if group_size == 0 || m % group_size != 0 {
            return Err(Error::InvalidParams(format!("group size {group_size} does not divide {m}")));
        }
        Ok(Self { theta, family, group_size, permutations: None })
    }

    pub fn m(&self) -> usize {
        self.theta.nrows()
    }

    /// Positions allowed to be nonzero.
    pub fn mask(&self) -> DMatrix<bool> {
        let m = self.m();
        match self.family {
            ScatteringFamily::Diagonal => DMatrix::from_fn(m, m, |i, j| i == j),
            ScatteringFamily::PermutedDiagonal => match &self.permutations {
                Some((pr, pt)) => DMatrix::from_fn(m, m, |i, j| pt[pr[i]] == j),
                None => DMatrix::from_element(m, m, true),
            },
            ScatteringFamily::Unitary | ScatteringFamily::SymmetricUnitary => DMatrix::from_element(m, m, true),
            ScatteringFamily::BlockUnitary | ScatteringFamily::BlockSymmetricUnitary => {
                let g = self.group_size;
                DMatrix::from_fn(m, m, |i, j| i / g == j / g)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub clause: String,
    pub residual: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn check<T: Real>(&mut self, clause: &str, residual: T, ok: bool) {
        if !ok {
            self.violations.push(Violation { clause: clause.to_string(), residual: residual.as_f64() });
        }
    }
}

fn outside_mask<T: Real>(v: &CMatrix<T>, mask: &DMatrix<bool>) -> T {
    v.iter()
        .zip(mask.iter())
        .filter(|(_, ok)| !**ok)
        .fold(T::zero(), |acc, (z, _)| acc + abs2(*z))
        .sqrt()
}

/// Checks a scattering matrix against its family: zero pattern, symmetry and
/// per-block unitarity. Scattering residuals are absolute.
pub fn check_scattering<T: Real>(spec: &ScatteringSpec<T>, tol: T) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let theta = &spec.theta;
    let m = spec.m();
    if spec.family == ScatteringFamily::PermutedDiagonal && spec.permutations.is_none() {
        report.check("permutations present", T::one(), false);
    }
    let off = outside_mask(theta, &spec.mask());
    report.check("zero pattern", off, off <= tol);
    if spec.family.is_symmetric() {
        let r = fro(&(theta - theta.transpose()));
        report.check("symmetry", r, r <= tol);
    }
    if spec.family.is_block() {
        let g = spec.group_size;
        for b in 0..m / g {
            let blk = theta.view((b * g, b * g), (g, g)).into_owned();
            let r = fro(&(blk.adjoint() * &blk - identity::<T>(g)));
            report.check(&format!("unitarity of block {b}"), r, r <= tol);
        }
    } else {
        let r = fro(&(theta.adjoint() * theta - identity::<T>(m)));
        report.check("unitarity", r, r <= tol);
    }
    report
}

/// Checks an admittance matrix against a topology: zero pattern and symmetry
/// relative to `||Y||_F`, plus losslessness when `lossless` is requested.
pub fn check_admittance<T: Real>(t: &Topology, y: &NetworkMatrix<T>, tol: T, lossless: bool) -> ConstraintReport {
    let mut report = ConstraintReport::default();
    let v = y.values();
    if v.nrows() != t.m {
        report.check("dimension", T::one(), false);
        return report;
    }
    let scale = fro(v);
    let off = outside_mask(v, &t.mask());
    report.check("zero pattern", off, within(off, scale, tol));
    let sym = fro(&(v - v.transpose()));
    report.check("symmetry", sym, within(sym, scale, tol));
    if lossless {
        let r = fro(&real_part(v));
        report.check("lossless", r, within(r, scale, tol));
    }
    report
}

/// Mask of a family without building the full topology object.
pub fn structure_mask(family: Family, m: usize, params: TopologyParams) -> Result<DMatrix<bool>> {
    Ok(build_topology(family, m, params)?.mask())
}

/// Non-reciprocal single-connected scattering matrix
/// `Gamma_r diag(e^{j phases}) Gamma_t`, with `Gamma[i, perm[i]] = 1`.
pub fn non_diagonal_scattering<T: Real>(phases: &[T], perm_r: &[usize], perm_t: &[usize]) -> Result<ScatteringSpec<T>> {
    let m = phases.len();
    check_permutation(perm_r, m)?;
    check_permutation(perm_t, m)?;
    let mut theta = zeros::<T>(m, m);
    for i in 0..m {
        let k = perm_r[i];
        theta[(i, perm_t[k])] = cis(phases[k]);
    }
    Ok(ScatteringSpec {
        theta,
        family: ScatteringFamily::PermutedDiagonal,
        group_size: m.max(1),
        permutations: Some((perm_r.to_vec(), perm_t.to_vec())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hybrid,
    MultiSector,
}

/// Port indices of group `g` in one sector of a hybrid arrangement.
///
/// Sector `s` (0 or 1) occupies ports `s*M/2 .. (s+1)*M/2`; within a sector,
/// group `g` holds `M̄/2` consecutive ports.
pub fn hybrid_indices(m: usize, group_size: usize, sector: usize, g: usize) -> Vec<usize> {
    let half = group_size / 2;
    let start = sector * m / 2 + g * half;
    (start..start + half).collect()
}

/// Port index of cell `n` in sector `l` of a multi-sector arrangement.
pub fn sector_index(m: usize, sectors: usize, l: usize, n: usize) -> usize {
    l * (m / sectors) + n
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeBlocks<T: Real> {
    /// Per group `(Theta_r, Theta_t)`.
    Hybrid(Vec<(CMatrix<T>, CMatrix<T>)>),
    /// `coefficients[l][n]` scatters cell `n` of sector 1 into sector `l`.
    MultiSector(Vec<Vec<C<T>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport<T: Real> {
    pub blocks: ModeBlocks<T>,
    /// Power-conservation residual per group (hybrid) or per cell (multi-sector).
    pub residuals: Vec<T>,
    /// `||Theta_r - Theta_r^T||_F` per group; empty for multi-sector.
    pub symmetry: Vec<T>,
}

impl<T: Real> ModeReport<T> {
    pub fn max_residual(&self) -> T {
        self.residuals.iter().chain(&self.symmetry).fold(T::zero(), |a, &b| a.max(b))
    }
}

/// Extracts hybrid or multi-sector blocks from a scattering matrix and
/// evaluates their power-conservation residuals. For hybrid mode the group
/// size is `spec.group_size` (even); `sectors` is used by multi-sector mode.
pub fn mode_blocks<T: Real>(spec: &ScatteringSpec<T>, mode: Mode, sectors: usize) -> Result<ModeReport<T>> {
    let m = spec.m();
    let theta = &spec.theta;
    match mode {
        Mode::Hybrid => {
            let gs = spec.group_size;
            if m % 2 != 0 || gs % 2 != 0 {
                return Err(Error::DimensionMismatch(format!(
                    "hybrid mode needs even M and group size, got M={m}, group size {gs}"
                )));
            }
            let groups = m / gs;
            let mut blocks = Vec::with_capacity(groups);
            let mut residuals = Vec::with_capacity(groups);
            let mut symmetry = Vec::with_capacity(groups);
            for g in 0..groups {
                let s1 = hybrid_indices(m, gs, 0, g);
                let s2 = hybrid_indices(m, gs, 1, g);
                let r = theta.select_rows(&s1).select_columns(&s1);
                let t = theta.select_rows(&s2).select_columns(&s1);
                let res = fro(&(r.adjoint() * &r + t.adjoint() * &t - identity::<T>(gs / 2)));
                residuals.push(res);
                symmetry.push(fro(&(&r - r.transpose())));
                blocks.push((r, t));
            }
            Ok(ModeReport { blocks: ModeBlocks::Hybrid(blocks), residuals, symmetry })
        }
        Mode::MultiSector => {
            if sectors == 0 || m % sectors != 0 {
                return Err(Error::DimensionMismatch(format!("{sectors} sectors do not divide M={m}")));
            }
            let cells = m / sectors;
            let coeffs: Vec<Vec<C<T>>> = (0..sectors)
                .map(|l| (0..cells).map(|n| theta[(sector_index(m, sectors, l, n), n)]).collect())
                .collect();
            let residuals = (0..cells)
                .map(|n| {
                    let p = coeffs.iter().fold(T::zero(), |acc, col| acc + abs(col[n]) * abs(col[n]));
                    (p - T::one()).abs()
                })
                .collect();
            Ok(ModeReport { blocks: ModeBlocks::MultiSector(coeffs), residuals, symmetry: Vec::new() })
        }
    }
}

/// Places square blocks into an `m x m` zero matrix; block `k` occupies rows
/// and columns `index_sets[k]`.
pub fn embed_blocks<T: Real>(m: usize, index_sets: &[Vec<usize>], blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let mut out = zeros::<T>(m, m);
    for (idx, b) in index_sets.iter().zip(blocks) {
        for (a, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                out[(i, j)] = b[(a, c)];
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyDoc {
    family: Family,
    m: usize,
    #[serde(default)]
    params: TopologyParams,
    edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    switches: Option<BTreeMap<String, bool>>,
}

fn edge_key(e: Edge) -> String {
    format!("{}-{}", e.0, e.1)
}

impl Serialize for Topology {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let switches = self
            .switches
            .as_ref()
            .map(|sw| self.edges.iter().zip(sw).map(|(e, on)| (edge_key(*e), *on)).collect());
        // the switch states are carried by the "switches" map
        let mut params = self.params.clone();
        params.switch_mask = None;
        TopologyDoc {
            family: self.family,
            m: self.m,
            params,
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            switches,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Topology {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = TopologyDoc::deserialize(d)?;
        let mut params = doc.params;
        if let Some(map) = &doc.switches {
            let mask = all_pairs(doc.m)
                .map(|e| map.get(&edge_key(e)).copied().unwrap_or(true))
                .collect::<Vec<_>>();
            params.switch_mask = Some(mask);
        }
        let t = build_topology(doc.family, doc.m, params).map_err(D::Error::custom)?;
        let edges: Vec<Edge> = doc.edges.iter().map(|e| (e[0], e[1])).collect();
        if edges != t.edges {
            return Err(D::Error::custom("edge list does not match the family definition"));
        }
        Ok(t)
    }
}
