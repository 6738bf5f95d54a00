//! Model files: a versioned JSON schema for spaces, measures, joints,
//! likelihood models, nets and experiment configurations.
//!
//! Endpoints are exact fraction or decimal strings. Weights are decimal or
//! fraction strings read as `f64`; writing uses the shortest decimal that
//! reads back to the same `f64`, so a file survives a round trip unchanged.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use condmeasure::bayes::{LikelihoodModel, Reference};
use condmeasure::bayesnet::{BayesNet, NetCaps, Node, NodeParts};
use condmeasure::joint::{CurveComponent, CurveKind, JointMeasure, Part};
use condmeasure::kernel::{KernelCell, TrackingAtom, TransitionKernel};
use condmeasure::measure::HybridMeasure;
use condmeasure::rational::{format_rational, parse_rational, to_f64, Rational};
use condmeasure::sequential::{ExperimentConfig, Placement, Policy, Termination};
use condmeasure::space::{Interval, Point, Space, SpaceRef};
use condmeasure::step::{Cell, StepDensity};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

fn yes() -> bool {
    true
}

fn one() -> String {
    "1".into()
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub version: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub spaces: BTreeMap<String, SpaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood_model: Option<LikelihoodSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intervals: Vec<[String; 2]>,
}

/// Constant `value` on the half-open `cell`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub cell: [String; 2],
    pub value: String,
}

/// A measure on a space named elsewhere: point masses keyed by point text
/// (`a` or `@1/2`) plus a step density.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub atoms: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<CellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub space: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub atoms: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<CellSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointAtomSpec {
    pub x: String,
    pub y: String,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectSpec {
    pub x: [String; 2],
    pub y: [String; 2],
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LineSpec {
    /// `{(slope·y + offset, y)}`, density along y.
    Graph { slope: String, offset: String },
    /// `{x} × B`, density along y.
    Vertical { x: String },
    /// `A × {y}`, density along x.
    Horizontal { y: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub line: LineSpec,
    pub density: Vec<CellSpec>,
    #[serde(default = "one")]
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub x: String,
    pub y: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<JointAtomSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rects: Vec<RectSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<CurveSpec>,
    /// Rescale to total mass one before use.
    #[serde(default, skip_serializing_if = "is_false")]
    pub normalize: bool,
    /// Require total mass one.
    #[serde(default = "yes")]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSpec {
    pub slope: String,
    pub offset: String,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCellSpec {
    pub cell: [String; 2],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub atoms: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracking: Vec<TrackingSpec>,
}

/// Kernel from space `from` to space `to`: one section per cell of `from`
/// and one per point listed in `points` (every atom of `from` included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<KernelCellSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub points: BTreeMap<String, SectionSpec>,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    Counting,
    Measure(SectionSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSpec {
    pub prior: MeasureSpec,
    pub likelihood: KernelSpec,
    pub reference: ReferenceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_reference: Option<MeasureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub space: String,
    /// Real points split off as their own parts.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<String>,
    /// Cells partitioning the intervals; default: the intervals as given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
    /// Reference weight per part; default: counting on points, length on
    /// cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<String>>,
    /// One row per parent-part combination, last parent fastest; one
    /// density value per own part, atoms before cells.
    pub table: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cells: Option<u64>,
    pub nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub label: String,
    pub outcomes: Vec<String>,
    /// `θ ↦ [p(y | θ) for y in outcomes]`.
    pub table: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    #[default]
    GreedyInfoGain,
    FixedSequence {
        sequence: Vec<String>,
    },
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminationSpec {
    pub max_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_threshold: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub stop_on_zero_gain: bool,
}

/// Sequential experiment over a finite parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub theta: Vec<String>,
    pub prior: BTreeMap<String, String>,
    pub placements: Vec<PlacementSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    pub termination: TerminationSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Objects built from a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spaces: BTreeMap<String, SpaceRef>,
    pub joint: Option<JointMeasure>,
    pub likelihood_model: Option<LikelihoodModel>,
    pub net: Option<BayesNet>,
    pub experiment: Option<ExperimentConfig>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::validation("schema", msg)
}

pub fn rational(s: &str, what: &str) -> CliResult<Rational> {
    parse_rational(s).map_err(|e| schema(format!("{what}: {e}")))
}

/// Decimal (`0.25`, `2.5e-3`) or fraction (`1/3`) string as `f64`.
pub fn weight(s: &str, what: &str) -> CliResult<f64> {
    let t = s.trim();
    let v = if t.contains('/') {
        to_f64(&rational(t, what)?)
    } else {
        let ok = !t.is_empty() && t.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c));
        if !ok {
            return Err(schema(format!("{what}: not a number: {s:?}")));
        }
        t.parse::<f64>().map_err(|e| schema(format!("{what}: {e}: {s:?}")))?
    };
    if !v.is_finite() {
        return Err(schema(format!("{what}: not finite: {s:?}")));
    }
    Ok(v)
}

pub fn format_weight(v: f64) -> String {
    format!("{v}")
}

pub fn point(s: &str) -> CliResult<Point> {
    Point::parse(s).map_err(|e| schema(format!("point {s:?}: {e}")))
}

fn interval(pair: &[String; 2], what: &str) -> CliResult<Interval> {
    Ok(Interval::new(rational(&pair[0], what)?, rational(&pair[1], what)?)?)
}

fn interval_spec(iv: &Interval) -> [String; 2] {
    [format_rational(&iv.lo), format_rational(&iv.hi)]
}

fn density(cells: &[CellSpec], what: &str) -> CliResult<StepDensity> {
    let cells = cells
        .iter()
        .map(|c| Ok(Cell::new(interval(&c.cell, what)?, weight(&c.value, what)?)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(StepDensity::new(cells)?)
}

fn density_spec(d: &StepDensity) -> Vec<CellSpec> {
    d.cells()
        .iter()
        .map(|c| CellSpec {
            cell: interval_spec(&c.interval),
            value: format_weight(c.value),
        })
        .collect()
}

fn atom_map(atoms: &BTreeMap<String, String>, what: &str) -> CliResult<BTreeMap<Point, f64>> {
    let mut out = BTreeMap::new();
    for (p, w) in atoms {
        if out.insert(point(p)?, weight(w, what)?).is_some() {
            return Err(schema(format!("{what}: point {p} listed twice")));
        }
    }
    Ok(out)
}

fn atom_map_spec(atoms: &BTreeMap<Point, f64>) -> BTreeMap<String, String> {
    atoms.iter().map(|(p, w)| (p.to_string(), format_weight(*w))).collect()
}

fn section(space: &SpaceRef, s: &SectionSpec, normalized: bool, what: &str) -> CliResult<HybridMeasure> {
    let m = HybridMeasure::new(
        space.clone(),
        atom_map(&s.atoms, what)?,
        density(&s.density, what)?,
        normalized,
    )?;
    Ok(m)
}

fn section_spec(m: &HybridMeasure) -> SectionSpec {
    SectionSpec {
        atoms: atom_map_spec(m.atoms()),
        density: density_spec(m.density()),
    }
}

fn build_space(name: &str, s: &SpaceSpec) -> CliResult<Space> {
    let what = format!("space {name}");
    let intervals = s
        .intervals
        .iter()
        .map(|iv| interval(iv, &what))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Space::new(s.atoms.clone(), intervals)?)
}

fn space_spec(s: &Space) -> SpaceSpec {
    SpaceSpec {
        atoms: s.atoms().to_vec(),
        intervals: s.intervals().iter().map(interval_spec).collect(),
    }
}

impl ModelSpec {
    pub fn parse(text: &str) -> CliResult<ModelSpec> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(schema(format!("unsupported schema version {v}; expected {SCHEMA_VERSION}"))),
            None => return Err(schema("missing integer field `version`")),
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub fn load(path: &Path) -> CliResult<ModelSpec> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("io", format!("{}: {e}", path.display())))?;
        ModelSpec::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model spec serializes")
    }

    pub fn build(&self) -> CliResult<Model> {
        let mut spaces = BTreeMap::new();
        for (name, s) in &self.spaces {
            spaces.insert(name.clone(), Arc::new(build_space(name, s)?));
        }
        let ctx = Ctx { spaces: &spaces };
        let joint = self.joint.as_ref().map(|j| ctx.joint(j)).transpose()?;
        let likelihood_model = self.likelihood_model.as_ref().map(|m| ctx.likelihood_model(m)).transpose()?;
        let net = self.net.as_ref().map(|n| ctx.net(n)).transpose()?;
        let experiment = self.experiment.as_ref().map(build_experiment).transpose()?;
        Ok(Model {
            spaces,
            joint,
            likelihood_model,
            net,
            experiment,
        })
    }
}

struct Ctx<'a> {
    spaces: &'a BTreeMap<String, SpaceRef>,
}

impl Ctx<'_> {
    fn space(&self, name: &str) -> CliResult<SpaceRef> {
        self.spaces
            .get(name)
            .cloned()
            .ok_or_else(|| schema(format!("unknown space {name:?}")))
    }

    fn measure(&self, m: &MeasureSpec, normalized: bool, what: &str) -> CliResult<HybridMeasure> {
        let s = SectionSpec {
            atoms: m.atoms.clone(),
            density: m.density.clone(),
        };
        section(&self.space(&m.space)?, &s, normalized, what)
    }

    fn joint(&self, j: &JointSpec) -> CliResult<JointMeasure> {
        let (xs, ys) = (self.space(&j.x)?, self.space(&j.y)?);
        let mut atoms = BTreeMap::new();
        for a in &j.atoms {
            let w = weight(&a.weight, "joint atom")?;
            if atoms.insert((point(&a.x)?, point(&a.y)?), w).is_some() {
                return Err(schema(format!("joint atom ({}, {}) listed twice", a.x, a.y)));
            }
        }
        let rects = j
            .rects
            .iter()
            .map(|r| Ok((interval(&r.x, "rect")?, interval(&r.y, "rect")?, weight(&r.value, "rect")?)))
            .collect::<CliResult<Vec<_>>>()?;
        let grid = condmeasure::joint::GridDensity::from_rectangles(&xs, &ys, &rects)?;
        let mut curves = Vec::new();
        for c in &j.curves {
            let kind = match &c.line {
                LineSpec::Graph { slope, offset } => CurveKind::Graph {
                    slope: rational(slope, "graph slope")?,
                    offset: rational(offset, "graph offset")?,
                },
                LineSpec::Vertical { x } => CurveKind::Vertical { x: point(x)? },
                LineSpec::Horizontal { y } => CurveKind::Horizontal { y: point(y)? },
            };
            curves.push(CurveComponent {
                kind,
                line_density: density(&c.density, "curve")?,
                weight: weight(&c.weight, "curve weight")?,
            });
        }
        let build = |atoms, grid, curves, normalized| JointMeasure::new(xs.clone(), ys.clone(), atoms, Some(grid), curves, normalized);
        if !j.normalize {
            return Ok(build(atoms, grid, curves, j.normalized)?);
        }
        let raw = build(atoms, grid, curves, false)?;
        let t = raw.total_mass();
        if !(t > 0.0) {
            return Err(CliError::validation("invalid_model", "cannot normalize a joint of zero mass"));
        }
        let s = raw.scale(1.0 / t);
        Ok(JointMeasure::new(xs, ys, s.atoms().clone(), Some(s.grid().clone()), s.curves(), j.normalized)?)
    }

    fn kernel(&self, k: &KernelSpec) -> CliResult<TransitionKernel> {
        let (from, to) = (self.space(&k.from)?, self.space(&k.to)?);
        let mut cells = Vec::new();
        for c in &k.cells {
            let what = format!("kernel cell {}..{}", c.cell[0], c.cell[1]);
            let fixed = section(
                &to,
                &SectionSpec {
                    atoms: c.atoms.clone(),
                    density: c.density.clone(),
                },
                false,
                &what,
            )?;
            let tracking = c
                .tracking
                .iter()
                .map(|t| {
                    Ok(TrackingAtom {
                        slope: rational(&t.slope, "tracking slope")?,
                        offset: rational(&t.offset, "tracking offset")?,
                        weight: weight(&t.weight, "tracking weight")?,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            cells.push(KernelCell {
                cell: interval(&c.cell, &what)?,
                fixed,
                tracking,
            });
        }
        let mut points = BTreeMap::new();
        for (p, s) in &k.points {
            let what = format!("kernel section at {p}");
            if points.insert(point(p)?, section(&to, s, false, &what)?).is_some() {
                return Err(schema(format!("kernel point {p} listed twice")));
            }
        }
        Ok(TransitionKernel::new(from, to, cells, points, k.normalized)?)
    }

    fn likelihood_model(&self, m: &LikelihoodSpec) -> CliResult<LikelihoodModel> {
        let prior = self.measure(&m.prior, true, "prior")?;
        let likelihood = self.kernel(&m.likelihood)?;
        let reference = match &m.reference {
            ReferenceSpec::Counting => Reference::Counting,
            ReferenceSpec::Measure(s) => Reference::Measure(section(likelihood.to_space(), s, false, "reference")?),
        };
        let model = LikelihoodModel::new(prior, likelihood, reference)?;
        Ok(match &m.prior_reference {
            Some(mu) => model.with_prior_reference(self.measure(mu, false, "prior reference")?)?,
            None => model,
        })
    }

    fn net(&self, n: &NetSpec) -> CliResult<BayesNet> {
        let defaults = NetCaps::default();
        let caps = NetCaps {
            max_nodes: n.max_nodes.unwrap_or(defaults.max_nodes),
            max_cells: n.max_cells.map(u128::from).unwrap_or(defaults.max_cells),
        };
        if n.nodes.len() > caps.max_nodes {
            return Err(condmeasure::error::Error::CapExceeded {
                what: "nodes",
                needed: n.nodes.len() as u128,
                cap: caps.max_nodes as u128,
            }
            .into());
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut nodes = Vec::new();
        for (k, s) in n.nodes.iter().enumerate() {
            let what = format!("node {}", s.name);
            let space = self.space(&s.space)?;
            let reals = s
                .points
                .iter()
                .map(|p| rational(p, &what))
                .collect::<CliResult<Vec<_>>>()?;
            let cells = match &s.cells {
                Some(cs) => cs.iter().map(|c| interval(c, &what)).collect::<CliResult<Vec<_>>>()?,
                None => space.intervals().to_vec(),
            };
            let parts = NodeParts::new(space, &reals, cells)?;
            let parents = s
                .parents
                .iter()
                .map(|p| {
                    index
                        .get(p.as_str())
                        .copied()
                        .ok_or_else(|| schema(format!("{what}: parent {p:?} is not an earlier node")))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let table = s
                .table
                .iter()
                .map(|row| row.iter().map(|v| weight(v, &what)).collect::<CliResult<Vec<_>>>())
                .collect::<CliResult<Vec<_>>>()?;
            let node = match &s.reference {
                Some(r) => {
                    let r = r.iter().map(|v| weight(v, &what)).collect::<CliResult<Vec<_>>>()?;
                    Node::with_reference(s.name.clone(), parts, r, parents, table)?
                }
                None => Node::new(s.name.clone(), parts, parents, table)?,
            };
            if index.insert(s.name.as_str(), k).is_some() {
                return Err(schema(format!("node name {:?} used twice", s.name)));
            }
            nodes.push(node);
        }
        Ok(BayesNet::with_caps(nodes, caps)?)
    }
}

fn build_experiment(e: &ExperimentSpec) -> CliResult<ExperimentConfig> {
    let theta: SpaceRef = Arc::new(Space::finite(e.theta.iter().cloned())?);
    let mut prior = BTreeMap::new();
    for (t, w) in &e.prior {
        prior.insert(Point::atom(t.clone()), weight(w, "experiment prior")?);
    }
    let prior = HybridMeasure::new(theta.clone(), prior, StepDensity::zero(), true)?;
    let mut placements = Vec::new();
    for p in &e.placements {
        let what = format!("placement {}", p.label);
        let outcomes: SpaceRef = Arc::new(Space::finite(p.outcomes.iter().cloned())?);
        let mut table = Vec::new();
        for (t, row) in &p.table {
            if !theta.has_atom(t) {
                return Err(schema(format!("{what}: table row for unknown parameter {t:?}")));
            }
            let row = row.iter().map(|v| weight(v, &what)).collect::<CliResult<Vec<_>>>()?;
            table.push((Point::atom(t.clone()), row));
        }
        placements.push(Placement::from_table(p.label.clone(), &theta, &outcomes, &table)?);
    }
    let policy = match &e.policy {
        PolicySpec::GreedyInfoGain => Policy::GreedyInfoGain,
        PolicySpec::External => Policy::External,
        PolicySpec::FixedSequence { sequence } => Policy::FixedSequence(
            sequence
                .iter()
                .map(|l| {
                    e.placements
                        .iter()
                        .position(|p| &p.label == l)
                        .ok_or_else(|| schema(format!("fixed sequence names unknown placement {l:?}")))
                })
                .collect::<CliResult<Vec<_>>>()?,
        ),
    };
    let entropy_threshold = e
        .termination
        .entropy_threshold
        .as_deref()
        .map(|s| weight(s, "entropy threshold"))
        .transpose()?;
    let termination = Termination {
        max_trials: e.termination.max_trials,
        entropy_threshold,
        stop_on_zero_gain: e.termination.stop_on_zero_gain,
    };
    Ok(ExperimentConfig::new(prior, placements, policy, termination, e.seed)?)
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> CliResult<ExperimentSpec> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> CliResult<ExperimentConfig> {
        build_experiment(self)
    }

    pub fn from_config(cfg: &ExperimentConfig) -> ExperimentSpec {
        let theta: Vec<String> = cfg.prior().space().atoms().to_vec();
        let placements = cfg
            .placements()
            .iter()
            .map(|p| {
                let k = p.likelihood();
                let ys: Vec<Point> = p.outcomes().collect();
                PlacementSpec {
                    label: p.label().to_string(),
                    outcomes: k.to_space().atoms().to_vec(),
                    table: k
                        .points()
                        .iter()
                        .map(|(t, m)| (t.to_string(), ys.iter().map(|y| format_weight(m.point_mass(y))).collect()))
                        .collect(),
                }
            })
            .collect();
        let policy = match cfg.policy() {
            Policy::GreedyInfoGain => PolicySpec::GreedyInfoGain,
            Policy::External => PolicySpec::External,
            Policy::FixedSequence(seq) => PolicySpec::FixedSequence {
                sequence: seq.iter().map(|&i| cfg.placements()[i].label().to_string()).collect(),
            },
        };
        let t = cfg.termination();
        ExperimentSpec {
            theta,
            prior: cfg
                .prior()
                .atoms()
                .iter()
                .map(|(p, w)| (p.to_string(), format_weight(*w)))
                .collect(),
            placements,
            policy,
            termination: TerminationSpec {
                max_trials: t.max_trials,
                entropy_threshold: t.entropy_threshold.map(format_weight),
                stop_on_zero_gain: t.stop_on_zero_gain,
            },
            seed: cfg.seed(),
        }
    }
}

/// Names spaces while serializing, reusing the names of the model.
struct Namer {
    spaces: BTreeMap<String, SpaceRef>,
}

impl Namer {
    fn name(&mut self, s: &SpaceRef) -> String {
        if let Some((n, _)) = self.spaces.iter().find(|(_, t)| ***t == **s) {
            return n.clone();
        }
        let mut i = self.spaces.len();
        while self.spaces.contains_key(&format!("s{i}")) {
            i += 1;
        }
        let n = format!("s{i}");
        self.spaces.insert(n.clone(), s.clone());
        n
    }

    fn measure(&mut self, m: &HybridMeasure) -> MeasureSpec {
        let s = section_spec(m);
        MeasureSpec {
            space: self.name(m.space()),
            atoms: s.atoms,
            density: s.density,
        }
    }

    fn joint(&mut self, j: &JointMeasure) -> JointSpec {
        let atoms = j
            .atoms()
            .iter()
            .map(|((x, y), w)| JointAtomSpec {
                x: x.to_string(),
                y: y.to_string(),
                weight: format_weight(*w),
            })
            .collect();
        let rects = j
            .grid()
            .rectangles()
            .filter(|(_, _, v)| *v != 0.0)
            .map(|(a, b, v)| RectSpec {
                x: interval_spec(a),
                y: interval_spec(b),
                value: format_weight(v),
            })
            .collect();
        let curves = j
            .curves()
            .into_iter()
            .map(|c| CurveSpec {
                line: match c.kind {
                    CurveKind::Graph { slope, offset } => LineSpec::Graph {
                        slope: format_rational(&slope),
                        offset: format_rational(&offset),
                    },
                    CurveKind::Vertical { x } => LineSpec::Vertical { x: x.to_string() },
                    CurveKind::Horizontal { y } => LineSpec::Horizontal { y: y.to_string() },
                },
                density: density_spec(&c.line_density),
                weight: format_weight(c.weight),
            })
            .collect();
        JointSpec {
            x: self.name(j.x_space()),
            y: self.name(j.y_space()),
            atoms,
            rects,
            curves,
            normalize: false,
            normalized: j.is_normalized(),
        }
    }

    fn kernel(&mut self, k: &TransitionKernel) -> KernelSpec {
        KernelSpec {
            from: self.name(k.from_space()),
            to: self.name(k.to_space()),
            cells: k
                .cells()
                .iter()
                .map(|c| {
                    let s = section_spec(&c.fixed);
                    KernelCellSpec {
                        cell: interval_spec(&c.cell),
                        atoms: s.atoms,
                        density: s.density,
                        tracking: c
                            .tracking
                            .iter()
                            .map(|t| TrackingSpec {
                                slope: format_rational(&t.slope),
                                offset: format_rational(&t.offset),
                                weight: format_weight(t.weight),
                            })
                            .collect(),
                    }
                })
                .collect(),
            points: k.points().iter().map(|(p, m)| (p.to_string(), section_spec(m))).collect(),
            normalized: k.is_normalized(),
        }
    }

    fn likelihood_model(&mut self, m: &LikelihoodModel) -> LikelihoodSpec {
        LikelihoodSpec {
            prior: self.measure(m.prior()),
            likelihood: self.kernel(m.likelihood()),
            reference: match m.reference() {
                Reference::Counting => ReferenceSpec::Counting,
                Reference::Measure(nu) => ReferenceSpec::Measure(section_spec(nu)),
            },
            prior_reference: m.explicit_prior_reference().map(|mu| self.measure(mu)),
        }
    }

    fn net(&mut self, net: &BayesNet) -> NetSpec {
        let caps = net.caps();
        let nodes = net
            .nodes()
            .iter()
            .map(|n| {
                let parts = n.parts();
                let mut points = Vec::new();
                let mut cells = Vec::new();
                for p in parts.parts() {
                    match p {
                        Part::Point(Point::Real(x)) => points.push(format_rational(x)),
                        Part::Point(Point::Atom(_)) => {}
                        Part::Cell(iv) => cells.push(interval_spec(iv)),
                    }
                }
                NodeSpec {
                    name: n.name().to_string(),
                    space: self.name(parts.space()),
                    points,
                    cells: Some(cells),
                    parents: n.parents().iter().map(|&p| net.nodes()[p].name().to_string()).collect(),
                    reference: Some(n.reference_weights().iter().map(|w| format_weight(*w)).collect()),
                    table: n
                        .table()
                        .iter()
                        .map(|row| row.iter().map(|v| format_weight(*v)).collect())
                        .collect(),
                }
            })
            .collect();
        NetSpec {
            max_nodes: Some(caps.max_nodes),
            max_cells: Some(caps.max_cells.min(u64::MAX as u128) as u64),
            nodes,
        }
    }
}

impl Model {
    pub fn to_spec(&self) -> ModelSpec {
        let mut namer = Namer {
            spaces: self.spaces.clone(),
        };
        let joint = self.joint.as_ref().map(|j| namer.joint(j));
        let likelihood_model = self.likelihood_model.as_ref().map(|m| namer.likelihood_model(m));
        let net = self.net.as_ref().map(|n| namer.net(n));
        let experiment = self.experiment.as_ref().map(ExperimentSpec::from_config);
        ModelSpec {
            version: SCHEMA_VERSION,
            spaces: namer.spaces.iter().map(|(n, s)| (n.clone(), space_spec(s))).collect(),
            joint,
            likelihood_model,
            net,
            experiment,
        }
    }

    pub fn joint(&self) -> CliResult<&JointMeasure> {
        self.joint
            .as_ref()
            .ok_or_else(|| CliError::validation("missing_section", "model has no `joint` section"))
    }

    pub fn likelihood_model(&self) -> CliResult<&LikelihoodModel> {
        self.likelihood_model
            .as_ref()
            .ok_or_else(|| CliError::validation("missing_section", "model has no `likelihood_model` section"))
    }

    pub fn net(&self) -> CliResult<&BayesNet> {
        self.net
            .as_ref()
            .ok_or_else(|| CliError::validation("missing_section", "model has no `net` section"))
    }

    pub fn experiment(&self) -> CliResult<&ExperimentConfig> {
        self.experiment
            .as_ref()
            .ok_or_else(|| CliError::validation("missing_section", "model has no `experiment` section"))
    }
}
