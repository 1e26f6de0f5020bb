//! Good events and good sets in dyadic double layers, conditional samplers,
//! exact maximal coupling at micro scale, and the layered coupling
//! experiment.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;

use crate::arms::{ArmEventSpec, CompiledEvent};
use crate::error::ArmlabError;
use crate::explore::{quality, well_separated, Chain, Tracer};
use crate::lattice::{ArcName, DiscDomain, HexCoord, Radius};
use crate::percolation::{for_each_config, Color, Configuration, Prob, RngStream};

/// Hexagon-count cap for exact (enumerated) good-set laws.
pub const LAW_CAP: usize = 30;

/// Default face-count truncation threshold recorded per layer.
pub const K_TRUNC: usize = 6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LayerSetting {
    Half,
    PlaneOdd,
    PlaneEven,
}

/// A dyadic double layer `[r_i, 4 r_i]` inside a half-plane or plane
/// geometry, hosting the good event for `j` arms.
#[derive(Clone, Copy, Debug)]
pub struct LayerSpec {
    pub j: usize,
    pub r_i: Radius,
    pub setting: LayerSetting,
}

impl LayerSpec {
    pub fn new(j: usize, r_i: Radius, setting: LayerSetting) -> Result<LayerSpec, ArmlabError> {
        let ok = match setting {
            LayerSetting::Half => j >= 1,
            LayerSetting::PlaneOdd => j >= 3 && j % 2 == 1,
            LayerSetting::PlaneEven => j >= 2 && j % 2 == 0,
        };
        if !ok {
            return Err(ArmlabError::Invalid(format!(
                "layer setting {setting:?} does not admit j = {j}"
            )));
        }
        Ok(LayerSpec { j, r_i, setting })
    }

    fn scaled(&self, k: i64) -> Radius {
        Radius::new(self.r_i.num * k, self.r_i.den).unwrap()
    }

    pub fn region_spec(&self) -> String {
        let kind = if self.setting == LayerSetting::Half {
            "semiann"
        } else {
            "ann"
        };
        format!("{}:{}:{}", kind, self.r_i, self.scaled(4))
    }

    /// Number of interfaces the good event demands across the double layer.
    pub fn expected_interfaces(&self) -> usize {
        match self.setting {
            LayerSetting::PlaneEven => self.j,
            _ => self.j - 1,
        }
    }
}

/// A realized good set: colored hexagons of the double layer, sorted.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct GoodSet {
    pub cells: Vec<(HexCoord, Color)>,
}

impl GoodSet {
    pub fn empty() -> GoodSet {
        GoodSet { cells: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }

    fn from_hexes(hexes: impl IntoIterator<Item = HexCoord>, cfg: &Configuration) -> GoodSet {
        let mut cells: Vec<(HexCoord, Color)> = hexes
            .into_iter()
            .map(|h| (h, cfg.color_of(h).expect("good-set hexagon outside domain")))
            .collect();
        cells.sort_by_key(|&(h, _)| h);
        cells.dedup();
        GoodSet { cells }
    }

    /// Deterministic sort key (hexes first, red before blue on ties).
    fn sort_key(&self) -> Vec<(HexCoord, u8)> {
        self.cells.iter().map(|&(h, c)| (h, c.letter() as u8)).collect()
    }
}

// ---------------------------------------------------------------------------
// Ring geometry shared by the double layer and its two halves
// ---------------------------------------------------------------------------

/// An annular (or semi-annular) ring with its interface tracer and boundary
/// touch tables.
struct Ring {
    region: Arc<DiscDomain>,
    tracer: Tracer,
    inner_touch: HashSet<HexCoord>,
    outer_touch: HashSet<HexCoord>,
    /// Hexagons on the positive / negative axis wall with their center x.
    axis_pos: Vec<(HexCoord, f64)>,
    axis_neg: Vec<(HexCoord, f64)>,
    half: bool,
    r_in: f64,
    r_out: f64,
}

impl Ring {
    fn new(spec: &str, half: bool, r_in: f64, r_out: f64) -> Result<Ring, ArmlabError> {
        let region = Arc::new(DiscDomain::parse(spec)?);
        let tracer = Tracer::new(Arc::clone(&region), ArcName::Outer)?;
        let mut inner_touch = HashSet::new();
        let mut outer_touch = HashSet::new();
        let mut axis_pos = Vec::new();
        let mut axis_neg = Vec::new();
        for lp in &region.loops {
            for e in lp {
                match e.arc {
                    ArcName::Inner => {
                        inner_touch.insert(e.in_hex);
                    }
                    ArcName::Outer => {
                        outer_touch.insert(e.in_hex);
                    }
                    ArcName::BottomRight | ArcName::Bottom => {
                        let x = e.in_hex.center().0;
                        if x >= 0.0 {
                            axis_pos.push((e.in_hex, x));
                        } else {
                            axis_neg.push((e.in_hex, x));
                        }
                    }
                    ArcName::BottomLeft => {
                        axis_neg.push((e.in_hex, e.in_hex.center().0));
                    }
                }
            }
        }
        Ok(Ring {
            region,
            tracer,
            inner_touch,
            outer_touch,
            axis_pos,
            axis_neg,
            half,
            r_in,
            r_out,
        })
    }

    fn chain_crosses(&self, ch: &Chain) -> bool {
        let t = |hexes: &[HexCoord]| {
            let mut inner = false;
            let mut outer = false;
            for h in hexes {
                inner |= self.inner_touch.contains(h);
                outer |= self.outer_touch.contains(h);
            }
            inner && outer
        };
        t(&ch.left_hexes) && t(&ch.right_hexes)
    }

    /// Crossing chains sorted counterclockwise by the angle of their inner
    /// endpoint (crossing interfaces cannot braid, so the order matches the
    /// outer end too).
    fn crossing_chains(&self, cfg: &Configuration) -> Result<Vec<Chain>, ArmlabError> {
        let mut chains: Vec<Chain> = self
            .tracer
            .trace(cfg)?
            .into_iter()
            .filter(|ch| self.chain_crosses(ch))
            .collect();
        chains.sort_by(|a, b| {
            chain_angle(a).partial_cmp(&chain_angle(b)).unwrap()
        });
        Ok(chains)
    }
}

fn vpos_norm(p: (f64, f64)) -> f64 {
    (p.0 * p.0 + p.1 * p.1).sqrt()
}

/// Endpoint vertex of the chain nearest the inner circle.
fn inner_endpoint(ch: &Chain) -> (f64, f64) {
    let s = ch.start.vertex.pos();
    let e = ch.end.vertex.pos();
    if vpos_norm(s) <= vpos_norm(e) {
        s
    } else {
        e
    }
}

fn outer_endpoint(ch: &Chain) -> (f64, f64) {
    let s = ch.start.vertex.pos();
    let e = ch.end.vertex.pos();
    if vpos_norm(s) <= vpos_norm(e) {
        e
    } else {
        s
    }
}

fn chain_angle(ch: &Chain) -> f64 {
    let (x, y) = inner_endpoint(ch);
    let a = y.atan2(x);
    if a < -1e-12 {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Whether red (the chain's left side) lies clockwise of the chain: true
/// exactly when the chain is traced from its outer end inward.
fn red_cw(ch: &Chain) -> bool {
    vpos_norm(ch.start.vertex.pos()) > vpos_norm(ch.end.vertex.pos())
}

/// Color facing the clockwise side of the chain.
fn cw_color(ch: &Chain) -> Color {
    if red_cw(ch) {
        Color::Red
    } else {
        Color::Blue
    }
}

fn ccw_color(ch: &Chain) -> Color {
    cw_color(ch).flip()
}

fn flank(ch: &Chain, c: Color) -> &[HexCoord] {
    match c {
        Color::Red => &ch.left_hexes,
        Color::Blue => &ch.right_hexes,
    }
}

fn cw_flank(ch: &Chain) -> &[HexCoord] {
    flank(ch, cw_color(ch))
}

fn ccw_flank(ch: &Chain) -> &[HexCoord] {
    flank(ch, ccw_color(ch))
}

fn flank_set(ch: &Chain) -> HashSet<HexCoord> {
    ch.left_hexes.iter().chain(&ch.right_hexes).copied().collect()
}

fn chains_adjacent(a: &Chain, b: &Chain) -> bool {
    let fa = flank_set(a);
    b.left_hexes.iter().chain(&b.right_hexes).any(|h| fa.contains(h))
}

/// BFS over hexagons allowed by `ok`, from the given seeds.
fn reach(seeds: impl IntoIterator<Item = HexCoord>, ok: impl Fn(HexCoord) -> bool) -> HashSet<HexCoord> {
    let mut seen = HashSet::new();
    let mut queue: VecDeque<HexCoord> = VecDeque::new();
    for s in seeds {
        if ok(s) && seen.insert(s) {
            queue.push_back(s);
        }
    }
    while let Some(h) = queue.pop_front() {
        for n in h.neighbors() {
            if ok(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

// ---------------------------------------------------------------------------
// The layer engine: good event, good set, quasi-good event
// ---------------------------------------------------------------------------

pub struct LayerEngine {
    pub spec: LayerSpec,
    ring: Ring,
    /// Inner and outer halves of the double layer (used by the quasi-good
    /// event detector in the half-plane setting).
    sub_in: Option<Ring>,
    sub_out: Option<Ring>,
    /// Radius of the layer midline `2 r_i`.
    mid: Radius,
}

impl LayerEngine {
    pub fn new(spec: LayerSpec) -> Result<LayerEngine, ArmlabError> {
        let half = spec.setting == LayerSetting::Half;
        let r1 = spec.r_i.as_f64();
        let ring = Ring::new(&spec.region_spec(), half, r1, 4.0 * r1)?;
        // The two halves can be empty at desk scale (r_i < 1); the
        // quasi-good detector is simply unavailable then.
        let (sub_in, sub_out) = if half {
            let s_in = Ring::new(
                &format!("semiann:{}:{}", spec.r_i, spec.scaled(2)),
                true,
                r1,
                2.0 * r1,
            )
            .ok();
            let s_out = Ring::new(
                &format!("semiann:{}:{}", spec.scaled(2), spec.scaled(4)),
                true,
                2.0 * r1,
                4.0 * r1,
            )
            .ok();
            (s_in, s_out)
        } else {
            (None, None)
        };
        Ok(LayerEngine {
            mid: spec.scaled(2),
            spec,
            ring,
            sub_in,
            sub_out,
        })
    }

    pub fn region(&self) -> &Arc<DiscDomain> {
        &self.ring.region
    }

    fn in_inner_layer(&self, h: HexCoord) -> bool {
        self.mid.contains_norm2(h.norm2())
    }

    /// Number of interfaces crossing the double layer (for the K-face
    /// truncation bookkeeping).
    pub fn crossing_count(&self, cfg: &Configuration) -> Result<usize, ArmlabError> {
        Ok(self.ring.crossing_chains(cfg)?.len())
    }

    /// The last arm's color: red for odd `j`, blue for even.
    fn last_color(&self) -> Color {
        if self.spec.j % 2 == 1 {
            Color::Red
        } else {
            Color::Blue
        }
    }

    /// Axis wall hexagons of a sign whose center x lies in `[lo, hi]` (in
    /// absolute value), intersected with one layer half.
    fn axis_interval(&self, positive: bool, lo: f64, hi: f64, inner_layer: bool) -> Vec<HexCoord> {
        let src = if positive {
            &self.ring.axis_pos
        } else {
            &self.ring.axis_neg
        };
        src.iter()
            .filter(|&&(h, x)| {
                let ax = x.abs();
                ax >= lo - 0.51 && ax <= hi + 0.51 && self.in_inner_layer(h) == inner_layer
            })
            .map(|&(h, _)| h)
            .collect()
    }

    /// Red/blue connector inside one layer half: the set of `c`-colored
    /// hexagons connected (within the half, in color `c`) both to the seed
    /// hexes and to the target flank.
    fn connector(
        &self,
        cfg: &Configuration,
        c: Color,
        inner_layer: bool,
        seeds: &[HexCoord],
        target: &[HexCoord],
    ) -> HashSet<HexCoord> {
        let ok = |h: HexCoord| {
            self.ring.region.contains(h)
                && self.in_inner_layer(h) == inner_layer
                && cfg.color_of(h) == Some(c)
        };
        let from_seed = reach(seeds.iter().copied(), &ok);
        if from_seed.is_empty() {
            return from_seed;
        }
        let from_target = reach(target.iter().copied(), &ok);
        from_seed.intersection(&from_target).copied().collect()
    }

    /// The two-hex-thick collar straddling the layer midline `C_{2 r_i}`
    /// within one connection sector. This is the pinned corridor between
    /// the two halves of the double layer: it is determined by the region
    /// geometry and the bounding interfaces alone, so it recomputes stably
    /// from the good set itself.
    fn midline_collar(&self, sector: &HashSet<HexCoord>) -> Vec<HexCoord> {
        let region = &self.ring.region;
        region
            .hexes
            .iter()
            .copied()
            .filter(|&h| {
                sector.contains(&h)
                    && h.neighbors()
                        .iter()
                        .any(|&n| region.contains(n) && self.in_inner_layer(n) != self.in_inner_layer(h))
            })
            .collect()
    }

    /// All hexes angularly on one side of a bounding chain (or between two
    /// chains): flood the region with the chain flanks removed.
    fn sector(&self, seeds: &[HexCoord], blocked: &HashSet<HexCoord>) -> HashSet<HexCoord> {
        let region = &self.ring.region;
        reach(seeds.iter().copied(), |h| {
            region.contains(h) && !blocked.contains(&h)
        })
    }

    fn check_quality(&self, chains: &[Chain]) -> bool {
        let half = self.ring.half;
        let inner_pts: Vec<(f64, f64)> = chains.iter().map(inner_endpoint).collect();
        let outer_pts: Vec<(f64, f64)> = chains.iter().map(outer_endpoint).collect();
        well_separated(quality(&inner_pts, self.ring.r_in, half), self.spec.j)
            && well_separated(quality(&outer_pts, self.ring.r_out, half), self.spec.j)
    }

    /// The crossing chains if the good event holds, `None` otherwise. For
    /// the plane-odd setting the returned chains are rotated so the
    /// non-adjacent pair sits between the last and first chain.
    fn good_chains(&self, cfg: &Configuration) -> Result<Option<Vec<Chain>>, ArmlabError> {
        let mut chains = self.ring.crossing_chains(cfg)?;
        if chains.len() != self.spec.expected_interfaces() {
            return Ok(None);
        }
        match self.spec.setting {
            LayerSetting::Half => {
                for w in chains.windows(2) {
                    if !chains_adjacent(&w[0], &w[1]) {
                        return Ok(None);
                    }
                }
            }
            LayerSetting::PlaneEven => {
                let n = chains.len();
                for k in 0..n {
                    if !chains_adjacent(&chains[k], &chains[(k + 1) % n]) {
                        return Ok(None);
                    }
                }
            }
            LayerSetting::PlaneOdd => {
                let n = chains.len();
                let missing: Vec<usize> = (0..n)
                    .filter(|&k| !chains_adjacent(&chains[k], &chains[(k + 1) % n]))
                    .collect();
                if missing.len() != 1 {
                    return Ok(None);
                }
                chains.rotate_left((missing[0] + 1) % n);
            }
        }
        if !self.check_quality(&chains) {
            return Ok(None);
        }
        if !self.check_connections(cfg, &chains)? {
            return Ok(None);
        }
        Ok(Some(chains))
    }

    /// The boundary / gap connection clauses of the good event.
    fn check_connections(&self, cfg: &Configuration, chains: &[Chain]) -> Result<bool, ArmlabError> {
        let r1 = self.spec.r_i.as_f64();
        match self.spec.setting {
            LayerSetting::Half => {
                let g1 = &chains[0];
                let gl = chains.last().unwrap();
                let c_last = self.last_color();
                let red_target: Vec<HexCoord> = flank(g1, Color::Red).to_vec();
                let last_target: Vec<HexCoord> = flank(gl, c_last).to_vec();
                for (inner_layer, lo, hi) in [(true, r1, 2.0 * r1), (false, 2.0 * r1, 4.0 * r1)] {
                    let pos_seed = self.axis_interval(true, lo, hi, inner_layer);
                    if self
                        .connector(cfg, Color::Red, inner_layer, &pos_seed, &red_target)
                        .is_empty()
                    {
                        return Ok(false);
                    }
                    let neg_seed = self.axis_interval(false, lo, hi, inner_layer);
                    if self
                        .connector(cfg, c_last, inner_layer, &neg_seed, &last_target)
                        .is_empty()
                    {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            LayerSetting::PlaneOdd => {
                let g1 = &chains[0];
                let gl = chains.last().unwrap();
                let c = if self.spec.j % 4 == 1 {
                    Color::Red
                } else {
                    Color::Blue
                };
                // The gap between the last and first chain must face them
                // with the prescribed color on both sides.
                if cw_color(g1) != c || ccw_color(gl) != c {
                    return Ok(false);
                }
                let seeds: Vec<HexCoord> = cw_flank(g1).to_vec();
                let target: Vec<HexCoord> = ccw_flank(gl).to_vec();
                for inner_layer in [true, false] {
                    if self
                        .connector(cfg, c, inner_layer, &seeds, &target)
                        .is_empty()
                    {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            LayerSetting::PlaneEven => Ok(true),
        }
    }

    pub fn good_event(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        Ok(self.good_chains(cfg)?.is_some())
    }

    /// The good set: hexagons touching the crossing interfaces, plus (half
    /// and plane-odd settings) the midline collar of each connection
    /// sector. Empty exactly when the good event fails, and a fixed point:
    /// any completion off the set that still realizes the good event
    /// recomputes the same set.
    pub fn good_set(&self, cfg: &Configuration) -> Result<GoodSet, ArmlabError> {
        let chains = match self.good_chains(cfg)? {
            Some(c) => c,
            None => return Ok(GoodSet::empty()),
        };
        let mut hexes: HashSet<HexCoord> = HashSet::new();
        for ch in &chains {
            hexes.extend(ch.left_hexes.iter().copied());
            hexes.extend(ch.right_hexes.iter().copied());
        }
        match self.spec.setting {
            LayerSetting::PlaneEven => {}
            LayerSetting::Half => {
                let g1 = &chains[0];
                let gl = chains.last().unwrap();
                // Collars across the midline in the two wall-connection
                // sectors, clockwise of gamma_1 and counterclockwise of
                // gamma_{j-1}.
                let all_pos: Vec<HexCoord> =
                    self.ring.axis_pos.iter().map(|&(h, _)| h).collect();
                let sector_pos = self.sector(&all_pos, &flank_set(g1));
                hexes.extend(self.midline_collar(&sector_pos));
                let all_neg: Vec<HexCoord> =
                    self.ring.axis_neg.iter().map(|&(h, _)| h).collect();
                let sector_neg = self.sector(&all_neg, &flank_set(gl));
                hexes.extend(self.midline_collar(&sector_neg));
            }
            LayerSetting::PlaneOdd => {
                // Collar across the midline in the gap between gamma_{j-1}
                // and gamma_1.
                let g1 = &chains[0];
                let gl = chains.last().unwrap();
                let seeds: Vec<HexCoord> = cw_flank(g1).to_vec();
                let target: Vec<HexCoord> = ccw_flank(gl).to_vec();
                let mut blocked = flank_set(g1);
                blocked.extend(flank_set(gl));
                for h in seeds.iter().chain(&target) {
                    blocked.remove(h);
                }
                let sector = self.sector(&seeds, &blocked);
                hexes.extend(self.midline_collar(&sector));
            }
        }
        Ok(GoodSet::from_hexes(hexes, cfg))
    }

    /// The quasi-good event (half-plane setting): each half of the double
    /// layer separately shows `j-1` well-separated crossing interfaces with
    /// counterclockwise-alternating strip colors starting red, the wall
    /// connection clauses hold in each half, and the `j` strips of the two
    /// halves are linked by same-colored paths across the double layer.
    pub fn quasi_good(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let (rin, rout) = match (&self.sub_in, &self.sub_out) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(ArmlabError::Invalid(
                    "quasi-good event is defined for the half-plane setting".into(),
                ))
            }
        };
        let j = self.spec.j;
        let check_ring = |ring: &Ring, quality_at_inner: bool| -> Result<Option<Vec<Chain>>, ArmlabError> {
            let chains = ring.crossing_chains(cfg)?;
            if chains.len() != j - 1 {
                return Ok(None);
            }
            for (k, ch) in chains.iter().enumerate() {
                let want = if k % 2 == 0 { Color::Red } else { Color::Blue };
                if cw_color(ch) != want {
                    return Ok(None);
                }
            }
            let (pts, v): (Vec<(f64, f64)>, f64) = if quality_at_inner {
                (chains.iter().map(inner_endpoint).collect(), ring.r_in)
            } else {
                (chains.iter().map(outer_endpoint).collect(), ring.r_out)
            };
            if !well_separated(quality(&pts, v, true), j) {
                return Ok(None);
            }
            Ok(Some(chains))
        };
        let chains_in = match check_ring(rin, true)? {
            Some(c) => c,
            None => return Ok(false),
        };
        let chains_out = match check_ring(rout, false)? {
            Some(c) => c,
            None => return Ok(false),
        };
        // Wall connection clauses inside each half, mirroring the good event.
        let c_last = self.last_color();
        let r1 = self.spec.r_i.as_f64();
        for (chains, inner_layer, lo, hi) in [
            (&chains_in, true, r1, 2.0 * r1),
            (&chains_out, false, 2.0 * r1, 4.0 * r1),
        ] {
            let g1 = &chains[0];
            let gl = chains.last().unwrap();
            if self
                .connector(
                    cfg,
                    Color::Red,
                    inner_layer,
                    &self.axis_interval(true, lo, hi, inner_layer),
                    flank(g1, Color::Red),
                )
                .is_empty()
                || self
                    .connector(
                        cfg,
                        c_last,
                        inner_layer,
                        &self.axis_interval(false, lo, hi, inner_layer),
                        flank(gl, c_last),
                    )
                    .is_empty()
            {
                return Ok(false);
            }
        }
        // Strip-to-strip links across the whole double layer.
        let strip_flanks = |chains: &[Chain], k: usize| -> Vec<HexCoord> {
            let mut v = Vec::new();
            if k > 0 {
                v.extend_from_slice(ccw_flank(&chains[k - 1]));
            }
            if k < j - 1 {
                v.extend_from_slice(cw_flank(&chains[k]));
            }
            v
        };
        for k in 0..j {
            let c = if k % 2 == 0 { Color::Red } else { Color::Blue };
            let seeds = strip_flanks(&chains_out, k);
            let targets: HashSet<HexCoord> = strip_flanks(&chains_in, k).into_iter().collect();
            let linked = reach(seeds, |h| {
                self.ring.region.contains(h) && cfg.color_of(h) == Some(c)
            });
            if !targets.iter().any(|h| linked.contains(h)) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// The neighbor-adjacency event for the double-layer interfaces.
    pub fn w_event(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let chains = self.ring.crossing_chains(cfg)?;
        Ok(chains.windows(2).all(|w| chains_adjacent(&w[0], &w[1])))
    }
}

// ---------------------------------------------------------------------------
// Conditional sampling and exact laws
// ---------------------------------------------------------------------------

/// Exact rejection sampler for `P[. | event]` on `domain`.
pub fn conditional_sample(
    event: &ArmEventSpec,
    domain: &Arc<DiscDomain>,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<(Configuration, u64), ArmlabError> {
    let compiled = event.compile(domain)?;
    conditional_sample_compiled(&compiled, domain, rng, max_attempts)
}

fn conditional_sample_compiled(
    compiled: &CompiledEvent,
    domain: &Arc<DiscDomain>,
    rng: &mut RngStream,
    max_attempts: u64,
) -> Result<(Configuration, u64), ArmlabError> {
    let mut cfg = Configuration::all_blue(Arc::clone(domain));
    for attempt in 1..=max_attempts {
        cfg.resample(rng);
        if compiled.detect(&cfg)? {
            return Ok((cfg, attempt));
        }
    }
    Err(ArmlabError::Invalid(format!(
        "conditional sampler budget exhausted after {max_attempts} attempts \
         for {} on {}",
        compiled.spec.spec_string(),
        domain.spec_string()
    )))
}

/// Exact conditional law of the good set given an arm event, by enumeration.
/// The empty set carries the mass of event configurations where the good
/// event fails.
pub fn good_set_law(
    domain: &Arc<DiscDomain>,
    event: &ArmEventSpec,
    engine: &LayerEngine,
) -> Result<Vec<(GoodSet, Prob)>, ArmlabError> {
    if domain.len() > LAW_CAP {
        return Err(ArmlabError::Invalid(format!(
            "good_set_law needs <= {LAW_CAP} hexagons, domain has {}",
            domain.len()
        )));
    }
    let compiled = event.compile(domain)?;
    let mut counts: HashMap<GoodSet, u64> = HashMap::new();
    let mut event_total = 0u64;
    let mut err = None;
    for_each_config(domain, LAW_CAP, |cfg| {
        if err.is_some() {
            return;
        }
        let r = (|| -> Result<(), ArmlabError> {
            if compiled.detect(cfg)? {
                event_total += 1;
                *counts.entry(engine.good_set(cfg)?).or_insert(0) += 1;
            }
            Ok(())
        })();
        if let Err(e) = r {
            err = Some(e);
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    if event_total == 0 {
        return Err(ArmlabError::Invalid("conditioning event has zero mass".into()));
    }
    let mut law: Vec<(GoodSet, Prob)> = counts
        .into_iter()
        .map(|(s, c)| (s, Prob::new(c, event_total)))
        .collect();
    law.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));
    Ok(law)
}

// ---------------------------------------------------------------------------
// Maximal coupling
// ---------------------------------------------------------------------------

pub struct MaxCoupling {
    /// Joint atoms `(value_1, value_2, mass)`.
    pub table: Vec<(GoodSet, GoodSet, Prob)>,
    /// Probability of matching on a common nonempty good set.
    pub success: Prob,
}

/// The maximal coupling of two finite good-set laws: diagonal mass
/// `min(p1, p2)` on every atom, residuals coupled independently. Success
/// counts matches on nonempty values only.
pub fn maximal_coupling(
    law1: &[(GoodSet, Prob)],
    law2: &[(GoodSet, Prob)],
) -> Result<MaxCoupling, ArmlabError> {
    let one = Prob::new(1, 1);
    let zero = Prob::new(0, 1);
    for (name, law) in [("law1", law1), ("law2", law2)] {
        let total: Prob = law.iter().map(|(_, p)| *p).sum();
        if total != one {
            return Err(ArmlabError::Invalid(format!(
                "{name} is not normalized (total {total})"
            )));
        }
    }
    let m1: HashMap<&GoodSet, Prob> = law1.iter().map(|(s, p)| (s, *p)).collect();
    let m2: HashMap<&GoodSet, Prob> = law2.iter().map(|(s, p)| (s, *p)).collect();
    let mut universe: Vec<&GoodSet> = m1.keys().chain(m2.keys()).copied().collect();
    universe.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    universe.dedup();
    let mut table = Vec::new();
    let mut success = zero;
    let mut matched = zero;
    let mut res1 = Vec::new();
    let mut res2 = Vec::new();
    for s in &universe {
        let p1 = m1.get(*s).copied().unwrap_or(zero);
        let p2 = m2.get(*s).copied().unwrap_or(zero);
        let d = p1.min(p2);
        if d > zero {
            table.push(((*s).clone(), (*s).clone(), d));
            matched += d;
            if !s.is_empty() {
                success += d;
            }
        }
        if p1 > d {
            res1.push((*s, p1 - d));
        }
        if p2 > d {
            res2.push((*s, p2 - d));
        }
    }
    let leftover = one - matched;
    if leftover > zero {
        for (s1, q1) in &res1 {
            for (s2, q2) in &res2 {
                table.push(((*s1).clone(), (*s2).clone(), *q1 * *q2 / leftover));
            }
        }
    }
    Ok(MaxCoupling { table, success })
}

// ---------------------------------------------------------------------------
// Layered coupling experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LayerReport {
    pub layer_index: u32,
    pub r_i: i64,
    pub overlap: f64,
    pub overlap_stderr: f64,
    pub empty_mass_1: f64,
    pub empty_mass_2: f64,
    pub cumulative_failure: f64,
    /// Fraction of law-1 samples whose double layer carries more than
    /// `K_TRUNC` crossing interfaces.
    pub k_trunc_rate: f64,
    /// Whether the layer was resolved exactly (enumeration) or by nested
    /// Monte Carlo.
    pub exact: bool,
}

#[derive(Clone, Debug)]
pub struct CouplingReport {
    pub rows: Vec<LayerReport>,
    /// Upper bound on the probability that no layer couples.
    pub failure_bound: f64,
    pub failure_stderr: f64,
}

pub const COUPLING_CSV_HEADER: &str =
    "layer_index,overlap_estimate,overlap_stderr,empty_mass_1,empty_mass_2,cumulative_failure_bound";

pub fn coupling_csv(report: &CouplingReport) -> String {
    let mut out = String::from(COUPLING_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.layer_index, r.overlap, r.overlap_stderr, r.empty_mass_1, r.empty_mass_2,
            r.cumulative_failure
        ));
    }
    out
}

/// The two conditional laws coupled per setting: inward half-plane coupling
/// compares `H_j(r,R)` with `H_j(r,mR)`; plane-odd compares `A_j(r,R)` with
/// `X_j(r,R)`; plane-even compares `Y_j(r,R)` with `Y_j(r,mR)`.
fn coupled_events(
    j: usize,
    r: i64,
    big_r: i64,
    m: i64,
    setting: LayerSetting,
) -> Result<(ArmEventSpec, ArmEventSpec), ArmlabError> {
    let (a, b) = match setting {
        LayerSetting::Half => (
            format!("H:{j}:{r}:{big_r}"),
            format!("H:{j}:{r}:{}", m * big_r),
        ),
        LayerSetting::PlaneOdd => (format!("A:{j}:{r}:{big_r}"), format!("X:{j}:{r}:{big_r}")),
        LayerSetting::PlaneEven => (
            format!("Y:{j}:{r}:{big_r}"),
            format!("Y:{j}:{r}:{}", m * big_r),
        ),
    };
    Ok((ArmEventSpec::parse(&a)?, ArmEventSpec::parse(&b)?))
}

struct Law {
    compiled: Arc<CompiledEvent>,
    /// Cheap necessary event (same arms stopped at `4r`) used to skip the
    /// full detector on most rejected attempts.
    gate: Option<Arc<CompiledEvent>>,
    domain: Arc<DiscDomain>,
}

impl Law {
    fn build(spec: &ArmEventSpec, dom: &Arc<DiscDomain>) -> Result<Law, ArmlabError> {
        let gate_r = 4 * spec.r.num / spec.r.den;
        let gate = if spec.colors == crate::arms::ColorSpec::Alternating
            && spec.big_r.den == 1
            && gate_r > 0
            && gate_r < spec.big_r.num
        {
            let gspec = ArmEventSpec::parse(&format!(
                "{}:{}:{}:{}",
                spec.family.letter(),
                spec.j,
                spec.r,
                gate_r
            ))?;
            Some(gspec.compile(dom)?)
        } else {
            None
        };
        Ok(Law {
            compiled: spec.compile(dom)?,
            gate,
            domain: Arc::clone(dom),
        })
    }

    /// One exact conditional draw (the gate is implied by the event, so the
    /// accepted law is unchanged).
    fn draw(&self, rng: &mut RngStream, cfg: &mut Configuration) -> Result<(), ArmlabError> {
        for _ in 0..(1u64 << 24) {
            cfg.resample(rng);
            if let Some(g) = &self.gate {
                if !g.detect(cfg)? {
                    continue;
                }
            }
            if self.compiled.detect(cfg)? {
                return Ok(());
            }
        }
        Err(ArmlabError::Invalid(format!(
            "conditional sampler budget exhausted for {}",
            self.compiled.spec.spec_string()
        )))
    }
}

/// `n` conditional draws from one law, reduced to the empirical good-set
/// distribution of every layer at once (plus per-layer truncation counts).
fn empirical_laws(
    law: &Law,
    engines: &[LayerEngine],
    n: u64,
    seed: u64,
) -> Result<(Vec<HashMap<GoodSet, u64>>, Vec<u64>), ArmlabError> {
    const BATCH: u64 = 64;
    let batches = n.div_ceil(BATCH);
    let partial: Vec<(Vec<HashMap<GoodSet, u64>>, Vec<u64>)> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<(Vec<HashMap<GoodSet, u64>>, Vec<u64>), ArmlabError> {
            let mut maps = vec![HashMap::new(); engines.len()];
            let mut trunc = vec![0u64; engines.len()];
            let mut cfg = Configuration::all_blue(Arc::clone(&law.domain));
            let lo = b * BATCH;
            let hi = (lo + BATCH).min(n);
            for t in lo..hi {
                let mut rng = RngStream::new(seed, t);
                law.draw(&mut rng, &mut cfg)?;
                for (k, eng) in engines.iter().enumerate() {
                    if eng.crossing_count(&cfg)? > K_TRUNC {
                        trunc[k] += 1;
                    }
                    *maps[k].entry(eng.good_set(&cfg)?).or_insert(0) += 1;
                }
            }
            Ok((maps, trunc))
        })
        .collect::<Result<_, _>>()?;
    let mut maps = vec![HashMap::new(); engines.len()];
    let mut trunc = vec![0u64; engines.len()];
    for (pm, pt) in partial {
        for (k, m) in pm.into_iter().enumerate() {
            for (s, c) in m {
                *maps[k].entry(s).or_insert(0) += c;
            }
            trunc[k] += pt[k];
        }
    }
    Ok((maps, trunc))
}

/// Plug-in overlap of two empirical good-set laws: `sum_S min(p1(S), p2(S))`
/// over every atom, the empty set included.
fn plugin_overlap(m1: &HashMap<GoodSet, u64>, m2: &HashMap<GoodSet, u64>, n: u64) -> f64 {
    let mut agree = 0u64;
    for (s, &c1) in m1 {
        if let Some(&c2) = m2.get(s) {
            agree += c1.min(c2);
        }
    }
    agree as f64 / n as f64
}

/// Layer radii `r_i = 2^i` used for a pair `(r, R)`: layers whose double
/// annulus fits strictly inside `(r, R)` with a factor-two margin at the
/// outer end.
pub fn layer_radii(r: i64, big_r: i64) -> Vec<i64> {
    let mut v = Vec::new();
    let mut ri = 1i64;
    while 8 * ri <= big_r {
        if ri >= r {
            v.push(ri);
        }
        ri *= 2;
    }
    v
}

/// The layered coupling experiment: per-layer total-variation overlap of
/// the two conditional good-set laws, resolved exactly on enumerable
/// instances and by the plug-in estimator over conditional samples
/// otherwise; overall failure bounded by the product of per-layer miss
/// probabilities.
pub fn layered_coupling_experiment(
    j: usize,
    r: i64,
    big_r: i64,
    m: i64,
    setting: LayerSetting,
    n_samples: u64,
    seed: u64,
) -> Result<CouplingReport, ArmlabError> {
    if big_r < 4 * r {
        return Err(ArmlabError::Invalid("layered coupling needs R >= 4r".into()));
    }
    let (spec1, spec2) = coupled_events(j, r, big_r, m, setting)?;
    let dom1 = Arc::new(DiscDomain::parse(&crate::estimate::default_ambient_spec(&spec1))?);
    let dom2 = Arc::new(DiscDomain::parse(&crate::estimate::default_ambient_spec(&spec2))?);
    let radii = layer_radii(r, big_r);
    let engines: Vec<LayerEngine> = radii
        .iter()
        .map(|&ri| LayerEngine::new(LayerSpec::new(j, Radius::from_int(ri), setting)?))
        .collect::<Result<_, _>>()?;
    let micro = dom1.len() <= LAW_CAP && dom2.len() <= LAW_CAP;
    let per_layer: Vec<(f64, f64, f64, f64, f64)> = if micro {
        engines
            .iter()
            .map(|eng| -> Result<(f64, f64, f64, f64, f64), ArmlabError> {
                let l1 = good_set_law(&dom1, &spec1, eng)?;
                let l2 = good_set_law(&dom2, &spec2, eng)?;
                let as_f64 = |p: &Prob| *p.numer() as f64 / *p.denom() as f64;
                let m2: HashMap<&GoodSet, f64> = l2.iter().map(|(s, p)| (s, as_f64(p))).collect();
                let overlap: f64 = l1
                    .iter()
                    .map(|(s, p)| as_f64(p).min(m2.get(s).copied().unwrap_or(0.0)))
                    .sum();
                let emass = |law: &[(GoodSet, Prob)]| -> f64 {
                    law.iter()
                        .filter(|(s, _)| s.is_empty())
                        .map(|(_, p)| as_f64(p))
                        .sum()
                };
                Ok((overlap, 0.0, emass(&l1), emass(&l2), 0.0))
            })
            .collect::<Result<_, _>>()?
    } else {
        let l1 = Law::build(&spec1, &dom1)?;
        let l2 = Law::build(&spec2, &dom2)?;
        let (maps1, trunc1) = empirical_laws(&l1, &engines, n_samples, seed)?;
        let (maps2, _) = empirical_laws(&l2, &engines, n_samples, seed ^ 0x9E3779B97F4A7C15)?;
        (0..engines.len())
            .map(|k| {
                let o = plugin_overlap(&maps1[k], &maps2[k], n_samples);
                let nf = n_samples as f64;
                let se = (o * (1.0 - o) * 2.0 / nf).sqrt();
                let emass = |m: &HashMap<GoodSet, u64>| {
                    m.get(&GoodSet::empty()).copied().unwrap_or(0) as f64 / nf
                };
                (o, se, emass(&maps1[k]), emass(&maps2[k]), trunc1[k] as f64 / nf)
            })
            .collect()
    };
    let mut rows = Vec::new();
    let mut failure = 1.0f64;
    let mut fail_rel_var = 0.0f64;
    for (idx, ((overlap, se, e1, e2, trunc), ri)) in
        per_layer.into_iter().zip(radii).enumerate()
    {
        failure *= 1.0 - overlap;
        if overlap < 1.0 {
            fail_rel_var += (se / (1.0 - overlap)).powi(2);
        }
        rows.push(LayerReport {
            layer_index: idx as u32,
            r_i: ri,
            overlap,
            overlap_stderr: se,
            empty_mass_1: e1,
            empty_mass_2: e2,
            cumulative_failure: failure,
            k_trunc_rate: trunc,
            exact: micro,
        });
    }
    Ok(CouplingReport {
        rows,
        failure_bound: failure,
        failure_stderr: failure * fail_rel_var.sqrt(),
    })
}
