//! Arm-event detectors and the exponent/pattern arithmetic.
//!
//! Seven event families over a scale pair (r, R):
//!   B  - half-plane arms C_r+ -> C_R+ in the semi-annulus, alternating colors
//!   H  - half-plane arms [-r,r] -> C_R+ in the half-disk, alternating colors
//!   P  - plane arms C_r -> C_R, not all one color, order free
//!   X  - plane arms with the prescribed color pattern and landing arcs
//!   Y  - X plus same-cluster connections between specific arm pairs
//!   A  - X without the landing constraints
//!   Z  - Y without the landing constraints
//!
//! Every family ships two detectors. `detect` is the fast path: it walks the
//! red/blue interface chains of the region and reads the event off the chain
//! counts, strip colors and (for plane patterns) a strip-assignment search.
//! `detect_oracle` never touches an interface: it floods monochromatic
//! clusters and reasons about crossing clusters directly. The two must agree
//! on every configuration; the enumeration tests hold them to that.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex, OnceLock};

use num_rational::Ratio;

use crate::error::ArmlabError;
use crate::explore::Tracer;
use crate::lattice::{snap, ArcName, DiscDomain, DomainKind, DualVertex, HexCoord, OutClass, Radius, SQRT3};
use crate::percolation::{Color, Configuration};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Family {
    B,
    H,
    P,
    A,
    X,
    Y,
    Z,
}

impl Family {
    pub fn letter(self) -> char {
        match self {
            Family::B => 'B',
            Family::H => 'H',
            Family::P => 'P',
            Family::A => 'A',
            Family::X => 'X',
            Family::Y => 'Y',
            Family::Z => 'Z',
        }
    }

    pub fn is_half_plane(self) -> bool {
        matches!(self, Family::B | Family::H)
    }
}

/// Which outer-circle arc an arm must land on (plane prescribed patterns).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LandingArc {
    /// ccw from R*b = R*(-1/2, sqrt3/2) to R*a = R*(0,-1).
    Ba,
    /// ccw from R*a to R*c = R*(1/2, sqrt3/2).
    Ac,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum ColorSpec {
    /// red, blue, red, ... in ccw order (the paper's default).
    Alternating,
    /// An explicit alternating sequence (either starting color).
    Explicit(Vec<Color>),
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ArmEventSpec {
    pub family: Family,
    pub j: usize,
    pub r: Radius,
    pub big_r: Radius,
    pub colors: ColorSpec,
}

impl ArmEventSpec {
    /// Grammar: `B:j:r:R[:colors]` etc., colors over {r,b}, alternating only.
    pub fn parse(s: &str) -> Result<ArmEventSpec, ArmlabError> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() < 4 || parts.len() > 5 {
            return Err(ArmlabError::Parse(format!("bad event spec `{s}`")));
        }
        let family = match parts[0] {
            "B" => Family::B,
            "H" => Family::H,
            "P" => Family::P,
            "A" => Family::A,
            "X" => Family::X,
            "Y" => Family::Y,
            "Z" => Family::Z,
            f => return Err(ArmlabError::Parse(format!("unknown family `{f}`"))),
        };
        let j: usize = parts[1]
            .parse()
            .map_err(|_| ArmlabError::Parse(format!("bad arm count in `{s}`")))?;
        let r = Radius::parse(parts[2])?;
        let big_r = Radius::parse(parts[3])?;
        let colors = if parts.len() == 5 {
            if !family.is_half_plane() {
                return Err(ArmlabError::Parse(
                    "explicit color sequences only apply to B and H".into(),
                ));
            }
            let seq: Vec<Color> = parts[4]
                .chars()
                .map(Color::parse)
                .collect::<Result<_, _>>()?;
            if seq.len() != j {
                return Err(ArmlabError::Parse(format!(
                    "color sequence length {} != j = {j}",
                    seq.len()
                )));
            }
            for w in seq.windows(2) {
                if w[0] == w[1] {
                    return Err(ArmlabError::Parse(
                        "only alternating color sequences are supported".into(),
                    ));
                }
            }
            ColorSpec::Explicit(seq)
        } else {
            ColorSpec::Alternating
        };
        let spec = ArmEventSpec {
            family,
            j,
            r,
            big_r,
            colors,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ArmlabError> {
        if self.j == 0 {
            return Err(ArmlabError::Parse("j must be positive".into()));
        }
        if !self.family.is_half_plane() && self.j < 2 {
            return Err(ArmlabError::Parse(format!(
                "family {} needs j >= 2",
                self.family.letter()
            )));
        }
        let lt = (self.r.num as i128 * self.big_r.den as i128)
            < (self.big_r.num as i128 * self.r.den as i128);
        if !lt {
            return Err(ArmlabError::Parse(format!(
                "need r < R, got {} >= {}",
                self.r, self.big_r
            )));
        }
        Ok(())
    }

    pub fn spec_string(&self) -> String {
        let base = format!(
            "{}:{}:{}:{}",
            self.family.letter(),
            self.j,
            self.r,
            self.big_r
        );
        match &self.colors {
            ColorSpec::Alternating => base,
            ColorSpec::Explicit(seq) => {
                let cs: String = seq.iter().map(|c| c.letter()).collect();
                format!("{base}:{cs}")
            }
        }
    }

    /// Domain spec of the region the event lives in.
    pub fn region_spec(&self) -> String {
        match self.family {
            Family::B => format!("semiann:{}:{}", self.r, self.big_r),
            Family::H => format!("half:{}", self.big_r),
            _ => format!("ann:{}:{}", self.r, self.big_r),
        }
    }

    /// Alternating color sequence for the half-plane families.
    fn sigma(&self) -> Vec<Color> {
        match &self.colors {
            ColorSpec::Explicit(seq) => seq.clone(),
            ColorSpec::Alternating => (0..self.j)
                .map(|i| if i % 2 == 0 { Color::Red } else { Color::Blue })
                .collect(),
        }
    }

    pub fn compile(&self, ambient: &Arc<DiscDomain>) -> Result<Arc<CompiledEvent>, ArmlabError> {
        compile_cached(self, ambient)
    }

    /// One-shot detection; compiles (with caching) under the hood.
    pub fn detect(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        self.compile(&cfg.domain)?.detect(cfg)
    }

    pub fn detect_oracle(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        self.compile(&cfg.domain)?.detect_oracle(cfg)
    }
}

// ---------------------------------------------------------------------------
// Exponent / pattern arithmetic
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct PatternSplit {
    pub l: usize,
    pub r_count: usize,
}

/// Landing split of the prescribed pattern: l(j) arms on arc ba, r(j) on ac.
pub fn pattern_split(j: usize) -> Result<PatternSplit, ArmlabError> {
    if j < 2 {
        return Err(ArmlabError::Invalid("pattern split needs j >= 2".into()));
    }
    let l = j / 4 + (j + 1) / 4 + 1;
    let r_count = (j + 2) / 4 + (j + 3) / 4 - 1;
    debug_assert_eq!(l + r_count, j);
    Ok(PatternSplit { l, r_count })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Setting {
    Half,
    Plane,
}

/// The arm exponents: beta_j = j(j+1)/6 (half-plane), alpha_j = (j^2-1)/12
/// (plane), as exact rationals.
pub fn exponent(setting: Setting, j: usize) -> Result<Ratio<i64>, ArmlabError> {
    let j = j as i64;
    match setting {
        Setting::Half => {
            if j < 1 {
                return Err(ArmlabError::Invalid("half-plane exponent needs j >= 1".into()));
            }
            Ok(Ratio::new(j * (j + 1), 6))
        }
        Setting::Plane => {
            if j < 2 {
                return Err(ArmlabError::Invalid("plane exponent needs j >= 2".into()));
            }
            Ok(Ratio::new(j * j - 1, 12))
        }
    }
}

/// The combinatorial constant D(j): 1 for odd j, j/2 for j = 2 mod 4,
/// j/4 for j = 0 mod 4.
pub fn d_constant(j: usize) -> Result<usize, ArmlabError> {
    if j < 2 {
        return Err(ArmlabError::Invalid("d_constant needs j >= 2".into()));
    }
    Ok(match j % 4 {
        1 | 3 => 1,
        2 => j / 2,
        _ => j / 4,
    })
}

/// One arm slot of a plane pattern, in ccw order starting just past the
/// marked point a = R*(0,-1).
#[derive(Clone, Copy, Debug)]
pub struct PatternEntry {
    pub color: Color,
    pub arc: Option<LandingArc>,
}

/// The ccw pattern for the plane families: the r(j) right arms (colors blue,
/// red, ... counted ccw from a, landing on ac) followed by the l(j) left arms
/// met in reverse (colors red, blue, ... counted cw from a, landing on ba).
/// Connection pairs are the (left k+1, right k) pairs of the Y/Z events, as
/// 0-based entry indices.
pub fn plane_pattern(
    family: Family,
    j: usize,
) -> Result<(Vec<PatternEntry>, Vec<(usize, usize)>), ArmlabError> {
    let split = pattern_split(j)?;
    let (l, r) = (split.l, split.r_count);
    let constrained = matches!(family, Family::X | Family::Y);
    let mut entries = Vec::with_capacity(j);
    // Right arms, ccw from a: blue for odd k.
    for k in 1..=r {
        entries.push(PatternEntry {
            color: if k % 2 == 1 { Color::Blue } else { Color::Red },
            arc: constrained.then_some(LandingArc::Ac),
        });
    }
    // Left arms, met in reverse cw order (left_l first): red for odd m.
    for m in (1..=l).rev() {
        entries.push(PatternEntry {
            color: if m % 2 == 1 { Color::Red } else { Color::Blue },
            arc: constrained.then_some(LandingArc::Ba),
        });
    }
    let mut pairs = Vec::new();
    if matches!(family, Family::Y | Family::Z) {
        for k in 1..=(l.saturating_sub(1)).min(r) {
            // left (k+1)-th is entry j-k-1, right k-th is entry k-1.
            pairs.push((j - k - 1, k - 1));
        }
    }
    Ok((entries, pairs))
}

// ---------------------------------------------------------------------------
// Compiled events
// ---------------------------------------------------------------------------

/// Precomputed geometry for repeated detection of one event over one ambient
/// domain: the region, its tracer, boundary-touch tables and pattern data.
pub struct CompiledEvent {
    pub spec: ArmEventSpec,
    pub region: Arc<DiscDomain>,
    tracer: Tracer,
    /// Region hexagons touching the arm source (C_r+/[-r,r]/C_r).
    src_touch: Vec<bool>,
    /// Minimal outer-loop edge index per region hexagon; MAX if none.
    outer_rank: Vec<u32>,
    /// Landing flags per region hexagon: bit 0 = arc ba, bit 1 = arc ac.
    arc_tag: Vec<u8>,
    entries: Vec<PatternEntry>,
    pairs: Vec<(usize, usize)>,
}

fn compile_cached(
    spec: &ArmEventSpec,
    ambient: &Arc<DiscDomain>,
) -> Result<Arc<CompiledEvent>, ArmlabError> {
    static CACHE: OnceLock<Mutex<HashMap<(String, String), Arc<CompiledEvent>>>> = OnceLock::new();
    let key = (spec.spec_string(), ambient.spec_string().to_string());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(ce) = cache.lock().unwrap().get(&key) {
        return Ok(Arc::clone(ce));
    }
    let ce = Arc::new(CompiledEvent::build(spec.clone(), ambient)?);
    cache
        .lock()
        .unwrap()
        .insert(key, Arc::clone(&ce));
    Ok(ce)
}

impl CompiledEvent {
    fn build(spec: ArmEventSpec, ambient: &Arc<DiscDomain>) -> Result<CompiledEvent, ArmlabError> {
        let region = Arc::new(DiscDomain::parse(&spec.region_spec())?);
        for &h in &region.hexes {
            if !ambient.contains(h) {
                return Err(ArmlabError::Invalid(format!(
                    "domain {} does not contain the event region {}",
                    ambient.spec_string(),
                    region.spec_string()
                )));
            }
        }
        if spec.family == Family::H && ambient.kind != DomainKind::HalfDisk {
            return Err(ArmlabError::Invalid(
                "H events need a half-disk ambient domain".into(),
            ));
        }
        let tracer = Tracer::new(Arc::clone(&region), ArcName::Outer)?;
        let n = region.len();
        let mut src_touch = vec![false; n];
        let mut outer_rank = vec![u32::MAX; n];
        let mut arc_tag = vec![0u8; n];
        // Outer edges in loop order, plus source marks.
        let mut outer_edges = Vec::new();
        for lp in &region.loops {
            for e in lp {
                let idx = region.idx(e.in_hex).expect("boundary in-hex") as usize;
                match e.arc {
                    ArcName::Outer => outer_edges.push((e.from, idx)),
                    ArcName::Inner => src_touch[idx] = true,
                    _ => {}
                }
            }
        }
        for (rank, &(_, idx)) in outer_edges.iter().enumerate() {
            outer_rank[idx] = outer_rank[idx].min(rank as u32);
        }
        let (rn, rd) = (spec.r.num, spec.r.den);
        if spec.family == Family::H {
            // Sources: row hexagons with a lower corner in [-r, r].
            for (i, &h) in region.hexes.iter().enumerate() {
                if h.b != 0 {
                    continue;
                }
                let a2 = 2 * h.a as i64;
                // corners at x6 = 6a-3, 6a, 6a+3; |x| <= r iff |2a| <= 2r+1
                if a2.abs() * rd <= 2 * rn + rd {
                    src_touch[i] = true;
                }
            }
        }
        // Landing arcs for the prescribed plane patterns.
        let (entries, pairs) = if spec.family.is_half_plane() || spec.family == Family::P {
            (Vec::new(), Vec::new())
        } else {
            plane_pattern(spec.family, spec.j)?
        };
        if entries.iter().any(|e| e.arc.is_some()) {
            let verts: Vec<DualVertex> = outer_edges.iter().map(|&(v, _)| v).collect();
            let rf = spec.big_r.as_f64();
            let va = snap(&verts, (0.0, -rf));
            let vb = snap(&verts, (-0.5 * rf, rf * SQRT3 / 2.0));
            let vc = snap(&verts, (0.5 * rf, rf * SQRT3 / 2.0));
            let pos = |v: DualVertex| verts.iter().position(|&x| x == v).unwrap();
            let (ia, ib, ic) = (pos(va), pos(vb), pos(vc));
            let in_ccw = |i: usize, from: usize, to: usize| {
                // edge index i lies on the ccw stretch [from, to)
                if from <= to {
                    i >= from && i < to
                } else {
                    i >= from || i < to
                }
            };
            for (i, &(_, idx)) in outer_edges.iter().enumerate() {
                if in_ccw(i, ib, ia) {
                    arc_tag[idx] |= 1; // ba
                }
                if in_ccw(i, ia, ic) {
                    arc_tag[idx] |= 2; // ac
                }
            }
        }
        Ok(CompiledEvent {
            spec,
            region,
            tracer,
            src_touch,
            outer_rank,
            arc_tag,
            entries,
            pairs,
        })
    }

    #[inline]
    fn ridx(&self, h: HexCoord) -> Option<usize> {
        self.region.idx(h).map(|i| i as usize)
    }

    fn color_in_region(&self, cfg: &Configuration, h: HexCoord) -> Option<Color> {
        if self.region.contains(h) {
            cfg.color_of(h)
        } else {
            None
        }
    }

    fn lands(&self, h: HexCoord, arc: Option<LandingArc>) -> bool {
        match self.ridx(h) {
            None => false,
            Some(i) => match arc {
                None => self.outer_rank[i] != u32::MAX,
                Some(LandingArc::Ba) => self.arc_tag[i] & 1 != 0,
                Some(LandingArc::Ac) => self.arc_tag[i] & 2 != 0,
            },
        }
    }

    pub fn detect(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        match self.spec.family {
            Family::B | Family::H => self.detect_half(cfg),
            Family::P => self.detect_p(cfg),
            _ => self.detect_plane(cfg),
        }
    }

    pub fn detect_oracle(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        match self.spec.family {
            Family::B | Family::H => self.oracle_half(cfg),
            Family::P => self.oracle_p(cfg),
            _ => self.oracle_plane(cfg),
        }
    }

    // -- fast path: interface chains --------------------------------------

    /// A chain counts as a crossing interface iff both of its flanks cross
    /// from the source boundary to the outer circle; endpoint-based rules go
    /// wrong exactly at the arc corners, flank-based ones do not. Returns
    /// (rank, cw-strip representative, cw-strip color) with the rank taken as
    /// the minimal outer rank over both flanks (this is the rank of the
    /// clockwise of the two flank clusters).
    fn chain_crossing(&self, ch: &crate::explore::Chain) -> Option<(usize, HexCoord, Color)> {
        let scan = |hexes: &[HexCoord]| -> (bool, u32, Option<HexCoord>) {
            let mut src = false;
            let mut rank = u32::MAX;
            let mut best = None;
            for &h in hexes {
                if let Some(i) = self.ridx(h) {
                    src |= self.src_touch[i];
                    if self.outer_rank[i] < rank {
                        rank = self.outer_rank[i];
                        best = Some(h);
                    }
                }
            }
            (src, rank, best)
        };
        let (lsrc, lrank, lbest) = scan(&ch.left_hexes);
        let (rsrc, rrank, rbest) = scan(&ch.right_hexes);
        if !(lsrc && rsrc && lrank != u32::MAX && rrank != u32::MAX) {
            return None;
        }
        // Left flank is the red side, right flank the blue side.
        if self.spec.family.is_half_plane() {
            // Linear order: cluster contact intervals along the outer arc are
            // disjoint and ordered, so the cw flank is the lower-ranked one.
            if lrank <= rrank {
                Some((lrank as usize, lbest.unwrap(), Color::Red))
            } else {
                Some((rrank as usize, rbest.unwrap(), Color::Blue))
            }
        } else {
            // Cyclic order: orient by the outer exit. A qualifying chain of
            // the annulus leaves through exactly one Beyond end; if that end
            // is the launch site the red flank sits clockwise of the chain,
            // otherwise the blue one does.
            let (v, red_cw) = if ch.start.class == OutClass::Beyond {
                (ch.start.vertex, true)
            } else {
                (ch.end.vertex, false)
            };
            let rank = self.tracer.arc_rank(v)?;
            if red_cw {
                Some((rank, *ch.left_hexes.first().unwrap(), Color::Red))
            } else {
                Some((rank, *ch.right_hexes.last().unwrap(), Color::Blue))
            }
        }
    }

    fn crossing_chains(
        &self,
        cfg: &Configuration,
    ) -> Result<Vec<(usize, HexCoord, Color)>, ArmlabError> {
        let chains = self.tracer.trace(cfg)?;
        let mut out = Vec::new();
        for ch in &chains {
            if let Some(x) = self.chain_crossing(ch) {
                out.push(x);
            }
        }
        out.sort_by_key(|&(rank, _, _)| rank);
        Ok(out)
    }

    fn detect_half(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let j = self.spec.j;
        let sigma = self.spec.sigma();
        let crossings = self.crossing_chains(cfg)?;
        let k = crossings.len();
        if k >= j {
            return Ok(true);
        }
        if k + 1 < j {
            return Ok(false);
        }
        // k = j - 1: the strip pattern is pinned; its first color decides.
        if k >= 1 {
            return Ok(crossings[0].2 == sigma[0]);
        }
        // j = 1 with no interface chain: no crossing of one color is fenced
        // off by the other, so a direct connectivity check settles the single
        // arm. (A four-arc duality shortcut is tempting but the corner
        // conventions of the boundary arcs admit draws, so it is unsound.)
        let c = sigma[0];
        Ok(self.color_crossing(cfg, c))
    }

    /// Is there a path of `color` hexagons from the source boundary to the
    /// outer circle?
    fn color_crossing(&self, cfg: &Configuration, color: Color) -> bool {
        let mut seen = vec![false; self.region.len()];
        let mut queue = VecDeque::new();
        for (i, &h) in self.region.hexes.iter().enumerate() {
            if self.src_touch[i] && cfg.color_of(h) == Some(color) {
                seen[i] = true;
                queue.push_back(h);
            }
        }
        while let Some(h) = queue.pop_front() {
            let i = self.ridx(h).unwrap();
            if self.outer_rank[i] != u32::MAX {
                return true;
            }
            for nb in h.neighbors() {
                if let Some(ni) = self.ridx(nb) {
                    if !seen[ni] && cfg.color_of(nb) == Some(color) {
                        seen[ni] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
        false
    }

    fn detect_p(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let j = self.spec.j;
        let count = |c: Color| {
            let allowed: HashSet<HexCoord> = self
                .region
                .hexes
                .iter()
                .copied()
                .filter(|&h| cfg.color_of(h) == Some(c))
                .collect();
            max_disjoint_paths(
                self,
                &allowed,
                &|i| self.src_touch[i],
                &|i| (self.outer_rank[i] != u32::MAX).then_some(0),
                &[j],
                j,
            )
        };
        let nr = count(Color::Red);
        if nr == 0 {
            return Ok(false);
        }
        let nb = count(Color::Blue);
        Ok(nb >= 1 && nr + nb >= j)
    }

    fn detect_plane(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let crossings = self.crossing_chains(cfg)?;
        let k = crossings.len();
        if k == 0 {
            return Ok(false);
        }
        // Each crossing chain contributes the strip clockwise of it; over all
        // chains that enumerates every strip of the cyclic decomposition.
        let mut strips = Vec::with_capacity(k);
        for &(rank, rep, color) in &crossings {
            strips.push(ClusterStrip {
                color,
                rep,
                rank,
                hexes: std::cell::OnceCell::new(),
            });
        }
        self.assign_arms(cfg, &strips)
    }

    // -- oracle: cluster floods -------------------------------------------

    /// All monochromatic clusters of the region that cross from the source
    /// boundary to the outer circle, with their minimal outer rank.
    fn crossing_clusters(&self, cfg: &Configuration) -> Result<Vec<ClusterStrip>, ArmlabError> {
        let n = self.region.len();
        let mut label: Vec<u32> = vec![u32::MAX; n];
        let mut clusters = Vec::new();
        for start in 0..n {
            if label[start] != u32::MAX {
                continue;
            }
            let h0 = self.region.hex_at(start as u32);
            let color = self
                .color_in_region(cfg, h0)
                .ok_or_else(|| ArmlabError::Geometry("configuration misses a region hexagon".into()))?;
            let id = clusters.len() as u32;
            let mut hexes = HashSet::new();
            let mut queue = VecDeque::new();
            label[start] = id;
            queue.push_back(h0);
            let mut has_src = false;
            let mut rank = u32::MAX;
            while let Some(h) = queue.pop_front() {
                hexes.insert(h);
                let i = self.ridx(h).unwrap();
                has_src |= self.src_touch[i];
                rank = rank.min(self.outer_rank[i]);
                for nb in h.neighbors() {
                    if let Some(ni) = self.ridx(nb) {
                        if label[ni] == u32::MAX && cfg.color_of(nb) == Some(color) {
                            label[ni] = id;
                            queue.push_back(nb);
                        }
                    }
                }
            }
            if has_src && rank != u32::MAX {
                clusters.push(ClusterStrip {
                    color,
                    rep: h0,
                    rank: rank as usize,
                    hexes: {
                        let c = std::cell::OnceCell::new();
                        let _ = c.set(hexes);
                        c
                    },
                });
            } else {
                clusters.push(ClusterStrip {
                    color,
                    rep: h0,
                    rank: usize::MAX,
                    hexes: std::cell::OnceCell::new(),
                });
            }
        }
        let mut out: Vec<ClusterStrip> =
            clusters.into_iter().filter(|c| c.rank != usize::MAX).collect();
        out.sort_by_key(|c| c.rank);
        Ok(out)
    }

    fn oracle_half(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let j = self.spec.j;
        let sigma = self.spec.sigma();
        let clusters = self.crossing_clusters(cfg)?;
        let t = clusters.len();
        // Crossing clusters alternate in color along the boundary; a length-j
        // alternating window with the right start color exists iff:
        Ok(t >= j && (t > j || clusters[0].color == sigma[0]))
    }

    fn oracle_p(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let j = self.spec.j;
        let clusters = self.crossing_clusters(cfg)?;
        let reds: Vec<&ClusterStrip> = clusters.iter().filter(|c| c.color == Color::Red).collect();
        let blues: Vec<&ClusterStrip> = clusters.iter().filter(|c| c.color == Color::Blue).collect();
        if reds.is_empty() || blues.is_empty() {
            return Ok(false);
        }
        if j == 2 {
            return Ok(true);
        }
        // Per-cluster disjoint-crossing counts, capped at j.
        let mut total = 0usize;
        for c in clusters.iter() {
            let hexes = c.hexes.get().expect("oracle clusters carry their hexes");
            total += max_disjoint_paths(
                self,
                hexes,
                &|i| self.src_touch[i],
                &|i| (self.outer_rank[i] != u32::MAX).then_some(0),
                &[j],
                j,
            );
            if total >= j {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn oracle_plane(&self, cfg: &Configuration) -> Result<bool, ArmlabError> {
        let clusters = self.crossing_clusters(cfg)?;
        self.assign_arms(cfg, &clusters)
    }

    // -- shared strip-assignment search ------------------------------------

    /// Try to place the pattern entries on the (cyclically ordered) strips:
    /// entries go ccw onto strictly advancing strips, colors must match, at
    /// most two entries per strip (adjacent same-color ones, via two disjoint
    /// crossings), landing arcs respected, connection pairs connected within
    /// B_R of the ambient domain.
    fn assign_arms(&self, cfg: &Configuration, strips: &[ClusterStrip]) -> Result<bool, ArmlabError> {
        let entries = &self.entries;
        let j = entries.len();
        let k = strips.len();
        if k == 0 || j == 0 {
            return Ok(false);
        }
        for start in 0..k {
            let order: Vec<&ClusterStrip> =
                (0..k).map(|t| &strips[(start + t) % k]).collect();
            let mut placed = vec![0usize; j];
            if self.assign_rec(cfg, &order, 0, 0, &mut placed)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn assign_rec(
        &self,
        cfg: &Configuration,
        order: &[&ClusterStrip],
        ei: usize,
        min_pos: usize,
        placed: &mut Vec<usize>,
    ) -> Result<bool, ArmlabError> {
        let entries = &self.entries;
        if ei == entries.len() {
            return self.check_pairs(cfg, order, placed);
        }
        for pos in min_pos..order.len() {
            let strip = order[pos];
            if strip.color != entries[ei].color {
                continue;
            }
            if self.strip_feasible_one(cfg, strip, entries[ei].arc) {
                placed[ei] = pos;
                if self.assign_rec(cfg, order, ei + 1, pos + 1, placed)? {
                    return Ok(true);
                }
            }
            // Doubled pair: the next entry shares this strip.
            if ei + 1 < entries.len()
                && entries[ei + 1].color == entries[ei].color
                && self.strip_feasible_two(cfg, strip, entries[ei].arc, entries[ei + 1].arc)
            {
                placed[ei] = pos;
                placed[ei + 1] = pos;
                if self.assign_rec(cfg, order, ei + 2, pos + 1, placed)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }

    fn check_pairs(
        &self,
        cfg: &Configuration,
        order: &[&ClusterStrip],
        placed: &[usize],
    ) -> Result<bool, ArmlabError> {
        for &(i1, i2) in &self.pairs {
            let (s1, s2) = (order[placed[i1]], order[placed[i2]]);
            if placed[i1] == placed[i2] {
                continue;
            }
            if !self.connected_in_ball(cfg, s1.color, s1.rep, s2.rep) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Same-color connectivity within B_R of the ambient domain.
    fn connected_in_ball(&self, cfg: &Configuration, color: Color, from: HexCoord, to: HexCoord) -> bool {
        let inside = |h: HexCoord| {
            cfg.domain.contains(h) && self.spec.big_r.contains_norm2(h.norm2())
        };
        if !inside(from) || !inside(to) {
            return false;
        }
        let mut seen = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(from);
        queue.push_back(from);
        while let Some(h) = queue.pop_front() {
            if h == to {
                return true;
            }
            for nb in h.neighbors() {
                if inside(nb) && cfg.color_of(nb) == Some(color) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        false
    }

    fn strip_cluster<'a>(&self, cfg: &Configuration, strip: &'a ClusterStrip) -> &'a HashSet<HexCoord> {
        strip.hexes.get_or_init(|| {
            let color = strip.color;
            let mut set = HashSet::new();
            let mut queue = VecDeque::new();
            set.insert(strip.rep);
            queue.push_back(strip.rep);
            while let Some(h) = queue.pop_front() {
                for nb in h.neighbors() {
                    if self.region.contains(nb)
                        && cfg.color_of(nb) == Some(color)
                        && set.insert(nb)
                    {
                        queue.push_back(nb);
                    }
                }
            }
            set
        })
    }

    fn strip_feasible_one(
        &self,
        cfg: &Configuration,
        strip: &ClusterStrip,
        arc: Option<LandingArc>,
    ) -> bool {
        if arc.is_none() {
            return true; // a crossing strip always provides one arm
        }
        self.strip_cluster(cfg, strip)
            .iter()
            .any(|&h| self.lands(h, arc))
    }

    fn strip_feasible_two(
        &self,
        cfg: &Configuration,
        strip: &ClusterStrip,
        a1: Option<LandingArc>,
        a2: Option<LandingArc>,
    ) -> bool {
        let hexes = self.strip_cluster(cfg, strip);
        let class_of = |i: usize| -> Option<usize> {
            let h = self.region.hex_at(i as u32);
            match (self.lands(h, a1), self.lands(h, a2)) {
                (true, _) if a1 == a2 => Some(0),
                (true, false) => Some(0),
                (false, true) => Some(1),
                (true, true) => Some(0), // either class; flow may reroute via cap
                _ => None,
            }
        };
        if a1 == a2 {
            return max_disjoint_paths(
                self,
                hexes,
                &|i| self.src_touch[i],
                &|i| class_of(i).map(|_| 0),
                &[2],
                2,
            ) >= 2;
        }
        // Distinct landing arcs: both classes must be served. Hexagons on
        // both arcs get a class each via a shared relay with capacity 2.
        let both = |i: usize| {
            let h = self.region.hex_at(i as u32);
            self.lands(h, a1) && self.lands(h, a2)
        };
        // Run the two-class flow twice with the ambiguous hexagons assigned
        // to either class; two runs cover both resolutions for unit demands.
        for flip in [false, true] {
            let got = max_disjoint_paths(
                self,
                hexes,
                &|i| self.src_touch[i],
                &|i| {
                    if both(i) {
                        Some(if flip { 1 } else { 0 })
                    } else {
                        let h = self.region.hex_at(i as u32);
                        if self.lands(h, a1) {
                            Some(0)
                        } else if self.lands(h, a2) {
                            Some(1)
                        } else {
                            None
                        }
                    }
                },
                &[1, 1],
                2,
            );
            if got >= 2 {
                return true;
            }
        }
        false
    }
}

/// A crossing strip/cluster: one monochromatic crossing component of the
/// region, keyed by a representative hexagon and its ccw boundary rank.
struct ClusterStrip {
    color: Color,
    rep: HexCoord,
    rank: usize,
    hexes: std::cell::OnceCell<HashSet<HexCoord>>,
}

// ---------------------------------------------------------------------------
// Vertex-disjoint path packing (unit-capacity max flow with sink classes)
// ---------------------------------------------------------------------------

/// Maximum number of hexagon-disjoint paths inside `allowed` from source
/// hexagons to classed sink hexagons, with per-class capacities; stops early
/// at `limit`. Region indices feed the predicates.
fn max_disjoint_paths(
    ce: &CompiledEvent,
    allowed: &HashSet<HexCoord>,
    is_src: &dyn Fn(usize) -> bool,
    sink_class: &dyn Fn(usize) -> Option<usize>,
    class_caps: &[usize],
    limit: usize,
) -> usize {
    // Node-split graph: S -> in(h) for sources, in(h) -> out(h) cap 1,
    // out(h) -> in(nb), out(h) -> class node, class -> T with class cap.
    let hexes: Vec<HexCoord> = {
        let mut v: Vec<HexCoord> = allowed.iter().copied().collect();
        v.sort();
        v
    };
    let n = hexes.len();
    let id: HashMap<HexCoord, usize> = hexes.iter().enumerate().map(|(i, &h)| (h, i)).collect();
    let ncls = class_caps.len();
    // node layout: 0..n in, n..2n out, 2n..2n+ncls class, S = 2n+ncls, T = +1
    let s = 2 * n + ncls;
    let t = s + 1;
    let mut graph = FlowGraph::new(t + 1);
    for (i, &h) in hexes.iter().enumerate() {
        let ri = match ce.ridx(h) {
            Some(r) => r,
            None => continue,
        };
        graph.add(i, n + i, 1);
        if is_src(ri) {
            graph.add(s, i, 1);
        }
        if let Some(c) = sink_class(ri) {
            if c < ncls {
                graph.add(n + i, 2 * n + c, 1);
            }
        }
        for nb in h.neighbors() {
            if let Some(&jx) = id.get(&nb) {
                graph.add(n + i, jx, 1);
            }
        }
    }
    for (c, &cap) in class_caps.iter().enumerate() {
        graph.add(2 * n + c, t, cap as i32);
    }
    graph.max_flow(s, t, limit as i32) as usize
}

struct FlowGraph {
    // edge list: (to, cap); reverse edge at idx ^ 1
    edges: Vec<(usize, i32)>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(n: usize) -> FlowGraph {
        FlowGraph {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add(&mut self, u: usize, v: usize, cap: i32) {
        self.adj[u].push(self.edges.len());
        self.edges.push((v, cap));
        self.adj[v].push(self.edges.len());
        self.edges.push((u, 0));
    }

    /// BFS augmenting paths, one unit at a time (all our caps are tiny).
    fn max_flow(&mut self, s: usize, t: usize, limit: i32) -> i32 {
        let mut flow = 0;
        while flow < limit {
            let mut prev: Vec<Option<usize>> = vec![None; self.adj.len()];
            let mut queue = VecDeque::new();
            queue.push_back(s);
            prev[s] = Some(usize::MAX);
            while let Some(u) = queue.pop_front() {
                if u == t {
                    break;
                }
                for &ei in &self.adj[u] {
                    let (v, cap) = self.edges[ei];
                    if cap > 0 && prev[v].is_none() {
                        prev[v] = Some(ei);
                        queue.push_back(v);
                    }
                }
            }
            if prev[t].is_none() {
                break;
            }
            let mut v = t;
            while v != s {
                let ei = prev[v].unwrap();
                self.edges[ei].1 -= 1;
                self.edges[ei ^ 1].1 += 1;
                let (u, _) = self.edges[ei ^ 1];
                v = u;
            }
            flow += 1;
        }
        flow
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::percolation::{exact_probability, for_each_config, RngStream};

    #[test]
    fn pattern_split_matches_the_formulas() {
        for (j, l, r) in [(2, 1, 1), (3, 2, 1), (4, 3, 1), (5, 3, 2), (6, 3, 3)] {
            let s = pattern_split(j).unwrap();
            assert_eq!((s.l, s.r_count), (l, r), "j = {j}");
        }
        assert!(pattern_split(1).is_err());
    }

    #[test]
    fn exponents_are_the_known_rationals() {
        assert_eq!(exponent(Setting::Half, 3).unwrap(), Ratio::new(2, 1));
        assert_eq!(exponent(Setting::Half, 1).unwrap(), Ratio::new(1, 3));
        assert_eq!(exponent(Setting::Half, 2).unwrap(), Ratio::new(1, 1));
        assert_eq!(exponent(Setting::Plane, 6).unwrap(), Ratio::new(35, 12));
        assert_eq!(exponent(Setting::Plane, 2).unwrap(), Ratio::new(1, 4));
        assert!(exponent(Setting::Plane, 1).is_err());
    }

    #[test]
    fn d_constant_branches() {
        assert_eq!(d_constant(3).unwrap(), 1);
        assert_eq!(d_constant(6).unwrap(), 3);
        assert_eq!(d_constant(8).unwrap(), 2);
        assert_eq!(d_constant(5).unwrap(), 1);
    }

    #[test]
    fn spec_parsing() {
        let e = ArmEventSpec::parse("B:2:1:8").unwrap();
        assert_eq!(e.region_spec(), "semiann:1:8");
        assert_eq!(e.spec_string(), "B:2:1:8");
        let e = ArmEventSpec::parse("B:2:1:8:br").unwrap();
        assert_eq!(e.sigma(), vec![Color::Blue, Color::Red]);
        assert!(ArmEventSpec::parse("B:2:1:8:rr").is_err());
        assert!(ArmEventSpec::parse("P:1:1:8").is_err());
        assert!(ArmEventSpec::parse("Q:2:1:8").is_err());
        assert!(ArmEventSpec::parse("B:2:8:8").is_err());
        assert_eq!(ArmEventSpec::parse("H:3:2:16").unwrap().region_spec(), "half:16");
        assert_eq!(ArmEventSpec::parse("A:4:2:16").unwrap().region_spec(), "ann:2:16");
    }

    #[test]
    fn plane_pattern_shapes() {
        // j = 3: (b@ac, b@ba, r@ba), doubled blue pair connected for Y.
        let (e, p) = plane_pattern(Family::Y, 3).unwrap();
        let colors: Vec<Color> = e.iter().map(|x| x.color).collect();
        assert_eq!(colors, vec![Color::Blue, Color::Blue, Color::Red]);
        assert_eq!(e[0].arc, Some(LandingArc::Ac));
        assert_eq!(e[1].arc, Some(LandingArc::Ba));
        assert_eq!(p, vec![(1, 0)]);
        // j = 4 alternating, A has no arcs.
        let (e, p) = plane_pattern(Family::A, 4).unwrap();
        let colors: Vec<Color> = e.iter().map(|x| x.color).collect();
        assert_eq!(colors, vec![Color::Blue, Color::Red, Color::Blue, Color::Red]);
        assert!(e.iter().all(|x| x.arc.is_none()));
        assert!(p.is_empty());
    }

    #[test]
    fn monochrome_configurations() {
        let half = Arc::new(DiscDomain::parse("half:4").unwrap());
        let red = Configuration::all_red(Arc::clone(&half));
        let h1 = ArmEventSpec::parse("H:1:1:4").unwrap();
        assert!(h1.detect(&red).unwrap());
        assert!(h1.detect_oracle(&red).unwrap());
        let b2 = ArmEventSpec::parse("B:2:1:4").unwrap();
        assert!(!b2.detect(&red).unwrap());
        assert!(!b2.detect_oracle(&red).unwrap());
        let blue = Configuration::all_blue(Arc::clone(&half));
        // all blue: the single crossing color is blue, so H_1 (starts red) fails
        assert!(!h1.detect(&blue).unwrap());
        assert!(!h1.detect_oracle(&blue).unwrap());
        let h1b = ArmEventSpec::parse("H:1:1:4:b").unwrap();
        assert!(h1b.detect(&blue).unwrap());
        assert!(h1b.detect_oracle(&blue).unwrap());

        let disk = Arc::new(DiscDomain::parse("disk:4").unwrap());
        let red = Configuration::all_red(Arc::clone(&disk));
        let p2 = ArmEventSpec::parse("P:2:1:4").unwrap();
        assert!(!p2.detect(&red).unwrap());
        assert!(!p2.detect_oracle(&red).unwrap());
    }

    #[test]
    fn detect_equals_oracle_on_enumerated_half2() {
        let dom = Arc::new(DiscDomain::parse("half:2").unwrap());
        let events: Vec<ArmEventSpec> = ["B:1:1:2", "B:2:1:2", "H:1:1:2", "H:2:1:2", "B:1:1:2:b", "H:1:1:2:b"]
            .iter()
            .map(|s| ArmEventSpec::parse(s).unwrap())
            .collect();
        let compiled: Vec<_> = events.iter().map(|e| e.compile(&dom).unwrap()).collect();
        let mut mismatch = Vec::new();
        for_each_config(&dom, 26, |cfg| {
            for (e, ce) in events.iter().zip(&compiled) {
                let d = ce.detect(cfg).unwrap();
                let o = ce.detect_oracle(cfg).unwrap();
                if d != o {
                    mismatch.push((e.spec_string(), cfg.value(), d, o));
                }
            }
        })
        .unwrap();
        assert!(mismatch.is_empty(), "mismatches: {mismatch:?}");
    }

    #[test]
    fn detect_equals_oracle_on_enumerated_disk2() {
        let dom = Arc::new(DiscDomain::parse("disk:2").unwrap());
        let events: Vec<ArmEventSpec> = ["P:2:1:2", "A:2:1:2"]
            .iter()
            .map(|s| ArmEventSpec::parse(s).unwrap())
            .collect();
        let compiled: Vec<_> = events.iter().map(|e| e.compile(&dom).unwrap()).collect();
        let mut mismatch = Vec::new();
        for_each_config(&dom, 26, |cfg| {
            for (e, ce) in events.iter().zip(&compiled) {
                let d = ce.detect(cfg).unwrap();
                let o = ce.detect_oracle(cfg).unwrap();
                if d != o {
                    mismatch.push((e.spec_string(), cfg.value(), d, o));
                }
            }
        })
        .unwrap();
        assert!(mismatch.is_empty(), "mismatches: {mismatch:?}");
    }

    #[test]
    fn color_switching_is_exact_on_half2() {
        let dom = Arc::new(DiscDomain::parse("half:2").unwrap());
        let rb = ArmEventSpec::parse("B:2:1:2:rb").unwrap().compile(&dom).unwrap();
        let br = ArmEventSpec::parse("B:2:1:2:br").unwrap().compile(&dom).unwrap();
        let p_rb = exact_probability(&dom, |c| rb.detect(c).unwrap()).unwrap();
        let p_br = exact_probability(&dom, |c| br.detect(c).unwrap()).unwrap();
        assert_eq!(p_rb, p_br);
    }

    #[test]
    fn h_implies_b_on_random_configs() {
        let dom = Arc::new(DiscDomain::parse("half:6").unwrap());
        let mut rng = RngStream::new(42, 0);
        for j in [1usize, 2, 3] {
            let h = ArmEventSpec::parse(&format!("H:{j}:2:6")).unwrap().compile(&dom).unwrap();
            let b = ArmEventSpec::parse(&format!("B:{j}:2:6")).unwrap().compile(&dom).unwrap();
            for _ in 0..300 {
                let cfg = Configuration::sample(Arc::clone(&dom), &mut rng);
                if h.detect(&cfg).unwrap() {
                    assert!(b.detect(&cfg).unwrap(), "H_{j} without B_{j}");
                }
            }
        }
    }

    #[test]
    fn detect_equals_oracle_on_random_meso_configs() {
        let dom = Arc::new(DiscDomain::parse("half:8").unwrap());
        let mut rng = RngStream::new(5, 0);
        let events: Vec<_> = ["B:2:2:8", "B:3:2:8", "H:2:2:8"]
            .iter()
            .map(|s| ArmEventSpec::parse(s).unwrap().compile(&dom).unwrap())
            .collect();
        for _ in 0..500 {
            let cfg = Configuration::sample(Arc::clone(&dom), &mut rng);
            for ce in &events {
                assert_eq!(
                    ce.detect(&cfg).unwrap(),
                    ce.detect_oracle(&cfg).unwrap(),
                    "{} on {}",
                    ce.spec.spec_string(),
                    cfg.to_hex_string()
                );
            }
        }
        let disk = Arc::new(DiscDomain::parse("disk:8").unwrap());
        let events: Vec<_> = ["P:2:2:8", "P:3:2:8", "A:2:2:8", "A:3:2:8", "A:4:2:8", "X:2:2:8", "X:3:2:8", "Y:3:2:8", "Z:3:2:8"]
            .iter()
            .map(|s| ArmEventSpec::parse(s).unwrap().compile(&disk).unwrap())
            .collect();
        for _ in 0..300 {
            let cfg = Configuration::sample(Arc::clone(&disk), &mut rng);
            for ce in &events {
                assert_eq!(
                    ce.detect(&cfg).unwrap(),
                    ce.detect_oracle(&cfg).unwrap(),
                    "{} on {}",
                    ce.spec.spec_string(),
                    cfg.to_hex_string()
                );
            }
        }
    }

    #[test]
    fn nesting_y_implies_x_implies_a() {
        let disk = Arc::new(DiscDomain::parse("disk:8").unwrap());
        let mut rng = RngStream::new(9, 0);
        for j in [2usize, 3, 4] {
            let a = ArmEventSpec::parse(&format!("A:{j}:2:8")).unwrap().compile(&disk).unwrap();
            let x = ArmEventSpec::parse(&format!("X:{j}:2:8")).unwrap().compile(&disk).unwrap();
            let y = ArmEventSpec::parse(&format!("Y:{j}:2:8")).unwrap().compile(&disk).unwrap();
            let z = ArmEventSpec::parse(&format!("Z:{j}:2:8")).unwrap().compile(&disk).unwrap();
            for _ in 0..200 {
                let cfg = Configuration::sample(Arc::clone(&disk), &mut rng);
                let (da, dx, dy, dz) = (
                    a.detect(&cfg).unwrap(),
                    x.detect(&cfg).unwrap(),
                    y.detect(&cfg).unwrap(),
                    z.detect(&cfg).unwrap(),
                );
                assert!(!dy || dx, "Y without X at j={j}");
                assert!(!dx || da, "X without A at j={j}");
                assert!(!dz || da, "Z without A at j={j}");
            }
        }
    }
}
