//! Triangular-lattice geometry: hexagon coordinates, discretized domains and
//! their boundary b-paths.
//!
//! Sites of the triangular lattice are drawn as hexagons (faces of the dual
//! hexagonal lattice). We use axial coordinates `(a, b)` with the embedding
//! `center = a*(1,0) + b*(1/2, sqrt(3)/2)`, so every hexagon sits at distance 1
//! from its six neighbors and `|center|^2 = a^2 + a*b + b^2` is an integer.
//!
//! A *b-path* is a path on dual vertices (corners shared by three mutually
//! adjacent hexagons) and dual edges (sides shared by two adjacent hexagons).
//! Domain boundaries, discrete circles `C_R` and the discretized real axis are
//! all b-paths here.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use crate::error::ArmlabError;

pub const SQRT3: f64 = 1.732050807568877293;

/// Counterclockwise neighbor offsets, starting from `(a+1, b)`.
pub const DIRS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct HexCoord {
    // (b, a) field order so derived Ord matches the domain indexing order.
    pub b: i32,
    pub a: i32,
}

pub const fn hex(a: i32, b: i32) -> HexCoord {
    HexCoord { a, b }
}

impl HexCoord {
    pub fn center(self) -> (f64, f64) {
        (
            self.a as f64 + self.b as f64 * 0.5,
            self.b as f64 * (SQRT3 / 2.0),
        )
    }

    /// Squared Euclidean norm of the center; exact.
    pub fn norm2(self) -> i64 {
        let (a, b) = (self.a as i64, self.b as i64);
        a * a + a * b + b * b
    }

    pub fn neighbor(self, k: usize) -> HexCoord {
        let d = DIRS[k % 6];
        hex(self.a + d.0, self.b + d.1)
    }

    pub fn neighbors(self) -> [HexCoord; 6] {
        let mut out = [self; 6];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = self.neighbor(k);
        }
        out
    }

    pub fn is_adjacent(self, other: HexCoord) -> bool {
        let d = (other.a - self.a, other.b - self.b);
        DIRS.contains(&d)
    }

    /// The two hexagons adjacent to both `self` and an adjacent `other`.
    /// They are the endpoints (as triangles) of the shared dual edge.
    pub fn common_neighbors(self, other: HexCoord) -> [HexCoord; 2] {
        let d = (other.a - self.a, other.b - self.b);
        let k = DIRS
            .iter()
            .position(|&x| x == d)
            .expect("common_neighbors called on non-adjacent hexagons");
        [self.neighbor((k + 5) % 6), self.neighbor((k + 1) % 6)]
    }
}

impl fmt::Display for HexCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.a, self.b)
    }
}

/// A dual vertex = an unordered triple of mutually adjacent hexagons,
/// stored sorted so equal triples compare equal.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct DualVertex {
    pub hexes: [HexCoord; 3],
}

impl DualVertex {
    pub fn new(h1: HexCoord, h2: HexCoord, h3: HexCoord) -> DualVertex {
        let mut hexes = [h1, h2, h3];
        hexes.sort();
        DualVertex { hexes }
    }

    /// Centroid of the three hexagon centers (= the geometric corner).
    pub fn pos(self) -> (f64, f64) {
        let (p6x, p6y) = self.pos6();
        (p6x as f64 / 6.0, p6y as f64 * (SQRT3 / 6.0))
    }

    /// Exact position: `x = p6x/6`, `y = p6y * sqrt(3)/6`.
    pub fn pos6(self) -> (i64, i64) {
        let mut sx2 = 0i64; // sum of 2*x over the three centers
        let mut sb = 0i64;
        for h in self.hexes {
            sx2 += 2 * h.a as i64 + h.b as i64;
            sb += h.b as i64;
        }
        (sx2, sb)
    }

    pub fn contains_hex(self, h: HexCoord) -> bool {
        self.hexes.contains(&h)
    }
}

/// A dual edge = the side shared by two adjacent hexagons.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct DualEdge {
    // Stored with hexes.0 < hexes.1 so the representation is canonical.
    pub hexes: (HexCoord, HexCoord),
}

impl DualEdge {
    pub fn new(h1: HexCoord, h2: HexCoord) -> DualEdge {
        debug_assert!(h1.is_adjacent(h2));
        if h1 < h2 {
            DualEdge { hexes: (h1, h2) }
        } else {
            DualEdge { hexes: (h2, h1) }
        }
    }

    pub fn endpoints(self) -> [DualVertex; 2] {
        let (h1, h2) = self.hexes;
        let [c1, c2] = h1.common_neighbors(h2);
        [DualVertex::new(h1, h2, c1), DualVertex::new(h1, h2, c2)]
    }
}

/// A positive rational radius, kept reduced.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Radius {
    pub num: i64,
    pub den: i64,
}

impl Radius {
    pub fn new(num: i64, den: i64) -> Result<Radius, ArmlabError> {
        if num <= 0 || den <= 0 {
            return Err(ArmlabError::Parse(format!(
                "radius must be positive, got {num}/{den}"
            )));
        }
        let g = num_integer::gcd(num, den);
        Ok(Radius {
            num: num / g,
            den: den / g,
        })
    }

    pub fn from_int(n: i64) -> Radius {
        Radius::new(n, 1).expect("positive")
    }

    pub fn parse(s: &str) -> Result<Radius, ArmlabError> {
        let bad = |_| ArmlabError::Parse(format!("bad radius `{s}`"));
        match s.split_once('/') {
            Some((n, d)) => Radius::new(n.trim().parse().map_err(bad)?, d.trim().parse().map_err(bad)?),
            None => Radius::new(s.trim().parse().map_err(bad)?, 1),
        }
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Compare an exact squared norm against `self^2`.
    pub fn cmp_norm2(self, norm2: i64) -> Ordering {
        // norm2 * den^2  vs  num^2, both fit easily in i128 for desk scales
        let lhs = norm2 as i128 * (self.den as i128).pow(2);
        let rhs = (self.num as i128).pow(2);
        lhs.cmp(&rhs)
    }

    /// `norm2 < self^2`?
    pub fn contains_norm2(self, norm2: i64) -> bool {
        self.cmp_norm2(norm2) == Ordering::Less
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DomainKind {
    Disk,
    HalfDisk,
    Annulus,
    SemiAnnulus,
    /// An explicit hexagon set (perturbed hitting-sequence domains etc.).
    /// No inner/outer structure; every off-domain hexagon classifies Beyond.
    Custom,
}

impl DomainKind {
    pub fn is_half_plane(self) -> bool {
        matches!(self, DomainKind::HalfDisk | DomainKind::SemiAnnulus)
    }
}

/// Which side of the domain an off-domain hexagon lies on. Used to classify
/// boundary-b-path arcs and interface endpoints.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OutClass {
    /// Beyond the outer radius.
    Beyond,
    /// Inside the inner hole (annulus/semi-annulus), or inside `B_r` for
    /// region queries against a larger ambient domain.
    Hole,
    /// Below the real axis (half-plane kinds).
    BelowAxis,
}

/// Names for the boundary arcs of a domain.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ArcName {
    /// `C_R` (disk/annulus) or `C_R^+` (half kinds).
    Outer,
    /// `C_r` or `C_r^+`.
    Inner,
    /// `[-R, R]` of a half-disk.
    Bottom,
    /// `[-R, -r]` of a semi-annulus.
    BottomLeft,
    /// `[r, R]` of a semi-annulus.
    BottomRight,
}

impl ArcName {
    pub fn parse(s: &str) -> Result<ArcName, ArmlabError> {
        Ok(match s {
            "outer" => ArcName::Outer,
            "inner" => ArcName::Inner,
            "bottom" => ArcName::Bottom,
            "bottom-left" => ArcName::BottomLeft,
            "bottom-right" => ArcName::BottomRight,
            _ => {
                return Err(ArmlabError::Parse(format!(
                    "unknown arc `{s}` (expected outer|inner|bottom|bottom-left|bottom-right)"
                )))
            }
        })
    }
}

/// One directed edge of a boundary loop, oriented with the domain on its left.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryEdge {
    pub in_hex: HexCoord,
    pub out_hex: HexCoord,
    pub from: DualVertex,
    pub to: DualVertex,
    pub arc: ArcName,
}

/// Row-interval index: O(1) hexagon -> index lookups without hashing.
/// Rows are keyed by `b`; each row stores a dense slot table over its `a` span.
struct RowIndex {
    bmin: i32,
    rows: Vec<RowSlots>,
}

struct RowSlots {
    amin: i32,
    slots: Vec<u32>, // u32::MAX marks a gap inside the span
}

impl RowIndex {
    fn build(sorted: &[HexCoord]) -> RowIndex {
        if sorted.is_empty() {
            return RowIndex { bmin: 0, rows: Vec::new() };
        }
        let bmin = sorted.first().unwrap().b;
        let bmax = sorted.last().unwrap().b;
        let mut rows: Vec<RowSlots> = (0..=(bmax - bmin))
            .map(|_| RowSlots { amin: 0, slots: Vec::new() })
            .collect();
        let mut i = 0;
        while i < sorted.len() {
            let b = sorted[i].b;
            let mut j = i;
            while j < sorted.len() && sorted[j].b == b {
                j += 1;
            }
            let amin = sorted[i].a;
            let amax = sorted[j - 1].a;
            let mut slots = vec![u32::MAX; (amax - amin + 1) as usize];
            for (k, h) in sorted[i..j].iter().enumerate() {
                slots[(h.a - amin) as usize] = (i + k) as u32;
            }
            rows[(b - bmin) as usize] = RowSlots { amin, slots };
            i = j;
        }
        RowIndex { bmin, rows }
    }

    #[inline]
    fn get(&self, h: HexCoord) -> Option<u32> {
        let r = self.rows.get(usize::try_from(h.b - self.bmin).ok()?)?;
        let s = *r.slots.get(usize::try_from(h.a - r.amin).ok()?)?;
        if s == u32::MAX {
            None
        } else {
            Some(s)
        }
    }
}

/// A discretized domain: a finite set of hexagons with a canonical index
/// (sorted by `(b, a)`) and precomputed boundary loops.
pub struct DiscDomain {
    pub kind: DomainKind,
    pub inner: Option<Radius>,
    pub outer: Radius,
    pub hexes: Vec<HexCoord>,
    index: RowIndex,
    /// Boundary loops; `loops[0]` is the outer loop. An annulus also has an
    /// inner loop at `loops[1]`. Each loop is ccw around the domain (for the
    /// inner loop of an annulus that means clockwise around the hole).
    pub loops: Vec<Vec<BoundaryEdge>>,
    spec: String,
}

impl DiscDomain {
    /// Parse a domain spec: `disk:R`, `half:R`, `ann:r:R`, `semiann:r:R`,
    /// radii as integers or `p/q` rationals.
    pub fn parse(spec: &str) -> Result<DiscDomain, ArmlabError> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || ArmlabError::Parse(format!("bad domain spec `{spec}`"));
        match parts.as_slice() {
            [kind, r] => {
                let radius = Radius::parse(r)?;
                match *kind {
                    "disk" => DiscDomain::build(DomainKind::Disk, None, radius),
                    "half" => DiscDomain::build(DomainKind::HalfDisk, None, radius),
                    _ => Err(bad()),
                }
            }
            [kind, r, rr] => {
                let inner = Radius::parse(r)?;
                let outer = Radius::parse(rr)?;
                match *kind {
                    "ann" => DiscDomain::build(DomainKind::Annulus, Some(inner), outer),
                    "semiann" => DiscDomain::build(DomainKind::SemiAnnulus, Some(inner), outer),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }

    pub fn build(
        kind: DomainKind,
        inner: Option<Radius>,
        outer: Radius,
    ) -> Result<DiscDomain, ArmlabError> {
        if matches!(kind, DomainKind::Annulus | DomainKind::SemiAnnulus) {
            let r = inner.ok_or_else(|| {
                ArmlabError::Parse("annulus kinds need an inner radius".into())
            })?;
            if r.cmp_norm2(0) == Ordering::Equal || outer.cmp_norm2(0) == Ordering::Equal {
                return Err(ArmlabError::Parse("radii must be positive".into()));
            }
            let r2 = (r.num as i128 * outer.den as i128, r.den as i128 * outer.num as i128);
            if r2.0 >= r2.1 {
                return Err(ArmlabError::Parse(format!(
                    "inner radius {} must be < outer radius {}",
                    r, outer
                )));
            }
        }
        let mut hexes = Vec::new();
        // Rows are skewed: a hexagon at distance R along the y-axis sits in
        // row b ~ 2R/sqrt(3), so the scan must go past R rows (7/6 > 2/sqrt3).
        let reach = ((7 * outer.num) / (6 * outer.den)) as i32 + 2;
        for b in -reach..=reach {
            for a in -2 * reach..=2 * reach {
                let h = hex(a, b);
                if membership(kind, inner, outer, h) {
                    hexes.push(h);
                }
            }
        }
        hexes.sort(); // (b, a) lexicographic by field order
        if hexes.is_empty() {
            return Err(ArmlabError::Parse("domain is empty at this radius".into()));
        }
        let index = RowIndex::build(&hexes);
        let spec = match kind {
            DomainKind::Disk => format!("disk:{outer}"),
            DomainKind::HalfDisk => format!("half:{outer}"),
            DomainKind::Annulus => format!("ann:{}:{}", inner.unwrap(), outer),
            DomainKind::SemiAnnulus => format!("semiann:{}:{}", inner.unwrap(), outer),
            DomainKind::Custom => unreachable!("custom domains use DiscDomain::custom"),
        };
        let mut dom = DiscDomain {
            kind,
            inner,
            outer,
            hexes,
            index,
            loops: Vec::new(),
            spec,
        };
        dom.loops = dom.trace_boundary_loops()?;
        Ok(dom)
    }

    /// Build a domain from an explicit hexagon set. The boundary may have any
    /// number of loops (the largest-extent one comes first) and every edge is
    /// classified `Outer`.
    pub fn custom(mut hexes: Vec<HexCoord>, label: &str) -> Result<DiscDomain, ArmlabError> {
        hexes.sort();
        hexes.dedup();
        if hexes.is_empty() {
            return Err(ArmlabError::Parse(format!("custom domain `{label}` is empty")));
        }
        let index = RowIndex::build(&hexes);
        let mut dom = DiscDomain {
            kind: DomainKind::Custom,
            inner: None,
            outer: Radius::from_int(1),
            hexes,
            index,
            loops: Vec::new(),
            spec: label.to_string(),
        };
        dom.loops = dom.trace_boundary_loops()?;
        Ok(dom)
    }

    pub fn spec_string(&self) -> &str {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.hexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hexes.is_empty()
    }

    #[inline]
    pub fn contains(&self, h: HexCoord) -> bool {
        self.index.get(h).is_some()
    }

    #[inline]
    pub fn idx(&self, h: HexCoord) -> Option<u32> {
        self.index.get(h)
    }

    pub fn hex_at(&self, i: u32) -> HexCoord {
        self.hexes[i as usize]
    }

    /// Classify an off-domain hexagon relative to this domain.
    pub fn classify_out(&self, h: HexCoord) -> OutClass {
        debug_assert!(!self.contains(h));
        if self.kind == DomainKind::Custom {
            return OutClass::Beyond;
        }
        if self.kind.is_half_plane() && h.b < 0 {
            return OutClass::BelowAxis;
        }
        if let Some(r) = self.inner {
            let in_hole = match self.kind {
                DomainKind::Annulus => r.contains_norm2(h.norm2()),
                DomainKind::SemiAnnulus => {
                    h.b >= 0 && r.contains_norm2(h.norm2())
                }
                _ => false,
            };
            if in_hole {
                return OutClass::Hole;
            }
        }
        OutClass::Beyond
    }

    fn trace_boundary_loops(&self) -> Result<Vec<Vec<BoundaryEdge>>, ArmlabError> {
        let loops = trace_hex_loops(&self.hexes, &|h| self.contains(h), &|i, o| {
            self.classify_arc(i, o)
        })?;
        let expected = match self.kind {
            DomainKind::Annulus => 2,
            DomainKind::Custom => loops.len().max(1),
            _ => 1,
        };
        if loops.len() != expected {
            return Err(ArmlabError::Geometry(format!(
                "expected {} boundary loop(s) for {}, found {}",
                expected,
                self.spec,
                loops.len()
            )));
        }
        Ok(loops)
    }

    /// Assign a boundary edge to an arc. The conventions: the bottom arc of a
    /// half-plane domain consists of the underside edges of the `b = 0` row
    /// plus the west edge of the leftmost row hexagon of each row segment, so
    /// that e.g. `[-1, 1]` of `half:1` is exactly the three lower edges of the
    /// origin hexagon and `C_1^+` the three upper ones.
    fn classify_arc(&self, in_hex: HexCoord, out_hex: HexCoord) -> ArcName {
        let half = self.kind.is_half_plane();
        let semi = self.kind == DomainKind::SemiAnnulus;
        let bottom_side = |a: i32| {
            if semi {
                if a < 0 {
                    ArcName::BottomLeft
                } else {
                    ArcName::BottomRight
                }
            } else {
                ArcName::Bottom
            }
        };
        if half && out_hex.b < 0 {
            return bottom_side(in_hex.a);
        }
        if half && out_hex.b == 0 && in_hex.b == 0 {
            let in_hole = self.contains_out_in_hole(out_hex);
            if out_hex.a == in_hex.a - 1 {
                // West edge: left cap of a row segment.
                return if in_hole {
                    // Left cap of the right row segment sits against the hole:
                    // it is part of C_r^+ by the half:r convention.
                    ArcName::Inner
                } else {
                    bottom_side(in_hex.a)
                };
            } else {
                // East edge: right cap of a row segment.
                return if in_hole {
                    // Right cap of the left row segment: continuation of [-R,-r].
                    ArcName::BottomLeft
                } else {
                    ArcName::Outer
                };
            }
        }
        if self.contains_out_in_hole(out_hex) {
            ArcName::Inner
        } else {
            ArcName::Outer
        }
    }

    fn contains_out_in_hole(&self, out_hex: HexCoord) -> bool {
        !self.contains(out_hex) && self.classify_out(out_hex) == OutClass::Hole
    }

    /// The requested arc as an ordered b-path of dual vertices (loop order).
    pub fn boundary_arc(&self, name: ArcName) -> Result<Vec<DualVertex>, ArmlabError> {
        let valid = match (self.kind, name) {
            (DomainKind::Disk, ArcName::Outer) => true,
            (DomainKind::HalfDisk, ArcName::Outer | ArcName::Bottom) => true,
            (DomainKind::Annulus, ArcName::Outer | ArcName::Inner) => true,
            (
                DomainKind::SemiAnnulus,
                ArcName::Outer | ArcName::Inner | ArcName::BottomLeft | ArcName::BottomRight,
            ) => true,
            // Custom domains expose their whole (outer) loop as `outer`.
            (DomainKind::Custom, ArcName::Outer) => true,
            _ => false,
        };
        if !valid {
            return Err(ArmlabError::Parse(format!(
                "arc {:?} does not exist on {}",
                name, self.spec
            )));
        }
        let mut out = Vec::new();
        for lp in &self.loops {
            let run = arc_run(lp, name);
            if !run.is_empty() {
                out = run;
                break;
            }
        }
        if out.is_empty() {
            return Err(ArmlabError::Geometry(format!(
                "arc {:?} is empty on {}",
                name, self.spec
            )));
        }
        Ok(out)
    }

    /// Vertex of the given arc closest to a continuum point, ties broken by
    /// lexicographically smallest exact position.
    pub fn snap_to_arc(&self, name: ArcName, point: (f64, f64)) -> Result<DualVertex, ArmlabError> {
        let arc = self.boundary_arc(name)?;
        Ok(snap(&arc, point))
    }
}

/// Closest vertex of a b-path to a point (lexicographic tie-break on the exact
/// position).
pub fn snap(path: &[DualVertex], point: (f64, f64)) -> DualVertex {
    let mut best = path[0];
    let mut best_d = f64::INFINITY;
    for &v in path {
        let (x, y) = v.pos();
        let d = (x - point.0).powi(2) + (y - point.1).powi(2);
        if d < best_d - 1e-12 || ((d - best_d).abs() <= 1e-12 && v.pos6() < best.pos6()) {
            best = v;
            best_d = d;
        }
    }
    best
}

/// Trace the boundary loops of an arbitrary hexagon set as directed b-paths
/// with the set on the left. Fails if the set is pinched (a vertex with two
/// outgoing boundary edges). Loops come back sorted by extent, largest first.
pub fn trace_hex_loops(
    hexes: &[HexCoord],
    contains: &dyn Fn(HexCoord) -> bool,
    classify: &dyn Fn(HexCoord, HexCoord) -> ArcName,
) -> Result<Vec<Vec<BoundaryEdge>>, ArmlabError> {
    // Directed boundary edges keyed by their start vertex; every boundary
    // vertex must have exactly one outgoing edge.
    let mut by_start: HashMap<DualVertex, BoundaryEdge> = HashMap::new();
    for &h in hexes {
        for n in h.neighbors() {
            if contains(n) {
                continue;
            }
            let [v1, v2] = DualEdge::new(h, n).endpoints();
            // Orient so the in-hex is on the left of from -> to.
            let (p1, p2) = (v1.pos(), v2.pos());
            let hc = h.center();
            let cross = (p2.0 - p1.0) * (hc.1 - p1.1) - (p2.1 - p1.1) * (hc.0 - p1.0);
            let (from, to) = if cross > 0.0 { (v1, v2) } else { (v2, v1) };
            let e = BoundaryEdge {
                in_hex: h,
                out_hex: n,
                from,
                to,
                arc: classify(h, n),
            };
            if by_start.insert(from, e).is_some() {
                return Err(ArmlabError::Geometry(
                    "boundary is pinched: two boundary edges leave one vertex".into(),
                ));
            }
        }
    }
    let mut loops = Vec::new();
    let mut used: HashMap<DualVertex, bool> = HashMap::new();
    let mut starts: Vec<DualVertex> = by_start.keys().copied().collect();
    starts.sort();
    for s in starts {
        if used.get(&s).copied().unwrap_or(false) {
            continue;
        }
        let mut lp = Vec::new();
        let mut v = s;
        loop {
            let e = by_start[&v];
            used.insert(v, true);
            lp.push(e);
            v = e.to;
            if v == s {
                break;
            }
        }
        loops.push(lp);
    }
    // Largest extent first (the outer loop).
    loops.sort_by_key(|lp| {
        let m = lp
            .iter()
            .map(|e| {
                let (x, y) = e.from.pos6();
                x * x + 3 * y * y
            })
            .max()
            .unwrap_or(0);
        std::cmp::Reverse(m)
    });
    Ok(loops)
}

/// Extract the vertices of one arc of a boundary loop in traversal order.
/// Returns empty if the loop has no edge of that arc.
fn arc_run(lp: &[BoundaryEdge], name: ArcName) -> Vec<DualVertex> {
    let n = lp.len();
    let in_arc: Vec<bool> = lp.iter().map(|e| e.arc == name).collect();
    if !in_arc.iter().any(|&x| x) {
        return Vec::new();
    }
    if in_arc.iter().all(|&x| x) {
        // Whole loop (e.g. C_R of a disk): closed path.
        let mut verts: Vec<DualVertex> = lp.iter().map(|e| e.from).collect();
        verts.push(lp[0].from);
        return verts;
    }
    // Find the first edge of the (contiguous) run.
    let mut start = None;
    for i in 0..n {
        if in_arc[i] && !in_arc[(i + n - 1) % n] {
            start = Some(i);
            break;
        }
    }
    let start = start.expect("mixed loop must have a run start");
    let mut verts = vec![lp[start].from];
    let mut i = start;
    while in_arc[i] {
        verts.push(lp[i].to);
        i = (i + 1) % n;
        if i == start {
            break;
        }
    }
    verts
}

fn membership(kind: DomainKind, inner: Option<Radius>, outer: Radius, h: HexCoord) -> bool {
    let in_disk = |r: Radius| r.contains_norm2(h.norm2());
    match kind {
        DomainKind::Disk => in_disk(outer),
        DomainKind::HalfDisk => h.b >= 0 && in_disk(outer),
        DomainKind::Annulus => in_disk(outer) && !in_disk(inner.unwrap()),
        DomainKind::SemiAnnulus => h.b >= 0 && in_disk(outer) && !in_disk(inner.unwrap()),
        DomainKind::Custom => unreachable!("custom domains carry explicit hexagon sets"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbor_order_is_ccw_unit_distance() {
        let o = hex(0, 0);
        let mut prev_angle = f64::NEG_INFINITY;
        for (k, n) in o.neighbors().iter().enumerate() {
            let (x, y) = n.center();
            assert!((x * x + y * y - 1.0).abs() < 1e-12, "neighbor {k} not at distance 1");
            let mut ang = y.atan2(x);
            if k > 0 && ang < prev_angle {
                ang += std::f64::consts::TAU;
            }
            if k > 0 {
                assert!(ang > prev_angle, "neighbors not ccw at {k}");
            }
            prev_angle = ang;
        }
    }

    #[test]
    fn norm2_matches_embedding() {
        for a in -5..=5 {
            for b in -5..=5 {
                let h = hex(a, b);
                let (x, y) = h.center();
                assert!((h.norm2() as f64 - (x * x + y * y)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn c1_is_the_origin_hexagon_boundary() {
        let d = DiscDomain::parse("disk:1").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.hexes[0], hex(0, 0));
        let arc = d.boundary_arc(ArcName::Outer).unwrap();
        assert_eq!(arc.len(), 7); // closed loop over 6 edges
        assert_eq!(arc[0], arc[6]);
    }

    #[test]
    fn half1_arc_split_three_and_three() {
        let d = DiscDomain::parse("half:1").unwrap();
        assert_eq!(d.len(), 1);
        let upper = d.boundary_arc(ArcName::Outer).unwrap();
        let lower = d.boundary_arc(ArcName::Bottom).unwrap();
        assert_eq!(upper.len(), 4); // 3 edges
        assert_eq!(lower.len(), 4);
        // Upper arc vertices all have y >= -eps only at the two shared corners.
        let ys: Vec<f64> = upper.iter().map(|v| v.pos().1).collect();
        assert!(ys.iter().cloned().fold(f64::MIN, f64::max) > 0.0);
        // The two arcs share exactly their two endpoints.
        let mut shared = 0;
        for v in &upper {
            if lower.contains(v) {
                shared += 1;
            }
        }
        assert_eq!(shared, 2);
    }

    #[test]
    fn half8_arcs_cover_the_loop() {
        let d = DiscDomain::parse("half:8").unwrap();
        let lp = &d.loops[0];
        let upper = d.boundary_arc(ArcName::Outer).unwrap();
        let lower = d.boundary_arc(ArcName::Bottom).unwrap();
        // arc edge counts sum to loop length
        assert_eq!((upper.len() - 1) + (lower.len() - 1), lp.len());
        let mut shared = 0;
        for v in &upper {
            if lower.contains(v) {
                shared += 1;
            }
        }
        assert_eq!(shared, 2, "arcs intersect in exactly two vertices");
    }

    #[test]
    fn semiann_has_four_contiguous_arcs() {
        let d = DiscDomain::parse("semiann:2:8").unwrap();
        let lp = &d.loops[0];
        let mut total = 0;
        for name in [
            ArcName::Outer,
            ArcName::Inner,
            ArcName::BottomLeft,
            ArcName::BottomRight,
        ] {
            let arc = d.boundary_arc(name).unwrap();
            assert!(arc.len() >= 2, "{name:?} empty");
            total += arc.len() - 1;
        }
        assert_eq!(total, lp.len(), "arcs partition the loop");
        // Contiguity: each arc's edges form one run in the loop.
        let n = lp.len();
        for name in [
            ArcName::Outer,
            ArcName::Inner,
            ArcName::BottomLeft,
            ArcName::BottomRight,
        ] {
            let flags: Vec<bool> = lp.iter().map(|e| e.arc == name).collect();
            let mut transitions = 0;
            for i in 0..n {
                if flags[i] != flags[(i + 1) % n] {
                    transitions += 1;
                }
            }
            assert_eq!(transitions, 2, "{name:?} not contiguous");
        }
    }

    #[test]
    fn annulus_has_two_loops() {
        let d = DiscDomain::parse("ann:2:6").unwrap();
        assert_eq!(d.loops.len(), 2);
        let outer = d.boundary_arc(ArcName::Outer).unwrap();
        let inner = d.boundary_arc(ArcName::Inner).unwrap();
        assert!(outer.len() > inner.len());
    }

    #[test]
    fn nesting_is_strict() {
        // every hexagon of disk:r is in disk:R for r < R; same for half kinds
        for (small, large) in [("disk:2", "disk:5"), ("half:3", "half:7")] {
            let s = DiscDomain::parse(small).unwrap();
            let l = DiscDomain::parse(large).unwrap();
            for &h in &s.hexes {
                assert!(l.contains(h), "{small} ⊄ {large} at {h}");
            }
            assert!(l.len() > s.len());
        }
    }

    #[test]
    fn rational_radius_parses_and_orders() {
        let d1 = DiscDomain::parse("disk:5/2").unwrap();
        let d2 = DiscDomain::parse("disk:3").unwrap();
        assert!(d1.len() < d2.len());
        for &h in &d1.hexes {
            assert!(d2.contains(h));
        }
        assert!(DiscDomain::parse("disk:0").is_err());
        assert!(DiscDomain::parse("ann:4:3").is_err());
        assert!(DiscDomain::parse("wedge:3").is_err());
    }

    #[test]
    fn domain_index_sorted_by_row_then_column() {
        let d = DiscDomain::parse("disk:3").unwrap();
        for w in d.hexes.windows(2) {
            assert!((w[0].b, w[0].a) < (w[1].b, w[1].a));
        }
        for (i, &h) in d.hexes.iter().enumerate() {
            assert_eq!(d.idx(h), Some(i as u32));
        }
    }

    #[test]
    fn micro_domain_sizes_for_enumeration() {
        // frozen counts used by the enumeration-based tests
        for (spec, n) in [
            ("half:1", 1),
            ("half:2", 8),
            ("half:3", 18),
            ("disk:1", 1),
            ("disk:2", 13),
            ("semiann:1:4", 30),
        ] {
            let d = DiscDomain::parse(spec).unwrap();
            assert_eq!(d.len(), n, "{spec}");
        }
    }

    #[test]
    fn common_neighbors_are_mutual() {
        let h1 = hex(2, -1);
        for k in 0..6 {
            let h2 = h1.neighbor(k);
            let [c1, c2] = h1.common_neighbors(h2);
            for c in [c1, c2] {
                assert!(c.is_adjacent(h1) && c.is_adjacent(h2));
            }
            assert_ne!(c1, c2);
        }
    }
}
