//! Site configurations and their sampling/enumeration.
//!
//! A configuration assigns red (bit 1) or blue (bit 0) to every hexagon of a
//! [`DiscDomain`], packed 64 per word in the domain's canonical index order.
//! Sampling is p = 1/2 i.i.d. via a counter-based RNG, so any sample is
//! addressable by `(seed, stream_id, counter)` and parallel workers simply use
//! distinct streams; no generator state is shared or advanced across threads.

use std::fmt::Write as _;
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;

use crate::error::ArmlabError;
use crate::lattice::{DiscDomain, HexCoord};

/// Exact probabilities on micro domains are dyadic rationals.
pub type Prob = Ratio<u64>;

/// Exhaustive enumeration cap for the generic oracle entry points.
pub const ENUM_CAP: usize = 26;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Color {
    Blue,
    Red,
}

impl Color {
    pub fn flip(self) -> Color {
        match self {
            Color::Blue => Color::Red,
            Color::Red => Color::Blue,
        }
    }

    pub fn from_bit(bit: bool) -> Color {
        if bit {
            Color::Red
        } else {
            Color::Blue
        }
    }

    pub fn letter(self) -> char {
        match self {
            Color::Red => 'r',
            Color::Blue => 'b',
        }
    }

    pub fn parse(c: char) -> Result<Color, ArmlabError> {
        match c {
            'r' | 'R' => Ok(Color::Red),
            'b' | 'B' => Ok(Color::Blue),
            _ => Err(ArmlabError::Parse(format!("bad color `{c}` (want r or b)"))),
        }
    }
}

fn mix64(mut z: u64) -> u64 {
    // splitmix64 finalizer; good enough scrambling for percolation sampling
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Counter-based RNG: the k-th output is a pure function of
/// `(seed, stream_id, k)`, so independent streams can be handed to workers in
/// any order with reproducible results.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    key: u64,
    counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> RngStream {
        let key = mix64(mix64(seed) ^ stream_id.wrapping_mul(0xD1342543DE82EF95));
        RngStream {
            seed,
            stream_id,
            key,
            counter: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A child stream with an id derived from this stream's id. Used to carve
    /// per-worker / per-chunk streams out of a user-facing base stream.
    pub fn derive(&self, child: u64) -> RngStream {
        RngStream::new(self.seed, mix64(self.stream_id ^ mix64(child)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        mix64(self.key ^ c.wrapping_mul(0xA0761D6478BD642F))
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `0..n` (n > 0), unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        loop {
            let x = self.next_u64();
            let hi = ((x as u128 * n as u128) >> 64) as u64;
            let lo = (x as u128 * n as u128) as u64;
            if lo >= n.wrapping_neg() % n {
                return hi;
            }
        }
    }
}

/// A red/blue coloring of one domain, one bit per hexagon.
#[derive(Clone)]
pub struct Configuration {
    pub domain: Arc<DiscDomain>,
    bits: Vec<u64>,
}

impl Configuration {
    pub fn all_blue(domain: Arc<DiscDomain>) -> Configuration {
        let words = domain.len().div_ceil(64);
        Configuration {
            domain,
            bits: vec![0u64; words],
        }
    }

    pub fn all_red(domain: Arc<DiscDomain>) -> Configuration {
        let mut c = Configuration::all_blue(domain);
        for w in c.bits.iter_mut() {
            *w = !0;
        }
        c.mask_tail();
        c
    }

    fn mask_tail(&mut self) {
        let n = self.domain.len();
        if n % 64 != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << (n % 64)) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    #[inline]
    pub fn get(&self, idx: u32) -> Color {
        let w = self.bits[(idx >> 6) as usize];
        Color::from_bit((w >> (idx & 63)) & 1 == 1)
    }

    #[inline]
    pub fn set(&mut self, idx: u32, c: Color) {
        let word = &mut self.bits[(idx >> 6) as usize];
        let bit = 1u64 << (idx & 63);
        match c {
            Color::Red => *word |= bit,
            Color::Blue => *word &= !bit,
        }
    }

    /// Color of a hexagon, `None` if it is outside the domain.
    #[inline]
    pub fn color_of(&self, h: HexCoord) -> Option<Color> {
        self.domain.idx(h).map(|i| self.get(i))
    }

    /// Overwrite with fresh fair coin flips.
    pub fn resample(&mut self, rng: &mut RngStream) {
        for w in self.bits.iter_mut() {
            *w = rng.next_u64();
        }
        self.mask_tail();
    }

    /// A copy with every hexagon's color reversed.
    pub fn flipped(&self) -> Configuration {
        let mut c = self.clone();
        for w in c.bits.iter_mut() {
            *w = !*w;
        }
        c.mask_tail();
        c
    }

    /// Copy the colors onto another domain whose hexagons are a subset of
    /// this one's (e.g. read a perturbed-domain sample through `disk:R`).
    pub fn restricted(&self, dst: &Arc<DiscDomain>) -> Configuration {
        let mut out = Configuration::all_blue(Arc::clone(dst));
        for (i, &h) in dst.hexes.iter().enumerate() {
            out.set(i as u32, self.color_of(h).expect("hex shared by both domains"));
        }
        out
    }

    pub fn sample(domain: Arc<DiscDomain>, rng: &mut RngStream) -> Configuration {
        let mut c = Configuration::all_blue(domain);
        c.resample(rng);
        c
    }

    /// Load the low bits of `value` as the configuration (micro domains).
    pub fn from_value(domain: Arc<DiscDomain>, value: u64) -> Configuration {
        assert!(domain.len() <= 64);
        let mut c = Configuration::all_blue(domain);
        c.bits[0] = value;
        c.mask_tail();
        c
    }

    pub fn value(&self) -> u64 {
        assert!(self.len() <= 64);
        self.bits[0]
    }

    /// Copy the colors of another configuration on the hexagons both domains
    /// share (used to restrict to a subdomain).
    pub fn restrict_from(&mut self, other: &Configuration) {
        let domain = Arc::clone(&self.domain);
        for (i, &h) in domain.hexes.iter().enumerate() {
            if let Some(c) = other.color_of(h) {
                self.set(i as u32, c);
            }
        }
    }

    /// Serialize: little-endian byte hex dump, bit `i` = hexagon `i`.
    pub fn to_hex_string(&self) -> String {
        let nbytes = self.len().div_ceil(8);
        let mut s = String::with_capacity(nbytes * 2);
        for byte_idx in 0..nbytes {
            let w = self.bits[byte_idx / 8];
            let byte = (w >> ((byte_idx % 8) * 8)) as u8;
            let _ = write!(s, "{byte:02x}");
        }
        s
    }

    pub fn from_hex_string(domain: Arc<DiscDomain>, s: &str) -> Result<Configuration, ArmlabError> {
        let nbytes = domain.len().div_ceil(8);
        if s.len() != nbytes * 2 {
            return Err(ArmlabError::Parse(format!(
                "config dump has {} hex chars, expected {}",
                s.len(),
                nbytes * 2
            )));
        }
        let mut c = Configuration::all_blue(domain);
        for byte_idx in 0..nbytes {
            let byte = u8::from_str_radix(&s[byte_idx * 2..byte_idx * 2 + 2], 16)
                .map_err(|e| ArmlabError::Parse(format!("bad hex in config dump: {e}")))?;
            c.bits[byte_idx / 8] |= (byte as u64) << ((byte_idx % 8) * 8);
        }
        c.mask_tail();
        Ok(c)
    }
}

/// Write configurations in the dump format:
/// a header `domain=<spec> n=<count>` followed by one hex line per config.
pub fn dump_configurations<W: std::io::Write>(
    mut w: W,
    configs: &[Configuration],
) -> Result<(), ArmlabError> {
    if configs.is_empty() {
        return Err(ArmlabError::Invalid("nothing to dump".into()));
    }
    let spec = configs[0].domain.spec_string();
    writeln!(w, "domain={} n={}", spec, configs.len())?;
    for c in configs {
        if c.domain.spec_string() != spec {
            return Err(ArmlabError::Invalid("mixed domains in one dump".into()));
        }
        writeln!(w, "{}", c.to_hex_string())?;
    }
    Ok(())
}

pub fn load_configurations<R: std::io::BufRead>(r: R) -> Result<Vec<Configuration>, ArmlabError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| ArmlabError::Parse("empty dump".into()))??;
    let mut spec = None;
    let mut n = None;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("domain=") {
            spec = Some(v.to_string());
        } else if let Some(v) = tok.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|e| {
                ArmlabError::Parse(format!("bad n in dump header: {e}"))
            })?);
        }
    }
    let spec = spec.ok_or_else(|| ArmlabError::Parse("dump header missing domain=".into()))?;
    let n = n.ok_or_else(|| ArmlabError::Parse("dump header missing n=".into()))?;
    let domain = Arc::new(DiscDomain::parse(&spec)?);
    let mut out = Vec::with_capacity(n);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Configuration::from_hex_string(domain.clone(), line.trim())?);
    }
    if out.len() != n {
        return Err(ArmlabError::Parse(format!(
            "dump promised {} configs, found {}",
            n,
            out.len()
        )));
    }
    Ok(out)
}

/// Run `f` on every configuration of the domain (up to `cap` hexagons).
/// Single-threaded; see [`count_matching`] for the parallel counting version.
pub fn for_each_config<F: FnMut(&Configuration)>(
    domain: &Arc<DiscDomain>,
    cap: usize,
    mut f: F,
) -> Result<(), ArmlabError> {
    let n = domain.len();
    if n > cap {
        return Err(ArmlabError::TooLarge(format!(
            "{} has {} hexagons, enumeration cap is {}",
            domain.spec_string(),
            n,
            cap
        )));
    }
    let mut cfg = Configuration::all_blue(domain.clone());
    for v in 0..(1u64 << n) {
        cfg.bits[0] = v;
        f(&cfg);
    }
    Ok(())
}

/// Count configurations satisfying a predicate, in parallel chunks.
pub fn count_matching<F>(
    domain: &Arc<DiscDomain>,
    cap: usize,
    pred: F,
) -> Result<u64, ArmlabError>
where
    F: Fn(&Configuration) -> bool + Sync,
{
    let n = domain.len();
    if n > cap {
        return Err(ArmlabError::TooLarge(format!(
            "{} has {} hexagons, enumeration cap is {}",
            domain.spec_string(),
            n,
            cap
        )));
    }
    let total = 1u64 << n;
    let chunk = 1u64 << n.min(16);
    let nchunks = total / chunk;
    let count = (0..nchunks)
        .into_par_iter()
        .map(|ci| {
            let mut cfg = Configuration::all_blue(domain.clone());
            let mut local = 0u64;
            for v in ci * chunk..(ci + 1) * chunk {
                cfg.bits[0] = v;
                if pred(&cfg) {
                    local += 1;
                }
            }
            local
        })
        .sum();
    Ok(count)
}

/// Exact probability of a predicate under the uniform measure, as a rational.
/// Errors if the domain exceeds [`ENUM_CAP`] hexagons.
pub fn exact_probability<F>(domain: &Arc<DiscDomain>, pred: F) -> Result<Prob, ArmlabError>
where
    F: Fn(&Configuration) -> bool + Sync,
{
    let count = count_matching(domain, ENUM_CAP, pred)?;
    Ok(Prob::new(count, 1u64 << domain.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::hex;

    fn dom(spec: &str) -> Arc<DiscDomain> {
        Arc::new(DiscDomain::parse(spec).unwrap())
    }

    #[test]
    fn counter_rng_is_reproducible_and_stateless() {
        let mut a = RngStream::new(7, 3);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let mut b = RngStream::new(7, 3);
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c = RngStream::new(7, 4);
        assert_ne!(xs[0], c.next_u64(), "streams must differ");
    }

    #[test]
    fn rng_is_roughly_fair() {
        let mut r = RngStream::new(123, 0);
        let n = 100_000;
        let ones: u32 = (0..n).map(|_| r.next_u64().count_ones()).sum();
        let total = (n * 64) as f64;
        let p = ones as f64 / total;
        assert!((p - 0.5).abs() < 0.002, "bit bias {p}");
    }

    #[test]
    fn sample_counts_match_direct_addressing() {
        let d = dom("disk:4");
        let mut rng = RngStream::new(9, 1);
        let c1 = Configuration::sample(d.clone(), &mut rng);
        let mut rng2 = RngStream::new(9, 1);
        let c2 = Configuration::sample(d, &mut rng2);
        for i in 0..c1.len() as u32 {
            assert_eq!(c1.get(i), c2.get(i));
        }
    }

    #[test]
    fn set_get_roundtrip() {
        let d = dom("disk:3");
        let mut c = Configuration::all_blue(d);
        c.set(5, Color::Red);
        assert_eq!(c.get(5), Color::Red);
        assert_eq!(c.get(4), Color::Blue);
        c.set(5, Color::Blue);
        assert_eq!(c.get(5), Color::Blue);
        assert_eq!(c.color_of(hex(0, 0)).is_some(), true);
        assert_eq!(c.color_of(hex(50, 0)), None);
    }

    #[test]
    fn dump_roundtrip() {
        let d = dom("half:3");
        let mut rng = RngStream::new(11, 0);
        let configs: Vec<Configuration> = (0..5)
            .map(|_| Configuration::sample(d.clone(), &mut rng))
            .collect();
        let mut buf = Vec::new();
        dump_configurations(&mut buf, &configs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("domain=half:3 n=5"));
        let back = load_configurations(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in configs.iter().zip(&back) {
            assert_eq!(a.to_hex_string(), b.to_hex_string());
        }
    }

    #[test]
    fn exact_probability_single_hexagon() {
        let d = dom("disk:1");
        let p = exact_probability(&d, |c| c.get(0) == Color::Red).unwrap();
        assert_eq!(p, Prob::new(1, 2));
    }

    #[test]
    fn exact_probability_counts_everything() {
        let d = dom("disk:2"); // 13 hexagons
        let p = exact_probability(&d, |_| true).unwrap();
        assert_eq!(p, Prob::new(1, 1));
        // number of configs with the origin red is exactly half
        let origin = d.idx(hex(0, 0)).unwrap();
        let p = exact_probability(&d, |c| c.get(origin) == Color::Red).unwrap();
        assert_eq!(p, Prob::new(1, 2));
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let d = dom("semiann:1:4"); // 30 hexagons > 26
        assert!(matches!(
            exact_probability(&d, |_| true),
            Err(ArmlabError::TooLarge(_))
        ));
    }

    #[test]
    fn next_below_is_in_range() {
        let mut r = RngStream::new(5, 5);
        for _ in 0..1000 {
            assert!(r.next_below(7) < 7);
        }
    }
}
