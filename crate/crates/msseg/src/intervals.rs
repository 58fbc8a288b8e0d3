//! Interval systems on the sampling grid and the normality check.

use serde::{Deserialize, Serialize};

/// Half-open grid interval `[start/n, end/n)` covering cells `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridInterval {
    pub start: usize,
    pub end: usize,
}

impl GridInterval {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end, "grid interval must cover at least one cell");
        GridInterval { start, end }
    }

    pub fn len_cells(&self) -> usize {
        self.end - self.start
    }

    /// Lebesgue measure `|I|` on the `n`-cell grid.
    pub fn measure(&self, n: usize) -> f64 {
        self.len_cells() as f64 / n as f64
    }

    pub fn contains(&self, other: &GridInterval) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// All intervals with grid endpoints; n(n+1)/2 members.
    Full,
    /// The tiling by ceil(n/2^j)-cell blocks at every level j, plus all
    /// single cells when the formula misses them (non-powers of two).
    DyadicPartition,
    /// All intervals whose cell length is a power of two, at every start.
    DyadicLength,
}

impl SystemKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SystemKind::Full => "full",
            SystemKind::DyadicPartition => "dyadic-partition",
            SystemKind::DyadicLength => "dyadic-length",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(SystemKind::Full),
            "dyadic-partition" => Some(SystemKind::DyadicPartition),
            "dyadic-length" => Some(SystemKind::DyadicLength),
            _ => None,
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An interval system bound to a grid size. Members are generated on demand
/// in a fixed (start ascending, then end ascending) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSystem {
    pub kind: SystemKind,
    pub n: usize,
}

/// Powers of two up to `n`: the admissible dyadic cell lengths.
pub fn dyadic_lengths(n: usize) -> impl Iterator<Item = usize> {
    (0..usize::BITS)
        .map(|j| 1usize << j)
        .take_while(move |&l| l <= n)
}

impl IntervalSystem {
    pub fn new(kind: SystemKind, n: usize) -> Self {
        assert!(n >= 1, "grid size must be at least 1");
        IntervalSystem { kind, n }
    }

    /// All members, sorted by (start, end), without duplicates.
    pub fn enumerate(&self) -> Vec<GridInterval> {
        let n = self.n;
        let mut members = match self.kind {
            SystemKind::Full => {
                let mut v = Vec::with_capacity(n * (n + 1) / 2);
                for start in 0..n {
                    for end in start + 1..=n {
                        v.push(GridInterval::new(start, end));
                    }
                }
                v
            }
            SystemKind::DyadicLength => {
                let mut v = Vec::new();
                for start in 0..n {
                    for len in dyadic_lengths(n) {
                        if start + len <= n {
                            v.push(GridInterval::new(start, start + len));
                        }
                    }
                }
                v
            }
            SystemKind::DyadicPartition => {
                let mut v = Vec::new();
                let levels = n.ilog2();
                for j in 0..=levels {
                    let width = n.div_ceil(1 << j);
                    for i in 0..(1usize << j) {
                        let start = i * width;
                        if start >= n {
                            break;
                        }
                        let end = ((i + 1) * width).min(n);
                        v.push(GridInterval::new(start, end));
                    }
                }
                // Definition of normality requires every single cell.
                for i in 0..n {
                    v.push(GridInterval::new(i, i + 1));
                }
                v
            }
        };
        members.sort_unstable();
        members.dedup();
        members
    }

    /// Members contained in `segment`, in enumeration order.
    pub fn members_within(&self, segment: GridInterval) -> Vec<GridInterval> {
        let mut out = Vec::new();
        self.for_each_within(segment, |m| out.push(m));
        out
    }

    /// Visits every member contained in `segment` without allocating.
    pub fn for_each_within(&self, segment: GridInterval, mut visit: impl FnMut(GridInterval)) {
        let (a, b) = (segment.start, segment.end);
        match self.kind {
            SystemKind::Full => {
                for start in a..b {
                    for end in start + 1..=b {
                        visit(GridInterval::new(start, end));
                    }
                }
            }
            SystemKind::DyadicLength => {
                for start in a..b {
                    for len in dyadic_lengths(self.n) {
                        if start + len > b {
                            break;
                        }
                        visit(GridInterval::new(start, start + len));
                    }
                }
            }
            SystemKind::DyadicPartition => {
                // The system is O(n); a filtered scan keeps the order stable.
                for m in self.enumerate() {
                    if segment.contains(&m) {
                        visit(m);
                    }
                }
            }
        }
    }

    /// Length (in cells) of the longest member inside the cell range `[s, e)`.
    fn max_member_len_within(&self, s: usize, e: usize) -> usize {
        if s >= e {
            return 0;
        }
        match self.kind {
            SystemKind::Full => e - s,
            SystemKind::DyadicLength => {
                let w = e - s;
                1 << w.ilog2()
            }
            SystemKind::DyadicPartition => {
                let mut best = 0;
                self.for_each_within(GridInterval::new(s, e), |m| best = best.max(m.len_cells()));
                best
            }
        }
    }

    /// Checks the three normality requirements against a probe sweep.
    ///
    /// Probe intervals have endpoints on the grid refined by `probe_resolution`
    /// and length above `c/n`. A probe is certified through the largest
    /// grid-aligned interval it contains (members occupy whole cells, so
    /// nothing finer is attainable); probes too short to contain a full cell
    /// are vacuous. This is a sound check of the discrete statement, not a
    /// proof of the real-interval one.
    pub fn is_normal(&self, c: f64, probe_resolution: usize) -> bool {
        is_normal_members(&self.enumerate(), self.n, c, probe_resolution, |s, e| {
            self.max_member_len_within(s, e)
        })
    }
}

/// Normality check against an explicit member list; used by [`IntervalSystem::is_normal`]
/// and by tests that doctor the member set.
pub fn is_normal_members(
    members: &[GridInterval],
    n: usize,
    c: f64,
    probe_resolution: usize,
    max_len_within: impl Fn(usize, usize) -> usize,
) -> bool {
    assert!(c > 1.0, "normality constant must exceed 1");
    assert!(probe_resolution >= 2, "probe resolution must be at least 2");

    // (ii) endpoints on the grid: GridInterval enforces this by construction,
    // but reject out-of-range members outright.
    if members.iter().any(|m| m.start >= m.end || m.end > n) {
        return false;
    }
    // (iii) every single cell is a member.
    let mut has_single = vec![false; n];
    for m in members {
        if m.len_cells() == 1 {
            has_single[m.start] = true;
        }
    }
    if !has_single.iter().all(|&b| b) {
        return false;
    }

    // (i) every sufficiently long probe contains a member at least 1/c its size.
    let r = probe_resolution;
    let fine = r * n;
    for a in 0..fine {
        for b in a + 1..=fine {
            let probe_len = (b - a) as f64 / fine as f64;
            if probe_len <= c / n as f64 {
                continue;
            }
            let s = a.div_ceil(r);
            let e = b / r;
            if s >= e {
                // no whole cell inside the probe; nothing a grid member could certify
                continue;
            }
            let hull_len = (e - s) as f64 / n as f64;
            let best = max_len_within(s, e) as f64 / n as f64;
            if best < hull_len / c - 1e-12 {
                return false;
            }
        }
    }
    true
}
