//! Valley machinery over the random potential: depth and refinement of
//! valleys, the alternating Gamma-range scan that locates deep-valley
//! extrema on each side of the origin, the case split at the origin, the
//! renumbered cover of the rescaled support, indeterminate sets, and an
//! independent brute-force oracle for the same extrema.
//!
//! Tie-breaking is uniform everywhere: among positions with equal potential
//! value, the one with the smallest absolute coordinate wins, and if both
//! signs attain it the positive one wins. All threshold comparisons go
//! through [`reaches`] so the scan, the oracle and the case split agree on
//! borderline (exactly-Gamma) fluctuations bit for bit.

use crate::env::{extend_environment, compute_potential, Environment, Potential};
use crate::error::{Result, SinaiError};
use serde::{Deserialize, Serialize};

/// Single shared predicate for "the range a - b reaches gamma".
#[inline]
pub fn reaches(a: f64, b: f64, gamma: f64) -> bool {
    a - b >= gamma
}

/// Depth threshold parameters: `Gamma_t = log t + gamma * log log t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub t: f64,
    pub gamma: f64,
    pub log_t: f64,
    pub loglog_t: f64,
    pub big_gamma: f64,
}

impl GammaParams {
    pub fn new(t: f64, gamma: f64) -> Result<Self> {
        if !(t.is_finite() && t > std::f64::consts::E) {
            return Err(SinaiError::config(format!(
                "t must exceed e so that log log t > 0, got {t}"
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(SinaiError::config(format!("gamma must be >= 0, got {gamma}")));
        }
        let log_t = t.ln();
        let loglog_t = log_t.ln();
        Ok(GammaParams {
            t,
            gamma,
            log_t,
            loglog_t,
            big_gamma: log_t + gamma * loglog_t,
        })
    }

    /// Integer radius of the indeterminate sets: `floor((log log t)^2)`.
    pub fn indeterminate_radius(&self) -> i64 {
        (self.loglog_t * self.loglog_t).floor() as i64
    }

    /// Rescaled-support bound `K (log t)^2` in lattice units.
    pub fn support_bound(&self, k: f64) -> f64 {
        k * self.log_t * self.log_t
    }
}

/// Window-growth policy for adaptive scans, in lattice sites per side.
#[derive(Clone, Copy, Debug)]
pub struct ScanLimits {
    pub chunk: i64,
    pub cap: i64,
}

impl ScanLimits {
    /// Defaults scale with the expected extrema spacing: chunks of
    /// `4 (log t)^2` sites, hard cap `512 (log t)^2` per side.
    pub fn for_params(params: &GammaParams) -> Self {
        let unit = params.log_t * params.log_t;
        ScanLimits {
            chunk: (4.0 * unit).ceil().max(64.0) as i64,
            cap: (512.0 * unit).ceil() as i64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    Min,
    Max,
}

/// A committed extremum of the scan (or oracle).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Marker {
    pub kind: MarkerKind,
    pub pos: i64,
    pub value: f64,
}

/// Helper events of the scan: the first-crossing times that close each
/// extremum (`tau` closes a minimum, `sigma` closes a maximum).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Tau,
    Sigma,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanEvent {
    pub kind: EventKind,
    pub pos: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Right,
    Left,
}

/// One side's alternating sequence of Gamma-extrema markers, in scan order
/// (outward from the origin).
#[derive(Clone, Debug, PartialEq)]
pub struct ExtremaScan {
    pub direction: Direction,
    pub gamma: f64,
    pub markers: Vec<Marker>,
    pub events: Vec<ScanEvent>,
    /// True when the side's stop condition was met inside the window.
    pub complete: bool,
    /// Outermost position examined.
    pub reached: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    SeekMin,
    SeekMax,
}

/// Incremental state of the alternating range scan. Positions must be fed
/// outward (0, 1, 2, ... or 0, -1, -2, ...); feeding order encodes the
/// smallest-|coordinate| tie rule because running extrema are only replaced
/// on strict improvement.
#[derive(Clone, Debug)]
pub struct ScanState {
    gamma: f64,
    phase: Phase,
    run_pos: i64,
    run_val: f64,
    pub markers: Vec<Marker>,
    pub events: Vec<ScanEvent>,
}

impl ScanState {
    pub fn new(gamma: f64, origin_value: f64) -> Self {
        ScanState {
            gamma,
            phase: Phase::SeekMin,
            run_pos: 0,
            run_val: origin_value,
            markers: Vec::new(),
            events: Vec::new(),
        }
    }

    /// Current running argmin/argmax position (the candidate for the next
    /// committed marker).
    pub fn pending_pos(&self) -> i64 {
        self.run_pos
    }

    pub fn seeking_min(&self) -> bool {
        self.phase == Phase::SeekMin
    }

    /// Advance by one site; returns the marker committed at this site, if any.
    #[inline]
    pub fn push(&mut self, pos: i64, value: f64) -> Option<Marker> {
        match self.phase {
            Phase::SeekMin => {
                if value < self.run_val {
                    self.run_val = value;
                    self.run_pos = pos;
                    None
                } else if reaches(value, self.run_val, self.gamma) {
                    let marker = Marker {
                        kind: MarkerKind::Min,
                        pos: self.run_pos,
                        value: self.run_val,
                    };
                    self.markers.push(marker);
                    self.events.push(ScanEvent {
                        kind: EventKind::Tau,
                        pos,
                    });
                    self.phase = Phase::SeekMax;
                    self.run_val = value;
                    self.run_pos = pos;
                    Some(marker)
                } else {
                    None
                }
            }
            Phase::SeekMax => {
                if value > self.run_val {
                    self.run_val = value;
                    self.run_pos = pos;
                    None
                } else if reaches(self.run_val, value, self.gamma) {
                    let marker = Marker {
                        kind: MarkerKind::Max,
                        pos: self.run_pos,
                        value: self.run_val,
                    };
                    self.markers.push(marker);
                    self.events.push(ScanEvent {
                        kind: EventKind::Sigma,
                        pos,
                    });
                    self.phase = Phase::SeekMin;
                    self.run_val = value;
                    self.run_pos = pos;
                    Some(marker)
                } else {
                    None
                }
            }
        }
    }
}

/// Tie-aware preference: is `(pos_a, val_a)` a better minimum than b?
#[inline]
fn better_min(pos_a: i64, val_a: f64, pos_b: i64, val_b: f64) -> bool {
    if val_a != val_b {
        return val_a < val_b;
    }
    smaller_coordinate(pos_a, pos_b)
}

#[inline]
fn better_max(pos_a: i64, val_a: f64, pos_b: i64, val_b: f64) -> bool {
    if val_a != val_b {
        return val_a > val_b;
    }
    smaller_coordinate(pos_a, pos_b)
}

/// Smallest absolute coordinate; positive wins the +/- tie.
#[inline]
fn smaller_coordinate(a: i64, b: i64) -> bool {
    match a.abs().cmp(&b.abs()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a > b,
    }
}

/// Depth of the valley `{m_left, m, m_right}` per the min-of-walls rule.
pub fn depth(pot: &Potential, m_left: i64, m: i64, m_right: i64) -> Result<f64> {
    pot.check_window(m_left, m_right)?;
    if !(m_left <= m && m <= m_right) {
        return Err(SinaiError::contract(format!(
            "triplet must be ordered: {m_left} <= {m} <= {m_right}"
        )));
    }
    Ok((pot.s(m_left) - pot.s(m)).min(pot.s(m_right) - pot.s(m)))
}

/// Do the three max/min conditions of a valley hold for this triplet?
pub fn is_valley(pot: &Potential, m_left: i64, m: i64, m_right: i64) -> Result<bool> {
    pot.check_window(m_left, m_right)?;
    if !(m_left <= m && m <= m_right) {
        return Err(SinaiError::contract(format!(
            "triplet must be ordered: {m_left} <= {m} <= {m_right}"
        )));
    }
    Ok(pot.s(m_left) == pot.max_over(m_left, m)
        && pot.s(m_right) == pot.max_over(m, m_right)
        && pot.s(m) == pot.min_over(m_left, m_right))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Valley {
    pub m_left: i64,
    pub m: i64,
    pub m_right: i64,
}

impl Valley {
    pub fn depth(&self, pot: &Potential) -> Result<f64> {
        depth(pot, self.m_left, self.m, self.m_right)
    }
}

/// Result of a refinement: the deepest internal descent of the flank.
/// For a right refinement `top <= bottom` (descent rightward on `[m, M'']`);
/// for a left refinement `bottom <= top` (descent leftward on `[M', m]`).
/// A degenerate pair (`top == bottom`, `drop == 0`) means the flank is
/// monotone toward the wall.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Refinement {
    pub top: i64,
    pub bottom: i64,
    pub drop: f64,
}

fn require_valley(pot: &Potential, v: &Valley) -> Result<()> {
    if !is_valley(pot, v.m_left, v.m, v.m_right)? {
        return Err(SinaiError::contract(format!(
            "triplet {{{}, {}, {}}} is not a valley",
            v.m_left, v.m, v.m_right
        )));
    }
    Ok(())
}

/// Deepest descent `S[t'] - S[t'']` over `m <= t' <= t'' <= m_right`.
/// Ties: smallest |bottom| first, then smallest |top| (positive wins +/-).
pub fn refine_right(pot: &Potential, v: &Valley) -> Result<Refinement> {
    require_valley(pot, v)?;
    let mut run_top = v.m;
    let mut run_top_val = pot.s(v.m);
    let mut best: Option<Refinement> = None;
    for bottom in v.m..=v.m_right {
        let val = pot.s(bottom);
        if better_max(bottom, val, run_top, run_top_val) {
            run_top = bottom;
            run_top_val = val;
        }
        let cand = Refinement {
            top: run_top,
            bottom,
            drop: run_top_val - val,
        };
        if best.as_ref().map_or(true, |b| prefer_refinement(&cand, b)) {
            best = Some(cand);
        }
    }
    Ok(best.expect("non-empty flank"))
}

/// Mirror image of [`refine_right`] on the left flank `[m_left, m]`.
pub fn refine_left(pot: &Potential, v: &Valley) -> Result<Refinement> {
    require_valley(pot, v)?;
    let mut run_top = v.m;
    let mut run_top_val = pot.s(v.m);
    let mut best: Option<Refinement> = None;
    for bottom in (v.m_left..=v.m).rev() {
        let val = pot.s(bottom);
        if better_max(bottom, val, run_top, run_top_val) {
            run_top = bottom;
            run_top_val = val;
        }
        let cand = Refinement {
            top: run_top,
            bottom,
            drop: run_top_val - val,
        };
        if best.as_ref().map_or(true, |b| prefer_refinement(&cand, b)) {
            best = Some(cand);
        }
    }
    Ok(best.expect("non-empty flank"))
}

fn prefer_refinement(a: &Refinement, b: &Refinement) -> bool {
    if a.drop != b.drop {
        return a.drop > b.drop;
    }
    if a.bottom != b.bottom {
        return smaller_coordinate(a.bottom, b.bottom);
    }
    smaller_coordinate(a.top, b.top)
}

/// Outcome of one side's scan over a fixed potential window.
struct SideScan {
    scan: ExtremaScan,
}

/// Scan one side of a fixed potential. `bound` (in absolute lattice units)
/// enables the cover stop rule: the scan halts once every future minimum
/// must fall outside the rescaled support and the wall following the last
/// inside minimum has been committed (`complete` records whether that rule
/// closed, which is what drives adaptive window extension). Without a bound
/// the side is scanned to the window edge (used for oracle comparisons).
fn scan_side_fixed(pot: &Potential, dir: Direction, gamma: f64, bound: Option<f64>) -> SideScan {
    let mut state = ScanState::new(gamma, pot.s(0));
    let mut complete = false;
    let mut reached = 0i64;
    let positions: Box<dyn Iterator<Item = i64>> = match dir {
        Direction::Right => Box::new(1..=pot.hi()),
        Direction::Left => Box::new((pot.lo()..=-1).rev()),
    };
    let stoppable = |state: &ScanState| {
        // (a) at least one min/max pair is committed, so the wall after the
        // last inside minimum exists and the origin case split has its first
        // minimum; (b) the pending minimum already lies outside the support.
        state.seeking_min() && state.markers.len() >= 2
    };
    for pos in positions {
        state.push(pos, pot.s(pos));
        reached = pos;
        if let Some(b) = bound {
            if stoppable(&state) && (state.pending_pos().abs() as f64) >= b {
                complete = true;
                break;
            }
        }
    }
    if let Some(b) = bound {
        // The window may end exactly in a stoppable state.
        if !complete && stoppable(&state) && (state.pending_pos().abs() as f64) >= b {
            complete = true;
        }
    }
    SideScan {
        scan: ExtremaScan {
            direction: dir,
            gamma,
            markers: state.markers,
            events: state.events,
            complete,
            reached,
        },
    }
}

/// Adaptive one-sided scan: widens the environment in chunks until the stop
/// rule closes or the cap is hit.
pub fn gamma_extrema_scan(
    env: &mut Environment,
    params: &GammaParams,
    dir: Direction,
    bound: f64,
    limits: &ScanLimits,
) -> Result<ExtremaScan> {
    loop {
        let pot = compute_potential(env);
        let side = scan_side_fixed(&pot, dir, params.big_gamma, Some(bound));
        if side.scan.complete {
            return Ok(side.scan);
        }
        let (lo, hi) = (env.lo(), env.hi());
        let capped = match dir {
            Direction::Right => hi >= limits.cap,
            Direction::Left => -lo >= limits.cap,
        };
        if capped {
            return Err(SinaiError::ScanIncomplete {
                context: format!("{dir:?} scan did not close within the window cap"),
                reached: side.scan.reached,
                committed: side.scan.markers.len(),
            });
        }
        let (new_lo, new_hi) = match dir {
            Direction::Right => (lo, (hi + limits.chunk).min(limits.cap)),
            Direction::Left => ((lo - limits.chunk).max(-limits.cap), hi),
        };
        *env = extend_environment(env, new_lo, new_hi)?;
    }
}

/// Origin case resolution: either the central maximum separates two deep
/// valleys (case A_t) or the two central valleys merge into one.
#[derive(Clone, Copy, Debug, PartialEq)]
struct CenterResolution {
    case_at: bool,
    /// Central maximum between the two first minima (kept only in case A_t).
    m_zero: Marker,
    /// Merged central minimum (only meaningful when `!case_at`).
    merged_min: Marker,
}

fn resolve_center(pot: &Potential, gamma: f64, m0_left: Marker, m0_right: Marker) -> CenterResolution {
    debug_assert_eq!(m0_left.kind, MarkerKind::Min);
    debug_assert_eq!(m0_right.kind, MarkerKind::Min);
    let mut best_pos = m0_left.pos;
    let mut best_val = pot.s(m0_left.pos);
    for k in m0_left.pos..=m0_right.pos {
        let v = pot.s(k);
        if better_max(k, v, best_pos, best_val) {
            best_pos = k;
            best_val = v;
        }
    }
    let m_zero = Marker {
        kind: MarkerKind::Max,
        pos: best_pos,
        value: best_val,
    };
    // The outer walls of the two central valleys clear Gamma by
    // construction, so the case split reduces to the central maximum.
    let case_at = reaches(m_zero.value, m0_left.value, gamma)
        && reaches(m_zero.value, m0_right.value, gamma);
    let merged_min = if better_min(m0_left.pos, m0_left.value, m0_right.pos, m0_right.value) {
        m0_left
    } else {
        m0_right
    };
    CenterResolution {
        case_at,
        m_zero,
        merged_min,
    }
}

/// The case-resolved, position-ordered alternating marker sequence over the
/// whole window of `pot`. This is exactly the sequence the brute-force
/// oracle must reproduce.
pub fn resolved_markers(pot: &Potential, gamma: f64) -> Result<Vec<Marker>> {
    let right = scan_side_fixed(pot, Direction::Right, gamma, None).scan;
    let left = scan_side_fixed(pot, Direction::Left, gamma, None).scan;
    resolve_two_sided(pot, gamma, &left, &right).map(|r| r.sequence)
}

struct ResolvedSequence {
    sequence: Vec<Marker>,
    case_at: bool,
}

fn resolve_two_sided(
    pot: &Potential,
    gamma: f64,
    left: &ExtremaScan,
    right: &ExtremaScan,
) -> Result<ResolvedSequence> {
    let (m0l, m0r) = match (left.markers.first(), right.markers.first()) {
        (Some(&l), Some(&r)) => (l, r),
        _ => {
            return Err(SinaiError::ScanIncomplete {
                context: "no central minimum committed on one side".into(),
                reached: right.reached.max(-left.reached),
                committed: left.markers.len() + right.markers.len(),
            })
        }
    };
    let center = resolve_center(pot, gamma, m0l, m0r);
    let mut seq: Vec<Marker> = left.markers[1..].iter().rev().copied().collect();
    if center.case_at {
        if m0l.pos == m0r.pos {
            // Both scans committed the same origin minimum; keep one copy.
            seq.push(m0l);
        } else {
            seq.push(m0l);
            seq.push(center.m_zero);
            seq.push(m0r);
        }
    } else {
        seq.push(center.merged_min);
    }
    seq.extend_from_slice(&right.markers[1..]);
    debug_assert!(seq.windows(2).all(|w| w[0].pos < w[1].pos));
    debug_assert!(seq.windows(2).all(|w| w[0].kind != w[1].kind));
    Ok(ResolvedSequence {
        sequence: seq,
        case_at: center.case_at,
    })
}

/// The renumbered random cover of the rescaled support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValleyDecomposition {
    pub params: GammaParams,
    /// Half-width of the support of f in rescaled units.
    pub k: f64,
    pub n_f: usize,
    pub case_at: bool,
    /// Summits `M_1 .. M_{n_f + 1}` (empty when `n_f == 0`).
    pub m_upper: Vec<i64>,
    /// Bottoms `m_1 .. m_{n_f}`.
    pub m_lower: Vec<i64>,
    /// Indeterminate intervals around each summit.
    pub u_sets: Vec<(i64, i64)>,
}

impl ValleyDecomposition {
    /// Span of the cover `V_f = [M_1, M_{n_f+1}]`, `None` when empty.
    pub fn v_f(&self) -> Option<(i64, i64)> {
        if self.n_f == 0 {
            None
        } else {
            Some((self.m_upper[0], self.m_upper[self.n_f]))
        }
    }

    pub fn valley(&self, i: usize) -> Valley {
        Valley {
            m_left: self.m_upper[i],
            m: self.m_lower[i],
            m_right: self.m_upper[i + 1],
        }
    }

    /// Which valley (0-based) a site belongs to: `[M_i, M_{i+1})`, with the
    /// final summit assigned to the last valley.
    pub fn valley_of(&self, site: i64) -> Option<usize> {
        if self.n_f == 0 {
            return None;
        }
        if site < self.m_upper[0] || site > self.m_upper[self.n_f] {
            return None;
        }
        match self.m_upper.binary_search(&site) {
            Ok(i) => Some(i.min(self.n_f - 1)),
            Err(i) => Some(i - 1),
        }
    }

    pub fn in_indeterminate(&self, site: i64) -> bool {
        self.u_sets.iter().any(|&(lo, hi)| site >= lo && site <= hi)
    }
}

/// Indeterminate sets `U_l = [M_l - r, M_l + r]`, `r = floor((log log t)^2)`.
pub fn indeterminate_sets(d: &ValleyDecomposition) -> Vec<(i64, i64)> {
    let r = d.params.indeterminate_radius();
    d.m_upper.iter().map(|&m| (m - r, m + r)).collect()
}

/// Build the cover from a fixed potential window, treating the window edge
/// as the end of the world: markers that never committed do not exist. Each
/// side must still have committed its first minimum and the following
/// maximum, otherwise the origin case split and the outer walls are
/// undetermined and `ScanIncomplete` is returned.
pub fn construct_cover_fixed(
    pot: &Potential,
    params: &GammaParams,
    k: f64,
) -> Result<ValleyDecomposition> {
    if !(k > 0.0) {
        return Err(SinaiError::config(format!("K must be positive, got {k}")));
    }
    let bound = params.support_bound(k);
    let gamma = params.big_gamma;
    let right = scan_side_fixed(pot, Direction::Right, gamma, Some(bound)).scan;
    let left = scan_side_fixed(pot, Direction::Left, gamma, Some(bound)).scan;
    for side in [&left, &right] {
        if side.markers.len() < 2 {
            return Err(SinaiError::ScanIncomplete {
                context: format!(
                    "{:?} scan committed no minimum/maximum pair within the window",
                    side.direction
                ),
                reached: side.reached,
                committed: side.markers.len(),
            });
        }
    }
    assemble_cover(pot, params, k, bound, &left, &right)
}

/// Build the cover, widening the environment adaptively as the scans demand.
pub fn construct_cover(
    env: &mut Environment,
    params: &GammaParams,
    k: f64,
) -> Result<ValleyDecomposition> {
    if !(k > 0.0) {
        return Err(SinaiError::config(format!("K must be positive, got {k}")));
    }
    let limits = ScanLimits::for_params(params);
    let bound = params.support_bound(k);
    gamma_extrema_scan(env, params, Direction::Right, bound, &limits)?;
    gamma_extrema_scan(env, params, Direction::Left, bound, &limits)?;
    // Re-scan the final window so both sides see one consistent potential;
    // widening only appends sites, so committed markers are unchanged.
    let pot = compute_potential(env);
    construct_cover_fixed(&pot, params, k)
}

fn assemble_cover(
    pot: &Potential,
    params: &GammaParams,
    k: f64,
    bound: f64,
    left: &ExtremaScan,
    right: &ExtremaScan,
) -> Result<ValleyDecomposition> {
    let resolved = resolve_two_sided(pot, params.big_gamma, left, right)?;
    let n_plus = right
        .markers
        .iter()
        .filter(|m| m.kind == MarkerKind::Min && (m.pos as f64) < bound)
        .count();
    let n_minus = left
        .markers
        .iter()
        .filter(|m| m.kind == MarkerKind::Min && (m.pos as f64) > -bound)
        .count();
    let merged = !resolved.case_at;
    let n_f = (n_plus + n_minus).saturating_sub(usize::from(merged));

    let seq = &resolved.sequence;
    let inside: Vec<usize> = seq
        .iter()
        .enumerate()
        .filter(|(_, mk)| {
            mk.kind == MarkerKind::Min && (mk.pos as f64) < bound && (mk.pos as f64) > -bound
        })
        .map(|(i, _)| i)
        .collect();
    let mut included = inside;
    if included.len() == n_f + 1 {
        // Exactly one of the two central minima lies outside the support
        // while the merged representative lies inside; the merged valley is
        // attributed to the outside and dropped from the cover.
        debug_assert!(merged);
        let merged_pos = resolve_center(
            pot,
            params.big_gamma,
            left.markers[0],
            right.markers[0],
        )
        .merged_min
        .pos;
        included.retain(|&i| seq[i].pos != merged_pos);
    }
    if included.len() != n_f {
        return Err(SinaiError::contract(format!(
            "cover bookkeeping mismatch: {} included minima vs n_f = {n_f}",
            included.len()
        )));
    }

    let mut m_lower = Vec::with_capacity(n_f);
    let mut m_upper = Vec::with_capacity(n_f + 1);
    for (j, &i) in included.iter().enumerate() {
        if i == 0 || i + 1 == seq.len() {
            return Err(SinaiError::ScanIncomplete {
                context: format!(
                    "wall beside the cover minimum at {} was not committed",
                    seq[i].pos
                ),
                reached: seq[i].pos,
                committed: seq.len(),
            });
        }
        let (wall_l, bottom, wall_r) = (seq[i - 1], seq[i], seq[i + 1]);
        debug_assert_eq!(wall_l.kind, MarkerKind::Max);
        debug_assert_eq!(wall_r.kind, MarkerKind::Max);
        if j == 0 {
            m_upper.push(wall_l.pos);
        }
        m_lower.push(bottom.pos);
        m_upper.push(wall_r.pos);
    }

    let mut d = ValleyDecomposition {
        params: *params,
        k,
        n_f,
        case_at: resolved.case_at,
        m_upper,
        m_lower,
        u_sets: Vec::new(),
    };
    d.u_sets = indeterminate_sets(&d);
    Ok(d)
}

/// Independent O(n^2) oracle: a site is a Gamma-minimum iff some interval
/// around it has the site's value as its minimum and walls at least Gamma
/// higher on both sides (maxima symmetric). Candidates are reduced to an
/// alternating sequence with the shared tie rule.
pub fn brute_force_extrema(pot: &Potential, lo: i64, hi: i64, gamma: f64) -> Result<Vec<Marker>> {
    pot.check_window(lo, hi)?;
    let mut candidates = Vec::new();
    for x in lo..=hi {
        let v = pot.s(x);
        if certified(pot, lo, hi, x, v, gamma, MarkerKind::Min) {
            candidates.push(Marker {
                kind: MarkerKind::Min,
                pos: x,
                value: v,
            });
        } else if certified(pot, lo, hi, x, v, gamma, MarkerKind::Max) {
            candidates.push(Marker {
                kind: MarkerKind::Max,
                pos: x,
                value: v,
            });
        }
    }
    // Reduce runs of same-kind candidates to their best representative.
    let mut out: Vec<Marker> = Vec::new();
    for c in candidates {
        match out.last_mut() {
            Some(last) if last.kind == c.kind => {
                let replace = match c.kind {
                    MarkerKind::Min => better_min(c.pos, c.value, last.pos, last.value),
                    MarkerKind::Max => better_max(c.pos, c.value, last.pos, last.value),
                };
                if replace {
                    *last = c;
                }
            }
            _ => out.push(c),
        }
    }
    Ok(out)
}

fn certified(
    pot: &Potential,
    lo: i64,
    hi: i64,
    x: i64,
    v: f64,
    gamma: f64,
    kind: MarkerKind,
) -> bool {
    let wall = |range: &mut dyn Iterator<Item = i64>| -> bool {
        let mut best = f64::NEG_INFINITY;
        for u in range {
            let s = pot.s(u);
            match kind {
                MarkerKind::Min => {
                    if s < v {
                        break;
                    }
                    if s > best {
                        best = s;
                    }
                    if reaches(best, v, gamma) {
                        return true;
                    }
                }
                MarkerKind::Max => {
                    if s > v {
                        break;
                    }
                    if -s > best {
                        best = -s;
                    }
                    if reaches(v, -best, gamma) {
                        return true;
                    }
                }
            }
        }
        false
    };
    wall(&mut (lo..x).rev()) && wall(&mut (x + 1..=hi))
}

/// Report against the good-environment properties: finite valley count,
/// bounded cover span, comparable summit spacings, and no refinable
/// sub-valley of depth Gamma inside any cover valley.
#[derive(Clone, Debug, Serialize)]
pub struct GoodEnvReport {
    pub n_f: usize,
    pub span_sites: i64,
    pub span_ok: bool,
    pub spacing_min: Option<i64>,
    pub spacing_max: Option<i64>,
    pub spacing_ok: bool,
    pub refinement_ok: bool,
    pub ok: bool,
}

pub fn check_good_environment(
    pot: &Potential,
    d: &ValleyDecomposition,
    c1: f64,
    c2_low: f64,
    c2_high: f64,
) -> Result<GoodEnvReport> {
    let unit = d.params.log_t * d.params.log_t;
    let span_sites = d.v_f().map_or(0, |(a, b)| b - a);
    let span_ok = (span_sites as f64) <= c1 * unit;
    let spacings: Vec<i64> = d.m_upper.windows(2).map(|w| w[1] - w[0]).collect();
    let spacing_ok = spacings
        .iter()
        .all(|&s| (s as f64) >= c2_low * unit && (s as f64) <= c2_high * unit);
    let mut refinement_ok = true;
    for i in 0..d.n_f {
        let v = d.valley(i);
        let r = refine_right(pot, &v)?;
        let l = refine_left(pot, &v)?;
        if reaches(r.drop, 0.0, d.params.big_gamma) || reaches(l.drop, 0.0, d.params.big_gamma) {
            refinement_ok = false;
        }
    }
    Ok(GoodEnvReport {
        n_f: d.n_f,
        span_sites,
        span_ok,
        spacing_min: spacings.iter().min().copied(),
        spacing_max: spacings.iter().max().copied(),
        spacing_ok,
        refinement_ok,
        ok: span_ok && spacing_ok && refinement_ok,
    })
}
