use serde::{Deserialize, Serialize};

use super::io::Label;
use crate::error::{Error, Result};

/// Error counts at one threshold: spoof trials scored `>= threshold` are
/// false acceptances, bona fide trials scored `< threshold` are false
/// rejections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub false_accepts: usize,
    pub false_rejects: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eer {
    pub rate: f64,
    pub threshold: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinDcf {
    pub cost: f64,
    pub threshold: f64,
}

/// Detection cost parameters. The defaults are a local convention, not
/// challenge-official values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            p_target: 0.05,
            c_miss: 1.0,
            c_fa: 10.0,
        }
    }
}

fn class_counts(scores: &[(f64, Label)]) -> Result<(usize, usize)> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("score"));
    }
    let bona = scores.iter().filter(|(_, l)| *l == Label::Bonafide).count();
    let spoof = scores.len() - bona;
    if bona == 0 || spoof == 0 {
        return Err(Error::invalid(format!(
            "metrics need both classes, got {bona} bona fide and {spoof} spoof scores"
        )));
    }
    Ok((bona, spoof))
}

/// `-inf`, the midpoints between consecutive distinct scores, and `+inf`.
pub fn sweep_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(sorted.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(sorted.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(f64::INFINITY);
    out
}

/// Error counts at every sweep threshold, in increasing threshold order.
pub fn roc_points(scores: &[(f64, Label)]) -> Result<Vec<RocPoint>> {
    let (bona, spoof) = class_counts(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        false_accepts: spoof,
        false_rejects: 0,
    }];
    let (mut fa, mut fr) = (spoof, 0);
    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == value {
            match sorted[i].1 {
                Label::Bonafide => fr += 1,
                Label::Spoof => fa -= 1,
            }
            i += 1;
        }
        let threshold = match sorted.get(i) {
            Some(next) => 0.5 * (value + next.0),
            None => f64::INFINITY,
        };
        points.push(RocPoint {
            threshold,
            false_accepts: fa,
            false_rejects: fr,
        });
    }
    debug_assert_eq!((fa, fr), (0, bona));
    Ok(points)
}

/// Exact rational `num / den` with `den > 0`.
#[derive(Clone, Copy, Debug)]
struct Ratio {
    num: i128,
    den: i128,
}

impl Ratio {
    fn new(num: i128, den: i128) -> Ratio {
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i128;
        Ratio { num: num / g, den: den / g }
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Where the segment between two operating points meets `FAR = FRR`, as a
/// fraction along the segment and the common rate. Coordinates are scaled
/// to a shared integer denominator.
fn crossing(p: (i128, i128), q: (i128, i128), scale: i128) -> Option<(Ratio, Ratio)> {
    let dp = p.0 - p.1;
    let dq = q.0 - q.1;
    if dp == 0 {
        return Some((Ratio::new(0, 1), Ratio::new(p.0, scale)));
    }
    if dq == 0 {
        return Some((Ratio::new(1, 1), Ratio::new(q.0, scale)));
    }
    if (dp > 0) == (dq > 0) {
        return None;
    }
    let t = Ratio::new(dp, dp - dq);
    let rate = Ratio::new(dp * q.0 - dq * p.0, (dp - dq) * scale);
    Some((t, rate))
}

/// Equal error rate of the ROC convex hull: the operating points are joined
/// by their lower-left hull and the rate is read where the hull meets
/// `FAR = FRR`. The result is an exact rational rounded once, so it does not
/// depend on summation order. The returned threshold interpolates linearly
/// between the two sweep thresholds bounding the crossing.
pub fn compute_eer(scores: &[(f64, Label)]) -> Result<Eer> {
    let (bona, spoof) = class_counts(scores)?;
    let points = roc_points(scores)?;
    let (b, s) = (bona as i128, spoof as i128);
    let scale = b * s;
    // FAR along x, FRR along y, both over `scale`
    let xy = |p: &RocPoint| (p.false_accepts as i128 * b, p.false_rejects as i128 * s);

    // lower hull of points sorted by increasing FAR (reverse threshold order)
    let mut hull: Vec<usize> = Vec::new();
    for i in (0..points.len()).rev() {
        let c = xy(&points[i]);
        while hull.len() >= 2 {
            let a = xy(&points[hull[hull.len() - 2]]);
            let m = xy(&points[hull[hull.len() - 1]]);
            let cross = (m.0 - a.0) * (c.1 - a.1) - (m.1 - a.1) * (c.0 - a.0);
            if cross <= 0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    for w in hull.windows(2) {
        let (p, q) = (&points[w[0]], &points[w[1]]);
        if let Some((t, rate)) = crossing(xy(p), xy(q), scale) {
            let t = t.to_f64();
            let threshold = match (p.threshold.is_finite(), q.threshold.is_finite()) {
                (true, true) => p.threshold + t * (q.threshold - p.threshold),
                (true, false) => p.threshold,
                (false, true) => q.threshold,
                (false, false) => 0.0,
            };
            return Ok(Eer {
                rate: rate.to_f64(),
                threshold,
            });
        }
    }
    unreachable!("the hull runs from (0, 1) to (1, 0) and must cross FAR = FRR")
}

/// Minimum over the sweep of
/// `p·c_miss·P_miss + (1 − p)·c_fa·P_fa`, divided by the cost of the better
/// trivial system `min(p·c_miss, (1 − p)·c_fa)`.
pub fn compute_min_dcf(scores: &[(f64, Label)], cost: &CostModel) -> Result<MinDcf> {
    let CostModel { p_target, c_miss, c_fa } = *cost;
    if !(p_target > 0.0 && p_target < 1.0 && c_miss > 0.0 && c_fa > 0.0) {
        return Err(Error::invalid(format!(
            "cost model needs 0 < p_target < 1 and positive costs, got {cost:?}"
        )));
    }
    let (bona, spoof) = class_counts(scores)?;
    let w_miss = p_target * c_miss;
    let w_fa = (1.0 - p_target) * c_fa;
    let norm = w_miss.min(w_fa);
    let mut best = MinDcf {
        cost: f64::INFINITY,
        threshold: f64::NAN,
    };
    for p in roc_points(scores)? {
        let dcf = w_miss * (p.false_rejects as f64 / bona as f64) + w_fa * (p.false_accepts as f64 / spoof as f64);
        let dcf = dcf / norm;
        if dcf < best.cost {
            best = MinDcf {
                cost: dcf,
                threshold: p.threshold,
            };
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Bonafide as B, Spoof as S};

    #[test]
    fn separated() {
        let s = [(0.9, B), (0.8, B), (0.1, S), (0.2, S)];
        let eer = compute_eer(&s).unwrap();
        assert_eq!(eer.rate, 0.0);
        assert!(eer.threshold > 0.2 && eer.threshold < 0.8);
        assert_eq!(compute_min_dcf(&s, &CostModel::default()).unwrap().cost, 0.0);
    }

    #[test]
    fn four_score_case() {
        let s = [(0.8, B), (0.4, B), (0.6, S), (0.2, S)];
        assert_eq!(compute_eer(&s).unwrap().rate, 0.25);
    }

    #[test]
    fn swapped_labels_sit_on_the_chance_diagonal() {
        let s = [(0.9, S), (0.8, S), (0.1, B), (0.2, B)];
        assert_eq!(compute_eer(&s).unwrap().rate, 0.5);
    }

    #[test]
    fn identical_scores() {
        let s = [(0.5, B), (0.5, S), (0.5, S)];
        assert_eq!(compute_eer(&s).unwrap().rate, 0.5);
        assert_eq!(compute_min_dcf(&s, &CostModel::default()).unwrap().cost, 1.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(compute_eer(&[(0.1, B), (0.2, B)]).is_err());
        assert!(compute_min_dcf(&[(0.1, S)], &CostModel::default()).is_err());
        assert!(compute_eer(&[(f64::NAN, B), (0.2, S)]).is_err());
    }

    #[test]
    fn sweep_is_midpoints() {
        assert_eq!(
            sweep_thresholds(&[0.3, 0.1, 0.3, 0.5]),
            vec![f64::NEG_INFINITY, 0.2, 0.4, f64::INFINITY]
        );
    }
}
