//! The 27-strategy space, the three pruning principles, and the
//! recommendation matrix for the 14 surviving strategies.

use serde::Serialize;

use crate::types::{Regime, ShardLevel, Strategy};

/// All 27 (P, G, OS) combinations in lexicographic order with N < I < G
/// per position: `NNN` first, `GGG` last.
pub fn enumerate_all() -> Vec<Strategy> {
    let mut out = Vec::with_capacity(27);
    for p in ShardLevel::ALL {
        for g in ShardLevel::ALL {
            for os in ShardLevel::ALL {
                out.push(Strategy::new(p, g, os));
            }
        }
    }
    out
}

/// Principle 1: optimizer state must be sharded at least as finely as both
/// parameters and gradients. Sharding OS more coarsely costs memory without
/// saving any communication.
pub fn passes_principle1(s: &Strategy) -> bool {
    s.os.rank() >= s.p.rank() && s.os.rank() >= s.g.rank()
}

/// Principle 2 (trainable share at least one sixth): parameters at least as
/// coarse as gradients, gradients at least as coarse as optimizer state.
/// Parameters are touched twice per micro-batch (forward and backward), so
/// they should be the last component to give up locality.
pub fn passes_principle2(s: &Strategy) -> bool {
    s.p.rank() <= s.g.rank() && s.g.rank() <= s.os.rank()
}

/// Principle 3 (PEFT): gradients should not be sharded. The trainable share
/// is tiny, so sharding G saves almost nothing but adds communication.
pub fn passes_principle3(s: &Strategy) -> bool {
    s.g == ShardLevel::NoShard
}

pub fn filter_principle1(strategies: &[Strategy]) -> Vec<Strategy> {
    strategies
        .iter()
        .copied()
        .filter(passes_principle1)
        .collect()
}

pub fn filter_principle2(strategies: &[Strategy]) -> Vec<Strategy> {
    strategies
        .iter()
        .copied()
        .filter(passes_principle2)
        .collect()
}

pub fn filter_principle3(strategies: &[Strategy]) -> Vec<Strategy> {
    strategies
        .iter()
        .copied()
        .filter(passes_principle3)
        .collect()
}

/// The 14 Principle-1 survivors in table row order.
pub fn principle1_set() -> Vec<Strategy> {
    filter_principle1(&enumerate_all())
}

/// Recommendation matrix, stored verbatim as ground truth. Row order matches
/// `principle1_set()`; columns are (full, partial-large, partial-small, peft).
///
/// The matrix is not derivable from the three principles alone: a few cells
/// encode dominance arguments between specific strategy pairs (e.g. INI loses
/// to IIG near the one-sixth boundary, ING loses to INI under PEFT), so it is
/// kept as data and the principle predicates are reported alongside it.
const RECOMMENDATION_MATRIX: [(&str, [bool; 4]); 14] = [
    ("NNN", [true, true, true, true]),
    ("NNI", [true, true, true, true]),
    ("NNG", [true, true, true, false]),
    ("NII", [true, true, true, false]),
    ("NIG", [true, true, true, false]),
    ("NGG", [true, true, true, false]),
    ("INI", [false, false, false, true]),
    ("ING", [false, true, true, false]),
    ("III", [false, false, true, false]),
    ("IIG", [true, true, false, false]),
    ("IGG", [true, true, true, false]),
    ("GNG", [false, true, true, true]),
    ("GIG", [false, true, true, false]),
    ("GGG", [true, true, true, false]),
];

fn regime_column(regime: Regime) -> usize {
    match regime {
        Regime::Full => 0,
        Regime::PartialLarge => 1,
        Regime::PartialSmall => 2,
        Regime::Peft => 3,
    }
}

/// Where a recommendation verdict comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecommendationSource {
    /// The stored ground-truth matrix.
    Table1,
    /// Derived purely from the principle predicates.
    PrincipleFilter,
}

/// One strategy's verdict for one regime, with the principle predicates
/// included so disagreements between the matrix and the principles are
/// visible rather than silently resolved.
#[derive(Debug, Clone, Serialize)]
pub struct Recommendation {
    pub strategy: Strategy,
    pub regime: Regime,
    pub recommended: bool,
    pub source: RecommendationSource,
    pub passes_p1: bool,
    pub passes_p2: bool,
    pub passes_p3: bool,
    /// Set when the matrix verdict differs from the principle-only verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Which principles gate a regime when deriving a verdict from predicates
/// alone: P1 always, P2 when the trainable share is at least one sixth,
/// P3 under PEFT.
pub fn principle_verdict(s: &Strategy, regime: Regime) -> bool {
    let mut ok = passes_principle1(s);
    match regime {
        Regime::Full | Regime::PartialLarge => ok &= passes_principle2(s),
        Regime::PartialSmall => {}
        Regime::Peft => ok &= passes_principle3(s),
    }
    ok
}

/// The 14 Principle-1 strategies with their ground-truth verdicts for one
/// regime. Rows keep table order.
pub fn recommend(regime: Regime) -> Vec<Recommendation> {
    let col = regime_column(regime);
    RECOMMENDATION_MATRIX
        .iter()
        .map(|(code, row)| {
            let strategy = Strategy::parse(code).expect("matrix codes are valid");
            let recommended = row[col];
            let derived = principle_verdict(&strategy, regime);
            let note = if recommended != derived {
                Some(if recommended {
                    format!("matrix recommends {code} although a principle predicate fails for this regime")
                } else {
                    format!("matrix rejects {code} on dominance grounds beyond the principle predicates")
                })
            } else {
                None
            };
            Recommendation {
                strategy,
                regime,
                recommended,
                source: RecommendationSource::Table1,
                passes_p1: passes_principle1(&strategy),
                passes_p2: passes_principle2(&strategy),
                passes_p3: passes_principle3(&strategy),
                note,
            }
        })
        .collect()
}

/// Matrix verdict for a single (strategy, regime) cell. Returns `None` for
/// strategies outside the 14-row table.
pub fn table_verdict(strategy: &Strategy, regime: Regime) -> Option<bool> {
    let code = strategy.code();
    RECOMMENDATION_MATRIX
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, row)| row[regime_column(regime)])
}

/// CSV export of the full matrix: one line per (strategy, regime) pair with
/// the principle predicates alongside.
pub fn matrix_csv() -> String {
    let mut out = String::from("code,regime,recommended,passes_p1,passes_p2,passes_p3\n");
    for regime in Regime::ALL {
        for rec in recommend(regime) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.strategy.code(),
                regime.label(),
                rec.recommended,
                rec.passes_p1,
                rec.passes_p2,
                rec.passes_p3
            ));
        }
    }
    out
}
