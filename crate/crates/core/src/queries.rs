//! The benchmark queries over [`crate::generate::event_schema`], plus a
//! nested-list sum used to exercise loop flattening.

use std::fmt;
use std::str::FromStr;

use crate::schema::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryId {
    MaxPt,
    EtaOfBest,
    MassOfPairs,
    PtSumOfPairs,
}

impl QueryId {
    pub const ALL: [QueryId; 4] = [QueryId::MaxPt, QueryId::EtaOfBest, QueryId::MassOfPairs, QueryId::PtSumOfPairs];

    pub fn name(self) -> &'static str {
        match self {
            QueryId::MaxPt => "max-pt",
            QueryId::EtaOfBest => "eta-of-best",
            QueryId::MassOfPairs => "mass-of-pairs",
            QueryId::PtSumOfPairs => "pt-sum-of-pairs",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            QueryId::MaxPt => include_str!("../queries/max-pt.pq"),
            QueryId::EtaOfBest => include_str!("../queries/eta-of-best.pq"),
            QueryId::MassOfPairs => include_str!("../queries/mass-of-pairs.pq"),
            QueryId::PtSumOfPairs => include_str!("../queries/pt-sum-of-pairs.pq"),
        }
    }
}

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryId {
    type Err = String;

    fn from_str(s: &str) -> Result<QueryId, String> {
        QueryId::ALL.into_iter().find(|q| q.name() == s).ok_or_else(|| {
            let known: Vec<&str> = QueryId::ALL.iter().map(|q| q.name()).collect();
            format!("unknown query {s:?} (expected one of {})", known.join(", "))
        })
    }
}

/// Sums every number of a list of lists, one value per event.
pub const NESTED_SUM: &str = include_str!("../queries/nested-sum.pq");

/// Event schema [`NESTED_SUM`] runs over.
pub fn nested_sum_schema() -> Schema {
    Schema::record([("groups", Schema::list(Schema::list(Schema::float64())))])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::event_schema;
    use crate::transform::{compile_source, CompileOptions};

    #[test]
    fn all_compile() {
        for q in QueryId::ALL {
            for options in [CompileOptions::default(), CompileOptions::unchecked()] {
                compile_source(q.source(), &event_schema(), "events", options).unwrap_or_else(|e| panic!("{q}: {e}"));
            }
            assert_eq!(q.name().parse::<QueryId>(), Ok(q));
        }
        compile_source(NESTED_SUM, &nested_sum_schema(), "events", CompileOptions::default()).unwrap();
        assert!("max_pt".parse::<QueryId>().is_err());
    }
}
