//! Per-user-day aggregate feature vectors.
//!
//! Low-cardinality fields contribute one count slot per schema value
//! (plus an overflow slot); high-cardinality fields contribute four
//! commonality counts. A value is uncommon *for the user* when it
//! accounts for fewer than 5% of that user's prior observations of the
//! field, and uncommon *for all* when its prior global count is below
//! the average count per distinct value. Both tests are strictly
//! historical: the current event is never counted against itself, and a
//! first observation is common by convention.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::ingest::{DayBatch, EventRecord};

/// The fields of an auth event addressable by the feature schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldId {
    SrcUser,
    SrcDomain,
    DstUser,
    DstDomain,
    SrcPc,
    DstPc,
    AuthType,
    LogonType,
    AuthOrientation,
    Outcome,
}

impl FieldId {
    pub fn value<'a>(&self, ev: &'a EventRecord) -> &'a str {
        match self {
            FieldId::SrcUser => &ev.src_user,
            FieldId::SrcDomain => &ev.src_domain,
            FieldId::DstUser => &ev.dst_user,
            FieldId::DstDomain => &ev.dst_domain,
            FieldId::SrcPc => &ev.src_pc,
            FieldId::DstPc => &ev.dst_pc,
            FieldId::AuthType => &ev.auth_type,
            FieldId::LogonType => &ev.logon_type,
            FieldId::AuthOrientation => &ev.auth_orientation,
            FieldId::Outcome => ev.outcome.as_str(),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FieldId::SrcUser => "src_user",
            FieldId::SrcDomain => "src_domain",
            FieldId::DstUser => "dst_user",
            FieldId::DstDomain => "dst_domain",
            FieldId::SrcPc => "src_pc",
            FieldId::DstPc => "dst_pc",
            FieldId::AuthType => "auth_type",
            FieldId::LogonType => "logon_type",
            FieldId::AuthOrientation => "auth_orientation",
            FieldId::Outcome => "outcome",
        }
    }
}

impl std::str::FromStr for FieldId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "src_user" => Ok(FieldId::SrcUser),
            "src_domain" => Ok(FieldId::SrcDomain),
            "dst_user" => Ok(FieldId::DstUser),
            "dst_domain" => Ok(FieldId::DstDomain),
            "src_pc" => Ok(FieldId::SrcPc),
            "dst_pc" => Ok(FieldId::DstPc),
            "auth_type" => Ok(FieldId::AuthType),
            "logon_type" => Ok(FieldId::LogonType),
            "auth_orientation" => Ok(FieldId::AuthOrientation),
            "outcome" => Ok(FieldId::Outcome),
            other => Err(Error::Config(format!("unknown field {other:?}"))),
        }
    }
}

pub const DEFAULT_LOW_CARD: [FieldId; 4] = [
    FieldId::AuthType,
    FieldId::LogonType,
    FieldId::AuthOrientation,
    FieldId::Outcome,
];

pub const DEFAULT_HIGH_CARD: [FieldId; 6] = [
    FieldId::SrcUser,
    FieldId::DstUser,
    FieldId::SrcPc,
    FieldId::DstPc,
    FieldId::SrcDomain,
    FieldId::DstDomain,
];

/// Feature layout: per low-cardinality field, one count slot per known
/// value plus an "other" slot; per high-cardinality field, the four
/// commonality counts; finally the total event count.
#[derive(Debug, Clone)]
pub struct FeatureSchema {
    pub low_card: Vec<(FieldId, Vec<String>)>,
    pub high_card: Vec<FieldId>,
}

impl FeatureSchema {
    /// Discover low-cardinality value sets from an early slice of the
    /// stream (typically the first day, keeping the schema causal).
    pub fn discover(
        events: &[EventRecord],
        low_card: Option<&[FieldId]>,
        high_card: Option<&[FieldId]>,
    ) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::EmptyInput("no events to discover a schema from".into()));
        }
        let low = low_card.unwrap_or(&DEFAULT_LOW_CARD);
        let high = high_card.unwrap_or(&DEFAULT_HIGH_CARD);
        let mut lists = Vec::new();
        for f in low {
            let mut values: Vec<String> = events
                .iter()
                .map(|e| f.value(e).to_string())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            values.sort();
            lists.push((*f, values));
        }
        Ok(FeatureSchema { low_card: lists, high_card: high.to_vec() })
    }

    /// Fixed vector dimension D implied by this schema.
    pub fn dim(&self) -> usize {
        self.low_card.iter().map(|(_, v)| v.len() + 1).sum::<usize>()
            + 4 * self.high_card.len()
            + 1
    }

    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .low_card
            .iter()
            .map(|(f, v)| format!("{}[{}+other]", f.as_str(), v.len()))
            .collect();
        parts.push(format!("{}x4 commonality", self.high_card.len()));
        format!("D={} ({} + total)", self.dim(), parts.join(" + "))
    }
}

/// Streaming per-field frequency tables, per user and global, updated
/// strictly in stream order.
#[derive(Debug, Clone, Default)]
pub struct CommonalityTracker {
    global: Vec<HashMap<String, u64>>,
    global_total: Vec<u64>,
    per_user: HashMap<String, (Vec<HashMap<String, u64>>, Vec<u64>)>,
    n_fields: usize,
}

impl CommonalityTracker {
    pub fn new(n_fields: usize) -> Self {
        CommonalityTracker {
            global: vec![HashMap::new(); n_fields],
            global_total: vec![0; n_fields],
            per_user: HashMap::new(),
            n_fields,
        }
    }

    /// `(common_to_user, common_to_all)` using only prior observations.
    pub fn classify(&self, user: &str, field_idx: usize, value: &str) -> (bool, bool) {
        let common_user = match self.per_user.get(user) {
            Some((counts, totals)) if totals[field_idx] > 0 => {
                let c = counts[field_idx].get(value).copied().unwrap_or(0) as f64;
                c / totals[field_idx] as f64 >= 0.05
            }
            // first observation: the value accounts for all of it
            _ => true,
        };
        let common_all = if self.global_total[field_idx] == 0 {
            true
        } else {
            let c = self.global[field_idx].get(value).copied().unwrap_or(0) as f64;
            let avg = self.global_total[field_idx] as f64 / self.global[field_idx].len() as f64;
            c >= avg
        };
        (common_user, common_all)
    }

    pub fn observe(&mut self, user: &str, field_idx: usize, value: &str) {
        *self.global[field_idx].entry(value.to_string()).or_insert(0) += 1;
        self.global_total[field_idx] += 1;
        let entry = self.per_user.entry(user.to_string()).or_insert_with(|| {
            (vec![HashMap::new(); self.n_fields], vec![0; self.n_fields])
        });
        *entry.0[field_idx].entry(value.to_string()).or_insert(0) += 1;
        entry.1[field_idx] += 1;
    }
}

/// One user-day aggregate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDayVector {
    pub user: String,
    pub day: u32,
    pub features: Vec<f64>,
    pub is_red_day: bool,
}

/// Single-pass stateful fold turning day batches into user-day vectors.
pub struct VectorBuilder {
    schema: FeatureSchema,
    tracker: CommonalityTracker,
}

impl VectorBuilder {
    pub fn new(schema: FeatureSchema) -> Self {
        let n = schema.high_card.len();
        VectorBuilder { schema, tracker: CommonalityTracker::new(n) }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Consume one day; vectors come out sorted by user. The tracker is
    /// causal: events after day k cannot change day-k vectors.
    pub fn day_vectors(&mut self, batch: &DayBatch) -> Vec<UserDayVector> {
        let dim = self.schema.dim();
        let mut per_user: BTreeMap<String, (Vec<f64>, bool)> = BTreeMap::new();
        for ev in &batch.events {
            let user = ev.user_key();
            let (vec, red) = per_user
                .entry(user.clone())
                .or_insert_with(|| (vec![0.0; dim], false));
            *red |= ev.is_redteam;

            let mut off = 0usize;
            for (field, values) in &self.schema.low_card {
                let v = field.value(ev);
                match values.binary_search_by(|x| x.as_str().cmp(v)) {
                    Ok(i) => vec[off + i] += 1.0,
                    Err(_) => vec[off + values.len()] += 1.0,
                }
                off += values.len() + 1;
            }
            for (fi, field) in self.schema.high_card.iter().enumerate() {
                let v = field.value(ev);
                let (cu, ca) = self.tracker.classify(&user, fi, v);
                vec[off + if cu { 0 } else { 1 }] += 1.0;
                vec[off + if ca { 2 } else { 3 }] += 1.0;
                off += 4;
            }
            vec[dim - 1] += 1.0;

            for (fi, field) in self.schema.high_card.iter().enumerate() {
                self.tracker.observe(&user, fi, field.value(ev));
            }
        }
        per_user
            .into_iter()
            .map(|(user, (features, is_red_day))| UserDayVector {
                user,
                day: batch.day,
                features,
                is_red_day,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_auth_line;

    fn ev(line: &str) -> EventRecord {
        parse_auth_line(line, 1).unwrap()
    }

    #[test]
    fn first_observation_is_common_to_user() {
        let t = CommonalityTracker::new(1);
        let (cu, ca) = t.classify("u", 0, "X");
        assert!(cu);
        assert!(ca);
    }

    #[test]
    fn below_five_percent_is_uncommon_to_user() {
        let mut t = CommonalityTracker::new(1);
        for _ in 0..99 {
            t.observe("u", 0, "A");
        }
        t.observe("u", 0, "B");
        // B is 1 of 100 prior observations: 1% < 5%
        let (cu, _) = t.classify("u", 0, "B");
        assert!(!cu);
        let (cu, _) = t.classify("u", 0, "A");
        assert!(cu);
        // another user's history is untouched
        let (cu, _) = t.classify("v", 0, "B");
        assert!(cu);
    }

    #[test]
    fn below_average_count_is_uncommon_to_all() {
        let mut t = CommonalityTracker::new(1);
        // global table {A:9, B:1}, average count 5
        for _ in 0..9 {
            t.observe("u", 0, "A");
        }
        t.observe("v", 0, "B");
        let (_, ca) = t.classify("w", 0, "B");
        assert!(!ca, "B occurs 1 < 5 times on average");
        let (_, ca) = t.classify("w", 0, "A");
        assert!(ca);
    }

    #[test]
    fn micro_stream_matches_hand_computed_table() {
        // 2 users, 2 days; schema from day 0.
        let day0 = DayBatch {
            day: 0,
            events: vec![
                ev("1,U1@D,U1@D,P1,C1,Kerberos,Network,LogOn,Success"),
                ev("2,U1@D,U1@D,P1,C1,Kerberos,Network,LogOff,Success"),
                ev("3,U2@D,U2@D,P2,C2,NTLM,Batch,LogOn,Fail"),
            ],
        };
        let day1 = DayBatch {
            day: 1,
            events: vec![
                ev("86401,U1@D,U1@D,P1,C9,Kerberos,Network,LogOn,Success"),
            ],
        };
        let schema = FeatureSchema::discover(
            &day0.events,
            Some(&[FieldId::Outcome]),
            Some(&[FieldId::DstPc]),
        )
        .unwrap();
        // D = (2 values + other) + 4 + 1 = 8
        assert_eq!(schema.dim(), 8);
        let mut builder = VectorBuilder::new(schema);
        let v0 = builder.day_vectors(&day0);
        assert_eq!(v0.len(), 2);
        // U1 day0: outcome Success x2 -> [Fail=0, Success=2, other=0];
        // dst_pc C1: event1 first obs -> common both; event2 C1 is 100%
        // of prior -> common; global: avg 1 -> common.
        // commonality [cu=2, uu=0, ca=2, ua=0], total 2
        assert_eq!(v0[0].user, "U1@D");
        assert_eq!(v0[0].features, vec![0.0, 2.0, 0.0, 2.0, 0.0, 2.0, 0.0, 2.0]);
        // U2 day0: Fail x1; dst_pc C2 never seen for U2 (first obs ->
        // common-user); globally C1:2 avg 1 per distinct... prior table
        // {C1:2}, avg 2, C2 count 0 < 2 -> uncommon-all
        assert_eq!(v0[1].user, "U2@D");
        assert_eq!(v0[1].features, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let v1 = builder.day_vectors(&day1);
        // U1 day1: C9 prior user counts {C1:2}/2 -> 0% < 5% uncommon-user;
        // global {C1:2, C2:1} avg 1.5, C9 count 0 -> uncommon-all
        assert_eq!(v1[0].features, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn causality_later_days_do_not_change_earlier_vectors() {
        let day0 = DayBatch {
            day: 0,
            events: vec![ev("1,U1@D,U1@D,P1,C1,Kerberos,Network,LogOn,Success")],
        };
        let day1 = DayBatch {
            day: 1,
            events: vec![ev("86401,U1@D,U1@D,P1,C2,NTLM,Batch,LogOff,Fail")],
        };
        let schema = FeatureSchema::discover(&day0.events, None, None).unwrap();
        let mut b1 = VectorBuilder::new(schema.clone());
        let v_with_later = b1.day_vectors(&day0);
        b1.day_vectors(&day1);
        let mut b2 = VectorBuilder::new(schema);
        let v_alone = b2.day_vectors(&day0);
        assert_eq!(v_with_later, v_alone);
    }

    #[test]
    fn unknown_low_card_value_goes_to_other_slot() {
        let day0 = DayBatch {
            day: 0,
            events: vec![ev("1,U1@D,U1@D,P1,C1,Kerberos,Network,LogOn,Success")],
        };
        let schema = FeatureSchema::discover(&day0.events, Some(&[FieldId::AuthType]), Some(&[])).unwrap();
        let mut b = VectorBuilder::new(schema);
        b.day_vectors(&day0);
        let day1 = DayBatch {
            day: 1,
            events: vec![ev("86401,U1@D,U1@D,P1,C1,UnseenType,Network,LogOn,Success")],
        };
        let v = b.day_vectors(&day1);
        // layout: [Kerberos, other, total]
        assert_eq!(v[0].features, vec![0.0, 1.0, 1.0]);
    }
}
