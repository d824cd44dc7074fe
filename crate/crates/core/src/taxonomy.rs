//! Intersection regions, agents and the 64-class atomic activity label space.
//!
//! An atomic activity is written `<START>-<END>:<AGENT>`, e.g. `Z1-Z4:C+` for a
//! group of vehicles crossing from road Z1 to road Z4. Roads are `Z1..Z4`
//! (Z1 holds the ego camera, Z3 is opposite) and pedestrian waiting areas are
//! the corners `C1..C4`, joined by crosswalks in the cycle C1-C2-C3-C4-C1.
//!
//! Vehicles (`C`) and two-wheelers (`K`) move between two distinct roads
//! (12 ordered pairs each). Pedestrians (`P`) cross between adjacent corners
//! (8 ordered pairs). With single and grouped forms of each agent this gives
//! `4 * 12 + 2 * 8 = 64` classes.
//!
//! The canonical index order is agent-major (`C, C+, K, K+, P, P+`), then
//! `(start, end)` pairs in lexicographic order. A [`ClassList`] built from a
//! class-list file can replace that order.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of atomic activity classes.
pub const NUM_CLASSES: usize = 64;

/// Number of classes owned by each branch of the single/group split.
pub const BRANCH_CLASSES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("malformed class name {name:?}: bad token {token:?}")]
    Parse { name: String, token: String },
    #[error("invalid activity {name:?}: {rule}")]
    Invalid { name: String, rule: &'static str },
    #[error("label vector has length {actual}, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error("class list: {0}")]
    ClassList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionKind {
    Road,
    Corner,
}

/// One of the eight intersection regions `Z1..Z4`, `C1..C4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    kind: RegionKind,
    index: u8,
}

impl Region {
    pub const Z1: Region = Region::new_unchecked(RegionKind::Road, 1);
    pub const Z2: Region = Region::new_unchecked(RegionKind::Road, 2);
    pub const Z3: Region = Region::new_unchecked(RegionKind::Road, 3);
    pub const Z4: Region = Region::new_unchecked(RegionKind::Road, 4);
    pub const C1: Region = Region::new_unchecked(RegionKind::Corner, 1);
    pub const C2: Region = Region::new_unchecked(RegionKind::Corner, 2);
    pub const C3: Region = Region::new_unchecked(RegionKind::Corner, 3);
    pub const C4: Region = Region::new_unchecked(RegionKind::Corner, 4);

    pub const ALL: [Region; 8] = [
        Region::Z1,
        Region::Z2,
        Region::Z3,
        Region::Z4,
        Region::C1,
        Region::C2,
        Region::C3,
        Region::C4,
    ];

    const fn new_unchecked(kind: RegionKind, index: u8) -> Self {
        Region { kind, index }
    }

    /// Returns `None` unless `index` is in `1..=4`.
    pub fn new(kind: RegionKind, index: u8) -> Option<Self> {
        (1..=4).contains(&index).then_some(Region { kind, index })
    }

    pub fn kind(self) -> RegionKind {
        self.kind
    }

    pub fn index(self) -> u8 {
        self.index
    }

    pub fn is_road(self) -> bool {
        self.kind == RegionKind::Road
    }

    /// Corners are adjacent when they share a crosswalk on the 4-cycle.
    pub fn is_adjacent_corner(self, other: Region) -> bool {
        self.kind == RegionKind::Corner
            && other.kind == RegionKind::Corner
            && matches!((self.index + 4 - other.index) % 4, 1 | 3)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            RegionKind::Road => 'Z',
            RegionKind::Corner => 'C',
        };
        write!(f, "{prefix}{}", self.index)
    }
}

impl FromStr for Region {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let mut chars = s.chars();
        let kind = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('Z') => RegionKind::Road,
            Some('C') => RegionKind::Corner,
            _ => return Err(()),
        };
        let digits = chars.as_str();
        if digits.len() != 1 {
            return Err(());
        }
        let index: u8 = digits.parse().map_err(|_| ())?;
        Region::new(kind, index).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentCategory {
    Vehicle,
    TwoWheeler,
    Pedestrian,
}

/// Agent type: a category plus whether the activity is performed by a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Agent {
    pub category: AgentCategory,
    pub grouped: bool,
}

impl Agent {
    pub const C: Agent = Agent::new(AgentCategory::Vehicle, false);
    pub const C_PLUS: Agent = Agent::new(AgentCategory::Vehicle, true);
    pub const K: Agent = Agent::new(AgentCategory::TwoWheeler, false);
    pub const K_PLUS: Agent = Agent::new(AgentCategory::TwoWheeler, true);
    pub const P: Agent = Agent::new(AgentCategory::Pedestrian, false);
    pub const P_PLUS: Agent = Agent::new(AgentCategory::Pedestrian, true);

    /// Canonical agent order.
    pub const ALL: [Agent; 6] = [
        Agent::C,
        Agent::C_PLUS,
        Agent::K,
        Agent::K_PLUS,
        Agent::P,
        Agent::P_PLUS,
    ];

    pub const fn new(category: AgentCategory, grouped: bool) -> Self {
        Agent { category, grouped }
    }

    pub fn token(self) -> &'static str {
        match (self.category, self.grouped) {
            (AgentCategory::Vehicle, false) => "C",
            (AgentCategory::Vehicle, true) => "C+",
            (AgentCategory::TwoWheeler, false) => "K",
            (AgentCategory::TwoWheeler, true) => "K+",
            (AgentCategory::Pedestrian, false) => "P",
            (AgentCategory::Pedestrian, true) => "P+",
        }
    }

    /// Position in [`Agent::ALL`].
    pub fn ordinal(self) -> usize {
        Agent::ALL.iter().position(|a| *a == self).unwrap()
    }

    /// Number of classes this agent owns in the label space.
    pub fn class_count(self) -> usize {
        match self.category {
            AgentCategory::Vehicle | AgentCategory::TwoWheeler => 12,
            AgentCategory::Pedestrian => 8,
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Agent {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Agent::ALL
            .into_iter()
            .find(|a| a.token().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

/// A validated `(start region -> end region : agent)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomicActivity {
    start: Region,
    end: Region,
    agent: Agent,
}

impl AtomicActivity {
    pub fn new(start: Region, end: Region, agent: Agent) -> Result<Self, TaxonomyError> {
        let invalid = |rule| TaxonomyError::Invalid {
            name: format!("{start}-{end}:{agent}"),
            rule,
        };
        match agent.category {
            AgentCategory::Vehicle | AgentCategory::TwoWheeler => {
                if !start.is_road() || !end.is_road() {
                    return Err(invalid("vehicle and two-wheeler activities must go road to road"));
                }
                if start == end {
                    return Err(invalid("start and end region must differ"));
                }
            }
            AgentCategory::Pedestrian => {
                if start.is_road() || end.is_road() {
                    return Err(invalid("pedestrian activities must go corner to corner"));
                }
                if start == end {
                    return Err(invalid("start and end region must differ"));
                }
                if !start.is_adjacent_corner(end) {
                    return Err(invalid("pedestrian corners must be adjacent on the crosswalk cycle"));
                }
            }
        }
        Ok(AtomicActivity { start, end, agent })
    }

    pub fn start(self) -> Region {
        self.start
    }

    pub fn end(self) -> Region {
        self.end
    }

    pub fn agent(self) -> Agent {
        self.agent
    }

    pub fn name(self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AtomicActivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}:{}", self.start, self.end, self.agent)
    }
}

impl FromStr for AtomicActivity {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, TaxonomyError> {
        parse_class(s)
    }
}

/// Parses `<REGION>-<REGION>:<AGENT>`; tokens are case-insensitive.
pub fn parse_class(name: &str) -> Result<AtomicActivity, TaxonomyError> {
    let trimmed = name.trim();
    let parse_err = |token: &str| TaxonomyError::Parse {
        name: trimmed.to_string(),
        token: token.to_string(),
    };
    let (route, agent) = trimmed.split_once(':').ok_or_else(|| parse_err(trimmed))?;
    let (start, end) = route.split_once('-').ok_or_else(|| parse_err(route))?;
    let start: Region = start.trim().parse().map_err(|_| parse_err(start))?;
    let end: Region = end.trim().parse().map_err(|_| parse_err(end))?;
    let agent: Agent = agent.trim().parse().map_err(|_| parse_err(agent))?;
    AtomicActivity::new(start, end, agent)
}

/// Mirror image of a region under a horizontal flip of the ego view.
pub fn flip_region(region: Region) -> Region {
    let index = match (region.kind, region.index) {
        (RegionKind::Road, 2) => 4,
        (RegionKind::Road, 4) => 2,
        (RegionKind::Road, i) => i,
        (RegionKind::Corner, i) => 5 - i,
    };
    Region { kind: region.kind, index }
}

pub fn flip_activity(activity: AtomicActivity) -> AtomicActivity {
    AtomicActivity {
        start: flip_region(activity.start),
        end: flip_region(activity.end),
        agent: activity.agent,
    }
}

/// Position of a class in a [`ClassList`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassIndex(u8);

impl ClassIndex {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_CLASSES).then_some(ClassIndex(index as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ClassIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Classes split by whether the agent is a single object or a group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPartition {
    pub single: Vec<ClassIndex>,
    pub group: Vec<ClassIndex>,
}

fn canonical_activities() -> Vec<AtomicActivity> {
    let mut out = Vec::with_capacity(NUM_CLASSES);
    for agent in Agent::ALL {
        for start in Region::ALL {
            for end in Region::ALL {
                if let Ok(a) = AtomicActivity::new(start, end, agent) {
                    out.push(a);
                }
            }
        }
    }
    // Region::ALL lists roads before corners, and each agent accepts only one
    // region kind, so the loop already yields (start, end) in index order.
    out
}

static CANONICAL: LazyLock<ClassList> =
    LazyLock::new(|| ClassList::from_activities(canonical_activities()).unwrap());

/// An ordered list of the 64 classes: index `i` is the `i`-th entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList {
    activities: Vec<AtomicActivity>,
    lookup: HashMap<AtomicActivity, ClassIndex>,
    flip: Vec<ClassIndex>,
}

impl ClassList {
    pub fn canonical() -> &'static ClassList {
        &CANONICAL
    }

    pub fn from_activities(activities: Vec<AtomicActivity>) -> Result<Self, TaxonomyError> {
        if activities.len() != NUM_CLASSES {
            return Err(TaxonomyError::ClassList(format!(
                "expected {NUM_CLASSES} classes, found {}",
                activities.len()
            )));
        }
        let mut lookup = HashMap::with_capacity(NUM_CLASSES);
        for (i, a) in activities.iter().enumerate() {
            if lookup.insert(*a, ClassIndex(i as u8)).is_some() {
                return Err(TaxonomyError::ClassList(format!("duplicate class {a} at line {}", i + 1)));
            }
        }
        // 64 distinct valid activities are necessarily the whole label space,
        // so the flip image of every entry is present.
        let flip = activities
            .iter()
            .map(|a| lookup[&flip_activity(*a)])
            .collect();
        Ok(ClassList { activities, lookup, flip })
    }

    /// Reads a class-list text: one class name per line, blank lines ignored.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let activities = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(parse_class)
            .collect::<Result<Vec<_>, _>>()?;
        ClassList::from_activities(activities)
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn activity(&self, index: ClassIndex) -> AtomicActivity {
        self.activities[index.get()]
    }

    pub fn index_of(&self, activity: AtomicActivity) -> ClassIndex {
        self.lookup[&activity]
    }

    pub fn index_of_name(&self, name: &str) -> Result<ClassIndex, TaxonomyError> {
        parse_class(name).map(|a| self.index_of(a))
    }

    pub fn name(&self, index: ClassIndex) -> String {
        self.activity(index).name()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (ClassIndex, AtomicActivity)> + '_ {
        self.activities
            .iter()
            .enumerate()
            .map(|(i, a)| (ClassIndex(i as u8), *a))
    }

    pub fn flip_index(&self, index: ClassIndex) -> ClassIndex {
        self.flip[index.get()]
    }

    /// Moves entry `j` to the index of `flip(j)`. Works for labels and scores alike.
    pub fn flip_label_vector<T: Copy>(&self, values: &[T]) -> Result<Vec<T>, TaxonomyError> {
        if values.len() != NUM_CLASSES {
            return Err(TaxonomyError::Dimension {
                expected: NUM_CLASSES,
                actual: values.len(),
            });
        }
        let mut out = values.to_vec();
        for (j, v) in values.iter().enumerate() {
            out[self.flip[j].get()] = *v;
        }
        Ok(out)
    }

    pub fn branch_partition(&self) -> BranchPartition {
        let (group, single) = self.iter().map(|(i, _)| i).partition(|i| self.activity(*i).agent.grouped);
        BranchPartition { single, group }
    }

    /// Indices of the classes performed by `agent`, ascending.
    pub fn agent_classes(&self, agent: Agent) -> Vec<ClassIndex> {
        self.iter()
            .filter(|(_, a)| a.agent == agent)
            .map(|(i, _)| i)
            .collect()
    }

    /// One name per line, in index order.
    pub fn to_text(&self) -> String {
        self.activities.iter().map(|a| format!("{a}\n")).collect()
    }
}

/// The canonical class list as `(index, activity)` pairs.
pub fn all_classes() -> Vec<(ClassIndex, AtomicActivity)> {
    ClassList::canonical().iter().collect()
}

pub fn flip_label_vector<T: Copy>(values: &[T]) -> Result<Vec<T>, TaxonomyError> {
    ClassList::canonical().flip_label_vector(values)
}

pub fn branch_partition() -> BranchPartition {
    ClassList::canonical().branch_partition()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(name: &str) -> AtomicActivity {
        parse_class(name).unwrap()
    }

    #[test]
    fn canonical_order_head_and_counts() {
        let all = all_classes();
        assert_eq!(all.len(), 64);
        assert_eq!(all[0].1.name(), "Z1-Z2:C");
        assert_eq!(all[1].1.name(), "Z1-Z3:C");
        assert_eq!(all[3].1.name(), "Z2-Z1:C");
        assert_eq!(all[12].1.name(), "Z1-Z2:C+");
        assert_eq!(all[48].1.name(), "C1-C2:P");
        assert_eq!(all[49].1.name(), "C1-C4:P");
        assert_eq!(all[63].1.name(), "C4-C3:P+");
        let pedestrians = all
            .iter()
            .filter(|(_, a)| a.agent().category == AgentCategory::Pedestrian)
            .count();
        assert_eq!(pedestrians, 16);
    }

    #[test]
    fn parse_accepts_lowercase_and_roundtrips() {
        let a = act("z1-z4:c+");
        assert_eq!(a.start(), Region::Z1);
        assert_eq!(a.end(), Region::Z4);
        assert_eq!(a.agent(), Agent::C_PLUS);
        assert_eq!(a.name(), "Z1-Z4:C+");
        for (_, a) in all_classes() {
            assert_eq!(parse_class(&a.name()).unwrap(), a);
        }
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_class("C1-C3:P"), Err(TaxonomyError::Invalid { .. })));
        assert!(matches!(parse_class("Z1-Z1:C"), Err(TaxonomyError::Invalid { .. })));
        assert!(matches!(parse_class("Z1-C2:C"), Err(TaxonomyError::Invalid { .. })));
        assert!(matches!(parse_class("Z1-Z2:P"), Err(TaxonomyError::Invalid { .. })));
        match parse_class("Z1-Z9:C") {
            Err(TaxonomyError::Parse { token, .. }) => assert_eq!(token, "Z9"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_class("Z1-Z2:X") {
            Err(TaxonomyError::Parse { token, .. }) => assert_eq!(token, "X"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_class("Z1Z2:C"), Err(TaxonomyError::Parse { .. })));
        assert!(matches!(parse_class("Z1-Z2"), Err(TaxonomyError::Parse { .. })));
    }

    #[test]
    fn flip_examples() {
        assert_eq!(flip_region(Region::Z2), Region::Z4);
        assert_eq!(flip_region(Region::C1), Region::C4);
        assert_eq!(flip_region(Region::Z3), Region::Z3);
        assert_eq!(flip_activity(act("Z1-Z2:C+")), act("Z1-Z4:C+"));
        assert_eq!(flip_activity(act("C1-C2:P")), act("C4-C3:P"));
        assert_eq!(flip_activity(act("Z1-Z3:K")), act("Z1-Z3:K"));
    }

    #[test]
    fn flip_label_vector_moves_one_hot() {
        let classes = ClassList::canonical();
        let mut v = [0u8; 64];
        v[classes.index_of(act("Z1-Z2:C")).get()] = 1;
        let flipped = flip_label_vector(&v).unwrap();
        let hot: Vec<_> = flipped.iter().enumerate().filter(|(_, x)| **x == 1).map(|(i, _)| i).collect();
        assert_eq!(hot, vec![classes.index_of(act("Z1-Z4:C")).get()]);
        assert_eq!(flip_label_vector(&[0u8; 64]).unwrap(), vec![0u8; 64]);
        assert_eq!(
            flip_label_vector(&[0.0f64; 63]),
            Err(TaxonomyError::Dimension { expected: 64, actual: 63 })
        );
    }

    #[test]
    fn partition_sizes() {
        let p = branch_partition();
        assert_eq!(p.single.len(), 32);
        assert_eq!(p.group.len(), 32);
        let z1z4 = ClassList::canonical().index_of(act("Z1-Z4:C+"));
        assert!(p.group.contains(&z1z4));
        assert!(p.single.iter().all(|i| !p.group.contains(i)));
    }

    #[test]
    fn class_list_override() {
        let mut names: Vec<String> = all_classes().iter().rev().map(|(_, a)| a.name()).collect();
        let reversed = ClassList::parse(&names.join("\n")).unwrap();
        assert_eq!(reversed.name(ClassIndex::new(0).unwrap()), "C4-C3:P+");
        let z12 = reversed.index_of(act("Z1-Z2:C"));
        assert_eq!(reversed.activity(reversed.flip_index(z12)), act("Z1-Z4:C"));

        names.pop();
        assert!(matches!(ClassList::parse(&names.join("\n")), Err(TaxonomyError::ClassList(_))));
        names.push("C4-C3:P+".into());
        assert!(matches!(ClassList::parse(&names.join("\n")), Err(TaxonomyError::ClassList(_))));
    }
}
