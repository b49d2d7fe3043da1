//! Urban knowledge graph: typed triplets over POIs and urban entities, the
//! geographical/functional split, and adjacency indices for propagation.
//!
//! Text format, one triplet per line:
//!
//! ```text
//! #counts POI=3 BusinessArea=1 Region=2 Brand=1 Cate1=1 Cate2=0 Cate3=0
//! POI:0	LocateAt	Region:1
//! ```
//!
//! The `#counts` header is optional. When present it fixes the class
//! populations and every id must fit inside them; otherwise populations are
//! `max id + 1` per class. Other lines starting with `#` are comments.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityClass {
    Poi,
    BusinessArea,
    Region,
    Brand,
    Cate1,
    Cate2,
    Cate3,
}

impl EntityClass {
    pub const ALL: [EntityClass; 7] = [
        EntityClass::Poi,
        EntityClass::BusinessArea,
        EntityClass::Region,
        EntityClass::Brand,
        EntityClass::Cate1,
        EntityClass::Cate2,
        EntityClass::Cate3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EntityClass::Poi => "POI",
            EntityClass::BusinessArea => "BusinessArea",
            EntityClass::Region => "Region",
            EntityClass::Brand => "Brand",
            EntityClass::Cate1 => "Cate1",
            EntityClass::Cate2 => "Cate2",
            EntityClass::Cate3 => "Cate3",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        EntityClass::ALL.into_iter().find(|c| c.name() == name)
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Subgraph a non-POI class lives in. POIs belong to both.
    pub fn kind(self) -> Option<RelationKind> {
        match self {
            EntityClass::Poi => None,
            EntityClass::BusinessArea | EntityClass::Region => Some(RelationKind::Geographical),
            _ => Some(RelationKind::Functional),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    Geographical,
    Functional,
}

/// The sixteen relation types of the urban knowledge graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    BaServe,
    BelongTo,
    BorderBy,
    LocateAt,
    NearBy,
    Brand2Cate1,
    Brand2Cate2,
    Brand2Cate3,
    BrandOf,
    Cate1Of,
    Cate2Of,
    Cate3Of,
    RelatedBrand,
    SubCate2to1,
    SubCate3to1,
    SubCate3to2,
}

impl Relation {
    pub const ALL: [Relation; 16] = [
        Relation::BaServe,
        Relation::BelongTo,
        Relation::BorderBy,
        Relation::LocateAt,
        Relation::NearBy,
        Relation::Brand2Cate1,
        Relation::Brand2Cate2,
        Relation::Brand2Cate3,
        Relation::BrandOf,
        Relation::Cate1Of,
        Relation::Cate2Of,
        Relation::Cate3Of,
        Relation::RelatedBrand,
        Relation::SubCate2to1,
        Relation::SubCate3to1,
        Relation::SubCate3to2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::BaServe => "BaServe",
            Relation::BelongTo => "BelongTo",
            Relation::BorderBy => "BorderBy",
            Relation::LocateAt => "LocateAt",
            Relation::NearBy => "NearBy",
            Relation::Brand2Cate1 => "Brand2Cate1",
            Relation::Brand2Cate2 => "Brand2Cate2",
            Relation::Brand2Cate3 => "Brand2Cate3",
            Relation::BrandOf => "BrandOf",
            Relation::Cate1Of => "Cate1Of",
            Relation::Cate2Of => "Cate2Of",
            Relation::Cate3Of => "Cate3Of",
            Relation::RelatedBrand => "RelatedBrand",
            Relation::SubCate2to1 => "SubCate_2to1",
            Relation::SubCate3to1 => "SubCate_3to1",
            Relation::SubCate3to2 => "SubCate_3to2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Relation::ALL.into_iter().find(|r| r.name() == name)
    }

    pub fn kind(self) -> RelationKind {
        match self {
            Relation::BaServe
            | Relation::BelongTo
            | Relation::BorderBy
            | Relation::LocateAt
            | Relation::NearBy => RelationKind::Geographical,
            _ => RelationKind::Functional,
        }
    }

    pub fn head_class(self) -> EntityClass {
        self.classes().0
    }

    pub fn tail_class(self) -> EntityClass {
        self.classes().1
    }

    fn classes(self) -> (EntityClass, EntityClass) {
        use EntityClass::*;
        match self {
            Relation::BaServe => (BusinessArea, Region),
            Relation::BelongTo => (Poi, BusinessArea),
            Relation::BorderBy => (Region, Region),
            Relation::LocateAt => (Poi, Region),
            Relation::NearBy => (Region, Region),
            Relation::Brand2Cate1 => (Brand, Cate1),
            Relation::Brand2Cate2 => (Brand, Cate2),
            Relation::Brand2Cate3 => (Brand, Cate3),
            Relation::BrandOf => (Poi, Brand),
            Relation::Cate1Of => (Poi, Cate1),
            Relation::Cate2Of => (Poi, Cate2),
            Relation::Cate3Of => (Poi, Cate3),
            Relation::RelatedBrand => (Brand, Brand),
            Relation::SubCate2to1 => (Cate2, Cate1),
            Relation::SubCate3to1 => (Cate3, Cate1),
            Relation::SubCate3to2 => (Cate3, Cate2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityRef {
    pub class: EntityClass,
    pub index: u32,
}

impl EntityRef {
    pub fn new(class: EntityClass, index: u32) -> Self {
        EntityRef { class, index }
    }

    pub fn poi(index: u32) -> Self {
        EntityRef::new(EntityClass::Poi, index)
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class.name(), self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub head: EntityRef,
    pub relation: Relation,
    pub tail: EntityRef,
}

impl Triplet {
    pub fn new(head: EntityRef, relation: Relation, tail: EntityRef) -> Self {
        Triplet { head, relation, tail }
    }

    pub fn respects_schema(&self) -> bool {
        self.head.class == self.relation.head_class() && self.tail.class == self.relation.tail_class()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KgError {
    UnknownRelation(String),
    UnknownClass { line: usize, name: String },
    ClassMismatch { line: usize },
    MalformedLine { line: usize },
    DuplicateTriplet { line: usize },
    /// A referenced id does not fit in the declared population.
    IdOutOfRange { line: usize },
}

impl fmt::Display for KgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KgError::UnknownRelation(name) => write!(f, "unknown relation `{name}`"),
            KgError::UnknownClass { line, name } => write!(f, "line {line}: unknown entity class `{name}`"),
            KgError::ClassMismatch { line } => {
                write!(f, "line {line}: head/tail classes do not match the relation schema")
            }
            KgError::MalformedLine { line } => write!(f, "line {line}: malformed triplet"),
            KgError::DuplicateTriplet { line } => write!(f, "line {line}: duplicate triplet"),
            KgError::IdOutOfRange { line } => write!(f, "line {line}: id exceeds declared population"),
        }
    }
}

impl core::error::Error for KgError {}

/// A validated set of triplets plus the population of every entity class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UrbanKG {
    triplets: Vec<Triplet>,
    populations: [usize; 7],
}

impl UrbanKG {
    /// Validates `triplets`. With `populations == None` they are inferred as
    /// `max id + 1` per class.
    pub fn new(triplets: Vec<Triplet>, populations: Option<[usize; 7]>) -> Result<Self, KgError> {
        let lines: Vec<usize> = (1..=triplets.len()).collect();
        Self::build(triplets, &lines, populations)
    }

    fn build(
        triplets: Vec<Triplet>,
        lines: &[usize],
        declared: Option<[usize; 7]>,
    ) -> Result<Self, KgError> {
        let mut seen = BTreeSet::new();
        let mut required = [0usize; 7];
        for (t, &line) in triplets.iter().zip(lines) {
            if !t.respects_schema() {
                return Err(KgError::ClassMismatch { line });
            }
            if !seen.insert(*t) {
                return Err(KgError::DuplicateTriplet { line });
            }
            for e in [t.head, t.tail] {
                let need = e.index as usize + 1;
                if let Some(decl) = declared {
                    if need > decl[e.class.index()] {
                        return Err(KgError::IdOutOfRange { line });
                    }
                }
                let slot = &mut required[e.class.index()];
                *slot = (*slot).max(need);
            }
        }
        Ok(UrbanKG { triplets, populations: declared.unwrap_or(required) })
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn populations(&self) -> [usize; 7] {
        self.populations
    }

    pub fn population(&self, class: EntityClass) -> usize {
        self.populations[class.index()]
    }

    /// Raises a class population to at least `n` (e.g. POIs that appear in
    /// check-ins but carry no triplets).
    pub fn widen_population(&mut self, class: EntityClass, n: usize) {
        let slot = &mut self.populations[class.index()];
        *slot = (*slot).max(n);
    }

    /// Re-checks every invariant.
    pub fn validate(&self) -> Result<(), KgError> {
        let lines: Vec<usize> = (1..=self.triplets.len()).collect();
        Self::build(self.triplets.clone(), &lines, Some(self.populations)).map(|_| ())
    }

    pub fn count_kind(&self, kind: RelationKind) -> usize {
        self.triplets.iter().filter(|t| t.relation.kind() == kind).count()
    }
}

fn parse_entity(field: &str, line: usize) -> Result<EntityRef, KgError> {
    let (class, id) = field.split_once(':').ok_or(KgError::MalformedLine { line })?;
    let class = EntityClass::from_name(class.trim())
        .ok_or_else(|| KgError::UnknownClass { line, name: class.trim().to_string() })?;
    let index = id.trim().parse::<u32>().map_err(|_| KgError::MalformedLine { line })?;
    Ok(EntityRef { class, index })
}

fn parse_counts(rest: &str, line: usize) -> Result<[usize; 7], KgError> {
    let mut counts = [0usize; 7];
    for item in rest.split_whitespace() {
        let (name, n) = item.split_once('=').ok_or(KgError::MalformedLine { line })?;
        let class = EntityClass::from_name(name)
            .ok_or_else(|| KgError::UnknownClass { line, name: name.to_string() })?;
        counts[class.index()] = n.parse().map_err(|_| KgError::MalformedLine { line })?;
    }
    Ok(counts)
}

/// Parses the triplet TSV format described at module level.
pub fn parse_triplets(text: &str) -> Result<UrbanKG, KgError> {
    let mut triplets = Vec::new();
    let mut lines = Vec::new();
    let mut declared = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#counts") {
            declared = Some(parse_counts(rest, line)?);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split('\t');
        let (Some(h), Some(r), Some(t), None) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(KgError::MalformedLine { line });
        };
        let relation =
            Relation::from_name(r.trim()).ok_or_else(|| KgError::UnknownRelation(r.trim().to_string()))?;
        triplets.push(Triplet { head: parse_entity(h, line)?, relation, tail: parse_entity(t, line)? });
        lines.push(line);
    }
    UrbanKG::build(triplets, &lines, declared)
}

/// Writes `kg` in the TSV format, `#counts` header first.
pub fn serialize_triplets(kg: &UrbanKG) -> String {
    let mut out = String::from("#counts");
    for class in EntityClass::ALL {
        let _ = write!(out, " {}={}", class.name(), kg.population(class));
    }
    out.push('\n');
    for t in kg.triplets() {
        let _ = writeln!(out, "{}\t{}\t{}", t.head, t.relation.name(), t.tail);
    }
    out
}

/// Which relations a propagation graph carries. `Unsplit` keeps the whole
/// graph and backs the no-disentangle ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Geographical,
    Functional,
    Unsplit,
}

impl GraphKind {
    pub fn admits(self, relation: Relation) -> bool {
        match self {
            GraphKind::Geographical => relation.kind() == RelationKind::Geographical,
            GraphKind::Functional => relation.kind() == RelationKind::Functional,
            GraphKind::Unsplit => true,
        }
    }

    pub fn admits_class(self, class: EntityClass) -> bool {
        match (self, class.kind()) {
            (_, None) => true,
            (GraphKind::Unsplit, _) => true,
            (GraphKind::Geographical, Some(k)) => k == RelationKind::Geographical,
            (GraphKind::Functional, Some(k)) => k == RelationKind::Functional,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Geographical => "geographical",
            GraphKind::Functional => "functional",
            GraphKind::Unsplit => "unsplit",
        }
    }
}

/// One side of the split graph in a local node-id space: POIs keep their ids
/// `0..n_pois`, non-POI entities follow class by class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubGraph {
    kind: GraphKind,
    triplets: Vec<Triplet>,
    n_pois: usize,
    /// (class, first local id) for each non-POI class in this graph.
    class_offsets: Vec<(EntityClass, usize)>,
    entity_count: usize,
    relations: Vec<Relation>,
}

impl SubGraph {
    pub fn from_kg(kg: &UrbanKG, kind: GraphKind) -> Self {
        let n_pois = kg.population(EntityClass::Poi);
        let mut class_offsets = Vec::new();
        let mut next = n_pois;
        for class in EntityClass::ALL.into_iter().skip(1) {
            if kind.admits_class(class) {
                class_offsets.push((class, next));
                next += kg.population(class);
            }
        }
        SubGraph {
            kind,
            triplets: kg.triplets().iter().filter(|t| kind.admits(t.relation)).copied().collect(),
            n_pois,
            class_offsets,
            entity_count: next - n_pois,
            relations: Relation::ALL.into_iter().filter(|r| kind.admits(*r)).collect(),
        }
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn n_pois(&self) -> usize {
        self.n_pois
    }

    /// Non-POI entities in this graph.
    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn n_nodes(&self) -> usize {
        self.n_pois + self.entity_count
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation_id(&self, relation: Relation) -> Option<usize> {
        self.relations.iter().position(|r| *r == relation)
    }

    pub fn node_id(&self, entity: EntityRef) -> Option<usize> {
        if entity.class == EntityClass::Poi {
            return Some(entity.index as usize);
        }
        self.class_offsets
            .iter()
            .find(|(c, _)| *c == entity.class)
            .map(|(_, off)| off + entity.index as usize)
    }
}

/// Partitions the graph by relation kind. POIs are indexed identically on
/// both sides.
pub fn split_subgraphs(kg: &UrbanKG) -> (SubGraph, SubGraph) {
    (SubGraph::from_kg(kg, GraphKind::Geographical), SubGraph::from_kg(kg, GraphKind::Functional))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Neighbor {
    /// Local relation id within the subgraph.
    pub relation: u32,
    pub node: u32,
    pub direction: Direction,
}

/// Compressed per-node neighbor lists. Each triplet `(h, r, t)` yields a
/// forward entry on `h` and an inverse entry on `t`, both tagged with `r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyIndex {
    offsets: Vec<usize>,
    entries: Vec<Neighbor>,
    n_relations: usize,
}

impl AdjacencyIndex {
    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.entries[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn total_entries(&self) -> usize {
        self.entries.len()
    }
}

pub fn build_adjacency(sub: &SubGraph) -> AdjacencyIndex {
    let n = sub.n_nodes();
    let mut lists: Vec<Vec<Neighbor>> = (0..n).map(|_| Vec::new()).collect();
    for t in sub.triplets() {
        let rel = sub.relation_id(t.relation).expect("subgraph holds only its own relations") as u32;
        let h = sub.node_id(t.head).expect("head class in subgraph");
        let tl = sub.node_id(t.tail).expect("tail class in subgraph");
        lists[h].push(Neighbor { relation: rel, node: tl as u32, direction: Direction::Forward });
        lists[tl].push(Neighbor { relation: rel, node: h as u32, direction: Direction::Inverse });
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut entries = Vec::with_capacity(2 * sub.triplets().len());
    offsets.push(0);
    for mut list in lists {
        list.sort_unstable();
        entries.extend(list);
        offsets.push(entries.len());
    }
    AdjacencyIndex { offsets, entries, n_relations: sub.relations().len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn one_per_relation() -> String {
        let mut s = String::new();
        for r in Relation::ALL {
            let (h, t) = (r.head_class(), r.tail_class());
            // same-class relations need two distinct ids
            let tail_id = if h == t { 1 } else { 0 };
            s.push_str(&format!("{}:0\t{}\t{}:{}\n", h.name(), r.name(), t.name(), tail_id));
        }
        s
    }

    #[test]
    fn relation_table_partition() {
        let geo: Vec<_> = Relation::ALL.iter().filter(|r| r.kind() == RelationKind::Geographical).collect();
        assert_eq!(Relation::ALL.len(), 16);
        assert_eq!(
            geo,
            vec![&Relation::BaServe, &Relation::BelongTo, &Relation::BorderBy, &Relation::LocateAt, &Relation::NearBy]
        );
        assert_eq!(Relation::BrandOf.head_class(), EntityClass::Poi);
        assert_eq!(Relation::BrandOf.tail_class(), EntityClass::Brand);
        assert_eq!(Relation::SubCate3to1.tail_class(), EntityClass::Cate1);
        for r in Relation::ALL {
            assert_eq!(Relation::from_name(r.name()), Some(r));
        }
    }

    #[test]
    fn minimal_graph() {
        let kg = parse_triplets("POI:0\tBrandOf\tBrand:0").unwrap();
        assert_eq!(kg.triplets().len(), 1);
        assert_eq!(kg.population(EntityClass::Poi), 1);
        assert_eq!(kg.population(EntityClass::Brand), 1);
    }

    #[test]
    fn class_mismatch_rejected() {
        assert_eq!(parse_triplets("POI:0\tBrandOf\tRegion:0"), Err(KgError::ClassMismatch { line: 1 }));
    }

    #[test]
    fn every_relation_once() {
        let kg = parse_triplets(&one_per_relation()).unwrap();
        assert_eq!(kg.triplets().len(), 16);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            parse_triplets("POI:0\tVisits\tRegion:0"),
            Err(KgError::UnknownRelation("Visits".into()))
        );
        assert_eq!(parse_triplets("# c\nPOI:0\tLocateAt"), Err(KgError::MalformedLine { line: 2 }));
        assert_eq!(parse_triplets("POI:x\tLocateAt\tRegion:0"), Err(KgError::MalformedLine { line: 1 }));
        assert_eq!(
            parse_triplets("POI:0\tLocateAt\tRegion:0\n\nPOI:0\tLocateAt\tRegion:0"),
            Err(KgError::DuplicateTriplet { line: 3 })
        );
        assert!(matches!(parse_triplets("Shop:0\tLocateAt\tRegion:0"), Err(KgError::UnknownClass { .. })));
    }

    #[test]
    fn counts_header_cross_checked() {
        let kg = parse_triplets("#counts POI=4 Region=3\nPOI:0\tLocateAt\tRegion:2").unwrap();
        assert_eq!(kg.population(EntityClass::Poi), 4);
        assert_eq!(kg.population(EntityClass::Region), 3);
        assert_eq!(
            parse_triplets("#counts POI=1 Region=1\nPOI:0\tLocateAt\tRegion:2"),
            Err(KgError::IdOutOfRange { line: 2 })
        );
    }

    #[test]
    fn split_one_kind() {
        let kg = parse_triplets("POI:0\tLocateAt\tRegion:0\nPOI:1\tLocateAt\tRegion:0").unwrap();
        let (geo, func) = split_subgraphs(&kg);
        assert_eq!(geo.triplets().len(), 2);
        assert!(func.triplets().is_empty());
        assert_eq!(func.n_pois(), geo.n_pois());
    }

    #[test]
    fn split_mixed() {
        let kg = parse_triplets("POI:0\tBrandOf\tBrand:0\nPOI:0\tLocateAt\tRegion:0").unwrap();
        let (geo, func) = split_subgraphs(&kg);
        assert_eq!(geo.triplets().len(), 1);
        assert_eq!(func.triplets().len(), 1);
        assert_eq!(geo.entity_count(), 1);
        assert_eq!(func.entity_count(), 1);
        assert_eq!(geo.relations().len(), 5);
        assert_eq!(func.relations().len(), 11);
    }

    #[test]
    fn single_edge_adjacency() {
        let kg = parse_triplets("POI:0\tLocateAt\tRegion:0").unwrap();
        let (geo, _) = split_subgraphs(&kg);
        let adj = build_adjacency(&geo);
        assert_eq!(adj.neighbors(0).len(), 1);
        assert_eq!(adj.neighbors(0)[0].direction, Direction::Forward);
        let region = geo.node_id(EntityRef::new(EntityClass::Region, 0)).unwrap();
        assert_eq!(adj.neighbors(region).len(), 1);
        assert_eq!(adj.neighbors(region)[0].direction, Direction::Inverse);
    }

    #[test]
    fn star_adjacency() {
        let text: String = (0..10).map(|p| format!("POI:{p}\tLocateAt\tRegion:0\n")).collect();
        let kg = parse_triplets(&text).unwrap();
        let (geo, _) = split_subgraphs(&kg);
        let adj = build_adjacency(&geo);
        let region = geo.node_id(EntityRef::new(EntityClass::Region, 0)).unwrap();
        let entries = adj.neighbors(region);
        assert_eq!(entries.len(), 10);
        assert!(entries.iter().all(|n| n.direction == Direction::Inverse));
        assert!(entries.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn serialize_round_trip() {
        let kg = parse_triplets(&one_per_relation()).unwrap();
        assert_eq!(parse_triplets(&serialize_triplets(&kg)).unwrap(), kg);
    }
}
