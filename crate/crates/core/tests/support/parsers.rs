use alignrw::model::CardKind;
use alignrw::sparql::Iri;
use alignrw::{
    canonicalize, ClassExpression, EntityIri, GroupPattern, Literal, PrefixTable, SelectQuery, Side, Term,
    TriplePattern, Vocabulary,
};
use proptest::prelude::*;

pub fn vocab() -> Vocabulary {
    Vocabulary::new(
        [("src", "http://s.example/onto#"), ("alt", "http://alt.example/")]
            .into_iter()
            .collect(),
        [("tgt", "http://t.example/onto#")].into_iter().collect(),
    )
}

pub const CLASSES: &[&str] = &["A", "B", "Paper", "Conference_Banquet", "X1", "_Hidden"];
pub const PROPS: &[&str] = &["p", "hasDecision", "accepted", "q_2"];

pub fn entity(pool: &'static [&'static str]) -> impl Strategy<Value = EntityIri> {
    (prop::sample::select(pool), any::<bool>()).prop_map(|(local, alt)| {
        let e = EntityIri::new(Side::Source, local).unwrap();
        if alt {
            EntityIri {
                prefix: Some("alt".into()),
                ..e
            }
        } else {
            e
        }
    })
}

pub fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<bool>().prop_map(Literal::Boolean),
        any::<i64>().prop_map(Literal::Integer),
        "[a-zA-Z0-9 \"\\\\#.{}\t\n]{0,8}".prop_map(Literal::String),
    ]
}

pub fn expression() -> impl Strategy<Value = ClassExpression> {
    let leaf = prop_oneof![
        entity(CLASSES).prop_map(ClassExpression::Atom),
        (entity(PROPS), literal()).prop_map(|(property, literal)| ClassExpression::Value { property, literal }),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        let kind = prop_oneof![Just(CardKind::Min), Just(CardKind::Max), Just(CardKind::Exactly)];
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(ClassExpression::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(ClassExpression::Or),
            (entity(PROPS), inner.clone()).prop_map(|(property, f)| ClassExpression::Some {
                property,
                filler: Box::new(f)
            }),
            (entity(PROPS), inner.clone()).prop_map(|(property, f)| ClassExpression::Only {
                property,
                filler: Box::new(f)
            }),
            (kind, 0u32..5, entity(PROPS), prop::option::of(inner)).prop_map(|(kind, n, property, f)| {
                ClassExpression::Card {
                    kind,
                    n,
                    property,
                    filler: f.map(Box::new),
                }
            }),
        ]
    })
    .prop_map(|e| canonicalize(&e))
}

pub const NAMESPACES: &[(&str, &str)] = &[
    ("src", "http://s.example/onto#"),
    ("tgt", "http://t.example/onto#"),
    ("dc", "http://purl.example/dc/"),
];

pub fn var() -> impl Strategy<Value = Term> {
    prop::sample::select(&["v1", "v2", "v3", "x", "paper_1"][..]).prop_map(|v| Term::Variable(v.into()))
}

pub fn iri() -> impl Strategy<Value = Term> {
    (0..NAMESPACES.len(), prop::sample::select(&["A", "b", "Event", "has_x", "n2"][..]))
        .prop_map(|(i, l)| Term::Iri(Iri::new(NAMESPACES[i].1, l)))
}

pub fn triple() -> impl Strategy<Value = TriplePattern> {
    let subject = prop_oneof![3 => var(), 1 => iri()];
    let predicate = prop_oneof![
        2 => Just(Term::Iri(Iri::rdf_type())),
        3 => iri(),
        1 => var()
    ];
    let object = prop_oneof![3 => var(), 3 => iri(), 1 => literal().prop_map(Term::Literal)];
    (subject, predicate, object).prop_map(|(s, p, o)| TriplePattern::new(s, p, o))
}

pub fn group(depth: u32) -> BoxedStrategy<GroupPattern> {
    let triples = prop::collection::vec(triple(), 1..4);
    if depth == 0 {
        return triples.prop_map(GroupPattern::from_triples).boxed();
    }
    (
        prop::collection::vec(triple(), 0..3),
        prop::option::of(prop::collection::vec(group(depth - 1), 2..4)),
    )
        .prop_filter("empty group", |(t, u)| !t.is_empty() || u.is_some())
        .prop_map(|(triples, union)| GroupPattern { triples, union })
        .boxed()
}

pub fn query() -> impl Strategy<Value = SelectQuery> {
    (group(2), prop::collection::vec(any::<bool>(), 3), any::<prop::sample::Index>()).prop_map(
        |(where_clause, declare, pick)| {
            let prefixes: PrefixTable = NAMESPACES
                .iter()
                .zip(&declare)
                .filter(|(_, d)| **d)
                .map(|((l, ns), _)| (*l, *ns))
                .collect();
            let vars = where_clause.variables_in_order();
            let projection = if vars.is_empty() {
                vec![]
            } else {
                let k = pick.index(vars.len());
                vars[..=k].to_vec()
            };
            SelectQuery::new(prefixes, projection, where_clause)
        },
    )
    .prop_filter("no variables", |q| !q.projection.is_empty())
}
