//! JSON schemas of the API bodies, for client code generation.

use schemars::{schema_for, JsonSchema};

use crate::store::{Concept, Job};
use crate::types::*;

fn of<T: JsonSchema>() -> serde_json::Value {
    serde_json::to_value(schema_for!(T)).expect("schemas serialize")
}

type SchemaFn = fn() -> serde_json::Value;

const TABLE: &[(&str, SchemaFn)] = &[
    ("ComposeResponse", of::<ComposeResponse>),
    ("Concept", of::<Concept>),
    ("GairRequest", of::<GairRequestBody>),
    ("GairResponse", of::<GairResponse>),
    ("IndexInfo", of::<IndexInfo>),
    ("IndexRequest", of::<IndexRequest>),
    ("IngestRequest", of::<IngestRequest>),
    ("Job", of::<Job>),
    ("PreviewRequest", of::<PreviewRequest>),
    ("PreviewResponse", of::<PreviewResponse>),
    ("QuerySpec", of::<QuerySpec>),
    ("RetrieveRequest", of::<RetrieveRequest>),
    ("RetrieveResponse", of::<RetrieveResponse>),
    ("TrainRequest", of::<TrainRequest>),
];

pub fn names() -> Vec<&'static str> {
    TABLE.iter().map(|(n, _)| *n).collect()
}

pub fn by_name(name: &str) -> Option<serde_json::Value> {
    TABLE.iter().find(|(n, _)| *n == name).map(|(_, f)| f())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_schema_names_its_properties() {
        for name in names() {
            let schema = by_name(name).unwrap();
            assert!(schema.get("properties").is_some() || schema.get("oneOf").is_some(), "{name}");
        }
        let q = by_name("QuerySpec").unwrap();
        assert!(q["properties"]["weight"].is_object());
        assert!(by_name("Nope").is_none());
    }
}
