//! Extracting the route answer from a free-form completion.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object with a string \"route\" field found in the response")]
    Format,
    #[error("route `{0}` is not one of the available routes")]
    InvalidRoute(String),
}

/// Finds the last JSON object in `text` that has a string `"route"` field and
/// checks its value against `valid_routes` (case-sensitive).
///
/// Surrounding prose and markdown fences are ignored. Objects nested inside
/// other objects count; the one starting latest in the text wins.
pub fn parse_route<'a>(text: &str, valid_routes: &[&'a str]) -> Result<&'a str, ParseError> {
    debug_assert!(!valid_routes.is_empty());
    let route = last_route_field(text).ok_or(ParseError::Format)?;
    valid_routes
        .iter()
        .copied()
        .find(|r| *r == route)
        .ok_or(ParseError::InvalidRoute(route))
}

fn last_route_field(text: &str) -> Option<String> {
    text.char_indices()
        .rev()
        .filter(|&(_, c)| c == '{')
        .find_map(|(start, _)| {
            let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => match map.get("route") {
                    Some(Value::String(s)) => Some(s.clone()),
                    _ => None,
                },
                _ => None,
            }
        })
}
