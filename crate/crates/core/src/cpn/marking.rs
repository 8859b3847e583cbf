use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Token;

/// Per-place multisets of tokens.
///
/// Tokens are kept in insertion order so that binding selection can be FIFO
/// within a place. Equality is multiset equality and ignores that order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Marking {
    places: BTreeMap<String, Vec<Token>>,
}

impl Marking {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tokens(&self, place: &str) -> &[Token] {
        self.places.get(place).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count(&self, place: &str) -> usize {
        self.tokens(place).len()
    }

    pub fn total(&self) -> usize {
        self.places.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    pub fn add(&mut self, place: &str, token: Token) {
        self.places.entry(place.to_string()).or_default().push(token);
    }

    /// Removes the oldest token equal to `token`. Returns false if absent.
    pub fn remove(&mut self, place: &str, token: &Token) -> bool {
        let Some(tokens) = self.places.get_mut(place) else {
            return false;
        };
        let Some(pos) = tokens.iter().position(|t| t == token) else {
            return false;
        };
        tokens.remove(pos);
        if tokens.is_empty() {
            self.places.remove(place);
        }
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Token])> {
        self.places.iter().map(|(p, t)| (p.as_str(), t.as_slice()))
    }

    /// Order-insensitive form, suitable as a hash key.
    pub fn canonical(&self) -> Vec<(String, Vec<Token>)> {
        self.places
            .iter()
            .filter(|(_, t)| !t.is_empty())
            .map(|(p, t)| {
                let mut t = t.clone();
                t.sort();
                (p.clone(), t)
            })
            .collect()
    }
}

impl PartialEq for Marking {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Eq for Marking {}

/// Assignment of tokens to the arc labels of one transition occurrence.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Binding(pub BTreeMap<String, Token>);

impl Binding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, label: &str) -> Option<&Token> {
        self.0.get(label)
    }

    pub fn insert(&mut self, label: impl Into<String>, token: Token) {
        self.0.insert(label.into(), token);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Token)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}

impl<S: Into<String>> FromIterator<(S, Token)> for Binding {
    fn from_iter<I: IntoIterator<Item = (S, Token)>>(iter: I) -> Self {
        Binding(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpn::TokenValue;

    fn tok(tag: &str) -> Token {
        Token::new("C", TokenValue::Atom(tag.into()))
    }

    #[test]
    fn equality_ignores_insertion_order() {
        let mut a = Marking::new();
        a.add("p", tok("x"));
        a.add("p", tok("y"));
        let mut b = Marking::new();
        b.add("p", tok("y"));
        b.add("p", tok("x"));
        assert_eq!(a, b);
        assert_eq!(a.tokens("p")[0], tok("x"));
    }

    #[test]
    fn remove_takes_oldest_equal_token_and_prunes_empty_places() {
        let mut m = Marking::new();
        m.add("p", tok("x"));
        m.add("p", tok("x"));
        assert!(m.remove("p", &tok("x")));
        assert_eq!(m.count("p"), 1);
        assert!(m.remove("p", &tok("x")));
        assert!(!m.remove("p", &tok("x")));
        assert_eq!(m, Marking::new());
    }
}
