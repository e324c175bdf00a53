use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ConvError;

/// Character order of an inserted string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Order {
    Forward,
    Reverse,
}

impl Order {
    fn letter(self) -> char {
        match self {
            Order::Forward => 'F',
            Order::Reverse => 'R',
        }
    }
}

/// A shuffling label such as `4F` or `16R`: a 1-based insertion point and the
/// order in which the inserted string is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Label {
    point: usize,
    order: Order,
}

impl Label {
    pub fn new(point: usize, order: Order) -> Result<Self, ConvError> {
        if point == 0 {
            return Err(ConvError::MalformedLabel(format!(
                "insertion point must be at least 1 (got {point}{})",
                order.letter()
            )));
        }
        Ok(Label { point, order })
    }

    pub fn point(&self) -> usize {
        self.point
    }

    pub fn order(&self) -> Order {
        self.order
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.point, self.order.letter())
    }
}

impl FromStr for Label {
    type Err = ConvError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        parse_label(text)
    }
}

impl TryFrom<String> for Label {
    type Error = ConvError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        parse_label(&value)
    }
}

impl From<Label> for String {
    fn from(label: Label) -> Self {
        label.to_string()
    }
}

pub fn parse_label(text: &str) -> Result<Label, ConvError> {
    let malformed = |why: &str| ConvError::MalformedLabel(format!("{text:?}: {why}"));
    let Some(letter) = text.chars().last() else {
        return Err(malformed("empty label"));
    };
    let order = match letter {
        'F' => Order::Forward,
        'R' => Order::Reverse,
        _ => return Err(malformed("must end in 'F' or 'R'")),
    };
    let digits = &text[..text.len() - 1];
    if digits.is_empty() {
        return Err(malformed("missing insertion point"));
    }
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed("insertion point must be decimal digits"));
    }
    let point: usize = digits.parse().map_err(|_| malformed("insertion point out of range"))?;
    if point == 0 {
        return Err(malformed("insertion points start at 1"));
    }
    Ok(Label { point, order })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_worked_labels() {
        assert_eq!(parse_label("4F").unwrap(), Label::new(4, Order::Forward).unwrap());
        assert_eq!(parse_label("16R").unwrap(), Label::new(16, Order::Reverse).unwrap());
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "0F",
            "F4",
            "F",
            "4",
            "4X",
            "4FF",
            "4 F",
            "-4F",
            "+4F",
            "4f",
            "99999999999999999999999F",
        ] {
            assert!(
                matches!(parse_label(bad), Err(ConvError::MalformedLabel(_))),
                "{bad:?} should be rejected"
            );
        }
        assert!(Label::new(0, Order::Reverse).is_err());
    }

    #[test]
    fn serde_as_text() {
        let label = Label::new(13, Order::Reverse).unwrap();
        let json = serde_json::to_string(&label).unwrap();
        assert_eq!(json, "\"13R\"");
        assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), label);
        assert!(serde_json::from_str::<Label>("\"0R\"").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn format_parse_round_trip(point in 1usize..100_000, reverse: bool) {
                let order = if reverse { Order::Reverse } else { Order::Forward };
                let label = Label::new(point, order).unwrap();
                prop_assert_eq!(parse_label(&label.to_string()).unwrap(), label);
            }
        }
    }
}
