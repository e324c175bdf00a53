use super::{ConvError, Label, Order};

/// Inserts `piece` as a whole at the label's insertion point of `base`.
///
/// A string of n characters has n + 1 insertion points, numbered from 1 (in
/// front of the first character). Points past n + 1 clamp to n + 1, so every
/// label is usable on every base.
pub fn insert_string(base: &str, piece: &str, label: Label) -> String {
    let chars: Vec<char> = base.chars().collect();
    let at = label.point().min(chars.len() + 1) - 1;
    let mut out = String::with_capacity(base.len() + piece.len());
    out.extend(&chars[..at]);
    match label.order() {
        Order::Forward => out.push_str(piece),
        Order::Reverse => out.extend(piece.chars().rev()),
    }
    out.extend(&chars[at..]);
    out
}

/// Folds the strings together left to right: the first string is the initial
/// temporary string and `labels[i]` places `strings[i + 1]` into it.
pub fn shuffle_strings<S: AsRef<str>>(strings: &[S], labels: &[Label]) -> Result<String, ConvError> {
    let Some((first, rest)) = strings.split_first() else {
        return Err(ConvError::ArityMismatch {
            strings: 0,
            labels: labels.len(),
        });
    };
    if labels.len() != rest.len() {
        return Err(ConvError::ArityMismatch {
            strings: strings.len(),
            labels: labels.len(),
        });
    }
    if strings.iter().any(|s| s.as_ref().is_empty()) {
        return Err(ConvError::EmptyString);
    }
    Ok(rest
        .iter()
        .zip(labels)
        .fold(first.as_ref().to_owned(), |temp, (piece, label)| {
            insert_string(&temp, piece.as_ref(), *label)
        }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convcore::parse_label;

    fn l(s: &str) -> Label {
        parse_label(s).unwrap()
    }

    #[test]
    fn worked_insertions() {
        assert_eq!(insert_string("3Mo&(E", "vX#", l("4F")), "3MovX#&(E");
        assert_eq!(insert_string("3Mo&(E", "vX#", l("4R")), "3Mo#Xv&(E");
        assert_eq!(insert_string("3MovX#&(E", "z%9CP", l("16R")), "3MovX#&(EPC9%z");
        assert_eq!(insert_string("abc", "x", l("1F")), "xabc");
        assert_eq!(insert_string("ab", "cd", l("99F")), "abcd");
        assert_eq!(insert_string("ab", "cd", l("3F")), "abcd");
        assert_eq!(insert_string("", "cd", l("7R")), "dc");
    }

    #[test]
    fn worked_shuffle() {
        let strings = ["3Mo&(E", "vX#", "z%9CP", "?G", "d$L", "Q"];
        let labels: Vec<_> = ["4F", "16R", "13F", "13R", "5F"].into_iter().map(l).collect();
        let out = shuffle_strings(&strings, &labels).unwrap();
        assert_eq!(out, "3MovQX#&(EPC9L$d?G%z");
        assert_eq!(out.chars().count(), 20);
        assert_eq!(shuffle_strings(&["abc"], &[]).unwrap(), "abc");
    }

    #[test]
    fn arity_and_empty_checks() {
        assert!(matches!(
            shuffle_strings(&["a", "b"], &[]),
            Err(ConvError::ArityMismatch { strings: 2, labels: 0 })
        ));
        assert!(matches!(
            shuffle_strings::<&str>(&[], &[]),
            Err(ConvError::ArityMismatch { .. })
        ));
        assert!(matches!(
            shuffle_strings(&["a", ""], &[l("1F")]),
            Err(ConvError::EmptyString)
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn label() -> impl Strategy<Value = Label> {
            (1usize..=30, any::<bool>())
                .prop_map(|(p, r)| Label::new(p, if r { Order::Reverse } else { Order::Forward }).unwrap())
        }

        proptest! {
            #[test]
            fn insert_is_total_and_length_additive(base in "[!-~]{0,12}", piece in "[!-~]{1,8}", label in label()) {
                let out = insert_string(&base, &piece, label);
                prop_assert_eq!(out.chars().count(), base.chars().count() + piece.chars().count());
            }

            #[test]
            fn base_survives_in_two_blocks(base in "[!-~]{0,12}", piece in "[!-~]{1,8}", label in label()) {
                let out = insert_string(&base, &piece, label);
                let at = label.point().min(base.len() + 1) - 1;
                prop_assert_eq!(&out[..at], &base[..at]);
                prop_assert_eq!(&out[at + piece.len()..], &base[at..]);
            }

            #[test]
            fn orders_coincide_only_for_single_chars(base in "[a-z]{0,6}", piece in "[!-~]{1,4}", point in 1usize..10) {
                let f = insert_string(&base, &piece, Label::new(point, Order::Forward).unwrap());
                let r = insert_string(&base, &piece, Label::new(point, Order::Reverse).unwrap());
                let palindrome = piece.chars().eq(piece.chars().rev());
                prop_assert_eq!(f == r, palindrome);
                if piece.len() == 1 {
                    prop_assert_eq!(f, r);
                }
            }

            #[test]
            fn shuffle_is_a_permutation(
                (strings, labels) in (1usize..=6).prop_flat_map(|n| (
                    proptest::collection::vec("[!-~]{1,8}", n),
                    proptest::collection::vec(label(), n - 1),
                ))
            ) {
                let out = shuffle_strings(&strings, &labels).unwrap();
                let mut got: Vec<char> = out.chars().collect();
                let mut want: Vec<char> = strings.concat().chars().collect();
                got.sort_unstable();
                want.sort_unstable();
                prop_assert_eq!(got, want);
            }
        }
    }
}
