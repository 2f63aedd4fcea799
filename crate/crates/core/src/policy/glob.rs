/// Matches `name` against a glob made of literal characters and `*`.
///
/// `*` matches any run of characters, including the empty one. There is no
/// escaping and no other metacharacter.
pub fn glob_match(pattern: &str, name: &str) -> bool {
    let mut parts = pattern.split('*');
    // split always yields at least one element
    let head = parts.next().unwrap_or("");
    let Some(mut rest) = name.strip_prefix(head) else {
        return false;
    };
    let tail: Vec<&str> = parts.collect();
    let Some((last, middle)) = tail.split_last() else {
        // no `*`: the pattern is a literal
        return rest.is_empty();
    };
    for piece in middle {
        match rest.find(piece) {
            Some(at) => rest = &rest[at + piece.len()..],
            None => return false,
        }
    }
    rest.ends_with(last)
}

#[cfg(test)]
mod tests {
    use super::glob_match;
    use proptest::prelude::*;

    #[test]
    fn literals_and_stars() {
        assert!(glob_match("drop_*", "drop_database"));
        assert!(glob_match("drop_*", "drop_"));
        assert!(!glob_match("drop_*", "undrop_database"));
        assert!(glob_match("*_database", "drop_database"));
        assert!(glob_match("*", ""));
        assert!(glob_match("a*b*c", "axxbyyc"));
        assert!(!glob_match("a*b*c", "axxcyyb"));
        assert!(glob_match("lookup", "lookup"));
        assert!(!glob_match("lookup", "lookups"));
        assert!(!glob_match("ab*ba", "aba"));
    }

    // Reference matcher by exhaustive recursion.
    fn naive(p: &[u8], s: &[u8]) -> bool {
        match p.split_first() {
            None => s.is_empty(),
            Some((b'*', rest)) => (0..=s.len()).any(|i| naive(rest, &s[i..])),
            Some((c, rest)) => s.first() == Some(c) && naive(rest, &s[1..]),
        }
    }

    proptest! {
        #[test]
        fn agrees_with_naive_matcher(p in "[ab*]{0,6}", s in "[ab]{0,8}") {
            prop_assert_eq!(glob_match(&p, &s), naive(p.as_bytes(), s.as_bytes()));
        }
    }
}
