//! Integer list syntax for hop counts: comma-separated items, each a number,
//! an inclusive range `a..=b` or a half-open range `a..b`.

pub fn parse_counts(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| format!("invalid count {s:?} in {text:?}"));
        if let Some((a, b)) = item.split_once("..=") {
            out.extend(num(a)?..=num(b)?);
        } else if let Some((a, b)) = item.split_once("..") {
            out.extend(num(a)?..num(b)?);
        } else {
            out.push(num(item)?);
        }
    }
    if out.is_empty() {
        return Err(format!("range {text:?} is empty"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_counts("4..=6").unwrap(), vec![4, 5, 6]);
        assert_eq!(parse_counts("4..6").unwrap(), vec![4, 5]);
        assert_eq!(parse_counts("5, 10,20").unwrap(), vec![5, 10, 20]);
        assert_eq!(parse_counts("2,4..=5").unwrap(), vec![2, 4, 5]);
    }

    #[test]
    fn empty_and_malformed() {
        assert!(parse_counts("").unwrap_err().contains("empty"));
        assert!(parse_counts("6..=4").unwrap_err().contains("empty"));
        assert!(parse_counts("4..4").is_err());
        assert!(parse_counts("x").is_err());
    }
}
