//! Seed lists on the command line: `7`, `1,4,9` or the inclusive range `1..10`.

use antifrag::{Error, Result};

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| Error::InvalidConfig(format!("bad seed list entry `{part}` in `{text}`"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo.trim().parse().map_err(|_| bad(part))?;
            let hi: u64 = hi.trim().parse().map_err(|_| bad(part))?;
            if hi < lo {
                return Err(bad(part));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_seeds("1..10").unwrap(), (1..=10).collect::<Vec<_>>());
        assert_eq!(parse_seeds("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4,7..8").unwrap(), vec![4, 7, 8]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("x").is_err());
    }
}
