//! Character-level string metrics: normalization, LCS length, Levenshtein
//! distance, and the LCS similarity used as the textual identity gate.
//!
//! Both distances use bit-parallel recurrences over the shorter string so
//! that exhaustive checks and long OCR blocks stay cheap.

use std::borrow::Cow;
use std::collections::HashMap;

/// Longest string (in chars) fed to the LCS; longer inputs are truncated.
pub const LCS_CAP: usize = 20_000;

/// Strip leading/trailing whitespace and lowercase. Borrows when the input is
/// already normalized.
pub fn normalize(s: &str) -> Cow<'_, str> {
    let t = s.trim();
    if t.is_ascii() {
        if t.bytes().any(|b| b.is_ascii_uppercase()) {
            Cow::Owned(t.to_ascii_lowercase())
        } else {
            Cow::Borrowed(t)
        }
    } else {
        let lower = t.to_lowercase();
        if lower == t {
            Cow::Borrowed(t)
        } else {
            Cow::Owned(lower)
        }
    }
}

// Per-character match bitmasks of a pattern of at most 64 chars.
struct SmallPeq {
    len: usize,
    entries: [(char, u64); 16],
    used: usize,
    overflow: Option<HashMap<char, u64>>,
}

impl SmallPeq {
    fn new(pattern: &str) -> Self {
        let mut p = SmallPeq { len: 0, entries: [('\0', 0); 16], used: 0, overflow: None };
        for (i, c) in pattern.chars().enumerate() {
            p.len = i + 1;
            let bit = 1u64 << i;
            if let Some(map) = p.overflow.as_mut() {
                *map.entry(c).or_default() |= bit;
                continue;
            }
            if let Some(e) = p.entries[..p.used].iter_mut().find(|e| e.0 == c) {
                e.1 |= bit;
            } else if p.used < p.entries.len() {
                p.entries[p.used] = (c, bit);
                p.used += 1;
            } else {
                let mut map: HashMap<char, u64> = p.entries.iter().copied().collect();
                map.insert(c, bit);
                p.overflow = Some(map);
            }
        }
        p
    }

    #[inline]
    fn get(&self, c: char) -> u64 {
        match &self.overflow {
            Some(map) => map.get(&c).copied().unwrap_or(0),
            None => self.entries[..self.used].iter().find(|e| e.0 == c).map_or(0, |e| e.1),
        }
    }
}

fn char_len(s: &str) -> usize {
    if s.is_ascii() {
        s.len()
    } else {
        s.chars().count()
    }
}

// Match bitmasks indexed by byte, for ASCII patterns of at most 64 bytes.
fn ascii_peq(p: &[u8]) -> [u64; 128] {
    let mut peq = [0u64; 128];
    for (i, &c) in p.iter().enumerate() {
        peq[c as usize] |= 1 << i;
    }
    peq
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn match16(pat: &[u8; 16], c: u8) -> u16 {
    use std::arch::x86_64::{_mm_cmpeq_epi8, _mm_loadu_si128, _mm_movemask_epi8, _mm_set1_epi8};
    // SAFETY: SSE2 is part of the x86_64 baseline and the load reads exactly 16 bytes
    unsafe { _mm_movemask_epi8(_mm_cmpeq_epi8(_mm_loadu_si128(pat.as_ptr().cast()), _mm_set1_epi8(c as i8))) as u16 }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline]
fn match16(pat: &[u8; 16], c: u8) -> u16 {
    pat.iter().enumerate().fold(0, |eq, (i, &b)| eq | u16::from(b == c) << i)
}

fn lcs_ascii(p: &[u8], t: &[u8]) -> usize {
    let m = p.len();
    let full = if m == 64 { !0 } else { (1u64 << m) - 1 };
    let mut v = full;
    let mut step = |eq: u64| v = (v.wrapping_add(v & eq) | (v & !eq)) & full;
    if m <= 16 {
        // compare each text byte against the whole pattern at once; the
        // padding never matches because inputs are ASCII
        let mut pat = [0xffu8; 16];
        pat[..m].copy_from_slice(p);
        for &c in t {
            step(u64::from(match16(&pat, c)));
        }
    } else {
        let peq = ascii_peq(p);
        for &c in t {
            step(peq[c as usize]);
        }
    }
    m - v.count_ones() as usize
}

/// Length of the longest common subsequence of `a` and `b`, by chars.
pub fn lcs_len(a: &str, b: &str) -> usize {
    if a.is_ascii() && b.is_ascii() {
        let (p, t) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        if p.is_empty() {
            return 0;
        }
        if p.len() <= 64 {
            return lcs_ascii(p.as_bytes(), t.as_bytes());
        }
    }
    let (p, t) = if char_len(a) <= char_len(b) { (a, b) } else { (b, a) };
    let m = char_len(p);
    if m == 0 {
        return 0;
    }
    if m <= 64 {
        let peq = SmallPeq::new(p);
        let full = if m == 64 { !0 } else { (1u64 << m) - 1 };
        let mut v = full;
        for c in t.chars() {
            let u = v & peq.get(c);
            v = (v.wrapping_add(u) | (v & !peq.get(c))) & full;
        }
        return m - v.count_ones() as usize;
    }
    lcs_multiword(p, t, m)
}

fn lcs_multiword(p: &str, t: &str, m: usize) -> usize {
    let words = m.div_ceil(64);
    let mut peq: HashMap<char, Vec<u64>> = HashMap::new();
    for (i, c) in p.chars().enumerate() {
        peq.entry(c).or_insert_with(|| vec![0; words])[i / 64] |= 1 << (i % 64);
    }
    let mut v = vec![!0u64; words];
    let tail = m % 64;
    if tail != 0 {
        v[words - 1] = (1u64 << tail) - 1;
    }
    let zero = vec![0u64; words];
    for c in t.chars() {
        let mask = peq.get(&c).unwrap_or(&zero);
        let mut carry = 0u64;
        for k in 0..words {
            let u = v[k] & mask[k];
            let (s1, c1) = v[k].overflowing_add(u);
            let (s2, c2) = s1.overflowing_add(carry);
            carry = (c1 | c2) as u64;
            v[k] = s2 | (v[k] & !mask[k]);
        }
        if tail != 0 {
            v[words - 1] &= (1u64 << tail) - 1;
        }
    }
    m - v.iter().map(|w| w.count_ones() as usize).sum::<usize>()
}

/// Levenshtein distance (unit insert, delete, substitute), by chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let (p, t) = if char_len(a) <= char_len(b) { (a, b) } else { (b, a) };
    let m = char_len(p);
    if m == 0 {
        return char_len(t);
    }
    if m > 64 {
        return levenshtein_dp(p, t);
    }
    if p.is_ascii() && t.is_ascii() {
        let peq = ascii_peq(p.as_bytes());
        return myers(m, t.bytes().map(|c| peq[c as usize]));
    }
    let peq = SmallPeq::new(p);
    debug_assert_eq!(peq.len, m);
    myers(m, t.chars().map(|c| peq.get(c)))
}

// Myers' bit-vector edit distance, fed one match mask per text char.
fn myers(m: usize, masks: impl Iterator<Item = u64>) -> usize {
    let last = 1u64 << (m - 1);
    let mut pv = !0u64;
    let mut mv = 0u64;
    let mut score = m;
    for eq in masks {
        let xv = eq | mv;
        let xh = ((eq & pv).wrapping_add(pv) ^ pv) | eq;
        let mut ph = mv | !(xh | pv);
        let mut mh = pv & xh;
        if ph & last != 0 {
            score += 1;
        } else if mh & last != 0 {
            score -= 1;
        }
        ph = (ph << 1) | 1;
        mh <<= 1;
        pv = mh | !(xv | ph);
        mv = ph & xv;
    }
    score
}

fn levenshtein_dp(p: &str, t: &str) -> usize {
    let p: Vec<char> = p.chars().collect();
    let mut row: Vec<usize> = (0..=p.len()).collect();
    for (j, c) in t.chars().enumerate() {
        let mut diag = row[0];
        row[0] = j + 1;
        for i in 1..=p.len() {
            let up = row[i];
            row[i] = (diag + (p[i - 1] != c) as usize).min(up + 1).min(row[i - 1] + 1);
            diag = up;
        }
    }
    row[p.len()]
}

// Lowercased, trimmed copy of a short ASCII string, or `None` when
// the input is longer than the buffer or not ASCII.
fn fold_short_ascii<'b>(s: &str, buf: &'b mut [u8; 64]) -> Option<&'b [u8]> {
    let bytes = s.as_bytes();
    if bytes.len() > buf.len() {
        return None;
    }
    let mut high = 0u8;
    for (d, &b) in buf.iter_mut().zip(bytes) {
        high |= b;
        *d = b | (u8::from(b.wrapping_sub(b'A') < 26) << 5);
    }
    if high >= 0x80 {
        return None;
    }
    // char::is_whitespace on ASCII also covers the vertical tab
    let ws = |b: &u8| b.is_ascii_whitespace() || *b == 0x0b;
    let folded = &buf[..bytes.len()];
    let start = folded.iter().position(|b| !ws(b)).unwrap_or(folded.len());
    let end = folded.iter().rposition(|b| !ws(b)).map_or(start, |i| i + 1);
    Some(&folded[start..end])
}

fn truncate_chars(s: &str, cap: usize) -> (&str, bool) {
    if s.len() <= cap {
        return (s, false);
    }
    match s.char_indices().nth(cap) {
        Some((i, _)) => (&s[..i], true),
        None => (s, false),
    }
}

/// LCS similarity after normalization, plus whether either side was
/// truncated to [`LCS_CAP`] chars.
pub fn text_sim_checked(a: &str, b: &str) -> (f64, bool) {
    let (mut ba, mut bb) = ([0u8; 64], [0u8; 64]);
    if let (Some(a), Some(b)) = (fold_short_ascii(a, &mut ba), fold_short_ascii(b, &mut bb)) {
        let (p, t) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        return match (p.len(), t.len()) {
            (_, 0) => (1.0, false),
            (0, _) => (0.0, false),
            (_, n) => (lcs_ascii(p, t) as f64 / n as f64, false),
        };
    }
    let (a, b) = (normalize(a), normalize(b));
    let (a, ta) = truncate_chars(&a, LCS_CAP);
    let (b, tb) = truncate_chars(&b, LCS_CAP);
    let denom = char_len(a).max(char_len(b));
    if denom == 0 {
        return (1.0, false);
    }
    (lcs_len(a, b) as f64 / denom as f64, ta || tb)
}

/// `|LCS(a~, b~)| / max(|a~|, |b~|)` on stripped, lowercased strings; 1 when
/// both are empty.
pub fn text_sim(a: &str, b: &str) -> f64 {
    text_sim_checked(a, b).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcs_dp(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
            }
        }
        t[a.len()][b.len()]
    }

    #[test]
    fn examples() {
        assert_eq!(text_sim("Hello ", "hello"), 1.0);
        assert_eq!(text_sim("", ""), 1.0);
        assert_eq!(text_sim("abcd", "abxd"), 0.75);
        assert_eq!(text_sim("  ", "a"), 0.0);
        assert_eq!(levenshtein("hello", "hallo"), 1);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
    }

    #[test]
    fn short_ascii_path_agrees_with_normalize() {
        let samples = ["", " ", "\x0bAb\t", "AB c", "ab C\n", "\r\n x Y z \x0c", "a\x0bb", "ABCDEFGHIJKLMNOPQRS"];
        for a in samples {
            for b in samples {
                let (na, nb) = (normalize(a), normalize(b));
                let denom = na.len().max(nb.len());
                let want = if denom == 0 { 1.0 } else { lcs_len(&na, &nb) as f64 / denom as f64 };
                assert_eq!(text_sim(a, b), want, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn normalize_borrows_clean_input() {
        assert!(matches!(normalize("abc def"), Cow::Borrowed("abc def")));
        assert_eq!(normalize("  ÉCOLE\n"), "école");
        assert!(matches!(normalize("école"), Cow::Borrowed(_)));
    }

    #[test]
    fn long_inputs_match_dp() {
        // pseudo-random strings over a small alphabet, lengths around the word size
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut gen = |n: usize| -> String {
            (0..n)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    ['a', 'b', 'c', 'é', ' '][(state % 5) as usize]
                })
                .collect()
        };
        for (m, n) in [(63, 70), (64, 64), (65, 200), (130, 129), (300, 17)] {
            let (a, b) = (gen(m), gen(n));
            assert_eq!(lcs_len(&a, &b), lcs_dp(&a, &b), "lcs {m}x{n}");
            assert_eq!(levenshtein(&a, &b), levenshtein_dp(&a, &b), "lev {m}x{n}");
        }
    }

    #[test]
    fn many_distinct_chars_use_overflow_table() {
        let a: String = ('a'..='z').collect();
        let b: String = ('a'..='z').rev().collect();
        assert_eq!(lcs_len(&a, &b), 1);
        assert_eq!(lcs_len(&a, &a), 26);
        assert_eq!(levenshtein(&a, &a), 0);
    }

    #[test]
    fn truncation_is_reported() {
        let long = "x".repeat(LCS_CAP + 5);
        let (s, truncated) = text_sim_checked(&long, &long);
        assert_eq!(s, 1.0);
        assert!(truncated);
        assert!(!text_sim_checked("a", "b").1);
    }
}
