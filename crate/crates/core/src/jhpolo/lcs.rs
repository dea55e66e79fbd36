//! Longest common substring via a suffix automaton.

use std::collections::HashMap;

struct State {
    len: usize,
    link: Option<usize>,
    next: HashMap<char, usize>,
}

struct SuffixAutomaton {
    states: Vec<State>,
    last: usize,
}

impl SuffixAutomaton {
    fn new(text: &[char]) -> Self {
        let mut sam = Self {
            states: vec![State {
                len: 0,
                link: None,
                next: HashMap::new(),
            }],
            last: 0,
        };
        for &c in text {
            sam.extend(c);
        }
        sam
    }

    fn extend(&mut self, c: char) {
        let cur = self.states.len();
        self.states.push(State {
            len: self.states[self.last].len + 1,
            link: None,
            next: HashMap::new(),
        });
        let mut p = Some(self.last);
        while let Some(pi) = p {
            if self.states[pi].next.contains_key(&c) {
                break;
            }
            self.states[pi].next.insert(c, cur);
            p = self.states[pi].link;
        }
        match p {
            None => self.states[cur].link = Some(0),
            Some(pi) => {
                let q = self.states[pi].next[&c];
                if self.states[pi].len + 1 == self.states[q].len {
                    self.states[cur].link = Some(q);
                } else {
                    let clone = self.states.len();
                    self.states.push(State {
                        len: self.states[pi].len + 1,
                        link: self.states[q].link,
                        next: self.states[q].next.clone(),
                    });
                    let mut p = Some(pi);
                    while let Some(pj) = p {
                        if self.states[pj].next.get(&c) != Some(&q) {
                            break;
                        }
                        self.states[pj].next.insert(c, clone);
                        p = self.states[pj].link;
                    }
                    self.states[q].link = Some(clone);
                    self.states[cur].link = Some(clone);
                }
            }
        }
        self.last = cur;
    }
}

/// Length in characters (Unicode scalar values) of the longest string that
/// occurs contiguously in both `a` and `b`.
pub fn lcs_len(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (text, pattern) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if text.is_empty() {
        return 0;
    }
    let sam = SuffixAutomaton::new(text);
    let (mut state, mut len, mut best) = (0usize, 0usize, 0usize);
    for c in pattern.iter() {
        while state != 0 && !sam.states[state].next.contains_key(c) {
            state = sam.states[state].link.expect("non-root state has a link");
            len = sam.states[state].len;
        }
        if let Some(&next) = sam.states[state].next.get(c) {
            state = next;
            len += 1;
        }
        best = best.max(len);
    }
    best
}
