//! Braid words over `N` strands: parsing, free reduction, induced
//! permutations and scheduling into simultaneous pairwise steps.
//!
//! Text grammar used by scenario files and the CLI:
//!
//! ```text
//! word  := item ('.' item)*
//! item  := token | '{' token ('.' token)* '}'
//! token := 's0' | 's' K | 'S' K        (K >= 1, uppercase = inverse)
//! ```
//!
//! Brace groups mark letters intended to run in the same braid step.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("malformed token `{token}` at letter {position}")]
    MalformedToken { token: String, position: usize },
    #[error("generator index {index} out of range for {strands} strands")]
    IndexOutOfRange { index: usize, strands: usize },
    #[error("nested brace group at byte {0}")]
    NestedBraces(usize),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
    #[error("empty braid word")]
    Empty,
    #[error("a braid needs at least 2 strands, got {0}")]
    TooFewStrands(usize),
    #[error("generators s{0} and s{1} cannot share a step (indices must differ by at least 2)")]
    RestrictionViolated(usize, usize),
}

/// A single crossing symbol. Index 0 is the identity generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Generator {
    index: usize,
    inverse: bool,
}

impl Generator {
    pub const IDENTITY: Generator = Generator { index: 0, inverse: false };

    /// `σ_k`.
    pub fn positive(index: usize) -> Self {
        Generator { index, inverse: false }
    }

    /// `σ̂_k`. The identity stays positive since it is its own inverse.
    pub fn inverse_of(index: usize) -> Self {
        Generator { index, inverse: index != 0 }
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn is_inverse(self) -> bool {
        self.inverse
    }

    pub fn is_identity(self) -> bool {
        self.index == 0
    }

    pub fn inverse(self) -> Self {
        if self.is_identity() {
            self
        } else {
            Generator { index: self.index, inverse: !self.inverse }
        }
    }

    /// True when both generators can run in the same step.
    pub fn commutes_with(self, other: Generator) -> bool {
        self.is_identity() || other.is_identity() || self.index.abs_diff(other.index) >= 2
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inverse {
            write!(f, "S{}", self.index)
        } else {
            write!(f, "s{}", self.index)
        }
    }
}

/// An ordered sequence of generators over a fixed strand count, with the
/// brace groups it was written with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BraidWord {
    strands: usize,
    letters: Vec<Generator>,
    groups: Vec<Range<usize>>,
}

impl BraidWord {
    pub fn new(strands: usize, letters: Vec<Generator>) -> Result<Self, AlgebraError> {
        Self::with_groups(strands, letters, Vec::new())
    }

    pub fn with_groups(
        strands: usize,
        letters: Vec<Generator>,
        groups: Vec<Range<usize>>,
    ) -> Result<Self, AlgebraError> {
        if strands < 2 {
            return Err(AlgebraError::TooFewStrands(strands));
        }
        if let Some(g) = letters.iter().find(|g| g.index >= strands) {
            return Err(AlgebraError::IndexOutOfRange { index: g.index, strands });
        }
        debug_assert!(groups.iter().all(|r| r.end <= letters.len() && r.start < r.end));
        Ok(BraidWord { strands, letters, groups })
    }

    pub fn identity(strands: usize) -> Result<Self, AlgebraError> {
        Self::new(strands, vec![Generator::IDENTITY])
    }

    pub fn strands(&self) -> usize {
        self.strands
    }

    pub fn letters(&self) -> &[Generator] {
        &self.letters
    }

    /// Letter ranges that were written inside braces.
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Reversed letters with flipped signs.
    pub fn inverse(&self) -> BraidWord {
        BraidWord {
            strands: self.strands,
            letters: self.letters.iter().rev().map(|g| g.inverse()).collect(),
            groups: Vec::new(),
        }
    }

    pub fn concat(&self, other: &BraidWord) -> BraidWord {
        assert_eq!(self.strands, other.strands, "strand counts differ");
        let offset = self.letters.len();
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        let mut groups = self.groups.clone();
        groups.extend(other.groups.iter().map(|r| r.start + offset..r.end + offset));
        BraidWord { strands: self.strands, letters, groups }
    }
}

impl fmt::Display for BraidWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut i = 0;
        let mut first = true;
        while i < self.letters.len() {
            if !first {
                f.write_str(".")?;
            }
            first = false;
            if let Some(g) = self.groups.iter().find(|r| r.start == i) {
                f.write_str("{")?;
                for (n, letter) in self.letters[g.clone()].iter().enumerate() {
                    if n > 0 {
                        f.write_str(".")?;
                    }
                    write!(f, "{letter}")?;
                }
                f.write_str("}")?;
                i = g.end;
            } else {
                write!(f, "{}", self.letters[i])?;
                i += 1;
            }
        }
        Ok(())
    }
}

fn parse_token(token: &str, position: usize, strands: usize) -> Result<Generator, AlgebraError> {
    let malformed = || AlgebraError::MalformedToken { token: token.to_string(), position };
    let mut chars = token.chars();
    let inverse = match chars.next() {
        Some('s') => false,
        Some('S') => true,
        _ => return Err(malformed()),
    };
    let digits = chars.as_str();
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    let index: usize = digits.parse().map_err(|_| malformed())?;
    if index == 0 && inverse {
        // σ_0 has no distinct inverse token.
        return Err(malformed());
    }
    if index >= strands {
        return Err(AlgebraError::IndexOutOfRange { index, strands });
    }
    Ok(if inverse { Generator::inverse_of(index) } else { Generator::positive(index) })
}

/// Parses the textual braid grammar. Brace annotations are preserved.
pub fn parse_braid_word(text: &str, strands: usize) -> Result<BraidWord, AlgebraError> {
    if strands < 2 {
        return Err(AlgebraError::TooFewStrands(strands));
    }
    let mut letters = Vec::new();
    let mut groups = Vec::new();
    // (first letter index, byte offset) of the currently open brace
    let mut open: Option<(usize, usize)> = None;
    let mut token = String::new();
    let mut expect_sep = false;

    let flush = |token: &mut String, letters: &mut Vec<Generator>| -> Result<(), AlgebraError> {
        let position = letters.len();
        if token.is_empty() {
            return Err(AlgebraError::MalformedToken { token: String::new(), position });
        }
        let g = parse_token(token, position, strands)?;
        letters.push(g);
        token.clear();
        Ok(())
    };

    for (byte, c) in text.char_indices() {
        match c {
            c if c.is_whitespace() => {
                if !token.is_empty() {
                    flush(&mut token, &mut letters)?;
                    expect_sep = true;
                }
            }
            '{' => {
                if open.is_some() {
                    return Err(AlgebraError::NestedBraces(byte));
                }
                if !token.is_empty() || expect_sep {
                    return Err(AlgebraError::MalformedToken { token: "{".into(), position: letters.len() });
                }
                open = Some((letters.len(), byte));
            }
            '}' => {
                let (start, _) = open.take().ok_or(AlgebraError::UnbalancedBrace(byte))?;
                if !token.is_empty() || !expect_sep {
                    flush(&mut token, &mut letters)?;
                }
                if start == letters.len() {
                    return Err(AlgebraError::MalformedToken { token: "{}".into(), position: start });
                }
                groups.push(start..letters.len());
                expect_sep = true;
            }
            '.' => {
                if !token.is_empty() {
                    flush(&mut token, &mut letters)?;
                } else if !expect_sep {
                    return Err(AlgebraError::MalformedToken { token: ".".into(), position: letters.len() });
                }
                expect_sep = false;
            }
            c => {
                if expect_sep {
                    return Err(AlgebraError::MalformedToken { token: c.to_string(), position: letters.len() });
                }
                token.push(c);
            }
        }
    }
    if let Some((_, byte)) = open {
        return Err(AlgebraError::UnbalancedBrace(byte));
    }
    if !token.is_empty() {
        flush(&mut token, &mut letters)?;
    } else if !expect_sep {
        // trailing separator or nothing at all
        if letters.is_empty() {
            return Err(AlgebraError::Empty);
        }
        return Err(AlgebraError::MalformedToken { token: ".".into(), position: letters.len() });
    }
    BraidWord::with_groups(strands, letters, groups)
}

/// Cancels adjacent inverse pairs and drops identity letters until nothing
/// changes. An empty result is represented by a single `σ_0`.
pub fn free_reduce(word: &BraidWord) -> BraidWord {
    let mut stack: Vec<Generator> = Vec::with_capacity(word.letters.len());
    for &g in &word.letters {
        if g.is_identity() {
            continue;
        }
        match stack.last() {
            Some(&top) if top == g.inverse() => {
                stack.pop();
            }
            _ => stack.push(g),
        }
    }
    if stack.is_empty() {
        stack.push(Generator::IDENTITY);
    }
    BraidWord { strands: word.strands, letters: stack, groups: Vec::new() }
}

/// A bijection on `{0, .., N-1}` stored as `image[source] = target`.
///
/// For braids, sources are the agents' starting rows and targets the rows
/// they occupy after the word has been executed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { image: (0..n).collect() }
    }

    pub fn from_image(image: Vec<usize>) -> Option<Self> {
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || std::mem::replace(&mut seen[i], true) {
                return None;
            }
        }
        Some(Permutation { image })
    }

    /// Swaps positions `a` and `b`.
    pub fn transposition(n: usize, a: usize, b: usize) -> Self {
        let mut p = Self::identity(n);
        p.image.swap(a, b);
        p
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Permutation) -> Permutation {
        assert_eq!(self.len(), next.len());
        Permutation { image: self.image.iter().map(|&i| next.image[i]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.image.len()];
        for (src, &dst) in self.image.iter().enumerate() {
            inv[dst] = src;
        }
        Permutation { image: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Row-swap action of one step (or letter) applied to a row assignment:
/// `σ_k` exchanges whoever sits on rows `k-1` and `k` (zero-based).
fn swap_rows(rows_of_agent: &mut [usize], index: usize) {
    let (lo, hi) = (index - 1, index);
    for row in rows_of_agent.iter_mut() {
        if *row == lo {
            *row = hi;
        } else if *row == hi {
            *row = lo;
        }
    }
}

/// Composes the transposition of every non-identity letter, left to right.
/// Signs are ignored.
pub fn induced_permutation(word: &BraidWord) -> Permutation {
    let mut rows: Vec<usize> = (0..word.strands).collect();
    for g in word.letters.iter().filter(|g| !g.is_identity()) {
        swap_rows(&mut rows, g.index);
    }
    Permutation { image: rows }
}

/// A set of generators executed simultaneously. Non-identity members have
/// pairwise index gaps of at least two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BraidStep {
    generators: Vec<Generator>,
}

impl BraidStep {
    pub fn new(generators: Vec<Generator>) -> Result<Self, AlgebraError> {
        let active: Vec<Generator> = generators.iter().copied().filter(|g| !g.is_identity()).collect();
        for (n, a) in active.iter().enumerate() {
            for b in &active[n + 1..] {
                if !a.commutes_with(*b) {
                    return Err(AlgebraError::RestrictionViolated(a.index, b.index));
                }
            }
        }
        Ok(BraidStep { generators })
    }

    /// The "move straight ahead" step.
    pub fn identity() -> Self {
        BraidStep { generators: vec![Generator::IDENTITY] }
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    /// Non-identity members, in written order.
    pub fn crossings(&self) -> impl Iterator<Item = Generator> + '_ {
        self.generators.iter().copied().filter(|g| !g.is_identity())
    }

    pub fn is_identity(&self) -> bool {
        self.generators.iter().all(|g| g.is_identity())
    }

    /// The crossing (if any) that moves the agent currently on `row`.
    pub fn crossing_at_row(&self, row: usize) -> Option<Generator> {
        self.crossings().find(|g| g.index == row + 1 || g.index == row)
    }

    /// Row permutation this step applies.
    pub fn permutation(&self, strands: usize) -> Permutation {
        let mut rows: Vec<usize> = (0..strands).collect();
        for g in self.crossings() {
            swap_rows(&mut rows, g.index);
        }
        Permutation { image: rows }
    }
}

impl fmt::Display for BraidStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, g) in self.generators.iter().enumerate() {
            if n > 0 {
                f.write_str(".")?;
            }
            write!(f, "{g}")?;
        }
        f.write_str("}")
    }
}

/// Partitions a word, in order, into steps obeying the pairwise-interaction
/// restriction.
///
/// With `honor_braces`, each brace group becomes exactly one step (and is
/// validated) and every unbraced letter gets a step of its own. Without it,
/// a greedy packer appends letters to the open step until one conflicts.
/// Unbraced `σ_0` letters always occupy a whole step.
pub fn schedule_steps(word: &BraidWord, honor_braces: bool) -> Result<Vec<BraidStep>, AlgebraError> {
    let letters = &word.letters;
    let mut steps = Vec::new();
    if honor_braces {
        let mut i = 0;
        while i < letters.len() {
            if let Some(group) = word.groups.iter().find(|r| r.start == i) {
                let members = letters[group.clone()].to_vec();
                let step = BraidStep::new(members)?;
                steps.push(if step.is_identity() { BraidStep::identity() } else {
                    BraidStep { generators: step.crossings().collect() }
                });
                i = group.end;
            } else {
                steps.push(BraidStep { generators: vec![letters[i]] });
                i += 1;
            }
        }
        return Ok(steps);
    }

    let mut open: Vec<Generator> = Vec::new();
    for &g in letters {
        if g.is_identity() {
            if !open.is_empty() {
                steps.push(BraidStep { generators: std::mem::take(&mut open) });
            }
            steps.push(BraidStep::identity());
            continue;
        }
        if open.iter().any(|o| !o.commutes_with(g)) {
            steps.push(BraidStep { generators: std::mem::take(&mut open) });
        }
        open.push(g);
    }
    if !open.is_empty() {
        steps.push(BraidStep { generators: open });
    }
    Ok(steps)
}

/// Concatenates the steps back into a flat word.
pub fn flatten_steps(strands: usize, steps: &[BraidStep]) -> Result<BraidWord, AlgebraError> {
    BraidWord::new(strands, steps.iter().flat_map(|s| s.generators.iter().copied()).collect())
}
